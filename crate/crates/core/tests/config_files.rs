//! The shipped configuration and data files stay in sync with the fixture.

use std::fs::File;
use std::path::Path;

use tisdyn::config::RunConfig;
use tisdyn::fixture::demo_observed;
use tisdyn::io::read_observed;
use tisdyn::run::ModelInputs;

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

#[test]
fn demo_toml_spells_out_the_built_in_demo() {
    let parsed = RunConfig::load(&configs().join("demo.toml")).unwrap();
    assert_eq!(parsed, RunConfig::demo());
    let resolved = parsed.resolve(configs()).unwrap();
    let demo = ModelInputs::demo();
    assert_eq!(resolved.inputs.timeline, demo.timeline);
    assert_eq!(resolved.inputs.initial, demo.initial);
    assert_eq!(resolved.inputs.factors, demo.factors);
}

#[test]
fn observed_demo_csv_is_the_fixture_history() {
    let inputs = ModelInputs::demo();
    let file = File::open(configs().join("observed_demo.csv")).unwrap();
    let read = read_observed(file, &inputs.roster, &inputs.catalog).unwrap();
    let fixture = demo_observed();
    assert_eq!((read.first_year(), read.last_year()), (fixture.first_year(), fixture.last_year()));
    for year in read.first_year()..=read.last_year() {
        for i in 0..inputs.roster.len() {
            for d in 0..inputs.catalog.len() {
                let (a, b) = (read.get(year, i, d).unwrap(), fixture.get(year, i, d).unwrap());
                assert!((a - b).abs() <= 1e-8 * b.abs(), "{year} {i} {d}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn unknown_keys_are_reported_with_suggestions() {
    let text = std::fs::read_to_string(configs().join("demo.toml")).unwrap().replace("[market]", "[markt]");
    let err = RunConfig::from_toml_str(&text).unwrap_err();
    let issue = err.issues().iter().find(|i| i.key == "markt").expect("typo reported");
    assert!(issue.message.contains("market"));
}
