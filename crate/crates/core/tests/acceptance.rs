//! Acceptance suite: one PASS/FAIL line per headline criterion.
//!
//! Exits 0 even when a criterion fails so the workspace test run stays
//! usable; set `TISDYN_ACCEPTANCE_STRICT=1` to turn failures into a
//! non-zero exit.

use std::fs;
use std::hint::black_box;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use tisdyn::calibration::{fit_all, FitMethod, FitOptions, ObservedSeries, WindowSpec};
use tisdyn::dynamics::{simulate, NoHook, ParameterBlock, ParameterTimeline, SimulationConfig, SystemLayout, SystemState};
use tisdyn::modes::{classify_pair, Mode, ModeLabel};
use tisdyn::pipeline::Manifest;
use tisdyn::run::{run_scenario, run_scenarios, ModelInputs, ScenarioRun};
use tisdyn::scenario::{
    detect_structural_decline, DriverMultipliers, ExternalityScale, ScenarioSpec, TransitionParams,
};
use tisdyn::technology::{Roster, Technology};
use tisdyn::tis::{DimensionCatalog, Side, SubDimension};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Best of `reps` timings, so scheduler noise does not masquerade as cost.
fn best_time(reps: usize, mut f: impl FnMut()) -> Duration {
    (0..reps)
        .map(|_| {
            let t0 = Instant::now();
            f();
            t0.elapsed()
        })
        .min()
        .unwrap()
}

// Integrator

fn logistic_run(dt: f64) -> Vec<(i32, f64)> {
    let mut p = ParameterBlock::zeros(1, 1);
    p.set_growth(0, 0, 1.0);
    p.set_decline(0, 0, 1.0);
    let cfg = SimulationConfig { t_start: 1985, t_end: 2070, dt, ..SimulationConfig::default() };
    let init = SystemState::from_levels(1985.0, 1, vec![0.01]);
    let tr = simulate(&cfg, &SystemLayout::new(1, 1, None), &ParameterTimeline::constant(1985, p), &init, &mut NoHook)
        .expect("logistic run");
    tr.annual().into_iter().map(|(y, s)| (y, s.level(0, 0))).collect()
}

fn logistic_exact(t: f64) -> f64 {
    let x0 = 0.01;
    1.0 / (1.0 + (1.0 / x0 - 1.0) * (-t).exp())
}

fn max_rel_error(samples: &[(i32, f64)]) -> f64 {
    samples
        .iter()
        .map(|&(y, x)| {
            let exact = logistic_exact((y - 1985) as f64);
            (x - exact).abs() / exact
        })
        .fold(0.0, f64::max)
}

fn integrator() -> Verdict {
    let coarse = max_rel_error(&logistic_run(0.125));
    let fine = max_rel_error(&logistic_run(0.0625));
    let ratio = coarse / fine;
    let time = best_time(50, || {
        black_box(logistic_run(0.125));
    });
    let pass = coarse <= 0.01 && (1.5..=2.5).contains(&ratio) && time < Duration::from_millis(1);
    verdict(
        pass,
        format!(
            "max relative error {coarse:.4} (limit 0.01), halving-dt ratio {ratio:.2} (limit [1.5, 2.5]), {:.3} ms (limit 1 ms)",
            ms(time)
        ),
    )
}

// Mode classifier

fn expected_mode(sij: i32, sji: i32) -> ModeLabel {
    let (i, j) = (Technology::Incumbent, Technology::Emerging);
    let label = |mode, beneficiary, victim| ModeLabel { mode, beneficiary, victim };
    match (sij, sji) {
        (1, 1) => label(Mode::Competition, None, None),
        (-1, -1) => label(Mode::Symbiosis, None, None),
        (0, 0) => label(Mode::Neutralism, None, None),
        (-1, 1) => label(Mode::Parasitism, Some(i), Some(j)),
        (1, -1) => label(Mode::Parasitism, Some(j), Some(i)),
        (-1, 0) => label(Mode::Commensalism, Some(i), None),
        (0, -1) => label(Mode::Commensalism, Some(j), None),
        (1, 0) => label(Mode::Amensalism, None, Some(i)),
        (0, 1) => label(Mode::Amensalism, None, Some(j)),
        _ => unreachable!(),
    }
}

fn mode_classifier() -> Verdict {
    let mut wrong = Vec::new();
    for sij in [-1, 0, 1] {
        for sji in [-1, 0, 1] {
            let got = classify_pair(0.3 * sij as f64, 0.7 * sji as f64, Technology::Incumbent, Technology::Emerging, 1e-9);
            if got != expected_mode(sij, sji) {
                wrong.push(format!("({sij:+},{sji:+}) -> {}", got.mode));
            }
        }
    }
    verdict(wrong.is_empty(), if wrong.is_empty() { "9/9 sign pairs".to_string() } else { wrong.join(", ") })
}

// Calibration round trip

const RT_START: i32 = 2000;
const RT_END: i32 = 2015;

/// Every coefficient sits at least 0.06 from zero and all three
/// technologies stay comparable in size, so each term stays identifiable
/// at 1% noise.
fn round_trip_block() -> ParameterBlock {
    let mut p = ParameterBlock::zeros(3, 2);
    let a = [[0.46, 0.68, 0.76], [0.63, 0.62, 0.61]];
    let b = [[0.21, 0.18, 0.11], [0.24, 0.08, 0.21]];
    // (i, j, c_ij) per sub-dimension
    let c = [
        [(0, 1, 0.06), (0, 2, -0.15), (1, 0, 0.06), (1, 2, -0.17), (2, 0, -0.19), (2, 1, 0.12)],
        [(0, 1, 0.08), (0, 2, -0.20), (1, 0, 0.17), (1, 2, 0.20), (2, 0, 0.13), (2, 1, 0.15)],
    ];
    for d in 0..2 {
        for i in 0..3 {
            p.set_growth(i, d, a[d][i]);
            p.set_decline(i, d, b[d][i]);
        }
        for &(i, j, v) in &c[d] {
            p.set_interaction(i, j, d, v);
        }
    }
    p
}

fn round_trip_series() -> ObservedSeries {
    let roster = Roster::standard();
    let catalog = DimensionCatalog::new(vec![SubDimension::Publications, SubDimension::Patents], &[]).unwrap();
    let cfg = SimulationConfig { t_start: RT_START, t_end: RT_END, ..SimulationConfig::default() };
    let init = SystemState::from_levels(RT_START as f64, 2, vec![1.63, 1.02, 0.59, 1.86, 0.56, 0.60]);
    let tr = simulate(
        &cfg,
        &SystemLayout::new(3, 2, None),
        &ParameterTimeline::constant(RT_START, round_trip_block()),
        &init,
        &mut NoHook,
    )
    .expect("round-trip generator");
    ObservedSeries::from_trajectory(&tr, roster, catalog)
}

/// (true, fitted) for every coefficient of a block.
fn coefficient_pairs(truth: &ParameterBlock, fit: &ParameterBlock) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for d in 0..truth.n_sub() {
        for i in 0..truth.n_tech() {
            out.push((truth.growth(i, d), fit.growth(i, d)));
            out.push((truth.decline(i, d), fit.decline(i, d)));
            for j in (0..truth.n_tech()).filter(|&j| j != i) {
                out.push((truth.interaction(i, j, d), fit.interaction(i, j, d)));
            }
        }
    }
    out
}

fn calibration_round_trip() -> Verdict {
    let t0 = Instant::now();
    let truth = round_trip_block();
    let series = round_trip_series();
    let opts = FitOptions { method: FitMethod::Refined, ..FitOptions::default() };

    let fit = fit_all(&series, &WindowSpec::default(), &opts).expect("noise-free fit");
    let mut worst: f64 = 0.0;
    let mut sign_errors = 0;
    for w in &fit.windows {
        for (t, f) in coefficient_pairs(&truth, &w.block) {
            if t.abs() >= 1e-8 {
                worst = worst.max((f - t).abs() / t.abs());
                if f.signum() != t.signum() {
                    sign_errors += 1;
                }
            }
        }
    }

    let whole = WindowSpec { length: (RT_END - RT_START) as u32, stride: 1 };
    let noise = Normal::new(0.0, 0.01).unwrap();
    let (mut correct, mut total) = (0usize, 0usize);
    for trial in 0..200u64 {
        let mut rng = StdRng::seed_from_u64(trial);
        let mut noisy = series.clone();
        for year in RT_START..=RT_END {
            for i in 0..3 {
                for d in 0..2 {
                    let v = series.get(year, i, d).unwrap();
                    noisy.set(year, i, d, Some(v * (1.0 + noise.sample(&mut rng)))).unwrap();
                }
            }
        }
        if let Ok(f) = fit_all(&noisy, &whole, &opts) {
            for (t, e) in coefficient_pairs(&truth, &f.windows[0].block) {
                total += 1;
                correct += usize::from(t.signum() == e.signum());
            }
        } else {
            total += coefficient_pairs(&truth, &truth).len();
        }
    }
    let recovery = correct as f64 / total as f64;
    let elapsed = t0.elapsed();
    let pass = worst <= 0.05 && sign_errors == 0 && recovery >= 0.95 && elapsed < Duration::from_secs(5);
    verdict(
        pass,
        format!(
            "{} windows, worst relative error {worst:.2e} (limit 0.05), {sign_errors} sign errors; \
             noisy sign recovery {:.1}% (limit 95%); {:.0} ms (limit 5000 ms)",
            fit.windows.len(),
            recovery * 100.0,
            ms(elapsed)
        ),
    )
}

// Scenario invariants

fn niche_incumbent_is_two_technology_run(inputs: &ModelInputs) -> Result<(), String> {
    let run = run_scenario(inputs, &ScenarioSpec::NicheIncumbent).map_err(|e| e.to_string())?;
    let h = inputs.roster.index_of(Technology::Hybrid).unwrap();
    if !run.trajectory.states().iter().all(|s| (0..s.n_sub()).all(|d| s.level(h, d) == 0.0)) {
        return Err("hybrid levels are not identically zero".into());
    }
    let keep: Vec<usize> = (0..inputs.roster.len()).filter(|&i| i != h).collect();
    let timeline = inputs.timeline.map(|_, b| b.restrict(&keep));
    let layout = SystemLayout::new(keep.len(), inputs.catalog.len(), inputs.catalog.share_index());
    let pair = simulate(&inputs.simulation, &layout, &timeline, &inputs.initial.restrict(&keep), &mut NoHook)
        .map_err(|e| e.to_string())?;
    if run.trajectory.restrict(&keep) != pair {
        return Err("differs from the hybrid-free two-technology run".into());
    }
    Ok(())
}

fn predator_prey_modes(inputs: &ModelInputs) -> Result<(), String> {
    use Technology::{Emerging as E, Hybrid as H, Incumbent as I};
    let run = run_scenario(inputs, &ScenarioSpec::PredatorPrey).map_err(|e| e.to_string())?;
    let idx = |t| inputs.roster.index_of(t).unwrap();
    let expected = [
        (E, I, ModeLabel { mode: Mode::Competition, beneficiary: None, victim: None }),
        (H, I, ModeLabel { mode: Mode::Parasitism, beneficiary: Some(H), victim: Some(I) }),
        (E, H, ModeLabel { mode: Mode::Parasitism, beneficiary: Some(E), victim: Some(H) }),
    ];
    for (start, block) in run.timeline.segments() {
        for d in 0..inputs.catalog.len() {
            for &(x, y, want) in &expected {
                let got = classify_pair(block.interaction(idx(x), idx(y), d), block.interaction(idx(y), idx(x), d), x, y, 0.0);
                if got != want {
                    return Err(format!("{x:?}-{y:?} is {} on sub-dimension {d} from {start}", got.mode));
                }
            }
        }
    }
    Ok(())
}

fn transition_without_firing_is_baseline(inputs: &ModelInputs) -> Result<(), String> {
    // The latest demo regime keeps the emerging share rising, so the
    // detector never fires.
    let mut quiet = inputs.clone();
    let (_, last) = quiet.timeline.segments().last().cloned().unwrap();
    quiet.timeline = ParameterTimeline::constant(quiet.simulation.t_start, last);
    let base = run_scenario(&quiet, &ScenarioSpec::Baseline).map_err(|e| e.to_string())?;
    let run = run_scenario(&quiet, &ScenarioSpec::SociotechnicalTransition(TransitionParams::default()))
        .map_err(|e| e.to_string())?;
    if !run.interventions.is_empty() {
        return Err(format!("detector fired: {:?}", run.interventions));
    }
    if run.trajectory != base.trajectory || run.emissions != base.emissions {
        return Err("differs from baseline".into());
    }
    Ok(())
}

fn detector_cases() -> Result<(), String> {
    if !detect_structural_decline(&[0.30, 0.29, 0.28, 0.27]) {
        return Err("does not fire on a mean change of -0.01".into());
    }
    if detect_structural_decline(&[0.30, 0.32, 0.31, 0.30]) {
        return Err("fires on a zero mean change".into());
    }
    Ok(())
}

fn scenario_invariants() -> Verdict {
    let inputs = ModelInputs::demo();
    let checks = [
        ("a", niche_incumbent_is_two_technology_run(&inputs)),
        ("b", predator_prey_modes(&inputs)),
        ("c", transition_without_firing_is_baseline(&inputs)),
        ("d", detector_cases()),
    ];
    let failures: Vec<String> = checks.iter().filter_map(|(k, r)| r.as_ref().err().map(|e| format!("({k}) {e}"))).collect();
    verdict(failures.is_empty(), if failures.is_empty() { "(a)-(d) hold".to_string() } else { failures.join("; ") })
}

// Conservation

fn conservation_specs() -> Vec<ScenarioSpec> {
    let mut specs = ScenarioSpec::all_defaults();
    specs.extend([
        ScenarioSpec::LandscapePressure(DriverMultipliers { oil_price: 2.5, tax_registration_fees: 1.0, gdp_growth: 0.5, wtw_costs: 2.0 }),
        ScenarioSpec::SociotechnicalTransition(TransitionParams { reinforce_factor: 1.5, weaken_factor: 0.5, duration_years: 5, ..TransitionParams::default() }),
        ScenarioSpec::NicheFavoured(ExternalityScale { toward: 2.0, away: 0.2 }),
    ]);
    specs
}

fn conservation() -> Verdict {
    let inputs = ModelInputs::demo();
    let share = inputs.catalog.share_index().unwrap();
    let specs = conservation_specs();
    let mut worst: f64 = 0.0;
    let mut decreasing = Vec::new();
    let mut steps = 0;
    for (spec, run) in specs.iter().zip(run_scenarios(&inputs, &specs)) {
        let run = run.expect("scenario runs");
        for s in run.trajectory.states() {
            let total: f64 = run.active_techs().iter().map(|&i| s.level(i, share)).sum();
            worst = worst.max((total - 1.0).abs());
            steps += 1;
        }
        if !run.emissions.total_cumulative.windows(2).all(|w| w[1] >= w[0]) {
            decreasing.push(spec.name());
        }
    }
    verdict(
        worst <= 1e-9 && decreasing.is_empty(),
        format!(
            "{} runs, {steps} steps, worst share-sum deviation {worst:.1e} (limit 1e-9), cumulative GHG decreasing in {:?}",
            specs.len(),
            decreasing
        ),
    )
}

// Fixture regression

fn fixture_regression() -> Verdict {
    let inputs = ModelInputs::demo();
    let runs: Vec<ScenarioRun> =
        run_scenarios(&inputs, &ScenarioSpec::all_defaults()).into_iter().map(|r| r.expect("demo runs")).collect();
    let get = |n: &str| runs.iter().find(|r| r.spec.name() == n).unwrap();
    let ghg = |r: &ScenarioRun| r.emissions.final_cumulative_total();
    let highest = runs.iter().max_by(|a, b| ghg(a).total_cmp(&ghg(b))).unwrap().spec.name();
    let lowest = runs.iter().min_by(|a, b| ghg(a).total_cmp(&ghg(b))).unwrap().spec.name();

    let e = inputs.roster.index_of(Technology::Emerging).unwrap();
    let tech_side = inputs.catalog.side_members(Side::Technology);
    let (base, niche) = (get("baseline"), get("niche-incumbent"));
    let lower = base
        .trajectory
        .annual()
        .into_iter()
        .zip(niche.trajectory.annual())
        .skip(1)
        .all(|((_, b), (_, n))| tech_side.iter().all(|&d| n.level(e, d) < b.level(e, d)));

    let share = inputs.catalog.share_index().unwrap();
    let crossing = |r: &ScenarioRun| r.trajectory.annual().into_iter().find(|(_, s)| s.level(0, share) < 0.5).map(|(y, _)| y);
    let (cb, cn) = (crossing(base), crossing(niche));
    let later = match (cb, cn) {
        (Some(b), Some(n)) => n > b,
        (Some(_), None) => true,
        _ => false,
    };
    let pass = highest == "hybrid-incumbent" && lowest == "sociotechnical-transition" && lower && later;
    verdict(
        pass,
        format!(
            "highest GHG {highest}, lowest {lowest}; emerging tech side lower without hybrids: {lower}; \
             incumbent below 50% in {cb:?} (baseline) vs {cn:?} (niche-incumbent)"
        ),
    )
}

// Performance

fn perturbed_timeline(base: &ParameterTimeline, seed: u64) -> ParameterTimeline {
    let mut rng = StdRng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.05).unwrap();
    base.map(|_, b| {
        let mut out = b.clone();
        for i in 0..b.n_tech() {
            for d in 0..b.n_sub() {
                out.set_growth(i, d, b.growth(i, d) * (1.0 + noise.sample(&mut rng)));
            }
        }
        out
    })
}

fn performance() -> Verdict {
    let inputs = ModelInputs::demo();
    let single = best_time(20, || {
        black_box(run_scenario(&inputs, &ScenarioSpec::Baseline).unwrap());
    });
    let layout = SystemLayout::new(inputs.roster.len(), inputs.catalog.len(), inputs.catalog.share_index());
    let t0 = Instant::now();
    let ok = (0..10_000u64)
        .into_par_iter()
        .filter(|&k| {
            let tl = perturbed_timeline(&inputs.timeline, k);
            simulate(&inputs.simulation, &layout, &tl, &inputs.initial, &mut NoHook).is_ok()
        })
        .count();
    let sweep = t0.elapsed();
    verdict(
        single < Duration::from_millis(10) && sweep < Duration::from_secs(10),
        format!(
            "one run {:.2} ms (limit 10 ms, {} steps); 10000-run sweep {:.2} s (limit 10 s, {ok} completed, {} threads)",
            ms(single),
            inputs.simulation.steps(),
            sweep.as_secs_f64(),
            rayon::current_num_threads()
        ),
    )
}

// Determinism

fn determinism() -> Verdict {
    let tmp = tempfile::TempDir::new().unwrap();
    let config = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/demo.toml");
    let mut digests = Vec::new();
    for k in 0..3 {
        let out = tmp.path().join(format!("run{k}"));
        let status = Command::new(env!("CARGO_BIN_EXE_tisdyn"))
            .args(["scenarios", "--config", config, "--out"])
            .arg(&out)
            .output()
            .expect("binary runs");
        if !status.status.success() {
            return verdict(false, format!("scenarios failed: {}", String::from_utf8_lossy(&status.stderr)));
        }
        let manifest = Manifest::read(&out).unwrap();
        let text = fs::read_to_string(out.join("comparison.csv")).unwrap();
        digests.push((manifest.outputs, text));
    }
    let same = digests.windows(2).all(|w| w[0] == w[1]);
    verdict(same, format!("3 runs of `scenarios`, {} output digests each, identical: {same}", digests[0].0.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("integrator correctness", integrator),
        ("mode classifier exactness", mode_classifier),
        ("calibration round trip", calibration_round_trip),
        ("scenario invariants", scenario_invariants),
        ("conservation", conservation),
        ("fixture regression", fixture_regression),
        ("performance", performance),
        ("end-to-end determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let v = check();
        failed += usize::from(!v.pass);
        println!("{} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("{}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 && std::env::var_os("TISDYN_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
