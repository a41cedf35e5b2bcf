//! Coupled Lotka-Volterra simulation of interacting technological innovation
//! systems: incumbent, hybrid and emerging technologies evolve over sixteen
//! indicator sub-dimensions, their pairwise relationship modes are classified
//! over time, and policy scenarios are compared by market trajectories and
//! cumulative well-to-wheel emissions.

pub mod calibration;
pub mod config;
pub mod dynamics;
pub mod emissions;
pub mod fixture;
pub mod io;
pub mod modes;
pub mod pipeline;
pub mod report;
pub mod run;
pub mod scenario;
pub mod technology;
pub mod tis;

pub use dynamics::{
    derivative, simulate, step_euler, ParameterBlock, ParameterTimeline, SimulationConfig, SystemLayout, SystemState,
    Trajectory,
};
pub use modes::{classify_pair, EpsilonPolicy, Mode, ModeLabel};
pub use technology::{Roster, Technology, TechnologyId};
pub use tis::{DimensionCatalog, Side, SubDimension};
