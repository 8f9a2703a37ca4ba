//! Numerical laboratory for the parameter-exclusion scheme of the circle maps
//! `f_{a,L}(θ) = θ + a + L·Φ(θ)`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod map;
pub mod orbit;
pub mod returns;
pub mod conditions;
pub mod exclusion;
pub mod lemmas;
pub mod config;
pub mod report;

pub use conditions::{ConditionKind, ConditionReport};
pub use config::{parse_config, ConfigError, RunConfig};
pub use constants::{build_profile, ConstantsProfile, ProfileSpec};
pub use exclusion::{run_exclusion_bisect, run_exclusion_mc, sweep_l, ProfileRule, SweepRecord};
pub use lemmas::{verify, LemmaId, LemmaParams, LemmaReport};
pub use map::{DriveFunction, MapFamily, Model};
pub use orbit::{critical_orbit, iterate_orbit, OrbitError, OrbitTrace};
pub use returns::{decompose, CriticalOrbits, Decomposition, ReturnMode};
