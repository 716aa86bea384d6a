//! Data-driven attack identification for LTI plants with corrupted sensors.
//!
//! Predictors are learned per sensor subset from one attack-free trajectory
//! and then used to identify which sensors are trustworthy under injection,
//! delay and replay attacks.

pub mod attacks;
pub mod datamat;
pub mod ddmodel;
pub mod error;
pub mod identify;
pub mod numkit;
pub mod plant;

pub use attacks::{apply_attack, enumerate_subsets, AttackBudget, AttackScenario, InjectionSignal, ScenarioFile, SensorSubset};
pub use datamat::{generate_pe_input, is_persistently_exciting, Trajectory};
pub use ddmodel::{learn_model, DataDrivenModel};
pub use error::{Error, Result};
pub use identify::{identify_delay, identify_replay, injection_bootstrap, IdentificationVerdict, InjectionIdentifier};
pub use numkit::{Matrix, Tolerance, Vector};
pub use plant::{discretize_zoh, msd_discrete, simulate, StateSpace};
