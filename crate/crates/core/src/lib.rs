//! Entropy-maximizing CNN architecture design.
//!
//! A network's structure (stage widths and depths) is chosen by solving a
//! constrained mathematical program: maximize the weighted multi-scale
//! entropy minus a depth-uniformity penalty, subject to an effectiveness bound
//! and Params/FLOPs budgets. The crate provides the architecture model, the
//! closed-form metrics, the solver, a Monte-Carlo check of the variance law
//! behind the entropy formula, and a catalog of reference networks used to
//! calibrate counting conventions.

pub mod arch;
pub mod catalog;
pub mod conventions;
pub mod format;
pub mod metrics;
pub mod solver;
pub mod variance;

pub use arch::{BlockKind, LayerDescriptor, LayerRole, NetworkSpec, StageSpec, StemSpec};
pub use conventions::Conventions;
pub use metrics::MetricReport;
