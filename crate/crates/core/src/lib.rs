//! Numerical laboratory for the critical-point geometry of regularized loss
//! functions: exact second-order derivatives by jet propagation, multistart
//! critical-point search with Morse classification, per-layer symmetry
//! orbits of feedforward networks, and the scenario/claim verifications
//! built on top of them.

pub mod core_locus;
pub mod critfind;
pub mod fd;
pub mod jet;
pub mod net;
pub mod polar;
pub mod polyscan;
pub mod radial;
pub mod reg;
pub mod symmat;
pub mod symmetry;

pub use critfind::{
    classify, find_critical_points, morse_verdict, trace_null_direction, CriticalPoint,
    CriticalSearch, LandscapeVerdict, MorseReport, NullTrace, SearchBox, SearchOptions,
    TraceVerdict,
};
pub use fd::{finite_difference_check, FdReport};
pub use jet::{apply_activation, constants, jet_arith, seed, ActivationKind, JetOp, ScalarJet2};
pub use net::{forward, loss, pack, unpack, DataSet, FeedforwardSpec, LossKind, NetworkFile, ParamLayout, ParamVector};
pub use reg::{generalized_l2, multiplicative, standard_l2, FnObjective, NetObjective, Objective, Regularized, RegularizerSpec};
pub use symmat::SymMat;
