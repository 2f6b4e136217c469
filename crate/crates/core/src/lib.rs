//! Numerical algebra of quantum combs.
//!
//! Operators are dense complex matrices annotated by a [`WireLayout`]; the
//! canonical basis is big-endian over the wire list. On top of the tensor
//! kernel sit Choi operators and the link product, deterministic and
//! probabilistic combs, testers, discrimination distances between networks,
//! conditional combs and the bit-commitment cheat construction.

pub mod choi;
pub mod comb;
pub mod commitment;
pub mod conditional;
pub mod config;
pub mod constraints;
pub mod discrimination;
pub mod error;
pub mod files;
pub mod random;
pub mod sdp;
pub mod tensor;
pub mod tester;

pub use choi::{ChoiOp, OpKind};
pub use comb::{DilatedComb, NormReport, QuantumComb, Tooth};
pub use commitment::{CheatReport, ProtocolSpec};
pub use conditional::{ConditionalComb, History};
pub use config::{RunConfig, Tolerances};
pub use discrimination::{DistanceResult, MinimaxResult, TesterSet};
pub use error::{Error, Result};
pub use files::Document;
pub use tensor::{ComplexMatrix, Role, Wire, WireLayout};
pub use tester::Tester;

pub use num_complex::Complex64 as C64;
