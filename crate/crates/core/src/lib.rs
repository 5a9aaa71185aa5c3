//! Numerical laboratory for distribution-dependent diffusions with singular
//! coefficients.
//!
//! The crate provides
//!
//! * concave moduli `ψ` and their integral diagnostics ([`psi`]),
//! * weighted point clouds and the distances between them: `W_k`, `W_ψ`
//!   (primal transport and dual Lipschitz LP), total variation, relative
//!   entropy ([`measures`], [`distances`], [`ot`]),
//! * measure-dependent coefficient fields and assumption checkers
//!   ([`coefficients`]),
//! * seeded Euler–Maruyama simulation ([`sde`]),
//! * the interacting particle system and the Picard iteration on measure
//!   flows for McKean–Vlasov equations ([`mkv`]),
//! * an experiment runner emitting reproducible scaling reports ([`harness`]).
//!
//! Path simulation and batch distance evaluation fan out with rayon when the
//! `parallel` feature is enabled (the default); results are identical with
//! the feature disabled.

pub mod coefficients;
pub mod distances;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod measures;
pub mod mkv;
pub mod ot;
pub mod par;
pub mod psi;
pub mod rng;
pub mod sde;
pub mod stats;

pub use error::{LabError, Result};
pub use measures::EmpiricalMeasure;
pub use psi::{PsiFamily, PsiModulus};
