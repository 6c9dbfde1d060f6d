//! Construction and verification toolkit for the GK maximal curves and
//! their quotient genera over small fields (ℓ = 3, 4, 5 by default).
//!
//! The crate is organized around one pipeline:
//!
//! - [`ffield`]: Zech-logarithm arithmetic in GF(p) ⊂ GF(ℓ) ⊂ GF(ℓ²) ⊂ GF(ℓ⁶);
//! - [`projgroup`]: projectivities over GF(ℓ⁶) modulo scalars, group closure,
//!   and constructors for the automorphism subgroups of the GK curve
//!   (the central Λ, the lifted SU(3,ℓ), point/Singer/triangle/line families);
//! - [`gkcurve`]: rational points of the GK, Hermitian and Fermat models,
//!   the degree-(ℓ²−ℓ+1) covering onto the Hermitian curve, orbit splits and
//!   fixed-point counting;
//! - [`hurwitz`]: the ground-truth genus oracle (tame and wild
//!   Riemann–Hurwitz, ramification filtration at the infinite point);
//! - [`formulas`]: the closed-form quotient-genus formulas, exactly as
//!   printed in their source, behind named validity predicates;
//! - [`spectrum`]: spectrum enumeration, the embedded ℓ = 5 reference table,
//!   and the oracle-vs-formula verification campaigns with a misprint ledger.

pub mod ffield;
pub mod formulas;
pub mod gkcurve;
pub mod hurwitz;
pub mod projgroup;
pub mod spectrum;

pub use ffield::{FieldElement, FieldParams, FieldTower};
pub use gkcurve::{CurvePointSet, CurveTag};
pub use hurwitz::OracleResult;
pub use projgroup::{Group, GroupSpec, Projectivity};
pub use spectrum::{SpectrumTable, VerificationReport};
