//! Two-step nilpotent Lie algebras as tuples of skew-symmetric matrices.
//!
//! A tensor C = (C¹,…,Cᵖ) ∈ so(q)ᵖ encodes the bracket [eᵢ, eⱼ] = Σₖ Cᵏᵢⱼ z_k.
//! The crate computes the moment map of the GL(q)×GL(p) action, tests for
//! distinguished points, builds the concatenation and adjoin families, issues
//! non-Einstein and indecomposability certificates, and tabulates moduli data.

pub mod certification;
pub mod constructions;
pub mod error;
pub mod flow;
pub mod indecomposability;
pub mod io;
pub mod linalg;
pub mod moduli;
pub mod moment;
pub mod tensor;

pub use error::{Error, Result};
pub use moment::{distinguished_report, minimality_defect, moment, moment_oracle, DistinguishedReport, MomentImage, Subgroup};
pub use tensor::{group_act, infinitesimal_act, GroupElement, StructureTensor};
