//! Exact machinery for multilinear forms over F_2^n: partition-rank
//! certificates, symmetrization drivers, non-classical polynomials and
//! Gowers-norm functionals, all verified at desk scale.

pub mod decomp;
pub mod dyadic;
pub mod error;
pub mod forms;
pub mod gf2;
pub mod gowers;
pub mod io;
pub mod nonclassical;
pub mod par;
pub mod rankbias;
pub mod regularity;
pub mod symmetrize;

pub use dyadic::Dyadic;
pub use error::{Error, Result};
pub use forms::{MultilinearForm, Permutation, VariableSet};
pub use gf2::{GF2Matrix, GF2Vector, ProjectionData, Subspace};
