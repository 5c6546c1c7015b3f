//! Lattice fields on virtual vectors of any power-of-two width.
//!
//! A lattice is folded into Grid-arrays according to a SIMD layout, and
//! shifts across sublattice boundaries are realized with `split_rotate`, a
//! lane permutation that works for every layout rather than only those whose
//! entries are at most 2. On top of that sit per-site SU(3) products, the
//! Wilson Dirac operator and a small benchmark harness.

pub mod bench;
pub mod error;
pub mod field;
pub mod geometry;
pub mod kernels;
mod rng;
pub mod vecperm;

pub use error::{Error, Result};
pub use field::{Init, LatticeField, ScalarField};
pub use geometry::{
    enumerate_layouts, validate, DecomposedGeometry, LatticeGeometry, SimdLayout, SiteCoord,
};
pub use kernels::{
    gamma5_apply, random_su3, su3_mmul, su3_mmul_oracle, wilson_dirac, wilson_dirac_oracle,
    GammaBasis, GaugeField, SpinorField, Su3Field, WilsonDirac,
};
pub use rng::FieldRng;
pub use vecperm::{
    permute, rotate, shift_permutation_params, split_rotate, GridArray, LaneOp, Real, ScalarKind,
    ShiftImpl, ShiftPlan, SplitRotateParams,
};
