//! Lane permutations on Grid-arrays.
//!
//! Three primitives move data inside one virtual vector:
//!
//! * [`rotate`] cyclically shifts the whole array,
//! * [`permute`] swaps adjacent blocks of a power-of-two width,
//! * [`split_rotate`] splits the array into `s` equal blocks and rotates each
//!   block by `r`. It contains the other two as special cases (`s = 1` is
//!   `rotate`; `r = w / 2` is `permute`), and it is the only one of the three
//!   that can realize a lattice shift for an arbitrary SIMD layout.
//!
//! All counts are in real-element units. A complex value occupies two
//! consecutive reals `{re, im}`, so complex rotations are always even.
//!
//! [`ShiftPlan`] turns a lattice shift into, per destination outer slice, a
//! source slice plus the lane permutation that has to be applied on the way.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::DecomposedGeometry;

/// Floating point storage type of a Grid-array.
pub trait Real: Copy + Default + PartialEq + fmt::Debug + Send + Sync + 'static {
    const BYTES: usize;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    const BYTES: usize = 4;
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const BYTES: usize = 8;
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScalarKind {
    RealSingle,
    RealDouble,
    ComplexSingle,
    ComplexDouble,
}

impl ScalarKind {
    /// Reals per value: 1 for real kinds, 2 for complex kinds.
    pub fn element_width(self) -> usize {
        if self.is_complex() {
            2
        } else {
            1
        }
    }

    pub fn is_complex(self) -> bool {
        matches!(self, ScalarKind::ComplexSingle | ScalarKind::ComplexDouble)
    }

    /// Bytes per real component.
    pub fn real_bytes(self) -> usize {
        match self {
            ScalarKind::RealSingle | ScalarKind::ComplexSingle => 4,
            ScalarKind::RealDouble | ScalarKind::ComplexDouble => 8,
        }
    }

    /// Bytes per value (a complex value counts both components).
    pub fn value_bytes(self) -> usize {
        self.real_bytes() * self.element_width()
    }

    pub fn name(self) -> &'static str {
        match self {
            ScalarKind::RealSingle => "real-single",
            ScalarKind::RealDouble => "real-double",
            ScalarKind::ComplexSingle => "complex-single",
            ScalarKind::ComplexDouble => "complex-double",
        }
    }

    pub(crate) fn check_storage<T: Real>(self) -> Result<()> {
        if self.real_bytes() != T::BYTES {
            return Err(Error::KindMismatch {
                kind: self.name(),
                bytes: T::BYTES,
            });
        }
        Ok(())
    }

    /// Checks that `len` reals form a `128 * 2^k` bit vector.
    pub fn check_vector_len(self, len: usize) -> Result<()> {
        let bits = len * self.real_bytes() * 8;
        if !len.is_power_of_two() || bits < 128 || len % self.element_width() != 0 {
            return Err(Error::UnsupportedVectorWidth {
                len,
                kind: self.name(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for ScalarKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScalarKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "real-single" => ScalarKind::RealSingle,
            "real-double" => ScalarKind::RealDouble,
            "complex-single" => ScalarKind::ComplexSingle,
            "complex-double" => ScalarKind::ComplexDouble,
            _ => return Err(Error::Parse(format!("unknown scalar kind `{s}`"))),
        })
    }
}

/// One virtual vector register: `VL` reals of a fixed kind.
#[derive(Debug, Clone, PartialEq)]
pub struct GridArray<T> {
    elems: Vec<T>,
    kind: ScalarKind,
}

impl<T: Real> GridArray<T> {
    pub fn new(elems: Vec<T>, kind: ScalarKind) -> Result<Self> {
        kind.check_storage::<T>()?;
        kind.check_vector_len(elems.len())?;
        Ok(Self { elems, kind })
    }

    pub fn elems(&self) -> &[T] {
        &self.elems
    }

    pub fn into_elems(self) -> Vec<T> {
        self.elems
    }

    pub fn kind(&self) -> ScalarKind {
        self.kind
    }

    /// Number of reals, `VL`.
    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }
}

/// Parameters of one `split_rotate`: `s` blocks of width `w`, rotation `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SplitRotateParams {
    pub s: usize,
    pub r: usize,
    pub w: usize,
}

impl SplitRotateParams {
    /// Validates `s` against `len` reals of `kind` and reduces `r` into `[0, w)`.
    pub fn new(len: usize, kind: ScalarKind, s: usize, r: isize) -> Result<Self> {
        if s == 0 || len % s != 0 || (len / s) % kind.element_width() != 0 {
            return Err(Error::InvalidSplit {
                s,
                len,
                kind: kind.name(),
            });
        }
        if kind.is_complex() && r % 2 != 0 {
            return Err(Error::OddComplexRotation { r });
        }
        let w = len / s;
        Ok(Self {
            s,
            r: r.rem_euclid(w as isize) as usize,
            w,
        })
    }

    pub fn is_identity(&self) -> bool {
        self.r == 0
    }
}

/// `out[i] = in[((i + r) mod w) + w * (i div w)]`, element by element.
pub fn split_rotate_reference<T: Copy>(out: &mut [T], input: &[T], s: usize, r: usize) {
    let vl = input.len();
    let w = vl / s;
    for i in 0..vl {
        out[i] = input[(i + r) % w + w * (i / w)];
    }
}

/// Block-copy form of [`split_rotate_reference`]; `r` must be below `w`.
#[inline]
pub fn split_rotate_slice<T: Copy>(out: &mut [T], input: &[T], s: usize, r: usize) {
    debug_assert_eq!(out.len(), input.len());
    let w = input.len() / s;
    debug_assert!(r < w);
    for (dst, src) in out.chunks_exact_mut(w).zip(input.chunks_exact(w)) {
        dst[..w - r].copy_from_slice(&src[r..]);
        dst[w - r..].copy_from_slice(&src[..r]);
    }
}

/// Swaps adjacent blocks of width `block` pairwise.
#[inline]
pub fn permute_slice<T: Copy>(out: &mut [T], input: &[T], block: usize) {
    debug_assert_eq!(out.len(), input.len());
    for (dst, src) in out
        .chunks_exact_mut(2 * block)
        .zip(input.chunks_exact(2 * block))
    {
        dst[..block].copy_from_slice(&src[block..]);
        dst[block..].copy_from_slice(&src[..block]);
    }
}

pub fn split_rotate<T: Real>(input: &GridArray<T>, s: usize, r: isize) -> Result<GridArray<T>> {
    let p = SplitRotateParams::new(input.len(), input.kind, s, r)?;
    let mut out = vec![T::default(); input.len()];
    split_rotate_slice(&mut out, &input.elems, p.s, p.r);
    Ok(GridArray {
        elems: out,
        kind: input.kind,
    })
}

pub fn rotate<T: Real>(input: &GridArray<T>, r: isize) -> Result<GridArray<T>> {
    split_rotate(input, 1, r)
}

/// Block width in reals used by `permute` at `level`.
pub fn permute_block(len: usize, kind: ScalarKind, level: usize) -> Result<usize> {
    let block = 1usize
        .checked_shl(level as u32)
        .map(|b| b * kind.element_width())
        .filter(|&b| {
            b.checked_mul(2)
                .is_some_and(|b2| b2 <= len && len % b2 == 0)
        });
    block.ok_or(Error::InvalidLevel {
        level,
        len,
        kind: kind.name(),
    })
}

pub fn permute<T: Real>(input: &GridArray<T>, level: usize) -> Result<GridArray<T>> {
    let block = permute_block(input.len(), input.kind, level)?;
    let mut out = vec![T::default(); input.len()];
    permute_slice(&mut out, &input.elems, block);
    Ok(GridArray {
        elems: out,
        kind: input.kind,
    })
}

/// Parameters that advance inner coordinate `i_dim` by `carry` (mod `n_dim`)
/// and leave every other inner coordinate alone.
///
/// Lanes below `dim` form contiguous runs of `N_low` reals, lanes above it
/// index `N_high` independent blocks, so the answer is `s = N_high` and
/// `r = carry * N_low`. `carry` is taken modulo `n_dim`.
pub fn shift_permutation_params(
    dg: &DecomposedGeometry,
    dim: usize,
    carry: usize,
    kind: ScalarKind,
) -> Result<SplitRotateParams> {
    if dim >= dg.dims() {
        return Err(Error::DimOutOfRange {
            dim,
            dims: dg.dims(),
        });
    }
    let lanes = dg.layout().lanes();
    let n_low = dg.lane_stride(dim) * kind.element_width();
    let n_high: usize = lanes[dim + 1..].iter().product();
    let carry = carry % lanes[dim];
    let vl = dg.lanes() * kind.element_width();
    Ok(SplitRotateParams {
        s: n_high,
        r: carry * n_low,
        w: vl / n_high,
    })
}

/// Which primitive realizes lane rearrangements during a shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ShiftImpl {
    #[default]
    SplitRotate,
    /// Pairwise block swaps; only valid if every layout entry is at most 2.
    Permute,
}

impl fmt::Display for ShiftImpl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShiftImpl::SplitRotate => "split_rotate",
            ShiftImpl::Permute => "permute",
        })
    }
}

impl FromStr for ShiftImpl {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "split_rotate" => Ok(ShiftImpl::SplitRotate),
            "permute" => Ok(ShiftImpl::Permute),
            _ => Err(Error::Parse(format!("unknown shift implementation `{s}`"))),
        }
    }
}

/// A concrete data movement for one Grid-array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaneOp {
    Copy,
    SplitRotate { s: usize, r: usize },
    Permute { block: usize },
}

impl LaneOp {
    #[inline]
    pub fn apply<T: Copy>(self, out: &mut [T], input: &[T]) {
        match self {
            LaneOp::Copy => out.copy_from_slice(input),
            LaneOp::SplitRotate { s, r } => split_rotate_slice(out, input, s, r),
            LaneOp::Permute { block } => permute_slice(out, input, block),
        }
    }

    pub fn is_copy(self) -> bool {
        self == LaneOp::Copy
    }
}

/// Plan for one destination outer coordinate along the shift dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShiftEntry {
    pub source: usize,
    pub carry: usize,
    pub params: SplitRotateParams,
    pub op: LaneOp,
}

/// Everything needed to shift a field by `displacement` along `dim`:
/// `g(x) = f(x + displacement * e_dim)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShiftPlan {
    dim: usize,
    displacement: usize,
    outer_stride: usize,
    outer_extent: usize,
    entries: Vec<ShiftEntry>,
}

impl ShiftPlan {
    pub fn new(
        dg: &DecomposedGeometry,
        dim: usize,
        displacement: isize,
        kind: ScalarKind,
        shift_impl: ShiftImpl,
    ) -> Result<Self> {
        if dim >= dg.dims() {
            return Err(Error::DimOutOfRange {
                dim,
                dims: dg.dims(),
            });
        }
        let lanes = dg.layout().lanes();
        if shift_impl == ShiftImpl::Permute && lanes.iter().any(|&n| n > 2) {
            return Err(Error::PermuteUnsupported(lanes.to_vec()));
        }
        let extent = dg.geometry().extent(dim);
        let outer_extent = dg.outer_extents()[dim];
        let n_dim = lanes[dim];
        let displacement = displacement.rem_euclid(extent as isize) as usize;
        let entries = (0..outer_extent)
            .map(|o| {
                let q = o + displacement;
                let carry = (q / outer_extent) % n_dim;
                let params = shift_permutation_params(dg, dim, carry, kind)?;
                let op = match (carry, shift_impl) {
                    (0, _) => LaneOp::Copy,
                    (_, ShiftImpl::SplitRotate) => LaneOp::SplitRotate {
                        s: params.s,
                        r: params.r,
                    },
                    // n_dim == 2 and carry == 1: a half-block rotation is a swap.
                    (_, ShiftImpl::Permute) => LaneOp::Permute { block: params.r },
                };
                Ok(ShiftEntry {
                    source: q % outer_extent,
                    carry,
                    params,
                    op,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dim,
            displacement,
            outer_stride: dg.outer_stride(dim),
            outer_extent,
            entries,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Displacement normalized into `[0, L_dim)`.
    pub fn displacement(&self) -> usize {
        self.displacement
    }

    /// Entries indexed by destination outer coordinate `o_dim`.
    pub fn entries(&self) -> &[ShiftEntry] {
        &self.entries
    }

    /// Source outer index and lane operation for destination outer index `outer`.
    #[inline]
    pub fn source(&self, outer: usize) -> (usize, LaneOp) {
        let o = (outer / self.outer_stride) % self.outer_extent;
        let e = &self.entries[o];
        (
            outer + (e.source * self.outer_stride) - o * self.outer_stride,
            e.op,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{enumerate_layouts, LatticeGeometry};
    use proptest::prelude::*;

    fn iota(n: usize) -> GridArray<f64> {
        GridArray::new((0..n).map(|v| v as f64).collect(), ScalarKind::RealDouble).unwrap()
    }

    fn values(a: &GridArray<f64>) -> Vec<usize> {
        a.elems().iter().map(|&v| v as usize).collect()
    }

    #[test]
    fn split_rotate_examples() {
        let x = iota(8);
        assert_eq!(
            values(&split_rotate(&x, 1, 0).unwrap()),
            [0, 1, 2, 3, 4, 5, 6, 7]
        );
        assert_eq!(
            values(&split_rotate(&x, 2, 1).unwrap()),
            [1, 2, 3, 0, 5, 6, 7, 4]
        );
        assert_eq!(
            values(&split_rotate(&x, 4, 1).unwrap()),
            [1, 0, 3, 2, 5, 4, 7, 6]
        );
        assert_eq!(
            values(&split_rotate(&x, 1, 3).unwrap()),
            [3, 4, 5, 6, 7, 0, 1, 2]
        );
        assert_eq!(
            values(&split_rotate(&x, 2, -1).unwrap()),
            [3, 0, 1, 2, 7, 4, 5, 6]
        );
        assert_eq!(x.elems()[3], 3.0);
    }

    #[test]
    fn rotate_examples() {
        let x = iota(4);
        assert_eq!(values(&rotate(&x, 1).unwrap()), [1, 2, 3, 0]);
        assert_eq!(
            values(&rotate(&iota(8), 3).unwrap()),
            [3, 4, 5, 6, 7, 0, 1, 2]
        );
        assert_eq!(rotate(&x, 4).unwrap(), x);
    }

    #[test]
    fn permute_examples() {
        let x = iota(8);
        assert_eq!(values(&permute(&x, 0).unwrap()), [1, 0, 3, 2, 5, 4, 7, 6]);
        assert_eq!(values(&permute(&x, 2).unwrap()), [4, 5, 6, 7, 0, 1, 2, 3]);
        for level in 0..3 {
            assert_eq!(permute(&permute(&x, level).unwrap(), level).unwrap(), x);
        }
        assert!(matches!(permute(&x, 3), Err(Error::InvalidLevel { .. })));
        let c = GridArray::new(
            (0..8).map(|v| v as f64).collect(),
            ScalarKind::ComplexDouble,
        )
        .unwrap();
        assert_eq!(values(&permute(&c, 0).unwrap()), [2, 3, 0, 1, 6, 7, 4, 5]);
        assert!(permute(&c, 2).is_err());
    }

    #[test]
    fn split_rotate_errors() {
        let x = iota(8);
        assert!(matches!(
            split_rotate(&x, 3, 1),
            Err(Error::InvalidSplit { .. })
        ));
        assert!(matches!(
            split_rotate(&x, 0, 1),
            Err(Error::InvalidSplit { .. })
        ));
        let c = GridArray::new(vec![0.0f64; 8], ScalarKind::ComplexDouble).unwrap();
        assert!(matches!(
            split_rotate(&c, 1, 1),
            Err(Error::OddComplexRotation { r: 1 })
        ));
        assert!(matches!(
            split_rotate(&c, 8, 0),
            Err(Error::InvalidSplit { .. })
        ));
        assert!(split_rotate(&c, 4, 2).is_ok());
    }

    #[test]
    fn grid_array_width_rules() {
        assert!(GridArray::new(vec![0.0f64; 2], ScalarKind::RealDouble).is_ok());
        assert!(GridArray::new(vec![0.0f64; 1], ScalarKind::RealDouble).is_err());
        assert!(GridArray::new(vec![0.0f64; 6], ScalarKind::RealDouble).is_err());
        assert!(GridArray::new(vec![0.0f32; 2], ScalarKind::RealSingle).is_err());
        assert!(GridArray::new(vec![0.0f32; 4], ScalarKind::ComplexSingle).is_ok());
        assert!(matches!(
            GridArray::new(vec![0.0f32; 4], ScalarKind::RealDouble),
            Err(Error::KindMismatch { .. })
        ));
    }

    #[test]
    fn params_examples() {
        let k = ScalarKind::RealDouble;
        let dg = DecomposedGeometry::from_extents(&[8, 4], &[4, 2]).unwrap();
        assert_eq!(
            shift_permutation_params(&dg, 0, 1, k).unwrap(),
            SplitRotateParams { s: 2, r: 1, w: 4 }
        );
        let dg = DecomposedGeometry::from_extents(&[4, 4, 4], &[4, 4, 4]).unwrap();
        assert_eq!(
            shift_permutation_params(&dg, 1, 1, k).unwrap(),
            SplitRotateParams { s: 4, r: 4, w: 16 }
        );
        let dg = DecomposedGeometry::from_extents(&[4, 4, 4, 4], &[2, 2, 2, 2]).unwrap();
        assert_eq!(
            shift_permutation_params(&dg, 3, 1, k).unwrap(),
            SplitRotateParams { s: 1, r: 8, w: 16 }
        );
        for dim in 0..4 {
            assert_eq!(shift_permutation_params(&dg, dim, 0, k).unwrap().r, 0);
        }
        assert!(matches!(
            shift_permutation_params(&dg, 4, 0, k),
            Err(Error::DimOutOfRange { .. })
        ));
        // complex doubles every real-unit count
        let c = shift_permutation_params(&dg, 1, 1, ScalarKind::ComplexDouble).unwrap();
        assert_eq!(c, SplitRotateParams { s: 4, r: 4, w: 8 });
    }

    /// Brute force: lane `l` of the destination must read the source lane
    /// whose inner coordinate along `dim` is advanced by `carry`.
    fn expected_lane_source(
        dg: &DecomposedGeometry,
        dim: usize,
        carry: usize,
        lane: usize,
    ) -> usize {
        let o = 0;
        let x = dg.vector_to_site(o, lane).unwrap();
        let mut y = x.0.clone();
        let ext = dg.outer_extents()[dim];
        y[dim] = (y[dim] + carry * ext) % dg.geometry().extent(dim);
        dg.site_to_vector(&y).unwrap().1
    }

    #[test]
    fn params_match_brute_force_permutation() {
        let g = LatticeGeometry::new(&[4, 8, 4]).unwrap();
        for n in [1, 2, 4, 8, 16, 32, 64] {
            for layout in enumerate_layouts(&g, n) {
                let dg = DecomposedGeometry::new(&g, &layout).unwrap();
                for kind in [ScalarKind::RealDouble, ScalarKind::ComplexDouble] {
                    let ew = kind.element_width();
                    let vl = n * ew;
                    let input: Vec<usize> = (0..vl).collect();
                    for dim in 0..3 {
                        for carry in 0..layout.lanes()[dim] {
                            let p = shift_permutation_params(&dg, dim, carry, kind).unwrap();
                            let mut out = vec![0; vl];
                            split_rotate_reference(&mut out, &input, p.s, p.r);
                            for lane in 0..n {
                                let src = expected_lane_source(&dg, dim, carry, lane);
                                for e in 0..ew {
                                    assert_eq!(out[lane * ew + e], src * ew + e);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn plan_entries_follow_carry_rule() {
        let dg = DecomposedGeometry::from_extents(&[8, 12], &[2, 4]).unwrap();
        for disp in -13isize..=13 {
            let plan = ShiftPlan::new(
                &dg,
                1,
                disp,
                ScalarKind::ComplexDouble,
                ShiftImpl::SplitRotate,
            )
            .unwrap();
            let d = disp.rem_euclid(12) as usize;
            assert_eq!(plan.displacement(), d);
            for (o, e) in plan.entries().iter().enumerate() {
                assert_eq!(e.source, (o + d) % 3);
                assert_eq!(e.carry, ((o + d) / 3) % 4);
                assert_eq!(e.op.is_copy(), e.carry == 0);
            }
        }
        // boundary slices are the only ones that rearrange lanes
        let plan =
            ShiftPlan::new(&dg, 0, 1, ScalarKind::ComplexDouble, ShiftImpl::SplitRotate).unwrap();
        let carries: Vec<usize> = plan.entries().iter().map(|e| e.carry).collect();
        assert_eq!(carries, [0, 0, 0, 1]);
        assert!(matches!(
            ShiftPlan::new(&dg, 0, 1, ScalarKind::ComplexDouble, ShiftImpl::Permute),
            Err(Error::PermuteUnsupported(_))
        ));
        assert!(
            ShiftPlan::new(&dg, 2, 1, ScalarKind::ComplexDouble, ShiftImpl::SplitRotate).is_err()
        );
    }

    #[test]
    fn permute_plan_matches_split_rotate_plan() {
        let g = LatticeGeometry::new(&[4, 4, 4, 4]).unwrap();
        for n in [1, 2, 4, 8, 16] {
            for layout in enumerate_layouts(&g, n) {
                if layout.lanes().iter().any(|&v| v > 2) {
                    continue;
                }
                let dg = DecomposedGeometry::new(&g, &layout).unwrap();
                for kind in [ScalarKind::RealDouble, ScalarKind::ComplexDouble] {
                    let vl = n * kind.element_width();
                    let input: Vec<u32> = (0..vl as u32).collect();
                    for dim in 0..4 {
                        for disp in -3..=4 {
                            let a = ShiftPlan::new(&dg, dim, disp, kind, ShiftImpl::SplitRotate)
                                .unwrap();
                            let b =
                                ShiftPlan::new(&dg, dim, disp, kind, ShiftImpl::Permute).unwrap();
                            for (ea, eb) in a.entries().iter().zip(b.entries()) {
                                let mut oa = vec![0; vl];
                                let mut ob = vec![0; vl];
                                ea.op.apply(&mut oa, &input);
                                eb.op.apply(&mut ob, &input);
                                assert_eq!(oa, ob);
                            }
                        }
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn fast_path_matches_reference(log_vl in 0u32..10, log_s in 0u32..10, r in any::<usize>(), seed in any::<u64>()) {
            let vl = 1usize << log_vl;
            let s = 1usize << log_s.min(log_vl);
            let w = vl / s;
            let r = r % w;
            let input: Vec<u64> = (0..vl as u64).map(|v| v.wrapping_mul(seed | 1)).collect();
            let mut a = vec![0; vl];
            let mut b = vec![0; vl];
            split_rotate_reference(&mut a, &input, s, r);
            split_rotate_slice(&mut b, &input, s, r);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn group_law(log_vl in 1u32..9, log_s in 0u32..9, r1 in 0isize..1024, r2 in 0isize..1024) {
            let vl = 1usize << log_vl;
            let s = 1usize << log_s.min(log_vl);
            let w = (vl / s) as isize;
            let x = iota(vl);
            let twice = split_rotate(&split_rotate(&x, s, r1).unwrap(), s, r2).unwrap();
            prop_assert_eq!(twice, split_rotate(&x, s, (r1 + r2) % w).unwrap());
        }

        #[test]
        fn order_of_rotation(log_vl in 1u32..9, log_s in 0u32..9, r in 0usize..512) {
            let vl = 1usize << log_vl;
            let s = 1usize << log_s.min(log_vl);
            let w = vl / s;
            let r = r % w;
            let x = iota(vl);
            let gcd = {
                let (mut a, mut b) = (w, r);
                while b != 0 { (a, b) = (b, a % b); }
                a
            };
            let order = w / gcd;
            let mut y = x.clone();
            for k in 1..=order {
                y = split_rotate(&y, s, r as isize).unwrap();
                if k < order && r != 0 {
                    prop_assert_ne!(&y, &x);
                }
            }
            prop_assert_eq!(y, x);
        }
    }
}
