//! SU(3) products and the Wilson Dirac operator on lane-parallel fields.
//!
//! Complex values are stored as `{re, im}` pairs inside each Grid-array, so
//! every inner loop below runs over the lanes of one array with the same
//! arithmetic per lane. Results therefore do not depend on the SIMD layout.
//!
//! Each kernel has a site-by-site oracle working on [`ScalarField`]s with
//! plain `Complex64` arithmetic and explicit neighbour indexing.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{Init, LatticeField, ScalarField};
use crate::geometry::{DecomposedGeometry, LatticeGeometry};
use crate::rng::FieldRng;
use crate::vecperm::{LaneOp, ScalarKind, ShiftImpl, ShiftPlan};

const CD: ScalarKind = ScalarKind::ComplexDouble;
const NC: usize = 3;
const NS: usize = 4;
const SU3_DOF: usize = NC * NC;
const SPINOR_DOF: usize = NS * NC;
const HALF_DOF: usize = 2 * NC;

/// 9 outputs, each 3 complex multiplies (6 flops) and 2 complex adds (2 flops).
pub const SU3_FLOPS_PER_SITE: u64 = 9 * (3 * 6 + 2 * 2);
pub const SU3_FLOPS_FORMULA: &str = "9*(3*6+2*2)";

/// Per hop direction: spin projection (6 complex adds), two SU(3)
/// matrix-vector products (66 flops each) and accumulation of the
/// reconstructed spinor (12 complex adds); then `a*psi + b*hop` on 24 reals.
pub const WILSON_FLOPS_PER_SITE: u64 = 8 * (6 * 2 + 2 * 66 + 12 * 2) + 24 * 3;
pub const WILSON_FLOPS_FORMULA: &str = "8*(6*2+2*66+12*2)+24*3";

fn check_field(f: &LatticeField<f64>, dof: usize, what: &str) -> Result<()> {
    if f.dof() != dof || f.kind() != CD {
        return Err(Error::ShapeMismatch(format!(
            "{what} needs {dof} complex-double dofs, got {} of {}",
            f.dof(),
            f.kind()
        )));
    }
    Ok(())
}

/// A 3x3 complex matrix per site, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Su3Field(LatticeField<f64>);

impl Su3Field {
    pub fn new(dg: &DecomposedGeometry, init: Init) -> Result<Self> {
        Ok(Su3Field(LatticeField::new(dg, SU3_DOF, CD, init)?))
    }

    pub fn from_field(f: LatticeField<f64>) -> Result<Self> {
        check_field(&f, SU3_DOF, "an SU(3) field")?;
        Ok(Su3Field(f))
    }

    pub fn identity(dg: &DecomposedGeometry) -> Result<Self> {
        let mut f = LatticeField::new(dg, SU3_DOF, CD, Init::Zero)?;
        let vl = f.vl();
        for outer in 0..dg.outer_volume() {
            for i in 0..NC {
                let a = f.array_mut(outer, i * NC + i);
                for k in (0..vl).step_by(2) {
                    a[k] = 1.0;
                }
            }
        }
        Ok(Su3Field(f))
    }

    pub fn field(&self) -> &LatticeField<f64> {
        &self.0
    }

    pub fn into_field(self) -> LatticeField<f64> {
        self.0
    }

    pub fn geometry(&self) -> &DecomposedGeometry {
        self.0.geometry()
    }

    pub fn matrix_at(&self, x: &[usize]) -> Result<[[Complex64; 3]; 3]> {
        let v = self.0.peek_site(x)?;
        Ok(matrix_from_reals(&v))
    }

    pub fn cshift(&self, dim: usize, displacement: isize) -> Result<Self> {
        Ok(Su3Field(self.0.cshift(dim, displacement)?))
    }
}

/// Four spins times three colours per site, spin-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorField(LatticeField<f64>);

impl SpinorField {
    pub fn new(dg: &DecomposedGeometry, init: Init) -> Result<Self> {
        Ok(SpinorField(LatticeField::new(dg, SPINOR_DOF, CD, init)?))
    }

    pub fn from_field(f: LatticeField<f64>) -> Result<Self> {
        check_field(&f, SPINOR_DOF, "a spinor field")?;
        Ok(SpinorField(f))
    }

    pub fn field(&self) -> &LatticeField<f64> {
        &self.0
    }

    pub fn field_mut(&mut self) -> &mut LatticeField<f64> {
        &mut self.0
    }

    pub fn into_field(self) -> LatticeField<f64> {
        self.0
    }

    pub fn geometry(&self) -> &DecomposedGeometry {
        self.0.geometry()
    }

    pub fn cshift(&self, dim: usize, displacement: isize) -> Result<Self> {
        Ok(SpinorField(self.0.cshift(dim, displacement)?))
    }
}

/// One link field per lattice direction.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeField {
    links: Vec<Su3Field>,
}

impl GaugeField {
    pub fn new(links: Vec<Su3Field>) -> Result<Self> {
        let Some(first) = links.first() else {
            return Err(Error::ShapeMismatch("gauge field without links".into()));
        };
        let dg = first.geometry();
        if links.len() != dg.dims() {
            return Err(Error::ShapeMismatch(format!(
                "{} link fields for a {}-dimensional lattice",
                links.len(),
                dg.dims()
            )));
        }
        if links.iter().any(|l| l.geometry() != dg) {
            return Err(Error::ShapeMismatch(
                "link fields disagree in geometry".into(),
            ));
        }
        Ok(Self { links })
    }

    pub fn identity(dg: &DecomposedGeometry) -> Result<Self> {
        Self::new(
            (0..dg.dims())
                .map(|_| Su3Field::identity(dg))
                .collect::<Result<_>>()?,
        )
    }

    /// Random SU(3) links; direction `mu` draws from one shared stream after
    /// directions `0..mu`.
    pub fn random(dg: &DecomposedGeometry, seed: u64) -> Result<Self> {
        let mut rng = FieldRng::new(seed);
        let links = (0..dg.dims())
            .map(|_| {
                let sf = random_su3_scalar(dg.geometry(), &mut rng)?;
                Ok(Su3Field(LatticeField::from_scalar(&sf, dg)?))
            })
            .collect::<Result<_>>()?;
        Self::new(links)
    }

    pub fn links(&self) -> &[Su3Field] {
        &self.links
    }

    pub fn geometry(&self) -> &DecomposedGeometry {
        self.links[0].geometry()
    }

    pub fn to_scalar(&self) -> Vec<ScalarField<f64>> {
        self.links.iter().map(|l| l.field().to_scalar()).collect()
    }

    pub fn cshift(&self, dim: usize, displacement: isize) -> Result<Self> {
        Self::new(
            self.links
                .iter()
                .map(|l| l.cshift(dim, displacement))
                .collect::<Result<_>>()?,
        )
    }
}

fn matrix_from_reals(v: &[f64]) -> [[Complex64; 3]; 3] {
    let mut m = [[Complex64::new(0.0, 0.0); 3]; 3];
    for i in 0..NC {
        for j in 0..NC {
            let k = 2 * (i * NC + j);
            m[i][j] = Complex64::new(v[k], v[k + 1]);
        }
    }
    m
}

fn random_su3_matrix(rng: &mut FieldRng) -> [[Complex64; 3]; 3] {
    let mut draw = || -> [Complex64; 3] {
        std::array::from_fn(|_| {
            let re = rng.symmetric();
            Complex64::new(re, rng.symmetric())
        })
    };
    let normalize = |v: [Complex64; 3]| {
        let n = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        v.map(|c| c / n)
    };
    // Resample the (measure-zero) degenerate draws.
    loop {
        let a = draw();
        let b = draw();
        if a.iter().map(|c| c.norm_sqr()).sum::<f64>() < 1e-6 {
            continue;
        }
        let u0 = normalize(a);
        let proj: Complex64 = u0.iter().zip(&b).map(|(x, y)| x.conj() * y).sum();
        let b: [Complex64; 3] = std::array::from_fn(|k| b[k] - proj * u0[k]);
        if b.iter().map(|c| c.norm_sqr()).sum::<f64>() < 1e-6 {
            continue;
        }
        let u1 = normalize(b);
        // conj(u0 x u1) is orthonormal to both rows and makes det = 1
        let u2 = [
            (u0[1] * u1[2] - u0[2] * u1[1]).conj(),
            (u0[2] * u1[0] - u0[0] * u1[2]).conj(),
            (u0[0] * u1[1] - u0[1] * u1[0]).conj(),
        ];
        return [u0, u1, u2];
    }
}

fn random_su3_scalar(geometry: &LatticeGeometry, rng: &mut FieldRng) -> Result<ScalarField<f64>> {
    let mut sf = ScalarField::zeros(geometry, SU3_DOF, CD)?;
    for site in 0..geometry.volume() {
        let m = random_su3_matrix(rng);
        let out = sf.site_mut(site);
        for i in 0..NC {
            for j in 0..NC {
                out[2 * (i * NC + j)] = m[i][j].re;
                out[2 * (i * NC + j) + 1] = m[i][j].im;
            }
        }
    }
    Ok(sf)
}

/// Random special unitary matrix at every site, drawn in site order so the
/// result is the same for every layout.
pub fn random_su3(dg: &DecomposedGeometry, seed: u64) -> Result<Su3Field> {
    let sf = random_su3_scalar(dg.geometry(), &mut FieldRng::new(seed))?;
    Ok(Su3Field(LatticeField::from_scalar(&sf, dg)?))
}

/// `out[i] = sum_k op(a_k) * b_k` over the lanes, with `op` the identity or
/// complex conjugation. Each slice holds interleaved `{re, im}` pairs.
#[inline(always)]
fn cdot3<const CONJ: bool>(out: &mut [f64], a: [&[f64]; 3], b: [&[f64]; 3]) {
    let n = out.len();
    let (a0, a1, a2) = (&a[0][..n], &a[1][..n], &a[2][..n]);
    let (b0, b1, b2) = (&b[0][..n], &b[1][..n], &b[2][..n]);
    let mut k = 0;
    while k + 1 < n {
        let (r, i) = (k, k + 1);
        let (a0r, a0i) = (a0[r], if CONJ { -a0[i] } else { a0[i] });
        let (a1r, a1i) = (a1[r], if CONJ { -a1[i] } else { a1[i] });
        let (a2r, a2i) = (a2[r], if CONJ { -a2[i] } else { a2[i] });
        let p0r = a0r * b0[r] - a0i * b0[i];
        let p0i = a0r * b0[i] + a0i * b0[r];
        let p1r = a1r * b1[r] - a1i * b1[i];
        let p1i = a1r * b1[i] + a1i * b1[r];
        let p2r = a2r * b2[r] - a2i * b2[i];
        let p2i = a2r * b2[i] + a2i * b2[r];
        out[r] = (p0r + p1r) + p2r;
        out[i] = (p0i + p1i) + p2i;
        k += 2;
    }
}

/// Doubles per lane tile in the SU(3) product.
const LANE_TILE: usize = 64;

/// Product of the 3x3 matrices of one outer site (9 arrays each).
#[inline]
fn su3_mul_block(c: &mut [f64], a: &[f64], b: &[f64], vl: usize) {
    // Lanes are processed in tiles so the 27 operand slices stay in L1.
    let tile = vl.min(LANE_TILE);
    for t in (0..vl).step_by(tile) {
        for i in 0..NC {
            let row = [
                &a[(i * NC) * vl + t..][..tile],
                &a[(i * NC + 1) * vl + t..][..tile],
                &a[(i * NC + 2) * vl + t..][..tile],
            ];
            for j in 0..NC {
                let col = [
                    &b[j * vl + t..][..tile],
                    &b[(NC + j) * vl + t..][..tile],
                    &b[(2 * NC + j) * vl + t..][..tile],
                ];
                cdot3::<false>(&mut c[(i * NC + j) * vl + t..][..tile], row, col);
            }
        }
    }
}

/// `u * v` (or `u^dagger * v` when `ADJ`) for colour vectors of 3 arrays.
#[inline]
fn su3_matvec<const ADJ: bool>(out: &mut [f64], u: &[f64], v: &[f64], vl: usize) {
    let v = [&v[..vl], &v[vl..2 * vl], &v[2 * vl..3 * vl]];
    for i in 0..NC {
        let row = if ADJ {
            [
                &u[i * vl..][..vl],
                &u[(NC + i) * vl..][..vl],
                &u[(2 * NC + i) * vl..][..vl],
            ]
        } else {
            [
                &u[(i * NC) * vl..][..vl],
                &u[(i * NC + 1) * vl..][..vl],
                &u[(i * NC + 2) * vl..][..vl],
            ]
        };
        cdot3::<ADJ>(&mut out[i * vl..][..vl], row, v);
    }
}

pub fn su3_mmul(a: &Su3Field, b: &Su3Field) -> Result<Su3Field> {
    let mut c = Su3Field(a.0.zeros_like()?);
    su3_mmul_into(a, b, &mut c)?;
    Ok(c)
}

/// Site-wise `c(x) = a(x) * b(x)`, parallel over outer sites.
pub fn su3_mmul_into(a: &Su3Field, b: &Su3Field, c: &mut Su3Field) -> Result<()> {
    a.0.check_same_shape(&b.0)?;
    a.0.check_same_shape(&c.0)?;
    let vl = a.0.vl();
    let block = a.0.outer_block();
    let (ad, bd) = (a.0.data(), b.0.data());
    c.0.data_mut()
        .par_chunks_mut(block)
        .with_min_len(8)
        .enumerate()
        .for_each(|(o, out)| {
            su3_mul_block(
                out,
                &ad[o * block..][..block],
                &bd[o * block..][..block],
                vl,
            );
        });
    Ok(())
}

/// Textbook per-site matrix product on site-ordered data.
pub fn su3_mmul_oracle(a: &ScalarField<f64>, b: &ScalarField<f64>) -> Result<ScalarField<f64>> {
    for f in [a, b] {
        if f.dof() != SU3_DOF || f.kind() != CD {
            return Err(Error::ShapeMismatch(
                "SU(3) oracle needs 9 complex-double dofs".into(),
            ));
        }
    }
    if a.geometry() != b.geometry() {
        return Err(Error::ShapeMismatch(
            "SU(3) oracle operands on different lattices".into(),
        ));
    }
    let mut c = ScalarField::zeros(a.geometry(), SU3_DOF, CD)?;
    for site in 0..a.geometry().volume() {
        let ma = matrix_from_reals(a.site(site));
        let mb = matrix_from_reals(b.site(site));
        let out = c.site_mut(site);
        for i in 0..NC {
            for j in 0..NC {
                let mut sum = Complex64::new(0.0, 0.0);
                for k in 0..NC {
                    sum += ma[i][k] * mb[k][j];
                }
                out[2 * (i * NC + j)] = sum.re;
                out[2 * (i * NC + j) + 1] = sum.im;
            }
        }
    }
    Ok(c)
}

/// A unit complex number from `{1, -1, i, -i}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    One,
    MinusOne,
    I,
    MinusI,
}

impl Phase {
    pub fn from_complex(c: Complex64) -> Option<Phase> {
        match (c.re, c.im) {
            (r, i) if r == 1.0 && i == 0.0 => Some(Phase::One),
            (r, i) if r == -1.0 && i == 0.0 => Some(Phase::MinusOne),
            (r, i) if r == 0.0 && i == 1.0 => Some(Phase::I),
            (r, i) if r == 0.0 && i == -1.0 => Some(Phase::MinusI),
            _ => None,
        }
    }

    pub fn neg(self) -> Phase {
        match self {
            Phase::One => Phase::MinusOne,
            Phase::MinusOne => Phase::One,
            Phase::I => Phase::MinusI,
            Phase::MinusI => Phase::I,
        }
    }

    fn with_sign(self, negative: bool) -> Phase {
        if negative {
            self.neg()
        } else {
            self
        }
    }
}

/// `out = a + phase * b` lane by lane.
#[inline]
fn add_phased(out: &mut [f64], a: &[f64], b: &[f64], phase: Phase) {
    let n = out.len();
    let (a, b) = (&a[..n], &b[..n]);
    match phase {
        Phase::One => out
            .iter_mut()
            .zip(a.iter().zip(b))
            .for_each(|(o, (x, y))| *o = x + y),
        Phase::MinusOne => out
            .iter_mut()
            .zip(a.iter().zip(b))
            .for_each(|(o, (x, y))| *o = x - y),
        Phase::I => {
            for ((o, x), y) in out
                .chunks_exact_mut(2)
                .zip(a.chunks_exact(2))
                .zip(b.chunks_exact(2))
            {
                o[0] = x[0] - y[1];
                o[1] = x[1] + y[0];
            }
        }
        Phase::MinusI => {
            for ((o, x), y) in out
                .chunks_exact_mut(2)
                .zip(a.chunks_exact(2))
                .zip(b.chunks_exact(2))
            {
                o[0] = x[0] + y[1];
                o[1] = x[1] - y[0];
            }
        }
    }
}

/// `acc += phase * b` lane by lane.
#[inline]
fn accumulate_phased(acc: &mut [f64], b: &[f64], phase: Phase) {
    let b = &b[..acc.len()];
    match phase {
        Phase::One => acc.iter_mut().zip(b).for_each(|(o, y)| *o += y),
        Phase::MinusOne => acc.iter_mut().zip(b).for_each(|(o, y)| *o -= y),
        Phase::I => {
            for (o, y) in acc.chunks_exact_mut(2).zip(b.chunks_exact(2)) {
                o[0] -= y[1];
                o[1] += y[0];
            }
        }
        Phase::MinusI => {
            for (o, y) in acc.chunks_exact_mut(2).zip(b.chunks_exact(2)) {
                o[0] += y[1];
                o[1] -= y[0];
            }
        }
    }
}

pub type SpinMatrix = [[Complex64; 4]; 4];

/// Euclidean gamma matrices in the chiral (DeGrand-Rossi) basis.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaBasis {
    pub gamma: [SpinMatrix; 4],
    /// `gamma_0 gamma_1 gamma_2 gamma_3`, diagonal in this basis.
    pub gamma5: SpinMatrix,
}

/// One nonzero per row: `(M psi)_s = phase_s * psi_{col_s}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SparseRow {
    pub col: usize,
    pub phase: Phase,
}

impl GammaBasis {
    pub fn chiral() -> Self {
        let z = Complex64::new(0.0, 0.0);
        let o = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        let gamma = [
            [[z, z, z, i], [z, z, i, z], [z, -i, z, z], [-i, z, z, z]],
            [[z, z, z, -o], [z, z, o, z], [z, o, z, z], [-o, z, z, z]],
            [[z, z, i, z], [z, z, z, -i], [-i, z, z, z], [z, i, z, z]],
            [[z, z, o, z], [z, z, z, o], [o, z, z, z], [z, o, z, z]],
        ];
        let gamma5 = spin_mul(
            &spin_mul(&gamma[0], &gamma[1]),
            &spin_mul(&gamma[2], &gamma[3]),
        );
        GammaBasis { gamma, gamma5 }
    }

    /// Row structure of a matrix whose rows each hold one entry in
    /// `{±1, ±i}`.
    pub fn sparse(m: &SpinMatrix) -> Option<[SparseRow; 4]> {
        let mut rows = [SparseRow {
            col: 0,
            phase: Phase::One,
        }; 4];
        for (s, row) in m.iter().enumerate() {
            let nz: Vec<usize> = (0..NS)
                .filter(|&t| row[t] != Complex64::new(0.0, 0.0))
                .collect();
            if nz.len() != 1 {
                return None;
            }
            rows[s] = SparseRow {
                col: nz[0],
                phase: Phase::from_complex(row[nz[0]])?,
            };
        }
        Some(rows)
    }
}

pub fn spin_mul(a: &SpinMatrix, b: &SpinMatrix) -> SpinMatrix {
    let mut c = [[Complex64::new(0.0, 0.0); 4]; 4];
    for i in 0..NS {
        for j in 0..NS {
            for k in 0..NS {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

/// Spin projection `(1 + sign * gamma_mu)` reduced to the two upper spins.
///
/// With one nonzero per row and `gamma^2 = 1`, the lower components of the
/// projected spinor are phase multiples of the upper ones, so only
/// `h_s = psi_s + sign * g_s * psi_{p(s)}` for `s = 0, 1` is computed and
/// spin `p(s)` is reconstructed as `sign * g_{p(s)} * h_s`.
#[derive(Debug, Clone, Copy)]
struct Projector {
    partner: [usize; 2],
    project: [Phase; 2],
    reconstruct: [Phase; 2],
}

impl Projector {
    fn new(rows: &[SparseRow; 4], negative: bool) -> Self {
        let partner = [rows[0].col, rows[1].col];
        assert!(
            partner.iter().all(|&p| p >= 2),
            "gamma basis must pair upper with lower spins"
        );
        Projector {
            partner,
            project: [
                rows[0].phase.with_sign(negative),
                rows[1].phase.with_sign(negative),
            ],
            reconstruct: [
                rows[partner[0]].phase.with_sign(negative),
                rows[partner[1]].phase.with_sign(negative),
            ],
        }
    }

    #[inline]
    fn project(&self, half: &mut [f64], psi: &[f64], vl: usize) {
        for s in 0..2 {
            let p = self.partner[s];
            for c in 0..NC {
                add_phased(
                    &mut half[(s * NC + c) * vl..][..vl],
                    &psi[(s * NC + c) * vl..][..vl],
                    &psi[(p * NC + c) * vl..][..vl],
                    self.project[s],
                );
            }
        }
    }

    #[inline]
    fn accumulate(&self, acc: &mut [f64], half: &[f64], vl: usize) {
        for s in 0..2 {
            let p = self.partner[s];
            for c in 0..NC {
                let h = &half[(s * NC + c) * vl..][..vl];
                accumulate_phased(&mut acc[(s * NC + c) * vl..][..vl], h, Phase::One);
                accumulate_phased(&mut acc[(p * NC + c) * vl..][..vl], h, self.reconstruct[s]);
            }
        }
    }
}

/// Wilson Dirac operator
/// `D psi(x) = (m + 4) psi(x) - 1/2 sum_mu [(1 - g_mu) U_mu(x) psi(x + mu)
///            + (1 + g_mu) U_mu(x - mu)^dagger psi(x - mu)]`
/// with periodic boundaries. Neighbours are fetched through [`ShiftPlan`]s,
/// so sublattice-boundary hops permute lanes with the chosen primitive.
#[derive(Debug, Clone)]
pub struct WilsonDirac {
    dg: DecomposedGeometry,
    forward: Vec<ShiftPlan>,
    backward: Vec<ShiftPlan>,
    minus: Vec<Projector>,
    plus: Vec<Projector>,
}

impl WilsonDirac {
    pub fn new(dg: &DecomposedGeometry, shift_impl: ShiftImpl) -> Result<Self> {
        if dg.dims() != 4 {
            return Err(Error::DimensionNotFour(dg.dims()));
        }
        let basis = GammaBasis::chiral();
        let rows: Vec<[SparseRow; 4]> = basis
            .gamma
            .iter()
            .map(|g| GammaBasis::sparse(g).expect("chiral gammas are sparse phase matrices"))
            .collect();
        Ok(Self {
            dg: dg.clone(),
            forward: (0..4)
                .map(|mu| ShiftPlan::new(dg, mu, 1, CD, shift_impl))
                .collect::<Result<_>>()?,
            backward: (0..4)
                .map(|mu| ShiftPlan::new(dg, mu, -1, CD, shift_impl))
                .collect::<Result<_>>()?,
            minus: rows.iter().map(|r| Projector::new(r, true)).collect(),
            plus: rows.iter().map(|r| Projector::new(r, false)).collect(),
        })
    }

    pub fn apply(&self, u: &GaugeField, psi: &SpinorField, mass: f64) -> Result<SpinorField> {
        let mut out = SpinorField(psi.0.zeros_like()?);
        self.apply_into(u, psi, mass, &mut out)?;
        Ok(out)
    }

    pub fn apply_into(
        &self,
        u: &GaugeField,
        psi: &SpinorField,
        mass: f64,
        out: &mut SpinorField,
    ) -> Result<()> {
        if psi.geometry() != &self.dg || u.geometry() != &self.dg || u.links.len() != 4 {
            return Err(Error::ShapeMismatch(
                "operator, links and spinor disagree in geometry".into(),
            ));
        }
        psi.0.check_same_shape(&out.0)?;
        let vl = psi.0.vl();
        let block = psi.0.outer_block();
        let ublock = SU3_DOF * vl;
        let psi_data = psi.0.data();
        let links: Vec<&[f64]> = u.links.iter().map(|l| l.0.data()).collect();
        let diag = mass + 4.0;

        out.0
            .data_mut()
            .par_chunks_mut(block)
            .with_min_len(4)
            .enumerate()
            .for_each_init(
                || Scratch::new(vl),
                |scratch, (o, dst)| {
                    let Scratch {
                        acc,
                        half,
                        moved,
                        product,
                    } = scratch;
                    acc.fill(0.0);
                    for mu in 0..4 {
                        // (1 - g_mu) U_mu(x) psi(x + mu)
                        let (src, op) = self.forward[mu].source(o);
                        self.minus[mu].project(half, &psi_data[src * block..][..block], vl);
                        let neighbour: &[f64] = if op.is_copy() {
                            half
                        } else {
                            permute_arrays(op, moved, half, vl);
                            moved
                        };
                        let link = &links[mu][o * ublock..][..ublock];
                        for s in 0..2 {
                            su3_matvec::<false>(
                                &mut product[s * NC * vl..][..NC * vl],
                                link,
                                &neighbour[s * NC * vl..][..NC * vl],
                                vl,
                            );
                        }
                        self.minus[mu].accumulate(acc, product, vl);

                        // (1 + g_mu) U_mu(x - mu)^dagger psi(x - mu), formed in
                        // the source lane order and then moved
                        let (src, op) = self.backward[mu].source(o);
                        self.plus[mu].project(half, &psi_data[src * block..][..block], vl);
                        let link = &links[mu][src * ublock..][..ublock];
                        for s in 0..2 {
                            su3_matvec::<true>(
                                &mut product[s * NC * vl..][..NC * vl],
                                link,
                                &half[s * NC * vl..][..NC * vl],
                                vl,
                            );
                        }
                        let hopped: &[f64] = if op.is_copy() {
                            product
                        } else {
                            permute_arrays(op, moved, product, vl);
                            moved
                        };
                        self.plus[mu].accumulate(acc, hopped, vl);
                    }
                    let center = &psi_data[o * block..][..block];
                    for ((d, &c), &h) in dst.iter_mut().zip(center).zip(acc.iter()) {
                        *d = diag * c - 0.5 * h;
                    }
                },
            );
        Ok(())
    }
}

struct Scratch {
    acc: Vec<f64>,
    half: Vec<f64>,
    moved: Vec<f64>,
    product: Vec<f64>,
}

impl Scratch {
    fn new(vl: usize) -> Self {
        Scratch {
            acc: vec![0.0; SPINOR_DOF * vl],
            half: vec![0.0; HALF_DOF * vl],
            moved: vec![0.0; HALF_DOF * vl],
            product: vec![0.0; HALF_DOF * vl],
        }
    }
}

#[inline]
fn permute_arrays(op: LaneOp, out: &mut [f64], input: &[f64], vl: usize) {
    for (d, s) in out.chunks_exact_mut(vl).zip(input.chunks_exact(vl)) {
        op.apply(d, s);
    }
}

pub fn wilson_dirac(u: &GaugeField, psi: &SpinorField, mass: f64) -> Result<SpinorField> {
    WilsonDirac::new(psi.geometry(), ShiftImpl::SplitRotate)?.apply(u, psi, mass)
}

fn spinor_from_reals(v: &[f64]) -> [[Complex64; 3]; 4] {
    std::array::from_fn(|s| {
        std::array::from_fn(|c| Complex64::new(v[2 * (s * NC + c)], v[2 * (s * NC + c) + 1]))
    })
}

/// Same operator evaluated site by site with dense gamma matrices.
pub fn wilson_dirac_oracle(
    u: &[ScalarField<f64>],
    psi: &ScalarField<f64>,
    mass: f64,
) -> Result<ScalarField<f64>> {
    let geometry = psi.geometry();
    if geometry.dims() != 4 {
        return Err(Error::DimensionNotFour(geometry.dims()));
    }
    if psi.dof() != SPINOR_DOF || psi.kind() != CD {
        return Err(Error::ShapeMismatch(
            "oracle spinor needs 12 complex-double dofs".into(),
        ));
    }
    if u.len() != 4
        || u.iter()
            .any(|l| l.geometry() != geometry || l.dof() != SU3_DOF || l.kind() != CD)
    {
        return Err(Error::ShapeMismatch(
            "oracle needs four SU(3) link fields on the spinor lattice".into(),
        ));
    }
    let basis = GammaBasis::chiral();
    let mut out = ScalarField::zeros(geometry, SPINOR_DOF, CD)?;
    let zero = Complex64::new(0.0, 0.0);
    for site in 0..geometry.volume() {
        let x = geometry.site_coord(site).0;
        let mut hop = [[zero; 3]; 4];
        for mu in 0..4 {
            let l = geometry.extent(mu);
            let mut xp = x.clone();
            xp[mu] = (x[mu] + 1) % l;
            let mut xm = x.clone();
            xm[mu] = (x[mu] + l - 1) % l;
            let (ip, im) = (geometry.site_index(&xp)?, geometry.site_index(&xm)?);

            let link = matrix_from_reals(u[mu].site(site));
            let fwd = spinor_from_reals(psi.site(ip));
            let link_back = matrix_from_reals(u[mu].site(im));
            let bwd = spinor_from_reals(psi.site(im));

            let mut uf = [[zero; 3]; 4];
            let mut ub = [[zero; 3]; 4];
            for s in 0..NS {
                for a in 0..NC {
                    for b in 0..NC {
                        uf[s][a] += link[a][b] * fwd[s][b];
                        ub[s][a] += link_back[b][a].conj() * bwd[s][b];
                    }
                }
            }
            let g = &basis.gamma[mu];
            for s in 0..NS {
                for c in 0..NC {
                    let mut gf = zero;
                    let mut gb = zero;
                    for t in 0..NS {
                        gf += g[s][t] * uf[t][c];
                        gb += g[s][t] * ub[t][c];
                    }
                    hop[s][c] += (uf[s][c] - gf) + (ub[s][c] + gb);
                }
            }
        }
        let center = spinor_from_reals(psi.site(site));
        let dst = out.site_mut(site);
        for s in 0..NS {
            for c in 0..NC {
                let v = (mass + 4.0) * center[s][c] - 0.5 * hop[s][c];
                dst[2 * (s * NC + c)] = v.re;
                dst[2 * (s * NC + c) + 1] = v.im;
            }
        }
    }
    Ok(out)
}

/// `gamma_5 psi` at every site.
pub fn gamma5_apply(psi: &SpinorField) -> Result<SpinorField> {
    let rows =
        GammaBasis::sparse(&GammaBasis::chiral().gamma5).expect("gamma5 is a sparse phase matrix");
    let mut out = SpinorField(psi.0.zeros_like()?);
    let vl = psi.0.vl();
    let block = psi.0.outer_block();
    let src = psi.0.data();
    out.0
        .data_mut()
        .par_chunks_mut(block)
        .enumerate()
        .for_each(|(o, dst)| {
            let input = &src[o * block..][..block];
            for (s, row) in rows.iter().enumerate() {
                for c in 0..NC {
                    let d = &mut dst[(s * NC + c) * vl..][..vl];
                    d.fill(0.0);
                    accumulate_phased(d, &input[(row.col * NC + c) * vl..][..vl], row.phase);
                }
            }
        });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::enumerate_layouts;

    fn dg(extents: &[usize], layout: &[usize]) -> DecomposedGeometry {
        DecomposedGeometry::from_extents(extents, layout).unwrap()
    }

    fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
            .fold(0.0, f64::max)
    }

    fn is_special_unitary(m: &[[Complex64; 3]; 3], tol: f64) -> bool {
        for i in 0..3 {
            for j in 0..3 {
                let mut s = Complex64::new(0.0, 0.0);
                for k in 0..3 {
                    s += m[k][i].conj() * m[k][j];
                }
                let e = if i == j { 1.0 } else { 0.0 };
                if (s - e).norm() > tol {
                    return false;
                }
            }
        }
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        (det - 1.0).norm() <= tol
    }

    #[test]
    fn flop_constants_match_formulas() {
        assert_eq!(SU3_FLOPS_PER_SITE, 198);
        assert_eq!(WILSON_FLOPS_PER_SITE, 1416);
    }

    #[test]
    fn gamma_basis_algebra() {
        let b = GammaBasis::chiral();
        let one = Complex64::new(1.0, 0.0);
        for mu in 0..4 {
            for nu in 0..4 {
                let ab = spin_mul(&b.gamma[mu], &b.gamma[nu]);
                let ba = spin_mul(&b.gamma[nu], &b.gamma[mu]);
                for i in 0..4 {
                    for j in 0..4 {
                        let expect = if mu == nu && i == j {
                            2.0 * one
                        } else {
                            0.0 * one
                        };
                        assert_eq!(ab[i][j] + ba[i][j], expect);
                    }
                }
            }
            for row in &b.gamma[mu] {
                for v in row {
                    assert!(Phase::from_complex(*v).is_some() || *v == 0.0 * one);
                }
            }
        }
        let rows = GammaBasis::sparse(&b.gamma5).unwrap();
        let diag: Vec<(usize, Phase)> = rows.iter().map(|r| (r.col, r.phase)).collect();
        assert_eq!(
            diag,
            [
                (0, Phase::One),
                (1, Phase::One),
                (2, Phase::MinusOne),
                (3, Phase::MinusOne)
            ]
        );
    }

    #[test]
    fn random_su3_is_special_unitary_and_deterministic() {
        let d = dg(&[4, 4], &[2, 2]);
        let u = random_su3(&d, 42).unwrap();
        for site in 0..16 {
            let x = d.geometry().site_coord(site);
            assert!(is_special_unitary(&u.matrix_at(&x).unwrap(), 1e-12));
        }
        assert_eq!(u, random_su3(&d, 42).unwrap());
        assert_ne!(u, random_su3(&d, 43).unwrap());
    }

    #[test]
    fn su3_identity_and_closure() {
        let d = dg(&[4, 4, 4], &[2, 2, 2]);
        let id = Su3Field::identity(&d).unwrap();
        let b = random_su3(&d, 1).unwrap();
        assert_eq!(su3_mmul(&id, &b).unwrap(), b);
        let a = random_su3(&d, 2).unwrap();
        let c = su3_mmul(&a, &b).unwrap();
        for site in 0..64 {
            let x = d.geometry().site_coord(site);
            assert!(is_special_unitary(&c.matrix_at(&x).unwrap(), 1e-10));
        }
    }

    #[test]
    fn su3_oracle_properties() {
        let g = LatticeGeometry::new(&[1]).unwrap();
        let d = DecomposedGeometry::new(&g, &"1".parse().unwrap()).unwrap();
        let a = random_su3(&d, 5).unwrap().into_field().to_scalar();
        let b = random_su3(&d, 6).unwrap().into_field().to_scalar();
        let c = su3_mmul_oracle(&a, &b).unwrap();
        let (ma, mb, mc) = (
            matrix_from_reals(a.site(0)),
            matrix_from_reals(b.site(0)),
            matrix_from_reals(c.site(0)),
        );
        for i in 0..3 {
            for j in 0..3 {
                let direct = ma[i][0] * mb[0][j] + ma[i][1] * mb[1][j] + ma[i][2] * mb[2][j];
                assert!((direct - mc[i][j]).norm() < 1e-15);
            }
        }

        let d = dg(&[4, 4], &[1, 1]);
        let [a, b, c] = [7, 8, 9].map(|s| random_su3(&d, s).unwrap().into_field().to_scalar());
        let left = su3_mmul_oracle(&su3_mmul_oracle(&a, &b).unwrap(), &c).unwrap();
        let right = su3_mmul_oracle(&a, &su3_mmul_oracle(&b, &c).unwrap()).unwrap();
        assert!(max_rel_diff(left.data(), right.data()) < 1e-12);
        let id = Su3Field::identity(&d).unwrap().into_field().to_scalar();
        assert_eq!(su3_mmul_oracle(&id, &a).unwrap(), a);
    }

    #[test]
    fn su3_matches_oracle_across_layouts() {
        let g = LatticeGeometry::new(&[4, 4, 2, 4]).unwrap();
        let base = dg(&[4, 4, 2, 4], &[1, 1, 1, 1]);
        let a = random_su3(&base, 3).unwrap().into_field().to_scalar();
        let b = random_su3(&base, 4).unwrap().into_field().to_scalar();
        let expect = su3_mmul_oracle(&a, &b).unwrap();
        for n in [1, 2, 4, 8, 16, 32, 64] {
            for layout in enumerate_layouts(&g, n) {
                let d = DecomposedGeometry::new(&g, &layout).unwrap();
                let fa = Su3Field::from_field(LatticeField::from_scalar(&a, &d).unwrap()).unwrap();
                let fb = Su3Field::from_field(LatticeField::from_scalar(&b, &d).unwrap()).unwrap();
                let got = su3_mmul(&fa, &fb).unwrap().into_field().to_scalar();
                assert!(max_rel_diff(got.data(), expect.data()) <= 2.0 * f64::EPSILON);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let d = dg(&[4, 4], &[2, 2]);
        let a = random_su3(&d, 1).unwrap();
        let other = random_su3(&dg(&[4, 4], &[1, 2]), 1).unwrap();
        assert!(matches!(su3_mmul(&a, &other), Err(Error::ShapeMismatch(_))));
        assert!(Su3Field::from_field(LatticeField::new(&d, 3, CD, Init::Zero).unwrap()).is_err());
        assert!(matches!(
            WilsonDirac::new(&d, ShiftImpl::SplitRotate),
            Err(Error::DimensionNotFour(2))
        ));
        let d4 = dg(&[4, 4, 4, 4], &[4, 1, 1, 1]);
        assert!(matches!(
            WilsonDirac::new(&d4, ShiftImpl::Permute),
            Err(Error::PermuteUnsupported(_))
        ));
    }

    #[test]
    fn wilson_unit_links_constant_spinor() {
        let d = dg(&[4, 4, 4, 4], &[2, 1, 2, 2]);
        let u = GaugeField::identity(&d).unwrap();
        let mut psi = SpinorField::new(&d, Init::Zero).unwrap();
        let values: Vec<f64> = (0..24).map(|k| 0.1 * k as f64 - 1.0).collect();
        for site in 0..d.volume() {
            let x = d.geometry().site_coord(site);
            psi.field_mut().poke_site(&x, &values).unwrap();
        }
        let mass = 0.3;
        let out = wilson_dirac(&u, &psi, mass).unwrap();
        let scale = psi
            .field()
            .data()
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        for (o, p) in out.field().data().iter().zip(psi.field().data()) {
            assert!((o - mass * p).abs() <= 1e-13 * scale);
        }
        let zero = SpinorField::new(&d, Init::Zero).unwrap();
        assert_eq!(
            wilson_dirac(&GaugeField::random(&d, 1).unwrap(), &zero, mass)
                .unwrap()
                .field()
                .norm2(),
            0.0
        );
    }

    #[test]
    fn wilson_matches_oracle() {
        for layout in [[1, 1, 1, 1], [2, 2, 2, 2], [1, 2, 4, 1], [4, 1, 1, 2]] {
            let d = dg(&[4, 4, 4, 8], &layout);
            let u = GaugeField::random(&d, 11).unwrap();
            let psi = SpinorField::new(&d, Init::Random(12)).unwrap();
            let got = wilson_dirac(&u, &psi, 0.1)
                .unwrap()
                .into_field()
                .to_scalar();
            let expect =
                wilson_dirac_oracle(&u.to_scalar(), &psi.field().to_scalar(), 0.1).unwrap();
            assert!(max_rel_diff(got.data(), expect.data()) < 1e-12);
        }
    }

    #[test]
    fn oracle_point_source_support_and_linearity() {
        let d = dg(&[4, 4, 4, 4], &[1, 1, 1, 1]);
        let g = d.geometry();
        let u = GaugeField::random(&d, 2).unwrap().to_scalar();
        let mut point = ScalarField::zeros(g, SPINOR_DOF, CD).unwrap();
        let src = g.site_index(&[1, 2, 3, 0]).unwrap();
        point.site_mut(src)[4] = 1.0;
        let out = wilson_dirac_oracle(&u, &point, 0.2).unwrap();
        for site in 0..g.volume() {
            let x = g.site_coord(site);
            let dist: usize = (0..4)
                .map(|k| {
                    let dd = (x[k] + 4 - [1, 2, 3, 0][k]) % 4;
                    dd.min(4 - dd)
                })
                .sum();
            let nonzero = out.site(site).iter().any(|v| *v != 0.0);
            if dist > 1 {
                assert!(!nonzero, "site {x:?} should be untouched");
            }
            if dist == 0 {
                assert!(nonzero);
            }
        }
        let p = ScalarField::<f64>::random(g, SPINOR_DOF, CD, 3).unwrap();
        let q = ScalarField::<f64>::random(g, SPINOR_DOF, CD, 4).unwrap();
        let (alpha, beta) = (0.7, -1.3);
        let combo: Vec<f64> = p
            .data()
            .iter()
            .zip(q.data())
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        let combo = ScalarField::from_vec(g, SPINOR_DOF, CD, combo).unwrap();
        let dp = wilson_dirac_oracle(&u, &p, 0.2).unwrap();
        let dq = wilson_dirac_oracle(&u, &q, 0.2).unwrap();
        let dc = wilson_dirac_oracle(&u, &combo, 0.2).unwrap();
        for ((c, a), b) in dc.data().iter().zip(dp.data()).zip(dq.data()) {
            assert!((c - (alpha * a + beta * b)).abs() < 1e-13 * 10.0_f64.max(c.abs()));
        }
    }

    #[test]
    fn gamma5_properties() {
        let d = dg(&[4, 4, 4, 4], &[2, 2, 1, 1]);
        let psi = SpinorField::new(&d, Init::Random(9)).unwrap();
        let g5 = gamma5_apply(&psi).unwrap();
        assert_eq!(gamma5_apply(&g5).unwrap(), psi);
        assert_eq!(g5.field().norm2(), psi.field().norm2());
        let vl = psi.field().vl();
        // chirality projectors
        let proj = |sign: f64, f: &SpinorField| -> Vec<f64> {
            let g = gamma5_apply(f).unwrap();
            f.field()
                .data()
                .iter()
                .zip(g.field().data())
                .map(|(a, b)| 0.5 * (a + sign * b))
                .collect()
        };
        for sign in [1.0, -1.0] {
            let p1 = proj(sign, &psi);
            let f1 = SpinorField::from_field({
                let mut f = psi.field().clone();
                f.data_mut().copy_from_slice(&p1);
                f
            })
            .unwrap();
            let p2 = proj(sign, &f1);
            assert!(p1.iter().zip(&p2).all(|(a, b)| (a - b).abs() <= 1e-15));
        }
        // upper spins unchanged, lower spins negated
        assert_eq!(g5.field().array(0, 0), psi.field().array(0, 0));
        let neg: Vec<f64> = psi.field().array(0, 6).iter().map(|v| -v).collect();
        assert_eq!(g5.field().array(0, 6), &neg[..vl]);
    }

    #[test]
    fn gamma5_hermiticity() {
        let d = dg(&[4, 4, 4, 4], &[1, 2, 2, 1]);
        let u = GaugeField::random(&d, 21).unwrap();
        let op = WilsonDirac::new(&d, ShiftImpl::SplitRotate).unwrap();
        let psi = SpinorField::new(&d, Init::Random(22)).unwrap();
        let chi = SpinorField::new(&d, Init::Random(23)).unwrap();
        let mass = -0.4;
        let lhs = chi
            .field()
            .inner_product(
                gamma5_apply(&op.apply(&u, &gamma5_apply(&psi).unwrap(), mass).unwrap())
                    .unwrap()
                    .field(),
            )
            .unwrap();
        let rhs = op
            .apply(&u, &chi, mass)
            .unwrap()
            .field()
            .inner_product(psi.field())
            .unwrap();
        let scale = chi.field().norm2().sqrt() * psi.field().norm2().sqrt();
        assert!((lhs - rhs).norm() <= 1e-10 * scale);
    }

    #[test]
    fn translation_covariance() {
        let d = dg(&[4, 4, 4, 4], &[2, 1, 1, 4]);
        let u = GaugeField::random(&d, 31).unwrap();
        let psi = SpinorField::new(&d, Init::Random(32)).unwrap();
        let op = WilsonDirac::new(&d, ShiftImpl::SplitRotate).unwrap();
        for (dim, disp) in [(0, 1), (3, -1), (2, 3)] {
            let a = op.apply(&u, &psi, 0.05).unwrap().cshift(dim, disp).unwrap();
            let b = op
                .apply(
                    &u.cshift(dim, disp).unwrap(),
                    &psi.cshift(dim, disp).unwrap(),
                    0.05,
                )
                .unwrap();
            assert!(max_rel_diff(a.field().data(), b.field().data()) <= 1e-12);
        }
    }

    #[test]
    fn permute_and_split_rotate_operators_agree() {
        let d = dg(&[4, 4, 4, 4], &[2, 2, 2, 2]);
        let u = GaugeField::random(&d, 41).unwrap();
        let psi = SpinorField::new(&d, Init::Random(42)).unwrap();
        let a = WilsonDirac::new(&d, ShiftImpl::SplitRotate)
            .unwrap()
            .apply(&u, &psi, 0.1)
            .unwrap();
        let b = WilsonDirac::new(&d, ShiftImpl::Permute)
            .unwrap()
            .apply(&u, &psi, 0.1)
            .unwrap();
        assert_eq!(a, b);
    }
}
