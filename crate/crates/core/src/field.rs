//! Lattice fields stored as Grid-arrays, plus a plain site-ordered form used
//! as an oracle.
//!
//! Storage is `outer_volume * dof` Grid-arrays of `VL` reals each. The `dof`
//! arrays of one outer site are consecutive; outer sites follow the outer
//! index (dimension 0 fastest). Lane `l` of array `(o, c)` holds dof `c` of
//! site `vector_to_site(o, l)`.

use std::hash::Hasher;
use std::io::{BufRead, Write};

use fnv::FnvHasher;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{DecomposedGeometry, LatticeGeometry, SimdLayout};
use crate::rng::FieldRng;
use crate::vecperm::{GridArray, LaneOp, Real, ScalarKind, ShiftImpl, ShiftPlan};

/// Field initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Zero,
    /// Uniform in `[-1, 1)` per real component, drawn in site order.
    Random(u64),
}

pub(crate) fn alloc<T: Real>(len: usize) -> Result<Vec<T>> {
    let mut v = Vec::new();
    v.try_reserve_exact(len)
        .map_err(|_| Error::Allocation(len))?;
    v.resize(len, T::default());
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeField<T> {
    dg: DecomposedGeometry,
    dof: usize,
    kind: ScalarKind,
    data: Vec<T>,
}

impl<T: Real> LatticeField<T> {
    pub fn new(dg: &DecomposedGeometry, dof: usize, kind: ScalarKind, init: Init) -> Result<Self> {
        kind.check_storage::<T>()?;
        kind.check_vector_len(dg.lanes() * kind.element_width())?;
        if dof == 0 {
            return Err(Error::ShapeMismatch(
                "a field needs at least one degree of freedom".into(),
            ));
        }
        match init {
            Init::Zero => {
                let len = dg.outer_volume() * dof * dg.lanes() * kind.element_width();
                Ok(Self {
                    dg: dg.clone(),
                    dof,
                    kind,
                    data: alloc(len)?,
                })
            }
            Init::Random(seed) => {
                let sf = ScalarField::random(dg.geometry(), dof, kind, seed)?;
                Self::from_scalar(&sf, dg)
            }
        }
    }

    pub fn zeros_like(&self) -> Result<Self> {
        Self::new(&self.dg, self.dof, self.kind, Init::Zero)
    }

    pub fn geometry(&self) -> &DecomposedGeometry {
        &self.dg
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn kind(&self) -> ScalarKind {
        self.kind
    }

    /// Reals per Grid-array.
    pub fn vl(&self) -> usize {
        self.dg.lanes() * self.kind.element_width()
    }

    /// Reals owned by one outer site.
    pub fn outer_block(&self) -> usize {
        self.dof * self.vl()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn array(&self, outer: usize, dof: usize) -> &[T] {
        let vl = self.vl();
        let start = (outer * self.dof + dof) * vl;
        &self.data[start..start + vl]
    }

    pub fn array_mut(&mut self, outer: usize, dof: usize) -> &mut [T] {
        let vl = self.vl();
        let start = (outer * self.dof + dof) * vl;
        &mut self.data[start..start + vl]
    }

    pub fn grid_array(&self, outer: usize, dof: usize) -> GridArray<T> {
        GridArray::new(self.array(outer, dof).to_vec(), self.kind)
            .expect("field arrays have valid width")
    }

    /// The `dof * element_width` reals of site `x`.
    pub fn peek_site(&self, x: &[usize]) -> Result<Vec<T>> {
        let (outer, lane) = self.dg.site_to_vector(x)?;
        let ew = self.kind.element_width();
        let mut out = Vec::with_capacity(self.dof * ew);
        for c in 0..self.dof {
            out.extend_from_slice(&self.array(outer, c)[lane * ew..(lane + 1) * ew]);
        }
        Ok(out)
    }

    pub fn poke_site(&mut self, x: &[usize], values: &[T]) -> Result<()> {
        let ew = self.kind.element_width();
        if values.len() != self.dof * ew {
            return Err(Error::ShapeMismatch(format!(
                "site holds {} reals, got {}",
                self.dof * ew,
                values.len()
            )));
        }
        let (outer, lane) = self.dg.site_to_vector(x)?;
        for c in 0..self.dof {
            self.array_mut(outer, c)[lane * ew..(lane + 1) * ew]
                .copy_from_slice(&values[c * ew..(c + 1) * ew]);
        }
        Ok(())
    }

    pub fn to_scalar(&self) -> ScalarField<T> {
        let ew = self.kind.element_width();
        let site_block = self.dof * ew;
        let mut data = vec![T::default(); self.data.len()];
        for outer in 0..self.dg.outer_volume() {
            for lane in 0..self.dg.lanes() {
                let site = self.dg.site_index_of(outer, lane);
                for c in 0..self.dof {
                    let src = &self.array(outer, c)[lane * ew..(lane + 1) * ew];
                    data[site * site_block + c * ew..][..ew].copy_from_slice(src);
                }
            }
        }
        ScalarField {
            geometry: self.dg.geometry().clone(),
            dof: self.dof,
            kind: self.kind,
            data,
        }
    }

    pub fn from_scalar(sf: &ScalarField<T>, dg: &DecomposedGeometry) -> Result<Self> {
        if sf.geometry != *dg.geometry() {
            return Err(Error::ShapeMismatch(format!(
                "scalar field on {} cannot fill geometry {}",
                sf.geometry,
                dg.geometry()
            )));
        }
        let mut f = Self::new(dg, sf.dof, sf.kind, Init::Zero)?;
        let ew = sf.kind.element_width();
        let site_block = sf.dof * ew;
        for outer in 0..dg.outer_volume() {
            for lane in 0..dg.lanes() {
                let site = dg.site_index_of(outer, lane);
                for c in 0..sf.dof {
                    let src = &sf.data[site * site_block + c * ew..][..ew];
                    f.array_mut(outer, c)[lane * ew..(lane + 1) * ew].copy_from_slice(src);
                }
            }
        }
        Ok(f)
    }

    /// `g(x) = f(x + displacement * e_dim)` with periodic wrap.
    pub fn cshift(&self, dim: usize, displacement: isize) -> Result<Self> {
        self.cshift_with(dim, displacement, ShiftImpl::SplitRotate)
    }

    pub fn cshift_with(
        &self,
        dim: usize,
        displacement: isize,
        shift_impl: ShiftImpl,
    ) -> Result<Self> {
        let plan = ShiftPlan::new(&self.dg, dim, displacement, self.kind, shift_impl)?;
        let mut out = self.zeros_like()?;
        self.cshift_into(&plan, &mut out)?;
        Ok(out)
    }

    /// Shifts into a preallocated field; parallel over destination outer sites.
    pub fn cshift_into(&self, plan: &ShiftPlan, out: &mut Self) -> Result<()> {
        self.check_same_shape(out)?;
        let block = self.outer_block();
        let vl = self.vl();
        let src_data = &self.data;
        out.data
            .par_chunks_mut(block)
            .with_min_len(16)
            .enumerate()
            .for_each(|(outer, dst)| {
                let (src, op) = plan.source(outer);
                let src = &src_data[src * block..(src + 1) * block];
                match op {
                    LaneOp::Copy => dst.copy_from_slice(src),
                    op => {
                        for (d, s) in dst.chunks_exact_mut(vl).zip(src.chunks_exact(vl)) {
                            op.apply(d, s);
                        }
                    }
                }
            });
        Ok(())
    }

    /// Sum of squared magnitudes, reduced outer-major then lane-minor.
    pub fn norm2(&self) -> f64 {
        let partials: Vec<CompensatedSum> = self
            .data
            .par_chunks(self.outer_block())
            .map(|chunk| {
                let mut s = CompensatedSum::default();
                for v in chunk {
                    let v = v.to_f64();
                    s.add(v * v);
                }
                s
            })
            .collect();
        partials
            .into_iter()
            .fold(CompensatedSum::default(), |acc, p| acc.merge(p))
            .value()
    }

    /// `sum conj(self) * other` over all sites and dofs.
    pub fn inner_product(&self, other: &Self) -> Result<Complex64> {
        self.check_same_shape(other)?;
        let block = self.outer_block();
        let complex = self.kind.is_complex();
        let partials: Vec<(CompensatedSum, CompensatedSum)> = self
            .data
            .par_chunks(block)
            .zip(other.data.par_chunks(block))
            .map(|(a, b)| {
                let mut re = CompensatedSum::default();
                let mut im = CompensatedSum::default();
                if complex {
                    for (x, y) in a.chunks_exact(2).zip(b.chunks_exact(2)) {
                        let (xr, xi, yr, yi) =
                            (x[0].to_f64(), x[1].to_f64(), y[0].to_f64(), y[1].to_f64());
                        re.add(xr * yr + xi * yi);
                        im.add(xr * yi - xi * yr);
                    }
                } else {
                    for (x, y) in a.iter().zip(b) {
                        re.add(x.to_f64() * y.to_f64());
                    }
                }
                (re, im)
            })
            .collect();
        let (re, im) = partials.into_iter().fold(
            (CompensatedSum::default(), CompensatedSum::default()),
            |(ar, ai), (br, bi)| (ar.merge(br), ai.merge(bi)),
        );
        Ok(Complex64::new(re.value(), im.value()))
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.dg != other.dg || self.dof != other.dof || self.kind != other.kind {
            return Err(Error::ShapeMismatch(format!(
                "{} {} x{} {} vs {} {} x{} {}",
                self.dg.geometry(),
                self.dg.layout(),
                self.dof,
                self.kind,
                other.dg.geometry(),
                other.dg.layout(),
                other.dof,
                other.kind
            )));
        }
        Ok(())
    }

    /// Writes the dump format: a header line followed by little-endian
    /// doubles in site order.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "veclat v1 {} {} {} {}",
            self.dg.geometry(),
            self.dg.layout(),
            self.dof,
            self.kind
        )?;
        for v in self.to_scalar().data {
            w.write_all(&v.to_f64().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn dump_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_dump(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }

    /// FNV-1a 64 over the full dump stream, header included.
    pub fn dump_checksum(&self) -> u64 {
        fnv1a(&self.dump_bytes())
    }

    /// Layout-independent checksum of the field contents, see
    /// [`ScalarField::content_checksum`].
    pub fn content_checksum(&self) -> u64 {
        self.to_scalar().content_checksum()
    }

    pub fn read_dump<R: BufRead>(mut r: R) -> Result<Self> {
        let mut header = String::new();
        r.read_line(&mut header)?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 6 || parts[0] != "veclat" || parts[1] != "v1" {
            return Err(Error::Parse(format!(
                "bad dump header `{}`",
                header.trim_end()
            )));
        }
        let geometry: LatticeGeometry = parts[2].parse()?;
        let layout: SimdLayout = parts[3].parse()?;
        let dof: usize = parts[4]
            .parse()
            .map_err(|_| Error::Parse(format!("bad dof count `{}`", parts[4])))?;
        let kind: ScalarKind = parts[5].parse()?;
        let dg = DecomposedGeometry::new(&geometry, &layout)?;
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        let expected = geometry.volume() * dof * kind.element_width();
        if body.len() != expected * 8 {
            return Err(Error::Parse(format!(
                "dump body has {} bytes, expected {}",
                body.len(),
                expected * 8
            )));
        }
        let data = body
            .chunks_exact(8)
            .map(|b| T::from_f64(f64::from_le_bytes(b.try_into().unwrap())))
            .collect();
        let sf = ScalarField {
            geometry,
            dof,
            kind,
            data,
        };
        Self::from_scalar(&sf, &dg)
    }
}

/// Dense site-ordered field: `data[(site * dof + c) * ew + e]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T> {
    geometry: LatticeGeometry,
    dof: usize,
    kind: ScalarKind,
    data: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn zeros(geometry: &LatticeGeometry, dof: usize, kind: ScalarKind) -> Result<Self> {
        kind.check_storage::<T>()?;
        Ok(Self {
            geometry: geometry.clone(),
            dof,
            kind,
            data: alloc(geometry.volume() * dof * kind.element_width())?,
        })
    }

    pub fn random(
        geometry: &LatticeGeometry,
        dof: usize,
        kind: ScalarKind,
        seed: u64,
    ) -> Result<Self> {
        let mut sf = Self::zeros(geometry, dof, kind)?;
        let mut rng = FieldRng::new(seed);
        for v in &mut sf.data {
            *v = T::from_f64(rng.symmetric());
        }
        Ok(sf)
    }

    pub fn from_vec(
        geometry: &LatticeGeometry,
        dof: usize,
        kind: ScalarKind,
        data: Vec<T>,
    ) -> Result<Self> {
        kind.check_storage::<T>()?;
        if data.len() != geometry.volume() * dof * kind.element_width() {
            return Err(Error::ShapeMismatch(format!(
                "{} values cannot fill {} sites x {} dofs of {}",
                data.len(),
                geometry.volume(),
                dof,
                kind
            )));
        }
        Ok(Self {
            geometry: geometry.clone(),
            dof,
            kind,
            data,
        })
    }

    pub fn geometry(&self) -> &LatticeGeometry {
        &self.geometry
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn kind(&self) -> ScalarKind {
        self.kind
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Reals of one site.
    pub fn site(&self, index: usize) -> &[T] {
        let b = self.dof * self.kind.element_width();
        &self.data[index * b..(index + 1) * b]
    }

    pub fn site_mut(&mut self, index: usize) -> &mut [T] {
        let b = self.dof * self.kind.element_width();
        &mut self.data[index * b..(index + 1) * b]
    }

    /// Brute-force periodic shift, site by site.
    pub fn cshift_oracle(&self, dim: usize, displacement: isize) -> Result<Self> {
        let dims = self.geometry.dims();
        if dim >= dims {
            return Err(Error::DimOutOfRange { dim, dims });
        }
        let extent = self.geometry.extent(dim) as isize;
        let mut out = Self::zeros(&self.geometry, self.dof, self.kind)?;
        for site in 0..self.geometry.volume() {
            let mut x = self.geometry.site_coord(site).0;
            x[dim] = (x[dim] as isize + displacement).rem_euclid(extent) as usize;
            let src = self.geometry.site_index(&x)?;
            out.site_mut(site).copy_from_slice(self.site(src));
        }
        Ok(out)
    }

    /// FNV-1a 64 over the little-endian doubles in site order, each value
    /// rounded to 44 mantissa bits first so that last-bit differences in
    /// kernel results do not change the checksum.
    pub fn content_checksum(&self) -> u64 {
        let mut h = FnvHasher::default();
        for v in &self.data {
            h.write(&round_for_checksum(v.to_f64()).to_le_bytes());
        }
        h.finish()
    }
}

/// Rounds the magnitude to the nearest multiple of 2^8 ulp and maps `-0.0`
/// to `0.0`.
pub fn round_for_checksum(v: f64) -> f64 {
    if !v.is_finite() {
        return v;
    }
    const SIGN: u64 = 1 << 63;
    let bits = v.to_bits();
    let magnitude = ((bits & !SIGN) + 0x80) & !0xff;
    if magnitude == 0 {
        return 0.0;
    }
    f64::from_bits(magnitude | (bits & SIGN))
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn merge(mut self, other: Self) -> Self {
        self.add(other.sum);
        self.add(other.carry);
        self
    }

    pub(crate) fn value(self) -> f64 {
        self.sum + self.carry
    }
}
