//! Lattice geometry, SIMD layouts and the site <-> (outer index, lane) map.
//!
//! A lattice of extents `L_i` is folded into sublattices of `n` sites, where
//! `n` is the product of the layout entries `n_i`. Each dimension is split as
//! `x_i = o_i + O_i * i_i` with `O_i = L_i / n_i`: the outer coordinate `o_i`
//! selects the sublattice, the inner coordinate `i_i` selects the lane. Sites
//! sharing an outer index are therefore `O_i` apart, so neighbouring sites
//! always live in different sublattices.
//!
//! Both outer indices and lanes are ordered with dimension 0 varying fastest.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Extents of a periodic lattice.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LatticeGeometry {
    extents: Vec<usize>,
    volume: usize,
}

impl LatticeGeometry {
    pub fn new(extents: &[usize]) -> Result<Self> {
        if extents.is_empty() || extents.contains(&0) {
            return Err(Error::InvalidGeometry(extents.to_vec()));
        }
        Ok(Self {
            extents: extents.to_vec(),
            volume: extents.iter().product(),
        })
    }

    pub fn dims(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn extent(&self, dim: usize) -> usize {
        self.extents[dim]
    }

    pub fn volume(&self) -> usize {
        self.volume
    }

    /// Lexicographic site index, dimension 0 fastest.
    pub fn site_index(&self, x: &[usize]) -> Result<usize> {
        self.check_coord(x)?;
        Ok(lex_index(x, &self.extents))
    }

    pub fn site_coord(&self, index: usize) -> SiteCoord {
        SiteCoord(lex_coord(index, &self.extents))
    }

    pub(crate) fn check_coord(&self, x: &[usize]) -> Result<()> {
        if x.len() != self.dims() || x.iter().zip(&self.extents).any(|(&c, &l)| c >= l) {
            return Err(Error::CoordOutOfRange {
                coord: x.to_vec(),
                extents: self.extents.clone(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for LatticeGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_dotted(f, &self.extents)
    }
}

impl FromStr for LatticeGeometry {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::new(&parse_dotted(s)?)
    }
}

/// Per-dimension lane counts of a Grid-array.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SimdLayout {
    lanes: Vec<usize>,
}

impl SimdLayout {
    pub fn new(lanes: &[usize]) -> Result<Self> {
        if lanes.is_empty() {
            return Err(Error::DimensionMismatch { dims: 0, layout: 0 });
        }
        if let Some((dim, &value)) = lanes.iter().enumerate().find(|(_, v)| !v.is_power_of_two()) {
            return Err(Error::NonPowerOfTwoLane { dim, value });
        }
        Ok(Self {
            lanes: lanes.to_vec(),
        })
    }

    /// All-ones layout: one site per Grid-array.
    pub fn unit(dims: usize) -> Self {
        Self {
            lanes: vec![1; dims.max(1)],
        }
    }

    pub fn lanes(&self) -> &[usize] {
        &self.lanes
    }

    pub fn total_lanes(&self) -> usize {
        self.lanes.iter().product()
    }

    pub fn dims(&self) -> usize {
        self.lanes.len()
    }
}

impl fmt::Display for SimdLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_dotted(f, &self.lanes)
    }
}

impl FromStr for SimdLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::new(&parse_dotted(s)?)
    }
}

/// Coordinates of one lattice site.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SiteCoord(pub Vec<usize>);

impl std::ops::Deref for SiteCoord {
    type Target = [usize];

    fn deref(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for SiteCoord {
    fn from(v: Vec<usize>) -> Self {
        SiteCoord(v)
    }
}

/// A geometry together with a layout that fits it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DecomposedGeometry {
    geometry: LatticeGeometry,
    layout: SimdLayout,
    outer_extents: Vec<usize>,
    outer_volume: usize,
}

/// Checks that `layout` fits `geometry` and computes the outer extents.
pub fn validate(geometry: &LatticeGeometry, layout: &SimdLayout) -> Result<DecomposedGeometry> {
    if layout.dims() != geometry.dims() {
        return Err(Error::DimensionMismatch {
            dims: geometry.dims(),
            layout: layout.dims(),
        });
    }
    let mut outer_extents = Vec::with_capacity(geometry.dims());
    for (dim, (&extent, &lanes)) in geometry.extents().iter().zip(layout.lanes()).enumerate() {
        if extent % lanes != 0 {
            return Err(Error::LaneExceedsExtent { dim, lanes, extent });
        }
        outer_extents.push(extent / lanes);
    }
    let outer_volume = outer_extents.iter().product();
    Ok(DecomposedGeometry {
        geometry: geometry.clone(),
        layout: layout.clone(),
        outer_extents,
        outer_volume,
    })
}

impl DecomposedGeometry {
    pub fn new(geometry: &LatticeGeometry, layout: &SimdLayout) -> Result<Self> {
        validate(geometry, layout)
    }

    /// Builds geometry and layout from raw slices, reporting the first error.
    pub fn from_extents(extents: &[usize], layout: &[usize]) -> Result<Self> {
        let geometry = LatticeGeometry::new(extents)?;
        let layout = SimdLayout::new(layout)?;
        validate(&geometry, &layout)
    }

    pub fn geometry(&self) -> &LatticeGeometry {
        &self.geometry
    }

    pub fn layout(&self) -> &SimdLayout {
        &self.layout
    }

    pub fn dims(&self) -> usize {
        self.geometry.dims()
    }

    pub fn outer_extents(&self) -> &[usize] {
        &self.outer_extents
    }

    pub fn outer_volume(&self) -> usize {
        self.outer_volume
    }

    pub fn lanes(&self) -> usize {
        self.layout.total_lanes()
    }

    pub fn volume(&self) -> usize {
        self.geometry.volume()
    }

    /// Stride of dimension `dim` in the outer index.
    pub fn outer_stride(&self, dim: usize) -> usize {
        self.outer_extents[..dim].iter().product()
    }

    /// Stride of dimension `dim` in the lane index.
    pub fn lane_stride(&self, dim: usize) -> usize {
        self.layout.lanes()[..dim].iter().product()
    }

    pub fn site_to_vector(&self, x: &[usize]) -> Result<(usize, usize)> {
        self.geometry.check_coord(x)?;
        let mut outer = 0;
        let mut lane = 0;
        for dim in (0..self.dims()).rev() {
            let o_ext = self.outer_extents[dim];
            outer = outer * o_ext + x[dim] % o_ext;
            lane = lane * self.layout.lanes()[dim] + x[dim] / o_ext;
        }
        Ok((outer, lane))
    }

    pub fn vector_to_site(&self, outer: usize, lane: usize) -> Result<SiteCoord> {
        if outer >= self.outer_volume || lane >= self.lanes() {
            return Err(Error::IndexOutOfRange {
                outer,
                lane,
                outer_volume: self.outer_volume,
                lanes: self.lanes(),
            });
        }
        let o = lex_coord(outer, &self.outer_extents);
        let i = lex_coord(lane, self.layout.lanes());
        Ok(SiteCoord(
            o.iter()
                .zip(&i)
                .zip(&self.outer_extents)
                .map(|((&o, &i), &ext)| o + ext * i)
                .collect(),
        ))
    }

    /// Lexicographic site index of `(outer, lane)` without bounds checks
    /// beyond debug assertions.
    pub(crate) fn site_index_of(&self, mut outer: usize, mut lane: usize) -> usize {
        debug_assert!(outer < self.outer_volume && lane < self.lanes());
        let extents = self.geometry.extents();
        let mut index = 0;
        let mut stride = 1;
        for dim in 0..self.dims() {
            let o_ext = self.outer_extents[dim];
            let n = self.layout.lanes()[dim];
            let x = outer % o_ext + o_ext * (lane % n);
            outer /= o_ext;
            lane /= n;
            index += x * stride;
            stride *= extents[dim];
        }
        index
    }
}

/// Every layout with `n` total lanes whose entries are powers of two dividing
/// the extents, in lexicographic order.
pub fn enumerate_layouts(geometry: &LatticeGeometry, n: usize) -> Vec<SimdLayout> {
    let mut out = Vec::new();
    if !n.is_power_of_two() {
        return out;
    }
    let mut current = Vec::with_capacity(geometry.dims());
    collect_layouts(geometry.extents(), n, &mut current, &mut out);
    out
}

fn collect_layouts(
    extents: &[usize],
    remaining: usize,
    current: &mut Vec<usize>,
    out: &mut Vec<SimdLayout>,
) {
    let dim = current.len();
    if dim == extents.len() {
        if remaining == 1 {
            out.push(SimdLayout {
                lanes: current.clone(),
            });
        }
        return;
    }
    let mut lanes = 1;
    while lanes <= remaining {
        if extents[dim] % lanes == 0 {
            current.push(lanes);
            collect_layouts(extents, remaining / lanes, current, out);
            current.pop();
        }
        lanes *= 2;
    }
}

fn lex_index(x: &[usize], extents: &[usize]) -> usize {
    x.iter()
        .zip(extents)
        .rev()
        .fold(0, |acc, (&c, &l)| acc * l + c)
}

fn lex_coord(mut index: usize, extents: &[usize]) -> Vec<usize> {
    extents
        .iter()
        .map(|&l| {
            let c = index % l;
            index /= l;
            c
        })
        .collect()
}

fn write_dotted(f: &mut fmt::Formatter<'_>, values: &[usize]) -> fmt::Result {
    for (k, v) in values.iter().enumerate() {
        if k > 0 {
            f.write_str(".")?;
        }
        write!(f, "{v}")?;
    }
    Ok(())
}

/// Parses `8.8.8.8` style lists.
pub fn parse_dotted(s: &str) -> Result<Vec<usize>> {
    s.trim()
        .split('.')
        .map(|p| {
            p.parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad extent list `{s}`")))
        })
        .collect()
}
