//! Benchmark harness: runs one kernel over one or many layouts and reports
//! timings, throughput and a checksum of the result.
//!
//! The checksum is [`ScalarField::content_checksum`](crate::ScalarField::content_checksum)
//! of the kernel output, so it does not depend on layout or thread count and
//! every timing run doubles as a correctness run.

use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Init, LatticeField};
use crate::geometry::{enumerate_layouts, DecomposedGeometry, LatticeGeometry, SimdLayout};
use crate::kernels::{
    random_su3, su3_mmul_into, GaugeField, SpinorField, Su3Field, WilsonDirac, SU3_FLOPS_FORMULA,
    SU3_FLOPS_PER_SITE, WILSON_FLOPS_FORMULA, WILSON_FLOPS_PER_SITE,
};
use crate::vecperm::{
    permute_block, shift_permutation_params, LaneOp, ScalarKind, ShiftImpl, ShiftPlan,
};

pub const CSV_HEADER: [&str; 11] = [
    "kernel", "extents", "layout", "lanes", "threads", "reps", "best_s", "mean_s", "gflops",
    "gbps", "checksum",
];

/// Largest lane count covered by an `auto` layout sweep.
pub const AUTO_MAX_LANES: usize = 256;

/// Degrees of freedom of the fields moved by the data-movement kernels.
const MOVE_DOF: usize = 12;

const DHOP_MASS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kernel {
    Su3,
    Dhop,
    Cshift,
    SplitRotate,
}

impl Kernel {
    pub fn name(self) -> &'static str {
        match self {
            Kernel::Su3 => "su3",
            Kernel::Dhop => "dhop",
            Kernel::Cshift => "cshift",
            Kernel::SplitRotate => "splitrotate",
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "su3" => Kernel::Su3,
            "dhop" => Kernel::Dhop,
            "cshift" => Kernel::Cshift,
            "splitrotate" => Kernel::SplitRotate,
            _ => return Err(Error::InvalidConfig(format!("unknown kernel `{s}`"))),
        })
    }
}

/// Work per lattice site for one kernel application.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlopCount {
    pub flops: u64,
    pub formula: &'static str,
    /// Bytes read plus bytes written per site; zero for arithmetic kernels.
    pub bytes: u64,
}

pub fn flops_per_site(kernel: Kernel) -> FlopCount {
    let moved = (MOVE_DOF * ScalarKind::ComplexDouble.value_bytes() * 2) as u64;
    match kernel {
        Kernel::Su3 => FlopCount {
            flops: SU3_FLOPS_PER_SITE,
            formula: SU3_FLOPS_FORMULA,
            bytes: 0,
        },
        Kernel::Dhop => FlopCount {
            flops: WILSON_FLOPS_PER_SITE,
            formula: WILSON_FLOPS_FORMULA,
            bytes: 0,
        },
        Kernel::Cshift | Kernel::SplitRotate => FlopCount {
            flops: 0,
            formula: "0",
            bytes: moved,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayoutChoice {
    Fixed(SimdLayout),
    /// Every layout with `n` in `1, 2, 4, ..., 256` lanes that fits.
    Auto,
}

impl FromStr for LayoutChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            Ok(LayoutChoice::Auto)
        } else {
            Ok(LayoutChoice::Fixed(s.parse()?))
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub kernel: Kernel,
    pub extents: LatticeGeometry,
    pub layout: LayoutChoice,
    pub threads: usize,
    pub reps: usize,
    pub warmup: usize,
    pub seed: u64,
    pub shift_impl: ShiftImpl,
    pub output: Option<PathBuf>,
}

impl BenchConfig {
    pub fn new(kernel: Kernel, extents: LatticeGeometry, layout: LayoutChoice) -> Self {
        Self {
            kernel,
            extents,
            layout,
            threads: 1,
            reps: 10,
            warmup: 1,
            seed: 42,
            shift_impl: ShiftImpl::SplitRotate,
            output: None,
        }
    }

    /// Decompositions this configuration will run, in order.
    pub fn layouts(&self) -> Result<Vec<DecomposedGeometry>> {
        if self.reps == 0 {
            return Err(Error::InvalidConfig("reps must be at least 1".into()));
        }
        if self.threads == 0 {
            return Err(Error::InvalidConfig("threads must be at least 1".into()));
        }
        if self.kernel == Kernel::Dhop && self.extents.dims() != 4 {
            return Err(Error::DimensionNotFour(self.extents.dims()));
        }
        let permute_only = self.shift_impl == ShiftImpl::Permute;
        match &self.layout {
            LayoutChoice::Fixed(layout) => {
                let dg = DecomposedGeometry::new(&self.extents, layout)?;
                if permute_only && layout.lanes().iter().any(|&n| n > 2) {
                    return Err(Error::PermuteUnsupported(layout.lanes().to_vec()));
                }
                Ok(vec![dg])
            }
            LayoutChoice::Auto => {
                let mut out = Vec::new();
                let mut n = 1;
                while n <= AUTO_MAX_LANES {
                    for layout in enumerate_layouts(&self.extents, n) {
                        if permute_only && layout.lanes().iter().any(|&v| v > 2) {
                            continue;
                        }
                        out.push(DecomposedGeometry::new(&self.extents, &layout)?);
                    }
                    n *= 2;
                }
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub kernel: String,
    pub extents: String,
    pub layout: String,
    pub lanes: usize,
    pub threads: usize,
    pub reps: usize,
    pub best_s: f64,
    pub mean_s: f64,
    pub gflops: f64,
    pub gbps: f64,
    pub checksum: String,
}

pub fn format_checksum(c: u64) -> String {
    format!("{c:016x}")
}

/// Warmup plus timed repetitions of `step`; returns `(best, mean)` seconds.
fn time_reps(
    warmup: usize,
    reps: usize,
    mut step: impl FnMut() -> Result<()>,
) -> Result<(f64, f64)> {
    for _ in 0..warmup {
        step()?;
    }
    let mut best = f64::INFINITY;
    let mut total = 0.0;
    for _ in 0..reps {
        let t = Instant::now();
        step()?;
        let dt = t.elapsed().as_secs_f64();
        best = best.min(dt);
        total += dt;
    }
    Ok((best, total / reps as f64))
}

/// Timed kernel runs plus the checksum of the final output.
struct Measurement {
    best_s: f64,
    mean_s: f64,
    checksum: u64,
}

fn measure(cfg: &BenchConfig, dg: &DecomposedGeometry) -> Result<Measurement> {
    let (warmup, reps, seed) = (cfg.warmup, cfg.reps, cfg.seed);
    let ((best_s, mean_s), checksum) = match cfg.kernel {
        Kernel::Su3 => {
            let a = random_su3(dg, seed)?;
            let b = random_su3(dg, seed.wrapping_add(1))?;
            let mut c = Su3Field::new(dg, Init::Zero)?;
            let t = time_reps(warmup, reps, || su3_mmul_into(&a, &b, &mut c))?;
            (t, c.field().content_checksum())
        }
        Kernel::Dhop => {
            let u = GaugeField::random(dg, seed)?;
            let psi = SpinorField::new(dg, Init::Random(seed.wrapping_add(1)))?;
            let op = WilsonDirac::new(dg, cfg.shift_impl)?;
            let mut out = SpinorField::new(dg, Init::Zero)?;
            let t = time_reps(warmup, reps, || {
                op.apply_into(&u, &psi, DHOP_MASS, &mut out)
            })?;
            (t, out.field().content_checksum())
        }
        Kernel::Cshift => {
            let f = LatticeField::<f64>::new(
                dg,
                MOVE_DOF,
                ScalarKind::ComplexDouble,
                Init::Random(seed),
            )?;
            let plan = ShiftPlan::new(dg, 0, 1, ScalarKind::ComplexDouble, cfg.shift_impl)?;
            let mut out = f.zeros_like()?;
            let t = time_reps(warmup, reps, || f.cshift_into(&plan, &mut out))?;
            (t, out.content_checksum())
        }
        Kernel::SplitRotate => {
            let f = LatticeField::<f64>::new(
                dg,
                MOVE_DOF,
                ScalarKind::ComplexDouble,
                Init::Random(seed),
            )?;
            let op = boundary_lane_op(dg, cfg.shift_impl)?;
            let mut out = f.zeros_like()?;
            let vl = f.vl();
            let t = time_reps(warmup, reps, || {
                use rayon::prelude::*;
                out.data_mut()
                    .par_chunks_mut(vl)
                    .with_min_len(64)
                    .zip(f.data().par_chunks(vl))
                    .for_each(|(d, s)| op.apply(d, s));
                Ok(())
            })?;
            (t, out.content_checksum())
        }
    };
    Ok(Measurement {
        best_s,
        mean_s,
        checksum,
    })
}

/// The lane rearrangement a unit forward shift needs at a sublattice boundary,
/// along the first dimension that has more than one lane.
fn boundary_lane_op(dg: &DecomposedGeometry, shift_impl: ShiftImpl) -> Result<LaneOp> {
    let kind = ScalarKind::ComplexDouble;
    let Some(dim) = dg.layout().lanes().iter().position(|&n| n > 1) else {
        return Ok(LaneOp::Copy);
    };
    let p = shift_permutation_params(dg, dim, 1, kind)?;
    Ok(match shift_impl {
        ShiftImpl::SplitRotate => LaneOp::SplitRotate { s: p.s, r: p.r },
        ShiftImpl::Permute => {
            if dg.layout().lanes().iter().any(|&n| n > 2) {
                return Err(Error::PermuteUnsupported(dg.layout().lanes().to_vec()));
            }
            let level = dg.lane_stride(dim).trailing_zeros() as usize;
            LaneOp::Permute {
                block: permute_block(dg.lanes() * kind.element_width(), kind, level)?,
            }
        }
    })
}

pub fn run_benchmark(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    let layouts = cfg.layouts()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start {} threads: {e}", cfg.threads)))?;
    let work = flops_per_site(cfg.kernel);
    pool.install(|| {
        layouts
            .iter()
            .map(|dg| {
                let m = measure(cfg, dg)?;
                let volume = dg.volume() as f64;
                Ok(BenchRow {
                    kernel: cfg.kernel.name().to_string(),
                    extents: dg.geometry().to_string(),
                    layout: dg.layout().to_string(),
                    lanes: dg.lanes(),
                    threads: cfg.threads,
                    reps: cfg.reps,
                    best_s: m.best_s,
                    mean_s: m.mean_s,
                    gflops: work.flops as f64 * volume / m.best_s / 1e9,
                    gbps: work.bytes as f64 * volume / m.best_s / 1e9,
                    checksum: format_checksum(m.checksum),
                })
            })
            .collect()
    })
}

pub fn write_csv<W: Write>(rows: &[BenchRow], w: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    wtr.write_record(CSV_HEADER).map_err(csv_err)?;
    for row in rows {
        wtr.serialize(row).map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn emit_csv(rows: &[BenchRow], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(rows, std::io::BufWriter::new(file))
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<BenchRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Parse(format!(
            "unexpected CSV header `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    rdr.deserialize()
        .map(|r| r.map_err(|e| Error::Parse(e.to_string())))
        .collect()
}
