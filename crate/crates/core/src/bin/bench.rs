//! Benchmark CLI, e.g.
//!
//! ```text
//! bench --kernel su3 --extents 8.8.8.8 --layout 2.2.2.2 --reps 10 --out su3.csv
//! ```

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use veclat::bench::{emit_csv, run_benchmark, write_csv, BenchConfig, Kernel, LayoutChoice};
use veclat::{Error, LatticeGeometry, ShiftImpl};

#[derive(Debug, Parser)]
#[command(
    name = "bench",
    about = "Lattice kernel benchmarks on virtual vectors of any width"
)]
struct Args {
    /// su3, dhop, cshift or splitrotate
    #[arg(long)]
    kernel: String,
    /// Lattice extents, e.g. 8.8.8.8
    #[arg(long, default_value = "8.8.8.8")]
    extents: String,
    /// SIMD layout such as 2.2.4.4, or `auto` to sweep 1..256 lanes
    #[arg(long, default_value = "auto")]
    layout: String,
    #[arg(long, env = "VECLAT_THREADS", default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// split_rotate or permute
    #[arg(long = "shift-impl", default_value = "split_rotate")]
    shift_impl: String,
    /// CSV output path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(args: Args) -> Result<(), Error> {
    let kernel: Kernel = args.kernel.parse()?;
    let extents: LatticeGeometry = args.extents.parse()?;
    let layout: LayoutChoice = args.layout.parse()?;
    let shift_impl: ShiftImpl = args.shift_impl.parse()?;
    let cfg = BenchConfig {
        kernel,
        extents,
        layout,
        threads: args.threads,
        reps: args.reps,
        warmup: args.warmup,
        seed: args.seed,
        shift_impl,
        output: args.out,
    };
    let rows = run_benchmark(&cfg)?;
    match &cfg.output {
        Some(path) => emit_csv(&rows, path),
        None => write_csv(&rows, std::io::stdout().lock()),
    }
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let detail = e.to_string();
            let first = detail
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            eprintln!("error: usage: {first}");
            return ExitCode::from(2);
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.code(), e);
            ExitCode::FAILURE
        }
    }
}
