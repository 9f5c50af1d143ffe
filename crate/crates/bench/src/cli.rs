//! Argument parsing and dispatch for the `fftconv` binary.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fftconv::stack::NetworkSpec;
use fftconv::LayerConfig;

use crate::bench::{run_bench, BenchOptions};
use crate::model::{cmd_model, ModelOptions, DEFAULT_N_VALUES};
use crate::net::{run_net, NetOptions};
use crate::verify::{cmd_verify, DEFAULT_SIZES};
use crate::{default_threads, parse_config, Format, MethodSelect, OpSelect, Precision};

#[derive(Debug, Parser)]
#[command(name = "fftconv", version, about = "FFT and direct convolution layers: verify, benchmark, model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Worker threads.
    #[arg(long, env = "FFTCONV_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Md)]
    pub format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check FFT results against the direct method over a size sweep.
    Verify {
        /// Input widths to sweep.
        #[arg(long, value_delimiter = ',', num_args = 0.., default_values_t = DEFAULT_SIZES)]
        sizes: Vec<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Time the layer operations for one configuration.
    Bench {
        /// k,n,f,fp
        #[arg(long, value_parser = parse_config)]
        config: LayerConfig,
        #[arg(long, default_value_t = 1)]
        batch: usize,
        #[arg(long, value_enum, default_value_t = OpSelect::All)]
        op: OpSelect,
        #[arg(long, value_enum, default_value_t = MethodSelect::Both)]
        method: MethodSelect,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        iters: u64,
        #[arg(long, default_value_t = 3)]
        warmup: usize,
        #[arg(long, value_enum, default_value_t = Precision::F32)]
        precision: Precision,
        /// Treat the layer as the first one and skip updateGradInput.
        #[arg(long)]
        first_layer: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Time full training iterations of a network.
    Net {
        /// Built-in network: paper-net or paper-net-small.
        #[arg(long, conflicts_with = "spec")]
        preset: Option<String>,
        /// Network description file.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Overrides the network's batch size.
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long, value_enum, default_value_t = MethodSelect::Both)]
        method: MethodSelect,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        iters: u64,
        #[arg(long, default_value_t = 3)]
        warmup: usize,
        #[arg(long, value_enum, default_value_t = Precision::F32)]
        precision: Precision,
        #[command(flatten)]
        common: Common,
    },
    /// Print operation-count and memory estimates.
    Model {
        #[arg(long)]
        ram_table: bool,
        #[arg(long)]
        crossover: bool,
        /// k,n,f,fp; prints operation counts and memory for this layer.
        #[arg(long, value_parser = parse_config)]
        config: Option<LayerConfig>,
        /// Batch for --config.
        #[arg(long, default_value_t = 128)]
        batch: usize,
        #[arg(long, default_value_t = 7)]
        k: usize,
        #[arg(long, default_value_t = 96)]
        f: usize,
        #[arg(long, default_value_t = 256)]
        fp: usize,
        /// Batch for --crossover.
        #[arg(long = "S", default_value_t = 128)]
        s: usize,
        /// FFT cost constant.
        #[arg(long = "C", default_value_t = fftconv::cost::DEFAULT_C)]
        c: f64,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_N_VALUES)]
        n_values: Vec<usize>,
        /// Round transform sizes up to a power of two.
        #[arg(long)]
        pow2: bool,
        #[command(flatten)]
        common: Common,
    },
}

/// What a command produced and whether it succeeded.
#[derive(Debug)]
pub struct Outcome {
    pub report: String,
    pub ok: bool,
    pub out: Option<PathBuf>,
}

fn in_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().context("building thread pool")?;
    Ok(pool.install(f))
}

fn threads_of(c: &Common) -> Result<usize> {
    match c.threads {
        Some(0) => bail!("--threads must be at least 1"),
        Some(t) => Ok(t),
        None => Ok(default_threads()),
    }
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Verify { sizes, common } => {
            let threads = threads_of(&common)?;
            let report = in_pool(threads, || cmd_verify(common.seed, &sizes))??;
            Ok(Outcome { report: report.render(common.format), ok: report.passed(), out: common.out })
        }
        Command::Bench { config, batch, op, method, iters, warmup, precision, first_layer, common } => {
            let threads = threads_of(&common)?;
            let mut opts = BenchOptions::new(config.with_batch(batch));
            opts.ops = op.ops();
            opts.methods = method.methods();
            opts.iters = iters as usize;
            opts.warmup = warmup;
            opts.threads = threads;
            opts.seed = common.seed;
            opts.first_layer |= first_layer;
            let rows = in_pool(threads, || match precision {
                Precision::F32 => run_bench::<f32>(&opts),
                Precision::F64 => run_bench::<f64>(&opts),
            })??;
            Ok(Outcome { report: crate::bench::render(&rows, common.format), ok: true, out: common.out })
        }
        Command::Net { preset, spec, batch, method, iters, warmup, precision, common } => {
            let threads = threads_of(&common)?;
            let mut net = match (preset, spec) {
                (Some(name), _) => NetworkSpec::preset(&name)?,
                (None, Some(path)) => {
                    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    NetworkSpec::parse(&text, 1)?
                }
                (None, None) => bail!("net needs --preset or --spec"),
            };
            if let Some(b) = batch {
                net = net.with_batch(b)?;
            }
            let opts =
                NetOptions { methods: method.methods(), iters: iters as usize, warmup, threads, seed: common.seed };
            let results = in_pool(threads, || match precision {
                Precision::F32 => run_net::<f32>(&net, &opts),
                Precision::F64 => run_net::<f64>(&net, &opts),
            })??;
            Ok(Outcome { report: crate::net::render(&results, common.format), ok: true, out: common.out })
        }
        Command::Model { ram_table, crossover, config, batch, k, f, fp, s, c, n_values, pow2, common } => {
            if c.is_nan() || c <= 0.0 {
                bail!("--C must be positive");
            }
            let opts = ModelOptions {
                ram_table,
                crossover,
                config: config.map(|cfg| cfg.with_batch(batch)),
                k,
                f,
                f_prime: fp,
                batch: s,
                c,
                n_values,
                pow2,
            };
            let sections = cmd_model(&opts);
            Ok(Outcome { report: crate::model::render(&sections, common.format), ok: true, out: common.out })
        }
    }
}
