//! Timed runs of single layer operations.

use std::fmt::Write as _;
use std::time::Instant;

use fftconv::direct::{forward_direct, grad_input_direct, grad_weight_direct};
use fftconv::fftconv::{forward_fft, grad_input_fft, grad_weight_fft, workspace_for};
use fftconv::init::{uniform_tensor, uniform_weights, Role};
use fftconv::{LayerConfig, Real, RealTensor4, WeightTensor4};
use serde::Serialize;

use crate::{Format, Method, Op, Stats};

/// The first reference layer, whose input gradient is never needed.
pub const FIRST_LAYER: (usize, usize, usize, usize) = (11, 32, 3, 96);

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub config: LayerConfig,
    pub ops: Vec<Op>,
    pub methods: Vec<Method>,
    pub iters: usize,
    pub warmup: usize,
    pub threads: usize,
    pub seed: u64,
    /// Skip updateGradInput; defaults to true for the first reference layer.
    pub first_layer: bool,
}

impl BenchOptions {
    pub fn new(config: LayerConfig) -> Self {
        let c = &config;
        let first_layer = (c.k, c.n, c.f, c.f_prime) == FIRST_LAYER;
        BenchOptions {
            config,
            ops: Op::ALL.to_vec(),
            methods: vec![Method::Direct, Method::Fft],
            iters: 10,
            warmup: 3,
            threads: 1,
            seed: 0,
            first_layer,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    /// `None` on the per-method total row.
    pub op: Option<Op>,
    pub method: Method,
    pub config: LayerConfig,
    pub iters: usize,
    pub warmup: usize,
    /// `None` when the operation was skipped.
    pub stats: Option<Stats>,
    /// Sum of the output elements.
    pub checksum: Option<f64>,
    pub threads: usize,
    pub seed: u64,
}

impl BenchResult {
    pub fn op_name(&self) -> &'static str {
        self.op.map_or("Total", Op::name)
    }

    pub fn skipped(&self) -> bool {
        self.stats.is_none()
    }
}

struct Inputs<T> {
    x: RealTensor4<T>,
    w: WeightTensor4<T>,
    gy: RealTensor4<T>,
}

impl<T: Real> Inputs<T> {
    fn new(c: &LayerConfig, seed: u64) -> fftconv::Result<Self> {
        let no = c.out_size();
        Ok(Inputs {
            x: uniform_tensor(seed, Role::Input, c.batch, c.f, c.n, c.n)?,
            w: uniform_weights(seed, Role::Weight, c.f_prime, c.f, c.k)?,
            gy: uniform_tensor(seed, Role::OutputGrad, c.batch, c.f_prime, no, no)?,
        })
    }
}

/// Runs one operation once and returns the sum of its output.
fn run_once<T: Real>(
    op: Op,
    method: Method,
    inp: &Inputs<T>,
    ws: &mut Option<fftconv::ConvWorkspace<T>>,
) -> fftconv::Result<f64> {
    Ok(match (op, method, ws) {
        (Op::UpdateOutput, Method::Direct, _) => forward_direct(&inp.x, &inp.w)?.sum(),
        (Op::UpdateGradInput, Method::Direct, _) => grad_input_direct(&inp.gy, &inp.w)?.sum(),
        (Op::AccGradParameters, Method::Direct, _) => grad_weight_direct(&inp.gy, &inp.x)?.sum(),
        (Op::UpdateOutput, Method::Fft, Some(ws)) => forward_fft(ws, &inp.x, &inp.w)?.sum(),
        (Op::UpdateGradInput, Method::Fft, Some(ws)) => grad_input_fft(ws, &inp.gy, &inp.w)?.sum(),
        (Op::AccGradParameters, Method::Fft, Some(ws)) => grad_weight_fft(ws, &inp.gy, &inp.x)?.sum(),
        (_, Method::Fft, None) => unreachable!("fft runs get a workspace"),
    })
}

/// Times every requested (op, method) pair, grouped by op then method, and
/// appends one total row per method.
pub fn run_bench<T: Real>(opts: &BenchOptions) -> fftconv::Result<Vec<BenchResult>> {
    assert!(opts.iters >= 1, "iters must be at least 1");
    opts.config.validate()?;
    let inp = Inputs::<T>::new(&opts.config, opts.seed)?;
    let mut ops = opts.ops.clone();
    ops.sort();
    ops.dedup();
    let mut methods = opts.methods.clone();
    methods.sort();
    methods.dedup();

    let row = |op, method, stats, checksum| BenchResult {
        op,
        method,
        config: opts.config,
        iters: opts.iters,
        warmup: opts.warmup,
        stats,
        checksum,
        threads: opts.threads,
        seed: opts.seed,
    };

    let mut rows = Vec::new();
    for &op in &ops {
        for &method in &methods {
            if op == Op::UpdateGradInput && opts.first_layer {
                rows.push(row(Some(op), method, None, None));
                continue;
            }
            let mut ws = match method {
                Method::Fft => Some(workspace_for::<T>(&[opts.config])?),
                Method::Direct => None,
            };
            for _ in 0..opts.warmup {
                run_once(op, method, &inp, &mut ws)?;
            }
            let mut samples = Vec::with_capacity(opts.iters);
            let mut checksum = 0.0;
            for _ in 0..opts.iters {
                let t0 = Instant::now();
                checksum = run_once(op, method, &inp, &mut ws)?;
                samples.push(t0.elapsed().as_secs_f64() * 1e3);
            }
            rows.push(row(Some(op), method, Some(Stats::of(&samples)), Some(checksum)));
        }
    }

    for &method in &methods {
        let timed: Vec<&BenchResult> = rows.iter().filter(|r| r.method == method && !r.skipped()).collect();
        let stats = (!timed.is_empty()).then(|| {
            let s: Vec<Stats> = timed.iter().filter_map(|r| r.stats).collect();
            Stats {
                mean: s.iter().map(|s| s.mean).sum(),
                std: s.iter().map(|s| s.std * s.std).sum::<f64>().sqrt(),
                min: s.iter().map(|s| s.min).sum(),
                median: s.iter().map(|s| s.median).sum(),
            }
        });
        let checksum = stats.map(|_| timed.iter().filter_map(|r| r.checksum).sum());
        rows.push(row(None, method, stats, checksum));
    }
    Ok(rows)
}

#[derive(Serialize)]
struct CsvRow<'a> {
    op: &'a str,
    method: &'a str,
    k: usize,
    n: usize,
    f: usize,
    fprime: usize,
    #[serde(rename = "S")]
    s: usize,
    iters: usize,
    threads: usize,
    seed: u64,
    mean_ms: Option<f64>,
    std_ms: Option<f64>,
    min_ms: Option<f64>,
    checksum: Option<f64>,
}

pub const CSV_HEADER: &str = "op,method,k,n,f,fprime,S,iters,threads,seed,mean_ms,std_ms,min_ms,checksum";

/// CSV rows; skipped operations leave the timing and checksum columns empty.
pub fn to_csv(rows: &[BenchResult]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        return format!("{CSV_HEADER}\n");
    }
    for r in rows {
        let c = &r.config;
        w.serialize(CsvRow {
            op: r.op_name(),
            method: r.method.name(),
            k: c.k,
            n: c.n,
            f: c.f,
            fprime: c.f_prime,
            s: c.batch,
            iters: r.iters,
            threads: r.threads,
            seed: r.seed,
            mean_ms: r.stats.map(|s| s.mean),
            std_ms: r.stats.map(|s| s.std),
            min_ms: r.stats.map(|s| s.min),
            checksum: r.checksum,
        })
        .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
}

/// One section per op, a row per method; the fastest mean in each section is bold.
pub fn to_markdown(rows: &[BenchResult]) -> String {
    let mut out = String::new();
    let Some(first) = rows.first() else { return out };
    let _ = writeln!(
        out,
        "{} ({} iters, {} warmup, {} threads, seed {})\n",
        first.config, first.iters, first.warmup, first.threads, first.seed
    );
    let mut t = fftconv::cost::Table::new(["op", "method", "mean_ms", "median_ms", "std_ms", "min_ms", "checksum"]);
    let mut i = 0;
    while i < rows.len() {
        let op = rows[i].op;
        let j = rows[i..].iter().position(|r| r.op != op).map_or(rows.len(), |p| i + p);
        let best = rows[i..j].iter().filter_map(|r| r.stats.map(|s| s.mean)).min_by(f64::total_cmp);
        for (n, r) in rows[i..j].iter().enumerate() {
            let label = if n == 0 { r.op_name().to_string() } else { String::new() };
            match r.stats {
                None => {
                    t.push([label, r.method.to_string(), "skipped".into(), "".into(), "".into(), "".into(), "".into()])
                }
                Some(s) => {
                    let mean = if Some(s.mean) == best && j - i > 1 {
                        format!("**{:.3}**", s.mean)
                    } else {
                        format!("{:.3}", s.mean)
                    };
                    t.push([
                        label,
                        r.method.to_string(),
                        mean,
                        format!("{:.3}", s.median),
                        format!("{:.3}", s.std),
                        format!("{:.3}", s.min),
                        format!("{:.6e}", r.checksum.unwrap_or(0.0)),
                    ]);
                }
            }
        }
        i = j;
    }
    out.push_str(&t.to_markdown());
    out
}

pub fn render(rows: &[BenchResult], format: Format) -> String {
    match format {
        Format::Csv => to_csv(rows),
        Format::Md => to_markdown(rows),
    }
}
