//! Timed training iterations of a composed network.

use fftconv::init::{uniform_tensor, Role};
use fftconv::stack::{LayerStack, NetworkParams, NetworkSpec};
use fftconv::Real;

use crate::{Format, Method, Stats};

pub const STAGES: [&str; 4] = ["updateOutput", "updateGradInput", "accGradParameters", "Total"];

#[derive(Debug, Clone)]
pub struct NetOptions {
    pub methods: Vec<Method>,
    pub iters: usize,
    pub warmup: usize,
    pub threads: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetResult {
    pub method: Method,
    /// Per stage in [`STAGES`] order, milliseconds.
    pub stages: [Stats; 4],
    /// Loss of the last iteration.
    pub loss: f64,
    pub iters: usize,
    pub threads: usize,
    pub seed: u64,
}

impl NetResult {
    pub fn total_ms(&self) -> f64 {
        self.stages[3].mean
    }
}

pub fn run_net<T: Real>(net: &NetworkSpec, opts: &NetOptions) -> fftconv::Result<Vec<NetResult>> {
    assert!(opts.iters >= 1, "iters must be at least 1");
    let (maps, n) = net.input_shape();
    let x = uniform_tensor::<T>(opts.seed, Role::Input, net.batch(), maps, n, n)?;
    let mut out = Vec::new();
    for &method in &opts.methods {
        let mut stack = LayerStack::new(net.clone(), NetworkParams::<T>::random(net, opts.seed))?;
        let engines = [method.engine()];
        for _ in 0..opts.warmup {
            stack.run_iteration(&engines, &x)?;
        }
        let mut samples: [Vec<f64>; 4] = Default::default();
        let mut loss = 0.0;
        for _ in 0..opts.iters {
            let r = stack.run_iteration(&engines, &x)?;
            for (s, (_, d)) in samples.iter_mut().zip(r.timings.rows()) {
                s.push(d.as_secs_f64() * 1e3);
            }
            loss = r.loss;
        }
        let stages = [0, 1, 2, 3].map(|i| Stats::of(&samples[i]));
        out.push(NetResult { method, stages, loss, iters: opts.iters, threads: opts.threads, seed: opts.seed });
    }
    Ok(out)
}

/// A row per method with mean milliseconds per stage.
pub fn render(results: &[NetResult], format: Format) -> String {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "method",
                "updateOutput_ms",
                "updateGradInput_ms",
                "accGradParameters_ms",
                "total_ms",
                "iters",
                "threads",
                "seed",
                "loss",
            ])
            .expect("in-memory csv");
            for r in results {
                let mut rec = vec![r.method.to_string()];
                rec.extend(r.stages.iter().map(|s| s.mean.to_string()));
                rec.extend([r.iters.to_string(), r.threads.to_string(), r.seed.to_string(), r.loss.to_string()]);
                w.write_record(rec).expect("in-memory csv");
            }
            String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
        }
        Format::Md => {
            let mut header = vec!["method".to_string()];
            header.extend(STAGES.iter().map(|s| s.to_string()));
            let mut t = fftconv::cost::Table::new(header);
            for r in results {
                let mut row = vec![r.method.to_string()];
                row.extend(r.stages.iter().map(|s| format!("{:.2}", s.mean)));
                t.push(row);
            }
            let mut out = String::new();
            if let Some(r) = results.first() {
                out.push_str(&format!("mean ms over {} iters, {} threads, seed {}\n\n", r.iters, r.threads, r.seed));
            }
            out.push_str(&t.to_markdown());
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_row_per_method() {
        let net = NetworkSpec::parse("batch 2\nconv 3 8 2 3\nrelu\npool\nfc 4\n", 1).unwrap();
        let opts = NetOptions { methods: vec![Method::Direct, Method::Fft], iters: 2, warmup: 0, threads: 1, seed: 4 };
        let r = run_net::<f64>(&net, &opts).unwrap();
        assert_eq!(r.len(), 2);
        assert!((r[0].loss - r[1].loss).abs() < 1e-9 * r[0].loss.abs().max(1.0));
        let md = render(&r, Format::Md);
        assert_eq!(md.lines().filter(|l| l.starts_with("|")).count(), 4);
        assert_eq!(render(&r, Format::Csv).lines().count(), 3);
    }
}
