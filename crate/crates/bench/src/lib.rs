//! Verification, timing and cost-model reports for the `fftconv` engines.
//! The `fftconv` binary is a thin clap front end over these functions.

pub mod bench;
pub mod cli;
pub mod model;
pub mod net;
pub mod verify;

use std::fmt;
use std::str::FromStr;

use clap::ValueEnum;

/// The three per-layer operations, named as in Torch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    UpdateOutput,
    UpdateGradInput,
    AccGradParameters,
}

impl Op {
    pub const ALL: [Op; 3] = [Op::UpdateOutput, Op::UpdateGradInput, Op::AccGradParameters];

    pub fn name(self) -> &'static str {
        match self {
            Op::UpdateOutput => "updateOutput",
            Op::UpdateGradInput => "updateGradInput",
            Op::AccGradParameters => "accGradParameters",
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `--op` values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OpSelect {
    Output,
    Gradinput,
    Gradweight,
    All,
}

impl OpSelect {
    pub fn ops(self) -> Vec<Op> {
        match self {
            OpSelect::Output => vec![Op::UpdateOutput],
            OpSelect::Gradinput => vec![Op::UpdateGradInput],
            OpSelect::Gradweight => vec![Op::AccGradParameters],
            OpSelect::All => Op::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, ValueEnum)]
pub enum Method {
    Direct,
    Fft,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Direct => "direct",
            Method::Fft => "fft",
        }
    }

    pub fn engine(self) -> fftconv::stack::Engine {
        match self {
            Method::Direct => fftconv::stack::Engine::Direct,
            Method::Fft => fftconv::stack::Engine::Fft,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `--method` values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodSelect {
    Direct,
    Fft,
    Both,
}

impl MethodSelect {
    pub fn methods(self) -> Vec<Method> {
        match self {
            MethodSelect::Direct => vec![Method::Direct],
            MethodSelect::Fft => vec![Method::Fft],
            MethodSelect::Both => vec![Method::Direct, Method::Fft],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    Csv,
    #[default]
    Md,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

/// Parses `k,n,f,fp`.
pub fn parse_config(s: &str) -> Result<fftconv::LayerConfig, String> {
    fftconv::LayerConfig::from_str(s).map_err(|e| e.to_string())
}

/// Number of worker threads: `FFTCONV_THREADS` or the machine's parallelism.
pub fn default_threads() -> usize {
    std::env::var("FFTCONV_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Summary statistics of a set of timings in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub median: f64,
}

impl Stats {
    pub fn of(samples: &[f64]) -> Stats {
        assert!(!samples.is_empty(), "no timing samples");
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len().is_multiple_of(2) { 0.5 * (sorted[mid - 1] + sorted[mid]) } else { sorted[mid] };
        Stats { mean, std: var.sqrt(), min: sorted[0], median }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_of_samples() {
        let s = Stats::of(&[3.0, 1.0, 2.0, 6.0]);
        assert_eq!(s.mean, 3.0);
        assert_eq!(s.min, 1.0);
        assert_eq!(s.median, 2.5);
        assert!((s.std - 1.870_828_693_386_970_7).abs() < 1e-12);
        assert_eq!(Stats::of(&[4.0]).std, 0.0);
    }

    #[test]
    fn selections_expand() {
        assert_eq!(OpSelect::All.ops().len(), 3);
        assert_eq!(MethodSelect::Both.methods(), vec![Method::Direct, Method::Fft]);
        assert!(parse_config("7,32,96,256").is_ok());
        assert!(parse_config("7,32").is_err());
    }
}
