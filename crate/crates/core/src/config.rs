use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// One convolution workload: kernel width `k`, input width `n`, input maps
/// `f`, output maps `f_prime` and minibatch size `batch`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LayerConfig {
    pub k: usize,
    pub n: usize,
    pub f: usize,
    pub f_prime: usize,
    pub batch: usize,
}

impl LayerConfig {
    pub fn new(k: usize, n: usize, f: usize, f_prime: usize, batch: usize) -> Result<Self> {
        let cfg = LayerConfig { k, n, f, f_prime, batch };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.n {
            return Err(Error::Config(format!("kernel width {} must be in 1..={} (input width)", self.k, self.n)));
        }
        if self.f == 0 || self.f_prime == 0 || self.batch == 0 {
            return Err(Error::Config(format!("map and batch counts must be positive in {self}")));
        }
        Ok(())
    }

    /// Output width `n - k + 1`.
    pub fn out_size(&self) -> usize {
        self.n - self.k + 1
    }

    /// Transform size used by the FFT path: the next power of two at or above `n`.
    pub fn fft_size(&self) -> usize {
        self.n.next_power_of_two()
    }

    pub fn with_batch(mut self, batch: usize) -> Self {
        self.batch = batch;
        self
    }
}

impl fmt::Display for LayerConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{}) S={}", self.k, self.n, self.f, self.f_prime, self.batch)
    }
}

/// Parses `k,n,f,fp` with batch 1; callers set the batch separately.
impl FromStr for LayerConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::Config(format!("expected k,n,f,fp but got {s:?}")));
        }
        let mut vals = [0usize; 4];
        for (slot, p) in vals.iter_mut().zip(&parts) {
            *slot = p.parse().map_err(|_| Error::Config(format!("{p:?} is not a non-negative integer")))?;
        }
        LayerConfig::new(vals[0], vals[1], vals[2], vals[3], 1)
    }
}

/// The five layer configurations of the reference network, minibatch 128.
pub fn reference_layers() -> [LayerConfig; 5] {
    [
        LayerConfig { k: 11, n: 32, f: 3, f_prime: 96, batch: 128 },
        LayerConfig { k: 7, n: 32, f: 96, f_prime: 256, batch: 128 },
        LayerConfig { k: 5, n: 16, f: 256, f_prime: 384, batch: 128 },
        LayerConfig { k: 5, n: 16, f: 384, f_prime: 384, batch: 128 },
        LayerConfig { k: 3, n: 16, f: 384, f_prime: 384, batch: 128 },
    ]
}
