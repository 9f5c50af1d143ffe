//! FFT-vs-direct equivalence sweeps.

use fftconv::direct::{forward_direct, grad_input_direct, grad_weight_direct};
use fftconv::fftconv::{forward_fft, grad_input_fft, grad_weight_fft, workspace_for};
use fftconv::init::{uniform_tensor, uniform_weights, Role};
use fftconv::tensor::max_rel_error;
use fftconv::{LayerConfig, Real};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Format, Op, Precision};

pub const DEFAULT_SIZES: [usize; 7] = [4, 5, 8, 12, 16, 27, 32];

/// Maximum relative error allowed for an operation at a precision.
pub fn tolerance(precision: Precision, op: Op) -> f64 {
    match (precision, op) {
        (Precision::F64, _) => 1e-10,
        (Precision::F32, Op::AccGradParameters) => 1e-3,
        (Precision::F32, _) => 1e-4,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyEntry {
    pub precision: Precision,
    pub op: Op,
    pub cases: usize,
    pub max_rel_err: f64,
    /// Config with the largest error.
    pub worst: Option<LayerConfig>,
    pub tolerance: f64,
}

impl VerifyEntry {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub entries: Vec<VerifyEntry>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(VerifyEntry::passed)
    }

    pub fn entry(&self, precision: Precision, op: Op) -> &VerifyEntry {
        self.entries.iter().find(|e| e.precision == precision && e.op == op).expect("every pair is reported")
    }

    pub fn render(&self, format: Format) -> String {
        let mut t =
            fftconv::cost::Table::new(["precision", "op", "cases", "max_rel_err", "tolerance", "worst", "status"]);
        for e in &self.entries {
            t.push([
                format!("{:?}", e.precision).to_lowercase(),
                e.op.to_string(),
                e.cases.to_string(),
                format!("{:.3e}", e.max_rel_err),
                format!("{:.0e}", e.tolerance),
                e.worst.map_or(String::new(), |c| format!("{c}").replace(',', " ")),
                if e.passed() { "ok" } else { "FAIL" }.to_string(),
            ]);
        }
        match format {
            Format::Csv => t.to_csv(),
            Format::Md => t.to_markdown(),
        }
    }
}

/// Several kernel sizes per width, with small random map counts and batch.
pub fn sweep_configs(seed: u64, sizes: &[usize]) -> Vec<LayerConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for &n in sizes {
        for k in [1, 3, 5, 7, 11].into_iter().filter(|&k| k <= n) {
            let (f, fp, s) = (rng.gen_range(1..=4), rng.gen_range(1..=4), rng.gen_range(1..=3));
            out.push(LayerConfig { k, n, f, f_prime: fp, batch: s });
        }
    }
    out
}

/// `count` configs drawn uniformly with `k <= n <= max_n`, `k <= max_k`,
/// batch up to `max_batch` and map counts up to `max_maps`.
pub fn random_configs(
    seed: u64,
    count: usize,
    max_n: usize,
    max_k: usize,
    max_batch: usize,
    max_maps: usize,
) -> Vec<LayerConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.gen_range(1..=max_n);
            let k = rng.gen_range(1..=max_k.min(n));
            LayerConfig {
                k,
                n,
                f: rng.gen_range(1..=max_maps),
                f_prime: rng.gen_range(1..=max_maps),
                batch: rng.gen_range(1..=max_batch),
            }
        })
        .collect()
}

/// Relative errors of the three FFT operations against the direct ones.
pub fn compare_config<T: Real>(c: &LayerConfig, seed: u64) -> fftconv::Result<[f64; 3]> {
    let no = c.out_size();
    let x = uniform_tensor::<T>(seed, Role::Input, c.batch, c.f, c.n, c.n)?;
    let w = uniform_weights::<T>(seed, Role::Weight, c.f_prime, c.f, c.k)?;
    let gy = uniform_tensor::<T>(seed, Role::OutputGrad, c.batch, c.f_prime, no, no)?;
    let mut ws = workspace_for::<T>(&[*c])?;
    let y = max_rel_error(forward_fft(&mut ws, &x, &w)?.data(), forward_direct(&x, &w)?.data());
    let gx = max_rel_error(grad_input_fft(&mut ws, &gy, &w)?.data(), grad_input_direct(&gy, &w)?.data());
    let gw = max_rel_error(grad_weight_fft(&mut ws, &gy, &x)?.data(), grad_weight_direct(&gy, &x)?.data());
    Ok([y, gx, gw])
}

/// Checks every config in both precisions.
pub fn verify_configs(configs: &[LayerConfig], seed: u64) -> fftconv::Result<VerifyReport> {
    let mut entries = Vec::new();
    for precision in [Precision::F32, Precision::F64] {
        let mut worst = [(0.0f64, None); 3];
        for c in configs {
            let errs = match precision {
                Precision::F32 => compare_config::<f32>(c, seed)?,
                Precision::F64 => compare_config::<f64>(c, seed)?,
            };
            for (slot, e) in worst.iter_mut().zip(errs) {
                // NaN counts as a failure, so it must win the comparison.
                if e.is_nan() || e > slot.0 {
                    *slot = (e, Some(*c));
                }
            }
        }
        for (op, (err, cfg)) in Op::ALL.into_iter().zip(worst) {
            entries.push(VerifyEntry {
                precision,
                op,
                cases: configs.len(),
                max_rel_err: err,
                worst: cfg,
                tolerance: tolerance(precision, op),
            });
        }
    }
    Ok(VerifyReport { entries })
}

pub fn cmd_verify(seed: u64, sizes: &[usize]) -> fftconv::Result<VerifyReport> {
    verify_configs(&sweep_configs(seed, sizes), seed)
}
