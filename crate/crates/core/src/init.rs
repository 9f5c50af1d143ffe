//! Deterministic uniform inputs keyed by `(seed, role)`, so every method
//! under comparison consumes bit-identical tensors.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::scalar::Real;
use crate::tensor::{RealTensor4, WeightTensor4};

/// Which tensor a generated stream feeds. Each role draws from its own
/// ChaCha stream so adding a role never perturbs another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Input,
    Weight,
    OutputGrad,
    /// Per-layer parameters of a layer stack, indexed by position.
    Layer(u32),
    FcWeight,
    FcBias,
}

impl Role {
    fn stream(self) -> u64 {
        match self {
            Role::Input => 1,
            Role::Weight => 2,
            Role::OutputGrad => 3,
            Role::FcWeight => 4,
            Role::FcBias => 5,
            Role::Layer(i) => 0x100 + i as u64,
        }
    }
}

/// Fills `len` values uniform in `[-1, 1]`. Values are drawn in `f64` and
/// rounded, so `f32` and `f64` runs see the same inputs up to rounding.
pub fn uniform_values<T: Real>(seed: u64, role: Role, len: usize) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(role.stream());
    let dist = Uniform::new_inclusive(-1.0f64, 1.0);
    (0..len).map(|_| T::from_f64_lossy(dist.sample(&mut rng))).collect()
}

pub fn uniform_tensor<T: Real>(
    seed: u64,
    role: Role,
    batch: usize,
    maps: usize,
    rows: usize,
    cols: usize,
) -> Result<RealTensor4<T>> {
    RealTensor4::from_vec(batch, maps, rows, cols, uniform_values(seed, role, batch * maps * rows * cols))
}

pub fn uniform_weights<T: Real>(
    seed: u64,
    role: Role,
    out_maps: usize,
    in_maps: usize,
    k: usize,
) -> Result<WeightTensor4<T>> {
    WeightTensor4::from_vec(out_maps, in_maps, k, uniform_values(seed, role, out_maps * in_maps * k * k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<f64> = uniform_values(7, Role::Input, 64);
        let b: Vec<f64> = uniform_values(7, Role::Input, 64);
        let c: Vec<f64> = uniform_values(7, Role::Weight, 64);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn precisions_agree_up_to_rounding() {
        let a: Vec<f64> = uniform_values(3, Role::OutputGrad, 32);
        let b: Vec<f32> = uniform_values(3, Role::OutputGrad, 32);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(*x as f32, *y);
        }
    }
}
