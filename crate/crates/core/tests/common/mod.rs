#![allow(dead_code)]

use fftconv::init::{uniform_tensor, uniform_weights, Role};
use fftconv::{Complex, RealTensor4, WeightTensor4};

pub fn naive_dft(x: &[Complex<f64>]) -> Vec<Complex<f64>> {
    let m = x.len();
    (0..m)
        .map(|u| {
            x.iter()
                .enumerate()
                .map(|(t, v)| {
                    let a = -2.0 * std::f64::consts::PI * ((u * t) % m) as f64 / m as f64;
                    v * Complex::new(a.cos(), a.sin())
                })
                .sum()
        })
        .collect()
}

/// Full `m x m` 2-D DFT of a real plane by direct summation.
pub fn naive_dft_2d(plane: &[f64], m: usize) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::new(0.0, 0.0); m * m];
    for u in 0..m {
        for v in 0..m {
            let mut acc = Complex::new(0.0, 0.0);
            for r in 0..m {
                for c in 0..m {
                    let a = -2.0 * std::f64::consts::PI * (((u * r + v * c) % m) as f64) / m as f64;
                    acc += Complex::new(a.cos(), a.sin()) * plane[r * m + c];
                }
            }
            out[u * m + v] = acc;
        }
    }
    out
}

/// Valid cross-correlation written straight from its index formula.
pub fn brute_forward(x: &RealTensor4<f64>, w: &WeightTensor4<f64>) -> RealTensor4<f64> {
    let (s, f, n, _) = x.dims();
    let (fp, _, k, _) = w.dims();
    let no = n - k + 1;
    let mut y = RealTensor4::zeros(s, fp, no, no).unwrap();
    for b in 0..s {
        for o in 0..fp {
            for i in 0..no {
                for j in 0..no {
                    let mut acc = 0.0;
                    for fi in 0..f {
                        for u in 0..k {
                            for v in 0..k {
                                acc += x.get(b, fi, i + u, j + v) * w.get(o, fi, u, v);
                            }
                        }
                    }
                    y.set(b, o, i, j, acc);
                }
            }
        }
    }
    y
}

pub fn random_layer(
    seed: u64,
    k: usize,
    n: usize,
    f: usize,
    fp: usize,
    s: usize,
) -> (RealTensor4<f64>, WeightTensor4<f64>, RealTensor4<f64>) {
    let no = n - k + 1;
    (
        uniform_tensor(seed, Role::Input, s, f, n, n).unwrap(),
        uniform_weights(seed, Role::Weight, fp, f, k).unwrap(),
        uniform_tensor(seed, Role::OutputGrad, s, fp, no, no).unwrap(),
    )
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
