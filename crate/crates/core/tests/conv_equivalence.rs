mod common;

use common::{brute_forward, random_layer, rel};
use fftconv::config::reference_layers;
use fftconv::cost::memory_bytes_packed;
use fftconv::direct::{forward_direct, grad_input_direct, grad_weight_direct};
use fftconv::fftconv::{forward_fft, grad_input_fft, grad_weight_fft, workspace_for};
use fftconv::init::{uniform_tensor, Role};
use fftconv::tensor::max_rel_error;
use fftconv::{LayerConfig, RealTensor4, WeightTensor4};
use proptest::prelude::*;

#[test]
fn forward_matches_brute_force() {
    for &(k, n, f, fp, s) in &[(1, 4, 1, 1, 1), (3, 7, 2, 3, 2), (5, 9, 3, 2, 1)] {
        let (x, w, _) = random_layer(5, k, n, f, fp, s);
        let y = forward_direct(&x, &w).unwrap();
        assert!(max_rel_error(y.data(), brute_forward(&x, &w).data()) < 1e-14);
    }
}

#[test]
fn adjoint_triple_holds() {
    for seed in 0..20u64 {
        let k = 1 + (seed as usize % 5);
        let n = k + (seed as usize * 7 % 9);
        let (f, fp, s) = (1 + seed as usize % 3, 1 + seed as usize % 4, 1 + seed as usize % 2);
        let (x, w, gy) = random_layer(seed, k, n, f, fp, s);
        let a = forward_direct(&x, &w).unwrap().dot(&gy).unwrap();
        let b = x.dot(&grad_input_direct(&gy, &w).unwrap()).unwrap();
        let c = w.dot(&grad_weight_direct(&gy, &x).unwrap()).unwrap();
        assert!(rel(a, b) < 1e-10 && rel(a, c) < 1e-10, "seed {seed}: {a} {b} {c}");
    }
}

#[test]
fn weight_gradient_matches_finite_differences() {
    let (x, w, gy) = random_layer(17, 3, 6, 2, 3, 2);
    let gw = grad_weight_direct(&gy, &x).unwrap();
    let loss = |w: &WeightTensor4<f64>| forward_direct(&x, w).unwrap().dot(&gy).unwrap();
    let eps = 1e-5;
    for idx in 0..w.data().len() {
        let mut plus = w.clone();
        plus.data_mut()[idx] += eps;
        let mut minus = w.clone();
        minus.data_mut()[idx] -= eps;
        let fd = (loss(&plus) - loss(&minus)) / (2.0 * eps);
        assert!(rel(fd, gw.data()[idx]) < 1e-6, "weight {idx}: fd {fd} vs {}", gw.data()[idx]);
    }
}

#[test]
fn batch_decomposes() {
    let (x, w, gy) = random_layer(23, 3, 8, 2, 3, 3);
    let y = forward_direct(&x, &w).unwrap();
    let gx = grad_input_direct(&gy, &w).unwrap();
    let gw = grad_weight_direct(&gy, &x).unwrap();
    let mut gw_sum = vec![0.0; gw.data().len()];
    for b in 0..3 {
        let xb = RealTensor4::from_vec(1, 2, 8, 8, [x.plane(b, 0), x.plane(b, 1)].concat()).unwrap();
        let gyb = RealTensor4::from_vec(1, 3, 6, 6, (0..3).flat_map(|o| gy.plane(b, o).to_vec()).collect()).unwrap();
        let yb = forward_direct(&xb, &w).unwrap();
        for o in 0..3 {
            assert_eq!(yb.plane(0, o), y.plane(b, o));
        }
        let gxb = grad_input_direct(&gyb, &w).unwrap();
        for fi in 0..2 {
            assert_eq!(gxb.plane(0, fi), gx.plane(b, fi));
        }
        for (acc, v) in gw_sum.iter_mut().zip(grad_weight_direct(&gyb, &xb).unwrap().data()) {
            *acc += v;
        }
    }
    assert!(max_rel_error(&gw_sum, gw.data()) < 1e-14);
}

#[test]
fn direct_is_linear() {
    let (x, w, _) = random_layer(31, 3, 7, 2, 2, 1);
    let (x2, w2, _) = random_layer(32, 3, 7, 2, 2, 1);
    let mix = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| 2.0 * p - 0.5 * q).collect::<Vec<_>>();
    let xm = RealTensor4::from_vec(1, 2, 7, 7, mix(x.data(), x2.data())).unwrap();
    let lhs = forward_direct(&xm, &w).unwrap();
    let rhs = mix(forward_direct(&x, &w).unwrap().data(), forward_direct(&x2, &w).unwrap().data());
    assert!(max_rel_error(lhs.data(), &rhs) < 1e-14);
    let wm = WeightTensor4::from_vec(2, 2, 3, mix(w.data(), w2.data())).unwrap();
    let lhs = forward_direct(&x, &wm).unwrap();
    let rhs = mix(forward_direct(&x, &w).unwrap().data(), forward_direct(&x, &w2).unwrap().data());
    assert!(max_rel_error(lhs.data(), &rhs) < 1e-14);
}

#[test]
fn scaled_reference_columns_match_in_f32() {
    for &(k, n, f, fp, s) in &[(3, 16, 4, 6, 2), (5, 16, 4, 4, 2), (7, 32, 3, 5, 1)] {
        let (x, w, gy) = random_layer(101, k, n, f, fp, s);
        let (x, w, gy) = (x.cast::<f32>(), w.cast::<f32>(), gy.cast::<f32>());
        let mut ws = workspace_for::<f32>(&[LayerConfig::new(k, n, f, fp, s).unwrap()]).unwrap();
        let e1 = max_rel_error(forward_fft(&mut ws, &x, &w).unwrap().data(), forward_direct(&x, &w).unwrap().data());
        let e2 =
            max_rel_error(grad_input_fft(&mut ws, &gy, &w).unwrap().data(), grad_input_direct(&gy, &w).unwrap().data());
        let e3 = max_rel_error(
            grad_weight_fft(&mut ws, &gy, &x).unwrap().data(),
            grad_weight_direct(&gy, &x).unwrap().data(),
        );
        assert!(e1 <= 1e-4 && e2 <= 1e-4 && e3 <= 1e-3, "({k},{n},{f},{fp}) S={s}: {e1:e} {e2:e} {e3:e}");
    }
}

#[test]
fn unit_kernel_and_zero_cases() {
    let x = uniform_tensor::<f64>(3, Role::Input, 2, 1, 5, 5).unwrap();
    let one = WeightTensor4::from_vec(1, 1, 1, vec![1.0]).unwrap();
    let mut ws = workspace_for::<f64>(&[LayerConfig::new(1, 5, 1, 1, 2).unwrap()]).unwrap();
    assert!(max_rel_error(forward_fft(&mut ws, &x, &one).unwrap().data(), x.data()) < 1e-15);
    assert!(max_rel_error(grad_input_fft(&mut ws, &x, &one).unwrap().data(), x.data()) < 1e-15);

    let zero_w = WeightTensor4::<f64>::zeros(1, 1, 3).unwrap();
    let mut ws = workspace_for::<f64>(&[LayerConfig::new(3, 5, 1, 1, 2).unwrap()]).unwrap();
    assert!(forward_fft(&mut ws, &x, &zero_w).unwrap().data().iter().all(|v| *v == 0.0));
    let zero_gy = RealTensor4::<f64>::zeros(2, 1, 3, 3).unwrap();
    assert!(grad_weight_fft(&mut ws, &zero_gy, &x).unwrap().data().iter().all(|v| *v == 0.0));
}

#[test]
fn single_impulse_gradient_extracts_window() {
    let (n, k) = (8, 3);
    let x = uniform_tensor::<f64>(8, Role::Input, 1, 2, n, n).unwrap();
    let mut ws = workspace_for::<f64>(&[LayerConfig::new(k, n, 2, 1, 1).unwrap()]).unwrap();
    let (pi, pj) = (4, 1);
    let mut gy = RealTensor4::<f64>::zeros(1, 1, n - k + 1, n - k + 1).unwrap();
    gy.set(0, 0, pi, pj, 1.0);
    let gw = grad_weight_fft(&mut ws, &gy, &x).unwrap();
    for fi in 0..2 {
        for u in 0..k {
            for v in 0..k {
                assert!((gw.get(0, fi, u, v) - x.get(0, fi, pi + u, pj + v)).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn fft_adjointness() {
    for seed in 0..10u64 {
        let (k, n) = (1 + seed as usize % 4, 6 + seed as usize % 7);
        let (x, w, gy) = random_layer(seed, k, n, 2, 3, 2);
        let mut ws = workspace_for::<f64>(&[LayerConfig::new(k, n, 2, 3, 2).unwrap()]).unwrap();
        let a = forward_fft(&mut ws, &x, &w).unwrap().dot(&gy).unwrap();
        let b = x.dot(&grad_input_fft(&mut ws, &gy, &w).unwrap()).unwrap();
        let c = w.dot(&grad_weight_fft(&mut ws, &gy, &x).unwrap()).unwrap();
        assert!(rel(a, b) < 1e-8 && rel(a, c) < 1e-8);
    }
}

#[test]
fn workspace_reuse_is_stateless() {
    let a = LayerConfig::new(5, 16, 3, 4, 2).unwrap();
    let b = LayerConfig::new(3, 8, 6, 2, 3).unwrap();
    let mut ws = workspace_for::<f32>(&[a, b]).unwrap();
    let (xa, wa, gya) = random_layer(1, 5, 16, 3, 4, 2);
    let (xb, wb, gyb) = random_layer(2, 3, 8, 6, 2, 3);
    let (xa, wa, gya) = (xa.cast::<f32>(), wa.cast::<f32>(), gya.cast::<f32>());
    let (xb, wb, gyb) = (xb.cast::<f32>(), wb.cast::<f32>(), gyb.cast::<f32>());

    let run_a = |ws: &mut _| {
        (
            forward_fft(ws, &xa, &wa).unwrap(),
            grad_input_fft(ws, &gya, &wa).unwrap(),
            grad_weight_fft(ws, &gya, &xa).unwrap(),
        )
    };
    let first = run_a(&mut ws);
    forward_fft(&mut ws, &xb, &wb).unwrap();
    grad_input_fft(&mut ws, &gyb, &wb).unwrap();
    grad_weight_fft(&mut ws, &gyb, &xb).unwrap();
    let second = run_a(&mut ws);
    assert_eq!(first.0, second.0);
    assert_eq!(first.1, second.1);
    assert_eq!(first.2, second.2);
}

#[test]
fn reference_layer_set_sizing() {
    let layers = reference_layers();
    let ws = workspace_for::<f32>(&layers).unwrap();
    let largest = layers.iter().max_by_key(|c| memory_bytes_packed(c, 8)).unwrap();
    assert_eq!((largest.k, largest.n, largest.f, largest.f_prime), (7, 32, 96, 256));
    assert_eq!(ws.allocated_bytes() as u64, memory_bytes_packed(largest, 8));
    let cap = ws.capacity();
    assert_eq!(cap.input_planes, 128 * 384);
    assert_eq!(cap.weight_planes, 384 * 384);
    assert_eq!(cap.output_planes, 128 * 384);
    assert!(layers.iter().all(|c| ws.fits(c)));
}

fn config_strategy() -> impl Strategy<Value = (usize, usize, usize, usize, usize, u64)> {
    (1usize..=32, 1usize..=11, 1usize..=8, 1usize..=8, 1usize..=4, any::<u64>())
        .prop_map(|(n, k, f, fp, s, seed)| (k.min(n), n, f, fp, s, seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn fft_matches_direct_random_configs((k, n, f, fp, s, seed) in config_strategy()) {
        let (x, w, gy) = random_layer(seed, k, n, f, fp, s);
        let mut ws = workspace_for::<f64>(&[LayerConfig::new(k, n, f, fp, s).unwrap()]).unwrap();
        let e1 = max_rel_error(forward_fft(&mut ws, &x, &w).unwrap().data(), forward_direct(&x, &w).unwrap().data());
        let e2 = max_rel_error(grad_input_fft(&mut ws, &gy, &w).unwrap().data(), grad_input_direct(&gy, &w).unwrap().data());
        let e3 = max_rel_error(grad_weight_fft(&mut ws, &gy, &x).unwrap().data(), grad_weight_direct(&gy, &x).unwrap().data());
        prop_assert!(e1 <= 1e-10 && e2 <= 1e-10 && e3 <= 1e-10, "{e1:e} {e2:e} {e3:e}");
    }

    #[test]
    fn fft_counters_independent_of_kernel(n in 11usize..=32, f in 1usize..4, fp in 1usize..4, s in 1usize..3) {
        let mut seen = Vec::new();
        for k in [3, 5, 7, 11] {
            let (x, w, _) = random_layer(k as u64, k, n, f, fp, s);
            let mut ws = workspace_for::<f64>(&[LayerConfig::new(k, n, f, fp, s).unwrap()]).unwrap();
            forward_fft(&mut ws, &x, &w).unwrap();
            seen.push(ws.counters());
        }
        prop_assert!(seen.windows(2).all(|p| p[0] == p[1]));
    }
}
