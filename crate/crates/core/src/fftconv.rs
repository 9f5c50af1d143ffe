//! FFT-based layer operations with transform reuse.
//!
//! Each operation transforms its two operand sets once (`S*f` input planes,
//! `f'*f` kernels, or `S*f'` output-gradient planes), multiplies them at
//! every stored frequency bin as a small complex matrix product over the
//! feature-map index, inverse-transforms the result set and crops the valid
//! window. Kernels are zero-padded to the full transform size, so the work
//! done is independent of the kernel width.
//!
//! Spectra live in one preallocated [`ConvWorkspace`] arena sized for the
//! largest registered layer and shared by every layer. Within the arena each
//! role is stored bin-major: all planes of one frequency bin are contiguous,
//! so the per-bin products run over dense tiles.

use num_complex::Complex;
use rayon::prelude::*;

use crate::config::LayerConfig;
use crate::error::{Error, Result};
use crate::fft::{FftPlan, Window};
use crate::scalar::Real;
use crate::tensor::{RealTensor4, WeightTensor4};

/// Work performed by the most recent operation on a workspace.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounters {
    /// Forward 2-D plane transforms.
    pub forward_transforms: u64,
    /// Inverse 2-D plane transforms.
    pub inverse_transforms: u64,
    /// Complex multiply-accumulates in the per-bin products.
    pub complex_macs: u64,
    /// Stored frequency bins per plane.
    pub bins: u64,
    pub fft_size: u64,
}

/// Plane counts per spectrum role. A layer uses `batch*f` input planes,
/// `f'*f` kernel planes and `batch*f'` output planes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RoleCapacity {
    pub input_planes: usize,
    pub weight_planes: usize,
    pub output_planes: usize,
}

impl RoleCapacity {
    fn of(c: &LayerConfig) -> Self {
        RoleCapacity { input_planes: c.batch * c.f, weight_planes: c.f_prime * c.f, output_planes: c.batch * c.f_prime }
    }

    fn max(self, o: Self) -> Self {
        RoleCapacity {
            input_planes: self.input_planes.max(o.input_planes),
            weight_planes: self.weight_planes.max(o.weight_planes),
            output_planes: self.output_planes.max(o.output_planes),
        }
    }

    fn total(&self) -> usize {
        self.input_planes + self.weight_planes + self.output_planes
    }
}

/// Reusable frequency-domain storage for a set of layers.
#[derive(Debug)]
pub struct ConvWorkspace<T> {
    arena: Vec<Complex<T>>,
    capacity: RoleCapacity,
    max_fft_size: usize,
    plans: Vec<FftPlan<T>>,
    counters: OpCounters,
}

/// Complex values a layer needs: `m(m/2+1)` bins times all its planes.
fn layer_footprint(c: &LayerConfig) -> usize {
    let m = c.fft_size();
    m * (m / 2 + 1) * RoleCapacity::of(c).total()
}

/// Builds a workspace big enough for every config in `configs`.
pub fn workspace_for<T: Real>(configs: &[LayerConfig]) -> Result<ConvWorkspace<T>> {
    if configs.is_empty() {
        return Err(Error::Config("workspace needs at least one layer config".into()));
    }
    let mut capacity = RoleCapacity::default();
    let mut len = 0;
    let mut max_fft_size = 0;
    let mut plans: Vec<FftPlan<T>> = Vec::new();
    for c in configs {
        c.validate()?;
        capacity = capacity.max(RoleCapacity::of(c));
        len = len.max(layer_footprint(c));
        let m = c.fft_size();
        max_fft_size = max_fft_size.max(m);
        if !plans.iter().any(|p| p.size() == m) {
            plans.push(FftPlan::new(m)?);
        }
    }
    Ok(ConvWorkspace {
        arena: vec![Complex::new(T::zero(), T::zero()); len],
        capacity,
        max_fft_size,
        plans,
        counters: OpCounters::default(),
    })
}

impl<T: Real> ConvWorkspace<T> {
    /// Per-role plane maxima over the registered configs.
    pub fn capacity(&self) -> RoleCapacity {
        self.capacity
    }

    /// Largest transform size among the registered configs.
    pub fn max_fft_size(&self) -> usize {
        self.max_fft_size
    }

    /// Complex values in the shared arena.
    pub fn len(&self) -> usize {
        self.arena.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arena.is_empty()
    }

    /// Bytes held by the frequency-domain arena.
    pub fn allocated_bytes(&self) -> usize {
        self.arena.len() * std::mem::size_of::<Complex<T>>()
    }

    /// Counters of the most recent operation.
    pub fn counters(&self) -> OpCounters {
        self.counters
    }

    /// Whether a layer fits without reallocation.
    pub fn fits(&self, c: &LayerConfig) -> bool {
        layer_footprint(c) <= self.arena.len()
    }

    fn plan_index(&mut self, m: usize) -> Result<usize> {
        if let Some(i) = self.plans.iter().position(|p| p.size() == m) {
            return Ok(i);
        }
        self.plans.push(FftPlan::new(m)?);
        Ok(self.plans.len() - 1)
    }

    /// Splits the arena for a layer of transform size `m` into bin-major
    /// input, weight and output regions.
    fn regions(&mut self, m: usize, caps: RoleCapacity) -> Result<Stage<'_, T>> {
        let bins = m * (m / 2 + 1);
        let needed = bins * caps.total();
        if needed > self.arena.len() {
            return Err(Error::Capacity { needed, available: self.arena.len() });
        }
        let pi = self.plan_index(m)?;
        let (input, rest) = self.arena[..needed].split_at_mut(bins * caps.input_planes);
        let (weight, output) = rest.split_at_mut(bins * caps.weight_planes);
        Ok(Stage { plan: &self.plans[pi], bins, input, weight, output, counters: &mut self.counters })
    }
}

struct Stage<'a, T> {
    plan: &'a FftPlan<T>,
    bins: usize,
    input: &'a mut [Complex<T>],
    weight: &'a mut [Complex<T>],
    output: &'a mut [Complex<T>],
    counters: &'a mut OpCounters,
}

#[derive(Clone, Copy)]
struct SyncPtr<T>(*mut Complex<T>);

// SAFETY: only used to scatter into disjoint indices from distinct workers.
unsafe impl<T: Send> Send for SyncPtr<T> {}
unsafe impl<T: Send> Sync for SyncPtr<T> {}

impl<T> SyncPtr<T> {
    // A method call makes closures capture the whole wrapper, not the raw field.
    fn get(&self) -> *mut Complex<T> {
        self.0
    }
}

/// Forward-transforms `planes` real `rows x cols` planes (zero-extended to the
/// plan size) into bin-major storage: bin `b` of plane `p` lands at `b*planes + p`.
fn transform_into_bins<T: Real>(
    plan: &FftPlan<T>,
    src: &[T],
    rows: usize,
    cols: usize,
    planes: usize,
    dst: &mut [Complex<T>],
) {
    let bins = plan.packed_len();
    assert_eq!(dst.len(), bins * planes);
    assert_eq!(src.len(), planes * rows * cols);
    let out = SyncPtr(dst.as_mut_ptr());
    src.par_chunks(rows * cols).enumerate().for_each_init(
        || plan.scratch(),
        |s, (p, plane)| {
            plan.forward_plane(plane, rows, cols, &mut s.work, &mut s.line);
            for (b, v) in s.work.iter().enumerate() {
                // SAFETY: b < bins and p < planes, so the index is in bounds of
                // `dst`; each plane index p is handled by exactly one worker,
                // so no two writes alias.
                unsafe { *out.get().add(b * planes + p) = *v };
            }
        },
    );
}

/// Inverse-transforms every plane of a bin-major buffer, writing the
/// `rows x cols` window at `(row0, col0)` of each into consecutive planes of `dst`.
fn inverse_from_bins<T: Real>(plan: &FftPlan<T>, src: &[Complex<T>], planes: usize, window: Window, dst: &mut [T]) {
    let bins = plan.packed_len();
    assert_eq!(src.len(), bins * planes);
    assert_eq!(dst.len(), planes * window.rows * window.cols);
    dst.par_chunks_mut(window.rows * window.cols).enumerate().for_each_init(
        || (plan.scratch(), vec![Complex::new(T::zero(), T::zero()); bins]),
        |(s, gathered), (p, out)| {
            for (b, g) in gathered.iter_mut().enumerate() {
                *g = src[b * planes + p];
            }
            plan.inverse_plane(gathered, &mut s.work, &mut s.line, out, window);
        },
    );
}

#[inline]
fn conj_mul<T: Real>(a: Complex<T>, b: Complex<T>) -> Complex<T> {
    // conj(a) * b
    Complex::new(a.re * b.re + a.im * b.im, a.re * b.im - a.im * b.re)
}

fn square_dims<T: Real>(t: &RealTensor4<T>, what: &str) -> Result<usize> {
    if t.rows() != t.cols() {
        return Err(Error::Size(format!("{what} planes must be square, got {}x{}", t.rows(), t.cols())));
    }
    Ok(t.rows())
}

/// FFT counterpart of [`crate::direct::forward_direct`].
pub fn forward_fft<T: Real>(
    ws: &mut ConvWorkspace<T>,
    x: &RealTensor4<T>,
    w: &WeightTensor4<T>,
) -> Result<RealTensor4<T>> {
    let n = square_dims(x, "input")?;
    let (batch, f) = (x.batch(), x.maps());
    let k = w.k();
    if k > n {
        return Err(Error::Size(format!("kernel {k}x{k} is larger than input {n}x{n}")));
    }
    if w.in_maps() != f {
        return Err(Error::Shape(format!("kernel expects {} input maps, input has {f}", w.in_maps())));
    }
    let fp = w.out_maps();
    let n_out = n - k + 1;
    let m = n.next_power_of_two();
    let caps = RoleCapacity { input_planes: batch * f, weight_planes: fp * f, output_planes: batch * fp };
    let st = ws.regions(m, caps)?;

    transform_into_bins(st.plan, x.data(), n, n, caps.input_planes, st.input);
    transform_into_bins(st.plan, w.data(), k, k, caps.weight_planes, st.weight);

    // Y[s,o] = sum_f conj(W[o,f]) X[s,f] at every bin.
    let (xs, wsp) = (&*st.input, &*st.weight);
    st.output.par_chunks_mut(caps.output_planes).enumerate().for_each(|(bin, ytile)| {
        let xt = &xs[bin * caps.input_planes..(bin + 1) * caps.input_planes];
        let wt = &wsp[bin * caps.weight_planes..(bin + 1) * caps.weight_planes];
        for (s, yrow) in ytile.chunks_exact_mut(fp).enumerate() {
            let xrow = &xt[s * f..(s + 1) * f];
            for (o, y) in yrow.iter_mut().enumerate() {
                let wrow = &wt[o * f..(o + 1) * f];
                let mut acc = Complex::new(T::zero(), T::zero());
                for (wv, xv) in wrow.iter().zip(xrow) {
                    acc += conj_mul(*wv, *xv);
                }
                *y = acc;
            }
        }
    });

    let mut y = RealTensor4::zeros(batch, fp, n_out, n_out)?;
    let window = Window { row0: 0, col0: 0, rows: n_out, cols: n_out };
    inverse_from_bins(st.plan, st.output, caps.output_planes, window, y.data_mut());

    *st.counters = OpCounters {
        forward_transforms: (caps.input_planes + caps.weight_planes) as u64,
        inverse_transforms: caps.output_planes as u64,
        complex_macs: (st.bins * batch * fp * f) as u64,
        bins: st.bins as u64,
        fft_size: m as u64,
    };
    Ok(y)
}

/// FFT counterpart of [`crate::direct::grad_input_direct`].
pub fn grad_input_fft<T: Real>(
    ws: &mut ConvWorkspace<T>,
    gy: &RealTensor4<T>,
    w: &WeightTensor4<T>,
) -> Result<RealTensor4<T>> {
    let n_out = square_dims(gy, "output-gradient")?;
    let (batch, fp) = (gy.batch(), gy.maps());
    if w.out_maps() != fp {
        return Err(Error::Shape(format!("kernel has {} output maps, output gradient has {fp}", w.out_maps())));
    }
    let f = w.in_maps();
    let k = w.k();
    let n = n_out + k - 1;
    // m >= n = n_out + k - 1, so the circular convolution never wraps.
    let m = n.next_power_of_two();
    let caps = RoleCapacity { input_planes: batch * f, weight_planes: fp * f, output_planes: batch * fp };
    let st = ws.regions(m, caps)?;

    transform_into_bins(st.plan, gy.data(), n_out, n_out, caps.output_planes, st.output);
    transform_into_bins(st.plan, w.data(), k, k, caps.weight_planes, st.weight);

    // GX[s,f] = sum_o GY[s,o] W[o,f] at every bin.
    let (gys, wsp) = (&*st.output, &*st.weight);
    st.input.par_chunks_mut(caps.input_planes).enumerate().for_each(|(bin, xtile)| {
        let gt = &gys[bin * caps.output_planes..(bin + 1) * caps.output_planes];
        let wt = &wsp[bin * caps.weight_planes..(bin + 1) * caps.weight_planes];
        for (s, xrow) in xtile.chunks_exact_mut(f).enumerate() {
            xrow.fill(Complex::new(T::zero(), T::zero()));
            for (o, g) in gt[s * fp..(s + 1) * fp].iter().enumerate() {
                for (xv, wv) in xrow.iter_mut().zip(&wt[o * f..(o + 1) * f]) {
                    *xv += *g * *wv;
                }
            }
        }
    });

    let mut gx = RealTensor4::zeros(batch, f, n, n)?;
    let window = Window { row0: 0, col0: 0, rows: n, cols: n };
    inverse_from_bins(st.plan, st.input, caps.input_planes, window, gx.data_mut());

    *st.counters = OpCounters {
        forward_transforms: (caps.output_planes + caps.weight_planes) as u64,
        inverse_transforms: caps.input_planes as u64,
        complex_macs: (st.bins * batch * fp * f) as u64,
        bins: st.bins as u64,
        fft_size: m as u64,
    };
    Ok(gx)
}

/// FFT counterpart of [`crate::direct::grad_weight_direct`].
pub fn grad_weight_fft<T: Real>(
    ws: &mut ConvWorkspace<T>,
    gy: &RealTensor4<T>,
    x: &RealTensor4<T>,
) -> Result<WeightTensor4<T>> {
    let n_out = square_dims(gy, "output-gradient")?;
    let n = square_dims(x, "input")?;
    let (batch, fp) = (gy.batch(), gy.maps());
    let f = x.maps();
    if x.batch() != batch {
        return Err(Error::Shape(format!("batch mismatch: output gradient {batch}, input {}", x.batch())));
    }
    if n_out > n {
        return Err(Error::Shape(format!("output gradient {n_out}x{n_out} is larger than input {n}x{n}")));
    }
    let k = n - n_out + 1;
    let m = n.next_power_of_two();
    let caps = RoleCapacity { input_planes: batch * f, weight_planes: fp * f, output_planes: batch * fp };
    let st = ws.regions(m, caps)?;

    transform_into_bins(st.plan, x.data(), n, n, caps.input_planes, st.input);
    transform_into_bins(st.plan, gy.data(), n_out, n_out, caps.output_planes, st.output);

    // GW[o,f] = sum_s conj(GY[s,o]) X[s,f] at every bin; batch order fixed.
    let (xs, gys) = (&*st.input, &*st.output);
    st.weight.par_chunks_mut(caps.weight_planes).enumerate().for_each(|(bin, wtile)| {
        let xt = &xs[bin * caps.input_planes..(bin + 1) * caps.input_planes];
        let gt = &gys[bin * caps.output_planes..(bin + 1) * caps.output_planes];
        wtile.fill(Complex::new(T::zero(), T::zero()));
        for s in 0..batch {
            let xrow = &xt[s * f..(s + 1) * f];
            for (o, wrow) in wtile.chunks_exact_mut(f).enumerate() {
                let g = gt[s * fp + o].conj();
                for (wv, xv) in wrow.iter_mut().zip(xrow) {
                    *wv += g * *xv;
                }
            }
        }
    });

    let mut gw = WeightTensor4::zeros(fp, f, k)?;
    let window = Window { row0: 0, col0: 0, rows: k, cols: k };
    inverse_from_bins(st.plan, st.weight, caps.weight_planes, window, gw.data_mut());

    *st.counters = OpCounters {
        forward_transforms: (caps.input_planes + caps.output_planes) as u64,
        inverse_transforms: caps.weight_planes as u64,
        complex_macs: (st.bins * batch * fp * f) as u64,
        bins: st.bins as u64,
        fft_size: m as u64,
    };
    Ok(gw)
}
