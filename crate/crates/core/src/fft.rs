//! Radix-2 Cooley-Tukey FFTs driven by immutable precomputed plans.
//!
//! Forward transforms are unnormalized; inverse transforms carry the full
//! `1/m` (1-D) or `1/m^2` (2-D) factor so round trips are exact.
//!
//! Real 2-D planes are transformed as a row pass followed by a column pass.
//! Only the `m/2 + 1` non-redundant columns of each spectrum are stored; the
//! rest follow from Hermitian symmetry `X[u,v] = conj(X[-u,-v])`.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::RealTensor4;

/// Twiddle factors and bit-reversal permutation for one power-of-two size.
#[derive(Debug, Clone)]
pub struct FftPlan<T> {
    size: usize,
    log2: u32,
    /// `exp(-2*pi*i*j/size)` for `j in 0..size/2`.
    twiddles: Vec<Complex<T>>,
    bit_reversal: Vec<usize>,
}

impl<T: Real> FftPlan<T> {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 || !size.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(size));
        }
        let log2 = size.trailing_zeros();
        // Angles are evaluated in f64 and rounded once, so f32 plans carry
        // correctly-rounded twiddles rather than accumulated recurrence error.
        let twiddles = (0..size / 2)
            .map(|j| {
                let angle = -2.0 * std::f64::consts::PI * j as f64 / size as f64;
                Complex::new(T::from_f64_lossy(angle.cos()), T::from_f64_lossy(angle.sin()))
            })
            .collect();
        let bit_reversal =
            (0..size).map(|i| if log2 == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - log2) }).collect();
        Ok(FftPlan { size, log2, twiddles, bit_reversal })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Number of butterfly stages, `log2(size)`.
    pub fn stages(&self) -> u32 {
        self.log2
    }

    /// Forward twiddle `exp(-2*pi*i*j / 2^(stage+1))` used by butterfly stage `stage`.
    pub fn twiddle(&self, stage: u32, j: usize) -> Complex<T> {
        let stride = self.size >> (stage + 1);
        self.twiddles[j * stride]
    }

    pub fn bit_reversal(&self) -> &[usize] {
        &self.bit_reversal
    }

    /// Unnormalized forward DFT `X[u] = sum_t x[t] exp(-2*pi*i*u*t/m)`.
    pub fn fft_1d(&self, signal: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        let mut buf = signal.to_vec();
        self.forward_in_place(&mut buf)?;
        Ok(buf)
    }

    /// Inverse DFT including the `1/m` factor.
    pub fn ifft_1d(&self, spectrum: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        let mut buf = spectrum.to_vec();
        self.inverse_in_place(&mut buf)?;
        Ok(buf)
    }

    pub fn forward_in_place(&self, buf: &mut [Complex<T>]) -> Result<()> {
        self.check_len(buf.len())?;
        self.transform(buf, false);
        Ok(())
    }

    pub fn inverse_in_place(&self, buf: &mut [Complex<T>]) -> Result<()> {
        self.check_len(buf.len())?;
        self.transform(buf, true);
        let scale = T::one() / T::from_usize(self.size).unwrap();
        for v in buf.iter_mut() {
            *v = v.scale(scale);
        }
        Ok(())
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.size {
            return Err(Error::Size(format!("signal length {len} does not match plan size {}", self.size)));
        }
        Ok(())
    }

    /// Iterative decimation-in-time butterflies. `inverse` conjugates the
    /// twiddles and leaves the result unscaled.
    fn transform(&self, buf: &mut [Complex<T>], inverse: bool) {
        debug_assert_eq!(buf.len(), self.size);
        for (i, &r) in self.bit_reversal.iter().enumerate() {
            if i < r {
                buf.swap(i, r);
            }
        }
        let mut half = 1;
        while half < self.size {
            let stride = self.size / (2 * half);
            for block in buf.chunks_exact_mut(2 * half) {
                let (lo, hi) = block.split_at_mut(half);
                for (j, (a, b)) in lo.iter_mut().zip(hi.iter_mut()).enumerate() {
                    let w = self.twiddles[j * stride];
                    let w = if inverse { w.conj() } else { w };
                    let t = *b * w;
                    *b = *a - t;
                    *a += t;
                }
            }
            half *= 2;
        }
    }

    /// Number of stored columns per row of a packed `size x size` spectrum.
    pub fn packed_cols(&self) -> usize {
        self.size / 2 + 1
    }

    /// Complex values per packed plane.
    pub fn packed_len(&self) -> usize {
        self.size * self.packed_cols()
    }

    /// Forward 2-D transform of one real plane into packed storage.
    ///
    /// `src` is `rows x cols` with `rows, cols <= size`; it is treated as
    /// zero-extended to `size x size` without materializing the padding.
    pub(crate) fn forward_plane(
        &self,
        src: &[T],
        rows: usize,
        cols: usize,
        out: &mut [Complex<T>],
        line: &mut [Complex<T>],
    ) {
        let m = self.size;
        let pc = self.packed_cols();
        debug_assert!(rows <= m && cols <= m && src.len() == rows * cols);
        debug_assert_eq!(out.len(), m * pc);

        for (r, orow) in out.chunks_exact_mut(pc).enumerate() {
            line.fill(Complex::new(T::zero(), T::zero()));
            if r < rows {
                for (l, &v) in line.iter_mut().zip(&src[r * cols..(r + 1) * cols]) {
                    l.re = v;
                }
            }
            self.transform(line, false);
            orow.copy_from_slice(&line[..pc]);
        }
        for c in 0..pc {
            for (r, l) in line.iter_mut().enumerate() {
                *l = out[r * pc + c];
            }
            self.transform(line, false);
            for (r, l) in line.iter().enumerate() {
                out[r * pc + c] = *l;
            }
        }
    }

    /// Inverse 2-D transform of one packed plane, writing only the
    /// `rows x cols` window at `(row0, col0)` of the real result into `dst`.
    pub(crate) fn inverse_plane(
        &self,
        src: &[Complex<T>],
        work: &mut [Complex<T>],
        line: &mut [Complex<T>],
        dst: &mut [T],
        window: Window,
    ) {
        let m = self.size;
        let pc = self.packed_cols();
        debug_assert_eq!(src.len(), m * pc);
        debug_assert!(window.row0 + window.rows <= m && window.col0 + window.cols <= m);

        for c in 0..pc {
            for (r, l) in line.iter_mut().enumerate() {
                *l = src[r * pc + c];
            }
            self.transform(line, true);
            for (r, l) in line.iter().enumerate() {
                work[r * pc + c] = *l;
            }
        }
        let scale = T::one() / T::from_usize(m * m).unwrap();
        for (i, drow) in dst.chunks_exact_mut(window.cols).enumerate() {
            let r = window.row0 + i;
            let wrow = &work[r * pc..(r + 1) * pc];
            line[..pc].copy_from_slice(wrow);
            // Each row of the column-inverted spectrum is the DFT of a real row.
            for v in pc..m {
                line[v] = wrow[m - v].conj();
            }
            self.transform(line, true);
            for (d, l) in drow.iter_mut().zip(&line[window.col0..window.col0 + window.cols]) {
                *d = l.re * scale;
            }
        }
    }

    pub(crate) fn scratch(&self) -> PlaneScratch<T> {
        PlaneScratch {
            work: vec![Complex::new(T::zero(), T::zero()); self.packed_len()],
            line: vec![Complex::new(T::zero(), T::zero()); self.size],
        }
    }
}

/// Per-worker buffers for one plane transform.
pub(crate) struct PlaneScratch<T> {
    pub work: Vec<Complex<T>>,
    pub line: Vec<Complex<T>>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Window {
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
}

/// Hermitian-packed spectra of a batch of real `m x m` planes: each plane
/// stores `m` rows of `m/2 + 1` complex bins.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpectrum<T> {
    batch: usize,
    maps: usize,
    size: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> HalfSpectrum<T> {
    pub fn zeros(batch: usize, maps: usize, size: usize) -> Self {
        let len = batch * maps * size * (size / 2 + 1);
        HalfSpectrum { batch, maps, size, data: vec![Complex::new(T::zero(), T::zero()); len] }
    }

    pub fn from_vec(batch: usize, maps: usize, size: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if data.len() != batch * maps * size * (size / 2 + 1) {
            return Err(Error::Size(format!(
                "packed data length {} does not match {batch}x{maps} planes of {size}x{}",
                data.len(),
                size / 2 + 1
            )));
        }
        Ok(HalfSpectrum { batch, maps, size, data })
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn maps(&self) -> usize {
        self.maps
    }

    /// Transform size `m` (rows of each plane).
    pub fn rows(&self) -> usize {
        self.size
    }

    pub fn packed_cols(&self) -> usize {
        self.size / 2 + 1
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    pub fn plane(&self, b: usize, m: usize) -> &[Complex<T>] {
        let len = self.size * self.packed_cols();
        let start = (b * self.maps + m) * len;
        &self.data[start..start + len]
    }

    /// Expands one packed plane to its full `m x m` spectrum.
    pub fn unpack_plane(&self, b: usize, map: usize) -> Vec<Complex<T>> {
        let m = self.size;
        let pc = self.packed_cols();
        let packed = self.plane(b, map);
        let mut full = vec![Complex::new(T::zero(), T::zero()); m * m];
        for u in 0..m {
            for v in 0..m {
                full[u * m + v] = if v < pc { packed[u * pc + v] } else { packed[((m - u) % m) * pc + (m - v)].conj() };
            }
        }
        full
    }

    /// Packs full `m x m` spectra (plane-major) by keeping columns `0..=m/2`.
    pub fn from_full(batch: usize, maps: usize, size: usize, full: &[Complex<T>]) -> Result<Self> {
        if full.len() != batch * maps * size * size {
            return Err(Error::Size(format!(
                "full spectrum length {} does not match {batch}x{maps}x{size}x{size}",
                full.len()
            )));
        }
        let pc = size / 2 + 1;
        let mut data = Vec::with_capacity(batch * maps * size * pc);
        for row in full.chunks_exact(size) {
            data.extend_from_slice(&row[..pc]);
        }
        Ok(HalfSpectrum { batch, maps, size, data })
    }
}

/// Batched forward 2-D transform of real planes already padded to `plan.size()`.
pub fn fft_2d_real_batch<T: Real>(plan: &FftPlan<T>, t: &RealTensor4<T>) -> Result<HalfSpectrum<T>> {
    let m = plan.size();
    if t.rows() != m || t.cols() != m {
        return Err(Error::Size(format!(
            "planes are {}x{} but the plan expects {m}x{m}; pad first",
            t.rows(),
            t.cols()
        )));
    }
    let mut out = HalfSpectrum::zeros(t.batch(), t.maps(), m);
    out.data
        .par_chunks_mut(plan.packed_len())
        .zip(t.data().par_chunks(m * m))
        .for_each_init(|| plan.scratch(), |s, (dst, src)| plan.forward_plane(src, m, m, dst, &mut s.line));
    Ok(out)
}

/// Batched inverse 2-D transform back to real `m x m` planes.
pub fn ifft_2d_real_batch<T: Real>(plan: &FftPlan<T>, s: &HalfSpectrum<T>) -> Result<RealTensor4<T>> {
    let m = plan.size();
    if s.rows() != m {
        return Err(Error::Size(format!("spectrum size {} does not match plan size {m}", s.rows())));
    }
    let mut out = RealTensor4::zeros(s.batch(), s.maps(), m, m)?;
    let window = Window { row0: 0, col0: 0, rows: m, cols: m };
    out.data_mut().par_chunks_mut(m * m).zip(s.data.par_chunks(plan.packed_len())).for_each_init(
        || plan.scratch(),
        |sc, (dst, src)| plan.inverse_plane(src, &mut sc.work, &mut sc.line, dst, window),
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn naive_dft(x: &[Complex<f64>]) -> Vec<Complex<f64>> {
        let m = x.len();
        (0..m)
            .map(|u| {
                x.iter()
                    .enumerate()
                    .map(|(t, &v)| {
                        let a = -2.0 * std::f64::consts::PI * ((u * t) % m) as f64 / m as f64;
                        v * c(a.cos(), a.sin())
                    })
                    .sum()
            })
            .collect()
    }

    fn pseudo_random(len: usize, salt: u64) -> Vec<Complex<f64>> {
        crate::init::uniform_values::<f64>(salt, crate::init::Role::Input, 2 * len)
            .chunks_exact(2)
            .map(|p| c(p[0], p[1]))
            .collect()
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert_eq!(FftPlan::<f64>::new(6).unwrap_err(), Error::NotPowerOfTwo(6));
        assert_eq!(FftPlan::<f64>::new(0).unwrap_err(), Error::NotPowerOfTwo(0));
    }

    #[test]
    fn size_one_is_identity() {
        let p = FftPlan::<f64>::new(1).unwrap();
        assert_eq!(p.fft_1d(&[c(3.0, -1.0)]).unwrap(), vec![c(3.0, -1.0)]);
        assert_eq!(p.ifft_1d(&[c(3.0, -1.0)]).unwrap(), vec![c(3.0, -1.0)]);
    }

    #[test]
    fn impulse_and_constant() {
        let p = FftPlan::<f64>::new(8).unwrap();
        let mut imp = vec![c(0.0, 0.0); 8];
        imp[0] = c(1.0, 0.0);
        assert!(p.fft_1d(&imp).unwrap().iter().all(|v| *v == c(1.0, 0.0)));
        assert_eq!(p.ifft_1d(&[c(1.0, 0.0); 8]).unwrap(), imp);

        let spec = p.fft_1d(&[c(2.5, 0.0); 8]).unwrap();
        assert!((spec[0] - c(20.0, 0.0)).norm() < 1e-12);
        assert!(spec[1..].iter().all(|v| v.norm() < 1e-12));
        let mut dc = vec![c(0.0, 0.0); 8];
        dc[0] = c(20.0, 0.0);
        assert!(p.ifft_1d(&dc).unwrap().iter().all(|v| (*v - c(2.5, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn length_mismatch_is_size_error() {
        let p = FftPlan::<f64>::new(4).unwrap();
        assert!(matches!(p.fft_1d(&[c(1.0, 0.0); 3]), Err(Error::Size(_))));
        assert!(matches!(p.ifft_1d(&[c(1.0, 0.0); 8]), Err(Error::Size(_))));
    }

    #[test]
    fn twiddles_match_stage_roots() {
        let p = FftPlan::<f64>::new(16).unwrap();
        for stage in 0..p.stages() {
            let len = 1usize << (stage + 1);
            for j in 0..len / 2 {
                let a = -2.0 * std::f64::consts::PI * j as f64 / len as f64;
                assert!((p.twiddle(stage, j) - c(a.cos(), a.sin())).norm() < 1e-15);
            }
        }
        let br = p.bit_reversal();
        assert!((0..16).all(|i| br[br[i]] == i));
        assert_eq!(br[1], 8);
    }

    #[test]
    fn matches_naive_dft_and_round_trips() {
        for log in 1..=6 {
            let m = 1 << log;
            let p = FftPlan::<f64>::new(m).unwrap();
            let x = pseudo_random(m, log as u64);
            let got = p.fft_1d(&x).unwrap();
            let want = naive_dft(&x);
            let scale = want.iter().map(|v| v.norm()).fold(0.0, f64::max);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).norm() <= 1e-12 * scale, "m={m}");
            }
            let back = p.ifft_1d(&got).unwrap();
            for (b, o) in back.iter().zip(&x) {
                assert!((b - o).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn two_d_impulse_and_zero() {
        let p = FftPlan::<f64>::new(8).unwrap();
        let mut t = RealTensor4::<f64>::zeros(1, 2, 8, 8).unwrap();
        t.set(0, 0, 0, 0, 1.0);
        let s = fft_2d_real_batch(&p, &t).unwrap();
        assert_eq!((s.rows(), s.packed_cols()), (8, 5));
        assert!(s.plane(0, 0).iter().all(|v| *v == c(1.0, 0.0)));
        assert!(s.plane(0, 1).iter().all(|v| *v == c(0.0, 0.0)));

        let ones = HalfSpectrum::from_vec(1, 1, 8, vec![c(1.0, 0.0); 40]).unwrap();
        let back = ifft_2d_real_batch(&p, &ones).unwrap();
        assert!((back.get(0, 0, 0, 0) - 1.0).abs() < 1e-15);
        assert!(back.data()[1..].iter().all(|v| v.abs() < 1e-15));

        let zero = ifft_2d_real_batch(&p, &HalfSpectrum::zeros(2, 1, 8)).unwrap();
        assert!(zero.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn two_d_rejects_unpadded() {
        let p = FftPlan::<f64>::new(8).unwrap();
        let t = RealTensor4::<f64>::zeros(1, 1, 5, 5).unwrap();
        assert!(matches!(fft_2d_real_batch(&p, &t), Err(Error::Size(_))));
        assert!(matches!(ifft_2d_real_batch(&p, &HalfSpectrum::zeros(1, 1, 4)), Err(Error::Size(_))));
    }

    #[test]
    fn unpack_repack_identity() {
        let p = FftPlan::<f64>::new(4).unwrap();
        let t = crate::init::uniform_tensor::<f64>(5, crate::init::Role::Input, 2, 1, 4, 4).unwrap();
        let s = fft_2d_real_batch(&p, &t).unwrap();
        let mut full = Vec::new();
        for b in 0..2 {
            full.extend(s.unpack_plane(b, 0));
        }
        assert_eq!(HalfSpectrum::from_full(2, 1, 4, &full).unwrap(), s);
    }
}
