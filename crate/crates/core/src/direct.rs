//! Spatial-domain reference implementations of the three layer operations.
//!
//! The forward pass is a valid cross-correlation, so the input gradient is a
//! full convolution and the weight gradient is a valid cross-correlation of
//! the input by the output gradient. Together they form an exact adjoint
//! triple. These loops are the correctness oracle for the FFT path and the
//! baseline it is benchmarked against; no algorithmic shortcuts here.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{RealTensor4, WeightTensor4};

/// `y[b,o,i,j] = sum_f sum_{u,v} x[b,f,i+u,j+v] * w[o,f,u,v]`
pub fn forward_direct<T: Real>(x: &RealTensor4<T>, w: &WeightTensor4<T>) -> Result<RealTensor4<T>> {
    let (batch, f, n, n_cols) = x.dims();
    let k = w.k();
    if n != n_cols {
        return Err(Error::Size(format!("input planes must be square, got {n}x{n_cols}")));
    }
    if k > n {
        return Err(Error::Size(format!("kernel {k}x{k} is larger than input {n}x{n}")));
    }
    if w.in_maps() != f {
        return Err(Error::Shape(format!("kernel expects {} input maps, input has {f}", w.in_maps())));
    }
    let fp = w.out_maps();
    let n_out = n - k + 1;
    let mut y = RealTensor4::zeros(batch, fp, n_out, n_out)?;

    y.data_mut().par_chunks_mut(n_out * n_out).enumerate().for_each(|(plane, out)| {
        let (b, o) = (plane / fp, plane % fp);
        for fi in 0..f {
            let xin = x.plane(b, fi);
            let ker = w.kernel(o, fi);
            for i in 0..n_out {
                let orow = &mut out[i * n_out..(i + 1) * n_out];
                for u in 0..k {
                    let xrow = &xin[(i + u) * n..(i + u + 1) * n];
                    let krow = &ker[u * k..(u + 1) * k];
                    for (j, acc) in orow.iter_mut().enumerate() {
                        let mut s = T::zero();
                        for (xv, kv) in xrow[j..j + k].iter().zip(krow) {
                            s += *xv * *kv;
                        }
                        *acc += s;
                    }
                }
            }
        }
    });
    Ok(y)
}

/// `gx[b,f,p,q] = sum_o sum_{u,v} gy[b,o,p-u,q-v] * w[o,f,u,v]`, out-of-range `gy` read as zero.
pub fn grad_input_direct<T: Real>(gy: &RealTensor4<T>, w: &WeightTensor4<T>) -> Result<RealTensor4<T>> {
    let (batch, fp, n_out, n_out_cols) = gy.dims();
    if n_out != n_out_cols {
        return Err(Error::Size(format!("output-gradient planes must be square, got {n_out}x{n_out_cols}")));
    }
    if w.out_maps() != fp {
        return Err(Error::Shape(format!("kernel has {} output maps, output gradient has {fp}", w.out_maps())));
    }
    let f = w.in_maps();
    let k = w.k();
    let n = n_out + k - 1;
    let mut gx = RealTensor4::zeros(batch, f, n, n)?;

    // Scatter form of the full convolution: every gy element spreads one
    // k x k kernel copy into the input gradient.
    gx.data_mut().par_chunks_mut(n * n).enumerate().for_each(|(plane, out)| {
        let (b, fi) = (plane / f, plane % f);
        for o in 0..fp {
            let g = gy.plane(b, o);
            let ker = w.kernel(o, fi);
            for i in 0..n_out {
                for u in 0..k {
                    let orow = &mut out[(i + u) * n..(i + u + 1) * n];
                    let krow = &ker[u * k..(u + 1) * k];
                    for (j, &gv) in g[i * n_out..(i + 1) * n_out].iter().enumerate() {
                        for (acc, kv) in orow[j..j + k].iter_mut().zip(krow) {
                            *acc += gv * *kv;
                        }
                    }
                }
            }
        }
    });
    Ok(gx)
}

/// `gw[o,f,u,v] = sum_b sum_{i,j} gy[b,o,i,j] * x[b,f,i+u,j+v]`
pub fn grad_weight_direct<T: Real>(gy: &RealTensor4<T>, x: &RealTensor4<T>) -> Result<WeightTensor4<T>> {
    let (batch, fp, n_out, n_out_cols) = gy.dims();
    let (xbatch, f, n, n_cols) = x.dims();
    if n_out != n_out_cols || n != n_cols {
        return Err(Error::Size("gradient and input planes must be square".into()));
    }
    if batch != xbatch {
        return Err(Error::Shape(format!("batch mismatch: output gradient {batch}, input {xbatch}")));
    }
    if n_out > n {
        return Err(Error::Shape(format!("output gradient {n_out}x{n_out} is larger than input {n}x{n}")));
    }
    let k = n - n_out + 1;
    let mut gw = WeightTensor4::zeros(fp, f, k)?;

    gw.data_mut().par_chunks_mut(k * k).enumerate().for_each(|(pair, out)| {
        let (o, fi) = (pair / f, pair % f);
        for b in 0..batch {
            let g = gy.plane(b, o);
            let xin = x.plane(b, fi);
            for u in 0..k {
                for v in 0..k {
                    let mut s = T::zero();
                    for i in 0..n_out {
                        let xrow = &xin[(i + u) * n + v..(i + u) * n + v + n_out];
                        for (gv, xv) in g[i * n_out..(i + 1) * n_out].iter().zip(xrow) {
                            s += *gv * *xv;
                        }
                    }
                    out[u * k + v] += s;
                }
            }
        }
    });
    Ok(gw)
}
