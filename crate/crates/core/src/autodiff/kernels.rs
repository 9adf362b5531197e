//! Raw numeric kernels shared by the tape's forward and backward passes.
//!
//! Work is split across threads by output rows or batch samples only; every
//! output element is reduced in a fixed order, so results do not depend on
//! the thread schedule.

use rayon::prelude::*;

use crate::error::{dim_err, Result};

const PAR_THRESHOLD: usize = 1 << 15;

/// `out[m,n] = a[m,k] · b[k,n]` (out must be zeroed).
pub fn matmul(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    let row = |(i, o): (usize, &mut [f64])| {
        let ar = &a[i * k..(i + 1) * k];
        for (p, &av) in ar.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let br = &b[p * n..(p + 1) * n];
            o.iter_mut().zip(br).for_each(|(o, &bv)| *o += av * bv);
        }
    };
    if n == 0 {
        return;
    }
    if m * k * n >= PAR_THRESHOLD {
        out.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        out.chunks_mut(n).enumerate().for_each(row);
    }
}

/// `out[m,p] = a[m,n] · b[p,n]ᵀ`.
pub fn matmul_bt(a: &[f64], b: &[f64], out: &mut [f64], m: usize, n: usize, p: usize) {
    let row = |(i, o): (usize, &mut [f64])| {
        let ar = &a[i * n..(i + 1) * n];
        for (j, o) in o.iter_mut().enumerate() {
            let br = &b[j * n..(j + 1) * n];
            *o += ar.iter().zip(br).map(|(x, y)| x * y).sum::<f64>();
        }
    };
    if p == 0 {
        return;
    }
    if m * n * p >= PAR_THRESHOLD {
        out.par_chunks_mut(p).enumerate().for_each(row);
    } else {
        out.chunks_mut(p).enumerate().for_each(row);
    }
}

/// `out[k,n] = a[m,k]ᵀ · b[m,n]`.
pub fn matmul_at(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    let row = |(j, o): (usize, &mut [f64])| {
        for i in 0..m {
            let av = a[i * k + j];
            if av == 0.0 {
                continue;
            }
            let br = &b[i * n..(i + 1) * n];
            o.iter_mut().zip(br).for_each(|(o, &bv)| *o += av * bv);
        }
    };
    if n == 0 {
        return;
    }
    if m * k * n >= PAR_THRESHOLD {
        out.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        out.chunks_mut(n).enumerate().for_each(row);
    }
}

pub fn transpose3(x: &[f64], b: usize, m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for s in 0..b {
        let base = s * m * n;
        for i in 0..m {
            for j in 0..n {
                out[base + j * m + i] = x[base + i * n + j];
            }
        }
    }
    out
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Max-shifted softmax of one row.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}

#[derive(Clone, Copy, Debug)]
pub struct ConvGeom {
    pub batch: usize,
    pub c_in: usize,
    pub len: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub padding: usize,
    pub len_out: usize,
}

impl ConvGeom {
    pub fn new(x: &[usize], w: &[usize], stride: usize, padding: usize) -> Result<Self> {
        if x.len() != 3 || w.len() != 3 {
            return Err(dim_err!("conv1d expects x [batch, ch, len] and w [out, in, k], got {:?} and {:?}", x, w));
        }
        if x[1] != w[1] {
            return Err(dim_err!("conv1d: input has {} channels but kernels expect {}", x[1], w[1]));
        }
        if stride == 0 {
            return Err(dim_err!("conv1d: stride must be at least 1"));
        }
        if x[2] + 2 * padding < w[2] || w[2] == 0 {
            return Err(dim_err!(
                "conv1d: kernel {:?} larger than padded input length {}",
                w,
                x[2] + 2 * padding
            ));
        }
        Ok(ConvGeom {
            batch: x[0],
            c_in: x[1],
            len: x[2],
            c_out: w[0],
            k: w[2],
            stride,
            padding,
            len_out: (x[2] + 2 * padding - w[2]) / stride + 1,
        })
    }

    /// Output positions `t` for which input index `t·stride + tap − padding` is in range.
    fn valid(&self, tap: usize) -> std::ops::Range<usize> {
        let (s, p, l) = (self.stride as i64, self.padding as i64, self.len as i64);
        let off = tap as i64 - p;
        // t*s + off >= 0  and  t*s + off <= l - 1
        let lo = if off >= 0 { 0 } else { (-off + s - 1) / s };
        let hi_incl = (l - 1 - off).div_euclid(s);
        let hi = (hi_incl + 1).clamp(0, self.len_out as i64);
        (lo.min(hi) as usize)..(hi as usize)
    }

    fn input_index(&self, t: usize, tap: usize) -> usize {
        t * self.stride + tap - self.padding
    }
}

pub fn conv1d_forward(g: &ConvGeom, x: &[f64], w: &[f64], bias: Option<&[f64]>) -> Vec<f64> {
    let per_out = g.c_out * g.len_out;
    let mut out = vec![0.0; g.batch * per_out];
    if per_out == 0 {
        return out;
    }
    let ranges: Vec<_> = (0..g.k).map(|t| g.valid(t)).collect();
    let sample = |(b, o): (usize, &mut [f64])| {
        let xb = &x[b * g.c_in * g.len..(b + 1) * g.c_in * g.len];
        for co in 0..g.c_out {
            let orow = &mut o[co * g.len_out..(co + 1) * g.len_out];
            if let Some(bias) = bias {
                orow.iter_mut().for_each(|v| *v = bias[co]);
            }
            for ci in 0..g.c_in {
                let xr = &xb[ci * g.len..(ci + 1) * g.len];
                for tap in 0..g.k {
                    let wv = w[(co * g.c_in + ci) * g.k + tap];
                    for t in ranges[tap].clone() {
                        orow[t] += wv * xr[g.input_index(t, tap)];
                    }
                }
            }
        }
    };
    if g.batch * per_out * g.c_in * g.k >= PAR_THRESHOLD {
        out.par_chunks_mut(per_out).enumerate().for_each(sample);
    } else {
        out.chunks_mut(per_out).enumerate().for_each(sample);
    }
    out
}

pub fn conv1d_grad_input(g: &ConvGeom, dy: &[f64], w: &[f64]) -> Vec<f64> {
    let per_in = g.c_in * g.len;
    let mut dx = vec![0.0; g.batch * per_in];
    if per_in == 0 {
        return dx;
    }
    let ranges: Vec<_> = (0..g.k).map(|t| g.valid(t)).collect();
    let sample = |(b, d): (usize, &mut [f64])| {
        let gb = &dy[b * g.c_out * g.len_out..(b + 1) * g.c_out * g.len_out];
        for co in 0..g.c_out {
            let grow = &gb[co * g.len_out..(co + 1) * g.len_out];
            for ci in 0..g.c_in {
                let drow = &mut d[ci * g.len..(ci + 1) * g.len];
                for tap in 0..g.k {
                    let wv = w[(co * g.c_in + ci) * g.k + tap];
                    for t in ranges[tap].clone() {
                        drow[g.input_index(t, tap)] += wv * grow[t];
                    }
                }
            }
        }
    };
    if g.batch * g.c_out * g.len_out * g.c_in * g.k >= PAR_THRESHOLD {
        dx.par_chunks_mut(per_in).enumerate().for_each(sample);
    } else {
        dx.chunks_mut(per_in).enumerate().for_each(sample);
    }
    dx
}

pub fn conv1d_grad_weight(g: &ConvGeom, dy: &[f64], x: &[f64]) -> Vec<f64> {
    let per_co = g.c_in * g.k;
    let mut dw = vec![0.0; g.c_out * per_co];
    if per_co == 0 {
        return dw;
    }
    let ranges: Vec<_> = (0..g.k).map(|t| g.valid(t)).collect();
    let channel = |(co, d): (usize, &mut [f64])| {
        for b in 0..g.batch {
            let grow = &dy[(b * g.c_out + co) * g.len_out..(b * g.c_out + co + 1) * g.len_out];
            for ci in 0..g.c_in {
                let xr = &x[(b * g.c_in + ci) * g.len..(b * g.c_in + ci + 1) * g.len];
                for tap in 0..g.k {
                    let mut s = 0.0;
                    for t in ranges[tap].clone() {
                        s += grow[t] * xr[g.input_index(t, tap)];
                    }
                    d[ci * g.k + tap] += s;
                }
            }
        }
    };
    if g.batch * g.c_out * g.len_out * per_co >= PAR_THRESHOLD {
        dw.par_chunks_mut(per_co).enumerate().for_each(channel);
    } else {
        dw.chunks_mut(per_co).enumerate().for_each(channel);
    }
    dw
}

pub fn conv1d_grad_bias(g: &ConvGeom, dy: &[f64]) -> Vec<f64> {
    let mut db = vec![0.0; g.c_out];
    for b in 0..g.batch {
        for (co, d) in db.iter_mut().enumerate() {
            let base = (b * g.c_out + co) * g.len_out;
            *d += dy[base..base + g.len_out].iter().sum::<f64>();
        }
    }
    db
}
