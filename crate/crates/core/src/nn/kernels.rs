//! Loop kernels over flat row-major buffers. Batch is always the leading
//! dimension; convolution weights are laid out `[out][in][k][k]` and dense
//! weights `[out][in]`.

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn in_len(&self) -> usize {
        self.cin * self.h * self.w
    }

    pub fn out_len(&self) -> usize {
        self.cout * self.oh * self.ow
    }
}

/// Output indices `o` in `[start, end)` for which `o*stride + k_off - pad`
/// lands inside `[0, in_len)`.
#[inline]
fn valid(k_off: usize, pad: usize, stride: usize, in_len: usize, out_len: usize) -> (usize, usize) {
    let start = if pad > k_off {
        (pad - k_off).div_ceil(stride)
    } else {
        0
    };
    if in_len + pad < k_off + 1 {
        return (0, 0);
    }
    let end = ((in_len - 1 + pad - k_off) / stride + 1).min(out_len);
    (start.min(end), end)
}

pub(crate) fn dense_forward(x: &[f64], n: usize, fin: usize, fout: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n * fout];
    for s in 0..n {
        let xs = &x[s * fin..(s + 1) * fin];
        for (j, o) in out[s * fout..(s + 1) * fout].iter_mut().enumerate() {
            let row = &w[j * fin..(j + 1) * fin];
            *o = b[j] + dot(row, xs);
        }
    }
    out
}

/// `g_in[k] = Σ_j w[j][k] g_out[j]`.
pub(crate) fn dense_backward_input(g: &[f64], n: usize, fin: usize, fout: usize, w: &[f64]) -> Vec<f64> {
    let mut gin = vec![0.0; n * fin];
    for s in 0..n {
        let gi = &mut gin[s * fin..(s + 1) * fin];
        for j in 0..fout {
            let gj = g[s * fout + j];
            let row = &w[j * fin..(j + 1) * fin];
            for (a, &wv) in gi.iter_mut().zip(row) {
                *a += wv * gj;
            }
        }
    }
    gin
}

pub(crate) fn dense_backward_params(
    x: &[f64],
    g: &[f64],
    n: usize,
    fin: usize,
    fout: usize,
    gw: &mut [f64],
    gb: &mut [f64],
) {
    for s in 0..n {
        let xs = &x[s * fin..(s + 1) * fin];
        for j in 0..fout {
            let gj = g[s * fout + j];
            gb[j] += gj;
            for (a, &xv) in gw[j * fin..(j + 1) * fin].iter_mut().zip(xs) {
                *a += gj * xv;
            }
        }
    }
}

/// Unfolds one sample into a `[cin·k·k][oh·ow]` patch matrix; padded taps
/// stay zero.
fn im2col(xs: &[f64], geo: &ConvGeom, col: &mut [f64]) {
    let plane = geo.oh * geo.ow;
    col.fill(0.0);
    for ic in 0..geo.cin {
        let ip = &xs[ic * geo.h * geo.w..(ic + 1) * geo.h * geo.w];
        for ky in 0..geo.k {
            let (y0, y1) = valid(ky, geo.pad, geo.stride, geo.h, geo.oh);
            for kx in 0..geo.k {
                let (x0, x1) = valid(kx, geo.pad, geo.stride, geo.w, geo.ow);
                let r = (ic * geo.k + ky) * geo.k + kx;
                let crow = &mut col[r * plane..(r + 1) * plane];
                for oy in y0..y1 {
                    let iy = oy * geo.stride + ky - geo.pad;
                    let irow = &ip[iy * geo.w..(iy + 1) * geo.w];
                    let orow = &mut crow[oy * geo.ow..(oy + 1) * geo.ow];
                    for ox in x0..x1 {
                        orow[ox] = irow[ox * geo.stride + kx - geo.pad];
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates a patch matrix back onto the image.
fn col2im(col: &[f64], geo: &ConvGeom, gi: &mut [f64]) {
    let plane = geo.oh * geo.ow;
    for ic in 0..geo.cin {
        let ip = &mut gi[ic * geo.h * geo.w..(ic + 1) * geo.h * geo.w];
        for ky in 0..geo.k {
            let (y0, y1) = valid(ky, geo.pad, geo.stride, geo.h, geo.oh);
            for kx in 0..geo.k {
                let (x0, x1) = valid(kx, geo.pad, geo.stride, geo.w, geo.ow);
                let r = (ic * geo.k + ky) * geo.k + kx;
                let crow = &col[r * plane..(r + 1) * plane];
                for oy in y0..y1 {
                    let iy = oy * geo.stride + ky - geo.pad;
                    let irow = &mut ip[iy * geo.w..(iy + 1) * geo.w];
                    let grow = &crow[oy * geo.ow..(oy + 1) * geo.ow];
                    for ox in x0..x1 {
                        irow[ox * geo.stride + kx - geo.pad] += grow[ox];
                    }
                }
            }
        }
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (v, &u) in y.iter_mut().zip(x) {
        *v += a * u;
    }
}

pub(crate) fn conv_forward(x: &[f64], n: usize, geo: &ConvGeom, w: &[f64], b: &[f64]) -> Vec<f64> {
    let (il, ol, plane) = (geo.in_len(), geo.out_len(), geo.oh * geo.ow);
    let rows = geo.cin * geo.k * geo.k;
    let mut col = vec![0.0; rows * plane];
    let mut out = vec![0.0; n * ol];
    for s in 0..n {
        im2col(&x[s * il..(s + 1) * il], geo, &mut col);
        for oc in 0..geo.cout {
            let op = &mut out[s * ol + oc * plane..s * ol + (oc + 1) * plane];
            op.fill(b[oc]);
            let wr = &w[oc * rows..(oc + 1) * rows];
            for (r, &wv) in wr.iter().enumerate() {
                axpy(op, wv, &col[r * plane..(r + 1) * plane]);
            }
        }
    }
    out
}

pub(crate) fn conv_backward_input(g: &[f64], n: usize, geo: &ConvGeom, w: &[f64]) -> Vec<f64> {
    let (il, ol, plane) = (geo.in_len(), geo.out_len(), geo.oh * geo.ow);
    let rows = geo.cin * geo.k * geo.k;
    let mut col = vec![0.0; rows * plane];
    let mut gin = vec![0.0; n * il];
    for s in 0..n {
        col.fill(0.0);
        for oc in 0..geo.cout {
            let gp = &g[s * ol + oc * plane..s * ol + (oc + 1) * plane];
            for (r, &wv) in w[oc * rows..(oc + 1) * rows].iter().enumerate() {
                axpy(&mut col[r * plane..(r + 1) * plane], wv, gp);
            }
        }
        col2im(&col, geo, &mut gin[s * il..(s + 1) * il]);
    }
    gin
}

pub(crate) fn conv_backward_params(
    x: &[f64],
    g: &[f64],
    n: usize,
    geo: &ConvGeom,
    gw: &mut [f64],
    gb: &mut [f64],
) {
    let (il, ol, plane) = (geo.in_len(), geo.out_len(), geo.oh * geo.ow);
    let rows = geo.cin * geo.k * geo.k;
    let mut col = vec![0.0; rows * plane];
    for s in 0..n {
        im2col(&x[s * il..(s + 1) * il], geo, &mut col);
        for oc in 0..geo.cout {
            let gp = &g[s * ol + oc * plane..s * ol + (oc + 1) * plane];
            gb[oc] += gp.iter().sum::<f64>();
            for (r, acc) in gw[oc * rows..(oc + 1) * rows].iter_mut().enumerate() {
                *acc += dot(gp, &col[r * plane..(r + 1) * plane]);
            }
        }
    }
}

/// Max pooling; returns outputs and, per output, the flat index (within the
/// whole batch buffer) of the winning input. Ties go to the first maximum in
/// row-major window order.
#[allow(clippy::too_many_arguments)]
pub(crate) fn maxpool_forward(
    x: &[f64],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    oh: usize,
    ow: usize,
) -> (Vec<f64>, Vec<usize>) {
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * stride * w + ox * stride;
                for ky in 0..k {
                    for kx in 0..k {
                        let idx = base + (oy * stride + ky) * w + ox * stride + kx;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

pub(crate) fn scatter(g: &[f64], arg: &[usize], in_len: usize) -> Vec<f64> {
    let mut gin = vec![0.0; in_len];
    for (&gv, &i) in g.iter().zip(arg) {
        gin[i] += gv;
    }
    gin
}

pub(crate) fn gap_forward(x: &[f64], n: usize, c: usize, plane: usize) -> Vec<f64> {
    (0..n * c)
        .map(|p| x[p * plane..(p + 1) * plane].iter().sum::<f64>() / plane as f64)
        .collect()
}

/// Spreads each channel value uniformly over its spatial plane, divided by
/// the plane size (the adjoint of averaging).
pub(crate) fn gap_backward(g: &[f64], plane: usize) -> Vec<f64> {
    g.iter()
        .flat_map(|&v| std::iter::repeat_n(v / plane as f64, plane))
        .collect()
}
