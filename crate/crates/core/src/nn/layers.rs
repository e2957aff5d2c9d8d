//! Slice-level forward and backward kernels. Shapes are `[c, h, w]` per
//! batch item; batches are laid out contiguously.

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub in_shape: [usize; 3],
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvGeom {
    pub fn out_hw(&self) -> (usize, usize) {
        let [_, h, w] = self.in_shape;
        ((h - self.kernel) / self.stride + 1, (w - self.kernel) / self.stride + 1)
    }

    pub fn out_shape(&self) -> [usize; 3] {
        let (oh, ow) = self.out_hw();
        [self.out_channels, oh, ow]
    }

    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_shape[0] * self.kernel * self.kernel
    }
}

pub(crate) fn conv_forward(
    g: &ConvGeom,
    input: &[f64],
    batch: usize,
    weight: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let [c, h, w] = g.in_shape;
    let (oh, ow) = g.out_hw();
    let (k, s) = (g.kernel, g.stride);
    let in_len = c * h * w;
    let plane = oh * ow;
    let mut out = vec![0.0; batch * g.out_channels * plane];
    for b in 0..batch {
        let x = &input[b * in_len..(b + 1) * in_len];
        for oc in 0..g.out_channels {
            let o = &mut out[(b * g.out_channels + oc) * plane..][..plane];
            o.fill(bias[oc]);
            for ic in 0..c {
                let xin = &x[ic * h * w..(ic + 1) * h * w];
                let wk = &weight[(oc * c + ic) * k * k..][..k * k];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = wk[ky * k + kx];
                        for oy in 0..oh {
                            let row = &xin[(oy * s + ky) * w + kx..];
                            let orow = &mut o[oy * ow..(oy + 1) * ow];
                            if s == 1 {
                                for (ov, xv) in orow.iter_mut().zip(&row[..ow]) {
                                    *ov += wv * xv;
                                }
                            } else {
                                for (ox, ov) in orow.iter_mut().enumerate() {
                                    *ov += wv * row[ox * s];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight and bias gradients; returns the input gradient.
pub(crate) fn conv_backward(
    g: &ConvGeom,
    input: &[f64],
    batch: usize,
    weight: &[f64],
    dout: &[f64],
    dweight: &mut [f64],
    dbias: &mut [f64],
) -> Vec<f64> {
    let [c, h, w] = g.in_shape;
    let (oh, ow) = g.out_hw();
    let (k, s) = (g.kernel, g.stride);
    let in_len = c * h * w;
    let plane = oh * ow;
    let mut din = vec![0.0; input.len()];
    for b in 0..batch {
        let x = &input[b * in_len..(b + 1) * in_len];
        let dx = &mut din[b * in_len..(b + 1) * in_len];
        for oc in 0..g.out_channels {
            let d = &dout[(b * g.out_channels + oc) * plane..][..plane];
            dbias[oc] += d.iter().sum::<f64>();
            for ic in 0..c {
                let xin = &x[ic * h * w..(ic + 1) * h * w];
                let dxin = &mut dx[ic * h * w..(ic + 1) * h * w];
                let base = (oc * c + ic) * k * k;
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = weight[base + ky * k + kx];
                        let mut acc = 0.0;
                        for oy in 0..oh {
                            let drow = &d[oy * ow..(oy + 1) * ow];
                            let start = (oy * s + ky) * w + kx;
                            if s == 1 {
                                let row = &xin[start..start + ow];
                                acc += drow.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
                                for (dv, gv) in dxin[start..start + ow].iter_mut().zip(drow) {
                                    *dv += wv * gv;
                                }
                            } else {
                                for (ox, gv) in drow.iter().enumerate() {
                                    acc += gv * xin[start + ox * s];
                                    dxin[start + ox * s] += wv * gv;
                                }
                            }
                        }
                        dweight[base + ky * k + kx] += acc;
                    }
                }
            }
        }
    }
    din
}

pub(crate) fn pool_out_shape(in_shape: [usize; 3], kernel: usize) -> [usize; 3] {
    [in_shape[0], in_shape[1] / kernel, in_shape[2] / kernel]
}

/// Non-overlapping max pooling (stride = kernel, trailing rows/cols dropped).
/// Returns the output and, per output element, the flat input index chosen.
pub(crate) fn maxpool_forward(
    in_shape: [usize; 3],
    kernel: usize,
    input: &[f64],
    batch: usize,
) -> (Vec<f64>, Vec<usize>) {
    let [c, h, w] = in_shape;
    let [_, oh, ow] = pool_out_shape(in_shape, kernel);
    let mut out = Vec::with_capacity(batch * c * oh * ow);
    let mut arg = Vec::with_capacity(out.capacity());
    for b in 0..batch {
        for ch in 0..c {
            let base = (b * c + ch) * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = base + oy * kernel * w + ox * kernel;
                    for ky in 0..kernel {
                        for kx in 0..kernel {
                            let i = base + (oy * kernel + ky) * w + ox * kernel + kx;
                            if input[i] > best {
                                best = input[i];
                                best_i = i;
                            }
                        }
                    }
                    out.push(best);
                    arg.push(best_i);
                }
            }
        }
    }
    (out, arg)
}

pub(crate) fn maxpool_backward(argmax: &[usize], dout: &[f64], in_len: usize) -> Vec<f64> {
    let mut din = vec![0.0; in_len];
    for (&i, &d) in argmax.iter().zip(dout) {
        din[i] += d;
    }
    din
}

pub(crate) fn dense_forward(
    input: &[f64],
    batch: usize,
    fan_in: usize,
    out: usize,
    weight: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let mut y = Vec::with_capacity(batch * out);
    for b in 0..batch {
        let x = &input[b * fan_in..(b + 1) * fan_in];
        for o in 0..out {
            let wr = &weight[o * fan_in..(o + 1) * fan_in];
            y.push(bias[o] + wr.iter().zip(x).map(|(a, b)| a * b).sum::<f64>());
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_backward(
    input: &[f64],
    batch: usize,
    fan_in: usize,
    out: usize,
    weight: &[f64],
    dout: &[f64],
    dweight: &mut [f64],
    dbias: &mut [f64],
) -> Vec<f64> {
    let mut din = vec![0.0; batch * fan_in];
    for b in 0..batch {
        let x = &input[b * fan_in..(b + 1) * fan_in];
        let dx = &mut din[b * fan_in..(b + 1) * fan_in];
        for o in 0..out {
            let g = dout[b * out + o];
            if g == 0.0 {
                continue;
            }
            dbias[o] += g;
            let wr = &weight[o * fan_in..(o + 1) * fan_in];
            let dwr = &mut dweight[o * fan_in..(o + 1) * fan_in];
            for i in 0..fan_in {
                dwr[i] += g * x[i];
                dx[i] += g * wr[i];
            }
        }
    }
    din
}
