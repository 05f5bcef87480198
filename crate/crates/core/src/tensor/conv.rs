use super::graph::Op;
use super::{gemm, Float, Graph, MatView, Tensor, Var};
use crate::error::{Error, Result};

/// Geometry of a 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub groups: usize,
    pub bias: bool,
}

impl ConvSpec {
    /// Square kernel, stride 1, "same" padding for odd kernels, no bias.
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel: (kernel, kernel),
            stride: (1, 1),
            padding: (kernel / 2, kernel / 2),
            groups: 1,
            bias: false,
        }
    }

    pub fn stride(mut self, s: usize) -> Self {
        self.stride = (s, s);
        self
    }

    pub fn stride2(mut self, sh: usize, sw: usize) -> Self {
        self.stride = (sh, sw);
        self
    }

    pub fn padding(mut self, p: usize) -> Self {
        self.padding = (p, p);
        self
    }

    pub fn groups(mut self, g: usize) -> Self {
        self.groups = g;
        self
    }

    pub fn bias(mut self, b: bool) -> Self {
        self.bias = b;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (kh, kw) = self.kernel;
        if self.in_channels == 0 || self.out_channels == 0 || kh == 0 || kw == 0 {
            return Err(Error::invalid(format!("degenerate convolution {self:?}")));
        }
        if self.stride.0 == 0 || self.stride.1 == 0 {
            return Err(Error::invalid("convolution stride must be positive"));
        }
        if self.groups == 0
            || !self.in_channels.is_multiple_of(self.groups)
            || !self.out_channels.is_multiple_of(self.groups)
        {
            return Err(Error::invalid(format!(
                "channels {}->{} not divisible by groups {}",
                self.in_channels, self.out_channels, self.groups
            )));
        }
        Ok(())
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [
            self.out_channels,
            self.in_channels / self.groups,
            self.kernel.0,
            self.kernel.1,
        ]
    }

    /// Trainable scalars in weight and bias.
    pub fn param_count(&self) -> usize {
        let w: usize = self.weight_shape().iter().product();
        w + if self.bias { self.out_channels } else { 0 }
    }

    /// Output spatial size for an `h x w` input.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let out = |size: usize, k: usize, s: usize, p: usize, axis: &str| {
            if size + 2 * p < k {
                Err(Error::shape(format!(
                    "{axis} size {size} (+2x{p} padding) smaller than kernel {k}"
                )))
            } else {
                Ok((size + 2 * p - k) / s + 1)
            }
        };
        Ok((
            out(h, self.kernel.0, self.stride.0, self.padding.0, "height")?,
            out(w, self.kernel.1, self.stride.1, self.padding.1, "width")?,
        ))
    }

    /// Multiply-accumulates per sample for an `h x w` input.
    pub fn macs(&self, h: usize, w: usize) -> Result<u64> {
        let (ho, wo) = self.output_hw(h, w)?;
        let per_out = (self.in_channels / self.groups) * self.kernel.0 * self.kernel.1;
        Ok((per_out * self.out_channels * ho * wo) as u64)
    }

    fn is_depthwise(&self) -> bool {
        self.groups == self.in_channels && self.groups == self.out_channels && self.groups > 1
    }
}

struct Geometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
}

/// Valid output-column range `[lo, hi)` for kernel offset `k` along an axis.
fn valid_range(out: usize, size: usize, stride: usize, pad: usize, k: usize) -> (usize, usize) {
    // input index = o * stride + k - pad must lie in [0, size)
    let lo = if pad > k {
        (pad - k).div_ceil(stride)
    } else {
        0
    };
    let hi = if size + pad > k {
        ((size + pad - k - 1) / stride + 1).min(out)
    } else {
        0
    };
    (lo.min(out), hi.max(lo.min(out)))
}

fn im2col<T: Float>(x: &[T], c0: usize, g: &Geometry, spec: &ConvSpec, cg: usize, cols: &mut [T]) {
    let (kh, kw) = spec.kernel;
    let (sh, sw) = spec.stride;
    let (ph, pw) = spec.padding;
    let p = g.ho * g.wo;
    for ci in 0..cg {
        let plane = &x[(c0 + ci) * g.h * g.w..(c0 + ci + 1) * g.h * g.w];
        for ki in 0..kh {
            let (ylo, yhi) = valid_range(g.ho, g.h, sh, ph, ki);
            for kj in 0..kw {
                let (xlo, xhi) = valid_range(g.wo, g.w, sw, pw, kj);
                let row = &mut cols[((ci * kh + ki) * kw + kj) * p..][..p];
                row.iter_mut().for_each(|v| *v = T::zero());
                for oy in ylo..yhi {
                    let iy = oy * sh + ki - ph;
                    let src = &plane[iy * g.w..(iy + 1) * g.w];
                    let dst = &mut row[oy * g.wo..(oy + 1) * g.wo];
                    if sw == 1 {
                        let ix0 = xlo + kj - pw;
                        dst[xlo..xhi].copy_from_slice(&src[ix0..ix0 + (xhi - xlo)]);
                    } else {
                        for ox in xlo..xhi {
                            dst[ox] = src[ox * sw + kj - pw];
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Float>(cols: &[T], c0: usize, g: &Geometry, spec: &ConvSpec, cg: usize, dx: &mut [T]) {
    let (kh, kw) = spec.kernel;
    let (sh, sw) = spec.stride;
    let (ph, pw) = spec.padding;
    let p = g.ho * g.wo;
    for ci in 0..cg {
        let plane = &mut dx[(c0 + ci) * g.h * g.w..(c0 + ci + 1) * g.h * g.w];
        for ki in 0..kh {
            let (ylo, yhi) = valid_range(g.ho, g.h, sh, ph, ki);
            for kj in 0..kw {
                let (xlo, xhi) = valid_range(g.wo, g.w, sw, pw, kj);
                let row = &cols[((ci * kh + ki) * kw + kj) * p..][..p];
                for oy in ylo..yhi {
                    let iy = oy * sh + ki - ph;
                    let dst = &mut plane[iy * g.w..(iy + 1) * g.w];
                    let src = &row[oy * g.wo..(oy + 1) * g.wo];
                    for ox in xlo..xhi {
                        dst[ox * sw + kj - pw] += src[ox];
                    }
                }
            }
        }
    }
}

fn depthwise_forward<T: Float>(x: &[T], w: &[T], g: &Geometry, spec: &ConvSpec, out: &mut [T]) {
    let (kh, kw) = spec.kernel;
    let (sh, sw) = spec.stride;
    let (ph, pw) = spec.padding;
    for n in 0..g.n {
        for c in 0..g.c {
            let plane = &x[(n * g.c + c) * g.h * g.w..][..g.h * g.w];
            let dst = &mut out[(n * g.c + c) * g.ho * g.wo..][..g.ho * g.wo];
            let kern = &w[c * kh * kw..(c + 1) * kh * kw];
            for ki in 0..kh {
                let (ylo, yhi) = valid_range(g.ho, g.h, sh, ph, ki);
                for kj in 0..kw {
                    let (xlo, xhi) = valid_range(g.wo, g.w, sw, pw, kj);
                    let wv = kern[ki * kw + kj];
                    for oy in ylo..yhi {
                        let src = &plane[(oy * sh + ki - ph) * g.w..][..g.w];
                        let row = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                        for ox in xlo..xhi {
                            row[ox] += wv * src[ox * sw + kj - pw];
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn depthwise_backward<T: Float>(
    x: &[T],
    w: &[T],
    g: &Geometry,
    spec: &ConvSpec,
    gout: &[T],
    dx: Option<&mut [T]>,
    dw: Option<&mut [T]>,
) {
    let (kh, kw) = spec.kernel;
    let (sh, sw) = spec.stride;
    let (ph, pw) = spec.padding;
    let mut dx = dx;
    let mut dw = dw;
    for n in 0..g.n {
        for c in 0..g.c {
            let base_in = (n * g.c + c) * g.h * g.w;
            let go = &gout[(n * g.c + c) * g.ho * g.wo..][..g.ho * g.wo];
            for ki in 0..kh {
                let (ylo, yhi) = valid_range(g.ho, g.h, sh, ph, ki);
                for kj in 0..kw {
                    let (xlo, xhi) = valid_range(g.wo, g.w, sw, pw, kj);
                    let widx = c * kh * kw + ki * kw + kj;
                    let wv = w[widx];
                    let mut acc = T::zero();
                    for oy in ylo..yhi {
                        let row_in = base_in + (oy * sh + ki - ph) * g.w;
                        let go_row = &go[oy * g.wo..(oy + 1) * g.wo];
                        if let Some(dx) = dx.as_deref_mut() {
                            for ox in xlo..xhi {
                                dx[row_in + ox * sw + kj - pw] += wv * go_row[ox];
                            }
                        }
                        if dw.is_some() {
                            for ox in xlo..xhi {
                                acc += x[row_in + ox * sw + kj - pw] * go_row[ox];
                            }
                        }
                    }
                    if let Some(dw) = dw.as_deref_mut() {
                        dw[widx] += acc;
                    }
                }
            }
        }
    }
}

impl<T: Float> Graph<T> {
    /// 2-D convolution of an `[N, C, H, W]` input with `[C', C/groups, kh, kw]`
    /// weights and an optional `[C']` bias.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, spec: &ConvSpec) -> Result<Var> {
        spec.validate()?;
        let [n, c, h, wd] = self.value(x).dims4("conv2d")?;
        if c != spec.in_channels {
            return Err(Error::shape(format!(
                "conv2d input has {c} channels (dim 1), spec expects {}",
                spec.in_channels
            )));
        }
        let wshape = spec.weight_shape();
        if self.shape(w) != wshape {
            return Err(Error::shape(format!(
                "conv2d weight shape {:?}, expected {wshape:?}",
                self.shape(w)
            )));
        }
        if spec.bias != b.is_some() {
            return Err(Error::invalid("conv2d bias presence disagrees with spec"));
        }
        if let Some(b) = b {
            if self.shape(b) != [spec.out_channels] {
                return Err(Error::shape(format!(
                    "conv2d bias shape {:?}, expected [{}]",
                    self.shape(b),
                    spec.out_channels
                )));
            }
        }
        let (ho, wo) = spec.output_hw(h, wd)?;
        let geo = Geometry {
            n,
            c,
            h,
            w: wd,
            ho,
            wo,
        };
        let o = spec.out_channels;
        let p = ho * wo;
        let mut out = vec![T::zero(); n * o * p];
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        if spec.is_depthwise() {
            depthwise_forward(xv, wv, &geo, spec, &mut out);
        } else {
            let g = spec.groups;
            let cg = c / g;
            let og = o / g;
            let k = cg * spec.kernel.0 * spec.kernel.1;
            let mut cols = vec![T::zero(); k * p];
            for s in 0..n {
                let xs = &xv[s * c * h * wd..(s + 1) * c * h * wd];
                for grp in 0..g {
                    im2col(xs, grp * cg, &geo, spec, cg, &mut cols);
                    let dst = &mut out[(s * o + grp * og) * p..(s * o + (grp + 1) * og) * p];
                    gemm(
                        &wv[grp * og * k..(grp + 1) * og * k],
                        MatView::plain(og, k),
                        &cols,
                        MatView::plain(k, p),
                        dst,
                        T::zero(),
                    );
                }
            }
        }
        if let Some(b) = b {
            let bv = self.value(b).data();
            for s in 0..n {
                for (oc, &bias) in bv.iter().enumerate() {
                    out[(s * o + oc) * p..(s * o + oc + 1) * p]
                        .iter_mut()
                        .for_each(|v| *v += bias);
                }
            }
        }
        let value = Tensor::new(&[n, o, ho, wo], out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(
            value,
            Op::Conv2d {
                x,
                w,
                b,
                spec: *spec,
            },
            &inputs,
        ))
    }
}

pub(super) fn backward<T: Float>(
    graph: &Graph<T>,
    x: Var,
    w: Var,
    b: Option<Var>,
    spec: &ConvSpec,
    gout: &Tensor<T>,
) -> Vec<(Var, Tensor<T>)> {
    let xt = graph.value(x);
    let wt = graph.value(w);
    let [n, c, h, wd] = xt.dims4("conv2d").expect("checked in forward");
    let [_, o, ho, wo] = gout.dims4("conv2d").expect("checked in forward");
    let geo = Geometry {
        n,
        c,
        h,
        w: wd,
        ho,
        wo,
    };
    let p = ho * wo;
    let need_x = graph.needs(x);
    let need_w = graph.needs(w);
    let mut dx = need_x.then(|| vec![T::zero(); xt.numel()]);
    let mut dw = need_w.then(|| vec![T::zero(); wt.numel()]);
    let go = gout.data();

    if spec.is_depthwise() {
        depthwise_backward(
            xt.data(),
            wt.data(),
            &geo,
            spec,
            go,
            dx.as_deref_mut(),
            dw.as_deref_mut(),
        );
    } else if need_x || need_w {
        let g = spec.groups;
        let cg = c / g;
        let og = o / g;
        let k = cg * spec.kernel.0 * spec.kernel.1;
        let mut cols = vec![T::zero(); k * p];
        for s in 0..n {
            let xs = &xt.data()[s * c * h * wd..(s + 1) * c * h * wd];
            for grp in 0..g {
                let go_g = &go[(s * o + grp * og) * p..(s * o + (grp + 1) * og) * p];
                if let Some(dw) = dw.as_deref_mut() {
                    im2col(xs, grp * cg, &geo, spec, cg, &mut cols);
                    gemm(
                        go_g,
                        MatView::plain(og, p),
                        &cols,
                        MatView::t(k, p),
                        &mut dw[grp * og * k..(grp + 1) * og * k],
                        T::one(),
                    );
                }
                if let Some(dx) = dx.as_deref_mut() {
                    gemm(
                        &wt.data()[grp * og * k..(grp + 1) * og * k],
                        MatView::t(og, k),
                        go_g,
                        MatView::plain(og, p),
                        &mut cols,
                        T::zero(),
                    );
                    col2im(
                        &cols,
                        grp * cg,
                        &geo,
                        spec,
                        cg,
                        &mut dx[s * c * h * wd..(s + 1) * c * h * wd],
                    );
                }
            }
        }
    }

    let mut grads = Vec::with_capacity(3);
    if let Some(dx) = dx {
        grads.push((x, Tensor::new(xt.shape(), dx).expect("shape")));
    }
    if let Some(dw) = dw {
        grads.push((w, Tensor::new(wt.shape(), dw).expect("shape")));
    }
    if let Some(b) = b.filter(|&b| graph.needs(b)) {
        let mut db = vec![T::zero(); o];
        for s in 0..n {
            for (oc, acc) in db.iter_mut().enumerate() {
                *acc += go[(s * o + oc) * p..(s * o + oc + 1) * p]
                    .iter()
                    .copied()
                    .sum();
            }
        }
        grads.push((b, Tensor::new(&[o], db).expect("shape")));
    }
    grads
}
