use crate::autodiff::kernels::{self, ConvGeom};
use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Relu,
    Sigmoid,
    Tanh,
    Log,
    Neg,
    Abs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduce {
    Sum,
    Mean,
    SumAbs,
    SumSq,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// `v(i,j) − v(i−1,j)` for `i ≥ 1`.
    Vertical,
    /// `v(i,j−1) − v(i,j)` for `j ≥ 1`.
    Horizontal,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Unary(Var, Unary),
    Binary(Var, Var, Binary),
    Affine(Var, f64),
    ClampMin(Var, f64),
    Conv2d { input: Var, weight: Var, bias: Option<Var>, geom: ConvGeom },
    MaxPool2 { input: Var, argmax: Vec<usize> },
    Upsample2 { input: Var },
    Reduce(Var, Reduce),
    Concat(Vec<Var>),
    SliceChannels { input: Var, start: usize },
    Reshape(Var),
    SepConv { frame: Var, kv: Var, kh: Var },
    SpectralScale { weight: Var, u: Vec<f64>, v: Vec<f64>, sigma: f64, lipschitz: f64, guarded: bool },
    Linear { input: Var, weight: Var, bias: Option<Var> },
    Diff(Var, Axis),
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Unary(a, _) | Op::Affine(a, ..) | Op::ClampMin(a, _) | Op::Reduce(a, _) | Op::Reshape(a) | Op::Diff(a, _) => vec![*a],
            Op::Binary(a, b, _) => vec![*a, *b],
            Op::Conv2d { input, weight, bias, .. } | Op::Linear { input, weight, bias } => {
                let mut v = vec![*input, *weight];
                v.extend(bias);
                v
            }
            Op::MaxPool2 { input, .. } | Op::Upsample2 { input } | Op::SliceChannels { input, .. } => vec![*input],
            Op::Concat(parts) => parts.clone(),
            Op::SepConv { frame, kv, kh } => vec![*frame, *kv, *kh],
            Op::SpectralScale { weight, .. } => vec![*weight],
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Summary of one [`Graph::backward`] call.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BackwardStats {
    /// Recorded operations whose backward rule ran.
    pub ops_visited: usize,
}

/// A Wengert tape: every operation appends a node whose inputs precede it,
/// so reverse index order is a valid reverse topological order.
///
/// Leaf gradients accumulate across `backward` calls until [`Graph::zero_grad`].
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    leaf_grads: Vec<Option<Vec<f64>>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        debug_assert!(op.inputs().iter().all(|v| v.0 < self.nodes.len()));
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// Records a leaf that never receives gradients.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        self.leaf_grads[v.0]
            .as_ref()
            .map(|g| Tensor::new(self.nodes[v.0].value.shape(), g.clone()).expect("grad shape"))
    }

    pub fn zero_grad(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }

    // ---- elementwise -------------------------------------------------------

    pub fn unary(&mut self, a: Var, kind: Unary) -> Result<Var> {
        let x = self.value(a);
        if kind == Unary::Log {
            if let Some(bad) = x.data().iter().find(|&&v| v <= 0.0) {
                return Err(Error::Domain(format!("log of non-positive value {bad}")));
            }
        }
        let f: fn(f64) -> f64 = match kind {
            Unary::Relu => |v| v.max(0.0),
            Unary::Sigmoid => sigmoid,
            Unary::Tanh => f64::tanh,
            Unary::Log => f64::ln,
            Unary::Neg => |v| -v,
            Unary::Abs => f64::abs,
        };
        let out = x.map(f);
        Ok(self.push(out, Op::Unary(a, kind)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Relu).expect("relu is total")
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Sigmoid).expect("sigmoid is total")
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Tanh).expect("tanh is total")
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Neg).expect("neg is total")
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Abs).expect("abs is total")
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Unary::Log)
    }

    /// Binary op where either side may be a one-element tensor broadcast over the other.
    pub fn binary(&mut self, a: Var, b: Var, kind: Binary) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        let f: fn(f64, f64) -> f64 = match kind {
            Binary::Add => |p, q| p + q,
            Binary::Sub => |p, q| p - q,
            Binary::Mul => |p, q| p * q,
        };
        let out = if x.shape() == y.shape() {
            x.zip_map(y, f)?
        } else if y.len() == 1 {
            let s = y.item();
            x.map(|p| f(p, s))
        } else if x.len() == 1 {
            let s = x.item();
            y.map(|q| f(s, q))
        } else {
            return Err(shape_err!("cannot broadcast {:?} with {:?}", x.shape(), y.shape()));
        };
        Ok(self.push(out, Op::Binary(a, b, kind)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Mul)
    }

    /// `scale·a + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let out = self.value(a).map(|v| scale * v + shift);
        self.push(out, Op::Affine(a, scale))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.affine(a, s, 0.0)
    }

    /// `max(a, floor)`; gradient passes only where `a > floor`.
    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Var {
        let out = self.value(a).map(|v| v.max(floor));
        self.push(out, Op::ClampMin(a, floor))
    }

    // ---- spatial -----------------------------------------------------------

    /// Cross-correlation of a `C_in×H×W` input with `C_out×C_in×k×k` weights and zero padding.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, padding: usize) -> Result<Var> {
        self.conv2d_strided(input, weight, bias, padding, 1)
    }

    pub fn conv2d_strided(&mut self, input: Var, weight: Var, bias: Option<Var>, padding: usize, stride: usize) -> Result<Var> {
        let (cin, h, w) = self.value(input).chw()?;
        let ws = self.shape(weight).to_vec();
        let [cout, wcin, k, k2] = ws[..] else {
            return Err(shape_err!("conv weight must be rank 4, got {:?}", ws));
        };
        if wcin != cin {
            return Err(shape_err!("conv expects {wcin} input channels, got {cin}"));
        }
        if k != k2 || k % 2 == 0 {
            return Err(shape_err!("conv kernel must be square and odd, got {k}×{k2}"));
        }
        if let Some(b) = bias {
            if self.shape(b) != [cout] {
                return Err(shape_err!("conv bias must be [{cout}], got {:?}", self.shape(b)));
            }
        }
        let geom = ConvGeom::new(cin, h, w, cout, k, padding, stride)
            .ok_or_else(|| shape_err!("kernel {k} does not fit {h}×{w} with padding {padding}"))?;
        let out = kernels::conv2d_forward(
            self.value(input).data(),
            self.value(weight).data(),
            bias.map(|b| self.value(b).data()),
            &geom,
        );
        let out = Tensor::new(&[cout, geom.ho, geom.wo], out)?;
        Ok(self.push(out, Op::Conv2d { input, weight, bias, geom }))
    }

    pub fn max_pool2(&mut self, input: Var) -> Result<Var> {
        let (c, h, w) = self.value(input).chw()?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(shape_err!("max pool needs even extents, got {h}×{w}"));
        }
        let (out, argmax) = kernels::max_pool2_forward(self.value(input).data(), c, h, w);
        let out = Tensor::new(&[c, h / 2, w / 2], out)?;
        Ok(self.push(out, Op::MaxPool2 { input, argmax }))
    }

    pub fn upsample2(&mut self, input: Var) -> Result<Var> {
        let (c, h, w) = self.value(input).chw()?;
        let out = kernels::upsample2_forward(self.value(input).data(), c, h, w);
        let out = Tensor::new(&[c, 2 * h, 2 * w], out)?;
        Ok(self.push(out, Op::Upsample2 { input }))
    }

    /// Adjacent-pixel differences of a `C×H×W` tensor; the output loses one row or column.
    pub fn diff(&mut self, input: Var, axis: Axis) -> Result<Var> {
        let (c, h, w) = self.value(input).chw()?;
        let x = self.value(input).data();
        let out = match axis {
            Axis::Vertical => {
                if h < 2 {
                    return Err(shape_err!("vertical difference needs H ≥ 2"));
                }
                let mut o = Vec::with_capacity(c * (h - 1) * w);
                for ch in 0..c {
                    for i in 1..h {
                        for j in 0..w {
                            let b = ch * h * w;
                            o.push(x[b + i * w + j] - x[b + (i - 1) * w + j]);
                        }
                    }
                }
                Tensor::new(&[c, h - 1, w], o)?
            }
            Axis::Horizontal => {
                if w < 2 {
                    return Err(shape_err!("horizontal difference needs W ≥ 2"));
                }
                let mut o = Vec::with_capacity(c * h * (w - 1));
                for ch in 0..c {
                    for i in 0..h {
                        for j in 1..w {
                            let b = ch * h * w;
                            o.push(x[b + i * w + j - 1] - x[b + i * w + j]);
                        }
                    }
                }
                Tensor::new(&[c, h, w - 1], o)?
            }
        };
        Ok(self.push(out, Op::Diff(input, axis)))
    }

    /// Per-pixel separable kernel convolution with replicate padding.
    ///
    /// `frame` is `C×H×W`; `kv` and `kh` are `k×H×W` vertical and horizontal
    /// 1D kernels. Every channel is filtered by the same per-pixel kernel
    /// `kv(y,x) ⊗ kh(y,x)`, applied as a sum of elementwise products with the
    /// `k×k` patch centered on the pixel.
    pub fn sepconv(&mut self, frame: Var, kv: Var, kh: Var) -> Result<Var> {
        let (c, h, w) = self.value(frame).chw()?;
        let (k, kvh, kvw) = self.value(kv).chw()?;
        if self.shape(kh) != self.shape(kv) {
            return Err(shape_err!("kernel shapes differ: {:?} vs {:?}", self.shape(kv), self.shape(kh)));
        }
        if (kvh, kvw) != (h, w) {
            return Err(shape_err!("kernel field {kvh}×{kvw} does not match frame {h}×{w}"));
        }
        if k % 2 == 0 {
            return Err(shape_err!("kernel size must be odd, got {k}"));
        }
        let out = kernels::sepconv_forward(self.value(frame).data(), self.value(kv).data(), self.value(kh).data(), c, h, w, k);
        let out = Tensor::new(&[c, h, w], out)?;
        Ok(self.push(out, Op::SepConv { frame, kv, kh }))
    }

    // ---- structural --------------------------------------------------------

    pub fn reduce(&mut self, a: Var, kind: Reduce) -> Var {
        let x = self.value(a).data();
        let v = match kind {
            Reduce::Sum => x.iter().sum(),
            Reduce::Mean => x.iter().sum::<f64>() / x.len() as f64,
            Reduce::SumAbs => x.iter().map(|v| v.abs()).sum(),
            Reduce::SumSq => x.iter().map(|v| v * v).sum(),
        };
        self.push(Tensor::scalar(v), Op::Reduce(a, kind))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        self.reduce(a, Reduce::Sum)
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| shape_err!("concat of zero parts"))?;
        let (_, h, w) = self.value(first).chw()?;
        let mut data = Vec::new();
        let mut channels = 0;
        for &p in parts {
            let (c, ph, pw) = self.value(p).chw()?;
            if (ph, pw) != (h, w) {
                return Err(shape_err!("concat spatial mismatch {ph}×{pw} vs {h}×{w}"));
            }
            channels += c;
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::new(&[channels, h, w], data)?;
        Ok(self.push(out, Op::Concat(parts.to_vec())))
    }

    pub fn slice_channels(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let (c, h, w) = self.value(input).chw()?;
        if len == 0 || start + len > c {
            return Err(shape_err!("channel slice {start}..{} out of 0..{c}", start + len));
        }
        let data = self.value(input).data()[start * h * w..(start + len) * h * w].to_vec();
        let out = Tensor::new(&[len, h, w], data)?;
        Ok(self.push(out, Op::SliceChannels { input, start }))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape(a)))
    }

    /// `y = W·flatten(x) + b` with `W: out×in`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let ws = self.shape(weight).to_vec();
        let [out_f, in_f] = ws[..] else {
            return Err(shape_err!("linear weight must be rank 2, got {:?}", ws));
        };
        let x = self.value(input).data();
        if x.len() != in_f {
            return Err(shape_err!("linear expects {in_f} inputs, got {}", x.len()));
        }
        let w = self.value(weight).data();
        let mut y: Vec<f64> = (0..out_f)
            .map(|o| w[o * in_f..(o + 1) * in_f].iter().zip(x).map(|(a, b)| a * b).sum())
            .collect();
        if let Some(b) = bias {
            if self.shape(b) != [out_f] {
                return Err(shape_err!("linear bias must be [{out_f}]"));
            }
            y.iter_mut().zip(self.value(b).data()).for_each(|(v, b)| *v += b);
        }
        let out = Tensor::new(&[out_f], y)?;
        Ok(self.push(out, Op::Linear { input, weight, bias }))
    }

    /// Records `lipschitz · W / σ` where `σ = uᵀ W_mat v` for fixed singular
    /// vector estimates `u` (length rows) and `v` (length cols), with `W_mat`
    /// the weight viewed as `shape[0] × rest`. `σ` is floored at `1e-12`.
    pub fn spectral_scale(&mut self, weight: Var, u: Vec<f64>, v: Vec<f64>, lipschitz: f64) -> Result<Var> {
        let w = self.value(weight);
        let rows = w.shape()[0];
        let cols = w.len() / rows;
        if u.len() != rows || v.len() != cols {
            return Err(shape_err!("singular vectors {}/{} do not match {rows}×{cols}", u.len(), v.len()));
        }
        let raw_sigma: f64 = (0..rows)
            .map(|r| u[r] * w.data()[r * cols..(r + 1) * cols].iter().zip(&v).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        let guarded = raw_sigma < 1e-12;
        let sigma = raw_sigma.max(1e-12);
        let out = w.map(|x| lipschitz * x / sigma);
        Ok(self.push(out, Op::SpectralScale { weight, u, v, sigma, lipschitz, guarded }))
    }

    // ---- backward ----------------------------------------------------------

    /// Reverse-mode sweep from a one-element `loss`, accumulating into leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<BackwardStats> {
        if !self.value(loss).is_scalar() {
            return Err(shape_err!("backward needs a scalar loss, got {:?}", self.shape(loss)));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let mut stats = BackwardStats { ops_visited: 0 };
        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                match &mut self.leaf_grads[i] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot => *slot = Some(g),
                }
                continue;
            }
            stats.ops_visited += 1;
            self.backprop_node(i, &g, &mut grads);
        }
        Ok(stats)
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let out = nodes[i].value.data();
        let needs = |v: Var| nodes[v.0].requires_grad;
        let len_of = |v: Var| nodes[v.0].value.len();
        // Gradient buffer for `v`, created on first use.
        fn slot<'a>(grads: &'a mut [Option<Vec<f64>>], v: Var, len: usize) -> &'a mut Vec<f64> {
            grads[v.0].get_or_insert_with(|| vec![0.0; len])
        }
        match &nodes[i].op {
            Op::Leaf => {}
            Op::Unary(a, kind) => {
                if !needs(*a) {
                    return;
                }
                let x = nodes[a.0].value.data();
                let ga = slot(grads, *a, x.len());
                for k in 0..x.len() {
                    let d = match kind {
                        Unary::Relu => {
                            if x[k] > 0.0 {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        Unary::Sigmoid => out[k] * (1.0 - out[k]),
                        Unary::Tanh => 1.0 - out[k] * out[k],
                        Unary::Log => 1.0 / x[k],
                        Unary::Neg => -1.0,
                        Unary::Abs => {
                            if x[k] > 0.0 {
                                1.0
                            } else if x[k] < 0.0 {
                                -1.0
                            } else {
                                0.0
                            }
                        }
                    };
                    ga[k] += g[k] * d;
                }
            }
            Op::Binary(a, b, kind) => {
                let (xa, xb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                let n = out.len();
                let at = |x: &[f64], k: usize| if x.len() == 1 { x[0] } else { x[k] };
                if needs(*a) {
                    let ga = slot(grads, *a, xa.len());
                    for k in 0..n {
                        let d = match kind {
                            Binary::Add | Binary::Sub => 1.0,
                            Binary::Mul => at(xb, k),
                        };
                        let idx = if xa.len() == 1 { 0 } else { k };
                        ga[idx] += g[k] * d;
                    }
                }
                if needs(*b) {
                    let gb = slot(grads, *b, xb.len());
                    for k in 0..n {
                        let d = match kind {
                            Binary::Add => 1.0,
                            Binary::Sub => -1.0,
                            Binary::Mul => at(xa, k),
                        };
                        let idx = if xb.len() == 1 { 0 } else { k };
                        gb[idx] += g[k] * d;
                    }
                }
            }
            Op::Affine(a, s) => {
                if needs(*a) {
                    let ga = slot(grads, *a, g.len());
                    ga.iter_mut().zip(g).for_each(|(d, gv)| *d += s * gv);
                }
            }
            Op::ClampMin(a, floor) => {
                if needs(*a) {
                    let x = nodes[a.0].value.data();
                    let ga = slot(grads, *a, g.len());
                    for k in 0..g.len() {
                        if x[k] > *floor {
                            ga[k] += g[k];
                        }
                    }
                }
            }
            Op::Conv2d { input, weight, bias, geom } => {
                let x = nodes[input.0].value.data();
                let w = nodes[weight.0].value.data();
                let mut gx = needs(*input).then(|| grads[input.0].take().unwrap_or_else(|| vec![0.0; x.len()]));
                let mut gw = needs(*weight).then(|| grads[weight.0].take().unwrap_or_else(|| vec![0.0; w.len()]));
                let mut gb = bias.filter(|b| needs(*b)).map(|b| grads[b.0].take().unwrap_or_else(|| vec![0.0; len_of(b)]));
                kernels::conv2d_backward(x, w, g, geom, gx.as_deref_mut(), gw.as_deref_mut(), gb.as_deref_mut());
                if let Some(gx) = gx {
                    grads[input.0] = Some(gx);
                }
                if let Some(gw) = gw {
                    grads[weight.0] = Some(gw);
                }
                if let (Some(b), Some(gb)) = (bias, gb) {
                    grads[b.0] = Some(gb);
                }
            }
            Op::MaxPool2 { input, argmax } => {
                if needs(*input) {
                    let gi = slot(grads, *input, len_of(*input));
                    for (k, &src) in argmax.iter().enumerate() {
                        gi[src] += g[k];
                    }
                }
            }
            Op::Upsample2 { input } => {
                if needs(*input) {
                    let [c, h, w] = nodes[input.0].value.shape()[..] else { unreachable!() };
                    let gi = slot(grads, *input, c * h * w);
                    kernels::upsample2_backward(g, c, h, w, gi);
                }
            }
            Op::Diff(input, axis) => {
                if needs(*input) {
                    let [c, h, w] = nodes[input.0].value.shape()[..] else { unreachable!() };
                    let gi = slot(grads, *input, c * h * w);
                    let mut k = 0;
                    match axis {
                        Axis::Vertical => {
                            for ch in 0..c {
                                for i in 1..h {
                                    for j in 0..w {
                                        let b = ch * h * w;
                                        gi[b + i * w + j] += g[k];
                                        gi[b + (i - 1) * w + j] -= g[k];
                                        k += 1;
                                    }
                                }
                            }
                        }
                        Axis::Horizontal => {
                            for ch in 0..c {
                                for i in 0..h {
                                    for j in 1..w {
                                        let b = ch * h * w;
                                        gi[b + i * w + j - 1] += g[k];
                                        gi[b + i * w + j] -= g[k];
                                        k += 1;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Op::Reduce(a, kind) => {
                if needs(*a) {
                    let x = nodes[a.0].value.data();
                    let g0 = g[0];
                    let n = x.len() as f64;
                    let ga = slot(grads, *a, x.len());
                    for k in 0..x.len() {
                        ga[k] += g0
                            * match kind {
                                Reduce::Sum => 1.0,
                                Reduce::Mean => 1.0 / n,
                                Reduce::SumAbs => {
                                    if x[k] > 0.0 {
                                        1.0
                                    } else if x[k] < 0.0 {
                                        -1.0
                                    } else {
                                        0.0
                                    }
                                }
                                Reduce::SumSq => 2.0 * x[k],
                            };
                    }
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = len_of(p);
                    if needs(p) {
                        let gp = slot(grads, p, n);
                        gp.iter_mut().zip(&g[offset..offset + n]).for_each(|(d, s)| *d += s);
                    }
                    offset += n;
                }
            }
            Op::SliceChannels { input, start } => {
                if needs(*input) {
                    let [_, h, w] = nodes[input.0].value.shape()[..] else { unreachable!() };
                    let gi = slot(grads, *input, len_of(*input));
                    let off = start * h * w;
                    gi[off..off + g.len()].iter_mut().zip(g).for_each(|(d, s)| *d += s);
                }
            }
            Op::Reshape(a) => {
                if needs(*a) {
                    let ga = slot(grads, *a, g.len());
                    ga.iter_mut().zip(g).for_each(|(d, s)| *d += s);
                }
            }
            Op::SepConv { frame, kv, kh } => {
                let f = nodes[frame.0].value.data();
                let [c, h, w] = nodes[frame.0].value.shape()[..] else { unreachable!() };
                let k = nodes[kv.0].value.shape()[0];
                let (kvd, khd) = (nodes[kv.0].value.data(), nodes[kh.0].value.data());
                let mut gf = needs(*frame).then(|| grads[frame.0].take().unwrap_or_else(|| vec![0.0; f.len()]));
                let mut gkv = needs(*kv).then(|| grads[kv.0].take().unwrap_or_else(|| vec![0.0; kvd.len()]));
                let mut gkh = needs(*kh).then(|| grads[kh.0].take().unwrap_or_else(|| vec![0.0; khd.len()]));
                kernels::sepconv_backward(f, kvd, khd, g, (c, h, w, k), gf.as_deref_mut(), gkv.as_deref_mut(), gkh.as_deref_mut());
                if let Some(v) = gf {
                    grads[frame.0] = Some(v);
                }
                if let Some(v) = gkv {
                    grads[kv.0] = Some(v);
                }
                if let Some(v) = gkh {
                    grads[kh.0] = Some(v);
                }
            }
            Op::SpectralScale { weight, u, v, sigma, lipschitz, guarded } => {
                if needs(*weight) {
                    let w = nodes[weight.0].value.data();
                    let cols = v.len();
                    let coef = lipschitz / sigma;
                    // d(L·W/σ) with σ = uᵀWv: L/σ·G − L/σ²·⟨G,W⟩·u vᵀ
                    let inner: f64 = if *guarded { 0.0 } else { g.iter().zip(w).map(|(a, b)| a * b).sum() };
                    let corr = lipschitz * inner / (sigma * sigma);
                    let gw = slot(grads, *weight, w.len());
                    for (k, d) in gw.iter_mut().enumerate() {
                        *d += coef * g[k] - corr * u[k / cols] * v[k % cols];
                    }
                }
            }
            Op::Linear { input, weight, bias } => {
                let x = nodes[input.0].value.data();
                let w = nodes[weight.0].value.data();
                let in_f = x.len();
                if needs(*input) {
                    let gi = slot(grads, *input, in_f);
                    for (o, &go) in g.iter().enumerate() {
                        gi.iter_mut().zip(&w[o * in_f..(o + 1) * in_f]).for_each(|(d, wv)| *d += go * wv);
                    }
                }
                if needs(*weight) {
                    let gw = slot(grads, *weight, w.len());
                    for (o, &go) in g.iter().enumerate() {
                        gw[o * in_f..(o + 1) * in_f].iter_mut().zip(x).for_each(|(d, xv)| *d += go * xv);
                    }
                }
                if let Some(b) = bias {
                    if needs(*b) {
                        let gb = slot(grads, *b, g.len());
                        gb.iter_mut().zip(g).for_each(|(d, s)| *d += s);
                    }
                }
            }
        }
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
