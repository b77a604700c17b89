use crate::autodiff::{Graph, Var};
use crate::error::{shape_err, Result};
use crate::nn::params::{Bound, ParamId, ParamStore};

/// Square conv layer with "same" padding and optional stride.
#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
}

impl Conv {
    pub fn new(store: &mut ParamStore, name: &str, cin: usize, cout: usize, k: usize) -> Self {
        Self::strided(store, name, cin, cout, k, 1)
    }

    pub fn strided(store: &mut ParamStore, name: &str, cin: usize, cout: usize, k: usize, stride: usize) -> Self {
        let weight = store.conv_weight(format!("{name}.weight"), cout, cin, k);
        let bias = store.bias(format!("{name}.bias"), cout);
        Conv { weight, bias, cin, cout, k, stride }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        g.conv2d_strided(x, p.var(self.weight), Some(p.var(self.bias)), self.k / 2, self.stride)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Resample {
    MaxPool,
    Upsample,
    None,
}

/// A chain of 3×3 conv + ReLU layers followed by an optional resampler.
#[derive(Clone, Debug)]
pub struct ConvBlock {
    pub layers: Vec<Conv>,
    pub resample: Resample,
}

impl ConvBlock {
    /// `channels` lists the chain `[c_in, c_1, …, c_out]`, one conv per step.
    pub fn new(store: &mut ParamStore, name: &str, channels: &[usize], resample: Resample) -> Self {
        assert!(channels.len() >= 2, "a block needs at least one layer");
        let layers = channels
            .windows(2)
            .enumerate()
            .map(|(i, c)| Conv::new(store, &format!("{name}.conv{i}"), c[0], c[1], 3))
            .collect();
        ConvBlock { layers, resample }
    }

    /// `layers` convs: first `cin → cout`, the rest `cout → cout`.
    pub fn uniform(store: &mut ParamStore, name: &str, cin: usize, cout: usize, layers: usize, resample: Resample) -> Self {
        let mut chain = vec![cin];
        chain.extend(std::iter::repeat(cout).take(layers.max(1)));
        Self::new(store, name, &chain, resample)
    }

    pub fn in_channels(&self) -> usize {
        self.layers[0].cin
    }

    pub fn out_channels(&self) -> usize {
        self.layers.last().expect("non-empty block").cout
    }

    /// `(C_in, C_out)` of every conv in order.
    pub fn channel_chain(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.cin, l.cout)).collect()
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let c = g.shape(x)[0];
        if c != self.in_channels() {
            return Err(shape_err!("block expects {} channels, got {c}", self.in_channels()));
        }
        let mut h = x;
        for layer in &self.layers {
            let y = layer.forward(g, p, h)?;
            h = g.relu(y);
        }
        match self.resample {
            Resample::MaxPool => g.max_pool2(h),
            Resample::Upsample => g.upsample2(h),
            Resample::None => Ok(h),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inp: usize,
    pub out: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, inp: usize, out: usize) -> Self {
        let weight = store.linear_weight(format!("{name}.weight"), out, inp);
        let bias = store.bias(format!("{name}.bias"), out);
        Linear { weight, bias, inp, out }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        g.linear(x, p.var(self.weight), Some(p.var(self.bias)))
    }
}
