use crate::autodiff::{Graph, Var};
use crate::error::{shape_err, Result};
use crate::nn::layers::Conv;
use crate::nn::params::{Bound, ParamStore};
use crate::tensor::Tensor;

/// Convolutional LSTM cell. One conv over `[x, h]` produces the input,
/// forget and output gates and the candidate, in that channel order.
#[derive(Clone, Debug)]
pub struct ConvLstm {
    pub gates: Conv,
    pub input: usize,
    pub hidden: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct ConvLstmState {
    pub hidden: Var,
    pub cell: Var,
}

impl ConvLstm {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize) -> Self {
        let gates = Conv::new(store, &format!("{name}.gates"), input + hidden, 4 * hidden, 3);
        ConvLstm { gates, input, hidden }
    }

    pub fn zero_state(&self, g: &mut Graph, h: usize, w: usize) -> ConvLstmState {
        ConvLstmState {
            hidden: g.constant(Tensor::zeros(&[self.hidden, h, w])),
            cell: g.constant(Tensor::zeros(&[self.hidden, h, w])),
        }
    }

    /// One recurrent update; returns the new hidden map (also the cell output).
    pub fn step(&self, g: &mut Graph, p: &Bound, x: Var, state: ConvLstmState) -> Result<(Var, ConvLstmState)> {
        let (c, h, w) = g.value(x).chw()?;
        let (_, sh, sw) = g.value(state.hidden).chw()?;
        if c != self.input || (h, w) != (sh, sw) {
            return Err(shape_err!(
                "ConvLSTM expects {}×{sh}×{sw} input, got {c}×{h}×{w}",
                self.input
            ));
        }
        let xh = g.concat_channels(&[x, state.hidden])?;
        let z = self.gates.forward(g, p, xh)?;
        let n = self.hidden;
        let zi = g.slice_channels(z, 0, n)?;
        let zf = g.slice_channels(z, n, n)?;
        let zo = g.slice_channels(z, 2 * n, n)?;
        let zg = g.slice_channels(z, 3 * n, n)?;
        let i = g.sigmoid(zi);
        let f = g.sigmoid(zf);
        let o = g.sigmoid(zo);
        let cand = g.tanh(zg);
        let keep = g.mul(f, state.cell)?;
        let write = g.mul(i, cand)?;
        let cell = g.add(keep, write)?;
        let tc = g.tanh(cell);
        let hidden = g.mul(o, tc)?;
        Ok((hidden, ConvLstmState { hidden, cell }))
    }
}
