//! Finite-difference gradient checks of every differentiable building block,
//! runnable outside the test harness.

use std::time::Instant;

use rand::Rng;

use crate::arch::ArchConfig;
use crate::autodiff::{grad_check, Graph, Var};
use crate::blender::{apply_kernels, Blender, KernelField, Mix};
use crate::error::Result;
use crate::nn::{Bound, ConvLstm, ParamStore, SpectralNorm};
use crate::objectives::{discriminator_loss, gdl_loss, generator_loss, l2_loss, Discriminator, LossWeights};
use crate::predictor::{Predictor, StepActivations};
use crate::rng::{seeded, Rng as StdRng};
use crate::tensor::Tensor;

/// Largest tolerated relative error.
pub const TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub rel_error: f64,
    pub seconds: f64,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.rel_error < TOLERANCE
    }
}

fn random(shape: &[usize], rng: &mut StdRng, lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

/// `Σ y ⊙ r` for a fixed random `r`: exercises every output coordinate while
/// keeping the scalar small relative to its gradients.
fn readout(g: &mut Graph, y: Var, seed: u64) -> Result<Var> {
    let mut rng = seeded(seed);
    let r = g.constant(random(g.shape(y), &mut rng, -1.0, 1.0));
    let prod = g.mul(y, r)?;
    Ok(g.sum(prod))
}

fn sum_readouts(g: &mut Graph, ys: &[Var], seed: u64) -> Result<Var> {
    let mut total = readout(g, ys[0], seed)?;
    for (i, &y) in ys.iter().enumerate().skip(1) {
        let r = readout(g, y, seed + i as u64)?;
        total = g.add(total, r)?;
    }
    Ok(total)
}

/// Store values nudged off zero so biases sit away from ReLU kinks.
fn nudged(store: &ParamStore, rng: &mut StdRng) -> Vec<Tensor> {
    shifted(store, rng, 0.01, 0.05)
}

fn shifted(store: &ParamStore, rng: &mut StdRng, lo: f64, hi: f64) -> Vec<Tensor> {
    store
        .params()
        .iter()
        .map(|e| Tensor::from_fn(e.value.shape(), |i| e.value.data()[i] + rng.gen_range(lo..hi)))
        .collect()
}

fn tiny_arch() -> ArchConfig {
    ArchConfig {
        channels: 1,
        pred_encoder: [2, 3, 3],
        pred_hidden: 2,
        pred_top: 2,
        deep_width: 2,
        blend_encoder: [2, 3],
        blend_decoder: [3, 2, 2, 2],
        head_width: 2,
        kernel_size: 3,
        convs_per_block: 1,
    }
}

type Case = (&'static str, Box<dyn Fn() -> Result<f64>>);

fn cases() -> Vec<Case> {
    vec![
        ("conv2d", Box::new(|| {
            let mut rng = seeded(1);
            let inputs = [random(&[2, 6, 5], &mut rng, -1.0, 1.0), random(&[3, 2, 3, 3], &mut rng, -1.0, 1.0), random(&[3], &mut rng, -1.0, 1.0)];
            grad_check(&inputs, 1e-5, |g, v| {
                let y = g.conv2d(v[0], v[1], Some(v[2]), 1)?;
                readout(g, y, 2)
            })
        })),
        ("conv2d_strided", Box::new(|| {
            let mut rng = seeded(3);
            let inputs = [random(&[2, 8, 8], &mut rng, -1.0, 1.0), random(&[3, 2, 3, 3], &mut rng, -1.0, 1.0), random(&[3], &mut rng, -1.0, 1.0)];
            grad_check(&inputs, 1e-5, |g, v| {
                let y = g.conv2d_strided(v[0], v[1], Some(v[2]), 1, 2)?;
                readout(g, y, 4)
            })
        })),
        ("max_pool", Box::new(|| {
            let mut rng = seeded(5);
            grad_check(&[random(&[2, 6, 8], &mut rng, -1.0, 1.0)], 1e-5, |g, v| {
                let y = g.max_pool2(v[0])?;
                readout(g, y, 6)
            })
        })),
        ("bilinear_upsample", Box::new(|| {
            let mut rng = seeded(7);
            grad_check(&[random(&[2, 3, 4], &mut rng, -1.0, 1.0)], 1e-5, |g, v| {
                let y = g.upsample2(v[0])?;
                readout(g, y, 8)
            })
        })),
        ("convlstm_step", Box::new(|| {
            let mut store = ParamStore::new(9);
            let cell = ConvLstm::new(&mut store, "lstm", 2, 3);
            let mut rng = seeded(10);
            let n = store.len();
            let mut inputs = nudged(&store, &mut rng);
            inputs.extend((0..3).map(|_| random(&[2, 4, 4], &mut rng, -1.0, 1.0)));
            grad_check(&inputs, 1e-5, |g, v| {
                let p = Bound::from_vars(v[..n].to_vec());
                let mut state = cell.zero_state(g, 4, 4);
                let mut outs = Vec::new();
                for &x in &v[n..] {
                    let (h, next) = cell.step(g, &p, x, state)?;
                    outs.push(h);
                    outs.push(next.cell);
                    state = next;
                }
                sum_readouts(g, &outs, 11)
            })
        })),
        ("spectral_norm", Box::new(|| {
            let mut rng = seeded(12);
            let mut store = ParamStore::new(12);
            let w = store.add("w", random(&[3, 2, 3, 3], &mut rng, -1.0, 1.0));
            let sn = SpectralNorm::new(&mut store, "w", w, 3.0);
            sn.power_iterate(&mut store, 50);
            let inputs = [store.get(w).clone(), random(&[2, 4, 4], &mut rng, -1.0, 1.0)];
            grad_check(&inputs, 1e-5, |g, v| {
                let p = Bound::from_vars(vec![v[0]]);
                let e = sn.effective(g, &p, &store)?;
                let y = g.conv2d(v[1], e, None, 1)?;
                readout(g, y, 13)
            })
        })),
        ("kernel_generation", Box::new(|| {
            let arch = tiny_arch();
            let mut store = ParamStore::new(14);
            let blender = Blender::new(&mut store, "blend", &arch, true);
            let n = store.len();
            let mut rng = seeded(15);
            let mut inputs = nudged(&store, &mut rng);
            for _ in 0..2 {
                inputs.push(random(&[arch.deep_width, 4, 4], &mut rng, 0.0, 1.0));
                inputs.push(random(&[arch.coarse_residual(), 4, 4], &mut rng, 0.0, 1.0));
                inputs.push(random(&[arch.fine_residual(), 8, 8], &mut rng, 0.0, 1.0));
            }
            inputs.push(Tensor::scalar(0.4));
            grad_check(&inputs, 1e-5, |g, v| {
                let p = Bound::from_vars(v[..n].to_vec());
                let ea = StepActivations { deep: v[n], coarse: v[n + 1], fine: v[n + 2] };
                let eb = StepActivations { deep: v[n + 3], coarse: v[n + 4], fine: v[n + 5] };
                let f = blender.generate_kernels(g, &p, &ea, &eb, Some(v[n + 6]))?;
                sum_readouts(g, &[f.vertical_p, f.horizontal_p, f.vertical_f, f.horizontal_f], 16)
            })
        })),
        ("apply_kernels", Box::new(|| {
            let mut rng = seeded(17);
            let (k, h, w) = (3, 5, 6);
            let mut inputs: Vec<Tensor> = (0..4).map(|_| random(&[k, h, w], &mut rng, 0.0, 1.0)).collect();
            inputs.push(random(&[2, h, w], &mut rng, 0.0, 1.0));
            inputs.push(random(&[2, h, w], &mut rng, 0.0, 1.0));
            let mut worst = 0.0f64;
            for mix in [Mix::Sum, Mix::TimeWeighted(0.3)] {
                let err = grad_check(&inputs, 1e-5, |g, v| {
                    let field = KernelField { vertical_p: v[0], horizontal_p: v[1], vertical_f: v[2], horizontal_f: v[3] };
                    let y = apply_kernels(g, &field, v[4], v[5], mix)?;
                    readout(g, y, 18)
                })?;
                worst = worst.max(err);
            }
            Ok(worst)
        })),
        ("tai_blend", Box::new(|| {
            let arch = tiny_arch();
            let mut store = ParamStore::new(19);
            let blender = Blender::new(&mut store, "blend", &arch, true);
            let n = store.len();
            let mut rng = seeded(20);
            let mut inputs = nudged(&store, &mut rng);
            for _ in 0..2 {
                inputs.push(random(&[arch.deep_width, 4, 4], &mut rng, 0.0, 1.0));
                inputs.push(random(&[arch.coarse_residual(), 4, 4], &mut rng, 0.0, 1.0));
                inputs.push(random(&[arch.fine_residual(), 8, 8], &mut rng, 0.0, 1.0));
            }
            inputs.push(random(&[1, 32, 32], &mut rng, 0.0, 1.0));
            inputs.push(random(&[1, 32, 32], &mut rng, 0.0, 1.0));
            inputs.push(Tensor::scalar(0.6));
            grad_check(&inputs, 1e-5, |g, v| {
                let p = Bound::from_vars(v[..n].to_vec());
                let ea = StepActivations { deep: v[n], coarse: v[n + 1], fine: v[n + 2] };
                let eb = StepActivations { deep: v[n + 3], coarse: v[n + 4], fine: v[n + 5] };
                let y = blender.tai_blend(g, &p, v[n + 6], &ea, v[n + 7], &eb, v[n + 8])?;
                readout(g, y, 21)
            })
        })),
        ("predictor_unroll", Box::new(|| {
            let mut store = ParamStore::new(22);
            let model = Predictor::new(&mut store, "pred", &tiny_arch());
            let n = store.len();
            let mut rng = seeded(23);
            // strong offsets keep ReLUs off their kinks and lift the recurrent
            // path's gradients well above finite-difference noise
            let mut inputs = shifted(&store, &mut rng, -0.3, 0.3);
            inputs.extend((0..2).map(|_| random(&[1, 16, 16], &mut rng, 0.0, 1.0)));
            // larger step: the unrolled network is deep enough that rounding
            // noise dominates central differences below ~1e-5
            grad_check(&inputs, 1e-4, |g, v| {
                let p = Bound::from_vars(v[..n].to_vec());
                let d = model.predict_forward(g, &p, &v[n..], 2)?;
                sum_readouts(g, &[d.frames[1], d.activations[1].deep, d.activations[0].fine], 24)
            })
        })),
        ("l2_loss", Box::new(|| {
            let mut rng = seeded(25);
            let inputs: Vec<Tensor> = (0..4).map(|_| random(&[2, 4, 5], &mut rng, 0.0, 1.0)).collect();
            grad_check(&inputs, 1e-6, |g, v| l2_loss(g, &v[..2], &v[2..]))
        })),
        ("gdl_loss", Box::new(|| {
            let mut rng = seeded(26);
            let inputs: Vec<Tensor> = (0..4).map(|_| random(&[2, 4, 5], &mut rng, 0.0, 1.0)).collect();
            grad_check(&inputs, 1e-6, |g, v| gdl_loss(g, &v[..2], &v[2..]))
        })),
        ("generator_loss", Box::new(|| {
            let mut rng = seeded(27);
            let mut inputs: Vec<Tensor> = (0..6).map(|_| random(&[1, 4, 4], &mut rng, 0.0, 1.0)).collect();
            inputs.push(Tensor::scalar(0.37));
            let truth: Vec<Tensor> = (0..2).map(|_| random(&[1, 4, 4], &mut rng, 0.0, 1.0)).collect();
            grad_check(&inputs, 1e-6, |g, v| {
                let t: Vec<Var> = truth.iter().map(|x| g.constant(x.clone())).collect();
                Ok(generator_loss(g, Some(&v[0..2]), Some(&v[2..4]), &v[4..6], &t, v[6], LossWeights::default())?.total)
            })
        })),
        ("discriminator_loss", Box::new(|| {
            grad_check(&[Tensor::scalar(0.3), Tensor::scalar(0.6)], 1e-6, |g, v| discriminator_loss(g, v[0], v[1]))
        })),
        ("discriminator", Box::new(|| {
            let mut store = ParamStore::new(28);
            let d = Discriminator::new(&mut store, "disc", 3, 1, 8, 8, &[2, 3], 3.0)?;
            d.power_iterate(&mut store, 3);
            let n = store.len();
            let mut rng = seeded(29);
            let mut inputs = nudged(&store, &mut rng);
            inputs.extend((0..3).map(|_| random(&[1, 8, 8], &mut rng, 0.0, 1.0)));
            grad_check(&inputs, 1e-6, |g, v| {
                let p = Bound::from_vars(v[..n].to_vec());
                d.forward(g, &p, &store, &v[n..])
            })
        })),
    ]
}

/// Names of every check in [`run_suite`], in order.
pub fn case_names() -> Vec<&'static str> {
    cases().into_iter().map(|(n, _)| n).collect()
}

/// Runs every check, returning each worst relative error and its runtime.
pub fn run_suite() -> Result<Vec<CheckOutcome>> {
    cases()
        .into_iter()
        .map(|(name, check)| {
            let start = Instant::now();
            let rel_error = check()?;
            Ok(CheckOutcome { name, rel_error, seconds: start.elapsed().as_secs_f64() })
        })
        .collect()
}
