use rand::Rng;

use super::*;
use crate::rng::seeded;
use crate::tensor::Tensor;

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = seeded(seed);
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Six nested loops over Σ_c Σ_ky Σ_kx w·x with zero padding.
fn conv_oracle(x: &Tensor, w: &Tensor, b: &[f64], pad: usize) -> Tensor {
    let (cin, h, wd) = x.chw().unwrap();
    let (cout, k) = (w.shape()[0], w.shape()[2]);
    let (ho, wo) = (h + 2 * pad - k + 1, wd + 2 * pad - k + 1);
    let mut out = Tensor::zeros(&[cout, ho, wo]);
    for o in 0..cout {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = b[o];
                for c in 0..cin {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = oy as isize + ky as isize - pad as isize;
                            let ix = ox as isize + kx as isize - pad as isize;
                            if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                acc += w.data()[((o * cin + c) * k + ky) * k + kx]
                                    * x.data()[(c * h + iy as usize) * wd + ix as usize];
                            }
                        }
                    }
                }
                out.data_mut()[(o * ho + oy) * wo + ox] = acc;
            }
        }
    }
    out
}

fn eval_conv(x: &Tensor, w: &Tensor, b: &Tensor, pad: usize) -> Tensor {
    let mut g = Graph::new();
    let (xv, wv, bv) = (g.constant(x.clone()), g.constant(w.clone()), g.constant(b.clone()));
    let y = g.conv2d(xv, wv, Some(bv), pad).unwrap();
    g.value(y).clone()
}

#[test]
fn relu_sigmoid_add_examples() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::new(&[3], vec![-1.0, 0.0, 2.0]).unwrap());
    let r = g.relu(x);
    assert_eq!(g.value(r).data(), &[0.0, 0.0, 2.0]);
    let z = g.constant(Tensor::scalar(0.0));
    let s = g.sigmoid(z);
    assert_eq!(g.value(s).item(), 0.5);
    let sum = g.add(x, z).unwrap();
    assert_eq!(g.value(sum), g.value(x));
}

#[test]
fn elementwise_errors() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::zeros(&[2, 2]));
    let b = g.constant(Tensor::zeros(&[3]));
    assert!(matches!(g.add(a, b), Err(crate::Error::Shape(_))));
    assert!(matches!(g.log(a), Err(crate::Error::Domain(_))));
}

#[test]
fn conv2d_examples() {
    let x = Tensor::zeros(&[2, 4, 4]);
    let w = random(&[3, 2, 3, 3], 1);
    let b = Tensor::new(&[3], vec![0.5, -1.0, 2.0]).unwrap();
    let y = eval_conv(&x, &w, &b, 1);
    for c in 0..3 {
        assert!(y.data()[c * 16..(c + 1) * 16].iter().all(|&v| v == b.data()[c]));
    }

    let x = random(&[1, 5, 5], 2);
    let id = Tensor::new(&[1, 1, 1, 1], vec![1.0]).unwrap();
    assert_eq!(eval_conv(&x, &id, &Tensor::zeros(&[1]), 0), x);

    let w = random(&[2, 1, 3, 3], 3);
    let b = random(&[2], 4);
    let fast = eval_conv(&x, &w, &b, 1);
    let slow = conv_oracle(&x, &w, b.data(), 1);
    assert!(fast.max_abs_diff(&slow) < 1e-12);
}

#[test]
fn conv2d_matches_loop_oracle_for_small_shapes() {
    let mut seed = 100;
    for h in 1..=8 {
        for w in [1, 3, 8] {
            for (k, pad) in [(1, 0), (3, 1), (3, 0), (5, 2)] {
                if h + 2 * pad < k || w + 2 * pad < k {
                    continue;
                }
                seed += 1;
                let x = random(&[2, h, w], seed);
                let wt = random(&[3, 2, k, k], seed + 1000);
                let b = random(&[3], seed + 2000);
                let d = eval_conv(&x, &wt, &b, pad).max_abs_diff(&conv_oracle(&x, &wt, b.data(), pad));
                assert!(d < 1e-12, "h={h} w={w} k={k} pad={pad}: {d}");
            }
        }
    }
}

#[test]
fn conv2d_channel_mismatch() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[2, 4, 4]));
    let w = g.constant(Tensor::zeros(&[1, 3, 3, 3]));
    assert!(matches!(g.conv2d(x, w, None, 1), Err(crate::Error::Shape(_))));
}

#[test]
fn strided_conv_matches_oracle_subsampled() {
    let x = random(&[2, 8, 8], 7);
    let w = random(&[3, 2, 3, 3], 8);
    let b = random(&[3], 9);
    let full = conv_oracle(&x, &w, b.data(), 1);
    let mut g = Graph::new();
    let (xv, wv, bv) = (g.constant(x), g.constant(w), g.constant(b));
    let y = g.conv2d_strided(xv, wv, Some(bv), 1, 2).unwrap();
    let y = g.value(y);
    assert_eq!(y.shape(), &[3, 4, 4]);
    for o in 0..3 {
        for i in 0..4 {
            for j in 0..4 {
                let a = y.data()[(o * 4 + i) * 4 + j];
                let e = full.data()[(o * 8 + 2 * i) * 8 + 2 * j];
                assert!((a - e).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn reduce_examples() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::new(&[2], vec![3.0, 4.0]).unwrap());
    let s = g.reduce(a, Reduce::SumSq);
    assert_eq!(g.value(s).item(), 25.0);
    let c = g.constant(Tensor::full(&[2, 3], 1.75));
    let m = g.reduce(c, Reduce::Mean);
    assert_eq!(g.value(m).item(), 1.75);
    let n = g.constant(Tensor::new(&[2], vec![-1.0, 2.0]).unwrap());
    let sa = g.reduce(n, Reduce::SumAbs);
    assert_eq!(g.value(sa).item(), 3.0);
}

#[test]
fn concat_examples() {
    let a = Tensor::full(&[1, 2, 2], 1.0);
    let b = Tensor::full(&[1, 2, 2], 2.0);
    let mut g = Graph::new();
    let (av, bv) = (g.constant(a.clone()), g.constant(b.clone()));
    let cat = g.concat_channels(&[av, bv]).unwrap();
    assert_eq!(g.shape(cat), &[2, 2, 2]);
    assert_eq!(&g.value(cat).data()[..4], a.data());
    assert_eq!(&g.value(cat).data()[4..], b.data());
    let one = g.concat_channels(&[av]).unwrap();
    assert_eq!(g.value(one), &a);
    let back_a = g.slice_channels(cat, 0, 1).unwrap();
    let back_b = g.slice_channels(cat, 1, 1).unwrap();
    assert_eq!(g.value(back_a), &a);
    assert_eq!(g.value(back_b), &b);

    let c = g.constant(Tensor::zeros(&[1, 3, 2]));
    assert!(g.concat_channels(&[av, c]).is_err());
}

#[test]
fn backward_examples() {
    let x = random(&[2, 3], 11);
    let mut g = Graph::new();
    let xv = g.param(x.clone());
    let s = g.sum(xv);
    g.backward(s).unwrap();
    assert!(g.grad(xv).unwrap().data().iter().all(|&v| v == 1.0));

    let mut g = Graph::new();
    let xv = g.param(x.clone());
    let s = g.reduce(xv, Reduce::SumSq);
    g.backward(s).unwrap();
    assert_eq!(g.grad(xv).unwrap(), x.map(|v| 2.0 * v));

    // accumulation without reset
    g.backward(s).unwrap();
    assert_eq!(g.grad(xv).unwrap(), x.map(|v| 4.0 * v));
    g.zero_grad();
    assert!(g.grad(xv).is_none());

    let non_scalar = g.relu(xv);
    assert!(matches!(g.backward(non_scalar), Err(crate::Error::Shape(_))));
}

#[test]
fn ignored_leaf_gets_exact_zero() {
    let mut g = Graph::new();
    let used = g.param(random(&[4], 1));
    let ignored = g.param(random(&[4], 2));
    let _ = g.relu(ignored);
    let l = g.reduce(used, Reduce::SumSq);
    g.backward(l).unwrap();
    assert!(g.grad(ignored).map_or(true, |t| t.data().iter().all(|&v| v == 0.0)));
}

#[test]
fn backward_visits_each_op_once() {
    let mut g = Graph::new();
    let x = g.param(random(&[3], 5));
    let a = g.tanh(x);
    let b = g.mul(a, a).unwrap();
    let c = g.add(b, a).unwrap();
    let l = g.sum(c);
    let stats = g.backward(l).unwrap();
    assert_eq!(stats.ops_visited, 4);
}

#[test]
fn grad_check_examples() {
    let w = random(&[3], 21);
    let linear = grad_check(&[random(&[3], 20)], 1e-5, |g, v| {
        let wv = g.constant(w.clone());
        let p = g.mul(v[0], wv)?;
        Ok(g.sum(p))
    })
    .unwrap();
    assert!(linear < 1e-10, "{linear}");

    let chain = grad_check(&[random(&[1, 5, 5], 22), random(&[2, 1, 3, 3], 23)], 1e-5, |g, v| {
        let y = g.conv2d(v[0], v[1], None, 1)?;
        let r = g.relu(y);
        Ok(g.reduce(r, Reduce::SumSq))
    })
    .unwrap();
    assert!(chain < 1e-4, "{chain}");

    let sig = grad_check(&[Tensor::scalar(0.0)], 1e-5, |g, v| {
        let s = g.sigmoid(v[0]);
        let t = g.sigmoid(s);
        Ok(g.sum(t))
    })
    .unwrap();
    assert!(sig < 1e-6, "{sig}");
}

/// Each op, five seeds, scalar readout through a fixed random projection.
#[test]
fn every_op_passes_grad_check() {
    type Build = fn(&mut Graph, &[Var]) -> crate::Result<Var>;
    fn readout(g: &mut Graph, y: Var, seed: u64) -> crate::Result<Var> {
        let proj = random(g.shape(y), seed);
        let p = g.constant(proj);
        let m = g.mul(y, p)?;
        Ok(g.sum(m))
    }
    let cases: Vec<(&str, Vec<Vec<usize>>, Build)> = vec![
        ("add", vec![vec![2, 3], vec![2, 3]], |g, v| { let y = g.add(v[0], v[1])?; readout(g, y, 1) }),
        ("sub_broadcast", vec![vec![2, 3], vec![1]], |g, v| { let y = g.sub(v[0], v[1])?; readout(g, y, 1) }),
        ("mul", vec![vec![2, 3], vec![2, 3]], |g, v| { let y = g.mul(v[0], v[1])?; readout(g, y, 1) }),
        ("affine", vec![vec![4]], |g, v| { let y = g.affine(v[0], -1.5, 0.25); readout(g, y, 1) }),
        ("tanh", vec![vec![4]], |g, v| { let y = g.tanh(v[0]); readout(g, y, 1) }),
        ("sigmoid", vec![vec![4]], |g, v| { let y = g.sigmoid(v[0]); readout(g, y, 1) }),
        ("neg", vec![vec![4]], |g, v| { let y = g.neg(v[0]); readout(g, y, 1) }),
        ("relu", vec![vec![4]], |g, v| { let y = g.relu(v[0]); readout(g, y, 1) }),
        ("abs", vec![vec![4]], |g, v| { let y = g.abs(v[0]); readout(g, y, 1) }),
        ("log", vec![vec![4]], |g, v| { let s = g.affine(v[0], 1.0, 2.0); let y = g.log(s)?; readout(g, y, 1) }),
        ("mean", vec![vec![2, 2]], |g, v| { let y = g.reduce(v[0], Reduce::Mean); readout(g, y, 1) }),
        ("sum_abs", vec![vec![2, 2]], |g, v| Ok(g.reduce(v[0], Reduce::SumAbs))),
        ("conv2d", vec![vec![2, 5, 4], vec![3, 2, 3, 3], vec![3]], |g, v| { let y = g.conv2d(v[0], v[1], Some(v[2]), 1)?; readout(g, y, 1) }),
        ("conv2d_strided", vec![vec![2, 6, 6], vec![2, 2, 3, 3], vec![2]], |g, v| { let y = g.conv2d_strided(v[0], v[1], Some(v[2]), 1, 2)?; readout(g, y, 1) }),
        ("max_pool", vec![vec![2, 4, 6]], |g, v| { let y = g.max_pool2(v[0])?; readout(g, y, 1) }),
        ("upsample", vec![vec![2, 3, 4]], |g, v| { let y = g.upsample2(v[0])?; readout(g, y, 1) }),
        ("concat_slice", vec![vec![1, 3, 3], vec![2, 3, 3]], |g, v| { let c = g.concat_channels(&[v[0], v[1]])?; let y = g.slice_channels(c, 1, 2)?; readout(g, y, 1) }),
        ("diff_v", vec![vec![2, 4, 3]], |g, v| { let y = g.diff(v[0], Axis::Vertical)?; readout(g, y, 1) }),
        ("diff_h", vec![vec![2, 4, 3]], |g, v| { let y = g.diff(v[0], Axis::Horizontal)?; readout(g, y, 1) }),
        ("sepconv", vec![vec![2, 5, 6], vec![3, 5, 6], vec![3, 5, 6]], |g, v| { let y = g.sepconv(v[0], v[1], v[2])?; readout(g, y, 1) }),
        ("linear", vec![vec![2, 2, 2], vec![3, 8], vec![3]], |g, v| { let y = g.linear(v[0], v[1], Some(v[2]))?; readout(g, y, 1) }),
        ("reshape", vec![vec![2, 3]], |g, v| { let y = g.reshape(v[0], &[3, 2])?; readout(g, y, 1) }),
        ("clamp_min", vec![vec![4]], |g, v| { let y = g.clamp_min(v[0], -2.0); readout(g, y, 1) }),
    ];
    for (name, shapes, build) in cases {
        for seed in 0..5u64 {
            let inputs: Vec<Tensor> = shapes.iter().enumerate().map(|(i, s)| random(s, seed * 31 + i as u64)).collect();
            let err = grad_check(&inputs, 1e-5, build).unwrap();
            assert!(err < 1e-4, "{name} seed {seed}: {err}");
        }
    }
}

#[test]
fn spectral_scale_gradient() {
    let w = random(&[3, 4], 9);
    let u: Vec<f64> = vec![0.6, 0.0, 0.8];
    let v: Vec<f64> = vec![0.5, 0.5, 0.5, 0.5];
    for seed in 0..5 {
        let err = grad_check(&[random(&[3, 4], seed)], 1e-5, |g, x| {
            let y = g.spectral_scale(x[0], u.clone(), v.clone(), 3.0)?;
            let p = g.constant(w.clone());
            let m = g.mul(y, p)?;
            Ok(g.sum(m))
        })
        .unwrap();
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn forward_ops_are_deterministic() {
    let run = || {
        let mut g = Graph::new();
        let x = g.constant(random(&[2, 6, 6], 1));
        let w = g.constant(random(&[3, 2, 3, 3], 2));
        let y = g.conv2d(x, w, None, 1).unwrap();
        let p = g.max_pool2(y).unwrap();
        let u = g.upsample2(p).unwrap();
        let t = g.tanh(u);
        g.value(t).clone()
    };
    let (a, b) = (run(), run());
    assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
}
