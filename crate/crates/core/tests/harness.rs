use midgap::data::{split_clip, FrameSequence, VideoSet};
use midgap::harness::{checkpoint, context_sweep, evaluate, middle_sweep, model_for, test_set, train_set, Config, Trainer, Variant};
use midgap::{Error, Tensor};

fn tiny(variant: Variant, iterations: usize) -> Config {
    let mut c = Config::synthetic();
    c.variant = variant;
    c.iterations = iterations;
    c.train_videos = 4;
    c.test_videos = 2;
    c.video_length = 11;
    c.batch_size = 2;
    c
}

fn trained(variant: Variant, iterations: usize) -> (Trainer, VideoSet) {
    let c = tiny(variant, iterations);
    let data = train_set(&c).unwrap();
    let mut t = Trainer::new(c).unwrap();
    t.run(&data, None).unwrap();
    (t, data)
}

fn frame_bits(t: &Trainer, data: &VideoSet) -> Vec<u64> {
    let c = &t.config;
    let windows = data.windows(c.p, c.test_middle, c.f, c.test_stride).unwrap();
    windows.iter().flat_map(|w| t.model.infer(w).unwrap()).flat_map(Tensor::into_data).map(f64::to_bits).collect()
}

#[test]
fn identical_runs_have_identical_traces() {
    let (a, _) = trained(Variant::Tai, 3);
    let (b, _) = trained(Variant::Tai, 3);
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.model.store.fingerprint(), b.model.store.fingerprint());
    assert_eq!(a.disc_store.fingerprint(), b.disc_store.fingerprint());
}

#[test]
fn one_iteration_moves_both_networks() {
    let c = tiny(Variant::BiSa, 1);
    let data = train_set(&c).unwrap();
    let mut t = Trainer::new(c).unwrap();
    let (g0, d0) = (t.model.store.fingerprint(), t.disc_store.fingerprint());
    let r = t.step(&data).unwrap();
    assert!(r.total_g.is_finite() && r.total_d.is_finite());
    assert_ne!(t.model.store.fingerprint(), g0);
    assert_ne!(t.disc_store.fingerprint(), d0);
    assert_eq!(t.iteration, 1);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let (t, data) = trained(Variant::Twi, 2);
    let dir = tempfile::tempdir().unwrap();
    let path = t.save(dir.path()).unwrap();
    assert!(dir.path().join("trace.csv").exists());
    let back = checkpoint::read(&path).unwrap().into_trainer().unwrap();
    assert_eq!(back.iteration, 2);
    assert_eq!(back.trace, t.trace);
    assert_eq!(back.model.store.fingerprint(), t.model.store.fingerprint());
    assert_eq!(back.disc_store.fingerprint(), t.disc_store.fingerprint());
    assert_eq!(frame_bits(&back, &data), frame_bits(&t, &data));

    let model = midgap::harness::load_model(&t.config, &path).unwrap();
    let windows = data.windows(3, 5, 3, 5).unwrap();
    assert_eq!(model.infer(&windows[0]).unwrap(), t.model.infer(&windows[0]).unwrap());
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let (straight, data) = trained(Variant::ForwardOnly, 4);
    let (half, _) = trained(Variant::ForwardOnly, 2);
    let dir = tempfile::tempdir().unwrap();
    let path = half.save(dir.path()).unwrap();
    let mut resumed = checkpoint::read(&path).unwrap().into_trainer().unwrap();
    resumed.config.iterations = 4;
    resumed.run(&data, None).unwrap();
    assert_eq!(resumed.trace, straight.trace);
    assert_eq!(resumed.model.store.fingerprint(), straight.model.store.fingerprint());
}

#[test]
fn shape_mismatch_leaves_trainer_untouched() {
    let (t, _) = trained(Variant::Tai, 1);
    let ckpt = checkpoint::decode(&checkpoint::encode(&t)).unwrap();
    let mut other = tiny(Variant::Tai, 1);
    other.arch.head_width += 1;
    let mut target = Trainer::new(other).unwrap();
    let before = (target.model.store.fingerprint(), target.disc_store.fingerprint(), target.iteration);
    assert!(matches!(ckpt.restore(&mut target), Err(Error::Shape(_))));
    assert_eq!((target.model.store.fingerprint(), target.disc_store.fingerprint(), target.iteration), before);
}

#[test]
fn variant_mismatch_is_config_error() {
    let (t, _) = trained(Variant::Tai, 1);
    let ckpt = checkpoint::decode(&checkpoint::encode(&t)).unwrap();
    let mut target = Trainer::new(tiny(Variant::Twi, 1)).unwrap();
    assert!(matches!(ckpt.restore(&mut target), Err(Error::Config(_))));
    let mut model = model_for(&tiny(Variant::BiTw, 1), None).err();
    assert!(matches!(model.take(), Some(Error::Config(_))));
}

#[test]
fn corrupt_checkpoint_is_rejected() {
    let (t, _) = trained(Variant::BiTw, 1);
    let mut bytes = checkpoint::encode(&t);
    assert!(checkpoint::decode(&bytes[..bytes.len() - 3]).is_err());
    bytes.push(0);
    assert!(checkpoint::decode(&bytes).is_err());
    bytes[0] = b'X';
    assert!(checkpoint::decode(&bytes).is_err());
}

#[test]
fn evaluation_does_not_change_weights() {
    let (t, data) = trained(Variant::Tai, 1);
    let before = t.model.store.fingerprint();
    let windows = data.windows(3, 5, 3, 5).unwrap();
    let a = evaluate(&t.model, &windows, "tai", "synthetic").unwrap();
    let b = evaluate(&t.model, &windows, "tai", "synthetic").unwrap();
    assert_eq!(t.model.store.fingerprint(), before);
    assert_eq!(a, b);
    assert_eq!(a.points.iter().map(|p| p.t).collect::<Vec<_>>(), vec![4, 5, 6, 7, 8]);
    assert!(a.points.iter().all(|p| p.count == windows.len()));
}

#[test]
fn repeat_p_is_perfect_on_static_video() {
    let frame = Tensor::from_fn(&[1, 32, 32], |i| (i % 7) as f64 / 7.0);
    let video = FrameSequence::from_frames(&vec![frame; 12]).unwrap();
    let data = VideoSet::new(vec![video]).unwrap();
    let model = model_for(&Config { variant: Variant::parse("handcrafted:repeat_p").unwrap(), ..Config::synthetic() }, None).unwrap();
    let s = evaluate(&model, &data.windows(3, 5, 3, 1).unwrap(), "repeat_p", "static").unwrap();
    assert!(s.points.iter().all(|p| p.ssim == 1.0 && p.psnr == f64::INFINITY));
}

#[test]
fn full_context_sweep_reproduces_evaluate() {
    let (t, data) = trained(Variant::Tai, 1);
    let windows = data.windows(3, 5, 3, 5).unwrap();
    let direct = evaluate(&t.model, &windows, "tai", "synthetic").unwrap();
    let sweep = context_sweep(&t.model, &windows, &[1, 3], "tai", "synthetic").unwrap();
    assert_eq!(sweep.len(), 2);
    assert_eq!(sweep[1], (3, direct));
    assert!(context_sweep(&t.model, &windows, &[4], "tai", "synthetic").is_err());
}

#[test]
fn middle_sweep_at_training_length_matches_evaluate() {
    let (t, data) = trained(Variant::BiSa, 1);
    let sweep = middle_sweep(&t.model, &data, (3, 3), &[3, 5], 5, "bi_sa", "synthetic").unwrap();
    let direct = evaluate(&t.model, &data.windows(3, 3, 3, 5).unwrap(), "bi_sa", "synthetic").unwrap();
    assert_eq!(sweep[0], (3, direct));
    assert_eq!(sweep[1].1.points.len(), 5);
}

#[test]
fn empty_and_mismatched_data_are_data_errors() {
    assert!(matches!(VideoSet::new(vec![]), Err(Error::Data(_))));
    let small = FrameSequence::from_frames(&vec![Tensor::zeros(&[1, 16, 16]); 12]).unwrap();
    let data = VideoSet::new(vec![small]).unwrap();
    let mut t = Trainer::new(tiny(Variant::Tai, 1)).unwrap();
    assert!(matches!(t.run(&data, None), Err(Error::Data(_))));
}

#[test]
fn non_finite_weights_report_divergence() {
    let c = tiny(Variant::ForwardOnly, 1);
    let data = train_set(&c).unwrap();
    let mut t = Trainer::new(c).unwrap();
    t.model.store.params_mut()[0].value.data_mut()[0] = f64::NAN;
    match t.step(&data) {
        Err(Error::TrainingDiverged { iteration, .. }) => assert_eq!(iteration, 0),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn handcrafted_variants_cannot_be_trained() {
    let c = Config { variant: Variant::parse("sa_pf").unwrap(), ..Config::synthetic() };
    assert!(matches!(Trainer::new(c), Err(Error::Config(_))));
}

#[test]
fn test_windows_follow_the_stride() {
    let c = Config::synthetic();
    let test = test_set(&c).unwrap();
    let windows = test.windows(c.p, c.test_middle, c.f, c.test_stride).unwrap();
    // 24-frame videos, 11-frame windows every 5 frames: starts 1, 6, 11.
    assert_eq!(windows.len(), 3 * c.test_videos);
    let clip = split_clip(&test.videos()[0].slice(5, 16).unwrap(), 3, 5, 3).unwrap();
    assert_eq!(windows[1], clip);
}
