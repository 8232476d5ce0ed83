use super::*;
use rand::Rng;

fn tiny() -> ModelConfig {
    ModelConfig {
        hidden_dim: 16,
        filter_dim: 32,
        n_encoder_blocks: 1,
        context_dim: 8,
        speaker_dim: 8,
        language_dim: 4,
        posterior_layers: 2,
        flow_layers: 2,
        flow_wn_layers: 2,
        duration_filter: 16,
        decoder_channels: 16,
        resblock_dilations: vec![1],
        discriminator_channels: vec![4, 8],
        discriminator_kernel: 5,
        segment_frames: 4,
        n_fft: 256,
        win_length: 256,
        hop_length: 64,
        mel_channels: 20,
        ..ModelConfig::default()
    }
}

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f32> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

#[test]
fn shapes_and_range_checks() {
    let cfg = tiny();
    let mut store = ParamStore::<f32>::new();
    let model = Model::new(&mut store, &cfg, 20, 3).unwrap();
    let ids = [1, 2, 3, 4, 5];
    let item = TextItem {
        ids: &ids,
        context: None,
        language: 0,
        speaker: 1,
    };
    let p = model.encode_text_eval(&store, item).unwrap();
    assert_eq!(p.mu.dim(), (5, 16));
    assert_eq!(p.hidden.dim(), (5, 16));
    assert!(p.logvar.iter().all(|&v| (-9.0..=4.0).contains(&v)));
    let bad = TextItem { language: 7, ..item };
    assert_eq!(model.encode_text_eval(&store, bad).unwrap_err().kind(), "out-of-range");
    let bad = TextItem { speaker: 14, ..item };
    assert_eq!(model.encode_text_eval(&store, bad).unwrap_err().kind(), "out-of-range");
    let ctx = Array2::zeros((5, 8));
    let bad = TextItem {
        context: Some(&ctx),
        ..item
    };
    assert_eq!(model.encode_text_eval(&store, bad).unwrap_err().kind(), "context-presence-mismatch");
    let other = TextItem { language: 3, ..item };
    let q = model.encode_text_eval(&store, other).unwrap();
    let diff = (&p.mu - &q.mu).mapv(f32::abs).fold(0.0f32, |m, &v| m.max(v));
    assert!(diff > 0.0);
}

#[test]
fn flow_identity_at_init_and_round_trip() {
    let cfg = tiny();
    let mut store = ParamStore::<f32>::new();
    let model = Model::new(&mut store, &cfg, 20, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let z = random(&mut rng, 40, 16);
    assert_eq!(model.flow_eval(&store, &z, 0, false).unwrap(), z);
    // perturb the zero-initialized output layers so the flow is non-trivial
    for id in store.ids_with_prefix("gen.flow").collect::<Vec<_>>() {
        if store.name(id).contains(".post.") {
            store.value_mut(id).mapv_inplace(|_| rng.random_range(-0.1..0.1));
        }
    }
    let y = model.flow_eval(&store, &z, 0, false).unwrap();
    assert!(y != z);
    let back = model.flow_eval(&store, &y, 0, true).unwrap();
    let err = (&back - &z).mapv(f32::abs).fold(0.0f32, |m, &v| m.max(v));
    assert!(err <= 1e-4, "{err}");
    assert!(model.flow_eval(&store, &z, 1, false).unwrap() != y);
}

#[test]
fn posterior_eval_mode_is_mean() {
    let cfg = tiny();
    let mut store = ParamStore::<f32>::new();
    let model = Model::new(&mut store, &cfg, 20, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let spec = random(&mut rng, 40, cfg.linear_bins()).mapv(f32::abs);
    let (z, mu, _) = model.encode_posterior_eval(&store, &spec, 0, None).unwrap();
    assert_eq!(z, mu);
    assert_eq!(z.dim(), (40, 16));
    let (a, ..) = model.encode_posterior_eval(&store, &spec, 0, Some(5)).unwrap();
    let (b, ..) = model.encode_posterior_eval(&store, &spec, 0, Some(5)).unwrap();
    assert_eq!(a, b);
    assert!(a != mu);
}

#[test]
fn decoder_length_range_and_silence() {
    let cfg = tiny();
    let mut store = ParamStore::<f32>::new();
    let model = Model::new(&mut store, &cfg, 20, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let z = random(&mut rng, 32, 16);
    let wav = model.decode_eval(&store, &z, 2).unwrap();
    assert_eq!(wav.len(), 32 * 64);
    assert!(wav.iter().all(|v| (-1.0..=1.0).contains(v)));
    let w = store.id("gen.decoder.post.weight").unwrap();
    store.value_mut(w).fill(0.0);
    let silent = model.decode_eval(&store, &Array2::zeros((32, 16)), 2).unwrap();
    let rms = (silent.iter().map(|v| v * v).sum::<f32>() / silent.len() as f32).sqrt();
    assert!(rms < 1e-3);
}

#[test]
fn discriminator_depth_and_determinism() {
    let cfg = tiny();
    let mut store = ParamStore::<f32>::new();
    let model = Model::new(&mut store, &cfg, 20, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let wav: Vec<f32> = (0..1024).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (s1, maps) = model.discriminate_eval(&store, &wav).unwrap();
    let (s2, _) = model.discriminate_eval(&store, &wav).unwrap();
    assert_eq!(s1, s2);
    assert_eq!(maps.len(), cfg.discriminator_channels.len());
    assert!(s1.iter().all(|v| v.is_finite()));
}

#[test]
fn durations_positive_and_deterministic() {
    let cfg = tiny();
    let mut store = ParamStore::<f32>::new();
    let model = Model::new(&mut store, &cfg, 20, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let p = rng.random_range(1..8);
        let hidden = random(&mut rng, p, 16);
        let d = model.predict_durations(&store, &hidden, 2, 3, 0.8, 1.0, &mut rng).unwrap();
        assert_eq!(d.len(), p);
        assert!(d.iter().all(|&x| x >= 1));
        let a = model.predict_durations(&store, &hidden, 2, 3, 0.0, 1.0, &mut rng).unwrap();
        let b = model.predict_durations(&store, &hidden, 2, 3, 0.0, 1.0, &mut rng).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn synthesize_is_deterministic_at_zero_noise() {
    let cfg = tiny();
    let mut store = ParamStore::<f32>::new();
    let model = Model::new(&mut store, &cfg, 20, 3).unwrap();
    let ids = [4, 5, 6];
    let item = TextItem {
        ids: &ids,
        context: None,
        language: 6,
        speaker: 0,
    };
    let a = model.synthesize(&store, item, SynthesisNoise::deterministic()).unwrap();
    let b = model.synthesize(&store, item, SynthesisNoise::deterministic()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.waveform.len(), a.durations.iter().sum::<usize>() * 64);
}

#[test]
fn speaker_table_grows_with_mean_rows() {
    let cfg = tiny();
    let mut store = ParamStore::<f32>::new();
    let mut model = Model::new(&mut store, &cfg, 20, 3).unwrap();
    let before = store.get(SPEAKER_TABLE).unwrap().clone();
    assert_eq!(model.extend_speakers(&mut store, 9).unwrap(), 23);
    let after = store.get(SPEAKER_TABLE).unwrap();
    assert_eq!(after.dim(), (23, 8));
    let mean = before.mean_axis(ndarray::Axis(0)).unwrap();
    for r in 14..23 {
        for c in 0..8 {
            assert!((after[[r, c]] - mean[c]).abs() < 1e-6);
        }
    }
    model.check_speaker(22).unwrap();
    assert!(model.check_speaker(23).is_err());
}

#[test]
fn prior_loglik_matches_direct_density() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mu = random(&mut rng, 3, 4);
    let logvar = random(&mut rng, 3, 4);
    let z = random(&mut rng, 5, 4);
    let ll = prior_loglik(mu.view(), logvar.view(), z.view());
    for p in 0..3 {
        for f in 0..5 {
            let mut want = 0.0f64;
            for c in 0..4 {
                let (m, lv, x) = (mu[[p, c]] as f64, logvar[[p, c]] as f64, z[[f, c]] as f64);
                want += -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * lv - 0.5 * (x - m).powi(2) / lv.exp();
            }
            assert!((ll[[p, f]] as f64 - want).abs() < 1e-4);
        }
    }
}
