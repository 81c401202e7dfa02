use farmic::count::{channel_correlation, cluster_channels, CorrelationConfig};
use farmic::select::c50_from_rir;
use farmic::sim::{analytic_c50, make_rir, simulate_scene, write_scene, MicGroup, SceneError, SceneSpec};

fn energy(x: &[f32]) -> f64 {
    x.iter().map(|&v| f64::from(v).powi(2)).sum()
}

#[test]
fn zero_t60_is_a_pure_impulse() {
    let h = make_rir(3.0, 0.0, 16000, None, 1).unwrap();
    let nz: Vec<usize> = (0..h.len()).filter(|&i| h.samples[i] != 0.0).collect();
    assert_eq!(nz, vec![48]);
    assert_eq!(h.samples[48], 1.0);
    assert_eq!(c50_from_rir(&h).unwrap(), f64::INFINITY);
}

#[test]
fn c50_matches_exponential_decay() {
    let expect = analytic_c50(0.5);
    assert!((expect - 4.744).abs() < 1e-3, "{expect}");
    let mean = (0..20u64)
        .map(|seed| c50_from_rir(&make_rir(2.0, 0.5, 16000, None, seed).unwrap()).unwrap())
        .sum::<f64>()
        / 20.0;
    assert!((mean - expect).abs() <= 0.3, "{mean} vs {expect}");
}

#[test]
fn delay_only_shifts_the_response() {
    for seed in 0..5 {
        let a = make_rir(5.0, 0.4, 16000, None, seed).unwrap();
        let b = make_rir(10.0, 0.4, 16000, None, seed).unwrap();
        let (ca, cb) = (c50_from_rir(&a).unwrap(), c50_from_rir(&b).unwrap());
        assert!((ca - cb).abs() < 0.3, "{ca} vs {cb}");
    }
    assert!((energy(&make_rir(1.0, 0.3, 8000, None, 0).unwrap().samples) - 1.0).abs() < 1e-6);
    assert!(make_rir(1.0, -0.1, 16000, None, 0).is_err());
}

fn small_spec() -> SceneSpec {
    SceneSpec {
        seed: 7,
        n_speakers: 2,
        n_mics: 4,
        duration_s: 8.0,
        turn_s: 2.0,
        overlap_s: 0.3,
        ..Default::default()
    }
}

#[test]
fn same_seed_is_bit_identical_on_disk() {
    let spec = small_spec();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut manifests = Vec::new();
    for d in &dirs {
        manifests.push(write_scene(d.path(), &simulate_scene(&spec).unwrap()).unwrap());
    }
    assert_eq!(manifests[0], manifests[1]);
    let m = &manifests[0];
    let mut files: Vec<String> = m.files.channels.clone();
    files.extend(m.files.references.values().cloned());
    files.extend(m.files.masks.values().flat_map(|f| [f.target.clone(), f.noise.clone()]));
    files.extend([m.files.rttm.clone(), m.files.c50.clone(), m.files.embeddings.clone(), "manifest.json".into()]);
    files.extend(m.files.noise.clone());
    files.push("emb/embeddings.json".into());
    for f in &files {
        let a = std::fs::read(dirs[0].path().join(f)).unwrap();
        let b = std::fs::read(dirs[1].path().join(f)).unwrap();
        assert!(!a.is_empty(), "{f}");
        assert_eq!(a, b, "{f} differs");
    }
    let other = simulate_scene(&SceneSpec { seed: 8, ..spec }).unwrap();
    let first = simulate_scene(&small_spec()).unwrap();
    assert_ne!(other.mixture, first.mixture);
}

#[test]
fn clean_single_source_mask_is_one_where_active() {
    let spec = SceneSpec {
        n_speakers: 1,
        n_mics: 2,
        t60_s: vec![0.0],
        snr_db: None,
        duration_s: 6.0,
        ..Default::default()
    };
    let truth = simulate_scene(&spec).unwrap();
    let (target, noise) = &truth.masks[0];
    let hop = spec.stft.hop as f64 / f64::from(spec.sample_rate);
    let pad = (spec.stft.frame_len - spec.stft.hop) as f64 / f64::from(spec.sample_rate);
    let frame_s = spec.stft.frame_len as f64 / f64::from(spec.sample_rate);
    let mut checked = 0;
    for t in 0..target.frames() {
        let (a, b) = (t as f64 * hop - pad, t as f64 * hop - pad + frame_s);
        // frame fully inside a turn, clear of the ramps
        if truth.rttm.segments.iter().any(|s| a >= s.start + 0.05 && b <= s.end - 0.05) {
            for f in 0..target.bins() {
                assert_eq!(target.get(t, f), 1.0);
                assert_eq!(noise.get(t, f), 0.0);
            }
            checked += 1;
        }
    }
    assert!(checked > 50);
    assert!(target.values().iter().all(|&v| v == 0.0 || v == 1.0));
}

#[test]
fn mixture_is_the_sum_of_its_parts() {
    let spec = SceneSpec { snr_db: Some(vec![20.0]), ..small_spec() };
    let truth = simulate_scene(&spec).unwrap();
    let noise = truth.noise.as_ref().unwrap();
    let mut image_energy = 0.0;
    let mut mix_energy = 0.0;
    for m in 0..spec.n_mics {
        let x = &truth.mixture.channels()[m].samples;
        let n = &noise.channels()[m].samples;
        let mut resid = 0.0;
        for i in 0..x.len() {
            let parts: f64 = truth.images.iter().map(|img| f64::from(img.channels()[m].samples[i])).sum::<f64>()
                + f64::from(n[i]);
            resid += (f64::from(x[i]) - parts).powi(2);
        }
        assert!(resid.sqrt() <= 1e-6 * energy(x).sqrt(), "mic {m}");
        mix_energy += energy(x);
        image_energy += truth.images.iter().map(|img| energy(&img.channels()[m].samples)).sum::<f64>();
    }
    let db = 10.0 * (mix_energy / image_energy).log10();
    assert!(db.abs() < 1.0, "{db} dB");
    for (t, n) in &truth.masks {
        assert!(t.values().iter().zip(n.values()).all(|(a, b)| (a + b - 1.0).abs() < 1e-6));
    }
}

#[test]
fn mic_groups_show_in_channel_correlation() {
    let groups = vec![
        MicGroup { mics: vec![0, 1, 2], delay_ms: 0.0 },
        MicGroup { mics: vec![3, 4, 5], delay_ms: 20.0 },
    ];
    let cfg = CorrelationConfig::default();
    for seed in 0..3 {
        let spec = SceneSpec {
            seed,
            n_speakers: 2,
            n_mics: 6,
            mic_groups: groups.clone(),
            snr_db: Some(vec![-10.0]),
            duration_s: 12.0,
            ..Default::default()
        };
        let corr = channel_correlation(&simulate_scene(&spec).unwrap().mixture, &cfg).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                if i == j {
                    continue;
                }
                let v = corr.get(i, j);
                if i / 3 == j / 3 {
                    assert!(v >= 0.5, "seed {seed}: within ({i},{j}) = {v}");
                } else {
                    assert!(v <= 0.3, "seed {seed}: across ({i},{j}) = {v}");
                }
            }
        }
        let g = cluster_channels(&corr, 0.3);
        assert_eq!(g.groups, vec![vec!["00", "01", "02"], vec!["03", "04", "05"]]);
    }
}

#[test]
fn rejects_bad_and_infeasible_specs() {
    let infeasible = |s: SceneSpec| matches!(simulate_scene(&s), Err(SceneError::Infeasible(_)));
    let invalid = |s: SceneSpec| matches!(simulate_scene(&s), Err(SceneError::Invalid(_)));
    assert!(infeasible(SceneSpec { overlap_s: 3.5, ..small_spec() }));
    assert!(infeasible(SceneSpec { n_speakers: 8, duration_s: 4.0, ..small_spec() }));
    assert!(invalid(SceneSpec { duration_s: 1.5, ..small_spec() }));
    assert!(invalid(SceneSpec { n_mics: 65, ..small_spec() }));
    assert!(invalid(SceneSpec { t60_s: vec![0.3, 0.2], ..small_spec() }));
    assert!(invalid(SceneSpec {
        mic_groups: vec![MicGroup { mics: vec![0, 1], delay_ms: 0.0 }],
        ..small_spec()
    }));
}

#[test]
fn truth_is_consistent() {
    let spec = SceneSpec { n_speakers: 3, n_mics: 5, duration_s: 20.0, ..small_spec() };
    let truth = simulate_scene(&spec).unwrap();
    assert_eq!(truth.mixture.channel_ids(), vec!["00", "01", "02", "03", "04"]);
    assert_eq!(truth.rttm.speakers().len(), 3);
    assert_eq!(truth.embeddings.len(), truth.rttm.segments.len() * 5);
    assert_eq!(truth.c50_db.len(), 5);
    assert!(truth.c50_db.values().all(|v| v.is_finite()));
    assert!(truth.mixture.channels().iter().flat_map(|w| &w.samples).all(|v| v.abs() <= 0.9 + 1e-6));
    let segs = &truth.rttm.segments;
    assert!(segs.iter().all(|s| s.end > s.start && s.end <= spec.duration_s));
}
