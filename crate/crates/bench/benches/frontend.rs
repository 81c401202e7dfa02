use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use farmic::audio::{istft, stft_multichannel, StftConfig};
use farmic::beamform::{beamform_speaker, estimate_covariances, spmwf_weights, BeamformConfig};
use farmic::count::{nmesc_count_vectors, NmescConfig};
use farmic::scoring::der;
use farmic::select::{envelope_variance_samples, EvConfig};
use farmic_bench::{clusters, masks, recording, sessions, spectrogram};

fn stft(c: &mut Criterion) {
    let rec = recording(8, 10.0, 1);
    let cfg = StftConfig::default();
    let mut g = c.benchmark_group("stft");
    g.throughput(Throughput::Elements((rec.num_samples() * 8) as u64));
    g.bench_function("forward_8ch_10s", |b| b.iter(|| stft_multichannel(black_box(&rec), cfg).unwrap()));
    let spec = stft_multichannel(&rec, cfg).unwrap().channel(0);
    g.bench_function("inverse_1ch_10s", |b| b.iter(|| istft(black_box(&spec)).unwrap()));
    g.finish();
}

fn beamformer(c: &mut Criterion) {
    let mut g = c.benchmark_group("spmwf");
    for m in [2usize, 8, 16] {
        let spec = spectrogram(200, m, 2);
        let (t, n) = masks(spec.frames(), spec.bins(), 3);
        let cov = estimate_covariances(&spec, &t, &n).unwrap();
        g.bench_with_input(BenchmarkId::new("covariances", m), &m, |b, _| {
            b.iter(|| estimate_covariances(black_box(&spec), &t, &n).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("weights", m), &m, |b, _| {
            b.iter(|| spmwf_weights(black_box(&cov), 0, 0.0).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("speaker_chain", m), &m, |b, _| {
            b.iter(|| beamform_speaker(black_box(&spec), &t, Some(&n), &BeamformConfig::default()).unwrap())
        });
    }
    g.finish();
}

fn counting(c: &mut Criterion) {
    let cfg = NmescConfig::default();
    let mut g = c.benchmark_group("nmesc");
    g.sample_size(20);
    for (k, per) in [(2usize, 12usize), (4, 12), (8, 12), (8, 25)] {
        let v = clusters(k, per, 64, 4);
        g.bench_with_input(BenchmarkId::new("count", k * per), &v, |b, v| {
            b.iter(|| nmesc_count_vectors(black_box(v), &cfg).unwrap())
        });
    }
    g.finish();
}

fn scoring(c: &mut Criterion) {
    let mut g = c.benchmark_group("der");
    for minutes in [10.0, 60.0] {
        let (r, h) = sessions(4, minutes * 60.0, 5);
        g.bench_with_input(BenchmarkId::new("collar_0.25", minutes as u64), &(r, h), |b, (r, h)| {
            b.iter(|| der(black_box(r), black_box(h), 0.25).unwrap())
        });
    }
    g.finish();
}

fn envelope_variance(c: &mut Criterion) {
    let x = recording(1, 30.0, 6).channels()[0].to_f64();
    c.bench_function("ev_30s", |b| b.iter(|| envelope_variance_samples(black_box(&x), 16000, &EvConfig::default()).unwrap()));
}

criterion_group!(benches, stft, beamformer, counting, scoring, envelope_variance);
criterion_main!(benches);
