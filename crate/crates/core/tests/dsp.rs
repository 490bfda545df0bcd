mod common;

use common::{max_diff, naive_dft_mag, rng};
use proptest::prelude::*;
use rand::Rng;
use trafo_nn::dsp::{
    frame_count, frame_signal, mel_filterbank, mel_spectrogram, stft, to_db, AudioSignal, Scale, StftConfig,
    WindowFn,
};
use trafo_nn::Error;

fn rect(l: usize, hop: usize) -> StftConfig {
    StftConfig {
        window_len: l,
        hop,
        window_fn: WindowFn::Rect,
    }
}

fn noise(n: usize, seed: u64) -> AudioSignal {
    let mut r = rng(seed);
    AudioSignal::new((0..n).map(|_| r.random_range(-1.0..1.0)).collect(), 48_000.0).unwrap()
}

#[test]
fn paper_segment_has_seventeen_frames() {
    let sig = AudioSignal::new(vec![0.0; 17 * 1024], 48_000.0).unwrap();
    assert_eq!(frame_signal(&sig, &StftConfig::default()).unwrap().len(), 17);
    let m = mel_spectrogram(&sig, &StftConfig::default(), 64).unwrap();
    assert_eq!((m.n_bins, m.n_frames), (64, 17));
    assert!(m.values.iter().all(|&v| v == -120.0));
}

#[test]
fn frame_boundaries() {
    let one = AudioSignal::new(vec![0.5; 256], 8000.0).unwrap();
    assert_eq!(frame_signal(&one, &rect(256, 256)).unwrap().len(), 1);
    let tail = AudioSignal::new(vec![0.5; 511], 8000.0).unwrap();
    assert_eq!(frame_signal(&tail, &rect(256, 256)).unwrap().len(), 1);
    let short = AudioSignal::new(vec![0.5; 255], 8000.0).unwrap();
    assert!(matches!(frame_signal(&short, &rect(256, 256)), Err(Error::Length(_))));
}

#[test]
fn stft_matches_naive_dft() {
    let sig = noise(4096, 37);
    for (l, hop, wf) in [(256, 256, WindowFn::Rect), (256, 100, WindowFn::Hann), (256, 64, WindowFn::Hamming)] {
        let cfg = StftConfig {
            window_len: l,
            hop,
            window_fn: wf,
        };
        let s = stft(&sig, &cfg).unwrap();
        let w = wf.coefficients(l);
        assert_eq!(s.n_bins, l / 2 + 1);
        for t in 0..s.n_frames {
            let frame: Vec<f64> = (0..l).map(|n| sig.samples[t * hop + n] * w[n]).collect();
            let want = naive_dft_mag(&frame);
            let got: Vec<f64> = (0..s.n_bins).map(|b| s.get(b, t)).collect();
            assert!(max_diff(&got, &want) < 1e-9);
        }
        assert!((s.freq_axis_hz[3] - 3.0 * 48_000.0 / l as f64).abs() < 1e-12);
    }
}

#[test]
fn on_bin_cosine_peaks_at_half_length() {
    let (l, b, fs) = (512, 37, 48_000.0);
    let f0 = b as f64 * fs / l as f64;
    let x = (0..4 * l).map(|n| (2.0 * std::f64::consts::PI * f0 * n as f64 / fs).cos()).collect();
    let s = stft(&AudioSignal::new(x, fs).unwrap(), &rect(l, l)).unwrap();
    for t in 0..s.n_frames {
        assert!((s.get(b, t) - l as f64 / 2.0).abs() < 1e-9);
        for k in (0..s.n_bins).filter(|k| k.abs_diff(b) > 1) {
            assert!(s.get(k, t) < 1e-9);
        }
    }
}

#[test]
fn db_conversion_rejects_double_application() {
    let s = stft(&noise(1024, 1), &rect(256, 256)).unwrap();
    let d = to_db(&s).unwrap();
    assert_eq!(d.scale, Scale::Db);
    assert!(matches!(to_db(&d), Err(Error::State(_))));
}

#[test]
fn filterbank_rows_are_unimodal_and_cover_range() {
    let bank = mel_filterbank(64, 513, 20.0, 16_000.0, 48_000.0).unwrap();
    assert_eq!((bank.n_mels, bank.n_fft_bins, bank.weights.len()), (64, 513, 64 * 513));
    for m in 0..64 {
        let row = bank.row(m);
        assert!(row.iter().all(|&v| v >= 0.0));
        assert!(row.iter().sum::<f64>() > 0.0);
        let peak = row.iter().enumerate().fold(0, |a, (i, &v)| if v > row[a] { i } else { a });
        assert!(row[..=peak].windows(2).all(|w| w[0] <= w[1]));
        assert!(row[peak..].windows(2).all(|w| w[0] >= w[1]));
    }
    let df = 24_000.0 / 512.0;
    for k in 0..513 {
        let f = k as f64 * df;
        if f > 20.0 && f < 16_000.0 {
            assert!((0..64).map(|m| bank.row(m)[k]).sum::<f64>() > 0.0, "bin {k} uncovered");
        }
    }
}

#[test]
fn tone_lands_in_its_mel_band() {
    let fs = 48_000.0;
    let x = (0..17 * 1024).map(|n| (2.0 * std::f64::consts::PI * 1000.0 * n as f64 / fs).sin()).collect();
    let sig = AudioSignal::new(x, fs).unwrap();
    let m = mel_spectrogram(&sig, &StftConfig::default(), 64).unwrap();
    let bank = mel_filterbank(64, 513, 20.0, 16_000.0, fs).unwrap();
    let energy: Vec<f64> = (0..64).map(|b| m.bin_row(b).iter().sum()).collect();
    let best = (0..64).max_by(|&a, &b| energy[a].total_cmp(&energy[b])).unwrap();
    let (lo, hi) = bank.edges_hz[best];
    assert!((bank.centers_hz[best] - 1000.0).abs() <= hi - lo);
}

proptest! {
    #[test]
    fn frame_count_formula(n in 1usize..5000, l in 1usize..600, hop_frac in 0.0f64..1.0) {
        let hop = 1 + ((l - 1) as f64 * hop_frac) as usize;
        let sig = AudioSignal::new(vec![0.0; n], 1000.0).unwrap();
        let got = frame_signal(&sig, &rect(l, hop)).map(|f| f.len()).unwrap_or(0);
        let want = if n < l { 0 } else { (n - l) / hop + 1 };
        prop_assert_eq!(got, want);
        prop_assert_eq!(frame_count(n, l, hop), want);
    }

    #[test]
    fn stft_magnitude_is_homogeneous(seed in any::<u64>(), a in -20.0f64..20.0) {
        let sig = noise(1024, seed);
        let scaled = AudioSignal::new(sig.samples.iter().map(|v| a * v).collect(), 48_000.0).unwrap();
        let cfg = StftConfig { window_len: 256, hop: 128, window_fn: WindowFn::Hann };
        let s = stft(&sig, &cfg).unwrap();
        let t = stft(&scaled, &cfg).unwrap();
        for (x, y) in s.values.iter().zip(&t.values) {
            prop_assert!((a.abs() * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }
}
