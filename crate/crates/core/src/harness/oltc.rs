//! OLTC acoustic-state experiment: synthetic corpus -> Mel spectrograms -> CNN.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conv::build_oltc_cnn;
use crate::dsp::{mel_spectrogram_with, AudioSignal, MelConfig, StftConfig};
use crate::error::{Error, Result};
use crate::nn::{one_hot, Network, Sgd, SgdConfig};
use crate::seed;
use crate::synth::{
    add_noise, colored_noise, generate_dataset, noise_profile, spectral_denoise, DenoiseConfig, LabeledClip, NoiseColor,
    OltcState, SynthConfig,
};
use crate::tensor::Tensor;

pub const N_CLASSES: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OltcConfig {
    pub seed: u64,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub synth: SynthConfig,
    pub stft: StftConfig,
    pub mel: MelConfig,
    /// Dynamic range kept below each clip's loudest Mel cell before scaling to [0, 1].
    pub top_db: f64,
    pub epochs: usize,
    pub sgd: SgdConfig,
    pub snr_levels_db: Vec<f64>,
    pub noise_color: NoiseColor,
    pub denoise: DenoiseConfig,
}

impl Default for OltcConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            train_per_class: 100,
            test_per_class: 50,
            synth: SynthConfig::default(),
            stft: StftConfig::default(),
            mel: MelConfig::default(),
            top_db: 40.0,
            epochs: 12,
            sgd: SgdConfig {
                learning_rate: 0.01,
                momentum: 0.9,
                batch_size: 16,
                seed: 0,
            },
            snr_levels_db: vec![20.0, 10.0, 5.0, 0.0],
            noise_color: NoiseColor::White,
            denoise: DenoiseConfig::default(),
        }
    }
}

impl OltcConfig {
    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.stft.validate()?;
        self.sgd.validate()?;
        if self.train_per_class == 0 || self.test_per_class == 0 {
            return Err(Error::Config("train_per_class and test_per_class must be >= 1".into()));
        }
        if !(self.top_db > 0.0) {
            return Err(Error::Config("top_db must be > 0".into()));
        }
        if self.synth.segment_samples < self.stft.window_len {
            return Err(Error::Config("segment shorter than one STFT window".into()));
        }
        Ok(())
    }

    pub fn n_frames(&self) -> usize {
        crate::dsp::frame_count(self.synth.segment_samples, self.stft.window_len, self.stft.hop)
    }
}

/// Mel dB spectrogram scaled so the loudest cell maps to 1 and `top_db` below it to 0.
pub fn clip_features(sig: &AudioSignal, cfg: &OltcConfig) -> Result<Vec<f64>> {
    let mel = mel_spectrogram_with(sig, &cfg.stft, &cfg.mel)?;
    let peak = mel.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = peak - cfg.top_db;
    Ok(mel.values.iter().map(|&v| (v.max(lo) - lo) / cfg.top_db).collect())
}

/// Stacks clip features into an `n x n_mels x n_frames x 1` batch plus labels.
pub fn feature_batch(clips: &[LabeledClip], cfg: &OltcConfig) -> Result<(Tensor, Vec<usize>)> {
    let mut data = Vec::with_capacity(clips.len() * cfg.mel.n_mels * cfg.n_frames());
    for c in clips {
        data.extend(clip_features(&c.signal, cfg)?);
    }
    let x = Tensor::new(vec![clips.len(), cfg.mel.n_mels, cfg.n_frames(), 1], data)?;
    Ok((x, clips.iter().map(|c| c.label.index()).collect()))
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Predicted class per sample, evaluated in chunks to bound memory.
pub fn predict_classes(net: &Network, x: &Tensor) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(x.rows());
    let idx: Vec<usize> = (0..x.rows()).collect();
    for chunk in idx.chunks(64) {
        let p = net.predict(&x.select_rows(chunk))?;
        out.extend((0..p.rows()).map(|i| argmax(p.row(i))));
    }
    Ok(out)
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len().max(1) as f64
}

/// `confusion[true][predicted]` counts.
pub fn confusion(pred: &[usize], truth: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; k]; k];
    for (&p, &t) in pred.iter().zip(truth) {
        m[t][p] += 1;
    }
    m
}

/// Nearest-class-mean classifier on flattened features.
#[derive(Debug, Clone)]
pub struct NearestMean {
    means: Vec<Vec<f64>>,
}

impl NearestMean {
    pub fn fit(x: &Tensor, labels: &[usize], k: usize) -> Self {
        let w = x.row_len();
        let mut means = vec![vec![0.0; w]; k];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (m, v) in means[l].iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        for (m, &c) in means.iter_mut().zip(&counts) {
            if c > 0 {
                m.iter_mut().for_each(|v| *v /= c as f64);
            }
        }
        Self { means }
    }

    pub fn predict(&self, x: &Tensor) -> Vec<usize> {
        (0..x.rows())
            .map(|i| {
                let row = x.row(i);
                let d: Vec<f64> = self
                    .means
                    .iter()
                    .map(|m| m.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum())
                    .collect();
                let mut best = 0;
                for (j, &v) in d.iter().enumerate() {
                    if v < d[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessPoint {
    pub snr_db: f64,
    pub accuracy_noisy: f64,
    pub accuracy_denoised: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OltcReport {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub baseline_accuracy: f64,
    pub epoch_loss: Vec<f64>,
    pub confusion: Vec<Vec<usize>>,
    pub robustness: Vec<RobustnessPoint>,
    pub warnings: Vec<String>,
}

pub struct OltcDatasets {
    pub train: Vec<LabeledClip>,
    pub test: Vec<LabeledClip>,
}

pub fn datasets(cfg: &OltcConfig) -> Result<OltcDatasets> {
    let train = generate_dataset(
        cfg.train_per_class,
        &SynthConfig {
            seed: seed::derive_named(cfg.seed, "oltc-train"),
            ..cfg.synth
        },
    )?;
    let test = generate_dataset(
        cfg.test_per_class,
        &SynthConfig {
            seed: seed::derive_named(cfg.seed, "oltc-test"),
            ..cfg.synth
        },
    )?;
    Ok(OltcDatasets { train, test })
}

/// Trains the reference CNN; returns the network and per-epoch mean loss.
pub fn train_cnn(cfg: &OltcConfig, x: &Tensor, labels: &[usize]) -> Result<(Network, Vec<f64>)> {
    let spec = build_oltc_cnn(cfg.mel.n_mels, cfg.n_frames(), N_CLASSES)?;
    let mut net = Network::new(spec, seed::derive_named(cfg.seed, "oltc-init"))?;
    let y = one_hot(labels, N_CLASSES)?;
    let mut opt = Sgd::new(cfg.sgd)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive_named(cfg.seed ^ cfg.sgd.seed, "oltc-shuffle"));
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        losses.push(opt.train_epoch(&mut net, x, &y, &mut rng)?);
    }
    net.clear_cache();
    Ok((net, losses))
}

/// Noisy copies of `clips` at `snr_db`, and their spectral-subtraction denoised versions.
///
/// The noise profile for each clip comes from a separate noise-only recording at the
/// same noise power, standing in for background frames captured without OLTC activity.
pub fn noisy_and_denoised(
    clips: &[LabeledClip],
    snr_db: f64,
    cfg: &OltcConfig,
) -> Result<(Vec<LabeledClip>, Vec<LabeledClip>)> {
    let mut noisy = Vec::with_capacity(clips.len());
    let mut clean = Vec::with_capacity(clips.len());
    for (i, c) in clips.iter().enumerate() {
        let s = seed::derive(seed::derive_named(cfg.seed, "oltc-noise"), snr_db.to_bits(), i as u64);
        let n = add_noise(c, snr_db, cfg.noise_color, s)?;
        let background = background_noise(c, snr_db, cfg, seed::derive(s, 1, 1))?;
        let profile = noise_profile(&background, &cfg.denoise)?;
        clean.push(spectral_denoise(&n, &profile, &cfg.denoise)?);
        noisy.push(n);
    }
    Ok((noisy, clean))
}

fn background_noise(clip: &LabeledClip, snr_db: f64, cfg: &OltcConfig, s: u64) -> Result<AudioSignal> {
    let power = clip.signal.power() / 10f64.powf(snr_db / 10.0);
    AudioSignal::new(
        colored_noise(clip.signal.len(), cfg.noise_color, power, s),
        clip.signal.sample_rate_hz,
    )
}

pub fn run(cfg: &OltcConfig) -> Result<(OltcReport, Network)> {
    cfg.validate()?;
    let mut warnings = Vec::new();
    if cfg.train_per_class < 5 || cfg.test_per_class < 5 {
        warnings.push(format!(
            "small dataset ({} train / {} test per class); accuracy figures are not meaningful",
            cfg.train_per_class, cfg.test_per_class
        ));
    }
    let data = datasets(cfg)?;
    let (xtr, ytr) = feature_batch(&data.train, cfg)?;
    let (xte, yte) = feature_batch(&data.test, cfg)?;
    let baseline = NearestMean::fit(&xtr, &ytr, N_CLASSES);
    let baseline_accuracy = accuracy(&baseline.predict(&xte), &yte);
    let (net, epoch_loss) = train_cnn(cfg, &xtr, &ytr)?;
    let train_accuracy = accuracy(&predict_classes(&net, &xtr)?, &ytr);
    let eval = evaluate_network(cfg, &net, &data.test)?;
    Ok((
        OltcReport {
            train_accuracy,
            test_accuracy: eval.accuracy,
            baseline_accuracy,
            epoch_loss,
            confusion: eval.confusion,
            robustness: eval.robustness,
            warnings,
        },
        net,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkEval {
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
    pub robustness: Vec<RobustnessPoint>,
}

/// Clean accuracy, confusion matrix and the noise-robustness curve of `net` on `clips`.
pub fn evaluate_network(cfg: &OltcConfig, net: &Network, clips: &[LabeledClip]) -> Result<NetworkEval> {
    let (x, y) = feature_batch(clips, cfg)?;
    let pred = predict_classes(net, &x)?;
    let mut robustness = Vec::with_capacity(cfg.snr_levels_db.len());
    for &snr in &cfg.snr_levels_db {
        let (noisy, denoised) = noisy_and_denoised(clips, snr, cfg)?;
        let (xn, _) = feature_batch(&noisy, cfg)?;
        let (xd, _) = feature_batch(&denoised, cfg)?;
        robustness.push(RobustnessPoint {
            snr_db: snr,
            accuracy_noisy: accuracy(&predict_classes(net, &xn)?, &y),
            accuracy_denoised: accuracy(&predict_classes(net, &xd)?, &y),
        });
    }
    Ok(NetworkEval {
        accuracy: accuracy(&pred, &y),
        confusion: confusion(&pred, &y, N_CLASSES),
        robustness,
    })
}

/// Class names in index order, for report headers.
pub fn class_names() -> Vec<&'static str> {
    OltcState::ALL.iter().map(|s| s.name()).collect()
}
