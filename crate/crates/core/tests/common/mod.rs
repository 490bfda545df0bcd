#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trafo_nn::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Pre-activation of a convolution on one `h x w x c` map, zero padding `(pt, pl)`.
pub fn naive_conv(
    x: &[f64],
    (h, w, c): (usize, usize, usize),
    k: &[f64],
    (kh, kw, nf): (usize, usize, usize),
    bias: &[f64],
    stride: usize,
    (ho, wo): (usize, usize),
    (pt, pl): (usize, usize),
) -> Vec<f64> {
    let mut y = vec![0.0; ho * wo * nf];
    for i in 0..ho {
        for j in 0..wo {
            for f in 0..nf {
                let mut s = bias[f];
                for u in 0..kh {
                    for v in 0..kw {
                        for ch in 0..c {
                            let r = (i * stride + u) as isize - pt as isize;
                            let q = (j * stride + v) as isize - pl as isize;
                            if r < 0 || q < 0 || r >= h as isize || q >= w as isize {
                                continue;
                            }
                            let xv = x[((r as usize) * w + q as usize) * c + ch];
                            s += k[((u * kw + v) * c + ch) * nf + f] * xv;
                        }
                    }
                }
                y[(i * wo + j) * nf + f] = s;
            }
        }
    }
    y
}

/// Max over each window, scanning the full input for every output cell.
pub fn window_scan_pool(x: &[f64], (h, w, c): (usize, usize, usize), win: usize, stride: usize) -> Vec<f64> {
    let (ho, wo) = ((h - win) / stride + 1, (w - win) / stride + 1);
    let mut y = vec![f64::NEG_INFINITY; ho * wo * c];
    for r in 0..h {
        for q in 0..w {
            for ch in 0..c {
                for i in 0..ho {
                    for j in 0..wo {
                        let inside = r >= i * stride && r < i * stride + win && q >= j * stride && q < j * stride + win;
                        if inside {
                            let o = &mut y[(i * wo + j) * c + ch];
                            *o = o.max(x[(r * w + q) * c + ch]);
                        }
                    }
                }
            }
        }
    }
    y
}

/// Direct DFT magnitudes of one windowed frame, bins `0..=n/2`.
pub fn naive_dft_mag(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &x) in frame.iter().enumerate() {
                let a = -2.0 * std::f64::consts::PI * (k * t % n) as f64 / n as f64;
                re += x * a.cos();
                im += x * a.sin();
            }
            re.hypot(im)
        })
        .collect()
}

pub const SMALL_CONFIG: &str = r#"
seed = 5

[nn]
epochs = 2

[synth]
train_per_class = 4
test_per_class = 3
snr_levels_db = [10.0]

[agent]
steps = 600
eval_episodes = 30
"#;

pub struct CliRun {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn cli(args: &[&str], config: Option<&std::path::Path>) -> CliRun {
    let mut cmd = std::process::Command::new(env!("CARGO_BIN_EXE_trafo-nn"));
    cmd.args(args).env_remove("TRAFO_NN_CONFIG");
    if let Some(c) = config {
        cmd.env("TRAFO_NN_CONFIG", c);
    }
    let out = cmd.output().expect("spawn trafo-nn");
    CliRun {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// Stored record with the wall-clock field zeroed.
pub fn record_without_timing(path: &std::path::Path) -> trafo_nn::harness::ExperimentRecord {
    trafo_nn::harness::ExperimentRecord::load(path).unwrap().without_timing()
}
