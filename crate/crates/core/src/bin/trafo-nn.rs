use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use trafo_nn::dsp::io::{read_audio, write_spectrogram_csv, write_text, write_wav};
use trafo_nn::dsp::{mel_spectrogram_with, stft, to_db};
use trafo_nn::env::{oracle_best_angle, sample_remanence_with};
use trafo_nn::harness::{
    gradcheck_suite, oltc, run_oltc_experiment, run_rl_benchmark, summarize, write_confusion_csv, write_eval_csv,
    write_record, write_robustness_csv, write_summary_csv, ExperimentRecord, RunConfig, CONFIG_ENV,
};
use trafo_nn::nn::checkpoint::{load_checkpoint, save_checkpoint};
use trafo_nn::rl::{evaluate, train, Algo, ActionGrid, Policy};
use trafo_nn::seed;
use trafo_nn::synth::{add_noise, generate_dataset, NoiseColor, SynthConfig};
use trafo_nn::{Error, ErrorKind, Result};

/// Transformer condition-monitoring toolkit: OLTC acoustic classifier and
/// inrush-minimizing energization agents.
#[derive(Parser)]
#[command(name = "trafo-nn", version)]
struct Cli {
    /// TOML run configuration; unknown keys are rejected.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Overrides the global seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Color {
    White,
    Pink,
}

impl From<Color> for NoiseColor {
    fn from(c: Color) -> Self {
        match c {
            Color::White => NoiseColor::White,
            Color::Pink => NoiseColor::Pink,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AudioFormat {
    Wav,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    DqnLinear,
    DqnExp,
    Ppo,
}

impl From<AlgoArg> for Algo {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::DqnLinear => Algo::DqnLinear,
            AlgoArg::DqnExp => Algo::DqnExp,
            AlgoArg::Ppo => Algo::Ppo,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Finite-difference gradient check of the MLP and OLTC CNN layers.
    Gradcheck {
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
        /// Maximum accepted relative error.
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes a synthetic OLTC clip corpus plus `manifest.csv`.
    GenData {
        #[arg(long, default_value_t = 10)]
        n_per_class: usize,
        #[arg(long)]
        jitter: Option<f64>,
        /// Adds noise at this SNR (dB).
        #[arg(long)]
        snr: Option<f64>,
        #[arg(long, value_enum, default_value = "white")]
        color: Color,
        #[arg(long, value_enum, default_value = "wav")]
        format: AudioFormat,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trains the OLTC CNN and reports accuracy, confusion and the noise-robustness curve.
    TrainOltc {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluates a saved OLTC CNN on the configured test corpus.
    EvalOltc {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spectrogram of an audio file (WAV or one sample per line) as CSV.
    Spectrogram {
        #[arg(long)]
        input: PathBuf,
        /// Sample rate for text input or to override the WAV header.
        #[arg(long)]
        rate: Option<f64>,
        /// Mel bands; omit for the linear-frequency spectrogram.
        #[arg(long)]
        mels: Option<usize>,
        /// Convert a linear spectrogram to dB.
        #[arg(long)]
        db: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Brute-force optimal closing angle for sampled remanence, one CSV row per episode.
    OracleSweep {
        #[arg(long, default_value_t = 200)]
        n_episodes: usize,
        #[arg(long, default_value_t = 0.5)]
        grid_deg: f64,
        /// CSV file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Trains one agent on the energization environment.
    TrainRl {
        #[arg(long, value_enum)]
        algo: AlgoArg,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Greedy evaluation of a saved policy network on the shared flux set.
    EvalRl {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trains all configured agents and compares them with the oracle and a random policy.
    BenchmarkRl {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distribution summary of a numeric column (CSV) or a one-value-per-line file.
    Summarize {
        #[arg(long)]
        input: PathBuf,
        /// CSV column name; omit for plain one-value-per-line input.
        #[arg(long)]
        column: Option<String>,
        /// Keep only CSV rows whose first field equals this value.
        #[arg(long)]
        filter: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e.kind() {
                ErrorKind::Invalid => ExitCode::from(1),
                ErrorKind::Runtime => ExitCode::from(2),
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::resolve(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match cli.cmd {
        Cmd::Gradcheck { step, tol, out } => gradcheck(&cfg, step, tol, out),
        Cmd::GenData {
            n_per_class,
            jitter,
            snr,
            color,
            format,
            out,
        } => gen_data(&cfg, n_per_class, jitter, snr, color.into(), format, &out),
        Cmd::TrainOltc { out } => train_oltc(&cfg, out),
        Cmd::EvalOltc { checkpoint, out } => eval_oltc(&cfg, &checkpoint, out),
        Cmd::Spectrogram {
            input,
            rate,
            mels,
            db,
            out,
        } => spectrogram(&cfg, &input, rate, mels, db, &out),
        Cmd::OracleSweep {
            n_episodes,
            grid_deg,
            out,
        } => oracle_sweep(&cfg, n_episodes, grid_deg, &out),
        Cmd::TrainRl { algo, steps, out } => train_rl(&cfg, algo.into(), steps, out),
        Cmd::EvalRl {
            checkpoint,
            episodes,
            out,
        } => eval_rl(&cfg, &checkpoint, episodes, cli.seed, out),
        Cmd::BenchmarkRl { out } => benchmark_rl(&cfg, out),
        Cmd::Summarize { input, column, filter } => summarize_file(&input, column.as_deref(), filter.as_deref()),
    }
}

fn out_dir(cfg: &RunConfig, out: Option<PathBuf>, command: &str) -> PathBuf {
    out.unwrap_or_else(|| cfg.output_dir.join(command))
}

fn finish(dir: &Path, mut rec: ExperimentRecord, start: Instant) -> Result<()> {
    rec.wall_clock_s = start.elapsed().as_secs_f64();
    let p = write_record(dir, &rec)?;
    println!("record: {}", p.display());
    Ok(())
}

fn gradcheck(cfg: &RunConfig, step: f64, tol: f64, out: Option<PathBuf>) -> Result<()> {
    let start = Instant::now();
    let dir = out_dir(cfg, out, "gradcheck");
    let reports = gradcheck_suite(cfg.seed, step)?;
    let mut rec = ExperimentRecord::new("gradcheck", cfg);
    let mut worst: f64 = 0.0;
    for (name, r) in &reports {
        println!("{name:<18} max relative error {:.3e}", r.max_rel_error());
        rec.metrics.insert(
            format!("{name}.block_max_rel_error"),
            r.blocks.iter().map(|b| b.max_rel_error).collect(),
        );
        worst = worst.max(r.max_rel_error());
    }
    rec.summary = serde_json::json!({ "step": step, "tolerance": tol, "max_rel_error": worst, "reports": reports.iter().map(|(n, r)| serde_json::json!({"network": n, "report": r})).collect::<Vec<_>>() });
    finish(&dir, rec, start)?;
    if worst >= tol {
        return Err(Error::Divergence(format!(
            "gradient check failed: max relative error {worst:e} >= {tol:e}"
        )));
    }
    Ok(())
}

fn gen_data(
    cfg: &RunConfig,
    n_per_class: usize,
    jitter: Option<f64>,
    snr: Option<f64>,
    color: NoiseColor,
    format: AudioFormat,
    out: &Path,
) -> Result<()> {
    let synth = SynthConfig {
        sample_rate_hz: cfg.synth.sample_rate_hz,
        segment_samples: cfg.synth.segment_samples,
        seed: cfg.seed,
        jitter: jitter.unwrap_or(cfg.synth.jitter),
    };
    let clips = generate_dataset(n_per_class, &synth)?;
    fs::create_dir_all(out)?;
    let mut rows = Vec::with_capacity(clips.len());
    for (i, clip) in clips.iter().enumerate() {
        let clip = match snr {
            Some(db) => add_noise(clip, db, color, seed::derive(clip.seed, i as u64, 1))?,
            None => clip.clone(),
        };
        let stem = format!("{:04}_{}", i, clip.label.name().replace('/', "-"));
        let file = match format {
            AudioFormat::Wav => {
                let f = format!("{stem}.wav");
                write_wav(&out.join(&f), &clip.signal)?;
                f
            }
            AudioFormat::Text => {
                let f = format!("{stem}.txt");
                write_text(&out.join(&f), &clip.signal)?;
                f
            }
        };
        rows.push(format!(
            "{file},{},{},{},{}",
            clip.label.id(),
            clip.label.name(),
            clip.seed,
            clip.snr_db.map(|v| v.to_string()).unwrap_or_default()
        ));
    }
    let manifest = out.join("manifest.csv");
    let mut text = String::from("filename,label_id,label_name,seed,snr_db\n");
    for r in rows {
        text.push_str(&r);
        text.push('\n');
    }
    fs::write(&manifest, text)?;
    println!("{} clips written to {}", clips.len(), out.display());
    Ok(())
}

fn train_oltc(cfg: &RunConfig, out: Option<PathBuf>) -> Result<()> {
    let dir = out_dir(cfg, out, "train-oltc");
    let (rec, report, net) = run_oltc_experiment(cfg)?;
    fs::create_dir_all(&dir)?;
    save_checkpoint(&dir.join("model.ckpt"), &net)?;
    write_confusion_csv(&dir.join("confusion.csv"), &report.confusion)?;
    write_robustness_csv(&dir.join("robustness.csv"), report.test_accuracy, &report.robustness)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "train accuracy {:.4}  test accuracy {:.4}  nearest-mean baseline {:.4}",
        report.train_accuracy, report.test_accuracy, report.baseline_accuracy
    );
    println!("snr_db  noisy   denoised");
    for p in &report.robustness {
        println!("{:>6}  {:.4}  {:.4}", p.snr_db, p.accuracy_noisy, p.accuracy_denoised);
    }
    let p = write_record(&dir, &rec)?;
    println!("record: {}", p.display());
    Ok(())
}

fn eval_oltc(cfg: &RunConfig, checkpoint: &Path, out: Option<PathBuf>) -> Result<()> {
    let start = Instant::now();
    let dir = out_dir(cfg, out, "eval-oltc");
    let ocfg = cfg.oltc();
    ocfg.validate()?;
    let net = load_checkpoint(checkpoint)?;
    let data = oltc::datasets(&ocfg)?;
    let eval = oltc::evaluate_network(&ocfg, &net, &data.test)?;
    fs::create_dir_all(&dir)?;
    write_confusion_csv(&dir.join("confusion.csv"), &eval.confusion)?;
    write_robustness_csv(&dir.join("robustness.csv"), eval.accuracy, &eval.robustness)?;
    println!("test accuracy {:.4}", eval.accuracy);
    let mut rec = ExperimentRecord::new("eval-oltc", cfg);
    rec.metrics.insert(
        "accuracy_noisy".into(),
        eval.robustness.iter().map(|p| p.accuracy_noisy).collect(),
    );
    rec.metrics.insert(
        "accuracy_denoised".into(),
        eval.robustness.iter().map(|p| p.accuracy_denoised).collect(),
    );
    rec.summary = serde_json::json!({ "checkpoint": checkpoint, "test_accuracy": eval.accuracy, "confusion": eval.confusion });
    finish(&dir, rec, start)
}

fn spectrogram(cfg: &RunConfig, input: &Path, rate: Option<f64>, mels: Option<usize>, db: bool, out: &Path) -> Result<()> {
    let sig = read_audio(input, rate)?;
    let spec = match mels {
        Some(n) => {
            let mut mel = cfg.dsp.mel;
            mel.n_mels = n;
            mel.f_max_hz = mel.f_max_hz.min(sig.sample_rate_hz / 2.0);
            mel_spectrogram_with(&sig, &cfg.dsp.stft, &mel)?
        }
        None if db => to_db(&stft(&sig, &cfg.dsp.stft)?)?,
        None => stft(&sig, &cfg.dsp.stft)?,
    };
    if let Some(parent) = out.parent() {
        fs::create_dir_all(parent)?;
    }
    write_spectrogram_csv(std::io::BufWriter::new(fs::File::create(out)?), &spec)?;
    println!("{} bins x {} frames -> {}", spec.n_bins, spec.n_frames, out.display());
    Ok(())
}

fn oracle_sweep(cfg: &RunConfig, n: usize, grid_deg: f64, out: &Path) -> Result<()> {
    cfg.core.validate()?;
    cfg.env.validate()?;
    let root = seed::derive_named(cfg.seed, "oracle-sweep");
    let mut text = String::from("episode,phi1,phi2,phi3,theta_deg,i_max\n");
    for i in 0..n {
        let f = sample_remanence_with(seed::derive(root, i as u64, 0), cfg.env.flux_max);
        let (theta, i_max) = oracle_best_angle(&f, &cfg.core, grid_deg)?;
        let [a, b, c] = f.phi();
        text.push_str(&format!("{i},{a},{b},{c},{theta},{i_max}\n"));
    }
    if let Some(parent) = out.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(out, text)?;
    println!("{n} episodes -> {}", out.display());
    Ok(())
}

fn train_rl(cfg: &RunConfig, algo: Algo, steps: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let start = Instant::now();
    let dir = out_dir(cfg, out, &format!("train-rl-{}", algo.name()));
    let rl = cfg.rl();
    let steps = steps.unwrap_or(rl.steps);
    let mut rec = ExperimentRecord::new("train-rl", cfg);
    fs::create_dir_all(&dir)?;
    let (policy, trace, failure) = match train(algo, &rl, steps, cfg.seed) {
        Ok((p, t)) => (Some(p), t, None),
        Err(a) => (None, a.record, Some(a.error)),
    };
    let rows = trace
        .i_max
        .iter()
        .zip(&trace.reward)
        .enumerate()
        .map(|(i, (im, r))| {
            let eps = trace.epsilon.get(i).map(|e| e.to_string()).unwrap_or_default();
            format!("{i},{r},{im},{eps}")
        })
        .collect::<Vec<_>>();
    let mut text = String::from("episode,reward,i_max,epsilon\n");
    for r in rows {
        text.push_str(&r);
        text.push('\n');
    }
    fs::write(dir.join("episodes.csv"), text)?;
    rec.metrics.insert("reward".into(), trace.reward.clone());
    rec.metrics.insert("i_max".into(), trace.i_max.clone());
    if !trace.epsilon.is_empty() {
        rec.metrics.insert("epsilon".into(), trace.epsilon.clone());
    }
    if !trace.loss.is_empty() {
        rec.metrics.insert("loss".into(), trace.loss.clone());
    }
    if !trace.ppo.is_empty() {
        rec.metrics
            .insert("ppo.mean_ratio".into(), trace.ppo.iter().map(|s| s.mean_ratio).collect());
        rec.metrics
            .insert("ppo.clip_fraction".into(), trace.ppo.iter().map(|s| s.clip_fraction).collect());
        rec.metrics
            .insert("ppo.policy_loss".into(), trace.ppo.iter().map(|s| s.policy_loss).collect());
        rec.metrics
            .insert("ppo.value_loss".into(), trace.ppo.iter().map(|s| s.value_loss).collect());
    }
    let mut summary = serde_json::json!({ "algo": algo.name(), "steps": steps });
    if let Some(Policy::Greedy { net, .. }) = &policy {
        save_checkpoint(&dir.join("policy.ckpt"), net)?;
        let e = evaluate(policy.as_ref().unwrap(), &rl.core, &rl.env, rl.eval_episodes, rl.env.seed)?;
        println!(
            "{}: eval mean i_max {:.4} pu (std {:.4}, {:.1}% above rated)",
            algo.name(),
            e.summary.mean,
            e.summary.std,
            100.0 * e.frac_over_rated
        );
        summary["eval"] = serde_json::json!({ "summary": e.summary, "frac_over_rated": e.frac_over_rated });
    }
    if let Some(err) = &failure {
        summary["error"] = serde_json::json!(err.to_string());
    }
    rec.summary = summary;
    finish(&dir, rec, start)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn eval_rl(
    cfg: &RunConfig,
    checkpoint: &Path,
    episodes: Option<usize>,
    seed_flag: Option<u64>,
    out: Option<PathBuf>,
) -> Result<()> {
    let start = Instant::now();
    let dir = out_dir(cfg, out, "eval-rl");
    let net = load_checkpoint(checkpoint)?;
    let width = match net.spec().layers.last() {
        Some(trafo_nn::nn::LayerSpec::Dense { outputs, .. }) => *outputs,
        _ => return Err(Error::Validation("policy checkpoint must end in a dense layer".into())),
    };
    let grid = ActionGrid::new(width)?;
    let n = episodes.unwrap_or(cfg.agent.eval_episodes);
    let policy = Policy::Greedy { net, grid };
    let eval_seed = seed_flag.unwrap_or(cfg.env.seed);
    let e = evaluate(&policy, &cfg.core, &cfg.env, n, eval_seed)?;
    fs::create_dir_all(&dir)?;
    write_eval_csv(&dir.join("eval.csv"), &[("policy", &e)])?;
    println!(
        "mean i_max {:.4} pu, std {:.4}, median {:.4}, {:.1}% above rated",
        e.summary.mean,
        e.summary.std,
        e.summary.median,
        100.0 * e.frac_over_rated
    );
    let mut rec = ExperimentRecord::new("eval-rl", cfg);
    rec.metrics.insert("i_max".into(), e.i_max.clone());
    rec.metrics.insert("theta_deg".into(), e.theta_deg.clone());
    rec.summary = serde_json::json!({ "checkpoint": checkpoint, "eval_seed": eval_seed, "summary": e.summary, "frac_over_rated": e.frac_over_rated });
    finish(&dir, rec, start)
}

fn benchmark_rl(cfg: &RunConfig, out: Option<PathBuf>) -> Result<()> {
    let dir = out_dir(cfg, out, "benchmark-rl");
    let bench = run_rl_benchmark(cfg)?;
    fs::create_dir_all(&dir)?;
    let evals: Vec<(&str, &trafo_nn::rl::EvalReport)> = bench
        .rows
        .iter()
        .filter_map(|r| r.eval.as_ref().map(|e| (r.name.as_str(), e)))
        .collect();
    write_eval_csv(&dir.join("boxplot.csv"), &evals)?;
    write_summary_csv(&dir.join("summary.csv"), &bench.rows)?;
    println!("{:<11} {:>8} {:>8} {:>8} {:>8} {:>8}", "policy", "mean", "std", "median", "max", ">rated");
    for r in &bench.rows {
        match &r.eval {
            Some(e) => println!(
                "{:<11} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.3}",
                r.name, e.summary.mean, e.summary.std, e.summary.median, e.summary.max, e.frac_over_rated
            ),
            None => println!("{:<11} failed: {}", r.name, r.error.as_deref().unwrap_or("")),
        }
    }
    let p = write_record(&dir, &bench.record)?;
    println!("record: {}", p.display());
    Ok(())
}

fn summarize_file(input: &Path, column: Option<&str>, filter: Option<&str>) -> Result<()> {
    let text = fs::read_to_string(input)?;
    let values = parse_values(&text, column, filter)?;
    let s = summarize(&values)?;
    println!("{}", serde_json::to_string_pretty(&s).expect("summary serializes"));
    Ok(())
}

fn parse_values(text: &str, column: Option<&str>, filter: Option<&str>) -> Result<Vec<f64>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let parse = |s: &str, line: usize| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Validation(format!("line {line}: {s:?} is not a number")))
    };
    match column {
        None => lines.enumerate().map(|(i, l)| parse(l, i + 1)).collect(),
        Some(col) => {
            let header = lines.next().ok_or_else(|| Error::Validation("empty CSV input".into()))?;
            let idx = header
                .split(',')
                .position(|h| h.trim() == col)
                .ok_or_else(|| Error::Validation(format!("column {col:?} not found in header {header:?}")))?;
            lines
                .enumerate()
                .filter(|(_, l)| filter.is_none_or(|f| l.split(',').next() == Some(f)))
                .map(|(i, l)| {
                    let cell = l
                        .split(',')
                        .nth(idx)
                        .ok_or_else(|| Error::Validation(format!("row {} has no column {col:?}", i + 2)))?;
                    parse(cell, i + 2)
                })
                .collect()
        }
    }
}
