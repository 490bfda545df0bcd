//! Audio and spectrogram file formats.
//!
//! Audio input is either a mono WAV file (16-bit PCM or 32-bit float) or a plain
//! text file with one sample per line (`#` starts a comment). Text files carry no
//! sample rate, so one must be supplied.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{AudioSignal, Scale, Spectrogram};
use crate::error::{Error, Result};

fn wav_err(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(e) => Error::Io(e),
        other => Error::Validation(format!("wav: {other}")),
    }
}

/// Reads a WAV or text signal. `rate_override` replaces the header rate for WAV
/// files and is required for text files.
pub fn read_audio(path: &Path, rate_override: Option<f64>) -> Result<AudioSignal> {
    let is_wav = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
    if is_wav {
        let reader = hound::WavReader::open(path).map_err(wav_err)?;
        let spec = reader.spec();
        if spec.channels != 1 {
            return Err(Error::Validation(format!(
                "only mono audio is supported, file has {} channels",
                spec.channels
            )));
        }
        let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
            (hound::SampleFormat::Float, 32) => reader
                .into_samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<std::result::Result<_, _>>()
                .map_err(wav_err)?,
            (hound::SampleFormat::Int, 16) => reader
                .into_samples::<i16>()
                .map(|s| s.map(|v| f64::from(v) / 32768.0))
                .collect::<std::result::Result<_, _>>()
                .map_err(wav_err)?,
            (fmt, bits) => {
                return Err(Error::Validation(format!(
                    "unsupported wav sample format {fmt:?} with {bits} bits"
                )))
            }
        };
        AudioSignal::new(samples, rate_override.unwrap_or(f64::from(spec.sample_rate)))
    } else {
        let rate = rate_override.ok_or_else(|| {
            Error::Validation("text audio files need an explicit sample rate".into())
        })?;
        let text = fs::read_to_string(path)?;
        let mut samples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let v: f64 = line
                .parse()
                .map_err(|_| Error::Validation(format!("line {}: not a number: {line:?}", i + 1)))?;
            samples.push(v);
        }
        AudioSignal::new(samples, rate)
    }
}

/// Writes a mono 32-bit float WAV file.
pub fn write_wav(path: &Path, sig: &AudioSignal) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: sig.sample_rate_hz.round() as u32,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in &sig.samples {
        w.write_sample(s as f32).map_err(wav_err)?;
    }
    w.finalize().map_err(wav_err)
}

/// Writes one sample per line at full `f64` precision.
pub fn write_text(path: &Path, sig: &AudioSignal) -> Result<()> {
    let mut out = String::with_capacity(sig.len() * 24);
    out.push_str(&format!("# sample_rate_hz={}\n", sig.sample_rate_hz));
    for s in &sig.samples {
        out.push_str(&format!("{s:e}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// CSV matrix (rows = frequency bins, columns = frames) preceded by `#` header lines
/// carrying the scale and both axes.
pub fn write_spectrogram_csv<W: Write>(mut w: W, spec: &Spectrogram) -> Result<()> {
    let join = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",");
    let scale = match spec.scale {
        Scale::Linear => "linear",
        Scale::Db => "db",
    };
    writeln!(w, "# scale={scale}")?;
    writeln!(w, "# n_bins={} n_frames={}", spec.n_bins, spec.n_frames)?;
    writeln!(w, "# freq_axis_hz={}", join(&spec.freq_axis_hz))?;
    writeln!(w, "# time_axis_s={}", join(&spec.time_axis_s))?;
    for b in 0..spec.n_bins {
        writeln!(w, "{}", join(spec.bin_row(b)))?;
    }
    Ok(())
}
