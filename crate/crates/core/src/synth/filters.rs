//! Windowed-sinc FIR filters used to shape synthetic noise.

use std::f64::consts::PI;

/// Hamming-windowed sinc low-pass with cutoff `fc` (normalized to the sample rate), odd length.
pub fn lowpass_taps(fc: f64, taps: usize) -> Vec<f64> {
    let m = (taps - 1) as f64;
    let h: Vec<f64> = (0..taps)
        .map(|i| {
            let x = i as f64 - m / 2.0;
            let sinc = if x == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * x).sin() / (PI * x)
            };
            sinc * (0.54 - 0.46 * (2.0 * PI * i as f64 / m).cos())
        })
        .collect();
    let dc: f64 = h.iter().sum();
    h.into_iter().map(|v| v / dc).collect()
}

/// Band-pass as the difference of two low-passes.
pub fn bandpass_taps(lo: f64, hi: f64, taps: usize) -> Vec<f64> {
    lowpass_taps(hi, taps)
        .into_iter()
        .zip(lowpass_taps(lo, taps))
        .map(|(a, b)| a - b)
        .collect()
}

/// "Same"-length causal-centered convolution.
pub fn filter(x: &[f64], h: &[f64]) -> Vec<f64> {
    let half = h.len() / 2;
    (0..x.len())
        .map(|n| {
            h.iter()
                .enumerate()
                .filter_map(|(k, &hk)| (n + half).checked_sub(k).and_then(|i| x.get(i)).map(|&xi| hk * xi))
                .sum()
        })
        .collect()
}
