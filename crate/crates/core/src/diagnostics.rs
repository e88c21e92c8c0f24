//! Observables extracted from trajectories: the dominant oscillation
//! frequency of a probe, its amplitude envelope (whose minimum marks the
//! return of reflected radiation) and the scattering outcome.

use std::fmt;

use rustfft::{num_complex::Complex, FftPlanner};
use thiserror::Error;

use crate::dynamics::Trajectory;
use crate::model::Impurity;

/// Minimum sample count for spectral estimates.
pub const MIN_SPECTRAL_SAMPLES: usize = 64;
/// A later envelope peak must exceed the minimum by this factor for the
/// minimum to count as a turning point.
pub const REVIVAL_FACTOR: f64 = 2.0;

/// Extremum pairs swinging less than this fraction of the signal range are
/// treated as ripple.
pub const RIPPLE_FRACTION: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("series needs at least {need} samples, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("samples are not uniformly spaced (step {index})")]
    NonUniform { index: usize },
    #[error("series variance {0:e} is too small to carry a frequency")]
    DegenerateSeries(f64),
    #[error("found {0} extrema, need at least 3")]
    TooFewExtrema(usize),
    #[error("empty time window [{0}, {1}]")]
    EmptyWindow(f64, f64),
}

impl DiagnosticsError {
    pub fn kind(&self) -> &'static str {
        match self {
            DiagnosticsError::TooShort { .. } => "TooShort",
            DiagnosticsError::NonUniform { .. } => "NonUniform",
            DiagnosticsError::DegenerateSeries(_) => "DegenerateSeries",
            DiagnosticsError::TooFewExtrema(_) => "TooFewExtrema",
            DiagnosticsError::EmptyWindow(..) => "EmptyWindow",
        }
    }
}

/// Uniformly sampled probe signal.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSeries {
    pub t: Vec<f64>,
    pub values: Vec<f64>,
}

impl ProbeSeries {
    pub fn new(t: Vec<f64>, values: Vec<f64>) -> Result<Self, DiagnosticsError> {
        if t.len() != values.len() || t.len() < 2 {
            return Err(DiagnosticsError::TooShort {
                need: 2,
                got: t.len().min(values.len()),
            });
        }
        let step = t[1] - t[0];
        if let Some(index) = t
            .windows(2)
            .position(|w| ((w[1] - w[0]) - step).abs() > 1e-6 * step.abs().max(1e-300))
        {
            return Err(DiagnosticsError::NonUniform { index });
        }
        Ok(Self { t, values })
    }

    /// Sample `f` at `t = k dt`, `k = 0..n`.
    pub fn sample(dt: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        let t: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
        let values = t.iter().map(|&s| f(s)).collect();
        Self { t, values }
    }

    pub fn from_trajectory(traj: &Trajectory, probe: usize) -> Result<Self, DiagnosticsError> {
        Self::new(traj.times.clone(), traj.probe(probe).to_vec())
    }

    pub fn dt(&self) -> f64 {
        self.t[1] - self.t[0]
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Samples with `t0 <= t <= t1`.
    pub fn window(&self, t0: f64, t1: f64) -> Result<Self, DiagnosticsError> {
        let (t, values): (Vec<f64>, Vec<f64>) = self
            .t
            .iter()
            .zip(&self.values)
            .filter(|(&t, _)| t >= t0 && t <= t1)
            .map(|(&t, &v)| (t, v))
            .unzip();
        if t.len() < 2 {
            return Err(DiagnosticsError::EmptyWindow(t0, t1));
        }
        Ok(Self { t, values })
    }
}

/// One-sided magnitude spectrum of the mean-removed, Hann-windowed series.
/// Returns `(angular frequency, magnitude)` pairs for bins `0..=n/2`.
pub fn spectrum(series: &ProbeSeries) -> Vec<(f64, f64)> {
    let n = series.len();
    let mean = series.values.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = series
        .values
        .iter()
        .enumerate()
        .map(|(k, &v)| Complex::new((v - mean) * hann(k, n), 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let bin = 2.0 * std::f64::consts::PI / (n as f64 * series.dt());
    buf.iter()
        .take(n / 2 + 1)
        .enumerate()
        .map(|(k, c)| (k as f64 * bin, c.norm()))
        .collect()
}

fn hann(k: usize, n: usize) -> f64 {
    0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / (n - 1) as f64).cos()
}

/// Dominant angular frequency: the largest spectral peak above zero, refined
/// by a parabola through the logarithms of the three bins around it.
pub fn leading_frequency(series: &ProbeSeries) -> Result<f64, DiagnosticsError> {
    let n = series.len();
    if n < MIN_SPECTRAL_SAMPLES {
        return Err(DiagnosticsError::TooShort {
            need: MIN_SPECTRAL_SAMPLES,
            got: n,
        });
    }
    let mean = series.values.iter().sum::<f64>() / n as f64;
    let variance = series.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if variance < 1e-20 {
        return Err(DiagnosticsError::DegenerateSeries(variance));
    }
    let spec = spectrum(series);
    let bin = spec[1].0;
    let peak = (1..spec.len())
        .max_by(|&i, &j| spec[i].1.total_cmp(&spec[j].1))
        .expect("spectrum has at least two bins");
    if peak + 1 >= spec.len() {
        return Ok(spec[peak].0);
    }
    let ln = |i: usize| spec[i].1.max(f64::MIN_POSITIVE).ln();
    let (a, b, c) = (ln(peak - 1), ln(peak), ln(peak + 1));
    let denom = a - 2.0 * b + c;
    let shift = if denom.abs() > 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
    Ok((peak as f64 + shift.clamp(-0.5, 0.5)) * bin)
}

/// Local extrema of a sampled signal and their upper envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    pub extrema_times: Vec<f64>,
    /// Signed extremal values after parabolic refinement.
    pub extrema_values: Vec<f64>,
    pub extrema_magnitudes: Vec<f64>,
    /// Magnitudes that are not strict local minima of the magnitude sequence
    /// (the envelope proper; beat troughs are dropped).
    pub envelope_times: Vec<f64>,
    pub envelope_magnitudes: Vec<f64>,
    /// Time of the envelope minimum, when the envelope recovers afterwards.
    pub turning_time: Option<f64>,
}

impl EnvelopeReport {
    /// Whether the envelope never grows by more than `rel_tol` of the
    /// preceding running minimum.
    pub fn is_non_increasing(&self, rel_tol: f64) -> bool {
        let mut floor = f64::INFINITY;
        for &m in &self.envelope_magnitudes {
            if m > floor * (1.0 + rel_tol) {
                return false;
            }
            floor = floor.min(m);
        }
        true
    }

    /// [`Self::is_non_increasing`] restricted to the envelope from its
    /// largest value onwards, skipping the rise while the kink arrives.
    pub fn decays_after_peak(&self, rel_tol: f64) -> bool {
        let m = &self.envelope_magnitudes;
        let Some(peak) = m.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(k, _)| k) else {
            return true;
        };
        let mut floor = f64::INFINITY;
        for &x in &m[peak..] {
            if x > floor * (1.0 + rel_tol) {
                return false;
            }
            floor = floor.min(x);
        }
        true
    }

    /// Largest envelope value with `t0 <= t <= t1`.
    pub fn max_in(&self, t0: f64, t1: f64) -> Option<f64> {
        self.envelope_times
            .iter()
            .zip(&self.envelope_magnitudes)
            .filter(|(&t, _)| t >= t0 && t <= t1)
            .map(|(_, &m)| m)
            .reduce(f64::max)
    }
}

/// Vertex of the parabola through three equally spaced samples, as
/// (offset in steps from the middle sample, value).
fn parabola_vertex(a: f64, b: f64, c: f64) -> (f64, f64) {
    let denom = a - 2.0 * b + c;
    if denom == 0.0 {
        return (0.0, b);
    }
    let p = (0.5 * (a - c) / denom).clamp(-1.0, 1.0);
    (p, b - 0.25 * (a - c) * p)
}

/// Removes adjacent max/min pairs whose swing is below [`RIPPLE_FRACTION`]
/// of the total signal range. Such pairs are flat wiggles, not oscillations.
fn drop_ripple(times: Vec<f64>, values: Vec<f64>, signal: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (lo, hi) = signal
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let tol = RIPPLE_FRACTION * (hi - lo);
    let mut kept_t: Vec<f64> = Vec::with_capacity(times.len());
    let mut kept_v: Vec<f64> = Vec::with_capacity(values.len());
    for (t, value) in times.into_iter().zip(values) {
        kept_t.push(t);
        kept_v.push(value);
        let n = kept_v.len();
        if n >= 2 && (kept_v[n - 1] - kept_v[n - 2]).abs() < tol {
            kept_t.truncate(n - 2);
            kept_v.truncate(n - 2);
        }
    }
    (kept_t, kept_v)
}

pub fn envelope(series: &ProbeSeries) -> Result<EnvelopeReport, DiagnosticsError> {
    let v = &series.values;
    let dt = series.dt();
    let mut times = Vec::new();
    let mut values = Vec::new();
    for i in 1..v.len().saturating_sub(1) {
        let left = v[i] - v[i - 1];
        let right = v[i + 1] - v[i];
        // strict sign change on one side avoids counting plateaus twice
        if (left > 0.0 && right <= 0.0) || (left < 0.0 && right >= 0.0) {
            let (p, value) = parabola_vertex(v[i - 1], v[i], v[i + 1]);
            times.push(series.t[i] + p * dt);
            values.push(value);
        }
    }
    let (times, values) = drop_ripple(times, values, v);
    if times.len() < 3 {
        return Err(DiagnosticsError::TooFewExtrema(times.len()));
    }
    let magnitudes: Vec<f64> = values.iter().map(|x: &f64| x.abs()).collect();

    let m = &magnitudes;
    let mut env_t = Vec::new();
    let mut env_m = Vec::new();
    for k in 0..m.len() {
        let trough = k > 0 && k + 1 < m.len() && m[k] < m[k - 1] && m[k] < m[k + 1];
        if !trough {
            env_t.push(times[k]);
            env_m.push(m[k]);
        }
    }

    let turning_time = env_m
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .and_then(|(k, &min)| {
            let later = env_m[k + 1..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (later > REVIVAL_FACTOR * min).then_some(env_t[k])
        });

    Ok(EnvelopeReport {
        extrema_times: times,
        extrema_values: values,
        extrema_magnitudes: magnitudes,
        envelope_times: env_t,
        envelope_magnitudes: env_m,
        turning_time,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Trapped,
    Reflected,
    Transmitted,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Trapped => "trapped",
            Outcome::Reflected => "reflected",
            Outcome::Transmitted => "transmitted",
        })
    }
}

/// Default escape radius, w + 2.
pub fn default_escape_radius(imp: &Impurity) -> f64 {
    imp.width() + 2.0
}

/// Final kink velocity from a least-squares line through the last tenth of
/// the run (at least two samples).
fn final_velocity(times: &[f64], xs: &[f64]) -> f64 {
    let n = times.len();
    let t_end = times[n - 1];
    let span = 0.1 * (t_end - times[0]);
    let start = times.iter().position(|&t| t >= t_end - span).unwrap_or(0).min(n - 2);
    let (t, x) = (&times[start..], &xs[start..]);
    let k = t.len() as f64;
    let mt = t.iter().sum::<f64>() / k;
    let mx = x.iter().sum::<f64>() / k;
    let (mut num, mut den) = (0.0, 0.0);
    for (ti, xi) in t.iter().zip(x) {
        num += (ti - mt) * (xi - mx);
        den += (ti - mt) * (ti - mt);
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Transmitted if the kink ends beyond `x_c + R` moving right, reflected if it
/// ends before `x_c − R` moving left, trapped otherwise.
pub fn classify_outcome(traj: &Trajectory, imp: &Impurity, escape_radius: Option<f64>) -> Outcome {
    let r = escape_radius.unwrap_or_else(|| default_escape_radius(imp));
    let pairs: (Vec<f64>, Vec<f64>) = traj
        .times
        .iter()
        .zip(&traj.position_series)
        .filter(|(_, x)| x.is_finite())
        .map(|(&t, &x)| (t, x))
        .unzip();
    let (times, xs) = pairs;
    if times.len() < 2 {
        return Outcome::Trapped;
    }
    let x = xs[xs.len() - 1];
    let v = final_velocity(&times, &xs);
    if x > imp.x_c + r && v > 0.0 {
        Outcome::Transmitted
    } else if x < imp.x_c - r && v < 0.0 {
        Outcome::Reflected
    } else {
        Outcome::Trapped
    }
}

/// `outcome,omega_peak,turning_time,E_final`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub outcome: Outcome,
    pub omega_peak: Option<f64>,
    pub turning_time: Option<f64>,
    pub energy_final: f64,
}

impl RunSummary {
    pub const HEADER: &'static str = "outcome,omega_peak,turning_time,E_final";

    pub fn line(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), crate::output::num);
        format!(
            "{},{},{},{}",
            self.outcome,
            opt(self.omega_peak),
            opt(self.turning_time),
            crate::output::num(self.energy_final)
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    /// Direct O(n²) DFT magnitude of the same windowed signal.
    fn naive_spectrum(series: &ProbeSeries) -> Vec<f64> {
        let n = series.len();
        let mean = series.values.iter().sum::<f64>() / n as f64;
        let x: Vec<f64> = series
            .values
            .iter()
            .enumerate()
            .map(|(k, v)| (v - mean) * hann(k, n))
            .collect();
        (0..=n / 2)
            .map(|f| {
                let (mut re, mut im) = (0.0, 0.0);
                for (k, xk) in x.iter().enumerate() {
                    let ang = -2.0 * std::f64::consts::PI * (f * k) as f64 / n as f64;
                    re += xk * ang.cos();
                    im += xk * ang.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect()
    }

    #[test]
    fn fft_matches_naive_dft() {
        let s = ProbeSeries::sample(0.1, 300, |t| (0.7 * t).sin() + 0.2 * (2.3 * t).cos() + 0.05 * t);
        let fast = spectrum(&s);
        let slow = naive_spectrum(&s);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a.1 - b).abs() < 1e-9 * (1.0 + b));
        }
    }

    #[test]
    fn pure_sinusoid() {
        let s = ProbeSeries::sample(0.05, 4096, |t| (1.3 * t).sin());
        let w = leading_frequency(&s).unwrap();
        assert!((w - 1.3).abs() < 0.002, "{w}");
    }

    #[test]
    fn fundamental_dominates_harmonic() {
        let s = ProbeSeries::sample(0.05, 4096, |t| (1.3 * t).sin() + 0.3 * (2.6 * t).sin());
        let w = leading_frequency(&s).unwrap();
        assert!((w - 1.3).abs() < 0.002, "{w}");
    }

    #[test]
    fn random_frequencies_within_a_fifth_of_a_bin() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let (dt, n) = (0.05, 2048);
        let bin = 2.0 * std::f64::consts::PI / (n as f64 * dt);
        for _ in 0..20 {
            let f = rng.gen_range(0.3..10.0);
            let phase = rng.gen_range(0.0..6.28);
            let s = ProbeSeries::sample(dt, n, |t| (f * t + phase).sin());
            let w = leading_frequency(&s).unwrap();
            assert!((w - f).abs() <= 0.2 * bin, "f {f}: {w}");
        }
    }

    #[test]
    fn spectral_error_paths() {
        let short = ProbeSeries::sample(0.1, 10, |t| t.sin());
        assert_eq!(leading_frequency(&short).unwrap_err().kind(), "TooShort");
        let flat = ProbeSeries::sample(0.1, 128, |_| 0.3);
        assert_eq!(leading_frequency(&flat).unwrap_err().kind(), "DegenerateSeries");
        assert_eq!(
            ProbeSeries::new(vec![0.0, 1.0, 3.0], vec![0.0; 3]).unwrap_err().kind(),
            "NonUniform"
        );
    }

    #[test]
    fn damped_sinusoid_has_monotone_envelope() {
        let s = ProbeSeries::sample(0.01, 10_001, |t| (-0.05 * t).exp() * (3.0 * t).sin());
        let env = envelope(&s).unwrap();
        assert_eq!(env.turning_time, None);
        assert!(env.is_non_increasing(0.0));
        assert!(env.extrema_magnitudes.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn decay_is_judged_from_the_envelope_peak() {
        let s = ProbeSeries::sample(0.01, 10_001, |t| (t / (1.0 + 0.1 * t * t)) * (3.0 * t).sin());
        let env = envelope(&s).unwrap();
        assert!(!env.is_non_increasing(0.0));
        assert!(env.decays_after_peak(0.0));
    }

    #[test]
    fn revival_sets_turning_time() {
        // amplitude falls until t = 60, then rises
        let s = ProbeSeries::sample(0.01, 12_001, |t| (0.05 + ((t - 60.0) / 30.0).powi(2)) * (2.0 * t).sin());
        let env = envelope(&s).unwrap();
        let tt = env.turning_time.unwrap();
        assert!((tt - 60.0).abs() < 2.0, "{tt}");
        assert!(!env.is_non_increasing(0.05));
    }

    #[test]
    fn parabolic_refinement_locates_peak() {
        let s = ProbeSeries::sample(0.1, 200, |t| (t - 5.03).cos() * (-(t - 5.03).powi(2) / 50.0).exp());
        let env = envelope(&s).unwrap();
        let k = env
            .extrema_times
            .iter()
            .position(|&t| (t - 5.03).abs() < 0.5)
            .unwrap();
        assert!((env.extrema_times[k] - 5.03).abs() < 0.01);
        assert!((env.extrema_values[k] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn ripple_near_peaks_is_ignored() {
        let clean = ProbeSeries::sample(0.002, 50_000, |t| (-0.01 * t).exp() * t.sin());
        let rippled = ProbeSeries::sample(0.002, 50_000, |t| (-0.01 * t).exp() * t.sin() + 5e-4 * (100.0 * t).sin());
        let a = envelope(&clean).unwrap();
        let b = envelope(&rippled).unwrap();
        let raw = rippled.values.windows(3).filter(|w| (w[1] - w[0]) * (w[2] - w[1]) < 0.0).count();
        assert!(raw > 3 * a.extrema_times.len());
        assert_eq!(a.extrema_times.len(), b.extrema_times.len());
        assert_eq!(b.turning_time, None);
        for (p, q) in a.extrema_times.iter().zip(&b.extrema_times) {
            assert!((p - q).abs() < 0.1, "{p} vs {q}");
        }
    }

    #[test]
    fn too_few_extrema() {
        let s = ProbeSeries::sample(0.1, 100, |t| t * t);
        assert_eq!(envelope(&s).unwrap_err().kind(), "TooFewExtrema");
    }

    #[test]
    fn summary_line_format() {
        let s = RunSummary {
            outcome: Outcome::Trapped,
            omega_peak: Some(0.84),
            turning_time: None,
            energy_final: 0.5,
        };
        assert_eq!(s.line(), "trapped,8.400000000e-1,none,5.000000000e-1");
    }
}
