//! Orbit frequency estimation and the amplitude-to-frequency lookup table.
//!
//! Two independent routes measure the same orbit. The spectral route trims
//! the series to a whole number of periods, takes a rectangular-window DFT of
//! the mean-removed positions, and refines the peak bin with a three-point
//! quadratic fit. The time-domain route averages half-periods between
//! consecutive zero crossings. Table construction requires the two to agree
//! within [`ROUTE_AGREEMENT`]; keep them independent so one can catch the
//! other drifting.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::equilibria::{find_fixed_points, DEFAULT_ROOT_TOL};
use crate::error::Error;
use crate::model::{State, SystemParams};
use crate::sim::{simulate, NoDrive, SimOptions};

/// Allowed deviation of any sample interval from the mean, relative.
pub const UNIFORMITY_TOL: f64 = 1e-9;

/// Zero crossings needed for a half-period frequency estimate.
pub const MIN_CROSSINGS: usize = 3;

/// Maximum relative disagreement tolerated between the spectral and the
/// zero-crossing estimate of the same orbit.
pub const ROUTE_AGREEMENT: f64 = 0.01;

/// Fewest samples a spectrum is computed from.
pub const MIN_SAMPLES: usize = 8;

/// Single-sided power spectrum. Power is normalized to total 1 whenever the
/// input is not identically zero after mean removal.
#[derive(Debug, Clone, Serialize)]
pub struct Spectrum {
    /// Bin centers, Hz, uniformly spaced from 0.
    pub frequencies: Vec<f64>,
    /// Normalized power per bin.
    pub power: Vec<f64>,
    /// Bin spacing, Hz.
    pub df: f64,
}

/// DFT magnitude-squared of the mean-removed series, single-sided.
///
/// The series must be uniformly sampled; capture-shortened trajectories with
/// a ragged final sample should be sliced before the call.
pub fn power_spectrum(times: &[f64], values: &[f64]) -> Result<Spectrum, Error> {
    if times.len() != values.len() {
        return Err(Error::InvalidParams(format!(
            "times ({}) and values ({}) differ in length",
            times.len(),
            values.len()
        )));
    }
    let n = times.len();
    if n < MIN_SAMPLES {
        return Err(Error::TooShort { len: n, need: MIN_SAMPLES });
    }
    let dt_mean = (times[n - 1] - times[0]) / (n - 1) as f64;
    if !(dt_mean > 0.0 && dt_mean.is_finite()) {
        return Err(Error::NonIncreasingTime { t: times[n - 1], prev: times[0] });
    }
    for i in 1..n {
        let dt = times[i] - times[i - 1];
        if dt <= 0.0 {
            return Err(Error::NonIncreasingTime { t: times[i], prev: times[i - 1] });
        }
        let deviation = (dt - dt_mean).abs();
        if deviation > UNIFORMITY_TOL * dt_mean {
            return Err(Error::NonUniformSampling { dt, deviation });
        }
    }

    let mean = values.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> =
        values.iter().map(|&v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let bins = n / 2 + 1;
    let df = 1.0 / (n as f64 * dt_mean);
    let mut power: Vec<f64> = Vec::with_capacity(bins);
    for (i, x) in buf.iter().take(bins).enumerate() {
        let doubled = i != 0 && !(n % 2 == 0 && i == n / 2);
        power.push(if doubled { 2.0 } else { 1.0 } * x.norm_sqr());
    }
    // Mean removal of a constant signal leaves rounding residue, not content,
    // so residual power below the roundoff floor of the raw signal reads as
    // an empty spectrum.
    let total: f64 = power.iter().sum();
    let raw: f64 = values.iter().map(|&v| v * v).sum();
    let floor = (4.0 * n as f64 * f64::EPSILON).powi(2) * raw;
    if total > floor {
        for p in &mut power {
            *p /= total;
        }
    } else {
        power.iter_mut().for_each(|p| *p = 0.0);
    }
    let frequencies = (0..bins).map(|i| i as f64 * df).collect();
    Ok(Spectrum { frequencies, power, df })
}

/// Frequency of the strongest non-DC bin, refined by a quadratic fit through
/// the peak and its neighbors.
pub fn dominant_frequency(s: &Spectrum) -> Result<f64, Error> {
    if s.power.len() < 2 {
        return Err(Error::EmptySpectrum);
    }
    let mut peak = 1;
    for i in 2..s.power.len() {
        if s.power[i] > s.power[peak] {
            peak = i;
        }
    }
    if s.power[peak] <= 0.0 {
        return Err(Error::EmptySpectrum);
    }
    let delta = if peak + 1 < s.power.len() {
        let (pm, p0, pp) = (s.power[peak - 1], s.power[peak], s.power[peak + 1]);
        let denom = pm - 2.0 * p0 + pp;
        if denom == 0.0 {
            0.0
        } else {
            (0.5 * (pm - pp) / denom).clamp(-0.5, 0.5)
        }
    } else {
        0.0 // peak sits on the Nyquist bin, nothing to fit against
    };
    Ok((peak as f64 + delta) * s.df)
}

/// Mean half-period frequency from sign changes of the series.
///
/// Crossing instants come from linear interpolation between the bracketing
/// samples. The series is used as given: callers remove any offset
/// themselves, and a sample exactly at zero does not count as a crossing.
pub fn zero_crossing_frequency(times: &[f64], values: &[f64]) -> Result<f64, Error> {
    if times.len() != values.len() {
        return Err(Error::InvalidParams(format!(
            "times ({}) and values ({}) differ in length",
            times.len(),
            values.len()
        )));
    }
    let mut first = None;
    let mut last = 0.0;
    let mut count = 0usize;
    for i in 1..times.len() {
        if times[i] <= times[i - 1] {
            return Err(Error::NonIncreasingTime { t: times[i], prev: times[i - 1] });
        }
        let (a, b) = (values[i - 1], values[i]);
        if a * b < 0.0 {
            let tau = times[i - 1] - a * (times[i] - times[i - 1]) / (b - a);
            if first.is_none() {
                first = Some(tau);
            }
            last = tau;
            count += 1;
        }
    }
    if count < MIN_CROSSINGS {
        return Err(Error::TooFewCrossings { found: count, need: MIN_CROSSINGS });
    }
    Ok((count - 1) as f64 / (2.0 * (last - first.unwrap())))
}

/// Fundamental frequency of a sampled orbit, cross-checked both ways.
///
/// The zero-crossing estimate fixes the whole number of periods to keep, the
/// series is trimmed there, and the spectral peak of the trimmed series is
/// the returned value. Disagreement beyond [`ROUTE_AGREEMENT`] is an error
/// rather than a silent pick.
pub fn orbit_frequency(times: &[f64], xs: &[f64]) -> Result<f64, Error> {
    let f_zc = zero_crossing_frequency(times, xs)?;
    let n = times.len();
    let dt = times[1] - times[0];
    let span = times[n - 1] - times[0];
    let periods = (span * f_zc).floor();
    let t_trim = times[0] + periods / f_zc;
    let mut end = n - 1;
    while end > 0 && times[end] > t_trim + 0.5 * dt {
        end -= 1;
    }
    let spectrum = power_spectrum(&times[..=end], &xs[..=end])?;
    let f_dft = dominant_frequency(&spectrum)?;
    if (f_dft - f_zc).abs() > ROUTE_AGREEMENT * f_zc {
        return Err(Error::InvalidParams(format!(
            "frequency routes disagree: spectral {f_dft} Hz vs zero-crossing {f_zc} Hz"
        )));
    }
    Ok(f_dft)
}

/// Amplitude-to-frequency lookup table, amplitudes strictly increasing.
#[derive(Debug, Clone, Serialize)]
pub struct FrequencyTable {
    amplitudes: Vec<f64>,
    frequencies: Vec<f64>,
}

impl FrequencyTable {
    pub fn new(amplitudes: Vec<f64>, frequencies: Vec<f64>) -> Result<Self, Error> {
        if amplitudes.len() != frequencies.len() {
            return Err(Error::InvalidParams(format!(
                "{} amplitudes vs {} frequencies",
                amplitudes.len(),
                frequencies.len()
            )));
        }
        if amplitudes.len() < 2 {
            return Err(Error::TooShort { len: amplitudes.len(), need: 2 });
        }
        for (i, &a) in amplitudes.iter().enumerate() {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::InvalidParams(format!("amplitude {a} at row {i}")));
            }
            if i > 0 && a <= amplitudes[i - 1] {
                return Err(Error::InvalidParams(format!(
                    "amplitudes must increase strictly; row {i} holds {a} after {}",
                    amplitudes[i - 1]
                )));
            }
        }
        for (i, &f) in frequencies.iter().enumerate() {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::InvalidParams(format!("frequency {f} at row {i}")));
            }
        }
        Ok(FrequencyTable { amplitudes, frequencies })
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// Linear interpolation between the bracketing rows; exact on a node.
    pub fn lookup(&self, amplitude: f64) -> Result<f64, Error> {
        let (lo, hi) = (self.amplitudes[0], *self.amplitudes.last().unwrap());
        if !(amplitude >= lo && amplitude <= hi) {
            return Err(Error::OutOfRange { value: amplitude, lo, hi });
        }
        let i = match self.amplitudes.binary_search_by(|a| a.partial_cmp(&amplitude).unwrap()) {
            Ok(i) => return Ok(self.frequencies[i]),
            Err(i) => i,
        };
        let (a0, a1) = (self.amplitudes[i - 1], self.amplitudes[i]);
        let (f0, f1) = (self.frequencies[i - 1], self.frequencies[i]);
        Ok(f0 + (f1 - f0) * (amplitude - a0) / (a1 - a0))
    }
}

/// Measures the free-orbit frequency at each amplitude and assembles the
/// lookup table.
///
/// Requires an undamped plant; each amplitude must start inside the
/// oscillatory basin, bounded by the positive saddle (or by the gap edge
/// when the magnets are off). With attracting magnets on both sides the
/// resulting frequencies must decrease strictly with amplitude.
pub fn build_frequency_table(
    p: &SystemParams,
    amplitudes: &[f64],
    t_sim: f64,
    opts: &SimOptions,
) -> Result<FrequencyTable, Error> {
    p.validate()?;
    if p.gamma != 0.0 {
        return Err(Error::InvalidParams(format!(
            "table construction needs an undamped plant, gamma = {}",
            p.gamma
        )));
    }
    let report = find_fixed_points(p, DEFAULT_ROOT_TOL)?;
    if report.center().is_none() {
        return Err(Error::InvalidParams(
            "no oscillatory basin: the plant has no center to orbit".into(),
        ));
    }
    let bound = match report.positive_saddle() {
        Some(s) => s.x,
        None => p.x0 - p.eps_sing,
    };

    let mut freqs = Vec::with_capacity(amplitudes.len());
    for &a in amplitudes {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidParams(format!("amplitude {a} must be positive")));
        }
        if a >= bound {
            return Err(Error::OutOfBasin { amplitude: a, bound });
        }
        let traj = simulate(p, State::new(a, 0.0), t_sim, &mut NoDrive, opts)?;
        if !traj.events.is_empty() {
            return Err(Error::OutOfBasin { amplitude: a, bound });
        }
        freqs.push(orbit_frequency(&traj.times, &traj.positions())?);
    }

    if p.c1 > 0.0 && p.c2 > 0.0 {
        for i in 1..freqs.len() {
            if freqs[i] >= freqs[i - 1] {
                return Err(Error::TableNotMonotone { index: i });
            }
        }
    }
    FrequencyTable::new(amplitudes.to_vec(), freqs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SADDLE: f64 = 3.4832873512951217e-3;

    fn table_params() -> SystemParams {
        SystemParams::symmetric(2.919e-9, 439.3, 0.0, 1e-2).unwrap()
    }

    fn sampled(f: impl Fn(f64) -> f64, n: usize, dt: f64) -> (Vec<f64>, Vec<f64>) {
        let times: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
        let values = times.iter().map(|&t| f(t)).collect();
        (times, values)
    }

    #[test]
    fn pure_tone_lands_on_its_bin() {
        let (t, x) = sampled(|t| 3e-3 * (2.0 * std::f64::consts::TAU * t).cos(), 20000, 1e-3);
        let s = power_spectrum(&t, &x).unwrap();
        let f = dominant_frequency(&s).unwrap();
        assert!((f - 2.0).abs() < 1e-9, "f = {f}");
        assert!((s.power.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // An integer-period rectangular window leaks nothing.
        let peak = (2.0 / s.df).round() as usize;
        assert!(s.power[peak] > 0.999);
    }

    #[test]
    fn off_bin_tone_resolved_within_half_a_bin() {
        let f_true = 2.013;
        let (t, x) = sampled(|t| (f_true * std::f64::consts::TAU * t).sin(), 20000, 1e-3);
        let s = power_spectrum(&t, &x).unwrap();
        let f = dominant_frequency(&s).unwrap();
        assert!((f - f_true).abs() <= 0.5 * s.df, "f = {f}, df = {}", s.df);
    }

    #[test]
    fn stronger_of_two_tones_wins() {
        let tau = std::f64::consts::TAU;
        let (t, x) = sampled(|t| 3.0 * (2.0 * tau * t).sin() + (6.0 * tau * t).sin(), 20000, 1e-3);
        let s = power_spectrum(&t, &x).unwrap();
        let f = dominant_frequency(&s).unwrap();
        assert!((f - 2.0).abs() < 0.01, "f = {f}");
    }

    #[test]
    fn constant_signal_has_empty_spectrum() {
        let (t, x) = sampled(|_| 0.7, 64, 1e-3);
        let s = power_spectrum(&t, &x).unwrap();
        assert!(s.power.iter().all(|&p| p == 0.0));
        assert!(matches!(dominant_frequency(&s), Err(Error::EmptySpectrum)));
    }

    #[test]
    fn nonuniform_sampling_is_rejected() {
        let (mut t, x) = sampled(|t| t.sin(), 64, 1e-3);
        t[30] += 1e-6;
        assert!(matches!(power_spectrum(&t, &x), Err(Error::NonUniformSampling { .. })));
    }

    #[test]
    fn short_series_is_rejected() {
        let (t, x) = sampled(|t| t.sin(), 4, 1e-3);
        assert!(matches!(power_spectrum(&t, &x), Err(Error::TooShort { .. })));
    }

    #[test]
    fn crossings_recover_a_tone_frequency() {
        let (t, x) = sampled(|t| (2.0 * std::f64::consts::TAU * t).sin(), 20000, 1e-3);
        let f = zero_crossing_frequency(&t, &x).unwrap();
        assert!((f - 2.0).abs() < 1e-6, "f = {f}");
    }

    #[test]
    fn single_crossing_is_not_enough() {
        // The offset keeps every sample off zero so the ramp crosses exactly
        // once under the strict sign test.
        let (t, x) = sampled(|t| t - 0.0005, 1000, 1e-3);
        assert!(matches!(
            zero_crossing_frequency(&t, &x),
            Err(Error::TooFewCrossings { found: 1, need: MIN_CROSSINGS })
        ));
    }

    #[test]
    fn orbit_routes_agree_on_the_reference_plant() {
        let p = table_params();
        let traj = simulate(
            &p,
            State::new(0.5 * SADDLE, 0.0),
            20.0,
            &mut NoDrive,
            &SimOptions::default(),
        )
        .unwrap();
        let xs = traj.positions();
        let f_orbit = orbit_frequency(&traj.times, &xs).unwrap();
        let f_zc = zero_crossing_frequency(&traj.times, &xs).unwrap();
        assert!((f_orbit - f_zc).abs() < 0.01 * f_zc);
    }

    #[test]
    fn smallest_and_largest_table_orbits_match_reference_measurements() {
        // The trim quantizes the window to the sample grid, which moves the
        // spectral estimate by up to ~1e-4 relative; the pin allows that and
        // no more.
        let p = table_params();
        let opts = SimOptions::default();
        for (frac, f_ref) in [(0.05, 2.2816079256081645), (0.95, 1.288275)] {
            let traj =
                simulate(&p, State::new(frac * SADDLE, 0.0), 20.0, &mut NoDrive, &opts).unwrap();
            let f = orbit_frequency(&traj.times, &traj.positions()).unwrap();
            assert!((f - f_ref).abs() < 2e-4 * f_ref, "frac {frac}: f = {f} vs {f_ref}");
        }
    }

    #[test]
    fn gentle_orbit_sits_near_the_linearized_frequency() {
        let p = table_params();
        let traj = simulate(
            &p,
            State::new(1e-3, 0.0),
            20.0,
            &mut NoDrive,
            &SimOptions::default(),
        )
        .unwrap();
        let f = orbit_frequency(&traj.times, &traj.positions()).unwrap();
        // sqrt(k - 8c/x0^5) / 2 pi for the reference constants.
        let f_lin = 2.283083067363093;
        assert!((f - f_lin).abs() < 0.06, "f = {f}");
    }

    #[test]
    fn spring_only_table_is_flat_at_the_spring_frequency() {
        let p = SystemParams::symmetric(0.0, 439.3, 0.0, 1e-2).unwrap();
        let amps = [1e-3, 2e-3, 4e-3, 6e-3, 8e-3];
        let table = build_frequency_table(&p, &amps, 20.0, &SimOptions::default()).unwrap();
        let f_spring = 3.3358055988800888;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &f in table.frequencies() {
            assert!((f - f_spring).abs() < 1e-3 * f_spring, "f = {f}");
            lo = lo.min(f);
            hi = hi.max(f);
        }
        assert!((hi - lo) / f_spring < 1e-3, "spread = {}", hi - lo);
    }

    #[test]
    fn reference_table_decreases_with_amplitude() {
        let p = table_params();
        let amps: Vec<f64> = [0.2, 0.4, 0.6, 0.8].iter().map(|f| f * SADDLE).collect();
        let table = build_frequency_table(&p, &amps, 20.0, &SimOptions::default()).unwrap();
        for w in table.frequencies().windows(2) {
            assert!(w[1] < w[0], "{:?}", table.frequencies());
        }
    }

    #[test]
    fn table_refuses_damping_and_escapees() {
        let p = table_params();
        let damped = p.with_damping(1.0);
        assert!(build_frequency_table(&damped, &[1e-3, 2e-3], 20.0, &SimOptions::default())
            .is_err());
        let r = build_frequency_table(&p, &[1e-3, 4e-3], 20.0, &SimOptions::default());
        match r {
            Err(Error::OutOfBasin { amplitude, bound }) => {
                assert_eq!(amplitude, 4e-3);
                assert!((bound - SADDLE).abs() < 1e-9);
            }
            other => panic!("expected OutOfBasin, got {other:?}"),
        }
    }

    #[test]
    fn collapsed_plant_has_no_table() {
        let k = 439.3;
        let x0 = 1e-2f64;
        let p = SystemParams::symmetric(2.0 * k * x0.powi(5) / 8.0, k, 0.0, x0).unwrap();
        assert!(build_frequency_table(&p, &[1e-3], 20.0, &SimOptions::default()).is_err());
    }

    #[test]
    fn lookup_interpolates_between_nodes() {
        let t = FrequencyTable::new(vec![1e-3, 2e-3, 3e-3], vec![2.0, 1.8, 1.5]).unwrap();
        assert_eq!(t.lookup(2e-3).unwrap(), 1.8);
        assert!((t.lookup(1.5e-3).unwrap() - 1.9).abs() < 1e-15);
        assert!(matches!(t.lookup(0.5e-3), Err(Error::OutOfRange { .. })));
        assert!(matches!(t.lookup(4e-3), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn table_rejects_malformed_rows() {
        assert!(FrequencyTable::new(vec![1e-3], vec![2.0]).is_err());
        assert!(FrequencyTable::new(vec![1e-3, 1e-3], vec![2.0, 1.8]).is_err());
        assert!(FrequencyTable::new(vec![2e-3, 1e-3], vec![2.0, 1.8]).is_err());
        assert!(FrequencyTable::new(vec![1e-3, 2e-3], vec![2.0]).is_err());
        assert!(FrequencyTable::new(vec![1e-3, 2e-3], vec![2.0, -1.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn power_always_sums_to_one(seed in 0u64..1000) {
            // Cheap deterministic pseudo-signal, never constant.
            let (t, x) = sampled(
                |t| (seed as f64 + 1.0) * (7.3 * t + seed as f64).sin() + (31.7 * t).cos(),
                256,
                1e-3,
            );
            let s = power_spectrum(&t, &x).unwrap();
            prop_assert!((s.power.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn lookup_is_exact_on_nodes_and_bounded_between(
            a0 in 1e-4f64..1e-3,
            da in 1e-4f64..1e-3,
            f0 in 1.0f64..3.0,
            f1 in 1.0f64..3.0,
            w in 0.01f64..0.99,
        ) {
            let t = FrequencyTable::new(vec![a0, a0 + da], vec![f0, f1]).unwrap();
            prop_assert_eq!(t.lookup(a0).unwrap(), f0);
            prop_assert_eq!(t.lookup(a0 + da).unwrap(), f1);
            let f_mid = t.lookup(a0 + w * da).unwrap();
            prop_assert!(f_mid >= f0.min(f1) - 1e-12 && f_mid <= f0.max(f1) + 1e-12);
        }
    }
}
