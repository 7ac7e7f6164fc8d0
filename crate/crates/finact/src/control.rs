//! PID tracking of a planned sinusoidal reference.
//!
//! The reference is not arbitrary: its frequency comes from the free-orbit
//! lookup table, so the controller reinforces the passive dynamics instead of
//! fighting them, and its phase is chosen from the initial condition. The
//! control output is a force per unit mass fed straight into the plant;
//! converting it to coil turns and current is the design module's job.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::{State, SystemParams};
use crate::sim::{simulate, Drive, DriveLaw, SimOptions, Trajectory};
use crate::spectral::FrequencyTable;

/// PID gains acting on a position error in meters and yielding force per
/// unit mass: kp in s^-2, kd in s^-1, ki in s^-3.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    pub kp: f64,
    pub kd: f64,
    pub ki: f64,
}

impl PidGains {
    /// Stiffness-scaled defaults: kp = 4k, kd = 2 sqrt(k), ki = 0.1 k sqrt(k).
    /// Strong enough to pull a start 25% off the orbit onto the reference
    /// within a few periods.
    pub fn defaults_for_stiffness(k: f64) -> PidGains {
        PidGains { kp: 4.0 * k, kd: 2.0 * k.sqrt(), ki: 0.1 * k * k.sqrt() }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.kp.is_finite() && self.kd.is_finite() && self.ki.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "gains must be finite: kp = {}, kd = {}, ki = {}",
                self.kp, self.kd, self.ki
            )));
        }
        Ok(())
    }
}

/// Controller memory: the running error integral and the previous sample.
/// The default value is the reset state.
#[derive(Debug, Clone, Copy, Default)]
pub struct PidState {
    /// Trapezoidal accumulation of the error, m s.
    pub integral: f64,
    /// Previous (time, error) sample; `None` right after reset.
    pub prev: Option<(f64, f64)>,
}

/// One PID update with the error rate supplied by the caller.
///
/// The integral advances by the trapezoid rule. From the reset state the
/// error is treated as having held its current value since t = 0, so a
/// constant error e first sampled at t contributes e*t.
pub fn pid_step_with_rate(
    gains: &PidGains,
    state: &PidState,
    error: f64,
    error_rate: f64,
    t: f64,
) -> Result<(f64, PidState), Error> {
    let integral = match state.prev {
        Some((t_prev, e_prev)) => {
            if t <= t_prev {
                return Err(Error::NonIncreasingTime { t, prev: t_prev });
            }
            state.integral + 0.5 * (error + e_prev) * (t - t_prev)
        }
        None => {
            if t < 0.0 {
                return Err(Error::NonIncreasingTime { t, prev: 0.0 });
            }
            state.integral + error * t
        }
    };
    let force = gains.kp * error + gains.kd * error_rate + gains.ki * integral;
    Ok((force, PidState { integral, prev: Some((t, error)) }))
}

/// One PID update with the error rate taken by backward difference; zero on
/// the first sample after reset.
pub fn pid_step(
    gains: &PidGains,
    state: &PidState,
    error: f64,
    t: f64,
) -> Result<(f64, PidState), Error> {
    let rate = match state.prev {
        Some((t_prev, e_prev)) if t > t_prev => (error - e_prev) / (t - t_prev),
        _ => 0.0,
    };
    pid_step_with_rate(gains, state, error, rate, t)
}

/// Sinusoidal displacement reference x_d(t) = A cos(w t + phi).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReferencePlan {
    /// Amplitude, m.
    pub amplitude: f64,
    /// Angular frequency, rad/s.
    pub omega: f64,
    /// Initial phase, rad.
    pub phase: f64,
}

impl ReferencePlan {
    pub fn validate(&self) -> Result<(), Error> {
        let ok = self.amplitude > 0.0
            && self.amplitude.is_finite()
            && self.omega > 0.0
            && self.omega.is_finite()
            && self.phase.is_finite();
        if !ok {
            return Err(Error::InvalidParams(format!(
                "reference A = {}, w = {}, phi = {} is not a valid plan",
                self.amplitude, self.omega, self.phase
            )));
        }
        Ok(())
    }

    /// Reference period, s.
    pub fn period(&self) -> f64 {
        std::f64::consts::TAU / self.omega
    }

    pub fn position(&self, t: f64) -> f64 {
        self.amplitude * (self.omega * t + self.phase).cos()
    }

    pub fn velocity(&self, t: f64) -> f64 {
        -self.amplitude * self.omega * (self.omega * t + self.phase).sin()
    }
}

/// Plans the reference for amplitude `a`: the frequency comes from the
/// lookup table and the phase from the initial condition, so that the
/// reference starts as close to the fin as the orbit allows.
///
/// phi solves x(0) = A cos(phi), v(0) = -A w sin(phi) in the two-argument
/// arctangent sense; an off-orbit start makes the system overdetermined and
/// x(0)/A is clamped to [-1, 1].
pub fn plan_reference(a: f64, ic: State, table: &FrequencyTable) -> Result<ReferencePlan, Error> {
    let f = table.lookup(a)?;
    plan_with_omega(a, std::f64::consts::TAU * f, ic)
}

/// Same phase construction with the angular frequency supplied directly.
pub fn plan_with_omega(a: f64, omega: f64, ic: State) -> Result<ReferencePlan, Error> {
    let mut plan = ReferencePlan { amplitude: a, omega, phase: 0.0 };
    plan.validate()?;
    plan.phase = (-ic.v / (a * omega)).atan2((ic.x / a).clamp(-1.0, 1.0));
    Ok(plan)
}

struct PidDrive<'a> {
    gains: &'a PidGains,
    plan: &'a ReferencePlan,
    state: PidState,
}

impl DriveLaw for PidDrive<'_> {
    fn sample(&mut self, t: f64, s: State) -> Result<Drive, Error> {
        let error = self.plan.position(t) - s.x;
        // The reference velocity is known in closed form, so the derivative
        // term uses it directly instead of differencing the noisy error.
        let rate = self.plan.velocity(t) - s.v;
        let (force, next) = pid_step_with_rate(self.gains, &self.state, error, rate, t)?;
        self.state = next;
        Ok(Drive { current: 0.0, force })
    }
}

/// Runs the plant under PID force control toward the planned reference.
///
/// Destabilizing gains may drive the fin onto a magnet; that ends the run
/// with a capture event, not an error.
pub fn closed_loop(
    p: &SystemParams,
    gains: &PidGains,
    plan: &ReferencePlan,
    ic: State,
    t_end: f64,
    opts: &SimOptions,
) -> Result<Trajectory, Error> {
    gains.validate()?;
    plan.validate()?;
    let mut drive = PidDrive { gains, plan, state: PidState::default() };
    simulate(p, ic, t_end, &mut drive, opts)
}

/// Fraction of the horizon discarded as transient by the steady-state
/// metrics below.
pub const TRANSIENT_FRACTION: f64 = 0.2;

/// Largest steady-state control magnitude and the displacement where it
/// occurs, with the leading [`TRANSIENT_FRACTION`] of samples dropped.
pub fn max_control_force(traj: &Trajectory) -> Result<(f64, f64), Error> {
    let skip = (traj.len() as f64 * TRANSIENT_FRACTION) as usize;
    if skip >= traj.len() {
        return Err(Error::TooShort { len: traj.len(), need: skip + 1 });
    }
    let mut best = (0.0f64, traj.states[skip].x);
    for i in skip..traj.len() {
        let f = traj.drives[i].force.abs();
        if f > best.0 {
            best = (f, traj.states[i].x);
        }
    }
    Ok(best)
}

/// Mean |force| after dropping the leading `drop_frac` of samples.
pub fn mean_abs_force(traj: &Trajectory, drop_frac: f64) -> Result<f64, Error> {
    if !(0.0..1.0).contains(&drop_frac) {
        return Err(Error::InvalidParams(format!("drop_frac = {drop_frac} outside [0, 1)")));
    }
    let skip = (traj.len() as f64 * drop_frac) as usize;
    let rest = &traj.drives[skip.min(traj.len() - 1)..];
    Ok(rest.iter().map(|d| d.force.abs()).sum::<f64>() / rest.len() as f64)
}

/// Peak |x| over the samples with t in [t_from, t_to]; the window must span
/// at least one orbit period to read as an amplitude.
pub fn steady_amplitude(traj: &Trajectory, t_from: f64, t_to: f64) -> Result<f64, Error> {
    let mut amp: Option<f64> = None;
    for (i, &t) in traj.times.iter().enumerate() {
        if t >= t_from && t <= t_to {
            let x = traj.states[i].x.abs();
            amp = Some(amp.map_or(x, |a: f64| a.max(x)));
        }
    }
    amp.ok_or_else(|| {
        Error::InvalidParams(format!("no samples inside [{t_from}, {t_to}]"))
    })
}
