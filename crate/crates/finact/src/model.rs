//! Lumped plant model: one mass on a linear spring between two fixed magnets.
//!
//! The magnets sit at x = -x0 and x = +x0 and pull on a small magnet carried
//! by the mass. With every term divided by the moving mass the equations of
//! motion are
//!
//! ```text
//! dx/dt = v
//! dv/dt = F2(x) + F1(x) + Fs1(x) + Fs2(x) - k*x - gamma*v
//! ```
//!
//! where Fi is the point-dipole force of magnet i and Fs1, Fs2 are the forces
//! of two solenoids co-located with the magnets, wound anti-parallel so both
//! push the mass the same way at the center. The dipole force diverges at the
//! magnet faces, so states are only meaningful strictly inside (-x0, x0).

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Distance from either magnet below which force evaluation is refused.
pub const DEFAULT_SINGULARITY_GUARD: f64 = 1e-6;

fn default_alpha() -> i32 {
    4
}

fn default_guard() -> f64 {
    DEFAULT_SINGULARITY_GUARD
}

/// Per-unit-mass plant parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Gain of the magnet at x = -x0, N m^4 / kg. Positive attracts.
    pub c1: f64,
    /// Gain of the magnet at x = +x0, N m^4 / kg. Positive attracts.
    pub c2: f64,
    /// Spring stiffness over mass, 1 / s^2.
    pub k: f64,
    /// Viscous damping over mass, 1 / s.
    pub gamma: f64,
    /// Half-gap between the magnets, m.
    pub x0: f64,
    /// Force-law exponent. The point-dipole model uses 4.
    #[serde(default = "default_alpha")]
    pub alpha: i32,
    /// Solenoid gain per ampere of coil current, N m^4 / (kg A).
    #[serde(default)]
    pub cs: f64,
    /// Singularity guard distance, m.
    #[serde(default = "default_guard")]
    pub eps_sing: f64,
}

impl SystemParams {
    /// General asymmetric plant with no solenoid and the default guard.
    pub fn new(c1: f64, c2: f64, k: f64, gamma: f64, x0: f64) -> Result<Self, Error> {
        let p = SystemParams {
            c1,
            c2,
            k,
            gamma,
            x0,
            alpha: 4,
            cs: 0.0,
            eps_sing: DEFAULT_SINGULARITY_GUARD,
        };
        p.validate()?;
        Ok(p)
    }

    /// Plant with equal magnet gains c on both sides.
    pub fn symmetric(c: f64, k: f64, gamma: f64, x0: f64) -> Result<Self, Error> {
        Self::new(c, c, k, gamma, x0)
    }

    pub fn with_damping(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_solenoid_gain(mut self, cs: f64) -> Self {
        self.cs = cs;
        self
    }

    pub fn validate(&self) -> Result<(), Error> {
        let all_finite = [self.c1, self.c2, self.k, self.gamma, self.x0, self.cs, self.eps_sing]
            .iter()
            .all(|f| f.is_finite());
        if !all_finite {
            return Err(Error::InvalidParams("non-finite field".into()));
        }
        if self.x0 <= 0.0 {
            return Err(Error::InvalidParams(format!("x0 = {} must be positive", self.x0)));
        }
        if self.k < 0.0 {
            return Err(Error::InvalidParams(format!("k = {} must be non-negative", self.k)));
        }
        if self.gamma < 0.0 {
            return Err(Error::InvalidParams(format!(
                "gamma = {} must be non-negative",
                self.gamma
            )));
        }
        if self.alpha < 1 {
            return Err(Error::InvalidParams(format!(
                "alpha = {} must be a positive integer",
                self.alpha
            )));
        }
        if self.eps_sing <= 0.0 || self.eps_sing >= self.x0 {
            return Err(Error::InvalidParams(format!(
                "eps_sing = {} must lie in (0, x0)",
                self.eps_sing
            )));
        }
        Ok(())
    }

    /// True while x keeps the guard distance from both magnets.
    pub fn inside_guard_band(&self, x: f64) -> bool {
        x.abs() < self.x0 - self.eps_sing
    }
}

/// Instantaneous mechanical state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    /// Displacement of the mass from the midpoint, m.
    pub x: f64,
    /// Velocity, m/s.
    pub v: f64,
}

impl State {
    pub fn new(x: f64, v: f64) -> Self {
        State { x, v }
    }
}

/// Dimensional plant description, before dividing by the moving mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Force constant of the magnet at -x0, N m^4.
    pub c1: f64,
    /// Force constant of the magnet at +x0, N m^4.
    pub c2: f64,
    /// Spring stiffness, N / m.
    pub k: f64,
    /// Viscous damping, N s / m.
    pub gamma: f64,
    /// Moving mass, kg.
    pub mass: f64,
    /// Solenoid force constant per ampere, N m^4 / A.
    #[serde(default)]
    pub cs: f64,
    /// Half-gap between the magnets, m.
    pub x0: f64,
    #[serde(default = "default_alpha")]
    pub alpha: i32,
}

impl PhysicalParams {
    /// Divides the force constants by the mass, giving the per-unit-mass form
    /// the rest of the library works in.
    pub fn normalize(&self) -> Result<SystemParams, Error> {
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::InvalidParams(format!(
                "mass = {} must be positive",
                self.mass
            )));
        }
        let p = SystemParams {
            c1: self.c1 / self.mass,
            c2: self.c2 / self.mass,
            k: self.k / self.mass,
            gamma: self.gamma / self.mass,
            x0: self.x0,
            alpha: self.alpha,
            cs: self.cs / self.mass,
            eps_sing: DEFAULT_SINGULARITY_GUARD,
        };
        p.validate()?;
        Ok(p)
    }
}

/// Point-dipole force on the mass at x from a magnet fixed at xi.
///
/// F = -ci * sign(x - xi) / |x - xi|^alpha, per unit mass. Positive ci
/// attracts the mass toward the magnet, negative repels. Refuses to evaluate
/// within `guard` of the magnet, where the model has no meaning.
pub fn magnetic_force(x: f64, xi: f64, ci: f64, alpha: i32, guard: f64) -> Result<f64, Error> {
    let d = x - xi;
    if d.abs() < guard {
        return Err(Error::Singularity { x, magnet: xi, guard });
    }
    Ok(-ci * d.signum() / d.abs().powi(alpha))
}

/// Right-hand side of the equations of motion, with the solenoids carrying
/// `current` amperes and an extra per-unit-mass force `f_ext` applied to the
/// mass (the control input).
pub fn rhs_forced(
    s: State,
    p: &SystemParams,
    current: f64,
    f_ext: f64,
) -> Result<(f64, f64), Error> {
    let g = p.eps_sing;
    let f2 = magnetic_force(s.x, p.x0, p.c2, p.alpha, g)?;
    let f1 = magnetic_force(s.x, -p.x0, p.c1, p.alpha, g)?;
    // Anti-parallel winding: gain +cs*I at +x0, -cs*I at -x0. At the center
    // both terms push the same way, dv/dt = 2*cs*I/x0^alpha.
    let fs2 = magnetic_force(s.x, p.x0, p.cs * current, p.alpha, g)?;
    let fs1 = magnetic_force(s.x, -p.x0, -p.cs * current, p.alpha, g)?;
    let a = f2 + f1 + fs2 + fs1 + f_ext - p.k * s.x - p.gamma * s.v;
    Ok((s.v, a))
}

/// Right-hand side without an external control force.
pub fn rhs(s: State, p: &SystemParams, current: f64) -> Result<(f64, f64), Error> {
    rhs_forced(s, p, current, 0.0)
}

/// Total mechanical energy per unit mass for the quartic force law.
///
/// E = v^2/2 + k x^2/2 + c2 / (3 (x - x0)^3) - c1 / (3 (x + x0)^3)
///
/// Constant along unforced undamped trajectories; never increasing once
/// gamma > 0. Only alpha = 4 admits this closed form.
pub fn total_energy(s: State, p: &SystemParams) -> Result<f64, Error> {
    if p.alpha != 4 {
        return Err(Error::UnsupportedAlpha { alpha: p.alpha });
    }
    let g = p.eps_sing;
    if (s.x - p.x0).abs() < g || (s.x + p.x0).abs() < g {
        return Err(Error::Singularity {
            x: s.x,
            magnet: p.x0.copysign(s.x),
            guard: g,
        });
    }
    let u2 = p.c2 / (3.0 * (s.x - p.x0).powi(3));
    let u1 = -p.c1 / (3.0 * (s.x + p.x0).powi(3));
    Ok(0.5 * s.v * s.v + 0.5 * p.k * s.x * s.x + u2 + u1)
}
