//! Fixed points of the unforced plant and their linear stability.
//!
//! Multiplying the force balance by the (always positive) denominators
//! `(x - x1)^alpha (x - x2)^alpha` turns the equilibrium condition into a
//! polynomial residual that is safe to scan on a grid:
//!
//! ```text
//! r(x) = c2 (x - x1)^a - c1 (x - x2)^a - k x [(x - x1)(x - x2)]^a
//! ```
//!
//! Roots are bracketed by a uniform sign scan across the gap and refined by
//! bisection. The Jacobian of the flow has trace -gamma everywhere, so the
//! damping never moves a fixed point; only the determinant decides between a
//! center and a saddle.

use serde::Serialize;

use crate::error::Error;
use crate::model::SystemParams;

/// Grid points used by the default root scan.
pub const DEFAULT_SCAN_POINTS: usize = 4096;

/// Position tolerance the default refinement drives brackets to, m.
pub const DEFAULT_ROOT_TOL: f64 = 1e-12;

/// |det| below this fraction of k counts as degenerate.
pub const DEGENERACY_BAND: f64 = 1e-6;

/// Relative half-width of the band around the critical ratio in which the
/// regime is reported as critical rather than a side.
pub const CRITICAL_BAND: f64 = 1e-9;

/// Linearized character of a fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityKind {
    Center,
    Saddle,
    StableSpiral,
    StableNode,
    UnstableSpiral,
    UnstableNode,
    Degenerate,
}

/// A fixed point with its Jacobian invariants.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FixedPoint {
    /// Equilibrium displacement, m.
    pub x: f64,
    /// Jacobian trace, always -gamma.
    pub trace: f64,
    /// Jacobian determinant, s^-2.
    pub det: f64,
    pub kind: StabilityKind,
}

/// Which side of the center/saddle trade-off the symmetric plant sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// c/k below critical: the origin is a center ringed by two saddles.
    Oscillatory,
    /// Within the critical band: the origin is degenerate.
    Critical,
    /// c/k above critical: the magnets win and the origin is a saddle.
    Collapsed,
}

/// Outcome of the symmetric trade-off test c/k vs x0^5/8.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CriticalCheck {
    pub ratio: f64,
    pub critical_ratio: f64,
    pub regime: Regime,
}

/// Everything the root scan found.
#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumReport {
    /// Fixed points sorted by position.
    pub fixed_points: Vec<FixedPoint>,
    /// Trade-off data, present only for symmetric magnet gains.
    pub criticality: Option<CriticalCheck>,
}

impl EquilibriumReport {
    /// The saddle with x > 0, if the scan found one.
    pub fn positive_saddle(&self) -> Option<&FixedPoint> {
        self.fixed_points
            .iter()
            .find(|fp| fp.kind == StabilityKind::Saddle && fp.x > 0.0)
    }

    /// The fixed point of center kind, if present.
    pub fn center(&self) -> Option<&FixedPoint> {
        self.fixed_points.iter().find(|fp| fp.kind == StabilityKind::Center)
    }
}

/// Polynomial whose roots are the equilibria of the unforced plant.
///
/// Positive at x = 0 whenever the magnet at +x0 is the stronger one.
pub fn equilibrium_residual(x: f64, p: &SystemParams) -> f64 {
    let x1 = -p.x0;
    let x2 = p.x0;
    let a = p.alpha;
    p.c2 * (x - x1).powi(a) - p.c1 * (x - x2).powi(a)
        - p.k * x * ((x - x1) * (x - x2)).powi(a)
}

/// Linear stability of the flow at a candidate equilibrium.
pub fn classify(x_star: f64, p: &SystemParams) -> FixedPoint {
    let a = p.alpha;
    let trace = -p.gamma;
    let det = p.k
        + (a as f64)
            * (p.c2 / (x_star - p.x0).powi(a + 1) - p.c1 / (x_star + p.x0).powi(a + 1));
    let tol = DEGENERACY_BAND * p.k;
    let kind = if det < -tol {
        StabilityKind::Saddle
    } else if det.abs() <= tol {
        StabilityKind::Degenerate
    } else if trace == 0.0 {
        StabilityKind::Center
    } else {
        let disc = trace * trace - 4.0 * det;
        match (trace < 0.0, disc < 0.0) {
            (true, true) => StabilityKind::StableSpiral,
            (true, false) => StabilityKind::StableNode,
            (false, true) => StabilityKind::UnstableSpiral,
            (false, false) => StabilityKind::UnstableNode,
        }
    };
    FixedPoint { x: x_star, trace, det, kind }
}

/// Symmetric center/saddle trade-off: the origin stays a center while
/// c/k < x0^5 / 8.
pub fn critical_check(p: &SystemParams) -> Result<CriticalCheck, Error> {
    if p.c1 != p.c2 {
        return Err(Error::NotSymmetric { c1: p.c1, c2: p.c2 });
    }
    if p.k <= 0.0 {
        return Err(Error::InvalidParams(
            "critical ratio needs a positive spring constant".into(),
        ));
    }
    let ratio = p.c1 / p.k;
    let critical_ratio = p.x0.powi(5) / 8.0;
    let regime = if (ratio - critical_ratio).abs() < CRITICAL_BAND * critical_ratio {
        Regime::Critical
    } else if ratio < critical_ratio {
        Regime::Oscillatory
    } else {
        Regime::Collapsed
    };
    Ok(CriticalCheck { ratio, critical_ratio, regime })
}

/// Scans the gap for sign changes of the residual and bisects each bracket.
///
/// Uses [`DEFAULT_SCAN_POINTS`] grid points; see
/// [`find_fixed_points_with_grid`] to control the density.
pub fn find_fixed_points(p: &SystemParams, tol_root: f64) -> Result<EquilibriumReport, Error> {
    find_fixed_points_with_grid(p, tol_root, DEFAULT_SCAN_POINTS)
}

pub fn find_fixed_points_with_grid(
    p: &SystemParams,
    tol_root: f64,
    grid_points: usize,
) -> Result<EquilibriumReport, Error> {
    p.validate()?;
    if !(tol_root > 0.0 && tol_root.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "tol_root = {tol_root} must be positive"
        )));
    }
    if grid_points < 8 {
        return Err(Error::InvalidParams(format!(
            "grid_points = {grid_points} is too coarse to scan"
        )));
    }

    let lo = -p.x0 + p.eps_sing;
    let hi = p.x0 - p.eps_sing;
    let n = grid_points;
    let step = (hi - lo) / (n - 1) as f64;

    // Residual scale for the refinement stop; see the bisection loop.
    let res_tol = if p.k > 0.0 {
        tol_root * p.k * p.x0.powi(2 * p.alpha + 1)
    } else {
        tol_root * (p.c1.abs() + p.c2.abs()).max(f64::MIN_POSITIVE) * p.x0.powi(p.alpha)
    };

    let mut roots: Vec<f64> = Vec::new();
    let mut prev_x = lo;
    let mut prev_r = equilibrium_residual(lo, p);
    for i in 1..n {
        let x = lo + step * i as f64;
        let r = equilibrium_residual(x, p);
        if prev_r == 0.0 {
            roots.push(prev_x);
        } else if prev_r * r < 0.0 {
            roots.push(bisect(p, prev_x, x, prev_r, tol_root, res_tol));
        }
        prev_x = x;
        prev_r = r;
    }
    if prev_r == 0.0 {
        roots.push(prev_x);
    }

    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots.dedup_by(|a, b| (*a - *b).abs() < 2.0 * tol_root);

    let fixed_points: Vec<FixedPoint> = roots.iter().map(|&x| classify(x, p)).collect();

    let criticality = if p.c1 == p.c2 && p.k > 0.0 {
        Some(critical_check(p)?)
    } else {
        None
    };

    // For symmetric gains the regime predicts the root count exactly, which
    // catches a scan grid too coarse to bracket a saddle.
    if let Some(check) = &criticality {
        let expected = match check.regime {
            // Saddles only exist when the magnets actually pull.
            Regime::Oscillatory => Some(if p.c1 > 0.0 { 3 } else { 1 }),
            Regime::Collapsed => Some(1),
            Regime::Critical => None,
        };
        if let Some(expected) = expected {
            if fixed_points.len() != expected {
                return Err(Error::IncompleteScan { found: fixed_points.len(), expected });
            }
        }
    }

    Ok(EquilibriumReport { fixed_points, criticality })
}

/// Bisection with a sign-preserving bracket. Stops once the bracket is
/// narrower than `tol` and some evaluated point has a residual below
/// `res_tol`, and returns that point, so reported roots satisfy both the
/// position and the residual bound.
fn bisect(p: &SystemParams, mut a: f64, mut b: f64, mut ra: f64, tol: f64, res_tol: f64) -> f64 {
    let mut best = (0.5 * (a + b), f64::INFINITY);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid == a || mid == b {
            break; // bracket collapsed to adjacent floats
        }
        let rm = equilibrium_residual(mid, p);
        if rm.abs() < best.1 {
            best = (mid, rm.abs());
        }
        if ra * rm <= 0.0 {
            b = mid;
        } else {
            a = mid;
            ra = rm;
        }
        if (b - a) < tol && best.1 <= res_tol {
            break;
        }
    }
    best.0
}

/// One row of the magnet-imbalance sweep.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AsymmetryRow {
    /// Gain imbalance delta_c / c applied as c1 = c(1 - d/2), c2 = c(1 + d/2).
    pub delta: f64,
    /// Center position, m. Moves toward the stronger magnet.
    pub center: f64,
    /// Saddle on the weaker (negative) side, m.
    pub saddle_neg: f64,
    /// Saddle on the stronger (positive) side, m.
    pub saddle_pos: f64,
}

/// Splits a symmetric gain c into c(1 -/+ delta/2) pairs and tracks how the
/// three fixed points move.
pub fn sweep_asymmetry(p: &SystemParams, deltas: &[f64]) -> Result<Vec<AsymmetryRow>, Error> {
    if p.c1 != p.c2 {
        return Err(Error::NotSymmetric { c1: p.c1, c2: p.c2 });
    }
    if p.c1 <= 0.0 {
        return Err(Error::InvalidParams(
            "asymmetry sweep needs attracting magnets (c > 0)".into(),
        ));
    }
    let c = p.c1;
    let mut rows = Vec::with_capacity(deltas.len());
    for &d in deltas {
        if !(0.0..2.0).contains(&d) {
            return Err(Error::InvalidParams(format!(
                "delta = {d} must lie in [0, 2) to keep both gains positive"
            )));
        }
        let mut q = *p;
        q.c1 = c * (1.0 - 0.5 * d);
        q.c2 = c * (1.0 + 0.5 * d);
        let report = find_fixed_points(&q, DEFAULT_ROOT_TOL)?;
        if report.fixed_points.len() != 3 {
            return Err(Error::IncompleteScan {
                found: report.fixed_points.len(),
                expected: 3,
            });
        }
        let fps = &report.fixed_points;
        let ok_kinds = fps[0].kind == StabilityKind::Saddle
            && fps[2].kind == StabilityKind::Saddle
            && fps[1].kind != StabilityKind::Saddle;
        if !ok_kinds {
            return Err(Error::InvalidParams(format!(
                "imbalance {d} broke the saddle-center-saddle structure"
            )));
        }
        rows.push(AsymmetryRow {
            delta: d,
            center: fps[1].x,
            saddle_neg: fps[0].x,
            saddle_pos: fps[2].x,
        });
    }
    Ok(rows)
}
