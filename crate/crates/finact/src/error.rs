use thiserror::Error;

/// Errors raised by the library.
///
/// Anything that terminates a simulation through normal physics (capture by a
/// magnet, step-size collapse next to the singularity) is reported as a
/// trajectory event instead, not as an error.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("position {x:.6e} m is within the guard distance {guard:.1e} m of the magnet at {magnet:.6e} m")]
    Singularity { x: f64, magnet: f64, guard: f64 },

    #[error("energy is only defined for the quartic force law, got alpha = {alpha}")]
    UnsupportedAlpha { alpha: i32 },

    #[error("initial position {x:.6e} m lies outside the open gap (-{x0:.6e}, {x0:.6e}) m")]
    OutsideGap { x: f64, x0: f64 },

    #[error("root scan found {found} fixed points where the regime predicts {expected}; the grid is too coarse")]
    IncompleteScan { found: usize, expected: usize },

    #[error("operation requires symmetric magnet gains, got c1 = {c1:.6e}, c2 = {c2:.6e}")]
    NotSymmetric { c1: f64, c2: f64 },

    #[error("trajectory is not uniformly sampled (max deviation {deviation:.3e} s from dt = {dt:.6e} s)")]
    NonUniformSampling { dt: f64, deviation: f64 },

    #[error("spectrum carries no positive power")]
    EmptySpectrum,

    #[error("found {found} sign changes, need at least {need} to estimate a frequency")]
    TooFewCrossings { found: usize, need: usize },

    #[error("amplitude {amplitude:.6e} m is outside the oscillatory basin (bound {bound:.6e} m)")]
    OutOfBasin { amplitude: f64, bound: f64 },

    #[error("value {value:.6e} is outside the covered range [{lo:.6e}, {hi:.6e}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("frequency table entries must decrease with amplitude; entry {index} does not")]
    TableNotMonotone { index: usize },

    #[error("controller stepped backwards in time: t = {t:.6e} s after {prev:.6e} s")]
    NonIncreasingTime { t: f64, prev: f64 },

    #[error("trajectory too short: {len} samples, need at least {need}")]
    TooShort { len: usize, need: usize },
}
