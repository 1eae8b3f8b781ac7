//! The averaged map `U(y) = E_μ|y − θ|`, its landmarks, chord bounds and
//! the Foster–Lyapunov drift check with `V(y) = y`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{open_uniform, EmpiricalMeasure, Measure1D};
use crate::orbits::apply_map;
use crate::par;

/// Bisection stops once the bracket is narrower than this.
pub const BISECT_TOL: f64 = 1e-10;
/// Slack allowed in `U(y) ≤ ℓ(y)`.
pub const CHORD_SLACK: f64 = 1e-9;

/// `P(x, (lo, hi)) = μ{θ : |x − θ| ∈ (lo, hi)}`.
pub fn transition_prob<M: Measure1D + ?Sized>(mu: &M, x: f64, lo: f64, hi: f64) -> Result<f64> {
    if !(lo >= 0.0 && lo < hi) {
        return Err(Error::Domain(format!("need 0 <= lo < hi, got ({lo}, {hi})")));
    }
    // θ ∈ (x − hi, x − lo) ∪ (x + lo, x + hi); the pieces are disjoint
    Ok(mu.mass_open(x - hi, x - lo) + mu.mass_open(x + lo, x + hi))
}

/// `U(y) = y(2m(y) − 1) + E − 2Y(y)` with the half-open `m`.
pub fn drift_u<M: Measure1D + ?Sized>(mu: &M, y: f64) -> Result<f64> {
    let e = mu.mean()?;
    if !e.is_finite() {
        return Err(Error::NonFiniteMoment(format!("mean {e}")));
    }
    Ok(u_with_mean(mu, e, y))
}

fn u_with_mean<M: Measure1D + ?Sized>(mu: &M, e: f64, y: f64) -> f64 {
    let y = y.max(0.0);
    let big_y = mu.partial_mean(y).expect("mean already checked");
    y * (2.0 * mu.cdf_open(y) - 1.0) + e - 2.0 * big_y
}

fn reject_trivial<M: Measure1D + ?Sized>(mu: &M) -> Result<f64> {
    if mu.is_singleton() {
        return Err(Error::SingletonSupport(mu.support_max()));
    }
    let e = mu.mean()?;
    if !e.is_finite() {
        return Err(Error::NonFiniteMoment(format!("mean {e}")));
    }
    Ok(e)
}

/// Sampled `U` with its landmarks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftProfile {
    pub grid: Vec<f64>,
    pub u_values: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    /// Fixed point `U(y0) = y0`.
    pub y0: f64,
    pub alpha_star: f64,
    /// Second solution of `U(y) = E`, equal to `(1 + alpha_star) E`.
    pub y_star: f64,
}

impl DriftProfile {
    /// Index of the smallest sampled `U`.
    pub fn argmin(&self) -> usize {
        self.u_values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0)
    }

    /// Smallest second difference of the sampled `U`.
    pub fn min_second_difference(&self) -> f64 {
        self.u_values.windows(3).map(|w| w[0] - 2.0 * w[1] + w[2]).fold(f64::INFINITY, f64::min)
    }
}

/// Finds the switch point of a predicate that is true on `[lo, s)` and false
/// on `[s, hi]`; `ok(lo)` must hold and `ok(hi)` must fail.
fn bisect(mut lo: f64, mut hi: f64, ok: impl Fn(f64) -> bool) -> f64 {
    while hi - lo > BISECT_TOL {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Samples `U` on `n` equispaced points of `[0, y_max]` and locates `y0`,
/// `y*` and `α*` by bisection.
pub fn drift_profile<M: Measure1D + Sync + ?Sized>(mu: &M, y_max: f64, n: usize) -> Result<DriftProfile> {
    let e = reject_trivial(mu)?;
    if n < 64 {
        return Err(Error::Domain(format!("profile needs at least 64 points, got {n}")));
    }
    let median = mu.quantile(0.5)?;
    let u = |y: f64| u_with_mean(mu, e, y);
    if !(y_max > median && u(y_max) - y_max < 0.0) {
        return Err(Error::NoSignChange { what: "U(y) - y", lo: 0.0, hi: y_max });
    }
    let y0 = bisect(0.0, y_max, |y| u(y) - y > 0.0);
    if !(u(y_max) - e > 0.0) {
        return Err(Error::NoSignChange { what: "U(y) - E", lo: median, hi: y_max });
    }
    let y_star = bisect(median, y_max, |y| u(y) - e <= 0.0);
    let grid: Vec<f64> = (0..n).map(|k| k as f64 * y_max / (n - 1) as f64).collect();
    let u_values = par::map_slice(&grid, |&y| u(y));
    Ok(DriftProfile { grid, u_values, mean: e, median, y0, alpha_star: y_star / e - 1.0, y_star })
}

/// `y_α`: the solution of `U(y) = y − αE` for `α ∈ [−1, 1)`.
pub fn y_alpha<M: Measure1D + ?Sized>(mu: &M, alpha: f64) -> Result<f64> {
    let e = reject_trivial(mu)?;
    if !(-1.0..1.0).contains(&alpha) {
        return Err(Error::Domain(format!("alpha {alpha} must lie in [-1, 1)")));
    }
    let g = |y: f64| u_with_mean(mu, e, y) - y + alpha * e;
    if g(0.0) <= 0.0 {
        return Ok(0.0);
    }
    let mut hi = e.max(1.0);
    for _ in 0..64 {
        if g(hi) <= 0.0 {
            return Ok(bisect(0.0, hi, |y| g(y) > 0.0));
        }
        hi *= 2.0;
    }
    Err(Error::NoSignChange { what: "U(y) - y + alpha E", lo: 0.0, hi })
}

/// Result of [`chord_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChordBound {
    pub ell: f64,
    pub holds: bool,
    pub y_alpha: f64,
    /// `+∞` when `beta = 1`.
    pub y_beta: f64,
    pub u: f64,
}

/// Evaluates the chord `ℓ_{α,β}` between `y_α` and `y_β` at `y` and checks
/// `U(y) ≤ ℓ(y)`. Requires `−1 ≤ α < β ≤ 1`.
pub fn chord_bound<M: Measure1D + ?Sized>(mu: &M, alpha: f64, beta: f64, y: f64) -> Result<ChordBound> {
    if !(-1.0 <= alpha && alpha < beta && beta <= 1.0) {
        return Err(Error::Domain(format!("need -1 <= alpha < beta <= 1, got {alpha}, {beta}")));
    }
    let e = reject_trivial(mu)?;
    let ya = y_alpha(mu, alpha)?;
    let yb = if beta == 1.0 { f64::INFINITY } else { y_alpha(mu, beta)? };
    // endpoints come from bisection, so allow one bracket width of slack
    if y < ya - BISECT_TOL || y > yb + BISECT_TOL {
        return Err(Error::Domain(format!("y = {y} outside [{ya}, {yb}]")));
    }
    let ell = if yb.is_infinite() { y - alpha * e } else { y - (alpha * (yb - y) + beta * (y - ya)) / (yb - ya) * e };
    let u = u_with_mean(mu, e, y);
    Ok(ChordBound { ell, holds: u <= ell + CHORD_SLACK, y_alpha: ya, y_beta: yb, u })
}

/// Outcome of [`verify_drift_condition`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub passed: bool,
    pub eps: f64,
    pub c_hi: f64,
    /// `max_{y ∈ [0, c_hi]} U(y) − y + eps`.
    pub b: f64,
    /// First `y > c_hi` (in grid order) with `U(y) > y − eps`.
    pub violation: Option<f64>,
    pub checked: usize,
}

/// Points sampled on each side of `c_hi`.
const DRIFT_GRID: usize = 20_001;

/// Checks `U(y) ≤ y − ε` for `y > c_hi` and computes the constant `b` on
/// `C = [0, c_hi]`.
///
/// `U(y) − y` has slope `2m(y) − 2 ≤ 0`, so the check right of `c_hi` is
/// decided near `c_hi`; the grid out to `c_hi + max(50E, 10 c_hi)` is a
/// numerical guard. Since `U(y) ≥ y − E`, any `ε > E` fails.
pub fn verify_drift_condition<M: Measure1D + Sync + ?Sized>(mu: &M, eps: f64, c_hi: f64) -> Result<DriftReport> {
    let e = reject_trivial(mu)?;
    if !(eps > 0.0 && c_hi >= 0.0) {
        return Err(Error::Domain(format!("need eps > 0 and c_hi >= 0, got {eps}, {c_hi}")));
    }
    let u = |y: f64| u_with_mean(mu, e, y);
    let inner: Vec<f64> = par::map_range(DRIFT_GRID, |k| {
        u(c_hi * k as f64 / (DRIFT_GRID - 1) as f64) - c_hi * k as f64 / (DRIFT_GRID - 1) as f64
    });
    let b = inner.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v)) + eps;
    let span = (50.0 * e).max(10.0 * c_hi).max(1.0);
    let outer: Vec<(f64, bool)> = par::map_range(DRIFT_GRID, |k| {
        let y = c_hi + span * k as f64 / (DRIFT_GRID - 1) as f64;
        (y, u(y) <= y - eps)
    });
    let violation = outer.iter().find(|(_, ok)| !ok).map(|&(y, _)| y);
    Ok(DriftReport {
        passed: violation.is_none() && b.is_finite(),
        eps,
        c_hi,
        b,
        violation,
        checked: inner.len() + outer.len(),
    })
}

/// Runs the chain from `x0`, drops `burn_in` steps and returns the next `n`
/// states as an empirical measure.
pub fn invariant_estimate<M: Measure1D + ?Sized>(
    mu: &M,
    x0: f64,
    burn_in: usize,
    n: usize,
    seed: u64,
) -> Result<EmpiricalMeasure> {
    reject_trivial(mu)?;
    if n < 1000 {
        return Err(Error::Domain(format!("invariant estimate needs n >= 1000, got {n}")));
    }
    if !(x0.is_finite() && x0 >= 0.0) {
        return Err(Error::Domain(format!("start point {x0} must be finite and nonnegative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = x0;
    for _ in 0..burn_in {
        x = apply_map(x, mu.quantile(open_uniform(&mut rng))?);
    }
    let mut states = Vec::with_capacity(n);
    for _ in 0..n {
        x = apply_map(x, mu.quantile(open_uniform(&mut rng))?);
        states.push(x);
    }
    EmpiricalMeasure::new(states)
}

/// Independent chains, one per `(x0, seed)` pair, run concurrently.
pub fn invariant_estimates<M: Measure1D + Sync + ?Sized>(
    mu: &M,
    starts: &[(f64, u64)],
    burn_in: usize,
    n: usize,
) -> Result<Vec<EmpiricalMeasure>> {
    par::map_slice(starts, |&(x0, seed)| invariant_estimate(mu, x0, burn_in, n, seed)).into_iter().collect()
}
