//! Pointwise dynamics: random orbits, exhaustive reach sets, circle
//! rotations, ε-covers and the lattice test for finite translation sets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{open_uniform, Measure1D};
use crate::par;

/// Default cap on the number of points a reach set may hold.
pub const REACH_CAP: usize = 1_000_000;
/// Hard ceiling on continued-fraction denominators in [`lattice_test`].
pub const MAX_DENOMINATOR: u64 = 1_000_000;

/// `T_θ(x) = |x − θ|`.
#[inline]
pub fn apply_map(x: f64, theta: f64) -> f64 {
    (x - theta).abs()
}

/// A simulated trajectory together with the translations that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitRecord {
    pub start: f64,
    pub points: Vec<f64>,
    pub seed: u64,
    pub theta_draws: Vec<f64>,
}

/// Simulates `n` steps from `x0` with θ drawn i.i.d. from `mu`.
pub fn random_orbit<M: Measure1D + ?Sized>(x0: f64, mu: &M, n: usize, seed: u64) -> Result<OrbitRecord> {
    if !(x0.is_finite() && x0 >= 0.0) {
        return Err(Error::Domain(format!("start point {x0} must be finite and nonnegative")));
    }
    if n == 0 {
        return Err(Error::Domain("orbit length must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n + 1);
    let mut theta_draws = Vec::with_capacity(n);
    let mut x = x0;
    points.push(x);
    for _ in 0..n {
        let theta = mu.quantile(open_uniform(&mut rng))?;
        x = apply_map(x, theta);
        points.push(x);
        theta_draws.push(theta);
    }
    Ok(OrbitRecord { start: x0, points, seed, theta_draws })
}

/// Union of the first `depth` levels of `S^{k+1} = { |y − t| : t ∈ thetas, y ∈ S^k }`,
/// starting from `{x0}`. Points closer than `tol` are identified.
pub fn reach_set(x0: f64, thetas: &[f64], depth: usize, tol: f64) -> Result<Vec<f64>> {
    reach_set_capped(x0, thetas, depth, tol, REACH_CAP)
}

pub fn reach_set_capped(x0: f64, thetas: &[f64], depth: usize, tol: f64, cap: usize) -> Result<Vec<f64>> {
    if thetas.is_empty() {
        return Err(Error::Domain("reach set needs at least one translation".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance {tol} must be positive")));
    }
    let mut all = vec![x0];
    let mut frontier = vec![x0];
    for _ in 0..depth {
        let mut candidates: Vec<f64> =
            frontier.iter().flat_map(|&y| thetas.iter().map(move |&t| apply_map(y, t))).collect();
        candidates.sort_by(f64::total_cmp);
        let mut fresh: Vec<f64> = Vec::new();
        for c in candidates {
            if fresh.last().is_some_and(|&f| c - f < tol) || has_neighbor(&all, c, tol) {
                continue;
            }
            fresh.push(c);
        }
        if fresh.is_empty() {
            break;
        }
        if all.len() + fresh.len() > cap {
            return Err(Error::Explosion { what: "reach set", cap });
        }
        all = merge_sorted(&all, &fresh);
        frontier = fresh;
    }
    Ok(all)
}

fn has_neighbor(sorted: &[f64], x: f64, tol: f64) -> bool {
    let i = sorted.partition_point(|&s| s < x);
    (i < sorted.len() && sorted[i] - x < tol) || (i > 0 && x - sorted[i - 1] < tol)
}

fn merge_sorted(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// First `n` points of the circle rotation `x ↦ x + r mod 1`.
pub fn rotation_orbit(x0: f64, r: f64, n: usize) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&x0) {
        return Err(Error::Domain(format!("start {x0} must lie in [0, 1)")));
    }
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::Domain(format!("rotation {r} must lie in (0, 1)")));
    }
    let mut out = Vec::with_capacity(n);
    let mut x = x0;
    for _ in 0..n {
        out.push(x);
        x = (x + r).fract();
    }
    Ok(out)
}

/// Whether every point of the pitch-`eps/2` test grid on `[lo, hi)` lies
/// within `eps` of some point.
pub fn epsilon_cover(points: &[f64], lo: f64, hi: f64, eps: f64) -> Result<bool> {
    if !(eps > 0.0 && lo < hi) {
        return Err(Error::Domain(format!("need eps > 0 and lo < hi, got eps={eps}, [{lo}, {hi})")));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.is_empty() {
        return Ok(false);
    }
    let pitch = eps / 2.0;
    let steps = ((hi - lo) / pitch).ceil() as usize;
    Ok((0..steps).map(|k| lo + k as f64 * pitch).filter(|&b| b < hi).all(|b| {
        let i = sorted.partition_point(|&s| s < b);
        let right = sorted.get(i).map_or(f64::INFINITY, |s| s - b);
        let left = if i > 0 { b - sorted[i - 1] } else { f64::INFINITY };
        right.min(left) <= eps
    }))
}

/// Outcome of [`lattice_test`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeResult {
    pub is_lattice: bool,
    /// Lattice step `w` (all inputs lie on `wℤ`) when `is_lattice`.
    pub step: Option<f64>,
}

/// Default denominator bound for a tolerance: with denominators up to
/// `q`, every real is approximable to about `1/q²`, so the bound must stay
/// well below `tol^{-1/2}` for irrational ratios to be told apart.
pub fn default_max_denominator(tol: f64) -> u64 {
    let q = (1.0 / (10.0 * tol.sqrt())).floor();
    if q.is_finite() {
        (q as u64).clamp(1, MAX_DENOMINATOR)
    } else {
        MAX_DENOMINATOR
    }
}

/// Approximate real gcd of positive reals by continued-fraction
/// reconstruction of the ratios to the smallest one.
pub fn lattice_test(thetas: &[f64], tol: f64) -> Result<LatticeResult> {
    lattice_test_with(thetas, tol, default_max_denominator(tol))
}

pub fn lattice_test_with(thetas: &[f64], tol: f64, max_den: u64) -> Result<LatticeResult> {
    if thetas.is_empty() {
        return Err(Error::Domain("lattice test needs at least one value".into()));
    }
    if let Some(t) = thetas.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::Domain(format!("value {t} must be positive")));
    }
    let no = LatticeResult { is_lattice: false, step: None };
    let reference = thetas.iter().copied().fold(f64::INFINITY, f64::min);
    let mut fracs = Vec::with_capacity(thetas.len());
    for &t in thetas {
        let r = t / reference;
        match best_rational(r, tol * r.max(1.0), max_den) {
            Some(pq) => fracs.push(pq),
            None => return Ok(no),
        }
    }
    let mut l: u128 = 1;
    for &(_, q) in &fracs {
        l = lcm(l, q as u128);
        if l > max_den as u128 * max_den as u128 {
            return Ok(no);
        }
    }
    let g = fracs.iter().fold(0u128, |g, &(p, q)| gcd(g, p as u128 * (l / q as u128)));
    let w = reference * g as f64 / l as f64;
    let on = thetas.iter().all(|&t| {
        let k = (t / w).round();
        (t - k * w).abs() <= tol * t.max(1.0)
    });
    Ok(if on { LatticeResult { is_lattice: true, step: Some(w) } } else { no })
}

/// First continued-fraction convergent `p/q` of `x` with `|x − p/q| ≤ tol`
/// and `q ≤ max_den`.
fn best_rational(x: f64, tol: f64, max_den: u64) -> Option<(u64, u64)> {
    let (mut p0, mut q0, mut p1, mut q1) = (0u128, 1u128, 1u128, 0u128);
    let mut rem = x;
    for _ in 0..64 {
        let a = rem.floor();
        if a > 1e15 {
            return None;
        }
        let a_int = a as u128;
        let (p2, q2) = (a_int * p1 + p0, a_int * q1 + q0);
        if q2 > max_den as u128 {
            return None;
        }
        if (x - p2 as f64 / q2 as f64).abs() <= tol {
            return Some((p2 as u64, q2 as u64));
        }
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        let frac = rem - a;
        if frac <= 0.0 {
            return None;
        }
        rem = 1.0 / frac;
    }
    None
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: u128, b: u128) -> u128 {
    a / gcd(a, b) * b
}

/// Whether every point lies within `tol` of `(x0 + wℤ) ∪ (−x0 + wℤ)`.
pub fn on_lattice(points: &[f64], x0: f64, w: f64, tol: f64) -> bool {
    let near = |y: f64, shift: f64| {
        let k = ((y - shift) / w).round();
        (y - shift - k * w).abs() <= tol
    };
    points.iter().all(|&y| near(y, x0) || near(y, -x0))
}

/// Monte Carlo estimate of the probability that the orbit from `x0` visits
/// the open interval `(lo, hi)` within `n_max` steps (step 0 included).
///
/// Trial `i` uses its own ChaCha stream `i` of `seed`, so the estimate does
/// not depend on the number of worker threads.
pub fn reach_probability<M: Measure1D + Sync + ?Sized>(
    x0: f64,
    mu: &M,
    lo: f64,
    hi: f64,
    n_max: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if !(lo < hi) || trials == 0 {
        return Err(Error::Domain(format!("need lo < hi and trials >= 1, got ({lo}, {hi}), {trials}")));
    }
    let hits = par::map_range(trials, |i| -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut x = x0;
        if lo < x && x < hi {
            return Ok(1.0);
        }
        for _ in 0..n_max {
            x = apply_map(x, mu.quantile(open_uniform(&mut rng))?);
            if lo < x && x < hi {
                return Ok(1.0);
            }
        }
        Ok(0.0)
    });
    let hits = hits.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(hits.iter().sum::<f64>() / trials as f64)
}
