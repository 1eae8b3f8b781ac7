//! The self-map `μ ↦ T*_μ μ`: exact lattice fixed points, generating
//! function diagnostics and the continuous self-correlation.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{AtomicMeasure, GridMeasure, Measure, Measure1D, WEIGHT_SUM_TOL};
use crate::metric::wasserstein_p;
use crate::orbits::lattice_test;
use crate::par;
use crate::transfer::PushOptions;

/// Largest truncation mass [`hat_discrete`] accepts.
pub const TRUNCATION_LIMIT: f64 = 1e-10;
/// Slack for points just outside the closed unit disk.
const DISK_SLACK: f64 = 1e-12;

/// A probability mass function on `{0, 1, …, N}`, possibly a truncation of
/// one with infinite support (`tail_mass` is what was cut off).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PmfRepr", into = "PmfRepr")]
pub struct LatticePMF {
    probs: Vec<f64>,
    tail_mass: f64,
}

#[derive(Serialize, Deserialize)]
struct PmfRepr {
    probs: Vec<f64>,
    #[serde(default, skip_serializing_if = "is_zero")]
    tail_mass: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl TryFrom<PmfRepr> for LatticePMF {
    type Error = Error;

    fn try_from(r: PmfRepr) -> Result<Self> {
        LatticePMF::truncated(r.probs, r.tail_mass)
    }
}

impl From<LatticePMF> for PmfRepr {
    fn from(p: LatticePMF) -> Self {
        PmfRepr { probs: p.probs, tail_mass: p.tail_mass }
    }
}

impl LatticePMF {
    /// A complete PMF; the probabilities must sum to one within 1e−12.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        Self::truncated(probs, 0.0)
    }

    /// A PMF missing `tail_mass` beyond its last index.
    pub fn truncated(probs: Vec<f64>, tail_mass: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidMeasure("PMF needs at least one entry".into()));
        }
        if let Some(v) = probs.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidMeasure(format!("probability {v} is negative or not finite")));
        }
        if !(tail_mass.is_finite() && tail_mass >= 0.0) {
            return Err(Error::InvalidMeasure(format!("tail mass {tail_mass} is negative")));
        }
        let total = crate::kahan_sum(probs.iter().copied()) + tail_mass;
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidMeasure(format!("probabilities sum to {total}")));
        }
        Ok(LatticePMF { probs, tail_mass })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Largest index carrying positive mass.
    pub fn support_end(&self) -> usize {
        self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    pub fn p(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    /// `‖self − other‖₁` over the stored entries.
    pub fn l1_distance(&self, other: &LatticePMF) -> f64 {
        let n = self.probs.len().max(other.probs.len());
        crate::kahan_sum((0..n).map(|k| (self.p(k) - other.p(k)).abs()))
    }

    /// The measure `Σ p_k δ_{k w}`.
    pub fn to_atomic(&self, w: f64) -> Result<AtomicMeasure> {
        let atoms: Vec<(f64, f64)> =
            self.probs.iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(k, &p)| (k as f64 * w, p)).collect();
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        AtomicMeasure::assemble(atoms.into_iter().map(|(x, p)| (x, p / total)).collect())
    }

    /// Rescales a co-rational atomic measure onto the unit lattice. Returns
    /// the PMF and the lattice step.
    pub fn from_atomic(m: &AtomicMeasure, tol: f64) -> Result<(Self, f64)> {
        let positive: Vec<f64> = m.locations().filter(|&x| x > 0.0).collect();
        let w = if positive.is_empty() {
            1.0
        } else {
            let r = lattice_test(&positive, tol)?;
            r.step.ok_or_else(|| Error::NotLattice(format!("{} support points", positive.len())))?
        };
        let idx: Vec<usize> = m.locations().map(|x| (x / w).round() as usize).collect();
        let mut probs = vec![0.0; idx.iter().max().copied().unwrap_or(0) + 1];
        for (&k, &(_, p)) in idx.iter().zip(m.atoms()) {
            probs[k] += p;
        }
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        Ok((LatticePMF::new(probs)?, w))
    }
}

/// `p̂_0 = Σ p_n²`, `p̂_k = 2 Σ_n p_n p_{n+k}`, by exact double sums.
///
/// Entries past `cutoff` are dropped and must weigh at most
/// [`TRUNCATION_LIMIT`]. The output's `tail_mass` also accounts for mass the
/// input was already missing.
pub fn hat_discrete(p: &LatticePMF, cutoff: usize) -> Result<LatticePMF> {
    let n = p.probs.len();
    let probs = &p.probs;
    let full = par::map_range(n, |k| {
        let s = crate::kahan_sum((0..n - k).map(|i| probs[i] * probs[i + k]));
        if k == 0 {
            s
        } else {
            2.0 * s
        }
    });
    let keep = (cutoff + 1).min(n);
    let dropped = crate::kahan_sum(full[keep..].iter().copied());
    if dropped > TRUNCATION_LIMIT {
        return Err(Error::Truncation { mass: dropped, limit: TRUNCATION_LIMIT });
    }
    let t = p.tail_mass;
    // mass of pairs involving at least one missing point
    let missing = 2.0 * t - t * t;
    let mut out = full;
    out.truncate(keep);
    Ok(LatticePMF { probs: out, tail_mass: missing + dropped })
}

/// `p_0 = (1 − q)/2`, `p_k = ((1 − q²)/2) q^{k−1}` for `k = 1..=cutoff`,
/// without renormalization.
pub fn geometric_family(q: f64, cutoff: usize) -> Result<LatticePMF> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::Domain(format!("q = {q} must lie in [0, 1)")));
    }
    let mut probs = Vec::with_capacity(cutoff + 1);
    probs.push((1.0 - q) / 2.0);
    let mut term = (1.0 - q * q) / 2.0;
    for _ in 1..=cutoff {
        probs.push(term);
        term *= q;
    }
    let tail = if cutoff == 0 { (1.0 + q) / 2.0 } else { (1.0 + q) / 2.0 * q.powi(cutoff as i32) };
    LatticePMF::truncated(probs, tail)
}

/// Coefficients of a probability generating function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenFun {
    pub coeffs: Vec<f64>,
}

impl GenFun {
    pub fn new(p: &LatticePMF) -> Self {
        GenFun { coeffs: p.probs.clone() }
    }

    /// `f(z) = Σ p_n zⁿ` by Horner's rule.
    pub fn f(&self, z: Complex64) -> Complex64 {
        self.coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    /// `g(z) = 2f(z) − 1`.
    pub fn g(&self, z: Complex64) -> Complex64 {
        self.f(z) * 2.0 - 1.0
    }
}

/// `(f(z), g(z))` for `|z| ≤ 1`.
pub fn genfun_eval(p: &LatticePMF, z: Complex64) -> Result<(Complex64, Complex64)> {
    if z.norm() > 1.0 + DISK_SLACK {
        return Err(Error::Domain(format!("|z| = {} lies outside the closed unit disk", z.norm())));
    }
    let gf = GenFun::new(p);
    let f = gf.f(z);
    Ok((f, f * 2.0 - 1.0))
}

fn circle(m: usize) -> impl Iterator<Item = (f64, Complex64)> {
    (0..m).map(move |k| {
        let phi = 2.0 * PI * k as f64 / m as f64;
        (phi, Complex64::from_polar(1.0, phi))
    })
}

/// `(φ, g(e^{iφ}))` on `m` equispaced circle points.
pub fn circle_samples(p: &LatticePMF, m: usize) -> Vec<(f64, Complex64)> {
    let gf = GenFun::new(p);
    circle(m).map(|(phi, z)| (phi, gf.g(z))).collect()
}

/// Result of [`boundary_modulus_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCheck {
    /// `max ||g(e^{iφ})| − 1|`.
    pub max_deviation: f64,
    /// `tol` plus twice the missing mass (|g| moves by at most that much).
    pub budget: f64,
    pub passed: bool,
}

/// Checks `|g| = 1` on `m ≥ 8` equispaced points of the unit circle.
pub fn boundary_modulus_check(p: &LatticePMF, m: usize, tol: f64) -> Result<BoundaryCheck> {
    if m < 8 {
        return Err(Error::Domain(format!("need at least 8 circle samples, got {m}")));
    }
    let max_deviation = circle_samples(p, m).into_iter().map(|(_, g)| (g.norm() - 1.0).abs()).fold(0.0, f64::max);
    let budget = tol + 2.0 * p.tail_mass;
    Ok(BoundaryCheck { max_deviation, budget, passed: max_deviation <= budget })
}

/// `max |g(z) − (z − q)/(1 − qz)|` over `m` circle points.
pub fn mobius_compare(p: &LatticePMF, q: f64, m: usize) -> Result<f64> {
    if !(-1.0 < q && q < 1.0) || m == 0 {
        return Err(Error::Domain(format!("need |q| < 1 and m > 0, got q = {q}, m = {m}")));
    }
    let gf = GenFun::new(p);
    Ok(circle(m).map(|(_, z)| (gf.g(z) - (z - q) / (1.0 - z * q)).norm()).fold(0.0, f64::max))
}

/// `x ↦ 2∫ μ(t + x) μ(t) dt` on μ's grid.
///
/// With midpoint values `μ_j`, cell `i` gets `h Σ_j μ_j (μ_{i+j} + μ_{i+j+1})`,
/// the cell average of the correlation for piecewise-constant μ.
pub fn continuous_selfhat(mu: &GridMeasure) -> Result<GridMeasure> {
    mu.check_tail()?;
    let n = mu.n();
    let h = mu.h();
    let v = mu.values();
    let at = |k: usize| if k < n { v[k] } else { 0.0 };
    let values = par::map_range(n, |i| h * crate::kahan_sum((0..n - i).map(|j| v[j] * (at(i + j) + at(i + j + 1)))));
    let t = mu.tail_mass();
    GridMeasure::new(mu.x_max(), values, 2.0 * t - t * t)
}

/// `f(z) = ∫ e^{zt} μ(dt)` for a grid, exact on each cell, tail at `x_max`.
pub fn laplace_f(mu: &GridMeasure, z: Complex64) -> Complex64 {
    let h = mu.h();
    let body = if z.norm() < 1e-300 {
        Complex64::new(mu.interior_mass(), 0.0)
    } else {
        let step = (z * h).exp();
        // ∫_a^{a+h} e^{zt} dt = e^{za}(e^{zh} − 1)/z
        let cell = (step - 1.0) / z;
        let mut e = Complex64::new(1.0, 0.0);
        let (mut acc, mut comp) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        for &v in mu.values() {
            let term = e * v;
            let y = term - comp;
            let t = acc + y;
            comp = (t - acc) - y;
            acc = t;
            e *= step;
        }
        acc * cell
    };
    body + (z * mu.x_max()).exp() * mu.tail_mass()
}

/// Result of [`laplace_boundary_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceCheck {
    /// `max_τ |g(iτ) g(−iτ) − 1|`.
    pub max_product_deviation: f64,
    /// `max ||g(ζ(w))| − 1|` over circle points `w` with `|ζ(w)| ≤ T`.
    pub max_cayley_deviation: f64,
    pub tau_max: f64,
}

/// Default half-width of the τ window.
pub const TAU_MAX: f64 = 20.0;

/// Evaluates `g = 2f − 1` on the imaginary axis (τ ∈ [−T, T], `m` points)
/// and, via `ζ(w) = (w − 1)/(w + 1)`, on the unit circle.
pub fn laplace_boundary_check(mu: &GridMeasure, m: usize, tau_max: f64) -> Result<LaplaceCheck> {
    if m < 8 {
        return Err(Error::Domain(format!("need at least 8 samples, got {m}")));
    }
    let g = |z: Complex64| laplace_f(mu, z) * 2.0 - 1.0;
    let taus: Vec<f64> = (0..m).map(|k| -tau_max + 2.0 * tau_max * k as f64 / (m - 1) as f64).collect();
    let prod = par::map_slice(&taus, |&t| (g(Complex64::new(0.0, t)) * g(Complex64::new(0.0, -t)) - 1.0).norm());
    // ζ(e^{iφ}) = i tan(φ/2); keep the circle points whose image stays in the window
    let phi_max = 2.0 * tau_max.atan();
    let phis: Vec<f64> = (0..m).map(|k| -phi_max + 2.0 * phi_max * k as f64 / (m - 1) as f64).collect();
    let cay = par::map_slice(&phis, |&phi| {
        let w = Complex64::from_polar(1.0, phi);
        let z = (w - 1.0) / (w + 1.0);
        (g(Complex64::new(0.0, z.im)).norm() - 1.0).abs()
    });
    Ok(LaplaceCheck {
        max_product_deviation: prod.into_iter().fold(0.0, f64::max),
        max_cayley_deviation: cay.into_iter().fold(0.0, f64::max),
        tau_max,
    })
}

/// One step of [`self_iterate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfStep {
    pub measure: Measure,
    /// W₁ to the nearest geometric member (lattice input) or to the
    /// exponential law with the same mean (grid input).
    pub w1_to_family: f64,
    /// The matching `q` (lattice) or rate (grid).
    pub family_param: f64,
}

/// `W₁` on the unit lattice: `Σ_k |F_p(k) − F_q(k)|`.
fn lattice_w1(p: &LatticePMF, q: &LatticePMF) -> f64 {
    let n = p.probs.len().max(q.probs.len());
    let (mut fp, mut fq, mut acc) = (0.0, 0.0, 0.0);
    for k in 0..n {
        fp += p.p(k);
        fq += q.p(k);
        acc += (fp - fq).abs();
    }
    acc
}

/// Nearest geometric member to `p` in `W₁`: grid search on q then golden refinement.
pub fn nearest_geometric(p: &LatticePMF) -> Result<(f64, f64)> {
    let cutoff = p.probs.len().max(64) * 4;
    let dist = |q: f64| -> Result<f64> { Ok(lattice_w1(p, &geometric_family(q, cutoff)?)) };
    let grid: Vec<f64> = (0..1000).map(|k| k as f64 / 1000.0).collect();
    let mut best = (0.0, f64::INFINITY);
    for &q in &grid {
        let d = dist(q)?;
        if d < best.1 {
            best = (q, d);
        }
    }
    let (mut a, mut b) = ((best.0 - 1e-3).max(0.0), (best.0 + 1e-3).min(0.999_999));
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if dist(c)? < dist(d)? {
            b = d;
        } else {
            a = c;
        }
    }
    let q = 0.5 * (a + b);
    let d = dist(q)?;
    Ok(if d < best.1 { (q, d) } else { best })
}

/// `μ_{k+1} = T*_{μ_k} μ_k` for `k < n`.
///
/// Atomic inputs are moved onto the unit lattice (failing when the support
/// is not co-rational) and iterated exactly; grids use [`continuous_selfhat`].
pub fn self_iterate(mu0: &Measure, n: usize, opts: &PushOptions) -> Result<Vec<SelfStep>> {
    if n == 0 {
        return Err(Error::Domain("need at least one step".into()));
    }
    match mu0 {
        Measure::Grid(g) => {
            let mut cur = if opts.renormalize_tail && g.check_tail().is_err() { g.renormalized() } else { g.clone() };
            let mut out = Vec::with_capacity(n + 1);
            for k in 0..=n {
                if k > 0 {
                    cur = continuous_selfhat(&cur)?;
                    if opts.renormalize_tail && cur.check_tail().is_err() {
                        cur = cur.renormalized();
                    }
                }
                let rate = 1.0 / cur.mean()?;
                let fit: Measure = GridMeasure::exponential(rate, cur.x_max(), cur.n())?.into();
                let m: Measure = cur.clone().into();
                let w1 = wasserstein_p(&m, &fit, 1.0)?;
                out.push(SelfStep { measure: m, w1_to_family: w1, family_param: rate });
            }
            Ok(out)
        }
        _ => {
            let (mut p, w) = LatticePMF::from_atomic(&mu0.to_atomic()?, 1e-9)?;
            let mut out = Vec::with_capacity(n + 1);
            for k in 0..=n {
                if k > 0 {
                    p = hat_discrete(&p, p.probs.len())?;
                }
                let (q, d) = nearest_geometric(&p)?;
                out.push(SelfStep { measure: p.to_atomic(w)?.into(), w1_to_family: d * w, family_param: q });
            }
            Ok(out)
        }
    }
}

/// Settings for [`find_fixed_points`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSearch {
    pub starts: usize,
    /// Random starts live on `{0, …, support}`.
    pub support: usize,
    pub max_iter: usize,
    /// `p ← (1 − d) p + d p̂`; `d = 1` is the plain iteration.
    pub damping: f64,
    /// Iteration hands over to Newton once `‖p̂ − p‖₁` drops below this.
    pub polish_below: f64,
    /// Entries below this are dropped before polishing.
    pub support_eps: f64,
    /// Only candidates with `‖p̂ − p‖₁` below this are returned.
    pub residual_tol: f64,
    pub seed: u64,
}

impl Default for FixedPointSearch {
    fn default() -> Self {
        FixedPointSearch {
            starts: 64,
            support: 8,
            max_iter: 50_000,
            damping: 1.0,
            polish_below: 1e-6,
            support_eps: 1e-4,
            residual_tol: 1e-12,
            seed: 0,
        }
    }
}

/// A converged iterate of the lattice self-map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub pmf: LatticePMF,
    pub residual: f64,
    pub iterations: usize,
}

/// Runs the (damped) lattice self-map from random starting PMFs, polishes
/// runs that come close with Newton's method on their support, and keeps
/// those whose full residual ends below `residual_tol`. Start `i` uses
/// stream `i`.
///
/// Near a finitely supported fixed point the plain iteration is neutral in
/// the directions of the empty lattice sites, so it only converges
/// sublinearly; the polish removes those directions.
pub fn find_fixed_points(cfg: &FixedPointSearch) -> Result<Vec<FixedPoint>> {
    if !(cfg.damping > 0.0 && cfg.damping <= 1.0) {
        return Err(Error::Domain(format!("damping {} must lie in (0, 1]", cfg.damping)));
    }
    let runs = par::map_range(cfg.starts, |i| -> Result<Option<FixedPoint>> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i as u64);
        let raw: Vec<f64> = (0..=cfg.support).map(|_| rng.gen::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let mut p: Vec<f64> = raw.iter().map(|x| x / total).collect();
        for it in 1..=cfg.max_iter {
            let hat = hat_vec(&p);
            let residual = l1(&hat, &p);
            if residual < cfg.polish_below {
                return Ok(polish(&p, cfg.support_eps).and_then(|q| {
                    let r = l1(&hat_vec(&q), &q);
                    (r < cfg.residual_tol)
                        .then(|| LatticePMF::new(q).ok().map(|pmf| FixedPoint { pmf, residual: r, iterations: it }))
                        .flatten()
                }));
            }
            let d = cfg.damping;
            let next: Vec<f64> = p.iter().zip(&hat).map(|(a, b)| (1.0 - d) * a + d * b).collect();
            let s: f64 = next.iter().sum();
            p = next.into_iter().map(|x| x / s).collect();
        }
        Ok(None)
    });
    Ok(runs.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect())
}

fn hat_vec(p: &[f64]) -> Vec<f64> {
    let n = p.len();
    (0..n)
        .map(|k| {
            let s = crate::kahan_sum((0..n - k).map(|i| p[i] * p[i + k]));
            if k == 0 {
                s
            } else {
                2.0 * s
            }
        })
        .collect()
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    crate::kahan_sum(a.iter().zip(b).map(|(x, y)| (x - y).abs()))
}

/// Entries a polished iterate may not fall below without being dropped.
const PRUNE_BELOW: f64 = 1e-6;

/// Newton on `{k : p_k > eps}`, then drop entries that collapse below
/// [`PRUNE_BELOW`] and solve again. Fixed points such as `(½, ½)` are double
/// roots of the system on a larger support, where Newton stalls near 1e-8.
fn polish(p: &[f64], eps: f64) -> Option<Vec<f64>> {
    let mut support: Vec<usize> = (0..p.len()).filter(|&k| p[k] > eps).collect();
    loop {
        let q = newton(p, &support)?;
        let weak: Vec<usize> = support.iter().copied().filter(|&k| q[k] < PRUNE_BELOW).collect();
        if weak.is_empty() || weak.len() == support.len() {
            return Some(q);
        }
        support.retain(|k| !weak.contains(k));
    }
}

/// Newton's method for `p̂ = p` restricted to `support`, with the last
/// equation replaced by `Σ p = 1`.
fn newton(p: &[f64], support: &[usize]) -> Option<Vec<f64>> {
    let m = support.len();
    if m == 0 {
        return None;
    }
    let mut q = vec![0.0; p.len()];
    for &k in support {
        q[k] = p[k];
    }
    for _ in 0..50 {
        let hat = hat_vec(&q);
        let mut rhs: Vec<f64> = support.iter().map(|&k| hat[k] - q[k]).collect();
        rhs[m - 1] = q.iter().sum::<f64>() - 1.0;
        if rhs.iter().all(|r| r.abs() < 1e-16) {
            break;
        }
        // J[r][c] = ∂(p̂_k − p_k)/∂p_j for k = support[r], j = support[c]
        let mut jac = vec![vec![0.0; m]; m];
        for (r, &k) in support.iter().enumerate() {
            for (c, &j) in support.iter().enumerate() {
                let d = if k == 0 {
                    2.0 * q[j]
                } else {
                    2.0 * (q.get(j + k).copied().unwrap_or(0.0) + if j >= k { q[j - k] } else { 0.0 })
                };
                jac[r][c] = d - if j == k { 1.0 } else { 0.0 };
            }
        }
        jac[m - 1] = vec![1.0; m];
        let step = solve(jac, rhs)?;
        for (c, &j) in support.iter().enumerate() {
            q[j] -= step[c];
        }
    }
    q.iter().all(|&x| x >= 0.0).then_some(q)
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let (top, rest) = a.split_at_mut(col + 1);
        let pivot = &top[col];
        for (k, row) in rest.iter_mut().enumerate() {
            let f = row[col] / pivot[col];
            for (x, p) in row[col..].iter_mut().zip(&pivot[col..]) {
                *x -= f * p;
            }
            b[col + 1 + k] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// The support indices divided by their gcd, so `{0, k}` reads as `{0, 1}`.
pub fn normalized_support(p: &LatticePMF, eps: f64) -> Vec<usize> {
    let idx: Vec<usize> = p.probs.iter().enumerate().filter(|(_, &v)| v > eps).map(|(k, _)| k).collect();
    let g = idx.iter().fold(0usize, |g, &k| gcd(g, k));
    if g <= 1 {
        idx
    } else {
        idx.into_iter().map(|k| k / g).collect()
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// One candidate of the Blaschke scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    /// Zeros as `(re, im)` pairs.
    pub zeros: Vec<(f64, f64)>,
    pub min_coeff: f64,
    pub nonnegative: bool,
    /// `‖p̂ − p‖₁` for the truncated coefficients of `f = (1 + B)/2`.
    pub hat_residual: f64,
    pub truncated_mass: f64,
}

/// Taylor coefficients of `Π (z − a)/(1 − ā z)` up to degree `len − 1`.
pub fn blaschke_coeffs(zeros: &[Complex64], len: usize) -> Vec<Complex64> {
    let mut acc = vec![Complex64::new(0.0, 0.0); len];
    acc[0] = Complex64::new(1.0, 0.0);
    for &a in zeros {
        // (z − a) Σ (ā z)^n
        let mut factor = vec![Complex64::new(0.0, 0.0); len];
        let mut pw = Complex64::new(1.0, 0.0);
        let mut series = vec![Complex64::new(0.0, 0.0); len];
        for s in series.iter_mut() {
            *s = pw;
            pw *= a.conj();
        }
        for n in 0..len {
            factor[n] = -a * series[n] + if n > 0 { series[n - 1] } else { Complex64::new(0.0, 0.0) };
        }
        let mut next = vec![Complex64::new(0.0, 0.0); len];
        for (i, &x) in acc.iter().enumerate() {
            if x == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (j, &y) in factor[..len - i].iter().enumerate() {
                next[i + j] += x * y;
            }
        }
        acc = next;
    }
    acc
}

/// Sweeps products of `factors` Möbius factors with real zeros in (−1, 1)
/// or conjugate pairs `r e^{±iφ}`, all drawn from a `grid`-point lattice,
/// and tests whether `f = (1 + B)/2` has nonnegative coefficients that the
/// lattice self-map fixes. Nothing is asserted; the records are evidence.
pub fn scan(factors: usize, grid: usize, len: usize) -> Result<Vec<ScanRecord>> {
    if factors == 0 || grid < 2 || len < 2 {
        return Err(Error::Domain("need factors >= 1, grid >= 2, len >= 2".into()));
    }
    let reals: Vec<f64> = (0..grid).map(|k| -1.0 + 2.0 * (k as f64 + 0.5) / grid as f64).collect();
    let mut pairs: Vec<Complex64> = Vec::new();
    for r in (0..grid).map(|k| (k as f64 + 0.5) / grid as f64) {
        for phi in (1..grid).map(|k| PI * k as f64 / grid as f64) {
            pairs.push(Complex64::from_polar(r, phi));
        }
    }
    // multisets of "slots": a real zero takes one slot, a conjugate pair two
    let mut configs: Vec<Vec<Complex64>> = Vec::new();
    fn extend(
        prefix: &mut Vec<Complex64>,
        left: usize,
        start_real: usize,
        start_pair: usize,
        reals: &[f64],
        pairs: &[Complex64],
        out: &mut Vec<Vec<Complex64>>,
    ) {
        if left == 0 {
            out.push(prefix.clone());
            return;
        }
        for i in start_real..reals.len() {
            prefix.push(Complex64::new(reals[i], 0.0));
            extend(prefix, left - 1, i, start_pair, reals, pairs, out);
            prefix.pop();
        }
        if left >= 2 && start_real == 0 {
            for j in start_pair..pairs.len() {
                prefix.push(pairs[j]);
                prefix.push(pairs[j].conj());
                extend(prefix, left - 2, 0, j, reals, pairs, out);
                prefix.pop();
                prefix.pop();
            }
        }
    }
    extend(&mut Vec::new(), factors, 0, 0, &reals, &pairs, &mut configs);
    let records = par::map_slice(&configs, |zeros| -> Result<ScanRecord> {
        let b = blaschke_coeffs(zeros, len);
        let mut probs: Vec<f64> = b.iter().map(|c| 0.5 * c.re).collect();
        probs[0] += 0.5;
        let min_coeff = probs.iter().copied().fold(f64::INFINITY, f64::min);
        let clipped: Vec<f64> = probs.iter().map(|&p| p.max(0.0)).collect();
        let s: f64 = clipped.iter().sum();
        let truncated_mass = (1.0 - probs.iter().sum::<f64>()).abs();
        let hat_residual = if s > 0.0 {
            let p = LatticePMF { probs: clipped, tail_mass: 0.0 };
            let hat = hat_discrete(&p, len).unwrap_or_else(|_| p.clone());
            hat.l1_distance(&p)
        } else {
            f64::INFINITY
        };
        Ok(ScanRecord {
            zeros: zeros.iter().map(|z| (z.re, z.im)).collect(),
            min_coeff,
            nonnegative: min_coeff >= -1e-12,
            hat_residual,
            truncated_mass,
        })
    });
    records.into_iter().collect()
}
