//! Wasserstein distances on the half-line, contraction experiments, the
//! (A,B,C) interval condition and the polynomial rate it implies.
//!
//! `W_p` is computed through the monotone (quantile) coupling, which is
//! optimal for `|x − y|^p` with `p ≥ 1` on the line.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{open_uniform, Measure, Measure1D};
use crate::par;
use crate::transfer::{push_avg, Coupling2D, PushOptions};

/// Uniform u-points used when a grid takes part.
pub const U_GRID: usize = 1 << 14;
/// Grids with more cells than this contribute no cell-boundary breakpoints.
const MAX_GRID_BREAKS: usize = 1 << 16;
/// Slack on both (A,B,C) margins; the uniform example is tight by design.
pub const ABC_SLACK: f64 = 1e-12;

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("exponent p = {p} must be finite and at least 1")))
    }
}

/// CDF levels at which the quantile function may jump or kink.
fn levels(m: &Measure) -> Result<Vec<f64>> {
    Ok(match m {
        Measure::Grid(g) => {
            g.check_tail()?;
            let mut out = Vec::new();
            if g.n() <= MAX_GRID_BREAKS {
                let h = g.h();
                out.extend((1..=g.n()).map(|i| g.cdf_open(i as f64 * h)));
            }
            out.push(g.interior_mass());
            out
        }
        Measure::Atomic(a) => {
            let mut acc = 0.0;
            a.atoms()
                .iter()
                .map(|&(_, w)| {
                    acc += w;
                    acc
                })
                .collect()
        }
        Measure::Empirical(e) => {
            let n = e.len() as f64;
            (1..=e.len()).map(|k| k as f64 / n).collect()
        }
    })
}

/// `W_p(ρ, π) = (∫₀¹ |Q_ρ(u) − Q_π(u)|^p du)^{1/p}`.
///
/// Finitely supported pairs are integrated exactly between the merged CDF
/// levels, where both quantiles are constant. When a grid is involved the
/// same breakpoints are joined by a uniform grid of [`U_GRID`] points and
/// each piece gets the midpoint rule.
pub fn wasserstein_p(rho: &Measure, pi: &Measure, p: f64) -> Result<f64> {
    check_p(p)?;
    let mut cuts = levels(rho)?;
    cuts.extend(levels(pi)?);
    let has_grid = matches!(rho, Measure::Grid(_)) || matches!(pi, Measure::Grid(_));
    if has_grid {
        cuts.extend((1..U_GRID).map(|k| k as f64 / U_GRID as f64));
    }
    cuts.push(0.0);
    cuts.push(1.0);
    cuts.retain(|&u| (0.0..=1.0).contains(&u));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let pieces: Vec<(f64, f64)> = cuts.windows(2).filter(|w| w[1] > w[0]).map(|w| (w[0], w[1])).collect();
    let terms = par::map_slice(&pieces, |&(a, b)| -> Result<f64> {
        let u = 0.5 * (a + b);
        if !(u > 0.0 && u < 1.0) {
            return Ok(0.0);
        }
        Ok((b - a) * (rho.quantile(u)? - pi.quantile(u)?).abs().powf(p))
    });
    let total = crate::kahan_sum(terms.into_iter().collect::<Result<Vec<_>>>()?.into_iter());
    Ok(total.max(0.0).powf(1.0 / p))
}

/// `(Σ w |x − y|^p)^{1/p}`.
pub fn wp_of_coupling(gamma: &Coupling2D, p: f64) -> Result<f64> {
    check_p(p)?;
    Ok(wp_pow_of_coupling(gamma, p)?.powf(1.0 / p))
}

/// `Σ w |x − y|^p`.
pub fn wp_pow_of_coupling(gamma: &Coupling2D, p: f64) -> Result<f64> {
    check_p(p)?;
    Ok(crate::kahan_sum(gamma.atoms().iter().map(|&(x, y, w)| w * (x - y).abs().powf(p))))
}

/// `W_p(T*ᵏρ, T*ᵏπ)` for `k = 0..=n`.
pub fn decrease_experiment(
    rho: &Measure,
    pi: &Measure,
    mu: &Measure,
    p: f64,
    n: usize,
    opts: &PushOptions,
) -> Result<Vec<f64>> {
    check_p(p)?;
    if n == 0 {
        return Err(Error::Domain("need at least one step".into()));
    }
    let (mut r, mut q) = (rho.clone(), pi.clone());
    let mut out = Vec::with_capacity(n + 1);
    out.push(wasserstein_p(&r, &q, p)?);
    for _ in 0..n {
        r = push_avg(&r, mu, opts)?;
        q = push_avg(&q, mu, opts)?;
        out.push(wasserstein_p(&r, &q, p)?);
    }
    Ok(out)
}

/// One random interval tested by [`abc_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalProbe {
    pub x: f64,
    pub y: f64,
    pub l: f64,
    pub u: f64,
    /// `A|y − x| − max_{z ∈ [L, U]} |2z − x − y|`.
    pub margin_geom: f64,
    /// `μ(L, U) − C μ(x, y)^B`.
    pub margin_mass: f64,
}

impl IntervalProbe {
    pub fn passes(&self) -> bool {
        self.margin_geom >= -ABC_SLACK && self.margin_mass >= -ABC_SLACK
    }
}

/// Constants together with the probes that confirmed them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct ABCWitness {
    pub A: f64,
    pub B: f64,
    pub C: f64,
    pub kappa: f64,
    pub interval_probe: Vec<IntervalProbe>,
}

/// Result of [`abc_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AbcOutcome {
    Witness(ABCWitness),
    /// The first failing probe in probe order, with the best candidate tried.
    Violated {
        probe: IntervalProbe,
        index: usize,
    },
}

impl AbcOutcome {
    pub fn passed(&self) -> bool {
        matches!(self, AbcOutcome::Witness(_))
    }
}

#[allow(clippy::too_many_arguments)]
fn probe_candidate<M: Measure1D + ?Sized>(
    mu: &M,
    x: f64,
    y: f64,
    l: f64,
    u: f64,
    a: f64,
    b: f64,
    c: f64,
) -> IntervalProbe {
    let w = y - x;
    let worst = (2.0 * l - x - y).abs().max((2.0 * u - x - y).abs());
    IntervalProbe {
        x,
        y,
        l,
        u,
        margin_geom: a * w - worst,
        margin_mass: mu.mass_open(l, u) - c * mu.mass_open(x, y).powf(b),
    }
}

/// Samples `probes` intervals with endpoints drawn from μ and looks for
/// `L, U` meeting both halves of the condition.
///
/// The symmetric candidate `L = x + κw, U = y − κw` with `κ = (1 − A)/2` is
/// always tried. With `shift = Some(c)` and `w ≥ 2c`, the candidate
/// `L = x + c, U = y − κw` is tried as well. Probe `i` draws from stream `i`.
#[allow(non_snake_case, clippy::too_many_arguments)]
pub fn abc_check<M: Measure1D + Sync + ?Sized>(
    mu: &M,
    A: f64,
    B: f64,
    C: f64,
    probes: usize,
    seed: u64,
    shift: Option<f64>,
) -> Result<AbcOutcome> {
    if !((0.0..1.0).contains(&A) && B > 0.0 && C > 0.0) {
        return Err(Error::Domain(format!("need 0 <= A < 1, B > 0, C > 0; got {A}, {B}, {C}")));
    }
    if probes == 0 {
        return Err(Error::Domain("need at least one probe".into()));
    }
    let kappa = (1.0 - A) / 2.0;
    let results = par::map_range(probes, |i| -> Result<IntervalProbe> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        for _ in 0..1000 {
            let s = mu.quantile(open_uniform(&mut rng))?;
            let t = mu.quantile(open_uniform(&mut rng))?;
            let (x, y) = (s.min(t), s.max(t));
            if !(y > x && mu.mass_open(x, y) > 0.0) {
                continue;
            }
            let w = y - x;
            let sym = probe_candidate(mu, x, y, x + kappa * w, y - kappa * w, A, B, C);
            if sym.passes() {
                return Ok(sym);
            }
            if let Some(c) = shift {
                if w >= 2.0 * c {
                    let shifted = probe_candidate(mu, x, y, x + c, y - kappa * w, A, B, C);
                    if shifted.passes() {
                        return Ok(shifted);
                    }
                }
            }
            return Ok(sym);
        }
        Err(Error::Domain("could not draw an interval of positive mass".into()))
    });
    let probes = results.into_iter().collect::<Result<Vec<_>>>()?;
    if let Some((index, probe)) = probes.iter().enumerate().find(|(_, p)| !p.passes()) {
        return Ok(AbcOutcome::Violated { probe: *probe, index });
    }
    Ok(AbcOutcome::Witness(ABCWitness { A, B, C, kappa, interval_probe: probes }))
}

/// Iterates of the one-step bound and its closed-form envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateBound {
    /// `c = C(1 − A^p)`.
    pub c: f64,
    /// `v_0 = w0^p, …, v_n`.
    pub iterates: Vec<f64>,
    /// `(v_0^{−s} + c s k)^{−1/s}` with `s = B/p`, an upper bound on `v_k`.
    pub envelope: Vec<f64>,
}

/// Runs `v_{k+1} = max(0, v_k − c v_k^{1 + B/p})` on `v = W_p^p`.
///
/// The envelope follows from Bernoulli's inequality:
/// `v_{k+1}^{−s} = v_k^{−s}(1 − c v_k^s)^{−s} ≥ v_k^{−s} + c s`.
#[allow(non_snake_case)]
pub fn rate_bound(w0: f64, A: f64, B: f64, C: f64, p: f64, n: usize) -> Result<RateBound> {
    check_p(p)?;
    if !(w0 > 0.0 && B > 0.0 && C >= 0.0 && (0.0..1.0).contains(&A)) {
        return Err(Error::Domain(format!("need w0 > 0, 0 <= A < 1, B > 0, C >= 0; got {w0}, {A}, {B}, {C}")));
    }
    let c = C * (1.0 - A.powf(p));
    let s = B / p;
    let v0 = w0.powf(p);
    let mut iterates = Vec::with_capacity(n + 1);
    let mut v = v0;
    iterates.push(v);
    for _ in 0..n {
        v = (v - c * v.powf(1.0 + s)).max(0.0);
        iterates.push(v);
    }
    let envelope = (0..=n).map(|k| (v0.powf(-s) + c * s * k as f64).powf(-1.0 / s)).collect();
    Ok(RateBound { c, iterates, envelope })
}

/// Least-squares slope of `log w_k` against `log k` over the second half,
/// where `sequence[i]` is `w_{i+1}`.
pub fn fit_poly_rate(sequence: &[f64]) -> Result<f64> {
    if sequence.len() < 16 {
        return Err(Error::Domain(format!("need at least 16 terms, got {}", sequence.len())));
    }
    if let Some(v) = sequence.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Domain(format!("entries must be positive, found {v}")));
    }
    let start = sequence.len() / 2;
    let pts: Vec<(f64, f64)> =
        sequence[start..].iter().enumerate().map(|(i, v)| (((start + i + 1) as f64).ln(), v.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{AtomicMeasure, GridMeasure};

    fn atomic(atoms: &[(f64, f64)]) -> Measure {
        AtomicMeasure::new(atoms.to_vec()).unwrap().into()
    }

    #[test]
    fn dirac_distances() {
        for p in [1.0, 2.0, 3.5] {
            let w = wasserstein_p(&atomic(&[(0.0, 1.0)]), &atomic(&[(2.5, 1.0)]), p).unwrap();
            assert!((w - 2.5).abs() < 1e-14);
        }
        let w = wasserstein_p(&atomic(&[(0.0, 0.5), (1.0, 0.5)]), &atomic(&[(0.5, 1.0)]), 1.0).unwrap();
        assert!((w - 0.5).abs() < 1e-15);
    }

    #[test]
    fn exponential_pair() {
        let a: Measure = GridMeasure::exponential(1.0, 30.0, 1 << 12).unwrap().into();
        let b: Measure = GridMeasure::exponential(2.0, 30.0, 1 << 12).unwrap().into();
        assert!((wasserstein_p(&a, &b, 1.0).unwrap() - 0.5).abs() < 1e-3);
    }

    #[test]
    fn coupling_costs() {
        let g = Coupling2D::new(vec![(0.0, 1.0, 1.0)]).unwrap();
        assert_eq!(wp_of_coupling(&g, 2.0).unwrap(), 1.0);
        let hh = AtomicMeasure::new(vec![(0.0, 0.5), (1.0, 0.5)]).unwrap();
        let prod = Coupling2D::product(&hh, &hh);
        assert_eq!(wp_of_coupling(&prod, 1.0).unwrap(), 0.5);
        let diag = Coupling2D::new(vec![(0.2, 0.2, 1.0)]).unwrap();
        assert_eq!(wp_of_coupling(&diag, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn dirac_two_keeps_distance() {
        let seq = decrease_experiment(
            &atomic(&[(0.0, 1.0)]),
            &atomic(&[(0.5, 1.0)]),
            &atomic(&[(2.0, 1.0)]),
            1.0,
            6,
            &PushOptions::default(),
        )
        .unwrap();
        assert!(seq.iter().all(|w| (w - 0.5).abs() < 1e-15), "{seq:?}");
    }

    #[test]
    fn uniform_abc() {
        let u = GridMeasure::uniform(0.0, 1.0, 1.0, 1024).unwrap();
        assert!(abc_check(&u, 0.5, 1.0, 0.5, 200, 1, None).unwrap().passed());
        let out = abc_check(&u, 0.5, 1.0, 0.9, 200, 1, None).unwrap();
        assert!(!out.passed());
    }

    #[test]
    fn rate_bound_examples() {
        let r = rate_bound(1.0, 0.5, 1.0, 0.2, 1.0, 100).unwrap();
        assert!((r.c - 0.1).abs() < 1e-15);
        assert!(r.iterates[100] <= 1.0 / 11.0);
        assert!(r.iterates.iter().zip(&r.envelope).all(|(v, e)| v <= &(e + 1e-15)));
        let flat = rate_bound(1.0, 0.5, 1.0, 0.0, 1.0, 10).unwrap();
        assert!(flat.iterates.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn poly_fits() {
        let s: Vec<f64> = (1..=64).map(|k| (k as f64).powi(-2)).collect();
        assert!((fit_poly_rate(&s).unwrap() + 2.0).abs() < 1e-12);
        assert!(fit_poly_rate(&[1.0; 32]).unwrap().abs() < 1e-12);
        assert!(fit_poly_rate(&[1.0; 8]).is_err());
        let mut z = vec![1.0; 20];
        z[3] = 0.0;
        assert!(fit_poly_rate(&z).is_err());
    }
}
