//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Every reference value here comes from an oracle written in this file
//! (closed forms, pairwise sums, an LP solver), not from the library.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use absdyn_core::drift::{drift_profile, drift_u, invariant_estimate, verify_drift_condition};
use absdyn_core::measures::{AtomicMeasure, GridMeasure, Measure};
use absdyn_core::metric::{
    abc_check, decrease_experiment, fit_poly_rate, rate_bound, wasserstein_p, wp_pow_of_coupling,
};
use absdyn_core::orbits::{epsilon_cover, lattice_test, on_lattice, reach_set};
use absdyn_core::selfmap::{
    boundary_modulus_check, continuous_selfhat, find_fixed_points, geometric_family, hat_discrete, mobius_compare,
    normalized_support, FixedPointSearch, LatticePMF,
};
use absdyn_core::transfer::{coupling_push, push_avg, subtraction_term, Coupling2D, PushOptions};
use minilp::{ComparisonOp, OptimizationDirection, Problem};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fixed before any criterion was run; used for every random draw below.
const ACCEPTANCE_SEED: u64 = 24301;

type Outcome = Result<(bool, String), String>;
type Criterion = fn() -> Outcome;

fn exp_density(rate: f64, x: f64) -> f64 {
    rate * (-rate * x).exp()
}

fn sup_dev(g: &GridMeasure, f: impl Fn(f64) -> f64) -> f64 {
    (0..g.n()).map(|i| (g.values()[i] - f(g.midpoint(i))).abs()).fold(0.0, f64::max)
}

fn c1_exponential_closure() -> Outcome {
    let mu = GridMeasure::exponential(1.0, 30.0, 1 << 14).map_err(|e| e.to_string())?;
    let pi = GridMeasure::exponential(2.0, 30.0, 1 << 14).map_err(|e| e.to_string())?;
    let t = Instant::now();
    let out = push_avg(&pi.into(), &mu.into(), &PushOptions::default()).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let Measure::Grid(out) = out else { return Err("expected a grid".into()) };
    // Integrating the two branches θ < X and θ > X by hand gives weight
    // P/(M+P) on μ and M/(M+P) on π; the swapped pair is kept for the report.
    let dev = sup_dev(&out, |x| 2.0 * exp_density(1.0, x) / 3.0 + exp_density(2.0, x) / 3.0);
    let swapped = sup_dev(&out, |x| exp_density(1.0, x) / 3.0 + 2.0 * exp_density(2.0, x) / 3.0);
    // independent arbiter between the two weightings: P(|X − θ| ≤ ½) by sampling
    let mut rng = ChaCha8Rng::seed_from_u64(ACCEPTANCE_SEED);
    let draws = 400_000;
    let hits = (0..draws)
        .filter(|_| {
            let x = -(1.0 - rng.gen::<f64>()).ln() / 2.0;
            let th = -(1.0 - rng.gen::<f64>()).ln();
            (x - th).abs() <= 0.5
        })
        .count();
    let mc = hits as f64 / draws as f64;
    let cdf = |w1: f64, x: f64| w1 * (1.0 - (-x).exp()) + (1.0 - w1) * (1.0 - (-2.0 * x).exp());
    let (derived, literal) = (cdf(2.0 / 3.0, 0.5), cdf(1.0 / 3.0, 0.5));
    let mc_ok = (mc - derived).abs() < 5e-3 && (mc - literal).abs() > 5e-2;
    Ok((
        dev <= 1e-3 && secs < 5.0 && mc_ok,
        format!(
            "sup-norm vs (2/3)Exp(1)+(1/3)Exp(2) {dev:.3e} (<= 1e-3), vs swapped weights {swapped:.3e}; \
             sampled P(|X-θ|<=½) {mc:.4} (derived {derived:.4}, swapped {literal:.4}); push took {secs:.2} s (< 5 s)"
        ),
    ))
}

fn c2_exponential_self_fixed_point() -> Outcome {
    let (x_max, n) = (30.0, 1 << 14);
    let h = x_max / n as f64;
    let budget = 5.0 * (h + (-x_max).exp());
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for alpha in [0.5, 1.0, 2.0] {
        let mu = GridMeasure::exponential(alpha, x_max, n).map_err(|e| e.to_string())?;
        let out = continuous_selfhat(&mu).map_err(|e| e.to_string())?;
        let dev = sup_dev(&out, |x| exp_density(alpha, x));
        worst = worst.max(dev);
        parts.push(format!("a={alpha}: {dev:.2e}"));
    }
    Ok((worst <= budget, format!("{} (budget {budget:.3e})", parts.join(", "))))
}

/// `p̂_k = Σ_{|i−j| = k} p_i p_j` straight from the pairwise definition.
fn hat_pairwise(p: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len()];
    for (i, &a) in p.iter().enumerate() {
        for (j, &b) in p.iter().enumerate() {
            out[i.abs_diff(j)] += a * b;
        }
    }
    out
}

fn c3_geometric_family() -> Outcome {
    let mut ok = true;
    let mut worst_ratio: f64 = 0.0;
    for k in 1..=9 {
        let q = k as f64 / 10.0;
        let p = geometric_family(q, 200).map_err(|e| e.to_string())?;
        // oracle: the closed-form members
        let formula: Vec<f64> =
            (0..=200).map(|n| if n == 0 { (1.0 - q) / 2.0 } else { (1.0 - q * q) / 2.0 * q.powi(n - 1) }).collect();
        let form_dev = p.probs().iter().zip(&formula).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let hat = hat_discrete(&p, 200).map_err(|e| e.to_string())?;
        let pair = hat_pairwise(p.probs());
        let oracle_dev = hat.probs().iter().zip(&pair).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let l1 = hat.l1_distance(&p);
        let bound = 1e-10 + 10.0 * p.tail_mass();
        ok &= l1 <= bound && form_dev < 1e-15 && oracle_dev < 1e-15;
        worst_ratio = worst_ratio.max(l1 / bound);
    }
    let hh = LatticePMF::new(vec![0.5, 0.5]).map_err(|e| e.to_string())?;
    let hhat = hat_discrete(&hh, 1).map_err(|e| e.to_string())?;
    let hh_dev = hhat.l1_distance(&hh);
    ok &= hh_dev <= 1e-15;
    Ok((ok, format!("max ||hat(p)-p||_1 / budget = {worst_ratio:.3} over q=0.1..0.9; half-half deviation {hh_dev:e}")))
}

fn c4_mobius_boundary() -> Outcome {
    let q = 0.5;
    let p = geometric_family(q, 200).map_err(|e| e.to_string())?;
    let mob = mobius_compare(&p, q, 256).map_err(|e| e.to_string())?;
    let modulus = boundary_modulus_check(&p, 256, 1e-9).map_err(|e| e.to_string())?;
    // oracle: direct power sums against the closed-form Möbius map
    let mut oracle: f64 = 0.0;
    for k in 0..256 {
        let z = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / 256.0);
        let mut f = Complex64::new(0.0, 0.0);
        let mut zn = Complex64::new(1.0, 0.0);
        for &c in p.probs() {
            f += zn * c;
            zn *= z;
        }
        oracle = oracle.max((f * 2.0 - 1.0 - (z - q) / (1.0 - z * q)).norm());
    }
    let ok = mob <= 1e-9 && modulus.max_deviation <= 1e-9 && oracle <= 1e-9;
    Ok((ok, format!("mobius {mob:.2e}, |g|-1 {:.2e}, direct-sum oracle {oracle:.2e}", modulus.max_deviation)))
}

fn c5_drift_landmarks() -> Outcome {
    let exp = GridMeasure::exponential(1.0, 32.0, 1 << 19).map_err(|e| e.to_string())?;
    let prof = drift_profile(&exp, 20.0, 20_001).map_err(|e| e.to_string())?;
    let ln2 = std::f64::consts::LN_2;
    let u0 = prof.u_values[0];
    let cell = prof.grid[1] - prof.grid[0];
    let argmin = prof.grid[prof.argmin()];
    let gap = drift_u(&exp, 20.0).map_err(|e| e.to_string())? - (20.0 - 1.0);
    let convex = prof.min_second_difference();
    // oracle: U(y) = y − 1 + 2e^{−y} has U(y) = y at ln 2
    let exp_ok = (u0 - 1.0).abs() <= 1e-9
        && (argmin - ln2).abs() <= cell
        && (prof.y0 - ln2).abs() <= 1e-6
        && gap <= 1e-3
        && convex >= -1e-9;
    let uni = GridMeasure::uniform(0.0, 1.0, 1.0, 1024).map_err(|e| e.to_string())?;
    let up = drift_profile(&uni, 4.0, 4001).map_err(|e| e.to_string())?;
    // oracle: on [0, 1], U(y) = y² − y + ½, and U(y) = y ⇔ y² − 2y + ½ = 0
    let root = 1.0 - 0.5f64.sqrt();
    let uni_ok = (up.y0 - root).abs() <= 1e-6;
    Ok((
        exp_ok && uni_ok,
        format!(
            "Exp(1): U(0)-1={:.1e}, argmin {argmin:.4} vs ln2 (cell {cell:.0e}), y0-ln2={:.1e}, gap@20={gap:.1e}, \
             min 2nd diff {convex:.1e}; Unif(0,1): y0={:.9} vs 1-1/sqrt2={root:.9}",
            u0 - 1.0,
            prof.y0 - ln2,
            up.y0
        ),
    ))
}

fn c6_drift_condition() -> Outcome {
    let exp = GridMeasure::exponential(1.0, 32.0, 1 << 19).map_err(|e| e.to_string())?;
    let r = verify_drift_condition(&exp, 0.5, 2.0).map_err(|e| e.to_string())?;
    // b = E + ε; the grid mean exceeds 1 by O(h²), within the 1e-9 tolerance on U(0)
    let ok = r.passed && r.b.is_finite() && r.b <= 1.5 + 1e-9;
    Ok((ok, format!("passed={}, b={:.12}, {} points checked", r.passed, r.b, r.checked)))
}

fn random_atomic(rng: &mut ChaCha8Rng, k: usize, scale: f64) -> AtomicMeasure {
    let raw: Vec<(f64, f64)> = (0..k).map(|_| (rng.gen::<f64>() * scale, rng.gen::<f64>() + 0.05)).collect();
    let total: f64 = raw.iter().map(|a| a.1).sum();
    AtomicMeasure::new(raw.into_iter().map(|(x, w)| (x, w / total)).collect()).unwrap()
}

fn c7_wasserstein_decrease() -> Outcome {
    let grid = |rate: f64| -> Result<Measure, String> {
        Ok(GridMeasure::exponential(rate, 30.0, 1 << 12).map_err(|e| e.to_string())?.into())
    };
    let (mu, rho, pi) = (grid(1.0)?, grid(2.0)?, grid(3.0)?);
    let mut ok = true;
    let mut detail = Vec::new();
    for p in [1.0, 2.0] {
        let seq = decrease_experiment(&rho, &pi, &mu, p, 10, &PushOptions::default()).map_err(|e| e.to_string())?;
        let min_drop = seq.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min);
        ok &= min_drop > 1e-9;
        detail.push(format!("p={p}: W {:.3e} -> {:.3e}, min step drop {min_drop:.2e}", seq[0], seq[10]));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ACCEPTANCE_SEED);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let p = if trial % 2 == 0 { 1.0 } else { 2.0 };
        let raw: Vec<(f64, f64, f64)> =
            (0..10).map(|_| (rng.gen::<f64>() * 3.0, rng.gen::<f64>() * 3.0, rng.gen::<f64>() + 0.05)).collect();
        let total: f64 = raw.iter().map(|a| a.2).sum();
        let gamma = Coupling2D::new(raw.into_iter().map(|(x, y, w)| (x, y, w / total)).collect()).unwrap();
        let mu = random_atomic(&mut rng, 5, 3.0);
        let lhs = wp_pow_of_coupling(&coupling_push(&gamma, &mu).unwrap(), p).unwrap();
        let rhs = wp_pow_of_coupling(&gamma, p).unwrap() - subtraction_term(&gamma, &mu, p).unwrap();
        worst = worst.max((lhs - rhs).abs());
    }
    ok &= worst <= 1e-12;
    detail.push(format!("subtraction identity max error {worst:.1e} over 100 couplings"));
    Ok((ok, detail.join("; ")))
}

/// Exact transport cost by linear programming.
fn lp_transport(a: &AtomicMeasure, b: &AtomicMeasure, p: f64) -> f64 {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<Vec<_>> = a
        .atoms()
        .iter()
        .map(|&(x, _)| {
            b.atoms().iter().map(|&(y, _)| lp.add_var((x - y).abs().powf(p), (0.0, f64::INFINITY))).collect()
        })
        .collect();
    for (i, &(_, w)) in a.atoms().iter().enumerate() {
        let row: Vec<_> = vars[i].iter().map(|&v| (v, 1.0)).collect();
        lp.add_constraint(row.as_slice(), ComparisonOp::Eq, w);
    }
    for (j, &(_, w)) in b.atoms().iter().enumerate() {
        let col: Vec<_> = vars.iter().map(|r| (r[j], 1.0)).collect();
        lp.add_constraint(col.as_slice(), ComparisonOp::Eq, w);
    }
    lp.solve().expect("transport LP is feasible").objective()
}

fn c8_quantile_coupling_optimal() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(ACCEPTANCE_SEED);
    let mut worst: f64 = 0.0;
    for trial in 0..200 {
        let p = [1.0, 1.5, 2.0, 3.0][trial % 4];
        let (ka, kb) = (rng.gen_range(1..=5), rng.gen_range(1..=5));
        let a = random_atomic(&mut rng, ka, 4.0);
        let b = random_atomic(&mut rng, kb, 4.0);
        let w = wasserstein_p(&a.clone().into(), &b.clone().into(), p).map_err(|e| e.to_string())?;
        let oracle = lp_transport(&a, &b, p).max(0.0).powf(1.0 / p);
        worst = worst.max((w - oracle).abs());
    }
    Ok((worst <= 1e-9, format!("max |W_p - LP optimum| = {worst:.2e} over 200 pairs")))
}

fn c9_abc_witnesses() -> Outcome {
    let mut detail = Vec::new();
    let uni = GridMeasure::uniform(0.0, 1.0, 1.0, 1024).map_err(|e| e.to_string())?;
    let u_out = abc_check(&uni, 0.5, 1.0, 0.5, 1000, ACCEPTANCE_SEED, None).map_err(|e| e.to_string())?;
    detail.push(format!("Unif(0,1) (0.5,1,0.5): {}", if u_out.passed() { "pass" } else { "FAIL" }));
    // constants for Exp(1): c = 1, κ = 0.2, C = min(e^{−c}(1 − e^{−1}), ι)
    let (c, kappa) = (1.0f64, 0.2f64);
    let iota = (1..=200_000)
        .map(|k| {
            let w = 2.0 * c * k as f64 / 200_000.0;
            (-kappa * w).exp() * (1.0 - (-(1.0 - 2.0 * kappa) * w).exp()) / (1.0 - (-w).exp())
        })
        .fold(f64::INFINITY, f64::min);
    let big_c = ((-c).exp() * (1.0 - (-1.0f64).exp())).min(iota);
    let exp = GridMeasure::exponential(1.0, 40.0, 1 << 16).map_err(|e| e.to_string())?;
    let e_out =
        abc_check(&exp, 1.0 - 2.0 * kappa, 1.0, big_c, 1000, ACCEPTANCE_SEED, Some(c)).map_err(|e| e.to_string())?;
    match &e_out {
        absdyn_core::metric::AbcOutcome::Witness(_) => detail.push(format!("Exp(1) (A=0.6,B=1,C={big_c:.4}): pass")),
        absdyn_core::metric::AbcOutcome::Violated { probe, index } => detail.push(format!(
            "Exp(1) (A=0.6,B=1,C={big_c:.4}): FAIL at probe {index}, interval ({:.3}, {:.3}) width {:.3}, mass margin {:.2e}",
            probe.x,
            probe.y,
            probe.y - probe.x,
            probe.margin_mass
        )),
    }
    let rb = rate_bound(1.0, 0.5, 1.0, 0.2, 1.0, 100).map_err(|e| e.to_string())?;
    let rb_ok = (rb.c - 0.1).abs() < 1e-15 && rb.iterates[100] <= 1.0 / 11.0;
    detail.push(format!("v_100 = {:.5} (<= 1/11)", rb.iterates[100]));
    // contraction run with the uniform reference
    let g = |a: f64, b: f64| -> Result<Measure, String> {
        Ok(GridMeasure::uniform(a, b, 2.0, 1 << 12).map_err(|e| e.to_string())?.into())
    };
    let seq = decrease_experiment(&g(0.0, 2.0)?, &g(0.0, 0.5)?, &g(0.0, 1.0)?, 1.0, 32, &PushOptions::default())
        .map_err(|e| e.to_string())?;
    // the run collapses faster than any power and hits exact zero; fit the
    // part above double resolution
    let resolved = seq[1..].iter().take_while(|&&w| w > 1e-15).count();
    let exponent = fit_poly_rate(&seq[1..=resolved]).map_err(|e| e.to_string())?;
    detail.push(format!(
        "contraction exponent {exponent:.2} (<= -0.5) over {resolved} resolved steps, W_1 {:.2e} -> {:.2e}",
        seq[0], seq[resolved]
    ));
    Ok((u_out.passed() && e_out.passed() && rb_ok && exponent <= -0.5, detail.join("; ")))
}

fn c10_dichotomy() -> Outcome {
    let lat = lattice_test(&[0.75, 1.25], 1e-9).map_err(|e| e.to_string())?;
    let w = lat.step.unwrap_or(f64::NAN);
    let x0 = 0.3;
    let pts = reach_set(x0, &[0.75, 1.25], 25, 1e-9).map_err(|e| e.to_string())?;
    let lattice_ok = lat.is_lattice && (w - 0.25).abs() < 1e-12 && on_lattice(&pts, x0, w, 1e-9);
    let root2 = 2f64.sqrt();
    let irr = reach_set(0.0, &[1.0, root2], 25, 1e-9).map_err(|e| e.to_string())?;
    let covers = epsilon_cover(&irr, 0.0, root2, 0.02).map_err(|e| e.to_string())?;
    let inside: Vec<f64> = irr.iter().copied().filter(|&x| x < root2).collect();
    let radius =
        inside.windows(2).map(|p| (p[1] - p[0]) / 2.0).fold(root2 - inside.last().copied().unwrap_or(0.0), f64::max);
    Ok((
        lattice_ok && covers,
        format!(
            "w={w}, {} lattice points on (x0+wZ)u(-x0+wZ); irrational reach set at depth 25 has {} points, \
             covering radius {radius:.4}, 0.02-cover: {covers}",
            pts.len(),
            irr.len()
        ),
    ))
}

fn c11_invariant_uniqueness() -> Outcome {
    let uni = GridMeasure::uniform(0.0, 1.0, 1.0, 1024).map_err(|e| e.to_string())?;
    let t = Instant::now();
    let a = invariant_estimate(&uni, 0.3, 1000, 1_000_000, ACCEPTANCE_SEED).map_err(|e| e.to_string())?;
    let b = invariant_estimate(&uni, 0.9, 1000, 1_000_000, ACCEPTANCE_SEED + 1).map_err(|e| e.to_string())?;
    let w = wasserstein_p(&a.into(), &b.into(), 1.0).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    Ok((w <= 0.01 && secs < 30.0, format!("W_1 = {w:.2e} (<= 0.01) in {secs:.2} s (< 30 s)")))
}

fn c12_structure() -> Outcome {
    let mut found = Vec::new();
    for (support, damping) in [(2, 1.0), (8, 1.0), (8, 0.5), (16, 1.0)] {
        let cfg = FixedPointSearch { support, damping, starts: 32, seed: ACCEPTANCE_SEED, ..Default::default() };
        found.extend(find_fixed_points(&cfg).map_err(|e| e.to_string())?);
    }
    let mut ok = !found.is_empty();
    let mut trivial = 0;
    for fp in &found {
        let p = fp.pmf.probs();
        if (p[0] - 1.0).abs() < 1e-12 {
            trivial += 1;
            continue;
        }
        ok &= p[0] <= 0.5 + 1e-12;
        // finite support other than δ₀ must be {0, k} with weights ½, ½
        let norm = normalized_support(&fp.pmf, 1e-12);
        let nz: Vec<f64> = p.iter().copied().filter(|&v| v > 1e-12).collect();
        ok &= norm == vec![0, 1] && nz.iter().all(|v| (v - 0.5).abs() <= 1e-12);
    }
    Ok((
        ok,
        format!("{} fixed points found ({trivial} trivial), all satisfy the structure constraints: {ok}", found.len()),
    ))
}

fn main() {
    let criteria: [(&str, Criterion); 12] = [
        ("exponential closure", c1_exponential_closure),
        ("exponential self fixed point", c2_exponential_self_fixed_point),
        ("geometric family exactness", c3_geometric_family),
        ("Mobius boundary identity", c4_mobius_boundary),
        ("drift landmarks", c5_drift_landmarks),
        ("drift condition", c6_drift_condition),
        ("Wasserstein monotone decrease", c7_wasserstein_decrease),
        ("quantile coupling optimality", c8_quantile_coupling_optimal),
        ("(A,B,C) witnesses", c9_abc_witnesses),
        ("lattice/dense dichotomy", c10_dichotomy),
        ("invariant uniqueness witness", c11_invariant_uniqueness),
        ("fixed point structure", c12_structure),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let (pass, detail) = match outcome {
            Ok((pass, detail)) => (pass, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!("criterion {:>2} [{}] {name}: {detail}", i + 1, if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
