//! Pushforwards of measures: `T_θ#π`, the μ-average `T*π`, iteration, and
//! the coupling pushforward `T**γ`.
//!
//! Precision hierarchy: atomic inputs take the exact path; a grid pushed by
//! an atomic μ is an exact mixture of shifted grids; grid by grid is the
//! exact pushforward of the piecewise-constant densities, computed as an
//! `O(n²)` double sum. Only atomic-π-with-grid-μ needs a lossy conversion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{AtomicMeasure, GridMeasure, Measure, Measure1D, DERIVED_SUM_TOL};
use crate::orbits::apply_map;
use crate::par;

/// Default support-size cap for atomic iterations.
pub const ATOM_CAP: usize = 100_000;
/// Coarsening starts at this fraction of the support range.
pub const COARSEN_REL: f64 = 1e-6;

/// Knobs shared by the pushforward operators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PushOptions {
    /// Reject lossy representation conversions.
    pub strict: bool,
    pub atom_cap: usize,
    /// Spread grid tail mass over the interior instead of failing when it
    /// exceeds the tail limit.
    pub renormalize_tail: bool,
}

impl Default for PushOptions {
    fn default() -> Self {
        PushOptions { strict: false, atom_cap: ATOM_CAP, renormalize_tail: false }
    }
}

fn prepare_grid(g: &GridMeasure, opts: &PushOptions) -> Result<GridMeasure> {
    match g.check_tail() {
        Ok(()) => Ok(g.clone()),
        Err(_) if opts.renormalize_tail => Ok(g.renormalized()),
        Err(e) => Err(e),
    }
}

/// `(T_θ)_# π`.
pub fn push_theta(pi: &Measure, theta: f64, opts: &PushOptions) -> Result<Measure> {
    if !(theta.is_finite() && theta >= 0.0) {
        return Err(Error::Domain(format!("theta {theta} must be finite and nonnegative")));
    }
    match pi {
        Measure::Atomic(a) => {
            let atoms = a.atoms().iter().map(|&(x, w)| (apply_map(x, theta), w)).collect();
            Ok(AtomicMeasure::assemble(atoms)?.into())
        }
        Measure::Empirical(e) => {
            let pts = e.samples().iter().map(|&x| apply_map(x, theta)).collect();
            Ok(crate::measures::EmpiricalMeasure::new(pts)?.into())
        }
        Measure::Grid(g) => {
            let g = prepare_grid(g, opts)?;
            if theta == 0.0 {
                // T_0 is the identity on the half-line
                return Ok(g.into());
            }
            Ok(GridMeasure::new(g.x_max(), grid_shift_masses(&g, theta)?.1, g.tail_mass())?.into())
        }
    }
}

/// Exact cell masses of `T_θ#π` on π's own grid, returned with the density
/// values. The tail is carried over unchanged by the caller.
fn grid_shift_masses(g: &GridMeasure, theta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if theta > g.x_max() {
        return Err(Error::Domain(format!(
            "theta {theta} exceeds the grid range {}; the image does not fit",
            g.x_max()
        )));
    }
    let h = g.h();
    let f = |y: f64| g.cdf_open(y.clamp(0.0, g.x_max()));
    let masses: Vec<f64> = (0..g.n())
        .map(|i| {
            let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
            // |t − θ| ∈ [a, b)  ⇔  t ∈ [θ + a, θ + b) ∪ (θ − b, θ − a]
            ((f(theta + b) - f(theta + a)) + (f(theta - a) - f(theta - b))).max(0.0)
        })
        .collect();
    let values = masses.iter().map(|m| m / h).collect();
    Ok((masses, values))
}

/// `T*_μ π = ∫ (T_θ)_# π μ(dθ)`.
pub fn push_avg(pi: &Measure, mu: &Measure, opts: &PushOptions) -> Result<Measure> {
    match (pi, mu) {
        (Measure::Grid(p), Measure::Grid(m)) => {
            let p = prepare_grid(p, opts)?;
            let m = prepare_grid(m, opts)?;
            let m = if p.same_grid(&m) {
                m
            } else if opts.strict {
                return Err(Error::StrictConversion(format!(
                    "grids differ: [0, {}] x {} vs [0, {}] x {}",
                    p.x_max(),
                    p.n(),
                    m.x_max(),
                    m.n()
                )));
            } else {
                log::warn!("re-binning the reference grid onto the input grid");
                Measure::Grid(m).to_grid(p.x_max(), p.n())?
            };
            Ok(push_avg_grid(&p, &m)?.into())
        }
        (Measure::Grid(p), _) => {
            let p = prepare_grid(p, opts)?;
            let atoms = mu.to_atomic()?;
            Ok(push_mixture(&p, &atoms)?.into())
        }
        (_, Measure::Grid(m)) => {
            if opts.strict {
                return Err(Error::StrictConversion(format!(
                    "{} input against a grid reference would be binned",
                    pi.kind()
                )));
            }
            log::warn!("binning the {} input onto the reference grid", pi.kind());
            let p = pi.to_grid(m.x_max(), m.n())?;
            push_avg(&Measure::Grid(p), mu, opts)
        }
        _ => Ok(push_atomic(&pi.to_atomic()?, &mu.to_atomic()?, opts.atom_cap)?.into()),
    }
}

/// All pairs `(|x − θ|, w m)`, merged and, above `cap`, coarsened.
pub fn push_atomic(pi: &AtomicMeasure, mu: &AtomicMeasure, cap: usize) -> Result<AtomicMeasure> {
    let atoms: Vec<(f64, f64)> =
        pi.atoms().iter().flat_map(|&(x, w)| mu.atoms().iter().map(move |&(t, m)| (apply_map(x, t), w * m))).collect();
    let out = AtomicMeasure::assemble(atoms)?;
    Ok(enforce_cap(out, cap))
}

fn enforce_cap(m: AtomicMeasure, cap: usize) -> AtomicMeasure {
    if m.len() <= cap {
        return m;
    }
    let locs = m.atoms();
    let range = (locs[locs.len() - 1].0 - locs[0].0).max(f64::MIN_POSITIVE);
    let mut width = COARSEN_REL * range;
    let before = m.len();
    let mut out = m.coarsened(width);
    while out.len() > cap {
        width *= 2.0;
        out = m.coarsened(width);
    }
    log::warn!("atom cap {cap} exceeded ({before} atoms); coarsened to {} atoms at bin width {width:e}", out.len());
    out
}

/// Grid π pushed by finitely supported μ: the weighted sum of `T_θ#π`.
fn push_mixture(p: &GridMeasure, mu: &AtomicMeasure) -> Result<GridMeasure> {
    let shifted = par::map_slice(mu.atoms(), |&(t, m)| grid_shift_masses(p, t).map(|(_, v)| (v, m)));
    let mut values = vec![0.0; p.n()];
    for s in shifted {
        let (v, m) = s?;
        values.iter_mut().zip(v).for_each(|(acc, x)| *acc += m * x);
    }
    GridMeasure::new(p.x_max(), values, p.tail_mass())
}

/// Grid by grid. With `P_k`, `M_j` the cell masses of π and μ, cell `i` of
/// the output receives `½ Σ_j M_j (P_{i+j} + P_{i+j+1} + P_{j−i−1} + P_{j−i})`:
/// the average over θ uniform in cell `j` of the mass of π whose image
/// lands in cell `i`. Interior mass is conserved exactly.
pub fn push_avg_grid(p: &GridMeasure, m: &GridMeasure) -> Result<GridMeasure> {
    if !p.same_grid(m) {
        return Err(Error::GridMismatch(format!("{} cells vs {} cells", p.n(), m.n())));
    }
    let n = p.n() as isize;
    let pm = p.cell_masses();
    let mm = m.cell_masses();
    let at = |k: isize| if (0..n).contains(&k) { pm[k as usize] } else { 0.0 };
    // A_k = P_k + P_{k+1}, B_k = P_{k−1} + P_k
    let a: Vec<f64> = (0..2 * n).map(|k| at(k) + at(k + 1)).collect();
    let b: Vec<f64> = (-n..n).map(|k| at(k - 1) + at(k)).collect();
    let h = p.h();
    let values = par::map_range(p.n(), |i| {
        let i = i as isize;
        let acc = crate::kahan_sum(
            mm.iter()
                .enumerate()
                .filter(|(_, &mj)| mj != 0.0)
                .map(|(j, &mj)| mj * (a[(i + j as isize) as usize] + b[(j as isize - i + n) as usize])),
        );
        0.5 * acc / h
    });
    let (tp, tm) = (p.tail_mass(), m.tail_mass());
    GridMeasure::new(p.x_max(), values, tp + tm - tp * tm)
}

/// `π, T*π, …, T*ⁿπ`.
pub fn iterate_push(pi: &Measure, mu: &Measure, n: usize, opts: &PushOptions) -> Result<Vec<Measure>> {
    if n == 0 {
        return Err(Error::Domain("iteration count must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(n + 1);
    out.push(pi.clone());
    for k in 0..n {
        let next = push_avg(&out[k], mu, opts)?;
        let next = match next {
            Measure::Grid(g) if opts.renormalize_tail && g.tail_mass() > 0.0 => Measure::Grid(g.renormalized()),
            other => other,
        };
        out.push(next);
    }
    Ok(out)
}

/// A finitely supported joint law on the quarter plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CouplingRepr", into = "CouplingRepr")]
pub struct Coupling2D {
    atoms: Vec<(f64, f64, f64)>,
}

#[derive(Serialize, Deserialize)]
struct CouplingRepr {
    atoms: Vec<(f64, f64, f64)>,
}

impl TryFrom<CouplingRepr> for Coupling2D {
    type Error = Error;

    fn try_from(r: CouplingRepr) -> Result<Self> {
        Coupling2D::new(r.atoms)
    }
}

impl From<Coupling2D> for CouplingRepr {
    fn from(c: Coupling2D) -> Self {
        CouplingRepr { atoms: c.atoms }
    }
}

impl Coupling2D {
    /// Atoms `(x, y, weight)`; zero weights are dropped and the rest must sum to one.
    pub fn new(atoms: Vec<(f64, f64, f64)>) -> Result<Self> {
        Self::build(atoms, crate::measures::WEIGHT_SUM_TOL)
    }

    fn build(atoms: Vec<(f64, f64, f64)>, tol: f64) -> Result<Self> {
        for &(x, y, w) in &atoms {
            if !(x.is_finite() && y.is_finite() && x >= 0.0 && y >= 0.0) {
                return Err(Error::InvalidMeasure(format!("coupling atom ({x}, {y}) is off the quarter plane")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidMeasure(format!("coupling weight {w} is negative")));
            }
        }
        let atoms: Vec<_> = atoms.into_iter().filter(|a| a.2 > 0.0).collect();
        let total = crate::kahan_sum(atoms.iter().map(|a| a.2));
        if (total - 1.0).abs() > tol {
            return Err(Error::InvalidMeasure(format!("coupling weights sum to {total}")));
        }
        Ok(Coupling2D { atoms })
    }

    /// Independent coupling `ρ ⊗ π`.
    pub fn product(rho: &AtomicMeasure, pi: &AtomicMeasure) -> Self {
        let atoms =
            rho.atoms().iter().flat_map(|&(x, a)| pi.atoms().iter().map(move |&(y, b)| (x, y, a * b))).collect();
        Coupling2D { atoms }
    }

    pub fn atoms(&self) -> &[(f64, f64, f64)] {
        &self.atoms
    }

    pub fn marginals(&self) -> Result<(AtomicMeasure, AtomicMeasure)> {
        let xs = self.atoms.iter().map(|&(x, _, w)| (x, w)).collect();
        let ys = self.atoms.iter().map(|&(_, y, w)| (y, w)).collect();
        Ok((AtomicMeasure::assemble(xs)?, AtomicMeasure::assemble(ys)?))
    }
}

/// `E_μ (T_θ × T_θ)_# γ`, atom by atom.
pub fn coupling_push(gamma: &Coupling2D, mu: &AtomicMeasure) -> Result<Coupling2D> {
    let atoms = gamma
        .atoms
        .iter()
        .flat_map(|&(x, y, w)| mu.atoms().iter().map(move |&(t, m)| (apply_map(x, t), apply_map(y, t), w * m)))
        .collect();
    Coupling2D::build(atoms, DERIVED_SUM_TOL)
}

/// Whether θ lies strictly between x and y.
#[inline]
pub fn in_z(x: f64, y: f64, theta: f64) -> bool {
    x.min(y) < theta && theta < x.max(y)
}

/// `Σ_{θ ∈ Z} w m (|y − x|^p − |x + y − 2θ|^p)`: the exact loss of
/// `∫|x − y|^p` under one coupling pushforward.
pub fn subtraction_term(gamma: &Coupling2D, mu: &AtomicMeasure, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::Domain(format!("exponent {p} must be at least 1")));
    }
    Ok(crate::kahan_sum(gamma.atoms.iter().flat_map(|&(x, y, w)| {
        mu.atoms()
            .iter()
            .filter(move |&&(t, _)| in_z(x, y, t))
            .map(move |&(t, m)| w * m * ((y - x).abs().powf(p) - (x + y - 2.0 * t).abs().powf(p)))
    })))
}
