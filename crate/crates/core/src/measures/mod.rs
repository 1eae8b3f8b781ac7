//! Probability measures on the half-line in three interchangeable forms.
//!
//! Two distribution functions are exposed and kept distinct on purpose:
//! [`Measure1D::cdf_open`] is `m(y) = μ[0, y)`, the half-open form consumed by
//! the drift function, while [`Measure1D::cdf`] is the usual right-closed
//! `F(y) = μ[0, y]` whose generalized inverse is [`Measure1D::quantile`].

mod atomic;
mod empirical;
mod grid;

pub(crate) use atomic::DERIVED_SUM_TOL;
pub use atomic::{AtomicMeasure, MERGE_TOL, WEIGHT_SUM_TOL};
pub use empirical::EmpiricalMeasure;
pub use grid::{GridMeasure, GRID_MASS_TOL, TAIL_LIMIT};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Queries every representation answers.
pub trait Measure1D {
    /// `μ[0, y)`. An atom at `y` is not counted.
    fn cdf_open(&self, y: f64) -> f64;
    /// `μ[0, y]`.
    fn cdf(&self, y: f64) -> f64;
    /// `∫_{[0, y)} θ μ(dθ)`.
    fn partial_mean(&self, y: f64) -> Result<f64>;
    /// `inf { y : F(y) ≥ u }` for `u ∈ (0, 1)`.
    fn quantile(&self, u: f64) -> Result<f64>;
    fn mean(&self) -> Result<f64>;
    fn second_moment(&self) -> Result<f64>;
    /// Right end of the support (`x_max` for a grid carrying tail mass).
    fn support_max(&self) -> f64;
    fn is_singleton(&self) -> bool;

    /// `μ(a, b)` for the open interval.
    fn mass_open(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        (self.cdf_open(b) - self.cdf(a)).max(0.0)
    }
}

pub(crate) fn check_unit_interval(u: f64) -> Result<()> {
    if u > 0.0 && u < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("quantile level {u} must lie strictly inside (0, 1)")))
    }
}

/// Mean, second moment, variance and median of a measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentProfile {
    pub mean: f64,
    pub second_moment: f64,
    pub variance: f64,
    pub median: f64,
}

/// A measure in any of the supported representations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Measure {
    Atomic(AtomicMeasure),
    Grid(GridMeasure),
    Empirical(EmpiricalMeasure),
}

macro_rules! dispatch {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            Measure::Atomic($m) => $e,
            Measure::Grid($m) => $e,
            Measure::Empirical($m) => $e,
        }
    };
}

impl Measure1D for Measure {
    fn cdf_open(&self, y: f64) -> f64 {
        dispatch!(self, m => m.cdf_open(y))
    }
    fn cdf(&self, y: f64) -> f64 {
        dispatch!(self, m => m.cdf(y))
    }
    fn partial_mean(&self, y: f64) -> Result<f64> {
        dispatch!(self, m => m.partial_mean(y))
    }
    fn quantile(&self, u: f64) -> Result<f64> {
        dispatch!(self, m => m.quantile(u))
    }
    fn mean(&self) -> Result<f64> {
        dispatch!(self, m => m.mean())
    }
    fn second_moment(&self) -> Result<f64> {
        dispatch!(self, m => m.second_moment())
    }
    fn support_max(&self) -> f64 {
        dispatch!(self, m => m.support_max())
    }
    fn is_singleton(&self) -> bool {
        dispatch!(self, m => m.is_singleton())
    }
}

impl From<AtomicMeasure> for Measure {
    fn from(m: AtomicMeasure) -> Self {
        Measure::Atomic(m)
    }
}

impl From<GridMeasure> for Measure {
    fn from(m: GridMeasure) -> Self {
        Measure::Grid(m)
    }
}

impl From<EmpiricalMeasure> for Measure {
    fn from(m: EmpiricalMeasure) -> Self {
        Measure::Empirical(m)
    }
}

impl Measure {
    pub fn kind(&self) -> &'static str {
        match self {
            Measure::Atomic(_) => "atomic",
            Measure::Grid(_) => "grid",
            Measure::Empirical(_) => "empirical",
        }
    }

    /// Total mass as stored (one up to representation tolerance).
    pub fn total_mass(&self) -> f64 {
        match self {
            Measure::Atomic(a) => a.total_mass(),
            Measure::Grid(g) => g.interior_mass() + g.tail_mass(),
            Measure::Empirical(_) => 1.0,
        }
    }

    /// Converts to a finitely supported measure. Grids become one atom per
    /// non-empty cell at the midpoint, plus an atom at `x_max` for the tail.
    pub fn to_atomic(&self) -> Result<AtomicMeasure> {
        match self {
            Measure::Atomic(a) => Ok(a.clone()),
            Measure::Grid(g) => {
                let mut atoms: Vec<(f64, f64)> = g
                    .cell_masses()
                    .into_iter()
                    .enumerate()
                    .filter(|(_, w)| *w > 0.0)
                    .map(|(i, w)| (g.midpoint(i), w))
                    .collect();
                if g.tail_mass() > 0.0 {
                    atoms.push((g.x_max(), g.tail_mass()));
                }
                AtomicMeasure::assemble(atoms)
            }
            Measure::Empirical(e) => {
                let w = 1.0 / e.len() as f64;
                AtomicMeasure::assemble(e.samples().iter().map(|&x| (x, w)).collect())
            }
        }
    }

    /// Converts to a density on `n` cells of `[0, x_max]`. Point masses are
    /// smeared over their cell; mass at or beyond `x_max` becomes tail mass.
    pub fn to_grid(&self, x_max: f64, n: usize) -> Result<GridMeasure> {
        if let Measure::Grid(g) = self {
            if g.n() == n && g.x_max() == x_max {
                return Ok(g.clone());
            }
            return regrid(g, x_max, n);
        }
        let atoms = self.to_atomic()?;
        let h = x_max / n as f64;
        let mut values = vec![0.0; n];
        let mut tail = 0.0;
        for &(x, w) in atoms.atoms() {
            if x >= x_max {
                tail += w;
            } else {
                let i = ((x / h) as usize).min(n - 1);
                values[i] += w / h;
            }
        }
        GridMeasure::new(x_max, values, tail)
    }

    pub fn moments(&self) -> Result<MomentProfile> {
        moments(self)
    }

    pub fn sample(&self, seed: u64, count: usize) -> Result<EmpiricalMeasure> {
        sample(self, seed, count)
    }
}

/// Re-bins a grid onto another grid by exact CDF differences.
fn regrid(g: &GridMeasure, x_max: f64, n: usize) -> Result<GridMeasure> {
    let h = x_max / n as f64;
    let values = (0..n)
        .map(|i| {
            let a = i as f64 * h;
            let b = a + h;
            (g.cdf_open(b.min(g.x_max())) - g.cdf_open(a.min(g.x_max()))).max(0.0) / h
        })
        .collect();
    let tail = if x_max >= g.x_max() { g.tail_mass() } else { 1.0 - g.cdf_open(x_max) };
    if x_max > g.x_max() && g.tail_mass() > 0.0 {
        // keep the tail-as-atom convention: put it in the cell holding the old x_max
        let mut v: Vec<f64> = values;
        let i = ((g.x_max() / h) as usize).min(n - 1);
        v[i] += g.tail_mass() / h;
        return GridMeasure::new(x_max, v, 0.0);
    }
    GridMeasure::new(x_max, values, tail.max(0.0))
}

/// Mean, second moment, variance and median (`quantile(½)`).
pub fn moments<M: Measure1D + ?Sized>(m: &M) -> Result<MomentProfile> {
    let mean = m.mean()?;
    let second_moment = m.second_moment()?;
    if !mean.is_finite() || !second_moment.is_finite() {
        return Err(Error::NonFiniteMoment(format!("mean {mean}, second moment {second_moment}")));
    }
    let mut variance = second_moment - mean * mean;
    if variance < 0.0 {
        if variance < -1e-9 {
            return Err(Error::NonFiniteMoment(format!("negative variance {variance}")));
        }
        variance = 0.0;
    }
    Ok(MomentProfile { mean, second_moment, variance, median: m.quantile(0.5)? })
}

/// A uniform draw from the open interval (0, 1).
pub fn open_uniform<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return u;
        }
    }
}

/// `count` i.i.d. draws by inverse CDF from a ChaCha stream seeded with `seed`.
pub fn sample<M: Measure1D + ?Sized>(m: &M, seed: u64, count: usize) -> Result<EmpiricalMeasure> {
    if count == 0 {
        return Err(Error::Domain("sample count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws = (0..count).map(|_| m.quantile(open_uniform(&mut rng))).collect::<Result<Vec<_>>>()?;
    EmpiricalMeasure::new(draws)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_half() -> Measure {
        AtomicMeasure::new(vec![(0.0, 0.5), (1.0, 0.5)]).unwrap().into()
    }

    #[test]
    fn moments_of_half_half() {
        let p = half_half().moments().unwrap();
        assert_eq!(p.mean, 0.5);
        assert_eq!(p.second_moment, 0.5);
        assert_eq!(p.variance, 0.25);
        // inf { y : F(y) >= 1/2 } = 0
        assert_eq!(p.median, 0.0);
    }

    #[test]
    fn moments_of_dirac_zero() {
        let d: Measure = AtomicMeasure::dirac(0.0).unwrap().into();
        let p = d.moments().unwrap();
        assert_eq!((p.mean, p.second_moment, p.variance, p.median), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = half_half();
        assert_eq!(m.sample(7, 100).unwrap(), m.sample(7, 100).unwrap());
        let d: Measure = AtomicMeasure::dirac(0.0).unwrap().into();
        assert_eq!(d.sample(1, 5).unwrap().samples(), &[0.0; 5]);
    }

    #[test]
    fn sampling_half_half_is_balanced() {
        let s = half_half().sample(11, 100_000).unwrap();
        let ones = s.samples().iter().filter(|&&x| x == 1.0).count() as f64 / 1e5;
        assert!((ones - 0.5).abs() < 0.01, "{ones}");
    }

    #[test]
    fn json_schema_round_trip() {
        let m = half_half();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"type":"atomic","atoms":[[0.0,0.5],[1.0,0.5]]}"#);
        let back: Measure = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        let g: Measure = GridMeasure::uniform(0.0, 1.0, 1.0, 4).unwrap().into();
        let s = serde_json::to_string(&g).unwrap();
        assert!(s.starts_with(r#"{"type":"grid","x_max":1.0,"n":4"#), "{s}");
        let back: Measure = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
        let bad = r#"{"type":"atomic","atoms":[[0.0,0.7],[1.0,0.5]]}"#;
        assert!(serde_json::from_str::<Measure>(bad).is_err());
    }

    #[test]
    fn grid_round_trip_through_atoms() {
        let g = GridMeasure::exponential(1.0, 30.0, 512).unwrap();
        let a = Measure::Grid(g.clone()).to_atomic().unwrap();
        assert!((a.mean().unwrap() - g.mean().unwrap()).abs() < 1e-3);
        let back = Measure::Atomic(a).to_grid(30.0, 512).unwrap();
        for (x, y) in back.values().iter().zip(g.values()) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}
