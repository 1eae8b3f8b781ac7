use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{check_unit_interval, Measure1D};

/// Allowed deviation of `h * sum(values) + tail_mass` from one.
pub const GRID_MASS_TOL: f64 = 1e-9;
/// Operations refuse grids whose tail mass exceeds this unless renormalized first.
pub const TAIL_LIMIT: f64 = 1e-6;

/// A probability density sampled on `n` uniform cells of `[0, x_max]`.
///
/// The density is piecewise constant: cell `i` covers `[i h, (i + 1) h)` with
/// `h = x_max / n` and carries density `values[i]`, its midpoint sample.
/// Mass beyond `x_max` is kept as `tail_mass` and, for every functional,
/// treated as an atom sitting at `x_max`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct GridMeasure {
    x_max: f64,
    values: Vec<f64>,
    tail_mass: f64,
    /// cumulative mass at cell boundaries, `n + 1` entries
    cum: Vec<f64>,
    /// cumulative first moment at cell boundaries
    cum_m: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    x_max: f64,
    n: usize,
    values: Vec<f64>,
    tail_mass: f64,
}

impl TryFrom<GridRepr> for GridMeasure {
    type Error = Error;

    fn try_from(r: GridRepr) -> Result<Self> {
        if r.values.len() != r.n {
            return Err(Error::InvalidMeasure(format!("n = {} but {} values given", r.n, r.values.len())));
        }
        GridMeasure::new(r.x_max, r.values, r.tail_mass)
    }
}

impl From<GridMeasure> for GridRepr {
    fn from(g: GridMeasure) -> Self {
        GridRepr { x_max: g.x_max, n: g.values.len(), values: g.values, tail_mass: g.tail_mass }
    }
}

impl PartialEq for GridMeasure {
    fn eq(&self, other: &Self) -> bool {
        self.x_max == other.x_max && self.values == other.values && self.tail_mass == other.tail_mass
    }
}

impl GridMeasure {
    pub fn new(x_max: f64, values: Vec<f64>, tail_mass: f64) -> Result<Self> {
        let g = Self::unchecked(x_max, values, tail_mass)?;
        let total = g.interior_mass() + g.tail_mass;
        if (total - 1.0).abs() > GRID_MASS_TOL {
            return Err(Error::InvalidMeasure(format!("grid mass is {total}, expected 1")));
        }
        Ok(g)
    }

    /// Builds the grid without checking total mass (used for intermediate sums).
    pub(crate) fn unchecked(x_max: f64, values: Vec<f64>, tail_mass: f64) -> Result<Self> {
        if !(x_max.is_finite() && x_max > 0.0) {
            return Err(Error::InvalidMeasure(format!("x_max = {x_max} must be positive")));
        }
        if values.is_empty() {
            return Err(Error::InvalidMeasure("grid needs at least one cell".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidMeasure(format!("density value {v} is negative or not finite")));
        }
        if !(tail_mass.is_finite() && tail_mass >= 0.0) {
            return Err(Error::InvalidMeasure(format!("tail mass {tail_mass} is negative")));
        }
        let n = values.len();
        let h = x_max / n as f64;
        let mut cum = Vec::with_capacity(n + 1);
        let mut cum_m = Vec::with_capacity(n + 1);
        let (mut acc, mut acc_m) = (0.0, 0.0);
        cum.push(0.0);
        cum_m.push(0.0);
        for (i, &v) in values.iter().enumerate() {
            let a = i as f64 * h;
            acc += v * h;
            // integral of t over [a, a + h] is h * (a + h / 2)
            acc_m += v * h * (a + 0.5 * h);
            cum.push(acc);
            cum_m.push(acc_m);
        }
        Ok(GridMeasure { x_max, values, tail_mass, cum, cum_m })
    }

    /// Samples `density` at cell midpoints and rescales so that the interior
    /// carries exactly `1 - tail_mass`.
    pub fn from_density<F: Fn(f64) -> f64>(x_max: f64, n: usize, tail_mass: f64, density: F) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidMeasure("grid needs at least one cell".into()));
        }
        let h = x_max / n as f64;
        let mut values: Vec<f64> = (0..n).map(|i| density((i as f64 + 0.5) * h)).collect();
        let raw: f64 = crate::par::kahan_sum(values.iter().copied()) * h;
        if !(raw > 0.0) {
            return Err(Error::InvalidMeasure("density has no mass on the grid".into()));
        }
        let scale = (1.0 - tail_mass) / raw;
        values.iter_mut().for_each(|v| *v *= scale);
        Self::new(x_max, values, tail_mass)
    }

    /// Exponential law with the given rate.
    pub fn exponential(rate: f64, x_max: f64, n: usize) -> Result<Self> {
        if !(rate > 0.0) {
            return Err(Error::Domain(format!("exponential rate {rate} must be positive")));
        }
        Self::from_density(x_max, n, (-rate * x_max).exp(), |x| rate * (-rate * x).exp())
    }

    /// Uniform law on `[a, b]`, with exact cell averages.
    pub fn uniform(a: f64, b: f64, x_max: f64, n: usize) -> Result<Self> {
        if !(0.0 <= a && a < b && b <= x_max) {
            return Err(Error::Domain(format!("uniform support [{a}, {b}] must lie in [0, {x_max}]")));
        }
        let h = x_max / n as f64;
        let values = (0..n)
            .map(|i| {
                let lo = (i as f64 * h).max(a);
                let hi = ((i + 1) as f64 * h).min(b);
                if hi > lo {
                    (hi - lo) / (h * (b - a))
                } else {
                    0.0
                }
            })
            .collect();
        Self::new(x_max, values, 0.0)
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn h(&self) -> f64 {
        self.x_max / self.values.len() as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.h()
    }

    pub fn interior_mass(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    /// Mass of each cell.
    pub fn cell_masses(&self) -> Vec<f64> {
        let h = self.h();
        self.values.iter().map(|v| v * h).collect()
    }

    /// Fails with [`Error::TailMass`] when the tail exceeds [`TAIL_LIMIT`].
    pub fn check_tail(&self) -> Result<()> {
        if self.tail_mass > TAIL_LIMIT {
            return Err(Error::TailMass { tail: self.tail_mass, limit: TAIL_LIMIT });
        }
        Ok(())
    }

    /// Spreads the tail mass proportionally over the interior.
    pub fn renormalized(&self) -> Self {
        let interior = self.interior_mass();
        let values = self.values.iter().map(|v| v / interior).collect();
        Self::unchecked(self.x_max, values, 0.0).expect("rescaled grid stays valid")
    }

    /// True when both grids share `x_max` and the cell count.
    pub fn same_grid(&self, other: &GridMeasure) -> bool {
        self.values.len() == other.values.len() && (self.x_max - other.x_max).abs() <= 1e-12 * self.x_max
    }

    /// Density evaluated with the piecewise-constant convention (zero outside `[0, x_max)`).
    pub fn density_at(&self, x: f64) -> f64 {
        if x < 0.0 || x >= self.x_max {
            return 0.0;
        }
        let i = ((x / self.h()) as usize).min(self.values.len() - 1);
        self.values[i]
    }

    fn cell_of(&self, y: f64) -> usize {
        ((y / self.h()) as usize).min(self.values.len() - 1)
    }

    fn interior_cdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        if y >= self.x_max {
            return self.interior_mass();
        }
        let i = self.cell_of(y);
        let a = i as f64 * self.h();
        self.cum[i] + self.values[i] * (y - a)
    }
}

impl Measure1D for GridMeasure {
    fn cdf_open(&self, y: f64) -> f64 {
        let c = self.interior_cdf(y);
        if y > self.x_max {
            c + self.tail_mass
        } else {
            c
        }
    }

    fn cdf(&self, y: f64) -> f64 {
        let c = self.interior_cdf(y);
        if y >= self.x_max {
            c + self.tail_mass
        } else {
            c
        }
    }

    fn partial_mean(&self, y: f64) -> Result<f64> {
        self.check_tail()?;
        if y <= 0.0 {
            return Ok(0.0);
        }
        if y >= self.x_max {
            let tail = if y > self.x_max { self.tail_mass * self.x_max } else { 0.0 };
            return Ok(*self.cum_m.last().unwrap() + tail);
        }
        let i = self.cell_of(y);
        let a = i as f64 * self.h();
        Ok(self.cum_m[i] + self.values[i] * 0.5 * (y * y - a * a))
    }

    fn quantile(&self, u: f64) -> Result<f64> {
        check_unit_interval(u)?;
        let n = self.values.len();
        if u > self.cum[n] {
            return Ok(self.x_max);
        }
        // first cell whose upper boundary reaches u
        let i = self.cum[1..].partition_point(|&c| c < u).min(n - 1);
        let a = i as f64 * self.h();
        let v = self.values[i];
        if v <= 0.0 {
            return Ok(a);
        }
        Ok((a + (u - self.cum[i]) / v).min(a + self.h()))
    }

    fn mean(&self) -> Result<f64> {
        self.partial_mean(f64::INFINITY)
    }

    fn second_moment(&self) -> Result<f64> {
        self.check_tail()?;
        let h = self.h();
        let body = crate::par::kahan_sum(self.values.iter().enumerate().map(|(i, &v)| {
            let a = i as f64 * h;
            let b = a + h;
            v * (b * b * b - a * a * a) / 3.0
        }));
        Ok(body + self.tail_mass * self.x_max * self.x_max)
    }

    fn support_max(&self) -> f64 {
        if self.tail_mass > 0.0 {
            return self.x_max;
        }
        let last = self.values.iter().rposition(|&v| v > 0.0).unwrap_or(0);
        (last + 1) as f64 * self.h()
    }

    fn is_singleton(&self) -> bool {
        false
    }
}
