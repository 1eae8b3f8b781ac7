use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{check_unit_interval, Measure1D};

/// Atoms whose locations differ by less than this are merged.
pub const MERGE_TOL: f64 = 1e-9;
/// Allowed deviation of the total weight from one for user-supplied atoms.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Looser bound for atoms produced by repeated arithmetic (pushforwards, products).
pub(crate) const DERIVED_SUM_TOL: f64 = 1e-9;

/// A finitely supported probability measure on the half-line.
///
/// Atoms are kept sorted by location with strictly increasing locations and
/// strictly positive weights. Cumulative weight and first-moment tables are
/// built once so that CDF and partial-mean queries are `O(log n)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "AtomicRepr", into = "AtomicRepr")]
pub struct AtomicMeasure {
    atoms: Vec<(f64, f64)>,
    cum_w: Vec<f64>,
    cum_m: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct AtomicRepr {
    atoms: Vec<(f64, f64)>,
}

impl TryFrom<AtomicRepr> for AtomicMeasure {
    type Error = Error;

    fn try_from(r: AtomicRepr) -> Result<Self> {
        AtomicMeasure::new(r.atoms)
    }
}

impl From<AtomicMeasure> for AtomicRepr {
    fn from(m: AtomicMeasure) -> Self {
        AtomicRepr { atoms: m.atoms }
    }
}

impl PartialEq for AtomicMeasure {
    fn eq(&self, other: &Self) -> bool {
        self.atoms == other.atoms
    }
}

impl AtomicMeasure {
    /// Builds a measure from `(location, weight)` pairs.
    ///
    /// Pairs are sorted, zero weights dropped and locations closer than
    /// [`MERGE_TOL`] merged. The weights must sum to one within
    /// [`WEIGHT_SUM_TOL`].
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        Self::build(atoms, WEIGHT_SUM_TOL)
    }

    /// Same as [`AtomicMeasure::new`] with the looser tolerance used for derived measures.
    pub(crate) fn assemble(atoms: Vec<(f64, f64)>) -> Result<Self> {
        Self::build(atoms, DERIVED_SUM_TOL)
    }

    fn build(mut atoms: Vec<(f64, f64)>, sum_tol: f64) -> Result<Self> {
        for &(x, w) in &atoms {
            if !x.is_finite() || x < 0.0 {
                return Err(Error::InvalidMeasure(format!("atom location {x} is not a finite nonnegative number")));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidMeasure(format!("atom weight {w} is negative or not finite")));
            }
        }
        atoms.retain(|&(_, w)| w > 0.0);
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("no atoms with positive weight".into()));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let atoms = merge_sorted(atoms);
        let total: f64 = crate::par::kahan_sum(atoms.iter().map(|a| a.1));
        if (total - 1.0).abs() > sum_tol {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self::from_sorted(atoms))
    }

    fn from_sorted(atoms: Vec<(f64, f64)>) -> Self {
        let mut cum_w = Vec::with_capacity(atoms.len() + 1);
        let mut cum_m = Vec::with_capacity(atoms.len() + 1);
        let (mut w_acc, mut m_acc) = (0.0, 0.0);
        cum_w.push(0.0);
        cum_m.push(0.0);
        for &(x, w) in &atoms {
            w_acc += w;
            m_acc += w * x;
            cum_w.push(w_acc);
            cum_m.push(m_acc);
        }
        AtomicMeasure { atoms, cum_w, cum_m }
    }

    /// The point mass at `x`.
    pub fn dirac(x: f64) -> Result<Self> {
        Self::new(vec![(x, 1.0)])
    }

    /// Equal weights on the given locations.
    pub fn uniform_on(locations: &[f64]) -> Result<Self> {
        let w = 1.0 / locations.len() as f64;
        Self::assemble(locations.iter().map(|&x| (x, w)).collect())
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn locations(&self) -> impl Iterator<Item = f64> + '_ {
        self.atoms.iter().map(|a| a.0)
    }

    pub fn total_mass(&self) -> f64 {
        *self.cum_w.last().unwrap()
    }

    /// Number of atoms strictly below `y`.
    fn count_below(&self, y: f64) -> usize {
        self.atoms.partition_point(|a| a.0 < y)
    }

    fn count_at_or_below(&self, y: f64) -> usize {
        self.atoms.partition_point(|a| a.0 <= y)
    }

    /// Merges atoms into bins of width `width`, placing each bin's mass at
    /// its weighted mean. Moves mass by at most `width`.
    pub fn coarsened(&self, width: f64) -> Self {
        if width <= 0.0 || self.atoms.len() < 2 {
            return self.clone();
        }
        let origin = self.atoms[0].0;
        let mut out: Vec<(f64, f64)> = Vec::new();
        let mut current_bin = u64::MAX;
        let (mut w_acc, mut m_acc) = (0.0, 0.0);
        for &(x, w) in &self.atoms {
            let bin = ((x - origin) / width).floor() as u64;
            if bin != current_bin && w_acc > 0.0 {
                out.push((m_acc / w_acc, w_acc));
                w_acc = 0.0;
                m_acc = 0.0;
            }
            current_bin = bin;
            w_acc += w;
            m_acc += w * x;
        }
        out.push((m_acc / w_acc, w_acc));
        Self::from_sorted(merge_sorted(out))
    }
}

/// Collapses runs of locations within [`MERGE_TOL`] of the run's first location.
fn merge_sorted(atoms: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
    let mut anchor = f64::NEG_INFINITY;
    for (x, w) in atoms {
        match out.last_mut() {
            Some(last) if x - anchor < MERGE_TOL => last.1 += w,
            _ => {
                anchor = x;
                out.push((x, w));
            }
        }
    }
    out
}

impl Measure1D for AtomicMeasure {
    fn cdf_open(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        self.cum_w[self.count_below(y)]
    }

    fn cdf(&self, y: f64) -> f64 {
        if y < 0.0 {
            return 0.0;
        }
        self.cum_w[self.count_at_or_below(y)]
    }

    fn partial_mean(&self, y: f64) -> Result<f64> {
        if y <= 0.0 {
            return Ok(0.0);
        }
        Ok(self.cum_m[self.count_below(y)])
    }

    fn quantile(&self, u: f64) -> Result<f64> {
        check_unit_interval(u)?;
        // smallest k with cum_w[k + 1] >= u
        let k = self.cum_w[1..].partition_point(|&c| c < u);
        Ok(self.atoms[k.min(self.atoms.len() - 1)].0)
    }

    fn mean(&self) -> Result<f64> {
        Ok(*self.cum_m.last().unwrap())
    }

    fn second_moment(&self) -> Result<f64> {
        Ok(crate::par::kahan_sum(self.atoms.iter().map(|&(x, w)| w * x * x)))
    }

    fn support_max(&self) -> f64 {
        self.atoms.last().unwrap().0
    }

    fn is_singleton(&self) -> bool {
        self.atoms.len() == 1
    }
}
