use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{check_unit_interval, Measure1D};

/// Equal-weight point cloud, e.g. a Monte Carlo sample of a chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "EmpiricalRepr", into = "EmpiricalRepr")]
pub struct EmpiricalMeasure {
    samples: Vec<f64>,
    /// prefix sums, `len + 1` entries
    prefix: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct EmpiricalRepr {
    samples: Vec<f64>,
}

impl TryFrom<EmpiricalRepr> for EmpiricalMeasure {
    type Error = Error;

    fn try_from(r: EmpiricalRepr) -> Result<Self> {
        EmpiricalMeasure::new(r.samples)
    }
}

impl From<EmpiricalMeasure> for EmpiricalRepr {
    fn from(m: EmpiricalMeasure) -> Self {
        EmpiricalRepr { samples: m.samples }
    }
}

impl PartialEq for EmpiricalMeasure {
    fn eq(&self, other: &Self) -> bool {
        self.samples == other.samples
    }
}

impl EmpiricalMeasure {
    /// Sorts the samples; rejects empty, negative or non-finite input.
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidMeasure("empirical measure needs at least one sample".into()));
        }
        if let Some(x) = samples.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::InvalidMeasure(format!("sample {x} is negative or not finite")));
        }
        samples.sort_by(f64::total_cmp);
        let mut prefix = Vec::with_capacity(samples.len() + 1);
        let mut acc = 0.0;
        prefix.push(0.0);
        for &x in &samples {
            acc += x;
            prefix.push(acc);
        }
        Ok(EmpiricalMeasure { samples, prefix })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Concatenates several clouds (order-independent: the result is sorted).
    pub fn merge(parts: &[EmpiricalMeasure]) -> Result<Self> {
        let all = parts.iter().flat_map(|p| p.samples.iter().copied()).collect();
        Self::new(all)
    }

    fn n(&self) -> f64 {
        self.samples.len() as f64
    }
}

impl Measure1D for EmpiricalMeasure {
    fn cdf_open(&self, y: f64) -> f64 {
        self.samples.partition_point(|&x| x < y) as f64 / self.n()
    }

    fn cdf(&self, y: f64) -> f64 {
        self.samples.partition_point(|&x| x <= y) as f64 / self.n()
    }

    fn partial_mean(&self, y: f64) -> Result<f64> {
        let k = self.samples.partition_point(|&x| x < y);
        Ok(self.prefix[k] / self.n())
    }

    fn quantile(&self, u: f64) -> Result<f64> {
        check_unit_interval(u)?;
        let k = ((u * self.n()).ceil() as usize).clamp(1, self.samples.len()) - 1;
        Ok(self.samples[k])
    }

    fn mean(&self) -> Result<f64> {
        Ok(self.prefix[self.samples.len()] / self.n())
    }

    fn second_moment(&self) -> Result<f64> {
        Ok(crate::par::kahan_sum(self.samples.iter().map(|x| x * x)) / self.n())
    }

    fn support_max(&self) -> f64 {
        *self.samples.last().unwrap()
    }

    fn is_singleton(&self) -> bool {
        self.samples.first() == self.samples.last()
    }
}
