use crate::error::{check_scale, PrismError, Result};

/// Coupling standard deviations `ρ^1, …, ρ^K`, one per iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnealingSchedule {
    rho_max: f64,
    rho_min: f64,
    values: Vec<f64>,
}

impl AnnealingSchedule {
    /// `ρ^k = ρ_max (ρ_min/ρ_max)^((k−1)/(K−1))`, with both endpoints exact.
    /// A single-iteration schedule holds only `ρ_min`.
    pub fn exponential(rho_max: f64, rho_min: f64, iterations: usize) -> Result<Self> {
        let rho_max = check_scale("rho_max", rho_max)?;
        let rho_min = check_scale("rho_min", rho_min)?;
        if rho_min > rho_max {
            return Err(PrismError::InvalidConfig(format!(
                "rho_min {rho_min} exceeds rho_max {rho_max}"
            )));
        }
        if iterations == 0 {
            return Err(PrismError::InvalidConfig("schedule needs K >= 1".into()));
        }
        if iterations == 1 {
            return Ok(Self {
                rho_max,
                rho_min,
                values: vec![rho_min],
            });
        }
        let ratio = rho_min / rho_max;
        let last = (iterations - 1) as f64;
        let mut values: Vec<f64> = (0..iterations)
            .map(|i| rho_max * ratio.powf(i as f64 / last))
            .collect();
        values[0] = rho_max;
        values[iterations - 1] = rho_min;
        Ok(Self {
            rho_max,
            rho_min,
            values,
        })
    }

    pub fn constant(rho: f64, iterations: usize) -> Result<Self> {
        Self::exponential(rho, rho, iterations)
    }

    pub fn rho_max(&self) -> f64 {
        self.rho_max
    }

    pub fn rho_min(&self) -> f64 {
        self.rho_min
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `ρ^k` for the 1-based iteration `k`.
    pub fn at(&self, k: usize) -> f64 {
        self.values[k - 1]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}
