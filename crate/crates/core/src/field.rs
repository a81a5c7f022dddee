use std::sync::Arc;

use crate::error::{EsbgkError, Result};
use crate::grid::PhaseGrid;

/// Values of the distribution function on a phase grid at time `time`.
///
/// Layout follows [`PhaseGrid`]: spatial cells outer, velocity nodes inner.
#[derive(Clone, Debug, PartialEq)]
pub struct DistributionField {
    grid: Arc<PhaseGrid>,
    values: Vec<f64>,
    pub time: f64,
}

impl DistributionField {
    pub fn new(grid: Arc<PhaseGrid>, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(EsbgkError::GridMismatch(format!(
                "{} values for a grid of {} phase points",
                values.len(),
                grid.len()
            )));
        }
        Ok(DistributionField { grid, values, time })
    }

    pub fn zeros(grid: Arc<PhaseGrid>) -> Self {
        let values = vec![0.0; grid.len()];
        DistributionField {
            grid,
            values,
            time: 0.0,
        }
    }

    /// Field with the same velocity profile in every cell.
    pub fn homogeneous(grid: Arc<PhaseGrid>, profile: &[f64]) -> Result<Self> {
        if profile.len() != grid.n_vel() {
            return Err(EsbgkError::GridMismatch(format!(
                "profile has {} entries, grid has {} velocity nodes",
                profile.len(),
                grid.n_vel()
            )));
        }
        let values = profile.repeat(grid.n_cells());
        Ok(DistributionField {
            grid,
            values,
            time: 0.0,
        })
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<PhaseGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Velocity profile of one spatial cell.
    pub fn cell(&self, cell: usize) -> &[f64] {
        let n = self.grid.n_vel();
        &self.values[cell * n..(cell + 1) * n]
    }

    /// A field on the same grid with new values.
    pub fn with_values(&self, values: Vec<f64>, time: f64) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        DistributionField {
            grid: Arc::clone(&self.grid),
            values,
            time,
        }
    }

    /// Fails on the first negative or non-finite value.
    pub fn check_admissible(&self) -> Result<()> {
        for (index, &value) in self.values.iter().enumerate() {
            if !value.is_finite() {
                return Err(EsbgkError::NonFinite { index, value });
            }
            if value < 0.0 {
                return Err(EsbgkError::Negative { index, value });
            }
        }
        Ok(())
    }

    pub fn same_grid(&self, other: &DistributionField) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || self.grid.same_shape(&other.grid) {
            Ok(())
        } else {
            Err(EsbgkError::GridMismatch("fields live on different grids".into()))
        }
    }
}
