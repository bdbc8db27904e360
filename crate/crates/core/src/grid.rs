//! Regular grids over the bounds box, enumerated in lexicographic order
//! (first component outermost).

use crate::error::{LagoError, Result};
use crate::model::ComponentBounds;

pub const DEFAULT_GRID_CAP: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    /// Grid coordinates of each component, `L_p + i * increment <= U_p`.
    pub axes: Vec<Vec<f64>>,
    pub increment: f64,
}

impl Grid {
    pub fn new(bounds: &ComponentBounds, increment: f64) -> Result<Self> {
        Self::with_cap(bounds, increment, DEFAULT_GRID_CAP)
    }

    pub fn with_cap(bounds: &ComponentBounds, increment: f64, cap: f64) -> Result<Self> {
        bounds.validate()?;
        if !(increment > 0.0) || !increment.is_finite() {
            return Err(LagoError::InvalidInput(format!(
                "grid increment must be positive, got {increment}"
            )));
        }
        let counts: Vec<f64> = bounds
            .lower
            .iter()
            .zip(&bounds.upper)
            .map(|(lo, hi)| axis_len(*lo, *hi, increment) as f64)
            .collect();
        let cells: f64 = counts.iter().product();
        if cells > cap {
            return Err(LagoError::GridTooLarge { cells, cap });
        }
        let axes = bounds
            .lower
            .iter()
            .zip(&bounds.upper)
            .map(|(lo, hi)| {
                (0..axis_len(*lo, *hi, increment))
                    .map(|i| (lo + i as f64 * increment).min(*hi))
                    .collect()
            })
            .collect();
        Ok(Self { axes, increment })
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Decodes a flat lexicographic index into per-axis indices.
    pub fn unravel(&self, mut flat: usize, out: &mut [usize]) {
        for (p, axis) in self.axes.iter().enumerate().rev() {
            out[p] = flat % axis.len();
            flat /= axis.len();
        }
    }

    pub fn point(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().zip(&self.axes).map(|(i, a)| a[*i]).collect()
    }

    /// All points in lexicographic order.
    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        let mut idx = vec![0usize; self.dims()];
        (0..self.len()).map(move |f| {
            self.unravel(f, &mut idx);
            self.point(&idx)
        })
    }

    /// Index of the grid point nearest to `x` (per-axis rounding).
    pub fn nearest(&self, x: &[f64]) -> Vec<usize> {
        x.iter()
            .zip(&self.axes)
            .map(|(v, axis)| {
                let i = ((v - axis[0]) / self.increment).round();
                (i.max(0.0) as usize).min(axis.len() - 1)
            })
            .collect()
    }
}

fn axis_len(lo: f64, hi: f64, inc: f64) -> usize {
    // tolerate representation error so that e.g. 0..2 by 0.1 includes 2
    ((hi - lo) / inc + 1e-9).floor() as usize + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_includes_upper_bound() {
        let b = ComponentBounds::new(vec![0.0, 0.0], vec![2.0, 8.0]).unwrap();
        let g = Grid::new(&b, 0.1).unwrap();
        assert_eq!(g.axes[0].len(), 21);
        assert_eq!(g.axes[1].len(), 81);
        assert_eq!(*g.axes[1].last().unwrap(), 8.0);
        assert_eq!(g.len(), 21 * 81);
    }

    #[test]
    fn lexicographic_order() {
        let b = ComponentBounds::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let g = Grid::new(&b, 1.0).unwrap();
        let pts: Vec<_> = g.points().collect();
        assert_eq!(pts, vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]);
    }

    #[test]
    fn cell_count_of_natural_unit_box() {
        let b = ComponentBounds::new(vec![1.0, 1.0], vec![5.0, 40.0]).unwrap();
        assert_eq!(Grid::new(&b, 0.01).unwrap().len(), 401 * 3901);
    }

    #[test]
    fn cap_is_enforced() {
        let b = ComponentBounds::new(vec![0.0, 0.0], vec![100.0, 100.0]).unwrap();
        let err = Grid::new(&b, 0.001).unwrap_err();
        assert!(matches!(err, LagoError::GridTooLarge { .. }));
        assert!(err.to_string().contains("coarser"));
    }

    #[test]
    fn nearest_rounds_per_axis() {
        let b = ComponentBounds::new(vec![0.0, 0.0], vec![2.0, 8.0]).unwrap();
        let g = Grid::new(&b, 0.1).unwrap();
        assert_eq!(g.nearest(&[1.04, 7.96]), vec![10, 80]);
        assert_eq!(g.nearest(&[-1.0, 9.0]), vec![0, 80]);
    }
}
