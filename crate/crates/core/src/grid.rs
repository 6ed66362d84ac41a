//! Densities on a uniform log-size grid.
//!
//! The grid is cell-centred: `n` cells of width `dx` cover `[xi_min, xi_max]`
//! and node `i` sits at the centre of cell `i`. Integrals are midpoint sums,
//! so a histogram over the same cells is directly comparable to a solver
//! field.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    Invalid(String),
    #[error("grid mismatch: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogGrid {
    pub xi_min: f64,
    pub xi_max: f64,
    pub n: usize,
}

impl LogGrid {
    pub fn new(xi_min: f64, xi_max: f64, n: usize) -> Result<Self, GridError> {
        if !(xi_min.is_finite() && xi_max.is_finite() && xi_max > xi_min) {
            return Err(GridError::Invalid(format!("bounds [{xi_min}, {xi_max}]")));
        }
        if n < 2 {
            return Err(GridError::Invalid(format!("need at least 2 cells, got {n}")));
        }
        Ok(Self { xi_min, xi_max, n })
    }

    pub fn dx(&self) -> f64 {
        (self.xi_max - self.xi_min) / self.n as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.xi_min + (i as f64 + 0.5) * self.dx()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Cell containing `xi`, if inside the grid.
    pub fn cell(&self, xi: f64) -> Option<usize> {
        if !(xi >= self.xi_min && xi < self.xi_max) {
            return None;
        }
        Some((((xi - self.xi_min) / self.dx()) as usize).min(self.n - 1))
    }

    /// Nearest node index, clamped to the grid.
    pub fn nearest(&self, xi: f64) -> usize {
        let pos = ((xi - self.xi_min) / self.dx() - 0.5).round();
        pos.clamp(0.0, (self.n - 1) as f64) as usize
    }

    pub fn same_as(&self, other: &LogGrid) -> bool {
        self.n == other.n
            && (self.xi_min - other.xi_min).abs() <= 1e-12 * (1.0 + self.xi_min.abs())
            && (self.xi_max - other.xi_max).abs() <= 1e-12 * (1.0 + self.xi_max.abs())
    }
}

/// Left-edge treatment of probability that leaves the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeftBoundary {
    /// Mass leaving through the left edge is tallied in `leaked_mass`.
    #[default]
    AbsorbLeft,
    /// Mass that would leave is kept in the first cell.
    ReflectLeft,
}

/// Density per unit log-size at the grid nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub grid: LogGrid,
    pub values: Vec<f64>,
    pub bc: LeftBoundary,
    pub leaked_mass: f64,
}

impl GridField {
    pub fn zeros(grid: LogGrid, bc: LeftBoundary) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n],
            bc,
            leaked_mass: 0.0,
        }
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: LogGrid, bc: LeftBoundary, f: F) -> Self {
        Self {
            grid,
            values: grid.nodes().into_iter().map(f).collect(),
            bc,
            leaked_mass: 0.0,
        }
    }

    /// Unit mass concentrated in the cell containing `xi0`.
    pub fn delta(grid: LogGrid, bc: LeftBoundary, xi0: f64) -> Self {
        let mut f = Self::zeros(grid, bc);
        let i = grid.nearest(xi0);
        f.values[i] = 1.0 / grid.dx();
        f
    }

    /// Normalised Gaussian profile sampled at the nodes, rescaled so the
    /// midpoint integral is exactly one.
    pub fn gaussian(grid: LogGrid, bc: LeftBoundary, mean: f64, sigma: f64) -> Self {
        let mut f = Self::from_fn(grid, bc, |x| (-0.5 * ((x - mean) / sigma).powi(2)).exp());
        f.normalise();
        f
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.dx()
    }

    /// In-grid mass plus leaked mass.
    pub fn total_probability(&self) -> f64 {
        self.integral() + self.leaked_mass
    }

    pub fn normalise(&mut self) {
        let s = self.integral();
        if s > 0.0 {
            for v in &mut self.values {
                *v /= s;
            }
        }
    }

    /// Mean of the in-grid part.
    pub fn mean(&self) -> f64 {
        let m = self.values.iter().sum::<f64>();
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| v * self.grid.node(i))
            .sum::<f64>()
            / m
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        let m = self.values.iter().sum::<f64>();
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| v * (self.grid.node(i) - mu).powi(2))
            .sum::<f64>()
            / m
    }

    /// Node of the cumulative median of the in-grid part.
    pub fn median(&self) -> f64 {
        let total: f64 = self.values.iter().sum();
        let mut acc = 0.0;
        for (i, v) in self.values.iter().enumerate() {
            if acc + v >= 0.5 * total {
                // Linear interpolation inside the cell.
                let frac = if *v > 0.0 { (0.5 * total - acc) / v } else { 0.5 };
                return self.grid.xi_min + (i as f64 + frac) * self.grid.dx();
            }
            acc += v;
        }
        self.grid.node(self.grid.n - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityComparison {
    pub l1: f64,
    pub sup: f64,
    pub mean_gap: f64,
    pub var_gap: f64,
}

/// L1 and sup distances plus differences of mean and variance.
pub fn compare_densities(a: &GridField, b: &GridField) -> Result<DensityComparison, GridError> {
    if !a.grid.same_as(&b.grid) {
        return Err(GridError::Shape(format!("{:?} vs {:?}", a.grid, b.grid)));
    }
    let dx = a.grid.dx();
    let mut l1 = 0.0;
    let mut sup: f64 = 0.0;
    for (x, y) in a.values.iter().zip(&b.values) {
        let d = (x - y).abs();
        l1 += d * dx;
        sup = sup.max(d);
    }
    Ok(DensityComparison {
        l1,
        sup,
        mean_gap: a.mean() - b.mean(),
        var_gap: a.variance() - b.variance(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;

    #[test]
    fn identical_fields_compare_to_zero() {
        let g = LogGrid::new(-5.0, 5.0, 200).unwrap();
        let a = GridField::gaussian(g, LeftBoundary::AbsorbLeft, 0.3, 0.7);
        let c = compare_densities(&a, &a).unwrap();
        assert_eq!(c, DensityComparison { l1: 0.0, sup: 0.0, mean_gap: 0.0, var_gap: 0.0 });
    }

    #[test]
    fn disjoint_boxes_have_l1_two() {
        let g = LogGrid::new(0.0, 4.0, 400).unwrap();
        let a = GridField::from_fn(g, LeftBoundary::AbsorbLeft, |x| if x < 1.0 { 1.0 } else { 0.0 });
        let b = GridField::from_fn(g, LeftBoundary::AbsorbLeft, |x| if (2.0..3.0).contains(&x) { 1.0 } else { 0.0 });
        let c = compare_densities(&a, &b).unwrap();
        assert!((c.l1 - 2.0).abs() < 1e-12);
        assert!((c.mean_gap + 2.0).abs() < 1e-12);
    }

    #[test]
    fn shifted_gaussian_l1() {
        // Oracle: high-resolution quadrature of |φ(x) − φ(x − 0.1)|.
        let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let oracle = integrate(|x| (phi(x) - phi(x - 0.1)).abs(), -12.0, 0.05, 1e-13).unwrap().value
            + integrate(|x| (phi(x) - phi(x - 0.1)).abs(), 0.05, 12.0, 1e-13).unwrap().value;
        assert!((oracle - 0.0797).abs() < 1e-3, "{oracle}");
        let g = LogGrid::new(-10.0, 10.0, 4000).unwrap();
        let a = GridField::gaussian(g, LeftBoundary::AbsorbLeft, 0.0, 1.0);
        let b = GridField::gaussian(g, LeftBoundary::AbsorbLeft, 0.1, 1.0);
        let c = compare_densities(&a, &b).unwrap();
        assert!((c.l1 - oracle).abs() < 1e-3, "{} vs {oracle}", c.l1);
        assert!((c.mean_gap + 0.1).abs() < 1e-9);
        assert!(c.var_gap.abs() < 1e-9);
    }

    #[test]
    fn mismatched_grids_rejected() {
        let a = GridField::zeros(LogGrid::new(0.0, 1.0, 10).unwrap(), LeftBoundary::AbsorbLeft);
        let b = GridField::zeros(LogGrid::new(0.0, 1.0, 11).unwrap(), LeftBoundary::AbsorbLeft);
        assert!(matches!(compare_densities(&a, &b), Err(GridError::Shape(_))));
    }

    #[test]
    fn cells_and_nodes_agree() {
        let g = LogGrid::new(-1.0, 1.0, 8).unwrap();
        for i in 0..8 {
            assert_eq!(g.cell(g.node(i)), Some(i));
            assert_eq!(g.nearest(g.node(i)), i);
        }
        assert_eq!(g.cell(1.0), None);
        assert_eq!(g.cell(-1.0), Some(0));
    }
}
