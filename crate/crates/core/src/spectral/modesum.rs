//! Mode-sum two-point correlators
//!
//! ```text
//! G_c(ξ₁, ξ₂; t) = Σ_{mn} u_m(ξ₁) u_n(ξ₂) e^{(λ_m + λ_n)t} C_{mn}
//! ```
//!
//! with a single sum when `C` is diagonal.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::correlation::CorrelationEstimate;

use super::eigen::{EigenPairs, SpectralSector};
use super::SpectralError;

/// Initial covariance in the mode basis. The mode sum uses the bilinear
/// (non-conjugated) pairing, so the invariant is `C = Cᵀ`; for real modes
/// this is the usual Hermitian symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeCovariance {
    pub matrix: DMatrix<Complex64>,
}

impl ModeCovariance {
    pub fn new(matrix: DMatrix<Complex64>) -> Result<Self, SpectralError> {
        if !matrix.is_square() {
            return Err(SpectralError::Shape(format!("{}x{} covariance", matrix.nrows(), matrix.ncols())));
        }
        if matrix.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(SpectralError::Domain("covariance has non-finite entries".into()));
        }
        let scale = matrix.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let n = matrix.nrows();
        for i in 0..n {
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).norm() > 1e-10 * scale {
                    return Err(SpectralError::Domain(format!("covariance not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { matrix })
    }

    pub fn from_real(matrix: &DMatrix<f64>) -> Result<Self, SpectralError> {
        Self::new(matrix.map(|x| Complex64::new(x, 0.0)))
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: DMatrix::identity(n, n),
        }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        Self {
            matrix: DMatrix::from_fn(n, n, |i, j| if i == j { Complex64::new(values[i], 0.0) } else { Complex64::new(0.0, 0.0) }),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| i == j || self.matrix[(i, j)] == Complex64::new(0.0, 0.0)))
    }
}

/// `C = h² Vᵀ C₀ V` for a grid covariance `C₀`, so that the mode sum
/// reproduces `e^{Lt} C₀ e^{Lᵀt}` when the mode set is complete.
pub fn project_covariance(pairs: &EigenPairs, c0: &DMatrix<f64>) -> Result<ModeCovariance, SpectralError> {
    let n = pairs.left.nrows();
    if c0.shape() != (n, n) {
        return Err(SpectralError::Shape(format!("grid covariance {:?} on {n} nodes", c0.shape())));
    }
    let c = c0.map(|x| Complex64::new(x, 0.0));
    let h2 = Complex64::new(pairs.h * pairs.h, 0.0);
    let m = pairs.left.transpose() * c * &pairs.left * h2;
    // Symmetrise away rounding.
    let sym = (&m + m.transpose()) * Complex64::new(0.5, 0.0);
    ModeCovariance::new(sym)
}

fn check_dims(pairs: &EigenPairs, c: &ModeCovariance, t: f64) -> Result<(), SpectralError> {
    if pairs.is_empty() {
        return Err(SpectralError::Shape("no retained modes".into()));
    }
    if c.dim() != pairs.len() {
        return Err(SpectralError::Shape(format!("covariance of dimension {} for {} modes", c.dim(), pairs.len())));
    }
    if !t.is_finite() {
        return Err(SpectralError::Domain(format!("t = {t}")));
    }
    Ok(())
}

/// Full double sum; rows of `modes` are evaluation points.
fn double_sum(modes: &DMatrix<Complex64>, lambdas: &[Complex64], c: &DMatrix<Complex64>, t: f64) -> DMatrix<f64> {
    let growth: Vec<Complex64> = lambdas.iter().map(|l| (l * t).exp()).collect();
    let w = DMatrix::from_fn(c.nrows(), c.ncols(), |m, n| growth[m] * growth[n] * c[(m, n)]);
    (modes * w * modes.transpose()).map(|z| z.re)
}

/// Single sum for diagonal `C`.
fn single_sum(modes: &DMatrix<Complex64>, lambdas: &[Complex64], c: &DMatrix<Complex64>, t: f64) -> DMatrix<f64> {
    let p = modes.nrows();
    let mut g = DMatrix::<Complex64>::zeros(p, p);
    for (m, l) in lambdas.iter().enumerate() {
        let w = (l * 2.0 * t).exp() * c[(m, m)];
        if w == Complex64::new(0.0, 0.0) {
            continue;
        }
        let u = modes.column(m);
        for j in 0..p {
            let uj = u[j] * w;
            for i in 0..p {
                g[(i, j)] += u[i] * uj;
            }
        }
    }
    g.map(|z| z.re)
}

/// Which form of the mode sum to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeSumPath {
    /// Single sum when `C` is diagonal, double sum otherwise.
    Auto,
    Full,
}

/// `G_c` at the grid nodes.
pub fn mode_sum_matrix(pairs: &EigenPairs, c: &ModeCovariance, t: f64) -> Result<DMatrix<f64>, SpectralError> {
    mode_sum_matrix_with(pairs, c, t, ModeSumPath::Auto)
}

pub fn mode_sum_matrix_with(pairs: &EigenPairs, c: &ModeCovariance, t: f64, path: ModeSumPath) -> Result<DMatrix<f64>, SpectralError> {
    check_dims(pairs, c, t)?;
    Ok(evaluate(&pairs.right, &pairs.eigenvalues, c, t, path))
}

fn evaluate(modes: &DMatrix<Complex64>, lambdas: &[Complex64], c: &ModeCovariance, t: f64, path: ModeSumPath) -> DMatrix<f64> {
    if path == ModeSumPath::Auto && c.is_diagonal() {
        single_sum(modes, lambdas, &c.matrix, t)
    } else {
        double_sum(modes, lambdas, &c.matrix, t)
    }
}

/// Modes at arbitrary points: linear between nodes, vanishing at and
/// beyond the walls.
fn interpolate_modes(sector: &SpectralSector, points: &[f64]) -> DMatrix<Complex64> {
    let (left, right) = sector.walls;
    let nodes = &sector.nodes;
    let u = &sector.pairs.right;
    let k = u.ncols();
    let zero = Complex64::new(0.0, 0.0);
    // Node abscissae with the walls appended.
    let mut xs = Vec::with_capacity(nodes.len() + 2);
    xs.push(left);
    xs.extend_from_slice(nodes);
    xs.push(right);
    let value = |row: usize, m: usize| if row == 0 || row == xs.len() - 1 { zero } else { u[(row - 1, m)] };
    DMatrix::from_fn(points.len(), k, |p, m| {
        let x = points[p];
        if !(x > left && x < right) {
            return zero;
        }
        let j = xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1);
        let (x0, x1) = (xs[j - 1], xs[j]);
        let w = (x - x0) / (x1 - x0);
        value(j - 1, m) * (1.0 - w) + value(j, m) * w
    })
}

pub fn mode_sum_correlator(sector: &SpectralSector, c: &ModeCovariance, t: f64, points: &[f64]) -> Result<CorrelationEstimate, SpectralError> {
    check_dims(&sector.pairs, c, t)?;
    let modes = interpolate_modes(sector, points);
    let g = evaluate(&modes, &sector.pairs.eigenvalues, c, t, ModeSumPath::Auto);
    let rows = (0..g.nrows()).map(|i| g.row(i).iter().cloned().collect()).collect();
    Ok(CorrelationEstimate::exact(points.to_vec(), rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::expm::propagate_covariance_oracle;
    use crate::spectral::operator::{build_airy_operator, AiryParams};

    fn sector(n: usize, modes: usize) -> (SpectralSector, DMatrix<f64>) {
        let params = AiryParams {
            d_star: 0.25,
            f_star: 0.25,
            gamma_star: 0.05,
            xi_star: 0.0,
        };
        let op = build_airy_operator(&params, (0.0, 10.0), n).unwrap();
        (SpectralSector::from_operator(&op, modes).unwrap(), op.matrix)
    }

    fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm()
    }

    fn gaussian_covariance(nodes: &[f64]) -> DMatrix<f64> {
        let n = nodes.len();
        DMatrix::from_fn(n, n, |i, j| {
            let (a, b) = (nodes[i], nodes[j]);
            (-(a - b).powi(2) / 0.5).exp() * (-(a - 3.0).powi(2)).exp() * (-(b - 3.0).powi(2)).exp()
        })
    }

    #[test]
    fn identity_at_time_zero_resolves_the_grid() {
        let (s, _) = sector(64, 64);
        let g = mode_sum_matrix(&s.pairs, &ModeCovariance::identity(64), 0.0).unwrap();
        let u = s.pairs.right.map(|z| z.re);
        let uut = &u * u.transpose();
        assert!((g - &uut).abs().max() < 1e-12);
        // Complete orthonormal set: U Uᵀ = I/h.
        assert!((uut * s.h() - DMatrix::<f64>::identity(64, 64)).abs().max() < 1e-8);
    }

    #[test]
    fn diagonal_fast_path_equals_full_sum() {
        let (s, _) = sector(96, 20);
        let c = ModeCovariance::diagonal(&(0..20).map(|k| 1.0 / (1.0 + k as f64)).collect::<Vec<_>>());
        for t in [0.0, 0.3, 2.0] {
            let fast = mode_sum_matrix_with(&s.pairs, &c, t, ModeSumPath::Auto).unwrap();
            let full = mode_sum_matrix_with(&s.pairs, &c, t, ModeSumPath::Full).unwrap();
            assert!((&fast - &full).abs().max() <= 1e-12 * full.abs().max());
        }
    }

    #[test]
    fn matches_matrix_exponential() {
        let (s, l) = sector(128, 128);
        let c0 = gaussian_covariance(&s.nodes);
        let c = project_covariance(&s.pairs, &c0).unwrap();
        for t in [0.0, 0.1, 0.5, 1.0] {
            let g = mode_sum_matrix(&s.pairs, &c, t).unwrap();
            let oracle = propagate_covariance_oracle(&l, &c0, t).unwrap();
            let gap = rel_frobenius(&g, &oracle);
            assert!(gap < 1e-6, "t = {t}: {gap}");
        }
    }

    #[test]
    fn correlator_at_nodes_matches_matrix() {
        let (s, _) = sector(64, 10);
        let c = ModeCovariance::identity(10);
        let pts = vec![s.nodes[3], s.nodes[10], s.nodes[40]];
        let est = mode_sum_correlator(&s, &c, 0.7, &pts).unwrap();
        let g = mode_sum_matrix(&s.pairs, &c, 0.7).unwrap();
        for (a, i) in [3usize, 10, 40].iter().enumerate() {
            for (b, j) in [3usize, 10, 40].iter().enumerate() {
                assert!((est.gc[a][b] - g[(*i, *j)]).abs() < 1e-12);
            }
        }
        let outside = mode_sum_correlator(&s, &c, 0.7, &[-1.0, 0.0, 10.0]).unwrap();
        assert!(outside.gc.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn least_damped_mode_dominates() {
        let (s, _) = sector(96, 12);
        let l = s.eigenvalues();
        let t = 10.0 / (l[0].re - l[1].re).abs();
        let c = ModeCovariance::identity(12);
        let g = mode_sum_matrix(&s.pairs, &c, t).unwrap() * (-2.0 * l[0].re * t).exp();
        let sv = g.singular_values();
        assert!(sv[0] / sv[1] > 1e3, "{}", sv[0] / sv[1]);
        let u1 = s.pairs.right.column(0).map(|z| z.re);
        assert!((g - &u1 * u1.transpose()).abs().max() < 1e-6);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let (s, _) = sector(64, 5);
        assert!(matches!(mode_sum_matrix(&s.pairs, &ModeCovariance::identity(4), 0.0), Err(SpectralError::Shape(_))));
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(ModeCovariance::from_real(&bad).is_err());
    }
}
