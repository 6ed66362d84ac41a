//! Right and left eigenpairs of the discretised sector operator.
//!
//! Symmetric tridiagonal matrices (the Airy operator with Dirichlet walls)
//! go through Sturm bisection and pivoted inverse iteration. Everything else
//! uses the nalgebra Schur eigenvalues followed by complex inverse iteration
//! on `A` and `Aᵀ`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::operator::{AiryOperator, AiryParams};
use super::SpectralError;

/// Relative gap below which two eigenvalues count as one cluster.
pub const DEGENERACY_GAP: f64 = 1e-10;
/// Bound on `‖A u − λ u‖₂ / ‖u‖₂`.
pub const RESIDUAL_BOUND: f64 = 1e-6;

/// Eigenpairs normalised so that `h Σ|u_n|² = 1` and `h Σ v_m u_n = δ_{mn}`.
/// Columns of `right` and `left` are modes, sorted by descending real part.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPairs {
    pub h: f64,
    pub eigenvalues: Vec<Complex64>,
    pub right: DMatrix<Complex64>,
    pub left: DMatrix<Complex64>,
}

impl EigenPairs {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `h VᵀU`, which should be the identity.
    pub fn biorthogonality(&self) -> DMatrix<Complex64> {
        self.left.transpose() * &self.right * Complex64::new(self.h, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSector {
    pub params: AiryParams,
    pub walls: (f64, f64),
    pub nodes: Vec<f64>,
    pub pairs: EigenPairs,
}

impl SpectralSector {
    pub fn from_operator(op: &AiryOperator, n_modes: usize) -> Result<Self, SpectralError> {
        Ok(Self {
            params: op.params,
            walls: op.walls,
            nodes: op.nodes.clone(),
            pairs: biorthogonal_eigs(&op.matrix, n_modes, op.h)?,
        })
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.pairs.eigenvalues
    }

    pub fn h(&self) -> f64 {
        self.pairs.h
    }
}

fn check_input(matrix: &DMatrix<f64>, n_modes: usize, h: f64) -> Result<(), SpectralError> {
    if !matrix.is_square() || matrix.nrows() == 0 {
        return Err(SpectralError::Shape(format!("{}x{} matrix", matrix.nrows(), matrix.ncols())));
    }
    if n_modes == 0 || n_modes > matrix.nrows() {
        return Err(SpectralError::Shape(format!("{n_modes} modes from a {}-point grid", matrix.nrows())));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(SpectralError::Domain(format!("grid spacing {h}")));
    }
    if matrix.iter().any(|x| !x.is_finite()) {
        return Err(SpectralError::Domain("matrix has non-finite entries".into()));
    }
    Ok(())
}

/// Leading `n_modes` eigenpairs, dispatching to the tridiagonal path when
/// the matrix is symmetric tridiagonal.
pub fn biorthogonal_eigs(matrix: &DMatrix<f64>, n_modes: usize, h: f64) -> Result<EigenPairs, SpectralError> {
    check_input(matrix, n_modes, h)?;
    match symmetric_tridiagonal(matrix) {
        Some((d, e)) => tridiagonal_eigs(matrix, &d, &e, n_modes, h),
        None => general_eigs(matrix, n_modes, h),
    }
}

/// Dense path regardless of structure.
pub fn biorthogonal_eigs_general(matrix: &DMatrix<f64>, n_modes: usize, h: f64) -> Result<EigenPairs, SpectralError> {
    check_input(matrix, n_modes, h)?;
    general_eigs(matrix, n_modes, h)
}

fn symmetric_tridiagonal(m: &DMatrix<f64>) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..n {
            let v = m[(i, j)];
            if i.abs_diff(j) > 1 && v != 0.0 {
                return None;
            }
            if i + 1 == j && v != m[(j, i)] {
                return None;
            }
        }
    }
    let d = (0..n).map(|i| m[(i, i)]).collect();
    let e = (0..n.saturating_sub(1)).map(|i| m[(i, i + 1)]).collect();
    Some((d, e))
}

fn check_degeneracy(values: &[Complex64]) -> Result<(), SpectralError> {
    for w in values.windows(2) {
        let scale = w[0].norm().max(w[1].norm()).max(1.0);
        if (w[0] - w[1]).norm() < DEGENERACY_GAP * scale {
            let cluster = values
                .iter()
                .filter(|z| (**z - w[0]).norm() < DEGENERACY_GAP * scale)
                .cloned()
                .collect();
            return Err(SpectralError::Degeneracy { cluster });
        }
    }
    Ok(())
}

fn check_residuals(matrix: &DMatrix<f64>, pairs: &EigenPairs) -> Result<(), SpectralError> {
    let n = matrix.nrows();
    for (k, lambda) in pairs.eigenvalues.iter().enumerate() {
        let u = pairs.right.column(k);
        let mut r2 = 0.0;
        for i in 0..n {
            let mut s = -*lambda * u[i];
            for j in 0..n {
                let a = matrix[(i, j)];
                if a != 0.0 {
                    s += u[j] * a;
                }
            }
            r2 += s.norm_sqr();
        }
        let residual = r2.sqrt() / u.norm();
        if !(residual <= RESIDUAL_BOUND) {
            return Err(SpectralError::Residual { mode: k, residual });
        }
    }
    Ok(())
}

/// Number of eigenvalues of the symmetric tridiagonal `(d, e)` below `x`.
fn sturm_count(d: &[f64], e: &[f64], x: f64, pivmin: f64) -> usize {
    let mut count = 0;
    let mut q = d[0] - x;
    if q.abs() < pivmin {
        q = -pivmin;
    }
    if q < 0.0 {
        count += 1;
    }
    for i in 1..d.len() {
        q = d[i] - x - e[i - 1] * e[i - 1] / q;
        if q.abs() < pivmin {
            q = -pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// LU factors of a tridiagonal matrix with partial pivoting.
struct TridiagonalLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagonalLu {
    fn factor(mut dl: Vec<f64>, mut d: Vec<f64>, mut du: Vec<f64>, tiny: f64) -> Self {
        let n = d.len();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = tiny;
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -fact;
                }
                swapped[i] = true;
            }
        }
        if d[n - 1] == 0.0 {
            d[n - 1] = tiny;
        }
        Self { dl, d, du, du2, swapped }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = self.d.len();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.dl[i] * b[i];
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }
}

/// First entry within a relative `1e-6` of the largest magnitude, so that
/// symmetric and antisymmetric modes get a reproducible sign.
fn anchor_index(mags: impl Iterator<Item = f64> + Clone) -> usize {
    let max = mags.clone().fold(0.0, f64::max);
    mags.into_iter().position(|m| m >= (1.0 - 1e-6) * max).unwrap_or(0)
}

fn normalise_real(u: &mut [f64], h: f64) {
    let norm = (h * u.iter().map(|x| x * x).sum::<f64>()).sqrt();
    let big = u[anchor_index(u.iter().map(|x| x.abs()))];
    let s = big.signum() / norm;
    for x in u.iter_mut() {
        *x *= s;
    }
}

fn tridiagonal_eigs(matrix: &DMatrix<f64>, d: &[f64], e: &[f64], n_modes: usize, h: f64) -> Result<EigenPairs, SpectralError> {
    let n = d.len();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let r = if i > 0 { e[i - 1].abs() } else { 0.0 } + if i + 1 < n { e[i].abs() } else { 0.0 };
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    let norm = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    let pivmin = f64::MIN_POSITIVE.max(f64::EPSILON * f64::EPSILON * norm);
    let (lo, hi) = (lo - 2.0 * f64::EPSILON * norm, hi + 2.0 * f64::EPSILON * norm);

    let mut values = Vec::with_capacity(n_modes);
    for k in 0..n_modes {
        // k-th largest has exactly n − 1 − k eigenvalues below it.
        let target = n - k;
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b || b - a <= 2.0 * f64::EPSILON * a.abs().max(b.abs()) {
                break;
            }
            if sturm_count(d, e, mid, pivmin) >= target {
                b = mid;
            } else {
                a = mid;
            }
        }
        values.push(0.5 * (a + b));
    }
    let complex_values: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    check_degeneracy(&complex_values)?;

    let tiny = f64::EPSILON * norm;
    let cluster_gap = 1e-3 * norm;
    let mut modes: Vec<Vec<f64>> = Vec::with_capacity(n_modes);
    for (k, &lambda) in values.iter().enumerate() {
        let diag: Vec<f64> = d.iter().map(|x| x - lambda).collect();
        let lu = TridiagonalLu::factor(e.to_vec(), diag, e.to_vec(), tiny);
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.25 * ((i as f64) * 0.618_033_988_7).sin()).collect();
        for _ in 0..4 {
            lu.solve(&mut x);
            for (j, prev) in modes.iter().enumerate() {
                if (values[j] - lambda).abs() < cluster_gap {
                    let dot: f64 = prev.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() * h;
                    for (xi, pi) in x.iter_mut().zip(prev) {
                        *xi -= dot * pi;
                    }
                }
            }
            normalise_real(&mut x, h);
        }
        debug_assert_eq!(modes.len(), k);
        modes.push(x);
    }

    let right = DMatrix::from_fn(n, n_modes, |i, k| Complex64::new(modes[k][i], 0.0));
    let pairs = EigenPairs {
        h,
        eigenvalues: complex_values,
        left: right.clone(),
        right,
    };
    check_residuals(matrix, &pairs)?;
    Ok(pairs)
}

/// Inverse iteration for a null vector of `A − λI` (or its transpose).
fn complex_null_vector(a: &DMatrix<Complex64>, lambda: Complex64, scale: f64) -> Result<Vec<Complex64>, SpectralError> {
    let n = a.nrows();
    let mut shift = lambda;
    for attempt in 0..4 {
        let mut m = a.clone();
        for i in 0..n {
            m[(i, i)] -= shift;
        }
        let lu = m.lu();
        let mut x = nalgebra::DVector::from_fn(n, |i, _| Complex64::new(1.0 + 0.3 * ((i as f64) * 0.754_877_666).sin(), 0.1 * ((i as f64) * 0.569_840_291).cos()));
        let mut ok = true;
        for _ in 0..3 {
            match lu.solve(&x) {
                Some(y) if y.iter().all(|z| z.re.is_finite() && z.im.is_finite()) && y.norm() > 0.0 => {
                    x = &y / Complex64::new(y.norm(), 0.0);
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Ok(x.iter().cloned().collect());
        }
        shift = lambda + Complex64::new(f64::EPSILON * scale * 10f64.powi(attempt + 1), 0.0);
    }
    Err(SpectralError::Domain(format!("inverse iteration failed at {lambda}")))
}

fn general_eigs(matrix: &DMatrix<f64>, n_modes: usize, h: f64) -> Result<EigenPairs, SpectralError> {
    let n = matrix.nrows();
    let mut all: Vec<Complex64> = matrix.complex_eigenvalues().iter().cloned().collect();
    all.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    check_degeneracy(&all)?;
    let values = &all[..n_modes];
    let a = matrix.map(|x| Complex64::new(x, 0.0));
    let at = a.transpose();
    let scale = matrix.abs().max().max(f64::MIN_POSITIVE);

    let mut right = DMatrix::zeros(n, n_modes);
    let mut left = DMatrix::zeros(n, n_modes);
    let mut eigenvalues = Vec::with_capacity(n_modes);
    for (k, &lambda) in values.iter().enumerate() {
        let mut u = complex_null_vector(&a, lambda, scale)?;
        let mut v = complex_null_vector(&at, lambda, scale)?;
        // Unit norm with the largest entry real and positive.
        let big = u[anchor_index(u.iter().map(|z| z.norm()))];
        let phase = big.conj() / big.norm();
        let norm = (h * u.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt();
        for z in u.iter_mut() {
            *z *= phase / norm;
        }
        let overlap: Complex64 = v.iter().zip(&u).map(|(a, b)| a * b).sum::<Complex64>() * h;
        if overlap.norm() == 0.0 {
            return Err(SpectralError::Degeneracy { cluster: vec![lambda] });
        }
        for z in v.iter_mut() {
            *z /= overlap;
        }
        // Two-sided Rayleigh quotient.
        let mut vau = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for j in 0..n {
                s += a[(i, j)] * u[j];
            }
            vau += v[i] * s;
        }
        eigenvalues.push(vau * h);
        for i in 0..n {
            right[(i, k)] = u[i];
            left[(i, k)] = v[i];
        }
    }
    let pairs = EigenPairs {
        h,
        eigenvalues,
        right,
        left,
    };
    check_residuals(matrix, &pairs)?;
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::spectral::airy::airy_zeros;
    use crate::spectral::operator::build_airy_operator;

    fn max_identity_gap(p: &EigenPairs) -> f64 {
        let b = p.biorthogonality();
        let mut gap: f64 = 0.0;
        for i in 0..b.nrows() {
            for j in 0..b.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                gap = gap.max((b[(i, j)] - Complex64::new(target, 0.0)).norm());
            }
        }
        gap
    }

    fn params(d: f64, f: f64, g: f64) -> AiryParams {
        AiryParams {
            d_star: d,
            f_star: f,
            gamma_star: g,
            xi_star: 0.0,
        }
    }

    #[test]
    fn particle_in_a_box() {
        let (d, l) = (0.5, 3.0);
        let op = build_airy_operator(&params(d, 0.0, 0.2), (-l, l), 799).unwrap();
        let p = biorthogonal_eigs(&op.matrix, 6, op.h).unwrap();
        for (k, lam) in p.eigenvalues.iter().enumerate() {
            let n = (k + 1) as f64;
            let exact = -d * (n * PI / (2.0 * l)).powi(2) - 0.2;
            assert!((lam.re - exact).abs() < 1e-4 * exact.abs(), "mode {k}: {lam} vs {exact}");
        }
        assert!(max_identity_gap(&p) < 1e-8);
    }

    #[test]
    fn gamma_shift_is_exact() {
        let a = build_airy_operator(&params(0.3, 0.7, 0.0), (0.0, 12.0), 200).unwrap();
        let b = build_airy_operator(&params(0.3, 0.7, 1.25), (0.0, 12.0), 200).unwrap();
        let pa = biorthogonal_eigs(&a.matrix, 5, a.h).unwrap();
        let pb = biorthogonal_eigs(&b.matrix, 5, b.h).unwrap();
        for (x, y) in pa.eigenvalues.iter().zip(&pb.eigenvalues) {
            assert!((x.re - 1.25 - y.re).abs() < 1e-12 * x.norm().max(1.0));
        }
    }

    #[test]
    fn airy_spectrum_on_fine_grid() {
        let (d, f, g) = (0.8f64, 1.7, 0.1);
        let ell = (d / f).cbrt();
        let op = build_airy_operator(&params(d, f, g), (0.0, 18.0 * ell), 2048).unwrap();
        let p = biorthogonal_eigs(&op.matrix, 5, op.h).unwrap();
        let zeros = airy_zeros(5);
        let scale = (d * f * f).cbrt();
        for (lam, a) in p.eigenvalues.iter().zip(&zeros) {
            let exact = -g - scale * a.abs();
            assert!((lam.re - exact).abs() < 1e-4 * exact.abs(), "{lam} vs {exact}");
        }
    }

    #[test]
    fn eigenvalues_converge_at_second_order() {
        let prm = params(1.0, 1.0, 0.0);
        let lam = |n: usize| {
            let op = build_airy_operator(&prm, (0.0, 16.0), n).unwrap();
            biorthogonal_eigs(&op.matrix, 1, op.h).unwrap().eigenvalues[0].re
        };
        let (a, b, c) = (lam(127), lam(255), lam(511));
        let slope = ((a - b) / (b - c)).log2();
        assert!((slope - 2.0).abs() < 0.2, "{slope}");
    }

    #[test]
    fn symmetric_general_path_has_equal_left_and_right_modes() {
        let op = build_airy_operator(&params(0.4, 0.0, 0.0), (-2.0, 2.0), 64).unwrap();
        let p = biorthogonal_eigs_general(&op.matrix, 8, op.h).unwrap();
        let fast = biorthogonal_eigs(&op.matrix, 8, op.h).unwrap();
        for k in 0..8 {
            let (u, v) = (p.right.column(k), p.left.column(k));
            assert!((u - v).norm() < 1e-8 * u.norm(), "mode {k}");
            assert!((p.eigenvalues[k] - fast.eigenvalues[k]).norm() < 1e-9 * fast.eigenvalues[k].norm());
            let rf = fast.right.column(k);
            assert!((u - rf).norm() < 1e-6 * u.norm(), "mode {k}");
        }
        assert!(max_identity_gap(&p) < 1e-8);
    }

    #[test]
    fn nonsymmetric_tridiagonal_closed_form() {
        // Toeplitz tridiagonal (sub a, diag b, super c): b + 2√(ac) cos(kπ/(n+1)).
        let (n, a, b, c) = (64, 0.3, -1.0, 1.2);
        let m = DMatrix::from_fn(n, n, |i, j| match j as isize - i as isize {
            0 => b,
            1 => c,
            -1 => a,
            _ => 0.0,
        });
        let h = 0.1;
        let p = biorthogonal_eigs(&m, n, h).unwrap();
        for (k, lam) in p.eigenvalues.iter().enumerate() {
            let exact = b + 2.0 * (a * c).sqrt() * (((k + 1) as f64) * PI / (n + 1) as f64).cos();
            assert!((lam.re - exact).abs() < 1e-9 && lam.im.abs() < 1e-9, "{k}: {lam} vs {exact}");
        }
        assert!(max_identity_gap(&p) < 1e-8);
    }

    #[test]
    fn complex_pairs_are_biorthonormal() {
        let n = 12;
        let m = DMatrix::from_fn(n, n, |i, j| {
            let (x, y) = (i as f64, j as f64);
            if i == j {
                -0.5 * x
            } else {
                ((x + 1.0) * 1.3 - (y + 2.0) * 0.7).sin() * 0.4
            }
        });
        let p = biorthogonal_eigs(&m, n, 1.0).unwrap();
        assert!(p.eigenvalues.iter().any(|z| z.im.abs() > 1e-3), "{:?}", p.eigenvalues);
        assert!(max_identity_gap(&p) < 1e-8);
        let trace: f64 = (0..n).map(|i| m[(i, i)]).sum();
        let sum: Complex64 = p.eigenvalues.iter().sum();
        assert!((sum.re - trace).abs() < 1e-9 && sum.im.abs() < 1e-9);
    }

    #[test]
    fn repeated_eigenvalue_is_reported() {
        let m = DMatrix::<f64>::identity(4, 4) * -2.0;
        assert!(matches!(biorthogonal_eigs(&m, 2, 1.0), Err(SpectralError::Degeneracy { .. })));
        let mut g = DMatrix::<f64>::identity(4, 4);
        g[(0, 3)] = 0.5;
        assert!(matches!(biorthogonal_eigs(&g, 2, 1.0), Err(SpectralError::Degeneracy { .. })));
    }

    #[test]
    fn mode_count_is_validated() {
        let m = DMatrix::<f64>::identity(3, 3);
        assert!(matches!(biorthogonal_eigs(&m, 4, 1.0), Err(SpectralError::Shape(_))));
        assert!(matches!(biorthogonal_eigs(&m, 0, 1.0), Err(SpectralError::Shape(_))));
    }
}
