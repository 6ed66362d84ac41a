//! Calibration and discretisation of `L_A = D⋆∂² − F⋆(ξ − ξ⋆) − Γ⋆`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::process::LogJumpProcess;

use super::airy::airy_length;
use super::SpectralError;

pub const MIN_NODES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AiryParams {
    pub d_star: f64,
    pub f_star: f64,
    pub gamma_star: f64,
    pub xi_star: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AiryCalibration {
    pub params: AiryParams,
    pub lambda_star: f64,
    /// `(D⋆/F⋆)^{1/3}`; absent when `F⋆ ≤ 0`.
    pub ell_a: Option<f64>,
}

/// `dU/ds` at `s = 0` for `v = v0 + v1 s`, `D = d0 + d1 s`, where
/// `U = v²/(4D) − v D'/(2D) + v'/2`.
pub fn linear_potential_slope(v0: f64, v1: f64, d0: f64, d1: f64) -> f64 {
    v0 * v1 / (2.0 * d0) - v0 * v0 * d1 / (4.0 * d0 * d0) - v1 * d1 / (2.0 * d0) + v0 * d1 * d1 / (2.0 * d0 * d0)
}

/// `D⋆ = (m₂/2)λ⋆` and `F⋆` from the potential of the coefficients
/// linearised in `λ(ξ) ≈ λ⋆(1 + α(ξ − ξ⋆))`.
pub fn calibrate_airy_params(process: &LogJumpProcess, xi_star: f64, gamma_star: f64) -> Result<AiryCalibration, SpectralError> {
    let lambda_star = process.rate_at(xi_star)?;
    let alpha = process.rate.alpha;
    let (m1, m2) = (process.jumps.moment(1), process.jumps.moment(2));
    let (v0, d0) = (-m1 * lambda_star, 0.5 * m2 * lambda_star);
    let f_star = linear_potential_slope(v0, v0 * alpha, d0, d0 * alpha);
    let ell_a = if f_star > 0.0 {
        Some(airy_length(d0, f_star)?)
    } else {
        log::warn!("F* = {f_star} <= 0 at xi* = {xi_star}: profile is not Airy-confined");
        None
    };
    Ok(AiryCalibration {
        params: AiryParams {
            d_star: d0,
            f_star,
            gamma_star,
            xi_star,
        },
        lambda_star,
        ell_a,
    })
}

/// Dense matrix of `L_A` on `n` interior nodes between Dirichlet walls.
#[derive(Debug, Clone, PartialEq)]
pub struct AiryOperator {
    pub params: AiryParams,
    pub walls: (f64, f64),
    pub nodes: Vec<f64>,
    pub h: f64,
    pub matrix: DMatrix<f64>,
}

pub fn build_airy_operator(params: &AiryParams, walls: (f64, f64), n: usize) -> Result<AiryOperator, SpectralError> {
    let (left, right) = walls;
    if n < MIN_NODES {
        return Err(SpectralError::Domain(format!("need at least {MIN_NODES} nodes, got {n}")));
    }
    if !(left.is_finite() && right.is_finite() && right > left) {
        return Err(SpectralError::Domain(format!("walls ({left}, {right})")));
    }
    if !(params.d_star > 0.0) {
        return Err(SpectralError::Domain(format!("D* = {}", params.d_star)));
    }
    let h = (right - left) / (n + 1) as f64;
    let nodes: Vec<f64> = (1..=n).map(|j| left + j as f64 * h).collect();
    let c = params.d_star / (h * h);
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = -2.0 * c - params.f_star * (nodes[i] - params.xi_star) - params.gamma_star;
        if i > 0 {
            m[(i, i - 1)] = c;
        }
        if i + 1 < n {
            m[(i, i + 1)] = c;
        }
    }
    Ok(AiryOperator {
        params: *params,
        walls,
        nodes,
        h,
        matrix: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jump_law::LogJumpLaw;
    use crate::kernel::{BreakageRate, DaughterLaw};
    use crate::grid::LogGrid;
    use crate::solvers::km_reduce;
    use crate::spectral::transform::similarity_transform;

    fn airy_process(k: f64) -> LogJumpProcess {
        LogJumpProcess::new(
            BreakageRate::new(1.0, k, 1.0).unwrap(),
            LogJumpLaw::from_daughter(&DaughterLaw::UniformBinary).unwrap(),
        )
    }

    #[test]
    fn uniform_binary_calibration() {
        let cal = calibrate_airy_params(&airy_process(1.0), 0.0, 0.0).unwrap();
        assert!((cal.params.d_star - 0.25).abs() < 1e-9);
        assert!((cal.lambda_star - 1.0).abs() < 1e-15);
        let ell = cal.ell_a.unwrap();
        assert!((ell - airy_length(0.25, cal.params.f_star).unwrap()).abs() < 1e-15);
        // λ⋆ doubles → D⋆ doubles.
        let cal2 = calibrate_airy_params(&airy_process(1.0), std::f64::consts::LN_2, 0.0).unwrap();
        assert!((cal2.params.d_star - 0.5).abs() < 1e-9);
    }

    #[test]
    fn slope_matches_finite_difference_of_full_potential() {
        let p = airy_process(1.0);
        let cal = calibrate_airy_params(&p, 0.0, 0.0).unwrap();
        let g = LogGrid::new(-1.0, 1.0, 401).unwrap();
        let tp = similarity_transform(&km_reduce(&p, &g).unwrap(), 0.0).unwrap();
        let i = g.nearest(0.0);
        let fd = (tp.potential[i + 1] - tp.potential[i - 1]) / (2.0 * g.dx());
        assert!((cal.params.f_star - fd).abs() < 0.1 * fd.abs(), "{} vs {fd}", cal.params.f_star);
    }

    #[test]
    fn constant_rate_is_not_confined() {
        let p = LogJumpProcess::new(
            BreakageRate::new(0.0, 1.0, 1.0).unwrap(),
            LogJumpLaw::from_daughter(&DaughterLaw::UniformBinary).unwrap(),
        );
        let cal = calibrate_airy_params(&p, 0.0, 0.0).unwrap();
        assert_eq!(cal.params.f_star, 0.0);
        assert!(cal.ell_a.is_none());
    }

    #[test]
    fn quadratic_test_function() {
        let params = AiryParams {
            d_star: 0.7,
            f_star: 0.3,
            gamma_star: 0.1,
            xi_star: 0.0,
        };
        let op = build_airy_operator(&params, (0.0, 10.0), 199).unwrap();
        let f: Vec<f64> = op.nodes.iter().map(|x| x * x).collect();
        for i in 1..op.nodes.len() - 1 {
            let lf: f64 = op.matrix.row(i).iter().zip(&f).map(|(a, b)| a * b).sum();
            let x = op.nodes[i];
            let exact = 0.7 * 2.0 - (0.3 * x + 0.1) * x * x;
            assert!((lf - exact).abs() < 1e-9, "{lf} vs {exact}");
        }
    }

    #[test]
    fn too_few_nodes_rejected() {
        let params = AiryParams {
            d_star: 1.0,
            f_star: 1.0,
            gamma_star: 0.0,
            xi_star: 0.0,
        };
        assert!(build_airy_operator(&params, (0.0, 1.0), 10).is_err());
    }
}
