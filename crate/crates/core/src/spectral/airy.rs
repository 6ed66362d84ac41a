//! Airy function `Ai`, its zeros, and normalised Airy profiles.
//!
//! `|x| ≤ 6`: Maclaurin series `Ai = c₁ f(x) − c₂ g(x)`. Beyond that the
//! standard asymptotic expansions in `ζ = (2/3)|x|^{3/2}` are used.

use std::f64::consts::{FRAC_PI_4, PI};

use crate::grid::{GridField, LeftBoundary, LogGrid};

use super::SpectralError;

/// `Ai(0)`.
const C1: f64 = 0.355_028_053_887_817_2;
/// `−Ai'(0)`.
const C2: f64 = 0.258_819_403_792_806_8;
const SERIES_LIMIT: f64 = 6.0;

fn maclaurin(x: f64) -> f64 {
    let x3 = x * x * x;
    let (mut f, mut g) = (1.0, x);
    let (mut tf, mut tg) = (1.0, x);
    for k in 1..200 {
        let kf = k as f64;
        tf *= x3 / ((3.0 * kf - 1.0) * 3.0 * kf);
        tg *= x3 / (3.0 * kf * (3.0 * kf + 1.0));
        f += tf;
        g += tg;
        if tf.abs() < 1e-18 * f.abs().max(1.0) && tg.abs() < 1e-18 * g.abs().max(1.0) {
            break;
        }
    }
    C1 * f - C2 * g
}

/// Terms `u_k ζ^{−k}` of the asymptotic expansions, truncated at the smallest.
fn asymptotic_terms(zeta: f64) -> Vec<f64> {
    let mut out = vec![1.0];
    let mut u = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..60 {
        let kf = k as f64;
        u *= (6.0 * kf - 5.0) * (6.0 * kf - 3.0) * (6.0 * kf - 1.0) / ((2.0 * kf - 1.0) * 216.0 * kf);
        let term = u / zeta.powi(k);
        if term.abs() >= prev || term.abs() < 1e-17 {
            break;
        }
        prev = term.abs();
        out.push(term);
    }
    out
}

pub fn airy_ai(x: f64) -> f64 {
    if x.abs() <= SERIES_LIMIT {
        return maclaurin(x);
    }
    if x > 0.0 {
        let zeta = 2.0 / 3.0 * x.powf(1.5);
        let sum: f64 = asymptotic_terms(zeta)
            .iter()
            .enumerate()
            .map(|(k, t)| if k % 2 == 0 { *t } else { -*t })
            .sum();
        (-zeta).exp() / (2.0 * PI.sqrt() * x.powf(0.25)) * sum
    } else {
        let ax = -x;
        let zeta = 2.0 / 3.0 * ax.powf(1.5);
        let terms = asymptotic_terms(zeta);
        let (mut p, mut q) = (0.0, 0.0);
        for (k, t) in terms.iter().enumerate() {
            // P = Σ (−1)^j u_{2j} ζ^{−2j}, Q = Σ (−1)^j u_{2j+1} ζ^{−2j−1}.
            let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
            if k % 2 == 0 {
                p += sign * t;
            } else {
                q += sign * t;
            }
        }
        let theta = zeta + FRAC_PI_4;
        (theta.sin() * p - theta.cos() * q) / (PI.sqrt() * ax.powf(0.25))
    }
}

/// First `count` zeros `a_1 > a_2 > …` of `Ai`, by scanning and bisection.
pub fn airy_zeros(count: usize) -> Vec<f64> {
    let mut zeros = Vec::with_capacity(count);
    let step = 0.05;
    let mut x = 0.0;
    let mut fx = airy_ai(x);
    while zeros.len() < count {
        let y = x - step;
        let fy = airy_ai(y);
        if fx == 0.0 {
            zeros.push(x);
        } else if fx.signum() != fy.signum() {
            let (mut hi, mut lo) = (x, y);
            let mut fhi = fx;
            for _ in 0..200 {
                let mid = 0.5 * (hi + lo);
                if mid == hi || mid == lo {
                    break;
                }
                let fm = airy_ai(mid);
                if fm.signum() == fhi.signum() {
                    hi = mid;
                    fhi = fm;
                } else {
                    lo = mid;
                }
            }
            zeros.push(0.5 * (hi + lo));
        }
        x = y;
        fx = fy;
    }
    zeros
}

/// `ℓ_A = (D⋆/F⋆)^{1/3}`.
pub fn airy_length(d_star: f64, f_star: f64) -> Result<f64, SpectralError> {
    if !(d_star > 0.0 && f_star > 0.0 && d_star.is_finite() && f_star.is_finite()) {
        return Err(SpectralError::Domain(format!("Airy length needs D > 0 and F > 0, got ({d_star}, {f_star})")));
    }
    Ok((d_star / f_star).cbrt())
}

/// `ψ(ξ) = N Ai((ξ − ξ₀)/ℓ_A)` with `∫ψ² dξ = 1` on the grid.
pub fn airy_profile(xi0: f64, ell: f64, grid: &LogGrid) -> Result<GridField, SpectralError> {
    if !(ell > 0.0 && ell.is_finite()) {
        return Err(SpectralError::Domain(format!("Airy length {ell}")));
    }
    let mut f = GridField::from_fn(*grid, LeftBoundary::AbsorbLeft, |xi| airy_ai((xi - xi0) / ell));
    let norm = (f.values.iter().map(|v| v * v).sum::<f64>() * grid.dx()).sqrt();
    if norm > 0.0 {
        for v in &mut f.values {
            *v /= norm;
        }
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;

    /// Defining integral `Ai(x) = (1/π) ∫₀^∞ cos(t³/3 + x t) dt`, rotated onto
    /// the ray `t = s e^{iπ/6}` where the integrand decays like `e^{−s³/3}`:
    /// `Ai(x) = (1/π) Re[e^{iπ/6} ∫₀^∞ exp(−s³/3 + i x s e^{iπ/6}) ds]`.
    fn ai_by_quadrature(x: f64) -> f64 {
        let (c, s6) = ((PI / 6.0).cos(), (PI / 6.0).sin());
        let re = |s: f64| {
            let mag = (-s * s * s / 3.0 - x * s * s6).exp();
            let ph = x * s * c;
            // e^{iπ/6} · mag · e^{i ph}
            mag * (c * ph.cos() - s6 * ph.sin())
        };
        integrate(re, 0.0, 12.0, 1e-13).unwrap().value / PI
    }

    #[test]
    fn value_at_zero() {
        assert!((airy_ai(0.0) - 0.3550280539).abs() < 1e-9);
        assert!((ai_by_quadrature(0.0) - airy_ai(0.0)).abs() < 1e-11);
    }

    #[test]
    fn series_and_asymptotics_match_quadrature() {
        for x in [-9.0, -7.5, -6.0, -4.2, -2.0, -0.5, 0.7, 2.0, 4.5] {
            let a = airy_ai(x);
            let b = ai_by_quadrature(x);
            assert!((a - b).abs() < 1e-9, "x = {x}: {a} vs {b}");
        }
        // Continuity across the series/asymptotic switch.
        for x in [-6.0f64, 6.0] {
            let e = 1e-9 * x.signum();
            assert!((airy_ai(x) - airy_ai(x + e)).abs() < 1e-8);
        }
    }

    #[test]
    fn first_zeros() {
        let z = airy_zeros(3);
        assert!((z[0] + 2.338107).abs() < 1e-6, "{}", z[0]);
        assert!((z[1] + 4.087949).abs() < 1e-6);
        assert!((z[2] + 5.520560).abs() < 1e-6);
        let z10 = airy_zeros(10);
        assert!((z10[9] + 12.828777).abs() < 1e-6, "{}", z10[9]);
    }

    #[test]
    fn airy_length_examples() {
        assert_eq!(airy_length(1.0, 1.0).unwrap(), 1.0);
        assert!((airy_length(8.0, 1.0).unwrap() - 2.0).abs() < 1e-15);
        assert!(airy_length(0.0, 1.0).is_err());
        assert!(airy_length(1.0, -1.0).is_err());
    }

    #[test]
    fn profile_is_normalised() {
        let g = LogGrid::new(-10.0, 10.0, 2000).unwrap();
        let f = airy_profile(1.0, 1.5, &g).unwrap();
        let s: f64 = f.values.iter().map(|v| v * v).sum::<f64>() * g.dx();
        assert!((s - 1.0).abs() < 1e-12);
    }
}
