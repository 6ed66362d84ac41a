//! Similarity transform of the drift–diffusion equation.
//!
//! For `∂t p = −∂ξ(v p) + ∂ξ²(D p)` the substitution `ψ = e^{Φ} p` with
//!
//! ```text
//! Φ' = (2D' − v) / (2D)
//! ```
//!
//! removes the first-derivative term and leaves `∂t ψ = D ψ'' − U ψ`,
//!
//! ```text
//! U = v²/(4D) − v D'/(2D) + v'/2.
//! ```
//!
//! For constant `D` this reduces to `U = v²/(4D) + v'/2`.

use serde::{Deserialize, Serialize};

use crate::grid::{GridField, LogGrid};
use crate::solvers::FpCoefficients;

use super::SpectralError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformPair {
    pub grid: LogGrid,
    pub xi_star: f64,
    /// Gauge `Φ` with `Φ(ξ⋆) = 0`.
    pub phi: Vec<f64>,
    /// Potential `U`.
    pub potential: Vec<f64>,
    pub diffusion: Vec<f64>,
}

/// Central differences in the interior, second-order one-sided at the ends.
fn derivative(f: &[f64], dx: f64) -> Vec<f64> {
    let n = f.len();
    let mut d = vec![0.0; n];
    if n < 3 {
        if n == 2 {
            d[0] = (f[1] - f[0]) / dx;
            d[1] = d[0];
        }
        return d;
    }
    d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dx);
    d[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * dx);
    for i in 1..n - 1 {
        d[i] = (f[i + 1] - f[i - 1]) / (2.0 * dx);
    }
    d
}

pub fn similarity_transform(coeffs: &FpCoefficients, xi_star: f64) -> Result<TransformPair, SpectralError> {
    let grid = coeffs.grid;
    let dx = grid.dx();
    let (v, d) = (&coeffs.drift, &coeffs.diffusion);
    if let Some(i) = d.iter().position(|&x| !(x > 0.0)) {
        return Err(SpectralError::SingularTransform {
            xi: grid.node(i),
            value: d[i],
        });
    }
    let dp = derivative(d, dx);
    let vp = derivative(v, dx);
    let n = grid.n;
    let dphi: Vec<f64> = (0..n).map(|i| (2.0 * dp[i] - v[i]) / (2.0 * d[i])).collect();
    let mut phi = vec![0.0; n];
    for i in 1..n {
        phi[i] = phi[i - 1] + 0.5 * dx * (dphi[i - 1] + dphi[i]);
    }
    // Shift so that Φ(ξ⋆) = 0, interpolating linearly between nodes.
    let pos = ((xi_star - grid.node(0)) / dx).clamp(0.0, (n - 1) as f64);
    let j = (pos.floor() as usize).min(n - 2);
    let w = pos - j as f64;
    let at_star = phi[j] + w * (phi[j + 1] - phi[j]);
    for p in &mut phi {
        *p -= at_star;
    }
    let potential = (0..n)
        .map(|i| v[i] * v[i] / (4.0 * d[i]) - v[i] * dp[i] / (2.0 * d[i]) + 0.5 * vp[i])
        .collect();
    Ok(TransformPair {
        grid,
        xi_star,
        phi,
        potential,
        diffusion: d.clone(),
    })
}

impl TransformPair {
    /// `ψ = e^{Φ} p`.
    pub fn to_psi(&self, p: &GridField) -> Vec<f64> {
        p.values.iter().zip(&self.phi).map(|(v, f)| v * f.exp()).collect()
    }

    /// `p = e^{−Φ} ψ`.
    pub fn from_psi(&self, psi: &[f64], template: &GridField) -> GridField {
        let mut out = template.clone();
        for ((o, s), f) in out.values.iter_mut().zip(psi).zip(&self.phi) {
            *o = s * (-f).exp();
        }
        out.leaked_mass = 0.0;
        out
    }

    /// Integrate `∂t ψ = D ψ'' − U ψ` with `ψ = 0` beyond both ends, using
    /// fourth-order central differences and RK4.
    pub fn evolve_psi(&self, psi0: &[f64], t: f64) -> Vec<f64> {
        let n = self.grid.n;
        let dx = self.grid.dx();
        let d_max = self.diffusion.iter().cloned().fold(0.0, f64::max);
        let u_max = self.potential.iter().map(|u| u.abs()).fold(0.0, f64::max);
        // Fourth-order stencil has spectral radius 16/3 · D/dx².
        let bound = 2.5 / (16.0 / 3.0 * d_max / (dx * dx) + u_max);
        let steps = (t / bound).ceil().max(1.0) as usize;
        let dt = t / steps as f64;
        let at = |y: &[f64], i: isize| if i < 0 || i >= n as isize { 0.0 } else { y[i as usize] };
        let rhs = |y: &[f64], out: &mut [f64]| {
            for i in 0..n {
                let k = i as isize;
                let lap = (-at(y, k - 2) + 16.0 * at(y, k - 1) - 30.0 * y[i] + 16.0 * at(y, k + 1) - at(y, k + 2))
                    / (12.0 * dx * dx);
                out[i] = self.diffusion[i] * lap - self.potential[i] * y[i];
            }
        };
        let mut y = psi0.to_vec();
        let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for _ in 0..steps {
            rhs(&y, &mut k1);
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * dt * k1[i];
            }
            rhs(&tmp, &mut k2);
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * dt * k2[i];
            }
            rhs(&tmp, &mut k3);
            for i in 0..n {
                tmp[i] = y[i] + dt * k3[i];
            }
            rhs(&tmp, &mut k4);
            for i in 0..n {
                y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_drift_constant_diffusion() {
        let g = LogGrid::new(-3.0, 3.0, 61).unwrap();
        let c = FpCoefficients::constant(g, 0.0, 0.7).unwrap();
        let tp = similarity_transform(&c, 0.0).unwrap();
        assert!(tp.phi.iter().all(|&f| f.abs() < 1e-14));
        assert!(tp.potential.iter().all(|&u| u.abs() < 1e-14));
    }

    #[test]
    fn ornstein_uhlenbeck_potential() {
        // Oracle: direct substitution of v = −γξ, D const into the formula
        // gives γ²ξ²/(4D) − γ/2, whose ground state energy is exactly zero.
        let g = LogGrid::new(-4.0, 4.0, 201).unwrap();
        let (gamma, d) = (1.3, 0.4);
        let c = FpCoefficients::new(g, g.nodes().iter().map(|x| -gamma * x).collect(), vec![d; g.n]).unwrap();
        let tp = similarity_transform(&c, 0.0).unwrap();
        for (i, xi) in g.nodes().into_iter().enumerate() {
            let expect = gamma * gamma * xi * xi / (4.0 * d) - gamma / 2.0;
            assert!((tp.potential[i] - expect).abs() < 1e-10, "{xi}");
            assert!((tp.phi[i] - gamma * xi * xi / (4.0 * d)).abs() < 1e-10);
        }
    }

    #[test]
    fn nonpositive_diffusion_is_singular() {
        let g = LogGrid::new(-1.0, 1.0, 10).unwrap();
        let mut dvals = vec![1.0; 10];
        dvals[4] = 0.0;
        let c = FpCoefficients::new(g, vec![0.0; 10], dvals).unwrap();
        assert!(matches!(similarity_transform(&c, 0.0), Err(SpectralError::SingularTransform { .. })));
    }

    #[test]
    fn stationary_ou_state_is_a_zero_mode() {
        let g = LogGrid::new(-6.0, 6.0, 600).unwrap();
        let (gamma, d) = (1.0, 0.5);
        let c = FpCoefficients::new(g, g.nodes().iter().map(|x| -gamma * x).collect(), vec![d; g.n]).unwrap();
        let tp = similarity_transform(&c, 0.0).unwrap();
        // p_s ∝ exp(−γξ²/(2D)), so ψ_s = e^Φ p_s ∝ exp(−γξ²/(4D)).
        let psi0: Vec<f64> = g.nodes().iter().map(|x| (-gamma * x * x / (4.0 * d)).exp()).collect();
        let psi = tp.evolve_psi(&psi0, 0.5);
        let gap = psi.iter().zip(&psi0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-6, "{gap}");
    }
}
