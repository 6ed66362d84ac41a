//! Dense matrix exponential (degree-13 Padé with scaling and squaring) and
//! the covariance propagation it supports.

use nalgebra::DMatrix;

use super::SpectralError;

pub const ORACLE_MAX_N: usize = 512;

const THETA_13: f64 = 5.371_920_351_148_152;
const PADE_13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>, SpectralError> {
    if !a.is_square() {
        return Err(SpectralError::Shape(format!("{}x{} matrix", a.nrows(), a.ncols())));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(SpectralError::Domain("matrix has non-finite entries".into()));
    }
    let n = a.nrows();
    let norm = one_norm(a);
    let s = if norm > THETA_13 { (norm / THETA_13).log2().ceil() as i32 } else { 0 };
    let a = a / 2f64.powi(s);
    let b = &PADE_13;
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1];
    let u = &a * inner_u;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| SpectralError::Domain("singular Padé denominator".into()))?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// `e^{Lt} C₀ e^{Lᵀt}`.
pub fn propagate_covariance_oracle(l: &DMatrix<f64>, c0: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>, SpectralError> {
    let n = l.nrows();
    if n > ORACLE_MAX_N {
        return Err(SpectralError::OracleSize { n, max: ORACLE_MAX_N });
    }
    if c0.shape() != l.shape() {
        return Err(SpectralError::Shape(format!("operator {:?} vs covariance {:?}", l.shape(), c0.shape())));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(SpectralError::Domain(format!("t = {t}")));
    }
    let e = expm(&(l * t))?;
    Ok(&e * c0 * e.transpose())
}
