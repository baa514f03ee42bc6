//! Matrix exponential by scaling and squaring with a degree-13 Padé
//! approximant (Higham's coefficients and θ₁₃ threshold).

use nalgebra::DMatrix;

use super::FlowError;

/// 1-norm threshold under which the [13/13] approximant is accurate to unit
/// roundoff without scaling.
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

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `e^{A t}`.
pub fn expm(a: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>, FlowError> {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.nrows();
    if a.iter().any(|v| !v.is_finite()) || !t.is_finite() {
        return Err(FlowError::NumericRange);
    }
    let m = a * t;
    let norm = norm1(&m);
    if norm == 0.0 {
        return Ok(DMatrix::identity(n, n));
    }
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let m = m * 2f64.powi(-s);

    let b = &PADE_13;
    let id = DMatrix::<f64>::identity(n, n);
    let m2 = &m * &m;
    let m4 = &m2 * &m2;
    let m6 = &m4 * &m2;

    let u_inner = &m6 * (&m6 * b[13] + &m4 * b[11] + &m2 * b[9]);
    let u = &m * (u_inner + &m6 * b[7] + &m4 * b[5] + &m2 * b[3] + &id * b[1]);
    let v_inner = &m6 * (&m6 * b[12] + &m4 * b[10] + &m2 * b[8]);
    let v = v_inner + &m6 * b[6] + &m4 * b[4] + &m2 * b[2] + &id * b[0];

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).ok_or(FlowError::NumericRange)?;
    for _ in 0..s {
        r = &r * &r;
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(FlowError::NumericRange);
    }
    Ok(r)
}
