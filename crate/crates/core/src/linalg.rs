//! Small dense-vector helpers over `&[f64]`.

use nalgebra::DMatrix;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|v| v * s).collect()
}

/// `a + s·b`
pub fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

pub fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

pub fn matvec(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(m.ncols(), x.len());
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * x[j]).sum())
        .collect()
}

/// `Mᵀx`
pub fn matvec_t(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(m.nrows(), x.len());
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| m[(i, j)] * x[i]).sum())
        .collect()
}

/// Orthonormal basis of the complement of the unit vector `u`.
pub fn complement_basis(u: &[f64]) -> Vec<Vec<f64>> {
    let n = u.len();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n.saturating_sub(1));
    // Gram–Schmidt over the coordinate axes, most orthogonal ones first.
    let mut axes: Vec<usize> = (0..n).collect();
    axes.sort_by(|&i, &j| u[i].abs().total_cmp(&u[j].abs()).then(i.cmp(&j)));
    for j in axes {
        if basis.len() + 1 == n {
            break;
        }
        let mut v = vec![0.0; n];
        v[j] = 1.0;
        for _ in 0..2 {
            let c = dot(&v, u);
            v = axpy(&v, -c, u);
            for b in &basis {
                let c = dot(&v, b);
                v = axpy(&v, -c, b);
            }
        }
        let l = norm(&v);
        if l > 1e-8 {
            basis.push(scale(&v, 1.0 / l));
        }
    }
    basis
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complement_is_orthonormal() {
        for u in [
            vec![0.0, 1.0],
            vec![0.6, 0.8],
            vec![1.0, 0.0, 0.0],
            vec![0.48, 0.6, 0.64],
        ] {
            let b = complement_basis(&u);
            assert_eq!(b.len(), u.len() - 1);
            for (i, v) in b.iter().enumerate() {
                assert!(dot(v, &u).abs() < 1e-14);
                assert!((norm(v) - 1.0).abs() < 1e-14);
                for w in &b[i + 1..] {
                    assert!(dot(v, w).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn transpose_product() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(matvec(&m, &[1.0, 0.0, -1.0]), vec![-2.0, -2.0]);
        assert_eq!(matvec_t(&m, &[1.0, -1.0]), vec![-3.0, -3.0, -3.0]);
    }
}
