//! Fixed-capacity dense helpers for dimensions up to three.
//!
//! Every model lives in dimension 2 or 3, so matrices are stored as `[[f64; 3]; 3]`
//! together with an active dimension `n`; entries outside the leading `n x n`
//! block are ignored.

pub const MAX_DIM: usize = 3;

pub type Mat = [[f64; MAX_DIM]; MAX_DIM];
pub type Vec3 = [f64; MAX_DIM];

pub const ZERO_MAT: Mat = [[0.0; MAX_DIM]; MAX_DIM];

pub fn identity(n: usize) -> Mat {
    let mut m = ZERO_MAT;
    for (i, row) in m.iter_mut().enumerate().take(n) {
        row[i] = 1.0;
    }
    m
}

pub fn det(m: &Mat, n: usize) -> f64 {
    match n {
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        3 => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        _ => panic!("unsupported dimension {n}"),
    }
}

/// Inverse via the adjugate; `None` when the determinant is numerically zero.
pub fn inverse(m: &Mat, n: usize) -> Option<Mat> {
    let d = det(m, n);
    let scale = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| m[i][j].abs())
        .fold(0.0_f64, f64::max);
    if !d.is_finite() || d.abs() <= 1e-300 || d.abs() <= f64::EPSILON * scale.powi(n as i32) {
        return None;
    }
    let mut r = ZERO_MAT;
    match n {
        1 => r[0][0] = 1.0 / m[0][0],
        2 => {
            r[0][0] = m[1][1] / d;
            r[0][1] = -m[0][1] / d;
            r[1][0] = -m[1][0] / d;
            r[1][1] = m[0][0] / d;
        }
        3 => {
            r[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / d;
            r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / d;
            r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / d;
            r[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / d;
            r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / d;
            r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / d;
            r[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / d;
            r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / d;
            r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / d;
        }
        _ => return None,
    }
    Some(r)
}

/// Lower-triangular Cholesky factor `L` with `m = L Lᵀ`.
pub fn cholesky(m: &Mat, n: usize) -> Option<Mat> {
    let mut l = ZERO_MAT;
    for i in 0..n {
        for j in 0..=i {
            let mut sum = m[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[i][i] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    Some(l)
}

pub fn mat_vec(m: &Mat, v: &[f64], n: usize) -> Vec3 {
    let mut out = [0.0; MAX_DIM];
    for i in 0..n {
        out[i] = (0..n).map(|j| m[i][j] * v[j]).sum();
    }
    out
}

pub fn mat_t_vec(m: &Mat, v: &[f64], n: usize) -> Vec3 {
    let mut out = [0.0; MAX_DIM];
    for i in 0..n {
        out[i] = (0..n).map(|j| m[j][i] * v[j]).sum();
    }
    out
}

pub fn mat_mul(a: &Mat, b: &Mat, n: usize) -> Mat {
    let mut out = ZERO_MAT;
    for i in 0..n {
        for j in 0..n {
            out[i][j] = (0..n).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn transpose(a: &Mat) -> Mat {
    let mut out = ZERO_MAT;
    for i in 0..MAX_DIM {
        for j in 0..MAX_DIM {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub fn quad_form(m: &Mat, v: &[f64], n: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += m[i][j] * v[i] * v[j];
        }
    }
    acc
}

pub fn bilinear(m: &Mat, u: &[f64], v: &[f64], n: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += m[i][j] * u[i] * v[j];
        }
    }
    acc
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Orthonormal completion of a unit vector `u` in dimension `n`.
///
/// Returns `n - 1` vectors spanning the orthogonal complement; the frame
/// `[u, e_1, ..]` is positively oriented.
pub fn orthonormal_complement(u: &[f64], n: usize) -> Vec<Vec3> {
    match n {
        2 => vec![[-u[1], u[0], 0.0]],
        3 => {
            let pick = if u[0].abs() < 0.9 {
                [1.0, 0.0, 0.0]
            } else {
                [0.0, 1.0, 0.0]
            };
            let proj = dot(&pick, &u[..3]);
            let mut e1 = [pick[0] - proj * u[0], pick[1] - proj * u[1], pick[2] - proj * u[2]];
            let l = norm(&e1);
            e1.iter_mut().for_each(|c| *c /= l);
            let e2 = cross(&u[..3], &e1);
            vec![e1, e2]
        }
        _ => panic!("unsupported dimension {n}"),
    }
}

pub fn cross(a: &[f64], b: &[f64]) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Real roots of `c0 + c1 t + c2 t^2` (degenerate leading terms handled).
pub fn real_roots_quadratic(c0: f64, c1: f64, c2: f64) -> Vec<f64> {
    let scale = c0.abs().max(c1.abs()).max(c2.abs());
    if scale == 0.0 {
        return Vec::new();
    }
    if c2.abs() <= 1e-14 * scale {
        if c1.abs() <= 1e-14 * scale {
            return Vec::new();
        }
        return vec![-c0 / c1];
    }
    let disc = c1 * c1 - 4.0 * c2 * c0;
    if disc < 0.0 {
        return Vec::new();
    }
    let q = -0.5 * (c1 + c1.signum() * disc.sqrt());
    let mut roots = vec![q / c2];
    if q != 0.0 {
        roots.push(c0 / q);
    }
    roots
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_and_cholesky_of_spd() {
        let m = [[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let inv = inverse(&m, 3).unwrap();
        let prod = mat_mul(&m, &inv, 3);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod[i][j] - want).abs() < 1e-14);
            }
        }
        let l = cholesky(&m, 3).unwrap();
        let back = mat_mul(&l, &transpose(&l), 3);
        for i in 0..3 {
            for j in 0..3 {
                assert!((back[i][j] - m[i][j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn complement_is_orthonormal_and_oriented() {
        let u = [0.3, -0.5, 0.812403840463596];
        let l = norm(&u);
        let u = [u[0] / l, u[1] / l, u[2] / l];
        let c = orthonormal_complement(&u, 3);
        assert!(dot(&c[0], &u).abs() < 1e-14);
        assert!(dot(&c[1], &u).abs() < 1e-14);
        assert!(dot(&c[0], &c[1]).abs() < 1e-14);
        let m = [u, c[0], c[1]];
        assert!((det(&m, 3) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn quadratic_roots() {
        let mut r = real_roots_quadratic(2.0, -3.0, 1.0);
        r.sort_by(f64::total_cmp);
        assert!((r[0] - 1.0).abs() < 1e-14 && (r[1] - 2.0).abs() < 1e-14);
        assert_eq!(real_roots_quadratic(1.0, 0.0, 1.0).len(), 0);
        assert_eq!(real_roots_quadratic(-4.0, 2.0, 0.0), vec![2.0]);
    }
}
