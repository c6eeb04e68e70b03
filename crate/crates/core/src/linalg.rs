//! Small fixed-size helpers for 3-vectors and 3×3 matrices.

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn scale(a: &Vec3, c: f64) -> Vec3 {
    [a[0] * c, a[1] * c, a[2] * c]
}

pub fn add(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// `g(u, w)` for a symmetric bilinear form given by its matrix.
pub fn inner(g: &Mat3, u: &Vec3, w: &Vec3) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            s += g[i][j] * u[i] * w[j];
        }
    }
    s
}

pub fn mat_vec(m: &Mat3, v: &Vec3) -> Vec3 {
    [dot(&m[0], v), dot(&m[1], v), dot(&m[2], v)]
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn transpose(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub fn det(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// Leading principal minors of a 3×3 matrix.
pub fn leading_minors(a: &Mat3) -> [f64; 3] {
    [a[0][0], a[0][0] * a[1][1] - a[0][1] * a[1][0], det(a)]
}

/// Gershgorin lower bound on the eigenvalues of a symmetric matrix.
pub fn gershgorin_floor(a: &Mat3) -> f64 {
    (0..3)
        .map(|i| a[i][i] - (0..3).filter(|&j| j != i).map(|j| a[i][j].abs()).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

/// Inverse by the adjugate; `None` when the determinant vanishes.
pub fn inverse(a: &Mat3) -> Option<Mat3> {
    let d = det(a);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let c = |i: usize, j: usize| {
        let (r0, r1) = ((i + 1) % 3, (i + 2) % 3);
        let (c0, c1) = ((j + 1) % 3, (j + 2) % 3);
        a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0]
    };
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[j][i] = c(i, j) / d;
        }
    }
    Some(out)
}

/// Column `j` of `m`.
pub fn column(m: &Mat3, j: usize) -> Vec3 {
    [m[0][j], m[1][j], m[2][j]]
}

pub fn from_columns(c0: &Vec3, c1: &Vec3, c2: &Vec3) -> Mat3 {
    [[c0[0], c1[0], c2[0]], [c0[1], c1[1], c2[1]], [c0[2], c1[2], c2[2]]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_nil_block() {
        let g = [[1.0, 0.0, 0.0], [0.0, 5.0, -2.0], [0.0, -2.0, 1.0]];
        let inv = inverse(&g).unwrap();
        assert!((inv[1][1] - 1.0).abs() < 1e-15);
        assert!((inv[1][2] - 2.0).abs() < 1e-15);
        assert!((inv[2][2] - 5.0).abs() < 1e-15);
        let p = mat_mul(&g, &inv);
        for i in 0..3 {
            for j in 0..3 {
                assert!((p[i][j] - IDENTITY[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn singular_has_no_inverse() {
        assert!(inverse(&[[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]]).is_none());
    }
}
