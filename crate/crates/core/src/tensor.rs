//! Fixed-size 3x3 matrices and fourth-order tensors. Two-dimensional
//! problems use the leading 2x2 block and leave the rest zero.

pub type Mat3 = [[f64; 3]; 3];

pub const ZERO: Mat3 = [[0.0; 3]; 3];

pub fn identity(dim: usize) -> Mat3 {
    let mut m = ZERO;
    for (i, row) in m.iter_mut().enumerate().take(dim) {
        row[i] = 1.0;
    }
    m
}

pub fn det(m: &Mat3, dim: usize) -> f64 {
    match dim {
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        3 => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// Inverse of the leading `dim x dim` block, `None` when singular.
pub fn inverse(m: &Mat3, dim: usize) -> Option<Mat3> {
    let d = det(m, dim);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let mut r = ZERO;
    match dim {
        2 => {
            r[0][0] = m[1][1] / d;
            r[0][1] = -m[0][1] / d;
            r[1][0] = -m[1][0] / d;
            r[1][1] = m[0][0] / d;
        }
        3 => {
            for i in 0..3 {
                for j in 0..3 {
                    let (i1, i2) = ((j + 1) % 3, (j + 2) % 3);
                    let (j1, j2) = ((i + 1) % 3, (i + 2) % 3);
                    r[i][j] = (m[i1][j1] * m[i2][j2] - m[i1][j2] * m[i2][j1]) / d;
                }
            }
        }
        _ => panic!("unsupported dimension {dim}"),
    }
    Some(r)
}

pub fn matmul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut r = ZERO;
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    r
}

pub fn transpose(a: &Mat3) -> Mat3 {
    let mut r = ZERO;
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = a[j][i];
        }
    }
    r
}

pub fn trace(a: &Mat3) -> f64 {
    a[0][0] + a[1][1] + a[2][2]
}

/// Frobenius product `a : b`.
pub fn ddot(a: &Mat3, b: &Mat3) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            s += a[i][j] * b[i][j];
        }
    }
    s
}

pub fn matvec(a: &Mat3, v: &[f64; 3]) -> [f64; 3] {
    let mut r = [0.0; 3];
    for (i, ri) in r.iter_mut().enumerate() {
        *ri = (0..3).map(|k| a[i][k] * v[k]).sum();
    }
    r
}

pub fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Tangential projector `I - nu (x) nu` in `dim` dimensions.
pub fn projector(nu: &[f64; 3], dim: usize) -> Mat3 {
    let mut p = identity(dim);
    for i in 0..dim {
        for j in 0..dim {
            p[i][j] -= nu[i] * nu[j];
        }
    }
    p
}

/// Fourth-order tensor `C[a][c][b][e]` acting on matrices by
/// `(C xi)[a][c] = sum C[a][c][b][e] xi[b][e]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tensor4(pub [f64; 81]);

impl Tensor4 {
    pub const fn zero() -> Self {
        Tensor4([0.0; 81])
    }

    #[inline]
    pub fn idx(a: usize, c: usize, b: usize, e: usize) -> usize {
        ((a * 3 + c) * 3 + b) * 3 + e
    }

    #[inline]
    pub fn get(&self, a: usize, c: usize, b: usize, e: usize) -> f64 {
        self.0[Self::idx(a, c, b, e)]
    }

    #[inline]
    pub fn set(&mut self, a: usize, c: usize, b: usize, e: usize, v: f64) {
        self.0[Self::idx(a, c, b, e)] = v;
    }

    pub fn apply(&self, xi: &Mat3) -> Mat3 {
        let mut r = ZERO;
        for a in 0..3 {
            for c in 0..3 {
                let mut s = 0.0;
                for b in 0..3 {
                    for e in 0..3 {
                        s += self.get(a, c, b, e) * xi[b][e];
                    }
                }
                r[a][c] = s;
            }
        }
        r
    }

    /// `C[X, Y] = (C X) : Y`.
    pub fn bilinear(&self, x: &Mat3, y: &Mat3) -> f64 {
        ddot(&self.apply(x), y)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_round_trip() {
        let m = [[2.0, 0.3, -1.0], [0.1, 1.5, 0.2], [0.0, -0.4, 3.0]];
        for dim in [2, 3] {
            let inv = inverse(&m, dim).unwrap();
            let mut mm = ZERO;
            for i in 0..dim {
                for j in 0..dim {
                    mm[i][j] = m[i][j];
                }
            }
            let p = matmul(&mm, &inv);
            for i in 0..dim {
                for j in 0..dim {
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((p[i][j] - e).abs() < 1e-14);
                }
            }
        }
    }
}
