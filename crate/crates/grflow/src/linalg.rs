//! Small dense symmetric-matrix kernels for dimensions 2 and 3.
//!
//! Fields store symmetric tensors as packed upper triangles; everything here
//! works on the unpacked `[[f64; 3]; 3]` form with the first `dim` rows and
//! columns meaningful.

use crate::grid::MAX_DIM;

pub type Mat = [[f64; MAX_DIM]; MAX_DIM];

/// Packed slot of the (i, j) entry of a symmetric matrix, i <= j after sorting.
#[inline]
pub fn sym_slot(dim: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    // row-major upper triangle
    i * dim - i * (i + 1) / 2 + j
}

pub fn sym_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

pub fn unpack(dim: usize, packed: &[f64]) -> Mat {
    let mut m = [[0.0; MAX_DIM]; MAX_DIM];
    for i in 0..dim {
        for j in 0..dim {
            m[i][j] = packed[sym_slot(dim, i, j)];
        }
    }
    m
}

pub fn pack(dim: usize, m: &Mat, out: &mut [f64]) {
    for i in 0..dim {
        for j in i..dim {
            out[sym_slot(dim, i, j)] = 0.5 * (m[i][j] + m[j][i]);
        }
    }
}

pub fn det(dim: usize, m: &Mat) -> f64 {
    match dim {
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        3 => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        _ => unreachable!("dim must be 2 or 3"),
    }
}

/// Inverse via cofactors. Caller is responsible for non-degeneracy.
pub fn inverse(dim: usize, m: &Mat) -> Mat {
    let d = det(dim, m);
    let mut inv = [[0.0; MAX_DIM]; MAX_DIM];
    match dim {
        2 => {
            inv[0][0] = m[1][1] / d;
            inv[1][1] = m[0][0] / d;
            inv[0][1] = -m[0][1] / d;
            inv[1][0] = -m[1][0] / d;
        }
        3 => {
            for i in 0..3 {
                for j in 0..3 {
                    let (a, b) = ((i + 1) % 3, (i + 2) % 3);
                    let (c, e) = ((j + 1) % 3, (j + 2) % 3);
                    // transpose of the cofactor matrix
                    inv[j][i] = (m[a][c] * m[b][e] - m[a][e] * m[b][c]) / d;
                }
            }
        }
        _ => unreachable!(),
    }
    inv
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn sym_eigenvalues(dim: usize, m: &Mat) -> [f64; MAX_DIM] {
    let mut a = *m;
    // symmetrize defensively; inputs come from packed storage so this is exact
    for i in 0..dim {
        for j in 0..dim {
            let s = 0.5 * (a[i][j] + a[j][i]);
            a[i][j] = s;
            a[j][i] = s;
        }
    }
    for _sweep in 0..32 {
        let mut off = 0.0;
        for i in 0..dim {
            for j in (i + 1)..dim {
                off += a[i][j] * a[i][j];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..dim {
            for q in (p + 1)..dim {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..dim {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..dim {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev = [0.0; MAX_DIM];
    for i in 0..dim {
        ev[i] = a[i][i];
    }
    ev[..dim].sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

/// Cholesky factor L with M = L L^T. Returns None when M is not SPD.
pub fn cholesky(dim: usize, m: &Mat) -> Option<Mat> {
    let mut l = [[0.0; MAX_DIM]; MAX_DIM];
    for i in 0..dim {
        for j in 0..=i {
            let mut s = m[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i][j] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

/// Eigenvalues of the pencil (S, G): the spectrum of G^{-1} S for SPD G,
/// computed symmetrically through the Cholesky factor of G.
pub fn generalized_eigenvalues(dim: usize, s: &Mat, g: &Mat) -> Option<[f64; MAX_DIM]> {
    let l = cholesky(dim, g)?;
    // B = L^{-1} S L^{-T}
    let mut y = [[0.0; MAX_DIM]; MAX_DIM]; // L^{-1} S
    for col in 0..dim {
        for i in 0..dim {
            let mut v = s[i][col];
            for k in 0..i {
                v -= l[i][k] * y[k][col];
            }
            y[i][col] = v / l[i][i];
        }
    }
    let mut b = [[0.0; MAX_DIM]; MAX_DIM]; // solve B L^T = Y  => row-wise forward solve
    for row in 0..dim {
        for j in 0..dim {
            let mut v = y[row][j];
            for k in 0..j {
                v -= b[row][k] * l[j][k];
            }
            b[row][j] = v / l[j][j];
        }
    }
    Some(sym_eigenvalues(dim, &b))
}
