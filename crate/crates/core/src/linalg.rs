//! Dense matrix functions for small matrices: exponential, principal
//! logarithm, square root, and a few helpers shared by the group code.

use nalgebra::{DMatrix, DVector};

use crate::error::{LieError, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Order of the Mercator series used once the argument is within 0.25 of I.
const LOG_SERIES_TERMS: usize = 40;
const LOG_NEAR_IDENTITY: f64 = 0.25;
const MAX_SQRT_HALVINGS: usize = 60;

pub fn inf_norm(m: &Mat) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn vec_max_abs(v: &Vector) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// 2-norm condition number via SVD; `f64::INFINITY` when singular.
pub fn condition_number(m: &Mat) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn inverse(m: &Mat) -> Option<Mat> {
    m.clone().lu().try_inverse()
}

/// Matrix exponential by scaling and squaring around a truncated Taylor core
/// of the given order.
pub fn expm(a: &Mat, order: usize) -> Mat {
    let n = a.nrows();
    let norm = inf_norm(a);
    let mut squarings = 0u32;
    if norm > 0.5 {
        squarings = (norm / 0.5).log2().ceil() as u32;
    }
    let scaled = a / 2f64.powi(squarings as i32);

    // Horner evaluation of sum_{k<=order} X^k / k!
    let id = Mat::identity(n, n);
    let mut acc = id.clone();
    for k in (1..=order).rev() {
        acc = &id + (&scaled * acc) / (k as f64);
    }
    for _ in 0..squarings {
        acc = &acc * &acc;
    }
    acc
}

/// Principal square root by the Denman–Beavers iteration.
pub fn sqrtm(a: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = Mat::identity(n, n);
    for _ in 0..100 {
        let y_inv = inverse(&y).ok_or(LieError::NoConvergence {
            residual: f64::INFINITY,
            iterations: 0,
        })?;
        let z_inv = inverse(&z).ok_or(LieError::NoConvergence {
            residual: f64::INFINITY,
            iterations: 0,
        })?;
        let y_next = (&y + z_inv) * 0.5;
        let z_next = (&z + y_inv) * 0.5;
        let delta = max_abs(&(&y_next - &y));
        y = y_next;
        z = z_next;
        if delta <= 1e-12 * max_abs(&y).max(1.0) {
            return Ok(y);
        }
    }
    let residual = max_abs(&(&y * &y - a));
    if residual <= 1e-12 * max_abs(a).max(1.0) {
        Ok(y)
    } else {
        Err(LieError::NoConvergence {
            residual,
            iterations: 100,
        })
    }
}

/// Principal logarithm by inverse scaling and squaring: take square roots
/// until the argument is within 0.25 of the identity, then sum the Mercator
/// series and scale back.
pub fn logm(a: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let id = Mat::identity(n, n);
    let mut x = a.clone();
    let mut halvings = 0;
    while inf_norm(&(&x - &id)) >= LOG_NEAR_IDENTITY {
        if halvings >= MAX_SQRT_HALVINGS {
            return Err(LieError::NoConvergence {
                residual: inf_norm(&(&x - &id)),
                iterations: halvings,
            });
        }
        x = sqrtm(&x)?;
        halvings += 1;
    }
    let e = &x - &id;
    // log(I + E) = sum_{k>=1} (-1)^{k+1} E^k / k, Horner form
    let mut acc = Mat::zeros(n, n);
    for k in (1..=LOG_SERIES_TERMS).rev() {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        acc = &id * (sign / k as f64) + &e * acc;
    }
    let log = &e * acc;
    Ok(log * 2f64.powi(halvings as i32))
}

/// Frobenius inner product Tr(AᵀB).
pub fn frobenius_dot(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn commutator(a: &Mat, b: &Mat) -> Mat {
    a * b - b * a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rz(theta: f64) -> Mat {
        let (s, c) = theta.sin_cos();
        Mat::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0])
    }

    #[test]
    fn expm_of_planar_generator_is_rotation() {
        let a = Mat::from_row_slice(3, 3, &[0.0, -2.5, 0.0, 2.5, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let e = expm(&a, 12);
        assert!(max_abs(&(e - rz(2.5))) < 1e-14);
    }

    #[test]
    fn expm_of_nilpotent_is_exact() {
        let a = Mat::from_row_slice(2, 2, &[0.0, 3.0, 0.0, 0.0]);
        let e = expm(&a, 12);
        assert!(max_abs(&(e - Mat::from_row_slice(2, 2, &[1.0, 3.0, 0.0, 1.0]))) < 1e-15);
    }

    #[test]
    fn logm_inverts_expm() {
        let r = rz(2.9);
        let l = logm(&r).unwrap();
        assert!((l[(1, 0)] - 2.9).abs() < 1e-13);
        assert!(max_abs(&(expm(&l, 12) - r)) < 1e-13);
    }

    #[test]
    fn sqrtm_squares_back() {
        let r = rz(1.2);
        let s = sqrtm(&r).unwrap();
        assert!(max_abs(&(&s * &s - &r)) < 1e-14);
        assert!(max_abs(&(s - rz(0.6))) < 1e-14);
    }

    #[test]
    fn condition_of_singular_is_infinite() {
        let m = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(condition_number(&m) > 1e15);
    }
}
