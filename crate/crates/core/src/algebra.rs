//! Matrix Lie groups and their algebras.
//!
//! A [`GroupSpec`] fixes an ambient matrix size `n` and a basis `E_1..E_d` of
//! the Lie algebra. Algebra elements ([`AlgVec`]) and dual elements
//! ([`CoVec`]) are stored as coordinates: `ξ = Σ ξ_i E_i`, and covectors in the
//! dual basis so that the pairing is the plain dot product. Every linear
//! operator on the algebra (ad, Ad, tangent maps of retractions) is a `d×d`
//! matrix acting on coordinates, and its dual on covectors is the transpose.

use std::fmt;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LieError, Result};
use crate::linalg::{self, Mat, Vector};

pub const DEFAULT_MEMBERSHIP_TOL: f64 = 1e-10;
/// Frobenius distance from span(basis) tolerated by [`GroupSpec::from_matrix`].
pub const ALGEBRA_TOL: f64 = 1e-8;
const CLOSURE_TOL: f64 = 1e-12;
const MAX_GRAM_CONDITION: f64 = 1e12;

/// Coordinates of a Lie algebra element in the basis of its [`GroupSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct AlgVec(pub Vector);

/// Coordinates of a dual element in the dual basis.
#[derive(Clone, Debug, PartialEq)]
pub struct CoVec(pub Vector);

macro_rules! coord_vec {
    ($t:ident) => {
        impl $t {
            pub fn zeros(d: usize) -> Self {
                $t(Vector::zeros(d))
            }

            pub fn from_slice(s: &[f64]) -> Self {
                $t(Vector::from_column_slice(s))
            }

            pub fn basis(d: usize, i: usize) -> Self {
                let mut v = Vector::zeros(d);
                v[i] = 1.0;
                $t(v)
            }

            pub fn dim(&self) -> usize {
                self.0.len()
            }

            pub fn norm(&self) -> f64 {
                self.0.norm()
            }

            pub fn scale(&self, s: f64) -> Self {
                $t(&self.0 * s)
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|x| x.is_finite())
            }

            pub fn as_slice(&self) -> &[f64] {
                self.0.as_slice()
            }
        }

        impl std::ops::Add for &$t {
            type Output = $t;
            fn add(self, rhs: &$t) -> $t {
                $t(&self.0 + &rhs.0)
            }
        }

        impl std::ops::Sub for &$t {
            type Output = $t;
            fn sub(self, rhs: &$t) -> $t {
                $t(&self.0 - &rhs.0)
            }
        }

        impl std::ops::Neg for &$t {
            type Output = $t;
            fn neg(self) -> $t {
                $t(-&self.0)
            }
        }
    };
}

coord_vec!(AlgVec);
coord_vec!(CoVec);

/// Duality pairing `⟨μ, ξ⟩ = Σ μ_i ξ_i`.
pub fn pair(mu: &CoVec, xi: &AlgVec) -> f64 {
    mu.0.dot(&xi.0)
}

/// A group element: an `n×n` matrix that passed the membership test of its
/// group when it was constructed.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupElem(Mat);

impl GroupElem {
    /// Wrap a matrix without checking membership.
    pub fn new_unchecked(mat: Mat) -> Self {
        GroupElem(mat)
    }

    pub fn matrix(&self) -> &Mat {
        &self.0
    }

    pub fn into_matrix(self) -> Mat {
        self.0
    }

    /// Row-major flattening.
    pub fn to_row_major(&self) -> Vec<f64> {
        let n = self.0.nrows();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..self.0.ncols() {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }
}

/// How group membership of an ambient matrix is decided.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    /// `gᵀg = I` and `det g > 0`.
    SpecialOrthogonal,
    /// Homogeneous `[[R, p], [0, 1]]` with `R ∈ SO(n-1)`.
    SpecialEuclidean,
    /// `gᵀ J g = J` and `det g > 0` for a fixed form `J`.
    Quadratic { form: Vec<f64> },
    /// Any invertible matrix.
    Invertible,
}

/// A matrix Lie group described by an algebra basis.
#[derive(Clone)]
pub struct GroupSpec {
    name: String,
    n: usize,
    basis: Vec<Mat>,
    gram: Mat,
    gram_inv: Mat,
    /// `structure[i]` is `ad_op(e_i)`; column `j` holds the coordinates of `[E_i, E_j]`.
    structure: Vec<Mat>,
    membership: Membership,
    membership_tol: f64,
}

impl fmt::Debug for GroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupSpec")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("d", &self.dim())
            .field("membership", &self.membership)
            .finish()
    }
}

/// `hat(w)` for `w ∈ R³`: the skew-symmetric matrix with `hat(w) v = w × v`.
pub fn hat3(w: [f64; 3]) -> Mat {
    Mat::from_row_slice(
        3,
        3,
        &[0.0, -w[2], w[1], w[2], 0.0, -w[0], -w[1], w[0], 0.0],
    )
}

impl GroupSpec {
    /// SO(3) with the hat basis `hat(e_1), hat(e_2), hat(e_3)`; the Gram matrix is `2I`.
    pub fn so3() -> Self {
        let basis = (0..3)
            .map(|i| {
                let mut w = [0.0; 3];
                w[i] = 1.0;
                hat3(w)
            })
            .collect();
        Self::new("SO3", 3, basis, Membership::SpecialOrthogonal).expect("SO(3) basis is valid")
    }

    /// SE(3) as 4×4 homogeneous matrices. Coordinates are `(ω, v)`: the first
    /// three basis elements are rotations, the last three translations.
    pub fn se3() -> Self {
        let mut basis = Vec::with_capacity(6);
        for i in 0..3 {
            let mut w = [0.0; 3];
            w[i] = 1.0;
            let mut e = Mat::zeros(4, 4);
            e.view_mut((0, 0), (3, 3)).copy_from(&hat3(w));
            basis.push(e);
        }
        for i in 0..3 {
            let mut e = Mat::zeros(4, 4);
            e[(i, 3)] = 1.0;
            basis.push(e);
        }
        Self::new("SE3", 4, basis, Membership::SpecialEuclidean).expect("SE(3) basis is valid")
    }

    /// A user-defined matrix group. Checks that the basis is linearly
    /// independent and closed under the commutator.
    pub fn new(
        name: impl Into<String>,
        n: usize,
        basis: Vec<Mat>,
        membership: Membership,
    ) -> Result<Self> {
        let name = name.into();
        if basis.is_empty() {
            return Err(LieError::InvalidGroup("empty basis".into()));
        }
        if let Some(bad) = basis.iter().find(|e| e.nrows() != n || e.ncols() != n) {
            return Err(LieError::InvalidGroup(format!(
                "basis matrix is {}x{}, expected {n}x{n}",
                bad.nrows(),
                bad.ncols()
            )));
        }
        if let Membership::Quadratic { form } = &membership {
            if form.len() != n * n {
                return Err(LieError::InvalidGroup(format!(
                    "quadratic form has {} entries, expected {}",
                    form.len(),
                    n * n
                )));
            }
        }
        let d = basis.len();
        let gram = Mat::from_fn(d, d, |i, j| linalg::frobenius_dot(&basis[i], &basis[j]));
        let cond = linalg::condition_number(&gram);
        if !cond.is_finite() || cond > MAX_GRAM_CONDITION {
            return Err(LieError::InvalidGroup(format!(
                "basis is linearly dependent (Gram condition {cond:.3e})"
            )));
        }
        let gram_inv = linalg::inverse(&gram)
            .ok_or_else(|| LieError::InvalidGroup("Gram matrix is singular".into()))?;

        let mut spec = GroupSpec {
            name,
            n,
            basis,
            gram,
            gram_inv,
            structure: Vec::new(),
            membership,
            membership_tol: DEFAULT_MEMBERSHIP_TOL,
        };

        let mut structure = vec![Mat::zeros(d, d); d];
        for i in 0..d {
            for j in 0..d {
                let bracket = linalg::commutator(&spec.basis[i], &spec.basis[j]);
                let (coords, residual) = spec.project(&bracket);
                if residual > CLOSURE_TOL * linalg::max_abs(&bracket).max(1.0) {
                    return Err(LieError::InvalidGroup(format!(
                        "basis is not closed under the bracket: [E_{i}, E_{j}] leaves the span \
                         (residual {residual:.3e})"
                    )));
                }
                structure[i].set_column(j, &coords);
            }
        }
        // Exact zeros keep the integer structure constants of the built-in groups exact.
        for c in structure.iter_mut() {
            c.apply(|x| {
                if x.abs() < 1e-15 {
                    *x = 0.0
                }
            });
        }
        spec.structure = structure;
        Ok(spec)
    }

    pub fn with_membership_tol(mut self, tol: f64) -> Self {
        self.membership_tol = tol;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Ambient matrix size.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Algebra dimension.
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Mat] {
        &self.basis
    }

    pub fn gram(&self) -> &Mat {
        &self.gram
    }

    pub fn gram_inv(&self) -> &Mat {
        &self.gram_inv
    }

    pub fn membership(&self) -> &Membership {
        &self.membership
    }

    pub fn membership_tol(&self) -> f64 {
        self.membership_tol
    }

    pub fn to_matrix(&self, v: &AlgVec) -> Mat {
        let mut m = Mat::zeros(self.n, self.n);
        for (c, e) in v.0.iter().zip(&self.basis) {
            if *c != 0.0 {
                m += e * *c;
            }
        }
        m
    }

    /// Least-squares coordinates of `m` and the Frobenius residual of the fit.
    fn project(&self, m: &Mat) -> (Vector, f64) {
        let rhs = DVector::from_iterator(
            self.dim(),
            self.basis.iter().map(|e| linalg::frobenius_dot(e, m)),
        );
        let coords = &self.gram_inv * rhs;
        let mut fit = m.clone();
        for (c, e) in coords.iter().zip(&self.basis) {
            fit -= e * *c;
        }
        (coords, fit.norm())
    }

    pub fn from_matrix(&self, m: &Mat) -> Result<AlgVec> {
        let (coords, residual) = self.project(m);
        if residual > ALGEBRA_TOL * m.norm().max(1.0) {
            return Err(LieError::NotInAlgebra { residual });
        }
        Ok(AlgVec(coords))
    }

    pub fn bracket(&self, a: &AlgVec, b: &AlgVec) -> AlgVec {
        AlgVec(self.ad_op(a) * &b.0)
    }

    /// `ad_ξ` as a `d×d` matrix; `ad*_ξ` on covector coordinates is its transpose.
    pub fn ad_op(&self, xi: &AlgVec) -> Mat {
        let d = self.dim();
        let mut op = Mat::zeros(d, d);
        for (c, s) in xi.0.iter().zip(&self.structure) {
            if *c != 0.0 {
                op += s * *c;
            }
        }
        op
    }

    /// `Ad_g` as a `d×d` matrix: column `j` holds the coordinates of `g E_j g⁻¹`.
    pub fn ad_group_op(&self, g: &GroupElem) -> Result<Mat> {
        let g_inv = self.inverse_matrix(g.matrix())?;
        let d = self.dim();
        let mut op = Mat::zeros(d, d);
        for (j, e) in self.basis.iter().enumerate() {
            let conj = g.matrix() * e * &g_inv;
            let coords = self.from_matrix(&conj)?;
            op.set_column(j, &coords.0);
        }
        Ok(op)
    }

    pub fn identity(&self) -> GroupElem {
        GroupElem(Mat::identity(self.n, self.n))
    }

    /// Deviation of `m` from the group, in the norm natural for the membership kind.
    pub fn membership_residual(&self, m: &Mat) -> f64 {
        if m.nrows() != self.n || m.ncols() != self.n || m.iter().any(|x| !x.is_finite()) {
            return f64::INFINITY;
        }
        match &self.membership {
            Membership::SpecialOrthogonal => orthogonal_residual(m),
            Membership::SpecialEuclidean => {
                let k = self.n - 1;
                let rot = m.view((0, 0), (k, k)).into_owned();
                let mut residual = orthogonal_residual(&rot);
                let bottom: f64 =
                    (0..k).map(|j| m[(k, j)].powi(2)).sum::<f64>() + (m[(k, k)] - 1.0).powi(2);
                residual += bottom.sqrt();
                residual
            }
            Membership::Quadratic { form } => {
                let j = Mat::from_row_slice(self.n, self.n, form);
                if m.determinant() <= 0.0 {
                    return f64::INFINITY;
                }
                (m.transpose() * &j * m - &j).norm()
            }
            Membership::Invertible => {
                if m.determinant().abs() > self.membership_tol {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    pub fn check_membership(&self, m: &Mat) -> Result<()> {
        let residual = self.membership_residual(m);
        if residual <= self.membership_tol {
            Ok(())
        } else {
            Err(LieError::MembershipViolation {
                residual,
                tol: self.membership_tol,
            })
        }
    }

    /// Wrap `m` as a group element after checking membership.
    pub fn element(&self, m: Mat) -> Result<GroupElem> {
        self.check_membership(&m)?;
        Ok(GroupElem(m))
    }

    pub fn compose(&self, a: &GroupElem, b: &GroupElem) -> Result<GroupElem> {
        self.element(&a.0 * &b.0)
    }

    pub fn inverse(&self, a: &GroupElem) -> Result<GroupElem> {
        self.element(self.inverse_matrix(&a.0)?)
    }

    fn inverse_matrix(&self, m: &Mat) -> Result<Mat> {
        match self.membership {
            Membership::SpecialOrthogonal => Ok(m.transpose()),
            Membership::SpecialEuclidean => {
                let k = self.n - 1;
                let rt = m.view((0, 0), (k, k)).transpose();
                let p = m.view((0, k), (k, 1)).into_owned();
                let mut inv = Mat::identity(self.n, self.n);
                inv.view_mut((0, 0), (k, k)).copy_from(&rt);
                inv.view_mut((0, k), (k, 1)).copy_from(&(-(&rt * p)));
                Ok(inv)
            }
            _ => linalg::inverse(m).ok_or(LieError::MembershipViolation {
                residual: f64::INFINITY,
                tol: self.membership_tol,
            }),
        }
    }

    /// Snap an element back onto the group by polar decomposition of its
    /// orthogonal block. Only meaningful for SO(n) and SE(n); other kinds are
    /// returned unchanged. Not used by any integrator.
    pub fn reproject(&self, g: &GroupElem) -> GroupElem {
        match self.membership {
            Membership::SpecialOrthogonal => GroupElem(polar_rotation(&g.0)),
            Membership::SpecialEuclidean => {
                let k = self.n - 1;
                let mut out = g.0.clone();
                let rot = polar_rotation(&g.0.view((0, 0), (k, k)).into_owned());
                out.view_mut((0, 0), (k, k)).copy_from(&rot);
                for j in 0..k {
                    out[(k, j)] = 0.0;
                }
                out[(k, k)] = 1.0;
                GroupElem(out)
            }
            _ => g.clone(),
        }
    }

    /// A random algebra element whose coordinate norm is uniform in `[0, radius]`.
    pub fn random_algebra<R: Rng + ?Sized>(&self, rng: &mut R, radius: f64) -> AlgVec {
        let d = self.dim();
        let dir = Vector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
        let norm = dir.norm().max(1e-300);
        let r = radius * rng.gen_range(0.0..1.0);
        AlgVec(dir * (r / norm))
    }

    /// A random algebra element with coordinate norm exactly `radius`.
    pub fn random_algebra_on_sphere<R: Rng + ?Sized>(&self, rng: &mut R, radius: f64) -> AlgVec {
        let d = self.dim();
        loop {
            let dir = Vector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
            let norm = dir.norm();
            if norm > 1e-3 {
                return AlgVec(dir * (radius / norm));
            }
        }
    }

    pub fn random_covec<R: Rng + ?Sized>(&self, rng: &mut R, scale: f64) -> CoVec {
        CoVec(Vector::from_fn(self.dim(), |_, _| {
            rng.gen_range(-scale..scale)
        }))
    }

    /// `exp` of a random algebra element of norm at most `radius`.
    pub fn random_element<R: Rng + ?Sized>(&self, rng: &mut R, radius: f64) -> GroupElem {
        let xi = self.random_algebra(rng, radius);
        GroupElem(linalg::expm(&self.to_matrix(&xi), 16))
    }
}

fn orthogonal_residual(m: &Mat) -> f64 {
    let k = m.nrows();
    if m.determinant() <= 0.0 {
        return f64::INFINITY;
    }
    (m.transpose() * m - Mat::identity(k, k)).norm()
}

fn polar_rotation(m: &Mat) -> Mat {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut r = &u * &v_t;
    if r.determinant() < 0.0 {
        let k = m.nrows();
        let mut flip = Mat::identity(k, k);
        flip[(k - 1, k - 1)] = -1.0;
        r = &u * flip * &v_t;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rz(theta: f64) -> Mat {
        let (s, c) = theta.sin_cos();
        Mat::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0])
    }

    #[test]
    fn so3_hat_of_e3() {
        let g = GroupSpec::so3();
        let m = g.to_matrix(&AlgVec::from_slice(&[0.0, 0.0, 1.0]));
        let expected = Mat::from_row_slice(3, 3, &[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(m, expected);
        assert_eq!(g.gram(), &(Mat::identity(3, 3) * 2.0));
    }

    #[test]
    fn zero_round_trips_to_zero() {
        for g in [GroupSpec::so3(), GroupSpec::se3()] {
            let z = AlgVec::zeros(g.dim());
            let m = g.to_matrix(&z);
            assert_eq!(linalg::max_abs(&m), 0.0);
            assert_eq!(g.from_matrix(&m).unwrap(), z);
        }
    }

    #[test]
    fn random_antisymmetric_round_trip() {
        let g = GroupSpec::so3();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = Mat::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
            let skew = (&a - a.transpose()) * 0.5;
            let coords = g.from_matrix(&skew).unwrap();
            assert!(linalg::max_abs(&(g.to_matrix(&coords) - &skew)) < 1e-14);
        }
    }

    #[test]
    fn symmetric_matrix_is_not_in_so3() {
        let g = GroupSpec::so3();
        let m = Mat::identity(3, 3);
        assert!(matches!(
            g.from_matrix(&m),
            Err(LieError::NotInAlgebra { .. })
        ));
    }

    #[test]
    fn se3_basis_has_zero_bottom_row() {
        let g = GroupSpec::se3();
        assert_eq!(g.dim(), 6);
        for e in g.basis() {
            assert!((0..4).all(|j| e[(3, j)] == 0.0));
        }
    }

    #[test]
    fn rotation_composition() {
        let g = GroupSpec::so3();
        let a = g.element(rz(std::f64::consts::FRAC_PI_2)).unwrap();
        let ab = g.compose(&a, &a).unwrap();
        assert!(linalg::max_abs(&(ab.matrix() - rz(std::f64::consts::PI))) < 1e-15);
        let id = g.identity();
        assert_eq!(g.inverse(&id).unwrap(), id);
    }

    #[test]
    fn random_pair_stays_orthogonal() {
        let g = GroupSpec::so3();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let a = g.random_element(&mut rng, 3.0);
            let b = g.random_element(&mut rng, 3.0);
            let ab = g.compose(&a, &b).unwrap();
            let m = ab.matrix();
            assert!((m.transpose() * m - Mat::identity(3, 3)).norm() <= 1e-13);
            let e = g.compose(&a, &g.inverse(&a).unwrap()).unwrap();
            assert!(linalg::max_abs(&(e.matrix() - Mat::identity(3, 3))) < 1e-12);
        }
    }

    #[test]
    fn drifted_matrix_fails_membership() {
        let g = GroupSpec::so3();
        let m = rz(0.4) * 1.001;
        assert!(matches!(
            g.element(m.clone()),
            Err(LieError::MembershipViolation { .. })
        ));
        let fixed = g.reproject(&GroupElem::new_unchecked(m));
        assert!(g.membership_residual(fixed.matrix()) < 1e-14);
    }

    #[test]
    fn ad_of_so3_e3() {
        let g = GroupSpec::so3();
        let ad = g.ad_op(&AlgVec::from_slice(&[0.0, 0.0, 1.0]));
        let expected = Mat::from_row_slice(3, 3, &[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(ad, expected);
        assert_eq!(linalg::max_abs(&g.ad_op(&AlgVec::zeros(3))), 0.0);
    }

    #[test]
    fn se3_ad_matches_matrix_bracket() {
        let g = GroupSpec::se3();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let xi = g.random_algebra(&mut rng, 2.0);
            let eta = g.random_algebra(&mut rng, 2.0);
            let via_op = g.ad_op(&xi) * &eta.0;
            let bracket = linalg::commutator(&g.to_matrix(&xi), &g.to_matrix(&eta));
            let oracle = g.from_matrix(&bracket).unwrap();
            assert!((via_op - oracle.0).amax() < 1e-13);
        }
    }

    #[test]
    fn ad_group_of_so3_is_the_rotation() {
        let g = GroupSpec::so3();
        assert!(
            linalg::max_abs(&(g.ad_group_op(&g.identity()).unwrap() - Mat::identity(3, 3))) < 1e-15
        );
        let r = g.element(rz(0.7)).unwrap();
        assert!(linalg::max_abs(&(g.ad_group_op(&r).unwrap() - rz(0.7))) < 1e-14);
    }

    #[test]
    fn se3_ad_group_inverse() {
        let g = GroupSpec::se3();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let a = g.random_element(&mut rng, 2.0);
            let a_inv = g.inverse(&a).unwrap();
            let p = g.ad_group_op(&a).unwrap() * g.ad_group_op(&a_inv).unwrap();
            assert!(linalg::max_abs(&(p - Mat::identity(6, 6))) < 1e-12);
        }
    }

    #[test]
    fn pairing_basics() {
        assert_eq!(
            pair(
                &CoVec::from_slice(&[1.0, 0.0, 0.0]),
                &AlgVec::from_slice(&[1.0, 0.0, 0.0])
            ),
            1.0
        );
        assert_eq!(
            pair(&CoVec::zeros(3), &AlgVec::from_slice(&[0.3, -2.0, 5.0])),
            0.0
        );
    }

    #[test]
    fn coadjoint_duality_on_se3() {
        let g = GroupSpec::se3();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let xi = g.random_algebra(&mut rng, 2.0);
            let eta = g.random_algebra(&mut rng, 2.0);
            let mu = g.random_covec(&mut rng, 2.0);
            let ad = g.ad_op(&xi);
            let lhs = pair(&CoVec(ad.transpose() * &mu.0), &eta);
            let rhs = pair(&mu, &AlgVec(&ad * &eta.0));
            assert!((lhs - rhs).abs() < 1e-13);

            let h = g.random_element(&mut rng, 2.0);
            let big = g.ad_group_op(&h).unwrap();
            let lhs = pair(&CoVec(big.transpose() * &mu.0), &eta);
            let rhs = pair(&mu, &AlgVec(&big * &eta.0));
            assert!((lhs - rhs).abs() < 1e-13);
        }
    }

    #[test]
    fn jacobi_identity_of_structure_constants() {
        for g in [GroupSpec::so3(), GroupSpec::se3()] {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            for _ in 0..30 {
                let a = g.random_algebra(&mut rng, 1.5);
                let b = g.random_algebra(&mut rng, 1.5);
                let lhs = g.ad_op(&g.bracket(&a, &b));
                let rhs = g.ad_op(&a) * g.ad_op(&b) - g.ad_op(&b) * g.ad_op(&a);
                assert!(linalg::max_abs(&(lhs - rhs)) < 1e-12);
            }
        }
    }

    #[test]
    fn ad_group_of_exp_is_exp_of_ad() {
        for g in [GroupSpec::so3(), GroupSpec::se3()] {
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            for _ in 0..30 {
                let xi = g.random_algebra(&mut rng, 1.0);
                let h = GroupElem::new_unchecked(linalg::expm(&g.to_matrix(&xi), 16));
                let lhs = g.ad_group_op(&h).unwrap();
                let rhs = linalg::expm(&g.ad_op(&xi), 16);
                assert!(linalg::max_abs(&(lhs - rhs)) < 1e-10);
            }
        }
    }

    #[test]
    fn so3_ad_group_is_orthogonal() {
        let g = GroupSpec::so3();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..30 {
            let h = g.random_element(&mut rng, 3.0);
            let a = g.ad_group_op(&h).unwrap();
            assert!(linalg::max_abs(&(a.transpose() * &a - Mat::identity(3, 3))) < 1e-12);
        }
    }

    #[test]
    fn custom_group_rejects_unclosed_basis() {
        let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = Mat::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let err = GroupSpec::new("bad", 2, vec![a, b], Membership::Invertible).unwrap_err();
        assert!(matches!(err, LieError::InvalidGroup(_)));
    }

    #[test]
    fn custom_group_rejects_dependent_basis() {
        let a = hat3([0.0, 0.0, 1.0]);
        let err = GroupSpec::new(
            "dup",
            3,
            vec![a.clone(), a * 2.0],
            Membership::SpecialOrthogonal,
        )
        .unwrap_err();
        assert!(matches!(err, LieError::InvalidGroup(_)));
    }

    #[test]
    fn embedded_so2_is_abelian() {
        let g = GroupSpec::new(
            "SO2",
            3,
            vec![hat3([0.0, 0.0, 1.0])],
            Membership::SpecialOrthogonal,
        )
        .unwrap();
        assert_eq!(g.dim(), 1);
        assert_eq!(g.ad_op(&AlgVec::from_slice(&[2.0]))[(0, 0)], 0.0);
    }
}
