//! Retractions `τ: 𝔤 → G` and their right-trivialized tangent maps.
//!
//! The tangent convention is `dτ_ξ η = (d/dε) τ(ξ + εη)|₀ · τ(ξ)⁻¹`. Both `dτ_ξ`
//! and `dτ⁻¹_ξ` are returned as dense `d×d` matrices on algebra coordinates;
//! their duals on covectors are the transposes.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{AlgVec, GroupElem, GroupSpec};
use crate::error::{LieError, Result};
use crate::linalg::{self, Mat};

pub const DEFAULT_SERIES_ORDER: usize = 12;
pub const DEFAULT_DOMAIN_RADIUS: f64 = 1.5;
const SINGULAR_CONDITION: f64 = 1e14;
const FLIP_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetractionKind {
    Exp,
    Cayley,
}

impl std::str::FromStr for RetractionKind {
    type Err = LieError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exp" => Ok(RetractionKind::Exp),
            "cayley" => Ok(RetractionKind::Cayley),
            other => Err(LieError::InvalidConfig(format!(
                "unknown retraction `{other}`"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Retraction {
    kind: RetractionKind,
    spec: Arc<GroupSpec>,
    series_order: usize,
    domain_radius: f64,
}

impl Retraction {
    pub fn new(kind: RetractionKind, spec: Arc<GroupSpec>) -> Result<Self> {
        let r = Retraction {
            kind,
            spec,
            series_order: DEFAULT_SERIES_ORDER,
            domain_radius: DEFAULT_DOMAIN_RADIUS,
        };
        if kind == RetractionKind::Cayley {
            r.check_cayley_closure()?;
        }
        Ok(r)
    }

    pub fn exp(spec: Arc<GroupSpec>) -> Self {
        Self::new(RetractionKind::Exp, spec).expect("exp retraction always closes")
    }

    pub fn cayley(spec: Arc<GroupSpec>) -> Result<Self> {
        Self::new(RetractionKind::Cayley, spec)
    }

    pub fn with_series_order(mut self, order: usize) -> Self {
        self.series_order = order;
        self
    }

    pub fn with_domain_radius(mut self, radius: f64) -> Self {
        self.domain_radius = radius;
        self
    }

    pub fn kind(&self) -> RetractionKind {
        self.kind
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn spec_arc(&self) -> &Arc<GroupSpec> {
        &self.spec
    }

    pub fn series_order(&self) -> usize {
        self.series_order
    }

    pub fn domain_radius(&self) -> f64 {
        self.domain_radius
    }

    fn check_cayley_closure(&self) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..8 {
            let xi = self.spec.random_algebra(&mut rng, 1.0);
            match self.tau(&xi) {
                Ok(_) => {}
                Err(LieError::MembershipViolation { .. }) => {
                    return Err(LieError::CayleyNotClosed(self.spec.name().to_string()))
                }
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }

    fn check_domain(&self, xi: &AlgVec) -> Result<()> {
        let norm = xi.norm();
        if norm > self.domain_radius || !norm.is_finite() {
            Err(LieError::OutOfDomain {
                norm,
                radius: self.domain_radius,
            })
        } else {
            Ok(())
        }
    }

    pub fn tau(&self, xi: &AlgVec) -> Result<GroupElem> {
        let x = self.spec.to_matrix(xi);
        let n = self.spec.n();
        let m = match self.kind {
            RetractionKind::Exp => linalg::expm(&x, self.series_order),
            RetractionKind::Cayley => {
                let id = Mat::identity(n, n);
                let minus = &id - &x * 0.5;
                let plus = &id + &x * 0.5;
                let minus_inv = checked_inverse(&minus)?;
                minus_inv * plus
            }
        };
        self.spec.element(m)
    }

    pub fn tau_inv(&self, g: &GroupElem) -> Result<AlgVec> {
        let n = self.spec.n();
        let id = Mat::identity(n, n);
        let m = match self.kind {
            RetractionKind::Exp => linalg::logm(g.matrix()).map_err(|_| LieError::OutOfDomain {
                norm: f64::INFINITY,
                radius: self.domain_radius,
            })?,
            RetractionKind::Cayley => {
                let plus_inv = checked_inverse(&(g.matrix() + &id))?;
                (g.matrix() - &id) * plus_inv * 2.0
            }
        };
        let xi = self.spec.from_matrix(&m)?;
        self.check_domain(&xi)?;
        Ok(xi)
    }

    /// Right-trivialized tangent `dτ_ξ`.
    pub fn dtau(&self, xi: &AlgVec) -> Result<Mat> {
        self.check_domain(xi)?;
        match self.kind {
            RetractionKind::Exp => {
                // Σ_{n=0}^{order} adⁿ / (n+1)!, Horner form
                let ad = self.spec.ad_op(xi);
                let d = self.spec.dim();
                let id = Mat::identity(d, d);
                let mut acc = id.clone();
                for k in (1..=self.series_order).rev() {
                    acc = &id + (&ad * acc) / (k as f64 + 1.0);
                }
                Ok(acc)
            }
            RetractionKind::Cayley => {
                let inv = self.dtau_inv(xi)?;
                checked_inverse(&inv)
            }
        }
    }

    /// Inverse right-trivialized tangent `dτ⁻¹_ξ`.
    pub fn dtau_inv(&self, xi: &AlgVec) -> Result<Mat> {
        self.check_domain(xi)?;
        match self.kind {
            RetractionKind::Exp => {
                let fwd = self.dtau(xi)?;
                checked_inverse(&fwd)
            }
            RetractionKind::Cayley => {
                // η ↦ (I − ξ/2) η (I + ξ/2)
                let n = self.spec.n();
                let d = self.spec.dim();
                let x = self.spec.to_matrix(xi);
                let id = Mat::identity(n, n);
                let left = &id - &x * 0.5;
                let right = &id + &x * 0.5;
                let mut op = Mat::zeros(d, d);
                for (j, e) in self.spec.basis().iter().enumerate() {
                    let col = self.spec.from_matrix(&(&left * e * &right))?;
                    op.set_column(j, &col.0);
                }
                Ok(op)
            }
        }
    }

    /// `(dτ⁻¹_{−ξ})*` as a matrix on covector coordinates, after checking the
    /// identity `Ad*_{τ(ξ)} (dτ⁻¹_ξ)* = (dτ⁻¹_{−ξ})*`.
    pub fn dtau_inv_dual_flip(&self, xi: &AlgVec) -> Result<Mat> {
        let flipped = self.dtau_inv(&-xi)?.transpose();
        let ad = self.spec.ad_group_op(&self.tau(xi)?)?;
        let composed = ad.transpose() * self.dtau_inv(xi)?.transpose();
        let residual = linalg::max_abs(&(&flipped - composed));
        if residual > FLIP_TOL * linalg::max_abs(&flipped).max(1.0) {
            return Err(LieError::IdentityViolation { residual });
        }
        Ok(flipped)
    }
}

fn checked_inverse(m: &Mat) -> Result<Mat> {
    let condition = linalg::condition_number(m);
    if condition > SINGULAR_CONDITION {
        return Err(LieError::SingularCayley { condition });
    }
    linalg::inverse(m).ok_or(LieError::SingularCayley { condition })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{hat3, Membership};
    use rand::Rng;
    use std::f64::consts::FRAC_PI_2;

    fn so3() -> Arc<GroupSpec> {
        Arc::new(GroupSpec::so3())
    }

    fn se3() -> Arc<GroupSpec> {
        Arc::new(GroupSpec::se3())
    }

    fn quarter_turn_z() -> Mat {
        Mat::from_row_slice(3, 3, &[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0])
    }

    fn all_retractions() -> Vec<Retraction> {
        let mut out = Vec::new();
        for spec in [so3(), se3()] {
            out.push(Retraction::exp(spec.clone()));
            out.push(Retraction::cayley(spec).unwrap());
        }
        out
    }

    /// Central difference of ε ↦ τ(ξ+εη)·τ(ξ)⁻¹ at ε = 0, pulled back to coordinates.
    fn fd_right_tangent(r: &Retraction, xi: &AlgVec, eta: &AlgVec, eps: f64) -> AlgVec {
        let spec = r.spec();
        let base_inv = spec.inverse(&r.tau(xi).unwrap()).unwrap();
        let plus = r.tau(&(xi + &eta.scale(eps))).unwrap();
        let minus = r.tau(&(xi - &eta.scale(eps))).unwrap();
        let diff = (plus.matrix() - minus.matrix()) * base_inv.matrix() / (2.0 * eps);
        spec.from_matrix(&diff).unwrap()
    }

    #[test]
    fn exp_quarter_turn() {
        let r = Retraction::exp(so3());
        let g = r.tau(&AlgVec::from_slice(&[0.0, 0.0, FRAC_PI_2])).unwrap();
        assert!(linalg::max_abs(&(g.matrix() - quarter_turn_z())) < 1e-14);
    }

    #[test]
    fn cayley_of_two_is_quarter_turn() {
        let r = Retraction::cayley(so3()).unwrap();
        let g = r.tau(&AlgVec::from_slice(&[0.0, 0.0, 2.0])).unwrap();
        assert!(linalg::max_abs(&(g.matrix() - quarter_turn_z())) < 1e-15);
    }

    #[test]
    fn zero_maps_to_identity_and_back() {
        for r in all_retractions() {
            let d = r.spec().dim();
            let n = r.spec().n();
            let g = r.tau(&AlgVec::zeros(d)).unwrap();
            assert!(linalg::max_abs(&(g.matrix() - Mat::identity(n, n))) < 1e-16);
            assert!(r.tau_inv(&r.spec().identity()).unwrap().norm() < 1e-16);
            let id = Mat::identity(d, d);
            assert!(linalg::max_abs(&(r.dtau(&AlgVec::zeros(d)).unwrap() - &id)) < 1e-16);
            assert!(linalg::max_abs(&(r.dtau_inv(&AlgVec::zeros(d)).unwrap() - &id)) < 1e-16);
            assert!(
                linalg::max_abs(&(r.dtau_inv_dual_flip(&AlgVec::zeros(d)).unwrap() - &id)) < 1e-16
            );
        }
    }

    #[test]
    fn exp_log_of_planar_rotation() {
        let r = Retraction::exp(so3());
        let (s, c) = 0.3f64.sin_cos();
        let g = r
            .spec()
            .element(Mat::from_row_slice(
                3,
                3,
                &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0],
            ))
            .unwrap();
        let xi = r.tau_inv(&g).unwrap();
        assert!((xi.0 - AlgVec::from_slice(&[0.0, 0.0, 0.3]).0).amax() < 1e-15);
    }

    #[test]
    fn tau_inv_rejects_large_rotations() {
        let r = Retraction::exp(so3());
        let g = r.tau(&AlgVec::from_slice(&[0.0, 2.0, 0.0])).unwrap();
        assert!(matches!(r.tau_inv(&g), Err(LieError::OutOfDomain { .. })));
        assert!(matches!(
            r.dtau(&AlgVec::from_slice(&[0.0, 2.0, 0.0])),
            Err(LieError::OutOfDomain { .. })
        ));
    }

    #[test]
    fn exp_tangent_matches_finite_differences() {
        let r = Retraction::exp(so3());
        let xi = AlgVec::from_slice(&[0.0, 0.0, 1.0]);
        let op = r.dtau(&xi).unwrap();
        for i in 0..3 {
            let eta = AlgVec::basis(3, i);
            let fd = fd_right_tangent(&r, &xi, &eta, 1e-5);
            let analytic = &op * &eta.0;
            assert!((analytic - fd.0).amax() < 1e-8);
        }
    }

    #[test]
    fn tangent_identity_for_all_kinds() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for r in all_retractions() {
            for _ in 0..10 {
                let xi = r.spec().random_algebra(&mut rng, 1.0);
                let eta = r.spec().random_algebra_on_sphere(&mut rng, 1.0);
                let fd = fd_right_tangent(&r, &xi, &eta, 1e-5);
                let analytic = r.dtau(&xi).unwrap() * &eta.0;
                assert!((analytic - fd.0).amax() < 1e-7, "{:?}", r.kind());
            }
        }
    }

    #[test]
    fn cayley_se3_inverse_consistency() {
        let r = Retraction::cayley(se3()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let xi = r.spec().random_algebra(&mut rng, 1.0);
            let p = r.dtau_inv(&xi).unwrap() * r.dtau(&xi).unwrap();
            assert!(linalg::max_abs(&(p - Mat::identity(6, 6))) < 1e-12);
        }
    }

    #[test]
    fn flip_identity_examples() {
        let r = Retraction::exp(so3());
        r.dtau_inv_dual_flip(&AlgVec::from_slice(&[0.3, -0.2, 0.5]))
            .unwrap();

        let r = Retraction::cayley(se3()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..20 {
            let xi = r.spec().random_algebra_on_sphere(&mut rng, 1.0);
            let flipped = r.dtau_inv(&-&xi).unwrap().transpose();
            let ad = r.spec().ad_group_op(&r.tau(&xi).unwrap()).unwrap();
            let composed = ad.transpose() * r.dtau_inv(&xi).unwrap().transpose();
            assert!(linalg::max_abs(&(flipped - composed)) < 1e-11);
        }
    }

    #[test]
    fn low_series_order_trips_flip_check() {
        // loose membership so the truncated exponential itself is still accepted
        let spec = Arc::new(GroupSpec::so3().with_membership_tol(1e-3));
        let r = Retraction::exp(spec).with_series_order(4);
        let err = r
            .dtau_inv_dual_flip(&AlgVec::from_slice(&[0.2, -0.1, 0.25]))
            .unwrap_err();
        assert!(matches!(err, LieError::IdentityViolation { .. }));
    }

    #[test]
    fn exp_of_negative_is_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for spec in [so3(), se3()] {
            let r = Retraction::exp(spec.clone());
            let n = spec.n();
            for _ in 0..20 {
                let xi = spec.random_algebra(&mut rng, 1.0);
                let p = r.tau(&xi).unwrap().matrix() * r.tau(&-&xi).unwrap().matrix();
                assert!(linalg::max_abs(&(p - Mat::identity(n, n))) < 1e-13);
            }
        }
    }

    #[test]
    fn cayley_rejects_unclosed_group() {
        // Upper-triangular unipotent-plus-diagonal group: Cayley leaves det > 0
        // but does not preserve the orthogonality test chosen here.
        let basis = vec![
            Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        ];
        let spec =
            Arc::new(GroupSpec::new("affine1", 2, basis, Membership::SpecialOrthogonal).unwrap());
        assert!(matches!(
            Retraction::cayley(spec),
            Err(LieError::CayleyNotClosed(_))
        ));
    }

    #[test]
    fn cayley_on_embedded_so2() {
        let spec = Arc::new(
            GroupSpec::new(
                "SO2",
                3,
                vec![hat3([0.0, 0.0, 1.0])],
                Membership::SpecialOrthogonal,
            )
            .unwrap(),
        );
        let r = Retraction::cayley(spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xi = AlgVec::from_slice(&[rng.gen_range(-1.0..1.0)]);
        let back = r.tau_inv(&r.tau(&xi).unwrap()).unwrap();
        assert!((back.0 - xi.0).amax() < 1e-15);
    }
}
