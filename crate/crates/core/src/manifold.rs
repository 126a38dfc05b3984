//! The Poincaré ball model of hyperbolic space.
//!
//! Points live strictly inside the ball `{x : c‖x‖² < 1}` where `c` is the
//! curvature magnitude (sectional curvature `-c`). With `c = 1` the metric is
//! `λ_x² · I` with conformal factor `λ_x = 2 / (1 − ‖x‖²)` and the distance is
//!
//! ```text
//! d(x, y) = arccosh(1 + 2‖x − y‖² / ((1 − ‖x‖²)(1 − ‖y‖²)))
//! ```
//!
//! Every operation that produces a point re-projects it into the ball so the
//! norm never exceeds `(1 − EPS_BALL) / √c`. Singular inputs (zero tangent
//! vectors, `log_x(x)`) return exact zeros instead of failing.

use crate::error::{check_dim, Error, Result};

/// Distance kept between any stored point and the ball boundary.
pub const EPS_BALL: f64 = 1e-5;

/// Radius of the outermost representable point at unit curvature,
/// `2·artanh(1 − EPS_BALL)` (about 12.21).
pub fn max_radius() -> f64 {
    2.0 * (1.0 - EPS_BALL).atanh()
}

/// Curvature magnitude `κ > 0` of the ball.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curvature(f64);

impl Curvature {
    pub fn new(kappa: f64) -> Result<Self> {
        if kappa.is_finite() && kappa > 0.0 {
            Ok(Curvature(kappa))
        } else {
            Err(Error::usage(format!("curvature must be positive, got {kappa}")))
        }
    }

    pub fn kappa(self) -> f64 {
        self.0
    }
}

impl Default for Curvature {
    fn default() -> Self {
        Curvature(1.0)
    }
}

/// A point strictly inside the ball.
#[derive(Debug, Clone, PartialEq)]
pub struct PoincarePoint {
    coords: Vec<f64>,
}

impl PoincarePoint {
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.coords)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coords
    }

    pub fn is_origin(&self) -> bool {
        self.coords.iter().all(|&v| v == 0.0)
    }

    /// Gyrovector inverse `−x`; always inside the ball.
    pub fn neg(&self) -> PoincarePoint {
        PoincarePoint {
            coords: self.coords.iter().map(|v| -v).collect(),
        }
    }
}

/// A vector in the tangent space at `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    coords: Vec<f64>,
    base: PoincarePoint,
}

impl TangentVector {
    pub fn new(base: PoincarePoint, coords: Vec<f64>) -> Result<Self> {
        check_dim(base.dim(), coords.len())?;
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tangent vector".into()));
        }
        Ok(TangentVector { coords, base })
    }

    pub fn zero(base: PoincarePoint) -> Self {
        let coords = vec![0.0; base.dim()];
        TangentVector { coords, base }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn base(&self) -> &PoincarePoint {
        &self.base
    }

    pub fn norm(&self) -> f64 {
        norm(&self.coords)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coords
    }
}

/// An `n`-dimensional Poincaré ball with fixed curvature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoincareBall {
    curvature: Curvature,
    dim: usize,
}

impl PoincareBall {
    pub fn new(dim: usize, curvature: Curvature) -> Result<Self> {
        if dim == 0 {
            return Err(Error::usage("ball dimension must be at least 1"));
        }
        Ok(PoincareBall { curvature, dim })
    }

    /// Unit-curvature ball.
    pub fn unit(dim: usize) -> Result<Self> {
        Self::new(dim, Curvature::default())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn curvature(&self) -> Curvature {
        self.curvature
    }

    fn sqrt_c(&self) -> f64 {
        self.curvature.0.sqrt()
    }

    /// Largest Euclidean norm a stored point may have.
    pub fn max_norm(&self) -> f64 {
        (1.0 - EPS_BALL) / self.sqrt_c()
    }

    /// Largest representable hyperbolic radius.
    pub fn max_radius(&self) -> f64 {
        max_radius() / self.sqrt_c()
    }

    pub fn origin(&self) -> PoincarePoint {
        PoincarePoint {
            coords: vec![0.0; self.dim],
        }
    }

    /// Validates a raw vector and pulls it inside the ball if needed.
    pub fn project(&self, v: &[f64]) -> Result<PoincarePoint> {
        check_dim(self.dim, v.len())?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("point coordinates".into()));
        }
        Ok(self.clamp(v.to_vec()))
    }

    fn clamp(&self, mut v: Vec<f64>) -> PoincarePoint {
        let n = norm(&v);
        let max = self.max_norm();
        if n >= max {
            let s = max / n;
            v.iter_mut().for_each(|x| *x *= s);
            // rounding in long vectors can land a few ulps outside
            while norm(&v) > max {
                v.iter_mut().for_each(|x| *x *= 1.0 - f64::EPSILON);
            }
        }
        PoincarePoint { coords: v }
    }

    fn check(&self, x: &PoincarePoint) -> Result<()> {
        check_dim(self.dim, x.dim())
    }

    /// `λ_x = 2 / (1 − c‖x‖²)`.
    pub fn conformal_factor(&self, x: &PoincarePoint) -> f64 {
        2.0 / (1.0 - self.curvature.0 * norm_sq(&x.coords))
    }

    /// Möbius addition `x ⊕ y`.
    pub fn mobius_add(&self, x: &PoincarePoint, y: &PoincarePoint) -> Result<PoincarePoint> {
        self.check(x)?;
        self.check(y)?;
        Ok(self.clamp(mobius_add_raw(self.curvature.0, &x.coords, &y.coords)))
    }

    /// Möbius scalar multiplication `r ⊗ x`.
    pub fn mobius_scalar(&self, r: f64, x: &PoincarePoint) -> Result<PoincarePoint> {
        self.check(x)?;
        if !r.is_finite() {
            return Err(Error::NonFinite("Möbius scalar".into()));
        }
        let n = x.norm();
        if n == 0.0 {
            return Ok(self.origin());
        }
        let s = self.sqrt_c();
        let scale = (r * (s * n).atanh()).tanh() / (s * n);
        Ok(self.clamp(x.coords.iter().map(|v| v * scale).collect()))
    }

    /// Geodesic distance.
    pub fn distance(&self, x: &PoincarePoint, y: &PoincarePoint) -> Result<f64> {
        self.check(x)?;
        self.check(y)?;
        let c = self.curvature.0;
        let diff: f64 = x
            .coords
            .iter()
            .zip(&y.coords)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let denom = (1.0 - c * norm_sq(&x.coords)) * (1.0 - c * norm_sq(&y.coords));
        let z = 2.0 * c * diff / denom;
        // arccosh(1 + z) without cancellation for small z
        Ok((z + (z * (z + 2.0)).sqrt()).ln_1p() / self.sqrt_c())
    }

    /// `exp_x(v) = x ⊕ tanh(√c λ_x ‖v‖ / 2) · v / (√c ‖v‖)`.
    pub fn exp_map(&self, v: &TangentVector) -> Result<PoincarePoint> {
        let base = v.base();
        self.check(base)?;
        let n = v.norm();
        if n == 0.0 {
            return Ok(base.clone());
        }
        let s = self.sqrt_c();
        let lambda = self.conformal_factor(base);
        let scale = (s * lambda * n / 2.0).tanh() / (s * n);
        let step: Vec<f64> = v.coords.iter().map(|x| x * scale).collect();
        Ok(self.clamp(mobius_add_raw(self.curvature.0, &base.coords, &step)))
    }

    /// `log_x(y) = 2 / (√c λ_x) · artanh(√c ‖−x ⊕ y‖) · (−x ⊕ y) / ‖−x ⊕ y‖`.
    pub fn log_map(&self, base: &PoincarePoint, y: &PoincarePoint) -> Result<TangentVector> {
        let u = self.mobius_add(&base.neg(), y)?;
        let n = u.norm();
        if n == 0.0 {
            return Ok(TangentVector::zero(base.clone()));
        }
        let s = self.sqrt_c();
        let lambda = self.conformal_factor(base);
        let scale = 2.0 / (s * lambda) * (s * n).atanh() / n;
        Ok(TangentVector {
            coords: u.coords.iter().map(|x| x * scale).collect(),
            base: base.clone(),
        })
    }

    /// Exponential map at the origin, taking raw tangent coordinates.
    pub fn exp0(&self, v: &[f64]) -> Result<PoincarePoint> {
        self.exp_map(&TangentVector::new(self.origin(), v.to_vec())?)
    }

    /// Logarithmic map at the origin, returning raw tangent coordinates.
    pub fn log0(&self, y: &PoincarePoint) -> Result<Vec<f64>> {
        Ok(self.log_map(&self.origin(), y)?.into_vec())
    }

    /// Point at parameter `t ∈ [0, 1]` on the geodesic from `zi` to `zj`:
    /// `zi ⊕ t ⊗ ((−zi) ⊕ zj)`.
    pub fn geodesic(&self, zi: &PoincarePoint, zj: &PoincarePoint, t: f64) -> Result<PoincarePoint> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::usage(format!("geodesic parameter {t} outside [0, 1]")));
        }
        let delta = self.mobius_add(&zi.neg(), zj)?;
        let scaled = self.mobius_scalar(t, &delta)?;
        self.mobius_add(zi, &scaled)
    }

    /// Hyperbolic distance from the origin, `2/√c · artanh(√c‖x‖)`.
    pub fn radius(&self, x: &PoincarePoint) -> f64 {
        let s = self.sqrt_c();
        2.0 / s * (s * x.norm()).atanh()
    }

    /// Softly caps the radius of `x` below `bound`: the new radius is
    /// `bound · tanh(r / bound)`, computed through the chart at the origin.
    pub fn bound_radius(&self, x: &PoincarePoint, bound: f64) -> Result<PoincarePoint> {
        if !(bound > 0.0) {
            return Err(Error::usage(format!("radius bound must be positive, got {bound}")));
        }
        let u = self.log0(x)?;
        let n = norm(&u);
        if n == 0.0 {
            return Ok(x.clone());
        }
        let half = bound / 2.0;
        let f = half * (n / half).tanh() / n;
        self.exp0(&u.iter().map(|v| v * f).collect::<Vec<_>>())
    }

    /// Moves `x` along its ray so that its hyperbolic radius becomes `r`.
    pub fn set_radius(&self, x: &PoincarePoint, r: f64) -> Result<PoincarePoint> {
        self.check(x)?;
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::usage(format!("radius must be finite and non-negative, got {r}")));
        }
        let n = x.norm();
        if n == 0.0 {
            if r == 0.0 {
                return Ok(self.origin());
            }
            return Err(Error::UndefinedDirection);
        }
        let s = self.sqrt_c();
        let target = (s * r / 2.0).tanh() / s;
        Ok(self.clamp(x.coords.iter().map(|v| v / n * target).collect()))
    }
}

fn mobius_add_raw(c: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    let xy = dot(x, y);
    let x2 = norm_sq(x);
    let y2 = norm_sq(y);
    let a = 1.0 + 2.0 * c * xy + c * y2;
    let b = 1.0 - c * x2;
    let den = 1.0 + 2.0 * c * xy + c * c * x2 * y2;
    x.iter()
        .zip(y)
        .map(|(xi, yi)| (a * xi + b * yi) / den)
        .collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ball2() -> PoincareBall {
        PoincareBall::unit(2).unwrap()
    }

    fn pt(ball: &PoincareBall, v: &[f64]) -> PoincarePoint {
        ball.project(v).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn conformal_factor_values() {
        let b = ball2();
        assert_eq!(b.conformal_factor(&b.origin()), 2.0);
        assert!(close(b.conformal_factor(&pt(&b, &[0.5, 0.0])), 8.0 / 3.0, 1e-12));
        let edge = b.project(&[5.0, 0.0]).unwrap();
        let lam = b.conformal_factor(&edge);
        assert!(close(lam, 2.0 / (1.0 - (1.0 - 1e-5f64).powi(2)), 1e-6));
        assert!(lam > 0.99e5 && lam < 1.01e5);
    }

    #[test]
    fn collinear_mobius_addition() {
        let b = ball2();
        let s = b.mobius_add(&pt(&b, &[0.3, 0.0]), &pt(&b, &[0.4, 0.0])).unwrap();
        // (0.3 + 0.4) / (1 + 0.3·0.4)
        assert!(close(s.coords()[0], 0.7 / 1.12, 1e-15));
        assert!(close(s.coords()[0], 0.625, 1e-12));
        assert_eq!(s.coords()[1], 0.0);
    }

    #[test]
    fn mobius_identity_and_inverse() {
        let b = ball2();
        let x = pt(&b, &[0.2, -0.6]);
        assert_eq!(b.mobius_add(&x, &b.origin()).unwrap(), x);
        let z = b.mobius_add(&x, &x.neg()).unwrap();
        assert!(z.norm() < 1e-15);
    }

    #[test]
    fn mobius_add_dimension_mismatch() {
        let b = ball2();
        let x = pt(&b, &[0.1, 0.1]);
        let y = PoincarePoint { coords: vec![0.1] };
        assert!(matches!(b.mobius_add(&x, &y), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn mobius_scalar_values() {
        let b = ball2();
        let x = pt(&b, &[0.5, 0.0]);
        assert!(close(b.mobius_scalar(2.0, &x).unwrap().coords()[0], 0.8, 1e-12));
        let one = b.mobius_scalar(1.0, &x).unwrap();
        assert!(close(one.coords()[0], 0.5, 1e-15));
        assert!(b.mobius_scalar(0.0, &x).unwrap().is_origin());
        assert!(b.mobius_scalar(3.0, &b.origin()).unwrap().is_origin());
    }

    #[test]
    fn distance_values() {
        let b = ball2();
        let x = pt(&b, &[0.5, 0.0]);
        assert_eq!(b.distance(&x, &x).unwrap(), 0.0);
        assert!(close(b.distance(&b.origin(), &x).unwrap(), 3f64.ln(), 1e-12));
        let far = b.set_radius(&x, 6.2126).unwrap();
        assert!(close(b.distance(&b.origin(), &far).unwrap(), 6.2126, 1e-9));
    }

    #[test]
    fn exp_log_at_origin() {
        let b = ball2();
        let y = b.exp0(&[0.5, 0.0]).unwrap();
        assert!(close(y.coords()[0], 0.5f64.tanh(), 1e-15));
        assert!(b.exp0(&[0.0, 0.0]).unwrap().is_origin());
        let v = b.log0(&y).unwrap();
        assert!(close(v[0], 0.5, 1e-12));
        let x = pt(&b, &[0.3, 0.1]);
        let zero = b.log_map(&x, &x).unwrap();
        assert!(zero.coords().iter().all(|&c| c == 0.0));
        assert_eq!(b.exp_map(&zero).unwrap(), x);
    }

    #[test]
    fn geodesic_values() {
        let b = ball2();
        let zj = pt(&b, &[0.8, 0.0]);
        let mid = b.geodesic(&b.origin(), &zj, 0.5).unwrap();
        assert!(close(mid.coords()[0], 0.5, 1e-12));
        assert!(b.geodesic(&b.origin(), &zj, 1.5).is_err());
        assert!(b.geodesic(&b.origin(), &zj, -0.1).is_err());
    }

    #[test]
    fn radius_values() {
        let b = ball2();
        assert_eq!(b.radius(&b.origin()), 0.0);
        assert!(close(b.radius(&pt(&b, &[0.0, 0.5])), 3f64.ln(), 1e-12));
        let edge = b.project(&[10.0, 0.0]).unwrap();
        assert!(close(b.radius(&edge), max_radius(), 1e-6));
        assert!(b.radius(&edge) < 12.9);
    }

    #[test]
    fn set_radius_values() {
        let b = ball2();
        let x = pt(&b, &[0.3, 0.0]);
        let y = b.set_radius(&x, 3f64.ln()).unwrap();
        assert!(close(y.coords()[0], 0.5, 1e-12));
        let same = b.set_radius(&x, b.radius(&x)).unwrap();
        assert!(close(same.coords()[0], 0.3, 1e-12));
        let far = b.set_radius(&x, 6.2126).unwrap();
        assert!(close(far.norm(), 3.1063f64.tanh(), 1e-12));
        assert!(close(far.norm(), 0.99599, 1e-5));
        assert!(matches!(b.set_radius(&b.origin(), 1.0), Err(Error::UndefinedDirection)));
        assert!(b.set_radius(&b.origin(), 0.0).unwrap().is_origin());
        assert!(b.set_radius(&x, -1.0).is_err());
    }

    #[test]
    fn bound_radius_is_monotone_and_capped() {
        let b = ball2();
        let mut last = -1.0;
        for r in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 12.0] {
            let x = b.set_radius(&pt(&b, &[0.6, 0.8]), r).unwrap();
            let y = b.bound_radius(&x, 3.0).unwrap();
            let ry = b.radius(&y);
            assert!(close(ry, 3.0 * (b.radius(&x) / 3.0).tanh(), 1e-9));
            assert!(ry < 3.0 && ry > last);
            last = ry;
        }
        assert!(b.bound_radius(&b.origin(), 3.0).unwrap().is_origin());
        assert!(b.bound_radius(&pt(&b, &[0.1, 0.0]), 0.0).is_err());
    }

    #[test]
    fn projection() {
        let b = ball2();
        assert_eq!(b.project(&[0.1, 0.2]).unwrap().coords(), &[0.1, 0.2]);
        let p = b.project(&[3.0, 4.0]).unwrap();
        assert!(close(p.coords()[0], 0.6 * (1.0 - 1e-5), 1e-15));
        assert!(close(p.coords()[1], 0.8 * (1.0 - 1e-5), 1e-15));
        assert!(matches!(b.project(&[f64::NAN, 0.0]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn curvature_scaling() {
        // d_c(x, y) = d_1(√c x, √c y) / √c
        let c = Curvature::new(4.0).unwrap();
        let bc = PoincareBall::new(2, c).unwrap();
        let b1 = ball2();
        let x = bc.project(&[0.1, 0.2]).unwrap();
        let y = bc.project(&[-0.3, 0.05]).unwrap();
        let d = bc.distance(&x, &y).unwrap();
        let xs = b1.project(&[0.2, 0.4]).unwrap();
        let ys = b1.project(&[-0.6, 0.1]).unwrap();
        assert!(close(d, b1.distance(&xs, &ys).unwrap() / 2.0, 1e-12));
        assert!(Curvature::new(-1.0).is_err());
        assert!(Curvature::new(0.0).is_err());
    }
}
