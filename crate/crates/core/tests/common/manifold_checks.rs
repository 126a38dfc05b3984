//! Manifold invariants as plain property functions over generated inputs,
//! shared by the proptest suite and the acceptance runner.

#![allow(dead_code)]

use hypgeo::manifold::{PoincareBall, PoincarePoint, TangentVector, EPS_BALL};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub type Check = std::result::Result<(), TestCaseError>;

pub const DIMS: [usize; 3] = [2, 8, 512];

pub fn direction(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, dim).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

/// Direction scaled by a hyperbolic radius drawn from `[0, max_r)`.
pub fn point(dim: usize, max_r: f64) -> impl Strategy<Value = Vec<f64>> {
    (direction(dim), 0.0..max_r).prop_map(|(d, r)| unit(&d).into_iter().map(|x| x * r).collect())
}

/// Turns a [`point`] sample into the ball point at that radius.
pub fn realize(ball: &PoincareBall, v: &[f64]) -> PoincarePoint {
    let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if r == 0.0 {
        return ball.origin();
    }
    let u: Vec<f64> = unit(v).iter().map(|x| x * r / 2.0).collect();
    ball.exp0(&u).unwrap()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn inside(ball: &PoincareBall, p: &PoincarePoint) -> bool {
    p.norm() <= ball.max_norm() && ball.max_norm() < (1.0 - EPS_BALL) + 1e-15
}

pub type Triple = (Vec<f64>, Vec<f64>, Vec<f64>);

pub fn triples(dim: usize) -> impl Strategy<Value = Triple> {
    (point(dim, 6.0), point(dim, 6.0), point(dim, 6.0))
}

pub fn metric_axioms(ball: &PoincareBall, (x, y, z): &Triple) -> Check {
    let (x, y, z) = (realize(ball, x), realize(ball, y), realize(ball, z));
    let dxy = ball.distance(&x, &y).unwrap();
    prop_assert!(dxy >= 0.0);
    prop_assert_eq!(dxy, ball.distance(&y, &x).unwrap());
    prop_assert!(ball.distance(&x, &x).unwrap() <= 1e-9);
    if dist(x.coords(), y.coords()) > 1e-6 {
        prop_assert!(dxy > 0.0);
    }
    let dxz = ball.distance(&x, &z).unwrap();
    let dyz = ball.distance(&y, &z).unwrap();
    prop_assert!(dxz <= dxy + dyz + 1e-9, "{} > {} + {}", dxz, dxy, dyz);
    Ok(())
}

pub type Scaled = (Vec<f64>, f64, f64);

/// `(x, r, s)` with `|r|, |s| ≤ 3`, and `x` close enough to the origin that
/// neither `s⊗x` nor `rs⊗x` reaches the boundary clamp.
pub fn scaled(dim: usize) -> impl Strategy<Value = Scaled> {
    (-3.0f64..3.0, -3.0f64..3.0).prop_flat_map(move |(r, s)| {
        let reach = 11.0 / s.abs().max((r * s).abs()).max(1.0);
        (point(dim, reach), Just(r), Just(s))
    })
}

pub fn mobius_identities(ball: &PoincareBall, (x, r, s): &Scaled) -> Check {
    let x = realize(ball, x);
    let right = ball.mobius_add(&x, &ball.origin()).unwrap();
    prop_assert!(dist(right.coords(), x.coords()) <= 1e-12);
    let inv = ball.mobius_add(&x.neg(), &x).unwrap();
    prop_assert!(inv.norm() <= 1e-9);
    let nested = ball.mobius_scalar(*r, &ball.mobius_scalar(*s, &x).unwrap()).unwrap();
    let direct = ball.mobius_scalar(r * s, &x).unwrap();
    prop_assert!(dist(nested.coords(), direct.coords()) <= 1e-7);
    Ok(())
}

pub fn exp_log_inputs(dim: usize) -> impl Strategy<Value = Triple> {
    (point(dim, 5.0), point(dim, 3.0), point(dim, 5.0))
}

/// Base radius ≤ 5, tangent norm ≤ 3 in the metric at the base.
pub fn exp_log_inversion(ball: &PoincareBall, (base, v, y): &Triple) -> Check {
    let base = realize(ball, base);
    let lambda = ball.conformal_factor(&base);
    let v: Vec<f64> = v.iter().map(|c| c / lambda).collect();
    let tv = TangentVector::new(base.clone(), v.clone()).unwrap();
    let back = ball.log_map(&base, &ball.exp_map(&tv).unwrap()).unwrap();
    let tol = 1e-6 * v.iter().map(|c| c * c).sum::<f64>().sqrt().max(1.0);
    prop_assert!(dist(back.coords(), &v) <= tol, "{}", dist(back.coords(), &v));

    let y = realize(ball, y);
    let again = ball.exp_map(&ball.log_map(&base, &y).unwrap()).unwrap();
    prop_assert!(dist(again.coords(), y.coords()) <= 1e-6);
    Ok(())
}

pub type Chord = (Vec<f64>, Vec<f64>, f64, f64);

pub fn chords(dim: usize) -> impl Strategy<Value = Chord> {
    (point(dim, 5.0), point(dim, 5.0), 0.0f64..1.0, 0.0f64..1.0)
}

pub fn geodesic_additivity(ball: &PoincareBall, (zi, zj, s, t): &Chord) -> Check {
    let (zi, zj) = (realize(ball, zi), realize(ball, zj));
    let d = ball.distance(&zi, &zj).unwrap();
    let ga = ball.geodesic(&zi, &zj, *s).unwrap();
    let gb = ball.geodesic(&zi, &zj, *t).unwrap();
    let got = ball.distance(&ga, &gb).unwrap();
    let want = (t - s).abs() * d;
    prop_assert!((got - want).abs() <= 1e-5, "{} vs {}", got, want);
    Ok(())
}

pub type Edge = (Vec<f64>, Vec<f64>, f64, f64, f64);

pub fn edges(dim: usize) -> impl Strategy<Value = Edge> {
    (direction(dim), direction(dim), 0.0f64..1e-3, -5.0f64..5.0, 0.0f64..1.0)
}

/// Raw coordinates at, just inside, or past the boundary.
pub fn boundary_invariant(ball: &PoincareBall, (x, y, gap, r, t): &Edge) -> Check {
    let x = ball.project(&unit(x).iter().map(|v| v * (1.0 - gap)).collect::<Vec<_>>()).unwrap();
    let y = ball.project(&unit(y).iter().map(|v| v * (1.0 + gap)).collect::<Vec<_>>()).unwrap();
    prop_assert!(inside(ball, &x) && inside(ball, &y));
    prop_assert!(inside(ball, &ball.mobius_add(&x, &y).unwrap()));
    prop_assert!(inside(ball, &ball.mobius_scalar(*r, &x).unwrap()));
    prop_assert!(inside(ball, &ball.geodesic(&x, &y, *t).unwrap()));
    let v: Vec<f64> = y.coords().iter().map(|c| c * 50.0).collect();
    let tv = TangentVector::new(x.clone(), v.clone()).unwrap();
    prop_assert!(inside(ball, &ball.exp_map(&tv).unwrap()));
    prop_assert!(inside(ball, &ball.exp0(&v).unwrap()));
    prop_assert!(ball.distance(&x, &y).unwrap().is_finite());
    Ok(())
}
