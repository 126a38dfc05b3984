//! Differentiable Poincaré-ball operations recorded on a [`Tape`].
//!
//! Inputs are `batch × n` row blocks; an operand with a single row is
//! broadcast against the batch. These mirror the plain routines in
//! [`crate::manifold`] and are checked against them in tests.

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::Result;
use crate::manifold::EPS_BALL;

/// Keeps `tanh(n)/n` and `artanh(n)/n` finite at `n = 0` without branching.
const NORM_SHIFT: f64 = 1e-15;

#[derive(Debug, Clone, Copy)]
pub struct TapeBall {
    c: f64,
}

impl TapeBall {
    pub fn new(kappa: f64) -> Self {
        TapeBall { c: kappa }
    }

    fn sqrt_c(&self) -> f64 {
        self.c.sqrt()
    }

    fn max_norm(&self) -> f64 {
        (1.0 - EPS_BALL) / self.sqrt_c()
    }

    pub fn project(&self, t: &mut Tape, x: Var) -> Var {
        t.project_rows(x, self.max_norm())
    }

    /// `x ⊕ y`, re-projected.
    pub fn mobius_add(&self, t: &mut Tape, x: Var, y: Var) -> Result<Var> {
        let c = self.c;
        let xy = t.dot(x, y)?;
        let x2 = t.norm_sq(x);
        let y2 = t.norm_sq(y);
        let two_c_xy = t.scalar_mul(xy, 2.0 * c);
        let c_y2 = t.scalar_mul(y2, c);
        let a = t.add(two_c_xy, c_y2)?;
        let a = t.add_scalar(a, 1.0);
        let b = t.scalar_mul(x2, -c);
        let b = t.add_scalar(b, 1.0);
        let x2y2 = t.mul(x2, y2)?;
        let x2y2 = t.scalar_mul(x2y2, c * c);
        let den = t.add(two_c_xy, x2y2)?;
        let den = t.add_scalar(den, 1.0);
        let ax = t.mul(a, x)?;
        let by = t.mul(b, y)?;
        let num = t.add(ax, by)?;
        let out = t.div(num, den)?;
        Ok(self.project(t, out))
    }

    /// `exp_0(v) = tanh(√c‖v‖) v / (√c‖v‖)`.
    pub fn exp0(&self, t: &mut Tape, v: Var) -> Result<Var> {
        let s = self.sqrt_c();
        let n = t.norm2(v);
        let sn = t.add_scalar(n, NORM_SHIFT);
        let sn = t.scalar_mul(sn, s);
        let th = t.tanh(sn);
        let factor = t.div(th, sn)?;
        let out = t.mul(v, factor)?;
        Ok(self.project(t, out))
    }

    /// `log_0(y) = artanh(√c‖y‖) y / (√c‖y‖)`.
    pub fn log0(&self, t: &mut Tape, y: Var) -> Result<Var> {
        let s = self.sqrt_c();
        let n = t.norm2(y);
        let sn = t.add_scalar(n, NORM_SHIFT);
        let sn = t.scalar_mul(sn, s);
        let at = t.artanh(sn);
        let factor = t.div(at, sn)?;
        t.mul(y, factor)
    }

    /// Row-wise soft radius cap, see [`crate::manifold::PoincareBall::bound_radius`].
    pub fn bound_radius(&self, t: &mut Tape, x: Var, bound: f64) -> Result<Var> {
        let half = bound / 2.0;
        let u = self.log0(t, x)?;
        let n = t.norm2(u);
        let n = t.add_scalar(n, NORM_SHIFT);
        let q = t.scalar_mul(n, 1.0 / half);
        let th = t.tanh(q);
        let th = t.scalar_mul(th, half);
        let f = t.div(th, n)?;
        let u = t.mul(u, f)?;
        self.exp0(t, u)
    }

    /// `λ_x = 2 / (1 − c‖x‖²)` per row.
    pub fn conformal_factor(&self, t: &mut Tape, x: Var) -> Var {
        let x2 = t.norm_sq(x);
        let d = t.scalar_mul(x2, -self.c);
        let d = t.add_scalar(d, 1.0);
        let one = t.constant(Tensor::scalar(2.0));
        t.div(one, d).expect("scalar broadcast")
    }

    /// `exp_x(v)` for base points `x`.
    pub fn exp_map(&self, t: &mut Tape, x: Var, v: Var) -> Result<Var> {
        let s = self.sqrt_c();
        let lambda = self.conformal_factor(t, x);
        let n = t.norm2(v);
        let n = t.add_scalar(n, NORM_SHIFT);
        let arg = t.mul(lambda, n)?;
        let arg = t.scalar_mul(arg, s / 2.0);
        let th = t.tanh(arg);
        let sn = t.scalar_mul(n, s);
        let factor = t.div(th, sn)?;
        let step = t.mul(v, factor)?;
        self.mobius_add(t, x, step)
    }

    /// `log_x(y)` for base points `x`.
    pub fn log_map(&self, t: &mut Tape, x: Var, y: Var) -> Result<Var> {
        let s = self.sqrt_c();
        let nx = t.neg(x);
        let u = self.mobius_add(t, nx, y)?;
        let n = t.norm2(u);
        let n = t.add_scalar(n, NORM_SHIFT);
        let sn = t.scalar_mul(n, s);
        let at = t.artanh(sn);
        let lambda = self.conformal_factor(t, x);
        let den = t.mul(lambda, n)?;
        let den = t.scalar_mul(den, s / 2.0);
        let factor = t.div(at, den)?;
        t.mul(u, factor)
    }

    /// Geodesic distance `2/√c · artanh(√c‖−x ⊕ y‖)`, one value per row.
    pub fn distance(&self, t: &mut Tape, x: Var, y: Var) -> Result<Var> {
        let s = self.sqrt_c();
        let nx = t.neg(x);
        let u = self.mobius_add(t, nx, y)?;
        let n = t.norm2(u);
        let sn = t.scalar_mul(n, s);
        let at = t.artanh(sn);
        Ok(t.scalar_mul(at, 2.0 / s))
    }

    /// Hyperbolic MLR logits for `x: batch × n`, offsets `p: K × n` and
    /// normals `a: K × n`. Returns `batch × K`.
    pub fn mlr_logits(&self, t: &mut Tape, x: Var, p: Var, a: Var) -> Result<Var> {
        let s = self.sqrt_c();
        let k = t.value(p).rows();
        let mut cols = Vec::with_capacity(k);
        for i in 0..k {
            let pk = t.slice_rows(p, i, i + 1)?;
            let ak = t.slice_rows(a, i, i + 1)?;
            let npk = t.neg(pk);
            let u = self.mobius_add(t, npk, x)?;
            let ua = t.dot(u, ak)?;
            let u2 = t.norm_sq(u);
            let gap = t.scalar_mul(u2, -self.c);
            let gap = t.add_scalar(gap, 1.0);
            let an = t.norm2(ak);
            let den = t.mul(gap, an)?;
            let num = t.scalar_mul(ua, 2.0 * s);
            let arg = t.div(num, den)?;
            let ash = t.asinh(arg);
            let lambda = self.conformal_factor(t, pk);
            let scale = t.mul(lambda, an)?;
            let scale = t.scalar_mul(scale, 1.0 / s);
            cols.push(t.mul(scale, ash)?);
        }
        t.concat(&cols)
    }
}

/// Row-wise log-softmax shifted by the (constant) row maximum.
pub fn log_softmax(t: &mut Tape, logits: Var, floor: f64) -> Result<Var> {
    let probs = softmax(t, logits)?;
    Ok(t.log_floor(probs, floor))
}

/// Row-wise softmax.
pub fn softmax(t: &mut Tape, logits: Var) -> Result<Var> {
    let l = t.value(logits);
    let maxes: Vec<f64> = (0..l.rows())
        .map(|i| l.row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let m = t.constant(Tensor::new(maxes, l.rows(), 1)?);
    let z = t.sub(logits, m)?;
    let e = t.exp(z);
    let s = t.sum_cols(e);
    t.div(e, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::PoincareBall;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rows(rng: &mut ChaCha8Rng, rows: usize, n: usize, max_norm: f64) -> Tensor {
        let mut data = Vec::new();
        for _ in 0..rows {
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let r = rng.random_range(0.0..max_norm);
            data.extend(v.iter().map(|x| x / norm * r));
        }
        Tensor::new(data, rows, n).unwrap()
    }

    #[test]
    fn tape_ops_match_plain_routines() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 5;
        let ball = PoincareBall::unit(n).unwrap();
        let tb = TapeBall::new(1.0);
        let xs = random_rows(&mut rng, 6, n, 0.95);
        let ys = random_rows(&mut rng, 6, n, 0.95);
        let vs = random_rows(&mut rng, 6, n, 2.0);
        let mut t = Tape::new();
        let x = t.constant(xs.clone());
        let y = t.constant(ys.clone());
        let v = t.constant(vs.clone());
        let add = tb.mobius_add(&mut t, x, y).unwrap();
        let e0 = tb.exp0(&mut t, v).unwrap();
        let l0 = tb.log0(&mut t, y).unwrap();
        let ex = tb.exp_map(&mut t, x, v).unwrap();
        let lx = tb.log_map(&mut t, x, y).unwrap();
        let d = tb.distance(&mut t, x, y).unwrap();
        let bd = tb.bound_radius(&mut t, y, 3.0).unwrap();
        for i in 0..6 {
            let px = ball.project(xs.row(i)).unwrap();
            let py = ball.project(ys.row(i)).unwrap();
            let close = |a: &[f64], b: &[f64], tol: f64| {
                a.iter().zip(b).all(|(a, b)| (a - b).abs() < tol)
            };
            assert!(close(t.value(add).row(i), ball.mobius_add(&px, &py).unwrap().coords(), 1e-13));
            assert!(close(t.value(e0).row(i), ball.exp0(vs.row(i)).unwrap().coords(), 1e-13));
            assert!(close(t.value(l0).row(i), &ball.log0(&py).unwrap(), 1e-11));
            let tv = crate::manifold::TangentVector::new(px.clone(), vs.row(i).to_vec()).unwrap();
            assert!(close(t.value(ex).row(i), ball.exp_map(&tv).unwrap().coords(), 1e-12));
            assert!(close(t.value(lx).row(i), ball.log_map(&px, &py).unwrap().coords(), 1e-9));
            let dd = ball.distance(&px, &py).unwrap();
            assert!((t.value(d).get(i, 0) - dd).abs() < 1e-9 * dd.max(1.0));
            assert!(close(t.value(bd).row(i), ball.bound_radius(&py, 3.0).unwrap().coords(), 1e-12));
        }
    }

    #[test]
    fn exp0_log0_at_zero_are_identity_like() {
        let tb = TapeBall::new(1.0);
        let mut t = Tape::new();
        let v = t.param(Tensor::zeros(1, 3));
        let e = tb.exp0(&mut t, v).unwrap();
        let l = tb.log0(&mut t, v).unwrap();
        assert!(t.value(e).data().iter().all(|&x| x == 0.0));
        assert!(t.value(l).data().iter().all(|&x| x == 0.0));
        let s = t.sum(e);
        let g = t.backward(s).unwrap();
        for &gi in g.wrt(v).data() {
            assert!((gi - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut t = Tape::new();
        let l = t.constant(Tensor::new(vec![1.0, 2.0, 3.0, -50.0, 0.0, 50.0], 2, 3).unwrap());
        let p = softmax(&mut t, l).unwrap();
        for i in 0..2 {
            let s: f64 = t.value(p).row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
