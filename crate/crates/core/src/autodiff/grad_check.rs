use super::{Tape, Tensor, Var};
use crate::error::Result;

/// Denominator floor for the relative error, so that gradient entries that
/// are zero up to rounding compare by absolute error instead.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    pub tol: f64,
    /// Negative control: perturbs every tape gradient before comparing.
    pub corrupt: bool,
    /// Checks at most this many evenly spaced entries per tensor; 0 means all.
    pub max_coords: usize,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            tol: 1e-4,
            corrupt: false,
            max_coords: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tol: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.passed)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }

    /// Folds another report in, keeping the worst error per parameter name.
    pub fn merge(&mut self, other: GradCheckReport) {
        for p in other.params {
            match self.params.iter_mut().find(|q| q.name == p.name) {
                Some(q) => {
                    q.max_rel_err = q.max_rel_err.max(p.max_rel_err);
                    q.max_abs_err = q.max_abs_err.max(p.max_abs_err);
                    q.passed &= p.passed;
                }
                None => self.params.push(p),
            }
        }
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERR_FLOOR)
}

/// Compares tape gradients of a scalar function against central differences.
///
/// `f` receives a fresh tape and one [`Var`] per entry of `params` (in order)
/// and must return a scalar.
pub fn grad_check<F>(f: F, params: &[(String, Tensor)], opts: GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|(_, t)| tape.param(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| t.constant(v.clone())).collect();
        let out = f(&mut t, &vars)?;
        t.check_finite()?;
        Ok(t.scalar_value(out))
    };

    let mut values: Vec<Tensor> = params.iter().map(|(_, t)| t.clone()).collect();
    let mut report = GradCheckReport {
        tol: opts.tol,
        params: Vec::with_capacity(params.len()),
    };
    for (pi, (name, _)) in params.iter().enumerate() {
        let mut analytic = grads.wrt(vars[pi]);
        if opts.corrupt {
            analytic
                .data_mut()
                .iter_mut()
                .for_each(|g| *g = *g * 1.01 + 1e-3);
        }
        let (mut max_rel, mut max_abs) = (0.0f64, 0.0f64);
        let len = values[pi].len();
        let picks = if opts.max_coords == 0 || opts.max_coords >= len {
            len
        } else {
            opts.max_coords
        };
        for j in 0..picks {
            let k = j * len / picks;
            let orig = values[pi].data()[k];
            values[pi].data_mut()[k] = orig + opts.step;
            let plus = eval(&values)?;
            values[pi].data_mut()[k] = orig - opts.step;
            let minus = eval(&values)?;
            values[pi].data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = analytic.data()[k];
            max_rel = max_rel.max(relative_error(a, numeric));
            max_abs = max_abs.max((a - numeric).abs());
        }
        report.params.push(ParamCheck {
            name: name.clone(),
            max_rel_err: max_rel,
            max_abs_err: max_abs,
            passed: max_rel < opts.tol,
        });
    }
    Ok(report)
}
