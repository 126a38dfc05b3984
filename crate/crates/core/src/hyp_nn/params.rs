use crate::autodiff::{Gradients, Tape, Tensor, Var};

/// Where a parameter lives, which decides how the optimizer updates it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Euclidean,
    /// Each row is a point of the Poincaré ball.
    Manifold,
}

#[derive(Debug)]
pub struct ParamRef<'a> {
    pub name: String,
    pub value: &'a Tensor,
    pub kind: ParamKind,
}

#[derive(Debug)]
pub struct ParamMut<'a> {
    pub name: String,
    pub value: &'a mut Tensor,
    pub kind: ParamKind,
}

/// Anything with named, ordered parameters. `params` and `params_mut` must
/// list the same tensors in the same order.
pub trait Parameterized {
    fn params(&self) -> Vec<ParamRef<'_>>;
    fn params_mut(&mut self) -> Vec<ParamMut<'_>>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }
}

pub(crate) fn prefixed<'a>(prefix: &str, mut ps: Vec<ParamRef<'a>>) -> Vec<ParamRef<'a>> {
    for p in &mut ps {
        p.name = format!("{prefix}.{}", p.name);
    }
    ps
}

pub(crate) fn prefixed_mut<'a>(prefix: &str, mut ps: Vec<ParamMut<'a>>) -> Vec<ParamMut<'a>> {
    for p in &mut ps {
        p.name = format!("{prefix}.{}", p.name);
    }
    ps
}

/// Records every parameter as a tape leaf, in order.
pub fn bind(t: &mut Tape, params: &[ParamRef<'_>], trainable: bool) -> Vec<Var> {
    params
        .iter()
        .map(|p| {
            if trainable {
                t.param(p.value.clone())
            } else {
                t.constant(p.value.clone())
            }
        })
        .collect()
}

pub fn collect_grads(g: &Gradients, vars: &[Var]) -> Vec<Tensor> {
    vars.iter().map(|&v| g.wrt(v)).collect()
}
