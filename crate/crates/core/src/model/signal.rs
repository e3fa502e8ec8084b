use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::Scalar;

/// Open-loop input signal `u(t)`.
#[derive(Debug, Clone)]
pub enum SignalSpec<T> {
    /// `u ≡ 0` with the given number of channels.
    Zero(usize),
    Constant(DVector<T>),
    /// One expression over `["t"]` per channel.
    Expr(Vec<Expr>),
}

impl<T: Scalar> SignalSpec<T> {
    /// Parses one expression of `t` per channel.
    pub fn expressions<S: AsRef<str>>(sources: &[S]) -> Result<Self> {
        let exprs = sources
            .iter()
            .map(|s| Expr::parse(s.as_ref(), &["t"]))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SignalSpec::Expr(exprs))
    }

    pub fn dim(&self) -> usize {
        match self {
            SignalSpec::Zero(m) => *m,
            SignalSpec::Constant(v) => v.len(),
            SignalSpec::Expr(e) => e.len(),
        }
    }

    pub fn eval(&self, t: T) -> Result<DVector<T>> {
        match self {
            SignalSpec::Zero(m) => Ok(DVector::zeros(*m)),
            SignalSpec::Constant(v) => Ok(v.clone()),
            SignalSpec::Expr(e) => {
                let mut out = DVector::zeros(e.len());
                for (i, ex) in e.iter().enumerate() {
                    if ex.vars().len() != 1 {
                        return Err(Error::dim("input expressions must be over `t` only"));
                    }
                    out[i] = ex.eval(&[t])?;
                }
                Ok(out)
            }
        }
    }
}
