use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::linalg;
use crate::Scalar;

/// Stored energy as a function of the state.
#[derive(Debug, Clone)]
pub enum Hamiltonian<T> {
    /// `½ xᵀQx + bᵀx + c` with `Q` symmetric.
    Quadratic { q: DMatrix<T>, b: DVector<T>, c: T },
    /// An expression over the state names.
    Expression(Expr),
    /// A Bregman-shifted Hamiltonian, see [`ShiftedHamiltonian`].
    Shifted(Box<ShiftedHamiltonian<T>>),
}

impl<T: Scalar> Hamiltonian<T> {
    /// Quadratic form; `q` is symmetrized.
    pub fn quadratic(q: DMatrix<T>, b: DVector<T>, c: T) -> Result<Self> {
        if !q.is_square() || b.len() != q.nrows() {
            return Err(Error::dim(format!(
                "quadratic Hamiltonian with Q {:?} and b of length {}",
                q.shape(),
                b.len()
            )));
        }
        let half = T::lit(0.5);
        let q = (&q + q.transpose()) * half;
        Ok(Hamiltonian::Quadratic { q, b, c })
    }

    /// `½ xᵀQx`.
    pub fn pure_quadratic(q: DMatrix<T>) -> Result<Self> {
        let n = q.nrows();
        Hamiltonian::quadratic(q, DVector::zeros(n), T::zero())
    }

    pub fn expression(e: Expr) -> Self {
        Hamiltonian::Expression(e)
    }

    pub fn dim(&self) -> usize {
        match self {
            Hamiltonian::Quadratic { q, .. } => q.nrows(),
            Hamiltonian::Expression(e) => e.vars().len(),
            Hamiltonian::Shifted(s) => s.at.len(),
        }
    }

    /// Value and exact gradient (column convention).
    pub fn value_grad(&self, x: &DVector<T>) -> Result<(T, DVector<T>)> {
        if x.len() != self.dim() {
            return Err(Error::dim(format!(
                "Hamiltonian of dimension {} evaluated at a {}-vector",
                self.dim(),
                x.len()
            )));
        }
        match self {
            Hamiltonian::Quadratic { q, b, c } => {
                let qx = q * x;
                let half = T::lit(0.5);
                let v = half * x.dot(&qx) + b.dot(x) + *c;
                Ok((v, qx + b))
            }
            Hamiltonian::Expression(e) => Ok(e.eval_grad(x.as_slice())?),
            Hamiltonian::Shifted(s) => s.value_grad(x),
        }
    }

    pub fn value(&self, x: &DVector<T>) -> Result<T> {
        match self {
            Hamiltonian::Expression(e) => {
                if x.len() != e.vars().len() {
                    return Err(Error::dim("Hamiltonian evaluated at wrong dimension"));
                }
                Ok(e.eval(x.as_slice())?)
            }
            _ => Ok(self.value_grad(x)?.0),
        }
    }

    pub fn gradient(&self, x: &DVector<T>) -> Result<DVector<T>> {
        Ok(self.value_grad(x)?.1)
    }

    /// Hessian at `x`: exact for quadratics, otherwise a central difference of
    /// the exact gradient (step `1e-5·(1+|xᵢ|)`), symmetrized.
    pub fn hessian(&self, x: &DVector<T>) -> Result<DMatrix<T>> {
        if let Some((q, _, _)) = self.to_quadratic() {
            return Ok(q);
        }
        fd_hessian(x, |p| self.gradient(p))
    }

    /// `(Q, b, c)` when the Hamiltonian is quadratic (including shifted quadratics).
    pub fn to_quadratic(&self) -> Option<(DMatrix<T>, DVector<T>, T)> {
        match self {
            Hamiltonian::Quadratic { q, b, c } => Some((q.clone(), b.clone(), *c)),
            Hamiltonian::Expression(_) => None,
            Hamiltonian::Shifted(s) => {
                let (q, b, c) = s.base.to_quadratic()?;
                // H(x) - g·(x - a) - v
                let b2 = &b - &s.grad_at;
                let c2 = c + s.grad_at.dot(&s.at) - s.value_at;
                Some((q, b2, c2))
            }
        }
    }

    /// The same function as an expression over `names`.
    pub fn to_expr(&self, names: &[String]) -> Result<Expr> {
        if names.len() != self.dim() {
            return Err(Error::dim("name list does not match Hamiltonian dimension"));
        }
        match self {
            Hamiltonian::Expression(e) => {
                if e.vars() == names {
                    Ok(e.clone())
                } else {
                    Ok(e.reindex(names, |i| i))
                }
            }
            Hamiltonian::Quadratic { q, b, c } => Ok(quadratic_expr(q, b, *c, names)),
            Hamiltonian::Shifted(s) => {
                let mut e = s.base.to_expr(names)?;
                for i in 0..names.len() {
                    let g = s.grad_at[i].as_f64();
                    if g == 0.0 {
                        continue;
                    }
                    let dx = Expr::variable(i, names)
                        .try_sub(&Expr::constant(s.at[i].as_f64(), names))?;
                    e = e.try_sub(&dx.scaled(g))?;
                }
                Ok(e.try_sub(&Expr::constant(s.value_at.as_f64(), names))?)
            }
        }
    }

    /// `H_a(x_a) + H_b(x_b)` on the stacked state `names = names_a ++ names_b`.
    pub fn direct_sum(a: &Self, b: &Self, names: &[String]) -> Result<Self> {
        let (na, nb) = (a.dim(), b.dim());
        if names.len() != na + nb {
            return Err(Error::dim("direct sum name list length"));
        }
        if let (Some((qa, ba, ca)), Some((qb, bb, cb))) = (a.to_quadratic(), b.to_quadratic()) {
            let q = linalg::block_diag(&qa, &qb);
            let mut bv = DVector::zeros(na + nb);
            bv.rows_mut(0, na).copy_from(&ba);
            bv.rows_mut(na, nb).copy_from(&bb);
            return Hamiltonian::quadratic(q, bv, ca + cb);
        }
        let ea = a.to_expr(&names[..na])?.reindex(names, |i| i);
        let eb = b.to_expr(&names[na..])?.reindex(names, |i| i + na);
        Ok(Hamiltonian::Expression(ea.try_add(&eb)?))
    }
}

fn quadratic_expr<T: Scalar>(q: &DMatrix<T>, b: &DVector<T>, c: T, names: &[String]) -> Expr {
    let n = names.len();
    let mut e = Expr::constant(c.as_f64(), names);
    let add = |e: Expr, t: Expr| e.try_add(&t).expect("shared names");
    for i in 0..n {
        let xi = Expr::variable(i, names);
        let qii = q[(i, i)].as_f64();
        if qii != 0.0 {
            let sq = xi.try_mul(&xi).expect("shared names");
            e = add(e, sq.scaled(0.5 * qii));
        }
        for j in (i + 1)..n {
            let qij = q[(i, j)].as_f64();
            if qij != 0.0 {
                let xj = Expr::variable(j, names);
                e = add(e, xi.try_mul(&xj).expect("shared names").scaled(qij));
            }
        }
        let bi = b[i].as_f64();
        if bi != 0.0 {
            e = add(e, xi.scaled(bi));
        }
    }
    e
}

/// Central-difference Jacobian of a gradient map, symmetrized.
pub(crate) fn fd_hessian<T: Scalar>(
    x: &DVector<T>,
    grad: impl Fn(&DVector<T>) -> Result<DVector<T>>,
) -> Result<DMatrix<T>> {
    let n = x.len();
    let mut hess = DMatrix::zeros(n, n);
    for j in 0..n {
        let step = T::lit(1e-5) * (T::one() + x[j].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += step;
        xm[j] -= step;
        let col = (grad(&xp)? - grad(&xm)?) / (step + step);
        hess.set_column(j, &col);
    }
    let half = T::lit(0.5);
    Ok((&hess + hess.transpose()) * half)
}

/// `Ĥ(x) = H(x) − ∇H(x̄)ᵀ(x − x̄) − H(x̄)`: zero with zero gradient at `x̄`.
#[derive(Debug, Clone)]
pub struct ShiftedHamiltonian<T> {
    pub(crate) base: Hamiltonian<T>,
    pub(crate) at: DVector<T>,
    pub(crate) grad_at: DVector<T>,
    pub(crate) value_at: T,
}

impl<T: Scalar> ShiftedHamiltonian<T> {
    pub fn new(base: Hamiltonian<T>, at: DVector<T>) -> Result<Self> {
        let (value_at, grad_at) = base.value_grad(&at)?;
        Ok(ShiftedHamiltonian {
            base,
            at,
            grad_at,
            value_at,
        })
    }

    pub fn base(&self) -> &Hamiltonian<T> {
        &self.base
    }

    pub fn shift_point(&self) -> &DVector<T> {
        &self.at
    }

    pub fn value_grad(&self, x: &DVector<T>) -> Result<(T, DVector<T>)> {
        let (v, g) = self.base.value_grad(x)?;
        let dx = x - &self.at;
        Ok((v - self.grad_at.dot(&dx) - self.value_at, g - &self.grad_at))
    }

    pub fn value(&self, x: &DVector<T>) -> Result<T> {
        Ok(self.value_grad(x)?.0)
    }

    pub fn into_hamiltonian(self) -> Hamiltonian<T> {
        Hamiltonian::Shifted(Box::new(self))
    }
}
