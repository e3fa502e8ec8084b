use nalgebra::{DMatrix, DVector};

use super::phs::{default_samples, validate_phs, ValidationReport, DEFAULT_SEED, STRUCTURE_TOL};
use super::{MatrixField, PhsModel};
use crate::error::{Error, Result};
use crate::linalg;
use crate::report::Check;
use crate::Scalar;

/// Port-Hamiltonian system with feedthrough:
///
/// ```text
/// ẋ   = [J − R]∇H + [G' − P]u
/// y_A = [G' + P]ᵀ∇H + [M + S]u
/// ```
///
/// The wrapped [`PhsModel`] carries the input matrix `G' − P`.
#[derive(Debug, Clone)]
pub struct ExtendedPhsModel<T> {
    base: PhsModel<T>,
    p: MatrixField<T>,
    m: MatrixField<T>,
    s: MatrixField<T>,
}

impl<T: Scalar> ExtendedPhsModel<T> {
    pub(crate) fn from_parts(
        base: PhsModel<T>,
        p: MatrixField<T>,
        m: MatrixField<T>,
        s: MatrixField<T>,
    ) -> Result<Self> {
        let (n, k) = (base.dim(), base.inputs());
        if base.rayleigh().is_some() {
            return Err(Error::Precondition(
                "Rayleigh dissipation cannot be combined with feedthrough outputs".into(),
            ));
        }
        if p.shape() != (n, k) || m.shape() != (k, k) || s.shape() != (k, k) {
            return Err(Error::dim(format!(
                "P {:?}, M {:?}, S {:?} for n={n}, m={k}",
                p.shape(),
                m.shape(),
                s.shape()
            )));
        }
        Ok(ExtendedPhsModel { base, p, m, s })
    }

    pub fn base(&self) -> &PhsModel<T> {
        &self.base
    }

    pub fn names(&self) -> &[String] {
        self.base.names()
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn inputs(&self) -> usize {
        self.base.inputs()
    }

    pub fn p(&self) -> &MatrixField<T> {
        &self.p
    }

    pub fn m(&self) -> &MatrixField<T> {
        &self.m
    }

    pub fn s(&self) -> &MatrixField<T> {
        &self.s
    }

    /// `G' = (G' − P) + P`.
    pub fn g_prime(&self) -> Result<MatrixField<T>> {
        self.base.g().add(&self.p, self.names())
    }

    /// `[R P; Pᵀ S]` at `x`.
    pub fn dissipation_block(&self, x: &[T]) -> Result<DMatrix<T>> {
        let (n, k) = (self.dim(), self.inputs());
        let mut b = DMatrix::zeros(n + k, n + k);
        let p = self.p.eval(x)?;
        b.view_mut((0, 0), (n, n))
            .copy_from(&self.base.r().eval(x)?);
        b.view_mut((0, n), (n, k)).copy_from(&p);
        b.view_mut((n, 0), (k, n)).copy_from(&p.transpose());
        b.view_mut((n, n), (k, k)).copy_from(&self.s.eval(x)?);
        Ok(b)
    }

    /// `y_A` at `(x, u)`.
    pub fn output(&self, x: &DVector<T>, u: &DVector<T>) -> Result<DVector<T>> {
        let grad = self.base.hamiltonian().gradient(x)?;
        let xs = x.as_slice();
        let p = self.p.eval(xs)?;
        let gp = self.base.g().eval(xs)? + &p + &p;
        let ms = self.m.eval(xs)? + self.s.eval(xs)?;
        Ok(gp.transpose() * grad + ms * u)
    }

    /// `(ẋ, y_A)`.
    pub fn vector_field(&self, x: &DVector<T>, u: &DVector<T>) -> Result<(DVector<T>, DVector<T>)> {
        let (dx, _) = self.base.vector_field(x, u)?;
        Ok((dx, self.output(x, u)?))
    }

    /// Base checks plus skew `M`, symmetric `S` and PSD `[R P; Pᵀ S]` at `samples`.
    pub fn validate_at(&self, samples: &[DVector<T>]) -> ValidationReport {
        let mut rep = validate_phs(&self.base, samples);
        let mut m_skew = 0.0f64;
        let mut s_sym = 0.0f64;
        let mut min_eig = f64::INFINITY;
        let mut err = None;
        for x in samples {
            let xs = x.as_slice();
            let r = (|| -> Result<()> {
                m_skew = m_skew.max(linalg::skew_violation(&self.m.eval(xs)?).as_f64());
                s_sym = s_sym.max(linalg::symmetry_violation(&self.s.eval(xs)?).as_f64());
                let b = self.dissipation_block(xs)?;
                if b.nrows() > 0 {
                    let b = (&b + b.transpose()) * T::lit(0.5);
                    min_eig = min_eig.min(linalg::min_sym_eigenvalue(&b).as_f64());
                }
                Ok(())
            })();
            if let Err(e) = r {
                err = Some(e.to_string());
            }
        }
        let tol = STRUCTURE_TOL;
        rep.checks
            .push(Check::at_most("M skew-symmetric", m_skew, tol));
        rep.checks.push(Check::at_most("S symmetric", s_sym, tol));
        let me = if min_eig.is_finite() { min_eig } else { 0.0 };
        rep.checks.push(
            Check::at_least("[R P; P^T S] positive semidefinite", me, tol)
                .with_detail(format!("minimum eigenvalue {me:e}")),
        );
        if let Some(e) = err {
            rep.checks.push(Check::failed("evaluation", e));
        }
        rep
    }

    pub fn validate(&self) -> ValidationReport {
        let mut rep = self.validate_at(&default_samples(self.dim(), DEFAULT_SEED));
        rep.seed = Some(DEFAULT_SEED);
        rep
    }
}

/// Equips `model` (input matrix `G`) with the alternate output
/// `y_A = [G' + P]ᵀ∇H + [M + S]u`, `G' = G + P`, and checks the structure at
/// the default samples.
pub fn build_extended<T: Scalar>(
    model: &PhsModel<T>,
    p: MatrixField<T>,
    m: MatrixField<T>,
    s: MatrixField<T>,
) -> Result<ExtendedPhsModel<T>> {
    let ext = ExtendedPhsModel::from_parts(model.clone(), p, m, s)?;
    let rep = ext.validate();
    for name in [
        "M skew-symmetric",
        "S symmetric",
        "[R P; P^T S] positive semidefinite",
    ] {
        let c = rep.check(name).expect("check present");
        if !c.passed {
            return Err(Error::structure(name, c.value.abs()));
        }
    }
    if let Some(c) = rep.check("evaluation") {
        return Err(Error::Precondition(c.detail.clone().unwrap_or_default()));
    }
    Ok(ext)
}
