use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Hamiltonian, MatrixField};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::linalg;
use crate::report::{all_passed, Check};
use crate::Scalar;

/// Tolerance for skewness, symmetry and PSD checks at validation samples.
pub const STRUCTURE_TOL: f64 = 1e-10;

/// Seed used by [`default_samples`] when none is given.
pub const DEFAULT_SEED: u64 = 0;

/// Nonlinear dissipation `G_R(x) ∂𝓡/∂f_R(G_Rᵀ∇H)` replacing `R`.
#[derive(Debug, Clone)]
pub struct Rayleigh<T> {
    /// `n × r` dissipation port matrix.
    pub gr: MatrixField<T>,
    /// `𝓡` over `r` flow names.
    pub function: Expr,
}

/// Input-state-output port-Hamiltonian system
/// `ẋ = [J(x) − R(x)]∇H(x) + G(x)u`, `y = G(x)ᵀ∇H(x)`.
#[derive(Debug, Clone)]
pub struct PhsModel<T> {
    label: String,
    names: Vec<String>,
    j: MatrixField<T>,
    r: MatrixField<T>,
    g: MatrixField<T>,
    h: Hamiltonian<T>,
    rayleigh: Option<Rayleigh<T>>,
}

impl<T: Scalar> PhsModel<T> {
    pub fn new(
        names: Vec<String>,
        j: MatrixField<T>,
        r: MatrixField<T>,
        g: MatrixField<T>,
        h: Hamiltonian<T>,
    ) -> Result<Self> {
        let n = names.len();
        if j.shape() != (n, n) {
            return Err(Error::dim(format!(
                "J is {:?}, expected {n}x{n}",
                j.shape()
            )));
        }
        if r.shape() != (n, n) {
            return Err(Error::dim(format!(
                "R is {:?}, expected {n}x{n}",
                r.shape()
            )));
        }
        if g.rows() != n {
            return Err(Error::dim(format!("G has {} rows, expected {n}", g.rows())));
        }
        if h.dim() != n {
            return Err(Error::dim(format!(
                "Hamiltonian has dimension {}, expected {n}",
                h.dim()
            )));
        }
        if let Hamiltonian::Expression(e) = &h {
            if e.vars() != names.as_slice() {
                return Err(Error::dim(
                    "Hamiltonian expression is not over the state names",
                ));
            }
        }
        Ok(PhsModel {
            label: String::new(),
            names,
            j,
            r,
            g,
            h,
            rayleigh: None,
        })
    }

    /// Same as [`PhsModel::new`] with constant matrices.
    pub fn constant(
        names: Vec<String>,
        j: DMatrix<T>,
        r: DMatrix<T>,
        g: DMatrix<T>,
        h: Hamiltonian<T>,
    ) -> Result<Self> {
        PhsModel::new(names, j.into(), r.into(), g.into(), h)
    }

    /// Replaces linear damping by a Rayleigh dissipation term; `R` is then ignored.
    pub fn with_rayleigh(mut self, gr: MatrixField<T>, function: Expr) -> Result<Self> {
        if gr.rows() != self.dim() || gr.cols() != function.vars().len() {
            return Err(Error::dim(format!(
                "G_R is {:?} but 𝓡 has {} flow arguments",
                gr.shape(),
                function.vars().len()
            )));
        }
        self.rayleigh = Some(Rayleigh { gr, function });
        Ok(self)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn inputs(&self) -> usize {
        self.g.cols()
    }

    pub fn j(&self) -> &MatrixField<T> {
        &self.j
    }

    pub fn r(&self) -> &MatrixField<T> {
        &self.r
    }

    pub fn g(&self) -> &MatrixField<T> {
        &self.g
    }

    pub fn hamiltonian(&self) -> &Hamiltonian<T> {
        &self.h
    }

    pub fn rayleigh(&self) -> Option<&Rayleigh<T>> {
        self.rayleigh.as_ref()
    }

    pub(crate) fn with_hamiltonian(&self, h: Hamiltonian<T>) -> Result<Self> {
        let mut m = PhsModel::new(
            self.names.clone(),
            self.j.clone(),
            self.r.clone(),
            self.g.clone(),
            h,
        )?;
        m.label = self.label.clone();
        m.rayleigh = self.rayleigh.clone();
        Ok(m)
    }

    /// `(J, R, G)` when all three are state-independent.
    pub fn constant_matrices(&self) -> Option<(DMatrix<T>, DMatrix<T>, DMatrix<T>)> {
        Some((
            self.j.as_constant()?,
            self.r.as_constant()?,
            self.g.as_constant()?,
        ))
    }

    fn check_dims(&self, x: &DVector<T>, u: &DVector<T>) -> Result<()> {
        if x.len() != self.dim() || u.len() != self.inputs() {
            return Err(Error::dim(format!(
                "state/input of length {}/{} for a model with n={}, m={}",
                x.len(),
                u.len(),
                self.dim(),
                self.inputs()
            )));
        }
        Ok(())
    }

    /// `G_R(x)·∂𝓡/∂f_R` at `f_R = G_R(x)ᵀ∇H`, and the dissipated power `f_Rᵀ∂𝓡/∂f_R`.
    fn rayleigh_term(
        &self,
        ray: &Rayleigh<T>,
        x: &DVector<T>,
        grad: &DVector<T>,
    ) -> Result<(DVector<T>, T)> {
        let gr = ray.gr.eval(x.as_slice())?;
        let f = gr.transpose() * grad;
        let (_, df) = ray.function.eval_grad(f.as_slice())?;
        Ok((gr * &df, f.dot(&df)))
    }

    /// State derivative and natural output at `(x, u)`.
    pub fn vector_field(&self, x: &DVector<T>, u: &DVector<T>) -> Result<(DVector<T>, DVector<T>)> {
        self.check_dims(x, u)?;
        let grad = self.h.gradient(x)?;
        let xs = x.as_slice();
        let j = self.j.eval(xs)?;
        let g = self.g.eval(xs)?;
        let mut dx = &j * &grad + &g * u;
        match &self.rayleigh {
            Some(ray) => dx -= self.rayleigh_term(ray, x, &grad)?.0,
            None => dx -= self.r.eval(xs)? * &grad,
        }
        let y = g.transpose() * grad;
        Ok((dx, y))
    }

    /// `y = G(x)ᵀ∇H(x)`.
    pub fn output(&self, x: &DVector<T>) -> Result<DVector<T>> {
        let grad = self.h.gradient(x)?;
        Ok(self.g.eval(x.as_slice())?.transpose() * grad)
    }

    /// Dissipated power: `∇HᵀR∇H`, or `f_Rᵀ∂𝓡/∂f_R` with Rayleigh dissipation.
    pub fn dissipation_rate(&self, x: &DVector<T>) -> Result<T> {
        let grad = self.h.gradient(x)?;
        match &self.rayleigh {
            Some(ray) => Ok(self.rayleigh_term(ray, x, &grad)?.1),
            None => Ok(grad.dot(&(self.r.eval(x.as_slice())? * &grad))),
        }
    }

    /// Runs [`validate_phs`] on [`default_samples`] with [`DEFAULT_SEED`].
    pub fn validate(&self) -> ValidationReport {
        let samples = default_samples(self.dim(), DEFAULT_SEED);
        let mut rep = validate_phs(self, &samples);
        rep.seed = Some(DEFAULT_SEED);
        rep
    }
}

/// Per-check outcome of a structural validation.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub seed: Option<u64>,
    pub samples: usize,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        all_passed(&self.checks)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// The origin plus 32 points uniform in `[-1, 1]ⁿ`.
pub fn default_samples<T: Scalar>(n: usize, seed: u64) -> Vec<DVector<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![DVector::zeros(n)];
    for _ in 0..32 {
        out.push(DVector::from_fn(n, |_, _| {
            T::lit(rng.random_range(-1.0..=1.0))
        }));
    }
    out
}

/// Worst violations of the axioms on `J`, `R` and the Rayleigh term at `samples`.
pub fn validate_phs<T: Scalar>(model: &PhsModel<T>, samples: &[DVector<T>]) -> ValidationReport {
    let tol = STRUCTURE_TOL;
    let mut checks = Vec::new();
    let n = model.dim();
    let mut skew = 0.0f64;
    let mut sym = 0.0f64;
    let mut min_eig = f64::INFINITY;
    let mut mono = f64::INFINITY;
    let mut eval_err: Option<String> = None;
    let bad_dim = samples.iter().any(|x| x.len() != n);

    for x in samples.iter().filter(|x| x.len() == n) {
        let xs = x.as_slice();
        match model.j.eval(xs) {
            Ok(j) => skew = skew.max(linalg::skew_violation(&j).as_f64()),
            Err(e) => eval_err = Some(format!("J: {e}")),
        }
        if model.rayleigh.is_none() {
            match model.r.eval(xs) {
                Ok(r) => {
                    sym = sym.max(linalg::symmetry_violation(&r).as_f64());
                    if n > 0 {
                        min_eig = min_eig.min(linalg::min_sym_eigenvalue(&r).as_f64());
                    }
                }
                Err(e) => eval_err = Some(format!("R: {e}")),
            }
        }
        if let Some(ray) = &model.rayleigh {
            match model
                .h
                .gradient(x)
                .and_then(|g| model.rayleigh_term(ray, x, &g))
            {
                Ok((_, p)) => mono = mono.min(p.as_f64()),
                Err(e) => eval_err = Some(format!("Rayleigh: {e}")),
            }
        }
        if let Err(e) = model.g.eval(xs) {
            eval_err = Some(format!("G: {e}"));
        }
    }

    checks.push(if bad_dim {
        Check::failed("dimensions", "sample point of wrong length")
    } else {
        Check::at_most("dimensions", 0.0, 0.0)
    });
    checks.push(Check::at_most("J skew-symmetric", skew, tol));
    if model.rayleigh.is_none() {
        checks.push(Check::at_most("R symmetric", sym, tol));
        let me = if min_eig.is_finite() { min_eig } else { 0.0 };
        checks.push(
            Check::at_least("R positive semidefinite", me, tol)
                .with_detail(format!("minimum eigenvalue {me:e}")),
        );
    } else {
        let m = if mono.is_finite() { mono } else { 0.0 };
        checks.push(Check::at_least("Rayleigh monotone", m, tol));
    }
    if let Some(e) = eval_err {
        checks.push(Check::failed("evaluation", e));
    }
    ValidationReport {
        seed: None,
        samples: samples.len(),
        checks,
    }
}
