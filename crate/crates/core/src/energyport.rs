//! Input-output Hamiltonian systems with energy ports:
//!
//! ```text
//! ẋ = [J − R](∇H(x) − C_x(x)ᵀ u),   y = C(x)
//! ```
//!
//! where `C_x = ∂C/∂xᵀ` is the `m × n` output Jacobian.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::linalg;
use crate::model::{
    default_samples, validate_phs, ExtendedPhsModel, Hamiltonian, MatrixField, PhsModel,
    ValidationReport, DEFAULT_SEED,
};
use crate::report::{all_passed, Check};
use crate::simulate::{simulate, Dynamics, InputLaw, Method, Trajectory};
use crate::synthesis::product_names;
use crate::Scalar;

/// Residual bound for the PHS/IOH conversion identities.
pub const CONVERSION_TOL: f64 = 1e-9;
/// Half-width of the band around loop gain one reported as marginal.
pub const MARGINAL_BAND: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct IohModel<T> {
    label: String,
    names: Vec<String>,
    j: MatrixField<T>,
    r: MatrixField<T>,
    h: Hamiltonian<T>,
    c: Vec<Expr>,
}

/// `∂C/∂xᵀ` at `x`.
pub fn output_jacobian<T: Scalar>(c: &[Expr], x: &[T]) -> Result<DMatrix<T>> {
    let mut jac = DMatrix::zeros(c.len(), x.len());
    for (i, ci) in c.iter().enumerate() {
        let (_, g) = ci.eval_grad(x)?;
        jac.set_row(i, &g.transpose());
    }
    Ok(jac)
}

/// `(C_x, C(0))` when `C` is affine on the default samples.
pub fn affine_output<T: Scalar>(c: &[Expr], n: usize) -> Result<Option<(DMatrix<T>, DVector<T>)>> {
    let samples = default_samples::<T>(n, DEFAULT_SEED);
    let jac0 = output_jacobian(c, samples[0].as_slice())?;
    let scale = T::one() + linalg::max_abs(&jac0);
    for x in &samples[1..] {
        let jx = output_jacobian(c, x.as_slice())?;
        if linalg::max_abs(&(jx - &jac0)) > T::tol(1e-12) * scale {
            return Ok(None);
        }
    }
    let zero = vec![T::zero(); n];
    let c0 = c
        .iter()
        .map(|ci| ci.eval(&zero))
        .collect::<std::result::Result<Vec<T>, _>>()?;
    Ok(Some((jac0, DVector::from_vec(c0))))
}

impl<T: Scalar> IohModel<T> {
    pub fn new(
        names: Vec<String>,
        j: MatrixField<T>,
        r: MatrixField<T>,
        h: Hamiltonian<T>,
        c: Vec<Expr>,
    ) -> Result<Self> {
        // shape and Hamiltonian checks
        PhsModel::new(
            names.clone(),
            j.clone(),
            r.clone(),
            MatrixField::zeros(names.len(), 0),
            h.clone(),
        )?;
        for ci in &c {
            if ci.vars() != names.as_slice() {
                return Err(Error::dim(format!(
                    "output `{ci}` is over {:?}, expected {:?}",
                    ci.vars(),
                    names
                )));
            }
        }
        Ok(IohModel {
            label: "ioh".into(),
            names,
            j,
            r,
            h,
            c,
        })
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
        self.c.len()
    }

    pub fn j(&self) -> &MatrixField<T> {
        &self.j
    }

    pub fn r(&self) -> &MatrixField<T> {
        &self.r
    }

    pub fn hamiltonian(&self) -> &Hamiltonian<T> {
        &self.h
    }

    pub fn output_map(&self) -> &[Expr] {
        &self.c
    }

    pub fn output(&self, x: &DVector<T>) -> Result<DVector<T>> {
        let mut y = DVector::zeros(self.c.len());
        for (i, ci) in self.c.iter().enumerate() {
            y[i] = ci.eval(x.as_slice())?;
        }
        Ok(y)
    }

    pub fn output_jacobian(&self, x: &DVector<T>) -> Result<DMatrix<T>> {
        output_jacobian(&self.c, x.as_slice())
    }

    /// `∇H − C_xᵀu`, the effort driving `[J − R]`.
    fn effort(&self, x: &DVector<T>, u: &DVector<T>) -> Result<(DVector<T>, DMatrix<T>)> {
        if u.len() != self.inputs() {
            return Err(Error::dim(format!(
                "u has length {}, expected {}",
                u.len(),
                self.inputs()
            )));
        }
        let cx = self.output_jacobian(x)?;
        Ok((self.h.gradient(x)? - cx.transpose() * u, cx))
    }

    pub fn vector_field(&self, x: &DVector<T>, u: &DVector<T>) -> Result<DVector<T>> {
        let (z, _) = self.effort(x, u)?;
        let xs = x.as_slice();
        Ok((self.j.eval(xs)? - self.r.eval(xs)?) * z)
    }

    /// `ẏ = C_x [J − R](∇H − C_xᵀu)`.
    pub fn differentiated_output(&self, x: &DVector<T>, u: &DVector<T>) -> Result<DVector<T>> {
        let (z, cx) = self.effort(x, u)?;
        let xs = x.as_slice();
        Ok(cx * ((self.j.eval(xs)? - self.r.eval(xs)?) * z))
    }

    pub fn validate_at(&self, samples: &[DVector<T>]) -> ValidationReport {
        let n = self.dim();
        let shell = PhsModel::new(
            self.names.clone(),
            self.j.clone(),
            self.r.clone(),
            MatrixField::zeros(n, 0),
            self.h.clone(),
        )
        .expect("checked at construction");
        let mut rep = validate_phs(&shell, samples);
        let mut failure = None;
        for x in samples {
            if let Err(e) = self.output(x).and_then(|_| self.output_jacobian(x)) {
                failure = Some(format!("at {:?}: {e}", x.as_slice()));
                break;
            }
        }
        rep.checks.push(match failure {
            None => Check::at_most("output map differentiable", 0.0, 0.0),
            Some(msg) => Check::failed("output map differentiable", msg),
        });
        rep
    }

    pub fn validate(&self) -> ValidationReport {
        let mut rep = self.validate_at(&default_samples(self.dim(), DEFAULT_SEED));
        rep.seed = Some(DEFAULT_SEED);
        rep
    }
}

impl<T: Scalar> Dynamics<T> for IohModel<T> {
    fn names(&self) -> &[String] {
        &self.names
    }

    fn inputs(&self) -> usize {
        self.c.len()
    }

    fn field(&self, x: &DVector<T>, u: &DVector<T>) -> Result<DVector<T>> {
        self.vector_field(x, u)
    }

    fn output(&self, x: &DVector<T>, _u: &DVector<T>) -> Result<DVector<T>> {
        IohModel::output(self, x)
    }

    fn energy(&self, x: &DVector<T>) -> Result<T> {
        self.h.value(x)
    }

    fn energy_gradient(&self, x: &DVector<T>) -> Result<DVector<T>> {
        self.h.gradient(x)
    }

    fn passive_output(&self, x: &DVector<T>, u: &DVector<T>) -> Result<DVector<T>> {
        self.differentiated_output(x, u)
    }

    fn dissipation(&self, x: &DVector<T>, u: &DVector<T>) -> Result<T> {
        let (z, _) = self.effort(x, u)?;
        Ok(z.dot(&(self.r.eval(x.as_slice())? * &z)))
    }

    fn output_rate(&self, x: &DVector<T>, u: &DVector<T>) -> Result<Option<DVector<T>>> {
        Ok(Some(self.differentiated_output(x, u)?))
    }
}

/// Simulates an IOH model; trajectories carry `ẏ` in `output_rates`.
pub fn simulate_ioh<T: Scalar, U: InputLaw<T> + ?Sized>(
    ioh: &IohModel<T>,
    law: &U,
    x0: &DVector<T>,
    t_end: T,
    h: T,
    method: Method,
) -> Result<Trajectory<T>> {
    simulate(ioh, law, x0, t_end, h, method)
}

/// `G' = −J C_xᵀ`, `P = −R C_xᵀ`, `S = C_x R C_xᵀ`, `M = −C_x J C_xᵀ`.
fn conversion_blocks<T: Scalar>(
    j: &DMatrix<T>,
    r: &DMatrix<T>,
    cx: &DMatrix<T>,
) -> [DMatrix<T>; 4] {
    let ct = cx.transpose();
    [-(j * &ct), -(r * &ct), cx * r * &ct, -(cx * j * &ct)]
}

/// The extended PHS whose passive output `y_PH` equals `ẏ`.
pub fn ioh_to_phs<T: Scalar>(ioh: &IohModel<T>) -> Result<ExtendedPhsModel<T>> {
    let (n, m) = (ioh.dim(), ioh.inputs());
    let constant = match (
        ioh.j.as_constant(),
        ioh.r.as_constant(),
        affine_output::<T>(&ioh.c, n)?,
    ) {
        (Some(j), Some(r), Some((cx, _))) => Some(conversion_blocks(&j, &r, &cx)),
        _ => None,
    };
    let [gp, p, s, mm] = match constant {
        Some([gp, p, s, mm]) => [
            MatrixField::constant(gp),
            MatrixField::constant(p),
            MatrixField::constant(s),
            MatrixField::constant(mm),
        ],
        None => {
            let part = |k: usize, rows: usize, cols: usize| {
                let (j, r, c) = (ioh.j.clone(), ioh.r.clone(), ioh.c.clone());
                MatrixField::derived(rows, cols, move |x: &[T]| {
                    let cx = output_jacobian(&c, x)?;
                    let blocks = conversion_blocks(&j.eval(x)?, &r.eval(x)?, &cx);
                    Ok(blocks[k].clone())
                })
            };
            [part(0, n, m), part(1, n, m), part(2, m, m), part(3, m, m)]
        }
    };
    let g = gp.sub(&p, &ioh.names)?;
    let base = PhsModel::new(
        ioh.names.clone(),
        ioh.j.clone(),
        ioh.r.clone(),
        g,
        ioh.h.clone(),
    )?
    .with_label(ioh.label.clone());
    ExtendedPhsModel::from_parts(base, p, mm, s)
}

/// A PHS without feedthrough, as an extended PHS with `P = M = S = 0`.
pub fn as_extended<T: Scalar>(phs: &PhsModel<T>) -> Result<ExtendedPhsModel<T>> {
    let m = phs.inputs();
    ExtendedPhsModel::from_parts(
        phs.clone(),
        MatrixField::zeros(phs.dim(), m),
        MatrixField::zeros(m, m),
        MatrixField::zeros(m, m),
    )
}

/// Verifies that `C` makes `ẏ = y_PH` and returns the IOH form.
///
/// Fails with the first violated identity, in the order `G'`, `P`, `S`, `M`.
pub fn phs_to_ioh<T: Scalar>(phs: &ExtendedPhsModel<T>, c: Vec<Expr>) -> Result<IohModel<T>> {
    let base = phs.base();
    let n = base.dim();
    if c.len() != base.inputs() {
        return Err(Error::dim(format!(
            "{} output functions for {} ports",
            c.len(),
            base.inputs()
        )));
    }
    let ioh = IohModel::new(
        base.names().to_vec(),
        base.j().clone(),
        base.r().clone(),
        base.hamiltonian().clone(),
        c,
    )?
    .with_label(base.label().to_string());
    let labels = [
        "G' = -J dC^T/dx",
        "P = -R dC^T/dx",
        "S = dC/dx^T R dC^T/dx",
        "M = -dC/dx^T J dC^T/dx",
    ];
    let gp = phs.g_prime()?;
    let mut worst = [T::zero(); 4];
    for x in default_samples::<T>(n, DEFAULT_SEED) {
        let xs = x.as_slice();
        let cx = output_jacobian(&ioh.c, xs)?;
        let want = conversion_blocks(&base.j().eval(xs)?, &base.r().eval(xs)?, &cx);
        let have = [
            gp.eval(xs)?,
            phs.p().eval(xs)?,
            phs.s().eval(xs)?,
            phs.m().eval(xs)?,
        ];
        for k in 0..4 {
            worst[k] = worst[k].max(linalg::max_abs(&(&have[k] - &want[k])));
        }
    }
    for k in 0..4 {
        if worst[k] > T::tol(CONVERSION_TOL) {
            return Err(Error::structure(labels[k], worst[k].as_f64()));
        }
    }
    Ok(ioh)
}

fn block_diag_field<T: Scalar>(
    a: &MatrixField<T>,
    na: usize,
    b: &MatrixField<T>,
    nb: usize,
    names: &[String],
) -> Result<MatrixField<T>> {
    MatrixField::blocks(
        &a.embed(names, 0, na),
        &MatrixField::zeros(a.rows(), b.cols()),
        &MatrixField::zeros(b.rows(), a.cols()),
        &b.embed(names, na, nb),
        names,
    )
}

/// Product state, block-diagonal `J` and `R`, stacked outputs, and `H_int`.
fn couple<T: Scalar>(
    a: &IohModel<T>,
    b: &IohModel<T>,
    h: impl FnOnce(&[String], &[Expr], &[Expr]) -> Result<Hamiltonian<T>>,
) -> Result<IohModel<T>> {
    let (n1, n2) = (a.dim(), b.dim());
    let names = product_names(&a.names, &b.names);
    let c1: Vec<Expr> = a.c.iter().map(|e| e.reindex(&names, |i| i)).collect();
    let c2: Vec<Expr> = b.c.iter().map(|e| e.reindex(&names, |i| i + n1)).collect();
    let hint = h(&names, &c1, &c2)?;
    let j = block_diag_field(&a.j, n1, &b.j, n2, &names)?;
    let r = block_diag_field(&a.r, n1, &b.r, n2, &names)?;
    let c = c1.into_iter().chain(c2).collect();
    Ok(IohModel::new(names, j, r, hint, c)?.with_label(format!("{} x {}", a.label, b.label)))
}

fn expr_sum<T: Scalar>(a: &IohModel<T>, b: &IohModel<T>, names: &[String]) -> Result<Expr> {
    Hamiltonian::direct_sum(&a.h, &b.h, names)?.to_expr(names)
}

/// `u₁ = y₂ + v₁`, `u₂ = y₁ + v₂`, with `H_cl = H₁ + H₂ − C₁ᵀC₂`.
///
/// The closed loop has inputs `(v₁, v₂)` and outputs `(C₁, C₂)`.
pub fn positive_feedback<T: Scalar>(a: &IohModel<T>, b: &IohModel<T>) -> Result<IohModel<T>> {
    if a.inputs() != b.inputs() {
        return Err(Error::dim(format!(
            "positive feedback needs equal port counts, got {} and {}",
            a.inputs(),
            b.inputs()
        )));
    }
    let (n1, n2) = (a.dim(), b.dim());
    let quad = match (
        a.h.to_quadratic(),
        b.h.to_quadratic(),
        affine_output::<T>(&a.c, n1)?,
        affine_output::<T>(&b.c, n2)?,
    ) {
        (Some(h1), Some(h2), Some(c1), Some(c2)) => Some((h1, h2, c1, c2)),
        _ => None,
    };
    couple(a, b, |names, c1, c2| {
        if let Some(((q1, b1, k1), (q2, b2, k2), (d1, o1), (d2, o2))) = quad {
            let n = n1 + n2;
            let mut q = DMatrix::zeros(n, n);
            q.view_mut((0, 0), (n1, n1)).copy_from(&q1);
            q.view_mut((n1, n1), (n2, n2)).copy_from(&q2);
            let cross = -(d1.transpose() * &d2);
            q.view_mut((0, n1), (n1, n2)).copy_from(&cross);
            q.view_mut((n1, 0), (n2, n1)).copy_from(&cross.transpose());
            let mut bv = DVector::zeros(n);
            bv.rows_mut(0, n1).copy_from(&(b1 - d1.transpose() * &o2));
            bv.rows_mut(n1, n2).copy_from(&(b2 - d2.transpose() * &o1));
            return Hamiltonian::quadratic(q, bv, k1 + k2 - o1.dot(&o2));
        }
        let mut e = expr_sum(a, b, names)?;
        for (x, y) in c1.iter().zip(c2) {
            e = e.try_sub(&x.try_mul(y)?)?;
        }
        Ok(Hamiltonian::expression(e))
    })
}

/// `u = y_s + v`, `u_s = y` with the static system `y_s = −∂P/∂u_s`.
#[derive(Debug, Clone)]
pub struct StaticEnergyFeedback {
    p: Expr,
}

impl StaticEnergyFeedback {
    pub fn new(p: Expr) -> Self {
        StaticEnergyFeedback { p }
    }

    pub fn function(&self) -> &Expr {
        &self.p
    }

    pub fn gradient<T: Scalar>(&self, y: &DVector<T>) -> Result<DVector<T>> {
        Ok(self.p.eval_grad(y.as_slice())?.1)
    }
}

/// Same `J`, `R`, `C`; Hamiltonian `H + P∘C`.
pub fn static_energy_feedback<T: Scalar>(
    ioh: &IohModel<T>,
    p: &StaticEnergyFeedback,
) -> Result<IohModel<T>> {
    if p.p.vars().len() != ioh.inputs() {
        return Err(Error::dim(format!(
            "P has {} arguments, the model has {} outputs",
            p.p.vars().len(),
            ioh.inputs()
        )));
    }
    let h = ioh
        .h
        .to_expr(&ioh.names)?
        .try_add(&p.p.substitute(&ioh.c)?)?;
    Ok(IohModel {
        h: Hamiltonian::expression(h),
        ..ioh.clone()
    })
}

/// `u_i = −∂P/∂y_i + v_i`, giving `H_int = H₁ + H₂ + P(C₁, C₂)`.
///
/// `p` takes the `m₁` outputs of `a` followed by the `m₂` outputs of `b`.
pub fn general_p_feedback<T: Scalar>(
    a: &IohModel<T>,
    b: &IohModel<T>,
    p: &Expr,
) -> Result<IohModel<T>> {
    if p.vars().len() != a.inputs() + b.inputs() {
        return Err(Error::dim(format!(
            "P has {} arguments, expected {}",
            p.vars().len(),
            a.inputs() + b.inputs()
        )));
    }
    couple(a, b, |names, c1, c2| {
        let outs: Vec<Expr> = c1.iter().chain(c2).cloned().collect();
        let e = expr_sum(a, b, names)?.try_add(&p.substitute(&outs)?)?;
        Ok(Hamiltonian::expression(e))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Stable,
    Marginal,
    Unstable,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    /// Steady-state output per unit constant input, `C_x Q⁻¹ C_xᵀ`, for each system.
    pub dc_gains: [Vec<Vec<f64>>; 2],
    /// Spectral radius of the product of the dc gains.
    pub loop_gain: f64,
    /// Hessian of `H_cl` at the origin.
    pub hessian: Vec<Vec<f64>>,
    pub hessian_min_eigenvalue: f64,
    pub verdict: Verdict,
    pub loop_gain_verdict: Verdict,
    pub checks: Vec<Check>,
}

impl StabilityReport {
    pub fn passed(&self) -> bool {
        all_passed(&self.checks)
    }
}

fn rows<T: Scalar>(m: &DMatrix<T>) -> Vec<Vec<f64>> {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.as_f64()).collect())
        .collect()
}

fn linear_parts<T: Scalar>(ioh: &IohModel<T>, which: &str) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let (q, _, _) = ioh
        .h
        .to_quadratic()
        .ok_or_else(|| Error::Precondition(format!("{which}: Hamiltonian must be quadratic")))?;
    let (cx, _) = affine_output::<T>(&ioh.c, ioh.dim())?
        .ok_or_else(|| Error::Precondition(format!("{which}: output map must be linear")))?;
    if ioh.dim() > 0 && linalg::min_sym_eigenvalue(&q) <= T::tol(MARGINAL_BAND) {
        return Err(Error::Precondition(format!(
            "{which}: Hessian of H is not positive definite"
        )));
    }
    Ok((q, cx))
}

/// Symmetric square root of a PSD matrix.
fn psd_sqrt<T: Scalar>(a: &DMatrix<T>) -> DMatrix<T> {
    let eig = SymmetricEigen::new(a.clone());
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(T::zero()).sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

fn classify(margin: f64) -> Verdict {
    if margin > MARGINAL_BAND {
        Verdict::Stable
    } else if margin < -MARGINAL_BAND {
        Verdict::Unstable
    } else {
        Verdict::Marginal
    }
}

/// Stability of the positive-feedback loop of two stable linear IOH systems.
///
/// The verdict comes from definiteness of the `H_cl` Hessian; the loop-gain
/// verdict (`ρ(K₁K₂) < 1`) is reported alongside and checked for agreement.
pub fn dc_loop_gain_stability<T: Scalar>(
    a: &IohModel<T>,
    b: &IohModel<T>,
) -> Result<StabilityReport> {
    if a.inputs() != b.inputs() {
        return Err(Error::dim("positive feedback needs equal port counts"));
    }
    let (q1, c1) = linear_parts(a, "first system")?;
    let (q2, c2) = linear_parts(b, "second system")?;
    let gain = |q: &DMatrix<T>, c: &DMatrix<T>| -> Result<DMatrix<T>> {
        let qi = q
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("Q".into()))?;
        Ok(c * qi * c.transpose())
    };
    let k1 = gain(&q1, &c1)?;
    let k2 = gain(&q2, &c2)?;
    let s = psd_sqrt(&k1);
    let loop_mat = &s * &k2 * &s;
    let rho = if loop_mat.nrows() == 0 {
        0.0
    } else {
        linalg::sym_eigenvalues(&loop_mat)
            .into_iter()
            .fold(0.0f64, |m, v| m.max(v.abs().as_f64()))
    };

    let (n1, n2) = (q1.nrows(), q2.nrows());
    let mut hess = DMatrix::zeros(n1 + n2, n1 + n2);
    hess.view_mut((0, 0), (n1, n1)).copy_from(&q1);
    hess.view_mut((n1, n1), (n2, n2)).copy_from(&q2);
    let cross = -(c1.transpose() * &c2);
    hess.view_mut((0, n1), (n1, n2)).copy_from(&cross);
    hess.view_mut((n1, 0), (n2, n1))
        .copy_from(&cross.transpose());
    let lmin = if n1 + n2 == 0 {
        f64::INFINITY
    } else {
        linalg::min_sym_eigenvalue(&hess).as_f64()
    };
    let verdict = classify(lmin);
    let loop_gain_verdict = classify(1.0 - rho);
    let checks = vec![
        Check::at_least("H_cl Hessian minimum eigenvalue", lmin, MARGINAL_BAND),
        Check::at_most("dc loop gain", rho, 1.0),
        if verdict == loop_gain_verdict {
            Check::at_most("verdict agreement", 0.0, 0.0)
        } else {
            Check::failed(
                "verdict agreement",
                format!("Hessian says {verdict:?}, loop gain says {loop_gain_verdict:?}"),
            )
        },
    ];
    Ok(StabilityReport {
        dc_gains: [rows(&k1), rows(&k2)],
        loop_gain: rho,
        hessian: rows(&hess),
        hessian_min_eigenvalue: lmin,
        verdict,
        loop_gain_verdict,
        checks,
    })
}
