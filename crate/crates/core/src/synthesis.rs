//! Control by interconnection, Casimir-based shaping, damping injection and
//! linear IDA-PBC.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::analysis::{LyapunovCandidate, MinimumReport};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::linalg;
use crate::model::{
    default_samples, Hamiltonian, MatrixField, PhsModel, DEFAULT_SEED, STRUCTURE_TOL,
};
use crate::simulate::{simulate, InputLaw, Method, Trajectory};
use crate::Scalar;

/// Residual bound for closed-loop Casimirs and the IDA-PBC matching equation.
pub const SYNTHESIS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interconnection {
    NegativeFeedback,
    Jint,
}

/// A closed loop on the product state `(x, ξ)` with `H_cl = H(x) + H_c(ξ)`.
#[derive(Debug, Clone)]
pub struct ClosedLoopPhs<T> {
    pub model: PhsModel<T>,
    pub kind: Interconnection,
    pub plant: String,
    pub controller: String,
    pub plant_dim: usize,
    pub controller_dim: usize,
}

/// Concatenates two name lists, suffixing `_1`/`_2` on collisions.
pub fn product_names(a: &[String], b: &[String]) -> Vec<String> {
    let mut out: Vec<String> = a
        .iter()
        .map(|n| {
            if b.contains(n) {
                format!("{n}_1")
            } else {
                n.clone()
            }
        })
        .collect();
    out.extend(b.iter().map(|n| {
        if a.contains(n) {
            format!("{n}_2")
        } else {
            n.clone()
        }
    }));
    out
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

fn no_rayleigh<T: Scalar>(models: &[&PhsModel<T>]) -> Result<()> {
    if models.iter().any(|m| m.rayleigh().is_some()) {
        return Err(Error::Precondition(
            "interconnection of models with Rayleigh dissipation is not supported".into(),
        ));
    }
    Ok(())
}

/// `u = −y_c + v`, `u_c = y + v_c`:
///
/// ```text
/// J_cl = [[J, −G G_cᵀ], [G_c Gᵀ, J_c]],  R_cl = diag(R, R_c),  G_cl = diag(G, G_c)
/// ```
pub fn negative_feedback<T: Scalar>(
    plant: &PhsModel<T>,
    controller: &PhsModel<T>,
) -> Result<ClosedLoopPhs<T>> {
    no_rayleigh(&[plant, controller])?;
    if plant.inputs() != controller.inputs() {
        return Err(Error::dim(format!(
            "plant has {} ports, controller {}",
            plant.inputs(),
            controller.inputs()
        )));
    }
    let (n, nc) = (plant.dim(), controller.dim());
    let names = product_names(plant.names(), controller.names());
    let g = plant.g().embed(&names, 0, n);
    let gc = controller.g().embed(&names, n, nc);
    let upper = g.mul(&gc.transpose(), &names)?.neg(&names);
    let lower = gc.mul(&g.transpose(), &names)?;
    let j = MatrixField::blocks(
        &plant.j().embed(&names, 0, n),
        &upper,
        &lower,
        &controller.j().embed(&names, n, nc),
        &names,
    )?;
    let r = block_diag_field(plant.r(), n, controller.r(), nc, &names)?;
    let gcl = block_diag_field(plant.g(), n, controller.g(), nc, &names)?;
    let h = Hamiltonian::direct_sum(plant.hamiltonian(), controller.hamiltonian(), &names)?;
    let model = PhsModel::new(names, j, r, gcl, h)?.with_label(format!(
        "{} x {}",
        plant.label(),
        controller.label()
    ));
    Ok(ClosedLoopPhs {
        model,
        kind: Interconnection::NegativeFeedback,
        plant: plant.label().to_string(),
        controller: controller.label().to_string(),
        plant_dim: n,
        controller_dim: nc,
    })
}

/// `J_cl = diag(J₁, J₂) + [G₁; G₂]·J_int·[G₁ᵀ G₂ᵀ]` with inputs `(v₁, v₂)`.
///
/// Expression entries of `j_int` are over the product state names.
pub fn interconnect_jint<T: Scalar>(
    sys1: &PhsModel<T>,
    sys2: &PhsModel<T>,
    j_int: &MatrixField<T>,
) -> Result<ClosedLoopPhs<T>> {
    no_rayleigh(&[sys1, sys2])?;
    let (n1, n2) = (sys1.dim(), sys2.dim());
    let (m1, m2) = (sys1.inputs(), sys2.inputs());
    if j_int.shape() != (m1 + m2, m1 + m2) {
        return Err(Error::dim(format!(
            "J_int is {:?}, expected {}x{}",
            j_int.shape(),
            m1 + m2,
            m1 + m2
        )));
    }
    let names = product_names(sys1.names(), sys2.names());
    let mut worst = T::zero();
    for x in default_samples::<T>(n1 + n2, DEFAULT_SEED) {
        worst = worst.max(linalg::skew_violation(&j_int.eval(x.as_slice())?));
    }
    if worst > T::tol(STRUCTURE_TOL) {
        return Err(Error::structure("skew-symmetry of J_int", worst.as_f64()));
    }
    let gbig = block_diag_field(sys1.g(), n1, sys2.g(), n2, &names)?;
    let coupling = gbig.mul(j_int, &names)?.mul(&gbig.transpose(), &names)?;
    let j = block_diag_field(sys1.j(), n1, sys2.j(), n2, &names)?.add(&coupling, &names)?;
    let r = block_diag_field(sys1.r(), n1, sys2.r(), n2, &names)?;
    let h = Hamiltonian::direct_sum(sys1.hamiltonian(), sys2.hamiltonian(), &names)?;
    let model = PhsModel::new(names, j, r, gbig, h)?.with_label(format!(
        "{} x {}",
        sys1.label(),
        sys2.label()
    ));
    Ok(ClosedLoopPhs {
        model,
        kind: Interconnection::Jint,
        plant: sys1.label().to_string(),
        controller: sys2.label().to_string(),
        plant_dim: n1,
        controller_dim: n2,
    })
}

/// `C_i(x, ξ) = ξ_i − F_i x`.
#[derive(Debug, Clone)]
pub struct ClosedLoopCasimir<T> {
    pub index: usize,
    /// Row `F_i` (length `n`).
    pub f_row: DVector<T>,
    /// `‖∇Cᵀ J_cl‖`.
    pub j_residual: T,
    /// `‖∇Cᵀ R_cl‖`.
    pub r_residual: T,
}

impl<T: Scalar> ClosedLoopCasimir<T> {
    /// `∇C = (−F_iᵀ, e_i)` on the product state.
    pub fn covector(&self, nc: usize) -> DVector<T> {
        let n = self.f_row.len();
        let mut w = DVector::zeros(n + nc);
        w.rows_mut(0, n).copy_from(&(-&self.f_row));
        w[n + self.index] = T::one();
        w
    }
}

/// Whether plant damping rules out Casimirs that the interconnection alone admits.
#[derive(Debug, Clone, Serialize)]
pub struct ObstacleReport {
    /// Controller coordinates with a Casimir `ξ_i − F_i x` under `J_cl` alone.
    pub j_only: Vec<usize>,
    /// Coordinates that keep one once `R_cl` is imposed.
    pub with_damping: Vec<usize>,
    /// `max ‖∇Cᵀ R_cl‖` over the `J_cl`-only candidates that damping removes.
    pub r_residual: f64,
    pub dissipation_obstacle: bool,
}

#[derive(Debug, Clone)]
pub struct CasimirSearch<T> {
    pub closed_loop: ClosedLoopPhs<T>,
    pub casimirs: Vec<ClosedLoopCasimir<T>>,
    pub obstacle: ObstacleReport,
}

impl<T: Scalar> CasimirSearch<T> {
    /// `F` (`n_c × n`) when every controller coordinate has a Casimir.
    pub fn f_matrix(&self) -> Option<DMatrix<T>> {
        let nc = self.closed_loop.controller_dim;
        let n = self.closed_loop.plant_dim;
        if self.casimirs.len() != nc {
            return None;
        }
        let mut f = DMatrix::zeros(nc, n);
        for c in &self.casimirs {
            f.set_row(c.index, &c.f_row.transpose());
        }
        Some(f)
    }
}

/// For each controller coordinate, a covector `(−F_iᵀ, e_i)` in the left kernel of `rows`.
fn solve_casimir_rows<T: Scalar>(
    rows: &DMatrix<T>,
    n: usize,
    nc: usize,
) -> Vec<(usize, DVector<T>)> {
    // w with wᵀ·rowsᵀ... i.e. rows·w = 0
    let basis = linalg::null_space(rows);
    let mut out = Vec::new();
    if basis.ncols() == 0 {
        return out;
    }
    let wxi = basis.rows(n, nc).into_owned();
    for i in 0..nc {
        let mut e = DVector::zeros(nc);
        e[i] = T::one();
        let a = linalg::solve_min_norm(&wxi, &e);
        if (&wxi * &a - &e).amax() <= T::tol(SYNTHESIS_TOL) {
            let w = &basis * a;
            out.push((i, -w.rows(0, n).into_owned()));
        }
    }
    out
}

/// Casimirs `ξ_i − F_i x` of the negative-feedback closed loop.
pub fn closedloop_casimir_search<T: Scalar>(
    plant: &PhsModel<T>,
    controller: &PhsModel<T>,
) -> Result<CasimirSearch<T>> {
    if plant.constant_matrices().is_none() || controller.constant_matrices().is_none() {
        return Err(Error::NotConstant("plant and controller J, R and G"));
    }
    let cl = negative_feedback(plant, controller)?;
    let (j, r, _) = cl.model.constant_matrices().expect("constant parts");
    let (n, nc) = (cl.plant_dim, cl.controller_dim);
    let total = n + nc;
    let jt = j.transpose();
    let rt = r.transpose();
    let mut stacked = DMatrix::zeros(2 * total, total);
    stacked.view_mut((0, 0), (total, total)).copy_from(&jt);
    stacked.view_mut((total, 0), (total, total)).copy_from(&rt);

    let make = |(i, f): (usize, DVector<T>)| {
        let c = ClosedLoopCasimir {
            index: i,
            f_row: f,
            j_residual: T::zero(),
            r_residual: T::zero(),
        };
        let w = c.covector(nc);
        ClosedLoopCasimir {
            j_residual: (&jt * &w).norm(),
            r_residual: (&rt * &w).norm(),
            ..c
        }
    };
    let casimirs: Vec<_> = solve_casimir_rows(&stacked, n, nc)
        .into_iter()
        .map(make)
        .collect();
    let j_only: Vec<_> = solve_casimir_rows(&jt, n, nc)
        .into_iter()
        .map(make)
        .collect();
    let with_damping: Vec<usize> = casimirs.iter().map(|c| c.index).collect();
    let removed: Vec<&ClosedLoopCasimir<T>> = j_only
        .iter()
        .filter(|c| !with_damping.contains(&c.index))
        .collect();
    let r_residual = removed
        .iter()
        .fold(0.0f64, |m, c| m.max(c.r_residual.as_f64()));
    let obstacle = ObstacleReport {
        j_only: j_only.iter().map(|c| c.index).collect(),
        with_damping,
        r_residual,
        dissipation_obstacle: !removed.is_empty(),
    };
    Ok(CasimirSearch {
        closed_loop: cl,
        casimirs,
        obstacle,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeedbackKind {
    StateFeedback,
    OutputDamping,
    Combined,
}

/// One additive contribution to a feedback law.
#[derive(Debug, Clone)]
pub enum FeedbackTerm<T> {
    /// `K x + k`.
    Affine {
        gain: DMatrix<T>,
        offset: DVector<T>,
    },
    /// `−G_cᵀ ∇H_c(F x + λ)`.
    ControllerEnergy {
        gc: DMatrix<T>,
        f: DMatrix<T>,
        lambda: DVector<T>,
        hc: Hamiltonian<T>,
    },
    /// `−c G(x)ᵀ ∇V(x)`.
    Damping {
        gain: T,
        g: MatrixField<T>,
        v: Box<LyapunovCandidate<T>>,
    },
}

impl<T: Scalar> FeedbackTerm<T> {
    fn eval(&self, x: &DVector<T>) -> Result<DVector<T>> {
        match self {
            FeedbackTerm::Affine { gain, offset } => Ok(gain * x + offset),
            FeedbackTerm::ControllerEnergy { gc, f, lambda, hc } => {
                let xi = f * x + lambda;
                Ok(-(gc.transpose() * hc.gradient(&xi)?))
            }
            FeedbackTerm::Damping { gain, g, v } => {
                let gx = g.eval(x.as_slice())?;
                Ok(-(gx.transpose() * v.gradient(x)?) * *gain)
            }
        }
    }
}

/// `u = Σ terms(x)`, possibly with the shaped Hamiltonian it realizes.
#[derive(Debug, Clone)]
pub struct FeedbackLaw<T> {
    pub kind: FeedbackKind,
    pub inputs: usize,
    pub terms: Vec<FeedbackTerm<T>>,
    pub shaped: Option<Hamiltonian<T>>,
}

impl<T: Scalar> FeedbackLaw<T> {
    pub fn eval(&self, x: &DVector<T>) -> Result<DVector<T>> {
        let mut u = DVector::zeros(self.inputs);
        for t in &self.terms {
            u += t.eval(x)?;
        }
        Ok(u)
    }

    /// Sum of two laws on the same input space.
    pub fn plus(mut self, other: FeedbackLaw<T>) -> Result<FeedbackLaw<T>> {
        if self.inputs != other.inputs {
            return Err(Error::dim("feedback laws act on different inputs"));
        }
        self.terms.extend(other.terms);
        self.kind = FeedbackKind::Combined;
        if self.shaped.is_none() {
            self.shaped = other.shaped;
        }
        Ok(self)
    }

    /// `(K, k)` when every term is affine.
    pub fn as_affine(&self, n: usize) -> Option<(DMatrix<T>, DVector<T>)> {
        let mut k = DMatrix::zeros(self.inputs, n);
        let mut c = DVector::zeros(self.inputs);
        for t in &self.terms {
            match t {
                FeedbackTerm::Affine { gain, offset } => {
                    k += gain;
                    c += offset;
                }
                _ => return None,
            }
        }
        Some((k, c))
    }

    /// The plant with its Hamiltonian replaced by the shaped one.
    pub fn shaped_model(&self, plant: &PhsModel<T>) -> Result<PhsModel<T>> {
        let h = self
            .shaped
            .clone()
            .ok_or_else(|| Error::Precondition("feedback law has no shaped Hamiltonian".into()))?;
        plant.with_hamiltonian(h)
    }
}

impl<T: Scalar> InputLaw<T> for FeedbackLaw<T> {
    fn dim(&self) -> usize {
        self.inputs
    }

    fn input(&self, _t: T, x: &DVector<T>) -> Result<DVector<T>> {
        self.eval(x)
    }
}

/// `H_c(F x + λ)` as a Hamiltonian of the plant state.
fn compose_affine<T: Scalar>(
    hc: &Hamiltonian<T>,
    f: &DMatrix<T>,
    lambda: &DVector<T>,
    names: &[String],
) -> Result<Hamiltonian<T>> {
    if let Some((qc, bc, cc)) = hc.to_quadratic() {
        let half = T::lit(0.5);
        let q = f.transpose() * &qc * f;
        let b = f.transpose() * (&qc * lambda + &bc);
        let c = half * lambda.dot(&(&qc * lambda)) + bc.dot(lambda) + cc;
        return Hamiltonian::quadratic(q, b, c);
    }
    let nc = f.nrows();
    let cnames: Vec<String> = (0..nc).map(|i| format!("xi{i}")).collect();
    let e = hc.to_expr(&cnames)?;
    let subs: Vec<Expr> = (0..nc)
        .map(|i| {
            crate::analysis::linear_expr(&f.row(i).transpose(), names)
                .try_add(&Expr::constant(lambda[i].as_f64(), names))
                .expect("shared names")
        })
        .collect();
    Ok(Hamiltonian::expression(e.substitute(&subs)?))
}

fn sum_hamiltonians<T: Scalar>(
    a: &Hamiltonian<T>,
    b: &Hamiltonian<T>,
    names: &[String],
) -> Result<Hamiltonian<T>> {
    if let (Some((qa, ba, ca)), Some((qb, bb, cb))) = (a.to_quadratic(), b.to_quadratic()) {
        return Hamiltonian::quadratic(qa + qb, ba + bb, ca + cb);
    }
    Ok(Hamiltonian::expression(
        a.to_expr(names)?.try_add(&b.to_expr(names)?)?,
    ))
}

/// `α_λ(x) = −G_cᵀ ∇H_c(F x + λ)` and `H_s = H + H_c(F x + λ)` for certified `F`.
pub fn reduce_to_state_feedback<T: Scalar>(
    plant: &PhsModel<T>,
    controller: &PhsModel<T>,
    f: &DMatrix<T>,
    lambda: &DVector<T>,
) -> Result<FeedbackLaw<T>> {
    let (n, nc) = (plant.dim(), controller.dim());
    if f.shape() != (nc, n) || lambda.len() != nc {
        return Err(Error::dim(format!(
            "F is {:?} and λ has length {}, expected {nc}x{n} and {nc}",
            f.shape(),
            lambda.len()
        )));
    }
    let cl = negative_feedback(plant, controller)?;
    let (jcl, rcl, _) = cl
        .model
        .constant_matrices()
        .ok_or(Error::NotConstant("plant and controller J, R and G"))?;
    for i in 0..nc {
        let c = ClosedLoopCasimir {
            index: i,
            f_row: f.row(i).transpose(),
            j_residual: T::zero(),
            r_residual: T::zero(),
        };
        let w = c.covector(nc);
        let res = (jcl.transpose() * &w)
            .norm()
            .max((rcl.transpose() * &w).norm());
        if res > T::tol(SYNTHESIS_TOL) {
            return Err(Error::Precondition(format!(
                "row {i} of F is not a certified closed-loop Casimir (residual {res})"
            )));
        }
    }
    let gc = controller
        .g()
        .as_constant()
        .ok_or(Error::NotConstant("G_c"))?;
    let hc = controller.hamiltonian();
    let shaped = sum_hamiltonians(
        plant.hamiltonian(),
        &compose_affine(hc, f, lambda, plant.names())?,
        plant.names(),
    )?;
    let term = match hc.to_quadratic() {
        Some((qc, bc, _)) => FeedbackTerm::Affine {
            gain: -(gc.transpose() * &qc * f),
            offset: -(gc.transpose() * (&qc * lambda + bc)),
        },
        None => FeedbackTerm::ControllerEnergy {
            gc,
            f: f.clone(),
            lambda: lambda.clone(),
            hc: hc.clone(),
        },
    };
    Ok(FeedbackLaw {
        kind: FeedbackKind::StateFeedback,
        inputs: plant.inputs(),
        terms: vec![term],
        shaped: Some(shaped),
    })
}

/// `v = −c·G(x)ᵀ∇V(x)` for an accepted candidate `V`.
pub fn damping_injection<T: Scalar>(
    model: &PhsModel<T>,
    v: &LyapunovCandidate<T>,
    certificate: &MinimumReport,
    gain: T,
) -> Result<FeedbackLaw<T>> {
    if !certificate.accepted {
        return Err(Error::Precondition(
            "Lyapunov candidate was not accepted".into(),
        ));
    }
    if gain < T::zero() {
        return Err(Error::Precondition(
            "damping gain must be non-negative".into(),
        ));
    }
    Ok(FeedbackLaw {
        kind: FeedbackKind::OutputDamping,
        inputs: model.inputs(),
        terms: vec![FeedbackTerm::Damping {
            gain,
            g: model.g().clone(),
            v: Box::new(v.clone()),
        }],
        shaped: None,
    })
}

/// Numeric surrogate for LaSalle: `V` along the closed loop and the final distance to target.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceAudit {
    pub horizon: f64,
    pub max_increase: f64,
    pub final_error: f64,
    pub tolerance: f64,
    pub converged: bool,
}

pub const CONVERGENCE_TOL: f64 = 1e-3;

/// Simulates `plant` under `law` and checks `V` non-increasing and `‖x(T) − x*‖ < 1e-3`.
pub fn convergence_audit<T: Scalar>(
    plant: &PhsModel<T>,
    law: &FeedbackLaw<T>,
    v: &LyapunovCandidate<T>,
    x0: &DVector<T>,
    horizon: T,
    h: T,
) -> Result<(ConvergenceAudit, Trajectory<T>)> {
    let tr = simulate(plant, law, x0, horizon, h, Method::ImplicitMidpoint)?;
    let inc = v.max_increase(&tr)?.as_f64();
    let err = (tr.last_state() - &v.target).norm().as_f64();
    Ok((
        ConvergenceAudit {
            horizon: horizon.as_f64(),
            max_increase: inc,
            final_error: err,
            tolerance: CONVERGENCE_TOL,
            converged: err < CONVERGENCE_TOL && inc <= 1e-9,
        },
        tr,
    ))
}

/// Result of a linear-quadratic IDA-PBC design.
#[derive(Debug, Clone)]
pub struct IdaPbc<T> {
    pub law: FeedbackLaw<T>,
    pub annihilator: DMatrix<T>,
    /// `G^⊥[(J − R)Q − (J_d − R_d)Q_s]`.
    pub matching_matrix: DMatrix<T>,
    pub matching_residual: T,
}

/// Linear IDA-PBC: checks the matching equation and returns
/// `α(x) = G⁺[(J_d − R_d)∇H_s − (J − R)∇H]`.
pub fn ida_pbc_linear<T: Scalar>(
    plant: &PhsModel<T>,
    jd: &DMatrix<T>,
    rd: &DMatrix<T>,
    hs: &Hamiltonian<T>,
) -> Result<IdaPbc<T>> {
    let (j, r, g) = plant
        .constant_matrices()
        .ok_or(Error::NotConstant("J, R and G"))?;
    let (q, b, _) = plant
        .hamiltonian()
        .to_quadratic()
        .ok_or_else(|| Error::Precondition("plant Hamiltonian must be quadratic".into()))?;
    let (qs, bs, _) = hs
        .to_quadratic()
        .ok_or_else(|| Error::Precondition("assigned Hamiltonian must be quadratic".into()))?;
    let n = plant.dim();
    if jd.shape() != (n, n) || rd.shape() != (n, n) || qs.nrows() != n {
        return Err(Error::dim("assigned J_d, R_d or H_s has the wrong size"));
    }
    let sk = linalg::skew_violation(jd);
    if sk > T::tol(STRUCTURE_TOL) {
        return Err(Error::structure("skew-symmetry of J_d", sk.as_f64()));
    }
    let sy = linalg::symmetry_violation(rd);
    if sy > T::tol(STRUCTURE_TOL) {
        return Err(Error::structure("symmetry of R_d", sy.as_f64()));
    }
    if n > 0 {
        let me = linalg::min_sym_eigenvalue(rd);
        if me < -T::tol(STRUCTURE_TOL) {
            return Err(Error::structure(
                "positive semidefiniteness of R_d",
                -me.as_f64(),
            ));
        }
    }
    if linalg::rank(&g) != g.ncols() {
        return Err(Error::Singular("G does not have full column rank".into()));
    }
    let gperp = linalg::left_null_space(&g);
    let a = &j - &r;
    let ad = jd - rd;
    let mat = &gperp * (&a * &q - &ad * &qs);
    let aff = &gperp * (&a * &b - &ad * &bs);
    let residual = linalg::max_abs(&mat).max(linalg::max_abs_vec(&aff));
    if residual > T::tol(SYNTHESIS_TOL) {
        return Err(Error::structure(
            "matching equation G_perp [(J-R)Q - (Jd-Rd)Qs] = 0",
            residual.as_f64(),
        ));
    }
    let gp = linalg::pinv(&g);
    let gain = &gp * (&ad * &qs - &a * &q);
    let offset = &gp * (&ad * &bs - &a * &b);
    Ok(IdaPbc {
        law: FeedbackLaw {
            kind: FeedbackKind::StateFeedback,
            inputs: plant.inputs(),
            terms: vec![FeedbackTerm::Affine { gain, offset }],
            shaped: Some(hs.clone()),
        },
        annihilator: gperp,
        matching_matrix: mat,
        matching_residual: residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::energy_casimir_candidate;
    use crate::model::{validate_phs, SignalSpec};
    use nalgebra::dvector;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn mass(r: [f64; 2], qdiag: [f64; 2]) -> PhsModel<f64> {
        PhsModel::constant(
            names(&["q", "p"]),
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            DMatrix::from_diagonal(&dvector![r[0], r[1]]),
            DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
            Hamiltonian::pure_quadratic(DMatrix::from_diagonal(&dvector![qdiag[0], qdiag[1]]))
                .unwrap(),
        )
        .unwrap()
    }

    fn integrator(hc: f64) -> PhsModel<f64> {
        PhsModel::constant(
            names(&["xi"]),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, 1.0),
            Hamiltonian::pure_quadratic(DMatrix::from_element(1, 1, hc)).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn oscillator_plus_integrator_blocks() {
        let cl = negative_feedback(&mass([0.0, 0.0], [1.0, 1.0]), &integrator(1.0)).unwrap();
        let (j, r, g) = cl.model.constant_matrices().unwrap();
        let expect =
            DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, -1.0, 0.0, -1.0, 0.0, 1.0, 0.0]);
        assert_eq!(j, expect);
        assert_eq!(r, DMatrix::zeros(3, 3));
        assert_eq!(g.shape(), (3, 2));
        assert!(cl.model.validate().passed());
        let x = dvector![0.3, -1.1, 0.7];
        let h = cl.model.hamiltonian().value(&x).unwrap();
        assert!((h - 0.5 * (0.09 + 1.21 + 0.49)).abs() < 1e-15);
    }

    #[test]
    fn jint_reproduces_negative_feedback() {
        let p = mass([0.0, 0.2], [2.0, 1.0]);
        let c = integrator(3.0);
        let neg = negative_feedback(&p, &c).unwrap();
        let jint = MatrixField::constant(DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]));
        let other = interconnect_jint(&p, &c, &jint).unwrap();
        assert_eq!(
            neg.model.j().as_constant().unwrap(),
            other.model.j().as_constant().unwrap()
        );
        let zero = interconnect_jint(&p, &c, &MatrixField::zeros(2, 2)).unwrap();
        let j0 = zero.model.j().as_constant().unwrap();
        assert_eq!(j0[(1, 2)], 0.0);
        assert_eq!(j0[(2, 1)], 0.0);
        let bad = MatrixField::constant(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        assert!(interconnect_jint(&p, &c, &bad).is_err());
    }

    #[test]
    fn decoupled_controller_leaves_plant_unchanged() {
        let p = mass([0.0, 0.1], [1.0, 1.0]);
        let c = PhsModel::constant(
            names(&["xi"]),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
            Hamiltonian::pure_quadratic(DMatrix::zeros(1, 1)).unwrap(),
        )
        .unwrap();
        let cl = negative_feedback(&p, &c).unwrap();
        let a = simulate(
            &p,
            &SignalSpec::Zero(1),
            &dvector![1.0, 0.0],
            2.0,
            0.01,
            Method::Rk4,
        )
        .unwrap();
        let b = simulate(
            &cl.model,
            &SignalSpec::Zero(2),
            &dvector![1.0, 0.0, 0.0],
            2.0,
            0.01,
            Method::Rk4,
        )
        .unwrap();
        let xa = a.last_state();
        let xb = b.last_state();
        assert!((xa - xb.rows(0, 2)).amax() < 1e-15);
    }

    #[test]
    fn casimir_search_and_obstacle() {
        let r = 0.3;
        let found =
            closedloop_casimir_search(&mass([0.0, r], [1.0, 1.0]), &integrator(1.0)).unwrap();
        assert_eq!(found.casimirs.len(), 1);
        let c = &found.casimirs[0];
        assert!((&c.f_row - dvector![1.0, 0.0]).amax() < 1e-12);
        assert!(c.j_residual < 1e-12 && c.r_residual < 1e-12);
        assert!(!found.obstacle.dissipation_obstacle);

        let blocked =
            closedloop_casimir_search(&mass([r, 0.0], [1.0, 1.0]), &integrator(1.0)).unwrap();
        assert!(blocked.casimirs.is_empty());
        assert!(blocked.obstacle.dissipation_obstacle);
        assert!((blocked.obstacle.r_residual - r).abs() < 1e-12);

        let free =
            closedloop_casimir_search(&mass([0.0, 0.0], [1.0, 1.0]), &integrator(1.0)).unwrap();
        assert_eq!(free.casimirs.len(), 1);
        assert!(!free.obstacle.dissipation_obstacle);
    }

    #[test]
    fn proportional_control_from_casimir() {
        let plant = mass([0.0, 0.0], [0.0, 1.0]);
        let ctrl = integrator(1.0);
        let q_star = 0.7;
        let f = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let law = reduce_to_state_feedback(&plant, &ctrl, &f, &dvector![-q_star]).unwrap();
        let (k, c) = law.as_affine(2).unwrap();
        assert_eq!(k, DMatrix::from_row_slice(1, 2, &[-1.0, 0.0]));
        assert!((c[0] - q_star).abs() < 1e-15);
        let hs = law.shaped.as_ref().unwrap();
        let x = dvector![0.2, -0.4];
        let expect = 0.5 * 0.16 + 0.5 * (0.2 - q_star) * (0.2 - q_star);
        assert!((hs.value(&x).unwrap() - expect).abs() < 1e-15);

        let zero =
            reduce_to_state_feedback(&plant, &integrator(0.0), &f, &dvector![-q_star]).unwrap();
        assert_eq!(zero.eval(&x).unwrap(), dvector![0.0]);

        let bad = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        assert!(reduce_to_state_feedback(&plant, &ctrl, &bad, &dvector![0.0]).is_err());
    }

    #[test]
    fn pd_control_by_damping_injection() {
        let plant = mass([0.0, 0.0], [0.0, 1.0]);
        let q_star = 0.7;
        let f = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let alpha =
            reduce_to_state_feedback(&plant, &integrator(1.0), &f, &dvector![-q_star]).unwrap();
        let shaped = alpha.shaped_model(&plant).unwrap();
        let phi = Expr::parse("z0", &["z0"]).unwrap();
        let target = dvector![q_star, 0.0];
        let (v, cert) = energy_casimir_candidate(&shaped, &[], &phi, &target).unwrap();
        let damp = damping_injection(&shaped, &v, &cert, 1.0).unwrap();
        assert_eq!(damp.eval(&dvector![0.1, 0.5]).unwrap(), dvector![-0.5]);
        let law = alpha.plus(damp).unwrap();
        let (audit, _) =
            convergence_audit(&plant, &law, &v, &dvector![0.0, 0.0], 30.0, 0.01).unwrap();
        assert!(audit.converged, "{audit:?}");
    }

    #[test]
    fn ida_stiffness_shaping() {
        let plant = mass([0.0, 0.0], [1.0, 1.0]);
        let (j, r, _) = plant.constant_matrices().unwrap();
        let kd = 3.0;
        let hs = Hamiltonian::pure_quadratic(DMatrix::from_diagonal(&dvector![kd, 1.0])).unwrap();
        let ida = ida_pbc_linear(&plant, &j, &r, &hs).unwrap();
        assert!(ida.matching_residual <= 1e-12);
        let (k, c) = ida.law.as_affine(2).unwrap();
        assert!((k[(0, 0)] - (1.0 - kd)).abs() < 1e-12);
        assert!(k[(0, 1)].abs() < 1e-12);
        assert!(c[0].abs() < 1e-15);

        let same = ida_pbc_linear(&plant, &j, &r, plant.hamiltonian()).unwrap();
        assert!(same.law.eval(&dvector![0.4, 0.9]).unwrap()[0].abs() < 1e-14);

        let pushed = PhsModel::constant(
            names(&["q", "p"]),
            j.clone(),
            r.clone(),
            DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            plant.hamiltonian().clone(),
        )
        .unwrap();
        assert!(matches!(
            ida_pbc_linear(&pushed, &j, &r, &hs),
            Err(Error::Structure { .. })
        ));
    }

    #[test]
    fn closed_loop_validates_on_random_pairs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let mut rnd =
                |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
            let a = rnd(3, 3);
            let j = &a - a.transpose();
            let b = rnd(3, 3);
            let r = &b * b.transpose();
            let g = rnd(3, 2);
            let jc = {
                let t = rnd(2, 2);
                &t - t.transpose()
            };
            let rc = {
                let t = rnd(2, 2);
                &t * t.transpose()
            };
            let gc = rnd(2, 2);
            let p = PhsModel::constant(
                names(&["a", "b", "c"]),
                j,
                r,
                g,
                Hamiltonian::pure_quadratic(DMatrix::identity(3, 3)).unwrap(),
            )
            .unwrap();
            let c = PhsModel::constant(
                names(&["a", "d"]),
                jc,
                rc,
                gc,
                Hamiltonian::pure_quadratic(DMatrix::identity(2, 2)).unwrap(),
            )
            .unwrap();
            let cl = negative_feedback(&p, &c).unwrap();
            assert_eq!(cl.model.names()[0], "a_1");
            assert_eq!(cl.model.names()[3], "a_2");
            let rep = validate_phs(&cl.model, &default_samples(5, 3));
            assert!(rep.passed(), "{rep:?}");
        }
    }
}
