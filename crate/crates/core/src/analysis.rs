//! Steady states, shifted passivity, linear Casimirs and Energy-Casimir candidates.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::linalg;
use crate::model::{
    default_samples, fd_hessian, Hamiltonian, PhsModel, ShiftedHamiltonian, DEFAULT_SEED,
};
use crate::report::{all_passed, Check};
use crate::simulate::{Method, Trajectory};
use crate::Scalar;

/// Residual bound for certified Casimir covectors.
pub const CASIMIR_TOL: f64 = 1e-10;
/// Residual bound for [`verify_casimir`].
pub const CASIMIR_VERIFY_TOL: f64 = 1e-9;

/// A constant-input equilibrium `0 = [J − R]∇H(x̄) + Gū`.
#[derive(Debug, Clone)]
pub struct SteadyState<T> {
    pub u: DVector<T>,
    pub x: DVector<T>,
    pub y: DVector<T>,
    /// `‖[J − R]∇H(x̄) + Gū‖`.
    pub residual: T,
}

fn constant_jrg<T: Scalar>(model: &PhsModel<T>) -> Result<(DMatrix<T>, DMatrix<T>, DMatrix<T>)> {
    if model.rayleigh().is_some() {
        return Err(Error::Precondition(
            "operation requires linear damping (no Rayleigh term)".into(),
        ));
    }
    model
        .constant_matrices()
        .ok_or(Error::NotConstant("J, R and G"))
}

/// Steady state for the constant input `u_bar`.
///
/// Quadratic Hamiltonians are solved in closed form (minimum-norm solution);
/// expression Hamiltonians by Gauss-Newton from `x_guess`.
pub fn steady_state<T: Scalar>(
    model: &PhsModel<T>,
    u_bar: &DVector<T>,
    x_guess: &DVector<T>,
) -> Result<SteadyState<T>> {
    let (j, r, g) = constant_jrg(model)?;
    if u_bar.len() != model.inputs() || x_guess.len() != model.dim() {
        return Err(Error::dim(
            "steady-state input or guess has the wrong length",
        ));
    }
    let a = &j - &r;
    let gu = &g * u_bar;
    let tol = T::tol(1e-10) * (T::one() + gu.norm());
    let h = model.hamiltonian();
    let residual_at = |x: &DVector<T>| -> Result<T> { Ok((&a * h.gradient(x)? + &gu).norm()) };

    let x = if let Some((q, b, _)) = h.to_quadratic() {
        let aq = &a * &q;
        let rhs = -(&gu + &a * &b);
        linalg::solve_min_norm(&aq, &rhs)
    } else {
        let mut x = x_guess.clone();
        let mut converged = false;
        for _ in 0..100 {
            let f = &a * h.gradient(&x)? + &gu;
            if f.norm() <= T::tol(1e-13) * (T::one() + gu.norm()) {
                converged = true;
                break;
            }
            let jac = &a * h.hessian(&x)?;
            let step = linalg::solve_min_norm(&jac, &(-f));
            x += &step;
            if step.amax() <= T::tol(1e-15) * (T::one() + x.amax()) {
                converged = residual_at(&x)? <= tol;
                break;
            }
        }
        if !converged && residual_at(&x)? > tol {
            return Err(Error::NonConvergence {
                t: 0.0,
                iterations: 100,
            });
        }
        x
    };
    let residual = residual_at(&x)?;
    if residual > tol {
        return Err(Error::Singular(format!(
            "no steady state for this input: residual {residual} of the linear solve"
        )));
    }
    let y = g.transpose() * h.gradient(&x)?;
    Ok(SteadyState {
        u: u_bar.clone(),
        x,
        y,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convexity {
    PositiveDefinite,
    PositiveSemidefinite,
    Indefinite,
}

/// `ẋ = [J − R]∇Ĥ(x) + G(u − ū)` about a steady state.
#[derive(Debug, Clone)]
pub struct ShiftedSystem<T> {
    pub hamiltonian: ShiftedHamiltonian<T>,
    /// The same dynamics with Hamiltonian `Ĥ` and input `v = u − ū`.
    pub model: PhsModel<T>,
    pub steady: SteadyState<T>,
    pub hessian: DMatrix<T>,
    pub hessian_min_eigenvalue: T,
    pub convexity: Convexity,
    /// Worst `|f(x, u) − f̂(x, u − ū)|` over the default samples.
    pub field_identity_residual: T,
}

pub fn shifted_system<T: Scalar>(
    model: &PhsModel<T>,
    steady: &SteadyState<T>,
) -> Result<ShiftedSystem<T>> {
    constant_jrg(model)?;
    let sh = ShiftedHamiltonian::new(model.hamiltonian().clone(), steady.x.clone())?;
    let shifted = model.with_hamiltonian(sh.clone().into_hamiltonian())?;
    let hess = model.hamiltonian().hessian(&steady.x)?;
    let min_eig = linalg::min_sym_eigenvalue(&hess);
    let eps = T::tol(1e-10);
    let convexity = if min_eig > eps {
        Convexity::PositiveDefinite
    } else if min_eig >= -eps {
        Convexity::PositiveSemidefinite
    } else {
        Convexity::Indefinite
    };
    let mut worst = T::zero();
    let ones = DVector::from_element(model.inputs(), T::one());
    for (i, s) in default_samples::<T>(model.dim(), DEFAULT_SEED)
        .iter()
        .enumerate()
    {
        let x = &steady.x + s;
        let u = if i % 2 == 0 {
            steady.u.clone()
        } else {
            &steady.u + &ones * s.get(0).copied().unwrap_or(T::zero())
        };
        let (f, _) = model.vector_field(&x, &u)?;
        let (fs, _) = shifted.vector_field(&x, &(&u - &steady.u))?;
        worst = worst.max((f - fs).amax());
    }
    Ok(ShiftedSystem {
        hamiltonian: sh,
        model: shifted,
        steady: steady.clone(),
        hessian: hess,
        hessian_min_eigenvalue: min_eig,
        convexity,
        field_identity_residual: worst,
    })
}

/// Linear Casimirs `C(x) = cᵀx` with certification residuals.
#[derive(Debug, Clone)]
pub struct CasimirBasis<T> {
    pub vectors: Vec<DVector<T>>,
    /// `(‖Jc‖, ‖Rc‖)` per vector.
    pub residuals: Vec<(T, T)>,
}

impl<T: Scalar> CasimirBasis<T> {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Columns are the basis covectors.
    pub fn matrix(&self, n: usize) -> DMatrix<T> {
        if self.vectors.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            DMatrix::from_columns(&self.vectors)
        }
    }

    /// Whether `c` lies in the span of the basis.
    pub fn contains(&self, c: &DVector<T>) -> bool {
        let b = self.matrix(c.len());
        let proj = &b * (b.transpose() * c);
        (c - proj).norm() <= T::tol(1e-10) * (T::one() + c.norm())
    }

    /// The Casimirs as expressions over `names`.
    pub fn exprs(&self, names: &[String]) -> Vec<Expr> {
        self.vectors.iter().map(|c| linear_expr(c, names)).collect()
    }

    pub fn max_residual(&self) -> T {
        self.residuals
            .iter()
            .fold(T::zero(), |m, (a, b)| m.max(*a).max(*b))
    }
}

/// `cᵀx` as an expression.
pub fn linear_expr<T: Scalar>(c: &DVector<T>, names: &[String]) -> Expr {
    let mut e = Expr::constant(0.0, names);
    for (i, ci) in c.iter().enumerate() {
        let v = ci.as_f64();
        if v != 0.0 {
            e = e
                .try_add(&Expr::variable(i, names).scaled(v))
                .expect("shared variable list");
        }
    }
    e
}

fn damping_rows<T: Scalar>(model: &PhsModel<T>) -> Result<DMatrix<T>> {
    match model.rayleigh() {
        Some(ray) => Ok(ray
            .gr
            .as_constant()
            .ok_or(Error::NotConstant("G_R"))?
            .transpose()),
        None => model.r().as_constant().ok_or(Error::NotConstant("R")),
    }
}

/// Orthonormal basis of `ker J ∩ ker R` (first nonzero entry of each vector positive).
pub fn linear_casimirs<T: Scalar>(model: &PhsModel<T>) -> Result<CasimirBasis<T>> {
    let j = model.j().as_constant().ok_or(Error::NotConstant("J"))?;
    let r = damping_rows(model)?;
    let n = model.dim();
    let mut stacked = DMatrix::zeros(j.nrows() + r.nrows(), n);
    stacked.view_mut((0, 0), j.shape()).copy_from(&j);
    stacked.view_mut((j.nrows(), 0), r.shape()).copy_from(&r);
    let basis = linalg::canonical_signs(linalg::null_space(&stacked));
    let vectors: Vec<DVector<T>> = basis.column_iter().map(|c| c.into_owned()).collect();
    let residuals = vectors
        .iter()
        .map(|c| ((&j * c).norm(), (&r * c).norm()))
        .collect();
    Ok(CasimirBasis { vectors, residuals })
}

#[derive(Debug, Clone, Serialize)]
pub struct CasimirReport {
    /// `max ‖J(x)∇C(x)‖` over the samples.
    pub j_residual: f64,
    /// `max ‖R(x)∇C(x)‖` (or `‖G_Rᵀ∇C‖` with Rayleigh damping).
    pub r_residual: f64,
    /// `|ΔC − ∫∇CᵀG u dt|` along the supplied trajectory.
    pub rate_residual: Option<f64>,
    pub checks: Vec<Check>,
}

impl CasimirReport {
    pub fn passed(&self) -> bool {
        all_passed(&self.checks)
    }
}

fn casimir_rate<T: Scalar>(
    model: &PhsModel<T>,
    c: &Expr,
    x: &DVector<T>,
    u: &DVector<T>,
) -> Result<T> {
    let (_, dc) = c.eval_grad(x.as_slice())?;
    Ok(dc.dot(&(model.g().eval(x.as_slice())? * u)))
}

/// Checks `J∇C = 0` and `R∇C = 0` at `samples`, and optionally the rate
/// `Ċ = ∇CᵀG u` along `traj`.
pub fn verify_casimir<T: Scalar>(
    model: &PhsModel<T>,
    c: &Expr,
    samples: &[DVector<T>],
    traj: Option<&Trajectory<T>>,
) -> Result<CasimirReport> {
    if c.vars() != model.names() {
        return Err(Error::dim("Casimir candidate is not over the state names"));
    }
    let mut jr = 0.0f64;
    let mut rr = 0.0f64;
    for x in samples {
        let xs = x.as_slice();
        let (_, dc) = c.eval_grad(xs)?;
        jr = jr.max((model.j().eval(xs)? * &dc).norm().as_f64());
        let r = match model.rayleigh() {
            Some(ray) => ray.gr.eval(xs)?.transpose() * &dc,
            None => model.r().eval(xs)? * &dc,
        };
        rr = rr.max(r.norm().as_f64());
    }
    let rate_residual = match traj {
        None => None,
        Some(tr) => {
            let n = tr.steps();
            let h = tr.h;
            let half = T::lit(0.5);
            let mut integral = T::zero();
            if tr.method == Method::ImplicitMidpoint && tr.stage_inputs.len() == n {
                for k in 0..n {
                    let xm = (&tr.states[k] + &tr.states[k + 1]) * half;
                    integral += casimir_rate(model, c, &xm, &tr.stage_inputs[k])? * h;
                }
            } else {
                let g = (0..=n)
                    .map(|k| casimir_rate(model, c, &tr.states[k], &tr.inputs[k]))
                    .collect::<Result<Vec<_>>>()?;
                integral = crate::simulate::simpson(&g, h);
            }
            let dc = c.eval(tr.states[n].as_slice())? - c.eval(tr.states[0].as_slice())?;
            Some((dc - integral).abs().as_f64())
        }
    };
    let checks = vec![
        Check::at_most("J grad C = 0", jr, CASIMIR_VERIFY_TOL),
        Check::at_most("R grad C = 0", rr, CASIMIR_VERIFY_TOL),
    ];
    Ok(CasimirReport {
        j_residual: jr,
        r_residual: rr,
        rate_residual,
        checks,
    })
}

/// `V(x) = Φ(H(x), C₁(x), …, C_k(x))`.
#[derive(Debug, Clone)]
pub struct LyapunovCandidate<T> {
    pub phi: Expr,
    pub casimirs: Vec<Expr>,
    pub hamiltonian: Hamiltonian<T>,
    pub target: DVector<T>,
}

impl<T: Scalar> LyapunovCandidate<T> {
    fn z(&self, x: &DVector<T>) -> Result<(Vec<T>, Vec<DVector<T>>)> {
        let (h, dh) = self.hamiltonian.value_grad(x)?;
        let mut z = vec![h];
        let mut dz = vec![dh];
        for c in &self.casimirs {
            let (v, g) = c.eval_grad(x.as_slice())?;
            z.push(v);
            dz.push(g);
        }
        Ok((z, dz))
    }

    pub fn value(&self, x: &DVector<T>) -> Result<T> {
        let (z, _) = self.z(x)?;
        Ok(self.phi.eval(&z)?)
    }

    /// Exact chain-rule gradient `Σ ∂Φ/∂zᵢ ∇zᵢ`.
    pub fn gradient(&self, x: &DVector<T>) -> Result<DVector<T>> {
        let (z, dz) = self.z(x)?;
        let (_, dphi) = self.phi.eval_grad(&z)?;
        let mut g = DVector::zeros(x.len());
        for (w, d) in dphi.iter().zip(&dz) {
            g += d * *w;
        }
        Ok(g)
    }

    /// `∂Φ/∂z₀` at `x`.
    pub fn dphi_dz0(&self, x: &DVector<T>) -> Result<T> {
        let (z, _) = self.z(x)?;
        Ok(self.phi.eval_grad(&z)?.1[0])
    }

    /// `max_k (V(x_{k+1}) − V(x_k))`; errors if `∂Φ/∂z₀ ≤ 0` at any sample.
    pub fn max_increase(&self, traj: &Trajectory<T>) -> Result<T> {
        let mut worst = T::lit(f64::NEG_INFINITY);
        let mut prev: Option<T> = None;
        for x in &traj.states {
            if self.dphi_dz0(x)? <= T::zero() {
                return Err(Error::Precondition(format!(
                    "dPhi/dz0 <= 0 at audited state {x}"
                )));
            }
            let v = self.value(x)?;
            if let Some(p) = prev {
                worst = worst.max(v - p);
            }
            prev = Some(v);
        }
        Ok(worst)
    }
}

/// Numerical certificate that `V` has a strict minimum at the target.
#[derive(Debug, Clone, Serialize)]
pub struct MinimumReport {
    pub dphi_dz0: f64,
    /// `‖∇V(x*)‖` by central differences (`h = 1e-6`).
    pub gradient_norm: f64,
    pub hessian_min_eigenvalue: f64,
    pub accepted: bool,
    pub checks: Vec<Check>,
}

/// Minimum-certification thresholds.
pub const MIN_GRADIENT_TOL: f64 = 1e-6;
pub const MIN_HESSIAN_EIG: f64 = 1e-8;

/// Builds `V = Φ(H, C₁, …)` and certifies a strict minimum at `x_star`.
///
/// `phi` must be over `k + 1` variables (conventionally `z0..zk`), `z0 = H`.
pub fn energy_casimir_candidate<T: Scalar>(
    model: &PhsModel<T>,
    casimirs: &[Expr],
    phi: &Expr,
    x_star: &DVector<T>,
) -> Result<(LyapunovCandidate<T>, MinimumReport)> {
    if phi.vars().len() != casimirs.len() + 1 {
        return Err(Error::dim(format!(
            "Phi has {} arguments for {} Casimirs",
            phi.vars().len(),
            casimirs.len()
        )));
    }
    if x_star.len() != model.dim() {
        return Err(Error::dim("target has the wrong length"));
    }
    let samples = default_samples::<T>(model.dim(), DEFAULT_SEED);
    for c in casimirs {
        let rep = verify_casimir(model, c, &samples, None)?;
        if !rep.passed() {
            return Err(Error::Precondition(format!(
                "`{c}` is not a Casimir (residuals {:e}, {:e})",
                rep.j_residual, rep.r_residual
            )));
        }
    }
    let cand = LyapunovCandidate {
        phi: phi.clone(),
        casimirs: casimirs.to_vec(),
        hamiltonian: model.hamiltonian().clone(),
        target: x_star.clone(),
    };
    let d0 = cand.dphi_dz0(x_star)?;
    if d0 <= T::zero() {
        return Err(Error::Precondition(format!(
            "dPhi/dz0 = {d0} at the target; it must be strictly positive"
        )));
    }
    let n = x_star.len();
    let mut grad = DVector::zeros(n);
    for i in 0..n {
        let h = T::lit(1e-6);
        let mut xp = x_star.clone();
        let mut xm = x_star.clone();
        xp[i] += h;
        xm[i] -= h;
        grad[i] = (cand.value(&xp)? - cand.value(&xm)?) / (h + h);
    }
    let hess = fd_hessian(x_star, |x| cand.gradient(x))?;
    let min_eig = if n == 0 {
        T::zero()
    } else {
        linalg::min_sym_eigenvalue(&hess)
    };
    let gn = grad.norm().as_f64();
    let checks = vec![
        Check::at_most("gradient at target", gn, MIN_GRADIENT_TOL),
        Check {
            name: "Hessian positive definite".into(),
            passed: min_eig.as_f64() >= MIN_HESSIAN_EIG,
            value: min_eig.as_f64(),
            tolerance: MIN_HESSIAN_EIG,
            detail: None,
        },
    ];
    let report = MinimumReport {
        dphi_dz0: d0.as_f64(),
        gradient_norm: gn,
        hessian_min_eigenvalue: min_eig.as_f64(),
        accepted: all_passed(&checks),
        checks,
    };
    Ok((cand, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{numbered_names, SignalSpec};
    use crate::simulate::simulate_phs;
    use nalgebra::dvector;

    fn oscillator(r: &[f64; 2]) -> PhsModel<f64> {
        PhsModel::constant(
            vec!["q".into(), "p".into()],
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            DMatrix::from_diagonal(&dvector![r[0], r[1]]),
            DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
            Hamiltonian::pure_quadratic(DMatrix::identity(2, 2)).unwrap(),
        )
        .unwrap()
    }

    fn three_state() -> PhsModel<f64> {
        let q = DMatrix::from_diagonal(&dvector![1.0, 1.0, 0.0]);
        PhsModel::constant(
            numbered_names("x", 3),
            DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
            DMatrix::zeros(3, 3),
            DMatrix::zeros(3, 1),
            Hamiltonian::pure_quadratic(q).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn oscillator_steady_state() {
        let m = oscillator(&[0.0, 0.1]);
        let s = steady_state(&m, &dvector![1.0], &dvector![0.0, 0.0]).unwrap();
        assert!((&s.x - dvector![1.0, 0.0]).amax() <= 1e-12);
        assert!(s.y[0].abs() <= 1e-12);
        let s0 = steady_state(&m, &dvector![0.0], &dvector![0.3, 0.3]).unwrap();
        assert_eq!(s0.x, dvector![0.0, 0.0]);
    }

    #[test]
    fn zero_map_has_no_steady_state() {
        let m = PhsModel::constant(
            vec!["q".into(), "p".into()],
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 2),
            DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
            Hamiltonian::pure_quadratic(DMatrix::identity(2, 2)).unwrap(),
        )
        .unwrap();
        let r = steady_state(&m, &dvector![1.0], &dvector![0.0, 0.0]);
        assert!(matches!(r, Err(Error::Singular(_))));
    }

    #[test]
    fn expression_steady_state_by_newton() {
        // Hardening spring: H = q^4/4 + q^2/2 + p^2/2, equilibrium q^3 + q = u.
        let names = vec!["q".to_string(), "p".to_string()];
        let h = Expr::parse("q^4/4+q^2/2+p^2/2", &names).unwrap();
        let m = oscillator(&[0.0, 0.1])
            .with_hamiltonian(Hamiltonian::expression(h))
            .unwrap();
        let s = steady_state(&m, &dvector![2.0], &dvector![0.5, 0.0]).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-10);
        assert!(s.x[1].abs() < 1e-10);
    }

    #[test]
    fn shifted_quadratic_is_bregman() {
        let m = oscillator(&[0.0, 0.1]);
        let s = steady_state(&m, &dvector![1.0], &dvector![0.0, 0.0]).unwrap();
        let sh = shifted_system(&m, &s).unwrap();
        assert_eq!(sh.convexity, Convexity::PositiveDefinite);
        assert!(sh.field_identity_residual <= 1e-14);
        let x = dvector![0.3, -0.4];
        let expect = 0.5 * (&x - &s.x).norm_squared();
        assert!((sh.hamiltonian.value(&x).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn casimir_of_three_state_example() {
        let m = three_state();
        let b = linear_casimirs(&m).unwrap();
        assert_eq!(b.len(), 1);
        assert!((&b.vectors[0] - dvector![0.0, 0.0, 1.0]).amax() < 1e-14);
        assert!(b.max_residual() <= 1e-14);
        let c = Expr::parse("x3", m.names()).unwrap();
        let samples = default_samples(3, 0);
        assert!(verify_casimir(&m, &c, &samples, None).unwrap().passed());
        let k = Expr::parse("2", m.names()).unwrap();
        assert!(verify_casimir(&m, &k, &samples, None).unwrap().passed());
    }

    #[test]
    fn invertible_j_has_no_casimir() {
        assert!(linear_casimirs(&oscillator(&[0.0, 0.0]))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn position_is_not_a_casimir() {
        let m = oscillator(&[0.0, 0.0]);
        let c = Expr::parse("q", m.names()).unwrap();
        let rep = verify_casimir(&m, &c, &default_samples(2, 0), None).unwrap();
        assert!(!rep.passed());
        assert!((rep.j_residual - 1.0).abs() < 1e-15);
    }

    #[test]
    fn casimir_rate_along_driven_run() {
        // x3 driven directly: C = x3 changes by ∫u dt.
        let base = three_state();
        let m = PhsModel::new(
            base.names().to_vec(),
            base.j().clone(),
            base.r().clone(),
            DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]).into(),
            base.hamiltonian().clone(),
        )
        .unwrap();
        let c = Expr::parse("x3", m.names()).unwrap();
        let u = SignalSpec::expressions(&["cos(t)"]).unwrap();
        let tr = simulate_phs(
            &m,
            &u,
            &dvector![1.0, 0.0, 0.0],
            2.0,
            0.01,
            Method::ImplicitMidpoint,
        )
        .unwrap();
        let rep = verify_casimir(&m, &c, &default_samples(3, 0), Some(&tr)).unwrap();
        assert!(rep.rate_residual.unwrap() < 1e-10);
    }

    #[test]
    fn energy_casimir_shaping() {
        let m = three_state();
        let names = m.names().to_vec();
        let c = Expr::parse("x3", &names).unwrap();
        let phi = Expr::parse("z0+0.5*(z1-1)^2", &["z0", "z1"]).unwrap();
        let (cand, rep) =
            energy_casimir_candidate(&m, &[c], &phi, &dvector![0.0, 0.0, 1.0]).unwrap();
        assert!(rep.accepted, "{rep:?}");
        assert!((rep.hessian_min_eigenvalue - 1.0).abs() < 1e-6);
        assert!(cand.value(&dvector![0.0, 0.0, 1.0]).unwrap().abs() < 1e-15);

        // H alone is flat along x3
        let phi0 = Expr::parse("z0", &["z0"]).unwrap();
        let (_, rep0) = energy_casimir_candidate(&m, &[], &phi0, &dvector![0.0, 0.0, 1.0]).unwrap();
        assert!(!rep0.accepted);

        let neg = Expr::parse("-z0", &["z0"]).unwrap();
        assert!(matches!(
            energy_casimir_candidate(&m, &[], &neg, &dvector![0.0, 0.0, 0.0]),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn pure_energy_candidate_on_oscillator() {
        let m = oscillator(&[0.0, 0.1]);
        let phi = Expr::parse("z0", &["z0"]).unwrap();
        let (cand, rep) = energy_casimir_candidate(&m, &[], &phi, &dvector![0.0, 0.0]).unwrap();
        assert!(rep.accepted);
        let tr = simulate_phs(
            &m,
            &SignalSpec::Zero(1),
            &dvector![1.0, 0.0],
            5.0,
            0.01,
            Method::ImplicitMidpoint,
        )
        .unwrap();
        assert!(cand.max_increase(&tr).unwrap() <= 1e-9);
    }
}
