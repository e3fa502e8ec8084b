//! Fixed-step integration (classical RK4, implicit midpoint) with energy audits.

mod audit;
mod io;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ExtendedPhsModel, PhsModel, SignalSpec};
use crate::Scalar;

pub use audit::{energy_audit, simpson, AuditReport, PASSIVITY_TOL};
pub use io::{read_csv, write_csv};

/// Newton tolerance for the implicit midpoint step.
pub const NEWTON_TOL: f64 = 1e-12;
/// Newton iteration cap for the implicit midpoint step.
pub const NEWTON_MAX_ITER: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Rk4,
    ImplicitMidpoint,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Rk4 => "rk4",
            Method::ImplicitMidpoint => "implicit-midpoint",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "rk4" => Ok(Method::Rk4),
            "midpoint" | "implicit-midpoint" => Ok(Method::ImplicitMidpoint),
            _ => Err(format!("unknown method `{s}` (expected rk4 or midpoint)")),
        }
    }
}

/// An explicit input-state-output system with a stored energy.
pub trait Dynamics<T: Scalar> {
    fn names(&self) -> &[String];
    fn inputs(&self) -> usize;
    fn field(&self, x: &DVector<T>, u: &DVector<T>) -> Result<DVector<T>>;
    /// The output recorded in trajectories.
    fn output(&self, x: &DVector<T>, u: &DVector<T>) -> Result<DVector<T>>;
    fn energy(&self, x: &DVector<T>) -> Result<T>;
    fn energy_gradient(&self, x: &DVector<T>) -> Result<DVector<T>>;
    /// The output conjugate to `u` in the power balance `Ḣ = uᵀy − d`.
    fn passive_output(&self, x: &DVector<T>, u: &DVector<T>) -> Result<DVector<T>> {
        self.output(x, u)
    }
    /// Dissipated power `d ≥ 0` in `Ḣ = uᵀy − d`.
    fn dissipation(&self, x: &DVector<T>, u: &DVector<T>) -> Result<T>;
    /// `ẏ` for systems whose recorded output is a state function.
    fn output_rate(&self, _x: &DVector<T>, _u: &DVector<T>) -> Result<Option<DVector<T>>> {
        Ok(None)
    }

    fn dim(&self) -> usize {
        self.names().len()
    }
}

impl<T: Scalar> Dynamics<T> for PhsModel<T> {
    fn names(&self) -> &[String] {
        PhsModel::names(self)
    }

    fn inputs(&self) -> usize {
        PhsModel::inputs(self)
    }

    fn field(&self, x: &DVector<T>, u: &DVector<T>) -> Result<DVector<T>> {
        Ok(self.vector_field(x, u)?.0)
    }

    fn output(&self, x: &DVector<T>, _u: &DVector<T>) -> Result<DVector<T>> {
        PhsModel::output(self, x)
    }

    fn energy(&self, x: &DVector<T>) -> Result<T> {
        self.hamiltonian().value(x)
    }

    fn energy_gradient(&self, x: &DVector<T>) -> Result<DVector<T>> {
        self.hamiltonian().gradient(x)
    }

    fn dissipation(&self, x: &DVector<T>, _u: &DVector<T>) -> Result<T> {
        self.dissipation_rate(x)
    }
}

impl<T: Scalar> Dynamics<T> for ExtendedPhsModel<T> {
    fn names(&self) -> &[String] {
        ExtendedPhsModel::names(self)
    }

    fn inputs(&self) -> usize {
        ExtendedPhsModel::inputs(self)
    }

    fn field(&self, x: &DVector<T>, u: &DVector<T>) -> Result<DVector<T>> {
        Ok(self.base().vector_field(x, u)?.0)
    }

    fn output(&self, x: &DVector<T>, u: &DVector<T>) -> Result<DVector<T>> {
        ExtendedPhsModel::output(self, x, u)
    }

    fn energy(&self, x: &DVector<T>) -> Result<T> {
        self.base().hamiltonian().value(x)
    }

    fn energy_gradient(&self, x: &DVector<T>) -> Result<DVector<T>> {
        self.base().hamiltonian().gradient(x)
    }

    fn dissipation(&self, x: &DVector<T>, u: &DVector<T>) -> Result<T> {
        let n = self.dim();
        let mut z = DVector::zeros(n + u.len());
        z.rows_mut(0, n).copy_from(&self.energy_gradient(x)?);
        z.rows_mut(n, u.len()).copy_from(u);
        let b = self.dissipation_block(x.as_slice())?;
        Ok(z.dot(&(b * &z)))
    }
}

/// Input as a function of time and state (open loop or feedback).
pub trait InputLaw<T: Scalar> {
    fn dim(&self) -> usize;
    fn input(&self, t: T, x: &DVector<T>) -> Result<DVector<T>>;
}

impl<T: Scalar> InputLaw<T> for SignalSpec<T> {
    fn dim(&self) -> usize {
        SignalSpec::dim(self)
    }

    fn input(&self, t: T, _x: &DVector<T>) -> Result<DVector<T>> {
        self.eval(t)
    }
}

/// An [`InputLaw`] from a closure `(t, x) ↦ u`.
pub struct FnInput<F> {
    dim: usize,
    f: F,
}

impl<F> FnInput<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnInput { dim, f }
    }
}

impl<T: Scalar, F> InputLaw<T> for FnInput<F>
where
    F: Fn(T, &DVector<T>) -> Result<DVector<T>>,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn input(&self, t: T, x: &DVector<T>) -> Result<DVector<T>> {
        (self.f)(t, x)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolverStats {
    pub newton_tol: f64,
    pub newton_max_iterations: usize,
    pub total_iterations: usize,
    pub max_step_iterations: usize,
}

/// Samples on the grid `t_k = t0 + k·h`, `k = 0..=N`.
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub t0: T,
    pub h: T,
    pub method: Method,
    pub names: Vec<String>,
    pub states: Vec<DVector<T>>,
    pub inputs: Vec<DVector<T>>,
    pub outputs: Vec<DVector<T>>,
    pub energy: Vec<T>,
    /// Midpoint inputs `u(t_k + h/2, x_{k+1/2})`, one per step (midpoint runs only).
    pub stage_inputs: Vec<DVector<T>>,
    /// `ẏ_k` for systems that define it.
    pub output_rates: Vec<DVector<T>>,
    pub stats: SolverStats,
}

impl<T: Scalar> Trajectory<T> {
    /// Number of steps `N`.
    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn time(&self, k: usize) -> T {
        self.t0 + self.h * T::lit(k as f64)
    }

    pub fn times(&self) -> Vec<T> {
        (0..self.states.len()).map(|k| self.time(k)).collect()
    }

    pub fn last_state(&self) -> &DVector<T> {
        self.states
            .last()
            .expect("trajectory has at least one sample")
    }

    /// `max_k |H_k − H_0|`.
    pub fn energy_drift(&self) -> T {
        let h0 = self.energy[0];
        self.energy
            .iter()
            .fold(T::zero(), |m, h| m.max((*h - h0).abs()))
    }

    pub(crate) fn check_consistent(&self) -> Result<()> {
        let n = self.states.len();
        if n == 0 || self.inputs.len() != n || self.outputs.len() != n || self.energy.len() != n {
            return Err(Error::Trajectory("sample arrays differ in length".into()));
        }
        if !(self.h > T::zero()) {
            return Err(Error::Trajectory("non-positive step".into()));
        }
        Ok(())
    }
}

fn blow_up(t: f64) -> impl Fn(Error) -> Error {
    move |e| match e {
        e @ (Error::NonConvergence { .. } | Error::Dimension(_)) => e,
        e => Error::BlowUp {
            t,
            source: Box::new(e),
        },
    }
}

fn step_rk4<T: Scalar, D: Dynamics<T> + ?Sized, U: InputLaw<T> + ?Sized>(
    sys: &D,
    law: &U,
    t: T,
    x: &DVector<T>,
    h: T,
) -> Result<DVector<T>> {
    let half = T::lit(0.5);
    let f = |t: T, x: &DVector<T>| -> Result<DVector<T>> { sys.field(x, &law.input(t, x)?) };
    let k1 = f(t, x)?;
    let k2 = f(t + half * h, &(x + &k1 * (half * h)))?;
    let k3 = f(t + half * h, &(x + &k2 * (half * h)))?;
    let k4 = f(t + h, &(x + &k3 * h))?;
    let two = T::lit(2.0);
    Ok(x + (k1 + k2 * two + k3 * two + k4) * (h / T::lit(6.0)))
}

/// One implicit midpoint step; returns `(x_{k+1}, u_mid, iterations)`.
fn step_midpoint<T: Scalar, D: Dynamics<T> + ?Sized, U: InputLaw<T> + ?Sized>(
    sys: &D,
    law: &U,
    t: T,
    x: &DVector<T>,
    h: T,
) -> Result<(DVector<T>, DVector<T>, usize)> {
    let n = x.len();
    let half = T::lit(0.5);
    let tm = t + half * h;
    let residual = |z: &DVector<T>| -> Result<(DVector<T>, DVector<T>)> {
        let xm = (x + z) * half;
        let u = law.input(tm, &xm)?;
        let r = z - x - sys.field(&xm, &u)? * h;
        Ok((r, u))
    };
    let tol = T::tol(NEWTON_TOL);
    let fd = T::lit(1e-7_f64.max(T::EPSILON.sqrt()));
    let mut z = x + sys.field(x, &law.input(t, x)?)? * h;
    for it in 1..=NEWTON_MAX_ITER {
        let (r, _) = residual(&z)?;
        let mut jac = DMatrix::zeros(n, n);
        for i in 0..n {
            let d = fd * (T::one() + z[i].abs());
            let mut zp = z.clone();
            zp[i] += d;
            let (rp, _) = residual(&zp)?;
            jac.set_column(i, &((rp - &r) / d));
        }
        let delta = jac
            .lu()
            .solve(&(-r))
            .ok_or_else(|| Error::Singular("midpoint Newton Jacobian".into()))?;
        z += &delta;
        if delta.amax() <= tol * (T::one() + z.amax()) {
            let (_, u) = residual(&z)?;
            return Ok((z, u, it));
        }
    }
    Err(Error::NonConvergence {
        t: t.as_f64(),
        iterations: NEWTON_MAX_ITER,
    })
}

/// Integrates `sys` under `law` from `x0` over `[0, t_end]` with step `h`.
pub fn simulate<T, D, U>(
    sys: &D,
    law: &U,
    x0: &DVector<T>,
    t_end: T,
    h: T,
    method: Method,
) -> Result<Trajectory<T>>
where
    T: Scalar,
    D: Dynamics<T> + ?Sized,
    U: InputLaw<T> + ?Sized,
{
    if !(h > T::zero()) || !(t_end > T::zero()) {
        return Err(Error::Precondition(format!(
            "step and horizon must be positive (h = {h}, t_end = {t_end})"
        )));
    }
    if x0.len() != sys.dim() || law.dim() != sys.inputs() {
        return Err(Error::dim(format!(
            "x0 of length {} and {} input channels for a system with n={}, m={}",
            x0.len(),
            law.dim(),
            sys.dim(),
            sys.inputs()
        )));
    }
    let steps = (t_end / h).as_f64();
    let steps = (steps - 1e-9 * steps.max(1.0)).ceil().max(1.0) as usize;

    let mut traj = Trajectory {
        t0: T::zero(),
        h,
        method,
        names: sys.names().to_vec(),
        states: Vec::with_capacity(steps + 1),
        inputs: Vec::with_capacity(steps + 1),
        outputs: Vec::with_capacity(steps + 1),
        energy: Vec::with_capacity(steps + 1),
        stage_inputs: Vec::new(),
        output_rates: Vec::new(),
        stats: SolverStats::default(),
    };
    if method == Method::ImplicitMidpoint {
        traj.stats.newton_tol = NEWTON_TOL;
        traj.stats.newton_max_iterations = NEWTON_MAX_ITER;
    }

    let mut x = x0.clone();
    for k in 0..=steps {
        let t = traj.time(k);
        let tf = t.as_f64();
        let sample = || -> Result<_> {
            let u = law.input(t, &x)?;
            let y = sys.output(&x, &u)?;
            let e = sys.energy(&x)?;
            let yd = sys.output_rate(&x, &u)?;
            Ok((u, y, e, yd))
        };
        let (u, y, e, yd) = sample().map_err(blow_up(tf))?;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::BlowUp {
                t: tf,
                source: Box::new(Error::Precondition("state is not finite".into())),
            });
        }
        traj.states.push(x.clone());
        traj.inputs.push(u);
        traj.outputs.push(y);
        traj.energy.push(e);
        if let Some(yd) = yd {
            traj.output_rates.push(yd);
        }
        if k == steps {
            break;
        }
        x = match method {
            Method::Rk4 => step_rk4(sys, law, t, &x, h).map_err(blow_up(tf))?,
            Method::ImplicitMidpoint => {
                let (z, um, it) = step_midpoint(sys, law, t, &x, h).map_err(blow_up(tf))?;
                traj.stage_inputs.push(um);
                traj.stats.total_iterations += it;
                traj.stats.max_step_iterations = traj.stats.max_step_iterations.max(it);
                z
            }
        };
    }
    Ok(traj)
}

/// [`simulate`] for a port-Hamiltonian model under an open-loop signal.
pub fn simulate_phs<T: Scalar>(
    model: &PhsModel<T>,
    u: &SignalSpec<T>,
    x0: &DVector<T>,
    t_end: T,
    h: T,
    method: Method,
) -> Result<Trajectory<T>> {
    simulate(model, u, x0, t_end, h, method)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Hamiltonian;
    use nalgebra::dvector;

    pub(crate) fn oscillator(r2: f64) -> PhsModel<f64> {
        PhsModel::constant(
            vec!["q".into(), "p".into()],
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            DMatrix::from_diagonal(&dvector![0.0, r2]),
            DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
            Hamiltonian::pure_quadratic(DMatrix::identity(2, 2)).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn midpoint_conserves_oscillator_energy() {
        let m = oscillator(0.0);
        let tr = simulate_phs(
            &m,
            &SignalSpec::Zero(1),
            &dvector![1.0, 0.0],
            10.0,
            0.01,
            Method::ImplicitMidpoint,
        )
        .unwrap();
        assert_eq!(tr.steps(), 1000);
        assert!(tr.energy_drift() <= 1e-10);
        assert!(tr.stats.max_step_iterations <= NEWTON_MAX_ITER);
    }

    #[test]
    fn damped_energy_decreases() {
        let m = oscillator(0.1);
        for method in [Method::Rk4, Method::ImplicitMidpoint] {
            let tr = simulate_phs(
                &m,
                &SignalSpec::Zero(1),
                &dvector![1.0, 0.0],
                10.0,
                0.01,
                method,
            )
            .unwrap();
            assert!(tr.energy.windows(2).all(|w| w[1] < w[0]), "{method}");
        }
    }

    #[test]
    fn rejects_bad_step() {
        let m = oscillator(0.0);
        let x0 = dvector![1.0, 0.0];
        for h in [0.0, -0.1] {
            let r = simulate_phs(&m, &SignalSpec::Zero(1), &x0, 1.0, h, Method::Rk4);
            assert!(matches!(r, Err(Error::Precondition(_))));
        }
    }

    #[test]
    fn rk4_matches_exact_rotation() {
        let m = oscillator(0.0);
        let tr = simulate_phs(
            &m,
            &SignalSpec::Zero(1),
            &dvector![1.0, 0.0],
            1.0,
            0.01,
            Method::Rk4,
        )
        .unwrap();
        let x = tr.last_state();
        assert!((x[0] - 1f64.cos()).abs() < 1e-9);
        assert!((x[1] + 1f64.sin()).abs() < 1e-9);
    }

    #[test]
    fn blow_up_reports_time() {
        let names = vec!["x".to_string()];
        let h = Hamiltonian::expression(crate::Expr::parse("sqrt(x)", &["x"]).unwrap());
        let m = PhsModel::constant(
            names,
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, 1.0),
            h,
        )
        .unwrap();
        // ẋ = u = −1 leaves the domain of sqrt at t = 1.
        let u = SignalSpec::Constant(dvector![-1.0]);
        let r = simulate_phs(&m, &u, &dvector![1.0], 5.0, 0.1, Method::Rk4);
        match r {
            Err(Error::BlowUp { t, .. }) => assert!(t > 0.5 && t < 1.5, "{t}"),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }
}
