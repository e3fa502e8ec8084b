use nalgebra::DVector;
use serde::Serialize;

use super::{Dynamics, Method, Trajectory};
use crate::error::{Error, Result};
use crate::report::{all_passed, Check};
use crate::Scalar;

/// Pointwise passivity margin threshold.
pub const PASSIVITY_TOL: f64 = 1e-9;

/// Discrete energy balance and pointwise passivity of a trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub method: Method,
    pub steps: usize,
    pub h: f64,
    /// `H(x_N) − H(x_0) − ∫(uᵀy − d) dt` with the quadrature named in `quadrature`.
    pub balance_residual: f64,
    /// `max_k (Ḣ_k − u_kᵀy_k)`.
    pub passivity_margin: f64,
    /// `max_k |H_k − H_0|`.
    pub energy_drift: f64,
    pub quadrature: &'static str,
    pub checks: Vec<Check>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        all_passed(&self.checks)
    }
}

fn supply_minus_loss<T: Scalar, D: Dynamics<T> + ?Sized>(
    sys: &D,
    x: &DVector<T>,
    u: &DVector<T>,
) -> Result<T> {
    let y = sys.passive_output(x, u)?;
    Ok(u.dot(&y) - sys.dissipation(x, u)?)
}

/// Composite Simpson; a 3/8 panel closes an odd number of intervals.
pub fn simpson<T: Scalar>(g: &[T], h: T) -> T {
    let n = g.len() - 1;
    match n {
        0 => T::zero(),
        1 => (g[0] + g[1]) * h * T::lit(0.5),
        2 => (g[0] + g[1] * T::lit(4.0) + g[2]) * h / T::lit(3.0),
        _ => {
            let (even, tail) = if n.is_multiple_of(2) {
                (n, 0)
            } else {
                (n - 3, 3)
            };
            let mut s = T::zero();
            for i in (0..even).step_by(2) {
                s += g[i] + g[i + 1] * T::lit(4.0) + g[i + 2];
            }
            let mut total = s * h / T::lit(3.0);
            if tail == 3 {
                let b = even;
                total += (g[b] + g[b + 1] * T::lit(3.0) + g[b + 2] * T::lit(3.0) + g[b + 3])
                    * h
                    * T::lit(3.0 / 8.0);
            }
            total
        }
    }
}

/// Audits `traj` against the model that produced it.
pub fn energy_audit<T: Scalar, D: Dynamics<T> + ?Sized>(
    traj: &Trajectory<T>,
    sys: &D,
) -> Result<AuditReport> {
    traj.check_consistent()?;
    if traj.names != sys.names() {
        return Err(Error::Trajectory(format!(
            "trajectory states {:?} do not match model states {:?}",
            traj.names,
            sys.names()
        )));
    }
    if traj.inputs[0].len() != sys.inputs() {
        return Err(Error::Trajectory(format!(
            "trajectory has {} inputs, model has {}",
            traj.inputs[0].len(),
            sys.inputs()
        )));
    }
    let n = traj.steps();
    let h = traj.h;
    let half = T::lit(0.5);

    let mut energy = Vec::with_capacity(n + 1);
    let mut margin = T::lit(f64::NEG_INFINITY);
    let mut grid_rate = Vec::with_capacity(n + 1);
    for (k, (x, u)) in traj.states.iter().zip(&traj.inputs).enumerate() {
        let e = sys.energy(x)?;
        let stored = traj.energy[k];
        if (e - stored).abs() > T::tol(1e-9) * (T::one() + e.abs()) {
            return Err(Error::Trajectory(format!(
                "stored H = {stored} at sample {k} but the model gives {e}"
            )));
        }
        energy.push(e);
        let hdot = sys.energy_gradient(x)?.dot(&sys.field(x, u)?);
        let supply = u.dot(&sys.passive_output(x, u)?);
        margin = margin.max(hdot - supply);
        grid_rate.push(supply_minus_loss(sys, x, u)?);
    }

    let (integral, quadrature) = match traj.method {
        Method::ImplicitMidpoint => {
            let stored = traj.stage_inputs.len() == n;
            let mut s = T::zero();
            for k in 0..n {
                let xm = (&traj.states[k] + &traj.states[k + 1]) * half;
                let um = if stored {
                    traj.stage_inputs[k].clone()
                } else {
                    (&traj.inputs[k] + &traj.inputs[k + 1]) * half
                };
                s += supply_minus_loss(sys, &xm, &um)? * h;
            }
            (
                s,
                if stored {
                    "midpoint"
                } else {
                    "midpoint (averaged inputs)"
                },
            )
        }
        Method::Rk4 => (simpson(&grid_rate, h), "simpson"),
    };
    let residual = (energy[n] - energy[0] - integral).as_f64();
    let drift = energy
        .iter()
        .fold(0.0f64, |m, e| m.max((*e - energy[0]).abs().as_f64()));
    let margin = margin.as_f64();
    let checks = vec![Check::at_most("passivity margin", margin, PASSIVITY_TOL)];
    Ok(AuditReport {
        method: traj.method,
        steps: n,
        h: h.as_f64(),
        balance_residual: residual,
        passivity_margin: margin,
        energy_drift: drift,
        quadrature,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SignalSpec;
    use crate::simulate::simulate_phs;
    use crate::simulate::tests::oscillator;
    use nalgebra::dvector;

    #[test]
    fn simpson_is_exact_on_cubics() {
        for n in [2usize, 3, 5, 6] {
            let h = 1.0 / n as f64;
            let g: Vec<f64> = (0..=n).map(|k| (k as f64 * h).powi(3)).collect();
            assert!((simpson(&g, h) - 0.25).abs() < 1e-14, "n = {n}");
        }
    }

    #[test]
    fn lossless_audit() {
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
        let rep = energy_audit(&tr, &m).unwrap();
        assert!(rep.passed());
        assert!(rep.balance_residual.abs() <= 1e-10);
        assert!(rep.passivity_margin <= 1e-12);
    }

    #[test]
    fn damped_margin_is_nonpositive() {
        let m = oscillator(0.1);
        let tr = simulate_phs(
            &m,
            &SignalSpec::Zero(1),
            &dvector![1.0, 0.5],
            10.0,
            0.01,
            Method::ImplicitMidpoint,
        )
        .unwrap();
        let rep = energy_audit(&tr, &m).unwrap();
        assert!(rep.passivity_margin <= 1e-12);
        assert!(rep.balance_residual.abs() <= 1e-10);
    }

    #[test]
    fn mismatched_model_rejected() {
        let m = oscillator(0.0);
        let tr = simulate_phs(
            &m,
            &SignalSpec::Zero(1),
            &dvector![1.0, 0.0],
            1.0,
            0.1,
            Method::Rk4,
        )
        .unwrap();
        let mut other = tr.clone();
        other.names = vec!["a".into(), "b".into()];
        assert!(energy_audit(&other, &m).is_err());
    }

    #[test]
    fn rk4_balance_residual_is_fourth_order() {
        let m = oscillator(0.1);
        let u = SignalSpec::expressions(&["sin(t)"]).unwrap();
        let res = |h: f64| {
            let tr = simulate_phs(&m, &u, &dvector![1.0, 0.0], 10.0, h, Method::Rk4).unwrap();
            energy_audit(&tr, &m).unwrap().balance_residual
        };
        let ratio = res(0.02) / res(0.01);
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }
}
