//! Acceptance suite: one PASS/FAIL line per criterion. The exit status is
//! nonzero when a criterion fails that is not listed in `KNOWN_UNATTAINABLE`.
//!
//! Run with `cargo test -p phs-core --test acceptance`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{dvector, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use phs_core::analysis::{
    energy_casimir_candidate, linear_casimirs, linear_expr, shifted_system, steady_state,
};
use phs_core::dirac::{compose, DiracStructure, Port};
use phs_core::energyport::{
    dc_loop_gain_stability, general_p_feedback, ioh_to_phs, phs_to_ioh, positive_feedback,
    simulate_ioh, static_energy_feedback, IohModel, StaticEnergyFeedback, Verdict,
};
use phs_core::model::{Hamiltonian, MatrixField, PhsModel, SignalSpec};
use phs_core::netbuild::{build_msd, Damper, MsdGraph, Node, Spring};
use phs_core::simulate::{energy_audit, simulate, simulate_phs, FnInput, Method};
use phs_core::synthesis::{
    closedloop_casimir_search, convergence_audit, damping_injection, ida_pbc_linear,
    negative_feedback, reduce_to_state_feedback,
};
use phs_core::{Error, Expr};

type Outcome = std::result::Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0))
}

fn random_skew(r: &mut ChaCha8Rng, k: usize) -> DMatrix<f64> {
    let a = uniform(r, k, k);
    &a - a.transpose()
}

fn random_pd(r: &mut ChaCha8Rng, k: usize) -> DMatrix<f64> {
    let a = uniform(r, k, k);
    &a * a.transpose() + DMatrix::identity(k, k) * 0.5
}

/// Rank by an SVD with a fixed relative threshold, independent of the library's rank.
fn brute_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.max();
    sv.iter().filter(|s| **s > 1e-9 * top.max(1.0)).count()
}

fn oscillator(r: [f64; 2], g: [f64; 2], q: [f64; 2]) -> PhsModel<f64> {
    PhsModel::constant(
        names(&["q", "p"]),
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
        DMatrix::from_diagonal(&dvector![r[0], r[1]]),
        DMatrix::from_column_slice(2, 1, &g),
        Hamiltonian::pure_quadratic(DMatrix::from_diagonal(&dvector![q[0], q[1]])).unwrap(),
    )
    .unwrap()
}

fn integrator() -> PhsModel<f64> {
    PhsModel::constant(
        names(&["xi"]),
        DMatrix::zeros(1, 1),
        DMatrix::zeros(1, 1),
        DMatrix::from_element(1, 1, 1.0),
        Hamiltonian::pure_quadratic(DMatrix::identity(1, 1)).unwrap(),
    )
    .unwrap()
}

fn within(elapsed: Duration, limit: f64) -> Outcome {
    let s = elapsed.as_secs_f64();
    if s < limit {
        Ok(format!("{s:.2}s"))
    } else {
        Err(format!("took {s:.2}s, limit {limit}s"))
    }
}

fn dirac_axioms() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let k = r.random_range(1..=8);
        let d =
            DiracStructure::from_skew_map(&random_skew(&mut r, k)).map_err(|e| e.to_string())?;
        let rep = d.verify();
        ensure!(rep.passed() && rep.rank == k, "skew map k={k}: {rep:?}");
        worst = worst.max(rep.power_residual);
    }
    for _ in 0..50 {
        let k = r.random_range(1..=8);
        let dim = r.random_range(0..=k);
        let basis = uniform(&mut r, k, dim);
        let d = DiracStructure::from_kirchhoff(&basis).map_err(|e| e.to_string())?;
        let rep = d.verify();
        ensure!(
            rep.passed() && rep.rank == k,
            "Kirchhoff k={k}, dim={dim}: {rep:?}"
        );
        worst = worst.max(rep.power_residual);
    }
    for _ in 0..100 {
        let s = r.random_range(1..=3);
        let k1 = r.random_range(s + 1..=8);
        let k2 = r.random_range(s + 1..=8);
        let a = DiracStructure::from_skew_map(&random_skew(&mut r, k1))
            .and_then(|d| d.with_ports(vec![Port::new("a", k1 - s), Port::new("s", s)]))
            .map_err(|e| e.to_string())?;
        let b = DiracStructure::from_skew_map(&random_skew(&mut r, k2))
            .and_then(|d| d.with_ports(vec![Port::new("s", s), Port::new("b", k2 - s)]))
            .map_err(|e| e.to_string())?;
        let c = compose(&a, &b, &[("s", "s")]).map_err(|e| format!("composition: {e}"))?;
        let rep = c.verify();
        ensure!(
            rep.passed() && rep.rank == k1 + k2 - 2 * s,
            "composition: {rep:?}"
        );
        worst = worst.max(rep.power_residual);
    }
    ensure!(worst < 1e-10, "power residual {worst:e}");
    let t = within(start.elapsed(), 5.0)?;
    Ok(format!("max power residual {worst:.1e}, {t}"))
}

fn energy_balance() -> Outcome {
    let start = Instant::now();
    let m = oscillator([0.0, 0.1], [0.0, 1.0], [1.0, 1.0]);
    let u = SignalSpec::expressions(&["sin(t)"]).unwrap();
    let x0 = dvector![1.0, 0.0];
    let tr = simulate_phs(&m, &u, &x0, 10.0, 0.01, Method::ImplicitMidpoint)
        .map_err(|e| e.to_string())?;
    let rep = energy_audit(&tr, &m).map_err(|e| e.to_string())?;
    ensure!(
        rep.balance_residual.abs() <= 1e-8,
        "midpoint balance residual {:e}",
        rep.balance_residual
    );
    ensure!(
        rep.passivity_margin <= 1e-9,
        "passivity margin {:e}",
        rep.passivity_margin
    );
    let rk4 = |h: f64| -> Result<f64, String> {
        let tr = simulate_phs(&m, &u, &x0, 10.0, h, Method::Rk4).map_err(|e| e.to_string())?;
        Ok(energy_audit(&tr, &m)
            .map_err(|e| e.to_string())?
            .balance_residual)
    };
    let ratio = rk4(0.02)? / rk4(0.01)?;
    ensure!((12.0..=20.0).contains(&ratio), "RK4 residual ratio {ratio}");
    let t = within(start.elapsed(), 2.0)?;
    Ok(format!(
        "midpoint residual {:.1e}, margin {:.1e}, RK4 ratio {ratio:.2}, {t}",
        rep.balance_residual, rep.passivity_margin
    ))
}

fn structure_preservation() -> Outcome {
    let mut r = rng(3);
    let mut worst = 0.0f64;
    for n in 2..=6 {
        let labels: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        let m = PhsModel::constant(
            labels,
            random_skew(&mut r, n),
            DMatrix::zeros(n, n),
            DMatrix::zeros(n, 1),
            Hamiltonian::pure_quadratic(random_pd(&mut r, n)).unwrap(),
        )
        .map_err(|e| e.to_string())?;
        let x0 = DVector::from_fn(n, |_, _| r.random_range(-1.0..1.0));
        let tr = simulate_phs(
            &m,
            &SignalSpec::Zero(1),
            &x0,
            100.0,
            0.01,
            Method::ImplicitMidpoint,
        )
        .map_err(|e| e.to_string())?;
        ensure!(tr.steps() == 10_000, "{} steps", tr.steps());
        worst = worst.max(tr.energy_drift());
    }
    ensure!(worst <= 1e-9, "H drift {worst:e}");
    Ok(format!(
        "max |H drift| {worst:.1e} over 5 systems x 10^4 steps"
    ))
}

fn shifted_passivity() -> Outcome {
    let m = oscillator([0.0, 0.1], [0.0, 1.0], [1.0, 1.0]);
    let ss = steady_state(&m, &dvector![1.0], &dvector![0.0, 0.0]).map_err(|e| e.to_string())?;
    let err = (&ss.x - dvector![1.0, 0.0]).amax();
    ensure!(err <= 1e-12, "steady state {:?}", ss.x.as_slice());
    let sh = shifted_system(&m, &ss).map_err(|e| e.to_string())?;
    let mut r = rng(4);
    let mut lowest = f64::INFINITY;
    for _ in 0..1000 {
        let d = DVector::from_fn(2, |_, _| r.random_range(-2.0..2.0));
        lowest = lowest.min(
            sh.hamiltonian
                .value(&(&ss.x + d))
                .map_err(|e| e.to_string())?,
        );
    }
    ensure!(lowest >= -1e-12, "shifted Hamiltonian {lowest:e}");
    let open = simulate_phs(
        &m,
        &SignalSpec::Constant(ss.u.clone()),
        &dvector![1.5, 0.0],
        20.0,
        0.01,
        Method::ImplicitMidpoint,
    )
    .map_err(|e| e.to_string())?;
    let mut rise = f64::NEG_INFINITY;
    for w in open.states.windows(2) {
        let d = sh.hamiltonian.value(&w[1]).unwrap() - sh.hamiltonian.value(&w[0]).unwrap();
        rise = rise.max(d);
    }
    ensure!(rise <= 1e-12, "Ĥ increased by {rise:e} under u = ū");
    let (ubar, ybar) = (ss.u[0], ss.y[0]);
    let law = FnInput::new(1, move |_t: f64, x: &DVector<f64>| {
        Ok(dvector![ubar - 0.5 * (x[1] - ybar)])
    });
    let tr = simulate(
        &m,
        &law,
        &dvector![1.5, 0.0],
        20.0,
        0.01,
        Method::ImplicitMidpoint,
    )
    .map_err(|e| e.to_string())?;
    let dist = (tr.last_state() - &ss.x).norm();
    ensure!(dist < 1e-3, "‖x(20) − x̄‖ = {dist:e}");
    Ok(format!(
        "x̄ error {err:.1e}, min Ĥ {lowest:.1e}, ‖x(20) − x̄‖ {dist:.1e}"
    ))
}

fn casimir_suite() -> Outcome {
    let mut r = rng(5);
    let mut worst = 0.0f64;
    let mut drift = 0.0f64;
    let mut simulated = 0;
    for trial in 0..100 {
        let n = r.random_range(1..=6);
        let rj = r.random_range(0..=n / 2);
        let a = uniform(&mut r, n, rj);
        let b = uniform(&mut r, n, rj);
        let j = &a * b.transpose() - &b * a.transpose();
        let rr = r.random_range(0..=n.min(2));
        let c = uniform(&mut r, n, rr);
        let rmat = &c * c.transpose();
        let labels: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        let m = PhsModel::constant(
            labels.clone(),
            j.clone(),
            rmat.clone(),
            DMatrix::zeros(n, 1),
            Hamiltonian::pure_quadratic(random_pd(&mut r, n)).unwrap(),
        )
        .map_err(|e| e.to_string())?;
        let basis = linear_casimirs(&m).map_err(|e| e.to_string())?;
        for v in &basis.vectors {
            worst = worst.max((&j * v).norm()).max((&rmat * v).norm());
        }
        let mut stacked = DMatrix::zeros(2 * n, n);
        stacked.view_mut((0, 0), (n, n)).copy_from(&j);
        stacked.view_mut((n, 0), (n, n)).copy_from(&rmat);
        let expected = n - brute_rank(&stacked);
        ensure!(
            basis.len() == expected,
            "trial {trial}: basis {} vs n − rank {expected}",
            basis.len()
        );
        if !basis.is_empty() && simulated < 10 {
            simulated += 1;
            let x0 = DVector::from_fn(n, |_, _| r.random_range(-1.0..1.0));
            let tr = simulate_phs(
                &m,
                &SignalSpec::Zero(1),
                &x0,
                100.0,
                0.01,
                Method::ImplicitMidpoint,
            )
            .map_err(|e| e.to_string())?;
            for (e, v) in basis.exprs(&labels).iter().zip(&basis.vectors) {
                let c0 = v.dot(&x0);
                for x in &tr.states {
                    let cx = e.eval(x.as_slice()).map_err(|e| e.to_string())?;
                    drift = drift.max((cx - c0).abs() / (1.0 + c0.abs()));
                }
            }
        }
    }
    ensure!(worst <= 1e-10, "Casimir residual {worst:e}");
    ensure!(drift <= 1e-8, "Casimir drift {drift:e}");
    Ok(format!(
        "max residual {worst:.1e}, max relative drift {drift:.1e} ({simulated} runs)"
    ))
}

fn control_by_interconnection() -> Outcome {
    let r = 0.3;
    let found =
        closedloop_casimir_search(&oscillator([0.0, r], [0.0, 1.0], [1.0, 1.0]), &integrator())
            .map_err(|e| e.to_string())?;
    ensure!(
        found.casimirs.len() == 1,
        "{} Casimirs",
        found.casimirs.len()
    );
    let f = &found.casimirs[0].f_row;
    ensure!(
        (f - dvector![1.0, 0.0]).amax() < 1e-12,
        "F = {:?}",
        f.as_slice()
    );
    let blocked =
        closedloop_casimir_search(&oscillator([r, 0.0], [0.0, 1.0], [1.0, 1.0]), &integrator())
            .map_err(|e| e.to_string())?;
    ensure!(
        blocked.casimirs.is_empty() && blocked.obstacle.dissipation_obstacle,
        "obstacle not flagged: {:?}",
        blocked.obstacle
    );

    let plant = oscillator([0.0, 0.0], [0.0, 1.0], [0.0, 1.0]);
    let q_star = 0.7;
    let fmat = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let alpha = reduce_to_state_feedback(&plant, &integrator(), &fmat, &dvector![-q_star])
        .map_err(|e| e.to_string())?;
    let cl = negative_feedback(&plant, &integrator()).map_err(|e| e.to_string())?;
    let x0 = dvector![0.2, -0.3];
    let z0 = dvector![x0[0], x0[1], x0[0] - q_star];
    let a = simulate(&plant, &alpha, &x0, 10.0, 0.01, Method::ImplicitMidpoint)
        .map_err(|e| e.to_string())?;
    let b = simulate_phs(
        &cl.model,
        &SignalSpec::Zero(2),
        &z0,
        10.0,
        0.01,
        Method::ImplicitMidpoint,
    )
    .map_err(|e| e.to_string())?;
    ensure!(a.steps() == 1000, "{} steps", a.steps());
    let mismatch = a
        .states
        .iter()
        .zip(&b.states)
        .fold(0.0f64, |m, (x, z)| m.max((x - z.rows(0, 2)).norm()));
    ensure!(mismatch <= 1e-8, "trajectory mismatch {mismatch:e}");

    let shaped = alpha.shaped_model(&plant).map_err(|e| e.to_string())?;
    let phi = Expr::parse("z0", &["z0"]).unwrap();
    let target = dvector![q_star, 0.0];
    let (v, cert) =
        energy_casimir_candidate(&shaped, &[], &phi, &target).map_err(|e| e.to_string())?;
    let damp = damping_injection(&shaped, &v, &cert, 1.0).map_err(|e| e.to_string())?;
    let pd = alpha.plus(damp).map_err(|e| e.to_string())?;
    let (audit, _) = convergence_audit(&plant, &pd, &v, &dvector![0.0, 0.0], 30.0, 0.01)
        .map_err(|e| e.to_string())?;
    ensure!(
        audit.final_error < 1e-3,
        "‖x(30) − x*‖ = {:e}",
        audit.final_error
    );
    Ok(format!(
        "obstacle residual {:.2}, trajectory mismatch {mismatch:.1e}, PD error {:.1e}",
        blocked.obstacle.r_residual, audit.final_error
    ))
}

fn ida_pbc() -> Outcome {
    let plant = oscillator([0.0, 0.0], [0.0, 1.0], [1.0, 1.0]);
    let (j, r, g) = plant.constant_matrices().unwrap();
    let kd = 3.0;
    let hs = Hamiltonian::pure_quadratic(DMatrix::from_diagonal(&dvector![kd, 1.0])).unwrap();
    let ida = ida_pbc_linear(&plant, &j, &r, &hs).map_err(|e| e.to_string())?;
    ensure!(
        ida.matching_residual <= 1e-12,
        "matching residual {:e}",
        ida.matching_residual
    );
    let mut rr = rng(7);
    let mut worst_alpha = 0.0f64;
    let mut worst_field = 0.0f64;
    for _ in 0..100 {
        let x = DVector::from_fn(2, |_, _| rr.random_range(-2.0..2.0));
        let u = ida.law.eval(&x).map_err(|e| e.to_string())?;
        worst_alpha = worst_alpha.max((u[0] - (1.0 - kd) * x[0]).abs());
        let closed = (&j - &r) * &x + &g * &u;
        let want = (&j - &r) * DMatrix::from_diagonal(&dvector![kd, 1.0]) * &x;
        worst_field = worst_field.max((closed - want).amax());
    }
    ensure!(
        worst_alpha <= 1e-12,
        "α deviates from (1 − k_d)q by {worst_alpha:e}"
    );
    ensure!(
        worst_field <= 1e-10,
        "closed-loop field residual {worst_field:e}"
    );
    let pushed = oscillator([0.0, 0.0], [1.0, 0.0], [1.0, 1.0]);
    match ida_pbc_linear(&pushed, &j, &r, &hs) {
        Err(Error::Structure { .. }) => {}
        other => return Err(format!("G = [1; 0] variant not rejected: {other:?}")),
    }
    Ok(format!(
        "α error {worst_alpha:.1e}, field residual {worst_field:.1e}, G=[1;0] rejected"
    ))
}

fn random_ioh(r: &mut ChaCha8Rng, tag: &str) -> IohModel<f64> {
    let n = r.random_range(1..=5);
    let m = r.random_range(1..=n);
    let labels: Vec<String> = (0..n).map(|i| format!("{tag}{i}")).collect();
    let rank = r.random_range(0..=n);
    let b = uniform(r, n, rank);
    let c = uniform(r, m, n);
    let outputs = (0..m)
        .map(|i| linear_expr(&c.row(i).transpose(), &labels))
        .collect();
    IohModel::new(
        labels,
        MatrixField::constant(random_skew(r, n)),
        MatrixField::constant(&b * b.transpose()),
        Hamiltonian::pure_quadratic(random_pd(r, n)).unwrap(),
        outputs,
    )
    .unwrap()
}

fn phs_ioh_equivalence() -> Outcome {
    let mut r = rng(8);
    let (mut round, mut ident) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let ioh = random_ioh(&mut r, "x");
        let ext = ioh_to_phs(&ioh).map_err(|e| e.to_string())?;
        let back = phs_to_ioh(&ext, ioh.output_map().to_vec()).map_err(|e| e.to_string())?;
        let again = ioh_to_phs(&back).map_err(|e| e.to_string())?;
        let parts = |e: &phs_core::model::ExtendedPhsModel<f64>| {
            [
                e.base().j().as_constant().unwrap(),
                e.base().r().as_constant().unwrap(),
                e.base().g().as_constant().unwrap(),
                e.p().as_constant().unwrap(),
                e.s().as_constant().unwrap(),
                e.m().as_constant().unwrap(),
            ]
        };
        for (p, q) in parts(&ext).iter().zip(parts(&again).iter()) {
            round = round.max((p - q).amax());
        }
        for _ in 0..20 {
            let x = DVector::from_fn(ioh.dim(), |_, _| r.random_range(-1.0..1.0));
            let u = DVector::from_fn(ioh.inputs(), |_, _| r.random_range(-1.0..1.0));
            let y = ext.output(&x, &u).map_err(|e| e.to_string())?;
            let yd = ioh
                .differentiated_output(&x, &u)
                .map_err(|e| e.to_string())?;
            ident = ident.max((y - yd).amax());
        }
    }
    ensure!(round <= 1e-12, "round trip deviates by {round:e}");
    ensure!(ident <= 1e-12, "y_PH − ẏ = {ident:e}");

    let h = 0.01;
    let osc = IohModel::new(
        names(&["q", "p"]),
        MatrixField::constant(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])),
        MatrixField::zeros(2, 2),
        Hamiltonian::pure_quadratic(DMatrix::identity(2, 2)).unwrap(),
        vec![Expr::parse("q", &["q", "p"]).unwrap()],
    )
    .unwrap();
    let tr = simulate_ioh(
        &osc,
        &SignalSpec::Zero(1),
        &dvector![1.0, 0.0],
        10.0,
        h,
        Method::ImplicitMidpoint,
    )
    .map_err(|e| e.to_string())?;
    let mut fd = 0.0f64;
    for k in 1..tr.steps() {
        let c = (&tr.outputs[k + 1] - &tr.outputs[k - 1]) / (2.0 * h);
        fd = fd.max((c - &tr.output_rates[k]).amax());
    }
    ensure!(fd <= 10.0 * h * h, "finite-difference ẏ error {fd:e}");
    Ok(format!(
        "round trip {round:.1e}, y_PH − ẏ {ident:.1e}, FD error {fd:.1e} (h² = {:.0e})",
        h * h
    ))
}

fn spring(k: f64, mass: f64, r: f64, tag: &str) -> IohModel<f64> {
    let labels = names(&[&format!("q{tag}"), &format!("p{tag}")]);
    IohModel::new(
        labels.clone(),
        MatrixField::constant(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])),
        MatrixField::constant(DMatrix::from_diagonal(&dvector![0.0, r])),
        Hamiltonian::pure_quadratic(DMatrix::from_diagonal(&dvector![k, 1.0 / mass])).unwrap(),
        vec![Expr::variable(0, &labels)],
    )
    .unwrap()
}

fn energy_port_shaping() -> Outcome {
    let mut r = rng(9);
    let (mut hcl, mut gp, mut st) = (0.0f64, 0.0f64, 0.0f64);
    for trial in 0..10 {
        let a = if trial % 2 == 0 {
            spring(r.random_range(0.5..3.0), 1.0, 0.2, "1")
        } else {
            let l = names(&["q1", "p1"]);
            IohModel::new(
                l.clone(),
                MatrixField::constant(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])),
                MatrixField::constant(DMatrix::from_diagonal(&dvector![0.0, 0.1])),
                Hamiltonian::expression(Expr::parse("0.5*p1^2 + 1 - cos(q1)", &l).unwrap()),
                vec![Expr::parse("sin(q1)", &l).unwrap()],
            )
            .unwrap()
        };
        let b = spring(r.random_range(0.5..3.0), r.random_range(0.5..2.0), 0.0, "2");
        let pos = positive_feedback(&a, &b).map_err(|e| e.to_string())?;
        let genp = general_p_feedback(&a, &b, &Expr::parse("-y1*y2", &["y1", "y2"]).unwrap())
            .map_err(|e| e.to_string())?;
        for _ in 0..100 {
            let x = DVector::from_fn(4, |_, _| r.random_range(-1.5..1.5));
            let (x1, x2) = (x.rows(0, 2).into_owned(), x.rows(2, 2).into_owned());
            let want = a.hamiltonian().value(&x1).unwrap() + b.hamiltonian().value(&x2).unwrap()
                - a.output(&x1).unwrap().dot(&b.output(&x2).unwrap());
            hcl = hcl.max((pos.hamiltonian().value(&x).unwrap() - want).abs());
            let v = DVector::from_fn(2, |_, _| r.random_range(-1.0..1.0));
            gp = gp.max(
                (pos.vector_field(&x, &v).unwrap() - genp.vector_field(&x, &v).unwrap()).amax(),
            );
        }
    }
    let base = spring(1.0, 1.0, 0.3, "");
    let p = StaticEnergyFeedback::new(Expr::parse("0.5*y^2 + 0.2*y", &["y"]).unwrap());
    let shaped = static_energy_feedback(&base, &p).map_err(|e| e.to_string())?;
    for _ in 0..100 {
        let x = DVector::from_fn(2, |_, _| r.random_range(-2.0..2.0));
        let v = DVector::from_fn(1, |_, _| r.random_range(-1.0..1.0));
        let grad = shaped.hamiltonian().gradient(&x).unwrap()
            - shaped.output_jacobian(&x).unwrap().transpose() * &v;
        let want = (base.j().as_constant().unwrap() - base.r().as_constant().unwrap()) * grad;
        st = st.max((shaped.vector_field(&x, &v).unwrap() - want).amax());
    }
    ensure!(hcl <= 1e-12, "H_cl deviates by {hcl:e}");
    ensure!(gp <= 1e-12, "general-P field deviates by {gp:e}");
    ensure!(st <= 1e-10, "static feedback field residual {st:e}");
    Ok(format!(
        "H_cl {hcl:.1e}, general-P {gp:.1e}, static {st:.1e}"
    ))
}

fn dc_loop_gain() -> Outcome {
    let start = Instant::now();
    let mut r = rng(10);
    let mut compared = 0;
    for _ in 0..200 {
        let k1 = r.random_range(0.1f64..4.0);
        let k2 = r.random_range(0.1f64..4.0);
        if (k1 * k2 - 1.0).abs() < 1e-9 {
            continue;
        }
        let a = spring(k1, r.random_range(0.5..2.0), r.random_range(0.0..0.5), "1");
        let b = spring(k2, r.random_range(0.5..2.0), r.random_range(0.0..0.5), "2");
        let rep = dc_loop_gain_stability(&a, &b).map_err(|e| e.to_string())?;
        let oracle = k1 * k2 > 1.0;
        ensure!(
            (rep.verdict == Verdict::Stable) == oracle && rep.loop_gain_verdict == rep.verdict,
            "k1={k1}, k2={k2}: {:?} / {:?}",
            rep.verdict,
            rep.loop_gain_verdict
        );
        compared += 1;
    }
    let verdict = |k1: f64, k2: f64| -> Result<Verdict, String> {
        let rep = dc_loop_gain_stability(&spring(k1, 1.0, 0.0, "1"), &spring(k2, 1.0, 0.0, "2"))
            .map_err(|e| e.to_string())?;
        ensure!(
            rep.verdict == rep.loop_gain_verdict,
            "verdicts disagree at k1={k1}, k2={k2}"
        );
        Ok(rep.verdict)
    };
    ensure!(verdict(2.0, 2.0)? == Verdict::Stable, "k = 2 not stable");
    ensure!(
        verdict(0.5, 0.5)? == Verdict::Unstable,
        "k = 0.5 not unstable"
    );
    ensure!(
        verdict(2.0, 0.5)? == Verdict::Marginal,
        "k1 k2 = 1 not marginal"
    );
    let t = within(start.elapsed(), 2.0)?;
    Ok(format!("{compared} random pairs agree, {t}"))
}

fn network_build() -> Outcome {
    let g = MsdGraph {
        nodes: vec![
            Node {
                name: "1".into(),
                mass: 1.0,
            },
            Node {
                name: "2".into(),
                mass: 1.0,
            },
        ],
        springs: vec![Spring {
            from: "1".into(),
            to: "2".into(),
            k: 1.0,
        }],
        dampers: vec![Damper {
            from: "1".into(),
            to: "2".into(),
            d: 0.5,
        }],
        actuated: vec!["1".into()],
    };
    let m = build_msd::<f64>(&g).map_err(|e| e.to_string())?;
    ensure!(
        m.validate().passed(),
        "validation failed: {:?}",
        m.validate()
    );
    let basis = linear_casimirs(&m).map_err(|e| e.to_string())?;
    ensure!(
        basis.contains(&dvector![0.0, 1.0, 1.0]),
        "total momentum missing from {:?}",
        basis.vectors
    );
    let u = SignalSpec::expressions(&["sin(2*t)"]).unwrap();
    let tr = simulate_phs(
        &m,
        &u,
        &dvector![0.2, 0.0, 0.0],
        10.0,
        0.01,
        Method::ImplicitMidpoint,
    )
    .map_err(|e| e.to_string())?;
    let rep = energy_audit(&tr, &m).map_err(|e| e.to_string())?;
    ensure!(rep.passed(), "audit failed: {rep:?}");
    Ok(format!("balance residual {:.1e}", rep.balance_residual))
}

fn random_expr(r: &mut ChaCha8Rng, depth: u32) -> String {
    const VARS: [&str; 3] = ["x", "y", "z"];
    if depth == 0 || r.random_range(0..4) == 0 {
        return if r.random_bool(0.6) {
            VARS[r.random_range(0..3)].to_string()
        } else {
            format!("{:.2}", r.random_range(0.1..3.0))
        };
    }
    let a = random_expr(r, depth - 1);
    let b = random_expr(r, depth - 1);
    match r.random_range(0..10) {
        0 => format!("{a} + {b}"),
        1 => format!("{a} - {b}"),
        2 => format!("({a})*({b})"),
        3 => format!("({a})/(1 + ({b})^2)"),
        4 => format!("sin({a})"),
        5 => format!("cos({a})"),
        6 => format!("exp(0.3*({a}))"),
        7 => format!("ln(1 + ({a})^2)"),
        8 => format!("sqrt(2 + sin({a}))"),
        _ => format!("({a})^3"),
    }
}

fn expression_layer() -> Outcome {
    let vars = ["x", "y", "z"];
    let mut r = rng(12);
    let mut worst = 0.0f64;
    let mut count = 0;
    while count < 50 {
        let src = random_expr(&mut r, 4);
        let e = Expr::parse(&src, &vars).map_err(|e| format!("`{src}`: {e}"))?;
        if e.is_constant() {
            continue;
        }
        count += 1;
        let printed = e.to_string();
        let again =
            Expr::parse(&printed, &vars).map_err(|e| format!("reparse `{printed}`: {e}"))?;
        ensure!(
            again == e && again.to_string() == printed,
            "round trip changed `{src}` into `{printed}`"
        );
        for _ in 0..5 {
            let p: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
            let (_, g) = e.eval_grad(&p).map_err(|err| err.to_string())?;
            for i in 0..3 {
                let h = 1e-6;
                let (mut up, mut dn) = (p.clone(), p.clone());
                up[i] += h;
                dn[i] -= h;
                let fd = (e.eval(&up).unwrap() - e.eval(&dn).unwrap()) / (2.0 * h);
                worst = worst.max((g[i] - fd).abs() / g[i].abs().max(1.0));
            }
        }
    }
    ensure!(worst < 1e-6, "gradient relative error {worst:e}");
    Ok(format!(
        "50 expressions, max relative gradient error {worst:.1e}, round trip exact"
    ))
}

/// Criteria whose bound contradicts the exact solution of the stated example.
const KNOWN_UNATTAINABLE: [(usize, &str); 1] = [(
    4,
    "the linear closed loop from (1.5, 0) decays as 0.5 e^(-0.3 t); its exact solution has \
     ‖x(20) − x̄‖ = 1.3287e-3",
)];

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("dirac axioms", dirac_axioms),
        ("energy balance", energy_balance),
        ("structure preservation", structure_preservation),
        ("shifted passivity", shifted_passivity),
        ("casimir suite", casimir_suite),
        ("control by interconnection", control_by_interconnection),
        ("ida-pbc", ida_pbc),
        ("phs/ioh equivalence", phs_ioh_equivalence),
        ("energy-port shaping", energy_port_shaping),
        ("dc loop gain", dc_loop_gain),
        ("network build", network_build),
        ("expression layer", expression_layer),
    ];
    let (mut failed, mut unexpected) = (0, 0);
    for (i, (name, run)) in criteria.iter().enumerate() {
        let known = KNOWN_UNATTAINABLE.iter().find(|(n, _)| *n == i + 1);
        match (run(), known) {
            (Ok(detail), _) => println!("PASS {:>2} {name}: {detail}", i + 1),
            (Err(why), Some((_, reason))) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} (unattainable: {reason})", i + 1);
            }
            (Err(why), None) => {
                failed += 1;
                unexpected += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed, {unexpected} unexpected failures",
        criteria.len() - failed,
        criteria.len()
    );
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
