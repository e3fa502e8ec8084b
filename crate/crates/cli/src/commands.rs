use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::{json, Value};

use phs_core::analysis::{
    energy_casimir_candidate, linear_casimirs, shifted_system, steady_state, verify_casimir,
    CASIMIR_TOL,
};
use phs_core::energyport::{
    as_extended, dc_loop_gain_stability, general_p_feedback, ioh_to_phs, phs_to_ioh,
    positive_feedback, static_energy_feedback, StaticEnergyFeedback,
};
use phs_core::model::{
    default_samples, numbered_names, validate_phs, Hamiltonian, MatrixField, PhsModel, SignalSpec,
};
use phs_core::netbuild::build_msd;
use phs_core::simulate::{
    energy_audit, read_csv, simulate, write_csv, Dynamics, Method, Trajectory,
};
use phs_core::synthesis::{
    closedloop_casimir_search, convergence_audit, damping_injection, ida_pbc_linear,
    interconnect_jint, negative_feedback, reduce_to_state_feedback, SYNTHESIS_TOL,
};
use phs_core::{linalg, Check, Expr};

use crate::schema::{self, ioh_json, load_model, matrix_arg, phs_json, Loaded, ModelFile};
use crate::{CliError, Command, ComposeKind, IohFeedbackKind, Outcome};

type Res = Result<Option<Outcome>, CliError>;

fn done(checks: Vec<Check>, result: Value) -> Res {
    Ok(Some(Outcome { checks, result }))
}

fn to_value<S: Serialize>(s: &S) -> Value {
    serde_json::to_value(s).expect("reports are serializable")
}

fn rows(m: &DMatrix<f64>) -> Value {
    let r: Vec<Vec<f64>> = m
        .row_iter()
        .map(|r| r.iter().map(|v| v + 0.0).collect())
        .collect();
    json!(r)
}

fn vec_json(v: &DVector<f64>) -> Value {
    json!(v.iter().map(|c| c + 0.0).collect::<Vec<_>>())
}

/// `1,0,-2.5` or `[1, 0, -2.5]`.
fn vector_arg(src: &str, what: &str) -> Result<DVector<f64>, CliError> {
    let s = src.trim().trim_start_matches('[').trim_end_matches(']');
    if s.trim().is_empty() {
        return Ok(DVector::zeros(0));
    }
    let vals = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Usage(format!("{what}: {e} in `{src}`")))?;
    Ok(DVector::from_vec(vals))
}

fn expect_len(v: &DVector<f64>, n: usize, what: &str) -> Result<(), CliError> {
    if v.len() != n {
        return Err(CliError::Usage(format!(
            "{what} has {} entries, expected {n}",
            v.len()
        )));
    }
    Ok(())
}

fn validation(m: &Loaded, seed: u64) -> Vec<Check> {
    match m {
        Loaded::Phs(p) => validate_phs(p, &default_samples(p.dim(), seed)).checks,
        Loaded::Ioh(i) => i.validate_at(&default_samples(i.dim(), seed)).checks,
    }
}

/// Loads and validates; a failed structural check aborts with the report.
fn open(path: &Path, seed: u64) -> Result<(Loaded, Vec<Check>), CliError> {
    let m = load_model(path)?;
    let checks = validation(&m, seed);
    if !phs_core::report::all_passed(&checks) {
        return Err(CliError::Invalid {
            path: path.display().to_string(),
            checks,
        });
    }
    Ok((m, checks))
}

fn write_model(file: &ModelFile, out: Option<&Path>) -> Result<Value, CliError> {
    let v = to_value(file);
    if let Some(p) = out {
        let text = serde_json::to_string_pretty(&v).expect("model files are serializable");
        fs::write(p, text + "\n")
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", p.display())))?;
    }
    Ok(v)
}

fn summary(m: &Loaded) -> Value {
    let (names, inputs) = match m {
        Loaded::Phs(p) => (p.names(), p.inputs()),
        Loaded::Ioh(i) => (i.names(), i.inputs()),
    };
    json!({ "kind": m.kind(), "state": names, "n": names.len(), "m": inputs })
}

pub fn run(cmd: Command, seed: u64) -> Res {
    match cmd {
        Command::Validate { model } => {
            let (m, checks) = open(&model, seed)?;
            done(checks, summary(&m))
        }
        Command::Simulate {
            model,
            x0,
            t_end,
            dt,
            method,
            u,
            out,
        } => {
            let (m, _) = open(&model, seed)?;
            let x0 = vector_arg(&x0, "--x0")?;
            match &m {
                Loaded::Phs(p) => run_simulation(p, &x0, t_end, dt, method, &u, out.as_deref()),
                Loaded::Ioh(i) => run_simulation(i, &x0, t_end, dt, method, &u, out.as_deref()),
            }
        }
        Command::Audit {
            traj,
            model,
            method,
        } => {
            let (m, _) = open(&model, seed)?;
            let file = File::open(&traj)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", traj.display())))?;
            let tr: Trajectory<f64> = read_csv(BufReader::new(file), method)
                .map_err(|e| CliError::Schema(format!("{}: {e}", traj.display())))?;
            let report = match &m {
                Loaded::Phs(p) => energy_audit(&tr, p)?,
                Loaded::Ioh(i) => energy_audit(&tr, i)?,
            };
            let checks = report.checks.clone();
            done(checks, to_value(&report))
        }
        Command::Steady { model, u, x_guess } => {
            let (m, _) = open(&model, seed)?;
            let p = m.phs("steady")?;
            let u = match u {
                Some(s) => vector_arg(&s, "--u")?,
                None => DVector::zeros(p.inputs()),
            };
            expect_len(&u, p.inputs(), "--u")?;
            let guess = match x_guess {
                Some(s) => vector_arg(&s, "--x-guess")?,
                None => DVector::zeros(p.dim()),
            };
            expect_len(&guess, p.dim(), "--x-guess")?;
            let ss = steady_state(&p, &u, &guess)?;
            let sh = shifted_system(&p, &ss)?;
            let checks = vec![
                Check::at_most("steady-state residual", ss.residual, 1e-8),
                Check::at_most("shifted field identity", sh.field_identity_residual, 1e-8),
            ];
            done(
                checks,
                json!({
                    "u": vec_json(&ss.u),
                    "x": vec_json(&ss.x),
                    "y": vec_json(&ss.y),
                    "residual": ss.residual,
                    "shifted": {
                        "hessian": rows(&sh.hessian),
                        "hessian_min_eigenvalue": sh.hessian_min_eigenvalue,
                        "convexity": sh.convexity,
                    }
                }),
            )
        }
        Command::Casimir { model, verify } => {
            let (m, _) = open(&model, seed)?;
            let p = m.phs("casimir")?;
            let basis = linear_casimirs(&p)?;
            let mut checks: Vec<Check> = basis
                .residuals
                .iter()
                .enumerate()
                .map(|(i, (j, r))| {
                    Check::at_most(format!("basis vector {i}"), j.max(*r), CASIMIR_TOL)
                })
                .collect();
            let vectors: Vec<Vec<f64>> = basis
                .vectors
                .iter()
                .map(|v| v.iter().map(|c| c + 0.0).collect())
                .collect();
            let exprs: Vec<String> = basis
                .exprs(p.names())
                .iter()
                .map(|e| e.to_string())
                .collect();
            let mut result = json!({ "basis": vectors, "casimirs": exprs });
            if let Some(src) = verify {
                let c = Expr::parse(&src, p.names())?;
                let rep = verify_casimir(&p, &c, &default_samples(p.dim(), seed), None)?;
                checks.extend(rep.checks.iter().cloned());
                result["verify"] = json!({ "candidate": src, "report": to_value(&rep) });
            }
            done(checks, result)
        }
        Command::Compose {
            kind,
            plant,
            controller,
            jint,
            out,
        } => {
            let (a, _) = open(&plant, seed)?;
            let (b, _) = open(&controller, seed)?;
            let (a, b) = (a.phs("plant")?, b.phs("controller")?);
            let cl = match kind {
                ComposeKind::Negative => {
                    if jint.is_some() {
                        return Err(CliError::Usage("--jint only applies to `jint`".into()));
                    }
                    negative_feedback(&a, &b)?
                }
                ComposeKind::Jint => {
                    let src = jint.ok_or_else(|| CliError::Usage("`jint` needs --jint".into()))?;
                    let m = matrix_arg(&src, "--jint")?;
                    interconnect_jint(&a, &b, &MatrixField::constant(m))?
                }
            };
            let checks = validate_phs(&cl.model, &default_samples(cl.model.dim(), seed)).checks;
            let file = write_model(&phs_json(&cl.model)?, out.as_deref())?;
            done(
                checks,
                json!({ "kind": cl.kind, "plant_dim": cl.plant_dim, "controller_dim": cl.controller_dim, "model": file }),
            )
        }
        Command::SynthCi {
            plant,
            controller,
            lambda,
            damping,
            phi,
            target,
            x0,
            horizon,
            dt,
        } => {
            let (a, _) = open(&plant, seed)?;
            let (b, _) = open(&controller, seed)?;
            let (plant, ctrl) = (a.phs("plant")?, b.phs("controller")?);
            synth_ci(
                &plant, &ctrl, lambda, damping, &phi, target, x0, horizon, dt,
            )
        }
        Command::SynthIda {
            plant,
            jd,
            rd,
            qs,
            bs,
        } => {
            let (a, _) = open(&plant, seed)?;
            let plant = a.phs("plant")?;
            let jd = matrix_arg(&jd, "--jd")?;
            let rd = matrix_arg(&rd, "--rd")?;
            let qs = matrix_arg(&qs, "--qs")?;
            let bs = match bs {
                Some(s) => vector_arg(&s, "--bs")?,
                None => DVector::zeros(qs.nrows()),
            };
            let hs =
                Hamiltonian::quadratic(qs, bs, 0.0).map_err(|e| CliError::Usage(e.to_string()))?;
            let ida = ida_pbc_linear(&plant, &jd, &rd, &hs)?;
            let (gain, offset) = ida
                .law
                .as_affine(plant.dim())
                .expect("linear IDA-PBC laws are affine");
            let checks = vec![Check::at_most(
                "matching equation",
                ida.matching_residual,
                SYNTHESIS_TOL,
            )];
            done(
                checks,
                json!({
                    "gain": rows(&gain),
                    "offset": vec_json(&offset),
                    "annihilator": rows(&ida.annihilator),
                    "matching_residual": ida.matching_residual,
                }),
            )
        }
        Command::IohConvert { model, c, out } => {
            let (m, _) = open(&model, seed)?;
            match m {
                Loaded::Ioh(i) => {
                    if !c.is_empty() {
                        return Err(CliError::Usage("--c only applies to phs models".into()));
                    }
                    let ext = ioh_to_phs(&i)?;
                    let checks = ext.validate_at(&default_samples(ext.dim(), seed)).checks;
                    let origin = vec![0.0; ext.dim()];
                    let constant =
                        ext.base().constant_matrices().is_some() && ext.p().is_constant();
                    let mut result = json!({
                        "direction": "iohs-to-phs",
                        "constant": constant,
                        "G": rows(&ext.base().g().eval(&origin)?),
                        "G_prime": rows(&ext.g_prime()?.eval(&origin)?),
                        "P": rows(&ext.p().eval(&origin)?),
                        "M": rows(&ext.m().eval(&origin)?),
                        "S": rows(&ext.s().eval(&origin)?),
                    });
                    if !constant {
                        result["evaluated_at"] = json!(origin);
                    }
                    done(checks, result)
                }
                Loaded::Phs(p) => {
                    if c.is_empty() {
                        return Err(CliError::Usage(
                            "phs to iohs conversion needs --c per port".into(),
                        ));
                    }
                    let c = c
                        .iter()
                        .map(|s| Expr::parse(s, p.names()))
                        .collect::<Result<Vec<_>, _>>()?;
                    let ioh = phs_to_ioh(&as_extended(&p)?, c)?;
                    let checks = ioh.validate_at(&default_samples(ioh.dim(), seed)).checks;
                    let file = write_model(&ioh_json(&ioh)?, out.as_deref())?;
                    done(checks, json!({ "direction": "phs-to-iohs", "model": file }))
                }
            }
        }
        Command::IohFeedback { kind, a, b, p, out } => {
            let (ma, _) = open(&a, seed)?;
            let ia = ma.ioh("first system")?;
            let second = || -> Result<_, CliError> {
                let path = b.as_ref().ok_or_else(|| {
                    CliError::Usage("this interconnection needs a second model".into())
                })?;
                open(path, seed)?.0.ioh("second system")
            };
            let closed = match kind {
                IohFeedbackKind::Positive => positive_feedback(&ia, &second()?)?,
                IohFeedbackKind::Static => {
                    if b.is_some() {
                        return Err(CliError::Usage("`static` takes a single model".into()));
                    }
                    let src = p.ok_or_else(|| CliError::Usage("`static` needs --p".into()))?;
                    let pe = Expr::parse(&src, &numbered_names("y", ia.inputs()))?;
                    static_energy_feedback(&ia, &StaticEnergyFeedback::new(pe))?
                }
                IohFeedbackKind::GeneralP => {
                    let ib = second()?;
                    let src = p.ok_or_else(|| CliError::Usage("`general-p` needs --p".into()))?;
                    let pe = Expr::parse(&src, &numbered_names("y", ia.inputs() + ib.inputs()))?;
                    general_p_feedback(&ia, &ib, &pe)?
                }
            };
            let checks = closed
                .validate_at(&default_samples(closed.dim(), seed))
                .checks;
            let file = write_model(&ioh_json(&closed)?, out.as_deref())?;
            done(checks, json!({ "model": file }))
        }
        Command::Dcgain { a, b } => {
            let (ma, _) = open(&a, seed)?;
            let (mb, _) = open(&b, seed)?;
            let rep = dc_loop_gain_stability(&ma.ioh("first system")?, &mb.ioh("second system")?)?;
            done(rep.checks.clone(), to_value(&rep))
        }
        Command::NetMsd { graph, out } => {
            let graph_file = schema::read_model_file(&graph)?;
            let ModelFile::MsdGraph(g) = graph_file else {
                return Err(CliError::Usage(format!(
                    "{} is not an msd-graph file",
                    graph.display()
                )));
            };
            let model: PhsModel<f64> =
                build_msd(&g).map_err(|e| CliError::Schema(format!("{}: {e}", graph.display())))?;
            let checks = validate_phs(&model, &default_samples(model.dim(), seed)).checks;
            let file = write_model(&phs_json(&model)?, out.as_deref())?;
            done(
                checks,
                json!({ "n": model.dim(), "m": model.inputs(), "model": file }),
            )
        }
    }
}

fn run_simulation<D: Dynamics<f64>>(
    sys: &D,
    x0: &DVector<f64>,
    t_end: f64,
    dt: f64,
    method: Method,
    u: &[String],
    out: Option<&Path>,
) -> Res {
    let (n, m) = (sys.names().len(), sys.inputs());
    expect_len(x0, n, "--x0")?;
    let law = if u.is_empty() {
        SignalSpec::Zero(m)
    } else {
        if u.len() != m {
            return Err(CliError::Usage(format!(
                "{} --u expressions for {m} inputs",
                u.len()
            )));
        }
        SignalSpec::expressions(u).map_err(|e| CliError::Usage(e.to_string()))?
    };
    if !(dt > 0.0 && t_end > 0.0) {
        return Err(CliError::Usage("--dt and --t-end must be positive".into()));
    }
    let tr = simulate(sys, &law, x0, t_end, dt, method)?;
    let io_err = |e: io::Error| CliError::Usage(format!("cannot write trajectory: {e}"));
    match out {
        None => {
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            write_csv(&tr, &mut w)?;
            w.flush().map_err(io_err)?;
            Ok(None)
        }
        Some(p) => {
            let f = File::create(p).map_err(io_err)?;
            write_csv(&tr, BufWriter::new(f))?;
            done(
                Vec::new(),
                json!({
                    "out": p.display().to_string(),
                    "method": method,
                    "steps": tr.steps(),
                    "h": dt,
                    "final_state": vec_json(tr.states.last().expect("trajectories are non-empty")),
                    "energy_drift": tr.energy_drift(),
                    "solver": to_value(&tr.stats),
                }),
            )
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn synth_ci(
    plant: &PhsModel<f64>,
    ctrl: &PhsModel<f64>,
    lambda: Option<String>,
    damping: Option<f64>,
    phi: &str,
    target: Option<String>,
    x0: Option<String>,
    horizon: f64,
    dt: f64,
) -> Res {
    let search = closedloop_casimir_search(plant, ctrl)?;
    let mut checks = Vec::new();
    for i in 0..ctrl.dim() {
        let name = format!("Casimir for {}", ctrl.names()[i]);
        checks.push(match search.casimirs.iter().find(|c| c.index == i) {
            Some(c) => Check::at_most(name, c.j_residual.max(c.r_residual), SYNTHESIS_TOL),
            None => Check::failed(
                name,
                "no covector (-F_i, e_i) annihilates both J_cl and R_cl",
            ),
        });
    }
    let casimirs: Vec<Value> = search
        .casimirs
        .iter()
        .map(|c| json!({ "index": c.index, "F_row": vec_json(&c.f_row), "j_residual": c.j_residual, "r_residual": c.r_residual }))
        .collect();
    let mut result = json!({ "casimirs": casimirs, "obstacle": to_value(&search.obstacle) });
    let Some(f) = search.f_matrix() else {
        return done(checks, result);
    };
    result["F"] = rows(&f);
    let lambda = match lambda {
        Some(s) => vector_arg(&s, "--lambda")?,
        None => DVector::zeros(ctrl.dim()),
    };
    expect_len(&lambda, ctrl.dim(), "--lambda")?;
    let law = reduce_to_state_feedback(plant, ctrl, &f, &lambda)?;
    if let Some((k, k0)) = law.as_affine(plant.dim()) {
        result["gain"] = rows(&k);
        result["offset"] = vec_json(&k0);
    }
    let shaped = law.shaped_model(plant)?;
    result["shaped_hamiltonian"] = to_value(&schema_hamiltonian(&shaped)?);

    let Some(c) = damping else {
        return done(checks, result);
    };
    let target = match target {
        Some(s) => vector_arg(&s, "--target")?,
        None => {
            let (q, b, _) = shaped.hamiltonian().to_quadratic().ok_or_else(|| {
                CliError::Usage("non-quadratic shaped Hamiltonian: pass --target".into())
            })?;
            -linalg::solve_min_norm(&q, &b)
        }
    };
    expect_len(&target, plant.dim(), "--target")?;
    result["target"] = vec_json(&target);
    let phi = Expr::parse(phi, &["z0"])?;
    let (v, cert) = energy_casimir_candidate(&shaped, &[], &phi, &target)?;
    checks.extend(cert.checks.iter().cloned());
    result["minimum"] = to_value(&cert);
    if !cert.accepted {
        return done(checks, result);
    }
    let total = law.plus(damping_injection(&shaped, &v, &cert, c)?)?;
    if let Some((k, k0)) = total.as_affine(plant.dim()) {
        result["gain"] = rows(&k);
        result["offset"] = vec_json(&k0);
    }
    if let Some(s) = x0 {
        let x0 = vector_arg(&s, "--x0")?;
        expect_len(&x0, plant.dim(), "--x0")?;
        let (audit, _) = convergence_audit(plant, &total, &v, &x0, horizon, dt)?;
        checks.push(Check::at_most("V non-increasing", audit.max_increase, 1e-9));
        checks.push(Check::at_most(
            "final distance to target",
            audit.final_error,
            audit.tolerance,
        ));
        result["convergence"] = to_value(&audit);
    }
    done(checks, result)
}

fn schema_hamiltonian(m: &PhsModel<f64>) -> Result<Value, CliError> {
    let ModelFile::Phs(s) = phs_json(m)? else {
        unreachable!("phs_json writes phs files")
    };
    Ok(to_value(&s.hamiltonian))
}
