//! CSV trajectory files: `t,x:<name>...,u:1..m,y:1..m,H`, one row per grid point.

use std::io::{Read, Write};

use nalgebra::DVector;

use super::{Method, SolverStats, Trajectory};
use crate::error::{Error, Result};
use crate::Scalar;

/// Writes `traj` with shortest round-trip float formatting.
pub fn write_csv<T: Scalar, W: Write>(traj: &Trajectory<T>, out: W) -> Result<()> {
    traj.check_consistent()?;
    let mut w = csv::Writer::from_writer(out);
    let m = traj.inputs[0].len();
    let p = traj.outputs[0].len();
    let mut header = vec!["t".to_string()];
    header.extend(traj.names.iter().map(|n| format!("x:{n}")));
    header.extend((1..=m).map(|i| format!("u:{i}")));
    header.extend((1..=p).map(|i| format!("y:{i}")));
    header.push("H".into());
    w.write_record(&header)?;
    for k in 0..traj.states.len() {
        let mut row = vec![traj.time(k).to_string()];
        row.extend(traj.states[k].iter().map(|v| v.to_string()));
        row.extend(traj.inputs[k].iter().map(|v| v.to_string()));
        row.extend(traj.outputs[k].iter().map(|v| v.to_string()));
        row.push(traj.energy[k].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_csv`]; the method tag is not stored in the file.
pub fn read_csv<T: Scalar, R: Read>(input: R, method: Method) -> Result<Trajectory<T>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.first() != Some(&"t") || cols.last() != Some(&"H") {
        return Err(Error::Trajectory(
            "header must start with `t` and end with `H`".into(),
        ));
    }
    let mut names = Vec::new();
    let (mut m, mut p) = (0, 0);
    for (i, c) in cols[1..cols.len() - 1].iter().enumerate() {
        let expect_order = |ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(Error::Trajectory(format!(
                    "column {} `{c}` out of order",
                    i + 1
                )))
            }
        };
        if let Some(n) = c.strip_prefix("x:") {
            expect_order(m == 0 && p == 0)?;
            names.push(n.to_string());
        } else if let Some(idx) = c.strip_prefix("u:") {
            expect_order(p == 0 && idx == (m + 1).to_string())?;
            m += 1;
        } else if let Some(idx) = c.strip_prefix("y:") {
            expect_order(idx == (p + 1).to_string())?;
            p += 1;
        } else {
            return Err(Error::Trajectory(format!("unrecognized column `{c}`")));
        }
    }
    let n = names.len();
    let parse = |s: &str, row: usize| -> Result<T> {
        s.trim()
            .parse::<f64>()
            .map(T::lit)
            .map_err(|_| Error::Trajectory(format!("row {row}: `{s}` is not a number")))
    };
    let mut times = Vec::new();
    let (mut states, mut inputs, mut outputs, mut energy) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != cols.len() {
            return Err(Error::Trajectory(format!(
                "row {row} has {} fields",
                rec.len()
            )));
        }
        let vals = rec
            .iter()
            .map(|s| parse(s, row))
            .collect::<Result<Vec<T>>>()?;
        times.push(vals[0]);
        states.push(DVector::from_column_slice(&vals[1..1 + n]));
        inputs.push(DVector::from_column_slice(&vals[1 + n..1 + n + m]));
        outputs.push(DVector::from_column_slice(&vals[1 + n + m..1 + n + m + p]));
        energy.push(vals[1 + n + m + p]);
    }
    if times.len() < 2 {
        return Err(Error::Trajectory("need at least two samples".into()));
    }
    let t0 = times[0];
    let h = times[1] - times[0];
    if !(h > T::zero()) {
        return Err(Error::Trajectory("time column is not increasing".into()));
    }
    for (k, t) in times.iter().enumerate() {
        let expected = t0 + h * T::lit(k as f64);
        if (*t - expected).abs() > T::tol(1e-9) * (T::one() + t.abs()) {
            return Err(Error::Trajectory(format!("row {k}: grid is not uniform")));
        }
    }
    Ok(Trajectory {
        t0,
        h,
        method,
        names,
        states,
        inputs,
        outputs,
        energy,
        stage_inputs: Vec::new(),
        output_rates: Vec::new(),
        stats: SolverStats::default(),
    })
}
