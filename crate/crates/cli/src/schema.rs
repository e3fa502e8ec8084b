//! JSON model files.
//!
//! ```json
//! {"kind": "phs", "state": ["q", "p"],
//!  "J": [[0, 1], [-1, 0]], "R": [[0, 0], [0, "0.1*q^2"]], "G": [[0], [1]],
//!  "hamiltonian": {"quadratic": {"Q": [[1, 0], [0, 1]]}}}
//! ```
//!
//! `kind` is `phs`, `iohs` (adds `"C": [...]`) or `msd-graph`.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use phs_core::energyport::IohModel;
use phs_core::model::{numbered_names, Entry, Hamiltonian, MatrixField, PhsModel};
use phs_core::netbuild::{build_msd, MsdGraph};
use phs_core::Expr;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Expr(String),
}

pub type MatrixJson = Vec<Vec<Cell>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HamiltonianJson {
    Quadratic {
        #[serde(rename = "Q")]
        q: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        b: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "is_zero")]
        c: f64,
    },
    Expr(String),
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RayleighJson {
    #[serde(rename = "GR")]
    pub gr: MatrixJson,
    /// Flow names used by `expr`; defaults to `f1..fr`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flows: Option<Vec<String>>,
    pub expr: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub state: Vec<String>,
    #[serde(rename = "J")]
    pub j: MatrixJson,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub r: Option<MatrixJson>,
    #[serde(rename = "G", default, skip_serializing_if = "Option::is_none")]
    pub g: Option<MatrixJson>,
    pub hamiltonian: HamiltonianJson,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rayleigh: Option<RayleighJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ModelFile {
    #[serde(rename = "phs")]
    Phs(SystemJson),
    #[serde(rename = "iohs")]
    Iohs(SystemJson),
    #[serde(rename = "msd-graph")]
    MsdGraph(MsdGraph),
}

/// A parsed model file.
#[derive(Debug, Clone)]
pub enum Loaded {
    Phs(PhsModel<f64>),
    Ioh(IohModel<f64>),
}

impl Loaded {
    pub fn kind(&self) -> &'static str {
        match self {
            Loaded::Phs(_) => "phs",
            Loaded::Ioh(_) => "iohs",
        }
    }

    pub fn phs(self, what: &str) -> Result<PhsModel<f64>, CliError> {
        match self {
            Loaded::Phs(m) => Ok(m),
            Loaded::Ioh(_) => Err(CliError::Usage(format!(
                "{what} must be a phs or msd-graph model"
            ))),
        }
    }

    pub fn ioh(self, what: &str) -> Result<IohModel<f64>, CliError> {
        match self {
            Loaded::Ioh(m) => Ok(m),
            Loaded::Phs(_) => Err(CliError::Usage(format!("{what} must be an iohs model"))),
        }
    }
}

pub fn read_model_file(path: &Path) -> Result<ModelFile, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let schema =
        |at: String, msg: String| CliError::Schema(format!("{}: at `{at}`: {msg}", path.display()));
    let mut doc: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| schema(".".into(), e.to_string()))?;
    let kind = match doc.as_object_mut().map(|o| o.remove("kind")) {
        Some(Some(serde_json::Value::String(k))) => k,
        Some(_) => return Err(schema("kind".into(), "missing or not a string".into())),
        None => return Err(schema(".".into(), "expected an object".into())),
    };
    fn body<T: serde::de::DeserializeOwned>(doc: serde_json::Value) -> Result<T, (String, String)> {
        serde_path_to_error::deserialize(doc)
            .map_err(|e| (e.path().to_string(), e.inner().to_string()))
    }
    let parsed = match kind.as_str() {
        "phs" => body(doc).map(ModelFile::Phs),
        "iohs" => body(doc).map(ModelFile::Iohs),
        "msd-graph" => body(doc).map(ModelFile::MsdGraph),
        other => {
            return Err(schema(
                "kind".into(),
                format!("unknown kind `{other}` (expected phs, iohs or msd-graph)"),
            ))
        }
    };
    parsed.map_err(|(at, msg)| schema(at, msg))
}

pub fn load_model(path: &Path) -> Result<Loaded, CliError> {
    let schema = |e: phs_core::Error| CliError::Schema(format!("{}: {e}", path.display()));
    match read_model_file(path)? {
        ModelFile::Phs(s) => {
            if s.c.is_some() {
                return Err(CliError::Schema(format!(
                    "{}: `C` is only allowed for kind `iohs`",
                    path.display()
                )));
            }
            Ok(Loaded::Phs(build_phs(&s).map_err(schema)?))
        }
        ModelFile::Iohs(s) => Ok(Loaded::Ioh(build_ioh(&s).map_err(schema)?)),
        ModelFile::MsdGraph(g) => Ok(Loaded::Phs(build_msd(&g).map_err(schema)?)),
    }
}

fn field(
    m: &MatrixJson,
    rows: usize,
    what: &str,
    names: &[String],
) -> phs_core::Result<MatrixField<f64>> {
    if m.len() != rows {
        return Err(phs_core::Error::Dimension(format!(
            "{what} has {} rows, expected {rows}",
            m.len()
        )));
    }
    let cols = m.first().map_or(0, Vec::len);
    let mut entries = Vec::with_capacity(rows * cols);
    for (i, row) in m.iter().enumerate() {
        if row.len() != cols {
            return Err(phs_core::Error::Dimension(format!(
                "{what} row {i} has {} entries, expected {cols}",
                row.len()
            )));
        }
        for c in row {
            entries.push(match c {
                Cell::Num(v) => Entry::Const(*v),
                Cell::Expr(s) => Entry::Expr(Expr::parse(s, names)?),
            });
        }
    }
    MatrixField::from_entries(rows, cols, entries, names)
}

fn numeric(m: &[Vec<f64>], what: &str) -> phs_core::Result<DMatrix<f64>> {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    if m.iter().any(|r| r.len() != cols) {
        return Err(phs_core::Error::Dimension(format!("{what} is ragged")));
    }
    Ok(DMatrix::from_fn(rows, cols, |i, j| m[i][j]))
}

/// Parses a row-major numeric matrix given on the command line.
pub fn matrix_arg(src: &str, what: &str) -> Result<DMatrix<f64>, CliError> {
    let rows: Vec<Vec<f64>> = serde_json::from_str(src)
        .map_err(|e| CliError::Usage(format!("{what}: expected a JSON array of rows: {e}")))?;
    numeric(&rows, what).map_err(|e| CliError::Usage(e.to_string()))
}

fn hamiltonian(h: &HamiltonianJson, names: &[String]) -> phs_core::Result<Hamiltonian<f64>> {
    match h {
        HamiltonianJson::Quadratic { q, b, c } => {
            let q = numeric(q, "Q")?;
            let b = match b {
                Some(b) => DVector::from_column_slice(b),
                None => DVector::zeros(q.nrows()),
            };
            Hamiltonian::quadratic(q, b, *c)
        }
        HamiltonianJson::Expr(s) => Ok(Hamiltonian::expression(Expr::parse(s, names)?)),
    }
}

type Blocks = (
    MatrixField<f64>,
    MatrixField<f64>,
    MatrixField<f64>,
    Hamiltonian<f64>,
);

fn parts(s: &SystemJson) -> phs_core::Result<Blocks> {
    let n = s.state.len();
    let names = &s.state;
    let j = field(&s.j, n, "J", names)?;
    let r = match &s.r {
        Some(r) => field(r, n, "R", names)?,
        None => MatrixField::zeros(n, n),
    };
    let g = match &s.g {
        Some(g) => field(g, n, "G", names)?,
        None => MatrixField::zeros(n, 0),
    };
    Ok((j, r, g, hamiltonian(&s.hamiltonian, names)?))
}

pub fn build_phs(s: &SystemJson) -> phs_core::Result<PhsModel<f64>> {
    let (j, r, g, h) = parts(s)?;
    let mut m = PhsModel::new(s.state.clone(), j, r, g, h)?;
    if let Some(ray) = &s.rayleigh {
        let gr = field(&ray.gr, s.state.len(), "GR", &s.state)?;
        let flows = ray
            .flows
            .clone()
            .unwrap_or_else(|| numbered_names("f", gr.cols()));
        m = m.with_rayleigh(gr, Expr::parse(&ray.expr, &flows)?)?;
    }
    if let Some(l) = &s.label {
        m = m.with_label(l.clone());
    }
    Ok(m)
}

pub fn build_ioh(s: &SystemJson) -> phs_core::Result<IohModel<f64>> {
    if s.g.is_some() || s.rayleigh.is_some() {
        return Err(phs_core::Error::Precondition(
            "iohs models take `C` instead of `G` and no Rayleigh term".into(),
        ));
    }
    let (j, r, _, h) = parts(s)?;
    let c =
        s.c.as_deref()
            .unwrap_or_default()
            .iter()
            .map(|e| Expr::parse(e, &s.state))
            .collect::<Result<Vec<_>, _>>()?;
    let m = IohModel::new(s.state.clone(), j, r, h, c)?;
    Ok(match &s.label {
        Some(l) => m.with_label(l.clone()),
        None => m,
    })
}

fn field_json(f: &MatrixField<f64>, what: &str) -> Result<MatrixJson, CliError> {
    let entries = f.entries().ok_or_else(|| {
        CliError::Usage(format!(
            "{what} is computed from other fields and cannot be written"
        ))
    })?;
    let cell = |e: &Entry<f64>| match e {
        Entry::Const(v) => Cell::Num(*v + 0.0),
        Entry::Expr(x) => match x.as_literal() {
            Some(v) => Cell::Num(v + 0.0),
            None => Cell::Expr(x.to_string()),
        },
    };
    let cols = f.cols();
    Ok((0..f.rows())
        .map(|i| entries[i * cols..(i + 1) * cols].iter().map(cell).collect())
        .collect())
}

fn hamiltonian_json(h: &Hamiltonian<f64>, names: &[String]) -> Result<HamiltonianJson, CliError> {
    if let Hamiltonian::Quadratic { q, b, c } = h {
        let rows = q
            .row_iter()
            .map(|r| r.iter().map(|v| v + 0.0).collect())
            .collect();
        let b = if b.iter().all(|v| *v == 0.0) {
            None
        } else {
            Some(b.iter().map(|v| v + 0.0).collect())
        };
        return Ok(HamiltonianJson::Quadratic {
            q: rows,
            b,
            c: *c + 0.0,
        });
    }
    Ok(HamiltonianJson::Expr(h.to_expr(names)?.to_string()))
}

fn label(l: &str) -> Option<String> {
    let l = l.trim();
    (!l.is_empty() && l != "x").then(|| l.to_string())
}

pub fn phs_json(m: &PhsModel<f64>) -> Result<ModelFile, CliError> {
    let rayleigh = match m.rayleigh() {
        Some(r) => Some(RayleighJson {
            gr: field_json(&r.gr, "GR")?,
            flows: Some(r.function.vars().to_vec()),
            expr: r.function.to_string(),
        }),
        None => None,
    };
    Ok(ModelFile::Phs(SystemJson {
        label: label(m.label()),
        state: m.names().to_vec(),
        j: field_json(m.j(), "J")?,
        r: Some(field_json(m.r(), "R")?),
        g: Some(field_json(m.g(), "G")?),
        hamiltonian: hamiltonian_json(m.hamiltonian(), m.names())?,
        c: None,
        rayleigh,
    }))
}

pub fn ioh_json(m: &IohModel<f64>) -> Result<ModelFile, CliError> {
    Ok(ModelFile::Iohs(SystemJson {
        label: label(m.label()),
        state: m.names().to_vec(),
        j: field_json(m.j(), "J")?,
        r: Some(field_json(m.r(), "R")?),
        g: None,
        hamiltonian: hamiltonian_json(m.hamiltonian(), m.names())?,
        c: Some(m.output_map().iter().map(|e| e.to_string()).collect()),
        rayleigh: None,
    }))
}
