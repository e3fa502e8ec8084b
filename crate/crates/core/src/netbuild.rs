//! Mass-spring-damper networks from directed graphs.
//!
//! Nodes are masses and edges are springs or dampers. The incidence column of
//! an edge has `+1` at its tail and `−1` at its head. An endpoint named
//! [`GROUND`] is a fixed wall and contributes no row.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Hamiltonian, PhsModel};
use crate::Scalar;

/// Reserved endpoint name for the fixed reference.
pub const GROUND: &str = "ground";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spring {
    pub from: String,
    pub to: String,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Damper {
    pub from: String,
    pub to: String,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MsdGraph {
    pub nodes: Vec<Node>,
    #[serde(default)]
    pub springs: Vec<Spring>,
    #[serde(default)]
    pub dampers: Vec<Damper>,
    #[serde(default)]
    pub actuated: Vec<String>,
}

impl MsdGraph {
    fn index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    /// Positive parameters, distinct node names, known endpoints.
    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Precondition(msg));
        for (i, n) in self.nodes.iter().enumerate() {
            if n.name == GROUND {
                return bad(format!("`{GROUND}` is reserved and cannot name a mass"));
            }
            if self.nodes[..i].iter().any(|m| m.name == n.name) {
                return bad(format!("duplicate node `{}`", n.name));
            }
            if !(n.mass > 0.0 && n.mass.is_finite()) {
                return bad(format!("node `{}` has mass {}", n.name, n.mass));
            }
        }
        let endpoint = |e: &str| e == GROUND || self.index(e).is_some();
        let edges = self
            .springs
            .iter()
            .map(|s| ("spring", &s.from, &s.to, s.k))
            .chain(self.dampers.iter().map(|d| ("damper", &d.from, &d.to, d.d)));
        for (kind, from, to, c) in edges {
            if !endpoint(from) || !endpoint(to) {
                return bad(format!("{kind} {from} -> {to} has an unknown endpoint"));
            }
            if from == to {
                return bad(format!("{kind} {from} -> {to} is a self-loop"));
            }
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("{kind} {from} -> {to} has coefficient {c}"));
            }
        }
        for a in &self.actuated {
            if self.index(a).is_none() {
                return bad(format!("actuated node `{a}` does not exist"));
            }
        }
        Ok(())
    }

    fn column<T: Scalar>(&self, from: &str, to: &str) -> DVector<T> {
        let mut col = DVector::zeros(self.nodes.len());
        if let Some(i) = self.index(from) {
            col[i] = T::one();
        }
        if let Some(i) = self.index(to) {
            col[i] = -T::one();
        }
        col
    }

    /// `(D_s, D_d)`, nodes × springs and nodes × dampers.
    pub fn incidence<T: Scalar>(&self) -> (DMatrix<T>, DMatrix<T>) {
        let n = self.nodes.len();
        let mut ds = DMatrix::zeros(n, self.springs.len());
        for (j, s) in self.springs.iter().enumerate() {
            ds.set_column(j, &self.column(&s.from, &s.to));
        }
        let mut dd = DMatrix::zeros(n, self.dampers.len());
        for (j, d) in self.dampers.iter().enumerate() {
            dd.set_column(j, &self.column(&d.from, &d.to));
        }
        (ds, dd)
    }

    /// Node × actuator selection matrix `E`.
    pub fn actuation<T: Scalar>(&self) -> DMatrix<T> {
        let mut e = DMatrix::zeros(self.nodes.len(), self.actuated.len());
        for (j, a) in self.actuated.iter().enumerate() {
            if let Some(i) = self.index(a) {
                e[(i, j)] = T::one();
            }
        }
        e
    }
}

/// State `(q, p)`: spring elongations `q1..`, then node momenta `p_<node>`.
///
/// ```text
/// J = [[0, D_sᵀ], [−D_s, 0]],  R = diag(0, D_d R̄ D_dᵀ),  G = [0; E]
/// H = ½ Σ k_j q_j² + ½ Σ p_i² / m_i
/// ```
///
/// The output `Gᵀ∇H = Eᵀ ∂H/∂p` is the velocity of each actuated mass.
pub fn build_msd<T: Scalar>(graph: &MsdGraph) -> Result<PhsModel<T>> {
    graph.check()?;
    let s = graph.springs.len();
    let nn = graph.nodes.len();
    let n = s + nn;
    let (ds, dd) = graph.incidence::<T>();
    let e = graph.actuation::<T>();

    let mut j = DMatrix::zeros(n, n);
    j.view_mut((0, s), (s, nn)).copy_from(&ds.transpose());
    j.view_mut((s, 0), (nn, s)).copy_from(&(-&ds));

    let rbar = DMatrix::from_diagonal(&DVector::from_iterator(
        graph.dampers.len(),
        graph.dampers.iter().map(|d| T::lit(d.d)),
    ));
    let mut r = DMatrix::zeros(n, n);
    r.view_mut((s, s), (nn, nn))
        .copy_from(&(&dd * rbar * dd.transpose()));

    let mut g = DMatrix::zeros(n, graph.actuated.len());
    g.view_mut((s, 0), (nn, graph.actuated.len())).copy_from(&e);

    let q = DVector::from_iterator(
        n,
        graph
            .springs
            .iter()
            .map(|sp| T::lit(sp.k))
            .chain(graph.nodes.iter().map(|nd| T::one() / T::lit(nd.mass))),
    );
    let names = (1..=s)
        .map(|i| format!("q{i}"))
        .chain(graph.nodes.iter().map(|nd| format!("p_{}", nd.name)))
        .collect();
    Ok(PhsModel::constant(
        names,
        j,
        r,
        g,
        Hamiltonian::pure_quadratic(DMatrix::from_diagonal(&q))?,
    )?
    .with_label("msd"))
}
