//! Constant Dirac structures in kernel representation `{(f, e) : F f + E e = 0}`.

use nalgebra::DMatrix;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg;
use crate::report::{all_passed, Check};
use crate::Scalar;

/// Tolerance for the power-conservation and `FEᵀ + EFᵀ` checks.
pub const DIRAC_TOL: f64 = 1e-10;

/// A named group of flow/effort coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Port {
    pub name: String,
    pub dim: usize,
}

impl Port {
    pub fn new(name: impl Into<String>, dim: usize) -> Port {
        Port {
            name: name.into(),
            dim,
        }
    }
}

/// A Dirac structure on `ℱ × ℰ` with `dim ℱ = dim ℰ = k`.
#[derive(Debug, Clone)]
pub struct DiracStructure<T> {
    ports: Vec<Port>,
    f: DMatrix<T>,
    e: DMatrix<T>,
}

fn single_port(k: usize) -> Vec<Port> {
    if k == 0 {
        Vec::new()
    } else {
        vec![Port::new("P", k)]
    }
}

impl<T: Scalar> DiracStructure<T> {
    /// Wraps a kernel pair after checking shapes; use [`verify_dirac`] for the axioms.
    pub fn from_kernel(f: DMatrix<T>, e: DMatrix<T>) -> Result<Self> {
        let k = f.ncols();
        if e.ncols() != k || f.nrows() != e.nrows() {
            return Err(Error::dim(format!(
                "F {:?} and E {:?} are not a kernel pair",
                f.shape(),
                e.shape()
            )));
        }
        Ok(DiracStructure {
            ports: single_port(k),
            f,
            e,
        })
    }

    /// Graph `f = J e` of a skew map.
    pub fn from_skew_map(j: &DMatrix<T>) -> Result<Self> {
        let v = linalg::skew_violation(j);
        if v > T::tol(1e-12) {
            return Err(Error::structure("skew-symmetry of J", v.as_f64()));
        }
        let k = j.nrows();
        Ok(DiracStructure {
            ports: single_port(k),
            f: DMatrix::identity(k, k),
            e: -j,
        })
    }

    /// `𝒦 × 𝒦^⊥` for `𝒦` spanned by the columns of `basis`.
    pub fn from_kirchhoff(basis: &DMatrix<T>) -> Result<Self> {
        let (k, d) = basis.shape();
        let r = linalg::rank(basis);
        if r != d {
            return Err(Error::Singular(format!(
                "Kirchhoff basis has rank {r} but {d} columns"
            )));
        }
        // f ∈ 𝒦  ⟺  Nᵀf = 0 for N spanning 𝒦^⊥; e ∈ 𝒦^⊥  ⟺  Bᵀe = 0.
        let perp = linalg::left_null_space(basis);
        let mut f = DMatrix::zeros(k, k);
        let mut e = DMatrix::zeros(k, k);
        f.view_mut((0, 0), (k - d, k)).copy_from(&perp);
        e.view_mut((k - d, 0), (d, k)).copy_from(&basis.transpose());
        Ok(DiracStructure {
            ports: single_port(k),
            f,
            e,
        })
    }

    /// Relabels the flow coordinates as consecutive port groups.
    pub fn with_ports(mut self, ports: Vec<Port>) -> Result<Self> {
        let total: usize = ports.iter().map(|p| p.dim).sum();
        if total != self.dim() {
            return Err(Error::dim(format!(
                "port layout covers {total} coordinates, structure has {}",
                self.dim()
            )));
        }
        self.ports = ports;
        Ok(self)
    }

    /// `k = dim ℱ`.
    pub fn dim(&self) -> usize {
        self.f.ncols()
    }

    pub fn ports(&self) -> &[Port] {
        &self.ports
    }

    pub fn f(&self) -> &DMatrix<T> {
        &self.f
    }

    pub fn e(&self) -> &DMatrix<T> {
        &self.e
    }

    /// `[F | E]`.
    pub fn kernel_matrix(&self) -> DMatrix<T> {
        let k = self.dim();
        let mut m = DMatrix::zeros(self.f.nrows(), 2 * k);
        m.view_mut((0, 0), (self.f.nrows(), k)).copy_from(&self.f);
        m.view_mut((0, k), (self.f.nrows(), k)).copy_from(&self.e);
        m
    }

    /// Columns `(f; e)` spanning the subspace.
    pub fn basis(&self) -> DMatrix<T> {
        linalg::null_space(&self.kernel_matrix())
    }

    /// True when both kernel representations describe the same subspace.
    pub fn same_subspace(&self, other: &Self) -> bool {
        if self.dim() != other.dim() {
            return false;
        }
        let a = self.kernel_matrix();
        let b = other.kernel_matrix();
        let ra = linalg::rank(&a);
        let mut stacked = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
        stacked.view_mut((0, 0), a.shape()).copy_from(&a);
        stacked.view_mut((a.nrows(), 0), b.shape()).copy_from(&b);
        ra == linalg::rank(&b) && ra == linalg::rank(&stacked)
    }

    pub fn verify(&self) -> DiracReport {
        verify_dirac(&self.f, &self.e)
    }

    /// Offset of a port group's first coordinate.
    fn port_range(&self, name: &str) -> Result<(usize, usize)> {
        let mut off = 0;
        for p in &self.ports {
            if p.name == name {
                return Ok((off, p.dim));
            }
            off += p.dim;
        }
        Err(Error::dim(format!("no port named `{name}`")))
    }
}

impl<T: Scalar> Serialize for DiracStructure<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows = |m: &DMatrix<T>| -> Vec<Vec<f64>> {
            m.row_iter()
                .map(|r| r.iter().map(|v| v.as_f64()).collect())
                .collect()
        };
        let mut st = s.serialize_struct("DiracStructure", 3)?;
        st.serialize_field("F", &rows(&self.f))?;
        st.serialize_field("E", &rows(&self.e))?;
        st.serialize_field("ports", &self.ports)?;
        st.end()
    }
}

/// Outcome of checking the Dirac axioms on a kernel pair.
#[derive(Debug, Clone, Serialize)]
pub struct DiracReport {
    pub k: usize,
    pub rank: usize,
    /// `max |FEᵀ + EFᵀ|`.
    pub skew_residual: f64,
    /// `max |eᵢᵀfⱼ + eⱼᵀfᵢ|` over a basis of the subspace.
    pub power_residual: f64,
    pub checks: Vec<Check>,
}

impl DiracReport {
    pub fn passed(&self) -> bool {
        all_passed(&self.checks)
    }
}

/// Rank of `[F | E]`, `FEᵀ + EFᵀ = 0`, and `eᵀf = 0` on the subspace.
pub fn verify_dirac<T: Scalar>(f: &DMatrix<T>, e: &DMatrix<T>) -> DiracReport {
    if f.shape() != e.shape() {
        return DiracReport {
            k: f.ncols(),
            rank: 0,
            skew_residual: f64::NAN,
            power_residual: f64::NAN,
            checks: vec![Check::failed("shape", "F and E differ in shape")],
        };
    }
    let k = f.ncols();
    let mut fe = DMatrix::zeros(f.nrows(), 2 * k);
    fe.view_mut((0, 0), f.shape()).copy_from(f);
    fe.view_mut((0, k), e.shape()).copy_from(e);
    let rank = linalg::rank(&fe);
    let skew = linalg::max_abs(&(f * e.transpose() + e * f.transpose())).as_f64();
    let basis = linalg::null_space(&fe);
    let power = if basis.ncols() == 0 {
        0.0
    } else {
        let fb = basis.rows(0, k);
        let eb = basis.rows(k, k);
        let pairing = eb.transpose() * fb;
        linalg::max_abs(&(&pairing + pairing.transpose())).as_f64()
    };
    let checks = vec![
        Check {
            name: "rank [F|E] = k".into(),
            passed: rank == k,
            value: rank as f64,
            tolerance: k as f64,
            detail: Some(format!("rank {rank}, k {k}")),
        },
        Check::at_most("F E^T + E F^T = 0", skew, DIRAC_TOL),
        Check::at_most("power conservation", power, DIRAC_TOL),
    ];
    DiracReport {
        k,
        rank,
        skew_residual: skew,
        power_residual: power,
        checks,
    }
}

/// Interconnects `a` and `b` through the named port pairs `(port of a, port of b)`
/// with `f_a = −f_b`, `e_a = e_b`, eliminating the shared variables.
///
/// The remaining ports of `a` come first, then those of `b`.
pub fn compose<T: Scalar>(
    a: &DiracStructure<T>,
    b: &DiracStructure<T>,
    shared: &[(&str, &str)],
) -> Result<DiracStructure<T>> {
    let (ka, kb) = (a.dim(), b.dim());
    // Map each coordinate to either an external index or a shared index.
    let mut shared_of_a = vec![None; ka];
    let mut shared_of_b = vec![None; kb];
    let mut ns = 0;
    for (pa, pb) in shared {
        let (oa, da) = a.port_range(pa)?;
        let (ob, db) = b.port_range(pb)?;
        if da != db {
            return Err(Error::dim(format!(
                "shared ports `{pa}` ({da}) and `{pb}` ({db}) differ in dimension"
            )));
        }
        for i in 0..da {
            if shared_of_a[oa + i].is_some() || shared_of_b[ob + i].is_some() {
                return Err(Error::dim("port paired twice"));
            }
            shared_of_a[oa + i] = Some(ns);
            shared_of_b[ob + i] = Some(ns);
            ns += 1;
        }
    }
    let ext_a: Vec<usize> = (0..ka).filter(|i| shared_of_a[*i].is_none()).collect();
    let ext_b: Vec<usize> = (0..kb).filter(|i| shared_of_b[*i].is_none()).collect();
    let ke = ext_a.len() + ext_b.len();

    // Unknowns: z = (f_ext, e_ext), w = (f_s, e_s) with f_s = f_a on shared ports.
    let rows = a.f.nrows() + b.f.nrows();
    let mut az: DMatrix<T> = DMatrix::zeros(rows, 2 * ke);
    let mut aw: DMatrix<T> = DMatrix::zeros(rows, 2 * ns);
    let mut place = |row0: usize,
                     d: &DiracStructure<T>,
                     ext: &[usize],
                     ext_off: usize,
                     shared_of: &[Option<usize>],
                     flow_sign: T| {
        for r in 0..d.f.nrows() {
            for (c, &i) in ext.iter().enumerate() {
                az[(row0 + r, ext_off + c)] = d.f[(r, i)];
                az[(row0 + r, ke + ext_off + c)] = d.e[(r, i)];
            }
            for (i, s) in shared_of.iter().enumerate() {
                if let Some(s) = s {
                    aw[(row0 + r, *s)] += flow_sign * d.f[(r, i)];
                    aw[(row0 + r, ns + *s)] += d.e[(r, i)];
                }
            }
        }
    };
    place(0, a, &ext_a, 0, &shared_of_a, T::one());
    place(a.f.nrows(), b, &ext_b, ext_a.len(), &shared_of_b, -T::one());

    let proj = if ns == 0 {
        DMatrix::identity(rows, rows)
    } else {
        linalg::left_null_space(&aw)
    };
    let reduced = linalg::row_space(&(proj * az));
    if reduced.nrows() != ke {
        return Err(Error::Singular(format!(
            "composition is degenerate: eliminated representation has rank {} for {ke} external flows",
            reduced.nrows()
        )));
    }
    let f = reduced.columns(0, ke).into_owned();
    let e = reduced.columns(ke, ke).into_owned();

    let mut ports = Vec::new();
    let shared_a: Vec<&str> = shared.iter().map(|p| p.0).collect();
    let shared_b: Vec<&str> = shared.iter().map(|p| p.1).collect();
    ports.extend(
        a.ports
            .iter()
            .filter(|p| !shared_a.contains(&p.name.as_str()))
            .cloned(),
    );
    ports.extend(
        b.ports
            .iter()
            .filter(|p| !shared_b.contains(&p.name.as_str()))
            .cloned(),
    );
    Ok(DiracStructure { ports, f, e })
}
