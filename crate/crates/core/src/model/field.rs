//! State-modulated matrices: `J(x)`, `R(x)`, `G(x)` and friends.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::Scalar;

/// A single matrix entry: a constant or an expression of the state.
#[derive(Debug, Clone, PartialEq)]
pub enum Entry<T> {
    Const(T),
    Expr(Expr),
}

impl<T: Scalar> Entry<T> {
    fn as_const(&self) -> Option<T> {
        match self {
            Entry::Const(c) => Some(*c),
            Entry::Expr(e) => e.as_literal().map(T::lit),
        }
    }

    fn to_expr(&self, names: &[String]) -> Expr {
        match self {
            Entry::Const(c) => Expr::constant(c.as_f64(), names),
            Entry::Expr(e) => e.clone(),
        }
    }

    fn from_expr(e: Expr) -> Entry<T> {
        match e.as_literal() {
            Some(v) => Entry::Const(T::lit(v)),
            None => Entry::Expr(e),
        }
    }

    fn eval(&self, x: &[T]) -> Result<T> {
        match self {
            Entry::Const(c) => Ok(*c),
            Entry::Expr(e) => Ok(e.eval(x)?),
        }
    }
}

type DerivedFn<T> = dyn Fn(&[T]) -> Result<DMatrix<T>> + Send + Sync;

#[derive(Clone)]
enum Repr<T> {
    /// Row-major entries.
    Entries(Vec<Entry<T>>),
    /// Computed from other fields (e.g. products with output-map Jacobians).
    Derived(Arc<DerivedFn<T>>),
}

/// An `rows × cols` matrix whose entries may depend on the state.
#[derive(Clone)]
pub struct MatrixField<T> {
    rows: usize,
    cols: usize,
    repr: Repr<T>,
}

impl<T: fmt::Debug> fmt::Debug for MatrixField<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.repr {
            Repr::Entries(e) => f
                .debug_struct("MatrixField")
                .field("rows", &self.rows)
                .field("cols", &self.cols)
                .field("entries", e)
                .finish(),
            Repr::Derived(_) => write!(f, "MatrixField({}x{}, derived)", self.rows, self.cols),
        }
    }
}

impl<T: Scalar> From<DMatrix<T>> for MatrixField<T> {
    fn from(m: DMatrix<T>) -> Self {
        MatrixField::constant(m)
    }
}

impl<T: Scalar> MatrixField<T> {
    pub fn constant(m: DMatrix<T>) -> Self {
        let (rows, cols) = m.shape();
        let entries = (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .map(|(i, j)| Entry::Const(m[(i, j)]))
            .collect();
        MatrixField {
            rows,
            cols,
            repr: Repr::Entries(entries),
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        MatrixField::constant(DMatrix::zeros(rows, cols))
    }

    /// Builds from row-major entries; every expression must be over `names`.
    pub fn from_entries(
        rows: usize,
        cols: usize,
        entries: Vec<Entry<T>>,
        names: &[String],
    ) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::dim(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        for e in &entries {
            if let Entry::Expr(ex) = e {
                if ex.vars() != names {
                    return Err(Error::dim(format!(
                        "matrix entry `{ex}` is over variables {:?}, expected {:?}",
                        ex.vars(),
                        names
                    )));
                }
            }
        }
        Ok(MatrixField {
            rows,
            cols,
            repr: Repr::Entries(entries),
        })
    }

    /// A field computed by a closure of the full state vector.
    pub fn derived(
        rows: usize,
        cols: usize,
        f: impl Fn(&[T]) -> Result<DMatrix<T>> + Send + Sync + 'static,
    ) -> Self {
        MatrixField {
            rows,
            cols,
            repr: Repr::Derived(Arc::new(f)),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row-major entries, `None` for derived fields.
    pub fn entries(&self) -> Option<&[Entry<T>]> {
        match &self.repr {
            Repr::Entries(e) => Some(e),
            Repr::Derived(_) => None,
        }
    }

    pub fn is_derived(&self) -> bool {
        matches!(self.repr, Repr::Derived(_))
    }

    /// The matrix, when no entry depends on the state.
    pub fn as_constant(&self) -> Option<DMatrix<T>> {
        match &self.repr {
            Repr::Entries(e) => {
                let vals: Option<Vec<T>> = e.iter().map(Entry::as_const).collect();
                vals.map(|v| DMatrix::from_row_slice(self.rows, self.cols, &v))
            }
            Repr::Derived(_) => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.as_constant().is_some()
    }

    pub fn eval(&self, x: &[T]) -> Result<DMatrix<T>> {
        match &self.repr {
            Repr::Entries(e) => {
                let vals: Result<Vec<T>> = e.iter().map(|en| en.eval(x)).collect();
                Ok(DMatrix::from_row_slice(self.rows, self.cols, &vals?))
            }
            Repr::Derived(f) => {
                let m = f(x)?;
                if m.shape() != (self.rows, self.cols) {
                    return Err(Error::dim(format!(
                        "derived field produced {:?}, declared {}x{}",
                        m.shape(),
                        self.rows,
                        self.cols
                    )));
                }
                Ok(m)
            }
        }
    }

    fn entry(&self, i: usize, j: usize) -> &Entry<T> {
        match &self.repr {
            Repr::Entries(e) => &e[i * self.cols + j],
            Repr::Derived(_) => unreachable!("entry access on derived field"),
        }
    }

    pub fn transpose(&self) -> Self {
        match &self.repr {
            Repr::Entries(_) => {
                let entries = (0..self.cols)
                    .flat_map(|j| (0..self.rows).map(move |i| (i, j)))
                    .map(|(i, j)| self.entry(i, j).clone())
                    .collect();
                MatrixField {
                    rows: self.cols,
                    cols: self.rows,
                    repr: Repr::Entries(entries),
                }
            }
            Repr::Derived(f) => {
                let f = f.clone();
                MatrixField::derived(self.cols, self.rows, move |x| Ok(f(x)?.transpose()))
            }
        }
    }

    /// Moves the field onto the product state `new_names`, where this field's
    /// own `len` states sit at `offset`.
    pub fn embed(&self, new_names: &[String], offset: usize, len: usize) -> Self {
        match &self.repr {
            Repr::Entries(e) => {
                let entries = e
                    .iter()
                    .map(|en| match en {
                        Entry::Const(c) => Entry::Const(*c),
                        Entry::Expr(ex) => Entry::Expr(ex.reindex(new_names, |i| i + offset)),
                    })
                    .collect();
                MatrixField {
                    rows: self.rows,
                    cols: self.cols,
                    repr: Repr::Entries(entries),
                }
            }
            Repr::Derived(f) => {
                let f = f.clone();
                MatrixField::derived(self.rows, self.cols, move |x| f(&x[offset..offset + len]))
            }
        }
    }

    fn check_same_shape(&self, other: &Self, op: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::dim(format!(
                "{op}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    fn zip_entries(
        &self,
        other: &Self,
        names: &[String],
        f: impl Fn(&Expr, &Expr) -> Expr,
        g: impl Fn(T, T) -> T,
    ) -> Vec<Entry<T>> {
        (0..self.rows * self.cols)
            .map(|k| {
                let (i, j) = (k / self.cols, k % self.cols);
                let (a, b) = (self.entry(i, j), other.entry(i, j));
                match (a.as_const(), b.as_const()) {
                    (Some(x), Some(y)) => Entry::Const(g(x, y)),
                    _ => Entry::from_expr(f(&a.to_expr(names), &b.to_expr(names))),
                }
            })
            .collect()
    }

    pub fn add(&self, other: &Self, names: &[String]) -> Result<Self> {
        self.check_same_shape(other, "add")?;
        self.combine(other, names, |a, b| a + b, |a, b| a.try_add(b))
    }

    pub fn sub(&self, other: &Self, names: &[String]) -> Result<Self> {
        self.check_same_shape(other, "sub")?;
        self.combine(other, names, |a, b| a - b, |a, b| a.try_sub(b))
    }

    fn combine(
        &self,
        other: &Self,
        names: &[String],
        num: fn(T, T) -> T,
        sym: fn(&Expr, &Expr) -> std::result::Result<Expr, crate::expr::ExprError>,
    ) -> Result<Self> {
        if let (Some(a), Some(b)) = (self.as_constant(), other.as_constant()) {
            return Ok(MatrixField::constant(a.zip_map(&b, num)));
        }
        if !self.is_derived() && !other.is_derived() {
            let entries = self.zip_entries(
                other,
                names,
                |a, b| sym(a, b).expect("entries share the state variable list"),
                num,
            );
            return MatrixField::from_entries(self.rows, self.cols, entries, names);
        }
        let (a, b) = (self.clone(), other.clone());
        Ok(MatrixField::derived(self.rows, self.cols, move |x| {
            Ok(a.eval(x)?.zip_map(&b.eval(x)?, num))
        }))
    }

    pub fn neg(&self, names: &[String]) -> Self {
        self.scale(-1.0, names)
    }

    pub fn scale(&self, c: f64, names: &[String]) -> Self {
        match &self.repr {
            Repr::Entries(e) => {
                let entries = e
                    .iter()
                    .map(|en| match en.as_const() {
                        Some(v) => Entry::Const(v * T::lit(c)),
                        None => Entry::from_expr(en.to_expr(names).scaled(c)),
                    })
                    .collect();
                MatrixField {
                    rows: self.rows,
                    cols: self.cols,
                    repr: Repr::Entries(entries),
                }
            }
            Repr::Derived(f) => {
                let f = f.clone();
                MatrixField::derived(self.rows, self.cols, move |x| Ok(f(x)? * T::lit(c)))
            }
        }
    }

    /// Matrix product `self · other`.
    pub fn mul(&self, other: &Self, names: &[String]) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::dim(format!(
                "product of {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let (r, c, inner) = (self.rows, other.cols, self.cols);
        if let (Some(a), Some(b)) = (self.as_constant(), other.as_constant()) {
            return Ok(MatrixField::constant(a * b));
        }
        if !self.is_derived() && !other.is_derived() {
            let mut entries = Vec::with_capacity(r * c);
            for i in 0..r {
                for j in 0..c {
                    let mut acc_const = T::zero();
                    let mut acc_expr: Option<Expr> = None;
                    for k in 0..inner {
                        let (a, b) = (self.entry(i, k), other.entry(k, j));
                        match (a.as_const(), b.as_const()) {
                            (Some(x), Some(y)) => acc_const += x * y,
                            (Some(x), None) | (None, Some(x)) if x == T::zero() => {}
                            _ => {
                                let term = a
                                    .to_expr(names)
                                    .try_mul(&b.to_expr(names))
                                    .expect("entries share the state variable list");
                                acc_expr = Some(match acc_expr {
                                    None => term,
                                    Some(s) => s.try_add(&term).expect("shared variables"),
                                });
                            }
                        }
                    }
                    entries.push(match acc_expr {
                        None => Entry::Const(acc_const),
                        Some(e) => {
                            let total = Expr::constant(acc_const.as_f64(), names)
                                .try_add(&e)
                                .expect("shared variables");
                            Entry::from_expr(total)
                        }
                    });
                }
            }
            return MatrixField::from_entries(r, c, entries, names);
        }
        let (a, b) = (self.clone(), other.clone());
        Ok(MatrixField::derived(r, c, move |x| {
            Ok(a.eval(x)? * b.eval(x)?)
        }))
    }

    /// Assembles a 2×2 block field `[[a, b], [c, d]]`.
    pub fn blocks(a: &Self, b: &Self, c: &Self, d: &Self, names: &[String]) -> Result<Self> {
        if a.rows != b.rows || c.rows != d.rows || a.cols != c.cols || b.cols != d.cols {
            return Err(Error::dim(format!(
                "block shapes {:?} {:?} / {:?} {:?}",
                a.shape(),
                b.shape(),
                c.shape(),
                d.shape()
            )));
        }
        let rows = a.rows + c.rows;
        let cols = a.cols + b.cols;
        let parts = [a, b, c, d];
        if parts.iter().all(|p| !p.is_derived()) {
            let mut entries = Vec::with_capacity(rows * cols);
            for i in 0..rows {
                for j in 0..cols {
                    let (top, left) = (i < a.rows, j < a.cols);
                    let (blk, bi, bj) = match (top, left) {
                        (true, true) => (a, i, j),
                        (true, false) => (b, i, j - a.cols),
                        (false, true) => (c, i - a.rows, j),
                        (false, false) => (d, i - a.rows, j - a.cols),
                    };
                    entries.push(blk.entry(bi, bj).clone());
                }
            }
            return MatrixField::from_entries(rows, cols, entries, names);
        }
        let (a, b, c, d) = (a.clone(), b.clone(), c.clone(), d.clone());
        Ok(MatrixField::derived(rows, cols, move |x| {
            let mut out = DMatrix::zeros(rows, cols);
            out.view_mut((0, 0), a.shape()).copy_from(&a.eval(x)?);
            out.view_mut((0, a.cols), b.shape()).copy_from(&b.eval(x)?);
            out.view_mut((a.rows, 0), c.shape()).copy_from(&c.eval(x)?);
            out.view_mut((a.rows, a.cols), d.shape())
                .copy_from(&d.eval(x)?);
            Ok(out)
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> Vec<String> {
        vec!["q".into(), "p".into()]
    }

    #[test]
    fn constant_detection_and_eval() {
        let n = names();
        let f = MatrixField::from_entries(
            1,
            2,
            vec![
                Entry::Const(1.0),
                Entry::Expr(Expr::parse("q*p", &n).unwrap()),
            ],
            &n,
        )
        .unwrap();
        assert!(!f.is_constant());
        let m = f.eval(&[2.0, 3.0]).unwrap();
        assert_eq!(m[(0, 1)], 6.0);
        let t = f.transpose();
        assert_eq!(t.shape(), (2, 1));
        assert_eq!(t.eval(&[2.0, 3.0]).unwrap()[(1, 0)], 6.0);
    }

    #[test]
    fn symbolic_product_matches_numeric_product() {
        let n = names();
        let a = MatrixField::from_entries(
            2,
            1,
            vec![
                Entry::Const(0.0),
                Entry::Expr(Expr::parse("sin(q)", &n).unwrap()),
            ],
            &n,
        )
        .unwrap();
        let b = a.transpose();
        let prod = a.mul(&b, &n).unwrap();
        assert!(!prod.is_derived());
        let x = [0.7, -0.2];
        let expected = a.eval(&x).unwrap() * b.eval(&x).unwrap();
        assert!((prod.eval(&x).unwrap() - expected).norm() < 1e-15);
        let sum = prod.add(&prod.neg(&n), &n).unwrap();
        assert!(sum.eval(&x).unwrap().norm() < 1e-15);
    }

    #[test]
    fn rejects_foreign_variables() {
        let n = names();
        let e = Expr::parse("x", &["x"]).unwrap();
        assert!(MatrixField::<f64>::from_entries(1, 1, vec![Entry::Expr(e)], &n).is_err());
    }

    #[test]
    fn derived_fields_compose() {
        let n = names();
        let d = MatrixField::derived(1, 1, |x: &[f64]| {
            Ok(DMatrix::from_element(1, 1, x[0] * 2.0))
        });
        let c = MatrixField::constant(DMatrix::from_element(1, 1, 3.0));
        let s = d.add(&c, &n).unwrap();
        assert_eq!(s.eval(&[1.0, 0.0]).unwrap()[(0, 0)], 5.0);
        let big = MatrixField::blocks(&d, &c, &c, &d, &n).unwrap();
        assert_eq!(big.eval(&[1.0, 0.0]).unwrap()[(1, 1)], 2.0);
    }
}
