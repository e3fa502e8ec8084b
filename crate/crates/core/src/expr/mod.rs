//! Scalar expressions over named variables.
//!
//! Expressions carry Hamiltonians, state-modulated matrix entries, output
//! maps, Rayleigh functions and shaping functions. They are parsed once,
//! immutable afterwards, and differentiated exactly by forward-mode dual
//! evaluation.

mod dual;
mod parse;

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::DVector;
use thiserror::Error;

pub use dual::Dual;

use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at index {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("undeclared variable `{0}`")]
    Undeclared(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("expected {expected} variable values, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("no value supplied for variable `{0}`")]
    Missing(String),
    #[error("expressions over different variable lists cannot be combined")]
    VariableMismatch,
}

/// Elementary functions accepted by the grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

/// Syntax tree node. Variables are indices into the owning expression's
/// variable list; literals are non-negative (negation is a node).
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, i32),
    Call(Func, Box<Node>),
}

/// A parsed expression together with its declared variables and source text.
#[derive(Debug, Clone)]
pub struct Expr {
    node: Node,
    vars: Vec<String>,
    source: String,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.node == other.node && self.vars == other.vars
    }
}

impl Expr {
    /// Parses `source` against the ordered variable list `vars`.
    pub fn parse<S: AsRef<str>>(source: &str, vars: &[S]) -> Result<Expr, ExprError> {
        let vars: Vec<String> = vars.iter().map(|v| v.as_ref().to_string()).collect();
        let node = parse::parse(source, &vars)?;
        Ok(Expr {
            node,
            vars,
            source: source.to_string(),
        })
    }

    fn built(node: Node, vars: Vec<String>) -> Expr {
        let source = Printer(&node, &vars).to_string();
        Expr { node, vars, source }
    }

    /// Constant expression over `vars`.
    pub fn constant<S: AsRef<str>>(value: f64, vars: &[S]) -> Expr {
        Expr::built(
            const_node(value),
            vars.iter().map(|v| v.as_ref().to_string()).collect(),
        )
    }

    /// The `index`-th variable of `vars` as an expression.
    pub fn variable<S: AsRef<str>>(index: usize, vars: &[S]) -> Expr {
        assert!(index < vars.len(), "variable index out of range");
        Expr::built(
            Node::Var(index),
            vars.iter().map(|v| v.as_ref().to_string()).collect(),
        )
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn node(&self) -> &Node {
        &self.node
    }

    /// True when the tree contains no variable references.
    pub fn is_constant(&self) -> bool {
        !mentions_var(&self.node)
    }

    /// The value of a literal-only tree (`Num`, or negated `Num`).
    pub fn as_literal(&self) -> Option<f64> {
        literal(&self.node)
    }

    /// Evaluates at `point`, ordered like [`Expr::vars`].
    pub fn eval<T: Scalar>(&self, point: &[T]) -> Result<T, ExprError> {
        self.check_arity(point.len())?;
        let v = walk(&self.node, &|i| Plain(point[i]))?;
        Ok(v.0)
    }

    /// Evaluates at a name-to-value mapping covering every variable.
    pub fn eval_map<T: Scalar>(&self, point: &HashMap<String, T>) -> Result<T, ExprError> {
        let ordered = self.order_point(point)?;
        self.eval(&ordered)
    }

    /// Value and exact gradient (ordered like [`Expr::vars`]).
    pub fn eval_grad<T: Scalar>(&self, point: &[T]) -> Result<(T, DVector<T>), ExprError> {
        self.check_arity(point.len())?;
        let n = point.len();
        if n == 0 {
            return Ok((self.eval(point)?, DVector::zeros(0)));
        }
        let mut grad = DVector::zeros(n);
        let mut value = T::zero();
        for k in 0..n {
            let d = walk(&self.node, &|i| {
                if i == k {
                    Dual::variable(point[i])
                } else {
                    Dual::constant(point[i])
                }
            })?;
            grad[k] = d.du;
            value = d.re;
        }
        Ok((value, grad))
    }

    /// Value and gradient at a name-to-value mapping.
    pub fn eval_grad_map<T: Scalar>(
        &self,
        point: &HashMap<String, T>,
    ) -> Result<(T, DVector<T>), ExprError> {
        let ordered = self.order_point(point)?;
        self.eval_grad(&ordered)
    }

    fn order_point<T: Scalar>(&self, point: &HashMap<String, T>) -> Result<Vec<T>, ExprError> {
        self.vars
            .iter()
            .map(|v| {
                point
                    .get(v)
                    .copied()
                    .ok_or_else(|| ExprError::Missing(v.clone()))
            })
            .collect()
    }

    fn check_arity(&self, got: usize) -> Result<(), ExprError> {
        if got != self.vars.len() {
            return Err(ExprError::Arity {
                expected: self.vars.len(),
                got,
            });
        }
        Ok(())
    }

    /// Moves the expression onto a new variable list: variable `i` becomes
    /// `map(i)` in `new_vars`.
    pub fn reindex<S: AsRef<str>>(&self, new_vars: &[S], map: impl Fn(usize) -> usize) -> Expr {
        let nv: Vec<String> = new_vars.iter().map(|v| v.as_ref().to_string()).collect();
        let node = map_vars(&self.node, &|i| {
            let j = map(i);
            assert!(j < nv.len(), "reindexed variable out of range");
            Node::Var(j)
        });
        Expr::built(node, nv)
    }

    /// Replaces variable `i` by `replacements[i]`; all replacements must share
    /// one variable list, which becomes the result's.
    pub fn substitute(&self, replacements: &[Expr]) -> Result<Expr, ExprError> {
        if replacements.len() != self.vars.len() {
            return Err(ExprError::Arity {
                expected: self.vars.len(),
                got: replacements.len(),
            });
        }
        let target = match replacements.first() {
            Some(r) => r.vars.clone(),
            None => return Ok(self.clone()),
        };
        if replacements.iter().any(|r| r.vars != target) {
            return Err(ExprError::VariableMismatch);
        }
        let node = map_vars(&self.node, &|i| replacements[i].node.clone());
        Ok(Expr::built(node, target))
    }

    fn combine(&self, other: &Expr, f: impl Fn(Node, Node) -> Node) -> Result<Expr, ExprError> {
        if self.vars != other.vars {
            return Err(ExprError::VariableMismatch);
        }
        Ok(Expr::built(
            f(self.node.clone(), other.node.clone()),
            self.vars.clone(),
        ))
    }

    pub fn try_add(&self, other: &Expr) -> Result<Expr, ExprError> {
        self.combine(other, add_nodes)
    }

    pub fn try_sub(&self, other: &Expr) -> Result<Expr, ExprError> {
        self.combine(other, sub_nodes)
    }

    pub fn try_mul(&self, other: &Expr) -> Result<Expr, ExprError> {
        self.combine(other, mul_nodes)
    }

    pub fn negated(&self) -> Expr {
        Expr::built(neg_node(self.node.clone()), self.vars.clone())
    }

    pub fn scaled(&self, c: f64) -> Expr {
        Expr::built(
            mul_nodes(const_node(c), self.node.clone()),
            self.vars.clone(),
        )
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", Printer(&self.node, &self.vars))
    }
}

fn mentions_var(n: &Node) -> bool {
    match n {
        Node::Num(_) => false,
        Node::Var(_) => true,
        Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => mentions_var(a),
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
            mentions_var(a) || mentions_var(b)
        }
    }
}

fn literal(n: &Node) -> Option<f64> {
    match n {
        Node::Num(v) => Some(*v),
        Node::Neg(a) => match a.as_ref() {
            Node::Num(v) => Some(-*v),
            _ => None,
        },
        _ => None,
    }
}

fn map_vars(n: &Node, f: &dyn Fn(usize) -> Node) -> Node {
    let b = |x: &Node| Box::new(map_vars(x, f));
    match n {
        Node::Num(v) => Node::Num(*v),
        Node::Var(i) => f(*i),
        Node::Neg(a) => Node::Neg(b(a)),
        Node::Add(x, y) => Node::Add(b(x), b(y)),
        Node::Sub(x, y) => Node::Sub(b(x), b(y)),
        Node::Mul(x, y) => Node::Mul(b(x), b(y)),
        Node::Div(x, y) => Node::Div(b(x), b(y)),
        Node::Pow(a, k) => Node::Pow(b(a), *k),
        Node::Call(g, a) => Node::Call(*g, b(a)),
    }
}

fn const_node(v: f64) -> Node {
    assert!(v.is_finite(), "expression literals must be finite");
    if v < 0.0 {
        Node::Neg(Box::new(Node::Num(-v)))
    } else {
        // normalizes -0.0
        Node::Num(v.abs())
    }
}

fn neg_node(a: Node) -> Node {
    match literal(&a) {
        Some(v) => const_node(-v),
        None => match a {
            Node::Neg(inner) => *inner,
            other => Node::Neg(Box::new(other)),
        },
    }
}

fn add_nodes(a: Node, b: Node) -> Node {
    match (literal(&a), literal(&b)) {
        (Some(x), Some(y)) => const_node(x + y),
        (Some(0.0), None) => b,
        (None, Some(0.0)) => a,
        _ => Node::Add(Box::new(a), Box::new(b)),
    }
}

fn sub_nodes(a: Node, b: Node) -> Node {
    match (literal(&a), literal(&b)) {
        (Some(x), Some(y)) => const_node(x - y),
        (Some(0.0), None) => neg_node(b),
        (None, Some(0.0)) => a,
        _ => Node::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul_nodes(a: Node, b: Node) -> Node {
    match (literal(&a), literal(&b)) {
        (Some(x), Some(y)) => const_node(x * y),
        (Some(x), _) | (_, Some(x)) if x == 0.0 => Node::Num(0.0),
        (Some(1.0), None) => b,
        (None, Some(1.0)) => a,
        (Some(-1.0), None) => neg_node(b),
        (None, Some(-1.0)) => neg_node(a),
        _ => Node::Mul(Box::new(a), Box::new(b)),
    }
}

// ---------------------------------------------------------------------------
// evaluation

trait Arith<T: Scalar>:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_lit(v: f64) -> Self;
    fn re(&self) -> T;
    fn finite(&self) -> bool;
    fn apply(self, f: Func) -> Self;
    fn powi(self, n: i32) -> Self;
}

#[derive(Clone, Copy)]
struct Plain<T>(T);

impl<T: Scalar> Add for Plain<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Plain(self.0 + o.0)
    }
}
impl<T: Scalar> Sub for Plain<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Plain(self.0 - o.0)
    }
}
impl<T: Scalar> Mul for Plain<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Plain(self.0 * o.0)
    }
}
impl<T: Scalar> Div for Plain<T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        Plain(self.0 / o.0)
    }
}
impl<T: Scalar> Neg for Plain<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Plain(-self.0)
    }
}

impl<T: Scalar> Arith<T> for Plain<T> {
    fn from_lit(v: f64) -> Self {
        Plain(T::lit(v))
    }
    fn re(&self) -> T {
        self.0
    }
    fn finite(&self) -> bool {
        self.0.is_finite()
    }
    fn apply(self, f: Func) -> Self {
        Plain(match f {
            Func::Sin => self.0.sin(),
            Func::Cos => self.0.cos(),
            Func::Exp => self.0.exp(),
            Func::Ln => self.0.ln(),
            Func::Sqrt => self.0.sqrt(),
        })
    }
    fn powi(self, n: i32) -> Self {
        Plain(self.0.powi(n))
    }
}

impl<T: Scalar> Arith<T> for Dual<T> {
    fn from_lit(v: f64) -> Self {
        Dual::constant(T::lit(v))
    }
    fn re(&self) -> T {
        self.re
    }
    fn finite(&self) -> bool {
        self.re.is_finite() && self.du.is_finite()
    }
    fn apply(self, f: Func) -> Self {
        match f {
            Func::Sin => self.sin(),
            Func::Cos => self.cos(),
            Func::Exp => self.exp(),
            Func::Ln => self.ln(),
            Func::Sqrt => self.sqrt(),
        }
    }
    fn powi(self, n: i32) -> Self {
        Dual::powi(self, n)
    }
}

fn walk<T: Scalar, N: Arith<T>>(node: &Node, leaf: &dyn Fn(usize) -> N) -> Result<N, ExprError> {
    let out = match node {
        Node::Num(v) => N::from_lit(*v),
        Node::Var(i) => leaf(*i),
        Node::Neg(a) => -walk(a, leaf)?,
        Node::Add(a, b) => walk(a, leaf)? + walk(b, leaf)?,
        Node::Sub(a, b) => walk(a, leaf)? - walk(b, leaf)?,
        Node::Mul(a, b) => walk(a, leaf)? * walk(b, leaf)?,
        Node::Div(a, b) => {
            let num = walk(a, leaf)?;
            let den = walk(b, leaf)?;
            if den.re() == T::zero() {
                return Err(ExprError::Domain("division by zero".into()));
            }
            num / den
        }
        Node::Pow(a, k) => {
            let base = walk(a, leaf)?;
            if *k < 0 && base.re() == T::zero() {
                return Err(ExprError::Domain("zero raised to a negative power".into()));
            }
            base.powi(*k)
        }
        Node::Call(f, a) => {
            let arg = walk(a, leaf)?;
            match f {
                Func::Ln if arg.re() <= T::zero() => {
                    return Err(ExprError::Domain(format!(
                        "ln of non-positive value {}",
                        arg.re()
                    )));
                }
                Func::Sqrt if arg.re() < T::zero() => {
                    return Err(ExprError::Domain(format!(
                        "sqrt of negative value {}",
                        arg.re()
                    )));
                }
                _ => {}
            }
            arg.apply(*f)
        }
    };
    if !out.finite() {
        return Err(ExprError::Domain(format!(
            "non-finite result in `{}`",
            PrinterNoVars(node)
        )));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// printing

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_ATOM: u8 = 5;

fn prec(n: &Node) -> u8 {
    match n {
        Node::Add(..) | Node::Sub(..) => PREC_ADD,
        Node::Mul(..) | Node::Div(..) => PREC_MUL,
        Node::Neg(_) => PREC_NEG,
        Node::Pow(..) => 4,
        Node::Num(_) | Node::Var(_) | Node::Call(..) => PREC_ATOM,
    }
}

struct Printer<'a>(&'a Node, &'a [String]);

impl Printer<'_> {
    fn child(&self, f: &mut fmt::Formatter<'_>, n: &Node, min: u8) -> fmt::Result {
        if prec(n) < min {
            write!(f, "({})", Printer(n, self.1))
        } else {
            write!(f, "{}", Printer(n, self.1))
        }
    }
}

impl fmt::Display for Printer<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Node::Num(v) => write!(f, "{v}"),
            Node::Var(i) => match self.1.get(*i) {
                Some(name) => write!(f, "{name}"),
                None => write!(f, "${i}"),
            },
            Node::Neg(a) => {
                write!(f, "-")?;
                self.child(f, a, PREC_NEG)
            }
            Node::Add(a, b) | Node::Sub(a, b) => {
                self.child(f, a, PREC_ADD)?;
                write!(
                    f,
                    "{}",
                    if matches!(self.0, Node::Add(..)) {
                        "+"
                    } else {
                        "-"
                    }
                )?;
                self.child(f, b, PREC_MUL)
            }
            Node::Mul(a, b) | Node::Div(a, b) => {
                self.child(f, a, PREC_MUL)?;
                write!(
                    f,
                    "{}",
                    if matches!(self.0, Node::Mul(..)) {
                        "*"
                    } else {
                        "/"
                    }
                )?;
                self.child(f, b, PREC_NEG)
            }
            Node::Pow(a, k) => {
                self.child(f, a, PREC_ATOM)?;
                write!(f, "^{k}")
            }
            Node::Call(g, a) => write!(f, "{}({})", g.name(), Printer(a, self.1)),
        }
    }
}

struct PrinterNoVars<'a>(&'a Node);

impl fmt::Display for PrinterNoVars<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", Printer(self.0, &[]))
    }
}
