//! Smooth scalar functions on open subsets of `R^n`, as expression trees.
//!
//! Expressions are immutable and share subtrees through `Arc`, so
//! differentiation reuses its operand instead of copying it. Evaluation works
//! over the reals or over any Weil algebra; over an algebra the primitives are
//! lifted through their truncated Taylor series, which is exactly the action
//! of a near point on the function.

mod parser;

pub use parser::parse_expr;

use std::cell::RefCell;
use rustc_hash::FxHashMap as HashMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::weil_algebra::{WeilElement, DEFAULT_ZERO_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Primitive {
    Sin,
    Cos,
    Exp,
    Log,
}

impl Primitive {
    pub fn name(self) -> &'static str {
        match self {
            Primitive::Sin => "sin",
            Primitive::Cos => "cos",
            Primitive::Exp => "exp",
            Primitive::Log => "log",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "sin" => Some(Primitive::Sin),
            "cos" => Some(Primitive::Cos),
            "exp" => Some(Primitive::Exp),
            "log" => Some(Primitive::Log),
            _ => None,
        }
    }

    fn eval_real(self, x: f64) -> Result<f64> {
        match self {
            Primitive::Sin => Ok(x.sin()),
            Primitive::Cos => Ok(x.cos()),
            Primitive::Exp => Ok(x.exp()),
            Primitive::Log if x > 0.0 => Ok(x.ln()),
            Primitive::Log => Err(Error::Domain(format!("log of non-positive argument {x}"))),
        }
    }

    /// `k`-th derivative at `x`, closed form for every order.
    fn derivative(self, x: f64, k: usize) -> f64 {
        match self {
            Primitive::Sin => [x.sin(), x.cos(), -x.sin(), -x.cos()][k % 4],
            Primitive::Cos => [x.cos(), -x.sin(), -x.cos(), x.sin()][k % 4],
            Primitive::Exp => x.exp(),
            Primitive::Log if k == 0 => x.ln(),
            Primitive::Log => {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                let fact: f64 = (1..k).map(|i| i as f64).product();
                sign * fact / x.powi(k as i32)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Var(usize),
    Const(f64),
    Neg(Arc<Node>),
    Add(Arc<Node>, Arc<Node>),
    Sub(Arc<Node>, Arc<Node>),
    Mul(Arc<Node>, Arc<Node>),
    Div(Arc<Node>, Arc<Node>),
    Pow(Arc<Node>, u32),
    Call(Primitive, Arc<Node>),
}

/// A scalar expression in the variables `x0 .. x{n-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarExpr {
    arity: usize,
    root: Arc<Node>,
}

impl ScalarExpr {
    pub fn var(arity: usize, index: usize) -> Self {
        assert!(index < arity, "variable x{index} out of range for arity {arity}");
        ScalarExpr { arity, root: Arc::new(Node::Var(index)) }
    }

    pub fn constant(arity: usize, value: f64) -> Self {
        ScalarExpr { arity, root: Arc::new(Node::Const(value)) }
    }

    pub fn zero(arity: usize) -> Self {
        Self::constant(arity, 0.0)
    }

    pub fn one(arity: usize) -> Self {
        Self::constant(arity, 1.0)
    }

    pub fn parse(text: &str, arity: usize) -> Result<Self> {
        parse_expr(text, arity)
    }

    pub(crate) fn from_node(arity: usize, root: Arc<Node>) -> Self {
        ScalarExpr { arity, root }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn node(&self) -> &Node {
        &self.root
    }

    pub(crate) fn root(&self) -> &Arc<Node> {
        &self.root
    }

    pub fn as_constant(&self) -> Option<f64> {
        match *self.root {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_constant() == Some(0.0)
    }

    pub fn powi(&self, exp: u32) -> Self {
        self.wrap(pow(&self.root, exp))
    }

    pub fn apply(&self, primitive: Primitive) -> Self {
        self.wrap(call(primitive, &self.root))
    }

    pub fn sin(&self) -> Self {
        self.apply(Primitive::Sin)
    }

    pub fn cos(&self) -> Self {
        self.apply(Primitive::Cos)
    }

    pub fn exp(&self) -> Self {
        self.apply(Primitive::Exp)
    }

    pub fn log(&self) -> Self {
        self.apply(Primitive::Log)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.wrap(mul(&konst(c), &self.root))
    }

    fn wrap(&self, root: Arc<Node>) -> Self {
        ScalarExpr { arity: self.arity, root }
    }

    fn binary(&self, other: &ScalarExpr, op: fn(&Arc<Node>, &Arc<Node>) -> Arc<Node>) -> Self {
        assert_eq!(self.arity, other.arity, "expressions of different arity");
        self.wrap(op(&self.root, &other.root))
    }

    /// Symbolic partial derivative with respect to `x_i`.
    pub fn differentiate(&self, i: usize) -> Self {
        assert!(i < self.arity, "variable x{i} out of range for arity {}", self.arity);
        let key = (Arc::as_ptr(&self.root), i);
        if let Some(d) = DIFF_CACHE.with(|c| c.borrow().get(&key).map(|e| e.1.clone())) {
            return self.wrap(d);
        }
        let mut memo = HashMap::default();
        let d = diff(&self.root, i, &mut memo);
        DIFF_CACHE.with(|c| {
            let mut c = c.borrow_mut();
            if c.len() >= CACHE_LIMIT {
                c.clear();
            }
            c.insert(key, (self.root.clone(), d.clone()));
        });
        self.wrap(d)
    }

    /// Hash of the tree shape and constants; equal expressions hash equally.
    pub fn structural_hash(&self) -> u64 {
        HASH_CACHE.with(|c| {
            let mut c = c.borrow_mut();
            if c.len() >= CACHE_LIMIT {
                c.clear();
            }
            node_hash(&self.root, &mut c)
        })
    }

    /// `self(inner_0, ..., inner_{n-1})`; the result has the arity of `inner`.
    pub fn compose(&self, inner: &[ScalarExpr]) -> Result<Self> {
        if inner.len() != self.arity {
            return Err(Error::Input(format!(
                "composition needs {} inner functions, got {}",
                self.arity,
                inner.len()
            )));
        }
        let arity = inner.first().map_or(0, |e| e.arity);
        if inner.iter().any(|e| e.arity != arity) {
            return Err(Error::Input("inner functions have different arities".into()));
        }
        let roots: Vec<Arc<Node>> = inner.iter().map(|e| e.root.clone()).collect();
        Ok(ScalarExpr { arity, root: substitute(&self.root, &roots) })
    }

    pub fn eval_real(&self, x: &[f64]) -> Result<f64> {
        self.check_point_len(x.len())?;
        eval_real_node(&self.root, x)
    }

    /// Evaluate at a point of `(R^A)^n`, i.e. apply the near point with
    /// coordinates `point` to this function.
    pub fn eval_weil(&self, point: &[WeilElement]) -> Result<WeilElement> {
        let mut memo = ExprMemo::default();
        self.eval_weil_with(point, &mut memo)
    }

    pub(crate) fn eval_weil_with(&self, point: &[WeilElement], memo: &mut ExprMemo) -> Result<WeilElement> {
        self.check_point_len(point.len())?;
        if point.iter().skip(1).any(|p| !p.same_algebra(&point[0])) {
            return Err(Error::AlgebraMismatch);
        }
        eval_weil_node(&self.root, point, memo)
    }

    fn check_point_len(&self, len: usize) -> Result<()> {
        if len != self.arity {
            return Err(Error::Input(format!("point has {len} coordinates, expression arity is {}", self.arity)));
        }
        Ok(())
    }

    /// Count of tree nodes, shared subtrees counted once per reference.
    pub fn size(&self) -> usize {
        fn count(n: &Node) -> usize {
            match n {
                Node::Var(_) | Node::Const(_) => 1,
                Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => 1 + count(a),
                Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => 1 + count(a) + count(b),
            }
        }
        count(&self.root)
    }
}

/// Per-point cache of evaluated shared subtrees. Holds the nodes it keys on so
/// addresses cannot be reused while the cache lives.
#[derive(Default)]
pub(crate) struct ExprMemo {
    values: HashMap<*const Node, (Arc<Node>, WeilElement)>,
}

fn konst(c: f64) -> Arc<Node> {
    Arc::new(Node::Const(c))
}

fn as_const(n: &Node) -> Option<f64> {
    match n {
        Node::Const(c) => Some(*c),
        _ => None,
    }
}

// Constructors below fold constants and identity elements only.

fn neg(a: &Arc<Node>) -> Arc<Node> {
    match &**a {
        Node::Const(c) => konst(-c),
        Node::Neg(inner) => inner.clone(),
        _ => Arc::new(Node::Neg(a.clone())),
    }
}

fn add(a: &Arc<Node>, b: &Arc<Node>) -> Arc<Node> {
    match (as_const(a), as_const(b)) {
        (Some(x), Some(y)) => konst(x + y),
        (Some(x), _) if x == 0.0 => b.clone(),
        (_, Some(y)) if y == 0.0 => a.clone(),
        _ => Arc::new(Node::Add(a.clone(), b.clone())),
    }
}

fn sub(a: &Arc<Node>, b: &Arc<Node>) -> Arc<Node> {
    match (as_const(a), as_const(b)) {
        (Some(x), Some(y)) => konst(x - y),
        (Some(x), _) if x == 0.0 => neg(b),
        (_, Some(y)) if y == 0.0 => a.clone(),
        _ => Arc::new(Node::Sub(a.clone(), b.clone())),
    }
}

fn mul(a: &Arc<Node>, b: &Arc<Node>) -> Arc<Node> {
    match (as_const(a), as_const(b)) {
        (Some(x), Some(y)) => konst(x * y),
        (Some(x), _) | (_, Some(x)) if x == 0.0 => konst(0.0),
        (Some(x), _) if x == 1.0 => b.clone(),
        (_, Some(y)) if y == 1.0 => a.clone(),
        (Some(x), _) if x == -1.0 => neg(b),
        (_, Some(y)) if y == -1.0 => neg(a),
        _ => Arc::new(Node::Mul(a.clone(), b.clone())),
    }
}

fn div(a: &Arc<Node>, b: &Arc<Node>) -> Arc<Node> {
    match (as_const(a), as_const(b)) {
        (Some(x), Some(y)) if y != 0.0 => konst(x / y),
        (Some(x), _) if x == 0.0 => konst(0.0),
        (_, Some(y)) if y == 1.0 => a.clone(),
        _ => Arc::new(Node::Div(a.clone(), b.clone())),
    }
}

fn pow(a: &Arc<Node>, exp: u32) -> Arc<Node> {
    match (as_const(a), exp) {
        (_, 0) => konst(1.0),
        (_, 1) => a.clone(),
        (Some(x), e) => konst(x.powi(e as i32)),
        _ => Arc::new(Node::Pow(a.clone(), exp)),
    }
}

fn call(p: Primitive, a: &Arc<Node>) -> Arc<Node> {
    if let Some(x) = as_const(a) {
        if let Ok(v) = p.eval_real(x) {
            return konst(v);
        }
    }
    Arc::new(Node::Call(p, a.clone()))
}

/// Entries kept per thread before a cache is dropped wholesale.
const CACHE_LIMIT: usize = 1 << 20;

// Keyed by node address; each entry holds its key node alive.
thread_local! {
    static DIFF_CACHE: RefCell<HashMap<(*const Node, usize), (Arc<Node>, Arc<Node>)>> = RefCell::new(HashMap::default());
    static HASH_CACHE: RefCell<HashMap<*const Node, (Arc<Node>, u64)>> = RefCell::new(HashMap::default());
}

fn mix(h: u64, v: u64) -> u64 {
    (h.rotate_left(5) ^ v).wrapping_mul(0x517c_c1b7_2722_0a95)
}

fn node_hash(node: &Arc<Node>, memo: &mut HashMap<*const Node, (Arc<Node>, u64)>) -> u64 {
    if let Some((_, h)) = memo.get(&Arc::as_ptr(node)) {
        return *h;
    }
    let h = match &**node {
        Node::Var(i) => mix(1, *i as u64),
        Node::Const(c) => mix(2, c.to_bits()),
        Node::Neg(a) => mix(3, node_hash(a, memo)),
        Node::Add(a, b) => mix(mix(4, node_hash(a, memo)), node_hash(b, memo)),
        Node::Sub(a, b) => mix(mix(5, node_hash(a, memo)), node_hash(b, memo)),
        Node::Mul(a, b) => mix(mix(6, node_hash(a, memo)), node_hash(b, memo)),
        Node::Div(a, b) => mix(mix(7, node_hash(a, memo)), node_hash(b, memo)),
        Node::Pow(a, k) => mix(mix(8, node_hash(a, memo)), *k as u64),
        Node::Call(p, a) => mix(mix(9, *p as u64), node_hash(a, memo)),
    };
    memo.insert(Arc::as_ptr(node), (node.clone(), h));
    h
}

fn diff(node: &Arc<Node>, i: usize, memo: &mut HashMap<*const Node, (Arc<Node>, Arc<Node>)>) -> Arc<Node> {
    let key = Arc::as_ptr(node);
    if let Some((_, d)) = memo.get(&key) {
        return d.clone();
    }
    let d = match &**node {
        Node::Var(j) => konst(if *j == i { 1.0 } else { 0.0 }),
        Node::Const(_) => konst(0.0),
        Node::Neg(a) => neg(&diff(a, i, memo)),
        Node::Add(a, b) => add(&diff(a, i, memo), &diff(b, i, memo)),
        Node::Sub(a, b) => sub(&diff(a, i, memo), &diff(b, i, memo)),
        Node::Mul(a, b) => {
            let (da, db) = (diff(a, i, memo), diff(b, i, memo));
            add(&mul(&da, b), &mul(a, &db))
        }
        Node::Div(a, b) => {
            let (da, db) = (diff(a, i, memo), diff(b, i, memo));
            // a'/b - a b'/b^2
            sub(&div(&da, b), &div(&mul(a, &db), &pow(b, 2)))
        }
        Node::Pow(a, e) => {
            let da = diff(a, i, memo);
            mul(&mul(&konst(*e as f64), &pow(a, e - 1)), &da)
        }
        Node::Call(p, a) => {
            let da = diff(a, i, memo);
            let outer = match p {
                Primitive::Sin => call(Primitive::Cos, a),
                Primitive::Cos => neg(&call(Primitive::Sin, a)),
                Primitive::Exp => node.clone(),
                Primitive::Log => return memoized(memo, node, div(&da, a)),
            };
            mul(&outer, &da)
        }
    };
    memoized(memo, node, d)
}

fn memoized(
    memo: &mut HashMap<*const Node, (Arc<Node>, Arc<Node>)>,
    node: &Arc<Node>,
    d: Arc<Node>,
) -> Arc<Node> {
    memo.insert(Arc::as_ptr(node), (node.clone(), d.clone()));
    d
}

fn substitute(node: &Arc<Node>, inner: &[Arc<Node>]) -> Arc<Node> {
    match &**node {
        Node::Var(j) => inner[*j].clone(),
        Node::Const(c) => konst(*c),
        Node::Neg(a) => neg(&substitute(a, inner)),
        Node::Add(a, b) => add(&substitute(a, inner), &substitute(b, inner)),
        Node::Sub(a, b) => sub(&substitute(a, inner), &substitute(b, inner)),
        Node::Mul(a, b) => mul(&substitute(a, inner), &substitute(b, inner)),
        Node::Div(a, b) => div(&substitute(a, inner), &substitute(b, inner)),
        Node::Pow(a, e) => pow(&substitute(a, inner), *e),
        Node::Call(p, a) => call(*p, &substitute(a, inner)),
    }
}

fn eval_real_node(node: &Node, x: &[f64]) -> Result<f64> {
    let v = match node {
        Node::Var(j) => x[*j],
        Node::Const(c) => *c,
        Node::Neg(a) => -eval_real_node(a, x)?,
        Node::Add(a, b) => eval_real_node(a, x)? + eval_real_node(b, x)?,
        Node::Sub(a, b) => eval_real_node(a, x)? - eval_real_node(b, x)?,
        Node::Mul(a, b) => eval_real_node(a, x)? * eval_real_node(b, x)?,
        Node::Div(a, b) => {
            let den = eval_real_node(b, x)?;
            if den.abs() <= DEFAULT_ZERO_TOL {
                return Err(Error::Domain(format!("division by {den}")));
            }
            eval_real_node(a, x)? / den
        }
        Node::Pow(a, e) => eval_real_node(a, x)?.powi(*e as i32),
        Node::Call(p, a) => p.eval_real(eval_real_node(a, x)?)?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Domain(format!("non-finite value {v}")))
    }
}

fn eval_weil_node(node: &Arc<Node>, point: &[WeilElement], memo: &mut ExprMemo) -> Result<WeilElement> {
    let shared = Arc::strong_count(node) > 1 && !matches!(**node, Node::Var(_) | Node::Const(_));
    if shared {
        if let Some((_, v)) = memo.values.get(&Arc::as_ptr(node)) {
            return Ok(v.clone());
        }
    }
    let algebra = point[0].algebra();
    let v = match &**node {
        Node::Var(j) => point[*j].clone(),
        Node::Const(c) => WeilElement::constant(algebra, *c),
        Node::Neg(a) => -eval_weil_node(a, point, memo)?,
        Node::Add(a, b) => eval_weil_node(a, point, memo)? + eval_weil_node(b, point, memo)?,
        Node::Sub(a, b) => eval_weil_node(a, point, memo)? - eval_weil_node(b, point, memo)?,
        Node::Mul(a, b) => eval_weil_node(a, point, memo)? * eval_weil_node(b, point, memo)?,
        Node::Div(a, b) => {
            let num = eval_weil_node(a, point, memo)?;
            num * eval_weil_node(b, point, memo)?.inverse()?
        }
        Node::Pow(a, e) => eval_weil_node(a, point, memo)?.powi(*e),
        Node::Call(p, a) => {
            let arg = eval_weil_node(a, point, memo)?;
            // domain of the real primitive decides
            p.eval_real(arg.augmentation())?;
            arg.taylor_lift(|x, k| p.derivative(x, k))
        }
    };
    if v.coeffs().iter().any(|c| !c.is_finite()) {
        return Err(Error::Domain("non-finite coefficient".into()));
    }
    if shared {
        memo.values.insert(Arc::as_ptr(node), (node.clone(), v.clone()));
    }
    Ok(v)
}

macro_rules! expr_binop {
    ($trait:ident, $method:ident, $op:ident) => {
        impl $trait<&ScalarExpr> for &ScalarExpr {
            type Output = ScalarExpr;
            fn $method(self, rhs: &ScalarExpr) -> ScalarExpr {
                self.binary(rhs, $op)
            }
        }
        impl $trait<ScalarExpr> for ScalarExpr {
            type Output = ScalarExpr;
            fn $method(self, rhs: ScalarExpr) -> ScalarExpr {
                self.binary(&rhs, $op)
            }
        }
        impl $trait<&ScalarExpr> for ScalarExpr {
            type Output = ScalarExpr;
            fn $method(self, rhs: &ScalarExpr) -> ScalarExpr {
                self.binary(rhs, $op)
            }
        }
    };
}

expr_binop!(Add, add, add);
expr_binop!(Sub, sub, sub);
expr_binop!(Mul, mul, mul);
expr_binop!(Div, div, div);

impl Neg for &ScalarExpr {
    type Output = ScalarExpr;
    fn neg(self) -> ScalarExpr {
        self.wrap(neg(&self.root))
    }
}

impl Neg for ScalarExpr {
    type Output = ScalarExpr;
    fn neg(self) -> ScalarExpr {
        -&self
    }
}

const PREC_SUM: u8 = 1;
const PREC_PRODUCT: u8 = 2;
const PREC_UNARY: u8 = 3;
const PREC_ATOM: u8 = 5;

fn write_node(f: &mut fmt::Formatter<'_>, node: &Node, min_prec: u8) -> fmt::Result {
    let (prec, body): (u8, Box<dyn Fn(&mut fmt::Formatter<'_>) -> fmt::Result + '_>) = match node {
        Node::Var(j) => (PREC_ATOM, Box::new(move |f| write!(f, "x{j}"))),
        Node::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => {
            (PREC_ATOM, Box::new(move |f| write!(f, "(-{})", -c)))
        }
        Node::Const(c) => (PREC_ATOM, Box::new(move |f| write!(f, "{c}"))),
        Node::Call(p, a) => (
            PREC_ATOM,
            Box::new(move |f| {
                write!(f, "{}(", p.name())?;
                write_node(f, a, 0)?;
                write!(f, ")")
            }),
        ),
        Node::Pow(a, e) => (
            4,
            Box::new(move |f| {
                write_node(f, a, PREC_ATOM)?;
                write!(f, "^{e}")
            }),
        ),
        Node::Neg(a) => (
            PREC_UNARY,
            Box::new(move |f| {
                write!(f, "-")?;
                write_node(f, a, PREC_UNARY)
            }),
        ),
        Node::Add(a, b) | Node::Sub(a, b) => {
            let sym = if matches!(node, Node::Add(..)) { '+' } else { '-' };
            (
                PREC_SUM,
                Box::new(move |f| {
                    write_node(f, a, PREC_SUM)?;
                    write!(f, " {sym} ")?;
                    write_node(f, b, PREC_SUM + 1)
                }),
            )
        }
        Node::Mul(a, b) | Node::Div(a, b) => {
            let sym = if matches!(node, Node::Mul(..)) { '*' } else { '/' };
            (
                PREC_PRODUCT,
                Box::new(move |f| {
                    write_node(f, a, PREC_PRODUCT)?;
                    write!(f, "{sym}")?;
                    write_node(f, b, PREC_PRODUCT + 1)
                }),
            )
        }
    };
    if prec < min_prec {
        write!(f, "(")?;
        body(f)?;
        write!(f, ")")
    } else {
        body(f)
    }
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, &self.root, 0)
    }
}
