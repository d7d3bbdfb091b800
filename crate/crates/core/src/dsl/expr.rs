use std::fmt;

use thiserror::Error;

/// A variable reference inside an expression.
///
/// Indexed references (`x3`, `y1`) are stored zero-based. The bare names `x` and `y` are
/// resolved by context: the argument of a one-variable function, or the row node (for `x`)
/// and column node (for `y`) of a matrix entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X(usize),
    Y(usize),
    LocalX,
    LocalY,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Min,
    Max,
    Abs,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "min" => Func::Min,
            "max" => Func::Max,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Min => "min",
            Func::Max => "max",
            Func::Abs => "abs",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("logarithm of a non-positive number")]
    LogDomain,
    #[error("result is not a finite number")]
    NonFinite,
    #[error("variable {0:?} is not bound in this context")]
    Unbound(Var),
}

/// Values bound to the variables of an expression.
#[derive(Debug, Clone, Copy)]
pub struct Bindings<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub local_x: Option<f64>,
    pub local_y: Option<f64>,
}

impl<'a> Bindings<'a> {
    /// Bindings for a one-variable function: both bare names refer to `u`.
    pub fn scalar(u: f64) -> Bindings<'static> {
        Bindings {
            x: &[],
            y: &[],
            local_x: Some(u),
            local_y: Some(u),
        }
    }

    pub fn global(x: &'a [f64], y: &'a [f64]) -> Self {
        Bindings {
            x,
            y,
            local_x: None,
            local_y: None,
        }
    }

    /// Bindings for matrix entry `(i, j)`: bare `x` is `x_i`, bare `y` is `y_j`.
    pub fn entry(x: &'a [f64], y: &'a [f64], i: usize, j: usize) -> Self {
        Bindings {
            x,
            y,
            local_x: x.get(i).copied(),
            local_y: y.get(j).copied(),
        }
    }

    fn lookup(&self, var: Var) -> Result<f64, EvalError> {
        let v = match var {
            Var::X(k) => self.x.get(k).copied(),
            Var::Y(k) => self.y.get(k).copied(),
            Var::LocalX => self.local_x,
            Var::LocalY => self.local_y,
        };
        v.ok_or(EvalError::Unbound(var))
    }
}

impl Expr {
    pub fn eval(&self, b: &Bindings<'_>) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Var(var) => b.lookup(*var)?,
            Expr::Neg(e) => -e.eval(b)?,
            Expr::Binary(op, l, r) => {
                let l = l.eval(b)?;
                let r = r.eval(b)?;
                match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div => {
                        if r == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        l / r
                    }
                    BinOp::Pow => l.powf(r),
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval(b)?;
                match f {
                    Func::Exp => a.exp(),
                    Func::Log => {
                        if a <= 0.0 {
                            return Err(EvalError::LogDomain);
                        }
                        a.ln()
                    }
                    Func::Abs => a.abs(),
                    Func::Min => a.min(args[1].eval(b)?),
                    Func::Max => a.max(args[1].eval(b)?),
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    pub fn visit_vars(&self, f: &mut impl FnMut(Var)) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => f(*v),
            Expr::Neg(e) => e.visit_vars(f),
            Expr::Binary(_, l, r) => {
                l.visit_vars(f);
                r.visit_vars(f);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.visit_vars(f)),
        }
    }

    /// True when the expression only uses the bare names `x`/`y` (or no variables).
    pub fn is_univariate(&self) -> bool {
        let mut ok = true;
        self.visit_vars(&mut |v| ok &= matches!(v, Var::LocalX | Var::LocalY));
        ok
    }

    pub fn uses_local(&self) -> bool {
        let mut found = false;
        self.visit_vars(&mut |v| found |= matches!(v, Var::LocalX | Var::LocalY));
        found
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X(k) => write!(f, "x{}", k + 1),
            Var::Y(k) => write!(f, "y{}", k + 1),
            Var::LocalX => f.write_str("x"),
            Var::LocalY => f.write_str("y"),
        }
    }
}

/// Fully parenthesized rendering; re-parsing it yields the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Binary(op, l, r) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({l} {sym} {r})")
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}
