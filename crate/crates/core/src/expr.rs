//! Expression trees with forward-mode automatic differentiation.
//!
//! Expressions reference variables and data entries of one component model by
//! local index. Evaluation is generic over a scalar type so the same tree
//! yields values (`f64`), first derivatives (`Dual`) and second derivatives
//! (`Dual<Dual>`), the latter giving Hessian entries by forward-over-forward
//! seeding.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::ops::{Add, Div, Mul, Neg, Sub};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("log of non-positive value {0}")]
    LogDomain(f64),
    #[error("division by zero")]
    DivByZero,
    #[error("evaluation produced a non-finite value")]
    NonFinite,
    #[error("variable index {index} out of range (point has {len} entries)")]
    VarOutOfRange { index: usize, len: usize },
    #[error("data index {index} out of range ({len} entries)")]
    DataOutOfRange { index: usize, len: usize },
}

/// Expression tree node. `Var` and `Data` indices are local to the owning
/// component model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Data(usize),
    Neg(Box<Expr>),
    Exp(Box<Expr>),
    Ln(Box<Expr>),
    /// sqrt(x^2 + eps^2), a smooth |x| surrogate with recorded eps.
    SmoothAbs(Box<Expr>, f64),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn data(i: usize) -> Expr {
        Expr::Data(i)
    }

    pub fn constant(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn exp(self) -> Expr {
        Expr::Exp(Box::new(self))
    }

    pub fn ln(self) -> Expr {
        Expr::Ln(Box::new(self))
    }

    pub fn smooth_abs(self, eps: f64) -> Expr {
        Expr::SmoothAbs(Box::new(self), eps)
    }

    pub fn pow(self, e: Expr) -> Expr {
        Expr::Pow(Box::new(self), Box::new(e))
    }

    pub fn powi(self, e: i32) -> Expr {
        Expr::Pow(Box::new(self), Box::new(Expr::Const(f64::from(e))))
    }

    pub fn square(self) -> Expr {
        self.clone() * self
    }

    /// Balanced sum of `terms`; keeps tree depth logarithmic so very long
    /// sums stay friendly to recursion and serialization.
    pub fn sum(mut terms: Vec<Expr>) -> Expr {
        match terms.len() {
            0 => Expr::Const(0.0),
            1 => terms.pop().expect("one element"),
            _ => {
                let rest = terms.split_off(terms.len() / 2);
                Expr::sum(terms) + Expr::sum(rest)
            }
        }
    }

    /// Visits the additive terms of the tree: `a + b` and `a - b` split,
    /// everything else is one summand with the accumulated sign.
    fn for_each_summand<'a, F: FnMut(&'a Expr, f64)>(&'a self, sign: f64, f: &mut F) {
        match self {
            Expr::Add(a, b) => {
                a.for_each_summand(sign, f);
                b.for_each_summand(sign, f);
            }
            Expr::Sub(a, b) => {
                a.for_each_summand(sign, f);
                b.for_each_summand(-sign, f);
            }
            Expr::Neg(a) => a.for_each_summand(-sign, f),
            other => f(other, sign),
        }
    }

    /// Sorted indices of the variables appearing in the tree.
    pub fn support(&self) -> Vec<usize> {
        let mut set = BTreeSet::new();
        self.collect_support(&mut set);
        set.into_iter().collect()
    }

    fn collect_support(&self, set: &mut BTreeSet<usize>) {
        match self {
            Expr::Const(_) | Expr::Data(_) => {}
            Expr::Var(i) => {
                set.insert(*i);
            }
            Expr::Neg(a) | Expr::Exp(a) | Expr::Ln(a) | Expr::SmoothAbs(a, _) => {
                a.collect_support(set)
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.collect_support(set);
                b.collect_support(set);
            }
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        self.support().last().copied()
    }

    /// Expression text in prefix notation, used by canonical problem dumps.
    pub fn prefix(&self) -> String {
        match self {
            Expr::Const(v) => format!("{v}"),
            Expr::Var(i) => format!("x{i}"),
            Expr::Data(i) => format!("d{i}"),
            Expr::Neg(a) => format!("(neg {})", a.prefix()),
            Expr::Exp(a) => format!("(exp {})", a.prefix()),
            Expr::Ln(a) => format!("(ln {})", a.prefix()),
            Expr::SmoothAbs(a, eps) => format!("(sabs[{eps}] {})", a.prefix()),
            Expr::Add(a, b) => format!("(+ {} {})", a.prefix(), b.prefix()),
            Expr::Sub(a, b) => format!("(- {} {})", a.prefix(), b.prefix()),
            Expr::Mul(a, b) => format!("(* {} {})", a.prefix(), b.prefix()),
            Expr::Div(a, b) => format!("(/ {} {})", a.prefix(), b.prefix()),
            Expr::Pow(a, b) => format!("(^ {} {})", a.prefix(), b.prefix()),
        }
    }

    /// Evaluates at `point` with the given data vector.
    pub fn evaluate(&self, point: &[f64], data: &[f64]) -> Result<f64, EvalError> {
        let v = self.eval_checked(point, data)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    fn eval_checked(&self, point: &[f64], data: &[f64]) -> Result<f64, EvalError> {
        Ok(match self {
            Expr::Const(v) => *v,
            Expr::Var(i) => *point.get(*i).ok_or(EvalError::VarOutOfRange {
                index: *i,
                len: point.len(),
            })?,
            Expr::Data(i) => *data.get(*i).ok_or(EvalError::DataOutOfRange {
                index: *i,
                len: data.len(),
            })?,
            Expr::Neg(a) => -a.eval_checked(point, data)?,
            Expr::Exp(a) => a.eval_checked(point, data)?.exp(),
            Expr::Ln(a) => {
                let v = a.eval_checked(point, data)?;
                if v <= 0.0 {
                    return Err(EvalError::LogDomain(v));
                }
                v.ln()
            }
            Expr::SmoothAbs(a, eps) => {
                let v = a.eval_checked(point, data)?;
                (v * v + eps * eps).sqrt()
            }
            Expr::Add(a, b) => a.eval_checked(point, data)? + b.eval_checked(point, data)?,
            Expr::Sub(a, b) => a.eval_checked(point, data)? - b.eval_checked(point, data)?,
            Expr::Mul(a, b) => a.eval_checked(point, data)? * b.eval_checked(point, data)?,
            Expr::Div(a, b) => {
                let d = b.eval_checked(point, data)?;
                if d == 0.0 {
                    return Err(EvalError::DivByZero);
                }
                a.eval_checked(point, data)? / d
            }
            Expr::Pow(a, b) => a
                .eval_checked(point, data)?
                .powf(b.eval_checked(point, data)?),
        })
    }

    fn eval_generic<T: Scalar>(&self, point: &[T], data: &[f64]) -> T {
        match self {
            Expr::Const(v) => T::from_f64(*v),
            Expr::Var(i) => point[*i].clone(),
            Expr::Data(i) => T::from_f64(data[*i]),
            Expr::Neg(a) => -a.eval_generic(point, data),
            Expr::Exp(a) => a.eval_generic(point, data).exp(),
            Expr::Ln(a) => a.eval_generic(point, data).ln(),
            Expr::SmoothAbs(a, eps) => {
                let v = a.eval_generic(point, data);
                (v.clone() * v + T::from_f64(eps * eps)).sqrt()
            }
            Expr::Add(a, b) => a.eval_generic(point, data) + b.eval_generic(point, data),
            Expr::Sub(a, b) => a.eval_generic(point, data) - b.eval_generic(point, data),
            Expr::Mul(a, b) => a.eval_generic(point, data) * b.eval_generic(point, data),
            Expr::Div(a, b) => a.eval_generic(point, data) / b.eval_generic(point, data),
            Expr::Pow(a, b) => a.eval_generic(point, data).powt(&b.eval_generic(point, data)),
        }
    }

    /// Full gradient with respect to every entry of `point`. Additive terms
    /// are differentiated separately over their own supports, which keeps
    /// the cost near-linear for large sums of small terms.
    pub fn gradient(&self, point: &[f64], data: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.evaluate(point, data)?;
        let mut grad = vec![0.0; point.len()];
        let mut summands: Vec<(&Expr, f64)> = Vec::new();
        self.for_each_summand(1.0, &mut |e, s| summands.push((e, s)));
        for (term, sign) in summands {
            for i in term.support() {
                if i >= point.len() {
                    return Err(EvalError::VarOutOfRange {
                        index: i,
                        len: point.len(),
                    });
                }
                grad[i] += sign * term.derivative(point, data, i)?;
            }
        }
        Ok(grad)
    }

    /// Partial derivative with respect to variable `i`.
    pub fn derivative(&self, point: &[f64], data: &[f64], i: usize) -> Result<f64, EvalError> {
        let duals: Vec<Dual<f64>> = point
            .iter()
            .enumerate()
            .map(|(j, &v)| Dual::new(v, if j == i { 1.0 } else { 0.0 }))
            .collect();
        let out = self.eval_generic(&duals, data);
        if out.dx.is_finite() {
            Ok(out.dx)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Second partial derivative with respect to variables `i` and `j`.
    pub fn second_derivative(
        &self,
        point: &[f64],
        data: &[f64],
        i: usize,
        j: usize,
    ) -> Result<f64, EvalError> {
        let duals: Vec<Dual<Dual<f64>>> = point
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                Dual::new(
                    Dual::new(v, if k == j { 1.0 } else { 0.0 }),
                    Dual::new(if k == i { 1.0 } else { 0.0 }, 0.0),
                )
            })
            .collect();
        let out = self.eval_generic(&duals, data);
        let v = out.dx.dx;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Hessian entries scattered into `acc(row, col, value)` scaled by
    /// `weight`. Additive terms contribute independently over their own
    /// supports; within a term only the lower triangle is computed and
    /// mirrored.
    pub fn accumulate_hessian<F: FnMut(usize, usize, f64)>(
        &self,
        point: &[f64],
        data: &[f64],
        weight: f64,
        mut acc: F,
    ) -> Result<(), EvalError> {
        if weight == 0.0 {
            return Ok(());
        }
        let mut summands: Vec<(&Expr, f64)> = Vec::new();
        self.for_each_summand(1.0, &mut |e, s| summands.push((e, s)));
        for (term, sign) in summands {
            let support = term.support();
            for (a, &i) in support.iter().enumerate() {
                for &j in &support[..=a] {
                    let h = term.second_derivative(point, data, i, j)?;
                    if h != 0.0 {
                        acc(i, j, weight * sign * h);
                        if i != j {
                            acc(j, i, weight * sign * h);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Scalar algebra required by generic expression evaluation.
pub trait Scalar:
    Clone
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn value(&self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    /// Generalized power; uses the log form only when the exponent carries
    /// derivative information so constant exponents work for negative bases.
    fn powt(self, e: &Self) -> Self;
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn powt(self, e: &Self) -> Self {
        self.powf(*e)
    }
}

/// Forward-mode dual number: value plus one directional derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<T> {
    pub x: T,
    pub dx: T,
}

impl<T: Scalar> Dual<T> {
    pub fn new(x: T, dx: T) -> Self {
        Dual { x, dx }
    }

    pub fn constant(v: f64) -> Self {
        Dual {
            x: T::from_f64(v),
            dx: T::from_f64(0.0),
        }
    }

    fn is_constant(&self) -> bool {
        self.dx.value() == 0.0
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual::new(self.x + o.x, self.dx + o.dx)
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual::new(self.x - o.x, self.dx - o.dx)
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual::new(
            self.x.clone() * o.x.clone(),
            self.dx * o.x + self.x * o.dx,
        )
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        // (a/b)' = (a'b - ab') / b^2
        let denom = o.x.clone() * o.x.clone();
        Dual::new(
            self.x.clone() / o.x.clone(),
            (self.dx * o.x - self.x * o.dx) / denom,
        )
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual::new(-self.x, -self.dx)
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    fn from_f64(v: f64) -> Self {
        Dual::constant(v)
    }

    fn value(&self) -> f64 {
        self.x.value()
    }

    fn exp(self) -> Self {
        let e = self.x.exp();
        Dual::new(e.clone(), e * self.dx)
    }

    fn ln(self) -> Self {
        Dual::new(self.x.clone().ln(), self.dx / self.x)
    }

    fn sqrt(self) -> Self {
        let s = self.x.sqrt();
        Dual::new(
            s.clone(),
            self.dx / (T::from_f64(2.0) * s),
        )
    }

    fn powt(self, e: &Self) -> Self {
        if e.is_constant() {
            // d(u^c) = c u^(c-1) u'
            let c = e.x.clone();
            let pow = self.x.clone().powt(&e.x);
            let dpow = c.clone() * self.x.clone().powt(&(c - T::from_f64(1.0)));
            Dual::new(pow, dpow * self.dx)
        } else {
            // u^v = exp(v ln u)
            (e.clone() * self.ln()).exp()
        }
    }
}

impl Add<f64> for Expr {
    type Output = Expr;
    fn add(self, v: f64) -> Expr {
        Expr::Add(Box::new(self), Box::new(Expr::Const(v)))
    }
}

impl Add<Expr> for f64 {
    type Output = Expr;
    fn add(self, e: Expr) -> Expr {
        Expr::Add(Box::new(Expr::Const(self)), Box::new(e))
    }
}

impl Add for Expr {
    type Output = Expr;
    fn add(self, o: Expr) -> Expr {
        Expr::Add(Box::new(self), Box::new(o))
    }
}

impl Sub for Expr {
    type Output = Expr;
    fn sub(self, o: Expr) -> Expr {
        Expr::Sub(Box::new(self), Box::new(o))
    }
}

impl Sub<f64> for Expr {
    type Output = Expr;
    fn sub(self, v: f64) -> Expr {
        Expr::Sub(Box::new(self), Box::new(Expr::Const(v)))
    }
}

impl Sub<Expr> for f64 {
    type Output = Expr;
    fn sub(self, e: Expr) -> Expr {
        Expr::Sub(Box::new(Expr::Const(self)), Box::new(e))
    }
}

impl Mul for Expr {
    type Output = Expr;
    fn mul(self, o: Expr) -> Expr {
        Expr::Mul(Box::new(self), Box::new(o))
    }
}

impl Mul<f64> for Expr {
    type Output = Expr;
    fn mul(self, v: f64) -> Expr {
        Expr::Mul(Box::new(self), Box::new(Expr::Const(v)))
    }
}

impl Mul<Expr> for f64 {
    type Output = Expr;
    fn mul(self, e: Expr) -> Expr {
        Expr::Mul(Box::new(Expr::Const(self)), Box::new(e))
    }
}

impl Div for Expr {
    type Output = Expr;
    fn div(self, o: Expr) -> Expr {
        Expr::Div(Box::new(self), Box::new(o))
    }
}

impl Div<f64> for Expr {
    type Output = Expr;
    fn div(self, v: f64) -> Expr {
        Expr::Div(Box::new(self), Box::new(Expr::Const(v)))
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Expr {
        Expr::var(0)
    }

    fn y() -> Expr {
        Expr::var(1)
    }

    #[test]
    fn evaluate_basics() {
        assert_eq!((x() * x()).evaluate(&[3.0], &[]).unwrap(), 9.0);
        assert_eq!(
            (Expr::constant(0.0).exp() + 1.0).evaluate(&[], &[]).unwrap(),
            2.0
        );
        let sa = x().smooth_abs(1e-6);
        assert_eq!(sa.evaluate(&[0.0], &[]).unwrap(), 1e-6);
    }

    #[test]
    fn domain_errors() {
        assert_eq!(
            x().ln().evaluate(&[-1.0], &[]),
            Err(EvalError::LogDomain(-1.0))
        );
        assert_eq!(
            (Expr::constant(1.0) / x()).evaluate(&[0.0], &[]),
            Err(EvalError::DivByZero)
        );
    }

    #[test]
    fn gradient_basics() {
        let g = (x() * x()).gradient(&[3.0], &[]).unwrap();
        assert_eq!(g, vec![6.0]);
        let g = (x() * y()).gradient(&[2.0, 5.0], &[]).unwrap();
        assert_eq!(g, vec![5.0, 2.0]);
    }

    fn central_diff(e: &Expr, point: &[f64], data: &[f64], i: usize) -> f64 {
        let h = 1e-6 * (1.0 + point[i].abs());
        let mut p = point.to_vec();
        p[i] += h;
        let up = e.evaluate(&p, data).unwrap();
        p[i] = point[i] - h;
        let dn = e.evaluate(&p, data).unwrap();
        (up - dn) / (2.0 * h)
    }

    #[test]
    fn friction_term_gradient_matches_finite_differences() {
        // f * sabs(f) / p at (f, p) = (1.5, 2.0)
        let f = Expr::var(0);
        let p = Expr::var(1);
        let e = f.clone() * f.smooth_abs(1e-6) / p;
        let point = [1.5, 2.0];
        let g = e.gradient(&point, &[]).unwrap();
        for i in 0..2 {
            let fd = central_diff(&e, &point, &[], i);
            assert!(
                (g[i] - fd).abs() <= 1e-6 * fd.abs().max(1.0),
                "component {i}: ad={} fd={fd}",
                g[i]
            );
        }
    }

    #[test]
    fn second_derivatives() {
        // d2/dx2 (x^3) = 6x
        let e = x().powi(3);
        assert!((e.second_derivative(&[2.0], &[], 0, 0).unwrap() - 12.0).abs() < 1e-12);
        // d2/dxdy (x*y) = 1
        let e = x() * y();
        assert_eq!(e.second_derivative(&[4.0, 7.0], &[], 0, 1).unwrap(), 1.0);
    }

    #[test]
    fn data_reference() {
        let e = x() * Expr::data(0);
        assert_eq!(e.evaluate(&[3.0], &[4.0]).unwrap(), 12.0);
        assert_eq!(e.gradient(&[3.0], &[4.0]).unwrap(), vec![4.0]);
    }

    #[test]
    fn pow_constant_exponent_on_negative_base() {
        let e = x().powi(2);
        assert_eq!(e.evaluate(&[-3.0], &[]).unwrap(), 9.0);
        assert_eq!(e.gradient(&[-3.0], &[]).unwrap(), vec![-6.0]);
    }

    #[test]
    fn support_collects_sorted_vars() {
        let e = Expr::var(4) * Expr::var(1) + Expr::var(4) + Expr::data(2);
        assert_eq!(e.support(), vec![1, 4]);
    }

    #[test]
    fn summand_split_handles_signs() {
        // -(x^2) + y - (y*y - x) = -x^2 + y - y^2 + x
        let e = -(x().square()) + y() - (y().square() - x());
        let g = e.gradient(&[3.0, 2.0], &[]).unwrap();
        assert_eq!(g, vec![-5.0, -3.0]);
        let mut h = vec![vec![0.0; 2]; 2];
        e.accumulate_hessian(&[3.0, 2.0], &[], 1.0, |r, c, v| h[r][c] += v)
            .unwrap();
        assert_eq!(h, vec![vec![-2.0, 0.0], vec![0.0, -2.0]]);
    }

    #[test]
    fn balanced_sum_is_shallow_and_correct() {
        let terms: Vec<Expr> = (0..500).map(|_| x().square()).collect();
        let e = Expr::sum(terms);
        assert_eq!(e.evaluate(&[2.0], &[]).unwrap(), 2000.0);
        assert_eq!(e.gradient(&[2.0], &[]).unwrap(), vec![2000.0]);
        // depth stays serde-friendly
        let json = serde_json::to_string(&e).unwrap();
        let back: Expr = serde_json::from_str(&json).unwrap();
        assert_eq!(back.evaluate(&[2.0], &[]).unwrap(), 2000.0);
    }
}
