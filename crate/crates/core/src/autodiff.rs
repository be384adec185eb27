//! Forward-mode automatic differentiation on a nestable dual-number tower.
//!
//! A [`DualScalar`] is either a plain real or a dual node tagged with a
//! nesting *level*. Each call to [`seed`] opens a new level one above the
//! highest level among its inputs, so values from an outer pass are always
//! treated as constants by an inner one (no perturbation confusion). Nested
//! passes give higher derivatives: the backstepping recursion differentiates
//! virtual controls whose definition already contains first derivatives of
//! the previous stage.
//!
//! Partials are stored densely, one slot per seeded variable of the pass.

use std::ops::{Add, Div, Mul, Neg, Sub};

use thiserror::Error;

/// Deepest nesting level a tower may reach.
pub const MAX_DEPTH: u32 = 4;

/// Default smoothing constant for [`smooth_abs`].
pub const DEFAULT_SMOOTHING: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdError {
    #[error("division by zero in `div` (numerator value {numerator})")]
    DivisionByZero { numerator: f64 },
    #[error("`sqrt` of negative intermediate {value}")]
    NegativeSqrt { value: f64 },
    #[error("non-finite value produced by `{primitive}`")]
    NonFinite { primitive: &'static str },
    #[error("nesting level {requested} exceeds the supported maximum {max}")]
    DepthExceeded { requested: u32, max: u32 },
}

/// A real number carrying zero or more levels of forward derivatives.
#[derive(Clone, Debug, PartialEq)]
pub enum DualScalar {
    Real(f64),
    Dual(Box<DualNode>),
}

/// One level of the tower: a primal value and its partials with respect to
/// the variables seeded at `level`. Both may themselves be duals of lower
/// levels.
#[derive(Clone, Debug, PartialEq)]
pub struct DualNode {
    level: u32,
    value: DualScalar,
    partials: Vec<DualScalar>,
}

use DualScalar::{Dual, Real};

impl Default for DualScalar {
    fn default() -> Self {
        Real(0.0)
    }
}

impl From<f64> for DualScalar {
    fn from(v: f64) -> Self {
        Real(v)
    }
}

impl DualScalar {
    pub const ZERO: DualScalar = Real(0.0);
    pub const ONE: DualScalar = Real(1.0);

    pub fn constant(v: f64) -> Self {
        Real(v)
    }

    /// Builds a dual node directly. Partials are expected to live below `level`.
    pub fn from_parts(level: u32, value: DualScalar, partials: Vec<DualScalar>) -> Self {
        debug_assert!(level > value.level());
        Dual(Box::new(DualNode {
            level,
            value,
            partials,
        }))
    }

    /// Nesting level; zero for a plain real.
    pub fn level(&self) -> u32 {
        match self {
            Real(_) => 0,
            Dual(n) => n.level,
        }
    }

    /// The innermost real part.
    pub fn value(&self) -> f64 {
        let mut cur = self;
        loop {
            match cur {
                Real(v) => return *v,
                Dual(n) => cur = &n.value,
            }
        }
    }

    /// The primal one level down (itself for a real).
    pub fn primal(&self) -> &DualScalar {
        match self {
            Real(_) => self,
            Dual(n) => &n.value,
        }
    }

    /// Partials at the outermost level (empty for a real).
    pub fn partials(&self) -> &[DualScalar] {
        match self {
            Real(_) => &[],
            Dual(n) => &n.partials,
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Real(v) => v.is_finite(),
            Dual(n) => n.value.is_finite() && n.partials.iter().all(DualScalar::is_finite),
        }
    }

    /// Splits off the parts belonging to `level`, padding to `count` partials.
    /// A value that does not reach `level` is constant there: zero partials.
    pub fn split(self, level: u32, count: usize) -> (DualScalar, Vec<DualScalar>) {
        match self {
            Dual(n) if n.level == level => {
                let DualNode {
                    value, mut partials, ..
                } = *n;
                partials.resize(count, Real(0.0));
                (value, partials)
            }
            other => (other, vec![Real(0.0); count]),
        }
    }

    fn parts_at(&self, level: u32) -> (&DualScalar, &[DualScalar]) {
        match self {
            Dual(n) if n.level == level => (&n.value, &n.partials),
            _ => (self, &[]),
        }
    }

    fn chain(node: &DualNode, value: DualScalar, deriv: &DualScalar) -> DualScalar {
        Dual(Box::new(DualNode {
            level: node.level,
            value,
            partials: node.partials.iter().map(|p| p * deriv).collect(),
        }))
    }

    pub fn square(&self) -> Self {
        self * self
    }

    pub fn recip(&self) -> Self {
        Real(1.0) / self
    }

    pub fn powi(&self, k: i32) -> Self {
        match self {
            Real(v) => Real(v.powi(k)),
            Dual(n) => {
                if k == 0 {
                    return Real(1.0);
                }
                let deriv = n.value.powi(k - 1) * f64::from(k);
                Self::chain(n, n.value.powi(k), &deriv)
            }
        }
    }

    pub fn sin(&self) -> Self {
        match self {
            Real(v) => Real(v.sin()),
            Dual(n) => Self::chain(n, n.value.sin(), &n.value.cos()),
        }
    }

    pub fn cos(&self) -> Self {
        match self {
            Real(v) => Real(v.cos()),
            Dual(n) => Self::chain(n, n.value.cos(), &-n.value.sin()),
        }
    }

    pub fn exp(&self) -> Self {
        match self {
            Real(v) => Real(v.exp()),
            Dual(n) => {
                let e = n.value.exp();
                Self::chain(n, e.clone(), &e)
            }
        }
    }

    pub fn sqrt(&self) -> Self {
        match self {
            Real(v) => Real(v.sqrt()),
            Dual(n) => {
                let s = n.value.sqrt();
                let deriv = (&s * 2.0).recip();
                Self::chain(n, s, &deriv)
            }
        }
    }

    /// `sqrt(a² + eps²)`: a C¹ majorant of `|a|` within `eps` of it.
    pub fn smooth_abs(&self, eps: f64) -> Self {
        (self.square() + eps * eps).sqrt()
    }

    pub fn try_div(&self, rhs: &DualScalar) -> Result<Self, AdError> {
        if rhs.value() == 0.0 {
            return Err(AdError::DivisionByZero {
                numerator: self.value(),
            });
        }
        Ok(self / rhs)
    }

    pub fn try_sqrt(&self) -> Result<Self, AdError> {
        let v = self.value();
        if v < 0.0 {
            return Err(AdError::NegativeSqrt { value: v });
        }
        let out = self.sqrt();
        if !out.is_finite() {
            return Err(AdError::NonFinite { primitive: "sqrt" });
        }
        Ok(out)
    }
}

/// `sqrt(a² + eps²)` on plain reals.
pub fn smooth_abs(a: f64, eps: f64) -> f64 {
    a.hypot(eps)
}

/// Seeds `values` as the independent variables of a new differentiation
/// pass, one level above the highest level among them.
pub fn seed(values: &[DualScalar]) -> Result<Vec<DualScalar>, AdError> {
    let level = values.iter().map(DualScalar::level).max().unwrap_or(0) + 1;
    if level > MAX_DEPTH {
        return Err(AdError::DepthExceeded {
            requested: level,
            max: MAX_DEPTH,
        });
    }
    let m = values.len();
    Ok(values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut partials = vec![Real(0.0); m];
            partials[i] = Real(1.0);
            DualScalar::from_parts(level, v.clone(), partials)
        })
        .collect())
}

/// Value and first partials of `f` at a point that may itself live on the
/// tower. The returned partials sit one level below the seeded pass, so they
/// can be differentiated again by an enclosing pass.
pub fn gradient_at<F>(f: F, point: &[DualScalar]) -> Result<(DualScalar, Vec<DualScalar>), AdError>
where
    F: FnOnce(&[DualScalar]) -> Result<DualScalar, AdError>,
{
    let vars = seed(point)?;
    let level = vars.first().map_or(1, DualScalar::level);
    let out = f(&vars)?;
    Ok(out.split(level, point.len()))
}

/// Value and all first partials of a scalar function of `point.len()` reals.
pub fn gradient<F>(f: F, point: &[f64]) -> Result<(f64, Vec<f64>), AdError>
where
    F: FnOnce(&[DualScalar]) -> Result<DualScalar, AdError>,
{
    let point: Vec<DualScalar> = point.iter().map(|&v| Real(v)).collect();
    let (value, partials) = gradient_at(f, &point)?;
    if !value.is_finite() || !partials.iter().all(DualScalar::is_finite) {
        return Err(AdError::NonFinite {
            primitive: "gradient",
        });
    }
    Ok((value.value(), partials.iter().map(DualScalar::value).collect()))
}

/// Second derivative of a scalar function of one real, by nesting two passes.
pub fn second_derivative<F>(f: F, point: f64) -> Result<f64, AdError>
where
    F: FnOnce(&DualScalar) -> Result<DualScalar, AdError>,
{
    let inner = seed(&[Real(point)])?.remove(0);
    let inner_level = inner.level();
    let outer = seed(&[inner])?.remove(0);
    let outer_level = outer.level();
    let out = f(&outer)?;
    let (_, first) = out.split(outer_level, 1);
    let (_, second) = first.into_iter().next().unwrap_or_default().split(inner_level, 1);
    let d2 = second[0].value();
    if !d2.is_finite() {
        return Err(AdError::NonFinite {
            primitive: "second_derivative",
        });
    }
    Ok(d2)
}

fn zip_partials(
    a: &[DualScalar],
    b: &[DualScalar],
    mut f: impl FnMut(Option<&DualScalar>, Option<&DualScalar>) -> DualScalar,
) -> Vec<DualScalar> {
    (0..a.len().max(b.len()))
        .map(|i| f(a.get(i), b.get(i)))
        .collect()
}

fn add_ref(a: &DualScalar, b: &DualScalar) -> DualScalar {
    if let (Real(x), Real(y)) = (a, b) {
        return Real(x + y);
    }
    let level = a.level().max(b.level());
    let (av, ap) = a.parts_at(level);
    let (bv, bp) = b.parts_at(level);
    let partials = zip_partials(ap, bp, |p, q| match (p, q) {
        (Some(p), Some(q)) => p + q,
        (Some(p), None) => p.clone(),
        (None, Some(q)) => q.clone(),
        (None, None) => Real(0.0),
    });
    DualScalar::from_parts(level, av + bv, partials)
}

fn sub_ref(a: &DualScalar, b: &DualScalar) -> DualScalar {
    if let (Real(x), Real(y)) = (a, b) {
        return Real(x - y);
    }
    let level = a.level().max(b.level());
    let (av, ap) = a.parts_at(level);
    let (bv, bp) = b.parts_at(level);
    let partials = zip_partials(ap, bp, |p, q| match (p, q) {
        (Some(p), Some(q)) => p - q,
        (Some(p), None) => p.clone(),
        (None, Some(q)) => -q,
        (None, None) => Real(0.0),
    });
    DualScalar::from_parts(level, av - bv, partials)
}

fn mul_ref(a: &DualScalar, b: &DualScalar) -> DualScalar {
    if let (Real(x), Real(y)) = (a, b) {
        return Real(x * y);
    }
    let level = a.level().max(b.level());
    let (av, ap) = a.parts_at(level);
    let (bv, bp) = b.parts_at(level);
    let partials = zip_partials(ap, bp, |p, q| match (p, q) {
        (Some(p), Some(q)) => p * bv + av * q,
        (Some(p), None) => p * bv,
        (None, Some(q)) => av * q,
        (None, None) => Real(0.0),
    });
    DualScalar::from_parts(level, av * bv, partials)
}

fn div_ref(a: &DualScalar, b: &DualScalar) -> DualScalar {
    if let (Real(x), Real(y)) = (a, b) {
        return Real(x / y);
    }
    let level = a.level().max(b.level());
    let (av, ap) = a.parts_at(level);
    let (bv, bp) = b.parts_at(level);
    let quotient = av / bv;
    let partials = zip_partials(ap, bp, |p, q| match (p, q) {
        (Some(p), Some(q)) => (p - &quotient * q) / bv,
        (Some(p), None) => p / bv,
        (None, Some(q)) => -(&quotient * q) / bv,
        (None, None) => Real(0.0),
    });
    DualScalar::from_parts(level, quotient, partials)
}

fn scale_ref(a: &DualScalar, s: f64) -> DualScalar {
    match a {
        Real(x) => Real(x * s),
        Dual(n) => Dual(Box::new(DualNode {
            level: n.level,
            value: scale_ref(&n.value, s),
            partials: n.partials.iter().map(|p| scale_ref(p, s)).collect(),
        })),
    }
}

fn offset_ref(a: &DualScalar, s: f64) -> DualScalar {
    match a {
        Real(x) => Real(x + s),
        Dual(n) => Dual(Box::new(DualNode {
            level: n.level,
            value: offset_ref(&n.value, s),
            partials: n.partials.clone(),
        })),
    }
}

impl Neg for &DualScalar {
    type Output = DualScalar;
    fn neg(self) -> DualScalar {
        scale_ref(self, -1.0)
    }
}

impl Neg for DualScalar {
    type Output = DualScalar;
    fn neg(self) -> DualScalar {
        scale_ref(&self, -1.0)
    }
}

macro_rules! impl_binary {
    ($trait:ident, $method:ident, $func:ident) => {
        impl $trait<&DualScalar> for &DualScalar {
            type Output = DualScalar;
            fn $method(self, rhs: &DualScalar) -> DualScalar {
                $func(self, rhs)
            }
        }
        impl $trait<DualScalar> for DualScalar {
            type Output = DualScalar;
            fn $method(self, rhs: DualScalar) -> DualScalar {
                $func(&self, &rhs)
            }
        }
        impl $trait<&DualScalar> for DualScalar {
            type Output = DualScalar;
            fn $method(self, rhs: &DualScalar) -> DualScalar {
                $func(&self, rhs)
            }
        }
        impl $trait<DualScalar> for &DualScalar {
            type Output = DualScalar;
            fn $method(self, rhs: DualScalar) -> DualScalar {
                $func(self, &rhs)
            }
        }
    };
}

impl_binary!(Add, add, add_ref);
impl_binary!(Sub, sub, sub_ref);
impl_binary!(Mul, mul, mul_ref);
impl_binary!(Div, div, div_ref);

macro_rules! impl_scalar_rhs {
    ($lhs:ty) => {
        impl Add<f64> for $lhs {
            type Output = DualScalar;
            fn add(self, rhs: f64) -> DualScalar {
                offset_ref(&self, rhs)
            }
        }
        impl Sub<f64> for $lhs {
            type Output = DualScalar;
            fn sub(self, rhs: f64) -> DualScalar {
                offset_ref(&self, -rhs)
            }
        }
        impl Mul<f64> for $lhs {
            type Output = DualScalar;
            fn mul(self, rhs: f64) -> DualScalar {
                scale_ref(&self, rhs)
            }
        }
        impl Div<f64> for $lhs {
            type Output = DualScalar;
            fn div(self, rhs: f64) -> DualScalar {
                scale_ref(&self, 1.0 / rhs)
            }
        }
        impl Add<$lhs> for f64 {
            type Output = DualScalar;
            fn add(self, rhs: $lhs) -> DualScalar {
                offset_ref(&rhs, self)
            }
        }
        impl Sub<$lhs> for f64 {
            type Output = DualScalar;
            fn sub(self, rhs: $lhs) -> DualScalar {
                offset_ref(&scale_ref(&rhs, -1.0), self)
            }
        }
        impl Mul<$lhs> for f64 {
            type Output = DualScalar;
            fn mul(self, rhs: $lhs) -> DualScalar {
                scale_ref(&rhs, self)
            }
        }
        impl Div<$lhs> for f64 {
            type Output = DualScalar;
            fn div(self, rhs: $lhs) -> DualScalar {
                div_ref(&Real(self), &rhs)
            }
        }
    };
}

impl_scalar_rhs!(DualScalar);
impl_scalar_rhs!(&DualScalar);

impl std::iter::Sum for DualScalar {
    fn sum<I: Iterator<Item = DualScalar>>(iter: I) -> Self {
        iter.fold(Real(0.0), |acc, x| acc + x)
    }
}

impl<'a> std::iter::Sum<&'a DualScalar> for DualScalar {
    fn sum<I: Iterator<Item = &'a DualScalar>>(iter: I) -> Self {
        iter.fold(Real(0.0), |acc, x| acc + x)
    }
}

/// Lifts a slice of reals onto the tower as constants.
pub fn lift(values: &[f64]) -> Vec<DualScalar> {
    values.iter().map(|&v| Real(v)).collect()
}
