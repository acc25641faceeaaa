//! Exponent fields p(x,t) > 2 and the derived probabilities α, β.

use crate::error::{Error, Result};
use crate::num::Real;
use crate::table::RegularTable;

/// Probabilities of the tug-of-war round (α) and of the random move (β).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbabilityPair<T> {
    pub alpha: T,
    pub beta: T,
}

/// A measurable exponent `p: Ω_T → (2, ∞)` bounded below by `p_min() > 2`.
pub trait PExponentField<T: Real>: Send + Sync {
    fn p(&self, x: &[T], t: T) -> T;

    /// Lower bound on every returned value.
    fn p_min(&self) -> T;

    /// Upper bound on the returned values when one is known.
    fn p_max(&self) -> Option<T> {
        None
    }

    /// Lipschitz constant in (x,t) when known.
    fn lipschitz_constant(&self) -> Option<T> {
        None
    }

    /// True when the field does not depend on (x,t).
    fn is_constant(&self) -> bool {
        false
    }
}

fn check_floor<T: Real>(p_min: T) -> Result<()> {
    if !(p_min > T::lit(2.0)) || !p_min.is_finite() {
        return Err(Error::InvalidParameter(format!("p_min must exceed 2, got {p_min}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantP<T>(T);

impl<T: Real> ConstantP<T> {
    pub fn new(p: T) -> Result<Self> {
        check_floor(p)?;
        Ok(Self(p))
    }

    pub fn value(&self) -> T {
        self.0
    }
}

impl<T: Real> PExponentField<T> for ConstantP<T> {
    fn p(&self, _x: &[T], _t: T) -> T {
        self.0
    }
    fn p_min(&self) -> T {
        self.0
    }
    fn p_max(&self) -> Option<T> {
        Some(self.0)
    }
    fn lipschitz_constant(&self) -> Option<T> {
        Some(T::zero())
    }
    fn is_constant(&self) -> bool {
        true
    }
}

/// `p(x,t) = clamp(a·x + b·t + c, p_min, p_max)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineP<T> {
    gradient: Vec<T>,
    time_coeff: T,
    offset: T,
    p_min: T,
    p_max: Option<T>,
}

impl<T: Real> AffineP<T> {
    pub fn new(gradient: Vec<T>, time_coeff: T, offset: T, p_min: T, p_max: Option<T>) -> Result<Self> {
        check_floor(p_min)?;
        if let Some(hi) = p_max {
            if !(hi >= p_min) {
                return Err(Error::InvalidParameter("p_max must be at least p_min".into()));
            }
        }
        if gradient.iter().chain([&time_coeff, &offset]).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("affine coefficients must be finite".into()));
        }
        Ok(Self { gradient, time_coeff, offset, p_min, p_max })
    }
}

impl<T: Real> PExponentField<T> for AffineP<T> {
    fn p(&self, x: &[T], t: T) -> T {
        let raw = crate::num::dot(&self.gradient, x) + self.time_coeff * t + self.offset;
        let p = raw.max(self.p_min);
        match self.p_max {
            Some(hi) => p.min(hi),
            None => p,
        }
    }
    fn p_min(&self) -> T {
        self.p_min
    }
    fn p_max(&self) -> Option<T> {
        self.p_max
    }
    fn lipschitz_constant(&self) -> Option<T> {
        let g = self.gradient.iter().map(|&v| v * v).sum::<T>() + self.time_coeff * self.time_coeff;
        Some(g.sqrt())
    }
    fn is_constant(&self) -> bool {
        self.gradient.iter().all(|&v| v == T::zero()) && self.time_coeff == T::zero()
    }
}

/// Exponent tabulated over (x, t): the table has `n + 1` axes, time last.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedP<T> {
    table: RegularTable<T>,
}

impl<T: Real> TabulatedP<T> {
    pub fn new(table: RegularTable<T>) -> Result<Self> {
        check_floor(table.min_value())?;
        Ok(Self { table })
    }
}

impl<T: Real> PExponentField<T> for TabulatedP<T> {
    fn p(&self, x: &[T], t: T) -> T {
        let mut q = x.to_vec();
        q.push(t);
        self.table.eval(&q)
    }
    fn p_min(&self) -> T {
        self.table.min_value()
    }
    fn p_max(&self) -> Option<T> {
        Some(self.table.max_value())
    }
}

/// Exponent given by a closure with a declared lower bound.
pub struct FnP<F, T> {
    f: F,
    p_min: T,
}

impl<T: Real, F: Fn(&[T], T) -> T + Send + Sync> FnP<F, T> {
    pub fn new(p_min: T, f: F) -> Result<Self> {
        check_floor(p_min)?;
        Ok(Self { f, p_min })
    }
}

impl<T: Real, F: Fn(&[T], T) -> T + Send + Sync> PExponentField<T> for FnP<F, T> {
    fn p(&self, x: &[T], t: T) -> T {
        (self.f)(x, t)
    }
    fn p_min(&self) -> T {
        self.p_min
    }
}

/// α = (p − 2)/(p + n) and β = 1 − α at (x, t).
pub fn eval_probabilities<T: Real>(
    field: &dyn PExponentField<T>,
    x: &[T],
    t: T,
    n: usize,
) -> Result<ProbabilityPair<T>> {
    let p = field.p(x, t);
    probabilities_from_p(p, n).ok_or_else(|| Error::ExponentOutOfRange {
        p: p.as_f64(),
        x: x.iter().map(|v| v.as_f64()).collect(),
        t: t.as_f64(),
    })
}

/// α, β for a given exponent value; `None` unless `2 < p < ∞`.
pub fn probabilities_from_p<T: Real>(p: T, n: usize) -> Option<ProbabilityPair<T>> {
    if !(p > T::lit(2.0)) || !p.is_finite() {
        return None;
    }
    let alpha = (p - T::lit(2.0)) / (p + T::from_count(n));
    Some(ProbabilityPair { alpha, beta: T::one() - alpha })
}
