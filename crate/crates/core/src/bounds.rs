//! Tail bounds for sums of bounded symmetric i.i.d. variables and their
//! Monte Carlo check.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::substream;

fn check(n: u64, b: f64, lambda: f64) -> Result<()> {
    if n == 0 || !(b > 0.0) || !(lambda > 0.0) {
        return Err(Error::InvalidParameter("need N >= 1, b > 0 and lambda > 0".into()));
    }
    Ok(())
}

fn uncapped(n: u64, b: f64, lambda: f64) -> f64 {
    2.0 * (-lambda * lambda / (2.0 * n as f64 * b * b)).exp()
}

/// `P(|S_N| ≥ λ) ≤ min(1, 2exp(−λ²/(2Nb²)))`.
pub fn hoeffding_bound(n: u64, b: f64, lambda: f64) -> Result<f64> {
    check(n, b, lambda)?;
    Ok(uncapped(n, b, lambda).min(1.0))
}

/// `P(max_{m≤N} |S_m| ≥ λ) ≤ min(1, 4exp(−λ²/(2Nb²)))`.
pub fn kolmogorov_maximal_bound(n: u64, b: f64, lambda: f64) -> Result<f64> {
    check(n, b, lambda)?;
    Ok((2.0 * uncapped(n, b, lambda)).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailCheck {
    pub n: u64,
    pub b: f64,
    pub lambda: f64,
    pub maximal: bool,
    pub runs: usize,
    pub hits: usize,
    pub frequency: f64,
    pub bound: f64,
    /// Binomial standard error `sqrt(f(1−f)/runs)` of the frequency.
    pub std_error: f64,
    pub seed: u64,
}

impl TailCheck {
    /// `frequency ≤ bound + 4·std_error`.
    pub fn passed(&self) -> bool {
        self.frequency <= self.bound + 4.0 * self.std_error
    }
}

/// Simulates `runs` sums of `N` i.i.d. uniform(−b, b) variables and counts
/// `|S_N| ≥ λ`, or `max_m |S_m| ≥ λ` when `maximal`. Run `i` draws from
/// substream `i` of `seed`.
pub fn empirical_tail(n: u64, b: f64, lambda: f64, runs: usize, seed: u64, maximal: bool) -> Result<TailCheck> {
    check(n, b, lambda)?;
    if runs < 1000 {
        return Err(Error::InvalidParameter(format!("need at least 1000 runs, got {runs}")));
    }
    let hits: usize = (0..runs)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let mut s = 0.0f64;
            let mut peak = 0.0f64;
            for _ in 0..n {
                s += rng.random_range(-b..=b);
                peak = peak.max(s.abs());
            }
            usize::from(if maximal { peak >= lambda } else { s.abs() >= lambda })
        })
        .sum();
    let frequency = hits as f64 / runs as f64;
    let bound = if maximal { kolmogorov_maximal_bound(n, b, lambda)? } else { hoeffding_bound(n, b, lambda)? };
    Ok(TailCheck {
        n,
        b,
        lambda,
        maximal,
        runs,
        hits,
        frequency,
        bound,
        std_error: (frequency * (1.0 - frequency) / runs as f64).sqrt(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_values() {
        let h = hoeffding_bound(100, 1.0, 30.0).unwrap();
        assert!((h - 2.0 * (-4.5f64).exp()).abs() < 1e-15);
        assert!((h - 0.02222).abs() < 1e-5);
        assert_eq!(hoeffding_bound(100, 1.0, 10.0).unwrap(), 1.0);
        let k = kolmogorov_maximal_bound(100, 1.0, 30.0).unwrap();
        assert!((k - 0.04444).abs() < 1e-5);
        assert_eq!(hoeffding_bound(10, 1.0, 1e6).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(hoeffding_bound(0, 1.0, 1.0).is_err());
        assert!(kolmogorov_maximal_bound(1, -1.0, 1.0).is_err());
        assert!(empirical_tail(1, 1.0, 1.0, 10, 0, false).is_err());
    }

    #[test]
    fn impossible_event() {
        let c = empirical_tail(1, 1.0, 2.0, 1000, 3, false).unwrap();
        assert_eq!(c.hits, 0);
        assert!((c.bound - 2.0 * (-2.0f64).exp()).abs() < 1e-15);
        assert!(c.passed());
    }

    #[test]
    fn simulated_tails_respect_the_bounds() {
        for maximal in [false, true] {
            let c = empirical_tail(100, 1.0, 30.0, 20_000, 11, maximal).unwrap();
            assert!(c.passed(), "{c:?}");
        }
    }

    #[test]
    fn reproducible() {
        let a = empirical_tail(50, 0.5, 3.0, 2000, 5, true).unwrap();
        let b = empirical_tail(50, 0.5, 3.0, 2000, 5, true).unwrap();
        assert_eq!(a, b);
    }
}
