use rand::Rng;

use super::{scan, BarrierReport};
use crate::error::{Error, Result};
use crate::num::{distance, norm};
use crate::rng::{unit_vector, StreamRng};

/// `F(x,z,t) = f₁(x,z) − f₂(x,z) + g(t)` with `f₁ = C|x−z|^δ + |x+z|²`,
/// the ring function `f₂ = C^{2(N−i)}ε^δ` on the annulus
/// `(i−1)ε/10 < |x−z| ≤ iε/10` (zero beyond ring `N`) and `g = |t|^{δ/2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderComparison {
    pub c: f64,
    pub rings: u64,
    pub delta: f64,
    pub epsilon: f64,
}

impl HolderComparison {
    pub fn new(c: f64, rings: u64, delta: f64, epsilon: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter("delta must lie in (0, 1)".into()));
        }
        if !(c > 1.0) || !(epsilon > 0.0) {
            return Err(Error::InvalidParameter("need C > 1 and epsilon > 0".into()));
        }
        if !(rings as f64 > 100.0 * c / delta) {
            return Err(Error::Precondition(format!("N = {rings} must exceed 100 C / delta = {}", 100.0 * c / delta)));
        }
        Ok(Self { c, rings, delta, epsilon })
    }

    /// Defaults `δ = 0.05`, `C = 10⁴` (so `Cδ = 500 > 20`) and
    /// `N = ⌈100C/δ⌉ + 1`.
    pub fn with_defaults(epsilon: f64) -> Self {
        let (c, delta) = (1e4, 0.05);
        Self { c, rings: (100.0 * c / delta).ceil() as u64 + 1, delta, epsilon }
    }

    /// `ln f₂` on ring `i`, `None` beyond ring `N`.
    fn ln_f2(&self, ring: u64) -> Option<f64> {
        (ring <= self.rings).then(|| 2.0 * (self.rings - ring) as f64 * self.c.ln() + self.delta * self.epsilon.ln())
    }

    fn f1(&self, x: &[f64], z: &[f64]) -> f64 {
        let plus: f64 = x.iter().zip(z).map(|(a, b)| (a + b) * (a + b)).sum();
        self.c * distance(x, z).powf(self.delta) + plus
    }

    /// `f₁ − f₂` divided by `S = exp(ln_scale)`.
    fn scaled_f(&self, x: &[f64], z: &[f64], ln_scale: f64) -> f64 {
        let f1 = self.f1(x, z);
        let head = if f1 > 0.0 { (f1.ln() - ln_scale).exp() } else { 0.0 };
        match self.ln_f2(ring_index(distance(x, z), self.epsilon)) {
            Some(l) => head - (l - ln_scale).exp(),
            None => head,
        }
    }
}

/// Ring of a separation: `i = ⌈10|x−z|/ε⌉`, with separation 0 in ring 1.
pub fn ring_index(separation: f64, epsilon: f64) -> u64 {
    ((10.0 * separation / epsilon).ceil() as u64).max(1)
}

/// `F(x,z,t)`; `−∞` when the ring height overflows `f64`.
pub fn eval_holder_comparison(c: &HolderComparison, x: &[f64], z: &[f64], t: f64) -> f64 {
    let f2 = match c.ln_f2(ring_index(distance(x, z), c.epsilon)) {
        Some(l) => l.exp(),
        None => 0.0,
    };
    c.f1(x, z) - f2 + t.abs().powf(c.delta / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HolderRegime {
    /// `|x−z| > Nε/10`.
    Far,
    /// Rings 2..=N.
    Rings,
    /// Ring 1, including `x = z`.
    Innermost,
}

impl HolderRegime {
    fn label(self) -> &'static str {
        match self {
            HolderRegime::Far => "far",
            HolderRegime::Rings => "rings",
            HolderRegime::Innermost => "innermost-ring",
        }
    }
}

struct Extremes {
    sup: f64,
    inf: f64,
}

fn project(v: &mut [f64], cap: f64) {
    let l = norm(v);
    if l > cap {
        for c in v.iter_mut() {
            *c *= cap / l;
        }
    }
}

/// Sup and inf of the scaled `f` over `B_ε(x) × B_ε(z)`: random directions,
/// sign flips, the extremal directions along `x − z`, then pattern search.
fn extremes(c: &HolderComparison, x: &[f64], z: &[f64], ln_scale: f64, rng: &mut StreamRng) -> Extremes {
    let n = x.len();
    let cap = c.epsilon * (1.0 - 1e-12);
    let eval = |hx: &[f64], hz: &[f64]| {
        let xp: Vec<f64> = x.iter().zip(hx).map(|(a, b)| a + b).collect();
        let zp: Vec<f64> = z.iter().zip(hz).map(|(a, b)| a + b).collect();
        c.scaled_f(&xp, &zp, ln_scale)
    };
    let d: Vec<f64> = x.iter().zip(z).map(|(a, b)| a - b).collect();
    let dl = norm(&d);
    let axis: Vec<f64> = if dl > 0.0 { d.iter().map(|v| v / dl).collect() } else { unit_vector(rng, n) };
    let mut candidates: Vec<(Vec<f64>, Vec<f64>)> = vec![(vec![0.0; n], vec![0.0; n])];
    for sx in [-1.0, 0.0, 1.0] {
        for sz in [-1.0, 0.0, 1.0] {
            let hx: Vec<f64> = axis.iter().map(|v| sx * cap * v).collect();
            let hz: Vec<f64> = axis.iter().map(|v| sz * cap * v).collect();
            candidates.push((hx, hz));
        }
    }
    for _ in 0..64 {
        let rx = if rng.random::<bool>() { cap } else { cap * rng.random::<f64>().powf(1.0 / n as f64) };
        let rz = if rng.random::<bool>() { cap } else { cap * rng.random::<f64>().powf(1.0 / n as f64) };
        let hx: Vec<f64> = unit_vector(rng, n).into_iter().map(|v| v * rx).collect();
        let hz: Vec<f64> = unit_vector(rng, n).into_iter().map(|v| v * rz).collect();
        let neg = |v: &[f64]| v.iter().map(|c| -c).collect::<Vec<f64>>();
        candidates.push((neg(&hx), neg(&hz)));
        candidates.push((hx.clone(), neg(&hz)));
        candidates.push((neg(&hx), hz.clone()));
        candidates.push((hx, hz));
    }
    let scored: Vec<(f64, usize)> = candidates.iter().enumerate().map(|(i, (a, b))| (eval(a, b), i)).collect();
    let best_hi = scored.iter().copied().fold((f64::NEG_INFINITY, 0), |m, v| if v.0 > m.0 { v } else { m });
    let best_lo = scored.iter().copied().fold((f64::INFINITY, 0), |m, v| if v.0 < m.0 { v } else { m });

    let refine = |start: &(Vec<f64>, Vec<f64>), mut value: f64, sign: f64| {
        let mut h: Vec<f64> = start.0.iter().chain(&start.1).copied().collect();
        let mut step = cap / 4.0;
        for _ in 0..20 {
            let mut improved = false;
            for k in 0..2 * n {
                for dir in [1.0, -1.0] {
                    let mut trial = h.clone();
                    trial[k] += dir * step;
                    let (tx, tz) = trial.split_at_mut(n);
                    project(tx, cap);
                    project(tz, cap);
                    let v = eval(tx, tz);
                    if sign * v > sign * value {
                        value = v;
                        h = trial;
                        improved = true;
                    }
                }
            }
            if !improved {
                step /= 2.0;
            }
        }
        value
    };
    Extremes {
        sup: refine(&candidates[best_hi.1], best_hi.0, 1.0),
        inf: refine(&candidates[best_lo.1], best_lo.0, -1.0),
    }
}

/// Samples `(x, z)` pairs in the far, ring and innermost regimes and checks
/// `f(x,z) > ½(sup f + inf f) + ε^δ` with `f = f₁ − f₂` over
/// `B_ε(x) × B_ε(z)`. Margins are reported in units of `ε^δ`.
pub fn verify_holder_key_inequality(
    c: &HolderComparison,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<BarrierReport> {
    if !(c.rings as f64 > 100.0 * c.c / c.delta) {
        return Err(Error::Precondition("N must exceed 100 C / delta".into()));
    }
    let eps = c.epsilon;
    let ln_eps_delta = c.delta * eps.ln();
    let template = BarrierReport::new(
        "holder-key-inequality",
        n,
        vec![("C", c.c), ("N", c.rings as f64), ("delta", c.delta), ("epsilon", eps)],
        seed,
    );
    let far_threshold = c.rings as f64 * eps / 10.0;
    Ok(scan(&template, samples, seed, |rng, rep| {
        let regime = match rng.random_range(0..3u8) {
            0 => HolderRegime::Far,
            1 => HolderRegime::Rings,
            _ => HolderRegime::Innermost,
        };
        let sep = match regime {
            HolderRegime::Far => far_threshold * (1.0 + 1e-9 + 3.0 * rng.random::<f64>()),
            HolderRegime::Rings => {
                // log-uniform over rings 2..=N
                let ring = (2.0 * (c.rings as f64 / 2.0).powf(rng.random::<f64>())).floor().max(2.0) as u64;
                let ring = ring.min(c.rings);
                (ring as f64 - 1.0 + rng.random::<f64>().max(1e-9)) * eps / 10.0
            }
            HolderRegime::Innermost => {
                if rng.random::<f64>() < 0.1 {
                    0.0
                } else {
                    rng.random::<f64>() * eps / 10.0
                }
            }
        };
        let z: Vec<f64> = unit_vector(rng, n).into_iter().map(|v| v * rng.random::<f64>()).collect();
        let dir = unit_vector(rng, n);
        let x: Vec<f64> = z.iter().zip(&dir).map(|(a, b)| a + sep * b).collect();
        let ring = ring_index(distance(&x, &z), eps);
        let ln_scale = c.ln_f2(ring).unwrap_or(0.0).max(0.0);
        let here = c.scaled_f(&x, &z, ln_scale);
        let ext = extremes(c, &x, &z, ln_scale, rng);
        let gap = here - 0.5 * (ext.sup + ext.inf);
        let unit = (ln_eps_delta - ln_scale).exp();
        let margin = if unit > 0.0 {
            gap / unit - 1.0
        } else if gap > 0.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        let margin = margin.clamp(-f64::MAX, f64::MAX);
        rep.record_regime(regime.label(), margin, gap > unit);
    }))
}

/// Checks `|t − ε²/2|^{δ/2} − |t|^{δ/2} ≤ ε^δ` for sampled `t ≤ 0`; margins
/// in units of `ε^δ`.
pub fn verify_holder_time_term(c: &HolderComparison, samples: usize, seed: u64) -> BarrierReport {
    let eps = c.epsilon;
    let unit = eps.powf(c.delta);
    let template = BarrierReport::new("holder-time-term", 0, vec![("delta", c.delta), ("epsilon", eps)], seed);
    scan(&template, samples, seed, |rng, rep| {
        // mostly near the origin, where the increment is largest
        let t = if rng.random::<bool>() { -rng.random::<f64>() * 4.0 * eps * eps } else { -rng.random::<f64>() };
        let g = |s: f64| s.abs().powf(c.delta / 2.0);
        let inc = g(t - eps * eps / 2.0) - g(t);
        rep.record_regime("time", 1.0 - inc / unit, inc <= unit);
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_value() {
        let c = HolderComparison::new(2.0, 401, 0.5, 0.1).unwrap();
        let x = [0.3, -0.2];
        let f = eval_holder_comparison(&c, &x, &x, 0.0);
        let expect = 4.0 * (0.09 + 0.04) - 2f64.powi(800) * 0.1f64.sqrt();
        assert!((f / expect - 1.0).abs() < 1e-12);
    }

    #[test]
    fn far_pairs_drop_the_rings() {
        let c = HolderComparison::new(2.0, 401, 0.5, 0.1).unwrap();
        let x = [5.0];
        let z = [0.0];
        let f = eval_holder_comparison(&c, &x, &z, 0.0);
        assert!((f - (2.0 * 5f64.sqrt() + 25.0)).abs() < 1e-12);
    }

    #[test]
    fn antipodal_pair_has_no_sum_term() {
        let c = HolderComparison::new(2.0, 401, 0.5, 0.1).unwrap();
        let x = [30.0, 40.0];
        let z = [-30.0, -40.0];
        assert!((eval_holder_comparison(&c, &x, &z, 0.0) - 2.0 * 100f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ring_function_is_nonincreasing() {
        let c = HolderComparison::new(2.0, 401, 0.5, 0.1).unwrap();
        let mut last = f64::INFINITY;
        for k in 0..500 {
            let d = k as f64 * 0.01 * 0.1;
            let f2 = c.ln_f2(ring_index(d, 0.1)).map_or(0.0, f64::exp);
            assert!(f2 <= last);
            last = f2;
        }
    }

    #[test]
    fn ring_convention() {
        assert_eq!(ring_index(0.0, 0.1), 1);
        assert_eq!(ring_index(0.01, 0.1), 1);
        assert_eq!(ring_index(0.0100001, 0.1), 2);
    }

    #[test]
    fn defaults_satisfy_the_largeness_conditions() {
        let c = HolderComparison::with_defaults(0.01);
        assert!(c.c * c.delta > 20.0);
        assert!(c.rings as f64 > 100.0 * c.c / c.delta);
        assert!(eval_holder_comparison(&c, &[0.0], &[0.0], 0.0).is_infinite());
    }

    #[test]
    fn time_term_always_within_budget() {
        let c = HolderComparison::with_defaults(0.01);
        assert!(verify_holder_time_term(&c, 2000, 1).passed());
    }

    #[test]
    fn middle_rings_pass() {
        let c = HolderComparison::new(2.0, 401, 0.5, 0.1).unwrap();
        let mut rng = crate::rng::substream(9, 0);
        for ring in [2u64, 5, 30, 200] {
            let x = [(ring as f64 - 0.5) * 0.01];
            let ln_scale = c.ln_f2(ring).unwrap();
            let here = c.scaled_f(&x, &[0.0], ln_scale);
            let e = extremes(&c, &x, &[0.0], ln_scale, &mut rng);
            let unit = (0.5 * 0.1f64.ln() - ln_scale).exp();
            assert!(here - 0.5 * (e.sup + e.inf) > unit, "ring {ring}");
        }
    }
}
