use rand::Rng;

use super::{scan, BarrierReport};
use crate::error::{Error, Result};
use crate::rng::{uniform_in_ball, unit_vector};

/// `Ψ(x,t) = (1/9)³·inf·ρ^{2m}·s^{-m}·(9 − |x|²/s)²₊` with `ρ = r/3`,
/// `s = t + ρ²` and `m = (n+1)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiBarrier {
    pub n: usize,
    pub r: f64,
    pub big_r: f64,
    pub inf_value: f64,
    pub epsilon: f64,
}

impl PsiBarrier {
    pub fn new(n: usize, r: f64, big_r: f64, inf_value: f64, epsilon: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if !(epsilon > 0.0) || !(inf_value > 0.0) {
            return Err(Error::InvalidParameter("epsilon and inf_value must be positive".into()));
        }
        if r < 9.0 * epsilon * (1.0 - 1e-12) {
            return Err(Error::Precondition(format!("r = {r} is below 9 epsilon = {}", 9.0 * epsilon)));
        }
        if !(big_r <= 1.0) || !(r < big_r) {
            return Err(Error::Precondition("need r < R <= 1".into()));
        }
        Ok(Self { n, r, big_r, inf_value, epsilon })
    }

    fn m(&self) -> i32 {
        ((self.n + 1) * (self.n + 1)) as i32
    }

    fn rho2(&self) -> f64 {
        (self.r / 3.0).powi(2)
    }

    /// Prefactor `(1/9)³·inf·ρ^{2m}`, folded with `s^{-m-1}` in log space to
    /// stay finite for small `r`.
    fn scale(&self, s: f64, extra: i32) -> f64 {
        let m = self.m() as f64;
        let ln = -3.0 * 9f64.ln() + self.inf_value.ln() + m * self.rho2().ln() - (m + extra as f64) * s.ln();
        ln.exp()
    }

    /// `a = 9 − |x|²/s` and `s`.
    fn a_s(&self, x: &[f64], t: f64) -> (f64, f64) {
        let s = t + self.rho2();
        let x2: f64 = x.iter().map(|c| c * c).sum();
        (9.0 - x2 / s, s)
    }

    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        let (a, s) = self.a_s(x, t);
        if a <= 0.0 {
            return 0.0;
        }
        self.scale(s, 0) * a * a
    }

    pub fn time_derivative(&self, x: &[f64], t: f64) -> f64 {
        let (a, s) = self.a_s(x, t);
        if a <= 0.0 {
            return 0.0;
        }
        let m = self.m() as f64;
        self.scale(s, 1) * (-m * a * a + 2.0 * a * (9.0 - a))
    }

    pub fn gradient(&self, x: &[f64], t: f64) -> Vec<f64> {
        let (a, s) = self.a_s(x, t);
        if a <= 0.0 {
            return vec![0.0; x.len()];
        }
        let k = -4.0 * self.scale(s, 1) * a;
        x.iter().map(|c| k * c).collect()
    }

    pub fn laplacian(&self, x: &[f64], t: f64) -> f64 {
        let (a, s) = self.a_s(x, t);
        if a <= 0.0 {
            return 0.0;
        }
        -4.0 * self.scale(s, 1) * (self.n as f64 * a - 2.0 * (9.0 - a))
    }
}

/// `[−(n+2)(n+1)² − 2(n+2)]a² + 22(n+2)a − 72`.
pub fn psi_quadratic(n: usize, a: f64) -> f64 {
    let n2 = (n + 2) as f64;
    let lead = -n2 * ((n + 1) * (n + 1)) as f64 - 2.0 * n2;
    lead * a * a + 22.0 * n2 * a - 72.0
}

/// Discriminant `22²(n+2)² − 4·72·(n+2)·((n+1)² + 2)` in exact arithmetic.
pub fn discriminant(n: u32) -> i128 {
    let n = n as i128;
    22 * 22 * (n + 2) * (n + 2) - 4 * 72 * (n + 2) * ((n + 1) * (n + 1) + 2)
}

/// Samples the three one-step inequalities of Ψ. Margins are normalized by
/// `Ψ(0,t)`; a sample violates when its margin is below `−10⁻¹²`.
pub fn verify_psi_cases(b: &PsiBarrier, samples: usize, seed: u64) -> Result<BarrierReport> {
    let eps = b.epsilon;
    if b.r < 9.0 * eps * (1.0 - 1e-12) {
        return Err(Error::Precondition("r must be at least 9 epsilon".into()));
    }
    let n = b.n;
    let half = eps * eps / 2.0;
    let t_max = b.big_r * b.big_r;
    let template = BarrierReport::new(
        "psi-cases",
        n,
        vec![("r", b.r), ("R", b.big_r), ("epsilon", eps), ("inf_value", b.inf_value)],
        seed,
    );
    let rep = scan(&template, samples, seed, |rng, rep| {
        let t = half + rng.random::<f64>() * (t_max - half).max(0.0);
        let tp = t - half;
        let norm = b.eval(&vec![0.0; n], t);
        let case = rng.random_range(0..3u8);
        let (label, lhs, rhs) = match case {
            0 => {
                let e = unit_vector(rng, n);
                let ee: Vec<f64> = e.iter().map(|c| c * eps).collect();
                ("case-1", 0.5 * (b.eval(&vec![0.0; n], tp) + b.eval(&ee, tp)), norm)
            }
            1 => {
                let mut x: Vec<f64> = uniform_in_ball(rng, n, eps);
                if x.iter().all(|&c| c == 0.0) {
                    x[0] = eps * 1e-3;
                }
                let len = crate::num::norm(&x);
                let out: Vec<f64> = x.iter().map(|c| c + c / len * eps).collect();
                ("case-2", 0.5 * (b.eval(&vec![0.0; n], tp) + b.eval(&out, tp)), b.eval(&x, t))
            }
            _ => {
                // |x| from ε out to a little past the support radius
                let support = 3.0 * (t + b.rho2()).sqrt();
                let rad = eps + rng.random::<f64>() * (1.1 * support - eps).max(0.0);
                let x: Vec<f64> = unit_vector(rng, n).into_iter().map(|c| c * rad).collect();
                let out: Vec<f64> = x.iter().map(|c| c + c / rad * eps).collect();
                let inn: Vec<f64> = x.iter().map(|c| c - c / rad * eps).collect();
                ("case-3", 0.5 * (b.eval(&out, tp) + b.eval(&inn, tp)), b.eval(&x, t))
            }
        };
        let margin = (lhs - rhs) / norm;
        rep.record_regime(label, margin, margin >= -1e-12);
    });
    Ok(rep)
}

/// Checks `(n+2)Ψ_t − ΔΨ ≤ 0` on the support from the analytic derivatives,
/// and the sign of the quadratic in `a`. Margins are `−((n+2)Ψ_t − ΔΨ)`
/// normalized by `72·(1/9)³·inf·ρ^{2m}·s^{-m-1}`.
pub fn verify_psi_subsolution(b: &PsiBarrier, samples: usize, seed: u64) -> BarrierReport {
    let n = b.n;
    let t_max = b.big_r * b.big_r;
    let template = BarrierReport::new("psi-subsolution", n, vec![("r", b.r), ("R", b.big_r)], seed);
    scan(&template, samples, seed, |rng, rep| {
        let t = rng.random::<f64>() * t_max;
        let s = t + b.rho2();
        // a uniform in (0, 9]
        let a = 9.0 * (1.0 - rng.random::<f64>());
        let rad = ((9.0 - a) * s).max(0.0).sqrt();
        let x: Vec<f64> = unit_vector(rng, n).into_iter().map(|c| c * rad).collect();
        let lhs = (n as f64 + 2.0) * b.time_derivative(&x, t) - b.laplacian(&x, t);
        let unit = 72.0 * b.scale(s, 1);
        let margin = -lhs / unit;
        rep.record_regime("pde", margin, margin >= -1e-10);
        let q = psi_quadratic(n, a);
        rep.record_regime("quadratic", -q / 72.0, q < 0.0);
    })
}

/// Compares analytic Ψ_t, ∇Ψ and ΔΨ with central differences (step 10⁻⁵ of
/// the local scale) at points away from the cut-off; the Laplacian is
/// differenced from the analytic gradient. Margin is `tol − relative error`.
pub fn verify_psi_derivatives(b: &PsiBarrier, samples: usize, seed: u64, tol: f64) -> BarrierReport {
    let n = b.n;
    let t_max = b.big_r * b.big_r;
    let template = BarrierReport::new("psi-derivatives", n, vec![("r", b.r), ("tolerance", tol)], seed);
    scan(&template, samples, seed, |rng, rep| {
        let t = rng.random::<f64>() * t_max;
        let s = t + b.rho2();
        let a = 0.5 + 8.0 * rng.random::<f64>();
        let rad = ((9.0 - a) * s).sqrt();
        let x: Vec<f64> = unit_vector(rng, n).into_iter().map(|c| c * rad).collect();
        let hx = 1e-5 * s.sqrt();
        let ht = 1e-5 * s;

        let fd_t = (b.eval(&x, t + ht) - b.eval(&x, t - ht)) / (2.0 * ht);
        let an_t = b.time_derivative(&x, t);
        let err_t = (fd_t - an_t).abs() / an_t.abs().max(b.eval(&x, t) / s);
        rep.record_regime("time", tol - err_t, err_t <= tol);

        let grad = b.gradient(&x, t);
        let gnorm = crate::num::norm(&grad).max(b.eval(&x, t) / s.sqrt());
        let mut err_g: f64 = 0.0;
        let mut lap = 0.0;
        for i in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += hx;
            xm[i] -= hx;
            let fd = (b.eval(&xp, t) - b.eval(&xm, t)) / (2.0 * hx);
            err_g = err_g.max((fd - grad[i]).abs() / gnorm);
            lap += (b.gradient(&xp, t)[i] - b.gradient(&xm, t)[i]) / (2.0 * hx);
        }
        rep.record_regime("gradient", tol - err_g, err_g <= tol);
        let an_l = b.laplacian(&x, t);
        let err_l = (lap - an_l).abs() / an_l.abs().max(gnorm / s.sqrt());
        rep.record_regime("laplacian", tol - err_l, err_l <= tol);
    })
}
