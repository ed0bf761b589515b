//! The cumulant generating function of the tilted single-site measure and its
//! Legendre conjugate, the Cramér transform.
//!
//! All derivatives of the cumulant generating function are computed as tilted
//! moments, never by differencing the log-partition function. Evaluations of the
//! transform are memoized behind a mutex, so a [`CramerTransform`] can be shared
//! freely between threads.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{KramersError, Result};
use crate::potentials::PotentialSpec;
use crate::quadrature::{integrate_with_breaks, scan_support, Support, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Regime {
    LowTemperature { eps: f64 },
    HighTemperature,
}

impl Regime {
    pub fn eps(&self) -> f64 {
        match self {
            Regime::LowTemperature { eps } => *eps,
            Regime::HighTemperature => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CramerSettings {
    /// Log-density drop below the peak at which the integration window is cut.
    pub margin: f64,
    pub scan_points: usize,
    pub tolerance: Tolerance,
    /// Newton target for `|mean(sigma) - m|`.
    pub newton_tol: f64,
    /// Residual above which the Legendre inversion is declared failed.
    pub accept_tol: f64,
}

impl Default for CramerSettings {
    fn default() -> Self {
        CramerSettings {
            margin: 60.0,
            scan_points: 512,
            tolerance: Tolerance::new(1e-15, 1e-13),
            newton_tol: 1e-13,
            accept_tol: 1e-10,
        }
    }
}

/// `log Z(sigma)` and the first four cumulants of the tilted measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cumulants {
    pub sigma: f64,
    pub log_z: f64,
    pub mean: f64,
    pub var: f64,
    pub k3: f64,
    pub k4: f64,
}

/// The transform and its first three derivatives at `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CramerPoint {
    pub m: f64,
    /// `phi'(m)`, the tilt whose measure has mean `m`.
    pub sigma: f64,
    pub phi: f64,
    pub d2: f64,
    pub d3: f64,
    pub cumulants: Cumulants,
}

impl CramerPoint {
    pub fn d1(&self) -> f64 {
        self.sigma
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltedMoments {
    pub m: f64,
    pub sigma: f64,
    pub mean: f64,
    /// Central moments of orders 2, 3, 4.
    pub central: [f64; 3],
    /// `s(m)`, the standard deviation of the tilted measure.
    pub s: f64,
    /// `<|z_hat|^k>` for k = 1..4 with `z_hat = (z - m)/s`.
    pub abs_moments: [f64; 4],
    /// `eps * phi'(m)`.
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub m: f64,
    pub xi: Vec<f64>,
    pub modulus: Vec<f64>,
    /// `max |xi| * |value|` over the grid.
    pub c_hat: f64,
    /// True when the largest `|xi| * |value|` sits at the largest `|xi|`.
    pub growing: bool,
}

/// Largest normalized frequency accepted by [`CramerTransform::char_fn_decay`].
pub const MAX_FREQUENCY: f64 = 1.0e3;

#[derive(Debug)]
pub struct CramerTransform {
    potential: PotentialSpec,
    j: f64,
    regime: Regime,
    settings: CramerSettings,
    slack: f64,
    memo: Mutex<HashMap<i64, CramerPoint>>,
}

impl Clone for CramerTransform {
    fn clone(&self) -> Self {
        CramerTransform {
            potential: self.potential.clone(),
            j: self.j,
            regime: self.regime,
            settings: self.settings,
            slack: self.slack,
            memo: Mutex::new(HashMap::new()),
        }
    }
}

impl CramerTransform {
    /// Low-temperature transform for the single-site potential `spec` with coupling `j`.
    pub fn new(spec: &PotentialSpec, j: f64, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(KramersError::InvalidInput(format!("temperature must be positive, got {eps}")));
        }
        Self::build(spec.effective(j)?, j, Regime::LowTemperature { eps }, CramerSettings::default())
    }

    /// Unit-temperature transform where `psi` is already the effective potential.
    pub fn high_temperature(psi: &PotentialSpec, j: f64) -> Result<Self> {
        Self::build(psi.effective(j)?, j, Regime::HighTemperature, CramerSettings::default())
    }

    pub fn with_settings(mut self, settings: CramerSettings) -> Self {
        self.settings = settings;
        self.memo = Mutex::new(HashMap::new());
        self
    }

    fn build(potential: PotentialSpec, j: f64, regime: Regime, settings: CramerSettings) -> Result<Self> {
        if !(j > 0.0 && j.is_finite()) {
            return Err(KramersError::InvalidInput(format!("coupling J must be positive, got {j}")));
        }
        let slack = potential.growth_slack();
        Ok(CramerTransform { potential, j, regime, settings, slack, memo: Mutex::new(HashMap::new()) })
    }

    pub fn potential(&self) -> &PotentialSpec {
        &self.potential
    }

    pub fn j(&self) -> f64 {
        self.j
    }

    pub fn eps(&self) -> f64 {
        self.regime.eps()
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn settings(&self) -> &CramerSettings {
        &self.settings
    }

    #[inline]
    fn log_weight(&self, sigma: f64, z: f64) -> f64 {
        sigma * z - self.potential.value(z) / self.eps()
    }

    /// Window carrying all but `exp(-margin)` of the tilted mass, with the peak log-weight.
    pub fn window(&self, sigma: f64) -> Result<Support> {
        let eps = self.eps();
        if !sigma.is_finite() {
            return Err(KramersError::NonFinite(format!("tilt sigma = {sigma}")));
        }
        let probes = [0.0, 0.5, -0.5, 1.0, -1.0, 2.0, -2.0, 4.0, -4.0];
        let lower = probes
            .iter()
            .map(|&z| self.log_weight(sigma, z))
            .fold(f64::NEG_INFINITY, f64::max);
        let floor = lower - self.settings.margin;
        let (alpha, radius) = (self.potential.growth.alpha, self.potential.growth.radius);
        let a = alpha / eps;
        let b = sigma.abs();
        let c = (-floor + self.slack / eps).max(0.0) + 1.0;
        let l = ((b + (b * b + 4.0 * a * c).sqrt()) / (2.0 * a)).max(radius);
        let f = |z: f64| self.log_weight(sigma, z);
        let coarse = scan_support(f, -l, l, self.settings.scan_points, self.settings.margin)?;
        scan_support(f, coarse.lo, coarse.hi, 257, self.settings.margin)
    }

    /// `log Z` and the first four cumulants at tilt `sigma`.
    pub fn cumulants(&self, sigma: f64) -> Result<Cumulants> {
        let sup = self.window(sigma)?;
        let c = sup.argmax;
        let peak = sup.peak;
        let est = integrate_with_breaks(
            |z: f64| {
                let w = (self.log_weight(sigma, z) - peak).exp();
                let d = z - c;
                let d2 = d * d;
                [w, w * d, w * d2, w * d2 * d, w * d2 * d2]
            },
            &[sup.lo, c, sup.hi],
            self.settings.tolerance,
        )?;
        let [i0, i1, i2, i3, i4] = est.value;
        if !(i0 > 0.0) {
            return Err(KramersError::QuadratureFailure(format!("tilted mass {i0} at sigma = {sigma}")));
        }
        let mu = i1 / i0;
        let (r2, r3, r4) = (i2 / i0, i3 / i0, i4 / i0);
        let var = r2 - mu * mu;
        let c3 = r3 - 3.0 * mu * r2 + 2.0 * mu.powi(3);
        let c4 = r4 - 4.0 * mu * r3 + 6.0 * mu * mu * r2 - 3.0 * mu.powi(4);
        Ok(Cumulants {
            sigma,
            log_z: i0.ln() + peak,
            mean: c + mu,
            var,
            k3: c3,
            k4: c4 - 3.0 * var * var,
        })
    }

    /// Derivative of the cumulant generating function of the requested order.
    pub fn cgf(&self, sigma: f64, order: usize) -> Result<f64> {
        if order > 4 {
            return Err(KramersError::UnsupportedOrder(order));
        }
        let c = self.cumulants(sigma)?;
        Ok(match order {
            0 => c.log_z,
            1 => c.mean,
            2 => c.var,
            3 => c.k3,
            _ => c.k4,
        })
    }

    fn memo_key(m: f64) -> i64 {
        (m * 1e12).round().clamp(i64::MIN as f64, i64::MAX as f64) as i64
    }

    /// The transform `phi(m)` and its derivatives up to order three.
    pub fn cramer_transform(&self, m: f64) -> Result<CramerPoint> {
        if !m.is_finite() {
            return Err(KramersError::NonFinite(format!("m = {m}")));
        }
        let key = Self::memo_key(m);
        if let Some(p) = self.memo.lock().expect("memo poisoned").get(&key) {
            return Ok(*p);
        }
        let c = self.solve_sigma(m)?;
        let point = CramerPoint {
            m,
            sigma: c.sigma,
            phi: c.sigma * m - c.log_z,
            d2: 1.0 / c.var,
            d3: -c.k3 / c.var.powi(3),
            cumulants: c,
        };
        self.memo.lock().expect("memo poisoned").insert(key, point);
        Ok(point)
    }

    /// Solve `mean(sigma) = m` by Newton's method with a bracketing fallback.
    fn solve_sigma(&self, m: f64) -> Result<Cumulants> {
        let eps = self.eps();
        let mut sigma = self.potential.gradient(m) / eps;
        if !sigma.is_finite() {
            sigma = 0.0;
        }
        let mut best: Option<Cumulants> = None;
        for _ in 0..40 {
            let c = self.cumulants(sigma)?;
            let r = c.mean - m;
            let improved = best.map_or(true, |b| r.abs() < (b.mean - m).abs());
            if improved {
                best = Some(c);
            }
            if r.abs() <= self.settings.newton_tol * m.abs().max(1.0) {
                return Ok(c);
            }
            if !improved || !(c.var > 0.0) {
                break;
            }
            let step = r / c.var;
            if !step.is_finite() {
                break;
            }
            sigma -= step;
        }
        let start = best.map(|b| b.sigma).unwrap_or(0.0);
        let c = self.bracketed(m, start)?;
        let r = (c.mean - m).abs();
        if r <= self.settings.accept_tol {
            Ok(c)
        } else {
            Err(KramersError::SolverFailure(format!(
                "Legendre inversion at m = {m} stalled with residual {r:e}"
            )))
        }
    }

    fn bracketed(&self, m: f64, start: f64) -> Result<Cumulants> {
        let mut width = 1.0_f64.max(start.abs());
        let (mut lo, mut hi) = (start - width, start + width);
        let mut clo = self.cumulants(lo)?;
        let mut chi = self.cumulants(hi)?;
        let mut tries = 0;
        while !(clo.mean <= m && m <= chi.mean) {
            tries += 1;
            if tries > 60 {
                return Err(KramersError::SolverFailure(format!(
                    "could not bracket the tilt for m = {m}"
                )));
            }
            width *= 2.0;
            if clo.mean > m {
                lo = start - width;
                clo = self.cumulants(lo)?;
            }
            if chi.mean < m {
                hi = start + width;
                chi = self.cumulants(hi)?;
            }
        }
        let mut best = if (clo.mean - m).abs() < (chi.mean - m).abs() { clo } else { chi };
        let mut sigma = best.sigma;
        for _ in 0..200 {
            let c = self.cumulants(sigma)?;
            let r = c.mean - m;
            if r.abs() < (best.mean - m).abs() {
                best = c;
            }
            if r.abs() <= self.settings.newton_tol * m.abs().max(1.0) || hi - lo < 1e-15 * hi.abs().max(1.0) {
                break;
            }
            if r < 0.0 {
                lo = sigma;
            } else {
                hi = sigma;
            }
            let newton = sigma - r / c.var;
            sigma = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        }
        Ok(best)
    }

    /// `tau(m) = eps * phi'(m)`.
    pub fn tau(&self, m: f64) -> Result<f64> {
        Ok(self.eps() * self.cramer_transform(m)?.sigma)
    }

    /// `s(m)^2`, the variance of the tilted measure with mean `m`.
    pub fn s_squared(&self, m: f64) -> Result<f64> {
        Ok(self.cramer_transform(m)?.cumulants.var)
    }

    /// Expectation of `b` under the tilted measure with mean `m`.
    pub fn tilted_expectation<F: Fn(f64) -> f64>(&self, m: f64, b: F) -> Result<f64> {
        let sigma = self.cramer_transform(m)?.sigma;
        let sup = self.window(sigma)?;
        let est = integrate_with_breaks(
            |z: f64| {
                let w = (self.log_weight(sigma, z) - sup.peak).exp();
                [w, w * b(z)]
            },
            &[sup.lo, sup.argmax, sup.hi],
            self.settings.tolerance,
        )?;
        Ok(est.value[1] / est.value[0])
    }

    /// Mean and variance of `b` under the tilted measure with mean `m`.
    pub fn tilted_variance<F: Fn(f64) -> f64>(&self, m: f64, b: F) -> Result<(f64, f64)> {
        let sigma = self.cramer_transform(m)?.sigma;
        let sup = self.window(sigma)?;
        let first = integrate_with_breaks(
            |z: f64| {
                let w = (self.log_weight(sigma, z) - sup.peak).exp();
                [w, w * b(z)]
            },
            &[sup.lo, sup.argmax, sup.hi],
            self.settings.tolerance,
        )?;
        let mean = first.value[1] / first.value[0];
        let second = integrate_with_breaks(
            |z: f64| {
                let w = (self.log_weight(sigma, z) - sup.peak).exp();
                let d = b(z) - mean;
                [w, w * d * d]
            },
            &[sup.lo, sup.argmax, sup.hi],
            self.settings.tolerance,
        )?;
        Ok((mean, second.value[1] / second.value[0]))
    }

    pub fn tilted_moments(&self, m: f64) -> Result<TiltedMoments> {
        let p = self.cramer_transform(m)?;
        let c = p.cumulants;
        let s = c.var.sqrt();
        let sup = self.window(p.sigma)?;
        let mut breaks = vec![sup.lo, sup.argmax, sup.hi];
        if m > sup.lo && m < sup.hi {
            breaks.push(m);
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let est = integrate_with_breaks(
            |z: f64| {
                let w = (self.log_weight(p.sigma, z) - sup.peak).exp();
                let a = ((z - m) / s).abs();
                let a2 = a * a;
                [w, w * a, w * a2, w * a2 * a, w * a2 * a2]
            },
            &breaks,
            self.settings.tolerance,
        )?;
        let i0 = est.value[0];
        Ok(TiltedMoments {
            m,
            sigma: p.sigma,
            mean: c.mean,
            central: [c.var, c.k3, c.k4 + 3.0 * c.var * c.var],
            s,
            abs_moments: [est.value[1] / i0, est.value[2] / i0, est.value[3] / i0, est.value[4] / i0],
            tau: self.eps() * p.sigma,
        })
    }

    /// Modulus of the characteristic function of the normalized tilted variable
    /// `(z - m)/s(m)` on a grid of frequencies.
    pub fn char_fn_decay(&self, m: f64, xi_grid: &[f64]) -> Result<DecayReport> {
        if xi_grid.is_empty() {
            return Err(KramersError::InvalidInput("empty frequency grid".into()));
        }
        let p = self.cramer_transform(m)?;
        let s = p.cumulants.var.sqrt();
        let sup = self.window(p.sigma)?;
        let mut modulus = Vec::with_capacity(xi_grid.len());
        for &xi in xi_grid {
            if xi == 0.0 || !xi.is_finite() {
                return Err(KramersError::InvalidInput(format!("frequency must be nonzero, got {xi}")));
            }
            if xi.abs() > MAX_FREQUENCY {
                return Err(KramersError::OscillatoryQuadratureFailure(format!(
                    "|xi| = {} exceeds the cap {MAX_FREQUENCY}",
                    xi.abs()
                )));
            }
            let half_period = PI * s / xi.abs();
            let pieces = (((sup.hi - sup.lo) / half_period).ceil() as usize).clamp(2, 20_000);
            let breaks: Vec<f64> = (0..=pieces)
                .map(|i| sup.lo + (sup.hi - sup.lo) * i as f64 / pieces as f64)
                .collect();
            let est = integrate_with_breaks(
                |z: f64| {
                    let w = (self.log_weight(p.sigma, z) - sup.peak).exp();
                    let t = xi * (z - m) / s;
                    [w, w * t.cos(), w * t.sin()]
                },
                &breaks,
                Tolerance::new(1e-15, 1e-13).with_max_intervals(pieces + 4000),
            )
            .map_err(|e| KramersError::OscillatoryQuadratureFailure(e.to_string()))?;
            let re = est.value[1] / est.value[0];
            let im = est.value[2] / est.value[0];
            modulus.push(re.hypot(im));
        }
        let scaled: Vec<f64> = xi_grid.iter().zip(&modulus).map(|(x, v)| x.abs() * v).collect();
        let (imax, c_hat) = scaled
            .iter()
            .enumerate()
            .fold((0, 0.0_f64), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        let ilargest = xi_grid
            .iter()
            .enumerate()
            .fold(0, |acc, (i, x)| if x.abs() > xi_grid[acc].abs() { i } else { acc });
        Ok(DecayReport {
            m,
            xi: xi_grid.to_vec(),
            modulus,
            c_hat,
            growing: xi_grid.len() > 1 && imax == ilargest,
        })
    }
}

/// Closed form of the transform for `alpha z^2 / 2` at temperature `eps`.
pub fn gaussian_phi(alpha: f64, eps: f64, m: f64) -> f64 {
    alpha * m * m / (2.0 * eps) - 0.5 * (2.0 * PI * eps / alpha).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quartic(eps: f64) -> CramerTransform {
        CramerTransform::new(&PotentialSpec::quartic_double_well(), 2.0, eps).unwrap()
    }

    #[test]
    fn gaussian_cgf_matches_closed_form() {
        let alpha = 1.7;
        let eps = 0.3;
        let t = CramerTransform::new(&PotentialSpec::quadratic(alpha).unwrap(), 2.0, eps).unwrap();
        for sigma in [-3.0, 0.0, 1.5, 7.0] {
            let exact = eps * sigma * sigma / (2.0 * alpha) + 0.5 * (2.0 * PI * eps / alpha).ln();
            assert!((t.cgf(sigma, 0).unwrap() - exact).abs() < 1e-12);
            assert!((t.cgf(sigma, 1).unwrap() - eps * sigma / alpha).abs() < 1e-12);
            assert!((t.cgf(sigma, 2).unwrap() - eps / alpha).abs() < 1e-12);
            assert!(t.cgf(sigma, 3).unwrap().abs() < 1e-12);
            assert!(t.cgf(sigma, 4).unwrap().abs() < 1e-12);
        }
        assert!(matches!(t.cgf(0.0, 5), Err(KramersError::UnsupportedOrder(5))));
    }

    #[test]
    fn symmetric_mean_vanishes() {
        assert!(quartic(0.1).cgf(0.0, 1).unwrap().abs() < 1e-14);
        assert!(quartic(0.1).cramer_transform(0.0).unwrap().sigma.abs() < 1e-12);
    }

    #[test]
    fn duality_at_half() {
        let t = quartic(0.1);
        let p = t.cramer_transform(0.5).unwrap();
        assert!((t.cgf(p.sigma, 1).unwrap() - 0.5).abs() <= 1e-8);
    }

    #[test]
    fn memo_returns_identical_points() {
        let t = quartic(0.2);
        let a = t.cramer_transform(0.37).unwrap();
        let b = t.cramer_transform(0.37).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn small_eps_variance_limit() {
        for eps in [0.2, 0.1, 0.05] {
            let s2 = quartic(eps).s_squared(0.0).unwrap();
            let ratio = s2 / eps;
            assert!((ratio - 1.0).abs() < 3.0 * eps, "eps {eps}: {ratio}");
        }
    }

    #[test]
    fn abs_moment_bounded_by_one() {
        let t = quartic(0.1);
        for m in [-1.2, 0.0, 0.4, 1.0] {
            let tm = t.tilted_moments(m).unwrap();
            assert!(tm.abs_moments[0] <= 1.0);
            assert!((tm.abs_moments[1] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn gaussian_char_fn() {
        let t = CramerTransform::new(&PotentialSpec::quadratic(3.0).unwrap(), 2.0, 0.2).unwrap();
        let r = t.char_fn_decay(0.3, &[1.0, 2.0, 3.0]).unwrap();
        for (x, v) in r.xi.iter().zip(&r.modulus) {
            assert!((v - (-x * x / 2.0).exp()).abs() < 1e-10);
            assert!(*v <= 1.0 / x.abs());
        }
        assert!(!r.growing);
        assert!(matches!(
            t.char_fn_decay(0.0, &[2e3]),
            Err(KramersError::OscillatoryQuadratureFailure(_))
        ));
    }
}
