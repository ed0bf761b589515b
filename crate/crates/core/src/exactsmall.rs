//! Exact small-N integrals over the fiber `P^{-1}(m) = {x : mean(x) = m}`.
//!
//! The fiber is parametrized by `x = m 1 + A y` with `A` the orthonormal
//! Helmert basis of the zero-mean subspace, so Hausdorff measure pulls back to
//! Lebesgue measure on `y`. For `N = 1` the fiber is a point with counting measure.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cramer::CramerTransform;
use crate::error::{KramersError, Result};
use crate::potentials::PotentialSpec;
use crate::quadrature::{integrate_with_breaks, Tolerance};

pub const MAX_N: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactSettings {
    /// Relative tolerance of the fiber integral; inner levels get matching absolute targets.
    pub rel_tol: f64,
    /// Truncate where the integrand has dropped by `exp(-tail_margin)`.
    pub tail_margin: f64,
}

impl Default for ExactSettings {
    fn default() -> Self {
        ExactSettings { rel_tol: 1e-10, tail_margin: 40.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperplaneIntegral {
    pub n: usize,
    pub m: f64,
    /// `phi_N(m) = -(1/N) log int exp(-sum psi_J(x_i)/eps) dH`.
    pub value: f64,
    /// Estimated absolute error of `value`.
    pub error: f64,
    pub converged: bool,
}

/// Columns of the `N x (N-1)` Helmert basis, stored row-major.
pub fn helmert_basis(n: usize) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; n.saturating_sub(1)]; n];
    for k in 1..n {
        let norm = ((k * (k + 1)) as f64).sqrt();
        for row in a.iter_mut().take(k) {
            row[k - 1] = 1.0 / norm;
        }
        a[k][k - 1] = -(k as f64) / norm;
    }
    a
}

struct Fiber {
    psi: PotentialSpec,
    eps: f64,
    n: usize,
    m: f64,
    basis: Vec<Vec<f64>>,
    /// Subtracted from `sum psi_J(x_i)` before exponentiating.
    shift: f64,
    half_width: f64,
    /// Trapezoid estimate of the shifted fiber integral.
    pilot: f64,
    settings: ExactSettings,
}

impl Fiber {
    fn new(spec: &PotentialSpec, j: f64, eps: f64, n: usize, m: f64, settings: ExactSettings) -> Result<Self> {
        if n == 0 || n > MAX_N {
            return Err(KramersError::InvalidInput(format!("exact fiber integrals need 1 <= N <= {MAX_N}, got {n}")));
        }
        if !(eps > 0.0) || !m.is_finite() {
            return Err(KramersError::InvalidInput(format!("need eps > 0 and finite m, got eps = {eps}, m = {m}")));
        }
        let psi = spec.effective(j)?;
        let mut fiber = Fiber {
            psi,
            eps,
            n,
            m,
            basis: helmert_basis(n),
            shift: 0.0,
            half_width: 0.0,
            pilot: 1.0,
            settings,
        };
        fiber.shift = fiber.coarse_minimum();
        fiber.half_width = fiber.truncation();
        fiber.pilot = fiber.trapezoid_pilot();
        Ok(fiber)
    }

    fn point(&self, y: &[f64]) -> Vec<f64> {
        self.basis
            .iter()
            .map(|row| self.m + row.iter().zip(y).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    fn energy(&self, x: &[f64]) -> f64 {
        x.iter().map(|&z| self.psi.value(z)).sum()
    }

    /// Fiber energy and first coordinate at `y`, without materializing the point.
    fn energy_at(&self, y: &[f64]) -> (f64, f64) {
        let mut e = 0.0;
        let mut x0 = self.m;
        for (i, row) in self.basis.iter().enumerate() {
            let x = self.m + row.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
            if i == 0 {
                x0 = x;
            }
            e += self.psi.value(x);
        }
        (e, x0)
    }

    /// Minimum of the fiber energy over a coarse grid, used as the exponent shift.
    fn coarse_minimum(&self) -> f64 {
        let d = self.n - 1;
        let mut best = self.energy(&vec![self.m; self.n]);
        if d == 0 {
            return best;
        }
        let (k, span) = (21usize, 4.0 * self.psi.growth.radius.max(1.0));
        let mut idx = vec![0usize; d];
        loop {
            let y: Vec<f64> = idx.iter().map(|&i| -span + 2.0 * span * i as f64 / (k - 1) as f64).collect();
            best = best.min(self.energy(&self.point(&y)));
            let mut carry = 0;
            while carry < d {
                idx[carry] += 1;
                if idx[carry] < k {
                    break;
                }
                idx[carry] = 0;
                carry += 1;
            }
            if carry == d {
                break;
            }
        }
        best
    }

    fn trapezoid_pilot(&self) -> f64 {
        let d = self.n - 1;
        if d == 0 {
            return 1.0;
        }
        let k = 41usize;
        let l = self.half_width;
        let h = 2.0 * l / (k - 1) as f64;
        let mut idx = vec![0usize; d];
        let mut total = 0.0;
        loop {
            let y: Vec<f64> = idx.iter().map(|&i| -l + h * i as f64).collect();
            total += (-(self.energy_at(&y).0 - self.shift) / self.eps).exp();
            let mut carry = 0;
            while carry < d {
                idx[carry] += 1;
                if idx[carry] < k {
                    break;
                }
                idx[carry] = 0;
                carry += 1;
            }
            if carry == d {
                break;
            }
        }
        total * h.powi(d as i32)
    }

    /// Box half-width beyond which the integrand is below `exp(-tail_margin)`.
    fn truncation(&self) -> f64 {
        let floor = (0..=400)
            .map(|i| self.psi.value(-8.0 + 0.04 * i as f64))
            .fold(f64::INFINITY, f64::min);
        let rest = (self.n - 1) as f64 * floor;
        let budget = self.shift - rest + self.settings.tail_margin * self.eps;
        let scale = (self.n as f64).sqrt();
        let mut r = 0.5;
        while r < 1e3 {
            let lo = self.psi.value(self.m - r / scale);
            let hi = self.psi.value(self.m + r / scale);
            if lo.min(hi) > budget {
                return r;
            }
            r *= 1.1;
        }
        r
    }

    /// Nested adaptive quadrature of `[w, w b(x_0)]` with `w = exp(-(E - shift)/eps)`.
    fn integrate<B: Fn(f64) -> f64 + Sync>(&self, b: &B, rel: f64) -> Result<([f64; 2], f64)> {
        if self.n == 1 {
            let w = (-(self.energy(&[self.m]) - self.shift) / self.eps).exp();
            return Ok(([w, w * b(self.m)], 0.0));
        }
        let mut prefix = Vec::with_capacity(self.n - 1);
        self.level(b, &mut prefix, rel)
    }

    fn level<B: Fn(f64) -> f64>(&self, b: &B, prefix: &mut Vec<f64>, rel: f64) -> Result<([f64; 2], f64)> {
        let d = self.n - 1;
        let innermost = prefix.len() + 1 == d;
        let mut failure = None;
        let l = self.half_width;
        // An error of `abs` at this depth integrates to at most a tenth of the global target.
        let abs = 0.1 * rel * self.pilot / (2.0 * l).powi(prefix.len() as i32);
        let tol = Tolerance::new(abs, rel).with_max_intervals(4000);
        let est = if innermost {
            let mut base = [0.0; MAX_N];
            let mut slope = [0.0; MAX_N];
            for (i, row) in self.basis.iter().enumerate() {
                base[i] = self.m + row.iter().zip(prefix.iter()).map(|(a, y)| a * y).sum::<f64>();
                slope[i] = row[d - 1];
            }
            let (base, slope) = (&base[..self.n], &slope[..self.n]);
            integrate_with_breaks(
                |t: f64| {
                    let e: f64 = base.iter().zip(slope).map(|(c, a)| self.psi.value(c + a * t)).sum();
                    let w = (-(e - self.shift) / self.eps).exp();
                    [w, w * b(base[0] + slope[0] * t)]
                },
                &[-l, 0.0, l],
                tol,
            )?
        } else {
            integrate_with_breaks(
                |t: f64| {
                    prefix.push(t);
                    let v = match self.level(b, prefix, rel) {
                        Ok((v, _)) => v,
                        Err(e) => {
                            failure.get_or_insert(e);
                            [0.0, 0.0]
                        }
                    };
                    prefix.pop();
                    v
                },
                &[-l, 0.0, l],
                tol,
            )?
        };
        match failure {
            Some(e) => Err(e),
            None => Ok((est.value, est.error)),
        }
    }
}

/// `phi_N(m)` by quadrature over the fiber.
pub fn phi_n_small(spec: &PotentialSpec, j: f64, eps: f64, n: usize, m: f64) -> Result<HyperplaneIntegral> {
    phi_n_small_with(spec, j, eps, n, m, ExactSettings::default())
}

pub fn phi_n_small_with(
    spec: &PotentialSpec,
    j: f64,
    eps: f64,
    n: usize,
    m: f64,
    settings: ExactSettings,
) -> Result<HyperplaneIntegral> {
    let fiber = Fiber::new(spec, j, eps, n, m, settings)?;
    let (v, err) = fiber.integrate(&|_| 1.0, settings.rel_tol)?;
    if !(v[0] > 0.0 && v[0].is_finite()) {
        return Err(KramersError::QuadratureFailure(format!("fiber integral {} at m = {m}", v[0])));
    }
    let nf = n as f64;
    let rel_err = err / v[0];
    Ok(HyperplaneIntegral {
        n,
        m,
        value: (fiber.shift / eps - v[0].ln()) / nf,
        error: rel_err / nf,
        converged: rel_err <= 10.0 * settings.rel_tol,
    })
}

/// Expectation of `b(x_0)` under the normalized fiber measure `mu_m`.
pub fn fiber_expectation<B: Fn(f64) -> f64 + Sync>(
    spec: &PotentialSpec,
    j: f64,
    eps: f64,
    n: usize,
    m: f64,
    b: B,
) -> Result<f64> {
    let settings = ExactSettings::default();
    let fiber = Fiber::new(spec, j, eps, n, m, settings)?;
    let (v, _) = fiber.integrate(&b, settings.rel_tol)?;
    Ok(v[1] / v[0])
}

/// Quadrature of the normalized fiber density `exp(N phi_N(m) - E/eps)`, recomputed at a tighter tolerance.
pub fn fiber_normalization(spec: &PotentialSpec, j: f64, eps: f64, n: usize, m: f64) -> Result<f64> {
    let phi = phi_n_small(spec, j, eps, n, m)?;
    let settings = ExactSettings { rel_tol: 1e-11, tail_margin: 45.0 };
    let fiber = Fiber::new(spec, j, eps, n, m, settings)?;
    let (v, _) = fiber.integrate(&|_| 1.0, settings.rel_tol)?;
    Ok((v[0].ln() - fiber.shift / eps + n as f64 * phi.value).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CramerPointCheck {
    pub m: f64,
    pub phi_n: f64,
    pub phi: f64,
    pub phi2: f64,
    /// `exp(-N phi_N) / (exp(-N phi) sqrt(phi''/2 pi))`.
    pub ratio: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CramerVerificationReport {
    pub n: usize,
    pub points: Vec<CramerPointCheck>,
    pub max_deviation: f64,
}

pub fn verify_local_cramer(
    spec: &PotentialSpec,
    j: f64,
    eps: f64,
    n: usize,
    m_grid: &[f64],
) -> Result<CramerVerificationReport> {
    let t = CramerTransform::new(spec, j, eps)?;
    let nf = n as f64;
    let points = m_grid
        .par_iter()
        .map(|&m| {
            let exact = phi_n_small(spec, j, eps, n, m)?;
            let p = t.cramer_transform(m)?;
            let log_ratio = -nf * exact.value + nf * p.phi - 0.5 * (p.d2 / (2.0 * PI)).ln();
            let ratio = log_ratio.exp();
            Ok(CramerPointCheck { m, phi_n: exact.value, phi: p.phi, phi2: p.d2, ratio, deviation: (ratio - 1.0).abs() })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_deviation = points.iter().map(|p| p.deviation).fold(0.0, f64::max);
    Ok(CramerVerificationReport { n, points, max_deviation })
}

/// Checks that `deviation(N) * sqrt(N)` stays within a factor-two band across `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingBand {
    pub ns: Vec<usize>,
    pub deviations: Vec<f64>,
    pub scaled: Vec<f64>,
    pub spread: f64,
    pub within_band: bool,
}

impl ScalingBand {
    pub fn new(ns: Vec<usize>, deviations: Vec<f64>) -> Self {
        let scaled: Vec<f64> = ns.iter().zip(&deviations).map(|(&n, d)| d * (n as f64).sqrt()).collect();
        let hi = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
        let spread = hi / lo;
        ScalingBand { ns, deviations, scaled, spread, within_band: spread.is_finite() && spread <= 2.0 }
    }
}

pub fn local_cramer_scaling(
    spec: &PotentialSpec,
    j: f64,
    eps: f64,
    ns: &[usize],
    m_grid: &[f64],
) -> Result<(Vec<CramerVerificationReport>, ScalingBand)> {
    let reports = ns
        .iter()
        .map(|&n| verify_local_cramer(spec, j, eps, n, m_grid))
        .collect::<Result<Vec<_>>>()?;
    let band = ScalingBand::new(ns.to_vec(), reports.iter().map(|r| r.max_deviation).collect());
    Ok((reports, band))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableGap {
    pub n: usize,
    pub m: f64,
    pub fiber: f64,
    pub tilted: f64,
    pub gap: f64,
}

/// Fiber expectation of `b(x_0)` against the tilted single-site expectation at mean `m`.
pub fn verify_equiv_observables<B: Fn(f64) -> f64 + Sync>(
    spec: &PotentialSpec,
    j: f64,
    eps: f64,
    n: usize,
    b: B,
    m: f64,
) -> Result<ObservableGap> {
    let t = CramerTransform::new(spec, j, eps)?;
    let (_, var) = t.tilted_variance(m, |z| b(z) * b(z))?;
    if !var.is_finite() {
        return Err(KramersError::NonFinite(format!("observable is not square integrable at m = {m}")));
    }
    let tilted = t.tilted_expectation(m, &b)?;
    let fiber = fiber_expectation(spec, j, eps, n, m, &b)?;
    Ok(ObservableGap { n, m, fiber, tilted, gap: (fiber - tilted).abs() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cramer::gaussian_phi;

    #[test]
    fn helmert_is_orthonormal_and_mean_free() {
        for n in 2..=4 {
            let a = helmert_basis(n);
            for c in 0..n - 1 {
                assert!(a.iter().map(|r| r[c]).sum::<f64>().abs() < 1e-15);
                for d in 0..n - 1 {
                    let dot: f64 = a.iter().map(|r| r[c] * r[d]).sum();
                    assert!((dot - if c == d { 1.0 } else { 0.0 }).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn single_particle_is_the_potential() {
        let spec = PotentialSpec::quartic_double_well();
        let r = phi_n_small(&spec, 2.0, 0.5, 1, 0.3).unwrap();
        let psi = spec.effective(2.0).unwrap();
        assert!((r.value - psi.value(0.3) / 0.5).abs() < 1e-15);
    }

    #[test]
    fn gaussian_fiber_is_exact() {
        let spec = PotentialSpec::quadratic(1.5).unwrap();
        for n in 1..=4 {
            for m in [-0.7, 0.0, 0.4] {
                let r = phi_n_small(&spec, 0.0, 0.3, n, m).unwrap();
                let nf = n as f64;
                let expected = gaussian_phi(1.5, 0.3, m) - 0.5 * (1.5 / 0.3 / (2.0 * PI)).ln() / nf;
                assert!((r.value - expected).abs() < 1e-9, "N={n} m={m}: {} vs {expected}", r.value);
            }
        }
    }

    #[test]
    fn refuses_large_n() {
        let spec = PotentialSpec::quartic_double_well();
        assert!(phi_n_small(&spec, 2.0, 0.5, 5, 0.0).is_err());
    }

    #[test]
    fn constant_observable_has_no_gap() {
        let spec = PotentialSpec::quartic_double_well();
        let g = verify_equiv_observables(&spec, 2.0, 0.5, 2, |_| 1.0, 0.5).unwrap();
        assert_eq!(g.gap, 0.0);
    }

    #[test]
    fn fiber_mean_is_m() {
        let spec = PotentialSpec::quartic_double_well();
        let g = verify_equiv_observables(&spec, 2.0, 0.5, 3, |z| z, 0.5).unwrap();
        assert!((g.fiber - 0.5).abs() < 1e-9 && g.gap < 1e-9, "{g:?}");
    }
}
