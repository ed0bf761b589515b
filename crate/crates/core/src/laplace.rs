//! Leading-order Laplace asymptotics for moment integrals of `exp(-U/eps)` and
//! a brute-force quadrature oracle to check them against.
//!
//! `U(z) = W(z) - tau z` is an effective potential with a linear tilt. Values
//! carry the factor `exp(-U(z_m)/eps)` separately (see [`LogScaled`]) because it
//! under- or overflows at small `eps`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{KramersError, Result};
use crate::potentials::{PotentialKind, PotentialSpec};
use crate::quadrature::{integrate_with_breaks, scan_support, Tolerance};

/// Curvature below which the Laplace formulas are singular.
pub const DEGENERACY_THRESHOLD: f64 = 1e-8;

/// Highest moment index the formulas support.
pub const MAX_K: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Center {
    Minimizer,
    TiltedMean,
}

/// `scaled * exp(log_scale)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogScaled {
    pub log_scale: f64,
    pub scaled: f64,
}

impl LogScaled {
    pub fn value(&self) -> f64 {
        self.scaled * self.log_scale.exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceProblem {
    pub potential: PotentialSpec,
    pub tau: f64,
    pub eps: f64,
    pub z_m: f64,
    /// `U, U', U'', U''', U''''` at `z_m`.
    pub u: [f64; 5],
}

impl LaplaceProblem {
    /// `U(z) = psi_J(z) - tau z` for the effective form of `spec` at coupling `j`.
    pub fn new(spec: &PotentialSpec, j: f64, tau: f64, eps: f64) -> Result<Self> {
        Self::from_effective(spec.effective(j)?, tau, eps)
    }

    pub fn from_effective(potential: PotentialSpec, tau: f64, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) || !tau.is_finite() {
            return Err(KramersError::InvalidInput(format!("need eps > 0 and finite tau, got {eps}, {tau}")));
        }
        let start = match potential.kind {
            PotentialKind::EffectiveQuartic { j } => cubic_minimizer(j - 1.0, tau),
            PotentialKind::QuarticDoubleWell => cubic_minimizer(-1.0, tau),
            PotentialKind::GeneralSymmetric { .. } => {
                let sigma = tau / eps;
                let l = potential.tail_radius(sigma, eps, -potential.value(0.0) / eps - 60.0);
                scan_support(|z| (tau * z - potential.value(z)) / eps, -l, l, 4096, 60.0)?.argmax
            }
        };
        let z_m = polish_minimizer(&potential, tau, start)?;
        let mut u = potential.derivatives(z_m)?;
        u[0] -= tau * z_m;
        u[1] -= tau;
        Ok(LaplaceProblem { potential, tau, eps, z_m, u })
    }

    /// `U(z)` at an arbitrary point.
    pub fn u_at(&self, z: f64) -> f64 {
        self.potential.value(z) - self.tau * z
    }

    fn require_nondegenerate(&self) -> Result<()> {
        if self.u[2] <= DEGENERACY_THRESHOLD {
            return Err(KramersError::DegenerateMinimum(self.u[2]));
        }
        Ok(())
    }

    fn log_scale(&self) -> f64 {
        -self.u[0] / self.eps
    }
}

/// Real roots of `z^3 + p z - q = 0`; the one minimizing `z^4/4 + p z^2/2 - q z`.
fn cubic_minimizer(p: f64, q: f64) -> f64 {
    let disc = q * q / 4.0 + p * p * p / 27.0;
    let roots: Vec<f64> = if disc >= 0.0 {
        let s = disc.sqrt();
        vec![(q / 2.0 + s).cbrt() + (q / 2.0 - s).cbrt()]
    } else {
        let r = 2.0 * (-p / 3.0).sqrt();
        let arg = (-(3.0 * q) / (p * r)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        (0..3).map(|k| r * (theta - 2.0 * PI * k as f64 / 3.0).cos()).collect()
    };
    let u = |z: f64| 0.25 * z.powi(4) + 0.5 * p * z * z - q * z;
    roots.into_iter().fold(f64::NAN, |best, z| if best.is_nan() || u(z) < u(best) { z } else { best })
}

fn polish_minimizer(potential: &PotentialSpec, tau: f64, start: f64) -> Result<f64> {
    let mut z = start;
    let tol = 1e-12 * tau.abs().max(1.0);
    for _ in 0..100 {
        let d = potential.derivatives(z)?;
        let g = d[1] - tau;
        if g.abs() <= tol {
            return Ok(z);
        }
        if !(d[2] > 0.0) {
            break;
        }
        let step = g / d[2];
        z -= step;
        if step.abs() <= 1e-16 * z.abs().max(1.0) {
            break;
        }
    }
    let g = potential.gradient(z) - tau;
    if g.abs() <= 1e-10 * tau.abs().max(1.0) {
        Ok(z)
    } else {
        Err(KramersError::SolverFailure(format!("minimizer search stalled at z = {z} with U' = {g:e}")))
    }
}

/// `n!!` with the convention `(-1)!! = 1`.
pub fn double_factorial(n: i64) -> f64 {
    if n <= 0 {
        return 1.0;
    }
    let mut acc = 1.0;
    let mut k = n;
    while k > 1 {
        acc *= k as f64;
        k -= 2;
    }
    acc
}

fn check_k(k: usize) -> Result<()> {
    if k > MAX_K {
        return Err(KramersError::UnsupportedOrder(k));
    }
    Ok(())
}

/// Leading term of `int (z - z_m)^n exp(-U/eps) dz` with `n = 2k` (even) or `n = 2k + 1` (odd).
pub fn laplace_moment(p: &LaplaceProblem, k: usize, parity: Parity) -> Result<LogScaled> {
    check_k(k)?;
    p.require_nondegenerate()?;
    let (eps, u2, u3) = (p.eps, p.u[2], p.u[3]);
    let kf = k as f64;
    let scaled = match parity {
        Parity::Even => {
            (2.0 * PI).sqrt() * double_factorial(2 * k as i64 - 1) * eps.powf(kf + 0.5)
                / u2.powf(kf + 0.5)
        }
        Parity::Odd => {
            -(2.0 * PI).sqrt() * double_factorial(2 * k as i64 + 3) * u3 * eps.powf(kf + 1.5)
                / (6.0 * u2.powf(kf + 2.5))
        }
    };
    Ok(LogScaled { log_scale: p.log_scale(), scaled })
}

/// Leading-order ratio of the moment to the partition integral.
pub fn moment_ratio(p: &LaplaceProblem, k: usize, parity: Parity, center: Center) -> Result<f64> {
    check_k(k)?;
    p.require_nondegenerate()?;
    let (eps, u2, u3) = (p.eps, p.u[2], p.u[3]);
    let kf = k as f64;
    Ok(match (parity, center) {
        (Parity::Even, _) => eps.powf(kf) * double_factorial(2 * k as i64 - 1) / u2.powf(kf),
        (Parity::Odd, Center::Minimizer) => {
            -double_factorial(2 * k as i64 + 3) * u3 * eps.powf(kf + 1.0) / (6.0 * u2.powf(kf + 2.0))
        }
        (Parity::Odd, Center::TiltedMean) => {
            -2.0 * kf * double_factorial(2 * k as i64 + 1) * u3 * eps.powf(kf + 1.0)
                / (6.0 * u2.powf(kf + 2.0))
        }
    })
}

/// Integration window carrying all but `exp(-margin)` of the weight.
fn oracle_window(p: &LaplaceProblem, margin: f64) -> Result<(f64, f64)> {
    let sigma = p.tau / p.eps;
    let floor = p.log_scale() - margin;
    let l = p.potential.tail_radius(sigma, p.eps, floor);
    let lo = (p.z_m - 2.0 * l).min(-l);
    let hi = (p.z_m + 2.0 * l).max(l);
    let sup = scan_support(|z| -p.u_at(z) / p.eps, lo, hi, 4096, margin)?;
    Ok((sup.lo, sup.hi))
}

/// `int (z - c)^n exp(-U/eps) dz` by adaptive quadrature, where `n` is the raw power
/// and `c` is the minimizer or the normalized mean.
///
/// `tol` is the absolute tolerance on the integrand shifted by `exp(U(z_m)/eps)`.
pub fn quad_oracle(p: &LaplaceProblem, n: usize, center: Center, tol: f64) -> Result<LogScaled> {
    let (lo, hi) = oracle_window(p, 80.0)?;
    let z_m = p.z_m;
    let shift = p.u[0];
    let eps = p.eps;
    let weight = |z: f64| (-(p.u_at(z) - shift) / eps).exp();
    let tolerance = Tolerance::new(tol, 0.0).with_max_intervals(20_000);
    let c = match center {
        Center::Minimizer => z_m,
        Center::TiltedMean => {
            let est = integrate_with_breaks(
                |z: f64| {
                    let w = weight(z);
                    [w, w * (z - z_m)]
                },
                &[lo, z_m, hi],
                tolerance,
            )?;
            z_m + est.value[1] / est.value[0]
        }
    };
    let mut breaks = vec![lo, z_m, hi];
    if c > lo && c < hi {
        breaks.push(c);
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let est = integrate_with_breaks(
        |z: f64| [weight(z) * (z - c).powi(n as i32)],
        &breaks,
        tolerance,
    )?;
    Ok(LogScaled { log_scale: p.log_scale(), scaled: est.value[0] })
}

/// `|laplace - oracle| / |oracle|` for the moment of index `k` around the minimizer.
pub fn relative_error(p: &LaplaceProblem, k: usize, parity: Parity, tol: f64) -> Result<f64> {
    let n = match parity {
        Parity::Even => 2 * k,
        Parity::Odd => 2 * k + 1,
    };
    let approx = laplace_moment(p, k, parity)?;
    let exact = quad_oracle(p, n, Center::Minimizer, tol)?;
    Ok(((approx.scaled - exact.scaled) / exact.scaled).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(eps: f64, tau: f64) -> LaplaceProblem {
        LaplaceProblem::from_effective(PotentialSpec::quadratic(1.0).unwrap(), tau, eps).unwrap()
    }

    #[test]
    fn double_factorials() {
        let table: Vec<f64> = [-1, 1, 3, 5, 7].iter().map(|&n| double_factorial(n)).collect();
        assert_eq!(table, vec![1.0, 1.0, 3.0, 15.0, 105.0]);
    }

    #[test]
    fn gaussian_mass_is_exact() {
        let p = gaussian(0.01, 0.0);
        let v = laplace_moment(&p, 0, Parity::Even).unwrap().value();
        assert!((v - 0.2506628274631000).abs() < 1e-15);
        assert_eq!(laplace_moment(&p, 2, Parity::Odd).unwrap().scaled, 0.0);
        let q = quad_oracle(&gaussian(1.0, 0.0), 2, Center::Minimizer, 1e-13).unwrap();
        assert!((q.value() - (2.0 * PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cardano_root_matches_tilt() {
        let spec = PotentialSpec::effective_quartic(2.0).unwrap();
        let tau = spec.gradient(1.1);
        let p = LaplaceProblem::from_effective(spec, tau, 0.05).unwrap();
        assert!((p.z_m - 1.1).abs() < 1e-13);
        assert!(p.u[1].abs() <= 1e-10);
    }

    #[test]
    fn double_well_picks_global_minimizer() {
        let p = LaplaceProblem::from_effective(PotentialSpec::quartic_double_well(), 0.1, 0.1).unwrap();
        assert!(p.z_m > 1.0);
    }

    #[test]
    fn degenerate_minimum_is_reported() {
        let p = LaplaceProblem::from_effective(PotentialSpec::effective_quartic(1.0).unwrap(), 0.0, 0.1)
            .unwrap();
        assert!(matches!(laplace_moment(&p, 0, Parity::Even), Err(KramersError::DegenerateMinimum(_))));
        assert!(matches!(laplace_moment(&gaussian(0.1, 0.0), 5, Parity::Even), Err(KramersError::UnsupportedOrder(5))));
    }

    #[test]
    fn symmetric_odd_mean_moment_vanishes() {
        let p = LaplaceProblem::from_effective(PotentialSpec::effective_quartic(2.0).unwrap(), 0.0, 0.2)
            .unwrap();
        for n in [1, 3, 5] {
            let v = quad_oracle(&p, n, Center::TiltedMean, 1e-13).unwrap();
            assert!(v.scaled.abs() < 1e-13);
        }
    }

    #[test]
    fn first_even_ratio_is_inverse_curvature() {
        let p = LaplaceProblem::from_effective(PotentialSpec::effective_quartic(2.0).unwrap(), 1.0, 0.05)
            .unwrap();
        let r = moment_ratio(&p, 1, Parity::Even, Center::Minimizer).unwrap();
        assert!((r - 0.05 / p.u[2]).abs() < 1e-16);
        let g = gaussian(0.3, 0.4);
        assert_eq!(moment_ratio(&g, 1, Parity::Odd, Center::TiltedMean).unwrap(), 0.0);
    }
}
