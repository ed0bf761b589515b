//! The macroscopic Hamiltonian `H(m) = phi(m) - J m^2 / (2 eps)`, its three
//! critical points and the metastable geometry for a given particle number.
//!
//! The geometry follows `eta = sqrt(2 log(N/eps)) / sqrt(N H''(-m*))` literally.
//! Its leading order differs from the `sqrt(log N / N) sqrt(eps log(1/eps))`
//! scaling of the transition-time asymptotics, and the two are left unreconciled.

use serde::{Deserialize, Serialize};

use crate::cramer::{CramerTransform, Regime};
use crate::error::{KramersError, Result};

/// Geometric scan for the fixed-point equation `m = (phi*)'(J m / eps)`.
pub const SCAN_LO: f64 = 1e-3;
pub const SCAN_HI: f64 = 4.0;
pub const SCAN_NODES: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandscapeSummary {
    pub m_star: f64,
    pub j: f64,
    pub eps: f64,
    pub h_minus: f64,
    pub h_zero: f64,
    pub h_plus: f64,
    pub curvature_minus: f64,
    pub curvature_zero: f64,
    pub curvature_plus: f64,
    pub barrier: f64,
    /// `phi''` at `-m*` and at `0`.
    pub phi2_minus: f64,
    pub phi2_zero: f64,
    pub regime: Regime,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetastableGeometry {
    pub n: usize,
    pub eta: f64,
    pub rho: f64,
    /// `B- = {Px <= lower_level}`.
    pub lower_level: f64,
    /// `B+ = {Px >= upper_level}`.
    pub upper_level: f64,
}

/// `H(m)` and its derivatives up to order three.
pub fn hbar(t: &CramerTransform, m: f64, order: usize) -> Result<f64> {
    let p = t.cramer_transform(m)?;
    let (j, eps) = (t.j(), t.eps());
    Ok(match order {
        0 => p.phi - j * m * m / (2.0 * eps),
        1 => p.sigma - j * m / eps,
        2 => p.d2 - j / eps,
        3 => p.d3,
        k => return Err(KramersError::UnsupportedOrder(k)),
    })
}

/// `(phi*)'(J m / eps) - m`, positive just right of zero exactly when the landscape is double-welled.
pub fn fixed_point_residual(t: &CramerTransform, m: f64) -> Result<f64> {
    Ok(t.cgf(t.j() * m / t.eps(), 1)? - m)
}

/// Locate `m*` by a sign-change scan followed by bisection and a Newton polish.
pub fn find_critical_points(t: &CramerTransform) -> Result<LandscapeSummary> {
    let (j, eps) = (t.j(), t.eps());
    let nodes: Vec<f64> = (0..SCAN_NODES)
        .map(|i| SCAN_LO * (SCAN_HI / SCAN_LO).powf(i as f64 / (SCAN_NODES - 1) as f64))
        .collect();
    let mut values = Vec::with_capacity(nodes.len());
    for &m in &nodes {
        values.push(fixed_point_residual(t, m)?);
    }
    let crossings: Vec<usize> = (0..nodes.len() - 1)
        .filter(|&i| values[i] > 0.0 && values[i + 1] <= 0.0 || values[i] < 0.0 && values[i + 1] >= 0.0)
        .collect();
    let i = match crossings.len() {
        0 => return Err(KramersError::NoDoubleWell),
        1 => crossings[0],
        n => return Err(KramersError::MultipleRoots(n)),
    };
    if values[0] <= 0.0 {
        // The map crosses upward first: the origin is not a local maximum.
        return Err(KramersError::NoDoubleWell);
    }

    let (mut lo, mut hi) = (nodes[i], nodes[i + 1]);
    let mut flo = values[i];
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        let f = fixed_point_residual(t, mid)?;
        if (f > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = f;
        } else {
            hi = mid;
        }
    }
    let mut m = 0.5 * (lo + hi);
    for _ in 0..5 {
        let c = t.cumulants(j * m / eps)?;
        let g = c.mean - m;
        if g.abs() < 1e-15 {
            break;
        }
        let slope = j / eps * c.var - 1.0;
        let next = m - g / slope;
        if !(next > lo - 1e-9 && next < hi + 1e-9) {
            break;
        }
        m = next;
    }

    let p_minus = t.cramer_transform(-m)?;
    let p_zero = t.cramer_transform(0.0)?;
    let p_plus = t.cramer_transform(m)?;
    let h = |p: &crate::cramer::CramerPoint| p.phi - j * p.m * p.m / (2.0 * eps);
    let summary = LandscapeSummary {
        m_star: m,
        j,
        eps,
        h_minus: h(&p_minus),
        h_zero: h(&p_zero),
        h_plus: h(&p_plus),
        curvature_minus: p_minus.d2 - j / eps,
        curvature_zero: p_zero.d2 - j / eps,
        curvature_plus: p_plus.d2 - j / eps,
        barrier: h(&p_zero) - h(&p_minus),
        phi2_minus: p_minus.d2,
        phi2_zero: p_zero.d2,
        regime: t.regime(),
    };
    if !(summary.curvature_zero < 0.0 && summary.curvature_minus > 0.0 && summary.curvature_plus > 0.0) {
        return Err(KramersError::SolverFailure(format!(
            "unexpected curvature pattern at m* = {m}: {} {} {}",
            summary.curvature_minus, summary.curvature_zero, summary.curvature_plus
        )));
    }
    Ok(summary)
}

/// `eta = sqrt(2) sqrt(log(N/eps)) / sqrt(N H''(-m*))`.
pub fn eta(s: &LandscapeSummary, n: usize) -> f64 {
    let nf = n as f64;
    2f64.sqrt() * (nf / s.eps).ln().max(0.0).sqrt() / (nf * s.curvature_minus).sqrt()
}

/// `rho = sqrt(log N) / sqrt(N |H''(0)|)`.
pub fn rho(s: &LandscapeSummary, n: usize) -> f64 {
    let nf = n as f64;
    nf.ln().sqrt() / (nf * s.curvature_zero.abs()).sqrt()
}

pub fn metastable_geometry(s: &LandscapeSummary, n: usize) -> Result<MetastableGeometry> {
    if n == 0 {
        return Err(KramersError::InvalidInput("particle number must be at least 1".into()));
    }
    let (e, r) = (eta(s, n), rho(s, n));
    if !(e > 0.0 && e < s.m_star && r > 0.0 && r < s.m_star) {
        return Err(KramersError::GeometryDegenerate { eta: e, rho: r, m_star: s.m_star });
    }
    Ok(MetastableGeometry {
        n,
        eta: e,
        rho: r,
        lower_level: -s.m_star + e,
        upper_level: s.m_star - e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::PotentialSpec;

    #[test]
    fn eta_arithmetic() {
        let s = LandscapeSummary {
            m_star: 1.0,
            j: 2.0,
            eps: 0.1,
            h_minus: 0.0,
            h_zero: 1.0,
            h_plus: 0.0,
            curvature_minus: 20.0,
            curvature_zero: -10.0,
            curvature_plus: 20.0,
            barrier: 1.0,
            phi2_minus: 40.0,
            phi2_zero: 10.0,
            regime: Regime::LowTemperature { eps: 0.1 },
        };
        let e = eta(&s, 100);
        assert!((e - 0.083_112_906_813_455_5).abs() < 1e-15, "{e}");
        assert!(rho(&s, 10_000) < rho(&s, 100));
        assert!(metastable_geometry(&s, 100).is_ok());
    }

    #[test]
    fn quartic_landscape_is_double_welled() {
        let t = CramerTransform::new(&PotentialSpec::quartic_double_well(), 2.0, 0.1).unwrap();
        let s = find_critical_points(&t).unwrap();
        assert!((s.m_star - 1.0).abs() < 0.1);
        assert!((s.h_plus - s.h_minus).abs() < 1e-10);
        assert!(s.barrier > 0.0);
        assert!(hbar(&t, s.m_star, 1).unwrap().abs() < 1e-8);
    }

    #[test]
    fn quadratic_has_no_double_well() {
        let t = CramerTransform::high_temperature(&PotentialSpec::quadratic(5.0).unwrap(), 2.0).unwrap();
        assert_eq!(find_critical_points(&t), Err(KramersError::NoDoubleWell));
    }
}
