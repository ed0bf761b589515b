//! Eyring–Kramers predictions and their potential-theoretic ingredients.
//!
//! Capacities, masses and times are carried as logarithms; `exp(N * barrier)`
//! overflows long before the prefactors lose meaning. Error terms are stored as
//! order strings and never applied as numeric corrections.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::cramer::{CramerTransform, Regime};
use crate::error::{KramersError, Result};
use crate::landscape::{metastable_geometry, LandscapeSummary, MetastableGeometry};
use crate::quadrature::{integrate_with_breaks, Tolerance};

/// Magnitude of `log` below which the linear value is also rendered.
pub const LINEAR_LIMIT: f64 = 700.0;

const ORDER_N: &str = "O(sqrt(log(N)^3/N))";
const ORDER_EPS: &str = "O(eps)";
const ORDER_EPS2: &str = "O(eps^2)";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogValue {
    pub log: f64,
    pub value: Option<f64>,
}

impl LogValue {
    pub fn from_log(log: f64) -> Self {
        LogValue { log, value: (log.abs() < LINEAR_LIMIT).then(|| log.exp()) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Well {
    Minus,
    Plus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityBound {
    pub value: LogValue,
    /// Relative error terms of the leading-order expression.
    pub error_orders: Vec<String>,
    /// Multiplicative prefactors that are known but not applied.
    pub prefactors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KramersPrediction {
    pub n: usize,
    pub regime: Regime,
    pub time: LogValue,
    pub capacity_upper: CapacityBound,
    pub capacity_lower: CapacityBound,
    pub equilibrium_mass: LogValue,
    /// `None` when the asymptotic geometry is degenerate at this `N`.
    pub geometry: Option<MetastableGeometry>,
    pub landscape: LandscapeSummary,
    /// Error orders of the mean-time formula; two variants are stated and both are kept.
    pub time_error_orders: Vec<String>,
}

fn log_capacity(s: &LandscapeSummary, n: usize) -> f64 {
    let eps_factor = match s.regime {
        Regime::LowTemperature { eps } => eps.ln(),
        Regime::HighTemperature => 0.0,
    };
    eps_factor - (2.0 * PI).ln() - n as f64 * s.h_zero
        + 0.5 * s.curvature_zero.abs().ln()
        + 0.5 * s.phi2_zero.ln()
}

/// `(eps / 2 pi) exp(-N H(0)) sqrt(|H''(0)|) sqrt(phi''(0))`.
pub fn capacity_upper(s: &LandscapeSummary, n: usize) -> CapacityBound {
    CapacityBound {
        value: LogValue::from_log(log_capacity(s, n)),
        error_orders: vec![ORDER_N.to_string()],
        prefactors: vec![],
    }
}

/// Same leading term as [`capacity_upper`], with the lower bound's error orders.
pub fn capacity_lower(s: &LandscapeSummary, n: usize) -> CapacityBound {
    let (error_orders, prefactors) = match s.regime {
        Regime::LowTemperature { .. } => (vec![ORDER_N.to_string(), ORDER_EPS.to_string()], vec![]),
        Regime::HighTemperature => (vec![ORDER_N.to_string()], vec!["1/(1+a)".to_string()]),
    };
    CapacityBound { value: LogValue::from_log(log_capacity(s, n)), error_orders, prefactors }
}

/// `exp(-N H(-m*)) sqrt(phi''(-m*)) / sqrt(H''(-m*))`, or the same at `+m*`.
pub fn equilibrium_mass_at(s: &LandscapeSummary, n: usize, well: Well) -> LogValue {
    let (h, curv) = match well {
        Well::Minus => (s.h_minus, s.curvature_minus),
        Well::Plus => (s.h_plus, s.curvature_plus),
    };
    LogValue::from_log(-(n as f64) * h + 0.5 * s.phi2_minus.ln() - 0.5 * curv.ln())
}

pub fn equilibrium_mass(s: &LandscapeSummary, n: usize) -> LogValue {
    equilibrium_mass_at(s, n, Well::Minus)
}

/// Mean transition time as equilibrium mass over capacity.
pub fn ek_prediction(s: &LandscapeSummary, n: usize) -> Result<KramersPrediction> {
    if n == 0 {
        return Err(KramersError::InvalidInput("particle number must be at least 1".into()));
    }
    let cap_up = capacity_upper(s, n);
    let cap_low = capacity_lower(s, n);
    let mass = equilibrium_mass(s, n);
    let geometry = match metastable_geometry(s, n) {
        Ok(g) => Some(g),
        Err(KramersError::GeometryDegenerate { .. }) => None,
        Err(e) => return Err(e),
    };
    let time_error_orders = match s.regime {
        Regime::LowTemperature { .. } => vec![
            format!("{ORDER_N} + {ORDER_EPS}"),
            format!("{ORDER_N} + {ORDER_EPS2}"),
        ],
        Regime::HighTemperature => vec![ORDER_N.to_string(), "upper bound carries (1+a)".to_string()],
    };
    Ok(KramersPrediction {
        n,
        regime: s.regime,
        time: LogValue::from_log(mass.log - cap_up.value.log),
        capacity_upper: cap_up,
        capacity_lower: cap_low,
        equilibrium_mass: mass,
        geometry,
        landscape: *s,
        time_error_orders,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelPolicy {
    /// `B- = {Px <= -m* + eta}`, `B+ = {Px >= m* - eta}`, falling back to the well bottoms when degenerate.
    Asymptotic,
    /// `B- = {Px <= -m*}`, `B+ = {Px >= m*}`: the `eta -> 0` limit.
    WellBottoms,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionLevels {
    pub start: f64,
    pub target: f64,
    pub policy: LevelPolicy,
    /// True when the asymptotic policy met `eta >= m*` and used the well bottoms.
    pub geometry_fallback: bool,
}

/// Start and target levels of the simulated transition at particle number `n`.
pub fn transition_levels(s: &LandscapeSummary, n: usize, policy: LevelPolicy) -> Result<TransitionLevels> {
    let bottoms = |fallback| TransitionLevels { start: -s.m_star, target: s.m_star, policy, geometry_fallback: fallback };
    match policy {
        LevelPolicy::WellBottoms => Ok(bottoms(false)),
        LevelPolicy::Asymptotic => match metastable_geometry(s, n) {
            Ok(g) => Ok(TransitionLevels {
                start: g.lower_level,
                target: g.upper_level,
                policy,
                geometry_fallback: false,
            }),
            Err(KramersError::GeometryDegenerate { .. }) => Ok(bottoms(true)),
            Err(e) => Err(e),
        },
    }
}

/// `phi''(z)^{-1/2} exp(N (H(z) - H(0)))`, the unnormalized derivative of `-h*`.
fn harmonic_density(t: &CramerTransform, s: &LandscapeSummary, n: usize, z: f64) -> Result<f64> {
    let p = t.cramer_transform(z)?;
    let h = p.phi - t.j() * z * z / (2.0 * t.eps());
    Ok((n as f64 * (h - s.h_zero)).exp() / p.d2.sqrt())
}

fn integrate_density(
    t: &CramerTransform,
    s: &LandscapeSummary,
    n: usize,
    a: f64,
    b: f64,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let mut failure = None;
    let mut breaks = vec![a, b];
    if a < 0.0 && b > 0.0 {
        breaks.insert(1, 0.0);
    }
    let est = integrate_with_breaks(
        |z: f64| match harmonic_density(t, s, n, z) {
            Ok(v) => [v],
            Err(e) => {
                failure.get_or_insert(e);
                [0.0]
            }
        },
        &breaks,
        Tolerance::new(0.0, 1e-11),
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(est.value[0]),
    }
}

/// The macroscopic test function on `window = (a, b)`: 1 at `a`, 0 at `b`.
pub fn h_star(t: &CramerTransform, s: &LandscapeSummary, m: f64, window: (f64, f64), n: usize) -> Result<f64> {
    let (a, b) = window;
    if !(a < b) || m < a || m > b {
        return Err(KramersError::InvalidInput(format!("need a < b and m in [a, b], got m = {m}, ({a}, {b})")));
    }
    let total = integrate_density(t, s, n, a, b)?;
    let tail = integrate_density(t, s, n, m, b)?;
    Ok(tail / total)
}

/// The symmetric window `(-rho, rho)` of the test function.
pub fn rho_window(g: &MetastableGeometry) -> (f64, f64) {
    (-g.rho, g.rho)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirichletCapacity {
    pub window: (f64, f64),
    /// `eps / sqrt(2 pi N) int |h*'|^2 sqrt(phi'') exp(-N H)` over the window.
    pub value: LogValue,
}

/// Dirichlet form of the test function, evaluated by quadrature on `window`.
pub fn dirichlet_capacity(
    t: &CramerTransform,
    s: &LandscapeSummary,
    n: usize,
    window: (f64, f64),
) -> Result<DirichletCapacity> {
    let (a, b) = window;
    if !(a < b) {
        return Err(KramersError::InvalidInput(format!("empty window ({a}, {b})")));
    }
    let z_total = integrate_density(t, s, n, a, b)?;
    let nf = n as f64;
    let mut failure = None;
    let est = integrate_with_breaks(
        |z: f64| {
            let r = (|| -> Result<f64> {
                let p = t.cramer_transform(z)?;
                let h = p.phi - t.j() * z * z / (2.0 * t.eps());
                let dh = -harmonic_density(t, s, n, z)? / z_total;
                // exp(-N H) shifted by exp(N H(0)), restored below
                Ok(dh * dh * p.d2.sqrt() * (-nf * (h - s.h_zero)).exp())
            })();
            match r {
                Ok(v) => [v],
                Err(e) => {
                    failure.get_or_insert(e);
                    [0.0]
                }
            }
        },
        &if a < 0.0 && b > 0.0 { vec![a, 0.0, b] } else { vec![a, b] },
        Tolerance::new(0.0, 1e-11),
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    let log = t.eps().ln() - 0.5 * (2.0 * PI * nf).ln() - nf * s.h_zero + est.value[0].ln();
    Ok(DirichletCapacity { window, value: LogValue::from_log(log) })
}

/// Direct quadrature of `sqrt(N phi''/2 pi) exp(-N H)` over `(-m* - w, -m* + w)`.
pub fn well_mass_quadrature(
    t: &CramerTransform,
    s: &LandscapeSummary,
    n: usize,
    half_width: f64,
) -> Result<LogValue> {
    let nf = n as f64;
    let c = -s.m_star;
    let mut failure = None;
    let est = integrate_with_breaks(
        |z: f64| {
            let r = (|| -> Result<f64> {
                let p = t.cramer_transform(z)?;
                let h = p.phi - t.j() * z * z / (2.0 * t.eps());
                Ok((p.d2 / (2.0 * PI)).sqrt() * (-nf * (h - s.h_minus)).exp())
            })();
            match r {
                Ok(v) => [v],
                Err(e) => {
                    failure.get_or_insert(e);
                    [0.0]
                }
            }
        },
        &[c - half_width, c, c + half_width],
        Tolerance::new(0.0, 1e-11),
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(LogValue::from_log(0.5 * nf.ln() - nf * s.h_minus + est.value[0].ln()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoughBounds {
    pub lower: LogValue,
    pub upper: LogValue,
    pub a: f64,
    pub poincare: f64,
    /// `m` at which the variance of `Psi''` is largest.
    pub argmax: f64,
}

/// Number of grid points on `[-m*, m*]` used to maximize the variance of `Psi''`.
pub const ROUGH_GRID: usize = 41;

/// High-temperature bounds `lower <= E[T] <= (1 + a) lower`.
pub fn rough_bounds(
    s: &LandscapeSummary,
    t: &CramerTransform,
    n: usize,
    poincare: f64,
) -> Result<RoughBounds> {
    if !(poincare > 0.0 && poincare.is_finite()) {
        return Err(KramersError::InvalidPoincare(poincare));
    }
    let lower = ek_prediction(s, n)?.time;
    let psi = t.potential().clone();
    let mut worst = (0.0_f64, 0.0);
    for i in 0..ROUGH_GRID {
        let m = -s.m_star + 2.0 * s.m_star * i as f64 / (ROUGH_GRID - 1) as f64;
        let (_, var) = t.tilted_variance(m, |z| psi.derivatives(z).map(|d| d[2]).unwrap_or(f64::NAN))?;
        if !var.is_finite() {
            return Err(KramersError::NonFinite(format!("variance of Psi'' at m = {m}")));
        }
        if var > worst.0 {
            worst = (var, m);
        }
    }
    let a = worst.0 / (poincare * poincare);
    Ok(RoughBounds {
        lower,
        upper: LogValue::from_log(lower.log + a.ln_1p()),
        a,
        poincare,
        argmax: worst.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::find_critical_points;
    use crate::potentials::PotentialSpec;

    fn setup(eps: f64) -> (CramerTransform, LandscapeSummary) {
        let t = CramerTransform::new(&PotentialSpec::quartic_double_well(), 2.0, eps).unwrap();
        let s = find_critical_points(&t).unwrap();
        (t, s)
    }

    #[test]
    fn construction_identity() {
        let (_, s) = setup(0.1);
        for n in [1, 5, 40] {
            let p = ek_prediction(&s, n).unwrap();
            let diff = p.time.log + p.capacity_upper.value.log - p.equilibrium_mass.log;
            assert!(diff.abs() < 1e-12);
            assert!(p.capacity_lower.value.log <= p.capacity_upper.value.log + 1e-9);
        }
    }

    #[test]
    fn one_particle_matches_classical_form() {
        let (_, s) = setup(0.1);
        let p = ek_prediction(&s, 1).unwrap();
        let direct = 2.0 * PI * (s.h_zero - s.h_minus).exp()
            / (s.eps * (s.curvature_minus * s.curvature_zero.abs()).sqrt())
            * (s.phi2_minus / s.phi2_zero).sqrt();
        assert!((p.time.value.unwrap() / direct - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_time_grows_by_barrier() {
        let (_, s) = setup(0.1);
        let a = ek_prediction(&s, 10).unwrap().time.log;
        let b = ek_prediction(&s, 20).unwrap().time.log;
        assert!((b - a - 10.0 * s.barrier).abs() < 1e-10);
    }

    #[test]
    fn h_star_endpoints_and_midpoint() {
        let (t, s) = setup(0.1);
        let w = (-0.3, 0.3);
        assert!((h_star(&t, &s, -0.3, w, 30).unwrap() - 1.0).abs() < 1e-14);
        assert!(h_star(&t, &s, 0.3, w, 30).unwrap().abs() < 1e-14);
        assert!((h_star(&t, &s, 0.0, w, 30).unwrap() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn masses_are_symmetric() {
        let (_, s) = setup(0.05);
        let a = equilibrium_mass_at(&s, 20, Well::Minus).log;
        let b = equilibrium_mass_at(&s, 20, Well::Plus).log;
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn invalid_poincare_rejected() {
        let (t, s) = setup(0.1);
        assert_eq!(rough_bounds(&s, &t, 4, 0.0), Err(KramersError::InvalidPoincare(0.0)));
    }

    #[test]
    fn log_value_rendering() {
        assert!(LogValue::from_log(800.0).value.is_none());
        assert_eq!(LogValue::from_log(0.0).value, Some(1.0));
    }
}
