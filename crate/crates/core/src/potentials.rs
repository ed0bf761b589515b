//! Single-site potentials with exact derivatives up to order four.

use serde::{Deserialize, Serialize};

use crate::expr::{Expr, Polynomial};
use crate::error::{KramersError, Result};
use crate::quadrature::{integrate_with_breaks, scan_support, Tolerance};

/// Highest derivative order any evaluator supports.
pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialKind {
    /// `z^4/4 - z^2/2`
    QuarticDoubleWell,
    /// `z^4/4 + (J-1) z^2/2`
    EffectiveQuartic { j: f64 },
    /// A closed-form expression, already in effective form.
    GeneralSymmetric { source: String, expr: Expr, poly: Option<Polynomial> },
}

/// Declared lower bound `U(z) >= alpha z^2` for `|z| >= radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Growth {
    pub alpha: f64,
    pub radius: f64,
}

/// A splitting `Psi = Psi_c + Psi_b` with `Psi_c'' >= c` and `|Psi_b|_{C^2} <= c_prime`.
#[derive(Debug, Clone, PartialEq)]
pub struct Splitting {
    pub bounded_source: String,
    pub bounded: Expr,
    pub c: f64,
    pub c_prime: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub growth: Growth,
    pub splitting: Option<Splitting>,
}

/// Serializable summary of a [`PotentialSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialDescriptor {
    pub kind: String,
    pub j: Option<f64>,
    pub expression: Option<String>,
    pub growth: Growth,
    pub splitting: Option<(String, f64, f64)>,
}

impl PotentialSpec {
    pub fn quartic_double_well() -> Self {
        PotentialSpec {
            kind: PotentialKind::QuarticDoubleWell,
            growth: Growth { alpha: 0.25, radius: 2.0 },
            splitting: None,
        }
    }

    pub fn effective_quartic(j: f64) -> Result<Self> {
        if !(j >= 0.0 && j.is_finite()) {
            return Err(KramersError::InvalidInput(format!("coupling J must be non-negative, got {j}")));
        }
        let radius = (3.0 - 2.0 * j).max(0.0).sqrt().max(1.0);
        Ok(PotentialSpec {
            kind: PotentialKind::EffectiveQuartic { j },
            growth: Growth { alpha: 0.25, radius },
            splitting: None,
        })
    }

    /// A user-supplied potential in the variable `z`, taken as the effective potential.
    pub fn general(source: &str, alpha: f64, radius: f64) -> Result<Self> {
        if !(alpha > 0.0 && radius > 0.0) {
            return Err(KramersError::InvalidInput(format!(
                "growth metadata must be positive, got alpha = {alpha}, radius = {radius}"
            )));
        }
        let expr = Expr::parse(source)?;
        let spec = PotentialSpec {
            kind: PotentialKind::GeneralSymmetric { source: source.to_string(), poly: expr.polynomial(), expr },
            growth: Growth { alpha, radius },
            splitting: None,
        };
        spec.verify_growth()?;
        Ok(spec)
    }

    /// `alpha z^2 / 2`.
    pub fn quadratic(alpha: f64) -> Result<Self> {
        Self::general(&format!("{alpha:?}*z^2/2"), alpha / 2.0, 1.0)
    }

    pub fn with_splitting(mut self, bounded_source: &str, c: f64, c_prime: f64) -> Result<Self> {
        if !(c > 0.0 && c_prime > 0.0) {
            return Err(KramersError::InvalidInput(format!(
                "splitting constants must be positive, got c = {c}, c' = {c_prime}"
            )));
        }
        self.splitting = Some(Splitting {
            bounded_source: bounded_source.to_string(),
            bounded: Expr::parse(bounded_source)?,
            c,
            c_prime,
        });
        Ok(self)
    }

    /// The effective single-site potential for coupling `j`.
    ///
    /// The double well gains `j z^2 / 2`; effective and general kinds are returned unchanged.
    pub fn effective(&self, j: f64) -> Result<PotentialSpec> {
        match &self.kind {
            PotentialKind::QuarticDoubleWell => Self::effective_quartic(j),
            PotentialKind::EffectiveQuartic { j: own } if (own - j).abs() > 1e-12 => {
                Err(KramersError::InvalidInput(format!(
                    "potential was built for J = {own}, not J = {j}"
                )))
            }
            _ => Ok(self.clone()),
        }
    }

    pub fn coupling(&self) -> Option<f64> {
        match self.kind {
            PotentialKind::EffectiveQuartic { j } => Some(j),
            _ => None,
        }
    }

    pub fn is_quartic(&self) -> bool {
        !matches!(self.kind, PotentialKind::GeneralSymmetric { .. })
    }

    /// Quadratic coefficient of the closed-form quartic family `z^4/4 + b z^2/2`.
    fn quartic_b(&self) -> Option<f64> {
        match self.kind {
            PotentialKind::QuarticDoubleWell => Some(-1.0),
            PotentialKind::EffectiveQuartic { j } => Some(j - 1.0),
            PotentialKind::GeneralSymmetric { .. } => None,
        }
    }

    /// Potential value without derivative machinery.
    #[inline]
    pub fn value(&self, z: f64) -> f64 {
        match &self.kind {
            PotentialKind::GeneralSymmetric { poly: Some(p), .. } => p.value(z),
            PotentialKind::GeneralSymmetric { expr, .. } => expr.eval(z),
            _ => {
                let b = self.quartic_b().unwrap_or(0.0);
                let z2 = z * z;
                0.25 * z2 * z2 + 0.5 * b * z2
            }
        }
    }

    /// First derivative; the hot path of the particle integrator.
    #[inline]
    pub fn gradient(&self, z: f64) -> f64 {
        match &self.kind {
            PotentialKind::GeneralSymmetric { poly: Some(p), .. } => p.derivatives(z)[1],
            PotentialKind::GeneralSymmetric { expr, .. } => {
                expr.derivatives(z).map(|d| d[1]).unwrap_or(f64::NAN)
            }
            _ => {
                let b = self.quartic_b().unwrap_or(0.0);
                z * (z * z + b)
            }
        }
    }

    /// Value and derivatives of orders one through four.
    pub fn derivatives(&self, z: f64) -> Result<[f64; 5]> {
        match &self.kind {
            PotentialKind::GeneralSymmetric { poly: Some(p), .. } => Ok(p.derivatives(z)),
            PotentialKind::GeneralSymmetric { expr, .. } => expr.derivatives(z),
            _ => {
                let b = self.quartic_b().unwrap_or(0.0);
                let z2 = z * z;
                Ok([0.25 * z2 * z2 + 0.5 * b * z2, z * (z2 + b), 3.0 * z2 + b, 6.0 * z, 6.0])
            }
        }
    }

    pub fn eval(&self, z: f64, order: usize) -> Result<f64> {
        if order > MAX_ORDER {
            return Err(KramersError::UnsupportedOrder(order));
        }
        if order == 0 {
            return Ok(self.value(z));
        }
        Ok(self.derivatives(z)?[order])
    }

    pub fn descriptor(&self) -> PotentialDescriptor {
        let (kind, j, expression) = match &self.kind {
            PotentialKind::QuarticDoubleWell => ("quartic_double_well", None, None),
            PotentialKind::EffectiveQuartic { j } => ("effective_quartic", Some(*j), None),
            PotentialKind::GeneralSymmetric { source, .. } => {
                ("general_symmetric", None, Some(source.clone()))
            }
        };
        PotentialDescriptor {
            kind: kind.to_string(),
            j,
            expression,
            growth: self.growth,
            splitting: self
                .splitting
                .as_ref()
                .map(|s| (s.bounded_source.clone(), s.c, s.c_prime)),
        }
    }

    /// Spot-check the declared growth bound on `radius <= |z| <= 8 radius`.
    pub fn verify_growth(&self) -> Result<()> {
        let Growth { alpha, radius } = self.growth;
        for i in 0..=200 {
            let z = radius * (1.0 + 7.0 * i as f64 / 200.0);
            for s in [z, -z] {
                let u = self.value(s);
                if !u.is_finite() || u < alpha * s * s - 1e-12 {
                    return Err(KramersError::InvalidInput(format!(
                        "declared growth U(z) >= {alpha} z^2 fails at z = {s} (U = {u})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Largest value of `alpha z^2 - U(z)` on `|z| <= radius`, so that
    /// `U(z) >= alpha z^2 - slack` holds everywhere.
    pub fn growth_slack(&self) -> f64 {
        let Growth { alpha, radius } = self.growth;
        (0..=400)
            .map(|i| {
                let z = -radius + 2.0 * radius * i as f64 / 400.0;
                alpha * z * z - self.value(z)
            })
            .fold(0.0_f64, f64::max)
    }

    /// Radius beyond which `sigma z - U(z)/eps` stays below `floor` for every `|z|`.
    pub fn tail_radius(&self, sigma: f64, eps: f64, floor: f64) -> f64 {
        let Growth { alpha, radius } = self.growth;
        let slack = self.growth_slack() / eps;
        // alpha L^2 / eps - |sigma| L - slack >= -floor
        let a = alpha / eps;
        let b = sigma.abs();
        let c = (-floor + slack).max(0.0) + 1.0;
        let l = (b + (b * b + 4.0 * a * c).sqrt()) / (2.0 * a);
        l.max(radius)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClauseStatus {
    Pass,
    Fail,
    NotEvaluated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseResult {
    pub clause: u8,
    pub status: ClauseStatus,
    pub detail: String,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub j: f64,
    pub clauses: Vec<ClauseResult>,
    /// Range of tilts probed for the local boundedness clause.
    pub sigma_range: (f64, f64),
}

impl AssumptionReport {
    pub fn clause(&self, k: u8) -> &ClauseResult {
        &self.clauses[(k - 1) as usize]
    }

    /// True when no evaluated clause failed.
    pub fn passes(&self) -> bool {
        self.clauses.iter().all(|c| c.status != ClauseStatus::Fail)
    }
}

fn clause(k: u8, ok: bool, detail: String, value: Option<f64>) -> ClauseResult {
    ClauseResult {
        clause: k,
        status: if ok { ClauseStatus::Pass } else { ClauseStatus::Fail },
        detail,
        value,
    }
}

/// Tilted expectations `E[f_c]` under `exp(sigma z - psi(z))`.
fn tilted_expectations<const K: usize>(
    spec: &PotentialSpec,
    sigma: f64,
    f: impl Fn(f64) -> [f64; K],
) -> Result<[f64; K]> {
    let l = spec.tail_radius(sigma, 1.0, -spec.value(0.0) - 60.0);
    let log_w = |z: f64| sigma * z - spec.value(z);
    let sup = scan_support(log_w, -l, l, 1024, 60.0)?;
    let est = integrate_with_breaks(
        |z: f64| {
            let w = (log_w(z) - sup.peak).exp();
            let v = f(z);
            let mut out = [0.0; K];
            out[0] = w;
            for c in 1..K {
                out[c] = w * v[c];
            }
            out
        },
        &[sup.lo, sup.argmax, sup.hi],
        Tolerance::new(1e-14, 1e-12),
    )?;
    let mut r = est.value;
    let z = r[0];
    r[0] = 1.0;
    for c in 1..K {
        r[c] /= z;
    }
    Ok(r)
}

/// Evaluate the six clauses of the convex-plus-bounded assumption for `spec` at unit temperature.
///
/// Quartic kinds are low-temperature objects, so the unit-temperature double-well
/// clause (5) is reported as not evaluated for them.
pub fn check_assumption(spec: &PotentialSpec, j: f64) -> Result<AssumptionReport> {
    if !(j > 0.0) {
        return Err(KramersError::InvalidInput(format!("coupling J must be positive, got {j}")));
    }
    let psi = spec.effective(j)?;
    let r = psi.growth.radius;
    let grid: Vec<f64> = (0..=800).map(|i| -4.0 * r + 8.0 * r * i as f64 / 800.0).collect();
    let mut clauses = Vec::with_capacity(6);

    // (1) splitting
    let bounded = psi.splitting.as_ref().map(|s| &s.bounded);
    let psi_c2 = |z: f64| -> Result<f64> {
        let d = psi.derivatives(z)?;
        let b = match bounded {
            Some(e) => e.derivatives(z)?[2],
            None => 0.0,
        };
        Ok(d[2] - b)
    };
    let mut min_c2 = f64::INFINITY;
    let mut b_norm = 0.0_f64;
    for &z in &grid {
        min_c2 = min_c2.min(psi_c2(z)?);
        if let Some(e) = bounded {
            let d = e.derivatives(z)?;
            b_norm = b_norm.max(d[0].abs()).max(d[1].abs()).max(d[2].abs());
        }
    }
    clauses.push(match &psi.splitting {
        Some(s) => clause(
            1,
            min_c2 >= s.c - 1e-9 && b_norm <= s.c_prime + 1e-12,
            format!(
                "min Psi_c'' = {min_c2:.6} (c = {}), |Psi_b|_C2 = {b_norm:.6} (c' = {})",
                s.c, s.c_prime
            ),
            Some(min_c2),
        ),
        None => clause(
            1,
            min_c2 > 0.0,
            format!("no splitting given; Psi_c = Psi with min Psi'' = {min_c2:.6}"),
            Some(min_c2),
        ),
    });

    // (2) symmetry
    let asym = grid
        .iter()
        .map(|&z| (psi.value(z) - psi.value(-z)).abs() / (1.0 + psi.value(z).abs()))
        .fold(0.0_f64, f64::max);
    clauses.push(clause(2, asym <= 1e-12, format!("max relative asymmetry {asym:e}"), Some(asym)));

    // (3) convexity of Psi' on [0, inf) via divided differences on a geometric grid
    let top = 4.0 * r;
    let mut pts = vec![0.0];
    pts.extend((0..200).map(|i| 1e-3 * (top / 1e-3).powf(i as f64 / 199.0)));
    let d1: Vec<f64> = pts.iter().map(|&z| psi.gradient(z)).collect();
    let mut min_dd = f64::INFINITY;
    for i in 0..pts.len() - 2 {
        let (x0, x1, x2) = (pts[i], pts[i + 1], pts[i + 2]);
        let a = (d1[i + 1] - d1[i]) / (x1 - x0);
        let b = (d1[i + 2] - d1[i + 1]) / (x2 - x1);
        min_dd = min_dd.min((b - a) / (x2 - x0));
    }
    clauses.push(clause(
        3,
        min_dd >= -1e-9,
        format!("min second divided difference of Psi' on [0, {top}] = {min_dd:e}"),
        Some(min_dd),
    ));

    // (4) quadratic Psi_c exception
    let mut max_c3 = 0.0_f64;
    let mut c2_at_0 = 0.0;
    for &z in &grid {
        let d = psi.derivatives(z)?;
        let b3 = match bounded {
            Some(e) => e.derivatives(z)?[3],
            None => 0.0,
        };
        max_c3 = max_c3.max((d[3] - b3).abs());
    }
    if let Ok(v) = psi_c2(0.0) {
        c2_at_0 = v;
    }
    if max_c3 <= 1e-10 {
        let c_psi = c2_at_0 / 2.0;
        clauses.push(clause(
            4,
            c_psi > j,
            format!("Psi_c is quadratic with c_Psi = {c_psi} (needs > J = {j})"),
            Some(c_psi),
        ));
    } else {
        clauses.push(clause(4, true, "Psi_c is not quadratic".into(), None));
    }

    // (5) double-well criterion 1/J < <z^2>
    if psi.is_quartic() {
        clauses.push(ClauseResult {
            clause: 5,
            status: ClauseStatus::NotEvaluated,
            detail: "quartic kinds are treated at low temperature, where J > 1 suffices".into(),
            value: None,
        });
    } else {
        let m = tilted_expectations(&psi, 0.0, |z| [1.0, z * z])?;
        clauses.push(clause(
            5,
            1.0 / j < m[1],
            format!("<z^2> = {:.10} against 1/J = {:.10}", m[1], 1.0 / j),
            Some(m[1]),
        ));
    }

    // (6) local boundedness of the tilted second moment of Psi''
    let sigmas: Vec<f64> = (0..=40).map(|i| -20.0 + i as f64).collect();
    let mut worst = 0.0_f64;
    let mut finite = true;
    for &s in &sigmas {
        let m = tilted_expectations(&psi, s, |z| {
            let d2 = psi.derivatives(z).map(|d| d[2]).unwrap_or(f64::NAN);
            [1.0, d2 * d2]
        })?;
        if !m[1].is_finite() {
            finite = false;
        } else {
            worst = worst.max(m[1]);
        }
    }
    clauses.push(clause(
        6,
        finite,
        format!("max tilted E[(Psi'')^2] = {worst:.6e} on sigma in [-20, 20]"),
        Some(worst),
    ));

    Ok(AssumptionReport { j, clauses, sigma_range: (-20.0, 20.0) })
}
