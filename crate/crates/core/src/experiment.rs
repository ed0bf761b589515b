//! Pipeline orchestration, the JSON report and its CSV/SVG renderings.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{close_stages, ExperimentConfig, RegimeChoice, Stage};
use crate::cramer::{CramerTransform, DecayReport};
use crate::error::{KramersError, Result};
use crate::exactsmall::{local_cramer_scaling, verify_equiv_observables, CramerVerificationReport, ObservableGap, ScalingBand};
use crate::expr::Expr;
use crate::kramers::{
    dirichlet_capacity, ek_prediction, rough_bounds, transition_levels, DirichletCapacity, KramersPrediction,
    RoughBounds, TransitionLevels,
};
use crate::landscape::{find_critical_points, hbar, metastable_geometry, LandscapeSummary};
use crate::laplace::{relative_error, LaplaceProblem, Parity};
use crate::potentials::{check_assumption, AssumptionReport, PotentialSpec};
use crate::simulate::{default_max_steps, estimate_transition_time, Init, SimulationConfig, TransitionEstimate};

/// How a number in the report was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComputationPath {
    Formula,
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tagged<T> {
    pub path: ComputationPath,
    pub values: T,
}

fn tag<T>(path: ComputationPath, values: T) -> Tagged<T> {
    Tagged { path, values }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StageOutcome<T> {
    Ok { result: T },
    Failed { error: String },
}

impl<T> StageOutcome<T> {
    fn from_result(stage: Stage, r: Result<T>) -> Self {
        match r {
            Ok(result) => StageOutcome::Ok { result },
            Err(e) => {
                let err = KramersError::StageFailure { stage: stage.name().to_string(), cause: e.to_string() };
                log::error!("{err}");
                StageOutcome::Failed { error: err.to_string() }
            }
        }
    }

    pub fn ok(&self) -> Option<&T> {
        match self {
            StageOutcome::Ok { result } => Some(result),
            StageOutcome::Failed { .. } => None,
        }
    }

    pub fn failed(&self) -> bool {
        matches!(self, StageOutcome::Failed { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeSection {
    pub summary: Tagged<LandscapeSummary>,
    pub assumption: AssumptionReport,
    /// `(m, H(m))` on the plotting grid over `[-2, 2]`.
    pub curve: Tagged<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSection {
    pub n: usize,
    pub prediction: Tagged<KramersPrediction>,
    /// Dirichlet form of `h*` over `(-rho, rho)`, present when the geometry is non-degenerate.
    pub dirichlet_capacity: Option<Tagged<DirichletCapacity>>,
    pub rough_bounds: Option<Tagged<RoughBounds>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtShift {
    pub fine_dt: f64,
    pub fine_mean: f64,
    pub fine_ci95: (f64, f64),
    pub shift: f64,
    pub ci_width: f64,
    pub discretization_bias: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSection {
    pub n: usize,
    pub dt: f64,
    pub levels: TransitionLevels,
    pub predicted_time: f64,
    pub estimate: Tagged<TransitionEstimate>,
    /// Same budget started from the deterministic state `start * 1`.
    pub deterministic: Option<Tagged<TransitionEstimate>>,
    pub dt_check: Option<Tagged<DtShift>>,
    pub ratio: f64,
    pub within_factor_3: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CramerSection {
    pub reports: Vec<CramerVerificationReport>,
    pub band: ScalingBand,
    pub decay: Vec<DecayReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceRow {
    pub k: usize,
    pub parity: Parity,
    pub eps: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceSection {
    pub tau: f64,
    pub rows: Vec<LaplaceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservablesSection {
    pub observable: String,
    pub gaps: Vec<ObservableGap>,
    pub band: ScalingBand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub seed: u64,
    pub stages: Vec<Stage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landscape: Option<StageOutcome<Tagged<LandscapeSection>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predict: Option<StageOutcome<Vec<PredictionSection>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<StageOutcome<Vec<SimulationSection>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify_cramer: Option<StageOutcome<Tagged<CramerSection>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify_laplace: Option<StageOutcome<Tagged<LaplaceSection>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify_observables: Option<StageOutcome<Tagged<ObservablesSection>>>,
}

impl ExperimentReport {
    /// A report with no stage sections.
    pub fn empty(config: ExperimentConfig) -> Self {
        ExperimentReport {
            config_hash: config.content_hash(),
            seed: config.seed,
            config,
            stages: vec![],
            landscape: None,
            predict: None,
            simulate: None,
            verify_cramer: None,
            verify_laplace: None,
            verify_observables: None,
        }
    }

    pub fn failed_stages(&self) -> Vec<Stage> {
        let mut out = vec![];
        let checks = [
            (Stage::Landscape, self.landscape.as_ref().is_some_and(|s| s.failed())),
            (Stage::Predict, self.predict.as_ref().is_some_and(|s| s.failed())),
            (Stage::Simulate, self.simulate.as_ref().is_some_and(|s| s.failed())),
            (Stage::VerifyCramer, self.verify_cramer.as_ref().is_some_and(|s| s.failed())),
            (Stage::VerifyLaplace, self.verify_laplace.as_ref().is_some_and(|s| s.failed())),
            (Stage::VerifyObservables, self.verify_observables.as_ref().is_some_and(|s| s.failed())),
        ];
        for (stage, failed) in checks {
            if failed {
                out.push(stage);
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| KramersError::IoFailure(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| KramersError::IoFailure(e.to_string()))
    }
}

/// Wall-clock seconds per stage; written next to the report, never into it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stages: Vec<(String, f64)>,
    pub total: f64,
}

/// Grid for the landscape curve.
pub const CURVE_POINTS: usize = 161;

fn transform(cfg: &ExperimentConfig, spec: &PotentialSpec) -> Result<CramerTransform> {
    match cfg.regime {
        RegimeChoice::LowTemperature => CramerTransform::new(spec, cfg.j, cfg.eps()),
        RegimeChoice::HighTemperature => CramerTransform::high_temperature(spec, cfg.j),
    }
}

fn dependency_failed(dep: Stage) -> KramersError {
    KramersError::InvalidInput(format!("dependency `{dep}` failed"))
}

fn run_landscape(t: &CramerTransform, spec: &PotentialSpec, j: f64) -> Result<Tagged<LandscapeSection>> {
    let summary = find_critical_points(t)?;
    let assumption = check_assumption(spec, j)?;
    let curve = (0..CURVE_POINTS)
        .into_par_iter()
        .map(|i| {
            let m = -2.0 + 4.0 * i as f64 / (CURVE_POINTS - 1) as f64;
            Ok((m, hbar(t, m, 0)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(tag(
        ComputationPath::Quadrature,
        LandscapeSection {
            summary: tag(ComputationPath::Quadrature, summary),
            assumption,
            curve: tag(ComputationPath::Quadrature, curve),
        },
    ))
}

fn run_predict(cfg: &ExperimentConfig, t: &CramerTransform, s: &LandscapeSummary) -> Result<Vec<PredictionSection>> {
    cfg.n
        .par_iter()
        .map(|&n| {
            let prediction = ek_prediction(s, n)?;
            let dirichlet = match metastable_geometry(s, n) {
                Ok(g) => Some(tag(ComputationPath::Quadrature, dirichlet_capacity(t, s, n, (-g.rho, g.rho))?)),
                Err(_) => None,
            };
            let rough = match (cfg.regime, cfg.poincare) {
                (RegimeChoice::HighTemperature, Some(p)) => Some(tag(ComputationPath::Quadrature, rough_bounds(s, t, n, p)?)),
                _ => None,
            };
            Ok(PredictionSection {
                n,
                prediction: tag(ComputationPath::Formula, prediction),
                dirichlet_capacity: dirichlet,
                rough_bounds: rough,
            })
        })
        .collect()
}

fn run_simulation(
    cfg: &ExperimentConfig,
    spec: &PotentialSpec,
    s: &LandscapeSummary,
    predictions: &[PredictionSection],
) -> Result<Vec<SimulationSection>> {
    let mut out = Vec::with_capacity(cfg.n.len());
    for p in predictions {
        let n = p.n;
        let predicted = p.prediction.values.time.value.ok_or_else(|| {
            KramersError::Overflow(format!("predicted time exp({}) is not representable", p.prediction.values.time.log))
        })?;
        let levels = transition_levels(s, n, cfg.levels)?;
        let base = SimulationConfig::new(spec, n, cfg.j, cfg.eps(), cfg.dt, levels.target)?
            .with_seed(cfg.seed.wrapping_add(n as u64))
            .with_noise_substeps(cfg.noise_substeps)
            .with_max_steps(default_max_steps(predicted, cfg.dt, cfg.max_steps_ceiling));
        let sim = base.clone().with_init(Init::HyperplaneConditioned { m0: levels.start, burn_in: cfg.burn_in });
        log::info!("simulating N = {n}: {} transitions at dt = {}", cfg.transitions, cfg.dt);
        let estimate = estimate_transition_time(&sim, cfg.transitions)?;
        let deterministic = if cfg.deterministic_init {
            let det = base.with_init(Init::Deterministic { m0: levels.start });
            Some(tag(ComputationPath::MonteCarlo, estimate_transition_time(&det, cfg.transitions)?))
        } else {
            None
        };
        let dt_check = if cfg.dt_check {
            let fine_cfg = sim.refined()?;
            let fine = estimate_transition_time(&fine_cfg, cfg.transitions)?;
            let shift = fine.mean - estimate.mean;
            let ci_width = estimate.ci_width().max(fine.ci_width());
            let check = DtShift {
                fine_dt: fine_cfg.dt,
                fine_mean: fine.mean,
                fine_ci95: fine.ci95,
                shift,
                ci_width,
                discretization_bias: shift.abs() >= ci_width,
            };
            if check.discretization_bias {
                log::warn!("N = {n}: halving dt moved the mean by {shift:.4}, wider than the CI {ci_width:.4}");
            }
            Some(tag(ComputationPath::MonteCarlo, check))
        } else {
            None
        };
        let ratio = estimate.mean / predicted;
        out.push(SimulationSection {
            n,
            dt: cfg.dt,
            levels,
            predicted_time: predicted,
            estimate: tag(ComputationPath::MonteCarlo, estimate),
            deterministic,
            dt_check,
            ratio,
            within_factor_3: (1.0 / 3.0..=3.0).contains(&ratio),
        });
    }
    Ok(out)
}

fn run_cramer(cfg: &ExperimentConfig, spec: &PotentialSpec, t: &CramerTransform) -> Result<Tagged<CramerSection>> {
    let (reports, band) = local_cramer_scaling(spec, cfg.j, cfg.eps(), &cfg.cramer_n, &cfg.cramer_m)?;
    let decay = if cfg.charfn {
        cfg.cramer_m.iter().map(|&m| t.char_fn_decay(m, &cfg.charfn_xi)).collect::<Result<Vec<_>>>()?
    } else {
        vec![]
    };
    Ok(tag(ComputationPath::Quadrature, CramerSection { reports, band, decay }))
}

fn run_laplace(cfg: &ExperimentConfig, spec: &PotentialSpec) -> Result<Tagged<LaplaceSection>> {
    let tau = spec.effective(cfg.j)?.gradient(cfg.laplace_m);
    let mut jobs = vec![];
    for &k in &cfg.laplace_k {
        for parity in [Parity::Even, Parity::Odd] {
            for &eps in &cfg.laplace_eps {
                jobs.push((k, parity, eps));
            }
        }
    }
    let rows = jobs
        .into_par_iter()
        .map(|(k, parity, eps)| {
            let p = LaplaceProblem::new(spec, cfg.j, tau, eps)?;
            Ok(LaplaceRow { k, parity, eps, relative_error: relative_error(&p, k, parity, 1e-12)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(tag(ComputationPath::Quadrature, LaplaceSection { tau, rows }))
}

fn run_observables(cfg: &ExperimentConfig, spec: &PotentialSpec) -> Result<Tagged<ObservablesSection>> {
    let b = Expr::parse(&cfg.observable)?;
    let gaps = cfg
        .cramer_n
        .par_iter()
        .map(|&n| verify_equiv_observables(spec, cfg.j, cfg.eps(), n, |z| b.eval(z), cfg.observable_m))
        .collect::<Result<Vec<_>>>()?;
    let band = ScalingBand::new(cfg.cramer_n.clone(), gaps.iter().map(|g| g.gap).collect());
    Ok(tag(ComputationPath::Quadrature, ObservablesSection { observable: cfg.observable.clone(), gaps, band }))
}

fn timed<T>(timing: &mut Vec<(String, f64)>, stage: Stage, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    timing.push((stage.name().to_string(), start.elapsed().as_secs_f64()));
    out
}

/// Runs the enabled stages (and their dependencies) in dependency order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(ExperimentReport, Timing)> {
    cfg.validate()?;
    let start = Instant::now();
    let spec = cfg.potential_spec()?;
    let t = transform(cfg, &spec).map_err(|e| KramersError::ConfigInvalid(e.to_string()))?;
    let stages = close_stages(&cfg.stages);
    let on = |s: Stage| stages.contains(&s);
    let mut report = ExperimentReport::empty(cfg.clone());
    report.stages = stages.clone();

    type Chain = (
        Option<StageOutcome<Tagged<LandscapeSection>>>,
        Option<StageOutcome<Vec<PredictionSection>>>,
        Option<StageOutcome<Vec<SimulationSection>>>,
        Vec<(String, f64)>,
    );
    let chain = || -> Chain {
        let mut timing = vec![];
        if !on(Stage::Landscape) {
            return (None, None, None, timing);
        }
        let land = timed(&mut timing, Stage::Landscape, || {
            StageOutcome::from_result(Stage::Landscape, run_landscape(&t, &spec, cfg.j))
        });
        let summary = land.ok().map(|l| l.values.summary.values);
        let predict = on(Stage::Predict).then(|| {
            timed(&mut timing, Stage::Predict, || {
                let r = summary.ok_or_else(|| dependency_failed(Stage::Landscape)).and_then(|s| run_predict(cfg, &t, &s));
                StageOutcome::from_result(Stage::Predict, r)
            })
        });
        let simulate = on(Stage::Simulate).then(|| {
            timed(&mut timing, Stage::Simulate, || {
                let r = match (summary, predict.as_ref().and_then(|p| p.ok())) {
                    (Some(s), Some(p)) => run_simulation(cfg, &spec, &s, p),
                    (None, _) => Err(dependency_failed(Stage::Landscape)),
                    (_, None) => Err(dependency_failed(Stage::Predict)),
                };
                StageOutcome::from_result(Stage::Simulate, r)
            })
        });
        (Some(land), predict, simulate, timing)
    };
    let verify = || {
        let mut timing = vec![];
        let cramer = on(Stage::VerifyCramer).then(|| {
            timed(&mut timing, Stage::VerifyCramer, || {
                StageOutcome::from_result(Stage::VerifyCramer, run_cramer(cfg, &spec, &t))
            })
        });
        let laplace = on(Stage::VerifyLaplace).then(|| {
            timed(&mut timing, Stage::VerifyLaplace, || {
                StageOutcome::from_result(Stage::VerifyLaplace, run_laplace(cfg, &spec))
            })
        });
        let observables = on(Stage::VerifyObservables).then(|| {
            timed(&mut timing, Stage::VerifyObservables, || {
                StageOutcome::from_result(Stage::VerifyObservables, run_observables(cfg, &spec))
            })
        });
        (cramer, laplace, observables, timing)
    };
    let ((land, predict, simulate, mut timing), (cramer, laplace, observables, t2)) = rayon::join(chain, verify);
    timing.extend(t2);
    timing.sort_by_key(|(name, _)| stages.iter().position(|s| s.name() == name));
    report.landscape = land;
    report.predict = predict;
    report.simulate = simulate;
    report.verify_cramer = cramer;
    report.verify_laplace = laplace;
    report.verify_observables = observables;
    Ok((report, Timing { stages: timing, total: start.elapsed().as_secs_f64() }))
}

/// Writes `report.json`, `timing.json`, per-N transition samples and the renderings.
pub fn write_outputs(report: &ExperimentReport, timing: Option<&Timing>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), report.to_json()?)?;
    if let Some(t) = timing {
        let text = serde_json::to_string_pretty(t).map_err(|e| KramersError::IoFailure(e.to_string()))?;
        fs::write(dir.join("timing.json"), text)?;
    }
    if report.config.csv {
        if let Some(sims) = report.simulate.as_ref().and_then(|s| s.ok()) {
            for sim in sims {
                let mut csv = String::from(TRANSITIONS_HEADER);
                for s in &sim.estimate.values.samples {
                    let _ = writeln!(csv, "{},{},{:.9e},{}", s.seed, s.steps, s.hitting_time, s.crossed);
                }
                fs::write(dir.join(format!("transitions_n{}.csv", sim.n)), csv)?;
            }
        }
    }
    render_report(report, dir)
}

pub const TRANSITIONS_HEADER: &str = "seed,steps,hitting_time,crossed\n";
pub const LANDSCAPE_HEADER: &str = "m,hbar\n";
pub const PREDICTIONS_HEADER: &str =
    "n,log_time,time,log_capacity_upper,log_capacity_lower,log_equilibrium_mass,geometry_degenerate\n";
pub const MONTE_CARLO_HEADER: &str = "n,dt,start,target,predicted_time,mc_mean,mc_std,ci_low,ci_high,ratio,within_factor_3,timeouts,deterministic_mean,fine_mean,dt_shift,ci_width,discretization_bias\n";
pub const VERIFICATION_HEADER: &str = "check,n,m,value,reference,deviation\n";
pub const LAPLACE_HEADER: &str = "k,parity,eps,relative_error\n";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.9e}")).unwrap_or_default()
}

/// CSV tables and SVG plots for a report; sections that are absent yield header-only tables.
pub fn render_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let landscape = report.landscape.as_ref().and_then(|s| s.ok());
    let mut curve_csv = String::from(LANDSCAPE_HEADER);
    if let Some(l) = landscape {
        for (m, h) in &l.values.curve.values {
            let _ = writeln!(curve_csv, "{m:.6},{h:.9e}");
        }
    }

    let mut pred_csv = String::from(PREDICTIONS_HEADER);
    for p in report.predict.as_ref().and_then(|s| s.ok()).into_iter().flatten() {
        let k = &p.prediction.values;
        let _ = writeln!(
            pred_csv,
            "{},{:.9e},{},{:.9e},{:.9e},{:.9e},{}",
            p.n,
            k.time.log,
            opt(k.time.value),
            k.capacity_upper.value.log,
            k.capacity_lower.value.log,
            k.equilibrium_mass.log,
            k.geometry.is_none()
        );
    }

    let mut mc_csv = String::from(MONTE_CARLO_HEADER);
    for s in report.simulate.as_ref().and_then(|s| s.ok()).into_iter().flatten() {
        let e = &s.estimate.values;
        let dtc = s.dt_check.as_ref().map(|d| &d.values);
        let _ = writeln!(
            mc_csv,
            "{},{},{:.6},{:.6},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.6},{},{},{},{},{},{},{}",
            s.n,
            s.dt,
            s.levels.start,
            s.levels.target,
            s.predicted_time,
            e.mean,
            e.std_dev,
            e.ci95.0,
            e.ci95.1,
            s.ratio,
            s.within_factor_3,
            e.timeouts,
            opt(s.deterministic.as_ref().map(|d| d.values.mean)),
            opt(dtc.map(|d| d.fine_mean)),
            opt(dtc.map(|d| d.shift)),
            opt(dtc.map(|d| d.ci_width)),
            dtc.map(|d| d.discretization_bias.to_string()).unwrap_or_default(),
        );
    }

    let mut ver_csv = String::from(VERIFICATION_HEADER);
    if let Some(c) = report.verify_cramer.as_ref().and_then(|s| s.ok()) {
        for r in &c.values.reports {
            for p in &r.points {
                let _ = writeln!(ver_csv, "local_cramer,{},{},{:.12e},1,{:.6e}", r.n, p.m, p.ratio, p.deviation);
            }
        }
    }
    if let Some(o) = report.verify_observables.as_ref().and_then(|s| s.ok()) {
        for g in &o.values.gaps {
            let _ = writeln!(ver_csv, "observable,{},{},{:.12e},{:.12e},{:.6e}", g.n, g.m, g.fiber, g.tilted, g.gap);
        }
    }

    let laplace = report.verify_laplace.as_ref().and_then(|s| s.ok());
    let mut lap_csv = String::from(LAPLACE_HEADER);
    if let Some(l) = laplace {
        for r in &l.values.rows {
            let parity = match r.parity {
                Parity::Even => "even",
                Parity::Odd => "odd",
            };
            let _ = writeln!(lap_csv, "{},{parity},{},{:.6e}", r.k, r.eps, r.relative_error);
        }
    }

    if report.config.csv {
        fs::write(dir.join("landscape.csv"), curve_csv)?;
        fs::write(dir.join("predictions.csv"), pred_csv)?;
        fs::write(dir.join("monte_carlo.csv"), mc_csv)?;
        fs::write(dir.join("verification.csv"), ver_csv)?;
        fs::write(dir.join("laplace.csv"), lap_csv)?;
    }
    if report.config.svg {
        if let Some(l) = landscape {
            let pts = &l.values.curve.values;
            fs::write(dir.join("landscape.svg"), svg_plot("macroscopic Hamiltonian", "m", "H(m)", &[("H", pts.clone())]))?;
        }
        if let Some(l) = laplace {
            let mut series: Vec<(String, Vec<(f64, f64)>)> = vec![];
            for r in l.values.rows.iter().filter(|r| r.relative_error > 0.0) {
                let name = format!("k={} {:?}", r.k, r.parity).to_lowercase();
                let pt = (r.eps.log10(), r.relative_error.log10());
                match series.iter_mut().find(|(n, _)| *n == name) {
                    Some((_, v)) => v.push(pt),
                    None => series.push((name, vec![pt])),
                }
            }
            for (_, v) in series.iter_mut() {
                v.sort_by(|a, b| a.0.total_cmp(&b.0));
            }
            let refs: Vec<(&str, Vec<(f64, f64)>)> = series.iter().map(|(n, v)| (n.as_str(), v.clone())).collect();
            fs::write(
                dir.join("laplace.svg"),
                svg_plot("Laplace relative error", "log10 eps", "log10 error", &refs),
            )?;
        }
    }
    Ok(())
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Line plot of the given series with axis labels and tick values.
pub fn svg_plot(title: &str, xlabel: &str, ylabel: &str, series: &[(&str, Vec<(f64, f64)>)]) -> String {
    let (w, h, pad) = (640.0, 420.0, 60.0);
    let all = series.iter().flat_map(|(_, v)| v.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all.filter(|p| p.0.is_finite() && p.1.is_finite()) {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !(x1 > x0) {
        (x0, x1) = (x0 - 1.0, x0 + 1.0);
    }
    if !(y1 > y0) {
        (y0, y1) = (y0 - 1.0, y0 + 1.0);
    }
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{title}</text>"#, w / 2.0);
    let _ = writeln!(
        s,
        r#"<path d="M{pad},{} H{} M{pad},{} V{}" stroke="black" fill="none"/>"#,
        h - pad,
        w - pad,
        h - pad,
        pad
    );
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{fx:.3}</text>"#, sx(fx), h - pad + 18.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{fy:.3}</text>"#, pad - 6.0, sy(fy) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#, w / 2.0, h - 16.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{ylabel}</text>"#,
        h / 2.0,
        h / 2.0
    );
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = pts
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" stroke="{color}" fill="none" stroke-width="1.5"/>"#, path.join(" "));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{name}</text>"#,
            w - pad - 90.0,
            pad + 16.0 * k as f64
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Interior local minima and maxima of a sampled curve.
pub fn count_extrema(ys: &[f64]) -> (usize, usize) {
    let (mut minima, mut maxima) = (0, 0);
    for w in ys.windows(3) {
        if w[1] < w[0] && w[1] < w[2] {
            minima += 1;
        }
        if w[1] > w[0] && w[1] > w[2] {
            maxima += 1;
        }
    }
    (minima, maxima)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extrema_of_a_double_well() {
        let ys: Vec<f64> = (0..41).map(|i| -2.0 + 0.1 * i as f64).map(|x: f64| x.powi(4) / 4.0 - x * x / 2.0).collect();
        assert_eq!(count_extrema(&ys), (2, 1));
    }

    #[test]
    fn svg_is_well_formed() {
        let s = svg_plot("t", "x", "y", &[("a", vec![(0.0, 1.0), (1.0, 2.0)])]);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("<polyline"));
    }
}
