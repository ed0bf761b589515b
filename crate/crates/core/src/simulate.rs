//! Euler–Maruyama simulation of the mean-field particle system
//! `dx_i = (-psi_J'(x_i) + J Px) dt + sqrt(2 eps) dB_i`.
//!
//! Every trajectory owns a ChaCha8 generator seeded from `(master seed, index)`;
//! stream 0 drives the hyperplane burn-in and stream 1 the dynamics, so a
//! trajectory is a pure function of the config and its index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KramersError, Result};
use crate::potentials::PotentialSpec;

pub const DEFAULT_STATE_BOUND: f64 = 3.0;
pub const DEFAULT_BLOWUP_BOUND: f64 = 50.0;
/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;
/// Asymptotic Kolmogorov–Smirnov coefficient at the 1% level.
pub const KS_C_1PCT: f64 = 1.628;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Init {
    HyperplaneConditioned { m0: f64, burn_in: u64 },
    Deterministic { m0: f64 },
}

impl Init {
    pub fn m0(&self) -> f64 {
        match *self {
            Init::HyperplaneConditioned { m0, .. } | Init::Deterministic { m0 } => m0,
        }
    }
}

/// The scalar whose first passage above `m_target` ends a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Monitor {
    Mean,
    Coordinate(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub n: usize,
    pub j: f64,
    pub eps: f64,
    /// Effective single-site potential `psi_J`.
    pub potential: PotentialSpec,
    pub dt: f64,
    pub max_steps: u64,
    pub seed: u64,
    pub init: Init,
    pub m_target: f64,
    pub monitor: Monitor,
    /// Radius on which the stability guard bounds the drift's Lipschitz constant.
    pub state_bound: f64,
    pub blowup_bound: f64,
    /// Standard normals summed (and rescaled) into each step's increment.
    pub noise_substeps: u32,
}

impl SimulationConfig {
    pub fn new(spec: &PotentialSpec, n: usize, j: f64, eps: f64, dt: f64, m_target: f64) -> Result<Self> {
        let cfg = SimulationConfig {
            n,
            j,
            eps,
            potential: spec.effective(j)?,
            dt,
            max_steps: 1_000_000,
            seed: 0,
            init: Init::Deterministic { m0: -1.0 },
            m_target,
            monitor: Monitor::Mean,
            state_bound: DEFAULT_STATE_BOUND,
            blowup_bound: DEFAULT_BLOWUP_BOUND,
            noise_substeps: 1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn with_max_steps(mut self, max_steps: u64) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn with_monitor(mut self, monitor: Monitor) -> Self {
        self.monitor = monitor;
        self
    }

    pub fn with_noise_substeps(mut self, s: u32) -> Self {
        self.noise_substeps = s;
        self
    }

    /// Largest admissible step: `0.1 / (L + J)` with `L` bounding `|psi_J''|` on the state bound.
    pub fn max_stable_dt(&self) -> f64 {
        let b = self.state_bound;
        let lip = if self.potential.is_quartic() {
            3.0 * b * b
        } else {
            (0..=200)
                .map(|i| {
                    let z = -b + 2.0 * b * i as f64 / 200.0;
                    self.potential.derivatives(z).map(|d| d[2].abs()).unwrap_or(f64::INFINITY)
                })
                .fold(0.0, f64::max)
        };
        0.1 / (lip + self.j.abs())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(KramersError::InvalidInput(msg));
        if self.n == 0 {
            return bad("particle number must be at least 1".into());
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return bad(format!("temperature must be finite and non-negative, got {}", self.eps));
        }
        if !(self.j >= 0.0 && self.j.is_finite()) {
            return bad(format!("coupling must be finite and non-negative, got {}", self.j));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1".into());
        }
        if self.noise_substeps == 0 {
            return bad("noise_substeps must be at least 1".into());
        }
        if let Monitor::Coordinate(i) = self.monitor {
            if i >= self.n {
                return bad(format!("monitored coordinate {i} out of range for N = {}", self.n));
            }
        }
        if let Init::HyperplaneConditioned { burn_in, .. } = self.init {
            if burn_in == 0 {
                return bad("burn_in must be at least 1".into());
            }
        }
        let limit = self.max_stable_dt();
        if self.dt > limit {
            return bad(format!("dt = {} exceeds the stability guard {limit:.3e}", self.dt));
        }
        Ok(())
    }

    /// The same Brownian path at half the step: `dt/2` with half the noise substeps.
    pub fn refined(&self) -> Result<Self> {
        if self.noise_substeps % 2 != 0 {
            return Err(KramersError::InvalidInput("refinement needs an even number of noise substeps".into()));
        }
        let mut c = self.clone();
        c.dt /= 2.0;
        c.noise_substeps /= 2;
        c.max_steps = c.max_steps.saturating_mul(2);
        if let Init::HyperplaneConditioned { m0, burn_in } = c.init {
            c.init = Init::HyperplaneConditioned { m0, burn_in: burn_in * 2 };
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionSample {
    pub index: u64,
    pub seed: u64,
    pub steps: u64,
    pub hitting_time: f64,
    pub crossed: bool,
}

/// `(1/eps) sum psi_J(x_i) - J/(2 N eps) (sum x_i)^2`.
pub fn microscopic_hamiltonian(x: &[f64], j: f64, eps: f64, spec: &PotentialSpec) -> Result<f64> {
    check_state(x, eps)?;
    let psi = spec.effective(j)?;
    let n = x.len() as f64;
    let sum: f64 = x.iter().sum();
    let h = (x.iter().map(|&z| psi.value(z)).sum::<f64>() - j * sum * sum / (2.0 * n)) / eps;
    if !h.is_finite() {
        return Err(KramersError::NonFinite("Hamiltonian".into()));
    }
    Ok(h)
}

pub fn hamiltonian_gradient(x: &[f64], j: f64, eps: f64, spec: &PotentialSpec) -> Result<Vec<f64>> {
    check_state(x, eps)?;
    let psi = spec.effective(j)?;
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let g: Vec<f64> = x.iter().map(|&z| (psi.gradient(z) - j * mean) / eps).collect();
    if g.iter().any(|v| !v.is_finite()) {
        return Err(KramersError::NonFinite("Hamiltonian gradient".into()));
    }
    Ok(g)
}

fn check_state(x: &[f64], eps: f64) -> Result<()> {
    if x.is_empty() {
        return Err(KramersError::InvalidInput("empty state".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(KramersError::NonFinite("state vector".into()));
    }
    if !(eps > 0.0) {
        return Err(KramersError::InvalidInput(format!("Hamiltonian needs eps > 0, got {eps}")));
    }
    Ok(())
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trajectory `index` under `master`.
pub fn trajectory_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct Stepper<'a> {
    cfg: &'a SimulationConfig,
    noise_scale: f64,
    drift: Vec<f64>,
    noise: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(cfg: &'a SimulationConfig) -> Self {
        let s = cfg.noise_substeps as f64;
        Stepper {
            cfg,
            noise_scale: (2.0 * cfg.eps * cfg.dt / s).sqrt(),
            drift: vec![0.0; cfg.n],
            noise: vec![0.0; cfg.n],
        }
    }

    fn draw(&mut self, rng: &mut ChaCha8Rng) {
        for v in self.noise.iter_mut() {
            let mut acc = 0.0;
            for _ in 0..self.cfg.noise_substeps {
                acc += rng.sample::<f64, _>(StandardNormal);
            }
            *v = acc * self.noise_scale;
        }
    }

    fn fill_drift(&mut self, x: &[f64]) {
        let j = self.cfg.j;
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        for (d, &z) in self.drift.iter_mut().zip(x) {
            *d = -self.cfg.potential.gradient(z) + j * mean;
        }
    }

    fn step(&mut self, x: &mut [f64], rng: &mut ChaCha8Rng) {
        self.fill_drift(x);
        self.draw(rng);
        let dt = self.cfg.dt;
        for ((xi, d), w) in x.iter_mut().zip(&self.drift).zip(&self.noise) {
            *xi += d * dt + w;
        }
    }

    /// One step of the dynamics projected onto the fiber `Px = m`.
    fn projected_step(&mut self, x: &mut [f64], m: f64, rng: &mut ChaCha8Rng) {
        self.fill_drift(x);
        self.draw(rng);
        let n = x.len() as f64;
        let dt = self.cfg.dt;
        let dbar = self.drift.iter().sum::<f64>() / n;
        let wbar = self.noise.iter().sum::<f64>() / n;
        for ((xi, d), w) in x.iter_mut().zip(&self.drift).zip(&self.noise) {
            *xi += (d - dbar) * dt + (w - wbar);
        }
        let shift = x.iter().sum::<f64>() / n - m;
        for xi in x.iter_mut() {
            *xi -= shift;
        }
    }

    fn guard(&self, x: &[f64], step: u64) -> Result<()> {
        for &v in x {
            if !v.is_finite() || v.abs() > self.cfg.blowup_bound {
                return Err(KramersError::NumericBlowup { step, value: v });
            }
        }
        Ok(())
    }
}

/// Applies `id - N P^t P`, removing the mean of `v`.
pub fn project_fluctuation(v: &[f64]) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - mean).collect()
}

fn burn_in(cfg: &SimulationConfig, m: f64, steps: u64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let mut x = vec![m; cfg.n];
    let mut stepper = Stepper::new(cfg);
    for k in 0..steps {
        stepper.projected_step(&mut x, m, rng);
        stepper.guard(&x, k + 1)?;
    }
    Ok(x)
}

/// Projected Langevin samples on `Px = m`: `n_samples` states recorded every `thin` steps after burn-in.
pub fn sample_hyperplane(
    cfg: &SimulationConfig,
    m: f64,
    burn_in_steps: u64,
    n_samples: usize,
    thin: u64,
) -> Result<Vec<Vec<f64>>> {
    if burn_in_steps == 0 || thin == 0 {
        return Err(KramersError::InvalidInput("burn_in and thin must be at least 1".into()));
    }
    let mut rng = rng_for(cfg.seed, 0);
    let mut x = burn_in(cfg, m, burn_in_steps, &mut rng)?;
    let mut stepper = Stepper::new(cfg);
    let mut out = Vec::with_capacity(n_samples);
    let mut k = burn_in_steps;
    for _ in 0..n_samples {
        for _ in 0..thin {
            stepper.projected_step(&mut x, m, &mut rng);
            k += 1;
            stepper.guard(&x, k)?;
        }
        out.push(x.clone());
    }
    Ok(out)
}

fn observe(monitor: Monitor, x: &[f64]) -> f64 {
    match monitor {
        Monitor::Mean => x.iter().sum::<f64>() / x.len() as f64,
        Monitor::Coordinate(i) => x[i],
    }
}

/// One seeded trajectory, run until the monitor reaches `m_target` or `max_steps` elapse.
pub fn simulate_trajectory(cfg: &SimulationConfig, index: u64) -> Result<TransitionSample> {
    let seed = trajectory_seed(cfg.seed, index);
    let mut x = match cfg.init {
        Init::Deterministic { m0 } => vec![m0; cfg.n],
        Init::HyperplaneConditioned { m0, burn_in: steps } => burn_in(cfg, m0, steps, &mut rng_for(seed, 0))?,
    };
    let mut rng = rng_for(seed, 1);
    let mut prev = observe(cfg.monitor, &x);
    let sample = |steps, hitting_time, crossed| TransitionSample { index, seed, steps, hitting_time, crossed };
    if prev >= cfg.m_target {
        return Ok(sample(0, 0.0, true));
    }
    let mut stepper = Stepper::new(cfg);
    for k in 1..=cfg.max_steps {
        stepper.step(&mut x, &mut rng);
        stepper.guard(&x, k)?;
        let cur = observe(cfg.monitor, &x);
        if cur >= cfg.m_target {
            let frac = (cfg.m_target - prev) / (cur - prev);
            return Ok(sample(k, (k as f64 - 1.0 + frac) * cfg.dt, true));
        }
        prev = cur;
    }
    Ok(sample(cfg.max_steps, cfg.max_steps as f64 * cfg.dt, false))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionEstimate {
    pub requested: usize,
    pub crossed: usize,
    pub timeouts: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub ci95: (f64, f64),
    /// Set when timed-out trajectories were dropped from the mean.
    pub timeout_warning: bool,
    /// Streamed to CSV rather than embedded in the JSON report.
    #[serde(skip, default)]
    pub samples: Vec<TransitionSample>,
}

impl TransitionEstimate {
    pub fn ci_width(&self) -> f64 {
        self.ci95.1 - self.ci95.0
    }

    pub fn standard_error(&self) -> f64 {
        self.std_dev / (self.crossed as f64).sqrt()
    }
}

/// Mean hitting time over `n_transitions` independent trajectories, merged in index order.
pub fn estimate_transition_time(cfg: &SimulationConfig, n_transitions: usize) -> Result<TransitionEstimate> {
    if n_transitions == 0 {
        return Err(KramersError::InvalidBudget("need at least one transition".into()));
    }
    cfg.validate()?;
    let samples = (0..n_transitions as u64)
        .into_par_iter()
        .map(|i| simulate_trajectory(cfg, i))
        .collect::<Result<Vec<_>>>()?;
    summarize(samples)
}

pub fn summarize(samples: Vec<TransitionSample>) -> Result<TransitionEstimate> {
    let times: Vec<f64> = samples.iter().filter(|s| s.crossed).map(|s| s.hitting_time).collect();
    let requested = samples.len();
    let crossed = times.len();
    if crossed == 0 {
        return Err(KramersError::AllTimedOut(requested));
    }
    let mean = times.iter().sum::<f64>() / crossed as f64;
    let std_dev = if crossed > 1 {
        (times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (crossed - 1) as f64).sqrt()
    } else {
        0.0
    };
    let half = Z95 * std_dev / (crossed as f64).sqrt();
    if crossed < requested {
        log::warn!("{} of {requested} trajectories timed out and were excluded", requested - crossed);
    }
    Ok(TransitionEstimate {
        requested,
        crossed,
        timeouts: requested - crossed,
        mean,
        std_dev,
        ci95: (mean - half, mean + half),
        timeout_warning: crossed < requested,
        samples,
    })
}

/// `10 * predicted / dt`, capped at `ceiling`.
pub fn default_max_steps(predicted_time: f64, dt: f64, ceiling: u64) -> u64 {
    let raw = 10.0 * predicted_time / dt;
    if raw.is_finite() && raw >= 1.0 {
        (raw.ceil() as u64).min(ceiling)
    } else {
        ceiling.max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtHalvingReport {
    pub coarse: TransitionEstimate,
    pub fine: TransitionEstimate,
    pub shift: f64,
    pub ci_width: f64,
    /// `|shift| >= ci_width`.
    pub discretization_bias: bool,
}

/// Runs `cfg` and its refinement on coupled Brownian paths.
pub fn dt_halving_check(cfg: &SimulationConfig, n_transitions: usize) -> Result<DtHalvingReport> {
    let fine_cfg = cfg.refined()?;
    let coarse = estimate_transition_time(cfg, n_transitions)?;
    let fine = estimate_transition_time(&fine_cfg, n_transitions)?;
    let shift = fine.mean - coarse.mean;
    let ci_width = coarse.ci_width().max(fine.ci_width());
    Ok(DtHalvingReport { discretization_bias: shift.abs() >= ci_width, shift, ci_width, coarse, fine })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub critical: f64,
    pub passes: bool,
}

/// Two-sample Kolmogorov–Smirnov test at the 1% level.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(KramersError::InvalidInput("KS test needs two non-empty samples".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut k, mut d) = (0, 0, 0.0_f64);
    while i < a.len() && k < b.len() {
        let t = a[i].min(b[k]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while k < b.len() && b[k] <= t {
            k += 1;
        }
        d = d.max((i as f64 / n - k as f64 / m).abs());
    }
    let critical = KS_C_1PCT * ((n + m) / (n * m)).sqrt();
    Ok(KsResult { statistic: d, critical, passes: d < critical })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quartic() -> PotentialSpec {
        PotentialSpec::quartic_double_well()
    }

    #[test]
    fn hamiltonian_examples() {
        let spec = quartic();
        assert_eq!(microscopic_hamiltonian(&[0.0; 5], 2.0, 1.0, &spec).unwrap(), 0.0);
        for n in [1, 3, 8] {
            let h = microscopic_hamiltonian(&vec![1.0; n], 2.0, 1.0, &spec).unwrap();
            assert!((h + 0.25 * n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn projector_kills_constants() {
        assert!(project_fluctuation(&[2.5; 4]).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn stability_guard_rejects_large_steps() {
        assert!(SimulationConfig::new(&quartic(), 4, 2.0, 0.5, 0.01, 0.7).is_err());
        assert!(SimulationConfig::new(&quartic(), 4, 2.0, 0.5, 1e-3, 0.7).is_ok());
    }

    #[test]
    fn zero_temperature_never_crosses() {
        let cfg = SimulationConfig::new(&quartic(), 3, 2.0, 0.0, 1e-3, 0.5)
            .unwrap()
            .with_max_steps(5000);
        let s = simulate_trajectory(&cfg, 0).unwrap();
        assert!(!s.crossed);
        assert_eq!(s.steps, 5000);
    }

    #[test]
    fn start_past_target_hits_at_zero() {
        let cfg = SimulationConfig::new(&quartic(), 3, 2.0, 0.5, 1e-3, 0.5)
            .unwrap()
            .with_init(Init::Deterministic { m0: 0.5 });
        let s = simulate_trajectory(&cfg, 7).unwrap();
        assert!(s.crossed);
        assert_eq!((s.steps, s.hitting_time), (0, 0.0));
    }

    #[test]
    fn trajectories_are_reproducible() {
        let cfg = SimulationConfig::new(&quartic(), 2, 2.0, 0.5, 1e-3, 0.6)
            .unwrap()
            .with_seed(42)
            .with_init(Init::HyperplaneConditioned { m0: -0.6, burn_in: 200 });
        let a = simulate_trajectory(&cfg, 3).unwrap();
        let b = simulate_trajectory(&cfg, 3).unwrap();
        assert_eq!(a.hitting_time.to_bits(), b.hitting_time.to_bits());
        assert_ne!(a, simulate_trajectory(&cfg, 4).unwrap());
    }

    #[test]
    fn empty_budget_is_rejected() {
        let cfg = SimulationConfig::new(&quartic(), 2, 2.0, 0.5, 1e-3, 0.6).unwrap();
        assert!(matches!(estimate_transition_time(&cfg, 0), Err(KramersError::InvalidBudget(_))));
    }

    #[test]
    fn ks_identical_samples_pass() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let r = ks_two_sample(&a, &a).unwrap();
        assert_eq!(r.statistic, 0.0);
        let b: Vec<f64> = a.iter().map(|v| v + 50.0).collect();
        assert!((ks_two_sample(&a, &b).unwrap().statistic - 0.5).abs() < 1e-12);
    }

    #[test]
    fn max_steps_default_is_capped() {
        assert_eq!(default_max_steps(10.0, 1e-3, 1_000_000), 100_000);
        assert_eq!(default_max_steps(1e9, 1e-3, 1_000_000), 1_000_000);
    }
}
