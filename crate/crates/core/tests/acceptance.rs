//! One pass/fail line per acceptance criterion. Run with `--nocapture` to see the table.

use std::time::{Duration, Instant};

use kramers_core::config::ExperimentConfig;
use kramers_core::cramer::gaussian_phi;
use kramers_core::exactsmall::{local_cramer_scaling, verify_equiv_observables, verify_local_cramer, ScalingBand};
use kramers_core::experiment::run_experiment;
use kramers_core::kramers::{
    capacity_upper, dirichlet_capacity, ek_prediction, rough_bounds, transition_levels, LevelPolicy,
};
use kramers_core::landscape::{eta, find_critical_points};
use kramers_core::laplace::{relative_error, LaplaceProblem, Parity};
use kramers_core::simulate::{
    default_max_steps, dt_halving_check, estimate_transition_time, ks_two_sample, sample_hyperplane, Init,
    Monitor, SimulationConfig,
};
use kramers_core::{CramerTransform, KramersError, PotentialSpec};

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
    budget: Duration,
}

fn criterion(id: u32, name: &'static str, budget_secs: u64, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (pass, detail) = f();
    let elapsed = start.elapsed();
    let budget = Duration::from_secs(budget_secs);
    Outcome { id, name, pass: pass && elapsed <= budget, detail, elapsed, budget }
}

fn quartic() -> PotentialSpec {
    PotentialSpec::quartic_double_well()
}

fn gaussian_suite() -> (bool, String) {
    let mut worst_phi = 0.0_f64;
    for (alpha, eps) in [(1.0, 0.5), (2.5, 0.1), (0.7, 1.0)] {
        let t = CramerTransform::new(&PotentialSpec::quadratic(alpha).unwrap(), 1.0, eps).unwrap();
        for i in 0..=40 {
            let m = -2.0 + 0.1 * i as f64;
            let phi = t.cramer_transform(m).unwrap().phi;
            worst_phi = worst_phi.max((phi - gaussian_phi(alpha, eps, m)).abs());
        }
    }
    let spec = PotentialSpec::quadratic(1.5).unwrap();
    let mut worst_local = 0.0_f64;
    for n in 1..=4 {
        let grid: &[f64] = if n < 4 { &[-1.0, 0.0, 0.6] } else { &[0.6] };
        let r = verify_local_cramer(&spec, 1.0, 0.3, n, grid).unwrap();
        worst_local = worst_local.max(r.max_deviation);
    }
    let mut worst_laplace = 0.0_f64;
    for eps in [0.1, 0.01] {
        let p = LaplaceProblem::new(&PotentialSpec::quadratic(1.0).unwrap(), 1.0, 0.0, eps).unwrap();
        worst_laplace = worst_laplace.max(relative_error(&p, 0, Parity::Even, 1e-12).unwrap());
    }
    let pass = worst_phi <= 1e-9 && worst_local <= 1e-8 && worst_laplace <= 1e-10;
    (pass, format!("phi {worst_phi:.1e} <= 1e-9, local Cramér {worst_local:.1e} <= 1e-8, Laplace k=0 {worst_laplace:.1e} <= 1e-10"))
}

fn duality_suite() -> (bool, String) {
    let (mut dual, mut comp, mut third) = (0.0_f64, 0.0_f64, 0.0_f64);
    for eps in [0.5, 0.1, 0.05] {
        let t = CramerTransform::new(&quartic(), 2.0, eps).unwrap();
        for i in 0..=16 {
            let m = -2.0 + 0.25 * i as f64;
            let p = t.cramer_transform(m).unwrap();
            dual = dual.max((t.cgf(p.sigma, 1).unwrap() - m).abs());
            comp = comp.max((p.d2 * t.cgf(p.sigma, 2).unwrap() - 1.0).abs());
            if i != 8 {
                let h = 1e-3;
                let fd = (t.cramer_transform(m + h).unwrap().d2 - t.cramer_transform(m - h).unwrap().d2) / (2.0 * h);
                third = third.max(((fd - p.d3) / p.d3).abs());
            }
        }
    }
    let pass = dual <= 1e-7 && comp <= 1e-6 && third <= 1e-4;
    (pass, format!("duality {dual:.1e} <= 1e-7, composition {comp:.1e} <= 1e-6, phi''' vs FD {third:.1e} <= 1e-4"))
}

fn laplace_decay() -> (bool, String) {
    let eps_grid = [0.1, 0.05, 0.025, 0.0125];
    let bound = |e: f64| (e * (1.0 / e).ln().powi(3)).sqrt();
    let tau = quartic().effective(2.0).unwrap().gradient(1.1);
    let mut pass = true;
    let mut worst_margin = 0.0_f64;
    for k in 0..=2 {
        for parity in [Parity::Even, Parity::Odd] {
            let errs: Vec<f64> = eps_grid
                .iter()
                .map(|&e| relative_error(&LaplaceProblem::new(&quartic(), 2.0, tau, e).unwrap(), k, parity, 1e-12).unwrap())
                .collect();
            let c = errs[0] / bound(eps_grid[0]);
            let monotone = errs.windows(2).all(|w| w[1] <= w[0]);
            let bounded = errs.iter().zip(eps_grid).all(|(r, e)| *r <= c * bound(e) * (1.0 + 1e-12));
            worst_margin = worst_margin.max(errs.iter().zip(eps_grid).map(|(r, e)| r / (c * bound(e))).fold(0.0, f64::max));
            pass &= monotone && bounded;
        }
    }
    (pass, format!("k in 0..=2, both parities: non-increasing, max r/(C sqrt(eps log^3)) = {worst_margin:.3} <= 1"))
}

fn critical_points() -> (bool, String) {
    let eps_grid = [0.2, 0.1, 0.05, 0.025];
    let mut devs = vec![];
    let mut signs = true;
    for eps in eps_grid {
        let s = find_critical_points(&CramerTransform::new(&quartic(), 2.0, eps).unwrap()).unwrap();
        signs &= s.curvature_zero < 0.0 && s.curvature_minus > 0.0 && s.curvature_plus > 0.0;
        devs.push((s.m_star - 1.0).abs());
    }
    let c = devs[0] / eps_grid[0];
    let bounded = devs.iter().zip(eps_grid).all(|(d, e)| *d <= c * e * (1.0 + 1e-12));
    let decreasing = devs.windows(2).all(|w| w[1] < w[0]);
    (
        bounded && decreasing && signs,
        format!("|m*-1| = {devs:.4?}, C = {c:.4}, strictly decreasing {decreasing}, curvature signs {signs}"),
    )
}

fn band_line(b: &ScalingBand) -> String {
    format!("dev*sqrt(N) = {:.4?}, spread {:.3} <= 2", b.scaled, b.spread)
}

fn local_cramer() -> (bool, String) {
    let (_, band) = local_cramer_scaling(&quartic(), 2.0, 0.5, &[2, 3, 4], &[0.0, 0.5, 1.0]).unwrap();
    (band.within_band, band_line(&band))
}

fn observables() -> (bool, String) {
    let gaps: Vec<f64> = [2, 3, 4]
        .iter()
        .map(|&n| verify_equiv_observables(&quartic(), 2.0, 0.5, n, |z| z * z, 0.5).unwrap().gap)
        .collect();
    let band = ScalingBand::new(vec![2, 3, 4], gaps);
    (band.within_band, band_line(&band))
}

fn monte_carlo() -> (bool, String) {
    let dt = 5e-4;
    let n_transitions = 2000;
    let mut pass = true;
    let mut parts = vec![];
    for (n, eps, seed) in [(4usize, 0.5, 11u64), (4, 0.4, 12), (8, 0.5, 13)] {
        let t = CramerTransform::new(&quartic(), 2.0, eps).unwrap();
        let s = find_critical_points(&t).unwrap();
        let predicted = ek_prediction(&s, n).unwrap().time.value.unwrap();
        let levels = transition_levels(&s, n, LevelPolicy::WellBottoms).unwrap();
        let cfg = SimulationConfig::new(&quartic(), n, 2.0, eps, dt, levels.target)
            .unwrap()
            .with_seed(seed)
            .with_noise_substeps(2)
            .with_init(Init::HyperplaneConditioned { m0: levels.start, burn_in: 2000 })
            .with_max_steps(default_max_steps(predicted, dt, 50_000_000));
        let r = dt_halving_check(&cfg, n_transitions).unwrap();
        let ratio = r.coarse.mean / predicted;
        let ok = (1.0 / 3.0..=3.0).contains(&ratio)
            && r.coarse.crossed >= n_transitions
            && r.fine.crossed >= n_transitions
            && !r.discretization_bias;
        pass &= ok;
        parts.push(format!(
            "(N={n}, eps={eps}) MC {:.2} vs EK {predicted:.2} ratio {ratio:.3}, dt-shift {:.3} < CI {:.3}",
            r.coarse.mean, r.shift, r.ci_width
        ));
    }
    (pass, parts.join("; "))
}

fn capacity_n1() -> (bool, String) {
    let t = CramerTransform::new(&quartic(), 2.0, 0.05).unwrap();
    let s = find_critical_points(&t).unwrap();
    let e = eta(&s, 1);
    let d = dirichlet_capacity(&t, &s, 1, (-s.m_star + e, s.m_star - e)).unwrap();
    let ratio = (d.value.log - capacity_upper(&s, 1).value.log).exp();
    ((ratio - 1.0).abs() <= 0.10, format!("Dirichlet/upper = {ratio:.4}, |ratio - 1| <= 0.10"))
}

fn rough() -> (bool, String) {
    let psi = PotentialSpec::general("z^4/4", 0.25, 1.0).unwrap();
    let t = CramerTransform::high_temperature(&psi, 2.0).unwrap();
    let s = find_critical_points(&t).unwrap();
    let b = rough_bounds(&s, &t, 10, 1.0).unwrap();
    let structure = b.lower.log < b.upper.log
        && b.a > 0.0
        && b.a.is_finite()
        && ((b.upper.log - b.lower.log) - b.a.ln_1p()).abs() < 1e-12;
    let quad = CramerTransform::high_temperature(&PotentialSpec::quadratic(5.0).unwrap(), 2.0).unwrap();
    let no_well = find_critical_points(&quad) == Err(KramersError::NoDoubleWell);
    (
        structure && no_well,
        format!("a = {:.4}, log upper - log lower = {:.4}, quadratic raises NoDoubleWell: {no_well}", b.a, b.upper.log - b.lower.log),
    )
}

fn determinism() -> (bool, String) {
    let toml = "j = 2.0\neps = 0.5\nn = [2]\ntransitions = 50\ndt = 1e-3\nseed = 5\nstages = [\"simulate\"]\ndt_check = false\n";
    let cfg = ExperimentConfig::from_toml(toml).unwrap();
    let a = run_experiment(&cfg).unwrap().0.to_json().unwrap();
    let b = run_experiment(&cfg).unwrap().0.to_json().unwrap();
    let identical = a == b;

    let sampler = SimulationConfig::new(&quartic(), 4, 2.0, 0.5, 1e-3, 1.0).unwrap().with_seed(3);
    let states = sample_hyperplane(&sampler, -0.4, 1, 100_000, 1).unwrap();
    let drift = states.iter().map(|x| (x.iter().sum::<f64>() / 4.0 + 0.4).abs()).fold(0.0, f64::max);

    let single = |n: usize, seed: u64| {
        let cfg = SimulationConfig::new(&quartic(), n, 0.0, 0.5, 1e-3, 0.9)
            .unwrap()
            .with_seed(seed)
            .with_monitor(Monitor::Coordinate(0))
            .with_init(Init::Deterministic { m0: -1.0 });
        let est = estimate_transition_time(&cfg, 500).unwrap();
        est.samples.iter().map(|s| s.hitting_time).collect::<Vec<_>>()
    };
    let ks = ks_two_sample(&single(1, 21), &single(3, 22)).unwrap();
    (
        identical && drift <= 1e-12 && ks.passes,
        format!(
            "reports identical {identical}, max |Px - m| = {drift:.1e} <= 1e-12, KS D = {:.4} < {:.4}",
            ks.statistic, ks.critical
        ),
    )
}

#[test]
fn acceptance() {
    let outcomes = vec![
        criterion(1, "Gaussian exact suite", 1, gaussian_suite),
        criterion(2, "Legendre duality suite", 5, duality_suite),
        criterion(3, "Laplace error decay", 30, laplace_decay),
        criterion(4, "critical-point asymptotics", 30, critical_points),
        criterion(5, "local Cramér sqrt(N) scaling", 300, local_cramer),
        criterion(6, "equivalence of observables", 300, observables),
        criterion(7, "Monte Carlo vs Eyring–Kramers", 1800, monte_carlo),
        criterion(8, "capacity cross-check at N=1", 10, capacity_n1),
        criterion(9, "high-temperature rough bounds", 60, rough),
        criterion(10, "determinism and conservation", 60, determinism),
    ];
    for o in &outcomes {
        println!(
            "[{}] {:>2}. {} ({:.2}s / {}s): {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.id,
            o.name,
            o.elapsed.as_secs_f64(),
            o.budget.as_secs(),
            o.detail
        );
    }
    let failed: Vec<u32> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
