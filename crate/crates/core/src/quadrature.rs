//! Adaptive 21-point Gauss–Kronrod quadrature for vector-valued integrands.
//!
//! Every integrand returns `[f64; K]`, so moments of the same weight are
//! integrated on one shared subdivision. Nested calls give tensorized rules
//! for low-dimensional integrals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{KramersError, Result};

const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.000000000000000000000000000000000,
];

const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077589610052716,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];

// Gauss weights for the nodes XGK[1], XGK[3], ..., XGK[9]; the centre is not a Gauss node.
const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

/// Stopping rule for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Tolerance { abs, rel, max_intervals: 2000 }
    }

    pub fn with_max_intervals(mut self, n: usize) -> Self {
        self.max_intervals = n;
        self
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::new(1e-13, 1e-12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<const K: usize> {
    pub value: [f64; K],
    pub error: f64,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment<const K: usize> {
    a: f64,
    b: f64,
    value: [f64; K],
    error: f64,
}

impl<const K: usize> PartialEq for Segment<K> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl<const K: usize> Eq for Segment<K> {}

impl<const K: usize> PartialOrd for Segment<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<const K: usize> Ord for Segment<K> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut e = err.abs();
    if res_asc != 0.0 && e != 0.0 {
        let scale = (200.0 * e / res_asc).powf(1.5);
        e = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        e = e.max(50.0 * f64::EPSILON * res_abs);
    }
    e
}

/// One application of the 21-point Kronrod rule with its embedded 10-point Gauss rule.
pub fn qk21<const K: usize, F>(f: &mut F, a: f64, b: f64) -> ([f64; K], f64)
where
    F: FnMut(f64) -> [f64; K],
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let abs_half = half.abs();

    let fc = f(center);
    let mut fv1 = [[0.0; K]; 10];
    let mut fv2 = [[0.0; K]; 10];
    let mut res_k = [0.0; K];
    let mut res_g = [0.0; K];
    let mut res_abs = [0.0; K];
    for c in 0..K {
        res_k[c] = fc[c] * WGK[10];
        res_abs[c] = fc[c].abs() * WGK[10];
    }
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        for c in 0..K {
            let s = f1[c] + f2[c];
            res_k[c] += WGK[j] * s;
            res_abs[c] += WGK[j] * (f1[c].abs() + f2[c].abs());
            if j % 2 == 1 {
                res_g[c] += WG[j / 2] * s;
            }
        }
        fv1[j] = f1;
        fv2[j] = f2;
    }

    let mut err = 0.0_f64;
    let mut out = [0.0; K];
    for c in 0..K {
        let mean = res_k[c] * 0.5;
        let mut asc = WGK[10] * (fc[c] - mean).abs();
        for j in 0..10 {
            asc += WGK[j] * ((fv1[j][c] - mean).abs() + (fv2[j][c] - mean).abs());
        }
        let e = rescale_error(
            (res_k[c] - res_g[c]) * half,
            res_abs[c] * abs_half,
            asc * abs_half,
        );
        err = err.max(e);
        out[c] = res_k[c] * half;
    }
    (out, err)
}

/// Adaptive integration of `f` over `[a, b]`.
pub fn integrate<const K: usize, F>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate<K>>
where
    F: FnMut(f64) -> [f64; K],
{
    integrate_with_breaks(f, &[a, b], tol)
}

/// Adaptive integration over `[breaks[0], breaks[last]]` with the given initial subdivision.
pub fn integrate_with_breaks<const K: usize, F>(
    mut f: F,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<Estimate<K>>
where
    F: FnMut(f64) -> [f64; K],
{
    if breaks.len() < 2 {
        return Err(KramersError::InvalidInput(
            "quadrature needs at least two break points".into(),
        ));
    }
    if breaks.iter().any(|x| !x.is_finite()) {
        return Err(KramersError::NonFinite("quadrature bounds".into()));
    }

    let mut heap = BinaryHeap::new();
    for w in breaks.windows(2) {
        if w[1] == w[0] {
            continue;
        }
        let (value, error) = qk21(&mut f, w[0], w[1]);
        heap.push(Segment { a: w[0], b: w[1], value, error });
    }
    if heap.is_empty() {
        return Ok(Estimate { value: [0.0; K], error: 0.0, intervals: 0 });
    }

    loop {
        let (total, err) = summarize(&heap);
        if total.iter().any(|v| !v.is_finite()) {
            return Err(KramersError::Overflow("non-finite quadrature sum".into()));
        }
        let scale = total.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let target = tol.abs.max(tol.rel * scale);
        if err <= target {
            return Ok(Estimate { value: total, error: err, intervals: heap.len() });
        }
        if heap.len() >= tol.max_intervals {
            return Err(KramersError::QuadratureFailure(format!(
                "error {err:e} above target {target:e} after {} intervals",
                heap.len()
            )));
        }
        let worst = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // The interval can no longer be split; accept what we have.
            heap.push(worst);
            let (total, err) = summarize(&heap);
            if err <= 1e3 * target {
                return Ok(Estimate { value: total, error: err, intervals: heap.len() });
            }
            return Err(KramersError::QuadratureFailure(format!(
                "interval [{}, {}] cannot be bisected further",
                worst.a, worst.b
            )));
        }
        let (v1, e1) = qk21(&mut f, worst.a, mid);
        let (v2, e2) = qk21(&mut f, mid, worst.b);
        heap.push(Segment { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: worst.b, value: v2, error: e2 });
    }
}

fn summarize<const K: usize>(heap: &BinaryHeap<Segment<K>>) -> ([f64; K], f64) {
    let mut total = [0.0; K];
    let mut err = 0.0;
    for s in heap.iter() {
        for c in 0..K {
            total[c] += s.value[c];
        }
        err += s.error;
    }
    (total, err)
}

/// Interval on which a log-density exceeds its maximum minus `margin`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Support {
    pub lo: f64,
    pub hi: f64,
    /// Largest log-density seen on the scan grid.
    pub peak: f64,
    /// Grid location of `peak`.
    pub argmax: f64,
}

/// Scan `log_density` on `n` equispaced points of `[lo, hi]` and return the
/// region where it lies within `margin` of the maximum, widened by one grid cell.
pub fn scan_support<F>(log_density: F, lo: f64, hi: f64, n: usize, margin: f64) -> Result<Support>
where
    F: Fn(f64) -> f64,
{
    let n = n.max(3);
    let h = (hi - lo) / (n - 1) as f64;
    let vals: Vec<f64> = (0..n).map(|i| log_density(lo + h * i as f64)).collect();
    let (mut imax, mut peak) = (0, f64::NEG_INFINITY);
    for (i, &v) in vals.iter().enumerate() {
        if v.is_nan() {
            return Err(KramersError::NonFinite(format!(
                "log-density at z = {}",
                lo + h * i as f64
            )));
        }
        if v > peak {
            peak = v;
            imax = i;
        }
    }
    if !peak.is_finite() {
        return Err(KramersError::Overflow("log-density has no finite maximum".into()));
    }
    let cut = peak - margin;
    let first = vals.iter().position(|&v| v > cut).unwrap_or(imax);
    let last = vals.iter().rposition(|&v| v > cut).unwrap_or(imax);
    Ok(Support {
        lo: lo + h * first.saturating_sub(1) as f64,
        hi: lo + h * (last + 1).min(n - 1) as f64,
        peak,
        argmax: lo + h * imax as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_weights_sum_to_two() {
        let s: f64 = 2.0 * WGK[..10].iter().sum::<f64>() + WGK[10];
        assert!((s - 2.0).abs() < 1e-15);
        let g: f64 = 2.0 * WG.iter().sum::<f64>();
        assert!((g - 2.0).abs() < 1e-15);
    }

    #[test]
    fn single_rule_is_exact_for_high_degree_polynomials() {
        for deg in 0..=31 {
            let (v, _) = qk21(&mut |x: f64| [x.powi(deg)], 0.0, 1.0);
            let exact = 1.0 / (deg as f64 + 1.0);
            assert!((v[0] - exact).abs() < 1e-14, "degree {deg}: {} vs {exact}", v[0]);
        }
    }

    #[test]
    fn gaussian_mass_and_moments() {
        let est = integrate(
            |x: f64| {
                let w = (-0.5 * x * x).exp();
                [w, x * x * w, x.powi(4) * w]
            },
            -40.0,
            40.0,
            Tolerance::new(1e-14, 1e-13),
        )
        .unwrap();
        let s = (2.0 * std::f64::consts::PI).sqrt();
        assert!((est.value[0] - s).abs() < 1e-12);
        assert!((est.value[1] - s).abs() < 1e-12);
        assert!((est.value[2] - 3.0 * s).abs() < 1e-11);
    }

    #[test]
    fn sharp_peak_is_resolved() {
        let eps = 1e-4;
        let est = integrate_with_breaks(
            |x: f64| [(-(x - 0.3) * (x - 0.3) / eps).exp()],
            &[-5.0, 0.3, 5.0],
            Tolerance::default(),
        )
        .unwrap();
        let exact = (std::f64::consts::PI * eps).sqrt();
        assert!((est.value[0] - exact).abs() / exact < 1e-11);
    }

    #[test]
    fn breaks_are_respected() {
        let est = integrate_with_breaks(|x: f64| [x.abs()], &[-1.0, 0.0, 2.0], Tolerance::default())
            .unwrap();
        assert!((est.value[0] - 2.5).abs() < 1e-14);
    }

    #[test]
    fn support_scan_brackets_peak() {
        let s = scan_support(|z| -(z - 1.0) * (z - 1.0) / 0.01, -5.0, 5.0, 512, 50.0).unwrap();
        assert!(s.lo < 1.0 - (0.5f64).sqrt() && s.hi > 1.0 + (0.5f64).sqrt());
        assert!((s.argmax - 1.0).abs() < 0.02);
    }
}
