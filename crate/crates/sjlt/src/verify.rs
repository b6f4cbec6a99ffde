//! Claim-checking harness: exact enumerations and fixed-seed Monte Carlo
//! estimators for the concentration bounds the planner relies on.
//!
//! Exact checks (negative correlation, seed-space enumeration) compare with
//! integer arithmetic and report `stderr = 0`. Monte Carlo checks accept an
//! observation when it lies within `claimed_bound + 4 * stderr`; with fixed
//! seeds the whole suite is deterministic, and the 4-sigma margin keeps the
//! false-alarm rate around 6e-5 per check if seeds change.

use crate::kwise;
use crate::randbits::{BitSource, BitStream};
use crate::rowsampler;
use crate::transform::{self, EmbeddingPlan, PlanMode};
use crate::wht;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use std::f64::consts::{E, PI};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("enumeration too large: {0}")]
    EnumerationTooLarge(String),
    #[error(transparent)]
    Plan(#[from] transform::PlanError),
    #[error(transparent)]
    Build(#[from] transform::BuildError),
    #[error(transparent)]
    Transform(#[from] transform::TransformError),
    #[error(transparent)]
    Sample(#[from] rowsampler::SampleError),
    #[error(transparent)]
    Kwise(#[from] kwise::KwiseError),
    #[error(transparent)]
    Wht(#[from] wht::WhtError),
}

/// Outcome of one check. For checks that test a family of inequalities
/// (a grid of thresholds, several moments) the reported numbers are those
/// of the tightest point; `passed` covers the whole family.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    #[serde(rename = "bound")]
    pub claimed_bound: f64,
    pub observed: f64,
    pub stderr: f64,
    pub passed: bool,
    pub trials: u64,
    pub elapsed: f64,
}

impl CheckReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Accumulates sub-assertions of the form `observed <= bound + 4 stderr`
/// and keeps the one with the least slack for reporting.
#[derive(Debug)]
struct Binding {
    observed: f64,
    bound: f64,
    stderr: f64,
    slack: f64,
    passed: bool,
    any: bool,
}

impl Binding {
    fn new() -> Self {
        Binding {
            observed: 0.0,
            bound: 0.0,
            stderr: 0.0,
            slack: f64::INFINITY,
            passed: true,
            any: false,
        }
    }

    fn one_sided(&mut self, observed: f64, bound: f64, stderr: f64) {
        let slack = bound + 4.0 * stderr - observed;
        if !self.any || slack < self.slack {
            self.observed = observed;
            self.bound = bound;
            self.stderr = stderr;
            self.slack = slack;
            self.any = true;
        }
        if slack < 0.0 {
            self.passed = false;
        }
    }

    /// `|observed - target| <= bound + 4 stderr`.
    fn two_sided(&mut self, observed: f64, target: f64, bound: f64, stderr: f64) {
        self.one_sided((observed - target).abs(), bound, stderr);
    }

    fn finish(self, name: impl Into<String>, trials: u64, start: Instant) -> CheckReport {
        CheckReport {
            name: name.into(),
            claimed_bound: self.bound,
            observed: self.observed,
            stderr: self.stderr,
            passed: self.passed,
            trials,
            elapsed: start.elapsed().as_secs_f64(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VecShape {
    /// The worst spike the flatness cap allows: as many entries at `alpha`
    /// as fit in a unit vector, remainder on one extra coordinate.
    SpikeCapped,
    /// All entries `1/sqrt(n)`.
    Flat,
    /// Normalized Gaussian direction, redrawn until it satisfies the cap.
    RandomUnit,
    /// Half the mass on n/8 coordinates, half spread over the rest.
    TwoBlock,
}

/// Recipe for a unit test vector with an l-infinity cap.
#[derive(Debug, Clone, Copy)]
pub struct TestVectorSpec {
    pub n: usize,
    pub k: usize,
    pub alpha: f64,
    pub shape: VecShape,
}

impl TestVectorSpec {
    pub fn flat(n: usize, k: usize) -> Self {
        TestVectorSpec {
            n,
            k,
            alpha: 1.0 / (n as f64).sqrt(),
            shape: VecShape::Flat,
        }
    }

    /// Builds the vector; unit norm, `||v||_inf <= alpha`.
    pub fn build<S: BitStream>(&self, src: &mut S) -> Result<Vec<f64>, VerifyError> {
        let n = self.n;
        let root_n = (n as f64).sqrt();
        if self.alpha * root_n < 1.0 - 1e-9 {
            return Err(VerifyError::Precondition(format!(
                "no unit vector on {n} coordinates has l-infinity norm below {:.3e}",
                1.0 / root_n
            )));
        }
        let v = match self.shape {
            VecShape::Flat => vec![1.0 / root_n; n],
            VecShape::SpikeCapped => {
                let alpha = self.alpha.min(1.0);
                let m = ((1.0 / (alpha * alpha)).floor() as usize).clamp(1, n);
                let mut v = vec![0.0; n];
                v[..m].fill(alpha);
                let rest = 1.0 - m as f64 * alpha * alpha;
                if rest > 1e-12 {
                    if m >= n {
                        return Err(VerifyError::Precondition(format!(
                            "spike at alpha {alpha} does not fit in {n} coordinates"
                        )));
                    }
                    v[m] = rest.sqrt();
                }
                // Exact unit norm after rounding.
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter_mut().for_each(|x| *x /= norm);
                v
            }
            VecShape::TwoBlock => {
                if n < 8 {
                    return Err(VerifyError::Precondition(
                        "two-block shape needs n >= 8".into(),
                    ));
                }
                let heavy = n / 8;
                let a = (0.5 / heavy as f64).sqrt();
                let b = (0.5 / (n - heavy) as f64).sqrt();
                let mut v = vec![b; n];
                v[..heavy].fill(a);
                v
            }
            VecShape::RandomUnit => {
                let mut attempts = 0;
                loop {
                    let v = random_unit_vector(n, src);
                    if linf(&v) <= self.alpha {
                        break v;
                    }
                    attempts += 1;
                    if attempts > 1000 {
                        return Err(VerifyError::Precondition(format!(
                            "could not draw a random unit vector with cap {}",
                            self.alpha
                        )));
                    }
                }
            }
        };
        let max_abs = linf(&v);
        if max_abs > self.alpha * (1.0 + 1e-9) {
            return Err(VerifyError::Precondition(format!(
                "shape {:?} exceeds cap: {max_abs} > {}",
                self.shape, self.alpha
            )));
        }
        Ok(v)
    }
}

pub fn basis_vector(n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[0] = 1.0;
    v
}

pub fn flat_vector(n: usize) -> Vec<f64> {
    vec![1.0 / (n as f64).sqrt(); n]
}

fn uniform_open01<S: BitStream>(src: &mut S) -> f64 {
    // 53 bits, shifted into (0, 1] so the log below is finite.
    (src.draw_word(53) + 1) as f64 / (1u64 << 53) as f64
}

/// Standard normal pair by Box-Muller.
fn normal_pair<S: BitStream>(src: &mut S) -> (f64, f64) {
    let r = (-2.0 * uniform_open01(src).ln()).sqrt();
    let theta = 2.0 * PI * uniform_open01(src);
    (r * theta.cos(), r * theta.sin())
}

pub fn random_unit_vector<S: BitStream>(n: usize, src: &mut S) -> Vec<f64> {
    let mut v = Vec::with_capacity(n);
    while v.len() < n {
        let (a, b) = normal_pair(src);
        v.push(a);
        if v.len() < n {
            v.push(b);
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

fn linf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// One coordinate of `W = P v`: `sqrt(n/k) * sum_{j in J} sign_j v_j` over a
/// fresh k-subset J, signs drawn after the subset in ascending column order.
fn sample_w<S: BitStream>(
    n: usize,
    k: usize,
    scale: f64,
    v: &[f64],
    src: &mut S,
) -> Result<f64, VerifyError> {
    let pattern = rowsampler::sample_subset(n, k, src)?;
    let mut acc = 0.0f64;
    for &col in &pattern.indices {
        let s = if src.draw_bit() { -1.0 } else { 1.0 };
        acc += s * v[col as usize];
    }
    Ok(scale * acc)
}

fn require_nka(n: usize, k: usize, alpha: f64) -> Result<(), VerifyError> {
    let ratio = n as f64 / k as f64 * alpha * alpha;
    if ratio > 0.1 + 1e-12 {
        return Err(VerifyError::Precondition(format!(
            "flatness condition (n/k) alpha^2 <= 1/10 violated: got {ratio:.4}"
        )));
    }
    Ok(())
}

/// Exceedance of the preconditioned vector's l-infinity norm:
/// `Pr(||H D u||_inf >= sqrt(2e ln(2n/delta))/sqrt(n)) <= delta`,
/// with a fresh l-wise sign diagonal per trial and `u` cycling over the
/// basis spike, the flat vector, and fresh random directions.
pub fn check_linf_flattening(
    n: usize,
    delta: f64,
    trials: u64,
    src: &BitSource,
) -> Result<CheckReport, VerifyError> {
    let start = Instant::now();
    let l = kwise::required_independence(n, delta)?;
    let threshold = (2.0 * E * (2.0 * n as f64 / delta).ln()).sqrt() / (n as f64).sqrt();
    let mut exceed = 0u64;
    for t in 0..trials {
        let mut s = src.child(t);
        let family = kwise::build_sign_family(n, l, &mut s)?;
        let mut v = match t % 3 {
            0 => basis_vector(n),
            1 => flat_vector(n),
            _ => random_unit_vector(n, &mut s),
        };
        for (x, &sign) in v.iter_mut().zip(family.signs()) {
            *x *= sign as f64;
        }
        wht::wht_in_place(&mut v)?;
        if linf(&v) >= threshold {
            exceed += 1;
        }
    }
    let observed = exceed as f64 / trials as f64;
    let stderr = (delta * (1.0 - delta) / trials as f64).sqrt();
    let mut binding = Binding::new();
    binding.one_sided(observed, delta, stderr);
    Ok(binding.finish(
        format!("linf_flattening(n={n}, delta={delta}, alpha={threshold:.4})"),
        trials,
        start,
    ))
}

fn binom_u128(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k {
        acc = acc * (n - k + i) as u128 / i as u128;
    }
    acc
}

/// Exhaustive negative-correlation check: enumerating all k-subsets of n
/// columns, the inclusion frequency of every index set A must equal the
/// falling-factorial ratio `k(k-1)...(k-|A|+1) / n(n-1)...(n-|A|+1)` and
/// stay below `(k/n)^|A|`. Exact integer arithmetic; stderr 0.
pub fn check_negative_correlation(n: usize, k: usize) -> Result<CheckReport, VerifyError> {
    let start = Instant::now();
    if n > 20 {
        return Err(VerifyError::EnumerationTooLarge(format!(
            "n={n} exceeds the subset-mask budget (20)"
        )));
    }
    let total = binom_u128(n as u64, k as u64);
    if total > 1_000_000 {
        return Err(VerifyError::EnumerationTooLarge(format!(
            "C({n},{k}) = {total} exceeds 1e6"
        )));
    }
    if k < 1 || k > n {
        return Err(VerifyError::Precondition(format!("k={k} outside 1..={n}")));
    }

    // counts[A] = number of k-subsets containing A, for every mask A.
    let mut counts = vec![0u64; 1 << n];
    let mut subset: Vec<usize> = (0..k).collect();
    loop {
        let mask: usize = subset.iter().map(|&i| 1usize << i).sum();
        let mut sub = mask;
        loop {
            counts[sub] += 1;
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & mask;
        }
        let mut i = k;
        let mut done = true;
        while i > 0 {
            i -= 1;
            if subset[i] != i + n - k {
                subset[i] += 1;
                for j in i + 1..k {
                    subset[j] = subset[j - 1] + 1;
                }
                done = false;
                break;
            }
        }
        if done {
            break;
        }
    }

    let mut binding = Binding::new();
    let mut checked = 0u64;
    for (mask, &count) in counts.iter().enumerate() {
        let a = mask.count_ones() as u64;
        let c = count as u128;
        checked += 1;
        if a > k as u64 {
            if c != 0 {
                binding.one_sided(1.0, 0.0, 0.0);
            }
            continue;
        }
        // Falling-factorial identity, cross-multiplied.
        let mut num: u128 = 1; // k (k-1) ... (k-a+1)
        let mut den: u128 = 1; // n (n-1) ... (n-a+1)
        for i in 0..a {
            num *= (k as u64 - i) as u128;
            den *= (n as u64 - i) as u128;
        }
        if c * den != total * num {
            binding.one_sided(1.0, 0.0, 0.0);
            continue;
        }
        // (k/n)^a domination, cross-multiplied: c * n^a <= total * k^a.
        let mut n_pow: u128 = 1;
        let mut k_pow: u128 = 1;
        for _ in 0..a {
            n_pow *= n as u128;
            k_pow *= k as u128;
        }
        let lhs = c * n_pow;
        let rhs = total * k_pow;
        if lhs > rhs {
            binding.one_sided(1.0, 0.0, 0.0);
        } else {
            // Report the worst ratio E(prod)/(k/n)^|A|; 1 means equality.
            binding.one_sided(lhs as f64 / rhs as f64, 1.0, 0.0);
        }
    }
    Ok(binding.finish(
        format!("negative_correlation(n={n}, k={k})"),
        checked,
        start,
    ))
}

/// Monte Carlo tail domination for one coordinate of `P v`:
/// `Pr(|W| >= s) <= 2 exp(-s^2 / (2 + (2/3) sqrt(n/k) alpha s))`
/// at every s in the grid.
pub fn check_sparse_bernstein(
    n: usize,
    k: usize,
    spec: &TestVectorSpec,
    s_grid: &[f64],
    trials: u64,
    src: &BitSource,
) -> Result<CheckReport, VerifyError> {
    let start = Instant::now();
    let v = spec.build(&mut src.child(0))?;
    let alpha = linf(&v);
    let scale = (n as f64 / k as f64).sqrt();
    let mut counts = vec![0u64; s_grid.len()];
    for t in 0..trials {
        let mut s = src.child(1 + t);
        let w = sample_w(n, k, scale, &v, &mut s)?.abs();
        for (c, &thresh) in counts.iter_mut().zip(s_grid) {
            if w >= thresh {
                *c += 1;
            }
        }
    }
    let mut binding = Binding::new();
    for (&thresh, &c) in s_grid.iter().zip(&counts) {
        let bound = 2.0 * (-thresh * thresh / (2.0 + 2.0 / 3.0 * scale * alpha * thresh)).exp();
        let observed = c as f64 / trials as f64;
        let b = bound.min(1.0);
        let stderr = (b * (1.0 - b) / trials as f64).sqrt();
        binding.one_sided(observed, bound, stderr);
    }
    Ok(binding.finish(
        format!("sparse_bernstein(n={n}, k={k}, shape={:?})", spec.shape),
        trials,
        start,
    ))
}

/// Even-moment table for one coordinate of `P v` under the flatness
/// condition: `E W^4 <= 3.1`, `E W^6 <= 17`, `E W^8 <= 127`,
/// `E W^10 <= 1283`, and `E W^2 = 1` (two-sided).
pub fn check_moment_table(
    n: usize,
    k: usize,
    spec: &TestVectorSpec,
    trials: u64,
    src: &BitSource,
) -> Result<CheckReport, VerifyError> {
    let start = Instant::now();
    let v = spec.build(&mut src.child(0))?;
    let alpha = linf(&v);
    require_nka(n, k, alpha)?;
    let scale = (n as f64 / k as f64).sqrt();

    const BOUNDS: [f64; 4] = [3.1, 17.0, 127.0, 1283.0];
    let mut sums = [0.0f64; 5]; // w^2, w^4, ..., w^10
    let mut sums_sq = [0.0f64; 5];
    for t in 0..trials {
        let mut s = src.child(1 + t);
        let w = sample_w(n, k, scale, &v, &mut s)?;
        let w2 = w * w;
        let mut p = 1.0;
        for i in 0..5 {
            p *= w2;
            sums[i] += p;
            sums_sq[i] += p * p;
        }
    }
    let tf = trials as f64;
    let mut binding = Binding::new();
    for i in 0..5 {
        let mean = sums[i] / tf;
        let var = (sums_sq[i] / tf - mean * mean).max(0.0);
        let stderr = (var / tf).sqrt();
        if i == 0 {
            binding.two_sided(mean, 1.0, 0.0, stderr);
        } else {
            binding.one_sided(mean, BOUNDS[i - 1], stderr);
        }
    }
    Ok(binding.finish(
        format!("moment_table(n={n}, k={k}, shape={:?})", spec.shape),
        trials,
        start,
    ))
}

/// Normal approximation of one coordinate of `P v`:
/// `|E|W| - sqrt(2/pi)| <= (3/2) alpha sqrt(n/k)`, and the Wasserstein
/// distance to the standard normal is at most `3 sqrt(n/k) sum |v_j|^3`.
/// The distance is estimated from order statistics against exact normal
/// quantiles; its sampling slack enters as `4 * (2/sqrt(trials))`.
pub fn check_normal_approx(
    n: usize,
    k: usize,
    spec: &TestVectorSpec,
    trials: u64,
    src: &BitSource,
) -> Result<CheckReport, VerifyError> {
    let start = Instant::now();
    let v = spec.build(&mut src.child(0))?;
    let alpha = linf(&v);
    let scale = (n as f64 / k as f64).sqrt();

    let mut samples = Vec::with_capacity(trials as usize);
    let mut abs_sum = 0.0f64;
    let mut abs_sum_sq = 0.0f64;
    for t in 0..trials {
        let mut s = src.child(1 + t);
        let w = sample_w(n, k, scale, &v, &mut s)?;
        samples.push(w);
        abs_sum += w.abs();
        abs_sum_sq += w * w;
    }
    let tf = trials as f64;
    let mean_abs = abs_sum / tf;
    let var_abs = (abs_sum_sq / tf - mean_abs * mean_abs).max(0.0);
    let se_abs = (var_abs / tf).sqrt();

    let mut binding = Binding::new();
    let target = (2.0 / PI).sqrt();
    let mean_bound = 1.5 * alpha * scale;
    binding.two_sided(mean_abs, target, mean_bound, se_abs);

    // Wasserstein distance on the line is the L1 distance of quantile
    // functions; estimate from order statistics at (i - 1/2)/T.
    samples.sort_unstable_by(f64::total_cmp);
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut dw = 0.0f64;
    for (i, &w) in samples.iter().enumerate() {
        let q = normal.inverse_cdf((i as f64 + 0.5) / tf);
        dw += (w - q).abs();
    }
    dw /= tf;
    let third_moment_sum: f64 = v.iter().map(|x| x.abs().powi(3)).sum();
    let dw_bound = 3.0 * scale * third_moment_sum;
    binding.one_sided(dw, dw_bound, 2.0 / tf.sqrt());

    Ok(binding.finish(
        format!("normal_approx(n={n}, k={k}, shape={:?})", spec.shape),
        trials,
        start,
    ))
}

/// Two-sided tails of `||W||_2^2` around d and of `||W||_1` around its
/// empirical mean, `W = P v` with d independent rows, dominated by the
/// stated exponential bounds on the grid `t in {0.1 d, ..., 1.0 d}`.
pub fn check_sum_deviation(
    plan: &EmbeddingPlan,
    spec: &TestVectorSpec,
    trials: u64,
    src: &BitSource,
) -> Result<CheckReport, VerifyError> {
    let start = Instant::now();
    if plan.mode != PlanMode::Sparse {
        return Err(VerifyError::Precondition(
            "sum deviation check needs a sparse-mode plan".into(),
        ));
    }
    let (n, k, d) = (plan.n, plan.k, plan.d);
    let v = spec.build(&mut src.child(0))?;
    let alpha = linf(&v);
    require_nka(n, k, alpha)?;
    let scale = (n as f64 / k as f64).sqrt();

    let mut z2s = Vec::with_capacity(trials as usize);
    let mut z1s = Vec::with_capacity(trials as usize);
    for t in 0..trials {
        let mut s = src.child(1 + t);
        let mut z2 = 0.0f64;
        let mut z1 = 0.0f64;
        for _ in 0..d {
            let w = sample_w(n, k, scale, &v, &mut s)?;
            z2 += w * w;
            z1 += w.abs();
        }
        z2s.push(z2);
        z1s.push(z1);
    }
    let tf = trials as f64;
    let df = d as f64;
    let t_grid: Vec<f64> = (1..=10).map(|i| df * i as f64 / 10.0).collect();
    let mut binding = Binding::new();

    // The spike-escape term of the upper-tail bound.
    let escape = (-3.0 * k as f64 / (4.0 * n as f64 * alpha * alpha) + (2.0 * df).ln()).exp();
    for &t in &t_grid {
        let upper = (-t * t / (6.2 * df + 12.0 * t)).exp() + escape;
        let lower = (-t * t / (6.0 * df)).exp();
        let up_obs = z2s.iter().filter(|&&z| z >= df + t).count() as f64 / tf;
        let lo_obs = z2s.iter().filter(|&&z| z <= df - t).count() as f64 / tf;
        let ub = upper.min(1.0);
        let lb = lower.min(1.0);
        binding.one_sided(up_obs, upper, (ub * (1.0 - ub) / tf).sqrt());
        binding.one_sided(lo_obs, lower, (lb * (1.0 - lb) / tf).sqrt());
    }

    // The l1 sum concentrates around a mean with no closed form; center on
    // the empirical mean and shrink t by 4 standard errors of that mean.
    let mean1 = z1s.iter().sum::<f64>() / tf;
    let var1 = z1s.iter().map(|z| (z - mean1).powi(2)).sum::<f64>() / (tf - 1.0);
    let se1 = (var1 / tf).sqrt();
    for &t in &t_grid {
        let t_eff = t - 4.0 * se1;
        if t_eff <= 0.0 {
            continue;
        }
        let bound = 2.0 * (-t_eff * t_eff / (2.0 * df + 8.0 * t_eff / 3.0)).exp();
        let observed = z1s.iter().filter(|&&z| (z - mean1).abs() >= t).count() as f64 / tf;
        let b = bound.min(1.0);
        binding.one_sided(observed, bound, (b * (1.0 - b) / tf).sqrt());
    }

    Ok(binding.finish(
        format!("sum_deviation(d={d}, n={n}, k={k}, shape={:?})", spec.shape),
        trials,
        start,
    ))
}

/// End-to-end distortion: over `seeds` independent embeddings of the given
/// plan, each vector's failure frequency of the distortion interval must
/// stay within `2 delta` (plus 4-sigma sampling slack). The interval is
/// `[(1+eps)^-1, 1+eps]` for q = 2 and `[1-eps, 1+eps]` for the q = 1
/// estimator `sqrt(pi/2) ||f_1(u)||_1`.
pub fn check_end_to_end(
    plan: &EmbeddingPlan,
    u_set: &[Vec<f64>],
    seeds: u64,
) -> Result<CheckReport, VerifyError> {
    let start = Instant::now();
    if u_set.is_empty() {
        return Err(VerifyError::Precondition("empty vector set".into()));
    }
    let norms: Vec<f64> = u_set
        .iter()
        .map(|u| u.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    if norms.contains(&0.0) {
        return Err(VerifyError::Precondition("zero vector in test set".into()));
    }
    let root = BitSource::new(plan.seed);
    let mut failures = vec![0u64; u_set.len()];
    for s in 0..seeds {
        let built = transform::build_embedding(plan, &root.child(s))?;
        for (i, u) in u_set.iter().enumerate() {
            let y = transform::apply(&built, u)?;
            let ok = if plan.q == 2 {
                let ratio = y.iter().map(|x| x * x).sum::<f64>().sqrt() / norms[i];
                ratio >= 1.0 / (1.0 + plan.eps) && ratio <= 1.0 + plan.eps
            } else {
                let est = transform::l1_norm_estimate(plan, &y) / norms[i];
                est >= 1.0 - plan.eps && est <= 1.0 + plan.eps
            };
            if !ok {
                failures[i] += 1;
            }
        }
    }
    let bound = 2.0 * plan.delta;
    let stderr = (bound * (1.0 - bound) / seeds as f64).sqrt();
    let mut binding = Binding::new();
    for &f in &failures {
        binding.one_sided(f as f64 / seeds as f64, bound, stderr);
    }
    Ok(binding.finish(
        format!(
            "end_to_end(q={}, n={}, d={}, k={}, mode={}, vectors={})",
            plan.q,
            plan.n,
            plan.d,
            plan.k,
            plan.mode,
            u_set.len()
        ),
        seeds,
        start,
    ))
}

/// Point-set variant: N random unit points, one embedding per seed, failure
/// when any of the C(N,2) pairwise distances leaves the interval. The
/// union-bound plan keeps the failure frequency below `p`.
pub fn check_end_to_end_pointset(
    n: usize,
    points: u64,
    eps: f64,
    p: f64,
    q: u8,
    seeds: u64,
    base_seed: u64,
) -> Result<CheckReport, VerifyError> {
    let start = Instant::now();
    let plan = transform::plan_for_pointset(
        n,
        points,
        eps,
        p,
        q,
        0.5,
        transform::KappaForm::SquaredComplement,
    )?
    .with_seed(base_seed);
    let root = BitSource::new(base_seed);
    let mut pts_src = root.child(0);
    let pts: Vec<Vec<f64>> = (0..points)
        .map(|_| random_unit_vector(n, &mut pts_src))
        .collect();

    let mut failures = 0u64;
    for s in 0..seeds {
        let built = transform::build_embedding(&plan, &root.child(1 + s))?;
        let images: Vec<Vec<f64>> = pts
            .iter()
            .map(|x| transform::apply(&built, x))
            .collect::<Result<_, _>>()?;
        'pairs: for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let dist: f64 = pts[i]
                    .iter()
                    .zip(&pts[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let ok = if q == 2 {
                    let image_dist: f64 = images[i]
                        .iter()
                        .zip(&images[j])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    let ratio = image_dist / dist;
                    ratio >= 1.0 / (1.0 + eps) && ratio <= 1.0 + eps
                } else {
                    let diff_image: Vec<f64> = images[i]
                        .iter()
                        .zip(&images[j])
                        .map(|(a, b)| a - b)
                        .collect();
                    let est = transform::l1_norm_estimate(&plan, &diff_image) / dist;
                    est >= 1.0 - eps && est <= 1.0 + eps
                };
                if !ok {
                    failures += 1;
                    break 'pairs;
                }
            }
        }
    }
    let observed = failures as f64 / seeds as f64;
    let stderr = (p * (1.0 - p) / seeds as f64).sqrt();
    let mut binding = Binding::new();
    binding.one_sided(observed, p, stderr);
    Ok(binding.finish(
        format!(
            "end_to_end_pointset(q={q}, n={n}, N={points}, p={p}, d={}, mode={})",
            plan.d, plan.mode
        ),
        seeds,
        start,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negcorr_tiny_exact() {
        let r = check_negative_correlation(4, 2).unwrap();
        assert!(r.passed);
        assert_eq!(r.stderr, 0.0);
        // The binding point is the equality case E(prod) = (k/n)^|A|.
        assert_eq!(r.observed, 1.0);
        assert_eq!(r.claimed_bound, 1.0);
    }

    #[test]
    fn negcorr_all_small_n() {
        for n in 1..=8 {
            for k in 1..=n {
                assert!(
                    check_negative_correlation(n, k).unwrap().passed,
                    "n={n} k={k}"
                );
            }
        }
    }

    #[test]
    fn negcorr_budget() {
        assert!(matches!(
            check_negative_correlation(64, 32),
            Err(VerifyError::EnumerationTooLarge(_))
        ));
    }

    #[test]
    fn linf_flattening_small() {
        let src = BitSource::with_stream(12, 500);
        let r = check_linf_flattening(256, 0.05, 600, &src).unwrap();
        assert!(r.passed, "{}", r.to_json_line());
        // The bound is loose; observed exceedance should be far below it.
        assert!(r.observed <= r.claimed_bound);
    }

    #[test]
    fn linf_spike_never_exceeds() {
        // For u = e1, H D e1 is +-1/sqrt(n) in every coordinate, strictly
        // below the threshold whenever it exceeds 1/sqrt(n).
        let n = 1024usize;
        let delta = 0.05f64;
        let threshold = (2.0 * E * (2.0 * n as f64 / delta).ln()).sqrt() / (n as f64).sqrt();
        assert!(threshold > 1.0 / (n as f64).sqrt());
        let mut src = BitSource::new(3);
        let fam = kwise::build_sign_family(n, 20, &mut src).unwrap();
        let mut v = basis_vector(n);
        for (x, &s) in v.iter_mut().zip(fam.signs()) {
            *x *= s as f64;
        }
        wht::wht_in_place(&mut v).unwrap();
        let inf = linf(&v);
        assert!((inf - 1.0 / (n as f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn bernstein_flat_small() {
        let spec = TestVectorSpec::flat(1024, 256);
        let grid: Vec<f64> = (1..=10).map(|i| i as f64 * 0.5).collect();
        let src = BitSource::with_stream(7, 501);
        let r = check_sparse_bernstein(1024, 256, &spec, &grid, 4000, &src).unwrap();
        assert!(r.passed, "{}", r.to_json_line());
    }

    #[test]
    fn bernstein_degenerate_k_equals_n() {
        // k = n: every column is hit, W is a pure normalized sign sum and
        // the bound reduces to the classical one.
        let spec = TestVectorSpec::flat(64, 64);
        let grid = [0.0, 1.0, 2.0, 3.0];
        let src = BitSource::with_stream(8, 502);
        let r = check_sparse_bernstein(64, 64, &spec, &grid, 2000, &src).unwrap();
        assert!(r.passed, "{}", r.to_json_line());
    }

    #[test]
    fn moment_table_flat_k_equals_n() {
        // With k = n the coordinate is a normalized sign sum whose fourth
        // moment is exactly 3 - 2/n <= 3.1.
        let src = BitSource::with_stream(9, 503);
        let spec = TestVectorSpec::flat(256, 256);
        let r = check_moment_table(256, 256, &spec, 20_000, &src).unwrap();
        assert!(r.passed, "{}", r.to_json_line());
    }

    #[test]
    fn moment_table_rejects_spiky_setup() {
        let spec = TestVectorSpec {
            n: 256,
            k: 16,
            alpha: 0.5,
            shape: VecShape::SpikeCapped,
        };
        assert!(matches!(
            check_moment_table(256, 16, &spec, 100, &BitSource::new(0)),
            Err(VerifyError::Precondition(_))
        ));
    }

    #[test]
    fn normal_approx_flat_small() {
        let spec = TestVectorSpec::flat(1024, 256);
        let src = BitSource::with_stream(10, 504);
        let r = check_normal_approx(1024, 256, &spec, 20_000, &src).unwrap();
        assert!(r.passed, "{}", r.to_json_line());
    }

    #[test]
    fn sum_deviation_small() {
        let plan = EmbeddingPlan::explicit(1024, 16, 256, 2, 0).unwrap();
        let spec = TestVectorSpec::flat(1024, 256);
        let src = BitSource::with_stream(11, 505);
        let r = check_sum_deviation(&plan, &spec, 4000, &src).unwrap();
        assert!(r.passed, "{}", r.to_json_line());
    }

    #[test]
    fn end_to_end_small_l2() {
        let plan = transform::plan_l2(256, 0.5, 0.05).unwrap().with_seed(21);
        let mut src = BitSource::with_stream(21, 506);
        let u_set = vec![
            basis_vector(256),
            flat_vector(256),
            random_unit_vector(256, &mut src),
        ];
        let r = check_end_to_end(&plan, &u_set, 400).unwrap();
        assert!(r.passed, "{}", r.to_json_line());
    }

    #[test]
    fn end_to_end_rejects_zero_vector() {
        let plan = transform::plan_l2(256, 0.5, 0.05).unwrap();
        assert!(matches!(
            check_end_to_end(&plan, &[vec![0.0; 256]], 10),
            Err(VerifyError::Precondition(_))
        ));
    }

    #[test]
    fn pointset_small() {
        let r = check_end_to_end_pointset(256, 6, 0.5, 0.5, 2, 200, 31).unwrap();
        assert!(r.passed, "{}", r.to_json_line());
    }

    #[test]
    fn report_json_fields() {
        let r = check_negative_correlation(4, 2).unwrap();
        let line = r.to_json_line();
        for key in [
            "name", "bound", "observed", "stderr", "passed", "trials", "elapsed",
        ] {
            assert!(line.contains(&format!("\"{key}\"")), "missing {key}: {line}");
        }
    }

    #[test]
    fn vector_shapes_are_unit_and_capped() {
        let mut src = BitSource::new(1);
        for shape in [
            VecShape::Flat,
            VecShape::SpikeCapped,
            VecShape::TwoBlock,
            VecShape::RandomUnit,
        ] {
            let spec = TestVectorSpec {
                n: 256,
                k: 64,
                alpha: 0.25,
                shape,
            };
            let v = spec.build(&mut src).unwrap();
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9, "{shape:?}: norm {norm}");
            assert!(linf(&v) <= 0.25 * (1.0 + 1e-9), "{shape:?}");
        }
        // Infeasible cap rejected.
        let spec = TestVectorSpec {
            n: 256,
            k: 64,
            alpha: 0.01,
            shape: VecShape::Flat,
        };
        assert!(spec.build(&mut src).is_err());
    }

    #[test]
    fn spike_vector_hits_the_cap() {
        let spec = TestVectorSpec {
            n: 4096,
            k: 1024,
            alpha: 0.1,
            shape: VecShape::SpikeCapped,
        };
        let v = spec.build(&mut BitSource::new(0)).unwrap();
        assert!((linf(&v) - 0.1).abs() < 1e-6);
    }
}
