//! Parameter planning, embedding assembly, and application.
//!
//! A plan fixes `(n, d, k, l, mode)` from the target guarantee: for a fixed
//! unit vector the embedded norm lies in the distortion interval with
//! probability at least `1 - 2 delta`. The planners evaluate explicit
//! closed-form lower bounds for `d` and `k`; `mode` selects between the
//! sparse row-sampled matrix (`3k <= n`), a dense `{-1, 0, 1}` fallback for
//! the l2 target, a dense sign matrix for the l1 target, and a refusal when
//! no parameter choice reduces the dimension meaningfully.
//!
//! All logarithms are natural.

use crate::kwise::{self, SignFamily};
use crate::randbits::{BitReport, BitSource, BitStream};
use crate::rowsampler::{self, RowPattern};
use crate::wht;
use serde::Serialize;
use std::f64::consts::{E, PI};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("n must be a power of two, got {0}")]
    NotPowerOfTwo(usize),
    #[error("eps must lie in (0, 1), got {0}")]
    EpsOutOfRange(f64),
    #[error("delta must lie in (0, 1/2), got {0}")]
    DeltaOutOfRange(f64),
    #[error("kappa must lie in (0, 1), got {0}")]
    KappaOutOfRange(f64),
    #[error("point count must be at least 2, got {0}")]
    TooFewPoints(u64),
    #[error("failure probability must lie in (0, 1), got {0}")]
    FailProbOutOfRange(f64),
    #[error("q must be 1 or 2, got {0}")]
    BadTargetNorm(u8),
    #[error("explicit plan invalid: {0}")]
    BadExplicit(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum BuildError {
    #[error("plan mode is no_reduction: the target dimension would be proportional to n, refusing to build")]
    NoReduction,
    #[error(transparent)]
    Kwise(#[from] kwise::KwiseError),
    #[error(transparent)]
    Sample(#[from] rowsampler::SampleError),
}

#[derive(Debug, Error, PartialEq)]
pub enum TransformError {
    #[error("empty vector")]
    Empty,
    #[error("vector length {got} exceeds planned dimension {n}")]
    DimensionMismatch { got: usize, n: usize },
    #[error(transparent)]
    Wht(#[from] wht::WhtError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    /// Row-sampled sparse sign matrix, `3k <= n`.
    Sparse,
    /// Dense `{-1, 0, 1}` matrix with probabilities `{1/6, 2/3, 1/6}`,
    /// used for the l2 target when the sparse matrix would be dense anyway.
    AchlioptasFallback,
    /// Dense sign matrix (`k = n`) for the l1 target.
    DenseL1,
    /// No useful reduction exists at these parameters.
    NoReduction,
}

impl std::fmt::Display for PlanMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PlanMode::Sparse => "sparse",
            PlanMode::AchlioptasFallback => "achlioptas_fallback",
            PlanMode::DenseL1 => "dense_l1",
            PlanMode::NoReduction => "no_reduction",
        })
    }
}

/// Which complement of kappa the l1 row-weight formula uses. The two
/// published variants disagree; `SquaredComplement` matches the theorem
/// statement and is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KappaForm {
    /// `(1 - kappa)^2`
    SquaredComplement,
    /// `1 - kappa^2`
    ComplementOfSquare,
}

/// All parameters of one embedding, plus how each was computed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddingPlan {
    /// Input dimension after zero-padding (power of two).
    pub n: usize,
    /// Target dimension.
    pub d: usize,
    /// Nonzero entries per row of the sparse matrix.
    pub k: usize,
    /// Independence order of the sign diagonal.
    pub l: u32,
    /// Target norm: 1 or 2.
    pub q: u8,
    pub eps: f64,
    pub delta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    pub mode: PlanMode,
    pub seed: u64,
    pub provenance: Vec<String>,
}

impl EmbeddingPlan {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// A plan with explicitly supplied dimensions, bypassing the planners.
    /// Used by the verification harness and benchmarks to pin `(n, d, k)`.
    pub fn explicit(n: usize, d: usize, k: usize, q: u8, seed: u64) -> Result<Self, PlanError> {
        if !n.is_power_of_two() {
            return Err(PlanError::NotPowerOfTwo(n));
        }
        if q != 1 && q != 2 {
            return Err(PlanError::BadTargetNorm(q));
        }
        if d < 1 {
            return Err(PlanError::BadExplicit("d must be >= 1".into()));
        }
        if k < 1 || k > n {
            return Err(PlanError::BadExplicit(format!("k={k} outside 1..={n}")));
        }
        if 3 * k > n {
            return Err(PlanError::BadExplicit(format!(
                "sparse mode needs 3k <= n, got k={k}, n={n}"
            )));
        }
        Ok(EmbeddingPlan {
            n,
            d,
            k,
            l: 2,
            q,
            eps: 0.0,
            delta: 0.0,
            kappa: None,
            mode: PlanMode::Sparse,
            seed,
            provenance: vec!["rule: explicit dimensions".into()],
        })
    }

    /// Expected total random bits for building this plan's embedding, using
    /// the exact expectation of the rejection-loop length. The realized
    /// count is reported exactly by [`build_embedding`].
    pub fn estimated_bits(&self) -> f64 {
        let sign_bits = SignFamily::seed_bits_for(self.n, self.l) as f64;
        let log2n = self.n.trailing_zeros() as f64;
        match self.mode {
            PlanMode::Sparse => {
                let t = rowsampler::expected_iterations_exact(self.n, self.k)
                    .expect("plan invariants hold");
                sign_bits + self.d as f64 * (self.k as f64 + t * log2n)
            }
            // 3 bits per trit-draw attempt, acceptance probability 3/4.
            PlanMode::AchlioptasFallback => sign_bits + (self.d * self.n) as f64 * 4.0,
            PlanMode::DenseL1 => sign_bits + (self.d * self.n) as f64,
            PlanMode::NoReduction => 0.0,
        }
    }
}

fn validate_common(n: usize, eps: f64, delta: f64) -> Result<(), PlanError> {
    if !n.is_power_of_two() {
        return Err(PlanError::NotPowerOfTwo(n));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(PlanError::EpsOutOfRange(eps));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return Err(PlanError::DeltaOutOfRange(delta));
    }
    Ok(())
}

fn ceil_at_least_one(x: f64) -> usize {
    (x.ceil() as usize).max(1)
}

/// Zero-pads to the next power of two; the norm is preserved exactly.
pub fn pad_pow2(u: &[f64]) -> Result<Vec<f64>, TransformError> {
    if u.is_empty() {
        return Err(TransformError::Empty);
    }
    let n = u.len().next_power_of_two();
    let mut out = u.to_vec();
    out.resize(n, 0.0);
    Ok(out)
}

/// Plans an embedding into l2 with distortion interval
/// `[(1+eps)^-1, 1+eps]` at failure probability `2 delta`:
/// `d >= 1.55 (1+2eps)^2/eps^2 ln(3/delta)`,
/// `k >= max(8e/3 ln(6d/delta), 20e) ln(2n/delta)`.
pub fn plan_l2(n: usize, eps: f64, delta: f64) -> Result<EmbeddingPlan, PlanError> {
    validate_common(n, eps, delta)?;
    let d = ceil_at_least_one(1.55 * (1.0 + 2.0 * eps).powi(2) / (eps * eps) * (3.0 / delta).ln());
    let k = ceil_at_least_one(
        (8.0 * E / 3.0 * (6.0 * d as f64 / delta).ln()).max(20.0 * E)
            * (2.0 * n as f64 / delta).ln(),
    );
    let l = kwise::required_independence(n, delta).expect("delta validated");
    let mode = if 3 * k <= n {
        PlanMode::Sparse
    } else {
        PlanMode::AchlioptasFallback
    };
    let provenance = vec![
        "rule: l2 tail bounds with explicit constants".to_string(),
        format!("d = ceil(1.55 (1+2eps)^2/eps^2 ln(3/delta)) = {d}"),
        format!("k = ceil(max(8e/3 ln(6d/delta), 20e) ln(2n/delta)) = {k}"),
        format!("l = 2 ceil(ln(n/delta)) = {l}"),
        format!("mode: {mode} (sparse iff 3k <= n)"),
    ];
    Ok(EmbeddingPlan {
        n,
        d,
        k,
        l,
        q: 2,
        eps,
        delta,
        kappa: None,
        mode,
        seed: 0,
        provenance,
    })
}

fn l1_k_factor(kappa: f64, eps: f64, form: KappaForm) -> f64 {
    let denom = match form {
        KappaForm::SquaredComplement => (1.0 - kappa).powi(2),
        KappaForm::ComplementOfSquare => 1.0 - kappa * kappa,
    };
    (9.0 * PI * E / (4.0 * denom * eps * eps)).max(20.0 * E)
}

/// Plans an embedding into l1: `sqrt(pi/2) ||f_1(u)||_1` lies within
/// `1 +- eps` of the source l2 norm with failure probability `2 delta`.
/// `kappa` splits the error budget between concentration and mean shift:
/// `d >= (pi + sqrt(pi/2) (8/3) kappa eps)/(kappa^2 eps^2) ln(2/delta)`,
/// `k >= max(9 pi e/(4 (1-kappa)^2 eps^2), 20e) ln(2n/delta)`.
pub fn plan_l1(n: usize, eps: f64, delta: f64, kappa: f64) -> Result<EmbeddingPlan, PlanError> {
    plan_l1_with_form(n, eps, delta, kappa, KappaForm::SquaredComplement)
}

/// [`plan_l1`] with an explicit choice of the kappa complement form in the
/// row-weight bound.
pub fn plan_l1_with_form(
    n: usize,
    eps: f64,
    delta: f64,
    kappa: f64,
    form: KappaForm,
) -> Result<EmbeddingPlan, PlanError> {
    validate_common(n, eps, delta)?;
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(PlanError::KappaOutOfRange(kappa));
    }
    let d = ceil_at_least_one(
        (PI + (PI / 2.0).sqrt() * (8.0 / 3.0) * kappa * eps) / (kappa * kappa * eps * eps)
            * (2.0 / delta).ln(),
    );
    let log_term = (2.0 * n as f64 / delta).ln();
    let k_raw = ceil_at_least_one(l1_k_factor(kappa, eps, form) * log_term);
    let l = kwise::required_independence(n, delta).expect("delta validated");

    let mut provenance = vec![
        "rule: l1 tail bounds with explicit constants".to_string(),
        format!("kappa = {kappa}"),
        format!("d = ceil((pi + sqrt(pi/2)(8/3) kappa eps)/(kappa^2 eps^2) ln(2/delta)) = {d}"),
        format!("k formula = ceil(max(9 pi e/(4 (1-kappa)^2 eps^2), 20e) ln(2n/delta)) = {k_raw}"),
        format!("l = 2 ceil(ln(n/delta)) = {l}"),
    ];

    let (mode, k) = if 3 * k_raw <= n {
        provenance.push("mode: sparse (3k <= n)".to_string());
        (PlanMode::Sparse, k_raw)
    } else {
        // Only refuse when no kappa in (0, 1) keeps the row weight within
        // n; the formula's infimum is its kappa -> 0 limit.
        let inf_k = l1_k_factor(0.0, eps, KappaForm::SquaredComplement) * log_term;
        if inf_k > n as f64 {
            provenance.push(format!(
                "mode: no_reduction (row weight formula exceeds n = {n} for every kappa)"
            ));
            (PlanMode::NoReduction, k_raw)
        } else {
            provenance.push(format!(
                "mode: dense_l1 (row weight formula {k_raw} > n/3; dense sign matrix with k = n)"
            ));
            (PlanMode::DenseL1, n)
        }
    };

    Ok(EmbeddingPlan {
        n,
        d,
        k,
        l,
        q: 1,
        eps,
        delta,
        kappa: Some(kappa),
        mode,
        seed: 0,
        provenance,
    })
}

/// Plans for an N-point set: with per-vector failure probability
/// `delta = p / N^2`, the union bound over the C(N, 2) difference vectors
/// bounds the overall failure probability by `p`. Uses the rounded display
/// constants (7.25/55 for l2, 3.15/3.4/19.3/55 for l1).
pub fn plan_for_pointset(
    n: usize,
    points: u64,
    eps: f64,
    p: f64,
    q: u8,
    kappa: f64,
    form: KappaForm,
) -> Result<EmbeddingPlan, PlanError> {
    if points < 2 {
        return Err(PlanError::TooFewPoints(points));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(PlanError::FailProbOutOfRange(p));
    }
    if q != 1 && q != 2 {
        return Err(PlanError::BadTargetNorm(q));
    }
    let nn = points as f64 * points as f64;
    let delta = p / nn;
    validate_common(n, eps, delta)?;
    let l = kwise::required_independence(n, delta).expect("delta validated");
    let pairs = points * (points - 1) / 2;
    let log_knk = (2.0 * n as f64 * nn / p).ln();

    let mut provenance = vec![
        format!("rule: {points}-point planning, rounded display constants"),
        format!("delta = p/N^2 = {delta:e}"),
        format!(
            "union bound over C(N,2) = {pairs} difference vectors: failure <= 2 delta C(N,2) < p"
        ),
    ];

    let plan = if q == 2 {
        let d = ceil_at_least_one(
            1.55 * (1.0 + 2.0 * eps).powi(2) / (eps * eps) * (3.0 * nn / p).ln(),
        );
        let k = ceil_at_least_one((7.25 * (6.0 * d as f64 * nn / p).ln()).max(55.0) * log_knk);
        let mode = if 3 * k <= n {
            PlanMode::Sparse
        } else {
            PlanMode::AchlioptasFallback
        };
        provenance.push(format!("d = ceil(1.55 (1+2eps)^2/eps^2 ln(3N^2/p)) = {d}"));
        provenance.push(format!("k = ceil(max(7.25 ln(6dN^2/p), 55) ln(2nN^2/p)) = {k}"));
        provenance.push(format!("mode: {mode}"));
        EmbeddingPlan {
            n,
            d,
            k,
            l,
            q,
            eps,
            delta,
            kappa: None,
            mode,
            seed: 0,
            provenance,
        }
    } else {
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(PlanError::KappaOutOfRange(kappa));
        }
        let d = ceil_at_least_one(
            (3.15 + 3.4 * kappa * eps) / (kappa * kappa * eps * eps) * (2.0 * nn / p).ln(),
        );
        let denom = match form {
            KappaForm::SquaredComplement => (1.0 - kappa).powi(2),
            KappaForm::ComplementOfSquare => 1.0 - kappa * kappa,
        };
        let k_raw = ceil_at_least_one((19.3 / (denom * eps * eps)).max(55.0) * log_knk);
        provenance.push(format!("kappa = {kappa}"));
        provenance.push(format!(
            "d = ceil((3.15 + 3.4 kappa eps)/(kappa^2 eps^2) ln(2N^2/p)) = {d}"
        ));
        provenance.push(format!(
            "k formula = ceil(max(19.3/((1-kappa)^2 eps^2), 55) ln(2nN^2/p)) = {k_raw}"
        ));
        let (mode, k) = if 3 * k_raw <= n {
            provenance.push("mode: sparse (3k <= n)".to_string());
            (PlanMode::Sparse, k_raw)
        } else {
            let inf_k = (19.3 / (eps * eps)).max(55.0) * log_knk;
            if inf_k > n as f64 {
                provenance.push(format!(
                    "mode: no_reduction (row weight formula exceeds n = {n} for every kappa)"
                ));
                (PlanMode::NoReduction, k_raw)
            } else {
                provenance.push(format!(
                    "mode: dense_l1 (row weight formula {k_raw} > n/3; dense sign matrix with k = n)"
                ));
                (PlanMode::DenseL1, n)
            }
        };
        EmbeddingPlan {
            n,
            d,
            k,
            l,
            q,
            eps,
            delta,
            kappa: Some(kappa),
            mode,
            seed: 0,
            provenance,
        }
    };
    Ok(plan)
}

/// One sparse row: a sampled column subset with a sign per entry.
/// Signs are assigned to the subset's indices in ascending column order.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    pub pattern: RowPattern,
    pub signs: Vec<i8>,
}

/// The sparse projection matrix `P = sqrt(n/k) (xi_ij eps_ij)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSignMatrix {
    pub plan: EmbeddingPlan,
    pub rows: Vec<SparseRow>,
    /// `sqrt(n/k)`.
    pub scale: f64,
}

/// Dense fallback: `{-1, 0, 1}` entries for the l2 target (scale
/// `sqrt(3)`), or `{-1, 1}` entries for the dense l1 mode (scale 1).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseFallbackMatrix {
    pub plan: EmbeddingPlan,
    /// Row-major `d x n`.
    pub entries: Vec<i8>,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProjectionMatrix {
    Sparse(SparseSignMatrix),
    Dense(DenseFallbackMatrix),
}

/// A fully drawn embedding: sign diagonal, projection matrix, and the exact
/// random-bit bill. Immutable; application is a pure function.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltEmbedding {
    pub plan: EmbeddingPlan,
    pub sign_family: SignFamily,
    pub projection: ProjectionMatrix,
    pub report: BitReport,
}

/// Draws the embedding from `root`'s seed. Components use split streams:
/// the sign diagonal is child 0, row i of the projection is child `1 + i`,
/// so rows may be drawn independently and in parallel.
pub fn build_embedding(
    plan: &EmbeddingPlan,
    root: &BitSource,
) -> Result<BuiltEmbedding, BuildError> {
    if plan.mode == PlanMode::NoReduction {
        return Err(BuildError::NoReduction);
    }
    let mut signs_src = root.child(0);
    let sign_family = kwise::build_sign_family(plan.n, plan.l, &mut signs_src)?;
    let mut report = BitReport {
        signs: signs_src.bits_consumed(),
        ..BitReport::default()
    };

    let projection = match plan.mode {
        PlanMode::Sparse => {
            let mut rows = Vec::with_capacity(plan.d);
            for i in 0..plan.d {
                let mut src = root.child(1 + i as u64);
                let pattern = rowsampler::sample_subset(plan.n, plan.k, &mut src)?;
                let signs: Vec<i8> = (0..plan.k)
                    .map(|_| if src.draw_bit() { -1 } else { 1 })
                    .collect();
                report.rows += src.bits_consumed();
                rows.push(SparseRow { pattern, signs });
            }
            ProjectionMatrix::Sparse(SparseSignMatrix {
                plan: plan.clone(),
                rows,
                scale: (plan.n as f64 / plan.k as f64).sqrt(),
            })
        }
        PlanMode::AchlioptasFallback => {
            let mut entries = Vec::with_capacity(plan.d * plan.n);
            for i in 0..plan.d {
                let mut src = root.child(1 + i as u64);
                for _ in 0..plan.n {
                    // Rejection-sample a uniform value in 0..6, then map to
                    // {1, -1, 0} with probabilities {1/6, 1/6, 2/3}.
                    let v = loop {
                        let w = src.draw_word(3);
                        if w < 6 {
                            break w;
                        }
                    };
                    entries.push(match v {
                        0 => 1,
                        1 => -1,
                        _ => 0,
                    });
                }
                report.fallback += src.bits_consumed();
            }
            ProjectionMatrix::Dense(DenseFallbackMatrix {
                plan: plan.clone(),
                entries,
                scale: 3.0f64.sqrt(),
            })
        }
        PlanMode::DenseL1 => {
            let mut entries = Vec::with_capacity(plan.d * plan.n);
            for i in 0..plan.d {
                let mut src = root.child(1 + i as u64);
                for _ in 0..plan.n {
                    entries.push(if src.draw_bit() { -1 } else { 1 });
                }
                report.fallback += src.bits_consumed();
            }
            ProjectionMatrix::Dense(DenseFallbackMatrix {
                plan: plan.clone(),
                entries,
                scale: 1.0,
            })
        }
        PlanMode::NoReduction => unreachable!(),
    };

    Ok(BuiltEmbedding {
        plan: plan.clone(),
        sign_family,
        projection,
        report,
    })
}

/// Applies `d^(-1/q) P H D` to `u`, zero-padding it to length n first.
/// Cost `O(n log n + d k)` in the sparse mode.
pub fn apply(embedding: &BuiltEmbedding, u: &[f64]) -> Result<Vec<f64>, TransformError> {
    let plan = &embedding.plan;
    let n = plan.n;
    if u.is_empty() {
        return Err(TransformError::Empty);
    }
    if u.len() > n {
        return Err(TransformError::DimensionMismatch { got: u.len(), n });
    }
    let mut v = vec![0.0f64; n];
    v[..u.len()].copy_from_slice(u);
    for (x, &s) in v.iter_mut().zip(embedding.sign_family.signs()) {
        *x *= s as f64;
    }
    wht::wht_in_place(&mut v)?;

    let d_factor = match plan.q {
        2 => (plan.d as f64).sqrt().recip(),
        _ => (plan.d as f64).recip(),
    };
    let out = match &embedding.projection {
        ProjectionMatrix::Sparse(p) => {
            let out_scale = p.scale * d_factor;
            p.rows
                .iter()
                .map(|row| {
                    let mut acc = 0.0f64;
                    for (&col, &s) in row.pattern.indices.iter().zip(&row.signs) {
                        acc += s as f64 * v[col as usize];
                    }
                    acc * out_scale
                })
                .collect()
        }
        ProjectionMatrix::Dense(p) => {
            let out_scale = p.scale * d_factor;
            (0..plan.d)
                .map(|i| {
                    let row = &p.entries[i * n..(i + 1) * n];
                    let mut acc = 0.0f64;
                    for (&e, &x) in row.iter().zip(&v) {
                        if e != 0 {
                            acc += e as f64 * x;
                        }
                    }
                    acc * out_scale
                })
                .collect()
        }
    };
    Ok(out)
}

/// Estimator of the source l2 norm from an l1-target output:
/// `sqrt(pi/2) * ||y||_1`.
pub fn l1_norm_estimate(plan: &EmbeddingPlan, y: &[f64]) -> f64 {
    debug_assert_eq!(plan.q, 1);
    debug_assert_eq!(y.len(), plan.d);
    (PI / 2.0).sqrt() * y.iter().map(|v| v.abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn norm2(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn pad_examples() {
        assert_eq!(
            pad_pow2(&[1.0, 2.0, 3.0]).unwrap(),
            vec![1.0, 2.0, 3.0, 0.0]
        );
        let u: Vec<f64> = (0..8).map(|i| i as f64).collect();
        assert_eq!(pad_pow2(&u).unwrap(), u);
        assert_eq!(pad_pow2(&[]), Err(TransformError::Empty));
        let v = [0.3, -1.7, 2.9];
        assert_eq!(norm2(&pad_pow2(&v).unwrap()), norm2(&v));
    }

    #[test]
    fn plan_l2_reference_values() {
        let plan = plan_l2(1 << 20, 0.2, 0.01).unwrap();
        assert_eq!((plan.d, plan.k), (434, 1733));
        assert_eq!(plan.mode, PlanMode::Sparse);
        assert_eq!(plan.q, 2);

        let plan = plan_l2(256, 0.2, 0.01).unwrap();
        assert_eq!(plan.mode, PlanMode::AchlioptasFallback);
    }

    #[test]
    fn plan_l2_rejects_bad_ranges() {
        assert!(plan_l2(100, 0.2, 0.01).is_err());
        assert!(plan_l2(128, 0.0, 0.01).is_err());
        assert!(plan_l2(128, 1.0, 0.01).is_err());
        assert!(plan_l2(128, 0.2, 0.5).is_err());
        assert!(plan_l2(128, 0.2, 0.0).is_err());
    }

    #[test]
    fn plan_l1_reference_values() {
        let plan = plan_l1(1 << 16, 0.5, 0.05, 0.5).unwrap();
        assert_eq!((plan.d, plan.k), (235, 4544));
        assert_eq!(plan.mode, PlanMode::Sparse);
        assert_eq!(plan.q, 1);
        assert_eq!(plan.kappa, Some(0.5));
    }

    #[test]
    fn plan_l1_kappa_near_one_leaves_sparse() {
        // (1-kappa)^-2 blows up the row weight, forcing the dense matrix.
        let plan = plan_l1(1024, 0.5, 0.05, 0.99).unwrap();
        assert_eq!(plan.mode, PlanMode::DenseL1);
        assert_eq!(plan.k, 1024);
    }

    #[test]
    fn plan_l1_no_reduction_when_hopeless() {
        // Tiny n with demanding eps: even kappa -> 0 needs k > n.
        let plan = plan_l1(64, 0.1, 0.05, 0.5).unwrap();
        assert_eq!(plan.mode, PlanMode::NoReduction);
    }

    #[test]
    fn plans_are_pure() {
        let a = plan_l1(1 << 16, 0.5, 0.05, 0.5).unwrap();
        let b = plan_l1(1 << 16, 0.5, 0.05, 0.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kappa_form_flag_changes_row_weight() {
        let a = plan_l1_with_form(1 << 16, 0.5, 0.05, 0.5, KappaForm::SquaredComplement).unwrap();
        let b = plan_l1_with_form(1 << 16, 0.5, 0.05, 0.5, KappaForm::ComplementOfSquare).unwrap();
        // (1-k)^2 = 1/4 vs 1-k^2 = 3/4 at kappa = 1/2: the theorem form
        // demands three times the row weight.
        assert!(a.k > 2 * b.k);
    }

    #[test]
    fn pointset_reference_values() {
        let plan =
            plan_for_pointset(1 << 20, 1000, 0.2, 0.5, 2, 0.5, KappaForm::SquaredComplement)
                .unwrap();
        assert!((plan.delta - 5e-7).abs() < 1e-20);
        // Recompute the display formulas directly.
        let nn = 1e6f64;
        let d = (1.55 * 1.4f64.powi(2) / 0.04 * (3.0 * nn / 0.5).ln()).ceil() as usize;
        assert_eq!(plan.d, d);
        let k = ((7.25 * (6.0 * d as f64 * nn / 0.5).ln()).max(55.0)
            * (2.0 * (1u64 << 20) as f64 * nn / 0.5).ln())
        .ceil() as usize;
        assert_eq!(plan.k, k);

        let two =
            plan_for_pointset(1024, 2, 0.5, 0.2, 2, 0.5, KappaForm::SquaredComplement).unwrap();
        assert!((two.delta - 0.05).abs() < 1e-15);

        assert!(
            plan_for_pointset(1024, 1, 0.5, 0.2, 2, 0.5, KappaForm::SquaredComplement).is_err()
        );
    }

    #[test]
    fn pointset_doubling_adds_predictable_rows() {
        let eps = 0.2;
        let base =
            plan_for_pointset(1 << 20, 500, eps, 0.5, 2, 0.5, KappaForm::SquaredComplement)
                .unwrap();
        let doubled =
            plan_for_pointset(1 << 20, 1000, eps, 0.5, 2, 0.5, KappaForm::SquaredComplement)
                .unwrap();
        let predicted = 1.55 * (1.0 + 2.0 * eps).powi(2) / (eps * eps) * 2.0 * 2.0f64.ln();
        let grown = (doubled.d - base.d) as f64;
        assert!(
            (grown - predicted).abs() <= 1.0,
            "grew {grown}, predicted {predicted}"
        );
    }

    proptest! {
        #[test]
        fn shrinking_eps_never_decreases_d(e1 in 0.05f64..0.95, e2 in 0.05f64..0.95) {
            let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
            let small = plan_l2(1 << 16, lo, 0.01).unwrap();
            let large = plan_l2(1 << 16, hi, 0.01).unwrap();
            prop_assert!(small.d >= large.d);
        }

        #[test]
        fn apply_is_linear(scale in -4.0f64..4.0, seed in any::<u64>()) {
            let plan = EmbeddingPlan::explicit(64, 8, 16, 2, seed).unwrap();
            let built = build_embedding(&plan, &BitSource::new(seed)).unwrap();
            let mut src = BitSource::with_stream(seed, 999);
            let u: Vec<f64> = (0..64).map(|_| src.draw_word(12) as f64 / 2048.0 - 1.0).collect();
            let scaled: Vec<f64> = u.iter().map(|x| x * scale).collect();
            let y1 = apply(&built, &u).unwrap();
            let y2 = apply(&built, &scaled).unwrap();
            let tol = 1e-12 * (1.0 + norm2(&y1)) * (1.0 + scale.abs());
            for (a, b) in y1.iter().zip(&y2) {
                prop_assert!((a * scale - b).abs() <= tol);
            }
        }
    }

    #[test]
    fn sparse_build_bit_accounting_is_exact() {
        let plan = plan_l2(1 << 14, 0.5, 0.01).unwrap().with_seed(5);
        assert_eq!(plan.mode, PlanMode::Sparse);
        let built = build_embedding(&plan, &BitSource::new(5)).unwrap();
        let log2n = plan.n.trailing_zeros() as u64;
        let (mut expect_rows, mut total_iters) = (0u64, 0u64);
        if let ProjectionMatrix::Sparse(p) = &built.projection {
            assert_eq!(p.rows.len(), plan.d);
            for row in &p.rows {
                assert_eq!(row.pattern.indices.len(), plan.k);
                assert_eq!(row.signs.len(), plan.k);
                expect_rows += plan.k as u64 + row.pattern.bits_used;
                total_iters += row.pattern.iterations;
            }
        } else {
            panic!("expected sparse projection");
        }
        assert_eq!(built.report.rows, expect_rows);
        assert_eq!(
            built.report.rows,
            (plan.d * plan.k) as u64 + total_iters * log2n
        );
        assert_eq!(built.report.signs, SignFamily::seed_bits_for(plan.n, plan.l));
        assert_eq!(built.report.fallback, 0);
        assert_eq!(built.report.total(), built.report.signs + built.report.rows);
    }

    #[test]
    fn achlioptas_entry_frequencies() {
        let plan = plan_l2(256, 0.2, 0.01).unwrap().with_seed(11);
        let built = build_embedding(&plan, &BitSource::new(11)).unwrap();
        let ProjectionMatrix::Dense(p) = &built.projection else {
            panic!("expected dense projection");
        };
        assert!((p.scale - 3.0f64.sqrt()).abs() < 1e-15);
        let total = p.entries.len() as f64;
        let plus = p.entries.iter().filter(|&&e| e == 1).count() as f64;
        let minus = p.entries.iter().filter(|&&e| e == -1).count() as f64;
        let zero = p.entries.iter().filter(|&&e| e == 0).count() as f64;
        let sigma_sixth = (total * (1.0 / 6.0) * (5.0 / 6.0)).sqrt();
        let sigma_twothirds = (total * (2.0 / 3.0) * (1.0 / 3.0)).sqrt();
        assert!((plus - total / 6.0).abs() <= 4.0 * sigma_sixth);
        assert!((minus - total / 6.0).abs() <= 4.0 * sigma_sixth);
        assert!((zero - 2.0 * total / 3.0).abs() <= 4.0 * sigma_twothirds);
        assert!(built.report.fallback > 0 && built.report.rows == 0);
    }

    #[test]
    fn dense_l1_entries_are_signs() {
        let plan = plan_l1(1024, 0.5, 0.05, 0.5).unwrap().with_seed(3);
        assert_eq!(plan.mode, PlanMode::DenseL1);
        let built = build_embedding(&plan, &BitSource::new(3)).unwrap();
        let ProjectionMatrix::Dense(p) = &built.projection else {
            panic!("expected dense projection");
        };
        assert!(p.entries.iter().all(|&e| e == 1 || e == -1));
        assert_eq!(p.scale, 1.0);
        assert_eq!(built.report.fallback, (plan.d * plan.n) as u64);
    }

    #[test]
    fn same_seed_builds_identical_embeddings() {
        let plan = plan_l2(4096, 0.5, 0.01).unwrap().with_seed(17);
        let a = build_embedding(&plan, &BitSource::new(17)).unwrap();
        let b = build_embedding(&plan, &BitSource::new(17)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn no_reduction_refuses_to_build() {
        let plan = plan_l1(64, 0.1, 0.05, 0.5).unwrap();
        assert_eq!(
            build_embedding(&plan, &BitSource::new(0)),
            Err(BuildError::NoReduction)
        );
    }

    #[test]
    fn apply_zero_gives_zero() {
        let plan = EmbeddingPlan::explicit(128, 8, 32, 2, 0).unwrap();
        let built = build_embedding(&plan, &BitSource::new(0)).unwrap();
        let y = apply(&built, &vec![0.0; 128]).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
        // Short inputs are padded.
        let y = apply(&built, &vec![0.0; 100]).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
        assert!(apply(&built, &vec![0.0; 129]).is_err());
    }

    #[test]
    fn hd_stage_preserves_norm() {
        use crate::randbits::BitStream;
        let mut src = BitSource::new(2);
        let fam = kwise::build_sign_family(1024, 8, &mut src).unwrap();
        let mut u: Vec<f64> = (0..1024)
            .map(|_| src.draw_word(20) as f64 / (1u64 << 19) as f64 - 1.0)
            .collect();
        let before = norm2(&u);
        for (x, &s) in u.iter_mut().zip(fam.signs()) {
            *x *= s as f64;
        }
        wht::wht_in_place(&mut u).unwrap();
        assert!((norm2(&u) - before).abs() <= 1e-10 * before);
    }

    #[test]
    fn mean_squared_norm_is_one() {
        // E ||f_2(u)||_2^2 = 1 for unit u; check over 2000 seeds.
        let n = 256;
        let u = {
            let mut v = vec![0.0; n];
            v[3] = 0.6;
            v[100] = 0.8;
            v
        };
        let seeds = 2000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for s in 0..seeds {
            let plan = EmbeddingPlan::explicit(n, 16, 64, 2, s).unwrap();
            let built = build_embedding(&plan, &BitSource::new(s)).unwrap();
            let y = apply(&built, &u).unwrap();
            let sq = y.iter().map(|v| v * v).sum::<f64>();
            sum += sq;
            sum_sq += sq * sq;
        }
        let mean = sum / seeds as f64;
        let var = (sum_sq - seeds as f64 * mean * mean) / (seeds - 1) as f64;
        let stderr = (var / seeds as f64).sqrt();
        assert!(
            (mean - 1.0).abs() <= 4.0 * stderr,
            "mean {mean}, stderr {stderr}"
        );
    }

    #[test]
    fn l1_estimate_basics() {
        let plan = plan_l1(1024, 0.5, 0.05, 0.5).unwrap();
        assert_eq!(l1_norm_estimate(&plan, &vec![0.0; plan.d]), 0.0);
        let y: Vec<f64> = (0..plan.d).map(|i| (i as f64 * 0.7).sin()).collect();
        let scaled: Vec<f64> = y.iter().map(|v| v * -2.5).collect();
        let a = l1_norm_estimate(&plan, &y);
        let b = l1_norm_estimate(&plan, &scaled);
        assert!((b - 2.5 * a).abs() <= 1e-12 * b.abs());
    }

    #[test]
    fn explicit_plan_validation() {
        assert!(EmbeddingPlan::explicit(100, 8, 16, 2, 0).is_err());
        assert!(EmbeddingPlan::explicit(64, 8, 32, 2, 0).is_err()); // 3k > n
        assert!(EmbeddingPlan::explicit(64, 8, 16, 3, 0).is_err());
        assert!(EmbeddingPlan::explicit(64, 0, 16, 2, 0).is_err());
    }

    #[test]
    fn estimated_bits_close_to_realized() {
        let plan = plan_l2(1 << 14, 0.5, 0.01).unwrap().with_seed(100);
        let built = build_embedding(&plan, &BitSource::new(100)).unwrap();
        let estimate = plan.estimated_bits();
        let realized = built.report.total() as f64;
        // The only randomness in the estimate is the iteration count T.
        assert!((realized - estimate).abs() / estimate < 0.05);
    }
}
