//! Near-G-optimal designs over finite vector sets.
//!
//! For weights `π` over vectors `v_a`, `V(π) = Σ_a π(a) v_a v_aᵀ` and the
//! Kiefer–Wolfowitz gap is `g(π) = max_a v_aᵀ V(π)⁻¹ v_a`. Vectors that do not
//! span their ambient space are first mapped onto an orthonormal basis of
//! their span, so every quantity here lives in `r = rank` coordinates.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::env::RANK_TOL;

/// Weight-sum tolerance for a [`Design`].
pub const WEIGHT_SUM_TOL: f64 = 1e-9;
// pivots of V below this fraction of its largest diagonal entry count as singular
const SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("design weights are invalid: {0}")]
    InvalidWeights(String),
    #[error("moment matrix is singular on the span of the vectors")]
    Singular,
    #[error("Frank-Wolfe stopped after {iterations} iterations with g = {gap}, above the certified bound {bound}")]
    NotConverged {
        iterations: usize,
        gap: f64,
        bound: f64,
    },
    #[error("design support {support} exceeds the bound {bound}")]
    SupportTooLarge { support: usize, bound: f64 },
    #[error("invalid input: {0}")]
    Input(String),
}

/// Probability weights over a list of vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    weights: Vec<f64>,
    support: Vec<usize>,
}

impl Design {
    pub fn new(weights: Vec<f64>) -> Result<Self, DesignError> {
        if weights.is_empty() {
            return Err(DesignError::InvalidWeights("no weights".into()));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(DesignError::InvalidWeights(format!("weight {i} = {w}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(DesignError::InvalidWeights(format!("weights sum to {sum}")));
        }
        let support = weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(i, _)| i)
            .collect();
        Ok(Self { weights, support })
    }

    /// Uniform weights on `support`, zero elsewhere.
    pub fn uniform_on(n: usize, support: &[usize]) -> Result<Self, DesignError> {
        if support.is_empty() {
            return Err(DesignError::InvalidWeights("empty support".into()));
        }
        let mut w = vec![0.0; n];
        for &i in support {
            w[i] = 1.0 / support.len() as f64;
        }
        Self::new(w)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Orthonormal reparameterization of a vector set onto its span.
#[derive(Debug, Clone)]
pub struct SpanReduction {
    rank: usize,
    // ambient_dim × rank, orthonormal columns
    basis: DMatrix<f64>,
    reduced: Vec<Vec<f64>>,
}

impl SpanReduction {
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Coordinates of each input vector in the span basis.
    pub fn reduced_vectors(&self) -> &[Vec<f64>] {
        &self.reduced
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Coordinates of an arbitrary ambient vector after projection onto the span.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(v);
        (self.basis.transpose() * v).iter().copied().collect()
    }

    /// Maps reduced coordinates back to the ambient space.
    pub fn lift(&self, coords: &[f64]) -> Vec<f64> {
        let c = DVector::from_column_slice(coords);
        (&self.basis * c).iter().copied().collect()
    }
}

/// Projects `vectors` onto an orthonormal basis of their span (numeric rank at relative `tol`).
pub fn reduce_to_span(vectors: &[Vec<f64>], tol: f64) -> SpanReduction {
    let n = vectors.len();
    let d = vectors.first().map_or(0, Vec::len);
    if n == 0 || d == 0 {
        return SpanReduction {
            rank: 0,
            basis: DMatrix::zeros(d, 0),
            reduced: vec![Vec::new(); n],
        };
    }
    let m = DMatrix::from_fn(n, d, |i, j| vectors[i][j]);
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let largest = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| largest > 0.0 && svd.singular_values[i] > tol * largest)
        .collect();
    keep.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .expect("finite singular values")
    });
    let rank = keep.len();
    let basis = DMatrix::from_fn(d, rank, |i, k| v_t[(keep[k], i)]);
    let reduced = vectors
        .iter()
        .map(|v| {
            let v = DVector::from_column_slice(v);
            (basis.transpose() * v).iter().copied().collect()
        })
        .collect();
    SpanReduction {
        rank,
        basis,
        reduced,
    }
}

/// `Σ_a w_a x_a x_aᵀ` in reduced coordinates.
pub(crate) fn moment_matrix(reduced: &[Vec<f64>], weights: &[f64]) -> DMatrix<f64> {
    let r = reduced.first().map_or(0, Vec::len);
    let mut v = DMatrix::zeros(r, r);
    for (x, &w) in reduced.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        for i in 0..r {
            let wi = w * x[i];
            for j in 0..r {
                v[(i, j)] += wi * x[j];
            }
        }
    }
    v
}

/// Cholesky factor of `v`, rejecting numerically singular matrices.
pub(crate) fn checked_cholesky(v: DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>, DesignError> {
    let scale = (0..v.nrows()).map(|i| v[(i, i)]).fold(0.0, f64::max);
    if scale <= 0.0 {
        return Err(DesignError::Singular);
    }
    let chol = v.cholesky().ok_or(DesignError::Singular)?;
    let l = chol.l_dirty();
    if (0..l.nrows()).any(|i| l[(i, i)] * l[(i, i)] <= SINGULAR_TOL * scale) {
        return Err(DesignError::Singular);
    }
    Ok(chol)
}

struct Evaluation {
    norms: Vec<f64>,
    logdet: f64,
}

fn evaluate(reduced: &[Vec<f64>], weights: &[f64]) -> Result<Evaluation, DesignError> {
    let r = reduced.first().map_or(0, Vec::len);
    if r == 0 {
        return Err(DesignError::Singular);
    }
    let chol = checked_cholesky(moment_matrix(reduced, weights))?;
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    let norms = reduced
        .iter()
        .map(|x| {
            let xv = DVector::from_column_slice(x);
            let y = chol.solve(&xv);
            xv.dot(&y)
        })
        .collect();
    Ok(Evaluation { norms, logdet })
}

fn max_norm(norms: &[f64]) -> f64 {
    norms.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// `g(π)` evaluated in span coordinates of already-reduced vectors.
pub(crate) fn gap_reduced(reduced: &[Vec<f64>], weights: &[f64]) -> Result<f64, DesignError> {
    evaluate(reduced, weights).map(|e| max_norm(&e.norms))
}

/// Normalized norms `‖v_a‖²_{V(π)⁻¹}` for every vector, in span coordinates.
pub fn design_norms(vectors: &[Vec<f64>], design: &Design) -> Result<Vec<f64>, DesignError> {
    check_lengths(vectors, design)?;
    let red = reduce_to_span(vectors, RANK_TOL);
    evaluate(red.reduced_vectors(), design.weights()).map(|e| e.norms)
}

/// Kiefer–Wolfowitz gap `g(π) = max_a v_aᵀ V(π)⁻¹ v_a` on the span of `vectors`.
pub fn kw_gap(vectors: &[Vec<f64>], design: &Design) -> Result<f64, DesignError> {
    design_norms(vectors, design).map(|n| max_norm(&n))
}

/// `log det V(π)` on the span of `vectors`.
pub fn log_det(vectors: &[Vec<f64>], design: &Design) -> Result<f64, DesignError> {
    check_lengths(vectors, design)?;
    let red = reduce_to_span(vectors, RANK_TOL);
    evaluate(red.reduced_vectors(), design.weights()).map(|e| e.logdet)
}

fn check_lengths(vectors: &[Vec<f64>], design: &Design) -> Result<(), DesignError> {
    if vectors.len() != design.len() {
        return Err(DesignError::Input(format!(
            "{} vectors but {} weights",
            vectors.len(),
            design.len()
        )));
    }
    Ok(())
}

/// `max(log log d, 0)`, zero for `d ≤ e`.
pub fn clamped_loglog(d: usize) -> f64 {
    if d <= 1 {
        return 0.0;
    }
    (d as f64).ln().ln().max(0.0)
}

/// Support bound `4·d·max(log log d, 0) + 16`.
pub fn support_bound(d: usize) -> f64 {
    4.0 * d as f64 * clamped_loglog(d) + 16.0
}

/// Outcome of [`frank_wolfe_report`].
#[derive(Debug, Clone)]
pub struct FwReport {
    pub design: Design,
    /// Certified `g(π)` of the returned design.
    pub gap: f64,
    pub rank: usize,
    pub iterations: usize,
    /// `log det V(π)` before each ascent step and after the last one.
    pub logdet_trace: Vec<f64>,
}

/// Frank–Wolfe design certified to `g(π) ≤ 2·d_span` within the support bound.
pub fn frank_wolfe_design(
    vectors: &[Vec<f64>],
    d_span: usize,
    max_iters: usize,
    tol: f64,
) -> Result<Design, DesignError> {
    frank_wolfe_report(vectors, d_span, max_iters, tol).map(|r| r.design)
}

/// Frank–Wolfe ascent on `log det V(π)` with away steps, from uniform weights.
///
/// Iterates until `g(π) ≤ (1 + tol)·r`, then drops weights below `1/(4|A|²)`,
/// renormalizes and re-certifies. The returned design always satisfies
/// `g(π) ≤ 2·d_span` and `|supp π| ≤ 4·d_span·max(log log d_span, 0) + 16`.
pub fn frank_wolfe_report(
    vectors: &[Vec<f64>],
    d_span: usize,
    max_iters: usize,
    tol: f64,
) -> Result<FwReport, DesignError> {
    if vectors.is_empty() {
        return Err(DesignError::Input("no vectors".into()));
    }
    if max_iters == 0 {
        return Err(DesignError::Input("max_iters must be at least 1".into()));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(DesignError::Input(format!("tol must be positive, got {tol}")));
    }
    let red = reduce_to_span(vectors, RANK_TOL);
    let r = red.rank();
    if r == 0 {
        return Err(DesignError::Singular);
    }
    if r > d_span {
        return Err(DesignError::Input(format!(
            "vectors span {r} dimensions, more than d_span = {d_span}"
        )));
    }
    let x = red.reduced_vectors();
    let n = x.len();
    let bound = 2.0 * d_span as f64;
    let target = ((1.0 + tol) * r as f64).min(bound);

    let mut w = vec![1.0 / n as f64; n];
    let (iterations, logdet_trace) = ascend(x, &mut w, None, max_iters, target)?;
    let gap = gap_reduced(x, &w)?;
    if gap > bound {
        return Err(DesignError::NotConverged {
            iterations,
            gap,
            bound,
        });
    }

    let mut weights = w.clone();
    let mut gap_final = gap;
    let cutoff = 1.0 / (4.0 * (n * n) as f64);
    if let Some(pruned) = prune(&w, cutoff) {
        if let Ok(g) = gap_reduced(x, &pruned) {
            if g <= bound {
                weights = pruned;
                gap_final = g;
            }
        }
    }

    let max_support = support_bound(d_span);
    let mut support = count_support(&weights);
    while support as f64 > max_support {
        // drop the lightest point, re-optimize on what is left
        let mut allowed: Vec<bool> = weights.iter().map(|&v| v > 0.0).collect();
        let lightest = (0..n)
            .filter(|&i| allowed[i])
            .min_by(|&a, &b| weights[a].partial_cmp(&weights[b]).expect("finite"))
            .expect("non-empty support");
        allowed[lightest] = false;
        let mut trial = weights.clone();
        trial[lightest] = 0.0;
        renormalize(&mut trial);
        ascend(x, &mut trial, Some(&allowed), max_iters, target).ok();
        match gap_reduced(x, &trial) {
            Ok(g) if g <= bound => {
                weights = trial;
                gap_final = g;
                support = count_support(&weights);
            }
            _ => {
                return Err(DesignError::SupportTooLarge {
                    support,
                    bound: max_support,
                })
            }
        }
    }

    Ok(FwReport {
        design: Design::new(weights)?,
        gap: gap_final,
        rank: r,
        iterations,
        logdet_trace,
    })
}

fn count_support(w: &[f64]) -> usize {
    w.iter().filter(|&&v| v > 0.0).count()
}

fn renormalize(w: &mut [f64]) {
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
}

fn prune(w: &[f64], cutoff: f64) -> Option<Vec<f64>> {
    if !w.iter().any(|&v| v > 0.0 && v < cutoff) {
        return None;
    }
    let mut out: Vec<f64> = w.iter().map(|&v| if v < cutoff { 0.0 } else { v }).collect();
    renormalize(&mut out);
    Some(out)
}

/// Wolfe–Atwood iterations with exact line search on `log det`. Toward steps
/// only move onto `allowed` points when a mask is given.
fn ascend(
    x: &[Vec<f64>],
    w: &mut [f64],
    allowed: Option<&[bool]>,
    max_iters: usize,
    target: f64,
) -> Result<(usize, Vec<f64>), DesignError> {
    let r = x[0].len() as f64;
    let mut trace = Vec::new();
    for it in 0..max_iters {
        let eval = evaluate(x, w)?;
        trace.push(eval.logdet);
        let norms = &eval.norms;
        if max_norm(norms) <= target {
            return Ok((it, trace));
        }
        let candidates = (0..x.len()).filter(|&i| allowed.is_none_or(|m| m[i]));
        let j = candidates
            .max_by(|&a, &b| norms[a].partial_cmp(&norms[b]).expect("finite"))
            .expect("non-empty candidate set");
        let k = (0..x.len())
            .filter(|&i| w[i] > 0.0)
            .min_by(|&a, &b| norms[a].partial_cmp(&norms[b]).expect("finite"))
            .expect("non-empty support");
        let toward_gain = norms[j] - r;
        let away_gain = r - norms[k];
        if toward_gain <= 0.0 && away_gain <= 0.0 {
            return Ok((it, trace));
        }
        if toward_gain >= away_gain {
            let xj = norms[j];
            let gamma = if xj > 1.0 { (xj / r - 1.0) / (xj - 1.0) } else { 0.0 };
            if gamma <= 0.0 {
                return Ok((it, trace));
            }
            w.iter_mut().for_each(|v| *v *= 1.0 - gamma);
            w[j] += gamma;
        } else {
            let xk = norms[k];
            let alpha_max = if w[k] < 1.0 { w[k] / (1.0 - w[k]) } else { f64::INFINITY };
            let alpha_opt = if xk > 1.0 {
                (r - xk) / (r * (xk - 1.0))
            } else {
                f64::INFINITY
            };
            let alpha = alpha_opt.min(alpha_max);
            if !alpha.is_finite() || alpha <= 0.0 {
                return Ok((it, trace));
            }
            let wk = w[k];
            w.iter_mut().for_each(|v| *v *= 1.0 + alpha);
            if alpha >= alpha_max {
                w[k] = 0.0;
            } else {
                w[k] = wk * (1.0 + alpha) - alpha;
            }
            renormalize(w);
        }
    }
    let eval = evaluate(x, w)?;
    trace.push(eval.logdet);
    Ok((max_iters, trace))
}
