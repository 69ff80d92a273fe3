//! Local drift-field estimation and the standardized-deviation score ζ.
//!
//! At an anchor point the field is a per-coordinate Gaussian fitted to the
//! deltas of nearby records, weighted by inverse distance
//! `w_j ∝ (d_j + ε)^-p`. A query delta is scored by its mean absolute
//! standardized offset over the `k` coordinates where the field mean is
//! largest in magnitude.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::index::{search, Metric, Neighbor, Search};
use crate::store::{Corpus, RecordRef};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldParams {
    /// Neighbor count cap.
    pub top_n: usize,
    /// Maximum neighbor distance (L2).
    pub d_max: f64,
    /// IDW exponent.
    pub p: f64,
    /// IDW regularizer.
    pub epsilon: f64,
    /// Floor on per-coordinate deviations.
    pub sigma_min: f64,
    /// Number of coordinates averaged by ζ.
    pub top_n_zeta: usize,
    /// Minimum number of usable deltas for a defined field.
    pub min_support: usize,
}

impl Default for FieldParams {
    fn default() -> Self {
        Self {
            top_n: 10,
            d_max: 0.3,
            p: 1.0,
            epsilon: 1e-8,
            sigma_min: 1e-6,
            top_n_zeta: 50,
            min_support: 2,
        }
    }
}

impl FieldParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if self.top_n == 0 {
            return bad("top_n must be at least 1".into());
        }
        if !(self.d_max > 0.0) {
            return bad(format!("d_max must be positive, got {}", self.d_max));
        }
        if !(self.p >= 0.0) {
            return bad(format!("IDW exponent must be non-negative, got {}", self.p));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.sigma_min > 0.0) {
            return bad(format!("sigma_min must be positive, got {}", self.sigma_min));
        }
        if self.top_n_zeta == 0 {
            return bad("top_n_zeta must be at least 1".into());
        }
        if self.min_support == 0 {
            return bad("min_support must be at least 1".into());
        }
        Ok(())
    }

    pub fn validate_for_dim(&self, dim: usize) -> Result<()> {
        self.validate()?;
        if self.top_n_zeta > dim {
            return Err(Error::param(format!(
                "top_n_zeta {} exceeds dimension {dim}",
                self.top_n_zeta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldStatus {
    Defined,
    OutOfCorpus,
    InsufficientStatistics,
}

/// The fitted local Gaussian at one anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalField {
    pub status: FieldStatus,
    /// Weighted mean delta; empty unless `status` is `Defined`.
    pub mu: Vec<f64>,
    /// Floored weighted deviation; empty unless `status` is `Defined`.
    pub sigma_tilde: Vec<f64>,
    /// Number of neighbor deltas used.
    pub support: usize,
    /// The neighbors behind the estimate, nearest first.
    pub neighbors: Vec<Neighbor>,
    /// Normalized IDW weights, parallel to `neighbors`.
    pub weights: Vec<f64>,
}

impl LocalField {
    pub fn is_defined(&self) -> bool {
        self.status == FieldStatus::Defined
    }

    fn require_defined(&self) -> Result<()> {
        if self.is_defined() {
            Ok(())
        } else {
            Err(Error::FieldUndefined(self.status))
        }
    }
}

/// Normalized weights `(d + ε)^-p / Σ`.
pub fn idw_weights(distances: &[f64], p: f64, epsilon: f64) -> Vec<f64> {
    let raw: Vec<f64> = distances.iter().map(|d| (d + epsilon).powf(-p)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Weighted per-coordinate mean and floored deviation of `deltas`.
pub fn weighted_gaussian<D: AsRef<[f64]>>(
    deltas: &[D],
    weights: &[f64],
    sigma_min: f64,
) -> (Vec<f64>, Vec<f64>) {
    let dim = deltas.first().map_or(0, |d| d.as_ref().len());
    let mut mu = vec![0.0; dim];
    for (d, w) in deltas.iter().zip(weights) {
        for (m, x) in mu.iter_mut().zip(d.as_ref()) {
            *m += w * x;
        }
    }
    let mut var = vec![0.0; dim];
    for (d, w) in deltas.iter().zip(weights) {
        for ((v, x), m) in var.iter_mut().zip(d.as_ref()).zip(&mu) {
            *v += w * (x - m) * (x - m);
        }
    }
    let sigma = var.into_iter().map(|v| v.sqrt().max(sigma_min)).collect();
    (mu, sigma)
}

/// The `top_n` nearest records carrying a delta within `d_max`.
pub(crate) fn delta_neighbors(
    corpus: &Corpus,
    anchor: &[f64],
    params: &FieldParams,
    exclude: Option<RecordRef>,
) -> Result<Vec<Neighbor>> {
    let opts = Search::new(params.top_n, Metric::L2)
        .within(params.d_max)
        .with_delta()
        .excluding(exclude);
    search(corpus, anchor, &opts)
}

pub(crate) fn delta_f64(corpus: &Corpus, r: RecordRef) -> Vec<f64> {
    corpus
        .record(r)
        .delta
        .expect("neighbor search only returns records with a delta")
        .iter()
        .map(|&x| x as f64)
        .collect()
}

/// Estimates the field at an arbitrary point.
pub fn estimate_field(corpus: &Corpus, anchor: &[f64], params: &FieldParams) -> Result<LocalField> {
    estimate_field_excluding(corpus, anchor, params, None)
}

/// Estimates the field at a stored record, leaving that record out of its
/// own estimate.
pub fn estimate_field_at_record(
    corpus: &Corpus,
    record: RecordRef,
    params: &FieldParams,
) -> Result<LocalField> {
    let anchor: Vec<f64> = corpus.record(record).vector.iter().map(|&x| x as f64).collect();
    estimate_field_excluding(corpus, &anchor, params, Some(record))
}

pub fn estimate_field_excluding(
    corpus: &Corpus,
    anchor: &[f64],
    params: &FieldParams,
    exclude: Option<RecordRef>,
) -> Result<LocalField> {
    params.validate()?;
    check_dim(corpus.dim(), anchor.len())?;
    let neighbors = delta_neighbors(corpus, anchor, params, exclude)?;
    let support = neighbors.len();
    let status = if support == 0 {
        FieldStatus::OutOfCorpus
    } else if support < params.min_support {
        FieldStatus::InsufficientStatistics
    } else {
        FieldStatus::Defined
    };
    if status != FieldStatus::Defined {
        return Ok(LocalField {
            status,
            mu: Vec::new(),
            sigma_tilde: Vec::new(),
            support,
            neighbors,
            weights: Vec::new(),
        });
    }
    let distances: Vec<f64> = neighbors.iter().map(|n| n.distance).collect();
    let weights = idw_weights(&distances, params.p, params.epsilon);
    let deltas: Vec<Vec<f64>> = neighbors.iter().map(|n| delta_f64(corpus, n.record)).collect();
    let (mu, sigma_tilde) = weighted_gaussian(&deltas, &weights, params.sigma_min);
    Ok(LocalField { status, mu, sigma_tilde, support, neighbors, weights })
}

/// Indices of the `k` largest `|values[i]|`, ties by ascending index.
pub fn top_k_by_magnitude(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

fn check_k(k: usize, dim: usize) -> Result<()> {
    if k == 0 || k > dim {
        return Err(Error::param(format!("k must be in 1..={dim}, got {k}")));
    }
    Ok(())
}

/// Mean absolute standardized deviation of `delta` over the `k`
/// coordinates with largest `|μ_i|`.
pub fn zeta(delta: &[f64], field: &LocalField, k: usize) -> Result<f64> {
    field.require_defined()?;
    check_dim(field.mu.len(), delta.len())?;
    check_k(k, delta.len())?;
    let coords = top_k_by_magnitude(&field.mu, k);
    let total: f64 = coords
        .iter()
        .map(|&i| ((delta[i] - field.mu[i]) / field.sigma_tilde[i]).abs())
        .sum();
    Ok(total / k as f64)
}

/// Mean `|μ_i| / σ̃_i` over the `k` largest-`|μ_i|` coordinates: how
/// clearly the local drift stands out from its spread.
pub fn significance(field: &LocalField, k: usize) -> Result<f64> {
    field.require_defined()?;
    check_k(k, field.mu.len())?;
    let coords = top_k_by_magnitude(&field.mu, k);
    let total: f64 = coords.iter().map(|&i| field.mu[i].abs() / field.sigma_tilde[i]).sum();
    Ok(total / k as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkStep {
    pub point: Vec<f64>,
    pub significance: Option<f64>,
    pub status: FieldStatus,
}

/// Follows the field from `start`: `s_{n+1} = s_n + μ(s_n)`. Stops after
/// `steps` moves or at the first point whose field is not defined; that
/// point is recorded with its status.
pub fn field_walk(
    corpus: &Corpus,
    start: &[f64],
    steps: usize,
    params: &FieldParams,
) -> Result<Vec<WalkStep>> {
    if steps == 0 {
        return Err(Error::param("steps must be at least 1"));
    }
    let k = params.top_n_zeta.min(start.len());
    let mut point = start.to_vec();
    let mut out = Vec::with_capacity(steps + 1);
    for n in 0..=steps {
        let field = estimate_field(corpus, &point, params)?;
        if !field.is_defined() {
            out.push(WalkStep { point, significance: None, status: field.status });
            break;
        }
        let sig = significance(&field, k)?;
        let next: Vec<f64> = point.iter().zip(&field.mu).map(|(x, m)| x + m).collect();
        out.push(WalkStep { point, significance: Some(sig), status: field.status });
        if n == steps {
            break;
        }
        point = next;
    }
    Ok(out)
}
