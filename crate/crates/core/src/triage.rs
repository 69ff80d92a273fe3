//! Grounded / ungrounded / unsure triage of sentence-pair transitions.
//!
//! A pair `(s1, s2)` is scored by ζ of its delta `s2 - s1` against the field
//! at `s1`. The nearest stored transition to `s1` provides a reference ζ that
//! gates noisy regions: when the reference itself deviates beyond
//! `zeta_high` the pair is rejected instead of labeled.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::field::{estimate_field, estimate_field_at_record, zeta, FieldParams, FieldStatus};
use crate::index::{cosine_distance, l2_distance, search, Metric, Search};
use crate::store::{Corpus, RecordRef, Shard};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Deviation means hallucination; undefined fields are left unsure.
    #[default]
    Hallucination,
    /// Deviation means novelty; undefined fields count as novel.
    Novelty,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hallucination" => Ok(Mode::Hallucination),
            "novelty" => Ok(Mode::Novelty),
            other => Err(Error::param(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriageParams {
    pub zeta_low: f64,
    pub zeta_high: f64,
    pub mode: Mode,
}

impl Default for TriageParams {
    fn default() -> Self {
        Self { zeta_low: 1.0, zeta_high: 3.0, mode: Mode::Hallucination }
    }
}

impl TriageParams {
    pub fn new(zeta_low: f64, zeta_high: f64, mode: Mode) -> Self {
        Self { zeta_low, zeta_high, mode }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.zeta_low >= 0.0 && self.zeta_low <= self.zeta_high) {
            return Err(Error::param(format!(
                "need 0 <= zeta_low <= zeta_high, got ({}, {})",
                self.zeta_low, self.zeta_high
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Positive,
    Negative,
    Unsure,
    /// The reference transition sits in a region too noisy to trust.
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Truth {
    #[serde(rename = "pos")]
    Pos,
    #[serde(rename = "neg")]
    Neg,
}

/// One evaluation example, as read from JSON Lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledPair {
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Truth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub zeta: Option<f64>,
    pub status: FieldStatus,
    /// Records behind the field estimate at `s1`.
    pub evidence: Vec<RecordRef>,
}

/// ζ of `s2 - s1` against the field at `s1`; absent when the field is not
/// defined there.
pub fn score_pair(corpus: &Corpus, s1: &[f64], s2: &[f64], params: &FieldParams) -> Result<PairScore> {
    check_dim(s1.len(), s2.len())?;
    let field = estimate_field(corpus, s1, params)?;
    let delta: Vec<f64> = s2.iter().zip(s1).map(|(b, a)| b - a).collect();
    let z = if field.is_defined() { Some(zeta(&delta, &field, params.top_n_zeta)?) } else { None };
    Ok(PairScore {
        zeta: z,
        status: field.status,
        evidence: field.neighbors.iter().map(|n| n.record).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub record: RecordRef,
    pub zeta: Option<f64>,
    pub status: FieldStatus,
}

/// The stored transition nearest to `s1` (L2, records with a delta), scored
/// against the field at its own position with itself left out.
pub fn reference_zeta(corpus: &Corpus, s1: &[f64], params: &FieldParams) -> Result<Reference> {
    let nearest = search(corpus, s1, &Search::new(1, Metric::L2).with_delta())?;
    let record = nearest.first().ok_or(Error::StoreEmpty)?.record;
    let field = estimate_field_at_record(corpus, record, params)?;
    let z = if field.is_defined() {
        let delta: Vec<f64> =
            corpus.record(record).delta.expect("has delta").iter().map(|&x| x as f64).collect();
        Some(zeta(&delta, &field, params.top_n_zeta)?)
    } else {
        None
    };
    Ok(Reference { record, zeta: z, status: field.status })
}

/// Three-way labeling with reference gating.
///
/// Novelty mode labels pairs without a defined field Positive. Otherwise a
/// reference ζ above `zeta_high` rejects the pair; a test ζ above
/// `zeta_high` is Positive; test and reference both below `zeta_low` is
/// Negative; anything else is Unsure.
pub fn classify(
    zeta_test: Option<f64>,
    zeta_ref: Option<f64>,
    status_test: FieldStatus,
    params: &TriageParams,
) -> Result<Label> {
    params.validate()?;
    let defined = status_test == FieldStatus::Defined;
    if !defined && params.mode == Mode::Novelty {
        return Ok(Label::Positive);
    }
    if zeta_ref.is_some_and(|r| r > params.zeta_high) {
        return Ok(Label::Rejected);
    }
    let Some(zt) = zeta_test.filter(|_| defined) else {
        return Ok(Label::Unsure);
    };
    if zt > params.zeta_high {
        Ok(Label::Positive)
    } else if zt < params.zeta_low && zeta_ref.is_some_and(|r| r < params.zeta_low) {
        Ok(Label::Negative)
    } else {
        Ok(Label::Unsure)
    }
}

/// Two-threshold labeling of a plain distance score, without reference
/// gating. Used for the nearest-neighbor baselines.
pub fn classify_score(score: f64, params: &TriageParams) -> Result<Label> {
    params.validate()?;
    Ok(if score > params.zeta_high {
        Label::Positive
    } else if score < params.zeta_low {
        Label::Negative
    } else {
        Label::Unsure
    })
}

/// Threshold-independent scores of one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub zeta_test: Option<f64>,
    pub status_test: FieldStatus,
    pub zeta_ref: Option<f64>,
    pub status_ref: Option<FieldStatus>,
    pub truth: Option<Truth>,
    pub reference: Option<RecordRef>,
    pub evidence: Vec<RecordRef>,
    /// Whether the reference gate applies (false for baseline scores).
    pub gated: bool,
}

impl ScoredPair {
    pub fn label(&self, params: &TriageParams) -> Result<Label> {
        if self.gated {
            classify(self.zeta_test, self.zeta_ref, self.status_test, params)
        } else {
            match self.zeta_test {
                Some(s) => classify_score(s, params),
                None => classify(None, None, self.status_test, params),
            }
        }
    }

    /// Continuous score for ranking metrics; an undefined field ranks as
    /// maximally deviant.
    pub fn rank_score(&self) -> f64 {
        self.zeta_test.unwrap_or(f64::INFINITY)
    }
}

/// Scores every example against the field (in parallel).
pub fn score_examples(
    corpus: &Corpus,
    pairs: &[LabeledPair],
    params: &FieldParams,
) -> Result<Vec<ScoredPair>> {
    params.validate_for_dim(corpus.dim())?;
    pairs
        .par_iter()
        .map(|pair| {
            check_dim(corpus.dim(), pair.s1.len())?;
            let test = score_pair(corpus, &pair.s1, &pair.s2, params)?;
            let reference = reference_zeta(corpus, &pair.s1, params)?;
            Ok(ScoredPair {
                zeta_test: test.zeta,
                status_test: test.status,
                zeta_ref: reference.zeta,
                status_ref: Some(reference.status),
                truth: pair.label,
                reference: Some(reference.record),
                evidence: test.evidence,
                gated: true,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageOutcome {
    pub index: usize,
    pub label: Label,
    pub truth: Option<Truth>,
    pub zeta_test: Option<f64>,
    pub zeta_ref: Option<f64>,
    pub status_test: FieldStatus,
    pub status_ref: Option<FieldStatus>,
    pub reference: Option<RecordRef>,
    pub evidence: Vec<RecordRef>,
}

pub fn triage(scored: &[ScoredPair], params: &TriageParams) -> Result<Vec<TriageOutcome>> {
    scored
        .iter()
        .enumerate()
        .map(|(index, s)| {
            Ok(TriageOutcome {
                index,
                label: s.label(params)?,
                truth: s.truth,
                zeta_test: s.zeta_test,
                zeta_ref: s.zeta_ref,
                status_test: s.status_test,
                status_ref: s.status_ref,
                reference: s.reference,
                evidence: s.evidence.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub unsure: u64,
    pub rejected: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_, unsure: 0, rejected: 0 }
    }

    pub fn add(&mut self, label: Label, truth: Truth) {
        match (label, truth) {
            (Label::Positive, Truth::Pos) => self.tp += 1,
            (Label::Positive, Truth::Neg) => self.fp += 1,
            (Label::Negative, Truth::Neg) => self.tn += 1,
            (Label::Negative, Truth::Pos) => self.fn_ += 1,
            (Label::Unsure, _) => self.unsure += 1,
            (Label::Rejected, _) => self.rejected += 1,
        }
    }

    pub fn covered(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Labeled fraction of non-rejected examples.
    pub fn coverage(&self) -> Option<f64> {
        ratio(self.covered(), self.covered() + self.unsure)
    }

    /// Error rate among labeled examples.
    pub fn risk(&self) -> Option<f64> {
        ratio(self.fp + self.fn_, self.covered())
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> Option<f64> {
        let (p, r) = (self.precision()?, self.recall()?);
        (p + r > 0.0).then(|| 2.0 * p * r / (p + r))
    }

    pub fn mcc(&self) -> Option<f64> {
        let (tp, tn, fp, fn_) = (self.tp as f64, self.tn as f64, self.fp as f64, self.fn_ as f64);
        let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
        (den > 0.0).then(|| (tp * tn - fp * fn_) / den)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn confusion<'a>(outcomes: impl IntoIterator<Item = &'a TriageOutcome>) -> ConfusionCounts {
    let mut counts = ConfusionCounts::default();
    for o in outcomes {
        if let Some(truth) = o.truth {
            counts.add(o.label, truth);
        }
    }
    counts
}

/// Lower clamp of the LogLoss probability mapping.
pub const PROB_EPS: f64 = 1e-6;

/// `p(ungrounded) = clamp(ζ / zeta_high, ε, 1 - ε)`.
pub fn zeta_probability(score: f64, zeta_high: f64) -> f64 {
    (score / zeta_high).clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// ROC AUC by the rank-sum statistic; ties count one half.
pub fn roc_auc(samples: &[(f64, Truth)]) -> Option<f64> {
    let n_pos = samples.iter().filter(|s| s.1 == Truth::Pos).count();
    let n_neg = samples.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut sorted: Vec<&(f64, Truth)> = samples.iter().collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1].0 == sorted[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mean_rank = (i + j + 2) as f64 / 2.0;
        rank_sum += mean_rank * sorted[i..=j].iter().filter(|s| s.1 == Truth::Pos).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

pub fn log_loss(samples: &[(f64, Truth)], zeta_high: f64) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let total: f64 = samples
        .iter()
        .map(|&(s, t)| {
            let p = zeta_probability(s, zeta_high);
            match t {
                Truth::Pos => -p.ln(),
                Truth::Neg => -(1.0 - p).ln(),
            }
        })
        .sum();
    Some(total / samples.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub counts: ConfusionCounts,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub mcc: Option<f64>,
    pub auc: Option<f64>,
    pub log_loss: Option<f64>,
    pub coverage: Option<f64>,
}

/// Metrics from confusion counts plus the continuous scores of the covered
/// examples (for AUC and LogLoss). Undefined ratios are `None`.
pub fn compute_metrics(
    counts: &ConfusionCounts,
    covered_scores: &[(f64, Truth)],
    zeta_high: f64,
) -> MetricsReport {
    MetricsReport {
        counts: *counts,
        precision: counts.precision(),
        recall: counts.recall(),
        f1: counts.f1(),
        mcc: counts.mcc(),
        auc: roc_auc(covered_scores),
        log_loss: log_loss(covered_scores, zeta_high),
        coverage: counts.coverage(),
    }
}

/// Metrics for a triaged, labeled example set.
pub fn evaluate(scored: &[ScoredPair], params: &TriageParams) -> Result<(Vec<TriageOutcome>, MetricsReport)> {
    let outcomes = triage(scored, params)?;
    let counts = confusion(&outcomes);
    let covered: Vec<(f64, Truth)> = outcomes
        .iter()
        .zip(scored)
        .filter(|(o, _)| matches!(o.label, Label::Positive | Label::Negative))
        .filter_map(|(o, s)| Some((s.rank_score(), o.truth?)))
        .collect();
    let report = compute_metrics(&counts, &covered, params.zeta_high);
    Ok((outcomes, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub zeta_low: f64,
    pub zeta_high: f64,
    pub f1: Option<f64>,
    pub coverage: Option<f64>,
    pub risk: Option<f64>,
    pub counts: ConfusionCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
    pub aurc: Option<f64>,
}

/// `zeta_low ∈ {0, 0.25, …, 2}` × `zeta_high ∈ {1, 1.25, …, 5}` with
/// `low <= high`.
pub fn default_grid() -> Vec<(f64, f64)> {
    let mut grid = Vec::new();
    for i in 0..=8 {
        for j in 0..=16 {
            let (lo, hi) = (0.25 * i as f64, 1.0 + 0.25 * j as f64);
            if lo <= hi {
                grid.push((lo, hi));
            }
        }
    }
    grid
}

/// All `(lo, hi)` pairs over the 0%, 5%, …, 100% quantiles of `scores`.
pub fn quantile_grid(scores: &[f64]) -> Vec<(f64, f64)> {
    let mut s: Vec<f64> = scores.iter().copied().filter(|x| x.is_finite()).collect();
    if s.is_empty() {
        return Vec::new();
    }
    s.sort_by(f64::total_cmp);
    let q: Vec<f64> = (0..=20).map(|i| s[((s.len() - 1) * i) / 20]).collect();
    let mut grid = Vec::new();
    for &lo in &q {
        for &hi in &q {
            if lo <= hi && !grid.contains(&(lo, hi)) {
                grid.push((lo, hi));
            }
        }
    }
    grid
}

/// Reclassifies every example on each grid cell and integrates the
/// risk-coverage envelope.
pub fn threshold_sweep(scored: &[ScoredPair], grid: &[(f64, f64)], mode: Mode) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::param("empty threshold grid"));
    }
    let cells = grid
        .iter()
        .map(|&(zeta_low, zeta_high)| {
            let params = TriageParams::new(zeta_low, zeta_high, mode);
            let mut counts = ConfusionCounts::default();
            for s in scored {
                if let Some(truth) = s.truth {
                    counts.add(s.label(&params)?, truth);
                }
            }
            Ok(SweepCell {
                zeta_low,
                zeta_high,
                f1: counts.f1(),
                coverage: counts.coverage(),
                risk: counts.risk(),
                counts,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<(f64, f64)> =
        cells.iter().filter_map(|c| Some((c.coverage?, c.risk?))).collect();
    Ok(SweepResult { aurc: aurc(&points), cells })
}

/// Normalized area under the risk-coverage envelope.
///
/// The envelope at coverage `c` is the lowest risk among operating points
/// with coverage `>= c`. It is held flat from coverage 0 up to the first
/// point, integrated by trapezoids over the sorted distinct coverages, and
/// divided by the largest coverage reached, so a constant risk `r` yields
/// exactly `r`.
pub fn aurc(points: &[(f64, f64)]) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup_by(|b, a| a.0 == b.0);
    let c_max = pts.last()?.0;
    if !(c_max > 0.0) {
        return None;
    }
    // suffix minimum of risk
    let mut env = vec![0.0; pts.len()];
    let mut best = f64::INFINITY;
    for i in (0..pts.len()).rev() {
        best = best.min(pts[i].1);
        env[i] = best;
    }
    let mut area = env[0] * pts[0].0;
    for i in 1..pts.len() {
        area += (pts[i].0 - pts[i - 1].0) * (env[i] + env[i - 1]) / 2.0;
    }
    Some(area / c_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// L2 distance between the pair delta and the nearest record's delta.
    VsdbTop1L2,
    /// Cosine distance between the pair delta and the nearest record's delta.
    VsdbTop1Cos,
    /// Cosine distance from `[s1; s2]` to the nearest stored consecutive pair.
    VdbPairCos,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::VsdbTop1L2, Baseline::VsdbTop1Cos, Baseline::VdbPairCos];
}

/// Concatenations `[v; next(v)]` of every stored consecutive pair.
#[derive(Debug, Clone)]
pub struct PairIndex {
    pairs: Corpus,
    origin: Vec<Vec<RecordRef>>,
}

impl PairIndex {
    pub fn build(corpus: &Corpus) -> Self {
        let dim = corpus.dim();
        let mut shards = Vec::new();
        let mut origin = Vec::new();
        for (s, shard) in corpus.shards().iter().enumerate() {
            let mut out = Shard::new(2 * dim);
            let mut refs = Vec::new();
            let mut joined = vec![0.0f32; 2 * dim];
            for i in 0..shard.len() {
                if !shard.has_delta(i) {
                    continue;
                }
                joined[..dim].copy_from_slice(shard.vector(i));
                joined[dim..].copy_from_slice(shard.vector(i + 1));
                out.ingest_sequence(&[&joined[..]]).expect("dimension is fixed");
                refs.push(RecordRef::new(s as u32, i as u32));
            }
            shards.push(out);
            origin.push(refs);
        }
        let pairs = Corpus::new(shards).unwrap_or_else(|_| Corpus::single(Shard::new(2 * dim)));
        Self { pairs, origin }
    }

    /// Cosine distance to the nearest stored pair, and that pair's first record.
    pub fn nearest(&self, s1: &[f64], s2: &[f64]) -> Result<(f64, RecordRef)> {
        let joined: Vec<f64> = s1.iter().chain(s2).copied().collect();
        let hit = search(&self.pairs, &joined, &Search::new(1, Metric::Cosine))?;
        let n = hit.first().ok_or(Error::StoreEmpty)?;
        Ok((n.distance, self.origin[n.record.shard as usize][n.record.index as usize]))
    }
}

/// Baseline distance score of one pair. `pairs` is required for
/// [`Baseline::VdbPairCos`].
pub fn baseline_score(
    corpus: &Corpus,
    pairs: Option<&PairIndex>,
    s1: &[f64],
    s2: &[f64],
    method: Baseline,
) -> Result<(f64, RecordRef)> {
    check_dim(corpus.dim(), s1.len())?;
    check_dim(corpus.dim(), s2.len())?;
    match method {
        Baseline::VsdbTop1L2 | Baseline::VsdbTop1Cos => {
            let hit = search(corpus, s1, &Search::new(1, Metric::L2).with_delta())?;
            let record = hit.first().ok_or(Error::StoreEmpty)?.record;
            let stored: Vec<f64> =
                corpus.record(record).delta.expect("has delta").iter().map(|&x| x as f64).collect();
            let delta: Vec<f64> = s2.iter().zip(s1).map(|(b, a)| b - a).collect();
            let d = if method == Baseline::VsdbTop1L2 {
                l2_distance(&delta, &stored)
            } else {
                cosine_distance(&delta, &stored)
            };
            Ok((d, record))
        }
        Baseline::VdbPairCos => {
            let pairs = pairs.ok_or_else(|| Error::param("pair index required"))?;
            pairs.nearest(s1, s2)
        }
    }
}

/// Baseline scores for every example, packaged for [`threshold_sweep`].
pub fn score_examples_baseline(
    corpus: &Corpus,
    pairs: Option<&PairIndex>,
    examples: &[LabeledPair],
    method: Baseline,
) -> Result<Vec<ScoredPair>> {
    examples
        .par_iter()
        .map(|ex| {
            let (score, record) = baseline_score(corpus, pairs, &ex.s1, &ex.s2, method)?;
            Ok(ScoredPair {
                zeta_test: Some(score),
                status_test: FieldStatus::Defined,
                zeta_ref: None,
                status_ref: None,
                truth: ex.label,
                reference: Some(record),
                evidence: vec![record],
                gated: false,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    DriftField,
    VsdbTop1L2,
    VsdbTop1Cos,
    VdbPairCos,
}

impl From<Baseline> for Method {
    fn from(b: Baseline) -> Self {
        match b {
            Baseline::VsdbTop1L2 => Method::VsdbTop1L2,
            Baseline::VsdbTop1Cos => Method::VsdbTop1Cos,
            Baseline::VdbPairCos => Method::VdbPairCos,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    /// Best-F1 operating point with coverage at or above the floor.
    pub operating_point: Option<SweepCell>,
    pub aurc: Option<f64>,
}

/// Picks the cell with the highest F1 among those covering at least
/// `min_coverage`; earlier grid cells win ties.
pub fn best_cell(sweep: &SweepResult, min_coverage: f64) -> Option<SweepCell> {
    let mut best: Option<&SweepCell> = None;
    for c in &sweep.cells {
        let (Some(f1), Some(cov)) = (c.f1, c.coverage) else { continue };
        if cov < min_coverage {
            continue;
        }
        if best.is_none_or(|b| f1 > b.f1.unwrap_or(f64::NEG_INFINITY)) {
            best = Some(c);
        }
    }
    best.cloned()
}

/// Compares the field score against the three baselines: each method is
/// swept over its own grid (the field on `field_grid`, baselines on
/// quantiles of their scores) and reported at its best operating point.
pub fn compare_methods(
    corpus: &Corpus,
    examples: &[LabeledPair],
    field_params: &FieldParams,
    field_grid: &[(f64, f64)],
    mode: Mode,
    min_coverage: f64,
) -> Result<Vec<MethodSummary>> {
    let mut out = Vec::new();
    let scored = score_examples(corpus, examples, field_params)?;
    let sweep = threshold_sweep(&scored, field_grid, mode)?;
    out.push(MethodSummary {
        method: Method::DriftField,
        operating_point: best_cell(&sweep, min_coverage),
        aurc: sweep.aurc,
    });
    let pairs = PairIndex::build(corpus);
    for b in Baseline::ALL {
        let scored = score_examples_baseline(corpus, Some(&pairs), examples, b)?;
        let scores: Vec<f64> = scored.iter().filter_map(|s| s.zeta_test).collect();
        let grid = quantile_grid(&scores);
        if grid.is_empty() {
            out.push(MethodSummary { method: b.into(), operating_point: None, aurc: None });
            continue;
        }
        let sweep = threshold_sweep(&scored, &grid, mode)?;
        out.push(MethodSummary {
            method: b.into(),
            operating_point: best_cell(&sweep, min_coverage),
            aurc: sweep.aurc,
        });
    }
    Ok(out)
}
