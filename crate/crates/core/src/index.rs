//! Exact nearest-neighbor search over a [`Corpus`].
//!
//! Every search is a full scan. Shards, and large shards in fixed-size
//! chunks, are scanned in parallel; partial results are merged by
//! `(distance, shard, index)` so the output never depends on scheduling.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::store::{Corpus, RecordRef};

const CHUNK: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    L2,
    Cosine,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" | "euclidean" => Ok(Metric::L2),
            "cos" | "cosine" => Ok(Metric::Cosine),
            other => Err(Error::param(format!("unknown metric {other:?}"))),
        }
    }
}

impl Metric {
    /// Distance between a stored f32 vector and an f64 query.
    #[inline]
    pub fn distance(self, query: &[f64], stored: &[f32]) -> f64 {
        match self {
            Metric::L2 => l2(query, stored),
            Metric::Cosine => {
                let (mut dot, mut nq, mut ns) = (0.0, 0.0, 0.0);
                for (q, s) in query.iter().zip(stored) {
                    let s = *s as f64;
                    dot += q * s;
                    nq += q * q;
                    ns += s * s;
                }
                cosine_from_parts(dot, nq, ns)
            }
        }
    }
}

#[inline]
fn l2(query: &[f64], stored: &[f32]) -> f64 {
    query
        .iter()
        .zip(stored)
        .map(|(q, s)| {
            let d = q - *s as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

#[inline]
fn cosine_from_parts(dot: f64, nq: f64, ns: f64) -> f64 {
    if nq == 0.0 || ns == 0.0 {
        return 2.0;
    }
    (1.0 - dot / (nq * ns).sqrt()).clamp(0.0, 2.0)
}

/// Cosine distance `1 - cos(a, b)`; 2 when either vector has zero norm.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    cosine_from_parts(dot, na, nb)
}

pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub record: RecordRef,
    pub distance: f64,
}

impl Neighbor {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then_with(|| self.record.cmp(&other.record))
    }
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key_cmp(other)
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Search options beyond the plain `k` nearest.
#[derive(Debug, Clone, Copy)]
pub struct Search {
    pub k: usize,
    pub metric: Metric,
    pub max_distance: Option<f64>,
    /// Skip records without a delta (sequence-final records).
    pub require_delta: bool,
    pub exclude: Option<RecordRef>,
}

impl Search {
    pub fn new(k: usize, metric: Metric) -> Self {
        Self { k, metric, max_distance: None, require_delta: false, exclude: None }
    }

    pub fn within(mut self, d_max: f64) -> Self {
        self.max_distance = Some(d_max);
        self
    }

    pub fn with_delta(mut self) -> Self {
        self.require_delta = true;
        self
    }

    pub fn excluding(mut self, record: Option<RecordRef>) -> Self {
        self.exclude = record;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::param("k must be at least 1"));
        }
        if let Some(d) = self.max_distance {
            if !(d > 0.0) {
                return Err(Error::param(format!("d_max must be positive, got {d}")));
            }
        }
        Ok(())
    }
}

/// Runs a search, returning neighbors sorted by `(distance, shard, index)`.
pub fn search(corpus: &Corpus, query: &[f64], opts: &Search) -> Result<Vec<Neighbor>> {
    opts.validate()?;
    check_dim(corpus.dim(), query.len())?;
    let dim = corpus.dim();

    let mut jobs = Vec::new();
    for (s, shard) in corpus.shards().iter().enumerate() {
        let mut start = 0;
        while start < shard.len() {
            let end = (start + CHUNK).min(shard.len());
            jobs.push((s, start, end));
            start = end;
        }
    }

    let partials: Vec<Vec<Neighbor>> = jobs
        .par_iter()
        .map(|&(s, start, end)| {
            let shard = &corpus.shards()[s];
            let vectors = shard.vectors();
            let flags = shard.delta_flags();
            let mut heap: BinaryHeap<Neighbor> = BinaryHeap::with_capacity(opts.k + 1);
            for i in start..end {
                if opts.require_delta && !flags[i] {
                    continue;
                }
                let record = RecordRef::new(s as u32, i as u32);
                if opts.exclude == Some(record) {
                    continue;
                }
                let distance = opts.metric.distance(query, &vectors[i * dim..(i + 1) * dim]);
                if opts.max_distance.is_some_and(|d| distance > d) {
                    continue;
                }
                let cand = Neighbor { record, distance };
                if heap.len() < opts.k {
                    heap.push(cand);
                } else if cand < *heap.peek().expect("heap is full") {
                    heap.pop();
                    heap.push(cand);
                }
            }
            heap.into_vec()
        })
        .collect();

    let mut merged: Vec<Neighbor> = partials.into_iter().flatten().collect();
    merged.sort_unstable();
    merged.truncate(opts.k);
    Ok(merged)
}

/// The `k` nearest records, distance-ascending.
pub fn knn(corpus: &Corpus, query: &[f64], k: usize, metric: Metric) -> Result<Vec<Neighbor>> {
    search(corpus, query, &Search::new(k, metric))
}

/// [`knn`] restricted to distance `<= d_max`. An empty result means the
/// query lies outside the corpus at this radius.
pub fn knn_within(
    corpus: &Corpus,
    query: &[f64],
    k: usize,
    d_max: f64,
    metric: Metric,
) -> Result<Vec<Neighbor>> {
    search(corpus, query, &Search::new(k, metric).within(d_max))
}

/// Global sequence identity: shard plus shard-local seq_id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SeqKey {
    pub shard: u32,
    pub seq_id: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSequence {
    pub seq: SeqKey,
    pub frequency: usize,
    pub chamfer: f64,
}

/// Symmetric Chamfer distance under cosine distance: mean over `a` of the
/// closest match in `b`, plus the same from `b` to `a`.
pub fn chamfer_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    fn directed(from: &[Vec<f64>], to: &[Vec<f64>]) -> f64 {
        from.iter()
            .map(|x| to.iter().map(|y| cosine_distance(x, y)).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / from.len() as f64
    }
    if a.is_empty() || b.is_empty() {
        return f64::NAN;
    }
    directed(a, b) + directed(b, a)
}

/// Reranks candidate sequences: first by how often each appears among the
/// per-vector `k` nearest neighbors of the query sequence, then by ascending
/// Chamfer distance, then by key.
pub fn chamfer_rerank(
    corpus: &Corpus,
    query_seq: &[Vec<f64>],
    candidates: &[SeqKey],
    k: usize,
    metric: Metric,
) -> Result<Vec<RankedSequence>> {
    if candidates.is_empty() {
        return Err(Error::param("no candidate sequences"));
    }
    if query_seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut freq: HashMap<SeqKey, usize> = HashMap::new();
    for q in query_seq {
        for n in knn(corpus, q, k, metric)? {
            let rec = corpus.record(n.record);
            *freq.entry(SeqKey { shard: n.record.shard, seq_id: rec.seq_id }).or_default() += 1;
        }
    }

    let mut ranked = candidates
        .iter()
        .map(|&seq| {
            let shard = corpus
                .shards()
                .get(seq.shard as usize)
                .ok_or(Error::NotFound(seq.seq_id as u64))?;
            let range = shard.sequence_range(seq.seq_id)?;
            let vectors: Vec<Vec<f64>> = range
                .map(|i| shard.vector(i).iter().map(|&x| x as f64).collect())
                .collect();
            Ok(RankedSequence {
                seq,
                frequency: freq.get(&seq).copied().unwrap_or(0),
                chamfer: chamfer_distance(query_seq, &vectors),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    ranked.sort_by(|a, b| {
        b.frequency
            .cmp(&a.frequency)
            .then_with(|| a.chamfer.total_cmp(&b.chamfer))
            .then_with(|| a.seq.cmp(&b.seq))
    });
    Ok(ranked)
}
