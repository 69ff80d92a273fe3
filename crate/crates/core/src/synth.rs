//! Seeded synthetic corpora for examples, tests and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{Corpus, Shard};
use crate::triage::{LabeledPair, Truth};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaLaw {
    Gaussian,
    /// Uniform with the same mean and variance as the Gaussian law.
    Uniform,
}

impl std::str::FromStr for DeltaLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(DeltaLaw::Gaussian),
            "uniform" => Ok(DeltaLaw::Uniform),
            other => Err(Error::param(format!("unknown delta law {other:?}"))),
        }
    }
}

impl DeltaLaw {
    /// A zero-mean, unit-variance draw.
    pub fn sample<R: Rng>(self, rng: &mut R) -> f64 {
        match self {
            DeltaLaw::Gaussian => StandardNormal.sample(rng),
            DeltaLaw::Uniform => rng.random_range(-1.0..1.0) * 3f64.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalDeltaSpec {
    pub n_anchors: usize,
    pub sequences_per_anchor: usize,
    pub dim: usize,
    /// Per-coordinate standard deviation of start points around an anchor.
    pub position_spread: f64,
    /// Anchors are drawn uniformly from `[-anchor_spread, anchor_spread]^dim`.
    pub anchor_spread: f64,
    pub law: DeltaLaw,
    pub seed: u64,
}

impl Default for LocalDeltaSpec {
    fn default() -> Self {
        Self {
            n_anchors: 200,
            sequences_per_anchor: 200,
            dim: 16,
            position_spread: 0.05,
            anchor_spread: 100.0,
            law: DeltaLaw::Gaussian,
            seed: 7,
        }
    }
}

/// Clusters of two-step sequences whose deltas follow a fixed per-anchor
/// law `mean + sigma ∘ z`.
#[derive(Debug, Clone)]
pub struct LocalDeltaCorpus {
    pub corpus: Corpus,
    pub anchors: Vec<Vec<f64>>,
    pub means: Vec<Vec<f64>>,
    pub sigmas: Vec<Vec<f64>>,
    pub spec: LocalDeltaSpec,
}

fn gaussian_vec<R: Rng>(rng: &mut R, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}

pub fn local_delta_corpus(spec: &LocalDeltaSpec) -> Result<LocalDeltaCorpus> {
    if spec.n_anchors == 0 || spec.sequences_per_anchor == 0 || spec.dim == 0 {
        return Err(Error::param("anchor count, sequence count and dimension must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut shard = Shard::new(spec.dim);
    let (mut anchors, mut means, mut sigmas) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..spec.n_anchors {
        let anchor: Vec<f64> =
            (0..spec.dim).map(|_| rng.random_range(-spec.anchor_spread..spec.anchor_spread)).collect();
        let mean = gaussian_vec(&mut rng, spec.dim, 0.5);
        let sigma: Vec<f64> = (0..spec.dim).map(|_| rng.random_range(0.05..0.2)).collect();
        for _ in 0..spec.sequences_per_anchor {
            let offset = gaussian_vec(&mut rng, spec.dim, spec.position_spread);
            let start: Vec<f32> = anchor.iter().zip(&offset).map(|(a, o)| (a + o) as f32).collect();
            let end: Vec<f32> = start
                .iter()
                .zip(mean.iter().zip(&sigma))
                .map(|(&s, (m, sd))| (s as f64 + m + sd * spec.law.sample(&mut rng)) as f32)
                .collect();
            shard.ingest_sequence(&[start, end])?;
        }
        anchors.push(anchor);
        means.push(mean);
        sigmas.push(sigma);
    }
    Ok(LocalDeltaCorpus { corpus: Corpus::single(shard), anchors, means, sigmas, spec: *spec })
}

impl LocalDeltaCorpus {
    /// Labeled pairs near random anchors. Grounded pairs (`neg`) draw their
    /// delta from the anchor's law; ungrounded ones (`pos`) push every
    /// coordinate `shift` standard deviations away in a random direction.
    pub fn labeled_pairs(&self, n_per_class: usize, shift: f64, seed: u64) -> Vec<LabeledPair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = self.spec.dim;
        let mut out = Vec::with_capacity(2 * n_per_class);
        for i in 0..2 * n_per_class {
            let a = rng.random_range(0..self.anchors.len());
            let truth = if i % 2 == 0 { Truth::Neg } else { Truth::Pos };
            let offset = gaussian_vec(&mut rng, dim, self.spec.position_spread);
            let s1: Vec<f64> = self.anchors[a].iter().zip(&offset).map(|(x, o)| x + o).collect();
            let s2: Vec<f64> = (0..dim)
                .map(|j| {
                    let mut z = self.spec.law.sample(&mut rng);
                    if truth == Truth::Pos {
                        z += if rng.random::<bool>() { shift } else { -shift };
                    }
                    s1[j] + self.means[a][j] + self.sigmas[a][j] * z
                })
                .collect();
            out.push(LabeledPair { s1, s2, label: Some(truth) });
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flow {
    /// `v = scale · r`.
    Radial,
    /// Rotation in the plane of the first two coordinates.
    Swirl,
    /// Independent Gaussian deltas.
    Noise,
}

/// Gaussian blobs of two-step sequences whose deltas follow `flows[b]`
/// around blob `b`'s center.
pub fn flow_blobs(centers: &[Vec<f64>], flows: &[Flow], per_blob: usize, spread: f64, seed: u64) -> Result<Corpus> {
    let dim = centers.first().ok_or_else(|| Error::param("no blob centers"))?.len();
    if flows.len() != centers.len() || dim < 2 {
        return Err(Error::param("need one flow per center and dimension >= 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shard = Shard::new(dim);
    for (c, flow) in centers.iter().zip(flows) {
        crate::error::check_dim(dim, c.len())?;
        for _ in 0..per_blob {
            let r = gaussian_vec(&mut rng, dim, spread);
            let v: Vec<f64> = match flow {
                Flow::Radial => r.iter().map(|x| 0.1 * x).collect(),
                Flow::Swirl => {
                    let mut v = vec![0.0; dim];
                    v[0] = -0.1 * r[1];
                    v[1] = 0.1 * r[0];
                    v
                }
                Flow::Noise => gaussian_vec(&mut rng, dim, 0.1 * spread),
            };
            let start: Vec<f32> = c.iter().zip(&r).map(|(a, b)| (a + b) as f32).collect();
            let end: Vec<f32> = start.iter().zip(&v).map(|(&s, d)| (s as f64 + d) as f32).collect();
            shard.ingest_sequence(&[start, end])?;
        }
    }
    Ok(Corpus::single(shard))
}

/// `n` random-walk sequences of `len` steps each, starting from Gaussian
/// points, with a shared drift plus noise.
pub fn random_walks(n: usize, len: usize, dim: usize, drift: f64, noise: f64, seed: u64) -> Result<Shard> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shard = Shard::new(dim);
    for _ in 0..n {
        let mut p = gaussian_vec(&mut rng, dim, 1.0);
        let mut seq = Vec::with_capacity(len);
        for _ in 0..len {
            seq.push(p.iter().map(|&x| x as f32).collect::<Vec<f32>>());
            let step = gaussian_vec(&mut rng, dim, noise);
            for (x, s) in p.iter_mut().zip(step) {
                *x += drift + s;
            }
        }
        shard.ingest_sequence(&seq)?;
    }
    Ok(shard)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_law_has_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| DeltaLaw::Uniform.sample(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.01);
        assert!(xs.iter().all(|x| x.abs() <= 3f64.sqrt()));
    }

    #[test]
    fn corpus_shape_and_reproducibility() {
        let spec = LocalDeltaSpec { n_anchors: 3, sequences_per_anchor: 5, dim: 4, ..Default::default() };
        let a = local_delta_corpus(&spec).unwrap();
        let b = local_delta_corpus(&spec).unwrap();
        assert_eq!(a.corpus.len(), 30);
        assert_eq!(a.corpus.shards()[0].to_bytes(), b.corpus.shards()[0].to_bytes());
        let pairs = a.labeled_pairs(4, 6.0, 3);
        assert_eq!(pairs.len(), 8);
        assert_eq!(pairs.iter().filter(|p| p.label == Some(Truth::Pos)).count(), 4);
    }

    #[test]
    fn flow_blob_deltas() {
        let c = flow_blobs(&[vec![0.0, 0.0], vec![5.0, 5.0]], &[Flow::Radial, Flow::Swirl], 3, 0.5, 2).unwrap();
        assert_eq!(c.len(), 12);
        assert!(flow_blobs(&[vec![0.0, 0.0]], &[], 3, 0.5, 2).is_err());
    }

    #[test]
    fn walks() {
        let s = random_walks(4, 6, 3, 0.1, 0.01, 9).unwrap();
        assert_eq!(s.sequence_count(), 4);
        assert_eq!(s.len(), 24);
        assert_eq!(s.absent_delta_count(), 4);
    }
}
