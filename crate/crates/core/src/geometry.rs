//! Dense clusters of transitions and their divergence / circulation.
//!
//! For a cluster with centroid `c`, member positions `p_i` and deltas `v_i`,
//! let `r_i = p_i - c`. Then
//!
//! ```text
//! D = (d/N) Σ (v_i · r_i) / |r_i|²
//! M = (d/N) Σ (r_i v_iᵀ - v_i r_iᵀ) / |r_i|²
//! ```
//!
//! and the circulation is `‖M‖_F`. Members closer than [`MIN_RADIUS`] to the
//! centroid are left out of both sums.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{Corpus, RecordRef};

/// Members with `|r_i|` below this are excluded from the sums.
pub const MIN_RADIUS: f64 = 1e-9;

/// Largest dimension for which `M` is built as a dense matrix.
pub const DENSE_LIMIT: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ClusterMethod {
    /// Seeded k-means++ initialization followed by Lloyd iterations.
    KMeans { n_clusters: usize, max_iter: usize, seed: u64 },
    /// All transitions within `radius` (L2) of `center`.
    Ball { center: Vec<f64>, radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub method: ClusterMethod,
    pub min_size: usize,
}

impl ClusterParams {
    pub fn kmeans(n_clusters: usize, seed: u64) -> Self {
        Self { method: ClusterMethod::KMeans { n_clusters, max_iter: 100, seed }, min_size: 2 }
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        Self { method: ClusterMethod::Ball { center, radius }, min_size: 2 }
    }

    pub fn min_size(mut self, min_size: usize) -> Self {
        self.min_size = min_size;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub centroid: Vec<f64>,
    pub members: Vec<RecordRef>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn mean_of(points: &[Vec<f64>], idx: &[usize], dim: usize) -> Vec<f64> {
    let mut c = vec![0.0; dim];
    for &i in idx {
        for (acc, x) in c.iter_mut().zip(&points[i]) {
            *acc += x;
        }
    }
    let n = idx.len().max(1) as f64;
    c.iter_mut().for_each(|x| *x /= n);
    c
}

/// Groups stored transitions (records with a delta) into clusters and drops
/// those smaller than `min_size`. Clusters come back ordered by their
/// smallest member.
pub fn find_dense_clusters(corpus: &Corpus, params: &ClusterParams) -> Result<Vec<Cluster>> {
    let dim = corpus.dim();
    let refs: Vec<RecordRef> = corpus.refs().filter(|&r| corpus.record(r).delta.is_some()).collect();
    let points: Vec<Vec<f64>> = refs
        .iter()
        .map(|&r| corpus.record(r).vector.iter().map(|&x| x as f64).collect())
        .collect();
    let groups: Vec<Vec<usize>> = match &params.method {
        ClusterMethod::KMeans { n_clusters, max_iter, seed } => {
            if *n_clusters == 0 {
                return Err(Error::param("n_clusters must be at least 1"));
            }
            kmeans(&points, dim, *n_clusters, *max_iter, *seed)
        }
        ClusterMethod::Ball { center, radius } => {
            crate::error::check_dim(dim, center.len())?;
            if !(*radius > 0.0) {
                return Err(Error::param("radius must be positive"));
            }
            let r2 = radius * radius;
            vec![(0..points.len()).filter(|&i| sq_dist(&points[i], center) <= r2).collect()]
        }
    };
    let mut clusters: Vec<Cluster> = groups
        .into_iter()
        .filter(|g| !g.is_empty() && g.len() >= params.min_size)
        .map(|g| Cluster { centroid: mean_of(&points, &g, dim), members: g.iter().map(|&i| refs[i]).collect() })
        .collect();
    clusters.sort_by_key(|c| c.members[0]);
    Ok(clusters)
}

fn nearest_center(p: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.0 {
            best = (d, j);
        }
    }
    best.1
}

fn kmeans(points: &[Vec<f64>], dim: usize, k: usize, max_iter: usize, seed: u64) -> Vec<Vec<usize>> {
    if points.is_empty() {
        return Vec::new();
    }
    let k = k.min(points.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut t = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if t < w {
                    pick = i;
                    break;
                }
                t -= w;
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        centers.push(points[next].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centers[centers.len() - 1]));
        }
    }
    let mut assign: Vec<usize> = points.par_iter().map(|p| nearest_center(p, &centers)).collect();
    for _ in 0..max_iter {
        for (j, center) in centers.iter_mut().enumerate() {
            let idx: Vec<usize> = (0..points.len()).filter(|&i| assign[i] == j).collect();
            // an emptied cluster keeps its previous center
            if !idx.is_empty() {
                *center = mean_of(points, &idx, dim);
            }
        }
        let next: Vec<usize> = points.par_iter().map(|p| nearest_center(p, &centers)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    let mut groups = vec![Vec::new(); k];
    for (i, &j) in assign.iter().enumerate() {
        groups[j].push(i);
    }
    groups
}

/// Offsets from the centroid and the deltas of a cluster's members, in f64.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterData {
    pub dim: usize,
    /// `r_i = p_i - c`.
    pub offsets: Vec<Vec<f64>>,
    /// `v_i`.
    pub velocities: Vec<Vec<f64>>,
}

impl ClusterData {
    pub fn new(dim: usize, offsets: Vec<Vec<f64>>, velocities: Vec<Vec<f64>>) -> Result<Self> {
        if offsets.len() != velocities.len() {
            return Err(Error::param("offsets and velocities differ in length"));
        }
        for v in offsets.iter().chain(&velocities) {
            crate::error::check_dim(dim, v.len())?;
        }
        Ok(Self { dim, offsets, velocities })
    }

    /// Builds `r_i` against `centroid` from raw positions.
    pub fn from_points(centroid: &[f64], positions: &[Vec<f64>], velocities: Vec<Vec<f64>>) -> Result<Self> {
        let offsets = positions.iter().map(|p| p.iter().zip(centroid).map(|(a, c)| a - c).collect()).collect();
        Self::new(centroid.len(), offsets, velocities)
    }

    pub fn from_cluster(corpus: &Corpus, cluster: &Cluster) -> Result<Self> {
        let mut positions = Vec::with_capacity(cluster.members.len());
        let mut velocities = Vec::with_capacity(cluster.members.len());
        for &m in &cluster.members {
            let rec = corpus.record(m);
            let delta = rec.delta.ok_or_else(|| Error::param("cluster member without a delta"))?;
            positions.push(rec.vector.iter().map(|&x| x as f64).collect());
            velocities.push(delta.iter().map(|&x| x as f64).collect());
        }
        Self::from_points(&cluster.centroid, &positions, velocities)
    }

    /// Members far enough from the centroid, with `|r_i|²`.
    fn usable(&self) -> Vec<(usize, f64)> {
        self.offsets
            .iter()
            .enumerate()
            .filter_map(|(i, r)| {
                let n2: f64 = r.iter().map(|x| x * x).sum();
                (n2.sqrt() >= MIN_RADIUS).then_some((i, n2))
            })
            .collect()
    }

    fn usable_or_err(&self) -> Result<Vec<(usize, f64)>> {
        let u = self.usable();
        if u.is_empty() {
            return Err(Error::DegenerateCluster);
        }
        Ok(u)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn divergence(data: &ClusterData) -> Result<f64> {
    let used = data.usable_or_err()?;
    let sum: f64 = used.iter().map(|&(i, n2)| dot(&data.velocities[i], &data.offsets[i]) / n2).sum();
    Ok(data.dim as f64 / used.len() as f64 * sum)
}

/// Dense row-major `d × d` angular-momentum matrix.
pub fn angular_momentum_matrix(data: &ClusterData) -> Result<Vec<f64>> {
    let used = data.usable_or_err()?;
    let d = data.dim;
    let mut m = vec![0.0; d * d];
    for &(i, n2) in &used {
        let (r, v) = (&data.offsets[i], &data.velocities[i]);
        for a in 0..d {
            for b in (a + 1)..d {
                let t = (r[a] * v[b] - v[a] * r[b]) / n2;
                m[a * d + b] += t;
                m[b * d + a] -= t;
            }
        }
    }
    let scale = d as f64 / used.len() as f64;
    m.iter_mut().for_each(|x| *x *= scale);
    Ok(m)
}

/// `‖M‖_F` through pairwise inner products, without forming `M`.
pub fn circulation_from_gram(data: &ClusterData) -> Result<f64> {
    let used = data.usable_or_err()?;
    let (r, v) = (&data.offsets, &data.velocities);
    let sum: f64 = used
        .par_iter()
        .map(|&(i, ni)| {
            used.iter()
                .map(|&(j, nj)| {
                    (dot(&r[i], &r[j]) * dot(&v[i], &v[j]) - dot(&r[i], &v[j]) * dot(&r[j], &v[i])) / (ni * nj)
                })
                .sum::<f64>()
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    let n = used.len() as f64;
    let d = data.dim as f64;
    Ok((2.0 * d * d / (n * n) * sum).max(0.0).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularMomentum {
    /// Row-major `M`; only built for `d <= DENSE_LIMIT`.
    pub matrix: Option<Vec<f64>>,
    pub circulation: f64,
}

pub fn angular_momentum(data: &ClusterData) -> Result<AngularMomentum> {
    if data.dim <= DENSE_LIMIT {
        let m = angular_momentum_matrix(data)?;
        let circulation = m.iter().map(|x| x * x).sum::<f64>().sqrt();
        Ok(AngularMomentum { matrix: Some(m), circulation })
    } else {
        Ok(AngularMomentum { matrix: None, circulation: circulation_from_gram(data)? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDiagnostics {
    pub cluster_id: usize,
    pub centroid: Vec<f64>,
    pub member_refs: Vec<RecordRef>,
    pub size: usize,
    pub divergence: f64,
    pub circulation: f64,
}

impl ClusterDiagnostics {
    pub fn centroid_norm(&self) -> f64 {
        dot(&self.centroid, &self.centroid).sqrt()
    }
}

/// Diagnostics for each cluster; degenerate clusters (every member on the
/// centroid) are skipped. `cluster_id` is the position in `clusters`.
pub fn diagnose(corpus: &Corpus, clusters: &[Cluster]) -> Result<Vec<ClusterDiagnostics>> {
    let out: Vec<Option<ClusterDiagnostics>> = clusters
        .par_iter()
        .enumerate()
        .map(|(cluster_id, c)| {
            let data = ClusterData::from_cluster(corpus, c)?;
            let (div, am) = match (divergence(&data), angular_momentum(&data)) {
                (Ok(d), Ok(a)) => (d, a),
                (Err(Error::DegenerateCluster), _) | (_, Err(Error::DegenerateCluster)) => return Ok(None),
                (Err(e), _) | (_, Err(e)) => return Err(e),
            };
            Ok(Some(ClusterDiagnostics {
                cluster_id,
                centroid: c.centroid.clone(),
                member_refs: c.members.clone(),
                size: c.members.len(),
                divergence: div,
                circulation: am.circulation,
            }))
        })
        .collect::<Result<_>>()?;
    Ok(out.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankBy {
    DivergenceMax,
    DivergenceMin,
    CirculationMax,
}

impl std::str::FromStr for RankBy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "divergence_max" => Ok(RankBy::DivergenceMax),
            "divergence_min" => Ok(RankBy::DivergenceMin),
            "circulation_max" => Ok(RankBy::CirculationMax),
            other => Err(Error::param(format!("unknown ranking {other:?}"))),
        }
    }
}

/// One line of the cluster report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub cluster_id: usize,
    pub size: usize,
    pub divergence: f64,
    pub circulation: f64,
    pub centroid_norm: f64,
    /// Members nearest the centroid.
    pub top_member_refs: Vec<RecordRef>,
}

/// Sorts clusters by the requested statistic (signed, never clamped); equal
/// values keep `cluster_id` order. Each entry lists up to `top_members`
/// members nearest its centroid.
pub fn rank_extremes(
    corpus: &Corpus,
    clusters: &[ClusterDiagnostics],
    by: RankBy,
    top_members: usize,
) -> Vec<ClusterReport> {
    let mut order: Vec<&ClusterDiagnostics> = clusters.iter().collect();
    order.sort_by(|a, b| {
        let ord = match by {
            RankBy::DivergenceMax => b.divergence.total_cmp(&a.divergence),
            RankBy::DivergenceMin => a.divergence.total_cmp(&b.divergence),
            RankBy::CirculationMax => b.circulation.total_cmp(&a.circulation),
        };
        ord.then(a.cluster_id.cmp(&b.cluster_id))
    });
    order
        .into_iter()
        .map(|c| {
            let mut near: Vec<(f64, RecordRef)> = c
                .member_refs
                .iter()
                .map(|&m| {
                    let p: Vec<f64> = corpus.record(m).vector.iter().map(|&x| x as f64).collect();
                    (sq_dist(&p, &c.centroid), m)
                })
                .collect();
            near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            ClusterReport {
                cluster_id: c.cluster_id,
                size: c.size,
                divergence: c.divergence,
                circulation: c.circulation,
                centroid_norm: c.centroid_norm(),
                top_member_refs: near.into_iter().take(top_members).map(|(_, r)| r).collect(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::Shard;
    use rand_distr::{Distribution, StandardNormal};

    fn circle(n: usize) -> ClusterData {
        let (mut r, mut v) = (Vec::new(), Vec::new());
        for i in 0..n {
            let t = std::f64::consts::TAU * i as f64 / n as f64;
            let (x, y) = (t.cos(), t.sin());
            r.push(vec![x, y]);
            v.push(vec![-y, x]);
        }
        ClusterData::new(2, r, v).unwrap()
    }

    fn random_cluster(rng: &mut ChaCha8Rng, d: usize, n: usize) -> ClusterData {
        let mut g = || -> Vec<f64> { (0..d).map(|_| StandardNormal.sample(&mut *rng)).collect() };
        let r: Vec<Vec<f64>> = (0..n).map(|_| g()).collect();
        let v: Vec<Vec<f64>> = (0..n).map(|_| g()).collect();
        ClusterData::new(d, r, v).unwrap()
    }

    #[test]
    fn radial_outflow() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut data = random_cluster(&mut rng, 5, 30);
        data.velocities = data.offsets.clone();
        let d = divergence(&data).unwrap();
        assert!((d - 5.0).abs() <= 1e-9 * 5.0);
        let am = angular_momentum(&data).unwrap();
        assert_eq!(am.circulation, 0.0);
    }

    #[test]
    fn tangential_circle() {
        let data = circle(12);
        assert!(divergence(&data).unwrap().abs() < 1e-12);
        let am = angular_momentum(&data).unwrap();
        let m = am.matrix.unwrap();
        for (got, want) in m.iter().zip([0.0, 2.0, -2.0, 0.0]) {
            assert!((got - want).abs() < 1e-12, "{m:?}");
        }
        assert!((am.circulation - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!((am.circulation - 2f64.sqrt() * m[1].abs()).abs() < 1e-12);
    }

    #[test]
    fn divergence_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = random_cluster(&mut rng, 7, 40);
        let mut acc = 0.0;
        for i in 0..40 {
            let mut vr = 0.0;
            let mut rr = 0.0;
            for a in 0..7 {
                vr += data.velocities[i][a] * data.offsets[i][a];
                rr += data.offsets[i][a] * data.offsets[i][a];
            }
            acc += vr / rr;
        }
        let want = 7.0 / 40.0 * acc;
        let got = divergence(&data).unwrap();
        assert!((got - want).abs() <= 1e-12 * want.abs());
    }

    #[test]
    fn matrix_is_antisymmetric_and_gram_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in 2..=8 {
            let data = random_cluster(&mut rng, d, 25);
            let m = angular_momentum_matrix(&data).unwrap();
            let scale = m.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            for a in 0..d {
                for b in 0..d {
                    assert!((m[a * d + b] + m[b * d + a]).abs() <= 1e-12 * scale);
                }
            }
            let dense = m.iter().map(|x| x * x).sum::<f64>().sqrt();
            let gram = circulation_from_gram(&data).unwrap();
            assert!((dense - gram).abs() <= 1e-9 * dense, "d={d}: {dense} vs {gram}");
        }
    }

    #[test]
    fn large_dimension_skips_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = random_cluster(&mut rng, 80, 10);
        let am = angular_momentum(&data).unwrap();
        assert!(am.matrix.is_none());
        assert!(am.circulation > 0.0);
    }

    #[test]
    fn coincident_members() {
        let data = ClusterData::new(2, vec![vec![0.0, 0.0]; 3], vec![vec![1.0, 0.0]; 3]).unwrap();
        assert!(matches!(divergence(&data), Err(Error::DegenerateCluster)));
        assert!(matches!(angular_momentum(&data), Err(Error::DegenerateCluster)));
        // one coincident member is dropped, N counts only the rest
        let data = ClusterData::new(1, vec![vec![0.0], vec![2.0]], vec![vec![5.0], vec![2.0]]).unwrap();
        assert_eq!(divergence(&data).unwrap(), 1.0);
    }

    fn blob_corpus(centers: &[[f64; 2]], n: usize, sigma: f64, seed: u64) -> (Corpus, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shard = Shard::new(2);
        let mut truth = Vec::new();
        for (b, c) in centers.iter().enumerate() {
            for _ in 0..n {
                let x: f64 = StandardNormal.sample(&mut rng);
                let y: f64 = StandardNormal.sample(&mut rng);
                let p = [(c[0] + sigma * x) as f32, (c[1] + sigma * y) as f32];
                shard.ingest_sequence(&[p, [p[0] + 0.01, p[1]]]).unwrap();
                truth.push(b);
            }
        }
        (Corpus::single(shard), truth)
    }

    #[test]
    fn kmeans_recovers_two_blobs() {
        let (corpus, truth) = blob_corpus(&[[0.0, 0.0], [10.0, 10.0]], 100, 0.5, 5);
        let clusters = find_dense_clusters(&corpus, &ClusterParams::kmeans(2, 9)).unwrap();
        assert_eq!(clusters.len(), 2);
        for c in &clusters {
            let blob = truth[c.members[0].index as usize / 2];
            let agree = c.members.iter().filter(|m| truth[m.index as usize / 2] == blob).count();
            assert!(agree as f64 >= 0.99 * c.members.len() as f64);
            assert!(c.members.iter().all(|&m| corpus.record(m).delta.is_some()));
        }
        let total: usize = clusters.iter().map(|c| c.members.len()).sum();
        assert_eq!(total, 200);
    }

    #[test]
    fn single_blob_centroid() {
        let (corpus, _) = blob_corpus(&[[3.0, -1.0]], 100, 0.5, 6);
        let clusters = find_dense_clusters(&corpus, &ClusterParams::kmeans(1, 0)).unwrap();
        let bound = 3.0 * 0.5 / 10.0;
        assert!((clusters[0].centroid[0] - 3.0).abs() < bound);
        assert!((clusters[0].centroid[1] + 1.0).abs() < bound);
    }

    #[test]
    fn min_size_filters_everything() {
        let (corpus, _) = blob_corpus(&[[0.0, 0.0]], 10, 0.5, 7);
        let params = ClusterParams::kmeans(1, 0).min_size(1000);
        assert!(find_dense_clusters(&corpus, &params).unwrap().is_empty());
    }

    #[test]
    fn ball_selects_neighborhood() {
        let (corpus, _) = blob_corpus(&[[0.0, 0.0], [10.0, 10.0]], 50, 0.5, 8);
        let clusters = find_dense_clusters(&corpus, &ClusterParams::ball(vec![10.0, 10.0], 3.0)).unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].members.len(), 50);
    }

    fn diag(id: usize, div: f64, circ: f64) -> ClusterDiagnostics {
        ClusterDiagnostics {
            cluster_id: id,
            centroid: vec![0.0, 0.0],
            member_refs: Vec::new(),
            size: 2,
            divergence: div,
            circulation: circ,
        }
    }

    #[test]
    fn ranking_is_order_independent() {
        let (corpus, _) = blob_corpus(&[[0.0, 0.0]], 2, 0.5, 9);
        let a = vec![diag(0, 2.0, 0.0), diag(1, 0.0, 2.83), diag(2, 2.0, 1.0), diag(3, -4.0, 0.5)];
        let mut b = a.clone();
        b.reverse();
        for by in [RankBy::DivergenceMax, RankBy::DivergenceMin, RankBy::CirculationMax] {
            let ids = |v: &[ClusterDiagnostics]| -> Vec<usize> {
                rank_extremes(&corpus, v, by, 3).iter().map(|r| r.cluster_id).collect()
            };
            assert_eq!(ids(&a), ids(&b));
        }
        let top = rank_extremes(&corpus, &a, RankBy::DivergenceMax, 3);
        assert_eq!(top.iter().map(|r| r.cluster_id).collect::<Vec<_>>(), vec![0, 2, 1, 3]);
        let top = rank_extremes(&corpus, &a, RankBy::CirculationMax, 3);
        assert_eq!(top[0].cluster_id, 1);
    }
}
