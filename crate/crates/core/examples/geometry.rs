//! Finds dense clusters of transitions and ranks them by divergence and
//! circulation.

use vsdb::geometry::{diagnose, find_dense_clusters, rank_extremes, ClusterParams, RankBy};
use vsdb::synth::{flow_blobs, Flow};

pub fn main() -> vsdb::Result<()> {
    let centers = vec![vec![0.0, 0.0, 0.0], vec![10.0, 0.0, 0.0], vec![0.0, 10.0, 0.0]];
    let corpus = flow_blobs(&centers, &[Flow::Radial, Flow::Swirl, Flow::Noise], 150, 1.0, 3)?;

    let clusters = find_dense_clusters(&corpus, &ClusterParams::kmeans(3, 17))?;
    let diags = diagnose(&corpus, &clusters)?;
    for by in [RankBy::DivergenceMax, RankBy::CirculationMax] {
        println!("{by:?}");
        for r in rank_extremes(&corpus, &diags, by, 2) {
            println!(
                "  cluster {} size {} divergence {:.3} circulation {:.3} centroid norm {:.2}",
                r.cluster_id, r.size, r.divergence, r.circulation, r.centroid_norm
            );
        }
    }
    Ok(())
}
