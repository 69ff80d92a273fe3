//! Exact nearest-neighbor search over two shards, with a radius filter and
//! sequence-level reranking.

use vsdb::index::{chamfer_rerank, knn, search, Metric, Search, SeqKey};
use vsdb::store::Corpus;
use vsdb::synth::random_walks;

pub fn main() -> vsdb::Result<()> {
    let corpus = Corpus::new(vec![
        random_walks(50, 8, 4, 0.05, 0.1, 1)?,
        random_walks(50, 8, 4, -0.05, 0.1, 2)?,
    ])?;
    println!("{} records in {} shards", corpus.len(), corpus.shards().len());

    // a point just off a stored vector
    let query: Vec<f64> = corpus.shard(0).vector(10).iter().map(|&x| x as f64 + 0.01).collect();
    for metric in [Metric::L2, Metric::Cosine] {
        println!("{metric:?}:");
        for n in knn(&corpus, &query, 3, metric)? {
            println!("  shard {} index {} distance {:.4}", n.record.shard, n.record.index, n.distance);
        }
    }

    let near = search(&corpus, &query, &Search::new(100, Metric::L2).within(0.5).with_delta())?;
    println!("{} transitions within 0.5", near.len());

    // rerank the sequences behind the nearest hits against a perturbed copy
    // of stored sequence 1
    let range = corpus.shard(0).sequence_range(1)?;
    let query_seq: Vec<Vec<f64>> =
        range.map(|i| corpus.shard(0).vector(i).iter().map(|&x| x as f64 + 0.01).collect()).collect();
    let mut candidates = Vec::new();
    for q in &query_seq {
        for n in knn(&corpus, q, 5, Metric::L2)? {
            candidates.push(SeqKey { shard: n.record.shard, seq_id: corpus.record(n.record).seq_id });
        }
    }
    candidates.sort();
    candidates.dedup();
    for r in chamfer_rerank(&corpus, &query_seq, &candidates, 5, Metric::L2)?.iter().take(3) {
        println!("seq {:?}: frequency {} chamfer {:.4}", r.seq, r.frequency, r.chamfer);
    }
    Ok(())
}
