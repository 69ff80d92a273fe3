//! Scores labeled pairs against a synthetic corpus, triages them at the
//! default thresholds, sweeps the threshold grid and compares baselines.

use vsdb::field::FieldParams;
use vsdb::synth::{local_delta_corpus, LocalDeltaSpec};
use vsdb::triage::{
    compare_methods, default_grid, evaluate, score_examples, threshold_sweep, Mode, TriageParams,
};

pub fn main() -> vsdb::Result<()> {
    let spec = LocalDeltaSpec { n_anchors: 20, sequences_per_anchor: 60, dim: 8, ..LocalDeltaSpec::default() };
    let data = local_delta_corpus(&spec)?;
    let pairs = data.labeled_pairs(100, 2.5, 21);
    let field = FieldParams { top_n: 30, d_max: 1.0, top_n_zeta: 8, ..FieldParams::default() };

    let scored = score_examples(&data.corpus, &pairs, &field)?;
    let (_, report) = evaluate(&scored, &TriageParams::default())?;
    println!("at (1, 3): {}", serde_json::to_string(&report).expect("serializable"));

    let sweep = threshold_sweep(&scored, &default_grid(), Mode::Hallucination)?;
    println!("{} grid cells, AURC {:?}", sweep.cells.len(), sweep.aurc);

    for m in compare_methods(&data.corpus, &pairs, &field, &default_grid(), Mode::Hallucination, 0.5)? {
        let f1 = m.operating_point.as_ref().and_then(|c| c.f1);
        println!("{:?}: best F1 {:?}, AURC {:?}", m.method, f1, m.aurc);
    }
    Ok(())
}
