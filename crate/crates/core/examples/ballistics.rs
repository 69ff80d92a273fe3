//! Builds the projectile corpus and scores a same-physics query against a
//! query flown with air resistance.

use vsdb::ballistics::{
    build_corpus, experiment_field_params, run_experiment, BallisticsParams, DEFAULT_DRAG,
    DEFAULT_QUERY_THETA,
};

fn main() -> vsdb::Result<()> {
    let params = BallisticsParams::default();
    let corpus = build_corpus(&params)?;
    println!("corpus: {} records", corpus.len());
    let field = experiment_field_params();
    let clean = run_experiment(&corpus, &params, &field, DEFAULT_QUERY_THETA, 0.0)?;
    let drag = run_experiment(&corpus, &params, &field, DEFAULT_QUERY_THETA, DEFAULT_DRAG)?;
    println!("zeta_clean = {:.4} over {} samples", clean.zeta_mean, clean.scored);
    println!("zeta_drag  = {:.4} over {} samples", drag.zeta_mean, drag.scored);
    println!("separation = {:.1}x", drag.zeta_mean / clean.zeta_mean);
    Ok(())
}
