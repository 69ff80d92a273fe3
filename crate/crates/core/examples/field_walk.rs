//! Estimates the local field at a point, scores two candidate transitions
//! against it, and follows the field for a few steps.

use vsdb::field::{estimate_field, field_walk, significance, zeta, FieldParams};
use vsdb::store::Corpus;
use vsdb::synth::random_walks;

pub fn main() -> vsdb::Result<()> {
    // every walk drifts by +0.1 per coordinate with a little noise
    let corpus = Corpus::single(random_walks(300, 10, 3, 0.1, 0.02, 4)?);
    let params = FieldParams { d_max: 1.0, top_n_zeta: 3, ..FieldParams::default() };

    let anchor = [0.3, 0.1, -0.2];
    let field = estimate_field(&corpus, &anchor, &params)?;
    println!("status {:?}, support {}", field.status, field.support);
    println!("mu {:?}", field.mu);
    println!("sigma {:?}", field.sigma_tilde);

    let along = zeta(&[0.1, 0.1, 0.1], &field, 3)?;
    let against = zeta(&[-0.1, 0.1, -0.1], &field, 3)?;
    println!("zeta along the drift {along:.3}, against it {against:.3}");
    println!("significance {:.3}", significance(&field, 3)?);

    for step in field_walk(&corpus, &anchor, 5, &params)? {
        println!("{:?} {:?} {:?}", step.status, step.significance.map(|s| (s * 1000.0).round() / 1000.0), step.point);
    }
    Ok(())
}
