//! Checks whether local Gaussian fields are calibrated on two synthetic
//! corpora: one with Gaussian deltas and one with uniform deltas of the same
//! mean and variance.

use vsdb::calibrate::{calibrate_corpus, Anchor, CalibrationParams};
use vsdb::field::FieldParams;
use vsdb::synth::{local_delta_corpus, DeltaLaw, LocalDeltaSpec};

fn main() -> vsdb::Result<()> {
    for law in [DeltaLaw::Gaussian, DeltaLaw::Uniform] {
        let spec = LocalDeltaSpec { law, ..LocalDeltaSpec::default() };
        let data = local_delta_corpus(&spec)?;
        let anchors: Vec<Anchor> = data.anchors.iter().cloned().map(Anchor::point).collect();
        let field = FieldParams { top_n: 400, d_max: 1.0, top_n_zeta: spec.dim, ..FieldParams::default() };
        let params = CalibrationParams { field, seed: 11, ..CalibrationParams::default() };
        let (_, summary) = calibrate_corpus(&data.corpus, &anchors, &params)?;
        let c = summary.median_coverages.unwrap_or([f64::NAN; 3]);
        println!(
            "{law:?}: pass {}/{} ({:.3}), median coverage {:.3} / {:.3} / {:.3}",
            summary.anchors_passed, summary.anchors_total, summary.pass_fraction, c[0], c[1], c[2]
        );
    }
    Ok(())
}
