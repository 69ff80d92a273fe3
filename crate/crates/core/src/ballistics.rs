//! Two-dimensional projectile corpus and the same-physics / drag experiment.
//!
//! Trajectories are stepped explicitly from the origin: the position moves by
//! `dt · velocity`, then gravity (and optional quadratic drag) updates the
//! velocity. A trajectory ends at the first step that falls below `y = 0` or
//! leaves the domain box; that step is not recorded.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{estimate_field, zeta, FieldParams, FieldStatus};
use crate::store::{Corpus, Shard};

/// Drag coefficient used for the ungrounded query (`a = -c |v| v`).
pub const DEFAULT_DRAG: f64 = 2.0;

/// Launch angle of the query trajectory, in degrees.
pub const DEFAULT_QUERY_THETA: f64 = 33.0;

/// Hard cap on steps per trajectory.
const MAX_STEPS: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallisticsParams {
    pub g: f64,
    pub launch_speed: f64,
    pub dt: f64,
    pub n_trajectories: usize,
    /// Domain box `[0, x_max] × [0, y_max]`.
    pub x_max: f64,
    pub y_max: f64,
    /// Drag on the corpus trajectories; 0 for the reference physics.
    pub drag_coeff: f64,
}

impl Default for BallisticsParams {
    fn default() -> Self {
        let g = 9.81;
        Self {
            g,
            launch_speed: (2.0 * g).sqrt(),
            dt: 0.001,
            n_trajectories: 1000,
            x_max: 2.0,
            y_max: 1.0,
            drag_coeff: 0.0,
        }
    }
}

impl BallisticsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::param(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_trajectories < 2 {
            return Err(Error::param("need at least 2 trajectories"));
        }
        if !(self.drag_coeff >= 0.0) {
            return Err(Error::param("drag must be non-negative"));
        }
        if !(self.g > 0.0 && self.launch_speed > 0.0 && self.x_max > 0.0 && self.y_max > 0.0) {
            return Err(Error::param("gravity, speed and domain must be positive"));
        }
        Ok(())
    }

    /// Launch angles `90 · i / (n - 1)` degrees.
    pub fn angles(&self) -> Vec<f64> {
        let n = self.n_trajectories;
        (0..n).map(|i| 90.0 * i as f64 / (n - 1) as f64).collect()
    }
}

/// Positions of one trajectory launched at `theta` degrees with drag
/// coefficient `drag`. Always starts with `(0, 0)`.
pub fn simulate_trajectory(theta: f64, params: &BallisticsParams, drag: f64) -> Result<Vec<[f64; 2]>> {
    if !(0.0..=90.0).contains(&theta) {
        return Err(Error::param(format!("launch angle {theta} outside [0, 90]")));
    }
    let rad = theta.to_radians();
    let (mut x, mut y) = (0.0, 0.0);
    let (mut vx, mut vy) = (params.launch_speed * rad.cos(), params.launch_speed * rad.sin());
    let mut out = vec![[x, y]];
    for _ in 0..MAX_STEPS {
        x += params.dt * vx;
        y += params.dt * vy;
        if y < 0.0 || x < 0.0 || x > params.x_max || y > params.y_max {
            break;
        }
        out.push([x, y]);
        let speed = (vx * vx + vy * vy).sqrt();
        vx -= params.dt * drag * speed * vx;
        vy -= params.dt * (params.g + drag * speed * vy);
    }
    Ok(out)
}

/// Horizontal distance at which the path leaves the domain, through the
/// ground or the far wall, interpolated linearly within the final step.
pub fn flight_range(theta: f64, params: &BallisticsParams, drag: f64) -> Result<f64> {
    let t = simulate_trajectory(theta, params, drag)?;
    let last = t[t.len() - 1];
    // replay the step that left the domain
    let (mut vx, mut vy) = {
        let rad = theta.to_radians();
        (params.launch_speed * rad.cos(), params.launch_speed * rad.sin())
    };
    for _ in 1..t.len() {
        let speed = (vx * vx + vy * vy).sqrt();
        vx -= params.dt * drag * speed * vx;
        vy -= params.dt * (params.g + drag * speed * vy);
    }
    let next = [last[0] + params.dt * vx, last[1] + params.dt * vy];
    let mut frac: f64 = 1.0;
    if next[1] < 0.0 {
        frac = frac.min(last[1] / (last[1] - next[1]));
    }
    if next[0] > params.x_max {
        frac = frac.min((params.x_max - last[0]) / (next[0] - last[0]));
    }
    Ok(last[0] + frac * (next[0] - last[0]))
}

/// One trajectory per launch angle, ingested in angle order as `f32`.
pub fn build_corpus(params: &BallisticsParams) -> Result<Corpus> {
    params.validate()?;
    let trajectories: Vec<Vec<[f64; 2]>> = params
        .angles()
        .par_iter()
        .map(|&t| simulate_trajectory(t, params, params.drag_coeff))
        .collect::<Result<_>>()?;
    let mut shard = Shard::new(2);
    for t in &trajectories {
        let v: Vec<[f32; 2]> = t.iter().map(|p| [p[0] as f32, p[1] as f32]).collect();
        shard.ingest_sequence(&v)?;
    }
    Ok(Corpus::single(shard))
}

/// Field parameters of the experiment: 10 neighbors within 0.03, `p = 1`,
/// ζ over both coordinates.
pub fn experiment_field_params() -> FieldParams {
    FieldParams { top_n: 10, d_max: 0.03, p: 1.0, top_n_zeta: 2, ..FieldParams::default() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZetaSample {
    pub step: usize,
    pub x: f64,
    pub y: f64,
    pub status: FieldStatus,
    pub zeta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub query_theta: f64,
    pub drag: f64,
    pub zeta_mean: f64,
    /// Number of samples with a defined field.
    pub scored: usize,
    pub samples: Vec<ZetaSample>,
    pub trajectory: Vec<[f64; 2]>,
}

/// Simulates a query at `query_theta` with `drag` and scores every step's
/// delta against the corpus field; `zeta_mean` averages the defined samples.
///
/// The launch point is not scored: every trajectory starts there, so its
/// neighbors are a fan of equidistant origins picked by index order.
pub fn run_experiment(
    corpus: &Corpus,
    params: &BallisticsParams,
    field_params: &FieldParams,
    query_theta: f64,
    drag: f64,
) -> Result<ExperimentResult> {
    if !(query_theta > 0.0 && query_theta < 90.0) {
        return Err(Error::param(format!("query angle {query_theta} must lie strictly inside (0, 90)")));
    }
    if params.angles().contains(&query_theta) {
        return Err(Error::param(format!("query angle {query_theta} coincides with a corpus angle")));
    }
    let trajectory = simulate_trajectory(query_theta, params, drag)?;
    let samples: Vec<ZetaSample> = trajectory
        .par_windows(2)
        .enumerate()
        .skip(1)
        .map(|(step, w)| {
            let delta = [w[1][0] - w[0][0], w[1][1] - w[0][1]];
            let field = estimate_field(corpus, &w[0], field_params)?;
            let z = if field.is_defined() { Some(zeta(&delta, &field, field_params.top_n_zeta)?) } else { None };
            Ok(ZetaSample { step, x: w[0][0], y: w[0][1], status: field.status, zeta: z })
        })
        .collect::<Result<_>>()?;
    let scored: Vec<f64> = samples.iter().filter_map(|s| s.zeta).collect();
    if scored.is_empty() {
        return Err(Error::NoSupport);
    }
    Ok(ExperimentResult {
        query_theta,
        drag,
        zeta_mean: scored.iter().sum::<f64>() / scored.len() as f64,
        scored: scored.len(),
        samples,
        trajectory,
    })
}

/// Writes `theta,step,x,y` rows.
pub fn write_trajectory_csv<W: Write>(out: W, rows: &[(f64, &[[f64; 2]])]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["theta", "step", "x", "y"]).map_err(csv_err)?;
    for (theta, traj) in rows {
        for (step, p) in traj.iter().enumerate() {
            w.write_record([theta.to_string(), step.to_string(), p[0].to_string(), p[1].to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `step,x,y,status,zeta` rows; `zeta` is empty when undefined.
pub fn write_zeta_csv<W: Write>(out: W, samples: &[ZetaSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "x", "y", "status", "zeta"]).map_err(csv_err)?;
    for s in samples {
        let status = match s.status {
            FieldStatus::Defined => "defined",
            FieldStatus::OutOfCorpus => "out_of_corpus",
            FieldStatus::InsufficientStatistics => "insufficient_statistics",
        };
        w.write_record([
            s.step.to_string(),
            s.x.to_string(),
            s.y.to_string(),
            status.to_string(),
            s.zeta.map(|z| z.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::param(format!("csv: {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_at_45_degrees() {
        let p = BallisticsParams::default();
        let t = simulate_trajectory(45.0, &p, 0.0).unwrap();
        let x = t.last().unwrap()[0];
        assert!((1.99..=2.0).contains(&x), "{x}");
    }

    #[test]
    fn apex_at_90_degrees() {
        let p = BallisticsParams::default();
        let t = simulate_trajectory(90.0, &p, 0.0).unwrap();
        let top = t.iter().map(|q| q[1]).fold(f64::MIN, f64::max);
        assert!((0.995..=1.0).contains(&top), "{top}");
    }

    #[test]
    fn grazing_launch() {
        let t = simulate_trajectory(0.0, &BallisticsParams::default(), 0.0).unwrap();
        assert!(!t.is_empty() && t.len() < 5);
        assert_eq!(t[0], [0.0, 0.0]);
    }

    #[test]
    fn horizontal_steps_constant_without_drag() {
        let p = BallisticsParams::default();
        let t = simulate_trajectory(30.0, &p, 0.0).unwrap();
        let vx = p.launch_speed * 30f64.to_radians().cos();
        let mut x = 0.0;
        for q in &t[1..] {
            x += p.dt * vx;
            assert_eq!(q[0], x);
        }
    }

    #[test]
    fn drag_shortens_range() {
        let p = BallisticsParams::default();
        let clean = simulate_trajectory(45.0, &p, 0.0).unwrap();
        let drag = simulate_trajectory(45.0, &p, DEFAULT_DRAG).unwrap();
        assert!(drag.last().unwrap()[0] < clean.last().unwrap()[0]);
    }

    #[test]
    fn halving_dt_is_stable() {
        let p = BallisticsParams::default();
        let half = BallisticsParams { dt: p.dt / 2.0, ..p };
        let a = flight_range(45.0, &p, 0.0).unwrap();
        let b = flight_range(45.0, &half, 0.0).unwrap();
        assert!((a - b).abs() < 1e-3, "{a} vs {b}");
    }

    #[test]
    fn unbounded_landing_converges_at_first_order() {
        let wide = BallisticsParams { x_max: 10.0, ..BallisticsParams::default() };
        let r: Vec<f64> = [1.0, 0.5, 0.25]
            .iter()
            .map(|s| flight_range(45.0, &BallisticsParams { dt: wide.dt * s, ..wide }, 0.0).unwrap() - 2.0)
            .collect();
        assert!(r[0] > r[1] && r[1] > r[2] && r[2] > 0.0);
        assert!((r[0] / r[1] - 2.0).abs() < 0.05, "{r:?}");
    }

    #[test]
    fn flight_range_exits_through_the_box() {
        let p = BallisticsParams::default();
        assert_eq!(flight_range(45.0, &p, 0.0).unwrap(), 2.0);
        let short = flight_range(20.0, &p, 0.0).unwrap();
        let exact = 2.0 * 40f64.to_radians().sin();
        assert!((short - exact).abs() < 5e-3, "{short} vs {exact}");
    }

    #[test]
    fn two_trajectory_corpus() {
        let p = BallisticsParams { n_trajectories: 2, ..BallisticsParams::default() };
        let c = build_corpus(&p).unwrap();
        assert_eq!(c.shards()[0].sequence_count(), 2);
        for s in 0..2 {
            let start = c.shards()[0].sequence_range(s).unwrap().start;
            assert_eq!(c.shards()[0].vector(start), &[0.0, 0.0]);
        }
    }

    #[test]
    fn invalid_params() {
        let p = BallisticsParams { n_trajectories: 1, ..BallisticsParams::default() };
        assert!(build_corpus(&p).is_err());
        let p = BallisticsParams { dt: 0.0, ..BallisticsParams::default() };
        assert!(p.validate().is_err());
        assert!(simulate_trajectory(91.0, &BallisticsParams::default(), 0.0).is_err());
    }

    #[test]
    fn query_angle_checks() {
        let p = BallisticsParams { n_trajectories: 3, ..BallisticsParams::default() };
        let c = build_corpus(&p).unwrap();
        let f = experiment_field_params();
        assert!(run_experiment(&c, &p, &f, 45.0, 0.0).is_err());
        assert!(run_experiment(&c, &p, &f, 0.0, 0.0).is_err());
        assert!(run_experiment(&c, &p, &f, 90.0, 0.0).is_err());
    }

    #[test]
    fn sparse_corpus_has_no_support() {
        // only the shared origin is close enough, and it holds two deltas
        let p = BallisticsParams { n_trajectories: 2, ..BallisticsParams::default() };
        let c = build_corpus(&p).unwrap();
        let f = FieldParams { min_support: 3, d_max: 1e-9, ..experiment_field_params() };
        assert!(matches!(run_experiment(&c, &p, &f, 33.0, 0.0), Err(Error::NoSupport)));
    }

    #[test]
    fn csv_shapes() {
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &[(45.0, &[[0.0, 0.0], [0.5, 0.25]][..])]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "theta,step,x,y\n45,0,0,0\n45,1,0.5,0.25\n");
        let mut buf = Vec::new();
        let s = ZetaSample { step: 0, x: 0.0, y: 0.0, status: FieldStatus::OutOfCorpus, zeta: None };
        write_zeta_csv(&mut buf, &[s]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "step,x,y,status,zeta\n0,0,0,out_of_corpus,\n");
    }
}
