//! The `vsdb` command line.
//!
//! Every command writes machine-readable output (JSON Lines, JSON or CSV).
//! Failures print one JSON object on stderr and exit nonzero: 2 for bad
//! input or parameters, 1 for everything else.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ballistics::{self, BallisticsParams};
use crate::calibrate::{calibrate_corpus, Anchor, CalibrationParams, PassRule};
use crate::error::{Error, Result};
use crate::field::{field_walk, FieldParams, FieldStatus};
use crate::geometry::{diagnose, find_dense_clusters, rank_extremes, ClusterMethod, ClusterParams, RankBy};
use crate::index::{search, Metric, Search};
use crate::store::{read_jsonl_numbered, Corpus, IdMapping, SequenceLine, Shard};
use crate::triage::{
    compare_methods, default_grid, evaluate, threshold_sweep, LabeledPair, Label, Mode, ScoredPair, Truth,
    TriageParams,
};

#[derive(Debug, Parser)]
#[command(name = "vsdb", version, about = "Vector-sequence store, drift-field scoring and diagnostics")]
pub struct Cli {
    /// Flat TOML file holding defaults for the field, triage, seed, shard and
    /// output options (keys spelled like the flags).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct FieldArgs {
    #[arg(long)]
    pub top_n: Option<usize>,
    #[arg(long)]
    pub d_max: Option<f64>,
    #[arg(long)]
    pub idw_p: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub sigma_min: Option<f64>,
    #[arg(long)]
    pub top_n_zeta: Option<usize>,
    #[arg(long)]
    pub min_support: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TriageArgs {
    #[arg(long)]
    pub zeta_low: Option<f64>,
    #[arg(long)]
    pub zeta_high: Option<f64>,
    /// hallucination or novelty
    #[arg(long)]
    pub mode: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ShardArgs {
    /// Shard file; repeat for several shards.
    #[arg(long = "shard")]
    pub shards: Vec<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest JSON Lines sequences into shard files.
    Build {
        #[arg(long)]
        input: PathBuf,
        /// Shard file, or a directory when --shard-key is given.
        #[arg(long)]
        out: PathBuf,
        /// Route each sequence to a shard named after this input field.
        #[arg(long)]
        shard_key: Option<String>,
        /// Where to write the id → (shard, seq_id) map as JSON Lines.
        #[arg(long)]
        id_map: Option<PathBuf>,
    },
    /// k nearest stored vectors.
    Query {
        #[command(flatten)]
        shards: ShardArgs,
        /// Query vector as a JSON array.
        #[arg(long)]
        vector: Option<String>,
        /// JSON Lines file of query arrays.
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value = "l2")]
        metric: String,
        #[arg(long)]
        max_distance: Option<f64>,
        /// Only return records that have a delta.
        #[arg(long)]
        with_delta: bool,
    },
    /// Score and triage sentence pairs.
    Score {
        #[command(flatten)]
        shards: ShardArgs,
        #[arg(long)]
        pairs: PathBuf,
        /// Directory for outcomes.jsonl and metrics.json.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        field: FieldArgs,
        #[command(flatten)]
        triage: TriageArgs,
    },
    /// Compare the field score with nearest-neighbor baselines.
    Evaluate {
        #[command(flatten)]
        shards: ShardArgs,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        min_coverage: f64,
        #[command(flatten)]
        field: FieldArgs,
        #[command(flatten)]
        triage: TriageArgs,
    },
    /// Sweep the threshold grid and report the risk-coverage area.
    Sweep {
        #[command(flatten)]
        shards: ShardArgs,
        /// Labeled pairs to score against the shards.
        #[arg(long)]
        pairs: Option<PathBuf>,
        /// Precomputed scores: JSON Lines of {zeta_test, zeta_ref, label}.
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Directory for sweep.csv.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        field: FieldArgs,
        #[command(flatten)]
        triage: TriageArgs,
    },
    /// Check local Gaussian calibration at anchors.
    Calibrate {
        #[command(flatten)]
        shards: ShardArgs,
        /// JSON Lines file of anchor arrays.
        #[arg(long)]
        anchors: Option<PathBuf>,
        /// Use this many stored records (with deltas) as anchors instead.
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long, default_value_t = 0.7)]
        train_fraction: f64,
        /// Widen each tolerance by the binomial error bar.
        #[arg(long)]
        error_bars: bool,
        /// Directory for reports.jsonl.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        field: FieldArgs,
    },
    /// Follow the field from a start point.
    Walk {
        #[command(flatten)]
        shards: ShardArgs,
        /// Start point as a JSON array.
        #[arg(long)]
        start: String,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[command(flatten)]
        field: FieldArgs,
    },
    /// Cluster transitions and rank them by divergence or circulation.
    Geometry {
        #[command(flatten)]
        shards: ShardArgs,
        /// Number of k-means clusters.
        #[arg(long)]
        clusters: Option<usize>,
        /// Ball center as a JSON array (with --radius).
        #[arg(long)]
        center: Option<String>,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long, default_value_t = 2)]
        min_size: usize,
        /// divergence_max, divergence_min or circulation_max
        #[arg(long, default_value = "divergence_max")]
        rank_by: String,
        #[arg(long, default_value_t = 5)]
        top_members: usize,
    },
    /// Run the projectile experiment.
    Ballistics {
        #[arg(long)]
        n_trajectories: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, default_value_t = ballistics::DEFAULT_QUERY_THETA)]
        theta: f64,
        #[arg(long, default_value_t = ballistics::DEFAULT_DRAG)]
        drag: f64,
        /// Directory for trajectory and ζ CSV files.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write every corpus trajectory to corpus.csv.
        #[arg(long)]
        with_corpus: bool,
        #[command(flatten)]
        field: FieldArgs,
    },
}

/// Flat config file; keys mirror the flags.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    pub top_n: Option<usize>,
    pub d_max: Option<f64>,
    pub idw_p: Option<f64>,
    pub epsilon: Option<f64>,
    pub sigma_min: Option<f64>,
    pub top_n_zeta: Option<usize>,
    pub min_support: Option<usize>,
    pub zeta_low: Option<f64>,
    pub zeta_high: Option<f64>,
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub shards: Option<Vec<PathBuf>>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::param(format!("config {}: {}", path.display(), e.message())))
    }

    /// Field parameters: flags over file over `base`.
    pub fn field_params(&self, flags: &FieldArgs, base: FieldParams) -> Result<FieldParams> {
        let p = FieldParams {
            top_n: flags.top_n.or(self.top_n).unwrap_or(base.top_n),
            d_max: flags.d_max.or(self.d_max).unwrap_or(base.d_max),
            p: flags.idw_p.or(self.idw_p).unwrap_or(base.p),
            epsilon: flags.epsilon.or(self.epsilon).unwrap_or(base.epsilon),
            sigma_min: flags.sigma_min.or(self.sigma_min).unwrap_or(base.sigma_min),
            top_n_zeta: flags.top_n_zeta.or(self.top_n_zeta).unwrap_or(base.top_n_zeta),
            min_support: flags.min_support.or(self.min_support).unwrap_or(base.min_support),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn triage_params(&self, flags: &TriageArgs) -> Result<TriageParams> {
        let base = TriageParams::default();
        let mode = match &flags.mode {
            Some(m) => m.parse()?,
            None => self.mode.unwrap_or(base.mode),
        };
        let p = TriageParams {
            zeta_low: flags.zeta_low.or(self.zeta_low).unwrap_or(base.zeta_low),
            zeta_high: flags.zeta_high.or(self.zeta_high).unwrap_or(base.zeta_high),
            mode,
        };
        p.validate()?;
        Ok(p)
    }

    fn corpus(&self, flags: &ShardArgs) -> Result<Corpus> {
        let paths = if flags.shards.is_empty() { self.shards.clone().unwrap_or_default() } else { flags.shards.clone() };
        if paths.is_empty() {
            return Err(Error::param("no shard files given"));
        }
        Corpus::load(&paths)
    }

    fn out_dir(&self, flag: &Option<PathBuf>) -> Result<Option<PathBuf>> {
        let dir = flag.clone().or_else(|| self.out.clone());
        if let Some(d) = &dir {
            fs::create_dir_all(d)?;
        }
        Ok(dir)
    }
}

fn parse_vector(text: &str) -> Result<Vec<f64>> {
    serde_json::from_str(text).map_err(|e| Error::param(format!("expected a JSON array of numbers: {e}")))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

fn write_jsonl<T: Serialize>(out: &mut dyn Write, items: impl IntoIterator<Item = T>) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut *out, &item).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn write_json<T: Serialize>(out: &mut dyn Write, item: &T) -> Result<()> {
    write_jsonl(out, std::iter::once(item))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Parses `args` (program name first) and runs the command, writing normal
/// output to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            write!(out, "{e}")?;
            return Ok(());
        }
        Err(e) => return Err(Error::param(e.to_string().lines().next().unwrap_or("").to_string())),
    };
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let seed = cli.seed.or(config.seed).unwrap_or(0);
    match cli.command {
        Command::Build { input, out: target, shard_key, id_map } => {
            cmd_build(&input, &target, shard_key.as_deref(), id_map.as_deref(), out)
        }
        Command::Query { shards, vector, queries, k, metric, max_distance, with_delta } => {
            let corpus = config.corpus(&shards)?;
            let metric: Metric = metric.parse()?;
            let mut opts = Search::new(k, metric);
            if let Some(d) = max_distance {
                opts = opts.within(d);
            }
            if with_delta {
                opts = opts.with_delta();
            }
            let qs: Vec<Vec<f64>> = match (vector, queries) {
                (Some(v), None) => vec![parse_vector(&v)?],
                (None, Some(path)) => read_jsonl_numbered(open(&path)?)?.into_iter().map(|(_, q)| q).collect(),
                _ => return Err(Error::param("give exactly one of --vector or --queries")),
            };
            for (i, q) in qs.iter().enumerate() {
                let hits = search(&corpus, q, &opts)?;
                let neighbors: Vec<QueryHit> = hits
                    .iter()
                    .map(|n| {
                        let r = corpus.record(n.record);
                        QueryHit {
                            shard: n.record.shard,
                            index: n.record.index,
                            seq_id: r.seq_id,
                            pos: r.position,
                            distance: n.distance,
                        }
                    })
                    .collect();
                write_json(out, &QueryLine { query: i, neighbors })?;
            }
            Ok(())
        }
        Command::Score { shards, pairs, out: dir, field, triage } => {
            let corpus = config.corpus(&shards)?;
            let fp = config.field_params(&field, FieldParams::default())?.clamp_zeta(corpus.dim());
            let tp = config.triage_params(&triage)?;
            let examples = read_pairs(&pairs)?;
            let scored = crate::triage::score_examples(&corpus, &examples, &fp)?;
            let (outcomes, metrics) = evaluate(&scored, &tp)?;
            let labeled = examples.iter().any(|e| e.label.is_some());
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for o in &outcomes {
                let key = match o.label {
                    Label::Positive => "positive",
                    Label::Negative => "negative",
                    Label::Unsure => "unsure",
                    Label::Rejected => "rejected",
                };
                *counts.entry(key).or_default() += 1;
            }
            match config.out_dir(&dir)? {
                Some(d) => {
                    let mut f = create(&d.join("outcomes.jsonl"))?;
                    write_jsonl(&mut f, &outcomes)?;
                    f.flush()?;
                    if labeled {
                        let mut f = create(&d.join("metrics.json"))?;
                        write_json(&mut f, &metrics)?;
                        f.flush()?;
                    }
                }
                // without an output directory stdout carries the outcomes alone
                None => return write_jsonl(out, &outcomes),
            }
            write_json(out, &ScoreSummary { examples: outcomes.len(), labels: counts, metrics: labeled.then_some(metrics) })
        }
        Command::Evaluate { shards, pairs, min_coverage, field, triage } => {
            let corpus = config.corpus(&shards)?;
            let fp = config.field_params(&field, FieldParams::default())?.clamp_zeta(corpus.dim());
            let tp = config.triage_params(&triage)?;
            let examples = read_pairs(&pairs)?;
            if examples.iter().any(|e| e.label.is_none()) {
                return Err(Error::param("evaluate needs a label on every pair"));
            }
            let rows = compare_methods(&corpus, &examples, &fp, &default_grid(), tp.mode, min_coverage)?;
            write_jsonl(out, &rows)
        }
        Command::Sweep { shards, pairs, scores, out: dir, field, triage } => {
            let tp = config.triage_params(&triage)?;
            let scored = match (pairs, scores) {
                (Some(p), None) => {
                    let corpus = config.corpus(&shards)?;
                    let fp = config.field_params(&field, FieldParams::default())?.clamp_zeta(corpus.dim());
                    crate::triage::score_examples(&corpus, &read_pairs(&p)?, &fp)?
                }
                (None, Some(s)) => read_scores(&s)?,
                _ => return Err(Error::param("give exactly one of --pairs or --scores")),
            };
            let sweep = threshold_sweep(&scored, &default_grid(), tp.mode)?;
            if let Some(d) = config.out_dir(&dir)? {
                let f = create(&d.join("sweep.csv"))?;
                write_sweep_csv(f, &sweep.cells)?;
            }
            write_json(out, &SweepSummary { cells: sweep.cells.len(), aurc: sweep.aurc })
        }
        Command::Calibrate { shards, anchors, sample, train_fraction, error_bars, out: dir, field } => {
            let corpus = config.corpus(&shards)?;
            let fp = config.field_params(&field, FieldParams::default())?.clamp_zeta(corpus.dim());
            let anchors: Vec<Anchor> = match (anchors, sample) {
                (Some(path), None) => read_jsonl_numbered::<Vec<f64>, _>(open(&path)?)?
                    .into_iter()
                    .map(|(_, a)| Anchor::point(a))
                    .collect(),
                (None, Some(n)) => {
                    let mut refs: Vec<_> =
                        corpus.refs().filter(|&r| corpus.record(r).delta.is_some()).collect();
                    refs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
                    refs.truncate(n);
                    refs.sort();
                    refs.into_iter().map(|r| Anchor::record(&corpus, r)).collect()
                }
                _ => return Err(Error::param("give exactly one of --anchors or --sample")),
            };
            let params = CalibrationParams {
                field: fp,
                train_fraction,
                seed,
                rule: if error_bars { PassRule::WithinErrorBars } else { PassRule::Strict },
            };
            let (reports, summary) = calibrate_corpus(&corpus, &anchors, &params)?;
            if let Some(d) = config.out_dir(&dir)? {
                let mut f = create(&d.join("reports.jsonl"))?;
                write_jsonl(&mut f, &reports)?;
                f.flush()?;
            }
            write_json(out, &summary)
        }
        Command::Walk { shards, start, steps, field } => {
            let corpus = config.corpus(&shards)?;
            let fp = config.field_params(&field, FieldParams::default())?;
            write_jsonl(out, field_walk(&corpus, &parse_vector(&start)?, steps, &fp)?)
        }
        Command::Geometry { shards, clusters, center, radius, min_size, rank_by, top_members } => {
            let corpus = config.corpus(&shards)?;
            let method = match (clusters, center, radius) {
                (Some(n), None, None) => ClusterMethod::KMeans { n_clusters: n, max_iter: 100, seed },
                (None, Some(c), Some(r)) => ClusterMethod::Ball { center: parse_vector(&c)?, radius: r },
                _ => return Err(Error::param("give either --clusters or both --center and --radius")),
            };
            let by: RankBy = rank_by.parse()?;
            let found = find_dense_clusters(&corpus, &ClusterParams { method, min_size })?;
            let diags = diagnose(&corpus, &found)?;
            write_jsonl(out, rank_extremes(&corpus, &diags, by, top_members))
        }
        Command::Ballistics { n_trajectories, dt, theta, drag, out: dir, with_corpus, field } => {
            let defaults = BallisticsParams::default();
            let params = BallisticsParams {
                n_trajectories: n_trajectories.unwrap_or(defaults.n_trajectories),
                dt: dt.unwrap_or(defaults.dt),
                ..defaults
            };
            // the experiment has its own field defaults; only explicit flags override them
            let fp = RunConfig::default().field_params(&field, ballistics::experiment_field_params())?;
            let corpus = ballistics::build_corpus(&params)?;
            let clean = ballistics::run_experiment(&corpus, &params, &fp, theta, 0.0)?;
            let dragged = ballistics::run_experiment(&corpus, &params, &fp, theta, drag)?;
            if let Some(d) = config.out_dir(&dir)? {
                ballistics::write_trajectory_csv(
                    create(&d.join("query_clean.csv"))?,
                    &[(theta, &clean.trajectory[..])],
                )?;
                ballistics::write_trajectory_csv(
                    create(&d.join("query_drag.csv"))?,
                    &[(theta, &dragged.trajectory[..])],
                )?;
                ballistics::write_zeta_csv(create(&d.join("zeta_clean.csv"))?, &clean.samples)?;
                ballistics::write_zeta_csv(create(&d.join("zeta_drag.csv"))?, &dragged.samples)?;
                if with_corpus {
                    let shard = &corpus.shards()[0];
                    let trajs: Vec<Vec<[f64; 2]>> = (0..shard.sequence_count() as u32)
                        .map(|s| {
                            let r = shard.sequence_range(s).expect("dense ids");
                            r.map(|i| {
                                let v = shard.vector(i);
                                [v[0] as f64, v[1] as f64]
                            })
                            .collect()
                        })
                        .collect();
                    let rows: Vec<(f64, &[[f64; 2]])> =
                        params.angles().into_iter().zip(trajs.iter().map(|t| &t[..])).collect();
                    ballistics::write_trajectory_csv(create(&d.join("corpus.csv"))?, &rows)?;
                }
            }
            write_json(
                out,
                &BallisticsSummary {
                    theta,
                    drag,
                    zeta_clean: clean.zeta_mean,
                    zeta_drag: dragged.zeta_mean,
                    separation: dragged.zeta_mean / clean.zeta_mean,
                    scored_clean: clean.scored,
                    scored_drag: dragged.scored,
                },
            )
        }
    }
}

impl FieldParams {
    /// Caps `top_n_zeta` at the corpus dimension, so the default of 50 works
    /// on low-dimensional stores.
    fn clamp_zeta(mut self, dim: usize) -> Self {
        self.top_n_zeta = self.top_n_zeta.min(dim);
        self
    }
}

#[derive(Serialize)]
struct QueryHit {
    shard: u32,
    index: u32,
    seq_id: u32,
    pos: u32,
    distance: f64,
}

#[derive(Serialize)]
struct QueryLine {
    query: usize,
    neighbors: Vec<QueryHit>,
}

#[derive(Serialize)]
struct ScoreSummary<'a> {
    examples: usize,
    labels: BTreeMap<&'a str, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<crate::triage::MetricsReport>,
}

#[derive(Serialize)]
struct SweepSummary {
    cells: usize,
    aurc: Option<f64>,
}

#[derive(Serialize)]
struct BallisticsSummary {
    theta: f64,
    drag: f64,
    zeta_clean: f64,
    zeta_drag: f64,
    separation: f64,
    scored_clean: usize,
    scored_drag: usize,
}

#[derive(Serialize)]
struct BuildSummary {
    records: usize,
    sequences: usize,
    shards: usize,
}

/// One precomputed score for `sweep --scores`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreLine {
    zeta_test: Option<f64>,
    #[serde(default)]
    zeta_ref: Option<f64>,
    label: Truth,
}

fn read_pairs(path: &Path) -> Result<Vec<LabeledPair>> {
    Ok(read_jsonl_numbered(open(path)?)?.into_iter().map(|(_, p)| p).collect())
}

fn read_scores(path: &Path) -> Result<Vec<ScoredPair>> {
    Ok(read_jsonl_numbered::<ScoreLine, _>(open(path)?)?
        .into_iter()
        .map(|(_, s)| ScoredPair {
            zeta_test: s.zeta_test,
            status_test: if s.zeta_test.is_some() { FieldStatus::Defined } else { FieldStatus::OutOfCorpus },
            zeta_ref: s.zeta_ref,
            status_ref: None,
            truth: Some(s.label),
            reference: None,
            evidence: Vec::new(),
            // without a reference score the gate would block every Negative
            gated: s.zeta_ref.is_some(),
        })
        .collect())
}

fn write_sweep_csv<W: Write>(out: W, cells: &[crate::triage::SweepCell]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    w.write_record(["zeta_low", "zeta_high", "f1", "coverage", "risk", "tp", "tn", "fp", "fn", "unsure", "rejected"])
        .map_err(csv_io)?;
    for c in cells {
        let k = &c.counts;
        w.write_record([
            c.zeta_low.to_string(),
            c.zeta_high.to_string(),
            opt(c.f1),
            opt(c.coverage),
            opt(c.risk),
            k.tp.to_string(),
            k.tn.to_string(),
            k.fp.to_string(),
            k.fn_.to_string(),
            k.unsure.to_string(),
            k.rejected.to_string(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

fn cmd_build(
    input: &Path,
    target: &Path,
    shard_key: Option<&str>,
    id_map: Option<&Path>,
    out: &mut dyn Write,
) -> Result<()> {
    let lines: Vec<(usize, SequenceLine)> = read_jsonl_numbered(open(input)?)?;
    let dim = lines
        .iter()
        .find_map(|(_, l)| l.vectors.first().map(Vec::len))
        .ok_or_else(|| Error::param("input holds no vectors"))?;
    // group lines by shard key, keeping input order within each group
    let mut groups: BTreeMap<String, Vec<&(usize, SequenceLine)>> = BTreeMap::new();
    for entry in &lines {
        let key = match shard_key {
            None => String::new(),
            Some(k) => match entry.1.extra.get(k) {
                Some(serde_json::Value::String(s)) => s.clone(),
                Some(v) => v.to_string(),
                None => {
                    return Err(Error::Parse { line: entry.0, message: format!("missing shard key {k:?}") })
                }
            },
        };
        groups.entry(key).or_default().push(entry);
    }
    let mut ids = Vec::new();
    let mut shards = Vec::new();
    for (s, (key, group)) in groups.iter().enumerate() {
        let mut shard = Shard::new(dim);
        for (line, seq) in group.iter().map(|e| (e.0, &e.1)) {
            let seq_id = shard.ingest_sequence(&seq.vectors).map_err(|e| Error::Parse {
                line,
                message: format!("sequence {:?}: {e}", seq.id),
            })?;
            ids.push(IdMapping { id: seq.id.clone(), shard: s as u32, seq_id });
        }
        shards.push((key.clone(), shard));
    }
    match shard_key {
        None => shards[0].1.save(target)?,
        Some(_) => {
            fs::create_dir_all(target)?;
            for (key, shard) in &shards {
                shard.save(target.join(format!("{}.vsdb", file_stem(key))))?;
            }
        }
    }
    if let Some(path) = id_map {
        let mut f = create(path)?;
        write_jsonl(&mut f, &ids)?;
        f.flush()?;
    }
    write_json(
        out,
        &BuildSummary {
            records: shards.iter().map(|(_, s)| s.len()).sum(),
            sequences: shards.iter().map(|(_, s)| s.sequence_count()).sum(),
            shards: shards.len(),
        },
    )
}

/// Shard-key value made safe as a file name.
fn file_stem(key: &str) -> String {
    let s: String =
        key.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    if s.is_empty() {
        "_".into()
    } else {
        s
    }
}

/// Exit status for an error: 2 for bad input or parameters, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. }
        | Error::Format { .. }
        | Error::Dimension { .. }
        | Error::EmptySequence
        | Error::Parameter(_) => 2,
        _ => 1,
    }
}

/// One-line JSON error for stderr.
pub fn error_json(e: &Error) -> String {
    let mut obj = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
    if let Error::Parse { line, .. } = e {
        obj["line"] = (*line).into();
    }
    obj.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(toml::from_str::<RunConfig>("top-n = 5\nbogus = 1\n").is_err());
        let c: RunConfig = toml::from_str("top-n = 5\nmode = \"novelty\"\nzeta-high = 4.0\n").unwrap();
        assert_eq!(c.top_n, Some(5));
        assert_eq!(c.mode, Some(Mode::Novelty));
    }

    #[test]
    fn flags_override_config() {
        let c: RunConfig = toml::from_str("top-n = 5\nd-max = 0.5\n").unwrap();
        let flags = FieldArgs { top_n: Some(7), ..Default::default() };
        let p = c.field_params(&flags, FieldParams::default()).unwrap();
        assert_eq!(p.top_n, 7);
        assert_eq!(p.d_max, 0.5);
        assert_eq!(p.top_n_zeta, 50);
        let bad = FieldArgs { d_max: Some(-1.0), ..Default::default() };
        assert!(c.field_params(&bad, FieldParams::default()).is_err());
    }

    #[test]
    fn triage_flags() {
        let c = RunConfig::default();
        let t = TriageArgs { zeta_low: Some(0.5), mode: Some("novelty".into()), ..Default::default() };
        let p = c.triage_params(&t).unwrap();
        assert_eq!((p.zeta_low, p.zeta_high, p.mode), (0.5, 3.0, Mode::Novelty));
        let bad = TriageArgs { zeta_low: Some(4.0), ..Default::default() };
        assert!(c.triage_params(&bad).is_err());
    }

    #[test]
    fn error_lines() {
        let e = Error::Parse { line: 3, message: "bad".into() };
        assert_eq!(exit_code(&e), 2);
        let j: serde_json::Value = serde_json::from_str(&error_json(&e)).unwrap();
        assert_eq!(j["line"], 3);
        assert_eq!(j["error"], "parse");
        assert_eq!(exit_code(&Error::StoreEmpty), 1);
        assert!(!error_json(&Error::NoSupport).contains('\n'));
    }

    #[test]
    fn help_goes_to_output() {
        let mut buf = Vec::new();
        run(["vsdb", "--help"], &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("ballistics"));
    }

    #[test]
    fn unknown_subcommand_is_a_parameter_error() {
        let mut buf = Vec::new();
        assert!(matches!(run(["vsdb", "frobnicate"], &mut buf), Err(Error::Parameter(_))));
    }

    #[test]
    fn file_stems() {
        assert_eq!(file_stem("1990"), "1990");
        assert_eq!(file_stem("a/b c"), "a_b_c");
        assert_eq!(file_stem(""), "_");
    }
}
