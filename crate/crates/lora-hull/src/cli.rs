//! Command-line surface. Every subcommand is a thin wrapper over the library.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use lora_hull_core::adapter::{validate_mixspec, MixSpec};
use lora_hull_core::diagnostics::{
    hull_points, mds_embed, pairwise_cosine, pairwise_factor_cosine, pairwise_sq_l2, pairwise_sq_l2_points,
};
use lora_hull_core::interpolation::{compose_multi, recompress, to_dense, to_lowrank_concat};
use lora_hull_core::sweep::{
    plan_alpha_line, plan_lambda_line, plan_simplex, plan_spider, run_sweep, uniform_grid, Scorer, SweepPlan,
    DEFAULT_ALPHA_LINE, DEFAULT_SPIDER_ALPHAS, EXTRAPOLATION_ALPHA_LINE,
};
use lora_hull_core::synthetic::{gen_anchor_set, AttributeOracle, SyntheticSpec};
use lora_hull_core::AnchorSet;

use crate::checkpoint::{adapter_to_checkpoint, dense_checkpoint, write_checkpoint};
use crate::error::{Error, Result};
use crate::manifest::{load_anchor_manifest, Manifest, ManifestEntry};
use crate::scores::ScoreTable;
use crate::table::{self, Format};

#[derive(Debug, Parser)]
#[command(name = "lora-hull", version, about = "Interpolate, mix and inspect low-rank adapters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compose one mixture of the anchors and write it as a checkpoint.
    Merge(MergeArgs),
    /// Evaluate a grid of mixtures and write a table.
    Sweep(SweepArgs),
    /// Pairwise similarity of all anchors.
    Diag(DiagArgs),
    /// 2-d (or higher) classical MDS of anchors and interpolation paths.
    Mds(MdsArgs),
    /// Generate a synthetic anchor set with a known score oracle.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// One interpolation weight per attribute.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub alpha: Vec<f32>,
    /// One mixing weight per attribute; must sum to 1.
    #[arg(long, value_delimiter = ',', required = true)]
    pub lambda: Vec<f32>,
    #[arg(long)]
    pub out: PathBuf,
    /// Write per-layer dense deltas as `<layer>.weight`.
    #[arg(long, conflicts_with_all = ["lowrank", "recompress"])]
    pub dense: bool,
    /// Write stacked low-rank factors (the default).
    #[arg(long)]
    pub lowrank: bool,
    /// Truncate each layer to this rank with an SVD.
    #[arg(long)]
    pub recompress: Option<usize>,
    /// Rescale lambda to sum to 1 instead of rejecting it.
    #[arg(long)]
    pub normalize_lambda: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PlanArg {
    Alpha,
    Spider,
    Lambda,
    Simplex,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Anchor manifest. Optional with --synthetic, which can generate anchors.
    #[arg(long, required_unless_present = "synthetic")]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub plan: PlanArg,
    /// Attribute (name or 0-based index) for alpha, spider and lambda plans.
    #[arg(long, default_value = "0")]
    pub attr: String,
    /// Alpha line range as MIN,MAX.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub alpha_range: Option<Vec<f32>>,
    /// Number of alpha line points, endpoints included.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Alpha line preset: 29 points on [-3, 4].
    #[arg(long, conflicts_with_all = ["alpha_range", "steps"])]
    pub extrapolate: bool,
    /// Spider alpha grid.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub alphas: Option<Vec<f32>>,
    /// Mixing weight of the varied attribute in a spider plan.
    #[arg(long)]
    pub lambda_i: Option<f32>,
    /// Alpha of the non-varied attributes (spider and lambda plans).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub others_alpha: f32,
    /// Alpha of the varied attribute in a lambda plan.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub alpha_i: f32,
    /// Lambda grid of a lambda plan (default: 11 points on [0, 1]).
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f32>>,
    /// Three attributes (names or indices) spanning a simplex plan.
    #[arg(long, value_delimiter = ',')]
    pub attrs: Option<Vec<String>>,
    /// Simplex resolution m; the plan has (m+1)(m+2)/2 rows.
    #[arg(long, default_value_t = 10)]
    pub resolution: usize,
    /// Alpha shared by all attributes of a simplex plan.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub alpha_common: f32,
    /// Score rows with the oracle of this synthetic spec (JSON).
    #[arg(long, conflicts_with = "scores")]
    pub synthetic: Option<PathBuf>,
    /// Join scores from this CSV by row_id.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Overrides the synthetic spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Cosine,
    L2,
}

#[derive(Debug, Args)]
pub struct DiagArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(value_enum)]
    pub metric: Metric,
    #[arg(long)]
    pub out: PathBuf,
    /// Cosine over concatenated raw factors instead of dense deltas.
    #[arg(long)]
    pub factor_mode: bool,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct MdsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Also embed each attribute's interpolation path sampled at this alpha step.
    #[arg(long)]
    pub trajectories: Option<f64>,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Spec JSON; the built-in default spec when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Validation(e.to_string()))?;
    run(cli)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Merge(a) => merge(a),
        Command::Sweep(a) => sweep(a),
        Command::Diag(a) => diag(a),
        Command::Mds(a) => mds(a),
        Command::Synth(a) => synth(a),
    }
}

fn warn(msg: impl AsRef<str>) {
    eprintln!("warning: {}", msg.as_ref());
}

fn merge(a: MergeArgs) -> Result<()> {
    let set = load_anchor_manifest(&a.manifest)?;
    let spec = validate_mixspec(MixSpec::new(a.alpha, a.lambda), set.len(), a.normalize_lambda)?;
    for i in spec.out_of_stable_range() {
        warn(format!(
            "alpha {} for {} is outside the usually stable range [-1, 2]",
            spec.alpha[i],
            set.pairs()[i].attribute
        ));
    }
    let composite = compose_multi(&set, &spec)?;
    let mut meta = BTreeMap::new();
    meta.insert("attributes".to_string(), set.attributes().collect::<Vec<_>>().join(","));
    meta.insert("alpha".to_string(), join_nums(&spec.alpha));
    meta.insert("lambda".to_string(), join_nums(&spec.lambda));
    let ck = if a.dense {
        meta.insert("format".into(), "dense_delta".into());
        dense_checkpoint(&to_dense(&composite), meta)
    } else {
        let mut merged = to_lowrank_concat(&composite, "merged");
        if let Some(rank) = a.recompress {
            let out = recompress(&merged, rank)?;
            for l in &out.layers {
                eprintln!("{}: kept rank {}, truncation error {}", l.layer, l.kept_rank, table::fmt_num(l.error));
            }
            merged = out.adapter;
        }
        merged.meta.extend(meta);
        adapter_to_checkpoint(&merged)
    };
    write_checkpoint(&a.out, &ck)
}

fn join_nums(v: &[f32]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn resolve_attr(set_names: &[String], attr: &str) -> Result<usize> {
    if let Some(i) = set_names.iter().position(|n| n == attr) {
        return Ok(i);
    }
    match attr.parse::<usize>() {
        Ok(i) if i < set_names.len() => Ok(i),
        _ => Err(Error::Validation(format!(
            "unknown attribute {attr:?}; expected one of {} or an index below {}",
            set_names.join(", "),
            set_names.len()
        ))),
    }
}

fn read_spec(path: &Path, seed: Option<u64>) -> Result<SyntheticSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut spec: SyntheticSpec = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    Ok(spec)
}

fn build_plan(a: &SweepArgs, names: &[String]) -> Result<SweepPlan> {
    let n = names.len();
    let plan = match a.plan {
        PlanArg::Alpha => {
            let attr = resolve_attr(names, &a.attr)?;
            let (min, max, steps) = if a.extrapolate {
                EXTRAPOLATION_ALPHA_LINE
            } else {
                let (dmin, dmax, dsteps) = DEFAULT_ALPHA_LINE;
                let range = a.alpha_range.clone().unwrap_or_else(|| vec![dmin, dmax]);
                if range.len() != 2 {
                    return Err(Error::Validation("--alpha-range takes MIN,MAX".into()));
                }
                (range[0], range[1], a.steps.unwrap_or(dsteps))
            };
            plan_alpha_line(n, attr, min, max, steps)?
        }
        PlanArg::Spider => {
            let attr = resolve_attr(names, &a.attr)?;
            let lambda_i = a
                .lambda_i
                .ok_or_else(|| Error::Validation("spider plan needs --lambda-i".into()))?;
            let grid = a.alphas.clone().unwrap_or_else(|| DEFAULT_SPIDER_ALPHAS.to_vec());
            plan_spider(n, attr, &grid, lambda_i, a.others_alpha)?
        }
        PlanArg::Lambda => {
            let attr = resolve_attr(names, &a.attr)?;
            let grid = match &a.lambdas {
                Some(g) => g.clone(),
                None => uniform_grid(0.0, 1.0, 11)?,
            };
            plan_lambda_line(n, attr, a.alpha_i, &grid, a.others_alpha)?
        }
        PlanArg::Simplex => {
            let given: Vec<String> = a
                .attrs
                .clone()
                .unwrap_or_else(|| vec!["0".into(), "1".into(), "2".into()]);
            if given.len() != 3 {
                return Err(Error::Validation("--attrs takes exactly three attributes".into()));
            }
            let idx = given.iter().map(|s| resolve_attr(names, s)).collect::<Result<Vec<_>>>()?;
            plan_simplex(n, [idx[0], idx[1], idx[2]], a.resolution, a.alpha_common)?
        }
    };
    Ok(plan)
}

fn sweep(a: SweepArgs) -> Result<()> {
    let synthetic = match &a.synthetic {
        Some(p) => Some(read_spec(p, a.seed)?),
        None => None,
    };
    let (set, oracle): (AnchorSet, Option<AttributeOracle>) = match (&a.manifest, &synthetic) {
        (Some(m), spec) => {
            let set = load_anchor_manifest(m)?;
            let oracle = spec.as_ref().map(gen_anchor_set).transpose()?.map(|(_, o)| o);
            (set, oracle)
        }
        (None, Some(spec)) => {
            let (set, oracle) = gen_anchor_set(spec)?;
            (set, Some(oracle))
        }
        (None, None) => unreachable!("clap requires --manifest or --synthetic"),
    };
    let names: Vec<String> = set.attributes().map(String::from).collect();
    let plan = build_plan(&a, &names)?;
    let table_scores = match &a.scores {
        Some(p) => Some(ScoreTable::read(p)?),
        None => None,
    };
    let scorer: Option<&dyn Scorer> = match (&oracle, &table_scores) {
        (Some(o), _) => Some(o),
        (None, Some(t)) => Some(t),
        (None, None) => None,
    };
    let result = run_sweep(&plan, &set, scorer)?;
    let failed = result.rows.iter().filter(|r| r.score_error.is_some()).count();
    if failed > 0 {
        let first = result.rows.iter().find_map(|r| r.score_error.as_deref()).unwrap_or_default();
        warn(format!("{failed} of {} rows unscored (first: {first})", result.rows.len()));
    }
    let bytes = match Format::infer(&a.out, a.format) {
        Format::Csv => table::sweep_csv(&result),
        Format::Json => table::sweep_json(&result),
    };
    table::write_bytes(&a.out, &bytes)
}

fn diag(a: DiagArgs) -> Result<()> {
    if a.factor_mode && a.metric != Metric::Cosine {
        return Err(Error::Validation("--factor-mode applies to cosine only".into()));
    }
    let set = load_anchor_manifest(&a.manifest)?;
    let adapters: Vec<_> = set.pairs().iter().flat_map(|p| [&p.minus, &p.plus]).collect();
    let (matrix, skipped) = match (a.metric, a.factor_mode) {
        (Metric::Cosine, false) => {
            let r = pairwise_cosine(&adapters)?;
            (r.matrix, r.skipped)
        }
        (Metric::Cosine, true) => {
            let r = pairwise_factor_cosine(&adapters)?;
            (r.matrix, r.skipped)
        }
        (Metric::L2, _) => (pairwise_sq_l2(&adapters)?, Vec::new()),
    };
    if !skipped.is_empty() {
        warn(format!("{} near-zero layer comparisons skipped", skipped.len()));
    }
    let bytes = match Format::infer(&a.out, a.format) {
        Format::Csv => table::similarity_csv(&matrix),
        Format::Json => table::similarity_json(&matrix, &skipped),
    };
    table::write_bytes(&a.out, &bytes)
}

fn mds(a: MdsArgs) -> Result<()> {
    let set = load_anchor_manifest(&a.manifest)?;
    let points = hull_points(&set, a.trajectories)?;
    let distances = pairwise_sq_l2_points(&points)?.to_distances()?;
    let e = mds_embed(&distances, a.dim)?;
    if !e.negative_eigenvalues.is_empty() {
        warn(format!(
            "{} negative eigenvalues (most negative {}); max distance error {}",
            e.negative_eigenvalues.len(),
            table::fmt_num(e.negative_eigenvalues.iter().copied().fold(0.0, f64::min)),
            table::fmt_num(e.max_distance_error)
        ));
    }
    let bytes = match Format::infer(&a.out, a.format) {
        Format::Csv => table::embedding_csv(&e),
        Format::Json => table::embedding_json(&e),
    };
    table::write_bytes(&a.out, &bytes)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    table::write_bytes(path, &v)
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = match &a.spec {
        Some(p) => read_spec(p, a.seed)?,
        None => SyntheticSpec {
            seed: a.seed.unwrap_or_default(),
            ..SyntheticSpec::default()
        },
    };
    let (set, oracle) = gen_anchor_set(&spec)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let mut entries = Vec::with_capacity(set.len());
    for pair in set.pairs() {
        let minus = PathBuf::from(format!("{}.minus.safetensors", pair.attribute));
        let plus = PathBuf::from(format!("{}.plus.safetensors", pair.attribute));
        write_checkpoint(&a.out.join(&minus), &adapter_to_checkpoint(&pair.minus))?;
        write_checkpoint(&a.out.join(&plus), &adapter_to_checkpoint(&pair.plus))?;
        entries.push(ManifestEntry {
            name: pair.attribute.clone(),
            minus,
            plus,
            scaling: None,
        });
    }
    let manifest = Manifest {
        attributes: entries,
        layers: Some(set.schema().clone()),
    };
    manifest.write(&a.out.join("manifest.json"))?;
    write_json(&a.out.join("oracle.json"), &oracle)?;
    write_json(&a.out.join("spec.json"), &spec)
}
