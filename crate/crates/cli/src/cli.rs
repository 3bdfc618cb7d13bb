//! Subcommand implementations.

use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::Utc;
use clap::{Args, Parser, Subcommand, ValueEnum};
use latentlayout::constraints::ConstraintSet;
use latentlayout::io::{layouts_to_string, load_layouts};
use latentlayout::layout::{LabelVocabulary, Layout};
use latentlayout::metrics::{evaluate, mean_alignment_overlap, FeatureSet};
use latentlayout::net::{Hyperparameters, NetworkWeights};
use latentlayout::optim::{AdamOptions, CmaEsSettings, InnerOptimizer, SolveOptions};
use serde::Serialize;

use crate::error::{AppError, FieldErrors, Result};
use crate::model::ModelRef;
use crate::request::{parse_label_list, resolve_labels, validate_solve, SolveRequest};
use crate::service::{execute, serve, AppState};
use crate::store::{new_run_id, RunRecord, RunStore};
use crate::WORKSPACE_ENV;

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_UNSATISFIED: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "latentlayout", version, about = "Constrained layout generation by latent code optimization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample layouts from a model.
    Gen(GenArgs),
    /// Optimize latent codes until the layout satisfies the constraints.
    Optimize(OptimizeArgs),
    /// Compute metrics of generated layouts against references.
    Eval(EvalArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Write a randomly initialized weight container.
    InitWeights(InitWeightsArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// `analytic:<seed>[:<vocabulary>]` or a weight manifest path.
    #[arg(long)]
    pub model: String,
    /// Comma-separated label names or ids.
    #[arg(long)]
    pub labels: String,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Layout `i` is sampled with seed `seed + i`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Reference layouts to print a metric summary against.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InnerKind {
    CmaEs,
    Adam,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub model: String,
    /// Comma-separated label names or ids.
    #[arg(long, conflicts_with = "layout", required_unless_present = "layout")]
    pub labels: Option<String>,
    /// Take the labels from a layout file instead.
    #[arg(long)]
    pub layout: Option<PathBuf>,
    #[arg(long, default_value_t = 0, requires = "layout")]
    pub layout_index: usize,
    /// Constraint document; omitted means no constraints.
    #[arg(long)]
    pub constraints: Option<PathBuf>,
    /// Solve options document.
    #[arg(long)]
    pub options: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long, value_enum)]
    pub inner: Option<InnerKind>,
    #[arg(long)]
    pub eps_stop: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also record the run in this workspace.
    #[arg(long, env = WORKSPACE_ENV)]
    pub workspace: Option<PathBuf>,
    /// Print one line per outer iteration to stderr.
    #[arg(long)]
    pub progress: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub generated: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    /// Feature embeddings of the reference layouts, for FID.
    #[arg(long, requires = "generated_features")]
    pub real_features: Option<PathBuf>,
    #[arg(long, requires = "real_features")]
    pub generated_features: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = WORKSPACE_ENV, default_value = "workspace")]
    pub workspace: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WeightConfig {
    /// d_model 8, two blocks; for tests and demos.
    Mini,
    /// d_model 256, eight blocks.
    Full,
}

#[derive(Debug, Args)]
pub struct InitWeightsArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1234)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "mini")]
    pub config: WeightConfig,
    /// publaynet, rico or magazine.
    #[arg(long, default_value = "publaynet")]
    pub vocabulary: String,
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, format!("{text}\n"))
            .map_err(|e| AppError::io(format!("writing {}", p.display()), e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}").map_err(|e| AppError::io("writing stdout", e))
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| AppError::io(format!("reading {}", path.display()), e))
}

pub fn mini_hyperparameters(vocab_size: usize) -> Hyperparameters {
    Hyperparameters {
        d_model: 8,
        ffn_hidden: 4,
        heads: 2,
        blocks: 2,
        mlp_hidden: 6,
        d_z: 4,
        vocab_size,
        max_elements: 9,
    }
}

#[derive(Serialize)]
struct Summary {
    max_iou: Option<f64>,
    alignment: f64,
    overlap: f64,
}

pub fn run_gen(args: &GenArgs) -> Result<u8> {
    let handle = ModelRef::parse_cli(&args.model)?.load()?;
    let mut errors = FieldErrors::default();
    let labels = resolve_labels(&parse_label_list(&args.labels), handle.vocab(), &mut errors);
    errors.finish()?;
    let layouts: Vec<Layout> = (0..args.count as u64)
        .map(|i| handle.sample(&labels, args.seed.wrapping_add(i)).map(|(l, _)| l))
        .collect::<latentlayout::Result<_>>()?;
    write_output(args.out.as_deref(), &layouts_to_string(&layouts, handle.vocab())?)?;
    if let Some(reference) = &args.reference {
        let refs = load_layouts(reference)?;
        let (alignment, overlap) = mean_alignment_overlap(&layouts);
        let max_iou = latentlayout::metrics::max_iou(&layouts, &refs.layouts).ok();
        let summary = Summary {
            max_iou,
            alignment,
            overlap,
        };
        eprintln!("{}", serde_json::to_string(&summary).expect("summary serializes"));
    }
    Ok(EXIT_OK)
}

fn solve_options(args: &OptimizeArgs) -> Result<SolveOptions> {
    let mut options: SolveOptions = match &args.options {
        Some(p) => serde_json::from_str(&read_text(p)?)
            .map_err(|e| AppError::field("options", format!("{}: {e}", p.display())))?,
        None => SolveOptions::default(),
    };
    if let Some(s) = args.seed {
        options.seed = s;
    }
    if let Some(k) = args.k_max {
        options.k_max = k;
    }
    if let Some(e) = args.eps_stop {
        options.eps_stop = e;
    }
    match (args.inner, &options.inner) {
        (Some(InnerKind::CmaEs), InnerOptimizer::Adam(_)) => {
            options.inner = InnerOptimizer::CmaEs(CmaEsSettings::default())
        }
        (Some(InnerKind::Adam), InnerOptimizer::CmaEs(_)) => {
            options.inner = InnerOptimizer::Adam(AdamOptions::default())
        }
        _ => {}
    }
    Ok(options)
}

pub fn run_optimize(args: &OptimizeArgs) -> Result<u8> {
    let model = ModelRef::parse_cli(&args.model)?;
    let handle = model.load()?;
    let mut errors = FieldErrors::default();
    let labels = match (&args.labels, &args.layout) {
        (Some(text), _) => resolve_labels(&parse_label_list(text), handle.vocab(), &mut errors),
        (None, Some(path)) => {
            let file = load_layouts(path)?;
            let layout = file.layouts.get(args.layout_index).ok_or_else(|| {
                AppError::field(
                    "layout",
                    format!("{} has no layout {}", path.display(), args.layout_index),
                )
            })?;
            layout.labels()
        }
        (None, None) => unreachable!("clap requires one of --labels and --layout"),
    };
    let constraints = match &args.constraints {
        Some(p) => ConstraintSet::from_json(&read_text(p)?)
            .map_err(|e| AppError::field("constraints", format!("{}: {e}", p.display())))?,
        None => ConstraintSet::default(),
    };
    let options = solve_options(args)?;
    validate_solve(&handle, &labels, None, &constraints, &options, &mut errors);
    errors.finish()?;

    let request = SolveRequest {
        model: model.descriptor(),
        labels,
        z: None,
        constraints,
        options,
    };
    let progress = args.progress;
    let report = execute(&handle, &request, |it| {
        if progress {
            let worst = it.h.iter().copied().fold(0.0, f64::max);
            eprintln!(
                "k={} L_A={:.6e} f'={:.6e} max_h={:.6e} mu={}",
                it.k, it.lagrangian, it.f_clamped, worst, it.mu
            );
        }
        Ok(())
    })?;
    let satisfied = report.final_state.satisfied;
    write_output(
        args.out.as_deref(),
        &serde_json::to_string_pretty(&report).expect("reports serialize"),
    )?;
    if let Some(ws) = &args.workspace {
        let store = RunStore::open(ws)?;
        let record = RunRecord {
            run_id: new_run_id(),
            created_at: Utc::now(),
            model_ref: model.descriptor(),
            parent: None,
            request,
            report,
        };
        store.insert(&record)?;
        eprintln!("recorded run {}", record.run_id);
    }
    Ok(if satisfied { EXIT_OK } else { EXIT_UNSATISFIED })
}

pub fn run_eval(args: &EvalArgs) -> Result<u8> {
    let generated = load_layouts(&args.generated)?;
    let reference = load_layouts(&args.reference)?;
    let features = match (&args.real_features, &args.generated_features) {
        (Some(r), Some(g)) => Some((FeatureSet::load(r)?, FeatureSet::load(g)?)),
        _ => None,
    };
    let report = evaluate(
        &generated.layouts,
        &reference.layouts,
        features.as_ref().map(|(r, g)| (r, g)),
    )?;
    write_output(
        args.out.as_deref(),
        &serde_json::to_string_pretty(&report).expect("metric reports serialize"),
    )?;
    Ok(EXIT_OK)
}

pub fn run_init_weights(args: &InitWeightsArgs) -> Result<u8> {
    let vocab = match args.vocabulary.as_str() {
        "publaynet" => LabelVocabulary::publaynet(),
        "rico" => LabelVocabulary::rico(),
        "magazine" => LabelVocabulary::magazine(),
        other => return Err(AppError::field("vocabulary", format!("unknown vocabulary `{other}`"))),
    };
    let hyper = match args.config {
        WeightConfig::Mini => mini_hyperparameters(vocab.len()),
        WeightConfig::Full => Hyperparameters {
            vocab_size: vocab.len(),
            ..Hyperparameters::default()
        },
    };
    let weights = NetworkWeights::random(hyper, args.seed)?.with_vocabulary(vocab.names().to_vec())?;
    weights.save(&args.out)?;
    eprintln!("{} parameters written to {}", weights.parameter_count(), args.out.display());
    Ok(EXIT_OK)
}

pub fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Gen(a) => run_gen(&a),
        Command::Optimize(a) => run_optimize(&a),
        Command::Eval(a) => run_eval(&a),
        Command::InitWeights(a) => run_init_weights(&a),
        Command::Serve(a) => {
            let state = AppState::open(&a.workspace)?;
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(|e| AppError::io("starting runtime", e))?;
            rt.block_on(serve(state, &a.bind))?;
            Ok(EXIT_OK)
        }
    }
}
