use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use eegvl::client::BackendKind;
use eegvl::eval::{build_report, LabelSet};
use eegvl::ica::IcaMethod;
use eegvl::pipeline::{self, PipelineError, RunConfig};
use eegvl::synth::{desk_corpus, e2e_corpus, ica_corpus};
use eegvl::triage::LabelMerge;

#[derive(Parser)]
#[command(name = "eegvl", version, about = "EEG ICA component triage")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Full pipeline: filter, ICA, dashboards, classification, triage, cleaning, catalog.
    Run {
        #[command(flatten)]
        common: Common,
        /// Exit with status 4 when any component ends up flagged.
        #[arg(long)]
        strict: bool,
    },
    /// Fit ICA (unless a model exists) and write dashboards.
    Render(Common),
    /// Classify rendered dashboards into classifications.json.
    Classify(Common),
    /// Apply the triage policy to classifications.json.
    Triage(Common),
    /// Rebuild the cleaned recording from decisions.json.
    Clean(Common),
    /// Agreement metrics between label files.
    Eval(EvalArgs),
    /// Generate a synthetic corpus with ground truth.
    Synth(SynthArgs),
    /// Apply a reviewer's override file and rewrite the catalog.
    ReviewApply {
        #[command(flatten)]
        common: Common,
        #[arg(long = "review")]
        review: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    HttpApi,
    OracleMock,
    Heuristic,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Fastica,
    ExtendedInfomax,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input recording (.icvrec container or .edf); repeatable.
    #[arg(long = "input", short = 'i')]
    inputs: Vec<PathBuf>,
    #[arg(long, short = 'o')]
    out: Option<PathBuf>,
    #[arg(long)]
    dataset_id: Option<String>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long)]
    n_components: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Band-pass edges in Hz.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    band: Option<Vec<f64>>,
    #[arg(long)]
    line_freq: Option<f64>,
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    #[arg(long)]
    overrides: Option<PathBuf>,
    #[arg(long)]
    record_transcript: Option<PathBuf>,
    #[arg(long)]
    replay_transcript: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<RunConfig, PipelineError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if !self.inputs.is_empty() {
            c.inputs = self.inputs.clone();
        }
        if let Some(o) = &self.out {
            c.out_dir = o.clone();
        }
        if self.dataset_id.is_some() {
            c.dataset_id = self.dataset_id.clone();
        }
        if let Some(b) = self.backend {
            c.backend.kind = match b {
                BackendArg::HttpApi => BackendKind::HttpApi,
                BackendArg::OracleMock => BackendKind::OracleMock,
                BackendArg::Heuristic => BackendKind::Heuristic,
            };
        }
        if let Some(m) = self.method {
            c.ica.method = match m {
                MethodArg::Fastica => IcaMethod::Fastica,
                MethodArg::ExtendedInfomax => IcaMethod::ExtendedInfomax,
            };
        }
        if self.n_components.is_some() {
            c.ica.n_components = self.n_components;
        }
        if let Some(s) = self.seed {
            c.ica.seed = s;
        }
        if let Some(b) = &self.band {
            c.band = [b[0], b[1]];
        }
        if let Some(l) = self.line_freq {
            c.line_freq = l;
        }
        for (dst, src) in [
            (&mut c.ground_truth, &self.ground_truth),
            (&mut c.overrides, &self.overrides),
            (&mut c.record_transcript, &self.record_transcript),
            (&mut c.replay_transcript, &self.replay_transcript),
        ] {
            if src.is_some() {
                *dst = src.clone();
            }
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct EvalArgs {
    /// Label file, optionally prefixed with a rater id (`human=path`); repeatable.
    /// With three files the order is: automated, baseline, human.
    #[arg(long = "labels", required = true)]
    labels: Vec<String>,
    /// Rater id treated as truth for the confusion matrix.
    #[arg(long)]
    truth: Option<String>,
    /// Keep all seven labels instead of folding line noise into other.
    #[arg(long)]
    no_merge: bool,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CorpusArg {
    Desk,
    E2e,
    Ica,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, short = 'o')]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "desk")]
    corpus: CorpusArg,
}

fn print_json<T: serde::Serialize>(v: &T) {
    use std::io::Write;
    // a closed pipe (`| head`) is not an error worth a panic
    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(v).expect("serializes"));
}

fn each_input<T>(c: &RunConfig, f: impl Fn(&RunConfig, &Path) -> Result<T, PipelineError>) -> Result<Vec<T>, PipelineError> {
    c.inputs.iter().map(|p| f(c, p)).collect()
}

fn eval(args: &EvalArgs) -> Result<(), String> {
    let mut sets = Vec::new();
    for spec in &args.labels {
        let (id, path) = match spec.split_once('=') {
            Some((id, p)) => (id.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(spec);
                let id = p.file_stem().map_or_else(|| spec.clone(), |s| s.to_string_lossy().into_owned());
                (id, p)
            }
        };
        let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        sets.push(LabelSet::parse(&id, &text).map_err(|e| format!("{}: {e}", path.display()))?);
    }
    let merge = if args.no_merge { LabelMerge::identity() } else { LabelMerge::default() };
    let report = build_report(&sets, &merge, args.truth.as_deref()).map_err(|e| e.to_string())?;
    print!("{}", report.to_table());
    if let Some(p) = &args.json {
        std::fs::write(p, report.to_json()).map_err(|e| format!("{}: {e}", p.display()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result: Result<u8, PipelineError> = (|| match &cli.cmd {
        Cmd::Run { common, strict } => {
            let summaries = pipeline::run(&common.config()?)?;
            print_json(&summaries);
            let flagged = summaries.iter().any(|s| s.verdicts.flagged > 0);
            Ok(if *strict && flagged { 4 } else { 0 })
        }
        Cmd::Render(c) => {
            let n = each_input(&c.config()?, pipeline::stage_render)?;
            println!("rendered {} dashboards", n.iter().sum::<usize>());
            Ok(0)
        }
        Cmd::Classify(c) => {
            let out = each_input(&c.config()?, pipeline::stage_classify)?;
            print_json(&out);
            Ok(0)
        }
        Cmd::Triage(c) => {
            let out = each_input(&c.config()?, pipeline::stage_triage)?;
            print_json(&out);
            Ok(0)
        }
        Cmd::Clean(c) => {
            let out = each_input(&c.config()?, pipeline::stage_clean)?;
            println!("cleaned {} recording(s)", out.len());
            Ok(0)
        }
        Cmd::ReviewApply { common, review } => {
            let out = each_input(&common.config()?, |c, p| pipeline::review_apply(c, p, review))?;
            print_json(&out);
            Ok(0)
        }
        Cmd::Synth(a) => {
            let entries = match a.corpus {
                CorpusArg::Desk => desk_corpus(),
                CorpusArg::E2e => e2e_corpus(),
                CorpusArg::Ica => ica_corpus(),
            };
            for p in pipeline::write_synth_corpus(&a.out, &entries)? {
                println!("{}", p.display());
            }
            Ok(0)
        }
        Cmd::Eval(a) => eval(a).map(|_| 0).map_err(PipelineError::Config),
    })();
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
