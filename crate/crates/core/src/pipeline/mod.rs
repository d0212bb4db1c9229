//! End-to-end orchestration: ingest, filter, decompose, render, classify,
//! triage, clean and write the output catalog.

mod catalog;
mod stages;

pub use catalog::{
    html_escape, read_manifest, write_catalog, CatalogInputs, Manifest, OutputDir, Staging, MANIFEST, RESULTS_HEADER,
};
pub use stages::{review_apply, stage_classify, stage_clean, stage_render, stage_triage};

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::client::{
    classify_all_blocking, compute_features, make_backend, metered_cost, Backend, BackendConfig, BackendKind,
    ClassifyOutcome, ComponentInput, HttpBackend, Label, RecordingBackend, ReplayBackend,
};
use crate::ica::{
    apply_rejection, fit_extended_infomax, fit_fastica, FastIcaParams, IcaMethod, IcaModel, InfomaxParams,
};
use crate::render::{Dashboard, DashboardRenderer, RenderParams};
use crate::signal::{bandpass_filter, load_container, load_edf, notch_filter, Recording};
use crate::synth::{match_components, GroundTruth};
use crate::triage::{
    apply_overrides, count_verdicts, decide_all, parse_overrides, rejected_set, LabelMerge, TriageDecision,
    TriagePolicy, VerdictCounts,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Filter,
    Ica,
    Render,
    Features,
    Classify,
    Triage,
    Clean,
    Catalog,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Filter => "filter",
            Stage::Ica => "ica",
            Stage::Render => "render",
            Stage::Features => "features",
            Stage::Classify => "classify",
            Stage::Triage => "triage",
            Stage::Clean => "clean",
            Stage::Catalog => "catalog",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("[{stage}] {message}")]
    Stage { stage: Stage, message: String },
    #[error("output directory {0} is locked by another run (remove .lock if stale)")]
    Locked(PathBuf),
}

impl PipelineError {
    pub fn stage(stage: Stage, e: impl std::fmt::Display) -> Self {
        PipelineError::Stage { stage, message: e.to_string() }
    }

    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Locked(_) => 2,
            PipelineError::Stage { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcaConfig {
    pub method: IcaMethod,
    /// `None` means the numerical rank, capped at 40.
    pub n_components: Option<usize>,
    pub seed: u64,
    pub max_iter: Option<usize>,
}

impl Default for IcaConfig {
    fn default() -> Self {
        Self { method: IcaMethod::ExtendedInfomax, n_components: None, seed: 0, max_iter: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    /// Defaults to the input file stem.
    pub dataset_id: Option<String>,
    pub band: [f64; 2],
    pub line_freq: f64,
    pub line_harmonics: usize,
    pub ica: IcaConfig,
    pub render: RenderParams,
    pub backend: BackendConfig,
    pub triage: TriagePolicy,
    pub merge: LabelMerge,
    pub out_dir: PathBuf,
    /// Ground-truth sidecar; required by the oracle backend, optional otherwise.
    pub ground_truth: Option<PathBuf>,
    pub overrides: Option<PathBuf>,
    /// Append every backend exchange to this transcript.
    pub record_transcript: Option<PathBuf>,
    /// Serve classifications from a transcript instead of the backend.
    pub replay_transcript: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            dataset_id: None,
            band: [1.0, 80.0],
            line_freq: 60.0,
            line_harmonics: 1,
            ica: IcaConfig::default(),
            render: RenderParams::default(),
            backend: BackendConfig::default(),
            triage: TriagePolicy::default(),
            merge: LabelMerge::default(),
            out_dir: PathBuf::from("eegvl_out"),
            ground_truth: None,
            overrides: None,
            record_transcript: None,
            replay_transcript: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(PipelineError::Config(m));
        if self.inputs.is_empty() {
            return cfg("no input recordings given".into());
        }
        if self.inputs.len() > 1 && self.dataset_id.is_some() {
            return cfg("dataset_id cannot be shared by several inputs".into());
        }
        let [lo, hi] = self.band;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return cfg(format!("filter band must satisfy 0 < lo < hi, got {lo}..{hi}"));
        }
        if !(self.line_freq > 0.0) || self.line_harmonics == 0 {
            return cfg("line frequency and harmonic count must be positive".into());
        }
        if self.ica.n_components == Some(0) {
            return cfg("n_components must be at least 1".into());
        }
        if self.out_dir.as_os_str().is_empty() {
            return cfg("output directory is empty".into());
        }
        if self.replay_transcript.is_some() && self.record_transcript.is_some() {
            return cfg("record_transcript and replay_transcript are mutually exclusive".into());
        }
        self.backend.validate().map_err(client_config_error)?;
        self.triage.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.backend.kind == BackendKind::OracleMock && self.ground_truth.is_none() {
            return cfg("the oracle backend needs a ground_truth sidecar".into());
        }
        Ok(())
    }

    /// Snapshot embedded in outputs: the output directory is dropped and
    /// inputs reduced to file names, so relocating a run does not change it.
    pub fn snapshot(&self) -> RunConfig {
        let base = |p: &PathBuf| PathBuf::from(p.file_name().unwrap_or(p.as_os_str()));
        let mut s = self.clone();
        s.out_dir = PathBuf::new();
        s.inputs = s.inputs.iter().map(base).collect();
        s.ground_truth = s.ground_truth.as_ref().map(base);
        s.overrides = s.overrides.as_ref().map(base);
        s.record_transcript = s.record_transcript.as_ref().map(base);
        s.replay_transcript = s.replay_transcript.as_ref().map(base);
        s
    }

    pub fn snapshot_toml(&self) -> String {
        toml::to_string(&self.snapshot()).expect("run config serializes")
    }

    pub fn snapshot_hash(&self) -> String {
        hex::encode(Sha256::digest(self.snapshot_toml().as_bytes()))
    }

    fn dataset_id_for(&self, input: &Path) -> String {
        self.dataset_id.clone().unwrap_or_else(|| {
            input.file_stem().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
        })
    }

    /// Catalog directory for one input.
    pub fn out_dir_for(&self, input: &Path) -> PathBuf {
        if self.inputs.len() > 1 {
            self.out_dir.join(self.dataset_id_for(input))
        } else {
            self.out_dir.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub dataset_id: String,
    pub n_components: usize,
    /// Labels as classified, flagged-without-label components excluded.
    pub label_counts: BTreeMap<Label, usize>,
    pub verdicts: VerdictCounts,
    pub total_cost_usd: f64,
    pub backend_id: String,
    pub model_hash: String,
    pub config_hash: String,
    /// SHA-256 of every catalog file, keyed by path relative to the catalog.
    pub output_hashes: BTreeMap<String, String>,
    pub wall_time_secs: f64,
}

impl RunSummary {
    /// Combined digest of the output hashes; wall time is excluded.
    pub fn catalog_hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.output_hashes {
            h.update(k.as_bytes());
            h.update([0]);
            h.update(v.as_bytes());
            h.update([0]);
        }
        hex::encode(h.finalize())
    }
}

/// Reads a recording, choosing the reader from the extension.
pub fn ingest(path: &Path) -> Result<Recording> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let r = match ext.as_str() {
        "edf" => load_edf(path),
        _ => load_container(path),
    };
    r.map_err(|e| PipelineError::stage(Stage::Ingest, format!("{}: {e}", path.display())))
}

/// Band-pass followed by the line notch.
pub fn preprocess(rec: &Recording, cfg: &RunConfig) -> Result<Recording> {
    let bp = bandpass_filter(rec, cfg.band[0], cfg.band[1]).map_err(|e| PipelineError::stage(Stage::Filter, e))?;
    notch_filter(&bp, cfg.line_freq, cfg.line_harmonics).map_err(|e| PipelineError::stage(Stage::Filter, e))
}

pub fn fit_model(rec: &Recording, ica: &IcaConfig) -> Result<IcaModel> {
    let r = match ica.method {
        IcaMethod::Fastica => {
            let mut p = FastIcaParams { n_components: ica.n_components, seed: ica.seed, ..Default::default() };
            if let Some(m) = ica.max_iter {
                p.max_iter = m;
            }
            fit_fastica(rec, &p)
        }
        IcaMethod::ExtendedInfomax => {
            let mut p = InfomaxParams { n_components: ica.n_components, seed: ica.seed, ..Default::default() };
            if let Some(m) = ica.max_iter {
                p.max_iter = m;
            }
            fit_extended_infomax(rec, &p)
        }
    };
    let model = r.map_err(|e| PipelineError::stage(Stage::Ica, e))?;
    if !model.converged {
        log::warn!("ICA stopped after {} iterations without converging", model.n_iterations_used);
    }
    Ok(model)
}

pub fn render_dashboards(model: &IcaModel, rec: &Recording, dataset_id: &str, params: &RenderParams) -> Result<(DashboardRenderer, Vec<Dashboard>)> {
    let r = DashboardRenderer::new(model, rec, params.clone()).map_err(|e| PipelineError::stage(Stage::Render, e))?;
    let dashboards = (0..r.n_components())
        .into_par_iter()
        .map(|i| r.render(i, dataset_id))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| PipelineError::stage(Stage::Render, e))?;
    Ok((r, dashboards))
}

/// Encodes dashboards and attaches heuristic features to each input.
pub fn component_inputs(
    renderer: &DashboardRenderer,
    model: &IcaModel,
    rec: &Recording,
    dashboards: &[Dashboard],
    line_freq: f64,
) -> Result<Vec<ComponentInput>> {
    let mixing = model.mixing();
    let acts = renderer.activations();
    let positions = rec.montage().positions();
    dashboards
        .par_iter()
        .map(|d| {
            let i = d.component_index;
            let png = d.to_png().map_err(|e| PipelineError::stage(Stage::Render, e))?;
            let weights: Vec<f64> = mixing.column(i).iter().copied().collect();
            let features = compute_features(acts.row(i), rec.sfreq(), &weights, positions, line_freq);
            Ok(ComponentInput { component_index: i, png: Some(Arc::new(png)), features: Some(features) })
        })
        .collect()
}

fn load_truth(path: &Path) -> Result<GroundTruth> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
    GroundTruth::from_json(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
}

/// Per-component ground-truth labels by optimal matching of activations to
/// the planted sources.
pub fn truth_labels(model: &IcaModel, rec: &Recording, truth: &GroundTruth) -> Result<BTreeMap<usize, Label>> {
    let matches = match_components(model, rec, truth).map_err(|e| PipelineError::stage(Stage::Classify, e))?;
    Ok(matches.into_iter().map(|m| (m.component, m.label)).collect())
}

/// What can be checked about the backend before any expensive work.
enum Preflight {
    Ready(Box<dyn Backend>),
    Oracle,
}

fn client_config_error(e: crate::client::ClientError) -> PipelineError {
    match e {
        crate::client::ClientError::Config(m) => PipelineError::Config(m),
        other => PipelineError::Config(other.to_string()),
    }
}

fn preflight_backend(cfg: &RunConfig) -> Result<Preflight> {
    if let Some(p) = &cfg.replay_transcript {
        let b = ReplayBackend::load(p).map_err(client_config_error)?;
        return Ok(Preflight::Ready(Box::new(b)));
    }
    let b: Box<dyn Backend> = match cfg.backend.kind {
        BackendKind::OracleMock => return Ok(Preflight::Oracle),
        BackendKind::HttpApi => {
            Box::new(HttpBackend::from_config(&cfg.backend).map_err(client_config_error)?)
        }
        BackendKind::Heuristic => make_backend(&cfg.backend, None).map_err(client_config_error)?,
    };
    Ok(Preflight::Ready(b))
}

fn with_transcript(b: Box<dyn Backend>, cfg: &RunConfig) -> Result<Box<dyn Backend>> {
    match &cfg.record_transcript {
        Some(p) => Ok(Box::new(
            RecordingBackend::new(b, p).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?,
        )),
        None => Ok(b),
    }
}

pub fn classify(inputs: &[ComponentInput], backend: &dyn Backend, cfg: &BackendConfig) -> Result<Vec<ClassifyOutcome>> {
    classify_all_blocking(inputs, backend, cfg).map_err(|e| PipelineError::stage(Stage::Classify, e))
}

pub fn triage(outcomes: &[ClassifyOutcome], cfg: &RunConfig) -> Result<Vec<TriageDecision>> {
    let decisions = decide_all(outcomes, &cfg.triage);
    match &cfg.overrides {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| PipelineError::stage(Stage::Triage, format!("{}: {e}", p.display())))?;
            let ov = parse_overrides(&text).map_err(|e| PipelineError::stage(Stage::Triage, e))?;
            apply_overrides(&decisions, &ov).map_err(|e| PipelineError::stage(Stage::Triage, e))
        }
        None => Ok(decisions),
    }
}

pub fn clean(model: &IcaModel, rec: &Recording, decisions: &[TriageDecision]) -> Result<Recording> {
    let rejected: BTreeSet<usize> = rejected_set(decisions);
    let out = apply_rejection(model, rec, &rejected).map_err(|e| PipelineError::stage(Stage::Clean, e))?;
    if out.n_channels() != rec.n_channels() || out.n_samples() != rec.n_samples() || out.sfreq() != rec.sfreq() {
        return Err(PipelineError::stage(Stage::Clean, "cleaned recording changed shape"));
    }
    Ok(out)
}

/// Runs every input; each gets its own catalog.
pub fn run(cfg: &RunConfig) -> Result<Vec<RunSummary>> {
    cfg.validate()?;
    cfg.inputs.iter().map(|p| run_one(cfg, p)).collect()
}

/// Full pipeline for one input. Backend configuration is checked before
/// the input is read; any stage failure moves what was produced so far into
/// `quarantine/` and leaves the catalog untouched.
pub fn run_one(cfg: &RunConfig, input: &Path) -> Result<RunSummary> {
    let start = Instant::now();
    cfg.validate()?;
    let preflight = preflight_backend(cfg)?;
    let truth = cfg.ground_truth.as_deref().map(load_truth).transpose()?;
    let dataset_id = cfg.dataset_id_for(input);
    let out = OutputDir::open(&cfg.out_dir_for(input))?;
    let staging = out.staging()?;

    let result = (|| {
        let raw = ingest(input)?;
        let rec = preprocess(&raw, cfg)?;
        let model = fit_model(&rec, &cfg.ica)?;
        staging.write("ica_model.json", crate::ica::model_to_sidecar(&model).as_bytes())?;
        let (renderer, dashboards) = render_dashboards(&model, &rec, &dataset_id, &cfg.render)?;
        let inputs = component_inputs(&renderer, &model, &rec, &dashboards, cfg.line_freq)?;
        for (d, inp) in dashboards.iter().zip(&inputs) {
            staging.write(&format!("dashboards/{}", d.filename()), inp.png.as_ref().expect("png attached"))?;
        }
        let truth_map = truth.as_ref().map(|t| truth_labels(&model, &rec, t)).transpose()?;
        let backend = match preflight {
            Preflight::Ready(b) => b,
            Preflight::Oracle => {
                make_backend(&cfg.backend, truth_map.clone()).map_err(|e| PipelineError::stage(Stage::Classify, e))?
            }
        };
        let backend = with_transcript(backend, cfg)?;
        let outcomes = classify(&inputs, backend.as_ref(), &cfg.backend)?;
        let decisions = triage(&outcomes, cfg)?;
        let cleaned = clean(&model, &rec, &decisions)?;
        let backend_id = backend.id();
        let cat = CatalogInputs {
            dataset_id: &dataset_id,
            config: cfg,
            model: &model,
            dashboards: &dashboards,
            pngs: inputs.iter().map(|i| i.png.as_ref().expect("png attached").as_slice()).collect(),
            outcomes: &outcomes,
            decisions: &decisions,
            cleaned: &cleaned,
            backend_id: &backend_id,
            truth: truth_map.as_ref(),
        };
        let hashes = write_catalog(&cat, &staging, &out)?;
        Ok(summarize(&cat, hashes))
    })();

    match result {
        Ok(mut s) => {
            staging.commit()?;
            s.wall_time_secs = start.elapsed().as_secs_f64();
            Ok(s)
        }
        Err(e) => {
            let stage = match &e {
                PipelineError::Stage { stage, .. } => stage.as_str(),
                _ => "config",
            };
            match staging.quarantine(stage) {
                Ok(q) => log::error!("partial outputs moved to {}", q.display()),
                Err(qe) => log::error!("could not quarantine partial outputs: {qe}"),
            }
            Err(e)
        }
    }
}

/// Generates corpus datasets into `dir` as `<id>.icvrec` plus
/// `<id>.truth.json`; returns the recording paths.
pub fn write_synth_corpus(dir: &Path, entries: &[crate::synth::CorpusEntry]) -> Result<Vec<PathBuf>> {
    use crate::signal::{save_container, Montage, STANDARD_1020_19};
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::stage(Stage::Catalog, format!("{}: {e}", dir.display())))?;
    let montage = Montage::standard_1020(&STANDARD_1020_19).expect("standard montage");
    entries
        .par_iter()
        .map(|e| {
            let (rec, truth) =
                crate::synth::generate_dataset(&e.specs, &montage, e.sfreq, e.duration, e.noise_floor_uv, e.seed)
                    .map_err(|err| PipelineError::Config(format!("{}: {err}", e.dataset_id)))?;
            let path = dir.join(format!("{}.icvrec", e.dataset_id));
            save_container(&rec, &path).map_err(|err| PipelineError::stage(Stage::Catalog, err))?;
            let tp = dir.join(format!("{}.truth.json", e.dataset_id));
            std::fs::write(&tp, truth.to_json()).map_err(|err| PipelineError::stage(Stage::Catalog, format!("{}: {err}", tp.display())))?;
            Ok(path)
        })
        .collect()
}

pub(crate) fn summarize(cat: &CatalogInputs<'_>, output_hashes: BTreeMap<String, String>) -> RunSummary {
    let mut label_counts = BTreeMap::new();
    for o in cat.outcomes {
        if let Some(c) = o.classification() {
            *label_counts.entry(c.label).or_insert(0) += 1;
        }
    }
    RunSummary {
        dataset_id: cat.dataset_id.to_string(),
        n_components: cat.outcomes.len(),
        label_counts,
        verdicts: count_verdicts(cat.decisions),
        total_cost_usd: metered_cost(cat.outcomes),
        backend_id: cat.backend_id.to_string(),
        model_hash: cat.model.content_hash(),
        config_hash: cat.config.snapshot_hash(),
        output_hashes,
        wall_time_secs: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_once_inputs_exist() {
        let mut c = RunConfig::default();
        assert!(matches!(c.validate(), Err(PipelineError::Config(_))));
        c.inputs.push("x.icvrec".into());
        c.validate().unwrap();
        c.band = [40.0, 4.0];
        assert!(c.validate().is_err());
    }

    #[test]
    fn oracle_needs_truth() {
        let mut c = RunConfig { inputs: vec!["x".into()], ..Default::default() };
        c.backend.kind = BackendKind::OracleMock;
        assert!(c.validate().is_err());
        c.ground_truth = Some("t.json".into());
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let mut c = RunConfig { inputs: vec!["a.icvrec".into()], ..Default::default() };
        c.ica.n_components = Some(6);
        c.backend.kind = BackendKind::OracleMock;
        let text = toml::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn partial_toml_takes_defaults() {
        let c = RunConfig::from_toml("inputs = [\"a.edf\"]\nline_freq = 50.0\n[ica]\nmethod = \"fastica\"\n").unwrap();
        assert_eq!(c.line_freq, 50.0);
        assert_eq!(c.ica.method, IcaMethod::Fastica);
        assert_eq!(c.band, [1.0, 80.0]);
        assert!(RunConfig::from_toml("line_freq = \"sixty\"").is_err());
    }

    #[test]
    fn snapshot_ignores_location() {
        let a = RunConfig { inputs: vec!["/x/y/sub01.icvrec".into()], out_dir: "/tmp/a".into(), ..Default::default() };
        let b = RunConfig { inputs: vec!["/z/sub01.icvrec".into()], out_dir: "/tmp/b".into(), ..Default::default() };
        assert_eq!(a.snapshot_hash(), b.snapshot_hash());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(PipelineError::Config("x".into()).exit_code(), 2);
        assert_eq!(PipelineError::stage(Stage::Ica, "boom").exit_code(), 3);
        assert_eq!(PipelineError::stage(Stage::Ica, "boom").to_string(), "[ica] boom");
    }
}
