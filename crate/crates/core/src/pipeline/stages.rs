//! Individually invokable stages working on an existing catalog directory.

use std::path::Path;
use std::sync::Arc;

use super::catalog::{triage_log_bytes, LOG_FILE};
use super::*;
use crate::client::{ClassifyOutcome, ComponentInput};
use crate::ica::{model_from_sidecar, model_to_sidecar, IcaModel};
use crate::render::dashboard_filename;
use crate::signal::encode_container;

const MODEL_FILE: &str = "ica_model.json";
const CLASSIFICATIONS: &str = "classifications.json";
const DECISIONS: &str = "decisions.json";

fn read_text(dir: &Path, name: &str, stage: Stage, hint: &str) -> Result<String> {
    let p = dir.join(name);
    std::fs::read_to_string(&p).map_err(|e| PipelineError::stage(stage, format!("{}: {e} ({hint})", p.display())))
}

fn load_model(dir: &Path, stage: Stage) -> Result<IcaModel> {
    let text = read_text(dir, MODEL_FILE, stage, "run `render` first")?;
    model_from_sidecar(&text).map_err(|e| PipelineError::stage(stage, e))
}

fn load_outcomes(dir: &Path) -> Result<Vec<ClassifyOutcome>> {
    let text = read_text(dir, CLASSIFICATIONS, Stage::Triage, "run `classify` first")?;
    serde_json::from_str(&text).map_err(|e| PipelineError::stage(Stage::Triage, format!("{CLASSIFICATIONS}: {e}")))
}

fn load_decisions(dir: &Path, stage: Stage) -> Result<Vec<TriageDecision>> {
    let text = read_text(dir, DECISIONS, stage, "run `triage` first")?;
    serde_json::from_str(&text).map_err(|e| PipelineError::stage(stage, format!("{DECISIONS}: {e}")))
}

fn backend_id_of(outcomes: &[ClassifyOutcome]) -> String {
    outcomes
        .first()
        .map(|o| match o {
            ClassifyOutcome::Classified(c) => c.backend_id.clone(),
            ClassifyOutcome::Flagged(f) => f.backend_id.clone(),
        })
        .unwrap_or_default()
}

/// Fits (or reuses) the model and writes `ica_model.json` plus dashboards.
/// Returns the component count.
pub fn stage_render(cfg: &RunConfig, input: &Path) -> Result<usize> {
    cfg.validate()?;
    let dir = cfg.out_dir_for(input);
    let out = OutputDir::open(&dir)?;
    let rec = preprocess(&ingest(input)?, cfg)?;
    let model = match dir.join(MODEL_FILE).exists() {
        true => load_model(&dir, Stage::Render)?,
        false => fit_model(&rec, &cfg.ica)?,
    };
    let id = cfg.dataset_id_for(input);
    let (_, dashboards) = render_dashboards(&model, &rec, &id, &cfg.render)?;
    let staging = out.staging()?;
    staging.write(MODEL_FILE, model_to_sidecar(&model).as_bytes())?;
    for d in &dashboards {
        let png = d.to_png().map_err(|e| PipelineError::stage(Stage::Render, e))?;
        staging.write(&format!("dashboards/{}", d.filename()), &png)?;
    }
    staging.commit()?;
    Ok(dashboards.len())
}

/// Classifies the dashboards on disk and writes `classifications.json`.
pub fn stage_classify(cfg: &RunConfig, input: &Path) -> Result<Vec<ClassifyOutcome>> {
    cfg.validate()?;
    let preflight = preflight_backend(cfg)?;
    let truth = cfg.ground_truth.as_deref().map(load_truth).transpose()?;
    let dir = cfg.out_dir_for(input);
    let out = OutputDir::open(&dir)?;
    let model = load_model(&dir, Stage::Classify)?;
    let rec = preprocess(&ingest(input)?, cfg)?;
    let id = cfg.dataset_id_for(input);
    let acts = crate::ica::activations(&model, &rec).map_err(|e| PipelineError::stage(Stage::Features, e))?;
    let mixing = model.mixing();
    let mut inputs = Vec::with_capacity(model.n_components());
    for i in 0..model.n_components() {
        let p = dir.join("dashboards").join(dashboard_filename(&id, i));
        let png = std::fs::read(&p)
            .map_err(|e| PipelineError::stage(Stage::Classify, format!("{}: {e} (run `render` first)", p.display())))?;
        let weights: Vec<f64> = mixing.column(i).iter().copied().collect();
        let features = compute_features(acts.row(i), rec.sfreq(), &weights, rec.montage().positions(), cfg.line_freq);
        inputs.push(ComponentInput { component_index: i, png: Some(Arc::new(png)), features: Some(features) });
    }
    let backend = match preflight {
        Preflight::Ready(b) => b,
        Preflight::Oracle => {
            let map = truth_labels(&model, &rec, truth.as_ref().expect("validated"))?;
            make_backend(&cfg.backend, Some(map)).map_err(|e| PipelineError::stage(Stage::Classify, e))?
        }
    };
    let backend = with_transcript(backend, cfg)?;
    let outcomes = classify(&inputs, backend.as_ref(), &cfg.backend)?;
    let staging = out.staging()?;
    staging.write(CLASSIFICATIONS, &serde_json::to_vec_pretty(&outcomes).expect("outcomes serialize"))?;
    staging.commit()?;
    Ok(outcomes)
}

/// Applies the policy (and `cfg.overrides`) to `classifications.json`,
/// writing `decisions.json` and appending to the triage log.
pub fn stage_triage(cfg: &RunConfig, input: &Path) -> Result<Vec<TriageDecision>> {
    cfg.validate()?;
    let dir = cfg.out_dir_for(input);
    let out = OutputDir::open(&dir)?;
    let outcomes = load_outcomes(&dir)?;
    let model = load_model(&dir, Stage::Triage)?;
    let decisions = triage(&outcomes, cfg)?;
    write_decisions(&out, &decisions, &model, cfg, &backend_id_of(&outcomes))?;
    Ok(decisions)
}

fn write_decisions(out: &OutputDir, decisions: &[TriageDecision], model: &IcaModel, cfg: &RunConfig, backend_id: &str) -> Result<()> {
    let log = triage_log_bytes(out, decisions, &model.content_hash(), &cfg.triage, backend_id)?;
    let staging = out.staging()?;
    staging.write(DECISIONS, &serde_json::to_vec_pretty(decisions).expect("decisions serialize"))?;
    staging.write(LOG_FILE, &log)?;
    staging.commit()
}

/// Rebuilds `cleaned_raw.icvrec` from `decisions.json`.
pub fn stage_clean(cfg: &RunConfig, input: &Path) -> Result<Recording> {
    cfg.validate()?;
    let dir = cfg.out_dir_for(input);
    let out = OutputDir::open(&dir)?;
    let model = load_model(&dir, Stage::Clean)?;
    let decisions = load_decisions(&dir, Stage::Clean)?;
    let rec = preprocess(&ingest(input)?, cfg)?;
    let cleaned = clean(&model, &rec, &decisions)?;
    let staging = out.staging()?;
    staging.write("cleaned_raw.icvrec", &encode_container(&cleaned))?;
    staging.commit()?;
    Ok(cleaned)
}

/// Applies a reviewer's override file to an existing catalog and rewrites
/// every catalog file from the updated decisions.
pub fn review_apply(cfg: &RunConfig, input: &Path, overrides: &Path) -> Result<RunSummary> {
    let start = Instant::now();
    cfg.validate()?;
    let dir = cfg.out_dir_for(input);
    let out = OutputDir::open(&dir)?;
    let model = load_model(&dir, Stage::Triage)?;
    let outcomes = load_outcomes(&dir)?;
    let decisions = load_decisions(&dir, Stage::Triage)?;
    let text = std::fs::read_to_string(overrides)
        .map_err(|e| PipelineError::stage(Stage::Triage, format!("{}: {e}", overrides.display())))?;
    let ov = parse_overrides(&text).map_err(|e| PipelineError::stage(Stage::Triage, e))?;
    let decisions = apply_overrides(&decisions, &ov).map_err(|e| PipelineError::stage(Stage::Triage, e))?;

    let rec = preprocess(&ingest(input)?, cfg)?;
    let id = cfg.dataset_id_for(input);
    let (_, dashboards) = render_dashboards(&model, &rec, &id, &cfg.render)?;
    let pngs = dashboards
        .iter()
        .map(|d| d.to_png().map_err(|e| PipelineError::stage(Stage::Render, e)))
        .collect::<Result<Vec<_>>>()?;
    let cleaned = clean(&model, &rec, &decisions)?;
    let truth_map = match cfg.ground_truth.as_deref() {
        Some(p) => Some(truth_labels(&model, &rec, &load_truth(p)?)?),
        None => None,
    };
    let backend_id = backend_id_of(&outcomes);
    let cat = CatalogInputs {
        dataset_id: &id,
        config: cfg,
        model: &model,
        dashboards: &dashboards,
        pngs: pngs.iter().map(|p| p.as_slice()).collect(),
        outcomes: &outcomes,
        decisions: &decisions,
        cleaned: &cleaned,
        backend_id: &backend_id,
        truth: truth_map.as_ref(),
    };
    let staging = out.staging()?;
    let hashes = write_catalog(&cat, &staging, &out)?;
    let mut s = summarize(&cat, hashes);
    staging.commit()?;
    s.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(s)
}
