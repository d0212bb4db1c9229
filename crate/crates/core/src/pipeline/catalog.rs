//! Output catalog: staged writes, atomic commit, quarantine, lock file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PipelineError, Result, RunConfig, Stage};
use crate::client::{estimate_cost, metered_cost, BackendKind, ClassifyOutcome, Label};
use crate::ica::IcaModel;
use crate::render::Dashboard;
use crate::signal::{encode_container, Recording};
use crate::triage::{count_verdicts, read_log, LogRecord, TriageDecision};

pub const RESULTS_HEADER: [&str; 9] =
    ["component_index", "label", "confidence", "verdict", "rule", "source", "backend", "usd_cost", "reasoning"];

const LOCK: &str = ".lock";
const STAGING: &str = ".staging";
pub const LOG_FILE: &str = "triage_log.ndjson";
pub const MANIFEST: &str = "manifest.json";

fn io(stage: Stage, path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::stage(stage, format!("{}: {e}", path.display()))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Exclusive handle on a catalog directory. The lock file is removed on drop.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn open(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| io(Stage::Catalog, root, e))?;
        match fs::OpenOptions::new().write(true).create_new(true).open(root.join(LOCK)) {
            Ok(mut f) => {
                use std::io::Write;
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(PipelineError::Locked(root.to_path_buf()))
            }
            Err(e) => return Err(io(Stage::Catalog, root, e)),
        }
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Fresh staging area inside the catalog (same filesystem, so commits
    /// are plain renames).
    pub fn staging(&self) -> Result<Staging<'_>> {
        let dir = self.root.join(STAGING);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| io(Stage::Catalog, &dir, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| io(Stage::Catalog, &dir, e))?;
        Ok(Staging { dir, out: self })
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(self.root.join(LOCK));
    }
}

pub struct Staging<'a> {
    dir: PathBuf,
    out: &'a OutputDir,
}

impl Staging<'_> {
    pub fn write(&self, rel: &str, bytes: &[u8]) -> Result<()> {
        let p = self.dir.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| io(Stage::Catalog, parent, e))?;
        }
        fs::write(&p, bytes).map_err(|e| io(Stage::Catalog, &p, e))
    }

    fn files(&self) -> Result<Vec<String>> {
        let mut out = Vec::new();
        let mut stack = vec![self.dir.clone()];
        while let Some(d) = stack.pop() {
            for entry in fs::read_dir(&d).map_err(|e| io(Stage::Catalog, &d, e))? {
                let p = entry.map_err(|e| io(Stage::Catalog, &d, e))?.path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    let rel = p.strip_prefix(&self.dir).expect("inside staging");
                    out.push(rel.to_string_lossy().replace('\\', "/"));
                }
            }
        }
        out.sort();
        Ok(out)
    }

    /// Renames every staged file over its final name, drops dashboards that
    /// belong to no current component, then removes the staging area.
    pub fn commit(self) -> Result<()> {
        let files = self.files()?;
        let root = &self.out.root;
        let dash = root.join("dashboards");
        // Only a stage that re-renders owns the dashboard set.
        let renders = files.iter().any(|f| f.starts_with("dashboards/"));
        if renders && dash.is_dir() {
            for entry in fs::read_dir(&dash).map_err(|e| io(Stage::Catalog, &dash, e))? {
                let p = entry.map_err(|e| io(Stage::Catalog, &dash, e))?.path();
                let rel = format!("dashboards/{}", p.file_name().unwrap_or_default().to_string_lossy());
                if files.binary_search(&rel).is_err() {
                    fs::remove_file(&p).map_err(|e| io(Stage::Catalog, &p, e))?;
                }
            }
        }
        // Manifest last, so a reader never sees it point at files that are not there yet.
        let (manifest, rest): (Vec<&String>, Vec<&String>) = files.iter().partition(|f| *f == MANIFEST);
        for rel in rest.into_iter().chain(manifest) {
            let dst = root.join(rel);
            if let Some(parent) = dst.parent() {
                fs::create_dir_all(parent).map_err(|e| io(Stage::Catalog, parent, e))?;
            }
            fs::rename(self.dir.join(rel), &dst).map_err(|e| io(Stage::Catalog, &dst, e))?;
        }
        fs::remove_dir_all(&self.dir).map_err(|e| io(Stage::Catalog, &self.dir, e))
    }

    /// Moves the staging area to `quarantine/<stage>-<n>`.
    pub fn quarantine(self, stage: &str) -> std::io::Result<PathBuf> {
        let q = self.out.root.join("quarantine");
        fs::create_dir_all(&q)?;
        let mut n = 0;
        let dst = loop {
            let d = q.join(format!("{stage}-{n}"));
            if !d.exists() {
                break d;
            }
            n += 1;
        };
        fs::rename(&self.dir, &dst)?;
        Ok(dst)
    }
}

/// Everything the catalog is built from.
pub struct CatalogInputs<'a> {
    pub dataset_id: &'a str,
    pub config: &'a RunConfig,
    pub model: &'a IcaModel,
    pub dashboards: &'a [Dashboard],
    /// Encoded dashboards, parallel to `dashboards`.
    pub pngs: Vec<&'a [u8]>,
    pub outcomes: &'a [ClassifyOutcome],
    pub decisions: &'a [TriageDecision],
    pub cleaned: &'a Recording,
    pub backend_id: &'a str,
    pub truth: Option<&'a BTreeMap<usize, Label>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub dataset_id: String,
    pub config_hash: String,
    pub model_hash: String,
    /// Path relative to the catalog → SHA-256.
    pub files: BTreeMap<String, String>,
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let p = dir.join(MANIFEST);
    let text = fs::read_to_string(&p).map_err(|e| io(Stage::Catalog, &p, e))?;
    serde_json::from_str(&text).map_err(|e| io(Stage::Catalog, &p, e))
}

pub fn html_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

fn results_csv(cat: &CatalogInputs<'_>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    let err = |e: csv::Error| PipelineError::stage(Stage::Catalog, format!("results.csv: {e}"));
    w.write_record(RESULTS_HEADER).map_err(err)?;
    for (o, d) in cat.outcomes.iter().zip(cat.decisions) {
        let (label, conf, reasoning, backend) = match o {
            ClassifyOutcome::Classified(c) => {
                (c.label.as_str().to_string(), format!("{:.4}", c.confidence), c.reasoning.clone(), c.backend_id.clone())
            }
            ClassifyOutcome::Flagged(f) => (String::new(), String::new(), f.error.clone(), f.backend_id.clone()),
        };
        let source = match d.source {
            crate::triage::DecisionSource::Policy => "policy",
            crate::triage::DecisionSource::Override => "override",
        };
        w.write_record([
            o.component_index().to_string(),
            label,
            conf,
            d.verdict.as_str().to_string(),
            d.rule_fired.clone(),
            source.to_string(),
            backend,
            format!("{:.6}", o.usd_cost()),
            reasoning,
        ])
        .map_err(err)?;
    }
    w.into_inner().map_err(|e| PipelineError::stage(Stage::Catalog, format!("results.csv: {e}")))
}

fn report_html(cat: &CatalogInputs<'_>, dash_hashes: &BTreeMap<String, String>) -> String {
    let mut s = String::new();
    let counts = count_verdicts(cat.decisions);
    let _ = writeln!(s, "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">");
    let _ = writeln!(s, "<meta name=\"config-hash\" content=\"{}\">", cat.config.snapshot_hash());
    let _ = writeln!(s, "<title>{} components</title>", html_escape(cat.dataset_id));
    let _ = writeln!(
        s,
        "<style>body{{font-family:sans-serif}} .c{{display:flex;gap:1em;border-bottom:1px solid #ccc;padding:.5em}} \
         .reject{{color:#b00}} .flag{{color:#a60}} .keep{{color:#060}}</style>\n</head>\n<body>"
    );
    let _ = writeln!(s, "<h1>{}: {} components</h1>", html_escape(cat.dataset_id), cat.outcomes.len());
    let _ = writeln!(
        s,
        "<p>rejected {} / kept {} / flagged {}; backend {}; cost ${:.6}</p>",
        counts.rejected,
        counts.kept,
        counts.flagged,
        html_escape(cat.backend_id),
        metered_cost(cat.outcomes)
    );
    for ((o, d), dash) in cat.outcomes.iter().zip(cat.decisions).zip(cat.dashboards) {
        let name = dash.filename();
        let hash = &dash_hashes[&format!("dashboards/{name}")];
        let _ = writeln!(s, "<div class=\"c\" id=\"ic{:03}\">", o.component_index());
        let _ = writeln!(
            s,
            "<img src=\"dashboards/{0}\" data-sha256=\"{1}\" width=\"512\" height=\"512\" alt=\"{0}\">",
            html_escape(&name),
            hash
        );
        let _ = writeln!(s, "<div>\n<h2>IC {:03}</h2>", o.component_index());
        match o {
            ClassifyOutcome::Classified(c) => {
                let _ = writeln!(s, "<p>label: <b>{}</b> ({:.2})</p>", c.label, c.confidence);
                let _ = writeln!(s, "<p>{}</p>", html_escape(&c.reasoning));
            }
            ClassifyOutcome::Flagged(f) => {
                let _ = writeln!(s, "<p>classification unavailable: {}</p>", html_escape(&f.error));
            }
        }
        let v = d.verdict.as_str();
        let _ = writeln!(s, "<p class=\"{v}\">verdict: {v} ({})</p>", html_escape(&d.rule_fired));
        if let Some(n) = &d.note {
            let _ = writeln!(s, "<p>note: {}</p>", html_escape(n));
        }
        let _ = writeln!(s, "</div>\n</div>");
    }
    let _ = writeln!(s, "</body>\n</html>");
    s
}

fn summary_txt(cat: &CatalogInputs<'_>) -> String {
    let counts = count_verdicts(cat.decisions);
    let mut s = String::new();
    let _ = writeln!(s, "# eegvl run summary");
    let _ = writeln!(s, "# cleaned_raw.icvrec is an ICVREC01 container (not .fif)");
    let _ = writeln!(s, "dataset: {}", cat.dataset_id);
    let _ = writeln!(s, "components: {}", cat.outcomes.len());
    let _ = writeln!(s, "rejected: {}", counts.rejected);
    let _ = writeln!(s, "kept: {}", counts.kept);
    let _ = writeln!(s, "flagged: {}", counts.flagged);
    let n = cat.outcomes.len().max(1) as f64;
    let _ = writeln!(s, "rejection_rate: {:.4}", counts.rejected as f64 / n);
    let _ = writeln!(s, "total_cost_usd: {:.6}", metered_cost(cat.outcomes));
    if cat.config.backend.kind == BackendKind::HttpApi {
        let _ = writeln!(
            s,
            "list_price_estimate_usd: {:.6}",
            estimate_cost(cat.outcomes.len(), cat.config.backend.per_component_usd)
        );
    }
    let _ = writeln!(s, "backend: {}", cat.backend_id);
    let _ = writeln!(s, "model_hash: {}", cat.model.content_hash());
    let _ = writeln!(s, "config_hash: {}", cat.config.snapshot_hash());
    let _ = writeln!(s, "label_counts:");
    let mut labels: BTreeMap<Label, usize> = BTreeMap::new();
    for c in cat.outcomes.iter().filter_map(|o| o.classification()) {
        *labels.entry(cat.config.merge.apply(c.label)).or_insert(0) += 1;
    }
    for l in cat.config.merge.taxonomy() {
        let _ = writeln!(s, "  {}: {}", l, labels.get(&l).copied().unwrap_or(0));
    }
    let _ = writeln!(s, "\n[config]\n{}", cat.config.snapshot_toml());
    s
}

fn label_lines(id: &str, labels: impl Iterator<Item = (usize, Label)>) -> String {
    labels.map(|(i, l)| format!("{id}_{i:03}, {l}\n")).collect()
}

/// Triage log bytes: earlier records copied verbatim, the new record
/// appended unless it repeats the last one.
pub(crate) fn triage_log_bytes(
    out: &OutputDir,
    decisions: &[TriageDecision],
    model_hash: &str,
    policy: &crate::triage::TriagePolicy,
    backend_id: &str,
) -> Result<Vec<u8>> {
    let existing = out.root().join(LOG_FILE);
    let rec = LogRecord::new(decisions, model_hash, policy, backend_id);
    let (mut bytes, last) = if existing.exists() {
        let b = fs::read(&existing).map_err(|e| io(Stage::Catalog, &existing, e))?;
        (b, read_log(&existing).map_err(|e| PipelineError::stage(Stage::Triage, e))?.pop())
    } else {
        (Vec::new(), None)
    };
    if last.map(|l| l.record_hash) != Some(rec.record_hash.clone()) {
        bytes.extend(serde_json::to_string(&rec).expect("log record serializes").as_bytes());
        bytes.push(b'\n');
    }
    Ok(bytes)
}

/// Writes the full catalog into `staging` and returns the hash of every file
/// (the manifest itself excluded).
pub fn write_catalog(cat: &CatalogInputs<'_>, staging: &Staging<'_>, out: &OutputDir) -> Result<BTreeMap<String, String>> {
    let n = cat.outcomes.len();
    if cat.decisions.len() != n || cat.dashboards.len() != n || cat.pngs.len() != n {
        return Err(PipelineError::stage(Stage::Catalog, "outcome, decision and dashboard counts differ"));
    }
    let mut files: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    for (d, png) in cat.dashboards.iter().zip(&cat.pngs) {
        files.insert(format!("dashboards/{}", d.filename()), png.to_vec());
    }
    let dash_hashes: BTreeMap<String, String> = files.iter().map(|(k, v)| (k.clone(), sha256_hex(v))).collect();
    files.insert("ica_model.json".into(), crate::ica::model_to_sidecar(cat.model).into_bytes());
    files.insert("results.csv".into(), results_csv(cat)?);
    files.insert("cleaned_raw.icvrec".into(), encode_container(cat.cleaned));
    files.insert("report_all_components.html".into(), report_html(cat, &dash_hashes).into_bytes());
    files.insert("summary.txt".into(), summary_txt(cat).into_bytes());
    files.insert(
        "classifications.json".into(),
        serde_json::to_vec_pretty(cat.outcomes).expect("outcomes serialize"),
    );
    files.insert("decisions.json".into(), serde_json::to_vec_pretty(cat.decisions).expect("decisions serialize"));
    let predicted = cat.outcomes.iter().filter_map(|o| o.classification()).map(|c| (c.component_index, c.label));
    files.insert("labels.txt".into(), label_lines(cat.dataset_id, predicted).into_bytes());
    if let Some(t) = cat.truth {
        files.insert("truth_labels.txt".into(), label_lines(cat.dataset_id, t.iter().map(|(i, l)| (*i, *l))).into_bytes());
    }
    files.insert(
        LOG_FILE.into(),
        triage_log_bytes(out, cat.decisions, &cat.model.content_hash(), &cat.config.triage, cat.backend_id)?,
    );

    let mut hashes = BTreeMap::new();
    for (rel, bytes) in &files {
        staging.write(rel, bytes)?;
        hashes.insert(rel.clone(), sha256_hex(bytes));
    }
    let manifest = Manifest {
        format: "eegvl-manifest/1".into(),
        dataset_id: cat.dataset_id.to_string(),
        config_hash: cat.config.snapshot_hash(),
        model_hash: cat.model.content_hash(),
        files: hashes.clone(),
    };
    staging.write(MANIFEST, serde_json::to_string_pretty(&manifest).expect("manifest serializes").as_bytes())?;
    Ok(hashes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escape() {
        assert_eq!(html_escape("a<b & \"c\""), "a&lt;b &amp; &quot;c&quot;");
    }

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let a = OutputDir::open(dir.path()).unwrap();
        assert!(matches!(OutputDir::open(dir.path()), Err(PipelineError::Locked(_))));
        drop(a);
        OutputDir::open(dir.path()).unwrap();
    }

    #[test]
    fn staging_commit_and_quarantine() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutputDir::open(dir.path()).unwrap();
        fs::create_dir_all(dir.path().join("dashboards")).unwrap();
        fs::write(dir.path().join("dashboards/old_comp_009.png"), b"x").unwrap();
        let s = out.staging().unwrap();
        s.write("a.txt", b"1").unwrap();
        s.write("dashboards/new_comp_000.png", b"2").unwrap();
        s.commit().unwrap();
        assert_eq!(fs::read(dir.path().join("a.txt")).unwrap(), b"1");
        assert!(dir.path().join("dashboards/new_comp_000.png").exists());
        assert!(!dir.path().join("dashboards/old_comp_009.png").exists());
        assert!(!dir.path().join(STAGING).exists());

        let s = out.staging().unwrap();
        s.write("a.txt", b"partial").unwrap();
        let q = s.quarantine("ica").unwrap();
        assert!(q.ends_with("quarantine/ica-0"));
        assert_eq!(fs::read(dir.path().join("a.txt")).unwrap(), b"1");
        let q2 = out.staging().unwrap().quarantine("ica").unwrap();
        assert!(q2.ends_with("quarantine/ica-1"));
    }
}
