//! Pipeline subcommands. Per-subject steps run in parallel and skip
//! subjects whose artifacts are already up to date.

use crate::config::Workspace;
use crate::error::CliError;
use crate::provenance::{self, hash_files, upstream_hash, Provenance};
use crate::session::{Session, SessionSample};
use hypnokit_core::corpus::{
    self, build_phase1_sample, build_phase2_sample, epoch_id, load_annotations, write_annotations, write_samples,
    AnnotationRecord, Track,
};
use hypnokit_core::descriptors::{epoch_descriptors, parse_phase1_target, serialize_phase1_target};
use hypnokit_core::features::extract_recording_features;
use hypnokit_core::metrics::{build_report, stratified_sample, LabeledPredictions, SubjectPredictions};
use hypnokit_core::night::standard_nights;
use hypnokit_core::psg_io::{
    concatenate_epochs, condition_recording, load_recording, resample_recording, segment_epochs, write_recording,
    ChannelManifest,
};
use hypnokit_core::render::{image_file_name, render_epoch};
use hypnokit_core::rft::{load_candidates, select_corpus};
use hypnokit_core::rules::{hypnogram_csv, stage_recording};
use hypnokit_core::{Epoch, Stage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

/// What a per-subject step did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Wrote(String),
    UpToDate,
}

fn report(step: &str, subject: &str, outcome: &Outcome) {
    match outcome {
        Outcome::Wrote(what) => println!("{step} {subject}: {what}"),
        Outcome::UpToDate => println!("{step} {subject}: up-to-date"),
    }
}

fn run_per_subject<F>(step: &str, subjects: &[String], f: F) -> Result<Vec<Outcome>, CliError>
where
    F: Fn(&str) -> Result<Outcome, CliError> + Sync,
{
    let results: Vec<Result<Outcome, CliError>> = subjects.par_iter().map(|s| f(s)).collect();
    let mut out = Vec::with_capacity(results.len());
    for (s, r) in subjects.iter().zip(results) {
        let o = r?;
        report(step, s, &o);
        out.push(o);
    }
    Ok(out)
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(p) = path.parent() {
        std::fs::create_dir_all(p)?;
    }
    Ok(())
}

// ---------------------------------------------------------------- synth

/// Writes the scripted nights as raw recordings at `rate_hz` plus their
/// expected hypnograms under `<out>/truth`.
pub fn synth(out: &Path, rate_hz: f64, seed: u64) -> Result<Vec<String>, CliError> {
    let nights = standard_nights();
    let truth_dir = out.join("truth");
    std::fs::create_dir_all(&truth_dir)?;
    nights
        .par_iter()
        .map(|night| {
            let rec = night.render_recording(rate_hz, seed).map_err(|e| CliError::data(&night.subject_id, e))?;
            write_recording(&rec, &out.join(&night.subject_id)).map_err(|e| CliError::data(&night.subject_id, e))?;
            let mut csv = String::from("epoch_index,stage,rules\n");
            for (i, e) in night.epochs.iter().enumerate() {
                let rules: Vec<&str> = e.rules.iter().map(|r| r.as_str()).collect();
                let _ = writeln!(csv, "{i},{},{}", e.stage, rules.join(";"));
            }
            std::fs::write(truth_dir.join(format!("{}.csv", night.subject_id)), csv)?;
            println!("synth {}: {} epochs at {rate_hz} Hz", night.subject_id, night.len());
            Ok(night.subject_id.clone())
        })
        .collect()
}

// ---------------------------------------------------------------- ingest

struct RawSource {
    path: PathBuf,
    /// Files whose content identifies the source.
    files: Vec<PathBuf>,
}

fn discover_sources(dir: &Path) -> Result<Vec<RawSource>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Input(format!("{}: recordings directory not found", dir.display())));
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    entries.sort();
    let mut out = Vec::new();
    for p in entries {
        if p.is_dir() {
            let sidecar = p.join("recording.json");
            if sidecar.is_file() {
                let mut files: Vec<PathBuf> =
                    std::fs::read_dir(&p)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
                files.retain(|f| f.is_file());
                files.sort();
                out.push(RawSource { path: sidecar, files });
            }
        } else if matches!(p.extension().and_then(|e| e.to_str()), Some("csv") | Some("json")) {
            out.push(RawSource { path: p.clone(), files: vec![p] });
        }
    }
    Ok(out)
}

fn ingest_one(ws: &Workspace, src: &RawSource) -> Result<(String, Outcome), CliError> {
    let input = hash_files(&src.files)?;
    let rec = load_recording(&src.path, &ws.config.manifest).map_err(|e| CliError::input(src.path.display(), e))?;
    let subject = rec.subject_id.clone();
    let dir = ws.epochs_dir(&subject);
    let artifact = dir.join("recording.json");
    let prov = Provenance::new("ingest", &ws.config_sha256, None, input);
    if provenance::is_up_to_date(&artifact, &prov) {
        return Ok((subject, Outcome::UpToDate));
    }
    let conditioned = condition_recording(&rec, &ws.config.conditioning).map_err(|e| CliError::data(&subject, e))?;
    let resampled = resample_recording(&conditioned, ws.config.conditioning.target_rate_hz)
        .map_err(|e| CliError::data(&subject, e))?;
    let epochs = segment_epochs(&resampled).map_err(|e| CliError::data(&subject, e))?;
    let joined = concatenate_epochs(&subject, &epochs).map_err(|e| CliError::data(&subject, e))?;
    write_recording(&joined, &dir).map_err(|e| CliError::data(&subject, e))?;
    provenance::write(&artifact, &prov)?;
    Ok((subject, Outcome::Wrote(format!("{} epochs", epochs.len()))))
}

pub fn ingest(ws: &Workspace) -> Result<Vec<Outcome>, CliError> {
    let sources = discover_sources(&ws.recordings_dir())?;
    if sources.is_empty() {
        return Err(CliError::Input(format!("{}: no recordings found", ws.recordings_dir().display())));
    }
    let results: Vec<Result<(String, Outcome), CliError>> = sources.par_iter().map(|s| ingest_one(ws, s)).collect();
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for (src, r) in sources.iter().zip(results) {
        let (subject, o) = r?;
        if let Some(prev) = seen.insert(subject.clone(), src.path.clone()) {
            return Err(CliError::Input(format!(
                "subject {subject} appears in both {} and {}",
                prev.display(),
                src.path.display()
            )));
        }
        report("ingest", &subject, &o);
        out.push(o);
    }
    Ok(out)
}

pub fn load_epochs(ws: &Workspace, subject: &str) -> Result<Vec<Epoch>, CliError> {
    let path = ws.epochs_dir(subject).join("recording.json");
    let rec = load_recording(&path, &ChannelManifest::default()).map_err(|e| CliError::input(path.display(), e))?;
    segment_epochs(&rec).map_err(|e| CliError::data(subject, e))
}

fn epochs_artifact(ws: &Workspace, subject: &str) -> PathBuf {
    ws.epochs_dir(subject).join("recording.json")
}

// ---------------------------------------------------------------- render

pub fn image_rel_path(subject: &str, epoch_index: usize) -> String {
    format!("{subject}/{}", image_file_name(subject, epoch_index))
}

pub fn render(ws: &Workspace) -> Result<Vec<Outcome>, CliError> {
    let subjects = ws.ingested_subjects()?;
    run_per_subject("render", &subjects, |s| {
        let dir = ws.images_dir(s);
        let prov = Provenance::new("render", &ws.config_sha256, None, upstream_hash(&[epochs_artifact(ws, s)])?);
        if provenance::is_up_to_date(&dir, &prov) {
            return Ok(Outcome::UpToDate);
        }
        let epochs = load_epochs(ws, s)?;
        std::fs::create_dir_all(&dir)?;
        epochs.par_iter().try_for_each(|e| {
            render_epoch(e, &ws.config.render)
                .save_png(&dir.join(image_file_name(s, e.index)))
                .map_err(|err| CliError::data(s, err))
        })?;
        provenance::write(&dir, &prov)?;
        Ok(Outcome::Wrote(format!("{} images", epochs.len())))
    })
}

// ---------------------------------------------------------------- descriptors

/// One line of a descriptor file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorLine {
    pub epoch_id: String,
    pub epoch_index: usize,
    /// Phase-1 target JSON text.
    pub target: String,
}

pub fn descriptors(ws: &Workspace) -> Result<Vec<Outcome>, CliError> {
    let subjects = ws.ingested_subjects()?;
    run_per_subject("descriptors", &subjects, |s| {
        let path = ws.descriptors_path(s);
        let prov = Provenance::new("descriptors", &ws.config_sha256, None, upstream_hash(&[epochs_artifact(ws, s)])?);
        if provenance::is_up_to_date(&path, &prov) {
            return Ok(Outcome::UpToDate);
        }
        let epochs = load_epochs(ws, s)?;
        let lines: Vec<DescriptorLine> = epochs
            .par_iter()
            .map(|e| DescriptorLine {
                epoch_id: epoch_id(s, e.index),
                epoch_index: e.index,
                target: serialize_phase1_target(&epoch_descriptors(e)),
            })
            .collect();
        ensure_parent(&path)?;
        write_jsonl(&lines, &path)?;
        provenance::write(&path, &prov)?;
        Ok(Outcome::Wrote(format!("{} epochs", lines.len())))
    })
}

fn write_jsonl<T: Serialize>(items: &[T], path: &Path) -> Result<(), CliError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for it in items {
        serde_json::to_writer(&mut w, it).map_err(|e| CliError::data(path.display(), e))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path.display(), e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CliError::input(format!("{}:{}", path.display(), i + 1), e)))
        .collect()
}

// ---------------------------------------------------------------- stage

pub fn stage(ws: &Workspace) -> Result<Vec<Outcome>, CliError> {
    let subjects = ws.ingested_subjects()?;
    std::fs::create_dir_all(ws.stage_dir())?;
    run_per_subject("stage", &subjects, |s| {
        let csv_path = ws.hypnogram_path(s);
        let jsonl_path = ws.rationale_path(s);
        let prov = Provenance::new("stage", &ws.config_sha256, None, upstream_hash(&[epochs_artifact(ws, s)])?);
        if provenance::is_up_to_date(&csv_path, &prov) && jsonl_path.exists() {
            return Ok(Outcome::UpToDate);
        }
        let epochs = load_epochs(ws, s)?;
        let feats = extract_recording_features(&epochs, &ws.config.detectors);
        let decisions = stage_recording(&feats, None).map_err(|e| CliError::data(s, e))?;
        let records: Vec<AnnotationRecord> =
            decisions.iter().filter_map(|d| AnnotationRecord::from_decision(s, d)).collect();
        write_annotations(&records, &jsonl_path).map_err(|e| CliError::data(s, e))?;
        std::fs::write(&csv_path, hypnogram_csv(&decisions))?;
        provenance::write(&csv_path, &prov)?;
        let fallback = decisions.len() - records.len();
        Ok(Outcome::Wrote(format!("{} epochs staged, {fallback} without a citable rule", decisions.len())))
    })
}

// ---------------------------------------------------------------- labels

/// Reads `epoch_index` and `stage` columns from a CSV with a header row.
pub fn read_labels(path: &Path) -> Result<Vec<(usize, Stage)>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path.display(), e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').map(str::trim).collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| CliError::Input(format!("{}: no {name} column", path.display())))
    };
    let (ci, cs) = (col("epoch_index")?, col("stage")?);
    lines
        .enumerate()
        .map(|(n, l)| {
            let f: Vec<&str> = l.split(',').map(str::trim).collect();
            let bad = || CliError::Input(format!("{}:{}: malformed row", path.display(), n + 2));
            let idx = f.get(ci).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
            let st = f.get(cs).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
            Ok((idx, st))
        })
        .collect()
}

/// `<subject>.<anything>.csv` files keyed by subject.
fn label_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Input(format!("{}: not a directory", dir.display())));
    }
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if p.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let subject = name.split('.').next().unwrap_or_default().to_string();
        out.insert(subject, p);
    }
    Ok(out)
}

// ---------------------------------------------------------------- evaluate

pub fn evaluate(ws: &Workspace, pred_dir: &Path, truth_dir: &Path, out_dir: &Path) -> Result<String, CliError> {
    let preds = label_files(pred_dir)?;
    let truths = label_files(truth_dir)?;
    let mut subjects = Vec::new();
    for (s, tpath) in &truths {
        let Some(ppath) = preds.get(s) else {
            return Err(CliError::Input(format!("no predictions for subject {s} in {}", pred_dir.display())));
        };
        let truth: BTreeMap<usize, Stage> = read_labels(tpath)?.into_iter().collect();
        let pred: BTreeMap<usize, Stage> = read_labels(ppath)?.into_iter().collect();
        if truth.keys().ne(pred.keys()) {
            return Err(CliError::Data(format!("{s}: predicted and true epoch indices differ")));
        }
        subjects.push(SubjectPredictions {
            subject_id: s.clone(),
            truth: truth.into_values().collect(),
            pred: pred.into_values().collect(),
        });
    }
    let data = LabeledPredictions::new(subjects).map_err(|e| CliError::data("evaluate", e))?;
    let m = &ws.config.metrics;
    let rep = build_report(&data, m.n_resamples, m.level, m.seed).map_err(|e| CliError::data("evaluate", e))?;
    std::fs::create_dir_all(out_dir)?;
    let json_path = out_dir.join("report.json");
    let json = serde_json::to_string_pretty(&rep).map_err(|e| CliError::data("report", e))?;
    std::fs::write(&json_path, json)?;
    let table = rep.to_text_table();
    std::fs::write(out_dir.join("report.txt"), &table)?;
    let mut inputs: Vec<PathBuf> = truths.values().cloned().collect();
    inputs.extend(preds.values().cloned());
    provenance::write(&json_path, &Provenance::new("evaluate", &ws.config_sha256, Some(m.seed), hash_files(&inputs)?))?;
    Ok(table)
}

// ---------------------------------------------------------------- sample-eval

fn subject_seed(seed: u64, subject: &str) -> u64 {
    let h = corpus::sha256_hex(subject);
    seed ^ u64::from_str_radix(&h[..16], 16).unwrap_or(0)
}

/// Rows of a hypnogram CSV: index, stage and boundary flag.
fn read_hypnogram(path: &Path) -> Result<Vec<(usize, Stage, bool)>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path.display(), e))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(n, l)| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || CliError::Input(format!("{}:{}: malformed row", path.display(), n + 2));
            if f.len() != 4 {
                return Err(bad());
            }
            Ok((f[0].parse().map_err(|_| bad())?, f[1].parse().map_err(|_| bad())?, f[3] == "1"))
        })
        .collect()
}

pub fn sample_eval(ws: &Workspace, out: &Path) -> Result<Session, CliError> {
    let subjects = ws.ingested_subjects()?;
    let cfg = &ws.config.sampling;
    let mut samples = Vec::new();
    for s in &subjects {
        let hyp = read_hypnogram(&ws.hypnogram_path(s))?;
        let records: BTreeMap<usize, AnnotationRecord> = load_annotations(&ws.rationale_path(s))
            .map_err(|e| CliError::input(ws.rationale_path(s).display(), e))?
            .into_iter()
            .map(|r| (r.epoch_index, r))
            .collect();
        let pool: Vec<(String, Stage)> = hyp
            .iter()
            .filter(|(i, _, boundary)| !boundary && records.contains_key(i))
            .map(|(i, st, _)| (epoch_id(s, *i), *st))
            .collect();
        let chosen = stratified_sample(&pool, cfg.k, subject_seed(cfg.seed, s)).map_err(|e| CliError::data(s, e))?;
        for id in chosen {
            let (_, idx) = corpus::parse_epoch_id(&id).ok_or_else(|| CliError::Data(format!("bad id {id}")))?;
            let r = &records[&idx];
            samples.push(SessionSample {
                sample_id: id,
                subject_id: s.clone(),
                epoch_index: idx,
                images: [idx - 1, idx, idx + 1].map(|i| image_rel_path(s, i)),
                stage: r.sleep_stage,
                rules: r.applicable_rules.clone(),
                rationale: r.reasoning_text.clone().unwrap_or_default(),
            });
        }
    }
    let session = Session { seed: cfg.seed, k: cfg.k, samples };
    ensure_parent(out)?;
    let text = serde_json::to_string_pretty(&session).map_err(|e| CliError::data("session", e))?;
    std::fs::write(out, text)?;
    let inputs: Vec<PathBuf> = subjects.iter().map(|s| ws.hypnogram_path(s)).collect();
    provenance::write(out, &Provenance::new("sample-eval", &ws.config_sha256, Some(cfg.seed), hash_files(&inputs)?))?;
    println!("sample-eval: {} samples from {} subjects -> {}", session.samples.len(), subjects.len(), out.display());
    Ok(session)
}

// ---------------------------------------------------------------- build-corpus

pub fn build_corpus(
    ws: &Workspace,
    phase: u8,
    track: Track,
    annotations: Option<&Path>,
) -> Result<(PathBuf, usize), CliError> {
    let subjects = ws.ingested_subjects()?;
    let dir = ws.corpus_dir();
    std::fs::create_dir_all(&dir)?;
    let images_prefix = "images";
    match phase {
        1 => {
            let out = dir.join("phase1.jsonl");
            let inputs: Vec<PathBuf> = subjects.iter().map(|s| ws.descriptors_path(s)).collect();
            let prov = Provenance::new("build-corpus-1", &ws.config_sha256, None, upstream_hash(&inputs)?);
            if provenance::is_up_to_date(&out, &prov) {
                println!("build-corpus phase 1: up-to-date");
                return Ok((out, 0));
            }
            let mut samples = Vec::new();
            for s in &subjects {
                for line in read_jsonl::<DescriptorLine>(&ws.descriptors_path(s))? {
                    let frame = parse_phase1_target(&line.target).map_err(|e| CliError::data(&line.epoch_id, e))?;
                    let image = format!("{images_prefix}/{}", image_rel_path(s, line.epoch_index));
                    samples.push(build_phase1_sample(&line.epoch_id, &image, &frame));
                }
            }
            write_samples(&samples, &out).map_err(|e| CliError::data("corpus", e))?;
            provenance::write(&out, &prov)?;
            println!("build-corpus phase 1: {} samples -> {}", samples.len(), out.display());
            Ok((out, samples.len()))
        }
        2 => {
            let out = dir.join(format!("phase2_{track}.jsonl"));
            let inputs: Vec<PathBuf> = match annotations {
                Some(p) => vec![p.to_path_buf()],
                None => subjects.iter().map(|s| ws.rationale_path(s)).collect(),
            };
            let prov = Provenance::new(&format!("build-corpus-2-{track}"), &ws.config_sha256, None, hash_files(&inputs)?);
            if provenance::is_up_to_date(&out, &prov) {
                println!("build-corpus phase 2 ({track}): up-to-date");
                return Ok((out, 0));
            }
            let mut records = Vec::new();
            for p in &inputs {
                records.extend(load_annotations(p).map_err(|e| CliError::input(p.display(), e))?);
            }
            let mut samples = Vec::new();
            let mut skipped = 0;
            for r in &records {
                let idx = r.epoch_index;
                let rel = |i: usize| format!("{images_prefix}/{}", image_rel_path(&r.subject_id, i));
                let have = |i: usize| ws.images_dir(&r.subject_id).join(image_file_name(&r.subject_id, i)).is_file();
                if idx == 0 || !have(idx - 1) || !have(idx) || !have(idx + 1) {
                    skipped += 1;
                    continue;
                }
                let rec = if track == Track::Coarse { r.to_coarse() } else { r.clone() };
                let sample = build_phase2_sample([&rel(idx - 1), &rel(idx), &rel(idx + 1)], &rec, track)
                    .map_err(|e| CliError::data(r.epoch_id(), e))?;
                samples.push(sample);
            }
            write_samples(&samples, &out).map_err(|e| CliError::data("corpus", e))?;
            provenance::write(&out, &prov)?;
            println!(
                "build-corpus phase 2 ({track}): {} samples, {skipped} without a full image triplet -> {}",
                samples.len(),
                out.display()
            );
            Ok((out, samples.len()))
        }
        other => Err(CliError::Config(format!("phase must be 1 or 2, got {other}"))),
    }
}

// ---------------------------------------------------------------- select-rft

pub fn select_rft(ws: &Workspace, candidates: &Path, gold: &Path, out: &Path) -> Result<String, CliError> {
    let prov = Provenance::new("select-rft", &ws.config_sha256, None, hash_files(&[candidates.into(), gold.into()])?);
    if provenance::is_up_to_date(out, &prov) {
        println!("select-rft: up-to-date");
        return Ok(String::new());
    }
    let recs = load_candidates(candidates).map_err(|e| CliError::input(candidates.display(), e))?;
    let gold = load_annotations(gold).map_err(|e| CliError::input(gold.display(), e))?;
    let (selected, summary) = select_corpus(&recs, &gold).map_err(|e| CliError::data("select-rft", e))?;
    ensure_parent(out)?;
    write_annotations(&selected, out).map_err(|e| CliError::data("select-rft", e))?;
    provenance::write(out, &prov)?;
    let line = serde_json::to_string(&summary).map_err(|e| CliError::data("summary", e))?;
    println!("select-rft: {line}");
    Ok(line)
}
