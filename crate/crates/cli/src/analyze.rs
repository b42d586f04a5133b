//! Corpus analysis: per-image spectral statistics, per-label aggregates and
//! mean spectrum / tail curves.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use spectail::fmt::sig;
use spectail::ingest::{center_crop_pow2, decode, Channel};
use spectail::spectrum::{
    fit_power_law, mean_log_spectrum, normalize_anchor, radial_log_power, tail_uplift,
    RadialSpectrum, ANCHOR_RHO, DEFAULT_FIT_BAND,
};

use crate::cache::SpectrumCache;
use crate::exit::CliError;
use crate::manifest::{CorpusManifest, Entry, Label};

#[derive(Debug, Clone, Copy)]
pub struct AnalyzeOptions {
    pub size: usize,
    pub bins: usize,
    pub channel: Channel,
    pub use_cache: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImageStats {
    pub alpha: f64,
    pub residual_rms: f64,
    pub rho_min: f64,
    pub delta: f64,
}

#[derive(Debug, Clone)]
pub struct ImageRow {
    pub path: String,
    pub label: Label,
    pub outcome: Result<(ImageStats, RadialSpectrum), (u8, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(v: &[f64]) -> Self {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelSummary {
    pub count: usize,
    pub alpha: MeanStd,
    pub residual_rms: MeanStd,
    pub rho_min: MeanStd,
    pub delta: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRecord {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusReport {
    pub images: usize,
    pub analyzed: usize,
    pub skipped: usize,
    pub size: usize,
    pub bins: usize,
    pub channel: String,
    pub real: Option<LabelSummary>,
    pub fake: Option<LabelSummary>,
    /// Mean fake delta minus mean real delta, when both labels are present.
    pub delta_gap: Option<f64>,
    pub errors: Vec<ErrorRecord>,
}

fn spectrum_for(
    manifest: &CorpusManifest,
    entry: &Entry,
    opts: &AnalyzeOptions,
    cache: Option<&SpectrumCache>,
) -> Result<RadialSpectrum, CliError> {
    let path = manifest.resolve(entry);
    let key = match cache {
        Some(_) => {
            let bytes = fs::read(&path)
                .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
            Some(SpectrumCache::key(&bytes, opts.size, opts.bins, opts.channel))
        }
        None => None,
    };
    if let (Some(c), Some(k)) = (cache, &key) {
        if let Some(spec) = c.get(k) {
            return Ok(spec);
        }
    }
    let plane = decode(&path)?.channel(opts.channel);
    let spec = radial_log_power(&center_crop_pow2(&plane, opts.size)?, opts.bins)?;
    if let (Some(c), Some(k)) = (cache, &key) {
        c.put(k, &spec)
            .map_err(|e| CliError::io(format!("cannot write cache entry in {}: {e}", c.dir().display())))?;
    }
    Ok(spec)
}

fn analyze_one(
    manifest: &CorpusManifest,
    entry: &Entry,
    opts: &AnalyzeOptions,
    cache: Option<&SpectrumCache>,
) -> Result<(ImageStats, RadialSpectrum), CliError> {
    let spec = spectrum_for(manifest, entry, opts, cache)?;
    let fit = fit_power_law(&spec, DEFAULT_FIT_BAND.0, DEFAULT_FIT_BAND.1)?;
    let tail = tail_uplift(&spec)?;
    let stats = ImageStats {
        alpha: fit.alpha,
        residual_rms: fit.residual_rms,
        rho_min: tail.rho_min,
        delta: tail.delta,
    };
    Ok((stats, spec))
}

/// Analyzes every entry in parallel; rows come back sorted by path.
pub fn analyze(manifest: &CorpusManifest, opts: &AnalyzeOptions, cache: Option<&SpectrumCache>) -> Vec<ImageRow> {
    let mut rows: Vec<ImageRow> = manifest
        .entries
        .par_iter()
        .map(|entry| ImageRow {
            path: entry.path.clone(),
            label: entry.label,
            outcome: analyze_one(manifest, entry, opts, cache).map_err(|e| (e.code, e.message)),
        })
        .collect();
    rows.sort_by(|a, b| a.path.cmp(&b.path));
    rows
}

fn summarize(rows: &[ImageRow], label: Label) -> Option<LabelSummary> {
    let stats: Vec<ImageStats> = rows
        .iter()
        .filter(|r| r.label == label)
        .filter_map(|r| r.outcome.as_ref().ok().map(|(s, _)| *s))
        .collect();
    if stats.is_empty() {
        return None;
    }
    let col = |f: fn(&ImageStats) -> f64| MeanStd::of(&stats.iter().map(f).collect::<Vec<_>>());
    Some(LabelSummary {
        count: stats.len(),
        alpha: col(|s| s.alpha),
        residual_rms: col(|s| s.residual_rms),
        rho_min: col(|s| s.rho_min),
        delta: col(|s| s.delta),
    })
}

pub fn report(rows: &[ImageRow], opts: &AnalyzeOptions) -> CorpusReport {
    let real = summarize(rows, Label::Real);
    let fake = summarize(rows, Label::Fake);
    let errors: Vec<ErrorRecord> = rows
        .iter()
        .filter_map(|r| {
            r.outcome.as_ref().err().map(|(_, m)| ErrorRecord {
                path: r.path.clone(),
                message: m.clone(),
            })
        })
        .collect();
    CorpusReport {
        images: rows.len(),
        analyzed: rows.len() - errors.len(),
        skipped: errors.len(),
        size: opts.size,
        bins: opts.bins,
        channel: opts.channel.to_string(),
        delta_gap: match (&real, &fake) {
            (Some(r), Some(f)) => Some(f.delta.mean - r.delta.mean),
            _ => None,
        },
        real,
        fake,
        errors,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

fn spectrum_csv(spec: &RadialSpectrum) -> Vec<u8> {
    let mut buf = Vec::new();
    spec.write_csv(&mut buf).expect("writing to memory");
    buf
}

/// Writes `images.csv`, `corpus.json`, and per label `mean_spectrum_<label>.csv`
/// and `tail_curve_<label>.csv` (the mean spectrum anchored at rho = 0.7,
/// restricted to the tail).
pub fn write_outputs(rows: &[ImageRow], report: &CorpusReport, out: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["path", "label", "alpha", "residual_rms", "rho_min", "delta", "error"])
        .expect("memory write");
    for r in rows {
        let label = r.label.to_string();
        let record = match &r.outcome {
            Ok((s, _)) => [
                r.path.clone(),
                label,
                sig(s.alpha, 9),
                sig(s.residual_rms, 9),
                sig(s.rho_min, 9),
                sig(s.delta, 9),
                String::new(),
            ],
            Err((_, m)) => [r.path.clone(), label, String::new(), String::new(), String::new(), String::new(), m.clone()],
        };
        w.write_record(&record).expect("memory write");
    }
    let csv = w.into_inner().expect("memory write");
    write_file(&out.join("images.csv"), &csv)?;

    let mut json = serde_json::to_string_pretty(report).expect("report serializes");
    json.push('\n');
    write_file(&out.join("corpus.json"), json.as_bytes())?;

    for label in [Label::Real, Label::Fake] {
        let spectra: Vec<RadialSpectrum> = rows
            .iter()
            .filter(|r| r.label == label)
            .filter_map(|r| r.outcome.as_ref().ok().map(|(_, s)| s.clone()))
            .collect();
        if spectra.is_empty() {
            continue;
        }
        let mean = mean_log_spectrum(&spectra)?;
        write_file(&out.join(format!("mean_spectrum_{label}.csv")), &spectrum_csv(&mean))?;
        let anchored = normalize_anchor(&mean, ANCHOR_RHO)?;
        let start = anchored.rho.iter().position(|&r| r >= ANCHOR_RHO).unwrap_or(anchored.len());
        let tail = RadialSpectrum {
            rho: anchored.rho[start..].to_vec(),
            log_power: anchored.log_power[start..].to_vec(),
            counts: anchored.counts[start..].to_vec(),
        };
        write_file(&out.join(format!("tail_curve_{label}.csv")), &spectrum_csv(&tail))?;
    }
    Ok(())
}

/// Exit status for a finished analysis: success unless every image failed,
/// in which case the first failure's code is used.
pub fn status(rows: &[ImageRow]) -> Result<(), CliError> {
    if rows.iter().all(|r| r.outcome.is_err()) {
        let (code, message) = rows[0].outcome.as_ref().err().cloned().expect("all rows failed");
        return Err(CliError::new(code, format!("every image failed; first: {message}")));
    }
    Ok(())
}
