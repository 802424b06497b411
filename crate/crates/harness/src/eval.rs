//! Holdout evaluation and the text report.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use vrsnet_core::metrics::MetricId;
use vrsnet_core::network::{predict_tiles, NetworkModel, Sample};
use vrsnet_core::vrs;

use crate::stats::{mae_stats, r2_score, MaeStats};
use crate::{Error, Result};

pub const REPORT_VERSION: u32 = 1;

/// Identity of a capture: viewpoints are fixed by these plus the index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CaptureId {
    pub scene: String,
    pub scene_seed: u64,
    pub capture_seed: u64,
}

impl CaptureId {
    pub fn from_manifest(m: &synthscene::Manifest) -> Self {
        Self { scene: m.scene.clone(), scene_seed: m.scene_seed, capture_seed: m.capture_seed }
    }
}

/// Records the training data identity in the model's provenance.
pub fn record_training_set(model: &mut NetworkModel, id: &CaptureId, indices: &[usize]) {
    let p = &mut model.provenance;
    p.insert("scene".into(), id.scene.clone());
    p.insert("scene_seed".into(), id.scene_seed.to_string());
    p.insert("capture_seed".into(), id.capture_seed.to_string());
    p.insert("indices".into(), format_ranges(indices));
}

/// Indices the model was trained on if it was trained on capture `id`.
pub fn training_indices(model: &NetworkModel, id: &CaptureId) -> Result<BTreeSet<usize>> {
    let p = &model.provenance;
    let same = p.get("scene") == Some(&id.scene)
        && p.get("scene_seed") == Some(&id.scene_seed.to_string())
        && p.get("capture_seed") == Some(&id.capture_seed.to_string());
    if !same {
        return Ok(BTreeSet::new());
    }
    parse_ranges(p.get("indices").map(String::as_str).unwrap_or(""))
}

/// `[0, 1, 2, 5]` -> `"0-2,5"`.
pub fn format_ranges(indices: &[usize]) -> String {
    let mut sorted: Vec<usize> = indices.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut parts = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let start = sorted[i];
        while i + 1 < sorted.len() && sorted[i + 1] == sorted[i] + 1 {
            i += 1;
        }
        parts.push(if sorted[i] == start { start.to_string() } else { format!("{start}-{}", sorted[i]) });
        i += 1;
    }
    parts.join(",")
}

pub fn parse_ranges(s: &str) -> Result<BTreeSet<usize>> {
    let bad = || Error::Config(format!("malformed index ranges {s:?}"));
    let mut out = BTreeSet::new();
    for part in s.split(',').filter(|p| !p.is_empty()) {
        let (a, b) = part.split_once('-').unwrap_or((part, part));
        let (a, b): (usize, usize) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        out.extend(a..=b);
    }
    Ok(out)
}

/// Samples of one capture to evaluate.
pub struct EvalSet<'a> {
    pub id: CaptureId,
    pub metric: MetricId,
    pub samples: Vec<(usize, &'a Sample)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalEntry {
    pub scene: String,
    pub metric: MetricId,
    pub samples: usize,
    /// `None` when the targets are constant and R² is undefined.
    pub r2: Option<f64>,
    /// R² of the transform round trip `T^-1(T(y))` against `y`: the best a
    /// model trained in transformed space can reach.
    pub r2_ceiling: Option<f64>,
    pub mae: MaeStats,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub model_metric: Option<MetricId>,
    pub transform: String,
    pub mu: Vec<f64>,
    pub tile_size: usize,
    pub rates: String,
    pub provenance: Vec<(String, String)>,
    pub entries: Vec<EvalEntry>,
    /// Pooled over all entries when there is more than one.
    pub overall: Option<EvalEntry>,
}

fn entry(scene: &str, metric: MetricId, samples: usize, y: &[f32], y_hat: &[f32], y_round: &[f32]) -> Result<EvalEntry> {
    Ok(EvalEntry {
        scene: scene.to_string(),
        metric,
        samples,
        r2: r2_score(y, y_hat).ok(),
        r2_ceiling: r2_score(y, y_round).ok(),
        mae: mae_stats(y, y_hat)?,
    })
}

/// Predicts every sample, inverts the transform and scores the raw metric
/// values per set. Fails when a set's metric differs from the model's or
/// when a sample was part of the model's training data.
pub fn evaluate(model: &NetworkModel, sets: &[EvalSet]) -> Result<EvalReport> {
    let mut entries = Vec::new();
    let (mut all_y, mut all_p, mut all_r, mut all_n) = (Vec::new(), Vec::new(), Vec::new(), 0);
    for set in sets {
        if let Some(m) = model.metric {
            if m != set.metric {
                return Err(Error::MetricMismatch { model: m.to_string(), dataset: set.metric.to_string() });
            }
        }
        let trained = training_indices(model, &set.id)?;
        if let Some((i, _)) = set.samples.iter().find(|(i, _)| trained.contains(i)) {
            return Err(Error::Overlap(format!("{} sample {i}", set.id.scene)));
        }
        let (mut y, mut p, mut round) = (Vec::new(), Vec::new(), Vec::new());
        for (_, s) in &set.samples {
            let pred = predict_tiles(model, &s.input)?;
            if pred.raw.dims() != s.target.dims() {
                return Err(Error::Dims(format!("prediction {:?} vs target {:?}", pred.raw.dims(), s.target.dims())));
            }
            y.extend_from_slice(s.target.data());
            p.extend_from_slice(pred.raw.data());
            let t = &model.transform;
            round.extend_from_slice(t.inverse_tensor(&t.forward_tensor(&s.target)?)?.data());
        }
        entries.push(entry(&set.id.scene, set.metric, set.samples.len(), &y, &p, &round)?);
        all_y.extend(y);
        all_p.extend(p);
        all_r.extend(round);
        all_n += set.samples.len();
    }
    if entries.is_empty() {
        return Err(Error::Degenerate("nothing to evaluate".into()));
    }
    let overall = if entries.len() > 1 {
        Some(entry("all", entries[0].metric, all_n, &all_y, &all_p, &all_r)?)
    } else {
        None
    };
    Ok(EvalReport {
        model_metric: model.metric,
        transform: model.transform.kind.to_string(),
        mu: model.transform.mu.clone(),
        tile_size: model.config.tile_size,
        rates: vrs::format_rate_list(&model.rates),
        provenance: model.provenance.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
        entries,
        overall,
    })
}

fn write_entry(s: &mut String, e: &EvalEntry) {
    let _ = writeln!(s, "[scene={} metric={}]", e.scene, e.metric);
    let _ = writeln!(s, "samples={}", e.samples);
    let _ = writeln!(s, "values={}", e.mae.count);
    let fmt = |r: Option<f64>| r.map_or("undefined".into(), |r| format!("{r:.9}"));
    let _ = writeln!(s, "r2={}", fmt(e.r2));
    let _ = writeln!(s, "r2_transform_ceiling={}", fmt(e.r2_ceiling));
    let _ = writeln!(s, "mae_total={:.9}", e.mae.total);
    let _ = writeln!(s, "mae_under={:.9}", e.mae.under);
    let _ = writeln!(s, "sigma_mae={:.9}", e.mae.sigma);
    let _ = writeln!(s, "variance_mae={:.9e}", e.mae.variance);
    let _ = writeln!(s, "under_count={}", e.mae.under_count);
    let _ = writeln!(s, "consistency={}", if e.mae.consistent() { "ok" } else { "violated" });
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "report_version={REPORT_VERSION}");
        let _ = writeln!(s, "model_metric={}", self.model_metric.map_or("unset".into(), |m| m.to_string()));
        let _ = writeln!(s, "transform={}", self.transform);
        let mu: Vec<String> = self.mu.iter().map(|m| format!("{m:.9e}")).collect();
        let _ = writeln!(s, "transform_mu={}", mu.join(","));
        let _ = writeln!(s, "w={}", self.tile_size);
        let _ = writeln!(s, "rates={}", self.rates);
        for (k, v) in &self.provenance {
            let _ = writeln!(s, "train_{k}={v}");
        }
        for e in &self.entries {
            s.push('\n');
            write_entry(&mut s, e);
        }
        if let Some(e) = &self.overall {
            s.push('\n');
            write_entry(&mut s, e);
        }
        s
    }

    pub fn entry(&self, scene: &str) -> Option<&EvalEntry> {
        self.entries.iter().find(|e| e.scene == scene)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_round_trip() {
        assert_eq!(format_ranges(&[5, 0, 1, 2, 9, 8]), "0-2,5,8-9");
        assert_eq!(parse_ranges("0-2,5,8-9").unwrap(), [0, 1, 2, 5, 8, 9].into_iter().collect());
        assert!(parse_ranges("").unwrap().is_empty());
        assert!(parse_ranges("4-2").is_err());
        assert!(parse_ranges("x").is_err());
    }
}
