//! Ranking metrics for uncertainty scores and the room-grid evaluation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{label_probe, RegionLabel, RoomLayout};
use crate::error::{CdrmError, Result};
use crate::inference::{infer, InferenceConfig};
use crate::model::CdrmModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredProbe {
    pub probe_input: Vec<f64>,
    pub score: f64,
    pub label: bool,
}

impl ScoredProbe {
    pub fn new(probe_input: Vec<f64>, score: f64, label: bool) -> Self {
        Self {
            probe_input,
            score,
            label,
        }
    }
}

fn check_scores(probes: &[ScoredProbe]) -> Result<()> {
    match probes.iter().position(|p| !p.score.is_finite()) {
        Some(i) => Err(CdrmError::InvalidInput(format!("probe {i} has a non-finite score"))),
        None => Ok(()),
    }
}

/// Scores sorted descending, split into runs of equal score. Yields
/// `(positives, negatives)` per run.
fn tie_groups(probes: &[ScoredProbe]) -> Vec<(u64, u64)> {
    let mut sorted: Vec<(f64, bool)> = probes.iter().map(|p| (p.score, p.label)).collect();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut groups: Vec<(u64, u64)> = Vec::new();
    let mut prev = None;
    for (score, label) in sorted {
        if prev != Some(score) {
            groups.push((0, 0));
            prev = Some(score);
        }
        let g = groups.last_mut().expect("pushed above");
        if label {
            g.0 += 1;
        } else {
            g.1 += 1;
        }
    }
    groups
}

/// Probability that a random positive outranks a random negative, ties
/// counting one half.
pub fn auroc(probes: &[ScoredProbe]) -> Result<f64> {
    check_scores(probes)?;
    let n_pos = probes.iter().filter(|p| p.label).count() as u64;
    let n_neg = probes.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(CdrmError::UndefinedMetric(
            "AUROC needs both positive and negative labels".into(),
        ));
    }
    // Doubled pair counts keep everything integral: 2 per win, 1 per tie.
    let mut twice_wins: u64 = 0;
    let mut neg_below = n_neg;
    for (pos, neg) in tie_groups(probes) {
        neg_below -= neg;
        twice_wins += pos * (2 * neg_below + neg);
    }
    Ok(twice_wins as f64 / (2 * n_pos * n_neg) as f64)
}

/// Area under the step precision-recall curve, sweeping thresholds from the
/// highest score down with tied scores entering together.
pub fn auprc(probes: &[ScoredProbe]) -> Result<f64> {
    check_scores(probes)?;
    let n_pos = probes.iter().filter(|p| p.label).count() as u64;
    if n_pos == 0 {
        return Err(CdrmError::UndefinedMetric("AUPRC needs at least one positive".into()));
    }
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut area = 0.0;
    for (pos, neg) in tie_groups(probes) {
        tp += pos;
        fp += neg;
        if pos > 0 {
            let recall_step = pos as f64 / n_pos as f64;
            let precision = tp as f64 / (tp + fp) as f64;
            area += recall_step * precision;
        }
    }
    Ok(area)
}

/// Anything that turns a probe location into `(AU score, EU score)`.
pub trait ProbeScorer: Sync {
    fn score(&self, probe: &[f64], seed: u64) -> Result<ProbeScores>;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeScores {
    /// Absent when the scorer found no valid next state.
    pub au: Option<f64>,
    pub eu: f64,
    pub valid_count: usize,
}

pub struct CdrmScorer<'a> {
    pub model: &'a CdrmModel,
    pub config: InferenceConfig,
}

impl ProbeScorer for CdrmScorer<'_> {
    fn score(&self, probe: &[f64], seed: u64) -> Result<ProbeScores> {
        let r = infer(self.model, probe, &self.config, seed)?;
        Ok(ProbeScores {
            au: r.au,
            eu: r.eu,
            valid_count: r.valid_count,
        })
    }
}

/// Scores 1 inside the true region and 0 outside. Upper bound for every metric.
pub struct OracleScorer {
    pub layout: RoomLayout,
}

impl ProbeScorer for OracleScorer {
    fn score(&self, probe: &[f64], _seed: u64) -> Result<ProbeScores> {
        let label = label_probe(&self.layout, probe)?;
        let hit = |want| if label == want { 1.0 } else { 0.0 };
        Ok(ProbeScores {
            au: Some(hit(RegionLabel::AuPositive)),
            eu: hit(RegionLabel::EuPositive),
            valid_count: usize::from(label != RegionLabel::EuPositive),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoomMetrics {
    pub au_auroc: f64,
    pub au_auprc: f64,
    pub eu_auroc: f64,
    pub eu_auprc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeRecord {
    pub x: f64,
    pub y: f64,
    pub label: RegionLabel,
    pub scores: ProbeScores,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoomEvaluation {
    pub metrics: RoomMetrics,
    pub probes: Vec<ProbeRecord>,
}

/// Cell centers of a `resolution x resolution` grid over the room, row-major
/// in y then x.
pub fn probe_grid(layout: &RoomLayout, resolution: usize) -> Vec<[f64; 2]> {
    let r = &layout.room;
    let n = resolution as f64;
    let mut out = Vec::with_capacity(resolution * resolution);
    for j in 0..resolution {
        for i in 0..resolution {
            out.push([
                r.x0 + (i as f64 + 0.5) / n * (r.x1 - r.x0),
                r.y0 + (j as f64 + 0.5) / n * (r.y1 - r.y0),
            ]);
        }
    }
    out
}

/// Per-probe seed so that results do not depend on evaluation order.
fn probe_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index as u64
}

pub fn evaluate_room(
    scorer: &dyn ProbeScorer,
    layout: &RoomLayout,
    resolution: usize,
    seed: u64,
) -> Result<RoomEvaluation> {
    layout.validate()?;
    if resolution == 0 {
        return Err(CdrmError::InvalidConfig("grid resolution must be positive".into()));
    }
    let grid = probe_grid(layout, resolution);
    let probes = grid
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            Ok(ProbeRecord {
                x: p[0],
                y: p[1],
                label: label_probe(layout, p)?,
                scores: scorer.score(p, probe_seed(seed, i))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let classify = |au: bool| -> Vec<ScoredProbe> {
        probes
            .iter()
            .map(|r| {
                let (score, want) = if au {
                    (r.scores.au.unwrap_or(0.0), RegionLabel::AuPositive)
                } else {
                    (r.scores.eu, RegionLabel::EuPositive)
                };
                ScoredProbe::new(vec![r.x, r.y], score, r.label == want)
            })
            .collect()
    };
    let au = classify(true);
    let eu = classify(false);
    Ok(RoomEvaluation {
        metrics: RoomMetrics {
            au_auroc: auroc(&au)?,
            au_auprc: auprc(&au)?,
            eu_auroc: auroc(&eu)?,
            eu_auprc: auprc(&eu)?,
        },
        probes,
    })
}
