//! Experiment harness: feature tables over generated sets, RMSE against the
//! requested condition, the condition-spot ablation, pairwise feature plots
//! and the latent-space correlation report.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::features::{avg_shortest_path_length, build_condition_vector, Feature, FeatureVector};
use crate::generate::{generate_from_checkpoint, Batch, ConnectivityPolicy, GenerationRequest};
use crate::graph::Graph;
use crate::model::{ConditionSpots, HyperParams};
use crate::rng::derive_seed;
use crate::train::{train, Checkpoint, TrainConfig, TrainingData};

// ---------------------------------------------------------------- statistics

pub fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Pearson correlation; `None` for fewer than two points or zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let mx = mean(x)?;
    let my = mean(y)?;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks, ties get their average rank.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson on average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() {
        return None;
    }
    pearson(&ranks(x), &ranks(y))
}

/// Percentile with linear interpolation between closest ranks.
pub fn percentile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

/// `sqrt(mean((v − target)²))`.
pub fn rmse_vs_condition(values: &[f64], target: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Validation("rmse needs at least one value".into()));
    }
    let ss: f64 = values.iter().map(|v| (v - target) * (v - target)).sum();
    Ok((ss / values.len() as f64).sqrt())
}

// ------------------------------------------------------------ feature tables

/// Features of one graph tagged with the condition it was generated under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphRow {
    pub condition: f64,
    pub index: usize,
    pub connected: bool,
    pub features: FeatureVector,
    /// aspl of the largest component; only set for disconnected graphs.
    pub lcc_aspl: Option<f64>,
}

impl GraphRow {
    pub fn compute(condition: f64, index: usize, g: &Graph) -> Self {
        let connected = g.is_connected();
        let lcc_aspl = if connected || g.node_count() == 0 {
            None
        } else {
            avg_shortest_path_length(&g.largest_component()).ok()
        };
        GraphRow {
            condition,
            index,
            connected,
            features: FeatureVector::compute(g),
            lcc_aspl,
        }
    }
}

pub const FEATURE_CSV_HEADER: &str = "condition,index,connected,aspl,avg_degree,modularity,clustering,plaw,lcc_aspl";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub fn rows_csv(rows: &[GraphRow]) -> String {
    let mut out = String::from(FEATURE_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let f = r.features.to_array();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.condition,
            r.index,
            r.connected,
            opt(f[0]),
            opt(f[1]),
            opt(f[2]),
            opt(f[3]),
            opt(f[4]),
            opt(r.lcc_aspl)
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: f64,
    pub count: usize,
    pub disconnected: usize,
    /// Mean over graphs where the feature is defined, in reported order.
    pub means: [Option<f64>; 5],
    /// Mean largest-component aspl over the disconnected graphs.
    pub lcc_aspl_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureReport {
    pub rows: Vec<GraphRow>,
    pub summaries: Vec<ConditionSummary>,
    /// 25/50/75th percentiles of each reported feature over the dataset.
    pub dataset_percentiles: Option<[Option<[f64; 3]>; 5]>,
}

/// Per-condition feature means over generated graph sets, plus dataset
/// percentiles as a reference column when `dataset` is given.
pub fn eval_features(sets: &[(f64, Vec<Graph>)], dataset: Option<&[Graph]>) -> Result<FeatureReport> {
    if sets.is_empty() {
        return Err(Error::Validation("no condition sets to evaluate".into()));
    }
    if let Some((c, _)) = sets.iter().find(|(_, gs)| gs.is_empty()) {
        return Err(Error::Validation(format!("no graphs for condition {c}")));
    }
    let jobs: Vec<(f64, usize, &Graph)> = sets
        .iter()
        .flat_map(|(c, gs)| gs.iter().enumerate().map(move |(i, g)| (*c, i, g)))
        .collect();
    let rows: Vec<GraphRow> = jobs.par_iter().map(|&(c, i, g)| GraphRow::compute(c, i, g)).collect();
    let summaries = sets
        .iter()
        .map(|(c, _)| summarize(*c, rows.iter().filter(|r| r.condition == *c)))
        .collect();
    let dataset_percentiles = dataset.map(|gs| {
        let fvs: Vec<FeatureVector> = gs.par_iter().map(FeatureVector::compute).collect();
        std::array::from_fn(|k| {
            let mut vals: Vec<f64> = fvs.iter().filter_map(|f| f.to_array()[k]).collect();
            vals.sort_by(f64::total_cmp);
            Some([
                percentile(&vals, 0.25)?,
                percentile(&vals, 0.5)?,
                percentile(&vals, 0.75)?,
            ])
        })
    });
    Ok(FeatureReport {
        rows,
        summaries,
        dataset_percentiles,
    })
}

fn summarize<'a>(condition: f64, rows: impl Iterator<Item = &'a GraphRow>) -> ConditionSummary {
    let rows: Vec<&GraphRow> = rows.collect();
    let means = std::array::from_fn(|k| {
        let vals: Vec<f64> = rows.iter().filter_map(|r| r.features.to_array()[k]).collect();
        mean(&vals)
    });
    let lcc: Vec<f64> = rows.iter().filter_map(|r| r.lcc_aspl).collect();
    ConditionSummary {
        condition,
        count: rows.len(),
        disconnected: rows.iter().filter(|r| !r.connected).count(),
        means,
        lcc_aspl_mean: mean(&lcc),
    }
}

impl FeatureReport {
    pub fn csv(&self) -> String {
        rows_csv(&self.rows)
    }

    pub fn text(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "--".into());
        let mut out = String::new();
        let _ = write!(out, "{:>10} {:>6} {:>6}", "condition", "graphs", "disc");
        for f in Feature::REPORTED {
            let _ = write!(out, " {:>16}", f.name());
        }
        out.push('\n');
        for s in &self.summaries {
            let _ = write!(out, "{:>10} {:>6} {:>6}", s.condition, s.count, s.disconnected);
            for (k, m) in s.means.iter().enumerate() {
                let mut cell = fmt(*m);
                if k == 0 {
                    if let Some(l) = s.lcc_aspl_mean {
                        cell = format!("{cell} ({l:.3})");
                    }
                }
                let _ = write!(out, " {cell:>16}");
            }
            out.push('\n');
        }
        if let Some(p) = &self.dataset_percentiles {
            let _ = write!(out, "{:>24}", "dataset 25/50/75%");
            for q in p {
                let cell = match q {
                    Some([a, b, c]) => format!("{a:.2}/{b:.2}/{c:.2}"),
                    None => "--".into(),
                };
                let _ = write!(out, " {cell:>16}");
            }
            out.push('\n');
        }
        out
    }
}

// ---------------------------------------------------------------- generation

/// Generates `count` graphs per condition; condition `i` uses seed
/// `derive_seed(seed, i)`.
pub fn generate_sets(
    ckpt: &Checkpoint,
    conditions: &[f64],
    count: usize,
    seed: u64,
    policy: ConnectivityPolicy,
) -> Result<Vec<Batch>> {
    conditions
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let req = GenerationRequest {
                policy,
                ..GenerationRequest::new(c, count, derive_seed(seed, i as u64))
            };
            generate_from_checkpoint(ckpt, &req)
        })
        .collect()
}

/// `(condition, graphs)` pairs, dropping failed slots.
pub fn batch_sets(batches: &[Batch]) -> Vec<(f64, Vec<Graph>)> {
    batches
        .iter()
        .map(|b| (b.condition.value, b.graphs().into_iter().cloned().collect()))
        .collect()
}

/// The conditioned feature of each generated graph (undefined ones dropped).
pub fn feature_values(graphs: &[Graph], feature: Feature) -> Vec<f64> {
    graphs.par_iter().filter_map(|g| feature.compute(g).ok()).collect()
}

// ------------------------------------------------------------------ ablation

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub spots: ConditionSpots,
    /// Per condition: feature values of the generated graphs.
    pub values: Vec<Vec<f64>>,
    /// Per condition; `None` when no generated graph had the feature defined.
    pub rmse: Vec<Option<f64>>,
    pub failed: Option<String>,
}

impl AblationRow {
    pub fn mean_rmse(&self) -> Option<f64> {
        let v: Option<Vec<f64>> = self.rmse.iter().copied().collect();
        v.and_then(|v| mean(&v))
    }

    pub fn label(&self) -> String {
        if self.spots == ConditionSpots::ALL {
            "original".into()
        } else {
            format!("spots {}", self.spots.label())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub feature: Feature,
    pub conditions: Vec<f64>,
    pub rows: Vec<AblationRow>,
}

/// The four variants: all spots, then each single spot removed.
pub fn ablation_variants() -> [ConditionSpots; 4] {
    let all = ConditionSpots::ALL;
    [
        all,
        ConditionSpots {
            on_encoder_input: false,
            ..all
        },
        ConditionSpots {
            on_decoder_input: false,
            ..all
        },
        ConditionSpots {
            on_decoder_hidden_init: false,
            ..all
        },
    ]
}

#[derive(Debug, Clone)]
pub struct AblationPlan {
    pub conditions: Vec<f64>,
    pub count: usize,
    pub seed: u64,
    pub policy: ConnectivityPolicy,
    /// Already-trained checkpoints keyed by spots; a variant found here is
    /// not retrained. It must come from the same data, hyper-parameters and
    /// config for the table to mean anything.
    pub pretrained: Vec<Checkpoint>,
}

/// Trains the four spot variants on `dataset`, generates under each
/// condition and tabulates RMSE of the conditioned feature against the
/// condition. A variant that fails to train is marked and the rest proceed.
pub fn run_ablation(dataset: &Dataset, hp: &HyperParams, base: &TrainConfig, plan: &AblationPlan) -> Result<AblationReport> {
    if plan.conditions.is_empty() {
        return Err(Error::Validation("ablation needs at least one condition".into()));
    }
    let data = dataset.training_data()?;
    let feature = dataset.manifest.feature;
    let rows = ablation_variants()
        .into_iter()
        .map(|spots| {
            let ckpt = match plan.pretrained.iter().find(|c| c.model.hp.spots == spots) {
                Some(c) => Ok(c.clone()),
                None => train_variant(&data, hp, base, spots),
            };
            match ckpt.and_then(|c| {
                generate_sets(&c, &plan.conditions, plan.count, plan.seed, plan.policy)
            }) {
                Ok(batches) => {
                    let values: Vec<Vec<f64>> = batches
                        .iter()
                        .map(|b| feature_values(&b.graphs().into_iter().cloned().collect::<Vec<_>>(), feature))
                        .collect();
                    let rmse = values
                        .iter()
                        .zip(&batches)
                        .map(|(v, b)| rmse_vs_condition(v, b.condition.value).ok())
                        .collect();
                    AblationRow {
                        spots,
                        values,
                        rmse,
                        failed: None,
                    }
                }
                Err(e) => AblationRow {
                    spots,
                    values: vec![Vec::new(); plan.conditions.len()],
                    rmse: vec![None; plan.conditions.len()],
                    failed: Some(e.to_string()),
                },
            }
        })
        .collect();
    let round_places = dataset.manifest.round_places;
    let conditions = plan
        .conditions
        .iter()
        .map(|&c| build_condition_vector(c, 1, round_places).map(|v| v.value))
        .collect::<Result<_>>()?;
    Ok(AblationReport {
        feature,
        conditions,
        rows,
    })
}

fn train_variant(data: &TrainingData, hp: &HyperParams, base: &TrainConfig, spots: ConditionSpots) -> Result<Checkpoint> {
    let config = TrainConfig { spots, ..base.clone() };
    Ok(train(data, hp.clone(), config)?.best)
}

impl AblationReport {
    /// True when the original variant has the lowest mean RMSE.
    pub fn original_lowest(&self) -> Option<bool> {
        let orig = self.rows.first()?.mean_rmse()?;
        Some(self.rows[1..].iter().all(|r| r.mean_rmse().is_none_or(|m| orig <= m)))
    }

    pub fn text(&self) -> String {
        let mut out = format!("RMSE of {} against the condition\n", self.feature);
        let _ = write!(out, "{:<14}", "variant");
        for c in &self.conditions {
            let _ = write!(out, " {:>10}", format!("{c}"));
        }
        let _ = writeln!(out, " {:>10}", "mean");
        for r in &self.rows {
            let _ = write!(out, "{:<14}", r.label());
            if let Some(e) = &r.failed {
                let _ = writeln!(out, " failed: {e}");
                continue;
            }
            for v in &r.rmse {
                let _ = write!(out, " {:>10}", v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "--".into()));
            }
            let _ = writeln!(
                out,
                " {:>10}",
                r.mean_rmse().map(|x| format!("{x:.4}")).unwrap_or_else(|| "--".into())
            );
        }
        let trend = match self.original_lowest() {
            Some(true) => "original has the lowest mean RMSE",
            Some(false) => "original does not have the lowest mean RMSE",
            None => "trend undetermined",
        };
        let _ = writeln!(
            out,
            "trend (soft): {trend}; expected at full scale: original lowest"
        );
        out
    }
}

// ------------------------------------------------------------ pairwise plots

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Features with at least one defined value across `rows`.
fn defined_features(rows: &[GraphRow]) -> Vec<usize> {
    (0..5)
        .filter(|&k| rows.iter().any(|r| r.features.to_array()[k].is_some()))
        .collect()
}

/// Per-graph CSV and an SVG scatter-matrix: histograms on the diagonal,
/// scatter plots elsewhere, one colour per condition.
pub fn pairwise_emit(rows: &[GraphRow]) -> Result<(String, String)> {
    let feats = defined_features(rows);
    if feats.len() < 2 {
        return Err(Error::Validation(format!(
            "pairwise plot needs two defined features, found {}",
            feats.len()
        )));
    }
    Ok((rows_csv(rows), pairplot_svg(rows, &feats)))
}

fn pairplot_svg(rows: &[GraphRow], feats: &[usize]) -> String {
    const CELL: f64 = 150.0;
    const PAD: f64 = 12.0;
    const MARGIN: f64 = 40.0;
    let mut conditions: Vec<f64> = rows.iter().map(|r| r.condition).collect();
    conditions.sort_by(f64::total_cmp);
    conditions.dedup();
    let color = |c: f64| PALETTE[conditions.iter().position(|&x| x == c).unwrap_or(0) % PALETTE.len()];
    let k = feats.len();
    let size = MARGIN + k as f64 * CELL;
    let legend_h = 20.0 * conditions.len() as f64 + 10.0;
    let ranges: Vec<(f64, f64)> = feats
        .iter()
        .map(|&f| {
            let vals: Vec<f64> = rows.iter().filter_map(|r| r.features.to_array()[f]).collect();
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, lo + 0.5)
            }
        })
        .collect();
    let scale = |v: f64, (lo, hi): (f64, f64)| (v - lo) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="10">"#,
        w = size,
        h = size + legend_h
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, &fi) in feats.iter().enumerate() {
        let name = Feature::REPORTED[fi].name();
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{name}</text>"#,
            MARGIN + (i as f64 + 0.5) * CELL,
            MARGIN - 8.0
        );
        let _ = writeln!(
            s,
            r#"<text x="12" y="{y}" text-anchor="middle" transform="rotate(-90 12 {y})">{name}</text>"#,
            y = MARGIN + (i as f64 + 0.5) * CELL
        );
    }
    for (row, &fy) in feats.iter().enumerate() {
        for (col, &fx) in feats.iter().enumerate() {
            let x0 = MARGIN + col as f64 * CELL + PAD;
            let y0 = MARGIN + row as f64 * CELL + PAD;
            let inner = CELL - 2.0 * PAD;
            let _ = writeln!(
                s,
                r##"<rect x="{x0}" y="{y0}" width="{inner}" height="{inner}" fill="none" stroke="#999"/>"##
            );
            if row == col {
                const BINS: usize = 12;
                let hists: Vec<(f64, Vec<usize>)> = conditions
                    .iter()
                    .map(|&c| {
                        let mut h = vec![0usize; BINS];
                        for r in rows.iter().filter(|r| r.condition == c) {
                            if let Some(v) = r.features.to_array()[fx] {
                                let b = ((scale(v, ranges[col]) * BINS as f64) as usize).min(BINS - 1);
                                h[b] += 1;
                            }
                        }
                        (c, h)
                    })
                    .collect();
                let top = hists.iter().flat_map(|(_, h)| h.iter().copied()).max().unwrap_or(0).max(1);
                let bw = inner / BINS as f64;
                for (c, h) in &hists {
                    for (b, &n) in h.iter().enumerate() {
                        if n == 0 {
                            continue;
                        }
                        let bh = inner * n as f64 / top as f64;
                        let _ = writeln!(
                            s,
                            r#"<rect x="{:.2}" y="{:.2}" width="{bw:.2}" height="{bh:.2}" fill="{}" fill-opacity="0.4"/>"#,
                            x0 + b as f64 * bw,
                            y0 + inner - bh,
                            color(*c)
                        );
                    }
                }
            } else {
                for r in rows {
                    let a = r.features.to_array();
                    if let (Some(vx), Some(vy)) = (a[fx], a[fy]) {
                        let _ = writeln!(
                            s,
                            r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{}" fill-opacity="0.6"/>"#,
                            x0 + scale(vx, ranges[col]) * inner,
                            y0 + inner - scale(vy, ranges[row]) * inner,
                            color(r.condition)
                        );
                    }
                }
            }
        }
    }
    for (i, &c) in conditions.iter().enumerate() {
        let y = size + 10.0 + 20.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{MARGIN}" y="{y}" width="12" height="12" fill="{}"/><text x="{}" y="{}">condition {c}</text>"#,
            color(c),
            MARGIN + 18.0,
            y + 10.0
        );
    }
    s.push_str("</svg>\n");
    s
}

// ----------------------------------------------------------- latent analysis

#[derive(Debug, Clone, PartialEq)]
pub struct LatentPlan {
    pub expected_latent_dim: usize,
    pub conditions: Vec<f64>,
    pub count: usize,
    pub seed: u64,
}

impl LatentPlan {
    pub fn new(count: usize, seed: u64) -> Self {
        LatentPlan {
            expected_latent_dim: 4,
            conditions: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            count,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedDensity {
    pub condition: f64,
    pub densities: Vec<f64>,
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentReport {
    /// Pearson correlation of each latent mean coordinate with the
    /// condition over the encoded validation graphs; `None` if undefined.
    pub latent_correlations: Vec<Option<f64>>,
    pub encoded: usize,
    pub generated: Vec<GeneratedDensity>,
    /// Pearson correlation of condition vs realized density over all
    /// generated graphs.
    pub condition_density_correlation: Option<f64>,
}

/// Encodes the validation split (training split if there is none),
/// correlates each coordinate of μ with the condition, then generates at
/// each planned condition and correlates condition with realized density.
pub fn latent_analysis(ckpt: &Checkpoint, dataset: &Dataset, plan: &LatentPlan) -> Result<LatentReport> {
    let hp = &ckpt.model.hp;
    if hp.latent_dim != plan.expected_latent_dim {
        return Err(Error::Config(format!(
            "checkpoint latent_dim {} but analysis expects {}",
            hp.latent_dim, plan.expected_latent_dim
        )));
    }
    if dataset.manifest.vocab != hp.vocab {
        return Err(Error::Incompatible("dataset vocabulary differs from the checkpoint's".into()));
    }
    let data = dataset.training_data()?;
    let examples = if data.val.is_empty() { &data.train } else { &data.val };
    let encoded: Vec<(Vec<f64>, f64)> = examples
        .par_iter()
        .map(|ex| ckpt.model.encode(&ex.seq, &ex.cond).map(|(mu, _)| (mu, ex.cond.value)))
        .collect::<Result<_>>()?;
    let conds: Vec<f64> = encoded.iter().map(|(_, c)| *c).collect();
    let latent_correlations = (0..hp.latent_dim)
        .map(|l| {
            let zl: Vec<f64> = encoded.iter().map(|(mu, _)| mu[l]).collect();
            pearson(&zl, &conds)
        })
        .collect();
    let batches = generate_sets(ckpt, &plan.conditions, plan.count, plan.seed, ConnectivityPolicy::AcceptAll)?;
    let generated: Vec<GeneratedDensity> = batches
        .iter()
        .map(|b| {
            let densities = feature_values(&b.graphs().into_iter().cloned().collect::<Vec<_>>(), Feature::Density);
            GeneratedDensity {
                condition: b.condition.value,
                mean: mean(&densities),
                densities,
            }
        })
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = generated
        .iter()
        .flat_map(|g| g.densities.iter().map(move |&d| (g.condition, d)))
        .unzip();
    Ok(LatentReport {
        latent_correlations,
        encoded: encoded.len(),
        condition_density_correlation: pearson(&xs, &ys),
        generated,
    })
}

impl LatentReport {
    pub fn text(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "undefined".into());
        let mut out = format!("latent correlation with condition ({} encoded graphs)\n", self.encoded);
        for (l, c) in self.latent_correlations.iter().enumerate() {
            let _ = writeln!(out, "  z{l}: {}", fmt(*c));
        }
        out.push_str("generated edge density\n");
        for g in &self.generated {
            let _ = writeln!(
                out,
                "  condition {}: mean {} over {} graphs",
                g.condition,
                fmt(g.mean),
                g.densities.len()
            );
        }
        let _ = writeln!(
            out,
            "condition vs density correlation: {}",
            fmt(self.condition_density_correlation)
        );
        out
    }
}

/// Validation (or training) graphs of a dataset.
pub fn split_graphs(dataset: &Dataset, split: Split) -> Vec<&Graph> {
    dataset
        .manifest
        .entries
        .iter()
        .zip(&dataset.graphs)
        .filter(|(e, _)| e.split == split)
        .map(|(_, g)| g)
        .collect()
}
