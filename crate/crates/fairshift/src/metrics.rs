//! Evaluation harness: clipped logistic risk, subgroup decomposition, AUROC,
//! fairness gaps, robustness over a shift family, and bootstrap uncertainty.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, JointSpec, Score, CELLS};
use crate::error::{Error, Result};
use crate::numeric::{neumaier_sum, population_std};
use crate::seeding::{derive_seed, rng_for};
use crate::synthgen::subsample_to_spec;

/// Scores clip into [CLIP, 1 - CLIP] before taking logs, bounding a single
/// log-loss term by ~27.6.
pub const CLIP: f64 = 1e-12;

/// Model outputs paired with labels and attributes; the unit every metric
/// consumes. Cheap to resample for the bootstrap.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredData {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
    pub attributes: Vec<u8>,
}

impl ScoredData {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>, attributes: Vec<u8>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Empty("scored data"));
        }
        if scores.len() != labels.len() || scores.len() != attributes.len() {
            return Err(Error::DimensionMismatch {
                expected: scores.len(),
                got: labels.len().min(attributes.len()),
            });
        }
        if scores.iter().any(|s| !s.is_finite() || *s < 0.0 || *s > 1.0) {
            return Err(Error::InvalidParameter {
                name: "scores",
                reason: "must lie in [0, 1]".into(),
            });
        }
        if labels.iter().chain(&attributes).any(|b| *b > 1) {
            return Err(Error::InvalidParameter {
                name: "labels/attributes",
                reason: "must be 0 or 1".into(),
            });
        }
        Ok(Self {
            scores,
            labels,
            attributes,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    fn gather(&self, indices: &[usize], out: &mut ScoredData) {
        out.scores.clear();
        out.labels.clear();
        out.attributes.clear();
        for &i in indices {
            out.scores.push(self.scores[i]);
            out.labels.push(self.labels[i]);
            out.attributes.push(self.attributes[i]);
        }
    }
}

/// Run a scorer over a dataset.
pub fn score_dataset(model: &dyn Score, data: &Dataset) -> ScoredData {
    let mut scores = Vec::with_capacity(data.len());
    let mut labels = Vec::with_capacity(data.len());
    let mut attributes = Vec::with_capacity(data.len());
    for e in data.iter() {
        scores.push(model.score(&e.features));
        labels.push(e.label);
        attributes.push(e.attribute);
    }
    ScoredData {
        scores,
        labels,
        attributes,
    }
}

/// One clipped log-loss term.
#[inline]
pub fn log_loss_term(score: f64, label: u8) -> f64 {
    let p = score.clamp(CLIP, 1.0 - CLIP);
    if label == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Mean clipped log loss.
pub fn risk(data: &ScoredData) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("risk"));
    }
    let total = neumaier_sum(
        data.scores
            .iter()
            .zip(&data.labels)
            .map(|(&s, &y)| log_loss_term(s, y)),
    );
    Ok(total / data.len() as f64)
}

/// Risk split by (y, v) cell, with the exact recomposition
/// `overall = sum_cells weight * cell_risk` where weights are empirical cell
/// frequencies. Cells absent from the data are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgroupRisks {
    pub per_cell: [[Option<f64>; 2]; 2],
    pub cell_weights: [[f64; 2]; 2],
    pub overall: f64,
    pub recomposed: f64,
}

impl SubgroupRisks {
    /// |overall - sum of weighted cell risks|; structurally ~1e-15.
    pub fn recomposition_gap(&self) -> f64 {
        (self.overall - self.recomposed).abs()
    }
}

pub fn subgroup_risks(data: &ScoredData) -> Result<SubgroupRisks> {
    if data.is_empty() {
        return Err(Error::Empty("subgroup risks"));
    }
    let n = data.len() as f64;
    let mut cell_losses: [[Vec<f64>; 2]; 2] = Default::default();
    for i in 0..data.len() {
        let term = log_loss_term(data.scores[i], data.labels[i]);
        cell_losses[data.labels[i] as usize][data.attributes[i] as usize].push(term);
    }
    let mut per_cell = [[None; 2]; 2];
    let mut cell_weights = [[0.0; 2]; 2];
    let mut recomposed_terms = Vec::with_capacity(4);
    for (y, v) in CELLS {
        let losses = &cell_losses[y as usize][v as usize];
        if losses.is_empty() {
            continue;
        }
        let weight = losses.len() as f64 / n;
        let cell_risk = neumaier_sum(losses.iter().copied()) / losses.len() as f64;
        per_cell[y as usize][v as usize] = Some(cell_risk);
        cell_weights[y as usize][v as usize] = weight;
        recomposed_terms.push(weight * cell_risk);
    }
    let overall = risk(data)?;
    let recomposed = neumaier_sum(recomposed_terms);
    Ok(SubgroupRisks {
        per_cell,
        cell_weights,
        overall,
        recomposed,
    })
}

/// AUROC via the Mann-Whitney statistic with midranks for ties. Identical
/// (to the last bit) to counting concordant pairs plus half the ties.
pub fn auroc(data: &ScoredData) -> Result<f64> {
    let n = data.len();
    let n_pos = data.labels.iter().filter(|&&y| y == 1).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::MetricPrecondition(format!(
            "auroc needs both classes; got {n_pos} positives, {n_neg} negatives"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| data.scores[i].total_cmp(&data.scores[j]));

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && data.scores[order[j + 1]] == data.scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share the midrank
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if data.labels[idx] == 1 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos as f64) * (n_pos as f64 + 1.0) / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

fn group_mean(data: &ScoredData, pick: impl Fn(usize) -> bool) -> Option<f64> {
    let mut terms = Vec::new();
    for i in 0..data.len() {
        if pick(i) {
            terms.push(data.scores[i]);
        }
    }
    if terms.is_empty() {
        None
    } else {
        Some(neumaier_sum(terms.iter().copied()) / terms.len() as f64)
    }
}

/// Equalized-odds violation: the larger, over label classes, of the absolute
/// gap in mean score between the two attribute groups within that class.
/// Requires all four (y, v) cells to be nonempty.
pub fn eo_violation(data: &ScoredData) -> Result<f64> {
    let mut worst = 0.0f64;
    for y in [0u8, 1u8] {
        let m0 = group_mean(data, |i| data.labels[i] == y && data.attributes[i] == 0);
        let m1 = group_mean(data, |i| data.labels[i] == y && data.attributes[i] == 1);
        match (m0, m1) {
            (Some(a), Some(b)) => worst = worst.max((b - a).abs()),
            _ => {
                return Err(Error::MetricPrecondition(format!(
                    "equalized odds needs both attribute groups within label {y}"
                )))
            }
        }
    }
    Ok(worst)
}

/// Demographic-parity violation: absolute gap in mean score between the two
/// attribute groups. Requires both groups to be nonempty.
pub fn dp_violation(data: &ScoredData) -> Result<f64> {
    let m0 = group_mean(data, |i| data.attributes[i] == 0);
    let m1 = group_mean(data, |i| data.attributes[i] == 1);
    match (m0, m1) {
        (Some(a), Some(b)) => Ok((b - a).abs()),
        _ => Err(Error::MetricPrecondition(
            "demographic parity needs both attribute groups".into(),
        )),
    }
}

/// Bootstrap summary. `std` is the population standard deviation over the
/// replicates that satisfied the metric's preconditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapStat {
    pub mean: f64,
    pub std: f64,
    pub replicates: usize,
    pub failed: usize,
}

/// Plain nonparametric bootstrap: resample rows with replacement, re-apply
/// the metric. Replicates whose resample violates the metric's preconditions
/// (e.g. a lost class) are skipped and counted. Each replicate's RNG derives
/// from `seed` and the replicate index.
pub fn bootstrap<F>(data: &ScoredData, metric: F, b: usize, seed: u64) -> Result<BootstrapStat>
where
    F: Fn(&ScoredData) -> Result<f64>,
{
    if b == 0 {
        return Err(Error::InvalidParameter {
            name: "bootstrap_b",
            reason: "need at least one replicate".into(),
        });
    }
    if data.is_empty() {
        return Err(Error::Empty("bootstrap"));
    }
    let n = data.len();
    let mut values = Vec::with_capacity(b);
    let mut failed = 0usize;
    let mut indices = vec![0usize; n];
    let mut resampled = ScoredData {
        scores: Vec::with_capacity(n),
        labels: Vec::with_capacity(n),
        attributes: Vec::with_capacity(n),
    };
    for rep in 0..b {
        let mut rng = rng_for(seed, &format!("replicate/{rep}"));
        for slot in indices.iter_mut() {
            *slot = rng.gen_range(0..n);
        }
        data.gather(&indices, &mut resampled);
        match metric(&resampled) {
            Ok(v) => values.push(v),
            Err(_) => failed += 1,
        }
    }
    if values.is_empty() {
        return Err(Error::AllReplicatesFailed(b));
    }
    Ok(BootstrapStat {
        mean: neumaier_sum(values.iter().copied()) / values.len() as f64,
        std: population_std(&values),
        replicates: values.len(),
        failed,
    })
}

/// Risk and AUROC of one scorer on one member of the shift family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistMetrics {
    pub mu: f64,
    pub n: usize,
    pub risk: f64,
    pub auroc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessEval {
    pub per_dist: Vec<DistMetrics>,
    /// max risk - min risk across the family.
    pub range: f64,
}

/// Evaluate a scorer across the whole family by drawing one test set per
/// member from `pool` (without replacement, exact cell counts).
pub fn robustness_range(
    model: &dyn Score,
    pool: &Dataset,
    family: &[JointSpec],
    n_per: usize,
    seed: u64,
) -> Result<RobustnessEval> {
    if family.is_empty() {
        return Err(Error::Empty("shift family"));
    }
    let mut per_dist = Vec::with_capacity(family.len());
    for (k, spec) in family.iter().enumerate() {
        let test = subsample_to_spec(pool, spec, n_per, derive_seed(seed, &format!("dist/{k}")))?;
        let scored = score_dataset(model, &test);
        per_dist.push(DistMetrics {
            mu: spec.mu,
            n: test.len(),
            risk: risk(&scored)?,
            auroc: auroc(&scored)?,
        });
    }
    let max = per_dist.iter().map(|d| d.risk).fold(f64::NEG_INFINITY, f64::max);
    let min = per_dist.iter().map(|d| d.risk).fold(f64::INFINITY, f64::min);
    Ok(RobustnessEval {
        per_dist,
        range: max - min,
    })
}

// --- Full evaluation report -------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalParams {
    pub family: Vec<JointSpec>,
    /// Test-set size drawn per family member.
    pub n_per: usize,
    /// The joint the model was trained on; fairness gaps are measured on a
    /// test set drawn from it.
    pub source: JointSpec,
    /// Bootstrap replicates per reported metric; 0 disables the bootstrap.
    pub bootstrap_b: usize,
    pub seed: u64,
}

/// Everything the harness reports for one scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_name: String,
    pub per_dist: Vec<DistMetrics>,
    pub robustness_range: f64,
    /// Fairness gaps on the source-distribution test set.
    pub eo_violation: f64,
    pub dp_violation: f64,
    /// Risk per (y, v) cell on the source test set, keyed `y{y}_v{v}`.
    pub subgroup_risks: BTreeMap<String, f64>,
    /// Bootstrap summaries keyed by metric name, e.g. `risk@mu=0.9`.
    pub bootstrap: BTreeMap<String, BootstrapStat>,
}

/// Evaluate one scorer: family sweep, fairness gaps at the source joint,
/// subgroup decomposition, and (optionally) bootstrap uncertainty for each
/// reported metric.
pub fn evaluate_model(
    name: &str,
    model: &dyn Score,
    pool: &Dataset,
    params: &EvalParams,
) -> Result<EvalReport> {
    let mut bootstrap_out = BTreeMap::new();

    // family sweep
    let mut per_dist = Vec::with_capacity(params.family.len());
    for (k, spec) in params.family.iter().enumerate() {
        let test = subsample_to_spec(
            pool,
            spec,
            params.n_per,
            derive_seed(params.seed, &format!("dist/{k}")),
        )
        .map_err(|e| match e {
            // Point at the family member that could not be drawn so the
            // caller knows which test distribution needs a bigger pool.
            Error::InsufficientCell { .. } => {
                Error::MetricPrecondition(format!("family member mu={}: {e}", spec.mu))
            }
            other => other,
        })?;
        let scored = score_dataset(model, &test);
        per_dist.push(DistMetrics {
            mu: spec.mu,
            n: test.len(),
            risk: risk(&scored)?,
            auroc: auroc(&scored)?,
        });
        if params.bootstrap_b > 0 {
            let tag = format!("mu={}", spec.mu);
            bootstrap_out.insert(
                format!("risk@{tag}"),
                bootstrap(
                    &scored,
                    risk,
                    params.bootstrap_b,
                    derive_seed(params.seed, &format!("boot/risk/{k}")),
                )?,
            );
            bootstrap_out.insert(
                format!("auroc@{tag}"),
                bootstrap(
                    &scored,
                    auroc,
                    params.bootstrap_b,
                    derive_seed(params.seed, &format!("boot/auroc/{k}")),
                )?,
            );
        }
    }
    let max = per_dist.iter().map(|d| d.risk).fold(f64::NEG_INFINITY, f64::max);
    let min = per_dist.iter().map(|d| d.risk).fold(f64::INFINITY, f64::min);

    // fairness + subgroup decomposition at the source joint
    let source_test = subsample_to_spec(
        pool,
        &params.source,
        params.n_per,
        derive_seed(params.seed, "source"),
    )?;
    let scored_source = score_dataset(model, &source_test);
    let eo = eo_violation(&scored_source)?;
    let dp = dp_violation(&scored_source)?;
    let groups = subgroup_risks(&scored_source)?;
    let mut subgroup_map = BTreeMap::new();
    for (y, v) in CELLS {
        if let Some(r) = groups.per_cell[y as usize][v as usize] {
            subgroup_map.insert(format!("y{y}_v{v}"), r);
        }
    }
    if params.bootstrap_b > 0 {
        bootstrap_out.insert(
            "eo_violation".to_string(),
            bootstrap(
                &scored_source,
                eo_violation,
                params.bootstrap_b,
                derive_seed(params.seed, "boot/eo"),
            )?,
        );
        bootstrap_out.insert(
            "dp_violation".to_string(),
            bootstrap(
                &scored_source,
                dp_violation,
                params.bootstrap_b,
                derive_seed(params.seed, "boot/dp"),
            )?,
        );
    }

    Ok(EvalReport {
        model_name: name.to_string(),
        per_dist,
        robustness_range: max - min,
        eo_violation: eo,
        dp_violation: dp,
        subgroup_risks: subgroup_map,
        bootstrap: bootstrap_out,
    })
}

pub fn write_report_json<W: Write>(report: &EvalReport, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, report)?;
    writeln!(w)?;
    Ok(())
}

/// Plot-friendly companion: one row per (model, family member).
pub fn write_plot_csv<W: Write>(reports: &[EvalReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "mu", "n", "risk", "auroc", "risk_std", "auroc_std"])?;
    for r in reports {
        for d in &r.per_dist {
            let risk_std = r
                .bootstrap
                .get(&format!("risk@mu={}", d.mu))
                .map(|s| s.std.to_string())
                .unwrap_or_default();
            let auroc_std = r
                .bootstrap
                .get(&format!("auroc@mu={}", d.mu))
                .map(|s| s.std.to_string())
                .unwrap_or_default();
            w.write_record([
                r.model_name.as_str(),
                &d.mu.to_string(),
                &d.n.to_string(),
                &d.risk.to_string(),
                &d.auroc.to_string(),
                &risk_std,
                &auroc_std,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
