//! Grid selection with an invariance gate: every candidate is scored by
//! validation loss, but candidates whose validation-fold MMD statistics are
//! significantly nonzero (one-sample t-test) are excluded first. The plain
//! objective has no invariance constraint, so it is never excluded; its fold
//! statistic is reported as a diagnostic.

use std::io::Write;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::domain::{Dataset, CELLS};
use crate::error::{Error, Result};
use crate::kernelmmd::{mmd2_v, mmd2_weighted, BalancingWeights};
use crate::metrics::{risk, score_dataset};
use crate::predictor::Predictor;
use crate::train::{estimate_weights_from, fit, Objective, TrainConfig};

/// Default significance level for the invariance gate.
pub const GATE_ALPHA: f64 = 0.05;

/// Default number of validation folds.
pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTestResult {
    pub t_stat: f64,
    pub p_value: f64,
    pub reject: bool,
}

/// Two-sided one-sample t-test of "mean = 0".
///
/// Degenerate rule for zero sample variance: identical nonzero values reject
/// (p = 0); identical zeros do not (p = 1).
pub fn t_test_zero(values: &[f64], alpha: f64) -> Result<TTestResult> {
    let n = values.len();
    if n < 2 {
        return Err(Error::TooFewFolds(n));
    }
    let mean = crate::numeric::mean(values);
    let sd = crate::numeric::sample_std(values);
    if sd == 0.0 {
        return Ok(if mean == 0.0 {
            TTestResult {
                t_stat: 0.0,
                p_value: 1.0,
                reject: false,
            }
        } else {
            TTestResult {
                t_stat: if mean > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY },
                p_value: 0.0,
                reject: true,
            }
        });
    }
    let t = mean / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid dof");
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(TTestResult {
        t_stat: t,
        p_value: p,
        reject: p < alpha,
    })
}

/// Deterministic stratified folds: walk the four (y, v) cells in fixed order
/// and deal examples round-robin, so every fold keeps near-proportional cell
/// membership and sizes differ by at most one.
pub fn stratified_folds(data: &Dataset, k: usize) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::TooFewFolds(k));
    }
    if data.len() < k {
        return Err(Error::TooFewFolds(data.len()));
    }
    let mut folds = vec![Vec::new(); k];
    let mut counter = 0usize;
    for (y, v) in CELLS {
        for idx in data.cell_indices(y, v) {
            folds[counter % k].push(idx);
            counter += 1;
        }
    }
    Ok(folds)
}

/// Per-fold invariance statistic of a trained model on held-out data,
/// matched to the training objective:
/// marginal MMD^2 for `erm` (diagnostic) and `m_mmd`, balancing-weighted
/// MMD^2 for `wm_mmd`, and the summed label-conditional MMD^2 for `c_mmd`.
///
/// Folds on which the statistic is undefined (a missing attribute group; for
/// `c_mmd`, no label slice with both groups) are skipped and counted.
pub fn fold_mmd(
    model: &Predictor,
    validation: &Dataset,
    cfg: &TrainConfig,
    k: usize,
    weights: Option<&BalancingWeights>,
) -> Result<(Vec<f64>, usize)> {
    let folds = stratified_folds(validation, k)?;
    if cfg.objective == Objective::WmMmd && weights.is_none() {
        return Err(Error::InvalidParameter {
            name: "weights",
            reason: "wm_mmd fold statistic requires balancing weights".into(),
        });
    }
    let mut values = Vec::with_capacity(k);
    let mut skipped = 0usize;
    for fold in &folds {
        let subset = validation.select(fold);
        let mut reprs = Vec::with_capacity(subset.len());
        for e in subset.iter() {
            reprs.push(model.forward_repr(&e.features)?);
        }
        let groups = |pred: &dyn Fn(usize) -> bool| -> Vec<&[f64]> {
            (0..subset.len())
                .filter(|&i| pred(i))
                .map(|i| reprs[i].as_slice())
                .collect()
        };
        let examples = subset.examples();
        match cfg.objective {
            Objective::Erm | Objective::MMmd => {
                let g0 = groups(&|i| examples[i].attribute == 0);
                let g1 = groups(&|i| examples[i].attribute == 1);
                if g0.is_empty() || g1.is_empty() {
                    skipped += 1;
                    continue;
                }
                values.push(mmd2_v(&g0, &g1, &cfg.kernel)?);
            }
            Objective::WmMmd => {
                let bw = weights.expect("checked above");
                let pick = |v: u8| -> (Vec<&[f64]>, Vec<f64>) {
                    let mut xs = Vec::new();
                    let mut ws = Vec::new();
                    for i in 0..subset.len() {
                        if examples[i].attribute == v {
                            xs.push(reprs[i].as_slice());
                            ws.push(bw.get(examples[i].label, v));
                        }
                    }
                    (xs, ws)
                };
                let (g0, w0) = pick(0);
                let (g1, w1) = pick(1);
                if g0.is_empty() || g1.is_empty() {
                    skipped += 1;
                    continue;
                }
                values.push(mmd2_weighted(&g0, &w0, &g1, &w1, &cfg.kernel)?);
            }
            Objective::CMmd => {
                let mut total = 0.0;
                let mut usable_slices = 0;
                for y in [0u8, 1u8] {
                    let g0 = groups(&|i| examples[i].label == y && examples[i].attribute == 0);
                    let g1 = groups(&|i| examples[i].label == y && examples[i].attribute == 1);
                    if g0.is_empty() || g1.is_empty() {
                        continue;
                    }
                    total += mmd2_v(&g0, &g1, &cfg.kernel)?;
                    usable_slices += 1;
                }
                if usable_slices == 0 {
                    skipped += 1;
                    continue;
                }
                values.push(total);
            }
        }
    }
    Ok((values, skipped))
}

/// One evaluated grid candidate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub config: TrainConfig,
    pub val_loss: f64,
    pub fold_mmds: Vec<f64>,
    pub skipped_folds: usize,
    pub mmd_mean: f64,
    pub mmd_std: f64,
    /// NaN when fewer than two folds were usable.
    pub t_stat: f64,
    pub p_value: f64,
    pub passed: bool,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    pub points: Vec<GridPoint>,
    /// Index into `points` of the selected candidate.
    pub best: usize,
    /// True when no candidate passed the gate and the penalized-loss
    /// fallback picked the winner.
    pub no_passing: bool,
}

/// Train every grid candidate, apply the invariance gate on validation
/// folds, and select.
///
/// Gate: MMD-penalized objectives must fail to reject "fold MMD mean = 0" at
/// level [`GATE_ALPHA`]; `erm` always passes. Among passers the winner has
/// the smallest validation loss, with ties broken by smaller `alpha`, then
/// grid order. If nobody passes, the fallback minimizes
/// `val_loss + alpha * mmd_mean` and `no_passing` is set.
///
/// Returns the selection record and the trained model for each candidate.
pub fn select(
    grid: &[TrainConfig],
    train: &Dataset,
    validation: &Dataset,
    folds: usize,
) -> Result<(Selection, Vec<Predictor>)> {
    if grid.is_empty() {
        return Err(Error::Empty("selection grid"));
    }
    let mut points = Vec::with_capacity(grid.len());
    let mut models = Vec::with_capacity(grid.len());
    for cfg in grid {
        let (model, _log) = fit(train, cfg)?;
        let scored = score_dataset(&model, validation);
        let val_loss = risk(&scored)?;
        let weights = match cfg.objective {
            Objective::WmMmd => Some(estimate_weights_from(train)?),
            _ => None,
        };
        let (fold_mmds, skipped_folds) = fold_mmd(&model, validation, cfg, folds, weights.as_ref())?;
        let (mmd_mean, mmd_std) = if fold_mmds.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (
                crate::numeric::mean(&fold_mmds),
                if fold_mmds.len() > 1 {
                    crate::numeric::sample_std(&fold_mmds)
                } else {
                    f64::NAN
                },
            )
        };
        let (t_stat, p_value, passed) = match t_test_zero(&fold_mmds, GATE_ALPHA) {
            Ok(t) => (
                t.t_stat,
                t.p_value,
                cfg.objective == Objective::Erm || !t.reject,
            ),
            // Too few usable folds: erm is unconstrained, penalized
            // objectives cannot demonstrate invariance.
            Err(_) => (f64::NAN, f64::NAN, cfg.objective == Objective::Erm),
        };
        points.push(GridPoint {
            config: *cfg,
            val_loss,
            fold_mmds,
            skipped_folds,
            mmd_mean,
            mmd_std,
            t_stat,
            p_value,
            passed,
            selected: false,
        });
        models.push(model);
    }

    let better = |a: &GridPoint, ia: usize, b: &GridPoint, ib: usize| -> bool {
        (a.val_loss, a.config.alpha, ia) < (b.val_loss, b.config.alpha, ib)
    };
    let mut best: Option<usize> = None;
    for (i, p) in points.iter().enumerate() {
        if !p.passed {
            continue;
        }
        best = match best {
            Some(b) if !better(p, i, &points[b], b) => Some(b),
            _ => Some(i),
        };
    }
    let no_passing = best.is_none();
    let best = best.unwrap_or_else(|| {
        let fallback_score = |p: &GridPoint| -> f64 {
            let pen = if p.mmd_mean.is_finite() { p.mmd_mean } else { 0.0 };
            p.val_loss + p.config.alpha * pen
        };
        let mut b = 0usize;
        for i in 1..points.len() {
            let (si, sb) = (fallback_score(&points[i]), fallback_score(&points[b]));
            if (si, points[i].config.alpha, i) < (sb, points[b].config.alpha, b) {
                b = i;
            }
        }
        b
    });
    points[best].selected = true;
    Ok((
        Selection {
            points,
            best,
            no_passing,
        },
        models,
    ))
}

/// One row per grid candidate, in grid order.
pub fn write_sweep_csv<W: Write>(selection: &Selection, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "index",
        "objective",
        "alpha",
        "gamma",
        "l2",
        "batch_size",
        "epochs",
        "learning_rate",
        "seed",
        "arch",
        "repr_dim",
        "val_loss",
        "mmd_mean",
        "mmd_std",
        "t_stat",
        "p_value",
        "skipped_folds",
        "passed",
        "selected",
    ])?;
    for (i, p) in selection.points.iter().enumerate() {
        let c = &p.config;
        w.write_record([
            i.to_string(),
            c.objective.name().to_string(),
            c.alpha.to_string(),
            c.kernel.bandwidth_gamma.to_string(),
            c.l2.to_string(),
            c.batch_size.to_string(),
            c.epochs.to_string(),
            c.learning_rate.to_string(),
            c.seed.to_string(),
            match c.arch {
                crate::predictor::Arch::Linear => "linear".to_string(),
                crate::predictor::Arch::Mlp => "mlp".to_string(),
            },
            c.repr_dim.to_string(),
            p.val_loss.to_string(),
            p.mmd_mean.to_string(),
            p.mmd_std.to_string(),
            p.t_stat.to_string(),
            p.p_value.to_string(),
            p.skipped_folds.to_string(),
            p.passed.to_string(),
            p.selected.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Example;
    use crate::kernelmmd::KernelConfig;
    use crate::predictor::Arch;
    use crate::seeding::rng_for;
    use rand::Rng;

    fn toy_data(seed: u64, n: usize) -> Dataset {
        let mut rng = rng_for(seed, "select-toy");
        let rows = (0..n)
            .map(|_| {
                let y = rng.gen_range(0..2u8);
                let v = rng.gen_range(0..2u8);
                let x: Vec<f64> = (0..4)
                    .map(|_| rng.gen_range(-1.0..1.0) + 1.2 * y as f64)
                    .collect();
                Example::new(x, y, v)
            })
            .collect();
        Dataset::new(rows).unwrap()
    }

    fn base_cfg(objective: Objective) -> TrainConfig {
        TrainConfig {
            objective,
            alpha: match objective {
                Objective::Erm => 0.0,
                _ => 5.0,
            },
            kernel: KernelConfig::new(2.0).unwrap(),
            l2: 0.0,
            batch_size: 16,
            epochs: 3,
            learning_rate: 0.05,
            seed: 7,
            arch: Arch::Linear,
            repr_dim: 3,
        }
    }

    #[test]
    fn t_test_matches_textbook_quantiles() {
        // t_{0.975, 4} = 2.776445...: a sample mean exactly at that quantile
        // has two-sided p = 0.05.
        // Construct 5 values with mean m and sd s so that t = 2.776445.
        let t_target = 2.776445;
        let s = 1.0;
        let m = t_target * s / (5.0f64).sqrt();
        // five points with mean m, sample sd 1: m + {-1.2649...} pattern
        // simpler: use {m-d, m-d/2, m, m+d/2, m+d} with d chosen for sd 1
        let d = (2.0f64 / 2.5).sqrt() * 2.0f64.sqrt() / 2.0; // solves var
        let vals = [m - 2.0 * d, m - d, m, m + d, m + 2.0 * d];
        let sd = crate::numeric::sample_std(&vals);
        let scaled: Vec<f64> = vals.iter().map(|v| m + (v - m) / sd).collect();
        let r = t_test_zero(&scaled, 0.05).unwrap();
        assert!((r.t_stat - t_target).abs() < 1e-6, "t = {}", r.t_stat);
        assert!((r.p_value - 0.05).abs() < 2e-6, "p = {}", r.p_value);

        let zero = t_test_zero(&[0.5, -0.5, 0.3, -0.3], 0.05).unwrap();
        assert!(zero.p_value > 0.5);
        assert!(!zero.reject);
    }

    #[test]
    fn t_test_degenerate_rules() {
        let same = t_test_zero(&[0.2, 0.2, 0.2], 0.05).unwrap();
        assert!(same.reject);
        assert_eq!(same.p_value, 0.0);

        let zeros = t_test_zero(&[0.0, 0.0, 0.0], 0.05).unwrap();
        assert!(!zeros.reject);
        assert_eq!(zeros.p_value, 1.0);

        assert!(matches!(
            t_test_zero(&[1.0], 0.05),
            Err(Error::TooFewFolds(1))
        ));
    }

    #[test]
    fn t_test_p_decreases_in_signal() {
        let weak = t_test_zero(&[0.1, -0.05, 0.12, 0.02, -0.08], 0.05).unwrap();
        let strong = t_test_zero(&[1.1, 0.95, 1.12, 1.02, 0.92], 0.05).unwrap();
        assert!(strong.p_value < weak.p_value);
        assert!(strong.reject);
    }

    #[test]
    fn folds_are_stratified_and_balanced() {
        let data = toy_data(3, 103);
        let folds = stratified_folds(&data, 5).unwrap();
        assert_eq!(folds.iter().map(|f| f.len()).sum::<usize>(), 103);
        for f in &folds {
            assert!((f.len() as i64 - 103 / 5).abs() <= 1);
        }
        // no index twice
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 103);

        // per-cell spread within 1 across folds
        let counts = data.cell_counts();
        for (y, v) in CELLS {
            let per_fold: Vec<usize> = folds
                .iter()
                .map(|f| {
                    f.iter()
                        .filter(|&&i| {
                            data.examples()[i].label == y && data.examples()[i].attribute == v
                        })
                        .count()
                })
                .collect();
            let lo = per_fold.iter().min().unwrap();
            let hi = per_fold.iter().max().unwrap();
            assert!(hi - lo <= 1, "cell ({y},{v}): {per_fold:?}");
            assert_eq!(per_fold.iter().sum::<usize>(), counts[y as usize][v as usize]);
        }
    }

    #[test]
    fn constant_representation_passes_gate() {
        let data = toy_data(5, 80);
        let cfg = base_cfg(Objective::MMmd);
        let mut model = Predictor::init(Arch::Linear, 4, 3, 1).unwrap();
        model.repr_w.iter_mut().for_each(|w| *w = 0.0);
        model.repr_b = vec![0.7, -0.1, 0.3];
        let (values, skipped) = fold_mmd(&model, &data, &cfg, 5, None).unwrap();
        assert_eq!(skipped, 0);
        assert_eq!(values.len(), 5);
        for v in &values {
            assert!(v.abs() < 1e-12);
        }
        let t = t_test_zero(&values, GATE_ALPHA).unwrap();
        assert!(!t.reject);
    }

    #[test]
    fn attribute_coded_representation_fails_gate() {
        // representation literally exposes the attribute -> every fold MMD
        // is large and similar -> gate rejects
        let mut rows = Vec::new();
        let mut rng = rng_for(11, "attr-coded");
        for _ in 0..100 {
            let y = rng.gen_range(0..2u8);
            let v = rng.gen_range(0..2u8);
            rows.push(Example::new(vec![v as f64 * 2.0, rng.gen_range(-0.1..0.1), 0.0, 0.0], y, v));
        }
        let data = Dataset::new(rows).unwrap();
        let cfg = base_cfg(Objective::MMmd);
        let mut model = Predictor::init(Arch::Linear, 4, 3, 2).unwrap();
        model.repr_w = vec![
            1.0, 0.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.0,
        ];
        model.repr_b = vec![0.0; 3];
        let (values, _) = fold_mmd(&model, &data, &cfg, 5, None).unwrap();
        let t = t_test_zero(&values, GATE_ALPHA).unwrap();
        assert!(t.reject, "t = {}, p = {}", t.t_stat, t.p_value);
    }

    #[test]
    fn conditional_fold_statistic_sums_usable_slices() {
        let data = toy_data(13, 90);
        let cfg = base_cfg(Objective::CMmd);
        let model = Predictor::init(Arch::Linear, 4, 3, 3).unwrap();
        let (values, skipped) = fold_mmd(&model, &data, &cfg, 5, None).unwrap();
        assert_eq!(values.len() + skipped, 5);
        for v in values {
            assert!(v >= 0.0 || v.abs() < 1e-9);
        }
    }

    #[test]
    fn wm_fold_statistic_requires_weights() {
        let data = toy_data(17, 60);
        let cfg = base_cfg(Objective::WmMmd);
        let model = Predictor::init(Arch::Linear, 4, 3, 4).unwrap();
        assert!(fold_mmd(&model, &data, &cfg, 5, None).is_err());
        let w = estimate_weights_from(&data).unwrap();
        let (values, _) = fold_mmd(&model, &data, &cfg, 5, Some(&w)).unwrap();
        assert!(!values.is_empty());
    }

    #[test]
    fn select_prefers_lower_validation_loss_among_passed() {
        let train = toy_data(19, 160);
        let val = toy_data(23, 120);
        let mut a = base_cfg(Objective::Erm);
        a.epochs = 6;
        let mut b = base_cfg(Objective::Erm);
        b.epochs = 1; // undertrained: higher validation loss
        let (sel, models) = select(&[a, b], &train, &val, 5).unwrap();
        assert_eq!(models.len(), 2);
        assert_eq!(sel.best, 0);
        assert!(sel.points[0].selected);
        assert!(!sel.points[1].selected);
        assert!(sel.points[0].val_loss < sel.points[1].val_loss);
        assert!(!sel.no_passing);
        assert!(sel.points.iter().all(|p| p.passed));
    }

    #[test]
    fn select_breaks_exact_ties_by_grid_order() {
        let train = toy_data(29, 120);
        let val = toy_data(31, 100);
        let cfg = base_cfg(Objective::Erm);
        let (sel, _) = select(&[cfg, cfg], &train, &val, 5).unwrap();
        assert_eq!(sel.best, 0);
        assert_eq!(sel.points[0].val_loss, sel.points[1].val_loss);
    }

    #[test]
    fn sweep_csv_has_row_per_candidate() {
        let train = toy_data(37, 100);
        let val = toy_data(41, 80);
        let grid = [base_cfg(Objective::Erm), base_cfg(Objective::MMmd)];
        let (sel, _) = select(&grid, &train, &val, 4).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&sel, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().next().unwrap().starts_with("index,objective,alpha"));
        let selected_rows = text.lines().filter(|l| l.ends_with(",true")).count();
        assert_eq!(selected_rows, 1);
    }

    #[test]
    fn too_small_validation_set_is_rejected() {
        let data = toy_data(43, 4);
        assert!(matches!(
            stratified_folds(&data, 5),
            Err(Error::TooFewFolds(4))
        ));
    }
}
