//! RBF kernel, squared-MMD V-statistic estimators (plain, weighted, and
//! conditional on the label), and the balancing weights that map source
//! expectations to the idealized distribution.

use serde::{Deserialize, Serialize};

use crate::domain::{CellTable, Dataset, Example, CELLS};
use crate::error::{Error, Result};
use crate::numeric::squared_distance;

/// RBF kernel configuration: `k(a, b) = exp(-||a - b||^2 / bandwidth_gamma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub bandwidth_gamma: f64,
}

impl KernelConfig {
    pub fn new(bandwidth_gamma: f64) -> Result<Self> {
        let cfg = Self { bandwidth_gamma };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Deserialized configurations bypass `new`, so validation is separate.
    pub fn validate(&self) -> Result<()> {
        if !self.bandwidth_gamma.is_finite() || self.bandwidth_gamma <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "bandwidth_gamma",
                reason: format!("must be positive, got {}", self.bandwidth_gamma),
            });
        }
        Ok(())
    }
}

pub fn rbf_kernel(a: &[f64], b: &[f64], cfg: &KernelConfig) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(rbf_unchecked(a, b, cfg.bandwidth_gamma))
}

#[inline]
pub(crate) fn rbf_unchecked(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    (-squared_distance(a, b) / gamma).exp()
}

/// Squared-MMD V-statistic (biased; includes diagonal terms):
/// `(1/m^2) sum k(a,a') + (1/n^2) sum k(b,b') - (2/mn) sum k(a,b)`.
pub fn mmd2_v<A, B>(samples_a: &[A], samples_b: &[B], cfg: &KernelConfig) -> Result<f64>
where
    A: AsRef<[f64]>,
    B: AsRef<[f64]>,
{
    if samples_a.is_empty() || samples_b.is_empty() {
        return Err(Error::Empty("mmd sample set"));
    }
    let gamma = cfg.bandwidth_gamma;
    let m = samples_a.len() as f64;
    let n = samples_b.len() as f64;

    let within = |xs: &[&[f64]]| -> f64 {
        // diagonal contributes k(x,x) = 1 per point
        let mut sum = xs.len() as f64;
        for i in 0..xs.len() {
            for j in (i + 1)..xs.len() {
                sum += 2.0 * rbf_unchecked(xs[i], xs[j], gamma);
            }
        }
        sum
    };
    let a: Vec<&[f64]> = samples_a.iter().map(|x| x.as_ref()).collect();
    let b: Vec<&[f64]> = samples_b.iter().map(|x| x.as_ref()).collect();
    let mut cross = 0.0;
    for ai in &a {
        for bj in &b {
            cross += rbf_unchecked(ai, bj, gamma);
        }
    }
    Ok(within(&a) / (m * m) + within(&b) / (n * n) - 2.0 * cross / (m * n))
}

/// Self-normalized weighted squared-MMD V-statistic. Weights are normalized
/// within each group, so the estimate is invariant to each group's weight
/// scale.
pub fn mmd2_weighted<A, B>(
    samples_a: &[A],
    weights_a: &[f64],
    samples_b: &[B],
    weights_b: &[f64],
    cfg: &KernelConfig,
) -> Result<f64>
where
    A: AsRef<[f64]>,
    B: AsRef<[f64]>,
{
    if samples_a.is_empty() || samples_b.is_empty() {
        return Err(Error::Empty("mmd sample set"));
    }
    if samples_a.len() != weights_a.len() {
        return Err(Error::DimensionMismatch {
            expected: samples_a.len(),
            got: weights_a.len(),
        });
    }
    if samples_b.len() != weights_b.len() {
        return Err(Error::DimensionMismatch {
            expected: samples_b.len(),
            got: weights_b.len(),
        });
    }
    let normalize = |ws: &[f64]| -> Result<Vec<f64>> {
        if ws.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "weights",
                reason: "must be finite and nonnegative".into(),
            });
        }
        let total: f64 = ws.iter().sum();
        if total <= 0.0 {
            return Err(Error::AllZeroWeights);
        }
        Ok(ws.iter().map(|w| w / total).collect())
    };
    let wa = normalize(weights_a)?;
    let wb = normalize(weights_b)?;
    let gamma = cfg.bandwidth_gamma;
    let a: Vec<&[f64]> = samples_a.iter().map(|x| x.as_ref()).collect();
    let b: Vec<&[f64]> = samples_b.iter().map(|x| x.as_ref()).collect();

    let within = |xs: &[&[f64]], ws: &[f64]| -> f64 {
        let mut sum: f64 = ws.iter().map(|w| w * w).sum(); // diagonal, k = 1
        for i in 0..xs.len() {
            for j in (i + 1)..xs.len() {
                sum += 2.0 * ws[i] * ws[j] * rbf_unchecked(xs[i], xs[j], gamma);
            }
        }
        sum
    };
    let mut cross = 0.0;
    for (ai, wi) in a.iter().zip(&wa) {
        for (bj, wj) in b.iter().zip(&wb) {
            cross += wi * wj * rbf_unchecked(ai, bj, gamma);
        }
    }
    Ok(within(&a, &wa) + within(&b, &wb) - 2.0 * cross)
}

/// Conditional squared MMD: sum over label classes y of the MMD between the
/// v = 0 and v = 1 representation samples within that class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalMmd {
    pub value: f64,
    /// Number of y-slices that had an empty side and contributed 0.
    pub skipped_slices: usize,
}

pub fn mmd2_conditional<F>(batch: &Dataset, repr_of: F, cfg: &KernelConfig) -> ConditionalMmd
where
    F: Fn(&Example) -> Vec<f64>,
{
    let mut value = 0.0;
    let mut skipped = 0;
    for y in 0..2u8 {
        let group = |v: u8| -> Vec<Vec<f64>> {
            batch
                .iter()
                .filter(|e| e.label == y && e.attribute == v)
                .map(&repr_of)
                .collect()
        };
        let a = group(0);
        let b = group(1);
        if a.is_empty() || b.is_empty() {
            skipped += 1;
            continue;
        }
        value += mmd2_v(&a, &b, cfg).expect("nonempty slices");
    }
    ConditionalMmd {
        value,
        skipped_slices: skipped,
    }
}

/// Balancing weights `u(y, v) = P(y) P(v) / P(y, v)`, tabulated on the 2x2
/// cells. Reweighting by `u` maps source expectations to expectations under
/// the idealized distribution where Y and V are independent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalancingWeights {
    table: [[f64; 2]; 2],
}

impl BalancingWeights {
    pub fn get(&self, y: u8, v: u8) -> f64 {
        self.table[y as usize][v as usize]
    }

    /// Per-example weights for a dataset, in dataset order.
    pub fn per_example(&self, data: &Dataset) -> Vec<f64> {
        data.iter().map(|e| self.get(e.label, e.attribute)).collect()
    }

    /// Uniform weights (u = 1 everywhere); the idealized-source case.
    pub fn uniform() -> Self {
        Self {
            table: [[1.0; 2]; 2],
        }
    }
}

pub fn balancing_weights(table: &CellTable) -> Result<BalancingWeights> {
    let mut out = [[0.0; 2]; 2];
    for (y, v) in CELLS {
        let joint = table.cell(y, v);
        if joint <= 0.0 {
            return Err(Error::ZeroCell { y, v });
        }
        out[y as usize][v as usize] =
            table.marginal_y[y as usize] * table.marginal_v[v as usize] / joint;
    }
    Ok(BalancingWeights { table: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{cell_table, JointSpec};
    use rand::Rng;

    fn kcfg(gamma: f64) -> KernelConfig {
        KernelConfig::new(gamma).unwrap()
    }

    /// Brute-force V-statistic with explicit double loops, kept independent
    /// of the implementation above.
    fn mmd2_brute(a: &[Vec<f64>], b: &[Vec<f64>], gamma: f64) -> f64 {
        let k = |x: &[f64], y: &[f64]| -> f64 {
            let d2: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
            (-d2 / gamma).exp()
        };
        let m = a.len() as f64;
        let n = b.len() as f64;
        let mut aa = 0.0;
        for x in a {
            for y in a {
                aa += k(x, y);
            }
        }
        let mut bb = 0.0;
        for x in b {
            for y in b {
                bb += k(x, y);
            }
        }
        let mut ab = 0.0;
        for x in a {
            for y in b {
                ab += k(x, y);
            }
        }
        aa / (m * m) + bb / (n * n) - 2.0 * ab / (m * n)
    }

    #[test]
    fn rbf_basics() {
        let cfg = kcfg(1.0);
        assert_eq!(rbf_kernel(&[1.0, 2.0], &[1.0, 2.0], &cfg).unwrap(), 1.0);
        let k01 = rbf_kernel(&[0.0], &[1.0], &cfg).unwrap();
        assert!((k01 - (-1.0f64).exp()).abs() < 1e-12);
        assert!(rbf_kernel(&[0.0], &[1.0, 2.0], &cfg).is_err());
    }

    #[test]
    fn rbf_symmetry_random_pairs() {
        let mut rng = crate::seeding::rng_for(11, "kernel-symmetry");
        let cfg = kcfg(3.0);
        for _ in 0..50 {
            let a: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let kab = rbf_kernel(&a, &b, &cfg).unwrap();
            let kba = rbf_kernel(&b, &a, &cfg).unwrap();
            assert_eq!(kab, kba);
            assert!(kab > 0.0 && kab <= 1.0);
        }
    }

    #[test]
    fn mmd2_v_identical_samples_is_zero() {
        let a = vec![vec![0.3, -1.0], vec![2.0, 0.5], vec![-0.7, 0.1]];
        let v = mmd2_v(&a, &a, &kcfg(2.0)).unwrap();
        assert!(v.abs() < 1e-12, "got {v}");
    }

    #[test]
    fn mmd2_v_two_points() {
        // A = {0}, B = {1}, gamma = 1: 1 + 1 - 2 e^{-1}
        let v = mmd2_v(&[vec![0.0]], &[vec![1.0]], &kcfg(1.0)).unwrap();
        assert!((v - (2.0 - 2.0 * (-1.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn mmd2_v_matches_brute_force() {
        let mut rng = crate::seeding::rng_for(3, "mmd-brute");
        for trial in 0..20 {
            let dim = 1 + trial % 4;
            let m = 2 + (trial * 7) % 12;
            let n = 3 + (trial * 5) % 9;
            let draw = |rng: &mut rand_chacha::ChaCha8Rng, count: usize| -> Vec<Vec<f64>> {
                (0..count)
                    .map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect())
                    .collect()
            };
            let a = draw(&mut rng, m);
            let b = draw(&mut rng, n);
            let got = mmd2_v(&a, &b, &kcfg(1.7)).unwrap();
            let want = mmd2_brute(&a, &b, 1.7);
            assert!((got - want).abs() < 1e-10, "trial {trial}: {got} vs {want}");
        }
    }

    #[test]
    fn weighted_reduces_to_unweighted_when_equal() {
        let mut rng = crate::seeding::rng_for(5, "mmd-weighted-equal");
        let a: Vec<Vec<f64>> = (0..7)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let b: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let cfg = kcfg(2.5);
        let wa = vec![0.4; a.len()];
        let wb = vec![1.9; b.len()];
        let plain = mmd2_v(&a, &b, &cfg).unwrap();
        let weighted = mmd2_weighted(&a, &wa, &b, &wb, &cfg).unwrap();
        assert!((plain - weighted).abs() < 1e-12);
    }

    #[test]
    fn weighted_is_measure_invariant_under_point_splitting() {
        let cfg = kcfg(1.0);
        let a = vec![vec![0.2], vec![1.4]];
        let wa = vec![0.6, 1.0];
        let b = vec![vec![-0.5], vec![0.9]];
        let wb = vec![1.0, 2.0];
        let base = mmd2_weighted(&a, &wa, &b, &wb, &cfg).unwrap();

        // split a[0] into two copies with half the weight each
        let a2 = vec![vec![0.2], vec![0.2], vec![1.4]];
        let wa2 = vec![0.3, 0.3, 1.0];
        let split = mmd2_weighted(&a2, &wa2, &b, &wb, &cfg).unwrap();
        assert!((base - split).abs() < 1e-12);
    }

    #[test]
    fn weighted_rejects_all_zero_group() {
        let a = vec![vec![0.0]];
        let b = vec![vec![1.0]];
        let err = mmd2_weighted(&a, &[0.0], &b, &[1.0], &kcfg(1.0)).unwrap_err();
        assert!(matches!(err, Error::AllZeroWeights));
    }

    #[test]
    fn balancing_weights_on_skewed_training_joint() {
        let w = balancing_weights(&cell_table(&JointSpec::new(0.3, 0.9).unwrap())).unwrap();
        assert!((w.get(1, 1) - 0.102 / 0.27).abs() < 1e-12);
        assert!((w.get(1, 0) - 6.6).abs() < 1e-12);
        assert!((w.get(0, 1) - 3.4).abs() < 1e-12);
        assert!((w.get(0, 0) - 0.462 / 0.63).abs() < 1e-12);
    }

    #[test]
    fn balancing_weights_vanish_under_independence() {
        for p in [0.1, 0.3, 0.5, 0.8] {
            let w = balancing_weights(&cell_table(&JointSpec::new(p, 0.5).unwrap())).unwrap();
            for (y, v) in CELLS {
                assert!((w.get(y, v) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn balancing_weights_reject_zero_cell() {
        let err = balancing_weights(&cell_table(&JointSpec::new(0.3, 1.0).unwrap())).unwrap_err();
        assert!(matches!(err, Error::ZeroCell { .. }));
    }

    #[test]
    fn reweighting_maps_source_means_to_idealized_means() {
        // E_{P_s}[u g] = E_{P_deg}[g] exactly, for random tabulated g.
        let mut rng = crate::seeding::rng_for(17, "weight-identity");
        for _ in 0..30 {
            let spec = JointSpec::new(rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)).unwrap();
            let table = cell_table(&spec);
            let w = balancing_weights(&table).unwrap();
            let g: [[f64; 2]; 2] = [
                [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)],
                [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)],
            ];
            let mut lhs = 0.0;
            let mut rhs = 0.0;
            for (y, v) in CELLS {
                lhs += table.cell(y, v) * w.get(y, v) * g[y as usize][v as usize];
                rhs += table.marginal_y[y as usize]
                    * table.marginal_v[v as usize]
                    * g[y as usize][v as usize];
            }
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn conditional_mmd_skips_degenerate_slice() {
        use crate::domain::{Dataset, Example};
        // y=1 has only v=0 examples; y=0 has both groups with identical reprs.
        let rows = vec![
            Example::new(vec![1.0], 1, 0),
            Example::new(vec![2.0], 1, 0),
            Example::new(vec![0.5], 0, 0),
            Example::new(vec![0.5], 0, 1),
        ];
        let data = Dataset::new(rows).unwrap();
        let out = mmd2_conditional(&data, |e| e.features.clone(), &kcfg(1.0));
        assert_eq!(out.skipped_slices, 1);
        assert!(out.value.abs() < 1e-12);
    }

    #[test]
    fn conditional_mmd_is_sum_of_slice_mmds() {
        use crate::domain::{Dataset, Example};
        let mut rng = crate::seeding::rng_for(23, "cond-compose");
        let mut rows = Vec::new();
        for _ in 0..40 {
            let y = rng.gen_range(0..2u8);
            let v = rng.gen_range(0..2u8);
            let x: Vec<f64> = (0..3)
                .map(|_| rng.gen_range(-1.0..1.0) + if v == 1 { 0.5 } else { 0.0 })
                .collect();
            rows.push(Example::new(x, y, v));
        }
        let data = Dataset::new(rows).unwrap();
        let cfg = kcfg(2.0);
        let out = mmd2_conditional(&data, |e| e.features.clone(), &cfg);

        let mut want = 0.0;
        for y in 0..2u8 {
            let side = |v: u8| -> Vec<Vec<f64>> {
                data.iter()
                    .filter(|e| e.label == y && e.attribute == v)
                    .map(|e| e.features.clone())
                    .collect()
            };
            want += mmd2_v(&side(0), &side(1), &cfg).unwrap();
        }
        assert!((out.value - want).abs() < 1e-12);
        assert_eq!(out.skipped_slices, 0);
    }
}
