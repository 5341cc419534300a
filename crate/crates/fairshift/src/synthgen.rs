//! Synthetic anti-causal generator. The label `y` and attribute `v` are drawn
//! jointly from a `JointSpec`; the label shifts a signal block `x*`, the
//! attribute shifts a shortcut block `w`, a third block is pure noise, and an
//! orthogonal matrix mixes the three blocks into the observed features. The
//! Bayes-optimal score `P(Y=1 | x)` depends on `x*` alone and has a simple
//! closed form, exposed here as an oracle scorer.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{cell_table, Dataset, Example, JointSpec, Score, CELLS};
use crate::error::{Error, Result};
use crate::numeric::{dot, sigmoid};
use crate::seeding::{derive_seed, rng_for};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Dimension of the label-driven signal block.
    pub d_star: usize,
    /// Dimension of the attribute-driven shortcut block.
    pub d_short: usize,
    /// Dimension of the pure-noise block.
    pub d_noise: usize,
    /// Mean shift applied to the signal block when y = 1.
    pub delta_star: Vec<f64>,
    /// Mean shift applied to the shortcut block when v = 1.
    pub delta_short: Vec<f64>,
    /// Isotropic noise scale shared by all blocks.
    pub sigma: f64,
    /// Optional orthogonal mixing matrix (rows), `total_dim` square.
    /// `None` leaves the blocks unmixed.
    pub mix: Option<Vec<Vec<f64>>>,
    pub seed: u64,
}

impl SynthConfig {
    /// Default geometry: 4 signal + 4 shortcut + 8 noise dimensions, both
    /// shift vectors of norm 2, unit noise, and a random orthogonal mix.
    pub fn default_with_seed(seed: u64) -> Self {
        let cfg = Self {
            d_star: 4,
            d_short: 4,
            d_noise: 8,
            delta_star: vec![1.0; 4],
            delta_short: vec![1.0; 4],
            sigma: 1.0,
            mix: None,
            seed,
        };
        Self {
            mix: Some(random_orthogonal(cfg.total_dim(), derive_seed(seed, "mix"))),
            ..cfg
        }
    }

    pub fn total_dim(&self) -> usize {
        self.d_star + self.d_short + self.d_noise
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_star == 0 {
            return Err(Error::InvalidParameter {
                name: "d_star",
                reason: "signal block must be nonempty".into(),
            });
        }
        if self.delta_star.len() != self.d_star {
            return Err(Error::DimensionMismatch {
                expected: self.d_star,
                got: self.delta_star.len(),
            });
        }
        if self.delta_short.len() != self.d_short {
            return Err(Error::DimensionMismatch {
                expected: self.d_short,
                got: self.delta_short.len(),
            });
        }
        if !self.sigma.is_finite() || self.sigma <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "sigma",
                reason: format!("must be positive, got {}", self.sigma),
            });
        }
        if self
            .delta_star
            .iter()
            .chain(&self.delta_short)
            .any(|d| !d.is_finite())
        {
            return Err(Error::InvalidParameter {
                name: "delta",
                reason: "shift vectors must be finite".into(),
            });
        }
        if let Some(m) = &self.mix {
            let dim = self.total_dim();
            if m.len() != dim || m.iter().any(|row| row.len() != dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: m.len(),
                });
            }
            if m.iter().flatten().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "mix",
                    reason: "non-finite entry".into(),
                });
            }
            // Columns must be orthonormal: max |M^T M - I| <= 1e-10.
            for k in 0..dim {
                for l in k..dim {
                    let mut s = 0.0;
                    for row in m {
                        s += row[k] * row[l];
                    }
                    let target = if k == l { 1.0 } else { 0.0 };
                    if (s - target).abs() > 1e-10 {
                        return Err(Error::InvalidParameter {
                            name: "mix",
                            reason: format!(
                                "not orthogonal: |(M'M)[{k}][{l}] - {target}| = {:e}",
                                (s - target).abs()
                            ),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// A uniformly-seeded random orthogonal matrix: a Gaussian matrix with its
/// rows orthonormalized by two passes of modified Gram-Schmidt.
pub fn random_orthogonal(dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_for(seed, "orthogonal");
    let mut rows: Vec<Vec<f64>> = (0..dim)
        .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    for _pass in 0..2 {
        for i in 0..dim {
            loop {
                for j in 0..i {
                    let (head, tail) = rows.split_at_mut(i);
                    let rj = &head[j];
                    let ri = &mut tail[0];
                    let proj = dot(ri, rj);
                    for (a, b) in ri.iter_mut().zip(rj) {
                        *a -= proj * b;
                    }
                }
                let norm = dot(&rows[i], &rows[i]).sqrt();
                if norm > 1e-8 {
                    for a in rows[i].iter_mut() {
                        *a /= norm;
                    }
                    break;
                }
                // Numerically degenerate draw (vanishing probability): retry.
                rows[i] = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            }
        }
    }
    rows
}

pub(crate) fn matvec(rows: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    rows.iter().map(|r| dot(r, x)).collect()
}

/// Draw `n` examples i.i.d. from the generator under the (y, v) joint given
/// by `spec`. Requires strict overlap (every cell probability positive).
/// Each example uses an RNG derived from `cfg.seed` and its index, so output
/// is bit-reproducible and independent of batching.
pub fn generate(cfg: &SynthConfig, spec: &JointSpec, n: usize) -> Result<Dataset> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::Empty("generate(n = 0)"));
    }
    let table = cell_table(spec);
    for (y, v) in CELLS {
        if table.cell(y, v) <= 0.0 {
            return Err(Error::ZeroCell { y, v });
        }
    }

    let mut examples = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = rng_for(cfg.seed, &format!("example/{i}"));
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let (mut y, mut v) = (1u8, 1u8);
        for (cy, cv) in CELLS {
            acc += table.cell(cy, cv);
            if u < acc {
                y = cy;
                v = cv;
                break;
            }
        }
        let xstar: Vec<f64> = (0..cfg.d_star)
            .map(|k| {
                y as f64 * cfg.delta_star[k] + cfg.sigma * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        let shortcut: Vec<f64> = (0..cfg.d_short)
            .map(|k| {
                v as f64 * cfg.delta_short[k] + cfg.sigma * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        let noise: Vec<f64> = (0..cfg.d_noise)
            .map(|_| cfg.sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();

        let mut pre = Vec::with_capacity(cfg.total_dim());
        pre.extend_from_slice(&xstar);
        pre.extend(shortcut);
        pre.extend(noise);
        let features = match &cfg.mix {
            Some(m) => matvec(m, &pre),
            None => pre,
        };
        examples.push(Example {
            features,
            label: y,
            attribute: v,
            latent_xstar: Some(xstar),
        });
    }
    Dataset::new(examples)
}

/// The Bayes-optimal score for the generator:
/// `P(Y=1 | x) = sigmoid(a . x* + b)` with `a = delta*/sigma^2` and
/// `b = -||delta*||^2 / (2 sigma^2) + logit(P(Y=1))`, where `x*` is read off
/// the observed features by inverting the orthogonal mix. It depends on the
/// label marginal only, so it is the optimal scorer for every member of a
/// shift family that holds `p_y1` fixed.
#[derive(Debug, Clone)]
pub struct OracleScorer {
    coef: Vec<f64>,
    intercept: f64,
    /// Column k of the mixing matrix, for k < d_star; `None` when unmixed.
    unmix: Option<Vec<Vec<f64>>>,
    input_dim: usize,
}

impl OracleScorer {
    pub fn new(cfg: &SynthConfig, spec: &JointSpec) -> Result<Self> {
        cfg.validate()?;
        let p = spec.p_y1;
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParameter {
                name: "p_y1",
                reason: format!("oracle needs 0 < P(Y=1) < 1, got {p}"),
            });
        }
        let s2 = cfg.sigma * cfg.sigma;
        let coef: Vec<f64> = cfg.delta_star.iter().map(|d| d / s2).collect();
        let norm2 = dot(&cfg.delta_star, &cfg.delta_star);
        let intercept = -norm2 / (2.0 * s2) + (p / (1.0 - p)).ln();
        let unmix = cfg.mix.as_ref().map(|m| {
            (0..cfg.d_star)
                .map(|k| m.iter().map(|row| row[k]).collect())
                .collect()
        });
        Ok(Self {
            coef,
            intercept,
            unmix,
            input_dim: cfg.total_dim(),
        })
    }

    pub fn score_checked(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: features.len(),
            });
        }
        Ok(self.score_unchecked(features))
    }

    fn score_unchecked(&self, features: &[f64]) -> f64 {
        let mut logit = self.intercept;
        match &self.unmix {
            Some(cols) => {
                for (a, col) in self.coef.iter().zip(cols) {
                    logit += a * dot(col, features);
                }
            }
            None => {
                for (a, x) in self.coef.iter().zip(features) {
                    logit += a * x;
                }
            }
        }
        sigmoid(logit)
    }
}

impl Score for OracleScorer {
    fn score(&self, features: &[f64]) -> f64 {
        assert_eq!(
            features.len(),
            self.input_dim,
            "oracle applied to wrong feature dimension"
        );
        self.score_unchecked(features)
    }
}

/// Convenience single-point form of the oracle.
pub fn oracle_fstar(cfg: &SynthConfig, spec: &JointSpec, features: &[f64]) -> Result<f64> {
    OracleScorer::new(cfg, spec)?.score_checked(features)
}

/// The shift family used throughout evaluation: `p_y1` held fixed while the
/// label-attribute association sweeps from strongly negative to strongly
/// positive, with the independent case in the middle.
pub fn shift_family(p_y1: f64) -> Vec<JointSpec> {
    [0.1, 0.3, 0.5, 0.7, 0.9, 0.95]
        .iter()
        .map(|&mu| JointSpec { p_y1, mu })
        .collect()
}

/// Largest-remainder apportionment of `total` into the four (y, v) cells,
/// proportional to `shares` (CELLS order). Fractional remainders break ties
/// by cell order; `caps` bounds each count when supplied.
fn apportion(total: usize, shares: [f64; 4], caps: Option<[usize; 4]>) -> Result<[usize; 4]> {
    let sum: f64 = shares.iter().sum();
    // NaN sums only arise from non-finite shares, which the second test
    // rejects, so `<=` is NaN-safe here.
    if sum <= 0.0 || shares.iter().any(|s| *s < 0.0 || !s.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "shares",
            reason: "cell shares must be nonnegative with a positive sum".into(),
        });
    }
    let quota: Vec<f64> = shares.iter().map(|s| total as f64 * s / sum).collect();
    let mut counts = [0usize; 4];
    for i in 0..4 {
        counts[i] = quota[i].floor() as usize;
        if let Some(caps) = caps {
            counts[i] = counts[i].min(caps[i]);
        }
    }
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&i, &j| {
        let fi = quota[i] - quota[i].floor();
        let fj = quota[j] - quota[j].floor();
        fj.partial_cmp(&fi).unwrap().then(i.cmp(&j))
    });
    let assigned: usize = counts.iter().sum();
    let mut remaining = total.saturating_sub(assigned);
    let mut k = 0usize;
    let mut stalled = 0usize;
    while remaining > 0 {
        let c = order[k % 4];
        let at_cap = caps.map(|caps| counts[c] >= caps[c]).unwrap_or(false);
        if at_cap {
            stalled += 1;
            if stalled > 4 {
                return Err(Error::InvalidParameter {
                    name: "shares",
                    reason: "cell capacities cannot absorb the requested total".into(),
                });
            }
        } else {
            counts[c] += 1;
            remaining -= 1;
            stalled = 0;
        }
        k += 1;
    }
    Ok(counts)
}

/// Draw, without replacement, a subset of `pool` whose cell counts are the
/// largest-remainder apportionment of `n` under `spec`. Selection within a
/// cell and the final row order are shuffled deterministically from `seed`.
pub fn subsample_to_spec(pool: &Dataset, spec: &JointSpec, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Empty("subsample(n = 0)"));
    }
    let table = cell_table(spec);
    let shares = [
        table.cell(CELLS[0].0, CELLS[0].1),
        table.cell(CELLS[1].0, CELLS[1].1),
        table.cell(CELLS[2].0, CELLS[2].1),
        table.cell(CELLS[3].0, CELLS[3].1),
    ];
    let counts = apportion(n, shares, None)?;

    let mut chosen = Vec::with_capacity(n);
    for (i, (y, v)) in CELLS.iter().copied().enumerate() {
        let need = counts[i];
        if need == 0 {
            continue;
        }
        let mut candidates = pool.cell_indices(y, v);
        if candidates.len() < need {
            return Err(Error::InsufficientCell {
                y,
                v,
                needed: need,
                have: candidates.len(),
            });
        }
        let mut rng = rng_for(seed, &format!("cell/{y}{v}"));
        candidates.shuffle(&mut rng);
        chosen.extend_from_slice(&candidates[..need]);
    }
    let mut rng = rng_for(seed, "order");
    chosen.shuffle(&mut rng);
    Ok(pool.select(&chosen))
}

/// Stratified two-way split preserving (y, v) proportions: the first dataset
/// receives `floor(fraction * n)` examples, apportioned across cells by
/// largest remainder. Deterministic in `seed`.
pub fn split(data: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter {
            name: "fraction",
            reason: format!("must lie strictly between 0 and 1, got {fraction}"),
        });
    }
    let n = data.len();
    let take = (fraction * n as f64).floor() as usize;
    if take == 0 || take == n {
        return Err(Error::DegenerateSplit { fraction, n });
    }
    let cell_counts = data.cell_counts();
    let mut shares = [0.0f64; 4];
    let mut caps = [0usize; 4];
    for (i, (y, v)) in CELLS.iter().copied().enumerate() {
        caps[i] = cell_counts[y as usize][v as usize];
        shares[i] = caps[i] as f64;
    }
    let counts = apportion(take, shares, Some(caps))?;

    let mut left = Vec::with_capacity(take);
    let mut right = Vec::with_capacity(n - take);
    for (i, (y, v)) in CELLS.iter().copied().enumerate() {
        let mut idx = data.cell_indices(y, v);
        if idx.is_empty() {
            continue;
        }
        let mut rng = rng_for(seed, &format!("cell/{y}{v}"));
        idx.shuffle(&mut rng);
        left.extend_from_slice(&idx[..counts[i]]);
        right.extend_from_slice(&idx[counts[i]..]);
    }
    left.shuffle(&mut rng_for(seed, "left-order"));
    right.shuffle(&mut rng_for(seed, "right-order"));
    if left.is_empty() || right.is_empty() {
        return Err(Error::DegenerateSplit { fraction, n });
    }
    Ok((data.select(&left), data.select(&right)))
}
