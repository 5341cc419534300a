//! Core data types shared by all modules: examples, datasets, joint
//! distribution specifications over the binary label/attribute pair, and the
//! 2x2 cell table they expand to.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observation: features, binary label `y`, binary attribute `v`, and an
/// optional latent block kept by the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: u8,
    pub attribute: u8,
    pub latent_xstar: Option<Vec<f64>>,
}

impl Example {
    pub fn new(features: Vec<f64>, label: u8, attribute: u8) -> Self {
        Self {
            features,
            label,
            attribute,
            latent_xstar: None,
        }
    }

    fn validate(&self, feature_dim: usize) -> Result<()> {
        if self.features.len() != feature_dim {
            return Err(Error::DimensionMismatch {
                expected: feature_dim,
                got: self.features.len(),
            });
        }
        if self.label > 1 || self.attribute > 1 {
            return Err(Error::InvalidParameter {
                name: "label/attribute",
                reason: format!("must be 0 or 1, got y={} v={}", self.label, self.attribute),
            });
        }
        if self.features.iter().any(|f| !f.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "features",
                reason: "non-finite feature entry".into(),
            });
        }
        Ok(())
    }
}

/// An ordered collection of examples with a fixed feature dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    examples: Vec<Example>,
    feature_dim: usize,
}

impl Dataset {
    pub fn new(examples: Vec<Example>) -> Result<Self> {
        let feature_dim = examples
            .first()
            .map(|e| e.features.len())
            .ok_or(Error::Empty("dataset"))?;
        for e in &examples {
            e.validate(feature_dim)?;
        }
        Ok(Self {
            examples,
            feature_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Example> {
        self.examples.iter()
    }

    /// Counts per (y, v) cell, indexed `[y][v]`.
    pub fn cell_counts(&self) -> [[usize; 2]; 2] {
        let mut counts = [[0usize; 2]; 2];
        for e in &self.examples {
            counts[e.label as usize][e.attribute as usize] += 1;
        }
        counts
    }

    /// Indices of examples in the (y, v) cell, in dataset order.
    pub fn cell_indices(&self, y: u8, v: u8) -> Vec<usize> {
        self.examples
            .iter()
            .enumerate()
            .filter(|(_, e)| e.label == y && e.attribute == v)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
            feature_dim: self.feature_dim,
        }
    }
}

/// Anything that maps a feature vector to a score in (0, 1). Implemented by
/// trained predictors and by the synthetic generator's closed-form oracle.
pub trait Score {
    fn score(&self, features: &[f64]) -> f64;
}

/// A member of the shift family: the joint law of (Y, V) parameterized by
/// `P(Y=1)` and the symmetric conditional `mu = P(V=1|Y=1) = P(V=0|Y=0)`.
/// `mu = 0.5` is the idealized distribution where Y and V are independent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub p_y1: f64,
    pub mu: f64,
}

impl JointSpec {
    pub fn new(p_y1: f64, mu: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_y1) || !p_y1.is_finite() {
            return Err(Error::InvalidParameter {
                name: "p_y1",
                reason: format!("must lie in [0,1], got {p_y1}"),
            });
        }
        if !(0.0..=1.0).contains(&mu) || !mu.is_finite() {
            return Err(Error::InvalidParameter {
                name: "mu",
                reason: format!("must lie in [0,1], got {mu}"),
            });
        }
        Ok(Self { p_y1, mu })
    }

    /// The idealized member of the family with the same label marginal.
    pub fn idealized(&self) -> JointSpec {
        JointSpec {
            p_y1: self.p_y1,
            mu: 0.5,
        }
    }
}

/// Materialized 2x2 joint over (y, v) with its marginals. `joint[y][v]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellTable {
    pub joint: [[f64; 2]; 2],
    pub marginal_y: [f64; 2],
    pub marginal_v: [f64; 2],
}

impl CellTable {
    pub fn from_joint(joint: [[f64; 2]; 2]) -> Self {
        let marginal_y = [joint[0][0] + joint[0][1], joint[1][0] + joint[1][1]];
        let marginal_v = [joint[0][0] + joint[1][0], joint[0][1] + joint[1][1]];
        Self {
            joint,
            marginal_y,
            marginal_v,
        }
    }

    /// Plug-in table from empirical cell counts.
    pub fn from_counts(counts: [[usize; 2]; 2]) -> Result<Self> {
        let n: usize = counts.iter().flatten().sum();
        if n == 0 {
            return Err(Error::Empty("cell counts"));
        }
        let mut joint = [[0.0; 2]; 2];
        for y in 0..2 {
            for v in 0..2 {
                joint[y][v] = counts[y][v] as f64 / n as f64;
            }
        }
        Ok(Self::from_joint(joint))
    }

    pub fn cell(&self, y: u8, v: u8) -> f64 {
        self.joint[y as usize][v as usize]
    }
}

/// Expand a `JointSpec` into its cell table:
/// `P(1,1) = p*mu`, `P(1,0) = p*(1-mu)`, `P(0,0) = (1-p)*mu`,
/// `P(0,1) = (1-p)*(1-mu)`.
pub fn cell_table(spec: &JointSpec) -> CellTable {
    let p = spec.p_y1;
    let mu = spec.mu;
    let joint = [
        [(1.0 - p) * mu, (1.0 - p) * (1.0 - mu)],
        [p * (1.0 - mu), p * mu],
    ];
    CellTable::from_joint(joint)
}

/// Fixed iteration order over the four (y, v) cells.
pub const CELLS: [(u8, u8); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];

// --- Dataset CSV format ---------------------------------------------------
//
// Header: x0,...,x{d-1},y,v[,xs0,...,xs{k-1}]
// y and v are 0/1 integers; latent columns are optional.

pub fn write_csv<W: Write>(data: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let latent_dim = data
        .examples
        .first()
        .and_then(|e| e.latent_xstar.as_ref())
        .map(|x| x.len())
        .unwrap_or(0);
    let mut header: Vec<String> = (0..data.feature_dim).map(|i| format!("x{i}")).collect();
    header.push("y".into());
    header.push("v".into());
    header.extend((0..latent_dim).map(|i| format!("xs{i}")));
    w.write_record(&header)?;

    let mut record: Vec<String> = Vec::with_capacity(header.len());
    for e in &data.examples {
        record.clear();
        record.extend(e.features.iter().map(|f| f.to_string()));
        record.push(e.label.to_string());
        record.push(e.attribute.to_string());
        if let Some(latent) = &e.latent_xstar {
            if latent.len() != latent_dim {
                return Err(Error::MalformedData(
                    "inconsistent latent dimension across examples".into(),
                ));
            }
            record.extend(latent.iter().map(|f| f.to_string()));
        } else if latent_dim > 0 {
            return Err(Error::MalformedData(
                "latent block present on some examples but not all".into(),
            ));
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_path(data: &Dataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(data, std::io::BufWriter::new(file))
}

pub fn read_csv<R: Read>(input: R) -> Result<Dataset> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let cols: Vec<&str> = header.iter().collect();

    let feature_dim = cols.iter().take_while(|c| c.starts_with('x') && !c.starts_with("xs")).count();
    let latent_dim = cols.iter().filter(|c| c.starts_with("xs")).count();
    let expected: Vec<String> = {
        let mut h: Vec<String> = (0..feature_dim).map(|i| format!("x{i}")).collect();
        h.push("y".into());
        h.push("v".into());
        h.extend((0..latent_dim).map(|i| format!("xs{i}")));
        h
    };
    if cols != expected.iter().map(|s| s.as_str()).collect::<Vec<_>>() {
        return Err(Error::MalformedData(format!(
            "unexpected header {cols:?}; want x0..x{{d-1}},y,v[,xs0..]"
        )));
    }

    let mut examples = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = line + 2; // header is line 1
        if rec.len() != expected.len() {
            return Err(Error::MalformedData(format!(
                "line {row}: {} fields, expected {}",
                rec.len(),
                expected.len()
            )));
        }
        let parse_f64 = |idx: usize, name: &str| -> Result<f64> {
            rec[idx].parse::<f64>().map_err(|_| {
                Error::MalformedData(format!("line {row}, column {name}: bad float {:?}", &rec[idx]))
            })
        };
        let parse_bit = |idx: usize, name: &str| -> Result<u8> {
            match &rec[idx] {
                "0" => Ok(0),
                "1" => Ok(1),
                other => Err(Error::MalformedData(format!(
                    "line {row}, column {name}: expected 0 or 1, got {other:?}"
                ))),
            }
        };
        let mut features = Vec::with_capacity(feature_dim);
        for i in 0..feature_dim {
            features.push(parse_f64(i, &format!("x{i}"))?);
        }
        let label = parse_bit(feature_dim, "y")?;
        let attribute = parse_bit(feature_dim + 1, "v")?;
        let latent_xstar = if latent_dim > 0 {
            let mut latent = Vec::with_capacity(latent_dim);
            for i in 0..latent_dim {
                latent.push(parse_f64(feature_dim + 2 + i, &format!("xs{i}"))?);
            }
            Some(latent)
        } else {
            None
        };
        examples.push(Example {
            features,
            label,
            attribute,
            latent_xstar,
        });
    }
    Dataset::new(examples)
}

pub fn read_csv_path(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(file))
}
