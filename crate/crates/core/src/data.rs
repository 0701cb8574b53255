//! Data ingestion: the LIBSVM text format and a seeded sparse synthetic
//! generator with a planted separating hyperplane.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::problem::DesignMatrix;

/// Parses `label idx:val idx:val ...` lines with 1-based strictly
/// increasing indices. Blank lines are skipped; `d` is the largest index
/// seen. Errors carry the offending 1-based line number.
pub fn parse_libsvm_reader<R: BufRead>(input: R) -> Result<(DesignMatrix, Vec<f64>)> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut d = 0usize;
    for (idx, line) in input.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let mut tokens = line.split_whitespace();
        let Some(first) = tokens.next() else {
            continue;
        };
        let label: f64 = first.parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("invalid label '{first}'"),
        })?;
        let mut row: Vec<(usize, f64)> = Vec::new();
        let mut prev = 0usize;
        for token in tokens {
            let (idx_str, val_str) = token.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("expected index:value, found '{token}'"),
            })?;
            let index: usize = idx_str.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("invalid feature index '{idx_str}'"),
            })?;
            if index < 1 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "feature indices must be >= 1".into(),
                });
            }
            if index <= prev {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("feature indices must be strictly increasing (saw {index} after {prev})"),
                });
            }
            let value: f64 = val_str.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("invalid feature value '{val_str}'"),
            })?;
            prev = index;
            d = d.max(index);
            row.push((index - 1, value));
        }
        rows.push(row);
        labels.push(label);
    }
    let matrix = DesignMatrix::from_rows(d, rows)?;
    Ok((matrix, labels))
}

pub fn parse_libsvm(path: impl AsRef<Path>) -> Result<(DesignMatrix, Vec<f64>)> {
    let file = File::open(path)?;
    parse_libsvm_reader(BufReader::new(file))
}

/// Seeded sparse Gaussian features with labels from a planted hyperplane
/// (10% flipped). Optional per-row rescaling creates heterogeneous
/// smoothness constants for importance-sampling experiments.
#[derive(Clone, Debug)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub density: f64,
    pub seed: u64,
    pub row_scales: Option<Vec<f64>>,
}

impl SyntheticSpec {
    pub fn new(n: usize, d: usize, density: f64, seed: u64) -> Self {
        Self {
            n,
            d,
            density,
            seed,
            row_scales: None,
        }
    }
}

const LABEL_FLIP_RATE: f64 = 0.1;

/// Labels are in {−1, +1}.
pub fn synthetic_problem_data(spec: &SyntheticSpec) -> Result<(DesignMatrix, Vec<f64>)> {
    if spec.n == 0 || spec.d == 0 {
        return Err(Error::InvalidData("need n >= 1 and d >= 1".into()));
    }
    if !(spec.density > 0.0 && spec.density <= 1.0) {
        return Err(Error::InvalidData(format!(
            "density {} outside (0, 1]",
            spec.density
        )));
    }
    if let Some(scales) = &spec.row_scales {
        if scales.len() != spec.n {
            return Err(Error::DimensionMismatch {
                expected: spec.n,
                got: scales.len(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let hyperplane: Vec<f64> = (0..spec.d).map(|_| gaussian(&mut rng)).collect();
    let mut rows = Vec::with_capacity(spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let mut row: Vec<(usize, f64)> = Vec::new();
        for j in 0..spec.d {
            if rng.gen::<f64>() < spec.density {
                row.push((j, gaussian(&mut rng)));
            }
        }
        if row.is_empty() {
            let j = rng.gen_range(0..spec.d);
            row.push((j, gaussian(&mut rng)));
        }
        if let Some(scales) = &spec.row_scales {
            for entry in &mut row {
                entry.1 *= scales[i];
            }
        }
        let margin: f64 = row.iter().map(|&(j, v)| v * hyperplane[j]).sum();
        let mut label = if margin >= 0.0 { 1.0 } else { -1.0 };
        if rng.gen::<f64>() < LABEL_FLIP_RATE {
            label = -label;
        }
        rows.push(row);
        labels.push(label);
    }
    Ok((DesignMatrix::from_rows(spec.d, rows)?, labels))
}

/// Standard normal via Box-Muller; two uniform draws per sample keeps the
/// stream layout simple and reproducible.
fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
