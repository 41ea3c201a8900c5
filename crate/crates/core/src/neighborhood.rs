//! Balanced similar/dissimilar neighborhoods and the regression targets built
//! from them.
//!
//! For sample `i`, `D_i` holds its nearest differently-labelled samples and
//! `S_i` an equal number of same-label samples (by default the farthest
//! ones). Everything else is unrelated. `Y` marks `S_i` with ones and `B`
//! encodes the dragging direction: `+1` on `S_i`, `-1` on `D_i`, `0` elsewhere.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarMode {
    #[default]
    Farthest,
    Nearest,
}

impl fmt::Display for SimilarMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimilarMode::Farthest => "farthest",
            SimilarMode::Nearest => "nearest",
        })
    }
}

impl FromStr for SimilarMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "farthest" => Ok(SimilarMode::Farthest),
            "nearest" => Ok(SimilarMode::Nearest),
            _ => Err(Error::Config(format!("unknown similar mode '{s}' (farthest|nearest)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodSets {
    pub similar: Vec<Vec<usize>>,
    pub dissimilar: Vec<Vec<usize>>,
    pub unrelated: Vec<Vec<usize>>,
    pub k_effective: Vec<usize>,
}

impl NeighborhoodSets {
    pub fn n_samples(&self) -> usize {
        self.similar.len()
    }

    /// One line per sample: `i: S=[..] D=[..]`.
    pub fn debug_dump(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n_samples() {
            let _ = writeln!(out, "{i}: S={:?} D={:?}", self.similar[i], self.dissimilar[i]);
        }
        out
    }
}

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(p, q)| (p - q) * (p - q)).sum()
}

pub fn build_sets(coords: ArrayView2<f64>, labels: &[usize], k: usize, mode: SimilarMode) -> Result<NeighborhoodSets> {
    let n = coords.nrows();
    if labels.len() != n {
        return Err(Error::Dimension(format!("{} labels for {n} embedded rows", labels.len())));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("neighborhood size k must be at least 1".into()));
    }
    let mut sets = NeighborhoodSets {
        similar: Vec::with_capacity(n),
        dissimilar: Vec::with_capacity(n),
        unrelated: Vec::with_capacity(n),
        k_effective: Vec::with_capacity(n),
    };
    let mut starved = 0usize;
    for i in 0..n {
        let dist: Vec<f64> = (0..n).map(|j| sq_dist(coords.row(i), coords.row(j))).collect();
        let mut same: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
        let mut diff: Vec<usize> = (0..n).filter(|&j| labels[j] != labels[i]).collect();
        diff.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
        match mode {
            SimilarMode::Farthest => same.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b))),
            SimilarMode::Nearest => same.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b))),
        }
        let k_eff = k.min(same.len()).min(diff.len());
        if k_eff == 0 {
            starved += 1;
        }
        same.truncate(k_eff);
        diff.truncate(k_eff);
        same.sort_unstable();
        diff.sort_unstable();
        let unrelated = (0..n)
            .filter(|&j| j != i && same.binary_search(&j).is_err() && diff.binary_search(&j).is_err())
            .collect();
        sets.similar.push(same);
        sets.dissimilar.push(diff);
        sets.unrelated.push(unrelated);
        sets.k_effective.push(k_eff);
    }
    if starved > 0 {
        log::warn!("{starved} samples have empty neighborhoods (no same-label or no other-label partner)");
    }
    Ok(sets)
}

/// Sparse `Y` and `B` as `(row, col, value)` triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMatrices {
    pub n: usize,
    pub y: Vec<(usize, usize, f64)>,
    pub b: Vec<(usize, usize, f64)>,
}

impl TargetMatrices {
    pub fn dense_y(&self) -> Array2<f64> {
        self.densify(&self.y)
    }

    pub fn dense_b(&self) -> Array2<f64> {
        self.densify(&self.b)
    }

    fn densify(&self, entries: &[(usize, usize, f64)]) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        for &(i, j, v) in entries {
            out[[i, j]] = v;
        }
        out
    }
}

pub fn build_targets(sets: &NeighborhoodSets, n: usize) -> Result<TargetMatrices> {
    if sets.n_samples() != n {
        return Err(Error::Dimension(format!("sets cover {} samples, expected {n}", sets.n_samples())));
    }
    let mut y = Vec::new();
    let mut b = Vec::new();
    for i in 0..n {
        for &j in &sets.similar[i] {
            y.push((i, j, 1.0));
            b.push((i, j, 1.0));
        }
        for &j in &sets.dissimilar[i] {
            b.push((i, j, -1.0));
        }
    }
    b.sort_by_key(|&(i, j, _)| (i, j));
    Ok(TargetMatrices { n, y, b })
}
