//! Design matrices over the unit cube and the eligible split thresholds they induce.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

/// An `n x p` design with coordinates in `[0,1]`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    n: usize,
    p: usize,
    values: Vec<f64>,
}

impl Design {
    pub fn new(n: usize, p: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(param(format!("design must be non-empty, got {n}x{p}")));
        }
        if values.len() != n * p {
            return Err(param(format!("expected {} values for a {n}x{p} design, got {}", n * p, values.len())));
        }
        if let Some(pos) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(param(format!(
                "coordinate x{} of row {} is {} (outside [0,1])",
                pos % p + 1,
                pos / p + 1,
                values[pos]
            )));
        }
        Ok(Self { n, p, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(param("design rows have different lengths"));
        }
        Self::new(rows.len(), p, rows.concat())
    }

    /// One-dimensional design from a list of points.
    pub fn from_column(xs: &[f64]) -> Result<Self> {
        Self::new(xs.len(), 1, xs.to_vec())
    }

    /// Regular 1-D grid `(i + 1/2) / n`.
    pub fn regular_grid_1d(n: usize) -> Result<Self> {
        Self::from_column(&(0..n).map(|i| (i as f64 + 0.5) / n as f64).collect::<Vec<_>>())
    }

    /// `n` points in `[0,1]^p` with pairwise distinct values in every coordinate:
    /// coordinate `j` of point `i` is the centred rank of `i * m_j mod n`, with
    /// multipliers `m_j` coprime to `n`.
    pub fn scrambled_grid(n: usize, p: usize) -> Result<Self> {
        let mut multipliers = Vec::with_capacity(p);
        let mut m = 1usize;
        while multipliers.len() < p {
            if gcd(m, n) == 1 && !multipliers.contains(&(m % n.max(1))) {
                multipliers.push(m % n.max(1));
            }
            m += if multipliers.is_empty() { 1 } else { 2 };
            if m > 4 * n + 8 {
                return Err(param(format!("cannot build {p} distinct coordinate orders for n={n}")));
            }
        }
        let mut values = Vec::with_capacity(n * p);
        for i in 0..n {
            for mult in &multipliers {
                values.push(((i * mult) % n) as f64 / n as f64 + 0.5 / n as f64);
            }
        }
        Self::new(n, p, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.p + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Distinct observed values of coordinate `var` among `points`, ascending,
    /// with the maximum dropped so both children of a split are nonempty.
    pub fn eligible_thresholds(&self, points: &[usize], var: usize) -> Vec<f64> {
        let mut vals: Vec<f64> = points.iter().map(|&i| self.get(i, var)).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        vals.pop();
        vals
    }

    /// Whether some coordinate takes at least two distinct values on `points`.
    pub fn can_split(&self, points: &[usize]) -> bool {
        let Some(&first) = points.first() else { return false };
        (0..self.p).any(|j| {
            let v = self.get(first, j);
            points.iter().any(|&i| self.get(i, j) != v)
        })
    }

    /// Number of eligible thresholds per coordinate for the cell holding `points`.
    pub fn eligible_counts(&self, points: &[usize]) -> Vec<usize> {
        (0..self.p).map(|j| self.eligible_thresholds(points, j).len()).collect()
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Split-rule options at one cell: coordinates with at least one eligible
/// threshold, and the threshold count for each coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct CellOptions {
    pub counts: Vec<usize>,
}

impl CellOptions {
    pub fn of(design: &Design, points: &[usize]) -> Self {
        Self { counts: design.eligible_counts(points) }
    }

    /// Coordinates that admit a split.
    pub fn usable_vars(&self) -> usize {
        self.counts.iter().filter(|c| **c > 0).count()
    }

    pub fn can_split(&self) -> bool {
        self.usable_vars() > 0
    }

    /// Log probability of choosing a given rule on coordinate `var`: a uniform
    /// coordinate among the usable ones, then a uniform threshold.
    pub fn log_rule_probability(&self, var: usize) -> f64 {
        -(self.usable_vars() as f64).ln() - (self.counts[var] as f64).ln()
    }
}
