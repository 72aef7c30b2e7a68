//! Pruning masks, saliency scores, unstructured and N:M mask selection,
//! and the cubic sparsity schedule used for gradual pruning.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Binary keep/prune matrix; `true` keeps the weight.
#[derive(Clone, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl fmt::Debug for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mask({}x{}, density {})", self.rows, self.cols, self.density())
    }
}

impl Mask {
    pub fn new(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyMatrix { rows, cols });
        }
        if rows.checked_mul(cols) != Some(bits.len()) {
            return Err(Error::DataLength {
                len: bits.len(),
                rows,
                cols,
            });
        }
        Ok(Self { rows, cols, bits })
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, true)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, false)
    }

    fn filled(rows: usize, cols: usize, keep: bool) -> Self {
        assert!(rows > 0 && cols > 0, "mask dimensions must be positive");
        Self {
            rows,
            cols,
            bits: vec![keep; rows * cols],
        }
    }

    /// Builds a mask from a matrix of exact 0/1 values.
    pub fn from_matrix(m: &Matrix) -> Result<Self, (usize, f64)> {
        let bits = m
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if v == 1.0 {
                    Ok(true)
                } else if v == 0.0 {
                    Ok(false)
                } else {
                    Err((i, v))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            rows: m.rows(),
            cols: m.cols(),
            bits,
        })
    }

    /// 0/1 matrix with the mask's shape.
    pub fn to_matrix(&self) -> Matrix {
        let data = self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Matrix::new(self.rows, self.cols, data).expect("mask shape is valid")
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn is_kept(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.cols + col]
    }

    pub fn kept(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Fraction of kept entries.
    pub fn density(&self) -> f64 {
        self.kept() as f64 / self.bits.len() as f64
    }

    pub fn sparsity(&self) -> f64 {
        1.0 - self.density()
    }

    /// Zeroes every pruned entry of `w`.
    pub fn apply(&self, w: &Matrix) -> Result<Matrix> {
        if w.shape() != self.shape() {
            return Err(Error::shape(
                "mask apply",
                format!("mask {:?} vs matrix {:?}", self.shape(), w.shape()),
            ));
        }
        let mut out = w.clone();
        for (v, &keep) in out.data_mut().iter_mut().zip(&self.bits) {
            if !keep {
                *v = 0.0;
            }
        }
        Ok(out)
    }
}

/// Cubic schedule `s_t = s_f (t / k_s)^3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsitySchedule {
    pub final_sparsity: f64,
    pub steps: usize,
}

impl SparsitySchedule {
    pub fn new(final_sparsity: f64, steps: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&final_sparsity) {
            return Err(Error::config("sparsity", format!("{final_sparsity} is outside [0, 1]")));
        }
        if steps == 0 {
            return Err(Error::config("sparsify_steps", "must be at least 1"));
        }
        Ok(Self {
            final_sparsity,
            steps,
        })
    }

    pub fn at(&self, t: usize) -> f64 {
        cubic_sparsity(t, self)
    }
}

/// Target sparsity at step `t`. Steps past the end of the schedule stay at
/// the final sparsity.
pub fn cubic_sparsity(t: usize, schedule: &SparsitySchedule) -> f64 {
    if t >= schedule.steps {
        return schedule.final_sparsity;
    }
    let ratio = t as f64 / schedule.steps as f64;
    schedule.final_sparsity * (ratio * ratio * ratio)
}

/// N:M structure: keep `n_keep` of every `m_group` consecutive weights along
/// the input dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructurePattern {
    pub n_keep: usize,
    pub m_group: usize,
}

impl StructurePattern {
    pub const TWO_FOUR: StructurePattern = StructurePattern {
        n_keep: 2,
        m_group: 4,
    };

    pub fn new(n_keep: usize, m_group: usize) -> Result<Self> {
        if n_keep == 0 || n_keep >= m_group {
            return Err(Error::InvalidPattern(format!(
                "need 0 < n < m, got {n_keep}:{m_group}"
            )));
        }
        Ok(Self { n_keep, m_group })
    }

    /// Sparsity of a fully structured mask, `1 - n/m`.
    pub fn final_sparsity(&self) -> f64 {
        (self.m_group - self.n_keep) as f64 / self.m_group as f64
    }
}

impl fmt::Display for StructurePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.n_keep, self.m_group)
    }
}

impl FromStr for StructurePattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (n, m) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidPattern(format!("expected N:M, got {s:?}")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidPattern(format!("expected N:M, got {s:?}")))
        };
        Self::new(parse(n)?, parse(m)?)
    }
}

/// Wanda saliency `|w[i,j]| * input_norms[i]`.
pub fn wanda_scores(w: &Matrix, input_norms: &[f64]) -> Result<Matrix> {
    if input_norms.len() != w.rows() {
        return Err(Error::shape(
            "wanda_scores",
            format!("{} norms for {} input features", input_norms.len(), w.rows()),
        ));
    }
    if let Some((feature, &value)) = input_norms
        .iter()
        .enumerate()
        .find(|(_, v)| **v <= 0.0 || !v.is_finite())
    {
        return Err(Error::NonPositiveNorm { feature, value });
    }
    w.map(f64::abs).scale_rows(input_norms)
}

/// Number of entries to prune for a sparsity fraction: `fraction * total`
/// rounded half away from zero.
pub fn prune_count(fraction: f64, total: usize) -> usize {
    let p = (fraction.clamp(0.0, 1.0) * total as f64).round();
    (p as usize).min(total)
}

/// Ordering used for pruning: lower score first, then lower flat index.
#[inline]
fn prune_order(scores: &[f64], a: usize, b: usize) -> Ordering {
    scores[a].total_cmp(&scores[b]).then(a.cmp(&b))
}

/// Marks the `count` lowest entries of `candidates` (by [`prune_order`]) as
/// pruned.
fn prune_lowest(scores: &[f64], candidates: &mut [usize], count: usize, bits: &mut [bool]) {
    if count == 0 {
        return;
    }
    if count < candidates.len() {
        candidates.select_nth_unstable_by(count - 1, |&a, &b| prune_order(scores, a, b));
    }
    for &idx in &candidates[..count] {
        bits[idx] = false;
    }
}

/// Whole-layer top-k: prunes the `round(sparsity * rows * cols)` lowest
/// scores. Equal scores prune the smaller row-major index first.
pub fn select_topk_mask(scores: &Matrix, sparsity: f64) -> Mask {
    let total = scores.rows() * scores.cols();
    let count = prune_count(sparsity, total);
    let mut bits = vec![true; total];
    let mut candidates: Vec<usize> = (0..total).collect();
    prune_lowest(scores.data(), &mut candidates, count, &mut bits);
    Mask {
        rows: scores.rows(),
        cols: scores.cols(),
        bits,
    }
}

/// Gradual N:M selection.
///
/// Groups are `m_group` consecutive rows (input features) within one output
/// column. The `n_keep` highest entries of every group are always kept; of
/// the remaining entries across the whole layer, the lowest fraction
/// `s_t * m / (m - n)` is pruned (`2 s_t` for 2:4). At the final sparsity
/// `1 - n/m` the mask is exactly N:M.
pub fn select_structured_mask(
    scores: &Matrix,
    s_t: f64,
    pattern: StructurePattern,
) -> Result<Mask> {
    let (rows, cols) = scores.shape();
    let (n, m) = (pattern.n_keep, pattern.m_group);
    if rows % m != 0 {
        return Err(Error::InvalidPattern(format!(
            "{rows} input rows are not divisible by group size {m}"
        )));
    }
    let limit = pattern.final_sparsity();
    if !(0.0..=limit + 1e-12).contains(&s_t) {
        return Err(Error::InvalidPattern(format!(
            "target sparsity {s_t} is outside [0, {limit}] for {pattern}"
        )));
    }

    let data = scores.data();
    let mut unprotected = Vec::with_capacity(rows * cols * (m - n) / m);
    let mut group = Vec::with_capacity(m);
    for j in 0..cols {
        for g in 0..rows / m {
            group.clear();
            group.extend((g * m..(g + 1) * m).map(|r| r * cols + j));
            // Highest first: reverse of the pruning order.
            group.sort_by(|&a, &b| prune_order(data, b, a));
            unprotected.extend_from_slice(&group[n..]);
        }
    }

    let fraction = (s_t / limit).min(1.0);
    let count = prune_count(fraction, unprotected.len());
    let mut bits = vec![true; rows * cols];
    prune_lowest(data, &mut unprotected, count, &mut bits);
    Ok(Mask { rows, cols, bits })
}
