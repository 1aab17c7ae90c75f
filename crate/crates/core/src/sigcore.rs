//! Truncated path signatures over `R^d`.
//!
//! A [`TensorSeq`] stores an element of the truncated tensor algebra
//! `T^D(R^d) = R ⊕ R^d ⊕ (R^d)^{⊗2} ⊕ … ⊕ (R^d)^{⊗D}`. Each level `k` is a
//! dense array of `d^k` coefficients indexed lexicographically by the
//! multi-index `(i_1, …, i_k)`.
//!
//! Signatures of piecewise-linear paths are computed exactly: a single linear
//! piece with increment `Δ` has signature `exp⊗(Δ)`, and pieces are joined
//! with the truncated tensor product (Chen's identity).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default truncation depth.
pub const DEFAULT_DEPTH: usize = 3;

/// Which representation of a window feeds the distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// The truncated signature itself.
    #[default]
    Full,
    /// The truncated tensor logarithm of the signature.
    Log,
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(FeatureMode::Full),
            "log" => Ok(FeatureMode::Log),
            other => Err(Error::Config(format!(
                "unknown feature mode `{other}` (expected `full` or `log`)"
            ))),
        }
    }
}

/// Element of the truncated tensor algebra over `R^dim`, up to level `depth`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSeq {
    dim: usize,
    depth: usize,
    level0: f64,
    /// `levels[k - 1]` holds level `k`.
    levels: Vec<Vec<f64>>,
}

impl TensorSeq {
    /// The zero element (level 0 = 0, every level zero).
    pub fn zero(dim: usize, depth: usize) -> Self {
        assert!(dim >= 1 && depth >= 1, "dim and depth must be at least 1");
        let levels = (1..=depth).map(|k| vec![0.0; dim.pow(k as u32)]).collect();
        TensorSeq {
            dim,
            depth,
            level0: 0.0,
            levels,
        }
    }

    /// The multiplicative identity (level 0 = 1, every other level zero).
    pub fn identity(dim: usize, depth: usize) -> Self {
        let mut t = Self::zero(dim, depth);
        t.level0 = 1.0;
        t
    }

    /// Builds a tensor from explicit levels, checking sizes and finiteness.
    pub fn from_levels(dim: usize, level0: f64, levels: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be at least 1".into()));
        }
        if levels.is_empty() {
            return Err(Error::InvalidInput("depth must be at least 1".into()));
        }
        for (i, level) in levels.iter().enumerate() {
            let expected = dim.pow(i as u32 + 1);
            if level.len() != expected {
                return Err(Error::Shape(format!(
                    "level {} has {} entries, expected {expected}",
                    i + 1,
                    level.len()
                )));
            }
        }
        if !level0.is_finite() || levels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("coefficients must be finite".into()));
        }
        Ok(TensorSeq {
            dim,
            depth: levels.len(),
            level0,
            levels,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn level0(&self) -> f64 {
        self.level0
    }

    /// Coefficients of level `k` (`1 <= k <= depth`).
    pub fn level(&self, k: usize) -> &[f64] {
        assert!(k >= 1 && k <= self.depth, "level {k} out of range");
        &self.levels[k - 1]
    }

    /// Coefficient for a 0-based multi-index; the empty index is level 0.
    pub fn coeff(&self, index: &[usize]) -> f64 {
        if index.is_empty() {
            return self.level0;
        }
        let offset = index.iter().fold(0usize, |acc, &i| {
            assert!(i < self.dim, "index component {i} out of range");
            acc * self.dim + i
        });
        self.level(index.len())[offset]
    }

    fn check_same_shape(&self, other: &TensorSeq) -> Result<()> {
        if self.dim != other.dim || self.depth != other.depth {
            return Err(Error::Shape(format!(
                "(dim {}, depth {}) vs (dim {}, depth {})",
                self.dim, self.depth, other.dim, other.depth
            )));
        }
        Ok(())
    }

    fn scale(&mut self, factor: f64) {
        self.level0 *= factor;
        for v in self.levels.iter_mut().flatten() {
            *v *= factor;
        }
    }

    fn add_assign_scaled(&mut self, other: &TensorSeq, factor: f64) {
        self.level0 += factor * other.level0;
        for (dst, src) in self.levels.iter_mut().zip(&other.levels) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += factor * s;
            }
        }
    }
}

/// Truncated tensor product. Shapes must already agree.
fn tensor_mul(a: &TensorSeq, b: &TensorSeq) -> TensorSeq {
    let d = a.dim;
    let mut out = TensorSeq::zero(d, a.depth);
    out.level0 = a.level0 * b.level0;
    for k in 1..=a.depth {
        let dst = &mut out.levels[k - 1];
        let (ak, bk) = (&a.levels[k - 1], &b.levels[k - 1]);
        for (o, (x, y)) in dst.iter_mut().zip(ak.iter().zip(bk)) {
            *o = a.level0 * y + x * b.level0;
        }
        for i in 1..k {
            let left = &a.levels[i - 1];
            let right = &b.levels[k - i - 1];
            let stride = right.len();
            for (p, &lv) in left.iter().enumerate() {
                if lv == 0.0 {
                    continue;
                }
                let row = &mut dst[p * stride..(p + 1) * stride];
                for (o, &rv) in row.iter_mut().zip(right) {
                    *o += lv * rv;
                }
            }
        }
    }
    out
}

/// Signature of a single linear piece: the truncated tensor exponential
/// `exp⊗(delta)`, whose level `k` is `delta^{⊗k} / k!`.
pub fn segment_signature(delta: &[f64], depth: usize) -> Result<TensorSeq> {
    if delta.is_empty() {
        return Err(Error::InvalidInput(
            "increment must have dimension >= 1".into(),
        ));
    }
    if depth == 0 {
        return Err(Error::InvalidInput("depth must be at least 1".into()));
    }
    if delta.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite increment {delta:?}"
        )));
    }
    let d = delta.len();
    let mut out = TensorSeq::identity(d, depth);
    out.levels[0].copy_from_slice(delta);
    for k in 2..=depth {
        let (prev, rest) = out.levels.split_at_mut(k - 1);
        let prev = &prev[k - 2];
        let cur = &mut rest[0];
        let inv_k = 1.0 / k as f64;
        for (p, &pv) in prev.iter().enumerate() {
            for (q, &dq) in delta.iter().enumerate() {
                cur[p * d + q] = pv * dq * inv_k;
            }
        }
    }
    Ok(out)
}

/// Chen product of two truncated tensors: `result_k = Σ_{i+j=k} a_i ⊗ b_j`.
///
/// For signatures of two paths this is the signature of their concatenation.
pub fn chen_concat(a: &TensorSeq, b: &TensorSeq) -> Result<TensorSeq> {
    a.check_same_shape(b)?;
    Ok(tensor_mul(a, b))
}

/// Exact signature of the polyline through `points` (each of equal dimension).
pub fn polyline_signature<P: AsRef<[f64]>>(points: &[P], depth: usize) -> Result<TensorSeq> {
    if points.len() < 2 {
        return Err(Error::InsufficientData {
            required: 2,
            actual: points.len(),
        });
    }
    let d = points[0].as_ref().len();
    if d == 0 {
        return Err(Error::InvalidInput(
            "points must have dimension >= 1".into(),
        ));
    }
    if depth == 0 {
        return Err(Error::InvalidInput("depth must be at least 1".into()));
    }
    let mut sig = TensorSeq::identity(d, depth);
    let mut delta = vec![0.0; d];
    for pair in points.windows(2) {
        let (p, q) = (pair[0].as_ref(), pair[1].as_ref());
        if q.len() != d || p.len() != d {
            return Err(Error::Shape("points have inconsistent dimensions".into()));
        }
        for ((dst, a), b) in delta.iter_mut().zip(p).zip(q) {
            *dst = b - a;
        }
        let seg = segment_signature(&delta, depth)?;
        sig = tensor_mul(&sig, &seg);
    }
    // level 1 telescopes to the total displacement; take it from the
    // endpoints so it carries no accumulated rounding
    let (first, last) = (points[0].as_ref(), points[points.len() - 1].as_ref());
    for ((dst, a), b) in sig.levels[0].iter_mut().zip(first).zip(last) {
        *dst = b - a;
    }
    Ok(sig)
}

/// Signature of a normalized two-dimensional path.
pub fn path_signature(path: &NormalizedPath, depth: usize) -> Result<TensorSeq> {
    polyline_signature(path.points(), depth)
}

/// Tensor exponential of an element with zero scalar part.
pub fn tensor_exp(x: &TensorSeq) -> Result<TensorSeq> {
    if x.level0 != 0.0 {
        return Err(Error::InvalidInput(format!(
            "exponential requires level 0 = 0, got {}",
            x.level0
        )));
    }
    let mut result = TensorSeq::identity(x.dim, x.depth);
    let mut term = TensorSeq::identity(x.dim, x.depth);
    for n in 1..=x.depth {
        term = tensor_mul(&term, x);
        term.scale(1.0 / n as f64);
        result.add_assign_scaled(&term, 1.0);
    }
    Ok(result)
}

/// Truncated tensor logarithm of a group-like element (level 0 = 1):
/// `log(1 + x) = Σ_{n≥1} (-1)^{n+1} x^{⊗n} / n`.
pub fn log_signature(sig: &TensorSeq) -> Result<TensorSeq> {
    if sig.level0 != 1.0 {
        return Err(Error::InvalidInput(format!(
            "logarithm requires level 0 = 1, got {}",
            sig.level0
        )));
    }
    let mut x = sig.clone();
    x.level0 = 0.0;
    let mut result = TensorSeq::zero(sig.dim, sig.depth);
    let mut power = x.clone();
    for n in 1..=sig.depth {
        if n > 1 {
            power = tensor_mul(&power, &x);
        }
        let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
        result.add_assign_scaled(&power, sign / n as f64);
    }
    Ok(result)
}

/// Number of coefficients in levels `1..=depth` for dimension `dim`.
pub fn flat_len(dim: usize, depth: usize) -> usize {
    (1..=depth).map(|k| dim.pow(k as u32)).sum()
}

/// Levels `1..=depth` concatenated in level order; level 0 is dropped.
pub fn flatten(sig: &TensorSeq) -> Vec<f64> {
    sig.levels.iter().flatten().copied().collect()
}

/// Euclidean distance between flattened signatures.
pub fn sig_distance(a: &TensorSeq, b: &TensorSeq) -> Result<f64> {
    a.check_same_shape(b)?;
    let sum_sq: f64 = a
        .levels
        .iter()
        .flatten()
        .zip(b.levels.iter().flatten())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum_sq.sqrt())
}

/// Signed (Lévy) area in the `(i, j)` plane: `(S^{ij} - S^{ji}) / 2`.
pub fn levy_area(sig: &TensorSeq, i: usize, j: usize) -> f64 {
    (sig.coeff(&[i, j]) - sig.coeff(&[j, i])) / 2.0
}

/// Feature tensor for a window according to `mode`.
pub fn window_features(
    path: &NormalizedPath,
    depth: usize,
    mode: FeatureMode,
) -> Result<TensorSeq> {
    let sig = path_signature(path, depth)?;
    match mode {
        FeatureMode::Full => Ok(sig),
        FeatureMode::Log => log_signature(&sig),
    }
}

/// A window mapped to the unit square: time and metric both min-max scaled.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedPath {
    points: Vec<[f64; 2]>,
}

impl NormalizedPath {
    /// Validates `(t, y)` points: at least two, `t` strictly increasing,
    /// everything inside `[0, 1]`.
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InsufficientData {
                required: 2,
                actual: points.len(),
            });
        }
        if points
            .iter()
            .flatten()
            .any(|v| !v.is_finite() || !(0.0..=1.0).contains(v))
        {
            return Err(Error::InvalidInput(
                "normalized coordinates must lie in [0, 1]".into(),
            ));
        }
        if points.windows(2).any(|w| w[1][0] <= w[0][0]) {
            return Err(Error::InvalidInput(
                "normalized time must be strictly increasing".into(),
            ));
        }
        Ok(NormalizedPath { points })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
