use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF};

use super::AnalysisError;
use crate::Scalar;

/// Sample Pearson correlation coefficient.
pub fn pearson_correlation<T: Scalar>(xs: &[T], ys: &[T]) -> Result<T, AnalysisError> {
    if xs.len() != ys.len() {
        return Err(AnalysisError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(AnalysisError::TooFewValues {
            needed: 2,
            found: xs.len(),
        });
    }
    let n = T::of_usize(xs.len());
    let mx = xs.iter().copied().sum::<T>() / n;
    let my = ys.iter().copied().sum::<T>() / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx <= T::zero() || syy <= T::zero() {
        return Err(AnalysisError::UndefinedCorrelation);
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(r.max(-T::one()).min(T::one()))
}

/// Outcome of a significance test at a (possibly corrected) level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TestResult<T> {
    pub statistic: T,
    pub p_value: T,
    pub corrected_alpha: T,
    pub significant: bool,
}

impl<T: Scalar> TestResult<T> {
    /// Re-evaluates significance against `alpha` (`p < alpha`).
    pub fn at_level(self, alpha: T) -> Self {
        Self {
            corrected_alpha: alpha,
            significant: self.p_value < alpha,
            ..self
        }
    }
}

/// Average ranks (1-based, ties share the mean rank) of the pooled values.
pub fn average_ranks<T: Scalar>(values: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("values are not NaN"));
    let mut ranks = vec![T::zero(); values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end share their mean
        let mean = T::of_usize(start + 1 + end) / T::of(2.0);
        for &i in &order[start..end] {
            ranks[i] = mean;
        }
        start = end;
    }
    ranks
}

/// Kruskal-Wallis H test across any number of groups, with tie correction
/// and a chi-square(k - 1) p-value. Significance is reported at 0.05.
pub fn kruskal_wallis_groups<T: Scalar>(groups: &[&[T]]) -> Result<TestResult<T>, AnalysisError> {
    if groups.len() < 2 {
        return Err(AnalysisError::TooFewValues {
            needed: 2,
            found: groups.len(),
        });
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        return Err(AnalysisError::TooFewValues {
            needed: 2,
            found: g.len(),
        });
    }
    let pooled: Vec<T> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    if pooled.iter().any(|v| v.is_nan()) {
        return Err(AnalysisError::NonFinite);
    }
    let ranks = average_ranks(&pooled);
    let n = pooled.len();

    let mut sorted = pooled.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("checked for NaN"));
    let mut tie_sum = T::zero();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && sorted[end] == sorted[start] {
            end += 1;
        }
        let t = T::of_usize(end - start);
        tie_sum = tie_sum + t * t * t - t;
        start = end;
    }
    let nf = T::of_usize(n);
    let correction = T::one() - tie_sum / (nf * nf * nf - nf);
    if correction <= T::zero() {
        return Err(AnalysisError::DegenerateTest);
    }

    let mut offset = 0;
    let mut between = T::zero();
    for g in groups {
        let rank_sum: T = ranks[offset..offset + g.len()].iter().copied().sum();
        between = between + rank_sum * rank_sum / T::of_usize(g.len());
        offset += g.len();
    }
    let h = T::of(12.0) / (nf * (nf + T::one())) * between - T::of(3.0) * (nf + T::one());
    let h = (h / correction).max(T::zero());
    let df = (groups.len() - 1) as f64;
    let chi2 = ChiSquared::new(df).expect("df >= 1");
    let p = chi2.sf(h.as_f64()).clamp(0.0, 1.0);
    Ok(TestResult {
        statistic: h,
        p_value: T::of(p),
        corrected_alpha: T::of(0.05),
        significant: p < 0.05,
    }
    .at_level(T::of(0.05)))
}

/// Two-sample Kruskal-Wallis test.
pub fn kruskal_wallis<T: Scalar>(sample_a: &[T], sample_b: &[T]) -> Result<TestResult<T>, AnalysisError> {
    kruskal_wallis_groups(&[sample_a, sample_b])
}

/// Flags test `i` significant iff `p_i < alpha / m`.
pub fn bonferroni<T: Scalar>(p_values: &[T], alpha: T) -> Vec<bool> {
    if p_values.is_empty() {
        return Vec::new();
    }
    let threshold = alpha / T::of_usize(p_values.len());
    p_values.iter().map(|&p| p < threshold).collect()
}

/// Quantile of sorted data with linear interpolation between order
/// statistics (position `(n - 1) * q`).
pub fn quantile_sorted<T: Scalar>(sorted: &[T], q: f64) -> T {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = T::of(h - lo as f64);
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Central binomial interval of the success fraction: the range of `k / n`
/// with `P(X < k_lo) <= (1 - level) / 2` and `P(X > k_hi) <= (1 - level) / 2`.
pub fn binomial_interval(n: u64, p: f64, level: f64) -> (f64, f64) {
    let tail = (1.0 - level) / 2.0;
    let dist = Binomial::new(p, n).expect("valid binomial");
    let lo = (0..=n).find(|&k| dist.cdf(k) > tail).unwrap_or(0);
    let hi = (0..=n).find(|&k| dist.cdf(k) >= 1.0 - tail).unwrap_or(n);
    (lo as f64 / n as f64, hi as f64 / n as f64)
}
