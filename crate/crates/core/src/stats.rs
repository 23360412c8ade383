//! Deterministic statistics primitives shared by the analysis modules.
//!
//! Inferential routines use the sample variance (divide by `n - 1`). The
//! inconsistency-ratio module keeps its own population-variance convention
//! via [`variance_population`].

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    WelchTwoSample,
    PooledTwoSample,
    OneSample,
    Paired,
}

/// Outcome of a t-test. `p_value` is always two-sided.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub df: f64,
    pub kind: TestKind,
}

/// Standardized mean difference of paired differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohensD {
    pub value: f64,
    /// Set when every difference is zero and `d` is reported as 0.
    pub zero_effect: bool,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Variance dividing by `n`. Returns 0 for an empty slice.
pub fn variance_population(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Variance dividing by `n - 1`.
pub fn variance_sample(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn std_sample(xs: &[f64]) -> f64 {
    variance_sample(xs).sqrt()
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

fn require_len(xs: &[f64], needed: usize, what: &str) -> Result<()> {
    if xs.len() < needed {
        return Err(Error::InsufficientSupport {
            what: what.to_string(),
            needed,
            found: xs.len(),
        });
    }
    Ok(())
}

/// Welch's unequal-variance two-sample t-test.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<TestResult> {
    require_len(a, 2, "welch_t sample a")?;
    require_len(b, 2, "welch_t sample b")?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (variance_sample(a) / na, variance_sample(b) / nb);
    let se2 = va + vb;
    if se2 <= 0.0 {
        return Err(Error::DegenerateVariance(
            "both samples have zero variance".into(),
        ));
    }
    let t = (mean(a) - mean(b)) / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    Ok(TestResult {
        statistic: t,
        p_value: t_two_sided_p(t, df),
        df,
        kind: TestKind::WelchTwoSample,
    })
}

/// Student's two-sample t-test with pooled variance.
pub fn pooled_t(a: &[f64], b: &[f64]) -> Result<TestResult> {
    require_len(a, 2, "pooled_t sample a")?;
    require_len(b, 2, "pooled_t sample b")?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let df = na + nb - 2.0;
    let sp2 = ((na - 1.0) * variance_sample(a) + (nb - 1.0) * variance_sample(b)) / df;
    if sp2 <= 0.0 {
        return Err(Error::DegenerateVariance(
            "pooled variance is zero".into(),
        ));
    }
    let t = (mean(a) - mean(b)) / (sp2 * (1.0 / na + 1.0 / nb)).sqrt();
    Ok(TestResult {
        statistic: t,
        p_value: t_two_sided_p(t, df),
        df,
        kind: TestKind::PooledTwoSample,
    })
}

pub fn one_sample_t(xs: &[f64], mu0: f64) -> Result<TestResult> {
    require_len(xs, 2, "one_sample_t")?;
    let sd = std_sample(xs);
    if sd <= 0.0 {
        return Err(Error::DegenerateVariance("sample has zero variance".into()));
    }
    let n = xs.len() as f64;
    let t = (mean(xs) - mu0) / (sd / n.sqrt());
    let df = n - 1.0;
    Ok(TestResult {
        statistic: t,
        p_value: t_two_sided_p(t, df),
        df,
        kind: TestKind::OneSample,
    })
}

/// Paired t-test on a vector of within-subject differences.
pub fn paired_t(diffs: &[f64]) -> Result<TestResult> {
    let mut r = one_sample_t(diffs, 0.0)?;
    r.kind = TestKind::Paired;
    Ok(r)
}

/// Cohen's d for paired differences: `mean(d) / sd(d)`.
pub fn cohens_d(diffs: &[f64]) -> Result<CohensD> {
    require_len(diffs, 2, "cohens_d")?;
    if diffs.iter().all(|d| *d == 0.0) {
        return Ok(CohensD {
            value: 0.0,
            zero_effect: true,
        });
    }
    let sd = std_sample(diffs);
    if sd <= 0.0 {
        return Err(Error::DegenerateVariance(
            "constant nonzero differences".into(),
        ));
    }
    Ok(CohensD {
        value: mean(diffs) / sd,
        zero_effect: false,
    })
}

pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    require_len(x, 2, "pearson_r")?;
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::DegenerateVariance(
            "pearson_r needs nonconstant inputs".into(),
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Two-sided p-value of a t statistic with `df` degrees of freedom.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

/// Survival function `P(T > t)` of Student's t distribution.
pub fn student_t_sf(t: f64, df: f64) -> f64 {
    let half = 0.5 * t_two_sided_p(t, df);
    if t >= 0.0 {
        half
    } else {
        1.0 - half
    }
}

/// Lanczos approximation (g = 7, n = 9) of `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta `I_x(a, b)` by Lentz's continued fraction.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 500;
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Seeded random stream keyed by a string, so that independent work units
/// (annotators, themes, prompts) draw from independent, schedule-free streams.
#[derive(Debug, Clone)]
pub struct SeededSampler {
    rng: ChaCha8Rng,
}

impl SeededSampler {
    pub fn new(seed: u64, stream_key: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update(stream_key.as_bytes());
        let digest: [u8; 32] = hasher.finalize().into();
        SeededSampler {
            rng: ChaCha8Rng::from_seed(digest),
        }
    }

    /// Uniform draw in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        if sd == 0.0 {
            return mean;
        }
        Normal::new(mean, sd)
            .expect("finite positive sd")
            .sample(&mut self.rng)
    }

    /// `k` distinct indices from `0..n`, in random order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        index::sample(&mut self.rng, n, k).into_vec()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.rng);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welch_identical_samples() {
        let r = welch_t(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn welch_rejects_singleton() {
        assert!(matches!(
            welch_t(&[1.0], &[1.0, 2.0]),
            Err(Error::InsufficientSupport { .. })
        ));
    }

    #[test]
    fn cohens_d_all_zero_is_flagged() {
        let d = cohens_d(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(d.value, 0.0);
        assert!(d.zero_effect);
        assert!(cohens_d(&[2.0, 2.0, 2.0]).is_err());
    }

    #[test]
    fn pearson_perfect_line() {
        let x = [1.0, 2.0, 3.0, 7.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson_r(&x, &y).unwrap() - 1.0).abs() < 1e-15);
        assert!(pearson_r(&[3.0, 3.0, 3.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn t_cdf_closed_form_df1() {
        // Cauchy: P(T > t) = 1/2 - atan(t)/pi
        for t in [0.1_f64, 0.5, 1.0, 3.0, 12.0] {
            let expected = 0.5 - t.atan() / std::f64::consts::PI;
            assert!((student_t_sf(t, 1.0) - expected).abs() < 1e-12, "t={t}");
        }
        // df = 2: P(T > t) = 1/2 - t / (2 sqrt(t^2 + 2))
        for t in [0.3, 1.7, 4.0] {
            let expected = 0.5 - t / (2.0 * (t * t + 2.0f64).sqrt());
            assert!((student_t_sf(t, 2.0) - expected).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn sampler_is_deterministic_per_key() {
        let mut a = SeededSampler::new(7, "a");
        let mut b = SeededSampler::new(7, "a");
        let xs: Vec<f64> = (0..100).map(|_| a.next_f64()).collect();
        let ys: Vec<f64> = (0..100).map(|_| b.next_f64()).collect();
        assert_eq!(xs, ys);
        let mut c = SeededSampler::new(7, "b");
        assert_ne!(xs[0], c.next_f64());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
