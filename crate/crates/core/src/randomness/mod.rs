//! Statistical randomness tests for key bitstreams, after NIST SP 800-22.
//!
//! Eight tests are provided. Short keys (128 bits) are scored per key; the
//! rank and spectral tests need far longer inputs and are run on the
//! concatenation of all keys instead.

mod fft;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::{LN_2, SQRT_2};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::special::{erfc, igamc, normal_cdf};

pub use fft::dft;

/// Significance level used for every pass decision.
pub const ALPHA: f64 = 0.01;

const RANK_ROWS: usize = 32;
const RANK_COLS: usize = 32;
const RANK_MIN_MATRICES: usize = 38;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitStream {
    bits: Vec<u8>,
}

impl BitStream {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::Empty("bit stream"));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Domain("bit stream entries must be 0 or 1".into()));
        }
        Ok(Self { bits })
    }

    /// Parses a string of `0`/`1` characters; whitespace is ignored.
    pub fn from_ascii(s: &str) -> Result<Self> {
        let mut bits = Vec::with_capacity(s.len());
        for ch in s.chars() {
            match ch {
                '0' => bits.push(0),
                '1' => bits.push(1),
                c if c.is_whitespace() => {}
                c => return Err(Error::Domain(format!("invalid bit character {c:?}"))),
            }
        }
        Self::new(bits)
    }

    pub fn concat(streams: &[BitStream]) -> Result<Self> {
        Self::new(streams.iter().flat_map(|s| s.bits.iter().copied()).collect())
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn complement(&self) -> Self {
        Self { bits: self.bits.iter().map(|b| b ^ 1).collect() }
    }

    pub fn to_ascii(&self) -> String {
        self.bits.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect()
    }

    fn ones(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Frequency,
    BlockFrequency,
    Runs,
    CumulativeSums,
    DiscreteFourierTransform,
    Rank,
    ApproximateEntropy,
    Serial,
}

impl TestKind {
    pub const ALL: [TestKind; 8] = [
        TestKind::Frequency,
        TestKind::BlockFrequency,
        TestKind::Runs,
        TestKind::CumulativeSums,
        TestKind::DiscreteFourierTransform,
        TestKind::Rank,
        TestKind::ApproximateEntropy,
        TestKind::Serial,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestKind::Frequency => "frequency",
            TestKind::BlockFrequency => "block_frequency",
            TestKind::Runs => "runs",
            TestKind::CumulativeSums => "cumulative_sums",
            TestKind::DiscreteFourierTransform => "dft",
            TestKind::Rank => "rank",
            TestKind::ApproximateEntropy => "approximate_entropy",
            TestKind::Serial => "serial",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
    /// The input does not meet the test's prerequisites.
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub test: TestKind,
    pub params: String,
    /// Empty when not applicable.
    pub p_values: Vec<f64>,
    pub outcome: Outcome,
}

impl TestResult {
    fn from_p_values(test: TestKind, params: String, p_values: Vec<f64>) -> Self {
        let p_values: Vec<f64> = p_values.into_iter().map(|p| p.clamp(0.0, 1.0)).collect();
        let outcome = if p_values.iter().all(|&p| p >= ALPHA) { Outcome::Pass } else { Outcome::Fail };
        Self { test, params, p_values, outcome }
    }

    fn not_applicable(test: TestKind, params: String) -> Self {
        Self { test, params, p_values: Vec::new(), outcome: Outcome::NotApplicable }
    }

    pub fn passed(&self) -> bool {
        self.outcome == Outcome::Pass
    }
}

pub fn frequency_test(s: &BitStream) -> TestResult {
    let n = s.len() as f64;
    let sum = 2.0 * s.ones() as f64 - n;
    let p = erfc(sum.abs() / math::sqrt(2.0 * n));
    TestResult::from_p_values(TestKind::Frequency, String::new(), alloc::vec![p])
}

pub fn block_frequency_test(s: &BitStream, block_len: usize) -> Result<TestResult> {
    if block_len == 0 || block_len > s.len() {
        return Err(Error::Domain(format!("block length {block_len} for {} bits", s.len())));
    }
    let n_blocks = s.len() / block_len;
    let chi2: f64 = s
        .bits
        .chunks_exact(block_len)
        .map(|blk| {
            let pi = blk.iter().map(|&b| b as f64).sum::<f64>() / block_len as f64;
            (pi - 0.5) * (pi - 0.5)
        })
        .sum::<f64>()
        * 4.0
        * block_len as f64;
    let p = igamc(n_blocks as f64 / 2.0, chi2 / 2.0);
    Ok(TestResult::from_p_values(TestKind::BlockFrequency, format!("M={block_len}"), alloc::vec![p]))
}

pub fn runs_test(s: &BitStream) -> TestResult {
    let n = s.len() as f64;
    let pi = s.ones() as f64 / n;
    if (pi - 0.5).abs() >= 2.0 / math::sqrt(n) {
        return TestResult::not_applicable(TestKind::Runs, String::new());
    }
    let runs = 1 + s.bits.windows(2).filter(|w| w[0] != w[1]).count();
    let q = pi * (1.0 - pi);
    let p = erfc((runs as f64 - 2.0 * n * q).abs() / (2.0 * math::sqrt(2.0 * n) * q));
    TestResult::from_p_values(TestKind::Runs, String::new(), alloc::vec![p])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CusumMode {
    Forward,
    Backward,
}

/// P-value of the cumulative sums test in one direction.
pub fn cumulative_sums_p(s: &BitStream, mode: CusumMode) -> f64 {
    let mut walk = 0i64;
    let mut z = 0i64;
    let step = |b: u8| if b == 1 { 1 } else { -1 };
    match mode {
        CusumMode::Forward => s.bits.iter().for_each(|&b| {
            walk += step(b);
            z = z.max(walk.abs());
        }),
        CusumMode::Backward => s.bits.iter().rev().for_each(|&b| {
            walk += step(b);
            z = z.max(walk.abs());
        }),
    }
    let n = s.len() as i64;
    let zf = z as f64;
    let sqrt_n = math::sqrt(n as f64);
    // summation bounds use truncating integer division
    let mut sum1 = 0.0;
    let mut k = (-n / z + 1) / 4;
    while k <= (n / z - 1) / 4 {
        let kf = k as f64;
        sum1 += normal_cdf((4.0 * kf + 1.0) * zf / sqrt_n) - normal_cdf((4.0 * kf - 1.0) * zf / sqrt_n);
        k += 1;
    }
    let mut sum2 = 0.0;
    let mut k = (-n / z - 3) / 4;
    while k <= (n / z - 1) / 4 {
        let kf = k as f64;
        sum2 += normal_cdf((4.0 * kf + 3.0) * zf / sqrt_n) - normal_cdf((4.0 * kf + 1.0) * zf / sqrt_n);
        k += 1;
    }
    (1.0 - sum1 + sum2).clamp(0.0, 1.0)
}

pub fn cumulative_sums_test(s: &BitStream, mode: CusumMode) -> TestResult {
    let params = match mode {
        CusumMode::Forward => "forward",
        CusumMode::Backward => "backward",
    };
    TestResult::from_p_values(TestKind::CumulativeSums, params.into(), alloc::vec![cumulative_sums_p(s, mode)])
}

/// Forward and backward together; passes only when both directions pass.
pub fn cumulative_sums_both(s: &BitStream) -> TestResult {
    TestResult::from_p_values(
        TestKind::CumulativeSums,
        "forward+backward".into(),
        alloc::vec![cumulative_sums_p(s, CusumMode::Forward), cumulative_sums_p(s, CusumMode::Backward)],
    )
}

pub fn dft_test(s: &BitStream) -> TestResult {
    let n = s.len() & !1;
    if n < 2 {
        return TestResult::not_applicable(TestKind::DiscreteFourierTransform, String::new());
    }
    let x: Vec<Complex64> = s.bits[..n].iter().map(|&b| Complex64::new(2.0 * b as f64 - 1.0, 0.0)).collect();
    let spectrum = dft(&x);
    let nf = n as f64;
    let threshold = math::sqrt(math::ln(1.0 / 0.05) * nf);
    let below = spectrum[..n / 2].iter().filter(|c| c.norm() < threshold).count() as f64;
    let expected = 0.95 * nf / 2.0;
    let d = (below - expected) / math::sqrt(nf * 0.95 * 0.05 / 4.0);
    let p = erfc(d.abs() / SQRT_2);
    TestResult::from_p_values(TestKind::DiscreteFourierTransform, format!("n={n}"), alloc::vec![p])
}

/// Rank over GF(2) of a matrix whose rows are bit masks of `cols` bits.
pub fn gf2_rank(rows: &mut [u64], cols: usize) -> usize {
    let mut rank = 0;
    for c in 0..cols {
        let bit = 1u64 << c;
        let Some(pivot) = (rank..rows.len()).find(|&r| rows[r] & bit != 0) else {
            continue;
        };
        rows.swap(rank, pivot);
        let prow = rows[rank];
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && *row & bit != 0 {
                *row ^= prow;
            }
        }
        rank += 1;
    }
    rank
}

/// Probability that a random `m x q` matrix over GF(2) has rank `r`.
pub fn rank_probability(r: usize, m: usize, q: usize) -> f64 {
    let (rf, mf, qf) = (r as f64, m as f64, q as f64);
    let mut prod = 1.0;
    for i in 0..r {
        let i = i as f64;
        prod *= (1.0 - math::pow(2.0, i - qf)) * (1.0 - math::pow(2.0, i - mf)) / (1.0 - math::pow(2.0, i - rf));
    }
    math::pow(2.0, rf * (qf + mf - rf) - mf * qf) * prod
}

pub fn rank_test(s: &BitStream) -> TestResult {
    let per = RANK_ROWS * RANK_COLS;
    let n_mat = s.len() / per;
    if n_mat < RANK_MIN_MATRICES {
        return TestResult::not_applicable(TestKind::Rank, format!("{RANK_ROWS}x{RANK_COLS}"));
    }
    let (mut full, mut minus1) = (0usize, 0usize);
    for blk in s.bits.chunks_exact(per).take(n_mat) {
        let mut rows: Vec<u64> = blk
            .chunks_exact(RANK_COLS)
            .map(|row| row.iter().enumerate().fold(0u64, |acc, (j, &b)| acc | ((b as u64) << j)))
            .collect();
        match gf2_rank(&mut rows, RANK_COLS) {
            r if r == RANK_ROWS => full += 1,
            r if r == RANK_ROWS - 1 => minus1 += 1,
            _ => {}
        }
    }
    let p_full = rank_probability(RANK_ROWS, RANK_ROWS, RANK_COLS);
    let p_minus1 = rank_probability(RANK_ROWS - 1, RANK_ROWS, RANK_COLS);
    let p_rest = 1.0 - p_full - p_minus1;
    let nf = n_mat as f64;
    let rest = (n_mat - full - minus1) as f64;
    let term = |observed: f64, p: f64| (observed - p * nf) * (observed - p * nf) / (p * nf);
    let chi2 = term(full as f64, p_full) + term(minus1 as f64, p_minus1) + term(rest, p_rest);
    let p = math::exp(-chi2 / 2.0);
    TestResult::from_p_values(TestKind::Rank, format!("{RANK_ROWS}x{RANK_COLS}"), alloc::vec![p])
}

/// Counts of every overlapping `m`-bit pattern, wrapping around the end.
fn pattern_counts(bits: &[u8], m: usize) -> Vec<u64> {
    let mut counts = alloc::vec![0u64; 1 << m];
    if m == 0 {
        counts[0] = bits.len() as u64;
        return counts;
    }
    let n = bits.len();
    for i in 0..n {
        let idx = (0..m).fold(0usize, |acc, k| (acc << 1) | bits[(i + k) % n] as usize);
        counts[idx] += 1;
    }
    counts
}

fn phi(bits: &[u8], m: usize) -> f64 {
    let n = bits.len() as f64;
    pattern_counts(bits, m)
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            p * math::ln(p)
        })
        .sum()
}

/// `(ApEn, chi^2, P)` without the length guideline check.
pub fn approximate_entropy_statistic(s: &BitStream, m: usize) -> (f64, f64, f64) {
    let apen = phi(&s.bits, m) - phi(&s.bits, m + 1);
    let chi2 = 2.0 * s.len() as f64 * (LN_2 - apen);
    let p = igamc(math::pow(2.0, m as f64 - 1.0), chi2 / 2.0);
    (apen, chi2, p)
}

pub fn approximate_entropy_test(s: &BitStream, m: usize) -> TestResult {
    let params = format!("m={m}");
    if m + 1 >= usize::BITS as usize || (1usize << (m + 1)) > s.len() {
        return TestResult::not_applicable(TestKind::ApproximateEntropy, params);
    }
    let (_, _, p) = approximate_entropy_statistic(s, m);
    TestResult::from_p_values(TestKind::ApproximateEntropy, params, alloc::vec![p])
}

fn psi_squared(bits: &[u8], m: isize) -> f64 {
    if m <= 0 {
        return 0.0;
    }
    let m = m as usize;
    let n = bits.len() as f64;
    let sum: f64 = pattern_counts(bits, m).into_iter().map(|c| (c * c) as f64).sum();
    math::pow(2.0, m as f64) / n * sum - n
}

/// The three `psi^2` statistics for block lengths `m`, `m-1` and `m-2`.
pub fn serial_psi(s: &BitStream, m: usize) -> [f64; 3] {
    let m = m as isize;
    [psi_squared(&s.bits, m), psi_squared(&s.bits, m - 1), psi_squared(&s.bits, m - 2)]
}

pub fn serial_test(s: &BitStream, m: usize) -> Result<TestResult> {
    if m < 2 {
        return Err(Error::Domain(format!("serial test needs m >= 2, got {m}")));
    }
    let params = format!("m={m}");
    if m >= usize::BITS as usize || (1usize << m) > s.len() {
        return Ok(TestResult::not_applicable(TestKind::Serial, params));
    }
    let [p0, p1, p2] = serial_psi(s, m);
    let del1 = p0 - p1;
    let del2 = p0 - 2.0 * p1 + p2;
    let mf = m as f64;
    let pv1 = igamc(math::pow(2.0, mf - 2.0), del1 / 2.0);
    let pv2 = igamc(math::pow(2.0, mf - 3.0), del2 / 2.0);
    Ok(TestResult::from_p_values(TestKind::Serial, params, alloc::vec![pv1, pv2]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub block_len: usize,
    pub serial_m: usize,
    pub apen_m: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self { block_len: 8, serial_m: 2, apen_m: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    PerKey,
    Concatenated,
}

impl TestKind {
    /// Rank and DFT need long inputs and are scored on concatenated keys.
    pub fn mode(self) -> Mode {
        match self {
            TestKind::Rank | TestKind::DiscreteFourierTransform => Mode::Concatenated,
            _ => Mode::PerKey,
        }
    }
}

/// One test applied to one stream; `key_index` is `None` for the concatenation.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyResult {
    pub key_index: Option<usize>,
    pub result: TestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub test: TestKind,
    pub mode: Mode,
    pub n_streams: usize,
    pub n_pass: usize,
    pub n_not_applicable: usize,
    /// Not-applicable streams count as failures.
    pub pass_ratio: f64,
}

impl SuiteSummary {
    /// At least one stream met the test's prerequisites.
    pub fn applicable(&self) -> bool {
        self.n_not_applicable < self.n_streams
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub details: Vec<KeyResult>,
    pub summary: Vec<SuiteSummary>,
}

pub fn run_test(kind: TestKind, s: &BitStream, cfg: &SuiteConfig) -> Result<TestResult> {
    Ok(match kind {
        TestKind::Frequency => frequency_test(s),
        TestKind::BlockFrequency => {
            if cfg.block_len > s.len() {
                TestResult::not_applicable(kind, format!("M={}", cfg.block_len))
            } else {
                block_frequency_test(s, cfg.block_len)?
            }
        }
        TestKind::Runs => runs_test(s),
        TestKind::CumulativeSums => cumulative_sums_both(s),
        TestKind::DiscreteFourierTransform => dft_test(s),
        TestKind::Rank => rank_test(s),
        TestKind::ApproximateEntropy => approximate_entropy_test(s, cfg.apen_m),
        TestKind::Serial => serial_test(s, cfg.serial_m)?,
    })
}

/// Fraction of streams that pass `kind`.
pub fn pass_ratio(keys: &[BitStream], kind: TestKind, cfg: &SuiteConfig) -> Result<f64> {
    if keys.is_empty() {
        return Err(Error::Empty("key list"));
    }
    let mut passed = 0usize;
    for k in keys {
        passed += run_test(kind, k, cfg)?.passed() as usize;
    }
    Ok(passed as f64 / keys.len() as f64)
}

/// Runs all eight tests, each in its own mode.
pub fn run_suite(keys: &[BitStream], cfg: &SuiteConfig) -> Result<SuiteReport> {
    if keys.is_empty() {
        return Err(Error::Empty("key list"));
    }
    let joined = BitStream::concat(keys)?;
    let mut details = Vec::new();
    let mut summary = Vec::new();
    for kind in TestKind::ALL {
        let start = details.len();
        match kind.mode() {
            Mode::PerKey => {
                for (i, k) in keys.iter().enumerate() {
                    details.push(KeyResult { key_index: Some(i), result: run_test(kind, k, cfg)? });
                }
            }
            Mode::Concatenated => {
                details.push(KeyResult { key_index: None, result: run_test(kind, &joined, cfg)? });
            }
        }
        let rows = &details[start..];
        let n_pass = rows.iter().filter(|r| r.result.passed()).count();
        let n_na = rows.iter().filter(|r| r.result.outcome == Outcome::NotApplicable).count();
        summary.push(SuiteSummary {
            test: kind,
            mode: kind.mode(),
            n_streams: rows.len(),
            n_pass,
            n_not_applicable: n_na,
            pass_ratio: n_pass as f64 / rows.len() as f64,
        });
    }
    Ok(SuiteReport { details, summary })
}
