//! Synthetic multi-environment FDD channels.
//!
//! An environment fixes a layout of base path delays. Each user drawn from it
//! perturbs those delays slightly and gets its own path gains and phases. The
//! uplink and downlink responses of one user come from the same paths, so the
//! downlink is a deterministic function of the uplink up to the small delay
//! jitter. That function differs between environments, which is what makes a
//! mapping learned in one room useless in the next.

use alloc::vec::Vec;
use core::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::complex_to_features;
use crate::math;
use crate::matrix::Matrix;
use crate::rng::{self, Domain, StreamRng};

fn default_delay_jitter() -> f64 {
    0.2e-9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub env_id: u32,
    /// Inclusive `[min, max]` number of paths per user.
    pub n_paths_range: [usize; 2],
    /// Largest excess delay, seconds.
    pub delay_spread_s: f64,
    /// Decay of the path magnitude envelope over the normalized delay
    /// `tau / delay_spread_s`.
    pub gain_decay: f64,
    /// Standard deviation of the per-user delay perturbation, seconds.
    #[serde(default = "default_delay_jitter")]
    pub delay_jitter_s: f64,
    pub seed: u64,
}

impl EnvironmentSpec {
    pub fn new(env_id: u32, seed: u64) -> Self {
        Self {
            env_id,
            n_paths_range: [48, 64],
            delay_spread_s: 300e-9,
            gain_decay: 1.0,
            delay_jitter_s: default_delay_jitter(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.n_paths_range;
        if lo < 1 {
            return Err(Error::config("n_paths_range minimum must be at least 1"));
        }
        if lo > hi {
            return Err(Error::config(alloc::format!("n_paths_range [{lo}, {hi}] has min > max")));
        }
        if !(self.delay_spread_s > 0.0 && self.delay_spread_s.is_finite()) {
            return Err(Error::config("delay_spread_s must be positive"));
        }
        if !(self.gain_decay > 0.0) {
            return Err(Error::config("gain_decay must be positive"));
        }
        if !(self.delay_jitter_s >= 0.0 && self.delay_jitter_s.is_finite()) {
            return Err(Error::config("delay_jitter_s must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfdmConfig {
    pub f_ul_hz: f64,
    pub f_dl_hz: f64,
    pub n_subcarriers: usize,
    pub bandwidth_hz: f64,
}

impl Default for OfdmConfig {
    fn default() -> Self {
        Self { f_ul_hz: 2.4e9, f_dl_hz: 2.5e9, n_subcarriers: 64, bandwidth_hz: 20e6 }
    }
}

impl OfdmConfig {
    /// Checks the configuration. `f_ul == f_dl` is accepted, since the
    /// reciprocal (TDD-like) limit is a useful sanity configuration, but it is
    /// reported by [`OfdmConfig::is_fdd`].
    pub fn validate(&self) -> Result<()> {
        if self.n_subcarriers == 0 {
            return Err(Error::config("n_subcarriers must be positive"));
        }
        if !(self.f_ul_hz > 0.0 && self.f_dl_hz > 0.0) {
            return Err(Error::config("carrier frequencies must be positive"));
        }
        Ok(())
    }

    pub fn is_fdd(&self) -> bool {
        self.f_ul_hz != self.f_dl_hz
    }

    pub fn feature_dim(&self) -> usize {
        2 * self.n_subcarriers
    }
}

/// Multipath description of one user. Path `n` keeps index `n` in the
/// subcarrier exponent, so index order is part of the channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PathParams {
    pub gains: Vec<f64>,
    pub delays: Vec<f64>,
    pub phases: Vec<f64>,
}

impl PathParams {
    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        Error::check_dim(self.gains.len(), self.delays.len())?;
        Error::check_dim(self.gains.len(), self.phases.len())?;
        let finite = self.gains.iter().chain(&self.delays).chain(&self.phases).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("path parameters"));
        }
        Ok(())
    }
}

/// Magnitude of a path with normalized delay `delay / spread`, decay constant
/// `decay` and per-user scatter factor `u`.
#[inline]
pub fn path_gain(delay: f64, spread: f64, decay: f64, u: f64) -> f64 {
    math::exp(-(delay / spread) / decay) * u
}

/// One environment: its parameters plus the base path layout. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    spec: EnvironmentSpec,
    base_delays: Vec<f64>,
}

pub fn build_environment(spec: &EnvironmentSpec) -> Result<Environment> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, Domain::EnvironmentLayout, 0);
    let max_paths = spec.n_paths_range[1];
    let mut base_delays: Vec<f64> =
        (0..max_paths).map(|_| rng.random::<f64>() * spec.delay_spread_s).collect();
    // Ascending delays give a descending magnitude envelope along the path index.
    base_delays.sort_by(f64::total_cmp);
    Ok(Environment { spec: spec.clone(), base_delays })
}

impl Environment {
    pub fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    pub fn base_delays(&self) -> &[f64] {
        &self.base_delays
    }

    pub fn seed(&self) -> u64 {
        self.spec.seed
    }
}

/// Draws the paths of user `user_index`. Depends only on the environment seed
/// and the index.
pub fn sample_user_channel(env: &Environment, user_index: u64) -> PathParams {
    let spec = &env.spec;
    let mut rng = rng::stream(spec.seed, Domain::UserPaths, user_index);
    let [lo, hi] = spec.n_paths_range;
    let n_paths = rng.random_range(lo..=hi);
    let mut gains = Vec::with_capacity(n_paths);
    let mut delays = Vec::with_capacity(n_paths);
    let mut phases = Vec::with_capacity(n_paths);
    for &base in &env.base_delays[..n_paths] {
        let jitter: f64 = StandardNormal.sample(&mut rng);
        let delay = (base + spec.delay_jitter_s * jitter).clamp(0.0, spec.delay_spread_s);
        let u = rng.random_range(0.5..=1.0);
        gains.push(path_gain(delay, spec.delay_spread_s, spec.gain_decay, u));
        delays.push(delay);
        phases.push(rng.random::<f64>() * TAU);
    }
    PathParams { gains, delays, phases }
}

/// Channel frequency response on the `L` subcarriers at carrier `f`:
/// `H(f, l) = sum_n a_n exp(-j 2 pi f tau_n + j phi_n) exp(-j 2 pi n l / L)`.
pub fn cfr(paths: &PathParams, f: f64, cfg: &OfdmConfig) -> Vec<Complex64> {
    let l_count = cfg.n_subcarriers;
    let taps: Vec<Complex64> = paths
        .gains
        .iter()
        .zip(&paths.delays)
        .zip(&paths.phases)
        .map(|((&a, &tau), &phi)| {
            // reduce f*tau to its fractional cycle before scaling by 2*pi
            let cycles = math::fract_pos(f * tau);
            let (s, c) = math::sin_cos(phi - TAU * cycles);
            Complex64::new(a * c, a * s)
        })
        .collect();
    let twiddles: Vec<Complex64> = (0..l_count)
        .map(|k| {
            let (s, c) = math::sin_cos(-TAU * k as f64 / l_count as f64);
            Complex64::new(c, s)
        })
        .collect();
    (0..l_count)
        .map(|l| {
            taps.iter()
                .enumerate()
                .fold(Complex64::new(0.0, 0.0), |acc, (n, &tap)| acc + tap * twiddles[(n * l) % l_count])
        })
        .collect()
}

/// Adds circularly symmetric complex Gaussian estimation error with
/// per-element variance `mean(|h|^2) / 10^(snr_db / 10)`. `snr_db = +inf`
/// disables the noise.
pub fn add_estimation_noise(h: &[Complex64], snr_db: f64, rng: &mut StreamRng) -> Vec<Complex64> {
    if snr_db == f64::INFINITY || h.is_empty() {
        return h.to_vec();
    }
    let power = h.iter().map(|v| v.norm_sqr()).sum::<f64>() / h.len() as f64;
    let sigma = math::sqrt(power / math::db_to_linear(snr_db) / 2.0);
    h.iter()
        .map(|&v| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            v + Complex64::new(sigma * re, sigma * im)
        })
        .collect()
}

/// Link direction. Each band gets its own noise stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Band {
    Uplink = 0,
    Downlink = 1,
}

pub fn noise_stream(env_seed: u64, user_index: u64, band: Band) -> StreamRng {
    rng::stream(env_seed, Domain::EstimationNoise, (user_index << 1) | band as u64)
}

/// Alice's uplink and Bob's downlink estimate for one user.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPair {
    pub h_ul: Vec<Complex64>,
    pub h_dl: Vec<Complex64>,
    pub snr_db: f64,
}

/// Uplink/downlink estimate pairs for a contiguous block of users of one
/// environment, stored flat (`n_samples x L`).
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentDataset {
    pub env_id: u32,
    pub snr_db: f64,
    pub first_user: u64,
    n_subcarriers: usize,
    uplink: Vec<Complex64>,
    downlink: Vec<Complex64>,
}

impl EnvironmentDataset {
    pub fn from_parts(
        env_id: u32,
        snr_db: f64,
        first_user: u64,
        n_subcarriers: usize,
        uplink: Vec<Complex64>,
        downlink: Vec<Complex64>,
    ) -> Result<Self> {
        if n_subcarriers == 0 {
            return Err(Error::config("n_subcarriers must be positive"));
        }
        Error::check_dim(uplink.len(), downlink.len())?;
        if !uplink.len().is_multiple_of(n_subcarriers) {
            return Err(Error::Dimension { expected: n_subcarriers, actual: uplink.len() % n_subcarriers });
        }
        Ok(Self { env_id, snr_db, first_user, n_subcarriers, uplink, downlink })
    }

    pub fn len(&self) -> usize {
        self.uplink.len() / self.n_subcarriers
    }

    pub fn is_empty(&self) -> bool {
        self.uplink.is_empty()
    }

    pub fn n_subcarriers(&self) -> usize {
        self.n_subcarriers
    }

    pub fn uplink(&self, i: usize) -> &[Complex64] {
        &self.uplink[i * self.n_subcarriers..(i + 1) * self.n_subcarriers]
    }

    pub fn downlink(&self, i: usize) -> &[Complex64] {
        &self.downlink[i * self.n_subcarriers..(i + 1) * self.n_subcarriers]
    }

    pub fn pair(&self, i: usize) -> ChannelPair {
        ChannelPair { h_ul: self.uplink(i).to_vec(), h_dl: self.downlink(i).to_vec(), snr_db: self.snr_db }
    }

    /// Raw (unnormalized) uplink features, one row per sample.
    pub fn uplink_features(&self) -> Matrix {
        self.features(&self.uplink)
    }

    pub fn downlink_features(&self) -> Matrix {
        self.features(&self.downlink)
    }

    fn features(&self, flat: &[Complex64]) -> Matrix {
        let dim = 2 * self.n_subcarriers;
        let mut data = Vec::with_capacity(self.len() * dim);
        for h in flat.chunks_exact(self.n_subcarriers) {
            data.extend(complex_to_features(h));
        }
        Matrix::from_vec(self.len(), dim, data).expect("feature rows have width 2L")
    }
}

/// Generates the estimate pair of one user.
pub fn generate_pair(env: &Environment, user_index: u64, snr_db: f64, cfg: &OfdmConfig) -> ChannelPair {
    let paths = sample_user_channel(env, user_index);
    let h_ul = cfr(&paths, cfg.f_ul_hz, cfg);
    let h_dl = cfr(&paths, cfg.f_dl_hz, cfg);
    let mut rng_a = noise_stream(env.seed(), user_index, Band::Uplink);
    let mut rng_b = noise_stream(env.seed(), user_index, Band::Downlink);
    ChannelPair {
        h_ul: add_estimation_noise(&h_ul, snr_db, &mut rng_a),
        h_dl: add_estimation_noise(&h_dl, snr_db, &mut rng_b),
        snr_db,
    }
}

/// Users `first_user .. first_user + n_samples` of `env` at the given SNR.
pub fn generate_env_range(
    env: &Environment,
    first_user: u64,
    n_samples: usize,
    snr_db: f64,
    cfg: &OfdmConfig,
) -> Result<EnvironmentDataset> {
    cfg.validate()?;
    if n_samples == 0 {
        return Err(Error::Empty("dataset sample count"));
    }
    let l = cfg.n_subcarriers;
    let mut uplink = Vec::with_capacity(n_samples * l);
    let mut downlink = Vec::with_capacity(n_samples * l);
    for i in 0..n_samples as u64 {
        let pair = generate_pair(env, first_user + i, snr_db, cfg);
        uplink.extend(pair.h_ul);
        downlink.extend(pair.h_dl);
    }
    EnvironmentDataset::from_parts(env.spec.env_id, snr_db, first_user, l, uplink, downlink)
}

pub fn generate_env_dataset(
    env: &Environment,
    n_samples: usize,
    snr_db: f64,
    cfg: &OfdmConfig,
) -> Result<EnvironmentDataset> {
    generate_env_range(env, 0, n_samples, snr_db, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn single_path(alpha: f64, tau: f64, phi: f64) -> PathParams {
        PathParams { gains: alloc::vec![alpha], delays: alloc::vec![tau], phases: alloc::vec![phi] }
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn zero_delay_single_path_is_flat_unity() {
        let cfg = OfdmConfig::default();
        let h = cfr(&single_path(1.0, 0.0, 0.0), cfg.f_ul_hz, &cfg);
        assert_eq!(h.len(), 64);
        assert!(h.iter().all(|&v| close(v, Complex64::new(1.0, 0.0), 1e-15)));
    }

    #[test]
    fn pure_phase_path() {
        let cfg = OfdmConfig::default();
        let h = cfr(&single_path(1.0, 0.0, PI / 2.0), cfg.f_ul_hz, &cfg);
        assert!(h.iter().all(|&v| close(v, Complex64::new(0.0, 1.0), 1e-15)));
    }

    #[test]
    fn two_path_scalar_evaluation() {
        // f*tau_1 = 2.4e9 * 50e-9 = 120 whole cycles, so only the tap index rotates.
        let cfg = OfdmConfig::default();
        let paths = PathParams {
            gains: alloc::vec![1.0, 0.5],
            delays: alloc::vec![0.0, 50e-9],
            phases: alloc::vec![0.0, 0.0],
        };
        let h = cfr(&paths, 2.4e9, &cfg);
        assert!(close(h[0], Complex64::new(1.5, 0.0), 1e-12));
        let expected = Complex64::new(1.0, 0.0) + Complex64::from_polar(0.5, -PI / 32.0);
        assert!(close(h[1], expected, 1e-12));
    }

    #[test]
    fn cfr_is_linear_in_gains() {
        let env = build_environment(&EnvironmentSpec::new(1, 3)).unwrap();
        let cfg = OfdmConfig::default();
        let p = sample_user_channel(&env, 5);
        let mut doubled = p.clone();
        doubled.gains.iter_mut().for_each(|g| *g *= 2.0);
        let a = cfr(&p, cfg.f_dl_hz, &cfg);
        let b = cfr(&doubled, cfg.f_dl_hz, &cfg);
        for (x, y) in a.iter().zip(&b) {
            assert!(close(*x * 2.0, *y, 1e-12));
        }
    }

    #[test]
    fn build_is_deterministic_and_validated() {
        let spec = EnvironmentSpec::new(0, 7);
        assert_eq!(build_environment(&spec).unwrap(), build_environment(&spec).unwrap());
        let mut bad = spec.clone();
        bad.n_paths_range = [5, 3];
        assert!(matches!(build_environment(&bad), Err(Error::Config(_))));
        bad.n_paths_range = [0, 3];
        assert!(build_environment(&bad).is_err());
    }

    #[test]
    fn forced_path_count() {
        let mut spec = EnvironmentSpec::new(0, 11);
        spec.n_paths_range = [3, 3];
        let env = build_environment(&spec).unwrap();
        for i in 0..50 {
            let p = sample_user_channel(&env, i);
            assert_eq!(p.len(), 3);
            p.validate().unwrap();
        }
    }

    #[test]
    fn seeds_change_layout() {
        let a = build_environment(&EnvironmentSpec::new(0, 1)).unwrap();
        let b = build_environment(&EnvironmentSpec::new(0, 2)).unwrap();
        let differs = (0..100).any(|i| sample_user_channel(&a, i).gains != sample_user_channel(&b, i).gains);
        assert!(differs);
    }

    #[test]
    fn user_sampling_is_deterministic_and_in_range() {
        let spec = EnvironmentSpec::new(0, 9);
        let env = build_environment(&spec).unwrap();
        assert_eq!(sample_user_channel(&env, 42), sample_user_channel(&env, 42));
        let mut max_delay: f64 = 0.0;
        for i in 0..10_000 {
            let p = sample_user_channel(&env, i);
            for ((&g, &d), &ph) in p.gains.iter().zip(&p.delays).zip(&p.phases) {
                assert!(g > 0.0);
                assert!(d >= 0.0);
                assert!((0.0..TAU).contains(&ph));
                max_delay = max_delay.max(d);
            }
        }
        assert!(max_delay <= spec.delay_spread_s);
    }

    #[test]
    fn infinite_decay_with_unit_scatter_gives_unit_gains() {
        for d in [0.0, 1e-7, 3e-7] {
            assert_eq!(path_gain(d, 3e-7, f64::INFINITY, 1.0), 1.0);
        }
    }

    #[test]
    fn noise_disabled_and_variance() {
        let h: Vec<Complex64> = (0..8).map(|i| Complex64::from_polar(1.0, i as f64)).collect();
        let mut r = rng::stream(1, Domain::EstimationNoise, 0);
        assert_eq!(add_estimation_noise(&h, f64::INFINITY, &mut r), h);

        // unit power at 20 dB: per-element variance 0.01
        let n = 100_000;
        let ones = alloc::vec![Complex64::new(1.0, 0.0); n];
        let noisy = add_estimation_noise(&ones, 20.0, &mut r);
        let var = noisy.iter().map(|v| (v - Complex64::new(1.0, 0.0)).norm_sqr()).sum::<f64>() / n as f64;
        assert!((var - 0.01).abs() / 0.01 < 0.02, "variance {var}");

        let noisy0 = add_estimation_noise(&ones, 0.0, &mut r);
        let var0 = noisy0.iter().map(|v| (v - Complex64::new(1.0, 0.0)).norm_sqr()).sum::<f64>() / n as f64;
        assert!((var0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn reciprocal_limit_without_noise() {
        let env = build_environment(&EnvironmentSpec::new(0, 4)).unwrap();
        let cfg = OfdmConfig { f_dl_hz: 2.4e9, ..OfdmConfig::default() };
        let ds = generate_env_dataset(&env, 20, f64::INFINITY, &cfg).unwrap();
        for i in 0..ds.len() {
            assert_eq!(ds.uplink(i), ds.downlink(i));
        }
    }

    #[test]
    fn sample_alone_equals_sample_in_batch() {
        let env = build_environment(&EnvironmentSpec::new(0, 4)).unwrap();
        let cfg = OfdmConfig::default();
        let batch = generate_env_dataset(&env, 10, 20.0, &cfg).unwrap();
        let alone = generate_env_range(&env, 7, 1, 20.0, &cfg).unwrap();
        assert_eq!(batch.pair(7), alone.pair(0));
        assert_eq!(batch, generate_env_dataset(&env, 10, 20.0, &cfg).unwrap());
    }
}
