//! Guard-band quantization of feature vectors into initial key bits.
//!
//! Each party fits `N(mu, sigma^2)` to its own feature vector and keeps only
//! values outside `[mu + sigma z(0.5 - eps), mu + sigma z(0.5 + eps)]`: low
//! values become 0, high values 1. The retained positions are then intersected
//! (the public index exchange that precedes reconciliation) to get aligned keys.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

pub use crate::special::inverse_normal_cdf;

/// Standard deviations below this make a vector unquantizable.
pub const MIN_SIGMA: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerConfig {
    /// Quantization factor; `2 * epsilon` of the fitted mass is discarded.
    pub epsilon: f64,
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        Self { epsilon: 0.1 }
    }
}

impl QuantizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.epsilon) {
            return Err(Error::config(alloc::format!("epsilon {} outside [0, 0.5)", self.epsilon)));
        }
        Ok(())
    }

    /// Standard-normal guard thresholds `(z(0.5 - eps), z(0.5 + eps))`.
    pub fn z_thresholds(&self) -> Result<(f64, f64)> {
        self.validate()?;
        Ok((inverse_normal_cdf(0.5 - self.epsilon)?, inverse_normal_cdf(0.5 + self.epsilon)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Party {
    Alice,
    Bob,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyMaterial {
    /// One bit (0 or 1) per retained position, in index order.
    pub bits: Vec<u8>,
    pub retained_mask: Vec<bool>,
    pub party: Party,
    /// Set when the vector had (near) zero spread and nothing was retained.
    pub degenerate: bool,
}

impl KeyMaterial {
    pub fn retained(&self) -> usize {
        self.bits.len()
    }
}

/// Mean and population standard deviation.
fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, math::sqrt(var))
}

pub fn quantize_guardband(x: &[f64], cfg: &QuantizerConfig, party: Party) -> Result<KeyMaterial> {
    if x.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, available: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature vector"));
    }
    let (z_lo, z_hi) = cfg.z_thresholds()?;
    let (mu, sigma) = mean_std(x);
    if sigma < MIN_SIGMA {
        return Ok(KeyMaterial {
            bits: Vec::new(),
            retained_mask: alloc::vec![false; x.len()],
            party,
            degenerate: true,
        });
    }
    let (t_lo, t_hi) = (mu + sigma * z_lo, mu + sigma * z_hi);
    let mut bits = Vec::with_capacity(x.len());
    let retained_mask = x
        .iter()
        .map(|&v| {
            if v <= t_lo {
                bits.push(0);
                true
            } else if v >= t_hi {
                bits.push(1);
                true
            } else {
                false
            }
        })
        .collect();
    Ok(KeyMaterial { bits, retained_mask, party, degenerate: false })
}

/// Bits of both parties restricted to the positions both retained.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedKeys {
    pub indices: Vec<usize>,
    pub bits_a: Vec<u8>,
    pub bits_b: Vec<u8>,
}

impl AlignedKeys {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub fn align_keys(a: &KeyMaterial, b: &KeyMaterial) -> Result<AlignedKeys> {
    Error::check_dim(a.retained_mask.len(), b.retained_mask.len())?;
    let mut out = AlignedKeys { indices: Vec::new(), bits_a: Vec::new(), bits_b: Vec::new() };
    let (mut ia, mut ib) = (0usize, 0usize);
    for (idx, (&ka, &kb)) in a.retained_mask.iter().zip(&b.retained_mask).enumerate() {
        if ka && kb {
            out.indices.push(idx);
            out.bits_a.push(a.bits[ia]);
            out.bits_b.push(b.bits[ib]);
        }
        ia += ka as usize;
        ib += kb as usize;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyErrorRate {
    pub ratio: f64,
    pub errors: usize,
    pub length: usize,
    /// No aligned bits; the ratio is reported as 1.0.
    pub empty: bool,
}

/// Hamming distance over length. An empty key has no usable bits and scores 1.
pub fn key_error_rate(bits_a: &[u8], bits_b: &[u8]) -> Result<KeyErrorRate> {
    Error::check_dim(bits_a.len(), bits_b.len())?;
    if bits_a.is_empty() {
        return Ok(KeyErrorRate { ratio: 1.0, errors: 0, length: 0, empty: true });
    }
    let errors = bits_a.iter().zip(bits_b).filter(|(x, y)| x != y).count();
    Ok(KeyErrorRate { ratio: errors as f64 / bits_a.len() as f64, errors, length: bits_a.len(), empty: false })
}

/// Aligned key bits per subcarrier; at most 2 when every feature survives.
pub fn key_generation_ratio(aligned_length: usize, n_subcarriers: usize) -> f64 {
    assert!(n_subcarriers > 0, "n_subcarriers must be positive");
    aligned_length as f64 / n_subcarriers as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn km(mask: &[u8]) -> KeyMaterial {
        let retained_mask: Vec<bool> = mask.iter().map(|&m| m == 1).collect();
        let bits = mask.iter().enumerate().filter(|(_, &m)| m == 1).map(|(i, _)| (i % 2) as u8).collect();
        KeyMaterial { bits, retained_mask, party: Party::Alice, degenerate: false }
    }

    #[test]
    fn zero_epsilon_keeps_everything() {
        let x = [0.3, -1.0, 2.0, 0.1, 0.7];
        let k = quantize_guardband(&x, &QuantizerConfig { epsilon: 0.0 }, Party::Bob).unwrap();
        let mu = x.iter().sum::<f64>() / 5.0;
        assert_eq!(k.retained(), 5);
        let expect: Vec<u8> = x.iter().map(|&v| (v > mu) as u8).collect();
        assert_eq!(k.bits, expect);
    }

    #[test]
    fn unit_gaussian_thresholds() {
        let (lo, hi) = QuantizerConfig::default().z_thresholds().unwrap();
        assert!((lo + 0.2533471031357997).abs() < 1e-9);
        assert!((hi - 0.2533471031357997).abs() < 1e-9);
        // a vector with mean 0 and population std 1 that contains 0.30 and 0.00
        let x = [0.30, 0.00, -0.30, 1.2, -1.2, 1.6, -1.6];
        let (m, s) = mean_std(&x);
        let z: Vec<f64> = x.iter().map(|v| (v - m) / s).collect();
        let k = quantize_guardband(&z, &QuantizerConfig::default(), Party::Alice).unwrap();
        assert!(k.retained_mask[0]);
        assert_eq!(k.bits[0], 1);
        assert!(!k.retained_mask[1]);
    }

    #[test]
    fn degenerate_and_invalid_inputs() {
        let k = quantize_guardband(&[0.5; 8], &QuantizerConfig::default(), Party::Alice).unwrap();
        assert!(k.degenerate);
        assert_eq!(k.retained(), 0);
        assert!(quantize_guardband(&[1.0], &QuantizerConfig::default(), Party::Alice).is_err());
        assert!(quantize_guardband(&[1.0, 2.0], &QuantizerConfig { epsilon: 0.5 }, Party::Alice).is_err());
    }

    #[test]
    fn alignment_cases() {
        let a = km(&[1, 1, 0, 1]);
        let b = km(&[1, 0, 1, 1]);
        let al = align_keys(&a, &b).unwrap();
        assert_eq!(al.indices, [0, 3]);
        assert_eq!(al.len(), 2);
        assert_eq!(align_keys(&a, &a).unwrap().len(), 3);
        assert!(align_keys(&km(&[1, 0]), &km(&[0, 1])).unwrap().is_empty());
    }

    #[test]
    fn error_rates() {
        let k = vec![1u8; 128];
        assert_eq!(key_error_rate(&k, &k).unwrap().ratio, 0.0);
        let c = vec![0u8; 128];
        assert_eq!(key_error_rate(&k, &c).unwrap().ratio, 1.0);
        let mut d = vec![0u8; 100];
        d[3] = 1;
        d[50] = 1;
        assert_eq!(key_error_rate(&d, &vec![0u8; 100]).unwrap().ratio, 0.02);
        let empty = key_error_rate(&[], &[]).unwrap();
        assert!(empty.empty && empty.ratio == 1.0);
        assert!(key_error_rate(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn generation_ratio() {
        assert_eq!(key_generation_ratio(128, 64), 2.0);
        assert_eq!(key_generation_ratio(0, 64), 0.0);
    }

    proptest! {
        #[test]
        fn retained_count_monotone_in_epsilon(x in proptest::collection::vec(-5.0f64..5.0, 4..64),
                                              e1 in 0.0f64..0.49, e2 in 0.0f64..0.49) {
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let a = quantize_guardband(&x, &QuantizerConfig { epsilon: lo }, Party::Alice).unwrap();
            let b = quantize_guardband(&x, &QuantizerConfig { epsilon: hi }, Party::Alice).unwrap();
            prop_assert!(a.retained() >= b.retained());
        }

        #[test]
        fn identical_features_agree(x in proptest::collection::vec(-5.0f64..5.0, 4..64), eps in 0.0f64..0.49) {
            let cfg = QuantizerConfig { epsilon: eps };
            let a = quantize_guardband(&x, &cfg, Party::Alice).unwrap();
            let b = quantize_guardband(&x, &cfg, Party::Bob).unwrap();
            let al = align_keys(&a, &b).unwrap();
            if !al.is_empty() {
                prop_assert_eq!(key_error_rate(&al.bits_a, &al.bits_b).unwrap().ratio, 0.0);
            }
        }
    }
}
