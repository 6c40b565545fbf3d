//! On-disk formats: channel datasets, trained models and key dumps.
//!
//! Binary files are little-endian. Datasets start with `FDKG-DS`, models with
//! `FDKG-NN`, each followed by a `u32` format version.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use fdkg_core::channel::{EnvironmentDataset, EnvironmentSpec, OfdmConfig};
use fdkg_core::features::Normalizer;
use fdkg_core::nn::{NetworkParams, OutputActivation};
use fdkg_core::randomness::BitStream;
use fdkg_core::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{FdkgError, Result};

pub const DATASET_MAGIC: &[u8; 7] = b"FDKG-DS";
pub const MODEL_MAGIC: &[u8; 7] = b"FDKG-NN";
pub const FORMAT_VERSION: u32 = 1;

/// Sequential reader over a byte buffer that fails instead of panicking.
struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| FdkgError::format(format!("truncated file: needed {n} bytes at offset {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = n.checked_mul(8).ok_or_else(|| FdkgError::format("length overflow"))?;
        Ok(self.take(bytes)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn expect_header(&mut self, magic: &[u8; 7]) -> Result<()> {
        if self.take(7).ok() != Some(&magic[..]) {
            return Err(FdkgError::format(format!("bad magic, expected {}", String::from_utf8_lossy(magic))));
        }
        match self.u32()? {
            FORMAT_VERSION => Ok(()),
            v => Err(FdkgError::format(format!("unsupported format version {v}"))),
        }
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(FdkgError::format(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

fn put_f64s(out: &mut Vec<u8>, xs: impl IntoIterator<Item = f64>) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| FdkgError::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| FdkgError::io(path, e))
}

/// Uplink then downlink estimate of every sample, `(re, im)` per subcarrier.
pub fn encode_dataset(ds: &EnvironmentDataset) -> Vec<u8> {
    let l = ds.n_subcarriers();
    let mut out = Vec::with_capacity(23 + ds.len() * l * 32);
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(l as u32).to_le_bytes());
    out.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    for i in 0..ds.len() {
        for h in [ds.uplink(i), ds.downlink(i)] {
            put_f64s(&mut out, h.iter().flat_map(|c| [c.re, c.im]));
        }
    }
    out
}

/// Everything the binary file does not carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub environment: EnvironmentSpec,
    pub ofdm: OfdmConfig,
    pub snr_db: Option<f64>,
    pub first_user: u64,
}

pub fn decode_dataset(bytes: &[u8], meta: &DatasetSidecar) -> Result<EnvironmentDataset> {
    let mut c = Cursor::new(bytes);
    c.expect_header(DATASET_MAGIC)?;
    let l = c.u32()? as usize;
    let n = c.u64()? as usize;
    if l == 0 {
        return Err(FdkgError::format("zero subcarriers"));
    }
    if l != meta.ofdm.n_subcarriers {
        return Err(FdkgError::format(format!("file has {l} subcarriers, sidecar {}", meta.ofdm.n_subcarriers)));
    }
    let mut ul = Vec::with_capacity(n.saturating_mul(l).min(1 << 24));
    let mut dl = Vec::with_capacity(ul.capacity());
    let to_c = |v: Vec<f64>| v.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect::<Vec<_>>();
    for _ in 0..n {
        ul.extend(to_c(c.f64s(2 * l)?));
        dl.extend(to_c(c.f64s(2 * l)?));
    }
    c.finish()?;
    let snr = meta.snr_db.unwrap_or(f64::INFINITY);
    Ok(EnvironmentDataset::from_parts(meta.environment.env_id, snr, meta.first_user, l, ul, dl)?)
}

/// Path of the JSON sidecar belonging to a dataset file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

pub fn save_dataset(path: &Path, ds: &EnvironmentDataset, spec: &EnvironmentSpec, ofdm: &OfdmConfig) -> Result<()> {
    write_file(path, &encode_dataset(ds))?;
    let meta = DatasetSidecar {
        environment: spec.clone(),
        ofdm: ofdm.clone(),
        snr_db: ds.snr_db.is_finite().then_some(ds.snr_db),
        first_user: ds.first_user,
    };
    write_file(&sidecar_path(path), serde_json::to_string_pretty(&meta).expect("sidecar serializes").as_bytes())
}

pub fn load_dataset(path: &Path) -> Result<(EnvironmentDataset, DatasetSidecar)> {
    let side = sidecar_path(path);
    let meta: DatasetSidecar = serde_json::from_slice(&read_file(&side)?)
        .map_err(|e| FdkgError::format(format!("{}: {e}", side.display())))?;
    Ok((decode_dataset(&read_file(path)?, &meta)?, meta))
}

/// Dims, then per layer row-major weights and biases, then the input
/// normalizer's column minima and maxima.
pub fn encode_model(net: &NetworkParams, normalizer: &Normalizer) -> Result<Vec<u8>> {
    if net.output_activation() != OutputActivation::Sigmoid {
        return Err(FdkgError::format("only sigmoid-output networks can be stored"));
    }
    let dims = net.dims();
    if normalizer.dim() != dims[0] {
        return Err(FdkgError::format(format!("normalizer width {} != input width {}", normalizer.dim(), dims[0])));
    }
    let mut out = Vec::with_capacity(19 + 4 * dims.len() + 8 * (net.n_params() + 2 * dims[0]));
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for m in 0..net.n_layers() {
        put_f64s(&mut out, net.weight(m).iter().copied());
        put_f64s(&mut out, net.bias(m).iter().copied());
    }
    put_f64s(&mut out, normalizer.col_min.iter().copied());
    put_f64s(&mut out, normalizer.col_max.iter().copied());
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<(NetworkParams, Normalizer)> {
    let mut c = Cursor::new(bytes);
    c.expect_header(MODEL_MAGIC)?;
    let n_dims = c.u32()? as usize;
    if !(2..=64).contains(&n_dims) {
        return Err(FdkgError::format(format!("implausible layer count {n_dims}")));
    }
    let dims = (0..n_dims).map(|_| c.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    if dims.iter().any(|&d| d == 0) {
        return Err(FdkgError::format("zero-width layer"));
    }
    let mut params = Vec::new();
    for w in dims.windows(2) {
        params.extend(c.f64s(w[0] * w[1] + w[1])?);
    }
    let col_min = c.f64s(dims[0])?;
    let col_max = c.f64s(dims[0])?;
    c.finish()?;
    let net = NetworkParams::from_parts(&dims, params, OutputActivation::Sigmoid)
        .map_err(|e| FdkgError::format(e.to_string()))?;
    let norm = Normalizer::from_bounds(col_min, col_max).map_err(|e| FdkgError::format(e.to_string()))?;
    Ok((net, norm))
}

pub fn save_model(path: &Path, net: &NetworkParams, normalizer: &Normalizer) -> Result<()> {
    write_file(path, &encode_model(net, normalizer)?)
}

pub fn load_model(path: &Path) -> Result<(NetworkParams, Normalizer)> {
    decode_model(&read_file(path)?)
}

/// One line of `0`/`1` characters per key.
pub fn write_key_dump(path: &Path, keys: &[Vec<u8>]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| FdkgError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for k in keys {
        let line: String = k.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect();
        writeln!(w, "{line}").map_err(|e| FdkgError::io(path, e))?;
    }
    w.flush().map_err(|e| FdkgError::io(path, e))
}

/// Reads a key dump, skipping blank lines.
pub fn read_key_dump(path: &Path) -> Result<Vec<BitStream>> {
    let file = fs::File::open(path).map_err(|e| FdkgError::io(path, e))?;
    let mut keys = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| FdkgError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        keys.push(BitStream::from_ascii(&line).map_err(|e| FdkgError::format(format!("line {}: {e}", i + 1)))?);
    }
    Ok(keys)
}

/// Concatenates `bits` and cuts it into at most `max_keys` keys of `key_bits`;
/// a short tail is dropped.
pub fn chunk_keys(bits: &[u8], key_bits: usize, max_keys: usize) -> Vec<Vec<u8>> {
    bits.chunks_exact(key_bits).take(max_keys).map(<[u8]>::to_vec).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use fdkg_core::channel::{build_environment, generate_env_dataset};
    use fdkg_core::features::fit_normalizer;
    use fdkg_core::matrix::Matrix;
    use fdkg_core::nn::init_network;

    fn small_dataset() -> (EnvironmentDataset, EnvironmentSpec, OfdmConfig) {
        let spec = EnvironmentSpec::new(4, 77);
        let ofdm = OfdmConfig { n_subcarriers: 8, ..OfdmConfig::default() };
        let env = build_environment(&spec).unwrap();
        (generate_env_dataset(&env, 5, 10.0, &ofdm).unwrap(), spec, ofdm)
    }

    #[test]
    fn dataset_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        let (ds, spec, ofdm) = small_dataset();
        save_dataset(&path, &ds, &spec, &ofdm).unwrap();
        let (back, meta) = load_dataset(&path).unwrap();
        assert_eq!(back, ds);
        assert_eq!(meta.environment, spec);
        let bytes = fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 7 + 4 + 4 + 8 + 5 * 2 * 8 * 16);
    }

    #[test]
    fn dataset_rejects_corruption() {
        let (ds, spec, ofdm) = small_dataset();
        let meta = DatasetSidecar { environment: spec, ofdm, snr_db: Some(10.0), first_user: 0 };
        let bytes = encode_dataset(&ds);
        assert!(decode_dataset(&bytes[..bytes.len() - 3], &meta).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_dataset(&bad, &meta).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode_dataset(&extra, &meta).is_err());
    }

    fn model() -> (NetworkParams, Normalizer) {
        let net = init_network(&[4, 6, 4], 3).unwrap();
        let train = Matrix::from_rows(&[[0.0, 1.0, 2.0, 3.0], [1.0, -1.0, 0.5, 9.0]]).unwrap();
        (net, fit_normalizer(&train).unwrap())
    }

    #[test]
    fn model_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.fdkg");
        let (net, norm) = model();
        save_model(&path, &net, &norm).unwrap();
        let (n2, m2) = load_model(&path).unwrap();
        assert_eq!(n2, net);
        assert_eq!(m2, norm);
        let x = [0.1, 0.7, 0.3, 0.9];
        let (a, b) = (net.forward(&x).unwrap(), n2.forward(&x).unwrap());
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn model_format_errors() {
        let (net, norm) = model();
        let bytes = encode_model(&net, &norm).unwrap();
        for cut in [0, 5, 11, 30, bytes.len() - 1] {
            assert!(matches!(decode_model(&bytes[..cut]), Err(FdkgError::Format(_))), "cut {cut}");
        }
        let mut v = bytes.clone();
        v[7] = 9;
        assert!(matches!(decode_model(&v), Err(FdkgError::Format(_))));
        let mut m = bytes;
        m[3] = b'?';
        assert!(matches!(decode_model(&m), Err(FdkgError::Format(_))));
    }

    #[test]
    fn full_size_model_file_is_about_25_mb() {
        let dims = fdkg_core::nn::layer_dims(128, &fdkg_core::nn::FULL_HIDDEN);
        let params: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let bytes = 7 + 4 + 4 + 4 * dims.len() + 8 * (params + 2 * 128);
        let reported = 25.6e6;
        assert!((bytes as f64) < 2.0 * reported && (bytes as f64) > reported / 2.0);
    }

    #[test]
    fn key_dump_roundtrip_and_chunking() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("keys.txt");
        let keys = vec![vec![0, 1, 1], vec![1, 0, 0, 1]];
        write_key_dump(&path, &keys).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "011\n1001\n");
        let back = read_key_dump(&path).unwrap();
        assert_eq!(back[1].bits(), &[1, 0, 0, 1]);
        assert_eq!(chunk_keys(&[1, 0, 1, 1, 0, 0, 1], 3, 10), vec![vec![1, 0, 1], vec![1, 0, 0]]);
        assert_eq!(chunk_keys(&[1, 0, 1, 1, 0, 0, 1], 3, 1).len(), 1);
    }
}
