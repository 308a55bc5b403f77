//! Binary network checkpoints.
//!
//! ```text
//! "PSNNCKPT"              8 bytes
//! version                 u32 LE (1)
//! header length           u32 LE
//! header                  UTF-8 JSON (architecture, seed, amplitudes, counters, payload sizes)
//! f64 LE payload          per weight layer: weights (row-major), biases;
//!                         then cross weights; then per hidden layer: field sums
//! u16 LE payload          cross first indices, then cross second indices
//! ```
//! A plain-text summary can be written next to the checkpoint.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, FieldAccumulator, ForwardState, Network, NetworkError};
use crate::data::CrossMap;

const MAGIC: &[u8; 8] = b"PSNNCKPT";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a network checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("checkpoint truncated: need {expected} bytes, have {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{0} trailing bytes after checkpoint payload")]
    TrailingBytes(usize),
    #[error("checkpoint shape: {0}")]
    Shape(#[from] NetworkError),
    #[error("checkpoint header inconsistent: {0}")]
    Inconsistent(String),
}

/// A network with its forward-state accumulators and the amplitudes it was
/// trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub state: ForwardState,
    pub field_amplitude: Vec<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    architecture: Architecture,
    seed: Option<u64>,
    field_amplitude: Vec<f64>,
    counters: Vec<u64>,
    frozen: bool,
    payload_f64: usize,
    payload_u16: usize,
}

impl Checkpoint {
    pub fn new(network: Network, state: ForwardState, field_amplitude: Vec<f64>, seed: Option<u64>) -> Self {
        Self { network, state, field_amplitude, seed }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let net = &self.network;
        let mut floats: Vec<f64> = Vec::with_capacity(net.architecture().n_parameters());
        for l in &net.layers {
            floats.extend_from_slice(&l.weights);
            floats.extend_from_slice(&l.bias);
        }
        floats.extend_from_slice(&net.cross_weights);
        for acc in &self.state.layers {
            floats.extend_from_slice(&acc.sum);
        }
        let mut shorts: Vec<u16> = Vec::new();
        let crosses = net.crosses();
        for pick in [0, 1] {
            for j in 0..crosses.n_units() {
                let (a, b) = crosses.unit(j);
                shorts.extend_from_slice(if pick == 0 { a } else { b });
            }
        }
        let header = Header {
            format: "powerscale-checkpoint".into(),
            architecture: net.architecture().clone(),
            seed: self.seed,
            field_amplitude: self.field_amplitude.clone(),
            counters: self.state.layers.iter().map(|a| a.count).collect(),
            frozen: self.state.frozen,
            payload_f64: floats.len(),
            payload_u16: shorts.len(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + header.len() + 8 * floats.len() + 2 * shorts.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for f in floats {
            out.extend_from_slice(&f.to_le_bytes());
        }
        for s in shorts {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let need = |n: usize| {
            if bytes.len() < n {
                Err(CheckpointError::Truncated { expected: n, found: bytes.len() })
            } else {
                Ok(())
            }
        };
        need(16)?;
        if &bytes[..8] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        need(16 + hlen)?;
        let header: Header = serde_json::from_slice(&bytes[16..16 + hlen])?;
        let body = 16 + hlen;
        let expected = body + 8 * header.payload_f64 + 2 * header.payload_u16;
        need(expected)?;
        if bytes.len() > expected {
            return Err(CheckpointError::TrailingBytes(bytes.len() - expected));
        }
        let arch = header.architecture;
        arch.validate()?;
        let n_hidden0 = arch.hidden[0];
        let n_cross = arch.n_crosses;
        if header.payload_u16 != 2 * n_hidden0 * n_cross
            || header.payload_f64 != arch.n_parameters() + arch.hidden.iter().sum::<usize>()
            || header.counters.len() != arch.hidden.len()
        {
            return Err(CheckpointError::Inconsistent("payload sizes do not match architecture".into()));
        }

        let mut floats = bytes[body..body + 8 * header.payload_f64]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut shorts = bytes[body + 8 * header.payload_f64..]
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes(c.try_into().unwrap()));

        let firsts: Vec<u16> = shorts.by_ref().take(n_hidden0 * n_cross).collect();
        let seconds: Vec<u16> = shorts.collect();
        let crosses = if n_cross == 0 {
            CrossMap::empty(n_hidden0)
        } else {
            let units: Vec<Vec<(u16, u16)>> = (0..n_hidden0)
                .map(|j| {
                    let r = j * n_cross..(j + 1) * n_cross;
                    firsts[r.clone()].iter().copied().zip(seconds[r].iter().copied()).collect()
                })
                .collect();
            if units.iter().flatten().any(|&(k, l)| k == l || k as usize >= arch.n_inputs || l as usize >= arch.n_inputs) {
                return Err(CheckpointError::Inconsistent("cross index out of range".into()));
            }
            CrossMap::from_pairs(&units)
        };

        let mut network = Network::zeros(arch.clone(), crosses)?;
        for l in &mut network.layers {
            l.weights.iter_mut().for_each(|w| *w = floats.next().unwrap());
            l.bias.iter_mut().for_each(|b| *b = floats.next().unwrap());
        }
        network.cross_weights.iter_mut().for_each(|w| *w = floats.next().unwrap());
        let mut state = ForwardState::new(&network);
        for (acc, &count) in state.layers.iter_mut().zip(&header.counters) {
            acc.sum.iter_mut().for_each(|s| *s = floats.next().unwrap());
            acc.count = count;
        }
        state.frozen = header.frozen;
        Ok(Self { network, state, field_amplitude: header.field_amplitude, seed: header.seed })
    }

    /// Human-readable description of the checkpoint.
    pub fn summary(&self) -> String {
        let net = &self.network;
        let arch = net.architecture();
        let mut s = String::new();
        let _ = writeln!(s, "architecture: {} inputs, {} crosses/unit, hidden {:?}, {} outputs", arch.n_inputs, arch.n_crosses, arch.hidden, arch.n_outputs);
        let _ = writeln!(s, "parameters: {}", arch.n_parameters());
        let _ = writeln!(s, "seed: {}", self.seed.map_or("none".to_string(), |v| v.to_string()));
        let _ = writeln!(s, "field amplitudes: {:?}", self.field_amplitude);
        let counters: Vec<u64> = self.state.layers.iter().map(|a: &FieldAccumulator| a.count).collect();
        let _ = writeln!(s, "field counters: {:?} (frozen: {})", counters, self.state.frozen);
        for (d, l) in net.layers.iter().enumerate() {
            let (m, sd) = moments(&l.weights);
            let (bm, _) = moments(&l.bias);
            let _ = writeln!(s, "W{}: {}x{} mean {:.6} std {:.6}; bias mean {:.6}", d + 1, l.n_out, l.n_in, m, sd, bm);
        }
        if !net.cross_weights.is_empty() {
            let (m, sd) = moments(&net.cross_weights);
            let _ = writeln!(s, "cross weights: {} mean {:.6} std {:.6}", net.cross_weights.len(), m, sd);
        }
        s
    }
}

fn moments(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

/// Write `ckpt` to `path` (via a temporary file) and `path.txt` alongside it.
pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    let io = |source| CheckpointError::Io { path: path.display().to_string(), source };
    crate::io::write_atomic(path, &ckpt.to_bytes()).map_err(io)?;
    let mut side = path.as_os_str().to_owned();
    side.push(".txt");
    crate::io::write_atomic(Path::new(&side), ckpt.summary().as_bytes()).map_err(io)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
    Checkpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_crosses, PreparedSet};
    use crate::network::{forward, init_weights, Mode};
    use crate::rng::{SeedTree, Stage};

    fn sample() -> Checkpoint {
        let train = PreparedSet::training(&crate::data::testutil::synthetic_set(2, 8)).unwrap();
        let crosses = generate_crosses(&mut SeedTree::new(1).rng(Stage::Crosses, &[]), 30, 5, &train).unwrap();
        let arch = Architecture::mnist(&[5, 4]).with_crosses(30);
        let net = init_weights(&arch, crosses, &mut SeedTree::new(1).rng(Stage::Init, &[])).unwrap();
        let mut state = ForwardState::new(&net);
        for i in 0..3 {
            forward(&net, &mut state, train.input(i), &[0.1, 0.2], Mode::Train).unwrap();
        }
        state.freeze();
        Checkpoint::new(net, state, vec![0.1, 0.2], Some(77))
    }

    #[test]
    fn bytes_round_trip() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back, c);
        assert!(c.summary().contains("crosses/unit"));
    }

    #[test]
    fn malformed_inputs() {
        let bytes = sample().to_bytes();
        assert!(matches!(Checkpoint::from_bytes(b"garbage-garbage-"), Err(CheckpointError::BadMagic)));
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]), Err(CheckpointError::Truncated { .. })));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(Checkpoint::from_bytes(&extra), Err(CheckpointError::TrailingBytes(1))));
        let mut v2 = bytes;
        v2[8] = 2;
        assert!(matches!(Checkpoint::from_bytes(&v2), Err(CheckpointError::UnsupportedVersion(2))));
    }

    #[test]
    fn file_round_trip_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let c = sample();
        write_checkpoint(&path, &c).unwrap();
        assert_eq!(read_checkpoint(&path).unwrap(), c);
        let side = fs::read_to_string(dir.path().join("net.ckpt.txt")).unwrap();
        assert!(side.contains("seed: 77"));
    }
}
