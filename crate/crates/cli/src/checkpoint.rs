//! Binary checkpoints.
//!
//! Layout (little-endian): magic `WSSR`, `u32` version, payload, then a
//! CRC-32 of everything before it. The payload holds the configuration text,
//! the step counter, the parameters, the walker ensemble with its RNG stream
//! positions, and the optimizer state.

use std::io::{self, Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use wssr_core::linalg::DenseMatrix;
use wssr_core::optimizers::{OptimizerState, SpringState, WssrState};
use wssr_core::svd::TruncatedSvd;

pub const MAGIC: &[u8; 4] = b"WSSR";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic bytes)")]
    BadMagic,
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint is truncated or corrupted (checksum mismatch)")]
    CorruptChecksum,
    #[error("malformed checkpoint payload: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Walker ensemble as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSnapshot {
    pub seed: u64,
    pub proposal_std: f64,
    pub burned_in: bool,
    pub accepted: u64,
    pub proposed: u64,
    pub last_acceptance: f64,
    /// `positions[w][i]` is electron `i` of walker `w`.
    pub positions: Vec<Vec<[f64; 3]>>,
    pub log_psi: Vec<f64>,
    pub word_positions: Vec<u128>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_text: String,
    /// Completed optimizer steps.
    pub step: u64,
    pub theta: Vec<f64>,
    pub ensemble: EnsembleSnapshot,
    pub optimizer: OptimizerState,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.write_u32::<LE>(v).unwrap();
    }
    fn u64(&mut self, v: u64) {
        self.0.write_u64::<LE>(v).unwrap();
    }
    fn len(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.0.write_f64::<LE>(v).unwrap();
    }
    fn f64s(&mut self, v: &[f64]) {
        self.len(v.len());
        v.iter().for_each(|x| self.f64(*x));
    }
    fn matrix(&mut self, m: &DenseMatrix) {
        self.len(m.rows());
        self.len(m.cols());
        m.as_slice().iter().for_each(|x| self.f64(*x));
    }
}

struct Reader<'a>(Cursor<&'a [u8]>);

impl Reader<'_> {
    fn u8(&mut self) -> io::Result<u8> {
        self.0.read_u8()
    }
    fn u32(&mut self) -> io::Result<u32> {
        self.0.read_u32::<LE>()
    }
    fn u64(&mut self) -> io::Result<u64> {
        self.0.read_u64::<LE>()
    }
    fn f64(&mut self) -> io::Result<f64> {
        self.0.read_f64::<LE>()
    }
    /// A length, bounded by the bytes left so corrupt input cannot trigger
    /// huge allocations.
    fn len(&mut self, elem_bytes: usize) -> Result<usize, CheckpointError> {
        let n = self.u64()? as usize;
        let left = self.0.get_ref().len() - self.0.position() as usize;
        if n.checked_mul(elem_bytes).is_none_or(|b| b > left) {
            return Err(CheckpointError::Malformed(format!("length {n} exceeds the remaining data")));
        }
        Ok(n)
    }
    fn f64s(&mut self) -> Result<Vec<f64>, CheckpointError> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64().map_err(Into::into)).collect()
    }
    fn matrix(&mut self) -> Result<DenseMatrix, CheckpointError> {
        let rows = self.u64()? as usize;
        let cols = self.u64()? as usize;
        let left = self.0.get_ref().len() - self.0.position() as usize;
        if rows.checked_mul(cols).and_then(|n| n.checked_mul(8)).is_none_or(|b| b > left) {
            return Err(CheckpointError::Malformed("matrix exceeds the remaining data".into()));
        }
        let data = (0..rows * cols).map(|_| self.f64()).collect::<io::Result<Vec<_>>>()?;
        DenseMatrix::from_column_major(rows, cols, data).map_err(|e| CheckpointError::Malformed(e.to_string()))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);

        w.len(self.config_text.len());
        w.0.extend_from_slice(self.config_text.as_bytes());
        w.u64(self.step);
        w.f64s(&self.theta);

        let e = &self.ensemble;
        w.u64(e.seed);
        w.f64(e.proposal_std);
        w.u8(e.burned_in as u8);
        w.u64(e.accepted);
        w.u64(e.proposed);
        w.f64(e.last_acceptance);
        w.len(e.positions.len());
        w.len(e.positions.first().map_or(0, Vec::len));
        for walker in &e.positions {
            walker.iter().flatten().for_each(|x| w.f64(*x));
        }
        e.log_psi.iter().for_each(|x| w.f64(*x));
        for p in &e.word_positions {
            w.0.write_u128::<LE>(*p).unwrap();
        }

        match &self.optimizer {
            OptimizerState::Stateless => w.u8(0),
            OptimizerState::Spring(s) => {
                w.u8(1);
                w.f64(s.mu);
                w.f64(s.tikhonov_eps);
                w.f64s(&s.prev_update);
            }
            OptimizerState::Wssr(s) => {
                w.u8(2);
                w.matrix(&s.obar);
                w.f64s(&s.lbar);
                w.u64(s.r_max as u64);
                w.u64(s.step);
                match &s.prev {
                    None => w.u8(0),
                    Some(svd) => {
                        w.u8(1);
                        w.matrix(&svd.u);
                        w.f64s(&svd.sigma);
                        w.matrix(&svd.v);
                    }
                }
            }
        }
        let crc = crc32fast::hash(&w.0);
        w.u32(crc);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(if MAGIC.starts_with(&bytes[..bytes.len().min(4)]) {
                CheckpointError::CorruptChecksum
            } else {
                CheckpointError::BadMagic
            });
        }
        if bytes.len() < 12 {
            return Err(CheckpointError::CorruptChecksum);
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(trailer.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(CheckpointError::CorruptChecksum);
        }
        let mut r = Reader(Cursor::new(body));
        r.0.set_position(4);
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::VersionMismatch { found: version, expected: VERSION });
        }

        let n = r.len(1)?;
        let mut text = vec![0; n];
        r.0.read_exact(&mut text)?;
        let config_text = String::from_utf8(text).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        let step = r.u64()?;
        let theta = r.f64s()?;

        let seed = r.u64()?;
        let proposal_std = r.f64()?;
        let burned_in = r.u8()? != 0;
        let accepted = r.u64()?;
        let proposed = r.u64()?;
        let last_acceptance = r.f64()?;
        let n_walkers = r.len(1)?;
        let n_electrons = r.len(1)?;
        let per_walker = n_electrons * 24 + 8 + 16;
        if n_walkers.checked_mul(per_walker).is_none_or(|b| b > body.len()) {
            return Err(CheckpointError::Malformed("walker block exceeds the file".into()));
        }
        let mut positions = Vec::with_capacity(n_walkers);
        for _ in 0..n_walkers {
            let mut walker = Vec::with_capacity(n_electrons);
            for _ in 0..n_electrons {
                walker.push([r.f64()?, r.f64()?, r.f64()?]);
            }
            positions.push(walker);
        }
        let log_psi = (0..n_walkers).map(|_| r.f64()).collect::<io::Result<Vec<_>>>()?;
        let word_positions = (0..n_walkers).map(|_| r.0.read_u128::<LE>()).collect::<io::Result<Vec<_>>>()?;
        let ensemble = EnsembleSnapshot {
            seed,
            proposal_std,
            burned_in,
            accepted,
            proposed,
            last_acceptance,
            positions,
            log_psi,
            word_positions,
        };

        let optimizer = match r.u8()? {
            0 => OptimizerState::Stateless,
            1 => {
                let mu = r.f64()?;
                let tikhonov_eps = r.f64()?;
                let prev_update = r.f64s()?;
                OptimizerState::Spring(SpringState { prev_update, mu, tikhonov_eps })
            }
            2 => {
                let obar = r.matrix()?;
                let lbar = r.f64s()?;
                let r_max = r.u64()? as usize;
                let wstep = r.u64()?;
                let prev = match r.u8()? {
                    0 => None,
                    1 => Some(TruncatedSvd { u: r.matrix()?, sigma: r.f64s()?, v: r.matrix()? }),
                    t => return Err(CheckpointError::Malformed(format!("unknown factorization tag {t}"))),
                };
                OptimizerState::Wssr(WssrState { obar, lbar, prev, r_max, step: wstep })
            }
            t => return Err(CheckpointError::Malformed(format!("unknown optimizer tag {t}"))),
        };
        if r.0.position() as usize != body.len() {
            return Err(CheckpointError::Malformed("trailing bytes after the payload".into()));
        }
        Ok(Self { config_text, step, theta, ensemble, optimizer })
    }

    /// Writes through a temporary file and a rename, so a crash never leaves
    /// a half-written checkpoint in place.
    pub fn save(&self, path: &Path) -> io::Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes())?;
        std::fs::rename(&tmp, path)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
