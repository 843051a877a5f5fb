//! Binary draws files and run manifests.
//!
//! Draws file layout (all integers little-endian):
//!
//! ```text
//! magic     8 bytes  "IFDRAWS\0"
//! version   u32
//! hdr_len   u64
//! header    hdr_len bytes of JSON (shapes, run counters, acceptance ledger)
//! payload   f64 values, state by state, each matrix column-major:
//!           alpha, lambda, theta?, eta?, F?, Fstar?, sigma2, h, z, q, rho
//!           (indicators stored as 0.0 / 1.0)
//! checksum  32 bytes SHA-256 of everything above
//! ```

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::state::{AcceptanceLedger, McmcState, PosteriorDraws};

pub const MAGIC: &[u8; 8] = b"IFDRAWS\0";
pub const FORMAT_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    n_states: usize,
    burn_in: usize,
    thin: usize,
    total_iters: usize,
    features: usize,
    samples: usize,
    factors: usize,
    theta_cols: Option<usize>,
    eta_rows: Option<usize>,
    has_f: bool,
    has_f_shared: bool,
    z_cols: usize,
    q_len: usize,
    rho_len: usize,
    acceptance: Option<AcceptanceLedger>,
}

impl Header {
    fn state_len(&self) -> usize {
        let (m, n, l) = (self.features, self.samples, self.factors);
        let mut len = m * l + l * n + m + m * l + m * self.z_cols + self.q_len + self.rho_len;
        len += self.theta_cols.map_or(0, |t| m * t);
        len += self.eta_rows.map_or(0, |t| t * n);
        if self.has_f {
            len += m * n;
        }
        if self.has_f_shared {
            len += n;
        }
        len
    }
}

fn bools(m: &DMatrix<bool>) -> impl Iterator<Item = f64> + '_ {
    m.iter().map(|&b| if b { 1.0 } else { 0.0 })
}

pub fn encode_draws(draws: &PosteriorDraws) -> Result<Vec<u8>> {
    let first = draws
        .states
        .first()
        .ok_or(Error::InsufficientDraws { needed: 1, found: 0 })?;
    let header = Header {
        n_states: draws.len(),
        burn_in: draws.burn_in,
        thin: draws.thin,
        total_iters: draws.total_iters,
        features: first.n_features(),
        samples: first.n_samples(),
        factors: first.n_factors(),
        theta_cols: first.theta.as_ref().map(|t| t.ncols()),
        eta_rows: first.eta.as_ref().map(|e| e.nrows()),
        has_f: first.f.is_some(),
        has_f_shared: first.f_shared.is_some(),
        z_cols: first.z.ncols(),
        q_len: first.q.len(),
        rho_len: first.rho.len(),
        acceptance: draws.acceptance.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut out = Vec::with_capacity(24 + json.len() + 8 * header.state_len() * draws.len() + CHECKSUM_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for s in &draws.states {
        let mut values: Vec<f64> = Vec::with_capacity(header.state_len());
        values.extend(s.alpha.iter());
        values.extend(s.lambda.iter());
        if let Some(t) = &s.theta {
            values.extend(t.iter());
        }
        if let Some(e) = &s.eta {
            values.extend(e.iter());
        }
        if let Some(f) = &s.f {
            values.extend(f.iter());
        }
        if let Some(f) = &s.f_shared {
            values.extend(f.iter());
        }
        values.extend(s.sigma2.iter());
        values.extend(bools(&s.h));
        values.extend(bools(&s.z));
        values.extend(s.q.iter());
        values.extend(s.rho.iter());
        if values.len() != header.state_len() {
            return Err(Error::InvalidInput("draws are not structurally uniform".into()));
        }
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

struct Cursor<'a> {
    values: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, k: usize) -> Vec<f64> {
        let out = (0..k)
            .map(|a| {
                let at = self.pos + 8 * a;
                f64::from_le_bytes(self.values[at..at + 8].try_into().expect("eight bytes"))
            })
            .collect();
        self.pos += 8 * k;
        out
    }

    fn matrix(&mut self, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_vec(r, c, self.take(r * c))
    }

    fn flags(&mut self, r: usize, c: usize) -> DMatrix<bool> {
        self.matrix(r, c).map(|v| v != 0.0)
    }
}

pub fn decode_draws(bytes: &[u8]) -> Result<PosteriorDraws> {
    let corrupt = |what: &str| Error::CorruptFile(what.to_string());
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(corrupt("missing magic header"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("four bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::FormatVersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    if bytes.len() < 20 + CHECKSUM_LEN {
        return Err(corrupt("truncated file"));
    }
    let body = &bytes[..bytes.len() - CHECKSUM_LEN];
    if Sha256::digest(body).as_slice() != &bytes[bytes.len() - CHECKSUM_LEN..] {
        return Err(corrupt("checksum mismatch"));
    }
    let hdr_len = u64::from_le_bytes(body[12..20].try_into().expect("eight bytes")) as usize;
    let hdr_end = 20usize
        .checked_add(hdr_len)
        .filter(|&e| e <= body.len())
        .ok_or_else(|| corrupt("header length"))?;
    let header: Header = serde_json::from_slice(&body[20..hdr_end]).map_err(|e| corrupt(&format!("header: {e}")))?;
    let payload = &body[hdr_end..];
    if payload.len() != 8 * header.state_len() * header.n_states {
        return Err(corrupt("payload length does not match header"));
    }
    let (m, n, l) = (header.features, header.samples, header.factors);
    let mut cur = Cursor {
        values: payload,
        pos: 0,
    };
    let mut states = Vec::with_capacity(header.n_states);
    for _ in 0..header.n_states {
        let alpha = cur.matrix(m, l);
        let lambda = cur.matrix(l, n);
        let theta = header.theta_cols.map(|t| cur.matrix(m, t));
        let eta = header.eta_rows.map(|t| cur.matrix(t, n));
        let f = header.has_f.then(|| cur.matrix(m, n));
        let f_shared = header.has_f_shared.then(|| DVector::from_vec(cur.take(n)));
        let sigma2 = DVector::from_vec(cur.take(m));
        let h = cur.flags(m, l);
        let z = cur.flags(m, header.z_cols);
        let q = cur.take(header.q_len);
        let rho = cur.take(header.rho_len);
        states.push(McmcState {
            alpha,
            lambda,
            theta,
            eta,
            f,
            f_shared,
            sigma2,
            h,
            z,
            q,
            rho,
        });
    }
    Ok(PosteriorDraws {
        states,
        burn_in: header.burn_in,
        thin: header.thin,
        total_iters: header.total_iters,
        acceptance: header.acceptance,
    })
}

pub fn persist_draws(draws: &PosteriorDraws, path: &Path) -> Result<()> {
    std::fs::write(path, encode_draws(draws)?)?;
    Ok(())
}

pub fn load_draws(path: &Path) -> Result<PosteriorDraws> {
    decode_draws(&std::fs::read(path)?)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
}

/// Resolved configuration plus a checksum for every artifact of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub artifacts: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl Manifest {
    /// Checksums `artifacts` (paths relative to `dir`) and writes
    /// `manifest.json` into `dir`.
    pub fn write(
        dir: &Path,
        command: &str,
        seed: u64,
        config: serde_json::Value,
        artifacts: &[PathBuf],
    ) -> Result<Self> {
        let mut entries = Vec::new();
        for a in artifacts {
            entries.push(ManifestEntry {
                path: a.to_string_lossy().into_owned(),
                sha256: sha256_file(&dir.join(a))?,
            });
        }
        let manifest = Manifest {
            command: command.to_string(),
            seed,
            config,
            artifacts: entries,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::InvalidInput(e.to_string()))?;
        std::fs::write(dir.join(MANIFEST_FILE), text)?;
        Ok(manifest)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        serde_json::from_str(&text).map_err(|e| Error::CorruptFile(format!("manifest: {e}")))
    }

    /// Recomputes every checksum; fails on the first mismatch.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for e in &self.artifacts {
            if sha256_file(&dir.join(&e.path))? != e.sha256 {
                return Err(Error::CorruptFile(format!("checksum mismatch for {}", e.path)));
            }
        }
        Ok(())
    }
}
