//! On-disk formats.
//!
//! Library files are little-endian `u32` throughout: a header
//! `K, N, M_num, M_den, c, p` followed by the `N` files back to back.
//!
//! A transcript is written as a JSON metadata file plus a binary sidecar
//! holding channel and symbol data:
//!
//! ```text
//! magic "CMTS" | version u32 | K u32 | uses u64
//! per use: t u32 | phase u32 | slot u32 | horizon u32 (u32::MAX = none)
//!          | |group| u32 | group elements u32...
//!          | channel K*K u32 (row-major) | transmitted K u32 | observed K u32
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_bigint::{BigInt, BigUint};
use num_traits::{Signed, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::combinatorics::{rational_serde, Rational, Subset};
use crate::error::{Error, Result};
use crate::field::{FieldElement, FieldMatrix, MODULUS};
use crate::placement::{Library, SystemConfig};
use crate::scheduler::DeliveryPlan;
use crate::simulator::{ChannelUse, ObservationLog, Transcript, TRANSCRIPT_VERSION};

const SIDECAR_MAGIC: &[u8; 4] = b"CMTS";
const NO_HORIZON: u32 = u32::MAX;

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::TooLarge(format!("{what} = {v} does not fit in u32")))
}

fn big_to_u32(v: &BigInt, what: &str) -> Result<u32> {
    v.to_u32()
        .ok_or_else(|| Error::TooLarge(format!("{what} = {v} does not fit in u32")))
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::UnexpectedEof => Error::Format("unexpected end of file".into()),
                _ => e.into(),
            })?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    fn element(&mut self) -> Result<FieldElement> {
        let v = self.u32()?;
        if v >= MODULUS {
            return Err(Error::Format(format!("symbol {v} is not below {MODULUS}")));
        }
        Ok(FieldElement::new(v as u64))
    }

    fn elements(&mut self, n: usize) -> Result<Vec<FieldElement>> {
        (0..n).map(|_| self.element()).collect()
    }

    fn at_end(&mut self) -> Result<bool> {
        let mut b = [0u8; 1];
        Ok(self.inner.read(&mut b)? == 0)
    }
}

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_elements(w: &mut impl Write, xs: &[FieldElement]) -> Result<()> {
    for x in xs {
        put_u32(w, x.value())?;
    }
    Ok(())
}

pub fn write_library(path: &Path, config: &SystemConfig, library: &Library) -> Result<()> {
    library.check(config)?;
    let m = config.cache_size();
    if m.is_negative() {
        return Err(Error::InvalidConfig("negative cache size".into()));
    }
    let c = config
        .granularity()
        .to_u32()
        .ok_or_else(|| Error::TooLarge(format!("granularity {}", config.granularity())))?;
    let mut w = BufWriter::new(File::create(path)?);
    for v in [
        to_u32(config.users(), "K")?,
        to_u32(config.files(), "N")?,
        big_to_u32(m.numer(), "M numerator")?,
        big_to_u32(m.denom(), "M denominator")?,
        c,
        MODULUS,
    ] {
        put_u32(&mut w, v)?;
    }
    for f in library.files() {
        put_elements(&mut w, f)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_library(path: &Path) -> Result<(SystemConfig, Library)> {
    let mut r = Reader {
        inner: BufReader::new(File::open(path)?),
    };
    let users = r.usize()?;
    let files = r.usize()?;
    let (m_num, m_den) = (r.u32()?, r.u32()?);
    let c = r.u32()?;
    let p = r.u32()?;
    if p != MODULUS {
        return Err(Error::Format(format!(
            "library modulus {p}, expected {MODULUS}"
        )));
    }
    if m_den == 0 {
        return Err(Error::Format("zero cache-size denominator".into()));
    }
    let m = Rational::new(BigInt::from(m_num), BigInt::from(m_den));
    let config = SystemConfig::new(users, files, &m)?.with_granularity(BigUint::from(c))?;
    let len = config.file_len()?;
    let data = (0..files)
        .map(|_| r.elements(len))
        .collect::<Result<Vec<_>>>()?;
    if !r.at_end()? {
        return Err(Error::Format("trailing data after library".into()));
    }
    Ok((config, Library::new(data)))
}

/// JSON half of a transcript bundle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptMeta {
    pub version: u32,
    pub seed: u64,
    pub plan: DeliveryPlan,
    pub uses: usize,
    #[serde(with = "rational_serde")]
    pub total_duration: Rational,
    /// File name of the sidecar, relative to the metadata file.
    pub sidecar: String,
}

fn sidecar_path(meta_path: &Path) -> PathBuf {
    meta_path.with_extension("bin")
}

/// Writes `meta_path` and a sidecar next to it with extension `.bin`.
pub fn write_transcript(meta_path: &Path, transcript: &Transcript) -> Result<PathBuf> {
    let side = sidecar_path(meta_path);
    let sidecar = side
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Io(format!("bad transcript path {}", meta_path.display())))?
        .to_string();
    let meta = TranscriptMeta {
        version: transcript.version,
        seed: transcript.seed,
        plan: transcript.plan.clone(),
        uses: transcript.uses.len(),
        total_duration: transcript.plan.total_duration(),
        sidecar,
    };
    std::fs::write(meta_path, serde_json::to_string_pretty(&meta)?)?;

    let k = transcript.config().users();
    let mut w = BufWriter::new(File::create(&side)?);
    w.write_all(SIDECAR_MAGIC)?;
    put_u32(&mut w, transcript.version)?;
    put_u32(&mut w, to_u32(k, "K")?)?;
    w.write_all(&(transcript.uses.len() as u64).to_le_bytes())?;
    for u in &transcript.uses {
        put_u32(&mut w, to_u32(u.t, "t")?)?;
        put_u32(&mut w, to_u32(u.phase, "phase")?)?;
        put_u32(&mut w, to_u32(u.slot, "slot")?)?;
        let horizon = match u.feedback_horizon {
            Some(h) => to_u32(h, "horizon")?,
            None => NO_HORIZON,
        };
        put_u32(&mut w, horizon)?;
        put_u32(&mut w, to_u32(u.group.len(), "group size")?)?;
        for e in u.group.iter() {
            put_u32(&mut w, to_u32(e, "group element")?)?;
        }
        put_elements(&mut w, u.channel.entries())?;
        put_elements(&mut w, &u.transmitted)?;
        for user in 1..=k {
            let y = transcript
                .log
                .get(user, u.t)
                .ok_or_else(|| Error::MissingObservation(format!("user {user} at t={}", u.t)))?;
            put_u32(&mut w, y.value())?;
        }
    }
    w.flush()?;
    Ok(side)
}

pub fn read_transcript(meta_path: &Path) -> Result<Transcript> {
    let meta: TranscriptMeta = serde_json::from_str(&std::fs::read_to_string(meta_path)?)?;
    if meta.version != TRANSCRIPT_VERSION {
        return Err(Error::Format(format!(
            "unsupported transcript version {}",
            meta.version
        )));
    }
    let side = meta_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&meta.sidecar);
    let mut r = Reader {
        inner: BufReader::new(File::open(&side)?),
    };
    if &r.bytes::<4>()? != SIDECAR_MAGIC {
        return Err(Error::Format("not a transcript sidecar".into()));
    }
    let version = r.u32()?;
    if version != meta.version {
        return Err(Error::Format(format!(
            "sidecar version {version} does not match metadata version {}",
            meta.version
        )));
    }
    let k = r.usize()?;
    if k != meta.plan.users() {
        return Err(Error::Format(format!(
            "sidecar has K={k}, plan has K={}",
            meta.plan.users()
        )));
    }
    let count = r.u64()? as usize;
    if count != meta.uses {
        return Err(Error::Format(format!(
            "sidecar holds {count} uses, metadata says {}",
            meta.uses
        )));
    }
    let mut uses = Vec::with_capacity(count);
    let mut observations = vec![Vec::with_capacity(count); k];
    for _ in 0..count {
        let t = r.usize()?;
        let phase = r.usize()?;
        let slot = r.usize()?;
        let feedback_horizon = match r.u32()? {
            NO_HORIZON => None,
            h => Some(h as usize),
        };
        let glen = r.usize()?;
        let elems = (0..glen).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
        let group = Subset::new(k, elems)
            .ok_or_else(|| Error::Format(format!("invalid group at use {t}")))?;
        let channel = FieldMatrix::new(k, k, r.elements(k * k)?)?;
        let transmitted = r.elements(k)?;
        for obs in observations.iter_mut() {
            obs.push(r.element()?);
        }
        uses.push(ChannelUse {
            t,
            phase,
            group,
            slot,
            channel,
            transmitted,
            feedback_horizon,
        });
    }
    if !r.at_end()? {
        return Err(Error::Format("trailing data after transcript".into()));
    }
    Ok(Transcript {
        version,
        seed: meta.seed,
        plan: meta.plan,
        uses,
        log: ObservationLog { observations },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::rational;
    use crate::simulator::simulate;

    #[test]
    fn library_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lib.bin");
        let cfg = SystemConfig::new(3, 4, &rational(4, 3)).unwrap();
        let lib = Library::random(&cfg, 5).unwrap();
        write_library(&path, &cfg, &lib).unwrap();
        let (cfg2, lib2) = read_library(&path).unwrap();
        assert_eq!(cfg2, cfg);
        assert_eq!(lib2, lib);

        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 4 * (6 + lib.total_symbols()));
        assert_eq!(&bytes[8..16], &[4, 0, 0, 0, 3, 0, 0, 0]);
    }

    #[test]
    fn library_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lib.bin");
        let cfg = SystemConfig::with_replication(2, 2, 1).unwrap();
        let lib = Library::random(&cfg, 1).unwrap();
        write_library(&path, &cfg, &lib).unwrap();
        let good = std::fs::read(&path).unwrap();

        let mut short = good.clone();
        short.pop();
        std::fs::write(&path, &short).unwrap();
        assert!(matches!(read_library(&path), Err(Error::Format(_))));

        let mut long = good.clone();
        long.extend_from_slice(&[0, 0, 0, 0]);
        std::fs::write(&path, &long).unwrap();
        assert!(matches!(read_library(&path), Err(Error::Format(_))));

        let mut bad_symbol = good.clone();
        bad_symbol[24..28].copy_from_slice(&MODULUS.to_le_bytes());
        std::fs::write(&path, &bad_symbol).unwrap();
        assert!(matches!(read_library(&path), Err(Error::Format(_))));

        let mut bad_p = good;
        bad_p[20..24].copy_from_slice(&7u32.to_le_bytes());
        std::fs::write(&path, &bad_p).unwrap();
        assert!(matches!(read_library(&path), Err(Error::Format(_))));
    }

    #[test]
    fn transcript_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let meta = dir.path().join("run.json");
        for (k, g) in [(3, 1), (4, 1), (2, 2)] {
            let cfg = SystemConfig::with_replication(k, k, g).unwrap();
            let demand: Vec<usize> = (1..=k).collect();
            let (_, tr) = simulate(&cfg, &demand, 11).unwrap();
            let side = write_transcript(&meta, &tr).unwrap();
            assert_eq!(side, dir.path().join("run.bin"));
            assert_eq!(read_transcript(&meta).unwrap(), tr);
        }
    }

    #[test]
    fn transcript_sidecar_checks() {
        let dir = tempfile::tempdir().unwrap();
        let meta = dir.path().join("run.json");
        let cfg = SystemConfig::with_replication(3, 3, 1).unwrap();
        let (_, tr) = simulate(&cfg, &[1, 2, 3], 2).unwrap();
        let side = write_transcript(&meta, &tr).unwrap();
        let good = std::fs::read(&side).unwrap();

        let mut bad = good.clone();
        bad[0] = b'X';
        std::fs::write(&side, &bad).unwrap();
        assert!(matches!(read_transcript(&meta), Err(Error::Format(_))));

        let mut bad = good.clone();
        bad[4] = 9;
        std::fs::write(&side, &bad).unwrap();
        assert!(matches!(read_transcript(&meta), Err(Error::Format(_))));

        let mut bad = good;
        bad.truncate(bad.len() - 3);
        std::fs::write(&side, &bad).unwrap();
        assert!(matches!(read_transcript(&meta), Err(Error::Format(_))));
    }
}
