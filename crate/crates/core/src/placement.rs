//! Placement: subpacketization of the library and cache filling.
//!
//! File `W_n` is cut into `C(K, Gamma)` equal contiguous blocks `W_{n,tau}`,
//! one per `Gamma`-subset `tau` in canonical order, and user `k` caches every
//! block whose `tau` contains `k`.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::combinatorics::{binomial, binomial_u64, subsets, Rational, Subset};
use crate::error::{Error, Result};
use crate::field::{FieldElement, SeededRng};
use crate::scheduler::minimal_granularity;

/// `(K, N, Gamma, c)` with `M = Gamma N / K`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemConfig {
    users: usize,
    files: usize,
    replication: usize,
    #[serde(with = "biguint_string")]
    granularity: BigUint,
}

mod biguint_string {
    use num_bigint::BigUint;
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }
}

impl SystemConfig {
    /// Config with the smallest granularity that makes every phase integral.
    pub fn with_replication(users: usize, files: usize, replication: usize) -> Result<Self> {
        if users == 0 {
            return Err(Error::InvalidConfig("K must be at least 1".into()));
        }
        if users > files {
            return Err(Error::InvalidConfig(format!(
                "K = {users} exceeds N = {files}"
            )));
        }
        if replication > users {
            return Err(Error::InvalidConfig(format!(
                "Gamma = {replication} exceeds K = {users}"
            )));
        }
        let granularity = minimal_granularity(users, replication);
        Ok(SystemConfig {
            users,
            files,
            replication,
            granularity,
        })
    }

    /// Config from the per-user cache size `M` (in files); `K M / N` must be
    /// an integer in `0..=K`.
    pub fn new(users: usize, files: usize, cache_size: &Rational) -> Result<Self> {
        if files == 0 {
            return Err(Error::InvalidConfig("N must be at least 1".into()));
        }
        let gamma = cache_size * Rational::from_integer(BigInt::from(users))
            / Rational::from_integer(BigInt::from(files));
        if !gamma.is_integer() || gamma < Rational::zero() {
            return Err(Error::InvalidConfig(format!(
                "K M / N = {gamma} is not a non-negative integer"
            )));
        }
        let replication = gamma
            .to_integer()
            .to_usize()
            .ok_or_else(|| Error::InvalidConfig("Gamma out of range".into()))?;
        Self::with_replication(users, files, replication)
    }

    /// Replaces the granularity; it must be a multiple of the minimal one.
    pub fn with_granularity(mut self, granularity: BigUint) -> Result<Self> {
        let min = minimal_granularity(self.users, self.replication);
        if granularity.is_zero() || !granularity.is_multiple_of(&min) {
            return Err(Error::Granularity {
                phase: self.replication + 1,
                granularity: granularity.to_string(),
            });
        }
        self.granularity = granularity;
        Ok(self)
    }

    /// `K`
    pub fn users(&self) -> usize {
        self.users
    }

    /// `N`
    pub fn files(&self) -> usize {
        self.files
    }

    /// `Gamma = K M / N`
    pub fn replication(&self) -> usize {
        self.replication
    }

    /// `c`, channel uses per group in the first delivery phase.
    pub fn granularity(&self) -> &BigUint {
        &self.granularity
    }

    /// `M = Gamma N / K`
    pub fn cache_size(&self) -> Rational {
        Rational::new(
            BigInt::from(self.replication * self.files),
            BigInt::from(self.users),
        )
    }

    /// `gamma = M / N = Gamma / K`
    pub fn gamma(&self) -> Rational {
        Rational::new(BigInt::from(self.replication), BigInt::from(self.users))
    }

    /// `C(K, Gamma)`
    pub fn subfiles_per_file(&self) -> BigUint {
        binomial(self.users as u64, self.replication as u64)
    }

    /// Symbols per subfile: `(K - Gamma) c`, or `c` when `Gamma = K`.
    pub fn subfile_len_big(&self) -> BigUint {
        let streams = (self.users - self.replication).max(1);
        &self.granularity * BigUint::from(streams)
    }

    pub fn subfile_len(&self) -> Result<usize> {
        self.subfile_len_big()
            .to_usize()
            .ok_or_else(|| Error::TooLarge(format!("subfile length {}", self.subfile_len_big())))
    }

    /// Symbols per file: `C(K, Gamma) (K - Gamma) c`.
    pub fn file_len(&self) -> Result<usize> {
        let total = self.subfiles_per_file() * self.subfile_len_big();
        total
            .to_usize()
            .filter(|&n| n <= 1 << 28)
            .ok_or_else(|| Error::TooLarge(format!("file length {total}")))
    }

    pub fn granularity_usize(&self) -> Result<usize> {
        self.granularity
            .to_usize()
            .ok_or_else(|| Error::TooLarge(format!("granularity {}", self.granularity)))
    }
}

/// `N` files of equal length, symbols in the field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Library {
    files: Vec<Vec<FieldElement>>,
}

impl Library {
    pub fn new(files: Vec<Vec<FieldElement>>) -> Self {
        Library { files }
    }

    /// Uniformly random library sized for `config`.
    pub fn random(config: &SystemConfig, seed: u64) -> Result<Self> {
        let len = config.file_len()?;
        let mut rng = SeededRng::new(seed);
        let files = (0..config.files()).map(|_| rng.elements(len)).collect();
        Ok(Library { files })
    }

    pub fn files(&self) -> &[Vec<FieldElement>] {
        &self.files
    }

    /// File `n`, 1-based.
    pub fn file(&self, n: usize) -> &[FieldElement] {
        &self.files[n - 1]
    }

    pub fn total_symbols(&self) -> usize {
        self.files.iter().map(Vec::len).sum()
    }

    pub fn check(&self, config: &SystemConfig) -> Result<()> {
        if self.files.len() != config.files() {
            return Err(Error::InvalidConfig(format!(
                "library has {} files, config expects {}",
                self.files.len(),
                config.files()
            )));
        }
        let expected = config.file_len()?;
        for (i, f) in self.files.iter().enumerate() {
            if f.len() != expected {
                return Err(Error::LengthMismatch {
                    file: i + 1,
                    expected,
                    actual: f.len(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubfileIndex {
    /// 1-based file index `n`.
    pub file: usize,
    pub tau: Subset,
}

/// All `W_{n,tau}`, stored per file in canonical `tau` order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subfiles {
    users: usize,
    replication: usize,
    blocks: Vec<Vec<Vec<FieldElement>>>,
}

impl Subfiles {
    pub fn get(&self, file: usize, tau: &Subset) -> &[FieldElement] {
        debug_assert_eq!(tau.len(), self.replication);
        &self.blocks[file - 1][tau.rank(self.users) as usize]
    }

    pub fn files(&self) -> usize {
        self.blocks.len()
    }

    pub fn per_file(&self) -> usize {
        self.blocks.first().map_or(0, Vec::len)
    }

    pub fn iter(&self) -> impl Iterator<Item = (SubfileIndex, &[FieldElement])> + '_ {
        self.blocks.iter().enumerate().flat_map(move |(n, blocks)| {
            subsets(self.users, self.replication)
                .zip(blocks)
                .map(move |(tau, b)| (SubfileIndex { file: n + 1, tau }, b.as_slice()))
        })
    }
}

/// Splits every file into `C(K, Gamma)` contiguous blocks of `(K - Gamma) c`
/// symbols in canonical subset order.
pub fn subpacketize(config: &SystemConfig, library: &Library) -> Result<Subfiles> {
    let per_file = binomial_u64(config.users() as u64, config.replication() as u64)
        .and_then(|v| v.to_usize())
        .ok_or_else(|| Error::TooLarge("C(K, Gamma)".into()))?;
    let expected = config.file_len()?;
    let block = config.subfile_len()?;
    if library.files().len() != config.files() {
        return Err(Error::InvalidConfig(format!(
            "library has {} files, config expects {}",
            library.files().len(),
            config.files()
        )));
    }
    let mut blocks = Vec::with_capacity(config.files());
    for (i, f) in library.files().iter().enumerate() {
        if f.len() != expected || f.len() % per_file != 0 {
            return Err(Error::LengthMismatch {
                file: i + 1,
                expected,
                actual: f.len(),
            });
        }
        blocks.push(f.chunks(block).map(<[FieldElement]>::to_vec).collect());
    }
    Ok(Subfiles {
        users: config.users(),
        replication: config.replication(),
        blocks,
    })
}

/// What user `k` holds after placement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheContents {
    pub user: usize,
    pub entries: BTreeMap<SubfileIndex, Vec<FieldElement>>,
}

impl CacheContents {
    pub fn get(&self, file: usize, tau: &Subset) -> Option<&[FieldElement]> {
        self.entries
            .get(&SubfileIndex {
                file,
                tau: tau.clone(),
            })
            .map(Vec::as_slice)
    }

    pub fn symbol_count(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// `Z_k = { W_{n,tau} : k in tau }` for every user.
pub fn fill_caches(config: &SystemConfig, subfiles: &Subfiles) -> Vec<CacheContents> {
    (1..=config.users())
        .map(|user| cache_for(subfiles, user))
        .collect()
}

pub fn cache_for(subfiles: &Subfiles, user: usize) -> CacheContents {
    let entries = subfiles
        .iter()
        .filter(|(idx, _)| idx.tau.contains(user))
        .map(|(idx, b)| (idx, b.to_vec()))
        .collect();
    CacheContents { user, entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::rational;

    fn setup(k: usize, n: usize, gamma: usize) -> (SystemConfig, Library, Subfiles) {
        let cfg = SystemConfig::with_replication(k, n, gamma).unwrap();
        let lib = Library::random(&cfg, 99).unwrap();
        let sub = subpacketize(&cfg, &lib).unwrap();
        (cfg, lib, sub)
    }

    #[test]
    fn config_validation() {
        let cfg = SystemConfig::new(3, 3, &rational(1, 1)).unwrap();
        assert_eq!(cfg.replication(), 1);
        assert_eq!(cfg.cache_size(), rational(1, 1));
        assert_eq!(cfg.gamma(), rational(1, 3));
        let cfg = SystemConfig::new(4, 6, &rational(3, 2)).unwrap();
        assert_eq!(cfg.replication(), 1);
        assert!(SystemConfig::new(4, 6, &rational(1, 1)).is_err());
        assert!(SystemConfig::new(4, 3, &rational(0, 1)).is_err());
        assert!(SystemConfig::with_replication(3, 3, 4).is_err());
        assert!(SystemConfig::new(3, 3, &rational(-1, 1)).is_err());
        let cfg = SystemConfig::with_replication(5, 5, 1).unwrap();
        assert!(cfg.clone().with_granularity(BigUint::from(6u32)).is_ok());
        assert!(cfg.with_granularity(BigUint::from(2u32)).is_err());
    }

    #[test]
    fn subpacketize_k2_gamma1() {
        let (cfg, lib, sub) = setup(2, 2, 1);
        assert_eq!(sub.per_file(), 2);
        let idx: Vec<_> = sub.iter().map(|(i, _)| i).collect();
        assert_eq!(idx[0].tau.elements(), &[1]);
        assert_eq!(idx[1].tau.elements(), &[2]);
        assert_eq!(cfg.subfile_len().unwrap(), 1);
        assert_eq!(sub.get(1, &idx[0].tau), &lib.file(1)[0..1]);
    }

    #[test]
    fn subpacketize_k4_gamma2() {
        let (cfg, _, sub) = setup(4, 4, 2);
        assert_eq!(sub.per_file(), 6);
        let c = cfg.granularity_usize().unwrap();
        assert!(sub.iter().all(|(_, b)| b.len() == 2 * c));
    }

    #[test]
    fn subpacketize_gamma0_is_whole_file() {
        let (_, lib, sub) = setup(3, 3, 0);
        assert_eq!(sub.per_file(), 1);
        for n in 1..=3 {
            assert_eq!(sub.get(n, &Subset::empty()), lib.file(n));
        }
    }

    #[test]
    fn subpacketize_rejects_bad_lengths() {
        let cfg = SystemConfig::with_replication(3, 3, 1).unwrap();
        let mut lib = Library::random(&cfg, 1).unwrap();
        lib.files[1].pop();
        assert!(matches!(
            subpacketize(&cfg, &lib),
            Err(Error::LengthMismatch { file: 2, .. })
        ));
        assert!(lib.check(&cfg).is_err());
    }

    #[test]
    fn concatenating_blocks_reproduces_file() {
        for k in 1..=6 {
            for gamma in 0..=k {
                let (_, lib, sub) = setup(k, k, gamma);
                for n in 1..=k {
                    let joined: Vec<FieldElement> = sub
                        .iter()
                        .filter(|(i, _)| i.file == n)
                        .flat_map(|(_, b)| b.to_vec())
                        .collect();
                    assert_eq!(joined, lib.file(n));
                }
            }
        }
    }

    #[test]
    fn cache_counts() {
        let (cfg, lib, sub) = setup(3, 3, 1);
        let caches = fill_caches(&cfg, &sub);
        for z in &caches {
            assert_eq!(z.len(), 3);
            // M = 1 file worth of symbols
            assert_eq!(z.symbol_count(), lib.file(1).len());
        }
        let (cfg, _, sub) = setup(3, 3, 0);
        assert!(fill_caches(&cfg, &sub).iter().all(CacheContents::is_empty));
        let (cfg, _, sub) = setup(4, 4, 2);
        assert!(fill_caches(&cfg, &sub).iter().all(|z| z.len() == 12));
    }

    #[test]
    fn cache_size_identity_and_replication() {
        for k in 1..=10 {
            for gamma in 0..=k {
                let cfg = SystemConfig::with_replication(k, k, gamma).unwrap();
                if cfg.file_len().map_or(true, |l| l > 50_000) {
                    continue;
                }
                let lib = Library::random(&cfg, 5).unwrap();
                let sub = subpacketize(&cfg, &lib).unwrap();
                let caches = fill_caches(&cfg, &sub);
                let total = lib.total_symbols();
                for z in &caches {
                    // |Z_k| * N = M * total = Gamma N / K * total  =>  |Z_k| K = Gamma total
                    assert_eq!(z.symbol_count() * k, gamma * total, "K={k} Gamma={gamma}");
                }
                for (idx, _) in sub.iter() {
                    let holders = caches
                        .iter()
                        .filter(|z| z.entries.contains_key(&idx))
                        .count();
                    assert_eq!(holders, gamma);
                }
            }
        }
    }
}
