//! Backward decoding at the receivers.
//!
//! User `k` walks the phases from `K` down to `Gamma + 1`. In phase `j` it
//! solves, per channel use of each group `psi` containing `k`, the
//! `(K-j+1)`-dimensional system made of its own observation and the
//! observations of the users outside `psi` it recovered one phase later. For
//! `j > Gamma + 1` the solution is the flattened combination streams; removing
//! its own earlier observation and inverting the column-deleted combining
//! minor yields what the other members of `psi` overheard in phase `j - 1`.
//! In phase `Gamma + 1` the solution is `X_psi`, from which the cached
//! subfiles are subtracted.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{enumerate_subsets, Subset};
use crate::error::{Error, Result};
use crate::field::{FieldElement, FieldMatrix};
use crate::placement::{fill_caches, subpacketize, CacheContents, Library};
use crate::simulator::{decoding_system_rows, Layout, Transcript};

/// Observation stream of `observer` over the uses that served `group`.
pub type StreamKey = (Subset, usize);

#[derive(Debug, Clone)]
pub struct DecoderState<'a> {
    pub user: usize,
    cache: &'a CacheContents,
    transcript: &'a Transcript,
    layout: Layout,
    /// Others' observations reconstructed so far, keyed by `(group, observer)`.
    pub recovered: BTreeMap<StreamKey, Vec<FieldElement>>,
    /// `W_{R_k, psi \ {k}}` for every `psi` containing `k`.
    pub recovered_subfiles: BTreeMap<Subset, Vec<FieldElement>>,
    pub solves: usize,
    pub max_system_dim: usize,
}

impl<'a> DecoderState<'a> {
    pub fn new(transcript: &'a Transcript, cache: &'a CacheContents) -> Result<Self> {
        let k = transcript.config().users();
        if cache.user == 0 || cache.user > k {
            return Err(Error::InvalidConfig(format!(
                "user {} outside 1..={k}",
                cache.user
            )));
        }
        let layout = Layout::new(&transcript.plan)?;
        if transcript.uses.len() < layout.total()
            || transcript.log.observations.len() != k
            || transcript
                .log
                .observations
                .iter()
                .any(|o| o.len() < layout.total())
        {
            return Err(Error::MissingObservation(format!(
                "transcript holds {} of {} channel uses",
                transcript.uses.len(),
                layout.total()
            )));
        }
        Ok(DecoderState {
            user: cache.user,
            cache,
            transcript,
            layout,
            recovered: BTreeMap::new(),
            recovered_subfiles: BTreeMap::new(),
            solves: 0,
            max_system_dim: 0,
        })
    }

    fn own(&self, t: usize) -> FieldElement {
        self.transcript.log.observations[self.user - 1][t]
    }

    fn stream(&self, group: &Subset, observer: usize) -> Result<&[FieldElement]> {
        self.recovered
            .get(&(group.clone(), observer))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingObservation(format!("user {observer} on group {group}")))
    }

    fn solve(&mut self, a: &FieldMatrix, b: &[FieldElement]) -> Result<Vec<FieldElement>> {
        self.solves += 1;
        self.max_system_dim = self.max_system_dim.max(a.rows());
        a.solve(b)
    }

    /// Transmitted symbols of `psi`, laid out as `flat[antenna * n + slot]`.
    fn resolve_group(&mut self, psi: &Subset) -> Result<Vec<FieldElement>> {
        let users = self.transcript.config().users();
        let phase = self.layout.phase(psi.len()).expect("phase in plan").clone();
        let n = phase.uses_per_group;
        let active = users - psi.len() + 1;
        let rows = decoding_system_rows(users, psi, self.user);
        let cols: Vec<usize> = (0..active).collect();
        let outsiders = psi.complement(users);
        let mut flat = vec![FieldElement::ZERO; active * n];
        for slot in 0..n {
            let t = self.layout.index(psi, slot).expect("slot in layout");
            let system = self.transcript.uses[t].channel.select(&rows, &cols);
            let mut rhs = Vec::with_capacity(active);
            rhs.push(self.own(t));
            for &other in &outsiders {
                rhs.push(self.stream(psi, other)?[slot]);
            }
            let x = self.solve(&system, &rhs)?;
            for (a, v) in x.into_iter().enumerate() {
                flat[a * n + slot] = v;
            }
        }
        Ok(flat)
    }

    /// Recovers the phase `j - 1` observations of the other members of `psi`.
    fn unfold(&mut self, psi: &Subset, flat: &[FieldElement]) -> Result<()> {
        let j = psi.len();
        let prev = self
            .layout
            .phase(j - 1)
            .expect("previous phase")
            .uses_per_group;
        let combining = self
            .transcript
            .plan
            .phase(j)
            .and_then(|p| p.combining.clone())
            .ok_or_else(|| Error::InvalidConfig(format!("phase {j} has no combining matrix")))?;
        let me = psi.position(self.user).expect("user in group");
        let minor = combining.delete_column(me);
        let members: Vec<usize> = psi.iter().filter(|&m| m != self.user).collect();
        let own_group = psi.without(self.user);
        let mut streams = vec![Vec::with_capacity(prev); members.len()];
        for slot in 0..prev {
            let t = self
                .layout
                .index(&own_group, slot)
                .expect("previous phase use");
            let mine = self.own(t);
            let rhs: Vec<FieldElement> = (0..j - 1)
                .map(|i| flat[i * prev + slot] - combining[(i, me)] * mine)
                .collect();
            let others = self.solve(&minor, &rhs)?;
            for (s, v) in streams.iter_mut().zip(others) {
                s.push(v);
            }
        }
        for (m, s) in members.into_iter().zip(streams) {
            self.recovered.insert((psi.without(m), m), s);
        }
        Ok(())
    }

    fn strip_cache(&mut self, psi: &Subset, payload: Vec<FieldElement>) -> Result<()> {
        let demand = &self.transcript.plan.demand;
        let mut w = payload;
        for other in psi.iter().filter(|&m| m != self.user) {
            let tau = psi.without(other);
            let cached = self.cache.get(demand[other - 1], &tau).ok_or_else(|| {
                Error::MissingObservation(format!("cache entry ({}, {tau})", demand[other - 1]))
            })?;
            for (x, &c) in w.iter_mut().zip(cached) {
                *x -= c;
            }
        }
        self.recovered_subfiles.insert(psi.without(self.user), w);
        Ok(())
    }

    /// Runs every phase backwards and reassembles `W_{R_k}`.
    pub fn run(&mut self) -> Result<Vec<FieldElement>> {
        let config = self.transcript.config().clone();
        let (users, g) = (config.users(), config.replication());
        let phases: Vec<usize> = self.layout.phases().iter().map(|p| p.phase).rev().collect();
        for j in phases {
            let groups: Vec<Subset> = enumerate_subsets(users, j)
                .into_iter()
                .filter(|psi| psi.contains(self.user))
                .collect();
            for psi in groups {
                let flat = self.resolve_group(&psi)?;
                if j > g + 1 {
                    self.unfold(&psi, &flat)?;
                } else {
                    self.strip_cache(&psi, flat)?;
                }
            }
        }
        let wanted = self.transcript.plan.demand[self.user - 1];
        let mut file = Vec::with_capacity(config.file_len()?);
        for tau in enumerate_subsets(users, g) {
            let block = if tau.contains(self.user) {
                self.cache.get(wanted, &tau)
            } else {
                self.recovered_subfiles.get(&tau).map(Vec::as_slice)
            };
            let block = block
                .ok_or_else(|| Error::MissingObservation(format!("subfile ({wanted}, {tau})")))?;
            file.extend_from_slice(block);
        }
        Ok(file)
    }
}

/// Reconstructs the file requested by `cache.user`.
pub fn backward_decode(
    transcript: &Transcript,
    cache: &CacheContents,
) -> Result<Vec<FieldElement>> {
    DecoderState::new(transcript, cache)?.run()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserReport {
    pub user: usize,
    pub requested: usize,
    #[serde(rename = "match")]
    pub matched: bool,
    pub solves: usize,
    pub max_system_dim: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub users: Vec<UserReport>,
    pub pass: bool,
}

/// Decodes every user and compares against the library.
pub fn verify_all(transcript: &Transcript, library: &Library) -> VerifyReport {
    let config = transcript.config();
    let caches = match subpacketize(config, library) {
        Ok(sub) => fill_caches(config, &sub),
        Err(e) => {
            let users = (1..=config.users())
                .map(|user| UserReport {
                    user,
                    requested: transcript.demand()[user - 1],
                    matched: false,
                    solves: 0,
                    max_system_dim: 0,
                    error: Some(e.to_string()),
                })
                .collect();
            return VerifyReport { users, pass: false };
        }
    };
    let users: Vec<UserReport> = caches
        .par_iter()
        .map(|cache| {
            let requested = transcript.demand()[cache.user - 1];
            let mut report = UserReport {
                user: cache.user,
                requested,
                matched: false,
                solves: 0,
                max_system_dim: 0,
                error: None,
            };
            match DecoderState::new(transcript, cache) {
                Ok(mut state) => {
                    let out = state.run();
                    report.solves = state.solves;
                    report.max_system_dim = state.max_system_dim;
                    match out {
                        Ok(file) => report.matched = file == library.file(requested),
                        Err(e) => report.error = Some(e.to_string()),
                    }
                }
                Err(e) => report.error = Some(e.to_string()),
            }
            report
        })
        .collect();
    let pass = users.iter().all(|u| u.matched);
    VerifyReport { users, pass }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::placement::SystemConfig;
    use crate::simulator::simulate;

    fn setup(
        k: usize,
        g: usize,
        demand: Vec<usize>,
        seed: u64,
    ) -> (Library, Transcript, Vec<CacheContents>) {
        let cfg = SystemConfig::with_replication(k, k, g).unwrap();
        let (lib, t) = simulate(&cfg, &demand, seed).unwrap();
        let caches = fill_caches(&cfg, &subpacketize(&cfg, &lib).unwrap());
        (lib, t, caches)
    }

    #[test]
    fn k2_gamma1_hand_trace() {
        let (lib, t, caches) = setup(2, 1, vec![1, 2], 3);
        let s1 = Subset::new(2, vec![1]).unwrap();
        let s2 = Subset::new(2, vec![2]).unwrap();
        // the single use carries X = W_{1,{2}} + W_{2,{1}} on one antenna
        let u = &t.uses[0];
        let x = u.transmitted[0];
        assert_eq!(x, lib.file(1)[1] + lib.file(2)[0]);
        assert_eq!(t.log.get(1, 0).unwrap(), u.channel[(0, 0)] * x);
        let mut state = DecoderState::new(&t, &caches[0]).unwrap();
        let file = state.run().unwrap();
        assert_eq!(state.recovered_subfiles[&s2], lib.file(1)[1..2].to_vec());
        assert_eq!(caches[0].get(1, &s1).unwrap(), &lib.file(1)[0..1]);
        assert_eq!(file, lib.file(1));
        assert_eq!(state.solves, 1);
        assert_eq!(state.max_system_dim, 1);
    }

    #[test]
    fn k3_gamma1_every_user_decodes() {
        let (lib, t, caches) = setup(3, 1, vec![1, 2, 3], 8);
        for z in &caches {
            assert_eq!(backward_decode(&t, z).unwrap(), lib.file(z.user));
        }
    }

    #[test]
    fn everything_cached_needs_no_transmission() {
        let (lib, t, caches) = setup(3, 3, vec![2, 3, 1], 1);
        assert!(t.uses.is_empty());
        for z in &caches {
            assert_eq!(
                backward_decode(&t, z).unwrap(),
                lib.file(t.demand()[z.user - 1])
            );
        }
    }

    #[test]
    fn recovered_streams_match_ground_truth() {
        for (k, g) in [(4, 0), (5, 1), (6, 2), (5, 3)] {
            let (_, t, caches) = setup(k, g, (1..=k).collect(), 13);
            let layout = Layout::new(&t.plan).unwrap();
            for z in &caches {
                let mut state = DecoderState::new(&t, z).unwrap();
                state.run().unwrap();
                for ((group, observer), stream) in &state.recovered {
                    assert!(group.contains(z.user));
                    assert!(!group.contains(*observer));
                    for (slot, v) in stream.iter().enumerate() {
                        let tt = layout.index(group, slot).unwrap();
                        assert_eq!(Some(*v), t.log.get(*observer, tt));
                    }
                }
                // recovered and cached subfile indices partition the Gamma-subsets
                let mut all: Vec<Subset> = state.recovered_subfiles.keys().cloned().collect();
                assert!(all.iter().all(|tau| !tau.contains(z.user)));
                all.extend(
                    z.entries
                        .keys()
                        .filter(|i| i.file == 1)
                        .map(|i| i.tau.clone()),
                );
                all.sort();
                assert_eq!(all, enumerate_subsets(k, g));
                assert!(state.max_system_dim <= (k - g).max(k - 1));
            }
        }
    }

    #[test]
    fn verify_all_reports_each_user() {
        let (lib, t, _) = setup(4, 1, vec![1, 2, 3, 4], 5);
        let report = verify_all(&t, &lib);
        assert!(report.pass);
        assert_eq!(report.users.len(), 4);
        assert!(report
            .users
            .iter()
            .all(|u| u.matched && u.solves > 0 && u.max_system_dim == 3));
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["users"][0]["match"], true);
        assert_eq!(json["users"][0]["requested"], 1);
    }

    #[test]
    fn repeated_demands_decode() {
        let (lib, t, _) = setup(4, 2, vec![1, 1, 1, 1], 6);
        assert!(verify_all(&t, &lib).pass);
        let (lib, t, _) = setup(5, 1, vec![2, 2, 5, 5, 1], 6);
        assert!(verify_all(&t, &lib).pass);
    }

    #[test]
    fn flipped_symbol_breaks_some_user() {
        let (lib, mut t, _) = setup(4, 1, vec![1, 2, 3, 4], 5);
        t.log.observations[2][3] += FieldElement::ONE;
        let report = verify_all(&t, &lib);
        assert!(!report.pass);
        assert!(report.users.iter().any(|u| !u.matched));
    }

    #[test]
    fn tampered_combining_matrix_breaks_decoding() {
        let (lib, mut t, _) = setup(4, 1, vec![1, 2, 3, 4], 5);
        let m = t.plan.phases[1].combining.as_mut().unwrap();
        m[(0, 0)] += FieldElement::ONE;
        assert!(!verify_all(&t, &lib).pass);
    }

    #[test]
    fn truncated_transcript_is_missing_observations() {
        let (_, mut t, caches) = setup(4, 1, vec![1, 2, 3, 4], 5);
        t.uses.pop();
        for o in &mut t.log.observations {
            o.pop();
        }
        assert!(matches!(
            backward_decode(&t, &caches[0]),
            Err(Error::MissingObservation(_))
        ));
    }

    #[test]
    fn singular_system_surfaces_as_error() {
        let (_, mut t, caches) = setup(3, 1, vec![1, 2, 3], 5);
        // make user 1's phase-2 system on group {1,2} rank deficient
        let ch = &mut t.uses[0].channel;
        for a in 0..3 {
            let v = ch[(0, a)];
            ch[(2, a)] = v;
        }
        assert!(matches!(
            backward_decode(&t, &caches[0]),
            Err(Error::SingularMatrix { .. })
        ));
    }
}
