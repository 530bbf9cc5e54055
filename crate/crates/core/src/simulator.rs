//! Symbol-level execution of a [`DeliveryPlan`] over a generic MISO channel.
//!
//! Every channel use draws a fresh `K x K` matrix of nonzero field elements
//! (row `k-1` is `h_k`) and every receiver logs `h_k . x` exactly. The
//! transmitter learns a use's channel only after that use completes, through
//! [`DelayedCsitLedger`], and builds every phase after the first purely from
//! what the ledger exposes.
//!
//! Stream layout: in the first phase antenna `a` of group `psi` sends
//! `X_psi[a * c + u]` on slot `u`. In phase `j` the `j - 1` combination streams
//! of length `n_{j-1}` are flattened row-major and antenna `a` sends
//! `flat[a * n_j + u]` on slot `u`. Groups run in canonical order, each
//! occupying a contiguous block of `n_j` uses.

use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{enumerate_subsets, Subset};
use crate::error::{Error, Result};
use crate::field::{dot, FieldElement, FieldMatrix, SeededRng};
use crate::placement::{subpacketize, Library, SystemConfig};
use crate::scheduler::{build_xors, plan_phases, DeliveryPlan};

pub const TRANSCRIPT_VERSION: u32 = 1;

/// Simulations refuse plans with more channel uses than this.
pub const MAX_CHANNEL_USES: usize = 1 << 22;

/// Stream index reserved for channel draws, see [`SeededRng::child`].
const CHANNEL_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelUse {
    pub t: usize,
    pub phase: usize,
    pub group: Subset,
    pub slot: usize,
    /// Row `k - 1` holds `h_k`.
    pub channel: FieldMatrix,
    /// Length `K`, zero past the active antennas.
    pub transmitted: Vec<FieldElement>,
    /// Largest earlier use whose feedback this transmission was built from.
    pub feedback_horizon: Option<usize>,
}

/// `observations[k - 1][t]` is what user `k` received on use `t`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ObservationLog {
    pub observations: Vec<Vec<FieldElement>>,
}

impl ObservationLog {
    pub fn get(&self, user: usize, t: usize) -> Option<FieldElement> {
        self.observations.get(user - 1)?.get(t).copied()
    }

    pub fn user(&self, user: usize) -> &[FieldElement] {
        &self.observations[user - 1]
    }
}

/// Transmitter-side record of channel feedback. A use becomes visible only
/// once [`DelayedCsitLedger::publish`] is called after it completes.
#[derive(Debug, Default)]
pub struct DelayedCsitLedger {
    channels: Vec<FieldMatrix>,
    sent: Vec<Vec<FieldElement>>,
}

impl DelayedCsitLedger {
    pub fn visible(&self) -> usize {
        self.channels.len()
    }

    pub fn publish(&mut self, channel: FieldMatrix, sent: Vec<FieldElement>) {
        self.channels.push(channel);
        self.sent.push(sent);
    }

    /// What `user` received on use `t`, rebuilt from fed-back CSI and the
    /// transmitter's own record of the sent vector.
    pub fn overheard(&self, t: usize, user: usize) -> Result<FieldElement> {
        if t >= self.visible() {
            return Err(Error::Causality {
                requested: t,
                visible: self.visible(),
            });
        }
        Ok(dot(self.channels[t].row(user - 1), &self.sent[t]))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseLayout {
    pub phase: usize,
    pub start: usize,
    pub uses_per_group: usize,
    pub groups: Vec<Subset>,
}

/// Global use indices for every `(phase, group, slot)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    users: usize,
    first_phase: usize,
    phases: Vec<PhaseLayout>,
    total: usize,
}

impl Layout {
    pub fn new(plan: &DeliveryPlan) -> Result<Self> {
        let users = plan.users();
        let mut start = 0usize;
        let mut phases = Vec::with_capacity(plan.phases.len());
        for p in &plan.phases {
            let total = p.total_uses();
            let uses = p
                .uses_per_group
                .to_usize()
                .filter(|_| {
                    total
                        .to_usize()
                        .is_some_and(|t| start + t <= MAX_CHANNEL_USES)
                })
                .ok_or_else(|| Error::TooLarge(format!("phase {} needs {total} uses", p.phase)))?;
            let groups = enumerate_subsets(users, p.phase);
            let span = groups.len() * uses;
            phases.push(PhaseLayout {
                phase: p.phase,
                start,
                uses_per_group: uses,
                groups,
            });
            start += span;
        }
        Ok(Layout {
            users,
            first_phase: plan.config.replication() + 1,
            phases,
            total: start,
        })
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn phases(&self) -> &[PhaseLayout] {
        &self.phases
    }

    pub fn phase(&self, j: usize) -> Option<&PhaseLayout> {
        j.checked_sub(self.first_phase)
            .and_then(|i| self.phases.get(i))
    }

    /// Global index of `slot` within `group` in phase `group.len()`.
    pub fn index(&self, group: &Subset, slot: usize) -> Option<usize> {
        let p = self.phase(group.len())?;
        if slot >= p.uses_per_group {
            return None;
        }
        let rank = group.rank(self.users) as usize;
        Some(p.start + rank * p.uses_per_group + slot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeliveryOptions {
    /// Redraw a channel use whose decoding systems come out singular instead
    /// of failing with [`Error::DegenerateChannel`].
    pub resample_degenerate: bool,
    pub max_resamples: usize,
}

impl Default for DeliveryOptions {
    fn default() -> Self {
        DeliveryOptions {
            resample_degenerate: false,
            max_resamples: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub version: u32,
    pub seed: u64,
    pub plan: DeliveryPlan,
    pub uses: Vec<ChannelUse>,
    pub log: ObservationLog,
}

impl Transcript {
    pub fn config(&self) -> &SystemConfig {
        &self.plan.config
    }

    pub fn demand(&self) -> &[usize] {
        &self.plan.demand
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: Transcript = serde_json::from_str(s)?;
        if t.version != TRANSCRIPT_VERSION {
            return Err(Error::Format(format!(
                "unsupported transcript version {}",
                t.version
            )));
        }
        Ok(t)
    }
}

/// Rows `{user} + ([K] \ group)` restricted to the active antennas.
pub(crate) fn decoding_system_rows(users: usize, group: &Subset, user: usize) -> Vec<usize> {
    std::iter::once(user)
        .chain(group.complement(users))
        .map(|k| k - 1)
        .collect()
}

fn first_singular_user(channel: &FieldMatrix, group: &Subset, active: usize) -> Option<usize> {
    let cols: Vec<usize> = (0..active).collect();
    group.iter().find(|&user| {
        let rows = decoding_system_rows(channel.rows(), group, user);
        channel.select(&rows, &cols).rank() < active
    })
}

struct Transmitter<'a> {
    plan: &'a DeliveryPlan,
    layout: Layout,
    rng: SeededRng,
    options: DeliveryOptions,
    ledger: DelayedCsitLedger,
    uses: Vec<ChannelUse>,
    log: ObservationLog,
}

impl Transmitter<'_> {
    fn send(
        &mut self,
        group: &Subset,
        slot: usize,
        active: usize,
        symbols: &[FieldElement],
        horizon: Option<usize>,
    ) -> Result<()> {
        let k = self.plan.users();
        let t = self.uses.len();
        let mut transmitted = vec![FieldElement::ZERO; k];
        transmitted[..active].copy_from_slice(symbols);
        let mut channel = FieldMatrix::random_nonzero(k, k, &mut self.rng);
        let mut attempts = 0;
        while let Some(user) = first_singular_user(&channel, group, active) {
            if !self.options.resample_degenerate || attempts >= self.options.max_resamples {
                return Err(Error::DegenerateChannel {
                    t,
                    phase: group.len(),
                    user,
                });
            }
            attempts += 1;
            channel = FieldMatrix::random_nonzero(k, k, &mut self.rng);
        }
        let received = channel.mul_vec(&transmitted)?;
        for (log, y) in self.log.observations.iter_mut().zip(received) {
            log.push(y);
        }
        self.uses.push(ChannelUse {
            t,
            phase: group.len(),
            group: group.clone(),
            slot,
            channel: channel.clone(),
            transmitted: transmitted.clone(),
            feedback_horizon: horizon,
        });
        // feedback arrives only after the use is over
        self.ledger.publish(channel, transmitted);
        Ok(())
    }

    fn first_phase(&mut self, xors: &[crate::scheduler::XorMessage]) -> Result<()> {
        let Some(p) = self.layout.phases().first().cloned() else {
            return Ok(());
        };
        let active = self.plan.users() - p.phase + 1;
        let n = p.uses_per_group;
        for (psi, x) in p.groups.iter().zip(xors) {
            debug_assert_eq!(psi, &x.psi);
            for slot in 0..n {
                let symbols: Vec<FieldElement> =
                    (0..active).map(|a| x.payload[a * n + slot]).collect();
                self.send(psi, slot, active, &symbols, None)?;
            }
        }
        Ok(())
    }

    fn later_phase(&mut self, index: usize) -> Result<()> {
        let p = self.layout.phases()[index].clone();
        let prev_uses = self.layout.phases()[index - 1].uses_per_group;
        let j = p.phase;
        let active = self.plan.users() - j + 1;
        let n = p.uses_per_group;
        let combining = self.plan.phases[index]
            .combining
            .clone()
            .ok_or_else(|| Error::InvalidConfig(format!("phase {j} has no combining matrix")))?;
        for psi in &p.groups {
            // stream l: what member l overheard while psi \ {member l} was served
            let mut horizon = 0usize;
            let mut streams = Vec::with_capacity(j);
            for member in psi.iter() {
                let prev = psi.without(member);
                let mut s = Vec::with_capacity(prev_uses);
                for slot in 0..prev_uses {
                    let t = self.layout.index(&prev, slot).expect("previous phase use");
                    horizon = horizon.max(t);
                    s.push(self.ledger.overheard(t, member)?);
                }
                streams.push(s);
            }
            let mut flat = Vec::with_capacity((j - 1) * prev_uses);
            for i in 0..j - 1 {
                let row = combining.row(i);
                for slot in 0..prev_uses {
                    flat.push(row.iter().zip(&streams).map(|(&a, s)| a * s[slot]).sum());
                }
            }
            debug_assert_eq!(flat.len(), active * n);
            for slot in 0..n {
                let symbols: Vec<FieldElement> = (0..active).map(|a| flat[a * n + slot]).collect();
                self.send(psi, slot, active, &symbols, Some(horizon))?;
            }
        }
        Ok(())
    }
}

pub fn run_delivery(plan: &DeliveryPlan, library: &Library, seed: u64) -> Result<Transcript> {
    run_delivery_with(plan, library, seed, DeliveryOptions::default())
}

pub fn run_delivery_with(
    plan: &DeliveryPlan,
    library: &Library,
    seed: u64,
    options: DeliveryOptions,
) -> Result<Transcript> {
    let config = &plan.config;
    library.check(config)?;
    let layout = Layout::new(plan)?;
    let subfiles = subpacketize(config, library)?;
    let xors = build_xors(config, &subfiles, &plan.demand)?;
    let mut tx = Transmitter {
        plan,
        rng: SeededRng::child(seed, CHANNEL_STREAM),
        options,
        ledger: DelayedCsitLedger::default(),
        uses: Vec::with_capacity(layout.total()),
        log: ObservationLog {
            observations: vec![Vec::with_capacity(layout.total()); config.users()],
        },
        layout,
    };
    tx.first_phase(&xors)?;
    for index in 1..tx.layout.phases().len() {
        tx.later_phase(index)?;
    }
    Ok(Transcript {
        version: TRANSCRIPT_VERSION,
        seed,
        plan: plan.clone(),
        uses: tx.uses,
        log: tx.log,
    })
}

/// The library a run with this seed delivers.
pub fn seeded_library(config: &SystemConfig, seed: u64) -> Result<Library> {
    Library::random(config, seed)
}

/// Plans and runs a delivery of [`seeded_library`]`(config, seed)`.
pub fn simulate(
    config: &SystemConfig,
    demand: &[usize],
    seed: u64,
) -> Result<(Library, Transcript)> {
    let library = seeded_library(config, seed)?;
    let plan = plan_phases(config, demand)?;
    let transcript = run_delivery(&plan, &library, seed)?;
    Ok((library, transcript))
}

/// Regenerates the transcript of [`simulate`] from its inputs.
pub fn replay(config: &SystemConfig, demand: &[usize], seed: u64) -> Result<Transcript> {
    simulate(config, demand, seed).map(|(_, t)| t)
}
