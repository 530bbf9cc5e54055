use cachemat::combinatorics::{format_rational, rational_to_f64};
use cachemat::decoder::{verify_all, VerifyReport};
use cachemat::io::{read_library, write_library, write_transcript};
use cachemat::scheduler::plan_phases;
use cachemat::simulator::{run_delivery_with, seeded_library, DeliveryOptions};
use serde::Serialize;

use crate::demand::{build_config, parse_demand};
use crate::output::{write_csv, write_json, REPORT_SCHEMA};
use crate::{Failure, Format, SimulateArgs};

/// Above this K the subpacketization grows quickly.
const ADVISORY_USERS: usize = 8;

#[derive(Serialize)]
struct PhaseSummary {
    phase: usize,
    groups: String,
    uses_per_group: String,
    active_antennas: usize,
    duration: String,
}

#[derive(Serialize)]
struct SimulateReport {
    schema: u32,
    #[serde(rename = "K")]
    users: usize,
    #[serde(rename = "N")]
    files: usize,
    #[serde(rename = "M")]
    cache: String,
    #[serde(rename = "Gamma")]
    replication: usize,
    gamma: f64,
    granularity: String,
    seed: u64,
    demand: Vec<usize>,
    #[serde(rename = "T")]
    t: String,
    t_decimal: f64,
    channel_uses: usize,
    uses_per_slot: String,
    duration_from_uses: String,
    phases: Vec<PhaseSummary>,
    verification: VerifyReport,
    pass: bool,
}

#[derive(Serialize)]
struct UserRow<'a> {
    #[serde(rename = "K")]
    users: usize,
    #[serde(rename = "N")]
    files: usize,
    #[serde(rename = "M")]
    cache: &'a str,
    #[serde(rename = "Gamma")]
    replication: usize,
    seed: u64,
    #[serde(rename = "T")]
    t: &'a str,
    channel_uses: usize,
    user: usize,
    requested: usize,
    #[serde(rename = "match")]
    matched: bool,
    solves: usize,
    max_system_dim: usize,
    error: &'a str,
}

pub fn run(args: &SimulateArgs) -> Result<(), Failure> {
    let mut config = build_config(args.users, args.files, args.cache.as_deref(), args.gamma)?;
    let demand = parse_demand(&args.demand, args.users, args.files, args.seed)?;
    if args.users > ADVISORY_USERS {
        eprintln!(
            "warning: K={} exceeds {ADVISORY_USERS}; subpacketization may be large",
            args.users
        );
    }

    let library = match &args.library {
        Some(path) => {
            let (loaded, library) = read_library(path)?;
            if (loaded.users(), loaded.files(), loaded.cache_size())
                != (config.users(), config.files(), config.cache_size())
            {
                return Err(Failure::Usage(format!(
                    "library {} was built for K={}, N={}, M={}",
                    path.display(),
                    loaded.users(),
                    loaded.files(),
                    format_rational(&loaded.cache_size())
                )));
            }
            config = loaded;
            library
        }
        None => seeded_library(&config, args.seed)?,
    };
    if let Some(path) = &args.save_library {
        write_library(path, &config, &library)?;
    }

    let plan = plan_phases(&config, &demand)?;
    let options = DeliveryOptions {
        resample_degenerate: args.resample,
        ..DeliveryOptions::default()
    };
    let transcript = run_delivery_with(&plan, &library, args.seed, options)?;
    if let Some(path) = &args.transcript {
        write_transcript(path, &transcript)?;
    }
    let verification = verify_all(&transcript, &library);
    let pass = verification.pass;

    let t = plan.total_duration();
    let report = SimulateReport {
        schema: REPORT_SCHEMA,
        users: config.users(),
        files: config.files(),
        cache: format_rational(&config.cache_size()),
        replication: config.replication(),
        gamma: rational_to_f64(&config.gamma()),
        granularity: config.granularity().to_string(),
        seed: args.seed,
        demand,
        t: format_rational(&t),
        t_decimal: rational_to_f64(&t),
        channel_uses: transcript.uses.len(),
        uses_per_slot: plan.uses_per_slot().to_string(),
        duration_from_uses: format_rational(&plan.duration_from_uses()),
        phases: plan
            .phases
            .iter()
            .map(|p| PhaseSummary {
                phase: p.phase,
                groups: p.group_count.to_string(),
                uses_per_group: p.uses_per_group.to_string(),
                active_antennas: p.active_antennas,
                duration: format_rational(&p.duration),
            })
            .collect(),
        verification,
        pass,
    };

    match args.format {
        Format::Json => write_json(args.out.as_deref(), &report)?,
        Format::Csv => {
            let rows: Vec<UserRow> = report
                .verification
                .users
                .iter()
                .map(|u| UserRow {
                    users: report.users,
                    files: report.files,
                    cache: &report.cache,
                    replication: report.replication,
                    seed: report.seed,
                    t: &report.t,
                    channel_uses: report.channel_uses,
                    user: u.user,
                    requested: u.requested,
                    matched: u.matched,
                    solves: u.solves,
                    max_system_dim: u.max_system_dim,
                    error: u.error.as_deref().unwrap_or(""),
                })
                .collect();
            write_csv(args.out.as_deref(), &rows)?;
        }
    }

    let decoded = report
        .verification
        .users
        .iter()
        .filter(|u| u.matched)
        .count();
    eprintln!(
        "K={} N={} M={} Gamma={}: T={}, {} channel uses, {decoded}/{} users decoded",
        report.users,
        report.files,
        report.cache,
        report.replication,
        report.t,
        report.channel_uses,
        report.users
    );
    if pass {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "{} of {} users failed to decode",
            report.users - decoded,
            report.users
        )))
    }
}
