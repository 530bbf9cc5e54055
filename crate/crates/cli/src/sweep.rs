use cachemat::bounds::{buffer_row, gap_sweep, synergy, GapRow};
use cachemat::combinatorics::format_rational;
use rayon::prelude::*;
use serde::Serialize;

use crate::demand::parse_grid;
use crate::output::{write_csv, write_json, REPORT_SCHEMA};
use crate::{Failure, Format, SweepArgs, SweepMode};

const MAX_SWEEP_USERS: usize = 256;

#[derive(Serialize)]
struct DofRow {
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "Gamma")]
    replication: usize,
    gamma: f64,
    #[serde(rename = "T")]
    t: String,
    d: f64,
    d_ss: f64,
    d_mat: f64,
    margin: f64,
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    schema: u32,
    mode: &'a str,
    rows: &'a [T],
    #[serde(skip_serializing_if = "Option::is_none")]
    max_ratio: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_at: Option<(usize, usize)>,
}

fn emit<T: Serialize>(
    args: &SweepArgs,
    mode: &str,
    rows: &[T],
    max: Option<(String, (usize, usize))>,
) -> Result<(), Failure> {
    match args.format {
        Format::Csv => write_csv(args.out.as_deref(), rows),
        Format::Json => {
            let (max_ratio, max_at) = max.map_or((None, None), |(r, at)| (Some(r), Some(at)));
            write_json(
                args.out.as_deref(),
                &Envelope {
                    schema: REPORT_SCHEMA,
                    mode,
                    rows,
                    max_ratio,
                    max_at,
                },
            )
        }
    }
}

fn check_kmax(kmax: usize) -> Result<(), Failure> {
    if !(2..=MAX_SWEEP_USERS).contains(&kmax) {
        return Err(Failure::Usage(format!(
            "--kmax must lie in 2..={MAX_SWEEP_USERS}"
        )));
    }
    Ok(())
}

pub fn run(args: &SweepArgs) -> Result<(), Failure> {
    match args.mode {
        SweepMode::Gap => {
            check_kmax(args.kmax)?;
            let cert = gap_sweep(args.kmax);
            let rows: Vec<GapRow> = cert.rows.iter().map(|r| r.row()).collect();
            let max = format_rational(&cert.max_ratio);
            emit(args, "gap", &rows, Some((max.clone(), cert.max_at)))?;
            eprintln!(
                "{} cells, max gap {max} (~{:.6}) at K={}, Gamma={}",
                rows.len(),
                cachemat::combinatorics::rational_to_f64(&cert.max_ratio),
                cert.max_at.0,
                cert.max_at.1
            );
            if let Some((k, g)) = cert.violations.first() {
                return Err(Failure::Check(format!(
                    "{} cells reach gap 4, first at K={k}, Gamma={g}",
                    cert.violations.len()
                )));
            }
            Ok(())
        }
        SweepMode::Dof => {
            check_kmax(args.kmax)?;
            let rows: Vec<DofRow> = (2..=args.kmax)
                .into_par_iter()
                .flat_map_iter(|k| (1..k).map(move |g| (k, g)))
                .map(|(k, g)| {
                    let s = synergy(k, g)?;
                    Ok(DofRow {
                        k,
                        replication: g,
                        gamma: s.gamma,
                        t: format_rational(&cachemat::bounds::achievable_t(k, g)),
                        d: s.d,
                        d_ss: s.d_ss,
                        d_mat: s.d_mat,
                        margin: s.margin,
                    })
                })
                .collect::<Result<_, cachemat::Error>>()?;
            emit(args, "dof", &rows, None)
        }
        SweepMode::Buffer => {
            if args.users < 2 {
                return Err(Failure::Usage("buffer sweep needs K >= 2".into()));
            }
            let grid = parse_grid(&args.gaps)?;
            if grid.iter().any(|&g| g <= 0.0) {
                return Err(Failure::Usage("gap targets must be positive".into()));
            }
            let rows: Vec<_> = grid
                .par_iter()
                .map(|&g| buffer_row(g, args.users))
                .collect();
            emit(args, "buffer", &rows, None)
        }
    }
}
