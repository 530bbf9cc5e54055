use cachemat::combinatorics::parse_rational;
use cachemat::{Rational, SeededRng, SystemConfig};

use crate::Failure;

/// Stream index for demand draws, distinct from library and channel streams.
const DEMAND_STREAM: u64 = 2;

pub fn parse_demand(
    text: &str,
    users: usize,
    files: usize,
    seed: u64,
) -> Result<Vec<usize>, Failure> {
    match text.trim() {
        "distinct" => {
            if users > files {
                return Err(Failure::Usage(format!(
                    "distinct demand needs K <= N, got K={users}, N={files}"
                )));
            }
            Ok((1..=users).collect())
        }
        "uniform-random" => {
            let mut rng = SeededRng::child(seed, DEMAND_STREAM);
            Ok((0..users)
                .map(|_| ((rng.next_u64() as u128 * files as u128) >> 64) as usize + 1)
                .collect())
        }
        list => {
            let demand = list
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|_| Failure::Usage(format!("bad file index {s:?} in demand")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            if demand.len() != users {
                return Err(Failure::Usage(format!(
                    "demand lists {} files for {users} users",
                    demand.len()
                )));
            }
            if let Some(d) = demand.iter().find(|&&d| d == 0 || d > files) {
                return Err(Failure::Usage(format!(
                    "file index {d} outside 1..={files}"
                )));
            }
            Ok(demand)
        }
    }
}

pub fn build_config(
    users: usize,
    files: usize,
    cache: Option<&str>,
    gamma: Option<usize>,
) -> Result<SystemConfig, Failure> {
    let config = match (cache, gamma) {
        (Some(m), None) => {
            let m: Rational = parse_rational(m)
                .ok_or_else(|| Failure::Usage(format!("cannot parse cache size {m:?}")))?;
            SystemConfig::new(users, files, &m)?
        }
        (None, Some(g)) => SystemConfig::with_replication(users, files, g)?,
        _ => return Err(Failure::Usage("give exactly one of -M and --gamma".into())),
    };
    Ok(config)
}

/// `a..b` inclusive, `a..=b`, or a comma list of numbers.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, Failure> {
    let bad = || Failure::Usage(format!("bad grid {text:?}"));
    if let Some((a, b)) = text.split_once("..") {
        let a: i64 = a.trim().parse().map_err(|_| bad())?;
        let b: i64 = b
            .trim()
            .trim_start_matches('=')
            .parse()
            .map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).map(|g| g as f64).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
        .collect()
}
