use std::time::Instant;

use cachemat::bounds::{
    achievable_t, log_ratio_endpoint_check, large_cache_ratio_check, gap_certificate, microscopic_dof, synergy,
};
use cachemat::combinatorics::{format_rational, rational_to_f64};
use cachemat::decoder::verify_all;
use cachemat::placement::{fill_caches, subpacketize};
use cachemat::scheduler::plan_phases;
use cachemat::simulator::simulate;
use cachemat::{FieldElement, Rational, SystemConfig};
use num_traits::ToPrimitive;
use rayon::prelude::*;

use crate::{Failure, VerifyArgs};

type Outcome = Result<String, String>;
type Check = (&'static str, fn(&Scale) -> Outcome);

struct Scale {
    plan_kmax: usize,
    sim_kmax: usize,
    seeds: u64,
}

fn err(e: cachemat::Error) -> String {
    e.to_string()
}

fn distinct(k: usize) -> Vec<usize> {
    (1..=k).collect()
}

fn plans(
    kmax: usize,
    mut check: impl FnMut(usize, usize, &cachemat::DeliveryPlan) -> Result<(), String>,
) -> Outcome {
    let mut cells = 0;
    for k in 1..=kmax {
        for g in 0..k {
            let cfg = SystemConfig::with_replication(k, k, g).map_err(err)?;
            let plan = plan_phases(&cfg, &distinct(k)).map_err(err)?;
            check(k, g, &plan)?;
            cells += 1;
        }
    }
    Ok(format!("{cells} configurations, K <= {kmax}"))
}

fn telescoping(s: &Scale) -> Outcome {
    plans(s.plan_kmax, |k, g, plan| {
        let t = plan.total_duration();
        if t != achievable_t(k, g) {
            return Err(format!("K={k} Gamma={g}: duration {}", format_rational(&t)));
        }
        Ok(())
    })
}

fn phase_ratio(s: &Scale) -> Outcome {
    plans(s.plan_kmax, |k, g, plan| {
        let base = Rational::from_integer((g + 1).into()) * &plan.phases[0].duration;
        for p in &plan.phases {
            if Rational::from_integer(p.phase.into()) * &p.duration != base {
                return Err(format!(
                    "K={k} Gamma={g}: phase {} breaks the ratio law",
                    p.phase
                ));
            }
        }
        Ok(())
    })
}

fn use_accounting(s: &Scale) -> Outcome {
    plans(s.plan_kmax, |k, g, plan| {
        if plan.duration_from_uses() != achievable_t(k, g) {
            return Err(format!(
                "K={k} Gamma={g}: uses give {}",
                format_rational(&plan.duration_from_uses())
            ));
        }
        Ok(())
    })
}

fn cache_identity(s: &Scale) -> Outcome {
    let mut cells = 0;
    for k in 2..=s.sim_kmax {
        for g in 0..=k {
            let cfg = SystemConfig::with_replication(k, k, g).map_err(err)?;
            let lib = cachemat::simulator::seeded_library(&cfg, 0).map_err(err)?;
            let caches = fill_caches(&cfg, &subpacketize(&cfg, &lib).map_err(err)?);
            for c in &caches {
                if c.symbol_count() * k != g * lib.total_symbols() {
                    return Err(format!(
                        "K={k} Gamma={g}: user {} caches {} symbols",
                        c.user,
                        c.symbol_count()
                    ));
                }
            }
            cells += 1;
        }
    }
    Ok(format!("{cells} configurations"))
}

fn gap(s: &Scale) -> Outcome {
    let cert = gap_certificate(s.plan_kmax).map_err(err)?;
    Ok(format!(
        "max {} (~{:.4}) at K={}, Gamma={}",
        format_rational(&cert.max_ratio),
        rational_to_f64(&cert.max_ratio),
        cert.max_at.0,
        cert.max_at.1
    ))
}

fn large_cache(s: &Scale) -> Outcome {
    let worst = large_cache_ratio_check(s.plan_kmax).map_err(err)?;
    Ok(format!("worst ratio ~{:.4}", rational_to_f64(&worst)))
}

fn log_ratio(_: &Scale) -> Outcome {
    let r = log_ratio_endpoint_check().map_err(err)?;
    Ok(format!(
        "f(1/36) = {:.4}, f(1/2) = {:.4}",
        r.f_low, r.f_high
    ))
}

fn synergy_k100(_: &Scale) -> Outcome {
    let r = synergy(100, 1).map_err(err)?;
    if r.margin <= 1e-6 {
        return Err(format!("margin {}", r.margin));
    }
    Ok(format!("margin {:.6}", r.margin))
}

fn microscopic(_: &Scale) -> Outcome {
    let (g, d) = microscopic_dof(10_000, 7.0);
    let d = rational_to_f64(&d);
    if d < 0.9 / 7.0 {
        return Err(format!("d = {d} at Gamma = {g}"));
    }
    Ok(format!("Gamma = {g}, d = {d:.5}"))
}

fn end_to_end(s: &Scale) -> Outcome {
    let cells: Vec<(usize, usize, u64)> = (2..=s.sim_kmax)
        .flat_map(|k| (0..=k).flat_map(move |g| (0..s.seeds).map(move |seed| (k, g, seed))))
        .collect();
    cells.par_iter().try_for_each(|&(k, g, seed)| {
        let cfg = SystemConfig::with_replication(k, k, g).map_err(err)?;
        let (lib, transcript) = simulate(&cfg, &distinct(k), seed).map_err(err)?;
        let expected = transcript.plan.total_uses().to_usize();
        if Some(transcript.uses.len()) != expected {
            return Err(format!(
                "K={k} Gamma={g} seed={seed}: {} uses",
                transcript.uses.len()
            ));
        }
        let report = verify_all(&transcript, &lib);
        if !report.pass {
            return Err(format!("K={k} Gamma={g} seed={seed}: decode failed"));
        }
        Ok(())
    })?;
    Ok(format!("{} runs", cells.len()))
}

fn fault_injection(_: &Scale) -> Outcome {
    let cfg = SystemConfig::with_replication(4, 4, 1).map_err(err)?;
    let (lib, mut transcript) = simulate(&cfg, &distinct(4), 1).map_err(err)?;
    let m = transcript.plan.phases[1]
        .combining
        .as_mut()
        .ok_or("phase 3 has no combining matrix")?;
    m[(0, 0)] += FieldElement::ONE;
    let report = verify_all(&transcript, &lib);
    if report.pass {
        return Err("tampered combining matrix went undetected".into());
    }
    let failed = report.users.iter().filter(|u| !u.matched).count();
    Ok(format!("{failed} of 4 users rejected"))
}

pub fn run(args: &VerifyArgs) -> Result<(), Failure> {
    let scale = if args.quick {
        Scale {
            plan_kmax: 16,
            sim_kmax: 4,
            seeds: 2,
        }
    } else {
        Scale {
            plan_kmax: 64,
            sim_kmax: 6,
            seeds: 10,
        }
    };
    let checks: [Check; 11] = [
        ("telescoping", telescoping),
        ("phase-ratio", phase_ratio),
        ("use-accounting", use_accounting),
        ("cache-identity", cache_identity),
        ("gap-certificate", gap),
        ("large-cache-ratio", large_cache),
        ("log-ratio-endpoints", log_ratio),
        ("synergy-k100", synergy_k100),
        ("microscopic-cache", microscopic),
        ("end-to-end", end_to_end),
        ("fault-injection", fault_injection),
    ];
    let start = Instant::now();
    for (name, check) in checks {
        let t = Instant::now();
        match check(&scale) {
            Ok(detail) => println!(
                "ok    {name:<18} {detail} ({:.2}s)",
                t.elapsed().as_secs_f64()
            ),
            Err(msg) => {
                println!("FAIL  {name:<18} {msg}");
                return Err(Failure::Check(format!("{name}: {msg}")));
            }
        }
    }
    println!("all checks passed in {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
