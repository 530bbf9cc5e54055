//! Achievable delivery time, the converse bound, the gap between them, and
//! the DoF quantities derived from both.
//!
//! Everything that feeds a gap or duration is exact. The logarithmic
//! approximations (`epsilon`-based formulas) run in doubles.

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{
    epsilon, format_rational, harmonic, harmonic_tail, rational_serde, rational_to_f64, Rational,
    EULER_GAMMA,
};
use crate::error::{Error, Result};
use crate::placement::SystemConfig;

/// Grid size for the endpoint check.
pub const ENDPOINT_GRID_POINTS: usize = 10_000;

/// Slack for floating-point comparisons.
pub const FLOAT_SLACK: f64 = 1e-9;

fn int(n: usize) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// `T = H_K - H_Gamma`.
pub fn achievable_t(users: usize, replication: usize) -> Rational {
    harmonic_tail(replication as u64, users as u64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OuterBound {
    /// `max(raw, 0)`
    #[serde(with = "rational_serde")]
    pub value: Rational,
    /// Smallest maximizing `s`; zero when the range of `s` is empty.
    pub argmax: usize,
    #[serde(with = "rational_serde")]
    pub raw: Rational,
    /// The raw maximum was not positive.
    pub clamped: bool,
}

/// `max_s H_s - s M / floor(N / s)` over `s = 1 ..= min(floor(N / M), K)`.
pub fn outer_bound(users: usize, files: usize, cache_size: &Rational) -> OuterBound {
    let s_max = outer_bound_range(users, files, cache_size);
    let mut best: Option<(Rational, usize)> = None;
    let mut h = Rational::zero();
    for s in 1..=s_max {
        h += Rational::new(BigInt::one(), BigInt::from(s));
        let blocks = files / s;
        let value = &h - cache_size * int(s) / int(blocks);
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, s));
        }
    }
    match best {
        Some((raw, argmax)) => {
            let clamped = !raw.is_positive();
            OuterBound {
                value: if clamped {
                    Rational::zero()
                } else {
                    raw.clone()
                },
                argmax,
                raw,
                clamped,
            }
        }
        None => OuterBound {
            value: Rational::zero(),
            argmax: 0,
            raw: Rational::zero(),
            clamped: true,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundReport {
    pub k: usize,
    pub n: usize,
    #[serde(with = "rational_serde")]
    pub m: Rational,
    pub replication: usize,
    #[serde(with = "rational_serde")]
    pub gamma: Rational,
    #[serde(with = "rational_serde")]
    pub t_ach: Rational,
    #[serde(with = "rational_serde")]
    pub t_lower: Rational,
    /// `t_ach / t_lower`, absent when the bound is zero.
    pub gap_upper: Option<GapValue>,
    /// `(1 - gamma) / t_ach`, absent when `t_ach = 0`.
    pub dof: Option<GapValue>,
    pub argmax_s: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GapValue(#[serde(with = "rational_serde")] pub Rational);

impl BoundReport {
    pub fn new(config: &SystemConfig) -> Self {
        let (k, n, g) = (config.users(), config.files(), config.replication());
        let m = config.cache_size();
        let t_ach = achievable_t(k, g);
        let lb = outer_bound(k, n, &m);
        let gap_upper = (!lb.value.is_zero()).then(|| GapValue(&t_ach / &lb.value));
        let gamma = config.gamma();
        let dof = (!t_ach.is_zero()).then(|| GapValue((Rational::one() - &gamma) / &t_ach));
        BoundReport {
            k,
            n,
            m,
            replication: g,
            gamma,
            t_ach,
            t_lower: lb.value,
            gap_upper,
            dof,
            argmax_s: lb.argmax,
        }
    }

    pub fn gap(&self) -> Option<&Rational> {
        self.gap_upper.as_ref().map(|g| &g.0)
    }

    pub fn row(&self) -> GapRow {
        GapRow {
            k: self.k,
            gamma_count: self.replication,
            gamma: rational_to_f64(&self.gamma),
            t: format_rational(&self.t_ach),
            lb: format_rational(&self.t_lower),
            gap: self.gap().map_or(f64::INFINITY, rational_to_f64),
            argmax_s: self.argmax_s,
        }
    }
}

/// One CSV row of the gap sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "Gamma")]
    pub gamma_count: usize,
    pub gamma: f64,
    #[serde(rename = "T")]
    pub t: String,
    #[serde(rename = "LB")]
    pub lb: String,
    pub gap: f64,
    pub argmax_s: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapCertificate {
    pub k_max: usize,
    pub rows: Vec<BoundReport>,
    #[serde(with = "rational_serde")]
    pub max_ratio: Rational,
    pub max_at: (usize, usize),
    /// Cells with ratio `>= 4`, as `(K, Gamma)`.
    pub violations: Vec<(usize, usize)>,
}

/// Every `(K, Gamma)` with `2 <= K <= k_max`, `N = K`, `1 <= Gamma <= K - 1`.
pub fn gap_sweep(k_max: usize) -> GapCertificate {
    let four = int(4);
    let rows: Vec<BoundReport> = (2..=k_max)
        .into_par_iter()
        .flat_map_iter(|k| {
            (1..k).map(move |g| {
                let cfg = SystemConfig::with_replication(k, k, g).expect("valid sweep cell");
                BoundReport::new(&cfg)
            })
        })
        .collect();
    let mut max_ratio = Rational::zero();
    let mut max_at = (0, 0);
    let mut violations = Vec::new();
    for r in &rows {
        match r.gap() {
            Some(gap) => {
                if *gap > max_ratio {
                    max_ratio = gap.clone();
                    max_at = (r.k, r.replication);
                }
                if *gap >= four {
                    violations.push((r.k, r.replication));
                }
            }
            None => violations.push((r.k, r.replication)),
        }
    }
    GapCertificate {
        k_max,
        rows,
        max_ratio,
        max_at,
        violations,
    }
}

/// [`gap_sweep`], failing on the first cell whose ratio is not below 4.
pub fn gap_certificate(k_max: usize) -> Result<GapCertificate> {
    if k_max < 2 {
        return Err(Error::InvalidConfig(
            "gap certificate needs K_max >= 2".into(),
        ));
    }
    let cert = gap_sweep(k_max);
    if let Some(&(k, gamma)) = cert.violations.first() {
        let ratio = cert
            .rows
            .iter()
            .find(|r| r.k == k && r.replication == gamma)
            .and_then(BoundReport::gap)
            .map_or_else(|| "unbounded".to_string(), format_rational);
        return Err(Error::CertificateViolation { k, gamma, ratio });
    }
    Ok(cert)
}

/// `d = (1 - gamma) / T` for the achievable scheme.
pub fn dof(users: usize, files: usize, cache_size: &Rational) -> Result<Rational> {
    let cfg = SystemConfig::new(users, files, cache_size)?;
    let t = achievable_t(users, cfg.replication());
    if t.is_zero() {
        return Err(Error::InvalidConfig("DoF undefined with Gamma = K".into()));
    }
    Ok((Rational::one() - cfg.gamma()) / t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynergyReport {
    pub k: usize,
    pub replication: usize,
    pub gamma: f64,
    pub d: f64,
    pub d_ss: f64,
    pub d_mat: f64,
    /// `d - (d_ss + d_mat)`
    pub margin: f64,
    /// Single-stream coded-caching time `K (1 - gamma) / (1 + K gamma)`.
    #[serde(with = "rational_serde")]
    pub t_ss: Rational,
}

pub fn synergy(users: usize, replication: usize) -> Result<SynergyReport> {
    if replication == 0 || replication >= users {
        return Err(Error::InvalidConfig(format!(
            "synergy needs 1 <= Gamma <= K - 1, got Gamma = {replication}, K = {users}"
        )));
    }
    let gamma = Rational::new(BigInt::from(replication), BigInt::from(users));
    let one_minus = Rational::one() - &gamma;
    let t = achievable_t(users, replication);
    let t_ss = int(users) * &one_minus / (Rational::one() + int(replication));
    let d = rational_to_f64(&(&one_minus / &t));
    let d_ss = rational_to_f64(&(&one_minus / &t_ss));
    let d_mat = rational_to_f64(&(Rational::one() / harmonic(users as u64)));
    Ok(SynergyReport {
        k: users,
        replication,
        gamma: rational_to_f64(&gamma),
        d,
        d_ss,
        d_mat,
        margin: d - (d_ss + d_mat),
        t_ss,
    })
}

/// `gamma'_G = exp(-(G - eps_K + eps_inf))`.
pub fn gamma_for_gap(gap: f64, users: u64) -> f64 {
    (-(gap - epsilon(users) + EULER_GAMMA)).exp()
}

/// Smallest `Gamma` in `0..K` whose DoF reaches `1 / G`, by exhaustive scan.
pub fn min_replication_for_gap(gap: f64, users: usize) -> Option<usize> {
    // tail[g] = H_K - H_g, accumulated from the small end of the sum
    let mut tails = vec![0.0f64; users + 1];
    for g in (0..users).rev() {
        tails[g] = tails[g + 1] + 1.0 / (g + 1) as f64;
    }
    (0..users).find(|&g| {
        let d = (1.0 - g as f64 / users as f64) / tails[g];
        d >= 1.0 / gap
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferRow {
    #[serde(rename = "G")]
    pub gap: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub gamma_formula: f64,
    pub gamma_exhaustive: Option<f64>,
    /// `gamma_exhaustive / gamma_formula`
    pub ratio: Option<f64>,
}

pub fn buffer_row(gap: f64, users: usize) -> BufferRow {
    let formula = gamma_for_gap(gap, users as u64);
    let exhaustive = min_replication_for_gap(gap, users).map(|g| g as f64 / users as f64);
    BufferRow {
        gap,
        k: users,
        gamma_formula: formula,
        gamma_exhaustive: exhaustive,
        ratio: exhaustive.map(|e| e / formula),
    }
}

/// DoF at the feasible cache size closest to `gamma = exp(-G)`.
pub fn microscopic_dof(users: usize, gap: f64) -> (usize, Rational) {
    let target = users as f64 * (-gap).exp();
    let g = (target.round() as usize).clamp(1, users - 1);
    let gamma = Rational::new(BigInt::from(g), BigInt::from(users));
    let d = (Rational::one() - gamma) / achievable_t(users, g);
    (g, d)
}

/// `f(gamma) = (ln(1/gamma) + eps_2 - eps_inf) / (1 - gamma)`.
pub fn log_ratio_f(gamma: f64) -> f64 {
    ((1.0 / gamma).ln() + epsilon(2) - EULER_GAMMA) / (1.0 - gamma)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointReport {
    pub f_low: f64,
    pub f_high: f64,
    pub grid_max: f64,
    pub grid_argmax: f64,
    pub points: usize,
}

/// Grid check that `f` peaks at an endpoint of `[1/36, 1/2]` and that both
/// endpoints stay below 4.
pub fn log_ratio_endpoint_check() -> Result<EndpointReport> {
    let (lo, hi) = (1.0 / 36.0, 0.5);
    let f_low = log_ratio_f(lo);
    let f_high = log_ratio_f(hi);
    let endpoint_max = f_low.max(f_high);
    let mut grid_max = f64::NEG_INFINITY;
    let mut grid_argmax = lo;
    for i in 0..ENDPOINT_GRID_POINTS {
        let gamma = lo + (hi - lo) * i as f64 / (ENDPOINT_GRID_POINTS - 1) as f64;
        let v = log_ratio_f(gamma);
        if v > endpoint_max + FLOAT_SLACK {
            return Err(Error::CheckFailed(format!(
                "f({gamma}) = {v} exceeds endpoint maximum {endpoint_max}"
            )));
        }
        if v > grid_max {
            grid_max = v;
            grid_argmax = gamma;
        }
    }
    for (g, v) in [(lo, f_low), (hi, f_high)] {
        if v >= 4.0 {
            return Err(Error::CheckFailed(format!("f({g}) = {v} is not below 4")));
        }
    }
    Ok(EndpointReport {
        f_low,
        f_high,
        grid_max,
        grid_argmax,
        points: ENDPOINT_GRID_POINTS,
    })
}

/// Exact check of `(H_K - H_Gamma) / (1 - gamma) < 2` for `K/2 <= Gamma < K`.
pub fn large_cache_ratio_check(k_max: usize) -> Result<Rational> {
    let two = int(2);
    let mut worst = Rational::zero();
    for k in 2..=k_max {
        for g in k.div_ceil(2)..k {
            let one_minus = Rational::new(BigInt::from(k - g), BigInt::from(k));
            let ratio = achievable_t(k, g) / one_minus;
            if ratio >= two {
                return Err(Error::CheckFailed(format!(
                    "large-cache ratio {} at K={k}, Gamma={g}",
                    format_rational(&ratio)
                )));
            }
            if ratio > worst {
                worst = ratio;
            }
        }
    }
    Ok(worst)
}

/// Number of `s` values considered by the outer bound, for reporting.
pub fn outer_bound_range(users: usize, files: usize, cache_size: &Rational) -> usize {
    if cache_size.is_zero() {
        users
    } else {
        let q = (int(files) / cache_size).floor().to_integer();
        q.to_usize().unwrap_or(usize::MAX).min(users)
    }
}
