//! Exact rationals, harmonic numbers, binomials and canonical subsets of `[K]`.
//!
//! Subsets are ordered lexicographically on their sorted element lists and
//! ranked through the combinatorial number system, so every `j`-subset of
//! `[K]` has a stable index in `0..C(K, j)`.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

/// Exact arbitrary-precision ratio, always kept in lowest terms with a
/// positive denominator.
pub type Rational = BigRational;

/// Euler-Mascheroni constant, the limit of `H_n - ln n`.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Up to this `n`, [`epsilon`] goes through the exact harmonic number.
const EXACT_EPSILON_LIMIT: u64 = 4096;

pub fn rational(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn rational_from_int(n: impl Into<BigInt>) -> Rational {
    Rational::from_integer(n.into())
}

pub fn rational_to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// `"num/den"`, or just `"num"` for integers.
pub fn format_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Parses `"a"`, `"a/b"` or a finite decimal like `"1.5"`.
pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(Rational::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let digits: BigInt = format!("{int}{frac}").parse().ok()?;
        let scale = num_traits::pow(BigInt::from(10u32), frac.len());
        return Some(Rational::new(digits, scale));
    }
    s.parse::<BigInt>().ok().map(Rational::from_integer)
}

/// Serde adapter writing a [`Rational`] as `{"num": "...", "den": "..."}`.
pub mod rational_serde {
    use super::Rational;
    use num_bigint::BigInt;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        num: String,
        den: String,
    }

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        Repr {
            num: r.numer().to_string(),
            den: r.denom().to_string(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let repr = Repr::deserialize(d)?;
        let num: BigInt = repr.num.parse().map_err(D::Error::custom)?;
        let den: BigInt = repr.den.parse().map_err(D::Error::custom)?;
        if den == BigInt::from(0) {
            return Err(D::Error::custom("zero denominator"));
        }
        Ok(Rational::new(num, den))
    }
}

/// `C(n, k)`, zero when `k > n`.
pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

/// `C(n, k)` in native width, `None` on overflow.
pub fn binomial_u64(n: u64, k: u64) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k as u128 {
        // acc * (n - i) / (i + 1) stays exact because acc = C(n, i)
        acc = acc.checked_mul(n as u128 - i)? / (i + 1);
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

/// `H_hi - H_lo = sum_{i = lo+1}^{hi} 1/i`, zero when `hi <= lo`.
///
/// Sums over a common denominator `lcm(lo+1..=hi)` and reduces once, which
/// keeps `n` in the tens of thousands cheap.
pub fn harmonic_tail(lo: u64, hi: u64) -> Rational {
    if hi <= lo {
        return Rational::zero();
    }
    let mut lcm = BigUint::one();
    for i in lo + 1..=hi {
        let r = (&lcm % i).to_u64().unwrap_or(0);
        let g = r.gcd(&i);
        lcm = lcm / g * i;
    }
    let mut num = BigUint::zero();
    for i in lo + 1..=hi {
        num += &lcm / i;
    }
    Rational::new(BigInt::from(num), BigInt::from(lcm))
}

/// The `n`-th harmonic number, `H_0 = 0`.
pub fn harmonic(n: u64) -> Rational {
    harmonic_tail(0, n)
}

/// `H_n - ln n` as a double.
pub fn epsilon(n: u64) -> f64 {
    assert!(n >= 1, "epsilon is defined for n >= 1");
    let h = if n <= EXACT_EPSILON_LIMIT {
        rational_to_f64(&harmonic(n))
    } else {
        harmonic_f64(n)
    };
    h - (n as f64).ln()
}

// Neumaier-compensated sum of 1/i, smallest terms first.
fn harmonic_f64(n: u64) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for i in (1..=n).rev() {
        let term = 1.0 / i as f64;
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// A subset of `[K] = {1, ..., K}` with strictly increasing elements.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Subset(Vec<usize>);

impl Subset {
    pub fn empty() -> Self {
        Subset(Vec::new())
    }

    /// Builds a subset from any list of distinct elements in `1..=k`.
    pub fn new(k: usize, mut elements: Vec<usize>) -> Option<Self> {
        elements.sort_unstable();
        let distinct = elements.windows(2).all(|w| w[0] < w[1]);
        let in_range = elements.iter().all(|&e| (1..=k).contains(&e));
        (distinct && in_range).then_some(Subset(elements))
    }

    pub fn elements(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, e: usize) -> bool {
        self.0.binary_search(&e).is_ok()
    }

    /// Index of `e` within the sorted element list.
    pub fn position(&self, e: usize) -> Option<usize> {
        self.0.binary_search(&e).ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn without(&self, e: usize) -> Subset {
        Subset(self.0.iter().copied().filter(|&x| x != e).collect())
    }

    pub fn with(&self, e: usize) -> Subset {
        match self.0.binary_search(&e) {
            Ok(_) => self.clone(),
            Err(pos) => {
                let mut v = self.0.clone();
                v.insert(pos, e);
                Subset(v)
            }
        }
    }

    /// Elements of `[k]` not in this subset.
    pub fn complement(&self, k: usize) -> Vec<usize> {
        (1..=k).filter(|&e| !self.contains(e)).collect()
    }

    /// Lexicographic rank among all `len()`-subsets of `[k]`.
    pub fn rank(&self, k: usize) -> u64 {
        let j = self.len() as u64;
        let k = k as u64;
        let total = binomial_u64(k, j).expect("subset rank overflows u64");
        let tail: u64 = self
            .0
            .iter()
            .enumerate()
            .map(|(i, &a)| binomial_u64(k - a as u64, j - i as u64).unwrap_or(0))
            .sum();
        total - 1 - tail
    }

    /// Inverse of [`Subset::rank`].
    pub fn unrank(k: usize, j: usize, mut index: u64) -> Option<Subset> {
        let total = binomial_u64(k as u64, j as u64)?;
        if index >= total {
            return None;
        }
        let mut elements = Vec::with_capacity(j);
        let mut next = 1usize;
        for slot in 0..j {
            let remaining = (j - slot - 1) as u64;
            loop {
                let count = binomial_u64((k - next) as u64, remaining)?;
                if index < count {
                    elements.push(next);
                    next += 1;
                    break;
                }
                index -= count;
                next += 1;
            }
        }
        Some(Subset(elements))
    }
}

impl std::fmt::Display for Subset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{{")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, "}}")
    }
}

/// Lazy lexicographic iterator over the `j`-subsets of `[k]`.
#[derive(Debug, Clone)]
pub struct Subsets {
    k: usize,
    current: Option<Vec<usize>>,
}

impl Iterator for Subsets {
    type Item = Subset;

    fn next(&mut self) -> Option<Subset> {
        let cur = self.current.take()?;
        let out = Subset(cur.clone());
        let j = cur.len();
        let mut next = cur;
        // rightmost element that can still be incremented
        let pivot = (0..j).rev().find(|&i| next[i] < self.k - (j - 1 - i));
        if let Some(i) = pivot {
            next[i] += 1;
            for t in i + 1..j {
                next[t] = next[t - 1] + 1;
            }
            self.current = Some(next);
        }
        Some(out)
    }
}

pub fn subsets(k: usize, j: usize) -> Subsets {
    Subsets {
        k,
        current: (j <= k).then(|| (1..=j).collect()),
    }
}

/// All `C(k, j)` subsets of size `j` in lexicographic order.
pub fn enumerate_subsets(k: usize, j: usize) -> Vec<Subset> {
    subsets(k, j).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pascal(n: usize) -> Vec<Vec<u64>> {
        let mut rows = vec![vec![1u64]];
        for i in 1..=n {
            let prev = &rows[i - 1];
            let mut row = vec![1u64; i + 1];
            for c in 1..i {
                row[c] = prev[c - 1] + prev[c];
            }
            rows.push(row);
        }
        rows
    }

    #[test]
    fn binomial_examples() {
        assert_eq!(binomial(4, 2), BigUint::from(6u32));
        assert_eq!(binomial(9, 0), BigUint::one());
        assert_eq!(binomial(0, 0), BigUint::one());
        assert_eq!(binomial(3, 5), BigUint::zero());
        let tri = pascal(8);
        assert_eq!(binomial(8, 3), BigUint::from(tri[8][3]));
        assert_eq!(tri[8][3], 56);
    }

    #[test]
    fn binomial_matches_pascal() {
        let tri = pascal(60);
        for n in 0..=60u64 {
            for k in 0..=n {
                let want = tri[n as usize][k as usize];
                assert_eq!(binomial(n, k), BigUint::from(want));
                assert_eq!(binomial_u64(n, k), Some(want));
            }
        }
        assert_eq!(binomial_u64(64, 32), Some(1_832_624_140_942_590_534));
        assert_eq!(binomial_u64(100, 50), None);
    }

    #[test]
    fn harmonic_examples() {
        assert_eq!(harmonic(0), Rational::zero());
        assert_eq!(harmonic(1), rational(1, 1));
        assert_eq!(harmonic(4), rational(25, 12));
        // term-by-term exact summation
        let mut acc = Rational::zero();
        for i in 1..=10 {
            acc += rational(1, i);
        }
        assert_eq!(acc, rational(7381, 2520));
        assert_eq!(harmonic(10), acc);
    }

    #[test]
    fn harmonic_tail_is_difference() {
        for lo in 0..20 {
            for hi in lo..40 {
                assert_eq!(harmonic_tail(lo, hi), harmonic(hi) - harmonic(lo));
            }
        }
        assert!(harmonic_tail(5, 3).is_zero());
    }

    #[test]
    fn harmonic_step_is_reciprocal() {
        // running exact sum as an independent route
        let mut running = Rational::zero();
        for n in 1..=10_000u64 {
            running += Rational::new(BigInt::one(), BigInt::from(n));
            if n <= 300 || n % 997 == 0 || n == 10_000 {
                let h = harmonic(n);
                assert_eq!(h, running, "H_{n}");
                assert_eq!(
                    &h - harmonic(n - 1),
                    Rational::new(BigInt::one(), BigInt::from(n))
                );
            }
        }
    }

    #[test]
    fn epsilon_examples() {
        assert_eq!(epsilon(1), 1.0);
        assert!((epsilon(1_000_000) - 0.5772).abs() < 1e-3);
        let mut h36 = 0.0f64;
        for i in 1..=36 {
            h36 += 1.0 / i as f64;
        }
        assert!((epsilon(36) - (h36 - 36f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn epsilon_paths_agree_at_switch() {
        let n = EXACT_EPSILON_LIMIT;
        let exact = rational_to_f64(&harmonic(n + 1));
        assert!((harmonic_f64(n + 1) - exact).abs() < 1e-13);
        assert!(epsilon(n) >= epsilon(n + 1));
    }

    #[test]
    fn epsilon_non_increasing_log_sampled() {
        let mut points: Vec<u64> = Vec::new();
        let mut x = 1.0f64;
        while x <= 1e6 {
            points.push(x.round() as u64);
            x *= 1.05;
        }
        points.push(1_000_000);
        points.dedup();
        let values: Vec<f64> = points.iter().map(|&n| epsilon(n)).collect();
        for w in values.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "{w:?}");
        }
    }

    #[test]
    fn subset_enumeration_examples() {
        let s = enumerate_subsets(3, 2);
        let lists: Vec<Vec<usize>> = s.iter().map(|x| x.elements().to_vec()).collect();
        assert_eq!(lists, vec![vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(enumerate_subsets(7, 0), vec![Subset::empty()]);
        let s = enumerate_subsets(5, 3);
        assert_eq!(s.len(), 10);
        assert_eq!(s[0].elements(), &[1, 2, 3]);
        assert_eq!(s[9].elements(), &[3, 4, 5]);
        assert!(enumerate_subsets(2, 3).is_empty());
    }

    // brute force: filter all bitmasks by popcount, sort lexicographically
    fn brute_subsets(k: usize, j: usize) -> Vec<Vec<usize>> {
        let mut all: Vec<Vec<usize>> = (0u32..1 << k)
            .filter(|m| m.count_ones() as usize == j)
            .map(|m| (1..=k).filter(|&e| m & (1 << (e - 1)) != 0).collect())
            .collect();
        all.sort();
        all
    }

    #[test]
    fn enumeration_matches_brute_force_and_ranks_round_trip() {
        for k in 0..=16usize {
            for j in 0..=k {
                let subs = enumerate_subsets(k, j);
                assert_eq!(BigUint::from(subs.len()), binomial(k as u64, j as u64));
                if k <= 10 {
                    let brute = brute_subsets(k, j);
                    let ours: Vec<Vec<usize>> =
                        subs.iter().map(|s| s.elements().to_vec()).collect();
                    assert_eq!(ours, brute);
                }
                for (i, s) in subs.iter().enumerate() {
                    assert_eq!(s.rank(k), i as u64);
                    assert_eq!(Subset::unrank(k, j, i as u64).as_ref(), Some(s));
                }
                assert!(Subset::unrank(k, j, subs.len() as u64).is_none());
            }
        }
    }

    #[test]
    fn subset_editing() {
        let s = Subset::new(5, vec![4, 1, 3]).unwrap();
        assert_eq!(s.elements(), &[1, 3, 4]);
        assert_eq!(s.without(3).elements(), &[1, 4]);
        assert_eq!(s.with(2).elements(), &[1, 2, 3, 4]);
        assert_eq!(s.complement(5), vec![2, 5]);
        assert_eq!(s.position(4), Some(2));
        assert!(Subset::new(5, vec![1, 1]).is_none());
        assert!(Subset::new(5, vec![0]).is_none());
        assert!(Subset::new(5, vec![6]).is_none());
        assert_eq!(s.to_string(), "{1,3,4}");
    }

    #[test]
    fn rational_parsing_and_printing() {
        assert_eq!(parse_rational("3/6"), Some(rational(1, 2)));
        assert_eq!(parse_rational("1.5"), Some(rational(3, 2)));
        assert_eq!(parse_rational("4"), Some(rational(4, 1)));
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(parse_rational("x"), None);
        assert_eq!(format_rational(&rational(10, 4)), "5/2");
        assert_eq!(format_rational(&rational(-4, 2)), "-2");
        let json = serde_json::to_string(&Wrapper(rational(5, 6))).unwrap();
        assert_eq!(json, r#"{"num":"5","den":"6"}"#);
        let back: Wrapper = serde_json::from_str(&json).unwrap();
        assert_eq!(back.0, rational(5, 6));
    }

    #[derive(Serialize, Deserialize)]
    #[serde(transparent)]
    struct Wrapper(#[serde(with = "rational_serde")] Rational);
}
