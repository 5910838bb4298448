//! Lattice moduli on Z^2 and the resonance sets `Γ_μ^±(n)`.
//!
//! A triple `(n1, n2, n3)` belongs to `Γ(n)` when `n1 - n2 + n3 = n` and
//! `n ∉ {n1, n3}`; it belongs to `Γ_μ^±(n)` when in addition the modulation
//! `|n|² - |n1|² + |n2|² - |n3|²` (elliptic or hyperbolic modulus) equals `μ`.
//!
//! Counting uses the factorised form of the modulation. With
//! `n2 = n1 + n3 - n` one has
//!
//! ```text
//! Φ = 2(j - j1)(j - j3) ∓ 2(k - k1)(k - k3)
//! ```
//!
//! so fixing the second coordinates `k1, k3` turns `Φ = μ` into a divisor
//! problem `(j - j1)(j - j3) = m` for the first coordinates.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Largest admissible coordinate magnitude.
pub const COORD_CAP: i64 = 1 << 20;

/// A point `(j, k)` of the integer lattice. Ordered lexicographically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct FreqVector {
    pub j: i64,
    pub k: i64,
}

impl FreqVector {
    pub const ZERO: FreqVector = FreqVector { j: 0, k: 0 };

    pub const fn new(j: i64, k: i64) -> Self {
        FreqVector { j, k }
    }

    /// Squared Euclidean length `j² + k²`.
    pub fn norm_sq(self) -> i128 {
        let (j, k) = (self.j as i128, self.k as i128);
        j * j + k * k
    }

    /// Japanese bracket `(1 + |n|²)^{1/2}`.
    pub fn bracket(self) -> f64 {
        (1.0 + self.norm_sq() as f64).sqrt()
    }

    pub fn within_cap(self) -> bool {
        self.j.abs() <= COORD_CAP && self.k.abs() <= COORD_CAP
    }

    pub fn in_ball(self, radius: i64) -> bool {
        self.norm_sq() <= (radius as i128) * (radius as i128)
    }

    pub fn is_diagonal(self) -> bool {
        self.j == self.k
    }
}

impl fmt::Display for FreqVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.j, self.k)
    }
}

impl Add for FreqVector {
    type Output = FreqVector;
    fn add(self, o: FreqVector) -> FreqVector {
        FreqVector::new(self.j + o.j, self.k + o.k)
    }
}

impl Sub for FreqVector {
    type Output = FreqVector;
    fn sub(self, o: FreqVector) -> FreqVector {
        FreqVector::new(self.j - o.j, self.k - o.k)
    }
}

impl Neg for FreqVector {
    type Output = FreqVector;
    fn neg(self) -> FreqVector {
        FreqVector::new(-self.j, -self.k)
    }
}

/// Which quadratic form the modulus uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModulusSign {
    /// `j² + k²`
    Elliptic,
    /// `j² - k²`
    Hyperbolic,
}

impl ModulusSign {
    /// `+1` for elliptic, `-1` for hyperbolic: the sign in front of `k²`.
    pub fn k_sign(self) -> i128 {
        match self {
            ModulusSign::Elliptic => 1,
            ModulusSign::Hyperbolic => -1,
        }
    }
}

impl std::str::FromStr for ModulusSign {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "elliptic" => Ok(ModulusSign::Elliptic),
            "hyperbolic" => Ok(ModulusSign::Hyperbolic),
            other => Err(invalid(format!("unknown modulus sign '{other}'"))),
        }
    }
}

/// `|n|²_±`.
pub fn modulus_sq(n: FreqVector, sign: ModulusSign) -> i128 {
    let (j, k) = (n.j as i128, n.k as i128);
    j * j + sign.k_sign() * k * k
}

/// `|n|² - |n1|² + |n2|² - |n3|²`. The constraint `n = n1 - n2 + n3` is not checked.
pub fn modulation(n: FreqVector, n1: FreqVector, n2: FreqVector, n3: FreqVector, sign: ModulusSign) -> i128 {
    modulus_sq(n, sign) - modulus_sq(n1, sign) + modulus_sq(n2, sign) - modulus_sq(n3, sign)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ResonanceTriple {
    pub n1: FreqVector,
    pub n2: FreqVector,
    pub n3: FreqVector,
}

impl ResonanceTriple {
    pub fn new(n1: FreqVector, n2: FreqVector, n3: FreqVector) -> Self {
        ResonanceTriple { n1, n2, n3 }
    }

    /// Membership in `Γ(n)`: `n1 - n2 + n3 = n` and `n ∉ {n1, n3}`.
    pub fn in_gamma(&self, n: FreqVector) -> bool {
        self.n1 - self.n2 + self.n3 == n && n != self.n1 && n != self.n3
    }
}

/// Dyadic shell `{|n| ∼ N}`: `N/2 ≤ |n| < 2N` for `N ≥ 2`, `|n| < 2` for `N = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DyadicShell {
    n: i64,
}

impl DyadicShell {
    pub fn new(n: i64) -> Result<Self> {
        if n < 1 || (n & (n - 1)) != 0 || n > COORD_CAP {
            return Err(invalid(format!("dyadic shell size must be a power of two in [1, 2^20], got {n}")));
        }
        Ok(DyadicShell { n })
    }

    pub fn size(self) -> i64 {
        self.n
    }

    pub fn contains(self, v: FreqVector) -> bool {
        let r2 = v.norm_sq();
        let n2 = (self.n as i128) * (self.n as i128);
        if self.n == 1 {
            r2 < 4
        } else {
            n2 <= 4 * r2 && r2 < 4 * n2
        }
    }

    /// Largest `|c|` with `c² + other² < 4N²`, or `None` when no such `c` exists.
    fn coord_bound(self, other: i64) -> Option<i64> {
        let rest = 4 * (self.n as i128) * (self.n as i128) - (other as i128) * (other as i128) - 1;
        if rest < 0 {
            None
        } else {
            Some(isqrt(rest) as i64)
        }
    }

    /// Second coordinates compatible with the outer radius: `|k| < 2N`.
    fn k_range(self) -> std::ops::RangeInclusive<i64> {
        -(2 * self.n - 1)..=(2 * self.n - 1)
    }
}

/// Which two of `(n1, n2, n3)` carry shell constraints in a count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pairing {
    N1N3,
    N1N2,
}

pub(crate) fn isqrt(v: i128) -> i128 {
    if v <= 0 {
        return 0;
    }
    let mut r = (v as f64).sqrt() as i128;
    while r * r > v {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= v {
        r += 1;
    }
    r
}

/// Calls `f(a, b)` for every factorisation `m = a·b` with `a ∈ [alo, ahi]`, `b ∈ [blo, bhi]`.
/// Requires `m ≠ 0`. Visits in an unspecified order.
fn visit_divisor_pairs(m: i128, alo: i128, ahi: i128, blo: i128, bhi: i128, mut f: impl FnMut(i128, i128)) {
    debug_assert!(m != 0);
    if alo > ahi || blo > bhi {
        return;
    }
    let amax = alo.abs().max(ahi.abs());
    let bmax = blo.abs().max(bhi.abs());
    let am = m.abs();
    if am > amax.saturating_mul(bmax) {
        return;
    }
    let width = ahi - alo + 1;
    let root = isqrt(am);
    if width <= root + 1 {
        for a in alo..=ahi {
            if a != 0 && m % a == 0 {
                let b = m / a;
                if b >= blo && b <= bhi {
                    f(a, b);
                }
            }
        }
        return;
    }
    let mut try_a = |a: i128| {
        if a >= alo && a <= ahi {
            let b = m / a;
            if b >= blo && b <= bhi {
                f(a, b);
            }
        }
    };
    for d in 1..=root {
        if am % d != 0 {
            continue;
        }
        let e = am / d;
        try_a(d);
        try_a(-d);
        if e != d {
            try_a(e);
            try_a(-e);
        }
    }
}

/// All factorisations `m = a·b` with `|a - a0| ≤ M`, `|b - b0| ≤ N`, sorted by `a`.
pub fn divisor_pairs(m: i128, a0: i128, b0: i128, big_m: u64, big_n: u64) -> Result<Vec<(i128, i128)>> {
    if m == 0 {
        return Err(invalid("divisor_pairs requires m != 0; the degenerate lines are handled separately"));
    }
    let (bm, bn) = (big_m as i128, big_n as i128);
    let mut out = Vec::new();
    visit_divisor_pairs(m, a0 - bm, a0 + bm, b0 - bn, b0 + bn, |a, b| out.push((a, b)));
    out.sort_unstable();
    Ok(out)
}

fn visit_gamma_n1n3(
    n: FreqVector,
    mu: i128,
    sign: ModulusSign,
    s1: DyadicShell,
    s3: DyadicShell,
    mut f: impl FnMut(ResonanceTriple),
) {
    if mu % 2 != 0 {
        return;
    }
    let half = mu / 2;
    let (j, k) = (n.j as i128, n.k as i128);
    let mut emit = |a: i128, k1: i64, b: i128, k3: i64| {
        let n1 = FreqVector::new((j - a) as i64, k1);
        let n3 = FreqVector::new((j - b) as i64, k3);
        if !s1.contains(n1) || !s3.contains(n3) || n1 == n || n3 == n {
            return;
        }
        f(ResonanceTriple::new(n1, n1 + n3 - n, n3));
    };
    for k1 in s1.k_range() {
        let Some(m1) = s1.coord_bound(k1) else { continue };
        let m1 = m1 as i128;
        for k3 in s3.k_range() {
            let Some(m3) = s3.coord_bound(k3) else { continue };
            let m3 = m3 as i128;
            let c = (k - k1 as i128) * (k - k3 as i128);
            // ab = μ/2 ± (k-k1)(k-k3), a = j - j1, b = j - j3
            let m = half - sign.k_sign() * c;
            let (alo, ahi, blo, bhi) = (j - m1, j + m1, j - m3, j + m3);
            if m != 0 {
                visit_divisor_pairs(m, alo, ahi, blo, bhi, |a, b| emit(a, k1, b, k3));
            } else {
                // Line a = 0 (j1 = j), then line b = 0 (j3 = j) without the shared point.
                if alo <= 0 && 0 <= ahi {
                    for b in blo..=bhi {
                        emit(0, k1, b, k3);
                    }
                }
                if blo <= 0 && 0 <= bhi {
                    for a in alo..=ahi {
                        if a != 0 {
                            emit(a, k1, 0, k3);
                        }
                    }
                }
            }
        }
    }
}

fn visit_gamma_n1n2(
    n: FreqVector,
    mu: i128,
    sign: ModulusSign,
    s1: DyadicShell,
    s2: DyadicShell,
    mut f: impl FnMut(ResonanceTriple),
) {
    if mu % 2 != 0 {
        return;
    }
    let half = mu / 2;
    let (j, k) = (n.j as i128, n.k as i128);
    for k1 in s1.k_range() {
        let Some(m1) = s1.coord_bound(k1) else { continue };
        let m1 = m1 as i128;
        for k2 in s2.k_range() {
            let Some(m2) = s2.coord_bound(k2) else { continue };
            let m2 = m2 as i128;
            let mut emit = |a: i128, c: i128| {
                // a = j - j1, c = j1 - j2
                let j1 = j - a;
                let j2 = j1 - c;
                if j2.abs() > m2 {
                    return;
                }
                let n1 = FreqVector::new(j1 as i64, k1);
                let n2 = FreqVector::new(j2 as i64, k2);
                let n3 = n - n1 + n2;
                if !s1.contains(n1) || !s2.contains(n2) || n1 == n || n3 == n {
                    return;
                }
                f(ResonanceTriple::new(n1, n2, n3));
            };
            let d = (k - k1 as i128) * (k1 as i128 - k2 as i128);
            // ac = μ/2 ± (k-k1)(k1-k2)
            let m = half - sign.k_sign() * d;
            let (alo, ahi) = (j - m1, j + m1);
            let cb = m1 + m2;
            if m != 0 {
                visit_divisor_pairs(m, alo, ahi, -cb, cb, &mut emit);
            } else {
                if alo <= 0 && 0 <= ahi {
                    for c in -cb..=cb {
                        emit(0, c);
                    }
                }
                for a in alo..=ahi {
                    if a != 0 {
                        emit(a, 0);
                    }
                }
            }
        }
    }
}

/// Triples of `Γ_μ^±(n)` with `|n1|` in `shell1` and `|n3|` in `shell3`, sorted.
pub fn enumerate_gamma(
    n: FreqVector,
    mu: i128,
    sign: ModulusSign,
    shell1: DyadicShell,
    shell3: DyadicShell,
) -> Vec<ResonanceTriple> {
    let mut out = Vec::new();
    visit_gamma_n1n3(n, mu, sign, shell1, shell3, |t| out.push(t));
    out.sort_unstable();
    out
}

/// `|Γ_μ^±(n)|` restricted to two shell constraints chosen by `pairing`.
pub fn count_gamma_shell(
    n: FreqVector,
    mu: i128,
    sign: ModulusSign,
    shell_a: DyadicShell,
    shell_b: DyadicShell,
    pairing: Pairing,
) -> u64 {
    let mut count = 0u64;
    match pairing {
        Pairing::N1N3 => visit_gamma_n1n3(n, mu, sign, shell_a, shell_b, |_| count += 1),
        Pairing::N1N2 => visit_gamma_n1n2(n, mu, sign, shell_a, shell_b, |_| count += 1),
    }
    count
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountWitness {
    pub n: FreqVector,
    pub mu: i128,
    #[serde(rename = "N1")]
    pub n1: i64,
    #[serde(rename = "N3")]
    pub n3: i64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellStat {
    #[serde(rename = "N1")]
    pub n1: i64,
    #[serde(rename = "N3")]
    pub n3: i64,
    pub samples: u64,
    pub max_ratio: f64,
    pub max_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountReport {
    pub max_ratio: f64,
    pub witness: Option<CountWitness>,
    pub theta: f64,
    pub radius: i64,
    pub seed: u64,
    pub samples: u64,
    pub sign: ModulusSign,
    pub per_shell: Vec<ShellStat>,
}

/// Samples `(n, μ, N1, N3)` and tracks `count / (N1·N3·max(N1,N3)^θ)`.
///
/// `n` is uniform in `[-radius, radius]²`, `μ` uniform over even integers in
/// `[-4·radius², 4·radius²]`, shells uniform over dyadic sizes `≤ radius`.
pub fn empirical_count_constant(sign: ModulusSign, theta: f64, radius: i64, samples: u64, seed: u64) -> Result<CountReport> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(invalid(format!("theta must be positive, got {theta}")));
    }
    if radius < 1 || (radius & (radius - 1)) != 0 || radius > (1 << 16) {
        return Err(invalid(format!("radius must be a power of two in [1, 2^16], got {radius}")));
    }
    let log_r = radius.trailing_zeros();
    let mu_half = 2 * (radius as i128) * (radius as i128);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let queries: Vec<(FreqVector, i128, i64, i64)> = (0..samples)
        .map(|_| {
            let n = FreqVector::new(rng.gen_range(-radius..=radius), rng.gen_range(-radius..=radius));
            let mu = 2 * rng.gen_range(-mu_half..=mu_half);
            let n1 = 1i64 << rng.gen_range(0..=log_r);
            let n3 = 1i64 << rng.gen_range(0..=log_r);
            (n, mu, n1, n3)
        })
        .collect();
    let counts: Vec<u64> = queries
        .par_iter()
        .map(|&(n, mu, a, b)| {
            let (sa, sb) = (DyadicShell { n: a }, DyadicShell { n: b });
            count_gamma_shell(n, mu, sign, sa, sb, Pairing::N1N3)
        })
        .collect();

    let mut max_ratio = 0.0;
    let mut witness = None;
    let mut shells: BTreeMap<(i64, i64), ShellStat> = BTreeMap::new();
    for (&(n, mu, a, b), &count) in queries.iter().zip(&counts) {
        let ratio = count as f64 / ((a * b) as f64 * (a.max(b) as f64).powf(theta));
        let entry = shells.entry((a, b)).or_insert(ShellStat { n1: a, n3: b, samples: 0, max_ratio: 0.0, max_count: 0 });
        entry.samples += 1;
        entry.max_count = entry.max_count.max(count);
        if ratio > entry.max_ratio {
            entry.max_ratio = ratio;
        }
        if ratio > max_ratio {
            max_ratio = ratio;
            witness = Some(CountWitness { n, mu, n1: a, n3: b, count });
        }
    }
    Ok(CountReport {
        max_ratio,
        witness,
        theta,
        radius,
        seed,
        samples,
        sign,
        per_shell: shells.into_values().collect(),
    })
}
