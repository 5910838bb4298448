//! Numerical evaluation of the kernels behind the trilinear and normal-form
//! estimates: the `X^{s,b}_p` norm, the second-generation kernel sums, the
//! modulation sums `𝒮^(j)` and a threshold scan in `s`.
//!
//! Throughout `p' = p/(p-1)`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::field::BoxGrid;
use crate::lattice::{modulus_sq, FreqVector, ModulusSign};
use crate::solver::loglog_slope;
use crate::trees::near_threshold;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelQuery {
    pub s: f64,
    pub p: f64,
    pub epsilon: f64,
    pub sign: ModulusSign,
    /// Bound on `|n1|` and `|n3|`.
    pub radius: i64,
    pub sigma0_range: i64,
    #[serde(rename = "K")]
    pub k: f64,
    pub j: usize,
}

impl KernelQuery {
    pub fn new(s: f64, p: f64, radius: i64) -> Self {
        KernelQuery { s, p, epsilon: 0.1, sign: ModulusSign::Hyperbolic, radius, sigma0_range: 8, k: 1.0, j: 2 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0) || !self.p.is_finite() {
            return Err(invalid(format!("p must lie in (1, inf), got {}", self.p)));
        }
        if !(self.epsilon > 0.0) || !self.s.is_finite() {
            return Err(invalid("epsilon must be positive and s finite"));
        }
        if self.radius < 0 || self.sigma0_range < 0 {
            return Err(invalid("radius and sigma0_range must be non-negative"));
        }
        Ok(())
    }

    /// `p' = p/(p-1)`.
    pub fn p_dual(&self) -> f64 {
        self.p / (self.p - 1.0)
    }
}

fn bracket(x: f64) -> f64 {
    (1.0 + x * x).sqrt()
}

/// `(Σ_n Σ_τ ⟨n⟩^{sp} ⟨τ + |n|²₋⟩^{bp} |v|^p · Δτ)^{1/p}` on the grid `τ = index·Δτ`.
pub fn xsb_norm(v: &BTreeMap<(FreqVector, i64), Complex64>, s: f64, b: f64, p: f64, tau_spacing: f64) -> Result<f64> {
    if !(p >= 1.0) || !(tau_spacing > 0.0) {
        return Err(invalid("need p >= 1 and a positive tau spacing"));
    }
    let sum: f64 = v
        .iter()
        .map(|(&(n, ti), c)| {
            let tau = ti as f64 * tau_spacing;
            let sigma = tau + modulus_sq(n, ModulusSign::Hyperbolic) as f64;
            (n.bracket().powf(s) * bracket(sigma).powf(b) * c.norm()).powf(p) * tau_spacing
        })
        .sum();
    Ok(sum.powf(1.0 / p))
}

/// Which summand the second-generation kernel uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelVariant {
    /// `⟨n⟩^{sp'} / ∏_{j=1}^3 ⟨n_j⟩^{sp'}` over all triples
    Full,
    /// `1 / (⟨n2⟩⟨n3⟩)^{sp'}` restricted to `|n1| ≥ |n2|, |n3|`
    Reduced,
}

/// Weighted histogram `H(μ) = Σ_{Φ = μ} weight` over the triples of `Γ(n)`
/// with `|n1|, |n3| ≤ radius`.
#[derive(Debug, Clone)]
pub struct KernelHistogram {
    offset: i64,
    h: Vec<f64>,
    decay: f64,
}

impl KernelHistogram {
    pub fn new(n: FreqVector, q: &KernelQuery, variant: KernelVariant) -> Result<Self> {
        q.validate()?;
        let r = q.radius;
        let sp = q.s * q.p_dual();
        let reach = 2 * r + n.j.abs().max(n.k.abs());
        let grid = BoxGrid::new(reach);
        let mut weight = vec![0.0; grid.len()];
        let mut moduli = vec![0i64; grid.len()];
        let mut norms = vec![0i64; grid.len()];
        for (i, w) in weight.iter_mut().enumerate() {
            let m = grid.point(i);
            *w = m.bracket().powf(-sp);
            moduli[i] = modulus_sq(m, q.sign) as i64;
            norms[i] = m.norm_sq() as i64;
        }
        let ball: Vec<FreqVector> = (-r..=r).flat_map(|j| (-r..=r).map(move |k| FreqVector::new(j, k))).filter(|m| m.in_ball(r)).collect();
        let bound = 4 * (reach as i64) * (reach as i64) + 1;
        let mut h = vec![0.0; (2 * bound + 1) as usize];
        let mod_n = modulus_sq(n, q.sign) as i64;
        let prefactor = match variant {
            KernelVariant::Full => n.bracket().powf(sp),
            KernelVariant::Reduced => 1.0,
        };
        for &n1 in &ball {
            if n1 == n {
                continue;
            }
            let i1 = grid.index(n1).unwrap();
            let (w1, m1, r1) = (weight[i1], moduli[i1], norms[i1]);
            for &n3 in &ball {
                if n3 == n {
                    continue;
                }
                let i2 = grid.index(n1 - n + n3).unwrap();
                let i3 = grid.index(n3).unwrap();
                let phi = mod_n - m1 + moduli[i2] - moduli[i3];
                let w = match variant {
                    KernelVariant::Full => w1 * weight[i2] * weight[i3],
                    KernelVariant::Reduced => {
                        if r1 < norms[i2] || r1 < norms[i3] {
                            continue;
                        }
                        weight[i2] * weight[i3]
                    }
                };
                h[(phi + bound) as usize] += w;
            }
        }
        for x in h.iter_mut() {
            *x *= prefactor;
        }
        Ok(KernelHistogram { offset: bound, h, decay: 1.0 + q.epsilon * q.p_dual() })
    }

    /// `Σ_μ H(μ) ⟨μ - σ0⟩^{-(1+εp')}`.
    pub fn shifted(&self, sigma0: f64) -> f64 {
        self.h
            .iter()
            .enumerate()
            .filter(|(_, &x)| x != 0.0)
            .map(|(i, &x)| x * bracket(i as f64 - self.offset as f64 - sigma0).powf(-self.decay))
            .sum()
    }

    /// `sup_μ H(μ)`.
    pub fn sup_mu(&self) -> f64 {
        self.h.iter().copied().fold(0.0, f64::max)
    }

    /// Non-zero histogram entries `(μ, H(μ))`.
    pub fn entries(&self) -> Vec<(i64, f64)> {
        self.h.iter().enumerate().filter(|(_, &x)| x != 0.0).map(|(i, &x)| (i as i64 - self.offset, x)).collect()
    }
}

/// `Σ_{Γ(n)} ⟨n⟩^{sp'} / (⟨Φ - σ0⟩^{1+εp'} ∏⟨n_j⟩^{sp'})` with `|n1|, |n3| ≤ radius`.
pub fn kernel_sum_j2(n: FreqVector, sigma0: i64, q: &KernelQuery) -> Result<f64> {
    Ok(KernelHistogram::new(n, q, KernelVariant::Full)?.shifted(sigma0 as f64))
}

/// `sup_μ Σ_{Γ_μ(n)} ⟨n⟩^{sp'} / ∏⟨n_j⟩^{sp'}`.
pub fn kernel_sum_j2_sup_mu(n: FreqVector, q: &KernelQuery) -> Result<f64> {
    Ok(KernelHistogram::new(n, q, KernelVariant::Full)?.sup_mu())
}

/// The shifted sum after the symmetry reduction `|n1| ≥ |n2|, |n3|`.
pub fn kernel_sum_j2_reduced(n: FreqVector, sigma0: i64, q: &KernelQuery) -> Result<f64> {
    Ok(KernelHistogram::new(n, q, KernelVariant::Reduced)?.shifted(sigma0 as f64))
}

/// The time-integrated kernel `Σ_{Γ(n)} ∫∫ M^{p'} dτ1 dτ2` by trapezoid rule on
/// `[-half_width, half_width]²`, where
///
/// ```text
/// M = ⟨n⟩^s / (⟨σ0⟩^{1/p - 2ε} ∏_j ⟨n_j⟩^s ⟨σ_j⟩^{1/p' + ε}),  σ_j = τ_j + |n_j|²₋,  τ3 = τ - τ1 + τ2
/// ```
///
/// Requires `half_width` and `τ` to be integer multiples of `spacing`.
pub fn kernel_unreduced_tau(n: FreqVector, tau: f64, q: &KernelQuery, half_width: f64, spacing: f64) -> Result<f64> {
    q.validate()?;
    if !(spacing > 0.0) || !(half_width > 0.0) {
        return Err(invalid("need positive spacing and half width"));
    }
    let steps = (half_width / spacing).round() as i64;
    let tau_steps = (tau / spacing).round() as i64;
    if ((steps as f64) * spacing - half_width).abs() > 1e-9 || ((tau_steps as f64) * spacing - tau).abs() > 1e-9 {
        return Err(invalid("half width and tau must be multiples of the spacing"));
    }
    let pd = q.p_dual();
    let beta = 1.0 + q.epsilon * pd;
    let sp = q.s * pd;
    let r = q.radius;
    let ball: Vec<FreqVector> = (-r..=r).flat_map(|j| (-r..=r).map(move |k| FreqVector::new(j, k))).filter(|m| m.in_ball(r)).collect();
    let max_mod = ball.iter().map(|m| m.norm_sq() as i64).max().unwrap_or(0) * 9 + n.norm_sq() as i64;
    let scale = (1.0 / spacing).round() as i64;
    if ((scale as f64) * spacing - 1.0).abs() > 1e-9 {
        return Err(invalid("spacing must divide 1"));
    }
    // ⟨x⟩^{-β} on the grid x = i·spacing, |i| ≤ span
    let span = 3 * steps + tau_steps.abs() + 3 * max_mod * scale;
    let table: Vec<f64> = (-span..=span).map(|i| bracket(i as f64 * spacing).powf(-beta)).collect();
    let at = |i: i64| table[(i + span) as usize];
    let weight = |m: usize| if m == 0 || m as i64 == 2 * steps { 0.5 } else { 1.0 };
    let mut cache: BTreeMap<(i64, i64, i64), f64> = BTreeMap::new();
    let mod_n = modulus_sq(n, q.sign) as i64;
    let sigma0 = tau + mod_n as f64;
    let pref = n.bracket().powf(sp) * bracket(sigma0).powf(-pd * (1.0 / q.p - 2.0 * q.epsilon));
    let mut total = 0.0;
    for &n1 in &ball {
        for &n3 in &ball {
            let n2 = n1 - n + n3;
            if n1 == n || n3 == n {
                continue;
            }
            let a = (modulus_sq(n1, q.sign) as i64, modulus_sq(n2, q.sign) as i64, modulus_sq(n3, q.sign) as i64);
            let integral = *cache.entry(a).or_insert_with(|| {
                let mut acc = 0.0;
                for i1 in 0..=2 * steps {
                    let t1 = i1 - steps;
                    let f1 = at(t1 + a.0 * scale) * weight(i1 as usize);
                    let mut inner = 0.0;
                    for i2 in 0..=2 * steps {
                        let t2 = i2 - steps;
                        let t3 = tau_steps - t1 + t2;
                        inner += weight(i2 as usize) * at(t2 + a.1 * scale) * at(t3 + a.2 * scale);
                    }
                    acc += f1 * inner;
                }
                acc * spacing * spacing
            });
            total += integral / (n1.bracket() * n2.bracket() * n3.bracket()).powf(sp);
        }
    }
    Ok(pref * total)
}

/// The reduced form `⟨σ0⟩^{-(p'/p - 2εp')} · kernel_sum_j2(n, σ0)` with `σ0 = τ + |n|²₋`,
/// which dominates [`kernel_unreduced_tau`] up to a constant.
pub fn kernel_reduced_tau(n: FreqVector, tau: f64, q: &KernelQuery) -> Result<f64> {
    let pd = q.p_dual();
    let sigma0 = tau + modulus_sq(n, q.sign) as f64;
    let h = KernelHistogram::new(n, q, KernelVariant::Full)?;
    Ok(bracket(sigma0).powf(-(pd / q.p - 2.0 * q.epsilon * pd)) * h.shifted(sigma0))
}

/// Truncated `𝒮^(j) = Σ_{|α_k| ≤ R} Π_{k<j} max{|α̃_k|, ((2k+1)K)^{4p}}^{-p'}`, `α̃_k = α_1 + … + α_k`.
pub fn modulation_sum_s(j: usize, k: f64, p: f64, alpha_radius: i64) -> Result<f64> {
    if j < 2 {
        return Err(invalid("modulation sums start at j = 2"));
    }
    if !(p > 1.0) || !(k >= 1.0) || alpha_radius < 0 {
        return Err(invalid("need p > 1, K >= 1 and alpha_radius >= 0"));
    }
    let pd = p / (p - 1.0);
    let r = alpha_radius;
    // f[x] = weight of partial sums α̃_k = x - off
    let mut width = r;
    let mut f: Vec<f64> = (-width..=width).map(|x| (x.unsigned_abs() as f64).max(near_threshold(1, k, p)).powf(-pd)).collect();
    for gen in 2..j {
        let new_width = width + r;
        let mut prefix = vec![0.0; f.len() + 1];
        for (i, &x) in f.iter().enumerate() {
            prefix[i + 1] = prefix[i] + x;
        }
        let thr = near_threshold(gen, k, p);
        let g: Vec<f64> = (-new_width..=new_width)
            .map(|y| {
                // x ∈ [y - r, y + r] ∩ [-width, width]
                let lo = (y - r).max(-width);
                let hi = (y + r).min(width);
                if lo > hi {
                    return 0.0;
                }
                let s = prefix[(hi + width + 1) as usize] - prefix[(lo + width) as usize];
                s * (y.unsigned_abs() as f64).max(thr).powf(-pd)
            })
            .collect();
        f = g;
        width = new_width;
    }
    Ok(f.iter().sum())
}

/// `f(T) = [Σ_{m ∈ Z, |m| ≥ T} |m|^{-p'} + T^{-p'} #{m ∈ Z : |m| < T}] / T^{1-p'}`.
fn two_term_ratio(t: f64, ceil_t: i64, hurwitz_at_ceil: f64, pd: f64) -> f64 {
    let tail = 2.0 * hurwitz_at_ceil;
    let count = (2 * ceil_t - 1) as f64;
    (tail + t.powf(-pd) * count) / t.powf(1.0 - pd)
}

/// `B_p = sup_{T ≥ 1} f(T)`, the constant that makes the per-generation sum
/// at most `B_p T^{1-p'}` for every threshold `T`.
pub fn b_p(p: f64) -> Result<f64> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(invalid("B_p needs 1 < p < inf"));
    }
    let pd = p / (p - 1.0);
    const M: i64 = 200_000;
    // Hurwitz ζ(p', M) by Euler–Maclaurin, then downward recursion ζ(s, m) = ζ(s, m+1) + m^{-s}.
    let mf = M as f64;
    let mut zeta = mf.powf(1.0 - pd) / (pd - 1.0) + 0.5 * mf.powf(-pd) + pd / 12.0 * mf.powf(-pd - 1.0)
        - pd * (pd + 1.0) * (pd + 2.0) / 720.0 * mf.powf(-pd - 3.0);
    let mut best = 2.0 / (pd - 1.0) + 2.0;
    for m in (1..=M).rev() {
        // zeta = ζ(p', m) on the interval T ∈ (m-1, m]
        best = best.max(two_term_ratio(m as f64, m, zeta, pd));
        if m >= 2 {
            let t = (m - 1) as f64 * (1.0 + 1e-12);
            best = best.max(two_term_ratio(t, m, zeta, pd));
        }
        if m > 1 {
            zeta += ((m - 1) as f64).powf(-pd);
        }
    }
    Ok(best)
}

fn double_factorial_odd(j: usize) -> f64 {
    (1..=j).map(|k| (2 * k - 1) as f64).product()
}

/// `B_p^{j-1} K^{4p'(1-j)} ((2j-1)!!)^{-4p'}`.
pub fn modulation_sum_bound(j: usize, k: f64, p: f64) -> Result<f64> {
    let pd = p / (p - 1.0);
    Ok(b_p(p)?.powi(j as i32 - 1) * k.powf(4.0 * pd * (1.0 - j as f64)) * double_factorial_odd(j).powf(-4.0 * pd))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub p: f64,
    pub s: f64,
    pub radius: i64,
    pub sup_value: f64,
    pub slope: f64,
    pub classification: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub rows: Vec<ScanRow>,
}

impl ScanReport {
    pub fn classification(&self, s: f64) -> Option<&str> {
        self.rows.iter().find(|r| r.s == s).map(|r| r.classification.as_str())
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Growth slope above which a sup is classified as growing.
pub const GROWTH_SLOPE: f64 = 0.1;

/// Query frequencies sampled at a given radius: the origin, and points on the
/// axes, the diagonal and a generic direction at half and full radius.
pub fn scan_points(radius: i64) -> Vec<FreqVector> {
    let h = (radius / 2).max(1);
    let mut pts = vec![
        FreqVector::ZERO,
        FreqVector::new(h, 0),
        FreqVector::new(0, h),
        FreqVector::new(radius, 0),
        FreqVector::new(0, radius),
        FreqVector::new(h / 2 + 1, h / 2 + 1),
        FreqVector::new(h, -(h / 2)),
    ];
    pts.retain(|n| n.in_ball(radius));
    pts.sort();
    pts.dedup();
    pts
}

/// Sup over sampled `(n, σ0)` of [`kernel_sum_j2`] at each radius, with a
/// growth classification from the log-log slope over the top two octaves.
pub fn threshold_scan(p: f64, s_values: &[f64], radii: &[i64], sigma0_range: i64, epsilon: f64) -> Result<ScanReport> {
    if radii.len() < 2 {
        return Err(invalid("need at least two radii"));
    }
    let mut rows = Vec::new();
    for &s in s_values {
        let mut sups = Vec::new();
        for &r in radii {
            let q = KernelQuery { s, p, epsilon, sign: ModulusSign::Hyperbolic, radius: r, sigma0_range, k: 1.0, j: 2 };
            q.validate()?;
            let per_n: Vec<f64> = scan_points(r)
                .par_iter()
                .map(|&n| -> Result<f64> {
                    let h = KernelHistogram::new(n, &q, KernelVariant::Full)?;
                    let stationary = -(modulus_sq(n, q.sign) as f64);
                    let best = (-sigma0_range..=sigma0_range)
                        .map(|x| x as f64)
                        .chain(std::iter::once(stationary))
                        .map(|sigma| h.shifted(sigma))
                        .fold(0.0, f64::max);
                    Ok(best)
                })
                .collect::<Result<_>>()?;
            sups.push((r, per_n.into_iter().fold(0.0, f64::max)));
        }
        let r_max = radii.iter().copied().max().unwrap();
        let top: Vec<(f64, f64)> = sups.iter().filter(|(r, _)| 4 * r >= r_max).map(|&(r, v)| (r as f64, v)).collect();
        let slope = loglog_slope(&top)?;
        let classification = if slope > GROWTH_SLOPE { "growing" } else { "bounded" };
        for (r, v) in sups {
            rows.push(ScanRow { p, s, radius: r, sup_value: v, slope, classification: classification.to_string() });
        }
    }
    Ok(ScanReport { rows })
}
