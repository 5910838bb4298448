//! Finitely supported Fourier coefficient fields on Z^2.
//!
//! Coefficients carry no `2π` factors. The free propagator `S(t) = e^{it□}`
//! with `□ = ∂²_{x1} - ∂²_{x2}` acts as multiplication by `e^{-it|n|²₋}`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{modulus_sq, FreqVector, ModulusSign};

/// Fourier coefficients `û(n)` supported in the ball `|n| ≤ radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    coeffs: BTreeMap<FreqVector, Complex64>,
    radius: i64,
}

/// Regularity `s` and Lebesgue exponent `p ≥ 1` of a Fourier–Lebesgue norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlNormParams {
    pub s: f64,
    pub p: f64,
}

impl FlNormParams {
    pub fn new(s: f64, p: f64) -> Result<Self> {
        if !(p >= 1.0) || !p.is_finite() || !s.is_finite() {
            return Err(invalid(format!("need finite s and p in [1, inf), got s = {s}, p = {p}")));
        }
        Ok(FlNormParams { s, p })
    }
}

/// One entry of the JSON snapshot format.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoeffRecord {
    pub j: i64,
    pub k: i64,
    pub re: f64,
    pub im: f64,
}

impl SpectralField {
    pub fn zero(radius: i64) -> Self {
        assert!(radius >= 0, "radius must be non-negative");
        SpectralField { coeffs: BTreeMap::new(), radius }
    }

    /// Builds a field, rejecting frequencies outside the ball.
    pub fn from_modes(radius: i64, modes: impl IntoIterator<Item = (FreqVector, Complex64)>) -> Result<Self> {
        let mut u = SpectralField::zero(radius);
        for (n, c) in modes {
            u.set(n, c)?;
        }
        Ok(u)
    }

    pub fn single_mode(radius: i64, n: FreqVector, c: Complex64) -> Result<Self> {
        Self::from_modes(radius, [(n, c)])
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    pub fn set(&mut self, n: FreqVector, c: Complex64) -> Result<()> {
        if !n.in_ball(self.radius) {
            return Err(invalid(format!("frequency {n} outside radius {}", self.radius)));
        }
        self.coeffs.insert(n, c);
        Ok(())
    }

    /// Adds `c` to the coefficient at `n`; panics outside the ball.
    pub(crate) fn add_at(&mut self, n: FreqVector, c: Complex64) {
        debug_assert!(n.in_ball(self.radius));
        *self.coeffs.entry(n).or_default() += c;
    }

    pub fn get(&self, n: FreqVector) -> Complex64 {
        self.coeffs.get(&n).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (FreqVector, Complex64)> + '_ {
        self.coeffs.iter().map(|(&n, &c)| (n, c))
    }

    /// Frequencies with a non-zero coefficient, ascending.
    pub fn support(&self) -> Vec<FreqVector> {
        self.iter().filter(|(_, c)| *c != Complex64::default()).map(|(n, _)| n).collect()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.values().all(|c| *c == Complex64::default())
    }

    pub fn with_radius(mut self, radius: i64) -> Result<Self> {
        if let Some((n, _)) = self.iter().find(|(n, c)| !n.in_ball(radius) && *c != Complex64::default()) {
            return Err(invalid(format!("frequency {n} outside radius {radius}")));
        }
        self.coeffs.retain(|n, _| n.in_ball(radius));
        self.radius = radius;
        Ok(self)
    }

    pub fn map(&self, mut f: impl FnMut(FreqVector, Complex64) -> Complex64) -> SpectralField {
        SpectralField { coeffs: self.coeffs.iter().map(|(&n, &c)| (n, f(n, c))).collect(), radius: self.radius }
    }

    pub fn scale(&self, a: Complex64) -> SpectralField {
        self.map(|_, c| a * c)
    }

    /// Pointwise `self + other`; the radius is the larger of the two.
    pub fn add(&self, other: &SpectralField) -> SpectralField {
        let mut out = SpectralField { coeffs: self.coeffs.clone(), radius: self.radius.max(other.radius) };
        for (n, c) in other.iter() {
            *out.coeffs.entry(n).or_default() += c;
        }
        out
    }

    pub fn sub(&self, other: &SpectralField) -> SpectralField {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    /// `max_n |self(n) - other(n)|`, treating absent coefficients as zero.
    pub fn max_abs_diff(&self, other: &SpectralField) -> f64 {
        let mut m: f64 = 0.0;
        for (n, c) in self.iter() {
            m = m.max((c - other.get(n)).norm());
        }
        for (n, c) in other.iter() {
            if !self.coeffs.contains_key(&n) {
                m = m.max(c.norm());
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// `Σ |û(n)|²`.
    pub fn mass(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm_sqr()).sum()
    }

    pub fn to_records(&self) -> Vec<CoeffRecord> {
        self.iter().map(|(n, c)| CoeffRecord { j: n.j, k: n.k, re: c.re, im: c.im }).collect()
    }

    /// Builds a field from snapshot records. Without an explicit radius the
    /// smallest ball containing the support is used.
    pub fn from_records(records: &[CoeffRecord], radius: Option<i64>) -> Result<Self> {
        let radius = match radius {
            Some(r) => r,
            None => records
                .iter()
                .map(|r| {
                    let n2 = FreqVector::new(r.j, r.k).norm_sq();
                    let mut s = crate::lattice::isqrt(n2);
                    if s * s < n2 {
                        s += 1;
                    }
                    s as i64
                })
                .max()
                .unwrap_or(0),
        };
        let mut u = SpectralField::zero(radius);
        for r in records {
            let n = FreqVector::new(r.j, r.k);
            if !n.within_cap() {
                return Err(Error::Format(format!("frequency {n} exceeds the coordinate cap")));
            }
            if !r.re.is_finite() || !r.im.is_finite() {
                return Err(Error::Format(format!("non-finite coefficient at {n}")));
            }
            if u.coeffs.contains_key(&n) {
                return Err(Error::Format(format!("duplicate frequency {n} in snapshot")));
            }
            u.set(n, Complex64::new(r.re, r.im)).map_err(|e| Error::Format(e.to_string()))?;
        }
        Ok(u)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_records()).expect("records serialize")
    }

    pub fn from_json(text: &str, radius: Option<i64>) -> Result<Self> {
        let records: Vec<CoeffRecord> = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        Self::from_records(&records, radius)
    }
}

/// `(Σ_n ⟨n⟩^{sp} |û(n)|^p)^{1/p}`.
pub fn fl_norm(u: &SpectralField, params: FlNormParams) -> f64 {
    let FlNormParams { s, p } = params;
    if p == 2.0 {
        return u.iter().map(|(n, c)| (1.0 + n.norm_sq() as f64).powf(s) * c.norm_sqr()).sum::<f64>().sqrt();
    }
    u.iter().map(|(n, c)| (n.bracket().powf(s) * c.norm()).powf(p)).sum::<f64>().powf(1.0 / p)
}

/// `sup_n ⟨n⟩^s |û(n)|`.
pub fn fl_sup_norm(u: &SpectralField, s: f64) -> f64 {
    u.iter().map(|(n, c)| n.bracket().powf(s) * c.norm()).fold(0.0, f64::max)
}

/// `S(t)u` for the hyperbolic symbol.
pub fn propagate(u: &SpectralField, t: f64) -> SpectralField {
    propagate_with(u, t, ModulusSign::Hyperbolic)
}

/// Multiplies `û(n)` by `e^{-it|n|²_±}`.
pub fn propagate_with(u: &SpectralField, t: f64, sign: ModulusSign) -> SpectralField {
    u.map(|n, c| c * phase(-t * modulus_sq(n, sign) as f64))
}

#[inline]
pub(crate) fn phase(theta: f64) -> Complex64 {
    let (s, c) = theta.sin_cos();
    Complex64::new(c, s)
}

/// Projection onto `|n| ≤ radius`.
pub fn truncate(u: &SpectralField, radius: i64) -> SpectralField {
    SpectralField { coeffs: u.coeffs.iter().filter(|(n, _)| n.in_ball(radius)).map(|(&n, &c)| (n, c)).collect(), radius }
}

/// Square box `[-r, r]²` with row-major indexing.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BoxGrid {
    pub r: i64,
    pub side: usize,
}

impl BoxGrid {
    pub fn new(r: i64) -> Self {
        BoxGrid { r, side: (2 * r + 1) as usize }
    }
    pub fn len(&self) -> usize {
        self.side * self.side
    }
    #[inline]
    pub fn index(&self, n: FreqVector) -> Option<usize> {
        if n.j.abs() > self.r || n.k.abs() > self.r {
            None
        } else {
            Some((n.j + self.r) as usize * self.side + (n.k + self.r) as usize)
        }
    }
    #[inline]
    pub fn point(&self, idx: usize) -> FreqVector {
        FreqVector::new((idx / self.side) as i64 - self.r, (idx % self.side) as i64 - self.r)
    }
}

fn accumulate_into_field(grid: &BoxGrid, acc: &[Complex64], touched: &[bool], radius: i64) -> SpectralField {
    let mut out = SpectralField::zero(radius);
    for (idx, (&c, &t)) in acc.iter().zip(touched).enumerate() {
        if t {
            out.coeffs.insert(grid.point(idx), c);
        }
    }
    out
}

/// `Σ_{n = n1 - n2 + n3, n ≠ n1, n3} û1(n1) conj(û2(n2)) û3(n3)`, output radius `3·radius`.
pub fn trilinear_n(u1: &SpectralField, u2: &SpectralField, u3: &SpectralField) -> SpectralField {
    trilinear_generic(u1, u2, u3, true)
}

/// Unrestricted cubic convolution `Σ_{n = n1 - n2 + n3} û1(n1) conj(û2(n2)) û3(n3)`.
///
/// Computed through the difference correlation `P(d) = Σ_{n1 - n2 = d} û1 conj(û2)`,
/// independently of [`trilinear_n`].
pub fn cubic_convolution(u1: &SpectralField, u2: &SpectralField, u3: &SpectralField) -> SpectralField {
    let r = u1.radius.max(u2.radius).max(u3.radius);
    let dgrid = BoxGrid::new(2 * r);
    let mut pd = vec![Complex64::default(); dgrid.len()];
    let mut pd_touched = vec![false; dgrid.len()];
    for (n1, a) in u1.iter() {
        for (n2, b) in u2.iter() {
            let i = dgrid.index(n1 - n2).expect("difference within box");
            pd[i] += a * b.conj();
            pd_touched[i] = true;
        }
    }
    let diffs: Vec<(FreqVector, Complex64)> =
        (0..dgrid.len()).filter(|&i| pd_touched[i]).map(|i| (dgrid.point(i), pd[i])).collect();
    let ogrid = BoxGrid::new(3 * r);
    let mut acc = vec![Complex64::default(); ogrid.len()];
    let mut touched = vec![false; ogrid.len()];
    for &(d, p) in &diffs {
        for (n3, c) in u3.iter() {
            let n = d + n3;
            let i = ogrid.index(n).expect("sum within box");
            acc[i] += p * c;
            touched[i] = true;
        }
    }
    let mut out = accumulate_into_field(&ogrid, &acc, &touched, 3 * r);
    out.coeffs.retain(|n, _| n.in_ball(3 * r));
    out
}

fn trilinear_generic(u1: &SpectralField, u2: &SpectralField, u3: &SpectralField, restrict: bool) -> SpectralField {
    let r = u1.radius.max(u2.radius).max(u3.radius);
    let grid = BoxGrid::new(3 * r);
    let mut acc = vec![Complex64::default(); grid.len()];
    let mut touched = vec![false; grid.len()];
    let m2: Vec<(FreqVector, Complex64)> = u2.iter().map(|(n, c)| (n, c.conj())).collect();
    let m3: Vec<(FreqVector, Complex64)> = u3.iter().collect();
    for (n1, a) in u1.iter() {
        for &(n2, b) in &m2 {
            let ab = a * b;
            let base = n1 - n2;
            for &(n3, c) in &m3 {
                let n = base + n3;
                if restrict && (n == n1 || n == n3) {
                    continue;
                }
                let i = grid.index(n).expect("sum within box");
                acc[i] += ab * c;
                touched[i] = true;
            }
        }
    }
    accumulate_into_field(&grid, &acc, &touched, 3 * r)
}

/// `-û1(n) conj(û2(n)) û3(n)`.
pub fn trilinear_r1(u1: &SpectralField, u2: &SpectralField, u3: &SpectralField) -> SpectralField {
    let r = u1.radius.max(u2.radius).max(u3.radius);
    let mut out = SpectralField::zero(r);
    for (n, a) in u1.iter() {
        let v = -a * u2.get(n).conj() * u3.get(n);
        out.coeffs.insert(n, v);
    }
    out
}

/// `(Σ_m û1(m) conj(û2(m))) û3(n) + (Σ_m û3(m) conj(û2(m))) û1(n)`.
pub fn trilinear_r2(u1: &SpectralField, u2: &SpectralField, u3: &SpectralField) -> SpectralField {
    let r = u1.radius.max(u2.radius).max(u3.radius);
    let ip12: Complex64 = u1.iter().map(|(m, a)| a * u2.get(m).conj()).sum();
    let ip32: Complex64 = u3.iter().map(|(m, c)| c * u2.get(m).conj()).sum();
    let mut out = SpectralField::zero(r);
    for (n, c) in u3.iter() {
        out.add_at(n, ip12 * c);
    }
    for (n, a) in u1.iter() {
        out.add_at(n, ip32 * a);
    }
    out
}

/// Points of the ball `|n| ≤ radius` in lexicographic order, with an O(1) lookup.
#[derive(Debug, Clone)]
pub struct BallIndex {
    radius: i64,
    points: Vec<FreqVector>,
    grid: BoxGrid,
    slot: Vec<i32>,
}

impl BallIndex {
    pub fn new(radius: i64) -> Self {
        assert!(radius >= 0);
        let grid = BoxGrid::new(radius);
        let mut slot = vec![-1; grid.len()];
        let mut points = Vec::new();
        for j in -radius..=radius {
            for k in -radius..=radius {
                let n = FreqVector::new(j, k);
                if n.in_ball(radius) {
                    slot[grid.index(n).unwrap()] = points.len() as i32;
                    points.push(n);
                }
            }
        }
        BallIndex { radius, points, grid, slot }
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[FreqVector] {
        &self.points
    }

    #[inline]
    pub fn position(&self, n: FreqVector) -> Option<usize> {
        let i = self.grid.index(n)?;
        let s = self.slot[i];
        (s >= 0).then_some(s as usize)
    }

    /// Dense coefficient vector; frequencies outside the ball are dropped.
    pub fn dense(&self, u: &SpectralField) -> Vec<Complex64> {
        let mut v = vec![Complex64::default(); self.len()];
        for (n, c) in u.iter() {
            if let Some(i) = self.position(n) {
                v[i] = c;
            }
        }
        v
    }

    /// Field with every ball point present, zeros included.
    pub fn field(&self, v: &[Complex64]) -> SpectralField {
        SpectralField { coeffs: self.points.iter().copied().zip(v.iter().copied()).collect(), radius: self.radius }
    }

    /// Field keeping only non-zero entries.
    pub fn sparse_field(&self, v: &[Complex64]) -> SpectralField {
        SpectralField {
            coeffs: self
                .points
                .iter()
                .copied()
                .zip(v.iter().copied())
                .filter(|(_, c)| *c != Complex64::default())
                .collect(),
            radius: self.radius,
        }
    }
}

/// Ball-restricted cubic term `C(n) = Σ_{n1 - n2 + n3 = n} v(n1) conj(v(n2)) v(n3)` for
/// dense vectors on a ball, all four frequencies inside the ball. `O(M²)` work.
pub(crate) struct CubicKernel {
    ball: BallIndex,
    dgrid: BoxGrid,
    pd: Vec<Complex64>,
}

impl CubicKernel {
    pub fn new(ball: BallIndex) -> Self {
        let dgrid = BoxGrid::new(2 * ball.radius);
        let pd = vec![Complex64::default(); dgrid.len()];
        CubicKernel { ball, dgrid, pd }
    }

    pub fn ball(&self) -> &BallIndex {
        &self.ball
    }

    pub fn apply(&mut self, v: &[Complex64], out: &mut [Complex64]) {
        let pts = &self.ball.points;
        let nz: Vec<(FreqVector, Complex64)> =
            pts.iter().copied().zip(v.iter().copied()).filter(|(_, c)| *c != Complex64::default()).collect();
        self.pd.iter_mut().for_each(|x| *x = Complex64::default());
        for &(n1, a) in &nz {
            for &(n2, b) in &nz {
                let i = self.dgrid.index(n1 - n2).unwrap();
                self.pd[i] += a * b.conj();
            }
        }
        for (o, &n) in out.iter_mut().zip(pts.iter()) {
            let mut s = Complex64::default();
            for &(n3, c) in &nz {
                let i = self.dgrid.index(n - n3).unwrap();
                s += self.pd[i] * c;
            }
            *o = s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn norm_examples() {
        let u = SpectralField::single_mode(2, FreqVector::ZERO, c(0.3, -0.4)).unwrap();
        let n = fl_norm(&u, FlNormParams::new(3.0, 1.5).unwrap());
        assert!((n - 0.5).abs() < 1e-15);
        let u = SpectralField::single_mode(5, FreqVector::new(3, 4), c(1.0, 0.0)).unwrap();
        assert!((fl_norm(&u, FlNormParams::new(1.0, 2.0).unwrap()) - 26f64.sqrt()).abs() < 1e-12);
        assert!((fl_norm(&u, FlNormParams::new(1.0, 3.0).unwrap()) - 26f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn propagate_examples() {
        let u = SpectralField::single_mode(2, FreqVector::new(1, 0), c(1.0, 0.0)).unwrap();
        let v = propagate(&u, PI);
        assert!((v.get(FreqVector::new(1, 0)) - c(-1.0, 0.0)).norm() < 1e-15);
        assert_eq!(propagate(&u, 0.0), u);
        let d = SpectralField::from_modes(4, [(FreqVector::new(2, 2), c(1.0, 2.0)), (FreqVector::new(-1, -1), c(0.5, 0.0))]).unwrap();
        assert_eq!(propagate(&d, 1.234), d);
    }

    #[test]
    fn two_mode_trilinear() {
        let (a, b) = (FreqVector::new(1, 0), FreqVector::new(0, 1));
        let u = SpectralField::from_modes(1, [(a, c(1.0, 0.0)), (b, c(1.0, 0.0))]).unwrap();
        let n = trilinear_n(&u, &u, &u);
        assert!((n.get(FreqVector::new(2, -1)) - c(1.0, 0.0)).norm() < 1e-15);
        let single = SpectralField::single_mode(1, a, c(0.7, 0.1)).unwrap();
        assert!(trilinear_n(&single, &single, &single).is_zero());
    }

    #[test]
    fn resonant_pieces_single_mode() {
        let n0 = FreqVector::new(1, -2);
        let z = c(0.6, 0.8) * 0.5;
        let u = SpectralField::single_mode(3, n0, z).unwrap();
        let r1 = trilinear_r1(&u, &u, &u);
        let r2 = trilinear_r2(&u, &u, &u);
        assert!((r1.get(n0) + z.norm_sqr() * z).norm() < 1e-15);
        assert!((r2.get(n0) - 2.0 * z.norm_sqr() * z).norm() < 1e-15);
    }

    #[test]
    fn snapshot_round_trip_and_duplicates() {
        let u = SpectralField::from_modes(3, [(FreqVector::new(1, 2), c(0.25, -1.5)), (FreqVector::new(-3, 0), c(1e-300, 3.0))]).unwrap();
        let back = SpectralField::from_json(&u.to_json(), Some(3)).unwrap();
        assert_eq!(back, u);
        let dup = r#"[{"j":1,"k":1,"re":1.0,"im":0.0},{"j":1,"k":1,"re":2.0,"im":0.0}]"#;
        assert!(SpectralField::from_json(dup, None).is_err());
        let outside = r#"[{"j":5,"k":0,"re":1.0,"im":0.0}]"#;
        assert!(SpectralField::from_json(outside, Some(4)).is_err());
        assert_eq!(SpectralField::from_json(outside, None).unwrap().radius(), 5);
    }

    #[test]
    fn cubic_kernel_matches_sparse_convolution() {
        let ball = BallIndex::new(3);
        let u = SpectralField::from_modes(
            3,
            [(FreqVector::new(1, 1), c(0.2, 0.1)), (FreqVector::new(0, -2), c(-0.3, 0.05)), (FreqVector::new(2, 0), c(0.1, 0.4))],
        )
        .unwrap();
        let v = ball.dense(&u);
        let mut out = vec![Complex64::default(); ball.len()];
        CubicKernel::new(ball.clone()).apply(&v, &mut out);
        let full = truncate(&cubic_convolution(&u, &u, &u), 3);
        for (i, &n) in ball.points().iter().enumerate() {
            assert!((out[i] - full.get(n)).norm() < 1e-15);
        }
    }
}
