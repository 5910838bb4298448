//! Galerkin-truncated integration of `i∂_t u + □u + |u|²u = 0` and the
//! second Picard iterate used by the ill-posedness probe.
//!
//! The flow is integrated in the interaction picture `𝐮 = S(-t)u`, where
//!
//! ```text
//! ∂_t 𝐮(n) = i e^{it|n|²₋} C_u(n),   C_u(n) = Σ_{n1 - n2 + n3 = n} û(n1) conj(û(n2)) û(n3)
//! ```
//!
//! with all four frequencies in the ball `|n| ≤ radius`. The truncated system
//! is Hamiltonian with
//!
//! ```text
//! H = Σ |n|²₋ |û(n)|² - ½ Σ_n conj(û(n)) C_u(n)
//! ```
//!
//! and conserves `Σ |û(n)|²`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::{fl_norm, phase, BallIndex, BoxGrid, CubicKernel, FlNormParams, SpectralField};
use crate::lattice::{modulation, modulus_sq, FreqVector, ModulusSign};

/// Coefficient magnitude that aborts a run.
pub const BLOWUP_THRESHOLD: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Classical RK4 on the interaction-picture system.
    Rk4InteractionPicture,
    /// Implicit trapezoid steps solved by fixed-point iteration.
    PicardOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub radius: i64,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub scheme: Scheme,
    pub record_every: usize,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.radius < 1 {
            return Err(invalid("radius must be at least 1"));
        }
        if !(self.dt > 0.0) || !(self.t_end > 0.0) || !self.dt.is_finite() || !self.t_end.is_finite() {
            return Err(invalid("dt and T must be positive"));
        }
        if self.dt > self.t_end * (1.0 + 1e-12) {
            return Err(invalid("dt must not exceed T"));
        }
        if self.record_every < 1 {
            return Err(invalid("record_every must be at least 1"));
        }
        Ok(())
    }

    /// Number of steps, `T/dt` rounded to the nearest integer.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round().max(1.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConservedReport {
    pub mass: Vec<f64>,
    pub hamiltonian: Vec<f64>,
}

impl ConservedReport {
    pub fn mass_drift(&self) -> f64 {
        drift(&self.mass)
    }
    pub fn hamiltonian_drift(&self) -> f64 {
        drift(&self.hamiltonian)
    }
}

fn drift(v: &[f64]) -> f64 {
    match v.first() {
        Some(&a) => v.iter().map(|x| (x - a).abs()).fold(0.0, f64::max),
        None => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowUp {
    pub t: f64,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Recorded times and physical fields.
    pub samples: Vec<(f64, SpectralField)>,
    pub conserved: ConservedReport,
    /// Set when the blow-up guard stopped the run; the samples stop before it.
    pub blowup: Option<BlowUp>,
}

/// The interaction-picture vector field on a fixed ball.
pub struct InteractionFlow {
    kernel: CubicKernel,
    moduli: Vec<f64>,
    v: Vec<Complex64>,
    c: Vec<Complex64>,
}

impl InteractionFlow {
    pub fn new(radius: i64) -> Self {
        let ball = BallIndex::new(radius);
        let moduli = ball.points().iter().map(|&n| modulus_sq(n, ModulusSign::Hyperbolic) as f64).collect();
        let m = ball.len();
        InteractionFlow { kernel: CubicKernel::new(ball.clone()), moduli, v: vec![Complex64::default(); m], c: vec![Complex64::default(); m] }
    }

    pub fn ball(&self) -> &BallIndex {
        self.kernel.ball()
    }

    /// `out = ∂_t 𝐮` at time `t`.
    pub fn rhs(&mut self, t: f64, w: &[Complex64], out: &mut [Complex64]) {
        for ((v, &x), &m) in self.v.iter_mut().zip(w).zip(&self.moduli) {
            *v = x * phase(-t * m);
        }
        self.kernel.apply(&self.v, &mut self.c);
        for ((o, &c), &m) in out.iter_mut().zip(&self.c).zip(&self.moduli) {
            *o = Complex64::new(0.0, 1.0) * phase(t * m) * c;
        }
    }

    /// One classical RK4 step in place.
    pub fn rk4_step(&mut self, t: f64, dt: f64, w: &mut [Complex64]) {
        let m = w.len();
        let mut k1 = vec![Complex64::default(); m];
        let mut k2 = vec![Complex64::default(); m];
        let mut k3 = vec![Complex64::default(); m];
        let mut k4 = vec![Complex64::default(); m];
        let mut tmp = vec![Complex64::default(); m];
        self.rhs(t, w, &mut k1);
        for i in 0..m {
            tmp[i] = w[i] + 0.5 * dt * k1[i];
        }
        self.rhs(t + 0.5 * dt, &tmp, &mut k2);
        for i in 0..m {
            tmp[i] = w[i] + 0.5 * dt * k2[i];
        }
        self.rhs(t + 0.5 * dt, &tmp, &mut k3);
        for i in 0..m {
            tmp[i] = w[i] + dt * k3[i];
        }
        self.rhs(t + dt, &tmp, &mut k4);
        for i in 0..m {
            w[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }

    /// Implicit trapezoid step by fixed-point iteration.
    fn trapezoid_step(&mut self, t: f64, dt: f64, w: &mut [Complex64]) -> Result<()> {
        let m = w.len();
        let mut f0 = vec![Complex64::default(); m];
        let mut f1 = vec![Complex64::default(); m];
        self.rhs(t, w, &mut f0);
        let mut next: Vec<Complex64> = (0..m).map(|i| w[i] + dt * f0[i]).collect();
        for _ in 0..50 {
            self.rhs(t + dt, &next, &mut f1);
            let mut diff: f64 = 0.0;
            for i in 0..m {
                let x = w[i] + 0.5 * dt * (f0[i] + f1[i]);
                diff = diff.max((x - next[i]).norm());
                next[i] = x;
            }
            if diff <= 1e-15 * (1.0 + next.iter().map(|c| c.norm()).fold(0.0, f64::max)) {
                w.copy_from_slice(&next);
                return Ok(());
            }
        }
        Err(Error::NonConvergence { iterations: 50, delta: f64::NAN })
    }

    /// `H` of a physical field given as a dense ball vector.
    pub fn hamiltonian(&mut self, u: &[Complex64]) -> f64 {
        self.kernel.apply(u, &mut self.c);
        let quad: f64 = u.iter().zip(&self.moduli).map(|(c, m)| m * c.norm_sqr()).sum();
        let quartic: f64 = u.iter().zip(&self.c).map(|(a, c)| (a.conj() * c).re).sum();
        quad - 0.5 * quartic
    }

    /// Evolves an interaction-picture field from `t0` to `t0 + steps·dt` with RK4.
    pub fn evolve(&mut self, w: &SpectralField, t0: f64, dt: f64, steps: usize) -> SpectralField {
        let mut v = self.ball().dense(w);
        for s in 0..steps {
            self.rk4_step(t0 + s as f64 * dt, dt, &mut v);
        }
        self.ball().sparse_field(&v)
    }
}

fn to_physical(ball: &BallIndex, w: &[Complex64], t: f64) -> Vec<Complex64> {
    ball.points().iter().zip(w).map(|(&n, &c)| c * phase(-t * modulus_sq(n, ModulusSign::Hyperbolic) as f64)).collect()
}

/// Integrates from `u0` at `t = 0`. Returns the physical trajectory sampled every
/// `record_every` steps, starting with `t = 0`.
pub fn integrate(u0: &SpectralField, cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate()?;
    if let Some(n) = u0.support().into_iter().find(|n| !n.in_ball(cfg.radius)) {
        return Err(invalid(format!("initial frequency {n} outside radius {}", cfg.radius)));
    }
    let mut flow = InteractionFlow::new(cfg.radius);
    let ball = flow.ball().clone();
    let mut w = ball.dense(u0);
    let steps = cfg.steps();
    let mut out = Trajectory { samples: Vec::new(), conserved: ConservedReport::default(), blowup: None };
    let record = |flow: &mut InteractionFlow, w: &[Complex64], t: f64, out: &mut Trajectory| {
        let u = to_physical(&ball, w, t);
        out.conserved.mass.push(u.iter().map(|c| c.norm_sqr()).sum());
        out.conserved.hamiltonian.push(flow.hamiltonian(&u));
        out.samples.push((t, ball.field(&u)));
    };
    record(&mut flow, &w, 0.0, &mut out);
    for s in 0..steps {
        let t = s as f64 * cfg.dt;
        match cfg.scheme {
            Scheme::Rk4InteractionPicture => flow.rk4_step(t, cfg.dt, &mut w),
            Scheme::PicardOnly => flow.trapezoid_step(t, cfg.dt, &mut w)?,
        }
        let peak = w.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if !(peak <= BLOWUP_THRESHOLD) {
            out.blowup = Some(BlowUp { t: t + cfg.dt, magnitude: peak });
            return Ok(out);
        }
        if (s + 1) % cfg.record_every == 0 || s + 1 == steps {
            record(&mut flow, &w, (s + 1) as f64 * cfg.dt, &mut out);
        }
    }
    Ok(out)
}

/// `A[f](t) = i ∫_0^t S(t-t')(|S(t')f|² S(t')f) dt'` in closed form:
///
/// ```text
/// Â(t, n) = i e^{-it|n|²₋} Σ_{n = n1 - n2 + n3} f̂(n1) conj(f̂(n2)) f̂(n3) · E(t, Φ)
/// E(t, Φ) = (e^{itΦ} - 1)/(iΦ),  E(t, 0) = t
/// ```
///
/// Full cubic product, no resonance exclusion. Output radius `3·radius`.
pub fn picard_second_iterate(f: &SpectralField, t: f64) -> SpectralField {
    let r = f.radius();
    let modes: Vec<(FreqVector, Complex64)> = f.iter().filter(|(_, c)| *c != Complex64::default()).collect();
    let grid = BoxGrid::new(3 * r);
    let mut acc = vec![Complex64::default(); grid.len()];
    let mut touched = vec![false; grid.len()];
    let sign = ModulusSign::Hyperbolic;
    for &(n1, a) in &modes {
        for &(n2, b) in &modes {
            let ab = a * b.conj();
            for &(n3, c) in &modes {
                let n = n1 - n2 + n3;
                let phi = modulation(n, n1, n2, n3, sign);
                let e = if phi == 0 {
                    Complex64::new(t, 0.0)
                } else {
                    let x = phi as f64;
                    (phase(t * x) - 1.0) / Complex64::new(0.0, x)
                };
                let i = grid.index(n).unwrap();
                acc[i] += ab * c * e;
                touched[i] = true;
            }
        }
    }
    let mut out = SpectralField::zero(3 * r);
    for (i, &hit) in touched.iter().enumerate() {
        if hit {
            let n = grid.point(i);
            let v = Complex64::new(0.0, 1.0) * phase(-t * modulus_sq(n, sign) as f64) * acc[i];
            out.set(n, v).expect("within 3·radius");
        }
    }
    out
}

/// `f_N = N^{-s-1/p} Σ_{n ∈ Δ, |n| ≤ N} e^{in·x}`: diagonal modes with `2k² ≤ N²`.
pub fn make_f_n(n: i64, s: f64, p: f64) -> Result<SpectralField> {
    if n < 1 {
        return Err(invalid("N must be at least 1"));
    }
    let c = (n as f64).powf(-s - 1.0 / p);
    let kmax = crate::lattice::isqrt((n as i128 * n as i128) / 2) as i64;
    SpectralField::from_modes(n, (-kmax..=kmax).map(|k| (FreqVector::new(k, k), Complex64::new(c, 0.0))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeReport {
    pub s: f64,
    pub p: f64,
    pub t: f64,
    pub slope: f64,
    /// `2 - 2s - 2/p`
    pub expected: f64,
    /// `(N, ‖A[f_N](t)‖_{FL^{s,p}})`
    pub points: Vec<(i64, f64)>,
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0) || !(y > 0.0) || !y.is_finite()) {
        return Err(Error::DegenerateFit("need at least two positive points".into()));
    }
    let m = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x.ln(), b + y.ln()));
    let (mx, my) = (sx / m, sy / m);
    let (mut num, mut den) = (0.0, 0.0);
    for &(x, y) in points {
        num += (x.ln() - mx) * (y.ln() - my);
        den += (x.ln() - mx).powi(2);
    }
    if den == 0.0 {
        return Err(Error::DegenerateFit("abscissae coincide".into()));
    }
    Ok(num / den)
}

/// Fits the growth exponent of `‖A[f_N](t)‖_{FL^{s,p}}` in `N`.
pub fn illposedness_slope(s: f64, p: f64, t: f64, n_list: &[i64]) -> Result<SlopeReport> {
    let params = FlNormParams::new(s, p)?;
    if n_list.len() < 3 {
        return Err(invalid("need at least three values of N"));
    }
    let (lo, hi) = (n_list.iter().copied().min().unwrap(), n_list.iter().copied().max().unwrap());
    if lo < 1 || hi < 4 * lo {
        return Err(invalid("the values of N must span at least two octaves"));
    }
    if t == 0.0 || !t.is_finite() {
        return Err(Error::DegenerateFit("t = 0 gives a vanishing iterate".into()));
    }
    let mut points = Vec::new();
    for &n in n_list {
        let a = picard_second_iterate(&make_f_n(n, s, p)?, t);
        points.push((n, fl_norm(&a, params)));
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|&(n, v)| (n as f64, v)).collect();
    let slope = loglog_slope(&xy)?;
    Ok(SlopeReport { s, p, t, slope, expected: 2.0 - 2.0 * s - 2.0 / p, points })
}
