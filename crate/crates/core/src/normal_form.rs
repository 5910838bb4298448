//! Normal-form operators over ordered trees, in the interaction picture
//! `𝐮(t) = S(-t)u(t)`.
//!
//! The first-generation equation is `∂_t 𝐮 = 𝒩^(1)(𝐮) + ℛ^(1)(𝐮)` with
//!
//! ```text
//! 𝒩^(1)(𝐮)(n) = i Σ_{n = n1 - n2 + n3, n ≠ n1, n3} e^{itΦ} 𝐮(n1) conj(𝐮(n2)) 𝐮(n3)
//! ℛ^(1)(𝐮)(n) = i (2‖𝐮‖² - |𝐮(n)|²) 𝐮(n)
//! ```
//!
//! Every higher-generation operator is a sum over trees `T ∈ 𝔗(J)` and index
//! assignments with all nodes in the Galerkin ball and terminals in the
//! support of `𝐮`. A term carries the phase `e^{itμ̃_J}`, the denominators
//! `μ̃_1 ⋯ μ̃_m` and the constant
//!
//! ```text
//! c_J(T) = i (-1)^{J-1} ε_2 ⋯ ε_J
//! ```
//!
//! where `ε_k` is the parity sign of the node expanded at generation `k`.
//! With these constants the reduction
//! `𝒩₂^(j) = ∂_t 𝒩₀^(j+1) + ℛ^(j+1) + 𝒩^(j+1)` holds exactly.

use std::sync::OnceLock;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::{fl_norm, phase, propagate_with, trilinear_r1, trilinear_r2, BallIndex, FlNormParams, SpectralField};
use crate::lattice::{modulation, modulus_sq, FreqVector, ModulusSign};
use crate::trees::{enumerate_trees, near_threshold, OrderedTree, ASSIGNMENT_GENERATION_CAP};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Parameters of the normal-form reduction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalFormParams {
    /// Modulation cutoff scale.
    #[serde(rename = "K")]
    pub k: f64,
    /// Exponent in the thresholds `((2j+1)K)^{4p}`.
    pub p: f64,
    /// Regularity used for diagnostics norms.
    pub s: f64,
    pub j_max: usize,
    pub radius: i64,
    pub sign: ModulusSign,
}

impl NormalFormParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k >= 1.0) || !self.k.is_finite() {
            return Err(invalid(format!("K must be >= 1, got {}", self.k)));
        }
        if !(self.p > 0.0) || !self.p.is_finite() {
            return Err(invalid(format!("p must be positive, got {}", self.p)));
        }
        if !self.s.is_finite() {
            return Err(invalid("s must be finite"));
        }
        if self.j_max < 1 {
            return Err(invalid("J_max must be at least 1"));
        }
        if self.j_max > ASSIGNMENT_GENERATION_CAP {
            return Err(Error::CapExceeded(format!("J_max {} above cap {ASSIGNMENT_GENERATION_CAP}", self.j_max)));
        }
        if self.radius < 1 {
            return Err(invalid("radius must be at least 1"));
        }
        Ok(())
    }

    /// `max(1, ‖u0‖_{FL^{s,p}})`, with the exponent raised to 1 when `p < 1`.
    pub fn default_k(u0: &SpectralField, s: f64, p: f64) -> f64 {
        fl_norm(u0, FlNormParams { s, p: p.max(1.0) }).max(1.0)
    }

    /// Norm used for trajectory distances and diagnostics.
    pub fn diagnostic_norm(&self) -> FlNormParams {
        FlNormParams { s: self.s, p: self.p.max(1.0) }
    }

    fn threshold(&self, j: usize) -> f64 {
        near_threshold(j, self.k, self.p)
    }
}

/// A field together with the time at which it represents `S(-t)u(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionField {
    pub field: SpectralField,
    pub time: f64,
}

impl InteractionField {
    pub fn from_physical(u: &SpectralField, t: f64, sign: ModulusSign) -> Self {
        InteractionField { field: propagate_with(u, -t, sign), time: t }
    }

    pub fn to_physical(&self, sign: ModulusSign) -> SpectralField {
        propagate_with(&self.field, self.time, sign)
    }
}

fn check_radius(u: &SpectralField, params: &NormalFormParams) -> Result<()> {
    if let Some(n) = u.support().into_iter().find(|n| !n.in_ball(params.radius)) {
        return Err(invalid(format!("input frequency {n} outside the Galerkin radius {}", params.radius)));
    }
    Ok(())
}

fn trilinear_phase_sum(
    u1: &SpectralField,
    u2: &SpectralField,
    u3: &SpectralField,
    t: f64,
    sign: ModulusSign,
    mut keep: impl FnMut(i128) -> bool,
) -> SpectralField {
    let r = u1.radius().max(u2.radius()).max(u3.radius());
    let mut out = SpectralField::zero(3 * r);
    let m2: Vec<(FreqVector, Complex64)> = u2.iter().map(|(n, c)| (n, c.conj())).collect();
    let m3: Vec<(FreqVector, Complex64)> = u3.iter().collect();
    for (n1, a) in u1.iter() {
        for &(n2, b) in &m2 {
            for &(n3, c) in &m3 {
                let n = n1 - n2 + n3;
                if n == n1 || n == n3 {
                    continue;
                }
                let phi = modulation(n, n1, n2, n3, sign);
                if keep(phi) {
                    out.add_at(n, I * phase(t * phi as f64) * a * b * c);
                }
            }
        }
    }
    out
}

/// `𝒩^(1)(u1, u2, u3)` at time `t`, untruncated (output radius `3·radius`).
pub fn op_n1_full(u1: &SpectralField, u2: &SpectralField, u3: &SpectralField, t: f64, params: &NormalFormParams) -> SpectralField {
    trilinear_phase_sum(u1, u2, u3, t, params.sign, |_| true)
}

/// `ℛ^(1) = i(𝔯₁ + 𝔯₂)`.
pub fn op_r1_resonant(u1: &SpectralField, u2: &SpectralField, u3: &SpectralField) -> SpectralField {
    trilinear_r1(u1, u2, u3).add(&trilinear_r2(u1, u2, u3)).scale(I)
}

/// `𝒩^(1) = near + far` with near `|Φ| ≤ (3K)^{4p}`.
pub fn split_n1(
    u1: &SpectralField,
    u2: &SpectralField,
    u3: &SpectralField,
    t: f64,
    params: &NormalFormParams,
) -> (SpectralField, SpectralField) {
    let thr = params.threshold(1);
    let near = trilinear_phase_sum(u1, u2, u3, t, params.sign, |phi| (phi.unsigned_abs() as f64) <= thr);
    let far = trilinear_phase_sum(u1, u2, u3, t, params.sign, |phi| (phi.unsigned_abs() as f64) > thr);
    (near, far)
}

/// Condition on `μ̃_k` at one generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cond {
    /// `|μ̃_k| ≤ threshold`
    Near,
    /// `|μ̃_k| > threshold`
    Far,
    Any,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    /// constant `c_J(T)`
    Assembled,
    /// constant `c_J(T)/i`
    Boundary,
    /// constant `-c_J(T)/i` times `Σ_b iε_b ρ(n_b)`
    Resonant,
}

/// A family of tree sums: generation, per-generation conditions, number of
/// denominators `μ̃_1 ⋯ μ̃_m`, and constant.
#[derive(Debug, Clone)]
struct Skeleton {
    gen: usize,
    conds: Vec<Cond>,
    denoms: usize,
    kind: Kind,
}

struct Expansion {
    node: usize,
    children: [usize; 3],
    eps: i64,
    /// children that stay terminal in the full tree
    leaf: [bool; 3],
}

struct TreePlan {
    nodes: usize,
    expansions: Vec<Expansion>,
    conj: Vec<bool>,
    /// shape id of every node (0 = terminal)
    shape: Vec<usize>,
    terminals: Vec<usize>,
    coeff: Complex64,
}

/// Plans for all trees of generations `1..=ASSIGNMENT_GENERATION_CAP`, plus the interned subtree shapes.
struct Plans {
    by_gen: Vec<Vec<TreePlan>>,
    /// children shapes of every internal shape; index 0 is the terminal shape
    shapes: Vec<[usize; 3]>,
}

fn plans() -> &'static Plans {
    static PLANS: OnceLock<Plans> = OnceLock::new();
    PLANS.get_or_init(|| {
        let mut shapes: Vec<[usize; 3]> = vec![[0, 0, 0]];
        let intern = |ch: [usize; 3], shapes: &mut Vec<[usize; 3]>| -> usize {
            if let Some(i) = shapes.iter().skip(1).position(|s| *s == ch) {
                i + 1
            } else {
                shapes.push(ch);
                shapes.len() - 1
            }
        };
        let mut by_gen = vec![Vec::new()];
        for g in 1..=ASSIGNMENT_GENERATION_CAP {
            let trees = enumerate_trees(g).expect("within cap");
            let plans = trees
                .iter()
                .map(|t| {
                    let n = t.node_count();
                    let mut shape = vec![0usize; n];
                    for a in (0..n).rev() {
                        if let Some([x, y, z]) = t.children(a) {
                            shape[a] = intern([shape[x], shape[y], shape[z]], &mut shapes);
                        }
                    }
                    tree_plan(t, shape)
                })
                .collect();
            by_gen.push(plans);
        }
        Plans { by_gen, shapes }
    })
}

fn tree_plan(t: &OrderedTree, shape: Vec<usize>) -> TreePlan {
    let j = t.generation();
    let expansions: Vec<Expansion> = t
        .chronicle()
        .iter()
        .map(|&c| {
            let ch = t.children(c).unwrap();
            Expansion { node: c, children: ch, eps: t.parity_sign(c), leaf: ch.map(|x| t.is_terminal(x)) }
        })
        .collect();
    let eps_prod: i64 = expansions.iter().skip(1).map(|e| e.eps).product();
    let sign = if (j - 1) % 2 == 0 { 1.0 } else { -1.0 };
    TreePlan {
        nodes: t.node_count(),
        conj: (0..t.node_count()).map(|a| t.is_conjugated(a)).collect(),
        terminals: t.terminals(),
        shape,
        expansions,
        coeff: I * (sign * eps_prod as f64),
    }
}

/// Frequencies reachable at a node of each shape: the support for terminals,
/// `(R1 - R2 + R3) ∩ ball` for internal shapes.
struct Reach {
    mask: Vec<Vec<bool>>,
    list: Vec<Vec<usize>>,
}

fn reach_sets(ball: &BallIndex, support: &[usize], plans: &Plans) -> Reach {
    let nb = ball.len();
    let pts = ball.points();
    let mut mask = vec![vec![false; nb]; plans.shapes.len()];
    let mut list = vec![Vec::new(); plans.shapes.len()];
    for &i in support {
        mask[0][i] = true;
    }
    list[0] = support.to_vec();
    // Shapes are interned children-first, so their ids are already in dependency order.
    let r = ball.radius();
    let dgrid = crate::field::BoxGrid::new(2 * r);
    let mut dmask = vec![false; dgrid.len()];
    for s in 1..plans.shapes.len() {
        let [a, b, c] = plans.shapes[s];
        dmask.iter_mut().for_each(|x| *x = false);
        let mut diffs = Vec::new();
        for &x in &list[a] {
            for &y in &list[b] {
                let d = dgrid.index(pts[x] - pts[y]).unwrap();
                if !dmask[d] {
                    dmask[d] = true;
                    diffs.push(d);
                }
            }
        }
        let mut m = vec![false; nb];
        for &d in &diffs {
            let dv = dgrid.point(d);
            for &z in &list[c] {
                if let Some(i) = ball.position(dv + pts[z]) {
                    m[i] = true;
                }
            }
        }
        list[s] = (0..nb).filter(|&i| m[i]).collect();
        mask[s] = m;
    }
    Reach { mask, list }
}

struct Engine<'a> {
    ball: &'a BallIndex,
    vals: &'a [Complex64],
    rho: &'a [f64],
    reach: &'a Reach,
    thresholds: Vec<f64>,
    phi_cache: Vec<i64>,
    t: f64,
    skel: &'a Skeleton,
}

struct Walk<'p> {
    plan: &'p TreePlan,
    freqs: [usize; 3 * ASSIGNMENT_GENERATION_CAP + 1],
}

impl Engine<'_> {
    #[inline]
    fn value(&self, idx: usize, conj: bool) -> Complex64 {
        let v = self.vals[idx];
        if conj {
            v.conj()
        } else {
            v
        }
    }

    fn dfs(&self, w: &mut Walk<'_>, step: usize, mu_tilde: i64, denom: f64, prod: Complex64, acc: &mut Complex64) {
        let plan = w.plan;
        if step == self.skel.gen {
            let mut term = prod * phase(self.t * mu_tilde as f64) / denom;
            term *= match self.skel.kind {
                Kind::Assembled => plan.coeff,
                Kind::Boundary => plan.coeff / I,
                Kind::Resonant => {
                    let s: f64 = plan
                        .terminals
                        .iter()
                        .map(|&b| if plan.conj[b] { -self.rho[w.freqs[b]] } else { self.rho[w.freqs[b]] })
                        .sum();
                    // -c/i · i·Σ ε_b ρ_b = -c · Σ ε_b ρ_b
                    -plan.coeff * s
                }
            };
            *acc += term;
            return;
        }
        let e = &plan.expansions[step];
        let pts = self.ball.points();
        let ni = w.freqs[e.node];
        let n = pts[ni];
        let [c1, c2, c3] = e.children;
        let (s1, s2, s3) = (plan.shape[c1], plan.shape[c2], plan.shape[c3]);
        let mask2 = &self.reach.mask[s2];
        let cond = self.skel.conds[step];
        let thr = self.thresholds[step];
        let with_denom = step < self.skel.denoms;
        let n_mod = self.phi_cache[ni];
        for &i1 in &self.reach.list[s1] {
            if i1 == ni {
                continue;
            }
            let base = pts[i1] - n;
            let v1 = if e.leaf[0] { self.value(i1, plan.conj[c1]) } else { Complex64::new(1.0, 0.0) };
            for &i3 in &self.reach.list[s3] {
                if i3 == ni {
                    continue;
                }
                let Some(i2) = self.ball.position(base + pts[i3]) else { continue };
                if !mask2[i2] {
                    continue;
                }
                let phi = n_mod - self.phi_cache[i1] + self.phi_cache[i2] - self.phi_cache[i3];
                let mt = mu_tilde + e.eps * phi;
                let amt = mt.unsigned_abs() as f64;
                let ok = match cond {
                    Cond::Near => amt <= thr,
                    Cond::Far => amt > thr,
                    Cond::Any => true,
                };
                if !ok {
                    continue;
                }
                let mut p = prod * v1;
                if e.leaf[1] {
                    p *= self.value(i2, plan.conj[c2]);
                }
                if e.leaf[2] {
                    p *= self.value(i3, plan.conj[c3]);
                }
                let d = if with_denom {
                    debug_assert!(mt != 0, "zero denominator reached");
                    denom * mt as f64
                } else {
                    denom
                };
                w.freqs[c1] = i1;
                w.freqs[c2] = i2;
                w.freqs[c3] = i3;
                self.dfs(w, step + 1, mt, d, p, acc);
            }
        }
    }
}

/// Evaluates a tree family at every frequency of the Galerkin ball.
fn eval_skeleton(u: &SpectralField, t: f64, params: &NormalFormParams, skel: &Skeleton) -> Result<SpectralField> {
    params.validate()?;
    check_radius(u, params)?;
    if skel.gen > ASSIGNMENT_GENERATION_CAP {
        return Err(Error::CapExceeded(format!("tree generation {} above cap {ASSIGNMENT_GENERATION_CAP}", skel.gen)));
    }
    for (k, c) in skel.conds.iter().enumerate() {
        if k < skel.denoms && *c != Cond::Far {
            unreachable!("denominators require the far condition");
        }
    }
    let ball = BallIndex::new(params.radius);
    let vals = ball.dense(u);
    let support: Vec<usize> = (0..ball.len()).filter(|&i| vals[i] != Complex64::default()).collect();
    let mass: f64 = vals.iter().map(|c| c.norm_sqr()).sum();
    let rho: Vec<f64> = vals.iter().map(|c| 2.0 * mass - c.norm_sqr()).collect();
    let pl = plans();
    let reach = reach_sets(&ball, &support, pl);
    let engine = Engine {
        ball: &ball,
        vals: &vals,
        rho: &rho,
        reach: &reach,
        thresholds: (1..=skel.gen).map(|k| params.threshold(k)).collect(),
        phi_cache: ball.points().iter().map(|&n| modulus_sq(n, params.sign) as i64).collect(),
        t,
        skel,
    };
    let trees = &pl.by_gen[skel.gen];
    let out: Vec<Complex64> = (0..ball.len())
        .into_par_iter()
        .map(|ni| {
            let mut acc = Complex64::default();
            for plan in trees {
                if !reach.mask[plan.shape[0]][ni] {
                    continue;
                }
                let mut w = Walk { plan, freqs: [0; 3 * ASSIGNMENT_GENERATION_CAP + 1] };
                debug_assert!(plan.nodes <= w.freqs.len());
                w.freqs[0] = ni;
                engine.dfs(&mut w, 0, 0, 1.0, Complex64::new(1.0, 0.0), &mut acc);
            }
            acc
        })
        .collect();
    Ok(ball.sparse_field(&out))
}

fn far_then(j: usize, last: Option<Cond>) -> Vec<Cond> {
    let mut v = vec![Cond::Far; j];
    if let Some(c) = last {
        v.push(c);
    }
    v
}

/// Boundary term `𝒩₀^(j)`, `j ≥ 2`: a sum over `𝔗(j-1)` with all generations far.
pub fn eval_n0(j: usize, u: &SpectralField, t: f64, params: &NormalFormParams) -> Result<SpectralField> {
    if j < 2 {
        return Err(invalid("boundary terms start at generation 2"));
    }
    eval_skeleton(u, t, params, &Skeleton { gen: j - 1, conds: far_then(j - 1, None), denoms: j - 1, kind: Kind::Boundary })
}

/// Trivial-resonance term `ℛ^(j)`; `ℛ^(1)` is [`op_r1_resonant`] truncated to the ball.
pub fn eval_rj(j: usize, u: &SpectralField, t: f64, params: &NormalFormParams) -> Result<SpectralField> {
    if j == 0 {
        return Err(invalid("generation must be at least 1"));
    }
    if j == 1 {
        params.validate()?;
        check_radius(u, params)?;
        let u = crate::field::truncate(u, params.radius);
        return Ok(op_r1_resonant(&u, &u, &u));
    }
    eval_skeleton(u, t, params, &Skeleton { gen: j - 1, conds: far_then(j - 1, None), denoms: j - 1, kind: Kind::Resonant })
}

/// Near-resonant term `𝒩₁^(j)`: far at generations `< j`, near at `j`.
pub fn eval_n1j(j: usize, u: &SpectralField, t: f64, params: &NormalFormParams) -> Result<SpectralField> {
    if j == 0 {
        return Err(invalid("generation must be at least 1"));
    }
    eval_skeleton(u, t, params, &Skeleton { gen: j, conds: far_then(j - 1, Some(Cond::Near)), denoms: j - 1, kind: Kind::Assembled })
}

/// Error term `𝒩₂^(j)`: far at every generation `≤ j`.
pub fn eval_n2j(j: usize, u: &SpectralField, t: f64, params: &NormalFormParams) -> Result<SpectralField> {
    if j == 0 {
        return Err(invalid("generation must be at least 1"));
    }
    eval_skeleton(u, t, params, &Skeleton { gen: j, conds: far_then(j - 1, Some(Cond::Far)), denoms: j - 1, kind: Kind::Assembled })
}

/// The assembled operator `𝒩^(j) = 𝒩₁^(j) + 𝒩₂^(j)`.
pub fn eval_n_assembled(j: usize, u: &SpectralField, t: f64, params: &NormalFormParams) -> Result<SpectralField> {
    if j == 0 {
        return Err(invalid("generation must be at least 1"));
    }
    eval_skeleton(u, t, params, &Skeleton { gen: j, conds: far_then(j - 1, Some(Cond::Any)), denoms: j - 1, kind: Kind::Assembled })
}

/// Right-hand side pieces of the truncated normal-form equation.
#[derive(Debug, Clone, PartialEq)]
pub struct NfRhs {
    /// `Σ_{j=2}^{J_max} 𝒩₀^(j)`
    pub boundary: SpectralField,
    /// `Σ_{j=1}^{J_max} (𝒩₁^(j) + ℛ^(j))`
    pub integrand: SpectralField,
}

fn interaction_rhs(u: &SpectralField, t: f64, params: &NormalFormParams) -> Result<NfRhs> {
    let mut boundary = SpectralField::zero(params.radius);
    let mut integrand = SpectralField::zero(params.radius);
    for j in 1..=params.j_max {
        if j >= 2 {
            boundary = boundary.add(&eval_n0(j, u, t, params)?);
        }
        integrand = integrand.add(&eval_n1j(j, u, t, params)?).add(&eval_rj(j, u, t, params)?);
    }
    Ok(NfRhs { boundary, integrand })
}

/// Autonomous pieces at a physical snapshot: `S(t) 𝒪(S(-t)u)(t)` for each operator.
pub fn nf_rhs(u_phys: &SpectralField, t: f64, params: &NormalFormParams) -> Result<NfRhs> {
    params.validate()?;
    if params.j_max < 2 {
        return Err(invalid("the normal-form right-hand side needs J_max >= 2"));
    }
    let v = propagate_with(u_phys, -t, params.sign);
    let r = interaction_rhs(&v, t, params)?;
    Ok(NfRhs { boundary: propagate_with(&r.boundary, t, params.sign), integrand: propagate_with(&r.integrand, t, params.sign) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationNorms {
    pub j: usize,
    /// `‖𝒩₀^(j)‖`, absent at `j = 1`
    pub n0: Option<f64>,
    pub n1: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    #[serde(rename = "J_max")]
    pub j_max: usize,
    pub radius: i64,
    #[serde(rename = "K")]
    pub k: f64,
    pub p: f64,
    pub s: f64,
    pub iterations: usize,
    pub final_delta: f64,
    pub converged: bool,
    /// Norms at the final time.
    pub per_generation_norms: Vec<GenerationNorms>,
}

#[derive(Debug, Clone)]
pub struct NfSolution {
    /// `(t_m, u(t_m))` in the physical picture on the uniform grid.
    pub trajectory: Vec<(f64, SpectralField)>,
    pub report: ConvergenceReport,
}

pub const NF_TOLERANCE: f64 = 1e-10;

/// `max` that keeps a NaN once one appears.
pub(crate) fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}
pub const NF_MAX_ITERATIONS: usize = 50;

/// Picard iteration on the integrated normal-form equation
///
/// ```text
/// 𝐮(t) = u0 + B(𝐮)(t) - B(𝐮)(0) + ∫_0^t F(𝐮)(t') dt'
/// ```
///
/// with boundary part `B` and integrand `F` from [`NfRhs`], composite trapezoid
/// quadrature on `steps` uniform intervals. Non-convergence is reported
/// through `report.converged`.
pub fn nf_solve(u0: &SpectralField, t_end: f64, steps: usize, params: &NormalFormParams) -> Result<NfSolution> {
    params.validate()?;
    if params.j_max < 2 {
        return Err(invalid("the normal-form equation needs J_max >= 2"));
    }
    if !(t_end > 0.0) || !t_end.is_finite() || steps == 0 {
        return Err(invalid("need T > 0 and steps >= 1"));
    }
    check_radius(u0, params)?;
    let u0 = crate::field::truncate(u0, params.radius);
    let dt = t_end / steps as f64;
    let times: Vec<f64> = (0..=steps).map(|m| m as f64 * dt).collect();
    let norm = params.diagnostic_norm();
    let mut traj: Vec<SpectralField> = vec![u0.clone(); steps + 1];
    let mut delta = f64::INFINITY;
    let mut iterations = 0;
    while iterations < NF_MAX_ITERATIONS {
        iterations += 1;
        let rhs: Vec<NfRhs> = traj.iter().zip(&times).map(|(u, &t)| interaction_rhs(u, t, params)).collect::<Result<_>>()?;
        let b0 = &rhs[0].boundary;
        let mut integral = SpectralField::zero(params.radius);
        let mut next = Vec::with_capacity(steps + 1);
        for m in 0..=steps {
            if m > 0 {
                let half = Complex64::new(0.5 * dt, 0.0);
                integral = integral.add(&rhs[m - 1].integrand.add(&rhs[m].integrand).scale(half));
            }
            next.push(u0.add(&rhs[m].boundary).sub(b0).add(&integral));
        }
        delta = next.iter().zip(&traj).map(|(a, b)| fl_norm(&a.sub(b), norm)).fold(0.0, nan_max);
        traj = next;
        if delta < NF_TOLERANCE || !delta.is_finite() {
            break;
        }
    }
    let t_last = *times.last().unwrap();
    let u_last = &traj[steps];
    let mut per_generation_norms = Vec::new();
    for j in 1..=params.j_max {
        per_generation_norms.push(GenerationNorms {
            j,
            n0: if j >= 2 { Some(fl_norm(&eval_n0(j, u_last, t_last, params)?, norm)) } else { None },
            n1: fl_norm(&eval_n1j(j, u_last, t_last, params)?, norm),
            r: fl_norm(&eval_rj(j, u_last, t_last, params)?, norm),
        });
    }
    let report = ConvergenceReport {
        j_max: params.j_max,
        radius: params.radius,
        k: params.k,
        p: params.p,
        s: params.s,
        iterations,
        final_delta: delta,
        converged: delta < NF_TOLERANCE,
        per_generation_norms,
    };
    let trajectory = traj.iter().zip(&times).map(|(u, &t)| (t, propagate_with(u, t, params.sign))).collect();
    Ok(NfSolution { trajectory, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{trilinear_n, truncate};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn params(radius: i64, p: f64) -> NormalFormParams {
        NormalFormParams { k: 1.0, p, s: 0.0, j_max: 3, radius, sign: ModulusSign::Hyperbolic }
    }

    fn sample_field(radius: i64) -> SpectralField {
        SpectralField::from_modes(
            radius,
            [
                (FreqVector::new(0, 0), c(0.3, 0.1)),
                (FreqVector::new(1, 0), c(-0.2, 0.25)),
                (FreqVector::new(0, 2), c(0.15, -0.1)),
                (FreqVector::new(-1, 1), c(0.05, 0.2)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn coefficients_of_small_trees() {
        let pl = plans();
        assert_eq!(pl.by_gen[1][0].coeff, I);
        // 𝔗(2) in chronicle order: expand node 1, 2, 3. Expanding the middle child flips the sign twice.
        let c2: Vec<Complex64> = pl.by_gen[2].iter().map(|p| p.coeff).collect();
        assert_eq!(c2, vec![-I, I, -I]);
    }

    #[test]
    fn generation_one_matches_direct_sums() {
        let p = params(3, 0.25);
        let u = sample_field(3);
        let t = 0.37;
        let full = truncate(&op_n1_full(&u, &u, &u, t, &p), 3);
        let (near, far) = split_n1(&u, &u, &u, t, &p);
        assert!(full.max_abs_diff(&truncate(&near.add(&far), 3)) < 1e-14);
        assert!(eval_n_assembled(1, &u, t, &p).unwrap().max_abs_diff(&full) < 1e-14);
        assert!(eval_n1j(1, &u, t, &p).unwrap().max_abs_diff(&truncate(&near, 3)) < 1e-14);
        assert!(eval_n2j(1, &u, t, &p).unwrap().max_abs_diff(&truncate(&far, 3)) < 1e-14);
        assert!(!far.is_zero());
    }

    #[test]
    fn n1_full_at_zero_time() {
        let p = params(3, 2.0);
        let u = sample_field(3);
        let a = op_n1_full(&u, &u, &u, 0.0, &p);
        let b = trilinear_n(&u, &u, &u).scale(I);
        assert!(a.max_abs_diff(&b) < 1e-15);
    }

    #[test]
    fn far_part_empty_for_large_thresholds() {
        let p = NormalFormParams { p: 2.0, ..params(4, 2.0) };
        let u = sample_field(4);
        assert!(eval_n2j(1, &u, 0.3, &p).unwrap().is_zero());
        assert!(eval_n0(2, &u, 0.3, &p).unwrap().is_zero());
        assert!(eval_rj(2, &u, 0.3, &p).unwrap().is_zero());
    }

    #[test]
    fn resonant_single_mode() {
        let z = c(0.3, -0.4);
        let u = SpectralField::single_mode(2, FreqVector::new(1, 1), z).unwrap();
        let r = op_r1_resonant(&u, &u, &u);
        assert!((r.get(FreqVector::new(1, 1)) - I * z.norm_sqr() * z).norm() < 1e-15);
    }

    #[test]
    fn zero_field_gives_zero() {
        let p = params(3, 0.5);
        let u = SpectralField::zero(3);
        for j in 1..=3 {
            assert!(eval_n1j(j, &u, 0.1, &p).unwrap().is_zero());
            assert!(eval_n2j(j, &u, 0.1, &p).unwrap().is_zero());
            assert!(eval_rj(j, &u, 0.1, &p).unwrap().is_zero());
        }
        assert!(eval_n0(2, &u, 0.1, &p).is_ok());
        assert!(eval_n0(1, &u, 0.1, &p).is_err());
    }
}
