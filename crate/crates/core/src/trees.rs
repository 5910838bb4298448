//! Ordered ternary trees with chronicles, index assignments and generation
//! modulations.
//!
//! Node identifiers follow creation order: the root is `0` and the `k`-th
//! expansion (0-based) creates nodes `3k+1, 3k+2, 3k+3`. The chronicle lists
//! the expanded node of every generation, so the prefix tree `π_k(T)` is
//! exactly nodes `0..=3k` with the first `k` chronicle entries.
//!
//! A node is conjugated when its root path crosses an odd number of
//! middle-child edges. Modulations are signed by that parity: the node
//! expanded at generation `k` contributes `μ_k = ε·Φ` with `ε = -1` for a
//! conjugated node, which makes `μ̃_k` the actual phase exponent of the term.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::BallIndex;
use crate::lattice::{modulation, FreqVector, ModulusSign};

/// Default cap for bare tree enumeration.
pub const TREE_CAP: usize = 6;
/// Cap on the generation when assignments are enumerated.
pub const ASSIGNMENT_GENERATION_CAP: usize = 4;
/// Cap on the radius of assignment streams.
pub const ASSIGNMENT_RADIUS_CAP: i64 = 8;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OrderedTree {
    children: Vec<Option<[usize; 3]>>,
    parent: Vec<Option<(usize, u8)>>,
    chronicle: Vec<usize>,
}

impl OrderedTree {
    /// The bare root, generation 0.
    pub(crate) fn root_only() -> Self {
        OrderedTree { children: vec![None], parent: vec![None], chronicle: Vec::new() }
    }

    /// The unique tree of generation 1.
    pub fn first() -> Self {
        Self::root_only().expand(0).expect("root is terminal")
    }

    /// Expands terminal node `a`, appending it to the chronicle.
    pub fn expand(&self, a: usize) -> Result<Self> {
        if a >= self.children.len() || self.children[a].is_some() {
            return Err(invalid(format!("node {a} is not a terminal of this tree")));
        }
        let mut t = self.clone();
        let base = t.children.len();
        t.children[a] = Some([base, base + 1, base + 2]);
        for pos in 0..3u8 {
            t.children.push(None);
            t.parent.push(Some((a, pos)));
        }
        t.chronicle.push(a);
        Ok(t)
    }

    /// Number of expansions `J`.
    pub fn generation(&self) -> usize {
        self.chronicle.len()
    }

    pub fn node_count(&self) -> usize {
        self.children.len()
    }

    pub fn chronicle(&self) -> &[usize] {
        &self.chronicle
    }

    pub fn children(&self, a: usize) -> Option<[usize; 3]> {
        self.children[a]
    }

    /// Parent and child position (0, 1 or 2).
    pub fn parent(&self, a: usize) -> Option<(usize, u8)> {
        self.parent[a]
    }

    pub fn is_terminal(&self, a: usize) -> bool {
        self.children[a].is_none()
    }

    /// Terminal nodes in ascending id order.
    pub fn terminals(&self) -> Vec<usize> {
        (0..self.node_count()).filter(|&a| self.is_terminal(a)).collect()
    }

    /// Parity of middle-child edges on the root path.
    pub fn is_conjugated(&self, mut a: usize) -> bool {
        let mut odd = false;
        while let Some((p, pos)) = self.parent[a] {
            odd ^= pos == 1;
            a = p;
        }
        odd
    }

    /// `+1` or `-1` according to [`Self::is_conjugated`].
    pub fn parity_sign(&self, a: usize) -> i64 {
        if self.is_conjugated(a) {
            -1
        } else {
            1
        }
    }

    /// Generation (1-based) at which node `a` was expanded, if it was.
    pub fn expanded_at(&self, a: usize) -> Option<usize> {
        self.chronicle.iter().position(|&c| c == a).map(|g| g + 1)
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<()> {
        let j = self.generation();
        let internal = (0..self.node_count()).filter(|&a| !self.is_terminal(a)).count();
        if self.node_count() != 3 * j + 1 || internal != j || self.terminals().len() != 2 * j + 1 {
            return Err(invalid("node counts inconsistent with the generation"));
        }
        let mut replay = Self::root_only();
        for &c in &self.chronicle {
            replay = replay.expand(c)?;
        }
        if &replay != self {
            return Err(invalid("chronicle does not reproduce the tree"));
        }
        Ok(())
    }

    fn fmt_node(&self, a: usize, out: &mut String) {
        match self.children[a] {
            None => out.push('*'),
            Some(ch) => {
                out.push_str(&self.expanded_at(a).expect("internal node is in the chronicle").to_string());
                out.push('(');
                for (i, c) in ch.iter().enumerate() {
                    if i > 0 {
                        out.push(' ');
                    }
                    self.fmt_node(*c, out);
                }
                out.push(')');
            }
        }
    }
}

/// Nested form: an expanded node prints as `g(c1 c2 c3)` with `g` its
/// expansion generation, a terminal prints as `*`.
impl fmt::Display for OrderedTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.fmt_node(0, &mut s);
        f.write_str(&s)
    }
}

impl FromStr for OrderedTree {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        // Parse into (generation, path from root) pairs, then replay in generation order.
        struct Parser<'a> {
            s: &'a [u8],
            i: usize,
        }
        impl Parser<'_> {
            fn skip_ws(&mut self) {
                while self.i < self.s.len() && self.s[self.i].is_ascii_whitespace() {
                    self.i += 1;
                }
            }
            fn node(&mut self, path: &mut Vec<u8>, out: &mut Vec<(usize, Vec<u8>)>) -> Result<()> {
                self.skip_ws();
                match self.s.get(self.i) {
                    Some(b'*') => {
                        self.i += 1;
                        Ok(())
                    }
                    Some(c) if c.is_ascii_digit() => {
                        let start = self.i;
                        while self.i < self.s.len() && self.s[self.i].is_ascii_digit() {
                            self.i += 1;
                        }
                        let g: usize = std::str::from_utf8(&self.s[start..self.i]).unwrap().parse().map_err(|_| Error::Format("bad generation label".into()))?;
                        out.push((g, path.clone()));
                        self.skip_ws();
                        if self.s.get(self.i) != Some(&b'(') {
                            return Err(Error::Format("expected '(' after generation label".into()));
                        }
                        self.i += 1;
                        for pos in 0..3u8 {
                            path.push(pos);
                            self.node(path, out)?;
                            path.pop();
                        }
                        self.skip_ws();
                        if self.s.get(self.i) != Some(&b')') {
                            return Err(Error::Format("expected ')' after three children".into()));
                        }
                        self.i += 1;
                        Ok(())
                    }
                    _ => Err(Error::Format(format!("unexpected input at byte {}", self.i))),
                }
            }
        }
        let mut p = Parser { s: text.as_bytes(), i: 0 };
        let mut labelled = Vec::new();
        p.node(&mut Vec::new(), &mut labelled)?;
        p.skip_ws();
        if p.i != p.s.len() {
            return Err(Error::Format("trailing input after tree".into()));
        }
        if labelled.is_empty() {
            return Err(Error::Format("a tree needs at least one expansion".into()));
        }
        labelled.sort_by_key(|(g, _)| *g);
        for (idx, (g, _)) in labelled.iter().enumerate() {
            if *g != idx + 1 {
                return Err(Error::Format("generation labels must be exactly 1..J".into()));
            }
        }
        let mut tree = OrderedTree::root_only();
        for (_, path) in &labelled {
            let mut a = 0;
            for &pos in path {
                a = tree.children[a].ok_or_else(|| Error::Format("node expanded before its parent".into()))?[pos as usize];
            }
            tree = tree.expand(a).map_err(|e| Error::Format(e.to_string()))?;
        }
        Ok(tree)
    }
}

/// All ordered trees of generation `j`, ordered lexicographically by chronicle.
pub fn enumerate_trees(j: usize) -> Result<Vec<OrderedTree>> {
    enumerate_trees_capped(j, TREE_CAP)
}

pub fn enumerate_trees_capped(j: usize, cap: usize) -> Result<Vec<OrderedTree>> {
    if j == 0 {
        return Err(invalid("tree generation must be at least 1"));
    }
    if j > cap {
        return Err(Error::CapExceeded(format!("tree generation {j} above cap {cap}")));
    }
    let mut level = vec![OrderedTree::root_only()];
    for _ in 0..j {
        let mut next = Vec::with_capacity(level.len() * (2 * level[0].generation() + 1));
        for t in &level {
            for a in t.terminals() {
                next.push(t.expand(a).expect("terminal"));
            }
        }
        level = next;
    }
    Ok(level)
}

/// `π_k`: the prefix tree after the first `k` expansions.
pub fn project(tree: &OrderedTree, k: usize) -> Result<OrderedTree> {
    if k == 0 || k > tree.generation() {
        return Err(invalid(format!("projection index {k} outside 1..={}", tree.generation())));
    }
    let n = 3 * k + 1;
    let children = tree.children[..n]
        .iter()
        .map(|c| c.filter(|ch| ch[0] < n))
        .collect();
    Ok(OrderedTree { children, parent: tree.parent[..n].to_vec(), chronicle: tree.chronicle[..k].to_vec() })
}

/// A frequency for every node of a tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexAssignment<'t> {
    tree: &'t OrderedTree,
    freqs: Vec<FreqVector>,
}

impl<'t> IndexAssignment<'t> {
    pub fn new(tree: &'t OrderedTree, freqs: Vec<FreqVector>) -> Result<Self> {
        if freqs.len() != tree.node_count() {
            return Err(invalid("one frequency per node is required"));
        }
        Ok(IndexAssignment { tree, freqs })
    }

    pub fn tree(&self) -> &'t OrderedTree {
        self.tree
    }

    pub fn freq(&self, a: usize) -> FreqVector {
        self.freqs[a]
    }

    pub fn freqs(&self) -> &[FreqVector] {
        &self.freqs
    }

    /// `n_a = n_{a1} - n_{a2} + n_{a3}` at every internal node.
    pub fn is_consistent(&self) -> bool {
        (0..self.tree.node_count()).all(|a| match self.tree.children(a) {
            None => true,
            Some([x, y, z]) => self.freqs[a] == self.freqs[x] - self.freqs[y] + self.freqs[z],
        })
    }

    /// `{n_a, n_{a2}} ∩ {n_{a1}, n_{a3}} = ∅` at every internal node.
    pub fn is_nondegenerate(&self) -> bool {
        (0..self.tree.node_count()).all(|a| match self.tree.children(a) {
            None => true,
            Some([x, y, z]) => {
                let (n, n1, n2, n3) = (self.freqs[a], self.freqs[x], self.freqs[y], self.freqs[z]);
                n != n1 && n != n3 && n2 != n1 && n2 != n3
            }
        })
    }

    /// Restriction to the prefix tree `prefix = π_k(tree)`.
    pub fn restrict<'p>(&self, prefix: &'p OrderedTree) -> IndexAssignment<'p> {
        IndexAssignment { tree: prefix, freqs: self.freqs[..prefix.node_count()].to_vec() }
    }
}

/// Lazy stream of index assignments with a fixed root frequency, every node
/// inside the ball `|n| ≤ radius`. Terminal frequencies run through the ball
/// in lexicographic odometer order; the last terminal is solved from the root.
pub struct AssignmentStream<'t> {
    tree: &'t OrderedTree,
    root: FreqVector,
    ball: BallIndex,
    terminals: Vec<usize>,
    signs: Vec<i64>,
    digits: Vec<usize>,
    done: bool,
}

/// Assignments satisfying consistency and non-degeneracy, all nodes in the ball.
pub fn enumerate_assignments(tree: &OrderedTree, root_freq: FreqVector, radius: i64) -> Result<AssignmentStream<'_>> {
    if tree.generation() > ASSIGNMENT_GENERATION_CAP {
        return Err(Error::CapExceeded(format!("assignment streams are capped at generation {ASSIGNMENT_GENERATION_CAP}")));
    }
    if !(0..=ASSIGNMENT_RADIUS_CAP).contains(&radius) {
        return Err(Error::CapExceeded(format!("assignment streams are capped at radius {ASSIGNMENT_RADIUS_CAP}")));
    }
    let terminals = tree.terminals();
    let signs = terminals.iter().map(|&a| tree.parity_sign(a)).collect();
    let free = terminals.len() - 1;
    Ok(AssignmentStream {
        tree,
        root: root_freq,
        ball: BallIndex::new(radius),
        terminals,
        signs,
        digits: vec![0; free],
        done: !root_freq.in_ball(radius),
    })
}

impl<'t> AssignmentStream<'t> {
    fn advance(&mut self) {
        let base = self.ball.len();
        for d in self.digits.iter_mut().rev() {
            *d += 1;
            if *d < base {
                return;
            }
            *d = 0;
        }
        self.done = true;
    }

    fn current(&self) -> Option<Vec<FreqVector>> {
        let pts = self.ball.points();
        let mut freqs = vec![FreqVector::ZERO; self.tree.node_count()];
        let last = self.terminals.len() - 1;
        // root = Σ ε_a n_a over terminals
        let mut rest = self.root;
        for (i, &d) in self.digits.iter().enumerate() {
            let n = pts[d];
            freqs[self.terminals[i]] = n;
            rest = if self.signs[i] > 0 { rest - n } else { rest + n };
        }
        let n_last = if self.signs[last] > 0 { rest } else { -rest };
        if !n_last.in_ball(self.ball.radius()) {
            return None;
        }
        freqs[self.terminals[last]] = n_last;
        for a in (0..self.tree.node_count()).rev() {
            if let Some([x, y, z]) = self.tree.children(a) {
                let (n1, n2, n3) = (freqs[x], freqs[y], freqs[z]);
                let n = n1 - n2 + n3;
                if !n.in_ball(self.ball.radius()) || n == n1 || n == n3 {
                    return None;
                }
                freqs[a] = n;
            }
        }
        debug_assert_eq!(freqs[0], self.root);
        Some(freqs)
    }
}

impl<'t> Iterator for AssignmentStream<'t> {
    type Item = IndexAssignment<'t>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            let cur = self.current();
            self.advance();
            if let Some(freqs) = cur {
                return Some(IndexAssignment { tree: self.tree, freqs });
            }
        }
        None
    }
}

/// Signed generation modulations `μ_1..μ_J` and prefix sums `μ̃_0 = 0, μ̃_1, …, μ̃_J`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationModulations {
    pub mu: Vec<i128>,
    pub mu_tilde: Vec<i128>,
}

impl GenerationModulations {
    pub fn from_mu(mu: Vec<i128>) -> Self {
        let mut mu_tilde = Vec::with_capacity(mu.len() + 1);
        mu_tilde.push(0);
        for &m in &mu {
            let last = *mu_tilde.last().unwrap();
            mu_tilde.push(last + m);
        }
        GenerationModulations { mu, mu_tilde }
    }

    pub fn generations(&self) -> usize {
        self.mu.len()
    }

    /// `μ_j`, 1-based.
    pub fn mu(&self, j: usize) -> i128 {
        self.mu[j - 1]
    }

    /// `μ̃_j`, with `μ̃_0 = 0`.
    pub fn mu_tilde(&self, j: usize) -> i128 {
        self.mu_tilde[j]
    }
}

pub fn modulations(a: &IndexAssignment<'_>, sign: ModulusSign) -> GenerationModulations {
    let tree = a.tree();
    let mu = tree
        .chronicle()
        .iter()
        .map(|&c| {
            let [x, y, z] = tree.children(c).expect("chronicle names internal nodes");
            let phi = modulation(a.freq(c), a.freq(x), a.freq(y), a.freq(z), sign);
            tree.parity_sign(c) as i128 * phi
        })
        .collect();
    GenerationModulations::from_mu(mu)
}

/// `((2j+1)K)^{4p}`.
pub fn near_threshold(j: usize, k: f64, p: f64) -> f64 {
    let base = (2 * j + 1) as f64 * k;
    let e = 4.0 * p;
    if e.fract() == 0.0 && e.abs() <= 64.0 {
        base.powi(e as i32)
    } else {
        base.powf(e)
    }
}

/// `|μ̃_j| ≤ ((2j+1)K)^{4p}`.
pub fn in_near_resonant_set(mods: &GenerationModulations, j: usize, k: f64, p: f64) -> bool {
    assert!(j >= 1 && j <= mods.generations(), "generation {j} out of range");
    (mods.mu_tilde(j).unsigned_abs() as f64) <= near_threshold(j, k, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cardinalities() {
        let want = [1usize, 3, 15, 105, 945];
        for (j, &w) in want.iter().enumerate() {
            assert_eq!(enumerate_trees(j + 1).unwrap().len(), w);
        }
        assert!(enumerate_trees(7).is_err());
        assert!(enumerate_trees(0).is_err());
    }

    #[test]
    fn structure_and_parity() {
        let t = OrderedTree::first().expand(2).unwrap();
        assert_eq!(t.node_count(), 7);
        assert_eq!(t.terminals(), vec![1, 3, 4, 5, 6]);
        assert!(t.is_conjugated(2));
        assert!(t.is_conjugated(4));
        assert!(!t.is_conjugated(5));
        assert!(t.is_conjugated(6));
        t.validate().unwrap();
    }

    #[test]
    fn display_round_trip() {
        let t = OrderedTree::first().expand(3).unwrap().expand(1).unwrap();
        let s = t.to_string();
        assert_eq!(s, "1(3(* * *) * 2(* * *))");
        assert_eq!(s.parse::<OrderedTree>().unwrap(), t);
        assert!("1(* *)".parse::<OrderedTree>().is_err());
        assert!("2(* * *)".parse::<OrderedTree>().is_err());
        assert!("1(2(* * *) * *) x".parse::<OrderedTree>().is_err());
    }

    #[test]
    fn projection() {
        let t = OrderedTree::first().expand(1).unwrap().expand(4).unwrap();
        assert_eq!(project(&t, 3).unwrap(), t);
        assert_eq!(project(&t, 1).unwrap(), OrderedTree::first());
        assert_eq!(project(&t, 2).unwrap(), OrderedTree::first().expand(1).unwrap());
        assert!(project(&t, 0).is_err());
        assert!(project(&t, 4).is_err());
    }

    #[test]
    fn threshold_boundary() {
        let m = GenerationModulations::from_mu(vec![6561]);
        assert!(in_near_resonant_set(&m, 1, 1.0, 2.0));
        let m = GenerationModulations::from_mu(vec![-6562]);
        assert!(!in_near_resonant_set(&m, 1, 1.0, 2.0));
        let m = GenerationModulations::from_mu(vec![0, 0]);
        assert!(in_near_resonant_set(&m, 2, 3.5, 1.7));
    }

    #[test]
    fn radius_zero_stream_is_empty() {
        let t = OrderedTree::first();
        assert_eq!(enumerate_assignments(&t, FreqVector::ZERO, 0).unwrap().count(), 0);
    }

    #[test]
    fn first_generation_matches_brute_force() {
        let t = OrderedTree::first();
        let got: Vec<_> = enumerate_assignments(&t, FreqVector::ZERO, 1).unwrap().map(|a| (a.freq(1), a.freq(2), a.freq(3))).collect();
        let ball = BallIndex::new(1);
        let mut want = Vec::new();
        for &n1 in ball.points() {
            for &n2 in ball.points() {
                let n3 = FreqVector::ZERO - n1 + n2;
                if n3.in_ball(1) && n1 != FreqVector::ZERO && n3 != FreqVector::ZERO {
                    want.push((n1, n2, n3));
                }
            }
        }
        assert_eq!(got, want);
    }
}
