//! Space-time decoding graphs for the toric code.
//!
//! Every syndrome-extraction fault of first order in the error rate flips
//! either zero or two defect vertices in each of the two decoding graphs
//! (plaquette defects track X errors, star defects track Z errors).  The
//! possible defect pairs fall into six translation-invariant classes:
//!
//! * `A` — same check, consecutive rounds (measurement / ancilla faults);
//! * `B` — vertically adjacent checks, same round;
//! * `C` — vertically adjacent checks, consecutive rounds;
//! * `D` — horizontally adjacent checks, same round;
//! * `E` — horizontally adjacent checks, consecutive rounds;
//! * `F` — the diagonal `(r, c) → (r+1, c-1)` across consecutive rounds
//!   (the hook direction singled out by the CNOT ordering).
//!
//! The per-class fault masses are precomputed exactly (as multiples of
//! `p/15`, plus the readout flip rate `q` on class `A`) for each extraction
//! scheme; [`enumerate_single_fault_classes`] re-derives them from the
//! compiled circuits by brute-force fault insertion, which is what the unit
//! tests check the closed forms against.
//!
//! When three-outcome measurements are in use, a heralded-leakage readout
//! carries extra information: the leaked qubit picked up its leakage at one
//! of the gates in its history, and every CNOT partner it met after that
//! point was depolarized.  [`build_conditional`] folds those conditional
//! error mechanisms into a per-trial reweighted copy of the static graph and
//! zeroes the time-like edges across undefined outcomes.

use std::cmp::Reverse;
use std::collections::HashMap;
use std::fmt;

use num_rational::Ratio;
use num_traits::ToPrimitive;

use crate::circuits::{
    final_data_chains, propagate, FrozenSpan, Herald, Injection, Program, ResolvedOp,
    SampleOutput, Scheme,
};
use crate::lattice::{CheckKind, ToricLattice};
use crate::noise::{Basis, Label, NoiseParams};

/// Defect-pair classes of the space-time graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeClass {
    A,
    B,
    C,
    D,
    E,
    F,
    /// Extra edge created by heralded-leakage conditioning; its probability
    /// comes from the herald, not from the static class table.
    Conditional,
}

impl EdgeClass {
    pub const STATIC: [EdgeClass; 6] = [
        EdgeClass::A,
        EdgeClass::B,
        EdgeClass::C,
        EdgeClass::D,
        EdgeClass::E,
        EdgeClass::F,
    ];

    pub fn letter(self) -> char {
        match self {
            EdgeClass::A => 'a',
            EdgeClass::B => 'b',
            EdgeClass::C => 'c',
            EdgeClass::D => 'd',
            EdgeClass::E => 'e',
            EdgeClass::F => 'f',
            EdgeClass::Conditional => '*',
        }
    }
}

impl fmt::Display for EdgeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// First-order coefficient of the depolarizing rate `p` in the probability
/// of each static edge class, as an exact rational.  The same table holds
/// for both decoding graphs.
pub fn class_p_coefficient(scheme: Scheme, class: EdgeClass) -> Ratio<i64> {
    let fifteenths = match scheme {
        Scheme::Standard => match class {
            EdgeClass::A => 31,
            EdgeClass::B => 28,
            EdgeClass::C => 16,
            EdgeClass::D => 52,
            EdgeClass::E => 8,
            EdgeClass::F => 8,
            EdgeClass::Conditional => panic!("conditional edges have no class coefficient"),
        },
        Scheme::Quick => match class {
            EdgeClass::A => 35,
            EdgeClass::B => 32,
            EdgeClass::C => 20,
            EdgeClass::D => 60,
            EdgeClass::E => 8,
            EdgeClass::F => 8,
            EdgeClass::Conditional => panic!("conditional edges have no class coefficient"),
        },
        Scheme::PartialLru => match class {
            EdgeClass::A => 31,
            EdgeClass::B => 52,
            EdgeClass::C => 16,
            EdgeClass::D => 76,
            EdgeClass::E => 8,
            EdgeClass::F => 8,
            EdgeClass::Conditional => panic!("conditional edges have no class coefficient"),
        },
        Scheme::FullLru => match class {
            EdgeClass::A => 103,
            EdgeClass::B => 52,
            EdgeClass::C => 88,
            EdgeClass::D => 172,
            EdgeClass::E => 32,
            EdgeClass::F => 32,
            EdgeClass::Conditional => panic!("conditional edges have no class coefficient"),
        },
    };
    Ratio::new(fifteenths, 15)
}

/// Whether the class probability additionally contains one unit of the
/// readout flip rate `q` (only the same-check time-like class does).
pub fn class_includes_q(class: EdgeClass) -> bool {
    class == EdgeClass::A
}

/// Numeric probability of a static edge class at the given rates.
pub fn class_probability(scheme: Scheme, class: EdgeClass, params: &NoiseParams) -> f64 {
    let coef = class_p_coefficient(scheme, class).to_f64().unwrap();
    let mut prob = coef * params.p;
    if class_includes_q(class) {
        prob += params.q;
    }
    prob
}

/// One edge of a decoding graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub prob: f64,
    /// `-ln(prob)`; zero for edges across undefined outcomes.
    pub weight: f64,
    pub class: EdgeClass,
    /// Data-qubit chain to apply when a matched path uses this edge.
    pub correction: Vec<usize>,
}

/// The space-time graph of one check type over `rounds` noisy cycles plus
/// the final perfect readout layer.
///
/// Vertex `t * d² + check` is check `check`'s defect slot between rounds
/// `t-1` and `t`, for `t` in `0..=rounds`.
#[derive(Debug, Clone)]
pub struct DecodingGraph {
    pub kind: CheckKind,
    pub d: usize,
    pub rounds: usize,
    pub edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
    index: HashMap<(usize, usize), usize>,
}

impl DecodingGraph {
    /// Static graph of a scheme: six edge classes, uniform in space and time.
    pub fn build(
        lat: &ToricLattice,
        scheme: Scheme,
        rounds: usize,
        kind: CheckKind,
        params: &NoiseParams,
    ) -> DecodingGraph {
        assert!(lat.d() >= 3, "decoding graphs need distance >= 3");
        assert!(rounds >= 1);
        let nc = lat.n_checks();
        let mut g = DecodingGraph {
            kind,
            d: lat.d(),
            rounds,
            edges: Vec::new(),
            adj: vec![Vec::new(); (rounds + 1) * nc],
            index: HashMap::new(),
        };
        let prob = |class| class_probability(scheme, class, params);
        // Corrections: which single data qubit sits between two adjacent
        // checks depends on the check type.
        let vertical_corr = |i: isize, j: isize| match kind {
            CheckKind::Plaquette => vec![lat.h(i + 1, j)],
            CheckKind::Star => vec![lat.v(i, j)],
        };
        let horizontal_corr = |i: isize, j: isize| match kind {
            CheckKind::Plaquette => vec![lat.v(i, j + 1)],
            CheckKind::Star => vec![lat.h(i, j)],
        };
        let diagonal_corr = |i: isize, j: isize| match kind {
            CheckKind::Plaquette => vec![lat.h(i + 1, j), lat.v(i + 1, j)],
            CheckKind::Star => vec![lat.v(i, j), lat.h(i + 1, j - 1)],
        };
        for t in 0..=rounds {
            for i in 0..lat.d() as isize {
                for j in 0..lat.d() as isize {
                    let f = lat.check_id(i, j);
                    let below = lat.check_id(i + 1, j);
                    let right = lat.check_id(i, j + 1);
                    g.add_edge(
                        g.vertex(f, t),
                        g.vertex(below, t),
                        prob(EdgeClass::B),
                        EdgeClass::B,
                        vertical_corr(i, j),
                    );
                    g.add_edge(
                        g.vertex(f, t),
                        g.vertex(right, t),
                        prob(EdgeClass::D),
                        EdgeClass::D,
                        horizontal_corr(i, j),
                    );
                    if t < rounds {
                        let hook = lat.check_id(i + 1, j - 1);
                        g.add_edge(
                            g.vertex(f, t),
                            g.vertex(f, t + 1),
                            prob(EdgeClass::A),
                            EdgeClass::A,
                            Vec::new(),
                        );
                        g.add_edge(
                            g.vertex(f, t),
                            g.vertex(below, t + 1),
                            prob(EdgeClass::C),
                            EdgeClass::C,
                            vertical_corr(i, j),
                        );
                        g.add_edge(
                            g.vertex(f, t),
                            g.vertex(right, t + 1),
                            prob(EdgeClass::E),
                            EdgeClass::E,
                            horizontal_corr(i, j),
                        );
                        g.add_edge(
                            g.vertex(f, t),
                            g.vertex(hook, t + 1),
                            prob(EdgeClass::F),
                            EdgeClass::F,
                            diagonal_corr(i, j),
                        );
                    }
                }
            }
        }
        g
    }

    pub fn n_checks(&self) -> usize {
        self.d * self.d
    }

    pub fn n_vertices(&self) -> usize {
        (self.rounds + 1) * self.n_checks()
    }

    pub fn vertex(&self, check: usize, t: usize) -> usize {
        debug_assert!(check < self.n_checks() && t <= self.rounds);
        t * self.n_checks() + check
    }

    /// `(check, t)` of a vertex id.
    pub fn vertex_coords(&self, v: usize) -> (usize, usize) {
        (v % self.n_checks(), v / self.n_checks())
    }

    pub fn edge_between(&self, u: usize, v: usize) -> Option<usize> {
        self.index.get(&key(u, v)).copied()
    }

    /// Edge indices incident to a vertex.
    pub fn incident(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    fn add_edge(&mut self, u: usize, v: usize, prob: f64, class: EdgeClass, correction: Vec<usize>) {
        assert!(u != v, "self-loops are not allowed");
        assert!(prob > 0.0 && prob < 1.0, "edge probability {prob} out of range");
        let idx = self.edges.len();
        let prev = self.index.insert(key(u, v), idx);
        assert!(prev.is_none(), "duplicate edge {u}-{v}");
        self.edges.push(Edge {
            u,
            v,
            prob,
            weight: -prob.ln(),
            class,
            correction,
        });
        self.adj[u].push(idx);
        self.adj[v].push(idx);
    }

    fn set_certain(&mut self, idx: usize) {
        self.edges[idx].prob = 1.0;
        self.edges[idx].weight = 0.0;
    }

    fn combine_prob(&mut self, idx: usize, extra: f64) {
        let e = &mut self.edges[idx];
        if e.prob >= 1.0 {
            // The edge spans an undefined outcome and is already free.
            return;
        }
        let p = e.prob + extra - 2.0 * e.prob * extra;
        e.prob = p;
        e.weight = -p.ln();
    }

    /// One line per edge: `r1 c1 t1  r2 c2 t2  class prob weight`.
    pub fn dump(&self) -> String {
        use fmt::Write;
        let mut out = String::new();
        for e in &self.edges {
            let (f1, t1) = self.vertex_coords(e.u);
            let (f2, t2) = self.vertex_coords(e.v);
            writeln!(
                out,
                "{} {} {}  {} {} {}  {} {:.6e} {:.6}",
                f1 / self.d,
                f1 % self.d,
                t1,
                f2 / self.d,
                f2 % self.d,
                t2,
                e.class,
                e.prob,
                e.weight,
            )
            .unwrap();
        }
        out
    }
}

fn key(u: usize, v: usize) -> (usize, usize) {
    (u.min(v), u.max(v))
}

/// Single-source shortest paths with predecessor edges.
#[derive(Debug, Clone)]
pub struct ShortestPaths {
    pub source: usize,
    pub dist: Vec<f64>,
    pred: Vec<Option<usize>>,
}

impl ShortestPaths {
    /// Edge indices of the shortest path from the source to `target`.
    pub fn path_edges(&self, g: &DecodingGraph, target: usize) -> Vec<usize> {
        assert!(
            self.dist[target].is_finite(),
            "vertex {target} is unreachable from {}",
            self.source
        );
        let mut edges = Vec::new();
        let mut v = target;
        while let Some(e) = self.pred[v] {
            edges.push(e);
            v = g.edges[e].u + g.edges[e].v - v;
        }
        edges
    }
}

/// Dijkstra over a decoding graph.  Ties are broken on vertex id so the
/// result is independent of queue internals.
pub fn dijkstra(g: &DecodingGraph, source: usize) -> ShortestPaths {
    let n = g.n_vertices();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    let mut heap = std::collections::BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Reverse((OrdF64(0.0), source)));
    while let Some(Reverse((OrdF64(du), u))) = heap.pop() {
        if du > dist[u] {
            continue;
        }
        for &e in g.incident(u) {
            let edge = &g.edges[e];
            let v = edge.u + edge.v - u;
            let cand = du + edge.weight;
            if cand < dist[v] {
                dist[v] = cand;
                pred[v] = Some(e);
                heap.push(Reverse((OrdF64(cand), v)));
            }
        }
    }
    ShortestPaths { source, dist, pred }
}

/// Total-order wrapper so f64 keys can live in a binary heap.
#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// The defined syndrome record of one check type: which `(check, round)`
/// outcomes exist (three-outcome measurements leave heralded rounds
/// undefined) and their values, including the perfect readout layer at
/// `t = rounds`.
///
/// A defect sits at vertex `(f, t_prev + 1)` whenever two consecutive
/// defined outcomes of check `f` disagree, where `t_prev` is the earlier
/// defined round (virtually `-1`, with value 0, before the first one).
#[derive(Debug, Clone)]
pub struct DefectFrame {
    pub kind: CheckKind,
    pub n_checks: usize,
    pub rounds: usize,
    /// Per check: `(round, value)` of every defined outcome, ascending.
    defined: Vec<Vec<(usize, bool)>>,
}

impl DefectFrame {
    pub fn new(
        kind: CheckKind,
        outcomes: &[Option<bool>],
        perfect: &[bool],
        rounds: usize,
        n_checks: usize,
    ) -> DefectFrame {
        assert_eq!(outcomes.len(), rounds * n_checks);
        assert_eq!(perfect.len(), n_checks);
        let defined = (0..n_checks)
            .map(|f| {
                (0..rounds)
                    .filter_map(|t| outcomes[t * n_checks + f].map(|b| (t, b)))
                    .chain([(rounds, perfect[f])])
                    .collect()
            })
            .collect();
        DefectFrame {
            kind,
            n_checks,
            rounds,
            defined,
        }
    }

    pub fn from_sample(
        kind: CheckKind,
        sample: &SampleOutput,
        perfect: &[bool],
        rounds: usize,
        n_checks: usize,
    ) -> DefectFrame {
        let outcomes = match kind {
            CheckKind::Plaquette => &sample.plaq,
            CheckKind::Star => &sample.star,
        };
        DefectFrame::new(kind, outcomes, perfect, rounds, n_checks)
    }

    fn vertex(&self, check: usize, t: usize) -> usize {
        t * self.n_checks + check
    }

    pub fn is_defined(&self, check: usize, round: usize) -> bool {
        self.defined[check]
            .binary_search_by_key(&round, |e| e.0)
            .is_ok()
    }

    /// Noisy rounds with no defined outcome, as `(check, round)` pairs.
    pub fn masked_outcomes(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for f in 0..self.n_checks {
            let mut next = self.defined[f].iter().peekable();
            for t in 0..self.rounds {
                if next.peek().is_some_and(|&&(dt, _)| dt == t) {
                    next.next();
                } else {
                    out.push((f, t));
                }
            }
        }
        out
    }

    /// Defect vertex ids of the recorded syndrome.
    pub fn defects(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for f in 0..self.n_checks {
            let mut prev_t: isize = -1;
            let mut prev_val = false;
            for &(t, val) in &self.defined[f] {
                if val != prev_val {
                    out.push(self.vertex(f, (prev_t + 1) as usize));
                }
                prev_t = t as isize;
                prev_val = val;
            }
        }
        out
    }

    /// Defect vertices toggled by flipping the outcome of `(check, round)`
    /// (`round == rounds` addresses the perfect layer).  An undefined
    /// outcome toggles nothing.
    pub fn flip_toggles(&self, check: usize, round: usize) -> (Option<usize>, Option<usize>) {
        match self.defined[check].binary_search_by_key(&round, |e| e.0) {
            Err(_) => (None, None),
            Ok(pos) => {
                let prev_t = if pos == 0 {
                    -1
                } else {
                    self.defined[check][pos - 1].0 as isize
                };
                let first = self.vertex(check, (prev_t + 1) as usize);
                let second = if pos + 1 < self.defined[check].len() {
                    Some(self.vertex(check, round + 1))
                } else {
                    None
                };
                (Some(first), second)
            }
        }
    }
}

/// One conditional error mechanism implied by a heralded-leakage readout:
/// the partner of the `k`-th CNOT in the leaked qubit's history carries an
/// extra X (and independently Z) with marginal probability `k / (2n)`,
/// where `n` counts the leakage-capable locations of the history and `k`
/// the locations strictly before that CNOT.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub cnot_op: usize,
    pub partner: usize,
    pub prob: Ratio<i64>,
}

pub fn herald_candidates(prog: &Program, herald: &Herald) -> Vec<Candidate> {
    let hist = prog.gate_history(herald.phys, herald.op);
    let n = hist.n_locations() as i64;
    hist.cnots
        .iter()
        .enumerate()
        .map(|(k0, ev)| Candidate {
            cnot_op: ev.op,
            partner: ev.partner,
            prob: Ratio::new(k0 as i64 + 1, 2 * n),
        })
        .collect()
}

/// Syndrome flips caused by injecting a Pauli `Y` on a candidate's partner
/// right after the CNOT, with the heralded qubit frozen (leaked) from that
/// CNOT through its readout.
fn candidate_effect(prog: &Program, herald: &Herald, cand: &Candidate) -> crate::circuits::Propagated {
    let injection = Injection {
        at: cand.cnot_op + 1,
        phys: cand.partner,
        label: Label::Y,
    };
    let frozen = FrozenSpan {
        phys: herald.phys,
        from: cand.cnot_op,
        until: herald.op + 1,
    };
    propagate(prog, &[injection], &[frozen], &[])
}

/// Per-trial conditional reweighting of a static decoding graph.
///
/// Time-like edges across undefined outcomes become free (probability one,
/// weight zero), and every herald's candidate mechanisms either boost an
/// existing edge (`p' = p + π - 2pπ`) or introduce a new `Conditional` edge
/// carrying the propagated data-error chain as its correction.
pub fn build_conditional(
    base: &DecodingGraph,
    prog: &Program,
    heralds: &[Herald],
    frame: &DefectFrame,
) -> DecodingGraph {
    assert_eq!(base.kind, frame.kind);
    assert_eq!(base.rounds, frame.rounds);
    let mut g = base.clone();
    let lat = &prog.lattice;
    for (check, round) in frame.masked_outcomes() {
        let u = g.vertex(check, round);
        let v = g.vertex(check, round + 1);
        let e = g
            .edge_between(u, v)
            .expect("every same-check time-like pair has an edge");
        g.set_certain(e);
    }
    for herald in heralds {
        for cand in herald_candidates(prog, herald) {
            let pi = cand.prob.to_f64().unwrap();
            let prop = candidate_effect(prog, herald, &cand);
            let mut toggles = Vec::new();
            let mut push = |t: (Option<usize>, Option<usize>)| {
                toggles.extend(t.0);
                toggles.extend(t.1);
            };
            for &(kind, check, round) in &prop.check_flips {
                if kind == g.kind {
                    push(frame.flip_toggles(check, round));
                }
            }
            let (x, z, _) = final_data_chains(prog, &prop.final_labels);
            let chain = match g.kind {
                CheckKind::Plaquette => x,
                CheckKind::Star => z,
            };
            let boundary = match g.kind {
                CheckKind::Plaquette => lat.plaquette_boundary(&chain),
                CheckKind::Star => lat.star_boundary(&chain),
            };
            for (f, _) in boundary.iter().enumerate().filter(|(_, &b)| b) {
                push(frame.flip_toggles(f, g.rounds));
            }
            toggles.sort_unstable();
            let mut endpoints = Vec::new();
            let mut i = 0;
            while i < toggles.len() {
                let run = toggles[i..].iter().take_while(|&&v| v == toggles[i]).count();
                if run % 2 == 1 {
                    endpoints.push(toggles[i]);
                }
                i += run;
            }
            match endpoints.len() {
                0 => continue,
                2 => {}
                n => panic!("herald candidate produced {n} defect endpoints"),
            }
            let (u, v) = (endpoints[0], endpoints[1]);
            if let Some(e) = g.edge_between(u, v) {
                g.combine_prob(e, pi);
            } else {
                let correction = chain
                    .iter()
                    .enumerate()
                    .filter_map(|(q, &b)| b.then_some(q))
                    .collect();
                g.add_edge(u, v, pi, EdgeClass::Conditional, correction);
            }
        }
    }
    g
}

/// A single fault's defect pair, for structural cross-checks.
#[derive(Debug, Clone)]
pub struct FaultRecord {
    pub kind: CheckKind,
    pub u: usize,
    pub v: usize,
    pub class: EdgeClass,
}

/// Exhaustive first-order fault masses of one extraction cycle.
#[derive(Debug, Default)]
pub struct ClassMasses {
    /// `(kind, class)` → total mass in units of the depolarizing rate `p`.
    pub p_mass: HashMap<(CheckKind, EdgeClass), Ratio<i64>>,
    /// `(kind, class)` → total mass in units of the readout flip rate `q`.
    pub q_mass: HashMap<(CheckKind, EdgeClass), Ratio<i64>>,
    pub records: Vec<FaultRecord>,
}

/// Brute-force oracle: insert every possible single fault of one cycle
/// (orthogonal preparation errors with mass `p`, the three idle Paulis with
/// mass `p/3` each, the fifteen two-qubit CNOT Paulis with mass `p/15`
/// each, readout flips with mass `q`), propagate it through the ideal
/// circuit, and classify the resulting defect pair in each graph.
///
/// Panics if any fault yields a defect pair outside the six classes — every
/// diagonal must point along `(+1, -1)` per round — or an odd defect count.
pub fn enumerate_single_fault_classes(
    lat: &ToricLattice,
    scheme: Scheme,
    rounds: usize,
    probe_cycle: usize,
) -> ClassMasses {
    assert!(probe_cycle + 1 < rounds, "leave room past the probe cycle");
    let prog = Program::new(*lat, scheme, rounds);
    let mut out = ClassMasses::default();
    for idx in prog.cycle_range(probe_cycle) {
        match prog.ops[idx] {
            ResolvedOp::Prep { phys, basis } => {
                let label = match basis {
                    Basis::Z => Label::X,
                    Basis::X => Label::Z,
                };
                let inj = [Injection {
                    at: idx + 1,
                    phys,
                    label,
                }];
                record_fault(&prog, &inj, &[], Ratio::new(1, 1), Ratio::new(0, 1), &mut out);
            }
            ResolvedOp::Idle { phys } => {
                for label in [Label::X, Label::Y, Label::Z] {
                    let inj = [Injection {
                        at: idx + 1,
                        phys,
                        label,
                    }];
                    record_fault(&prog, &inj, &[], Ratio::new(1, 3), Ratio::new(0, 1), &mut out);
                }
            }
            ResolvedOp::Cnot { control, target } => {
                const PAULIS: [Label; 4] = [Label::I, Label::X, Label::Y, Label::Z];
                for lc in PAULIS {
                    for lt in PAULIS {
                        if lc == Label::I && lt == Label::I {
                            continue;
                        }
                        let mut inj = Vec::new();
                        if lc != Label::I {
                            inj.push(Injection {
                                at: idx + 1,
                                phys: control,
                                label: lc,
                            });
                        }
                        if lt != Label::I {
                            inj.push(Injection {
                                at: idx + 1,
                                phys: target,
                                label: lt,
                            });
                        }
                        record_fault(&prog, &inj, &[], Ratio::new(1, 15), Ratio::new(0, 1), &mut out);
                    }
                }
            }
            ResolvedOp::Meas { .. } => {
                record_fault(&prog, &[], &[idx], Ratio::new(0, 1), Ratio::new(1, 1), &mut out);
            }
        }
    }
    out
}

fn record_fault(
    prog: &Program,
    injections: &[Injection],
    flip_meas: &[usize],
    p_mass: Ratio<i64>,
    q_mass: Ratio<i64>,
    out: &mut ClassMasses,
) {
    let prop = propagate(prog, injections, &[], flip_meas);
    let (x, z, _) = final_data_chains(prog, &prop.final_labels);
    for kind in [CheckKind::Plaquette, CheckKind::Star] {
        let defects = oracle_defects(prog, &prop.check_flips, if kind == CheckKind::Plaquette { &x } else { &z }, kind);
        if defects.is_empty() {
            continue;
        }
        assert_eq!(
            defects.len(),
            2,
            "single fault produced {} {kind:?} defects",
            defects.len()
        );
        let class = classify_pair(prog.lattice.d(), defects[0], defects[1]);
        let nc = prog.lattice.n_checks();
        let u = defects[0].1 * nc + defects[0].0;
        let v = defects[1].1 * nc + defects[1].0;
        *out.p_mass.entry((kind, class)).or_default() += p_mass;
        *out.q_mass.entry((kind, class)).or_default() += q_mass;
        out.records.push(FaultRecord { kind, u, v, class });
    }
}

/// Defects of a noiseless propagation, with every outcome defined:
/// `(check, t)` pairs, sorted by time.
fn oracle_defects(
    prog: &Program,
    check_flips: &[(CheckKind, usize, usize)],
    chain: &[bool],
    kind: CheckKind,
) -> Vec<(usize, usize)> {
    let lat = &prog.lattice;
    let mut parity: HashMap<(usize, usize), bool> = HashMap::new();
    let mut toggle = |f: usize, t: usize| {
        *parity.entry((f, t)).or_default() ^= true;
    };
    for &(k, check, round) in check_flips {
        if k == kind {
            toggle(check, round);
            toggle(check, round + 1);
        }
    }
    let boundary = match kind {
        CheckKind::Plaquette => lat.plaquette_boundary(chain),
        CheckKind::Star => lat.star_boundary(chain),
    };
    for (f, _) in boundary.iter().enumerate().filter(|(_, &b)| b) {
        toggle(f, prog.rounds);
    }
    let mut defects: Vec<(usize, usize)> = parity
        .into_iter()
        .filter_map(|((f, t), odd)| odd.then_some((f, t)))
        .collect();
    defects.sort_unstable_by_key(|&(f, t)| (t, f));
    defects
}

/// Signed wrap-around displacement from `a` to `b` on a ring of size `d`.
fn wrap_delta(d: usize, a: usize, b: usize) -> isize {
    let delta = ((b + d - a) % d) as isize;
    if 2 * delta > d as isize {
        delta - d as isize
    } else {
        delta
    }
}

fn classify_pair(d: usize, a: (usize, usize), b: (usize, usize)) -> EdgeClass {
    let ((f1, t1), (f2, t2)) = (a, b);
    let (r1, c1) = (f1 / d, f1 % d);
    let (r2, c2) = (f2 / d, f2 % d);
    let dr = wrap_delta(d, r1, r2);
    let dc = wrap_delta(d, c1, c2);
    let dt = t2 - t1;
    match (dt, dr, dc) {
        (0, 1, 0) | (0, -1, 0) => EdgeClass::B,
        (0, 0, 1) | (0, 0, -1) => EdgeClass::D,
        (1, 0, 0) => EdgeClass::A,
        (1, 1, 0) => EdgeClass::C,
        (1, 0, 1) => EdgeClass::E,
        (1, 1, -1) => EdgeClass::F,
        other => panic!("defect pair {a:?}-{b:?} has unexpected displacement {other:?}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{run_sampled, MeasSink};
    use crate::noise::trial_rng;

    fn lat(d: usize) -> ToricLattice {
        ToricLattice::new(d)
    }

    fn params() -> NoiseParams {
        NoiseParams::new(0.003, 1.0, 1.0)
    }

    fn both_kinds() -> [CheckKind; 2] {
        [CheckKind::Plaquette, CheckKind::Star]
    }

    #[test]
    fn closed_form_masses_match_fault_enumeration() {
        let l = lat(3);
        let nc = l.n_checks() as i64;
        for scheme in Scheme::ALL {
            let masses = enumerate_single_fault_classes(&l, scheme, 5, 2);
            for kind in both_kinds() {
                for class in EdgeClass::STATIC {
                    let got_p = masses
                        .p_mass
                        .get(&(kind, class))
                        .copied()
                        .unwrap_or_default();
                    let want_p = Ratio::from_integer(nc) * class_p_coefficient(scheme, class);
                    assert_eq!(
                        got_p, want_p,
                        "{scheme:?} {kind:?} class {class} p-mass: got {got_p}, want {want_p}"
                    );
                    let got_q = masses
                        .q_mass
                        .get(&(kind, class))
                        .copied()
                        .unwrap_or_default();
                    let want_q = if class_includes_q(class) {
                        Ratio::from_integer(nc)
                    } else {
                        Ratio::from_integer(0)
                    };
                    assert_eq!(
                        got_q, want_q,
                        "{scheme:?} {kind:?} class {class} q-mass: got {got_q}, want {want_q}"
                    );
                }
            }
        }
    }

    #[test]
    fn quick_masses_are_cycle_parity_independent() {
        // The quick scheme's carriers alternate with period two; both cycle
        // parities must show identical class masses.
        let l = lat(3);
        let even = enumerate_single_fault_classes(&l, Scheme::Quick, 5, 2);
        let odd = enumerate_single_fault_classes(&l, Scheme::Quick, 5, 3);
        for kind in both_kinds() {
            for class in EdgeClass::STATIC {
                assert_eq!(
                    even.p_mass.get(&(kind, class)).copied().unwrap_or_default(),
                    odd.p_mass.get(&(kind, class)).copied().unwrap_or_default(),
                    "{kind:?} class {class}"
                );
            }
        }
    }

    #[test]
    fn every_fault_pair_is_a_graph_edge_of_the_same_class() {
        let l = lat(3);
        for scheme in Scheme::ALL {
            let masses = enumerate_single_fault_classes(&l, scheme, 5, 2);
            let graphs: HashMap<CheckKind, DecodingGraph> = both_kinds()
                .into_iter()
                .map(|k| (k, DecodingGraph::build(&l, scheme, 5, k, &params())))
                .collect();
            assert!(!masses.records.is_empty());
            for rec in &masses.records {
                let g = &graphs[&rec.kind];
                let e = g
                    .edge_between(rec.u, rec.v)
                    .unwrap_or_else(|| panic!("{scheme:?}: missing edge {}-{}", rec.u, rec.v));
                assert_eq!(
                    g.edges[e].class, rec.class,
                    "{scheme:?} {:?}: edge {}-{} class mismatch",
                    rec.kind, rec.u, rec.v
                );
            }
        }
    }

    #[test]
    fn graph_shape_and_edge_counts() {
        let l = lat(4);
        let g = DecodingGraph::build(&l, Scheme::Standard, 3, CheckKind::Plaquette, &params());
        assert_eq!(g.n_vertices(), 4 * 16);
        let count = |class: EdgeClass| g.edges.iter().filter(|e| e.class == class).count();
        assert_eq!(count(EdgeClass::B), 16 * 4);
        assert_eq!(count(EdgeClass::D), 16 * 4);
        assert_eq!(count(EdgeClass::A), 16 * 3);
        assert_eq!(count(EdgeClass::C), 16 * 3);
        assert_eq!(count(EdgeClass::E), 16 * 3);
        assert_eq!(count(EdgeClass::F), 16 * 3);
        assert_eq!(g.edges.len(), 16 * (2 * 4 + 4 * 3));
    }

    #[test]
    fn corrections_connect_their_endpoints() {
        let l = lat(5);
        for kind in both_kinds() {
            let g = DecodingGraph::build(&l, Scheme::FullLru, 4, kind, &params());
            for e in &g.edges {
                let mut chain = vec![false; l.n_data()];
                for &q in &e.correction {
                    chain[q] ^= true;
                }
                let boundary = match kind {
                    CheckKind::Plaquette => l.plaquette_boundary(&chain),
                    CheckKind::Star => l.star_boundary(&chain),
                };
                let (f1, _) = g.vertex_coords(e.u);
                let (f2, _) = g.vertex_coords(e.v);
                let mut want = vec![false; l.n_checks()];
                if f1 != f2 {
                    want[f1] = true;
                    want[f2] = true;
                }
                assert_eq!(boundary, want, "{kind:?} class {} edge", e.class);
            }
        }
    }

    #[test]
    fn weights_decrease_with_probability() {
        let p = params();
        for scheme in Scheme::ALL {
            let g = DecodingGraph::build(&lat(3), scheme, 2, CheckKind::Plaquette, &p);
            for e in &g.edges {
                assert!(e.prob > 0.0 && e.prob < 0.5);
                assert!(e.weight > 0.0);
                assert!((e.weight - (-e.prob.ln())).abs() < 1e-12);
            }
            let prob_a = class_probability(scheme, EdgeClass::A, &p);
            let prob_e = class_probability(scheme, EdgeClass::E, &p);
            assert!(prob_a > prob_e);
        }
    }

    #[test]
    fn dijkstra_matches_hand_counts_on_time_chains() {
        let l = lat(5);
        let g = DecodingGraph::build(&l, Scheme::Standard, 5, CheckKind::Plaquette, &params());
        let w_a = class_probability(Scheme::Standard, EdgeClass::A, &params());
        let w_a = -w_a.ln();
        let f = 7;
        let sp = dijkstra(&g, g.vertex(f, 0));
        // A purely time-like separation is cheapest along the time edges.
        assert!((sp.dist[g.vertex(f, 3)] - 3.0 * w_a).abs() < 1e-9);
        assert_eq!(sp.dist[g.vertex(f, 0)], 0.0);
        let path = sp.path_edges(&g, g.vertex(f, 3));
        assert_eq!(path.len(), 3);
        assert!(path.iter().all(|&e| g.edges[e].class == EdgeClass::A));
        // Symmetry and the triangle inequality on a few vertex pairs.
        let sp_back = dijkstra(&g, g.vertex(f, 3));
        assert!((sp_back.dist[g.vertex(f, 0)] - sp.dist[g.vertex(f, 3)]).abs() < 1e-9);
        let a = g.vertex(2, 1);
        let via = g.vertex(11, 2);
        let sp_a = dijkstra(&g, a);
        let sp_via = dijkstra(&g, via);
        for target in [g.vertex(17, 4), g.vertex(3, 0), g.vertex(24, 5)] {
            assert!(sp_a.dist[target] <= sp_a.dist[via] + sp_via.dist[target] + 1e-9);
        }
    }

    #[test]
    fn defect_frame_standard_rule() {
        let nc = 9;
        let rounds = 4;
        let mut outcomes = vec![Some(false); rounds * nc];
        // Check 4 reads 1 in rounds 2 and 3: defects at t = 2 and t = 4.
        outcomes[2 * nc + 4] = Some(true);
        outcomes[3 * nc + 4] = Some(true);
        let frame = DefectFrame::new(CheckKind::Plaquette, &outcomes, &[false; 9], rounds, nc);
        assert_eq!(frame.defects(), vec![2 * nc + 4, 4 * nc + 4]);
        // A mismatch that persists through the perfect layer leaves one
        // defect at its onset.
        let mut outcomes = vec![Some(false); rounds * nc];
        outcomes[3 * nc + 1] = Some(true);
        let mut perfect = vec![false; 9];
        perfect[1] = true;
        let frame = DefectFrame::new(CheckKind::Plaquette, &outcomes, &perfect, rounds, nc);
        assert_eq!(frame.defects(), vec![3 * nc + 1]);
    }

    #[test]
    fn defect_frame_masking_rules() {
        let nc = 9;
        let rounds = 4;
        let f = 5;
        let mut outcomes = vec![Some(false); rounds * nc];
        outcomes[nc + f] = None;
        outcomes[2 * nc + f] = None;
        outcomes[3 * nc + f] = Some(true);
        let mut perfect = vec![false; 9];
        perfect[f] = true;
        let frame = DefectFrame::new(CheckKind::Star, &outcomes, &perfect, rounds, nc);
        assert_eq!(frame.masked_outcomes(), vec![(f, 1), (f, 2)]);
        assert!(frame.is_defined(f, 0) && frame.is_defined(f, 3));
        assert!(!frame.is_defined(f, 1));
        // The 0 → 1 transition between defined rounds 0 and 3 sits right
        // after the last defined agreement.
        assert_eq!(frame.defects(), vec![nc + f]);
        assert_eq!(frame.flip_toggles(f, 1), (None, None));
        assert_eq!(
            frame.flip_toggles(f, 0),
            (Some(f), Some(nc + f)),
        );
        assert_eq!(
            frame.flip_toggles(f, 3),
            (Some(nc + f), Some(4 * nc + f)),
        );
        assert_eq!(
            frame.flip_toggles(f, 4),
            (Some(4 * nc + f), None),
        );
    }

    fn all_defined_frame(kind: CheckKind, rounds: usize, nc: usize) -> DefectFrame {
        DefectFrame::new(
            kind,
            &vec![Some(false); rounds * nc],
            &vec![false; nc],
            rounds,
            nc,
        )
    }

    #[test]
    fn conditional_without_heralds_is_the_static_graph() {
        let l = lat(3);
        let prog = Program::new(l, Scheme::Quick, 4);
        for kind in both_kinds() {
            let base = DecodingGraph::build(&l, Scheme::Quick, 4, kind, &params());
            let frame = all_defined_frame(kind, 4, l.n_checks());
            let cond = build_conditional(&base, &prog, &[], &frame);
            assert_eq!(base.edges, cond.edges);
        }
    }

    fn herald_for(prog: &Program, want: MeasSink) -> Herald {
        for (idx, op) in prog.ops.iter().enumerate() {
            if let ResolvedOp::Meas { phys, sink, .. } = *op {
                if sink == want {
                    return Herald {
                        op: idx,
                        phys,
                        sink,
                    };
                }
            }
        }
        panic!("no measurement with sink {want:?}");
    }

    #[test]
    fn candidate_probabilities_match_hand_derivations() {
        // Quick-scheme check readout: the measured phys was prepared in the
        // previous cycle and has since seen ten CNOTs, so n = 11 and the
        // earliest candidate carries 1/22 per Pauli component.
        let l = lat(3);
        let prog = Program::new(l, Scheme::Quick, 4);
        let herald = herald_for(
            &prog,
            MeasSink::Check {
                kind: CheckKind::Plaquette,
                check: 0,
                round: 2,
            },
        );
        let cands = herald_candidates(&prog, &herald);
        assert_eq!(cands.len(), 10);
        assert_eq!(cands[0].prob, Ratio::new(1, 22));
        assert_eq!(cands[9].prob, Ratio::new(10, 22));

        // A plain extraction ancilla: prep plus four CNOTs, n = 5; the
        // third CNOT has three earlier locations, hence 3/10.
        let prog = Program::new(l, Scheme::PartialLru, 4);
        let herald = herald_for(
            &prog,
            MeasSink::Check {
                kind: CheckKind::Plaquette,
                check: 4,
                round: 2,
            },
        );
        let cands = herald_candidates(&prog, &herald);
        assert_eq!(cands.len(), 4);
        assert_eq!(cands[2].prob, Ratio::new(3, 10));

        // A data qubit retired by its leakage-reduction unit: fresh since
        // the previous cycle's unit, ten CNOTs of history.
        let herald = herald_for(&prog, MeasSink::Lru { slot: 3, round: 2 });
        let cands = herald_candidates(&prog, &herald);
        assert_eq!(cands.len(), 10);
        assert_eq!(cands[0].prob, Ratio::new(1, 22));
    }

    #[test]
    fn masked_outcomes_free_their_time_edges() {
        let l = lat(3);
        let nc = l.n_checks();
        let prog = Program::new(l, Scheme::Standard, 4);
        let base = DecodingGraph::build(&l, Scheme::Standard, 4, CheckKind::Plaquette, &params());
        let mut outcomes = vec![Some(false); 4 * nc];
        outcomes[2 * nc + 7] = None;
        let frame = DefectFrame::new(CheckKind::Plaquette, &outcomes, &vec![false; nc], 4, nc);
        let cond = build_conditional(&base, &prog, &[], &frame);
        let e = cond
            .edge_between(cond.vertex(7, 2), cond.vertex(7, 3))
            .unwrap();
        assert_eq!(cond.edges[e].prob, 1.0);
        assert_eq!(cond.edges[e].weight, 0.0);
        let untouched = cond
            .edge_between(cond.vertex(7, 1), cond.vertex(7, 2))
            .unwrap();
        assert_eq!(cond.edges[untouched], base.edges[untouched]);
    }

    #[test]
    fn conditional_edges_respect_syndrome_consistency() {
        // Run a leaky sampled trial, reweight, and check that every edge the
        // heralds add or boost still carries a correction whose boundary is
        // exactly its endpoint pair — the property the decoder relies on.
        let l = lat(3);
        let rounds = 4;
        let prog = Program::new(l, Scheme::Quick, rounds);
        let p = NoiseParams::new(0.01, 8.0, 1.0);
        let mut rng = trial_rng(13, 5);
        let init = vec![Label::I; prog.n_phys];
        let mut heralded_trials = 0;
        for trial in 0..40 {
            let _ = trial;
            let sample = run_sampled(&prog, &p, true, &init, &mut rng);
            if sample.heralds.is_empty() {
                continue;
            }
            heralded_trials += 1;
            for kind in both_kinds() {
                let base = DecodingGraph::build(&l, Scheme::Quick, rounds, kind, &p);
                let frame =
                    DefectFrame::from_sample(kind, &sample, &vec![false; l.n_checks()], rounds, l.n_checks());
                let cond = build_conditional(&base, &prog, &sample.heralds, &frame);
                assert!(cond.edges.len() >= base.edges.len());
                for e in &cond.edges {
                    assert!(e.prob > 0.0 && e.prob <= 1.0);
                    assert!(e.weight >= 0.0);
                    if e.class != EdgeClass::Conditional {
                        continue;
                    }
                    let mut chain = vec![false; l.n_data()];
                    for &q in &e.correction {
                        chain[q] ^= true;
                    }
                    let boundary = match kind {
                        CheckKind::Plaquette => l.plaquette_boundary(&chain),
                        CheckKind::Star => l.star_boundary(&chain),
                    };
                    let (f1, _) = cond.vertex_coords(e.u);
                    let (f2, _) = cond.vertex_coords(e.v);
                    let mut want = vec![false; l.n_checks()];
                    if f1 != f2 {
                        want[f1] = true;
                        want[f2] = true;
                    }
                    assert_eq!(boundary, want);
                }
            }
        }
        assert!(heralded_trials > 0, "the leak rate should trigger heralds");
    }

    #[test]
    fn graph_dump_lists_every_edge() {
        let g = DecodingGraph::build(&lat(3), Scheme::Standard, 2, CheckKind::Star, &params());
        let dump = g.dump();
        assert_eq!(dump.lines().count(), g.edges.len());
        assert!(dump.lines().all(|l| l.split_whitespace().count() == 9));
    }
}
