//! Syndrome-extraction circuits for the four gate schemes, compiled to a
//! flat, fully resolved operation list.
//!
//! Logical positions are *slots*: data slot `q` (one per lattice edge,
//! `0..2d²`), plaquette-ancilla slot `2d² + c` and star-ancilla slot
//! `3d² + c`.  Physical qubits are *phys* ids; slots with a spare partner
//! (for leakage-reduction swaps) own the pair `{s, 4d² + s}`.  A carrier map
//! tracks which phys currently serves each slot; it evolves deterministically
//! (noise never affects it), so a whole run unrolls into a `Vec<ResolvedOp>`
//! with concrete phys operands that every executor — the noisy sampler, the
//! noiseless propagator used for fault enumeration and conditional
//! reweighting, and the leakage-occupancy dry run — consumes directly.
//!
//! Cycle layouts (one syndrome-extraction cycle):
//!
//! * **standard** — 6 steps: ancilla prep (data idle), four CNOT steps in
//!   `[U, L, R, D]` order, ancilla measurement (data idle).
//! * **partial-lru** — standard, plus a swap-based leakage-reduction unit on
//!   every data qubit at the end of the cycle.
//! * **full-lru** — standard, plus leakage-reduction units on every data
//!   qubit after each of its four CNOTs and on every ancilla after its first
//!   three CNOTs.
//! * **quick** — 7 steps: the `D` interaction is replaced by a two-CNOT
//!   sequence after which data and ancilla phys swap roles; the old data
//!   phys (now holding the accumulated syndrome) is measured.  Each phys is
//!   measured every second cycle, so leakage drains structurally.
//!
//! A leakage-reduction unit (LRU) on a slot is: prepare the spare phys in
//! `|0⟩`, swap it with the active phys via three CNOTs, measure the old phys
//! (outcome discarded, but a heralded-leakage readout is recorded), and
//! promote the spare to carrier.  Noiselessly this is an identity on the
//! slot's frame; a leaked carrier stays behind on the measured phys (the
//! CNOTs cannot transport leakage) while the outgoing state is replaced by a
//! depolarized computational one.

use crate::lattice::{CheckKind, ToricLattice};
use crate::noise::{ideal_cnot, Basis, Label, MeasOutcome, NoiseParams};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::Range;

/// Gate scheme used for syndrome extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Plain syndrome extraction, no leakage reduction.
    Standard,
    /// Leakage-reduction unit on each data qubit once per cycle.
    PartialLru,
    /// Leakage-reduction units after every CNOT (three per ancilla).
    FullLru,
    /// Swap-based extraction; every phys is measured every second cycle.
    Quick,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::Standard,
        Scheme::PartialLru,
        Scheme::FullLru,
        Scheme::Quick,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Standard => "standard",
            Scheme::PartialLru => "partial-lru",
            Scheme::FullLru => "full-lru",
            Scheme::Quick => "quick",
        }
    }

    /// Whether data slots (resp. ancilla slots) own a spare phys.
    fn spares(self) -> (bool, bool) {
        match self {
            Scheme::Standard | Scheme::Quick => (false, false),
            Scheme::PartialLru => (true, false),
            Scheme::FullLru => (true, true),
        }
    }

    /// Total number of physical qubits for lattice size `d`.
    pub fn n_phys(self, d: usize) -> usize {
        let (data, anc) = self.spares();
        4 * d * d + if data { 2 * d * d } else { 0 } + if anc { 2 * d * d } else { 0 }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(Scheme::Standard),
            "partial-lru" | "partial" => Ok(Scheme::PartialLru),
            "full-lru" | "full" => Ok(Scheme::FullLru),
            "quick" => Ok(Scheme::Quick),
            other => Err(format!(
                "unknown scheme '{other}' (expected standard, partial-lru, full-lru or quick)"
            )),
        }
    }
}

/// Where a measurement outcome goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeasSink {
    /// Syndrome bit of check `check` in round `round`.
    Check {
        kind: CheckKind,
        check: usize,
        round: usize,
    },
    /// Leakage-reduction readout on a slot; the bit is discarded but a
    /// heralded-leakage outcome is still informative.
    Lru { slot: usize, round: usize },
}

/// One fully resolved circuit operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResolvedOp {
    Prep { phys: usize, basis: Basis },
    Cnot { control: usize, target: usize },
    Idle { phys: usize },
    Meas { phys: usize, basis: Basis, sink: MeasSink },
}

/// A compiled multi-cycle syndrome-extraction run.
#[derive(Debug, Clone)]
pub struct Program {
    pub lattice: ToricLattice,
    pub scheme: Scheme,
    /// Number of noisy cycles.
    pub rounds: usize,
    pub n_phys: usize,
    pub ops: Vec<ResolvedOp>,
    /// `cycle_starts[c]` is the index of cycle `c`'s first op; a sentinel
    /// entry at the end equals `ops.len()`.
    pub cycle_starts: Vec<usize>,
    /// Carrier map (slot → phys) after the last cycle; data slots `q` give
    /// the phys holding data qubit `q` for the final readout.
    pub final_carrier: Vec<usize>,
}

/// Number of slots (`4d²`): data `0..2d²`, plaquette ancillas `2d²..3d²`,
/// star ancillas `3d²..4d²`.
pub fn n_slots(d: usize) -> usize {
    4 * d * d
}

pub fn plaq_slot(d: usize, check: usize) -> usize {
    2 * d * d + check
}

pub fn star_slot(d: usize, check: usize) -> usize {
    3 * d * d + check
}

struct Builder {
    lat: ToricLattice,
    scheme: Scheme,
    ops: Vec<ResolvedOp>,
    carrier: Vec<usize>,
    cycle_starts: Vec<usize>,
    round: usize,
}

impl Builder {
    fn new(lat: ToricLattice, scheme: Scheme) -> Builder {
        Builder {
            lat,
            scheme,
            ops: Vec::new(),
            carrier: (0..n_slots(lat.d())).collect(),
            cycle_starts: Vec::new(),
            round: 0,
        }
    }

    fn active(&self, slot: usize) -> usize {
        self.carrier[slot]
    }

    /// The off-duty phys of a slot's pair.
    fn spare(&self, slot: usize) -> usize {
        let partner = n_slots(self.lat.d()) + slot;
        slot + partner - self.carrier[slot]
    }

    fn anc_slot(&self, kind: CheckKind, check: usize) -> usize {
        match kind {
            CheckKind::Plaquette => plaq_slot(self.lat.d(), check),
            CheckKind::Star => star_slot(self.lat.d(), check),
        }
    }

    fn anc_basis(kind: CheckKind) -> Basis {
        match kind {
            CheckKind::Plaquette => Basis::Z,
            CheckKind::Star => Basis::X,
        }
    }

    fn each_check(&self) -> impl Iterator<Item = (CheckKind, usize)> {
        let nc = self.lat.n_checks();
        (0..nc)
            .map(|c| (CheckKind::Plaquette, c))
            .chain((0..nc).map(|c| (CheckKind::Star, c)))
    }

    fn prep_step(&mut self) {
        for (kind, c) in self.each_check().collect::<Vec<_>>() {
            self.ops.push(ResolvedOp::Prep {
                phys: self.active(self.anc_slot(kind, c)),
                basis: Self::anc_basis(kind),
            });
        }
        self.data_idles();
    }

    fn data_idles(&mut self) {
        for q in 0..self.lat.n_data() {
            self.ops.push(ResolvedOp::Idle {
                phys: self.active(q),
            });
        }
    }

    /// One standard CNOT step: plaquettes copy data onto the ancilla,
    /// stars copy the ancilla onto data.
    fn cnot_step(&mut self, step: usize) {
        for (kind, c) in self.each_check().collect::<Vec<_>>() {
            let data = self.active(self.lat.support(kind, c)[step - 1]);
            let anc = self.active(self.anc_slot(kind, c));
            let (control, target) = match kind {
                CheckKind::Plaquette => (data, anc),
                CheckKind::Star => (anc, data),
            };
            self.ops.push(ResolvedOp::Cnot { control, target });
        }
    }

    fn meas_step(&mut self) {
        for (kind, c) in self.each_check().collect::<Vec<_>>() {
            self.ops.push(ResolvedOp::Meas {
                phys: self.active(self.anc_slot(kind, c)),
                basis: Self::anc_basis(kind),
                sink: MeasSink::Check {
                    kind,
                    check: c,
                    round: self.round,
                },
            });
        }
        self.data_idles();
    }

    /// Swap-based leakage-reduction unit on one slot.
    fn lru(&mut self, slot: usize) {
        let old = self.active(slot);
        let fresh = self.spare(slot);
        self.ops.push(ResolvedOp::Prep {
            phys: fresh,
            basis: Basis::Z,
        });
        self.ops.push(ResolvedOp::Cnot {
            control: old,
            target: fresh,
        });
        self.ops.push(ResolvedOp::Cnot {
            control: fresh,
            target: old,
        });
        self.ops.push(ResolvedOp::Cnot {
            control: old,
            target: fresh,
        });
        self.ops.push(ResolvedOp::Meas {
            phys: old,
            basis: Basis::Z,
            sink: MeasSink::Lru {
                slot,
                round: self.round,
            },
        });
        self.carrier[slot] = fresh;
    }

    fn data_lrus(&mut self) {
        for q in 0..self.lat.n_data() {
            self.lru(q);
        }
    }

    fn anc_lrus(&mut self) {
        for (kind, c) in self.each_check().collect::<Vec<_>>() {
            self.lru(self.anc_slot(kind, c));
        }
    }

    /// The quick scheme's replacement for the `D` step: two CNOTs after
    /// which the data and ancilla phys exchange roles, followed by
    /// measurement of the old data phys (now in the ancilla slot).
    fn quick_tail(&mut self) {
        let pairs: Vec<(CheckKind, usize, usize, usize)> = self
            .each_check()
            .map(|(kind, c)| {
                let d_slot = self.lat.support(kind, c)[3];
                (kind, c, self.anc_slot(kind, c), d_slot)
            })
            .collect();
        // Step 4.
        for &(kind, _, anc_slot, d_slot) in &pairs {
            let (anc, data) = (self.active(anc_slot), self.active(d_slot));
            let (control, target) = match kind {
                CheckKind::Plaquette => (anc, data),
                CheckKind::Star => (data, anc),
            };
            self.ops.push(ResolvedOp::Cnot { control, target });
        }
        // Step 5.
        for &(kind, _, anc_slot, d_slot) in &pairs {
            let (anc, data) = (self.active(anc_slot), self.active(d_slot));
            let (control, target) = match kind {
                CheckKind::Plaquette => (data, anc),
                CheckKind::Star => (anc, data),
            };
            self.ops.push(ResolvedOp::Cnot { control, target });
        }
        // Role exchange: the old data phys now holds the syndrome.
        for &(_, _, anc_slot, d_slot) in &pairs {
            self.carrier.swap(anc_slot, d_slot);
        }
        self.meas_step();
    }

    fn cycle(&mut self) {
        self.cycle_starts.push(self.ops.len());
        self.prep_step();
        match self.scheme {
            Scheme::Standard => {
                for step in 1..=4 {
                    self.cnot_step(step);
                }
                self.meas_step();
            }
            Scheme::PartialLru => {
                for step in 1..=4 {
                    self.cnot_step(step);
                }
                self.meas_step();
                self.data_lrus();
            }
            Scheme::FullLru => {
                for step in 1..=4 {
                    self.cnot_step(step);
                    self.data_lrus();
                    if step < 4 {
                        self.anc_lrus();
                    }
                }
                self.meas_step();
            }
            Scheme::Quick => {
                for step in 1..=3 {
                    self.cnot_step(step);
                }
                self.quick_tail();
            }
        }
        self.round += 1;
    }
}

impl Program {
    /// Compile `rounds` noisy cycles of the given scheme.
    pub fn new(lattice: ToricLattice, scheme: Scheme, rounds: usize) -> Program {
        assert!(rounds >= 1, "at least one noisy cycle is required");
        let mut b = Builder::new(lattice, scheme);
        for _ in 0..rounds {
            b.cycle();
        }
        b.cycle_starts.push(b.ops.len());
        let n_phys = scheme.n_phys(lattice.d());
        debug_assert!(b
            .ops
            .iter()
            .all(|op| op_phys(op).iter().all(|&p| p < n_phys)));
        Program {
            lattice,
            scheme,
            rounds,
            n_phys,
            ops: b.ops,
            cycle_starts: b.cycle_starts,
            final_carrier: b.carrier,
        }
    }

    /// Op-index range of one cycle.
    pub fn cycle_range(&self, cycle: usize) -> Range<usize> {
        self.cycle_starts[cycle]..self.cycle_starts[cycle + 1]
    }

    /// Gate/location counts over an op range.
    pub fn op_counts_in(&self, range: Range<usize>) -> OpCounts {
        let mut c = OpCounts::default();
        for op in &self.ops[range] {
            match op {
                ResolvedOp::Prep { .. } => c.preps += 1,
                ResolvedOp::Cnot { .. } => c.cnots += 1,
                ResolvedOp::Idle { .. } => c.idles += 1,
                ResolvedOp::Meas { .. } => c.meas += 1,
            }
        }
        c
    }

    /// Gate history of a phys, scanning backwards from op index `before`
    /// to its most recent preparation.  `prep == None` means the qubit has
    /// been alive since the start of the run (its initialization then counts
    /// as the first location of its history).
    pub fn gate_history(&self, phys: usize, before: usize) -> GateHistory {
        let mut cnots = Vec::new();
        let mut prep = None;
        for idx in (0..before).rev() {
            match self.ops[idx] {
                ResolvedOp::Prep { phys: p, .. } if p == phys => {
                    prep = Some(idx);
                    break;
                }
                ResolvedOp::Cnot { control, target } if control == phys => {
                    cnots.push(CnotEvent {
                        op: idx,
                        partner: target,
                    });
                }
                ResolvedOp::Cnot { control, target } if target == phys => {
                    cnots.push(CnotEvent {
                        op: idx,
                        partner: control,
                    });
                }
                _ => {}
            }
        }
        cnots.reverse();
        GateHistory { prep, cnots }
    }

    /// Human-readable schedule listing, grouped by cycle.
    pub fn dump(&self) -> String {
        use fmt::Write;
        let mut out = String::new();
        for cycle in 0..self.rounds {
            writeln!(out, "cycle {cycle}:").unwrap();
            for idx in self.cycle_range(cycle) {
                let line = match self.ops[idx] {
                    ResolvedOp::Prep { phys, basis } => {
                        format!("prep  {basis:?} on phys {phys}")
                    }
                    ResolvedOp::Cnot { control, target } => {
                        format!("cnot  {control} -> {target}")
                    }
                    ResolvedOp::Idle { phys } => format!("idle  phys {phys}"),
                    ResolvedOp::Meas { phys, basis, sink } => {
                        format!("meas  {basis:?} on phys {phys} ({sink:?})")
                    }
                };
                writeln!(out, "  [{idx:5}] {line}").unwrap();
            }
        }
        out
    }
}

fn op_phys(op: &ResolvedOp) -> Vec<usize> {
    match *op {
        ResolvedOp::Prep { phys, .. } | ResolvedOp::Idle { phys } | ResolvedOp::Meas { phys, .. } => {
            vec![phys]
        }
        ResolvedOp::Cnot { control, target } => vec![control, target],
    }
}

/// Location counts (one entry per op kind).
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct OpCounts {
    pub preps: usize,
    pub cnots: usize,
    pub idles: usize,
    pub meas: usize,
}

impl OpCounts {
    /// Gates in the counting convention used for overhead comparisons:
    /// preparations and CNOTs (idles and measurements are not gates).
    pub fn gates(&self) -> usize {
        self.preps + self.cnots
    }
}

/// Gate history of one phys since its last preparation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateHistory {
    pub prep: Option<usize>,
    pub cnots: Vec<CnotEvent>,
}

impl GateHistory {
    /// Number of leakage-capable locations (preparation/initialization plus
    /// CNOTs; idles and measurements cannot leak).
    pub fn n_locations(&self) -> usize {
        1 + self.cnots.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CnotEvent {
    pub op: usize,
    /// The phys on the other side of the CNOT.
    pub partner: usize,
}

/// A heralded-leakage measurement outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Herald {
    pub op: usize,
    pub phys: usize,
    pub sink: MeasSink,
}

/// Everything a noisy run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutput {
    /// Plaquette syndrome bits, indexed `round * d² + check`; `None` marks a
    /// heralded-leakage (undefined) outcome.
    pub plaq: Vec<Option<bool>>,
    /// Star syndrome bits, same indexing.
    pub star: Vec<Option<bool>>,
    /// All heralded-leakage events (check and LRU measurements alike).
    pub heralds: Vec<Herald>,
    /// Labels of every phys after the last cycle.
    pub final_labels: Vec<Label>,
}

impl SampleOutput {
    pub fn outcome(&self, kind: CheckKind, check: usize, round: usize, n_checks: usize) -> Option<bool> {
        match kind {
            CheckKind::Plaquette => self.plaq[round * n_checks + check],
            CheckKind::Star => self.star[round * n_checks + check],
        }
    }
}

fn two_mut(labels: &mut [Label], a: usize, b: usize) -> (&mut Label, &mut Label) {
    assert_ne!(a, b, "CNOT operands must differ");
    if a < b {
        let (left, right) = labels.split_at_mut(b);
        (&mut left[a], &mut right[0])
    } else {
        let (left, right) = labels.split_at_mut(a);
        (&mut right[0], &mut left[b])
    }
}

/// Execute a program with noise, starting from the given phys labels.
pub fn run_sampled(
    prog: &Program,
    params: &NoiseParams,
    three_outcome: bool,
    init: &[Label],
    rng: &mut impl Rng,
) -> SampleOutput {
    assert_eq!(init.len(), prog.n_phys);
    let nc = prog.lattice.n_checks();
    let mut labels = init.to_vec();
    let mut plaq = vec![None; prog.rounds * nc];
    let mut star = vec![None; prog.rounds * nc];
    let mut heralds = Vec::new();
    for (idx, op) in prog.ops.iter().enumerate() {
        match *op {
            ResolvedOp::Prep { phys, basis } => {
                labels[phys] = params.prepare(basis, rng);
            }
            ResolvedOp::Idle { phys } => {
                params.idle(&mut labels[phys], rng);
            }
            ResolvedOp::Cnot { control, target } => {
                let (c, t) = two_mut(&mut labels, control, target);
                params.cnot(c, t, rng);
            }
            ResolvedOp::Meas { phys, basis, sink } => {
                match params.measure(labels[phys], basis, three_outcome, rng) {
                    MeasOutcome::Leaked => heralds.push(Herald { op: idx, phys, sink }),
                    MeasOutcome::Bit(bit) => {
                        if let MeasSink::Check { kind, check, round } = sink {
                            let cell = match kind {
                                CheckKind::Plaquette => &mut plaq[round * nc + check],
                                CheckKind::Star => &mut star[round * nc + check],
                            };
                            *cell = Some(bit);
                        }
                    }
                }
            }
        }
    }
    SampleOutput {
        plaq,
        star,
        heralds,
        final_labels: labels,
    }
}

/// A Pauli inserted during noiseless propagation, applied just before
/// executing op index `at` (so "after op `i`" is `at = i + 1`).
#[derive(Debug, Clone, Copy)]
pub struct Injection {
    pub at: usize,
    pub phys: usize,
    pub label: Label,
}

/// An op-index span during which a phys behaves as leaked: every gate
/// touching it acts as identity and its measurements are uninformative.
#[derive(Debug, Clone, Copy)]
pub struct FrozenSpan {
    pub phys: usize,
    pub from: usize,
    pub until: usize,
}

impl FrozenSpan {
    fn covers(&self, phys: usize, idx: usize) -> bool {
        self.phys == phys && (self.from..self.until).contains(&idx)
    }
}

/// Result of noiseless propagation.
#[derive(Debug, Clone)]
pub struct Propagated {
    /// Syndrome outcomes that read `1` (all ideal outcomes are `0`).
    pub check_flips: Vec<(CheckKind, usize, usize)>,
    /// Frame of every phys after the last op.
    pub final_labels: Vec<Label>,
}

/// Propagate injected Paulis through the ideal circuit.
///
/// `flip_meas` lists measurement ops whose outcome is toggled (used to
/// enumerate readout faults).  Frozen spans model a leaked participant.
pub fn propagate(
    prog: &Program,
    injections: &[Injection],
    frozen: &[FrozenSpan],
    flip_meas: &[usize],
) -> Propagated {
    let mut labels = vec![Label::I; prog.n_phys];
    let mut check_flips = Vec::new();
    for (idx, op) in prog.ops.iter().enumerate() {
        for inj in injections.iter().filter(|inj| inj.at == idx) {
            labels[inj.phys].apply_pauli(inj.label.x(), inj.label.z());
        }
        let is_frozen = |phys: usize| frozen.iter().any(|f| f.covers(phys, idx));
        match *op {
            ResolvedOp::Prep { phys, .. } => {
                debug_assert!(!is_frozen(phys), "a frozen phys cannot be re-prepared");
                labels[phys] = Label::I;
            }
            ResolvedOp::Idle { .. } => {}
            ResolvedOp::Cnot { control, target } => {
                if !is_frozen(control) && !is_frozen(target) {
                    let (c, t) = two_mut(&mut labels, control, target);
                    ideal_cnot(c, t);
                }
            }
            ResolvedOp::Meas { phys, basis, sink } => {
                if is_frozen(phys) {
                    continue;
                }
                let mut bit = match basis {
                    Basis::Z => labels[phys].x(),
                    Basis::X => labels[phys].z(),
                };
                if flip_meas.contains(&idx) {
                    bit = !bit;
                }
                if bit {
                    if let MeasSink::Check { kind, check, round } = sink {
                        check_flips.push((kind, check, round));
                    }
                }
            }
        }
    }
    for inj in injections.iter().filter(|inj| inj.at == prog.ops.len()) {
        labels[inj.phys].apply_pauli(inj.label.x(), inj.label.z());
    }
    Propagated {
        check_flips,
        final_labels: labels,
    }
}

/// Extract the data-qubit error chains at the end of a run.
///
/// Returns `(x_chain, z_chain, leaked)` indexed by data qubit id.
pub fn final_data_chains(prog: &Program, final_labels: &[Label]) -> (Vec<bool>, Vec<bool>, Vec<bool>) {
    let n = prog.lattice.n_data();
    let mut x = vec![false; n];
    let mut z = vec![false; n];
    let mut leaked = vec![false; n];
    for q in 0..n {
        let l = final_labels[prog.final_carrier[q]];
        x[q] = l.x();
        z[q] = l.z();
        leaked[q] = l.leaked();
    }
    (x, z, leaked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::trial_rng;

    fn lat(d: usize) -> ToricLattice {
        ToricLattice::new(d)
    }

    #[test]
    fn op_counts_per_cycle() {
        let d = 3;
        let dd = d * d;
        for (scheme, preps, cnots, idles, meas) in [
            (Scheme::Standard, 2 * dd, 8 * dd, 4 * dd, 2 * dd),
            (Scheme::Quick, 2 * dd, 10 * dd, 4 * dd, 2 * dd),
            (Scheme::PartialLru, 4 * dd, 14 * dd, 4 * dd, 4 * dd),
            (Scheme::FullLru, 16 * dd, 50 * dd, 4 * dd, 16 * dd),
        ] {
            let prog = Program::new(lat(d), scheme, 3);
            for cycle in 0..3 {
                let c = prog.op_counts_in(prog.cycle_range(cycle));
                assert_eq!(
                    c,
                    OpCounts {
                        preps,
                        cnots,
                        idles,
                        meas
                    },
                    "{scheme} cycle {cycle}"
                );
            }
        }
    }

    #[test]
    fn gate_overhead_per_protected_qubit() {
        // Counting preparations + CNOTs: the quick scheme adds one gate per
        // check, the partial scheme four per data qubit, the full scheme four
        // LRUs per data qubit and three per ancilla (four gates each).
        let d = 3;
        let dd = d * d;
        let gates = |s: Scheme| {
            let prog = Program::new(lat(d), s, 1);
            prog.op_counts_in(prog.cycle_range(0)).gates()
        };
        let base = gates(Scheme::Standard);
        assert_eq!(base, 10 * dd);
        assert_eq!(gates(Scheme::Quick) - base, 2 * dd); // 1 per check
        assert_eq!(gates(Scheme::PartialLru) - base, 4 * 2 * dd); // 4 per data qubit
        assert_eq!(
            gates(Scheme::FullLru) - base,
            16 * 2 * dd + 12 * 2 * dd // 16 per data qubit, 12 per ancilla
        );
    }

    #[test]
    fn lru_units_per_slot() {
        let d = 3;
        for (scheme, data_lrus, anc_lrus) in [
            (Scheme::Standard, 0usize, 0usize),
            (Scheme::PartialLru, 1, 0),
            (Scheme::FullLru, 4, 3),
            (Scheme::Quick, 0, 0),
        ] {
            let prog = Program::new(lat(d), scheme, 2);
            let mut per_slot = vec![0usize; n_slots(d)];
            for idx in prog.cycle_range(1) {
                if let ResolvedOp::Meas {
                    sink: MeasSink::Lru { slot, .. },
                    ..
                } = prog.ops[idx]
                {
                    per_slot[slot] += 1;
                }
            }
            for q in 0..prog.lattice.n_data() {
                assert_eq!(per_slot[q], data_lrus, "{scheme} data slot {q}");
            }
            for s in prog.lattice.n_data()..n_slots(d) {
                assert_eq!(per_slot[s], anc_lrus, "{scheme} ancilla slot {s}");
            }
        }
    }

    #[test]
    fn noiseless_run_is_silent() {
        let params = NoiseParams::depolarizing(0.0);
        for scheme in Scheme::ALL {
            let prog = Program::new(lat(3), scheme, 3);
            let init = vec![Label::I; prog.n_phys];
            let out = run_sampled(&prog, &params, true, &init, &mut trial_rng(1, 0));
            assert!(out.plaq.iter().all(|o| *o == Some(false)), "{scheme}");
            assert!(out.star.iter().all(|o| *o == Some(false)), "{scheme}");
            assert!(out.heralds.is_empty());
            assert!(out.final_labels.iter().all(|l| *l == Label::I));
        }
    }

    #[test]
    fn extraction_is_transparent_and_reads_the_frame() {
        // With a noiseless circuit, an arbitrary initial data frame must be
        // reported faithfully by every round of every scheme and left intact,
        // including across the quick scheme's role swaps and the LRU swaps.
        let params = NoiseParams::depolarizing(0.0);
        let l = lat(3);
        let mut rng = trial_rng(5, 0);
        let frames: Vec<Label> = (0..l.n_data())
            .map(|_| crate::noise::uniform_pauli(&mut rng))
            .collect();
        let x_chain: Vec<bool> = frames.iter().map(|f| f.x()).collect();
        let z_chain: Vec<bool> = frames.iter().map(|f| f.z()).collect();
        let plaq_syn = l.plaquette_boundary(&x_chain);
        let star_syn = l.star_boundary(&z_chain);
        for scheme in Scheme::ALL {
            let prog = Program::new(l, scheme, 4);
            let mut init = vec![Label::I; prog.n_phys];
            init[..l.n_data()].copy_from_slice(&frames);
            let out = run_sampled(&prog, &params, false, &init, &mut trial_rng(2, 0));
            for round in 0..prog.rounds {
                for c in 0..l.n_checks() {
                    assert_eq!(
                        out.outcome(CheckKind::Plaquette, c, round, l.n_checks()),
                        Some(plaq_syn[c]),
                        "{scheme} plaquette {c} round {round}"
                    );
                    assert_eq!(
                        out.outcome(CheckKind::Star, c, round, l.n_checks()),
                        Some(star_syn[c]),
                        "{scheme} star {c} round {round}"
                    );
                }
            }
            let (x_out, z_out, leaked) = final_data_chains(&prog, &out.final_labels);
            assert_eq!(x_out, x_chain, "{scheme} X frame preserved");
            assert_eq!(z_out, z_chain, "{scheme} Z frame preserved");
            assert!(leaked.iter().all(|&b| !b));
        }
    }

    #[test]
    fn quick_carriers_alternate_with_period_two() {
        let d = 3;
        let one = Program::new(lat(d), Scheme::Quick, 1);
        let two = Program::new(lat(d), Scheme::Quick, 2);
        let identity: Vec<usize> = (0..n_slots(d)).collect();
        assert_ne!(one.final_carrier, identity);
        assert_eq!(two.final_carrier, identity);
        // The two cycles measure disjoint phys sets that together cover
        // every physical qubit.
        let measured = |prog: &Program, cycle: usize| -> std::collections::HashSet<usize> {
            prog.cycle_range(cycle)
                .filter_map(|i| match prog.ops[i] {
                    ResolvedOp::Meas { phys, .. } => Some(phys),
                    _ => None,
                })
                .collect()
        };
        let m0 = measured(&two, 0);
        let m1 = measured(&two, 1);
        assert!(m0.is_disjoint(&m1));
        assert_eq!(m0.len() + m1.len(), two.n_phys);
    }

    #[test]
    fn other_schemes_keep_data_carriers_in_place() {
        let d = 3;
        for scheme in [Scheme::Standard, Scheme::PartialLru, Scheme::FullLru] {
            let prog = Program::new(lat(d), scheme, 3);
            for q in 0..prog.lattice.n_data() {
                let carrier = prog.final_carrier[q];
                assert!(
                    carrier == q || carrier == n_slots(d) + q,
                    "{scheme} slot {q} carried by {carrier}"
                );
            }
        }
    }

    #[test]
    fn propagated_data_error_flips_its_plaquettes_every_round() {
        let l = lat(3);
        let prog = Program::new(l, Scheme::Standard, 3);
        let q = l.h(1, 2);
        let out = propagate(
            &prog,
            &[Injection {
                at: 0,
                phys: q,
                label: Label::X,
            }],
            &[],
            &[],
        );
        let mut expect = Vec::new();
        for round in 0..3 {
            for p in l.plaquettes_of(q) {
                expect.push((CheckKind::Plaquette, p, round));
            }
        }
        let mut got = out.check_flips.clone();
        got.sort_by_key(|&(k, c, r)| (r, c, k == CheckKind::Star));
        expect.sort_by_key(|&(k, c, r)| (r, c, k == CheckKind::Star));
        assert_eq!(got, expect);
        assert_eq!(out.final_labels[q], Label::X);
    }

    #[test]
    fn leaked_data_is_heralded_once_by_lru_and_quick() {
        // A leaked data qubit: never detected under the standard scheme,
        // heralded exactly once (then replaced) under partial-lru and quick.
        let params = NoiseParams::depolarizing(0.0);
        let l = lat(3);
        let q = l.v(0, 1);
        for (scheme, expect_heralds) in [
            (Scheme::Standard, 0usize),
            (Scheme::PartialLru, 1),
            (Scheme::Quick, 1),
        ] {
            let prog = Program::new(l, scheme, 4);
            let mut init = vec![Label::I; prog.n_phys];
            init[q].leak();
            let out = run_sampled(&prog, &params, true, &init, &mut trial_rng(9, 0));
            let lru_heralds = out.heralds.len();
            assert_eq!(lru_heralds, expect_heralds, "{scheme}");
            let (_, _, leaked) = final_data_chains(&prog, &out.final_labels);
            if scheme == Scheme::Standard {
                assert!(leaked[q], "undetected leakage persists");
            } else {
                assert!(leaked.iter().all(|&b| !b), "{scheme} drained the leak");
            }
        }
    }

    #[test]
    fn gate_histories_count_leak_capable_locations() {
        let d = 3;
        // Standard ancilla: prep + 4 CNOTs.
        let prog = Program::new(lat(d), Scheme::Standard, 2);
        let meas_of = |prog: &Program, cycle: usize, want: &dyn Fn(&MeasSink) -> bool| {
            prog.cycle_range(cycle)
                .find_map(|i| match prog.ops[i] {
                    ResolvedOp::Meas { phys, sink, .. } if want(&sink) => Some((i, phys)),
                    _ => None,
                })
                .unwrap()
        };
        let (i, phys) = meas_of(&prog, 1, &|s| {
            matches!(s, MeasSink::Check { kind: CheckKind::Plaquette, check: 0, .. })
        });
        let h = prog.gate_history(phys, i);
        assert!(h.prep.is_some());
        assert_eq!(h.cnots.len(), 4);
        assert_eq!(h.n_locations(), 5);

        // Quick: a phys measured in cycle 1 was prepared in cycle 0 and saw
        // ten CNOTs (five as ancilla, five as data).
        let prog = Program::new(lat(d), Scheme::Quick, 2);
        let (i, phys) = meas_of(&prog, 1, &|s| matches!(s, MeasSink::Check { .. }));
        let h = prog.gate_history(phys, i);
        assert!(h.prep.is_some());
        assert_eq!(h.cnots.len(), 10);
        assert_eq!(h.n_locations(), 11);

        // Partial-lru: an LRU measurement in cycle 1 reads the phys promoted
        // in cycle 0's LRU.  Its history is the prep, the three swap CNOTs of
        // that LRU, four extraction CNOTs in cycle 1, and the three swap
        // CNOTs of its own LRU — prep + 10 CNOTs.
        let prog = Program::new(lat(d), Scheme::PartialLru, 2);
        let (i, phys) = meas_of(&prog, 1, &|s| matches!(s, MeasSink::Lru { slot: 0, .. }));
        let h = prog.gate_history(phys, i);
        assert!(h.prep.is_some());
        assert_eq!(h.cnots.len(), 3 + 4 + 3);
        assert_eq!(h.n_locations(), 11);

        // Standard data qubits are never prepared: history covers the whole
        // run and the window start stands in for the initialization.
        let prog = Program::new(lat(d), Scheme::Standard, 3);
        let h = prog.gate_history(0, prog.ops.len());
        assert_eq!(h.prep, None);
        assert_eq!(h.cnots.len(), 12);
    }

    #[test]
    fn sampling_is_deterministic_per_stream() {
        let prog = Program::new(lat(3), Scheme::Quick, 3);
        let params = NoiseParams::new(0.01, 1.0, 1.0);
        let init = vec![Label::I; prog.n_phys];
        let a = run_sampled(&prog, &params, true, &init, &mut trial_rng(123, 7));
        let b = run_sampled(&prog, &params, true, &init, &mut trial_rng(123, 7));
        let c = run_sampled(&prog, &params, true, &init, &mut trial_rng(123, 8));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn dump_lists_every_op() {
        let prog = Program::new(lat(2), Scheme::Standard, 1);
        let text = prog.dump();
        assert_eq!(text.matches("cnot").count(), 8 * 4);
        assert!(text.contains("cycle 0:"));
    }
}
