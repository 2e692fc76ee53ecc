//! Full decoding pipeline for one sampled syndrome history.
//!
//! A trial produces `rounds` noisy syndrome measurement records plus the
//! final data-qubit error labels.  Decoding appends one noiseless
//! ("perfect") syndrome evaluation of the final data state, extracts
//! defects from the combined record, pairs them up with minimum-weight
//! perfect matching on the decoding graph, applies the matched edge
//! corrections, and judges success by the homology class of the residual
//! error chain.
//!
//! Two decoders are provided:
//!
//! * [`DecoderKind::Standard`]: matching on the static decoding graph,
//!   driven by two-outcome measurements.
//! * [`DecoderKind::Heralded`]: three-outcome measurements; heralded
//!   leakage events mask their own outcome's time-like edges and add the
//!   conditionally re-weighted edges for the possible depolarized partners
//!   before matching.

use crate::circuits::{final_data_chains, Program, SampleOutput, Scheme};
use crate::graph::{build_conditional, dijkstra, DecodingGraph, DefectFrame, ShortestPaths};
use crate::lattice::{CheckKind, ToricLattice};
use crate::matching::min_weight_perfect_matching;
use crate::noise::{uniform_pauli, Label, NoiseParams};
use rand::Rng;

/// Which decoding strategy interprets the syndrome record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderKind {
    /// Static decoding graph; leaked measurements read out as an ordinary
    /// bit (two-outcome readout).
    Standard,
    /// Heralded-leakage aware: masked outcomes free their time-like edges
    /// and heralds contribute conditional edges (three-outcome readout).
    Heralded,
}

impl DecoderKind {
    /// The readout model this decoder requires from the sampler.
    pub fn three_outcome(self) -> bool {
        matches!(self, DecoderKind::Heralded)
    }
}

/// Verdict for one decoded trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeOutcome {
    /// The residual X-type chain is homologically nontrivial (a logical X
    /// error on at least one of the two encoded qubits).
    pub x_fail: bool,
    /// The residual Z-type chain is homologically nontrivial.
    pub z_fail: bool,
    /// Number of leakage heralds in the record (zero for two-outcome runs).
    pub n_heralds: usize,
    /// Defect counts on the plaquette and star graphs.
    pub n_defects_x: usize,
    pub n_defects_z: usize,
}

impl DecodeOutcome {
    pub fn any_fail(&self) -> bool {
        self.x_fail || self.z_fail
    }
}

/// The noiseless final readout appended after the last noisy cycle.
///
/// Leaked data qubits are replaced by a uniformly random Pauli (the
/// depolarized state a lost qubit presents to an ideal measurement) before
/// the check operators are evaluated.
#[derive(Debug, Clone)]
pub struct PerfectRound {
    pub x_chain: Vec<bool>,
    pub z_chain: Vec<bool>,
    pub plaq: Vec<bool>,
    pub star: Vec<bool>,
}

pub fn perfect_round(prog: &Program, final_labels: &[Label], rng: &mut impl Rng) -> PerfectRound {
    let (mut x, mut z, leaked) = final_data_chains(prog, final_labels);
    for q in 0..x.len() {
        if leaked[q] {
            let sub = uniform_pauli(rng);
            x[q] = sub.x();
            z[q] = sub.z();
        }
    }
    let lat = &prog.lattice;
    let plaq = lat.plaquette_boundary(&x);
    let star = lat.star_boundary(&z);
    PerfectRound {
        x_chain: x,
        z_chain: z,
        plaq,
        star,
    }
}

/// Pair up the defects with minimum-weight perfect matching and return the
/// data-qubit correction chain implied by the matched paths.
///
/// Distances and paths come from one Dijkstra run per defect; the matching
/// itself runs on the complete graph over the defects.
pub fn match_defects(graph: &DecodingGraph, defects: &[usize]) -> Vec<bool> {
    let n_data = 2 * graph.d * graph.d;
    let mut correction = vec![false; n_data];
    let n = defects.len();
    assert!(n % 2 == 0, "defect parity must be even, got {n}");
    if n == 0 {
        return correction;
    }
    let paths: Vec<ShortestPaths> = defects.iter().map(|&v| dijkstra(graph, v)).collect();
    let mate = min_weight_perfect_matching(n, |i, j| paths[i].dist[defects[j]]);
    for (i, &j) in mate.iter().enumerate() {
        if j < i {
            continue;
        }
        for eidx in paths[i].path_edges(graph, defects[j]) {
            for &q in &graph.edges[eidx].correction {
                correction[q] ^= true;
            }
        }
    }
    correction
}

/// A decoder bound to one extraction schedule and one noise prior.
///
/// The decoding graphs are built once from the prior `params`; the sampler
/// may run with different (even zero) physical noise.
#[derive(Debug, Clone)]
pub struct Decoder {
    pub kind: DecoderKind,
    pub program: Program,
    pub graph_x: DecodingGraph,
    pub graph_z: DecodingGraph,
}

impl Decoder {
    pub fn new(
        d: usize,
        scheme: Scheme,
        rounds: usize,
        params: &NoiseParams,
        kind: DecoderKind,
    ) -> Decoder {
        let lat = ToricLattice::new(d);
        let program = Program::new(lat, scheme, rounds);
        let graph_x = DecodingGraph::build(&lat, scheme, rounds, CheckKind::Plaquette, params);
        let graph_z = DecodingGraph::build(&lat, scheme, rounds, CheckKind::Star, params);
        Decoder {
            kind,
            program,
            graph_x,
            graph_z,
        }
    }

    /// Decode one sampled record.  `rng` drives only the depolarization of
    /// data qubits still leaked at the final readout.
    pub fn decode(&self, sample: &SampleOutput, rng: &mut impl Rng) -> DecodeOutcome {
        let prog = &self.program;
        let lat = &prog.lattice;
        let nc = lat.n_checks();
        let rounds = prog.rounds;

        let pr = perfect_round(prog, &sample.final_labels, rng);
        let frame_x = DefectFrame::from_sample(CheckKind::Plaquette, sample, &pr.plaq, rounds, nc);
        let frame_z = DefectFrame::from_sample(CheckKind::Star, sample, &pr.star, rounds, nc);
        let defects_x = frame_x.defects();
        let defects_z = frame_z.defects();

        let (corr_x, corr_z) = match self.kind {
            DecoderKind::Standard => (
                match_defects(&self.graph_x, &defects_x),
                match_defects(&self.graph_z, &defects_z),
            ),
            DecoderKind::Heralded => {
                let gx = build_conditional(&self.graph_x, prog, &sample.heralds, &frame_x);
                let gz = build_conditional(&self.graph_z, prog, &sample.heralds, &frame_z);
                (
                    match_defects(&gx, &defects_x),
                    match_defects(&gz, &defects_z),
                )
            }
        };

        let mut x_total = pr.x_chain;
        let mut z_total = pr.z_chain;
        for q in 0..x_total.len() {
            x_total[q] ^= corr_x[q];
            z_total[q] ^= corr_z[q];
        }

        // The matched correction must return the code to the stabilizer
        // space: the residual chain has to be a closed loop.
        assert!(
            lat.plaquette_boundary(&x_total).iter().all(|&s| !s),
            "correction left a plaquette syndrome"
        );
        assert!(
            lat.star_boundary(&z_total).iter().all(|&s| !s),
            "correction left a star syndrome"
        );

        let (x1, x2) = lat.homology_x(&x_total);
        let (z1, z2) = lat.homology_z(&z_total);
        DecodeOutcome {
            x_fail: x1 || x2,
            z_fail: z1 || z2,
            n_heralds: sample.heralds.len(),
            n_defects_x: defects_x.len(),
            n_defects_z: defects_z.len(),
        }
    }
}
