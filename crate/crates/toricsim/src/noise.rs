//! Error model: a leakage-extended Pauli frame and the stochastic channels
//! applied at every circuit location.
//!
//! Each physical qubit carries a [`Label`]: one of `I, X, Y, Z` (the Pauli
//! frame relative to the ideal circuit) or `L` (leaked out of the
//! computational subspace; a leaked qubit carries no Pauli frame).
//!
//! The model has four dimensionless parameters, [`NoiseParams`]:
//!
//! * `p`  — depolarizing strength per location,
//! * `q`  — measurement-flip probability (defaults to `p`),
//! * `r`  — leakage rate relative to `p` (`p_up = r·p`),
//! * `s`  — relaxation ("seepage") rate relative to `p` (`p_down = s·p`).
//!
//! Location semantics:
//!
//! * **idle** — a contained qubit is depolarized with probability `p`
//!   (uniform over `{X, Y, Z}`); a leaked qubit relaxes with probability
//!   `p_down` into a uniformly random Pauli state.  Idling never leaks.
//! * **prepare** — a fresh qubit leaks with probability `p_up`; otherwise it
//!   acquires the orthogonal-state error with probability `p`
//!   (`X` for a `|0⟩` preparation, `Z` for `|+⟩`).
//! * **cnot** — with both inputs contained, the frame propagates through the
//!   ideal gate and with probability `p` one of the fifteen non-identity
//!   two-qubit Paulis is applied uniformly.  With exactly one leaked input
//!   the gate acts as identity and the contained output is completely
//!   depolarized (uniform over `{I, X, Y, Z}`).  With both inputs leaked
//!   nothing happens.  Afterwards each output independently leaks with
//!   probability `p_up` (if contained) or relaxes with probability `p_down`
//!   (if leaked).
//! * **measure** — a contained qubit reports the frame bit that anticommutes
//!   with the measured operator, flipped with probability `q`.  A leaked
//!   qubit deterministically reports `1` in the two-outcome model, or the
//!   heralded [`MeasOutcome::Leaked`] in the three-outcome model; no flip
//!   noise is applied in either case.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// State label of one physical qubit: a Pauli frame or "leaked".
///
/// Packed into one byte: bit 0 = X component, bit 1 = Z component,
/// bit 2 = leaked.  A leaked label never carries Pauli bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Label(u8);

impl Label {
    pub const I: Label = Label(0b000);
    pub const X: Label = Label(0b001);
    pub const Z: Label = Label(0b010);
    pub const Y: Label = Label(0b011);
    pub const LEAKED: Label = Label(0b100);

    /// Build from explicit Pauli components.
    pub fn from_xz(x: bool, z: bool) -> Label {
        Label((x as u8) | ((z as u8) << 1))
    }

    /// X component of the frame (always false when leaked).
    pub fn x(self) -> bool {
        self.0 & 0b001 != 0
    }

    /// Z component of the frame (always false when leaked).
    pub fn z(self) -> bool {
        self.0 & 0b010 != 0
    }

    /// Whether the qubit is outside the computational subspace.
    pub fn leaked(self) -> bool {
        self.0 & 0b100 != 0
    }

    /// Compose a Pauli onto the frame.  No effect on a leaked qubit.
    pub fn apply_pauli(&mut self, x: bool, z: bool) {
        if !self.leaked() {
            self.0 ^= (x as u8) | ((z as u8) << 1);
        }
    }

    /// Move the qubit out of the computational subspace, dropping its frame.
    pub fn leak(&mut self) {
        self.0 = 0b100;
    }

    /// Return the qubit to the computational subspace in the given frame.
    pub fn relax_to(&mut self, pauli: Label) {
        debug_assert!(!pauli.leaked());
        self.0 = pauli.0;
    }
}

/// Preparation / measurement basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    /// `|0⟩` preparation / Z-basis measurement.
    Z,
    /// `|+⟩` preparation / X-basis measurement.
    X,
}

/// Result of measuring one qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasOutcome {
    /// Ordinary binary outcome (`false` = +1 eigenvalue, `true` = −1).
    Bit(bool),
    /// Heralded leakage (three-outcome readout only).
    Leaked,
}

impl MeasOutcome {
    pub fn is_leaked(self) -> bool {
        matches!(self, MeasOutcome::Leaked)
    }

    /// The bit, panicking on a herald; use only in two-outcome contexts.
    pub fn bit(self) -> bool {
        match self {
            MeasOutcome::Bit(b) => b,
            MeasOutcome::Leaked => panic!("herald has no bit value"),
        }
    }
}

/// The four model parameters.  See the module docs for semantics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Depolarizing strength per location.
    pub p: f64,
    /// Measurement-flip probability.
    pub q: f64,
    /// Leakage rate relative to `p`.
    pub r: f64,
    /// Relaxation rate relative to `p`.
    pub s: f64,
}

impl NoiseParams {
    /// Construct with `q = p` (the convention used throughout).
    pub fn new(p: f64, r: f64, s: f64) -> NoiseParams {
        NoiseParams { p, q: p, r, s }.validated()
    }

    /// Override the measurement-flip probability.
    pub fn with_q(mut self, q: f64) -> NoiseParams {
        self.q = q;
        self.validated()
    }

    /// Plain depolarizing noise without leakage.
    pub fn depolarizing(p: f64) -> NoiseParams {
        NoiseParams::new(p, 0.0, 0.0)
    }

    fn validated(self) -> NoiseParams {
        assert!((0.0..=1.0).contains(&self.p), "p out of range: {}", self.p);
        assert!((0.0..=1.0).contains(&self.q), "q out of range: {}", self.q);
        assert!(self.r >= 0.0 && self.s >= 0.0, "rates must be nonnegative");
        assert!(
            self.p_up() <= 1.0 && self.p_down() <= 1.0,
            "leakage/relaxation probabilities exceed 1"
        );
        self
    }

    /// Leakage probability per eligible location.
    pub fn p_up(&self) -> f64 {
        self.r * self.p
    }

    /// Relaxation probability per eligible location.
    pub fn p_down(&self) -> f64 {
        self.s * self.p
    }

    /// Idle location.
    pub fn idle(&self, label: &mut Label, rng: &mut impl Rng) {
        if label.leaked() {
            if rng.gen_bool(self.p_down()) {
                label.relax_to(uniform_pauli(rng));
            }
        } else if rng.gen_bool(self.p) {
            let e = nontrivial_pauli(rng);
            label.apply_pauli(e.x(), e.z());
        }
    }

    /// Preparation location; returns the fresh qubit's label.
    pub fn prepare(&self, basis: Basis, rng: &mut impl Rng) -> Label {
        if rng.gen_bool(self.p_up()) {
            Label::LEAKED
        } else if rng.gen_bool(self.p) {
            match basis {
                Basis::Z => Label::X, // |1⟩ instead of |0⟩
                Basis::X => Label::Z, // |−⟩ instead of |+⟩
            }
        } else {
            Label::I
        }
    }

    /// CNOT location acting on `control` and `target` labels.
    pub fn cnot(&self, control: &mut Label, target: &mut Label, rng: &mut impl Rng) {
        match (control.leaked(), target.leaked()) {
            (false, false) => {
                ideal_cnot(control, target);
                if rng.gen_bool(self.p) {
                    let idx: u8 = rng.gen_range(1..16);
                    let c = idx >> 2;
                    let t = idx & 0b11;
                    control.apply_pauli(c & 1 != 0, c & 2 != 0);
                    target.apply_pauli(t & 1 != 0, t & 2 != 0);
                }
            }
            (true, false) => depolarize(target, rng),
            (false, true) => depolarize(control, rng),
            (true, true) => {}
        }
        self.leak_transition(control, rng);
        self.leak_transition(target, rng);
    }

    /// Post-gate leakage/relaxation step applied to each CNOT output.
    fn leak_transition(&self, label: &mut Label, rng: &mut impl Rng) {
        if label.leaked() {
            if rng.gen_bool(self.p_down()) {
                label.relax_to(uniform_pauli(rng));
            }
        } else if rng.gen_bool(self.p_up()) {
            label.leak();
        }
    }

    /// Measurement location.  The label itself is left untouched; measured
    /// qubits are always re-prepared or discarded before reuse.
    pub fn measure(
        &self,
        label: Label,
        basis: Basis,
        three_outcome: bool,
        rng: &mut impl Rng,
    ) -> MeasOutcome {
        if label.leaked() {
            if three_outcome {
                MeasOutcome::Leaked
            } else {
                MeasOutcome::Bit(true)
            }
        } else {
            let ideal = match basis {
                Basis::Z => label.x(),
                Basis::X => label.z(),
            };
            MeasOutcome::Bit(ideal ^ rng.gen_bool(self.q))
        }
    }
}

/// Noiseless CNOT frame propagation: `X` copies control→target, `Z` copies
/// target→control.  Acts as identity if either qubit is leaked.
pub fn ideal_cnot(control: &mut Label, target: &mut Label) {
    if control.leaked() || target.leaked() {
        return;
    }
    let (xc, zc) = (control.x(), control.z());
    let (xt, zt) = (target.x(), target.z());
    *control = Label::from_xz(xc, zc ^ zt);
    *target = Label::from_xz(xt ^ xc, zt);
}

/// Uniform element of `{I, X, Y, Z}`.
pub fn uniform_pauli(rng: &mut impl Rng) -> Label {
    Label(rng.gen_range(0..4u8))
}

/// Uniform element of `{X, Y, Z}`.
pub fn nontrivial_pauli(rng: &mut impl Rng) -> Label {
    Label(rng.gen_range(1..4u8))
}

/// Complete depolarization: compose a uniform Pauli onto the frame.
fn depolarize(label: &mut Label, rng: &mut impl Rng) {
    let e = uniform_pauli(rng);
    label.apply_pauli(e.x(), e.z());
}

/// Long-run leakage occupancy of a qubit that sees `k_up` leakage
/// opportunities and `k_down` relaxation opportunities per cycle.
///
/// Treating a whole cycle as one step of a two-state chain with
/// `P(contained → leaked) = 1 − (1 − p_up)^k_up` and
/// `P(leaked → contained) = 1 − (1 − p_down)^k_down`, the stationary
/// occupancy is `a / (a + b)`.
pub fn equilibrium_leakage(k_up: u32, k_down: u32, params: &NoiseParams) -> f64 {
    let a = 1.0 - (1.0 - params.p_up()).powi(k_up as i32);
    let b = 1.0 - (1.0 - params.p_down()).powi(k_down as i32);
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

/// Deterministic per-trial random stream.
///
/// All trials derive from one master seed; trial `t` uses stream `t` of the
/// ChaCha cipher, so results are independent of how trials are distributed
/// across worker threads.
pub type TrialRng = ChaCha8Rng;

/// RNG for one simulation trial.
pub fn trial_rng(master_seed: u64, trial_index: u64) -> TrialRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial_index);
    rng
}
