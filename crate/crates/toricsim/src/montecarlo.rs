//! Monte-Carlo estimation of logical failure rates.
//!
//! A run draws independent trials of the full extraction-and-decode
//! pipeline and counts logical failures.  Trials are reproducible and
//! scheduling-independent: trial `t` of a run with master seed `m` always
//! consumes the RNG stream `trial_rng(m, t)`, and results are aggregated as
//! integer counts, so the same configuration yields bit-identical
//! statistics on any thread count.
//!
//! Each trial starts from the steady-state leakage population computed by
//! [`equilibrium_probs`]: simulating from a cold start would underestimate
//! leakage damage for the first few cycles of the observation window.

use crate::circuits::{run_sampled, Program, ResolvedOp, Scheme};
use crate::decoder::{Decoder, DecoderKind};
use crate::lattice::ToricLattice;
use crate::noise::{trial_rng, Label, NoiseParams};
use rayon::prelude::*;
use thiserror::Error;

/// Trials are dispatched in chunks; stopping conditions are evaluated only
/// at chunk boundaries so the trial count (and hence the exact set of RNG
/// streams consumed) never depends on timing.
const CHUNK: u64 = 512;

/// One simulation point.
#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub d: usize,
    /// Noisy syndrome-extraction cycles per trial (one noiseless readout is
    /// always appended).  Convention: equal to `d`.
    pub rounds: usize,
    pub scheme: Scheme,
    pub decoder: DecoderKind,
    pub params: NoiseParams,
    pub seed: u64,
    /// Run at least this many trials.
    pub min_trials: u64,
    /// Hard cap on trials.
    pub max_trials: u64,
    /// After `min_trials`, keep going until this many failing trials have
    /// been seen (or `max_trials` is reached).  Zero means `min_trials`
    /// decides alone.
    pub min_failures: u64,
}

impl SimConfig {
    /// A point with the standard `rounds = d` convention and a fixed trial
    /// budget.
    pub fn new(
        d: usize,
        scheme: Scheme,
        decoder: DecoderKind,
        params: NoiseParams,
        seed: u64,
        trials: u64,
    ) -> SimConfig {
        SimConfig {
            d,
            rounds: d,
            scheme,
            decoder,
            params,
            seed,
            min_trials: trials,
            max_trials: trials,
            min_failures: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.d < 3 {
            return Err(ConfigError::DistanceTooSmall(self.d));
        }
        if self.rounds == 0 {
            return Err(ConfigError::NoRounds);
        }
        if self.min_trials == 0 {
            return Err(ConfigError::NoTrials);
        }
        if self.max_trials < self.min_trials {
            return Err(ConfigError::TrialBounds {
                min: self.min_trials,
                max: self.max_trials,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("code distance must be at least 3, got {0}")]
    DistanceTooSmall(usize),
    #[error("at least one syndrome-extraction round is required")]
    NoRounds,
    #[error("at least one trial is required")]
    NoTrials,
    #[error("max trials {max} is below min trials {min}")]
    TrialBounds { min: u64, max: u64 },
}

/// Aggregate counts for a run; everything is integral so that merging is
/// exact and order-independent.  Rates and confidence intervals are derived
/// quantities (normal-approximation binomial CI, see
/// [`crate::analysis::binomial_ci`]).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunStats {
    pub trials: u64,
    pub x_failures: u64,
    pub z_failures: u64,
    pub any_failures: u64,
    pub heralds: u64,
    pub defects: u64,
    /// Set when the trial cap cut the run short of the requested failure
    /// minimum.
    pub under_sampled: bool,
}

impl RunStats {
    pub fn merge(self, other: RunStats) -> RunStats {
        RunStats {
            trials: self.trials + other.trials,
            x_failures: self.x_failures + other.x_failures,
            z_failures: self.z_failures + other.z_failures,
            any_failures: self.any_failures + other.any_failures,
            heralds: self.heralds + other.heralds,
            defects: self.defects + other.defects,
            under_sampled: self.under_sampled || other.under_sampled,
        }
    }

    pub fn x_rate(&self) -> f64 {
        self.x_failures as f64 / self.trials as f64
    }

    pub fn z_rate(&self) -> f64 {
        self.z_failures as f64 / self.trials as f64
    }

    pub fn any_rate(&self) -> f64 {
        self.any_failures as f64 / self.trials as f64
    }
}

/// Steady-state leakage probability of every physical slot at the start of
/// an observation window.
///
/// The leakage population of one qubit evolves independently of all others
/// (gates move Pauli errors around but never transfer leakage), and every
/// location acts affinely on the leak probability:
///
/// * preparation resets it to `p_up`,
/// * a CNOT output maps `l` to `l (1 - p_down) + (1 - l) p_up`,
/// * an idle step maps `l` to `l (1 - p_down)`,
/// * measurement leaves the label untouched.
///
/// Composing those maps over one scheduling period (two cycles, so that
/// schedules which alternate roles between cycles are covered) gives an
/// affine map `l -> a l + b` per slot whose fixed point `b / (1 - a)` is
/// the equilibrium population.
pub fn equilibrium_probs(d: usize, scheme: Scheme, params: &NoiseParams) -> Vec<f64> {
    let prog = Program::new(ToricLattice::new(d), scheme, 2);
    let p_up = params.p_up();
    let p_down = params.p_down();
    // Per-slot affine coefficients (a, b), starting from the identity.
    let mut aff = vec![(1.0f64, 0.0f64); prog.n_phys];
    let compose = |slot: usize, a2: f64, b2: f64, aff: &mut Vec<(f64, f64)>| {
        let (a1, b1) = aff[slot];
        aff[slot] = (a2 * a1, a2 * b1 + b2);
    };
    for op in &prog.ops {
        match *op {
            ResolvedOp::Prep { phys, .. } => compose(phys, 0.0, p_up, &mut aff),
            ResolvedOp::Cnot { control, target } => {
                let a = 1.0 - p_down - p_up;
                compose(control, a, p_up, &mut aff);
                compose(target, a, p_up, &mut aff);
            }
            ResolvedOp::Idle { phys } => compose(phys, 1.0 - p_down, 0.0, &mut aff),
            ResolvedOp::Meas { .. } => {}
        }
    }
    aff.into_iter()
        .map(|(a, b)| {
            let denom = 1.0 - a;
            if denom <= 0.0 {
                0.0
            } else {
                (b / denom).clamp(0.0, 1.0)
            }
        })
        .collect()
}

/// Draw an initial label vector from per-slot equilibrium leak
/// probabilities.
pub fn draw_equilibrium_labels(probs: &[f64], rng: &mut impl rand::Rng) -> Vec<Label> {
    probs
        .iter()
        .map(|&l| {
            if l > 0.0 && rng.gen_bool(l) {
                Label::LEAKED
            } else {
                Label::I
            }
        })
        .collect()
}

/// Run a single trial: draw the equilibrium initial state, sample one
/// noisy window, decode it.
pub fn run_trial(
    dec: &Decoder,
    params: &NoiseParams,
    equilibrium: &[f64],
    master_seed: u64,
    trial: u64,
) -> crate::decoder::DecodeOutcome {
    let mut rng = trial_rng(master_seed, trial);
    let init = draw_equilibrium_labels(equilibrium, &mut rng);
    let sample = run_sampled(
        &dec.program,
        params,
        dec.kind.three_outcome(),
        &init,
        &mut rng,
    );
    dec.decode(&sample, &mut rng)
}

/// Run a full simulation point.
pub fn run(cfg: &SimConfig) -> Result<RunStats, ConfigError> {
    cfg.validate()?;
    // Edge priors need p > 0 to give finite weights; a noiseless run still
    // decodes (trivially) against an arbitrarily weak prior.
    let prior = if cfg.params.p > 0.0 {
        cfg.params
    } else {
        NoiseParams {
            p: 1e-9,
            ..cfg.params
        }
    };
    let dec = Decoder::new(cfg.d, cfg.scheme, cfg.rounds, &prior, cfg.decoder);
    let equilibrium = equilibrium_probs(cfg.d, cfg.scheme, &cfg.params);

    let mut stats = RunStats::default();
    while stats.trials < cfg.max_trials {
        let stop_satisfied =
            stats.trials >= cfg.min_trials && stats.any_failures >= cfg.min_failures;
        if stop_satisfied {
            break;
        }
        // Never overshoot min_trials or max_trials mid-chunk, so a fixed
        // budget is honored exactly.
        let mut chunk = CHUNK.min(cfg.max_trials - stats.trials);
        if stats.trials < cfg.min_trials {
            chunk = chunk.min(cfg.min_trials - stats.trials);
        }
        let lo = stats.trials;
        let partial = (lo..lo + chunk)
            .into_par_iter()
            .map(|t| {
                // Attach the replay coordinates to any internal assertion so
                // a failing trial can be reproduced in isolation.
                let out = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
                    run_trial(&dec, &cfg.params, &equilibrium, cfg.seed, t)
                }))
                .unwrap_or_else(|cause| {
                    eprintln!("trial {} of master seed {} panicked; replay with run_trial(seed={}, trial={})", t, cfg.seed, cfg.seed, t);
                    std::panic::resume_unwind(cause)
                });
                RunStats {
                    trials: 1,
                    x_failures: out.x_fail as u64,
                    z_failures: out.z_fail as u64,
                    any_failures: out.any_fail() as u64,
                    heralds: out.n_heralds as u64,
                    defects: (out.n_defects_x + out.n_defects_z) as u64,
                    under_sampled: false,
                }
            })
            .reduce(RunStats::default, RunStats::merge);
        stats = stats.merge(partial);
    }
    stats.under_sampled = stats.any_failures < cfg.min_failures;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::equilibrium_leakage;

    #[test]
    fn equilibrium_matches_the_location_count_formula() {
        // A data qubit in the standard schedule passes 4 CNOTs (leak-up
        // opportunities) and 4 CNOTs + 2 idles (relax opportunities) per
        // cycle; with r = s = 1 the closed-form population is ~0.40.
        let params = NoiseParams::new(0.001, 1.0, 1.0);
        let closed = equilibrium_leakage(4, 6, &params);
        assert!((closed - 0.40).abs() < 0.01, "closed form gave {closed}");

        let probs = equilibrium_probs(3, Scheme::Standard, &params);
        let lat = ToricLattice::new(3);
        for q in 0..lat.n_data() {
            assert!(
                (probs[q] - closed).abs() < 0.02 * closed,
                "slot {q}: {} vs {}",
                probs[q],
                closed
            );
        }
        // Ancillas are freshly prepared each cycle and sit far below the
        // data-qubit population.
        for q in lat.n_data()..Scheme::Standard.n_phys(3) {
            assert!(probs[q] < 0.3 * closed, "slot {q}: {}", probs[q]);
        }
    }

    #[test]
    fn equilibrium_is_stationary_under_the_sampler() {
        // Starting trials from the computed equilibrium, the leaked
        // fraction of the data register at the END of the window must
        // reproduce the same population (stationarity), up to Monte-Carlo
        // error.
        let params = NoiseParams::new(0.01, 2.0, 1.0);
        let d = 3;
        let scheme = Scheme::Standard;
        let probs = equilibrium_probs(d, scheme, &params);
        let prog = Program::new(ToricLattice::new(d), scheme, 4);
        let n_data = 2 * d * d;
        let expected: f64 = probs[..n_data].iter().sum::<f64>() / n_data as f64;

        let trials = 2000u64;
        let mut leaked = 0u64;
        for t in 0..trials {
            let mut rng = trial_rng(41, t);
            let init = draw_equilibrium_labels(&probs, &mut rng);
            let sample = run_sampled(&prog, &params, false, &init, &mut rng);
            leaked += prog.final_carrier[..n_data]
                .iter()
                .filter(|&&slot| sample.final_labels[slot].leaked())
                .count() as u64;
        }
        let measured = leaked as f64 / (trials * n_data as u64) as f64;
        let sigma = (expected * (1.0 - expected) / (trials * n_data as u64) as f64).sqrt();
        assert!(
            (measured - expected).abs() < 4.0 * sigma + 0.005,
            "measured {measured} vs expected {expected} (sigma {sigma})"
        );
    }

    #[test]
    fn zero_noise_yields_zero_failures_for_every_scheme() {
        for scheme in Scheme::ALL {
            let cfg = SimConfig::new(
                3,
                scheme,
                DecoderKind::Standard,
                NoiseParams::new(0.0, 0.0, 0.0),
                7,
                20,
            );
            let stats = run(&cfg).unwrap();
            assert_eq!(stats.trials, 20, "{scheme:?}");
            assert_eq!(stats.any_failures, 0, "{scheme:?}");
            assert_eq!(stats.defects, 0, "{scheme:?}");
        }
    }

    #[test]
    fn fixed_budget_runs_exactly_min_trials() {
        let cfg = SimConfig {
            min_trials: 100,
            max_trials: 10_000,
            min_failures: 0,
            ..SimConfig::new(
                3,
                Scheme::Standard,
                DecoderKind::Standard,
                NoiseParams::new(0.02, 1.0, 1.0),
                11,
                100,
            )
        };
        let stats = run(&cfg).unwrap();
        assert_eq!(stats.trials, 100);
    }

    #[test]
    fn failure_target_extends_the_run() {
        let cfg = SimConfig {
            min_trials: 10,
            max_trials: 4000,
            min_failures: 5,
            ..SimConfig::new(
                3,
                Scheme::Standard,
                DecoderKind::Standard,
                NoiseParams::new(0.05, 1.0, 1.0),
                13,
                10,
            )
        };
        let stats = run(&cfg).unwrap();
        assert!(stats.trials >= 10);
        assert!(stats.any_failures >= 5 || stats.trials == 4000);
        // Deterministic: a second run reproduces the counts exactly.
        assert_eq!(run(&cfg).unwrap(), stats);
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let cfg = SimConfig::new(
            3,
            Scheme::Quick,
            DecoderKind::Heralded,
            NoiseParams::new(0.015, 1.0, 1.0),
            17,
            300,
        );
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run(&cfg).unwrap());
        let several = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| run(&cfg).unwrap());
        assert_eq!(single, several);
        assert!(single.trials == 300);
    }

    #[test]
    fn heralded_run_reduces_to_standard_when_nothing_leaks() {
        // With r = 0 no leakage ever occurs, so the three-outcome readout
        // never fires a herald and both decoders see identical records and
        // random streams: the counts must agree trial for trial.
        let params = NoiseParams::new(0.012, 0.0, 1.0);
        let mk = |decoder| SimConfig::new(3, Scheme::Standard, decoder, params, 19, 400);
        let a = run(&mk(DecoderKind::Standard)).unwrap();
        let b = run(&mk(DecoderKind::Heralded)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.heralds, 0);
        assert!(a.any_failures > 0, "noise level should produce failures");
    }

    #[test]
    fn larger_distance_wins_below_threshold() {
        let params = NoiseParams::depolarizing(0.004);
        let stats3 = run(&SimConfig::new(
            3,
            Scheme::Standard,
            DecoderKind::Standard,
            params,
            23,
            3000,
        ))
        .unwrap();
        let stats5 = run(&SimConfig::new(
            5,
            Scheme::Standard,
            DecoderKind::Standard,
            params,
            23,
            3000,
        ))
        .unwrap();
        assert!(
            stats3.any_failures > 2 * stats5.any_failures,
            "d=3 {} vs d=5 {}",
            stats3.any_failures,
            stats5.any_failures
        );
    }

    #[test]
    fn golden_seed_fixture_is_stable() {
        // Regression pin: any change to the sampling or decoding pipeline
        // that shifts random-stream consumption shows up here first.
        let cfg = SimConfig::new(
            3,
            Scheme::Standard,
            DecoderKind::Standard,
            NoiseParams::depolarizing(0.02),
            101,
            500,
        );
        let stats = run(&cfg).unwrap();
        assert_eq!(
            (stats.x_failures, stats.z_failures, stats.any_failures),
            (210, 204, 318)
        );
    }

    #[test]
    fn failure_rate_increases_with_p() {
        let d = 3;
        let trials = 3000u64;
        let mut rates = vec![];
        for p in [0.001f64, 0.003, 0.01] {
            let cfg = SimConfig::new(
                d,
                Scheme::Standard,
                DecoderKind::Standard,
                NoiseParams::depolarizing(p),
                29,
                trials,
            );
            rates.push(run(&cfg).unwrap().any_rate());
        }
        let sigma = |r: f64| (r * (1.0 - r) / trials as f64).sqrt();
        for w in rates.windows(2) {
            let band = 3.0 * (sigma(w[0]).powi(2) + sigma(w[1]).powi(2)).sqrt();
            assert!(w[1] >= w[0] - band, "rates {rates:?} not monotone");
        }
        let band = 3.0 * (sigma(rates[0]).powi(2) + sigma(rates[2]).powi(2)).sqrt();
        assert!(
            rates[2] > rates[0] + band,
            "no significant increase across the grid: {rates:?}"
        );
    }

    #[test]
    fn under_sampled_runs_are_flagged() {
        let cfg = SimConfig {
            min_trials: 50,
            max_trials: 100,
            min_failures: 1,
            ..SimConfig::new(
                3,
                Scheme::Standard,
                DecoderKind::Standard,
                NoiseParams::new(0.0, 0.0, 0.0),
                31,
                50,
            )
        };
        let stats = run(&cfg).unwrap();
        assert_eq!(stats.trials, 100);
        assert_eq!(stats.any_failures, 0);
        assert!(stats.under_sampled);

        let ok = run(&SimConfig::new(
            3,
            Scheme::Standard,
            DecoderKind::Standard,
            NoiseParams::new(0.0, 0.0, 0.0),
            31,
            50,
        ))
        .unwrap();
        assert!(!ok.under_sampled);
    }

    #[test]
    fn config_validation_rejects_nonsense() {
        let ok = SimConfig::new(
            3,
            Scheme::Standard,
            DecoderKind::Standard,
            NoiseParams::depolarizing(0.01),
            1,
            10,
        );
        assert!(ok.validate().is_ok());
        assert_eq!(
            SimConfig { d: 2, ..ok }.validate(),
            Err(ConfigError::DistanceTooSmall(2))
        );
        assert_eq!(
            SimConfig { rounds: 0, ..ok }.validate(),
            Err(ConfigError::NoRounds)
        );
        assert_eq!(
            SimConfig {
                min_trials: 0,
                ..ok
            }
            .validate(),
            Err(ConfigError::NoTrials)
        );
        assert_eq!(
            SimConfig {
                max_trials: 5,
                ..ok
            }
            .validate(),
            Err(ConfigError::TrialBounds { min: 10, max: 5 })
        );
    }
}
