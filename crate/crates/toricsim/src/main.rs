//! Command-line front end: single runs, parameter sweeps, threshold and
//! decay-model estimation, plotting, and the closed-form-weight validation
//! command.
//!
//! Exit codes: 0 success, 1 usage/configuration error, 2 validation or
//! analysis mismatch (weight-table mismatch, malformed CSV, no crossover,
//! under-determined fit), 3 completed but under-sampled.

use clap::{Args, Parser, Subcommand};
use num_rational::Ratio;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use toricsim::analysis::{
    self, append_csv, read_csv, AnalysisError, Crossover, PointRecord, ThresholdFit,
};
use toricsim::circuits::Scheme;
use toricsim::decoder::DecoderKind;
use toricsim::graph::{class_includes_q, class_p_coefficient, enumerate_single_fault_classes, EdgeClass};
use toricsim::lattice::{CheckKind, ToricLattice};
use toricsim::montecarlo::{run, RunStats, SimConfig};
use toricsim::noise::NoiseParams;
use toricsim::plot::{failure_rate_figure, threshold_figure};

const EXIT_USAGE: i32 = 1;
const EXIT_MISMATCH: i32 = 2;
const EXIT_UNDER_SAMPLED: i32 = 3;

fn fail(code: i32, msg: impl AsRef<str>) -> ! {
    eprintln!("error: {}", msg.as_ref());
    std::process::exit(code);
}

/// Print a line to stdout, ignoring broken pipes (e.g. `toricsim … | head`).
fn emit(line: impl AsRef<str>) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{}", line.as_ref());
}

fn analysis_code(e: &AnalysisError) -> i32 {
    match e {
        AnalysisError::Io(_) => EXIT_USAGE,
        _ => EXIT_MISMATCH,
    }
}

#[derive(Parser)]
#[command(
    name = "toricsim",
    about = "Monte-Carlo toric-code simulator under depolarizing noise with leakage",
    version,
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the closed-form edge-weight table against exhaustive
    /// single-fault enumeration (exact rational arithmetic).
    ValidateWeights,
    /// Simulate a single parameter cell and print its statistics.
    Run(RunArgs),
    /// Simulate a grid of cells, appending rows to a CSV (resumable).
    Sweep(SweepArgs),
    /// Estimate a threshold from the crossover of two distances' curves.
    Threshold(ThresholdArgs),
    /// Fit the threshold decay model and/or sub-threshold power laws.
    Fit(FitArgs),
    /// Render failure-rate and threshold figures from a results CSV.
    Plot(PlotArgs),
}

/// Simulation parameters shared by `run` and `sweep`.  Every field mirrors
/// a config-file key of the same name (flag `--min-trials` ↔ key
/// `min_trials`); a flag given on the command line overrides the file.
#[derive(Args, Clone, Default)]
struct SimFlags {
    /// Flat key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Code distance (lattice is d × d).
    #[arg(long)]
    d: Option<usize>,
    /// Noisy extraction rounds per trial (default: d).
    #[arg(long)]
    rounds: Option<usize>,
    /// Extraction scheme: standard | partial-lru | full-lru | quick.
    #[arg(long)]
    scheme: Option<String>,
    /// Decoder: standard | heralded.
    #[arg(long)]
    decoder: Option<String>,
    /// Depolarizing rate per location.
    #[arg(long)]
    p: Option<f64>,
    /// Readout flip rate (default: p).
    #[arg(long)]
    q: Option<f64>,
    /// Leakage rate relative to p (p_up = r·p).
    #[arg(long)]
    r: Option<f64>,
    /// Relaxation rate relative to p (p_down = s·p).
    #[arg(long)]
    s: Option<f64>,
    /// Master RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Trials to run before the stopping rule applies.
    #[arg(long)]
    min_trials: Option<u64>,
    /// Hard trial cap.
    #[arg(long)]
    max_trials: Option<u64>,
    /// Keep running (up to max_trials) until this many failures are seen.
    #[arg(long)]
    min_failures: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    sim: SimFlags,
    /// Append the result row to this CSV as well as printing it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    sim: SimFlags,
    /// Code distances, comma separated (config key `d_list`).
    #[arg(long, value_delimiter = ',')]
    d_list: Vec<usize>,
    /// First p of the grid (config key `p_start`).
    #[arg(long)]
    p_start: Option<f64>,
    /// Last p of the grid, inclusive (config key `p_stop`).
    #[arg(long)]
    p_stop: Option<f64>,
    /// p grid step (config key `p_step`).
    #[arg(long)]
    p_step: Option<f64>,
    /// Relative leakage rates, comma separated (config key `r_list`).
    #[arg(long, value_delimiter = ',')]
    r_list: Vec<f64>,
    /// Output CSV path (config key `out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ThresholdArgs {
    /// Results CSV produced by `sweep` or `run --out`.
    csv: PathBuf,
    /// Smaller code distance of the crossover pair (default: smallest present).
    #[arg(long)]
    d_small: Option<usize>,
    /// Larger code distance of the crossover pair (default: largest present).
    #[arg(long)]
    d_large: Option<usize>,
    /// Restrict to one scheme (required if the CSV mixes schemes).
    #[arg(long)]
    scheme: Option<String>,
    /// Restrict to one decoder (required if the CSV mixes decoders).
    #[arg(long)]
    decoder: Option<String>,
    /// Restrict to one relative leakage rate r.
    #[arg(long)]
    r: Option<f64>,
    /// Bootstrap resamples for the confidence interval.
    #[arg(long, default_value_t = 1000)]
    resamples: usize,
    /// Seed of the bootstrap resampler.
    #[arg(long, default_value_t = 0)]
    bootstrap_seed: u64,
}

#[derive(Args)]
struct FitArgs {
    /// Results CSV covering the quantities to fit.
    csv: PathBuf,
    /// What to fit: alpha-beta | gamma | both.
    #[arg(long, default_value = "both")]
    what: String,
    /// Smaller distance of each crossover pair (default: smallest present).
    #[arg(long)]
    d_small: Option<usize>,
    /// Larger distance of each crossover pair (default: largest present).
    #[arg(long)]
    d_large: Option<usize>,
    /// Restrict to one scheme.
    #[arg(long)]
    scheme: Option<String>,
    /// Restrict to one decoder.
    #[arg(long)]
    decoder: Option<String>,
    /// Bootstrap resamples per crossover.
    #[arg(long, default_value_t = 1000)]
    resamples: usize,
    /// Seed of the bootstrap resampler.
    #[arg(long, default_value_t = 0)]
    bootstrap_seed: u64,
    /// Also write the report to this file.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Results CSV to render.
    csv: PathBuf,
    /// Directory receiving the SVG files.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Bootstrap resamples per threshold point.
    #[arg(long, default_value_t = 200)]
    resamples: usize,
    /// Seed of the bootstrap resampler.
    #[arg(long, default_value_t = 0)]
    bootstrap_seed: u64,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Help/version requests are success; real parse errors are
            // usage errors (exit 1).
            let _ = e.print();
            std::process::exit(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match cli.cmd {
        Cmd::ValidateWeights => cmd_validate_weights(),
        Cmd::Run(args) => cmd_run(args),
        Cmd::Sweep(args) => cmd_sweep(args),
        Cmd::Threshold(args) => cmd_threshold(args),
        Cmd::Fit(args) => cmd_fit(args),
        Cmd::Plot(args) => cmd_plot(args),
    }
}

// ---------------------------------------------------------------------
// Config file + flag resolution
// ---------------------------------------------------------------------

const SIM_KEYS: [&str; 12] = [
    "d", "rounds", "scheme", "decoder", "p", "q", "r", "s", "seed", "min_trials", "max_trials",
    "min_failures",
];
const SWEEP_KEYS: [&str; 6] = ["d_list", "p_start", "p_stop", "p_step", "r_list", "out"];

fn load_config(path: &Path, allow_sweep_keys: bool) -> BTreeMap<String, String> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => fail(EXIT_USAGE, format!("cannot read config {}: {e}", path.display())),
    };
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            fail(
                EXIT_USAGE,
                format!("{}:{}: expected `key = value`", path.display(), i + 1),
            );
        };
        let key = k.trim().to_string();
        let known = SIM_KEYS.contains(&key.as_str())
            || (allow_sweep_keys && SWEEP_KEYS.contains(&key.as_str()));
        if !known {
            fail(
                EXIT_USAGE,
                format!("{}:{}: unknown key `{key}`", path.display(), i + 1),
            );
        }
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            fail(
                EXIT_USAGE,
                format!("{}:{}: duplicate key `{key}`", path.display(), i + 1),
            );
        }
    }
    map
}

fn conf_parse<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Option<T>
where
    T::Err: std::fmt::Display,
{
    map.get(key).map(|v| {
        v.parse::<T>()
            .unwrap_or_else(|e| fail(EXIT_USAGE, format!("config key `{key}`: {e}")))
    })
}

fn parse_scheme(name: &str) -> Scheme {
    Scheme::ALL
        .into_iter()
        .find(|s| s.name() == name)
        .unwrap_or_else(|| {
            fail(
                EXIT_USAGE,
                format!(
                    "unknown scheme `{name}` (expected one of: {})",
                    Scheme::ALL.map(|s| s.name()).join(", ")
                ),
            )
        })
}

fn parse_decoder(name: &str) -> DecoderKind {
    match name {
        "standard" => DecoderKind::Standard,
        "heralded" => DecoderKind::Heralded,
        other => fail(
            EXIT_USAGE,
            format!("unknown decoder `{other}` (expected standard or heralded)"),
        ),
    }
}

/// Effective simulation settings after merging defaults < config < flags.
struct Resolved {
    d: usize,
    rounds: Option<usize>,
    scheme: Scheme,
    decoder: DecoderKind,
    p: f64,
    q: Option<f64>,
    r: f64,
    s: f64,
    seed: u64,
    min_trials: u64,
    max_trials: u64,
    min_failures: u64,
}

impl Resolved {
    fn merge(flags: &SimFlags, conf: &BTreeMap<String, String>) -> Resolved {
        let d = flags
            .d
            .or_else(|| conf_parse(conf, "d"))
            .unwrap_or_else(|| fail(EXIT_USAGE, "missing required setting `d`"));
        let p = flags
            .p
            .or_else(|| conf_parse(conf, "p"))
            .unwrap_or_else(|| fail(EXIT_USAGE, "missing required setting `p`"));
        let scheme = parse_scheme(
            &flags
                .scheme
                .clone()
                .or_else(|| conf.get("scheme").cloned())
                .unwrap_or_else(|| "standard".to_string()),
        );
        let decoder = parse_decoder(
            &flags
                .decoder
                .clone()
                .or_else(|| conf.get("decoder").cloned())
                .unwrap_or_else(|| "standard".to_string()),
        );
        let min_trials = flags
            .min_trials
            .or_else(|| conf_parse(conf, "min_trials"))
            .unwrap_or(10_000);
        let max_trials = flags
            .max_trials
            .or_else(|| conf_parse(conf, "max_trials"))
            .unwrap_or(min_trials)
            .max(min_trials);
        Resolved {
            d,
            rounds: flags.rounds.or_else(|| conf_parse(conf, "rounds")),
            scheme,
            decoder,
            p,
            q: flags.q.or_else(|| conf_parse(conf, "q")),
            r: flags.r.or_else(|| conf_parse(conf, "r")).unwrap_or(0.0),
            s: flags.s.or_else(|| conf_parse(conf, "s")).unwrap_or(0.0),
            seed: flags.seed.or_else(|| conf_parse(conf, "seed")).unwrap_or(1),
            min_trials,
            max_trials,
            min_failures: flags
                .min_failures
                .or_else(|| conf_parse(conf, "min_failures"))
                .unwrap_or(0),
        }
    }

    fn params_at(&self, p: f64, r: f64) -> NoiseParams {
        if !(p > 0.0 && p < 1.0) {
            fail(EXIT_USAGE, format!("p must lie in (0, 1), got {p}"));
        }
        if r < 0.0 || self.s < 0.0 {
            fail(EXIT_USAGE, "r and s must be non-negative");
        }
        let mut params = NoiseParams::new(p, r, self.s);
        if let Some(q) = self.q {
            if !(0.0..1.0).contains(&q) {
                fail(EXIT_USAGE, format!("q must lie in [0, 1), got {q}"));
            }
            params = params.with_q(q);
        }
        params
    }

    fn config_at(&self, d: usize, p: f64, r: f64, seed: u64) -> SimConfig {
        let cfg = SimConfig {
            d,
            rounds: self.rounds.unwrap_or(d),
            scheme: self.scheme,
            decoder: self.decoder,
            params: self.params_at(p, r),
            seed,
            min_trials: self.min_trials,
            max_trials: self.max_trials,
            min_failures: self.min_failures,
        };
        if let Err(e) = cfg.validate() {
            fail(EXIT_USAGE, e.to_string());
        }
        cfg
    }
}

// ---------------------------------------------------------------------
// validate-weights
// ---------------------------------------------------------------------

fn ratio_str(r: Ratio<i64>) -> String {
    if r.is_integer() {
        format!("{}", r.numer())
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn term_str(p_coef: Ratio<i64>, has_q: bool) -> String {
    let mut s = format!("{}*p", ratio_str(p_coef));
    if has_q {
        s.push_str(" + q");
    }
    s
}

fn cmd_validate_weights() {
    let lat = ToricLattice::new(3);
    // Translation symmetry: the enumeration sums identical contributions
    // over every check column, so per-edge values are total mass / checks.
    let n_checks = Ratio::from_integer(lat.n_checks() as i64);
    let mut mismatches = 0usize;
    let mut checked = 0usize;
    emit("closed-form weight table vs single-fault enumeration (d=3, probe cycle 2 of 5):");
    for scheme in Scheme::ALL {
        let masses = enumerate_single_fault_classes(&lat, scheme, 5, 2);
        for kind in [CheckKind::Plaquette, CheckKind::Star] {
            for class in EdgeClass::STATIC {
                let zero = Ratio::new(0, 1);
                let derived_p =
                    masses.p_mass.get(&(kind, class)).copied().unwrap_or(zero) / n_checks;
                let derived_q =
                    masses.q_mass.get(&(kind, class)).copied().unwrap_or(zero) / n_checks;
                let table_p = class_p_coefficient(scheme, class);
                let table_q = if class_includes_q(class) {
                    Ratio::new(1, 1)
                } else {
                    zero
                };
                let ok = derived_p == table_p && derived_q == table_q;
                checked += 1;
                if !ok {
                    mismatches += 1;
                }
                emit(format!(
                    "  {:<11} {:<9} class {}: derived {:<14} table {:<14} {}",
                    scheme.name(),
                    match kind {
                        CheckKind::Plaquette => "plaquette",
                        CheckKind::Star => "star",
                    },
                    class.letter(),
                    term_str(derived_p, derived_q != zero),
                    term_str(table_p, table_q != zero),
                    if ok { "ok" } else { "MISMATCH" }
                ));
            }
        }
    }
    emit(format!(
        "validate-weights: {checked} entries checked, {mismatches} mismatches"
    ));
    if mismatches > 0 {
        std::process::exit(EXIT_MISMATCH);
    }
}

// ---------------------------------------------------------------------
// run / sweep
// ---------------------------------------------------------------------

fn print_record(rec: &PointRecord, stats: &RunStats) {
    emit(format!(
        "d={} scheme={} decoder={} p={} q={} r={} s={} trials={} x_fail={} z_fail={} any_fail={} rate={:.6} ci=[{:.6}, {:.6}] heralds={} seed={}{}",
        rec.d,
        rec.scheme,
        rec.decoder,
        rec.p,
        rec.q,
        rec.r,
        rec.s,
        rec.trials,
        rec.x_fail,
        rec.z_fail,
        rec.any_fail,
        rec.any_rate(),
        rec.ci_lo,
        rec.ci_hi,
        stats.heralds,
        rec.seed,
        if stats.under_sampled {
            " UNDER-SAMPLED"
        } else {
            ""
        }
    ));
}

fn cmd_run(args: RunArgs) {
    let conf = args
        .sim
        .config
        .as_deref()
        .map(|p| load_config(p, false))
        .unwrap_or_default();
    let res = Resolved::merge(&args.sim, &conf);
    let cfg = res.config_at(res.d, res.p, res.r, res.seed);
    let stats = match run(&cfg) {
        Ok(s) => s,
        Err(e) => fail(EXIT_USAGE, e.to_string()),
    };
    let rec = PointRecord::from_stats(&cfg, &stats);
    print_record(&rec, &stats);
    if let Some(out) = &args.out {
        if let Err(e) = append_csv(out, &rec) {
            fail(analysis_code(&e), e.to_string());
        }
    }
    if stats.under_sampled {
        std::process::exit(EXIT_UNDER_SAMPLED);
    }
}

/// Stable per-cell seed: master seed mixed with the canonical cell key via
/// FNV-1a, so resuming or reordering a sweep never changes a cell's stream.
fn cell_seed(master: u64, key: &str) -> u64 {
    let mut h = 0xcbf29ce484222325u64 ^ master.wrapping_mul(0x9e3779b97f4a7c15);
    for b in key.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn cmd_sweep(args: SweepArgs) {
    let conf = args
        .sim
        .config
        .as_deref()
        .map(|p| load_config(p, true))
        .unwrap_or_default();
    let res = Resolved::merge_sweep(&args, &conf);
    let out = args
        .out
        .clone()
        .or_else(|| conf.get("out").map(PathBuf::from))
        .unwrap_or_else(|| fail(EXIT_USAGE, "missing required setting `out` (CSV path)"));

    // Resume: cells already present in the output are skipped.
    let mut done: BTreeSet<(usize, String, String, String, String, String, String)> =
        BTreeSet::new();
    if out.exists() && std::fs::metadata(&out).map(|m| m.len()).unwrap_or(0) > 0 {
        match read_csv(&out) {
            Ok(existing) => {
                for rec in existing {
                    done.insert(rec.cell_key());
                }
            }
            Err(e) => fail(
                analysis_code(&e),
                format!("existing output {}: {e}", out.display()),
            ),
        }
    } else if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            if let Err(e) = std::fs::create_dir_all(dir) {
                fail(EXIT_USAGE, format!("cannot create {}: {e}", dir.display()));
            }
        }
    }

    let (sweep, grid_p, grid_r, d_list) = res;
    let mut any_under_sampled = false;
    let mut ran = 0usize;
    let mut skipped = 0usize;
    for &d in &d_list {
        for &r in &grid_r {
            for &p in &grid_p {
                let key = analysis::cell_key(
                    d,
                    sweep.scheme.name(),
                    decoder_name(sweep.decoder),
                    p,
                    sweep.q.unwrap_or(p),
                    r,
                    sweep.s,
                );
                let key_str = format!(
                    "{}|{}|{}|{}|{}|{}|{}",
                    key.0, key.1, key.2, key.3, key.4, key.5, key.6
                );
                if done.contains(&key) {
                    skipped += 1;
                    continue;
                }
                let cfg = sweep.config_at(d, p, r, cell_seed(sweep.seed, &key_str));
                let stats = match run(&cfg) {
                    Ok(s) => s,
                    Err(e) => fail(EXIT_USAGE, e.to_string()),
                };
                any_under_sampled |= stats.under_sampled;
                let rec = PointRecord::from_stats(&cfg, &stats);
                print_record(&rec, &stats);
                if let Err(e) = append_csv(&out, &rec) {
                    fail(analysis_code(&e), e.to_string());
                }
                ran += 1;
            }
        }
    }
    // An empty grid still leaves a valid header-only CSV behind.
    if ran == 0 && skipped == 0 && !out.exists() {
        if let Err(e) = analysis::write_csv(&out, &[]) {
            fail(analysis_code(&e), e.to_string());
        }
    }
    eprintln!(
        "sweep: {ran} cells run, {skipped} skipped (already complete), output {}",
        out.display()
    );
    if any_under_sampled {
        std::process::exit(EXIT_UNDER_SAMPLED);
    }
}

fn decoder_name(k: DecoderKind) -> &'static str {
    match k {
        DecoderKind::Standard => "standard",
        DecoderKind::Heralded => "heralded",
    }
}

impl Resolved {
    /// Sweep variant of `merge`: grids come from flags/config instead of a
    /// single (d, p, r).
    fn merge_sweep(args: &SweepArgs, conf: &BTreeMap<String, String>) -> (Resolved, Vec<f64>, Vec<f64>, Vec<usize>) {
        // `d` and `p` are not required for sweeps; satisfy `merge` with
        // placeholders, the grids below take precedence.
        let mut flags = args.sim.clone();
        flags.d = flags.d.or(Some(3));
        flags.p = flags.p.or(Some(1e-3));
        let res = Resolved::merge(&flags, conf);

        let d_list: Vec<usize> = if !args.d_list.is_empty() {
            args.d_list.clone()
        } else if let Some(v) = conf.get("d_list") {
            parse_list(v, "d_list")
        } else if let Some(d) = args.sim.d {
            vec![d]
        } else {
            fail(EXIT_USAGE, "missing required setting `d_list`")
        };
        let p_start = args
            .p_start
            .or_else(|| conf_parse(conf, "p_start"))
            .unwrap_or_else(|| fail(EXIT_USAGE, "missing required setting `p_start`"));
        let p_stop = args
            .p_stop
            .or_else(|| conf_parse(conf, "p_stop"))
            .unwrap_or(p_start);
        let p_step = args
            .p_step
            .or_else(|| conf_parse(conf, "p_step"))
            .unwrap_or_else(|| fail(EXIT_USAGE, "missing required setting `p_step`"));
        if p_step <= 0.0 || p_stop < p_start {
            fail(EXIT_USAGE, "p grid requires p_step > 0 and p_stop >= p_start");
        }
        let r_list: Vec<f64> = if !args.r_list.is_empty() {
            args.r_list.clone()
        } else if let Some(v) = conf.get("r_list") {
            parse_list(v, "r_list")
        } else {
            vec![args.sim.r.or_else(|| conf_parse(conf, "r")).unwrap_or(0.0)]
        };
        // An explicitly empty `d_list =` in the config means an empty grid;
        // the sweep then just leaves a header-only CSV behind.
        (res, analysis::grid(p_start, p_stop, p_step), r_list, d_list)
    }
}

fn parse_list<T: std::str::FromStr>(v: &str, key: &str) -> Vec<T>
where
    T::Err: std::fmt::Display,
{
    if v.trim().is_empty() {
        return vec![];
    }
    v.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<T>()
                .unwrap_or_else(|e| fail(EXIT_USAGE, format!("config key `{key}`: {e}")))
        })
        .collect()
}

// ---------------------------------------------------------------------
// threshold / fit
// ---------------------------------------------------------------------

/// Select the unique (scheme, decoder) pair after optional filtering,
/// erroring out when the CSV is ambiguous.
fn filter_records(
    records: &[PointRecord],
    scheme: &Option<String>,
    decoder: &Option<String>,
    r: Option<f64>,
) -> Vec<PointRecord> {
    let kept: Vec<PointRecord> = records
        .iter()
        .filter(|rec| scheme.as_deref().is_none_or(|s| rec.scheme == s))
        .filter(|rec| decoder.as_deref().is_none_or(|s| rec.decoder == s))
        .filter(|rec| r.is_none_or(|r| rec.r == r))
        .cloned()
        .collect();
    let mut pairs: Vec<(String, String)> = kept
        .iter()
        .map(|rec| (rec.scheme.clone(), rec.decoder.clone()))
        .collect();
    pairs.sort();
    pairs.dedup();
    if pairs.len() > 1 {
        fail(
            EXIT_MISMATCH,
            format!(
                "CSV mixes {} (scheme, decoder) combinations; filter with --scheme/--decoder",
                pairs.len()
            ),
        );
    }
    kept
}

fn curve_of(records: &[PointRecord], d: usize) -> Vec<PointRecord> {
    let mut out: Vec<PointRecord> = records.iter().filter(|rec| rec.d == d).cloned().collect();
    out.sort_by(|a, b| a.p.total_cmp(&b.p));
    for w in out.windows(2) {
        if w[0].p == w[1].p && w[0].r == w[1].r {
            fail(
                EXIT_MISMATCH,
                format!("duplicate rows for d={d}, p={} — clean the CSV", w[0].p),
            );
        }
    }
    out
}

fn cmd_threshold(args: ThresholdArgs) {
    let records = match read_csv(&args.csv) {
        Ok(recs) => recs,
        Err(e) => fail(analysis_code(&e), e.to_string()),
    };
    let kept = filter_records(&records, &args.scheme, &args.decoder, args.r);
    let (d_small, d_large) = distance_pair(&kept, args.d_small, args.d_large);
    let small = curve_of(&kept, d_small);
    let large = curve_of(&kept, d_large);
    if small.is_empty() || large.is_empty() {
        fail(
            EXIT_MISMATCH,
            format!("no rows for d={d_small} and/or d={d_large} after filtering"),
        );
    }
    match analysis::threshold_with_ci(&small, &large, args.resamples, args.bootstrap_seed) {
        Ok(c) => {
            emit(format!(
                "threshold d={}x{}: p_th={:.6} ci=[{:.6}, {:.6}] resamples={} yield={:.2}",
                d_small, d_large, c.p_th, c.ci_lo, c.ci_hi, args.resamples, c.bootstrap_yield
            ));
        }
        Err(e) => fail(analysis_code(&e), e.to_string()),
    }
}

/// Crossover per distinct r value, using the (d_small, d_large) pair.
fn thresholds_by_r(
    records: &[PointRecord],
    d_small: usize,
    d_large: usize,
    resamples: usize,
    seed: u64,
) -> Vec<(f64, Result<Crossover, AnalysisError>)> {
    let mut rs: Vec<f64> = records.iter().map(|rec| rec.r).collect();
    rs.sort_by(f64::total_cmp);
    rs.dedup();
    rs.iter()
        .map(|&r| {
            let at_r: Vec<PointRecord> = records.iter().filter(|rec| rec.r == r).cloned().collect();
            let small = curve_of(&at_r, d_small);
            let large = curve_of(&at_r, d_large);
            if small.is_empty() || large.is_empty() {
                return (
                    r,
                    Err(AnalysisError::GridMismatch { got: 0 }),
                );
            }
            (r, analysis::threshold_with_ci(&small, &large, resamples, seed))
        })
        .collect()
}

fn distance_pair(records: &[PointRecord], args_small: Option<usize>, args_large: Option<usize>) -> (usize, usize) {
    let mut ds: Vec<usize> = records.iter().map(|rec| rec.d).collect();
    ds.sort();
    ds.dedup();
    let d_small = args_small.unwrap_or_else(|| *ds.first().unwrap_or(&0));
    let d_large = args_large.unwrap_or_else(|| *ds.last().unwrap_or(&0));
    if d_small >= d_large {
        fail(
            EXIT_MISMATCH,
            format!("need two distinct distances, got d_small={d_small}, d_large={d_large}"),
        );
    }
    (d_small, d_large)
}

fn cmd_fit(args: FitArgs) {
    let records = match read_csv(&args.csv) {
        Ok(recs) => recs,
        Err(e) => fail(analysis_code(&e), e.to_string()),
    };
    let kept = filter_records(&records, &args.scheme, &args.decoder, None);
    if kept.is_empty() {
        fail(EXIT_MISMATCH, "no rows left after filtering");
    }
    let want_ab = matches!(args.what.as_str(), "alpha-beta" | "both");
    let want_gamma = matches!(args.what.as_str(), "gamma" | "both");
    if !want_ab && !want_gamma {
        fail(
            EXIT_USAGE,
            format!("--what must be alpha-beta, gamma, or both; got `{}`", args.what),
        );
    }

    let mut report = String::new();
    let mut thresholds: Vec<(f64, Crossover)> = vec![];
    let mut fit: Option<ThresholdFit> = None;
    if want_ab {
        let (d_small, d_large) = distance_pair(&kept, args.d_small, args.d_large);
        for (r, res) in thresholds_by_r(&kept, d_small, d_large, args.resamples, args.bootstrap_seed)
        {
            match res {
                Ok(c) => thresholds.push((r, c)),
                Err(e) => eprintln!("note: r={r}: {e}"),
            }
        }
        if thresholds.len() < 4 {
            fail(
                EXIT_MISMATCH,
                format!(
                    "threshold decay fit needs crossovers at >= 4 r values, got {}",
                    thresholds.len()
                ),
            );
        }
        let pts: Vec<(f64, f64)> = thresholds.iter().map(|&(r, c)| (r, c.p_th)).collect();
        match analysis::fit_threshold_decay(&pts, 4) {
            Ok(f) => fit = Some(f),
            Err(e) => fail(analysis_code(&e), e.to_string()),
        }
    }

    let mut gammas = vec![];
    if want_gamma {
        let mut groups: Vec<(usize, f64)> = kept.iter().map(|rec| (rec.d, rec.r)).collect();
        groups.sort_by(|a, b| a.partial_cmp(b).unwrap());
        groups.dedup();
        for (d, r) in groups {
            let pts: Vec<(f64, f64)> = kept
                .iter()
                .filter(|rec| rec.d == d && rec.r == r)
                .map(|rec| (rec.p, rec.any_rate()))
                .collect();
            match analysis::fit_power_law(d, &pts, 4) {
                Ok(f) => gammas.push(f),
                Err(e) => fail(
                    analysis_code(&e),
                    format!("power-law fit for d={d}, r={r}: {e}"),
                ),
            }
        }
        if gammas.is_empty() {
            fail(EXIT_MISMATCH, "no (d, r) groups available for power-law fits");
        }
    }

    report.push_str(&analysis::render_fit_report(&thresholds, fit.as_ref(), &gammas));
    emit(report.trim_end());
    if let Some(path) = &args.report {
        if let Err(e) = analysis::write_report(path, &report) {
            fail(analysis_code(&e), e.to_string());
        }
    }
}

// ---------------------------------------------------------------------
// plot
// ---------------------------------------------------------------------

fn cmd_plot(args: PlotArgs) {
    let records = match read_csv(&args.csv) {
        Ok(recs) => recs,
        Err(e) => fail(analysis_code(&e), e.to_string()),
    };
    if let Err(e) = std::fs::create_dir_all(&args.out_dir) {
        fail(EXIT_USAGE, format!("cannot create {}: {e}", args.out_dir.display()));
    }

    let mut outputs = vec![];
    for (name, log) in [("failure-vs-p-linear.svg", false), ("failure-vs-p-log.svg", true)] {
        let path = args.out_dir.join(name);
        let svg = failure_rate_figure(&records, log).render();
        if let Err(e) = std::fs::write(&path, svg) {
            fail(EXIT_USAGE, format!("cannot write {}: {e}", path.display()));
        }
        outputs.push(path);
    }

    // Threshold-vs-r: computed per r whenever at least two distances share
    // a usable crossover; otherwise the figure is empty but still valid.
    let mut points: Vec<(f64, Crossover)> = vec![];
    {
        let mut ds: Vec<usize> = records.iter().map(|rec| rec.d).collect();
        ds.sort();
        ds.dedup();
        if ds.len() >= 2 {
            let (d_small, d_large) = (ds[ds.len() - 2], ds[ds.len() - 1]);
            for (r, res) in
                thresholds_by_r(&records, d_small, d_large, args.resamples, args.bootstrap_seed)
            {
                if let Ok(c) = res {
                    points.push((r, c));
                }
            }
        }
    }
    let fit = if points.len() >= 4 {
        analysis::fit_threshold_decay(
            &points.iter().map(|&(r, c)| (r, c.p_th)).collect::<Vec<_>>(),
            4,
        )
        .ok()
    } else {
        None
    };
    let path = args.out_dir.join("threshold-vs-r.svg");
    let svg = threshold_figure(&points, fit.as_ref()).render();
    if let Err(e) = std::fs::write(&path, svg) {
        fail(EXIT_USAGE, format!("cannot write {}: {e}", path.display()));
    }
    outputs.push(path);

    for p in outputs {
        emit(format!("wrote {}", p.display()));
    }
}

