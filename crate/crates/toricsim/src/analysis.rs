//! Post-processing of Monte-Carlo results: confidence intervals, threshold
//! crossover estimation, decay-model fits, and the CSV interchange format.
//!
//! Thresholds are estimated as the crossing point of the failure-rate
//! curves of two code distances: below threshold the larger code wins,
//! above it loses, so the sign of the log-rate difference flips at the
//! threshold.  The crossing is located by linear interpolation of that
//! log difference between adjacent grid points, and its confidence
//! interval comes from a percentile bootstrap over binomial resamples of
//! every curve point.

use crate::montecarlo::{RunStats, SimConfig};
use crate::noise::trial_rng;
use rand::Rng;
use std::io::Write as _;
use std::path::Path;
use thiserror::Error;

/// Normal-approximation binomial confidence interval (95%, ±1.96σ),
/// clamped to [0, 1].
pub fn binomial_ci(failures: u64, trials: u64) -> (f64, f64) {
    assert!(failures <= trials && trials > 0);
    let rate = failures as f64 / trials as f64;
    let half = 1.96 * (rate * (1.0 - rate) / trials as f64).sqrt();
    ((rate - half).max(0.0), (rate + half).min(1.0))
}

/// One simulated grid cell, as stored in result CSVs.
#[derive(Debug, Clone, PartialEq)]
pub struct PointRecord {
    pub d: usize,
    pub scheme: String,
    pub decoder: String,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub s: f64,
    pub trials: u64,
    pub x_fail: u64,
    pub z_fail: u64,
    pub any_fail: u64,
    /// 95% binomial CI on the any-failure rate.
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub seed: u64,
}

pub const CSV_HEADER: [&str; 14] = [
    "d", "scheme", "decoder", "p", "q", "r", "s", "trials", "x_fail", "z_fail", "any_fail",
    "ci_lo", "ci_hi", "seed",
];

impl PointRecord {
    pub fn from_stats(cfg: &SimConfig, stats: &RunStats) -> PointRecord {
        let (ci_lo, ci_hi) = binomial_ci(stats.any_failures, stats.trials);
        PointRecord {
            d: cfg.d,
            scheme: cfg.scheme.name().to_string(),
            decoder: match cfg.decoder {
                crate::decoder::DecoderKind::Standard => "standard".to_string(),
                crate::decoder::DecoderKind::Heralded => "heralded".to_string(),
            },
            p: cfg.params.p,
            q: cfg.params.q,
            r: cfg.params.r,
            s: cfg.params.s,
            trials: stats.trials,
            x_fail: stats.x_failures,
            z_fail: stats.z_failures,
            any_fail: stats.any_failures,
            ci_lo,
            ci_hi,
            seed: cfg.seed,
        }
    }

    pub fn any_rate(&self) -> f64 {
        self.any_fail as f64 / self.trials as f64
    }

    /// The sweep-cell identity used for resuming: everything except the
    /// observed counts.
    pub fn cell_key(&self) -> CellKey {
        cell_key(
            self.d,
            &self.scheme,
            &self.decoder,
            self.p,
            self.q,
            self.r,
            self.s,
        )
    }
}

/// Identity of one sweep cell; grid coordinates are canonicalized through
/// their shortest round-tripping decimal form so re-parsed CSV values
/// compare equal to freshly computed ones.
pub type CellKey = (usize, String, String, String, String, String, String);

pub fn cell_key(d: usize, scheme: &str, decoder: &str, p: f64, q: f64, r: f64, s: f64) -> CellKey {
    (
        d,
        scheme.to_string(),
        decoder.to_string(),
        fkey(p),
        fkey(q),
        fkey(r),
        fkey(s),
    )
}

/// Canonical string form of a grid coordinate (f64 `Display` is the
/// shortest round-tripping representation, so equal values always produce
/// equal keys).
fn fkey(v: f64) -> String {
    format!("{v}")
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV row {row}: {msg}")]
    Csv { row: usize, msg: String },
    #[error("curves never cross: no crossover in range")]
    NoCrossover,
    #[error("curves coincide on the grid: degenerate crossover range")]
    DegenerateRange,
    #[error("need at least {needed} usable points, got {got}")]
    UnderDetermined { needed: usize, got: usize },
    #[error("bootstrap unstable: only {ok} of {total} resamples produced a crossover")]
    UnstableBootstrap { ok: usize, total: usize },
    #[error("curves share only {got} grid points; need at least 2")]
    GridMismatch { got: usize },
}

// ---------------------------------------------------------------------
// CSV layer
// ---------------------------------------------------------------------

pub fn write_csv(path: &Path, records: &[PointRecord]) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    w.write_record(CSV_HEADER).map_err(csv_io)?;
    for rec in records {
        write_row(&mut w, rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Append one record, writing the header first if the file is new or
/// empty.  Used by resumable sweeps so partial results survive interrupts.
pub fn append_csv(path: &Path, rec: &PointRecord) -> Result<(), AnalysisError> {
    let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    let mut w = csv::WriterBuilder::new().from_writer(file);
    if fresh {
        w.write_record(CSV_HEADER).map_err(csv_io)?;
    }
    write_row(&mut w, rec)?;
    w.flush()?;
    Ok(())
}

fn write_row<W: std::io::Write>(
    w: &mut csv::Writer<W>,
    rec: &PointRecord,
) -> Result<(), AnalysisError> {
    w.write_record([
        rec.d.to_string(),
        rec.scheme.clone(),
        rec.decoder.clone(),
        fkey(rec.p),
        fkey(rec.q),
        fkey(rec.r),
        fkey(rec.s),
        rec.trials.to_string(),
        rec.x_fail.to_string(),
        rec.z_fail.to_string(),
        rec.any_fail.to_string(),
        fkey(rec.ci_lo),
        fkey(rec.ci_hi),
        rec.seed.to_string(),
    ])
    .map_err(csv_io)
}

fn csv_io(e: csv::Error) -> AnalysisError {
    AnalysisError::Io(std::io::Error::other(e))
}

pub fn read_csv(path: &Path) -> Result<Vec<PointRecord>, AnalysisError> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(csv_io)?;
    {
        let headers = rd.headers().map_err(csv_io)?;
        let got: Vec<&str> = headers.iter().collect();
        if got != CSV_HEADER {
            return Err(AnalysisError::Csv {
                row: 1,
                msg: format!("unexpected header {got:?}"),
            });
        }
    }
    let mut out = vec![];
    for (i, rec) in rd.records().enumerate() {
        let row = i + 2; // 1-based, after the header line
        let rec = rec.map_err(|e| AnalysisError::Csv {
            row,
            msg: e.to_string(),
        })?;
        if rec.len() != CSV_HEADER.len() {
            return Err(AnalysisError::Csv {
                row,
                msg: format!("expected {} fields, got {}", CSV_HEADER.len(), rec.len()),
            });
        }
        let field = |idx: usize| rec.get(idx).unwrap();
        macro_rules! parse {
            ($idx:expr, $ty:ty) => {
                field($idx)
                    .parse::<$ty>()
                    .map_err(|e| AnalysisError::Csv {
                        row,
                        msg: format!("field '{}': {e}", CSV_HEADER[$idx]),
                    })?
            };
        }
        let pr = PointRecord {
            d: parse!(0, usize),
            scheme: field(1).to_string(),
            decoder: field(2).to_string(),
            p: parse!(3, f64),
            q: parse!(4, f64),
            r: parse!(5, f64),
            s: parse!(6, f64),
            trials: parse!(7, u64),
            x_fail: parse!(8, u64),
            z_fail: parse!(9, u64),
            any_fail: parse!(10, u64),
            ci_lo: parse!(11, f64),
            ci_hi: parse!(12, f64),
            seed: parse!(13, u64),
        };
        if pr.trials == 0 || pr.any_fail > pr.trials {
            return Err(AnalysisError::Csv {
                row,
                msg: format!(
                    "inconsistent counts: any_fail {} of {} trials",
                    pr.any_fail, pr.trials
                ),
            });
        }
        out.push(pr);
    }
    Ok(out)
}

// ---------------------------------------------------------------------
// Threshold crossover
// ---------------------------------------------------------------------

/// Crossing of two failure-rate curves sampled on a shared `p` grid.
///
/// `a` and `b` are `(p, rate)` lists for the smaller and larger code
/// distance.  Points where either rate is zero carry no log-space
/// information and are skipped.
pub fn crossover_from_curves(a: &[(f64, f64)], b: &[(f64, f64)]) -> Result<f64, AnalysisError> {
    assert_eq!(a.len(), b.len());
    let mut deltas: Vec<(f64, f64)> = vec![];
    for (&(pa, ra), &(pb, rb)) in a.iter().zip(b) {
        assert!(
            (pa - pb).abs() <= 1e-12 * pa.abs().max(1.0),
            "curves sampled on different grids"
        );
        if ra > 0.0 && rb > 0.0 {
            deltas.push((pa, (rb.ln() - ra.ln())));
        }
    }
    if deltas.len() < 2 {
        return Err(AnalysisError::UnderDetermined {
            needed: 2,
            got: deltas.len(),
        });
    }
    if deltas.iter().all(|&(_, dl)| dl.abs() < 1e-12) {
        return Err(AnalysisError::DegenerateRange);
    }
    // Exact zero on a grid point is a crossing at that point.
    for w in deltas.windows(2) {
        let (p0, d0) = w[0];
        let (p1, d1) = w[1];
        if d0 == 0.0 {
            return Ok(p0);
        }
        if d0 < 0.0 && d1 >= 0.0 {
            return Ok(p0 + (0.0 - d0) * (p1 - p0) / (d1 - d0));
        }
    }
    if deltas.last().unwrap().1 == 0.0 {
        return Ok(deltas.last().unwrap().0);
    }
    Err(AnalysisError::NoCrossover)
}

/// Threshold estimate with a bootstrap confidence interval.
#[derive(Debug, Clone, Copy)]
pub struct Crossover {
    pub p_th: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Fraction of bootstrap resamples that produced a crossover.
    pub bootstrap_yield: f64,
}

/// Estimate the threshold from two distances' records (each list holds one
/// curve, sorted or not) and attach a percentile-bootstrap CI
/// (`resamples` binomial resamples of every point, 2.5%/97.5%
/// percentiles).
pub fn threshold_with_ci(
    small_d: &[PointRecord],
    large_d: &[PointRecord],
    resamples: usize,
    seed: u64,
) -> Result<Crossover, AnalysisError> {
    let mut a: Vec<&PointRecord> = small_d.iter().collect();
    let mut b: Vec<&PointRecord> = large_d.iter().collect();
    a.sort_by(|x, y| x.p.total_cmp(&y.p));
    b.sort_by(|x, y| x.p.total_cmp(&y.p));
    // Intersect the grids.
    let mut pairs: Vec<(&PointRecord, &PointRecord)> = vec![];
    for ra in &a {
        if let Some(rb) = b.iter().find(|rb| rb.p == ra.p) {
            pairs.push((ra, rb));
        }
    }
    if pairs.len() < 2 {
        return Err(AnalysisError::GridMismatch { got: pairs.len() });
    }

    let curve =
        |side: &dyn Fn(&(&PointRecord, &PointRecord)) -> (f64, f64, u64)| -> Vec<(f64, f64)> {
            pairs
                .iter()
                .map(|pair| {
                    let (p, rate, _) = side(pair);
                    (p, rate)
                })
                .collect()
        };
    let obs_a = curve(&|(ra, _)| (ra.p, ra.any_rate(), ra.trials));
    let obs_b = curve(&|(_, rb)| (rb.p, rb.any_rate(), rb.trials));
    let p_th = crossover_from_curves(&obs_a, &obs_b)?;

    // Percentile bootstrap: resample every point's failure count from the
    // observed rate, re-estimate, and take the central 95% of successes.
    let mut rng = trial_rng(seed, 0);
    let mut estimates = vec![];
    for _ in 0..resamples {
        let resample = |rec: &PointRecord, rng: &mut crate::noise::TrialRng| {
            let mut k = 0u64;
            let rate = rec.any_rate();
            for _ in 0..rec.trials {
                if rng.gen_bool(rate) {
                    k += 1;
                }
            }
            k as f64 / rec.trials as f64
        };
        let mut ca = vec![];
        let mut cb = vec![];
        for (ra, rb) in &pairs {
            ca.push((ra.p, resample(ra, &mut rng)));
            cb.push((rb.p, resample(rb, &mut rng)));
        }
        if let Ok(est) = crossover_from_curves(&ca, &cb) {
            estimates.push(est);
        }
    }
    if estimates.len() < resamples / 2 {
        return Err(AnalysisError::UnstableBootstrap {
            ok: estimates.len(),
            total: resamples,
        });
    }
    estimates.sort_by(f64::total_cmp);
    let pick = |q: f64| estimates[((estimates.len() - 1) as f64 * q).round() as usize];
    Ok(Crossover {
        p_th,
        ci_lo: pick(0.025),
        ci_hi: pick(0.975),
        bootstrap_yield: estimates.len() as f64 / resamples as f64,
    })
}

// ---------------------------------------------------------------------
// Fits
// ---------------------------------------------------------------------

/// Ordinary least squares for `y = intercept + slope * x`; returns
/// `(slope, intercept, residual sum of squares)`.
fn linear_lsq(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    (slope, intercept, rss)
}

/// Fit of the threshold decay model `p_th(r) = alpha / (1 + beta r)`.
///
/// The model is linear in `1 / p_th`, so the fit is ordinary least squares
/// on the reciprocal: `1/p_th = 1/alpha + (beta/alpha) r`.
#[derive(Debug, Clone)]
pub struct ThresholdFit {
    pub alpha: f64,
    pub beta: f64,
    /// Residual sum of squares in `p_th` space.
    pub residual_ss: f64,
    /// The fitted `(r, p_th)` inputs.
    pub points: Vec<(f64, f64)>,
}

impl ThresholdFit {
    pub fn model(&self, r: f64) -> f64 {
        self.alpha / (1.0 + self.beta * r)
    }

    /// The idealized comparison curve with the same alpha and the fixed
    /// slope 3/4 (a leaked qubit acting as an ordinary depolarizing fault).
    pub fn idealized(&self, r: f64) -> f64 {
        self.alpha / (1.0 + 0.75 * r)
    }
}

pub fn fit_threshold_decay(points: &[(f64, f64)], min_points: usize) -> Result<ThresholdFit, AnalysisError> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(_, pth)| pth > 0.0)
        .collect();
    if usable.len() < min_points.max(2) {
        return Err(AnalysisError::UnderDetermined {
            needed: min_points.max(2),
            got: usable.len(),
        });
    }
    let xs: Vec<f64> = usable.iter().map(|&(r, _)| r).collect();
    let ys: Vec<f64> = usable.iter().map(|&(_, pth)| 1.0 / pth).collect();
    let (slope, intercept, _) = linear_lsq(&xs, &ys);
    if intercept <= 0.0 {
        return Err(AnalysisError::UnderDetermined {
            needed: min_points.max(2),
            got: usable.len(),
        });
    }
    let alpha = 1.0 / intercept;
    let beta = slope * alpha;
    let residual_ss = usable
        .iter()
        .map(|&(r, pth)| {
            let e = pth - alpha / (1.0 + beta * r);
            e * e
        })
        .sum();
    Ok(ThresholdFit {
        alpha,
        beta,
        residual_ss,
        points: usable,
    })
}

/// Per-distance sub-threshold power law `rate = A p^(gamma d)`, fitted as a
/// line in log-log space.
#[derive(Debug, Clone)]
pub struct PowerLawFit {
    pub d: usize,
    /// `ln A`.
    pub log_a: f64,
    /// Slope of `ln rate` vs `ln p` (equals `gamma * d`).
    pub slope: f64,
    pub gamma: f64,
    /// Residual sum of squares in log space.
    pub residual_ss: f64,
    pub n_points: usize,
}

pub fn fit_power_law(
    d: usize,
    points: &[(f64, f64)],
    min_points: usize,
) -> Result<PowerLawFit, AnalysisError> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(p, rate)| p > 0.0 && rate > 0.0)
        .collect();
    if usable.len() < min_points.max(2) {
        return Err(AnalysisError::UnderDetermined {
            needed: min_points.max(2),
            got: usable.len(),
        });
    }
    let xs: Vec<f64> = usable.iter().map(|&(p, _)| p.ln()).collect();
    let ys: Vec<f64> = usable.iter().map(|&(_, rate)| rate.ln()).collect();
    let (slope, intercept, residual_ss) = linear_lsq(&xs, &ys);
    Ok(PowerLawFit {
        d,
        log_a: intercept,
        slope,
        gamma: slope / d as f64,
        residual_ss,
        n_points: usable.len(),
    })
}

/// Inclusive arithmetic grid `start, start+step, …` up to `stop` (within
/// half a step, so binary rounding never drops the endpoint).
pub fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    assert!(step > 0.0, "grid step must be positive");
    assert!(stop >= start, "grid stop below start");
    let n = ((stop - start) / step + 0.5).floor() as usize;
    (0..=n).map(|k| start + k as f64 * step).collect()
}

/// Write a short human-readable report line per fitted quantity.
pub fn render_fit_report(
    thresholds: &[(f64, Crossover)],
    fit: Option<&ThresholdFit>,
    gammas: &[PowerLawFit],
) -> String {
    let mut out = String::new();
    for (r, c) in thresholds {
        out.push_str(&format!(
            "threshold r={r}: p_th={:.6} ci=[{:.6}, {:.6}] (bootstrap yield {:.2})\n",
            c.p_th, c.ci_lo, c.ci_hi, c.bootstrap_yield
        ));
    }
    if let Some(f) = fit {
        out.push_str(&format!(
            "decay fit: alpha={:.6} beta={:.4} residual_ss={:.3e}\n",
            f.alpha, f.beta, f.residual_ss
        ));
        for &(r, pth) in &f.points {
            out.push_str(&format!(
                "  r={r}: measured={pth:.6} model={:.6} idealized(beta=0.75)={:.6}\n",
                f.model(r),
                f.idealized(r)
            ));
        }
    }
    for g in gammas {
        out.push_str(&format!(
            "power law d={}: slope={:.4} gamma={:.4} ln_A={:.4} residual_ss={:.3e} ({} points)\n",
            g.d, g.slope, g.gamma, g.log_a, g.residual_ss, g.n_points
        ));
    }
    out
}

/// Convenience: append `lines` to a plain-text report file.
pub fn write_report(path: &Path, text: &str) -> Result<(), AnalysisError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}
