//! Monte-Carlo estimation of logical error rates, CSV persistence and a
//! timing benchmark.
//!
//! Shot `i` draws its error from [`shot_rng`]`(seed, i)`, so results do not
//! depend on how shots are spread over threads. Shots are decoded in
//! fixed-size batches and the stopping rule is applied in shot order, which
//! makes the set of counted shots identical to a serial run.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::code::{build_code, SurfaceCode};
use crate::decoders::{decode, is_success, DecoderKind, DecoderParams};
use crate::noise::{shot_rng, NoiseModel};
use crate::{Error, Result};

/// Shots decoded between two checks of the stopping rule.
const BATCH: u64 = 256;

/// Default hard cap on shots, as a multiple of the shot target.
pub const HARD_CAP_FACTOR: u64 = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub decoder: DecoderKind,
    pub d: usize,
    pub epsilon: f64,
    pub params: DecoderParams,
    /// Minimum number of shots.
    pub shots: u64,
    /// Minimum number of failures before stopping.
    pub max_failures: u64,
    /// Shots are never run past this count; defaults to `10 * shots`.
    pub hard_cap: Option<u64>,
    pub seed: u64,
    /// Worker threads; `0` uses rayon's default.
    pub threads: usize,
}

impl ExperimentConfig {
    pub fn new(decoder: DecoderKind, d: usize, epsilon: f64, params: DecoderParams) -> Self {
        ExperimentConfig {
            decoder,
            d,
            epsilon,
            params,
            shots: 1000,
            max_failures: 100,
            hard_cap: None,
            seed: 0,
            threads: 0,
        }
    }

    pub fn hard_cap(&self) -> u64 {
        self.hard_cap.unwrap_or(self.shots.saturating_mul(HARD_CAP_FACTOR))
    }

    pub fn validate(&self) -> Result<()> {
        if self.shots == 0 {
            return Err(Error::InvalidParameter("shots must be >= 1".into()));
        }
        if self.max_failures == 0 {
            return Err(Error::InvalidParameter("max_failures must be >= 1".into()));
        }
        if self.hard_cap() < self.shots {
            return Err(Error::InvalidParameter("hard cap must be >= shots".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidParameter(format!("epsilon must lie in [0, 1], got {}", self.epsilon)));
        }
        if self.decoder == DecoderKind::BlockBp {
            self.params.validate()?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShotRecord {
    pub shot: u64,
    pub error_weight: usize,
    pub success: bool,
    pub fallback_used: bool,
    /// BP rounds per coset in label order (zero for non-BP decoders).
    pub rounds: [usize; 4],
    pub wall_time_s: f64,
}

/// One CSV row: aggregate results plus the configuration that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub decoder: String,
    pub d: usize,
    pub k: usize,
    pub chi: usize,
    pub epsilon: f64,
    pub max_iter: usize,
    pub delta0: f64,
    pub delta1: f64,
    pub damping: f64,
    pub shots: u64,
    pub failures: u64,
    pub p_l: f64,
    pub stderr: f64,
    pub fallback_rate: f64,
    pub mean_rounds: f64,
    pub seed: u64,
    pub wall_time_s: f64,
}

impl RunStats {
    fn from_records(cfg: &ExperimentConfig, records: &[ShotRecord], wall_time_s: f64) -> Self {
        let shots = records.len() as u64;
        let failures = records.iter().filter(|r| !r.success).count() as u64;
        let n = shots.max(1) as f64;
        let p_l = failures as f64 / n;
        let fallbacks = records.iter().filter(|r| r.fallback_used).count();
        let rounds: usize = records.iter().flat_map(|r| r.rounds).sum();
        RunStats {
            decoder: cfg.decoder.name().to_string(),
            d: cfg.d,
            k: cfg.params.k,
            chi: cfg.params.chi,
            epsilon: cfg.epsilon,
            max_iter: cfg.params.max_iter,
            delta0: cfg.params.delta0,
            delta1: cfg.params.delta1,
            damping: cfg.params.damping,
            shots,
            failures,
            p_l,
            stderr: (p_l * (1.0 - p_l) / n).sqrt(),
            fallback_rate: fallbacks as f64 / n,
            mean_rounds: rounds as f64 / (4.0 * n),
            seed: cfg.seed,
            wall_time_s,
        }
    }
}

fn run_shot(code: &SurfaceCode, model: &NoiseModel, cfg: &ExperimentConfig, shot: u64) -> Result<ShotRecord> {
    let start = Instant::now();
    let error = model.sample_error(&mut shot_rng(cfg.seed, shot));
    let s = code.syndrome(&error)?;
    let result = decode(cfg.decoder, code, model, &s, &cfg.params)?;
    Ok(ShotRecord {
        shot,
        error_weight: error.weight(),
        success: is_success(code, &error, &result)?,
        fallback_used: result.fallback_used,
        rounds: result.estimates.each_ref().map(|e| e.rounds),
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start {threads} threads: {e}")))?;
    Ok(pool.install(f))
}

/// Runs shots until at least `shots` were decoded and at least
/// `max_failures` failed, or the hard cap is reached. Returns the aggregate
/// and the per-shot records in shot order.
pub fn run_experiment_with_records(cfg: &ExperimentConfig) -> Result<(RunStats, Vec<ShotRecord>)> {
    cfg.validate()?;
    let code = build_code(cfg.d)?;
    let model = NoiseModel::depolarizing(cfg.epsilon, code.n())?;
    let start = Instant::now();
    let cap = cfg.hard_cap();
    let records = with_pool(cfg.threads, || -> Result<Vec<ShotRecord>> {
        let mut records = Vec::new();
        let mut failures = 0;
        let mut next = 0;
        while next < cap {
            let end = (next + BATCH).min(cap);
            let batch: Vec<ShotRecord> = (next..end)
                .into_par_iter()
                .map(|shot| run_shot(&code, &model, cfg, shot))
                .collect::<Result<_>>()?;
            next = end;
            for r in batch {
                failures += u64::from(!r.success);
                records.push(r);
                if records.len() as u64 >= cfg.shots && failures >= cfg.max_failures {
                    return Ok(records);
                }
            }
        }
        Ok(records)
    })??;
    let stats = RunStats::from_records(cfg, &records, start.elapsed().as_secs_f64());
    Ok((stats, records))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunStats> {
    Ok(run_experiment_with_records(cfg)?.0)
}

/// Appends rows to a CSV file, writing the header only if the file is new
/// or empty.
pub fn write_results(stats: &[RunStats], path: &Path) -> Result<()> {
    append_csv(stats, RESULTS_HEADER, path)
}

fn append_csv<T: Serialize>(rows: &[T], header: &[&str], path: &Path) -> Result<()> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    let fresh = file.metadata()?.len() == 0;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    if fresh {
        w.write_record(header)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    file.write_all(&bytes)?;
    Ok(())
}

pub const RESULTS_HEADER: &[&str] = &[
    "decoder",
    "d",
    "k",
    "chi",
    "epsilon",
    "max_iter",
    "delta0",
    "delta1",
    "damping",
    "shots",
    "failures",
    "p_l",
    "stderr",
    "fallback_rate",
    "mean_rounds",
    "seed",
    "wall_time_s",
];

pub fn read_results(path: &Path) -> Result<Vec<RunStats>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Timing of one `(d, k, chi)` point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub d: usize,
    pub k: usize,
    pub chi: usize,
    pub n: usize,
    pub reps: usize,
    pub serial_s: f64,
    pub parallel_s: f64,
    pub rounds: f64,
    pub serial_s_per_round: f64,
}

pub const BENCH_HEADER: &[&str] = &["d", "k", "chi", "n", "reps", "serial_s", "parallel_s", "rounds", "serial_s_per_round"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchConfig {
    pub epsilon: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            epsilon: 0.1,
            max_iter: 20,
            seed: 0,
        }
    }
}

/// Median wall time per block-BP decode over `reps` sampled syndromes, once
/// on a single thread and once on the default pool. The median keeps
/// scheduler hiccups out of the fit. `delta0` is set to zero so
/// every decode runs the full `max_iter` rounds.
pub fn bench_scaling(ds: &[usize], ks: &[usize], chis: &[usize], reps: usize, bench: &BenchConfig) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    if reps == 0 {
        return Ok(rows);
    }
    let setups = ds
        .iter()
        .map(|&d| {
            let code = build_code(d)?;
            let model = NoiseModel::depolarizing(bench.epsilon, code.n())?;
            let syndromes = (0..reps as u64)
                .map(|i| code.syndrome(&model.sample_error(&mut shot_rng(bench.seed, i))))
                .collect::<Result<Vec<_>>>()?;
            Ok((code, model, syndromes))
        })
        .collect::<Result<Vec<_>>>()?;
    for &k in ks {
        for &chi in chis {
            let params = DecoderParams {
                chi,
                max_iter: bench.max_iter,
                delta0: 0.0,
                delta1: f64::INFINITY,
                ..DecoderParams::with_block_size(k)
            };
            // round-robin over d so slow drifts in machine speed hit every size alike
            let time_all = || -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
                let mut times = vec![Vec::with_capacity(reps); setups.len()];
                let mut rounds = vec![0.0; setups.len()];
                for rep in 0..reps {
                    for (i, (code, model, syndromes)) in setups.iter().enumerate() {
                        let start = Instant::now();
                        rounds[i] += decode(DecoderKind::BlockBp, code, model, &syndromes[rep], &params)?.mean_rounds();
                        times[i].push(start.elapsed().as_secs_f64());
                    }
                }
                Ok((times, rounds))
            };
            let (mut serial, rounds) = with_pool(1, time_all)??;
            let (mut parallel, _) = time_all()?;
            for (i, &d) in ds.iter().enumerate() {
                let serial_s = median(&mut serial[i]);
                let rounds = rounds[i] / reps as f64;
                rows.push(BenchRow {
                    d,
                    k,
                    chi,
                    n: setups[i].0.n(),
                    reps,
                    serial_s,
                    parallel_s: median(&mut parallel[i]),
                    rounds,
                    serial_s_per_round: serial_s / (4.0 * rounds.max(1.0)),
                });
            }
        }
    }
    // report grouped by d, in the order given
    rows.sort_by_key(|r| ds.iter().position(|&d| d == r.d));
    Ok(rows)
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let mid = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        0.5 * (xs[mid - 1] + xs[mid])
    }
}

pub fn write_bench(rows: &[BenchRow], path: &Path) -> Result<()> {
    append_csv(rows, BENCH_HEADER, path)
}

/// Growth factor of serial time per doubling of `d`, from a least-squares
/// fit of `ln t` against `ln d`.
pub fn doubling_factor(rows: &[BenchRow]) -> Option<f64> {
    if rows.len() < 2 {
        return None;
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| ((r.d as f64).ln(), r.serial_s.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(2f64.powf(sxy / sxx))
}
