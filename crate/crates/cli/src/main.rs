use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use surface_bbp::code::{build_code, LogicalLabel, Syndrome};
use surface_bbp::cosetnet::coset_probs_exact;
use surface_bbp::decoders::{decode, DecoderKind, DecoderParams, Mode};
use surface_bbp::harness::{bench_scaling, run_experiment, write_bench, write_results, BenchConfig, ExperimentConfig, RunStats, RESULTS_HEADER};
use surface_bbp::noise::NoiseModel;
use surface_bbp::Error;

const EXIT_INVALID: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "surface-bbp", version, about = "Block-BP tensor-network decoding of the surface code")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the logical error rate by sampling errors and decoding them.
    Simulate(SimulateArgs),
    /// Decode one syndrome and print the per-coset estimates.
    Decode(DecodeArgs),
    /// Exact coset probabilities of one syndrome (d <= 3).
    Oracle(OracleArgs),
    /// Time block-BP decodes over a grid of (d, k, chi).
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DecoderArg {
    Blockbp,
    Bmps,
    Exact,
}

impl From<DecoderArg> for DecoderKind {
    fn from(d: DecoderArg) -> Self {
        match d {
            DecoderArg::Blockbp => DecoderKind::BlockBp,
            DecoderArg::Bmps => DecoderKind::Bmps,
            DecoderArg::Exact => DecoderKind::Exact,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Mps,
    Fused,
    Coarse,
}

#[derive(Args)]
struct DecoderFlags {
    #[arg(long, value_enum, default_value = "blockbp")]
    decoder: DecoderArg,
    #[arg(long, default_value_t = 2)]
    block_size: usize,
    /// Bond dimension cap; 0 means exact.
    #[arg(long, default_value_t = 16)]
    chi: usize,
    #[arg(long, default_value_t = 20)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-4)]
    delta0: f64,
    #[arg(long, default_value_t = 1e-2)]
    delta1: f64,
    #[arg(long, default_value_t = 0.1)]
    damping: f64,
    /// Overrides the mode implied by the block size.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

impl DecoderFlags {
    fn params(&self) -> DecoderParams {
        let mode = match self.mode {
            Some(ModeArg::Mps) => Mode::MpsMessages,
            Some(ModeArg::Fused) => Mode::Fused,
            Some(ModeArg::Coarse) => Mode::CoarseThenBlock,
            None => Mode::for_block_size(self.block_size),
        };
        DecoderParams {
            k: self.block_size,
            chi: self.chi,
            max_iter: self.max_iter,
            delta0: self.delta0,
            delta1: self.delta1,
            damping: self.damping,
            mode,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    epsilon: f64,
    #[command(flatten)]
    decoder: DecoderFlags,
    #[arg(long, default_value_t = 1000)]
    shots: u64,
    #[arg(long, default_value_t = 100)]
    max_failures: u64,
    /// Upper bound on shots; defaults to 10 x shots.
    #[arg(long)]
    hard_cap: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// CSV file to append to; the row goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    epsilon: f64,
    /// Hex string of the syndrome bits, A-checks first, LSB first.
    #[arg(long)]
    syndrome: String,
    #[command(flatten)]
    decoder: DecoderFlags,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    syndrome: String,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    d_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    k_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    chi_list: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 20)]
    max_iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn simulate(args: &SimulateArgs) -> Result<(), Error> {
    let cfg = ExperimentConfig {
        shots: args.shots,
        max_failures: args.max_failures,
        hard_cap: args.hard_cap,
        seed: args.seed,
        threads: args.threads,
        ..ExperimentConfig::new(args.decoder.decoder.into(), args.d, args.epsilon, args.decoder.params())
    };
    let stats = run_experiment(&cfg)?;
    eprintln!(
        "{} d={} eps={}: {} failures in {} shots, p_l = {:.4e} +- {:.1e}",
        stats.decoder, stats.d, stats.epsilon, stats.failures, stats.shots, stats.p_l, stats.stderr
    );
    match &args.out {
        Some(path) => write_results(&[stats], path),
        None => print_rows(&[stats]),
    }
}

fn print_rows(rows: &[RunStats]) -> Result<(), Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(std::io::stdout());
    w.write_record(RESULTS_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn setup(d: usize, epsilon: f64, syndrome: &str) -> Result<(surface_bbp::code::SurfaceCode, NoiseModel, Syndrome), Error> {
    let code = build_code(d)?;
    let model = NoiseModel::depolarizing(epsilon, code.n())?;
    let s = Syndrome::from_hex(syndrome, code.m())?;
    Ok((code, model, s))
}

fn decode_one(args: &DecodeArgs) -> Result<(), Error> {
    let (code, model, s) = setup(args.d, args.epsilon, &args.syndrome)?;
    let params = args.decoder.params();
    let kind = args.decoder.decoder.into();
    if kind == DecoderKind::BlockBp {
        params.validate()?;
    }
    let r = decode(kind, &code, &model, &s, &params)?;
    println!("chosen {}", r.chosen);
    println!("fallback {}", r.fallback_used);
    println!("label,log_prob,delta,rounds,trusted");
    for e in &r.estimates {
        let lp = e.log_prob.map_or("NA".to_string(), |p| {
            if p.is_zero() {
                "-inf".to_string()
            } else {
                p.log_mag().to_string()
            }
        });
        println!("{},{},{},{},{}", e.label, lp, e.final_delta, e.rounds, e.trusted);
    }
    Ok(())
}

fn oracle(args: &OracleArgs) -> Result<(), Error> {
    let (code, model, s) = setup(args.d, args.epsilon, &args.syndrome)?;
    let probs = coset_probs_exact(&code, &model, &code.pure_error(&s)?)?;
    println!("label,probability");
    for l in LogicalLabel::ALL {
        println!("{},{}", l, probs[l.index()].to_f64());
    }
    Ok(())
}

fn bench(args: &BenchArgs) -> Result<(), Error> {
    let cfg = BenchConfig {
        epsilon: args.epsilon,
        max_iter: args.max_iter,
        seed: args.seed,
    };
    let rows = bench_scaling(&args.d_list, &args.k_list, &args.chi_list, args.reps, &cfg)?;
    for r in &rows {
        eprintln!(
            "d={} k={} chi={}: serial {:.4} s, parallel {:.4} s, {:.2e} s per coset round",
            r.d, r.k, r.chi, r.serial_s, r.parallel_s, r.serial_s_per_round
        );
    }
    if let Some(path) = &args.out {
        write_bench(&rows, path)?;
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Csv(_) => EXIT_IO,
        Error::InvalidParameter(_)
        | Error::LengthMismatch { .. }
        | Error::Precondition(_)
        | Error::Capacity(_)
        | Error::DimensionMismatch(_) => EXIT_INVALID,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Decode(a) => decode_one(a),
        Command::Oracle(a) => oracle(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
