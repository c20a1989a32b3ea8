use std::fs;
use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num::BigUint;

use permcodes::analysis::{
    bethe_rate_estimate, combinatorial_rate, cycle_free_rate, de_threshold, exact_de_threshold, EnsembleParams,
    EXACT_DE_MAX_Q,
};
use permcodes::bp::{decode_soft, ChannelPriors, SoftConfig, SoftStatus};
use permcodes::encoder::{
    estimate_encoder_stats, encode_codeword, BitSource, CoderState, EncoderConfig, RandomBits, SourceRecovery,
};
use permcodes::erasure::{decode_erasure, ErasureStatus};
use permcodes::graph::{build_random_regular, build_structure, count_codewords, sample_codeword};
use permcodes::permanent::{cofactor_permanents, perm_trellis, BeliefMatrix};
use permcodes::sim::{parse_eps_grid, simulate_erasure, write_csv, SimConfig};
use permcodes::{Error, FactorGraph, PartialGrid, Structure};

const EXIT_OTHER: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_CONSTRUCTION: u8 = 3;
const EXIT_CONTRADICTION: u8 = 4;
const EXIT_ENCODING_FAILURE: u8 = 5;
const EXIT_STALLED: u8 = 6;

#[derive(Parser)]
#[command(name = "permcodes", version, about = "Codes with local permutation constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GraphArgs {
    #[arg(long)]
    structure: Structure,
    #[arg(long)]
    q: usize,
    /// Variable degree (random_regular only)
    #[arg(long, default_value_t = 3)]
    dv: usize,
    /// Number of variables (random_regular only)
    #[arg(long)]
    n: Option<usize>,
    /// Graph seed (random_regular only)
    #[arg(long = "graph-seed", default_value_t = 0)]
    graph_seed: u64,
}

impl GraphArgs {
    fn build(&self) -> permcodes::Result<FactorGraph> {
        match self.structure {
            Structure::RandomRegular => {
                let n = self
                    .n
                    .ok_or_else(|| Error::InvalidParameter("random_regular needs --n".into()))?;
                build_random_regular(self.dv, self.q, n, self.graph_seed)
            }
            s => build_structure(s, self.q),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BitFormat {
    /// ASCII `0`/`1`; anything else is ignored
    Ascii,
    /// Raw bytes, most significant bit first
    Bytes,
}

#[derive(Subcommand)]
enum Command {
    /// Prints the constraints of a structure, one per line
    Build {
        #[command(flatten)]
        graph: GraphArgs,
    },
    /// Counts codewords by exhaustive search
    Count {
        #[command(flatten)]
        graph: GraphArgs,
        /// Stop once this many codewords are accounted for
        #[arg(long)]
        limit: Option<u64>,
    },
    /// Writes a random codeword as a grid
    Sample {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Checks that a grid file holds a codeword
    Validate {
        #[command(flatten)]
        graph: GraphArgs,
        file: PathBuf,
    },
    /// Encodes source bits into codewords, or estimates encoder statistics
    /// with --trials
    Encode {
        #[command(flatten)]
        graph: GraphArgs,
        /// Source bit file; pseudorandom bits from --seed when absent
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = BitFormat::Ascii)]
        format: BitFormat,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "max-attempts", default_value_t = 3)]
        max_attempts: usize,
        /// Codewords to encode from one continuous stream
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Monte Carlo trials for failure and rate statistics
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recovers the source bits behind one or more codewords
    Recover {
        #[command(flatten)]
        graph: GraphArgs,
        file: PathBuf,
        #[arg(long = "max-attempts", default_value_t = 3)]
        max_attempts: usize,
        /// Leave the undetermined tail out instead of flushing it
        #[arg(long)]
        stream: bool,
    },
    /// Decodes a grid with erasures (`0` or `.`) by subset propagation
    DecodeErasure {
        #[command(flatten)]
        graph: GraphArgs,
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Soft belief propagation; prints marginals as CSV
    DecodeSoft {
        #[command(flatten)]
        graph: GraphArgs,
        file: PathBuf,
        /// Symbol flip probability of a q-ary symmetric channel on received
        /// cells; received cells are certain when absent
        #[arg(long)]
        flip: Option<f64>,
        #[arg(long = "max-iters", default_value_t = 50)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Permanent of a square matrix given as whitespace-separated rows
    Permanent {
        /// Matrix file; stdin when absent
        file: Option<PathBuf>,
        /// Print all cofactor permanents instead
        #[arg(long)]
        cofactors: bool,
    },
    /// Rate estimates and thresholds
    Analyze {
        #[command(subcommand)]
        what: Analyze,
    },
    /// Block error rates on the erasure channel
    Simulate {
        #[command(flatten)]
        graph: GraphArgs,
        /// `start:stop:step` or a comma-separated list
        #[arg(long)]
        eps: String,
        #[arg(long)]
        seed: u64,
        #[arg(long = "min-codewords", default_value_t = 100)]
        min_codewords: usize,
        #[arg(long = "min-block-errors", default_value_t = 100)]
        min_block_errors: u64,
        #[arg(long = "max-trials", default_value_t = 10_000_000)]
        max_trials: u64,
        #[arg(long, default_value_t = 100)]
        patterns: usize,
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Write 0 in the seconds column so reruns are byte-identical
        #[arg(long = "no-time")]
        no_time: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum Analyze {
    /// Cycle-free, Bethe and (with --count) combinatorial rates
    Rates {
        #[arg(long)]
        q: usize,
        #[arg(long, default_value_t = 3)]
        dv: usize,
        #[arg(long)]
        count: Option<BigUint>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Density-evolution threshold on the erasure channel
    Threshold {
        #[arg(long)]
        q: usize,
        #[arg(long, default_value_t = 3)]
        dv: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        pop: usize,
        #[arg(long, default_value_t = 1e-3)]
        resolution: f64,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
        #[arg(long = "max-iters", default_value_t = 500)]
        max_iters: usize,
        /// Enumerate cardinality distributions instead of sampling (q <= 5)
        #[arg(long)]
        exact: bool,
    },
}

/// Failure with its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter(_) | Error::CostGuard { .. } => EXIT_USAGE,
            Error::Construction(_) => EXIT_CONSTRUCTION,
            Error::Contradiction => EXIT_CONTRADICTION,
            Error::EncodingFailure(_) => EXIT_ENCODING_FAILURE,
            _ => EXIT_OTHER,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure { code: EXIT_OTHER, message: e.to_string() }
    }
}

type CmdResult = Result<u8, Failure>;

fn read_text(path: &PathBuf) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure { code: EXIT_OTHER, message: format!("{}: {e}", path.display()) })
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(fs::File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn read_grid(graph: &FactorGraph, path: &PathBuf) -> Result<PartialGrid, Failure> {
    let grid = PartialGrid::parse(&read_text(path)?)?;
    check_shape(graph, &grid)?;
    Ok(grid)
}

fn check_shape(graph: &FactorGraph, grid: &PartialGrid) -> Result<(), Failure> {
    if grid.q() != graph.q() || grid.len() != graph.num_vars() {
        return Err(Error::InvalidParameter(format!(
            "grid is q={} N={}, graph is q={} N={}",
            grid.q(),
            grid.len(),
            graph.q(),
            graph.num_vars()
        ))
        .into());
    }
    Ok(())
}

fn read_bits(path: &PathBuf, format: BitFormat) -> Result<Vec<bool>, Failure> {
    let bytes = fs::read(path)?;
    Ok(match format {
        BitFormat::Ascii => bytes
            .iter()
            .filter_map(|b| match b {
                b'0' => Some(false),
                b'1' => Some(true),
                _ => None,
            })
            .collect(),
        BitFormat::Bytes => bytes
            .iter()
            .flat_map(|b| (0..8).rev().map(move |i| b >> i & 1 == 1))
            .collect(),
    })
}

/// Rounds to 12 significant digits, hiding scaling noise.
fn tidy(x: f64) -> f64 {
    format!("{x:.11e}").parse().unwrap_or(x)
}

fn bit_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Build { graph } => {
            let g = graph.build()?;
            let mut out = io::stdout().lock();
            writeln!(
                out,
                "# {} q={} variables={} constraints={}",
                g.structure(),
                g.q(),
                g.num_vars(),
                g.constraints().len()
            )?;
            for c in g.constraints() {
                let line: Vec<String> = c.iter().map(|v| v.to_string()).collect();
                writeln!(out, "{}", line.join(" "))?;
            }
            Ok(0)
        }
        Command::Count { graph, limit } => {
            let g = graph.build()?;
            let r = count_codewords(&g, limit);
            if r.complete {
                println!("{}", r.count);
            } else {
                println!(">={}", r.count);
            }
            Ok(0)
        }
        Command::Sample { graph, seed, out } => {
            let g = graph.build()?;
            let word = sample_codeword(&g, seed)?;
            write!(output(&out)?, "{}", PartialGrid::from_codeword(g.q(), &word))?;
            Ok(0)
        }
        Command::Validate { graph, file } => {
            let g = graph.build()?;
            let grid = read_grid(&g, &file)?;
            let valid = match grid.to_codeword() {
                Some(word) => g.validate(&word)?,
                None => false,
            };
            println!("{}", if valid { "valid" } else { "invalid" });
            Ok(if valid { 0 } else { EXIT_OTHER })
        }
        Command::Encode { graph, input, format, seed, max_attempts, count, trials, out } => {
            let g = graph.build()?;
            let config = EncoderConfig::with_max_attempts(max_attempts);
            if let Some(trials) = trials {
                let seed = seed.ok_or_else(|| Error::InvalidParameter("--trials needs --seed".into()))?;
                let s = estimate_encoder_stats(&g, trials, seed, &config)?;
                let mut w = output(&out)?;
                writeln!(w, "trials,failure_prob_first_attempt,hard_failures,mean_rate,mean_attempts")?;
                writeln!(
                    w,
                    "{},{:.6},{},{:.6},{:.6}",
                    s.trials, s.failure_prob_first_attempt, s.hard_failures, s.mean_rate, s.mean_attempts
                )?;
                return Ok(0);
            }
            let mut source: Box<dyn BitSource> = match (&input, seed) {
                (Some(path), _) => Box::new(read_bits(path, format)?),
                (None, Some(seed)) => Box::new(RandomBits::new(seed, 0)),
                (None, None) => return Err(Error::InvalidParameter("give --input or --seed".into()).into()),
            };
            let mut state = CoderState::new();
            let mut w = output(&out)?;
            for i in 0..count {
                let r = encode_codeword(&g, source.as_mut(), &mut state, &config)?;
                write!(w, "{}", PartialGrid::from_codeword(g.q(), &r.codeword))?;
                eprintln!(
                    "codeword {i}: bits_consumed={} attempts={} rate={:.6}",
                    r.bits_consumed,
                    r.attempts,
                    r.rate(g.q())
                );
            }
            Ok(0)
        }
        Command::Recover { graph, file, max_attempts, stream } => {
            let g = graph.build()?;
            let config = EncoderConfig::with_max_attempts(max_attempts);
            let mut recovery = SourceRecovery::new();
            for grid in PartialGrid::parse_many(&read_text(&file)?)? {
                check_shape(&g, &grid)?;
                let word = grid
                    .to_codeword()
                    .ok_or_else(|| Error::Replay("grid has undetermined cells".into()))?;
                let attempts = recovery.push_codeword(&g, &word, &config)?;
                eprintln!("attempts={attempts}");
            }
            let bits = if stream { recovery.bits().to_vec() } else { recovery.finish() };
            println!("{}", bit_string(&bits));
            Ok(0)
        }
        Command::DecodeErasure { graph, file, out } => {
            let g = graph.build()?;
            let observed = read_grid(&g, &file)?;
            let (grid, status) = decode_erasure(&g, &observed)?;
            write!(output(&out)?, "{grid}")?;
            let (name, code) = match status {
                ErasureStatus::Decoded => ("decoded", 0),
                ErasureStatus::Stalled => ("stalled", EXIT_STALLED),
                ErasureStatus::Contradiction => ("contradiction", EXIT_CONTRADICTION),
            };
            eprintln!("status={name}");
            Ok(code)
        }
        Command::DecodeSoft { graph, file, flip, max_iters, tol } => {
            let g = graph.build()?;
            let grid = read_grid(&g, &file)?;
            let q = g.q();
            let vectors = grid
                .cells()
                .iter()
                .map(|cell| match (cell.first(), cell.is_singleton(), flip) {
                    (Some(s), true, Some(p)) => {
                        (1..=q).map(|t| if t == s { 1.0 - p } else { p / (q - 1) as f64 }).collect()
                    }
                    (Some(s), true, None) => (1..=q).map(|t| if t == s { 1.0 } else { 0.0 }).collect(),
                    _ => vec![1.0 / q as f64; q],
                })
                .collect();
            let priors = ChannelPriors::new(q, vectors)?;
            let r = decode_soft(&g, priors, SoftConfig { max_iters, tol })?;
            let mut w = io::stdout().lock();
            let header: Vec<String> = (1..=q).map(|s| format!("p{s}")).collect();
            writeln!(w, "cell,decision,{}", header.join(","))?;
            for (v, m) in r.marginals.iter().enumerate() {
                let probs: Vec<String> = m.iter().map(|p| format!("{p:.6e}")).collect();
                writeln!(w, "{v},{},{}", r.hard_decision[v], probs.join(","))?;
            }
            let (name, code) = match r.status {
                SoftStatus::Decoded => ("decoded", 0),
                SoftStatus::Converged => ("converged", EXIT_STALLED),
                SoftStatus::MaxIterations => ("max_iterations", EXIT_STALLED),
                SoftStatus::Contradiction => ("contradiction", EXIT_CONTRADICTION),
            };
            eprintln!("status={name} iterations={}", r.iterations);
            Ok(code)
        }
        Command::Permanent { file, cofactors } => {
            let text = match file {
                Some(p) => read_text(&p)?,
                None => {
                    let mut s = String::new();
                    io::stdin().read_to_string(&mut s)?;
                    s
                }
            };
            let rows = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| {
                    l.split_whitespace()
                        .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("bad matrix entry `{t}`"))))
                        .collect::<permcodes::Result<Vec<f64>>>()
                })
                .collect::<permcodes::Result<Vec<_>>>()?;
            let m = BeliefMatrix::from_rows(&rows)?;
            if cofactors {
                for row in cofactor_permanents(&m)?.to_matrix() {
                    let line: Vec<String> = row.iter().map(|&x| format!("{}", tidy(x))).collect();
                    println!("{}", line.join(" "));
                }
            } else {
                println!("{}", tidy(perm_trellis(&m)?.value()));
            }
            Ok(0)
        }
        Command::Analyze { what } => analyze(what),
        Command::Simulate {
            graph,
            eps,
            seed,
            min_codewords,
            min_block_errors,
            max_trials,
            patterns,
            workers,
            no_time,
            out,
        } => {
            if graph.structure == Structure::RandomRegular || graph.structure == Structure::Custom {
                return Err(Error::InvalidParameter("simulate supports the named square structures".into()).into());
            }
            let mut config = SimConfig::new(graph.structure, graph.q, parse_eps_grid(&eps)?, seed);
            config.min_codewords = min_codewords;
            config.min_block_errors = min_block_errors;
            config.max_trials = max_trials;
            config.patterns_per_codeword = patterns;
            config.workers = workers;
            let records = simulate_erasure(&config)?;
            write_csv(output(&out)?, &records, !no_time)?;
            Ok(0)
        }
    }
}

fn analyze(what: Analyze) -> CmdResult {
    match what {
        Analyze::Rates { q, dv, count, n } => {
            let bethe = bethe_rate_estimate(q, dv);
            let comb = match (count, n) {
                (Some(m), Some(n)) => format!("{:.6}", combinatorial_rate(&m, n, q)?),
                (None, None) => String::new(),
                _ => return Err(Error::InvalidParameter("--count and --n go together".into()).into()),
            };
            println!("q,dv,r_cf,one_minus_r_cf,r_bethe_bits,r_bethe,r");
            println!(
                "{q},{dv},{:.6},{:.6},{:.6},{:.6},{comb}",
                cycle_free_rate(q),
                1.0 - cycle_free_rate(q),
                bethe.bits_per_symbol,
                bethe.fraction
            );
            Ok(0)
        }
        Analyze::Threshold { q, dv, seed, pop, resolution, replicates, max_iters, exact } => {
            let mut params = EnsembleParams::new(q, dv);
            params.population_size = pop;
            params.resolution = resolution;
            params.replicates = replicates;
            params.max_de_iters = max_iters;
            let t = if exact {
                if q > EXACT_DE_MAX_Q {
                    return Err(Error::CostGuard { q, limit: EXACT_DE_MAX_Q }.into());
                }
                exact_de_threshold(&params)?
            } else {
                de_threshold(&params, seed)?
            };
            println!("q,dv,theta,ci_lo,ci_hi,r_cf,r_bethe");
            println!(
                "{q},{dv},{:.4},{:.4},{:.4},{:.6},{:.6}",
                t.theta,
                t.ci_lo,
                t.ci_hi,
                cycle_free_rate(q),
                bethe_rate_estimate(q, dv).fraction
            );
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
