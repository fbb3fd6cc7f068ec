use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sus_core::canonical::feature_difference;
use sus_core::instgen::{generate, InstanceKind, InstanceSpec};
use sus_core::io::{
    self, FeaturesFile, InstanceFile, IoError, ResultFile, TraceEntry, WitnessFile,
};
use sus_core::{extract_canonical_features, solve, Mode, SolveOutcome, Tolerances};

const EXIT_SOLVED: u8 = 0;
const EXIT_NOT_SIMILAR: u8 = 1;
const EXIT_UNVERIFIED: u8 = 2;
const EXIT_REFUTED: u8 = 3;
const EXIT_INPUT: u8 = 64;

#[derive(Parser)]
#[command(name = "sus", version, about = "Simultaneous unitary similarity and equivalence of matrix collections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide an instance and write a result file.
    Solve(SolveArgs),
    /// Generate a seeded instance.
    Gen(GenArgs),
    /// Re-check a result file against its instance.
    Verify(VerifyArgs),
    /// Extract canonical features of the A matrices of an instance.
    Canon(CanonArgs),
    /// Compare two feature files.
    Diff(DiffArgs),
}

#[derive(Args)]
struct TolArgs {
    /// Structural comparison tolerance.
    #[arg(long)]
    tol_cmp: Option<f64>,
    /// Eigenvalue grouping tolerance.
    #[arg(long)]
    tol_group: Option<f64>,
    /// Witness verification tolerance.
    #[arg(long)]
    tol_verify: Option<f64>,
}

impl TolArgs {
    /// Defaults, then `SUS_TOLERANCES`, then flags.
    fn resolve(&self) -> Result<Tolerances, IoError> {
        let base = io::tolerances_from_env()?;
        Tolerances::new(
            self.tol_cmp.unwrap_or(base.cmp),
            self.tol_group.unwrap_or(base.group),
            self.tol_verify.unwrap_or(base.verify),
        )
        .map_err(IoError::Invalid)
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Problem to decide; defaults to the mode recorded in the instance.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    /// Instance file, or - for standard input.
    #[arg(long = "in")]
    input: String,
    /// Result file, or - for standard output.
    #[arg(long)]
    out: Option<String>,
    #[command(flatten)]
    tol: TolArgs,
    /// Print the refinement steps.
    #[arg(long)]
    trace: bool,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Planted,
    PlantedStructured,
    PlantedEquivalent,
    Perturbed,
    DeepSplit,
    Pairwise,
    Gap,
    NonNormal,
    Normal,
    NormalMismatch,
    Random,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long)]
    n: usize,
    /// Row count for equivalence instances; defaults to n.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 1)]
    p: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Perturbation size for --kind perturbed.
    #[arg(long, default_value_t = 1e-2)]
    epsilon: f64,
    /// Forced iteration count for --kind deep-split; defaults to n - 1.
    #[arg(long)]
    k: Option<usize>,
    /// Eigen-gap for --kind gap.
    #[arg(long, default_value_t = 1e-2)]
    delta: f64,
    #[arg(long)]
    out: String,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long = "in")]
    input: String,
    #[arg(long)]
    result: String,
}

#[derive(Args)]
struct CanonArgs {
    #[arg(long = "in")]
    input: String,
    #[arg(long)]
    out: String,
    #[command(flatten)]
    tol: TolArgs,
}

#[derive(Args)]
struct DiffArgs {
    first: String,
    second: String,
    #[command(flatten)]
    tol: TolArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Canon(a) => cmd_canon(a),
        Command::Diff(a) => cmd_diff(a),
    };
    match code {
        Ok(c) => ExitCode::from(c),
        Err(e) => {
            eprintln!("sus: {e}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn load_instance(path: &str) -> Result<InstanceFile, IoError> {
    io::parse_instance(&io::read_source(path)?)
}

fn print_trace(trace: &[TraceEntry], out: &mut impl std::fmt::Write) {
    for (k, s) in trace.iter().enumerate() {
        let spectrum: Vec<usize> = s.spectrum.iter().map(|g| g.multiplicity).collect();
        let _ = writeln!(
            out,
            "  step {}: rows {} -> {}, cols {} -> {} ({:?} at {}, {:?}, multiplicities {:?})",
            k + 1,
            s.rows_before,
            s.rows_after,
            s.cols_before,
            s.cols_after,
            s.violation.kind,
            s.violation.at,
            s.s_kind,
            spectrum
        );
    }
}

fn cmd_solve(args: SolveArgs) -> Result<u8, IoError> {
    let tol = args.tol.resolve()?;
    let inst = load_instance(&args.input)?;
    let mode = args.mode.unwrap_or(inst.mode);
    let coll = inst.collection()?;
    if mode == Mode::Sus && !coll.is_square() {
        return Err(IoError::Invalid(format!("similarity needs square matrices, got {}x{}", coll.m(), coll.n())));
    }
    let start = Instant::now();
    let solved = solve(&coll, mode, &tol);
    let ms = start.elapsed().as_secs_f64() * 1e3;

    let mut summary = String::new();
    use std::fmt::Write;
    let (result, code) = match solved {
        Ok(out) => {
            let result = ResultFile::from_outcome(&out, mode, &tol, ms);
            let steps = out.trace().len();
            let code = match &out {
                SolveOutcome::Solved { residual, .. } => {
                    let _ = writeln!(summary, "solved after {steps} refinement steps, residual {residual:.3e}");
                    EXIT_SOLVED
                }
                SolveOutcome::NotSimilar { certificate, .. } => {
                    let word = if mode == Mode::Sus { "similar" } else { "equivalent" };
                    let _ = writeln!(summary, "not {word} ({:?}) after {steps} refinement steps", certificate.kind);
                    let _ = writeln!(summary, "  {}", certificate.summary());
                    EXIT_NOT_SIMILAR
                }
                SolveOutcome::VerificationFailed { residual, .. } => {
                    let _ = writeln!(
                        summary,
                        "witness found after {steps} refinement steps but failed verification: residual {residual:.3e}"
                    );
                    EXIT_UNVERIFIED
                }
            };
            (result, code)
        }
        Err(e) if e.is_numerical_failure() => {
            let _ = writeln!(summary, "numerical failure: {e}");
            (ResultFile::numerical_failure(mode, e.to_string(), &tol, ms), EXIT_UNVERIFIED)
        }
        Err(e) => return Err(IoError::Invalid(e.to_string())),
    };
    if args.trace {
        print_trace(&result.trace, &mut summary);
    }
    let to_stdout = args.out.as_deref() == Some("-");
    if to_stdout {
        eprint!("{summary}");
    } else {
        print!("{summary}");
    }
    if let Some(out) = &args.out {
        io::write_sink(out, &io::to_json(&result))?;
    }
    Ok(code)
}

fn witness_path(out: &str) -> String {
    let p = Path::new(out);
    let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("instance");
    p.with_file_name(format!("{stem}.witness.json")).to_string_lossy().into_owned()
}

fn cmd_gen(args: GenArgs) -> Result<u8, IoError> {
    let kind = match args.kind {
        Kind::Planted => InstanceKind::PlantedSimilar { structured: false },
        Kind::PlantedStructured => InstanceKind::PlantedSimilar { structured: true },
        Kind::PlantedEquivalent => InstanceKind::PlantedEquivalent,
        Kind::Perturbed => InstanceKind::PerturbedNonSimilar { epsilon: args.epsilon },
        Kind::DeepSplit => InstanceKind::DeepSplit {
            k: args.k.unwrap_or(args.n.saturating_sub(1)),
        },
        Kind::Pairwise => InstanceKind::PairwiseSimilar,
        Kind::Gap => InstanceKind::GapControlled { delta: args.delta },
        Kind::NonNormal => InstanceKind::NonNormal,
        Kind::Normal => InstanceKind::NormalSpectrum { similar: true },
        Kind::NormalMismatch => InstanceKind::NormalSpectrum { similar: false },
        Kind::Random => InstanceKind::Random,
    };
    let spec = InstanceSpec {
        seed: args.seed,
        m: args.m.unwrap_or(args.n),
        n: args.n,
        p: args.p,
        kind,
    };
    let inst = generate(&spec).map_err(|e| IoError::Invalid(e.to_string()))?;
    io::write_sink(&args.out, &io::to_json(&InstanceFile::from_collection(&inst.collection, inst.mode)))?;
    if let (Some(u), false) = (inst.witness_u, args.out == "-") {
        let path = witness_path(&args.out);
        io::write_sink(&path, &io::to_json(&WitnessFile::new(u, inst.witness_v)))?;
        eprintln!("planted witness written to {path}");
    }
    if let Some(w) = inst.oracle {
        eprintln!("non-similar by trace word: {w}");
    }
    Ok(0)
}

fn cmd_verify(args: VerifyArgs) -> Result<u8, IoError> {
    let inst = load_instance(&args.input)?;
    let result = io::parse_result(&io::read_source(&args.result)?)?;
    let v = io::verify_result(&inst, &result)?;
    if v.confirmed {
        println!("confirmed: {}", v.detail);
        Ok(0)
    } else {
        println!("refuted: {}", v.detail);
        Ok(EXIT_REFUTED)
    }
}

fn cmd_canon(args: CanonArgs) -> Result<u8, IoError> {
    let tol = args.tol.resolve()?;
    let inst = load_instance(&args.input)?;
    if inst.m != inst.n {
        return Err(IoError::Invalid(format!("canonical features need square matrices, got {}x{}", inst.m, inst.n)));
    }
    let features = extract_canonical_features(&inst.a_matrices()?, &tol).map_err(|e| IoError::Invalid(e.to_string()))?;
    println!("{} feature steps", features.steps.len());
    io::write_sink(&args.out, &io::to_json(&FeaturesFile::new(features)))?;
    Ok(0)
}

fn cmd_diff(args: DiffArgs) -> Result<u8, IoError> {
    let tol = args.tol.resolve()?;
    let a = io::parse_features(&io::read_source(&args.first)?)?;
    let b = io::parse_features(&io::read_source(&args.second)?)?;
    match feature_difference(&a.features, &b.features, &tol) {
        None => {
            println!("features agree");
            Ok(0)
        }
        Some(d) => {
            println!("features differ: {d}");
            Ok(1)
        }
    }
}
