//! `drc`: matrix completion, protein reconstruction and Hadamard searches
//! from the command line.
//!
//! Exit codes: 0 solved, 2 no certificate within the budget, 3 bad input.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use drc_core::hadamard::{default_max_iterations, export_histogram, summary_report, CirculantMode, Formulation};
use drc_core::io::{parse_edge_list, parse_partial_matrix, write_matrix_csv, write_xyz, Report};
use drc_core::protein::{
    build_partial_distance_matrix, contiguous_partition, finish_reconstruction, parse_points, reconstruct_edm,
    two_phase_reconstruct, EdmRun, PhaseSchedule, ReconstructParams,
};
use drc_core::registry::{completers, search_strategies, CompletionParams, SearchParams};
use drc_core::{DrConfig, PartialMatrix, Status};

#[derive(Parser)]
#[command(name = "drc", version, about = "Douglas-Rachford matrix completion and combinatorial search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Complete a partial matrix (CSV with `?` for unknown entries).
    Complete {
        /// psd, correlation, doubly-stochastic, edm, edm-noise or min-rank.
        kind: String,
        input: PathBuf,
        #[arg(long, default_value_t = 5000)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        /// Read an `i j d` edge list of unsquared distances instead.
        #[arg(long)]
        edges: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reconstruct a point configuration from partial distance data.
    Protein {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = InputFormat::Auto)]
        format: InputFormat,
        #[arg(long, default_value_t = 6.0)]
        cutoff: f64,
        #[arg(long, default_value_t = 5000)]
        iters: usize,
        #[arg(long, default_value_t = 3)]
        rank: usize,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        two_phase: bool,
        #[arg(long, default_value_t = 2)]
        blocks: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Randomized search for Hadamard-type matrices.
    Hadamard {
        /// plain, skew, skew-three-set or circulant.
        kind: String,
        #[arg(long)]
        order: usize,
        #[arg(long, default_value = "c3")]
        formulation: String,
        #[arg(long, default_value_t = 20)]
        restarts: usize,
        /// Defaults to 10000 up to order 12 and 50000 above.
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Histogram bin width in iterations.
        #[arg(long, default_value_t = 100)]
        bins: usize,
        #[arg(long, value_enum, default_value_t = CirculantArg::Product)]
        circulant_mode: CirculantArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum InputFormat {
    /// Points unless the file looks like a partial matrix or edge list.
    Auto,
    Points,
    Matrix,
    Edges,
}

#[derive(Clone, Copy, ValueEnum)]
enum CirculantArg {
    Product,
    Composed,
}

const EXIT_SOLVED: u8 = 0;
const EXIT_NO_CERTIFICATE: u8 = 2;
const EXIT_INPUT: u8 = 3;

#[derive(Debug)]
enum Failure {
    Input(String),
}

impl From<drc_core::Error> for Failure {
    fn from(e: drc_core::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

type Outcome = Result<u8, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    fs::create_dir_all(dir).and_then(|_| fs::write(dir.join(name), contents)).map_err(|e| Failure::Input(format!("{}: {e}", dir.join(name).display())))
}

fn status_code(status: Status) -> u8 {
    match status {
        Status::Solved => EXIT_SOLVED,
        Status::MaxIterationsReached | Status::Diverging => EXIT_NO_CERTIFICATE,
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_complete(kind: &str, input: &Path, max_iter: usize, tol: f64, seed: u64, eps: f64, edges: bool, out: Option<&Path>) -> Outcome {
    let registry = completers();
    let completer = registry.get(kind)?;
    let text = read(input)?;
    let p = if edges { parse_edge_list(&text, None)? } else { parse_partial_matrix(&text)? };
    let cfg = DrConfig::default().with_max_iterations(max_iter).with_tol(tol).with_seed(seed);
    cfg.validate()?;
    let outcome = completer.complete(&p, &CompletionParams { cfg, eps })?;
    let mut report = Report::new();
    report
        .set("kind", kind)
        .set("status", outcome.status.as_str())
        .set("iterations", outcome.iterations)
        .set("seed", seed);
    if let Some(r) = outcome.residual {
        report.set_float("residual", r);
    }
    if let Some(r) = outcome.min_rank {
        report.set("min_rank", r);
    }
    print!("{}", report.emit());
    if let Some(dir) = out {
        write_out(dir, "completed.csv", &write_matrix_csv(&outcome.matrix))?;
        write_out(dir, "report.txt", &report.emit())?;
        if let Some(ladder) = &outcome.rank_ladder {
            let mut csv = String::from("rank,solved\n");
            for (r, ok) in ladder {
                csv.push_str(&format!("{r},{ok}\n"));
            }
            write_out(dir, "rank_ladder.csv", &csv)?;
        }
    }
    Ok(status_code(outcome.status))
}

fn detect_format(text: &str) -> InputFormat {
    let first = text.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    if first == drc_core::io::SYMMETRIC_HEADER || text.contains('?') {
        InputFormat::Matrix
    } else if !first.contains(',') && first.split_whitespace().count() == 3 && !first.starts_with("ATOM") && !first.starts_with("HETATM") {
        InputFormat::Edges
    } else {
        InputFormat::Points
    }
}

fn to_symmetric(p: PartialMatrix) -> Result<PartialMatrix, Failure> {
    if p.is_symmetric() {
        return Ok(p);
    }
    let (m, n) = p.shape();
    if m != n {
        return Err(Failure::Input(format!("distance matrix must be square, got {m}x{n}")));
    }
    let mut s = PartialMatrix::new_symmetric(n);
    for ((i, j), v) in p.iter() {
        if p.get(j, i) != Some(v) {
            return Err(Failure::Input(format!("distance data is not symmetric at ({}, {})", i + 1, j + 1)));
        }
        s.set(i, j, v)?;
    }
    Ok(s)
}

#[allow(clippy::too_many_arguments)]
fn cmd_protein(
    input: &Path,
    format: InputFormat,
    cutoff: f64,
    params: ReconstructParams,
    two_phase: bool,
    blocks: usize,
    out: Option<&Path>,
) -> Outcome {
    let text = read(input)?;
    let format = match format {
        InputFormat::Auto => detect_format(&text),
        f => f,
    };
    let (p, truth) = match format {
        InputFormat::Points | InputFormat::Auto => {
            let cloud = parse_points(&text)?;
            (build_partial_distance_matrix(&cloud, cutoff)?, Some(cloud))
        }
        InputFormat::Matrix => (to_symmetric(parse_partial_matrix(&text)?)?, None),
        InputFormat::Edges => (parse_edge_list(&text, None)?, None),
    };
    let n = p.shape().0;
    let run: EdmRun = if two_phase {
        let partition = contiguous_partition(n, blocks)?;
        let schedule = PhaseSchedule {
            rounds: 1,
            block_iterations: params.iterations,
            master_iterations: params.iterations,
        };
        two_phase_reconstruct(&p, &partition, &schedule, &params)?.run
    } else {
        reconstruct_edm(&p, &params)?
    };
    let rec = finish_reconstruction(&p, &run, &params, truth.as_ref())?;
    let mut report = Report::new();
    report
        .set("status", "completed")
        .set_float("relative_error_db", rec.report.relative_error_db)
        .set("iterations", rec.report.iterations)
        .set_float("known_fraction", rec.report.known_fraction)
        .set("seed", rec.report.seed)
        .set("points", n);
    if let (Some(rmse), Some(max)) = (rec.report.rmse, rec.report.max_error) {
        report.set_float("rmse", rmse).set_float("max_error", max);
    }
    print!("{}", report.emit());
    if let Some(dir) = out {
        write_out(dir, "completed.csv", &write_matrix_csv(&rec.completed))?;
        write_out(dir, "points.xyz", &write_xyz(&rec.points))?;
        write_out(dir, "report.txt", &report.emit())?;
    }
    Ok(EXIT_SOLVED)
}

fn cmd_hadamard(kind: &str, params: SearchParams, bins: usize, out: Option<&Path>) -> Outcome {
    let registry = search_strategies();
    let strategy = registry.get(kind)?;
    let stats = strategy.search(&params)?;
    let mut report = summary_report(&stats);
    report.set("kind", kind).set("seed", params.seed).set("max_iterations", params.max_iterations);
    print!("{}", report.emit());
    if let Some(dir) = out {
        write_out(dir, "summary.txt", &report.emit())?;
        write_out(dir, "histogram.csv", &export_histogram(&stats, bins)?)?;
        for (k, h) in stats.solutions.iter().enumerate() {
            write_out(dir, &format!("solution_{k:03}.csv"), &write_matrix_csv(h))?;
        }
    }
    Ok(if stats.solved == 0 { EXIT_NO_CERTIFICATE } else { EXIT_SOLVED })
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Complete {
            kind,
            input,
            max_iter,
            tol,
            seed,
            eps,
            edges,
            out,
        } => cmd_complete(&kind, &input, max_iter, tol, seed, eps, edges, out.as_deref()),
        Command::Protein {
            input,
            format,
            cutoff,
            iters,
            rank,
            eps,
            seed,
            two_phase,
            blocks,
            out,
        } => {
            let params = ReconstructParams {
                eps,
                rank,
                iterations: iters,
                seed,
            };
            cmd_protein(&input, format, cutoff, params, two_phase, blocks, out.as_deref())
        }
        Command::Hadamard {
            kind,
            order,
            formulation,
            restarts,
            max_iter,
            seed,
            bins,
            circulant_mode,
            out,
        } => {
            let params = SearchParams {
                order,
                formulation: formulation.parse::<Formulation>()?,
                restarts,
                max_iterations: max_iter.unwrap_or_else(|| default_max_iterations(order)),
                seed,
                circulant_mode: match circulant_mode {
                    CirculantArg::Product => CirculantMode::ProductSpace,
                    CirculantArg::Composed => CirculantMode::Composed,
                },
            };
            cmd_hadamard(&kind, params, bins, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_SOLVED };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
