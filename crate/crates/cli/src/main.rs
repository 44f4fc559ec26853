use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use anneal_core::dynamics::{write_dynamics_csv, FinalSummary, DEFAULT_SAMPLES};
use anneal_core::experiment::{
    aggregate_by_degeneracy, compare_annealers, degeneracy_histogram, generate_instances, parse_pair, read_records,
    run_sweep, write_degeneracy_table, write_instances, write_scatter, SweepConfig,
};
use anneal_core::spectral::{
    glass_order_lowk, relevant_gap, spectral_trace, susceptibility_profile, uniform_grid, write_trace_csv,
    TraceColumns, TraceOptions, DEFAULT_DELTA_S,
};
use anneal_core::{
    evolve, solve_partition_bruteforce, AnnealSchedule, AnnealerKind, Bits, Error, EvolveOptions, HamiltonianParts,
    Integrator, ProblemInstance,
};

#[derive(Parser)]
#[command(name = "anneal", version, about = "Fermionic, bosonic and Ising annealing of balanced graph partitioning")]
struct Cli {
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate random 3-regular instances on a rows x cols lattice.
    Gen {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve an instance exactly: minimum cut, degeneracy and all solutions.
    Solve {
        #[arg(long)]
        instance: PathBuf,
    },
    /// Run one anneal and print the final summary as JSON.
    Anneal {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        annealer: AnnealerKind,
        #[arg(long, default_value_t = 50.0)]
        time: f64,
        /// Integration steps; defaults to 40 per unit time (2000 at time 50).
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value_t = 3.0)]
        lambda: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value = "magnus4")]
        integrator: Integrator,
        /// Write the dynamics trace to this CSV file.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: usize,
        /// Record the instantaneous ground-state probability in the trace.
        #[arg(long)]
        ground_state: bool,
    },
    /// Compute the low-lying spectrum along the schedule.
    Spectrum {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        annealer: AnnealerKind,
        #[arg(long, default_value_t = 12)]
        levels: usize,
        #[arg(long, default_value_t = 101)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3.0)]
        lambda: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Append the fidelity susceptibility column.
        #[arg(long)]
        susceptibility: bool,
        /// Append the glass-order columns.
        #[arg(long)]
        glass: bool,
    },
    /// Run a batch described by a key = value config file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Summarize a records file.
    Aggregate {
        #[arg(long)]
        records: PathBuf,
        /// Mean success probability per degeneracy bin.
        #[arg(long)]
        by_degeneracy: bool,
    },
    /// Pairwise win rates of two annealers.
    Compare {
        #[arg(long)]
        records: PathBuf,
        /// Annealers as a:b, e.g. boson:fermion.
        #[arg(long)]
        pair: String,
        /// Write per-instance scatter data to this CSV file.
        #[arg(long)]
        scatter: Option<PathBuf>,
    },
}

fn exit_code(err: &Error) -> u8 {
    if err.is_io() || matches!(err, Error::Parse(_)) {
        3
    } else if err.is_numerical() {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn instance_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "instance".into())
}

fn create(path: &Path) -> Result<fs::File, Error> {
    fs::File::create(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run(command: Command) -> Result<(), Error> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let io_err = |e: io::Error| Error::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    };
    match command {
        Command::Gen {
            rows,
            cols,
            count,
            seed,
            out: dir,
        } => {
            let instances = generate_instances(rows, cols, count, seed)?;
            for path in write_instances(&dir, &instances)? {
                writeln!(out, "{}", path.display()).map_err(io_err)?;
            }
        }
        Command::Solve { instance } => {
            let inst = ProblemInstance::load(&instance)?;
            let sol = solve_partition_bruteforce(&inst.graph)?;
            writeln!(out, "min_cut {}", sol.min_cut).map_err(io_err)?;
            writeln!(out, "D {}", sol.degeneracy()).map_err(io_err)?;
            for &s in &sol.solutions {
                writeln!(out, "{}", Bits::new(s, inst.n())).map_err(io_err)?;
            }
        }
        Command::Anneal {
            instance,
            annealer,
            time,
            steps,
            lambda,
            alpha,
            integrator,
            trace,
            samples,
            ground_state,
        } => {
            let inst = ProblemInstance::load(&instance)?;
            let sol = solve_partition_bruteforce(&inst.graph)?;
            let parts = HamiltonianParts::build(&inst, annealer, lambda, alpha)?;
            let schedule = AnnealSchedule::new(time, lambda)?;
            let steps = steps.unwrap_or_else(|| ((40.0 * time).round() as usize).max(1));
            let opts = EvolveOptions {
                steps,
                samples: if trace.is_some() { samples } else { 2 },
                ground_state: ground_state && trace.is_some(),
                integrator,
                ..Default::default()
            };
            let result = evolve(&parts, &schedule, &sol, &opts)?;
            if let Some(path) = &trace {
                write_dynamics_csv(create(path)?, &result)?;
            }
            let summary = FinalSummary {
                instance_id: instance_name(&instance),
                annealer: annealer.to_string(),
                total_time: time,
                steps,
                p_s_final: result.final_success(),
                degeneracy: sol.degeneracy(),
                min_cut: sol.min_cut,
            };
            let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Parse(e.to_string()))?;
            writeln!(out, "{json}").map_err(io_err)?;
        }
        Command::Spectrum {
            instance,
            annealer,
            levels,
            grid,
            out: path,
            lambda,
            alpha,
            susceptibility,
            glass,
        } => {
            if grid < 2 || levels == 0 {
                return Err(Error::InvalidArgument("--grid must be at least 2 and --levels at least 1".into()));
            }
            let inst = ProblemInstance::load(&instance)?;
            let sol = solve_partition_bruteforce(&inst.graph)?;
            let d = sol.degeneracy();
            let parts = HamiltonianParts::build(&inst, annealer, lambda, alpha)?;
            let s_grid = uniform_grid(grid);
            let trace = spectral_trace(
                &parts,
                &s_grid,
                &TraceOptions {
                    levels,
                    degeneracy: d,
                    keep_vectors: glass,
                    ..Default::default()
                },
            )?;
            let gap = relevant_gap(&parts, &trace, d)?;
            let mut extra = TraceColumns::default();
            if glass {
                extra.q_gs = Some(glass_order_lowk(&trace, &parts.basis, 1)?);
                extra.q_low = Some(glass_order_lowk(&trace, &parts.basis, trace.k.min(12))?);
            }
            if susceptibility {
                extra.susceptibility = Some(susceptibility_profile(&parts, &s_grid, DEFAULT_DELTA_S)?);
            }
            write_trace_csv(create(&path)?, &trace, &extra)?;
            writeln!(out, "D {d}").map_err(io_err)?;
            writeln!(out, "relevant_gap {:.10}", gap.relevant_gap).map_err(io_err)?;
            writeln!(out, "argmin_s {:.6}", gap.argmin_s).map_err(io_err)?;
        }
        Command::Sweep { config } => {
            let cfg = SweepConfig::load(&config)?;
            let summary = run_sweep(&cfg)?;
            writeln!(
                out,
                "{} records ({} resumed, {} failed) -> {}",
                summary.records.len(),
                summary.resumed,
                summary.failed,
                summary.records_path.display()
            )
            .map_err(io_err)?;
        }
        Command::Aggregate { records, by_degeneracy } => {
            let recs = read_records(&records)?;
            if by_degeneracy {
                let rows = aggregate_by_degeneracy(&recs)?;
                write_degeneracy_table(&mut out, &rows)?;
            } else {
                writeln!(out, "D,instances").map_err(io_err)?;
                for (d, count) in degeneracy_histogram(&recs) {
                    writeln!(out, "{d},{count}").map_err(io_err)?;
                }
            }
        }
        Command::Compare { records, pair, scatter } => {
            let (a, b) = parse_pair(&pair).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let recs = read_records(&records)?;
            let cmp = compare_annealers(&recs, a, b);
            writeln!(out, "paired {}", cmp.paired()).map_err(io_err)?;
            writeln!(out, "unpaired {}", cmp.unpaired).map_err(io_err)?;
            writeln!(out, "{a}>{b} {:.4}", cmp.win_rate()).map_err(io_err)?;
            writeln!(out, "{b}>{a} {:.4}", cmp.loss_rate()).map_err(io_err)?;
            writeln!(out, "ties {:.4}", cmp.tie_rate()).map_err(io_err)?;
            if let Some(path) = scatter {
                write_scatter(create(&path)?, &cmp)?;
            }
        }
    }
    Ok(())
}
