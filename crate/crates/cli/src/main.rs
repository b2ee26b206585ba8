//! `roomreg` command-line driver.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use roomreg::pipeline::Pipeline;
use roomreg::scenario::RoomScenario;

#[derive(Parser)]
#[command(version, about = "Robust output tracking for a ventilated room")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scenario file, or the name of a bundled scenario.
    #[arg(long, global = true, default_value = "paper_room")]
    scenario: String,

    /// Output directory; intermediates are cached under `<out>/cache`.
    #[arg(long, global = true, default_value = "roomreg-out")]
    out: PathBuf,

    /// Use mesh parameter n (h = 1/n) for both design and simulation.
    #[arg(long, global = true)]
    mesh_override: Option<usize>,

    /// Time step of the simulation.
    #[arg(long, global = true)]
    dt: Option<f64>,

    /// Simulation horizon.
    #[arg(long, global = true)]
    t_end: Option<f64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Steady state on the simulation mesh.
    Steady,
    /// Unstable spectrum and cascade assumption checks.
    Analyze,
    /// Riccati gains, balanced truncation and controller.
    Synthesize,
    /// Closed-loop simulation with the stored controller.
    Simulate,
    /// All stages in order.
    Full,
}

fn load(cli: &Cli) -> roomreg::Result<RoomScenario> {
    let path = PathBuf::from(&cli.scenario);
    let s = if path.exists() {
        RoomScenario::load(&path)?
    } else if let Some(s) = RoomScenario::bundled(&cli.scenario) {
        s
    } else {
        return Err(roomreg::Error::Invariant(format!(
            "`{}` is neither a scenario file nor a bundled scenario",
            cli.scenario
        )));
    };
    s.with_overrides(cli.mesh_override, cli.dt, cli.t_end)
}

fn run(cli: &Cli) -> roomreg::Result<()> {
    let p = Pipeline::new(load(cli)?, &cli.out)?;
    let steady = |p: &Pipeline| -> roomreg::Result<()> {
        let s = p.steady()?;
        println!(
            "steady: h = 1/{}, {} Newton iterations, residual {:.2e}, ‖Dw‖ {:.2e}",
            s.mesh, s.total_iterations, s.final_residual, s.divergence
        );
        Ok(())
    };
    let analyze = |p: &Pipeline| -> roomreg::Result<()> {
        let a = p.analyze()?;
        println!("analyze: {} unstable eigenvalue(s) at h = 1/{}", a.unstable.len(), a.mesh);
        for e in &a.unstable {
            println!("  {:+.6} {:+.6}i  (residual {:.1e})", e.re, e.im, e.residual);
        }
        println!("  assumptions {}", if a.assumptions_pass { "pass" } else { "FAIL" });
        Ok(())
    };
    let synthesize = |p: &Pipeline| -> roomreg::Result<()> {
        let s = p.synthesize()?;
        println!(
            "synthesize: dim Z = {} ({} internal model + {} reduced observer), bound {:.3e}, grid error {:.3e}",
            s.dim_z, s.dim_zim, s.order, s.error_bound, s.hinf_grid_error
        );
        println!(
            "  abscissas: observer {:.4}, control {:.4}, design loop {:.4}",
            s.observer_abscissa, s.control_abscissa, s.design_closed_loop_abscissa
        );
        Ok(())
    };
    let simulate = |p: &Pipeline| -> roomreg::Result<()> {
        let s = p.simulate()?;
        println!(
            "simulate: t ∈ [0, {}], dt = {}, sup|e| on [{}, {}] = {:?}, decay rate {:.4}",
            s.t_end, s.dt, s.metric_window[0], s.metric_window[1], s.sup_error, s.decay_rate
        );
        if !s.closed_loop_unstable.is_empty() {
            println!("  closed loop has {} unstable eigenvalue(s)", s.closed_loop_unstable.len());
        }
        Ok(())
    };
    match cli.command {
        Command::Steady => steady(&p),
        Command::Analyze => analyze(&p),
        Command::Synthesize => synthesize(&p),
        Command::Simulate => simulate(&p),
        Command::Full => {
            steady(&p)?;
            analyze(&p)?;
            synthesize(&p)?;
            simulate(&p)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
