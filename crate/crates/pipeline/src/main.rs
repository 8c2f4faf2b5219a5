use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lampdet_pipeline::run::{run_pipeline, write_benchmark};
use lampdet_pipeline::scene::{gen_scene, write_scene};
use lampdet_pipeline::{Config, PipelineError};

#[derive(Parser)]
#[command(name = "pipeline", about = "Synthetic lamp detection pipeline and method benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Detect, cluster and report over the configured scene.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        plane_estimation: Option<Switch>,
        /// d2co, d2co-e or d2co-it.
        #[arg(long)]
        method: Option<String>,
        /// Subdivision fraction of the longest model edge.
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare all methods and steps, with and without plane estimation.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Write the scene's building, references, trajectory and models.
    GenScene {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Run { config, plane_estimation, method, step, seed, out } => {
            let mut cfg = Config::load(&config)?;
            if let Some(p) = plane_estimation {
                cfg.pipeline.plane_estimation = matches!(p, Switch::On);
            }
            if let Some(m) = method {
                cfg.pipeline.method = m;
            }
            if let Some(s) = step {
                cfg.pipeline.step = s;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let report = run_pipeline(&cfg, &out)?;
            let o = &report.outcome;
            let c = &o.stats.counts;
            println!(
                "frames {}  detections {} -> {}  clusters {}  linked {}/{}",
                report.frames,
                o.raw_detections,
                o.detections.len(),
                c.clusters,
                c.linked_clusters,
                c.references
            );
            if let Some(id) = c.cluster_identification() {
                println!("cluster identification {:.1} %", 100.0 * id);
            }
            let l = &o.stats.localization;
            println!(
                "distance to center {:.2} cm (var {:.2} cm2)",
                l.mean_dist_to_center, l.var_dist_to_center
            );
            if let Some(ms) = report.mean_refine_ms {
                println!("mean refine time {ms:.3} ms");
            }
            println!("reports written to {}", out.display());
        }
        Command::Bench { config, out } => {
            let cfg = Config::load(&config)?;
            let rows = write_benchmark(&cfg, &out)?;
            for r in &rows {
                println!(
                    "{:<8} step {:<4} plane {:<3} {:>9.3} ms  detections {:>4}",
                    r.method.as_str(),
                    r.step,
                    if r.plane_estimation { "on" } else { "off" },
                    r.mean_refine_ms,
                    r.detections
                );
            }
            println!("{} rows written to {}", rows.len(), out.join("bench.csv").display());
        }
        Command::GenScene { config, out } => {
            let cfg = Config::load(&config)?;
            let scene = gen_scene(&cfg)?;
            write_scene(&scene, &out)?;
            println!(
                "{} lamps, {} surfaces, {} frames written to {}",
                scene.lamps.len(),
                scene.surfaces.len(),
                scene.trajectory.len(),
                out.display()
            );
        }
    }
    Ok(())
}
