use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use focalsweep_cli::commands::{
    cmd_blur_range, cmd_db, cmd_dotgrid, cmd_fixtures, cmd_plan, cmd_render, cmd_seam_demo, load_database,
    load_protocol,
};
use focalsweep_cli::{ProjectConfig, Result};

/// Spatial defocusing with a focal-sweep lens and a synchronised projector.
#[derive(Parser)]
#[command(name = "focalsweep", version)]
struct Cli {
    /// Project configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Near and far blur borders over a grid of lens powers (CSV + SVG).
    BlurRange {
        #[arg(long, default_value_t = 10.0)]
        max_d: f64,
        #[arg(long, default_value_t = 0.05)]
        step_d: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build and store the waveform database.
    Db {
        #[arg(long)]
        out: PathBuf,
    },
    /// Plan the sweep, schedule and projector masks for a scene.
    Plan {
        #[arg(long)]
        scene: PathBuf,
        /// Stored waveform database; built on the fly when omitted.
        #[arg(long)]
        db: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate the perceived view of a planned scene.
    Render {
        #[arg(long)]
        scene: PathBuf,
        /// Directory written by `plan`.
        #[arg(long)]
        plan: PathBuf,
        /// Layer to look at; defaults to the scene's gaze or first focus layer.
        #[arg(long)]
        gaze: Option<String>,
        /// Output PNG; a provenance JSON is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Dot-grid blur measurement, fixed lens versus swept lens (CSV).
    Dotgrid {
        /// Protocol JSON; the default protocol when omitted.
        #[arg(long)]
        protocol: Option<PathBuf>,
        /// Use each frame's nominal power instead of integrating the sweep.
        #[arg(long)]
        no_integrate: bool,
        #[arg(long)]
        db: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render the seam conditions with binary and feathered masks.
    SeamDemo {
        #[arg(long)]
        db: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the bundled fixture scenes, protocol and configuration.
    Fixtures {
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    let cfg = ProjectConfig::load_or_default(cli.config.as_deref())?;
    match cli.command {
        Command::BlurRange { max_d, step_d, out } => {
            let rows = cmd_blur_range(&cfg, max_d, step_d, &out)?;
            println!("wrote {} rows to {}", rows.len(), out.display());
        }
        Command::Db { out } => {
            let db = cmd_db(&cfg, &out)?;
            println!("wrote {} waveforms to {}", db.len(), out.display());
        }
        Command::Plan { scene, db, out } => {
            let db = load_database(&cfg, db.as_deref())?;
            let r = cmd_plan(&cfg, &scene, &db, &out)?;
            println!(
                "sweep 0–{:.4} D, {} slots, plan in {}",
                r.p_high_diopters,
                r.slots,
                out.display()
            );
        }
        Command::Render { scene, plan, gaze, out } => {
            let r = cmd_render(&cfg, &scene, &plan, gaze.as_deref(), &out)?;
            for (layer, psf) in &r.effective_psf_px {
                println!("{layer}: PSF {psf:.3} px");
            }
        }
        Command::Dotgrid {
            protocol,
            no_integrate,
            db,
            out,
        } => {
            let protocol = match protocol {
                Some(p) => load_protocol(&p)?,
                None => Default::default(),
            };
            let db = load_database(&cfg, db.as_deref())?;
            let rows = cmd_dotgrid(&cfg, &protocol, !no_integrate, &db, &out)?;
            println!("wrote {} rows to {}", rows.len(), out.display());
        }
        Command::SeamDemo { db, out } => {
            let db = load_database(&cfg, db.as_deref())?;
            for r in cmd_seam_demo(&cfg, &db, &out)? {
                println!(
                    "{} {} D {}: dark {:.2}/255, bright {:.2}/255",
                    r.geometry,
                    r.power_d,
                    if r.feathered { "feathered" } else { "binary" },
                    r.max_dark_255,
                    r.max_bright_255
                );
            }
        }
        Command::Fixtures { out } => {
            for p in cmd_fixtures(&out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
