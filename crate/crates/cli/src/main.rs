use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use mbx4_core::analytic::{analytic_areas, analytic_fields};
use mbx4_core::output::{write_areas, write_fits, write_peaks, write_snapshots};
use mbx4_core::validation::{Fault, Suite, CRITERIA};
use mbx4_core::{propagate, Error, Resolution, RunConfig};

const EXIT_VALIDATION: u8 = 1;
const EXIT_SCHEMA: u8 = 2;
const EXIT_DOMAIN: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser)]
#[command(name = "mbx4", version, about = "Four-level double-Lambda pulse propagation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the closed-form soliton at the configured depths.
    Analytic {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value = "default")]
        resolution: Resolution,
    },
    /// Propagate the configured input pulses through the medium.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value = "default")]
        resolution: Resolution,
    },
    /// Run the acceptance suite.
    Validate {
        /// Print the criteria without running them.
        #[arg(long)]
        list: bool,
        /// Comma-separated criterion ids to run (default: all).
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
        #[arg(long, default_value = "default")]
        resolution: Resolution,
        /// Scale kappa in the closed-form numerator (fault injection).
        #[arg(long)]
        perturb_kappa: Option<f64>,
    },
}

#[derive(Serialize)]
struct Manifest {
    engine_version: &'static str,
    command: &'static str,
    config_sha256: String,
    resolution: Resolution,
    started: String,
    finished: String,
    status: &'static str,
    n_t: usize,
    n_z: usize,
    n_detuning: usize,
    last_good_z: Option<f64>,
    outputs: Vec<String>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Schema(_) | Error::Io(_) => EXIT_SCHEMA,
            Error::Domain(_) => EXIT_DOMAIN,
            Error::NonFinite { .. } | Error::Stability { .. } => EXIT_NUMERICAL,
            Error::Fit(_) | Error::Tracking(_) | Error::Csv(_) => EXIT_VALIDATION,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_SCHEMA);
    }
    let result = match cli.command {
        Command::Analytic { config, out, resolution } => analytic(&config, &out, resolution),
        Command::Simulate { config, out, resolution } => simulate(&config, &out, resolution),
        Command::Validate { list, only, resolution, perturb_kappa } => {
            validate(list, &only, resolution, perturb_kappa)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// `MBX4_THREADS` caps the worker pool; 0 or unset means one per core.
fn init_threads() -> Result<(), String> {
    let n = match std::env::var("MBX4_THREADS") {
        Ok(v) => v.trim().parse::<usize>().map_err(|_| format!("MBX4_THREADS must be a non-negative integer, got \"{v}\""))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn load(path: &Path, resolution: Resolution) -> Result<(RunConfig, String), Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure { code: EXIT_SCHEMA, message: format!("{}: {e}", path.display()) })?;
    let hash = format!("{:x}", Sha256::digest(text.as_bytes()));
    let cfg = RunConfig::from_json(&text)?.with_resolution(resolution);
    cfg.validate()?;
    Ok((cfg, hash))
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, Failure> {
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

fn file_names(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect()
}

fn write_manifest(out: &Path, manifest: &Manifest) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(out.join("manifest.json"), text + "\n")?;
    Ok(())
}

fn analytic(config: &Path, out: &Path, resolution: Resolution) -> Result<(), Failure> {
    let started = now();
    let (cfg, hash) = load(config, resolution)?;
    let (p, z_entry) = cfg.soliton_params()?;
    let grid = cfg.retarded_grid()?;
    std::fs::create_dir_all(out)?;

    let z_values = if cfg.output.z_values.is_empty() {
        (0..=5).map(|k| z_entry + grid.z_max * k as f64 / 5.0).collect()
    } else {
        cfg.output.z_values.clone()
    };
    let snapshots: Vec<_> = z_values.iter().map(|&z| analytic_fields(z, &grid, &p)).collect();
    let mut paths = write_snapshots(out, &snapshots, &grid)?;

    let records: Vec<_> = (0..=grid.n_z).map(|k| analytic_areas(z_entry + grid.depth(k), &p)).collect();
    let areas = out.join("areas.csv");
    write_areas(create(&areas)?, &records)?;
    paths.push(areas);

    write_manifest(
        out,
        &Manifest {
            engine_version: env!("CARGO_PKG_VERSION"),
            command: "analytic",
            config_sha256: hash,
            resolution,
            started,
            finished: now(),
            status: "ok",
            n_t: grid.n_t,
            n_z: grid.n_z,
            n_detuning: cfg.medium_spec()?.n_detuning,
            last_good_z: None,
            outputs: file_names(&paths),
        },
    )
}

fn simulate(config: &Path, out: &Path, resolution: Resolution) -> Result<(), Failure> {
    let started = now();
    let (cfg, hash) = load(config, resolution)?;
    let grid = cfg.retarded_grid()?;
    let medium = cfg.medium_spec()?;
    let solver = cfg.solver_config()?;
    let initial = cfg.initial_fields()?;
    std::fs::create_dir_all(out)?;
    let mut manifest = Manifest {
        engine_version: env!("CARGO_PKG_VERSION"),
        command: "simulate",
        config_sha256: hash,
        resolution,
        started,
        finished: String::new(),
        status: "ok",
        n_t: grid.n_t,
        n_z: grid.n_z,
        n_detuning: medium.n_detuning,
        last_good_z: None,
        outputs: Vec::new(),
    };

    let result = match propagate(&initial, &medium, &grid, &solver) {
        Ok(r) => r,
        Err(e) => {
            if let Error::NonFinite { last_good_z, .. } = e {
                manifest.status = "aborted";
                manifest.last_good_z = Some(last_good_z);
                manifest.finished = now();
                write_manifest(out, &manifest)?;
            }
            return Err(e.into());
        }
    };
    manifest.last_good_z = Some(grid.z_max);

    let mut paths = write_snapshots(out, &result.snapshots, &grid)?;
    let areas = out.join("areas.csv");
    write_areas(create(&areas)?, &result.area_records)?;
    let peaks = out.join("peaks.csv");
    write_peaks(create(&peaks)?, &result.peak_tracks)?;
    let fits = out.join("fits.csv");
    write_fits(create(&fits)?, &result.snapshots, &grid)?;
    paths.extend([areas, peaks, fits]);

    manifest.outputs = file_names(&paths);
    manifest.finished = now();
    write_manifest(out, &manifest)
}

fn validate(list: bool, only: &[u8], resolution: Resolution, perturb_kappa: Option<f64>) -> Result<(), Failure> {
    if list {
        for c in &CRITERIA {
            let limit = c.runtime_limit.map(|d| format!(" (< {} s)", d.as_secs())).unwrap_or_default();
            println!("{} {:<18} {}{limit}", c.id, c.key, c.title);
        }
        return Ok(());
    }
    if let Some(bad) = only.iter().find(|id| !CRITERIA.iter().any(|c| c.id == **id)) {
        return Err(Failure { code: EXIT_SCHEMA, message: format!("unknown criterion id {bad}") });
    }
    let ids: Vec<u8> = if only.is_empty() { CRITERIA.iter().map(|c| c.id).collect() } else { only.to_vec() };
    let suite = Suite::new(resolution, Fault { kappa_factor: perturb_kappa });
    let mut failed = Vec::new();
    for id in ids {
        let report = suite.run(id);
        print!("{}", report.render());
        if !report.passed() {
            failed.push(format!("{} ({})", report.criterion.id, report.criterion.key));
        }
    }
    if failed.is_empty() {
        println!("all criteria passed");
        Ok(())
    } else {
        Err(Failure { code: EXIT_VALIDATION, message: format!("failing criteria: {}", failed.join(", ")) })
    }
}
