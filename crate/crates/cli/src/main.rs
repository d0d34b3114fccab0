use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{DateTime, NaiveDate, Utc};
use clap::{Args, Parser, Subcommand};

use star_core::cube::io::{read_raster, RasterFormat};
use star_core::cube::synth::{synth_into_cube, Polygon, SlopePlane, SynthSpec, WaterShape};
use star_core::cube::{ingest, report, run_pipeline, BandKind, Cube, IngestRequest, PipelineConfig};
use star_core::raster::OrbitPass;
use star_core::{Result, StarError, Units};

#[derive(Parser)]
#[command(name = "star", version, about = "Sentinel-1 GRD preprocessing and Otsu flood mapping on a local data cube")]
struct Cli {
    /// Cube directory.
    #[arg(long, global = true, default_value = "cube")]
    cube: PathBuf,
    /// Pipeline configuration (TOML, dotted keys).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for synthetic scene generation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run identifier; outputs go to <cube>/derived/<run-id>/.
    #[arg(long, global = true)]
    run_id: Option<String>,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Copy a scene's rasters into the cube and record its metadata.
    Ingest(IngestArgs),
    /// Generate a speckled synthetic scene and ingest it.
    Synth(SynthArgs),
    /// Run the preprocessing and flood-mapping pipeline.
    Run,
    /// Print the flood report and provenance of a run.
    Report {
        /// Run to report on (defaults to --run-id, then `default`).
        run: Option<String>,
    },
    /// Print georeferencing and statistics of a raster file.
    Inspect {
        raster: PathBuf,
        /// CRS to assume for files that carry none (.sgrd).
        #[arg(long)]
        crs: Option<String>,
    },
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    scene_id: String,
    /// Acquisition time, RFC 3339 or YYYY-MM-DD.
    #[arg(long, value_parser = parse_time)]
    date: DateTime<Utc>,
    #[arg(long, value_parser = parse_pass, default_value = "ASC")]
    pass: OrbitPass,
    #[arg(long, default_value_t = 0)]
    relative_orbit: i32,
    #[arg(long, default_value_t = star_core::speckle::DEFAULT_LOOKS)]
    looks: f64,
    #[arg(long)]
    crs: Option<String>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    vv: Option<PathBuf>,
    #[arg(long)]
    vh: Option<PathBuf>,
    #[arg(long)]
    angle: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    scene_id: String,
    #[arg(long, value_parser = parse_time)]
    date: DateTime<Utc>,
    #[arg(long, value_parser = parse_pass, default_value = "ASC")]
    pass: OrbitPass,
    #[arg(long, default_value_t = 1)]
    relative_orbit: i32,
    /// Square scene size; overridden by --width/--height.
    #[arg(long, default_value_t = 512)]
    size: usize,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long, default_value_t = 10.0)]
    pixel_size: f64,
    #[arg(long, default_value = "EPSG:32632")]
    crs: String,
    #[arg(long, default_value_t = -8.0, allow_negative_numbers = true)]
    land_db: f64,
    #[arg(long, default_value_t = -22.0, allow_negative_numbers = true)]
    water_db: f64,
    #[arg(long, default_value_t = 4.0)]
    looks: f64,
    /// Water polygon in pixel coordinates: `rect:x0,y0,x1,y1` or `x,y x,y x,y ...`. Repeatable.
    #[arg(long)]
    water: Vec<String>,
    /// Terrain slope of a planar DEM, degrees (writes <cube>/dem.<ext>).
    #[arg(long)]
    slope_deg: Option<f64>,
    /// Downslope direction of the DEM plane, degrees from north.
    #[arg(long, default_value_t = 90.0)]
    aspect_deg: f64,
    /// Columns of border noise on each side.
    #[arg(long, default_value_t = 0)]
    border_noise_px: usize,
    /// Bright point target `col,row,dB`. Repeatable.
    #[arg(long, allow_negative_numbers = true)]
    point_target: Vec<String>,
    #[arg(long, default_value = "tif")]
    format: String,
}

fn parse_time(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map(|d| d.and_hms_opt(0, 0, 0).expect("midnight").and_utc())
        .map_err(|_| format!("`{s}` is neither RFC 3339 nor YYYY-MM-DD"))
}

fn parse_pass(s: &str) -> std::result::Result<OrbitPass, String> {
    match s.to_ascii_uppercase().as_str() {
        "ASC" | "ASCENDING" => Ok(OrbitPass::Ascending),
        "DESC" | "DESCENDING" => Ok(OrbitPass::Descending),
        _ => Err(format!("`{s}` is not ASC or DESC")),
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::from_file(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn cmd_ingest(cli: &Cli, a: &IngestArgs) -> Result<()> {
    let mut bands = Vec::new();
    for (kind, path) in [(BandKind::Vv, &a.vv), (BandKind::Vh, &a.vh), (BandKind::Angle, &a.angle)] {
        if let Some(p) = path {
            bands.push((kind, p.clone()));
        }
    }
    let mut cube = Cube::open(&cli.cube)?;
    let m = ingest(
        &mut cube,
        &IngestRequest {
            scene_id: a.scene_id.clone(),
            acquired: a.date,
            orbit_pass: a.pass,
            relative_orbit: a.relative_orbit,
            looks: a.looks,
            crs_id: a.crs.clone(),
            width: a.width,
            height: a.height,
            bands,
        },
    )?;
    println!("{}", serde_json::to_string_pretty(&m)?);
    Ok(())
}

fn cmd_synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    let format: RasterFormat = a.format.parse()?;
    let mut spec = SynthSpec::new(&a.scene_id, a.date, a.width.unwrap_or(a.size), a.height.unwrap_or(a.size));
    spec.orbit_pass = a.pass;
    spec.relative_orbit = a.relative_orbit;
    spec.pixel_size = a.pixel_size;
    spec.crs_id = a.crs.clone();
    spec.land_db = a.land_db;
    spec.water_db = a.water_db;
    spec.looks = a.looks;
    spec.water = WaterShape::Polygons(a.water.iter().map(|w| w.parse::<Polygon>()).collect::<Result<_>>()?);
    spec.slope = a.slope_deg.map(|slope_deg| SlopePlane {
        slope_deg,
        aspect_deg: a.aspect_deg,
    });
    spec.border_noise_px = a.border_noise_px;
    spec.point_targets = a
        .point_target
        .iter()
        .map(|t| {
            let parts: Vec<&str> = t.split(',').collect();
            let bad = || StarError::param(format!("point target `{t}` must be col,row,dB"));
            if parts.len() != 3 {
                return Err(bad());
            }
            Ok((
                parts[0].trim().parse().map_err(|_| bad())?,
                parts[1].trim().parse().map_err(|_| bad())?,
                parts[2].trim().parse().map_err(|_| bad())?,
            ))
        })
        .collect::<Result<_>>()?;
    let mut cube = Cube::open(&cli.cube)?;
    let (m, scene) = synth_into_cube(&mut cube, &spec, cli.seed, format)?;
    log::info!("scene `{}`: {} truth water pixels", m.scene_id, scene.truth.count());
    println!("{}", serde_json::to_string_pretty(&m)?);
    Ok(())
}

fn run_id(cli: &Cli, cfg: &PipelineConfig) -> String {
    cli.run_id
        .clone()
        .or_else(|| cfg.run_id.clone())
        .unwrap_or_else(|| "default".into())
}

fn cmd_run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    let cube = Cube::open_existing(&cli.cube)?;
    let id = run_id(cli, &cfg);
    let out = run_pipeline(&cube, &cfg, &id)?;
    log::info!(
        "threshold {:.3} dB ({}); outputs in {}",
        out.threshold.threshold_db,
        out.threshold.source,
        out.run_dir.display()
    );
    print!("{}", out.report.to_csv());
    Ok(())
}

fn cmd_report(cli: &Cli, run: Option<&str>) -> Result<()> {
    let cube = Cube::open_existing(&cli.cube)?;
    let id = run
        .map(str::to_owned)
        .or_else(|| cli.run_id.clone())
        .unwrap_or_else(|| "default".into());
    print!("{}", report(&cube, &id)?);
    Ok(())
}

fn cmd_inspect(path: &Path, crs: Option<&str>) -> Result<()> {
    let g = read_raster(path, Units::Dimensionless, crs.or(Some("unknown")))?;
    let t = g.transform();
    println!("file:      {}", path.display());
    println!("size:      {} x {}", g.width(), g.height());
    println!("crs:       {}", g.crs_id());
    println!("units:     {}", g.units());
    println!("origin:    ({}, {})", t.origin_x, t.origin_y);
    println!("pixel:     {} x {}", t.pixel_w, t.pixel_h);
    println!("valid:     {} of {}", g.valid_count(), g.len());
    if let Some(mean) = g.mean() {
        let (lo, hi) = g
            .valid_values()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        println!("min/max:   {lo} / {hi}");
        println!("mean:      {mean}");
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(cli, a),
        Command::Synth(a) => cmd_synth(cli, a),
        Command::Run => cmd_run(cli),
        Command::Report { run } => cmd_report(cli, run.as_deref()),
        Command::Inspect { raster, crs } => cmd_inspect(raster, crs.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
