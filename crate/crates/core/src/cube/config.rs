//! Pipeline configuration from a flat TOML document of dotted keys.
//!
//! Both `speckle.radius = 2` and a `[speckle]` table with `radius = 2` are
//! accepted; nested tables are flattened to dotted keys before lookup. Any
//! key not listed in [`KNOWN_KEYS`] is rejected.

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::NaiveDate;
use serde::Serialize;

use crate::calibration::{AngleRange, DbRange};
use crate::cube::io::RasterFormat;
use crate::error::{Result, StarError};
use crate::floodmap::{ChessboardParams, DEFAULT_FIXED_THRESHOLD_DB};
use crate::objects::{Connectivity, SmoothMode};
use crate::raster::{KernelShape, OrbitPass, Polarization, Units};
use crate::speckle::{SpeckleFilter, SpeckleParams};
use crate::temporal::CompositeStat;
use crate::terrain::{default_heading_deg, FlattenModel};

pub const KNOWN_KEYS: &[&str] = &[
    "run.id",
    "pipeline.steps",
    "output.dir",
    "output.format",
    "pre.start",
    "pre.end",
    "during.start",
    "during.end",
    "angle_min_deg",
    "angle_max_deg",
    "db_min",
    "db_max",
    "speckle.filter",
    "speckle.radius",
    "speckle.looks",
    "speckle.xi",
    "speckle.base_filter",
    "terrain.model",
    "terrain.max_slope_deg",
    "terrain.dem_path",
    "terrain.heading_asc_deg",
    "terrain.heading_desc_deg",
    "objects.connectivity",
    "objects.min_pixels",
    "smooth.radius",
    "smooth.shape",
    "smooth.mode",
    "composite.stat",
    "composite.window_days",
    "composite.per_pass",
    "floodmap.cell_px",
    "floodmap.bimodality_min",
    "floodmap.bins",
    "floodmap.class_floor",
    "floodmap.fixed_threshold_db",
    "floodmap.polarization",
    "floodmap.otsu_input",
    "area.meters_per_degree_x",
    "area.meters_per_degree_y",
];

/// Per-scene processing steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    MaskBorderAngle,
    MaskExtremes,
    ToLinear,
    Speckle,
    Flatten,
    SlopeMask,
    ToDb,
    Smooth,
}

impl Step {
    pub const ALL: [Step; 8] = [
        Step::MaskBorderAngle,
        Step::MaskExtremes,
        Step::ToLinear,
        Step::Speckle,
        Step::Flatten,
        Step::SlopeMask,
        Step::ToDb,
        Step::Smooth,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Step::MaskBorderAngle => "mask_border_angle",
            Step::MaskExtremes => "mask_extremes",
            Step::ToLinear => "to_linear",
            Step::Speckle => "speckle",
            Step::Flatten => "flatten",
            Step::SlopeMask => "slope_mask",
            Step::ToDb => "to_db",
            Step::Smooth => "smooth",
        }
    }

    /// Units accepted on input and produced on output; `None` keeps the input.
    fn unit_rule(&self) -> (&'static [Units], Option<Units>) {
        const ANY: &[Units] = &[Units::Db, Units::Linear];
        match self {
            Step::MaskBorderAngle | Step::SlopeMask => (ANY, None),
            Step::MaskExtremes => (&[Units::Db], None),
            Step::ToLinear => (&[Units::Db], Some(Units::Linear)),
            Step::Speckle | Step::Flatten => (&[Units::Linear], None),
            Step::ToDb => (&[Units::Linear], Some(Units::Db)),
            Step::Smooth => (ANY, None),
        }
    }
}

impl std::str::FromStr for Step {
    type Err = StarError;

    fn from_str(s: &str) -> Result<Self> {
        Step::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| StarError::Config(format!("unknown pipeline step `{s}`")))
    }
}

/// Checks that every step receives the units it needs, starting from dB
/// input and ending in dB for thresholding.
pub fn validate_steps(steps: &[Step]) -> Result<()> {
    let mut seen = Vec::new();
    let mut units = Units::Db;
    for step in steps {
        if seen.contains(step) {
            return Err(StarError::Config(format!("step `{}` listed twice", step.name())));
        }
        seen.push(*step);
        let (accepts, produces) = step.unit_rule();
        if !accepts.contains(&units) {
            return Err(StarError::Config(format!(
                "step `{}` needs {} input but receives {units} at that position",
                step.name(),
                accepts.iter().map(|u| u.to_string()).collect::<Vec<_>>().join(" or ")
            )));
        }
        if let Some(u) = produces {
            units = u;
        }
    }
    if units != Units::Db {
        return Err(StarError::Config("pipeline must end in dB (add `to_db`)".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeckleMode {
    Single(SpeckleFilter),
    Multitemporal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OtsuInput {
    /// Composite of the final per-scene outputs.
    Smoothed,
    /// Composite of the outputs before the `smooth` step.
    Filtered,
}

/// Inclusive range of acquisition dates (UTC).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct DateWindow {
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
}

impl DateWindow {
    pub fn is_set(&self) -> bool {
        self.start.is_some() || self.end.is_some()
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start.is_none_or(|s| d >= s) && self.end.is_none_or(|e| d <= e)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpeckleConfig {
    pub mode: SpeckleMode,
    pub base_filter: SpeckleFilter,
    pub params: SpeckleParams,
    /// Overrides the per-scene looks from the manifest.
    pub looks: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TerrainConfig {
    pub model: FlattenModel,
    pub max_slope_deg: f64,
    pub dem_path: Option<PathBuf>,
    pub heading_asc_deg: f64,
    pub heading_desc_deg: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ObjectsConfig {
    pub connectivity: Connectivity,
    pub min_pixels: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SmoothConfig {
    pub radius: usize,
    pub shape: KernelShape,
    pub mode: SmoothMode,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompositeConfig {
    pub stat: CompositeStat,
    pub window_days: Option<u32>,
    pub per_pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FloodmapConfig {
    pub cell_px: usize,
    pub bimodality_min: f64,
    pub bins: usize,
    pub class_floor: f64,
    pub fixed_threshold_db: f64,
    pub polarization: Polarization,
    pub otsu_input: OtsuInput,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineConfig {
    pub run_id: Option<String>,
    pub steps: Vec<Step>,
    pub output_dir: Option<PathBuf>,
    pub output_format: RasterFormat,
    pub pre: DateWindow,
    pub during: DateWindow,
    pub angle_range: AngleRange,
    pub db_range: DbRange,
    pub speckle: SpeckleConfig,
    pub terrain: TerrainConfig,
    pub objects: ObjectsConfig,
    pub smooth: SmoothConfig,
    pub composite: CompositeConfig,
    pub floodmap: FloodmapConfig,
    pub meters_per_degree: Option<(f64, f64)>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            run_id: None,
            steps: Step::ALL.to_vec(),
            output_dir: None,
            output_format: RasterFormat::GeoTiff,
            pre: DateWindow::default(),
            during: DateWindow::default(),
            angle_range: AngleRange::default(),
            db_range: DbRange::default(),
            speckle: SpeckleConfig {
                mode: SpeckleMode::Single(SpeckleFilter::RefinedLee),
                base_filter: SpeckleFilter::Lee,
                params: SpeckleParams::default(),
                looks: None,
            },
            terrain: TerrainConfig {
                model: FlattenModel::Direct,
                max_slope_deg: 15.0,
                dem_path: None,
                heading_asc_deg: default_heading_deg(OrbitPass::Ascending),
                heading_desc_deg: default_heading_deg(OrbitPass::Descending),
            },
            objects: ObjectsConfig {
                connectivity: Connectivity::Eight,
                min_pixels: 8,
            },
            smooth: SmoothConfig {
                radius: 1,
                shape: KernelShape::Square,
                mode: SmoothMode::Mean,
            },
            composite: CompositeConfig {
                stat: CompositeStat::Median,
                window_days: None,
                per_pass: true,
            },
            floodmap: FloodmapConfig {
                cell_px: 64,
                bimodality_min: 0.75,
                bins: 256,
                class_floor: 0.1,
                fixed_threshold_db: DEFAULT_FIXED_THRESHOLD_DB,
                polarization: Polarization::VV,
                otsu_input: OtsuInput::Smoothed,
            },
            meters_per_degree: None,
        }
    }
}

fn flatten_table(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten_table(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

fn bad(key: &str, expected: &str) -> StarError {
    StarError::Config(format!("`{key}` must be {expected}"))
}

fn as_str<'a>(key: &str, v: &'a toml::Value) -> Result<&'a str> {
    v.as_str().ok_or_else(|| bad(key, "a string"))
}

fn as_f64(key: &str, v: &toml::Value) -> Result<f64> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(bad(key, "a number")),
    }
}

fn as_usize(key: &str, v: &toml::Value) -> Result<usize> {
    v.as_integer()
        .and_then(|i| usize::try_from(i).ok())
        .ok_or_else(|| bad(key, "a non-negative integer"))
}

fn as_bool(key: &str, v: &toml::Value) -> Result<bool> {
    v.as_bool().ok_or_else(|| bad(key, "a boolean"))
}

fn as_date(key: &str, v: &toml::Value) -> Result<NaiveDate> {
    match v {
        toml::Value::Datetime(d) => d
            .date
            .and_then(|d| NaiveDate::from_ymd_opt(d.year as i32, d.month as u32, d.day as u32))
            .ok_or_else(|| bad(key, "a date")),
        toml::Value::String(s) => NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| bad(key, "a YYYY-MM-DD date")),
        _ => Err(bad(key, "a date")),
    }
}

fn parse<T: std::str::FromStr<Err = StarError>>(key: &str, v: &toml::Value) -> Result<T> {
    as_str(key, v)?
        .parse()
        .map_err(|e: StarError| StarError::Config(format!("`{key}`: {e}")))
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| StarError::Config(format!("invalid config: {e}")))?;
        let mut flat = BTreeMap::new();
        flatten_table("", &table, &mut flat);
        Self::from_pairs(&flat)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| StarError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn from_pairs(pairs: &BTreeMap<String, toml::Value>) -> Result<Self> {
        let mut c = PipelineConfig::default();
        let (mut amin, mut amax) = (c.angle_range.min_deg(), c.angle_range.max_deg());
        let (mut dmin, mut dmax) = (c.db_range.min_db(), c.db_range.max_db());
        let mut mpd = (None, None);
        for (key, v) in pairs {
            let k = key.as_str();
            match k {
                "run.id" => c.run_id = Some(as_str(k, v)?.to_owned()),
                "pipeline.steps" => {
                    let arr = v.as_array().ok_or_else(|| bad(k, "an array of step names"))?;
                    c.steps = arr
                        .iter()
                        .map(|s| parse::<Step>(k, s))
                        .collect::<Result<_>>()?;
                }
                "output.dir" => c.output_dir = Some(PathBuf::from(as_str(k, v)?)),
                "output.format" => c.output_format = parse(k, v)?,
                "pre.start" => c.pre.start = Some(as_date(k, v)?),
                "pre.end" => c.pre.end = Some(as_date(k, v)?),
                "during.start" => c.during.start = Some(as_date(k, v)?),
                "during.end" => c.during.end = Some(as_date(k, v)?),
                "angle_min_deg" => amin = as_f64(k, v)?,
                "angle_max_deg" => amax = as_f64(k, v)?,
                "db_min" => dmin = as_f64(k, v)?,
                "db_max" => dmax = as_f64(k, v)?,
                "speckle.filter" => {
                    let s = as_str(k, v)?;
                    c.speckle.mode = if s == "multitemporal" {
                        SpeckleMode::Multitemporal
                    } else {
                        SpeckleMode::Single(parse(k, v)?)
                    };
                }
                "speckle.radius" => c.speckle.params.radius = as_usize(k, v)?,
                "speckle.looks" => c.speckle.looks = Some(as_f64(k, v)?),
                "speckle.xi" => c.speckle.params.sigma_xi = as_f64(k, v)?,
                "speckle.base_filter" => c.speckle.base_filter = parse(k, v)?,
                "terrain.model" => c.terrain.model = parse(k, v)?,
                "terrain.max_slope_deg" => c.terrain.max_slope_deg = as_f64(k, v)?,
                "terrain.dem_path" => c.terrain.dem_path = Some(PathBuf::from(as_str(k, v)?)),
                "terrain.heading_asc_deg" => c.terrain.heading_asc_deg = as_f64(k, v)?,
                "terrain.heading_desc_deg" => c.terrain.heading_desc_deg = as_f64(k, v)?,
                "objects.connectivity" => c.objects.connectivity = parse(k, v)?,
                "objects.min_pixels" => c.objects.min_pixels = as_usize(k, v)?,
                "smooth.radius" => c.smooth.radius = as_usize(k, v)?,
                "smooth.shape" => c.smooth.shape = parse(k, v)?,
                "smooth.mode" => c.smooth.mode = parse(k, v)?,
                "composite.stat" => c.composite.stat = parse(k, v)?,
                "composite.window_days" => {
                    c.composite.window_days = Some(u32::try_from(as_usize(k, v)?).map_err(|_| bad(k, "a day count"))?)
                }
                "composite.per_pass" => c.composite.per_pass = as_bool(k, v)?,
                "floodmap.cell_px" => c.floodmap.cell_px = as_usize(k, v)?,
                "floodmap.bimodality_min" => c.floodmap.bimodality_min = as_f64(k, v)?,
                "floodmap.bins" => c.floodmap.bins = as_usize(k, v)?,
                "floodmap.class_floor" => c.floodmap.class_floor = as_f64(k, v)?,
                "floodmap.fixed_threshold_db" => c.floodmap.fixed_threshold_db = as_f64(k, v)?,
                "floodmap.polarization" => {
                    c.floodmap.polarization = match as_str(k, v)? {
                        "VV" | "vv" => Polarization::VV,
                        "VH" | "vh" => Polarization::VH,
                        _ => return Err(bad(k, "VV or VH")),
                    }
                }
                "floodmap.otsu_input" => {
                    c.floodmap.otsu_input = match as_str(k, v)? {
                        "smoothed" => OtsuInput::Smoothed,
                        "filtered" => OtsuInput::Filtered,
                        _ => return Err(bad(k, "`smoothed` or `filtered`")),
                    }
                }
                "area.meters_per_degree_x" => mpd.0 = Some(as_f64(k, v)?),
                "area.meters_per_degree_y" => mpd.1 = Some(as_f64(k, v)?),
                unknown => return Err(StarError::Config(format!("unknown config key `{unknown}`"))),
            }
        }
        let cfg_err = |e: StarError| StarError::Config(e.to_string());
        c.angle_range = AngleRange::new(amin, amax).map_err(cfg_err)?;
        c.db_range = DbRange::new(dmin, dmax).map_err(cfg_err)?;
        c.meters_per_degree = match mpd {
            (Some(x), Some(y)) => Some((x, y)),
            (None, None) => None,
            _ => {
                return Err(StarError::Config(
                    "set both area.meters_per_degree_x and area.meters_per_degree_y".into(),
                ))
            }
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: StarError| StarError::Config(e.to_string());
        validate_steps(&self.steps)?;
        self.speckle.params.validate().map_err(cfg_err)?;
        if let Some(l) = self.speckle.looks {
            SpeckleParams {
                looks: l,
                ..self.speckle.params
            }
            .validate()
            .map_err(cfg_err)?;
        }
        if !(self.terrain.max_slope_deg > 0.0 && self.terrain.max_slope_deg < 90.0) {
            return Err(StarError::Config("terrain.max_slope_deg must lie in (0, 90)".into()));
        }
        if self.objects.min_pixels < 1 {
            return Err(StarError::Config("objects.min_pixels must be at least 1".into()));
        }
        self.chessboard_params().validate().map_err(cfg_err)?;
        if let Some(id) = &self.run_id {
            if !crate::cube::manifest::is_valid_id(id) {
                return Err(StarError::Config(format!("invalid run id `{id}`")));
            }
        }
        Ok(())
    }

    pub fn chessboard_params(&self) -> ChessboardParams {
        ChessboardParams {
            cell_px: self.floodmap.cell_px,
            bimodality_min: self.floodmap.bimodality_min,
            bins: self.floodmap.bins,
            db_min: self.db_range.min_db(),
            db_max: self.db_range.max_db(),
            class_floor: self.floodmap.class_floor,
        }
    }

    /// Windows after applying `composite.window_days` to windows with only an
    /// end date.
    pub fn resolved_windows(&self) -> (DateWindow, DateWindow) {
        let fill = |mut w: DateWindow| {
            if let (None, Some(end), Some(days)) = (w.start, w.end, self.composite.window_days) {
                w.start = end.checked_sub_days(chrono::Days::new(u64::from(days)));
            }
            w
        };
        (fill(self.pre), fill(self.during))
    }
}
