//! Per-scene preprocessing, temporal compositing and flood mapping over a
//! cube, with every intermediate written to `derived/<run>/<step>/`.
//!
//! Default per-scene order: mask_border_angle → mask_extremes → to_linear →
//! speckle → flatten → slope_mask → to_db → smooth. The scenes of each date
//! window are then composited, the during-event composite is thresholded
//! (chessboard Otsu, then global Otsu, then the fixed threshold) and both
//! composites are turned into water masks whose difference is the flood.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::calibration::{mask_border_angle, mask_extremes, to_db, to_linear};
use crate::cube::config::{OtsuInput, PipelineConfig, SpeckleMode, Step};
use crate::cube::io::{read_raster, write_mask, write_raster};
use crate::cube::manifest::{Cube, SceneManifest};
use crate::error::{Result, StarError};
use crate::floodmap::{chessboard_otsu, flood_extent, otsu, water_mask, FloodReport, Histogram};
use crate::objects::smooth;
use crate::raster::{
    pixel_area_m2, resample_to, Kernel, LayerMeta, OrbitPass, RasterGrid, ResampleMethod, StackLayer, TimeStack, Units,
};
use crate::speckle::{multitemporal, SpeckleParams};
use crate::temporal::{align_stack, composite, composite_per_pass};
use crate::terrain::{flatten, slope_mask, DemGrid, SarGeometry};

type Grid = RasterGrid<f64>;

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct FileRef {
    /// Path relative to the cube root.
    pub path: String,
    pub sha256: String,
}

/// One provenance entry: a step applied to (or skipped for) a scene, or a
/// run-level product.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ProvenanceRecord {
    pub step: String,
    pub scene_id: Option<String>,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub params: serde_json::Value,
    pub inputs: Vec<FileRef>,
    pub output: Option<FileRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ThresholdChoice {
    pub threshold_db: f64,
    /// `chessboard`, `global_otsu` or `fixed`.
    pub source: String,
    pub bimodality: Option<f64>,
    pub selected_cells: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_id: String,
    pub run_dir: PathBuf,
    pub report: FloodReport,
    pub threshold: ThresholdChoice,
    pub provenance: Vec<ProvenanceRecord>,
}

struct SceneState<'a> {
    scene: &'a SceneManifest,
    grid: Grid,
    angle: Option<Grid>,
    /// File the current grid was read from or last written to.
    source: PathBuf,
    /// Grid as it stood before the smooth step.
    unsmoothed: Option<Grid>,
}

enum StepOutcome {
    Done(Grid),
    Skipped(String),
}

struct Ctx<'a> {
    cube: &'a Cube,
    cfg: &'a PipelineConfig,
    run_dir: PathBuf,
    dem: Option<DemGrid<f64>>,
}

impl Ctx<'_> {
    fn rel(&self, p: &Path) -> String {
        p.strip_prefix(self.cube.root()).unwrap_or(p).display().to_string()
    }

    fn file_ref(&self, p: &Path) -> Result<FileRef> {
        Ok(FileRef {
            path: self.rel(p),
            sha256: sha256_file(p)?,
        })
    }

    fn step_params(&self, step: Step) -> serde_json::Value {
        let c = self.cfg;
        let v = match step {
            Step::MaskBorderAngle => serde_json::to_value(c.angle_range),
            Step::MaskExtremes => serde_json::to_value(c.db_range),
            Step::ToLinear | Step::ToDb => Ok(serde_json::Value::Null),
            Step::Speckle => serde_json::to_value(&c.speckle),
            Step::Flatten | Step::SlopeMask => serde_json::to_value(&c.terrain),
            Step::Smooth => serde_json::to_value(&c.smooth),
        };
        v.expect("config serializes")
    }

    fn raster_path(&self, dir: &str, name: &str) -> PathBuf {
        self.run_dir.join(dir).join(format!("{name}.{}", self.cfg.output_format.extension()))
    }

    /// Writes a raster with its provenance sidecar.
    fn persist(&self, record: &mut ProvenanceRecord, path: &Path, grid: &Grid) -> Result<()> {
        write_raster(path, grid)?;
        record.output = Some(self.file_ref(path)?);
        write_sidecar(path, record)
    }

    fn dem_for(&self, scene: &SceneManifest) -> Result<Option<DemGrid<f64>>> {
        let Some(dem) = &self.dem else {
            return Ok(None);
        };
        let spec = scene.grid_spec();
        if dem.spec().same_lattice(&spec) && dem.spec().crs_id == spec.crs_id {
            return Ok(Some(dem.clone()));
        }
        let g = resample_to(dem.grid(), &spec, ResampleMethod::Bilinear)?;
        let mut d = DemGrid::new(g)?;
        if let Some((mx, my)) = self.cfg.meters_per_degree {
            d = d.with_meters_per_degree(mx, my);
        }
        Ok(Some(d))
    }

    fn heading(&self, pass: OrbitPass) -> f64 {
        match pass {
            OrbitPass::Ascending => self.cfg.terrain.heading_asc_deg,
            OrbitPass::Descending => self.cfg.terrain.heading_desc_deg,
        }
    }

    fn speckle_params(&self, scene: &SceneManifest) -> SpeckleParams {
        SpeckleParams {
            looks: self.cfg.speckle.looks.unwrap_or(scene.looks),
            ..self.cfg.speckle.params
        }
    }

    fn apply(&self, step: Step, st: &SceneState) -> Result<StepOutcome> {
        let c = self.cfg;
        let g = &st.grid;
        Ok(StepOutcome::Done(match step {
            Step::MaskBorderAngle => match &st.angle {
                Some(a) => mask_border_angle(g, a, c.angle_range)?,
                None => return Ok(StepOutcome::Skipped("scene has no angle band".into())),
            },
            Step::MaskExtremes => mask_extremes(g, c.db_range)?,
            Step::ToLinear => to_linear(g)?,
            Step::Speckle => match c.speckle.mode {
                SpeckleMode::Single(f) => f.apply(g, &self.speckle_params(st.scene))?,
                SpeckleMode::Multitemporal => unreachable!("stack-level step"),
            },
            Step::Flatten => {
                let Some(dem) = self.dem_for(st.scene)? else {
                    return Ok(StepOutcome::Skipped("no DEM configured (terrain.dem_path)".into()));
                };
                let Some(angle) = &st.angle else {
                    return Ok(StepOutcome::Skipped("scene has no angle band".into()));
                };
                let pass = st.scene.orbit_pass;
                let geom = SarGeometry::new(angle.clone(), self.heading(pass), pass)?;
                flatten(g, &dem, &geom, c.terrain.model)?
            }
            Step::SlopeMask => {
                let Some(dem) = self.dem_for(st.scene)? else {
                    return Ok(StepOutcome::Skipped("no DEM configured (terrain.dem_path)".into()));
                };
                slope_mask(g, &dem, c.terrain.max_slope_deg)?
            }
            Step::ToDb => to_db(g)?,
            Step::Smooth => smooth(g, &Kernel::with_shape(c.smooth.radius, c.smooth.shape), c.smooth.mode)?,
        }))
    }
}

fn write_sidecar(path: &Path, record: &ProvenanceRecord) -> Result<()> {
    let mut side = path.as_os_str().to_owned();
    side.push(".json");
    std::fs::write(PathBuf::from(side), serde_json::to_vec_pretty(record)?)?;
    Ok(())
}

fn step_err(step: &str, scene: &str, e: StarError) -> StarError {
    StarError::Step {
        step: step.into(),
        scene: scene.into(),
        source: Box::new(e),
    }
}

fn resolve(cube: &Cube, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        cube.root().join(p)
    }
}

/// Splits scenes into pre- and during-event sets. Without configured
/// windows the latest acquisition date is the event and everything earlier
/// is the reference.
fn select_windows<'a>(scenes: &[&'a SceneManifest], cfg: &PipelineConfig) -> Result<(Vec<&'a SceneManifest>, Vec<&'a SceneManifest>)> {
    let (pre_w, during_w) = cfg.resolved_windows();
    let (pre, during): (Vec<_>, Vec<_>) = if pre_w.is_set() || during_w.is_set() {
        let pick = |w: &crate::cube::config::DateWindow| {
            scenes.iter().copied().filter(|s| w.contains(s.acquired.date_naive())).collect::<Vec<_>>()
        };
        (pick(&pre_w), pick(&during_w))
    } else {
        let last = scenes.iter().map(|s| s.acquired.date_naive()).max();
        let (d, p): (Vec<_>, Vec<_>) = scenes.iter().copied().partition(|s| Some(s.acquired.date_naive()) == last);
        (p, d)
    };
    if pre.is_empty() {
        return Err(StarError::NotFound("no scenes in the pre-event window".into()));
    }
    if during.is_empty() {
        return Err(StarError::NotFound("no scenes in the during-event window".into()));
    }
    Ok((pre, during))
}

fn window_label(scenes: &[&SceneManifest]) -> String {
    let first = scenes.iter().map(|s| s.acquired.date_naive()).min().expect("non-empty window");
    let last = scenes.iter().map(|s| s.acquired.date_naive()).max().expect("non-empty window");
    if first == last {
        first.to_string()
    } else {
        format!("{first}/{last}")
    }
}

fn load_scene<'a>(cube: &Cube, cfg: &PipelineConfig, scene: &'a SceneManifest) -> Result<SceneState<'a>> {
    let pol = cfg.floodmap.polarization;
    let band = scene
        .bands
        .polarization(pol)
        .ok_or_else(|| StarError::NotFound(format!("scene `{}` has no {pol:?} band", scene.scene_id)))?;
    let path = cube.band_path(scene, band);
    let grid = read_raster(&path, Units::Db, Some(&scene.crs_id))?;
    grid.require_units("pipeline input", &[Units::Db])?;
    grid.spec().check_aligned(&scene.grid_spec(), "manifest grid")?;
    let angle = match &scene.bands.angle {
        Some(a) => Some(read_raster(&cube.band_path(scene, a), Units::Degrees, Some(&scene.crs_id))?.with_units(Units::Degrees)),
        None => None,
    };
    Ok(SceneState {
        scene,
        grid,
        angle,
        source: path,
        unsmoothed: None,
    })
}

fn layer_meta(scene: &SceneManifest, cfg: &PipelineConfig) -> LayerMeta {
    LayerMeta {
        timestamp: scene.acquired,
        orbit_pass: scene.orbit_pass,
        relative_orbit: scene.relative_orbit,
        polarization: cfg.floodmap.polarization,
    }
}

pub fn run_pipeline(cube: &Cube, cfg: &PipelineConfig, run_id: &str) -> Result<RunOutcome> {
    cfg.validate()?;
    if !crate::cube::manifest::is_valid_id(run_id) {
        return Err(StarError::Config(format!("invalid run id `{run_id}`")));
    }
    let derived = cfg.output_dir.as_ref().map(|d| resolve(cube, d)).unwrap_or_else(|| cube.derived_dir());
    let run_dir = derived.join(run_id);
    if run_dir.exists() {
        log::warn!("run `{run_id}` exists; overwriting its outputs");
        std::fs::remove_dir_all(&run_dir)?;
    }
    std::fs::create_dir_all(&run_dir)?;

    let usable: Vec<&SceneManifest> = cube
        .scenes()
        .iter()
        .filter(|s| {
            let ok = s.bands.polarization(cfg.floodmap.polarization).is_some();
            if !ok {
                log::warn!("scene `{}` lacks {:?}; ignored", s.scene_id, cfg.floodmap.polarization);
            }
            ok
        })
        .collect();
    let (pre, during) = select_windows(&usable, cfg)?;
    let mut scenes: Vec<&SceneManifest> = pre.iter().chain(during.iter()).copied().collect();
    scenes.sort_by(|a, b| a.acquired.cmp(&b.acquired).then_with(|| a.scene_id.cmp(&b.scene_id)));
    scenes.dedup_by(|a, b| a.scene_id == b.scene_id);

    let needs_dem = cfg.steps.iter().any(|s| matches!(s, Step::Flatten | Step::SlopeMask));
    let dem = match (&cfg.terrain.dem_path, needs_dem) {
        (Some(p), true) => {
            let path = resolve(cube, p);
            let g = read_raster(&path, Units::Meters, Some(&scenes[0].crs_id))?.with_units(Units::Meters);
            let mut d = DemGrid::new(g)?;
            if let Some((mx, my)) = cfg.meters_per_degree {
                d = d.with_meters_per_degree(mx, my);
            }
            Some(d)
        }
        _ => None,
    };
    let ctx = Ctx {
        cube,
        cfg,
        run_dir: run_dir.clone(),
        dem,
    };

    let mut states: Vec<SceneState> = scenes
        .par_iter()
        .map(|s| load_scene(cube, cfg, s).map_err(|e| step_err("load", &s.scene_id, e)))
        .collect::<Result<_>>()?;

    let mut provenance = Vec::new();
    for step in Step::ALL {
        if !cfg.steps.contains(&step) {
            for st in &states {
                provenance.push(ProvenanceRecord {
                    step: step.name().into(),
                    scene_id: Some(st.scene.scene_id.clone()),
                    status: "skipped".into(),
                    reason: Some("not in pipeline.steps".into()),
                    params: serde_json::Value::Null,
                    inputs: vec![],
                    output: None,
                });
            }
        }
    }

    for &step in &cfg.steps {
        log::info!("step {}", step.name());
        let outcomes: Vec<StepOutcome> = if step == Step::Speckle && cfg.speckle.mode == SpeckleMode::Multitemporal {
            let layers = states
                .iter()
                .map(|st| StackLayer {
                    grid: st.grid.clone(),
                    meta: layer_meta(st.scene, cfg),
                })
                .collect();
            let looks = cfg.speckle.looks.unwrap_or(states[0].scene.looks);
            let params = SpeckleParams {
                looks,
                ..cfg.speckle.params
            };
            let stack = TimeStack::new(layers).map_err(|e| step_err("speckle", "*", e))?;
            multitemporal(&stack, cfg.speckle.base_filter, &params)
                .map_err(|e| step_err("speckle", "*", e))?
                .into_layers()
                .into_iter()
                .map(|l| StepOutcome::Done(l.grid))
                .collect()
        } else {
            states
                .par_iter()
                .map(|st| ctx.apply(step, st).map_err(|e| step_err(step.name(), &st.scene.scene_id, e)))
                .collect::<Result<_>>()?
        };

        let records: Vec<(ProvenanceRecord, Option<PathBuf>)> = states
            .par_iter()
            .zip(&outcomes)
            .map(|(st, out)| {
                let id = &st.scene.scene_id;
                let mut rec = ProvenanceRecord {
                    step: step.name().into(),
                    scene_id: Some(id.clone()),
                    status: "done".into(),
                    reason: None,
                    params: ctx.step_params(step),
                    inputs: vec![ctx.file_ref(&st.source)?],
                    output: None,
                };
                match out {
                    StepOutcome::Done(g) => {
                        let path = ctx.raster_path(step.name(), id);
                        ctx.persist(&mut rec, &path, g).map_err(|e| step_err(step.name(), id, e))?;
                        Ok((rec, Some(path)))
                    }
                    StepOutcome::Skipped(reason) => {
                        log::info!("{} skipped for {id}: {reason}", step.name());
                        rec.status = "skipped".into();
                        rec.reason = Some(reason.clone());
                        rec.inputs.clear();
                        Ok((rec, None))
                    }
                }
            })
            .collect::<Result<_>>()?;

        for ((st, out), (rec, path)) in states.iter_mut().zip(outcomes).zip(records) {
            if let (StepOutcome::Done(g), Some(p)) = (out, path) {
                if step == Step::Smooth {
                    st.unsmoothed = Some(std::mem::replace(&mut st.grid, g));
                } else {
                    st.grid = g;
                }
                st.source = p;
            }
            provenance.push(rec);
        }
    }

    // Composites per window.
    let target = scenes[0].grid_spec();
    let composite_of = |window: &[&SceneManifest], unsmoothed: bool| -> Result<Grid> {
        let layers: Vec<StackLayer<f64>> = states
            .iter()
            .filter(|st| window.iter().any(|w| w.scene_id == st.scene.scene_id))
            .map(|st| StackLayer {
                grid: if unsmoothed {
                    st.unsmoothed.clone().unwrap_or_else(|| st.grid.clone())
                } else {
                    st.grid.clone()
                },
                meta: layer_meta(st.scene, cfg),
            })
            .collect();
        let stack = align_stack(layers, &target)?;
        if cfg.composite.per_pass {
            composite_per_pass(&stack, cfg.composite.stat)
        } else {
            composite(&stack, cfg.composite.stat)
        }
    };
    let mut composites = Vec::new();
    for (name, window) in [("pre", &pre), ("during", &during)] {
        let g = composite_of(window, false).map_err(|e| step_err("composite", name, e))?;
        let path = ctx.raster_path("composite", name);
        let mut rec = ProvenanceRecord {
            step: "composite".into(),
            scene_id: None,
            status: "done".into(),
            reason: None,
            params: serde_json::json!({ "window": name, "config": &cfg.composite }),
            inputs: states
                .iter()
                .filter(|st| window.iter().any(|w| w.scene_id == st.scene.scene_id))
                .map(|st| ctx.file_ref(&st.source))
                .collect::<Result<_>>()?,
            output: None,
        };
        ctx.persist(&mut rec, &path, &g)?;
        provenance.push(rec);
        composites.push(g);
    }
    let during_comp = composites.pop().expect("during composite");
    let pre_comp = composites.pop().expect("pre composite");

    let otsu_grid = match cfg.floodmap.otsu_input {
        OtsuInput::Smoothed => during_comp.clone(),
        OtsuInput::Filtered => composite_of(&during, true).map_err(|e| step_err("composite", "during", e))?,
    };
    let threshold = choose_threshold(&otsu_grid, cfg)?;
    std::fs::write(run_dir.join("threshold.json"), serde_json::to_vec_pretty(&threshold)?)?;

    let conn = cfg.objects.connectivity;
    let pre_mask = water_mask(&pre_comp, threshold.threshold_db, None, conn, cfg.objects.min_pixels)?;
    let during_mask = water_mask(&during_comp, threshold.threshold_db, None, conn, cfg.objects.min_pixels)?;
    let area = pixel_area_m2(pre_comp.spec(), cfg.meters_per_degree)?;
    let (report, flood_mask) = flood_extent(&pre_mask, &during_mask, area, window_label(&pre), window_label(&during))?;

    let ext = cfg.output_format.extension();
    for (name, mask, input) in [
        ("permanent", &pre_mask, "pre"),
        ("during", &during_mask, "during"),
        ("flood", &flood_mask, "during"),
    ] {
        let path = run_dir.join("masks").join(format!("{name}.{ext}"));
        write_mask(&path, mask)?;
        let mut inputs = vec![ctx.file_ref(&ctx.raster_path("composite", input))?];
        if name == "flood" {
            inputs.insert(0, ctx.file_ref(&ctx.raster_path("composite", "pre"))?);
        }
        let rec = ProvenanceRecord {
            step: "water_mask".into(),
            scene_id: None,
            status: "done".into(),
            reason: None,
            params: serde_json::json!({
                "mask": name,
                "threshold": &threshold,
                "objects": &cfg.objects,
            }),
            inputs,
            output: Some(ctx.file_ref(&path)?),
        };
        write_sidecar(&path, &rec)?;
        provenance.push(rec);
    }
    let csv_path = run_dir.join("report.csv");
    std::fs::write(&csv_path, report.to_csv())?;
    std::fs::write(run_dir.join("report.json"), serde_json::to_vec_pretty(&report)?)?;
    std::fs::write(run_dir.join("provenance.json"), serde_json::to_vec_pretty(&provenance)?)?;
    std::fs::write(run_dir.join("config.json"), serde_json::to_vec_pretty(cfg)?)?;

    Ok(RunOutcome {
        run_id: run_id.into(),
        run_dir,
        report,
        threshold,
        provenance,
    })
}

/// Chessboard Otsu, falling back to global Otsu and then to the configured
/// fixed threshold.
pub fn choose_threshold(grid: &Grid, cfg: &PipelineConfig) -> Result<ThresholdChoice> {
    let params = cfg.chessboard_params();
    match chessboard_otsu(grid, &params) {
        Ok(r) => {
            log::info!(
                "chessboard threshold {:.3} dB from {} of {} cells",
                r.otsu.threshold,
                r.selected.len(),
                r.cells_examined
            );
            return Ok(ThresholdChoice {
                threshold_db: r.otsu.threshold,
                source: "chessboard".into(),
                bimodality: Some(r.otsu.bimodality),
                selected_cells: Some(r.selected.len()),
            });
        }
        Err(e @ (StarError::NoBimodalRegion { .. } | StarError::DegenerateHistogram(_))) => {
            log::warn!("chessboard selection failed ({e}); trying global Otsu");
        }
        Err(e) => return Err(e),
    }
    let hist = Histogram::from_grid(grid, params.db_min, params.db_max, params.bins)?;
    match otsu(&hist) {
        Ok(r) => {
            log::info!("global Otsu threshold {:.3} dB", r.threshold);
            Ok(ThresholdChoice {
                threshold_db: r.threshold,
                source: "global_otsu".into(),
                bimodality: Some(r.bimodality),
                selected_cells: None,
            })
        }
        Err(e @ StarError::DegenerateHistogram(_)) => {
            log::warn!("global Otsu failed ({e}); using fixed threshold {} dB", cfg.floodmap.fixed_threshold_db);
            Ok(ThresholdChoice {
                threshold_db: cfg.floodmap.fixed_threshold_db,
                source: "fixed".into(),
                bimodality: None,
                selected_cells: None,
            })
        }
        Err(e) => Err(e),
    }
}

/// CSV and provenance table of a finished run.
pub fn report(cube: &Cube, run_id: &str) -> Result<String> {
    let run_dir = cube.derived_dir().join(run_id);
    let csv_path = run_dir.join("report.csv");
    if !csv_path.exists() {
        return Err(StarError::NotFound(format!("run `{run_id}` has no report in {}", run_dir.display())));
    }
    let mut out = std::fs::read_to_string(&csv_path)?;
    let prov_path = run_dir.join("provenance.json");
    if prov_path.exists() {
        let records: Vec<ProvenanceRecord> = serde_json::from_slice(&std::fs::read(&prov_path)?)?;
        out.push('\n');
        out.push_str(&format!("{:<18} {:<16} {:<8} {}\n", "step", "scene", "status", "output / reason"));
        for r in records {
            let detail = r
                .output
                .as_ref()
                .map(|o| o.path.clone())
                .or(r.reason.clone())
                .unwrap_or_default();
            out.push_str(&format!(
                "{:<18} {:<16} {:<8} {}\n",
                r.step,
                r.scene_id.as_deref().unwrap_or("-"),
                r.status,
                detail
            ));
        }
    }
    Ok(out)
}
