use std::path::PathBuf;

use chrono::{DateTime, Utc};

use crate::cube::io::{raster_info, RasterFormat};
use crate::cube::manifest::{is_valid_id, Cube, SceneBands, SceneManifest};
use crate::error::{Result, StarError};
use crate::raster::OrbitPass;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandKind {
    Vv,
    Vh,
    Angle,
}

impl BandKind {
    pub fn file_stem(&self) -> &'static str {
        match self {
            BandKind::Vv => "VV",
            BandKind::Vh => "VH",
            BandKind::Angle => "angle",
        }
    }
}

/// Acquisition metadata and source files for one scene.
#[derive(Debug, Clone)]
pub struct IngestRequest {
    pub scene_id: String,
    pub acquired: DateTime<Utc>,
    pub orbit_pass: OrbitPass,
    pub relative_orbit: i32,
    pub looks: f64,
    /// Required when the files carry no CRS.
    pub crs_id: Option<String>,
    /// Declared dimensions; checked against every file when given.
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub bands: Vec<(BandKind, PathBuf)>,
}

fn ingest_err(field: &str, message: impl Into<String>) -> StarError {
    StarError::Ingest {
        field: field.into(),
        message: message.into(),
    }
}

/// Validates the request, copies the band files to `scenes/<id>/` and
/// records the scene in the cube manifest. Re-ingesting an existing id
/// replaces it.
pub fn ingest(cube: &mut Cube, req: &IngestRequest) -> Result<SceneManifest> {
    if !is_valid_id(&req.scene_id) {
        return Err(ingest_err("scene_id", format!("invalid scene id `{}`", req.scene_id)));
    }
    if !req.bands.iter().any(|(k, _)| matches!(k, BandKind::Vv | BandKind::Vh)) {
        return Err(ingest_err("bands", "at least one of VV or VH is required"));
    }

    let mut dims = req.width.zip(req.height);
    let mut transform = None;
    let mut crs = req.crs_id.clone();
    for (kind, path) in &req.bands {
        if !path.exists() {
            return Err(ingest_err(kind.file_stem(), format!("{} does not exist", path.display())));
        }
        let info = raster_info(path)?;
        match dims {
            Some((w, h)) if (w, h) != (info.width, info.height) => {
                return Err(ingest_err(
                    "width/height",
                    format!(
                        "declared {w}x{h} but {} is {}x{}",
                        path.display(),
                        info.width,
                        info.height
                    ),
                ));
            }
            Some(_) => {}
            None => dims = Some((info.width, info.height)),
        }
        match transform {
            Some(t) if t != info.transform => {
                return Err(ingest_err("transform", format!("{} is not co-registered with the other bands", path.display())));
            }
            Some(_) => {}
            None => transform = Some(info.transform),
        }
        if let Some(file_crs) = info.crs_id {
            match &crs {
                Some(c) if *c != file_crs => {
                    return Err(ingest_err(
                        "crs_id",
                        format!("{} is in {file_crs}, expected {c}", path.display()),
                    ));
                }
                Some(_) => {}
                None => crs = Some(file_crs),
            }
        }
    }
    let crs = crs.ok_or_else(|| ingest_err("crs_id", "missing CRS: the files carry none and none was given"))?;
    let (width, height) = dims.expect("at least one band");

    let dir = cube.scene_dir(&req.scene_id);
    if cube.scene(&req.scene_id).is_some() || dir.exists() {
        log::warn!("scene `{}` already in cube; overwriting", req.scene_id);
        if dir.exists() {
            std::fs::remove_dir_all(&dir)?;
        }
    }
    std::fs::create_dir_all(&dir)?;

    let mut bands = SceneBands::default();
    for (kind, path) in &req.bands {
        let ext = RasterFormat::from_path(path)?.extension();
        let name = format!("{}.{ext}", kind.file_stem());
        std::fs::copy(path, dir.join(&name))?;
        match kind {
            BandKind::Vv => bands.vv = Some(name),
            BandKind::Vh => bands.vh = Some(name),
            BandKind::Angle => bands.angle = Some(name),
        }
    }

    let scene = SceneManifest {
        scene_id: req.scene_id.clone(),
        acquired: req.acquired,
        orbit_pass: req.orbit_pass,
        relative_orbit: req.relative_orbit,
        bands,
        crs_id: crs,
        transform: transform.expect("at least one band"),
        width,
        height,
        looks: req.looks,
    };
    cube.upsert(scene.clone())?;
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::io::write_raster;
    use crate::raster::{GeoTransform, GridSpec, RasterGrid, Units};
    use chrono::TimeZone;

    fn request(path: PathBuf) -> IngestRequest {
        IngestRequest {
            scene_id: "s1".into(),
            acquired: Utc.with_ymd_and_hms(2022, 9, 21, 5, 0, 0).unwrap(),
            orbit_pass: OrbitPass::Descending,
            relative_orbit: 30,
            looks: 4.4,
            crs_id: None,
            width: Some(100),
            height: Some(100),
            bands: vec![(BandKind::Vv, path)],
        }
    }

    fn write(dir: &std::path::Path, name: &str, w: usize, h: usize) -> PathBuf {
        let spec = GridSpec::new(w, h, GeoTransform::north_up(0.0, 0.0, 10.0), "EPSG:32632");
        let p = dir.join(name);
        write_raster(&p, &RasterGrid::filled(spec, -12.0, Units::Db)).unwrap();
        p
    }

    #[test]
    fn ingest_and_reingest() {
        let src = tempfile::tempdir().unwrap();
        let root = tempfile::tempdir().unwrap();
        let p = write(src.path(), "vv.tif", 100, 100);
        let mut cube = Cube::open(root.path()).unwrap();
        let m = ingest(&mut cube, &request(p.clone())).unwrap();
        assert_eq!(m.bands.vv.as_deref(), Some("VV.tif"));
        assert_eq!(m.crs_id, "EPSG:32632");
        assert!(root.path().join("scenes/s1/VV.tif").exists());
        ingest(&mut cube, &request(p)).unwrap();
        assert_eq!(Cube::open_existing(root.path()).unwrap().scenes().len(), 1);
    }

    #[test]
    fn dimension_mismatch_names_dims() {
        let src = tempfile::tempdir().unwrap();
        let root = tempfile::tempdir().unwrap();
        let p = write(src.path(), "vv.tif", 90, 100);
        let mut cube = Cube::open(root.path()).unwrap();
        let err = ingest(&mut cube, &request(p)).unwrap_err();
        match err {
            StarError::Ingest { field, message } => {
                assert_eq!(field, "width/height");
                assert!(message.contains("100x100") && message.contains("90x100"));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn sgrd_needs_crs() {
        let src = tempfile::tempdir().unwrap();
        let root = tempfile::tempdir().unwrap();
        let p = write(src.path(), "vv.sgrd", 100, 100);
        let mut cube = Cube::open(root.path()).unwrap();
        let err = ingest(&mut cube, &request(p.clone())).unwrap_err();
        assert!(matches!(err, StarError::Ingest { ref field, .. } if field == "crs_id"));
        let mut req = request(p);
        req.crs_id = Some("EPSG:32632".into());
        assert_eq!(ingest(&mut cube, &req).unwrap().bands.vv.as_deref(), Some("VV.sgrd"));
    }
}
