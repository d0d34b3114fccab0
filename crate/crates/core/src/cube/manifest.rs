use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Result, StarError};
use crate::raster::{GeoTransform, GridSpec, OrbitPass, Polarization};

/// Band files of one scene, relative to the scene directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneBands {
    #[serde(rename = "VV", default, skip_serializing_if = "Option::is_none")]
    pub vv: Option<String>,
    #[serde(rename = "VH", default, skip_serializing_if = "Option::is_none")]
    pub vh: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle: Option<String>,
}

impl SceneBands {
    pub fn polarization(&self, pol: Polarization) -> Option<&str> {
        match pol {
            Polarization::VV => self.vv.as_deref(),
            Polarization::VH => self.vh.as_deref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneManifest {
    pub scene_id: String,
    pub acquired: DateTime<Utc>,
    pub orbit_pass: OrbitPass,
    pub relative_orbit: i32,
    pub bands: SceneBands,
    pub crs_id: String,
    pub transform: GeoTransform,
    pub width: usize,
    pub height: usize,
    pub looks: f64,
}

impl SceneManifest {
    pub fn grid_spec(&self) -> GridSpec {
        GridSpec::new(self.width, self.height, self.transform, self.crs_id.clone())
    }

    pub fn validate(&self) -> Result<()> {
        let field_err = |field: &str, message: &str| StarError::Ingest {
            field: field.into(),
            message: message.into(),
        };
        if !is_valid_id(&self.scene_id) {
            return Err(field_err("scene_id", "use letters, digits, '-', '_' or '.'"));
        }
        if self.bands.vv.is_none() && self.bands.vh.is_none() {
            return Err(field_err("bands", "at least one of VV or VH is required"));
        }
        if self.crs_id.trim().is_empty() {
            return Err(field_err("crs_id", "missing CRS"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(field_err("width/height", "dimensions must be positive"));
        }
        if !(self.looks > 0.0 && self.looks.is_finite()) {
            return Err(field_err("looks", "must be positive"));
        }
        self.transform.validate().map_err(|e| field_err("transform", &e.to_string()))
    }
}

pub(crate) fn is_valid_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CubeManifest {
    pub scenes: Vec<SceneManifest>,
}

/// A cube directory:
///
/// ```text
/// cube/manifest.json
/// cube/scenes/<id>/{VV.tif,VH.tif,angle.tif,meta.json}
/// cube/derived/<run>/<step>/...
/// ```
#[derive(Debug, Clone)]
pub struct Cube {
    root: PathBuf,
    manifest: CubeManifest,
}

impl Cube {
    /// Opens a cube, creating an empty one if the directory has no manifest.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let path = root.join("manifest.json");
        let manifest = if path.exists() {
            serde_json::from_slice(&std::fs::read(&path)?).map_err(|e| StarError::Format {
                path: path.display().to_string(),
                message: e.to_string(),
            })?
        } else {
            CubeManifest::default()
        };
        Ok(Cube { root, manifest })
    }

    /// Opens a cube that must already exist.
    pub fn open_existing(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        if !root.join("manifest.json").exists() {
            return Err(StarError::NotFound(format!("no cube manifest in {}", root.display())));
        }
        Self::open(root)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn scenes(&self) -> &[SceneManifest] {
        &self.manifest.scenes
    }

    pub fn scene(&self, id: &str) -> Option<&SceneManifest> {
        self.manifest.scenes.iter().find(|s| s.scene_id == id)
    }

    pub fn scene_dir(&self, id: &str) -> PathBuf {
        self.root.join("scenes").join(id)
    }

    pub fn band_path(&self, scene: &SceneManifest, file: &str) -> PathBuf {
        self.scene_dir(&scene.scene_id).join(file)
    }

    pub fn derived_dir(&self) -> PathBuf {
        self.root.join("derived")
    }

    /// Inserts or replaces a scene and rewrites `manifest.json` and the
    /// scene's `meta.json`. Returns true when an existing entry was replaced.
    pub fn upsert(&mut self, scene: SceneManifest) -> Result<bool> {
        scene.validate()?;
        let dir = self.scene_dir(&scene.scene_id);
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(&scene)?)?;
        let replaced = match self.manifest.scenes.iter_mut().find(|s| s.scene_id == scene.scene_id) {
            Some(slot) => {
                *slot = scene;
                true
            }
            None => {
                self.manifest.scenes.push(scene);
                false
            }
        };
        self.manifest
            .scenes
            .sort_by(|a, b| a.acquired.cmp(&b.acquired).then_with(|| a.scene_id.cmp(&b.scene_id)));
        self.save()?;
        Ok(replaced)
    }

    fn save(&self) -> Result<()> {
        std::fs::create_dir_all(&self.root)?;
        std::fs::write(self.root.join("manifest.json"), serde_json::to_vec_pretty(&self.manifest)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    pub(crate) fn manifest(id: &str, day: u32) -> SceneManifest {
        SceneManifest {
            scene_id: id.into(),
            acquired: Utc.with_ymd_and_hms(2022, 9, day, 5, 30, 0).unwrap(),
            orbit_pass: OrbitPass::Ascending,
            relative_orbit: 103,
            bands: SceneBands {
                vv: Some("VV.tif".into()),
                ..Default::default()
            },
            crs_id: "EPSG:32632".into(),
            transform: GeoTransform::north_up(0.0, 0.0, 10.0),
            width: 4,
            height: 4,
            looks: 4.4,
        }
    }

    #[test]
    fn json_keys_are_snake_case() {
        let v = serde_json::to_value(manifest("s1", 1)).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        for k in ["scene_id", "acquired", "orbit_pass", "relative_orbit", "bands", "crs_id", "transform", "looks"] {
            assert!(keys.contains(&k), "{k}");
        }
        assert_eq!(v["orbit_pass"], "ASC");
        assert_eq!(v["bands"]["VV"], "VV.tif");
    }

    #[test]
    fn validation() {
        let mut m = manifest("s1", 1);
        m.bands.vv = None;
        assert!(matches!(m.validate(), Err(StarError::Ingest { field, .. }) if field == "bands"));
        let mut m = manifest("s1", 1);
        m.crs_id = String::new();
        assert!(matches!(m.validate(), Err(StarError::Ingest { field, .. }) if field == "crs_id"));
        assert!(!is_valid_id("../x"));
    }

    #[test]
    fn upsert_sorts_and_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let mut cube = Cube::open(dir.path()).unwrap();
        assert!(!cube.upsert(manifest("late", 20)).unwrap());
        assert!(!cube.upsert(manifest("early", 2)).unwrap());
        assert!(cube.upsert(manifest("late", 21)).unwrap());
        let reopened = Cube::open_existing(dir.path()).unwrap();
        let ids: Vec<&str> = reopened.scenes().iter().map(|s| s.scene_id.as_str()).collect();
        assert_eq!(ids, ["early", "late"]);
        assert!(dir.path().join("scenes/late/meta.json").exists());
    }
}
