//! DEM-driven radiometric slope correction and steep-slope masking.
//!
//! Conventions: aspect is the azimuth of the downslope (facing) direction,
//! clockwise from north in `[0, 360)`, and 0 on flat ground. Sentinel-1 is
//! right-looking, so the ground-range look azimuth is `heading + 90°` on both
//! passes. Layover and shadow pixels are invalid in every output.

use serde::{Deserialize, Serialize};

use crate::error::{Result, StarError};
use crate::raster::{is_geographic, par_map_pixels, GridSpec, OrbitPass, RasterGrid, Units};
use crate::scalar::Scalar;

/// Elevation grid in meters.
#[derive(Debug, Clone)]
pub struct DemGrid<T> {
    grid: RasterGrid<T>,
    meters_per_degree: Option<(f64, f64)>,
}

impl<T: Scalar> DemGrid<T> {
    pub fn new(grid: RasterGrid<T>) -> Result<Self> {
        grid.require_units("DemGrid", &[Units::Meters])?;
        Ok(DemGrid {
            grid,
            meters_per_degree: None,
        })
    }

    /// Horizontal scale used when the DEM sits in a geographic CRS.
    pub fn with_meters_per_degree(mut self, mx: f64, my: f64) -> Self {
        self.meters_per_degree = Some((mx, my));
        self
    }

    pub fn grid(&self) -> &RasterGrid<T> {
        &self.grid
    }

    pub fn spec(&self) -> &GridSpec {
        self.grid.spec()
    }

    /// Signed pixel spacing (x, y) in meters.
    fn spacing_m(&self) -> Result<(f64, f64)> {
        let t = self.grid.transform();
        if is_geographic(self.grid.crs_id()) {
            let (mx, my) = self.meters_per_degree.ok_or_else(|| {
                StarError::param(format!(
                    "DEM in geographic CRS {} needs a meters-per-degree scale",
                    self.grid.crs_id()
                ))
            })?;
            Ok((t.pixel_w * mx, t.pixel_h * my))
        } else {
            Ok((t.pixel_w, t.pixel_h))
        }
    }
}

/// Typical Sentinel-1 platform heading for a pass at mid latitudes.
pub fn default_heading_deg(pass: OrbitPass) -> f64 {
    match pass {
        OrbitPass::Ascending => 350.0,
        OrbitPass::Descending => 190.0,
    }
}

/// Acquisition geometry for slope correction.
#[derive(Debug, Clone)]
pub struct SarGeometry<T> {
    /// Ellipsoid incidence angle, degrees.
    pub incidence: RasterGrid<T>,
    /// Platform heading, degrees clockwise from north.
    pub heading_deg: f64,
    pub pass: OrbitPass,
}

impl<T: Scalar> SarGeometry<T> {
    pub fn new(incidence: RasterGrid<T>, heading_deg: f64, pass: OrbitPass) -> Result<Self> {
        incidence.require_units("SarGeometry", &[Units::Degrees])?;
        if !heading_deg.is_finite() {
            return Err(StarError::param("heading must be finite"));
        }
        Ok(SarGeometry {
            incidence,
            heading_deg,
            pass,
        })
    }

    /// Ground-range look azimuth, degrees.
    pub fn look_azimuth_deg(&self) -> f64 {
        (self.heading_deg + 90.0).rem_euclid(360.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlattenModel {
    Direct,
    Volume,
}

impl std::str::FromStr for FlattenModel {
    type Err = StarError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(FlattenModel::Direct),
            "volume" => Ok(FlattenModel::Volume),
            other => Err(StarError::Config(format!("unknown terrain model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SlopeAspect<T> {
    pub slope: RasterGrid<T>,
    pub aspect: RasterGrid<T>,
}

/// Horn 3×3 slope and aspect in degrees. Missing neighbours are
/// extrapolated linearly through the centre from the opposite neighbour.
/// A diagonal missing on both sides comes from the plane through the centre
/// and its two adjacent axis neighbours, and an axis neighbour missing on
/// both sides takes the centre value. Windows with fewer than three valid
/// neighbours give invalid output.
pub fn slope_aspect<T: Scalar>(dem: &DemGrid<T>) -> Result<SlopeAspect<T>> {
    let (sx, sy) = dem.spacing_m()?;
    let g = &dem.grid;
    let w = g.width();
    let h = g.height();
    let vals = g.values();
    let ok = g.valid();
    let two = T::lit(2.0);
    let eight = T::lit(8.0);
    let (sx, sy) = (T::lit(sx), T::lit(sy));

    let gradient = |col: usize, row: usize| -> Option<(T, T)> {
        let i = row * w + col;
        if !ok[i] {
            return None;
        }
        let zc = vals[i];
        let at = |dx: isize, dy: isize| -> Option<T> {
            let x = col as isize + dx;
            let y = row as isize + dy;
            if x < 0 || y < 0 || x as usize >= w || y as usize >= h {
                return None;
            }
            let j = y as usize * w + x as usize;
            ok[j].then(|| vals[j])
        };
        let mut z = [[zc; 3]; 3];
        let mut present = 0;
        let mut fill = |dx: isize, dy: isize, z: &mut [[T; 3]; 3]| -> bool {
            let slot = &mut z[(dy + 1) as usize][(dx + 1) as usize];
            if let Some(v) = at(dx, dy) {
                present += 1;
                *slot = v;
                true
            } else if let Some(o) = at(-dx, -dy) {
                *slot = two * zc - o;
                true
            } else {
                false
            }
        };
        // axis neighbours first so lone diagonals can lean on them
        for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            fill(dx, dy, &mut z);
        }
        for (dx, dy) in [(1, 1), (-1, -1), (1, -1), (-1, 1)] {
            if !fill(dx, dy, &mut z) {
                let ix = (dx + 1) as usize;
                let iy = (dy + 1) as usize;
                z[iy][ix] = z[1][ix] + z[iy][1] - zc;
            }
        }
        if present < 3 {
            return None;
        }
        let dzdx = ((z[0][2] + two * z[1][2] + z[2][2]) - (z[0][0] + two * z[1][0] + z[2][0])) / (eight * sx);
        // rows advance by pixel_h in world y; world y is northing
        let dzdy = ((z[2][0] + two * z[2][1] + z[2][2]) - (z[0][0] + two * z[0][1] + z[0][2])) / (eight * sy);
        Some((dzdx, dzdy))
    };

    let (slopes, slope_ok) = par_map_pixels(w, h, |col, row| {
        gradient(col, row).map(|(gx, gy)| (gx * gx + gy * gy).sqrt().atan().to_degrees())
    });
    let (aspects, aspect_ok) = par_map_pixels(w, h, |col, row| {
        gradient(col, row).map(|(gx, gy)| {
            if gx == T::zero() && gy == T::zero() {
                T::zero()
            } else {
                let a = (-gx).atan2(-gy).to_degrees();
                let full = T::lit(360.0);
                let a = if a < T::zero() { a + full } else { a };
                if a >= full {
                    a - full
                } else {
                    a
                }
            }
        })
    });
    Ok(SlopeAspect {
        slope: g.derive(slopes, slope_ok, Units::Degrees),
        aspect: g.derive(aspects, aspect_ok, Units::Degrees),
    })
}

/// Local incidence angle with layover and shadow flags.
#[derive(Debug, Clone)]
pub struct LocalIncidence<T> {
    /// Local incidence angle in degrees; invalid on layover and shadow.
    pub angle: RasterGrid<T>,
    /// Terrain slope along range toward the sensor, degrees.
    pub range_slope: RasterGrid<T>,
    pub layover: Vec<bool>,
    pub shadow: Vec<bool>,
}

/// Angle between the terrain normal and the direction to the sensor.
pub fn local_incidence<T: Scalar>(dem: &DemGrid<T>, geom: &SarGeometry<T>) -> Result<RasterGrid<T>> {
    Ok(local_incidence_detailed(dem, geom)?.angle)
}

pub fn local_incidence_detailed<T: Scalar>(dem: &DemGrid<T>, geom: &SarGeometry<T>) -> Result<LocalIncidence<T>> {
    dem.grid.check_aligned(&geom.incidence, "incidence band vs DEM")?;
    let sa = slope_aspect(dem)?;
    let look = T::lit(geom.look_azimuth_deg().to_radians());
    let (sin_look, cos_look) = look.sin_cos();
    let n = dem.grid.len();
    let mut angle = vec![T::nan(); n];
    let mut range_slope = vec![T::nan(); n];
    let mut valid = vec![false; n];
    let mut layover = vec![false; n];
    let mut shadow = vec![false; n];
    let inc = &geom.incidence;
    for i in 0..n {
        if !(inc.is_valid(i) && sa.slope.is_valid(i)) {
            continue;
        }
        let theta_deg = inc.values()[i];
        if !(theta_deg > T::zero() && theta_deg < T::lit(90.0)) {
            continue;
        }
        let beta_deg = sa.slope.values()[i];
        if beta_deg == T::zero() {
            angle[i] = theta_deg;
            range_slope[i] = T::zero();
            valid[i] = true;
            continue;
        }
        let theta = theta_deg.to_radians();
        let beta = beta_deg.to_radians();
        let aspect = sa.aspect.values()[i].to_radians();
        let (sin_t, cos_t) = theta.sin_cos();
        let (sin_b, cos_b) = beta.sin_cos();
        let (sin_a, cos_a) = aspect.sin_cos();
        // unit vector from ground to sensor (east, north, up)
        let s = [-sin_t * sin_look, -sin_t * cos_look, cos_t];
        let nrm = [sin_b * sin_a, sin_b * cos_a, cos_b];
        let cos_lia = s[0] * nrm[0] + s[1] * nrm[1] + s[2] * nrm[2];
        // cos(aspect − (look + 180°)) = −cos(aspect − look)
        let toward = -(cos_a * cos_look + sin_a * sin_look);
        let delta = (beta.tan() * toward).atan();
        range_slope[i] = delta.to_degrees();
        if delta > theta {
            layover[i] = true;
            continue;
        }
        if cos_lia <= T::zero() {
            shadow[i] = true;
            continue;
        }
        angle[i] = cos_lia.min(T::one()).acos().to_degrees();
        valid[i] = true;
    }
    let rs_valid: Vec<bool> = range_slope.iter().map(|v| v.is_finite()).collect();
    Ok(LocalIncidence {
        angle: dem.grid.derive(angle, valid, Units::Degrees),
        range_slope: dem.grid.derive(range_slope, rs_valid, Units::Degrees),
        layover,
        shadow,
    })
}

/// Direct-model correction factor `cos(θ_lia) / cos(θ_ref)`.
#[inline]
pub fn direct_factor<T: Scalar>(lia_deg: T, ref_deg: T) -> T {
    lia_deg.to_radians().cos() / ref_deg.to_radians().cos()
}

/// Volume-model correction factor `tan(90° − θ_ref) / tan(90° − θ_ref + δ_r)`
/// with `δ_r` the range slope toward the sensor.
#[inline]
pub fn volume_factor<T: Scalar>(ref_deg: T, range_slope_deg: T) -> T {
    let ninety = T::lit(90.0);
    (ninety - ref_deg).to_radians().tan() / (ninety - ref_deg + range_slope_deg).to_radians().tan()
}

/// Radiometric slope correction of linear backscatter.
pub fn flatten<T: Scalar>(
    grid: &RasterGrid<T>,
    dem: &DemGrid<T>,
    geom: &SarGeometry<T>,
    model: FlattenModel,
) -> Result<RasterGrid<T>> {
    grid.require_units("flatten", &[Units::Linear])?;
    grid.check_aligned(dem.grid(), "DEM vs scene")?;
    let lia = local_incidence_detailed(dem, geom)?;
    let inc = &geom.incidence;
    let mut out = grid.clone();
    for i in 0..grid.len() {
        if !grid.is_valid(i) {
            continue;
        }
        if !lia.angle.is_valid(i) {
            out.invalidate(i);
            continue;
        }
        let reference = inc.values()[i];
        let factor = match model {
            FlattenModel::Direct => direct_factor(lia.angle.values()[i], reference),
            FlattenModel::Volume => volume_factor(reference, lia.range_slope.values()[i]),
        };
        if factor > T::zero() && factor.is_finite() {
            out.set(i, grid.values()[i] * factor);
        } else {
            out.invalidate(i);
        }
    }
    Ok(out)
}

/// Invalidates pixels on terrain steeper than `max_slope_deg`, and where the
/// slope cannot be computed.
pub fn slope_mask<T: Scalar>(grid: &RasterGrid<T>, dem: &DemGrid<T>, max_slope_deg: f64) -> Result<RasterGrid<T>> {
    grid.check_aligned(dem.grid(), "DEM vs scene")?;
    let sa = slope_aspect(dem)?;
    let max = T::lit(max_slope_deg);
    let keep: Vec<bool> = sa
        .slope
        .values()
        .iter()
        .zip(sa.slope.valid())
        .map(|(s, ok)| *ok && *s <= max)
        .collect();
    Ok(grid.masked_by(&keep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{GeoTransform, GridSpec};

    const PX: f64 = 10.0;

    fn spec(w: usize, h: usize) -> GridSpec {
        GridSpec::new(w, h, GeoTransform::north_up(500_000.0, 4_000_000.0, PX), "EPSG:32632")
    }

    /// Elevation `z(x, y) = f(x_m, y_m)` at pixel centres, with y northing.
    fn dem_from(w: usize, h: usize, f: impl Fn(f64, f64) -> f64) -> DemGrid<f64> {
        let s = spec(w, h);
        let mut v = Vec::with_capacity(w * h);
        for row in 0..h {
            for col in 0..w {
                let (x, y) = s.transform.pixel_center(col as f64, row as f64);
                v.push(f(x - 500_000.0, y - 4_000_000.0));
            }
        }
        DemGrid::new(RasterGrid::new(s, v, Units::Meters).unwrap()).unwrap()
    }

    fn incidence(w: usize, h: usize, deg: f64) -> RasterGrid<f64> {
        RasterGrid::filled(spec(w, h), deg, Units::Degrees)
    }

    #[test]
    fn flat_dem() {
        let dem = dem_from(6, 5, |_, _| 120.0);
        let sa = slope_aspect(&dem).unwrap();
        assert_eq!(sa.slope.valid_count(), 30);
        assert!(sa.slope.valid_values().all(|s| s == 0.0));
        assert!(sa.aspect.valid_values().all(|a| a == 0.0));
    }

    #[test]
    fn inclined_plane_faces_west() {
        let dem = dem_from(8, 8, |x, _| 0.1 * x);
        let sa = slope_aspect(&dem).unwrap();
        let expect = 0.1f64.atan().to_degrees();
        assert!((expect - 5.7106).abs() < 1e-4);
        for i in 0..64 {
            if let (true, s, a) = (sa.slope.is_valid(i), sa.slope.values()[i], sa.aspect.values()[i]) {
                assert!((s - expect).abs() < 1e-9);
                assert!((a - 270.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn north_rising_plane_faces_south() {
        let dem = dem_from(6, 6, |_, y| 0.2 * y);
        let sa = slope_aspect(&dem).unwrap();
        assert!((sa.aspect.get(2, 2).unwrap() - 180.0).abs() < 1e-9);
    }

    #[test]
    fn sparse_window_is_invalid() {
        let mut v = vec![f64::NAN; 9];
        v[4] = 1.0;
        v[0] = 1.0;
        v[1] = 1.0;
        let dem = DemGrid::new(RasterGrid::new(spec(3, 3), v, Units::Meters).unwrap()).unwrap();
        assert!(slope_aspect(&dem).unwrap().slope.get(1, 1).is_none());
    }

    #[test]
    fn flat_local_incidence_is_ellipsoid_angle() {
        let dem = dem_from(6, 6, |_, _| 5.0);
        let mut inc = incidence(6, 6, 0.0);
        for i in 0..36 {
            inc.set(i, 31.0 + i as f64 * 0.4);
        }
        let geom = SarGeometry::new(inc.clone(), 350.0, OrbitPass::Ascending).unwrap();
        let lia = local_incidence(&dem, &geom).unwrap();
        for i in 0..36 {
            if lia.is_valid(i) {
                assert_eq!(lia.values()[i].to_bits(), inc.values()[i].to_bits());
            }
        }
    }

    #[test]
    fn tilt_toward_sensor_reduces_incidence() {
        // heading north: look east, sensor to the west; a facing slope rises eastward
        let delta = 12.0f64;
        let dem = dem_from(7, 7, |x, _| delta.to_radians().tan() * x);
        let geom = SarGeometry::new(incidence(7, 7, 38.0), 0.0, OrbitPass::Ascending).unwrap();
        let lia = local_incidence(&dem, &geom).unwrap();
        assert!((lia.get(3, 3).unwrap() - (38.0 - delta)).abs() < 1e-9);
    }

    #[test]
    fn layover_and_shadow() {
        let geom = SarGeometry::new(incidence(7, 7, 35.0), 0.0, OrbitPass::Ascending).unwrap();
        let steep = dem_from(7, 7, |x, _| 40.0f64.to_radians().tan() * x);
        let out = local_incidence_detailed(&steep, &geom).unwrap();
        assert!(out.layover[3 * 7 + 3]);
        assert!(out.angle.get(3, 3).is_none());

        let away = dem_from(7, 7, |x, _| -60.0f64.to_radians().tan() * x);
        let out = local_incidence_detailed(&away, &geom).unwrap();
        assert!(out.shadow[3 * 7 + 3]);
        let g = RasterGrid::filled(spec(7, 7), 0.1, Units::Linear);
        let flat = flatten(&g, &away, &geom, FlattenModel::Direct).unwrap();
        assert!(flat.get(3, 3).is_none());
    }

    #[test]
    fn flat_terrain_flatten_is_identity() {
        let dem = dem_from(9, 9, |_, _| 42.0);
        let geom = SarGeometry::new(incidence(9, 9, 39.5), 190.0, OrbitPass::Descending).unwrap();
        let g = RasterGrid::new(spec(9, 9), (0..81).map(|i| 0.01 + i as f64 * 0.003).collect(), Units::Linear).unwrap();
        for model in [FlattenModel::Direct, FlattenModel::Volume] {
            let out = flatten(&g, &dem, &geom, model).unwrap();
            for i in 0..81 {
                if out.is_valid(i) {
                    assert_eq!(out.values()[i].to_bits(), g.values()[i].to_bits());
                }
            }
        }
    }

    #[test]
    fn direct_factor_cos_ratio() {
        let f = direct_factor(30.0f64, 40.0);
        let oracle = 30.0f64.to_radians().cos() / 40.0f64.to_radians().cos();
        assert!((f - oracle).abs() < 1e-15);
        assert!((f - 1.1305).abs() < 1e-4);
    }

    #[test]
    fn flatten_rejects_db() {
        let dem = dem_from(5, 5, |_, _| 0.0);
        let geom = SarGeometry::new(incidence(5, 5, 35.0), 0.0, OrbitPass::Ascending).unwrap();
        let g = RasterGrid::filled(spec(5, 5), -10.0, Units::Db);
        assert!(matches!(flatten(&g, &dem, &geom, FlattenModel::Direct), Err(StarError::Units { .. })));
    }

    #[test]
    fn slope_mask_thresholds() {
        let g = RasterGrid::filled(spec(7, 7), -10.0, Units::Db);
        let flat = dem_from(7, 7, |_, _| 0.0);
        assert!(slope_mask(&g, &flat, 15.0).unwrap().get(3, 3).is_some());
        let steep = dem_from(7, 7, |x, _| 20.0f64.to_radians().tan() * x);
        assert!(slope_mask(&g, &steep, 15.0).unwrap().get(3, 3).is_none());
        let ten = dem_from(7, 7, |_, y| 10.0f64.to_radians().tan() * y);
        assert!(slope_mask(&g, &ten, 9.9).unwrap().get(3, 3).is_none());
        assert!(slope_mask(&g, &ten, 10.1).unwrap().get(3, 3).is_some());
    }

    #[test]
    fn geographic_dem_needs_scale() {
        let s = GridSpec::new(4, 4, GeoTransform::north_up(3.0, 7.0, 0.0001), "EPSG:4326");
        let dem = DemGrid::new(RasterGrid::filled(s, 1.0, Units::Meters)).unwrap();
        assert!(slope_aspect(&dem).is_err());
        assert!(slope_aspect(&dem.with_meters_per_degree(111_320.0, 110_574.0)).is_ok());
    }
}
