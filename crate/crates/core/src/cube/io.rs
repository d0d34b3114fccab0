//! Single-band raster files: float32 GeoTIFF, byte GeoTIFF masks and the raw
//! `.sgrd` format.
//!
//! `.sgrd` layout, little-endian: magic `SGRD`, u32 width, u32 height, f64
//! origin_x, origin_y, pixel_w, pixel_h, then row-major f32 samples with
//! −9999 as nodata. The format carries no CRS or units.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use tiff::decoder::{Decoder, DecodingResult};
use tiff::encoder::{colortype, TiffEncoder};
use tiff::tags::Tag;

use crate::error::{Result, StarError};
use crate::objects::BinaryMask;
use crate::raster::{is_geographic, GeoTransform, GridSpec, RasterGrid, Units};

pub const NODATA: f32 = -9999.0;
pub const MASK_NODATA: u8 = 255;
const SGRD_MAGIC: &[u8; 4] = b"SGRD";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RasterFormat {
    #[serde(rename = "tif")]
    GeoTiff,
    Sgrd,
}

impl RasterFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("tif") | Some("tiff") => Ok(RasterFormat::GeoTiff),
            Some("sgrd") => Ok(RasterFormat::Sgrd),
            _ => Err(format_err(path, "unknown raster extension (expected .tif, .tiff or .sgrd)")),
        }
    }

    pub fn extension(&self) -> &'static str {
        match self {
            RasterFormat::GeoTiff => "tif",
            RasterFormat::Sgrd => "sgrd",
        }
    }
}

impl std::str::FromStr for RasterFormat {
    type Err = StarError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tif" | "tiff" | "geotiff" => Ok(RasterFormat::GeoTiff),
            "sgrd" => Ok(RasterFormat::Sgrd),
            other => Err(StarError::Config(format!("unknown raster format `{other}`"))),
        }
    }
}

fn format_err(path: &Path, message: impl std::fmt::Display) -> StarError {
    StarError::Format {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

/// Metadata stored in the GeoTIFF ImageDescription tag so files written here
/// round-trip exactly.
#[derive(Debug, Serialize, Deserialize)]
struct Description {
    crs_id: String,
    units: Units,
    transform: GeoTransform,
}

/// EPSG code of a `EPSG:n` identifier.
fn epsg_code(crs_id: &str) -> Option<u16> {
    crs_id.strip_prefix("EPSG:").and_then(|c| c.parse().ok())
}

fn geo_keys(crs_id: &str) -> Vec<u16> {
    let geographic = is_geographic(crs_id);
    let mut keys = vec![
        1, 1, 0, 0, // header, key count patched below
        1024, 0, 1, if geographic { 2 } else { 1 }, // GTModelType
        1025, 0, 1, 1, // GTRasterType = PixelIsArea
    ];
    if let Some(code) = epsg_code(crs_id) {
        keys.extend([if geographic { 2048 } else { 3072 }, 0, 1, code]);
    }
    keys[3] = (keys.len() / 4 - 1) as u16;
    keys
}

fn crs_from_geo_keys(keys: &[u16]) -> Option<String> {
    keys.chunks_exact(4)
        .skip(1)
        .find(|k| (k[0] == 2048 || k[0] == 3072) && k[1] == 0)
        .map(|k| format!("EPSG:{}", k[3]))
}

fn write_geotiff_header<W: Write + std::io::Seek, C: colortype::ColorType>(
    img: &mut tiff::encoder::ImageEncoder<'_, W, C, tiff::encoder::TiffKindStandard>,
    spec: &GridSpec,
    units: Units,
    nodata: &str,
) -> tiff::TiffResult<()> {
    let t = spec.transform;
    let desc = serde_json::to_string(&Description {
        crs_id: spec.crs_id.clone(),
        units,
        transform: t,
    })
    .expect("serializable description");
    let enc = img.encoder();
    enc.write_tag(Tag::ImageDescription, desc.as_str())?;
    enc.write_tag(Tag::ModelPixelScaleTag, &[t.pixel_w, t.pixel_h.abs(), 0.0][..])?;
    enc.write_tag(Tag::ModelTiepointTag, &[0.0, 0.0, 0.0, t.origin_x, t.origin_y, 0.0][..])?;
    enc.write_tag(Tag::GeoKeyDirectoryTag, &geo_keys(&spec.crs_id)[..])?;
    enc.write_tag(Tag::GdalNodata, nodata)?;
    Ok(())
}

fn grid_samples(grid: &RasterGrid<f64>) -> Vec<f32> {
    grid.values()
        .iter()
        .zip(grid.valid())
        .map(|(v, ok)| if *ok { *v as f32 } else { NODATA })
        .collect()
}

/// Writes a float32 raster, choosing the format from the extension.
pub fn write_raster(path: &Path, grid: &RasterGrid<f64>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let samples = grid_samples(grid);
    match RasterFormat::from_path(path)? {
        RasterFormat::GeoTiff => {
            let file = BufWriter::new(File::create(path)?);
            let mut enc = TiffEncoder::new(file).map_err(|e| format_err(path, e))?;
            let mut img = enc
                .new_image::<colortype::Gray32Float>(grid.width() as u32, grid.height() as u32)
                .map_err(|e| format_err(path, e))?;
            write_geotiff_header(&mut img, grid.spec(), grid.units(), "-9999").map_err(|e| format_err(path, e))?;
            img.write_data(&samples).map_err(|e| format_err(path, e))?;
        }
        RasterFormat::Sgrd => {
            let mut out = BufWriter::new(File::create(path)?);
            let t = grid.transform();
            out.write_all(SGRD_MAGIC)?;
            out.write_all(&(grid.width() as u32).to_le_bytes())?;
            out.write_all(&(grid.height() as u32).to_le_bytes())?;
            for v in [t.origin_x, t.origin_y, t.pixel_w, t.pixel_h] {
                out.write_all(&v.to_le_bytes())?;
            }
            for s in samples {
                out.write_all(&s.to_le_bytes())?;
            }
            out.flush()?;
        }
    }
    Ok(())
}

/// Raw samples plus whatever georeferencing the file carries.
struct RawRaster {
    width: usize,
    height: usize,
    transform: GeoTransform,
    crs_id: Option<String>,
    units: Option<Units>,
    samples: Vec<f32>,
}

fn read_sgrd(path: &Path) -> Result<RawRaster> {
    let mut buf = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut buf)?;
    const HEADER: usize = 4 + 4 + 4 + 4 * 8;
    if buf.len() < HEADER || &buf[0..4] != SGRD_MAGIC {
        return Err(format_err(path, "not an SGRD file"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().expect("4 bytes")) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(buf[o..o + 8].try_into().expect("8 bytes"));
    let (width, height) = (u32_at(4), u32_at(8));
    let transform = GeoTransform::new(f64_at(12), f64_at(20), f64_at(28), f64_at(36)).map_err(|e| format_err(path, e))?;
    let body = &buf[HEADER..];
    if body.len() != width * height * 4 {
        return Err(format_err(
            path,
            format!("expected {} samples for {width}x{height}, found {} bytes", width * height, body.len()),
        ));
    }
    let samples = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(RawRaster {
        width,
        height,
        transform,
        crs_id: None,
        units: None,
        samples,
    })
}

fn read_tiff(path: &Path) -> Result<RawRaster> {
    let file = BufReader::new(File::open(path)?);
    let mut dec = Decoder::new(file).map_err(|e| format_err(path, e))?;
    let (w, h) = dec.dimensions().map_err(|e| format_err(path, e))?;
    let desc: Option<Description> = dec
        .find_tag(Tag::ImageDescription)
        .ok()
        .flatten()
        .and_then(|v| v.into_string().ok())
        .and_then(|s| serde_json::from_str(&s).ok());
    let (transform, crs_id, units) = match desc {
        Some(d) => (d.transform, Some(d.crs_id), Some(d.units)),
        None => {
            let scale = dec
                .find_tag(Tag::ModelPixelScaleTag)
                .ok()
                .flatten()
                .and_then(|v| v.into_f64_vec().ok())
                .ok_or_else(|| format_err(path, "missing ModelPixelScale tag"))?;
            let tie = dec
                .find_tag(Tag::ModelTiepointTag)
                .ok()
                .flatten()
                .and_then(|v| v.into_f64_vec().ok())
                .ok_or_else(|| format_err(path, "missing ModelTiepoint tag"))?;
            if scale.len() < 2 || tie.len() < 6 {
                return Err(format_err(path, "malformed georeferencing tags"));
            }
            let t = GeoTransform::new(
                tie[3] - tie[0] * scale[0],
                tie[4] + tie[1] * scale[1],
                scale[0],
                -scale[1],
            )
            .map_err(|e| format_err(path, e))?;
            let crs = dec
                .find_tag(Tag::GeoKeyDirectoryTag)
                .ok()
                .flatten()
                .and_then(|v| v.into_u16_vec().ok())
                .and_then(|k| crs_from_geo_keys(&k));
            (t, crs, None)
        }
    };
    let samples = match dec.read_image().map_err(|e| format_err(path, e))? {
        DecodingResult::F32(v) => v,
        DecodingResult::F64(v) => v.into_iter().map(|x| x as f32).collect(),
        DecodingResult::U8(v) => v.into_iter().map(|x| if x == MASK_NODATA { NODATA } else { x as f32 }).collect(),
        DecodingResult::I16(v) => v.into_iter().map(f32::from).collect(),
        DecodingResult::U16(v) => v.into_iter().map(f32::from).collect(),
        _ => return Err(format_err(path, "unsupported sample type")),
    };
    if samples.len() != w as usize * h as usize {
        return Err(format_err(path, "only single-band rasters are supported"));
    }
    Ok(RawRaster {
        width: w as usize,
        height: h as usize,
        transform,
        crs_id,
        units,
        samples,
    })
}

fn read_raw(path: &Path) -> Result<RawRaster> {
    match RasterFormat::from_path(path)? {
        RasterFormat::GeoTiff => read_tiff(path),
        RasterFormat::Sgrd => read_sgrd(path),
    }
}

/// Georeferencing summary without the sample payload check.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterInfo {
    pub width: usize,
    pub height: usize,
    pub transform: GeoTransform,
    pub crs_id: Option<String>,
    pub units: Option<Units>,
}

pub fn raster_info(path: &Path) -> Result<RasterInfo> {
    let r = read_raw(path)?;
    Ok(RasterInfo {
        width: r.width,
        height: r.height,
        transform: r.transform,
        crs_id: r.crs_id,
        units: r.units,
    })
}

/// Reads a float raster. CRS and units stored in the file win over the
/// supplied defaults; a file without a CRS needs `crs_id`.
pub fn read_raster(path: &Path, units: Units, crs_id: Option<&str>) -> Result<RasterGrid<f64>> {
    let r = read_raw(path)?;
    let crs = r
        .crs_id
        .or_else(|| crs_id.map(str::to_owned))
        .ok_or_else(|| format_err(path, "raster has no CRS and none was supplied"))?;
    let spec = GridSpec::new(r.width, r.height, r.transform, crs);
    let mut values = Vec::with_capacity(r.samples.len());
    let mut valid = Vec::with_capacity(r.samples.len());
    for s in r.samples {
        let ok = s != NODATA && s.is_finite();
        values.push(if ok { s as f64 } else { f64::NAN });
        valid.push(ok);
    }
    RasterGrid::with_mask(spec, values, valid, r.units.unwrap_or(units))
}

/// Writes a mask as byte GeoTIFF (0, 1, 255 = nodata) or as `.sgrd` floats.
pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    match RasterFormat::from_path(path)? {
        RasterFormat::Sgrd => write_raster(path, &mask.to_grid()),
        RasterFormat::GeoTiff => {
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            let bytes: Vec<u8> = mask
                .bits()
                .iter()
                .zip(mask.valid())
                .map(|(s, ok)| if !ok { MASK_NODATA } else { u8::from(*s) })
                .collect();
            let file = BufWriter::new(File::create(path)?);
            let mut enc = TiffEncoder::new(file).map_err(|e| format_err(path, e))?;
            let mut img = enc
                .new_image::<colortype::Gray8>(mask.width() as u32, mask.height() as u32)
                .map_err(|e| format_err(path, e))?;
            write_geotiff_header(&mut img, mask.spec(), Units::Dimensionless, "255").map_err(|e| format_err(path, e))?;
            img.write_data(&bytes).map_err(|e| format_err(path, e))?;
            Ok(())
        }
    }
}

pub fn read_mask(path: &Path, crs_id: Option<&str>) -> Result<BinaryMask> {
    let g = read_raster(path, Units::Dimensionless, crs_id)?;
    BinaryMask::from_grid(&g)
}
