//! Georeferenced raster ingestion, constant-ground-resolution tiling, and
//! mosaic assembly.
//!
//! Rasters are partitioned into tiles covering a fixed ground footprint
//! (50 m × 50 m by default) regardless of ground sample distance, so a
//! 0.30 m/px raster yields 167 px tiles while a 0.50 m/px raster yields
//! 100 px tiles. Per-tile predictions are merged back into a seamless
//! regional label mosaic with full provenance.

use image::RgbImage;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::annotation::DenseMask;

/// Encoder patch size; model input sides must be divisible by this.
pub const PATCH_SIZE: usize = 16;

/// Minimum tile side in pixels. Edge remainders thinner than this are
/// absorbed into the neighboring tile instead of forming their own tile.
pub const MIN_TILE_SIDE_PX: usize = 16;

/// Default tile ground footprint in meters.
pub const DEFAULT_GROUND_SIZE_M: f64 = 50.0;

/// Default model input side in pixels.
pub const DEFAULT_TARGET_PX: usize = 352;

#[derive(Debug, thiserror::Error)]
pub enum GeotileError {
    #[error("raster file not found: {0}")]
    MissingFile(PathBuf),

    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to decode raster {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("ungeoreferenced input {path}: {missing}")]
    Ungeoreferenced { path: PathBuf, missing: String },

    #[error("anisotropic gsd in {path}: |x|={x_gsd} m/px, |y|={y_gsd} m/px; square pixels required")]
    AnisotropicGsd {
        path: PathBuf,
        x_gsd: f64,
        y_gsd: f64,
    },

    #[error("invalid gsd {0} m/px; must be positive and finite")]
    InvalidGsd(f64),

    #[error("empty raster: height and width must each be at least 1 pixel")]
    EmptyRaster,

    #[error("ground_size_m must be positive and finite, got {0}")]
    InvalidGroundSize(f64),

    #[error("tile window {window:?} exceeds raster of {height}x{width} px")]
    WindowOutOfBounds {
        window: PixelWindow,
        height: usize,
        width: usize,
    },

    #[error("target_px {0} is not a multiple of the encoder patch size {PATCH_SIZE}")]
    TargetNotPatchMultiple(usize),

    #[error("empty crop cannot be resized")]
    EmptyCrop,

    #[error("mask for tile {tile_id} has dims {got:?}, expected window dims {expected:?}")]
    MaskDimsMismatch {
        tile_id: String,
        got: (usize, usize),
        expected: (usize, usize),
    },

    #[error("tile coverage error: {gaps} uncovered and {overlaps} multiply-covered pixel(s); first gap at {first_gap:?}, first overlap at {first_overlap:?}")]
    Coverage {
        gaps: usize,
        overlaps: usize,
        first_gap: Option<(usize, usize)>,
        first_overlap: Option<(usize, usize)>,
    },

    #[error("tiles disagree on geotransform: {0}")]
    InconsistentGeoreference(String),

    #[error("no tiles to merge")]
    NoTiles,

    #[error("failed to encode {path}: {source}")]
    PngEncode {
        path: PathBuf,
        #[source]
        source: png::EncodingError,
    },

    #[error("failed to decode {path}: {source}")]
    PngDecode {
        path: PathBuf,
        #[source]
        source: png::DecodingError,
    },

    #[error("mosaic file {path} is not an indexed single-channel image")]
    NotIndexed { path: PathBuf },
}

/// A georeferenced 8-bit RGB raster with square pixels.
///
/// `origin` is the easting/northing of the **corner** of the top-left pixel;
/// northing decreases down rows (north-up imagery).
#[derive(Debug, Clone)]
pub struct GeoRaster {
    pixels: RgbImage,
    gsd_m: f64,
    origin: (f64, f64),
    crs_id: String,
}

impl GeoRaster {
    pub fn new(
        pixels: RgbImage,
        gsd_m: f64,
        origin: (f64, f64),
        crs_id: String,
    ) -> Result<Self, GeotileError> {
        if !(gsd_m.is_finite() && gsd_m > 0.0) {
            return Err(GeotileError::InvalidGsd(gsd_m));
        }
        if pixels.width() == 0 || pixels.height() == 0 {
            return Err(GeotileError::EmptyRaster);
        }
        Ok(Self {
            pixels,
            gsd_m,
            origin,
            crs_id,
        })
    }

    pub fn pixels(&self) -> &RgbImage {
        &self.pixels
    }

    pub fn height_px(&self) -> usize {
        self.pixels.height() as usize
    }

    pub fn width_px(&self) -> usize {
        self.pixels.width() as usize
    }

    pub fn gsd_m(&self) -> f64 {
        self.gsd_m
    }

    pub fn origin(&self) -> (f64, f64) {
        self.origin
    }

    pub fn crs_id(&self) -> &str {
        &self.crs_id
    }

    /// Geographic bounds of a pixel window under this raster's geotransform.
    pub fn window_bounds(&self, window: &PixelWindow) -> GeoBounds {
        let (easting, northing) = self.origin;
        GeoBounds {
            min_easting: easting + window.col0 as f64 * self.gsd_m,
            max_easting: easting + (window.col0 + window.n_cols) as f64 * self.gsd_m,
            max_northing: northing - window.row0 as f64 * self.gsd_m,
            min_northing: northing - (window.row0 + window.n_rows) as f64 * self.gsd_m,
        }
    }
}

/// A rectangular window in source-raster pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelWindow {
    pub row0: usize,
    pub col0: usize,
    pub n_rows: usize,
    pub n_cols: usize,
}

/// Geographic bounds in meters (same units as the raster origin).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoBounds {
    pub min_easting: f64,
    pub min_northing: f64,
    pub max_easting: f64,
    pub max_northing: f64,
}

/// One planned tile: grid position, pixel window, and geographic bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileRef {
    pub tile_id: String,
    pub grid_row: usize,
    pub grid_col: usize,
    pub pixel_window: PixelWindow,
    pub geo_bounds: GeoBounds,
}

impl TileRef {
    /// Recompute bounds from the window and a geotransform and compare to the
    /// stored bounds within `tol_m` meters.
    pub fn geo_consistent(&self, gsd_m: f64, origin: (f64, f64), tol_m: f64) -> bool {
        let w = &self.pixel_window;
        let min_e = origin.0 + w.col0 as f64 * gsd_m;
        let max_e = origin.0 + (w.col0 + w.n_cols) as f64 * gsd_m;
        let max_n = origin.1 - w.row0 as f64 * gsd_m;
        let min_n = origin.1 - (w.row0 + w.n_rows) as f64 * gsd_m;
        (self.geo_bounds.min_easting - min_e).abs() <= tol_m
            && (self.geo_bounds.max_easting - max_e).abs() <= tol_m
            && (self.geo_bounds.min_northing - min_n).abs() <= tol_m
            && (self.geo_bounds.max_northing - max_n).abs() <= tol_m
    }
}

/// Load a raster plus georeferencing from disk.
///
/// Pixel data may be any format the `image` crate decodes (alpha channels are
/// dropped). Georeferencing comes from a world-file sidecar (`.pgw`/`.tfw`/
/// `.jgw`/`.wld` next to the raster) or, for TIFFs, embedded geotags.
pub fn load_raster(path: &Path) -> Result<GeoRaster, GeotileError> {
    if !path.exists() {
        return Err(GeotileError::MissingFile(path.to_path_buf()));
    }
    let dynamic = image::open(path).map_err(|source| GeotileError::Decode {
        path: path.to_path_buf(),
        source,
    })?;
    // RGBA and grayscale inputs are normalized to RGB.
    let pixels = dynamic.to_rgb8();

    let georef = match load_world_file(path)? {
        Some(georef) => georef,
        None => match load_embedded_geotiff(path)? {
            Some(georef) => georef,
            None => {
                return Err(GeotileError::Ungeoreferenced {
                    path: path.to_path_buf(),
                    missing: "no world-file sidecar (.pgw/.tfw/.jgw/.wld) and no embedded \
                              geotags; six-coefficient geotransform required"
                        .to_string(),
                })
            }
        },
    };
    let Georef {
        x_scale,
        y_scale,
        rot_x,
        rot_y,
        center_x,
        center_y,
        crs_id,
    } = georef;

    if rot_x != 0.0 || rot_y != 0.0 {
        return Err(GeotileError::Ungeoreferenced {
            path: path.to_path_buf(),
            missing: format!(
                "rotation coefficients must be zero (got {rot_x}, {rot_y}); \
                 axis-aligned north-up rasters required"
            ),
        });
    }
    if !(x_scale.is_finite() && x_scale > 0.0 && y_scale.is_finite() && y_scale < 0.0) {
        return Err(GeotileError::Ungeoreferenced {
            path: path.to_path_buf(),
            missing: format!(
                "pixel scales must satisfy x > 0 and y < 0 for north-up imagery \
                 (got x={x_scale}, y={y_scale})"
            ),
        });
    }
    if (x_scale.abs() - y_scale.abs()).abs() > 1e-9 * x_scale.abs().max(1.0) {
        return Err(GeotileError::AnisotropicGsd {
            path: path.to_path_buf(),
            x_gsd: x_scale.abs(),
            y_gsd: y_scale.abs(),
        });
    }

    // World files reference the center of the top-left pixel; shift to corner.
    let origin = (center_x - x_scale * 0.5, center_y - y_scale * 0.5);
    GeoRaster::new(pixels, x_scale, origin, crs_id)
}

struct Georef {
    x_scale: f64,
    y_scale: f64,
    rot_x: f64,
    rot_y: f64,
    center_x: f64,
    center_y: f64,
    crs_id: String,
}

/// Candidate world-file paths for a raster, in probe order.
pub fn world_file_candidates(raster_path: &Path) -> Vec<PathBuf> {
    let mut candidates = Vec::new();
    if let Some(ext) = raster_path.extension().and_then(|e| e.to_str()) {
        let lower = ext.to_ascii_lowercase();
        let bytes: Vec<char> = lower.chars().collect();
        if bytes.len() >= 3 {
            // png -> pgw, tif -> tfw, jpg -> jgw
            let short: String = [bytes[0], bytes[bytes.len() - 1], 'w'].iter().collect();
            candidates.push(raster_path.with_extension(short));
        }
    }
    candidates.push(raster_path.with_extension("wld"));
    candidates
}

fn load_world_file(raster_path: &Path) -> Result<Option<Georef>, GeotileError> {
    for candidate in world_file_candidates(raster_path) {
        if !candidate.exists() {
            continue;
        }
        let text = std::fs::read_to_string(&candidate).map_err(|source| GeotileError::Io {
            path: candidate.clone(),
            source,
        })?;
        let values: Vec<f64> = text
            .split_whitespace()
            .filter_map(|tok| tok.parse::<f64>().ok())
            .collect();
        if values.len() < 6 {
            return Err(GeotileError::Ungeoreferenced {
                path: raster_path.to_path_buf(),
                missing: format!(
                    "world file {} has {} numeric value(s); six geotransform \
                     coefficients required",
                    candidate.display(),
                    values.len()
                ),
            });
        }
        // World-file line order: x-scale, y-rotation, x-rotation, y-scale,
        // center-x, center-y.
        return Ok(Some(Georef {
            x_scale: values[0],
            rot_y: values[1],
            rot_x: values[2],
            y_scale: values[3],
            center_x: values[4],
            center_y: values[5],
            crs_id: "unspecified".to_string(),
        }));
    }
    Ok(None)
}

/// Read ModelPixelScale/ModelTiepoint geotags from a TIFF, if present.
fn load_embedded_geotiff(path: &Path) -> Result<Option<Georef>, GeotileError> {
    let is_tiff = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "tif" | "tiff"))
        .unwrap_or(false);
    if !is_tiff {
        return Ok(None);
    }
    let file = std::fs::File::open(path).map_err(|source| GeotileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut decoder = match tiff::decoder::Decoder::new(std::io::BufReader::new(file)) {
        Ok(d) => d,
        Err(_) => return Ok(None),
    };
    const MODEL_PIXEL_SCALE: u16 = 33550;
    const MODEL_TIEPOINT: u16 = 33922;
    const GEO_KEY_DIRECTORY: u16 = 34735;
    let scale = decoder
        .get_tag_f64_vec(tiff::tags::Tag::Unknown(MODEL_PIXEL_SCALE))
        .ok();
    let tiepoint = decoder
        .get_tag_f64_vec(tiff::tags::Tag::Unknown(MODEL_TIEPOINT))
        .ok();
    let (Some(scale), Some(tiepoint)) = (scale, tiepoint) else {
        return Ok(None);
    };
    if scale.len() < 2 || tiepoint.len() < 6 {
        return Err(GeotileError::Ungeoreferenced {
            path: path.to_path_buf(),
            missing: "embedded geotags truncated: need pixel scale (x,y) and a \
                      six-value tiepoint"
                .to_string(),
        });
    }
    // Tiepoint maps raster point (i,j) to model point (x,y). The model point
    // of pixel (0,0) is the top-left corner for area-type rasters.
    let (sx, sy) = (scale[0], scale[1]);
    let (i, j, x, y) = (tiepoint[0], tiepoint[1], tiepoint[3], tiepoint[4]);
    let corner_x = x - i * sx;
    let corner_y = y + j * sy;

    // Best-effort CRS id from the geokey directory (projected or geographic).
    let mut crs_id = "embedded".to_string();
    if let Ok(keys) = decoder.get_tag_u64_vec(tiff::tags::Tag::Unknown(GEO_KEY_DIRECTORY)) {
        for chunk in keys[4..].chunks(4) {
            if chunk.len() == 4 && (chunk[0] == 3072 || chunk[0] == 2048) && chunk[1] == 0 {
                crs_id = format!("EPSG:{}", chunk[3]);
                break;
            }
        }
    }

    // Convert to the world-file convention used by the shared validation
    // path: world files reference pixel centers.
    Ok(Some(Georef {
        x_scale: sx,
        y_scale: -sy,
        rot_x: 0.0,
        rot_y: 0.0,
        center_x: corner_x + sx * 0.5,
        center_y: corner_y - sy * 0.5,
        crs_id,
    }))
}

/// Write a world-file sidecar for a raster or mosaic.
pub fn write_world_file(path: &Path, gsd_m: f64, origin: (f64, f64)) -> Result<(), GeotileError> {
    let center_x = origin.0 + gsd_m * 0.5;
    let center_y = origin.1 - gsd_m * 0.5;
    let text = format!("{gsd_m}\n0.0\n0.0\n{}\n{center_x}\n{center_y}\n", -gsd_m);
    std::fs::write(path, text).map_err(|source| GeotileError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Split one axis into tile extents of `side` pixels. Remainders of at least
/// [`MIN_TILE_SIDE_PX`] become their own clamped edge tile; thinner slivers
/// are absorbed into the final tile so the splits always partition `dim`.
fn axis_splits(dim: usize, side: usize) -> Vec<(usize, usize)> {
    debug_assert!(side >= 1);
    if dim <= side {
        return vec![(0, dim)];
    }
    let full = dim / side;
    let remainder = dim % side;
    let mut splits = Vec::with_capacity(full + 1);
    if remainder == 0 {
        for i in 0..full {
            splits.push((i * side, side));
        }
    } else if remainder >= MIN_TILE_SIDE_PX {
        for i in 0..full {
            splits.push((i * side, side));
        }
        splits.push((full * side, remainder));
    } else {
        for i in 0..full.saturating_sub(1) {
            splits.push((i * side, side));
        }
        splits.push(((full - 1) * side, side + remainder));
    }
    splits
}

/// Plan a non-overlapping, row-major tiling at a constant ground footprint.
///
/// Interior tiles are square with side `round(ground_size_m / gsd_m)` pixels;
/// edge tiles are clamped to the raster boundary.
pub fn plan_tiles(raster: &GeoRaster, ground_size_m: f64) -> Result<Vec<TileRef>, GeotileError> {
    if !(ground_size_m.is_finite() && ground_size_m > 0.0) {
        return Err(GeotileError::InvalidGroundSize(ground_size_m));
    }
    let side = ((ground_size_m / raster.gsd_m()).round() as usize).max(1);
    let row_splits = axis_splits(raster.height_px(), side);
    let col_splits = axis_splits(raster.width_px(), side);

    let mut tiles = Vec::with_capacity(row_splits.len() * col_splits.len());
    for (grid_row, &(row0, n_rows)) in row_splits.iter().enumerate() {
        for (grid_col, &(col0, n_cols)) in col_splits.iter().enumerate() {
            let pixel_window = PixelWindow {
                row0,
                col0,
                n_rows,
                n_cols,
            };
            tiles.push(TileRef {
                tile_id: format!("tile_r{grid_row:04}_c{grid_col:04}"),
                grid_row,
                grid_col,
                geo_bounds: raster.window_bounds(&pixel_window),
                pixel_window,
            });
        }
    }
    Ok(tiles)
}

/// Extract the pixels inside a tile window, byte-identical to the source.
pub fn extract_tile(raster: &GeoRaster, tile: &TileRef) -> Result<RgbImage, GeotileError> {
    let w = &tile.pixel_window;
    if w.row0 + w.n_rows > raster.height_px()
        || w.col0 + w.n_cols > raster.width_px()
        || w.n_rows == 0
        || w.n_cols == 0
    {
        return Err(GeotileError::WindowOutOfBounds {
            window: *w,
            height: raster.height_px(),
            width: raster.width_px(),
        });
    }
    Ok(image::imageops::crop_imm(
        raster.pixels(),
        w.col0 as u32,
        w.row0 as u32,
        w.n_cols as u32,
        w.n_rows as u32,
    )
    .to_image())
}

/// Resize a crop to the square model input size (bilinear). The target side
/// must be a multiple of the encoder patch size; equal dims are returned
/// unchanged.
pub fn resize_for_model(crop: &RgbImage, target_px: usize) -> Result<RgbImage, GeotileError> {
    if target_px == 0 || target_px % PATCH_SIZE != 0 {
        return Err(GeotileError::TargetNotPatchMultiple(target_px));
    }
    if crop.width() == 0 || crop.height() == 0 {
        return Err(GeotileError::EmptyCrop);
    }
    if crop.width() as usize == target_px && crop.height() as usize == target_px {
        return Ok(crop.clone());
    }
    Ok(image::imageops::resize(
        crop,
        target_px as u32,
        target_px as u32,
        image::imageops::FilterType::Triangle,
    ))
}

/// A merged regional label map with georeferencing and tile provenance.
#[derive(Debug, Clone)]
pub struct Mosaic {
    pub labels: Array2<u8>,
    pub gsd_m: f64,
    /// Corner of the top-left pixel, as in [`GeoRaster`].
    pub origin: (f64, f64),
    pub provenance: Vec<String>,
}

impl Mosaic {
    pub fn height_px(&self) -> usize {
        self.labels.dim().0
    }

    pub fn width_px(&self) -> usize {
        self.labels.dim().1
    }
}

/// Merge per-tile prediction masks into a seamless mosaic.
///
/// Masks must be at source-window pixel dimensions. Tiles must partition the
/// mosaic extent exactly: any gap or overlap is an error.
pub fn merge_mosaic(tiles: &[(TileRef, DenseMask)]) -> Result<Mosaic, GeotileError> {
    if tiles.is_empty() {
        return Err(GeotileError::NoTiles);
    }

    // Infer the shared geotransform from the first tile, then verify all.
    let first = &tiles[0].0;
    let w0 = &first.pixel_window;
    let gsd_m = (first.geo_bounds.max_easting - first.geo_bounds.min_easting) / w0.n_cols as f64;
    let origin = (
        first.geo_bounds.min_easting - w0.col0 as f64 * gsd_m,
        first.geo_bounds.max_northing + w0.row0 as f64 * gsd_m,
    );
    if !(gsd_m.is_finite() && gsd_m > 0.0) {
        return Err(GeotileError::InconsistentGeoreference(format!(
            "tile {} implies gsd {gsd_m}",
            first.tile_id
        )));
    }
    for (tile, _) in tiles {
        if !tile.geo_consistent(gsd_m, origin, 1e-6) {
            return Err(GeotileError::InconsistentGeoreference(format!(
                "tile {} bounds do not match the shared geotransform",
                tile.tile_id
            )));
        }
    }

    let height = tiles
        .iter()
        .map(|(t, _)| t.pixel_window.row0 + t.pixel_window.n_rows)
        .max()
        .unwrap();
    let width = tiles
        .iter()
        .map(|(t, _)| t.pixel_window.col0 + t.pixel_window.n_cols)
        .max()
        .unwrap();

    let mut labels = Array2::<u8>::zeros((height, width));
    let mut coverage = Array2::<u8>::zeros((height, width));
    let mut provenance = Vec::with_capacity(tiles.len());
    for (tile, mask) in tiles {
        let w = &tile.pixel_window;
        if mask.dims() != (w.n_rows, w.n_cols) {
            return Err(GeotileError::MaskDimsMismatch {
                tile_id: tile.tile_id.clone(),
                got: mask.dims(),
                expected: (w.n_rows, w.n_cols),
            });
        }
        for r in 0..w.n_rows {
            for c in 0..w.n_cols {
                labels[(w.row0 + r, w.col0 + c)] = mask.get(r, c);
                coverage[(w.row0 + r, w.col0 + c)] = coverage[(w.row0 + r, w.col0 + c)].saturating_add(1);
            }
        }
        provenance.push(tile.tile_id.clone());
    }

    let mut gaps = 0usize;
    let mut overlaps = 0usize;
    let mut first_gap = None;
    let mut first_overlap = None;
    for ((r, c), &count) in coverage.indexed_iter() {
        if count == 0 {
            gaps += 1;
            first_gap.get_or_insert((r, c));
        } else if count > 1 {
            overlaps += 1;
            first_overlap.get_or_insert((r, c));
        }
    }
    if gaps > 0 || overlaps > 0 {
        return Err(GeotileError::Coverage {
            gaps,
            overlaps,
            first_gap,
            first_overlap,
        });
    }

    Ok(Mosaic {
        labels,
        gsd_m,
        origin,
        provenance,
    })
}

/// Palette used for mosaic files: index 0 is transparent (no debris), 1 is
/// low-density, 2 is high-density.
pub const MOSAIC_PALETTE: [[u8; 3]; 3] = [[0, 0, 0], [255, 214, 0], [255, 64, 0]];

/// Provenance manifest accompanying a mosaic on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MosaicProvenance {
    pub schema_version: u32,
    pub gsd_m: f64,
    pub origin_easting: f64,
    pub origin_northing: f64,
    pub height_px: usize,
    pub width_px: usize,
    pub tiles: Vec<ProvenanceTile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProvenanceTile {
    pub tile_id: String,
    pub geo_bounds: GeoBounds,
}

/// Write a mosaic as an indexed PNG plus world-file sidecar and provenance
/// manifest. `base` is the output path without extension.
pub fn save_mosaic(
    mosaic: &Mosaic,
    base: &Path,
    tile_bounds: &[(String, GeoBounds)],
) -> Result<PathBuf, GeotileError> {
    if let Some(parent) = base.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|source| GeotileError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
    }
    let png_path = base.with_extension("png");
    let file = std::fs::File::create(&png_path).map_err(|source| GeotileError::Io {
        path: png_path.clone(),
        source,
    })?;
    let mut encoder = png::Encoder::new(
        BufWriter::new(file),
        mosaic.width_px() as u32,
        mosaic.height_px() as u32,
    );
    encoder.set_color(png::ColorType::Indexed);
    encoder.set_depth(png::BitDepth::Eight);
    encoder.set_palette(MOSAIC_PALETTE.concat());
    encoder.set_trns(vec![0u8]); // index 0 renders transparent
    let mut writer = encoder
        .write_header()
        .map_err(|source| GeotileError::PngEncode {
            path: png_path.clone(),
            source,
        })?;
    let data: Vec<u8> = mosaic.labels.iter().copied().collect();
    writer
        .write_image_data(&data)
        .map_err(|source| GeotileError::PngEncode {
            path: png_path.clone(),
            source,
        })?;
    writer.finish().map_err(|source| GeotileError::PngEncode {
        path: png_path.clone(),
        source,
    })?;

    write_world_file(&base.with_extension("pgw"), mosaic.gsd_m, mosaic.origin)?;

    let provenance = MosaicProvenance {
        schema_version: 1,
        gsd_m: mosaic.gsd_m,
        origin_easting: mosaic.origin.0,
        origin_northing: mosaic.origin.1,
        height_px: mosaic.height_px(),
        width_px: mosaic.width_px(),
        tiles: tile_bounds
            .iter()
            .map(|(tile_id, geo_bounds)| ProvenanceTile {
                tile_id: tile_id.clone(),
                geo_bounds: *geo_bounds,
            })
            .collect(),
    };
    let prov_path = base.with_extension("provenance.json");
    let text = serde_json::to_string_pretty(&provenance).expect("provenance serializes");
    std::fs::write(&prov_path, text).map_err(|source| GeotileError::Io {
        path: prov_path,
        source,
    })?;
    Ok(png_path)
}

/// Read back an indexed mosaic PNG as a label grid.
pub fn load_mosaic_labels(path: &Path) -> Result<Array2<u8>, GeotileError> {
    let file = std::fs::File::open(path).map_err(|source| GeotileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let decoder = png::Decoder::new(std::io::BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|source| GeotileError::PngDecode {
            path: path.to_path_buf(),
            source,
        })?;
    let info = reader.info();
    if info.color_type != png::ColorType::Indexed {
        return Err(GeotileError::NotIndexed {
            path: path.to_path_buf(),
        });
    }
    let (width, height) = (info.width as usize, info.height as usize);
    let mut buf = vec![0u8; reader.output_buffer_size().expect("png buffer size")];
    reader
        .next_frame(&mut buf)
        .map_err(|source| GeotileError::PngDecode {
            path: path.to_path_buf(),
            source,
        })?;
    buf.truncate(width * height);
    Ok(Array2::from_shape_vec((height, width), buf).expect("buffer matches dims"))
}
