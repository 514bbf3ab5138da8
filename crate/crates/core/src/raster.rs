//! Angiogram rasters, binary masks, file formats, cropping and resampling.
//!
//! Pixel `(x, y)` has its center at `origin_um + (x, y) * spacing_um`. Each pixel owns a
//! square footprint of side `spacing_um` around its center; cropping and area-averaging
//! both reason in terms of these footprints.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Magic bytes at the start of a raw-float raster.
pub const RAW_MAGIC: &[u8; 4] = b"OCTA";
const RAW_HEADER_LEN: usize = 16;

/// Tolerance, in pixel units, for boundary decisions on physical coordinates.
const INDEX_EPS: f64 = 1e-6;

/// Where an image came from. Free text in files; the common tags are listed here.
pub mod provenance {
    pub const NATIVE: &str = "native";
    pub const DEGRADED: &str = "degraded";
    pub const GENERATED: &str = "generated";
    pub const PHANTOM_TRUTH: &str = "phantom-truth";
    pub const UNKNOWN: &str = "unknown";
}

/// Sampling grid of a raster: size, spacing and the physical position of pixel (0, 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub spacing_um: f64,
    pub origin_um: [f64; 2],
}

impl Grid {
    /// Physical center of the grid (midpoint of the first and last pixel centers).
    pub fn center_um(&self) -> [f64; 2] {
        [
            self.origin_um[0] + 0.5 * (self.width - 1) as f64 * self.spacing_um,
            self.origin_um[1] + 0.5 * (self.height - 1) as f64 * self.spacing_um,
        ]
    }

    /// Center-to-center physical extent.
    pub fn extent_um(&self) -> [f64; 2] {
        [
            (self.width - 1) as f64 * self.spacing_um,
            (self.height - 1) as f64 * self.spacing_um,
        ]
    }

    /// Physical point to continuous pixel-index coordinates.
    pub fn to_index(&self, p_um: [f64; 2]) -> [f64; 2] {
        [
            (p_um[0] - self.origin_um[0]) / self.spacing_um,
            (p_um[1] - self.origin_um[1]) / self.spacing_um,
        ]
    }

    pub fn to_physical(&self, idx: [f64; 2]) -> [f64; 2] {
        [
            self.origin_um[0] + idx[0] * self.spacing_um,
            self.origin_um[1] + idx[1] * self.spacing_um,
        ]
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A 2-D en-face flow-intensity image with values in `[0, 1]`.
///
/// Immutable once built; every operation returns a new raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Angiogram {
    width: usize,
    height: usize,
    spacing_um: f64,
    origin_um: [f64; 2],
    provenance: String,
    pixels: Vec<f32>,
}

impl Angiogram {
    pub fn new(
        width: usize,
        height: usize,
        spacing_um: f64,
        origin_um: [f64; 2],
        provenance: impl Into<String>,
        pixels: Vec<f32>,
    ) -> Result<Self> {
        ensure!(
            width >= 2 && height >= 2,
            InvalidRaster,
            "raster must be at least 2x2, got {width}x{height}"
        );
        ensure!(
            spacing_um.is_finite() && spacing_um > 0.0,
            InvalidRaster,
            "spacing must be positive, got {spacing_um}"
        );
        ensure!(
            origin_um.iter().all(|v| v.is_finite()),
            InvalidRaster,
            "origin must be finite"
        );
        ensure!(
            pixels.len() == width * height,
            InvalidRaster,
            "expected {} pixels, got {}",
            width * height,
            pixels.len()
        );
        if let Some((i, v)) = pixels
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::InvalidRaster(format!(
                "pixel {i} has value {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            spacing_um,
            origin_um,
            provenance: provenance.into(),
            pixels,
        })
    }

    /// Builds a raster on `grid`, clamping the produced values into `[0, 1]`.
    ///
    /// Non-finite values are rejected.
    pub fn from_fn(
        grid: Grid,
        provenance: impl Into<String>,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(grid.len());
        for y in 0..grid.height {
            for x in 0..grid.width {
                let v = f(x, y);
                ensure!(v.is_finite(), InvalidRaster, "non-finite value at ({x}, {y})");
                pixels.push(v.clamp(0.0, 1.0) as f32);
            }
        }
        Self::new(
            grid.width,
            grid.height,
            grid.spacing_um,
            grid.origin_um,
            provenance,
            pixels,
        )
    }

    /// Builds a raster from `f64` samples on `grid`, clamping into `[0, 1]`.
    pub fn from_values(grid: Grid, provenance: impl Into<String>, values: &[f64]) -> Result<Self> {
        ensure!(
            values.len() == grid.len(),
            InvalidRaster,
            "expected {} values, got {}",
            grid.len(),
            values.len()
        );
        Self::from_fn(grid, provenance, |x, y| values[y * grid.width + x])
    }

    pub fn constant(grid: Grid, value: f32, provenance: impl Into<String>) -> Result<Self> {
        Self::new(
            grid.width,
            grid.height,
            grid.spacing_um,
            grid.origin_um,
            provenance,
            vec![value; grid.len()],
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn spacing_um(&self) -> f64 {
        self.spacing_um
    }

    pub fn origin_um(&self) -> [f64; 2] {
        self.origin_um
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn grid(&self) -> Grid {
        Grid {
            width: self.width,
            height: self.height,
            spacing_um: self.spacing_um,
            origin_um: self.origin_um,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    /// Pixels widened to `f64`, row-major.
    pub fn to_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&v| v as f64).collect()
    }

    pub fn extent_um(&self) -> [f64; 2] {
        self.grid().extent_um()
    }

    pub fn center_um(&self) -> [f64; 2] {
        self.grid().center_um()
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    /// Same grid and provenance, new values (clamped into `[0, 1]`).
    pub fn with_values(&self, values: &[f64]) -> Result<Self> {
        Self::from_values(self.grid(), self.provenance.clone(), values)
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().map(|&v| v as f64).sum::<f64>() / self.pixels.len() as f64
    }

    /// Bilinear sample at continuous pixel-index coordinates, clamped to the edge.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        bilinear_clamped(&self.pixels, self.width, self.height, x, y)
    }
}

pub(crate) fn bilinear_clamped(data: &[f32], width: usize, height: usize, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (width - 1) as f64);
    let y = y.clamp(0.0, (height - 1) as f64);
    let x0 = (x.floor() as usize).min(width - 2);
    let y0 = (y.floor() as usize).min(height - 2);
    let tx = x - x0 as f64;
    let ty = y - y0 as f64;
    let at = |xx: usize, yy: usize| data[yy * width + xx] as f64;
    let top = at(x0, y0) * (1.0 - tx) + at(x0 + 1, y0) * tx;
    let bottom = at(x0, y0 + 1) * (1.0 - tx) + at(x0 + 1, y0 + 1) * tx;
    top * (1.0 - ty) + bottom * ty
}

/// A binary raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        ensure!(
            data.len() == width * height,
            InvalidRaster,
            "mask expects {} entries, got {}",
            width * height,
            data.len()
        );
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Parses rows of `'1'`/`'0'` (or `'#'`/`'.'`) characters.
    pub fn from_rows(rows: &[&str]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        Self::from_fn(width, height, |x, y| {
            matches!(rows[y].as_bytes()[x], b'1' | b'#')
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Out-of-bounds coordinates read as background.
    #[inline]
    pub fn get_signed(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.data[y as usize * self.width + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn same_shape(&self, other: &Mask) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.same_shape(other) && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    pub fn intersects(&self, other: &Mask) -> bool {
        self.data.iter().zip(&other.data).any(|(&a, &b)| a && b)
    }

    /// Foreground pixel coordinates in raster order.
    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(|(i, _)| (i % self.width, i / self.width))
    }

    /// Number of 8-connected foreground components.
    pub fn count_components_8(&self) -> usize {
        let mut seen = vec![false; self.data.len()];
        let mut stack = Vec::new();
        let mut components = 0;
        for start in 0..self.data.len() {
            if !self.data[start] || seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(i) = stack.pop() {
                let (x, y) = ((i % self.width) as isize, (i / self.width) as isize);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if self.get_signed(nx, ny) {
                            let j = ny as usize * self.width + nx as usize;
                            if !seen[j] {
                                seen[j] = true;
                                stack.push(j);
                            }
                        }
                    }
                }
            }
        }
        components
    }

    /// Writes the mask as an 8-bit PNG (0 / 255).
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.data.iter().map(|&v| if v { 255 } else { 0 }).collect();
        let img = image::GrayImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer length matches dimensions");
        img.save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })
    }

    /// Reads an 8-bit grayscale image; any nonzero pixel is foreground.
    pub fn load_png(path: &Path) -> Result<Self> {
        let gray = read_gray8(path)?;
        let (w, h) = gray.dimensions();
        Self::from_vec(
            w as usize,
            h as usize,
            gray.into_raw().into_iter().map(|v| v > 0).collect(),
        )
    }
}

/// A physical rectangle given by its center and full widths, in micrometers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalRegion {
    pub center_um: [f64; 2],
    pub extent_um: [f64; 2],
}

impl PhysicalRegion {
    pub fn new(center_um: [f64; 2], extent_um: [f64; 2]) -> Result<Self> {
        ensure!(
            extent_um.iter().all(|e| e.is_finite() && *e > 0.0),
            InvalidParameter,
            "region extent must be positive, got {extent_um:?}"
        );
        ensure!(
            center_um.iter().all(|c| c.is_finite()),
            InvalidParameter,
            "region center must be finite"
        );
        Ok(Self {
            center_um,
            extent_um,
        })
    }

    /// A square of side `side_um` centered on the image.
    pub fn centered(img: &Angiogram, side_um: f64) -> Result<Self> {
        Self::new(img.center_um(), [side_um, side_um])
    }
}

/// On-disk raster encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RasterFormat {
    /// 8-bit grayscale PNG plus JSON sidecar.
    Png,
    /// `OCTA` header followed by little-endian `f32` pixels, plus JSON sidecar.
    Raw,
}

impl RasterFormat {
    pub fn extension(self) -> &'static str {
        match self {
            RasterFormat::Png => "png",
            RasterFormat::Raw => "raw",
        }
    }

    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "png" => Some(RasterFormat::Png),
            "raw" => Some(RasterFormat::Raw),
            _ => None,
        }
    }
}

/// Metadata stored next to every raster file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub spacing_um: f64,
    pub origin_um: [f64; 2],
    pub provenance: String,
}

/// `image.png` -> `image.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn read_sidecar(path: &Path) -> Result<Option<Sidecar>> {
    let side = sidecar_path(path);
    let text = match fs::read_to_string(&side) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::io(side, e)),
    };
    let meta: Sidecar = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: side.clone(),
        source,
    })?;
    if !(meta.spacing_um.is_finite() && meta.spacing_um > 0.0) {
        return Err(Error::format(
            side,
            format!("spacing_um must be positive, got {}", meta.spacing_um),
        ));
    }
    if !meta.origin_um.iter().all(|v| v.is_finite()) {
        return Err(Error::format(side, "origin_um must be finite"));
    }
    Ok(Some(meta))
}

fn write_sidecar(path: &Path, img: &Angiogram) -> Result<()> {
    let side = sidecar_path(path);
    let meta = Sidecar {
        spacing_um: img.spacing_um,
        origin_um: img.origin_um,
        provenance: img.provenance.clone(),
    };
    let text = serde_json::to_string_pretty(&meta).map_err(|source| Error::Json {
        path: side.clone(),
        source,
    })?;
    fs::write(&side, text + "\n").map_err(|e| Error::io(side, e))
}

fn read_gray8(path: &Path) -> Result<image::GrayImage> {
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let decoded = reader.decode().map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    match decoded {
        image::DynamicImage::ImageLuma8(g) => Ok(g),
        other => Err(Error::format(
            path,
            format!("expected 8-bit grayscale, found {:?}", other.color()),
        )),
    }
}

/// Loads a raster, detecting the raw-float format by its magic bytes.
///
/// PNG inputs require a sidecar; raw inputs take spacing from the header unless a
/// sidecar is present, in which case origin and provenance come from it too.
pub fn load_angiogram(path: &Path) -> Result<Angiogram> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 4];
    let n = read_up_to(&mut file, &mut magic).map_err(|e| Error::io(path, e))?;
    drop(file);
    if n == 4 && &magic == RAW_MAGIC {
        load_raw(path)
    } else {
        load_png(path)
    }
}

fn read_up_to(r: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    Ok(filled)
}

fn load_png(path: &Path) -> Result<Angiogram> {
    let gray = read_gray8(path)?;
    let meta = read_sidecar(path)?
        .ok_or_else(|| Error::format(path, "missing sidecar with spacing_um"))?;
    let (w, h) = gray.dimensions();
    let pixels = gray
        .into_raw()
        .into_iter()
        .map(|v| v as f32 / 255.0)
        .collect();
    Angiogram::new(
        w as usize,
        h as usize,
        meta.spacing_um,
        meta.origin_um,
        meta.provenance,
        pixels,
    )
    .map_err(|e| Error::format(path, e.to_string()))
}

fn load_raw(path: &Path) -> Result<Angiogram> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < RAW_HEADER_LEN {
        return Err(Error::format(path, "truncated header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let width = u32_at(4) as usize;
    let height = u32_at(8) as usize;
    let header_spacing = f32::from_le_bytes(bytes[12..16].try_into().unwrap());
    let expected = RAW_HEADER_LEN + width * height * 4;
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            format!("expected {expected} bytes for {width}x{height}, found {}", bytes.len()),
        ));
    }
    let pixels: Vec<f32> = bytes[RAW_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(i) = pixels.iter().position(|v| v.is_nan()) {
        return Err(Error::format(path, format!("NaN at pixel {i}")));
    }
    let (spacing, origin, prov) = match read_sidecar(path)? {
        Some(meta) => {
            if (meta.spacing_um as f32) != header_spacing {
                return Err(Error::format(
                    path,
                    format!(
                        "sidecar spacing {} disagrees with header spacing {header_spacing}",
                        meta.spacing_um
                    ),
                ));
            }
            (meta.spacing_um, meta.origin_um, meta.provenance)
        }
        None => (
            header_spacing as f64,
            [0.0, 0.0],
            provenance::UNKNOWN.to_string(),
        ),
    };
    Angiogram::new(width, height, spacing, origin, prov, pixels)
        .map_err(|e| Error::format(path, e.to_string()))
}

/// Writes a raster and its sidecar.
pub fn save_angiogram(img: &Angiogram, path: &Path, format: RasterFormat) -> Result<()> {
    match format {
        RasterFormat::Png => {
            let bytes: Vec<u8> = img
                .pixels
                .iter()
                .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
                .collect();
            let gray = image::GrayImage::from_raw(img.width as u32, img.height as u32, bytes)
                .expect("buffer length matches dimensions");
            gray.save_with_format(path, image::ImageFormat::Png)
                .map_err(|source| Error::Image {
                    path: path.to_path_buf(),
                    source,
                })?;
        }
        RasterFormat::Raw => {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            let mut w = BufWriter::new(file);
            let mut header = Vec::with_capacity(RAW_HEADER_LEN);
            header.extend_from_slice(RAW_MAGIC);
            header.extend_from_slice(&(img.width as u32).to_le_bytes());
            header.extend_from_slice(&(img.height as u32).to_le_bytes());
            header.extend_from_slice(&(img.spacing_um as f32).to_le_bytes());
            w.write_all(&header).map_err(|e| Error::io(path, e))?;
            for v in &img.pixels {
                w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
    }
    write_sidecar(path, img)
}

/// Crops to the smallest pixel window whose footprints cover `region`.
///
/// A pixel is kept when its footprint overlaps the region with positive length on both
/// axes, so a region edge falling exactly on a footprint boundary excludes the pixel
/// beyond it.
pub fn crop_physical(img: &Angiogram, region: &PhysicalRegion) -> Result<Angiogram> {
    let grid = img.grid();
    let lo = grid.to_index([
        region.center_um[0] - region.extent_um[0] / 2.0,
        region.center_um[1] - region.extent_um[1] / 2.0,
    ]);
    let hi = grid.to_index([
        region.center_um[0] + region.extent_um[0] / 2.0,
        region.center_um[1] + region.extent_um[1] / 2.0,
    ]);
    let dims = [img.width, img.height];
    let mut start = [0usize; 2];
    let mut end = [0usize; 2];
    for axis in 0..2 {
        let limit = dims[axis] as f64 - 0.5;
        if lo[axis] < -0.5 - INDEX_EPS || hi[axis] > limit + INDEX_EPS {
            return Err(Error::OutOfBounds(format!(
                "region spans pixel coordinates [{:.3}, {:.3}] on axis {axis}, image covers [-0.5, {limit}]",
                lo[axis], hi[axis]
            )));
        }
        let first = ((lo[axis] - 0.5 + INDEX_EPS).floor() + 1.0).max(0.0) as usize;
        let last = ((hi[axis] + 0.5 - INDEX_EPS).ceil() - 1.0).min(dims[axis] as f64 - 1.0) as usize;
        start[axis] = first;
        end[axis] = last.max(first);
    }
    let (w, h) = (end[0] - start[0] + 1, end[1] - start[1] + 1);
    ensure!(
        w >= 2 && h >= 2,
        InvalidParameter,
        "region covers only {w}x{h} pixels"
    );
    let mut pixels = Vec::with_capacity(w * h);
    for y in start[1]..=end[1] {
        let row = y * img.width;
        pixels.extend_from_slice(&img.pixels[row + start[0]..=row + end[0]]);
    }
    Angiogram::new(
        w,
        h,
        img.spacing_um,
        grid.to_physical([start[0] as f64, start[1] as f64]),
        img.provenance.clone(),
        pixels,
    )
}

/// Interpolation kernels for [`resample`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleMethod {
    Nearest,
    Bilinear,
    Bicubic,
    AreaAverage,
}

impl std::str::FromStr for ResampleMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Self::Nearest),
            "bilinear" => Ok(Self::Bilinear),
            "bicubic" => Ok(Self::Bicubic),
            "area_average" | "area" => Ok(Self::AreaAverage),
            other => Err(Error::InvalidParameter(format!(
                "unknown resample method {other:?}"
            ))),
        }
    }
}

/// The footprint-aligned grid at `new_spacing_um` covering the same area as `grid`.
pub fn resampled_grid(grid: &Grid, new_spacing_um: f64) -> Result<Grid> {
    ensure!(
        new_spacing_um.is_finite() && new_spacing_um > 0.0,
        InvalidParameter,
        "new spacing must be positive, got {new_spacing_um}"
    );
    let ratio = grid.spacing_um / new_spacing_um;
    let size = |n: usize| ((n as f64 * ratio).round() as usize).max(2);
    let shift = 0.5 * (new_spacing_um - grid.spacing_um);
    Ok(Grid {
        width: size(grid.width),
        height: size(grid.height),
        spacing_um: new_spacing_um,
        origin_um: [grid.origin_um[0] + shift, grid.origin_um[1] + shift],
    })
}

/// Resamples onto a grid of spacing `new_spacing_um` that keeps the footprint extent.
pub fn resample(img: &Angiogram, new_spacing_um: f64, method: ResampleMethod) -> Result<Angiogram> {
    let target = resampled_grid(&img.grid(), new_spacing_um)?;
    resample_to_grid(img, &target, method)
}

/// Resamples onto an arbitrary target grid. Out-of-image samples clamp to the edge.
pub fn resample_to_grid(img: &Angiogram, target: &Grid, method: ResampleMethod) -> Result<Angiogram> {
    ensure!(
        target.width >= 2 && target.height >= 2 && target.spacing_um > 0.0,
        InvalidParameter,
        "invalid target grid {target:?}"
    );
    let src = img.grid();
    let wx = axis_weights(
        src.width,
        src.spacing_um,
        src.origin_um[0],
        target.width,
        target.spacing_um,
        target.origin_um[0],
        method,
    );
    let wy = axis_weights(
        src.height,
        src.spacing_um,
        src.origin_um[1],
        target.height,
        target.spacing_um,
        target.origin_um[1],
        method,
    );
    // rows first, then columns
    let mut horizontal = vec![0.0f64; target.width * src.height];
    for y in 0..src.height {
        let row = &img.pixels[y * src.width..(y + 1) * src.width];
        for (x, taps) in wx.iter().enumerate() {
            horizontal[y * target.width + x] =
                taps.iter().map(|&(i, w)| w * row[i] as f64).sum();
        }
    }
    let mut out = vec![0.0f64; target.len()];
    for (y, taps) in wy.iter().enumerate() {
        for x in 0..target.width {
            out[y * target.width + x] = taps
                .iter()
                .map(|&(i, w)| w * horizontal[i * target.width + x])
                .sum();
        }
    }
    Angiogram::from_values(*target, img.provenance.clone(), &out)
}

type Taps = Vec<(usize, f64)>;

fn axis_weights(
    n: usize,
    spacing: f64,
    origin: f64,
    m: usize,
    new_spacing: f64,
    new_origin: f64,
    method: ResampleMethod,
) -> Vec<Taps> {
    let last = (n - 1) as isize;
    let clamp = |i: isize| i.clamp(0, last) as usize;
    (0..m)
        .map(|j| {
            let u = (new_origin + j as f64 * new_spacing - origin) / spacing;
            match method {
                ResampleMethod::Nearest => vec![(clamp((u + 0.5).floor() as isize), 1.0)],
                ResampleMethod::Bilinear => {
                    let i0 = u.floor();
                    let t = u - i0;
                    let i0 = i0 as isize;
                    vec![(clamp(i0), 1.0 - t), (clamp(i0 + 1), t)]
                }
                ResampleMethod::Bicubic => {
                    let i0 = u.floor();
                    let t = u - i0;
                    let i0 = i0 as isize;
                    (-1..=2)
                        .map(|k| (clamp(i0 + k), catmull_rom(t - k as f64)))
                        .collect()
                }
                ResampleMethod::AreaAverage => {
                    let half = 0.5 * new_spacing / spacing;
                    let lo = (u - half).max(-0.5);
                    let hi = (u + half).min(n as f64 - 0.5);
                    if hi <= lo {
                        return vec![(clamp(u.round() as isize), 1.0)];
                    }
                    let first = clamp((lo + 0.5).floor() as isize);
                    let last_i = clamp((hi + 0.5).ceil() as isize - 1);
                    let mut taps: Taps = (first..=last_i)
                        .filter_map(|i| {
                            let overlap =
                                (hi.min(i as f64 + 0.5) - lo.max(i as f64 - 0.5)).max(0.0);
                            (overlap > 0.0).then_some((i, overlap))
                        })
                        .collect();
                    let total: f64 = taps.iter().map(|t| t.1).sum();
                    for t in &mut taps {
                        t.1 /= total;
                    }
                    taps
                }
            }
        })
        .collect()
}

/// Keys cubic convolution kernel with a = -0.5.
fn catmull_rom(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        (A + 2.0) * x * x * x - (A + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        A * x * x * x - 5.0 * A * x * x + 8.0 * A * x - 4.0 * A
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(w: usize, h: usize, s: f64) -> Grid {
        Grid {
            width: w,
            height: h,
            spacing_um: s,
            origin_um: [0.0, 0.0],
        }
    }

    fn ramp(w: usize, h: usize, s: f64) -> Angiogram {
        Angiogram::from_fn(grid(w, h, s), "native", |x, y| {
            ((x * 7 + y * 13) % 17) as f64 / 16.0
        })
        .unwrap()
    }

    #[test]
    fn rejects_invalid_rasters() {
        assert!(Angiogram::new(1, 4, 1.0, [0.0; 2], "x", vec![0.0; 4]).is_err());
        assert!(Angiogram::new(2, 2, 0.0, [0.0; 2], "x", vec![0.0; 4]).is_err());
        assert!(Angiogram::new(2, 2, 1.0, [0.0; 2], "x", vec![0.0, 1.5, 0.0, 0.0]).is_err());
        assert!(Angiogram::new(2, 2, 1.0, [0.0; 2], "x", vec![0.0, f32::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn extent_of_245_px_scan() {
        let img = Angiogram::constant(grid(245, 245, 12.24), 0.0, "native").unwrap();
        let e = img.extent_um();
        assert!((e[0] - 2986.56).abs() < 1e-9);
        assert!((e[1] - 2986.56).abs() < 1e-9);
    }

    #[test]
    fn central_3mm_crop_of_8mm_scan() {
        let img = Angiogram::constant(grid(350, 350, 22.857), 0.2, "native").unwrap();
        let region = PhysicalRegion::centered(&img, 3000.0).unwrap();
        let out = crop_physical(&img, &region).unwrap();
        // index-space oracle: center 174.5, half-width 3000 / 22.857 / 2
        let half: f64 = 1500.0 / 22.857;
        let first = ((174.5 - half - 0.5).floor() + 1.0) as usize;
        let last = ((174.5 + half + 0.5).ceil() - 1.0) as usize;
        assert_eq!((first, last), (109, 240));
        assert_eq!((out.width(), out.height()), (132, 132));
        assert_eq!(out.spacing_um(), img.spacing_um());
        assert!((out.origin_um()[0] - 109.0 * 22.857).abs() < 1e-9);
    }

    #[test]
    fn crop_of_full_extent_is_identity() {
        let img = ramp(9, 7, 3.0);
        let region = PhysicalRegion::new(img.center_um(), img.extent_um()).unwrap();
        assert_eq!(crop_physical(&img, &region).unwrap(), img);
    }

    #[test]
    fn crop_outside_extent_fails() {
        let img = ramp(20, 20, 1.0);
        let region = PhysicalRegion::new([19.0, 19.0], [10.0, 10.0]).unwrap();
        assert!(matches!(
            crop_physical(&img, &region),
            Err(Error::OutOfBounds(_))
        ));
        assert!(PhysicalRegion::new([0.0, 0.0], [0.0, 1.0]).is_err());
    }

    #[test]
    fn resample_identity_nearest() {
        let img = ramp(11, 8, 2.5);
        assert_eq!(resample(&img, 2.5, ResampleMethod::Nearest).unwrap(), img);
    }

    #[test]
    fn resample_constant_every_method() {
        let img = Angiogram::constant(grid(30, 21, 12.24), 0.7, "native").unwrap();
        for method in [
            ResampleMethod::Nearest,
            ResampleMethod::Bilinear,
            ResampleMethod::Bicubic,
            ResampleMethod::AreaAverage,
        ] {
            for s in [5.0, 12.24, 22.86, 40.0] {
                let out = resample(&img, s, method).unwrap();
                assert!(out.pixels().iter().all(|&v| (v - 0.7).abs() < 1e-6), "{method:?} {s}");
            }
        }
    }

    #[test]
    fn checkerboard_area_average_to_half_resolution() {
        let img = Angiogram::from_fn(grid(4, 4, 1.0), "native", |x, y| ((x + y) % 2) as f64)
            .unwrap();
        let out = resample(&img, 2.0, ResampleMethod::AreaAverage).unwrap();
        assert_eq!((out.width(), out.height()), (2, 2));
        assert!(out.pixels().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn resample_rejects_non_positive_spacing() {
        let img = ramp(4, 4, 1.0);
        assert!(resample(&img, 0.0, ResampleMethod::Bilinear).is_err());
        assert!(resample(&img, -2.0, ResampleMethod::Bilinear).is_err());
    }

    #[test]
    fn resample_preserves_extent_within_one_output_pixel() {
        let img = ramp(245, 245, 3000.0 / 245.0);
        for s in [7.5, 22.86, 50.0] {
            let out = resample(&img, s, ResampleMethod::Bilinear).unwrap();
            let (a, b) = (img.extent_um()[0], out.extent_um()[0]);
            assert!((a - b).abs() <= s, "spacing {s}: {a} vs {b}");
        }
    }

    #[test]
    fn png_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("half.png");
        let img = Angiogram::constant(grid(6, 5, 12.24), 0.5, "native").unwrap();
        save_angiogram(&img, &path, RasterFormat::Png).unwrap();
        let back = load_angiogram(&path).unwrap();
        assert!(back.pixels().iter().all(|&v| (v - 0.5).abs() <= 1.0 / 255.0));
        assert_eq!(back.spacing_um(), 12.24);
        assert_eq!(back.provenance(), "native");
    }

    #[test]
    fn png_loader_reads_sidecar_spacing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scan.png");
        image::GrayImage::new(245, 245).save(&path).unwrap();
        fs::write(
            sidecar_path(&path),
            r#"{"spacing_um": 12.24, "origin_um": [0.0, 0.0], "provenance": "native"}"#,
        )
        .unwrap();
        let img = load_angiogram(&path).unwrap();
        assert!((img.extent_um()[0] - 2986.56).abs() < 1e-9);
    }

    #[test]
    fn png_without_or_with_bad_sidecar_fails() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scan.png");
        image::GrayImage::new(4, 4).save(&path).unwrap();
        assert!(load_angiogram(&path).is_err());
        fs::write(
            sidecar_path(&path),
            r#"{"spacing_um": -1.0, "origin_um": [0.0, 0.0], "provenance": "native"}"#,
        )
        .unwrap();
        assert!(matches!(load_angiogram(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn color_png_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rgb.png");
        image::RgbImage::new(4, 4).save(&path).unwrap();
        fs::write(
            sidecar_path(&path),
            r#"{"spacing_um": 1.0, "origin_um": [0.0, 0.0], "provenance": "native"}"#,
        )
        .unwrap();
        assert!(load_angiogram(&path).is_err());
    }

    #[test]
    fn raw_zero_file_without_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("zeros.raw");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"OCTA");
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&10f32.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 16]);
        fs::write(&path, bytes).unwrap();
        let img = load_angiogram(&path).unwrap();
        assert_eq!((img.width(), img.height(), img.spacing_um()), (2, 2, 10.0));
        assert!(img.pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn raw_with_nan_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nan.raw");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"OCTA");
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&1f32.to_le_bytes());
        for v in [0.0f32, f32::NAN, 0.0, 0.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&path, bytes).unwrap();
        assert!(load_angiogram(&path).is_err());
    }

    #[test]
    fn save_into_missing_directory_fails() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("no/such/dir/img.raw");
        let img = ramp(4, 4, 1.0);
        assert!(matches!(
            save_angiogram(&img, &path, RasterFormat::Raw),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn mask_components() {
        let m = Mask::from_rows(&["11000", "01000", "00011", "10000"]);
        assert_eq!(m.count_components_8(), 3);
        assert_eq!(m.count(), 6);
    }

    fn arb_angiogram() -> impl Strategy<Value = Angiogram> {
        (2usize..12, 2usize..12, 0.1f64..50.0, -100.0f64..100.0, -100.0f64..100.0).prop_flat_map(
            |(w, h, s, ox, oy)| {
                proptest::collection::vec(0.0f32..=1.0, w * h).prop_map(move |px| {
                    Angiogram::new(w, h, s, [ox, oy], "phantom-truth", px).unwrap()
                })
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn raw_round_trip_is_bit_exact(img in arb_angiogram()) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("img.raw");
            save_angiogram(&img, &path, RasterFormat::Raw).unwrap();
            let back = load_angiogram(&path).unwrap();
            prop_assert_eq!(back, img);
        }

        #[test]
        fn crop_composes(
            x0 in 0usize..10, y0 in 0usize..10, w1 in 4usize..14, h1 in 4usize..14,
            dx in 0usize..3, dy in 0usize..3, w2 in 2usize..4, h2 in 2usize..4,
        ) {
            prop_assume!(dx + w2 <= w1 && dy + h2 <= h1);
            let s = 12.24;
            let img = ramp(30, 30, s);
            // pixel-aligned: region edges on footprint boundaries
            let aligned = |x: usize, y: usize, w: usize, h: usize| PhysicalRegion::new(
                [(x as f64 - 0.5 + w as f64 / 2.0) * s, (y as f64 - 0.5 + h as f64 / 2.0) * s],
                [w as f64 * s, h as f64 * s],
            ).unwrap();
            let r1 = aligned(x0, y0, w1, h1);
            let r2 = aligned(x0 + dx, y0 + dy, w2, h2);
            let inner = crop_physical(&img, &r1).unwrap();
            prop_assert_eq!((inner.width(), inner.height()), (w1, h1));
            let twice = crop_physical(&inner, &r2).unwrap();
            let once = crop_physical(&img, &r2).unwrap();
            prop_assert_eq!(twice.pixels(), once.pixels());
            prop_assert_eq!((twice.width(), twice.height()), (once.width(), once.height()));
            prop_assert!((twice.origin_um()[0] - once.origin_um()[0]).abs() < 1e-9);
        }

        #[test]
        fn area_average_preserves_mean(k in 1usize..5, bw in 1usize..6, bh in 1usize..6, seed in 0u64..1000) {
            let (w, h) = (k * bw * 2, k * bh * 2);
            let img = Angiogram::from_fn(grid(w, h, 1.0), "native", |x, y| {
                (((x as u64 * 31 + y as u64 * 17 + seed) * 2654435761) % 1000) as f64 / 999.0
            }).unwrap();
            let out = resample(&img, k as f64, ResampleMethod::AreaAverage).unwrap();
            prop_assert!((out.mean() - img.mean()).abs() < 1e-6);
        }
    }
}
