//! Synthetic 2D stimulus collections aligned to factor grids.
//!
//! Three recipes:
//! - `color_grid`: constant-color images on a uniform RGB lattice;
//! - `rectangles`: a black axis-aligned rectangle of constant area on white,
//!   varying position and aspect ratio;
//! - `center_surround`: a centered square (half the image side) of one color
//!   on a background of another.
//!
//! Rasterization is integer-edged with no anti-aliasing, so outputs are
//! byte-identical for identical recipes.

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Factor, FactorGrid, Level};

pub const DEFAULT_IMAGE_SIDE: u32 = 227;
pub const MIN_IMAGE_SIDE: u32 = 8;
pub const MANIFEST_FILE: &str = "manifest.json";

/// 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRgb {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl ImageRgb {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width < MIN_IMAGE_SIDE || height < MIN_IMAGE_SIDE {
            return Err(Error::Param(format!(
                "image is {width}x{height}, both sides must be at least {MIN_IMAGE_SIDE}"
            )));
        }
        if pixels.len() != width as usize * height as usize * 3 {
            return Err(Error::Shape(format!(
                "{width}x{height} RGB image needs {} bytes, got {}",
                width as usize * height as usize * 3,
                pixels.len()
            )));
        }
        Ok(ImageRgb {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self> {
        let n = width as usize * height as usize;
        ImageRgb::new(width, height, rgb.repeat(n))
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Fills `[x0, x1) × [y0, y1)`, clipped to the image.
    pub fn fill_rect(&mut self, x0: u32, y0: u32, x1: u32, y1: u32, rgb: [u8; 3]) {
        let (x1, y1) = (x1.min(self.width), y1.min(self.height));
        for y in y0..y1 {
            for x in x0..x1 {
                let i = (y as usize * self.width as usize + x as usize) * 3;
                self.pixels[i..i + 3].copy_from_slice(&rgb);
            }
        }
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut enc = png::Encoder::new(BufWriter::new(f), self.width, self.height);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let png_err = |e: png::EncodingError| Error::io(path, std::io::Error::other(e));
        let mut w = enc.write_header().map_err(png_err)?;
        w.write_image_data(&self.pixels).map_err(png_err)?;
        w.finish().map_err(png_err)?;
        Ok(())
    }

    /// Reads an 8-bit PNG; grayscale and alpha channels are converted to RGB.
    pub fn read_png(path: &Path) -> Result<Self> {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut dec = png::Decoder::new(BufReader::new(f));
        dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let fmt =
            |e: png::DecodingError| Error::format("image", format!("{}: {e}", path.display()));
        let mut reader = dec.read_info().map_err(fmt)?;
        let size = reader.output_buffer_size().ok_or_else(|| {
            Error::format("image", format!("{}: image too large", path.display()))
        })?;
        let mut buf = vec![0; size];
        let info = reader.next_frame(&mut buf).map_err(fmt)?;
        let (w, h) = (info.width, info.height);
        let n = w as usize * h as usize;
        let stride = info.line_size;
        let channels = match info.color_type {
            png::ColorType::Grayscale => 1,
            png::ColorType::GrayscaleAlpha => 2,
            png::ColorType::Rgb => 3,
            png::ColorType::Rgba => 4,
            png::ColorType::Indexed => {
                return Err(Error::format("image", "unexpanded palette image"));
            }
        };
        let mut pixels = Vec::with_capacity(n * 3);
        for y in 0..h as usize {
            let line = &buf[y * stride..y * stride + w as usize * channels];
            for px in line.chunks_exact(channels) {
                match channels {
                    1 | 2 => pixels.extend_from_slice(&[px[0]; 3]),
                    _ => pixels.extend_from_slice(&px[..3]),
                }
            }
        }
        ImageRgb::new(w, h, pixels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

impl Default for ImageSize {
    fn default() -> Self {
        ImageSize::square(DEFAULT_IMAGE_SIDE)
    }
}

impl ImageSize {
    pub fn square(side: u32) -> Self {
        ImageSize {
            width: side,
            height: side,
        }
    }

    fn check(&self) -> Result<()> {
        if self.width < MIN_IMAGE_SIDE || self.height < MIN_IMAGE_SIDE {
            return Err(Error::Param(format!(
                "image size {}x{} below the {MIN_IMAGE_SIDE}px minimum",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectangleRecipe {
    pub positions_per_axis: usize,
    pub n_aspect: usize,
    /// Rectangle area as a fraction of the image area.
    pub area_fraction: f64,
    /// Width/height ratio range, geometrically spaced.
    pub aspect_min: f64,
    pub aspect_max: f64,
    pub image_size: ImageSize,
}

impl Default for RectangleRecipe {
    fn default() -> Self {
        RectangleRecipe {
            positions_per_axis: 6,
            n_aspect: 12,
            area_fraction: 0.26 * 0.26,
            aspect_min: 0.25,
            aspect_max: 4.0,
            image_size: ImageSize::default(),
        }
    }
}

impl RectangleRecipe {
    /// Aspect ratios (width / height); a single level uses the geometric mean
    /// of the range.
    pub fn aspects(&self) -> Vec<f64> {
        let n = self.n_aspect;
        if n == 1 {
            return vec![(self.aspect_min * self.aspect_max).sqrt()];
        }
        let ratio = self.aspect_max / self.aspect_min;
        (0..n)
            .map(|i| self.aspect_min * ratio.powf(i as f64 / (n - 1) as f64))
            .collect()
    }

    /// Rectangle (width, height) in pixels, before rounding.
    pub fn rect_size(&self, aspect: f64) -> (f64, f64) {
        let area =
            self.area_fraction * self.image_size.width as f64 * self.image_size.height as f64;
        ((area * aspect).sqrt(), (area / aspect).sqrt())
    }

    /// Rectangle centers along x and y. The grid is inset so the widest and
    /// tallest rectangles stay inside the image.
    pub fn centers(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let (w, h) = (self.image_size.width as f64, self.image_size.height as f64);
        let (mut half_w, mut half_h) = (0.0f64, 0.0f64);
        for a in self.aspects() {
            let (rw, rh) = self.rect_size(a);
            half_w = half_w.max(rw / 2.0);
            half_h = half_h.max(rh / 2.0);
        }
        if 2.0 * half_w > w || 2.0 * half_h > h {
            return Err(Error::Param(format!(
                "largest rectangle ({:.1}x{:.1}) does not fit in a {}x{} image",
                2.0 * half_w,
                2.0 * half_h,
                w,
                h
            )));
        }
        let axis = |extent: f64, half: f64| -> Vec<f64> {
            let p = self.positions_per_axis;
            if p == 1 {
                return vec![extent / 2.0];
            }
            (0..p)
                .map(|i| half + i as f64 * (extent - 2.0 * half) / (p - 1) as f64)
                .collect()
        };
        Ok((axis(w, half_w), axis(h, half_h)))
    }

    fn validate(&self) -> Result<()> {
        self.image_size.check()?;
        if self.positions_per_axis == 0 || self.n_aspect == 0 {
            return Err(Error::Param(
                "positions and aspect counts must be at least 1".into(),
            ));
        }
        if !(self.area_fraction > 0.0 && self.area_fraction < 1.0) {
            return Err(Error::Param(format!(
                "area fraction must be in (0, 1), got {}",
                self.area_fraction
            )));
        }
        if !(self.aspect_min > 0.0
            && self.aspect_max >= self.aspect_min
            && self.aspect_max.is_finite())
        {
            return Err(Error::Param(format!(
                "invalid aspect range [{}, {}]",
                self.aspect_min, self.aspect_max
            )));
        }
        self.centers().map(|_| ())
    }

    /// Pixel bounds `[x0, x1) × [y0, y1)` of the rectangle for one cell.
    pub fn rect_bounds(&self, cx: f64, cy: f64, aspect: f64) -> (u32, u32, u32, u32) {
        let (rw, rh) = self.rect_size(aspect);
        let (w, h) = (self.image_size.width as f64, self.image_size.height as f64);
        let x0 = (cx - rw / 2.0).round().clamp(0.0, w) as u32;
        let x1 = (cx + rw / 2.0).round().clamp(0.0, w) as u32;
        let y0 = (cy - rh / 2.0).round().clamp(0.0, h) as u32;
        let y1 = (cy + rh / 2.0).round().clamp(0.0, h) as u32;
        (x0, y0, x1, y1)
    }
}

/// A generation recipe, recorded verbatim in manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StimulusRecipe {
    ColorGrid {
        steps: usize,
        image_size: ImageSize,
    },
    Rectangles(RectangleRecipe),
    CenterSurround {
        fg_steps: usize,
        bg_steps: usize,
        image_size: ImageSize,
    },
}

/// Generated images with their grid, in row order.
#[derive(Debug, Clone)]
pub struct StimulusSet {
    pub grid: FactorGrid,
    pub images: Vec<ImageRgb>,
    pub recipe: StimulusRecipe,
}

/// Channel values `round(255 i / (steps - 1))`.
pub fn channel_levels(steps: usize) -> Result<Vec<u8>> {
    if steps < 2 {
        return Err(Error::Param(format!(
            "color steps must be at least 2, got {steps}"
        )));
    }
    if steps > 256 {
        return Err(Error::Param(format!(
            "color steps must be at most 256, got {steps}"
        )));
    }
    Ok((0..steps)
        .map(|i| (255.0 * i as f64 / (steps - 1) as f64).round() as u8)
        .collect())
}

/// All `steps³` colors, red outermost and blue fastest.
pub fn color_lattice(steps: usize) -> Result<Vec<[u8; 3]>> {
    let c = channel_levels(steps)?;
    let mut out = Vec::with_capacity(steps.pow(3));
    for &r in &c {
        for &g in &c {
            for &b in &c {
                out.push([r, g, b]);
            }
        }
    }
    Ok(out)
}

fn color_factor(name: &str, colors: &[[u8; 3]]) -> Factor {
    Factor::new(
        name,
        colors
            .iter()
            .map(|[r, g, b]| Level::new(format!("{r},{g},{b}")))
            .collect(),
    )
}

pub fn gen_color_grid(steps: usize, image_size: ImageSize) -> Result<StimulusSet> {
    image_size.check()?;
    let colors = color_lattice(steps)?;
    let grid = FactorGrid::new(vec![color_factor("rgb", &colors)])?;
    let images = colors
        .par_iter()
        .map(|&c| ImageRgb::filled(image_size.width, image_size.height, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(StimulusSet {
        grid,
        images,
        recipe: StimulusRecipe::ColorGrid { steps, image_size },
    })
}

pub fn gen_rectangles(recipe: &RectangleRecipe) -> Result<StimulusSet> {
    recipe.validate()?;
    let (xs, ys) = recipe.centers()?;
    let aspects = recipe.aspects();
    let mut positions = Vec::with_capacity(xs.len() * ys.len());
    let mut pos_levels = Vec::with_capacity(xs.len() * ys.len());
    for &cy in &ys {
        for &cx in &xs {
            positions.push((cx, cy));
            pos_levels.push(Level {
                label: format!("{cx:.1},{cy:.1}"),
                value: None,
                units: Some("pixels".into()),
            });
        }
    }
    let aspect_levels = aspects
        .iter()
        .map(|&a| Level {
            label: format!("{a:.4}"),
            value: Some(a),
            units: Some("unitless".into()),
        })
        .collect();
    let grid = FactorGrid::new(vec![
        Factor::new("position", pos_levels),
        Factor::new("aspect", aspect_levels),
    ])?;
    let size = recipe.image_size;
    let images = (0..grid.size())
        .into_par_iter()
        .map(|row| {
            let (cx, cy) = positions[row / aspects.len()];
            let a = aspects[row % aspects.len()];
            let mut img = ImageRgb::filled(size.width, size.height, [255; 3])?;
            let (x0, y0, x1, y1) = recipe.rect_bounds(cx, cy, a);
            img.fill_rect(x0, y0, x1, y1, [0; 3]);
            Ok(img)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StimulusSet {
        grid,
        images,
        recipe: StimulusRecipe::Rectangles(recipe.clone()),
    })
}

/// Bounds `[x0, x1) × [y0, y1)` of the central square: side `round(w/2)` by
/// `round(h/2)`.
pub fn center_square(size: ImageSize) -> (u32, u32, u32, u32) {
    let sw = (size.width as f64 / 2.0).round() as u32;
    let sh = (size.height as f64 / 2.0).round() as u32;
    let x0 = (size.width - sw) / 2;
    let y0 = (size.height - sh) / 2;
    (x0, y0, x0 + sw, y0 + sh)
}

pub fn gen_center_surround(
    fg_steps: usize,
    bg_steps: usize,
    image_size: ImageSize,
) -> Result<StimulusSet> {
    image_size.check()?;
    let fg = color_lattice(fg_steps)?;
    let bg = color_lattice(bg_steps)?;
    let grid = FactorGrid::new(vec![
        color_factor("fg_rgb", &fg),
        color_factor("bg_rgb", &bg),
    ])?;
    let (x0, y0, x1, y1) = center_square(image_size);
    let images = (0..grid.size())
        .into_par_iter()
        .map(|row| {
            let mut img =
                ImageRgb::filled(image_size.width, image_size.height, bg[row % bg.len()])?;
            img.fill_rect(x0, y0, x1, y1, fg[row / bg.len()]);
            Ok(img)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StimulusSet {
        grid,
        images,
        recipe: StimulusRecipe::CenterSurround {
            fg_steps,
            bg_steps,
            image_size,
        },
    })
}

pub fn generate(recipe: &StimulusRecipe) -> Result<StimulusSet> {
    match recipe {
        StimulusRecipe::ColorGrid { steps, image_size } => gen_color_grid(*steps, *image_size),
        StimulusRecipe::Rectangles(r) => gen_rectangles(r),
        StimulusRecipe::CenterSurround {
            fg_steps,
            bg_steps,
            image_size,
        } => gen_center_surround(*fg_steps, *bg_steps, *image_size),
    }
}

/// One image entry of a collection manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub file: String,
    pub index: Vec<usize>,
}

/// `manifest.json` of an image collection: the grid, the recipe (if
/// generated) and the file → multi-index mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectionManifest {
    pub grid: FactorGrid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe: Option<StimulusRecipe>,
    pub images: Vec<ImageEntry>,
}

impl CollectionManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format("manifest", e.to_string()))
    }

    /// Image paths in grid row order. Entries may be listed in any order but
    /// must cover every cell exactly once.
    pub fn files_in_row_order(&self, base: &Path) -> Result<Vec<PathBuf>> {
        let n = self.grid.size();
        if self.images.len() != n {
            return Err(Error::Shape(format!(
                "manifest lists {} images for a grid of {n}",
                self.images.len()
            )));
        }
        let mut slots: Vec<Option<PathBuf>> = vec![None; n];
        for e in &self.images {
            let r = self.grid.row_index(&e.index)?;
            if slots[r].replace(base.join(&e.file)).is_some() {
                return Err(Error::Shape(format!(
                    "grid cell {:?} listed twice",
                    e.index
                )));
            }
        }
        Ok(slots
            .into_iter()
            .map(|p| p.expect("all cells covered"))
            .collect())
    }
}

/// Writes `img_NNNNNN.png` files and `manifest.json` into `dir`.
pub fn write_collection(set: &StimulusSet, dir: &Path) -> Result<CollectionManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let entries: Vec<ImageEntry> = (0..set.images.len())
        .map(|r| ImageEntry {
            file: format!("img_{r:06}.png"),
            index: set.grid.multi_index_unchecked(r),
        })
        .collect();
    entries
        .par_iter()
        .zip(&set.images)
        .try_for_each(|(e, img)| img.write_png(&dir.join(&e.file)))?;
    let manifest = CollectionManifest {
        grid: set.grid.clone(),
        recipe: Some(set.recipe.clone()),
        images: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| Error::format("manifest", e.to_string()))?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Loads a collection manifest and its images in row order.
pub fn read_collection(manifest_path: &Path) -> Result<(CollectionManifest, Vec<ImageRgb>)> {
    let manifest = CollectionManifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let files = manifest.files_in_row_order(base)?;
    let images = files
        .par_iter()
        .map(|p| ImageRgb::read_png(p))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, images))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn black_pixels(img: &ImageRgb) -> usize {
        img.pixels()
            .chunks_exact(3)
            .filter(|p| p == &[0, 0, 0])
            .count()
    }

    #[test]
    fn color_grid_counts_and_corners() {
        let s = gen_color_grid(2, ImageSize::square(8)).unwrap();
        assert_eq!(s.images.len(), 8);
        assert_eq!(s.images[0].get(3, 3), [0, 0, 0]);
        assert_eq!(s.images[7].get(0, 7), [255, 255, 255]);
        assert_eq!(s.images[1].get(0, 0), [0, 0, 255]);
        assert_eq!(s.images[4].get(0, 0), [255, 0, 0]);
        assert_eq!(s.grid.factors()[0].levels[5].label, "255,0,255");

        assert_eq!(color_lattice(11).unwrap().len(), 1331);
        assert_eq!(color_lattice(5).unwrap().len(), 125);
        assert_eq!(channel_levels(5).unwrap(), vec![0, 64, 128, 191, 255]);
        assert!(matches!(
            gen_color_grid(1, ImageSize::default()),
            Err(Error::Param(_))
        ));
    }

    #[test]
    fn rectangles_default_grid() {
        let s = gen_rectangles(&RectangleRecipe::default()).unwrap();
        assert_eq!(s.images.len(), 432);
        assert_eq!(s.grid.shape(), vec![36, 12]);
        let r = RectangleRecipe::default();
        let a = r.aspects();
        assert!((a[0] - 0.25).abs() < 1e-12 && (a[11] - 4.0).abs() < 1e-12);
        for w in a.windows(2) {
            assert!((w[1] / w[0] - (16.0f64).powf(1.0 / 11.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn rectangle_area_and_bounds() {
        let r = RectangleRecipe::default();
        let s = gen_rectangles(&r).unwrap();
        let (w, h) = (227.0, 227.0);
        let aspects = r.aspects();
        for (row, img) in s.images.iter().enumerate() {
            let (rw, rh) = r.rect_size(aspects[row % 12]);
            let frac = black_pixels(img) as f64 / (w * h);
            assert!(
                (frac - 0.0676).abs() <= 2.0 * (rw + rh) / (w * h),
                "row {row}: {frac}"
            );
            // in bounds: the border rows/cols adjacent to the rectangle are white somewhere
            assert!(black_pixels(img) > 0);
        }
    }

    #[test]
    fn square_case() {
        let r = RectangleRecipe {
            positions_per_axis: 2,
            n_aspect: 1,
            ..Default::default()
        };
        let s = gen_rectangles(&r).unwrap();
        let (x0, y0, x1, y1) = r.rect_bounds(113.5, 113.5, 1.0);
        assert_eq!(x1 - x0, y1 - y0);
        assert!(((x1 - x0) as f64 - 0.26 * 227.0).abs() <= 1.0);
        assert_eq!(s.grid.factors()[1].levels[0].value, Some(1.0));
    }

    #[test]
    fn oversized_rectangle_rejected() {
        let r = RectangleRecipe {
            area_fraction: 0.5,
            aspect_min: 1.0 / 16.0,
            aspect_max: 16.0,
            ..Default::default()
        };
        assert!(matches!(gen_rectangles(&r), Err(Error::Param(_))));
        let r = RectangleRecipe {
            area_fraction: 1.0,
            ..Default::default()
        };
        assert!(matches!(gen_rectangles(&r), Err(Error::Param(_))));
    }

    #[test]
    fn center_surround_geometry() {
        let size = ImageSize::default();
        let s = gen_center_surround(2, 2, size).unwrap();
        assert_eq!(s.grid.shape(), vec![8, 8]);
        assert!(s.images[0].pixels().iter().all(|&p| p == 0));
        // fg black (0) on bg white (7)
        let img = &s.images[7];
        assert_eq!(black_pixels(img), 114 * 114);
        assert_eq!(img.get(0, 0), [255, 255, 255]);
        assert_eq!(img.get(113, 113), [0, 0, 0]);
        let (x0, y0, x1, y1) = center_square(size);
        assert_eq!((x1 - x0, y1 - y0), (114, 114));
        assert!(matches!(
            gen_center_surround(1, 2, size),
            Err(Error::Param(_))
        ));
    }

    #[test]
    fn deterministic() {
        let a = gen_rectangles(&RectangleRecipe::default()).unwrap();
        let b = gen_rectangles(&RectangleRecipe::default()).unwrap();
        assert_eq!(a.images, b.images);
    }

    #[test]
    fn png_collection_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let s = gen_center_surround(2, 2, ImageSize::square(16)).unwrap();
        let m = write_collection(&s, dir.path()).unwrap();
        assert_eq!(m.images[9].index, vec![1, 1]);
        let (m2, imgs) = read_collection(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(m2, m);
        assert_eq!(imgs, s.images);
    }

    #[test]
    fn manifest_order_is_free_but_complete() {
        let dir = tempfile::tempdir().unwrap();
        let s = gen_color_grid(2, ImageSize::square(8)).unwrap();
        let mut m = write_collection(&s, dir.path()).unwrap();
        m.images.reverse();
        let files = m.files_in_row_order(dir.path()).unwrap();
        assert!(files[0].ends_with("img_000000.png"));
        m.images.pop();
        assert!(matches!(
            m.files_in_row_order(dir.path()),
            Err(Error::Shape(_))
        ));
    }
}
