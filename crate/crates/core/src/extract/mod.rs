//! Image → feature extractors.
//!
//! Built-in extractors are selected by id:
//! - `randconv:<seed>`: random 7×7 convolutions, ReLU, 3×3 max-pool grid (288-d);
//! - `randconv-unpooled:<seed>`: the same filters without pooling (26912-d);
//! - `pixels:<s>`: bilinear resize to s×s, RGB flattened (3s²-d).

mod randconv;
pub mod rng;

pub use randconv::{Pooling, RandConv};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::FactorGrid;
use crate::stimuli::ImageRgb;
use crate::store::{FeatureSet, Manifest};

/// A deterministic map from images to fixed-length feature vectors.
pub trait Extractor: Send + Sync {
    fn id(&self) -> String;
    fn dim(&self) -> usize;
    fn seed(&self) -> Option<u64> {
        None
    }
    fn evaluate(&self, image: &ImageRgb) -> Vec<f64>;
}

/// Bilinear resize to `side × side` with half-pixel centers, returning HWC
/// values in [0, 1].
pub fn resize_bilinear(image: &ImageRgb, side: usize) -> Vec<f64> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let px = image.pixels();
    let sample = |x: usize, y: usize, c: usize| f64::from(px[(y * w + x) * 3 + c]) / 255.0;
    let axis = |dst: usize, src_len: usize| -> (usize, usize, f64) {
        let s = ((dst as f64 + 0.5) * (src_len as f64 / side as f64) - 0.5)
            .clamp(0.0, (src_len - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(src_len - 1);
        (i0, i1, s - i0 as f64)
    };
    let xs: Vec<_> = (0..side).map(|x| axis(x, w)).collect();
    let mut out = Vec::with_capacity(side * side * 3);
    for y in 0..side {
        let (y0, y1, fy) = axis(y, h);
        for &(x0, x1, fx) in &xs {
            for c in 0..3 {
                // a + (b - a) f is exact when a == b
                let (a, b) = (sample(x0, y0, c), sample(x1, y0, c));
                let top = a + (b - a) * fx;
                let (a, b) = (sample(x0, y1, c), sample(x1, y1, c));
                let bottom = a + (b - a) * fx;
                out.push(top + (bottom - top) * fy);
            }
        }
    }
    out
}

/// Raw pixels after a bilinear resize.
#[derive(Debug, Clone)]
pub struct PixelExtractor {
    side: usize,
}

impl PixelExtractor {
    pub fn new(side: usize) -> Result<Self> {
        if side < 2 {
            return Err(Error::Param(format!(
                "pixel extractor side must be at least 2, got {side}"
            )));
        }
        Ok(PixelExtractor { side })
    }
}

impl Extractor for PixelExtractor {
    fn id(&self) -> String {
        format!("pixels:{}", self.side)
    }

    fn dim(&self) -> usize {
        3 * self.side * self.side
    }

    fn evaluate(&self, image: &ImageRgb) -> Vec<f64> {
        resize_bilinear(image, self.side)
    }
}

/// Builds an extractor from its CLI id.
pub fn from_id(id: &str) -> Result<Box<dyn Extractor>> {
    let (kind, arg) = id
        .split_once(':')
        .ok_or_else(|| Error::Param(format!("extractor id `{id}` must look like kind:arg")))?;
    let bad = || Error::Param(format!("invalid argument in extractor id `{id}`"));
    match kind {
        "randconv" => Ok(Box::new(RandConv::new(arg.parse().map_err(|_| bad())?))),
        "randconv-unpooled" => Ok(Box::new(RandConv::with_pooling(
            arg.parse().map_err(|_| bad())?,
            Pooling::None,
        ))),
        "pixels" => Ok(Box::new(PixelExtractor::new(
            arg.parse().map_err(|_| bad())?,
        )?)),
        _ => Err(Error::Param(format!("unknown extractor kind `{kind}`"))),
    }
}

/// Runs `extractor` over `images` (in grid row order). Images are evaluated
/// in parallel; each row lands at its grid position.
pub fn extract_set(
    images: &[ImageRgb],
    grid: &FactorGrid,
    extractor: &dyn Extractor,
) -> Result<FeatureSet> {
    if images.len() != grid.size() {
        return Err(Error::Shape(format!(
            "{} images for a grid of {} cells",
            images.len(),
            grid.size()
        )));
    }
    let dim = extractor.dim();
    let mut data = vec![0f32; images.len() * dim];
    data.par_chunks_mut(dim)
        .zip(images.par_iter())
        .try_for_each(|(row, img)| {
            let v = extractor.evaluate(img);
            if v.len() != dim {
                return Err(Error::Shape(format!(
                    "extractor `{}` returned {} values, declared {dim}",
                    extractor.id(),
                    v.len()
                )));
            }
            row.iter_mut().zip(&v).for_each(|(o, x)| *o = *x as f32);
            Ok(())
        })?;
    let manifest = Manifest {
        extractor: Some(extractor.id()),
        seed: extractor.seed(),
        ..Default::default()
    };
    FeatureSet::new(grid.clone(), extractor.id(), dim, data, manifest)
}
