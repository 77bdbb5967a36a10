//! Exact dot-product retrieval over PCA-reduced features, and azimuth
//! evaluation of the top match.

use std::cmp::Ordering;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::{fit_pca, PcaModel};
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::store::FeatureSet;

pub const DEFAULT_TARGET_DIM: usize = 1000;
pub const DEFAULT_ORIENTATION_THRESHOLD: f64 = 20.0;

/// Per-row metadata of an indexed view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewMeta {
    pub model_id: String,
    pub azimuth_deg: Option<f64>,
    pub elevation_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Match {
    pub row: usize,
    pub score: f64,
    #[serde(flatten)]
    pub meta: ViewMeta,
}

#[derive(Debug, Clone)]
pub struct IndexOptions {
    pub target_dim: usize,
    /// L2-normalize reduced vectors and queries (cosine similarity).
    pub normalize: bool,
    /// Require azimuths on every row.
    pub require_azimuth: bool,
}

impl Default for IndexOptions {
    fn default() -> Self {
        IndexOptions {
            target_dim: DEFAULT_TARGET_DIM,
            normalize: false,
            require_azimuth: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RetrievalIndex {
    pca: PcaModel,
    /// `n × D`, rows are projected (and optionally normalized) index entries.
    reduced: Matrix,
    meta: Vec<ViewMeta>,
    normalize: bool,
}

fn normalize_in_place(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Descending score, then ascending row.
fn rank_order(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

pub fn build_index(
    set: &FeatureSet,
    meta: Vec<ViewMeta>,
    opts: &IndexOptions,
) -> Result<RetrievalIndex> {
    let n = set.n_rows();
    if n < 2 {
        return Err(Error::Param(format!(
            "an index needs at least 2 rows, got {n}"
        )));
    }
    if meta.len() != n {
        return Err(Error::Meta(format!(
            "{} metadata rows for {n} features",
            meta.len()
        )));
    }
    if opts.require_azimuth {
        if let Some(r) = meta.iter().position(|m| m.azimuth_deg.is_none()) {
            return Err(Error::Meta(format!("row {r} has no azimuth")));
        }
    }
    if opts.target_dim == 0 {
        return Err(Error::Param("target dimension must be positive".into()));
    }
    let data = Matrix::from_f32(n, set.dim(), set.data())?;
    let d = opts.target_dim.min(n).min(set.dim());
    let pca = fit_pca(&data, d)?;
    let mut reduced = crate::embed::project(&pca, &data)?.coords;
    if opts.normalize {
        for r in 0..n {
            normalize_in_place(reduced.row_mut(r));
        }
    }
    Ok(RetrievalIndex {
        pca,
        reduced,
        meta,
        normalize: opts.normalize,
    })
}

impl RetrievalIndex {
    pub fn len(&self) -> usize {
        self.reduced.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.reduced.rows() == 0
    }

    pub fn reduced_dim(&self) -> usize {
        self.reduced.cols()
    }

    pub fn feature_dim(&self) -> usize {
        self.pca.dim()
    }

    pub fn pca(&self) -> &PcaModel {
        &self.pca
    }

    pub fn reduced(&self) -> &Matrix {
        &self.reduced
    }

    pub fn meta(&self) -> &[ViewMeta] {
        &self.meta
    }

    /// Centers with the index mean, projects, and normalizes if enabled.
    pub fn reduce_query(&self, feature: &[f64]) -> Result<Vec<f64>> {
        let mut q = self.pca.project_vec(feature)?;
        if self.normalize {
            normalize_in_place(&mut q);
        }
        Ok(q)
    }

    /// Scores of every row against a reduced query.
    pub fn scores(&self, reduced_query: &[f64]) -> Vec<f64> {
        (0..self.len())
            .into_par_iter()
            .map(|r| dot(self.reduced.row(r), reduced_query))
            .collect()
    }

    /// Exact top-`k` by dot product in the reduced space.
    pub fn query(&self, feature: &[f64], k: usize) -> Result<Vec<Match>> {
        if k == 0 {
            return Err(Error::Param("k must be at least 1".into()));
        }
        let q = self.reduce_query(feature)?;
        let mut scored: Vec<(usize, f64)> = self.scores(&q).into_iter().enumerate().collect();
        let k = k.min(scored.len());
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, rank_order);
            scored.truncate(k);
        }
        scored.sort_by(rank_order);
        Ok(scored
            .into_iter()
            .map(|(row, score)| Match {
                row,
                score,
                meta: self.meta[row].clone(),
            })
            .collect())
    }
}

/// Circular azimuth difference in degrees, in [0, 180].
pub fn angular_error(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Fraction of predictions whose circular error is strictly below `threshold`.
pub fn eval_orientation(predicted: &[f64], truth: &[f64], threshold: f64) -> Result<f64> {
    if predicted.is_empty() {
        return Err(Error::Param("no queries to evaluate".into()));
    }
    if predicted.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} ground-truth azimuths",
            predicted.len(),
            truth.len()
        )));
    }
    let hits = predicted
        .iter()
        .zip(truth)
        .filter(|(p, t)| angular_error(**p, **t) < threshold)
        .count();
    Ok(hits as f64 / predicted.len() as f64)
}

#[derive(Debug, Deserialize)]
struct MetaRecord {
    row: usize,
    model_id: String,
    azimuth_deg: Option<f64>,
    elevation_deg: Option<f64>,
}

/// Reads `row,model_id,azimuth_deg,elevation_deg` CSV (header required).
/// Rows may appear in any order but must cover `0..n` exactly once.
pub fn read_metadata_csv(path: &Path, n: usize) -> Result<Vec<ViewMeta>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Meta(format!("{}: {e}", path.display())))?;
    let mut slots: Vec<Option<ViewMeta>> = vec![None; n];
    for rec in rdr.deserialize::<MetaRecord>() {
        let rec = rec.map_err(|e| Error::Meta(format!("{}: {e}", path.display())))?;
        let slot = slots
            .get_mut(rec.row)
            .ok_or_else(|| Error::Meta(format!("row {} out of range for {n} features", rec.row)))?;
        let meta = ViewMeta {
            model_id: rec.model_id,
            azimuth_deg: rec.azimuth_deg,
            elevation_deg: rec.elevation_deg,
        };
        if slot.replace(meta).is_some() {
            return Err(Error::Meta(format!("row {} listed twice", rec.row)));
        }
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(r, m)| m.ok_or_else(|| Error::Meta(format!("no metadata for row {r}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FactorGrid;
    use crate::store::Manifest;

    fn set(rows: &[[f32; 3]]) -> FeatureSet {
        let grid = FactorGrid::from_sizes(&[("view", rows.len())]).unwrap();
        FeatureSet::new(grid, "t", 3, rows.concat(), Manifest::default()).unwrap()
    }

    fn meta(n: usize) -> Vec<ViewMeta> {
        (0..n)
            .map(|i| ViewMeta {
                model_id: format!("m{}", i % 2),
                azimuth_deg: Some(i as f64 * 10.0),
                elevation_deg: None,
            })
            .collect()
    }

    #[test]
    fn wraparound() {
        assert_eq!(angular_error(10.0, 350.0), 20.0);
        assert_eq!(angular_error(350.0, 10.0), 20.0);
        assert_eq!(angular_error(0.0, 180.0), 180.0);
        assert_eq!(angular_error(-30.0, 30.0), 60.0);
        assert_eq!(eval_orientation(&[350.0], &[10.0], 20.0).unwrap(), 0.0);
        assert_eq!(
            eval_orientation(&[5.0, 40.0], &[5.0, 40.0], 20.0).unwrap(),
            1.0
        );
        assert!(matches!(
            eval_orientation(&[], &[], 20.0),
            Err(Error::Param(_))
        ));
    }

    #[test]
    fn small_index() {
        let s = set(&[
            [1.0, 0.0, 0.0],
            [0.0, 2.0, 0.0],
            [0.0, 0.0, 3.0],
            [1.0, 1.0, 1.0],
        ]);
        let idx = build_index(&s, meta(4), &IndexOptions::default()).unwrap();
        assert_eq!(idx.reduced_dim(), 3);
        let m = idx.query(&[0.0, 0.0, 3.0], 10).unwrap();
        assert_eq!(m.len(), 4);
        assert_eq!(m[0].row, 2);
        assert!(m.windows(2).all(|w| w[0].score >= w[1].score));
        assert!(matches!(idx.query(&[1.0, 2.0], 1), Err(Error::Shape(_))));
        assert!(matches!(
            idx.query(&[1.0, 2.0, 3.0], 0),
            Err(Error::Param(_))
        ));
    }

    #[test]
    fn two_rows_bound_rank() {
        let s = set(&[[1.0, 5.0, 2.0], [3.0, -1.0, 0.0]]);
        let idx = build_index(&s, meta(2), &IndexOptions::default()).unwrap();
        assert!(idx.reduced_dim() <= 2);
    }

    #[test]
    fn ties_break_by_row() {
        // rows 0 and 2 identical → identical scores
        let s = set(&[
            [1.0, 2.0, 0.0],
            [-1.0, 0.0, 4.0],
            [1.0, 2.0, 0.0],
            [0.0, -3.0, 1.0],
        ]);
        let idx = build_index(&s, meta(4), &IndexOptions::default()).unwrap();
        let m = idx.query(&[1.0, 2.0, 0.0], 2).unwrap();
        assert_eq!(m[0].score, m[1].score);
        assert_eq!((m[0].row, m[1].row), (0, 2));
    }

    #[test]
    fn metadata_checks() {
        let s = set(&[[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]]);
        let mut m = meta(2);
        m[1].azimuth_deg = None;
        let opts = IndexOptions {
            require_azimuth: true,
            ..Default::default()
        };
        assert!(matches!(build_index(&s, m, &opts), Err(Error::Meta(_))));
        assert!(matches!(
            build_index(&s, meta(3), &IndexOptions::default()),
            Err(Error::Meta(_))
        ));
    }

    #[test]
    fn metadata_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(
            &p,
            "row,model_id,azimuth_deg,elevation_deg\n1,chair2,90,10\n0,chair1,0,\n",
        )
        .unwrap();
        let m = read_metadata_csv(&p, 2).unwrap();
        assert_eq!(m[0].model_id, "chair1");
        assert_eq!(m[0].elevation_deg, None);
        assert_eq!(m[1].azimuth_deg, Some(90.0));
        assert!(matches!(read_metadata_csv(&p, 3), Err(Error::Meta(_))));
        assert!(matches!(read_metadata_csv(&p, 1), Err(Error::Meta(_))));
    }
}
