//! PCA fitting, projection and intrinsic dimensionality.

mod export;

pub use export::{export_scatter, level_color, ScatterOptions};

use crate::error::{Error, Result};
use crate::grid::FactorGrid;
use crate::linalg::{column_means, dot, pairwise_sum, symmetric_eigen, Matrix};

/// Eigenvalues below this fraction of the largest are treated as zero when
/// lifting Gram-matrix eigenvectors back to feature space.
const NULL_EIGEN_RTOL: f64 = 1e-12;

/// Slack on the cumulative-variance comparison in [`intrinsic_dim`] so that
/// boundary spectra such as `(0.6, 0.1, 0.05)` at 0.8 are not lost to
/// rounding.
const THRESHOLD_RTOL: f64 = 1e-12;

/// How the eigenproblem is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PcaRoute {
    /// Gram matrix when `n < d`, covariance otherwise.
    #[default]
    Auto,
    /// `d × d` covariance `(1/n) XᵀX`.
    Covariance,
    /// `n × n` Gram matrix `(1/n) XXᵀ`.
    Gram,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: Vec<f64>,
    /// `D × d`, rows orthonormal, ordered by decreasing eigenvalue.
    components: Matrix,
    /// Full spectrum, `min(n, d)` values, descending, clamped at zero.
    spectrum: Vec<f64>,
    total_variance: f64,
    n_samples: usize,
}

impl PcaModel {
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &Matrix {
        &self.components
    }

    pub fn n_components(&self) -> usize {
        self.components.rows()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Eigenvalues of the retained components.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.spectrum[..self.n_components()]
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    /// Trace of the covariance, computed directly from the data.
    pub fn total_variance(&self) -> f64 {
        self.total_variance
    }

    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        self.eigenvalues()
            .iter()
            .map(|l| l / self.total_variance)
            .collect()
    }

    pub fn intrinsic_dim(&self, threshold: f64) -> Result<usize> {
        intrinsic_dim(&self.spectrum, threshold)
    }

    fn check_dim(&self, cols: usize) -> Result<()> {
        if cols != self.dim() {
            return Err(Error::Shape(format!(
                "data has {cols} columns, model expects {}",
                self.dim()
            )));
        }
        Ok(())
    }

    /// Coordinates of a single vector.
    pub fn project_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        let c: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok(self.components.row_iter().map(|v| dot(v, &c)).collect())
    }
}

/// Points carried by an embedding, labeled by their grid levels.
#[derive(Debug, Clone, PartialEq)]
pub struct PointLabels {
    pub grid: FactorGrid,
    /// One multi-index into `grid` per point.
    pub indices: Vec<Vec<usize>>,
}

impl PointLabels {
    /// Every cell of `grid`, in row order.
    pub fn full(grid: &FactorGrid) -> Self {
        PointLabels {
            grid: grid.clone(),
            indices: (0..grid.size())
                .map(|r| grid.multi_index_unchecked(r))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    /// `n × D`
    pub coords: Matrix,
    /// `PC1`, `PC2`, …
    pub axes: Vec<String>,
    pub points: Option<PointLabels>,
}

impl Embedding {
    pub fn with_points(mut self, points: PointLabels) -> Result<Self> {
        if points.indices.len() != self.coords.rows() {
            return Err(Error::Shape(format!(
                "{} labels for {} points",
                points.indices.len(),
                self.coords.rows()
            )));
        }
        self.points = Some(points);
        Ok(self)
    }
}

fn centered(data: &Matrix, mean: &[f64]) -> Matrix {
    let mut x = data.clone();
    for r in 0..x.rows() {
        x.row_mut(r).iter_mut().zip(mean).for_each(|(v, m)| *v -= m);
    }
    x
}

fn rows_identical(data: &Matrix) -> bool {
    let first = data.row(0);
    data.row_iter().all(|r| r == first)
}

fn total_variance_of(x: &Matrix) -> f64 {
    let norms: Vec<f64> = x.row_iter().map(|r| dot(r, r)).collect();
    pairwise_sum(&norms) / x.rows() as f64
}

/// Modified Gram–Schmidt; returns false if `v` is (numerically) in the span.
fn orthonormalize_against(v: &mut [f64], basis: &[Vec<f64>]) -> bool {
    let before = dot(v, v).sqrt();
    for _ in 0..2 {
        for b in basis {
            let p = dot(v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
    }
    let norm = dot(v, v).sqrt();
    if norm <= 1e-6 * before.max(f64::MIN_POSITIVE) {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

/// Largest-magnitude entry positive; ties go to the lowest index.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

pub fn fit_pca(data: &Matrix, n_components: usize) -> Result<PcaModel> {
    fit_pca_with(data, n_components, PcaRoute::Auto)
}

/// Fits `n_components` principal axes of `data` (rows are samples).
pub fn fit_pca_with(data: &Matrix, n_components: usize, route: PcaRoute) -> Result<PcaModel> {
    let (n, d) = (data.rows(), data.cols());
    if n < 2 {
        return Err(Error::Param(format!(
            "PCA needs at least 2 samples, got {n}"
        )));
    }
    if n_components == 0 || n_components > n.min(d) {
        return Err(Error::Param(format!(
            "requested {n_components} components, must be in 1..={}",
            n.min(d)
        )));
    }
    if rows_identical(data) {
        return Err(Error::Degenerate("all samples are identical".into()));
    }
    let mean = column_means(data);
    let x = centered(data, &mean);
    let total_variance = total_variance_of(&x);
    if total_variance <= 0.0 {
        return Err(Error::Degenerate("zero total variance".into()));
    }

    let use_gram = match route {
        PcaRoute::Auto => n < d,
        PcaRoute::Covariance => false,
        PcaRoute::Gram => true,
    };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n_components);
    let mut spectrum;
    if use_gram {
        let mut g = x.gram();
        g.scale(1.0 / n as f64);
        let eig = symmetric_eigen(&g)?;
        spectrum = eig.values;
        let top = spectrum[0].max(0.0);
        for (i, &lambda) in spectrum.iter().enumerate().take(n_components.min(n)) {
            if lambda <= NULL_EIGEN_RTOL * top {
                break;
            }
            let u = eig.vectors.row(i);
            let mut v = vec![0.0; d];
            for (r, &ur) in u.iter().enumerate() {
                v.iter_mut().zip(x.row(r)).for_each(|(a, b)| *a += ur * b);
            }
            if !orthonormalize_against(&mut v, &basis) {
                break;
            }
            basis.push(v);
        }
    } else {
        let mut c = x.cross();
        c.scale(1.0 / n as f64);
        let eig = symmetric_eigen(&c)?;
        spectrum = eig.values;
        for i in 0..n_components {
            let mut v = eig.vectors.row(i).to_vec();
            if orthonormalize_against(&mut v, &basis) {
                basis.push(v);
            }
        }
    }
    // Null-space directions: complete with standard basis vectors.
    let mut e = 0;
    while basis.len() < n_components && e < d {
        let mut v = vec![0.0; d];
        v[e] = 1.0;
        if orthonormalize_against(&mut v, &basis) {
            basis.push(v);
        }
        e += 1;
    }
    spectrum.truncate(n.min(d));
    spectrum.iter_mut().for_each(|l| *l = l.max(0.0));
    for v in &mut basis {
        fix_sign(v);
    }
    Ok(PcaModel {
        mean,
        components: Matrix::from_rows(&basis)?,
        spectrum,
        total_variance,
        n_samples: n,
    })
}

/// Full covariance spectrum of `data` (rows are samples), `min(n, d)` values,
/// descending, clamped at zero.
pub fn spectrum(data: &Matrix) -> Result<Vec<f64>> {
    let (n, d) = (data.rows(), data.cols());
    if n == 0 || d == 0 {
        return Err(Error::Shape("empty data".into()));
    }
    let mean = column_means(data);
    let x = centered(data, &mean);
    let mut m = if n < d { x.gram() } else { x.cross() };
    m.scale(1.0 / n as f64);
    let mut values = symmetric_eigen(&m)?.values;
    values.truncate(n.min(d));
    values.iter_mut().for_each(|l| *l = l.max(0.0));
    Ok(values)
}

/// Smallest number of leading eigenvalues whose sum reaches `threshold` of the
/// total (inclusive).
pub fn intrinsic_dim(eigenvalues: &[f64], threshold: f64) -> Result<usize> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Param(format!(
            "threshold must be in (0, 1], got {threshold}"
        )));
    }
    if eigenvalues.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return Err(Error::Param(
            "eigenvalues must be finite and non-negative".into(),
        ));
    }
    if eigenvalues.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Param("eigenvalues must be sorted descending".into()));
    }
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return Err(Error::Degenerate("all eigenvalues are zero".into()));
    }
    let target = threshold * total * (1.0 - THRESHOLD_RTOL);
    let mut cum = 0.0;
    for (i, l) in eigenvalues.iter().enumerate() {
        cum += l;
        if cum >= target {
            return Ok(i + 1);
        }
    }
    Ok(eigenvalues.len())
}

pub fn project(model: &PcaModel, data: &Matrix) -> Result<Embedding> {
    model.check_dim(data.cols())?;
    let x = centered(data, &model.mean);
    let coords = x.mul_transpose(&model.components)?;
    Ok(Embedding {
        coords,
        axes: (1..=model.n_components())
            .map(|i| format!("PC{i}"))
            .collect(),
        points: None,
    })
}

pub fn reconstruct(model: &PcaModel, embedding: &Embedding) -> Result<Matrix> {
    if embedding.coords.cols() != model.n_components() {
        return Err(Error::Shape(format!(
            "embedding has {} axes, model has {} components",
            embedding.coords.cols(),
            model.n_components()
        )));
    }
    let mut out = embedding.coords.matmul(&model.components)?;
    for r in 0..out.rows() {
        out.row_mut(r)
            .iter_mut()
            .zip(&model.mean)
            .for_each(|(v, m)| *v += m);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    }

    #[test]
    fn intrinsic_dim_examples() {
        assert_eq!(intrinsic_dim(&[1.0, 0.0, 0.0], 0.95).unwrap(), 1);
        assert_eq!(intrinsic_dim(&[0.5, 0.3, 0.15, 0.05], 0.95).unwrap(), 3);
        assert_eq!(intrinsic_dim(&[0.5, 0.3, 0.15, 0.05], 0.96).unwrap(), 4);
        // 0.6 / 0.75 is exactly 0.8, but 0.8 * 0.75 rounds above 0.6
        assert!(0.6 < 0.8 * (0.6 + 0.1 + 0.05));
        assert_eq!(intrinsic_dim(&[0.6, 0.1, 0.05], 0.8).unwrap(), 1);
        assert_eq!(intrinsic_dim(&[0.25; 4], 1.0).unwrap(), 4);
        assert!(matches!(
            intrinsic_dim(&[0.0, 0.0], 0.95),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            intrinsic_dim(&[0.1, 0.5], 0.95),
            Err(Error::Param(_))
        ));
        assert!(matches!(intrinsic_dim(&[1.0], 0.0), Err(Error::Param(_))));
    }

    #[test]
    fn rank_one() {
        let mut s = 5u64;
        let dir = [0.3, -1.2, 2.0, 0.7];
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                let a = lcg(&mut s) * 4.0;
                dir.iter().map(|d| 10.0 + a * d).collect()
            })
            .collect();
        let m = fit_pca(&Matrix::from_rows(&rows).unwrap(), 2).unwrap();
        let sp = m.spectrum();
        assert!(sp[1] / sp[0] < 1e-12);
        assert_eq!(m.intrinsic_dim(0.95).unwrap(), 1);
        // second component still orthonormal
        let c = m.components();
        assert!((dot(c.row(1), c.row(1)) - 1.0).abs() < 1e-12);
        assert!(dot(c.row(0), c.row(1)).abs() < 1e-12);
    }

    #[test]
    fn sign_convention() {
        let rows = vec![
            vec![0.0, 0.0],
            vec![-1.0, -3.0],
            vec![2.0, 6.0],
            vec![1.0, 2.5],
        ];
        let m = fit_pca(&Matrix::from_rows(&rows).unwrap(), 2).unwrap();
        for v in m.components().row_iter() {
            let big = v
                .iter()
                .cloned()
                .fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn errors() {
        let one = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(matches!(fit_pca(&one, 1), Err(Error::Param(_))));
        let two = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert!(matches!(fit_pca(&two, 3), Err(Error::Param(_))));
        assert!(matches!(fit_pca(&two, 0), Err(Error::Param(_))));
        let same = Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert!(matches!(fit_pca(&same, 1), Err(Error::Degenerate(_))));
        let m = fit_pca(&two, 1).unwrap();
        let bad = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(project(&m, &bad), Err(Error::Shape(_))));
    }

    #[test]
    fn mean_projects_to_origin_and_reconstruction_is_complete() {
        let mut s = 9u64;
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..5).map(|_| lcg(&mut s)).collect())
            .collect();
        let data = Matrix::from_rows(&rows).unwrap();
        let m = fit_pca(&data, 5).unwrap();
        let c = m.project_vec(m.mean()).unwrap();
        assert!(c.iter().all(|v| v.abs() < 1e-15));
        let emb = project(&m, &data).unwrap();
        let back = reconstruct(&m, &emb).unwrap();
        let err: f64 = back
            .data()
            .iter()
            .zip(data.data())
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        assert!(err.sqrt() < 1e-8 * data.frobenius_norm());
    }

    #[test]
    fn gram_completion_when_rank_deficient() {
        let mut s = 2u64;
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..10).map(|_| lcg(&mut s)).collect())
            .collect();
        let data = Matrix::from_rows(&rows).unwrap();
        // centered rank is 3; the 4th component spans the null space
        let m = fit_pca_with(&data, 4, PcaRoute::Gram).unwrap();
        assert_eq!(m.spectrum().len(), 4);
        assert!(m.spectrum()[3] < 1e-14);
        let c = m.components();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot(c.row(i), c.row(j)) - want).abs() < 1e-10);
            }
        }
    }
}
