//! Marginal/residual decomposition of grid-sampled features.
//!
//! For centered features `F(θ)` on a full grid `Θ = Θ₁ × … × Θ_N`, the
//! marginal of factor `k` at level `t` is the mean of `F` over all cells with
//! `θ_k = t`, and the residual is what the sum of marginals leaves over:
//!
//! ```text
//! F(θ) = Σ_k F_k(θ_k) + Δ(θ)
//! ```
//!
//! All components have zero mean and are mutually uncorrelated on a full grid,
//! so the total variance splits additively and the relative variances sum to
//! one. Variances use population normalization and are traces of the
//! covariance (sums over feature dimensions).

use rayon::prelude::*;
use serde::Serialize;

use crate::embed;
use crate::error::{Error, Result};
use crate::grid::FactorGrid;
use crate::linalg::{pairwise_sum, tree_accumulate, Matrix};
use crate::store::FeatureSet;

/// Features with the grand mean removed, in 64-bit precision.
#[derive(Debug, Clone)]
pub struct CenteredFeatures {
    pub grid: FactorGrid,
    pub layer: String,
    pub mean: Vec<f64>,
    pub data: Matrix,
}

impl CenteredFeatures {
    pub fn dim(&self) -> usize {
        self.data.cols()
    }
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub grid: FactorGrid,
    /// One `|Θ_k| × d` matrix per factor.
    pub marginals: Vec<Matrix>,
    /// `|Θ| × d`
    pub residual: Matrix,
}

impl Decomposition {
    pub fn dim(&self) -> usize {
        self.residual.cols()
    }

    /// Sum of the marginals at `theta`: the additive approximation of the
    /// feature for that grid cell.
    pub fn expand(&self, theta: &[usize]) -> Result<Vec<f64>> {
        self.grid.row_index(theta)?;
        let mut out = vec![0.0; self.dim()];
        add_marginals(&self.marginals, theta.iter().copied(), &mut out);
        Ok(out)
    }

    /// `marginal[k]` repeated over the full grid (`|Θ| × d`).
    pub fn expanded_marginal(&self, k: usize) -> Matrix {
        let d = self.dim();
        let mut out = Matrix::zeros(self.grid.size(), d);
        for r in 0..self.grid.size() {
            out.row_mut(r)
                .copy_from_slice(self.marginals[k].row(self.grid.level_of(r, k)));
        }
        out
    }
}

#[inline]
fn add_marginals(marginals: &[Matrix], levels: impl Iterator<Item = usize>, out: &mut [f64]) {
    for (m, t) in marginals.iter().zip(levels) {
        out.iter_mut().zip(m.row(t)).for_each(|(o, v)| *o += v);
    }
}

/// Source of centered feature rows.
trait CenteredRows: Sync {
    fn dim(&self) -> usize;
    fn fill(&self, row: usize, out: &mut [f64]);
}

impl CenteredRows for CenteredFeatures {
    fn dim(&self) -> usize {
        self.data.cols()
    }
    fn fill(&self, row: usize, out: &mut [f64]) {
        out.copy_from_slice(self.data.row(row));
    }
}

/// Centers 32-bit rows on the fly; produces exactly the values [`center`]
/// stores.
struct LazyCentered<'a> {
    set: &'a FeatureSet,
    mean: &'a [f64],
}

impl CenteredRows for LazyCentered<'_> {
    fn dim(&self) -> usize {
        self.set.dim()
    }
    fn fill(&self, row: usize, out: &mut [f64]) {
        for ((o, &v), m) in out.iter_mut().zip(self.set.row(row)).zip(self.mean) {
            *o = f64::from(v) - m;
        }
    }
}

fn feature_mean(set: &FeatureSet) -> Vec<f64> {
    let mut s = tree_accumulate(set.n_rows(), set.dim(), |range, acc| {
        for r in range {
            acc.iter_mut()
                .zip(set.row(r))
                .for_each(|(a, &v)| *a += f64::from(v));
        }
    });
    let n = set.n_rows() as f64;
    s.iter_mut().for_each(|v| *v /= n);
    s
}

pub fn center(set: &FeatureSet) -> CenteredFeatures {
    let mean = feature_mean(set);
    let d = set.dim();
    let mut data = Matrix::zeros(set.n_rows(), d);
    let lazy = LazyCentered { set, mean: &mean };
    data.data_mut()
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(r, out)| lazy.fill(r, out));
    CenteredFeatures {
        grid: set.grid().clone(),
        layer: set.layer().to_string(),
        mean,
        data,
    }
}

fn marginal_at<S: CenteredRows>(src: &S, grid: &FactorGrid, k: usize) -> Matrix {
    let d = src.dim();
    let levels = grid.factors()[k].len();
    let count = grid.size() / levels;
    let rows: Vec<Vec<f64>> = (0..levels)
        .into_par_iter()
        .map(|t| {
            let slice: Vec<usize> = grid.slice_iter(k, t).collect();
            let mut sum = tree_accumulate(slice.len(), d, |range, acc| {
                let mut buf = vec![0.0; d];
                for i in range {
                    src.fill(slice[i], &mut buf);
                    acc.iter_mut().zip(&buf).for_each(|(a, v)| *a += v);
                }
            });
            sum.iter_mut().for_each(|v| *v /= count as f64);
            sum
        })
        .collect();
    Matrix::from_rows(&rows).expect("uniform marginal rows")
}

fn all_marginals<S: CenteredRows>(src: &S, grid: &FactorGrid) -> Vec<Matrix> {
    (0..grid.n_factors())
        .map(|k| marginal_at(src, grid, k))
        .collect()
}

/// Marginal features of one factor: row `t` is the mean of the centered
/// features over all cells whose level for `factor` is `t`.
pub fn marginal(cf: &CenteredFeatures, factor: &str) -> Result<Matrix> {
    let k = cf.grid.factor_index(factor)?;
    Ok(marginal_at(cf, &cf.grid, k))
}

pub fn decompose(cf: &CenteredFeatures) -> Decomposition {
    let marginals = all_marginals(cf, &cf.grid);
    let d = cf.dim();
    let mut residual = cf.data.clone();
    let grid = &cf.grid;
    residual
        .data_mut()
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(r, row)| {
            let mut approx = vec![0.0; d];
            add_marginals(
                &marginals,
                (0..grid.n_factors()).map(|k| grid.level_of(r, k)),
                &mut approx,
            );
            row.iter_mut().zip(&approx).for_each(|(x, a)| *x -= a);
        });
    Decomposition {
        grid: cf.grid.clone(),
        marginals,
        residual,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorVariance {
    pub name: String,
    pub levels: usize,
    pub variance: f64,
    pub relative_variance: f64,
    /// `None` when the component has zero variance.
    pub intrinsic_dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualVariance {
    pub variance: f64,
    pub relative_variance: f64,
}

/// Per-feature-dimension variances behind the scalar totals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PerDimVariance {
    pub total: Vec<f64>,
    pub factors: Vec<Vec<f64>>,
    pub residual: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceReport {
    pub layer: String,
    pub factors: Vec<FactorVariance>,
    pub residual: ResidualVariance,
    pub total_variance: f64,
    pub n_samples: usize,
    pub dim: usize,
    pub pca_threshold: f64,
    /// How marginal levels are weighted in the per-factor PCA.
    pub marginal_pca_weighting: &'static str,
    #[serde(skip)]
    pub per_dim: PerDimVariance,
}

impl VarianceReport {
    /// Relative variances in factor order followed by the residual.
    pub fn relative_variances(&self) -> Vec<f64> {
        self.factors
            .iter()
            .map(|f| f.relative_variance)
            .chain(std::iter::once(self.residual.relative_variance))
            .collect()
    }
}

fn factor_per_dim(m: &Matrix) -> Vec<f64> {
    let l = m.rows() as f64;
    let mut v = tree_accumulate(m.rows(), m.cols(), |range, acc| {
        for t in range {
            acc.iter_mut().zip(m.row(t)).for_each(|(a, x)| *a += x * x);
        }
    });
    v.iter_mut().for_each(|x| *x /= l);
    v
}

fn build_report(
    grid: &FactorGrid,
    layer: &str,
    marginals: &[Matrix],
    per_dim_total: Vec<f64>,
    per_dim_residual: Vec<f64>,
    threshold: f64,
) -> Result<VarianceReport> {
    let total_variance = pairwise_sum(&per_dim_total);
    if total_variance <= 0.0 {
        return Err(Error::Degenerate(
            "total variance is zero (all feature rows identical)".into(),
        ));
    }
    let per_dim_factors: Vec<Vec<f64>> = marginals.iter().map(factor_per_dim).collect();
    let mut factors = Vec::with_capacity(marginals.len());
    for ((f, m), pd) in grid.factors().iter().zip(marginals).zip(&per_dim_factors) {
        let variance = pairwise_sum(pd).max(0.0);
        // rounding-level marginals can have a spectrum that clamps to zero
        let intrinsic_dim = if variance > 0.0 && m.rows() >= 2 {
            let eigs = embed::spectrum(m)?;
            if eigs.iter().any(|&l| l > 0.0) {
                Some(embed::intrinsic_dim(&eigs, threshold)?)
            } else {
                None
            }
        } else {
            None
        };
        factors.push(FactorVariance {
            name: f.name.clone(),
            levels: f.len(),
            variance,
            relative_variance: variance / total_variance,
            intrinsic_dim,
        });
    }
    let rv = pairwise_sum(&per_dim_residual).max(0.0);
    Ok(VarianceReport {
        layer: layer.to_string(),
        factors,
        residual: ResidualVariance {
            variance: rv,
            relative_variance: rv / total_variance,
        },
        total_variance,
        n_samples: grid.size(),
        dim: per_dim_total.len(),
        pca_threshold: threshold,
        marginal_pca_weighting: "multiplicity",
        per_dim: PerDimVariance {
            total: per_dim_total,
            factors: per_dim_factors,
            residual: per_dim_residual,
        },
    })
}

fn squares_per_dim(n: usize, d: usize, row: impl Fn(usize) -> Vec<f64> + Sync) -> Vec<f64> {
    let mut v = tree_accumulate(n, d, |range, acc| {
        for r in range {
            let x = row(r);
            acc.iter_mut().zip(&x).for_each(|(a, v)| *a += v * v);
        }
    });
    v.iter_mut().for_each(|x| *x /= n as f64);
    v
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Param(format!(
            "PCA threshold must be in (0, 1], got {threshold}"
        )));
    }
    Ok(())
}

/// Variance attribution for a materialized decomposition.
pub fn variance_report(
    cf: &CenteredFeatures,
    dec: &Decomposition,
    threshold: f64,
) -> Result<VarianceReport> {
    check_threshold(threshold)?;
    if dec.grid != cf.grid || dec.dim() != cf.dim() {
        return Err(Error::Shape(
            "decomposition does not match the centered features".into(),
        ));
    }
    let n = cf.grid.size();
    let d = cf.dim();
    let total = squares_per_dim(n, d, |r| cf.data.row(r).to_vec());
    let residual = squares_per_dim(n, d, |r| dec.residual.row(r).to_vec());
    build_report(
        &cf.grid,
        &cf.layer,
        &dec.marginals,
        total,
        residual,
        threshold,
    )
}

/// Centers, decomposes and reports in one pass structure without
/// materializing the centered matrix or the residual. Memory beyond the input
/// is `O(Σ_k |Θ_k| · d)`. Results are bitwise identical to
/// `variance_report(&center(set), &decompose(&center(set)), threshold)`.
pub fn analyze(set: &FeatureSet, threshold: f64) -> Result<(Vec<Matrix>, VarianceReport)> {
    check_threshold(threshold)?;
    let mean = feature_mean(set);
    let src = LazyCentered { set, mean: &mean };
    let grid = set.grid();
    let marginals = all_marginals(&src, grid);
    let n = grid.size();
    let d = set.dim();

    // total and residual squares side by side: [0, d) total, [d, 2d) residual
    let mut both = tree_accumulate(n, 2 * d, |range, acc| {
        let mut c = vec![0.0; d];
        let mut approx = vec![0.0; d];
        let (at, ar) = acc.split_at_mut(d);
        for r in range {
            src.fill(r, &mut c);
            approx.iter_mut().for_each(|v| *v = 0.0);
            add_marginals(
                &marginals,
                (0..grid.n_factors()).map(|k| grid.level_of(r, k)),
                &mut approx,
            );
            for j in 0..d {
                let res = c[j] - approx[j];
                at[j] += c[j] * c[j];
                ar[j] += res * res;
            }
        }
    });
    both.iter_mut().for_each(|x| *x /= n as f64);
    let residual = both.split_off(d);
    let report = build_report(grid, set.layer(), &marginals, both, residual, threshold)?;
    Ok((marginals, report))
}
