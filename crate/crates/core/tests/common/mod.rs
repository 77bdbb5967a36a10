//! Test helpers: a naive double-loop decomposition oracle and random inputs.
//! Nothing here calls into the library's linear algebra.

#![allow(dead_code, clippy::needless_range_loop)]

use factorlens::extract::rng::SplitMix64;
use factorlens::{FactorGrid, FeatureSet, Manifest};

pub struct Oracle {
    pub mean: Vec<f64>,
    pub marginals: Vec<Vec<Vec<f64>>>,
    pub residual: Vec<Vec<f64>>,
    pub total: f64,
    pub factor_var: Vec<f64>,
    pub residual_var: f64,
}

/// Multi-index of `row` with the last factor varying fastest.
pub fn unravel(shape: &[usize], mut row: usize) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for k in (0..shape.len()).rev() {
        idx[k] = row % shape[k];
        row /= shape[k];
    }
    idx
}

pub fn naive(shape: &[usize], d: usize, data: &[f64]) -> Oracle {
    let n: usize = shape.iter().product();
    assert_eq!(data.len(), n * d);
    let x = |r: usize, j: usize| data[r * d + j];
    let idx: Vec<Vec<usize>> = (0..n).map(|r| unravel(shape, r)).collect();

    let mut mean = vec![0.0; d];
    for j in 0..d {
        let mut s = 0.0;
        for r in 0..n {
            s += x(r, j);
        }
        mean[j] = s / n as f64;
    }

    let mut marginals = Vec::new();
    for (k, &levels) in shape.iter().enumerate() {
        let mut mk = vec![vec![0.0; d]; levels];
        for (t, m) in mk.iter_mut().enumerate() {
            let mut count = 0usize;
            for r in 0..n {
                if idx[r][k] == t {
                    count += 1;
                    for j in 0..d {
                        m[j] += x(r, j) - mean[j];
                    }
                }
            }
            m.iter_mut().for_each(|v| *v /= count as f64);
        }
        marginals.push(mk);
    }

    let mut residual = vec![vec![0.0; d]; n];
    let mut total = 0.0;
    let mut factor_var = vec![0.0; shape.len()];
    let mut residual_var = 0.0;
    for r in 0..n {
        for j in 0..d {
            let c = x(r, j) - mean[j];
            let mut e = c;
            for k in 0..shape.len() {
                let m = marginals[k][idx[r][k]][j];
                e -= m;
                factor_var[k] += m * m;
            }
            residual[r][j] = e;
            total += c * c;
            residual_var += e * e;
        }
    }
    total /= n as f64;
    residual_var /= n as f64;
    factor_var.iter_mut().for_each(|v| *v /= n as f64);
    Oracle {
        mean,
        marginals,
        residual,
        total,
        factor_var,
        residual_var,
    }
}

/// Max |a - b| over max |b|, with a floor so all-zero references compare
/// absolutely.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

pub fn scalar_rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

pub fn normal(rng: &mut SplitMix64) -> f64 {
    // Irwin-Hall approximation is enough for test inputs
    (0..12).map(|_| rng.next_open01()).sum::<f64>() - 6.0
}

/// Random set on a grid with the given shape: additive factor effects plus
/// interaction noise, values exactly representable in f32.
pub fn random_set(rng: &mut SplitMix64, shape: &[usize], d: usize) -> FeatureSet {
    let sizes: Vec<(String, usize)> = shape
        .iter()
        .enumerate()
        .map(|(k, &s)| (format!("f{k}"), s))
        .collect();
    let refs: Vec<(&str, usize)> = sizes.iter().map(|(n, s)| (n.as_str(), *s)).collect();
    let grid = FactorGrid::from_sizes(&refs).unwrap();
    let effects: Vec<Vec<f64>> = shape
        .iter()
        .map(|&s| (0..s * d).map(|_| 3.0 * normal(rng)).collect())
        .collect();
    let n = grid.size();
    let mut data = Vec::with_capacity(n * d);
    for r in 0..n {
        let idx = unravel(shape, r);
        for j in 0..d {
            let mut v = 0.5 * normal(rng) + 10.0;
            for (k, e) in effects.iter().enumerate() {
                v += e[idx[k] * d + j];
            }
            data.push(v as f32);
        }
    }
    FeatureSet::new(grid, "random", d, data, Manifest::default()).unwrap()
}

pub fn as_f64(set: &FeatureSet) -> Vec<f64> {
    set.data().iter().map(|&v| f64::from(v)).collect()
}

/// Repeats every level of factor `k` `times` times (new levels are copies).
pub fn replicate_levels(set: &FeatureSet, k: usize, times: usize) -> FeatureSet {
    let shape = set.grid().shape();
    let mut new_shape = shape.clone();
    new_shape[k] *= times;
    let names: Vec<String> = set
        .grid()
        .factors()
        .iter()
        .map(|f| f.name.clone())
        .collect();
    let refs: Vec<(&str, usize)> = names
        .iter()
        .zip(&new_shape)
        .map(|(n, s)| (n.as_str(), *s))
        .collect();
    let grid = FactorGrid::from_sizes(&refs).unwrap();
    let d = set.dim();
    let mut data = Vec::with_capacity(grid.size() * d);
    for r in 0..grid.size() {
        let mut idx = unravel(&new_shape, r);
        idx[k] /= times;
        let src = set.grid().row_index(&idx).unwrap();
        data.extend_from_slice(set.row(src));
    }
    FeatureSet::new(grid, set.layer(), d, data, Manifest::default()).unwrap()
}
