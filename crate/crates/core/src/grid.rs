//! Factor grids: the Cartesian index set every feature set is sampled on.
//!
//! Rows are ordered lexicographically over the per-factor level indices with
//! the last factor varying fastest, so a 2×3 grid enumerates
//! `(0,0) (0,1) (0,2) (1,0) (1,1) (1,2)`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One level of a factor: a text label with an optional numeric value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
}

impl Level {
    pub fn new(label: impl Into<String>) -> Self {
        Level {
            label: label.into(),
            value: None,
            units: None,
        }
    }

    pub fn numeric(value: f64, units: impl Into<String>) -> Self {
        Level {
            label: format_number(value),
            value: Some(value),
            units: Some(units.into()),
        }
    }
}

fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub name: String,
    pub levels: Vec<Level>,
}

impl Factor {
    pub fn new(name: impl Into<String>, levels: Vec<Level>) -> Self {
        Factor {
            name: name.into(),
            levels,
        }
    }

    /// A factor whose levels are labeled `0..n`.
    pub fn indexed(name: impl Into<String>, n: usize) -> Self {
        Factor::new(name, (0..n).map(|i| Level::new(i.to_string())).collect())
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Ordered factors with ordered levels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorGrid {
    factors: Vec<Factor>,
    #[serde(skip)]
    strides: Vec<usize>,
    #[serde(skip)]
    size: usize,
}

#[derive(Deserialize)]
struct RawGrid {
    factors: Vec<Factor>,
}

impl<'de> Deserialize<'de> for FactorGrid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawGrid::deserialize(d)?;
        FactorGrid::new(raw.factors).map_err(serde::de::Error::custom)
    }
}

impl FactorGrid {
    pub fn new(factors: Vec<Factor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::Param(
                "a factor grid needs at least one factor".into(),
            ));
        }
        let mut seen = HashSet::new();
        for f in &factors {
            if f.levels.is_empty() {
                return Err(Error::Param(format!("factor `{}` has no levels", f.name)));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Param(format!("duplicate factor name `{}`", f.name)));
            }
        }
        let mut size: u64 = 1;
        for f in &factors {
            size = size
                .checked_mul(f.levels.len() as u64)
                .ok_or_else(|| Error::Param("grid size overflows a 64-bit count".into()))?;
        }
        let size = usize::try_from(size)
            .map_err(|_| Error::Param("grid size exceeds addressable memory".into()))?;

        let mut strides = vec![1; factors.len()];
        for k in (0..factors.len() - 1).rev() {
            strides[k] = strides[k + 1] * factors[k + 1].levels.len();
        }
        Ok(FactorGrid {
            factors,
            strides,
            size,
        })
    }

    /// Grid with anonymous integer-labeled levels, e.g. `&[("a", 2), ("b", 3)]`.
    pub fn from_sizes(sizes: &[(&str, usize)]) -> Result<Self> {
        FactorGrid::new(sizes.iter().map(|&(n, l)| Factor::indexed(n, l)).collect())
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn n_factors(&self) -> usize {
        self.factors.len()
    }

    /// |Θ|
    pub fn size(&self) -> usize {
        self.size
    }

    /// Level counts |Θ_k| in factor order.
    pub fn shape(&self) -> Vec<usize> {
        self.factors.iter().map(Factor::len).collect()
    }

    pub fn factor_index(&self, name: &str) -> Result<usize> {
        self.factors
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| Error::Key(name.to_string()))
    }

    /// Resolves a factor given either its name or its position.
    pub fn resolve_factor(&self, name_or_pos: &str) -> Result<usize> {
        match self.factor_index(name_or_pos) {
            Ok(k) => Ok(k),
            Err(e) => match name_or_pos.parse::<usize>() {
                Ok(k) if k < self.factors.len() => Ok(k),
                _ => Err(e),
            },
        }
    }

    /// Lexicographic rank of a multi-index, last factor fastest.
    pub fn row_index(&self, multi_index: &[usize]) -> Result<usize> {
        if multi_index.len() != self.factors.len() {
            return Err(Error::Shape(format!(
                "multi-index has {} entries, grid has {} factors",
                multi_index.len(),
                self.factors.len()
            )));
        }
        let mut row = 0;
        for (k, (&i, f)) in multi_index.iter().zip(&self.factors).enumerate() {
            if i >= f.levels.len() {
                return Err(Error::Index {
                    factor: f.name.clone(),
                    index: i,
                    levels: f.levels.len(),
                });
            }
            row += i * self.strides[k];
        }
        Ok(row)
    }

    /// Inverse of [`row_index`](Self::row_index).
    pub fn multi_index(&self, row: usize) -> Result<Vec<usize>> {
        if row >= self.size {
            return Err(Error::Index {
                factor: "<row>".into(),
                index: row,
                levels: self.size,
            });
        }
        Ok(self.multi_index_unchecked(row))
    }

    pub(crate) fn multi_index_unchecked(&self, row: usize) -> Vec<usize> {
        self.factors
            .iter()
            .zip(&self.strides)
            .map(|(f, &s)| (row / s) % f.levels.len())
            .collect()
    }

    /// Level index of factor `k` for `row`.
    #[inline]
    pub(crate) fn level_of(&self, row: usize, k: usize) -> usize {
        (row / self.strides[k]) % self.factors[k].levels.len()
    }

    /// Rows with factor `factor` at `level`, in increasing order.
    pub fn slice(&self, factor: &str, level: usize) -> Result<Vec<usize>> {
        let k = self.factor_index(factor)?;
        self.slice_at(k, level)
    }

    /// Like [`slice`](Self::slice) but addressing the factor by position.
    pub fn slice_at(&self, k: usize, level: usize) -> Result<Vec<usize>> {
        let f = self
            .factors
            .get(k)
            .ok_or_else(|| Error::Key(format!("#{k}")))?;
        if level >= f.levels.len() {
            return Err(Error::Index {
                factor: f.name.clone(),
                index: level,
                levels: f.levels.len(),
            });
        }
        Ok(self.slice_iter(k, level).collect())
    }

    /// Iterator over the rows of a slice; `k` and `level` must be in range.
    pub(crate) fn slice_iter(&self, k: usize, level: usize) -> impl Iterator<Item = usize> + '_ {
        let stride = self.strides[k];
        let block = stride * self.factors[k].levels.len();
        let outer = self.size / block;
        (0..outer).flat_map(move |o| {
            let start = o * block + level * stride;
            start..start + stride
        })
    }

    /// A one-factor grid containing only factor `k`.
    pub fn sub_grid(&self, k: usize) -> Result<FactorGrid> {
        let f = self
            .factors
            .get(k)
            .ok_or_else(|| Error::Key(format!("#{k}")))?;
        FactorGrid::new(vec![f.clone()])
    }
}
