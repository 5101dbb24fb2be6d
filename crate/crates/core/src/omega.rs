//! Precomputed `ω_l(z_i^(k))` values consumed by the solver and the weights.

use serde::{Deserialize, Serialize};

use crate::bias::BiasSpec;
use crate::error::{Error, Result};
use crate::model::DatasetCollection;

/// Rows with a largest entry below this are treated as all-zero.
pub const MIN_ROW_MAX: f64 = 1e-300;

/// Dense `n × K` matrix, row `(k, i)` in source-major order, column `l`
/// holding `ω_l(z_i^(k))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    sources: Vec<usize>,
    ids: Vec<usize>,
}

impl OmegaMatrix {
    /// Builds a matrix from explicit rows. Entries must be finite and
    /// non-negative and every row needs a positive entry.
    pub fn from_rows(rows: Vec<Vec<f64>>, sources: Vec<usize>, ids: Vec<usize>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidDataset("omega matrix has no rows".into()));
        }
        if sources.len() != n || ids.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: sources.len().min(ids.len()),
            });
        }
        let cols = rows[0].len();
        if cols == 0 {
            return Err(Error::InvalidDataset("omega matrix has no columns".into()));
        }
        let mut values = Vec::with_capacity(n * cols);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::LengthMismatch {
                    expected: cols,
                    actual: row.len(),
                });
            }
            if row.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidDataset(format!(
                    "row {r} has a negative or non-finite entry"
                )));
            }
            if row.iter().cloned().fold(0.0, f64::max) < MIN_ROW_MAX {
                return Err(Error::AllZeroRow { row: r });
            }
            values.extend_from_slice(row);
        }
        Ok(OmegaMatrix {
            rows: n,
            cols,
            values,
            sources,
            ids,
        })
    }

    /// Convenience constructor when sources and ids are irrelevant.
    pub fn from_plain_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        Self::from_rows(rows, vec![0; n], (0..n).collect())
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, l: usize) -> f64 {
        self.values[r * self.cols + l]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    /// Copy with column `l` multiplied by `factor[l]`.
    pub fn scale_columns(&self, factor: &[f64]) -> Result<OmegaMatrix> {
        if factor.len() != self.cols {
            return Err(Error::LengthMismatch {
                expected: self.cols,
                actual: factor.len(),
            });
        }
        let rows = (0..self.rows)
            .map(|r| self.row(r).iter().zip(factor).map(|(v, c)| v * c).collect())
            .collect();
        Self::from_rows(rows, self.sources.clone(), self.ids.clone())
    }
}

/// Rescales every spec over `data` (see [`BiasSpec::rescaled_for`]).
pub fn rescale_specs(specs: &[BiasSpec], data: &DatasetCollection) -> Result<Vec<BiasSpec>> {
    specs.iter().map(|s| s.rescaled_for(data)).collect()
}

/// Materializes `ω_l(z_i^(k))` for all rows after rescaling each spec over
/// `data`. Fails with [`Error::UnsupportedObservation`] on a row outside
/// every support.
pub fn build_omega_matrix(specs: &[BiasSpec], data: &DatasetCollection) -> Result<OmegaMatrix> {
    if specs.len() != data.num_sources() {
        return Err(Error::LengthMismatch {
            expected: data.num_sources(),
            actual: specs.len(),
        });
    }
    let specs = rescale_specs(specs, data)?;
    build_omega_matrix_unscaled(&specs, data)
}

/// Like [`build_omega_matrix`] but evaluates the specs as given.
pub fn build_omega_matrix_unscaled(
    specs: &[BiasSpec],
    data: &DatasetCollection,
) -> Result<OmegaMatrix> {
    let k = specs.len();
    let n = data.len();
    let mut values = Vec::with_capacity(n * k);
    let mut sources = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    for (row, (source, obs)) in data.rows().enumerate() {
        let mut max = 0.0f64;
        for spec in specs {
            let v = spec.evaluate(obs)?;
            max = max.max(v);
            values.push(v);
        }
        if max < MIN_ROW_MAX {
            return Err(Error::UnsupportedObservation {
                row,
                source_index: source,
                id: obs.id,
            });
        }
        sources.push(source);
        ids.push(obs.id);
    }
    Ok(OmegaMatrix {
        rows: n,
        cols: k,
        values,
        sources,
        ids,
    })
}
