//! RDM file format.
//!
//! ```json
//! {
//!   "p": 1,
//!   "n_modes": 4,
//!   "n_particles": 2,
//!   "layout": "full-tensor",
//!   "data": [[[1.0, 0.0], [0.0, 0.0], ...], ...],
//!   "metadata": {}
//! }
//! ```
//!
//! `data` holds the matrix row-major as `[re, im]` pairs. For `p = 2` the
//! `pair-antisym` layout indexes rows and columns by pairs `i < j` in
//! lexicographic order; `full-tensor` uses `i·n + j`. Element `[(i,j),(k,l)]`
//! is `⟨a†_i a†_j a_l a_k⟩`, doubled in the pair layout so that both layouts
//! trace to `N(N-1)`.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::rdm::{RdmLayout, RdmMatrix};
use crate::scalar::{Real, C};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RdmFile {
    pub p: usize,
    pub n_modes: usize,
    pub n_particles: usize,
    pub layout: RdmLayout,
    pub data: Vec<Vec<[f64; 2]>>,
    #[serde(default)]
    pub metadata: Value,
}

impl RdmFile {
    pub fn from_matrix<T: Real>(m: &RdmMatrix<T>, metadata: Value) -> Self {
        let data = m
            .data()
            .rows()
            .into_iter()
            .map(|row| row.iter().map(|z| [z.re.as_f64(), z.im.as_f64()]).collect())
            .collect();
        RdmFile { p: m.p(), n_modes: m.n_modes(), n_particles: m.n_particles(), layout: m.layout(), data, metadata }
    }

    pub fn to_matrix<T: Real>(&self) -> Result<RdmMatrix<T>> {
        let dim = self.data.len();
        if let Some((r, row)) = self.data.iter().enumerate().find(|(_, row)| row.len() != dim) {
            return Err(Error::ShapeMismatch(format!("row {r} has {} entries, expected {dim}", row.len())));
        }
        if self.data.iter().flatten().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Config("RDM data contains non-finite values".into()));
        }
        let a = Array2::from_shape_fn((dim, dim), |(i, j)| {
            let [re, im] = self.data[i][j];
            C::new(T::lit(re), T::lit(im))
        });
        RdmMatrix::new(self.p, self.n_modes, self.n_particles, self.layout, a)
    }
}

pub fn write_rdm<T: Real>(path: impl AsRef<Path>, m: &RdmMatrix<T>, metadata: Value) -> Result<()> {
    let text = serde_json::to_string_pretty(&RdmFile::from_matrix(m, metadata))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Reads a matrix and its metadata.
pub fn read_rdm<T: Real>(path: impl AsRef<Path>) -> Result<(RdmMatrix<T>, Value)> {
    let file: RdmFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let m = file.to_matrix()?;
    Ok((m, file.metadata))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{build_determinant, enumerate_sector, ModeLayout};
    use crate::rdm::compute_2rdm;
    use std::sync::Arc;

    #[test]
    fn round_trip_preserves_bits() {
        let basis = Arc::new(enumerate_sector(ModeLayout::pure(6, 3).unwrap()).unwrap());
        let psi = build_determinant::<f64>(&basis, &[0, 2, 5]).unwrap();
        let mut m = compute_2rdm(&psi).unwrap();
        m.data_mut()[[0, 1]] = C::new(0.1 + 1e-17, -1.0 / 3.0);
        let file = RdmFile::from_matrix(&m, serde_json::json!({"seed": 7}));
        let text = serde_json::to_string(&file).unwrap();
        let back: RdmFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_matrix::<f64>().unwrap(), m);
        assert_eq!(back.metadata["seed"], 7);
    }

    #[test]
    fn ragged_data_is_rejected() {
        let text = r#"{"p":1,"n_modes":2,"n_particles":1,"layout":"full-tensor","data":[[[1,0],[0,0]],[[0,0]]]}"#;
        let file: RdmFile = serde_json::from_str(text).unwrap();
        assert!(file.to_matrix::<f64>().is_err());
    }
}
