//! Sparse feature vectors and the row/column views the classifier needs.

use serde::{Deserialize, Serialize};

/// Sparse vector: strictly increasing column indices with their values.
/// Absent columns are zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVec {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVec {
    pub fn from_pairs(mut pairs: Vec<(u32, f64)>) -> Self {
        pairs.sort_unstable_by_key(|&(i, _)| i);
        pairs.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        pairs.retain(|&(_, v)| v != 0.0);
        SparseVec {
            indices: pairs.iter().map(|&(i, _)| i).collect(),
            values: pairs.iter().map(|&(_, v)| v).collect(),
        }
    }

    pub fn from_dense(row: &[f64]) -> Self {
        SparseVec::from_pairs(
            row.iter().enumerate().filter(|&(_, &v)| v != 0.0).map(|(i, &v)| (i as u32, v)).collect(),
        )
    }

    pub fn get(&self, col: u32) -> f64 {
        match self.indices.binary_search(&col) {
            Ok(pos) => self.values[pos],
            Err(_) => 0.0,
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn max_index(&self) -> Option<u32> {
        self.indices.last().copied()
    }
}

/// Row-major sparse matrix with a fixed column count, plus a column-major
/// view built on demand for split searching.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub n_features: usize,
    pub rows: Vec<SparseVec>,
}

impl FeatureMatrix {
    pub fn new(n_features: usize, rows: Vec<SparseVec>) -> Self {
        debug_assert!(rows
            .iter()
            .all(|r| r.max_index().is_none_or(|m| (m as usize) < n_features)));
        FeatureMatrix { n_features, rows }
    }

    pub fn from_dense(rows: Vec<Vec<f64>>) -> Self {
        let n_features = rows.first().map_or(0, Vec::len);
        FeatureMatrix {
            n_features,
            rows: rows.iter().map(|r| SparseVec::from_dense(r)).collect(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Column-major nonzeros: for each feature, `(row, value)` sorted by row.
    pub fn to_columns(&self) -> Vec<Vec<(u32, f64)>> {
        let mut cols: Vec<Vec<(u32, f64)>> = vec![Vec::new(); self.n_features];
        for (r, row) in self.rows.iter().enumerate() {
            for (c, v) in row.iter() {
                cols[c as usize].push((r as u32, v));
            }
        }
        cols
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_round_trip() {
        let v = SparseVec::from_dense(&[0.0, 1.5, 0.0, -2.0]);
        assert_eq!(v.nnz(), 2);
        assert_eq!(v.get(0), 0.0);
        assert_eq!(v.get(1), 1.5);
        assert_eq!(v.get(3), -2.0);
        assert_eq!(v.max_index(), Some(3));
    }

    #[test]
    fn from_pairs_sorts_and_merges() {
        let v = SparseVec::from_pairs(vec![(5, 1.0), (2, 2.0), (5, 3.0)]);
        assert_eq!(v.indices, vec![2, 5]);
        assert_eq!(v.values, vec![2.0, 4.0]);
    }

    #[test]
    fn column_view_matches_rows() {
        let m = FeatureMatrix::from_dense(vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 4.0]]);
        let cols = m.to_columns();
        assert_eq!(cols[0], vec![(0, 1.0), (2, 3.0)]);
        assert_eq!(cols[1], vec![(1, 2.0), (2, 4.0)]);
    }
}
