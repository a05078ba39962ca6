//! Observed target-domain data with the target column structurally removed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Target-domain observations: every node except `target`, columns in node
/// index order with the target skipped.
///
/// The true target values never live here; [`split_target`] hands them back
/// as a separate vector so only evaluation code can reach them.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedData {
    target: usize,
    node_count: usize,
    matrix: DMatrix<f64>,
}

impl ObservedData {
    pub fn new(target: usize, node_count: usize, matrix: DMatrix<f64>) -> Result<Self> {
        if target >= node_count {
            return Err(Error::DimensionMismatch {
                expected: node_count,
                got: target,
            });
        }
        if matrix.ncols() != node_count - 1 {
            return Err(Error::DimensionMismatch {
                expected: node_count - 1,
                got: matrix.ncols(),
            });
        }
        Ok(Self {
            target,
            node_count,
            matrix,
        })
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Column of node `node` in the observed matrix, or `None` for the target.
    pub fn column_of(&self, node: usize) -> Option<usize> {
        observed_column(self.target, node)
    }

    /// Node index of observed column `col`.
    pub fn node_of(&self, col: usize) -> usize {
        if col < self.target {
            col
        } else {
            col + 1
        }
    }

    /// Observed nodes in column order.
    pub fn observed_nodes(&self) -> Vec<usize> {
        (0..self.node_count).filter(|&k| k != self.target).collect()
    }

    /// Per-column sample means.
    pub fn column_means(&self) -> DVector<f64> {
        self.matrix.row_mean().transpose()
    }
}

pub(crate) fn observed_column(target: usize, node: usize) -> Option<usize> {
    use std::cmp::Ordering::*;
    match node.cmp(&target) {
        Less => Some(node),
        Equal => None,
        Greater => Some(node - 1),
    }
}

/// Separates a full `n x p` matrix into observed data and the target column.
pub fn split_target(full: &DMatrix<f64>, target: usize) -> Result<(ObservedData, DVector<f64>)> {
    let p = full.ncols();
    if target >= p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: target,
        });
    }
    let truth = full.column(target).clone_owned();
    let observed = full.clone().remove_column(target);
    Ok((ObservedData::new(target, p, observed)?, truth))
}
