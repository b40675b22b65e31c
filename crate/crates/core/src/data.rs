use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An n x p predictor matrix stored by column, plus the n-vector response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    columns: Vec<Vec<f64>>,
    response: Vec<f64>,
    names: Vec<String>,
}

impl Dataset {
    pub fn new(columns: Vec<Vec<f64>>, response: Vec<f64>) -> Result<Self> {
        let names = (1..=columns.len()).map(|j| format!("X{j}")).collect();
        Self::with_names(columns, response, names)
    }

    pub fn with_names(columns: Vec<Vec<f64>>, response: Vec<f64>, names: Vec<String>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::InvalidInput(format!(
                "{} column names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        let n = response.len();
        if let Some((j, c)) = columns.iter().enumerate().find(|(_, c)| c.len() != n) {
            return Err(Error::InvalidInput(format!(
                "column {} has {} rows, response has {n}",
                j + 1,
                c.len()
            )));
        }
        Ok(Self {
            columns,
            response,
            names,
        })
    }

    /// Builds a dataset from row-major predictors.
    pub fn from_rows(rows: &[Vec<f64>], response: Vec<f64>) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidInput("ragged predictor rows".into()));
        }
        let columns = (0..p).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        Self::new(columns, response)
    }

    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n()).map(|i| self.row(i)).collect()
    }

    /// Rows at `indices`, in that order (repeats allowed).
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            columns: self
                .columns
                .iter()
                .map(|c| indices.iter().map(|&i| c[i]).collect())
                .collect(),
            response: indices.iter().map(|&i| self.response[i]).collect(),
            names: self.names.clone(),
        }
    }

    /// First row index holding a non-finite value, if any.
    pub fn first_non_finite_row(&self) -> Option<usize> {
        (0..self.n()).find(|&i| {
            !self.response[i].is_finite() || self.columns.iter().any(|c| !c[i].is_finite())
        })
    }
}
