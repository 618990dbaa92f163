use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Dense real table indexed `[state][action]`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SaTable {
    num_states: usize,
    num_actions: usize,
    data: Vec<f64>,
}

impl SaTable {
    pub fn new(num_states: usize, num_actions: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != num_states * num_actions {
            return Err(Error::Shape(format!(
                "table of {}x{} needs {} entries, got {}",
                num_states,
                num_actions,
                num_states * num_actions,
                data.len()
            )));
        }
        Ok(Self {
            num_states,
            num_actions,
            data,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let num_actions = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != num_actions) {
            return Err(Error::Shape("ragged table rows".into()));
        }
        Self::new(rows.len(), num_actions, rows.concat())
    }

    pub fn filled(num_states: usize, num_actions: usize, value: f64) -> Self {
        Self {
            num_states,
            num_actions,
            data: vec![value; num_states * num_actions],
        }
    }

    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self::filled(num_states, num_actions, 0.0)
    }

    pub fn from_fn(num_states: usize, num_actions: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(num_states * num_actions);
        for s in 0..num_states {
            for a in 0..num_actions {
                data.push(f(s, a));
            }
        }
        Self {
            num_states,
            num_actions,
            data,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.num_states, self.num_actions)
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.data[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn row_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.data[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.num_actions.max(1)).take(self.num_states)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            num_states: self.num_states,
            num_actions: self.num_actions,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Entrywise combination of two equally shaped tables.
    pub fn zip_map(&self, other: &SaTable, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            num_states: self.num_states,
            num_actions: self.num_actions,
            data: self.data.iter().zip(&other.data).map(|(&x, &y)| f(x, y)).collect(),
        })
    }

    pub fn max_abs_diff(&self, other: &SaTable) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn dot(&self, other: &SaTable) -> f64 {
        self.data.iter().zip(&other.data).map(|(x, y)| x * y).sum()
    }

    pub fn check_same_shape(&self, other: &SaTable) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "tables of shape {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    pub fn check_shape(&self, num_states: usize, num_actions: usize, what: &str) -> Result<()> {
        if self.shape() != (num_states, num_actions) {
            return Err(Error::Shape(format!(
                "{what} has shape {:?}, expected ({num_states}, {num_actions})",
                self.shape()
            )));
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for SaTable {
    type Output = f64;

    fn index(&self, (s, a): (usize, usize)) -> &f64 {
        &self.data[s * self.num_actions + a]
    }
}

impl IndexMut<(usize, usize)> for SaTable {
    fn index_mut(&mut self, (s, a): (usize, usize)) -> &mut f64 {
        &mut self.data[s * self.num_actions + a]
    }
}

/// Numerically stable `log Σ exp(x)`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Lowest index attaining the maximum.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
