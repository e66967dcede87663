//! Time grid and dense per-path storage.

use serde::{Deserialize, Serialize};

/// Uniform grid on `[0, horizon]` with points `t_j = j * dt`, `j = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Self {
        assert!(horizon > 0.0 && horizon.is_finite(), "horizon must be positive");
        assert!(n_steps >= 1, "n_steps must be >= 1");
        TimeGrid { horizon, n_steps }
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    #[inline]
    pub fn t(&self, step: usize) -> f64 {
        step as f64 * self.dt()
    }

    /// Number of grid points, `n_steps + 1`.
    #[inline]
    pub fn n_points(&self) -> usize {
        self.n_steps + 1
    }
}

/// Row-major `n_paths x n_cols` matrix of f64, one row per path.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2 {
    pub n_paths: usize,
    pub n_cols: usize,
    data: Vec<f64>,
}

impl Grid2 {
    pub fn zeros(n_paths: usize, n_cols: usize) -> Self {
        Grid2 { n_paths, n_cols, data: vec![0.0; n_paths * n_cols] }
    }

    pub fn filled(n_paths: usize, n_cols: usize, value: f64) -> Self {
        Grid2 { n_paths, n_cols, data: vec![value; n_paths * n_cols] }
    }

    #[inline]
    pub fn get(&self, path: usize, col: usize) -> f64 {
        debug_assert!(path < self.n_paths && col < self.n_cols);
        self.data[path * self.n_cols + col]
    }

    #[inline]
    pub fn set(&mut self, path: usize, col: usize, v: f64) {
        debug_assert!(path < self.n_paths && col < self.n_cols);
        self.data[path * self.n_cols + col] = v;
    }

    #[inline]
    pub fn row(&self, path: usize) -> &[f64] {
        &self.data[path * self.n_cols..(path + 1) * self.n_cols]
    }

    #[inline]
    pub fn row_mut(&mut self, path: usize) -> &mut [f64] {
        &mut self.data[path * self.n_cols..(path + 1) * self.n_cols]
    }

    /// Parallel iterator over whole rows; each worker owns disjoint paths,
    /// so writes are race-free and results do not depend on scheduling.
    pub fn par_rows_mut(&mut self) -> rayon::slice::ChunksExactMut<'_, f64> {
        use rayon::prelude::*;
        self.data.par_chunks_exact_mut(self.n_cols)
    }

    /// Disjoint mutable row slices, for hand-rolled zips across grids.
    pub fn rows_mut_vec(&mut self) -> Vec<&mut [f64]> {
        self.data.chunks_exact_mut(self.n_cols).collect()
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.get(p, col)).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn from_vec(n_paths: usize, n_cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n_paths * n_cols);
        Grid2 { n_paths, n_cols, data }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_points_and_dt() {
        let g = TimeGrid::new(1.0, 4);
        assert_eq!(g.dt(), 0.25);
        assert_eq!(g.n_points(), 5);
        assert_eq!(g.t(4), 1.0);
    }

    #[test]
    fn row_major_indexing() {
        let mut m = Grid2::zeros(3, 2);
        m.set(2, 1, 7.0);
        assert_eq!(m.get(2, 1), 7.0);
        assert_eq!(m.row(2), &[0.0, 7.0]);
    }
}
