//! Dense grid value types.
//!
//! All planner state lives in three shapes: `Grid2` (x, y), `Grid3`
//! (x, y, heading) and `Grid4` (x, y, heading, action). Data is stored
//! row-major with heading and action as the innermost axes, so the linear
//! index of a pose is `(y * width + x) * orientations + theta`. Tie-breaks
//! that say "lowest linear index" refer to that layout.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid2 {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid3 {
    pub width: usize,
    pub height: usize,
    pub orientations: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid4 {
    pub width: usize,
    pub height: usize,
    pub orientations: usize,
    pub actions: usize,
    pub data: Vec<f64>,
}

impl Grid2 {
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Grid2 {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[self.idx(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        let i = self.idx(x, y);
        self.data[i] = value;
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn same_shape(&self, other: &Grid2) -> bool {
        self.width == other.width && self.height == other.height
    }
}

impl Grid3 {
    pub fn filled(width: usize, height: usize, orientations: usize, value: f64) -> Self {
        Grid3 {
            width,
            height,
            orientations,
            data: vec![value; width * height * orientations],
        }
    }

    pub fn zeros(width: usize, height: usize, orientations: usize) -> Self {
        Self::filled(width, height, orientations, 0.0)
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize, theta: usize) -> usize {
        debug_assert!(x < self.width && y < self.height && theta < self.orientations);
        (y * self.width + x) * self.orientations + theta
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, theta: usize) -> f64 {
        self.data[self.idx(x, y, theta)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, theta: usize, value: f64) {
        let i = self.idx(x, y, theta);
        self.data[i] = value;
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn same_shape(&self, other: &Grid3) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.orientations == other.orientations
    }

    /// Largest entry, ties broken toward the lowest linear index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        best
    }

    /// Checks the distribution contract: non-negative entries summing to 1.
    pub fn is_distribution(&self, tol: f64) -> bool {
        self.data.iter().all(|&v| v >= 0.0) && (self.sum() - 1.0).abs() <= tol
    }
}

impl Grid4 {
    pub fn filled(
        width: usize,
        height: usize,
        orientations: usize,
        actions: usize,
        value: f64,
    ) -> Self {
        Grid4 {
            width,
            height,
            orientations,
            actions,
            data: vec![value; width * height * orientations * actions],
        }
    }

    pub fn zeros(width: usize, height: usize, orientations: usize, actions: usize) -> Self {
        Self::filled(width, height, orientations, actions, 0.0)
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize, theta: usize, action: usize) -> usize {
        debug_assert!(
            x < self.width && y < self.height && theta < self.orientations && action < self.actions
        );
        ((y * self.width + x) * self.orientations + theta) * self.actions + action
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, theta: usize, action: usize) -> f64 {
        self.data[self.idx(x, y, theta, action)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, theta: usize, action: usize, value: f64) {
        let i = self.idx(x, y, theta, action);
        self.data[i] = value;
    }

    /// Heaviest action at one state; ties resolve to the lowest action
    /// index. Returns `(action, weight)`.
    pub fn argmax_action(&self, x: usize, y: usize, theta: usize) -> (usize, f64) {
        let base = self.idx(x, y, theta, 0);
        let row = &self.data[base..base + self.actions];
        let mut best = 0;
        for (a, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = a;
            }
        }
        (best, row[best])
    }

    pub fn same_shape(&self, other: &Grid4) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.orientations == other.orientations
            && self.actions == other.actions
    }

    /// Number of states, i.e. entries per action slice.
    pub fn states(&self) -> usize {
        self.width * self.height * self.orientations
    }
}

pub(crate) fn require(cond: bool, what: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(what.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_index_layout() {
        let g = Grid3::zeros(2, 2, 2);
        assert_eq!(g.idx(0, 0, 0), 0);
        assert_eq!(g.idx(0, 0, 1), 1);
        assert_eq!(g.idx(1, 0, 0), 2);
        assert_eq!(g.idx(0, 1, 0), 4);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        let mut g = Grid3::zeros(2, 1, 2);
        g.set(0, 0, 1, 5.0);
        g.set(1, 0, 0, 5.0);
        assert_eq!(g.argmax(), g.idx(0, 0, 1));
    }

    #[test]
    fn distribution_check() {
        let mut g = Grid3::zeros(2, 1, 1);
        g.set(0, 0, 0, 0.25);
        g.set(1, 0, 0, 0.75);
        assert!(g.is_distribution(1e-9));
        g.set(1, 0, 0, -0.75);
        assert!(!g.is_distribution(1e-9));
    }
}
