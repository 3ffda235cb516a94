//! Field state: one `R^{n-1}`-valued lattice field per component with pinned
//! boundary values.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::grid::GridSpec;

/// `N-1` node-indexed vector fields plus the current regularisation `eps`.
///
/// Component `i` is a flat array of `node_count * (n-1)` values, node-major
/// with the vector entries contiguous per node (x-fastest node order).
#[derive(Debug, Clone)]
pub struct FieldState {
    pub grid: Arc<GridSpec>,
    pub comps: Vec<Vec<f64>>,
    pub eps: f64,
}

impl FieldState {
    /// Constant field `e_{n-1}` on every valid node, pinned values applied.
    pub fn constant(grid: Arc<GridSpec>, eps: f64) -> Self {
        let vd = grid.vdim();
        let total = grid.node_count();
        let mut comp = vec![0.0; total * vd];
        for node in 0..total {
            comp[node * vd + vd - 1] = 1.0;
        }
        let comps = vec![comp; grid.components()];
        let mut fs = FieldState { grid, comps, eps };
        fs.apply_pinned();
        fs
    }

    pub fn from_components(grid: Arc<GridSpec>, comps: Vec<Vec<f64>>, eps: f64) -> Result<Self> {
        let vd = grid.vdim();
        if comps.len() != grid.components() {
            return Err(Error::input(format!(
                "expected {} components, got {}",
                grid.components(),
                comps.len()
            )));
        }
        for c in &comps {
            if c.len() != grid.node_count() * vd {
                return Err(Error::input("component array has wrong length"));
            }
        }
        let mut fs = FieldState { grid, comps, eps };
        fs.apply_pinned();
        Ok(fs)
    }

    /// Overwrite every pinned node with its stored datum.
    pub fn apply_pinned(&mut self) {
        let vd = self.grid.vdim();
        for (i, comp) in self.comps.iter_mut().enumerate() {
            let values = &self.grid.pinned_values[i];
            for (k, &idx) in self.grid.pinned.iter().enumerate() {
                let dst = idx as usize * vd;
                comp[dst..dst + vd].copy_from_slice(&values[k * vd..(k + 1) * vd]);
            }
        }
    }

    /// Value of component `i` at a node.
    pub fn value(&self, i: usize, node: usize) -> &[f64] {
        let vd = self.grid.vdim();
        &self.comps[i][node * vd..(node + 1) * vd]
    }

    /// Largest deviation of any pinned node from its datum; zero on a
    /// well-formed state.
    pub fn pinned_violation(&self) -> f64 {
        let vd = self.grid.vdim();
        let mut worst = 0.0f64;
        for (i, comp) in self.comps.iter().enumerate() {
            let values = &self.grid.pinned_values[i];
            for (k, &idx) in self.grid.pinned.iter().enumerate() {
                let a = &comp[idx as usize * vd..idx as usize * vd + vd];
                let b = &values[k * vd..(k + 1) * vd];
                for (x, y) in a.iter().zip(b) {
                    worst = worst.max((x - y).abs());
                }
            }
        }
        worst
    }

    pub fn all_finite(&self) -> bool {
        self.comps
            .iter()
            .all(|c| c.iter().all(|v| v.is_finite()))
    }
}
