//! Lattice over the computational box with node classification against the
//! excised domain and pinned boundary values.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::DomainSpec;

/// Classification of a lattice node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum NodeClass {
    /// Inside a closed tube: carries no field values.
    Excluded = 0,
    /// The discrete layer adjacent to the domain boundary: holds the datum.
    Pinned = 1,
    /// Free node updated by the minimiser.
    Interior = 2,
}

/// Uniform lattice on `[-L, L]^n` with per-node classification and the pinned
/// datum of every component.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub n: usize,
    /// Number of terminals of the underlying instance.
    pub n_terminals: usize,
    pub h: f64,
    pub box_l: f64,
    pub dims: Vec<usize>,
    pub strides: Vec<usize>,
    pub class: Vec<NodeClass>,
    /// Pinned node indices, ascending.
    pub pinned: Vec<u32>,
    /// Pinned datum per component, `(n-1)` values per pinned node, in the
    /// order of `pinned`.
    pub pinned_values: Vec<Vec<f64>>,
    pub interior: Vec<u32>,
}

impl GridSpec {
    pub fn node_count(&self) -> usize {
        self.dims.iter().product()
    }

    /// Vector dimension of the field values (`n - 1`).
    pub fn vdim(&self) -> usize {
        self.n - 1
    }

    pub fn components(&self) -> usize {
        self.n_terminals - 1
    }

    /// Cartesian coordinates of a node by flat index.
    pub fn coords(&self, idx: usize) -> Vec<f64> {
        self.point(&self.unravel(idx))
    }

    /// Multi-index of a node.
    pub fn unravel(&self, idx: usize) -> Vec<usize> {
        (0..self.n).map(|a| idx / self.strides[a] % self.dims[a]).collect()
    }

    pub fn ravel(&self, mi: &[usize]) -> usize {
        mi.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn point(&self, mi: &[usize]) -> Vec<f64> {
        mi.iter().map(|&i| -self.box_l + self.h * i as f64).collect()
    }

    pub fn is_interior(&self, idx: usize) -> bool {
        self.class[idx] == NodeClass::Interior
    }

    pub fn is_valid(&self, idx: usize) -> bool {
        self.class[idx] != NodeClass::Excluded
    }

    /// Nearest node index to a point (clamped into the box).
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let mi: Vec<usize> = (0..self.n)
            .map(|a| {
                let t = ((x[a] + self.box_l) / self.h).round();
                (t.max(0.0) as usize).min(self.dims[a] - 1)
            })
            .collect();
        self.ravel(&mi)
    }
}

/// Classify every node of the `h`-lattice on `[-L, L]^n` against the domain
/// and evaluate the pinned datum. Fails when the tube radius is under-resolved
/// (`delta < 3h`).
pub fn build_grid(ds: &DomainSpec, h: f64) -> Result<GridSpec> {
    if h <= 0.0 {
        return Err(Error::input("grid spacing must be > 0"));
    }
    if ds.delta < 3.0 * h - 1e-12 {
        return Err(Error::input(format!(
            "grid spacing {h} under-resolves the tube radius {} (need h <= delta/3)",
            ds.delta
        )));
    }
    let n = ds.dim();
    let side = (2.0 * ds.box_l / h).round() as usize + 1;
    let dims = vec![side; n];
    let mut strides = vec![0usize; n];
    // x-fastest layout: stride grows with the axis index.
    let mut s = 1;
    for a in 0..n {
        strides[a] = s;
        s *= dims[a];
    }
    let total: usize = dims.iter().product();

    let proto = GridSpec {
        n,
        n_terminals: ds.terminals.count(),
        h,
        box_l: ds.box_l,
        dims: dims.clone(),
        strides: strides.clone(),
        class: Vec::new(),
        pinned: Vec::new(),
        pinned_values: Vec::new(),
        interior: Vec::new(),
    };

    // Pass 1: excluded nodes (inside any closed tube).
    let excluded: Vec<bool> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let x = proto.point(&proto.unravel(idx));
            ds.in_any_tube_closure(&x)
        })
        .collect();

    // Pass 2: pinned = valid nodes on the box faces or within two axis steps
    // of an excluded node. Two rings matter: every lattice face lying fully
    // inside the pinned slab has its winding fixed by the datum, which makes
    // the slab impermeable to discrete vortex lines - with a single ring a
    // minimiser can push the topologically required vortex through the
    // unconstrained cells between the pinned shell and the mask and unwind
    // it for free.
    let near_mask: Vec<bool> = (0..total)
        .into_par_iter()
        .map(|idx| {
            if excluded[idx] {
                return false;
            }
            let mi = proto.unravel(idx);
            for a in 0..n {
                if mi[a] > 0 && excluded[idx - strides[a]] {
                    return true;
                }
                if mi[a] + 1 < dims[a] && excluded[idx + strides[a]] {
                    return true;
                }
            }
            false
        })
        .collect();
    let class: Vec<NodeClass> = (0..total)
        .into_par_iter()
        .map(|idx| {
            if excluded[idx] {
                return NodeClass::Excluded;
            }
            let mi = proto.unravel(idx);
            if mi.iter().zip(&dims).any(|(&i, &d)| i == 0 || i == d - 1) {
                return NodeClass::Pinned;
            }
            if near_mask[idx] {
                return NodeClass::Pinned;
            }
            for a in 0..n {
                if (mi[a] > 0 && near_mask[idx - strides[a]])
                    || (mi[a] + 1 < dims[a] && near_mask[idx + strides[a]])
                {
                    return NodeClass::Pinned;
                }
            }
            NodeClass::Interior
        })
        .collect();

    let pinned: Vec<u32> = class
        .iter()
        .enumerate()
        .filter(|(_, c)| **c == NodeClass::Pinned)
        .map(|(i, _)| i as u32)
        .collect();
    let interior: Vec<u32> = class
        .iter()
        .enumerate()
        .filter(|(_, c)| **c == NodeClass::Interior)
        .map(|(i, _)| i as u32)
        .collect();

    let vdim = n - 1;
    let comps = ds.components();
    let mut pinned_values = Vec::with_capacity(comps);
    for i in 0..comps {
        let vals: Vec<f64> = pinned
            .par_iter()
            .map(|&idx| {
                let x = proto.point(&proto.unravel(idx as usize));
                ds.boundary_datum(i, &x)
                    .unwrap_or_else(|_| {
                        // A pinned node exactly on a tube axis cannot occur
                        // for delta >= 3h; fall back to the constant datum.
                        let mut e = vec![0.0; vdim];
                        e[vdim - 1] = 1.0;
                        e
                    })
            })
            .flatten()
            .collect();
        pinned_values.push(vals);
    }

    Ok(GridSpec {
        class,
        pinned,
        pinned_values,
        interior,
        ..proto
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_domain, TerminalSet};

    fn two_point_domain() -> DomainSpec {
        let ts = TerminalSet::new(3, vec![vec![-1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]]).unwrap();
        build_domain(&ts, 0.2, 0.5, 2.0).unwrap()
    }

    #[test]
    fn grid_dimensions() {
        let ds = two_point_domain();
        let g = build_grid(&ds, 0.05).unwrap();
        assert_eq!(g.dims, vec![81, 81, 81]);
        assert_eq!(g.node_count(), 81 * 81 * 81);
        assert!(!g.pinned.is_empty());
        // A tube sleeve of pinned values exists beyond the box faces alone.
        let face_nodes = 81 * 81 * 81 - 79 * 79 * 79;
        assert!(g.pinned.len() > face_nodes);
    }

    #[test]
    fn under_resolved_rejected() {
        let ds = two_point_domain();
        assert!(build_grid(&ds, 0.09).is_err());
    }

    #[test]
    fn deep_tube_node_excluded() {
        let ds = two_point_domain();
        let g = build_grid(&ds, 0.05).unwrap();
        let idx = g.nearest_node(&[0.0, 0.0, 0.0]);
        assert_eq!(g.class[idx], NodeClass::Excluded);
        let idx = g.nearest_node(&[0.0, 1.5, 0.0]);
        assert_eq!(g.class[idx], NodeClass::Interior);
    }

    #[test]
    fn pinned_values_unit_norm() {
        let ds = two_point_domain();
        let g = build_grid(&ds, 0.05).unwrap();
        let vd = g.vdim();
        for (k, _) in g.pinned.iter().enumerate() {
            let v = &g.pinned_values[0][k * vd..(k + 1) * vd];
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn coords_roundtrip() {
        let ds = two_point_domain();
        let g = build_grid(&ds, 0.05).unwrap();
        let mi = vec![3, 7, 11];
        let idx = g.ravel(&mi);
        assert_eq!(g.unravel(idx), mi);
        let x = g.point(&mi);
        assert_eq!(g.nearest_node(&x), idx);
    }
}
