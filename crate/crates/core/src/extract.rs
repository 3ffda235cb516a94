//! Vortex-line extraction from minimised fields (n = 3): plaquette winding
//! numbers realise the discrete Jacobian 1-current, cube-by-cube face pairing
//! threads the vortex lines, and per-component polylines merge into a network
//! with multiplicity vectors.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::currents::{boundary_of, psi_mass, CurrentEdge, MultiplicityCurrent, PsiNorm};
use crate::error::{Error, Result};
use crate::field::{FieldState, GridSpec, NodeClass};
use crate::linalg;

/// Corner amplitude below which a face is flagged singular.
pub const SINGULAR_AMP: f64 = 1e-6;

/// Deterministic infinitesimal bias added to every corner value before the
/// angle computation. A straight segment between two plane vectors subtends
/// strictly less than pi unless it passes exactly through the origin, so
/// wrapped angle steps always pick the correct branch except on exact
/// antipodal ties (where wrap(+pi) and wrap(-pi) both give +pi and cube
/// closedness breaks). The shared bias resolves those measure-zero ties the
/// same way on both faces of every edge.
const TIE_BIAS: [f64; 2] = [3.0e-13, 7.0e-13];

/// An oriented lattice face: normal along `axis`, spanned by the two cyclic
/// successor axes, anchored at the lowest-corner node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Face {
    pub axis: usize,
    pub node: usize,
}

/// Winding of `u/|u|` around one face, traversed right-handed about the
/// positive axis direction; `None` when a corner is invalid or near-singular.
pub fn plaquette_winding(fs: &FieldState, comp: usize, face: Face) -> Option<i32> {
    let grid = &fs.grid;
    debug_assert_eq!(grid.n, 3);
    let b = (face.axis + 1) % 3;
    let c = (face.axis + 2) % 3;
    let (sb, sc) = (grid.strides[b], grid.strides[c]);
    let corners = [
        face.node,
        face.node + sb,
        face.node + sb + sc,
        face.node + sc,
    ];
    let vd = grid.vdim();
    let mut angles = [0.0f64; 4];
    for (k, &idx) in corners.iter().enumerate() {
        if grid.class[idx] == NodeClass::Excluded {
            return None;
        }
        let u = &fs.comps[comp][idx * vd..idx * vd + vd];
        let amp = (u[0] * u[0] + u[1] * u[1]).sqrt();
        if amp < SINGULAR_AMP {
            return None;
        }
        angles[k] = (u[1] + TIE_BIAS[1]).atan2(u[0] + TIE_BIAS[0]);
    }
    let mut total = 0.0;
    for k in 0..4 {
        let mut d = angles[(k + 1) % 4] - angles[k];
        while d > std::f64::consts::PI {
            d -= 2.0 * std::f64::consts::PI;
        }
        while d <= -std::f64::consts::PI {
            d += 2.0 * std::f64::consts::PI;
        }
        total += d;
    }
    Some((total / (2.0 * std::f64::consts::PI)).round() as i32)
}

/// Sparse winding data of one component: nonzero faces and flagged
/// (near-singular) faces.
#[derive(Debug, Clone, Default)]
pub struct WindingField {
    pub nonzero: HashMap<Face, i32>,
    pub flagged: Vec<Face>,
}

/// Windings of every complete face of one component.
pub fn winding_field(fs: &FieldState, comp: usize) -> WindingField {
    let grid = &fs.grid;
    let total = grid.node_count();
    let per_node: Vec<(Vec<(Face, i32)>, Vec<Face>)> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let mi = grid.unravel(idx);
            let mut nz = Vec::new();
            let mut fl = Vec::new();
            for axis in 0..3 {
                let b = (axis + 1) % 3;
                let c = (axis + 2) % 3;
                if mi[b] + 1 >= grid.dims[b] || mi[c] + 1 >= grid.dims[c] {
                    continue;
                }
                let face = Face { axis, node: idx };
                match plaquette_winding(fs, comp, face) {
                    Some(0) => {}
                    Some(w) => nz.push((face, w)),
                    None => {
                        // Distinguish masked faces (no vortex information)
                        // from singular cores.
                        let corners = [
                            idx,
                            idx + grid.strides[b],
                            idx + grid.strides[b] + grid.strides[c],
                            idx + grid.strides[c],
                        ];
                        if corners.iter().all(|&k| grid.class[k] != NodeClass::Excluded) {
                            fl.push(face);
                        }
                    }
                }
            }
            (nz, fl)
        })
        .collect();
    let mut wf = WindingField::default();
    for (nz, fl) in per_node {
        wf.nonzero.extend(nz);
        wf.flagged.extend(fl);
    }
    wf
}

/// Infer flagged faces from cube closedness: whenever a complete cube has
/// exactly one unknown face, its winding is minus the outward sum of the
/// other five. Iterates to a fixed point; faces that remain unknown are left
/// flagged.
pub fn repair_windings(grid: &GridSpec, wf: &mut WindingField) {
    let mut unknown: std::collections::HashSet<Face> = wf.flagged.iter().copied().collect();
    let cube_of = |face: &Face, side: usize| -> Option<usize> {
        if side == 0 {
            let mi = grid.unravel(face.node);
            if mi[face.axis] > 0 {
                Some(face.node - grid.strides[face.axis])
            } else {
                None
            }
        } else {
            Some(face.node)
        }
    };
    loop {
        let mut progressed = false;
        let faces: Vec<Face> = unknown.iter().copied().collect();
        for face in faces {
            if !unknown.contains(&face) {
                continue;
            }
            'sides: for side in 0..2 {
                let Some(cell) = cube_of(&face, side) else {
                    continue;
                };
                let mi = grid.unravel(cell);
                if (0..3).any(|a| mi[a] + 1 >= grid.dims[a]) {
                    continue;
                }
                let mut sum = 0i64;
                for axis in 0..3 {
                    for (node, sign) in [(cell + grid.strides[axis], 1i64), (cell, -1i64)] {
                        let f = Face { axis, node };
                        if f == face {
                            continue;
                        }
                        if unknown.contains(&f) {
                            continue 'sides;
                        }
                        sum += sign * *wf.nonzero.get(&f).unwrap_or(&0) as i64;
                    }
                }
                // Outward sign of the unknown face relative to this cube.
                let sign = if face.node == cell { -1i64 } else { 1 };
                let w = (-sum * sign) as i32;
                if w != 0 {
                    wf.nonzero.insert(face, w);
                }
                unknown.remove(&face);
                progressed = true;
                break;
            }
        }
        if !progressed {
            break;
        }
    }
    wf.flagged = unknown.into_iter().collect();
}

/// Fraction of complete interior cubes whose outward face windings sum to
/// zero, ignoring cubes touching flagged faces; second value is the number of
/// cubes inspected that carry any winding.
pub fn cube_divergence_stats(grid: &GridSpec, wf: &WindingField) -> (f64, usize) {
    let flagged: std::collections::HashSet<Face> = wf.flagged.iter().copied().collect();
    let mut cubes: std::collections::HashSet<usize> = std::collections::HashSet::new();
    for face in wf.nonzero.keys().chain(flagged.iter()) {
        // A face belongs to the cube anchored at its node and the one behind
        // along the axis.
        cubes.insert(face.node);
        let mi = grid.unravel(face.node);
        if mi[face.axis] > 0 {
            cubes.insert(face.node - grid.strides[face.axis]);
        }
    }
    let mut ok = 0usize;
    let mut checked = 0usize;
    for &cell in &cubes {
        let mi = grid.unravel(cell);
        if (0..3).any(|a| mi[a] + 1 >= grid.dims[a]) {
            continue;
        }
        // Only interior cubes: vortex lines may legitimately terminate in a
        // cube touching the excised region (tube tips at the terminals).
        let mut complete = true;
        for corner in 0..8usize {
            let mut idx = cell;
            for (a, stride) in grid.strides.iter().enumerate() {
                if corner >> a & 1 == 1 {
                    idx += stride;
                }
            }
            if grid.class[idx] == NodeClass::Excluded {
                complete = false;
                break;
            }
        }
        if !complete {
            continue;
        }
        let mut div = 0i64;
        let mut touched_flag = false;
        for axis in 0..3 {
            for (node, sign) in [(cell + grid.strides[axis], 1i64), (cell, -1i64)] {
                let f = Face { axis, node };
                if flagged.contains(&f) {
                    touched_flag = true;
                }
                div += sign * *wf.nonzero.get(&f).unwrap_or(&0) as i64;
            }
        }
        if touched_flag {
            continue;
        }
        checked += 1;
        if div == 0 {
            ok += 1;
        }
    }
    let frac = if checked == 0 {
        1.0
    } else {
        ok as f64 / checked as f64
    };
    (frac, checked)
}

/// A recovered polyline network with per-edge multiplicity vectors.
#[derive(Debug, Clone)]
pub struct ExtractedNetwork {
    pub n_terminals: usize,
    /// Simplified polylines with their multiplicity vectors.
    pub polylines: Vec<(Vec<Vec<f64>>, Vec<i64>)>,
    pub current: MultiplicityCurrent,
    /// Cells where the in/out pairing genuinely failed, over all components.
    pub unresolved: usize,
    /// Crossings dropped as sub-cell noise loops.
    pub discarded_noise: usize,
    /// True when the extracted boundary matches `sink - source` for every
    /// component after terminal snapping.
    pub boundary_match: bool,
}

/// Thread the vortex lines of every component and merge them into a network.
///
/// Terminals within `3h` of a dangling endpoint snap onto it; per-component
/// chains running through the same cells merge into multiplicity vectors.
pub fn extract_network(fs: &FieldState, terminals: &[Vec<f64>]) -> Result<ExtractedNetwork> {
    let grid = &fs.grid;
    if grid.n != 3 {
        return Err(Error::input("extraction is implemented for n = 3 only"));
    }
    let m = grid.components();
    let h = grid.h;
    let mut unresolved = 0usize;
    let mut discarded_noise = 0usize;
    // Per component: oriented steps between adjacent cells, as (from_cell,
    // to_cell) pairs.
    let mut step_lists: Vec<Vec<(usize, usize)>> = Vec::with_capacity(m);
    let mut total_vortex_cells = 0usize;
    for comp in 0..m {
        let mut wf = winding_field(fs, comp);
        repair_windings(grid, &mut wf);
        let (div_ok, checked) = cube_divergence_stats(grid, &wf);
        if checked > 0 && div_ok < 0.99 {
            return Err(Error::numerics(format!(
                "component {comp}: face windings violate cube closedness on {:.1}% of cubes",
                100.0 * (1.0 - div_ok)
            )));
        }
        // Pierced faces per cell, with flow direction: winding w through face
        // (axis, node) means |w| strands crossing in sign(w) axis direction.
        // Cell behind the face exits, cell ahead enters.
        #[derive(Clone)]
        struct Crossing {
            face: Face,
            out_of: Option<usize>,
            into: Option<usize>,
        }
        let mut crossings: Vec<Crossing> = Vec::new();
        for (&face, &w) in &wf.nonzero {
            let mi = grid.unravel(face.node);
            let ahead = if mi[face.axis] + 1 < grid.dims[face.axis] {
                Some(face.node)
            } else {
                None
            };
            let behind = if mi[face.axis] > 0 {
                Some(face.node - grid.strides[face.axis])
            } else {
                None
            };
            let (src, dst) = if w > 0 { (behind, ahead) } else { (ahead, behind) };
            for _ in 0..w.unsigned_abs() {
                crossings.push(Crossing {
                    face,
                    out_of: src,
                    into: dst,
                });
            }
        }
        // Index crossings by the cell they leave and the cell they enter.
        let mut outgoing: HashMap<usize, Vec<usize>> = HashMap::new();
        let mut incoming: HashMap<usize, Vec<usize>> = HashMap::new();
        for (ci, cr) in crossings.iter().enumerate() {
            if let Some(cell) = cr.out_of {
                outgoing.entry(cell).or_default().push(ci);
            }
            if let Some(cell) = cr.into {
                incoming.entry(cell).or_default().push(ci);
            }
        }
        for v in outgoing.values_mut().chain(incoming.values_mut()) {
            v.sort_by_key(|&ci| (crossings[ci].face.axis, crossings[ci].face.node));
        }
        total_vortex_cells += outgoing.len().max(incoming.len());
        // Walk chains: start from crossings entering a cell with no matching
        // exit (dangling heads) plus boundary entries; consume greedily by
        // nearest exit face.
        let face_center = |f: &Face| -> Vec<f64> {
            let mi = grid.unravel(f.node);
            let mut x = grid.point(&mi);
            let b = (f.axis + 1) % 3;
            let c = (f.axis + 2) % 3;
            x[b] += 0.5 * h;
            x[c] += 0.5 * h;
            x
        };
        let cell_center = |cell: usize| -> Vec<f64> {
            let mi = grid.unravel(cell);
            let mut x = grid.point(&mi);
            for v in x.iter_mut() {
                *v += 0.5 * h;
            }
            x
        };
        let mut consumed = vec![false; crossings.len()];
        let mut steps: Vec<(usize, usize)> = Vec::new();
        // Deterministic seed order: all crossings sorted by face.
        let mut seed_order: Vec<usize> = (0..crossings.len()).collect();
        seed_order.sort_by_key(|&ci| (crossings[ci].face.axis, crossings[ci].face.node));
        for &start in &seed_order {
            if consumed[start] {
                continue;
            }
            // Only seed at a chain head: a crossing whose source cell has no
            // unconsumed incoming crossing (or no source cell at all).
            let is_head = match crossings[start].out_of {
                None => true,
                Some(cell) => incoming
                    .get(&cell)
                    .map_or(true, |list| list.iter().all(|&ci| consumed[ci] || ci == start)),
            };
            if !is_head {
                continue;
            }
            let mut cur = start;
            consumed[cur] = true;
            loop {
                let Some(cell) = crossings[cur].into else {
                    break;
                };
                // Find the nearest unconsumed exit from this cell.
                let Some(list) = outgoing.get(&cell) else {
                    break;
                };
                let here = face_center(&crossings[cur].face);
                let mut next: Option<(f64, usize)> = None;
                for &ci in list {
                    if consumed[ci] {
                        continue;
                    }
                    let d = linalg::dist(&here, &face_center(&crossings[ci].face));
                    if next.map_or(true, |(bd, _)| d < bd) {
                        next = Some((d, ci));
                    }
                }
                let Some((_, ci)) = next else {
                    break;
                };
                let from = crossings[ci].out_of.unwrap();
                let _ = cell_center(from);
                if let Some(to) = crossings[ci].into {
                    steps.push((from, to));
                } else {
                    // Exits the valid region; record a half step so the
                    // boundary cell is kept.
                    steps.push((from, from));
                }
                consumed[ci] = true;
                cur = ci;
            }
        }
        // Leftovers are closed loops (physical or branch-seam noise): thread
        // them from any remaining crossing.
        for &start in &seed_order {
            if consumed[start] {
                continue;
            }
            let mut cur = start;
            consumed[cur] = true;
            let mut loop_steps: Vec<(usize, usize)> = Vec::new();
            if let (Some(from), Some(to)) = (crossings[cur].out_of, crossings[cur].into) {
                loop_steps.push((from, to));
            }
            loop {
                let Some(cell) = crossings[cur].into else {
                    break;
                };
                let Some(list) = outgoing.get(&cell) else {
                    break;
                };
                let here = face_center(&crossings[cur].face);
                let mut next_c: Option<(f64, usize)> = None;
                for &ci in list {
                    if consumed[ci] {
                        continue;
                    }
                    let d = linalg::dist(&here, &face_center(&crossings[ci].face));
                    if next_c.map_or(true, |(bd, _)| d < bd) {
                        next_c = Some((d, ci));
                    }
                }
                let Some((_, ci)) = next_c else {
                    break;
                };
                if let (Some(from), Some(to)) = (crossings[ci].out_of, crossings[ci].into) {
                    loop_steps.push((from, to));
                }
                consumed[ci] = true;
                cur = ci;
            }
            // Short closed loops are sub-cell lattice noise and are dropped;
            // longer structures are kept.
            if loop_steps.len() >= 8 {
                steps.extend(loop_steps);
            } else {
                discarded_noise += loop_steps.len();
            }
        }
        // Unresolved cells: an in/out imbalance away from flags, the mask and
        // the terminals means the pairing genuinely failed there.
        let near_terminal = |cell: usize| {
            let x = cell_center(cell);
            terminals
                .iter()
                .any(|t| linalg::dist(t, &x) <= 3.0 * h + 1e-12)
        };
        let flagged_faces: std::collections::HashSet<Face> = wf.flagged.iter().copied().collect();
        for (&cell, ins) in &incoming {
            let n_in = ins.len();
            let n_out = outgoing.get(&cell).map_or(0, |v| v.len());
            if n_in == n_out || near_terminal(cell) {
                continue;
            }
            // Touching the mask or a flagged face explains a dead end.
            let mi = grid.unravel(cell);
            let mut benign = (0..3).any(|a| mi[a] + 1 >= grid.dims[a]);
            if !benign {
                'corners: for corner in 0..8usize {
                    let mut idx = cell;
                    for (a, stride) in grid.strides.iter().enumerate() {
                        if corner >> a & 1 == 1 {
                            idx += stride;
                        }
                    }
                    if grid.class[idx] == NodeClass::Excluded {
                        benign = true;
                        break 'corners;
                    }
                }
            }
            if !benign {
                for axis in 0..3 {
                    for node in [cell, cell + grid.strides[axis]] {
                        if flagged_faces.contains(&Face { axis, node }) {
                            benign = true;
                        }
                    }
                }
            }
            if !benign {
                unresolved += n_in.abs_diff(n_out);
            }
        }
        steps.retain(|(a, b)| a != b);
        steps.sort_unstable();
        step_lists.push(steps);
    }
    if total_vortex_cells > 0 && unresolved * 100 > total_vortex_cells {
        return Err(Error::numerics(format!(
            "{unresolved} unresolved vortex crossings out of {total_vortex_cells} cells"
        )));
    }

    // Merge components on the cell graph: accumulate signed multiplicities
    // per undirected cell pair.
    let mut pair_g: HashMap<(usize, usize), Vec<i64>> = HashMap::new();
    for (comp, steps) in step_lists.iter().enumerate() {
        for &(a, b) in steps {
            let (key, sign) = if a <= b { ((a, b), 1) } else { ((b, a), -1) };
            pair_g.entry(key).or_insert_with(|| vec![0; m])[comp] += sign;
        }
    }
    pair_g.retain(|_, g| g.iter().any(|&v| v != 0));

    // Orient each pair so the multiplicity vector has a positive leading
    // entry, then contract degree-2 chain nodes with identical g.
    let mut adjacency: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut edges: Vec<(usize, usize, Vec<i64>)> = Vec::new();
    for ((a, b), mut g) in pair_g {
        if g.iter().find(|&&v| v != 0).map_or(false, |&v| v < 0) {
            g.iter_mut().for_each(|v| *v = -*v);
            edges.push((b, a, g));
        } else {
            edges.push((a, b, g));
        }
    }
    edges.sort();
    for (k, (a, b, _)) in edges.iter().enumerate() {
        adjacency.entry(*a).or_default().push(k);
        adjacency.entry(*b).or_default().push(k);
    }
    let cell_center = |cell: usize| -> Vec<f64> {
        let mi = grid.unravel(cell);
        let mut x = grid.point(&mi);
        for v in x.iter_mut() {
            *v += 0.5 * h;
        }
        x
    };
    // Chain walk: nodes with degree != 2 or mismatched g are breakpoints.
    let mut used = vec![false; edges.len()];
    let mut polylines: Vec<(Vec<Vec<f64>>, Vec<i64>)> = Vec::new();
    let is_through = |cell: usize, adjacency: &HashMap<usize, Vec<usize>>, edges: &[(usize, usize, Vec<i64>)]| -> bool {
        let Some(inc) = adjacency.get(&cell) else {
            return false;
        };
        inc.len() == 2 && edges[inc[0]].2 == edges[inc[1]].2 && {
            // Same g and consistent direction (one in, one out).
            let (a0, b0) = (edges[inc[0]].0, edges[inc[0]].1);
            let (a1, b1) = (edges[inc[1]].0, edges[inc[1]].1);
            (b0 == cell && a1 == cell) || (b1 == cell && a0 == cell)
        }
    };
    for start in 0..edges.len() {
        if used[start] {
            continue;
        }
        // Extend backwards to a breakpoint first.
        let mut first = start;
        let mut head = edges[start].0;
        loop {
            if !is_through(head, &adjacency, &edges) {
                break;
            }
            let inc = &adjacency[&head];
            let prev = if inc[0] == first { inc[1] } else { inc[0] };
            if used[prev] || prev == first {
                break;
            }
            first = prev;
            head = edges[first].0;
            if first == start {
                break; // loop
            }
        }
        // Walk forward collecting cells.
        let mut chain_cells = vec![edges[first].0, edges[first].1];
        let g = edges[first].2.clone();
        used[first] = true;
        let mut cur = first;
        loop {
            let tail = edges[cur].1;
            if !is_through(tail, &adjacency, &edges) {
                break;
            }
            let inc = &adjacency[&tail];
            let next = if inc[0] == cur { inc[1] } else { inc[0] };
            if used[next] || edges[next].2 != g || edges[next].0 != tail {
                break;
            }
            used[next] = true;
            chain_cells.push(edges[next].1);
            cur = next;
        }
        let pts: Vec<Vec<f64>> = chain_cells.iter().map(|&c| cell_center(c)).collect();
        polylines.push((pts, g));
    }

    // Snap dangling endpoints onto terminals within 3h, then simplify each
    // polyline within 2h.
    let mut endpoint_count: HashMap<Vec<i64>, usize> = HashMap::new();
    let quant = |x: &[f64]| -> Vec<i64> { x.iter().map(|v| (v / (0.25 * h)).round() as i64).collect() };
    for (pts, _) in &polylines {
        for p in [pts.first().unwrap(), pts.last().unwrap()] {
            *endpoint_count.entry(quant(p)).or_default() += 1;
        }
    }
    for (pts, _) in polylines.iter_mut() {
        for end in [0, 1] {
            let p = if end == 0 { pts[0].clone() } else { pts.last().unwrap().clone() };
            // Dangling or junction endpoints may snap; mid-chain points never.
            if let Some(t) = terminals
                .iter()
                .find(|t| linalg::dist(t, &p) <= 3.0 * h + 1e-12)
            {
                if end == 0 {
                    pts[0] = t.clone();
                } else {
                    *pts.last_mut().unwrap() = t.clone();
                }
            }
        }
        *pts = simplify_polyline(pts, 2.0 * h);
    }

    let mut edges_out = Vec::new();
    for (pts, g) in &polylines {
        for w in pts.windows(2) {
            if linalg::dist(&w[0], &w[1]) > 1e-12 {
                edges_out.push(CurrentEdge {
                    a: w[0].clone(),
                    b: w[1].clone(),
                    g: g.clone(),
                });
            }
        }
    }
    if edges_out.is_empty() {
        return Err(Error::numerics(
            "no vortex lines found: extracted boundary cannot match the prescribed one",
        ));
    }
    let current = MultiplicityCurrent::new(m + 1, edges_out)?.sorted();

    // Boundary check in the graph sense.
    let boundary = boundary_of(&current);
    let sink = &terminals[terminals.len() - 1];
    let mut boundary_match = true;
    for (i, comp_boundary) in boundary.iter().enumerate() {
        let ok = comp_boundary.len() == 2
            && comp_boundary
                .iter()
                .any(|(p, w)| *w == -1 && linalg::dist(p, &terminals[i]) < 1e-9)
            && comp_boundary
                .iter()
                .any(|(p, w)| *w == 1 && linalg::dist(p, sink) < 1e-9);
        boundary_match &= ok;
    }

    Ok(ExtractedNetwork {
        n_terminals: m + 1,
        polylines,
        current,
        unresolved,
        discarded_noise,
        boundary_match,
    })
}

/// Douglas-Peucker simplification with an absolute deviation tolerance.
fn simplify_polyline(pts: &[Vec<f64>], tol: f64) -> Vec<Vec<f64>> {
    if pts.len() <= 2 {
        return pts.to_vec();
    }
    let mut keep = vec![false; pts.len()];
    keep[0] = true;
    keep[pts.len() - 1] = true;
    let mut stack = vec![(0usize, pts.len() - 1)];
    while let Some((lo, hi)) = stack.pop() {
        if hi <= lo + 1 {
            continue;
        }
        let mut worst = (0.0f64, lo);
        for k in lo + 1..hi {
            let d = linalg::dist_to_segment(&pts[k], &pts[lo], &pts[hi]);
            if d > worst.0 {
                worst = (d, k);
            }
        }
        if worst.0 > tol {
            keep[worst.1] = true;
            stack.push((lo, worst.1));
            stack.push((worst.1, hi));
        }
    }
    pts.iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(p, _)| p.clone())
        .collect()
}

/// Comparison metrics between an extracted network and a reference current.
#[derive(Debug, Clone)]
pub struct CompareMetrics {
    pub mass_a: f64,
    pub mass_b: f64,
    /// `|mass_a - mass_b| / mass_b`.
    pub mass_rel_err: f64,
    /// Symmetric Hausdorff distance between the supports.
    pub hausdorff: f64,
    /// Boundaries agree as weighted point sets per component.
    pub boundary_match: bool,
}

/// Mass gap, support Hausdorff distance, and boundary agreement.
pub fn compare_networks(
    a: &MultiplicityCurrent,
    b: &MultiplicityCurrent,
    psi: &PsiNorm,
) -> Result<CompareMetrics> {
    if a.components() != b.components() {
        return Err(Error::input("networks have different N"));
    }
    let mass_a = psi_mass(a, psi);
    let mass_b = psi_mass(b, psi);
    let sample = |c: &MultiplicityCurrent| -> Vec<Vec<f64>> {
        let total: f64 = c.edges.iter().map(|e| e.len()).sum();
        let spacing = (total / 4000.0).max(1e-4);
        let mut pts = Vec::new();
        for e in &c.edges {
            let len = e.len();
            let steps = (len / spacing).ceil() as usize;
            let d = linalg::sub(&e.b, &e.a);
            for k in 0..=steps {
                pts.push(linalg::axpy(&e.a, k as f64 / steps as f64, &d));
            }
        }
        pts
    };
    let pa = sample(a);
    let pb = sample(b);
    let one_sided = |from: &[Vec<f64>], to: &MultiplicityCurrent| -> f64 {
        from.par_iter()
            .map(|p| {
                to.edges
                    .iter()
                    .map(|e| linalg::dist_to_segment(p, &e.a, &e.b))
                    .fold(f64::INFINITY, f64::min)
            })
            .reduce(|| 0.0, f64::max)
    };
    let hausdorff = one_sided(&pa, b).max(one_sided(&pb, a));
    let boundary_match = boundaries_agree(a, b);
    Ok(CompareMetrics {
        mass_a,
        mass_b,
        mass_rel_err: (mass_a - mass_b).abs() / mass_b,
        hausdorff,
        boundary_match,
    })
}

fn boundaries_agree(a: &MultiplicityCurrent, b: &MultiplicityCurrent) -> bool {
    let ba = boundary_of(a);
    let bb = boundary_of(b);
    if ba.len() != bb.len() {
        return false;
    }
    for (ca, cb) in ba.iter().zip(&bb) {
        if ca.len() != cb.len() {
            return false;
        }
        for (p, w) in ca {
            if !cb
                .iter()
                .any(|(q, v)| v == w && linalg::dist(p, q) <= 1e-6)
            {
                return false;
            }
        }
    }
    true
}
