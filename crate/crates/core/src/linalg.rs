//! Small dense vector helpers for points in `R^n` with `n` known only at
//! runtime (typically 3, occasionally 4 or 5).
//!
//! Points and directions are plain `&[f64]` slices; nothing here allocates in
//! the hot paths except where a fresh vector is the result.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], t: f64) -> Vec<f64> {
    a.iter().map(|x| x * t).collect()
}

/// `a + t * b`.
pub fn axpy(a: &[f64], t: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + t * y).collect()
}

pub fn normalize(a: &[f64]) -> Vec<f64> {
    let n = norm(a);
    debug_assert!(n > 0.0);
    scale(a, 1.0 / n)
}

/// Distance from `x` to the closed segment `[a, b]`.
pub fn dist_to_segment(x: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(&ab, &ab);
    if len2 == 0.0 {
        return dist(x, a);
    }
    let t = (dot(&sub(x, a), &ab) / len2).clamp(0.0, 1.0);
    let p = axpy(a, t, &ab);
    dist(x, &p)
}

/// Minimal distance between two closed segments `[a1,b1]` and `[a2,b2]`,
/// by dense parameter sampling refined around the best cell. Exact enough for
/// clearance certificates at the tolerances used in this crate.
pub fn segment_segment_distance(a1: &[f64], b1: &[f64], a2: &[f64], b2: &[f64]) -> f64 {
    let mut lo = (0.0f64, 1.0f64);
    let mut best = f64::INFINITY;
    let d1 = sub(b1, a1);
    // Three refinement rounds of a 33-point scan along segment 1; each point
    // uses the exact point-segment distance to segment 2.
    for _ in 0..3 {
        let (t0, t1) = lo;
        let mut best_t = t0;
        for k in 0..=32 {
            let t = t0 + (t1 - t0) * (k as f64) / 32.0;
            let p = axpy(a1, t, &d1);
            let d = dist_to_segment(&p, a2, b2);
            if d < best {
                best = d;
                best_t = t;
            }
        }
        let w = (t1 - t0) / 16.0;
        lo = ((best_t - w).max(0.0), (best_t + w).min(1.0));
    }
    best
}

/// Determinant of a small square matrix given by rows, via Gaussian
/// elimination with partial pivoting.
pub fn det(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len();
    let mut m: Vec<Vec<f64>> = rows.to_vec();
    let mut sign = 1.0;
    let mut d = 1.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if m[piv][col].abs() == 0.0 {
            return 0.0;
        }
        if piv != col {
            m.swap(piv, col);
            sign = -sign;
        }
        d *= m[col][col];
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    sign * d
}

/// Deterministic orthonormal frame of the hyperplane normal to the unit
/// direction `t`, as `n-1` row vectors.
///
/// Seeds Gram-Schmidt with the standard basis vector least aligned with `t`
/// (smallest `|t_j|`, ties to the lowest index), then takes the remaining
/// basis vectors in index order. The last frame vector is flipped if needed so
/// that `det[t, w_1, .., w_{n-1}] = +1`; this makes the transverse winding
/// orientation consistent with the segment orientation.
pub fn transverse_frame(t: &[f64]) -> Vec<Vec<f64>> {
    let n = t.len();
    let seed = (0..n)
        .min_by(|&i, &j| t[i].abs().total_cmp(&t[j].abs()))
        .unwrap();
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(n - 1);
    let order = std::iter::once(seed).chain((0..n).filter(|&j| j != seed));
    for j in order {
        if frame.len() == n - 1 {
            break;
        }
        let mut v = vec![0.0; n];
        v[j] = 1.0;
        // Orthogonalise against t and the frame collected so far.
        let tv = dot(&v, t);
        for (k, tk) in t.iter().enumerate() {
            v[k] -= tv * tk;
        }
        for w in &frame {
            let wv = dot(&v, w);
            for (k, wk) in w.iter().enumerate() {
                v[k] -= wv * wk;
            }
        }
        let nv = norm(&v);
        if nv > 1e-10 {
            frame.push(scale(&v, 1.0 / nv));
        }
    }
    debug_assert_eq!(frame.len(), n - 1);
    let mut rows = Vec::with_capacity(n);
    rows.push(t.to_vec());
    rows.extend(frame.iter().cloned());
    if det(&rows) < 0.0 {
        let last = frame.last_mut().unwrap();
        for v in last.iter_mut() {
            *v = -*v;
        }
    }
    frame
}
