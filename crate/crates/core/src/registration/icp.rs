//! Point-to-point similarity ICP over a uniform-grid neighbor index.

use std::collections::HashMap;

use nalgebra::Vector3;

use super::estimate::umeyama;
use crate::liegroup::Sim3;

/// Uniform hash grid; radius queries are exact for radii up to the cell size.
#[derive(Debug, Clone)]
pub struct GridIndex {
    cell: f64,
    points: Vec<Vector3<f64>>,
    cells: HashMap<(i64, i64, i64), Vec<usize>>,
}

impl GridIndex {
    pub fn new(points: &[Vector3<f64>], cell: f64) -> Self {
        assert!(cell > 0.0, "cell size must be positive");
        let mut cells: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::cell_of(p, cell)).or_default().push(i);
        }
        Self {
            cell,
            points: points.to_vec(),
            cells,
        }
    }

    fn cell_of(p: &Vector3<f64>, cell: f64) -> (i64, i64, i64) {
        let f = |c: f64| (c / cell).floor() as i64;
        (f(p.x), f(p.y), f(p.z))
    }

    /// Nearest point within `radius` (≤ cell size); ties go to the lower index.
    pub fn nearest_within(&self, q: &Vector3<f64>, radius: f64) -> Option<(usize, f64)> {
        debug_assert!(radius <= self.cell * (1.0 + 1e-12));
        let (cx, cy, cz) = Self::cell_of(q, self.cell);
        let mut best: Option<(usize, f64)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(bucket) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) else {
                        continue;
                    };
                    for &i in bucket {
                        let d2 = (self.points[i] - q).norm_squared();
                        if d2 > radius * radius {
                            continue;
                        }
                        match best {
                            Some((bi, bd)) if d2 > bd || (d2 == bd && i > bi) => {}
                            _ => best = Some((i, d2)),
                        }
                    }
                }
            }
        }
        best.map(|(i, d2)| (i, d2.sqrt()))
    }

    pub fn point(&self, i: usize) -> &Vector3<f64> {
        &self.points[i]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IcpParams {
    pub iterations: usize,
    pub max_corr: f64,
    pub tolerance: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            iterations: 64,
            max_corr: 0.20,
            tolerance: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IcpResult {
    pub transform: Sim3,
    /// Fraction of source points with a correspondence at the final transform.
    pub fitness: f64,
    /// RMSE over the corresponded pairs.
    pub rmse: f64,
    pub iterations: usize,
}

struct Association {
    src: Vec<Vector3<f64>>,
    tgt: Vec<Vector3<f64>>,
    /// Source points with any target neighbor in range.
    reached: usize,
    rmse: f64,
}

/// Reciprocal nearest-neighbor pairs within `max_corr`.
fn associate(t: &Sim3, src: &[Vector3<f64>], index: &GridIndex, max_corr: f64) -> Association {
    let moved: Vec<Vector3<f64>> = src.iter().map(|p| t.act(p)).collect();
    let back = GridIndex::new(&moved, max_corr);
    let mut a = Association {
        src: Vec::new(),
        tgt: Vec::new(),
        reached: 0,
        rmse: 0.0,
    };
    let mut sq = 0.0;
    for (i, q) in moved.iter().enumerate() {
        let Some((j, d)) = index.nearest_within(q, max_corr) else {
            continue;
        };
        a.reached += 1;
        if back.nearest_within(index.point(j), max_corr).map(|x| x.0) == Some(i) {
            a.src.push(src[i]);
            a.tgt.push(*index.point(j));
            sq += d * d;
        }
    }
    if !a.src.is_empty() {
        a.rmse = (sq / a.src.len() as f64).sqrt();
    }
    a
}

/// Alternates reciprocal nearest-neighbor association and a full similarity
/// re-fit.
///
/// An update that would raise the association RMSE is discarded and the loop
/// stops, so the reported RMSE never increases across accepted iterations.
pub fn icp_refine(
    initial: &Sim3,
    src: &[Vector3<f64>],
    tgt: &[Vector3<f64>],
    params: &IcpParams,
) -> IcpResult {
    let mut out = IcpResult {
        transform: *initial,
        fitness: 0.0,
        rmse: 0.0,
        iterations: 0,
    };
    if src.is_empty() || tgt.is_empty() {
        return out;
    }
    let index = GridIndex::new(tgt, params.max_corr);
    let mut current = associate(initial, src, &index, params.max_corr);
    let mut t = *initial;
    for it in 1..=params.iterations {
        out.iterations = it;
        let Ok(next) = umeyama(&current.src, &current.tgt) else {
            break;
        };
        let next_assoc = associate(&next, src, &index, params.max_corr);
        if next_assoc.src.len() < 3 || next_assoc.rmse > current.rmse {
            break;
        }
        let change = next.max_abs_diff(&t);
        t = next;
        current = next_assoc;
        if change < params.tolerance {
            break;
        }
    }
    out.transform = t;
    out.fitness = current.reached as f64 / src.len() as f64;
    out.rmse = current.rmse;
    out
}
