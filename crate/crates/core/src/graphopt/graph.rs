//! Pixel affinity graph with bilateral patch/spatial edge weights.

use rayon::prelude::*;

use crate::graphopt::OptConfig;
use crate::grid::ErpGrid;

/// Symmetric neighbor lists in compressed-row form.
///
/// Pixel `i`'s edges are `targets[starts[i]..starts[i + 1]]` with matching
/// `weights`. Every stored weight lies in `(0, 1]`, and `j` is listed for
/// `i` exactly as often as `i` is listed for `j`, with a bitwise-equal weight.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    width: usize,
    height: usize,
    window_radius: usize,
    starts: Vec<usize>,
    targets: Vec<u32>,
    weights: Vec<f64>,
}

impl NeighborGraph {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn window_radius(&self) -> usize {
        self.window_radius
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    /// `(neighbor index, weight)` pairs of pixel `i`.
    #[inline]
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.starts[i]..self.starts[i + 1];
        self.targets[range.clone()]
            .iter()
            .zip(&self.weights[range])
            .map(|(&j, &w)| (j as usize, w))
    }

    /// Weight of the first edge `i -> j`, if any.
    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.neighbors(i).find(|(k, _)| *k == j).map(|(_, w)| w)
    }
}

/// Builds the neighbor graph over an intensity image in `[0, 1]`.
///
/// Neighbors of `(x, y)` are the `(2r+1)^2 - 1` window offsets; columns wrap
/// modulo the width and rows beyond the poles are dropped. Edge weight is
/// `exp(-|Q_i - Q_j|_F^2 / 2 sigma_int^2) * exp(-|dx,dy|^2 / 2 sigma_spa^2)`
/// with `Q` the square patch around each pixel (rows clamped, columns wrapped).
pub fn build_graph(intensity: &ErpGrid<f64>, cfg: &OptConfig) -> NeighborGraph {
    let (w, h) = intensity.dims();
    let r = cfg.window_radius as isize;
    let half = (cfg.patch_size / 2) as isize;
    let inv_int = 1.0 / (2.0 * cfg.sigma_int * cfg.sigma_int);
    let inv_spa = 1.0 / (2.0 * cfg.sigma_spa * cfg.sigma_spa);
    let wrap = |x: isize| x.rem_euclid(w as isize) as usize;
    let clamp = |y: isize| y.clamp(0, h as isize - 1) as usize;

    // Patches laid out contiguously per pixel for cache-friendly comparison.
    let side = cfg.patch_size;
    let patches: Vec<f64> = (0..w * h)
        .into_par_iter()
        .flat_map_iter(|i| {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            (-half..=half).flat_map(move |py| {
                (-half..=half).map(move |px| *intensity.get(wrap(x + px), clamp(y + py)))
            })
        })
        .collect();
    let patch = |i: usize| &patches[i * side * side..(i + 1) * side * side];

    let offsets: Vec<(isize, isize)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| (dx, dy) != (0, 0))
        .collect();

    let rows: Vec<Vec<(usize, u32, f64)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut out = Vec::with_capacity(w * offsets.len());
            for x in 0..w {
                let i = y * w + x;
                let qi = patch(i);
                for &(dx, dy) in &offsets {
                    let jy = y as isize + dy;
                    if jy < 0 || jy >= h as isize {
                        continue;
                    }
                    let jx = wrap(x as isize + dx);
                    let j = jy as usize * w + jx;
                    if j == i {
                        continue;
                    }
                    let qj = patch(j);
                    let d2: f64 = qi.iter().zip(qj).map(|(a, b)| (a - b) * (a - b)).sum();
                    let s2 = (dx * dx + dy * dy) as f64;
                    let wij = (-d2 * inv_int).exp() * (-s2 * inv_spa).exp();
                    if wij > 0.0 {
                        out.push((i, j as u32, wij));
                    }
                }
            }
            out
        })
        .collect();

    let mut starts = vec![0usize; w * h + 1];
    let total: usize = rows.iter().map(Vec::len).sum();
    let mut targets = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    for (i, j, wij) in rows.into_iter().flatten() {
        starts[i + 1] += 1;
        targets.push(j);
        weights.push(wij);
    }
    for i in 0..w * h {
        starts[i + 1] += starts[i];
    }
    NeighborGraph {
        width: w,
        height: h,
        window_radius: cfg.window_radius,
        starts,
        targets,
        weights,
    }
}
