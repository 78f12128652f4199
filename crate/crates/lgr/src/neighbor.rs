//! Periodic fixed-radius neighbor search via cell lists.
//!
//! The result is a CSR structure: `offsets[i]..offsets[i+1]` indexes the
//! sorted neighbor ids of particle `i`. A pair `(i, j)` is a neighbor pair
//! iff the minimum-image distance is **strictly** below the radius, so the
//! cell-list path and any brute-force oracle agree on boundary ties.

use rayon::prelude::*;
use thiserror::Error;

use crate::geom::{PeriodicBox, Vec3};

#[derive(Debug, Error)]
pub enum NeighborError {
    #[error("neighbor search needs at least one particle")]
    EmptyInput,
    #[error("search radius must be positive and finite, got {radius}")]
    InvalidRadius { radius: f64 },
    #[error("search radius {radius} exceeds half the smallest box extent ({max}); minimum-image pairs would be ambiguous")]
    RadiusTooLarge { radius: f64, max: f64 },
}

/// Fixed-radius neighbor lists in CSR layout.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborList {
    offsets: Vec<usize>,
    indices: Vec<u32>,
    radius: f64,
}

impl NeighborList {
    /// Neighbor ids of particle `i`, sorted ascending.
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.indices[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn n_particles(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of directed edges (twice the pair count).
    pub fn n_edges(&self) -> usize {
        self.indices.len()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn mean_degree(&self) -> f64 {
        self.indices.len() as f64 / self.offsets.len().saturating_sub(1).max(1) as f64
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }
}

/// Average interparticle distance `(volume / N)^{1/3}` for `N` particles.
///
/// # Panics
/// Panics if `n` is zero.
pub fn average_interparticle_distance(n: usize, domain: &PeriodicBox) -> f64 {
    assert!(n > 0, "average interparticle distance needs N > 0");
    (domain.volume() / n as f64).cbrt()
}

/// Builds neighbor lists for wrapped positions in a periodic box.
///
/// Uses a cell grid with at least radius-sized cells and a 27-cell stencil;
/// boxes too small for three cells per axis fall back to an `O(N²)` sweep.
/// Output is deterministic regardless of internal parallelism.
pub fn build_neighbor_list(
    positions: &[Vec3],
    domain: &PeriodicBox,
    radius: f64,
) -> Result<NeighborList, NeighborError> {
    if positions.is_empty() {
        return Err(NeighborError::EmptyInput);
    }
    if radius <= 0.0 || !radius.is_finite() {
        return Err(NeighborError::InvalidRadius { radius });
    }
    let max = 0.5 * domain.min_extent();
    if radius > max {
        return Err(NeighborError::RadiusTooLarge { radius, max });
    }

    let e = domain.extents();
    let mut dims = [
        (e.x / radius).floor() as usize,
        (e.y / radius).floor() as usize,
        (e.z / radius).floor() as usize,
    ];
    // A radius much smaller than the box would allocate absurdly many cells;
    // coarsen towards ~8 cells per particle (cells may only grow, which
    // keeps the ≥radius cell-size guarantee).
    let max_cells = (8 * positions.len()).max(64);
    let n_cells = dims.iter().product::<usize>();
    if n_cells > max_cells {
        let scale = (n_cells as f64 / max_cells as f64).cbrt();
        for d in &mut dims {
            *d = ((*d as f64 / scale).floor() as usize).max(1);
        }
    }

    let rows = if dims.iter().any(|&d| d < 3) {
        brute_force_rows(positions, domain, radius)
    } else {
        cell_list_rows(positions, domain, radius, dims)
    };

    let mut offsets = Vec::with_capacity(positions.len() + 1);
    offsets.push(0usize);
    let mut total = 0usize;
    for row in &rows {
        total += row.len();
        offsets.push(total);
    }
    let mut indices = Vec::with_capacity(total);
    for row in rows {
        indices.extend(row);
    }
    Ok(NeighborList { offsets, indices, radius })
}

fn brute_force_rows(positions: &[Vec3], domain: &PeriodicBox, radius: f64) -> Vec<Vec<u32>> {
    let r2 = radius * radius;
    positions
        .par_iter()
        .enumerate()
        .map(|(i, &pi)| {
            let mut row = Vec::new();
            for (j, &pj) in positions.iter().enumerate() {
                if i != j && domain.min_image(pi, pj).norm_sq() < r2 {
                    row.push(j as u32);
                }
            }
            row
        })
        .collect()
}

fn cell_list_rows(
    positions: &[Vec3],
    domain: &PeriodicBox,
    radius: f64,
    dims: [usize; 3],
) -> Vec<Vec<u32>> {
    let e = domain.extents();
    let n_cells = dims[0] * dims[1] * dims[2];

    // Map each particle to its cell; the scale/clamp guards against a
    // wrapped coordinate mapping to dims[k] through float rounding.
    let cell_of = |p: Vec3| -> usize {
        let cx = ((p.x / e.x * dims[0] as f64) as usize).min(dims[0] - 1);
        let cy = ((p.y / e.y * dims[1] as f64) as usize).min(dims[1] - 1);
        let cz = ((p.z / e.z * dims[2] as f64) as usize).min(dims[2] - 1);
        (cz * dims[1] + cy) * dims[0] + cx
    };

    // Bucket particles per cell in CSR form; fill order keeps buckets sorted.
    let mut counts = vec![0usize; n_cells + 1];
    let cells: Vec<usize> = positions.iter().map(|&p| cell_of(p)).collect();
    for &c in &cells {
        counts[c + 1] += 1;
    }
    for k in 0..n_cells {
        counts[k + 1] += counts[k];
    }
    let mut bucket_fill = counts.clone();
    let mut buckets = vec![0u32; positions.len()];
    for (i, &c) in cells.iter().enumerate() {
        buckets[bucket_fill[c]] = i as u32;
        bucket_fill[c] += 1;
    }

    let r2 = radius * radius;
    positions
        .par_iter()
        .enumerate()
        .map(|(i, &pi)| {
            let cx = (cells[i] % dims[0]) as isize;
            let cy = (cells[i] / dims[0] % dims[1]) as isize;
            let cz = (cells[i] / (dims[0] * dims[1])) as isize;
            let mut row = Vec::new();
            for dz in -1isize..=1 {
                let z = (cz + dz).rem_euclid(dims[2] as isize) as usize;
                for dy in -1isize..=1 {
                    let y = (cy + dy).rem_euclid(dims[1] as isize) as usize;
                    for dx in -1isize..=1 {
                        let x = (cx + dx).rem_euclid(dims[0] as isize) as usize;
                        let c = (z * dims[1] + y) * dims[0] + x;
                        for &j in &buckets[counts[c]..counts[c + 1]] {
                            if j as usize != i
                                && domain.min_image(pi, positions[j as usize]).norm_sq() < r2
                            {
                                row.push(j);
                            }
                        }
                    }
                }
            }
            // Stencil scan order is cell-major, not id-major.
            row.sort_unstable();
            row
        })
        .collect()
}
