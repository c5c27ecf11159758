//! Voxel-to-atom segmentation.
//!
//! The primary segmentation assigns each voxel center to the atom with the
//! smallest power distance `||x - p||^2 - r^2`, i.e. the discrete power
//! diagram (weighted Voronoi) seeded by the atom spheres. It depends only on
//! the grid geometry and the atoms, never on field values, so one labeling
//! serves both the hole and the particle field.
//!
//! A second, independent method follows discrete steepest ascent on a charge
//! density and assigns each local maximum to its nearest atom. It exists to
//! cross-check subgroup charges against the geometric segmentation.

use rayon::prelude::*;
use serde::Serialize;

use crate::cube::{GridField, GridMeta};
use crate::error::{Error, Result};
use crate::molecule::MoleculeSpec;

/// Dense per-voxel labels over the same grid as the source field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelVolume {
    pub meta: GridMeta,
    pub labels: Vec<u32>,
}

impl LabelVolume {
    /// Number of voxels carrying each label in `0..label_count`.
    pub fn histogram(&self, label_count: usize) -> Vec<usize> {
        let mut counts = vec![0usize; label_count];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Export as a scalar field (labels as reals) for external viewers.
    pub fn to_field(&self) -> GridField {
        let mut field = GridField::new(
            self.meta.clone(),
            self.labels.iter().map(|&l| l as f64).collect(),
        )
        .expect("label volume matches its own metadata");
        field.comments = [
            "segmentation labels".to_string(),
            "one label per voxel, stored as reals".to_string(),
        ];
        field
    }
}

/// Power distance from point `x` to a sphere at `p` with radius `r`:
/// `||x - p||^2 - r^2`.
#[inline]
pub fn power_distance(x: [f64; 3], p: [f64; 3], r: f64) -> f64 {
    let dx = x[0] - p[0];
    let dy = x[1] - p[1];
    let dz = x[2] - p[2];
    dx * dx + dy * dy + dz * dz - r * r
}

/// Label every voxel with the atom minimizing the power distance from the
/// voxel center. Ties go to the lowest atom index. The result depends only
/// on the grid geometry and the atom spheres.
pub fn segment_power_diagram(meta: &GridMeta, molecule: &MoleculeSpec) -> LabelVolume {
    let seeds: Vec<([f64; 3], f64)> = molecule
        .atoms
        .iter()
        .map(|a| (a.position, a.radius * a.radius))
        .collect();
    let [_, ny, nz] = meta.counts;

    let labels: Vec<u32> = (0..meta.voxel_count())
        .into_par_iter()
        .map(|idx| {
            let i = idx / (ny * nz);
            let j = (idx / nz) % ny;
            let k = idx % nz;
            let x = meta.position(i, j, k);
            let mut best = f64::INFINITY;
            let mut label = 0u32;
            for (a, (p, r2)) in seeds.iter().enumerate() {
                let dx = x[0] - p[0];
                let dy = x[1] - p[1];
                let dz = x[2] - p[2];
                let d = dx * dx + dy * dy + dz * dz - r2;
                if d < best {
                    best = d;
                    label = a as u32;
                }
            }
            label
        })
        .collect();

    LabelVolume {
        meta: meta.clone(),
        labels,
    }
}

/// Index of the atom nearest to `x` by Euclidean distance, ties to the
/// lowest atom index.
fn nearest_atom(x: [f64; 3], molecule: &MoleculeSpec) -> u32 {
    let mut best = f64::INFINITY;
    let mut label = 0u32;
    for atom in &molecule.atoms {
        let d = power_distance(x, atom.position, 0.0);
        if d < best {
            best = d;
            label = atom.index as u32;
        }
    }
    label
}

/// Offsets of the 26-neighborhood.
fn neighbor_offsets() -> Vec<[i64; 3]> {
    let mut out = Vec::with_capacity(26);
    for di in -1i64..=1 {
        for dj in -1i64..=1 {
            for dk in -1i64..=1 {
                if di != 0 || dj != 0 || dk != 0 {
                    out.push([di, dj, dk]);
                }
            }
        }
    }
    out
}

/// Segment by discrete steepest ascent on a non-negative density field.
///
/// Each voxel steps to its strictly greater 26-neighbor of maximal value
/// (ties: lowest linear index) until it reaches a voxel with no greater
/// neighbor; that maximum is assigned to the nearest atom and the whole path
/// inherits the label. A voxel with no greater neighbor is its own maximum,
/// so a uniform field degenerates to nearest-atom labeling.
pub fn segment_gradient_ascent(density: &GridField, molecule: &MoleculeSpec) -> LabelVolume {
    let meta = &density.meta;
    let [nx, ny, nz] = meta.counts;
    let offsets = neighbor_offsets();
    let values = &density.values;

    // Steepest strictly-ascending neighbor, or self at a local maximum.
    let mut next: Vec<u32> = (0..meta.voxel_count())
        .into_par_iter()
        .map(|idx| {
            let i = (idx / (ny * nz)) as i64;
            let j = ((idx / nz) % ny) as i64;
            let k = (idx % nz) as i64;
            let own = values[idx];
            let mut best_value = own;
            let mut best_index = idx;
            for off in &offsets {
                let (ni, nj, nk) = (i + off[0], j + off[1], k + off[2]);
                if ni < 0
                    || nj < 0
                    || nk < 0
                    || ni >= nx as i64
                    || nj >= ny as i64
                    || nk >= nz as i64
                {
                    continue;
                }
                let nidx = meta.linear_index(ni as usize, nj as usize, nk as usize);
                let v = values[nidx];
                if v > best_value || (v == best_value && best_index != idx && nidx < best_index) {
                    best_value = v;
                    best_index = nidx;
                }
            }
            best_index as u32
        })
        .collect();

    // Pointer jumping until every voxel points at its maximum. Paths are
    // strictly ascending in value, hence acyclic, and each round doubles the
    // compressed path length.
    loop {
        let jumped: Vec<u32> = next.par_iter().map(|&n| next[n as usize]).collect();
        if jumped == next {
            break;
        }
        next = jumped;
    }

    let maxima_labels: Vec<u32> = (0..meta.voxel_count())
        .into_par_iter()
        .map(|idx| {
            if next[idx] as usize == idx {
                let (i, j, k) = meta.grid_coords(idx);
                nearest_atom(meta.position(i, j, k), molecule)
            } else {
                u32::MAX
            }
        })
        .collect();

    let labels: Vec<u32> = next
        .par_iter()
        .map(|&root| maxima_labels[root as usize])
        .collect();

    LabelVolume {
        meta: meta.clone(),
        labels,
    }
}

/// Merge atom labels into subgroup labels.
pub fn subgroup_labels(lv: &LabelVolume, molecule: &MoleculeSpec) -> Result<LabelVolume> {
    let map: Vec<u32> = (0..molecule.atom_count())
        .map(|a| molecule.subgroup_of(a).map(|j| j as u32))
        .collect::<Result<_>>()?;
    let labels = lv
        .labels
        .iter()
        .map(|&l| {
            map.get(l as usize).copied().ok_or(Error::AtomIndex {
                atom: l as usize,
                count: molecule.atom_count(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(LabelVolume {
        meta: lv.meta.clone(),
        labels,
    })
}
