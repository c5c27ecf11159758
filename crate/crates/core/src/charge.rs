//! Charge densities and per-atom / per-subgroup charge integration.
//!
//! The charge density is the squared NTO amplitude; the charge of an atom is
//! the voxel-volume-scaled sum of the density over the voxels its segment
//! owns. All reductions run over fixed-size voxel chunks combined in chunk
//! order, so the reported numbers are bit-identical for any worker count.

use rayon::prelude::*;
use serde::Serialize;

use crate::cube::GridField;
use crate::error::{Error, Result};
use crate::molecule::{element_symbol, MoleculeSpec};
use crate::segmentation::LabelVolume;

/// Fixed reduction chunk: determinism requires chunk boundaries that do not
/// depend on the worker count.
const REDUCTION_CHUNK: usize = 1 << 15;

/// Per-atom and per-subgroup hole/particle charges with their differences.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChargeTable {
    pub per_atom_hole: Vec<f64>,
    pub per_atom_particle: Vec<f64>,
    /// particle minus hole, per atom
    pub per_atom_diff: Vec<f64>,
    pub per_subgroup_hole: Vec<f64>,
    pub per_subgroup_particle: Vec<f64>,
    pub per_subgroup_diff: Vec<f64>,
    pub total_hole: f64,
    pub total_particle: f64,
}

impl ChargeTable {
    /// Aggregate per-atom charges (for example from two different
    /// segmentations of the hole and particle densities) into a table.
    pub fn from_per_atom(
        per_atom_hole: Vec<f64>,
        per_atom_particle: Vec<f64>,
        molecule: &MoleculeSpec,
    ) -> ChargeTable {
        assemble_table(per_atom_hole, per_atom_particle, molecule)
    }
}

/// Square the field value-wise: `rho(x) = phi(x)^2`.
pub fn density(field: &GridField) -> GridField {
    field.map(|v| v * v)
}

/// Integral of the squared field over the whole grid, using the same chunked
/// fixed-order summation as [`atom_charges`], so a single-atom grid yields a
/// bit-identical number through either route.
pub fn total_charge(field: &GridField) -> f64 {
    let chunk_sums: Vec<f64> = field
        .values
        .par_chunks(REDUCTION_CHUNK)
        .map(|chunk| chunk.iter().map(|&v| v * v).sum::<f64>())
        .collect();
    chunk_sums.iter().sum::<f64>() * field.voxel_volume()
}

/// Charge per atom: voxel-volume times the sum of squared field values over
/// each atom's voxels. Voxels accumulate in ascending linear index within
/// fixed chunks; chunk partials combine in (chunk, atom) order.
pub fn atom_charges(
    field: &GridField,
    labels: &LabelVolume,
    atom_count: usize,
) -> Result<Vec<f64>> {
    if field.meta != labels.meta {
        return Err(Error::GridMismatch {
            left: "field",
            right: "labels",
        });
    }
    if let Some(&bad) = labels.labels.iter().find(|&&l| l as usize >= atom_count) {
        return Err(Error::AtomIndex {
            atom: bad as usize,
            count: atom_count,
        });
    }

    let partials: Vec<Vec<f64>> = field
        .values
        .par_chunks(REDUCTION_CHUNK)
        .zip(labels.labels.par_chunks(REDUCTION_CHUNK))
        .map(|(values, labels)| {
            let mut acc = vec![0.0; atom_count];
            for (&v, &l) in values.iter().zip(labels) {
                acc[l as usize] += v * v;
            }
            acc
        })
        .collect();

    let mut charges = vec![0.0; atom_count];
    for partial in &partials {
        for (total, part) in charges.iter_mut().zip(partial) {
            *total += part;
        }
    }
    let vol = field.voxel_volume();
    for c in &mut charges {
        *c *= vol;
    }
    Ok(charges)
}

/// Sum per-atom charges into subgroup charges, members in ascending index.
pub fn subgroup_charges(per_atom: &[f64], molecule: &MoleculeSpec) -> Vec<f64> {
    molecule
        .subgroups
        .iter()
        .map(|group| group.members.iter().map(|&a| per_atom[a]).sum())
        .collect()
}

/// Integrate hole and particle charges over a shared segmentation.
pub fn charge_table(
    hole: &GridField,
    particle: &GridField,
    labels: &LabelVolume,
    molecule: &MoleculeSpec,
) -> Result<ChargeTable> {
    if hole.meta != particle.meta {
        return Err(Error::GridMismatch {
            left: "hole",
            right: "particle",
        });
    }
    let n = molecule.atom_count();
    let per_atom_hole = atom_charges(hole, labels, n)?;
    let per_atom_particle = atom_charges(particle, labels, n)?;
    Ok(assemble_table(per_atom_hole, per_atom_particle, molecule))
}

fn assemble_table(
    per_atom_hole: Vec<f64>,
    per_atom_particle: Vec<f64>,
    molecule: &MoleculeSpec,
) -> ChargeTable {
    let per_atom_diff: Vec<f64> = per_atom_particle
        .iter()
        .zip(&per_atom_hole)
        .map(|(p, h)| p - h)
        .collect();
    let per_subgroup_hole = subgroup_charges(&per_atom_hole, molecule);
    let per_subgroup_particle = subgroup_charges(&per_atom_particle, molecule);
    let per_subgroup_diff: Vec<f64> = per_subgroup_particle
        .iter()
        .zip(&per_subgroup_hole)
        .map(|(p, h)| p - h)
        .collect();
    let total_hole = per_atom_hole.iter().sum();
    let total_particle = per_atom_particle.iter().sum();
    ChargeTable {
        per_atom_hole,
        per_atom_particle,
        per_atom_diff,
        per_subgroup_hole,
        per_subgroup_particle,
        per_subgroup_diff,
        total_hole,
        total_particle,
    }
}

/// Rescale a charge table so each field totals 100, recomputing differences
/// from the normalized values.
pub fn normalize_percent(table: &ChargeTable, molecule: &MoleculeSpec) -> Result<ChargeTable> {
    if !table.total_hole.is_finite() || table.total_hole <= 0.0 {
        return Err(Error::ZeroTotal { field: "hole" });
    }
    if !table.total_particle.is_finite() || table.total_particle <= 0.0 {
        return Err(Error::ZeroTotal { field: "particle" });
    }
    let hole_scale = 100.0 / table.total_hole;
    let particle_scale = 100.0 / table.total_particle;
    let per_atom_hole: Vec<f64> = table.per_atom_hole.iter().map(|v| v * hole_scale).collect();
    let per_atom_particle: Vec<f64> = table
        .per_atom_particle
        .iter()
        .map(|v| v * particle_scale)
        .collect();
    Ok(assemble_table(per_atom_hole, per_atom_particle, molecule))
}

/// One atom row of the exported table.
#[derive(Debug, Clone, Serialize)]
pub struct AtomChargeRow {
    pub atom: usize,
    pub element: String,
    pub subgroup: String,
    pub hole: f64,
    pub particle: f64,
    pub diff: f64,
}

/// One subgroup row, raw and (when totals are positive) in percent.
#[derive(Debug, Clone, Serialize)]
pub struct SubgroupChargeRow {
    pub subgroup: String,
    pub hole: f64,
    pub particle: f64,
    pub diff: f64,
    pub hole_percent: Option<f64>,
    pub particle_percent: Option<f64>,
    pub diff_percent: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChargeReport {
    pub atoms: Vec<AtomChargeRow>,
    pub subgroups: Vec<SubgroupChargeRow>,
    pub total_hole: f64,
    pub total_particle: f64,
    pub warnings: Vec<String>,
}

impl ChargeReport {
    pub fn new(table: &ChargeTable, molecule: &MoleculeSpec) -> Result<Self> {
        let atoms = molecule
            .atoms
            .iter()
            .map(|atom| {
                let j = molecule.subgroup_of(atom.index)?;
                Ok(AtomChargeRow {
                    atom: atom.index,
                    element: element_symbol(atom.element).to_string(),
                    subgroup: molecule.subgroups[j].name.clone(),
                    hole: table.per_atom_hole[atom.index],
                    particle: table.per_atom_particle[atom.index],
                    diff: table.per_atom_diff[atom.index],
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let percent = if table.total_hole > 0.0 && table.total_particle > 0.0 {
            Some(normalize_percent(table, molecule)?)
        } else {
            None
        };
        let subgroups = molecule
            .subgroups
            .iter()
            .enumerate()
            .map(|(j, group)| SubgroupChargeRow {
                subgroup: group.name.clone(),
                hole: table.per_subgroup_hole[j],
                particle: table.per_subgroup_particle[j],
                diff: table.per_subgroup_diff[j],
                hole_percent: percent.as_ref().map(|p| p.per_subgroup_hole[j]),
                particle_percent: percent.as_ref().map(|p| p.per_subgroup_particle[j]),
                diff_percent: percent.as_ref().map(|p| p.per_subgroup_diff[j]),
            })
            .collect();

        let mut warnings = Vec::new();
        for (name, total) in [
            ("hole", table.total_hole),
            ("particle", table.total_particle),
        ] {
            if (total - 1.0).abs() > 0.05 {
                warnings.push(format!(
                    "{name} field integrates to {total:.6}, expected a normalized NTO near 1"
                ));
            }
        }
        Ok(ChargeReport {
            atoms,
            subgroups,
            total_hole: table.total_hole,
            total_particle: table.total_particle,
            warnings,
        })
    }

    /// Two-block CSV: the atom table, a blank line, then the subgroup table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("atom,element,subgroup,q_hole,q_particle,q_diff\n");
        for row in &self.atoms {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.atom, row.element, row.subgroup, row.hole, row.particle, row.diff
            ));
        }
        out.push('\n');
        out.push_str("subgroup,Q_hole,Q_particle,Q_diff,Q_hole_pct,Q_particle_pct,Q_diff_pct\n");
        let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &self.subgroups {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                row.subgroup,
                row.hole,
                row.particle,
                row.diff,
                fmt_opt(row.hole_percent),
                fmt_opt(row.particle_percent),
                fmt_opt(row.diff_percent)
            ));
        }
        out
    }
}
