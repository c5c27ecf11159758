//! Atom and subgroup model.
//!
//! Atoms are spheres (position in Bohr, van der Waals radius in Bohr) and a
//! molecule carries an ordered partition of its atoms into named subgroups.
//! The partition comes from a small JSON config; radii default to the Bondi
//! table and can be overridden per element or per atom.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::cube::{CubeAtomRecord, BOHR_PER_ANGSTROM};
use crate::error::{Error, Result};

/// Bondi van der Waals radii in Angstrom, indexed by atomic number.
/// Source: A. Bondi, J. Phys. Chem. 68, 441 (1964). Elements without a
/// Bondi value need an explicit radius override.
const BONDI_RADII_ANGSTROM: &[(u32, f64)] = &[
    (1, 1.20),  // H
    (2, 1.40),  // He
    (3, 1.82),  // Li
    (6, 1.70),  // C
    (7, 1.55),  // N
    (8, 1.52),  // O
    (9, 1.47),  // F
    (10, 1.54), // Ne
    (11, 2.27), // Na
    (12, 1.73), // Mg
    (14, 2.10), // Si
    (15, 1.80), // P
    (16, 1.80), // S
    (17, 1.75), // Cl
    (18, 1.88), // Ar
    (19, 2.75), // K
    (28, 1.63), // Ni
    (29, 1.40), // Cu
    (30, 1.39), // Zn
    (31, 1.87), // Ga
    (33, 1.85), // As
    (34, 1.90), // Se
    (35, 1.85), // Br
    (36, 2.02), // Kr
    (46, 1.63), // Pd
    (47, 1.72), // Ag
    (48, 1.58), // Cd
    (49, 1.93), // In
    (50, 2.17), // Sn
    (52, 2.06), // Te
    (53, 1.98), // I
    (54, 2.16), // Xe
    (78, 1.75), // Pt
    (79, 1.66), // Au
    (80, 1.55), // Hg
    (81, 1.96), // Tl
    (82, 2.02), // Pb
    (92, 1.86), // U
];

const ELEMENT_SYMBOLS: &[&str] = &[
    "X", "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S",
    "Cl", "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge",
    "As", "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd",
    "In", "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd",
    "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg",
    "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm",
    "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn",
    "Nh", "Fl", "Mc", "Lv", "Ts", "Og",
];

/// Bondi van der Waals radius in Bohr, if tabulated for this element.
pub fn bondi_radius_bohr(atomic_number: u32) -> Option<f64> {
    BONDI_RADII_ANGSTROM
        .iter()
        .find(|(z, _)| *z == atomic_number)
        .map(|(_, r)| r * BOHR_PER_ANGSTROM)
}

/// Element symbol for an atomic number, or "?" when out of range.
pub fn element_symbol(atomic_number: u32) -> &'static str {
    ELEMENT_SYMBOLS
        .get(atomic_number as usize)
        .copied()
        .unwrap_or("?")
}

fn atomic_number_of(symbol: &str) -> Option<u32> {
    ELEMENT_SYMBOLS
        .iter()
        .position(|s| s.eq_ignore_ascii_case(symbol))
        .filter(|&z| z > 0)
        .map(|z| z as u32)
}

/// One atom: stable 0-based index, element, position and radius in Bohr.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Atom {
    pub index: usize,
    pub element: u32,
    pub position: [f64; 3],
    pub radius: f64,
}

/// A named set of atom indices with an optional display color.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Subgroup {
    pub name: String,
    pub color: Option<[u8; 3]>,
    pub members: Vec<usize>,
}

/// A molecule plus its partition into subgroups. `subgroup_of` is total:
/// every atom belongs to exactly one subgroup.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MoleculeSpec {
    pub atoms: Vec<Atom>,
    pub subgroups: Vec<Subgroup>,
    atom_to_subgroup: Vec<usize>,
}

impl MoleculeSpec {
    /// Build from atoms and a validated partition. Members must be pairwise
    /// disjoint and cover all atoms.
    pub fn new(atoms: Vec<Atom>, subgroups: Vec<Subgroup>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::SubgroupConfig("molecule has no atoms".into()));
        }
        if subgroups.is_empty() {
            return Err(Error::SubgroupConfig("no subgroups defined".into()));
        }
        let mut seen = HashMap::new();
        for group in &subgroups {
            if group.name.is_empty() {
                return Err(Error::SubgroupConfig("subgroup name is empty".into()));
            }
        }
        for (j, group) in subgroups.iter().enumerate() {
            if subgroups[..j].iter().any(|g| g.name == group.name) {
                return Err(Error::SubgroupConfig(format!(
                    "duplicate subgroup name `{}`",
                    group.name
                )));
            }
            for &a in &group.members {
                if a >= atoms.len() {
                    return Err(Error::AtomIndex {
                        atom: a,
                        count: atoms.len(),
                    });
                }
                if let Some(&prev) = seen.get(&a) {
                    let prev: usize = prev;
                    return Err(Error::SubgroupOverlap {
                        atom: a,
                        first: subgroups[prev].name.clone(),
                        second: group.name.clone(),
                    });
                }
                seen.insert(a, j);
            }
        }
        let mut atom_to_subgroup = vec![usize::MAX; atoms.len()];
        for (a, slot) in atom_to_subgroup.iter_mut().enumerate() {
            match seen.get(&a) {
                Some(&j) => *slot = j,
                None => return Err(Error::AtomUncovered { atom: a }),
            }
        }
        for atom in &atoms {
            if atom.radius <= 0.0 {
                return Err(Error::SubgroupConfig(format!(
                    "atom {} has non-positive radius {}",
                    atom.index, atom.radius
                )));
            }
        }
        Ok(Self {
            atoms,
            subgroups,
            atom_to_subgroup,
        })
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn subgroup_count(&self) -> usize {
        self.subgroups.len()
    }

    /// The unique subgroup index containing `atom_index`.
    pub fn subgroup_of(&self, atom_index: usize) -> Result<usize> {
        self.atom_to_subgroup
            .get(atom_index)
            .copied()
            .ok_or(Error::AtomIndex {
                atom: atom_index,
                count: self.atoms.len(),
            })
    }

    pub fn subgroup_names(&self) -> Vec<String> {
        self.subgroups.iter().map(|g| g.name.clone()).collect()
    }
}

/// Atom list entry in the config: a plain index or an inclusive range "5-12".
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum AtomSelector {
    Index(usize),
    Range(String),
}

impl AtomSelector {
    fn expand(&self, into: &mut Vec<usize>) -> Result<()> {
        match self {
            AtomSelector::Index(i) => into.push(*i),
            AtomSelector::Range(spec) => {
                let bad = || Error::SubgroupConfig(format!("bad atom range `{spec}`"));
                let (lo, hi) = spec.split_once('-').ok_or_else(bad)?;
                let lo: usize = lo.trim().parse().map_err(|_| bad())?;
                let hi: usize = hi.trim().parse().map_err(|_| bad())?;
                if hi < lo {
                    return Err(bad());
                }
                into.extend(lo..=hi);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct SubgroupEntry {
    pub name: String,
    /// Omitted for at most one catch-all group (conventionally "REST"),
    /// which absorbs every atom not listed elsewhere.
    #[serde(default)]
    pub atoms: Option<Vec<AtomSelector>>,
    /// "#rrggbb"
    #[serde(default)]
    pub color: Option<String>,
}

/// Radius overrides, in the unit given by `radius_unit` (default Angstrom).
#[derive(Debug, Clone, Default, Deserialize)]
pub struct RadiusOverrides {
    /// Keyed by element symbol ("Cu") or atomic number ("29").
    #[serde(default)]
    pub element: HashMap<String, f64>,
    /// Keyed by 0-based atom index.
    #[serde(default)]
    pub atom: HashMap<String, f64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SubgroupConfig {
    pub subgroups: Vec<SubgroupEntry>,
    #[serde(default)]
    pub radius_overrides: RadiusOverrides,
    /// "angstrom" (default) or "bohr".
    #[serde(default = "default_radius_unit")]
    pub radius_unit: String,
}

fn default_radius_unit() -> String {
    "angstrom".to_string()
}

impl SubgroupConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::SubgroupConfig(e.to_string()))
    }
}

fn parse_color(text: &str) -> Result<[u8; 3]> {
    let hex = text.strip_prefix('#').unwrap_or(text);
    if hex.len() != 6 {
        return Err(Error::SubgroupConfig(format!("bad color `{text}`")));
    }
    let parse = |s: &str| {
        u8::from_str_radix(s, 16).map_err(|_| Error::SubgroupConfig(format!("bad color `{text}`")))
    };
    Ok([parse(&hex[0..2])?, parse(&hex[2..4])?, parse(&hex[4..6])?])
}

/// Assemble a molecule from cube atom records and a subgroup config.
///
/// Radii are taken from per-atom overrides, then per-element overrides, then
/// the built-in Bondi table; an element outside all three is an error.
pub fn build_molecule(
    cube_atoms: &[CubeAtomRecord],
    config: &SubgroupConfig,
) -> Result<MoleculeSpec> {
    let to_bohr = match config.radius_unit.to_ascii_lowercase().as_str() {
        "angstrom" => BOHR_PER_ANGSTROM,
        "bohr" => 1.0,
        other => {
            return Err(Error::SubgroupConfig(format!(
                "radius_unit must be `angstrom` or `bohr`, got `{other}`"
            )))
        }
    };

    let mut element_radius: HashMap<u32, f64> = HashMap::new();
    for (key, radius) in &config.radius_overrides.element {
        let z = key
            .parse::<u32>()
            .ok()
            .or_else(|| atomic_number_of(key))
            .ok_or_else(|| Error::SubgroupConfig(format!("unknown element `{key}`")))?;
        element_radius.insert(z, radius * to_bohr);
    }
    let mut atom_radius: HashMap<usize, f64> = HashMap::new();
    for (key, radius) in &config.radius_overrides.atom {
        let index = key
            .parse::<usize>()
            .map_err(|_| Error::SubgroupConfig(format!("bad atom index `{key}`")))?;
        atom_radius.insert(index, radius * to_bohr);
    }

    let atoms: Vec<Atom> = cube_atoms
        .iter()
        .enumerate()
        .map(|(index, rec)| {
            let radius = atom_radius
                .get(&index)
                .copied()
                .or_else(|| element_radius.get(&rec.atomic_number).copied())
                .or_else(|| bondi_radius_bohr(rec.atomic_number))
                .ok_or(Error::UnknownRadius {
                    element: rec.atomic_number,
                })?;
            Ok(Atom {
                index,
                element: rec.atomic_number,
                position: rec.position,
                radius,
            })
        })
        .collect::<Result<_>>()?;

    let mut rest_slot: Option<usize> = None;
    let mut groups = Vec::with_capacity(config.subgroups.len());
    for (j, entry) in config.subgroups.iter().enumerate() {
        let color = entry.color.as_deref().map(parse_color).transpose()?;
        let members = match &entry.atoms {
            Some(selectors) => {
                let mut members = Vec::new();
                for sel in selectors {
                    sel.expand(&mut members)?;
                }
                members.sort_unstable();
                members.dedup();
                members
            }
            None => {
                if rest_slot.is_some() {
                    return Err(Error::SubgroupConfig(
                        "more than one catch-all subgroup".into(),
                    ));
                }
                rest_slot = Some(j);
                Vec::new()
            }
        };
        groups.push(Subgroup {
            name: entry.name.clone(),
            color,
            members,
        });
    }

    if let Some(j) = rest_slot {
        let mut listed = vec![false; cube_atoms.len()];
        for (g, group) in groups.iter().enumerate() {
            if g == j {
                continue;
            }
            for &a in &group.members {
                if a < listed.len() {
                    listed[a] = true;
                }
            }
        }
        groups[j].members = (0..cube_atoms.len()).filter(|&a| !listed[a]).collect();
    }

    MoleculeSpec::new(atoms, groups)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(z: u32, pos: [f64; 3]) -> CubeAtomRecord {
        CubeAtomRecord {
            atomic_number: z,
            nuclear_charge: z as f64,
            position: pos,
        }
    }

    fn two_group_config() -> SubgroupConfig {
        SubgroupConfig::from_json(
            r#"{"subgroups":[{"name":"G1","atoms":[0]},{"name":"G2","atoms":[1]}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn two_atoms_two_groups() {
        let atoms = [record(6, [0.0; 3]), record(8, [1.0, 0.0, 0.0])];
        let mol = build_molecule(&atoms, &two_group_config()).unwrap();
        assert_eq!(mol.subgroup_count(), 2);
        assert_eq!(mol.atom_count(), 2);
        assert_eq!(mol.subgroup_of(0).unwrap(), 0);
        assert_eq!(mol.subgroup_of(1).unwrap(), 1);
    }

    #[test]
    fn overlapping_groups_rejected() {
        let atoms = [record(6, [0.0; 3]), record(8, [1.0, 0.0, 0.0])];
        let config = SubgroupConfig::from_json(
            r#"{"subgroups":[{"name":"G1","atoms":[0,1]},{"name":"G2","atoms":[1]}]}"#,
        )
        .unwrap();
        assert!(matches!(
            build_molecule(&atoms, &config),
            Err(Error::SubgroupOverlap { atom: 1, .. })
        ));
    }

    #[test]
    fn carbon_defaults_to_bondi_radius() {
        let atoms = [record(6, [0.0; 3])];
        let config =
            SubgroupConfig::from_json(r#"{"subgroups":[{"name":"ALL","atoms":[0]}]}"#).unwrap();
        let mol = build_molecule(&atoms, &config).unwrap();
        // 1.70 Angstrom in Bohr.
        assert!((mol.atoms[0].radius - 1.70 * BOHR_PER_ANGSTROM).abs() < 1e-12);
        assert!((mol.atoms[0].radius - 3.2125).abs() < 1e-3);
    }

    #[test]
    fn unknown_element_needs_override() {
        let atoms = [record(104, [0.0; 3])];
        let config =
            SubgroupConfig::from_json(r#"{"subgroups":[{"name":"ALL","atoms":[0]}]}"#).unwrap();
        assert!(matches!(
            build_molecule(&atoms, &config),
            Err(Error::UnknownRadius { element: 104 })
        ));

        let config = SubgroupConfig::from_json(
            r#"{"subgroups":[{"name":"ALL","atoms":[0]}],
                "radius_overrides":{"element":{"104":1.57}}}"#,
        )
        .unwrap();
        let mol = build_molecule(&atoms, &config).unwrap();
        assert!((mol.atoms[0].radius - 1.57 * BOHR_PER_ANGSTROM).abs() < 1e-12);
    }

    #[test]
    fn radius_override_precedence_and_units() {
        let atoms = [record(6, [0.0; 3]), record(6, [1.0, 0.0, 0.0])];
        let config = SubgroupConfig::from_json(
            r#"{"subgroups":[{"name":"ALL","atoms":["0-1"]}],
                "radius_unit":"bohr",
                "radius_overrides":{"element":{"C":3.0},"atom":{"1":2.5}}}"#,
        )
        .unwrap();
        let mol = build_molecule(&atoms, &config).unwrap();
        assert_eq!(mol.atoms[0].radius, 3.0);
        assert_eq!(mol.atoms[1].radius, 2.5);
    }

    #[test]
    fn rest_group_absorbs_unlisted() {
        let atoms = [
            record(6, [0.0; 3]),
            record(1, [1.0, 0.0, 0.0]),
            record(1, [2.0, 0.0, 0.0]),
        ];
        let config = SubgroupConfig::from_json(
            r#"{"subgroups":[{"name":"CORE","atoms":[0]},{"name":"REST"}]}"#,
        )
        .unwrap();
        let mol = build_molecule(&atoms, &config).unwrap();
        assert_eq!(mol.subgroups[1].members, vec![1, 2]);
    }

    #[test]
    fn uncovered_atom_without_rest_errors() {
        let atoms = [record(6, [0.0; 3]), record(1, [1.0, 0.0, 0.0])];
        let config =
            SubgroupConfig::from_json(r#"{"subgroups":[{"name":"CORE","atoms":[0]}]}"#).unwrap();
        assert!(matches!(
            build_molecule(&atoms, &config),
            Err(Error::AtomUncovered { atom: 1 })
        ));
    }

    #[test]
    fn range_selectors_expand_inclusively() {
        let atoms: Vec<CubeAtomRecord> = (0..6).map(|i| record(6, [i as f64, 0.0, 0.0])).collect();
        let config = SubgroupConfig::from_json(
            r#"{"subgroups":[{"name":"A","atoms":[0,"2-4"]},{"name":"B","atoms":[1,5]}]}"#,
        )
        .unwrap();
        let mol = build_molecule(&atoms, &config).unwrap();
        assert_eq!(mol.subgroups[0].members, vec![0, 2, 3, 4]);
        assert_eq!(mol.subgroups[1].members, vec![1, 5]);
    }

    #[test]
    fn partition_is_total_and_single_valued() {
        let atoms: Vec<CubeAtomRecord> = (0..10).map(|i| record(6, [i as f64, 0.0, 0.0])).collect();
        let config = SubgroupConfig::from_json(
            r#"{"subgroups":[{"name":"A","atoms":["0-3"]},{"name":"B","atoms":["4-6"]},{"name":"REST"}]}"#,
        )
        .unwrap();
        let mol = build_molecule(&atoms, &config).unwrap();
        let total: usize = mol.subgroups.iter().map(|g| g.members.len()).sum();
        assert_eq!(total, mol.atom_count());
        for a in 0..mol.atom_count() {
            let j = mol.subgroup_of(a).unwrap();
            assert!(mol.subgroups[j].members.contains(&a));
        }
        assert!(mol.subgroup_of(10).is_err());
    }

    #[test]
    fn color_parsing() {
        let atoms = [record(6, [0.0; 3])];
        let config = SubgroupConfig::from_json(
            r##"{"subgroups":[{"name":"ALL","atoms":[0],"color":"#1f77b4"}]}"##,
        )
        .unwrap();
        let mol = build_molecule(&atoms, &config).unwrap();
        assert_eq!(mol.subgroups[0].color, Some([0x1f, 0x77, 0xb4]));
    }

    #[test]
    fn subgroup_of_prefers_listed_group() {
        let atoms: Vec<CubeAtomRecord> = (0..3).map(|i| record(6, [i as f64, 0.0, 0.0])).collect();
        let config = SubgroupConfig::from_json(
            r#"{"subgroups":[{"name":"G1","atoms":[0,2]},{"name":"G2","atoms":[1]}]}"#,
        )
        .unwrap();
        let mol = build_molecule(&atoms, &config).unwrap();
        assert_eq!(mol.subgroup_of(2).unwrap(), 0);
        assert_eq!(mol.subgroup_of(1).unwrap(), 1);
    }
}
