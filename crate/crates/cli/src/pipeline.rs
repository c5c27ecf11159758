//! Stage implementations behind the subcommands.
//!
//! Every stage validates all of its inputs before computing anything, writes
//! plain files into the output directory, and keeps outputs deterministic
//! for fixed inputs and flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use ntx_core::charge::{self, ChargeReport, ChargeTable};
use ntx_core::cube::{self, CubeAtomRecord, GridField};
use ntx_core::diagram::{self, DiagramOptions};
use ntx_core::molecule::{build_molecule, MoleculeSpec, SubgroupConfig};
use ntx_core::segmentation::{self, LabelVolume};
use ntx_core::transfer::{self, Method, TransferReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodChoice {
    Proportional,
    Quadratic,
    Both,
}

impl MethodChoice {
    fn methods(self) -> Vec<Method> {
        match self {
            MethodChoice::Proportional => vec![Method::Proportional],
            MethodChoice::Quadratic => vec![Method::Quadratic],
            MethodChoice::Both => vec![Method::Proportional, Method::Quadratic],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegChoice {
    Power,
    Gradient,
    Both,
}

#[derive(Debug, Clone, Copy)]
pub struct ReportFormats {
    pub csv: bool,
    pub json: bool,
    pub svg: bool,
}

impl ReportFormats {
    pub fn parse(spec: &str) -> Result<ReportFormats> {
        let mut formats = ReportFormats {
            csv: false,
            json: false,
            svg: false,
        };
        for token in spec.split(',') {
            match token.trim() {
                "csv" => formats.csv = true,
                "json" => formats.json = true,
                "svg" => formats.svg = true,
                "" => {}
                other => bail!("unknown report format `{other}` (expected csv, json or svg)"),
            }
        }
        if !(formats.csv || formats.json || formats.svg) {
            bail!("no report format selected");
        }
        Ok(formats)
    }
}

/// A fully specified pipeline run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub hole: PathBuf,
    pub particle: PathBuf,
    pub groups: PathBuf,
    pub out: PathBuf,
    pub method: MethodChoice,
    pub preference: Option<Vec<f64>>,
    pub seg: SegChoice,
    pub formats: ReportFormats,
    /// Diagram canvas (width, height) in pixels.
    pub canvas: (f64, f64),
    /// Smallest transfer value drawn as a ribbon.
    pub epsilon: f64,
}

impl RunConfig {
    fn diagram_options(&self) -> DiagramOptions {
        DiagramOptions {
            width: self.canvas.0,
            height: self.canvas.1,
            epsilon: self.epsilon,
            ..DiagramOptions::default()
        }
    }

    fn validate(&self) -> Result<()> {
        for (label, path) in [
            ("hole cube", &self.hole),
            ("particle cube", &self.particle),
            ("subgroup config", &self.groups),
        ] {
            if !path.is_file() {
                bail!("{label} not found: {}", path.display());
            }
        }
        Ok(())
    }
}

struct Inputs {
    hole: GridField,
    particle: GridField,
    atoms: Vec<CubeAtomRecord>,
    molecule: MoleculeSpec,
}

fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    cfg.validate()?;
    let hole_text =
        fs::read_to_string(&cfg.hole).with_context(|| format!("reading {}", cfg.hole.display()))?;
    let (hole, atoms) =
        cube::parse_cube(&hole_text).with_context(|| format!("parsing {}", cfg.hole.display()))?;
    let particle_text = fs::read_to_string(&cfg.particle)
        .with_context(|| format!("reading {}", cfg.particle.display()))?;
    let (particle, particle_atoms) = cube::parse_cube(&particle_text)
        .with_context(|| format!("parsing {}", cfg.particle.display()))?;

    if hole.meta != particle.meta {
        bail!(
            "hole and particle cubes are sampled on different grids \
             ({} vs {})",
            cfg.hole.display(),
            cfg.particle.display()
        );
    }
    if atoms.len() != particle_atoms.len() {
        bail!(
            "hole cube lists {} atoms but particle cube lists {}",
            atoms.len(),
            particle_atoms.len()
        );
    }

    let groups_text = fs::read_to_string(&cfg.groups)
        .with_context(|| format!("reading {}", cfg.groups.display()))?;
    let config = SubgroupConfig::from_json(&groups_text)
        .with_context(|| format!("parsing {}", cfg.groups.display()))?;
    let molecule = build_molecule(&atoms, &config)
        .with_context(|| format!("applying {}", cfg.groups.display()))?;

    Ok(Inputs {
        hole,
        particle,
        atoms,
        molecule,
    })
}

fn subgroup_colors(molecule: &MoleculeSpec) -> Vec<[u8; 3]> {
    molecule
        .subgroups
        .iter()
        .enumerate()
        .map(|(j, g)| g.color.unwrap_or_else(|| diagram::default_color(j)))
        .collect()
}

fn write_text(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, content).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

#[derive(Serialize)]
struct SubgroupVoxels {
    name: String,
    voxels: usize,
}

#[derive(Serialize)]
struct SegmentStats {
    segmentation: String,
    /// Which density drove a gradient segmentation.
    #[serde(skip_serializing_if = "Option::is_none")]
    density_field: Option<String>,
    atom_voxels: Vec<usize>,
    subgroups: Vec<SubgroupVoxels>,
}

fn segment_stats(
    labels: &LabelVolume,
    molecule: &MoleculeSpec,
    segmentation: &str,
    density_field: Option<&str>,
) -> Result<SegmentStats> {
    let atom_voxels = labels.histogram(molecule.atom_count());
    let merged = segmentation::subgroup_labels(labels, molecule)?;
    let group_hist = merged.histogram(molecule.subgroup_count());
    Ok(SegmentStats {
        segmentation: segmentation.to_string(),
        density_field: density_field.map(str::to_string),
        atom_voxels,
        subgroups: molecule
            .subgroups
            .iter()
            .zip(group_hist)
            .map(|(g, voxels)| SubgroupVoxels {
                name: g.name.clone(),
                voxels,
            })
            .collect(),
    })
}

pub fn cmd_segment(cfg: RunConfig) -> Result<()> {
    let inputs = load_inputs(&cfg)?;
    fs::create_dir_all(&cfg.out)?;

    if matches!(cfg.seg, SegChoice::Power | SegChoice::Both) {
        let labels = segmentation::segment_power_diagram(&inputs.hole.meta, &inputs.molecule);
        let stats = segment_stats(&labels, &inputs.molecule, "power", None)?;
        write_text(
            &cfg.out.join("labels_power.cube"),
            &cube::write_cube(&labels.to_field(), &inputs.atoms)?,
        )?;
        write_json(&cfg.out.join("segment_power.json"), &stats)?;
    }
    if matches!(cfg.seg, SegChoice::Gradient | SegChoice::Both) {
        // The gradient oracle follows the hole density here; compare-seg
        // uses the field-specific segmentations.
        let density = charge::density(&inputs.hole);
        let labels = segmentation::segment_gradient_ascent(&density, &inputs.molecule);
        let stats = segment_stats(&labels, &inputs.molecule, "gradient", Some("hole"))?;
        write_text(
            &cfg.out.join("labels_gradient.cube"),
            &cube::write_cube(&labels.to_field(), &inputs.atoms)?,
        )?;
        write_json(&cfg.out.join("segment_gradient.json"), &stats)?;
    }
    Ok(())
}

/// Charge tables for the configured segmentation(s), tagged by name.
fn charge_tables(inputs: &Inputs, seg: SegChoice) -> Result<Vec<(&'static str, ChargeTable)>> {
    let mut out = Vec::new();
    if matches!(seg, SegChoice::Power | SegChoice::Both) {
        let labels = segmentation::segment_power_diagram(&inputs.hole.meta, &inputs.molecule);
        let table =
            charge::charge_table(&inputs.hole, &inputs.particle, &labels, &inputs.molecule)?;
        out.push(("power", table));
    }
    if matches!(seg, SegChoice::Gradient | SegChoice::Both) {
        out.push(("gradient", gradient_charge_table(inputs)?));
    }
    Ok(out)
}

/// Gradient-ascent charges are field-specific: each density is segmented
/// on its own and integrated over its own basins.
fn gradient_charge_table(inputs: &Inputs) -> Result<ChargeTable> {
    let n = inputs.molecule.atom_count();
    let hole_density = charge::density(&inputs.hole);
    let hole_labels = segmentation::segment_gradient_ascent(&hole_density, &inputs.molecule);
    let particle_density = charge::density(&inputs.particle);
    let particle_labels =
        segmentation::segment_gradient_ascent(&particle_density, &inputs.molecule);
    let per_atom_hole = charge::atom_charges(&inputs.hole, &hole_labels, n)?;
    let per_atom_particle = charge::atom_charges(&inputs.particle, &particle_labels, n)?;
    Ok(ChargeTable::from_per_atom(
        per_atom_hole,
        per_atom_particle,
        &inputs.molecule,
    ))
}

pub fn cmd_charges(cfg: RunConfig) -> Result<()> {
    let inputs = load_inputs(&cfg)?;
    fs::create_dir_all(&cfg.out)?;

    for (tag, table) in charge_tables(&inputs, cfg.seg)? {
        let report = ChargeReport::new(&table, &inputs.molecule)?;
        for warning in &report.warnings {
            eprintln!("warning: {warning}");
        }
        if cfg.formats.csv {
            write_text(
                &cfg.out.join(format!("charges_{tag}.csv")),
                &report.to_csv(),
            )?;
        }
        if cfg.formats.json {
            write_json(&cfg.out.join(format!("charges_{tag}.json")), &report)?;
        }
        if cfg.formats.svg {
            let svg = diagram::render_bar_chart(
                &table.per_subgroup_hole,
                &table.per_subgroup_particle,
                &inputs.molecule.subgroup_names(),
                &subgroup_colors(&inputs.molecule),
                &cfg.diagram_options(),
            )?;
            write_text(&cfg.out.join(format!("bars_{tag}.svg")), &svg)?;
        }
    }
    Ok(())
}

fn method_tag(method: Method) -> &'static str {
    match method {
        Method::Proportional => "proportional",
        Method::Quadratic => "quadratic",
    }
}

/// Run the transfer stage and return the per-method reports.
fn run_transfer(cfg: &RunConfig, inputs: &Inputs) -> Result<Vec<(Method, TransferReport)>> {
    // Transfer charges come from the power segmentation unless gradient
    // segmentation was requested explicitly.
    let seg = match cfg.seg {
        SegChoice::Gradient => SegChoice::Gradient,
        _ => SegChoice::Power,
    };
    let (_, table) = charge_tables(inputs, seg)?.pop().expect("one table");
    let names = inputs.molecule.subgroup_names();

    let mut reports = Vec::new();
    for method in cfg.method.methods() {
        let result = transfer::reconstruct_from_charges(
            &table.per_subgroup_hole,
            &table.per_subgroup_particle,
            method,
            cfg.preference.as_deref(),
        )?;
        reports.push((method, TransferReport::new(&result, &names)));
    }
    Ok(reports)
}

pub fn cmd_transfer(cfg: RunConfig) -> Result<()> {
    let inputs = load_inputs(&cfg)?;
    fs::create_dir_all(&cfg.out)?;
    let colors = subgroup_colors(&inputs.molecule);

    for (method, report) in run_transfer(&cfg, &inputs)? {
        let tag = method_tag(method);
        if report.pure_local_excitation {
            println!("{tag}: pure local excitation, no charge transfer");
        } else {
            println!(
                "{tag}: charge transfer {:.1}%, local excitation {:.1}%",
                report.charge_transfer_percent, report.local_excitation_percent
            );
        }
        if cfg.formats.json {
            write_json(&cfg.out.join(format!("transfer_{tag}.json")), &report)?;
        }
        if cfg.formats.svg {
            let flat: Vec<f64> = report.full_matrix.iter().flatten().copied().collect();
            let spec = diagram::layout_transition_diagram(
                &flat,
                &report.subgroups,
                &colors,
                &cfg.diagram_options(),
            )?;
            write_text(
                &cfg.out.join(format!("transition_{tag}.svg")),
                &diagram::render_svg(&spec),
            )?;
        }
    }
    Ok(())
}

/// Threshold above which a power-vs-gradient charge difference is flagged.
const COMPARE_THRESHOLD_PP: f64 = 2.0;

#[derive(Serialize)]
struct CompareRow {
    subgroup: String,
    field: &'static str,
    power_percent: f64,
    gradient_percent: f64,
    abs_diff: f64,
    exceeds_threshold: bool,
}

#[derive(Serialize)]
struct CompareReport {
    threshold_percent_points: f64,
    rows: Vec<CompareRow>,
    exceed_count: usize,
    total_count: usize,
    summary: String,
}

fn compare_report(inputs: &Inputs) -> Result<CompareReport> {
    let mut tables = charge_tables(inputs, SegChoice::Both)?;
    let (tag_g, gradient) = tables.pop().expect("gradient table");
    let (tag_p, power) = tables.pop().expect("power table");
    debug_assert_eq!((tag_p, tag_g), ("power", "gradient"));
    let gradient = charge::normalize_percent(&gradient, &inputs.molecule)?;
    let power = charge::normalize_percent(&power, &inputs.molecule)?;

    let mut rows = Vec::new();
    for (j, group) in inputs.molecule.subgroups.iter().enumerate() {
        for (field, p, g) in [
            (
                "hole",
                power.per_subgroup_hole[j],
                gradient.per_subgroup_hole[j],
            ),
            (
                "particle",
                power.per_subgroup_particle[j],
                gradient.per_subgroup_particle[j],
            ),
        ] {
            let abs_diff = (p - g).abs();
            rows.push(CompareRow {
                subgroup: group.name.clone(),
                field,
                power_percent: p,
                gradient_percent: g,
                abs_diff,
                exceeds_threshold: abs_diff > COMPARE_THRESHOLD_PP,
            });
        }
    }
    let exceed_count = rows.iter().filter(|r| r.exceeds_threshold).count();
    let total_count = rows.len();
    let summary = format!(
        "{exceed_count} of {total_count} subgroup charges differ by more than \
         {COMPARE_THRESHOLD_PP:.0} percentage points"
    );
    Ok(CompareReport {
        threshold_percent_points: COMPARE_THRESHOLD_PP,
        rows,
        exceed_count,
        total_count,
        summary,
    })
}

pub fn cmd_compare_seg(cfg: RunConfig) -> Result<()> {
    let inputs = load_inputs(&cfg)?;
    fs::create_dir_all(&cfg.out)?;
    let report = compare_report(&inputs)?;

    println!("subgroup        field     power%   gradient%   |diff|");
    for row in &report.rows {
        let flag = if row.exceeds_threshold {
            "  <-- exceeds"
        } else {
            ""
        };
        println!(
            "{:<15} {:<9} {:>7.2} {:>10.2} {:>8.2}{flag}",
            row.subgroup, row.field, row.power_percent, row.gradient_percent, row.abs_diff
        );
    }
    println!("{}", report.summary);
    write_json(&cfg.out.join("compare_seg.json"), &report)?;
    Ok(())
}

#[derive(Deserialize)]
struct BatchEntry {
    name: String,
    hole: PathBuf,
    particle: PathBuf,
    groups: PathBuf,
    #[serde(default)]
    method: Option<String>,
    #[serde(default)]
    tp: Option<Vec<f64>>,
    #[serde(default)]
    seg: Option<String>,
}

#[derive(Serialize)]
struct BatchItemSummary {
    name: String,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    charge_transfer_percent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pure_local_excitation: Option<bool>,
}

#[derive(Serialize)]
struct BatchSummary {
    items: Vec<BatchItemSummary>,
    failed: usize,
}

fn batch_entry_config(entry: &BatchEntry, base: &Path, out: &Path) -> Result<RunConfig> {
    if entry.name.is_empty() || entry.name.contains(['/', '\\']) {
        bail!("bad batch item name `{}`", entry.name);
    }
    let resolve = |p: &Path| {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };
    let method = match entry.method.as_deref() {
        None | Some("both") => MethodChoice::Both,
        Some("proportional") => MethodChoice::Proportional,
        Some("quadratic") => MethodChoice::Quadratic,
        Some(other) => bail!("batch item `{}`: unknown method `{other}`", entry.name),
    };
    let seg = match entry.seg.as_deref() {
        None | Some("power") => SegChoice::Power,
        Some("gradient") => SegChoice::Gradient,
        Some("both") => SegChoice::Both,
        Some(other) => bail!(
            "batch item `{}`: unknown segmentation `{other}`",
            entry.name
        ),
    };
    Ok(RunConfig {
        hole: resolve(&entry.hole),
        particle: resolve(&entry.particle),
        groups: resolve(&entry.groups),
        out: out.join(&entry.name),
        method,
        preference: entry.tp.clone(),
        seg,
        formats: ReportFormats {
            csv: true,
            json: true,
            svg: true,
        },
        canvas: (640.0, 480.0),
        epsilon: 0.1,
    })
}

pub fn cmd_batch(config_path: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(config_path)
        .with_context(|| format!("reading {}", config_path.display()))?;
    let entries: Vec<BatchEntry> = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", config_path.display()))?;
    if entries.is_empty() {
        bail!("batch config lists no items");
    }
    {
        let mut names: Vec<&str> = entries.iter().map(|e| e.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != entries.len() {
            bail!("batch item names must be unique");
        }
    }
    let base = config_path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(out)?;

    let mut items = Vec::new();
    for entry in &entries {
        let name = entry.name.clone();
        let run = batch_entry_config(entry, base, out).and_then(|cfg| {
            let inputs = load_inputs(&cfg)?;
            fs::create_dir_all(&cfg.out)?;
            let colors = subgroup_colors(&inputs.molecule);
            let reports = run_transfer(&cfg, &inputs)?;
            for (method, report) in &reports {
                let tag = method_tag(*method);
                write_json(&cfg.out.join(format!("transfer_{tag}.json")), report)?;
                let flat: Vec<f64> = report.full_matrix.iter().flatten().copied().collect();
                let spec = diagram::layout_transition_diagram(
                    &flat,
                    &report.subgroups,
                    &colors,
                    &cfg.diagram_options(),
                )?;
                write_text(
                    &cfg.out.join(format!("transition_{tag}.svg")),
                    &diagram::render_svg(&spec),
                )?;
            }
            Ok(reports)
        });
        match run {
            Ok(reports) => {
                let (_, first) = &reports[0];
                items.push(BatchItemSummary {
                    name,
                    status: "ok",
                    error: None,
                    charge_transfer_percent: Some(first.charge_transfer_percent),
                    pure_local_excitation: Some(first.pure_local_excitation),
                });
            }
            Err(err) => {
                eprintln!("batch item `{name}` failed: {err:#}");
                items.push(BatchItemSummary {
                    name,
                    status: "failed",
                    error: Some(format!("{err:#}")),
                    charge_transfer_percent: None,
                    pure_local_excitation: None,
                });
            }
        }
    }

    let failed = items.iter().filter(|i| i.status == "failed").count();
    let summary = BatchSummary { items, failed };
    write_json(&out.join("batch_summary.json"), &summary)?;
    if failed > 0 {
        bail!("{failed} batch item(s) failed");
    }
    Ok(())
}
