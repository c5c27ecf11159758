//! Gaussian cube file reading and writing.
//!
//! A cube file starts with two free-text comment lines, a line with the atom
//! count and grid origin, three axis lines (voxel count plus step vector),
//! the atom records, and finally the scalar data with the z index varying
//! fastest. All geometry is kept in Bohr internally; a negative axis count
//! marks that axis as Angstrom and is converted on input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One Bohr in Angstrom (CODATA 2018).
pub const ANGSTROM_PER_BOHR: f64 = 0.529177210903;
/// One Angstrom in Bohr.
pub const BOHR_PER_ANGSTROM: f64 = 1.0 / ANGSTROM_PER_BOHR;

/// Geometry of a regular 3D sampling grid: physical origin, per-axis sample
/// counts and per-axis step vectors. The origin is the center of the first
/// sample, so sample (i,j,k) sits at `origin + i*ax + j*ay + k*az`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub origin: [f64; 3],
    pub counts: [usize; 3],
    pub axes: [[f64; 3]; 3],
}

impl GridMeta {
    pub fn voxel_count(&self) -> usize {
        self.counts[0] * self.counts[1] * self.counts[2]
    }

    /// Voxel volume in Bohr^3, the absolute triple product of the axis
    /// vectors. Non-orthogonal axes are fine.
    pub fn voxel_volume(&self) -> f64 {
        let [a, b, c] = self.axes;
        let cross = [
            b[1] * c[2] - b[2] * c[1],
            b[2] * c[0] - b[0] * c[2],
            b[0] * c[1] - b[1] * c[0],
        ];
        (a[0] * cross[0] + a[1] * cross[1] + a[2] * cross[2]).abs()
    }

    /// Linear index of grid point (i,j,k); z varies fastest.
    #[inline]
    pub fn linear_index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.counts[1] + j) * self.counts[2] + k
    }

    /// Inverse of [`linear_index`](Self::linear_index).
    #[inline]
    pub fn grid_coords(&self, index: usize) -> (usize, usize, usize) {
        let nz = self.counts[2];
        let ny = self.counts[1];
        (index / (ny * nz), (index / nz) % ny, index % nz)
    }

    /// Physical position of the sample point (i,j,k) in Bohr.
    #[inline]
    pub fn position(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let (i, j, k) = (i as f64, j as f64, k as f64);
        [
            self.origin[0] + i * self.axes[0][0] + j * self.axes[1][0] + k * self.axes[2][0],
            self.origin[1] + i * self.axes[0][1] + j * self.axes[1][1] + k * self.axes[2][1],
            self.origin[2] + i * self.axes[0][2] + j * self.axes[1][2] + k * self.axes[2][2],
        ]
    }

    fn validate(&self, value_count: usize) -> Result<()> {
        if self.counts.iter().any(|&n| n < 1) {
            return Err(Error::GridCounts);
        }
        if value_count != self.voxel_count() {
            return Err(Error::GridSize {
                values: value_count,
                expected: self.voxel_count(),
            });
        }
        if self.voxel_volume() <= 0.0 {
            return Err(Error::GridDegenerate);
        }
        Ok(())
    }
}

/// A scalar field sampled on a regular grid, stored z-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub meta: GridMeta,
    /// The two cube comment lines, preserved verbatim on round-trip.
    pub comments: [String; 2],
    /// Orbital id from the DSET line of a negative-atom-count cube, if any.
    pub orbital_id: Option<i32>,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn new(meta: GridMeta, values: Vec<f64>) -> Result<Self> {
        meta.validate(values.len())?;
        Ok(Self {
            meta,
            comments: [String::new(), String::new()],
            orbital_id: None,
            values,
        })
    }

    pub fn voxel_volume(&self) -> f64 {
        self.meta.voxel_volume()
    }

    /// Value-wise map preserving all metadata.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        GridField {
            meta: self.meta.clone(),
            comments: self.comments.clone(),
            orbital_id: self.orbital_id,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Atom line of a cube file: atomic number, nuclear charge, position (Bohr).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeAtomRecord {
    pub atomic_number: u32,
    pub nuclear_charge: f64,
    pub position: [f64; 3],
}

struct LineReader<'a> {
    lines: std::str::Lines<'a>,
    line_no: usize,
}

impl<'a> LineReader<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines(),
            line_no: 0,
        }
    }

    fn next_line(&mut self, expected: &'static str) -> Result<&'a str> {
        self.line_no += 1;
        self.lines.next().ok_or(Error::CubeTruncated {
            line: self.line_no,
            expected,
        })
    }

    fn next_fields(&mut self, n: usize, expected: &'static str) -> Result<Vec<&'a str>> {
        let line = self.next_line(expected)?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != n {
            return Err(Error::CubeFieldCount {
                line: self.line_no,
                expected: n,
                found: fields.len(),
            });
        }
        Ok(fields)
    }

    fn parse_f64(&self, token: &str) -> Result<f64> {
        token.parse().map_err(|_| Error::CubeToken {
            line: self.line_no,
            token: token.to_string(),
            expected: "a real number",
        })
    }

    fn parse_i64(&self, token: &str) -> Result<i64> {
        token.parse().map_err(|_| Error::CubeToken {
            line: self.line_no,
            token: token.to_string(),
            expected: "an integer",
        })
    }
}

/// Parse a cube file into a field plus its atom records.
///
/// A negative atom count means a DSET line follows the atoms; it must carry
/// exactly one orbital id, which is recorded in [`GridField::orbital_id`].
/// A negative per-axis voxel count marks the axis vector as Angstrom and it
/// is converted to Bohr.
pub fn parse_cube(text: &str) -> Result<(GridField, Vec<CubeAtomRecord>)> {
    let mut rd = LineReader::new(text);

    let comment0 = rd.next_line("first comment line")?.to_string();
    let comment1 = rd.next_line("second comment line")?.to_string();

    let header = rd.next_fields(4, "atom count and origin")?;
    let raw_atom_count = rd.parse_i64(header[0])?;
    let origin = [
        rd.parse_f64(header[1])?,
        rd.parse_f64(header[2])?,
        rd.parse_f64(header[3])?,
    ];
    let atom_count = raw_atom_count.unsigned_abs() as usize;

    let mut counts = [0usize; 3];
    let mut axes = [[0.0f64; 3]; 3];
    for axis in 0..3 {
        let fields = rd.next_fields(4, "axis count and vector")?;
        let raw_count = rd.parse_i64(fields[0])?;
        let mut vec = [
            rd.parse_f64(fields[1])?,
            rd.parse_f64(fields[2])?,
            rd.parse_f64(fields[3])?,
        ];
        if raw_count < 0 {
            // Negative count: this axis vector is in Angstrom.
            for v in &mut vec {
                *v *= BOHR_PER_ANGSTROM;
            }
        }
        counts[axis] = raw_count.unsigned_abs() as usize;
        axes[axis] = vec;
    }

    let mut atoms = Vec::with_capacity(atom_count);
    for _ in 0..atom_count {
        let fields = rd.next_fields(5, "atom record")?;
        let z = rd.parse_i64(fields[0])?;
        if z < 1 {
            return Err(Error::CubeToken {
                line: rd.line_no,
                token: fields[0].to_string(),
                expected: "a positive atomic number",
            });
        }
        atoms.push(CubeAtomRecord {
            atomic_number: z as u32,
            nuclear_charge: rd.parse_f64(fields[1])?,
            position: [
                rd.parse_f64(fields[2])?,
                rd.parse_f64(fields[3])?,
                rd.parse_f64(fields[4])?,
            ],
        });
    }

    let orbital_id = if raw_atom_count < 0 {
        let line = rd.next_line("DSET orbital id line")?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            return Err(Error::CubeTruncated {
                line: rd.line_no,
                expected: "DSET orbital id line",
            });
        }
        let id_count = rd.parse_i64(fields[0])?;
        if id_count != 1 {
            return Err(Error::CubeMultiField {
                count: id_count.max(0) as usize,
            });
        }
        if fields.len() != 2 {
            return Err(Error::CubeFieldCount {
                line: rd.line_no,
                expected: 2,
                found: fields.len(),
            });
        }
        Some(rd.parse_i64(fields[1])? as i32)
    } else {
        None
    };

    let meta = GridMeta {
        origin,
        counts,
        axes,
    };
    let expected = meta.voxel_count();
    let mut values = Vec::with_capacity(expected);
    let mut surplus = 0usize;
    while let Some(line) = rd.lines.next() {
        rd.line_no += 1;
        for token in line.split_whitespace() {
            if values.len() == expected {
                surplus += 1;
            } else {
                values.push(rd.parse_f64(token)?);
            }
        }
    }
    if surplus > 0 || values.len() != expected {
        return Err(Error::CubeValueCount {
            expected,
            found: values.len() + surplus,
        });
    }

    let mut field = GridField::new(meta, values)?;
    field.comments = [comment0, comment1];
    field.orbital_id = orbital_id;
    Ok((field, atoms))
}

fn fmt_f64(v: f64) -> String {
    // 13 significant digits keeps the parse→write→parse relative error
    // below 1e-12.
    format!("{:>20.12E}", v)
}

/// Write a field and its atoms as cube text that [`parse_cube`] maps back to
/// the same data (values within 1e-12 relative).
pub fn write_cube(field: &GridField, atoms: &[CubeAtomRecord]) -> Result<String> {
    if atoms.is_empty() {
        return Err(Error::CubeNoAtoms);
    }
    field.meta.validate(field.values.len())?;

    let mut out = String::new();
    out.push_str(&field.comments[0]);
    out.push('\n');
    out.push_str(&field.comments[1]);
    out.push('\n');

    let signed_count = if field.orbital_id.is_some() {
        -(atoms.len() as i64)
    } else {
        atoms.len() as i64
    };
    out.push_str(&format!(
        "{:>6}{}{}{}\n",
        signed_count,
        fmt_f64(field.meta.origin[0]),
        fmt_f64(field.meta.origin[1]),
        fmt_f64(field.meta.origin[2])
    ));
    for axis in 0..3 {
        out.push_str(&format!(
            "{:>6}{}{}{}\n",
            field.meta.counts[axis],
            fmt_f64(field.meta.axes[axis][0]),
            fmt_f64(field.meta.axes[axis][1]),
            fmt_f64(field.meta.axes[axis][2])
        ));
    }
    for atom in atoms {
        out.push_str(&format!(
            "{:>6}{}{}{}{}\n",
            atom.atomic_number,
            fmt_f64(atom.nuclear_charge),
            fmt_f64(atom.position[0]),
            fmt_f64(atom.position[1]),
            fmt_f64(atom.position[2])
        ));
    }
    if let Some(id) = field.orbital_id {
        out.push_str(&format!("{:>6}{:>6}\n", 1, id));
    }

    for chunk in field.values.chunks(6) {
        for v in chunk {
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    Ok(out)
}
