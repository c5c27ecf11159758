//! Shared helpers for the CLI integration and acceptance suites.
#![allow(dead_code)] // each test target compiles its own copy

use std::path::{Path, PathBuf};
use std::process::Command;

use ntx_core::cube::{write_cube, CubeAtomRecord, GridField, GridMeta};
use ntx_core::synth::{gaussian_field, GaussianBlob};

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .expect("workspace root")
}

pub fn fixtures_dir() -> PathBuf {
    workspace_root().join("fixtures")
}

pub fn ntx() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ntx"))
}

/// Two carbon atoms on the x axis, the seeds of every two-Gaussian fixture.
pub const TWO_GAUSS_CENTERS: [[f64; 3]; 2] = [[-1.6, 0.0, 0.0], [1.6, 0.0, 0.0]];
pub const TWO_GAUSS_SIGMA: f64 = 0.8;

pub fn two_gauss_atoms() -> Vec<CubeAtomRecord> {
    TWO_GAUSS_CENTERS
        .iter()
        .map(|&position| CubeAtomRecord {
            atomic_number: 6,
            nuclear_charge: 6.0,
            position,
        })
        .collect()
}

pub fn two_gauss_grid(n: usize) -> GridMeta {
    ntx_core::synth::cubic_grid(n, 6.0)
}

/// Hole amplitude concentrated on the left atom, particle on the right;
/// `ratio` controls how much leaks to the other side.
pub fn two_gauss_pair(meta: &GridMeta, ratio: f64) -> (GridField, GridField) {
    let blob = |center: [f64; 3], amplitude: f64| GaussianBlob {
        center,
        amplitude,
        sigma: TWO_GAUSS_SIGMA,
    };
    let main = 0.572;
    let hole = gaussian_field(
        meta,
        &[
            blob(TWO_GAUSS_CENTERS[0], main),
            blob(TWO_GAUSS_CENTERS[1], main * ratio),
        ],
    );
    let particle = gaussian_field(
        meta,
        &[
            blob(TWO_GAUSS_CENTERS[0], main * ratio),
            blob(TWO_GAUSS_CENTERS[1], main),
        ],
    );
    (hole, particle)
}

pub fn write_cube_file(path: &Path, field: &GridField, atoms: &[CubeAtomRecord]) {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, write_cube(field, atoms).unwrap()).unwrap();
}
