//! Synthetic Gaussian NTO-like fields for fixtures, tests and benchmarks.

use rayon::prelude::*;

use crate::cube::{GridField, GridMeta};

/// An isotropic Gaussian amplitude contribution
/// `a * exp(-||x - c||^2 / (2 sigma^2))`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianBlob {
    pub center: [f64; 3],
    pub amplitude: f64,
    pub sigma: f64,
}

/// Sample a sum of Gaussian amplitudes on the grid. The result plays the
/// role of an orbital amplitude; square it for a density.
pub fn gaussian_field(meta: &GridMeta, blobs: &[GaussianBlob]) -> GridField {
    let [_, ny, nz] = meta.counts;
    let values: Vec<f64> = (0..meta.voxel_count())
        .into_par_iter()
        .map(|idx| {
            let i = idx / (ny * nz);
            let j = (idx / nz) % ny;
            let k = idx % nz;
            let x = meta.position(i, j, k);
            blobs
                .iter()
                .map(|b| {
                    let dx = x[0] - b.center[0];
                    let dy = x[1] - b.center[1];
                    let dz = x[2] - b.center[2];
                    let r2 = dx * dx + dy * dy + dz * dz;
                    b.amplitude * (-r2 / (2.0 * b.sigma * b.sigma)).exp()
                })
                .sum()
        })
        .collect();
    let mut field = GridField::new(meta.clone(), values).expect("consistent synthetic grid");
    field.comments = [
        "synthetic gaussian field".to_string(),
        format!("{} blobs", blobs.len()),
    ];
    field
}

/// Cubic grid of `n` samples per axis spanning `[-half, half]`.
pub fn cubic_grid(n: usize, half: f64) -> GridMeta {
    let step = if n > 1 {
        2.0 * half / (n as f64 - 1.0)
    } else {
        1.0
    };
    GridMeta {
        origin: [-half; 3],
        counts: [n; 3],
        axes: [[step, 0.0, 0.0], [0.0, step, 0.0], [0.0, 0.0, step]],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_sits_at_the_center() {
        let meta = cubic_grid(9, 2.0);
        let field = gaussian_field(
            &meta,
            &[GaussianBlob {
                center: [0.0; 3],
                amplitude: 2.0,
                sigma: 1.0,
            }],
        );
        let center = meta.linear_index(4, 4, 4);
        assert_eq!(field.values[center], 2.0);
        assert!(field.values.iter().all(|&v| v <= 2.0));
    }
}
