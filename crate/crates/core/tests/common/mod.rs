//! Shared closed-form oracle for integration tests: rebuilds scattering
//! matrices from the printed two-mode block form, independent of the
//! forward implementation.

use num_complex::Complex64;
use std::f64::consts::PI;

use meshsim::matrix::ComplexMatrix;
use meshsim::mesh::{MeshSpec, PhaseConfig};

/// Closed-form cell block: e^{-i(theta-pi)/2} times the sin/cos form with
/// the external phase on the bottom row.
pub fn closed_form_cell(theta: f64, phi: f64) -> ComplexMatrix {
    let prefactor = Complex64::from_polar(1.0, -(theta - PI) / 2.0);
    let s = (theta / 2.0).sin();
    let c = (theta / 2.0).cos();
    let ephi = Complex64::from_polar(1.0, -phi);
    ComplexMatrix::new(
        2,
        2,
        vec![
            prefactor * s,
            prefactor * (-c),
            prefactor * (-c) * ephi,
            prefactor * (-s) * ephi,
        ],
    )
    .unwrap()
}

pub fn embed(block: &ComplexMatrix, top: usize, n: usize) -> ComplexMatrix {
    let mut m = ComplexMatrix::identity(n);
    for r in 0..2 {
        for c in 0..2 {
            m.set(top + r, top + c, block.get(r, c));
        }
    }
    m
}

pub fn phase_diagonal(phases: &[f64]) -> ComplexMatrix {
    let n = phases.len();
    let mut m = ComplexMatrix::zeros(n, n);
    for (k, &p) in phases.iter().enumerate() {
        m.set(k, k, Complex64::from_polar(1.0, -p));
    }
    m
}

/// Independent composition `D_out * (last layer ... first layer) * D_in`
/// using full matrix products of embedded closed-form blocks.
pub fn oracle_scattering(spec: &MeshSpec, config: &PhaseConfig) -> ComplexMatrix {
    let n = spec.n_modes();
    let mut m = phase_diagonal(&config.input_phases);
    for layer in 0..spec.depth() {
        for site in spec.cells().iter().filter(|c| c.layer == layer) {
            let block = closed_form_cell(config.thetas[site.cell_id], config.phis[site.cell_id]);
            m = embed(&block, site.top_mode, n).mul(&m).unwrap();
        }
    }
    phase_diagonal(&config.output_phases).mul(&m).unwrap()
}
