//! Unitary-to-phase compiler for the square mesh: decompose an arbitrary
//! N x N unitary into per-cell (theta, phi) settings plus boundary phases,
//! and reconstruct unitaries from phase programs.
//!
//! The decomposition is Clements-style nulling adapted to this crate's
//! cell convention (external phase on the bottom *output*): sub-diagonal
//! elements are nulled alternately by right-multiplying with a cell matrix
//! `T` and left-multiplying with `T†`. The surviving diagonal is then
//! commuted rightward through the `T†` factors with
//!
//! ```text
//! diag(d1, d2) T(theta, phi)† = T(theta, arg(d1/d2)) diag(d1', d2')
//! d1' = d1 e^{i(theta-pi)},  d2' = d1 e^{i(theta+phi-pi)}
//! ```
//!
//! so it ends up on the input side, where the mesh's input phase shifters
//! absorb it. One leftover scalar is reported as the global phase:
//! `U = e^{i global_phase} * reconstruct(config)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, UnitaryMatrix};
use crate::mesh::{forward, mesh_layout, ImperfectionModel, PhaseConfig};

/// Off-diagonal residue above this after nulling means the input was not
/// unitary enough to compile.
const NULLING_TOL: f64 = 1e-7;

/// A compiled phase program with its end-to-end reconstruction error.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompileResult {
    #[serde(flatten)]
    pub config: PhaseConfig,
    /// Max-abs error of `e^{i global_phase} reconstruct(config) - U`.
    pub residual: f64,
    pub global_phase: f64,
}

/// Wrap a phase into [0, 2pi).
pub fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y >= TAU {
        0.0
    } else {
        y
    }
}

/// Wrap every phase of a config into [0, 2pi). The reconstruction is
/// invariant under this up to rounding.
pub fn canonicalize(config: &PhaseConfig) -> PhaseConfig {
    PhaseConfig {
        n_modes: config.n_modes,
        thetas: config.thetas.iter().map(|&p| wrap_phase(p)).collect(),
        phis: config.phis.iter().map(|&p| wrap_phase(p)).collect(),
        input_phases: config.input_phases.iter().map(|&p| wrap_phase(p)).collect(),
        output_phases: config.output_phases.iter().map(|&p| wrap_phase(p)).collect(),
    }
}

/// Scattering matrix of a config on an ideal mesh, as a verified unitary.
pub fn reconstruct(config: &PhaseConfig) -> Result<UnitaryMatrix> {
    let spec = mesh_layout(config.n_modes)?;
    let s = forward(&spec, config, &ImperfectionModel::ideal(), None)?;
    UnitaryMatrix::new(s.into_matrix())
}

/// Nulling parameters for a right-multiplication `A <- A T` on columns
/// (c, c+1) zeroing `A[r][c]`.
fn solve_right_null(a: &ComplexMatrix, r: usize, c: usize) -> (f64, f64) {
    let x = a.get(r, c);
    let y = a.get(r, c + 1);
    let theta = 2.0 * y.norm().atan2(x.norm());
    let phi = if x.norm() == 0.0 || y.norm() == 0.0 {
        0.0
    } else {
        wrap_phase(y.arg() - x.arg())
    };
    (theta, phi)
}

/// Nulling parameters for a left-multiplication `A <- T† A` on rows
/// (r-1, r) zeroing `A[r][c]`.
fn solve_left_null(a: &ComplexMatrix, r: usize, c: usize) -> (f64, f64) {
    let x = a.get(r - 1, c);
    let y = a.get(r, c);
    let theta = 2.0 * x.norm().atan2(y.norm());
    let phi = if x.norm() == 0.0 || y.norm() == 0.0 {
        0.0
    } else {
        wrap_phase(PI + x.arg() - y.arg())
    };
    (theta, phi)
}

/// `A <- A T(theta, phi)` restricted to columns (top, top+1).
fn apply_right_cell(a: &mut ComplexMatrix, top: usize, theta: f64, phi: f64) {
    let p = Complex64::from_polar(1.0, -(theta - PI) / 2.0);
    let s = (theta / 2.0).sin();
    let cang = (theta / 2.0).cos();
    let ephi = Complex64::from_polar(1.0, -phi);
    let t00 = p * s;
    let t01 = -p * cang;
    let t10 = -p * cang * ephi;
    let t11 = -p * s * ephi;
    for row in 0..a.rows() {
        let u = a.get(row, top);
        let v = a.get(row, top + 1);
        a.set(row, top, u * t00 + v * t10);
        a.set(row, top + 1, u * t01 + v * t11);
    }
}

/// `A <- T(theta, phi)† A` restricted to rows (top, top+1).
fn apply_left_cell_dagger(a: &mut ComplexMatrix, top: usize, theta: f64, phi: f64) {
    let q = Complex64::from_polar(1.0, (theta - PI) / 2.0);
    let s = (theta / 2.0).sin();
    let cang = (theta / 2.0).cos();
    let ephi = Complex64::from_polar(1.0, phi);
    let d00 = q * s;
    let d01 = -q * cang * ephi;
    let d10 = -q * cang;
    let d11 = -q * s * ephi;
    for col in 0..a.cols() {
        let u = a.get(top, col);
        let v = a.get(top + 1, col);
        a.set(top, col, d00 * u + d01 * v);
        a.set(top + 1, col, d10 * u + d11 * v);
    }
}

/// Decompose a unitary into a complete phase program for the square mesh.
///
/// Emits exactly N(N-1)/2 (theta, phi) pairs plus 2N boundary phases,
/// all wrapped into [0, 2pi). Deterministic: identical input yields an
/// identical config. Where a nulling target is already zero the cell is
/// set to the bar state (theta = pi, phi = 0).
pub fn decompose(u: &UnitaryMatrix) -> Result<CompileResult> {
    let n = u.dim();
    if n < 2 {
        return Err(Error::Dimension(
            "decomposition needs dimension >= 2".into(),
        ));
    }
    let mut a = u.matrix().clone();
    let zero = Complex64::new(0.0, 0.0);
    // (top_mode, theta, phi) in application order
    let mut left: Vec<(usize, f64, f64)> = Vec::new();
    let mut right: Vec<(usize, f64, f64)> = Vec::new();

    for i in 1..n {
        if i % 2 == 1 {
            for j in 0..i {
                let r = n - 1 - j;
                let c = i - 1 - j;
                let (theta, phi) = solve_right_null(&a, r, c);
                apply_right_cell(&mut a, c, theta, phi);
                a.set(r, c, zero);
                right.push((c, theta, phi));
            }
        } else {
            for j in 1..=i {
                let r = n + j - i - 1;
                let c = j - 1;
                let (theta, phi) = solve_left_null(&a, r, c);
                apply_left_cell_dagger(&mut a, r - 1, theta, phi);
                a.set(r, c, zero);
                left.push((r - 1, theta, phi));
            }
        }
    }

    // the running matrix must now be diagonal
    let mut worst = 0.0f64;
    let mut worst_at = (0usize, 0usize);
    for j in 0..n {
        for k in 0..n {
            if j != k {
                let mag = a.get(j, k).norm();
                if mag > worst {
                    worst = mag;
                    worst_at = (j, k);
                }
            }
        }
    }
    if worst > NULLING_TOL {
        return Err(Error::Numerical(format!(
            "nulling left residue {worst:.3e} at ({}, {})",
            worst_at.0, worst_at.1
        )));
    }

    let mut d: Vec<Complex64> = (0..n)
        .map(|k| {
            let z = a.get(k, k);
            if z.norm() > 0.0 {
                z / z.norm()
            } else {
                Complex64::new(1.0, 0.0)
            }
        })
        .collect();

    // product order: left cells, then right cells converted by pushing the
    // diagonal through their daggers
    let mut product: Vec<(usize, f64, f64)> = left;
    for &(top, theta, phi) in right.iter().rev() {
        let phi_new = wrap_phase((d[top] / d[top + 1]).arg());
        let d_top = d[top];
        d[top] = d_top * Complex64::from_polar(1.0, theta - PI);
        d[top + 1] = d_top * Complex64::from_polar(1.0, theta + phi - PI);
        product.push((top, theta, phi_new));
    }

    // earliest-layer scheduling of the application order onto the lattice
    let spec = mesh_layout(n)?;
    let mut next_free = vec![0usize; n];
    let mut thetas = vec![f64::NAN; spec.n_cells()];
    let mut phis = vec![f64::NAN; spec.n_cells()];
    for &(top, theta, phi) in product.iter().rev() {
        let layer = next_free[top].max(next_free[top + 1]);
        next_free[top] = layer + 1;
        next_free[top + 1] = layer + 1;
        let cell_id = spec.cell_at(layer, top).ok_or_else(|| {
            Error::Numerical(format!(
                "cell scheduling fell outside the lattice at layer {layer}, top {top}"
            ))
        })?;
        thetas[cell_id] = theta;
        phis[cell_id] = phi;
    }
    if thetas.iter().any(|t| t.is_nan()) {
        return Err(Error::Numerical(
            "cell scheduling did not cover the lattice".into(),
        ));
    }

    let gamma = d[0].arg();
    let input_phases: Vec<f64> = d.iter().map(|z| wrap_phase(gamma - z.arg())).collect();
    let config = canonicalize(&PhaseConfig::new(
        n,
        thetas,
        phis,
        input_phases,
        vec![0.0; n],
    )?);

    let recon = reconstruct(&config)?;
    let residual = recon
        .matrix()
        .scale(Complex64::from_polar(1.0, gamma))
        .max_abs_diff(u.matrix());

    Ok(CompileResult {
        config,
        residual,
        global_phase: wrap_phase(gamma),
    })
}
