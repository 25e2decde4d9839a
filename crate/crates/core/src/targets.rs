//! Target unitary families (permutations, cyclic-shift powers, switchings,
//! Haar, intensity masks), the amplitude fidelity metric, and Monte Carlo
//! fidelity reports under imperfection models.

use num_complex::Complex64;
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use crate::compiler::decompose;
use crate::error::{Error, Result};
use crate::matrix::{haar_random_unitary, polar_unitary_factor, ComplexMatrix, UnitaryMatrix};
use crate::mesh::{forward, mesh_layout, ImperfectionModel, ScatteringMatrix};
use crate::seed::derive_seed;

/// Measured output power per input/output mode pair, normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct IntensityMatrix {
    dim: usize,
    /// Row-major, entry (j, k) = power at output j for input k.
    values: Vec<f64>,
}

impl IntensityMatrix {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.len() != dim * dim {
            return Err(Error::Dimension(format!(
                "intensity matrix needs {dim}x{dim} entries, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Domain(
                "intensities must be finite and non-negative".into(),
            ));
        }
        Ok(Self { dim, values })
    }

    /// Elementwise |S|^2 of a scattering matrix.
    pub fn from_scattering(s: &ScatteringMatrix) -> Self {
        let dim = s.dim();
        let values = (0..dim)
            .flat_map(|j| (0..dim).map(move |k| (j, k)))
            .map(|(j, k)| s.get(j, k).norm_sqr())
            .collect();
        Self { dim, values }
    }

    /// Elementwise |U|^2 of a unitary.
    pub fn from_unitary(u: &UnitaryMatrix) -> Self {
        let dim = u.dim();
        let values = (0..dim)
            .flat_map(|j| (0..dim).map(move |k| (j, k)))
            .map(|(j, k)| u.matrix().get(j, k).norm_sqr())
            .collect();
        Self { dim, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.dim + col]
    }

    /// Plot-ready CSV: one output mode per line, inputs across columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for j in 0..self.dim {
            let row: Vec<String> = (0..self.dim).map(|k| self.get(j, k).to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Permutation unitary: entry (perm[k], k) = 1.
pub fn permutation_matrix(perm: &[usize]) -> Result<UnitaryMatrix> {
    let d = perm.len();
    let mut seen = vec![false; d];
    for &p in perm {
        if p >= d || seen[p] {
            return Err(Error::Domain(format!(
                "not a permutation of 0..{d}: {perm:?}"
            )));
        }
        seen[p] = true;
    }
    let mut m = ComplexMatrix::zeros(d, d);
    for (k, &p) in perm.iter().enumerate() {
        m.set(p, k, Complex64::new(1.0, 0.0));
    }
    UnitaryMatrix::new(m)
}

/// n-th power of the cyclic shift `X|j> = |(j+1) mod D>`; n is reduced
/// mod D, so X^0 = X^D = I.
pub fn pauli_x_power(dim: usize, n: i64) -> Result<UnitaryMatrix> {
    if dim < 2 {
        return Err(Error::Dimension(format!(
            "shift matrices need dimension >= 2, got {dim}"
        )));
    }
    let shift = n.rem_euclid(dim as i64) as usize;
    let perm: Vec<usize> = (0..dim).map(|j| (j + shift) % dim).collect();
    permutation_matrix(&perm)
}

/// Transposition of modes a and b, identity elsewhere.
pub fn switching_matrix(dim: usize, a: usize, b: usize) -> Result<UnitaryMatrix> {
    if a == b {
        return Err(Error::Domain(format!(
            "switching needs two distinct modes, got ({a}, {b})"
        )));
    }
    if a >= dim || b >= dim {
        return Err(Error::Dimension(format!(
            "switching modes ({a}, {b}) out of range for dimension {dim}"
        )));
    }
    let mut perm: Vec<usize> = (0..dim).collect();
    perm.swap(a, b);
    permutation_matrix(&perm)
}

/// Binary intensity mask on a D x D grid.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryMask {
    dim: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(dim: usize, bits: Vec<bool>) -> Result<Self> {
        if dim == 0 || bits.len() != dim * dim {
            return Err(Error::Dimension(format!(
                "mask needs {dim}x{dim} bits, got {}",
                bits.len()
            )));
        }
        if !bits.iter().any(|&b| b) {
            return Err(Error::Domain("mask must have at least one set bit".into()));
        }
        Ok(Self { dim, bits })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.dim + col]
    }

    /// 0/1 CSV grid, one row per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for j in 0..self.dim {
            let row: Vec<&str> = (0..self.dim)
                .map(|k| if self.get(j, k) { "1" } else { "0" })
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let dim = rows.len();
        let mut bits = Vec::with_capacity(dim * dim);
        for (j, row) in rows.iter().enumerate() {
            let fields: Vec<&str> = row.trim().split(',').collect();
            if fields.len() != dim {
                return Err(Error::Parse(format!(
                    "mask row {} has {} fields, expected {dim}",
                    j + 1,
                    fields.len()
                )));
            }
            for f in fields {
                match f.trim() {
                    "0" => bits.push(false),
                    "1" => bits.push(true),
                    other => {
                        return Err(Error::Parse(format!(
                            "mask entries must be 0 or 1, got {other:?}"
                        )))
                    }
                }
            }
        }
        Self::new(dim, bits)
    }

    /// Random mask with ~50% fill, deterministic per seed; always has at
    /// least one set bit.
    pub fn random(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("mask dimension must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bits: Vec<bool> = (0..dim * dim).map(|_| rng.gen_bool(0.5)).collect();
        if !bits.iter().any(|&b| b) {
            let fix = rng.gen_range(0..bits.len());
            bits[fix] = true;
        }
        Self::new(dim, bits)
    }
}

/// Example 12x12 letter bitmaps for logo-style targets. Hand-drawn for
/// this project; any 0/1 CSV grid works the same way.
pub fn letter_q_mask() -> BinaryMask {
    mask_from_art(&[
        "000111111000",
        "001100001100",
        "011000000110",
        "010000000010",
        "010000000010",
        "010000000010",
        "010000000010",
        "010000100010",
        "011000010110",
        "001100001100",
        "000111111110",
        "000000000011",
    ])
}

/// Companion 12x12 letter bitmap; see [`letter_q_mask`].
pub fn letter_x_mask() -> BinaryMask {
    mask_from_art(&[
        "110000000011",
        "111000000111",
        "011100001110",
        "001110011100",
        "000111111000",
        "000011110000",
        "000011110000",
        "000111111000",
        "001110011100",
        "011100001110",
        "111000000111",
        "110000000011",
    ])
}

fn mask_from_art(rows: &[&str]) -> BinaryMask {
    let dim = rows.len();
    let bits = rows
        .iter()
        .flat_map(|row| row.chars().map(|c| c == '1'))
        .collect();
    BinaryMask::new(dim, bits).expect("static bitmaps are valid")
}

/// Best-effort unitary whose intensity pattern matches a binary mask, by
/// alternating projections: impose mask amplitudes keeping phases, then
/// project to the nearest unitary. Phases start from a discrete-Fourier
/// ramp so the first iterate has full rank for generic masks.
///
/// Returns the best iterate and its mismatch
/// `|| |U|^2 - mask_normalized ||_F`; masks need not be attainable.
pub fn intensity_mask_unitary(
    mask: &BinaryMask,
    max_iters: usize,
    tol: f64,
) -> Result<(UnitaryMatrix, f64)> {
    let d = mask.dim();
    if d < 2 {
        return Err(Error::Dimension("mask unitaries need dimension >= 2".into()));
    }
    let total: f64 = (0..d * d).filter(|i| mask.bits[*i]).count() as f64;
    // |U|^2 entries of a unitary sum to D
    let target: Vec<f64> = mask
        .bits
        .iter()
        .map(|&b| if b { d as f64 / total } else { 0.0 })
        .collect();
    let amplitude: Vec<f64> = target.iter().map(|t| t.sqrt()).collect();

    let mismatch = |u: &UnitaryMatrix| -> f64 {
        let mut acc = 0.0;
        for j in 0..d {
            for k in 0..d {
                let diff = u.matrix().get(j, k).norm_sqr() - target[j * d + k];
                acc += diff * diff;
            }
        }
        acc.sqrt()
    };

    let mut x = ComplexMatrix::from_fn(d, d, |j, k| {
        Complex64::from_polar(amplitude[j * d + k], TAU * (j * k) as f64 / d as f64)
    });
    let mut best: Option<(UnitaryMatrix, f64)> = None;
    let mut previous = f64::INFINITY;
    for _ in 0..max_iters.max(1) {
        let u = polar_unitary_factor(&x)?;
        let err = mismatch(&u);
        if best.as_ref().map_or(true, |(_, b)| err < *b) {
            best = Some((u.clone(), err));
        }
        let rel_change = (previous - err).abs() / previous.max(1e-300);
        if err < tol || rel_change < tol {
            break;
        }
        previous = err;
        x = ComplexMatrix::from_fn(d, d, |j, k| {
            let z = u.matrix().get(j, k);
            let phase = if z.norm() > 0.0 {
                z / z.norm()
            } else {
                Complex64::new(1.0, 0.0)
            };
            phase * amplitude[j * d + k]
        });
    }
    best.ok_or_else(|| Error::Numerical("mask projection produced no iterate".into()))
}

/// The amplitude fidelity `(1/D) sum |U_target|_jk |U_exp|_jk`, where
/// |U_exp| comes from the measured intensities with each column
/// normalized to unit power (which cancels input coupling and any
/// mode-uniform loss), then square-rooted elementwise.
pub fn amplitude_fidelity(target: &UnitaryMatrix, measured: &IntensityMatrix) -> Result<f64> {
    let d = target.dim();
    if measured.dim() != d {
        return Err(Error::Dimension(format!(
            "target is {d}x{d} but measurement is {0}x{0}",
            measured.dim()
        )));
    }
    let mut fidelity = 0.0;
    for k in 0..d {
        let col_power: f64 = (0..d).map(|j| measured.get(j, k)).sum();
        if col_power <= 0.0 {
            return Err(Error::DegenerateData(format!(
                "measured column {k} carries no power"
            )));
        }
        for j in 0..d {
            let amp = (measured.get(j, k) / col_power).sqrt();
            fidelity += target.matrix().get(j, k).norm() * amp;
        }
    }
    Ok(fidelity / d as f64)
}

/// Families of target transformations for fidelity studies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetFamily {
    Permutation,
    PauliX,
    Switching,
    Haar,
    Mask,
}

impl fmt::Display for TargetFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            TargetFamily::Permutation => "permutation",
            TargetFamily::PauliX => "pauli_x",
            TargetFamily::Switching => "switching",
            TargetFamily::Haar => "haar",
            TargetFamily::Mask => "mask",
        };
        f.write_str(name)
    }
}

impl FromStr for TargetFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "permutation" | "perm" => Ok(TargetFamily::Permutation),
            "pauli_x" | "pauli-x" | "x" => Ok(TargetFamily::PauliX),
            "switching" => Ok(TargetFamily::Switching),
            "haar" => Ok(TargetFamily::Haar),
            "mask" | "logo" => Ok(TargetFamily::Mask),
            other => Err(Error::Parse(format!("unknown target family {other:?}"))),
        }
    }
}

/// Generate the i-th target of a family at a given dimension.
pub fn family_target(
    family: TargetFamily,
    dim: usize,
    index: usize,
    seed: u64,
) -> Result<UnitaryMatrix> {
    let sample_seed = derive_seed(seed, 2 * index as u64);
    match family {
        TargetFamily::Haar => haar_random_unitary(dim, sample_seed),
        TargetFamily::Permutation => {
            let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
            let mut perm: Vec<usize> = (0..dim).collect();
            perm.shuffle(&mut rng);
            permutation_matrix(&perm)
        }
        TargetFamily::PauliX => pauli_x_power(dim, index as i64),
        TargetFamily::Switching => {
            let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
            let a = rng.gen_range(0..dim);
            let mut b = rng.gen_range(0..dim - 1);
            if b >= a {
                b += 1;
            }
            switching_matrix(dim, a, b)
        }
        TargetFamily::Mask => {
            let mask = if dim == 12 {
                if index % 2 == 0 {
                    letter_q_mask()
                } else {
                    letter_x_mask()
                }
            } else {
                BinaryMask::random(dim, sample_seed)?
            };
            let (u, _) = intensity_mask_unitary(&mask, 200, 1e-10)?;
            Ok(u)
        }
    }
}

/// Statistics of simulated fidelities for one target family.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FidelityReport {
    pub family: TargetFamily,
    pub n_samples: usize,
    pub mean: f64,
    pub std: f64,
    pub per_sample: Vec<f64>,
}

/// Full pipeline per sample: generate target, compile, simulate under the
/// imperfection model with a fresh derived noise seed, measure intensities,
/// score with [`amplitude_fidelity`].
pub fn fidelity_report(
    family: TargetFamily,
    dim: usize,
    n_samples: usize,
    imp: &ImperfectionModel,
    seed: u64,
) -> Result<FidelityReport> {
    report_over_targets(family, dim, n_samples, imp, seed, |index| {
        family_target(family, dim, index, seed)
    })
}

/// As [`fidelity_report`] for the mask family, using one caller-supplied
/// mask for every sample.
pub fn fidelity_report_with_mask(
    mask: &BinaryMask,
    dim: usize,
    n_samples: usize,
    imp: &ImperfectionModel,
    seed: u64,
) -> Result<FidelityReport> {
    if mask.dim() != dim {
        return Err(Error::Dimension(format!(
            "mask is {0}x{0} but the mesh has {dim} modes",
            mask.dim()
        )));
    }
    let (target, _) = intensity_mask_unitary(mask, 200, 1e-10)?;
    report_over_targets(TargetFamily::Mask, dim, n_samples, imp, seed, |_| {
        Ok(target.clone())
    })
}

fn report_over_targets(
    family: TargetFamily,
    dim: usize,
    n_samples: usize,
    imp: &ImperfectionModel,
    seed: u64,
    mut target_for: impl FnMut(usize) -> Result<UnitaryMatrix>,
) -> Result<FidelityReport> {
    if n_samples == 0 {
        return Err(Error::Domain("report needs at least one sample".into()));
    }
    let spec = mesh_layout(dim)?;
    let mut per_sample = Vec::with_capacity(n_samples);
    for index in 0..n_samples {
        let target = target_for(index)?;
        let compiled = decompose(&target)
            .map_err(|e| Error::Numerical(format!("sample {index}: {e}")))?;
        let noise_seed = derive_seed(seed, 2 * index as u64 + 1);
        let s = forward(&spec, &compiled.config, imp, Some(noise_seed))?;
        let intensity = IntensityMatrix::from_scattering(&s);
        per_sample.push(amplitude_fidelity(&target, &intensity)?);
    }
    let mean = per_sample.iter().sum::<f64>() / n_samples as f64;
    let std = if n_samples > 1 {
        (per_sample.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>()
            / (n_samples - 1) as f64)
            .sqrt()
    } else {
        0.0
    };
    Ok(FidelityReport {
        family,
        n_samples,
        mean,
        std,
        per_sample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::LossProfile;

    #[test]
    fn permutation_examples() {
        let id = permutation_matrix(&[0, 1, 2]).unwrap();
        assert!(id.matrix().max_abs_diff(&ComplexMatrix::identity(3)) < 1e-15);

        let swap = permutation_matrix(&[1, 0]).unwrap();
        assert_eq!(swap.matrix().get(0, 1), Complex64::new(1.0, 0.0));
        assert_eq!(swap.matrix().get(1, 0), Complex64::new(1.0, 0.0));

        assert!(permutation_matrix(&[0, 0, 1]).is_err());
        assert!(permutation_matrix(&[0, 3]).is_err());
    }

    #[test]
    fn shift_power_examples() {
        let id = pauli_x_power(12, 0).unwrap();
        assert!(id.matrix().max_abs_diff(&ComplexMatrix::identity(12)) < 1e-15);
        let full = pauli_x_power(12, 12).unwrap();
        assert!(full.matrix().max_abs_diff(&ComplexMatrix::identity(12)) < 1e-15);

        let six = pauli_x_power(12, 6).unwrap();
        for j in 0..12 {
            assert_eq!(six.matrix().get((j + 6) % 12, j), Complex64::new(1.0, 0.0));
        }
        let neg = pauli_x_power(12, -1).unwrap();
        let eleven = pauli_x_power(12, 11).unwrap();
        assert!(neg.matrix().max_abs_diff(eleven.matrix()) < 1e-15);
    }

    #[test]
    fn switching_examples() {
        let s = switching_matrix(12, 0, 6).unwrap();
        let twice = UnitaryMatrix::new(s.matrix().mul(s.matrix()).unwrap()).unwrap();
        assert!(twice.matrix().max_abs_diff(&ComplexMatrix::identity(12)) < 1e-15);
        assert!(switching_matrix(12, 3, 3).is_err());
    }

    #[test]
    fn target_families_compile_cleanly() {
        let perm = permutation_matrix(&[5, 2, 7, 0, 9, 11, 1, 3, 10, 4, 8, 6]).unwrap();
        assert!(decompose(&perm).unwrap().residual < 1e-9);
        let sw = switching_matrix(12, 0, 6).unwrap();
        assert!(decompose(&sw).unwrap().residual < 1e-9);
    }

    #[test]
    fn identity_mask_is_attainable() {
        let bits = (0..16).map(|i| i % 5 == 0).collect();
        let mask = BinaryMask::new(4, bits).unwrap();
        let (u, err) = intensity_mask_unitary(&mask, 100, 1e-12).unwrap();
        assert!(err < 1e-9, "mismatch {err}");
        for j in 0..4 {
            assert!((u.matrix().get(j, j).norm_sqr() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn all_ones_mask_gives_flat_modulus() {
        let mask = BinaryMask::new(6, vec![true; 36]).unwrap();
        let (u, err) = intensity_mask_unitary(&mask, 200, 1e-12).unwrap();
        assert!(err < 1e-6, "mismatch {err}");
        for j in 0..6 {
            for k in 0..6 {
                assert!((u.matrix().get(j, k).norm_sqr() - 1.0 / 6.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn letter_masks_converge_to_a_reported_best() {
        let mask = letter_q_mask();
        let (u, err) = intensity_mask_unitary(&mask, 60, 1e-9).unwrap();
        assert!(u.dim() == 12);
        assert!(err.is_finite());
        // more iterations never report a worse best
        let (_, err_more) = intensity_mask_unitary(&mask, 240, 1e-9).unwrap();
        assert!(err_more <= err + 1e-12);
        // the first iterate alone is worse or equal
        let (_, err_first) = intensity_mask_unitary(&mask, 1, 1e-9).unwrap();
        assert!(err <= err_first + 1e-12);
    }

    #[test]
    fn mask_rejects_all_zero() {
        assert!(BinaryMask::new(3, vec![false; 9]).is_err());
    }

    #[test]
    fn mask_csv_round_trip() {
        let mask = letter_x_mask();
        let text = mask.to_csv();
        let back = BinaryMask::from_csv(&text).unwrap();
        assert_eq!(back, mask);
    }

    #[test]
    fn self_fidelity_is_one() {
        let u = haar_random_unitary(8, 3).unwrap();
        let intensity = IntensityMatrix::from_unitary(&u);
        let f = amplitude_fidelity(&u, &intensity).unwrap();
        assert!((f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_support_scores_zero() {
        let id = UnitaryMatrix::new(ComplexMatrix::identity(4)).unwrap();
        let shifted = pauli_x_power(4, 1).unwrap();
        let intensity = IntensityMatrix::from_unitary(&shifted);
        let f = amplitude_fidelity(&id, &intensity).unwrap();
        assert!(f.abs() < 1e-12);
    }

    #[test]
    fn fidelity_ignores_column_scaling() {
        let u = haar_random_unitary(6, 8).unwrap();
        let base = IntensityMatrix::from_unitary(&u);
        let scaled = IntensityMatrix::new(
            6,
            (0..36)
                .map(|i| base.get(i / 6, i % 6) * (1.0 + 0.5 * (i % 6) as f64))
                .collect(),
        )
        .unwrap();
        let f = amplitude_fidelity(&u, &scaled).unwrap();
        assert!((f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fidelity_stays_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for trial in 0..25 {
            let u = haar_random_unitary(5, trial).unwrap();
            let values: Vec<f64> = (0..25).map(|_| rng.gen_range(0.0..2.0)).collect();
            let measured = IntensityMatrix::new(5, values).unwrap();
            let f = amplitude_fidelity(&u, &measured).unwrap();
            assert!((0.0..=1.0 + 1e-12).contains(&f), "fidelity {f}");
        }
    }

    #[test]
    fn fidelity_rejects_dead_column() {
        let u = haar_random_unitary(3, 1).unwrap();
        let mut values = vec![0.1; 9];
        values[0] = 0.0;
        values[3] = 0.0;
        values[6] = 0.0;
        let measured = IntensityMatrix::new(3, values).unwrap();
        assert!(matches!(
            amplitude_fidelity(&u, &measured),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn uniform_loss_does_not_change_fidelity() {
        let spec = mesh_layout(6).unwrap();
        let target = haar_random_unitary(6, 21).unwrap();
        let compiled = decompose(&target).unwrap();
        let imp = ImperfectionModel {
            input_coupling_loss_db: LossProfile::Uniform(2.1),
            output_coupling_loss_db: LossProfile::Uniform(2.1),
            propagation_loss_db_per_layer: 0.8 / 6.0,
            ..Default::default()
        };
        let s = forward(&spec, &compiled.config, &imp, None).unwrap();
        let f = amplitude_fidelity(&target, &IntensityMatrix::from_scattering(&s)).unwrap();
        assert!((f - 1.0).abs() < 1e-9, "fidelity {f}");
    }

    #[test]
    fn ideal_reports_score_one_for_every_family() {
        for dim in [4usize, 8, 12] {
            for family in [
                TargetFamily::Permutation,
                TargetFamily::PauliX,
                TargetFamily::Switching,
                TargetFamily::Haar,
                TargetFamily::Mask,
            ] {
                let report =
                    fidelity_report(family, dim, 3, &ImperfectionModel::ideal(), 5).unwrap();
                assert!(
                    (report.mean - 1.0).abs() < 1e-9,
                    "family {family} dim {dim}: mean {}",
                    report.mean
                );
                assert!(report.std < 1e-9);
            }
        }
    }

    #[test]
    fn phase_noise_degrades_fidelity_monotonically() {
        let sigmas = [0.0, 0.05, 0.1, 0.2, 0.4];
        let mut means = Vec::new();
        for (level, &sigma) in sigmas.iter().enumerate() {
            let imp = ImperfectionModel {
                phase_noise_sigma: sigma,
                ..Default::default()
            };
            let report =
                fidelity_report(TargetFamily::Haar, 8, 20, &imp, 100 + level as u64).unwrap();
            means.push(report.mean);
        }
        for w in means.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "means not monotone: {means:?}");
        }
    }

    #[test]
    fn sparse_targets_degrade_less_than_haar_at_small_noise() {
        // holds in the high-fidelity regime; at large sigma the dense
        // random-overlap floor of the amplitude fidelity inverts it
        let imp = ImperfectionModel {
            phase_noise_sigma: 0.1,
            ..Default::default()
        };
        let switching = fidelity_report(TargetFamily::Switching, 12, 120, &imp, 50).unwrap();
        let haar = fidelity_report(TargetFamily::Haar, 12, 120, &imp, 51).unwrap();
        assert!(
            switching.mean >= haar.mean,
            "switching {} < haar {}",
            switching.mean,
            haar.mean
        );
    }

    #[test]
    fn family_parsing() {
        assert_eq!(TargetFamily::from_str("haar").unwrap(), TargetFamily::Haar);
        assert_eq!(
            TargetFamily::from_str("perm").unwrap(),
            TargetFamily::Permutation
        );
        assert!(TargetFamily::from_str("nope").is_err());
        assert_eq!(TargetFamily::Haar.to_string(), "haar");
    }
}
