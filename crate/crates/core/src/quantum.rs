//! Two-photon interference through a configured mesh: coincidence
//! probabilities with partial distinguishability, Hong-Ou-Mandel delay
//! scans on individual cells, and visibility statistics.
//!
//! The scattering matrix acts identically on classical fields and on the
//! photon ladder operators, so two-photon statistics follow directly from
//! S. For photons entering modes (m, n) and leaving on (j, k), the
//! coincidence probability at wavepacket overlap `v` is the convex mix
//!
//! ```text
//! P = v |S_jm S_kn + S_km S_jn|^2 + (1 - v) (|S_jm S_kn|^2 + |S_km S_jn|^2)
//! ```
//!
//! of the quantum (permanent) and classical terms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::matrix::{permanent, ComplexMatrix};
use crate::mesh::{forward, ImperfectionModel, MeshSpec, PhaseConfig, ScatteringMatrix};

/// Photon-pair source: overlap at zero delay, Gaussian overlap width in
/// seconds, and a pair rate used only to scale simulated count rates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceModel {
    /// Mod-squared wavepacket overlap at zero delay, in [0, 1].
    pub base_indistinguishability: f64,
    /// Gaussian width of the overlap versus delay, seconds.
    pub coherence_time_sigma: f64,
    /// Pairs per second; scaling only.
    pub pair_rate: f64,
}

impl Default for SourceModel {
    fn default() -> Self {
        Self {
            base_indistinguishability: 0.94,
            coherence_time_sigma: 1e-12,
            pair_rate: 1000.0,
        }
    }
}

impl SourceModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.base_indistinguishability) {
            return Err(Error::Domain(
                "base indistinguishability must lie in [0, 1]".into(),
            ));
        }
        if !(self.coherence_time_sigma > 0.0) {
            return Err(Error::Domain("coherence time sigma must be > 0".into()));
        }
        if !(self.pair_rate >= 0.0) {
            return Err(Error::Domain("pair rate must be >= 0".into()));
        }
        Ok(())
    }
}

/// Wavepacket overlap at a relative delay: `v(tau) = v0 exp(-tau^2 / 2 sigma^2)`.
pub fn overlap_at_delay(tau: f64, source: &SourceModel) -> f64 {
    let x = tau / source.coherence_time_sigma;
    source.base_indistinguishability * (-0.5 * x * x).exp()
}

fn check_pair(n: usize, pair: (usize, usize), what: &str) -> Result<()> {
    let (a, b) = pair;
    if a == b {
        return Err(Error::Domain(format!(
            "{what} modes must differ, got ({a}, {b}); collision inputs are unsupported"
        )));
    }
    if a >= n || b >= n {
        return Err(Error::Dimension(format!(
            "{what} pair ({a}, {b}) out of range for {n} modes"
        )));
    }
    Ok(())
}

/// Coincidence probability for one photon pair, direct amplitude form.
pub fn coincidence_probability(
    s: &ScatteringMatrix,
    in_pair: (usize, usize),
    out_pair: (usize, usize),
    overlap: f64,
) -> Result<f64> {
    let n = s.dim();
    check_pair(n, in_pair, "input")?;
    check_pair(n, out_pair, "output")?;
    if !(0.0..=1.0).contains(&overlap) {
        return Err(Error::Domain(format!(
            "overlap must lie in [0, 1], got {overlap}"
        )));
    }
    let (m, nn) = in_pair;
    let (j, k) = out_pair;
    let quantum = (s.get(j, m) * s.get(k, nn) + s.get(k, m) * s.get(j, nn)).norm_sqr();
    let classical =
        (s.get(j, m) * s.get(k, nn)).norm_sqr() + (s.get(k, m) * s.get(j, nn)).norm_sqr();
    Ok(overlap * quantum + (1.0 - overlap) * classical)
}

/// Coincidence probability over the permanent of the 2x2 submatrix; the
/// independent route checked against [`coincidence_probability`].
pub fn coincidence_via_permanent(
    s: &ScatteringMatrix,
    in_pair: (usize, usize),
    out_pair: (usize, usize),
    distinguishable: bool,
) -> Result<f64> {
    let n = s.dim();
    check_pair(n, in_pair, "input")?;
    check_pair(n, out_pair, "output")?;
    let (m, nn) = in_pair;
    let (j, k) = out_pair;
    if distinguishable {
        let sub = ComplexMatrix::from_fn(2, 2, |r, c| {
            let row = if r == 0 { j } else { k };
            let col = if c == 0 { m } else { nn };
            num_complex::Complex64::new(s.get(row, col).norm_sqr(), 0.0)
        });
        Ok(permanent(&sub)?.re)
    } else {
        let sub = ComplexMatrix::from_fn(2, 2, |r, c| {
            let row = if r == 0 { j } else { k };
            let col = if c == 0 { m } else { nn };
            s.get(row, col)
        });
        Ok(permanent(&sub)?.norm_sqr())
    }
}

/// Full two-photon output distribution over unordered outcomes (j <= k),
/// computed with the permanent formalism; bunched outcomes carry the 1/2!
/// normalization. Sums to 1 on a lossless mesh for any overlap.
pub fn two_photon_output_distribution(
    s: &ScatteringMatrix,
    in_pair: (usize, usize),
    overlap: f64,
) -> Result<Vec<((usize, usize), f64)>> {
    let n = s.dim();
    check_pair(n, in_pair, "input")?;
    if !(0.0..=1.0).contains(&overlap) {
        return Err(Error::Domain(format!(
            "overlap must lie in [0, 1], got {overlap}"
        )));
    }
    let (m, nn) = in_pair;
    let mut events = Vec::with_capacity(n * (n + 1) / 2);
    for j in 0..n {
        for k in j..n {
            let amp_sub = ComplexMatrix::from_fn(2, 2, |r, c| {
                let row = if r == 0 { j } else { k };
                let col = if c == 0 { m } else { nn };
                s.get(row, col)
            });
            let int_sub = ComplexMatrix::from_fn(2, 2, |r, c| {
                let row = if r == 0 { j } else { k };
                let col = if c == 0 { m } else { nn };
                num_complex::Complex64::new(s.get(row, col).norm_sqr(), 0.0)
            });
            let repeats = if j == k { 2.0 } else { 1.0 };
            let quantum = permanent(&amp_sub)?.norm_sqr() / repeats;
            let classical = permanent(&int_sub)?.re / repeats;
            events.push(((j, k), overlap * quantum + (1.0 - overlap) * classical));
        }
    }
    Ok(events)
}

/// Routed configuration plus the input and output mode pairs aimed at the
/// target cell.
pub type RoutedCell = (PhaseConfig, (usize, usize), (usize, usize));

/// Program the mesh so one target cell sits at its 50:50 point with every
/// other cell in the bar state, and return the input/output mode pair
/// hitting that cell's two arms.
///
/// Bar cells are diagonal, so straight-line paths reach any cell at its
/// own mode pair regardless of layer; with unit overlap the returned
/// configuration gives exact coincidence suppression.
pub fn route_to_cell(spec: &MeshSpec, cell_id: usize) -> Result<RoutedCell> {
    let site = spec.cell(cell_id).ok_or_else(|| {
        Error::Range(format!(
            "cell {cell_id} out of range for a mesh with {} cells",
            spec.n_cells()
        ))
    })?;
    let mut config = PhaseConfig::bar_state(spec.n_modes())?;
    config.thetas[cell_id] = PI / 2.0;
    config.phis[cell_id] = 0.0;
    let pair = (site.top_mode, site.top_mode + 1);
    Ok((config, pair, pair))
}

/// One Hong-Ou-Mandel delay scan, normalized to the distinguishable
/// plateau.
#[derive(Clone, Debug, PartialEq)]
pub struct HomCurve {
    pub delays: Vec<f64>,
    /// Coincidence rate per delay, normalized so the large-delay plateau
    /// averages to 1.
    pub coincidence_rate: Vec<f64>,
    pub cell_id: usize,
}

impl HomCurve {
    /// CSV with header `delay_s,normalized_cc`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("delay_s,normalized_cc\n");
        for (tau, cc) in self.delays.iter().zip(&self.coincidence_rate) {
            out.push_str(&format!("{tau},{cc}\n"));
        }
        out
    }

    pub fn from_csv(text: &str, cell_id: usize) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next().map(str::trim) {
            Some("delay_s,normalized_cc") => {}
            other => {
                return Err(Error::Parse(format!(
                    "unexpected HOM curve header {other:?}"
                )))
            }
        }
        let mut delays = Vec::new();
        let mut rates = Vec::new();
        for (idx, line) in lines.enumerate() {
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != 2 {
                return Err(Error::Parse(format!(
                    "line {}: expected 2 fields, got {}",
                    idx + 2,
                    fields.len()
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", idx + 2)))
            };
            delays.push(parse(fields[0])?);
            rates.push(parse(fields[1])?);
        }
        Ok(Self {
            delays,
            coincidence_rate: rates,
            cell_id,
        })
    }
}

/// Delay grid for HOM scans: a dense center out to 3.5 sigma plus
/// far plateau points at 8 to 10 sigma on both sides, so the plateau
/// estimate is uncontaminated by the dip tail.
pub fn default_delay_grid(sigma: f64) -> Vec<f64> {
    let mut delays = Vec::new();
    let plateau: [f64; 5] = [10.0, 9.5, 9.0, 8.5, 8.0];
    for p in plateau {
        delays.push(-p * sigma);
    }
    let center_points = 41;
    for i in 0..center_points {
        let frac = i as f64 / (center_points - 1) as f64;
        delays.push((-3.5 + 7.0 * frac) * sigma);
    }
    for p in plateau.iter().rev() {
        delays.push(p * sigma);
    }
    delays
}

/// Scan a routed cell over photon delays and normalize to the plateau
/// (samples with |tau| >= 4 sigma).
///
/// The mesh is static during a scan: imperfections and the optional noise
/// seed fix one scattering matrix, and only the overlap varies with delay.
pub fn hom_scan(
    spec: &MeshSpec,
    cell_id: usize,
    source: &SourceModel,
    delays: &[f64],
    imp: &ImperfectionModel,
    noise_seed: Option<u64>,
) -> Result<HomCurve> {
    source.validate()?;
    if delays.is_empty() {
        return Err(Error::Range("delay grid is empty".into()));
    }
    let sigma = source.coherence_time_sigma;
    let max_delay = delays.iter().fold(0.0f64, |acc, t| acc.max(t.abs()));
    if max_delay < 5.0 * sigma {
        return Err(Error::Range(format!(
            "delay grid must reach 5 sigma = {:.3e} s, got {:.3e} s",
            5.0 * sigma,
            max_delay
        )));
    }
    let (config, in_pair, out_pair) = route_to_cell(spec, cell_id)?;
    let s = forward(spec, &config, imp, noise_seed)?;
    let raw: Vec<f64> = delays
        .iter()
        .map(|&tau| coincidence_probability(&s, in_pair, out_pair, overlap_at_delay(tau, source)))
        .collect::<Result<_>>()?;
    let plateau: Vec<f64> = delays
        .iter()
        .zip(&raw)
        .filter(|(tau, _)| tau.abs() >= 4.0 * sigma)
        .map(|(_, p)| *p)
        .collect();
    let plateau_mean = plateau.iter().sum::<f64>() / plateau.len() as f64;
    if !(plateau_mean > 0.0) {
        return Err(Error::DegenerateData(
            "distinguishable plateau has zero coincidence rate".into(),
        ));
    }
    Ok(HomCurve {
        delays: delays.to_vec(),
        coincidence_rate: raw.iter().map(|p| p / plateau_mean).collect(),
        cell_id,
    })
}

/// Dip visibility `1 - cc_ind / cc_dist`: minimum of the curve against the
/// plateau mean, taken over samples with |tau| >= 0.75 max |tau|.
pub fn visibility(curve: &HomCurve) -> Result<f64> {
    if curve.delays.is_empty() {
        return Err(Error::DegenerateData("empty HOM curve".into()));
    }
    let max_delay = curve.delays.iter().fold(0.0f64, |acc, t| acc.max(t.abs()));
    let plateau: Vec<f64> = curve
        .delays
        .iter()
        .zip(&curve.coincidence_rate)
        .filter(|(tau, _)| tau.abs() >= 0.75 * max_delay)
        .map(|(_, p)| *p)
        .collect();
    let cc_dist = plateau.iter().sum::<f64>() / plateau.len() as f64;
    if !(cc_dist > 0.0) {
        return Err(Error::DegenerateData(
            "HOM plateau is zero; visibility undefined".into(),
        ));
    }
    let cc_ind = curve
        .coincidence_rate
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    Ok(1.0 - cc_ind / cc_dist)
}

/// Visibility statistics over a set of per-cell HOM scans.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisibilityStats {
    pub per_cell: BTreeMap<usize, f64>,
    pub average: f64,
    /// Cells more than three standard deviations below the mean.
    pub outliers: Vec<usize>,
}

pub fn average_visibility(curves: &[HomCurve]) -> Result<VisibilityStats> {
    if curves.is_empty() {
        return Err(Error::DegenerateData("no HOM curves supplied".into()));
    }
    let mut per_cell = BTreeMap::new();
    for curve in curves {
        per_cell.insert(curve.cell_id, visibility(curve)?);
    }
    let n = per_cell.len() as f64;
    let average = per_cell.values().sum::<f64>() / n;
    let variance = per_cell
        .values()
        .map(|v| (v - average) * (v - average))
        .sum::<f64>()
        / n;
    let threshold = average - 3.0 * variance.sqrt();
    let outliers = per_cell
        .iter()
        .filter(|(_, &v)| v < threshold)
        .map(|(&id, _)| id)
        .collect();
    Ok(VisibilityStats {
        per_cell,
        average,
        outliers,
    })
}

/// Optional Poisson counting noise on a normalized curve, at a given mean
/// plateau count. Returns a new curve renormalized by the plateau counts;
/// physics predictions elsewhere stay noiseless.
pub fn apply_counting_noise(
    curve: &HomCurve,
    plateau_counts: f64,
    seed: u64,
) -> Result<HomCurve> {
    if !(plateau_counts > 0.0) {
        return Err(Error::Domain("plateau counts must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts: Vec<f64> = curve
        .coincidence_rate
        .iter()
        .map(|rate| {
            let lambda = rate * plateau_counts;
            if lambda <= 0.0 {
                0.0
            } else {
                rng.sample(Poisson::new(lambda).expect("positive lambda"))
            }
        })
        .collect();
    Ok(HomCurve {
        delays: curve.delays.clone(),
        coincidence_rate: counts.iter().map(|c| c / plateau_counts).collect(),
        cell_id: curve.cell_id,
    })
}
