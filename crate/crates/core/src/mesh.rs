//! Square MZI mesh: topology, phase program, imperfection model, and the
//! classical scattering matrix obtained by composing unit cells in
//! propagation order.
//!
//! A unit cell is a tunable beam splitter (two directional couplers around
//! an internal phase `theta`) followed by an external phase `phi` on its
//! bottom output. With ideal 50:50 couplers the cell's two-mode block is
//!
//! ```text
//! 1/2 * | 1 - e^{-i theta}                 -i (e^{-i theta} + 1)            |
//!       | -i (e^{-i theta} + 1) e^{-i phi} -(1 - e^{-i theta}) e^{-i phi}   |
//! ```
//!
//! which equals `e^{-i(theta-pi)/2}` times the sin/cos form placed on the
//! coupled mode pair. All programmed phases enter as `e^{-i phase}`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;

/// One programmable node of the mesh.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellSite {
    pub cell_id: usize,
    /// Column of the mesh; layer 0 meets the input light first.
    pub layer: usize,
    /// The cell couples modes `top_mode` and `top_mode + 1` (0-based).
    pub top_mode: usize,
}

/// Topology of a square mesh: N modes, N(N-1)/2 cells over N layers with
/// alternating even/odd offsets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MeshSpec {
    n_modes: usize,
    layout: Vec<CellSite>,
}

/// Number of cells in a square mesh on `n_modes` modes.
pub fn cell_count(n_modes: usize) -> usize {
    n_modes * (n_modes - 1) / 2
}

/// Build the square layout: even layers hold cells at top modes 0, 2, 4, ...
/// and odd layers at 1, 3, 5, ...; cell ids run in (layer, top_mode) order.
pub fn mesh_layout(n_modes: usize) -> Result<MeshSpec> {
    if n_modes < 2 {
        return Err(Error::Dimension(format!(
            "mesh needs at least 2 modes, got {n_modes}"
        )));
    }
    let mut layout = Vec::with_capacity(cell_count(n_modes));
    for layer in 0..n_modes {
        let start = layer % 2;
        let mut top = start;
        while top + 1 < n_modes {
            layout.push(CellSite {
                cell_id: layout.len(),
                layer,
                top_mode: top,
            });
            top += 2;
        }
    }
    debug_assert_eq!(layout.len(), cell_count(n_modes));
    Ok(MeshSpec { n_modes, layout })
}

impl MeshSpec {
    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_cells(&self) -> usize {
        self.layout.len()
    }

    /// Max layer index + 1 over populated layers.
    pub fn depth(&self) -> usize {
        self.layout.iter().map(|c| c.layer + 1).max().unwrap_or(0)
    }

    pub fn cells(&self) -> &[CellSite] {
        &self.layout
    }

    pub fn cell(&self, cell_id: usize) -> Option<&CellSite> {
        self.layout.get(cell_id)
    }

    /// Cell id at a (layer, top_mode) position, if the layout has one there.
    pub fn cell_at(&self, layer: usize, top_mode: usize) -> Option<usize> {
        self.layout
            .iter()
            .find(|c| c.layer == layer && c.top_mode == top_mode)
            .map(|c| c.cell_id)
    }
}

/// Full phase program: (theta, phi) per cell plus one phase shifter on
/// every input and output mode. Indexed by cell id from [`mesh_layout`].
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseConfig {
    pub n_modes: usize,
    pub thetas: Vec<f64>,
    pub phis: Vec<f64>,
    pub input_phases: Vec<f64>,
    pub output_phases: Vec<f64>,
}

impl PhaseConfig {
    pub fn new(
        n_modes: usize,
        thetas: Vec<f64>,
        phis: Vec<f64>,
        input_phases: Vec<f64>,
        output_phases: Vec<f64>,
    ) -> Result<Self> {
        let cfg = Self {
            n_modes,
            thetas,
            phis,
            input_phases,
            output_phases,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Same (theta, phi) at every cell, boundary phases zero.
    pub fn uniform(n_modes: usize, theta: f64, phi: f64) -> Result<Self> {
        let n_cells = cell_count(n_modes);
        Self::new(
            n_modes,
            vec![theta; n_cells],
            vec![phi; n_cells],
            vec![0.0; n_modes],
            vec![0.0; n_modes],
        )
    }

    /// Configuration whose scattering matrix is exactly the identity
    /// (theta = pi, phi = pi at every cell).
    pub fn identity(n_modes: usize) -> Result<Self> {
        Self::uniform(n_modes, std::f64::consts::PI, std::f64::consts::PI)
    }

    /// All cells in bar state (theta = pi, phi = 0): light stays on its
    /// mode, the bottom output of each cell picking up a sign.
    pub fn bar_state(n_modes: usize) -> Result<Self> {
        Self::uniform(n_modes, std::f64::consts::PI, 0.0)
    }

    /// Uniformly random phases in [0, 2pi), deterministic per seed.
    pub fn random(n_modes: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_cells = cell_count(n_modes);
        let mut draw = |count: usize| -> Vec<f64> {
            (0..count).map(|_| rng.gen_range(0.0..TAU)).collect()
        };
        Self::new(n_modes, draw(n_cells), draw(n_cells), draw(n_modes), draw(n_modes))
    }

    pub fn n_cells(&self) -> usize {
        cell_count(self.n_modes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_modes < 2 {
            return Err(Error::Dimension(format!(
                "phase config needs at least 2 modes, got {}",
                self.n_modes
            )));
        }
        let n_cells = cell_count(self.n_modes);
        if self.thetas.len() != n_cells || self.phis.len() != n_cells {
            return Err(Error::Config(format!(
                "expected {} cell phases, got {} thetas and {} phis",
                n_cells,
                self.thetas.len(),
                self.phis.len()
            )));
        }
        if self.input_phases.len() != self.n_modes || self.output_phases.len() != self.n_modes {
            return Err(Error::Config(format!(
                "expected {} boundary phases per side, got {} in / {} out",
                self.n_modes,
                self.input_phases.len(),
                self.output_phases.len()
            )));
        }
        let all = self
            .thetas
            .iter()
            .chain(&self.phis)
            .chain(&self.input_phases)
            .chain(&self.output_phases);
        for &p in all {
            if !p.is_finite() {
                return Err(Error::Config("phases must be finite".into()));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct CellPhaseRepr {
    id: usize,
    layer: usize,
    top_mode: usize,
    theta: f64,
    phi: f64,
}

#[derive(Serialize, Deserialize)]
struct PhaseConfigRepr {
    n_modes: usize,
    cells: Vec<CellPhaseRepr>,
    input_phases: Vec<f64>,
    output_phases: Vec<f64>,
}

impl Serialize for PhaseConfig {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let spec = mesh_layout(self.n_modes).map_err(serde::ser::Error::custom)?;
        let cells = spec
            .cells()
            .iter()
            .map(|site| CellPhaseRepr {
                id: site.cell_id,
                layer: site.layer,
                top_mode: site.top_mode,
                theta: self.thetas[site.cell_id],
                phi: self.phis[site.cell_id],
            })
            .collect();
        PhaseConfigRepr {
            n_modes: self.n_modes,
            cells,
            input_phases: self.input_phases.clone(),
            output_phases: self.output_phases.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PhaseConfig {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;
        let repr = PhaseConfigRepr::deserialize(deserializer)?;
        let spec = mesh_layout(repr.n_modes).map_err(DeError::custom)?;
        let n_cells = spec.n_cells();
        if repr.cells.len() != n_cells {
            return Err(DeError::custom(format!(
                "expected {} cells for {} modes, got {}",
                n_cells,
                repr.n_modes,
                repr.cells.len()
            )));
        }
        let mut thetas = vec![f64::NAN; n_cells];
        let mut phis = vec![f64::NAN; n_cells];
        for cell in &repr.cells {
            let site = spec
                .cell(cell.id)
                .ok_or_else(|| DeError::custom(format!("unknown cell id {}", cell.id)))?;
            if site.layer != cell.layer || site.top_mode != cell.top_mode {
                return Err(DeError::custom(format!(
                    "cell {} placed at (layer {}, top {}), layout says (layer {}, top {})",
                    cell.id, cell.layer, cell.top_mode, site.layer, site.top_mode
                )));
            }
            thetas[cell.id] = cell.theta;
            phis[cell.id] = cell.phi;
        }
        PhaseConfig::new(repr.n_modes, thetas, phis, repr.input_phases, repr.output_phases)
            .map_err(DeError::custom)
    }
}

/// Per-mode loss given either uniformly or mode-by-mode, in dB.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LossProfile {
    Uniform(f64),
    PerMode(Vec<f64>),
}

impl Default for LossProfile {
    fn default() -> Self {
        LossProfile::Uniform(0.0)
    }
}

impl LossProfile {
    pub fn db_for_mode(&self, mode: usize) -> f64 {
        match self {
            LossProfile::Uniform(db) => *db,
            LossProfile::PerMode(v) => v[mode],
        }
    }

    fn validate(&self, n_modes: usize, what: &str) -> Result<()> {
        match self {
            LossProfile::Uniform(db) => {
                if !db.is_finite() || *db < 0.0 {
                    return Err(Error::Domain(format!("{what} loss must be >= 0 dB")));
                }
            }
            LossProfile::PerMode(v) => {
                if v.len() != n_modes {
                    return Err(Error::Dimension(format!(
                        "{what} loss needs {n_modes} entries, got {}",
                        v.len()
                    )));
                }
                if v.iter().any(|db| !db.is_finite() || *db < 0.0) {
                    return Err(Error::Domain(format!("{what} loss must be >= 0 dB")));
                }
            }
        }
        Ok(())
    }

    fn is_zero(&self) -> bool {
        match self {
            LossProfile::Uniform(db) => *db == 0.0,
            LossProfile::PerMode(v) => v.iter().all(|db| *db == 0.0),
        }
    }
}

/// Splitting-ratio override for one cell's two directional couplers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplerSplitting {
    pub cell_id: usize,
    pub k1: f64,
    pub k2: f64,
}

/// Hardware imperfections applied by [`forward`]. The default is ideal:
/// 50:50 couplers, no loss, no phase noise, no crosstalk.
///
/// Crosstalk is a square matrix over heater indices with zero diagonal;
/// heater `i` is cell `i`'s theta for `i < n_cells` and cell
/// `i - n_cells`'s phi otherwise. Boundary phase shifters are excluded.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImperfectionModel {
    pub coupler_splitting: Vec<CouplerSplitting>,
    pub input_coupling_loss_db: LossProfile,
    pub output_coupling_loss_db: LossProfile,
    pub propagation_loss_db_per_layer: f64,
    pub phase_noise_sigma: f64,
    pub crosstalk: Option<Vec<Vec<f64>>>,
}

impl ImperfectionModel {
    pub fn ideal() -> Self {
        Self::default()
    }

    pub fn validate(&self, spec: &MeshSpec) -> Result<()> {
        let n_modes = spec.n_modes();
        let n_cells = spec.n_cells();
        for cs in &self.coupler_splitting {
            if cs.cell_id >= n_cells {
                return Err(Error::Dimension(format!(
                    "coupler override for cell {} but mesh has {} cells",
                    cs.cell_id, n_cells
                )));
            }
            for k in [cs.k1, cs.k2] {
                if !(0.0..=1.0).contains(&k) || !k.is_finite() {
                    return Err(Error::Domain(format!(
                        "splitting ratio must lie in [0, 1], got {k}"
                    )));
                }
            }
        }
        self.input_coupling_loss_db.validate(n_modes, "input coupling")?;
        self.output_coupling_loss_db.validate(n_modes, "output coupling")?;
        if !self.propagation_loss_db_per_layer.is_finite() || self.propagation_loss_db_per_layer < 0.0 {
            return Err(Error::Domain("propagation loss must be >= 0 dB".into()));
        }
        if !self.phase_noise_sigma.is_finite() || self.phase_noise_sigma < 0.0 {
            return Err(Error::Domain("phase noise sigma must be >= 0".into()));
        }
        if let Some(c) = &self.crosstalk {
            let dim = 2 * n_cells;
            if c.len() != dim || c.iter().any(|row| row.len() != dim) {
                return Err(Error::Dimension(format!(
                    "crosstalk matrix must be {dim}x{dim} (two heaters per cell)"
                )));
            }
            for (i, row) in c.iter().enumerate() {
                if row[i] != 0.0 {
                    return Err(Error::Domain("crosstalk diagonal must be zero".into()));
                }
                if row.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Domain("crosstalk entries must be finite".into()));
                }
            }
        }
        Ok(())
    }

    pub fn has_loss(&self) -> bool {
        !self.input_coupling_loss_db.is_zero()
            || !self.output_coupling_loss_db.is_zero()
            || self.propagation_loss_db_per_layer > 0.0
    }

    fn splitting_for(&self, cell_id: usize) -> (f64, f64) {
        self.coupler_splitting
            .iter()
            .rev()
            .find(|cs| cs.cell_id == cell_id)
            .map(|cs| (cs.k1, cs.k2))
            .unwrap_or((0.5, 0.5))
    }
}

/// Classical scattering matrix of a configured mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct ScatteringMatrix {
    matrix: ComplexMatrix,
    lossy: bool,
}

impl ScatteringMatrix {
    /// Wrap an externally supplied matrix, verifying the type invariant:
    /// lossless matrices must be unitary, lossy ones passive (no singular
    /// value above 1).
    pub fn from_matrix(matrix: ComplexMatrix, lossy: bool) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension(format!(
                "scattering matrix must be square, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        if lossy {
            let top = crate::matrix::singular_values(&matrix)
                .first()
                .copied()
                .unwrap_or(0.0);
            if top > 1.0 + 1e-10 {
                return Err(Error::Domain(format!(
                    "lossy scattering matrix must be passive, largest singular value {top}"
                )));
            }
        } else {
            let dev = crate::matrix::unitarity_deviation(&matrix);
            if dev > crate::matrix::UNITARY_TOL {
                return Err(Error::NotUnitary {
                    max_dev: dev,
                    tol: crate::matrix::UNITARY_TOL,
                });
            }
        }
        Ok(Self { matrix, lossy })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn lossy(&self) -> bool {
        self.lossy
    }

    #[inline]
    pub fn get(&self, out_mode: usize, in_mode: usize) -> Complex64 {
        self.matrix.get(out_mode, in_mode)
    }
}

fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(-db / 20.0)
}

/// Two-mode block of one unit cell.
///
/// With both couplers at k = 0.5 this evaluates the closed form quoted in
/// the module docs; otherwise it composes coupler / internal phase /
/// coupler / external phase, which reduces to the closed form at k = 0.5.
pub fn unit_cell_matrix(theta: f64, phi: f64, k1: f64, k2: f64) -> Result<ComplexMatrix> {
    if !theta.is_finite() || !phi.is_finite() {
        return Err(Error::Domain("cell phases must be finite".into()));
    }
    for k in [k1, k2] {
        if !(0.0..=1.0).contains(&k) || !k.is_finite() {
            return Err(Error::Domain(format!(
                "splitting ratio must lie in [0, 1], got {k}"
            )));
        }
    }
    if k1 == 0.5 && k2 == 0.5 {
        let e = Complex64::from_polar(1.0, -theta);
        let ephi = Complex64::from_polar(1.0, -phi);
        let i = Complex64::new(0.0, 1.0);
        let one = Complex64::new(1.0, 0.0);
        let bar = (one - e) * 0.5;
        let cross = -i * (e + one) * 0.5;
        return ComplexMatrix::new(2, 2, vec![bar, cross, cross * ephi, -bar * ephi]);
    }
    let dc = |k: f64| {
        let t = Complex64::new((1.0 - k).sqrt(), 0.0);
        let r = Complex64::new(0.0, -k.sqrt());
        ComplexMatrix::new(2, 2, vec![t, r, r, t]).expect("static 2x2 shape")
    };
    // internal phase on the bottom arm, external phase on the bottom output
    let mut m = dc(k1);
    let e_theta = Complex64::from_polar(1.0, -theta);
    for col in 0..2 {
        m.set(1, col, m.get(1, col) * e_theta);
    }
    let mut m = dc(k2).mul(&m)?;
    let e_phi = Complex64::from_polar(1.0, -phi);
    for col in 0..2 {
        m.set(1, col, m.get(1, col) * e_phi);
    }
    Ok(m)
}

/// N x N identity with `block` placed on modes (top_mode, top_mode + 1).
pub fn embed_cell(block: &ComplexMatrix, top_mode: usize, n_modes: usize) -> Result<ComplexMatrix> {
    if block.rows() != 2 || block.cols() != 2 {
        return Err(Error::Dimension("embed_cell expects a 2x2 block".into()));
    }
    if top_mode + 1 >= n_modes {
        return Err(Error::Dimension(format!(
            "top mode {top_mode} out of range for {n_modes} modes"
        )));
    }
    let mut m = ComplexMatrix::identity(n_modes);
    m.set(top_mode, top_mode, block.get(0, 0));
    m.set(top_mode, top_mode + 1, block.get(0, 1));
    m.set(top_mode + 1, top_mode, block.get(1, 0));
    m.set(top_mode + 1, top_mode + 1, block.get(1, 1));
    Ok(m)
}

/// Left-multiply `m` by the embedded 2x2 `block` acting on rows
/// (top, top + 1). Equivalent to `embed_cell(block) * m`.
fn apply_block_rows(m: &mut ComplexMatrix, block: &ComplexMatrix, top: usize) {
    let (b00, b01) = (block.get(0, 0), block.get(0, 1));
    let (b10, b11) = (block.get(1, 0), block.get(1, 1));
    for col in 0..m.cols() {
        let a = m.get(top, col);
        let b = m.get(top + 1, col);
        m.set(top, col, b00 * a + b01 * b);
        m.set(top + 1, col, b10 * a + b11 * b);
    }
}

/// Compose the full scattering matrix in propagation order:
/// `S = D_out L_out (layer products, first layer rightmost) L_in D_in`.
///
/// Crosstalk shifts the programmed phases linearly; with `noise_seed`
/// given, Gaussian phase noise of width `phase_noise_sigma` is added to
/// every cell phase (one draw per call, theta then phi in cell order).
pub fn forward(
    spec: &MeshSpec,
    config: &PhaseConfig,
    imp: &ImperfectionModel,
    noise_seed: Option<u64>,
) -> Result<ScatteringMatrix> {
    if config.n_modes != spec.n_modes() {
        return Err(Error::Dimension(format!(
            "config is for {} modes, mesh has {}",
            config.n_modes,
            spec.n_modes()
        )));
    }
    config.validate()?;
    imp.validate(spec)?;

    let n = spec.n_modes();
    let n_cells = spec.n_cells();

    let mut theta_eff = config.thetas.clone();
    let mut phi_eff = config.phis.clone();
    if let Some(c) = &imp.crosstalk {
        let heaters: Vec<f64> = config
            .thetas
            .iter()
            .chain(&config.phis)
            .copied()
            .collect();
        for i in 0..n_cells {
            let shift_theta: f64 = c[i].iter().zip(&heaters).map(|(w, h)| w * h).sum();
            let shift_phi: f64 = c[n_cells + i].iter().zip(&heaters).map(|(w, h)| w * h).sum();
            theta_eff[i] = config.thetas[i] + shift_theta;
            phi_eff[i] = config.phis[i] + shift_phi;
        }
    }
    if let Some(seed) = noise_seed {
        if imp.phase_noise_sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in 0..n_cells {
                let dt: f64 = rng.sample(StandardNormal);
                let dp: f64 = rng.sample(StandardNormal);
                theta_eff[i] += imp.phase_noise_sigma * dt;
                phi_eff[i] += imp.phase_noise_sigma * dp;
            }
        }
    }

    // D_in . L_in as the starting diagonal
    let mut m = ComplexMatrix::zeros(n, n);
    for k in 0..n {
        let amp = db_to_amplitude(imp.input_coupling_loss_db.db_for_mode(k));
        m.set(
            k,
            k,
            Complex64::from_polar(amp, -config.input_phases[k]),
        );
    }

    let layer_amp = db_to_amplitude(imp.propagation_loss_db_per_layer);
    let depth = spec.depth();
    let mut cell_iter = spec.cells().iter().peekable();
    for layer in 0..depth {
        while let Some(site) = cell_iter.peek() {
            if site.layer != layer {
                break;
            }
            let site = cell_iter.next().unwrap();
            let (k1, k2) = imp.splitting_for(site.cell_id);
            let block = unit_cell_matrix(theta_eff[site.cell_id], phi_eff[site.cell_id], k1, k2)?;
            apply_block_rows(&mut m, &block, site.top_mode);
        }
        if layer_amp != 1.0 {
            m.scale_in_place(Complex64::new(layer_amp, 0.0));
        }
    }

    // L_out . D_out row scaling
    for j in 0..n {
        let amp = db_to_amplitude(imp.output_coupling_loss_db.db_for_mode(j));
        let factor = Complex64::from_polar(amp, -config.output_phases[j]);
        for k in 0..n {
            m.set(j, k, m.get(j, k) * factor);
        }
    }

    Ok(ScatteringMatrix {
        matrix: m,
        lossy: imp.has_loss(),
    })
}

/// Per input-output pair insertion loss in dB: `-10 log10(|S_jk|^2)`,
/// with `+inf` where the amplitude is exactly zero.
pub fn insertion_loss_matrix(s: &ScatteringMatrix) -> Vec<Vec<f64>> {
    let n = s.dim();
    (0..n)
        .map(|j| {
            (0..n)
                .map(|k| {
                    let p = s.get(j, k).norm_sqr();
                    if p > 0.0 {
                        -10.0 * p.log10()
                    } else {
                        f64::INFINITY
                    }
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{is_unitary, unitarity_deviation, UNITARY_TOL};
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn layout_smallest_mesh() {
        let spec = mesh_layout(2).unwrap();
        assert_eq!(spec.n_cells(), 1);
        assert_eq!(spec.depth(), 1);
        assert_eq!(spec.cells()[0].top_mode, 0);
    }

    #[test]
    fn layout_twelve_modes() {
        let spec = mesh_layout(12).unwrap();
        assert_eq!(spec.n_cells(), 66);
        assert_eq!(spec.depth(), 12);
    }

    #[test]
    fn layout_four_modes_alternates() {
        let spec = mesh_layout(4).unwrap();
        assert_eq!(spec.n_cells(), 6);
        let by_layer: Vec<Vec<usize>> = (0..spec.depth())
            .map(|l| {
                spec.cells()
                    .iter()
                    .filter(|c| c.layer == l)
                    .map(|c| c.top_mode)
                    .collect()
            })
            .collect();
        assert_eq!(by_layer, vec![vec![0, 2], vec![1], vec![0, 2], vec![1]]);
    }

    #[test]
    fn layout_rejects_tiny_meshes() {
        assert!(matches!(mesh_layout(1), Err(Error::Dimension(_))));
        assert!(matches!(mesh_layout(0), Err(Error::Dimension(_))));
    }

    #[test]
    fn layers_use_disjoint_adjacent_pairs() {
        for n in [2usize, 3, 4, 7, 12] {
            let spec = mesh_layout(n).unwrap();
            for layer in 0..spec.depth() {
                let tops: Vec<usize> = spec
                    .cells()
                    .iter()
                    .filter(|c| c.layer == layer)
                    .map(|c| c.top_mode)
                    .collect();
                for w in tops.windows(2) {
                    assert!(w[1] >= w[0] + 2);
                }
                for &t in &tops {
                    assert!(t + 1 < n);
                }
            }
        }
    }

    #[test]
    fn cell_bar_state_at_theta_pi() {
        let m = unit_cell_matrix(PI, 0.0, 0.5, 0.5).unwrap();
        let expect = ComplexMatrix::new(
            2,
            2,
            vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)],
        )
        .unwrap();
        assert!(m.max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn cell_cross_state_at_theta_zero() {
        let m = unit_cell_matrix(0.0, 0.0, 0.5, 0.5).unwrap();
        let expect = ComplexMatrix::new(
            2,
            2,
            vec![c(0.0, 0.0), c(0.0, -1.0), c(0.0, -1.0), c(0.0, 0.0)],
        )
        .unwrap();
        assert!(m.max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn cell_balanced_at_theta_half_pi() {
        let m = unit_cell_matrix(PI / 2.0, 0.0, 0.5, 0.5).unwrap();
        assert!((m.get(0, 0).norm_sqr() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cell_identity_at_theta_pi_phi_pi() {
        let m = unit_cell_matrix(PI, PI, 0.5, 0.5).unwrap();
        assert!(m.max_abs_diff(&ComplexMatrix::identity(2)) < 1e-15);
    }

    #[test]
    fn composed_cell_reduces_to_closed_form_at_half() {
        // force the compositional path with k read from a variable the
        // optimizer cannot fold to the literal 0.5 branch
        let dc = |k: f64| {
            ComplexMatrix::new(
                2,
                2,
                vec![
                    c((1.0 - k).sqrt(), 0.0),
                    c(0.0, -k.sqrt()),
                    c(0.0, -k.sqrt()),
                    c((1.0 - k).sqrt(), 0.0),
                ],
            )
            .unwrap()
        };
        for (theta, phi) in [(0.3, 1.1), (PI / 2.0, 0.0), (2.2, 5.0), (PI, PI)] {
            let mut m = dc(0.5);
            let e_theta = Complex64::from_polar(1.0, -theta);
            m.set(1, 0, m.get(1, 0) * e_theta);
            m.set(1, 1, m.get(1, 1) * e_theta);
            let mut m = dc(0.5).mul(&m).unwrap();
            let e_phi = Complex64::from_polar(1.0, -phi);
            m.set(1, 0, m.get(1, 0) * e_phi);
            m.set(1, 1, m.get(1, 1) * e_phi);

            let closed = unit_cell_matrix(theta, phi, 0.5, 0.5).unwrap();
            assert!(m.max_abs_diff(&closed) < 1e-14, "theta={theta} phi={phi}");
        }
    }

    #[test]
    fn cell_is_unitary_for_any_splitting() {
        for (k1, k2) in [(0.5, 0.5), (0.6, 0.6), (0.3, 0.8), (0.0, 1.0)] {
            let m = unit_cell_matrix(1.3, 2.1, k1, k2).unwrap();
            assert!(unitarity_deviation(&m) < 1e-14);
        }
    }

    #[test]
    fn cell_rejects_bad_ratio() {
        assert!(matches!(
            unit_cell_matrix(0.0, 0.0, 1.5, 0.5),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            unit_cell_matrix(f64::NAN, 0.0, 0.5, 0.5),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn embed_identity_anywhere_is_identity() {
        let block = ComplexMatrix::identity(2);
        for top in 0..3 {
            let m = embed_cell(&block, top, 4).unwrap();
            assert!(m.max_abs_diff(&ComplexMatrix::identity(4)) < 1e-15);
        }
    }

    #[test]
    fn embed_places_block_and_leaves_rest() {
        let swap = ComplexMatrix::new(
            2,
            2,
            vec![c(0.0, 0.0), c(0.0, -1.0), c(0.0, -1.0), c(0.0, 0.0)],
        )
        .unwrap();
        let m = embed_cell(&swap, 0, 3).unwrap();
        assert_eq!(m.get(0, 1), c(0.0, -1.0));
        assert_eq!(m.get(1, 0), c(0.0, -1.0));
        assert_eq!(m.get(2, 2), c(1.0, 0.0));
        assert_eq!(m.get(0, 0), c(0.0, 0.0));

        let cell = unit_cell_matrix(PI / 2.0, 0.0, 0.5, 0.5).unwrap();
        let m = embed_cell(&cell, 1, 4).unwrap();
        for k in 0..4 {
            assert_eq!(m.get(0, k), if k == 0 { c(1.0, 0.0) } else { c(0.0, 0.0) });
            assert_eq!(m.get(3, k), if k == 3 { c(1.0, 0.0) } else { c(0.0, 0.0) });
        }
    }

    #[test]
    fn embed_rejects_out_of_range() {
        let block = ComplexMatrix::identity(2);
        assert!(matches!(
            embed_cell(&block, 3, 4),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn forward_identity_config_gives_identity() {
        for n in [2usize, 4, 12] {
            let spec = mesh_layout(n).unwrap();
            let config = PhaseConfig::identity(n).unwrap();
            let s = forward(&spec, &config, &ImperfectionModel::ideal(), None).unwrap();
            assert!(
                s.matrix().max_abs_diff(&ComplexMatrix::identity(n)) < 1e-10,
                "n={n}"
            );
            assert!(!s.lossy());
        }
    }

    #[test]
    fn forward_lossless_is_unitary() {
        for n in [2usize, 4, 8, 12] {
            for seed in 0..250u64 {
                let spec = mesh_layout(n).unwrap();
                let config = PhaseConfig::random(n, seed * 13 + n as u64).unwrap();
                let s = forward(&spec, &config, &ImperfectionModel::ideal(), None).unwrap();
                assert!(
                    is_unitary(s.matrix(), UNITARY_TOL).unwrap(),
                    "n={n} seed={seed}"
                );
            }
        }
    }

    #[test]
    fn forward_uniform_loss_factorizes() {
        let n = 6;
        let spec = mesh_layout(n).unwrap();
        let config = PhaseConfig::random(n, 99).unwrap();
        let lossless = forward(&spec, &config, &ImperfectionModel::ideal(), None).unwrap();

        let imp = ImperfectionModel {
            input_coupling_loss_db: LossProfile::Uniform(2.1),
            output_coupling_loss_db: LossProfile::Uniform(2.1),
            propagation_loss_db_per_layer: 0.8 / n as f64,
            ..Default::default()
        };
        let lossy = forward(&spec, &config, &imp, None).unwrap();
        assert!(lossy.lossy());

        let total_amp = db_to_amplitude(2.1) * db_to_amplitude(2.1)
            * db_to_amplitude(0.8 / n as f64).powi(spec.depth() as i32);
        let scaled = lossless.matrix().scale(c(total_amp, 0.0));
        assert!(lossy.matrix().max_abs_diff(&scaled) < 1e-12);
    }

    #[test]
    fn forward_five_db_column_power() {
        // 4.2 dB coupling split across input/output plus 0.8 dB propagation
        let n = 12;
        let spec = mesh_layout(n).unwrap();
        let config = PhaseConfig::random(n, 3).unwrap();
        let imp = ImperfectionModel {
            input_coupling_loss_db: LossProfile::Uniform(2.1),
            output_coupling_loss_db: LossProfile::Uniform(2.1),
            propagation_loss_db_per_layer: 0.8 / 12.0,
            ..Default::default()
        };
        let s = forward(&spec, &config, &imp, None).unwrap();
        for k in 0..n {
            let col_power: f64 = (0..n).map(|j| s.get(j, k).norm_sqr()).sum();
            assert!((col_power - 10f64.powf(-0.5)).abs() < 1e-9, "col {k}");
        }
    }

    #[test]
    fn forward_lossy_is_passive() {
        let n = 8;
        let spec = mesh_layout(n).unwrap();
        let config = PhaseConfig::random(n, 4).unwrap();
        let imp = ImperfectionModel {
            input_coupling_loss_db: LossProfile::PerMode(
                (0..n).map(|k| 0.3 * k as f64).collect(),
            ),
            output_coupling_loss_db: LossProfile::Uniform(1.0),
            propagation_loss_db_per_layer: 0.1,
            ..Default::default()
        };
        let s = forward(&spec, &config, &imp, None).unwrap();
        let svals = crate::matrix::singular_values(s.matrix());
        assert!(svals[0] <= 1.0 + 1e-10);
    }

    #[test]
    fn zero_crosstalk_and_sigma_match_ideal_path_bitwise() {
        let n = 5;
        let spec = mesh_layout(n).unwrap();
        let config = PhaseConfig::random(n, 21).unwrap();
        let ideal = forward(&spec, &config, &ImperfectionModel::ideal(), None).unwrap();

        let dim = 2 * spec.n_cells();
        let imp = ImperfectionModel {
            crosstalk: Some(vec![vec![0.0; dim]; dim]),
            phase_noise_sigma: 0.0,
            ..Default::default()
        };
        let with_zero = forward(&spec, &config, &imp, Some(7)).unwrap();
        assert_eq!(ideal.matrix().entries(), with_zero.matrix().entries());
    }

    #[test]
    fn crosstalk_shifts_phases_linearly() {
        let n = 3;
        let spec = mesh_layout(n).unwrap();
        let config = PhaseConfig::uniform(n, 1.0, 0.5).unwrap();
        let dim = 2 * spec.n_cells();
        let mut c_mat = vec![vec![0.0; dim]; dim];
        c_mat[0][1] = 0.25; // cell 0 theta picks up 0.25 * cell 1 theta
        let imp = ImperfectionModel {
            crosstalk: Some(c_mat),
            ..Default::default()
        };
        let with_ct = forward(&spec, &config, &imp, None).unwrap();

        let mut shifted = config.clone();
        shifted.thetas[0] += 0.25 * config.thetas[1];
        let expect = forward(&spec, &shifted, &ImperfectionModel::ideal(), None).unwrap();
        assert!(with_ct.matrix().max_abs_diff(expect.matrix()) < 1e-14);
    }

    #[test]
    fn phase_noise_is_seeded_and_reproducible() {
        let n = 4;
        let spec = mesh_layout(n).unwrap();
        let config = PhaseConfig::random(n, 2).unwrap();
        let imp = ImperfectionModel {
            phase_noise_sigma: 0.05,
            ..Default::default()
        };
        let a = forward(&spec, &config, &imp, Some(11)).unwrap();
        let b = forward(&spec, &config, &imp, Some(11)).unwrap();
        assert_eq!(a.matrix().entries(), b.matrix().entries());
        let c = forward(&spec, &config, &imp, Some(12)).unwrap();
        assert!(a.matrix().max_abs_diff(c.matrix()) > 1e-6);
        // omitted seed means noiseless
        let d = forward(&spec, &config, &imp, None).unwrap();
        let ideal = forward(&spec, &config, &ImperfectionModel::ideal(), None).unwrap();
        assert_eq!(d.matrix().entries(), ideal.matrix().entries());
    }

    #[test]
    fn forward_rejects_mismatched_config() {
        let spec = mesh_layout(4).unwrap();
        let config = PhaseConfig::identity(5).unwrap();
        assert!(matches!(
            forward(&spec, &config, &ImperfectionModel::ideal(), None),
            Err(Error::Dimension(_))
        ));

        let mut bad = PhaseConfig::identity(4).unwrap();
        bad.thetas.pop();
        assert!(matches!(
            forward(&spec, &bad, &ImperfectionModel::ideal(), None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn insertion_loss_of_identity() {
        let spec = mesh_layout(4).unwrap();
        let config = PhaseConfig::identity(4).unwrap();
        let s = forward(&spec, &config, &ImperfectionModel::ideal(), None).unwrap();
        let loss = insertion_loss_matrix(&s);
        for j in 0..4 {
            for k in 0..4 {
                if j == k {
                    assert!(loss[j][k].abs() < 1e-9);
                } else {
                    assert!(loss[j][k] > 80.0); // residual rounding or +inf
                }
            }
        }
    }

    #[test]
    fn insertion_loss_balanced_cell() {
        let cell = unit_cell_matrix(PI / 2.0, 0.0, 0.5, 0.5).unwrap();
        let s = ScatteringMatrix {
            matrix: cell,
            lossy: false,
        };
        let loss = insertion_loss_matrix(&s);
        for j in 0..2 {
            for k in 0..2 {
                assert!((loss[j][k] - 3.0103).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn phase_config_json_round_trip() {
        let config = PhaseConfig::random(4, 5).unwrap();
        let text = serde_json::to_string(&config).unwrap();
        assert!(text.contains("\"top_mode\""));
        let back: PhaseConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn phase_config_json_rejects_bad_layout() {
        let config = PhaseConfig::random(3, 5).unwrap();
        let mut value: serde_json::Value = serde_json::to_value(&config).unwrap();
        value["cells"][0]["top_mode"] = serde_json::json!(1);
        assert!(serde_json::from_value::<PhaseConfig>(value).is_err());
    }

    #[test]
    fn imperfection_json_defaults_to_ideal() {
        let imp: ImperfectionModel = serde_json::from_str("{}").unwrap();
        assert_eq!(imp, ImperfectionModel::ideal());
        let imp: ImperfectionModel =
            serde_json::from_str(r#"{"input_coupling_loss_db": 2.1}"#).unwrap();
        assert_eq!(imp.input_coupling_loss_db, LossProfile::Uniform(2.1));
        let imp: ImperfectionModel =
            serde_json::from_str(r#"{"output_coupling_loss_db": [1.0, 2.0]}"#).unwrap();
        assert_eq!(
            imp.output_coupling_loss_db,
            LossProfile::PerMode(vec![1.0, 2.0])
        );
    }
}
