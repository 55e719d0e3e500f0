//! Canonical measuring processes and the model file format.
//!
//! # Model files
//!
//! A model file is one JSON document:
//!
//! ```text
//! {
//!   "format": "edrlab-process",
//!   "format_version": 1,
//!   "dims": { "object": n_obj, "probe": n_probe },
//!   "hbar": 1.0,
//!   "units": { "meter": "length", "measured": "length", "disturbed": "momentum" },
//!   "probe_state": { "shape": [n_probe],       "data": "<base64>" },
//!   "interaction": { "shape": [N, N],          "data": "<base64>" },
//!   "meter":       { "shape": [n_probe, n_probe], "data": "<base64>" },
//!   "measured":    { "shape": [n_obj, n_obj],     "data": "<base64>" },
//!   "disturbed":   { "shape": [n_obj, n_obj],     "data": "<base64>" }
//! }
//! ```
//!
//! with `N = n_obj * n_probe`. Each payload is standard base64 (with padding)
//! of little-endian IEEE-754 binary64 values, interleaved `re, im` per entry,
//! entries in row-major order. The interaction is always stored dense.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::hilbert::{
    random_state, random_unitary, CMatrix, CVector, Observable, QState, UnitaryOp, Units, C64,
};
use crate::process::{MeasurementProcess, ProcessParts};
use crate::tolerances::Tolerances;

pub const FORMAT_NAME: &str = "edrlab-process";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    VonNeumann,
    Swap,
    Identity,
    Custom,
}

/// Initial probe state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum ProbeSpec {
    Gaussian { x0: f64, p0: f64, sigma: f64 },
    /// Position eigenstate at `x0`.
    Sharp { x0: f64 },
}

impl ProbeSpec {
    /// Gaussian with zero mean momentum.
    pub fn gaussian(x0: f64, sigma: f64) -> Self {
        Self::Gaussian { x0, p0: 0.0, sigma }
    }

    pub fn build(&self, grid: &GridSpec) -> Result<QState> {
        match *self {
            Self::Gaussian { x0, p0, sigma } => grid.gaussian_state(x0, p0, sigma),
            Self::Sharp { x0 } => grid.position_eigenstate(x0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub grid_obj: GridSpec,
    pub grid_probe: GridSpec,
    /// Dimensionless coupling strength.
    pub coupling: f64,
    pub probe: ProbeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<std::path::PathBuf>,
}

impl ModelSpec {
    pub fn von_neumann(grid_obj: GridSpec, grid_probe: GridSpec, coupling: f64, probe: ProbeSpec) -> Self {
        Self { kind: ModelKind::VonNeumann, grid_obj, grid_probe, coupling, probe, custom: None }
    }

    /// Von Neumann model whose probe grid has the object's spacing and four
    /// times its extent, so shifted meter readings do not wrap around.
    pub fn von_neumann_padded(grid_obj: GridSpec, coupling: f64, probe: ProbeSpec) -> Result<Self> {
        let grid_probe = GridSpec::new(4 * grid_obj.n, grid_obj.dx, grid_obj.hbar)?;
        Ok(Self::von_neumann(grid_obj, grid_probe, coupling, probe))
    }

    pub fn swap(grid: GridSpec, probe: ProbeSpec) -> Self {
        Self { kind: ModelKind::Swap, grid_obj: grid, grid_probe: grid, coupling: 1.0, probe, custom: None }
    }

    pub fn identity(grid_obj: GridSpec, grid_probe: GridSpec, probe: ProbeSpec) -> Self {
        Self { kind: ModelKind::Identity, grid_obj, grid_probe, coupling: 0.0, probe, custom: None }
    }

    pub fn custom(path: impl Into<std::path::PathBuf>, grid: GridSpec) -> Self {
        Self {
            kind: ModelKind::Custom,
            grid_obj: grid,
            grid_probe: grid,
            coupling: 0.0,
            probe: ProbeSpec::Sharp { x0: 0.0 },
            custom: Some(path.into()),
        }
    }

    fn check(&self) -> Result<()> {
        if !self.coupling.is_finite() {
            return Err(Error::Config(format!("coupling must be finite, got {}", self.coupling)));
        }
        if self.grid_obj.hbar != self.grid_probe.hbar {
            return Err(Error::Config(format!(
                "object and probe grids disagree on hbar ({} vs {})",
                self.grid_obj.hbar, self.grid_probe.hbar
            )));
        }
        Ok(())
    }
}

/// Build the process described by `spec`.
pub fn build(spec: &ModelSpec) -> Result<MeasurementProcess> {
    match spec.kind {
        ModelKind::VonNeumann => von_neumann(spec),
        ModelKind::Swap => swap(spec),
        ModelKind::Identity => identity(spec),
        ModelKind::Custom => {
            let path = spec
                .custom
                .as_ref()
                .ok_or_else(|| Error::Config("custom model needs a file path".into()))?;
            load_custom(path)
        }
    }
}

fn grid_process(spec: &ModelSpec, interaction: UnitaryOp) -> Result<MeasurementProcess> {
    MeasurementProcess::new(ProcessParts {
        probe_state: spec.probe.build(&spec.grid_probe)?,
        interaction,
        meter: spec.grid_probe.position_op(),
        measured: spec.grid_obj.position_op(),
        disturbed: spec.grid_obj.momentum_op(),
        hbar: spec.grid_obj.hbar,
    })
}

/// `U = exp(-i lambda x (x) P / hbar)`, exponentiated exactly in the joint
/// eigenbasis of `x` (object positions) and `P` (probe plane waves).
pub fn von_neumann(spec: &ModelSpec) -> Result<MeasurementProcess> {
    spec.check()?;
    let g = &spec.grid_probe;
    let u = UnitaryOp::coupling(
        &spec.grid_obj.positions(),
        &g.momenta(),
        g.momentum_eigenbasis(),
        spec.coupling / g.hbar,
        &Tolerances::default(),
    )?;
    grid_process(spec, u)
}

pub fn swap(spec: &ModelSpec) -> Result<MeasurementProcess> {
    spec.check()?;
    if spec.grid_obj != spec.grid_probe {
        return Err(Error::DimMismatch(format!(
            "swap needs identical object and probe grids, got n = {} and {}",
            spec.grid_obj.n, spec.grid_probe.n
        )));
    }
    grid_process(spec, UnitaryOp::swap(spec.grid_obj.n))
}

pub fn identity(spec: &ModelSpec) -> Result<MeasurementProcess> {
    spec.check()?;
    grid_process(spec, UnitaryOp::identity(spec.grid_obj.n * spec.grid_probe.n))
}

/// Grid observables with a Haar-random interaction and probe state.
pub fn random_process<R: Rng + ?Sized>(
    grid_obj: GridSpec,
    grid_probe: GridSpec,
    rng: &mut R,
) -> Result<MeasurementProcess> {
    let interaction = random_unitary(grid_obj.n * grid_probe.n, rng);
    let probe_state = random_state(grid_probe.n, rng);
    MeasurementProcess::new(ProcessParts {
        probe_state,
        interaction,
        meter: grid_probe.position_op(),
        measured: grid_obj.position_op(),
        disturbed: grid_obj.momentum_op(),
        hbar: grid_obj.hbar,
    })
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Payload {
    shape: Vec<usize>,
    data: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DimsRecord {
    object: usize,
    probe: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct UnitsRecord {
    meter: String,
    measured: String,
    disturbed: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    format_version: u32,
    dims: DimsRecord,
    hbar: f64,
    units: UnitsRecord,
    probe_state: Payload,
    interaction: Payload,
    meter: Payload,
    measured: Payload,
    disturbed: Payload,
}

fn encode(entries: impl Iterator<Item = C64>, shape: Vec<usize>) -> Payload {
    let mut bytes = Vec::new();
    for z in entries {
        bytes.extend_from_slice(&z.re.to_le_bytes());
        bytes.extend_from_slice(&z.im.to_le_bytes());
    }
    Payload { shape, data: STANDARD.encode(bytes) }
}

fn encode_matrix(m: &CMatrix) -> Payload {
    let (r, c) = m.shape();
    // nalgebra is column-major; emit rows first
    encode((0..r).flat_map(|i| (0..c).map(move |j| m[(i, j)])), vec![r, c])
}

fn decode(name: &str, p: &Payload, expected: &[usize]) -> Result<Vec<C64>> {
    if p.shape != expected {
        return Err(Error::DimMismatch(format!(
            "{name} has shape {:?}, expected {:?}",
            p.shape, expected
        )));
    }
    let bytes = STANDARD
        .decode(p.data.as_bytes())
        .map_err(|e| Error::Parse(format!("{name}: invalid base64 payload: {e}")))?;
    let count: usize = expected.iter().product();
    if bytes.len() != count * 16 {
        return Err(Error::DimMismatch(format!(
            "{name} payload holds {} bytes, expected {} for shape {:?}",
            bytes.len(),
            count * 16,
            expected
        )));
    }
    Ok(bytes
        .chunks_exact(16)
        .map(|ch| {
            let re = f64::from_le_bytes(ch[..8].try_into().unwrap());
            let im = f64::from_le_bytes(ch[8..].try_into().unwrap());
            C64::new(re, im)
        })
        .collect())
}

fn decode_matrix(name: &str, p: &Payload, n: usize) -> Result<CMatrix> {
    let entries = decode(name, p, &[n, n])?;
    Ok(CMatrix::from_row_slice(n, n, &entries))
}

fn parse_units(name: &str, s: &str, want: Units) -> Result<Units> {
    let got = match s {
        "length" => Units::Length,
        "momentum" => Units::Momentum,
        "dimensionless" => Units::Dimensionless,
        "length_squared" => Units::LengthSquared,
        other => return Err(Error::Parse(format!("unknown unit {other:?} for {name}"))),
    };
    if got != want {
        return Err(Error::UnitMismatch(format!(
            "{name} must be {}, file says {}",
            want.as_str(),
            got.as_str()
        )));
    }
    Ok(got)
}

/// Write `proc` to `path` in the model file format.
pub fn save(proc: &MeasurementProcess, path: impl AsRef<Path>) -> Result<()> {
    let dims = proc.dims();
    let file = ModelFile {
        format: FORMAT_NAME.to_string(),
        format_version: FORMAT_VERSION,
        dims: DimsRecord { object: dims.object, probe: dims.probe },
        hbar: proc.hbar(),
        units: UnitsRecord {
            meter: proc.meter().units().as_str().into(),
            measured: proc.measured().units().as_str().into(),
            disturbed: proc.disturbed().units().as_str().into(),
        },
        probe_state: encode(proc.probe_state().amplitudes().iter().copied(), vec![dims.probe]),
        interaction: encode_matrix(&proc.interaction().to_dense()),
        meter: encode_matrix(proc.meter().matrix()),
        measured: encode_matrix(proc.measured().matrix()),
        disturbed: encode_matrix(proc.disturbed().matrix()),
    };
    let text = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::Parse(format!("cannot encode model: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Read and fully validate a model file.
pub fn load_custom(path: impl AsRef<Path>) -> Result<MeasurementProcess> {
    load_custom_with(path, Tolerances::default())
}

pub fn load_custom_with(path: impl AsRef<Path>, tol: Tolerances) -> Result<MeasurementProcess> {
    let text = std::fs::read_to_string(path)?;
    from_json(&text, tol)
}

/// Parse and validate the model file format from a string.
pub fn from_json(text: &str, tol: Tolerances) -> Result<MeasurementProcess> {
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("model file: {e}")))?;
    if file.format != FORMAT_NAME {
        return Err(Error::Parse(format!("unexpected format {:?}", file.format)));
    }
    if file.format_version != FORMAT_VERSION {
        return Err(Error::Parse(format!(
            "unsupported format version {} (this build reads {FORMAT_VERSION})",
            file.format_version
        )));
    }
    let (no, np) = (file.dims.object, file.dims.probe);
    if no == 0 || np == 0 {
        return Err(Error::DimMismatch("dimensions must be positive".into()));
    }
    let xi = decode("probe_state", &file.probe_state, &[np])?;
    let u = decode_matrix("interaction", &file.interaction, no * np)?;
    let meter = decode_matrix("meter", &file.meter, np)?;
    let measured = decode_matrix("measured", &file.measured, no)?;
    let disturbed = decode_matrix("disturbed", &file.disturbed, no)?;

    let parts = ProcessParts {
        probe_state: QState::with_tolerance(CVector::from_vec(xi), &tol)?,
        interaction: UnitaryOp::from_matrix_with(u, &tol)?,
        meter: Observable::with_tolerance(
            meter,
            parse_units("meter", &file.units.meter, Units::Length)?,
            &tol,
        )?,
        measured: Observable::with_tolerance(
            measured,
            parse_units("measured", &file.units.measured, Units::Length)?,
            &tol,
        )?,
        disturbed: Observable::with_tolerance(
            disturbed,
            parse_units("disturbed", &file.units.disturbed, Units::Momentum)?,
            &tol,
        )?,
        hbar: file.hbar,
    };
    MeasurementProcess::with_tolerances(parts, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::unitarity_deviation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(n, 1.0, 1.0).unwrap()
    }

    #[test]
    fn zero_coupling_is_identity() {
        let spec = ModelSpec::von_neumann(grid(8), grid(16), 0.0, ProbeSpec::gaussian(0.0, 1.0));
        let proc = von_neumann(&spec).unwrap();
        let u = proc.interaction().to_dense();
        assert!((u - CMatrix::identity(128, 128)).norm() < 1e-12);
    }

    #[test]
    fn coupling_is_unitary() {
        let spec = ModelSpec::von_neumann(grid(8), grid(8), 0.7, ProbeSpec::gaussian(0.0, 1.0));
        let proc = von_neumann(&spec).unwrap();
        assert!(unitarity_deviation(&proc.interaction().to_dense()) < 1e-12);
    }

    #[test]
    fn swap_requires_equal_grids() {
        let mut spec = ModelSpec::swap(grid(8), ProbeSpec::gaussian(0.0, 1.0));
        spec.grid_probe = grid(16);
        assert!(matches!(swap(&spec), Err(Error::DimMismatch(_))));
    }

    #[test]
    fn mismatched_hbar_is_a_config_error() {
        let spec = ModelSpec::identity(grid(8), GridSpec::new(8, 1.0, 2.0).unwrap(), ProbeSpec::Sharp { x0: 0.0 });
        assert!(matches!(identity(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn payload_layout_is_row_major_little_endian() {
        let m = CMatrix::from_row_slice(1, 2, &[C64::new(1.0, 2.0), C64::new(3.0, 4.0)]);
        let p = encode_matrix(&m);
        let bytes = STANDARD.decode(p.data).unwrap();
        let vals: Vec<f64> =
            bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        assert_eq!(vals, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(p.shape, vec![1, 2]);
    }

    #[test]
    fn round_trip_random_process() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let proc = random_process(grid(4), grid(4), &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save(&proc, &path).unwrap();
        let back = load_custom(&path).unwrap();
        assert_eq!(back.interaction().to_dense(), proc.interaction().to_dense());
        assert_eq!(back.probe_state().amplitudes(), proc.probe_state().amplitudes());
        assert_eq!(back.disturbed().matrix(), proc.disturbed().matrix());
    }
}
