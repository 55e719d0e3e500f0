//! Measuring processes and their error, resolution and disturbance.
//!
//! All three quantities are root-mean-square values of Heisenberg-picture
//! differences in the composite initial state `|psi, xi>`:
//!
//! * `epsilon^2 = <(X(t) - x(0))^2>`
//! * `delta^2   = <(f(X)(t) - x(t))^2>`
//! * `eta^2     = <(p(t) - p(0))^2>`
//!
//! They are evaluated as squared norms of `A |psi, xi>` using only
//! matrix-vector products with the interaction, so no composite matrix is
//! ever formed. The dense Heisenberg operators are still available through
//! [`MeasurementProcess::meter_evolved`] and
//! [`MeasurementProcess::object_evolved`] for small systems.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    apply_object, apply_probe, as_blocks, cluster_match_tol, conjugate, embed, from_blocks,
    kron_vec, CVector, Dims, Observable, QState, Slot, Spectrum, UnitaryOp, Units,
};
use crate::meter::MeterFunction;
use crate::povm::MeterFrame;
use crate::tolerances::Tolerances;

/// Everything needed to assemble a [`MeasurementProcess`].
#[derive(Debug, Clone)]
pub struct ProcessParts {
    pub probe_state: QState,
    pub interaction: UnitaryOp,
    pub meter: Observable,
    pub measured: Observable,
    pub disturbed: Observable,
    pub hbar: f64,
}

/// An object coupled to a probe by `interaction`; the outcome is read from
/// `meter` on the probe afterwards.
#[derive(Debug, Clone)]
pub struct MeasurementProcess {
    dims: Dims,
    probe_state: QState,
    interaction: UnitaryOp,
    meter: Observable,
    measured: Observable,
    disturbed: Observable,
    hbar: f64,
    tol: Tolerances,
    meter_spectrum: Spectrum,
}

/// A root-mean-square quantity together with its mean square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rms {
    pub value: f64,
    pub mean_square: f64,
}

impl Rms {
    fn from_mean_square(mean_square: f64) -> Self {
        Self { value: mean_square.max(0.0).sqrt(), mean_square }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdrReport {
    pub epsilon: f64,
    pub delta: f64,
    pub eta: f64,
    pub epsilon_sq: f64,
    pub delta_sq: f64,
    pub eta_sq: f64,
    pub sigma_x: f64,
    pub sigma_p: f64,
    pub prod_eps_eta: f64,
    pub prod_delta_eta: f64,
    pub unbiasedness_deficit: f64,
    pub hbar_half: f64,
    pub h: f64,
}

impl EdrReport {
    /// `delta * eta >= hbar/2 * (1 - slack)`.
    pub fn satisfies_predictive_bound(&self, slack: f64) -> bool {
        self.prod_delta_eta >= self.hbar_half * (1.0 - slack)
    }
}

/// Result of [`MeasurementProcess::unbiasedness_deficit`].
#[derive(Debug, Clone)]
pub struct Deficit {
    /// Operator norm of `deficit_op`.
    pub deficit: f64,
    pub deficit_op: Observable,
}

impl MeasurementProcess {
    pub fn new(parts: ProcessParts) -> Result<Self> {
        Self::with_tolerances(parts, Tolerances::default())
    }

    pub fn with_tolerances(parts: ProcessParts, tol: Tolerances) -> Result<Self> {
        let ProcessParts { probe_state, interaction, meter, measured, disturbed, hbar } = parts;
        let dims = Dims::new(measured.dim(), meter.dim());
        if disturbed.dim() != dims.object {
            return Err(Error::DimMismatch(format!(
                "measured observable has dim {} but disturbed has dim {}",
                dims.object,
                disturbed.dim()
            )));
        }
        if probe_state.dim() != dims.probe {
            return Err(Error::DimMismatch(format!(
                "probe state has dim {} but meter has dim {}",
                probe_state.dim(),
                dims.probe
            )));
        }
        if interaction.dim() != dims.total() {
            return Err(Error::DimMismatch(format!(
                "interaction has dim {} but object x probe is {} x {}",
                interaction.dim(),
                dims.object,
                dims.probe
            )));
        }
        for (name, obs, want) in [
            ("meter", &meter, Units::Length),
            ("measured", &measured, Units::Length),
            ("disturbed", &disturbed, Units::Momentum),
        ] {
            if obs.units() != want {
                return Err(Error::UnitMismatch(format!(
                    "{name} observable must carry {} units, got {}",
                    want.as_str(),
                    obs.units().as_str()
                )));
            }
        }
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(Error::Config(format!("hbar must be positive, got {hbar}")));
        }
        let meter_spectrum = meter.spectrum(tol.cluster);
        Ok(Self {
            dims,
            probe_state,
            interaction,
            meter,
            measured,
            disturbed,
            hbar,
            tol,
            meter_spectrum,
        })
    }

    /// Same process with `post` applied after the interaction.
    pub fn followed_by(&self, post: UnitaryOp) -> Result<Self> {
        let mut out = self.clone();
        out.interaction = self.interaction.clone().then(post)?;
        Ok(out)
    }

    /// Replace the tolerances; the meter is re-clustered with the new ones.
    pub fn set_tolerances(&mut self, tol: Tolerances) {
        self.meter_spectrum = self.meter.spectrum(tol.cluster);
        self.tol = tol;
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }
    pub fn probe_state(&self) -> &QState {
        &self.probe_state
    }
    pub fn interaction(&self) -> &UnitaryOp {
        &self.interaction
    }
    pub fn meter(&self) -> &Observable {
        &self.meter
    }
    pub fn measured(&self) -> &Observable {
        &self.measured
    }
    pub fn disturbed(&self) -> &Observable {
        &self.disturbed
    }
    pub fn hbar(&self) -> f64 {
        self.hbar
    }
    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }
    pub fn meter_spectrum(&self) -> &Spectrum {
        &self.meter_spectrum
    }

    /// Values of `f` on the meter's eigenvalue clusters.
    pub fn meter_values(&self, f: &MeterFunction) -> Result<Vec<f64>> {
        f.on_clusters(
            &self.meter_spectrum.cluster_values(),
            cluster_match_tol(&self.meter_spectrum, &self.tol),
        )
    }

    pub(crate) fn check_object_state(&self, psi: &QState) -> Result<()> {
        if psi.dim() != self.dims.object {
            return Err(Error::DimMismatch(format!(
                "object state has dim {} but the process expects {}",
                psi.dim(),
                self.dims.object
            )));
        }
        Ok(())
    }

    /// `|psi, xi>`.
    pub fn initial_state(&self, psi: &QState) -> Result<CVector> {
        self.check_object_state(psi)?;
        Ok(kron_vec(psi.amplitudes(), self.probe_state.amplitudes()))
    }

    /// `(I (x) f(X)) v` for composite vectors.
    pub(crate) fn apply_meter(&self, f: &MeterFunction, v: &CVector) -> Result<CVector> {
        if f.is_identity() && !self.meter_spectrum.is_diagonal() {
            return Ok(apply_probe(self.meter.matrix(), v, self.dims));
        }
        let weights = self.meter_weights(f)?;
        let blocks = as_blocks(v, self.dims);
        Ok(from_blocks(&self.meter_spectrum.apply_weights_columns(&weights, &blocks)))
    }

    /// `f(X)` on the probe space.
    pub fn meter_function_op(&self, f: &MeterFunction) -> Result<Observable> {
        let values = self.meter_values(f)?;
        Ok(Observable::hermitian_part(self.meter_spectrum.reassemble(&values), Units::Length))
    }

    /// Dense `U^dag (I (x) f(X)) U` on the composite space.
    pub fn meter_evolved(&self, f: &MeterFunction) -> Result<Observable> {
        let fx = if f.is_identity() { self.meter.clone() } else { self.meter_function_op(f)? };
        conjugate(&self.interaction, &embed(&fx, Slot::Probe, self.dims)?)
    }

    /// Dense `U^dag (A (x) I) U` on the composite space.
    pub fn object_evolved(&self, a: &Observable) -> Result<Observable> {
        conjugate(&self.interaction, &embed(a, Slot::Object, self.dims)?)
    }

    /// Measurement error: `<(X(t) - x(0))^2>` in `|psi, xi>`.
    pub fn epsilon(&self, psi: &QState) -> Result<Rms> {
        let start = self.initial_state(psi)?;
        Ok(Rms::from_mean_square(self.epsilon_residual_vec(&start)?.norm_squared()))
    }

    /// `(X(t) - x (x) I) |psi, xi>`.
    pub(crate) fn epsilon_residual_vec(&self, start: &CVector) -> Result<CVector> {
        let after = self.interaction.apply(start);
        let meter_after = self.apply_meter(&MeterFunction::identity(), &after)?;
        let back = self.interaction.apply_adjoint(&meter_after);
        Ok(back - apply_object(self.measured.matrix(), start, self.dims))
    }

    /// Preparational error: `<(f(X)(t) - x(t))^2>` in `|psi, xi>`.
    pub fn delta(&self, psi: &QState, f: &MeterFunction) -> Result<Rms> {
        let start = self.initial_state(psi)?;
        let after = self.interaction.apply(&start);
        // U^dag is an isometry, so the residual is taken after the interaction
        let residual = self.apply_meter(f, &after)?
            - apply_object(self.measured.matrix(), &after, self.dims);
        Ok(Rms::from_mean_square(residual.norm_squared()))
    }

    /// Momentum disturbance: `<(p(t) - p(0))^2>` in `|psi, xi>`.
    pub fn eta(&self, psi: &QState) -> Result<Rms> {
        let start = self.initial_state(psi)?;
        let after = self.interaction.apply(&start);
        let p = self.disturbed.matrix();
        let evolved = self.interaction.apply_adjoint(&apply_object(p, &after, self.dims));
        let residual = evolved - apply_object(p, &start, self.dims);
        Ok(Rms::from_mean_square(residual.norm_squared()))
    }

    /// Partial inner product `<xi| f(X)(t) - x(t) |xi>` and its operator norm.
    pub fn unbiasedness_deficit(&self, f: &MeterFunction) -> Result<Deficit> {
        let frame = MeterFrame::of(self);
        let weights = self.meter_weights(f)?;
        let rows = frame.all_rows();
        let meter_part = frame.gram(&frame, rows.clone(), Some(&weights));
        let target = frame.gram(&frame.with_object_op(self.measured.matrix()), rows, None);
        let op = Observable::hermitian_part(meter_part - target, Units::Length);
        Ok(Deficit { deficit: op.operator_norm(), deficit_op: op })
    }

    /// `f` evaluated on each sorted meter eigenvalue; the identity uses the
    /// eigenvalues themselves rather than cluster means.
    pub(crate) fn meter_weights(&self, f: &MeterFunction) -> Result<Vec<f64>> {
        if f.is_identity() {
            return Ok(self.meter_spectrum.values.clone());
        }
        Ok(self.meter_spectrum.expand(&self.meter_values(f)?))
    }

    /// Aggregate of all quantities for one object state and meter function.
    pub fn edr_report(&self, psi: &QState, f: &MeterFunction) -> Result<EdrReport> {
        let eps = self.epsilon(psi)?;
        let del = self.delta(psi, f)?;
        let eta = self.eta(psi)?;
        let deficit = self.unbiasedness_deficit(f)?;
        let hbar_half = self.hbar / 2.0;
        Ok(EdrReport {
            epsilon: eps.value,
            delta: del.value,
            eta: eta.value,
            epsilon_sq: eps.mean_square,
            delta_sq: del.mean_square,
            eta_sq: eta.mean_square,
            sigma_x: spread(psi, &self.measured),
            sigma_p: spread(psi, &self.disturbed),
            prod_eps_eta: eps.value * eta.value,
            prod_delta_eta: del.value * eta.value,
            unbiasedness_deficit: deficit.deficit,
            hbar_half,
            h: 2.0 * PI * self.hbar,
        })
    }
}

/// Standard deviation `|(A - <A>) psi|`.
pub fn spread(psi: &QState, a: &Observable) -> f64 {
    let v = psi.amplitudes();
    let av = a.matrix() * v;
    let mean = v.dotc(&av).re;
    (av - v * crate::hilbert::C64::new(mean, 0.0)).norm()
}
