//! Variational Ramsey sequences and their conditional outcome statistics.
//!
//! Canonical form (readout of `J_z` on the final state):
//!
//! ```text
//! R_x(π/2) · U_De(ϑ) · R_z(φ) · U_En(θ) · R_y(π/2) |↓⟩^⊗N
//! U_En = Π_k R_x(θ³_k) T_x(θ²_k) T_z(θ¹_k)      layer k = 1 acts first
//! U_De = Π_k T_z(ϑ¹_k) T_x(ϑ²_k) R_x(ϑ³_k)      layer k = 1 acts first
//! ```
//!
//! The experimental form conjugates everything with `R_x(-π/2)`, trading `z`
//! twistings for `y` twistings and the phase gate for `R_y(φ)`, realized as
//! `R_x(-π/2) R_z(φ) R_x(π/2)`. Its bare final state equals the canonical one up
//! to a final `R_x(π)`, which is applied so both forms share the same readout
//! frame.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::spin::{Axis, DickeVector, SpinSystem, C64};

/// Angles of one layer. In the canonical form `twist_1` is a `z` twisting,
/// `twist_2` an `x` twisting and `rotation` an `x` rotation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerAngles {
    pub twist_1: f64,
    pub twist_2: f64,
    pub rotation: f64,
}

impl LayerAngles {
    pub fn new(twist_1: f64, twist_2: f64, rotation: f64) -> Self {
        Self { twist_1, twist_2, rotation }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CircuitForm {
    #[default]
    Canonical,
    Experimental,
}

/// Role of one entry of the flattened parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Twist,
    Rotation,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitParams {
    #[serde(default)]
    pub entangling: Vec<LayerAngles>,
    #[serde(default)]
    pub decoding: Vec<LayerAngles>,
    #[serde(default)]
    pub form: CircuitForm,
}

impl CircuitParams {
    /// The plain `(0, 0)` Ramsey sequence.
    pub fn css() -> Self {
        Self::default()
    }

    pub fn zeros(n_en: usize, n_de: usize) -> Self {
        Self {
            entangling: vec![LayerAngles::default(); n_en],
            decoding: vec![LayerAngles::default(); n_de],
            form: CircuitForm::Canonical,
        }
    }

    pub fn n_en(&self) -> usize {
        self.entangling.len()
    }

    pub fn n_de(&self) -> usize {
        self.decoding.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_en(), self.n_de())
    }

    pub fn with_form(mut self, form: CircuitForm) -> Self {
        self.form = form;
        self
    }

    /// Flattened `[twist_1, twist_2, rotation]` per layer, entangling layers first.
    pub fn to_vec(&self) -> Vec<f64> {
        self.entangling
            .iter()
            .chain(&self.decoding)
            .flat_map(|l| [l.twist_1, l.twist_2, l.rotation])
            .collect()
    }

    pub fn from_vec(n_en: usize, n_de: usize, values: &[f64]) -> Result<Self> {
        if values.len() != 3 * (n_en + n_de) {
            return Err(Error::InvalidArgument(format!(
                "expected {} angles for shape ({n_en}, {n_de}), got {}",
                3 * (n_en + n_de),
                values.len()
            )));
        }
        let layers: Vec<LayerAngles> =
            values.chunks_exact(3).map(|c| LayerAngles::new(c[0], c[1], c[2])).collect();
        Ok(Self {
            entangling: layers[..n_en].to_vec(),
            decoding: layers[n_en..].to_vec(),
            form: CircuitForm::Canonical,
        })
    }

    pub fn param_kinds(n_en: usize, n_de: usize) -> Vec<ParamKind> {
        (0..n_en + n_de)
            .flat_map(|_| [ParamKind::Twist, ParamKind::Twist, ParamKind::Rotation])
            .collect()
    }

    /// Applies `twist` to every twisting angle and `rotation` to every layer rotation.
    pub fn map_angles(&self, twist: impl Fn(f64) -> f64, rotation: impl Fn(f64) -> f64) -> Self {
        let f = |l: &LayerAngles| LayerAngles::new(twist(l.twist_1), twist(l.twist_2), rotation(l.rotation));
        Self {
            entangling: self.entangling.iter().map(f).collect(),
            decoding: self.decoding.iter().map(f).collect(),
            form: self.form,
        }
    }

    /// Converts angles listed in lab-table order into canonical parameters.
    ///
    /// Entangling rows are `[T_y, T_x, R_x]` and decoding rows `[R_x, T_x, T_y]`,
    /// both in time order; `T_y` of the experimental frame is the canonical `T_z`.
    pub fn from_lab_table(entangling: &[[f64; 3]], decoding: &[[f64; 3]]) -> Self {
        Self {
            entangling: entangling.iter().map(|r| LayerAngles::new(r[0], r[1], r[2])).collect(),
            decoding: decoding.iter().map(|r| LayerAngles::new(r[2], r[1], r[0])).collect(),
            form: CircuitForm::Canonical,
        }
    }

    fn validate(&self) -> Result<()> {
        for v in self.to_vec() {
            ensure_finite(v, "circuit angle")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Gate {
    Rotate(Axis, f64),
    Twist(Axis, f64),
}

fn run(sys: &SpinSystem, psi: &mut [C64], gates: &[Gate]) {
    for g in gates {
        match *g {
            Gate::Rotate(a, b) => sys.rotate(psi, a, b),
            Gate::Twist(a, c) => sys.twist(psi, a, c),
        }
    }
}

/// Gates up to (not including) the `R_z(φ)` phase imprint.
fn encoder_gates(params: &CircuitParams) -> Vec<Gate> {
    let twist_axis = match params.form {
        CircuitForm::Canonical => Axis::Z,
        CircuitForm::Experimental => Axis::Y,
    };
    let mut g = vec![Gate::Rotate(Axis::Y, FRAC_PI_2)];
    for l in &params.entangling {
        g.push(Gate::Twist(twist_axis, l.twist_1));
        g.push(Gate::Twist(Axis::X, l.twist_2));
        g.push(Gate::Rotate(Axis::X, l.rotation));
    }
    if params.form == CircuitForm::Experimental {
        g.push(Gate::Rotate(Axis::X, FRAC_PI_2));
    }
    g
}

/// Gates after the `R_z(φ)` phase imprint, readout rotation included.
fn decoder_gates(params: &CircuitParams) -> Vec<Gate> {
    let mut g = Vec::new();
    let twist_axis = match params.form {
        CircuitForm::Canonical => Axis::Z,
        CircuitForm::Experimental => {
            g.push(Gate::Rotate(Axis::X, -FRAC_PI_2));
            Axis::Y
        }
    };
    for l in &params.decoding {
        g.push(Gate::Rotate(Axis::X, l.rotation));
        g.push(Gate::Twist(Axis::X, l.twist_2));
        g.push(Gate::Twist(twist_axis, l.twist_1));
    }
    g.push(Gate::Rotate(
        Axis::X,
        match params.form {
            CircuitForm::Canonical => FRAC_PI_2,
            CircuitForm::Experimental => PI,
        },
    ));
    g
}

/// A circuit with the φ-independent encoding already applied.
///
/// The phase only enters through diagonal `R_z(φ)` phases on the cached
/// encoded state, followed by the fixed decoding map.
#[derive(Clone, Debug)]
pub struct PreparedCircuit {
    sys: Arc<SpinSystem>,
    encoded: Vec<C64>,
    decoder: Vec<Gate>,
}

impl PreparedCircuit {
    pub fn new(params: &CircuitParams, n: usize) -> Result<Self> {
        params.validate()?;
        let sys = SpinSystem::shared(n)?;
        let mut encoded = DickeVector::spin_down(n)?.into_amplitudes();
        run(&sys, &mut encoded, &encoder_gates(params));
        Ok(Self { sys, encoded, decoder: decoder_gates(params) })
    }

    pub fn n_particles(&self) -> usize {
        self.sys.n_particles()
    }

    pub fn system(&self) -> &SpinSystem {
        &self.sys
    }

    /// State right before the phase imprint (in the canonical frame for the
    /// canonical form).
    pub fn encoded_state(&self) -> DickeVector {
        DickeVector::from_amplitudes(self.encoded.clone()).expect("unitary evolution keeps the norm")
    }

    pub fn final_state(&self, phi: f64) -> DickeVector {
        let mut psi = self.encoded.clone();
        self.sys.rotate(&mut psi, Axis::Z, phi);
        run(&self.sys, &mut psi, &self.decoder);
        DickeVector::from_amplitudes(psi).expect("unitary evolution keeps the norm")
    }

    pub fn probabilities(&self, phi: f64) -> Vec<f64> {
        let mut psi = self.encoded.clone();
        self.sys.rotate(&mut psi, Axis::Z, phi);
        run(&self.sys, &mut psi, &self.decoder);
        psi.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Dense `W` with `ψ_final = W · R_z(φ) · ψ_encoded`.
    pub fn readout_unitary(&self) -> DMatrix<C64> {
        let d = self.sys.dim();
        let mut w = DMatrix::<C64>::zeros(d, d);
        for k in 0..d {
            let mut col = vec![C64::new(0.0, 0.0); d];
            col[k] = C64::new(1.0, 0.0);
            run(&self.sys, &mut col, &self.decoder);
            w.column_mut(k).copy_from_slice(&col);
        }
        w
    }

    pub fn outcome_table(&self, phases: &[f64]) -> Result<OutcomeTable> {
        for &p in phases {
            ensure_finite(p, "phase")?;
        }
        let rows: Vec<Vec<f64>> = if phases.len() >= 16 {
            phases.par_iter().map(|&p| self.probabilities(p)).collect()
        } else {
            phases.iter().map(|&p| self.probabilities(p)).collect()
        };
        Ok(OutcomeTable::from_rows(self.n_particles(), phases.to_vec(), rows))
    }
}

/// Conditional probabilities `p(m|φ)` tabulated on a phase grid.
///
/// Row `i` belongs to `phases[i]`; column `k` to `m = (2k - N)/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeTable {
    n: usize,
    phases: Vec<f64>,
    probs: Vec<f64>,
}

impl OutcomeTable {
    fn from_rows(n: usize, phases: Vec<f64>, rows: Vec<Vec<f64>>) -> Self {
        let probs = rows.into_iter().flatten().collect();
        Self { n, phases, probs }
    }

    /// Builds a table from raw rows; each row must be a probability vector.
    pub fn new(n: usize, phases: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != phases.len() {
            return Err(Error::InvalidArgument("one probability row per phase required".into()));
        }
        for row in &rows {
            if row.len() != n + 1 {
                return Err(Error::InvalidArgument(format!("rows need {} entries", n + 1)));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-10 || row.iter().any(|&p| !(-1e-15..=1.0 + 1e-12).contains(&p)) {
                return Err(Error::InvalidArgument("row is not a probability distribution".into()));
            }
        }
        Ok(Self::from_rows(n, phases, rows))
    }

    pub fn n_particles(&self) -> usize {
        self.n
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n + 1;
        &self.probs[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.probs.chunks_exact(self.n + 1)
    }

    /// Outcome values `m` for each column.
    pub fn outcomes(&self) -> Vec<f64> {
        crate::spin::projections(self.n)
    }
}

/// Final state of the variational Ramsey sequence at phase `phi`.
pub fn ramsey_state(params: &CircuitParams, n: usize, phi: f64) -> Result<DickeVector> {
    ensure_finite(phi, "phase")?;
    Ok(PreparedCircuit::new(params, n)?.final_state(phi))
}

pub fn outcome_table(params: &CircuitParams, n: usize, phases: &[f64]) -> Result<OutcomeTable> {
    PreparedCircuit::new(params, n)?.outcome_table(phases)
}

/// `⟨J_z⟩` of the final state, i.e. `Σ_m m p(m|φ)`.
pub fn expectation_jz(params: &CircuitParams, n: usize, phi: f64) -> Result<f64> {
    ensure_finite(phi, "phase")?;
    let p = PreparedCircuit::new(params, n)?.probabilities(phi);
    Ok(crate::spin::projections(n).iter().zip(&p).map(|(m, p)| m * p).sum())
}
