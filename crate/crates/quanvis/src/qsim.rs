//! Exact statevector simulation of small quantum circuits.
//!
//! A state is a dense vector of 2^n complex amplitudes in little-endian
//! qubit order: qubit 0 is the least significant bit of the basis index.
//! The gate set is exactly what the quanvolution front end needs — Ry/Rx/Rz
//! rotations, CNOT and CZ entanglers — plus Pauli-Z expectation readout.
//! Measurement is the exact expectation (infinite-shot limit), never sampled.
//!
//! Rotation conventions (no global phase on Ry):
//!
//! ```text
//! Ry(θ) = [[cos θ/2, −sin θ/2], [sin θ/2, cos θ/2]]
//! Rx(θ) = [[cos θ/2, −i·sin θ/2], [−i·sin θ/2, cos θ/2]]
//! Rz(θ) = diag(e^{−iθ/2}, e^{+iθ/2})
//! ```

use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// Hard cap on register width; 2^16 amplitudes is the largest state the
/// experiments ever need (one 4×4 patch).
pub const MAX_QUBITS: usize = 16;

/// One gate of the supported set. Rotation angles are radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Gate {
    Ry { angle: f64, target: usize },
    Rx { angle: f64, target: usize },
    Rz { angle: f64, target: usize },
    Cnot { control: usize, target: usize },
    Cz { a: usize, b: usize },
}

impl Gate {
    /// Qubit indices the gate acts on (one for rotations, two for entanglers).
    pub fn targets(&self) -> Vec<usize> {
        match *self {
            Gate::Ry { target, .. } | Gate::Rx { target, .. } | Gate::Rz { target, .. } => {
                vec![target]
            }
            Gate::Cnot { control, target } => vec![control, target],
            Gate::Cz { a, b } => vec![a, b],
        }
    }
}

/// Dense amplitude vector over the 2^n computational basis states.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// All-|0⟩ ground state: amplitude 1 on basis index 0.
    pub fn ground(n_qubits: usize) -> Result<Self> {
        if !(1..=MAX_QUBITS).contains(&n_qubits) {
            return Err(Error::Config(format!(
                "n_qubits must be in 1..={MAX_QUBITS}, got {n_qubits}"
            )));
        }
        let mut amplitudes = vec![Complex64::ZERO; 1 << n_qubits];
        amplitudes[0] = Complex64::ONE;
        Ok(Self { n_qubits, amplitudes })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// L2 norm; 1 within 1e-12 after any sequence of gates.
    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(Complex64::norm_sqr)
            .sum::<f64>()
            .sqrt()
    }

    fn check_target(&self, q: usize) -> Result<()> {
        if q >= self.n_qubits {
            return Err(Error::Structural(format!(
                "gate target {q} out of range for {} qubits",
                self.n_qubits
            )));
        }
        Ok(())
    }

    /// Apply one gate in place.
    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        match *gate {
            Gate::Ry { angle, target } => {
                self.check_target(target)?;
                let (s, c) = (angle / 2.0).sin_cos();
                self.map_pairs(target, |a, b| (c * a - s * b, s * a + c * b));
            }
            Gate::Rx { angle, target } => {
                self.check_target(target)?;
                let (s, c) = (angle / 2.0).sin_cos();
                // −i·s swaps re/im: (−i·s)(x+iy) = s·y − i·s·x
                self.map_pairs(target, |a, b| {
                    (
                        Complex64::new(c * a.re + s * b.im, c * a.im - s * b.re),
                        Complex64::new(s * a.im + c * b.re, -s * a.re + c * b.im),
                    )
                });
            }
            Gate::Rz { angle, target } => {
                self.check_target(target)?;
                let p0 = Complex64::from_polar(1.0, -angle / 2.0);
                let p1 = Complex64::from_polar(1.0, angle / 2.0);
                self.map_pairs(target, |a, b| (p0 * a, p1 * b));
            }
            Gate::Cnot { control, target } => {
                self.check_target(control)?;
                self.check_target(target)?;
                if control == target {
                    return Err(Error::Structural(format!(
                        "CNOT control and target must differ, both are {control}"
                    )));
                }
                let tbit = 1usize << target;
                for i in 0..self.amplitudes.len() {
                    if (i >> control) & 1 == 1 && (i >> target) & 1 == 0 {
                        self.amplitudes.swap(i, i | tbit);
                    }
                }
            }
            Gate::Cz { a, b } => {
                self.check_target(a)?;
                self.check_target(b)?;
                if a == b {
                    return Err(Error::Structural(format!(
                        "CZ qubits must differ, both are {a}"
                    )));
                }
                for (i, amp) in self.amplitudes.iter_mut().enumerate() {
                    if (i >> a) & 1 == 1 && (i >> b) & 1 == 1 {
                        *amp = -*amp;
                    }
                }
            }
        }
        Ok(())
    }

    /// Visit every (bit=0, bit=1) amplitude pair for `target` and replace it.
    #[inline]
    fn map_pairs(
        &mut self,
        target: usize,
        f: impl Fn(Complex64, Complex64) -> (Complex64, Complex64),
    ) {
        let step = 1usize << target;
        for block in self.amplitudes.chunks_exact_mut(2 * step) {
            let (lo, hi) = block.split_at_mut(step);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (na, nb) = f(*a, *b);
                *a = na;
                *b = nb;
            }
        }
    }

    /// ⟨Z⟩ of one qubit: P(bit=0) − P(bit=1), always in [−1, 1].
    pub fn expectation_z(&self, qubit: usize) -> Result<f64> {
        self.check_target(qubit)?;
        let step = 1usize << qubit;
        let mut plus = 0.0;
        let mut minus = 0.0;
        for block in self.amplitudes.chunks_exact(2 * step) {
            let (lo, hi) = block.split_at(step);
            plus += lo.iter().map(Complex64::norm_sqr).sum::<f64>();
            minus += hi.iter().map(Complex64::norm_sqr).sum::<f64>();
        }
        Ok(plus - minus)
    }

    /// ⟨Z⟩ for every qubit in one pass over the probabilities.
    pub fn expectation_z_all(&self) -> Vec<f64> {
        let probs: Vec<f64> = self.amplitudes.iter().map(Complex64::norm_sqr).collect();
        (0..self.n_qubits)
            .map(|q| {
                let step = 1usize << q;
                let mut plus = 0.0;
                let mut minus = 0.0;
                for block in probs.chunks_exact(2 * step) {
                    let (lo, hi) = block.split_at(step);
                    plus += lo.iter().sum::<f64>();
                    minus += hi.iter().sum::<f64>();
                }
                plus - minus
            })
            .collect()
    }
}

/// Seed-derived circuit: per-qubit Ry data encoding, fixed random layers,
/// and a Pauli-Z measurement plan.
///
/// Regenerating from the same `(n_qubits, n_layers, seed)` yields a
/// bit-identical gate list; the generator is ChaCha8, so the layers are
/// reproducible across platforms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitSpec {
    n_qubits: usize,
    random_layers: Vec<Vec<Gate>>,
    seed: u64,
    measured_qubits: Vec<usize>,
}

impl CircuitSpec {
    /// Build the circuit for `n_qubits` with `n_layers` seeded random layers.
    /// Every qubit is measured.
    pub fn generate(n_qubits: usize, n_layers: usize, seed: u64) -> Result<Self> {
        let random_layers = generate_random_layers(n_qubits, n_layers, seed)?;
        Ok(Self {
            n_qubits,
            random_layers,
            seed,
            measured_qubits: (0..n_qubits).collect(),
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    /// Count of data-dependent encoding rotations: one Ry per qubit.
    pub fn n_encoding_gates(&self) -> usize {
        self.n_qubits
    }

    pub fn random_layers(&self) -> &[Vec<Gate>] {
        &self.random_layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn measured_qubits(&self) -> &[usize] {
        &self.measured_qubits
    }

    /// Run the circuit on the ground state: Ry(angle_i) on qubit i, then all
    /// random layers in order, then ⟨Z⟩ per measured qubit. Pure function.
    pub fn run(&self, encoding_angles: &[f64]) -> Result<Vec<f64>> {
        if encoding_angles.len() != self.n_qubits {
            return Err(Error::Structural(format!(
                "expected {} encoding angles, got {}",
                self.n_qubits,
                encoding_angles.len()
            )));
        }
        let mut state = StateVector::ground(self.n_qubits)?;
        for (target, &angle) in encoding_angles.iter().enumerate() {
            state.apply(&Gate::Ry { angle, target })?;
        }
        for layer in &self.random_layers {
            for gate in layer {
                state.apply(gate)?;
            }
        }
        let all = state.expectation_z_all();
        Ok(self.measured_qubits.iter().map(|&q| all[q]).collect())
    }
}

/// Seeded random layers: per layer, one single-qubit rotation per qubit
/// (kind uniform over Ry/Rx/Rz, angle uniform in [0, 2π)) followed by a ring
/// of CNOTs `i → (i+1) mod n`. A single qubit gets no entangling ring.
pub fn generate_random_layers(
    n_qubits: usize,
    n_layers: usize,
    seed: u64,
) -> Result<Vec<Vec<Gate>>> {
    if !(1..=MAX_QUBITS).contains(&n_qubits) {
        return Err(Error::Config(format!(
            "n_qubits must be in 1..={MAX_QUBITS}, got {n_qubits}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let mut layer = Vec::with_capacity(2 * n_qubits);
        for target in 0..n_qubits {
            let kind: u8 = rng.random_range(0..3);
            let angle: f64 = rng.random_range(0.0..TAU);
            layer.push(match kind {
                0 => Gate::Ry { angle, target },
                1 => Gate::Rx { angle, target },
                _ => Gate::Rz { angle, target },
            });
        }
        if n_qubits > 1 {
            for q in 0..n_qubits {
                layer.push(Gate::Cnot {
                    control: q,
                    target: (q + 1) % n_qubits,
                });
            }
        }
        layers.push(layer);
    }
    Ok(layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn amp(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn ground_state_amplitudes() {
        let s = StateVector::ground(1).unwrap();
        assert_eq!(s.amplitudes(), &[amp(1.0), amp(0.0)]);

        let s = StateVector::ground(2).unwrap();
        assert_eq!(s.amplitudes(), &[amp(1.0), amp(0.0), amp(0.0), amp(0.0)]);

        let s = StateVector::ground(4).unwrap();
        assert_eq!(s.amplitudes().len(), 16);
        assert_abs_diff_eq!(s.norm(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn ground_rejects_out_of_range() {
        assert!(StateVector::ground(0).is_err());
        assert!(StateVector::ground(17).is_err());
    }

    #[test]
    fn ry_pi_flips_ground() {
        let mut s = StateVector::ground(1).unwrap();
        s.apply(&Gate::Ry { angle: PI, target: 0 }).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[0].re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amplitudes()[1].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn ry_zero_is_identity() {
        let mut s = StateVector::ground(1).unwrap();
        s.apply(&Gate::Ry { angle: 0.0, target: 0 }).unwrap();
        assert_eq!(s.amplitudes(), &[amp(1.0), amp(0.0)]);
    }

    #[test]
    fn cnot_truth_table() {
        // Qubit 0 set (basis index 1), CNOT 0→1 flips qubit 1 (index 3).
        let mut s = StateVector::ground(2).unwrap();
        s.apply(&Gate::Ry { angle: PI, target: 0 }).unwrap();
        s.apply(&Gate::Cnot { control: 0, target: 1 }).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[3].norm_sqr(), 1.0, epsilon = 1e-12);

        // Control clear: no flip.
        let mut s = StateVector::ground(2).unwrap();
        s.apply(&Gate::Cnot { control: 0, target: 1 }).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[0].norm_sqr(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn invalid_targets_are_structural_errors() {
        let mut s = StateVector::ground(2).unwrap();
        assert!(matches!(
            s.apply(&Gate::Ry { angle: 1.0, target: 2 }),
            Err(Error::Structural(_))
        ));
        assert!(matches!(
            s.apply(&Gate::Cnot { control: 1, target: 1 }),
            Err(Error::Structural(_))
        ));
        assert!(matches!(s.expectation_z(5), Err(Error::Structural(_))));
    }

    #[test]
    fn expectation_z_eigenstates() {
        let s = StateVector::ground(1).unwrap();
        assert_abs_diff_eq!(s.expectation_z(0).unwrap(), 1.0, epsilon = 1e-12);

        let mut s = StateVector::ground(1).unwrap();
        s.apply(&Gate::Ry { angle: PI, target: 0 }).unwrap();
        assert_abs_diff_eq!(s.expectation_z(0).unwrap(), -1.0, epsilon = 1e-12);

        let mut s = StateVector::ground(1).unwrap();
        s.apply(&Gate::Ry { angle: PI / 2.0, target: 0 }).unwrap();
        assert_abs_diff_eq!(s.expectation_z(0).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn expectation_z_all_matches_per_qubit() {
        let spec = CircuitSpec::generate(4, 3, 11).unwrap();
        let mut state = StateVector::ground(4).unwrap();
        for (target, angle) in [0.3, 1.2, 2.2, 0.7].into_iter().enumerate() {
            state.apply(&Gate::Ry { angle, target }).unwrap();
        }
        for gate in spec.random_layers().iter().flatten() {
            state.apply(gate).unwrap();
        }
        let all = state.expectation_z_all();
        for (q, &z) in all.iter().enumerate() {
            assert_abs_diff_eq!(z, state.expectation_z(q).unwrap(), epsilon = 1e-14);
        }
    }

    #[test]
    fn random_layers_deterministic() {
        let a = generate_random_layers(4, 4, 99).unwrap();
        let b = generate_random_layers(4, 4, 99).unwrap();
        assert_eq!(a, b);
        let c = generate_random_layers(4, 4, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn random_layers_shape() {
        assert!(generate_random_layers(4, 0, 1).unwrap().is_empty());

        // Two qubits, one layer: 2 rotations then the 2-cycle CNOT ring.
        let layers = generate_random_layers(2, 1, 1).unwrap();
        assert_eq!(layers.len(), 1);
        assert_eq!(layers[0].len(), 4);
        assert!(matches!(
            layers[0][2],
            Gate::Cnot { control: 0, target: 1 }
        ));
        assert!(matches!(
            layers[0][3],
            Gate::Cnot { control: 1, target: 0 }
        ));

        // One qubit: no entangling ring.
        let layers = generate_random_layers(1, 2, 1).unwrap();
        assert!(layers.iter().all(|l| l.len() == 1));
    }

    #[test]
    fn run_without_layers_is_analytic() {
        let spec = CircuitSpec::generate(1, 0, 0).unwrap();
        for p in [0.0, 0.25, 0.5, 0.99] {
            let out = spec.run(&[PI * p]).unwrap();
            assert_abs_diff_eq!(out[0], (PI * p).cos(), epsilon = 1e-12);
        }

        let spec = CircuitSpec::generate(4, 0, 0).unwrap();
        assert_eq!(spec.run(&[0.0; 4]).unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn run_rejects_angle_count_mismatch() {
        let spec = CircuitSpec::generate(2, 1, 0).unwrap();
        assert!(matches!(spec.run(&[0.1]), Err(Error::Structural(_))));
    }

    #[test]
    fn run_is_referentially_transparent() {
        let spec = CircuitSpec::generate(4, 4, 5).unwrap();
        let angles = [0.1, 0.9, 2.4, 3.0];
        let a = spec.run(&angles).unwrap();
        let b = spec.run(&angles).unwrap();
        assert_eq!(a, b, "identical spec and angles must be bit-identical");
    }
}
