//! Property suite for the statevector simulator: norm preservation, gate
//! unitarity, dense-oracle equivalence, and expectation bounds.

mod common;

use common::{embed_gate, expectation_z_ref, ground_vec, l2_norm, DenseMatrix};
use quanvis::qsim::{generate_random_layers, CircuitSpec, Gate, StateVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{PI, TAU};

/// Full gate sequence of a circuit: per-qubit Ry encodings then the flattened
/// random layers, exactly what `CircuitSpec::run` applies.
fn circuit_gates(n_qubits: usize, n_layers: usize, seed: u64, angles: &[f64]) -> Vec<Gate> {
    let mut gates: Vec<Gate> = angles
        .iter()
        .enumerate()
        .map(|(target, &angle)| Gate::Ry { angle, target })
        .collect();
    for layer in generate_random_layers(n_qubits, n_layers, seed).unwrap() {
        gates.extend(layer);
    }
    gates
}

fn seeded_angles(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.0..PI)).collect()
}

#[test]
fn norm_preserved_over_1000_circuits_on_1_to_16_qubits() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA0);
    for trial in 0..1000u64 {
        let n_qubits = (trial as usize % 16) + 1;
        let n_layers = (trial as usize % 4) + 1;
        let angles = seeded_angles(&mut rng, n_qubits);
        let mut state = StateVector::ground(n_qubits).unwrap();
        for gate in circuit_gates(n_qubits, n_layers, trial, &angles) {
            state.apply(&gate).unwrap();
            let drift = (state.norm() - 1.0).abs();
            assert!(
                drift < 1e-12,
                "norm drift {drift:e} after {gate:?} in trial {trial}"
            );
        }
    }
}

#[test]
fn every_gate_matrix_is_unitary() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xB1);
    for _ in 0..50 {
        let angle = rng.random_range(0.0..TAU);
        let gates = [
            Gate::Ry { angle, target: 0 },
            Gate::Rx { angle, target: 1 },
            Gate::Rz { angle, target: 2 },
            Gate::Cnot {
                control: 0,
                target: 2,
            },
            Gate::Cz { a: 1, b: 2 },
        ];
        for gate in gates {
            let defect = embed_gate(3, &gate).unitarity_defect();
            assert!(defect < 1e-12, "U·U† defect {defect:e} for {gate:?}");
        }
    }
}

#[test]
fn gate_by_gate_agrees_with_dense_oracle_up_to_6_qubits() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC2);
    for trial in 0..200u64 {
        let n_qubits = (trial as usize % 6) + 1;
        let n_layers = (trial as usize % 4) + 1;
        let angles = seeded_angles(&mut rng, n_qubits);

        let mut state = StateVector::ground(n_qubits).unwrap();
        let mut oracle = ground_vec(n_qubits);
        for gate in circuit_gates(n_qubits, n_layers, trial, &angles) {
            state.apply(&gate).unwrap();
            oracle = embed_gate(n_qubits, &gate).matvec(&oracle);
            for (a, b) in state.amplitudes().iter().zip(oracle.iter()) {
                assert!(
                    (a - b).norm() < 1e-10,
                    "amplitude mismatch {:e} in trial {trial}",
                    (a - b).norm()
                );
            }
        }
    }
}

#[test]
fn full_circuit_unitary_product_matches_run() {
    // The whole circuit as one explicit dense unitary, multiplied against the
    // ground state; dimensions kept small so the matrix product stays cheap.
    let mut rng = ChaCha8Rng::seed_from_u64(0xD3);
    for trial in 0..60u64 {
        let n_qubits = (trial as usize % 3) + 1;
        let spec = CircuitSpec::generate(n_qubits, 4, trial).unwrap();
        let angles = seeded_angles(&mut rng, n_qubits);

        let mut full = DenseMatrix::identity(1 << n_qubits);
        for gate in circuit_gates(n_qubits, 4, trial, &angles) {
            full = embed_gate(n_qubits, &gate).matmul(&full);
        }
        assert!(full.unitarity_defect() < 1e-12);

        let amps = full.matvec(&ground_vec(n_qubits));
        let outputs = spec.run(&angles).unwrap();
        for (q, &z) in outputs.iter().enumerate() {
            let reference = expectation_z_ref(&amps, q);
            assert!(
                (z - reference).abs() < 1e-10,
                "⟨Z_{q}⟩ {z} vs oracle {reference} in trial {trial}"
            );
        }
    }
}

#[test]
fn expectations_stay_in_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xE4);
    for trial in 0..200u64 {
        let n_qubits = (trial as usize % 8) + 1;
        let spec = CircuitSpec::generate(n_qubits, 4, trial).unwrap();
        let angles = seeded_angles(&mut rng, n_qubits);
        for z in spec.run(&angles).unwrap() {
            assert!((-1.0..=1.0).contains(&z), "⟨Z⟩ = {z} out of bounds");
        }
    }
    // Norm check of the final state for good measure.
    let mut state = StateVector::ground(8).unwrap();
    for gate in circuit_gates(8, 4, 7, &[0.4; 8]) {
        state.apply(&gate).unwrap();
    }
    assert!((l2_norm(state.amplitudes()) - 1.0).abs() < 1e-12);
}
