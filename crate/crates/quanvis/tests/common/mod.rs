//! Shared test fixtures: a dense-matrix oracle for the statevector simulator.
//!
//! Everything here is built from first principles — explicit 2^n × 2^n
//! matrices in the same little-endian basis ordering — and never calls into
//! the simulator's gate application path, so it can serve as an independent
//! reference.

#![allow(dead_code)]

pub mod gradcheck;

use num_complex::Complex64;
use quanvis::qsim::Gate;

/// Row-major dense complex matrix of dimension 2^n.
pub struct DenseMatrix {
    pub dim: usize,
    pub data: Vec<Complex64>,
}

impl DenseMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![Complex64::ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = Complex64::ONE;
        }
        m
    }

    pub fn at(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: Complex64) {
        self.data[row * self.dim + col] = v;
    }

    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.dim)
            .map(|row| {
                (0..self.dim)
                    .map(|col| self.at(row, col) * v[col])
                    .sum::<Complex64>()
            })
            .collect()
    }

    pub fn matmul(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.dim, rhs.dim);
        let mut out = DenseMatrix::zeros(self.dim);
        for row in 0..self.dim {
            for col in 0..self.dim {
                let mut acc = Complex64::ZERO;
                for k in 0..self.dim {
                    acc += self.at(row, k) * rhs.at(k, col);
                }
                out.set(row, col, acc);
            }
        }
        out
    }

    /// max |(M·M† − I)[i,j]|
    pub fn unitarity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for row in 0..self.dim {
            for col in 0..self.dim {
                let mut acc = Complex64::ZERO;
                for k in 0..self.dim {
                    acc += self.at(row, k) * self.at(col, k).conj();
                }
                let expected = if row == col { 1.0 } else { 0.0 };
                worst = worst.max((acc - Complex64::new(expected, 0.0)).norm());
            }
        }
        worst
    }
}

/// 2×2 rotation matrices written out from the textbook definitions.
fn rotation_2x2(gate: &Gate) -> Option<[[Complex64; 2]; 2]> {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    match *gate {
        Gate::Ry { angle, .. } => {
            let (s, co) = (angle / 2.0).sin_cos();
            Some([[c(co, 0.0), c(-s, 0.0)], [c(s, 0.0), c(co, 0.0)]])
        }
        Gate::Rx { angle, .. } => {
            let (s, co) = (angle / 2.0).sin_cos();
            Some([[c(co, 0.0), c(0.0, -s)], [c(0.0, -s), c(co, 0.0)]])
        }
        Gate::Rz { angle, .. } => {
            let half = angle / 2.0;
            Some([
                [Complex64::from_polar(1.0, -half), c(0.0, 0.0)],
                [c(0.0, 0.0), Complex64::from_polar(1.0, half)],
            ])
        }
        _ => None,
    }
}

/// Embed a gate as an explicit dense 2^n × 2^n unitary, little-endian
/// qubit order (qubit 0 is the least significant bit of the basis index).
pub fn embed_gate(n_qubits: usize, gate: &Gate) -> DenseMatrix {
    let dim = 1usize << n_qubits;
    let mut m = DenseMatrix::zeros(dim);
    match *gate {
        Gate::Ry { target, .. } | Gate::Rx { target, .. } | Gate::Rz { target, .. } => {
            let u = rotation_2x2(gate).unwrap();
            for row in 0..dim {
                for col in 0..dim {
                    if row & !(1 << target) == col & !(1 << target) {
                        let rb = (row >> target) & 1;
                        let cb = (col >> target) & 1;
                        m.set(row, col, u[rb][cb]);
                    }
                }
            }
        }
        Gate::Cnot { control, target } => {
            for col in 0..dim {
                let row = col ^ (((col >> control) & 1) << target);
                m.set(row, col, Complex64::ONE);
            }
        }
        Gate::Cz { a, b } => {
            for col in 0..dim {
                let sign = if (col >> a) & 1 == 1 && (col >> b) & 1 == 1 {
                    -1.0
                } else {
                    1.0
                };
                m.set(col, col, Complex64::new(sign, 0.0));
            }
        }
    }
    m
}

/// Ground-state vector |00…0⟩ of dimension 2^n.
pub fn ground_vec(n_qubits: usize) -> Vec<Complex64> {
    let mut v = vec![Complex64::ZERO; 1 << n_qubits];
    v[0] = Complex64::ONE;
    v
}

/// ⟨Z⟩ of `qubit` computed directly from an amplitude vector.
pub fn expectation_z_ref(amps: &[Complex64], qubit: usize) -> f64 {
    amps.iter()
        .enumerate()
        .map(|(i, a)| {
            let sign = if (i >> qubit) & 1 == 0 { 1.0 } else { -1.0 };
            sign * a.norm_sqr()
        })
        .sum()
}

pub fn l2_norm(amps: &[Complex64]) -> f64 {
    amps.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt()
}
