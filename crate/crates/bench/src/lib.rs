//! Deterministic fixtures shared by the criterion benches, so timings
//! compare like against like across runs and machines.

use quditsim_core::circuit::{Circuit, Instruction};
use quditsim_core::linalg::{haar_unitary, seeded_rng, CMat};
use rand::Rng;

/// A Haar-random unitary drawn from a fixed stream.
pub fn haar_fixture(d: usize, seed: u64) -> CMat {
    let mut rng = seeded_rng(seed);
    haar_unitary(d, &mut rng)
}

/// Alternating layers of random two-level rotations on every site and an
/// entangling pulse on the first pair, deep enough to exercise the full
/// instruction set.
pub fn layered_circuit(dims: &[usize], layers: usize, seed: u64) -> Circuit {
    let mut rng = seeded_rng(seed);
    let mut circuit = Circuit::new(dims.to_vec()).expect("fixture dims are valid");
    for layer in 0..layers {
        for (site, &d) in dims.iter().enumerate() {
            let i = rng.random_range(0..d - 1);
            let theta: f64 = rng.random_range(0.1..3.0);
            let phi: f64 = rng.random_range(-3.0..3.0);
            circuit.push(Instruction::rotation(site, i, i + 1, theta, phi));
        }
        if layer % 2 == 1 && dims.len() >= 2 {
            let theta: f64 = rng.random_range(0.1..1.5);
            circuit.push(Instruction::ms(0, 1, 0, 1, theta, 0.0));
        }
    }
    circuit
}
