//! Shared oracle helpers for the integration suites: an independent energy
//! summation and an exhaustive ground-state scan.

#![allow(dead_code)]

use fclmqc::ising::IsingProblem;

/// Energy computed straight off the coefficient arrays, independently of
/// `IsingProblem::energy`.
pub fn oracle_energy(p: &IsingProblem, spins: &[i8]) -> f64 {
    let mut e = 0.0;
    for (i, &a) in p.qubit_coeffs().iter().enumerate() {
        e += a * f64::from(spins[i]);
    }
    for (i, c) in p.graph().couplers().iter().enumerate() {
        e += p.coupler_coeffs()[i]
            * f64::from(spins[c.q1.index()])
            * f64::from(spins[c.q2.index()]);
    }
    e
}

/// Bit i of `bits` set means spin i is +1.
pub fn fill_spins(bits: u64, spins: &mut [i8]) {
    for (q, s) in spins.iter_mut().enumerate() {
        *s = if bits >> q & 1 == 1 { 1 } else { -1 };
    }
}

/// Exhaustive scan of all 2^n states: the minimum energy and every state
/// attaining it. The 1e-9 tolerance sits far below the smallest energy gap
/// these rational-coefficient problems can produce.
pub fn exhaustive_minimizers(p: &IsingProblem) -> (f64, Vec<u64>) {
    let n = p.num_qubits();
    assert!(n <= 20, "exhaustive scan capped at 20 qubits");
    let mut spins = vec![0i8; n];
    let mut best = f64::INFINITY;
    let mut argmin = Vec::new();
    for bits in 0..(1u64 << n) {
        fill_spins(bits, &mut spins);
        let e = oracle_energy(p, &spins);
        if e < best - 1e-9 {
            best = e;
            argmin.clear();
            argmin.push(bits);
        } else if (e - best).abs() <= 1e-9 {
            argmin.push(bits);
        }
    }
    (best, argmin)
}

/// Sum of every qubit and coupler coefficient, computed independently.
pub fn coefficient_sum(p: &IsingProblem) -> f64 {
    p.qubit_coeffs().iter().sum::<f64>() + p.coupler_coeffs().iter().sum::<f64>()
}
