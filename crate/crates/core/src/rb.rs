//! Randomized benchmarking of single-qudit Cliffords and fidelity-decay
//! experiments for the entangling gates.
//!
//! RB draws uniform random Clifford sequences, closes each with the exact
//! group inverse, compiles every element to pulses, and simulates the
//! survival probability of |0> under a noise model. Survival is fitted to
//! F(m) = A p^m + B; the error per Clifford uses the depolarizing
//! convention r = (1 - p)(d - 1)/d, which makes r the average gate
//! infidelity of a depolarizing channel with retention p. The error per
//! pulse is r divided by the mean compiled pulse count per Clifford.
//!
//! Gate decay applies an entangling gate n times at its periodicity
//! (2 for the controlled exchange, 3 for the qutrit controlled
//! increment), recording the population on the ideal support and the
//! contrast of an interference fringe scanned by an analysis rotation on
//! the control. Both observables decay with the same base for
//! depolarizing noise, so their average is fitted to A q^n + B and
//! converted to a per-gate average fidelity 1 - (1 - q)(D - 1)/D on the
//! simulated joint space of dimension D.

use crate::circuit::{Circuit, Instruction};
use crate::compiler::{decompose, synth_cex, synth_cinc, CouplingGraph, PulseSequence};
use crate::error::{Error, Result};
use crate::fit::{fit_exponential, fit_exponential_fixed_offset, fringe_contrast, ExpFit};
use crate::library::CliffordGroup;
use crate::linalg::{identity, phase_aligned_distance, C64, CVec};
use crate::sim::{run_noisy, run_pure, NoiseModel};
use crate::state::QuditState;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;

/// Parameters of a randomized-benchmarking run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RbSpec {
    pub dim: usize,
    pub lengths: Vec<usize>,
    pub sequences_per_length: usize,
    pub seed: u64,
}

impl RbSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sequences_per_length < 20 {
            return Err(Error::InvalidArgument(format!(
                "randomized benchmarking needs at least 20 sequences per length, got {}",
                self.sequences_per_length
            )));
        }
        if self.lengths.len() < 3 {
            return Err(Error::InvalidArgument(
                "need at least 3 sequence lengths to fit a decay".into(),
            ));
        }
        if self.lengths.iter().any(|&m| m == 0) {
            return Err(Error::InvalidArgument("sequence lengths must be >= 1".into()));
        }
        Ok(())
    }
}

/// Mean survival at one sequence length.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RbPoint {
    pub length: usize,
    pub survival: f64,
    pub std_error: f64,
}

/// Result of a randomized-benchmarking run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RbOutcome {
    pub points: Vec<RbPoint>,
    pub fit: ExpFit,
    /// average gate infidelity per Clifford, (1 - p)(d - 1)/d
    pub error_per_clifford: f64,
    /// error per Clifford divided by the mean pulse count
    pub error_per_pulse: f64,
    pub mean_pulses_per_clifford: f64,
}

fn compiled_clifford(
    cache: &mut HashMap<usize, Vec<Instruction>>,
    group: &CliffordGroup,
    k: usize,
) -> Result<Vec<Instruction>> {
    if let Some(instrs) = cache.get(&k) {
        return Ok(instrs.clone());
    }
    let graph = CouplingGraph::ladder(group.dim());
    let seq = decompose(group.element(k), &graph)?;
    let folded = crate::compiler::fold_stark_phases(&seq);
    let instrs = folded.circuit.instructions;
    cache.insert(k, instrs.clone());
    Ok(instrs)
}

fn binomial_fraction(p: f64, shots: u64, rng: &mut ChaCha12Rng) -> f64 {
    if shots == 0 {
        return p;
    }
    let dist = Binomial::new(shots, p.clamp(0.0, 1.0)).expect("probability in range");
    dist.sample(rng) as f64 / shots as f64
}

/// Run randomized benchmarking: uniform Clifford sequences closed by the
/// exact group inverse, simulated under `noise`, survival of |0> fitted
/// to A p^m + B. `shots = 0` records exact survival probabilities.
pub fn run_rb(spec: &RbSpec, noise: &NoiseModel, shots: u64) -> Result<RbOutcome> {
    spec.validate()?;
    let d = spec.dim;
    let group = CliffordGroup::enumerate(d)?;
    let mut cache: HashMap<usize, Vec<Instruction>> = HashMap::new();
    let input = QuditState::basis(vec![d], &[0])?.to_density();
    let mut points = Vec::new();
    let mut total_pulses = 0usize;
    let mut total_cliffords = 0usize;
    for (li, &m) in spec.lengths.iter().enumerate() {
        let mut survivals = Vec::new();
        for s in 0..spec.sequences_per_length {
            let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
            rng.set_stream((li as u64) * 1_000_003 + s as u64);
            let mut circuit = Circuit::new(vec![d])?;
            let mut product = identity(d);
            for _ in 0..m {
                let k = rng.random_range(0..group.len());
                for instr in compiled_clifford(&mut cache, &group, k)? {
                    circuit.push(instr);
                }
                total_pulses += cache[&k].len();
                product = group.element(k) * &product;
            }
            let pk = group
                .lookup(&product)
                .ok_or_else(|| Error::InvalidArgument("sequence left the group".into()))?;
            let inv = group.inverse_index(pk);
            for instr in compiled_clifford(&mut cache, &group, inv)? {
                circuit.push(instr);
            }
            total_pulses += cache[&inv].len();
            total_cliffords += m + 1;
            let closed = group.element(inv) * &product;
            if phase_aligned_distance(&closed, &identity(d)) > 1e-9 {
                return Err(Error::InvalidArgument(
                    "inverse lookup failed to close the sequence".into(),
                ));
            }
            let rho = run_noisy(&circuit, &input, noise)?;
            let survival = rho.probabilities()[0];
            survivals.push(binomial_fraction(survival, shots, &mut rng));
        }
        let n = survivals.len() as f64;
        let mean = survivals.iter().sum::<f64>() / n;
        let var = survivals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        points.push(RbPoint {
            length: m,
            survival: mean,
            std_error: (var / n).sqrt(),
        });
    }
    let ms: Vec<f64> = points.iter().map(|p| p.length as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.survival).collect();
    // floor the weights so exact-simulation runs (zero spread) stay solvable
    let sigmas: Vec<f64> = points.iter().map(|p| p.std_error.max(1e-4)).collect();
    // ideal Cliffords twirl gate-independent noise to a depolarizing
    // channel, so survival relaxes to exactly 1/d; pinning the asymptote
    // keeps the decay rate identifiable at shallow depths
    let fit = fit_exponential_fixed_offset(&ms, &ys, &sigmas, 1.0 / d as f64)?;
    let mean_pulses = total_pulses as f64 / total_cliffords as f64;
    let r = (1.0 - fit.p) * (d as f64 - 1.0) / d as f64;
    Ok(RbOutcome {
        points,
        fit,
        error_per_clifford: r,
        error_per_pulse: r / mean_pulses,
        mean_pulses_per_clifford: mean_pulses,
    })
}

/// Entangling gate benchmarked by repeated application.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecayGate {
    /// controlled exchange on qutrits, control level 1, target pair (0, 1)
    Cex,
    /// qutrit controlled increment, control level 2
    Cinc,
}

impl DecayGate {
    pub fn periodicity(&self) -> usize {
        match self {
            DecayGate::Cex => 2,
            DecayGate::Cinc => 3,
        }
    }

    /// Level superposed with 0 on the control in the benchmark input.
    fn coherent_level(&self) -> usize {
        match self {
            DecayGate::Cex => 1,
            DecayGate::Cinc => 2,
        }
    }

    pub fn synthesize(&self) -> Result<PulseSequence> {
        match self {
            DecayGate::Cex => synth_cex(3, 1, 0, 1, None),
            DecayGate::Cinc => synth_cinc(3, None),
        }
    }

    /// Benchmark input (|0> + |k>) |0> / sqrt(2) on the synthesized dims.
    fn input_state(&self, dims: &[usize]) -> Result<QuditState> {
        let k = self.coherent_level();
        let total: usize = dims.iter().product();
        let mut amps = CVec::zeros(total);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        amps[0] = C64::new(r, 0.0);
        amps[k * dims[1]] = C64::new(r, 0.0);
        QuditState::new(dims.to_vec(), amps)
    }
}

/// Parameters of a gate fidelity-decay experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateDecaySpec {
    pub gate: DecayGate,
    /// repetition counts, each a multiple of the gate periodicity
    pub reps: Vec<usize>,
    pub shots: u64,
    pub seed: u64,
    pub phase_points: usize,
}

impl GateDecaySpec {
    pub fn standard(gate: DecayGate, shots: u64, seed: u64) -> Self {
        let period = gate.periodicity();
        GateDecaySpec {
            gate,
            reps: (0..=10).map(|k| k * period).collect(),
            shots,
            seed,
            phase_points: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let period = self.gate.periodicity();
        if self.reps.len() < 3 {
            return Err(Error::InvalidArgument(
                "need at least 3 repetition counts to fit a decay".into(),
            ));
        }
        if self.reps.iter().any(|&n| n % period != 0) {
            return Err(Error::InvalidArgument(format!(
                "repetition counts must be multiples of the gate periodicity {period}"
            )));
        }
        if self.phase_points < 4 {
            return Err(Error::InvalidArgument(
                "fringe scan needs at least 4 phase points".into(),
            ));
        }
        Ok(())
    }
}

/// Observables at one repetition count.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GateDecayPoint {
    pub reps: usize,
    pub population: f64,
    pub contrast: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateDecayOutcome {
    pub points: Vec<GateDecayPoint>,
    pub fit: ExpFit,
    /// per-gate average fidelity 1 - (1 - q)(D - 1)/D
    pub fidelity: f64,
    pub joint_dim: usize,
}

/// Run a fidelity-decay experiment: apply the gate n times, measure the
/// population on the ideal support and the fringe contrast from an
/// analysis rotation on the control, fit avg(population, contrast) to
/// A q^n + B. `shots = 0` records exact probabilities. The noisy state
/// is evolved once and shared between repetition counts, which is exact
/// because the noise channels compose per instruction.
pub fn run_gate_decay(spec: &GateDecaySpec, noise: &NoiseModel) -> Result<GateDecayOutcome> {
    spec.validate()?;
    let seq = spec.gate.synthesize()?;
    let dims = seq.circuit.dims.clone();
    let joint_dim: usize = dims.iter().product();
    let input = spec.gate.input_state(&dims)?;
    let k = spec.gate.coherent_level();
    let support = [0usize, k * dims[1]];
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let mut reps = spec.reps.clone();
    reps.sort_unstable();
    let mut analysis = Circuit::new(dims.clone())?;
    analysis.push(Instruction::rotation(0, 0, k, PI / 2.0, 0.0));
    let mut rho = input.to_density();
    let mut applied = 0usize;
    let mut points = Vec::new();
    for &n in &reps {
        while applied < n {
            rho = run_noisy(&seq.circuit, &rho, noise)?;
            applied += 1;
        }
        let probs = rho.probabilities();
        let population = binomial_fraction(
            support.iter().map(|&idx| probs[idx]).sum(),
            spec.shots,
            &mut rng,
        );
        // fringe scan: analysis rotation on the control, then the
        // marginal population of control level 0
        let mut phases = Vec::new();
        let mut values = Vec::new();
        for l in 0..spec.phase_points {
            let phi = 2.0 * PI * l as f64 / spec.phase_points as f64;
            if let Instruction::Rotation { phi: slot, .. } = &mut analysis.instructions[0] {
                *slot = phi;
            }
            let rho_a = run_noisy(&analysis, &rho, noise)?;
            let probs_a = rho_a.probabilities();
            let p0: f64 = (0..dims[1]).map(|b| probs_a[b]).sum();
            phases.push(phi);
            values.push(binomial_fraction(p0, spec.shots, &mut rng));
        }
        let contrast = fringe_contrast(&phases, &values)?;
        points.push(GateDecayPoint {
            reps: n,
            population,
            contrast,
        });
    }
    let ns: Vec<f64> = points.iter().map(|p| p.reps as f64).collect();
    let ys: Vec<f64> = points
        .iter()
        .map(|p| 0.5 * (p.population + p.contrast))
        .collect();
    let sigma = if spec.shots == 0 {
        1e-6
    } else {
        (0.25 / spec.shots as f64).sqrt()
    };
    let sigmas = vec![sigma; ys.len()];
    let fit = fit_exponential(&ns, &ys, &sigmas)?;
    let fidelity = 1.0 - (1.0 - fit.p) * (joint_dim as f64 - 1.0) / joint_dim as f64;
    Ok(GateDecayOutcome {
        points,
        fit,
        fidelity,
        joint_dim,
    })
}

/// Fidelity of a single noisy gate application on the benchmark input
/// against the ideal output state.
pub fn single_application_fidelity(gate: DecayGate, noise: &NoiseModel) -> Result<f64> {
    let seq = gate.synthesize()?;
    let dims = seq.circuit.dims.clone();
    let input = gate.input_state(&dims)?;
    let ideal = run_pure(&seq.circuit, &input)?;
    let noisy = run_noisy(&seq.circuit, &input.to_density(), noise)?;
    noisy.fidelity_pure(&ideal)
}

/// Find the per-MS depolarizing strength at which one application of the
/// gate reaches `target_fidelity` on the benchmark input, by bisection.
pub fn calibrate_ms_depolarizing(gate: DecayGate, target_fidelity: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&target_fidelity) {
        return Err(Error::InvalidArgument(
            "target fidelity must lie in (0, 1)".into(),
        ));
    }
    let fid = |p: f64| -> Result<f64> {
        single_application_fidelity(gate, &NoiseModel::depolarizing(0.0, p))
    };
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    if fid(hi)? > target_fidelity {
        return Err(Error::NoConvergence(
            "target fidelity unreachable within p_ms <= 0.5".into(),
        ));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if fid(mid)? > target_fidelity {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
