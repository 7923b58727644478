//! Implementations of the five subcommands. Each one validates its
//! inputs, delegates the real work to the core library, writes its
//! artifacts atomically under `--out`, and prints a short human summary
//! to stdout (`decompose` prints the circuit text itself).

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Deserialize;
use serde_json::json;

use quditsim_core::compiler::{self, CouplingGraph, PulseSequence};
use quditsim_core::library;
use quditsim_core::linalg::{identity, phase_aligned_distance, CMat, C64};
use quditsim_core::physics::{
    solve_compensation, stark_shift, toneset_pair_shift, ReadoutModel, StarkModel,
};
use quditsim_core::rb::{run_rb, RbSpec};
use quditsim_core::sim::{
    run_noisy, run_pure, sample_readout, sample_readout_density, NoiseModel,
};
use quditsim_core::state::{ChoiOperator, QuditState};
use quditsim_core::tomo::{
    bootstrap_state_fidelity, matrix_to_json, reconstruct_process, reconstruct_state,
    simulate_process_counts, simulate_state_counts, standard_bases, TomoOptions,
};
use quditsim_core::{Error, Result};

use crate::output::{shots_csv, write_atomic, write_json};
use crate::parsing::{
    gate_name_and_dim, parse_floats, parse_ket, parse_levels, parse_noise, parse_pair,
};
use crate::{Common, SCHEMA_VERSION};

const VERIFY_TOL: f64 = 1e-9;

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

#[derive(Deserialize)]
struct MatrixJson {
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

fn load_unitary(path: &Path) -> Result<CMat> {
    let text = std::fs::read_to_string(path)?;
    let m: MatrixJson = serde_json::from_str(&text)?;
    let n = m.re.len();
    let rect = m.im.len() == n
        && m.re.iter().all(|row| row.len() == n)
        && m.im.iter().all(|row| row.len() == n);
    if n == 0 || !rect {
        return Err(invalid("unitary file must hold square re/im arrays"));
    }
    Ok(CMat::from_fn(n, n, |r, c| C64::new(m.re[r][c], m.im[r][c])))
}

fn coupling_graph(kind: &str, d: usize) -> Result<CouplingGraph> {
    match kind {
        "full" => Ok(CouplingGraph::full(d)),
        "ladder" => Ok(CouplingGraph::ladder(d)),
        "star" => CouplingGraph::star(d, 0),
        other => Err(invalid(format!("unknown coupling graph {other:?}"))),
    }
}

/// What the compiled sequence was checked against, and how closely it
/// matched.
struct Verification {
    distance: f64,
    reference: &'static str,
}

pub fn decompose(
    gate: Option<String>,
    want_identity: bool,
    unitary: Option<std::path::PathBuf>,
    dim: Option<usize>,
    params: &[f64],
    graph_kind: &str,
    common: &Common,
) -> Result<()> {
    let (seq, verification, source): (PulseSequence, Verification, serde_json::Value) =
        if want_identity {
            let d = dim.ok_or_else(|| invalid("--identity needs --dim"))?;
            let seq = compiler::decompose(&identity(d), &coupling_graph(graph_kind, d)?)?;
            let v = Verification {
                distance: seq.recomposition_error.unwrap_or(0.0),
                reference: "identity",
            };
            (seq, v, json!({ "identity": true, "dim": d }))
        } else if let Some(path) = unitary {
            let u = load_unitary(&path)?;
            let d = u.nrows();
            if let Some(want) = dim {
                if want != d {
                    return Err(invalid(format!("file holds a {d}x{d} matrix, --dim says {want}")));
                }
            }
            let seq = compiler::decompose(&u, &coupling_graph(graph_kind, d)?)?;
            let v = Verification {
                distance: seq.recomposition_error.unwrap_or(f64::NAN),
                reference: "unitary file",
            };
            (seq, v, json!({ "unitary": path.display().to_string(), "dim": d }))
        } else if let Some(name) = gate {
            let (base, d) = gate_name_and_dim(&name, dim)?;
            let upper = base.to_ascii_uppercase();
            match upper.as_str() {
                "CINC" => {
                    let seq = compiler::synth_cinc(d, None)?;
                    let distance =
                        phase_aligned_distance(&seq.comp_block()?, &library::cinc(d)?);
                    let v = Verification { distance, reference: "controlled increment" };
                    (seq, v, json!({ "gate": "CINC", "dim": d }))
                }
                "CEX" => {
                    // control, t1, t2 from --params; default to the top
                    // control level exchanging the lowest target pair
                    let (c, t1, t2) = match params {
                        [] => (d - 1, 0, 1),
                        [a, b, e] => (*a as usize, *b as usize, *e as usize),
                        _ => return Err(invalid("CEX takes --params control,t1,t2")),
                    };
                    let seq = compiler::synth_cex(d, c, t1, t2, None)?;
                    // the definitional permutation, with the documented
                    // bare -i on the decoupled targets of the active branch
                    let mut expect = library::cex(d, c, t1, t2)?;
                    for ta in 0..d {
                        if ta != t1 && ta != t2 {
                            for tb in 0..d {
                                expect[(c * d + ta, c * d + tb)] *= C64::new(0.0, -1.0);
                            }
                        }
                    }
                    let distance = phase_aligned_distance(&seq.comp_block()?, &expect);
                    let v = Verification { distance, reference: "embedded CNOT contract" };
                    (seq, v, json!({ "gate": "CEX", "dim": d, "levels": [c, t1, t2] }))
                }
                _ => {
                    let u = library::gate_by_name(&base, d, params)?;
                    if u.nrows() != d {
                        return Err(invalid(format!(
                            "{base} acts on two qudits; only CEX and CINC synthesize here"
                        )));
                    }
                    let seq = compiler::decompose(&u, &coupling_graph(graph_kind, d)?)?;
                    let v = Verification {
                        distance: seq.recomposition_error.unwrap_or(f64::NAN),
                        reference: "library matrix",
                    };
                    (seq, v, json!({ "gate": base, "dim": d }))
                }
            }
        } else {
            return Err(invalid("pick one of --gate, --identity or --unitary"));
        };

    let text = seq.circuit.to_text();
    let resources = seq.resources();
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "source": source,
        "graph": graph_kind,
        "resources": serde_json::to_value(resources)?,
        "verification": {
            "reference": verification.reference,
            "distance": verification.distance,
            "tolerance": VERIFY_TOL,
            "passed": verification.distance < VERIFY_TOL,
        },
    });
    write_atomic(&common.out, "circuit.qc", &text)?;
    write_json(&common.out, "pulse_sequence.json", &serde_json::to_value(&seq)?)?;
    write_json(&common.out, "decompose.json", &report)?;
    print!("{text}");
    Ok(())
}

fn decode_joint(mut index: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for site in (0..dims.len()).rev() {
        out[site] = index % dims[site];
        index /= dims[site];
    }
    out
}

/// Projective sampling straight from the outcome distribution, used when
/// no readout model is given.
fn sample_ideal(probs: &[f64], dims: &[usize], seed: u64, shots: usize) -> Vec<Vec<usize>> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..shots)
        .map(|_| {
            let x: f64 = rng.random();
            let mut acc = 0.0;
            let mut hit = probs.len() - 1;
            for (k, p) in probs.iter().enumerate() {
                acc += p;
                if x < acc {
                    hit = k;
                    break;
                }
            }
            decode_joint(hit, dims)
        })
        .collect()
}

fn load_readout(spec: &str) -> Result<ReadoutModel> {
    if spec == "default" {
        Ok(ReadoutModel::default())
    } else {
        ReadoutModel::load(Path::new(spec))
    }
}

pub fn run(
    circuit_path: &Path,
    input: &str,
    shots: usize,
    noise: Option<&str>,
    readout: Option<&str>,
    common: &Common,
) -> Result<()> {
    let text = std::fs::read_to_string(circuit_path)?;
    let circuit = quditsim_core::circuit::Circuit::from_text(&text)?;
    let levels = parse_levels(input)?;
    if levels.len() != circuit.dims.len() {
        return Err(invalid(format!(
            "circuit has {} sites, input names {}",
            circuit.dims.len(),
            levels.len()
        )));
    }
    let initial = QuditState::basis(circuit.dims.clone(), &levels)?;
    let noise_model = noise.map(parse_noise).transpose()?;
    let readout_model = readout.map(load_readout).transpose()?;

    let outcomes: Vec<Vec<usize>> = match (&noise_model, &readout_model) {
        (None, None) => {
            let state = run_pure(&circuit, &initial)?;
            sample_ideal(&state.probabilities(), &circuit.dims, common.seed, shots)
        }
        (None, Some(model)) => {
            let state = run_pure(&circuit, &initial)?;
            sample_readout(&state, model, common.seed, shots)?
                .into_iter()
                .map(|r| r.outcomes)
                .collect()
        }
        (Some(nm), None) => {
            let rho = run_noisy(&circuit, &initial.to_density(), nm)?;
            sample_ideal(&rho.probabilities(), &circuit.dims, common.seed, shots)
        }
        (Some(nm), Some(model)) => {
            let rho = run_noisy(&circuit, &initial.to_density(), nm)?;
            sample_readout_density(&rho, model, common.seed, shots)?
                .into_iter()
                .map(|r| r.outcomes)
                .collect()
        }
    };

    let mut histogram: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
    for row in &outcomes {
        *histogram.entry(row.clone()).or_insert(0) += 1;
    }
    // ties resolve to the lexicographically smallest outcome
    let most_frequent = histogram
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(outcome, _)| outcome.clone());
    let hist_json: Vec<serde_json::Value> = histogram
        .iter()
        .map(|(outcome, count)| json!({ "outcome": outcome, "count": count }))
        .collect();
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "circuit": circuit_path.display().to_string(),
        "dims": circuit.dims,
        "input": levels,
        "shots": shots,
        "seed": common.seed,
        "noise": noise.unwrap_or("none"),
        "readout": readout.unwrap_or("ideal"),
        "histogram": hist_json,
        "most_frequent": most_frequent,
    });
    write_atomic(&common.out, "shots.csv", &shots_csv(&outcomes))?;
    write_json(&common.out, "run_summary.json", &summary)?;
    match &most_frequent {
        Some(outcome) => println!(
            "{} shots; most frequent outcome {:?}",
            shots, outcome
        ),
        None => println!("0 shots"),
    }
    Ok(())
}

pub fn rb(
    dim: usize,
    lengths: Vec<usize>,
    sequences: usize,
    shots: u64,
    noise: Option<&str>,
    common: &Common,
) -> Result<()> {
    let noise_model = match noise {
        Some(spec) => parse_noise(spec)?,
        None => NoiseModel::none(),
    };
    let spec = RbSpec {
        dim,
        lengths,
        sequences_per_length: sequences,
        seed: common.seed,
    };
    let outcome = run_rb(&spec, &noise_model, shots)?;

    let mut csv = String::from("length,survival,std_error\n");
    for p in &outcome.points {
        csv.push_str(&format!("{},{},{}\n", p.length, p.survival, p.std_error));
    }
    let fit_doc = json!({
        "schema_version": SCHEMA_VERSION,
        "dim": dim,
        "lengths": spec.lengths,
        "sequences_per_length": sequences,
        "shots_per_sequence": shots,
        "seed": common.seed,
        "noise": noise.unwrap_or("none"),
        "fit": serde_json::to_value(outcome.fit)?,
        "error_per_clifford": outcome.error_per_clifford,
        "error_per_pulse": outcome.error_per_pulse,
        "mean_pulses_per_clifford": outcome.mean_pulses_per_clifford,
    });
    write_atomic(&common.out, "rb_points.csv", &csv)?;
    write_json(&common.out, "rb_fit.json", &fit_doc)?;
    println!(
        "error per Clifford {:.3e} ({:.1} pulses -> {:.3e} per pulse)",
        outcome.error_per_clifford, outcome.mean_pulses_per_clifford, outcome.error_per_pulse
    );
    Ok(())
}

pub fn tomo_state(
    target: &str,
    dim: Option<usize>,
    shots: u64,
    resamples: usize,
    common: &Common,
) -> Result<()> {
    let state = parse_ket(target, dim)?;
    let d = state.dims()[0];
    let bases = standard_bases(d)?;
    let truth = state.to_density();
    let opts = TomoOptions::default();
    let counts = simulate_state_counts(truth.matrix(), &bases, shots, common.seed);
    let (reconstructed, report) = reconstruct_state(&counts, &bases, &opts)?;
    let fidelity = reconstructed.fidelity(&truth)?;
    let interval = bootstrap_state_fidelity(&counts, &bases, &truth, resamples, common.seed, &opts)?;

    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "dim": d,
        "target": target,
        "shots_per_setting": shots,
        "seed": common.seed,
        "resamples": resamples,
        "fidelity": fidelity,
        "interval": {
            "point": interval.point,
            "lo16": interval.lo16,
            "hi84": interval.hi84,
            "width": interval.width(),
        },
        "solver": serde_json::to_value(&report)?,
        "rho": matrix_to_json(reconstructed.matrix()),
    });
    write_json(&common.out, "tomo_state.json", &doc)?;
    println!(
        "state fidelity {:.4} (1-sigma band {:.4}..{:.4}, {} settings x {} shots)",
        fidelity,
        interval.lo16,
        interval.hi84,
        counts.counts.len(),
        shots
    );
    Ok(())
}

pub fn tomo_process(gate: &str, dim: Option<usize>, shots: u64, common: &Common) -> Result<()> {
    let (base, d) = gate_name_and_dim(gate, dim)?;
    let u = library::gate_by_name(&base, d, &[])?;
    if u.nrows() != d {
        return Err(invalid("process tomography here covers single-qudit gates"));
    }
    let channel = ChoiOperator::from_unitary(&u)?;
    let bases = standard_bases(d)?;
    let counts = simulate_process_counts(&channel, &bases, shots, common.seed)?;
    let (reconstructed, report) = reconstruct_process(&counts, &bases, &TomoOptions::default())?;
    let fidelity = reconstructed.process_fidelity(&channel)?;

    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "dim": d,
        "gate": base,
        "shots_per_setting": shots,
        "seed": common.seed,
        "fidelity": fidelity,
        "solver": serde_json::to_value(&report)?,
        "choi": matrix_to_json(reconstructed.matrix()),
    });
    write_json(&common.out, "tomo_process.json", &doc)?;
    println!("process fidelity {fidelity:.4} for {base} at d={d}");
    Ok(())
}

fn load_stark(model: Option<&Path>) -> Result<(StarkModel, String)> {
    match model {
        Some(path) => Ok((StarkModel::load(path)?, path.display().to_string())),
        None => Ok((StarkModel::illustrative(), "illustrative".to_string())),
    }
}

pub fn stark_sweep(
    pair: &str,
    from: f64,
    to: f64,
    steps: usize,
    model: Option<&Path>,
    common: &Common,
) -> Result<()> {
    if steps < 2 {
        return Err(invalid("need at least 2 sweep steps"));
    }
    if !(from.is_finite() && to.is_finite() && from < to) {
        return Err(invalid("sweep range must be finite with from < to"));
    }
    let (i, j) = parse_pair(pair)?;
    let (stark, source) = load_stark(model)?;
    let mut csv = String::from("detuning_hz,shift_hz\n");
    let mut masked = 0usize;
    for k in 0..steps {
        let delta = from + (to - from) * k as f64 / (steps - 1) as f64;
        match stark_shift(&stark, i, j, delta) {
            Ok(shift) => csv.push_str(&format!("{delta},{shift}\n")),
            // points inside a resonance guard band are tabulated as nan
            Err(Error::ResonanceHit { .. }) => {
                csv.push_str(&format!("{delta},nan\n"));
                masked += 1;
            }
            Err(e) => return Err(e),
        }
    }
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "model": source,
        "pair": [i, j],
        "from_hz": from,
        "to_hz": to,
        "steps": steps,
        "masked_points": masked,
    });
    write_atomic(&common.out, "stark_sweep.csv", &csv)?;
    write_json(&common.out, "stark_sweep.json", &doc)?;
    println!("{steps} points swept, {masked} inside resonance guard bands");
    Ok(())
}

pub fn stark_compensate(
    occupied: &str,
    detunings: &str,
    target_pair: &str,
    target_shift: f64,
    model: Option<&Path>,
    common: &Common,
) -> Result<()> {
    let occupied = parse_levels(occupied)?;
    let detunings = parse_floats(detunings)?;
    let pair = parse_pair(target_pair)?;
    let (stark, source) = load_stark(model)?;
    let tones = solve_compensation(&stark, &occupied, &detunings, pair, target_shift)?;

    // the solution shifts level i* against all other occupied levels, which
    // move in lockstep: pairs without i* are nulled, pairs with i* carry
    // the target differential by construction
    let mut pair_shifts = Vec::new();
    let mut achieved = f64::NAN;
    let mut max_residual: f64 = 0.0;
    for (a_idx, &a) in occupied.iter().enumerate() {
        for &b in &occupied[a_idx + 1..] {
            let shift = toneset_pair_shift(&stark, a, b, &tones)?;
            if (a, b) == pair || (b, a) == pair {
                achieved = shift;
            } else if a != pair.0 && b != pair.0 {
                max_residual = max_residual.max(shift.abs());
            }
            pair_shifts.push(json!({ "pair": [a, b], "shift_hz": shift }));
        }
    }
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "model": source,
        "occupied": occupied,
        "detunings_hz": detunings,
        "target_pair": [pair.0, pair.1],
        "target_shift_hz": target_shift,
        "tones": serde_json::to_value(&tones)?,
        "achieved_target_hz": achieved,
        "max_residual_hz": max_residual,
        "pair_shifts_hz": pair_shifts,
    });
    write_json(&common.out, "stark_compensation.json", &doc)?;
    println!(
        "level {} shifted {achieved:.6} Hz against the rest; largest residual \
         among the others {max_residual:.3e} Hz",
        pair.0
    );
    Ok(())
}
