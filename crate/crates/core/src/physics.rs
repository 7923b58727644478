//! Light-shift, crosstalk, and readout error models.
//!
//! The AC-Stark model evaluates the relative shift between two levels under
//! an off-resonant beam as
//!
//! ```text
//! Delta_{i,j}(delta) = (Omega^2/4) (2b - sum_t Omega_t^2 gamma_{i,j}^(t) / (delta - delta_t))
//! ```
//!
//! where the sum runs over quadrupole transitions t with detuning delta_t
//! (relative to the 0-1 reference transition) and relative coupling
//! Omega_t, and gamma is 2 when t is the (i, j) transition itself, 1 when
//! it shares exactly one level, 0 otherwise. The dipole background b has
//! units of 1/Hz so that (Omega^2/4) * 2b is a shift in Hz like the other
//! terms.
//!
//! The same physics is also exposed per level: each transition pushes its
//! S-manifold level down and its D-manifold level up by
//! (Omega^2/4) Omega_t^2 / (delta - delta_t), and the dipole background
//! pushes S up and D down. Pair differences of these per-level shifts
//! reproduce the formula above whenever (i, j) is a driven S-D pair, and
//! unlike the pairwise formula they stay consistent across arbitrary level
//! pairs, which is what the multi-tone compensation solver needs.

use crate::circuit::Instruction;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

const SCHEMA_VERSION: u32 = 1;

fn schema_default() -> u32 {
    SCHEMA_VERSION
}

/// One quadrupole transition of the level scheme. `levels.0` is the
/// S-manifold end (pushed down by a blue-detuned beam), `levels.1` the
/// D-manifold end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub label: String,
    pub levels: (usize, usize),
    /// detuning of this transition from the 0-1 reference, Hz
    pub detuning_hz: f64,
    /// coupling strength relative to the 0-1 transition, dimensionless
    pub coupling: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarkModel {
    #[serde(default = "schema_default")]
    pub schema_version: u32,
    /// levels belonging to the S manifold; all others are D
    pub s_levels: Vec<usize>,
    pub transitions: Vec<Transition>,
    /// Rabi frequency on the 0-1 reference transition, Hz
    pub rabi_hz: f64,
    /// dipole background shift coefficient, 1/Hz
    pub dipole_b: f64,
    /// minimum allowed distance of a tone from any transition, Hz
    #[serde(default = "default_guard")]
    pub guard_band_hz: f64,
}

fn default_guard() -> f64 {
    1e3
}

impl StarkModel {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: self.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        if !(self.rabi_hz > 0.0) || !self.guard_band_hz.is_finite() || self.guard_band_hz < 0.0 {
            return Err(Error::InvalidArgument(
                "rabi frequency must be positive and the guard band non-negative".into(),
            ));
        }
        for t in &self.transitions {
            let (s, d) = t.levels;
            if s == d {
                return Err(Error::InvalidTransition(format!(
                    "{}: degenerate level pair",
                    t.label
                )));
            }
            if !self.s_levels.contains(&s) || self.s_levels.contains(&d) {
                return Err(Error::InvalidTransition(format!(
                    "{}: first level must be in the S manifold and second in D",
                    t.label
                )));
            }
            if !t.detuning_hz.is_finite() || t.coupling < 0.0 {
                return Err(Error::InvalidTransition(format!(
                    "{}: non-finite detuning or negative coupling",
                    t.label
                )));
            }
        }
        Ok(())
    }

    /// gamma coefficient of transition `t` for the pair (i, j): 2 when the
    /// transition is (i, j) itself, 1 when it touches exactly one of the
    /// two levels, 0 otherwise.
    pub fn gamma(&self, i: usize, j: usize, t: &Transition) -> u8 {
        let (a, b) = t.levels;
        let hits = [a, b]
            .iter()
            .filter(|&&l| l == i || l == j)
            .count();
        match (hits, (a == i && b == j) || (a == j && b == i)) {
            (_, true) => 2,
            (1, _) => 1,
            _ => 0,
        }
    }

    fn check_guard(&self, delta: f64) -> Result<()> {
        for t in &self.transitions {
            if (delta - t.detuning_hz).abs() < self.guard_band_hz {
                return Err(Error::ResonanceHit {
                    detuning_hz: delta - t.detuning_hz,
                    label: t.label.clone(),
                });
            }
        }
        Ok(())
    }

    /// Illustrative parameter set for the 8-level scheme used throughout:
    /// S levels {0, 2}, ten driven S-D transitions with Zeeman-like
    /// detunings. Not a lab calibration.
    pub fn illustrative() -> Self {
        // Zeeman unit and Lande factors chosen to spread the transitions
        // over +-18 MHz around the 0-1 reference
        let u = 5.6e6;
        let gs = 2.0;
        let gd = 1.2;
        // (s_level, d_level, m_s + 1/2, m_d + 1/2, relative coupling)
        let table: [(usize, usize, f64, f64, f64); 10] = [
            (0, 1, 0.0, 0.0, 1.0),
            (0, 3, 0.0, -1.0, 0.65),
            (0, 4, 0.0, 1.0, 0.5),
            (0, 5, 0.0, -2.0, 0.9),
            (0, 6, 0.0, 2.0, 0.35),
            (2, 1, 1.0, 0.0, 0.5),
            (2, 3, 1.0, -1.0, 0.35),
            (2, 4, 1.0, 1.0, 0.65),
            (2, 6, 1.0, 2.0, 0.9),
            (2, 7, 1.0, 3.0, 1.0),
        ];
        let transitions = table
            .iter()
            .map(|&(s, d, ms, md, coupling)| Transition {
                label: format!("{s}-{d}"),
                levels: (s, d),
                detuning_hz: u * (gd * md - gs * ms),
                coupling,
            })
            .collect();
        StarkModel {
            schema_version: SCHEMA_VERSION,
            s_levels: vec![0, 2],
            transitions,
            rabi_hz: 5.0e4,
            dipole_b: 2.4e-7,
            guard_band_hz: 1e3,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let model: StarkModel = serde_json::from_str(&text)?;
        model.validate()?;
        Ok(model)
    }
}

/// A multi-chromatic beam: tones with fixed detunings and non-negative
/// intensity weights (proportional to each tone's Omega^2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToneSet {
    pub tones: Vec<Tone>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    pub detuning_hz: f64,
    pub weight: f64,
}

/// Relative shift between levels i and j under a unit-weight tone at
/// `delta`, evaluated literally from the pairwise formula.
pub fn stark_shift(model: &StarkModel, i: usize, j: usize, delta: f64) -> Result<f64> {
    model.check_guard(delta)?;
    let mut sum = 2.0 * model.dipole_b;
    for t in &model.transitions {
        let g = model.gamma(i, j, t) as f64;
        if g > 0.0 {
            sum -= t.coupling * t.coupling * g / (delta - t.detuning_hz);
        }
    }
    Ok(model.rabi_hz * model.rabi_hz / 4.0 * sum)
}

/// Shift of a single level under a unit-weight tone at `delta`: transition
/// terms push the S end down and the D end up; the dipole background
/// pushes S up and D down.
pub fn level_shift(model: &StarkModel, level: usize, delta: f64) -> Result<f64> {
    model.check_guard(delta)?;
    let quarter = model.rabi_hz * model.rabi_hz / 4.0;
    let mut eps = if model.s_levels.contains(&level) {
        quarter * model.dipole_b
    } else {
        -quarter * model.dipole_b
    };
    for t in &model.transitions {
        let x = quarter * t.coupling * t.coupling / (delta - t.detuning_hz);
        if t.levels.0 == level {
            eps -= x;
        } else if t.levels.1 == level {
            eps += x;
        }
    }
    Ok(eps)
}

/// Per-level shift under a whole tone set (linear in the weights).
pub fn toneset_level_shift(model: &StarkModel, level: usize, tones: &ToneSet) -> Result<f64> {
    let mut total = 0.0;
    for tone in &tones.tones {
        total += tone.weight * level_shift(model, level, tone.detuning_hz)?;
    }
    Ok(total)
}

/// Pairwise shift under a whole tone set, from the per-level picture.
pub fn toneset_pair_shift(
    model: &StarkModel,
    i: usize,
    j: usize,
    tones: &ToneSet,
) -> Result<f64> {
    Ok(toneset_level_shift(model, i, tones)? - toneset_level_shift(model, j, tones)?)
}

/// One linear constraint on per-level shifts: sum of coeff * eps_level
/// equals rhs (Hz).
#[derive(Debug, Clone)]
pub struct ShiftConstraint {
    pub terms: Vec<(usize, f64)>,
    pub rhs_hz: f64,
}

/// Solve for tone intensity weights satisfying the given linear
/// constraints on per-level shifts. The system must be square (as many
/// constraints as tones). Fails when the system is singular or the
/// solution needs a negative intensity (the offending weights are returned
/// inside the error so the caller can adjust detunings).
pub fn solve_tone_weights(
    model: &StarkModel,
    detunings: &[f64],
    constraints: &[ShiftConstraint],
) -> Result<ToneSet> {
    let n = detunings.len();
    if n == 0 || constraints.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} constraints for {} tones; the system must be square",
            constraints.len(),
            n
        )));
    }
    for (a, &da) in detunings.iter().enumerate() {
        for &db in detunings.iter().skip(a + 1) {
            if (da - db).abs() < 1e-9 {
                return Err(Error::InvalidArgument(
                    "tone detunings must be pairwise distinct".into(),
                ));
            }
        }
    }
    let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
    let mut rhs = nalgebra::DVector::<f64>::zeros(n);
    for (row, c) in constraints.iter().enumerate() {
        for (col, &delta) in detunings.iter().enumerate() {
            let mut entry = 0.0;
            for &(level, coeff) in &c.terms {
                entry += coeff * level_shift(model, level, delta)?;
            }
            a[(row, col)] = entry;
        }
        rhs[row] = c.rhs_hz;
    }
    let solution = a.lu().solve(&rhs).ok_or(Error::SingularSystem)?;
    let weights: Vec<f64> = solution.iter().copied().collect();
    if weights.iter().any(|&w| w < -1e-12) {
        return Err(Error::NegativeIntensity(weights));
    }
    Ok(ToneSet {
        tones: detunings
            .iter()
            .zip(&weights)
            .map(|(&detuning_hz, &w)| Tone {
                detuning_hz,
                weight: w.max(0.0),
            })
            .collect(),
    })
}

/// Choose tone weights so that all occupied levels shift equally except
/// the target level i*, whose shift relative to j* is set to
/// `target_shift_hz`. This is the "compensate all level shifts but one"
/// construction: with k occupied levels it needs k-1 tones.
pub fn solve_compensation(
    model: &StarkModel,
    occupied: &[usize],
    detunings: &[f64],
    target_pair: (usize, usize),
    target_shift_hz: f64,
) -> Result<ToneSet> {
    let (istar, jstar) = target_pair;
    if !occupied.contains(&istar) || !occupied.contains(&jstar) || istar == jstar {
        return Err(Error::InvalidArgument(
            "target pair must be two distinct occupied levels".into(),
        ));
    }
    if detunings.len() + 1 != occupied.len() {
        return Err(Error::InvalidArgument(format!(
            "{} occupied levels need {} tones, got {}",
            occupied.len(),
            occupied.len() - 1,
            detunings.len()
        )));
    }
    let others: Vec<usize> = occupied.iter().copied().filter(|&l| l != istar).collect();
    let mut constraints = Vec::new();
    for w in others.windows(2) {
        constraints.push(ShiftConstraint {
            terms: vec![(w[0], 1.0), (w[1], -1.0)],
            rhs_hz: 0.0,
        });
    }
    constraints.push(ShiftConstraint {
        terms: vec![(istar, 1.0), (jstar, -1.0)],
        rhs_hz: target_shift_hz,
    });
    solve_tone_weights(model, detunings, &constraints)
}

/// Crosstalk-refocused rotation: the composite
/// Z(pi) - R(-theta/2, phi) - Z(pi) - R(theta/2, phi) (time order) equals
/// R(theta, phi) exactly on the addressed pair, while a neighbor that sees
/// the pulses only through attenuated crosstalk picks up an error that is
/// second order in the crosstalk probability, because the Stark pulses
/// attenuate quadratically.
pub fn refocused_rotation(site: usize, i: usize, j: usize, theta: f64, phi: f64) -> Vec<Instruction> {
    vec![
        Instruction::stark(site, i, PI),
        Instruction::rotation(site, i, j, -theta / 2.0, phi),
        Instruction::stark(site, i, PI),
        Instruction::rotation(site, i, j, theta / 2.0, phi),
    ]
}

/// Residual infidelity of the refocused composite on a neighbor ion, with
/// `epsilon` the probability that a resonant pi pulse leaks to it. The
/// resonant pulses reach the neighbor with amplitude a = (2/pi) asin
/// sqrt(epsilon); the Stark pulses reach it with a^2.
pub fn refocused_crosstalk_error(theta: f64, phi: f64, epsilon: f64) -> f64 {
    let a = crosstalk_amplitude(epsilon);
    let rot = |th: f64| {
        let half = th / 2.0;
        [
            [
                crate::linalg::C64::new(half.cos(), 0.0),
                crate::linalg::C64::new(0.0, -half.sin()) * crate::linalg::C64::from_polar(1.0, -phi),
            ],
            [
                crate::linalg::C64::new(0.0, -half.sin()) * crate::linalg::C64::from_polar(1.0, phi),
                crate::linalg::C64::new(half.cos(), 0.0),
            ],
        ]
    };
    let z = |th: f64| {
        [
            [crate::linalg::C64::from_polar(1.0, -th), crate::linalg::C64::new(0.0, 0.0)],
            [crate::linalg::C64::new(0.0, 0.0), crate::linalg::C64::new(1.0, 0.0)],
        ]
    };
    let mul = |x: [[crate::linalg::C64; 2]; 2], y: [[crate::linalg::C64; 2]; 2]| {
        let mut out = [[crate::linalg::C64::new(0.0, 0.0); 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                out[r][c] = x[r][0] * y[0][c] + x[r][1] * y[1][c];
            }
        }
        out
    };
    // time order [Z, R(-theta/2), Z, R(theta/2)] with attenuated angles
    let n = mul(
        rot(a * theta / 2.0),
        mul(z(a * a * PI), mul(rot(-a * theta / 2.0), z(a * a * PI))),
    );
    let tr = n[0][0] + n[1][1];
    1.0 - (tr.norm() / 2.0).powi(2)
}

/// Leakage probability of a bare (unrefocused) rotation on the neighbor.
pub fn resonant_crosstalk_error(theta: f64, epsilon: f64) -> f64 {
    let a = crosstalk_amplitude(epsilon);
    (a * theta / 2.0).sin().powi(2)
}

fn crosstalk_amplitude(epsilon: f64) -> f64 {
    (2.0 / PI) * epsilon.clamp(0.0, 1.0).sqrt().asin()
}

/// Timing and error parameters of the sequential shelving readout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutModel {
    #[serde(default = "schema_default")]
    pub schema_version: u32,
    /// D-manifold lifetime, seconds
    pub tau1_s: f64,
    /// fluorescence detection window, seconds
    pub t_detect_s: f64,
    /// recooling interval between detections, seconds
    pub t_cool_s: f64,
    /// duration of the initial shelving pulses, seconds
    #[serde(default)]
    pub t_shelve_s: f64,
    /// photon count rate of a bright ion, 1/s
    pub bright_rate_hz: f64,
    /// background count rate of a dark ion, 1/s
    pub dark_rate_hz: f64,
}

impl Default for ReadoutModel {
    fn default() -> Self {
        ReadoutModel {
            schema_version: SCHEMA_VERSION,
            tau1_s: 1.1,
            t_detect_s: 500e-6,
            t_cool_s: 2500e-6,
            t_shelve_s: 0.0,
            bright_rate_hz: 5.0e4,
            dark_rate_hz: 300.0,
        }
    }
}

/// Closed-form error budget of the sequential readout for one qudit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutBudget {
    pub per_state_error: Vec<f64>,
    pub worst_case: f64,
    pub total_time_s: f64,
    pub discrimination_error: f64,
}

impl ReadoutModel {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: self.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        let times_ok = self.tau1_s > 0.0
            && self.t_detect_s > 0.0
            && self.t_cool_s >= 0.0
            && self.t_shelve_s >= 0.0;
        if !times_ok {
            return Err(Error::InvalidArgument(
                "readout times must be positive (cooling and shelving may be zero)".into(),
            ));
        }
        if !(self.bright_rate_hz > self.dark_rate_hz) || self.dark_rate_hz < 0.0 {
            return Err(Error::InvalidArgument(
                "bright count rate must exceed the dark rate".into(),
            ));
        }
        Ok(())
    }

    /// Probability of misclassifying one fluorescence window, using
    /// Poissonian photon statistics and the best integer count threshold.
    /// States are equally likely a priori, so the error is the average of
    /// the two misclassification branches.
    pub fn discrimination_error(&self) -> f64 {
        let lb = self.bright_rate_hz * self.t_detect_s;
        let ld = self.dark_rate_hz * self.t_detect_s;
        let kmax = (lb + 10.0 * lb.sqrt()).ceil() as usize + 10;
        let mut cdf_b = 0.0;
        let mut cdf_d = 0.0;
        let mut pb = (-lb).exp();
        let mut pd = (-ld).exp();
        let mut best = 1.0f64;
        for k in 0..=kmax {
            if k > 0 {
                pb *= lb / k as f64;
                pd *= ld / k as f64;
            }
            cdf_b += pb;
            cdf_d += pd;
            // classify as dark when the count is <= k
            let err = 0.5 * (cdf_b + (1.0 - cdf_d));
            if err < best {
                best = err;
            }
        }
        best
    }

    /// Error budget for reading one d-level qudit.
    ///
    /// Timeline: all levels except 0 are shelved in D, then d-1 detection
    /// windows check levels 0, 1, ..., d-2 in turn, with a cooling
    /// interval after each window except the last, and a reordering pulse
    /// bringing the next level into S before each window. State j is
    /// misread if it decays before the end of window j (an earlier window
    /// then sees it bright; decay during the cooling interval right before
    /// its own window still reads correctly, since that window expects it
    /// bright anyway), so its decay exposure runs through j-1 full
    /// detect+cool cycles plus one window. State d-1 is never detected
    /// directly and must survive (and read dark through) all d-1 windows.
    pub fn error_budget(&self, d: usize) -> Result<ReadoutBudget> {
        self.validate()?;
        if !(2..=8).contains(&d) {
            return Err(Error::UnsupportedDimension(d));
        }
        let e_disc = self.discrimination_error();
        let cycle = self.t_detect_s + self.t_cool_s;
        let mut per_state_error = Vec::with_capacity(d);
        for j in 0..d {
            let exposed_windows = j.min(d - 1);
            let exposure = if exposed_windows == 0 {
                0.0
            } else {
                (exposed_windows - 1) as f64 * cycle + self.t_detect_s
            };
            let discriminations = (j + 1).min(d - 1) as u32;
            let p_correct =
                (-exposure / self.tau1_s).exp() * (1.0 - e_disc).powi(discriminations as i32);
            per_state_error.push(1.0 - p_correct);
        }
        let worst_case = per_state_error.iter().cloned().fold(0.0, f64::max);
        let total_time_s = self.t_shelve_s
            + (d - 1) as f64 * self.t_detect_s
            + (d.saturating_sub(2)) as f64 * self.t_cool_s;
        Ok(ReadoutBudget {
            per_state_error,
            worst_case,
            total_time_s,
            discrimination_error: e_disc,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let model: ReadoutModel = serde_json::from_str(&text)?;
        model.validate()?;
        Ok(model)
    }
}

/// Convenience wrapper matching the budget operation name used elsewhere.
pub fn readout_error_budget(model: &ReadoutModel, d: usize) -> Result<ReadoutBudget> {
    model.error_budget(d)
}
