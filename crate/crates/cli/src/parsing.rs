//! Parsers for the small input languages the CLI accepts: ket
//! expressions, level lists, and inline noise specs.

use quditsim_core::linalg::{CVec, C64};
use quditsim_core::sim::NoiseModel;
use quditsim_core::state::QuditState;
use quditsim_core::{Error, Result};

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

/// Comma-separated non-negative integers ("2,0").
pub fn parse_levels(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<usize>()
                .map_err(|_| invalid(format!("expected an integer level, got {tok:?}")))
        })
        .collect()
}

/// Comma-separated floats ("5e6,-2e7").
pub fn parse_floats(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| invalid(format!("expected a number, got {tok:?}")))
        })
        .collect()
}

/// A level pair "i,j" with i != j.
pub fn parse_pair(text: &str) -> Result<(usize, usize)> {
    let levels = parse_levels(text)?;
    if levels.len() != 2 || levels[0] == levels[1] {
        return Err(invalid(format!("expected two distinct levels, got {text:?}")));
    }
    Ok((levels[0], levels[1]))
}

/// Noise spec: either a JSON model file or the inline form
/// "p=2e-4[,pms=1e-2]" for plain depolarizing strengths.
pub fn parse_noise(spec: &str) -> Result<NoiseModel> {
    if !spec.contains('=') {
        return NoiseModel::load(std::path::Path::new(spec));
    }
    let mut p = 0.0;
    let mut pms = 0.0;
    for part in spec.split(',') {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| invalid(format!("expected key=value, got {part:?}")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| invalid(format!("bad noise strength {value:?}")))?;
        match key.trim() {
            "p" => p = value,
            "pms" => pms = value,
            other => return Err(invalid(format!("unknown noise key {other:?}"))),
        }
    }
    let model = NoiseModel::depolarizing(p, pms);
    model.validate()?;
    Ok(model)
}

/// Parse a ket expression like "(|0>+|1>+|2>)/sqrt(3)", "|0>-i|2>" or
/// "0.6|1>+0.8i|3>". Terms are summed and the result normalized, so an
/// explicit 1/sqrt(N) prefactor is accepted but redundant. `dim` widens
/// the state beyond the highest ket index.
pub fn parse_ket(expr: &str, dim: Option<usize>) -> Result<QuditState> {
    let compact: String = expr.chars().filter(|c| !c.is_whitespace()).collect();
    let mut body = compact.as_str();

    // strip a trailing "/sqrt(N)" (any positive N); normalization below
    // makes the value irrelevant but it must still be well formed
    if let Some(pos) = body.rfind("/sqrt(") {
        let arg = &body[pos + 6..];
        let inner = arg
            .strip_suffix(')')
            .ok_or_else(|| invalid("unclosed sqrt( in target"))?;
        let n: f64 = inner
            .parse()
            .map_err(|_| invalid(format!("bad sqrt argument {inner:?}")))?;
        if !(n > 0.0) {
            return Err(invalid("sqrt argument must be positive"));
        }
        body = &body[..pos];
    }
    if body.starts_with('(') && body.ends_with(')') {
        body = &body[1..body.len() - 1];
    }
    if body.is_empty() {
        return Err(invalid("empty target expression"));
    }

    // split into signed terms; kets keep '+'/'-' only at term boundaries
    let mut amps: Vec<(usize, C64)> = Vec::new();
    let mut term = String::new();
    let mut sign = 1.0;
    let mut chars = body.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '+' | '-' if !term.is_empty() => {
                amps.push(parse_term(&term, sign)?);
                term.clear();
                sign = if c == '-' { -1.0 } else { 1.0 };
            }
            '-' => sign = -sign,
            '+' => {}
            '(' | ')' => return Err(invalid("nested parentheses are not supported")),
            _ => term.push(c),
        }
    }
    if term.is_empty() {
        return Err(invalid("dangling sign in target expression"));
    }
    amps.push(parse_term(&term, sign)?);

    let highest = amps.iter().map(|(k, _)| *k).max().unwrap();
    let d = match dim {
        Some(d) if d > highest => d,
        Some(d) => {
            return Err(invalid(format!(
                "ket |{highest}> does not fit in dimension {d}"
            )))
        }
        None => highest + 1,
    };
    let mut vector = CVec::zeros(d);
    for (k, a) in amps {
        vector[k] += a;
    }
    let norm = vector.norm();
    if norm < 1e-12 {
        return Err(invalid("target amplitudes cancel to zero"));
    }
    vector /= C64::new(norm, 0.0);
    QuditState::new(vec![d], vector)
}

/// One ket term "coef|k>" with coef in {empty, i, x, xi} and optional '*'.
fn parse_term(term: &str, sign: f64) -> Result<(usize, C64)> {
    let (coef_text, ket) = term
        .split_once('|')
        .ok_or_else(|| invalid(format!("term {term:?} has no ket")))?;
    let index_text = ket
        .strip_suffix('>')
        .ok_or_else(|| invalid(format!("unclosed ket in {term:?}")))?;
    let index: usize = index_text
        .parse()
        .map_err(|_| invalid(format!("bad ket index {index_text:?}")))?;

    let coef_text = coef_text.strip_suffix('*').unwrap_or(coef_text);
    let coef = match coef_text {
        "" => C64::new(1.0, 0.0),
        "i" => C64::new(0.0, 1.0),
        text if text.ends_with('i') => {
            let magnitude: f64 = text[..text.len() - 1]
                .parse()
                .map_err(|_| invalid(format!("bad coefficient {text:?}")))?;
            C64::new(0.0, magnitude)
        }
        text => {
            let magnitude: f64 = text
                .parse()
                .map_err(|_| invalid(format!("bad coefficient {text:?}")))?;
            C64::new(magnitude, 0.0)
        }
    };
    Ok((index, coef * C64::new(sign, 0.0)))
}

/// Split a gate name from an embedded dimension digit: "H3" -> ("H", 3).
/// An explicit `dim` wins; "T3"/"T" imply the qutrit.
pub fn gate_name_and_dim(name: &str, dim: Option<usize>) -> Result<(String, usize)> {
    let trimmed = name.trim();
    let split = trimmed.trim_end_matches(|c: char| c.is_ascii_digit());
    let suffix = &trimmed[split.len()..];
    let base = if split.is_empty() { trimmed } else { split };
    let embedded: Option<usize> = if suffix.is_empty() || base == trimmed {
        None
    } else {
        suffix.parse().ok()
    };
    // T3 is a gate name in its own right, not "T at d=3underflow"; treat
    // the digit as a dimension anyway since both readings agree
    let d = dim
        .or(embedded)
        .or(if base.eq_ignore_ascii_case("T") { Some(3) } else { None })
        .ok_or_else(|| invalid(format!("gate {name:?} needs an explicit --dim")))?;
    Ok((base.to_string(), d))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kets_with_explicit_normalizer_parse_to_the_uniform_state() {
        let state = parse_ket("(|0>+|1>+|2>)/sqrt(3)", None).unwrap();
        assert_eq!(state.dims(), &[3]);
        let probs = state.probabilities();
        for p in probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn signs_and_imaginary_coefficients_are_honored() {
        let state = parse_ket("|0>-i|2>", None).unwrap();
        let probs = state.probabilities();
        assert!((probs[0] - 0.5).abs() < 1e-12);
        assert!((probs[1]).abs() < 1e-12);
        assert!((probs[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn weighted_terms_normalize() {
        let state = parse_ket("0.6|1>+0.8i|3>", Some(5)).unwrap();
        assert_eq!(state.dims(), &[5]);
        let probs = state.probabilities();
        assert!((probs[1] - 0.36).abs() < 1e-12);
        assert!((probs[3] - 0.64).abs() < 1e-12);
    }

    #[test]
    fn malformed_targets_are_rejected() {
        assert!(parse_ket("", None).is_err());
        assert!(parse_ket("|0>+", None).is_err());
        assert!(parse_ket("(|0>+|1>)/sqrt(0)", None).is_err());
        assert!(parse_ket("|0>-|0>", None).is_err());
        assert!(parse_ket("|3>", Some(3)).is_err());
    }

    #[test]
    fn gate_names_carry_dimensions() {
        assert_eq!(gate_name_and_dim("H3", None).unwrap(), ("H".into(), 3));
        assert_eq!(gate_name_and_dim("H", Some(5)).unwrap(), ("H".into(), 5));
        assert_eq!(gate_name_and_dim("T3", None).unwrap(), ("T".into(), 3));
        assert_eq!(gate_name_and_dim("CINC", Some(3)).unwrap(), ("CINC".into(), 3));
        assert!(gate_name_and_dim("CINC", None).is_err());
    }

    #[test]
    fn inline_noise_spec_builds_depolarizing_models() {
        let m = parse_noise("p=2e-4").unwrap();
        assert_eq!(m.per_pulse_depolarizing, 2e-4);
        assert_eq!(m.per_ms_depolarizing, 0.0);
        let m = parse_noise("p=1e-3,pms=2e-2").unwrap();
        assert_eq!(m.per_ms_depolarizing, 2e-2);
        assert!(parse_noise("q=1e-3").is_err());
    }
}
