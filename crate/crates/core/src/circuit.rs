//! Circuit representation shared by the compiler, simulator, and CLI: a
//! register dimension list plus a time-ordered list of native instructions,
//! with a plain-text serialization format.
//!
//! Text format, one instruction per line, `#` starts a comment:
//!
//! ```text
//! dims: 3 3
//! R 0 0 1 pi/2 0          # R <site> <i> <j> <theta> <phi>
//! MS 0 1 0 1 pi/2 0       # MS <siteA> <siteB> <i> <j> <theta> <phi>
//! Z 1 2 -0.25             # Z <site> <level> <theta>
//! GATE CINC 0 1           # GATE <name> <sites...> [params...]
//! ```

use crate::error::{Error, Result};
use crate::gates::{MsGate, StarkPhase, TwoLevelRotation};
use crate::library::gate_by_name;
use crate::linalg::{embed_op, identity, CMat};
use crate::state::validate_dims;
use serde::{Deserialize, Serialize};

/// One native hardware operation. All rotations are in the +1 manifold-sign
/// frame; the physical sign is a calibration detail below this layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Instruction {
    Rotation {
        site: usize,
        i: usize,
        j: usize,
        theta: f64,
        phi: f64,
    },
    Ms {
        sites: (usize, usize),
        i: usize,
        j: usize,
        theta: f64,
        phi: f64,
    },
    Stark {
        site: usize,
        level: usize,
        theta: f64,
    },
    Gate {
        name: String,
        sites: Vec<usize>,
        #[serde(default)]
        params: Vec<f64>,
    },
}

impl Instruction {
    pub fn rotation(site: usize, i: usize, j: usize, theta: f64, phi: f64) -> Self {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        Instruction::Rotation { site, i, j, theta, phi }
    }

    pub fn ms(a: usize, b: usize, i: usize, j: usize, theta: f64, phi: f64) -> Self {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        Instruction::Ms { sites: (a, b), i, j, theta, phi }
    }

    pub fn stark(site: usize, level: usize, theta: f64) -> Self {
        Instruction::Stark { site, level, theta }
    }

    /// Sites the instruction acts on.
    pub fn sites(&self) -> Vec<usize> {
        match self {
            Instruction::Rotation { site, .. } | Instruction::Stark { site, .. } => vec![*site],
            Instruction::Ms { sites, .. } => vec![sites.0, sites.1],
            Instruction::Gate { sites, .. } => sites.clone(),
        }
    }
}

/// Number of sites and trailing numeric parameters for each named gate.
fn gate_arity(name: &str) -> Result<(usize, usize)> {
    match name.to_ascii_uppercase().as_str() {
        "H" | "S" | "T" | "T3" | "X" | "Z" => Ok((1, 0)),
        "GM" => Ok((1, 2)),
        "CEX" => Ok((2, 3)),
        "CINC" | "CSUM" => Ok((2, 0)),
        other => Err(Error::InvalidArgument(format!("unknown gate {other}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub dims: Vec<usize>,
    pub instructions: Vec<Instruction>,
}

impl Circuit {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        validate_dims(&dims)?;
        Ok(Circuit {
            dims,
            instructions: Vec::new(),
        })
    }

    pub fn push(&mut self, instr: Instruction) {
        self.instructions.push(instr);
    }

    pub fn num_sites(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    fn check_site(&self, site: usize) -> Result<usize> {
        self.dims
            .get(site)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("site {site} out of range")))
    }

    fn check_level(&self, level: usize, dim: usize) -> Result<()> {
        if level >= dim {
            Err(Error::InvalidLevel { level, dim })
        } else {
            Ok(())
        }
    }

    pub fn validate_instruction(&self, instr: &Instruction) -> Result<()> {
        match instr {
            Instruction::Rotation { site, i, j, .. } => {
                let d = self.check_site(*site)?;
                if i == j {
                    return Err(Error::DegenerateLevels(*i));
                }
                self.check_level(*i, d)?;
                self.check_level(*j, d)
            }
            Instruction::Stark { site, level, .. } => {
                let d = self.check_site(*site)?;
                self.check_level(*level, d)
            }
            Instruction::Ms { sites, i, j, .. } => {
                let da = self.check_site(sites.0)?;
                let db = self.check_site(sites.1)?;
                if sites.0 == sites.1 {
                    return Err(Error::InvalidArgument(
                        "MS needs two distinct sites".into(),
                    ));
                }
                if i == j {
                    return Err(Error::DegenerateLevels(*i));
                }
                for (l, d) in [(i, da), (j, da), (i, db), (j, db)] {
                    self.check_level(*l, d)?;
                }
                Ok(())
            }
            Instruction::Gate { name, sites, params } => {
                let (n_sites, n_params) = gate_arity(name)?;
                if sites.len() != n_sites {
                    return Err(Error::InvalidArgument(format!(
                        "gate {name} takes {n_sites} site(s)"
                    )));
                }
                if params.len() != n_params {
                    return Err(Error::InvalidArgument(format!(
                        "gate {name} takes {n_params} parameter(s)"
                    )));
                }
                let d0 = self.check_site(sites[0])?;
                for &s in &sites[1..] {
                    let d = self.check_site(s)?;
                    if d != d0 {
                        return Err(Error::DimensionMismatch(format!(
                            "gate {name} needs equal site dimensions, got {d0} and {d}"
                        )));
                    }
                    if s == sites[0] {
                        return Err(Error::InvalidArgument(
                            "gate sites must be distinct".into(),
                        ));
                    }
                }
                // construct once to validate levels and parameters
                gate_by_name(name, d0, params).map(|_| ())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_dims(&self.dims)?;
        for instr in &self.instructions {
            self.validate_instruction(instr)?;
        }
        Ok(())
    }

    /// Full-register matrix of a single instruction.
    pub fn instruction_matrix(&self, instr: &Instruction) -> Result<CMat> {
        self.validate_instruction(instr)?;
        match instr {
            Instruction::Rotation { site, i, j, theta, phi } => {
                let d = self.dims[*site];
                let local = TwoLevelRotation::new(*i, *j, *theta, *phi).matrix(d)?;
                Ok(embed_op(&local, &self.dims, &[*site]))
            }
            Instruction::Stark { site, level, theta } => {
                let d = self.dims[*site];
                let local = StarkPhase::new(*level, *theta).matrix(d)?;
                Ok(embed_op(&local, &self.dims, &[*site]))
            }
            Instruction::Ms { sites, i, j, theta, phi } => {
                let da = self.dims[sites.0];
                let db = self.dims[sites.1];
                let local = MsGate::new(*i, *j, *theta, *phi).matrix(da, db)?;
                Ok(embed_op(&local, &self.dims, &[sites.0, sites.1]))
            }
            Instruction::Gate { name, sites, params } => {
                let d = self.dims[sites[0]];
                let local = gate_by_name(name, d, params)?;
                Ok(embed_op(&local, &self.dims, sites))
            }
        }
    }

    /// Product of all instruction matrices in time order (first instruction
    /// acts first).
    pub fn unitary(&self) -> Result<CMat> {
        let mut u = identity(self.total_dim());
        for instr in &self.instructions {
            u = self.instruction_matrix(instr)? * u;
        }
        Ok(u)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("dims:");
        for d in &self.dims {
            out.push_str(&format!(" {d}"));
        }
        out.push('\n');
        for instr in &self.instructions {
            match instr {
                Instruction::Rotation { site, i, j, theta, phi } => {
                    out.push_str(&format!("R {site} {i} {j} {theta} {phi}\n"));
                }
                Instruction::Ms { sites, i, j, theta, phi } => {
                    out.push_str(&format!(
                        "MS {} {} {i} {j} {theta} {phi}\n",
                        sites.0, sites.1
                    ));
                }
                Instruction::Stark { site, level, theta } => {
                    out.push_str(&format!("Z {site} {level} {theta}\n"));
                }
                Instruction::Gate { name, sites, params } => {
                    out.push_str("GATE ");
                    out.push_str(name);
                    for s in sites {
                        out.push_str(&format!(" {s}"));
                    }
                    for p in params {
                        out.push_str(&format!(" {p}"));
                    }
                    out.push('\n');
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut circuit: Option<Circuit> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = content.split_whitespace().collect();
            if circuit.is_none() {
                if tokens[0] != "dims:" {
                    return Err(Error::Parse {
                        line,
                        msg: "expected 'dims: d1 d2 ...' as the first line".into(),
                    });
                }
                let dims = tokens[1..]
                    .iter()
                    .map(|t| parse_usize(t, line))
                    .collect::<Result<Vec<_>>>()?;
                let c = Circuit::new(dims).map_err(|e| Error::Parse {
                    line,
                    msg: e.to_string(),
                })?;
                circuit = Some(c);
                continue;
            }
            let c = circuit.as_mut().unwrap();
            let instr = match tokens[0].to_ascii_uppercase().as_str() {
                "R" => {
                    expect_args(&tokens, 5, line)?;
                    Instruction::rotation(
                        parse_usize(tokens[1], line)?,
                        parse_usize(tokens[2], line)?,
                        parse_usize(tokens[3], line)?,
                        parse_angle(tokens[4], line)?,
                        parse_angle(tokens[5], line)?,
                    )
                }
                "MS" => {
                    expect_args(&tokens, 6, line)?;
                    Instruction::ms(
                        parse_usize(tokens[1], line)?,
                        parse_usize(tokens[2], line)?,
                        parse_usize(tokens[3], line)?,
                        parse_usize(tokens[4], line)?,
                        parse_angle(tokens[5], line)?,
                        parse_angle(tokens[6], line)?,
                    )
                }
                "Z" => {
                    expect_args(&tokens, 3, line)?;
                    Instruction::stark(
                        parse_usize(tokens[1], line)?,
                        parse_usize(tokens[2], line)?,
                        parse_angle(tokens[3], line)?,
                    )
                }
                "GATE" => {
                    if tokens.len() < 3 {
                        return Err(Error::Parse {
                            line,
                            msg: "GATE needs a name and at least one site".into(),
                        });
                    }
                    let name = tokens[1].to_ascii_uppercase();
                    let (n_sites, n_params) = gate_arity(&name).map_err(|e| Error::Parse {
                        line,
                        msg: e.to_string(),
                    })?;
                    if tokens.len() != 2 + n_sites + n_params {
                        return Err(Error::Parse {
                            line,
                            msg: format!(
                                "gate {name} takes {n_sites} site(s) and {n_params} parameter(s)"
                            ),
                        });
                    }
                    let sites = tokens[2..2 + n_sites]
                        .iter()
                        .map(|t| parse_usize(t, line))
                        .collect::<Result<Vec<_>>>()?;
                    let params = tokens[2 + n_sites..]
                        .iter()
                        .map(|t| parse_angle(t, line))
                        .collect::<Result<Vec<_>>>()?;
                    Instruction::Gate { name, sites, params }
                }
                other => {
                    return Err(Error::Parse {
                        line,
                        msg: format!("unknown instruction {other}"),
                    })
                }
            };
            c.validate_instruction(&instr).map_err(|e| Error::Parse {
                line,
                msg: e.to_string(),
            })?;
            c.push(instr);
        }
        circuit.ok_or(Error::Parse {
            line: 0,
            msg: "empty circuit file".into(),
        })
    }
}

impl std::fmt::Display for Circuit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.to_text())
    }
}

impl std::str::FromStr for Circuit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Circuit::from_text(s)
    }
}

fn expect_args(tokens: &[&str], n: usize, line: usize) -> Result<()> {
    if tokens.len() != n + 1 {
        Err(Error::Parse {
            line,
            msg: format!("{} takes {n} arguments", tokens[0]),
        })
    } else {
        Ok(())
    }
}

fn parse_usize(tok: &str, line: usize) -> Result<usize> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("expected a non-negative integer, got '{tok}'"),
    })
}

/// Angles accept plain floats plus `pi` sugar: `pi`, `-pi`, `pi/2`,
/// `3pi/4`, `2pi`.
pub fn parse_angle(tok: &str, line: usize) -> Result<f64> {
    if let Ok(v) = tok.parse::<f64>() {
        return Ok(v);
    }
    let bad = || Error::Parse {
        line,
        msg: format!("expected an angle, got '{tok}'"),
    };
    let s = tok.to_ascii_lowercase();
    let (sign, s) = match s.strip_prefix('-') {
        Some(rest) => (-1.0, rest),
        None => (1.0, s.as_str()),
    };
    let pi_at = s.find("pi").ok_or_else(bad)?;
    let (mult_str, rest) = s.split_at(pi_at);
    let rest = &rest[2..];
    let mult = if mult_str.is_empty() {
        1.0
    } else {
        mult_str.trim_end_matches('*').parse::<f64>().map_err(|_| bad())?
    };
    let div = if rest.is_empty() {
        1.0
    } else {
        let d = rest.strip_prefix('/').ok_or_else(bad)?;
        d.parse::<f64>().map_err(|_| bad())?
    };
    if div == 0.0 {
        return Err(bad());
    }
    Ok(sign * mult * std::f64::consts::PI / div)
}
