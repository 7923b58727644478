//! Standard qudit gate library: Gell-Mann rotations, generalized Pauli and
//! Clifford gates, and the controlled permutation gates native to the
//! compiler (CEX, CINC, CSUM). Single-qudit Clifford groups for prime
//! dimensions are enumerated by breadth-first closure over {H, S} and can be
//! cached to disk.

use crate::error::{Error, Result};
use crate::linalg::{expi_hermitian, identity, kron, CMat, C64, ONE, ZERO};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

/// Gell-Mann matrix lambda_k, k in 1..=8 (3x3).
pub fn gell_mann(k: usize) -> Result<CMat> {
    let c = |re: f64, im: f64| C64::new(re, im);
    let m = match k {
        1 => CMat::from_row_slice(3, 3, &[
            c(0., 0.), c(1., 0.), c(0., 0.),
            c(1., 0.), c(0., 0.), c(0., 0.),
            c(0., 0.), c(0., 0.), c(0., 0.),
        ]),
        2 => CMat::from_row_slice(3, 3, &[
            c(0., 0.), c(0., -1.), c(0., 0.),
            c(0., 1.), c(0., 0.), c(0., 0.),
            c(0., 0.), c(0., 0.), c(0., 0.),
        ]),
        3 => CMat::from_row_slice(3, 3, &[
            c(1., 0.), c(0., 0.), c(0., 0.),
            c(0., 0.), c(-1., 0.), c(0., 0.),
            c(0., 0.), c(0., 0.), c(0., 0.),
        ]),
        4 => CMat::from_row_slice(3, 3, &[
            c(0., 0.), c(0., 0.), c(1., 0.),
            c(0., 0.), c(0., 0.), c(0., 0.),
            c(1., 0.), c(0., 0.), c(0., 0.),
        ]),
        5 => CMat::from_row_slice(3, 3, &[
            c(0., 0.), c(0., 0.), c(0., -1.),
            c(0., 0.), c(0., 0.), c(0., 0.),
            c(0., 1.), c(0., 0.), c(0., 0.),
        ]),
        6 => CMat::from_row_slice(3, 3, &[
            c(0., 0.), c(0., 0.), c(0., 0.),
            c(0., 0.), c(0., 0.), c(1., 0.),
            c(0., 0.), c(1., 0.), c(0., 0.),
        ]),
        7 => CMat::from_row_slice(3, 3, &[
            c(0., 0.), c(0., 0.), c(0., 0.),
            c(0., 0.), c(0., 0.), c(0., -1.),
            c(0., 0.), c(0., 1.), c(0., 0.),
        ]),
        8 => {
            let s = 1.0 / 3f64.sqrt();
            CMat::from_row_slice(3, 3, &[
                c(s, 0.), c(0., 0.), c(0., 0.),
                c(0., 0.), c(s, 0.), c(0., 0.),
                c(0., 0.), c(0., 0.), c(-2. * s, 0.),
            ])
        }
        _ => {
            return Err(Error::InvalidArgument(format!(
                "Gell-Mann index {k} outside 1..=8"
            )))
        }
    };
    Ok(m)
}

/// exp(-i theta/2 lambda_k) on a qutrit.
pub fn gm_rotation(k: usize, theta: f64) -> Result<CMat> {
    Ok(expi_hermitian(&gell_mann(k)?, theta / 2.0))
}

fn omega(d: usize) -> C64 {
    C64::from_polar(1.0, 2.0 * PI / d as f64)
}

/// Generalized Pauli Z: diag(1, w, w^2, ...), w = e^{2 pi i / d}.
pub fn pauli_z(d: usize) -> CMat {
    CMat::from_fn(d, d, |r, c| {
        if r == c {
            omega(d).powu(r as u32)
        } else {
            ZERO
        }
    })
}

/// Generalized Pauli X: |j> -> |j+1 mod d>.
pub fn pauli_x(d: usize) -> CMat {
    CMat::from_fn(d, d, |r, c| if r == (c + 1) % d { ONE } else { ZERO })
}

/// Discrete Fourier gate H_d with entries w^{jk} / sqrt(d).
pub fn hadamard(d: usize) -> CMat {
    let norm = 1.0 / (d as f64).sqrt();
    CMat::from_fn(d, d, |r, c| omega(d).powu((r * c) as u32) * norm)
}

/// Quadratic phase gate. For odd d this is S_d = sum_j w^{j(j+1)/2} |j><j|;
/// for even d the phases need the 2d-th root of unity, S_d =
/// sum_j e^{i pi j^2 / d} |j><j|, which reduces to diag(1, i) on a qubit.
/// (The odd-d formula evaluated at d = 2 collapses to Z and fails to
/// generate the full Clifford group.)
pub fn sgate(d: usize) -> CMat {
    CMat::from_fn(d, d, |r, c| {
        if r != c {
            return ZERO;
        }
        if d % 2 == 1 {
            omega(d).powu((r * (r + 1) / 2) as u32)
        } else {
            C64::from_polar(1.0, PI * (r * r) as f64 / d as f64)
        }
    })
}

/// Qutrit T gate: diag(1, e^{2 pi i/9}, e^{-2 pi i/9}).
pub fn tgate3() -> CMat {
    let mut m = identity(3);
    m[(1, 1)] = C64::from_polar(1.0, 2.0 * PI / 9.0);
    m[(2, 2)] = C64::from_polar(1.0, -2.0 * PI / 9.0);
    m
}

fn check_two_site(d: usize) -> Result<()> {
    if !(2..=8).contains(&d) {
        return Err(Error::UnsupportedDimension(d));
    }
    Ok(())
}

/// Controlled exchange: swap target levels t1 and t2 when the control is in
/// level c. Basis index convention: |control, target> = control * d + target.
pub fn cex(d: usize, c: usize, t1: usize, t2: usize) -> Result<CMat> {
    check_two_site(d)?;
    for l in [c, t1, t2] {
        if l >= d {
            return Err(Error::InvalidLevel { level: l, dim: d });
        }
    }
    if t1 == t2 {
        return Err(Error::DegenerateLevels(t1));
    }
    let n = d * d;
    let mut m = CMat::zeros(n, n);
    for ctl in 0..d {
        for tgt in 0..d {
            let out = if ctl == c {
                if tgt == t1 {
                    t2
                } else if tgt == t2 {
                    t1
                } else {
                    tgt
                }
            } else {
                tgt
            };
            m[(ctl * d + out, ctl * d + tgt)] = ONE;
        }
    }
    Ok(m)
}

/// Controlled increment: |c, t> -> |c, t+1 mod d> when c = d-1.
pub fn cinc(d: usize) -> Result<CMat> {
    check_two_site(d)?;
    let n = d * d;
    let mut m = CMat::zeros(n, n);
    for ctl in 0..d {
        for tgt in 0..d {
            let out = if ctl == d - 1 { (tgt + 1) % d } else { tgt };
            m[(ctl * d + out, ctl * d + tgt)] = ONE;
        }
    }
    Ok(m)
}

/// Controlled sum |c, t> -> |c, t + c mod d>, built as a product of
/// conjugated controlled increments: for each control branch m the
/// increment is applied m times by shifting the control with X.
pub fn csum(d: usize) -> Result<CMat> {
    check_two_site(d)?;
    let n = d * d;
    let xd = pauli_x(d);
    let cinc_m = cinc(d)?;
    let mut acc = identity(n);
    // C^{(m)} = (X^{m-(d-1)} (x) 1) CINC (X^{(d-1)-m} (x) 1) increments the
    // target exactly when the control is m; apply it m times.
    for m in 1..d {
        let down = d - 1 - m;
        let mut shift_down = identity(d);
        for _ in 0..down {
            shift_down = &xd * shift_down;
        }
        let lift = kron(&shift_down, &identity(d));
        let conjugated = lift.adjoint() * &cinc_m * &lift;
        for _ in 0..m {
            acc = &conjugated * acc;
        }
    }
    Ok(acc)
}

/// Library lookup by name, shared by the circuit text format and the CLI.
/// `params` carries gate-specific integers (levels, Gell-Mann index).
pub fn gate_by_name(name: &str, d: usize, params: &[f64]) -> Result<CMat> {
    match name.to_ascii_uppercase().as_str() {
        "H" => Ok(hadamard(d)),
        "S" => Ok(sgate(d)),
        "X" => Ok(pauli_x(d)),
        "Z" => Ok(pauli_z(d)),
        "T3" | "T" => {
            if d != 3 {
                return Err(Error::InvalidArgument(
                    "the T gate is defined on qutrits".into(),
                ));
            }
            Ok(tgate3())
        }
        "GM" => {
            if d != 3 {
                return Err(Error::InvalidArgument(
                    "Gell-Mann rotations are defined on qutrits".into(),
                ));
            }
            if params.len() != 2 {
                return Err(Error::InvalidArgument(
                    "GM takes an index and an angle".into(),
                ));
            }
            gm_rotation(params[0] as usize, params[1])
        }
        "CEX" => {
            if params.len() != 3 {
                return Err(Error::InvalidArgument(
                    "CEX takes control, t1, t2 levels".into(),
                ));
            }
            cex(d, params[0] as usize, params[1] as usize, params[2] as usize)
        }
        "CINC" => cinc(d),
        "CSUM" => csum(d),
        other => Err(Error::InvalidArgument(format!("unknown gate {other}"))),
    }
}

const CLIFFORD_SCHEMA: u32 = 1;

fn is_prime(d: usize) -> bool {
    matches!(d, 2 | 3 | 5 | 7)
}

/// Remove the global phase ambiguity: scale so the first entry with
/// magnitude above threshold (row-major scan) is real and positive.
pub fn canonical_phase(m: &CMat) -> CMat {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let z = m[(r, c)];
            if z.norm() > 1e-8 {
                let phase = z.conj() / z.norm();
                return m.map(|w| w * phase);
            }
        }
    }
    m.clone()
}

type CanonKey = Vec<(i64, i64)>;

fn canon_key(m: &CMat) -> CanonKey {
    let canon = canonical_phase(m);
    canon
        .iter()
        .map(|z| (((z.re * 1e9).round()) as i64, ((z.im * 1e9).round()) as i64))
        .collect()
}

/// Single-qudit Clifford group for prime d, enumerated up to global phase.
/// Elements carry the generator word that produced them (0 = H, 1 = S).
#[derive(Debug, Clone)]
pub struct CliffordGroup {
    dim: usize,
    elements: Vec<CMat>,
    words: Vec<Vec<u8>>,
    index: HashMap<CanonKey, usize>,
}

#[derive(Serialize, Deserialize)]
struct CliffordCache {
    schema_version: u32,
    dim: usize,
    words: Vec<Vec<u8>>,
}

impl CliffordGroup {
    /// Breadth-first closure of {H, S} under left multiplication.
    pub fn enumerate(d: usize) -> Result<Self> {
        if !is_prime(d) {
            return Err(Error::NonPrimeDimension(d));
        }
        let gens = [hadamard(d), sgate(d)];
        let mut elements = vec![canonical_phase(&identity(d))];
        let mut words: Vec<Vec<u8>> = vec![vec![]];
        let mut index = HashMap::new();
        index.insert(canon_key(&elements[0]), 0usize);
        let mut head = 0;
        while head < elements.len() {
            let base = elements[head].clone();
            let word = words[head].clone();
            for (g, gen) in gens.iter().enumerate() {
                let prod = canonical_phase(&(gen * &base));
                let key = canon_key(&prod);
                if !index.contains_key(&key) {
                    index.insert(key, elements.len());
                    let mut w = word.clone();
                    w.push(g as u8);
                    elements.push(prod);
                    words.push(w);
                }
            }
            head += 1;
        }
        Ok(CliffordGroup {
            dim: d,
            elements,
            words,
            index,
        })
    }

    /// Expected group order modulo phases: d^3 (d^2 - 1) for prime d.
    pub fn expected_order(d: usize) -> usize {
        d.pow(3) * (d * d - 1)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn element(&self, k: usize) -> &CMat {
        &self.elements[k]
    }

    /// Generator word (0 = H, 1 = S) whose left-to-right product, applied in
    /// sequence, rebuilds the element up to global phase.
    pub fn word(&self, k: usize) -> &[u8] {
        &self.words[k]
    }

    /// Index of a unitary in the group, matching up to global phase.
    pub fn lookup(&self, u: &CMat) -> Option<usize> {
        self.index.get(&canon_key(u)).copied()
    }

    /// Index of the group element inverse to element k.
    pub fn inverse_index(&self, k: usize) -> usize {
        let inv = self.elements[k].adjoint();
        self.lookup(&inv)
            .expect("group is closed under inversion")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let cache = CliffordCache {
            schema_version: CLIFFORD_SCHEMA,
            dim: self.dim,
            words: self.words.clone(),
        };
        let text = serde_json::to_string(&cache)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Rebuild the group from a cached word list, verifying closure sizes.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cache: CliffordCache = serde_json::from_str(&text)?;
        if cache.schema_version != CLIFFORD_SCHEMA {
            return Err(Error::SchemaVersion {
                found: cache.schema_version,
                expected: CLIFFORD_SCHEMA,
            });
        }
        let d = cache.dim;
        if !is_prime(d) {
            return Err(Error::NonPrimeDimension(d));
        }
        let gens = [hadamard(d), sgate(d)];
        let mut elements = Vec::with_capacity(cache.words.len());
        let mut index = HashMap::new();
        for (k, word) in cache.words.iter().enumerate() {
            let mut m = identity(d);
            for &g in word {
                m = &gens[g as usize] * m;
            }
            let canon = canonical_phase(&m);
            index.insert(canon_key(&canon), k);
            elements.push(canon);
        }
        if index.len() != elements.len() {
            return Err(Error::InvalidArgument(
                "clifford cache contains duplicate elements".into(),
            ));
        }
        Ok(CliffordGroup {
            dim: d,
            elements,
            words: cache.words,
            index,
        })
    }

    /// Load from `path` when possible, otherwise enumerate and write the
    /// cache (best effort).
    pub fn load_or_enumerate(d: usize, path: Option<&Path>) -> Result<Self> {
        if let Some(p) = path {
            if p.exists() {
                if let Ok(g) = Self::load(p) {
                    if g.dim == d && g.len() == Self::expected_order(d) {
                        return Ok(g);
                    }
                }
            }
        }
        let g = Self::enumerate(d)?;
        if let Some(p) = path {
            let _ = g.save(p);
        }
        Ok(g)
    }
}
