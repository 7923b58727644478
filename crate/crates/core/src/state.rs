//! Core quantum objects: qudit dimensions, pure states, density matrices,
//! unitaries, and Choi operators, together with tensor products, fidelities,
//! and channel application.

use crate::error::{Error, Result};
use crate::linalg::{
    dagger, hermitian_eigen, hermiticity_deviation, identity, kron, unitarity_deviation,
    uhlmann_fidelity, CMat, CVec, C64, ONE, ZERO,
};
use serde::{Deserialize, Serialize};

pub const MIN_DIM: usize = 2;
pub const MAX_DIM: usize = 8;

/// Local dimension of one qudit, restricted to the register sizes the
/// hardware model supports (2 through 8 Zeeman levels).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct QuditDim(usize);

impl QuditDim {
    pub fn new(d: usize) -> Result<Self> {
        if (MIN_DIM..=MAX_DIM).contains(&d) {
            Ok(QuditDim(d))
        } else {
            Err(Error::UnsupportedDimension(d))
        }
    }

    pub fn get(self) -> usize {
        self.0
    }
}

impl TryFrom<usize> for QuditDim {
    type Error = Error;
    fn try_from(d: usize) -> Result<Self> {
        QuditDim::new(d)
    }
}

impl From<QuditDim> for usize {
    fn from(d: QuditDim) -> usize {
        d.0
    }
}

impl std::fmt::Display for QuditDim {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() {
        return Err(Error::DimensionMismatch("empty dimension list".into()));
    }
    for &d in dims {
        QuditDim::new(d)?;
    }
    Ok(())
}

const NORM_TOL: f64 = 1e-10;
const HERM_TOL: f64 = 1e-10;
const PSD_TOL: f64 = -1e-9;
const UNITARY_TOL: f64 = 1e-8;

/// Pure state of a register of qudits with possibly different local
/// dimensions. Site 0 is the most significant index: the basis label of a
/// computational state is read left to right.
#[derive(Debug, Clone)]
pub struct QuditState {
    dims: Vec<usize>,
    amps: CVec,
}

impl QuditState {
    pub fn new(dims: Vec<usize>, amps: CVec) -> Result<Self> {
        validate_dims(&dims)?;
        let total: usize = dims.iter().product();
        if amps.len() != total {
            return Err(Error::DimensionMismatch(format!(
                "amplitude vector has length {}, register needs {}",
                amps.len(),
                total
            )));
        }
        let norm = amps.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(norm));
        }
        Ok(QuditState { dims, amps })
    }

    /// Computational basis state |levels[0], levels[1], ...>.
    pub fn basis(dims: Vec<usize>, levels: &[usize]) -> Result<Self> {
        validate_dims(&dims)?;
        if levels.len() != dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} level labels for {} sites",
                levels.len(),
                dims.len()
            )));
        }
        let mut index = 0;
        for (site, (&l, &d)) in levels.iter().zip(dims.iter()).enumerate() {
            if l >= d {
                return Err(Error::InvalidLevel { level: l, dim: d });
            }
            let _ = site;
            index = index * d + l;
        }
        let total: usize = dims.iter().product();
        let mut amps = CVec::zeros(total);
        amps[index] = ONE;
        Ok(QuditState { dims, amps })
    }

    /// Equal superposition of all basis states of a single qudit.
    pub fn uniform(d: usize) -> Result<Self> {
        validate_dims(&[d])?;
        let amp = C64::new(1.0 / (d as f64).sqrt(), 0.0);
        Ok(QuditState {
            dims: vec![d],
            amps: CVec::from_element(d, amp),
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn total_dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &CVec {
        &self.amps
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn tensor(&self, other: &QuditState) -> QuditState {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        let amps = CVec::from_fn(self.amps.len() * other.amps.len(), |k, _| {
            self.amps[k / other.amps.len()] * other.amps[k % other.amps.len()]
        });
        QuditState { dims, amps }
    }

    /// Pad each site with extra unpopulated levels, keeping amplitudes on the
    /// original computational labels.
    pub fn embed(&self, new_dims: &[usize]) -> Result<QuditState> {
        validate_dims(new_dims)?;
        if new_dims.len() != self.dims.len() {
            return Err(Error::DimensionMismatch(
                "embed expects one dimension per site".into(),
            ));
        }
        for (&nd, &od) in new_dims.iter().zip(self.dims.iter()) {
            if nd < od {
                return Err(Error::DimensionMismatch(format!(
                    "cannot embed dimension {} into {}",
                    od, nd
                )));
            }
        }
        let total: usize = new_dims.iter().product();
        let mut amps = CVec::zeros(total);
        for (k, &a) in self.amps.iter().enumerate() {
            // re-encode the digit string of k in the padded radix system
            let mut rem = k;
            let mut digits = vec![0usize; self.dims.len()];
            for s in (0..self.dims.len()).rev() {
                digits[s] = rem % self.dims[s];
                rem /= self.dims[s];
            }
            let mut idx = 0;
            for (s, &dg) in digits.iter().enumerate() {
                idx = idx * new_dims[s] + dg;
            }
            amps[idx] = a;
        }
        Ok(QuditState {
            dims: new_dims.to_vec(),
            amps,
        })
    }

    /// |<self|other>|^2.
    pub fn overlap(&self, other: &QuditState) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch(
                "overlap between different registers".into(),
            ));
        }
        Ok(self.amps.dotc(&other.amps).norm_sqr())
    }

    pub fn to_density(&self) -> DensityState {
        let d = self.amps.len();
        let mat = CMat::from_fn(d, d, |r, c| self.amps[r] * self.amps[c].conj());
        DensityState {
            dims: self.dims.clone(),
            mat,
        }
    }

    pub fn apply(&self, u: &CMat) -> Result<QuditState> {
        if u.ncols() != self.amps.len() {
            return Err(Error::DimensionMismatch(format!(
                "operator is {}x{}, state has dimension {}",
                u.nrows(),
                u.ncols(),
                self.amps.len()
            )));
        }
        Ok(QuditState {
            dims: self.dims.clone(),
            amps: u * &self.amps,
        })
    }
}

/// Mixed state over a qudit register. Construction checks hermiticity,
/// positivity, and unit trace.
#[derive(Debug, Clone)]
pub struct DensityState {
    dims: Vec<usize>,
    mat: CMat,
}

impl DensityState {
    pub fn new(dims: Vec<usize>, mat: CMat) -> Result<Self> {
        validate_dims(&dims)?;
        let total: usize = dims.iter().product();
        if mat.nrows() != total || mat.ncols() != total {
            return Err(Error::DimensionMismatch(format!(
                "density matrix is {}x{}, register needs {}",
                mat.nrows(),
                mat.ncols(),
                total
            )));
        }
        let herm = hermiticity_deviation(&mat);
        if herm > HERM_TOL {
            return Err(Error::InvalidDensity(format!(
                "hermiticity violated by {herm:.3e}"
            )));
        }
        let tr = mat.trace();
        if (tr.re - 1.0).abs() > 1e-8 || tr.im.abs() > 1e-10 {
            return Err(Error::InvalidDensity(format!("trace is {tr}")));
        }
        let (vals, _) = hermitian_eigen(&mat);
        if let Some(min) = vals.first() {
            if *min < PSD_TOL {
                return Err(Error::InvalidDensity(format!(
                    "negative eigenvalue {min:.3e}"
                )));
            }
        }
        Ok(DensityState { dims, mat })
    }

    pub fn from_pure(state: &QuditState) -> Self {
        state.to_density()
    }

    pub fn maximally_mixed(dims: Vec<usize>) -> Result<Self> {
        validate_dims(&dims)?;
        let total: usize = dims.iter().product();
        Ok(DensityState {
            dims,
            mat: identity(total).scale(1.0 / total as f64),
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn total_dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.mat.nrows()).map(|k| self.mat[(k, k)].re.max(0.0)).collect()
    }

    pub fn apply_unitary(&self, u: &CMat) -> Result<DensityState> {
        if u.ncols() != self.mat.nrows() {
            return Err(Error::DimensionMismatch(
                "unitary does not match density matrix".into(),
            ));
        }
        Ok(DensityState {
            dims: self.dims.clone(),
            mat: u * &self.mat * dagger(u),
        })
    }

    /// Uhlmann fidelity with another state, using the squared-trace
    /// convention so that pure-state fidelity reduces to |<a|b>|^2.
    pub fn fidelity(&self, other: &DensityState) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch(
                "fidelity between different registers".into(),
            ));
        }
        Ok(uhlmann_fidelity(&self.mat, &other.mat))
    }

    pub fn fidelity_pure(&self, other: &QuditState) -> Result<f64> {
        if self.dims != *other.dims() {
            return Err(Error::DimensionMismatch(
                "fidelity between different registers".into(),
            ));
        }
        let v = other.amplitudes();
        let mut acc = ZERO;
        for r in 0..self.mat.nrows() {
            for c in 0..self.mat.ncols() {
                acc += v[r].conj() * self.mat[(r, c)] * v[c];
            }
        }
        Ok(acc.re.clamp(0.0, 1.0))
    }
}

/// Validated unitary operator on a register. `deviation` records how far the
/// supplied matrix was from exact unitarity at construction time.
#[derive(Debug, Clone)]
pub struct UnitaryOp {
    dims: Vec<usize>,
    mat: CMat,
    deviation: f64,
}

impl UnitaryOp {
    pub fn new(dims: Vec<usize>, mat: CMat) -> Result<Self> {
        validate_dims(&dims)?;
        let total: usize = dims.iter().product();
        if mat.nrows() != total || mat.ncols() != total {
            return Err(Error::DimensionMismatch(format!(
                "operator is {}x{}, register needs {}",
                mat.nrows(),
                mat.ncols(),
                total
            )));
        }
        let deviation = unitarity_deviation(&mat);
        if deviation > UNITARY_TOL {
            return Err(Error::NotUnitary(deviation));
        }
        Ok(UnitaryOp { dims, mat, deviation })
    }

    pub fn single(d: usize, mat: CMat) -> Result<Self> {
        Self::new(vec![d], mat)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn deviation(&self) -> f64 {
        self.deviation
    }

    pub fn tensor(&self, other: &UnitaryOp) -> UnitaryOp {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        UnitaryOp {
            dims,
            mat: kron(&self.mat, &other.mat),
            deviation: self.deviation.max(other.deviation),
        }
    }

    pub fn dagger(&self) -> UnitaryOp {
        UnitaryOp {
            dims: self.dims.clone(),
            mat: dagger(&self.mat),
            deviation: self.deviation,
        }
    }
}

/// Choi operator of a channel on a d-dimensional system, normalized so that
/// Tr[Choi] = d. Stored with the input index as the first tensor factor:
/// Choi = sum_{ij} |i><j| (x) E(|i><j|).
#[derive(Debug, Clone)]
pub struct ChoiOperator {
    dim: usize,
    mat: CMat,
}

impl ChoiOperator {
    pub fn new(dim: usize, mat: CMat) -> Result<Self> {
        let d2 = dim * dim;
        if mat.nrows() != d2 || mat.ncols() != d2 {
            return Err(Error::DimensionMismatch(format!(
                "Choi operator is {}x{}, expected {}x{}",
                mat.nrows(),
                mat.ncols(),
                d2,
                d2
            )));
        }
        let herm = hermiticity_deviation(&mat);
        if herm > HERM_TOL {
            return Err(Error::InvalidChoi(format!(
                "hermiticity violated by {herm:.3e}"
            )));
        }
        let tr = mat.trace();
        if (tr.re - dim as f64).abs() > 1e-6 * dim as f64 || tr.im.abs() > 1e-8 {
            return Err(Error::InvalidChoi(format!(
                "trace is {tr}, expected {dim}"
            )));
        }
        let (vals, _) = hermitian_eigen(&mat);
        if let Some(min) = vals.first() {
            if *min < PSD_TOL {
                return Err(Error::InvalidChoi(format!(
                    "negative eigenvalue {min:.3e}"
                )));
            }
        }
        Ok(ChoiOperator { dim, mat })
    }

    /// Choi operator of the unitary channel rho -> U rho U†.
    pub fn from_unitary(u: &CMat) -> Result<Self> {
        let d = u.nrows();
        if u.ncols() != d {
            return Err(Error::DimensionMismatch("unitary must be square".into()));
        }
        let dev = unitarity_deviation(u);
        if dev > UNITARY_TOL {
            return Err(Error::NotUnitary(dev));
        }
        // entry ((i r), (j s)) of sum_{ij} |i><j| (x) U|i><j|U†
        let mut mat = CMat::zeros(d * d, d * d);
        for i in 0..d {
            for j in 0..d {
                for r in 0..d {
                    for s in 0..d {
                        mat[(i * d + r, j * d + s)] += u[(r, i)] * u[(s, j)].conj();
                    }
                }
            }
        }
        ChoiOperator::new(d, mat)
    }

    /// Build from an explicit set of Kraus operators.
    pub fn from_kraus(dim: usize, kraus: &[CMat]) -> Result<Self> {
        let mut mat = CMat::zeros(dim * dim, dim * dim);
        for k in kraus {
            if k.nrows() != dim || k.ncols() != dim {
                return Err(Error::DimensionMismatch(
                    "Kraus operator has wrong shape".into(),
                ));
            }
            for i in 0..dim {
                for j in 0..dim {
                    for r in 0..dim {
                        for s in 0..dim {
                            mat[(i * dim + r, j * dim + s)] += k[(r, i)] * k[(s, j)].conj();
                        }
                    }
                }
            }
        }
        ChoiOperator::new(dim, mat)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    /// Apply the channel to a density matrix:
    /// E(rho)_{rs} = sum_{ij} rho_{ij} Choi_{(i r),(j s)}.
    pub fn apply(&self, rho: &CMat) -> Result<CMat> {
        let d = self.dim;
        if rho.nrows() != d || rho.ncols() != d {
            return Err(Error::DimensionMismatch(
                "state does not match channel dimension".into(),
            ));
        }
        let mut out = CMat::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let w = rho[(i, j)];
                if w == ZERO {
                    continue;
                }
                for r in 0..d {
                    for s in 0..d {
                        out[(r, s)] += w * self.mat[(i * d + r, j * d + s)];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Process fidelity between two channels, Tr[C1 C2] / d^2 when either is
    /// unitary, and the Uhlmann fidelity of the normalized Choi states in
    /// general.
    pub fn process_fidelity(&self, other: &ChoiOperator) -> Result<f64> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(
                "process fidelity between different dimensions".into(),
            ));
        }
        let d2 = (self.dim * self.dim) as f64;
        let a = self.mat.scale(1.0 / self.dim as f64);
        let b = other.mat.scale(1.0 / other.dim as f64);
        // rank-1 Choi state means the channel is unitary and the overlap
        // formula applies exactly
        let rank1 = |m: &CMat| {
            let (vals, _) = hermitian_eigen(m);
            vals.iter().rev().skip(1).all(|v| v.abs() < 1e-9)
        };
        if rank1(&a) || rank1(&b) {
            let overlap = (&self.mat * &other.mat).trace().re / d2;
            Ok(overlap.clamp(0.0, 1.0))
        } else {
            Ok(uhlmann_fidelity(&a, &b))
        }
    }
}

/// Tensor product of two unitary matrices (site order: left then right).
pub fn tensor_unitary(a: &CMat, b: &CMat) -> CMat {
    kron(a, b)
}

/// Choi-based channel application, provided as a free function for callers
/// holding raw matrices.
pub fn apply_choi(choi: &ChoiOperator, rho: &CMat) -> Result<CMat> {
    choi.apply(rho)
}
