//! Native operations of the trapped-ion qudit hardware: resonant two-level
//! rotations between Zeeman levels, AC-Stark phase shifts on a single level,
//! and the Molmer-Sorensen coupling applied to one two-level subspace of a
//! pair of ions.

use crate::error::{Error, Result};
use crate::linalg::{expi_hermitian, identity, kron, CMat, C64};
use serde::{Deserialize, Serialize};

fn check_pair(i: usize, j: usize, d: usize) -> Result<()> {
    if i == j {
        return Err(Error::DegenerateLevels(i));
    }
    for l in [i, j] {
        if l >= d {
            return Err(Error::InvalidLevel { level: l, dim: d });
        }
    }
    Ok(())
}

/// Equatorial rotation R^{ij}(theta, phi) = exp(-i theta/2 sigma_phi^{ij})
/// acting on levels i < j of a single qudit.
///
/// `manifold_sign` fixes the orientation of sigma_phi: with sign s,
/// sigma_phi = cos(phi) sigma_x + s sin(phi) sigma_y on the (i, j) block.
/// The compiler always works in the +1 frame; a physical level map can
/// report -1 for transitions whose geometric phase runs the other way.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelRotation {
    pub i: usize,
    pub j: usize,
    pub theta: f64,
    pub phi: f64,
    #[serde(default = "default_sign")]
    pub manifold_sign: f64,
}

fn default_sign() -> f64 {
    1.0
}

impl TwoLevelRotation {
    pub fn new(i: usize, j: usize, theta: f64, phi: f64) -> Self {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        TwoLevelRotation {
            i,
            j,
            theta,
            phi,
            manifold_sign: 1.0,
        }
    }

    pub fn with_sign(i: usize, j: usize, theta: f64, phi: f64, sign: f64) -> Self {
        let mut r = Self::new(i, j, theta, phi);
        r.manifold_sign = sign;
        r
    }

    pub fn inverse(&self) -> Self {
        TwoLevelRotation {
            phi: self.phi + std::f64::consts::PI,
            ..*self
        }
    }

    /// Full d-dimensional matrix: identity outside the (i, j) block.
    pub fn matrix(&self, d: usize) -> Result<CMat> {
        check_pair(self.i, self.j, d)?;
        let s = if self.manifold_sign >= 0.0 { 1.0 } else { -1.0 };
        let half = self.theta / 2.0;
        let c = C64::new(half.cos(), 0.0);
        let sn = half.sin();
        let mut m = identity(d);
        m[(self.i, self.i)] = c;
        m[(self.j, self.j)] = c;
        // -i sin(theta/2) e^{-+ i s phi} on the off-diagonal
        m[(self.i, self.j)] = C64::new(0.0, -sn) * C64::from_polar(1.0, -s * self.phi);
        m[(self.j, self.i)] = C64::new(0.0, -sn) * C64::from_polar(1.0, s * self.phi);
        Ok(m)
    }
}

/// AC-Stark phase gate Z^l(theta) = diag(..., e^{-i theta} at level l, ...).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StarkPhase {
    pub level: usize,
    pub theta: f64,
}

impl StarkPhase {
    pub fn new(level: usize, theta: f64) -> Self {
        StarkPhase { level, theta }
    }

    pub fn matrix(&self, d: usize) -> Result<CMat> {
        if self.level >= d {
            return Err(Error::InvalidLevel {
                level: self.level,
                dim: d,
            });
        }
        let mut m = identity(d);
        m[(self.level, self.level)] = C64::from_polar(1.0, -self.theta);
        Ok(m)
    }
}

/// Molmer-Sorensen coupling on the (i, j) subspace of two ions:
/// MS^{ij}(theta, phi) = exp(-i theta/4 (sigma_phi (x) 1 + 1 (x) sigma_phi)^2)
/// where sigma_phi acts on the (i, j) block of each ion and as zero on
/// spectator levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsGate {
    pub i: usize,
    pub j: usize,
    pub theta: f64,
    pub phi: f64,
}

impl MsGate {
    pub fn new(i: usize, j: usize, theta: f64, phi: f64) -> Self {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        MsGate { i, j, theta, phi }
    }

    /// Embedded sigma_phi for one ion of dimension d.
    fn sigma_phi(&self, d: usize) -> CMat {
        let mut s = CMat::zeros(d, d);
        s[(self.i, self.j)] = C64::from_polar(1.0, -self.phi);
        s[(self.j, self.i)] = C64::from_polar(1.0, self.phi);
        s
    }

    /// Full matrix on a two-ion register with local dimensions da and db.
    /// Computed by eigendecomposition of the Hermitian generator.
    pub fn matrix(&self, da: usize, db: usize) -> Result<CMat> {
        check_pair(self.i, self.j, da)?;
        check_pair(self.i, self.j, db)?;
        let sa = kron(&self.sigma_phi(da), &identity(db));
        let sb = kron(&identity(da), &self.sigma_phi(db));
        let total = &sa + &sb;
        let gen = &total * &total;
        Ok(expi_hermitian(&gen, self.theta / 4.0))
    }
}

/// Electronic manifold of one Zeeman level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Manifold {
    S,
    D,
}

/// A Zeeman sublevel, identified by manifold and twice the magnetic quantum
/// number (so m = -3/2 is stored as -3).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeemanLevel {
    pub manifold: Manifold,
    pub two_m: i8,
}

impl ZeemanLevel {
    pub const fn s(two_m: i8) -> Self {
        ZeemanLevel {
            manifold: Manifold::S,
            two_m,
        }
    }

    pub const fn d(two_m: i8) -> Self {
        ZeemanLevel {
            manifold: Manifold::D,
            two_m,
        }
    }
}

impl std::fmt::Display for ZeemanLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self.manifold {
            Manifold::S => "S1/2",
            Manifold::D => "D5/2",
        };
        write!(f, "{}(m={}/2)", name, self.two_m)
    }
}

/// Assignment of computational levels 0..d-1 to physical Zeeman sublevels.
///
/// Laser-driven rotations connect an S1/2 sublevel to a D5/2 sublevel on the
/// quadrupole transition, which allows |Delta m| <= 2.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelMap {
    levels: Vec<ZeemanLevel>,
}

impl LevelMap {
    pub fn new(levels: Vec<ZeemanLevel>) -> Result<Self> {
        if levels.len() < 2 || levels.len() > 8 {
            return Err(Error::InvalidLevelMap(format!(
                "{} levels assigned, need 2..=8",
                levels.len()
            )));
        }
        for (a, la) in levels.iter().enumerate() {
            if la.manifold == Manifold::S && !matches!(la.two_m, -1 | 1) {
                return Err(Error::InvalidLevelMap(format!(
                    "S1/2 has no m = {}/2 sublevel",
                    la.two_m
                )));
            }
            if la.manifold == Manifold::D && !matches!(la.two_m, -5 | -3 | -1 | 1 | 3 | 5) {
                return Err(Error::InvalidLevelMap(format!(
                    "D5/2 has no m = {}/2 sublevel",
                    la.two_m
                )));
            }
            for lb in levels.iter().skip(a + 1) {
                if la == lb {
                    return Err(Error::InvalidLevelMap(format!(
                        "sublevel {} assigned twice",
                        la
                    )));
                }
            }
        }
        Ok(LevelMap { levels })
    }

    /// Default encoding used throughout: ground S1/2(m=-1/2) as level 0,
    /// S1/2(m=+1/2) as level 2, and the D5/2 sublevels filling the rest in
    /// order of experimental convenience.
    pub fn ca40() -> Self {
        LevelMap {
            levels: vec![
                ZeemanLevel::s(-1),
                ZeemanLevel::d(-1),
                ZeemanLevel::s(1),
                ZeemanLevel::d(-3),
                ZeemanLevel::d(1),
                ZeemanLevel::d(-5),
                ZeemanLevel::d(3),
                ZeemanLevel::d(5),
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn level(&self, k: usize) -> Option<&ZeemanLevel> {
        self.levels.get(k)
    }

    pub fn is_s_level(&self, k: usize) -> bool {
        matches!(
            self.levels.get(k),
            Some(ZeemanLevel {
                manifold: Manifold::S,
                ..
            })
        )
    }

    pub fn s_levels(&self) -> Vec<usize> {
        (0..self.levels.len()).filter(|&k| self.is_s_level(k)).collect()
    }

    /// A transition is drivable when it connects S to D with |Delta m| <= 2.
    pub fn transition_allowed(&self, i: usize, j: usize) -> bool {
        let (Some(a), Some(b)) = (self.levels.get(i), self.levels.get(j)) else {
            return false;
        };
        if a.manifold == b.manifold {
            return false;
        }
        (a.two_m - b.two_m).abs() <= 4
    }

    /// All drivable (i, j) pairs with i < j.
    pub fn allowed_transitions(&self) -> Vec<(usize, usize)> {
        let d = self.levels.len();
        let mut out = Vec::new();
        for i in 0..d {
            for j in i + 1..d {
                if self.transition_allowed(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Sign of the sigma_y component for a physical rotation on (i, j).
    /// Transitions driven from the upper manifold toward lower m pick up the
    /// opposite geometric phase.
    pub fn manifold_sign(&self, i: usize, j: usize) -> f64 {
        let (Some(a), Some(b)) = (self.levels.get(i), self.levels.get(j)) else {
            return 1.0;
        };
        // orientation is defined by which end of the pair is the S level
        if a.manifold == Manifold::S || b.manifold == Manifold::D {
            1.0
        } else {
            -1.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs_diff, seeded_rng, unitarity_deviation, ONE, ZERO};
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use std::f64::consts::PI;

    /// Brute-force matrix exponential by scaling and squaring on a Taylor
    /// series; used only as an independent oracle for the closed forms.
    fn expm_oracle(h: &CMat, scale: f64) -> CMat {
        let d = h.nrows();
        let a = h.map(|z| z * C64::new(0.0, -scale));
        let norm: f64 = a.iter().map(|z| z.norm()).sum();
        let squarings = (norm.log2().ceil().max(0.0) as u32) + 6;
        let small = a.map(|z| z / 2f64.powi(squarings as i32));
        let mut term = identity(d);
        let mut sum = identity(d);
        for k in 1..24 {
            term = (&term * &small).map(|z| z / k as f64);
            sum += &term;
        }
        let mut out = sum;
        for _ in 0..squarings {
            out = &out * &out;
        }
        out
    }

    #[test]
    fn rotation_block_entries() {
        let r = TwoLevelRotation::new(0, 1, PI / 3.0, PI / 5.0);
        let m = r.matrix(2).unwrap();
        let half = PI / 6.0;
        assert_abs_diff_eq!(m[(0, 0)].re, half.cos(), epsilon = 1e-15);
        let expect01 = C64::new(0.0, -half.sin()) * C64::from_polar(1.0, -PI / 5.0);
        assert!((m[(0, 1)] - expect01).norm() < 1e-15);
    }

    #[test]
    fn rotation_pi_transfers_population()
    {
        let r = TwoLevelRotation::new(0, 1, PI, PI / 2.0);
        let m = r.matrix(3).unwrap();
        // |0> -> phase * |1>, level 2 untouched
        assert_abs_diff_eq!(m[(1, 0)].norm(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m[(0, 0)].norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m[(2, 2)].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn rotation_angles_add_on_same_axis() {
        let mut rng = seeded_rng(41);
        for _ in 0..20 {
            let th: f64 = rng.random_range(-2.0 * PI..2.0 * PI);
            let ph: f64 = rng.random_range(-PI..PI);
            let half = TwoLevelRotation::new(1, 3, th / 2.0, ph).matrix(5).unwrap();
            let full = TwoLevelRotation::new(1, 3, th, ph).matrix(5).unwrap();
            assert!(max_abs_diff(&(&half * &half), &full) < 1e-12);
        }
    }

    #[test]
    fn rotation_matches_exponential_oracle() {
        let mut rng = seeded_rng(43);
        for d in 2..=6 {
            let i = rng.random_range(0..d - 1);
            let j = rng.random_range(i + 1..d);
            let th: f64 = rng.random_range(0.0..2.0 * PI);
            let ph: f64 = rng.random_range(-PI..PI);
            let r = TwoLevelRotation::new(i, j, th, ph);
            let closed = r.matrix(d).unwrap();
            // generator: theta/2 sigma_phi
            let mut sp = CMat::zeros(d, d);
            sp[(i, j)] = C64::from_polar(1.0, -ph);
            sp[(j, i)] = C64::from_polar(1.0, ph);
            let oracle = expm_oracle(&sp, th / 2.0);
            assert!(max_abs_diff(&closed, &oracle) < 1e-10, "d={d}");
        }
    }

    #[test]
    fn manifold_sign_conjugates_the_phase() {
        let plus = TwoLevelRotation::with_sign(0, 2, 1.1, 0.7, 1.0)
            .matrix(3)
            .unwrap();
        let minus = TwoLevelRotation::with_sign(0, 2, 1.1, 0.7, -1.0)
            .matrix(3)
            .unwrap();
        assert!((plus[(0, 2)] - minus[(2, 0)]).norm() < 1e-15);
        assert!((plus[(0, 2)].conj() - minus[(0, 2)]).norm() > 1e-3);
        // and phi = 0 is sign independent
        let a = TwoLevelRotation::with_sign(0, 2, 1.1, 0.0, 1.0).matrix(3).unwrap();
        let b = TwoLevelRotation::with_sign(0, 2, 1.1, 0.0, -1.0).matrix(3).unwrap();
        assert!(max_abs_diff(&a, &b) < 1e-15);
    }

    #[test]
    fn rotation_rejects_bad_levels() {
        assert!(TwoLevelRotation::new(0, 0, 1.0, 0.0).matrix(3).is_err());
        assert!(TwoLevelRotation::new(0, 3, 1.0, 0.0).matrix(3).is_err());
    }

    #[test]
    fn rotation_inverse_cancels() {
        let r = TwoLevelRotation::new(1, 2, 0.9, -0.4);
        let m = r.matrix(4).unwrap();
        let minv = r.inverse().matrix(4).unwrap();
        assert!(max_abs_diff(&(&m * &minv), &identity(4)) < 1e-12);
    }

    #[test]
    fn stark_phase_is_diagonal() {
        let z = StarkPhase::new(1, 0.8).matrix(3).unwrap();
        assert_abs_diff_eq!(z[(0, 0)].re, 1.0, epsilon = 1e-15);
        assert!((z[(1, 1)] - C64::from_polar(1.0, -0.8)).norm() < 1e-15);
        assert_abs_diff_eq!(z[(2, 2)].re, 1.0, epsilon = 1e-15);
        for r in 0..3 {
            for c in 0..3 {
                if r != c {
                    assert_eq!(z[(r, c)], ZERO);
                }
            }
        }
    }

    #[test]
    fn ms_bell_state_on_qubits() {
        // MS(pi/2, 0) |00> = e^{-i pi/4} (|00> - i |11>)/sqrt2
        let ms = MsGate::new(0, 1, PI / 2.0, 0.0).matrix(2, 2).unwrap();
        let col0: Vec<C64> = (0..4).map(|r| ms[(r, 0)]).collect();
        let phase = C64::from_polar(1.0, -PI / 4.0);
        let inv2 = 1.0 / 2f64.sqrt();
        assert!((col0[0] - phase * C64::new(inv2, 0.0)).norm() < 1e-12);
        assert!((col0[3] - phase * C64::new(0.0, -inv2)).norm() < 1e-12);
        assert!(col0[1].norm() < 1e-12);
        assert!(col0[2].norm() < 1e-12);
    }

    #[test]
    fn ms_matches_exponential_oracle() {
        let mut rng = seeded_rng(47);
        for (da, db) in [(2, 2), (3, 3), (3, 4), (5, 5)] {
            let dmin = da.min(db);
            let i = rng.random_range(0..dmin - 1);
            let j = rng.random_range(i + 1..dmin);
            let th: f64 = rng.random_range(0.0..PI);
            let ph: f64 = rng.random_range(-PI..PI);
            let g = MsGate::new(i, j, th, ph);
            let fast = g.matrix(da, db).unwrap();
            assert!(unitarity_deviation(&fast) < 1e-11);
            let mut sp_a = CMat::zeros(da, da);
            sp_a[(i, j)] = C64::from_polar(1.0, -ph);
            sp_a[(j, i)] = C64::from_polar(1.0, ph);
            let mut sp_b = CMat::zeros(db, db);
            sp_b[(i, j)] = C64::from_polar(1.0, -ph);
            sp_b[(j, i)] = C64::from_polar(1.0, ph);
            let total = kron(&sp_a, &identity(db)) + kron(&identity(da), &sp_b);
            let gen = &total * &total;
            let oracle = expm_oracle(&gen, th / 4.0);
            assert!(max_abs_diff(&fast, &oracle) < 1e-9, "({da},{db})");
        }
    }

    #[test]
    fn ms_spectators_get_exact_identity_action() {
        // levels outside {i, j} on both ions are left alone entirely
        let ms = MsGate::new(0, 1, PI / 2.0, 0.3).matrix(3, 3).unwrap();
        let idx = |a: usize, b: usize| a * 3 + b;
        assert!((ms[(idx(2, 2), idx(2, 2))] - ONE).norm() < 1e-12);
        // one-sided spectator: |2, 0> only picks up the single-ion phase
        // e^{-i theta/4} because (sigma (x) 1 + 1 (x) sigma)^2 restricted to
        // that sector is the identity on the active ion
        let el = ms[(idx(2, 0), idx(2, 0))];
        assert!((el - C64::from_polar(1.0, -PI / 8.0)).norm() < 1e-12);
        assert!((ms[(idx(2, 1), idx(2, 1))] - C64::from_polar(1.0, -PI / 8.0)).norm() < 1e-12);
        // no leakage out of the sector
        for r in 0..9 {
            if r != idx(2, 0) {
                assert!(ms[(r, idx(2, 0))].norm() < 1e-12);
            }
        }
    }

    #[test]
    fn level_map_defaults() {
        let map = LevelMap::ca40();
        assert_eq!(map.len(), 8);
        assert_eq!(map.s_levels(), vec![0, 2]);
        let allowed = map.allowed_transitions();
        assert_eq!(allowed.len(), 10, "{allowed:?}");
        // every allowed pair connects S and D with |Delta m| <= 2
        for (i, j) in allowed {
            assert!(map.transition_allowed(i, j));
            let a = map.level(i).unwrap();
            let b = map.level(j).unwrap();
            assert_ne!(a.manifold, b.manifold);
            assert!((a.two_m - b.two_m).abs() <= 4);
        }
        // S(-1/2) to D(+5/2) would need Delta m = 3: forbidden
        assert!(!map.transition_allowed(0, 7));
        // D-D pairs are never drivable
        assert!(!map.transition_allowed(1, 3));
    }

    #[test]
    fn level_map_rejects_duplicates_and_bad_sublevels() {
        assert!(LevelMap::new(vec![ZeemanLevel::s(-1), ZeemanLevel::s(-1)]).is_err());
        assert!(LevelMap::new(vec![ZeemanLevel::s(-3), ZeemanLevel::d(1)]).is_err());
        assert!(LevelMap::new(vec![ZeemanLevel::s(-1), ZeemanLevel::d(7)]).is_err());
    }
}
