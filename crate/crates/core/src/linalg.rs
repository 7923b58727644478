//! Complex linear algebra helpers shared by the compiler, simulator, and
//! tomography modules. Everything here works on dynamically sized
//! `nalgebra` matrices over `Complex64`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ONE: C64 = C64::new(1.0, 0.0);
pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Deterministic RNG used everywhere a seed is accepted.
pub fn seeded_rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

pub fn identity(d: usize) -> CMat {
    CMat::identity(d, d)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn dagger(m: &CMat) -> CMat {
    m.adjoint()
}

/// Largest absolute entry of `a - b`; convenient uniform error measure.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    assert_eq!(a.shape(), b.shape(), "max_abs_diff shape mismatch");
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Deviation of `m` from unitarity, measured as max |(M†M - 1)_{jk}|.
pub fn unitarity_deviation(m: &CMat) -> f64 {
    let d = m.nrows();
    max_abs_diff(&(m.adjoint() * m), &identity(d))
}

/// Deviation of `m` from hermiticity.
pub fn hermiticity_deviation(m: &CMat) -> f64 {
    max_abs_diff(m, &m.adjoint())
}

/// Eigendecomposition of a Hermitian matrix: eigenvalues (ascending) and the
/// matrix of eigenvectors in matching column order.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let se = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..se.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let vals: Vec<f64> = order.iter().map(|&k| se.eigenvalues[k]).collect();
    let vecs = CMat::from_fn(m.nrows(), m.ncols(), |r, c| se.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// exp(-i * scale * H) for Hermitian H, computed by eigendecomposition.
pub fn expi_hermitian(h: &CMat, scale: f64) -> CMat {
    let (vals, vecs) = hermitian_eigen(h);
    let d = h.nrows();
    let phases = CMat::from_fn(d, d, |r, c| {
        if r == c {
            C64::from_polar(1.0, -scale * vals[r])
        } else {
            ZERO
        }
    });
    &vecs * phases * vecs.adjoint()
}

/// Principal square root of a positive semidefinite matrix. Small negative
/// eigenvalues from roundoff are clipped to zero.
pub fn sqrt_psd(m: &CMat) -> CMat {
    let (vals, vecs) = hermitian_eigen(m);
    let d = m.nrows();
    let roots = CMat::from_fn(d, d, |r, c| {
        if r == c {
            C64::new(vals[r].max(0.0).sqrt(), 0.0)
        } else {
            ZERO
        }
    });
    &vecs * roots * vecs.adjoint()
}

/// Largest singular value (operator 2-norm).
pub fn op_norm(m: &CMat) -> f64 {
    let (vals, _) = hermitian_eigen(&(m.adjoint() * m));
    vals.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Operator-norm distance between `a` and `b` after removing the best
/// global phase, i.e. min over phi of ||a - e^{i phi} b||.
pub fn phase_aligned_distance(a: &CMat, b: &CMat) -> f64 {
    let tr = (b.adjoint() * a).trace();
    let phase = if tr.norm() > 1e-14 {
        tr / tr.norm()
    } else {
        ONE
    };
    let aligned = b.map(|z| z * phase);
    op_norm(&(a - aligned))
}

/// Uhlmann fidelity F(rho, sigma) = (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2.
pub fn uhlmann_fidelity(rho: &CMat, sigma: &CMat) -> f64 {
    let rt = sqrt_psd(rho);
    let inner = &rt * sigma * &rt;
    let (vals, _) = hermitian_eigen(&inner);
    let tr: f64 = vals.iter().map(|v| v.max(0.0).sqrt()).sum();
    (tr * tr).min(1.0)
}

/// Haar-random unitary from the QR decomposition of a Ginibre matrix, with
/// the R-diagonal phase correction that makes the distribution uniform.
pub fn haar_unitary<R: Rng>(d: usize, rng: &mut R) -> CMat {
    let z = CMat::from_fn(d, d, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let qr = z.qr();
    let r = qr.r();
    let q = qr.q();
    let fix = CMat::from_fn(d, d, |i, j| {
        if i != j {
            return ZERO;
        }
        let rd = r[(i, i)];
        if rd.norm() > 0.0 {
            rd / rd.norm()
        } else {
            ONE
        }
    });
    q * fix
}

/// Column-stacking vectorization: entry (i, j) lands at position j*d + i.
/// With this convention <<A|B>> = vec(A)† vec(B) = Tr[A† B].
pub fn vectorize(m: &CMat) -> CVec {
    let (nr, nc) = m.shape();
    CVec::from_fn(nr * nc, |k, _| m[(k % nr, k / nr)])
}

pub fn unvectorize(v: &CVec, nrows: usize) -> CMat {
    assert_eq!(v.len() % nrows, 0, "unvectorize length mismatch");
    let ncols = v.len() / nrows;
    CMat::from_fn(nrows, ncols, |r, c| v[c * nrows + r])
}

/// Trace out one tensor factor of a multi-site operator. `dims` lists the
/// local dimension of every site; `site` is the factor to remove.
pub fn trace_out(m: &CMat, dims: &[usize], site: usize) -> CMat {
    let total: usize = dims.iter().product();
    assert_eq!(m.nrows(), total, "trace_out dimension mismatch");
    assert!(site < dims.len());
    let right: usize = dims[site + 1..].iter().product();
    let ds = dims[site];
    let reduced = total / ds;
    let expand = |k: usize| -> (usize, usize) {
        // split reduced index into (left part, right part) around the site
        let l = k / right;
        let r = k % right;
        (l, r)
    };
    CMat::from_fn(reduced, reduced, |a, b| {
        let (la, ra) = expand(a);
        let (lb, rb) = expand(b);
        let mut acc = ZERO;
        for s in 0..ds {
            let row = (la * ds + s) * right + ra;
            let col = (lb * ds + s) * right + rb;
            acc += m[(row, col)];
        }
        acc
    })
}

/// Embed an operator acting on the listed sites (in the given order) into
/// the full tensor space described by `dims`. Sites may appear in any order
/// and need not be adjacent.
pub fn embed_op(op: &CMat, dims: &[usize], sites: &[usize]) -> CMat {
    let total: usize = dims.iter().product();
    let sub: usize = sites.iter().map(|&s| dims[s]).product();
    assert_eq!(op.nrows(), sub, "embed_op dimension mismatch");
    let n = dims.len();
    let digits = |mut k: usize| -> Vec<usize> {
        let mut out = vec![0; n];
        for s in (0..n).rev() {
            out[s] = k % dims[s];
            k /= dims[s];
        }
        out
    };
    let sub_index = |dg: &[usize]| -> usize {
        let mut k = 0;
        for &s in sites {
            k = k * dims[s] + dg[s];
        }
        k
    };
    CMat::from_fn(total, total, |r, c| {
        let dr = digits(r);
        let dc = digits(c);
        for s in 0..n {
            if !sites.contains(&s) && dr[s] != dc[s] {
                return ZERO;
            }
        }
        op[(sub_index(&dr), sub_index(&dc))]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn kron_matches_hand_computation() {
        let a = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)]);
        let b = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let k = kron(&a, &b);
        assert_eq!(k.nrows(), 4);
        assert_abs_diff_eq!(k[(0, 1)].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(k[(0, 0)].re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(k[(2, 1)].re, 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(k[(3, 2)].re, 4.0, epsilon = 1e-15);
    }

    #[test]
    fn expi_hermitian_reproduces_pauli_rotation() {
        // exp(-i theta/2 sigma_x) has cos(theta/2) on the diagonal and
        // -i sin(theta/2) off it.
        let sx = CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]);
        let theta: f64 = 0.7345;
        let u = expi_hermitian(&sx, theta / 2.0);
        assert_abs_diff_eq!(u[(0, 0)].re, (theta / 2.0).cos(), epsilon = 1e-12);
        assert_abs_diff_eq!(u[(0, 1)].im, -(theta / 2.0).sin(), epsilon = 1e-12);
        assert!(unitarity_deviation(&u) < 1e-12);
    }

    #[test]
    fn sqrt_psd_squares_back() {
        let mut rng = seeded_rng(7);
        let g = CMat::from_fn(4, 4, |_, _| {
            c(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let p = &g * g.adjoint();
        let r = sqrt_psd(&p);
        assert!(max_abs_diff(&(&r * &r), &p) < 1e-10);
    }

    #[test]
    fn op_norm_of_scaled_identity() {
        let m = identity(3).scale(2.5);
        assert_abs_diff_eq!(op_norm(&m), 2.5, epsilon = 1e-12);
    }

    #[test]
    fn phase_aligned_distance_ignores_global_phase() {
        let mut rng = seeded_rng(11);
        let u = haar_unitary(4, &mut rng);
        let v = u.clone() * C64::from_polar(1.0, 1.234);
        assert!(phase_aligned_distance(&u, &v) < 1e-12);
        let w = haar_unitary(4, &mut rng);
        assert!(phase_aligned_distance(&u, &w) > 1e-3);
    }

    #[test]
    fn uhlmann_fidelity_pure_states() {
        // |0><0| vs maximally mixed in d=3 has fidelity 1/3.
        let mut rho = CMat::zeros(3, 3);
        rho[(0, 0)] = ONE;
        let mixed = identity(3).scale(1.0 / 3.0);
        assert_abs_diff_eq!(uhlmann_fidelity(&rho, &mixed), 1.0 / 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(uhlmann_fidelity(&rho, &rho), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn haar_samples_are_unitary() {
        let mut rng = seeded_rng(3);
        for d in 2..=7 {
            let u = haar_unitary(d, &mut rng);
            assert!(unitarity_deviation(&u) < 1e-12, "d={d}");
        }
    }

    #[test]
    fn vectorize_convention() {
        let m = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)]);
        let v = vectorize(&m);
        // column stacking: (1, 3, 2, 4)
        assert_eq!(v[0], c(1.0, 0.0));
        assert_eq!(v[1], c(3.0, 0.0));
        assert_eq!(v[2], c(2.0, 0.0));
        assert_eq!(v[3], c(4.0, 0.0));
        let back = unvectorize(&v, 2);
        assert!(max_abs_diff(&back, &m) < 1e-15);
    }

    #[test]
    fn vectorize_inner_product_is_hilbert_schmidt() {
        let mut rng = seeded_rng(19);
        let a = haar_unitary(3, &mut rng);
        let b = haar_unitary(3, &mut rng);
        let lhs = vectorize(&a).dotc(&vectorize(&b));
        let rhs = (a.adjoint() * &b).trace();
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn trace_out_of_product_state() {
        let mut rng = seeded_rng(23);
        let u = haar_unitary(2, &mut rng);
        let v = haar_unitary(3, &mut rng);
        let rho_a = CMat::from_fn(2, 2, |r, c_| u[(r, 0)] * u[(c_, 0)].conj());
        let rho_b = CMat::from_fn(3, 3, |r, c_| v[(r, 0)] * v[(c_, 0)].conj());
        let joint = kron(&rho_a, &rho_b);
        assert!(max_abs_diff(&trace_out(&joint, &[2, 3], 1), &rho_a) < 1e-12);
        assert!(max_abs_diff(&trace_out(&joint, &[2, 3], 0), &rho_b) < 1e-12);
    }

    #[test]
    fn embed_op_matches_kron_for_ordered_sites() {
        let mut rng = seeded_rng(31);
        let a = haar_unitary(2, &mut rng);
        let b = haar_unitary(3, &mut rng);
        let direct = kron(&a, &kron(&identity(2), &b));
        let embedded = embed_op(&kron(&a, &b), &[2, 2, 3], &[0, 2]);
        assert!(max_abs_diff(&direct, &embedded) < 1e-12);
    }

    #[test]
    fn embed_op_handles_swapped_site_order() {
        let mut rng = seeded_rng(37);
        let a = haar_unitary(2, &mut rng);
        let b = haar_unitary(2, &mut rng);
        // op acting as (first listed site) kron (second listed site)
        let op = kron(&a, &b);
        let on_10 = embed_op(&op, &[2, 2], &[1, 0]);
        let on_01 = embed_op(&kron(&b, &a), &[2, 2], &[0, 1]);
        assert!(max_abs_diff(&on_10, &on_01) < 1e-12);
    }
}
