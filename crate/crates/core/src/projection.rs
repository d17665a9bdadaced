//! Constraint projection: every occupied-cavity state must start empty, which
//! pins one linear functional of the coefficient vector per non-degenerate
//! channel. The Fourier space is rotated so those functionals occupy the last
//! coordinates, which are then dropped.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::scalar::Real;
use crate::spectral::{conversion_vector, FourierBasis};

/// Relative deviation below which two constraint profiles are treated as the
/// same constraint (degenerate channels). The profile deviation scales with
/// the detuning split over kappa, so splittings below 1e-5 kappa collapse;
/// the residual initial occupation of a collapsed partner channel stays
/// linear in the split.
const DEGENERACY_TOL: f64 = 1e-5;
/// Gram-determinant floor below which the constraint set is rejected.
const GRAM_FLOOR: f64 = 1e-8;

/// Unitary change of basis isolating the constraint subspace.
#[derive(Debug, Clone)]
pub struct ProjectionData<T: Real> {
    constraint_vectors: Vec<DVector<Complex<T>>>,
    u: DMatrix<Complex<T>>,
    j_m_d: usize,
}

impl<T: Real> ProjectionData<T> {
    /// Deduplicated, unnormalized constraint vectors.
    pub fn constraint_vectors(&self) -> &[DVector<Complex<T>>] {
        &self.constraint_vectors
    }

    /// The unitary; its last `j_m_d` rows span the constraint subspace.
    pub fn unitary(&self) -> &DMatrix<Complex<T>> {
        &self.u
    }

    /// Number of non-degenerate occupied-cavity states.
    pub fn j_m_d(&self) -> usize {
        self.j_m_d
    }

    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn projected_dim(&self) -> usize {
        self.dim() - self.j_m_d
    }

    /// `Pi U v`: coordinates of `v` in the constraint-free subspace.
    pub fn project_vector(&self, v: &DVector<Complex<T>>) -> Result<DVector<Complex<T>>> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: v.len() });
        }
        let rotated = &self.u * v;
        Ok(rotated.rows(0, self.projected_dim()).into_owned())
    }

    /// `U^dag Pi~ w`: the constraint-satisfying full-space vector with
    /// projected coordinates `w`.
    pub fn lift_vector(&self, w: &DVector<Complex<T>>) -> Result<DVector<Complex<T>>> {
        if w.len() != self.projected_dim() {
            return Err(Error::DimensionMismatch { expected: self.projected_dim(), got: w.len() });
        }
        let mut padded = DVector::zeros(self.dim());
        padded.rows_mut(0, self.projected_dim()).copy_from(w);
        Ok(self.u.adjoint() * padded)
    }
}

/// One constraint vector per channel, entries `(phi_j)_n = (f_n^(1->j))*`,
/// so that `phi_j^dag C = 0` enforces `alpha_gj(0) = 0`. Channels whose
/// profiles coincide up to a constant complex scale are collapsed.
pub fn constraint_vectors<T: Real>(
    basis: &FourierBasis<T>,
    params: &SystemParams<T>,
) -> Result<Vec<DVector<Complex<T>>>> {
    let dim = basis.dim();
    let mut kept: Vec<DVector<Complex<T>>> = Vec::new();
    for j in 1..=params.channel_count() {
        let f = conversion_vector(basis, params, j)?;
        let phi = DVector::from_iterator(dim, f.iter().map(|z| z.conj()));
        let duplicate = kept.iter().any(|prev| proportional(prev, &phi));
        if !duplicate {
            kept.push(phi);
        }
    }
    Ok(kept)
}

fn proportional<T: Real>(a: &DVector<Complex<T>>, b: &DVector<Complex<T>>) -> bool {
    // Scale fixed at a's largest-magnitude entry, deviation in the max norm.
    let mut pivot = 0usize;
    let mut best = T::zero();
    for (i, z) in a.iter().enumerate() {
        if z.norm_sqr() > best {
            best = z.norm_sqr();
            pivot = i;
        }
    }
    if best == T::zero() {
        return false;
    }
    let scale = b[pivot] / a[pivot];
    let mut dev = T::zero();
    let mut mag = T::zero();
    for i in 0..a.len() {
        dev = dev.max((b[i] - a[i] * scale).norm_sqr().sqrt());
        mag = mag.max(b[i].norm_sqr().sqrt());
    }
    mag > T::zero() && dev <= T::of(DEGENERACY_TOL) * mag
}

/// Gram determinant of the normalized constraint set.
pub fn gram_determinant<T: Real>(vectors: &[DVector<Complex<T>>]) -> T {
    let m = vectors.len();
    let normed: Vec<DVector<Complex<T>>> =
        vectors.iter().map(|v| v / Complex::new(v.norm(), T::zero())).collect();
    let gram = DMatrix::from_fn(m, m, |r, c| normed[r].dotc(&normed[c]));
    gram.determinant().re
}

/// Build the unitary from deduplicated constraint vectors by modified
/// Gram-Schmidt with one reorthogonalization pass. The orthonormalized
/// constraints become the last rows; the remaining rows complete the basis.
pub fn build_projection<T: Real>(
    vectors: &[DVector<Complex<T>>],
    basis: &FourierBasis<T>,
) -> Result<ProjectionData<T>> {
    let dim = basis.dim();
    let m = vectors.len();
    if m == 0 || m >= dim {
        return Err(Error::Degeneracy(format!(
            "need between 1 and {} constraints, got {m}",
            dim - 1
        )));
    }
    for v in vectors {
        if v.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
        }
    }
    let det = gram_determinant(vectors);
    if det < T::of(GRAM_FLOOR) {
        return Err(Error::Degeneracy(format!(
            "Gram determinant {:e} below {GRAM_FLOOR:e}; collapse degenerate channels first",
            det.as_f64()
        )));
    }

    let mut ortho: Vec<DVector<Complex<T>>> = Vec::with_capacity(dim);
    for v in vectors {
        let q = orthogonalize(v.clone(), &ortho).ok_or_else(|| {
            Error::Degeneracy("constraint vector vanished during orthogonalization".into())
        })?;
        ortho.push(q);
    }
    // Complete with standard basis vectors that survive orthogonalization.
    let mut complement: Vec<DVector<Complex<T>>> = Vec::with_capacity(dim - m);
    for k in 0..dim {
        if ortho.len() + complement.len() == dim {
            break;
        }
        let mut e = DVector::zeros(dim);
        e[k] = Complex::new(T::one(), T::zero());
        let mut all: Vec<DVector<Complex<T>>> = ortho.iter().chain(complement.iter()).cloned().collect();
        if let Some(q) = orthogonalize(e, &all) {
            all.clear();
            complement.push(q);
        }
    }
    if ortho.len() + complement.len() != dim {
        return Err(Error::NumericalFailure {
            message: "failed to complete the orthonormal basis".into(),
        });
    }

    // Rows: complement first, constraints last; row i is q_i^dag.
    let mut u = DMatrix::zeros(dim, dim);
    for (r, q) in complement.iter().chain(ortho.iter()).enumerate() {
        for c in 0..dim {
            u[(r, c)] = q[c].conj();
        }
    }
    Ok(ProjectionData { constraint_vectors: vectors.to_vec(), u, j_m_d: m })
}

// Modified Gram-Schmidt step with one reorthogonalization pass; None when
// the residual is numerically zero.
fn orthogonalize<T: Real>(
    mut v: DVector<Complex<T>>,
    against: &[DVector<Complex<T>>],
) -> Option<DVector<Complex<T>>> {
    let original = v.norm();
    if original == T::zero() {
        return None;
    }
    for _ in 0..2 {
        for q in against {
            let coeff = q.dotc(&v);
            v -= q * coeff;
        }
    }
    let n = v.norm();
    if n < T::of(1e-12) * original {
        None
    } else {
        Some(v / Complex::new(n, T::zero()))
    }
}

/// Convenience: constraints, dedup, and unitary in one call.
pub fn projection_for<T: Real>(
    basis: &FourierBasis<T>,
    params: &SystemParams<T>,
) -> Result<ProjectionData<T>> {
    let vectors = constraint_vectors(basis, params)?;
    build_projection(&vectors, basis)
}

/// `P^P = Pi U P U^dag Pi~`: the matrix in projected coordinates.
pub fn project_matrix<T: Real>(
    p: &DMatrix<Complex<T>>,
    proj: &ProjectionData<T>,
) -> Result<DMatrix<Complex<T>>> {
    if p.nrows() != proj.dim() || p.ncols() != proj.dim() {
        return Err(Error::DimensionMismatch { expected: proj.dim(), got: p.nrows() });
    }
    let rotated = proj.unitary() * p * proj.unitary().adjoint();
    let pd = proj.projected_dim();
    Ok(rotated.view((0, 0), (pd, pd)).into_owned())
}
