//! Fourier-basis description of the reference-channel wavepacket and the
//! probability matrices whose expectation values give every population and
//! integrated flux as a quadratic form in the coefficient vector.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::scalar::{cis, cr, Real};

/// Truncated Fourier basis on the period `[0, T_b]` with frequencies
/// `omega_n = 2 pi n / T_b`, `n` in `[-N, N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierBasis<T: Real> {
    t_extraction: T,
    t_b: T,
    n_pos: usize,
    omega: Vec<T>,
}

impl<T: Real> FourierBasis<T> {
    /// Storage index of frequency index `n` (`n = 0` maps to the middle).
    pub fn storage_index(&self, n: isize) -> usize {
        (n + self.n_pos as isize) as usize
    }

    pub fn t_extraction(&self) -> T {
        self.t_extraction
    }

    pub fn t_b(&self) -> T {
        self.t_b
    }

    /// Number of positive frequencies N.
    pub fn n_pos(&self) -> usize {
        self.n_pos
    }

    /// Basis size 2N + 1.
    pub fn dim(&self) -> usize {
        2 * self.n_pos + 1
    }

    /// Frequencies in storage order (index 0 holds `-omega_N`).
    pub fn omegas(&self) -> &[T] {
        &self.omega
    }
}

/// Build the basis for an extraction window `[0, T]` embedded in the period
/// `[0, T_b]`. Requires `T_b > T` and `N >= 1`.
pub fn build_basis<T: Real>(t: T, t_b: T, n_pos: usize) -> Result<FourierBasis<T>> {
    if !(t > T::zero()) {
        return Err(Error::Configuration("extraction time must be positive".into()));
    }
    if !(t_b > t) {
        return Err(Error::Configuration(format!(
            "basis period {:e} must exceed extraction time {:e}",
            t_b.as_f64(),
            t.as_f64()
        )));
    }
    if n_pos < 1 {
        return Err(Error::Configuration("basis needs at least one positive frequency".into()));
    }
    let dim = 2 * n_pos + 1;
    let base = T::two_pi() / t_b;
    let omega = (0..dim)
        .map(|i| base * T::of(i as f64 - n_pos as f64))
        .collect();
    Ok(FourierBasis { t_extraction: t, t_b, n_pos, omega })
}

/// Default basis period: 1.25 T.
pub fn default_basis_period<T: Real>(t: T) -> T {
    T::of(1.25) * t
}

/// Default positive-frequency count for a maximum detuning magnitude:
/// at least 32, at most 64, and `ceil(delta_max T_b / 2 pi) + 32` in between.
pub fn default_n_pos<T: Real>(delta_max: T, t_b: T) -> usize {
    let needed = (delta_max.as_f64().abs() * t_b.as_f64() / (2.0 * std::f64::consts::PI)).ceil()
        as usize
        + 32;
    needed.clamp(32, 64)
}

/// Coefficient vector of the reference channel in a given basis.
#[derive(Debug, Clone)]
pub struct FourierVector<T: Real> {
    pub basis: FourierBasis<T>,
    pub coefficients: DVector<Complex<T>>,
}

impl<T: Real> FourierVector<T> {
    pub fn new(basis: FourierBasis<T>, coefficients: DVector<Complex<T>>) -> Result<Self> {
        if coefficients.len() != basis.dim() {
            return Err(Error::DimensionMismatch { expected: basis.dim(), got: coefficients.len() });
        }
        Ok(Self { basis, coefficients })
    }
}

/// Conversion factor from the reference channel to channel `j` (1-based) at
/// storage index `idx`:
/// `f = (g_j/g_1) [kappa + i(omega_n + Delta_g1)] / [kappa + i(omega_n + Delta_gj)]`.
pub fn conversion_factor<T: Real>(
    basis: &FourierBasis<T>,
    params: &SystemParams<T>,
    j: usize,
    idx: usize,
) -> Result<Complex<T>> {
    let ch1 = params.channel(1)?;
    let chj = params.channel(j)?;
    let omega = basis.omega[idx];
    let kappa = params.kappa();
    let num = Complex::new(kappa, omega + ch1.delta_g);
    let den = Complex::new(kappa, omega + chj.delta_g);
    Ok(cr(chj.g / ch1.g) * num / den)
}

/// Conversion factors of channel `j` across the whole basis, storage order.
pub fn conversion_vector<T: Real>(
    basis: &FourierBasis<T>,
    params: &SystemParams<T>,
    j: usize,
) -> Result<Vec<Complex<T>>> {
    (0..basis.dim()).map(|i| conversion_factor(basis, params, j, i)).collect()
}

// a_n = kappa + i(Delta_g1 + omega_n); the Hermitian bracket of the
// spontaneous and excited matrices factors as conj(a_{n'}) a_n.
fn bracket_vector<T: Real>(basis: &FourierBasis<T>, params: &SystemParams<T>) -> Result<Vec<Complex<T>>> {
    let ch1 = params.channel(1)?;
    Ok(basis
        .omega
        .iter()
        .map(|&w| Complex::new(params.kappa(), ch1.delta_g + w))
        .collect())
}

fn phase_vector<T: Real>(basis: &FourierBasis<T>, t: T) -> Vec<Complex<T>> {
    basis.omega.iter().map(|&w| cis(w * t)).collect()
}

// Exact partial-period harmonic overlap (1/T_b) int_0^t e^{i mu t'} dt'.
fn kernel_entry<T: Real>(t_b: T, mu: T, t: T) -> Complex<T> {
    if mu == T::zero() {
        cr(t / t_b)
    } else {
        let half = mu * t * T::of(0.5);
        cis(half) * cr(T::of(2.0) * half.sin() / (mu * t_b))
    }
}

/// Overlap kernel `V_{n',n}(t)`; diagonal entries are `t/T_b`.
pub fn kernel_matrix<T: Real>(basis: &FourierBasis<T>, t: T) -> Result<DMatrix<Complex<T>>> {
    check_time(basis, t)?;
    let dim = basis.dim();
    Ok(DMatrix::from_fn(dim, dim, |r, c| {
        kernel_entry(basis.t_b, basis.omega[c] - basis.omega[r], t)
    }))
}

fn check_time<T: Real>(basis: &FourierBasis<T>, t: T) -> Result<()> {
    if t < T::zero() || t > basis.t_b {
        return Err(Error::Domain(format!(
            "evaluation time {:e} outside [0, T_b = {:e}]",
            t.as_f64(),
            basis.t_b.as_f64()
        )));
    }
    Ok(())
}

/// Which probability functional a matrix represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatrixKind {
    /// Integrated emission through cavity channel `j`: `2 kappa f* V f`.
    Emission(usize),
    /// Instantaneous occupation of cavity channel `j`.
    CavityOccupation(usize),
    /// Integrated spontaneous-emission loss.
    Spontaneous,
    /// Instantaneous excited-state population.
    Excited,
    /// Sum of every non-initial-state probability.
    TotalNonInitial,
}

/// A Hermitian positive-semidefinite probability matrix at one time.
#[derive(Debug, Clone)]
pub struct ProbabilityMatrix<T: Real> {
    pub kind: MatrixKind,
    pub t: T,
    pub entries: DMatrix<Complex<T>>,
}

fn sandwich<T: Real>(
    left: &[Complex<T>],
    core: &DMatrix<Complex<T>>,
    scale: T,
) -> DMatrix<Complex<T>> {
    let dim = left.len();
    DMatrix::from_fn(dim, dim, |r, c| left[r].conj() * core[(r, c)] * left[c] * cr(scale))
}

fn outer_phase<T: Real>(
    weights: &[Complex<T>],
    phases: &[Complex<T>],
    scale: T,
) -> DMatrix<Complex<T>> {
    let dim = weights.len();
    DMatrix::from_fn(dim, dim, |r, c| {
        (weights[r] * phases[r]).conj() * weights[c] * phases[c] * cr(scale)
    })
}

/// Build the probability matrix of the requested kind at time `t`.
pub fn probability_matrix<T: Real>(
    basis: &FourierBasis<T>,
    params: &SystemParams<T>,
    kind: MatrixKind,
    t: T,
) -> Result<ProbabilityMatrix<T>> {
    check_time(basis, t)?;
    let g1 = params.channel(1)?.g;
    let g1_sq = g1 * g1;
    let two = T::of(2.0);
    let entries = match kind {
        MatrixKind::Emission(j) => {
            let f = conversion_vector(basis, params, j)?;
            let v = kernel_matrix(basis, t)?;
            sandwich(&f, &v, two * params.kappa())
        }
        MatrixKind::CavityOccupation(j) => {
            let f = conversion_vector(basis, params, j)?;
            let ph = phase_vector(basis, t);
            outer_phase(&f, &ph, T::one() / basis.t_b)
        }
        MatrixKind::Spontaneous => {
            let a = bracket_vector(basis, params)?;
            let v = kernel_matrix(basis, t)?;
            sandwich(&a, &v, two * params.gamma() / g1_sq)
        }
        MatrixKind::Excited => {
            let a = bracket_vector(basis, params)?;
            let ph = phase_vector(basis, t);
            outer_phase(&a, &ph, T::one() / (g1_sq * basis.t_b))
        }
        MatrixKind::TotalNonInitial => {
            let dim = basis.dim();
            let mut sum = DMatrix::zeros(dim, dim);
            for j in 1..=params.channel_count() {
                sum += probability_matrix(basis, params, MatrixKind::Emission(j), t)?.entries;
                sum += probability_matrix(basis, params, MatrixKind::CavityOccupation(j), t)?.entries;
            }
            sum += probability_matrix(basis, params, MatrixKind::Spontaneous, t)?.entries;
            sum += probability_matrix(basis, params, MatrixKind::Excited, t)?.entries;
            sum
        }
    };
    Ok(ProbabilityMatrix { kind, t, entries })
}

/// Synthesize the `deriv`-th time derivative (0..=3) of channel `j`'s
/// amplitude on a time grid:
/// `alpha_gj^(k)(t) = (1/sqrt(T_b)) sum_n f_n (i omega_n)^k C_n e^{i omega_n t}`.
pub fn synthesize_time_domain<T: Real>(
    v: &FourierVector<T>,
    params: &SystemParams<T>,
    j: usize,
    deriv: usize,
    times: &[T],
) -> Result<Vec<Complex<T>>> {
    if deriv > 3 {
        return Err(Error::Domain("derivatives above third order are not provided".into()));
    }
    let basis = &v.basis;
    let f = conversion_vector(basis, params, j)?;
    let norm = cr(T::one() / basis.t_b.sqrt());
    let dim = basis.dim();
    let weights: Vec<Complex<T>> = (0..dim)
        .map(|i| {
            let iw = Complex::new(T::zero(), basis.omega[i]);
            let mut fac = Complex::new(T::one(), T::zero());
            for _ in 0..deriv {
                fac *= iw;
            }
            f[i] * fac * v.coefficients[i] * norm
        })
        .collect();
    Ok(times
        .iter()
        .map(|&t| {
            let mut acc = Complex::new(T::zero(), T::zero());
            for i in 0..dim {
                acc += weights[i] * cis(basis.omega[i] * t);
            }
            acc
        })
        .collect())
}

/// Fast evaluator of the total non-initial probability
/// `v^dag P_total(t) v` as a function of time, avoiding matrix assembly.
///
/// The overlap-kernel contributions depend on the frequency difference only,
/// so they reduce to an autocorrelation of the weighted coefficients; the
/// instantaneous contributions are squared harmonic sums.
pub struct OccupationEvaluator<T: Real> {
    t_b: T,
    n_pos: usize,
    omega: Vec<T>,
    /// Autocorrelation by frequency-difference index k in [-(2N), 2N],
    /// stored at k + 2N, with the emission/spontaneous prefactors folded in.
    autocorr: Vec<Complex<T>>,
    /// Weighted coefficient vectors of the instantaneous kinds with their
    /// prefactors.
    instantaneous: Vec<(T, Vec<Complex<T>>)>,
}

impl<T: Real> OccupationEvaluator<T> {
    pub fn new(
        basis: &FourierBasis<T>,
        params: &SystemParams<T>,
        coefficients: &DVector<Complex<T>>,
    ) -> Result<Self> {
        if coefficients.len() != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                got: coefficients.len(),
            });
        }
        let dim = basis.dim();
        let g1 = params.channel(1)?.g;
        let two = T::of(2.0);

        let mut weighted: Vec<(T, Vec<Complex<T>>)> = Vec::new();
        let mut instantaneous: Vec<(T, Vec<Complex<T>>)> = Vec::new();
        for j in 1..=params.channel_count() {
            let f = conversion_vector(basis, params, j)?;
            let w: Vec<Complex<T>> = (0..dim).map(|i| f[i] * coefficients[i]).collect();
            weighted.push((two * params.kappa(), w.clone()));
            instantaneous.push((T::one() / basis.t_b, w));
        }
        let a = bracket_vector(basis, params)?;
        let wa: Vec<Complex<T>> = (0..dim).map(|i| a[i] * coefficients[i]).collect();
        weighted.push((two * params.gamma() / (g1 * g1), wa.clone()));
        instantaneous.push((T::one() / (g1 * g1 * basis.t_b), wa));

        let span = 2 * (dim - 1) + 1;
        let mut autocorr = vec![Complex::new(T::zero(), T::zero()); span];
        for (pref, w) in &weighted {
            for k in -(dim as isize - 1)..=(dim as isize - 1) {
                let mut acc = Complex::new(T::zero(), T::zero());
                for r in 0..dim {
                    let c = r as isize + k;
                    if c >= 0 && (c as usize) < dim {
                        acc += w[r].conj() * w[c as usize];
                    }
                }
                autocorr[(k + dim as isize - 1) as usize] += acc * cr(*pref);
            }
        }
        Ok(Self {
            t_b: basis.t_b,
            n_pos: basis.n_pos,
            omega: basis.omega.clone(),
            autocorr,
            instantaneous,
        })
    }

    /// `v^dag P_total(t) v`.
    pub fn total_at(&self, t: T) -> T {
        let dim = 2 * self.n_pos + 1;
        let base = T::two_pi() / self.t_b;
        let mut acc = T::zero();
        for k in -(dim as isize - 1)..=(dim as isize - 1) {
            let s = self.autocorr[(k + dim as isize - 1) as usize];
            let mu = base * T::of(k as f64);
            acc += (s * kernel_entry(self.t_b, mu, t)).re;
        }
        for (pref, w) in &self.instantaneous {
            let mut sum = Complex::new(T::zero(), T::zero());
            for i in 0..dim {
                sum += w[i] * cis(self.omega[i] * t);
            }
            acc += *pref * sum.norm_sqr();
        }
        acc
    }
}

// Autocorrelation of a weighted coefficient vector by frequency-difference
// index, stored at k + (dim - 1).
fn autocorrelation<T: Real>(w: &[Complex<T>]) -> Vec<Complex<T>> {
    let dim = w.len();
    let mut out = vec![Complex::new(T::zero(), T::zero()); 2 * dim - 1];
    for k in -(dim as isize - 1)..=(dim as isize - 1) {
        let mut acc = Complex::new(T::zero(), T::zero());
        for r in 0..dim {
            let c = r as isize + k;
            if c >= 0 && (c as usize) < dim {
                acc += w[r].conj() * w[c as usize];
            }
        }
        out[(k + dim as isize - 1) as usize] = acc;
    }
    out
}

fn weighted<T: Real>(factors: &[Complex<T>], coeffs: &DVector<Complex<T>>) -> Vec<Complex<T>> {
    factors.iter().zip(coeffs.iter()).map(|(f, c)| f * c).collect()
}

fn kernel_kind_trace<T: Real>(t_b: T, acorr: &[Complex<T>], pref: T, times: &[T]) -> Vec<T> {
    let dim = (acorr.len() + 1) / 2;
    let base = T::two_pi() / t_b;
    times
        .iter()
        .map(|&t| {
            let mut acc = T::zero();
            for k in -(dim as isize - 1)..=(dim as isize - 1) {
                let mu = base * T::of(k as f64);
                acc += (acorr[(k + dim as isize - 1) as usize] * kernel_entry(t_b, mu, t)).re;
            }
            pref * acc
        })
        .collect()
}

fn phase_kind_trace<T: Real>(omega: &[T], w: &[Complex<T>], pref: T, times: &[T]) -> Vec<T> {
    times
        .iter()
        .map(|&t| {
            let mut sum = Complex::new(T::zero(), T::zero());
            for i in 0..w.len() {
                sum += w[i] * cis(omega[i] * t);
            }
            pref * sum.norm_sqr()
        })
        .collect()
}

/// Expectation `v^dag P_kind(t) v` over a time grid without assembling
/// matrices: integral kinds reduce to an autocorrelation against the overlap
/// kernel, instantaneous kinds to a squared harmonic sum. `O(dim)` per time
/// after `O(dim^2)` preparation.
pub fn expectation_trace<T: Real>(
    basis: &FourierBasis<T>,
    params: &SystemParams<T>,
    coeffs: &DVector<Complex<T>>,
    kind: MatrixKind,
    times: &[T],
) -> Result<Vec<T>> {
    if coeffs.len() != basis.dim() {
        return Err(Error::DimensionMismatch { expected: basis.dim(), got: coeffs.len() });
    }
    for &t in times {
        check_time(basis, t)?;
    }
    let g1 = params.channel(1)?.g;
    let two = T::of(2.0);
    match kind {
        MatrixKind::Emission(j) => {
            let w = weighted(&conversion_vector(basis, params, j)?, coeffs);
            Ok(kernel_kind_trace(basis.t_b, &autocorrelation(&w), two * params.kappa(), times))
        }
        MatrixKind::CavityOccupation(j) => {
            let w = weighted(&conversion_vector(basis, params, j)?, coeffs);
            Ok(phase_kind_trace(&basis.omega, &w, T::one() / basis.t_b, times))
        }
        MatrixKind::Spontaneous => {
            let w = weighted(&bracket_vector(basis, params)?, coeffs);
            Ok(kernel_kind_trace(
                basis.t_b,
                &autocorrelation(&w),
                two * params.gamma() / (g1 * g1),
                times,
            ))
        }
        MatrixKind::Excited => {
            let w = weighted(&bracket_vector(basis, params)?, coeffs);
            Ok(phase_kind_trace(&basis.omega, &w, T::one() / (g1 * g1 * basis.t_b), times))
        }
        MatrixKind::TotalNonInitial => {
            let mut total = vec![T::zero(); times.len()];
            for j in 1..=params.channel_count() {
                for kind in [MatrixKind::Emission(j), MatrixKind::CavityOccupation(j)] {
                    let part = expectation_trace(basis, params, coeffs, kind, times)?;
                    for (a, b) in total.iter_mut().zip(part) {
                        *a += b;
                    }
                }
            }
            for kind in [MatrixKind::Spontaneous, MatrixKind::Excited] {
                let part = expectation_trace(basis, params, coeffs, kind, times)?;
                for (a, b) in total.iter_mut().zip(part) {
                    *a += b;
                }
            }
            Ok(total)
        }
    }
}

/// Shared probability-matrix cache keyed by kind and index into a fixed
/// time grid.
pub struct MatrixWorkspace<T: Real> {
    basis: FourierBasis<T>,
    params: SystemParams<T>,
    times: Vec<T>,
    cache: Mutex<HashMap<(MatrixKind, usize), Arc<DMatrix<Complex<T>>>>>,
}

impl<T: Real> MatrixWorkspace<T> {
    pub fn new(basis: FourierBasis<T>, params: SystemParams<T>, times: Vec<T>) -> Self {
        Self { basis, params, times, cache: Mutex::new(HashMap::new()) }
    }

    pub fn basis(&self) -> &FourierBasis<T> {
        &self.basis
    }

    pub fn params(&self) -> &SystemParams<T> {
        &self.params
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    /// Matrix of `kind` at grid index `i`, built on first use.
    pub fn matrix_at(&self, kind: MatrixKind, i: usize) -> Result<Arc<DMatrix<Complex<T>>>> {
        if i >= self.times.len() {
            return Err(Error::DimensionMismatch { expected: self.times.len(), got: i });
        }
        if let Some(m) = self.cache.lock().unwrap().get(&(kind, i)) {
            return Ok(Arc::clone(m));
        }
        let built = Arc::new(probability_matrix(&self.basis, &self.params, kind, self.times[i])?.entries);
        let mut cache = self.cache.lock().unwrap();
        Ok(Arc::clone(cache.entry((kind, i)).or_insert(built)))
    }
}
