//! Maximization of normalized probability products over projected Fourier
//! vectors. Normalization is automatic: every probability is divided by the
//! worst-case total non-initial probability, evaluated at the grid time
//! where it peaks. A dual eigensolve over normalization-time weights
//! supplies the starting vector; randomized gradient ascent polishes it.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::projection::{project_matrix, ProjectionData};
use crate::scalar::{cr, Real};
use crate::spectral::{
    expectation_trace, probability_matrix, FourierBasis, MatrixKind,
};

/// Objective: a sum of products of normalized probabilities. The common case
/// is a single product.
#[derive(Debug, Clone)]
pub struct OptimizationTarget<T: Real> {
    products: Vec<Vec<(MatrixKind, T)>>,
    t_extraction: T,
}

impl<T: Real> OptimizationTarget<T> {
    /// Single product of `terms`, each a (kind, evaluation time) pair.
    pub fn product(terms: Vec<(MatrixKind, T)>, t_extraction: T) -> Result<Self> {
        Self::sum_of_products(vec![terms], t_extraction)
    }

    /// Sum of products; the gradient of each product is weighted by the
    /// remaining factors, consistent with the gradient of the sum.
    pub fn sum_of_products(products: Vec<Vec<(MatrixKind, T)>>, t_extraction: T) -> Result<Self> {
        if products.is_empty() || products.iter().any(|p| p.is_empty()) {
            return Err(Error::InvalidParams("target needs at least one term".into()));
        }
        for (_, t) in products.iter().flatten() {
            if !(*t > T::zero() && *t <= t_extraction) {
                return Err(Error::InvalidParams(format!(
                    "term time {:e} outside (0, {:e}]",
                    t.as_f64(),
                    t_extraction.as_f64()
                )));
            }
        }
        Ok(Self { products, t_extraction })
    }

    pub fn products(&self) -> &[Vec<(MatrixKind, T)>] {
        &self.products
    }

    pub fn t_extraction(&self) -> T {
        self.t_extraction
    }
}

/// Knobs of the iteration; `Default` gives the documented values.
#[derive(Debug, Clone)]
pub struct OptimizerConfig<T: Real> {
    /// Uniform range of the dimensionless random step scale.
    pub epsilon_range: (T, T),
    /// Number of uniform normalization times on `[0, T]`.
    pub normalization_times: usize,
    pub max_iterations: usize,
    /// Stop after this many iterations without relative improvement beyond
    /// `stall_tolerance`.
    pub stall_iterations: usize,
    pub stall_tolerance: T,
    pub restarts: usize,
    pub seed: u64,
    /// Zero out coefficients with `|n| > N_cut` in the returned vector.
    pub low_pass: Option<usize>,
}

impl<T: Real> Default for OptimizerConfig<T> {
    fn default() -> Self {
        Self {
            epsilon_range: (T::of(1e-4), T::of(1e-2)),
            normalization_times: 257,
            max_iterations: 20_000,
            stall_iterations: 200,
            stall_tolerance: T::of(1e-9),
            restarts: 3,
            seed: 0,
            low_pass: None,
        }
    }
}

/// One line of the convergence history.
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceRecord<T: Real> {
    pub iteration: usize,
    pub objective: T,
    pub t_max: T,
}

/// Final answer of an optimization run.
#[derive(Debug, Clone)]
pub struct WavepacketSolution<T: Real> {
    /// Projected coefficient vector, unit norm.
    pub v: DVector<Complex<T>>,
    pub objective: T,
    /// Normalized probability of each term, same nesting as the target.
    pub term_probabilities: Vec<Vec<T>>,
    /// Normalized traces of every matrix kind over `reporting_times`.
    pub probability_traces: Vec<(MatrixKind, Vec<T>)>,
    pub reporting_times: Vec<T>,
    pub t_max: T,
    pub converged: bool,
    pub iterations: usize,
    pub history: Vec<ConvergenceRecord<T>>,
    /// Final objective of every restart, for spread reporting.
    pub restart_objectives: Vec<T>,
    /// Peak of the normalized total on a grid 4x denser than the
    /// normalization grid; values above one signal under-resolution.
    pub audit_max_total: T,
}

impl<T: Real> WavepacketSolution<T> {
    pub fn write_history_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iteration,objective,t_max")?;
        for r in &self.history {
            writeln!(
                out,
                "{},{:.11e},{:.11e}",
                r.iteration,
                r.objective.as_f64(),
                r.t_max.as_f64()
            )?;
        }
        Ok(())
    }
}

/// Index of the maximum, ties broken toward the latest entry.
pub(crate) fn argmax_latest<T: Real>(values: &[T]) -> usize {
    let mut best = 0usize;
    for (i, &x) in values.iter().enumerate() {
        if x >= values[best] {
            best = i;
        }
    }
    best
}

/// Shared immutable context of one optimization problem.
pub struct Optimizer<T: Real> {
    params: SystemParams<T>,
    basis: FourierBasis<T>,
    proj: ProjectionData<T>,
    target: OptimizationTarget<T>,
    config: OptimizerConfig<T>,
    norm_times: Vec<T>,
    /// Projected term matrices, same nesting as the target products.
    term_matrices: Vec<Vec<DMatrix<Complex<T>>>>,
    total_cache: Mutex<HashMap<usize, Arc<DMatrix<Complex<T>>>>>,
}

impl<T: Real> Optimizer<T> {
    pub fn new(
        params: SystemParams<T>,
        basis: FourierBasis<T>,
        proj: ProjectionData<T>,
        target: OptimizationTarget<T>,
        config: OptimizerConfig<T>,
    ) -> Result<Self> {
        let t = target.t_extraction();
        if (t - basis.t_extraction()).abs() > T::of(1e-12) * t {
            return Err(Error::Configuration(
                "target extraction time differs from the basis window".into(),
            ));
        }
        if proj.dim() != basis.dim() {
            return Err(Error::DimensionMismatch { expected: basis.dim(), got: proj.dim() });
        }
        if config.normalization_times < 2 {
            return Err(Error::Configuration("normalization grid needs at least 2 times".into()));
        }
        if !(config.epsilon_range.0 > T::zero() && config.epsilon_range.1 >= config.epsilon_range.0)
        {
            return Err(Error::Configuration("epsilon range must be positive and ordered".into()));
        }
        let n = config.normalization_times;
        let norm_times: Vec<T> =
            (0..n).map(|i| t * T::of(i as f64) / T::of((n - 1) as f64)).collect();
        let mut term_matrices = Vec::with_capacity(target.products().len());
        for terms in target.products() {
            let mut row = Vec::with_capacity(terms.len());
            for &(kind, tl) in terms {
                let m = probability_matrix(&basis, &params, kind, tl)?.entries;
                row.push(project_matrix(&m, &proj)?);
            }
            term_matrices.push(row);
        }
        Ok(Self {
            params,
            basis,
            proj,
            target,
            config,
            norm_times,
            term_matrices,
            total_cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn normalization_times(&self) -> &[T] {
        &self.norm_times
    }

    pub fn projection(&self) -> &ProjectionData<T> {
        &self.proj
    }

    pub fn basis(&self) -> &FourierBasis<T> {
        &self.basis
    }

    fn total_projected(&self, idx: usize) -> Result<Arc<DMatrix<Complex<T>>>> {
        if let Some(m) = self.total_cache.lock().unwrap().get(&idx) {
            return Ok(Arc::clone(m));
        }
        let full = probability_matrix(
            &self.basis,
            &self.params,
            MatrixKind::TotalNonInitial,
            self.norm_times[idx],
        )?
        .entries;
        let built = Arc::new(project_matrix(&full, &self.proj)?);
        let mut cache = self.total_cache.lock().unwrap();
        Ok(Arc::clone(cache.entry(idx).or_insert(built)))
    }

    fn lift(&self, v: &DVector<Complex<T>>) -> Result<DVector<Complex<T>>> {
        self.proj.lift_vector(v)
    }

    fn total_trace(&self, v: &DVector<Complex<T>>, times: &[T]) -> Result<Vec<T>> {
        let full = self.lift(v)?;
        expectation_trace(&self.basis, &self.params, &full, MatrixKind::TotalNonInitial, times)
    }

    /// Worst-case normalization point: grid index and denominator value
    /// `v^dag P_total(t_max) v`, ties toward the latest time.
    pub fn find_tmax(&self, v: &DVector<Complex<T>>) -> Result<(usize, T)> {
        let totals = self.total_trace(v, &self.norm_times)?;
        let idx = argmax_latest(&totals);
        Ok((idx, totals[idx]))
    }

    fn check_denominator(&self, d: T) -> Result<()> {
        if !(d > T::zero()) {
            return Err(Error::DegenerateVector(format!(
                "normalization denominator {:e} is not positive",
                d.as_f64()
            )));
        }
        Ok(())
    }

    /// `P^N_kind(t) = (v^dag P_kind(t) v) / (v^dag P_total(t_max) v)`.
    pub fn normalized_probability(&self, v: &DVector<Complex<T>>, kind: MatrixKind, t: T) -> Result<T> {
        let (_, d) = self.find_tmax(v)?;
        self.check_denominator(d)?;
        let full = self.lift(v)?;
        let num = expectation_trace(&self.basis, &self.params, &full, kind, &[t])?[0];
        Ok(num / d)
    }

    fn quad(m: &DMatrix<Complex<T>>, v: &DVector<Complex<T>>) -> T {
        (v.adjoint() * m * v)[(0, 0)].re
    }

    /// Per-term raw expectations `a_l` grouped like the target.
    fn term_values(&self, v: &DVector<Complex<T>>) -> Vec<Vec<T>> {
        self.term_matrices
            .iter()
            .map(|row| row.iter().map(|m| Self::quad(m, v)).collect())
            .collect()
    }

    fn objective_from(&self, a: &[Vec<T>], d: T) -> T {
        a.iter()
            .map(|row| row.iter().map(|&x| x / d).fold(T::one(), |p, x| p * x))
            .fold(T::zero(), |s, p| s + p)
    }

    /// Objective with the denominator pinned to grid index `t_max_idx`
    /// (diagnostic path used by the finite-difference checks).
    pub fn evaluate_fixed(&self, v: &DVector<Complex<T>>, t_max_idx: usize) -> Result<T> {
        let b = self.total_projected(t_max_idx)?;
        let d = Self::quad(&b, v);
        self.check_denominator(d)?;
        Ok(self.objective_from(&self.term_values(v), d))
    }

    /// Objective `V = sum_p prod_l P^N` with `t_max` evaluated for this `v`.
    pub fn evaluate_product(&self, v: &DVector<Complex<T>>) -> Result<T> {
        let (_, d) = self.find_tmax(v)?;
        self.check_denominator(d)?;
        Ok(self.objective_from(&self.term_values(v), d))
    }

    // Relative window below the maximal total inside which grid times count
    // as tied for the normalization.
    const TIE_WINDOW: f64 = 0.012;

    /// Gradient of the objective with respect to `conj(v)` at the current
    /// normalization point:
    /// `sum_p [ sum_l (prod_{k!=l} a_k) A_l v / d^{l_p} - l_p V_p B v / d ]`.
    /// A positive multiple of the steepest-ascent direction; reduces to the
    /// plain correction `sum A_l v - l_M B v` when every normalized term
    /// equals one.
    ///
    /// Near convergence the total is maximal across a stretch of grid times,
    /// making the objective a pointwise minimum of smooth functions (one per
    /// candidate normalization time). Differentiating only the single argmax
    /// then yields a direction that immediately switches the argmax and
    /// loses objective, so the returned direction is the minimum-norm
    /// element of the convex hull of the per-time gradients, the steepest
    /// ascent direction of the minimum. All per-time gradients share the
    /// form `base - coef * B_i v`, so the hull reduction is a small
    /// Frank-Wolfe loop.
    pub fn gradient_direction(&self, v: &DVector<Complex<T>>) -> Result<DVector<Complex<T>>> {
        let totals = self.total_trace(v, &self.norm_times)?;
        let idx = argmax_latest(&totals);
        let d = totals[idx];
        self.check_denominator(d)?;
        let (base, coef) = self.gradient_parts(v, d);
        let cutoff = d * (T::one() - T::of(Self::TIE_WINDOW));
        let active: Vec<usize> =
            (0..totals.len()).filter(|&i| totals[i] >= cutoff).collect();
        let us: Vec<DVector<Complex<T>>> = active
            .iter()
            .map(|&i| Ok(&*self.total_projected(i)? * v))
            .collect::<Result<_>>()?;

        let inner = |x: &DVector<Complex<T>>, y: &DVector<Complex<T>>| -> T {
            x.iter().zip(y.iter()).map(|(a, b)| (a.conj() * b).re).fold(T::zero(), |s, t| s + t)
        };

        // Start from the argmax gradient, then shrink toward the min-norm
        // hull element.
        let start = active.iter().position(|&i| i == idx).unwrap_or(0);
        let mut dir = &base - &us[start] * cr(coef);
        if us.len() > 1 {
            for _ in 0..200 {
                // Frank-Wolfe vertex: per-time gradient with the most
                // negative alignment against the current direction.
                let base_align = inner(&base, &dir);
                let mut s = 0usize;
                let mut best_align = base_align - coef * inner(&us[0], &dir);
                for (k, u) in us.iter().enumerate().skip(1) {
                    let align = base_align - coef * inner(u, &dir);
                    if align < best_align {
                        best_align = align;
                        s = k;
                    }
                }
                let vertex = &base - &us[s] * cr(coef);
                let delta = &vertex - &dir;
                let denom = inner(&delta, &delta);
                if denom < T::of(1e-30) {
                    break;
                }
                let mut gamma = -inner(&dir, &delta) / denom;
                if gamma <= T::zero() {
                    break;
                }
                if gamma > T::one() {
                    gamma = T::one();
                }
                dir += &delta * cr(gamma);
            }
        }
        Ok(dir)
    }

    /// Shared pieces of the objective gradient at denominator value `d`:
    /// every per-time gradient has the form `base - coef * B_i v`.
    fn gradient_parts(&self, v: &DVector<Complex<T>>, d: T) -> (DVector<Complex<T>>, T) {
        let a = self.term_values(v);
        let mut base: DVector<Complex<T>> = DVector::zeros(v.len());
        let mut coef = T::zero();
        for (p, row) in self.term_matrices.iter().enumerate() {
            let lp = row.len();
            let mut d_pow = T::one();
            for _ in 0..lp {
                d_pow *= d;
            }
            let vp = a[p].iter().map(|&x| x / d).fold(T::one(), |acc, x| acc * x);
            for (l, m) in row.iter().enumerate() {
                let mut others = T::one();
                for (k, &ak) in a[p].iter().enumerate() {
                    if k != l {
                        others *= ak;
                    }
                }
                base += (m * v) * cr(others / d_pow);
            }
            coef += T::of(lp as f64) * vp / d;
        }
        (base, coef)
    }

    /// Gradient with respect to `conj(v)` of the smooth fixed-normalization
    /// objective computed by [`evaluate_fixed`](Self::evaluate_fixed).
    pub fn gradient_fixed(
        &self,
        v: &DVector<Complex<T>>,
        t_max_idx: usize,
    ) -> Result<DVector<Complex<T>>> {
        let b = self.total_projected(t_max_idx)?;
        let d = Self::quad(&b, v);
        self.check_denominator(d)?;
        let (base, coef) = self.gradient_parts(v, d);
        Ok(&base - (&*b * v) * cr(coef))
    }

    /// Weighted normalization matrix `sum_i w_i B_i` over the grid times.
    fn weighted_total(&self, w: &[T]) -> Result<DMatrix<Complex<T>>> {
        let dim = self.proj.projected_dim();
        let mut out = DMatrix::zeros(dim, dim);
        for (i, &wi) in w.iter().enumerate() {
            if wi > T::of(1e-14) {
                out += &*self.total_projected(i)? * cr(wi);
            }
        }
        Ok(out)
    }

    /// Top eigenpair of the Hermitian definite pencil `(a, b)` via Cholesky
    /// whitening; `b` is regularized slightly so near-singular weight sums
    /// stay factorizable.
    fn top_generalized_eig(
        a: &DMatrix<Complex<T>>,
        b: &DMatrix<Complex<T>>,
    ) -> Result<(T, DVector<Complex<T>>)> {
        let dim = b.nrows();
        let shift = b.diagonal().iter().map(|z| z.re).fold(T::zero(), |s, x| s + x)
            / T::of(dim as f64);
        let mut reg = T::of(1e-12) * shift.max(T::of(1e-300));
        for _ in 0..8 {
            let mut bb = b.clone();
            for i in 0..dim {
                bb[(i, i)] += Complex::new(reg, T::zero());
            }
            let Some(chol) = bb.cholesky() else {
                reg *= T::of(100.0);
                continue;
            };
            let l = chol.l();
            let Some(linv) = l.try_inverse() else {
                reg *= T::of(100.0);
                continue;
            };
            let m = &linv * a * linv.adjoint();
            let m = (&m + m.adjoint()) * Complex::new(T::of(0.5), T::zero());
            let eig = nalgebra::SymmetricEigen::new(m);
            let mut best = 0usize;
            for i in 1..eig.eigenvalues.len() {
                if eig.eigenvalues[i] > eig.eigenvalues[best] {
                    best = i;
                }
            }
            let v = linv.adjoint() * eig.eigenvectors.column(best);
            let n = v.norm();
            if !(n > T::zero()) {
                return Err(Error::DegenerateVector("eigenvector collapsed".into()));
            }
            return Ok((eig.eigenvalues[best], v / Complex::new(n, T::zero())));
        }
        Err(Error::DegenerateVector("weighted normalization matrix is not definite".into()))
    }

    /// PSD numerator combination whose eigen-direction increases the
    /// objective at fixed normalization: `sum_p sum_l (prod_{k!=l} a_k) A_l`
    /// (overall scale irrelevant). For a single-term product this is just
    /// the term matrix.
    fn numerator_combination(&self, a: &[Vec<T>]) -> DMatrix<Complex<T>> {
        let dim = self.proj.projected_dim();
        let mut out = DMatrix::zeros(dim, dim);
        for (p, row) in self.term_matrices.iter().enumerate() {
            for (l, m) in row.iter().enumerate() {
                let mut others = T::one();
                for (k, &ak) in a[p].iter().enumerate() {
                    if k != l {
                        others *= ak.max(T::of(1e-300));
                    }
                }
                out += m * cr(others);
            }
        }
        out
    }

    /// Deterministic starting vector from the dual of the minimax
    /// normalization: the denominator `max_i v^dag B_i v` is relaxed to a
    /// weighted sum and the weights are pushed toward the binding times by
    /// multiplicative updates, with a generalized eigensolve for `v` at each
    /// step. Plain ascent on the pointwise-minimum objective stalls on its
    /// kink surfaces; this seed lands near the global solution and leaves
    /// only local polish to the iteration proper.
    fn eigen_seed(&self) -> Result<DVector<Complex<T>>> {
        let n = self.norm_times.len();
        let mut w = vec![T::one() / T::of(n as f64); n];
        let multi_term = self.term_matrices.iter().any(|row| row.len() > 1)
            || self.term_matrices.len() > 1;
        let mut best: Option<(T, DVector<Complex<T>>)> = None;
        let mut v_cur: Option<DVector<Complex<T>>> = None;
        // Annealed exponentiated-subgradient schedule; sharp-tie problems
        // (bad cavity, short window) need the later high-eta rounds, so keep
        // going while the primal value still improves.
        let base_rounds = 400usize;
        let max_rounds = 1200usize;
        let mut last_improved = 0usize;
        for round in 0..max_rounds {
            if round >= base_rounds && round - last_improved > 100 {
                break;
            }
            let eta = T::of(0.5) + T::of(5.5) * T::of(round as f64) / T::of(max_rounds as f64);
            let bw = self.weighted_total(&w)?;
            let inner_steps = if multi_term { 6 } else { 1 };
            for _ in 0..inner_steps {
                let num = match &v_cur {
                    Some(v) => self.numerator_combination(&self.term_values(v)),
                    None => self.numerator_combination(
                        &self
                            .term_matrices
                            .iter()
                            .map(|row| vec![T::one(); row.len()])
                            .collect::<Vec<_>>(),
                    ),
                };
                let (_, v) = Self::top_generalized_eig(&num, &bw)?;
                v_cur = Some(v);
                if !multi_term {
                    break;
                }
            }
            let v = v_cur.as_ref().unwrap();
            let totals = self.total_trace(v, &self.norm_times)?;
            let d = totals[argmax_latest(&totals)];
            if d > T::zero() {
                let obj = self.objective_from(&self.term_values(v), d);
                if best.as_ref().map_or(true, |(b, _)| obj > *b) {
                    best = Some((obj, v.clone()));
                    last_improved = round;
                }
            }
            let mut z = T::zero();
            for (wi, &qi) in w.iter_mut().zip(&totals) {
                *wi *= (eta * qi / d.max(T::of(1e-300))).exp();
                z += *wi;
            }
            for wi in w.iter_mut() {
                *wi /= z;
            }
        }
        best.map(|(_, v)| v)
            .ok_or_else(|| Error::DegenerateVector("eigen seed never produced a usable vector".into()))
    }

    // Half-sine ansatz on [0, T], zero on (T, T_b], projected, with relative
    // complex noise.
    fn initial_vector(&self, rng: &mut ChaCha8Rng) -> Result<DVector<Complex<T>>> {
        let t = self.target.t_extraction();
        let t_b = self.basis.t_b();
        let dim = self.basis.dim();
        let steps = 2048usize;
        let h = t / T::of(steps as f64);
        let mut coeffs = DVector::zeros(dim);
        for (i, &w) in self.basis.omegas().iter().enumerate() {
            // C_n = (1/sqrt(T_b)) int_0^T sin(pi t/T) e^{-i w t} dt, Simpson
            let f = |tt: T| {
                let s = (T::pi() * tt / t).sin();
                Complex::new(s * (w * tt).cos(), -s * (w * tt).sin())
            };
            let mut acc = f(T::zero()) + f(t);
            for k in 1..steps {
                let weight = if k % 2 == 1 { T::of(4.0) } else { T::of(2.0) };
                acc += f(h * T::of(k as f64)) * cr(weight);
            }
            coeffs[i] = acc * cr(h / T::of(3.0) / t_b.sqrt());
        }
        let mut w = self.proj.project_vector(&coeffs)?;
        let scale = w.norm();
        if scale == T::zero() {
            return Err(Error::DegenerateVector("initial ansatz projects to zero".into()));
        }
        let noise = T::of(0.01) * scale / T::of((w.len() as f64).sqrt());
        for z in w.iter_mut() {
            *z += Complex::new(
                noise * T::of(rng.gen_range(-1.0..1.0)),
                noise * T::of(rng.gen_range(-1.0..1.0)),
            );
        }
        let n = w.norm();
        Ok(w / Complex::new(n, T::zero()))
    }

    fn run_restart(
        &self,
        rng: &mut ChaCha8Rng,
        history: &mut Vec<ConvergenceRecord<T>>,
        seed_vec: Option<&DVector<Complex<T>>>,
    ) -> Result<(DVector<Complex<T>>, T, bool, usize)> {
        let mut v = match seed_vec {
            Some(s) => {
                // small per-restart perturbation keeps restarts independent
                let mut v = s.clone();
                let noise = T::of(1e-3) / T::of((v.len() as f64).sqrt());
                for z in v.iter_mut() {
                    *z += Complex::new(
                        noise * T::of(rng.gen_range(-1.0..1.0)),
                        noise * T::of(rng.gen_range(-1.0..1.0)),
                    );
                }
                let n = v.norm();
                v / Complex::new(n, T::zero())
            }
            None => self.initial_vector(rng)?,
        };
        let (mut idx, mut d) = self.find_tmax(&v)?;
        self.check_denominator(d)?;
        let mut obj = self.objective_from(&self.term_values(&v), d);
        let mut best_v = v.clone();
        let mut best_obj = obj;
        let mut last_improvement = 0usize;
        let mut iterations = 0usize;
        let mut converged = false;

        for iter in 1..=self.config.max_iterations {
            iterations = iter;
            let dir = self.gradient_direction(&v)?;
            let dn = dir.norm();
            if dn < T::of(1e-14) {
                converged = true;
                break;
            }
            let unit = dir / Complex::new(dn, T::zero());
            let (lo, hi) = self.config.epsilon_range;
            let mut eps = lo + (hi - lo) * T::of(rng.gen_range(0.0..1.0f64));
            for _ in 0..4 {
                let mut cand = &v + &unit * cr(eps);
                let n = cand.norm();
                cand /= Complex::new(n, T::zero());
                let (cidx, cd) = self.find_tmax(&cand)?;
                if !(cd > T::zero()) {
                    eps *= T::of(0.1);
                    continue;
                }
                let cobj = self.objective_from(&self.term_values(&cand), cd);
                if cobj >= obj - obj.abs() * T::of(1e-12) {
                    v = cand;
                    obj = cobj;
                    idx = cidx;
                    d = cd;
                    break;
                }
                eps *= T::of(0.1);
            }
            let _ = d;
            history.push(ConvergenceRecord {
                iteration: iter,
                objective: obj,
                t_max: self.norm_times[idx],
            });
            if obj > best_obj {
                if obj - best_obj > self.config.stall_tolerance * best_obj.max(T::of(1e-300)) {
                    last_improvement = iter;
                }
                best_obj = obj;
                best_v = v.clone();
            }
            if iter - last_improvement >= self.config.stall_iterations {
                converged = true;
                break;
            }
        }
        Ok((best_v, best_obj, converged, iterations))
    }

    /// Run the iteration with restarts and return the best solution found.
    /// A run that exhausts `max_iterations` without stalling is returned
    /// with `converged = false`.
    pub fn optimize(&self) -> Result<WavepacketSolution<T>> {
        let restarts = self.config.restarts.max(1);
        let seed_vec = self.eigen_seed().ok();
        let mut best: Option<(DVector<Complex<T>>, T, bool, usize)> = None;
        let mut best_history = Vec::new();
        let mut restart_objectives = Vec::with_capacity(restarts);
        if let Some(s) = &seed_vec {
            if let Ok(obj) = self.evaluate_product(s) {
                best = Some((s.clone(), obj, true, 0));
            }
        }
        for r in 0..restarts {
            let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ (r as u64).wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(r as u64));
            let mut history = Vec::new();
            let run = self.run_restart(&mut rng, &mut history, seed_vec.as_ref())?;
            restart_objectives.push(run.1);
            let better = match &best {
                None => true,
                Some((_, obj, _, _)) => run.1 > *obj,
            };
            if better {
                best = Some(run);
                best_history = history;
            }
        }
        let (mut v, _, converged, iterations) = best.unwrap();

        if let Some(n_cut) = self.config.low_pass {
            let full = self.lift(&v)?;
            let n_pos = self.basis.n_pos() as isize;
            let mut filtered = full.clone();
            for i in 0..self.basis.dim() {
                let n = i as isize - n_pos;
                if n.unsigned_abs() > n_cut {
                    filtered[i] = Complex::new(T::zero(), T::zero());
                }
            }
            let w = self.proj.project_vector(&filtered)?;
            let norm = w.norm();
            if norm > T::zero() {
                v = w / Complex::new(norm, T::zero());
            }
        }

        // Final report at the best vector.
        let (idx, d) = self.find_tmax(&v)?;
        self.check_denominator(d)?;
        let a = self.term_values(&v);
        let objective = self.objective_from(&a, d);
        let term_probabilities: Vec<Vec<T>> =
            a.iter().map(|row| row.iter().map(|&x| x / d).collect()).collect();

        let full = self.lift(&v)?;
        let mut kinds = Vec::new();
        for j in 1..=self.params.channel_count() {
            kinds.push(MatrixKind::Emission(j));
            kinds.push(MatrixKind::CavityOccupation(j));
        }
        kinds.push(MatrixKind::Spontaneous);
        kinds.push(MatrixKind::Excited);
        kinds.push(MatrixKind::TotalNonInitial);
        let mut probability_traces = Vec::with_capacity(kinds.len());
        for kind in kinds {
            let mut trace =
                expectation_trace(&self.basis, &self.params, &full, kind, &self.norm_times)?;
            for x in trace.iter_mut() {
                *x /= d;
            }
            probability_traces.push((kind, trace));
        }

        // Conservation audit on a grid 4x denser than the normalization grid.
        let t = self.target.t_extraction();
        let fine: Vec<T> = {
            let n = 4 * (self.norm_times.len() - 1);
            (0..=n).map(|i| t * T::of(i as f64) / T::of(n as f64)).collect()
        };
        let audit =
            expectation_trace(&self.basis, &self.params, &full, MatrixKind::TotalNonInitial, &fine)?;
        let audit_max_total = audit.iter().map(|&x| x / d).fold(T::zero(), |a, b| a.max(b));

        Ok(WavepacketSolution {
            v,
            objective,
            term_probabilities,
            probability_traces,
            reporting_times: self.norm_times.clone(),
            t_max: self.norm_times[idx],
            converged,
            iterations,
            history: best_history,
            restart_objectives,
            audit_max_total,
        })
    }
}
