//! Closed-form upper and lower bounds on finite-time extraction probability
//! for the Lambda system, the probability trajectories of the bounding
//! sinusoid, and the hyperbolic-branch exclusion check.

use crate::error::{Error, Result};
use crate::model::{adiabatic_limit, cooperativity, SystemParams};
use crate::scalar::Real;

/// Number of uniform samples used to bracket the frequency-restriction root.
const ROOT_SCAN_SAMPLES: usize = 10_000;
/// Number of uniform samples used to locate the lower-bound total-probability
/// maximum before golden-section refinement.
const LOWER_GRID_SAMPLES: usize = 10_000;
/// Below this extraction time (in units of 1/kappa) the restriction equation
/// residual cannot be evaluated in f64; the rescaled form is solved without
/// the residual demand.
const SHORT_TIME_GUARD: f64 = 1e-6;

/// Result of the analytic bound construction at extraction time `t_extraction`.
#[derive(Debug, Clone)]
pub struct AnalyticBoundResult<T: Real> {
    /// Sinusoid angular frequency, in (0, pi/T).
    pub omega_m: T,
    /// Shape quotient m = (1/2C)((omega_m/kappa)^2 + 1).
    pub m: T,
    /// Stationarity scalar; equals m at the solution.
    pub q: T,
    /// Amplitude of the sinusoid under the upper-bound normalization.
    pub a_upper: T,
    /// Amplitude-squared rescale factor in (0, 1] for the lower bound.
    /// `None` when only the upper bound was computed.
    pub scale_lower: Option<T>,
    /// Upper-bound extraction probability 1/(1+m).
    pub p_upper: T,
    /// Lower-bound extraction probability; `None` for upper-bound-only results.
    pub p_lower: Option<T>,
    /// Extraction time.
    pub t_extraction: T,
    /// Set when the requested maximization grid under-resolves the sinusoid.
    pub resolution_warning: bool,
}

/// Probabilities of the bounding trajectory at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundPoint<T: Real> {
    pub p_kappa: T,
    pub p_g: T,
    pub p_gamma: T,
    pub p_e: T,
}

/// Which amplitude normalization to evaluate a trajectory with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSide {
    Upper,
    Lower,
}

fn lambda_g<T: Real>(params: &SystemParams<T>) -> Result<T> {
    if params.channel_count() != 1 {
        return Err(Error::UnsupportedConfiguration(
            "analytic bounds apply to the single-channel Lambda system".into(),
        ));
    }
    Ok(params.channels()[0].g)
}

/// Left-hand side minus one of the frequency restriction equation,
/// `cos(2 w T) - [w / (kappa (1+C))] sin(2 w T) - 1`.
pub fn restriction_residual<T: Real>(params: &SystemParams<T>, t: T, omega: T) -> Result<T> {
    lambda_g(params)?;
    let c = cooperativity(params, 1)?;
    let two = T::of(2.0);
    let u = two * omega * t;
    Ok(u.cos() - omega / (params.kappa() * (T::one() + c)) * u.sin() - T::one())
}

// Rescaled residual in u = 2 w T: beta (cos u - 1) - u sin u, with
// beta = 2 T kappa (1 + C). Same roots, well conditioned for all T.
fn scaled_residual<T: Real>(beta: T, u: T) -> T {
    beta * (u.cos() - T::one()) - u * u.sin()
}

fn scaled_residual_deriv<T: Real>(beta: T, u: T) -> T {
    -beta * u.sin() - u.sin() - u * u.cos()
}

/// Smallest omega in the open interval (0, pi/T) satisfying the frequency
/// restriction equation. The roots at 0 and pi/T are excluded.
pub fn solve_omega_m<T: Real>(params: &SystemParams<T>, t: T) -> Result<T> {
    let _ = lambda_g(params)?;
    if !(t > T::zero()) {
        return Err(Error::Domain("extraction time must be positive".into()));
    }
    let c = cooperativity(params, 1)?;
    let two = T::of(2.0);
    let beta = two * t * params.kappa() * (T::one() + c);
    let two_pi = T::two_pi();

    // Bracket the first interior sign change in u = 2 w T over (0, 2 pi).
    let n = ROOT_SCAN_SAMPLES;
    let du = two_pi / T::of((n + 1) as f64);
    let mut lo = T::zero();
    let mut hi = T::zero();
    let mut prev_u = du;
    let mut prev_h = scaled_residual(beta, prev_u);
    let mut found = false;
    for i in 2..=n {
        let u = du * T::of(i as f64);
        let h = scaled_residual(beta, u);
        if prev_h < T::zero() && h >= T::zero() {
            lo = prev_u;
            hi = u;
            found = true;
            break;
        }
        prev_u = u;
        prev_h = h;
    }
    if !found {
        // For long extraction times the root sits within one scan step of
        // 2 pi (at distance ~4 pi / beta); approach the endpoint geometrically.
        let mut d = du;
        let mut g_lo = two_pi - d;
        if scaled_residual(beta, g_lo) < T::zero() {
            for _ in 0..100 {
                d *= T::of(0.5);
                let u = two_pi - d;
                if scaled_residual(beta, u) > T::zero() {
                    lo = g_lo;
                    hi = u;
                    found = true;
                    break;
                }
                g_lo = u;
            }
        }
    }
    if !found {
        return Err(Error::NumericalFailure {
            message: format!(
                "no sign change of the restriction residual in (0, 2pi); \
                 residual at pi: {:e}, at 3pi/2: {:e}",
                scaled_residual(beta, T::pi()).as_f64(),
                scaled_residual(beta, T::of(1.5) * T::pi()).as_f64()
            ),
        });
    }

    // Bisect to 1e-14 relative width, then polish with Newton.
    let tol = T::of(1e-14);
    let mut f_lo = scaled_residual(beta, lo);
    while (hi - lo) > tol * hi {
        let mid = (lo + hi) * T::of(0.5);
        let f_mid = scaled_residual(beta, mid);
        if (f_lo <= T::zero()) == (f_mid <= T::zero()) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    let mut u = (lo + hi) * T::of(0.5);
    for _ in 0..4 {
        let f = scaled_residual(beta, u);
        let d = scaled_residual_deriv(beta, u);
        if d == T::zero() {
            break;
        }
        let step = f / d;
        let next = u - step;
        if next > T::zero() && next < two_pi {
            u = next;
        }
    }

    let omega = u / (two * t);
    let guard = T::of(SHORT_TIME_GUARD) / params.kappa();
    if t >= guard {
        let residual = restriction_residual(params, t, omega)?;
        if residual.abs() > T::of(1e-12) {
            return Err(Error::NumericalFailure {
                message: format!(
                    "restriction residual {:e} at omega = {:e} exceeds 1e-12",
                    residual.as_f64(),
                    omega.as_f64()
                ),
            });
        }
    }
    if !(omega > T::zero() && omega < T::pi() / t) {
        return Err(Error::NumericalFailure {
            message: "root escaped the open bracket (0, pi/T)".into(),
        });
    }
    Ok(omega)
}

/// Unit-amplitude (A = 1) closed-form probabilities of the sinusoid
/// `alpha_g(t) = sin(omega t)`.
pub fn unit_probabilities<T: Real>(
    params: &SystemParams<T>,
    omega: T,
    t: T,
) -> Result<BoundPoint<T>> {
    let g = lambda_g(params)?;
    let kappa = params.kappa();
    let c = cooperativity(params, 1)?;
    let two = T::of(2.0);
    let half = T::of(0.5);

    let s1 = (omega * t).sin();
    let c1 = (omega * t).cos();
    let s2 = (two * omega * t).sin();

    let p_kappa = kappa * t - kappa / (two * omega) * s2;
    let p_g = s1 * s1;
    let p_gamma = p_kappa / (two * c)
        + s1 * s1 / c
        + (omega * omega) / (kappa * kappa) * half / c * (kappa * t + kappa / (two * omega) * s2);
    let pe_amp = omega / g * c1 + kappa / g * s1;
    let p_e = pe_amp * pe_amp;
    Ok(BoundPoint { p_kappa, p_g, p_gamma, p_e })
}

/// Upper bound: solves the frequency restriction, forms the shape quotient
/// and probability, and fixes the amplitude by the terminal constraint
/// P_kappa + P_g + P_gamma = 1 at time T.
pub fn upper_bound<T: Real>(params: &SystemParams<T>, t: T) -> Result<AnalyticBoundResult<T>> {
    let omega_m = solve_omega_m(params, t)?;
    let c = cooperativity(params, 1)?;
    let two = T::of(2.0);
    let ratio = omega_m / params.kappa();
    let m = (ratio * ratio + T::one()) / (two * c);
    let p_upper = T::one() / (T::one() + m);

    let end = unit_probabilities(params, omega_m, t)?;
    let a_sq = T::one() / (end.p_kappa + end.p_g + end.p_gamma);
    Ok(AnalyticBoundResult {
        omega_m,
        m,
        q: m,
        a_upper: a_sq.sqrt(),
        scale_lower: None,
        p_upper,
        p_lower: None,
        t_extraction: t,
        resolution_warning: false,
    })
}

// Golden-section maximization of the unit-amplitude total probability.
fn golden_refine<T: Real>(
    params: &SystemParams<T>,
    omega: T,
    mut lo: T,
    mut hi: T,
) -> Result<T> {
    let total = |t: T| -> Result<T> {
        let p = unit_probabilities(params, omega, t)?;
        Ok(p.p_kappa + p.p_g + p.p_gamma + p.p_e)
    };
    let inv_phi = T::of(0.618_033_988_749_894_8);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = total(x1)?;
    let mut f2 = total(x2)?;
    for _ in 0..80 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = total(x2)?;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = total(x1)?;
        }
    }
    let mid = (lo + hi) * T::of(0.5);
    total(mid)
}

/// Lower bound: keeps the upper-bound sinusoid shape and rescales its
/// amplitude so the total non-initial probability peaks at exactly one.
///
/// `grid_samples` is the number of uniform samples on [0, T] used to locate
/// the maximum (refined afterwards); pass 0 for the default. Under `strict`,
/// a grid that under-resolves the sinusoid is an error instead of a warning.
pub fn lower_bound<T: Real>(
    params: &SystemParams<T>,
    t: T,
    grid_samples: usize,
    strict: bool,
) -> Result<AnalyticBoundResult<T>> {
    let mut result = upper_bound(params, t)?;
    let omega = result.omega_m;
    let n = if grid_samples == 0 { LOWER_GRID_SAMPLES } else { grid_samples };

    // Require >= 200 samples per sinusoid period.
    let period = T::two_pi() / omega;
    let dt = t / T::of(n as f64);
    if period / dt < T::of(200.0) {
        if strict {
            return Err(Error::Resolution(format!(
                "{} samples give {:.1} points per sinusoid period (< 200)",
                n,
                (period / dt).as_f64()
            )));
        }
        result.resolution_warning = true;
    }

    let mut best_i = 0usize;
    let mut best = T::zero();
    for i in 0..=n {
        let ti = t * T::of(i as f64) / T::of(n as f64);
        let p = unit_probabilities(params, omega, ti)?;
        let total = p.p_kappa + p.p_g + p.p_gamma + p.p_e;
        if total >= best {
            best = total;
            best_i = i;
        }
    }
    let lo = if best_i == 0 { T::zero() } else { t * T::of((best_i - 1) as f64) / T::of(n as f64) };
    let hi = if best_i == n { t } else { t * T::of((best_i + 1) as f64) / T::of(n as f64) };
    let refined = golden_refine(params, omega, lo, hi)?;
    let max_total = if refined > best { refined } else { best };

    let end = unit_probabilities(params, omega, t)?;
    let upper_norm = end.p_kappa + end.p_g + end.p_gamma;
    let mut scale = upper_norm / max_total;
    if scale > T::one() {
        scale = T::one();
    }
    result.scale_lower = Some(scale);
    result.p_lower = Some(scale * result.p_upper);
    Ok(result)
}

/// Evaluate the four closed-form trajectories of a bound result on a time
/// grid. All times must lie in [0, T].
pub fn bound_trajectories<T: Real>(
    params: &SystemParams<T>,
    result: &AnalyticBoundResult<T>,
    times: &[T],
    side: BoundSide,
) -> Result<Vec<BoundPoint<T>>> {
    let a_sq = match side {
        BoundSide::Upper => result.a_upper * result.a_upper,
        BoundSide::Lower => {
            let scale = result.scale_lower.ok_or_else(|| {
                Error::Domain("lower-bound trajectory requested from an upper-bound-only result".into())
            })?;
            result.a_upper * result.a_upper * scale
        }
    };
    times
        .iter()
        .map(|&t| {
            if t < T::zero() || t > result.t_extraction {
                return Err(Error::Domain(format!(
                    "time {:e} outside [0, {:e}]",
                    t.as_f64(),
                    result.t_extraction.as_f64()
                )));
            }
            let p = unit_probabilities(params, result.omega_m, t)?;
            Ok(BoundPoint {
                p_kappa: a_sq * p.p_kappa,
                p_g: a_sq * p.p_g,
                p_gamma: a_sq * p.p_gamma,
                p_e: a_sq * p.p_e,
            })
        })
        .collect()
}

// sinh(x)/x - 1, stable for small x.
fn sinhc_m1<T: Real>(x: T) -> T {
    if x.abs() < T::of(1e-4) {
        let x2 = x * x;
        x2 / T::of(6.0) * (T::one() + x2 / T::of(20.0))
    } else {
        x.sinh() / x - T::one()
    }
}

/// Shape quotient of the hyperbolic-sine branch, `alpha_g = A sinh(s t)`
/// with `s = kappa sqrt(1 - 2 C q)`. Always at least 1/(2C), which is why
/// this branch never satisfies the stationarity condition.
pub fn hyperbolic_m<T: Real>(params: &SystemParams<T>, t: T, q: T) -> Result<T> {
    let g = lambda_g(params)?;
    if !(t > T::zero()) {
        return Err(Error::Domain("extraction time must be positive".into()));
    }
    let c = cooperativity(params, 1)?;
    let two = T::of(2.0);
    let two_cq = two * c * q;
    if two_cq >= T::one() {
        return Err(Error::Domain(format!(
            "hyperbolic branch requires q < 1/(2C); got q = {:e}, 1/(2C) = {:e}",
            q.as_f64(),
            (T::one() / (two * c)).as_f64()
        )));
    }
    let kappa = params.kappa();
    let gamma = params.gamma();
    let s = kappa * (T::one() - two_cq).sqrt();
    let st = s * t;

    let sinh_sq = st.sinh() * st.sinh();
    // (1/(2s)) sinh(2 s t) -+ t, written via sinh(x)/x for stability near s = 0.
    let x = two * st;
    let minus = t * sinhc_m1(x);
    let plus = t * (sinhc_m1(x) + two);

    let g2 = g * g;
    let numer = (two * gamma / g2 + T::one()) * sinh_sq + gamma * s * s / (kappa * g2) * plus;
    Ok(T::one() / (two * c) + numer / minus)
}

/// Convergence summary used by sweep reporting: both bounds at T together
/// with the adiabatic reference.
pub fn bound_gap_to_adiabatic<T: Real>(
    params: &SystemParams<T>,
    t: T,
) -> Result<(T, T, T)> {
    let lower = lower_bound(params, t, 0, false)?;
    Ok((lower.p_upper, lower.p_lower.unwrap(), adiabatic_limit(params)?))
}
