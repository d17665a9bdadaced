//! Reconstruction of the classical drive pulse that produces a prescribed
//! output wavepacket, plus algebraic and dynamical verification against the
//! time-domain integrator.
//!
//! The drive is recovered by integrating the remaining degree of freedom
//! `alpha_u(t)` of the equations of motion: the ground and excited amplitudes
//! are fixed by the wavepacket and its derivatives, so the pulse follows
//! pointwise from `Omega = (d/dt alpha_e + (gamma + i delta_e) alpha_e -
//! sum_j g_j alpha_gj) / alpha_u`.

use num_complex::Complex;

use crate::dynamics::{integrate, DriveContext, InitialState, TimeGrid, Trajectory};
use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::scalar::{c, cis, cr, Real};
use crate::spectral::{synthesize_time_domain, FourierVector};

/// Default amplitude margin for closed-form (bound) wavepackets.
pub const DEFAULT_CHI_ANALYTIC: f64 = 0.02;
/// Default amplitude margin for numeric-optimizer wavepackets, which carry
/// high-frequency content that stiffens the reconstruction.
pub const DEFAULT_CHI_NUMERIC: f64 = 0.05;

/// `|alpha_u|` below this aborts the reconstruction as singular.
const SINGULARITY_FLOOR: f64 = 1e-8;

/// Target output wavepacket: per-channel cavity amplitudes with analytic
/// time derivatives up to third order.
pub trait Wavepacket<T: Real> {
    fn channel_count(&self) -> usize;

    /// `deriv`-th time derivative of `alpha_gj(t)`; `j` is 1-based,
    /// `deriv <= 3`.
    fn amplitude(&self, j: usize, deriv: usize, t: T) -> Result<Complex<T>>;
}

/// Single-channel sinusoid `A sin(omega t)`, the shape of the analytic
/// bound trajectories.
#[derive(Debug, Clone, Copy)]
pub struct SineWavepacket<T: Real> {
    pub amplitude: T,
    pub omega: T,
}

impl<T: Real> SineWavepacket<T> {
    pub fn new(amplitude: T, omega: T) -> Self {
        Self { amplitude, omega }
    }

    /// Wavepacket of a bound result; `lower` selects the rescaled
    /// lower-bound amplitude, otherwise the upper-bound amplitude is used.
    pub fn from_bound(result: &crate::bounds::AnalyticBoundResult<T>, lower: bool) -> Result<Self> {
        let amplitude = if lower {
            let scale = result.scale_lower.ok_or_else(|| {
                Error::Configuration("bound result carries no lower-bound rescale".into())
            })?;
            result.a_upper * scale.sqrt()
        } else {
            result.a_upper
        };
        Ok(Self { amplitude, omega: result.omega_m })
    }
}

impl<T: Real> Wavepacket<T> for SineWavepacket<T> {
    fn channel_count(&self) -> usize {
        1
    }

    fn amplitude(&self, j: usize, deriv: usize, t: T) -> Result<Complex<T>> {
        if j != 1 {
            return Err(Error::ChannelIndex { index: j, count: 1 });
        }
        if deriv > 3 {
            return Err(Error::Domain("derivatives above third order are not provided".into()));
        }
        let x = self.omega * t;
        let phase = match deriv {
            0 => x.sin(),
            1 => x.cos(),
            2 => -x.sin(),
            _ => -x.cos(),
        };
        let mut scale = self.amplitude;
        for _ in 0..deriv {
            scale *= self.omega;
        }
        Ok(cr(scale * phase))
    }
}

/// Wavepacket synthesized from a Fourier coefficient vector. Coefficients
/// above the cutoff are dropped at construction and the removed fraction is
/// reported, since high-order numeric artifacts produce large drive swings.
#[derive(Debug, Clone)]
pub struct FourierWavepacket<T: Real> {
    vector: FourierVector<T>,
    params: SystemParams<T>,
    low_pass_delta: T,
}

impl<T: Real> FourierWavepacket<T> {
    /// Default low-pass cut at half the basis order.
    pub fn new(vector: FourierVector<T>, params: SystemParams<T>) -> Result<Self> {
        let cut = vector.basis.n_pos() / 2;
        Self::with_cut(vector, params, Some(cut.max(1)))
    }

    /// Explicit cutoff; `None` keeps the full spectrum.
    pub fn with_cut(
        mut vector: FourierVector<T>,
        params: SystemParams<T>,
        n_cut: Option<usize>,
    ) -> Result<Self> {
        let total: T = vector.coefficients.iter().map(|z| z.norm_sqr()).fold(T::zero(), |a, b| a + b);
        let mut removed = T::zero();
        if let Some(cut) = n_cut {
            let n_pos = vector.basis.n_pos() as isize;
            for n in -n_pos..=n_pos {
                if n.unsigned_abs() > cut {
                    let idx = vector.basis.storage_index(n);
                    removed += vector.coefficients[idx].norm_sqr();
                    vector.coefficients[idx] = cr(T::zero());
                }
            }
        }
        let low_pass_delta =
            if total > T::zero() { (removed / total).sqrt() } else { T::zero() };
        Ok(Self { vector, params, low_pass_delta })
    }

    /// Relative L2 norm of the coefficients removed by the low-pass filter.
    pub fn low_pass_delta(&self) -> T {
        self.low_pass_delta
    }

    pub fn vector(&self) -> &FourierVector<T> {
        &self.vector
    }
}

impl<T: Real> Wavepacket<T> for FourierWavepacket<T> {
    fn channel_count(&self) -> usize {
        self.params.channel_count()
    }

    fn amplitude(&self, j: usize, deriv: usize, t: T) -> Result<Complex<T>> {
        Ok(synthesize_time_domain(&self.vector, &self.params, j, deriv, &[t])?[0])
    }
}

/// Sampled drive pulse with the initial-condition data needed to replay it.
#[derive(Debug, Clone)]
pub struct DrivePulse<T: Real> {
    pub times: Vec<T>,
    pub omega: Vec<Complex<T>>,
    /// Phase of the initial uninverted amplitude.
    pub theta_0: T,
    /// Amplitude margin the wavepacket was scaled by.
    pub chi: T,
    /// `alpha_e(0)` consistent with the scaled wavepacket.
    pub initial_excited_amplitude: Complex<T>,
    /// Reconstructed `alpha_u(t)` on the same grid.
    pub alpha_u: Vec<Complex<T>>,
}

impl<T: Real> DrivePulse<T> {
    pub fn max_magnitude(&self) -> T {
        self.omega
            .iter()
            .map(|z| z.norm_sqr())
            .fold(T::zero(), |a, b| if b > a { b } else { a })
            .sqrt()
    }

    /// Monotone-cubic interpolation of the pulse at `t`, clamped to the
    /// sampled window. Real and imaginary parts are interpolated separately.
    pub fn sample_at(&self, t: T) -> Complex<T> {
        let n = self.times.len();
        if n == 1 {
            return self.omega[0];
        }
        let dt = self.times[1] - self.times[0];
        let mut x = (t - self.times[0]) / dt;
        if x < T::zero() {
            x = T::zero();
        }
        let mut i = x.floor().as_f64() as usize;
        if i > n - 2 {
            i = n - 2;
        }
        let u = ((t - self.times[i]) / dt).clamp(T::zero(), T::one());
        let comp = |f: &dyn Fn(usize) -> T| -> T {
            let y0 = f(i);
            let y1 = f(i + 1);
            let s = y1 - y0;
            let d0 = if i == 0 { s } else { limited_slope(y0 - f(i - 1), s) };
            let d1 = if i + 2 == n { s } else { limited_slope(s, f(i + 2) - y1) };
            hermite(y0, d0, y1, d1, u)
        };
        c(comp(&|k| self.omega[k].re), comp(&|k| self.omega[k].im))
    }

    /// CSV rows: t, Re Omega, Im Omega.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,re_omega,im_omega")?;
        for (t, z) in self.times.iter().zip(&self.omega) {
            writeln!(
                out,
                "{:.11e},{:.11e},{:.11e}",
                t.as_f64(),
                z.re.as_f64(),
                z.im.as_f64()
            )?;
        }
        Ok(())
    }
}

// Fritsch-Carlson limiter on uniform spacing: harmonic mean of same-sign
// neighbouring secants, zero otherwise.
fn limited_slope<T: Real>(prev: T, next: T) -> T {
    if prev * next <= T::zero() {
        T::zero()
    } else {
        T::of(2.0) * prev * next / (prev + next)
    }
}

fn hermite<T: Real>(y0: T, d0: T, y1: T, d1: T, u: T) -> T {
    let u2 = u * u;
    let u3 = u2 * u;
    let two = T::of(2.0);
    let three = T::of(3.0);
    y0 * (two * u3 - three * u2 + T::one())
        + d0 * (u3 - two * u2 + u)
        + y1 * (three * u2 - two * u3)
        + d1 * (u3 - u2)
}

/// Residuals of a drive against its target wavepacket.
#[derive(Debug)]
pub struct DriveReport<T: Real> {
    /// Max over samples of `|Omega alpha_u - (d/dt alpha_e + gamma~ alpha_e
    /// - sum_j g_j alpha_gj)|`, relative to the peak right-hand side, with
    /// `alpha_u` taken from the simulated trajectory.
    pub algebraic_residual: T,
    /// L2 distance between simulated and target `alpha_g1`, relative to the
    /// target L2 norm.
    pub dynamic_l2_error: T,
    pub trajectory: Trajectory<T>,
}

// Wavepacket-derived quantities entering the reconstruction, all scaled by
// the amplitude margin.
struct Frame<'a, T: Real, W: Wavepacket<T>> {
    wavepacket: &'a W,
    params: &'a SystemParams<T>,
    scale: T,
    kappa_tilde: Complex<T>,
    gamma_tilde: Complex<T>,
}

impl<'a, T: Real, W: Wavepacket<T>> Frame<'a, T, W> {
    fn new(wavepacket: &'a W, params: &'a SystemParams<T>, ctx: &DriveContext<T>) -> Result<Self> {
        if wavepacket.channel_count() != params.channel_count() {
            return Err(Error::DimensionMismatch {
                expected: params.channel_count(),
                got: wavepacket.channel_count(),
            });
        }
        Ok(Self {
            wavepacket,
            params,
            scale: T::one() - ctx.chi,
            kappa_tilde: c(params.kappa(), params.channels()[0].delta_g),
            gamma_tilde: c(params.gamma(), ctx.delta_e),
        })
    }

    // alpha_e and its derivative follow from the channel-1 equation of
    // motion: alpha_e = -(d/dt alpha_g1 + kappa~ alpha_g1) / g_1.
    fn alpha_e(&self, deriv: usize, t: T) -> Result<Complex<T>> {
        let w_d = self.wavepacket.amplitude(1, deriv, t)?;
        let w_d1 = self.wavepacket.amplitude(1, deriv + 1, t)?;
        let g1 = self.params.channels()[0].g;
        Ok(-(w_d1 + self.kappa_tilde * w_d) * cr(self.scale / g1))
    }

    fn coupling(&self, t: T) -> Result<Complex<T>> {
        let mut sum = cr(T::zero());
        for (j, ch) in self.params.channels().iter().enumerate() {
            sum += cr(ch.g) * self.wavepacket.amplitude(j + 1, 0, t)?;
        }
        Ok(sum * cr(self.scale))
    }

    // Numerator of the pointwise drive expression.
    fn drive_numerator(&self, t: T) -> Result<Complex<T>> {
        Ok(self.alpha_e(1, t)? + self.gamma_tilde * self.alpha_e(0, t)? - self.coupling(t)?)
    }
}

/// Reconstruct the drive producing the `(1 - chi)`-scaled wavepacket.
///
/// The uninverted amplitude is integrated with fixed-step fourth-order
/// steps on a grid four times denser than `grid`; the returned pulse is
/// sampled on that dense grid.
pub fn reconstruct_drive<T: Real, W: Wavepacket<T>>(
    wavepacket: &W,
    params: &SystemParams<T>,
    ctx: &DriveContext<T>,
    grid: &TimeGrid<T>,
) -> Result<DrivePulse<T>> {
    let frame = Frame::new(wavepacket, params, ctx)?;
    let steps = 4 * grid.steps;
    let h = grid.t_end / T::of(steps as f64);
    let floor = T::of(SINGULARITY_FLOOR);

    let ae0 = frame.alpha_e(0, T::zero())?;
    if ae0.norm_sqr() >= T::one() {
        return Err(Error::ReconstructionSingularity {
            time: 0.0,
            message: "initial excited amplitude reaches unity; reduce the wavepacket \
                      amplitude or increase chi"
                .into(),
        });
    }
    let mut au = cis(ctx.theta_0) * cr((T::one() - ae0.norm_sqr()).sqrt());

    let omega_at = |t: T, au: Complex<T>| -> Result<Complex<T>> {
        Ok(frame.drive_numerator(t)? / au)
    };
    let rhs = |t: T, au: Complex<T>| -> Result<Complex<T>> {
        let ae = frame.alpha_e(0, t)?;
        Ok(-c(T::zero(), ctx.delta_u) * au - omega_at(t, au)?.conj() * ae)
    };

    let mut times = Vec::with_capacity(steps + 1);
    let mut omega = Vec::with_capacity(steps + 1);
    let mut alpha_u = Vec::with_capacity(steps + 1);
    let half = T::of(0.5);
    let sixth = T::of(1.0 / 6.0);
    let two = T::of(2.0);
    for i in 0..=steps {
        let t = h * T::of(i as f64);
        if au.norm_sqr().sqrt() < floor {
            return Err(Error::ReconstructionSingularity {
                time: t.as_f64(),
                message: "uninverted amplitude underflow; increase chi".into(),
            });
        }
        let om = omega_at(t, au)?;
        if !(om.re.is_finite() && om.im.is_finite()) {
            return Err(Error::NumericalFailure {
                message: format!("non-finite drive sample at t = {:e}", t.as_f64()),
            });
        }
        times.push(t);
        omega.push(om);
        alpha_u.push(au);
        if i == steps {
            break;
        }
        let k1 = rhs(t, au)?;
        let k2 = rhs(t + half * h, au + cr(half * h) * k1)?;
        let k3 = rhs(t + half * h, au + cr(half * h) * k2)?;
        let k4 = rhs(t + h, au + cr(h) * k3)?;
        au += cr(h * sixth) * (k1 + cr(two) * (k2 + k3) + k4);
    }

    Ok(DrivePulse {
        times,
        omega,
        theta_0: ctx.theta_0,
        chi: ctx.chi,
        initial_excited_amplitude: ae0,
        alpha_u,
    })
}

/// Alternative reconstruction for resonant real-amplitude single-channel
/// wavepackets: `alpha_u` is taken from probability bookkeeping instead of
/// its equation of motion, with signs chosen to keep it continuous.
pub fn reconstruct_drive_real<T: Real, W: Wavepacket<T>>(
    wavepacket: &W,
    params: &SystemParams<T>,
    chi: T,
    grid: &TimeGrid<T>,
) -> Result<DrivePulse<T>> {
    if params.channel_count() != 1 || params.channels()[0].delta_g != T::zero() {
        return Err(Error::UnsupportedConfiguration(
            "real-amplitude reconstruction needs a single resonant channel".into(),
        ));
    }
    let ctx = DriveContext::new(T::zero(), T::zero(), T::zero(), chi)?;
    let frame = Frame::new(wavepacket, params, &ctx)?;
    let gamma = params.gamma();
    let kappa = params.kappa();
    let steps = 4 * grid.steps;
    let h = grid.t_end / T::of(steps as f64);
    let floor = T::of(SINGULARITY_FLOOR);
    let two = T::of(2.0);
    let half = T::of(0.5);

    let mut times = Vec::with_capacity(steps + 1);
    let mut omega = Vec::with_capacity(steps + 1);
    let mut alpha_u = Vec::with_capacity(steps + 1);
    let mut p_loss = T::zero();
    let mut prev_flux = T::zero();
    let mut sign = T::one();
    let mut prev_au = T::zero();
    let mut prev_slope = T::zero();
    let ae0 = frame.alpha_e(0, T::zero())?;
    for i in 0..=steps {
        let t = h * T::of(i as f64);
        let ae = frame.alpha_e(0, t)?.re;
        let ag = cr(frame.scale) * wavepacket.amplitude(1, 0, t)?;
        let flux = two * (gamma * ae * ae + kappa * ag.norm_sqr());
        if i > 0 {
            p_loss += half * h * (prev_flux + flux);
        }
        prev_flux = flux;
        let rad = T::one() - ae * ae - ag.norm_sqr() - p_loss;
        let mag = if rad > T::zero() { rad.sqrt() } else { T::zero() };
        if i > 0 {
            let predicted = prev_au + h * prev_slope;
            if predicted.abs() > floor {
                sign = if predicted >= T::zero() { T::one() } else { -T::one() };
            }
        }
        let au = sign * mag;
        if au.abs() < floor {
            return Err(Error::ReconstructionSingularity {
                time: t.as_f64(),
                message: "uninverted amplitude underflow; increase chi".into(),
            });
        }
        let om = frame.drive_numerator(t)?.re / au;
        times.push(t);
        omega.push(cr(om));
        alpha_u.push(cr(au));
        prev_slope = -om * ae;
        prev_au = au;
    }

    Ok(DrivePulse {
        times,
        omega,
        theta_0: T::zero(),
        chi,
        initial_excited_amplitude: ae0,
        alpha_u,
    })
}

/// Replay `pulse` through the time-domain integrator and report both the
/// pointwise algebraic residual and the relative L2 wavepacket error.
pub fn verify_drive<T: Real, W: Wavepacket<T>>(
    pulse: &DrivePulse<T>,
    params: &SystemParams<T>,
    ctx: &DriveContext<T>,
    wavepacket: &W,
) -> Result<DriveReport<T>> {
    let replay_ctx = DriveContext { chi: pulse.chi, theta_0: pulse.theta_0, ..*ctx };
    let frame = Frame::new(wavepacket, params, &replay_ctx)?;
    let steps = pulse.times.len() - 1;
    let t_end = pulse.times[steps];
    let grid = TimeGrid::new(t_end, steps)?;
    let initial = InitialState {
        alpha_u: pulse.alpha_u[0],
        alpha_e: pulse.initial_excited_amplitude,
        alpha_g: vec![cr(T::zero()); params.channel_count()],
    };
    let traj = integrate(params, &replay_ctx, |t| pulse.sample_at(t), &initial, &grid)?;

    let mut max_res = T::zero();
    let mut max_rhs = T::zero();
    let mut err_sq = T::zero();
    let mut ref_sq = T::zero();
    for i in 0..=steps {
        let t = pulse.times[i];
        let rhs = frame.drive_numerator(t)?;
        let res = (pulse.omega[i] * traj.alpha_u[i] - rhs).norm_sqr().sqrt();
        let mag = rhs.norm_sqr().sqrt();
        if res > max_res {
            max_res = res;
        }
        if mag > max_rhs {
            max_rhs = mag;
        }
        let target = cr(frame.scale) * wavepacket.amplitude(1, 0, t)?;
        let weight = if i == 0 || i == steps { T::of(0.5) } else { T::one() };
        err_sq += weight * (traj.alpha_g[0][i] - target).norm_sqr();
        ref_sq += weight * target.norm_sqr();
    }
    let algebraic_residual = if max_rhs > T::zero() { max_res / max_rhs } else { max_res };
    let dynamic_l2_error =
        if ref_sq > T::zero() { (err_sq / ref_sq).sqrt() } else { err_sq.sqrt() };
    Ok(DriveReport { algebraic_residual, dynamic_l2_error, trajectory: traj })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::lower_bound;
    use crate::spectral::{build_basis, FourierBasis};
    use nalgebra::DVector;

    fn lambda_unit() -> SystemParams<f64> {
        SystemParams::lambda(1.0, 0.5, 1.0).unwrap()
    }

    fn lower_sine(t: f64, chi: f64) -> (SystemParams<f64>, SineWavepacket<f64>, DriveContext<f64>) {
        let params = lambda_unit();
        let bound = lower_bound(&params, t, 0, false).unwrap();
        let wp = SineWavepacket::from_bound(&bound, true).unwrap();
        let ctx = DriveContext::new(0.0, 0.0, 0.0, chi).unwrap();
        (params, wp, ctx)
    }

    #[test]
    fn zero_wavepacket_gives_zero_drive() {
        let params = lambda_unit();
        let wp = SineWavepacket::new(0.0, 1.0);
        let ctx = DriveContext::resonant();
        let grid = TimeGrid::new(2.5, 400).unwrap();
        let pulse = reconstruct_drive(&wp, &params, &ctx, &grid).unwrap();
        assert!(pulse.max_magnitude() < 1e-14);
        assert_eq!(pulse.initial_excited_amplitude, cr(0.0));
        let report = verify_drive(&pulse, &params, &ctx, &wp).unwrap();
        assert!(report.algebraic_residual < 1e-12);
        assert!(report.dynamic_l2_error < 1e-12);
    }

    #[test]
    fn lower_bound_drive_is_real() {
        let (params, wp, ctx) = lower_sine(2.5, 0.05);
        let grid = TimeGrid::new(2.5, 2000).unwrap();
        let pulse = reconstruct_drive(&wp, &params, &ctx, &grid).unwrap();
        let peak = pulse.max_magnitude();
        assert!(peak > 0.1);
        let max_im = pulse.omega.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        assert!(max_im < 1e-8 * peak, "max |Im Omega| = {max_im:e}");
    }

    #[test]
    fn round_trip_within_one_percent() {
        for chi in [0.05, 0.02] {
            let (params, wp, ctx) = lower_sine(2.5, chi);
            let grid = TimeGrid::new(2.5, 2000).unwrap();
            let pulse = reconstruct_drive(&wp, &params, &ctx, &grid).unwrap();
            let report = verify_drive(&pulse, &params, &ctx, &wp).unwrap();
            assert!(
                report.dynamic_l2_error < 0.01,
                "chi = {chi}: L2 error {:.3e}",
                report.dynamic_l2_error
            );
            assert!(report.algebraic_residual < 0.01);
        }
    }

    #[test]
    fn corrupted_pulse_fails_round_trip() {
        let (params, wp, ctx) = lower_sine(2.5, 0.05);
        let grid = TimeGrid::new(2.5, 2000).unwrap();
        let mut pulse = reconstruct_drive(&wp, &params, &ctx, &grid).unwrap();
        for z in &mut pulse.omega {
            *z *= 1.1;
        }
        let report = verify_drive(&pulse, &params, &ctx, &wp).unwrap();
        assert!(report.dynamic_l2_error > 0.02, "L2 error {:.3e}", report.dynamic_l2_error);
        assert!(report.algebraic_residual > 0.02);
    }

    #[test]
    fn peak_drive_grows_as_margin_shrinks() {
        let grid = TimeGrid::new(2.5, 1000).unwrap();
        let mut last = 0.0;
        for chi in [0.2, 0.1, 0.05, 0.02] {
            let (params, wp, ctx) = lower_sine(2.5, chi);
            let peak = reconstruct_drive(&wp, &params, &ctx, &grid).unwrap().max_magnitude();
            assert!(peak > last, "chi = {chi}: peak {peak:.4} not above {last:.4}");
            last = peak;
        }
    }

    #[test]
    fn theta_zero_changes_pulse_not_extraction() {
        let grid = TimeGrid::new(2.5, 2000).unwrap();
        let mut emissions = Vec::new();
        let mut pulses = Vec::new();
        for theta in [0.0, 0.9, 3.1] {
            let params = lambda_unit();
            let bound = lower_bound(&params, 2.5, 0, false).unwrap();
            let wp = SineWavepacket::from_bound(&bound, true).unwrap();
            let ctx = DriveContext::new(0.0, 0.0, theta, 0.05).unwrap();
            let pulse = reconstruct_drive(&wp, &params, &ctx, &grid).unwrap();
            let report = verify_drive(&pulse, &params, &ctx, &wp).unwrap();
            emissions.push(report.trajectory.total_emission(report.trajectory.len() - 1));
            pulses.push(pulse);
        }
        for p in &emissions[1..] {
            assert!((p - emissions[0]).abs() < 1e-6, "emissions {emissions:?}");
        }
        let diff = pulses[0]
            .omega
            .iter()
            .zip(&pulses[1].omega)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(diff > 1e-3, "pulses should differ with theta_0");
    }

    #[test]
    fn drive_zeros_invariant_under_amplitude_rescale() {
        let params = lambda_unit();
        let bound = lower_bound(&params, 4.0, 0, false).unwrap();
        let full = SineWavepacket::from_bound(&bound, true).unwrap();
        let scaled = SineWavepacket::new(0.6 * full.amplitude, full.omega);
        let ctx = DriveContext::new(0.0, 0.0, 0.0, 0.05).unwrap();
        let grid = TimeGrid::new(4.0, 2000).unwrap();
        let zeros = |wp: &SineWavepacket<f64>| -> Vec<f64> {
            let pulse = reconstruct_drive(wp, &params, &ctx, &grid).unwrap();
            let mut out = Vec::new();
            for i in 1..pulse.times.len() {
                let (a, b) = (pulse.omega[i - 1].re, pulse.omega[i].re);
                if a.signum() != b.signum() && a != 0.0 {
                    out.push(pulse.times[i - 1] + (pulse.times[i] - pulse.times[i - 1]) * a / (a - b));
                }
            }
            out
        };
        let za = zeros(&full);
        let zb = zeros(&scaled);
        assert!(!za.is_empty());
        assert_eq!(za.len(), zb.len());
        let dt = 4.0 / 8000.0;
        for (a, b) in za.iter().zip(&zb) {
            assert!((a - b).abs() < 2.0 * dt, "zeros {a:.5} vs {b:.5}");
        }
    }

    #[test]
    fn oversized_wavepacket_is_singular() {
        let params = lambda_unit();
        let bound = lower_bound(&params, 2.5, 0, false).unwrap();
        let omega = bound.omega_m;
        // |alpha_e(0)| = (1 - chi) A omega / g >= 1
        let wp = SineWavepacket::new(1.2 / (0.98 * omega), omega);
        let ctx = DriveContext::resonant();
        let grid = TimeGrid::new(2.5, 200).unwrap();
        let err = reconstruct_drive(&wp, &params, &ctx, &grid).unwrap_err();
        assert!(matches!(err, Error::ReconstructionSingularity { .. }), "{err}");
    }

    #[test]
    fn real_path_matches_primary_path() {
        let (params, wp, ctx) = lower_sine(2.5, 0.05);
        let grid = TimeGrid::new(2.5, 2000).unwrap();
        let primary = reconstruct_drive(&wp, &params, &ctx, &grid).unwrap();
        let cross = reconstruct_drive_real(&wp, &params, 0.05, &grid).unwrap();
        let peak = primary.max_magnitude();
        for (a, b) in primary.omega.iter().zip(&cross.omega) {
            assert!((a - b).norm() < 1e-5 * peak, "{} vs {}", a.re, b.re);
        }
    }

    #[test]
    fn real_path_rejects_detuned_channel() {
        let params =
            SystemParams::new(1.0, 0.5, vec![crate::model::CavityChannel::new(1.0, 0.3)]).unwrap();
        let wp = SineWavepacket::new(0.3, 1.0);
        let grid = TimeGrid::new(2.0, 200).unwrap();
        assert!(reconstruct_drive_real(&wp, &params, 0.05, &grid).is_err());
    }

    fn single_mode_wavepacket(params: &SystemParams<f64>) -> FourierWavepacket<f64> {
        let basis: FourierBasis<f64> = build_basis(2.5, 2.5 * 1.25, 8).unwrap();
        let mut coeff = DVector::from_element(basis.dim(), cr(0.0));
        // 0.45 sin(2 pi t / T_b), exactly representable
        coeff[basis.storage_index(1)] = Complex::new(0.0, -0.225);
        coeff[basis.storage_index(-1)] = Complex::new(0.0, 0.225);
        let vector = FourierVector::new(basis, coeff).unwrap();
        FourierWavepacket::with_cut(vector, params.clone(), None).unwrap()
    }

    #[test]
    fn fourier_wavepacket_derivative_consistency() {
        let params = lambda_unit();
        let wp = single_mode_wavepacket(&params);
        let h = 1e-5;
        for &t in &[0.3, 1.1, 2.2] {
            let fd = (wp.amplitude(1, 0, t + h).unwrap() - wp.amplitude(1, 0, t - h).unwrap())
                / Complex::new(2.0 * h, 0.0);
            let exact = wp.amplitude(1, 1, t).unwrap();
            assert!((fd - exact).norm() < 1e-8, "t = {t}");
        }
    }

    #[test]
    fn fourier_wavepacket_round_trip() {
        let params = lambda_unit();
        let wp = single_mode_wavepacket(&params);
        let ctx = DriveContext::new(0.0, 0.0, 0.0, 0.05).unwrap();
        let grid = TimeGrid::new(2.5, 2000).unwrap();
        let pulse = reconstruct_drive(&wp, &params, &ctx, &grid).unwrap();
        let report = verify_drive(&pulse, &params, &ctx, &wp).unwrap();
        assert!(report.dynamic_l2_error < 0.01, "L2 error {:.3e}", report.dynamic_l2_error);
    }

    #[test]
    fn low_pass_reports_removed_fraction() {
        let params = lambda_unit();
        let basis: FourierBasis<f64> = build_basis(2.5, 2.5 * 1.25, 8).unwrap();
        let mut coeff = DVector::from_element(basis.dim(), cr(0.0));
        coeff[basis.storage_index(1)] = cr(3.0);
        coeff[basis.storage_index(7)] = cr(4.0);
        let vector = FourierVector::new(basis, coeff).unwrap();
        let wp = FourierWavepacket::with_cut(vector, params, Some(4)).unwrap();
        assert!((wp.low_pass_delta() - 0.8).abs() < 1e-14);
        assert_eq!(wp.vector().coefficients[wp.vector().basis.storage_index(7)], cr(0.0));
    }

    #[test]
    fn pulse_interpolation_hits_samples() {
        let (params, wp, ctx) = lower_sine(2.5, 0.05);
        let grid = TimeGrid::new(2.5, 500).unwrap();
        let pulse = reconstruct_drive(&wp, &params, &ctx, &grid).unwrap();
        for i in (0..pulse.times.len()).step_by(97) {
            assert_eq!(pulse.sample_at(pulse.times[i]), pulse.omega[i]);
        }
        // clamped outside the window
        assert_eq!(pulse.sample_at(-1.0), pulse.omega[0]);
        assert_eq!(pulse.sample_at(99.0), *pulse.omega.last().unwrap());
    }
}
