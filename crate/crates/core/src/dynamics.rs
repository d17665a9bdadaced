//! Time-domain integration of the non-Hermitian emitter-cavity equations of
//! motion under an arbitrary drive. Serves as the verification oracle for the
//! Fourier-domain machinery and produces the comparison curves.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::scalar::{c, cr, Real};

/// Conservation drift above which integration aborts with an accuracy error.
const CONSERVATION_LIMIT: f64 = 1e-6;

/// Drive-independent context of an integration or reconstruction run.
#[derive(Debug, Clone, Copy)]
pub struct DriveContext<T: Real> {
    pub delta_u: T,
    pub delta_e: T,
    /// Phase of the initial u/e superposition used by drive reconstruction.
    pub theta_0: T,
    /// Amplitude margin in (0, 1) applied before drive reconstruction.
    pub chi: T,
}

impl<T: Real> DriveContext<T> {
    pub fn new(delta_u: T, delta_e: T, theta_0: T, chi: T) -> Result<Self> {
        if !(chi > T::zero() && chi < T::one()) {
            return Err(Error::InvalidParams(format!(
                "chi must lie in (0, 1); got {:e}",
                chi.as_f64()
            )));
        }
        if theta_0 < T::zero() || theta_0 >= T::two_pi() {
            return Err(Error::InvalidParams(format!(
                "theta_0 must lie in [0, 2 pi); got {:e}",
                theta_0.as_f64()
            )));
        }
        Ok(Self { delta_u, delta_e, theta_0, chi })
    }

    /// Resonant context with the default bound-wavepacket margin.
    pub fn resonant() -> Self {
        Self { delta_u: T::zero(), delta_e: T::zero(), theta_0: T::zero(), chi: T::of(0.02) }
    }
}

/// Uniform integration grid: `steps` fixed steps on `[0, t_end]`, recording
/// every `record_stride`-th state (the endpoint is always recorded).
#[derive(Debug, Clone, Copy)]
pub struct TimeGrid<T: Real> {
    pub t_end: T,
    pub steps: usize,
    pub record_stride: usize,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(t_end: T, steps: usize) -> Result<Self> {
        if !(t_end > T::zero()) || steps == 0 {
            return Err(Error::InvalidParams("grid needs t_end > 0 and at least one step".into()));
        }
        Ok(Self { t_end, steps, record_stride: 1 })
    }

    pub fn with_stride(mut self, record_stride: usize) -> Self {
        self.record_stride = record_stride.max(1);
        self
    }

    /// Default resolution: 10^4 steps per extraction window.
    pub fn default_for(t_end: T) -> Result<Self> {
        Self::new(t_end, 10_000)
    }
}

/// Initial state amplitudes; total probability must not exceed one.
#[derive(Debug, Clone)]
pub struct InitialState<T: Real> {
    pub alpha_u: Complex<T>,
    pub alpha_e: Complex<T>,
    pub alpha_g: Vec<Complex<T>>,
}

impl<T: Real> InitialState<T> {
    /// All population in the uninverted ground state.
    pub fn uninverted(channels: usize) -> Self {
        Self {
            alpha_u: cr(T::one()),
            alpha_e: cr(T::zero()),
            alpha_g: vec![cr(T::zero()); channels],
        }
    }

    /// All population in the excited state.
    pub fn excited(channels: usize) -> Self {
        Self {
            alpha_u: cr(T::zero()),
            alpha_e: cr(T::one()),
            alpha_g: vec![cr(T::zero()); channels],
        }
    }

    fn norm(&self) -> T {
        self.alpha_u.norm_sqr()
            + self.alpha_e.norm_sqr()
            + self.alpha_g.iter().map(|z| z.norm_sqr()).fold(T::zero(), |a, b| a + b)
    }
}

/// Sampled solution of the equations of motion with the loss accumulators.
#[derive(Debug, Clone)]
pub struct Trajectory<T: Real> {
    pub times: Vec<T>,
    pub alpha_u: Vec<Complex<T>>,
    pub alpha_e: Vec<Complex<T>>,
    /// Outer index: channel (0-based); inner: sample.
    pub alpha_g: Vec<Vec<Complex<T>>>,
    /// Accumulated emission per channel, same layout as `alpha_g`.
    pub p_kappa_j: Vec<Vec<T>>,
    /// Accumulated spontaneous loss.
    pub p_gamma: Vec<T>,
}

impl<T: Real> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Total accumulated emission across channels at sample `i`.
    pub fn total_emission(&self, i: usize) -> T {
        self.p_kappa_j.iter().map(|ch| ch[i]).fold(T::zero(), |a, b| a + b)
    }

    /// Probability bookkeeping residual at sample `i` relative to the
    /// initial norm.
    pub fn conservation_residual(&self, i: usize, initial_norm: T) -> T {
        let state = self.alpha_u[i].norm_sqr()
            + self.alpha_e[i].norm_sqr()
            + self.alpha_g.iter().map(|ch| ch[i].norm_sqr()).fold(T::zero(), |a, b| a + b);
        state + self.total_emission(i) + self.p_gamma[i] - initial_norm
    }

    /// CSV rows: t, re/im of every amplitude, per-channel emission, loss.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "t,re_alpha_u,im_alpha_u,re_alpha_e,im_alpha_e")?;
        for j in 1..=self.alpha_g.len() {
            write!(out, ",re_alpha_g{j},im_alpha_g{j}")?;
        }
        for j in 1..=self.alpha_g.len() {
            write!(out, ",p_kappa_{j}")?;
        }
        writeln!(out, ",p_gamma")?;
        for i in 0..self.len() {
            write!(
                out,
                "{:.11e},{:.11e},{:.11e},{:.11e},{:.11e}",
                self.times[i].as_f64(),
                self.alpha_u[i].re.as_f64(),
                self.alpha_u[i].im.as_f64(),
                self.alpha_e[i].re.as_f64(),
                self.alpha_e[i].im.as_f64()
            )?;
            for ch in &self.alpha_g {
                write!(out, ",{:.11e},{:.11e}", ch[i].re.as_f64(), ch[i].im.as_f64())?;
            }
            for ch in &self.p_kappa_j {
                write!(out, ",{:.11e}", ch[i].as_f64())?;
            }
            writeln!(out, ",{:.11e}", self.p_gamma[i].as_f64())?;
        }
        Ok(())
    }
}

// State layout: [alpha_u, alpha_e, alpha_g 0.., P_kappa 0.., P_gamma];
// the real accumulators ride along as complex numbers with zero imaginary
// part so one RK4 kernel serves everything.
struct Eom<'a, T: Real, F> {
    params: &'a SystemParams<T>,
    ctx: &'a DriveContext<T>,
    drive: &'a F,
}

impl<'a, T: Real, F: Fn(T) -> Complex<T>> Eom<'a, T, F> {
    fn derivative(&self, t: T, s: &[Complex<T>], out: &mut [Complex<T>]) {
        let p = self.params;
        let jm = p.channel_count();
        let omega = (self.drive)(t);
        let i = c(T::zero(), T::one());
        let two = T::of(2.0);

        out[0] = -i * cr(self.ctx.delta_u) * s[0] - omega.conj() * s[1];
        let mut coupling = cr(T::zero());
        for (j, ch) in p.channels().iter().enumerate() {
            coupling += cr(ch.g) * s[2 + j];
        }
        out[1] = -c(p.gamma(), self.ctx.delta_e) * s[1] + omega * s[0] + coupling;
        for (j, ch) in p.channels().iter().enumerate() {
            out[2 + j] = -c(p.kappa(), ch.delta_g) * s[2 + j] - cr(ch.g) * s[1];
            out[2 + jm + j] = cr(two * p.kappa() * s[2 + j].norm_sqr());
        }
        out[2 + 2 * jm] = cr(two * p.gamma() * s[1].norm_sqr());
    }
}

/// Fixed-step classical fourth-order integration of the equations of motion
/// under the callback drive `Omega(t)`.
pub fn integrate<T: Real, F: Fn(T) -> Complex<T>>(
    params: &SystemParams<T>,
    ctx: &DriveContext<T>,
    drive: F,
    initial: &InitialState<T>,
    grid: &TimeGrid<T>,
) -> Result<Trajectory<T>> {
    let jm = params.channel_count();
    if initial.alpha_g.len() != jm {
        return Err(Error::DimensionMismatch { expected: jm, got: initial.alpha_g.len() });
    }
    let initial_norm = initial.norm();
    if initial_norm > T::one() + T::of(1e-12) {
        return Err(Error::InvalidParams(format!(
            "initial probability {:e} exceeds one",
            initial_norm.as_f64()
        )));
    }

    let dim = 2 * jm + 3;
    let mut state: Vec<Complex<T>> = Vec::with_capacity(dim);
    state.push(initial.alpha_u);
    state.push(initial.alpha_e);
    state.extend_from_slice(&initial.alpha_g);
    state.resize(dim, cr(T::zero()));

    let eom = Eom { params, ctx, drive: &drive };
    let h = grid.t_end / T::of(grid.steps as f64);
    let half = T::of(0.5);
    let sixth = T::one() / T::of(6.0);

    let mut k1 = vec![cr(T::zero()); dim];
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    let mut tmp = k1.clone();

    let mut traj = Trajectory {
        times: Vec::new(),
        alpha_u: Vec::new(),
        alpha_e: Vec::new(),
        alpha_g: vec![Vec::new(); jm],
        p_kappa_j: vec![Vec::new(); jm],
        p_gamma: Vec::new(),
    };
    let record = |t: T, s: &[Complex<T>], traj: &mut Trajectory<T>| {
        traj.times.push(t);
        traj.alpha_u.push(s[0]);
        traj.alpha_e.push(s[1]);
        for j in 0..jm {
            traj.alpha_g[j].push(s[2 + j]);
            traj.p_kappa_j[j].push(s[2 + jm + j].re);
        }
        traj.p_gamma.push(s[2 + 2 * jm].re);
    };
    let conservation = |s: &[Complex<T>]| -> T {
        let mut total = s[0].norm_sqr() + s[1].norm_sqr();
        for j in 0..jm {
            total += s[2 + j].norm_sqr() + s[2 + jm + j].re;
        }
        total + s[2 + 2 * jm].re - initial_norm
    };

    record(T::zero(), &state, &mut traj);
    for step in 0..grid.steps {
        let t = h * T::of(step as f64);
        eom.derivative(t, &state, &mut k1);
        for i in 0..dim {
            tmp[i] = state[i] + k1[i] * cr(half * h);
        }
        eom.derivative(t + half * h, &tmp, &mut k2);
        for i in 0..dim {
            tmp[i] = state[i] + k2[i] * cr(half * h);
        }
        eom.derivative(t + half * h, &tmp, &mut k3);
        for i in 0..dim {
            tmp[i] = state[i] + k3[i] * cr(h);
        }
        eom.derivative(t + h, &tmp, &mut k4);
        for i in 0..dim {
            state[i] += (k1[i] + (k2[i] + k3[i]) * cr(T::of(2.0)) + k4[i]) * cr(sixth * h);
        }

        let drift = conservation(&state).abs();
        if drift > T::of(CONSERVATION_LIMIT) {
            return Err(Error::Accuracy(format!(
                "conservation drift {:e} at t = {:e}; use a finer grid",
                drift.as_f64(),
                (t + h).as_f64()
            )));
        }
        if (step + 1) % grid.record_stride == 0 || step + 1 == grid.steps {
            record(h * T::of((step + 1) as f64), &state, &mut traj);
        }
    }
    Ok(traj)
}

/// Evolution after an instantaneous transfer to the excited state at `t = 0`
/// with the drive off.
pub fn instant_excitation<T: Real>(
    params: &SystemParams<T>,
    grid: &TimeGrid<T>,
) -> Result<Trajectory<T>> {
    let ctx = DriveContext::resonant();
    let initial = InitialState::excited(params.channel_count());
    integrate(params, &ctx, |_| cr(T::zero()), &initial, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::instant_excitation_limit;
    use approx::assert_relative_eq;

    fn lambda(kappa: f64, gamma: f64, g: f64) -> SystemParams<f64> {
        SystemParams::lambda(kappa, gamma, g).unwrap()
    }

    #[test]
    fn undriven_uninverted_state_is_stationary() {
        let p = lambda(1.0, 0.5, 1.0);
        let ctx = DriveContext::new(0.7, 0.0, 0.0, 0.02).unwrap();
        let grid = TimeGrid::new(5.0, 2000).unwrap();
        let traj =
            integrate(&p, &ctx, |_| Complex::new(0.0, 0.0), &InitialState::uninverted(1), &grid)
                .unwrap();
        for i in 0..traj.len() {
            assert_relative_eq!(traj.alpha_u[i].norm_sqr(), 1.0, max_relative = 1e-10);
            assert!(traj.alpha_e[i].norm_sqr() < 1e-20);
            assert!(traj.total_emission(i) < 1e-20);
            // phase advances as e^{-i Delta_u t}
            let expected = Complex::from_polar(1.0, -0.7 * traj.times[i]);
            assert!((traj.alpha_u[i] - expected).norm() < 1e-8);
        }
    }

    #[test]
    fn instant_excitation_initial_sample() {
        let p = lambda(1.0, 0.5, 1.0);
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let traj = instant_excitation(&p, &grid).unwrap();
        assert_eq!(traj.alpha_e[0], Complex::new(1.0, 0.0));
        assert_eq!(traj.alpha_u[0], Complex::new(0.0, 0.0));
        assert_eq!(traj.p_gamma[0], 0.0);
    }

    #[test]
    fn instant_excitation_matched_rates() {
        // kappa = g, gamma = g/2: long-time emission 4/9
        let p = lambda(1.0, 0.5, 1.0);
        let grid = TimeGrid::new(100.0, 20_000).unwrap().with_stride(100);
        let traj = instant_excitation(&p, &grid).unwrap();
        let last = traj.len() - 1;
        let expected = instant_excitation_limit(&p).unwrap();
        assert_relative_eq!(expected, 4.0 / 9.0, max_relative = 1e-12);
        assert!((traj.total_emission(last) - expected).abs() / expected < 0.005);
    }

    #[test]
    fn instant_excitation_bad_cavity() {
        // kappa = 10 g, gamma = g/20: long-time emission ~ 0.6634
        let p = lambda(10.0, 0.05, 1.0);
        let grid = TimeGrid::new(150.0, 40_000).unwrap().with_stride(200);
        let traj = instant_excitation(&p, &grid).unwrap();
        let last = traj.len() - 1;
        let expected = instant_excitation_limit(&p).unwrap();
        assert_relative_eq!(expected, 0.66335, max_relative = 1e-4);
        assert!((traj.total_emission(last) - expected).abs() / expected < 0.005);
    }

    #[test]
    fn instant_excitation_strong_spontaneous() {
        // kappa = g/10, gamma = 5 g: the "particularly limiting" regime
        let p = lambda(0.1, 5.0, 1.0);
        let grid = TimeGrid::new(1000.0, 200_000).unwrap().with_stride(1000);
        let traj = instant_excitation(&p, &grid).unwrap();
        let last = traj.len() - 1;
        let expected = instant_excitation_limit(&p).unwrap();
        assert_relative_eq!(expected, (0.1 / 5.1) * (2.0 / 3.0), max_relative = 1e-12);
        assert!((traj.total_emission(last) - expected).abs() / expected < 0.005);
    }

    #[test]
    fn conservation_under_complex_drive() {
        let p = lambda(1.0, 0.5, 1.0);
        let ctx = DriveContext::new(0.3, -0.2, 0.0, 0.02).unwrap();
        let grid = TimeGrid::new(8.0, 10_000).unwrap().with_stride(50);
        let drive = |t: f64| Complex::new((0.9 * t).sin(), 0.4 * (1.3 * t).cos());
        let traj = integrate(&p, &ctx, drive, &InitialState::uninverted(1), &grid).unwrap();
        for i in 0..traj.len() {
            assert!(traj.conservation_residual(i, 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn fourth_order_step_halving() {
        let p = lambda(1.0, 0.5, 1.0);
        let ctx = DriveContext::new(0.0, 0.0, 0.0, 0.02).unwrap();
        let drive = |t: f64| Complex::new((0.8 * t).sin(), 0.0);
        let run = |steps: usize| {
            let grid = TimeGrid::new(6.0, steps).unwrap().with_stride(steps);
            let traj = integrate(&p, &ctx, drive, &InitialState::uninverted(1), &grid).unwrap();
            traj.total_emission(traj.len() - 1)
        };
        let coarse = run(10_000);
        let fine = run(20_000);
        assert!((coarse - fine).abs() < 1e-8, "halving moved result by {:e}", coarse - fine);
    }

    #[test]
    fn resonant_real_drive_keeps_amplitudes_real() {
        let p = lambda(1.0, 0.5, 1.0);
        let ctx = DriveContext::new(0.0, 0.0, 0.0, 0.02).unwrap();
        let drive = |t: f64| Complex::new(0.7 * (0.5 * t).sin(), 0.0);
        let grid = TimeGrid::new(6.0, 8000).unwrap().with_stride(40);
        let traj = integrate(&p, &ctx, drive, &InitialState::uninverted(1), &grid).unwrap();
        for i in 0..traj.len() {
            assert!(traj.alpha_u[i].im.abs() < 1e-12);
            assert!(traj.alpha_e[i].im.abs() < 1e-12);
            assert!(traj.alpha_g[0][i].im.abs() < 1e-12);
        }
    }

    #[test]
    fn linear_drives_approach_adiabatic_from_below() {
        let p = lambda(1.0, 0.5, 1.0);
        let ctx = DriveContext::new(0.0, 0.0, 0.0, 0.02).unwrap();
        let best_for = |t_end: f64| {
            let mut best: f64 = 0.0;
            for k in 1..=12 {
                let r = 0.02 * k as f64;
                let drive = move |t: f64| Complex::new(r * t, 0.0);
                let steps = (t_end * 1000.0) as usize;
                let grid = TimeGrid::new(t_end, steps).unwrap().with_stride(steps);
                let traj =
                    integrate(&p, &ctx, drive, &InitialState::uninverted(1), &grid).unwrap();
                best = best.max(traj.total_emission(traj.len() - 1));
            }
            best
        };
        let short = best_for(10.0);
        let long = best_for(40.0);
        assert!(long > short, "longer window should extract more");
        assert!(long < 2.0 / 3.0, "linear drive stays below the adiabatic limit");
        assert!(long > 0.55, "long linear drive should approach 2/3; got {long}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = lambda(1.0, 0.5, 1.0);
        assert!(DriveContext::new(0.0, 0.0, 0.0, 0.0).is_err());
        assert!(DriveContext::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(DriveContext::new(0.0, 0.0, 7.0, 0.1).is_err());
        let ctx = DriveContext::resonant();
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let mut init = InitialState::uninverted(1);
        init.alpha_e = Complex::new(0.5, 0.0); // total norm 1.25
        assert!(integrate(&p, &ctx, |_| Complex::new(0.0, 0.0), &init, &grid).is_err());
        let wrong = InitialState::uninverted(2);
        assert!(integrate(&p, &ctx, |_| Complex::new(0.0, 0.0), &wrong, &grid).is_err());
    }

    #[test]
    fn oversized_steps_raise_accuracy_error() {
        let p = lambda(1.0, 0.5, 1.0);
        let ctx = DriveContext::resonant();
        let grid = TimeGrid::new(50.0, 20).unwrap();
        let drive = |_t: f64| Complex::new(30.0, 0.0);
        match integrate(&p, &ctx, drive, &InitialState::uninverted(1), &grid) {
            Err(Error::Accuracy(_)) => {}
            other => panic!("expected accuracy error, got {other:?}"),
        }
    }

    #[test]
    fn csv_export_shape() {
        let p = lambda(1.0, 0.5, 1.0);
        let grid = TimeGrid::new(1.0, 100).unwrap().with_stride(10);
        let traj = instant_excitation(&p, &grid).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), traj.len() + 1);
        assert!(lines[0].starts_with("t,re_alpha_u"));
        assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
    }
}
