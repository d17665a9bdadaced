//! System parameters and the derived scalar figures of merit.
//!
//! All rates are stored in one common angular-frequency unit and all times in
//! its inverse. The conventional choice (used by the CLI) is `kappa = 1`.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// One emitter transition the cavity couples to: the occupied-cavity state
/// `|g_j, 1_j>` with coupling `g_j` and detuning `delta_gj` from the
/// reference level.
#[derive(Debug, Clone, PartialEq)]
pub struct CavityChannel<T: Real> {
    /// Coupling rate g_j. Real and nonzero; negative signs are allowed.
    pub g: T,
    /// Detuning of the occupied-cavity state from the reference level.
    pub delta_g: T,
    /// Opaque tag for reporting only (e.g. a polarization label).
    pub polarization_label: String,
}

impl<T: Real> CavityChannel<T> {
    pub fn new(g: T, delta_g: T) -> Self {
        Self { g, delta_g, polarization_label: String::new() }
    }

    pub fn with_label(g: T, delta_g: T, label: &str) -> Self {
        Self { g, delta_g, polarization_label: label.to_string() }
    }
}

/// Emitter-cavity system: cavity decay `kappa`, spontaneous-emission decay
/// `gamma`, and the ordered list of coupled channels. Channel 1 (index 0)
/// is the reference channel for all Fourier conversions.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams<T: Real> {
    kappa: T,
    gamma: T,
    channels: Vec<CavityChannel<T>>,
}

impl<T: Real> SystemParams<T> {
    pub fn new(kappa: T, gamma: T, channels: Vec<CavityChannel<T>>) -> Result<Self> {
        if !(kappa > T::zero()) {
            return Err(Error::InvalidParams("kappa must be positive".into()));
        }
        if !(gamma > T::zero()) {
            return Err(Error::InvalidParams("gamma must be positive".into()));
        }
        if channels.is_empty() {
            return Err(Error::InvalidParams("at least one channel is required".into()));
        }
        for (i, ch) in channels.iter().enumerate() {
            if ch.g == T::zero() {
                return Err(Error::InvalidParams(format!("channel {} has zero coupling", i + 1)));
            }
        }
        Ok(Self { kappa, gamma, channels })
    }

    /// Convenience constructor for the three-level Lambda system.
    pub fn lambda(kappa: T, gamma: T, g: T) -> Result<Self> {
        Self::new(kappa, gamma, vec![CavityChannel::new(g, T::zero())])
    }

    pub fn kappa(&self) -> T {
        self.kappa
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn channels(&self) -> &[CavityChannel<T>] {
        &self.channels
    }

    /// Number of channels j_M.
    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    /// Channel by 1-based index.
    pub fn channel(&self, j: usize) -> Result<&CavityChannel<T>> {
        if j == 0 || j > self.channels.len() {
            return Err(Error::ChannelIndex { index: j, count: self.channels.len() });
        }
        Ok(&self.channels[j - 1])
    }

    /// Largest detuning magnitude over all channels.
    pub fn delta_max(&self) -> T {
        self.channels
            .iter()
            .map(|ch| ch.delta_g.abs())
            .fold(T::zero(), |a, b| if b > a { b } else { a })
    }

    /// Shift all channel detunings so their coupling-weighted mean is zero.
    /// The reference level is best chosen near the centre of the manifold.
    pub fn centered_detunings(&self) -> Self {
        let wsum: T = self.channels.iter().map(|ch| ch.g * ch.g).fold(T::zero(), |a, b| a + b);
        let mean: T = self
            .channels
            .iter()
            .map(|ch| ch.g * ch.g * ch.delta_g)
            .fold(T::zero(), |a, b| a + b)
            / wsum;
        let mut out = self.clone();
        for ch in &mut out.channels {
            ch.delta_g -= mean;
        }
        out
    }
}

/// Per-channel cooperativity C_j = g_j^2 / (2 kappa gamma).
pub fn cooperativity<T: Real>(params: &SystemParams<T>, j: usize) -> Result<T> {
    let ch = params.channel(j)?;
    let two = T::of(2.0);
    Ok(ch.g * ch.g / (two * params.kappa() * params.gamma()))
}

/// Critical time max(kappa / g^2, 1 / kappa) for the Lambda system.
pub fn critical_time<T: Real>(params: &SystemParams<T>) -> Result<T> {
    if params.channel_count() != 1 {
        return Err(Error::UnsupportedConfiguration(
            "critical time is defined for the single-channel Lambda system".into(),
        ));
    }
    let g = params.channels()[0].g;
    let a = params.kappa() / (g * g);
    let b = T::one() / params.kappa();
    Ok(if a > b { a } else { b })
}

/// Adiabatic extraction limit 2C / (2C + 1) for the Lambda system.
pub fn adiabatic_limit<T: Real>(params: &SystemParams<T>) -> Result<T> {
    if params.channel_count() != 1 {
        return Err(Error::UnsupportedConfiguration(
            "adiabatic limit is defined for the single-channel Lambda system".into(),
        ));
    }
    let two_c = T::of(2.0) * cooperativity(params, 1)?;
    Ok(two_c / (two_c + T::one()))
}

/// Infinite-time extraction probability for instant excitation,
/// [kappa / (kappa + gamma)] * 2C / (2C + 1).
pub fn instant_excitation_limit<T: Real>(params: &SystemParams<T>) -> Result<T> {
    let adiabatic = adiabatic_limit(params)?;
    Ok(params.kappa() / (params.kappa() + params.gamma()) * adiabatic)
}

/// Derived scalar quantities for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedQuantities<T: Real> {
    /// Cooperativity of the reference channel.
    pub c: T,
    /// Per-channel cooperativities.
    pub c_j: Vec<T>,
    /// Critical time (Lambda systems only).
    pub t_crit: Option<T>,
    /// Adiabatic extraction limit (Lambda systems only).
    pub p_adiabatic: Option<T>,
    /// Instant-excitation limit (Lambda systems only).
    pub p_instant: Option<T>,
    /// Effective degenerate coupling, g_eff^2 = sum_j g_j^2.
    pub g_eff: T,
}

impl<T: Real> DerivedQuantities<T> {
    pub fn from_params(params: &SystemParams<T>) -> Result<Self> {
        let c_j: Vec<T> = (1..=params.channel_count())
            .map(|j| cooperativity(params, j))
            .collect::<Result<_>>()?;
        let single = params.channel_count() == 1;
        let g_eff_sq: T =
            params.channels().iter().map(|ch| ch.g * ch.g).fold(T::zero(), |a, b| a + b);
        Ok(Self {
            c: c_j[0],
            c_j,
            t_crit: if single { Some(critical_time(params)?) } else { None },
            p_adiabatic: if single { Some(adiabatic_limit(params)?) } else { None },
            p_instant: if single { Some(instant_excitation_limit(params)?) } else { None },
            g_eff: g_eff_sq.sqrt(),
        })
    }
}
