//! The single-impurity Anderson model: run parameters, the logarithmically
//! discretized bath, thermal occupations and the driven impurity level.
//!
//! Orbital index 0 is the impurity; indices `1..=n_bath` are bath levels.
//! Energies are in eV, times in eV⁻¹ (ħ = 1).

use crate::error::{Error, Result};

/// Electron spin label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Spin {
    Alpha,
    Beta,
}

impl Spin {
    pub const BOTH: [Spin; 2] = [Spin::Alpha, Spin::Beta];

    pub fn index(self) -> usize {
        match self {
            Spin::Alpha => 0,
            Spin::Beta => 1,
        }
    }

    pub fn opposite(self) -> Spin {
        match self {
            Spin::Alpha => Spin::Beta,
            Spin::Beta => Spin::Alpha,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Spin::Alpha => 'a',
            Spin::Beta => 'b',
        }
    }
}

/// All physical and numerical parameters of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SiamConfig {
    /// Bare impurity level ε₀.
    pub epsilon0: f64,
    /// Total impurity-bath hybridization V; Σᵢ Vᵢ² = V².
    pub hybridization: f64,
    /// Hubbard repulsion U between opposite-spin impurity electrons.
    pub hubbard_u: f64,
    /// k_B T.
    pub temperature: f64,
    /// Bath dissipation strength γ.
    pub gamma: f64,
    /// Drive amplitude δε.
    pub delta_eps: f64,
    /// Drive angular frequency Ω.
    pub omega: f64,
    /// Logarithmic discretization parameter Λ > 1.
    pub lambda_disc: f64,
    /// Number of bath levels per spin (even).
    pub n_bath: usize,
    /// Band half-width D.
    pub band_halfwidth: f64,
    /// Fixed Runge-Kutta step.
    pub dt: f64,
    /// Propagation horizon.
    pub t_final: f64,
    pub init_imp_occ_alpha: f64,
    pub init_imp_occ_beta: f64,
    /// Relative singular-value cutoff of the TEBD propagator.
    pub svd_threshold: f64,
    pub max_bond: usize,
    /// Trotter step of the TEBD propagator.
    pub tebd_dt: f64,
    /// Time between recorded observables; must be a multiple of the step.
    pub record_interval: f64,
}

impl Default for SiamConfig {
    fn default() -> Self {
        Self {
            epsilon0: -0.08,
            hybridization: 0.04,
            hubbard_u: 0.1,
            temperature: 0.04,
            gamma: 0.0,
            delta_eps: 0.0,
            omega: 0.0,
            lambda_disc: 1.1,
            n_bath: 100,
            band_halfwidth: 1.0,
            dt: 0.01,
            t_final: 200.0,
            init_imp_occ_alpha: 1.0,
            init_imp_occ_beta: 0.0,
            svd_threshold: 1e-12,
            max_bond: 200,
            tebd_dt: 0.005,
            record_interval: 0.1,
        }
    }
}

fn invalid(key: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidConfig {
        key,
        reason: reason.into(),
    }
}

/// Number of whole steps of size `step` in `span`, if `span` is an integer
/// multiple of `step` up to round-off.
pub fn whole_steps(span: f64, step: f64) -> Option<usize> {
    let n = (span / step).round();
    if n < 0.0 || ((n * step) - span).abs() > 1e-9 * span.abs().max(step) {
        None
    } else {
        Some(n as usize)
    }
}

impl SiamConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("epsilon0", self.epsilon0),
            ("V", self.hybridization),
            ("U", self.hubbard_u),
            ("temperature", self.temperature),
            ("gamma", self.gamma),
            ("delta_eps", self.delta_eps),
            ("omega", self.omega),
            ("lambda_disc", self.lambda_disc),
            ("band_halfwidth", self.band_halfwidth),
            ("dt", self.dt),
            ("t_final", self.t_final),
            ("init_imp_occ_alpha", self.init_imp_occ_alpha),
            ("init_imp_occ_beta", self.init_imp_occ_beta),
            ("svd_threshold", self.svd_threshold),
            ("tebd_dt", self.tebd_dt),
            ("record_interval", self.record_interval),
        ];
        for (key, value) in finite {
            if !value.is_finite() {
                return Err(invalid(key, "must be finite"));
            }
        }
        if self.lambda_disc <= 1.0 {
            return Err(invalid("lambda_disc", "must be > 1"));
        }
        if self.n_bath == 0 || self.n_bath % 2 != 0 {
            return Err(invalid("n_bath", "must be a positive even integer"));
        }
        if self.band_halfwidth <= 0.0 {
            return Err(invalid("band_halfwidth", "must be > 0"));
        }
        if self.temperature < 0.0 {
            return Err(invalid("temperature", "must be >= 0"));
        }
        if self.gamma < 0.0 {
            return Err(invalid("gamma", "must be >= 0"));
        }
        if self.dt <= 0.0 {
            return Err(invalid("dt", "must be > 0"));
        }
        if self.tebd_dt <= 0.0 {
            return Err(invalid("tebd_dt", "must be > 0"));
        }
        if self.t_final < 0.0 {
            return Err(invalid("t_final", "must be >= 0"));
        }
        for (key, occ) in [
            ("init_imp_occ_alpha", self.init_imp_occ_alpha),
            ("init_imp_occ_beta", self.init_imp_occ_beta),
        ] {
            if !(0.0..=1.0).contains(&occ) {
                return Err(invalid(key, "must lie in [0, 1]"));
            }
        }
        if self.svd_threshold < 0.0 {
            return Err(invalid("svd_threshold", "must be >= 0"));
        }
        if self.max_bond == 0 {
            return Err(invalid("max_bond", "must be >= 1"));
        }
        if self.record_interval <= 0.0 {
            return Err(invalid("record_interval", "must be > 0"));
        }
        Ok(())
    }

    /// Number of orbitals per spin (impurity plus bath).
    pub fn n_orbitals(&self) -> usize {
        self.n_bath + 1
    }

    pub fn init_imp_occ(&self, spin: Spin) -> f64 {
        match spin {
            Spin::Alpha => self.init_imp_occ_alpha,
            Spin::Beta => self.init_imp_occ_beta,
        }
    }
}

/// Discretized bath levels and their couplings to the impurity.
#[derive(Debug, Clone, PartialEq)]
pub struct BathDiscretization {
    pub energies: Vec<f64>,
    pub couplings: Vec<f64>,
}

impl BathDiscretization {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }
}

/// Logarithmic discretization of a flat band of half-width D.
///
/// Each side of the band is split into `n_bath / 2` intervals
/// `[D Λ^-(n+1), D Λ^-n]`. A level sits at the interval midpoint and its
/// coupling carries the interval's share of the total hybridization,
/// `V_i = V sqrt(w_i / Σ w)`. Levels are listed as `+ε₀, -ε₀, +ε₁, -ε₁, ...`.
pub fn build_bath(config: &SiamConfig) -> Result<BathDiscretization> {
    if config.n_bath == 0 || config.n_bath % 2 != 0 {
        return Err(invalid("n_bath", "must be a positive even integer"));
    }
    if config.lambda_disc.is_nan() || config.lambda_disc <= 1.0 {
        return Err(invalid("lambda_disc", "must be > 1"));
    }
    let d = config.band_halfwidth;
    let lambda = config.lambda_disc;
    let half = config.n_bath / 2;

    let mut energies = Vec::with_capacity(config.n_bath);
    let mut widths = Vec::with_capacity(config.n_bath);
    for n in 0..half {
        let upper = d * lambda.powi(-(n as i32));
        let lower = d * lambda.powi(-(n as i32 + 1));
        let mid = 0.5 * (upper + lower);
        let width = upper - lower;
        energies.extend([mid, -mid]);
        widths.extend([width, width]);
    }
    let total: f64 = widths.iter().sum();
    let couplings = widths
        .iter()
        .map(|w| config.hybridization * (w / total).sqrt())
        .collect();
    Ok(BathDiscretization {
        energies,
        couplings,
    })
}

/// Fermi-Dirac occupation at zero chemical potential.
pub fn occupation(eps: f64, temperature: f64) -> f64 {
    if temperature == 0.0 {
        return if eps < 0.0 {
            1.0
        } else if eps > 0.0 {
            0.0
        } else {
            0.5
        };
    }
    let x = eps / temperature;
    if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// Driven impurity level ε₀ + δε sin(Ωt).
pub fn impurity_level(t: f64, config: &SiamConfig) -> f64 {
    config.epsilon0 + config.delta_eps * (config.omega * t).sin()
}

/// Per spin-orbital thermal occupations `v` and their complements `u = 1 - v`
/// defining the reference state of the quench.
#[derive(Debug, Clone, PartialEq)]
pub struct Occupations {
    v: [Vec<f64>; 2],
    u: [Vec<f64>; 2],
}

impl Occupations {
    /// Bath levels at Fermi-Dirac filling, impurity at the configured
    /// initial occupations.
    pub fn reference(config: &SiamConfig, bath: &BathDiscretization) -> Self {
        let per_spin = |spin: Spin| {
            let mut v = Vec::with_capacity(bath.len() + 1);
            v.push(config.init_imp_occ(spin));
            v.extend(
                bath.energies
                    .iter()
                    .map(|&e| occupation(e, config.temperature)),
            );
            v
        };
        Self::from_v([per_spin(Spin::Alpha), per_spin(Spin::Beta)])
    }

    pub fn from_v(v: [Vec<f64>; 2]) -> Self {
        let u = [
            v[0].iter().map(|x| 1.0 - x).collect(),
            v[1].iter().map(|x| 1.0 - x).collect(),
        ];
        Self { v, u }
    }

    pub fn v(&self, spin: Spin) -> &[f64] {
        &self.v[spin.index()]
    }

    pub fn u(&self, spin: Spin) -> &[f64] {
        &self.u[spin.index()]
    }

    pub fn n_orbitals(&self) -> usize {
        self.v[0].len()
    }
}
