//! Brute-force reference propagator over the full doubled Fock space.
//!
//! Everything here is written in the original ladder operators `a, ã` and
//! never touches the quasi-particle code paths, except [`projection_oracle`],
//! which realizes a given `Ĥ′` as a matrix to check the equation generator.
//!
//! Mode layout: spin-orbitals site-major (α impurity, α bath, β impurity,
//! β bath), each contributing its non-tilde mode and then its tilde mode.

use num_complex::Complex64;

use crate::dmcc::{ClusterAmplitudes, PairBlock, Residuals};
use crate::error::{Error, Result};
use crate::fock::{FermionOperator, ModeOp, SparseMatrix};
use crate::model::{build_bath, impurity_level, BathDiscretization, Occupations, SiamConfig, Spin};
use crate::observables::total_number;
use crate::thermofield::{OperatorSymbol, OrbitalIndex, SuperHamiltonian};
use crate::trajectory::{schedule, TrajectoryRecord, TrajectorySample};

/// Largest bath for which the dense matrices are built at all.
pub const MAX_DENSE_BATH: usize = 4;
/// Largest bath accepted for time propagation.
pub const MAX_PROPAGATION_BATH: usize = 3;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockBasis {
    n_orbitals: usize,
}

impl FockBasis {
    pub fn new(n_orbitals: usize) -> Result<Self> {
        if n_orbitals == 0 || n_orbitals > MAX_DENSE_BATH + 1 {
            return Err(Error::Capacity(format!(
                "dense Fock space supports at most {MAX_DENSE_BATH} bath levels, got {}",
                n_orbitals.saturating_sub(1)
            )));
        }
        Ok(Self { n_orbitals })
    }

    pub fn n_orbitals(&self) -> usize {
        self.n_orbitals
    }

    pub fn n_modes(&self) -> usize {
        4 * self.n_orbitals
    }

    pub fn dim(&self) -> usize {
        1 << self.n_modes()
    }

    pub fn mode(&self, spin: Spin, orbital: usize, tilde: bool) -> usize {
        2 * (spin.index() * self.n_orbitals + orbital) + tilde as usize
    }

    fn op(&self, dagger: bool, tilde: bool, spin: Spin, orbital: usize) -> ModeOp {
        ModeOp {
            mode: self.mode(spin, orbital, tilde),
            dagger,
        }
    }

    /// `a†a` (or `ã†ã`).
    fn number(&self, tilde: bool, spin: Spin, orbital: usize) -> Vec<ModeOp> {
        vec![
            self.op(true, tilde, spin, orbital),
            self.op(false, tilde, spin, orbital),
        ]
    }

    fn occupied(&self, state: usize, mode: usize) -> bool {
        state & (1 << (self.n_modes() - 1 - mode)) != 0
    }

    /// Components of the unit bra `⟨1| = ⟨0| Π (1 + ã_i a_i)`, built by
    /// applying `Π (1 + a†_i ã†_i)` to the vacuum.
    pub fn unit(&self) -> Vec<Complex64> {
        let mut v = vec![ZERO; self.dim()];
        v[0] = ONE;
        for spin in Spin::BOTH {
            for i in 0..self.n_orbitals {
                let pair = FermionOperator::identity().plus(&FermionOperator::term(
                    ONE,
                    vec![self.op(true, false, spin, i), self.op(true, true, spin, i)],
                ));
                v = pair.apply(self.n_modes(), &v);
            }
        }
        v
    }
}

/// The density-matrix ket over the doubled Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    basis: FockBasis,
    unit: Vec<Complex64>,
    pub amplitudes: Vec<Complex64>,
}

impl DenseState {
    pub fn basis(&self) -> FockBasis {
        self.basis
    }

    /// `⟨1|ρ⟩`.
    pub fn trace(&self) -> Complex64 {
        self.unit.iter().zip(&self.amplitudes).map(|(u, r)| u * r).sum()
    }

    /// `⟨1|a†_iσ a_iσ|ρ⟩`.
    pub fn number(&self, spin: Spin, orbital: usize) -> f64 {
        let mode = self.basis.mode(spin, orbital, false);
        self.unit
            .iter()
            .zip(&self.amplitudes)
            .enumerate()
            .filter(|(b, _)| self.basis.occupied(*b, mode))
            .map(|(_, (u, r))| u * r)
            .sum::<Complex64>()
            .re
    }

    pub fn numbers(&self) -> [Vec<f64>; 2] {
        Spin::BOTH.map(|s| (0..self.basis.n_orbitals).map(|i| self.number(s, i)).collect())
    }

    /// `⟨1|O|ρ⟩` for an arbitrary operator.
    pub fn expectation(&self, op: &FermionOperator) -> Complex64 {
        let image = op.apply(self.basis.n_modes(), &self.amplitudes);
        self.unit.iter().zip(&image).map(|(u, r)| u * r).sum()
    }
}

/// `Π (u_i + v_i a†_i ã†_i)|0⟩` over all spin-orbitals, so that
/// `⟨1|ρ₀⟩ = 1` and `⟨a†_i a_i⟩ = v_i`.
pub fn build_thermal_ket(occ: &Occupations) -> Result<DenseState> {
    let basis = FockBasis::new(occ.n_orbitals())?;
    let mut v = vec![ZERO; basis.dim()];
    v[0] = ONE;
    for spin in Spin::BOTH {
        for i in 0..basis.n_orbitals {
            let mut pair = FermionOperator::zero();
            pair.add_term(re(occ.u(spin)[i]), Vec::new());
            pair.add_term(
                re(occ.v(spin)[i]),
                vec![basis.op(true, false, spin, i), basis.op(true, true, spin, i)],
            );
            v = pair.apply(basis.n_modes(), &v);
        }
    }
    Ok(DenseState {
        basis,
        unit: basis.unit(),
        amplitudes: v,
    })
}

/// `H − H̃ + D̂` with the impurity level set to zero; the level enters
/// through [`level_operator`].
fn static_generator(
    config: &SiamConfig,
    bath: &BathDiscretization,
    occ: &Occupations,
    basis: FockBasis,
) -> FermionOperator {
    let mut g = FermionOperator::zero();
    let n = basis.n_orbitals;
    for spin in Spin::BOTH {
        for tilde in [false, true] {
            let sign = if tilde { -1.0 } else { 1.0 };
            for i in 1..n {
                g.add_term(re(sign * bath.energies[i - 1]), basis.number(tilde, spin, i));
                let vi = re(sign * bath.couplings[i - 1]);
                g.add_term(
                    vi,
                    vec![basis.op(true, tilde, spin, 0), basis.op(false, tilde, spin, i)],
                );
                g.add_term(
                    vi,
                    vec![basis.op(true, tilde, spin, i), basis.op(false, tilde, spin, 0)],
                );
            }
        }
        // dissipator on the bath, detailed balance at the bath temperature
        if config.gamma != 0.0 {
            let mi = Complex64::new(0.0, -1.0);
            for i in 1..n {
                let v = occ.v(spin)[i];
                let g1 = config.gamma * (1.0 - v);
                let g2 = config.gamma * v;
                g.add_term(mi * (g1 - g2), basis.number(false, spin, i));
                g.add_term(mi * (g1 - g2), basis.number(true, spin, i));
                g.add_term(
                    mi * (-2.0 * g1),
                    vec![basis.op(false, true, spin, i), basis.op(false, false, spin, i)],
                );
                g.add_term(
                    mi * (2.0 * g2),
                    vec![basis.op(true, true, spin, i), basis.op(true, false, spin, i)],
                );
                g.add_term(mi * (2.0 * g2), Vec::new());
            }
        }
    }
    if config.hubbard_u != 0.0 {
        for (tilde, sign) in [(false, 1.0), (true, -1.0)] {
            let mut ops = basis.number(tilde, Spin::Alpha, 0);
            ops.extend(basis.number(tilde, Spin::Beta, 0));
            g.add_term(re(sign * config.hubbard_u), ops);
        }
    }
    g
}

/// `Σ_σ (n₀σ − ñ₀σ)`, the operator multiplying the impurity level.
fn level_operator(basis: FockBasis) -> FermionOperator {
    let mut g = FermionOperator::zero();
    for spin in Spin::BOTH {
        g.add_term(ONE, basis.number(false, spin, 0));
        g.add_term(-ONE, basis.number(true, spin, 0));
    }
    g
}

fn dense_setup(
    config: &SiamConfig,
    bath: &BathDiscretization,
    limit: usize,
) -> Result<(Occupations, FockBasis)> {
    if bath.len() > limit {
        return Err(Error::Capacity(format!(
            "dense oracle is limited to n_bath <= {limit}, got {}",
            bath.len()
        )));
    }
    let occ = Occupations::reference(config, bath);
    let basis = FockBasis::new(bath.len() + 1)?;
    Ok((occ, basis))
}

fn checked_bath(config: &SiamConfig, limit: usize) -> Result<BathDiscretization> {
    config.validate()?;
    if config.n_bath > limit {
        return Err(Error::Capacity(format!(
            "dense oracle is limited to n_bath <= {limit}, got {}",
            config.n_bath
        )));
    }
    build_bath(config)
}

/// Explicit matrix of `H(t) − H̃(t) + D̂` in the original operators.
pub fn build_generator(config: &SiamConfig, t: f64) -> Result<SparseMatrix> {
    let bath = checked_bath(config, MAX_DENSE_BATH)?;
    build_generator_with_bath(config, &bath, t)
}

/// As [`build_generator`], for an explicitly given bath (any size up to
/// the dense limit, odd sizes included).
pub fn build_generator_with_bath(
    config: &SiamConfig,
    bath: &BathDiscretization,
    t: f64,
) -> Result<SparseMatrix> {
    let (occ, basis) = dense_setup(config, bath, MAX_DENSE_BATH)?;
    let g = static_generator(config, bath, &occ, basis)
        .plus(&level_operator(basis).scaled(re(impurity_level(t, config))));
    Ok(g.to_sparse(basis.n_modes()))
}

/// RK4 propagation of the ρ-ket with the run's `dt`, recording
/// `⟨1|O|ρ_t⟩` observables every `record_interval`.
pub fn propagate_dense(state: &DenseState, config: &SiamConfig) -> Result<TrajectoryRecord> {
    let bath = checked_bath(config, MAX_PROPAGATION_BATH)?;
    propagate_dense_with_bath(state, config, &bath)
}

pub fn propagate_dense_with_bath(
    state: &DenseState,
    config: &SiamConfig,
    bath: &BathDiscretization,
) -> Result<TrajectoryRecord> {
    config.validate()?;
    let (occ, basis) = dense_setup(config, bath, MAX_PROPAGATION_BATH)?;
    if basis != state.basis {
        return Err(Error::DimensionMismatch(format!(
            "state has {} orbitals, config {}",
            state.basis.n_orbitals,
            basis.n_orbitals
        )));
    }
    let (steps, stride) = schedule(config.t_final, config.dt, config.record_interval)?;
    let g = static_generator(config, bath, &occ, basis).to_sparse(basis.n_modes());
    // the level operator is diagonal in the occupation basis
    let level_diag: Vec<f64> = (0..basis.dim())
        .map(|b| {
            Spin::BOTH
                .iter()
                .map(|&s| {
                    basis.occupied(b, basis.mode(s, 0, false)) as i32 as f64
                        - basis.occupied(b, basis.mode(s, 0, true)) as i32 as f64
                })
                .sum()
        })
        .collect();

    let dim = basis.dim();
    let mi = Complex64::new(0.0, -1.0);
    let deriv = |t: f64, y: &[Complex64], out: &mut [Complex64]| {
        g.mul_vec(y, out);
        let lvl = impurity_level(t, config);
        for ((o, &d), &x) in out.iter_mut().zip(&level_diag).zip(y) {
            *o = mi * (*o + x * (lvl * d));
        }
    };

    let mut rho = state.clone();
    let mut record = TrajectoryRecord::new();
    let observe = |rho: &DenseState, t: f64| {
        let numbers = rho.numbers();
        TrajectorySample {
            time: t,
            n_imp: [numbers[0][0], numbers[1][0]],
            n_electrons: total_number(&numbers),
            trace_dev: Some((rho.trace() - ONE).norm()),
            herm_dev: None,
            discarded_weight: None,
        }
    };
    record.push(observe(&rho, 0.0));
    let dt = config.dt;
    let (mut k1, mut k2, mut k3, mut k4) =
        (vec![ZERO; dim], vec![ZERO; dim], vec![ZERO; dim], vec![ZERO; dim]);
    let mut tmp = vec![ZERO; dim];
    for step in 0..steps {
        let t = step as f64 * dt;
        let y = &mut rho.amplitudes;
        deriv(t, y, &mut k1);
        for ((o, a), k) in tmp.iter_mut().zip(y.iter()).zip(&k1) {
            *o = a + k * (0.5 * dt);
        }
        deriv(t + 0.5 * dt, &tmp, &mut k2);
        for ((o, a), k) in tmp.iter_mut().zip(y.iter()).zip(&k2) {
            *o = a + k * (0.5 * dt);
        }
        deriv(t + 0.5 * dt, &tmp, &mut k3);
        for ((o, a), k) in tmp.iter_mut().zip(y.iter()).zip(&k3) {
            *o = a + k * dt;
        }
        deriv(t + dt, &tmp, &mut k4);
        for (idx, a) in y.iter_mut().enumerate() {
            *a += (k1[idx] + 2.0 * k2[idx] + 2.0 * k3[idx] + k4[idx]) * (dt / 6.0);
        }
        if !y.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFinite {
                time: t + dt,
                what: "dense density-matrix ket".into(),
            });
        }
        if (step + 1) % stride == 0 {
            record.push(observe(&rho, (step + 1) as f64 * dt));
        }
    }
    Ok(record)
}

/// Thermal quasi-particle operators written in the original modes:
/// `b† = a† − ã`, `b̃† = ã† + a`, `b = u a − v ã†`, `b̃ = u ã + v a†`.
fn quasi_particle(basis: FockBasis, occ: &Occupations, sym: &OperatorSymbol) -> FermionOperator {
    let i = match sym.index {
        OrbitalIndex::Site(i) => i,
        OrbitalIndex::Label(_) => panic!("free label in a concrete operator"),
    };
    let s = sym.spin;
    let (u, v) = (occ.u(s)[i], occ.v(s)[i]);
    let mut op = FermionOperator::zero();
    let tl = sym.tilde;
    if sym.is_creation() {
        op.add_term(ONE, vec![basis.op(true, tl, s, i)]);
        op.add_term(re(if tl { 1.0 } else { -1.0 }), vec![basis.op(false, !tl, s, i)]);
    } else {
        op.add_term(re(u), vec![basis.op(false, tl, s, i)]);
        op.add_term(re(if tl { v } else { -v }), vec![basis.op(true, !tl, s, i)]);
    }
    op
}

fn product(basis: FockBasis, occ: &Occupations, symbols: &[OperatorSymbol]) -> FermionOperator {
    symbols
        .iter()
        .fold(FermionOperator::identity(), |acc, s| {
            acc.times(&quasi_particle(basis, occ, s))
        })
}

/// `Ĥ′` realized as an operator on the doubled Fock space.
pub fn realize_super_hamiltonian(sh: &SuperHamiltonian, occ: &Occupations) -> Result<FermionOperator> {
    let basis = FockBasis::new(sh.n_orbitals())?;
    let mut g = FermionOperator::zero();
    for term in sh.terms() {
        g = g.plus(&product(basis, occ, &term.symbols).scaled(term.coeff));
    }
    Ok(g)
}

fn cluster_operator(basis: FockBasis, occ: &Occupations, amps: &ClusterAmplitudes) -> FermionOperator {
    let n = basis.n_orbitals;
    let mut t = FermionOperator::zero();
    let c = |tilde, s, i| OperatorSymbol::create(tilde, s, i);
    for spin in Spin::BOTH {
        let t1 = amps.t1(spin);
        for i in 0..n {
            for j in 0..n {
                if t1[(i, j)] != ZERO {
                    t = t.plus(&product(basis, occ, &[c(false, spin, i), c(true, spin, j)]).scaled(t1[(i, j)]));
                }
            }
        }
    }
    for block in PairBlock::ALL {
        let Some(t2) = amps.t2(block) else { continue };
        let (s1, s2) = block.spins();
        let weight = if block.same_spin().is_some() { 0.25 } else { 1.0 };
        for ((i, k, j, l), &x) in t2.indexed_iter() {
            if x == ZERO {
                continue;
            }
            let syms = [c(false, s1, i), c(false, s2, k), c(true, s2, l), c(true, s1, j)];
            t = t.plus(&product(basis, occ, &syms).scaled(x * weight));
        }
    }
    t
}

/// `e^{±T} x` by its (terminating) power series.
fn exp_apply(t: &FermionOperator, sign: f64, n_modes: usize, x: &[Complex64]) -> Vec<Complex64> {
    let mut out = x.to_vec();
    let mut term = x.to_vec();
    for k in 1..=(n_modes + 1) {
        term = t.apply(n_modes, &term);
        let f = sign / k as f64;
        let mut any = false;
        for (o, v) in out.iter_mut().zip(term.iter_mut()) {
            *v *= f;
            any |= *v != ZERO;
            *o += *v;
        }
        if !any {
            break;
        }
    }
    out
}

/// Projections `⟨0| b̃_j b_i e^{−T} Ĥ′ e^{T} |0⟩` and
/// `⟨0| b̃_j b̃_l b_k b_i e^{−T} Ĥ′ e^{T} |0⟩`, computed by brute force in the
/// doubled Fock space.
pub fn projection_oracle(sh: &SuperHamiltonian, occ: &Occupations, amps: &ClusterAmplitudes) -> Result<Residuals> {
    let n = sh.n_orbitals();
    if n > 3 {
        return Err(Error::Capacity(format!(
            "projection oracle is limited to 2 bath levels, got {}",
            n - 1
        )));
    }
    if occ.n_orbitals() != n {
        return Err(Error::DimensionMismatch("occupations vs generator".into()));
    }
    amps.check_dims(n)?;
    let basis = FockBasis::new(n)?;
    let m = basis.n_modes();
    let rho0 = build_thermal_ket(occ)?;
    let t = cluster_operator(basis, occ, amps);
    let g = realize_super_hamiltonian(sh, occ)?;
    let psi = exp_apply(&t, 1.0, m, &rho0.amplitudes);
    let psi = g.apply(m, &psi);
    let phi = exp_apply(&t, -1.0, m, &psi);
    let unit = basis.unit();

    let annihilate = |tilde, s, i, x: &[Complex64]| {
        quasi_particle(basis, occ, &OperatorSymbol::annihilate(tilde, s, i)).apply(m, x)
    };
    let dot = |x: &[Complex64]| unit.iter().zip(x).map(|(a, b)| a * b).sum::<Complex64>();

    let mut res = Residuals::zeros(n, amps.truncation());
    for spin in Spin::BOTH {
        for i in 0..n {
            let bi = annihilate(false, spin, i, &phi);
            for j in 0..n {
                res.r1[spin.index()][(i, j)] = dot(&annihilate(true, spin, j, &bi));
            }
        }
    }
    if let Some(r2) = &mut res.r2 {
        for block in PairBlock::ALL {
            let (s1, s2) = block.spins();
            for i in 0..n {
                let bi = annihilate(false, s1, i, &phi);
                for k in 0..n {
                    let bk = annihilate(false, s2, k, &bi);
                    for l in 0..n {
                        let bl = annihilate(true, s2, l, &bk);
                        for j in 0..n {
                            r2[block.index()][(i, k, j, l)] = dot(&annihilate(true, s1, j, &bl));
                        }
                    }
                }
            }
        }
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thermofield::build_super_hamiltonian;
    use nalgebra::DMatrix;

    fn cfg(n_bath: usize) -> SiamConfig {
        SiamConfig {
            n_bath,
            t_final: 1.0,
            ..SiamConfig::default()
        }
    }

    #[test]
    fn thermal_ket_limits_and_numbers() {
        let occ = Occupations::from_v([vec![0.0, 1.0], vec![0.3, 0.75]]);
        let rho = build_thermal_ket(&occ).unwrap();
        assert!((rho.trace() - ONE).norm() < 1e-15);
        let n = rho.numbers();
        assert!(n[0][0].abs() < 1e-15);
        assert!((n[0][1] - 1.0).abs() < 1e-15);
        assert!((n[1][0] - 0.3).abs() < 1e-14);
        assert!((n[1][1] - 0.75).abs() < 1e-14);
        // v = 1 on α bath: only the |11⟩ pair component survives for that site
        let b = rho.basis();
        let (m, mt) = (b.mode(Spin::Alpha, 1, false), b.mode(Spin::Alpha, 1, true));
        for (state, amp) in rho.amplitudes.iter().enumerate() {
            if *amp != ZERO {
                assert!(b.occupied(state, m) && b.occupied(state, mt));
                assert!(!b.occupied(state, b.mode(Spin::Alpha, 0, false)));
            }
        }
    }

    #[test]
    fn unit_bra_is_left_null_vector() {
        for gamma in [0.0, 0.2] {
            let c = SiamConfig {
                gamma,
                delta_eps: 0.08,
                omega: 0.5,
                ..cfg(2)
            };
            let g = build_generator(&c, 0.7).unwrap();
            let basis = FockBasis::new(3).unwrap();
            let left = g.left_mul_vec(&basis.unit());
            assert!(left.iter().all(|z| z.norm() < 1e-12));
        }
    }

    #[test]
    fn refuses_large_baths() {
        assert!(matches!(build_generator(&cfg(6), 0.0), Err(Error::Capacity(_))));
        let c = cfg(4);
        let occ = Occupations::from_v([vec![0.5; 5], vec![0.5; 5]]);
        let rho = build_thermal_ket(&occ).unwrap();
        assert!(matches!(propagate_dense(&rho, &c), Err(Error::Capacity(_))));
    }

    #[test]
    fn closed_spectrum_is_single_particle_differences() {
        // U = 0, N_b = 1: eigenvalues of H − H̃ are E_n − E_m of the
        // many-body levels built from the one-body eigenvalues
        let c = SiamConfig {
            hubbard_u: 0.0,
            ..cfg(2)
        };
        let bath = BathDiscretization {
            energies: vec![0.13],
            couplings: vec![0.05],
        };
        let g = build_generator_with_bath(&c, &bath, 0.0).unwrap().to_dense();
        let herm = DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| g[(i, j)].re);
        assert!(g.iter().all(|z| z.im == 0.0));
        let mut ev: Vec<f64> = herm.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);

        let mut h = DMatrix::<f64>::zeros(2, 2);
        h[(0, 0)] = c.epsilon0;
        h[(1, 1)] = bath.energies[0];
        h[(0, 1)] = bath.couplings[0];
        h[(1, 0)] = bath.couplings[0];
        let e = h.symmetric_eigenvalues();
        // four one-body modes (two spins); many-body energies over 2^4 states
        let modes: Vec<f64> = e.iter().chain(e.iter()).copied().collect();
        let energies: Vec<f64> = (0..16usize)
            .map(|s| (0..4).filter(|k| s >> k & 1 == 1).map(|k| modes[k]).sum())
            .collect();
        let mut expected: Vec<f64> = energies
            .iter()
            .flat_map(|a| energies.iter().map(move |b| a - b))
            .collect();
        expected.sort_by(f64::total_cmp);
        assert_eq!(ev.len(), expected.len());
        for (a, b) in ev.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn coupled_thermal_state_is_stationary() {
        // e^{−βH} of the coupled U = 0 model, as a ket Σ ρ_nm |n, m̃⟩, is
        // annihilated by the generator
        let c = SiamConfig {
            hubbard_u: 0.0,
            temperature: 0.05,
            n_bath: 1,
            ..cfg(2)
        };
        let c = SiamConfig { n_bath: 2, ..c };
        let bath = build_bath(&c).unwrap();
        let mut h = DMatrix::<f64>::zeros(3, 3);
        h[(0, 0)] = c.epsilon0;
        for i in 1..3 {
            h[(i, i)] = bath.energies[i - 1];
            h[(0, i)] = bath.couplings[i - 1];
            h[(i, 0)] = bath.couplings[i - 1];
        }
        let eig = h.symmetric_eigen();
        // normal modes d_k = Σ_i Q_ik a_i; thermal ket Π_k (1 + e^{−βε_k} d†_k d̃†_k)|0⟩
        let basis = FockBasis::new(3).unwrap();
        let mut v = vec![ZERO; basis.dim()];
        v[0] = ONE;
        for spin in Spin::BOTH {
            for k in 0..3 {
                let mut d = FermionOperator::zero();
                let mut dt = FermionOperator::zero();
                for i in 0..3 {
                    let q = re(eig.eigenvectors[(i, k)]);
                    d.add_term(q, vec![basis.op(true, false, spin, i)]);
                    dt.add_term(q, vec![basis.op(true, true, spin, i)]);
                }
                let w = re((-eig.eigenvalues[k] / c.temperature).exp());
                let pair = FermionOperator::identity().plus(&d.times(&dt).scaled(w));
                v = pair.apply(basis.n_modes(), &v);
            }
        }
        let g = build_generator(&c, 0.0).unwrap();
        let mut out = vec![ZERO; v.len()];
        g.mul_vec(&v, &mut out);
        let scale = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(out.iter().all(|z| z.norm() < 1e-12 * scale));
    }

    #[test]
    fn quasi_particles_annihilate_the_vacua() {
        let occ = Occupations::from_v([vec![0.8, 0.3], vec![0.1, 0.6]]);
        let rho = build_thermal_ket(&occ).unwrap();
        let basis = rho.basis();
        let m = basis.n_modes();
        let unit = basis.unit();
        for spin in Spin::BOTH {
            for i in 0..2 {
                for tilde in [false, true] {
                    let b = quasi_particle(basis, &occ, &OperatorSymbol::annihilate(tilde, spin, i));
                    assert!(b.apply(m, &rho.amplitudes).iter().all(|z| z.norm() < 1e-15));
                    let bd = quasi_particle(basis, &occ, &OperatorSymbol::create(tilde, spin, i));
                    let left = bd.to_sparse(m).left_mul_vec(&unit);
                    assert!(left.iter().all(|z| z.norm() < 1e-15));
                }
            }
        }
    }

    #[test]
    fn transformed_generator_equals_original() {
        for (gamma, u) in [(0.0, 0.1), (0.3, 0.1), (0.2, 0.0)] {
            let c = SiamConfig {
                gamma,
                hubbard_u: u,
                temperature: 0.04,
                delta_eps: 0.08,
                omega: 0.5,
                init_imp_occ_alpha: 0.9,
                init_imp_occ_beta: 0.2,
                ..cfg(1)
            };
            let c = SiamConfig { n_bath: 2, ..c };
            let bath = build_bath(&c).unwrap();
            let occ = Occupations::reference(&c, &bath);
            let t = 1.3;
            let sh = build_super_hamiltonian(&c, &bath, &occ, t).unwrap();
            let realized = realize_super_hamiltonian(&sh, &occ).unwrap().to_sparse(12);
            let original = build_generator(&c, t).unwrap();
            let d = realized.max_abs_diff(&original);
            assert!(d < 1e-12, "γ={gamma} U={u}: {d}");
        }
    }

    #[test]
    fn zero_amplitudes_without_pairing_give_zero_residuals() {
        let c = SiamConfig { n_bath: 2, ..cfg(2) };
        let bath = build_bath(&c).unwrap();
        let occ = Occupations::from_v([vec![0.4; 3], vec![0.4; 3]]);
        let sh = build_super_hamiltonian(&c, &bath, &occ, 0.0).unwrap();
        let amps = ClusterAmplitudes::zeros(3, crate::dmcc::Truncation::SinglesDoubles);
        let r = projection_oracle(&sh, &occ, &amps).unwrap();
        assert!(r.max_abs() < 1e-14, "{}", r.max_abs());
    }

    #[test]
    fn closed_run_conserves_trace_number_energy() {
        let c = SiamConfig {
            n_bath: 2,
            t_final: 20.0,
            dt: 0.02,
            record_interval: 1.0,
            ..SiamConfig::default()
        };
        let bath = build_bath(&c).unwrap();
        let occ = Occupations::reference(&c, &bath);
        let rho = build_thermal_ket(&occ).unwrap();
        let rec = propagate_dense(&rho, &c).unwrap();
        let n0 = rec.samples()[0].n_electrons;
        for s in rec.samples() {
            assert!(s.trace_dev.unwrap() < 1e-10);
            assert!((s.n_electrons - n0).abs() < 1e-8);
        }
        assert!(rec.last().unwrap().n_imp[0] < 0.999);
    }

    #[test]
    fn decoupled_populations_stay_put() {
        let c = SiamConfig {
            n_bath: 2,
            hybridization: 0.0,
            hubbard_u: 0.0,
            t_final: 5.0,
            record_interval: 1.0,
            ..SiamConfig::default()
        };
        let bath = build_bath(&c).unwrap();
        let occ = Occupations::reference(&c, &bath);
        let rec = propagate_dense(&build_thermal_ket(&occ).unwrap(), &c).unwrap();
        for s in rec.samples() {
            assert!((s.n_imp[0] - 1.0).abs() < 1e-13 && s.n_imp[1].abs() < 1e-13);
        }
    }
}
