use ndarray::Array2;
use num_complex::Complex64;

use super::algebra::{normal_order, tilde_conjugate, OperatorSymbol, OperatorTerm};
use crate::error::{Error, Result};
use crate::model::{impurity_level, BathDiscretization, Occupations, SiamConfig, Spin};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Drive of the `(0, 0)` entry: `ε₀ + δε sin(Ωt) + shift_σ`.
#[derive(Debug, Clone, PartialEq)]
struct LevelDrive {
    epsilon0: f64,
    delta_eps: f64,
    omega: f64,
    shift: [f64; 2],
}

/// Generator of the density-matrix ket in quasi-particle form,
///
/// ```text
/// Ĥ′ = Σ h_ij b†_i b_j − Σ h*_ij b̃†_i b̃_j + Σ Δ_ij b†_i b̃†_j + Ŵ′
/// ```
///
/// per spin, with the bath broadening `−iγ` sitting on the diagonal of `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperHamiltonian {
    h: [Array2<Complex64>; 2],
    pairing: [Array2<Complex64>; 2],
    interaction: Vec<OperatorTerm>,
    drive: Option<LevelDrive>,
    time: f64,
}

impl SuperHamiltonian {
    /// Assembles a static generator from explicit pieces. Interaction terms
    /// are normal ordered on the way in.
    pub fn from_parts(
        h: [Array2<Complex64>; 2],
        pairing: [Array2<Complex64>; 2],
        interaction: Vec<OperatorTerm>,
    ) -> Result<Self> {
        let n = h[0].nrows();
        for m in h.iter().chain(pairing.iter()) {
            if m.dim() != (n, n) {
                return Err(Error::DimensionMismatch(format!(
                    "one-body block is {:?}, expected ({n}, {n})",
                    m.dim()
                )));
            }
        }
        for term in &interaction {
            for s in &term.symbols {
                match s.index {
                    super::algebra::OrbitalIndex::Site(i) if i < n => {}
                    _ => {
                        return Err(Error::DimensionMismatch(format!(
                            "interaction symbol {s} outside 0..{n}"
                        )))
                    }
                }
            }
        }
        Ok(Self {
            h,
            pairing,
            interaction: normal_order(&interaction),
            drive: None,
            time: 0.0,
        })
    }

    pub fn n_orbitals(&self) -> usize {
        self.h[0].nrows()
    }

    pub fn h(&self, spin: Spin) -> &Array2<Complex64> {
        &self.h[spin.index()]
    }

    pub fn pairing(&self, spin: Spin) -> &Array2<Complex64> {
        &self.pairing[spin.index()]
    }

    pub fn interaction(&self) -> &[OperatorTerm] {
        &self.interaction
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Moves the driven impurity level to time `t`. A no-op for static
    /// generators.
    pub fn set_time(&mut self, t: f64) {
        self.time = t;
        if let Some(d) = &self.drive {
            let level = d.epsilon0 + d.delta_eps * (d.omega * t).sin();
            for spin in Spin::BOTH {
                let s = spin.index();
                let old = self.h[s][(0, 0)];
                self.h[s][(0, 0)] = Complex64::new(level + d.shift[s], old.im);
            }
        }
    }

    pub fn at_time(&self, t: f64) -> Self {
        let mut out = self.clone();
        out.set_time(t);
        out
    }

    /// Multiplies every interaction coefficient by `factor`.
    pub fn scale_interaction(&mut self, factor: f64) {
        for term in &mut self.interaction {
            term.coeff *= factor;
        }
    }

    /// The full generator as a flat list of normal-ordered terms.
    pub fn terms(&self) -> Vec<OperatorTerm> {
        let n = self.n_orbitals();
        let mut out = Vec::new();
        for spin in Spin::BOTH {
            let h = self.h(spin);
            let d = self.pairing(spin);
            for i in 0..n {
                for j in 0..n {
                    if h[(i, j)] != ZERO {
                        out.push(OperatorTerm::new(
                            h[(i, j)],
                            vec![
                                OperatorSymbol::create(false, spin, i),
                                OperatorSymbol::annihilate(false, spin, j),
                            ],
                        ));
                        out.push(OperatorTerm::new(
                            -h[(i, j)].conj(),
                            vec![
                                OperatorSymbol::create(true, spin, i),
                                OperatorSymbol::annihilate(true, spin, j),
                            ],
                        ));
                    }
                    if d[(i, j)] != ZERO {
                        out.push(OperatorTerm::new(
                            d[(i, j)],
                            vec![
                                OperatorSymbol::create(false, spin, i),
                                OperatorSymbol::create(true, spin, j),
                            ],
                        ));
                    }
                }
            }
        }
        out.extend(self.interaction.iter().cloned());
        out
    }
}

/// Builds `Ĥ′` for the quench: the impurity level is mean-field shifted by
/// the opposite-spin impurity occupation, the bath is broadened by `−iγ`,
/// and the remaining interaction is the normal-ordered fluctuation part.
pub fn build_super_hamiltonian(
    config: &SiamConfig,
    bath: &BathDiscretization,
    occ: &Occupations,
    t: f64,
) -> Result<SuperHamiltonian> {
    let n = bath.len() + 1;
    if bath.couplings.len() != bath.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} bath energies but {} couplings",
            bath.len(),
            bath.couplings.len()
        )));
    }
    if occ.n_orbitals() != n || occ.v(Spin::Beta).len() != n {
        return Err(Error::DimensionMismatch(format!(
            "occupations cover {} orbitals, the model has {n}",
            occ.n_orbitals()
        )));
    }
    let u = config.hubbard_u;
    let mut h = [Array2::zeros((n, n)), Array2::zeros((n, n))];
    let mut pairing = [Array2::zeros((n, n)), Array2::zeros((n, n))];
    let mut shift = [0.0; 2];
    for spin in Spin::BOTH {
        let s = spin.index();
        let (v, uu) = (occ.v(spin), occ.u(spin));
        shift[s] = u * occ.v(spin.opposite())[0];
        h[s][(0, 0)] = re(impurity_level(t, config) + shift[s]);
        for i in 1..n {
            let coupling = bath.couplings[i - 1];
            h[s][(i, i)] = Complex64::new(bath.energies[i - 1], -config.gamma);
            h[s][(0, i)] = re(coupling);
            h[s][(i, 0)] = re(coupling);
            let d = coupling * (uu[i] * v[0] - uu[0] * v[i]);
            pairing[s][(i, 0)] = re(d);
            pairing[s][(0, i)] = re(-d);
        }
    }
    let interaction = if u == 0.0 {
        Vec::new()
    } else {
        interaction_terms(u, occ)
    };
    let mut sh = SuperHamiltonian::from_parts(h, pairing, interaction)?;
    sh.drive = Some(LevelDrive {
        epsilon0: config.epsilon0,
        delta_eps: config.delta_eps,
        omega: config.omega,
        shift,
    });
    sh.time = t;
    Ok(sh)
}

/// Fluctuation part of `U(n_α n_β − ñ_α ñ_β)` on the impurity once the
/// mean-field one-body piece is removed: monomials minus their tilde
/// conjugates.
fn interaction_terms(u: f64, occ: &Occupations) -> Vec<OperatorTerm> {
    use Spin::{Alpha as A, Beta as B};
    let (va, vb) = (occ.v(A)[0], occ.v(B)[0]);
    let (ua, ub) = (occ.u(A)[0], occ.u(B)[0]);
    let c = |tilde, s| OperatorSymbol::create(tilde, s, 0);
    let a = |tilde, s| OperatorSymbol::annihilate(tilde, s, 0);
    let monomials = [
        (u * (1.0 - va - vb), [c(false, A), a(false, A), c(false, B), a(false, B)]),
        (u, [c(false, A), a(false, A), a(true, B), a(false, B)]),
        (u, [a(true, A), a(false, A), c(false, B), a(false, B)]),
        (u * ub * vb, [c(false, A), a(false, A), c(false, B), c(true, B)]),
        (u * ua * va, [c(false, A), c(true, A), c(false, B), a(false, B)]),
        // only present for a spin-polarized reference
        (u * (va - vb), [c(false, A), a(false, A), c(true, B), a(true, B)]),
    ];
    let mut terms = Vec::new();
    for (coeff, symbols) in monomials {
        if coeff == 0.0 {
            continue;
        }
        let term = OperatorTerm::new(re(coeff), symbols.to_vec());
        let conj = tilde_conjugate(&term);
        terms.push(term);
        terms.push(conj.scaled(re(-1.0)));
    }
    normal_order(&terms)
}

/// Outcome of [`verify_trace_preservation`].
#[derive(Debug, Clone, PartialEq)]
pub struct TraceCheck {
    /// Terms without a creation symbol; each would give `⟨1|Ĥ′ ≠ 0`.
    pub offending: Vec<OperatorTerm>,
}

impl TraceCheck {
    pub fn holds(&self) -> bool {
        self.offending.is_empty()
    }
}

/// Checks that every normal-ordered term carries at least one creation
/// symbol, which is what makes the unit bra a left null vector.
pub fn verify_trace_preservation(sh: &SuperHamiltonian) -> TraceCheck {
    let offending = normal_order(&sh.terms())
        .into_iter()
        .filter(|t| t.n_creators() == 0)
        .collect();
    TraceCheck { offending }
}

/// `⟨a†_iσ a_iσ⟩ = v_iσ + t¹_ii(σ)`.
pub fn number_expectation(occ: &Occupations, t1: &[Array2<Complex64>; 2]) -> [Vec<f64>; 2] {
    Spin::BOTH.map(|spin| {
        let t = &t1[spin.index()];
        occ.v(spin)
            .iter()
            .enumerate()
            .map(|(i, v)| v + t[(i, i)].re)
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::super::algebra::{difference, simplify, transform_product, Mode};
    use super::*;
    use crate::model::build_bath;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn small_config(n_bath: usize) -> SiamConfig {
        SiamConfig {
            n_bath,
            ..SiamConfig::default()
        }
    }

    fn build(cfg: &SiamConfig) -> SuperHamiltonian {
        let bath = build_bath(cfg).unwrap();
        let occ = Occupations::reference(cfg, &bath);
        build_super_hamiltonian(cfg, &bath, &occ, 0.0).unwrap()
    }

    #[test]
    fn impurity_entry_without_shift() {
        let cfg = small_config(2);
        let sh = build(&cfg);
        // α sees v₀β = 0
        assert_abs_diff_eq!(sh.h(Spin::Alpha)[(0, 0)].re, -0.08, epsilon = 1e-15);
        // β sees v₀α = 1
        assert_abs_diff_eq!(sh.h(Spin::Beta)[(0, 0)].re, -0.08 + 0.1, epsilon = 1e-15);
    }

    #[test]
    fn broadening_only_on_bath() {
        let cfg = SiamConfig {
            gamma: 0.04,
            ..small_config(4)
        };
        let sh = build(&cfg);
        for spin in Spin::BOTH {
            assert_eq!(sh.h(spin)[(0, 0)].im, 0.0);
            for i in 1..5 {
                assert_abs_diff_eq!(sh.h(spin)[(i, i)].im, -0.04, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn pairing_vanishes_at_equal_occupation() {
        let cfg = small_config(2);
        let bath = build_bath(&cfg).unwrap();
        let mut v = Occupations::reference(&cfg, &bath).v(Spin::Alpha).to_vec();
        v[2] = v[0];
        let occ = Occupations::from_v([v.clone(), v]);
        let sh = build_super_hamiltonian(&cfg, &bath, &occ, 0.0).unwrap();
        assert_eq!(sh.pairing(Spin::Alpha)[(2, 0)], ZERO);
        assert_eq!(sh.pairing(Spin::Alpha)[(0, 2)], ZERO);
        assert_ne!(sh.pairing(Spin::Alpha)[(1, 0)], ZERO);

        let flat = Occupations::from_v([vec![0.3; 3], vec![0.3; 3]]);
        let sh = build_super_hamiltonian(&cfg, &bath, &flat, 0.0).unwrap();
        for spin in Spin::BOTH {
            assert!(sh.pairing(spin).iter().all(|x| *x == ZERO));
        }
    }

    #[test]
    fn rejects_mismatched_occupations() {
        let cfg = small_config(2);
        let bath = build_bath(&cfg).unwrap();
        let occ = Occupations::from_v([vec![0.5; 2], vec![0.5; 2]]);
        assert!(matches!(
            build_super_hamiltonian(&cfg, &bath, &occ, 0.0),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn injected_scalar_breaks_trace_preservation() {
        let sh = build(&small_config(2));
        assert!(verify_trace_preservation(&sh).holds());
        let n = sh.n_orbitals();
        let mut extra = sh.interaction().to_vec();
        extra.push(OperatorTerm::scalar(re(0.25)));
        let bad = SuperHamiltonian::from_parts(
            [sh.h(Spin::Alpha).clone(), sh.h(Spin::Beta).clone()],
            [sh.pairing(Spin::Alpha).clone(), sh.pairing(Spin::Beta).clone()],
            extra,
        )
        .unwrap();
        let check = verify_trace_preservation(&bad);
        assert!(!check.holds());
        assert_eq!(check.offending, vec![OperatorTerm::scalar(re(0.25))]);
        assert_eq!(n, 3);
    }

    #[test]
    fn dissipator_only_generator_preserves_trace() {
        let n = 3;
        let mut h = Array2::zeros((n, n));
        for i in 1..n {
            h[(i, i)] = Complex64::new(0.0, -0.2);
        }
        let z = Array2::zeros((n, n));
        let sh =
            SuperHamiltonian::from_parts([h.clone(), h], [z.clone(), z], Vec::new()).unwrap();
        assert!(verify_trace_preservation(&sh).holds());
    }

    /// `U(n_α n_β − ñ_α ñ_β)` rewritten from scratch in quasi-particles must
    /// equal the mean-field one-body part plus the stored fluctuation terms.
    fn check_interaction_against_transform(va: f64, vb: f64) {
        let cfg = SiamConfig {
            hubbard_u: 0.37,
            ..small_config(2)
        };
        let bath = build_bath(&cfg).unwrap();
        let mut v = [vec![va, 0.2, 0.7], vec![vb, 0.4, 0.1]];
        v[0][0] = va;
        let occ = Occupations::from_v(v);
        let sh = build_super_hamiltonian(&cfg, &bath, &occ, 0.0).unwrap();

        let n = |tilde, s| {
            [Mode::new(true, tilde, s, 0), Mode::new(false, tilde, s, 0)]
        };
        let mut w = Vec::new();
        let u = re(cfg.hubbard_u);
        let cat = |x: [Mode; 2], y: [Mode; 2]| [x[0], x[1], y[0], y[1]];
        w.extend(transform_product(u, &cat(n(false, Spin::Alpha), n(false, Spin::Beta)), &occ));
        w.extend(
            transform_product(-u, &cat(n(true, Spin::Alpha), n(true, Spin::Beta)), &occ),
        );
        // subtract the mean-field one-body piece U v₀σ̄ (n_σ − ñ_σ)
        let mut mf = Vec::new();
        for spin in Spin::BOTH {
            let shift = re(cfg.hubbard_u * occ.v(spin.opposite())[0]);
            mf.extend(transform_product(shift, &n(false, spin), &occ));
            mf.extend(transform_product(-shift, &n(true, spin), &occ));
        }
        let fluctuation = difference(&simplify(&w), &simplify(&mf));
        let d = difference(&fluctuation, sh.interaction());
        assert!(d.is_empty(), "mismatch at ({va},{vb}):\n{}", d.iter().map(|t| t.to_string()).collect::<Vec<_>>().join("\n"));
    }

    #[test]
    fn interaction_matches_symbolic_transform() {
        check_interaction_against_transform(1.0, 0.0);
        check_interaction_against_transform(0.3, 0.8);
        check_interaction_against_transform(0.5, 0.5);
    }

    #[test]
    fn one_body_matches_symbolic_transform() {
        // H₀ − H̃₀ for real h equals h b†b − h* b̃†b̃ + Δ b†b̃†
        let cfg = small_config(2);
        let bath = build_bath(&cfg).unwrap();
        let occ = Occupations::from_v([vec![0.9, 0.2, 0.7], vec![0.1, 0.4, 0.6]]);
        let cfg = SiamConfig {
            hubbard_u: 0.0,
            ..cfg
        };
        let sh = build_super_hamiltonian(&cfg, &bath, &occ, 0.0).unwrap();
        let mut direct = Vec::new();
        for spin in Spin::BOTH {
            let h = sh.h(spin);
            for i in 0..3 {
                for j in 0..3 {
                    let x = h[(i, j)];
                    if x == ZERO {
                        continue;
                    }
                    direct.extend(transform_product(
                        x,
                        &[Mode::new(true, false, spin, i), Mode::new(false, false, spin, j)],
                        &occ,
                    ));
                    direct.extend(transform_product(
                        -x.conj(),
                        &[Mode::new(true, true, spin, i), Mode::new(false, true, spin, j)],
                        &occ,
                    ));
                }
            }
        }
        let d = difference(&simplify(&direct), &sh.terms());
        assert!(d.is_empty(), "mismatch: {d:#?}");
    }

    #[test]
    fn generator_is_odd_under_tilde_when_closed() {
        let sh = build(&SiamConfig {
            hubbard_u: 0.1,
            temperature: 0.04,
            init_imp_occ_alpha: 0.7,
            init_imp_occ_beta: 0.2,
            ..small_config(4)
        });
        let terms = sh.terms();
        let conj: Vec<_> = terms.iter().map(tilde_conjugate).collect();
        let sum = {
            let mut all = terms.clone();
            all.extend(conj);
            simplify(&all)
        };
        assert!(sum.is_empty(), "{sum:#?}");
    }

    #[test]
    fn drive_moves_only_impurity_level() {
        let cfg = SiamConfig {
            delta_eps: 0.08,
            omega: 0.5,
            ..small_config(2)
        };
        let mut sh = build(&cfg);
        let before = sh.clone();
        let t = std::f64::consts::PI; // Ωt = π/2
        sh.set_time(t);
        assert_abs_diff_eq!(sh.h(Spin::Alpha)[(0, 0)].re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sh.h(Spin::Beta)[(0, 0)].re, 0.1, epsilon = 1e-15);
        let mut a = sh.h(Spin::Alpha).clone();
        a[(0, 0)] = before.h(Spin::Alpha)[(0, 0)];
        assert_eq!(&a, before.h(Spin::Alpha));
        assert_eq!(sh.at_time(0.0), before);
    }

    #[test]
    fn number_expectation_at_reference() {
        let cfg = small_config(4);
        let bath = build_bath(&cfg).unwrap();
        let occ = Occupations::reference(&cfg, &bath);
        let zero = [Array2::zeros((5, 5)), Array2::zeros((5, 5))];
        let n = number_expectation(&occ, &zero);
        assert_eq!(n[0][0], 1.0);
        assert_eq!(n[1][0], 0.0);
        for i in 1..5 {
            assert_eq!(n[0][i], occ.v(Spin::Alpha)[i]);
        }
    }

    proptest! {
        #[test]
        fn trace_preserved_for_valid_configs(
            u in 0.0f64..0.5, t in 0.0f64..0.2, g in 0.0f64..0.3,
            a in 0.0f64..=1.0, b in 0.0f64..=1.0, de in 0.0f64..0.1, time in 0.0f64..50.0,
        ) {
            let cfg = SiamConfig {
                hubbard_u: u, temperature: t, gamma: g, delta_eps: de, omega: 0.3,
                init_imp_occ_alpha: a, init_imp_occ_beta: b, ..small_config(2)
            };
            let bath = build_bath(&cfg).unwrap();
            let occ = Occupations::reference(&cfg, &bath);
            let sh = build_super_hamiltonian(&cfg, &bath, &occ, time).unwrap();
            prop_assert!(verify_trace_preservation(&sh).holds());
            for spin in Spin::BOTH {
                let d = sh.pairing(spin);
                for i in 0..3 {
                    for j in 0..3 {
                        prop_assert_eq!(d[(i, j)], -d[(j, i)]);
                    }
                }
            }
        }
    }
}
