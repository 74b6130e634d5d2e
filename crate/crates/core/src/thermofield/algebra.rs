//! Symbolic quasi-particle operator algebra.
//!
//! Quasi-particles `b, b†` (non-tilde) and quasi-holes `b̃, b̃†` (tilde) obey
//! canonical anticommutation relations; the only non-vanishing
//! anticommutators are `{b_i, b†_i} = {b̃_i, b̃†_i} = 1`. The left vacuum
//! (the unit bra) is annihilated by every creation symbol and the right
//! vacuum (the uncorrelated thermal ket) by every annihilation symbol.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;

use crate::model::{Occupations, Spin};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Ladder {
    Creation,
    Annihilation,
}

/// Orbital slot of a symbol: a concrete orbital (0 = impurity) or a free
/// summation label used by the equation generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OrbitalIndex {
    Site(usize),
    Label(u16),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OperatorSymbol {
    pub kind: Ladder,
    pub tilde: bool,
    pub spin: Spin,
    pub index: OrbitalIndex,
}

impl OperatorSymbol {
    pub fn new(kind: Ladder, tilde: bool, spin: Spin, index: OrbitalIndex) -> Self {
        Self {
            kind,
            tilde,
            spin,
            index,
        }
    }

    /// `b†` (or `b̃†` when `tilde`) on a concrete orbital.
    pub fn create(tilde: bool, spin: Spin, site: usize) -> Self {
        Self::new(Ladder::Creation, tilde, spin, OrbitalIndex::Site(site))
    }

    /// `b` (or `b̃` when `tilde`) on a concrete orbital.
    pub fn annihilate(tilde: bool, spin: Spin, site: usize) -> Self {
        Self::new(Ladder::Annihilation, tilde, spin, OrbitalIndex::Site(site))
    }

    pub fn is_creation(&self) -> bool {
        self.kind == Ladder::Creation
    }

    /// Whether `{self, other}` can be non-zero: one creator, one annihilator
    /// of the same species.
    pub fn same_mode(&self, other: &Self) -> bool {
        self.tilde == other.tilde && self.spin == other.spin && self.index == other.index
    }

    /// Change of the per-spin charge `Q_σ = N_σ - Ñ_σ` of the underlying
    /// electrons: `b†, b̃` raise it, `b, b̃†` lower it.
    pub fn charge(&self) -> i32 {
        match (self.kind, self.tilde) {
            (Ladder::Creation, false) | (Ladder::Annihilation, true) => 1,
            _ => -1,
        }
    }
}

impl fmt::Display for OperatorSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = if self.tilde { "bt" } else { "b" };
        let dag = if self.is_creation() { "+" } else { "" };
        match self.index {
            OrbitalIndex::Site(i) => write!(f, "{name}{dag}[{i}{}]", self.spin.symbol()),
            OrbitalIndex::Label(l) => write!(f, "{name}{dag}[x{l}{}]", self.spin.symbol()),
        }
    }
}

/// A complex coefficient times an ordered product of symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorTerm {
    pub coeff: Complex64,
    pub symbols: Vec<OperatorSymbol>,
}

impl OperatorTerm {
    pub fn new(coeff: Complex64, symbols: Vec<OperatorSymbol>) -> Self {
        Self { coeff, symbols }
    }

    pub fn scalar(coeff: Complex64) -> Self {
        Self::new(coeff, Vec::new())
    }

    pub fn is_normal_ordered(&self) -> bool {
        let first_annihilator = self
            .symbols
            .iter()
            .position(|s| !s.is_creation())
            .unwrap_or(self.symbols.len());
        self.symbols[first_annihilator..]
            .iter()
            .all(|s| !s.is_creation())
    }

    pub fn n_creators(&self) -> usize {
        self.symbols.iter().filter(|s| s.is_creation()).count()
    }

    pub fn n_annihilators(&self) -> usize {
        self.symbols.len() - self.n_creators()
    }

    /// Net `Q_σ` carried by the term.
    pub fn charge(&self, spin: Spin) -> i32 {
        self.symbols
            .iter()
            .filter(|s| s.spin == spin)
            .map(|s| s.charge())
            .sum()
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self::new(self.coeff * factor, self.symbols.clone())
    }
}

impl fmt::Display for OperatorTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:+.6e}{:+.6e}i)", self.coeff.re, self.coeff.im)?;
        for s in &self.symbols {
            write!(f, " {s}")?;
        }
        Ok(())
    }
}

/// Anti-linear tilde conjugation.
///
/// Coefficients are conjugated and every symbol changes species, keeping
/// the order. Following the fermionic double-tilde rule, `b → b̃`,
/// `b† → b̃†`, `b̃ → -b`, `b̃† → -b†`, so the map is an involution on terms
/// with an even number of symbols.
pub fn tilde_conjugate(term: &OperatorTerm) -> OperatorTerm {
    let mut coeff = term.coeff.conj();
    let symbols = term
        .symbols
        .iter()
        .map(|s| {
            if s.tilde {
                coeff = -coeff;
            }
            OperatorSymbol { tilde: !s.tilde, ..*s }
        })
        .collect();
    OperatorTerm::new(coeff, symbols)
}

/// Brings a product of symbols with concrete orbitals into canonical normal
/// order (creators left, each group sorted), applying anticommutation signs
/// and contractions, and merges like terms.
///
/// Panics if a symbol carries a free label: contractions between labels are
/// the business of the equation generator, not of this routine.
pub fn normal_order(terms: &[OperatorTerm]) -> Vec<OperatorTerm> {
    let mut acc: BTreeMap<Vec<OperatorSymbol>, Complex64> = BTreeMap::new();
    let mut stack: Vec<OperatorTerm> = terms.to_vec();
    while let Some(term) = stack.pop() {
        assert!(
            term.symbols
                .iter()
                .all(|s| matches!(s.index, OrbitalIndex::Site(_))),
            "normal_order requires concrete orbital indices"
        );
        if term.coeff == Complex64::new(0.0, 0.0) {
            continue;
        }
        // first annihilator immediately followed by a creator
        let swap_at = term
            .symbols
            .windows(2)
            .position(|w| !w[0].is_creation() && w[1].is_creation());
        match swap_at {
            Some(k) => {
                let mut swapped = term.symbols.clone();
                swapped.swap(k, k + 1);
                stack.push(OperatorTerm::new(-term.coeff, swapped));
                if term.symbols[k].same_mode(&term.symbols[k + 1]) {
                    let mut contracted = term.symbols.clone();
                    contracted.drain(k..k + 2);
                    stack.push(OperatorTerm::new(term.coeff, contracted));
                }
            }
            None => {
                if let Some((sign, sorted)) = canonical_order(&term.symbols) {
                    *acc.entry(sorted).or_default() += term.coeff * sign;
                }
            }
        }
    }
    acc.into_iter()
        .filter(|(_, c)| c.norm() > 1e-14)
        .map(|(symbols, coeff)| OperatorTerm::new(coeff, symbols))
        .collect()
}

/// Sorts a normal-ordered string within its creator and annihilator groups.
/// Returns `None` when a symbol repeats (the product vanishes).
fn canonical_order(symbols: &[OperatorSymbol]) -> Option<(f64, Vec<OperatorSymbol>)> {
    let split = symbols
        .iter()
        .position(|s| !s.is_creation())
        .unwrap_or(symbols.len());
    let mut sign = 1.0;
    let mut out = Vec::with_capacity(symbols.len());
    for group in [&symbols[..split], &symbols[split..]] {
        let mut g = group.to_vec();
        sign *= sort_with_parity(&mut g);
        if g.windows(2).any(|w| w[0] == w[1]) {
            return None;
        }
        out.extend(g);
    }
    Some((sign, out))
}

/// Insertion sort returning the permutation sign.
pub(crate) fn sort_with_parity<T: Ord>(items: &mut [T]) -> f64 {
    let mut sign = 1.0;
    for i in 1..items.len() {
        let mut j = i;
        while j > 0 && items[j - 1].cmp(&items[j]) == Ordering::Greater {
            items.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
    }
    sign
}

/// A ladder operator of the original (untransformed) doubled space:
/// `a`, `a†`, `ã`, `ã†`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mode {
    pub dagger: bool,
    pub tilde: bool,
    pub spin: Spin,
    pub site: usize,
}

impl Mode {
    pub fn new(dagger: bool, tilde: bool, spin: Spin, site: usize) -> Self {
        Self {
            dagger,
            tilde,
            spin,
            site,
        }
    }
}

/// Expresses an original ladder operator in quasi-particle symbols by
/// inverting the thermal Bogoliubov transformation:
/// `a† = u b† + b̃`, `a = b + v b̃†`, `ã = b̃ - v b†`, `ã† = u b̃† - b`.
pub fn quasi_particle_expansion(mode: Mode, occ: &Occupations) -> Vec<(f64, OperatorSymbol)> {
    let v = occ.v(mode.spin)[mode.site];
    let u = occ.u(mode.spin)[mode.site];
    let (s, i) = (mode.spin, mode.site);
    let c = |tilde| OperatorSymbol::create(tilde, s, i);
    let a = |tilde| OperatorSymbol::annihilate(tilde, s, i);
    match (mode.dagger, mode.tilde) {
        (true, false) => vec![(u, c(false)), (1.0, a(true))],
        (false, false) => vec![(1.0, a(false)), (v, c(true))],
        (false, true) => vec![(1.0, a(true)), (-v, c(false))],
        (true, true) => vec![(u, c(true)), (-1.0, a(false))],
    }
}

/// Rewrites `coeff × Π modes` in quasi-particles and normal orders it.
pub fn transform_product(coeff: Complex64, modes: &[Mode], occ: &Occupations) -> Vec<OperatorTerm> {
    let mut expanded = vec![OperatorTerm::scalar(coeff)];
    for &mode in modes {
        let pieces = quasi_particle_expansion(mode, occ);
        expanded = expanded
            .iter()
            .flat_map(|t| {
                pieces.iter().filter(|(c, _)| *c != 0.0).map(move |(c, sym)| {
                    let mut symbols = t.symbols.clone();
                    symbols.push(*sym);
                    OperatorTerm::new(t.coeff * *c, symbols)
                })
            })
            .collect();
    }
    normal_order(&expanded)
}

/// Merges like terms of already normal-ordered lists (canonicalizing order)
/// and drops vanishing coefficients.
pub fn simplify(terms: &[OperatorTerm]) -> Vec<OperatorTerm> {
    normal_order(terms)
}

/// `a - b` for term lists, simplified.
pub fn difference(a: &[OperatorTerm], b: &[OperatorTerm]) -> Vec<OperatorTerm> {
    let mut all = a.to_vec();
    all.extend(b.iter().map(|t| t.scaled(Complex64::new(-1.0, 0.0))));
    simplify(&all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const A: Spin = Spin::Alpha;
    const B: Spin = Spin::Beta;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn occ_single(v: f64) -> Occupations {
        Occupations::from_v([vec![v, 0.3], vec![v, 0.8]])
    }

    #[test]
    fn tilde_conjugate_pair_creation() {
        // c b†_i b̃†_j → -c* b̃†_i b†_j = c* b†_j b̃†_i
        let t = OperatorTerm::new(
            c(0.3, 0.7),
            vec![OperatorSymbol::create(false, A, 1), OperatorSymbol::create(true, A, 2)],
        );
        let tt = tilde_conjugate(&t);
        assert_eq!(tt.coeff, c(-0.3, 0.7));
        assert_eq!(
            tt.symbols,
            vec![OperatorSymbol::create(true, A, 1), OperatorSymbol::create(false, A, 2)]
        );
        let canon = normal_order(&[tt]);
        assert_eq!(canon.len(), 1);
        assert_eq!(canon[0].coeff, c(0.3, -0.7));
        assert_eq!(
            canon[0].symbols,
            vec![OperatorSymbol::create(false, A, 2), OperatorSymbol::create(true, A, 1)]
        );
    }

    #[test]
    fn tilde_invariant_term_is_fixed_point() {
        // b†b + b̃†b̃ with a real coefficient
        let terms = vec![
            OperatorTerm::new(
                c(0.5, 0.0),
                vec![OperatorSymbol::create(false, A, 0), OperatorSymbol::annihilate(false, A, 0)],
            ),
            OperatorTerm::new(
                c(0.5, 0.0),
                vec![OperatorSymbol::create(true, A, 0), OperatorSymbol::annihilate(true, A, 0)],
            ),
        ];
        let conj: Vec<_> = terms.iter().map(tilde_conjugate).collect();
        assert_eq!(simplify(&conj), simplify(&terms));
    }

    #[test]
    fn normal_order_contracts() {
        // b b† = 1 - b† b
        let t = OperatorTerm::new(
            c(1.0, 0.0),
            vec![OperatorSymbol::annihilate(false, A, 0), OperatorSymbol::create(false, A, 0)],
        );
        let no = normal_order(&[t]);
        assert_eq!(no.len(), 2);
        assert!(no.iter().any(|t| t.symbols.is_empty() && t.coeff == c(1.0, 0.0)));
        assert!(no
            .iter()
            .any(|t| t.symbols.len() == 2 && t.coeff == c(-1.0, 0.0)));
        // different species anticommute without contraction
        let t = OperatorTerm::new(
            c(1.0, 0.0),
            vec![OperatorSymbol::annihilate(true, A, 0), OperatorSymbol::create(false, A, 0)],
        );
        let no = normal_order(&[t]);
        assert_eq!(no.len(), 1);
        assert_eq!(no[0].coeff, c(-1.0, 0.0));
    }

    #[test]
    fn quasi_particle_anticommutators_are_canonical() {
        // rebuild b, b†, b̃, b̃† from the forward transformation and check
        // {b_i, b†_j} = δ, {b̃_i, b̃†_j} = δ and all mixed pairs vanish, by
        // expanding the original operators back into quasi-particles.
        let occ = occ_single(0.37);
        let (u, v) = (occ.u(A)[0], occ.v(A)[0]);
        // forward: b† = a† - ã, b̃† = ã† + a, b = u a - v ã†, b̃ = u ã + v a†
        let fwd = |kind: usize| -> Vec<(f64, Mode)> {
            let m = |d, t| Mode::new(d, t, A, 0);
            match kind {
                0 => vec![(1.0, m(true, false)), (-1.0, m(false, true))],
                1 => vec![(1.0, m(true, true)), (1.0, m(false, false))],
                2 => vec![(u, m(false, false)), (-v, m(true, true))],
                _ => vec![(u, m(false, true)), (v, m(true, false))],
            }
        };
        let anticomm = |x: usize, y: usize| -> Vec<OperatorTerm> {
            let mut out = Vec::new();
            for (cx, mx) in fwd(x) {
                for (cy, my) in fwd(y) {
                    out.extend(transform_product(c(cx * cy, 0.0), &[mx, my], &occ));
                    out.extend(transform_product(c(cx * cy, 0.0), &[my, mx], &occ));
                }
            }
            simplify(&out)
        };
        let identity = vec![OperatorTerm::scalar(c(1.0, 0.0))];
        assert_eq!(anticomm(2, 0), identity);
        assert_eq!(anticomm(3, 1), identity);
        for (x, y) in [(0, 1), (2, 3), (2, 1), (3, 0), (0, 0), (1, 1), (2, 2), (3, 3)] {
            assert!(anticomm(x, y).is_empty(), "{{{x},{y}}} should vanish");
        }
    }

    #[test]
    fn number_operator_difference() {
        // n - ñ = b†b - b̃†b̃ for any occupation
        let occ = occ_single(0.42);
        let n = transform_product(c(1.0, 0.0), &[Mode::new(true, false, B, 0), Mode::new(false, false, B, 0)], &occ);
        let nt = transform_product(c(1.0, 0.0), &[Mode::new(true, true, B, 0), Mode::new(false, true, B, 0)], &occ);
        let expected = simplify(&[
            OperatorTerm::new(c(1.0, 0.0), vec![OperatorSymbol::create(false, B, 0), OperatorSymbol::annihilate(false, B, 0)]),
            OperatorTerm::new(c(-1.0, 0.0), vec![OperatorSymbol::create(true, B, 0), OperatorSymbol::annihilate(true, B, 0)]),
        ]);
        assert_eq!(difference(&n, &nt), expected);
        // ñ is the tilde conjugate of n
        let conj: Vec<_> = n.iter().map(tilde_conjugate).collect();
        let d = difference(&simplify(&conj), &nt);
        assert!(d.is_empty(), "{d:?}");
    }

    fn arb_symbol() -> impl Strategy<Value = OperatorSymbol> {
        (any::<bool>(), any::<bool>(), any::<bool>(), 0usize..3).prop_map(|(cr, tl, sp, i)| {
            OperatorSymbol::new(
                if cr { Ladder::Creation } else { Ladder::Annihilation },
                tl,
                if sp { A } else { B },
                OrbitalIndex::Site(i),
            )
        })
    }

    proptest! {
        #[test]
        fn tilde_twice_is_identity_on_even_terms(re in -1.0f64..1.0, im in -1.0f64..1.0, syms in proptest::collection::vec(arb_symbol(), 0..3)) {
            let mut symbols = syms.clone();
            symbols.extend(syms.iter().rev());
            let t = OperatorTerm::new(c(re, im), symbols);
            prop_assert_eq!(tilde_conjugate(&tilde_conjugate(&t)), t);
        }

        #[test]
        fn normal_order_output_is_normal(syms in proptest::collection::vec(arb_symbol(), 0..6)) {
            let out = normal_order(&[OperatorTerm::new(c(1.0, 0.0), syms)]);
            for t in out {
                prop_assert!(t.is_normal_ordered());
            }
        }
    }
}
