use ndarray::{Array2, Array4, Zip};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::Spin;

/// Excitation level of the cluster operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Truncation {
    Singles,
    SinglesDoubles,
}

/// Spin block of the doubles amplitudes. Blocks that would change the
/// per-spin charge are never populated and are not stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PairBlock {
    AlphaAlpha,
    BetaBeta,
    AlphaBeta,
}

impl PairBlock {
    pub const ALL: [PairBlock; 3] = [PairBlock::AlphaAlpha, PairBlock::BetaBeta, PairBlock::AlphaBeta];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Spins of the `(i, j)` and `(k, l)` index pairs of `t[i,k,j,l]`.
    pub fn spins(self) -> (Spin, Spin) {
        match self {
            PairBlock::AlphaAlpha => (Spin::Alpha, Spin::Alpha),
            PairBlock::BetaBeta => (Spin::Beta, Spin::Beta),
            PairBlock::AlphaBeta => (Spin::Alpha, Spin::Beta),
        }
    }

    pub fn same_spin(self) -> Option<Spin> {
        match self {
            PairBlock::AlphaAlpha => Some(Spin::Alpha),
            PairBlock::BetaBeta => Some(Spin::Beta),
            PairBlock::AlphaBeta => None,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            PairBlock::AlphaAlpha => "aa",
            PairBlock::BetaBeta => "bb",
            PairBlock::AlphaBeta => "ab",
        }
    }
}

/// Cluster amplitudes
///
/// ```text
/// T = Σ_σ t¹_σ[i,j] b†_iσ b̃†_jσ
///   + ¼ Σ_σ t²_σσ[i,k,j,l] b†_iσ b†_kσ b̃†_lσ b̃†_jσ
///   +   Σ   t²_αβ[i,k,j,l] b†_iα b†_kβ b̃†_lβ b̃†_jα
/// ```
///
/// The same-spin doubles blocks are antisymmetric in `i↔k` and in `j↔l`.
/// Singles-only states carry no doubles storage at all.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAmplitudes {
    pub t1: [Array2<Complex64>; 2],
    pub t2: Option<[Array4<Complex64>; 3]>,
    pub time: f64,
}

impl ClusterAmplitudes {
    pub fn zeros(n: usize, truncation: Truncation) -> Self {
        let t2 = match truncation {
            Truncation::Singles => None,
            Truncation::SinglesDoubles => Some([
                Array4::zeros((n, n, n, n)),
                Array4::zeros((n, n, n, n)),
                Array4::zeros((n, n, n, n)),
            ]),
        };
        Self {
            t1: [Array2::zeros((n, n)), Array2::zeros((n, n))],
            t2,
            time: 0.0,
        }
    }

    pub fn n_orbitals(&self) -> usize {
        self.t1[0].nrows()
    }

    pub fn truncation(&self) -> Truncation {
        if self.t2.is_some() {
            Truncation::SinglesDoubles
        } else {
            Truncation::Singles
        }
    }

    pub fn t1(&self, spin: Spin) -> &Array2<Complex64> {
        &self.t1[spin.index()]
    }

    pub fn t2(&self, block: PairBlock) -> Option<&Array4<Complex64>> {
        self.t2.as_ref().map(|t| &t[block.index()])
    }

    pub fn is_finite(&self) -> bool {
        let finite = |z: &Complex64| z.re.is_finite() && z.im.is_finite();
        self.t1.iter().all(|m| m.iter().all(finite))
            && self
                .t2
                .iter()
                .flatten()
                .all(|m| m.iter().all(finite))
    }

    /// Projects the same-spin doubles blocks onto their antisymmetric part
    /// and returns the largest correction applied.
    pub fn antisymmetrize(&mut self) -> f64 {
        let mut worst: f64 = 0.0;
        if let Some(t2) = &mut self.t2 {
            for block in [PairBlock::AlphaAlpha, PairBlock::BetaBeta] {
                worst = worst.max(antisymmetrize_in_place(&mut t2[block.index()]));
            }
        }
        worst
    }

    /// Checks that the doubles layout matches `n` orbitals.
    pub(crate) fn check_dims(&self, n: usize) -> Result<()> {
        let t1_ok = self.t1.iter().all(|m| m.dim() == (n, n));
        let t2_ok = self
            .t2
            .iter()
            .flatten()
            .all(|m| m.dim() == (n, n, n, n));
        if t1_ok && t2_ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "amplitudes do not match {n} orbitals"
            )))
        }
    }

    /// Runge-Kutta stage update in one sweep: `acc += a·k`, `y = base + b·k`.
    pub(crate) fn rk_stage(
        acc: &mut ClusterAmplitudes,
        y: &mut ClusterAmplitudes,
        base: &ClusterAmplitudes,
        a: Complex64,
        b: Complex64,
        k: &Residuals,
        first: bool,
    ) {
        // on the first stage `acc` starts from `base` instead of being copied
        for s in 0..2 {
            Zip::from(&mut acc.t1[s])
                .and(&mut y.t1[s])
                .and(&base.t1[s])
                .and(&k.r1[s])
                .for_each(|acc, y, &x, &r| {
                    *acc = if first { x } else { *acc } + a * r;
                    *y = x + b * r;
                });
        }
        if let (Some(a2), Some(y2), Some(b2), Some(r2)) = (&mut acc.t2, &mut y.t2, &base.t2, &k.r2) {
            for blk in 0..3 {
                Zip::from(&mut a2[blk])
                    .and(&mut y2[blk])
                    .and(&b2[blk])
                    .and(&r2[blk])
                    .for_each(|acc, y, &x, &r| {
                        *acc = if first { x } else { *acc } + a * r;
                        *y = x + b * r;
                    });
            }
        }
        y.time = base.time;
    }

    /// Last stage: `self = acc + c · k`. Returns whether every written
    /// entry is finite.
    pub(crate) fn rk_finish(&mut self, acc: &ClusterAmplitudes, c: Complex64, k: &Residuals) -> bool {
        let mut finite = true;
        for s in 0..2 {
            Zip::from(&mut self.t1[s]).and(&acc.t1[s]).and(&k.r1[s]).for_each(|x, &a, &r| {
                *x = a + c * r;
                finite &= x.re.is_finite() && x.im.is_finite();
            });
        }
        if let (Some(x2), Some(a2), Some(r2)) = (&mut self.t2, &acc.t2, &k.r2) {
            for blk in 0..3 {
                let mut sum = 0.0;
                Zip::from(&mut x2[blk]).and(&a2[blk]).and(&r2[blk]).for_each(|x, &a, &r| {
                    *x = a + c * r;
                    sum += x.re + x.im;
                });
                // NaN and infinities survive the sum; overflow of a finite
                // sum would need entries near f64::MAX anyway
                finite &= sum.is_finite();
            }
        }
        finite
    }
}

/// `A(Y)[i,k,j,l] = ¼ (Y[ikjl] − Y[kijl] − Y[iklj] + Y[kilj])`.
pub fn antisymmetrized(y: &Array4<Complex64>) -> Array4<Complex64> {
    let n = y.dim().0;
    let mut out = Array4::zeros((n, n, n, n));
    for i in 0..n {
        for k in 0..n {
            for j in 0..n {
                for l in 0..n {
                    out[(i, k, j, l)] = 0.25
                        * (y[(i, k, j, l)] - y[(k, i, j, l)] - y[(i, k, l, j)]
                            + y[(k, i, l, j)]);
                }
            }
        }
    }
    out
}

/// In-place `A(Y)`; returns the largest change of any element.
pub fn antisymmetrize_in_place(y: &mut Array4<Complex64>) -> f64 {
    let n = y.dim().0;
    let y = y.as_slice_mut().expect("standard layout");
    let at = |i: usize, k: usize, j: usize, l: usize| ((i * n + k) * n + j) * n + l;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for k in i..n {
            for j in 0..n {
                for l in j..n {
                    let (a, b, c, d) = (at(i, k, j, l), at(k, i, j, l), at(i, k, l, j), at(k, i, l, j));
                    let v = 0.25 * (y[a] - y[b] - y[c] + y[d]);
                    worst = worst
                        .max((y[a] - v).norm_sqr())
                        .max((y[b] + v).norm_sqr())
                        .max((y[c] + v).norm_sqr())
                        .max((y[d] - v).norm_sqr());
                    y[a] = v;
                    y[b] = -v;
                    y[c] = -v;
                    y[d] = v;
                }
            }
        }
    }
    worst.sqrt()
}

/// Equation-of-motion residuals, `i dt/dt = R`, in the amplitude layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub r1: [Array2<Complex64>; 2],
    pub r2: Option<[Array4<Complex64>; 3]>,
}

impl Residuals {
    pub fn zeros(n: usize, truncation: Truncation) -> Self {
        let a = ClusterAmplitudes::zeros(n, truncation);
        Self {
            r1: a.t1,
            r2: a.t2,
        }
    }

    pub fn r1(&self, spin: Spin) -> &Array2<Complex64> {
        &self.r1[spin.index()]
    }

    pub fn r2(&self, block: PairBlock) -> Option<&Array4<Complex64>> {
        self.r2.as_ref().map(|r| &r[block.index()])
    }

    pub fn is_finite(&self) -> bool {
        let finite = |z: &Complex64| z.re.is_finite() && z.im.is_finite();
        self.r1.iter().all(|m| m.iter().all(finite))
            && self.r2.iter().flatten().all(|m| m.iter().all(finite))
    }

    /// Largest entry-wise deviation between two residual sets.
    pub fn max_abs_diff(&self, other: &Residuals) -> f64 {
        let mut worst: f64 = 0.0;
        for s in 0..2 {
            Zip::from(&self.r1[s])
                .and(&other.r1[s])
                .for_each(|a, b| worst = worst.max((a - b).norm()));
        }
        match (&self.r2, &other.r2) {
            (Some(a), Some(b)) => {
                for k in 0..3 {
                    Zip::from(&a[k])
                        .and(&b[k])
                        .for_each(|x, y| worst = worst.max((x - y).norm()));
                }
            }
            (None, None) => {}
            _ => return f64::INFINITY,
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        let zero = Residuals {
            r1: [
                Array2::zeros(self.r1[0].dim()),
                Array2::zeros(self.r1[1].dim()),
            ],
            r2: self
                .r2
                .as_ref()
                .map(|r| [0, 1, 2].map(|k| Array4::zeros(r[k].dim()))),
        };
        self.max_abs_diff(&zero)
    }
}

/// `max_σ max |t¹ − (t¹)†|`.
pub fn hermiticity_deviation(state: &ClusterAmplitudes) -> f64 {
    let mut worst: f64 = 0.0;
    for t in &state.t1 {
        let n = t.nrows();
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((t[(i, j)] - t[(j, i)].conj()).norm());
            }
        }
    }
    worst
}
