//! Matrix-product-state reference propagator over the doubled chain.
//!
//! One MPS site per spin-orbital, carrying that orbital's non-tilde and
//! tilde mode; the local index is `2n + ñ` (basis 00, 01, 10, 11). Sites are
//! ordered α impurity, α bath, β impurity, β bath, which is also the mode
//! order of the Jordan-Wigner string (non-tilde before tilde within a site),
//! so an even operator on two adjacent sites needs only local signs.
//!
//! Impurity–bath couplings are reached by swapping the impurity down its
//! chain, one gate and one fermionic swap per bath site.

use std::io::{self, Read, Write};

use nalgebra::DMatrix;
use ndarray::Array3;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{FermionOperator, ModeOp};
use crate::model::{build_bath, impurity_level, BathDiscretization, Occupations, SiamConfig, Spin};
use crate::observables::total_number;
use crate::trajectory::{schedule, TrajectoryRecord, TrajectorySample};

type C64 = Complex64;
const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

pub const LOCAL_DIM: usize = 4;

/// Local index of the fully occupied pair `|11⟩`.
const PAIR: usize = 3;

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Density-matrix ket as an MPS with tensors `(left bond, 4, right bond)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MpsState {
    tensors: Vec<Array3<C64>>,
    /// chain position → site label `spin · n_orbitals + orbital`
    order: Vec<usize>,
    n_orbitals: usize,
    center: usize,
    discarded: f64,
}

impl MpsState {
    /// Product state `Π (u_i |00⟩ + v_i |11⟩)`, bond dimension 1.
    pub fn thermal(occ: &Occupations) -> Self {
        let n = occ.n_orbitals();
        let mut tensors = Vec::with_capacity(2 * n);
        // unit-norm sites with the overall norm on the center, so the
        // chain starts in canonical form
        let mut scale = 1.0;
        for spin in Spin::BOTH {
            for i in 0..n {
                let (u, v) = (occ.u(spin)[i], occ.v(spin)[i]);
                let norm = u.hypot(v);
                scale *= norm;
                let mut a = Array3::zeros((1, LOCAL_DIM, 1));
                a[[0, 0, 0]] = re(u / norm);
                a[[0, PAIR, 0]] = re(v / norm);
                tensors.push(a);
            }
        }
        tensors[0].mapv_inplace(|z| z * scale);
        Self {
            tensors,
            order: (0..2 * n).collect(),
            n_orbitals: n,
            center: 0,
            discarded: 0.0,
        }
    }

    pub fn n_sites(&self) -> usize {
        self.tensors.len()
    }

    pub fn n_orbitals(&self) -> usize {
        self.n_orbitals
    }

    pub fn tensors(&self) -> &[Array3<C64>] {
        &self.tensors
    }

    /// Site label held by each chain position.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// All `n_sites + 1` bond dimensions, the trivial outer ones included.
    pub fn bond_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.tensors[0].dim().0];
        dims.extend(self.tensors.iter().map(|a| a.dim().2));
        dims
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Sum over all truncations so far of the relative discarded weight.
    pub fn discarded_weight(&self) -> f64 {
        self.discarded
    }

    pub fn center(&self) -> usize {
        self.center
    }

    fn position_of(&self, spin: Spin, orbital: usize) -> usize {
        let label = spin.index() * self.n_orbitals + orbital;
        self.order
            .iter()
            .position(|&l| l == label)
            .expect("every label sits somewhere")
    }

    /// `⟨1|…` contracted from the left up to (excluding) each position, and
    /// from the right from each position on.
    fn unit_environments(&self) -> (Vec<Vec<C64>>, Vec<Vec<C64>>) {
        let l = self.n_sites();
        let mut left = vec![vec![ONE]];
        for a in &self.tensors {
            let (cl, _, cr) = a.dim();
            let prev = left.last().expect("seeded");
            let mut next = vec![ZERO; cr];
            for x in 0..cl {
                for (r, nx) in next.iter_mut().enumerate() {
                    *nx += prev[x] * (a[[x, 0, r]] + a[[x, PAIR, r]]);
                }
            }
            left.push(next);
        }
        let mut right = vec![vec![ONE]; l + 1];
        for p in (0..l).rev() {
            let a = &self.tensors[p];
            let (cl, _, cr) = a.dim();
            let mut next = vec![ZERO; cl];
            for (x, nx) in next.iter_mut().enumerate() {
                for r in 0..cr {
                    *nx += (a[[x, 0, r]] + a[[x, PAIR, r]]) * right[p + 1][r];
                }
            }
            right[p] = next;
        }
        (left, right)
    }

    /// `⟨1|ρ⟩`.
    pub fn trace(&self) -> C64 {
        let (left, _) = self.unit_environments();
        left[self.n_sites()][0]
    }

    /// `⟨1|a†_iσ a_iσ|ρ⟩`: the unit bra with `|11⟩` alone kept on the site.
    pub fn number(&self, spin: Spin, orbital: usize) -> f64 {
        let (left, right) = self.unit_environments();
        self.number_with(&left, &right, self.position_of(spin, orbital))
    }

    fn number_with(&self, left: &[Vec<C64>], right: &[Vec<C64>], p: usize) -> f64 {
        let a = &self.tensors[p];
        let (cl, _, cr) = a.dim();
        let mut s = ZERO;
        for x in 0..cl {
            for r in 0..cr {
                s += left[p][x] * a[[x, PAIR, r]] * right[p + 1][r];
            }
        }
        s.re
    }

    pub fn numbers(&self) -> [Vec<f64>; 2] {
        let (left, right) = self.unit_environments();
        Spin::BOTH.map(|s| {
            (0..self.n_orbitals)
                .map(|i| self.number_with(&left, &right, self.position_of(s, i)))
                .collect()
        })
    }

    /// Full amplitude vector in the occupation basis of the dense oracle.
    /// Only for small chains.
    pub fn to_dense(&self) -> Result<Vec<C64>> {
        if self.n_sites() > 10 {
            return Err(Error::Capacity(format!(
                "dense expansion of {} sites",
                self.n_sites()
            )));
        }
        if self.order.iter().enumerate().any(|(p, &l)| p != l) {
            return Err(Error::DimensionMismatch(
                "sites are not in chain order".into(),
            ));
        }
        let mut v = vec![ONE];
        for a in &self.tensors {
            let (cl, d, cr) = a.dim();
            let rows = v.len() / cl;
            let mut next = vec![ZERO; rows * d * cr];
            for row in 0..rows {
                for x in 0..cl {
                    let c = v[row * cl + x];
                    if c == ZERO {
                        continue;
                    }
                    for s in 0..d {
                        for r in 0..cr {
                            next[(row * d + s) * cr + r] += c * a[[x, s, r]];
                        }
                    }
                }
            }
            v = next;
        }
        Ok(v)
    }

    /// Moves the orthogonality center by QR steps.
    pub fn move_center(&mut self, target: usize) {
        assert!(target < self.n_sites());
        while self.center < target {
            let c = self.center;
            let (cl, d, cr) = self.tensors[c].dim();
            let m = DMatrix::from_row_slice(cl * d, cr, self.tensors[c].as_slice().expect("standard"));
            let qr = m.qr();
            let (q, r) = (qr.q(), qr.r());
            let k = q.ncols();
            self.tensors[c] = Array3::from_shape_fn((cl, d, k), |(x, s, y)| q[(x * d + s, y)]);
            let next = &self.tensors[c + 1];
            let (_, d2, cr2) = next.dim();
            let b = DMatrix::from_row_slice(cr, d2 * cr2, next.as_slice().expect("standard"));
            let rb = r * b;
            self.tensors[c + 1] = Array3::from_shape_fn((k, d2, cr2), |(x, s, y)| rb[(x, s * cr2 + y)]);
            self.center += 1;
        }
        while self.center > target {
            let c = self.center;
            let (cl, d, cr) = self.tensors[c].dim();
            // LQ through the QR of the adjoint
            let m = DMatrix::from_row_slice(cl, d * cr, self.tensors[c].as_slice().expect("standard"));
            let qr = m.adjoint().qr();
            let (q, r) = (qr.q().adjoint(), qr.r().adjoint());
            let k = q.nrows();
            self.tensors[c] = Array3::from_shape_fn((k, d, cr), |(x, s, y)| q[(x, s * cr + y)]);
            let prev = &self.tensors[c - 1];
            let (cl0, d0, _) = prev.dim();
            let a = DMatrix::from_row_slice(cl0 * d0, cl, prev.as_slice().expect("standard"));
            let ar = a * r;
            self.tensors[c - 1] = Array3::from_shape_fn((cl0, d0, k), |(x, s, y)| ar[(x * d0 + s, y)]);
            self.center -= 1;
        }
    }

    /// Applies a 16×16 two-site operator (left site index major) at
    /// positions `pos, pos + 1` and splits the result by SVD, dropping
    /// singular values below `threshold` relative to their 2-norm. The
    /// center ends on `pos` if `center_left`, else on `pos + 1`.
    pub fn apply_two_site(
        &mut self,
        pos: usize,
        gate: &DMatrix<C64>,
        center_left: bool,
        trunc: Truncation,
        time: f64,
    ) -> Result<()> {
        assert!(pos + 1 < self.n_sites());
        if self.center < pos {
            self.move_center(pos);
        } else if self.center > pos + 1 {
            self.move_center(pos + 1);
        }
        let (cl, d, cm) = self.tensors[pos].dim();
        let (_, _, cr) = self.tensors[pos + 1].dim();
        let a = DMatrix::from_row_slice(cl * d, cm, self.tensors[pos].as_slice().expect("standard"));
        let b = DMatrix::from_row_slice(cm, d * cr, self.tensors[pos + 1].as_slice().expect("standard"));
        let ab = a * b;
        // theta[(x, s'), (t', y)] = Σ G[s't', st] ab[(x, s), (t, y)]
        let mut theta = DMatrix::<C64>::zeros(cl * d, d * cr);
        for x in 0..cl {
            for y in 0..cr {
                let mut local = [ZERO; LOCAL_DIM * LOCAL_DIM];
                for s in 0..d {
                    for t in 0..d {
                        local[s * d + t] = ab[(x * d + s, t * cr + y)];
                    }
                }
                for s in 0..d {
                    for t in 0..d {
                        let row = s * d + t;
                        let mut acc = ZERO;
                        for (col, &v) in local.iter().enumerate() {
                            acc += gate[(row, col)] * v;
                        }
                        theta[(x * d + s, t * cr + y)] = acc;
                    }
                }
            }
        }
        let Some((u, sv, vt)) = thin_svd(&theta) else {
            return Err(Error::NonFinite {
                time,
                what: format!("SVD of the two-site tensor at position {pos} failed"),
            });
        };
        let mut idx: Vec<usize> = (0..sv.len()).collect();
        idx.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
        let total: f64 = sv.iter().map(|s| s * s).sum();
        if !total.is_finite() {
            return Err(Error::NonFinite {
                time,
                what: format!("two-site tensor at position {pos}"),
            });
        }
        let norm = total.sqrt();
        let keep: Vec<usize> = idx
            .iter()
            .copied()
            .enumerate()
            .filter(|&(rank, i)| rank == 0 || sv[i] >= trunc.svd_threshold * norm)
            .map(|(_, i)| i)
            .collect();
        let k = keep.len();
        if k > trunc.max_bond {
            return Err(Error::BondOverflow {
                time,
                position: pos + 1,
                bond: k,
                max_bond: trunc.max_bond,
            });
        }
        if total > 0.0 && k < sv.len() {
            let dropped: f64 = idx[k..].iter().map(|&i| sv[i] * sv[i]).sum();
            self.discarded += dropped / total;
        }
        self.tensors[pos] = Array3::from_shape_fn((cl, d, k), |(x, s, j)| {
            let i = keep[j];
            u[(x * d + s, i)] * if center_left { sv[i] } else { 1.0 }
        });
        self.tensors[pos + 1] = Array3::from_shape_fn((k, d, cr), |(j, t, y)| {
            let i = keep[j];
            vt[(i, t * cr + y)] * if center_left { 1.0 } else { sv[i] }
        });
        self.center = if center_left { pos } else { pos + 1 };
        Ok(())
    }

    /// Binary dump: `u64` site count, `u64` bond dimensions (`n_sites + 1`),
    /// then each site tensor `(left, 4, right)` row-major as `(re, im)`
    /// pairs; everything little-endian, floats as IEEE 64-bit. Local index
    /// `2n + ñ`. Chain order and center are not stored.
    pub fn write_dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(&(self.n_sites() as u64).to_le_bytes())?;
        for b in self.bond_dims() {
            w.write_all(&(b as u64).to_le_bytes())?;
        }
        for a in &self.tensors {
            for z in a.iter() {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads [`write_dump`](Self::write_dump) output; sites are taken to be
    /// in chain order with the center on the first site.
    pub fn read_dump<R: Read>(mut r: R) -> io::Result<Self> {
        let mut word = [0u8; 8];
        let mut next_u64 = |r: &mut R| -> io::Result<u64> {
            r.read_exact(&mut word)?;
            Ok(u64::from_le_bytes(word))
        };
        let invalid = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
        let n = next_u64(&mut r)? as usize;
        if n == 0 || n % 2 == 1 || n > 1 << 16 {
            return Err(invalid("bad site count"));
        }
        let bonds = (0..=n)
            .map(|_| next_u64(&mut r).map(|b| b as usize))
            .collect::<io::Result<Vec<_>>>()?;
        if bonds[0] != 1 || bonds[n] != 1 || bonds.iter().any(|&b| b == 0 || b > 1 << 16) {
            return Err(invalid("bad bond dimensions"));
        }
        let mut tensors = Vec::with_capacity(n);
        for p in 0..n {
            let len = bonds[p] * LOCAL_DIM * bonds[p + 1];
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                let mut pair = [0u8; 16];
                r.read_exact(&mut pair)?;
                let (a, b) = pair.split_at(8);
                data.push(C64::new(
                    f64::from_le_bytes(a.try_into().expect("8 bytes")),
                    f64::from_le_bytes(b.try_into().expect("8 bytes")),
                ));
            }
            tensors.push(
                Array3::from_shape_vec((bonds[p], LOCAL_DIM, bonds[p + 1]), data)
                    .map_err(|e| invalid(&e.to_string()))?,
            );
        }
        Ok(Self {
            tensors,
            order: (0..n).collect(),
            n_orbitals: n / 2,
            center: 0,
            discarded: 0.0,
        })
    }
}

/// Thin `(U, s, V†)` of `m`.
fn thin_svd(m: &DMatrix<C64>) -> Option<(DMatrix<C64>, Vec<f64>, DMatrix<C64>)> {
    let (r, c) = m.shape();
    let f = faer::Mat::<C64>::from_fn(r, c, |i, j| m[(i, j)]);
    let svd = f.thin_svd().ok()?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let k = s.nrows();
    Some((
        DMatrix::from_fn(r, k, |i, j| u[(i, j)]),
        (0..k).map(|i| s[i].re).collect(),
        DMatrix::from_fn(k, c, |i, j| v[(j, i)].conj()),
    ))
}

/// SVD truncation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    pub svd_threshold: f64,
    pub max_bond: usize,
}

impl Truncation {
    pub fn from_config(config: &SiamConfig) -> Self {
        Self {
            svd_threshold: config.svd_threshold,
            max_bond: config.max_bond,
        }
    }
}

/// Two-site gates of one Trotter step, each for half the step `dt`.
/// All matrices act on `left ⊗ right` with the left local index major.
#[derive(Debug, Clone)]
pub struct GateSet {
    pub dt: f64,
    /// Time the impurity level is evaluated at (step midpoint).
    pub time: f64,
    /// `(H′₀)_{0i}` per spin and bath level: hopping in both copies plus
    /// the bath level and its dissipator. Impurity on the left.
    pub bath_blocks: [Vec<DMatrix<C64>>; 2],
    /// Impurity levels and `U(n_α n_β − ñ_α ñ_β)`; α impurity on the left.
    pub interaction_block: DMatrix<C64>,
    pub bath_gates: [Vec<DMatrix<C64>>; 2],
    pub interaction_gate: DMatrix<C64>,
    /// Fermionic swap `s s̃` of two adjacent sites.
    pub swap: DMatrix<C64>,
    pub truncation: Truncation,
}

// local modes of a two-site operator: left (0, 1), right (2, 3)
fn lmode(site: usize, tilde: bool) -> usize {
    2 * site + tilde as usize
}

fn number(site: usize, tilde: bool) -> Vec<ModeOp> {
    vec![ModeOp::create(lmode(site, tilde)), ModeOp::annihilate(lmode(site, tilde))]
}

fn two_site_matrix(op: &FermionOperator) -> DMatrix<C64> {
    op.to_sparse(4).to_dense()
}

/// `s_pq = 1 + a†_p a_q + a†_q a_p − n_p − n_q` for one copy.
fn single_swap(tilde: bool) -> FermionOperator {
    let (p, q) = (lmode(0, tilde), lmode(1, tilde));
    let mut s = FermionOperator::identity();
    s.add_term(ONE, vec![ModeOp::create(p), ModeOp::annihilate(q)]);
    s.add_term(ONE, vec![ModeOp::create(q), ModeOp::annihilate(p)]);
    s.add_term(-ONE, vec![ModeOp::create(p), ModeOp::annihilate(p)]);
    s.add_term(-ONE, vec![ModeOp::create(q), ModeOp::annihilate(q)]);
    s
}

pub fn swap_matrix() -> DMatrix<C64> {
    two_site_matrix(&single_swap(false).times(&single_swap(true)))
}

fn bath_block(config: &SiamConfig, energy: f64, coupling: f64, v: f64) -> DMatrix<C64> {
    let mut g = FermionOperator::zero();
    for (tilde, sign) in [(false, 1.0), (true, -1.0)] {
        g.add_term(re(sign * energy), number(1, tilde));
        let c = re(sign * coupling);
        g.add_term(c, vec![ModeOp::create(lmode(0, tilde)), ModeOp::annihilate(lmode(1, tilde))]);
        g.add_term(c, vec![ModeOp::create(lmode(1, tilde)), ModeOp::annihilate(lmode(0, tilde))]);
    }
    if config.gamma != 0.0 {
        let mi = C64::new(0.0, -1.0);
        let (g1, g2) = (config.gamma * (1.0 - v), config.gamma * v);
        let (a, at) = (lmode(1, false), lmode(1, true));
        g.add_term(mi * (g1 - g2), number(1, false));
        g.add_term(mi * (g1 - g2), number(1, true));
        g.add_term(mi * (-2.0 * g1), vec![ModeOp::annihilate(at), ModeOp::annihilate(a)]);
        g.add_term(mi * (2.0 * g2), vec![ModeOp::create(at), ModeOp::create(a)]);
        g.add_term(mi * (2.0 * g2), Vec::new());
    }
    two_site_matrix(&g)
}

fn interaction_block(config: &SiamConfig, t: f64) -> DMatrix<C64> {
    let level = impurity_level(t, config);
    let mut g = FermionOperator::zero();
    for (tilde, sign) in [(false, 1.0), (true, -1.0)] {
        for site in 0..2 {
            g.add_term(re(sign * level), number(site, tilde));
        }
        let mut ops = number(0, tilde);
        ops.extend(number(1, tilde));
        g.add_term(re(sign * config.hubbard_u), ops);
    }
    two_site_matrix(&g)
}

fn half_step(block: &DMatrix<C64>, dt: f64) -> DMatrix<C64> {
    (block * C64::new(0.0, -0.5 * dt)).exp()
}

/// Gates for the step `[t, t + dt]`; the driven impurity level is taken at
/// the midpoint.
pub fn build_gates(config: &SiamConfig, dt: f64, t: f64) -> Result<GateSet> {
    config.validate()?;
    let bath = build_bath(config)?;
    build_gates_with_bath(config, &bath, dt, t)
}

pub fn build_gates_with_bath(
    config: &SiamConfig,
    bath: &BathDiscretization,
    dt: f64,
    t: f64,
) -> Result<GateSet> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidConfig {
            key: "tebd_dt",
            reason: format!("step must be positive, got {dt}"),
        });
    }
    let occ = Occupations::reference(config, bath);
    let bath_blocks = Spin::BOTH.map(|s| {
        (0..bath.len())
            .map(|i| bath_block(config, bath.energies[i], bath.couplings[i], occ.v(s)[i + 1]))
            .collect::<Vec<_>>()
    });
    let bath_gates = [0, 1].map(|s| bath_blocks[s].iter().map(|b| half_step(b, dt)).collect());
    let time = t + 0.5 * dt;
    let ib = interaction_block(config, time);
    Ok(GateSet {
        dt,
        time,
        interaction_gate: half_step(&ib, dt),
        interaction_block: ib,
        bath_blocks,
        bath_gates,
        swap: swap_matrix(),
        truncation: Truncation::from_config(config),
    })
}

impl GateSet {
    /// Re-targets the set to the step starting at `t`; only the
    /// interaction gate carries time dependence.
    pub fn retime(&mut self, config: &SiamConfig, t: f64) {
        self.time = t + 0.5 * self.dt;
        self.interaction_block = interaction_block(config, self.time);
        self.interaction_gate = half_step(&self.interaction_block, self.dt);
    }

    fn n_bath(&self) -> usize {
        self.bath_gates[0].len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Bath(usize, usize),
    Interaction,
    Swap,
}

/// `(op, position, applications)` for one full step: the forward half
/// sweep followed by its mirror image. The two swaps meeting in the middle
/// cancel, and the gates then adjacent are applied as one.
fn step_sequence(n_bath: usize) -> Vec<(Op, usize, u32)> {
    let mut fwd = Vec::new();
    for i in 0..n_bath {
        fwd.push((Op::Bath(0, i), i));
        fwd.push((Op::Swap, i));
    }
    fwd.push((Op::Interaction, n_bath));
    for j in 0..n_bath {
        fwd.push((Op::Bath(1, j), n_bath + 1 + j));
        fwd.push((Op::Swap, n_bath + 1 + j));
    }
    let full: Vec<_> = fwd.iter().copied().chain(fwd.iter().rev().copied()).collect();
    let mut out: Vec<(Op, usize, u32)> = Vec::with_capacity(full.len());
    for (op, pos) in full {
        match out.last_mut() {
            Some(last) if last.0 == op && last.1 == pos => {
                if op == Op::Swap {
                    out.pop();
                } else {
                    last.2 += 1;
                }
            }
            _ => out.push((op, pos, 1)),
        }
    }
    out
}

/// One full second-order step: forward half sweep (α chain with swaps,
/// interaction, β chain) and its reverse. Sites must be in chain order.
pub fn sweep(state: &mut MpsState, gates: &GateSet) -> Result<()> {
    let n_bath = gates.n_bath();
    if state.n_orbitals != n_bath + 1 {
        return Err(Error::DimensionMismatch(format!(
            "state has {} orbitals, gates {}",
            state.n_orbitals,
            n_bath + 1
        )));
    }
    if state.order.iter().enumerate().any(|(p, &l)| p != l) {
        return Err(Error::DimensionMismatch("sites are not in chain order".into()));
    }
    let seq = step_sequence(n_bath);
    for (k, &(op, pos, times)) in seq.iter().enumerate() {
        let single = match op {
            Op::Bath(s, i) => &gates.bath_gates[s][i],
            Op::Interaction => &gates.interaction_gate,
            Op::Swap => &gates.swap,
        };
        let merged;
        let gate = if times == 1 {
            single
        } else {
            merged = (1..times).fold(single.clone(), |acc, _| &acc * single);
            &merged
        };
        let center_left = seq.get(k + 1).is_some_and(|&(_, next, _)| next < pos);
        state.apply_two_site(pos, gate, center_left, gates.truncation, gates.time)?;
        if op == Op::Swap {
            state.order.swap(pos, pos + 1);
        }
    }
    Ok(())
}

/// TEBD run from the quench reference with the `tebd_dt` step, sampled
/// every `record_interval`.
pub fn run_tebd(config: &SiamConfig) -> Result<TrajectoryRecord> {
    config.validate()?;
    let bath = build_bath(config)?;
    let occ = Occupations::reference(config, &bath);
    let (steps, stride) = schedule(config.t_final, config.tebd_dt, config.record_interval)?;
    let mut gates = build_gates_with_bath(config, &bath, config.tebd_dt, 0.0)?;
    let mut state = MpsState::thermal(&occ);
    let observe = |state: &MpsState, t: f64| {
        let numbers = state.numbers();
        TrajectorySample {
            time: t,
            n_imp: [numbers[0][0], numbers[1][0]],
            n_electrons: total_number(&numbers),
            trace_dev: Some((state.trace() - ONE).norm()),
            herm_dev: None,
            discarded_weight: Some(state.discarded_weight()),
        }
    };
    let mut record = TrajectoryRecord::new();
    record.push(observe(&state, 0.0));
    let driven = config.delta_eps != 0.0 && config.omega != 0.0;
    for step in 0..steps {
        let t = step as f64 * config.tebd_dt;
        if driven {
            gates.retime(config, t);
        }
        sweep(&mut state, &gates)?;
        if (step + 1) % stride == 0 {
            record.push(observe(&state, (step + 1) as f64 * config.tebd_dt));
        }
    }
    Ok(record)
}
