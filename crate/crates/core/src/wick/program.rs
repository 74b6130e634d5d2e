use std::collections::BTreeMap;
use std::fmt;

use crate::dmcc::{PairBlock, Truncation};
use crate::error::{Error, Result};
use crate::model::Spin;
use crate::thermofield::{Ladder, OperatorSymbol, OperatorTerm, OrbitalIndex, SuperHamiltonian};

use super::expectation::pairings;

/// Index slot of an operand or of the residual being written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Slot {
    /// Free output index; the number is the position in the residual
    /// (`[i, j]` for singles, `[i, k, j, l]` for doubles).
    Out(u8),
    /// Internal summation label, appearing exactly twice in the term.
    Sum(u8),
    /// Pinned to a concrete orbital.
    Site(usize),
}

/// Tensor factor of an instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OperandKind {
    /// `h_σ[x, y]`.
    Hopping(Spin),
    /// `h*_σ[x, y]`; the minus sign lives in the prefactor.
    HoppingConj(Spin),
    /// `Δ_σ[x, y]`.
    Pairing(Spin),
    /// Coefficient of the n-th interaction term (no indices).
    Interaction(usize),
    T1(Spin),
    T2(PairBlock),
}

impl OperandKind {
    fn code(self) -> u32 {
        match self {
            OperandKind::Hopping(s) => s.index() as u32,
            OperandKind::HoppingConj(s) => 2 + s.index() as u32,
            OperandKind::Pairing(s) => 4 + s.index() as u32,
            OperandKind::T1(s) => 6 + s.index() as u32,
            OperandKind::T2(b) => 8 + b.index() as u32,
            OperandKind::Interaction(n) => 16 + n as u32,
        }
    }

    pub fn is_amplitude(self) -> bool {
        matches!(self, OperandKind::T1(_) | OperandKind::T2(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Operand {
    pub kind: OperandKind,
    pub slots: Vec<Slot>,
}

/// Residual block written by an instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Target {
    R1(Spin),
    R2(PairBlock),
}

impl Target {
    fn code(self) -> u32 {
        match self {
            Target::R1(s) => s.index() as u32,
            Target::R2(b) => 2 + b.index() as u32,
        }
    }

    pub fn rank(self) -> usize {
        match self {
            Target::R1(_) => 2,
            Target::R2(_) => 4,
        }
    }
}

/// `target[out] += factor · Π operands`, summed over every `Sum` label.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionInstruction {
    pub target: Target,
    pub out: Vec<Slot>,
    pub operands: Vec<Operand>,
    pub factor: f64,
    pub n_sum: u8,
}

impl ContractionInstruction {
    /// Number of amplitude factors.
    pub fn t_power(&self) -> usize {
        self.operands.iter().filter(|o| o.kind.is_amplitude()).count()
    }
}

/// Compiled amplitude equations. Independent of the numerical values of the
/// generator: only the shape of the interaction (its symbol strings) is
/// baked in, so one program serves every time step.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionProgram {
    truncation: Truncation,
    instructions: Vec<ContractionInstruction>,
    signature: Vec<Vec<OperatorSymbol>>,
}

impl ContractionProgram {
    pub fn truncation(&self) -> Truncation {
        self.truncation
    }

    pub fn instructions(&self) -> &[ContractionInstruction] {
        &self.instructions
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    /// Highest power of the cluster amplitudes in any instruction.
    pub fn max_t_power(&self) -> usize {
        self.instructions.iter().map(|i| i.t_power()).max().unwrap_or(0)
    }

    #[doc(hidden)]
    pub fn retain_only(&mut self, inst: &ContractionInstruction) {
        self.instructions.retain(|i| i == inst);
    }

    pub(crate) fn signature(&self) -> &[Vec<OperatorSymbol>] {
        &self.signature
    }
}

// Label layout inside the generator: output labels use their residual
// position (0..4), the one-body vertex uses 10/11, cluster vertex m uses
// 20+4m .. 20+4m+3.
const X: u16 = 10;
const Y: u16 = 11;

struct Vertex {
    kind: OperandKind,
    symbols: Vec<OperatorSymbol>,
    slots: Vec<OrbitalIndex>,
    weight: f64,
}

fn sym(kind: Ladder, tilde: bool, spin: Spin, label: u16) -> OperatorSymbol {
    OperatorSymbol::new(kind, tilde, spin, OrbitalIndex::Label(label))
}

fn cre(tilde: bool, spin: Spin, label: u16) -> OperatorSymbol {
    sym(Ladder::Creation, tilde, spin, label)
}

fn ann(tilde: bool, spin: Spin, label: u16) -> OperatorSymbol {
    sym(Ladder::Annihilation, tilde, spin, label)
}

fn generator_vertices(interaction: &[OperatorTerm]) -> Vec<Vertex> {
    let mut out = Vec::new();
    let slots = vec![OrbitalIndex::Label(X), OrbitalIndex::Label(Y)];
    for s in Spin::BOTH {
        out.push(Vertex {
            kind: OperandKind::Hopping(s),
            symbols: vec![cre(false, s, X), ann(false, s, Y)],
            slots: slots.clone(),
            weight: 1.0,
        });
        out.push(Vertex {
            kind: OperandKind::HoppingConj(s),
            symbols: vec![cre(true, s, X), ann(true, s, Y)],
            slots: slots.clone(),
            weight: -1.0,
        });
        out.push(Vertex {
            kind: OperandKind::Pairing(s),
            symbols: vec![cre(false, s, X), cre(true, s, Y)],
            slots: slots.clone(),
            weight: 1.0,
        });
    }
    for (n, term) in interaction.iter().enumerate() {
        out.push(Vertex {
            kind: OperandKind::Interaction(n),
            symbols: term.symbols.clone(),
            slots: vec![],
            weight: 1.0,
        });
    }
    out
}

fn cluster_vertex(kind: OperandKind, m: usize) -> Vertex {
    let base = 20 + 4 * m as u16;
    let (p, r, q, w) = (base, base + 1, base + 2, base + 3);
    let lbl = |l| OrbitalIndex::Label(l);
    match kind {
        OperandKind::T1(s) => Vertex {
            kind,
            symbols: vec![cre(false, s, p), cre(true, s, q)],
            slots: vec![lbl(p), lbl(q)],
            weight: 1.0,
        },
        OperandKind::T2(b) => {
            let (s1, s2) = b.spins();
            Vertex {
                kind,
                symbols: vec![cre(false, s1, p), cre(false, s2, r), cre(true, s2, w), cre(true, s1, q)],
                slots: vec![lbl(p), lbl(r), lbl(q), lbl(w)],
                weight: if b.same_spin().is_some() { 0.25 } else { 1.0 },
            }
        }
        _ => unreachable!("not a cluster vertex"),
    }
}

/// Projection string `⟨0| b̃_j b_i` or `⟨0| b̃_j b̃_l b_k b_i`, labelled by
/// residual position.
fn projection(target: Target) -> Vec<OperatorSymbol> {
    match target {
        Target::R1(s) => vec![ann(true, s, 1), ann(false, s, 0)],
        Target::R2(b) => {
            let (s1, s2) = b.spins();
            vec![ann(true, s1, 2), ann(true, s2, 3), ann(false, s2, 1), ann(false, s1, 0)]
        }
    }
}

fn species(s: &OperatorSymbol) -> usize {
    2 * s.spin.index() + s.tilde as usize
}

/// Multisets (as count vectors) of size at most `max` over `n` kinds.
fn multisets(n: usize, max: usize) -> Vec<Vec<usize>> {
    fn rec(k: usize, n: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == n {
            out.push(cur.clone());
            return;
        }
        for c in 0..=left {
            cur.push(c);
            rec(k + 1, n, left - c, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, max, &mut Vec::new(), &mut out);
    out
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

#[derive(Clone, Copy)]
enum Resolved {
    Site(usize),
    Label(u16),
}

/// One raw contraction, before canonical merging.
fn build_term(
    target: Target,
    string: &[OperatorSymbol],
    pairs: &[(usize, usize)],
    operands: &[(OperandKind, &[OrbitalIndex])],
    factor: f64,
) -> Option<ContractionInstruction> {
    let mut map: BTreeMap<u16, Resolved> = BTreeMap::new();
    for &(a, c) in pairs {
        match (string[a].index, string[c].index) {
            (OrbitalIndex::Site(x), OrbitalIndex::Site(y)) => {
                if x != y {
                    return None;
                }
            }
            (OrbitalIndex::Site(x), OrbitalIndex::Label(l))
            | (OrbitalIndex::Label(l), OrbitalIndex::Site(x)) => {
                map.insert(l, Resolved::Site(x));
            }
            (OrbitalIndex::Label(p), OrbitalIndex::Label(q)) => {
                let rep = p.min(q);
                map.insert(p, Resolved::Label(rep));
                map.insert(q, Resolved::Label(rep));
            }
        }
    }
    let to_slot = |idx: OrbitalIndex| -> Slot {
        match idx {
            OrbitalIndex::Site(x) => Slot::Site(x),
            OrbitalIndex::Label(l) => match map[&l] {
                Resolved::Site(x) => Slot::Site(x),
                Resolved::Label(r) if r < 4 => Slot::Out(r as u8),
                Resolved::Label(r) => Slot::Sum(r as u8),
            },
        }
    };
    let out = (0..target.rank())
        .map(|p| to_slot(OrbitalIndex::Label(p as u16)))
        .collect();
    let operands = operands
        .iter()
        .map(|(kind, slots)| Operand {
            kind: *kind,
            slots: slots.iter().map(|&i| to_slot(i)).collect(),
        })
        .collect();
    Some(ContractionInstruction {
        target,
        out,
        operands,
        factor,
        n_sum: 0,
    })
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn swap_out(slot: Slot, a: u8, b: u8) -> Slot {
    match slot {
        Slot::Out(p) if p == a => Slot::Out(b),
        Slot::Out(p) if p == b => Slot::Out(a),
        s => s,
    }
}

/// Canonical key and sign of an instruction. Equivalences used: renaming of
/// summation labels, reordering of equal cluster factors, antisymmetry of the
/// same-spin doubles, and (for same-spin doubles residuals, which are
/// antisymmetrized afterwards) signed swaps of output positions.
fn canonical(term: &ContractionInstruction) -> (Vec<u32>, f64, ContractionInstruction) {
    variants(term)
        .into_iter()
        .min_by(|a, b| a.0.cmp(&b.0))
        .expect("at least the identity variant")
}

/// Memory-friendliness of a variant: amplitude axes that line up with the
/// residual axes, and a one-body factor on the fastest residual axis.
fn layout_score(inst: &ContractionInstruction) -> f64 {
    let rank = inst.out.len();
    let mut score = 0.0;
    for op in &inst.operands {
        if op.kind.is_amplitude() && op.slots.len() == rank {
            score += op
                .slots
                .iter()
                .enumerate()
                .filter(|(d, s)| **s == Slot::Out(*d as u8))
                .count() as f64;
        }
        if matches!(
            op.kind,
            OperandKind::Hopping(_) | OperandKind::HoppingConj(_) | OperandKind::Pairing(_)
        ) && op.slots[0] == Slot::Out(rank as u8 - 1)
        {
            score += 0.5;
        }
    }
    score
}

/// Equivalent form of a merged instruction chosen for evaluation speed.
fn best_layout(inst: &ContractionInstruction) -> ContractionInstruction {
    let mut best: Option<(f64, ContractionInstruction)> = None;
    for (_, sign, mut v) in variants(inst) {
        let score = layout_score(&v);
        if best.as_ref().map_or(true, |(b, _)| score > *b) {
            v.factor = sign * inst.factor;
            best = Some((score, v));
        }
    }
    best.expect("at least the identity variant").1
}

/// All equivalent forms `(key, sign, instruction)` of a term.
fn variants(term: &ContractionInstruction) -> Vec<(Vec<u32>, f64, ContractionInstruction)> {
    let out_swaps: Vec<(f64, Vec<(u8, u8)>)> = match term.target {
        Target::R2(b) if b.same_spin().is_some() => vec![
            (1.0, vec![]),
            (-1.0, vec![(0, 1)]),
            (-1.0, vec![(2, 3)]),
            (1.0, vec![(0, 1), (2, 3)]),
        ],
        _ => vec![(1.0, vec![])],
    };
    let (fixed, amps): (Vec<&Operand>, Vec<&Operand>) =
        term.operands.iter().partition(|o| !o.kind.is_amplitude());

    let mut all = Vec::new();
    for (osign, swaps) in &out_swaps {
        let relabel = |s: Slot| swaps.iter().fold(s, |s, &(a, b)| swap_out(s, a, b));
        let mut out = term.out.clone();
        for &(a, b) in swaps {
            out.swap(a as usize, b as usize);
        }
        let out: Vec<Slot> = out.into_iter().map(relabel).collect();
        for perm in permutations(amps.len()) {
            let ordered: Vec<&Operand> = perm.iter().map(|&k| amps[k]).collect();
            if ordered.windows(2).any(|w| w[0].kind > w[1].kind) {
                continue;
            }
            let flippable: Vec<usize> = ordered
                .iter()
                .enumerate()
                .filter(|(_, o)| matches!(o.kind, OperandKind::T2(b) if b.same_spin().is_some()))
                .map(|(k, _)| k)
                .collect();
            for mask in 0..(1usize << (2 * flippable.len())) {
                let mut sign = *osign;
                let mut ops: Vec<Operand> = fixed
                    .iter()
                    .chain(ordered.iter())
                    .map(|o| Operand {
                        kind: o.kind,
                        slots: o.slots.iter().map(|&s| relabel(s)).collect(),
                    })
                    .collect();
                for (f, &k) in flippable.iter().enumerate() {
                    let op = &mut ops[fixed.len() + k];
                    if mask >> (2 * f) & 1 == 1 {
                        op.slots.swap(0, 1);
                        sign = -sign;
                    }
                    if mask >> (2 * f + 1) & 1 == 1 {
                        op.slots.swap(2, 3);
                        sign = -sign;
                    }
                }
                // rename summation labels by first appearance
                let mut names: Vec<u8> = Vec::new();
                for op in &mut ops {
                    for s in &mut op.slots {
                        if let Slot::Sum(l) = *s {
                            let k = names.iter().position(|&n| n == l).unwrap_or_else(|| {
                                names.push(l);
                                names.len() - 1
                            });
                            *s = Slot::Sum(k as u8);
                        }
                    }
                }
                let enc = |s: &Slot| match *s {
                    Slot::Out(p) => p as u32,
                    Slot::Sum(k) => 100 + k as u32,
                    Slot::Site(x) => 1000 + x as u32,
                };
                let mut key = vec![term.target.code()];
                key.extend(out.iter().map(enc));
                for op in &ops {
                    key.push(10_000 + op.kind.code());
                    key.extend(op.slots.iter().map(enc));
                }
                let inst = ContractionInstruction {
                    target: term.target,
                    out: out.clone(),
                    operands: ops,
                    factor: term.factor,
                    n_sum: names.len() as u8,
                };
                all.push((key, sign, inst));
            }
        }
    }
    all
}

/// Derives the amplitude equations `i dt/dt = R` by projecting
/// `(Ĥ′ e^T)_connected` on singles (and doubles) excitations of the
/// quasi-particle vacuum.
pub fn generate_eom(sh: &SuperHamiltonian, truncation: Truncation) -> Result<ContractionProgram> {
    compile(sh.interaction(), truncation)
}

pub(crate) fn compile(interaction: &[OperatorTerm], truncation: Truncation) -> Result<ContractionProgram> {
    for term in interaction {
        if !term.is_normal_ordered() {
            return Err(Error::NotNormalOrdered(term.to_string()));
        }
        if term.symbols.iter().any(|s| matches!(s.index, OrbitalIndex::Label(_))) {
            return Err(Error::Unsupported(format!("symbolic index in interaction term {term}")));
        }
        for spin in Spin::BOTH {
            if term.charge(spin) != 0 {
                return Err(Error::Unsupported(format!(
                    "interaction term {term} changes the {} charge",
                    spin.symbol()
                )));
            }
        }
    }

    let mut cluster_kinds = vec![OperandKind::T1(Spin::Alpha), OperandKind::T1(Spin::Beta)];
    let mut targets = vec![Target::R1(Spin::Alpha), Target::R1(Spin::Beta)];
    if truncation == Truncation::SinglesDoubles {
        for b in PairBlock::ALL {
            cluster_kinds.push(OperandKind::T2(b));
            targets.push(Target::R2(b));
        }
    }

    let vertices = generator_vertices(interaction);
    let mut merged: BTreeMap<Vec<u32>, (f64, ContractionInstruction)> = BTreeMap::new();
    for &target in &targets {
        let proj = projection(target);
        for v in &vertices {
            let n_ann = v.symbols.iter().filter(|s| !s.is_creation()).count();
            for counts in multisets(cluster_kinds.len(), n_ann) {
                let mut cluster = Vec::new();
                let mut weight = v.weight;
                for (k, &c) in counts.iter().enumerate() {
                    weight /= factorial(c);
                    for _ in 0..c {
                        let cv = cluster_vertex(cluster_kinds[k], cluster.len());
                        weight *= cv.weight;
                        cluster.push(cv);
                    }
                }
                // species balance: annihilators on the left must be matched
                let mut balance = [0i32; 4];
                for s in proj.iter().chain(&v.symbols).chain(cluster.iter().flat_map(|c| &c.symbols)) {
                    balance[species(s)] += if s.is_creation() { 1 } else { -1 };
                }
                if balance.iter().any(|&b| b != 0) {
                    continue;
                }
                let mut string = proj.clone();
                let h_start = string.len();
                string.extend(v.symbols.iter().copied());
                let t_start = string.len();
                let mut spans = Vec::new();
                for c in &cluster {
                    let s = string.len();
                    string.extend(c.symbols.iter().copied());
                    spans.push(s..string.len());
                }
                let mut operands: Vec<(OperandKind, &[OrbitalIndex])> = vec![(v.kind, &v.slots)];
                operands.extend(cluster.iter().map(|c| (c.kind, c.slots.as_slice())));

                for (sign, pairs) in pairings(&string) {
                    let connected = spans.iter().all(|span| {
                        pairs
                            .iter()
                            .any(|&(a, c)| span.contains(&c) && (h_start..t_start).contains(&a))
                    });
                    if !connected {
                        continue;
                    }
                    let Some(raw) = build_term(target, &string, &pairs, &operands, sign * weight) else {
                        continue;
                    };
                    let (key, s, inst) = canonical(&raw);
                    let entry = merged.entry(key).or_insert((0.0, inst));
                    entry.0 += s * raw.factor;
                }
            }
        }
    }

    let instructions = merged
        .into_values()
        .filter(|(f, _)| f.abs() > 1e-12)
        .map(|(f, mut inst)| {
            inst.factor = f;
            best_layout(&inst)
        })
        .collect();
    Ok(ContractionProgram {
        truncation,
        instructions,
        signature: interaction.iter().map(|t| t.symbols.clone()).collect(),
    })
}

const OUT_NAMES: [&str; 4] = ["i", "k", "j", "l"];

fn slot_name(target: Target, s: Slot) -> String {
    match s {
        Slot::Out(p) => match target {
            Target::R1(_) => ["i", "j"][p as usize].to_string(),
            Target::R2(_) => OUT_NAMES[p as usize].to_string(),
        },
        Slot::Sum(k) => format!("x{k}"),
        Slot::Site(x) => x.to_string(),
    }
}

impl fmt::Display for ContractionInstruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = |s: &Slot| slot_name(self.target, *s);
        match self.target {
            Target::R1(s) => write!(f, "R1{}[{},{}]", s.symbol(), name(&self.out[0]), name(&self.out[1]))?,
            Target::R2(b) => write!(
                f,
                "R2{}[{},{}|{},{}]",
                b.symbol(),
                name(&self.out[0]),
                name(&self.out[1]),
                name(&self.out[2]),
                name(&self.out[3])
            )?,
        }
        write!(f, " += ({:+.6})", self.factor)?;
        for op in &self.operands {
            let idx = op.slots.iter().map(name).collect::<Vec<_>>().join(",");
            match op.kind {
                OperandKind::Hopping(s) => write!(f, " * h{}[{idx}]", s.symbol())?,
                OperandKind::HoppingConj(s) => write!(f, " * conj(h{})[{idx}]", s.symbol())?,
                OperandKind::Pairing(s) => write!(f, " * D{}[{idx}]", s.symbol())?,
                OperandKind::Interaction(n) => write!(f, " * W{n}")?,
                OperandKind::T1(s) => write!(f, " * t1{}[{idx}]", s.symbol())?,
                OperandKind::T2(b) => write!(f, " * t2{}[{idx}]", b.symbol())?,
            }
        }
        Ok(())
    }
}

impl fmt::Display for ContractionProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "# {} instructions, truncation {:?}, max amplitude power {}",
            self.len(),
            self.truncation,
            self.max_t_power()
        )?;
        for (n, sig) in self.signature.iter().enumerate() {
            let s = sig.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
            writeln!(f, "# W{n} : {s}")?;
        }
        for inst in &self.instructions {
            writeln!(f, "{inst}")?;
        }
        Ok(())
    }
}

/// Raw connected contractions of `⟨0| P Ĥ′ e^T |0⟩` for an arbitrary
/// projection string; used to check that the vacuum projection is empty.
#[cfg(test)]
pub(crate) fn connected_terms(
    interaction: &[OperatorTerm],
    proj: &[OperatorSymbol],
    kinds: &[OperandKind],
) -> usize {
    let mut count = 0;
    for v in generator_vertices(interaction) {
        let n_ann = v.symbols.iter().filter(|s| !s.is_creation()).count();
        for counts in multisets(kinds.len(), n_ann) {
            let mut string = proj.to_vec();
            let h_start = string.len();
            string.extend(v.symbols.iter().copied());
            let t_start = string.len();
            let mut spans = Vec::new();
            let mut m = 0;
            for (k, &c) in counts.iter().enumerate() {
                for _ in 0..c {
                    let cv = cluster_vertex(kinds[k], m);
                    m += 1;
                    let s = string.len();
                    string.extend(cv.symbols);
                    spans.push(s..string.len());
                }
            }
            count += pairings(&string)
                .iter()
                .filter(|(_, pairs)| {
                    spans.iter().all(|span| {
                        pairs
                            .iter()
                            .any(|&(a, c)| span.contains(&c) && (h_start..t_start).contains(&a))
                    })
                })
                .count();
        }
    }
    count
}
