use ndarray::Array2;
use num_complex::Complex64;

use crate::dmcc::{antisymmetrize_in_place, ClusterAmplitudes, PairBlock, Residuals};
use crate::error::{Error, Result};
use crate::model::Spin;
use crate::thermofield::SuperHamiltonian;

use super::program::{ContractionInstruction, ContractionProgram, OperandKind, Slot, Target};

type C64 = Complex64;
const ZERO: C64 = C64::new(0.0, 0.0);

/// Evaluates the compiled equations at the given generator and amplitudes.
/// Same-spin doubles residuals are returned antisymmetrized.
pub fn evaluate(
    program: &ContractionProgram,
    sh: &SuperHamiltonian,
    amps: &ClusterAmplitudes,
) -> Result<Residuals> {
    let mut out = Residuals::zeros(sh.n_orbitals(), program.truncation());
    evaluate_into(program, sh, amps, &mut out)?;
    Ok(out)
}

/// [`evaluate`] into caller-owned storage (overwritten).
pub fn evaluate_into(
    program: &ContractionProgram,
    sh: &SuperHamiltonian,
    amps: &ClusterAmplitudes,
    out: &mut Residuals,
) -> Result<()> {
    let n = sh.n_orbitals();
    amps.check_dims(n)?;
    if amps.truncation() != program.truncation() {
        return Err(Error::DimensionMismatch(format!(
            "program is {:?} but amplitudes are {:?}",
            program.truncation(),
            amps.truncation()
        )));
    }
    let out_ok = out.r1.iter().all(|m| m.dim() == (n, n))
        && match &out.r2 {
            Some(r2) => amps.t2.is_some() && r2.iter().all(|m| m.dim() == (n, n, n, n)),
            None => amps.t2.is_none(),
        };
    if !out_ok {
        return Err(Error::DimensionMismatch("residual storage does not match".into()));
    }
    let sig_ok = program.signature().len() == sh.interaction().len()
        && program
            .signature()
            .iter()
            .zip(sh.interaction())
            .all(|(a, b)| *a == b.symbols);
    if !sig_ok {
        return Err(Error::DimensionMismatch(
            "program was compiled for a different interaction".into(),
        ));
    }
    for inst in program.instructions() {
        if inst
            .out
            .iter()
            .chain(inst.operands.iter().flat_map(|o| &o.slots))
            .any(|s| matches!(s, Slot::Site(x) if *x >= n))
        {
            return Err(Error::DimensionMismatch(format!(
                "{inst} addresses an orbital beyond {n}"
            )));
        }
    }

    // sparse one-body matrices: h, h*, Δ per spin
    let mut sparse: Vec<Vec<(usize, usize, C64)>> = Vec::with_capacity(6);
    for s in Spin::BOTH {
        sparse.push(nonzeros(sh.h(s), false));
    }
    for s in Spin::BOTH {
        sparse.push(nonzeros(sh.h(s), true));
    }
    for s in Spin::BOTH {
        sparse.push(nonzeros(sh.pairing(s), false));
    }

    for m in out.r1.iter_mut() {
        m.fill(ZERO);
    }
    // amplitude blocks that are identically zero (e.g. doubles at U = 0)
    let nonzero = |d: &[C64]| d.iter().any(|z| *z != ZERO);
    let t1_live = Spin::BOTH.map(|s| nonzero(amps.t1(s).as_slice().expect("standard layout")));
    let t2_live = PairBlock::ALL.map(|b| {
        amps.t2(b).is_some_and(|t| nonzero(t.as_slice().expect("standard layout")))
    });

    // one-body × doubles terms first: that sweep also clears the block
    let mut fused: [Vec<AxisOp>; 3] = Default::default();
    let mut generic = Vec::new();
    for inst in program.instructions() {
        match axis_op(inst, &sparse) {
            Some((block, op)) => {
                if t2_live[block.index()] {
                    fused[block.index()].push(op);
                }
            }
            None => generic.push(inst),
        }
    }
    if let Some(r2) = &mut out.r2 {
        for b in PairBlock::ALL {
            let r = r2[b.index()].as_slice_mut().expect("standard layout");
            let ops = &fused[b.index()];
            if ops.is_empty() {
                r.fill(ZERO);
            } else {
                let t = amps.t2(b).expect("doubles present");
                apply_axis_ops(t.as_slice().expect("standard layout"), r, n, ops);
            }
        }
    }

    for inst in generic {
        let live = inst.operands.iter().all(|op| match op.kind {
            OperandKind::T1(s) => t1_live[s.index()],
            OperandKind::T2(b) => t2_live[b.index()],
            _ => true,
        });
        if !live {
            continue;
        }
        let target: &mut [C64] = match inst.target {
            Target::R1(s) => out.r1[s.index()].as_slice_mut(),
            Target::R2(b) => out.r2.as_mut().expect("checked above")[b.index()].as_slice_mut(),
        }
        .expect("standard layout");
        run(inst, n, sh, amps, &sparse, target);
    }
    if let Some(r2) = &mut out.r2 {
        for b in [PairBlock::AlphaAlpha, PairBlock::BetaBeta] {
            antisymmetrize_in_place(&mut r2[b.index()]);
        }
    }
    Ok(())
}

/// `R[.., a, ..] += c Σ_x M[a, x] t[.., x, ..]` along residual axis `axis`,
/// with `t` the doubles block of the same spin block as `R`.
struct AxisOp {
    axis: usize,
    entries: Vec<(usize, usize, C64)>,
}

/// Recognizes the aligned one-body × doubles pattern
/// `M[p, x] · t[.., x, ..]` (x at position p, all other residual indices in
/// place).
fn axis_op(
    inst: &ContractionInstruction,
    sparse: &[Vec<(usize, usize, C64)>],
) -> Option<(PairBlock, AxisOp)> {
    let Target::R2(block) = inst.target else {
        return None;
    };
    if inst.operands.len() != 2 || inst.n_sum != 1 {
        return None;
    }
    let ident = [Slot::Out(0), Slot::Out(1), Slot::Out(2), Slot::Out(3)];
    if inst.out != ident {
        return None;
    }
    let (m, t) = (&inst.operands[0], &inst.operands[1]);
    let k = match m.kind {
        OperandKind::Hopping(s) => s.index(),
        OperandKind::HoppingConj(s) => 2 + s.index(),
        _ => return None,
    };
    if t.kind != OperandKind::T2(block) {
        return None;
    }
    let Slot::Out(axis) = m.slots[0] else {
        return None;
    };
    let axis = axis as usize;
    if m.slots[1] != Slot::Sum(0) {
        return None;
    }
    let mut want = ident;
    want[axis] = Slot::Sum(0);
    if t.slots != want {
        return None;
    }
    let c = inst.factor;
    let entries = sparse[k].iter().map(|&(a, x, v)| (a, x, v * c)).collect();
    Some((block, AxisOp { axis, entries }))
}

#[inline]
fn axpy(out: &mut [C64], w: C64, x: &[C64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += w * v;
    }
}

/// All one-body terms of one doubles block in a single sweep over slabs of
/// fixed first index, so each slab is touched while it sits in cache.
/// Diagonal entries of every axis are folded into one multiplier per
/// element. Overwrites `r`.
fn apply_axis_ops(t: &[C64], r: &mut [C64], n: usize, ops: &[AxisOp]) {
    let (n2, n3) = (n * n, n * n * n);
    let mut diag = [vec![ZERO; n], vec![ZERO; n], vec![ZERO; n], vec![ZERO; n]];
    let mut rows: Vec<Vec<(usize, C64)>> = vec![Vec::new(); n];
    let mut off: [Vec<(usize, usize, C64)>; 4] = Default::default();
    for op in ops {
        for &(p, x, w) in &op.entries {
            if p == x {
                diag[op.axis][p] += w;
            } else if op.axis == 0 {
                rows[p].push((x, w));
            } else {
                off[op.axis].push((p, x, w));
            }
        }
    }
    for a in 0..n {
        let rs = &mut r[a * n3..(a + 1) * n3];
        let ts = &t[a * n3..(a + 1) * n3];
        for k in 0..n {
            for j in 0..n {
                let d = diag[0][a] + diag[1][k] + diag[2][j];
                let o = k * n2 + j * n;
                for ((ro, &tv), &dl) in rs[o..o + n].iter_mut().zip(&ts[o..o + n]).zip(&diag[3]) {
                    *ro = (d + dl) * tv;
                }
            }
        }
        for &(x, w) in &rows[a] {
            axpy(rs, w, &t[x * n3..(x + 1) * n3]);
        }
        for &(p, x, w) in &off[1] {
            axpy(&mut rs[p * n2..(p + 1) * n2], w, &ts[x * n2..(x + 1) * n2]);
        }
        if !off[2].is_empty() {
            for k in 0..n {
                let (ro, to) = (&mut rs[k * n2..(k + 1) * n2], &ts[k * n2..(k + 1) * n2]);
                for &(p, x, w) in &off[2] {
                    axpy(&mut ro[p * n..(p + 1) * n], w, &to[x * n..(x + 1) * n]);
                }
            }
        }
        if !off[3].is_empty() {
            for (ro, to) in rs.chunks_exact_mut(n).zip(ts.chunks_exact(n)) {
                for &(p, x, w) in &off[3] {
                    ro[p] += w * to[x];
                }
            }
        }
    }
}

fn nonzeros(m: &Array2<C64>, conj: bool) -> Vec<(usize, usize, C64)> {
    m.indexed_iter()
        .filter(|(_, v)| v.norm_sqr() > 0.0)
        .map(|((x, y), v)| (x, y, if conj { v.conj() } else { *v }))
        .collect()
}

fn label_of(slot: Slot) -> Option<usize> {
    match slot {
        Slot::Out(p) => Some(p as usize),
        Slot::Sum(k) => Some(4 + k as usize),
        Slot::Site(_) => None,
    }
}

/// Affine addressing of one tensor: `base + Σ stride·value` over the free
/// labels, plus a per-entry shift for the labels bound by the one-body
/// matrix.
struct Plan<'a> {
    data: &'a [C64],
    base: usize,
    free: Vec<(usize, usize)>,
    bound: [usize; 2],
}

impl<'a> Plan<'a> {
    fn new(data: &'a [C64], slots: &[Slot], n: usize, matrix_labels: [Option<usize>; 2]) -> Self {
        let rank = slots.len();
        let mut plan = Plan {
            data,
            base: 0,
            free: Vec::new(),
            bound: [0, 0],
        };
        for (d, &slot) in slots.iter().enumerate() {
            let stride = n.pow((rank - 1 - d) as u32);
            match label_of(slot) {
                None => {
                    if let Slot::Site(x) = slot {
                        plan.base += stride * x;
                    }
                }
                Some(l) if matrix_labels[0] == Some(l) => plan.bound[0] += stride,
                Some(l) if matrix_labels[1] == Some(l) => plan.bound[1] += stride,
                Some(l) => plan.free.push((l, stride)),
            }
        }
        plan
    }

    /// `(offset excluding the inner label, stride of the inner label)`.
    #[inline]
    fn offset(&self, vals: &[usize], inner: usize) -> (usize, usize) {
        let mut off = self.base;
        let mut s = 0;
        for &(l, stride) in &self.free {
            if l == inner {
                s += stride;
            } else {
                off += stride * vals[l];
            }
        }
        (off, s)
    }

    fn stride_of(&self, label: usize) -> usize {
        self.free
            .iter()
            .filter(|(l, _)| *l == label)
            .map(|(_, s)| s)
            .sum()
    }
}

fn run(
    inst: &ContractionInstruction,
    n: usize,
    sh: &SuperHamiltonian,
    amps: &ClusterAmplitudes,
    sparse: &[Vec<(usize, usize, C64)>],
    out: &mut [C64],
) {
    let mut scalar = C64::new(inst.factor, 0.0);
    let mut matrix: Option<(&[(usize, usize, C64)], [Slot; 2])> = None;
    for op in &inst.operands {
        let pick = |k: usize| (sparse[k].as_slice(), [op.slots[0], op.slots[1]]);
        match op.kind {
            OperandKind::Interaction(k) => scalar *= sh.interaction()[k].coeff,
            OperandKind::Hopping(s) => matrix = Some(pick(s.index())),
            OperandKind::HoppingConj(s) => matrix = Some(pick(2 + s.index())),
            OperandKind::Pairing(s) => matrix = Some(pick(4 + s.index())),
            _ => {}
        }
    }
    let mlabels = match &matrix {
        Some((_, slots)) => [label_of(slots[0]), label_of(slots[1])],
        None => [None, None],
    };
    let tensors: Vec<Plan> = inst
        .operands
        .iter()
        .filter_map(|op| {
            let data = match op.kind {
                OperandKind::T1(s) => amps.t1(s).as_slice(),
                OperandKind::T2(b) => amps.t2(b).and_then(|t| t.as_slice()),
                _ => return None,
            };
            Some(Plan::new(data.expect("standard layout"), &op.slots, n, mlabels))
        })
        .collect();
    let outp = Plan::new(&[], &inst.out, n, mlabels);

    // matrix entries consistent with pinned slots, with their address shifts
    let entries: Vec<(usize, usize, C64)> = match &matrix {
        Some((list, slots)) => list
            .iter()
            .copied()
            .filter(|&(x, y, _)| {
                let ok = |s: Slot, v: usize| !matches!(s, Slot::Site(p) if p != v);
                let diag_ok = !(slots[0] == slots[1] && x != y);
                ok(slots[0], x) && ok(slots[1], y) && diag_ok
            })
            .collect(),
        None => vec![(0, 0, C64::new(1.0, 0.0))],
    };
    if entries.is_empty() {
        return;
    }
    let shift = |p: &Plan, (x, y, _): (usize, usize, C64)| p.bound[0] * x + p.bound[1] * y;

    let mut present = [false; 16];
    for s in inst.out.iter().chain(inst.operands.iter().flat_map(|o| &o.slots)) {
        if let Some(l) = label_of(*s) {
            present[l] = true;
        }
    }
    let free: Vec<usize> = (0..16)
        .filter(|&l| present[l] && mlabels[0] != Some(l) && mlabels[1] != Some(l))
        .collect();
    let mut vals = [0usize; 16];

    // contiguous output direction carried by the matrix → matrix innermost
    let out_fastest = inst
        .out
        .iter()
        .enumerate()
        .rev()
        .find_map(|(_, s)| label_of(*s));
    let matrix_inner = matrix.is_some()
        && (free.is_empty() || out_fastest.is_some_and(|l| mlabels.contains(&Some(l))));

    if matrix_inner {
        let odelta: Vec<usize> = entries.iter().map(|&e| shift(&outp, e)).collect();
        let (dep, fixed): (Vec<&Plan>, Vec<&Plan>) =
            tensors.iter().partition(|t| t.bound != [0, 0]);
        let tdelta: Vec<Vec<usize>> = dep
            .iter()
            .map(|t| entries.iter().map(|&e| shift(t, e)).collect())
            .collect();
        let points = n.pow(free.len() as u32);
        let mut bases = vec![0usize; dep.len()];
        for mut p in 0..points {
            for &l in free.iter().rev() {
                vals[l] = p % n;
                p /= n;
            }
            let mut c = scalar;
            for t in &fixed {
                c *= t.data[t.offset(&vals, usize::MAX).0];
            }
            if c == ZERO {
                continue;
            }
            let ob = outp.offset(&vals, usize::MAX).0;
            for (b, t) in bases.iter_mut().zip(&dep) {
                *b = t.offset(&vals, usize::MAX).0;
            }
            match dep.len() {
                0 => {
                    for (e, &(_, _, v)) in entries.iter().enumerate() {
                        out[ob + odelta[e]] += c * v;
                    }
                }
                1 => {
                    let (d, b, td) = (dep[0].data, bases[0], &tdelta[0]);
                    for (e, &(_, _, v)) in entries.iter().enumerate() {
                        out[ob + odelta[e]] += c * v * d[b + td[e]];
                    }
                }
                _ => {
                    for (e, &(_, _, v)) in entries.iter().enumerate() {
                        let mut prod = c * v;
                        for (k, t) in dep.iter().enumerate() {
                            prod *= t.data[bases[k] + tdelta[k][e]];
                        }
                        out[ob + odelta[e]] += prod;
                    }
                }
            }
        }
        return;
    }

    // innermost: free output label with the smallest stride, else any free label
    let inner = free
        .iter()
        .copied()
        .filter(|&l| outp.stride_of(l) > 0)
        .min_by_key(|&l| outp.stride_of(l))
        .or_else(|| free.first().copied());
    let outer: Vec<usize> = free.iter().copied().filter(|&l| Some(l) != inner).collect();
    let inner_l = inner.unwrap_or(usize::MAX);
    let len = if inner.is_some() { n } else { 1 };
    let points = n.pow(outer.len() as u32);

    let mut vary: Vec<(&[C64], usize, usize)> = Vec::with_capacity(tensors.len());
    for &e in &entries {
        let c_entry = scalar * e.2;
        let o_shift = shift(&outp, e);
        for mut p in 0..points {
            for &l in outer.iter().rev() {
                vals[l] = p % n;
                p /= n;
            }
            let mut c = c_entry;
            vary.clear();
            for t in &tensors {
                let (b, s) = t.offset(&vals, inner_l);
                let b = b + shift(t, e);
                if s == 0 {
                    c *= t.data[b];
                } else {
                    vary.push((t.data, b, s));
                }
            }
            if c == ZERO {
                continue;
            }
            let (ob, os) = outp.offset(&vals, inner_l);
            accumulate(out, ob + o_shift, os, c, &vary, len);
        }
    }
}

/// `out[ob + os·x] += c · Π_k a_k[b_k + s_k·x]` for `x < len`; with
/// `os = 0` the products are summed into one element.
#[inline]
fn accumulate(out: &mut [C64], ob: usize, os: usize, c: C64, vary: &[(&[C64], usize, usize)], len: usize) {
    if os == 0 {
        let mut acc = ZERO;
        for x in 0..len {
            let mut p = C64::new(1.0, 0.0);
            for &(d, b, s) in vary {
                p *= d[b + s * x];
            }
            acc += p;
        }
        out[ob] += c * acc;
        return;
    }
    match vary {
        [] => {
            for x in 0..len {
                out[ob + os * x] += c;
            }
        }
        [(a, ab, 1)] if os == 1 => {
            for (o, v) in out[ob..ob + len].iter_mut().zip(&a[*ab..*ab + len]) {
                *o += c * v;
            }
        }
        [(a, ab, as_)] => {
            for x in 0..len {
                out[ob + os * x] += c * a[ab + as_ * x];
            }
        }
        [(a, ab, as_), (b, bb, bs)] => {
            for x in 0..len {
                out[ob + os * x] += c * a[ab + as_ * x] * b[bb + bs * x];
            }
        }
        _ => {
            for x in 0..len {
                let mut p = c;
                for &(d, b, s) in vary {
                    p *= d[b + s * x];
                }
                out[ob + os * x] += p;
            }
        }
    }
}
