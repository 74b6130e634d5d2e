use crate::thermofield::{OperatorSymbol, OrbitalIndex};

/// One complete pairing: `sign × Π δ(annihilator index, creator index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaProduct {
    pub sign: f64,
    pub deltas: Vec<(OrbitalIndex, OrbitalIndex)>,
}

impl DeltaProduct {
    /// Numerical value when every index is concrete; `None` if a free label
    /// is involved.
    pub fn value(&self) -> Option<f64> {
        let mut v = self.sign;
        for (a, b) in &self.deltas {
            match (a, b) {
                (OrbitalIndex::Site(x), OrbitalIndex::Site(y)) => {
                    if x != y {
                        v = 0.0;
                    }
                }
                _ => return None,
            }
        }
        Some(v)
    }
}

/// Complete pairings of a symbol string as `(sign, [(annihilator position,
/// creator position)])`. Only `⟨b b†⟩` and `⟨b̃ b̃†⟩` contractions of equal
/// spin are non-zero; an annihilator must stand left of its creator.
pub(crate) fn pairings(symbols: &[OperatorSymbol]) -> Vec<(f64, Vec<(usize, usize)>)> {
    let mut out = Vec::new();
    if symbols.len() % 2 == 1 {
        return out;
    }
    let mut used = vec![false; symbols.len()];
    let mut current = Vec::with_capacity(symbols.len() / 2);
    recurse(symbols, &mut used, &mut current, 1.0, &mut out);
    out
}

fn recurse(
    symbols: &[OperatorSymbol],
    used: &mut [bool],
    current: &mut Vec<(usize, usize)>,
    sign: f64,
    out: &mut Vec<(f64, Vec<(usize, usize)>)>,
) {
    let Some(first) = used.iter().position(|u| !u) else {
        out.push((sign, current.clone()));
        return;
    };
    let a = symbols[first];
    // the leftmost open symbol has nothing left of it to pair with
    if a.is_creation() {
        return;
    }
    used[first] = true;
    let mut between = 0;
    for k in first + 1..symbols.len() {
        if used[k] {
            continue;
        }
        let c = symbols[k];
        if c.is_creation() && c.tilde == a.tilde && c.spin == a.spin {
            used[k] = true;
            current.push((first, k));
            let s = if between % 2 == 0 { sign } else { -sign };
            recurse(symbols, used, current, s, out);
            current.pop();
            used[k] = false;
        }
        between += 1;
    }
    used[first] = false;
}

/// Vacuum expectation `⟨0| X₁ X₂ … |0⟩` as a sum of signed products of
/// Kronecker deltas, one per complete pairing, signed by
/// `(−1)^(number of crossings)`.
pub fn wick_vacuum_expectation(symbols: &[OperatorSymbol]) -> Vec<DeltaProduct> {
    pairings(symbols)
        .into_iter()
        .map(|(sign, pairs)| DeltaProduct {
            sign,
            deltas: pairs
                .iter()
                .map(|&(a, c)| (symbols[a].index, symbols[c].index))
                .collect(),
        })
        .collect()
}
