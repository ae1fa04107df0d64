//! Bosonic ladder operators acting on occupation vectors.
//!
//! Amplitudes are tracked as the integer product of ladder factors and only
//! square-rooted at the end, so `a†² a² |2⟩` is exactly `2|2⟩`.

/// Applies `a†_a a†_b a_c a_d` to `occ`. Returns the new occupations and the
/// squared amplitude, or `None` when the result vanishes.
pub fn two_body(occ: &[u8], [a, b, c, d]: [usize; 4]) -> Option<(Vec<u8>, u64)> {
    let mut out = occ.to_vec();
    let mut sq = 1u64;
    for mode in [d, c] {
        if out[mode] == 0 {
            return None;
        }
        sq *= out[mode] as u64;
        out[mode] -= 1;
    }
    for mode in [b, a] {
        out[mode] += 1;
        sq *= out[mode] as u64;
    }
    Some((out, sq))
}

/// Applies `a†_a a_b` (a ≠ b allowed or equal).
pub fn hop(occ: &[u8], a: usize, b: usize) -> Option<(Vec<u8>, u64)> {
    if occ[b] == 0 {
        return None;
    }
    let mut out = occ.to_vec();
    let mut sq = out[b] as u64;
    out[b] -= 1;
    out[a] += 1;
    sq *= out[a] as u64;
    Some((out, sq))
}
