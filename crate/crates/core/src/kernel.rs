//! In-place application of a four-qubit gate to a state vector.

use crate::gates::{SparseGate, C64};

/// Placement of a local gate inside a larger register. Outer controls that
/// fall off a fixed boundary are `None` and behave as permanently empty
/// sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateSites {
    pub left: Option<usize>,
    pub center: usize,
    pub right: Option<usize>,
    pub target: usize,
}

impl GateSites {
    fn bits(&self) -> [Option<usize>; 4] {
        [self.left, Some(self.center), self.right, Some(self.target)]
    }
}

/// Applies `gate` to `state` at `sites` (bit positions in the basis index).
///
/// `scratch` must hold at least 16 entries.
pub fn apply_gate(state: &mut [C64], gate: &SparseGate, sites: GateSites, scratch: &mut [C64; 32]) {
    let bits = sites.bits();
    let mut mask = 0usize;
    for b in bits.iter().flatten() {
        mask |= 1 << b;
    }
    // Offsets of the 16 local basis states relative to a base index; `None`
    // for local states that set a virtual (boundary) control.
    let mut offsets = [None; 16];
    for (local, slot) in offsets.iter_mut().enumerate() {
        let mut off = 0usize;
        let mut valid = true;
        for (k, b) in bits.iter().enumerate() {
            let set = (local >> (3 - k)) & 1 == 1;
            match (b, set) {
                (Some(pos), true) => off |= 1 << pos,
                (None, true) => valid = false,
                _ => {}
            }
        }
        if valid {
            *slot = Some(off);
        }
    }

    let (input, output) = scratch.split_at_mut(16);
    for base in 0..state.len() {
        if base & mask != 0 {
            continue;
        }
        let mut any = false;
        for (local, off) in offsets.iter().enumerate() {
            input[local] = match off {
                Some(o) => {
                    let v = state[base | o];
                    any |= v.norm_sqr() != 0.0;
                    v
                }
                None => C64::new(0.0, 0.0),
            };
        }
        if !any {
            continue;
        }
        output.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        for &(row, col, v) in &gate.entries {
            output[row as usize] += v * input[col as usize];
        }
        for (local, off) in offsets.iter().enumerate() {
            if let Some(o) = off {
                state[base | o] = output[local];
            }
        }
    }
}
