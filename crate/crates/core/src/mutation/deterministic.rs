//! The exhaustive per-entry stage run before havoc in `afl` mode.
//!
//! Children come out in this order:
//! 1. walking bit flips of width 1, 2 and 4 at every bit offset;
//! 2. byte flips of width 1, 2 and 4 at every byte offset;
//! 3. add then subtract every delta in `1..=ARITH_MAX` at every byte, word
//!    and dword offset (words and dwords in both byte orders);
//! 4. every interesting value at every byte, word and dword offset (both
//!    byte orders for words and dwords).

use super::edit::{Edit, Endian};
use super::havoc::{interesting_values, ARITH_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    BitFlip(usize),
    ByteFlip(usize),
    Arith(usize),
    Interesting(usize),
}

const PHASES: [Phase; 12] = [
    Phase::BitFlip(1),
    Phase::BitFlip(2),
    Phase::BitFlip(4),
    Phase::ByteFlip(1),
    Phase::ByteFlip(2),
    Phase::ByteFlip(4),
    Phase::Arith(1),
    Phase::Arith(2),
    Phase::Arith(4),
    Phase::Interesting(1),
    Phase::Interesting(2),
    Phase::Interesting(4),
];

fn endian_count(width: usize) -> usize {
    if width == 1 {
        1
    } else {
        2
    }
}

fn endian_of(i: usize) -> Endian {
    if i == 0 {
        Endian::Little
    } else {
        Endian::Big
    }
}

impl Phase {
    fn positions(self, len: usize) -> usize {
        match self {
            Phase::BitFlip(w) => (len * 8 + 1).saturating_sub(w),
            Phase::ByteFlip(w) | Phase::Arith(w) | Phase::Interesting(w) => {
                (len + 1).saturating_sub(w)
            }
        }
    }

    fn variants(self) -> usize {
        match self {
            Phase::BitFlip(_) | Phase::ByteFlip(_) => 1,
            Phase::Arith(w) => ARITH_MAX as usize * 2 * endian_count(w),
            Phase::Interesting(w) => interesting_values(w).len() * endian_count(w),
        }
    }

    fn len(self, input_len: usize) -> usize {
        self.positions(input_len) * self.variants()
    }

    fn child(self, parent: &[u8], index: usize, interesting: &[u32]) -> Vec<u8> {
        let mut out = parent.to_vec();
        let (pos, variant) = (index / self.variants(), index % self.variants());
        match self {
            Phase::BitFlip(w) => {
                for bit in pos..pos + w {
                    Edit::FlipBit { bit }.apply(&mut out);
                }
            }
            Phase::ByteFlip(w) => {
                for b in &mut out[pos..pos + w] {
                    *b ^= 0xff;
                }
            }
            Phase::Arith(w) => {
                let endians = endian_count(w);
                let endian = endian_of(variant % endians);
                let signed = variant / endians;
                let magnitude = (signed / 2 + 1) as i32;
                let delta = if signed.is_multiple_of(2) { magnitude } else { -magnitude };
                Edit::Add {
                    offset: pos,
                    width: w,
                    delta,
                    endian,
                }
                .apply(&mut out);
            }
            Phase::Interesting(w) => {
                let endians = endian_count(w);
                Edit::Store {
                    offset: pos,
                    width: w,
                    value: interesting[variant / endians],
                    endian: endian_of(variant % endians),
                }
                .apply(&mut out);
            }
        }
        out
    }
}

/// Total number of children the stage yields for an input of `len` bytes.
pub fn deterministic_stage_len(len: usize) -> usize {
    PHASES.iter().map(|p| p.len(len)).sum()
}

/// Lazily yields every deterministic child of `parent`.
pub fn deterministic_stage(parent: &[u8]) -> DeterministicStage<'_> {
    DeterministicStage {
        parent,
        phase: 0,
        index: 0,
        remaining: deterministic_stage_len(parent.len()),
        interesting: Vec::new(),
    }
}

#[derive(Debug, Clone)]
pub struct DeterministicStage<'a> {
    parent: &'a [u8],
    phase: usize,
    index: usize,
    remaining: usize,
    interesting: Vec<u32>,
}

impl Iterator for DeterministicStage<'_> {
    type Item = Vec<u8>;

    fn next(&mut self) -> Option<Vec<u8>> {
        while let Some(&phase) = PHASES.get(self.phase) {
            if self.index < phase.len(self.parent.len()) {
                if self.index == 0 {
                    if let Phase::Interesting(w) = phase {
                        self.interesting = interesting_values(w);
                    }
                }
                let child = phase.child(self.parent, self.index, &self.interesting);
                self.index += 1;
                self.remaining -= 1;
                return Some(child);
            }
            self.phase += 1;
            self.index = 0;
        }
        None
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

impl ExactSizeIterator for DeterministicStage<'_> {}
