//! Randomized stacked mutation ("havoc").

use std::num::NonZeroU32;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dictionary::Dictionary;
use super::edit::{Edit, Endian};
use super::operator::MutationOperator;
use crate::error::Error;
use crate::scheduler::OperatorDistribution;

/// Upper bound on input size; growth past it turns into a no-op.
pub const MAX_INPUT: usize = 1 << 20;

/// Largest block touched by one delete/clone/overwrite.
pub const MAX_BLOCK: usize = 32768;

/// Largest magnitude used by the arithmetic operators.
pub const ARITH_MAX: u32 = 35;

pub const INTERESTING_8: [i8; 9] = [-128, -1, 0, 1, 16, 32, 64, 100, 127];

pub const INTERESTING_16: [i16; 19] = [
    -128, -1, 0, 1, 16, 32, 64, 100, 127, // bytes
    -32768, -129, 128, 255, 256, 512, 1000, 1024, 4096, 32767,
];

pub const INTERESTING_32: [i32; 27] = [
    -128, -1, 0, 1, 16, 32, 64, 100, 127, // bytes
    -32768, -129, 128, 255, 256, 512, 1000, 1024, 4096, 32767, // words
    -2147483648, -100663046, -32769, 32768, 65535, 65536, 100663045, 2147483647,
];

pub(crate) fn interesting_values(width: usize) -> Vec<u32> {
    match width {
        1 => INTERESTING_8.iter().map(|&v| v as u8 as u32).collect(),
        2 => INTERESTING_16.iter().map(|&v| v as u16 as u32).collect(),
        4 => INTERESTING_32.iter().map(|&v| v as u32).collect(),
        _ => unreachable!("no interesting values for width {width}"),
    }
}

fn pick_interesting<R: Rng + ?Sized>(width: usize, rng: &mut R) -> u32 {
    match width {
        1 => INTERESTING_8[rng.random_range(0..INTERESTING_8.len())] as u8 as u32,
        2 => INTERESTING_16[rng.random_range(0..INTERESTING_16.len())] as u16 as u32,
        _ => INTERESTING_32[rng.random_range(0..INTERESTING_32.len())] as u32,
    }
}

fn pick_endian<R: Rng + ?Sized>(rng: &mut R) -> Endian {
    if rng.random() {
        Endian::Little
    } else {
        Endian::Big
    }
}

/// How many operators to stack on one child.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StackMode {
    /// Uniform over `{2, 4, 8, 16, 32, 64, 128}`.
    UniformPowers,
    Fixed(NonZeroU32),
}

impl StackMode {
    pub fn fixed(n: u32) -> crate::Result<Self> {
        NonZeroU32::new(n)
            .map(StackMode::Fixed)
            .ok_or_else(|| Error::Config("fixed stack size must be at least 1".into()))
    }
}

impl std::fmt::Display for StackMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StackMode::UniformPowers => f.write_str("uniform"),
            StackMode::Fixed(n) => write!(f, "fixed:{n}"),
        }
    }
}

impl FromStr for StackMode {
    type Err = Error;

    /// Accepts `uniform` or `fixed:N`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "uniform" {
            return Ok(StackMode::UniformPowers);
        }
        let n = s
            .strip_prefix("fixed:")
            .and_then(|n| n.parse::<u32>().ok())
            .ok_or_else(|| Error::Config(format!("bad stack mode `{s}`, want uniform|fixed:N")))?;
        StackMode::fixed(n)
    }
}

pub fn sample_num_mutations<R: Rng + ?Sized>(mode: StackMode, rng: &mut R) -> usize {
    match mode {
        StackMode::UniformPowers => 1 << rng.random_range(1..=7),
        StackMode::Fixed(n) => n.get() as usize,
    }
}

/// Uniform byte offset in `[0, len)`, or insertion point in `[0, len]`.
pub fn sample_mutation_site<R: Rng + ?Sized>(len: usize, insertion: bool, rng: &mut R) -> usize {
    if insertion {
        rng.random_range(0..=len)
    } else {
        assert!(len > 0, "in-place mutation site needs a non-empty input");
        rng.random_range(0..len)
    }
}

/// Block length for delete/clone/overwrite, at most `limit`.
///
/// Small blocks dominate: `[1,32]` half the time, `[32,128]` a quarter,
/// `[128,1500]` three sixteenths and `[1500,32768]` the rest.
pub fn choose_block_len<R: Rng + ?Sized>(limit: usize, rng: &mut R) -> usize {
    let limit = limit.min(MAX_BLOCK);
    if limit == 0 {
        return 0;
    }
    let (lo, hi) = match rng.random_range(0..16) {
        0..=7 => (1, 32),
        8..=11 => (32, 128),
        12..=14 => (128, 1500),
        _ => (1500, MAX_BLOCK),
    };
    if lo > limit {
        rng.random_range(1..=limit)
    } else {
        rng.random_range(lo..=hi.min(limit))
    }
}

/// Places a `width`-byte access near `site`. Returns the offset and the
/// width actually used: the site is redrawn when the access would run off
/// the end, and the width drops to one byte when the input is too short.
fn fit_site<R: Rng + ?Sized>(site: usize, len: usize, width: usize, rng: &mut R) -> (usize, usize) {
    if len < width {
        (site, 1)
    } else if site + width > len {
        (rng.random_range(0..=len - width), width)
    } else {
        (site, width)
    }
}

fn pick_token<'d, R: Rng + ?Sized>(dict: &'d Dictionary, rng: &mut R) -> &'d [u8] {
    assert!(
        !dict.is_empty(),
        "dictionary operators need a non-empty dictionary"
    );
    &dict.tokens()[rng.random_range(0..dict.len())]
}

/// Draws every random parameter of `op` at `site` and returns the edit
/// together with the site it ended up at.
///
/// # Panics
///
/// If `site` is out of range for the operator, or a dictionary operator is
/// used with an empty dictionary.
pub fn resolve_mutation<R: Rng + ?Sized>(
    op: MutationOperator,
    input: &[u8],
    site: usize,
    rng: &mut R,
    dict: &Dictionary,
) -> (Edit, usize) {
    use MutationOperator::*;
    let len = input.len();
    let empty_ok = op.inserts() || (op == RandomValue && len == 0);
    if empty_ok {
        assert!(site <= len, "insertion site {site} beyond length {len}");
    } else {
        assert!(site < len, "site {site} outside input of length {len}");
    }

    match op {
        BitFlip => (
            Edit::FlipBit {
                bit: site * 8 + rng.random_range(0..8),
            },
            site,
        ),
        InterestingByte | InterestingWord | InterestingDword => {
            let (offset, width) = fit_site(site, len, op.width(), rng);
            let edit = Edit::Store {
                offset,
                width,
                value: pick_interesting(width, rng),
                endian: pick_endian(rng),
            };
            (edit, offset)
        }
        AddByte | AddWord | AddDword | SubByte | SubWord | SubDword => {
            let (offset, width) = fit_site(site, len, op.width(), rng);
            let magnitude = rng.random_range(1..=ARITH_MAX) as i32;
            let delta = if matches!(op, AddByte | AddWord | AddDword) {
                magnitude
            } else {
                -magnitude
            };
            let edit = Edit::Add {
                offset,
                width,
                delta,
                endian: pick_endian(rng),
            };
            (edit, offset)
        }
        RandomValue if len == 0 => (
            Edit::Insert {
                offset: 0,
                bytes: vec![rng.random()],
            },
            0,
        ),
        RandomValue => (
            Edit::XorByte {
                offset: site,
                mask: rng.random_range(1..=255),
            },
            site,
        ),
        Delete => {
            // Keep at least one byte unless there is only one to begin with.
            let max = if len >= 2 { len - 1 } else { 1 };
            let n = choose_block_len(max.min(len - site), rng);
            (Edit::Delete { offset: site, len: n }, site)
        }
        Clone => {
            let bytes = if len > 0 && rng.random_range(0..4) != 0 {
                let n = choose_block_len(len, rng);
                let from = rng.random_range(0..=len - n);
                input[from..from + n].to_vec()
            } else {
                let n = choose_block_len(MAX_BLOCK, rng);
                let fill = if len > 0 && rng.random() {
                    input[rng.random_range(0..len)]
                } else {
                    rng.random()
                };
                vec![fill; n]
            };
            if len + bytes.len() > MAX_INPUT {
                (Edit::Nothing, site)
            } else {
                (Edit::Insert { offset: site, bytes }, site)
            }
        }
        Overwrite => {
            let n = choose_block_len(len - site, rng);
            let bytes = if rng.random_range(0..4) != 0 {
                let from = rng.random_range(0..=len - n);
                input[from..from + n].to_vec()
            } else {
                let fill = if rng.random() {
                    input[rng.random_range(0..len)]
                } else {
                    rng.random()
                };
                vec![fill; n]
            };
            (Edit::Overwrite { offset: site, bytes }, site)
        }
        ExtraOverwrite => {
            let token = pick_token(dict, rng);
            let n = token.len().min(len);
            let offset = site.min(len - n);
            (
                Edit::Overwrite {
                    offset,
                    bytes: token[..n].to_vec(),
                },
                offset,
            )
        }
        ExtraInsert => {
            let token = pick_token(dict, rng);
            if len + token.len() > MAX_INPUT {
                (Edit::Nothing, site)
            } else {
                (
                    Edit::Insert {
                        offset: site,
                        bytes: token.to_vec(),
                    },
                    site,
                )
            }
        }
    }
}

/// Applies one operator at `site` and returns the mutated copy.
pub fn apply_mutation<R: Rng + ?Sized>(
    op: MutationOperator,
    input: &[u8],
    site: usize,
    rng: &mut R,
    dict: &Dictionary,
) -> Vec<u8> {
    let (edit, _) = resolve_mutation(op, input, site, rng, dict);
    let mut out = input.to_vec();
    edit.apply(&mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationStep {
    pub op: MutationOperator,
    pub site: usize,
    /// False when the operator degraded to a no-op.
    pub applied: bool,
}

/// The operators stacked onto one child, in application order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationRecord {
    pub steps: Vec<MutationStep>,
}

impl MutationRecord {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn operators(&self) -> impl Iterator<Item = MutationOperator> + '_ {
        self.steps.iter().map(|s| s.op)
    }
}

/// Replacement for an operator that cannot act on an empty child.
fn empty_child_substitute(op: MutationOperator, dict: &Dictionary) -> MutationOperator {
    use MutationOperator::*;
    match op {
        Clone | ExtraInsert | RandomValue => op,
        _ if !dict.is_empty() => ExtraInsert,
        _ => RandomValue,
    }
}

/// Builds one child by stacking `stack` operators drawn from `dist` onto a
/// copy of `parent`.
pub fn mutate_child<R: Rng + ?Sized>(
    parent: &[u8],
    stack: usize,
    dist: &OperatorDistribution,
    rng: &mut R,
    dict: &Dictionary,
) -> (Vec<u8>, MutationRecord) {
    let mut child = parent.to_vec();
    let mut record = MutationRecord {
        steps: Vec::with_capacity(stack),
    };
    for _ in 0..stack {
        let mut op = dist.sample(rng);
        if child.is_empty() {
            op = empty_child_substitute(op, dict);
        }
        let insertion = op.inserts() || child.is_empty();
        let site = sample_mutation_site(child.len(), insertion, rng);
        let (edit, site) = resolve_mutation(op, &child, site, rng, dict);
        let applied = !edit.is_nothing();
        edit.apply(&mut child);
        record.steps.push(MutationStep { op, site, applied });
    }
    (child, record)
}
