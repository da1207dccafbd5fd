use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The havoc mutation operators. Each one is also a bandit arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationOperator {
    BitFlip,
    InterestingByte,
    InterestingWord,
    InterestingDword,
    AddByte,
    AddWord,
    AddDword,
    SubByte,
    SubWord,
    SubDword,
    RandomValue,
    Delete,
    Clone,
    Overwrite,
    ExtraOverwrite,
    ExtraInsert,
}

/// How an operator changes the length of its input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LengthEffect {
    Preserve,
    Shrink,
    Grow,
}

impl MutationOperator {
    pub const COUNT: usize = 16;

    pub const ALL: [MutationOperator; Self::COUNT] = [
        MutationOperator::BitFlip,
        MutationOperator::InterestingByte,
        MutationOperator::InterestingWord,
        MutationOperator::InterestingDword,
        MutationOperator::AddByte,
        MutationOperator::AddWord,
        MutationOperator::AddDword,
        MutationOperator::SubByte,
        MutationOperator::SubWord,
        MutationOperator::SubDword,
        MutationOperator::RandomValue,
        MutationOperator::Delete,
        MutationOperator::Clone,
        MutationOperator::Overwrite,
        MutationOperator::ExtraOverwrite,
        MutationOperator::ExtraInsert,
    ];

    /// Position in [`MutationOperator::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        use MutationOperator::*;
        match self {
            BitFlip => "bit_flip",
            InterestingByte => "interesting_byte",
            InterestingWord => "interesting_word",
            InterestingDword => "interesting_dword",
            AddByte => "add_byte",
            AddWord => "add_word",
            AddDword => "add_dword",
            SubByte => "sub_byte",
            SubWord => "sub_word",
            SubDword => "sub_dword",
            RandomValue => "random_value",
            Delete => "delete",
            Clone => "clone",
            Overwrite => "overwrite",
            ExtraOverwrite => "extra_overwrite",
            ExtraInsert => "extra_insert",
        }
    }

    /// Operators that draw from the dictionary.
    pub fn uses_dictionary(self) -> bool {
        matches!(
            self,
            MutationOperator::ExtraOverwrite | MutationOperator::ExtraInsert
        )
    }

    /// Operators whose site is an insertion point in `[0, len]` rather
    /// than a byte in `[0, len)`.
    pub fn inserts(self) -> bool {
        matches!(self, MutationOperator::Clone | MutationOperator::ExtraInsert)
    }

    /// Length effect on a non-empty input. `RandomValue` overwrites a byte
    /// in place unless the input is empty, in which case it inserts one.
    pub fn length_effect(self) -> LengthEffect {
        match self {
            MutationOperator::Delete => LengthEffect::Shrink,
            MutationOperator::Clone | MutationOperator::ExtraInsert => LengthEffect::Grow,
            _ => LengthEffect::Preserve,
        }
    }

    /// Byte width for the integer operators.
    pub(crate) fn width(self) -> usize {
        use MutationOperator::*;
        match self {
            InterestingWord | AddWord | SubWord => 2,
            InterestingDword | AddDword | SubDword => 4,
            _ => 1,
        }
    }
}

impl fmt::Display for MutationOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MutationOperator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MutationOperator::ALL
            .into_iter()
            .find(|op| op.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mutation operator `{s}`")))
    }
}
