//! Label-budget tuples such as `(8k, 2k, -)`.
//!
//! Entry 0 is the number of samples labeled at the finest level, entry 1 the
//! number labeled (only) one level coarser, and so on. `-` removes the level
//! from the run altogether, while `0` keeps the level with no extra samples.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TupleEntry {
    Absent,
    Count(usize),
    /// Every train sample still unassigned when this level is allocated.
    All,
}

impl TupleEntry {
    pub fn is_present(self) -> bool {
        !matches!(self, TupleEntry::Absent)
    }
}

impl fmt::Display for TupleEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TupleEntry::Absent => f.write_str("-"),
            TupleEntry::Count(n) => write!(f, "{n}"),
            TupleEntry::All => f.write_str("all"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TupleSpec {
    entries: Vec<TupleEntry>,
}

impl TupleSpec {
    pub fn new(entries: Vec<TupleEntry>) -> Result<Self> {
        match entries.first() {
            None => Err(Error::Tuple("tuple has no entries".into())),
            Some(TupleEntry::Absent) => Err(Error::Tuple(
                "the finest level cannot be absent".into(),
            )),
            Some(_) => Ok(TupleSpec { entries }),
        }
    }

    /// `n` labels at the finest level only.
    pub fn finest_only(n: usize) -> Self {
        TupleSpec {
            entries: vec![TupleEntry::Count(n)],
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let trimmed = text.trim();
        let inner = trimmed
            .strip_prefix('(')
            .and_then(|t| t.strip_suffix(')'))
            .unwrap_or(trimmed);
        let offset = text.len() - text.trim_start().len()
            + usize::from(inner.len() != trimmed.len());
        let mut entries = Vec::new();
        let mut pos = offset;
        for token in inner.split(',') {
            let lead = token.len() - token.trim_start().len();
            entries.push(parse_entry(token.trim(), pos + lead)?);
            pos += token.len() + 1;
        }
        if entries.first() == Some(&TupleEntry::Absent) {
            return Err(Error::Parse {
                position: offset,
                message: "the finest level cannot be '-'".into(),
            });
        }
        TupleSpec::new(entries)
    }

    pub fn entries(&self) -> &[TupleEntry] {
        &self.entries
    }

    pub fn arity(&self) -> usize {
        self.entries.len()
    }

    /// Entry for a dataset level in a hierarchy with `levels` levels; levels
    /// beyond the tuple's arity are absent.
    pub fn entry_for_level(&self, level: usize, levels: usize) -> TupleEntry {
        levels
            .checked_sub(level)
            .and_then(|i| self.entries.get(i).copied())
            .unwrap_or(TupleEntry::Absent)
    }

    /// Dataset levels (ascending) that take part in a run on an
    /// `levels`-level hierarchy. Entries reaching past level 1 must be `-`.
    pub fn active_levels(&self, levels: usize) -> Result<Vec<usize>> {
        for (i, e) in self.entries.iter().enumerate().skip(levels) {
            if e.is_present() {
                return Err(Error::Tuple(format!(
                    "tuple {self} sets entry {} but the hierarchy has only {levels} levels",
                    i + 1
                )));
            }
        }
        Ok((1..=levels)
            .filter(|&l| self.entry_for_level(l, levels).is_present())
            .collect())
    }

    /// Cumulative labeled count per active level (ascending level order):
    /// `a` at the finest, `a + b` one up, and so on. `None` when an `all`
    /// entry makes the count data-dependent.
    pub fn cumulative_counts(&self, levels: usize) -> Result<Vec<Option<usize>>> {
        let active = self.active_levels(levels)?;
        let mut acc = Some(0usize);
        let mut out = Vec::with_capacity(active.len());
        for &l in active.iter().rev() {
            acc = match (acc, self.entry_for_level(l, levels)) {
                (Some(a), TupleEntry::Count(n)) => Some(a + n),
                _ => None,
            };
            out.push(acc);
        }
        out.reverse();
        Ok(out)
    }
}

fn parse_entry(token: &str, position: usize) -> Result<TupleEntry> {
    let err = |message: String| Error::Parse { position, message };
    match token {
        "" => Err(err("empty entry".into())),
        "-" => Ok(TupleEntry::Absent),
        "all" => Ok(TupleEntry::All),
        t => {
            let (digits, mult) = match t.strip_suffix(['k', 'K']) {
                Some(d) => (d, 1000),
                None => (t, 1),
            };
            digits
                .parse::<usize>()
                .ok()
                .and_then(|n| n.checked_mul(mult))
                .map(TupleEntry::Count)
                .ok_or_else(|| err(format!("'{t}' is not a count, '-' or 'all'")))
        }
    }
}

impl fmt::Display for TupleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.entries.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl FromStr for TupleSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TupleSpec::parse(s)
    }
}

impl Serialize for TupleSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TupleSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        TupleSpec::parse(&s).map_err(serde::de::Error::custom)
    }
}
