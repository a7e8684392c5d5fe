//! Clinical code handling: ICD-9 parent roll-up, crosswalk mapping to CCS
//! and CUI spaces, and index vocabularies shared by models and stores.
//!
//! Roll-up keeps the three ICD-9 diagnosis root forms apart: plain numeric
//! codes roll to their first three digits, E-codes to `E` plus three digits,
//! V-codes to `V` plus two digits. Procedure codes roll to their first two
//! digits. Rolled codes carry a `D_`/`P_` prefix so diagnosis and procedure
//! parents never collide in a shared vocabulary.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Source systems as they appear in raw hospital tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CodeSystem {
    Icd9Diag,
    Icd9Proc,
    Ndc,
}

impl CodeSystem {
    pub fn name(self) -> &'static str {
        match self {
            CodeSystem::Icd9Diag => "ICD9_DIAG",
            CodeSystem::Icd9Proc => "ICD9_PROC",
            CodeSystem::Ndc => "NDC",
        }
    }
}

/// Target spaces after roll-up or crosswalk mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RolledSystem {
    Icd9Parent,
    CcsDiag,
    CcsProc,
    Cui,
}

impl RolledSystem {
    pub fn name(self) -> &'static str {
        match self {
            RolledSystem::Icd9Parent => "ICD9_PARENT",
            RolledSystem::CcsDiag => "CCS_DIAG",
            RolledSystem::CcsProc => "CCS_PROC",
            RolledSystem::Cui => "CUI",
        }
    }
}

/// A code as read from a source table, not yet validated.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RawCode {
    pub system: CodeSystem,
    pub text: String,
}

impl RawCode {
    pub fn new(system: CodeSystem, text: impl Into<String>) -> Self {
        RawCode {
            system,
            text: text.into(),
        }
    }
}

/// A code in one of the model-facing spaces.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RolledCode {
    pub system: RolledSystem,
    pub text: String,
}

impl fmt::Display for RolledCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

fn parse_error(system: CodeSystem, code: &str, reason: impl Into<String>) -> Error {
    Error::CodeParse {
        system: system.name(),
        code: code.to_string(),
        reason: reason.into(),
    }
}

fn all_digits(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

/// Rolls an ICD-9 code up to its parent category.
///
/// Accepts already-rolled `D_`/`P_` codes and returns them unchanged, so the
/// operation is idempotent. NDC codes have no parent hierarchy and are
/// rejected.
pub fn rollup_icd9(code: &RawCode) -> Result<RolledCode> {
    let text = code.text.trim();
    match code.system {
        CodeSystem::Ndc => Err(parse_error(
            code.system,
            text,
            "NDC codes have no ICD-9 parent; map them to CUI instead",
        )),
        CodeSystem::Icd9Diag => {
            if let Some(rest) = text.strip_prefix("D_") {
                validate_diag_root(rest)
                    .ok_or_else(|| parse_error(code.system, text, "invalid rolled diagnosis root"))?;
                return Ok(RolledCode {
                    system: RolledSystem::Icd9Parent,
                    text: text.to_string(),
                });
            }
            let root = diag_root(text).ok_or_else(|| {
                parse_error(
                    code.system,
                    text,
                    "expected 3-5 digits, E + 3-4 digits, or V + 2-4 digits",
                )
            })?;
            Ok(RolledCode {
                system: RolledSystem::Icd9Parent,
                text: format!("D_{root}"),
            })
        }
        CodeSystem::Icd9Proc => {
            if let Some(rest) = text.strip_prefix("P_") {
                if rest.len() == 2 && all_digits(rest) {
                    return Ok(RolledCode {
                        system: RolledSystem::Icd9Parent,
                        text: text.to_string(),
                    });
                }
                return Err(parse_error(code.system, text, "invalid rolled procedure root"));
            }
            if all_digits(text) && (2..=4).contains(&text.len()) {
                Ok(RolledCode {
                    system: RolledSystem::Icd9Parent,
                    text: format!("P_{}", &text[..2]),
                })
            } else {
                Err(parse_error(code.system, text, "expected 2-4 digits"))
            }
        }
    }
}

/// Root of a leaf diagnosis code, or None if the form is invalid.
fn diag_root(text: &str) -> Option<String> {
    let bytes = text.as_bytes();
    match bytes.first()? {
        b'E' | b'e' => {
            let rest = &text[1..];
            if all_digits(rest) && (3..=4).contains(&rest.len()) {
                Some(format!("E{}", &rest[..3]))
            } else {
                None
            }
        }
        b'V' | b'v' => {
            let rest = &text[1..];
            if all_digits(rest) && (2..=4).contains(&rest.len()) {
                Some(format!("V{}", &rest[..2]))
            } else {
                None
            }
        }
        _ => {
            if all_digits(text) && (3..=5).contains(&text.len()) {
                Some(text[..3].to_string())
            } else {
                None
            }
        }
    }
}

/// Checks that `root` is a well-formed unprefixed diagnosis parent.
fn validate_diag_root(root: &str) -> Option<()> {
    let bytes = root.as_bytes();
    match bytes.first()? {
        b'E' => (all_digits(&root[1..]) && root.len() == 4).then_some(()),
        b'V' => (all_digits(&root[1..]) && root.len() == 3).then_some(()),
        _ => (all_digits(root) && root.len() == 3).then_some(()),
    }
}

/// Crosswalk from source code text to a target space.
#[derive(Debug, Clone)]
pub struct MappingTable {
    pub target: RolledSystem,
    map: HashMap<String, String>,
}

impl MappingTable {
    pub fn new(target: RolledSystem) -> Self {
        MappingTable {
            target,
            map: HashMap::new(),
        }
    }

    pub fn insert(&mut self, source: impl Into<String>, target_code: impl Into<String>) {
        self.map.insert(source.into(), target_code.into());
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Reads `source<TAB>target` lines; `#` starts a comment, blanks skipped.
    pub fn read(path: &Path, target: RolledSystem) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut table = MappingTable::new(target);
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (src, dst) = line.split_once('\t').ok_or_else(|| {
                Error::Format(format!(
                    "{}:{}: expected source<TAB>target",
                    path.display(),
                    lineno + 1
                ))
            })?;
            table.insert(src.trim(), dst.trim());
        }
        Ok(table)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let mut keys: Vec<&String> = self.map.keys().collect();
        keys.sort();
        for k in keys {
            writeln!(out, "{}\t{}", k, self.map[k])?;
        }
        Ok(())
    }
}

/// Maps a source code through a crosswalk; a miss is an error carrying the
/// source code so callers can log before dropping.
pub fn map_code(code: &str, table: &MappingTable) -> Result<RolledCode> {
    match table.map.get(code.trim()) {
        Some(mapped) => Ok(RolledCode {
            system: table.target,
            text: mapped.clone(),
        }),
        None => Err(Error::MappingMiss {
            target: table.target.name(),
            code: code.trim().to_string(),
        }),
    }
}

/// Index vocabulary over one code space. Index 0 is reserved for padding;
/// real entries map bijectively onto 1..=len.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeVocabulary {
    entries: Vec<String>,
    index_of: HashMap<String, usize>,
}

pub const PAD_TOKEN: &str = "<PAD>";
pub const PAD_INDEX: usize = 0;

impl CodeVocabulary {
    /// Builds a vocabulary from an arbitrary code multiset. Entries are
    /// deduplicated and sorted lexicographically so the index assignment is
    /// independent of observation order.
    pub fn build<I, S>(codes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = codes.into_iter().map(Into::into).collect();
        let entries: Vec<String> = set.into_iter().collect();
        let index_of = entries
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i + 1))
            .collect();
        CodeVocabulary { entries, index_of }
    }

    /// Number of slots including the pad row.
    pub fn size(&self) -> usize {
        self.entries.len() + 1
    }

    /// Number of real codes.
    pub fn n_codes(&self) -> usize {
        self.entries.len()
    }

    pub fn index_of(&self, code: &str) -> Option<usize> {
        self.index_of.get(code).copied()
    }

    /// Code at `index`; index 0 is the pad token.
    pub fn code_at(&self, index: usize) -> Option<&str> {
        if index == 0 {
            Some(PAD_TOKEN)
        } else {
            self.entries.get(index - 1).map(String::as_str)
        }
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    /// Writes one code per line; line 0 is the literal pad token.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "{PAD_TOKEN}")?;
        for code in &self.entries {
            writeln!(out, "{code}")?;
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut lines = BufReader::new(file).lines();
        match lines.next() {
            Some(Ok(first)) if first == PAD_TOKEN => {}
            _ => {
                return Err(Error::Format(format!(
                    "{}: vocabulary must start with {PAD_TOKEN}",
                    path.display()
                )))
            }
        }
        let mut entries = Vec::new();
        for line in lines {
            let line = line?;
            if !line.trim().is_empty() {
                entries.push(line.trim().to_string());
            }
        }
        let index_of: HashMap<String, usize> = entries
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i + 1))
            .collect();
        if index_of.len() != entries.len() {
            return Err(Error::Format(format!(
                "{}: vocabulary contains duplicates",
                path.display()
            )));
        }
        Ok(CodeVocabulary { entries, index_of })
    }
}

/// Builds a vocabulary by rolling up raw ICD-9 codes first. Parse failures
/// are dropped and counted; the caller decides whether the drop count is
/// tolerable.
pub fn build_vocabulary_from_raw(codes: &[RawCode]) -> (CodeVocabulary, usize) {
    let mut rolled = Vec::with_capacity(codes.len());
    let mut dropped = 0usize;
    for code in codes {
        match rollup_icd9(code) {
            Ok(r) => rolled.push(r.text),
            Err(e) => {
                log::warn!("dropping code: {e}");
                dropped += 1;
            }
        }
    }
    (CodeVocabulary::build(rolled), dropped)
}

/// Deterministic stand-in for the full ICD-9 code lists. The real lists are
/// distributed under registry licenses, so the repository ships a generated
/// universe with the same parent-level shape: 1,234 distinct diagnosis
/// parents (999 numeric roots, V01-V99, E850-E985) and 100 procedure
/// parents, each root covered by two leaf codes.
pub mod universe {
    /// Leaf diagnosis codes whose parent set has exactly 1,234 elements.
    pub fn full_diag_leaves() -> Vec<String> {
        let mut leaves = Vec::new();
        for n in 1..=999 {
            leaves.push(format!("{n:03}0"));
            leaves.push(format!("{n:03}01"));
        }
        for v in 1..=99 {
            leaves.push(format!("V{v:02}0"));
            leaves.push(format!("V{v:02}00"));
        }
        for e in 850..=985 {
            leaves.push(format!("E{e:03}0"));
            leaves.push(format!("E{e:03}"));
        }
        leaves
    }

    /// Leaf procedure codes covering all 100 two-digit parents.
    pub fn full_proc_leaves() -> Vec<String> {
        let mut leaves = Vec::new();
        for n in 0..=99 {
            leaves.push(format!("{n:02}1"));
            leaves.push(format!("{n:02}11"));
        }
        leaves
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(text: &str) -> RawCode {
        RawCode::new(CodeSystem::Icd9Diag, text)
    }

    fn proc(text: &str) -> RawCode {
        RawCode::new(CodeSystem::Icd9Proc, text)
    }

    #[test]
    fn rollup_reference_cases() {
        assert_eq!(rollup_icd9(&diag("4280")).unwrap().text, "D_428");
        assert_eq!(rollup_icd9(&diag("E8500")).unwrap().text, "D_E850");
        assert_eq!(rollup_icd9(&diag("V3001")).unwrap().text, "D_V30");
        assert_eq!(rollup_icd9(&proc("3961")).unwrap().text, "P_39");
    }

    #[test]
    fn rollup_trims_and_uppercases() {
        assert_eq!(rollup_icd9(&diag(" 4280 ")).unwrap().text, "D_428");
        assert_eq!(rollup_icd9(&diag("e8500")).unwrap().text, "D_E850");
        assert_eq!(rollup_icd9(&diag("v3001")).unwrap().text, "D_V30");
    }

    #[test]
    fn rollup_rejects_malformed_and_names_the_code() {
        for bad in ["", "12", "E85", "V3", "42A0", "123456", "E85001", "D_"] {
            let err = rollup_icd9(&diag(bad)).unwrap_err();
            match err {
                Error::CodeParse { code, .. } => assert_eq!(code, bad.trim()),
                other => panic!("expected CodeParse, got {other:?}"),
            }
        }
        assert!(rollup_icd9(&proc("1")).is_err());
        assert!(rollup_icd9(&proc("12345")).is_err());
        assert!(rollup_icd9(&RawCode::new(CodeSystem::Ndc, "00093")).is_err());
    }

    #[test]
    fn rollup_idempotent_on_own_output() {
        for leaf in ["4280", "E8500", "V3001", "001", "99981"] {
            let once = rollup_icd9(&diag(leaf)).unwrap();
            let twice = rollup_icd9(&diag(&once.text)).unwrap();
            assert_eq!(once, twice);
        }
        let once = rollup_icd9(&proc("3961")).unwrap();
        let twice = rollup_icd9(&proc(&once.text)).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn rolled_root_lengths() {
        for leaf in ["4280", "12345", "E8500", "V3001", "V420"] {
            let rolled = rollup_icd9(&diag(leaf)).unwrap();
            let root = rolled.text.strip_prefix("D_").unwrap();
            let expected = match root.as_bytes()[0] {
                b'E' => 4,
                b'V' => 3,
                _ => 3,
            };
            assert_eq!(root.len(), expected, "root {root}");
        }
    }

    #[test]
    fn map_code_hit_and_miss() {
        let mut table = MappingTable::new(RolledSystem::CcsDiag);
        table.insert("4280", "CCS108");
        let hit = map_code("4280", &table).unwrap();
        assert_eq!(hit.text, "CCS108");
        assert_eq!(hit.system, RolledSystem::CcsDiag);
        match map_code("9999", &table).unwrap_err() {
            Error::MappingMiss { code, .. } => assert_eq!(code, "9999"),
            other => panic!("expected MappingMiss, got {other:?}"),
        }
    }

    #[test]
    fn crosswalk_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("xw.tsv");
        std::fs::write(&path, "# comment\n4280\tCCS108\n\n25000\tCCS49\n").unwrap();
        let table = MappingTable::read(&path, RolledSystem::CcsDiag).unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(map_code("25000", &table).unwrap().text, "CCS49");
        let out = dir.path().join("out.tsv");
        table.write(&out).unwrap();
        let back = MappingTable::read(&out, RolledSystem::CcsDiag).unwrap();
        assert_eq!(back.len(), 2);
    }

    #[test]
    fn vocabulary_dedups_and_counts_pad() {
        let vocab = CodeVocabulary::build(["D_428", "D_428", "D_250"]);
        assert_eq!(vocab.size(), 3);
        assert_eq!(vocab.n_codes(), 2);
        assert_eq!(vocab.index_of("D_250"), Some(1));
        assert_eq!(vocab.index_of("D_428"), Some(2));
        assert_eq!(vocab.code_at(0), Some(PAD_TOKEN));
    }

    #[test]
    fn vocabulary_index_bijection() {
        let vocab = CodeVocabulary::build(["D_1", "D_9", "D_5", "D_5", "D_2"]);
        for (i, code) in vocab.entries().iter().enumerate() {
            assert_eq!(vocab.index_of(code), Some(i + 1));
            assert_eq!(vocab.code_at(i + 1), Some(code.as_str()));
        }
        assert_eq!(vocab.index_of(PAD_TOKEN), None);
    }

    #[test]
    fn vocabulary_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let vocab = CodeVocabulary::build(["D_428", "D_250", "P_39"]);
        vocab.write(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("<PAD>\n"));
        let back = CodeVocabulary::read(&path).unwrap();
        assert_eq!(back, vocab);
    }

    #[test]
    fn universe_parent_counts() {
        let diag_leaves = universe::full_diag_leaves();
        let (vocab, dropped) = build_vocabulary_from_raw(
            &diag_leaves
                .iter()
                .map(|c| RawCode::new(CodeSystem::Icd9Diag, c.clone()))
                .collect::<Vec<_>>(),
        );
        assert_eq!(dropped, 0);
        assert_eq!(vocab.n_codes(), 1234);
        assert_eq!(vocab.size(), 1235);

        let proc_leaves = universe::full_proc_leaves();
        let (vocab, dropped) = build_vocabulary_from_raw(
            &proc_leaves
                .iter()
                .map(|c| RawCode::new(CodeSystem::Icd9Proc, c.clone()))
                .collect::<Vec<_>>(),
        );
        assert_eq!(dropped, 0);
        assert_eq!(vocab.n_codes(), 100);
    }
}
