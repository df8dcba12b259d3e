use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Residue alphabet: the 20 canonical amino acids followed by `X` (unknown).
pub const RESIDUES: &[u8; 21] = b"ACDEFGHIKLMNPQRSTVWYX";

pub fn is_residue(b: u8) -> bool {
    RESIDUES.contains(&b)
}

/// A non-empty amino-acid string over [`RESIDUES`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AminoAcidSequence(String);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SequenceError {
    #[error("empty sequence")]
    Empty,
    #[error("invalid residue '{residue}' at position {position}")]
    InvalidResidue { position: usize, residue: char },
}

impl AminoAcidSequence {
    pub fn new(residues: impl Into<String>) -> std::result::Result<Self, SequenceError> {
        let residues = residues.into();
        if residues.is_empty() {
            return Err(SequenceError::Empty);
        }
        if let Some((position, residue)) = residues.chars().enumerate().find(|(_, c)| !c.is_ascii() || !is_residue(*c as u8)) {
            return Err(SequenceError::InvalidResidue { position, residue });
        }
        Ok(Self(residues))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.0.as_bytes()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl TryFrom<String> for AminoAcidSequence {
    type Error = SequenceError;

    fn try_from(value: String) -> std::result::Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<AminoAcidSequence> for String {
    fn from(value: AminoAcidSequence) -> Self {
        value.0
    }
}

impl fmt::Display for AminoAcidSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Implements `Display`/`FromStr` for a metadata enum from one table of names.
macro_rules! named_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!("unknown {} '{}'", stringify!($name), other)),
                }
            }
        }
    };
}

named_enum!(Host { Human => "human", Mouse => "mouse" });
named_enum!(LightIsotype { Kappa => "kappa", Lambda => "lambda" });
named_enum!(HeavyIsotype { IgA => "IgA", IgG => "IgG" });
named_enum!(Epitope { Conformational => "conformational", OtherUnknown => "other_unknown" });
named_enum!(Subtype { H1 => "H1", H2 => "H2", H3 => "H3", H5 => "H5", H7 => "H7", Other => "other" });
named_enum!(YearCategory {
    Pre1950 => "pre1950",
    Y2000To2010 => "2000_2010",
    Post2010 => "post2010",
    OtherUnknown => "other_unknown",
});
named_enum!(Origin { Public => "public", Cobra => "cobra" });
named_enum!(
    /// Assay type; doubles as the prediction task.
    Task { Binding => "binding", Hai => "hai" }
);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Antibody {
    pub id: String,
    pub heavy_var: AminoAcidSequence,
    pub light_var: AminoAcidSequence,
    pub host: Host,
    pub lc_isotype: LightIsotype,
    pub hc_isotype: HeavyIsotype,
    pub epitope: Epitope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Antigen {
    pub id: String,
    pub sequence: AminoAcidSequence,
    pub subtype: Subtype,
    pub year_category: YearCategory,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssayRecord {
    pub antibody_id: String,
    pub antigen_id: String,
    pub assay: Task,
    pub raw_value: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledPair {
    pub antibody_id: String,
    pub antigen_id: String,
    pub task: Task,
    pub label: bool,
}

impl LabeledPair {
    /// Stable textual key `antibody_id:antigen_id`, unique within a task.
    pub fn pair_id(&self) -> String {
        format!("{}:{}", self.antibody_id, self.antigen_id)
    }
}

/// Identifiers may not contain the characters used by the file formats as separators.
pub fn validate_id(id: &str) -> std::result::Result<(), String> {
    if id.is_empty() {
        return Err("empty identifier".into());
    }
    if let Some(c) = id.chars().find(|c| matches!(c, '|' | ':' | ',' | '\t') || c.is_whitespace()) {
        return Err(format!("identifier '{id}' contains reserved character {c:?}"));
    }
    Ok(())
}

/// Validated, immutable collection of antibodies, antigens and assays.
///
/// Labelled pairs are derived from the assay records on construction and
/// kept in record order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DatasetParts", into = "DatasetParts")]
pub struct Dataset {
    antibodies: BTreeMap<String, Antibody>,
    antigens: BTreeMap<String, Antigen>,
    records: Vec<AssayRecord>,
    pairs: Vec<LabeledPair>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetParts {
    antibodies: Vec<Antibody>,
    antigens: Vec<Antigen>,
    records: Vec<AssayRecord>,
}

impl TryFrom<DatasetParts> for Dataset {
    type Error = Error;

    fn try_from(parts: DatasetParts) -> Result<Self> {
        Dataset::new(parts.antibodies, parts.antigens, parts.records)
    }
}

impl From<Dataset> for DatasetParts {
    fn from(d: Dataset) -> Self {
        DatasetParts {
            antibodies: d.antibodies.into_values().collect(),
            antigens: d.antigens.into_values().collect(),
            records: d.records,
        }
    }
}

pub const ANTIBODY_HC_LEN: (f64, f64) = (108.0, 4.0);
pub const ANTIBODY_LC_LEN: (f64, f64) = (122.0, 8.0);
pub const ANTIGEN_LEN: (f64, f64) = (559.0, 20.0);

impl Dataset {
    /// Builds a dataset, rejecting duplicate ids, duplicate assay triples,
    /// out-of-range values and dangling references.
    pub fn new(antibodies: Vec<Antibody>, antigens: Vec<Antigen>, records: Vec<AssayRecord>) -> Result<Self> {
        let mut atypical = 0usize;
        let mut ab_map = BTreeMap::new();
        for ab in antibodies {
            validate_id(&ab.id).map_err(Error::Integrity)?;
            atypical += soft_length_check(&ab.id, "heavy chain", ab.heavy_var.len(), ANTIBODY_HC_LEN) as usize;
            atypical += soft_length_check(&ab.id, "light chain", ab.light_var.len(), ANTIBODY_LC_LEN) as usize;
            let id = ab.id.clone();
            if ab_map.insert(id.clone(), ab).is_some() {
                return Err(Error::Integrity(format!("duplicate antibody id '{id}'")));
            }
        }
        let mut ag_map = BTreeMap::new();
        for ag in antigens {
            validate_id(&ag.id).map_err(Error::Integrity)?;
            atypical += soft_length_check(&ag.id, "antigen", ag.sequence.len(), ANTIGEN_LEN) as usize;
            let id = ag.id.clone();
            if ag_map.insert(id.clone(), ag).is_some() {
                return Err(Error::Integrity(format!("duplicate antigen id '{id}'")));
            }
        }

        if atypical > 0 {
            log::warn!("{atypical} sequences have lengths more than 3 sd from typical variable-region/HA lengths");
        }

        let mut seen = std::collections::HashSet::new();
        let mut pairs = Vec::with_capacity(records.len());
        for (i, rec) in records.iter().enumerate() {
            if !ab_map.contains_key(&rec.antibody_id) {
                return Err(Error::Integrity(format!(
                    "assay {i} references unknown antibody '{}'",
                    rec.antibody_id
                )));
            }
            if !ag_map.contains_key(&rec.antigen_id) {
                return Err(Error::Integrity(format!(
                    "assay {i} references unknown antigen '{}'",
                    rec.antigen_id
                )));
            }
            if !seen.insert((rec.antibody_id.as_str(), rec.antigen_id.as_str(), rec.assay)) {
                return Err(Error::Integrity(format!(
                    "duplicate assay ({}, {}, {})",
                    rec.antibody_id, rec.antigen_id, rec.assay
                )));
            }
            let label = super::binarize(rec.assay, rec.raw_value)?;
            pairs.push(LabeledPair {
                antibody_id: rec.antibody_id.clone(),
                antigen_id: rec.antigen_id.clone(),
                task: rec.assay,
                label,
            });
        }

        Ok(Self {
            antibodies: ab_map,
            antigens: ag_map,
            records,
            pairs,
        })
    }

    pub fn antibodies(&self) -> impl Iterator<Item = &Antibody> {
        self.antibodies.values()
    }

    pub fn antigens(&self) -> impl Iterator<Item = &Antigen> {
        self.antigens.values()
    }

    pub fn antibody(&self, id: &str) -> Option<&Antibody> {
        self.antibodies.get(id)
    }

    pub fn antigen(&self, id: &str) -> Option<&Antigen> {
        self.antigens.get(id)
    }

    pub fn n_antibodies(&self) -> usize {
        self.antibodies.len()
    }

    pub fn n_antigens(&self) -> usize {
        self.antigens.len()
    }

    pub fn records(&self) -> &[AssayRecord] {
        &self.records
    }

    /// All labelled pairs across tasks, in record order.
    pub fn pairs(&self) -> &[LabeledPair] {
        &self.pairs
    }

    /// Labelled pairs of one task, in record order. Fold assignments and
    /// prediction vectors are indexed against this ordering.
    pub fn task_pairs(&self, task: Task) -> Vec<&LabeledPair> {
        self.pairs.iter().filter(|p| p.task == task).collect()
    }

    /// Raw assay value of every pair of `task`, aligned with [`Dataset::task_pairs`].
    pub fn task_records(&self, task: Task) -> Vec<&AssayRecord> {
        self.records.iter().filter(|r| r.assay == task).collect()
    }

    /// Keeps only the given task's records.
    pub fn restrict_to_task(&self, task: Task) -> Dataset {
        Dataset {
            antibodies: self.antibodies.clone(),
            antigens: self.antigens.clone(),
            records: self.records.iter().filter(|r| r.assay == task).cloned().collect(),
            pairs: self.pairs.iter().filter(|p| p.task == task).cloned().collect(),
        }
    }
}

fn soft_length_check(id: &str, what: &str, len: usize, (mean, sd): (f64, f64)) -> bool {
    // Observed distributions are reported as mean ± sd; flag anything beyond 3 sd.
    let atypical = (len as f64 - mean).abs() > 3.0 * sd;
    if atypical {
        log::debug!("{what} of '{id}' has length {len}, typical is {mean} ± {sd}");
    }
    atypical
}
