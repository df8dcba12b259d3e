//! On-disk dataset format.
//!
//! A dataset directory holds three files:
//!
//! - `antibodies.fasta`: two records per antibody, headers
//!   `>id|chain=heavy|host=human|lc_isotype=kappa|hc_isotype=IgG|epitope=conformational`
//!   and `>id|chain=light`. Metadata may sit on either record.
//! - `antigens.fasta`: `>id|subtype=H1|year=pre1950|origin=public`.
//! - `assays.csv`: header `antibody_id,antigen_id,assay,raw_value`, `assay` in
//!   `{binding, hai}`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::types::*;
use crate::error::{Error, Result};

pub const ANTIBODY_FASTA: &str = "antibodies.fasta";
pub const ANTIGEN_FASTA: &str = "antigens.fasta";
pub const ASSAY_CSV: &str = "assays.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DatasetFormat {
    #[default]
    CsvPlusFasta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FastaRecord {
    pub id: String,
    pub fields: Vec<(String, String)>,
    pub sequence: String,
    /// 1-based line number of the header.
    pub line: usize,
}

/// Splits FASTA text into records. Headers are `>id|key=value|...`.
pub fn parse_fasta(source_name: &str, text: &str) -> Result<Vec<FastaRecord>> {
    let mut out: Vec<FastaRecord> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('>') {
            let mut parts = header.split('|');
            let id = parts.next().unwrap_or_default().trim().to_string();
            validate_id(&id).map_err(|m| Error::parse(source_name, line_no, m))?;
            let mut fields = Vec::new();
            for part in parts {
                let (k, v) = part
                    .split_once('=')
                    .ok_or_else(|| Error::parse(source_name, line_no, format!("header field '{part}' is not key=value")))?;
                fields.push((k.trim().to_string(), v.trim().to_string()));
            }
            out.push(FastaRecord {
                id,
                fields,
                sequence: String::new(),
                line: line_no,
            });
        } else {
            let rec = out
                .last_mut()
                .ok_or_else(|| Error::parse(source_name, line_no, "sequence data before first header"))?;
            rec.sequence.push_str(line);
        }
    }
    Ok(out)
}

fn sequence_of(source_name: &str, rec: &FastaRecord) -> Result<AminoAcidSequence> {
    AminoAcidSequence::new(rec.sequence.clone())
        .map_err(|e| Error::parse(source_name, rec.line, format!("record '{}': {e}", rec.id)))
}

fn field<T: std::str::FromStr<Err = String>>(
    source_name: &str,
    line: usize,
    id: &str,
    fields: &BTreeMap<String, String>,
    key: &str,
) -> Result<T> {
    let raw = fields
        .get(key)
        .ok_or_else(|| Error::parse(source_name, line, format!("record '{id}' lacks field '{key}'")))?;
    raw.parse().map_err(|e: String| Error::parse(source_name, line, e))
}

fn merge_fields(
    source_name: &str,
    rec: &FastaRecord,
    into: &mut BTreeMap<String, String>,
) -> Result<()> {
    for (k, v) in &rec.fields {
        if k == "chain" {
            continue;
        }
        if let Some(prev) = into.insert(k.clone(), v.clone()) {
            if &prev != v {
                return Err(Error::parse(
                    source_name,
                    rec.line,
                    format!("conflicting values for '{k}' on '{}': {prev} vs {v}", rec.id),
                ));
            }
        }
    }
    Ok(())
}

pub fn read_antibody_fasta(source_name: &str, text: &str) -> Result<Vec<Antibody>> {
    struct Partial {
        heavy: Option<AminoAcidSequence>,
        light: Option<AminoAcidSequence>,
        fields: BTreeMap<String, String>,
        line: usize,
    }
    let mut order = Vec::new();
    let mut partial: BTreeMap<String, Partial> = BTreeMap::new();
    for rec in parse_fasta(source_name, text)? {
        let chain = rec
            .fields
            .iter()
            .find(|(k, _)| k == "chain")
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::parse(source_name, rec.line, format!("record '{}' lacks chain=heavy|light", rec.id)))?
            .to_string();
        let seq = sequence_of(source_name, &rec)?;
        let entry = partial.entry(rec.id.clone()).or_insert_with(|| {
            order.push(rec.id.clone());
            Partial {
                heavy: None,
                light: None,
                fields: BTreeMap::new(),
                line: rec.line,
            }
        });
        merge_fields(source_name, &rec, &mut entry.fields)?;
        let slot = match chain.as_str() {
            "heavy" => &mut entry.heavy,
            "light" => &mut entry.light,
            other => {
                return Err(Error::parse(source_name, rec.line, format!("unknown chain '{other}'")));
            }
        };
        if slot.replace(seq).is_some() {
            return Err(Error::Integrity(format!("antibody '{}' has two {chain} chains", rec.id)));
        }
    }

    order
        .into_iter()
        .map(|id| {
            let p = partial.remove(&id).expect("recorded id");
            let heavy_var = p
                .heavy
                .ok_or_else(|| Error::parse(source_name, p.line, format!("antibody '{id}' has no heavy chain")))?;
            let light_var = p
                .light
                .ok_or_else(|| Error::parse(source_name, p.line, format!("antibody '{id}' has no light chain")))?;
            Ok(Antibody {
                host: field(source_name, p.line, &id, &p.fields, "host")?,
                lc_isotype: field(source_name, p.line, &id, &p.fields, "lc_isotype")?,
                hc_isotype: field(source_name, p.line, &id, &p.fields, "hc_isotype")?,
                epitope: field(source_name, p.line, &id, &p.fields, "epitope")?,
                id,
                heavy_var,
                light_var,
            })
        })
        .collect()
}

pub fn read_antigen_fasta(source_name: &str, text: &str) -> Result<Vec<Antigen>> {
    parse_fasta(source_name, text)?
        .into_iter()
        .map(|rec| {
            let mut fields = BTreeMap::new();
            merge_fields(source_name, &rec, &mut fields)?;
            Ok(Antigen {
                sequence: sequence_of(source_name, &rec)?,
                subtype: field(source_name, rec.line, &rec.id, &fields, "subtype")?,
                year_category: field(source_name, rec.line, &rec.id, &fields, "year")?,
                origin: field(source_name, rec.line, &rec.id, &fields, "origin")?,
                id: rec.id,
            })
        })
        .collect()
}

/// Parses the assay table. Row numbers in errors count the header as row 1.
pub fn parse_assay_csv(source_name: &str, text: &str) -> Result<Vec<AssayRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(source_name, 1, e.to_string()))?
        .clone();
    let expected = ["antibody_id", "antigen_id", "assay", "raw_value"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::parse(
            source_name,
            1,
            format!("expected header {}, found {}", expected.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 2;
        let row = row.map_err(|e| Error::parse(source_name, row_no, e.to_string()))?;
        let assay: Task = row[2].parse().map_err(|e| Error::parse(source_name, row_no, e))?;
        let raw_value: f64 = row[3]
            .parse()
            .map_err(|_| Error::parse(source_name, row_no, format!("raw_value '{}' is not a number", &row[3])))?;
        super::binarize(assay, raw_value).map_err(|e| Error::parse(source_name, row_no, e.to_string()))?;
        out.push(AssayRecord {
            antibody_id: row[0].to_string(),
            antigen_id: row[1].to_string(),
            assay,
            raw_value,
        });
    }
    Ok(out)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads and validates a dataset directory.
pub fn load_dataset(dir: impl AsRef<Path>, format: DatasetFormat) -> Result<Dataset> {
    let DatasetFormat::CsvPlusFasta = format;
    let dir = dir.as_ref();
    let antibodies = read_antibody_fasta(ANTIBODY_FASTA, &read_text(&dir.join(ANTIBODY_FASTA))?)?;
    let antigens = read_antigen_fasta(ANTIGEN_FASTA, &read_text(&dir.join(ANTIGEN_FASTA))?)?;
    let records = parse_assay_csv(ASSAY_CSV, &read_text(&dir.join(ASSAY_CSV))?)?;
    Dataset::new(antibodies, antigens, records)
}

fn wrap_sequence(out: &mut String, seq: &str) {
    for chunk in seq.as_bytes().chunks(60) {
        out.push_str(std::str::from_utf8(chunk).expect("ascii residues"));
        out.push('\n');
    }
}

pub fn write_antibody_fasta<'a>(antibodies: impl IntoIterator<Item = &'a Antibody>) -> String {
    let mut out = String::new();
    for ab in antibodies {
        let _ = writeln!(
            out,
            ">{}|chain=heavy|host={}|lc_isotype={}|hc_isotype={}|epitope={}",
            ab.id, ab.host, ab.lc_isotype, ab.hc_isotype, ab.epitope
        );
        wrap_sequence(&mut out, ab.heavy_var.as_str());
        let _ = writeln!(out, ">{}|chain=light", ab.id);
        wrap_sequence(&mut out, ab.light_var.as_str());
    }
    out
}

pub fn write_antigen_fasta<'a>(antigens: impl IntoIterator<Item = &'a Antigen>) -> String {
    let mut out = String::new();
    for ag in antigens {
        let _ = writeln!(
            out,
            ">{}|subtype={}|year={}|origin={}",
            ag.id, ag.subtype, ag.year_category, ag.origin
        );
        wrap_sequence(&mut out, ag.sequence.as_str());
    }
    out
}

pub fn write_assay_csv<'a>(records: impl IntoIterator<Item = &'a AssayRecord>) -> String {
    let mut out = String::from("antibody_id,antigen_id,assay,raw_value\n");
    for r in records {
        // `{}` on f64 prints the shortest representation that parses back exactly.
        let _ = writeln!(out, "{},{},{},{}", r.antibody_id, r.antigen_id, r.assay, r.raw_value);
    }
    out
}

/// Writes the three dataset files into `dir`, creating it if needed.
pub fn save_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(path, e))
    };
    write(ANTIBODY_FASTA, write_antibody_fasta(dataset.antibodies()))?;
    write(ANTIGEN_FASTA, write_antigen_fasta(dataset.antigens()))?;
    write(ASSAY_CSV, write_assay_csv(dataset.records()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const ABS: &str = "\
>ab1|chain=heavy|host=human|lc_isotype=kappa|hc_isotype=IgG|epitope=conformational
ACDEFG
>ab1|chain=light
HIKLMN
>ab2|chain=heavy|host=mouse|lc_isotype=lambda|hc_isotype=IgA|epitope=other_unknown
PQRST
>ab2|chain=light
VWYXA
";
    const AGS: &str = "\
>ha1|subtype=H1|year=pre1950|origin=public
MKAILVVLLYTFATANA
>ha2|subtype=H3|year=post2010|origin=cobra
MKTIIALSYIFCLALG
";

    fn load(csv_text: &str) -> Result<Dataset> {
        Dataset::new(
            read_antibody_fasta("abs", ABS)?,
            read_antigen_fasta("ags", AGS)?,
            parse_assay_csv("assays", csv_text)?,
        )
    }

    #[test]
    fn well_formed_three_rows() {
        let d = load("antibody_id,antigen_id,assay,raw_value\nab1,ha1,binding,3.5\nab2,ha1,binding,0.5\nab1,ha2,hai,0.2\n")
            .unwrap();
        assert_eq!(d.pairs().len(), 3);
        assert_eq!(d.task_pairs(Task::Binding).len(), 2);
        assert!(d.task_pairs(Task::Hai)[0].label);
        assert_eq!(d.antibody("ab2").unwrap().host, Host::Mouse);
    }

    #[test]
    fn bad_residue_names_row() {
        let bad = AGS.replace("MKTIIALSYIFCLALG", "MKTIBALS");
        let err = read_antigen_fasta("ags", &bad).unwrap_err();
        match err {
            Error::Parse { row, message, .. } => {
                assert_eq!(row, 3);
                assert!(message.contains("'B'"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dangling_antigen_is_integrity_error() {
        let err = load("antibody_id,antigen_id,assay,raw_value\nab1,ha9,binding,3.5\n").unwrap_err();
        assert!(matches!(err, Error::Integrity(m) if m.contains("ha9")));
    }

    #[test]
    fn duplicate_triple_rejected() {
        let err = load("antibody_id,antigen_id,assay,raw_value\nab1,ha1,binding,3.5\nab1,ha1,binding,2\n").unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
        // Same pair under the other assay is fine.
        load("antibody_id,antigen_id,assay,raw_value\nab1,ha1,binding,3.5\nab1,ha1,hai,2\n").unwrap();
    }

    #[test]
    fn out_of_range_value_names_row() {
        let err = load("antibody_id,antigen_id,assay,raw_value\nab1,ha1,binding,3.5\nab2,ha1,binding,25\n").unwrap_err();
        assert!(matches!(err, Error::Parse { row: 3, .. }), "{err:?}");
    }

    #[test]
    fn wrong_header_rejected() {
        assert!(parse_assay_csv("a", "ab,ag,assay,value\n").is_err());
    }

    #[test]
    fn missing_light_chain() {
        let text = ">ab1|chain=heavy|host=human|lc_isotype=kappa|hc_isotype=IgG|epitope=conformational\nACD\n";
        assert!(read_antibody_fasta("abs", text).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let d = load("antibody_id,antigen_id,assay,raw_value\nab1,ha1,binding,3.5\nab2,ha1,binding,0.5\nab1,ha2,hai,0.1234567891\n")
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&d, dir.path()).unwrap();
        let back = load_dataset(dir.path(), DatasetFormat::CsvPlusFasta).unwrap();
        assert_eq!(back, d);
    }
}
