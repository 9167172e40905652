//! Reader and writer for CelebA's `list_attr_celeba.txt` layout: a record
//! count line, a line of 40 attribute names, then one line per image with
//! the file name followed by 40 labels in {-1, 1}.

use std::io::BufRead;

use crate::attributes::CELEBA_ATTRIBUTES;
use crate::error::{Error, Result};
use crate::linalg::AttributeVector;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeRecord {
    pub id: String,
    pub labels: [i8; 40],
}

impl AttributeRecord {
    /// −1 ↦ 0.0, +1 ↦ 1.0.
    pub fn to_attribute_vector(&self) -> AttributeVector {
        record_to_attribute_vector(self)
    }
}

pub fn record_to_attribute_vector(rec: &AttributeRecord) -> AttributeVector {
    AttributeVector::new(rec.labels.iter().map(|&l| if l > 0 { 1.0 } else { 0.0 }).collect())
        .expect("labels map into {0, 1}")
}

pub fn parse_celeba_attrs<R: BufRead>(reader: R) -> Result<Vec<AttributeRecord>> {
    let mut lines = reader.lines().enumerate();
    let next_line = |lines: &mut std::iter::Enumerate<std::io::Lines<R>>, what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, line)) => Ok((i + 1, line?)),
            None => Err(Error::MalformedHeader(format!("missing {what} line"))),
        }
    };

    let (_, count_line) = next_line(&mut lines, "record count")?;
    let declared: usize = count_line
        .trim()
        .parse()
        .map_err(|_| Error::MalformedHeader(format!("record count `{}` is not a number", count_line.trim())))?;

    let (_, names_line) = next_line(&mut lines, "attribute name")?;
    let names: Vec<&str> = names_line.split_whitespace().collect();
    if names.len() != CELEBA_ATTRIBUTES.len() {
        return Err(Error::MalformedHeader(format!(
            "expected 40 attribute names, found {}",
            names.len()
        )));
    }
    for (got, want) in names.iter().zip(CELEBA_ATTRIBUTES) {
        if *got != want {
            return Err(Error::UnknownAttributeName((*got).to_string()));
        }
    }

    let mut records = Vec::with_capacity(declared);
    for (i, line) in lines {
        let line = line?;
        let lineno = i + 1;
        let mut fields = line.split_whitespace();
        let Some(id) = fields.next() else {
            continue;
        };
        let mut labels = [0i8; 40];
        let mut n = 0;
        for field in fields {
            if n == labels.len() {
                return Err(Error::MalformedHeader(format!("line {lineno}: more than 40 labels")));
            }
            labels[n] = match field {
                "1" => 1,
                "-1" => -1,
                other => {
                    return Err(Error::BadLabelValue {
                        line: lineno,
                        value: other.to_string(),
                    })
                }
            };
            n += 1;
        }
        if n != labels.len() {
            return Err(Error::MalformedHeader(format!(
                "line {lineno}: expected 40 labels, found {n}"
            )));
        }
        records.push(AttributeRecord {
            id: id.to_string(),
            labels,
        });
    }
    if records.len() != declared {
        return Err(Error::CountMismatch {
            declared,
            actual: records.len(),
        });
    }
    Ok(records)
}

/// Writes records in the canonical layout: labels right-aligned in width 2
/// and separated by single spaces, no trailing whitespace.
pub fn serialize_celeba_attrs(records: &[AttributeRecord]) -> String {
    let mut out = format!("{}\n{}\n", records.len(), CELEBA_ATTRIBUTES.join(" "));
    for r in records {
        out.push_str(&r.id);
        for l in r.labels {
            out.push_str(&format!(" {l:>2}"));
        }
        out.push('\n');
    }
    out
}
