use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{FeatureKind, FeatureSchema, Label, TabularDataset, LABEL_COLUMN};
use crate::error::{Error, Result};

pub(super) fn load_csv(path: &Path, schema: &FeatureSchema) -> Result<TabularDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema)
}

pub(super) fn read_csv<R: Read>(reader: R, schema: &FeatureSchema) -> Result<TabularDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let expected: Vec<&str> = schema.columns().iter().map(|c| c.name.as_str()).collect();
    let has_label = match names.len() {
        n if n == expected.len() => false,
        n if n == expected.len() + 1 && names[n - 1] == LABEL_COLUMN => true,
        _ => {
            return Err(Error::Schema(format!(
                "header {:?} does not match schema columns {:?} (plus optional `{LABEL_COLUMN}`)",
                names, expected
            )))
        }
    };
    if names[..expected.len()] != expected[..] {
        return Err(Error::Schema(format!(
            "header {:?} does not match schema columns {:?}",
            &names[..expected.len()],
            expected
        )));
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let mut row = Vec::with_capacity(schema.len());
        for (j, column) in schema.columns().iter().enumerate() {
            let field = &record[j];
            if field.is_empty() {
                row.push(None);
                continue;
            }
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                column: column.name.clone(),
                message: format!("`{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    column: column.name.clone(),
                    message: format!("`{field}` is not finite"),
                });
            }
            if column.kind == FeatureKind::Binary && v != 0.0 && v != 1.0 {
                return Err(Error::Validation(format!(
                    "line {line}, column `{}`: binary cell must be 0, 1 or empty, got `{field}`",
                    column.name
                )));
            }
            row.push(Some(v));
        }
        let label = if has_label {
            match &record[schema.len()] {
                "" => Label::Unlabelled,
                "0" => Label::Negative,
                "1" => Label::Positive,
                other => {
                    return Err(Error::Validation(format!(
                        "line {line}, column `{LABEL_COLUMN}`: expected 0, 1 or empty, got `{other}`"
                    )))
                }
            }
        } else {
            Label::Unlabelled
        };
        values.push(row);
        labels.push(label);
    }
    TabularDataset::new(schema.clone(), values, labels)
}

pub(super) fn write_csv(ds: &TabularDataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_to(ds, std::io::BufWriter::new(file))
}

pub(super) fn write_to<W: Write>(ds: &TabularDataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = ds.schema().columns().iter().map(|c| c.name.as_str()).collect();
    header.push(LABEL_COLUMN);
    wtr.write_record(&header)?;
    let mut fields: Vec<String> = Vec::with_capacity(header.len());
    for (row, label) in ds.rows().iter().zip(ds.labels()) {
        fields.clear();
        fields.extend(row.iter().map(|c| c.map_or_else(String::new, format_value)));
        fields.push(label.class().map_or_else(String::new, |c| c.to_string()));
        wtr.write_record(&fields)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn format_value(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{null_mask, Column};
    use proptest::prelude::*;

    fn schema3() -> FeatureSchema {
        FeatureSchema::new(vec![Column::binary("a"), Column::binary("b"), Column::continuous("c")]).unwrap()
    }

    #[test]
    fn empty_cell_is_absent() {
        let ds = read_csv("a,b,c\n1,,2.3\n".as_bytes(), &schema3()).unwrap();
        assert_eq!(ds.row(0), &[Some(1.0), None, Some(2.3)]);
        assert_eq!(ds.label(0), Label::Unlabelled);
    }

    #[test]
    fn binary_two_is_rejected_with_cell_name() {
        let err = read_csv("a,b,c\n0,2,1.5\n".as_bytes(), &schema3()).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        let msg = err.to_string();
        assert!(msg.contains("line 2") && msg.contains("`b`"), "{msg}");
    }

    #[test]
    fn malformed_number_reports_position() {
        let err = read_csv("a,b,c\n0,1,1.5\n0,1,abc\n".as_bytes(), &schema3()).unwrap_err();
        match err {
            Error::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert_eq!(column, "c");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn na_literals_are_parse_errors() {
        for bad in ["NA", "null", "NaN", "inf"] {
            let text = format!("a,b,c\n0,1,{bad}\n");
            assert!(matches!(read_csv(text.as_bytes(), &schema3()), Err(Error::Parse { .. })), "{bad}");
        }
    }

    #[test]
    fn header_mismatch_is_schema_error() {
        assert!(matches!(read_csv("a,c,b\n".as_bytes(), &schema3()), Err(Error::Schema(_))));
        assert!(matches!(read_csv("a,b\n".as_bytes(), &schema3()), Err(Error::Schema(_))));
        assert!(matches!(read_csv("a,b,c,target\n".as_bytes(), &schema3()), Err(Error::Schema(_))));
    }

    #[test]
    fn label_column_with_empty_entries() {
        let text = "a,b,c,label\n1,0,1,0\n0,0,2,1\n1,1,3,\n0,1,4,0\n1,0,5,1\n";
        let ds = read_csv(text.as_bytes(), &schema3()).unwrap();
        assert_eq!(ds.n_rows(), 5);
        assert_eq!(ds.n_labelled(), 4);
        assert_eq!(ds.count_label(Label::Unlabelled), 1);
        assert!(read_csv("a,b,c,label\n1,0,1,2\n".as_bytes(), &schema3()).is_err());
    }

    fn arb_dataset() -> impl Strategy<Value = TabularDataset> {
        let row = (
            prop::option::of(prop::bool::ANY),
            prop::option::of(prop::bool::ANY),
            prop::option::of(-1e6f64..1e6),
            prop::option::of(prop::bool::ANY),
        );
        prop::collection::vec(row, 0..30).prop_map(|rows| {
            let mut values = Vec::new();
            let mut labels = Vec::new();
            for (a, b, c, l) in rows {
                values.push(vec![a.map(|x| x as u8 as f64), b.map(|x| x as u8 as f64), c]);
                labels.push(match l {
                    None => Label::Unlabelled,
                    Some(false) => Label::Negative,
                    Some(true) => Label::Positive,
                });
            }
            TabularDataset::new(schema3(), values, labels).unwrap()
        })
    }

    proptest! {
        #[test]
        fn csv_round_trip(ds in arb_dataset()) {
            let mut buf = Vec::new();
            write_to(&ds, &mut buf).unwrap();
            let back = read_csv(buf.as_slice(), &schema3()).unwrap();
            prop_assert_eq!(null_mask(&back), null_mask(&ds));
            prop_assert_eq!(back, ds);
        }
    }
}
