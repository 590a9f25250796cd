use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Label;
use crate::error::{Error, Result};

pub const DEFAULT_HORIZON_YEARS: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    None,
    Cvd,
    OtherDeath,
}

/// Follow-up outcome of one patient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FollowupRecord {
    pub event_type: EventType,
    /// Time of the event; ignored when `event_type` is `None`.
    pub event_time_years: Option<f64>,
    pub followup_years: f64,
}

impl FollowupRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.followup_years.is_finite() && self.followup_years >= 0.0) {
            return Err(Error::Validation(format!(
                "followup_years must be a nonnegative number, got {}",
                self.followup_years
            )));
        }
        if self.event_type != EventType::None {
            let t = self.event_time_years.ok_or_else(|| {
                Error::Validation(format!("{:?} event without event_time_years", self.event_type))
            })?;
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::Validation(format!("event_time_years must be nonnegative, got {t}")));
            }
            if t > self.followup_years {
                return Err(Error::Validation(format!(
                    "event at {t} years lies after the end of follow-up ({} years)",
                    self.followup_years
                )));
            }
        }
        Ok(())
    }

    /// Positive for a CVD event within the horizon, negative when follow-up
    /// extends strictly past it, unlabelled otherwise.
    pub fn label(&self, horizon_years: f64) -> Label {
        if self.event_type == EventType::Cvd && self.event_time_years.is_some_and(|t| t <= horizon_years) {
            Label::Positive
        } else if self.followup_years > horizon_years {
            Label::Negative
        } else {
            Label::Unlabelled
        }
    }
}

pub fn derive_labels(records: &[FollowupRecord], horizon_years: f64) -> Result<Vec<Label>> {
    if !(horizon_years.is_finite() && horizon_years > 0.0) {
        return Err(Error::Validation(format!("horizon must be positive, got {horizon_years}")));
    }
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.validate()
                .map_err(|e| Error::Validation(format!("record {i}: {e}")))?;
            Ok(r.label(horizon_years))
        })
        .collect()
}

/// Reads `event_type,event_time_years,followup_years` rows.
pub fn load_followup_csv(path: impl AsRef<Path>) -> Result<Vec<FollowupRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_followup(file)
}

pub(crate) fn read_followup<R: std::io::Read>(reader: R) -> Result<Vec<FollowupRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["event_type", "event_time_years", "followup_years"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Schema(format!(
            "follow-up header must be {:?}, got {:?}",
            expected,
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let parse = |col: usize, name: &str| -> Result<Option<f64>> {
            let field = &record[col];
            if field.is_empty() {
                return Ok(None);
            }
            field.parse::<f64>().map(Some).map_err(|_| Error::Parse {
                line,
                column: name.to_string(),
                message: format!("`{field}` is not a number"),
            })
        };
        let event_type = match &record[0] {
            "none" => EventType::None,
            "cvd" => EventType::Cvd,
            "other_death" => EventType::OtherDeath,
            other => {
                return Err(Error::Parse {
                    line,
                    column: "event_type".into(),
                    message: format!("unknown event type `{other}`"),
                })
            }
        };
        let followup_years = parse(2, "followup_years")?.ok_or_else(|| Error::Parse {
            line,
            column: "followup_years".into(),
            message: "missing".into(),
        })?;
        out.push(FollowupRecord {
            event_type,
            event_time_years: parse(1, "event_time_years")?,
            followup_years,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(event_type: EventType, t: Option<f64>, followup: f64) -> FollowupRecord {
        FollowupRecord {
            event_type,
            event_time_years: t,
            followup_years: followup,
        }
    }

    #[test]
    fn labelling_rule() {
        let records = [
            rec(EventType::Cvd, Some(3.0), 3.0),
            rec(EventType::None, None, 10.0),
            rec(EventType::OtherDeath, Some(5.0), 5.0),
            rec(EventType::Cvd, Some(9.0), 9.0),
            rec(EventType::None, None, 8.0),
            rec(EventType::Cvd, Some(8.0), 8.0),
        ];
        let labels = derive_labels(&records, DEFAULT_HORIZON_YEARS).unwrap();
        assert_eq!(
            labels,
            vec![
                Label::Positive,
                Label::Negative,
                Label::Unlabelled,
                Label::Negative,
                Label::Unlabelled,
                Label::Positive
            ]
        );
    }

    #[test]
    fn invalid_records_are_rejected() {
        assert!(derive_labels(&[rec(EventType::Cvd, Some(5.0), 4.0)], 8.0).is_err());
        assert!(derive_labels(&[rec(EventType::Cvd, None, 4.0)], 8.0).is_err());
        assert!(derive_labels(&[rec(EventType::None, None, -1.0)], 8.0).is_err());
        assert!(derive_labels(&[rec(EventType::None, None, 1.0)], 0.0).is_err());
    }

    #[test]
    fn followup_csv() {
        let text = "event_type,event_time_years,followup_years\ncvd,3,3\nnone,,10\nother_death,5,5\n";
        let records = read_followup(text.as_bytes()).unwrap();
        assert_eq!(records[1], rec(EventType::None, None, 10.0));
        let labels = derive_labels(&records, 8.0).unwrap();
        assert_eq!(labels, vec![Label::Positive, Label::Negative, Label::Unlabelled]);
        assert!(read_followup("event_type,event_time_years,followup_years\nstroke,1,2\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn every_record_gets_exactly_one_label(
            kind in 0u8..3, t_frac in 0.0f64..=1.0, followup in 0.0f64..20.0, horizon in 0.5f64..15.0
        ) {
            let event_type = [EventType::None, EventType::Cvd, EventType::OtherDeath][kind as usize];
            let r = rec(event_type, Some(t_frac * followup), followup);
            let labels = derive_labels(&[r], horizon).unwrap();
            prop_assert_eq!(labels.len(), 1);
            let positive = event_type == EventType::Cvd && t_frac * followup <= horizon;
            let negative = !positive && followup > horizon;
            let expected = if positive { Label::Positive } else if negative { Label::Negative } else { Label::Unlabelled };
            prop_assert_eq!(labels[0], expected);
        }
    }
}
