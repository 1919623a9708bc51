//! Precomputed replaced-token-detection probabilities.

use std::collections::HashMap;
use std::path::Path;

use super::{data_lines, read_file, ScoreError};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RtdIndex {
    probabilities: HashMap<(String, u8), f64>,
}

impl RtdIndex {
    pub fn from_entries(entries: impl IntoIterator<Item = (String, u8, f64)>) -> Self {
        RtdIndex {
            probabilities: entries.into_iter().map(|(i, c, p)| ((i, c), p)).collect(),
        }
    }

    pub fn lookup(&self, instance_id: &str, candidate_id: u8) -> Result<f64, ScoreError> {
        self.probabilities
            .get(&(instance_id.to_string(), candidate_id))
            .copied()
            .ok_or_else(|| ScoreError::MissingScore {
                instance_id: instance_id.to_string(),
                candidate_id,
            })
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn load(path: &Path) -> Result<Self, ScoreError> {
        parse_rtd(&read_file(path)?, &path.display().to_string())
    }
}

/// Parses `instance_id<TAB>candidate_id<TAB>probability` rows.
pub fn parse_rtd(text: &str, source_name: &str) -> Result<RtdIndex, ScoreError> {
    let mut probabilities = HashMap::new();
    for (line_no, line) in data_lines(text) {
        let err = |message: String| ScoreError::Parse {
            source_name: source_name.to_string(),
            line: line_no,
            message,
        };
        let [id, cid, prob] = line.split('\t').collect::<Vec<_>>()[..] else {
            return Err(err("expected 3 tab-separated fields".into()));
        };
        let cid: u8 = cid
            .trim()
            .parse()
            .ok()
            .filter(|c| (1..=5).contains(c))
            .ok_or_else(|| err(format!("bad candidate id `{cid}`")))?;
        let prob: f64 = prob
            .trim()
            .parse()
            .ok()
            .filter(|p: &f64| (0.0..=1.0).contains(p))
            .ok_or_else(|| err(format!("bad probability `{prob}`")))?;
        if probabilities.insert((id.to_string(), cid), prob).is_some() {
            return Err(err(format!("duplicate entry for ({id}, {cid})")));
        }
    }
    Ok(RtdIndex { probabilities })
}

/// Writes entries in the given order.
pub fn write_rtd<'a>(entries: impl IntoIterator<Item = (&'a str, u8, f64)>) -> String {
    let mut out = String::new();
    for (id, cid, prob) in entries {
        out.push_str(&format!("{id}\t{cid}\t{prob}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lookup_and_missing() {
        let idx = parse_rtd("i7\t2\t0.91\n", "t").unwrap();
        assert_eq!(idx.lookup("i7", 2).unwrap(), 0.91);
        assert_eq!(
            idx.lookup("i7", 3),
            Err(ScoreError::MissingScore {
                instance_id: "i7".into(),
                candidate_id: 3
            })
        );
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(parse_rtd("a\t1\t1.5\n", "t").is_err());
        assert!(parse_rtd("a\t0\t0.5\n", "t").is_err());
        assert!(parse_rtd("a\t1\n", "t").is_err());
        assert!(parse_rtd("a\t1\t0.5\na\t1\t0.4\n", "t").is_err());
    }

    proptest! {
        #[test]
        fn file_round_trip_is_bit_exact(probs in prop::collection::vec(0.0f64..=1.0, 1..20)) {
            let ids: Vec<String> = (0..probs.len()).map(|i| format!("inst-{i}")).collect();
            let text = write_rtd(ids.iter().zip(&probs).map(|(id, p)| (id.as_str(), 3u8, *p)));
            let idx = parse_rtd(&format!("# discriminator: stub\n{text}"), "p").unwrap();
            for (id, p) in ids.iter().zip(&probs) {
                prop_assert_eq!(idx.lookup(id, 3).unwrap().to_bits(), p.to_bits());
            }
        }
    }
}
