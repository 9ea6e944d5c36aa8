//! Line-delimited JSON rollout logs.
//!
//! One response per line:
//!
//! ```json
//! {"query_id": "q0", "reward": 1.0, "token_ids": [3, 1, 0],
//!  "old_logp": [-0.2, -0.1, -0.3], "new_logp": [-0.25, -0.1, -0.2],
//!  "entropies": [1.1, 0.4, 0.9], "segments": [[0, 2], [2, 3]], "step": 0}
//! ```
//!
//! `entropies`, `segments` and `step` are optional. Responses sharing a
//! `(step, query_id)` key form one group, in order of first appearance.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sspo_core::{
    segment, validate_group, QueryGroup, Response, RolloutGroup, Segmentation, SeparatorSpec,
    Span, TokenRecord,
};

use crate::error::{io_err, LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    pub query_id: String,
    pub reward: f64,
    pub token_ids: Vec<u32>,
    pub old_logp: Vec<f64>,
    pub new_logp: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropies: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<Vec<[usize; 2]>>,
}

impl LogRecord {
    pub fn from_response(step: Option<usize>, query_id: &str, response: &Response) -> Self {
        let entropies: Option<Vec<f64>> = response.tokens.iter().map(|t| t.old_entropy).collect();
        Self {
            step,
            query_id: query_id.to_string(),
            reward: response.reward,
            token_ids: response.token_ids(),
            old_logp: response.tokens.iter().map(|t| t.old_logp).collect(),
            new_logp: response.tokens.iter().map(|t| t.new_logp).collect(),
            entropies,
            segments: response
                .segmentation
                .as_ref()
                .map(|s| s.spans().iter().map(|sp| [sp.start, sp.end]).collect()),
        }
    }

    /// Checks the parallel arrays and builds the response; errors name the field.
    fn into_response(self) -> std::result::Result<Response, String> {
        let n = self.token_ids.len();
        let check = |field: &str, len: usize| {
            if len == n {
                Ok(())
            } else {
                Err(format!("field `{field}` has {len} entries, `token_ids` has {n}"))
            }
        };
        check("old_logp", self.old_logp.len())?;
        check("new_logp", self.new_logp.len())?;
        if let Some(h) = &self.entropies {
            check("entropies", h.len())?;
        }
        let tokens = (0..n)
            .map(|t| {
                let rec = TokenRecord::new(self.token_ids[t], self.old_logp[t], self.new_logp[t]);
                match &self.entropies {
                    Some(h) => rec.with_entropy(h[t]),
                    None => rec,
                }
            })
            .collect();
        let mut response = Response::new(tokens, self.reward);
        if let Some(segments) = self.segments {
            let spans = segments.iter().map(|&[s, e]| Span::new(s, e)).collect();
            let seg = Segmentation::from_spans(spans, n)
                .map_err(|e| format!("field `segments`: {e}"))?;
            response.segmentation = Some(seg);
        }
        Ok(response)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoggedGroup {
    pub step: Option<usize>,
    pub group: RolloutGroup,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedLog {
    pub groups: Vec<LoggedGroup>,
    /// Groups dropped for having fewer than two responses.
    pub warnings: Vec<String>,
}

pub fn parse_rollout_log(path: &Path) -> Result<ParsedLog> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    read_rollout_log(BufReader::new(file), path)
}

/// Parses a log from any reader; `origin` is used in error messages only.
pub fn read_rollout_log(reader: impl BufRead, origin: &Path) -> Result<ParsedLog> {
    let bad = |line: usize, message: String| LabError::Record {
        path: PathBuf::from(origin),
        line,
        message,
    };
    let mut index: HashMap<(Option<usize>, String), usize> = HashMap::new();
    let mut groups: Vec<LoggedGroup> = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let lineno = k + 1;
        let line = line.map_err(io_err(origin))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: LogRecord =
            serde_json::from_str(&line).map_err(|e| bad(lineno, e.to_string()))?;
        let key = (record.step, record.query_id.clone());
        let response = record.into_response().map_err(|m| bad(lineno, m))?;
        let slot = *index.entry(key.clone()).or_insert_with(|| {
            groups.push(LoggedGroup {
                step: key.0,
                group: RolloutGroup::new(key.1.clone(), Vec::new()),
            });
            groups.len() - 1
        });
        groups[slot].group.responses.push(response);
    }

    let mut out = ParsedLog::default();
    for lg in groups {
        if lg.group.size() < 2 {
            out.warnings.push(format!(
                "skipping group {:?}: group size below 2 (got {})",
                lg.group.query_id,
                lg.group.size()
            ));
            continue;
        }
        let violations = validate_group(&lg.group, None);
        if !violations.is_empty() {
            return Err(LabError::InvalidGroup {
                query_id: lg.group.query_id.clone(),
                violations: violations
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join("; "),
            });
        }
        out.groups.push(lg);
    }
    Ok(out)
}

/// Segments every response that has no explicit boundaries.
pub fn fill_segmentation(groups: &mut [LoggedGroup], spec: &SeparatorSpec) -> Result<()> {
    for lg in groups {
        for response in &mut lg.group.responses {
            if response.segmentation.is_none() {
                response.segmentation = Some(segment(&response.token_ids(), spec)?);
            }
        }
    }
    Ok(())
}

/// Query id used when exporting trainer batches: batch slot plus task query.
pub fn batch_query_id(slot: usize, query: usize) -> String {
    format!("s{slot}-q{query}")
}

/// Appends one record per response of a trainer batch.
pub fn write_batch(mut out: impl Write, step: usize, batch: &[QueryGroup]) -> std::io::Result<()> {
    for (slot, qg) in batch.iter().enumerate() {
        let id = batch_query_id(slot, qg.query);
        for response in &qg.group.responses {
            let record = LogRecord::from_response(Some(step), &id, response);
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ParsedLog> {
        read_rollout_log(text.as_bytes(), Path::new("test.jsonl"))
    }

    fn line(q: &str, reward: f64) -> String {
        format!(
            r#"{{"query_id":"{q}","reward":{reward},"token_ids":[2,1,3],"old_logp":[-1.0,-0.5,-0.2],"new_logp":[-0.9,-0.5,-0.3]}}"#
        )
    }

    #[test]
    fn empty_file() {
        assert_eq!(parse("").unwrap(), ParsedLog::default());
        assert_eq!(parse("\n\n").unwrap(), ParsedLog::default());
    }

    #[test]
    fn groups_by_query_in_file_order() {
        let mut text = String::new();
        for k in 0..16 {
            let q = if k % 2 == 0 { "b" } else { "a" };
            text.push_str(&line(q, (k % 3) as f64));
            text.push('\n');
        }
        let log = parse(&text).unwrap();
        assert_eq!(log.groups.len(), 2);
        assert_eq!(log.groups[0].group.query_id, "b");
        assert_eq!(log.groups[1].group.query_id, "a");
        assert!(log.groups.iter().all(|g| g.group.size() == 8));
        assert!(log.warnings.is_empty());
    }

    #[test]
    fn mismatched_lengths_name_line_and_field() {
        let bad = r#"{"query_id":"q","reward":1,"token_ids":[2,1],"old_logp":[-1.0],"new_logp":[-1.0,-1.0]}"#;
        let text = format!("{}\n{bad}\n", line("q", 0.0));
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("test.jsonl:2"), "{err}");
        assert!(err.contains("old_logp"), "{err}");
    }

    #[test]
    fn schema_errors_name_line_and_field() {
        let err = parse(r#"{"query_id":"q","reward":1}"#).unwrap_err().to_string();
        assert!(err.contains(":1:") && err.contains("token_ids"), "{err}");
        let err = parse(&format!("{}\n{{\"query_id\":\"q\",\"bogus\":1}}", line("q", 1.0)))
            .unwrap_err()
            .to_string();
        assert!(err.contains(":2:") && err.contains("bogus"), "{err}");
    }

    #[test]
    fn singleton_groups_skipped_with_warning() {
        let text = format!("{}\n{}\n{}\n", line("a", 0.0), line("a", 1.0), line("solo", 1.0));
        let log = parse(&text).unwrap();
        assert_eq!(log.groups.len(), 1);
        assert_eq!(log.warnings.len(), 1);
        assert!(log.warnings[0].contains("solo"));
    }

    #[test]
    fn invalid_group_rejected() {
        let pos = r#"{"query_id":"a","reward":1,"token_ids":[2],"old_logp":[0.5],"new_logp":[-1.0]}"#;
        let text = format!("{}\n{pos}\n", line("a", 0.0));
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("positive log-probability"), "{err}");
    }

    #[test]
    fn bad_segments_rejected() {
        let rec = r#"{"query_id":"a","reward":1,"token_ids":[2,3],"old_logp":[-1,-1],"new_logp":[-1,-1],"segments":[[0,1]]}"#;
        let err = parse(rec).unwrap_err().to_string();
        assert!(err.contains("segments"), "{err}");
    }

    #[test]
    fn explicit_segments_override_separators() {
        let rec = r#"{"query_id":"a","reward":1,"token_ids":[2,1,3,4],"old_logp":[-1,-1,-1,-1],"new_logp":[-1,-1,-1,-1],"segments":[[0,3],[3,4]]}"#;
        let text = format!("{rec}\n{}\n", line("a", 0.0));
        let mut log = parse(&text).unwrap();
        fill_segmentation(&mut log.groups, &SeparatorSpec::new([1], Default::default())).unwrap();
        let g = &log.groups[0].group;
        let lens = |i: usize| sspo_core::span_lengths(g.responses[i].segmentation.as_ref().unwrap());
        assert_eq!(lens(0), vec![3, 1]);
        assert_eq!(lens(1), vec![2, 1]);
    }

    #[test]
    fn step_separates_groups() {
        let a = r#"{"step":0,"query_id":"q","reward":1,"token_ids":[2],"old_logp":[-1],"new_logp":[-1]}"#;
        let b = r#"{"step":1,"query_id":"q","reward":0,"token_ids":[2],"old_logp":[-1],"new_logp":[-1]}"#;
        let text = format!("{a}\n{a}\n{b}\n{b}\n");
        let log = parse(&text).unwrap();
        assert_eq!(log.groups.len(), 2);
        assert_eq!(log.groups[1].step, Some(1));
    }

    #[test]
    fn record_round_trip_is_exact() {
        let tokens = vec![
            TokenRecord::new(3, -0.1 - 0.2, -1.0 / 3.0).with_entropy(0.7),
            TokenRecord::new(1, -1e-17, -2.5).with_entropy(1.0 / 7.0),
        ];
        let mut r = Response::new(tokens, 0.3);
        r.segmentation = Some(Segmentation::whole(2).unwrap());
        let rec = LogRecord::from_response(Some(4), "x", &r);
        let text = serde_json::to_string(&rec).unwrap();
        let back: LogRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(back, rec);
        assert_eq!(back.into_response().unwrap(), r);
    }
}
