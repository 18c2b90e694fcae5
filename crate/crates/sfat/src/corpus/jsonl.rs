//! JSON Lines comment files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::record::CommentRecord;
use super::vocab::normalize_tokens;
use super::{CorpusError, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub loaded: usize,
    pub dropped_empty: usize,
    pub rejected_negative_time: usize,
}

/// Load a comments JSONL file, sorted stably by timestamp.
///
/// Empty-text records are dropped and negative-time records rejected;
/// both are counted rather than silently discarded.
pub fn load_comments(path: &Path) -> Result<(Vec<CommentRecord>, LoadStats)> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    let mut stats = LoadStats::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CommentRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        if !record.time_s.is_finite() || record.time_s < 0.0 {
            stats.rejected_negative_time += 1;
            continue;
        }
        if normalize_tokens(&record.text).is_empty() {
            stats.dropped_empty += 1;
            continue;
        }
        records.push(record);
    }
    records.sort_by(|a, b| a.time_s.partial_cmp(&b.time_s).unwrap());
    stats.loaded = records.len();
    Ok((records, stats))
}

pub fn save_comments(path: &Path, records: &[CommentRecord]) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    for record in records {
        let line = serde_json::to_string(record)
            .map_err(|e| CorpusError::Format(e.to_string()))?;
        writeln!(writer, "{line}")?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn loads_valid_lines_in_time_order() {
        let f = write_lines(&[
            r#"{"video_id":"v","time_s":5.0,"user_hash":"u1","text":"late"}"#,
            r#"{"video_id":"v","time_s":1.0,"user_hash":"u2","text":"early"}"#,
            r#"{"video_id":"v","time_s":3.0,"user_hash":"u3","text":"middle"}"#,
        ]);
        let (records, stats) = load_comments(f.path()).unwrap();
        assert_eq!(stats.loaded, 3);
        let texts: Vec<&str> = records.iter().map(|r| r.text.as_str()).collect();
        assert_eq!(texts, ["early", "middle", "late"]);
    }

    #[test]
    fn missing_text_field_names_the_line() {
        let f = write_lines(&[
            r#"{"video_id":"v","time_s":1.0,"user_hash":"u","text":"ok"}"#,
            r#"{"video_id":"v","time_s":2.0,"user_hash":"u"}"#,
        ]);
        match load_comments(f.path()) {
            Err(CorpusError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn negative_time_rejected_and_counted() {
        let f = write_lines(&[
            r#"{"video_id":"v","time_s":-1.0,"user_hash":"u","text":"bad"}"#,
            r#"{"video_id":"v","time_s":0.0,"user_hash":"u","text":"good"}"#,
        ]);
        let (records, stats) = load_comments(f.path()).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(stats.rejected_negative_time, 1);
    }

    #[test]
    fn shuffled_records_come_back_sorted() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut lines = Vec::new();
        let mut times: Vec<f64> = (0..1000).map(|_| rng.gen::<f64>() * 600.0).collect();
        for t in &times {
            lines.push(format!(
                r#"{{"video_id":"v","time_s":{t},"user_hash":"u","text":"x"}}"#
            ));
        }
        let refs: Vec<&str> = lines.iter().map(|s| s.as_str()).collect();
        let f = write_lines(&refs);
        let (records, _) = load_comments(f.path()).unwrap();
        // Independent sort oracle.
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let got: Vec<f64> = records.iter().map(|r| r.time_s).collect();
        assert_eq!(got, times);
    }
}
