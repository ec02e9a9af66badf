//! Streaming FASTA input/output, length statistics and fixed-window chunking.
//!
//! Residues are normalized on read: upper-cased, whitespace dropped, and every
//! symbol outside `ACGT` collapsed to `N`. Gzip input is detected from the
//! magic bytes, so callers never need to know how a file was shipped.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;

use crate::error::{Error, Result};

/// One FASTA entry.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SequenceRecord {
    pub id: String,
    pub description: String,
    pub residues: Vec<u8>,
}

impl SequenceRecord {
    /// Builds a record, normalizing `residues`.
    pub fn new(id: impl Into<String>, description: impl Into<String>, residues: &[u8]) -> Self {
        SequenceRecord {
            id: id.into(),
            description: description.into(),
            residues: normalize_residues(residues),
        }
    }

    pub fn len(&self) -> usize {
        self.residues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residues.is_empty()
    }

    pub fn residues_str(&self) -> &str {
        // normalized residues are ASCII
        std::str::from_utf8(&self.residues).expect("normalized residues are ASCII")
    }
}

/// Upper-cases, strips whitespace and maps anything that is not `ACGT` to `N`.
pub fn normalize_residues(raw: &[u8]) -> Vec<u8> {
    raw.iter()
        .filter(|b| !b.is_ascii_whitespace())
        .map(|&b| match b.to_ascii_uppercase() {
            c @ (b'A' | b'C' | b'G' | b'T') => c,
            _ => b'N',
        })
        .collect()
}

/// Lazy FASTA record iterator over any buffered reader.
///
/// Memory use is bounded by the largest record: only the current header and
/// the residues collected so far are held.
pub struct FastaReader<R> {
    reader: R,
    line: Vec<u8>,
    line_no: usize,
    pending_header: Option<(Vec<u8>, usize)>,
    done: bool,
}

impl<R: BufRead> FastaReader<R> {
    pub fn new(reader: R) -> Self {
        FastaReader {
            reader,
            line: Vec::new(),
            line_no: 0,
            pending_header: None,
            done: false,
        }
    }

    /// Reads one line into `self.line` without the terminator. Returns false at EOF.
    fn read_line(&mut self) -> io::Result<bool> {
        self.line.clear();
        let n = self.reader.read_until(b'\n', &mut self.line)?;
        if n == 0 {
            return Ok(false);
        }
        self.line_no += 1;
        while matches!(self.line.last(), Some(b'\n' | b'\r')) {
            self.line.pop();
        }
        Ok(true)
    }

    fn next_record(&mut self) -> Result<Option<SequenceRecord>> {
        let (header, header_line) = match self.pending_header.take() {
            Some(h) => h,
            None => loop {
                if !self.read_line()? {
                    return Ok(None);
                }
                if self.line.iter().all(|b| b.is_ascii_whitespace()) {
                    continue;
                }
                if self.line[0] != b'>' {
                    return Err(Error::Parse {
                        line: self.line_no,
                        message: "sequence data before any '>' header".into(),
                    });
                }
                break (self.line[1..].to_vec(), self.line_no);
            },
        };

        let mut residues = Vec::new();
        loop {
            if !self.read_line()? {
                self.done = true;
                break;
            }
            if self.line.first() == Some(&b'>') {
                self.pending_header = Some((self.line[1..].to_vec(), self.line_no));
                break;
            }
            residues.extend(normalize_residues(&self.line));
        }

        let header = String::from_utf8_lossy(&header);
        let header = header.trim();
        let (id, description) = match header.split_once(char::is_whitespace) {
            Some((id, rest)) => (id, rest.trim()),
            None => (header, ""),
        };
        if id.is_empty() {
            return Err(Error::Parse {
                line: header_line,
                message: "header has an empty identifier".into(),
            });
        }
        if residues.is_empty() {
            return Err(Error::Parse {
                line: header_line,
                message: format!("record '{id}' has an empty sequence body"),
            });
        }
        Ok(Some(SequenceRecord {
            id: id.to_string(),
            description: description.to_string(),
            residues,
        }))
    }
}

impl<R: BufRead> Iterator for FastaReader<R> {
    type Item = Result<SequenceRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done && self.pending_header.is_none() {
            return None;
        }
        match self.next_record() {
            Ok(Some(r)) => Some(Ok(r)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                self.pending_header = None;
                Some(Err(e))
            }
        }
    }
}

/// Wraps a byte stream in a record iterator, transparently decompressing gzip.
pub fn parse_fasta<'a, R: Read + 'a>(reader: R) -> Result<FastaReader<Box<dyn BufRead + 'a>>> {
    let mut buffered = BufReader::new(reader);
    let is_gzip = {
        let head = buffered.fill_buf()?;
        head.len() >= 2 && head[0] == 0x1f && head[1] == 0x8b
    };
    let inner: Box<dyn BufRead + 'a> = if is_gzip {
        Box::new(BufReader::new(MultiGzDecoder::new(buffered)))
    } else {
        Box::new(buffered)
    };
    Ok(FastaReader::new(inner))
}

pub fn open_fasta(path: impl AsRef<Path>) -> Result<FastaReader<Box<dyn BufRead>>> {
    let file = File::open(path.as_ref())?;
    parse_fasta(file)
}

/// Reads a whole FASTA file into memory.
pub fn read_fasta(path: impl AsRef<Path>) -> Result<Vec<SequenceRecord>> {
    open_fasta(path)?.collect()
}

pub fn write_fasta<W: Write>(
    mut out: W,
    records: &[SequenceRecord],
    line_width: usize,
) -> Result<()> {
    if line_width == 0 {
        return Err(Error::invalid("FASTA line width must be at least 1"));
    }
    for rec in records {
        if rec.description.is_empty() {
            writeln!(out, ">{}", rec.id)?;
        } else {
            writeln!(out, ">{} {}", rec.id, rec.description)?;
        }
        for chunk in rec.residues.chunks(line_width) {
            out.write_all(chunk)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Length distribution of a record set.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceStats {
    pub count: usize,
    pub lengths: Vec<usize>,
    pub min: Option<usize>,
    pub median: Option<f64>,
    pub mean: Option<f64>,
    pub max: Option<usize>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
    /// `(record index, length)` for every length outside `[Q1 - 1.5 IQR, Q3 + 1.5 IQR]`.
    pub iqr_outliers: Vec<(usize, usize)>,
}

/// Quantile of sorted data, linear interpolation between order statistics
/// at position `(n - 1) * p`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = (sorted.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn sequence_stats(records: &[SequenceRecord]) -> SequenceStats {
    stats_from_lengths(records.iter().map(SequenceRecord::len).collect())
}

pub fn stats_from_lengths(lengths: Vec<usize>) -> SequenceStats {
    let count = lengths.len();
    if count == 0 {
        return SequenceStats {
            count,
            lengths,
            min: None,
            median: None,
            mean: None,
            max: None,
            q1: None,
            q3: None,
            iqr_outliers: Vec::new(),
        };
    }
    let mut sorted: Vec<f64> = lengths.iter().map(|&l| l as f64).collect();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let iqr_outliers = lengths
        .iter()
        .enumerate()
        .filter(|(_, &l)| (l as f64) < lo || (l as f64) > hi)
        .map(|(i, &l)| (i, l))
        .collect();
    SequenceStats {
        count,
        min: lengths.iter().copied().min(),
        max: lengths.iter().copied().max(),
        median: Some(quantile_sorted(&sorted, 0.5)),
        mean: Some(sorted.iter().sum::<f64>() / count as f64),
        q1: Some(q1),
        q3: Some(q3),
        iqr_outliers,
        lengths,
    }
}

/// Writes the per-record stats table: `record_index, id, length, is_outlier`.
pub fn write_stats_tsv<W: Write>(
    mut out: W,
    records: &[SequenceRecord],
    stats: &SequenceStats,
) -> Result<()> {
    writeln!(out, "record_index\tid\tlength\tis_outlier")?;
    let mut outliers = stats.iqr_outliers.iter().map(|&(i, _)| i).peekable();
    for (i, rec) in records.iter().enumerate() {
        let is_outlier = outliers.next_if_eq(&i).is_some();
        writeln!(out, "{i}\t{}\t{}\t{}", rec.id, rec.len(), is_outlier as u8)?;
    }
    Ok(())
}

/// Splits a record into consecutive non-overlapping windows of `window` bp.
///
/// Chunk ids are `{parent}#c{index}`. The final short remainder is kept only
/// when `keep_tail` is set.
pub fn chunk_sequence(
    record: &SequenceRecord,
    window: usize,
    keep_tail: bool,
) -> Result<Vec<SequenceRecord>> {
    if window == 0 {
        return Err(Error::invalid("chunk window must be at least 1 bp"));
    }
    Ok(record
        .residues
        .chunks(window)
        .filter(|c| keep_tail || c.len() == window)
        .enumerate()
        .map(|(i, c)| SequenceRecord {
            id: format!("{}#c{i}", record.id),
            description: record.description.clone(),
            residues: c.to_vec(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(s: &str) -> Result<Vec<SequenceRecord>> {
        parse_fasta(s.as_bytes())?.collect()
    }

    fn rec(id: &str, residues: &str) -> SequenceRecord {
        SequenceRecord::new(id, "", residues.as_bytes())
    }

    #[test]
    fn multi_line_body_is_concatenated() {
        let recs = parse(">s1 desc\nATCG\nCA\n").unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].id, "s1");
        assert_eq!(recs[0].description, "desc");
        assert_eq!(recs[0].residues_str(), "ATCGCA");
    }

    #[test]
    fn lower_case_and_ambiguity_codes() {
        let recs = parse(">a\nacgt\n>b\nNNRT\n").unwrap();
        assert_eq!(recs[0].residues_str(), "ACGT");
        assert_eq!(recs[1].residues_str(), "NNNT");
    }

    #[test]
    fn empty_input_yields_nothing() {
        assert!(parse("").unwrap().is_empty());
        assert!(parse("\n\n").unwrap().is_empty());
    }

    #[test]
    fn crlf_and_blank_lines() {
        let recs = parse("\r\n>x  two words here\r\nAC\r\n\r\nGT\r\n").unwrap();
        assert_eq!(recs[0].description, "two words here");
        assert_eq!(recs[0].residues_str(), "ACGT");
    }

    #[test]
    fn data_before_header_names_line() {
        match parse("\nACGT\n>a\nA\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_body_is_an_error() {
        match parse(">a\n>b\nACGT\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(parse(">a\nAC\n>b\n").is_err());
    }

    #[test]
    fn reader_stops_after_error() {
        let mut it = parse_fasta(">a\n>b\nAC\n".as_bytes()).unwrap();
        assert!(it.next().unwrap().is_err());
        assert!(it.next().is_none());
    }

    #[test]
    fn gzip_is_detected() {
        use flate2::write::GzEncoder;
        let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(b">g\nacgtn\n").unwrap();
        let bytes = enc.finish().unwrap();
        let recs: Vec<_> = parse_fasta(&bytes[..])
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(recs[0].residues_str(), "ACGTN");
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_residues(b"acgt"), b"ACGT");
        assert_eq!(normalize_residues(b"A T\nG"), b"ATG");
        assert_eq!(normalize_residues(b"RYKM"), b"NNNN");
    }

    #[test]
    fn write_wraps_lines() {
        let mut out = Vec::new();
        write_fasta(&mut out, &[rec("s1", "ATCGCA")], 4).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), ">s1\nATCG\nCA\n");
        let mut out = Vec::new();
        write_fasta(&mut out, &[], 4).unwrap();
        assert!(out.is_empty());
        assert!(write_fasta(Vec::new(), &[], 0).is_err());
    }

    #[test]
    fn stats_outlier_rule() {
        let s = stats_from_lengths(vec![10, 10, 10, 10, 100]);
        assert_eq!(s.iqr_outliers, vec![(4, 100)]);

        let s = stats_from_lengths(vec![5]);
        assert_eq!((s.min, s.median, s.max), (Some(5), Some(5.0), Some(5)));
        assert!(s.iqr_outliers.is_empty());

        let s = stats_from_lengths((1..=100).collect());
        assert_eq!(s.min, Some(1));
        assert_eq!(s.max, Some(100));
        assert_eq!(s.median, Some(50.5));

        let s = stats_from_lengths(vec![]);
        assert_eq!(s.count, 0);
        assert_eq!(s.median, None);
    }

    #[test]
    fn stats_tsv_layout() {
        let recs = vec![
            rec("a", "AAAAAAAAAA"),
            rec("b", "AAAAAAAAAA"),
            rec("c", "AAAAAAAAAA"),
            rec("d", "AAAAAAAAAA"),
            rec("e", &"A".repeat(100)),
        ];
        let stats = sequence_stats(&recs);
        let mut out = Vec::new();
        write_stats_tsv(&mut out, &recs, &stats).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("record_index\tid\tlength\tis_outlier\n0\ta\t10\t0\n"));
        assert!(text.ends_with("4\te\t100\t1\n"));
    }

    #[test]
    fn chunking() {
        let r = rec("p", "ACGTACGTAC");
        let lens = |v: Vec<SequenceRecord>| v.iter().map(|c| c.len()).collect::<Vec<_>>();
        assert_eq!(lens(chunk_sequence(&r, 4, true).unwrap()), vec![4, 4, 2]);
        assert_eq!(lens(chunk_sequence(&r, 4, false).unwrap()), vec![4, 4]);
        let whole = chunk_sequence(&r, 10, false).unwrap();
        assert_eq!(whole.len(), 1);
        assert_eq!(whole[0].residues, r.residues);
        assert_eq!(whole[0].id, "p#c0");
        assert_eq!(
            chunk_sequence(&r, 50, true).unwrap()[0].residues,
            r.residues
        );
        assert!(chunk_sequence(&r, 0, true).is_err());
    }

    fn arb_record() -> impl Strategy<Value = SequenceRecord> {
        ("[a-zA-Z0-9_.|]{1,12}", "[a-z ]{0,10}", "[ACGTN]{1,300}").prop_map(|(id, desc, res)| {
            SequenceRecord::new(id, desc.trim().to_string(), res.as_bytes())
        })
    }

    proptest! {
        #[test]
        fn write_then_parse_is_identity(recs in proptest::collection::vec(arb_record(), 0..100), width in 1usize..90) {
            let mut buf = Vec::new();
            write_fasta(&mut buf, &recs, width).unwrap();
            let back = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
            prop_assert_eq!(back, recs);
        }

        #[test]
        fn chunks_partition_the_parent(res in "[ACGTN]{1,200}", window in 1usize..64) {
            let r = SequenceRecord::new("x", "", res.as_bytes());
            let chunks = chunk_sequence(&r, window, true).unwrap();
            let joined: Vec<u8> = chunks.iter().flat_map(|c| c.residues.iter().copied()).collect();
            prop_assert_eq!(joined, r.residues);
        }
    }
}
