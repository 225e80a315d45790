//! Publication records, their validation on load, and the per-author and
//! per-year indexes every other module reads through [`PublicationSource`].

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicI32, AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Inclusive range of calendar years.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct YearRange {
    pub start: i32,
    pub end: i32,
}

impl YearRange {
    pub fn new(start: i32, end: i32) -> Result<Self> {
        if start > end {
            return Err(Error::InvalidRange { start, end });
        }
        Ok(YearRange { start, end })
    }

    pub fn contains(&self, year: i32) -> bool {
        self.start <= year && year <= self.end
    }

    /// Number of calendar years covered.
    pub fn len(&self) -> i32 {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }

    pub fn years(&self) -> impl Iterator<Item = i32> {
        self.start..=self.end
    }
}

impl Default for YearRange {
    fn default() -> Self {
        YearRange {
            start: 2000,
            end: 2017,
        }
    }
}

impl fmt::Display for YearRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicationRecord {
    pub pub_id: String,
    pub year: i32,
    pub venue: String,
    pub author_ids: Vec<String>,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
}

/// A record that parsed but was left out of the corpus.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub line: usize,
    pub pub_id: String,
    pub reason: String,
}

/// Immutable, indexed publication corpus.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    span: YearRange,
    records: Vec<PublicationRecord>,
    /// author id -> record indices sorted by (year, pub_id)
    by_author: BTreeMap<String, Vec<usize>>,
    by_year: BTreeMap<i32, Vec<usize>>,
}

#[derive(Debug)]
pub struct LoadReport {
    pub corpus: Corpus,
    pub rejections: Vec<Rejection>,
}

impl Corpus {
    /// Validates records and builds the indexes. Records dated outside `span`
    /// are rejected (reported, not fatal); the line number is the 1-based
    /// position in `records`.
    pub fn from_records(records: Vec<PublicationRecord>, span: YearRange) -> Result<LoadReport> {
        let numbered = records.into_iter().enumerate().map(|(i, r)| (i + 1, r));
        Self::from_numbered(numbered, span)
    }

    fn from_numbered(
        records: impl IntoIterator<Item = (usize, PublicationRecord)>,
        span: YearRange,
    ) -> Result<LoadReport> {
        let mut seen = HashSet::new();
        let mut kept = Vec::new();
        let mut rejections = Vec::new();
        for (line, rec) in records {
            if !seen.insert(rec.pub_id.clone()) {
                return Err(Error::DuplicatePubId(rec.pub_id));
            }
            if rec.author_ids.is_empty() {
                return Err(Error::EmptyAuthors {
                    line,
                    pub_id: rec.pub_id,
                });
            }
            let mut authors = HashSet::new();
            for a in &rec.author_ids {
                if !authors.insert(a.as_str()) {
                    return Err(Error::DuplicateAuthor {
                        line,
                        pub_id: rec.pub_id.clone(),
                        author: a.clone(),
                    });
                }
            }
            if !span.contains(rec.year) {
                rejections.push(Rejection {
                    line,
                    pub_id: rec.pub_id,
                    reason: format!("year {} outside span {}", rec.year, span),
                });
                continue;
            }
            kept.push(rec);
        }

        let mut by_author: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut by_year: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
        for (idx, rec) in kept.iter().enumerate() {
            by_year.entry(rec.year).or_default().push(idx);
            for a in &rec.author_ids {
                by_author.entry(a.clone()).or_default().push(idx);
            }
        }
        for list in by_author.values_mut() {
            list.sort_by(|&i, &j| {
                (kept[i].year, &kept[i].pub_id).cmp(&(kept[j].year, &kept[j].pub_id))
            });
        }

        Ok(LoadReport {
            corpus: Corpus {
                span,
                records: kept,
                by_author,
                by_year,
            },
            rejections,
        })
    }

    pub fn span(&self) -> YearRange {
        self.span
    }

    pub fn records(&self) -> &[PublicationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn authors(&self) -> impl Iterator<Item = &str> {
        self.by_author.keys().map(String::as_str)
    }

    /// Publications of `author` ordered by (year, pub_id).
    pub fn author_records(&self, author: &str) -> impl Iterator<Item = &PublicationRecord> {
        self.by_author
            .get(author)
            .into_iter()
            .flatten()
            .map(move |&i| &self.records[i])
    }

    pub fn year_records(&self, year: i32) -> impl Iterator<Item = &PublicationRecord> {
        self.by_year
            .get(&year)
            .into_iter()
            .flatten()
            .map(move |&i| &self.records[i])
    }
}

/// Read access to publications, as used by graph construction, topic
/// fitting and feature engineering. Implemented by [`Corpus`] and by the
/// auditing wrapper [`AccessAudit`].
pub trait PublicationSource: Sync {
    fn span(&self) -> YearRange;

    /// Publications dated inside `range`, in corpus order.
    fn publications_in(&self, range: YearRange) -> Vec<&PublicationRecord>;

    /// Publications of `author` dated inside `range`, ordered by (year, pub_id).
    fn author_publications(&self, author: &str, range: YearRange) -> Vec<&PublicationRecord>;
}

impl PublicationSource for Corpus {
    fn span(&self) -> YearRange {
        self.span
    }

    fn publications_in(&self, range: YearRange) -> Vec<&PublicationRecord> {
        let mut idx: Vec<usize> = self
            .by_year
            .range(range.start..=range.end.max(range.start))
            .filter(|(y, _)| range.contains(**y))
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        idx.sort_unstable();
        idx.into_iter().map(|i| &self.records[i]).collect()
    }

    fn author_publications(&self, author: &str, range: YearRange) -> Vec<&PublicationRecord> {
        self.author_records(author)
            .filter(|r| range.contains(r.year))
            .collect()
    }
}

/// Wraps a source and counts every record it hands out, flagging records
/// dated after `limit`. Used to certify that feature construction never
/// reads the prediction window.
pub struct AccessAudit<'a, S: PublicationSource + ?Sized> {
    inner: &'a S,
    limit: i32,
    reads: AtomicUsize,
    violations: AtomicUsize,
    max_year: AtomicI32,
}

impl<'a, S: PublicationSource + ?Sized> AccessAudit<'a, S> {
    pub fn new(inner: &'a S, limit: i32) -> Self {
        AccessAudit {
            inner,
            limit,
            reads: AtomicUsize::new(0),
            violations: AtomicUsize::new(0),
            max_year: AtomicI32::new(i32::MIN),
        }
    }

    fn record<'r>(&self, recs: Vec<&'r PublicationRecord>) -> Vec<&'r PublicationRecord> {
        self.reads.fetch_add(recs.len(), Ordering::Relaxed);
        for r in &recs {
            self.max_year.fetch_max(r.year, Ordering::Relaxed);
            if r.year > self.limit {
                self.violations.fetch_add(1, Ordering::Relaxed);
            }
        }
        recs
    }

    pub fn reads(&self) -> usize {
        self.reads.load(Ordering::Relaxed)
    }

    /// Number of records handed out that were dated after the limit.
    pub fn violations(&self) -> usize {
        self.violations.load(Ordering::Relaxed)
    }

    /// Latest year read so far, `None` before any read.
    pub fn max_year(&self) -> Option<i32> {
        match self.max_year.load(Ordering::Relaxed) {
            i32::MIN => None,
            y => Some(y),
        }
    }

    pub fn limit(&self) -> i32 {
        self.limit
    }
}

impl<S: PublicationSource + ?Sized> PublicationSource for AccessAudit<'_, S> {
    fn span(&self) -> YearRange {
        self.inner.span()
    }

    fn publications_in(&self, range: YearRange) -> Vec<&PublicationRecord> {
        self.record(self.inner.publications_in(range))
    }

    fn author_publications(&self, author: &str, range: YearRange) -> Vec<&PublicationRecord> {
        self.record(self.inner.author_publications(author, range))
    }
}

/// Lowercases and collapses runs of whitespace; venue identity is compared
/// on this form.
pub fn normalize_venue(venue: &str) -> String {
    venue
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Loads JSON Lines, or the CSV variant when the file extension is `.csv`.
pub fn load_corpus(path: impl AsRef<Path>, span: YearRange) -> Result<LoadReport> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        parse_csv(BufReader::new(file), span)
    } else {
        parse_jsonl(BufReader::new(file), span)
    }
}

pub fn parse_jsonl(reader: impl BufRead, span: YearRange) -> Result<LoadReport> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io("<jsonl>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push((line_no, parse_json_record(&line, line_no)?));
    }
    Corpus::from_numbered(records, span)
}

fn parse_json_record(line: &str, line_no: usize) -> Result<PublicationRecord> {
    let bad = |field: &'static str, reason: &str| Error::Parse {
        line: line_no,
        field,
        reason: reason.to_string(),
    };
    let value: Value = serde_json::from_str(line).map_err(|e| bad("<record>", &e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| bad("<record>", "not a JSON object"))?;
    let string = |field: &'static str| -> Result<String> {
        match obj.get(field) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(bad(field, "expected a string")),
            None => Err(bad(field, "missing")),
        }
    };
    let year = match obj.get("year") {
        Some(v) => v
            .as_i64()
            .and_then(|y| i32::try_from(y).ok())
            .ok_or_else(|| bad("year", "expected an integer year"))?,
        None => return Err(bad("year", "missing")),
    };
    let author_ids = match obj.get("author_ids") {
        Some(Value::Array(items)) => items
            .iter()
            .map(|a| {
                a.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| bad("author_ids", "expected an array of strings"))
            })
            .collect::<Result<Vec<_>>>()?,
        Some(_) => return Err(bad("author_ids", "expected an array of strings")),
        None => return Err(bad("author_ids", "missing")),
    };
    let pub_id = string("pub_id")?;
    if pub_id.is_empty() {
        return Err(bad("pub_id", "empty"));
    }
    Ok(PublicationRecord {
        pub_id,
        year,
        venue: string("venue")?,
        author_ids,
        title: string("title")?,
        abstract_text: string("abstract")?,
    })
}

const CSV_COLUMNS: [&str; 6] = ["pub_id", "year", "venue", "author_ids", "title", "abstract"];

/// CSV variant: header `pub_id,year,venue,author_ids,title,abstract`, with
/// author ids separated by `|`. Line numbers count the header as line 1.
pub fn parse_csv(reader: impl std::io::Read, span: YearRange) -> Result<LoadReport> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut cols = [0usize; 6];
    for (slot, name) in cols.iter_mut().zip(CSV_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or(Error::Parse {
                line: 1,
                field: name,
                reason: "column missing from header".into(),
            })?;
    }
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row?;
        let get = |c: usize, field: &'static str| -> Result<&str> {
            row.get(cols[c]).ok_or(Error::Parse {
                line,
                field,
                reason: "missing".into(),
            })
        };
        let year = get(1, "year")?.trim().parse::<i32>().map_err(|e| Error::Parse {
            line,
            field: "year",
            reason: e.to_string(),
        })?;
        let authors = get(3, "author_ids")?;
        let author_ids = authors
            .split('|')
            .map(str::trim)
            .filter(|a| !a.is_empty())
            .map(str::to_string)
            .collect();
        records.push((
            line,
            PublicationRecord {
                pub_id: get(0, "pub_id")?.to_string(),
                year,
                venue: get(2, "venue")?.to_string(),
                author_ids,
                title: get(4, "title")?.to_string(),
                abstract_text: get(5, "abstract")?.to_string(),
            },
        ));
    }
    Corpus::from_numbered(records, span)
}

pub fn write_jsonl(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for rec in corpus.records() {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_rejections(rejections: &[Rejection], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["line", "pub_id", "reason"])?;
    for r in rejections {
        w.write_record([r.line.to_string().as_str(), &r.pub_id, &r.reason])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

/// Publication count per year of the corpus span, ascending, zero-filled.
pub fn yearly_counts(corpus: &Corpus) -> Result<Vec<(i32, usize)>> {
    if corpus.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    Ok(corpus
        .span()
        .years()
        .map(|y| (y, corpus.by_year.get(&y).map_or(0, Vec::len)))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Career {
    pub first_year: i32,
    pub last_year: i32,
    pub pub_count: usize,
}

impl Career {
    /// Last minus first publication year.
    pub fn age(&self) -> i32 {
        self.last_year - self.first_year
    }
}

/// Career summary using only publications dated `<= as_of`.
pub fn author_career<S: PublicationSource + ?Sized>(
    source: &S,
    author: &str,
    as_of: i32,
) -> Result<Career> {
    let range = YearRange {
        start: source.span().start.min(as_of),
        end: as_of,
    };
    let pubs = source.author_publications(author, range);
    let first = pubs.iter().map(|r| r.year).min();
    let last = pubs.iter().map(|r| r.year).max();
    match (first, last) {
        (Some(first_year), Some(last_year)) => Ok(Career {
            first_year,
            last_year,
            pub_count: pubs.len(),
        }),
        _ => Err(Error::AbsentAuthor(author.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn rec(id: &str, year: i32, authors: &[&str]) -> PublicationRecord {
        PublicationRecord {
            pub_id: id.to_string(),
            year,
            venue: String::new(),
            author_ids: authors.iter().map(|s| s.to_string()).collect(),
            title: String::new(),
            abstract_text: String::new(),
        }
    }

    fn span() -> YearRange {
        YearRange::new(2000, 2017).unwrap()
    }

    #[test]
    fn ingests_valid_records_with_consistent_indexes() {
        let report = Corpus::from_records(
            vec![
                rec("P1", 2003, &["a", "b"]),
                rec("P2", 2001, &["a"]),
                rec("P3", 2001, &["b", "c"]),
            ],
            span(),
        )
        .unwrap();
        assert!(report.rejections.is_empty());
        let c = report.corpus;
        assert_eq!(c.len(), 3);
        let a: Vec<_> = c.author_records("a").map(|r| r.pub_id.as_str()).collect();
        assert_eq!(a, ["P2", "P1"]);
        assert_eq!(c.year_records(2001).count(), 2);
        assert_eq!(c.authors().collect::<Vec<_>>(), ["a", "b", "c"]);
    }

    #[test]
    fn out_of_span_year_is_rejected_not_fatal() {
        let report =
            Corpus::from_records(vec![rec("P1", 1999, &["a"]), rec("P2", 2000, &["a"])], span())
                .unwrap();
        assert_eq!(report.corpus.len(), 1);
        assert_eq!(report.rejections.len(), 1);
        assert_eq!(report.rejections[0].pub_id, "P1");
        assert_eq!(report.rejections[0].line, 1);
    }

    #[test]
    fn duplicate_pub_id_is_an_error_naming_it() {
        let err = Corpus::from_records(vec![rec("P1", 2001, &["a"]), rec("P1", 2002, &["b"])], span())
            .unwrap_err();
        assert!(err.to_string().contains("\"P1\""), "{err}");
    }

    #[test]
    fn empty_or_repeated_authors_are_errors() {
        assert!(matches!(
            Corpus::from_records(vec![rec("P1", 2001, &[])], span()),
            Err(Error::EmptyAuthors { .. })
        ));
        assert!(matches!(
            Corpus::from_records(vec![rec("P1", 2001, &["a", "a"])], span()),
            Err(Error::DuplicateAuthor { .. })
        ));
    }

    #[test]
    fn malformed_json_line_names_line_and_field() {
        let text = "{\"pub_id\":\"P1\",\"year\":2001,\"venue\":\"\",\"author_ids\":[\"a\"],\"title\":\"\",\"abstract\":\"\"}\n\
                    {\"pub_id\":\"P2\",\"year\":\"x\",\"venue\":\"\",\"author_ids\":[\"a\"],\"title\":\"\",\"abstract\":\"\"}\n";
        let err = parse_jsonl(text.as_bytes(), span()).unwrap_err();
        match err {
            Error::Parse { line, field, .. } => {
                assert_eq!(line, 2);
                assert_eq!(field, "year");
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_jsonl("{\"pub_id\":\"P1\"}".as_bytes(), span()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn csv_variant_splits_authors_on_pipe() {
        let text = "pub_id,year,venue,author_ids,title,abstract\n\
                    P1,2004,J Net,a|b|c,\"Graphs, again\",\n";
        let c = parse_csv(text.as_bytes(), span()).unwrap().corpus;
        assert_eq!(c.records()[0].author_ids, ["a", "b", "c"]);
        assert_eq!(c.records()[0].title, "Graphs, again");
    }

    #[test]
    fn yearly_counts_zero_fills_the_span() {
        let c = Corpus::from_records(
            vec![
                rec("P1", 2001, &["a"]),
                rec("P2", 2001, &["b"]),
                rec("P3", 2003, &["c"]),
            ],
            YearRange::new(2001, 2003).unwrap(),
        )
        .unwrap()
        .corpus;
        assert_eq!(yearly_counts(&c).unwrap(), [(2001, 2), (2002, 0), (2003, 1)]);

        let single = Corpus::from_records(vec![rec("P1", 2017, &["a"])], span())
            .unwrap()
            .corpus;
        let counts = yearly_counts(&single).unwrap();
        assert_eq!(counts.len(), 18);
        assert_eq!(counts.last(), Some(&(2017, 1)));
        assert!(counts[..17].iter().all(|&(_, n)| n == 0));
    }

    #[test]
    fn career_respects_as_of_cutoff() {
        let c = Corpus::from_records(
            vec![
                rec("P1", 2001, &["x"]),
                rec("P2", 2005, &["x"]),
                rec("P3", 2009, &["x"]),
                rec("P4", 2003, &["y"]),
                rec("P5", 2010, &["z"]),
            ],
            span(),
        )
        .unwrap()
        .corpus;
        let career = author_career(&c, "x", 2006).unwrap();
        assert_eq!((career.first_year, career.last_year, career.pub_count), (2001, 2005, 2));
        let career = author_career(&c, "y", 2003).unwrap();
        assert_eq!((career.first_year, career.last_year, career.pub_count), (2003, 2003, 1));
        assert!(matches!(author_career(&c, "z", 2006), Err(Error::AbsentAuthor(_))));
        assert!(matches!(author_career(&c, "nobody", 2017), Err(Error::AbsentAuthor(_))));
    }

    #[test]
    fn audit_flags_reads_past_limit() {
        let c = Corpus::from_records(vec![rec("P1", 2001, &["x"]), rec("P2", 2005, &["x"])], span())
            .unwrap()
            .corpus;
        let audit = AccessAudit::new(&c, 2003);
        audit.publications_in(YearRange::new(2000, 2003).unwrap());
        assert_eq!(audit.violations(), 0);
        assert_eq!(audit.max_year(), Some(2001));
        audit.author_publications("x", YearRange::new(2000, 2010).unwrap());
        assert_eq!(audit.violations(), 1);
        assert_eq!(audit.reads(), 3);
    }

    #[test]
    fn venue_normalization() {
        assert_eq!(normalize_venue("  Journal  of\tNetworks "), "journal of networks");
    }
}
