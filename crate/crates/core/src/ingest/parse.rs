use std::collections::{HashMap, HashSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::record::{normalize_key, Category, LossRecord, Status, COVERAGE_END, COVERAGE_START};
use crate::error::{Error, Result};

/// Accepted date layouts, tried in order; the first successful parse wins.
pub const DATE_FORMATS: [&str; 3] = ["%Y-%m-%d", "%d.%m.%Y", "%m/%d/%Y"];

/// Maps logical record fields to the column names of an input file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub date: String,
    pub category: String,
    pub model: String,
    pub status: String,
    pub location: String,
    pub raion: String,
    pub oblast: String,
    pub url: String,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            date: "date".into(),
            category: "type".into(),
            model: "model".into(),
            status: "status".into(),
            location: "location".into(),
            raion: "raion".into(),
            oblast: "oblast".into(),
            url: "url".into(),
        }
    }
}

/// Known misclassifications: model text to the category it belongs to.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorrectionTable {
    entries: HashMap<String, Category>,
}

impl CorrectionTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, model_text: &str, category: Category) {
        self.entries.insert(normalize_key(model_text), category);
    }

    pub fn lookup(&self, model_text: &str) -> Option<Category> {
        self.entries.get(&normalize_key(model_text)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Reads a two-column `model_text,category` CSV with a header row.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut table = CorrectionTable::new();
        let mut reader = csv::ReaderBuilder::new()
            .flexible(true)
            .from_reader(text.as_bytes());
        for row in reader.records() {
            let row = row?;
            let (Some(model), Some(cat)) = (row.get(0), row.get(1)) else {
                continue;
            };
            if model.trim().is_empty() {
                continue;
            }
            table.insert(model, Category::from_text(cat));
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnparsableRow {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_parsed: usize,
    pub duplicates_removed: usize,
    pub unparsable_rows: Vec<UnparsableRow>,
    pub category_corrections: usize,
}

#[derive(Debug, Clone)]
pub struct ParseOptions {
    pub coverage_start: NaiveDate,
    pub coverage_end: NaiveDate,
    pub corrections: CorrectionTable,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            coverage_start: COVERAGE_START,
            coverage_end: COVERAGE_END,
            corrections: CorrectionTable::default(),
        }
    }
}

pub fn parse_date(text: &str) -> Option<NaiveDate> {
    let text = text.trim();
    DATE_FORMATS
        .iter()
        .find_map(|fmt| NaiveDate::parse_from_str(text, fmt).ok())
}

/// Parses loss records with the default coverage window and no corrections.
pub fn parse_records(csv_text: &str, schema: &Schema) -> Result<(Vec<LossRecord>, IngestReport)> {
    parse_records_with(csv_text, schema, &ParseOptions::default())
}

pub fn parse_records_with(
    csv_text: &str,
    schema: &Schema,
    options: &ParseOptions,
) -> Result<(Vec<LossRecord>, IngestReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(csv_text.as_bytes());
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name.trim()))
    };
    let date_col = column(&schema.date).ok_or_else(|| Error::MissingColumn(schema.date.clone()))?;
    let type_col =
        column(&schema.category).ok_or_else(|| Error::MissingColumn(schema.category.clone()))?;
    let model_col = column(&schema.model);
    let status_col = column(&schema.status);
    let location_col = column(&schema.location);
    let raion_col = column(&schema.raion);
    let oblast_col = column(&schema.oblast);
    let url_col = column(&schema.url);

    let mut report = IngestReport::default();
    let mut seen = HashSet::new();
    let mut records = Vec::new();

    for row in reader.records() {
        report.rows_read += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                report.unparsable_rows.push(UnparsableRow {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |col: Option<usize>| -> Option<String> {
            col.and_then(|c| row.get(c))
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_owned)
        };

        let raw_date = field(Some(date_col)).unwrap_or_default();
        let Some(date) = parse_date(&raw_date) else {
            report.unparsable_rows.push(UnparsableRow {
                line,
                reason: format!("unparsable date `{raw_date}`"),
            });
            continue;
        };
        if date < options.coverage_start || date > options.coverage_end {
            report.unparsable_rows.push(UnparsableRow {
                line,
                reason: format!("date {date} outside coverage window"),
            });
            continue;
        }
        let status = match field(status_col) {
            None => Status::Destroyed,
            Some(s) => match Status::parse(&s) {
                Some(st) => st,
                None => {
                    report.unparsable_rows.push(UnparsableRow {
                        line,
                        reason: format!("unknown status `{s}`"),
                    });
                    continue;
                }
            },
        };

        let model_text = field(model_col);
        let mut category = Category::from_text(&field(Some(type_col)).unwrap_or_default());
        if let Some(corrected) = model_text
            .as_deref()
            .and_then(|m| options.corrections.lookup(m))
        {
            if corrected != category {
                category = corrected;
                report.category_corrections += 1;
            }
        }

        let mut record = LossRecord::new(
            date,
            category,
            model_text,
            status,
            field(location_col),
            field(url_col),
        );
        record.raion = field(raion_col);
        record.oblast = field(oblast_col);

        if !seen.insert(record.record_id) {
            report.duplicates_removed += 1;
            continue;
        }
        report.rows_parsed += 1;
        records.push(record);
    }
    Ok((records, report))
}

/// Column order written by [`write_records`]; readable back with the default schema.
pub const RECORD_COLUMNS: [&str; 9] = [
    "record_id", "date", "type", "model", "status", "location", "raion", "oblast", "url",
];

pub fn write_records(records: &[LossRecord]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(RECORD_COLUMNS)?;
    for r in records {
        let date = r.date.format("%Y-%m-%d").to_string();
        let id = r.record_id.to_string();
        writer.write_record([
            id.as_str(),
            date.as_str(),
            r.category.as_str(),
            r.model_text.as_deref().unwrap_or(""),
            r.status.as_str(),
            r.location_text.as_deref().unwrap_or(""),
            r.raion.as_deref().unwrap_or(""),
            r.oblast.as_deref().unwrap_or(""),
            r.source_url.as_deref().unwrap_or(""),
        ])?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "date,type,status,location,raion,oblast,url\n";

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn single_row() {
        let text = format!("{HEADER}2022-03-01,tank,destroyed,Bucha,,Kyivska,\n");
        let (records, report) = parse_records(&text, &Schema::default()).unwrap();
        assert_eq!(records.len(), 1);
        let r = &records[0];
        assert_eq!(r.date, d(2022, 3, 1));
        assert_eq!(r.category, Category::Tank);
        assert_eq!(r.status, Status::Destroyed);
        assert_eq!(r.location_text.as_deref(), Some("Bucha"));
        assert_eq!(r.raion, None);
        assert_eq!(r.oblast.as_deref(), Some("Kyivska"));
        assert_eq!(report.rows_read, 1);
        assert_eq!(report.rows_parsed, 1);
    }

    #[test]
    fn header_only() {
        let (records, report) = parse_records(HEADER, &Schema::default()).unwrap();
        assert!(records.is_empty());
        assert_eq!(report.rows_read, 0);
        assert_eq!(report, IngestReport::default());
    }

    #[test]
    fn duplicate_rows_collapse() {
        let row = "2022-03-01,tank,destroyed,Bucha,,Kyivska,\n";
        let text = format!("{HEADER}{row}{row}");
        let (records, report) = parse_records(&text, &Schema::default()).unwrap();
        // both rows hash to the same identity tuple
        let expected = super::super::record::RecordId::compute(
            d(2022, 3, 1),
            Category::Tank,
            None,
            Some("Bucha"),
            None,
        );
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].record_id, expected);
        assert_eq!(report.duplicates_removed, 1);
        assert_eq!(report.rows_read, 2);
    }

    #[test]
    fn same_day_different_location_kept() {
        let text = format!(
            "{HEADER}2022-03-01,tank,destroyed,Bucha,,,\n2022-03-01,tank,destroyed,Irpin,,,\n"
        );
        let (records, report) = parse_records(&text, &Schema::default()).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(report.duplicates_removed, 0);
    }

    #[test]
    fn fallback_date_formats() {
        assert_eq!(parse_date("2022-03-04"), Some(d(2022, 3, 4)));
        assert_eq!(parse_date("04.03.2022"), Some(d(2022, 3, 4)));
        assert_eq!(parse_date("03/04/2022"), Some(d(2022, 3, 4)));
        assert_eq!(parse_date("2022/03/04"), None);
        assert_eq!(parse_date(""), None);
    }

    #[test]
    fn missing_mandatory_column() {
        let err = parse_records("type,status\ntank,destroyed\n", &Schema::default()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref c) if c == "date"), "{err}");
        let err = parse_records("date,status\n2022-03-01,destroyed\n", &Schema::default())
            .unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref c) if c == "type"), "{err}");
    }

    #[test]
    fn bad_rows_are_reported_not_fatal() {
        let text = format!(
            "{HEADER}yesterday,tank,destroyed,,,,\n2022-03-01,tank,melted,,,,\n2019-01-01,tank,destroyed,,,,\n2022-03-02,tank,,,,,\n"
        );
        let (records, report) = parse_records(&text, &Schema::default()).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].status, Status::Destroyed);
        assert_eq!(report.unparsable_rows.len(), 3);
        assert_eq!(report.unparsable_rows[0].line, 2);
        assert!(report.unparsable_rows[0].reason.contains("yesterday"));
        assert_eq!(
            report.rows_read,
            report.rows_parsed + report.unparsable_rows.len() + report.duplicates_removed
        );
    }

    #[test]
    fn corrections_applied_and_counted() {
        let mut table = CorrectionTable::new();
        table.insert("BMP-2", Category::Ifv);
        table.insert("T-72B3", Category::Tank);
        let options = ParseOptions {
            corrections: table,
            ..ParseOptions::default()
        };
        let text = "date,type,model\n2022-03-01,tank,bmp-2\n2022-03-01,tank,T-72B3\n2022-03-01,,\n";
        let (records, report) = parse_records_with(text, &Schema::default(), &options).unwrap();
        assert_eq!(records[0].category, Category::Ifv);
        assert_eq!(records[1].category, Category::Tank);
        assert_eq!(records[2].category, Category::Other);
        assert_eq!(report.category_corrections, 1);
    }

    #[test]
    fn custom_schema_and_quoted_fields() {
        let schema = Schema {
            date: "Date of loss".into(),
            category: "Class".into(),
            ..Schema::default()
        };
        let text = "\"Date of loss\",Class,location\n01.03.2022,\"Tanks\",\"Bucha, Kyiv oblast\"\n";
        let (records, _) = parse_records(text, &schema).unwrap();
        assert_eq!(records[0].location_text.as_deref(), Some("Bucha, Kyiv oblast"));
        assert_eq!(records[0].category, Category::Tank);
    }

    #[test]
    fn write_then_parse_round_trips() {
        let text = format!(
            "{HEADER}2022-03-01,tank,destroyed,\"Bucha, north\",Buchanskyi,Kyivska,http://x/1\n05.04.2023,ifv,captured,,,,\n"
        );
        let (records, _) = parse_records(&text, &Schema::default()).unwrap();
        let written = write_records(&records).unwrap();
        let (again, report) = parse_records(&written, &Schema::default()).unwrap();
        assert_eq!(records, again);
        assert_eq!(report.rows_parsed, 2);
    }
}
