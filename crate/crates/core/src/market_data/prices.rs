//! Price CSV: `date,open,high,low,close,volume`.

use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;

use super::{write_atomic, DataError, PriceBar};

const HEADER: [&str; 6] = ["date", "open", "high", "low", "close", "volume"];

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, row: usize) -> Result<T, DataError> {
    let raw = rec.get(i).unwrap_or("").trim();
    raw.parse().map_err(|_| DataError::MalformedRow { row, message: format!("bad {} value `{raw}`", HEADER[i]) })
}

fn volume(rec: &csv::StringRecord, row: usize) -> Result<u64, DataError> {
    let raw = rec.get(5).unwrap_or("").trim();
    if let Ok(v) = raw.parse::<u64>() {
        return Ok(v);
    }
    match raw.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < 1.8e19 => Ok(v as u64),
        _ => Err(DataError::MalformedRow { row, message: format!("bad volume value `{raw}`") }),
    }
}

/// Parses price rows. Rows are numbered from 1, excluding the header.
pub fn parse_price_csv<R: Read>(input: R) -> Result<Vec<PriceBar>, DataError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let header = reader.headers().map_err(|e| DataError::BadHeader(e.to_string()))?.clone();
    if header.iter().map(str::to_ascii_lowercase).ne(HEADER.iter().map(|s| s.to_string())) {
        return Err(DataError::BadHeader(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut bars: Vec<PriceBar> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| DataError::MalformedRow { row, message: e.to_string() })?;
        if rec.len() != HEADER.len() {
            return Err(DataError::MalformedRow { row, message: format!("expected 6 fields, found {}", rec.len()) });
        }
        let date_raw = rec.get(0).unwrap_or("");
        let date = NaiveDate::parse_from_str(date_raw, "%Y-%m-%d")
            .map_err(|_| DataError::MalformedRow { row, message: format!("bad date `{date_raw}`") })?;
        let bar = PriceBar {
            date,
            open: field(&rec, 1, row)?,
            high: field(&rec, 2, row)?,
            low: field(&rec, 3, row)?,
            close: field(&rec, 4, row)?,
            volume: volume(&rec, row)?,
        };
        bar.validate().map_err(|message| DataError::MalformedRow { row, message })?;
        if let Some(prev) = bars.last() {
            if bar.date == prev.date {
                return Err(DataError::DuplicateDate { row, date });
            }
            if bar.date < prev.date {
                return Err(DataError::NonMonotone { row, date, previous: prev.date });
            }
        }
        bars.push(bar);
    }
    Ok(bars)
}

pub fn load_price_csv(path: &Path) -> Result<Vec<PriceBar>, DataError> {
    let file = std::fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    parse_price_csv(std::io::BufReader::new(file))
}

/// Canonical CSV text; floats use the shortest round-trip representation.
pub fn price_csv_string(bars: &[PriceBar]) -> String {
    let mut out = String::from("date,open,high,low,close,volume\n");
    for b in bars {
        out.push_str(&format!("{},{},{},{},{},{}\n", b.date, b.open, b.high, b.low, b.close, b.volume));
    }
    out
}

pub fn write_price_csv(path: &Path, bars: &[PriceBar]) -> Result<(), DataError> {
    write_atomic(path, price_csv_string(bars).as_bytes()).map_err(|e| DataError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "date,open,high,low,close,volume\n\
        2025-03-03,10,11,9,10.5,100\n\
        2025-03-04,10.5,12,10,11.5,200\n\
        2025-03-05,11.5,12,11,11.75,300\n";

    #[test]
    fn well_formed_rows_load_in_order() {
        let bars = parse_price_csv(GOOD.as_bytes()).unwrap();
        assert_eq!(bars.len(), 3);
        assert!(bars.windows(2).all(|w| w[0].date < w[1].date));
        assert_eq!(bars[2].close, 11.75);
    }

    #[test]
    fn zero_close_names_the_row() {
        let bad = GOOD.replace("2025-03-04,10.5,12,10,11.5,200", "2025-03-04,10.5,12,10,0,200");
        match parse_price_csv(bad.as_bytes()) {
            Err(DataError::MalformedRow { row, message }) => {
                assert_eq!(row, 2);
                assert!(message.contains("close"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn shuffled_dates_fail_on_first_offending_row() {
        let lines: Vec<&str> = GOOD.lines().collect();
        let shuffled = [lines[0], lines[2], lines[1], lines[3]].join("\n");
        // Sorted oracle: row 2 (2025-03-04) is the first to go backwards.
        match parse_price_csv(shuffled.as_bytes()) {
            Err(e @ DataError::NonMonotone { row: 2, .. }) => assert!(e.to_string().contains("non-monotone dates")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_date_rejected() {
        let dup = format!("{GOOD}2025-03-05,11.5,12,11,11.75,300\n");
        assert!(matches!(parse_price_csv(dup.as_bytes()), Err(DataError::DuplicateDate { row: 4, .. })));
    }

    #[test]
    fn wrong_header_rejected() {
        assert!(matches!(parse_price_csv("day,o,h,l,c,v\n".as_bytes()), Err(DataError::BadHeader(_))));
    }

    #[test]
    fn write_then_read_round_trips() {
        let bars = parse_price_csv(GOOD.as_bytes()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        write_price_csv(&path, &bars).unwrap();
        assert_eq!(load_price_csv(&path).unwrap(), bars);
        assert!(!dir.path().join("p.csv.tmp").exists());
    }
}
