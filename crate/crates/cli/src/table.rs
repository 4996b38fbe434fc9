//! Plot-ready CSV tables: header row, `.` decimals, scientific notation for
//! magnitudes below 1e-3.

use std::fmt::Write as _;
use std::path::Path;

/// Shortest round-trip text of `x`, in exponent form when `0 < |x| < 1e-3`.
pub fn format_number(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-3 {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Table {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{}", self.header.join(",")).unwrap();
        for r in &self.rows {
            writeln!(out, "{}", r.join(",")).unwrap();
        }
        out
    }

    /// Writes through a temporary file so readers never see a partial table.
    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let tmp = path.with_extension("csv.tmp");
        std::fs::write(&tmp, self.render())?;
        std::fs::rename(tmp, path)
    }

    pub fn read(path: &Path) -> Result<Table, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read '{}': {e}", path.display()))?;
        let mut lines = text.lines();
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| format!("'{}' is empty", path.display()))?
            .split(',')
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, l) in lines.enumerate() {
            let row: Vec<String> = l.split(',').map(str::to_string).collect();
            if row.len() != header.len() {
                return Err(format!("'{}' line {}: {} fields, header has {}", path.display(), i + 2, row.len(), header.len()));
            }
            rows.push(row);
        }
        Ok(Table { header, rows })
    }

    pub fn numbers(&self, col: usize) -> Result<Vec<f64>, String> {
        self.rows
            .iter()
            .map(|r| r[col].parse().map_err(|_| format!("'{}' in column {} is not a number", r[col], self.header[col])))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_magnitudes_use_exponents() {
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(2.5e-4), "2.5e-4");
        assert_eq!(format_number(-1e-7), "-1e-7");
        assert_eq!(format_number(0.001), "0.001");
        assert_eq!(format_number(123.25), "123.25");
        for x in [1.0 / 3.0, 2e-9, 7.123456789e5] {
            assert_eq!(format_number(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn table_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), format_number(1e-5)]);
        let p = dir.path().join("t.csv");
        t.write(&p).unwrap();
        let r = Table::read(&p).unwrap();
        assert_eq!(r, t);
        assert_eq!(r.numbers(1).unwrap(), vec![1e-5]);
    }
}
