//! CSV tables: `#` comment lines (conventions first), one column-name row,
//! numbers as `{:.16e}`.

use std::fmt::Write as _;

use nlqf_core::CONVENTIONS;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// 17 significant digits, round-trip exact.
pub fn format_num(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub comments: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { comments: Vec::new(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn comment(&mut self, c: impl Into<String>) {
        self.comments.push(c.into());
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# {CONVENTIONS}").unwrap();
        for c in &self.comments {
            writeln!(s, "# {c}").unwrap();
        }
        writeln!(s, "{}", self.columns.join(",")).unwrap();
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Num(v) => format_num(*v),
                    Cell::Int(v) => v.to_string(),
                    Cell::Text(t) => t.clone(),
                })
                .collect();
            writeln!(s, "{}", cells.join(",")).unwrap();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, -1.0 / 3.0, 6.02214076e23, 5e-324, 0.0] {
            assert_eq!(format_num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(format_num(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn header_cites_conventions() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![1.0.into(), "x".into()]);
        let csv = t.to_csv();
        assert!(csv.starts_with("# metric (+,-,-,-)"));
        assert!(csv.ends_with("a,b\n1.0000000000000000e0,x\n"));
    }
}
