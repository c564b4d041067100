//! Plain-text column tables with a `#` comment header.

use std::fmt::Write as _;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    /// Header entries emitted as `# key: value`.
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { meta: Vec::new(), columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    /// Numeric header entry, written in the same round-trip form as the rows.
    pub fn meta_num(&mut self, key: &str, value: f64) -> &mut Self {
        self.meta(key, format!("{value:e}"))
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.meta {
            writeln!(s, "# {k}: {v}").unwrap();
        }
        writeln!(s, "# {}", self.columns.join(" ")).unwrap();
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|x| format!("{x:e}")).collect();
            writeln!(s, "{}", cells.join(" ")).unwrap();
        }
        s
    }

    /// Reads the numeric body of a rendered table; the last `#` line before
    /// the data names the columns.
    pub fn parse(text: &str) -> Option<Self> {
        let mut t = Table::default();
        for line in text.lines() {
            if let Some(h) = line.strip_prefix('#') {
                let h = h.trim();
                match h.split_once(": ") {
                    Some((k, v)) if t.rows.is_empty() && !k.contains(' ') => t.meta.push((k.into(), v.into())),
                    _ => t.columns = h.split_whitespace().map(String::from).collect(),
                }
            } else if !line.trim().is_empty() {
                let r: Option<Vec<f64>> = line.split_whitespace().map(|x| x.parse().ok()).collect();
                t.rows.push(r?);
            }
        }
        Some(t)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}
