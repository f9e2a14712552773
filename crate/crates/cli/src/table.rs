use std::io::{self, Write};

/// Rows of pre-formatted cells under a header.
#[derive(Debug, Default)]
pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Table { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "{}", self.header.join(","))?;
        for r in &self.rows {
            writeln!(out, "{}", r.join(","))?;
        }
        Ok(())
    }

    /// Space-aligned columns.
    pub fn write_human<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let mut width: Vec<usize> = self.header.iter().map(|h| h.len()).collect();
        for r in &self.rows {
            for (w, c) in width.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let line = |cells: Vec<&str>| {
            cells
                .iter()
                .zip(&width)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        writeln!(out, "{}", line(self.header.clone()))?;
        for r in &self.rows {
            writeln!(out, "{}", line(r.iter().map(String::as_str).collect()))?;
        }
        Ok(())
    }
}

/// 17 significant digits.
pub fn f(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn opt_f(x: Option<f64>) -> String {
    x.map(f).unwrap_or_default()
}

pub fn b(x: bool) -> String {
    x.to_string()
}

pub fn sites(list: &[usize]) -> String {
    list.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}
