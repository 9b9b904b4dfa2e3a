//! CSV and JSON writers. CSV: comma separator, LF line endings, one header
//! row, floats with 17 significant digits, no quoting.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::CliError;

/// Round-trip decimal form of `x`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// `None` is written as `NaN`.
pub fn opt_num(x: Option<f64>) -> String {
    num(x.unwrap_or(f64::NAN))
}

#[derive(Clone, Debug)]
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let cols: Vec<&str> = header.iter().map(AsRef::as_ref).collect();
        debug_assert!(cols.iter().all(|c| !c.contains([',', '\n', '"'])));
        Self { text: format!("{}\n", cols.join(",")), columns: cols.len() }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        assert_eq!(cells.len(), self.columns, "row width does not match the header");
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        fs::write(path, &self.text)?;
        Ok(())
    }
}

/// Numbered column names `prefix_0 … prefix_{n−1}`.
pub fn columns(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}_{i}"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numerical(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0] {
            let s = num(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(num(0.5), "5.0000000000000000e-1");
        assert_eq!(opt_num(None), "NaN");
    }

    #[test]
    fn csv_layout() {
        let mut csv = Csv::new(&["step", "x"]);
        csv.row(vec!["0".into(), num(1.0)]);
        assert_eq!(csv.as_str(), "step,x\n0,1.0000000000000000e0\n");
        let names: Vec<String> = columns("chart", 2).collect();
        assert_eq!(names, ["chart_0", "chart_1"]);
    }
}
