//! Formatting helpers shared by the CSV and JSON emitters.
//!
//! Every float is written with at least 12 significant digits so golden-file
//! regressions are meaningful; extended reals serialize as `inf` / `-inf`.

/// Render a float for CSV output: 13 significant digits, `inf`/`-inf`/`nan`
/// for non-finite values.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x == f64::INFINITY {
        "inf".to_string()
    } else if x == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{x:.12e}")
    }
}

/// One CSV line from already-formatted cells.
pub fn csv_line(cells: &[String]) -> String {
    cells.join(",")
}

/// A whole CSV document with the given header.
pub fn csv_document(header: &str, rows: &[Vec<f64>]) -> String {
    let mut out = String::with_capacity(rows.len() * 32 + header.len() + 1);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&x| fmt_float(x)).collect();
        out.push_str(&csv_line(&cells));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_carry_12_significant_digits() {
        let s = fmt_float(std::f64::consts::PI);
        assert!(s.starts_with("3.14159265359"), "{s}");
        assert_eq!(fmt_float(f64::INFINITY), "inf");
        assert_eq!(fmt_float(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn document_shape() {
        let doc = csv_document("alpha,q", &[vec![0.0, 1.0], vec![0.5, f64::INFINITY]]);
        let lines: Vec<&str> = doc.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "alpha,q");
        assert!(lines[2].ends_with(",inf"));
    }
}
