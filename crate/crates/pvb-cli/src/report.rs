//! Rendering of results as text tables, CSV rows, and JSON values.

use pvb_core::{Ci, Estimate, Measure, VerificationTable};

type AccuracyResult = pvb_core::AccuracyResult<f64>;

/// Format with seven significant digits, plain decimal notation.
pub fn sig7(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0.000000".to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (6 - magnitude).clamp(0, 17) as usize;
    format!("{x:.decimals$}")
}

fn cell(value: Option<f64>) -> String {
    value.map(sig7).unwrap_or_else(|| "NA".to_string())
}

fn ci_cells(ci: Option<&Ci<f64>>) -> (String, String) {
    match ci {
        Some(ci) => (sig7(ci.lower_clipped), sig7(ci.upper_clipped)),
        None => ("NA".to_string(), "NA".to_string()),
    }
}

pub fn measure_short(m: Measure) -> &'static str {
    match m {
        Measure::Sensitivity => "Se",
        Measure::Specificity => "Sp",
        Measure::Ppv => "PPV",
        Measure::Npv => "NPV",
    }
}

fn measure_long(m: Measure) -> &'static str {
    match m {
        Measure::Sensitivity => "Sensitivity",
        Measure::Specificity => "Specificity",
        Measure::Ppv => "PPV",
        Measure::Npv => "NPV",
    }
}

/// Right-align every column except the first, which is left-aligned; two
/// spaces between columns. The first row is the header.
pub fn align_table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut widths = vec![0usize; cols];
    for row in rows {
        for (i, item) in row.iter().enumerate() {
            widths[i] = widths[i].max(item.len());
        }
    }
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (i, item) in row.iter().enumerate() {
            if i == 0 {
                line.push_str(&format!("{item:<w$}", w = widths[0]));
            } else {
                line.push_str(&format!("  {item:>w$}", w = widths[i]));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// The measure-by-statistic table: rows Se/Sp/PPV/NPV, columns Est, SE,
/// LowCI, UppCI, seven significant digits, NA where a statistic is not
/// produced by the method.
pub fn accuracy_table(acc: &AccuracyResult) -> String {
    let mut rows = vec![vec![
        String::new(),
        "Est".to_string(),
        "SE".to_string(),
        "LowCI".to_string(),
        "UppCI".to_string(),
    ]];
    for m in Measure::ALL {
        let e: &Estimate<f64> = acc.measure(m);
        let (low, upp) = ci_cells(e.ci.as_ref());
        rows.push(vec![
            measure_short(m).to_string(),
            sig7(e.point),
            cell(e.se),
            low,
            upp,
        ]);
    }
    align_table(&rows)
}

/// Cross-classification in the report layout: test rows, disease columns,
/// unverified and total columns alongside.
pub fn cross_table_text(t: &VerificationTable) -> String {
    let rows = vec![
        vec![
            "Test".to_string(),
            "yes".to_string(),
            "no".to_string(),
            "unverified".to_string(),
            "Total".to_string(),
        ],
        vec![
            "  yes".to_string(),
            t.s1.to_string(),
            t.r1.to_string(),
            t.u1.to_string(),
            t.n1().to_string(),
        ],
        vec![
            "  no".to_string(),
            t.s0.to_string(),
            t.r0.to_string(),
            t.u0.to_string(),
            t.n0().to_string(),
        ],
    ];
    let body = align_table(&rows);
    let indent = "Test".len() + 2;
    format!("{}Disease\n{}", " ".repeat(indent), body)
}

/// Wide comparison: method columns, and per measure a block of four rows
/// (estimate, SE, and the two interval bounds labelled by their
/// percentile).
pub fn compare_table(results: &[(String, AccuracyResult)], alpha: f64) -> String {
    let low_label = format!("{}%", 100.0 * alpha / 2.0);
    let upp_label = format!("{}%", 100.0 * (1.0 - alpha / 2.0));
    let mut header = vec!["Estimates".to_string()];
    header.extend(results.iter().map(|(name, _)| name.clone()));
    let mut rows = vec![header];
    for m in Measure::ALL {
        let mut est = vec![measure_long(m).to_string()];
        let mut se = vec!["SE".to_string()];
        let mut low = vec![low_label.clone()];
        let mut upp = vec![upp_label.clone()];
        for (_, acc) in results {
            let e = acc.measure(m);
            est.push(sig7(e.point));
            se.push(cell(e.se));
            let (l, u) = ci_cells(e.ci.as_ref());
            low.push(l);
            upp.push(u);
        }
        rows.extend([est, se, low, upp]);
    }
    align_table(&rows)
}

fn statistic_rows(acc: &AccuracyResult, m: Measure) -> [(&'static str, Option<f64>); 4] {
    let e = acc.measure(m);
    [
        ("estimate", Some(e.point)),
        ("se", e.se),
        ("ci_lower", e.ci.map(|ci| ci.lower_clipped)),
        ("ci_upper", e.ci.map(|ci| ci.upper_clipped)),
    ]
}

fn csv_value(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "NA".to_string())
}

/// One row per (measure, statistic), full precision.
pub fn accuracy_csv(acc: &AccuracyResult) -> String {
    let mut out = String::from("measure,statistic,value\n");
    for m in Measure::ALL {
        for (stat, v) in statistic_rows(acc, m) {
            out.push_str(&format!("{},{},{}\n", m.label(), stat, csv_value(v)));
        }
    }
    out
}

/// One row per (method, measure, statistic).
pub fn compare_csv(results: &[(String, AccuracyResult)]) -> String {
    let mut out = String::from("method,measure,statistic,value\n");
    for (name, acc) in results {
        for m in Measure::ALL {
            for (stat, v) in statistic_rows(acc, m) {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    name,
                    m.label(),
                    stat,
                    csv_value(v)
                ));
            }
        }
    }
    out
}

/// One row per table cell; disease is NA for the unverified counts.
pub fn table_csv(t: &VerificationTable) -> String {
    let mut out = String::from("test,disease,count\n");
    for (test, disease, count) in [
        (1, "1", t.s1),
        (1, "0", t.r1),
        (1, "NA", t.u1),
        (0, "1", t.s0),
        (0, "0", t.r0),
        (0, "NA", t.u0),
    ] {
        out.push_str(&format!("{test},{disease},{count}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use pvb_core::{CiKind, Method};

    #[test]
    fn seven_significant_digits_across_magnitudes() {
        assert_eq!(sig7(0.975), "0.9750000");
        assert_eq!(sig7(0.0110397), "0.01103970");
        assert_eq!(sig7(0.1439114), "0.1439114");
        assert_eq!(sig7(195.0), "195.0000");
        assert_eq!(sig7(-0.0234), "-0.02340000");
        assert_eq!(sig7(0.0), "0.000000");
        assert_eq!(sig7(1.0), "1.000000");
    }

    #[test]
    fn accuracy_table_has_na_for_missing_statistics() {
        let mut acc = AccuracyResult::points(Method::Ebg, [0.1f64, 0.2, 0.3, 0.4], 0.05);
        acc.sensitivity.se = Some(0.05);
        acc.sensitivity.ci = Some(Ci::new(0.01, 0.19, CiKind::Bca));
        let text = accuracy_table(&acc);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].trim_start().starts_with("Est"));
        assert!(lines[1].starts_with("Se"));
        assert!(lines[1].contains("0.1000000"));
        assert!(lines[1].contains("0.05000000"));
        assert!(lines[2].starts_with("Sp"));
        assert!(lines[2].contains("NA"));
    }

    #[test]
    fn cross_table_matches_report_layout() {
        let t = VerificationTable {
            s1: 195,
            s0: 5,
            r1: 232,
            r0: 39,
            u1: 996,
            u0: 1221,
        };
        let text = cross_table_text(&t);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0].trim(), "Disease");
        assert!(lines[1].contains("yes") && lines[1].contains("unverified"));
        let row_yes: Vec<&str> = lines[2].split_whitespace().collect();
        assert_eq!(row_yes, vec!["yes", "195", "232", "996", "1423"]);
        let row_no: Vec<&str> = lines[3].split_whitespace().collect();
        assert_eq!(row_no, vec!["no", "5", "39", "1221", "1265"]);
    }

    #[test]
    fn compare_table_labels_interval_rows_by_percentile() {
        let a = AccuracyResult::points(Method::Cca, [0.1f64, 0.2, 0.3, 0.4], 0.05);
        let b = AccuracyResult::points(Method::Bg, [0.5f64, 0.6, 0.7, 0.8], 0.05);
        let text = compare_table(
            &[("cca".to_string(), a), ("bg".to_string(), b)],
            0.05,
        );
        assert!(text.contains("2.5%"));
        assert!(text.contains("97.5%"));
        assert!(text.lines().next().unwrap().contains("cca"));
        assert!(text.contains("Sensitivity"));
    }

    #[test]
    fn csv_has_one_row_per_measure_statistic() {
        let acc = AccuracyResult::points(Method::Cca, [0.1f64, 0.2, 0.3, 0.4], 0.05);
        let csv = accuracy_csv(&acc);
        assert_eq!(csv.lines().count(), 17);
        assert!(csv.contains("sensitivity,estimate,0.1\n"));
        assert!(csv.contains("npv,ci_upper,NA\n"));
    }
}
