use std::io::{self, Write};

use pcombine::combine::centrality;
use pcombine::trial_model::{fmt_full, AnalysisResult, Interval};
use pcombine::Probability;

/// Columns use the fewest decimals that show every entry to `digits`
/// significant figures; beyond this many decimals the column switches to
/// scientific notation.
const MAX_FIXED_DECIMALS: usize = 6;

fn decimals_for(x: f64, digits: usize) -> usize {
    if x == 0.0 || !x.is_finite() {
        return 0;
    }
    let magnitude = x.abs().log10().floor() as i64;
    let sig = (digits.max(1) as i64 - 1 - magnitude).max(0) as usize;
    let rounded = format!("{:.*}", sig, x);
    let trimmed = rounded.trim_end_matches('0');
    match trimmed.split_once('.') {
        Some((_, frac)) => frac.len(),
        None => 0,
    }
}

fn format_column(values: &[f64], digits: usize) -> Vec<String> {
    let decimals = values.iter().map(|&x| decimals_for(x, digits)).max().unwrap_or(0);
    if decimals > MAX_FIXED_DECIMALS {
        let mantissa = digits.max(1) - 1;
        values.iter().map(|x| format!("{:.*e}", mantissa, x)).collect()
    } else {
        values.iter().map(|x| format!("{:.*}", decimals, x)).collect()
    }
}

fn percent(level: f64) -> String {
    let s = format!("{:.10}", level * 100.0);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    format!("{s}%")
}

fn reported_p(p: Probability, two_sided: bool) -> f64 {
    if two_sided {
        centrality(p).value()
    } else {
        p.value()
    }
}

struct Row<'a> {
    label: &'a str,
    estimate: f64,
    intervals: &'a [Interval],
    p: f64,
}

fn write_table<W: Write>(out: &mut W, first: &str, rows: &[Row], levels: &[f64], digits: usize) -> io::Result<()> {
    let single = levels.len() == 1;
    let mut headers = vec![first.to_string()];
    let mut columns: Vec<Vec<String>> = vec![rows.iter().map(|r| r.label.to_string()).collect()];

    let mut push = |header: String, values: Vec<f64>, headers: &mut Vec<String>| {
        headers.push(header);
        columns.push(format_column(&values, digits));
    };
    for (i, &level) in levels.iter().enumerate().rev() {
        let h = if single { "Lower CI".to_string() } else { format!("Lower {}", percent(level)) };
        push(h, rows.iter().map(|r| r.intervals[i].lower).collect(), &mut headers);
    }
    push("Estimate".into(), rows.iter().map(|r| r.estimate).collect(), &mut headers);
    for (i, &level) in levels.iter().enumerate() {
        let h = if single { "Upper CI".to_string() } else { format!("Upper {}", percent(level)) };
        push(h, rows.iter().map(|r| r.intervals[i].upper).collect(), &mut headers);
    }
    push("P-value".into(), rows.iter().map(|r| r.p).collect(), &mut headers);

    let widths: Vec<usize> = headers
        .iter()
        .zip(&columns)
        .map(|(h, col)| col.iter().map(|s| s.chars().count()).max().unwrap_or(0).max(h.chars().count()))
        .collect();
    for (c, h) in headers.iter().enumerate() {
        write!(out, " {:>w$}", h, w = widths[c])?;
    }
    writeln!(out)?;
    for r in 0..rows.len() {
        for c in 0..columns.len() {
            write!(out, " {:>w$}", columns[c][r], w = widths[c])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn text<W: Write>(out: &mut W, result: &AnalysisResult, digits: usize, two_sided: bool) -> io::Result<()> {
    let levels = &result.request.levels;
    let individual: Vec<Row> = result
        .individual
        .iter()
        .map(|t| Row { label: &t.label, estimate: t.estimate, intervals: &t.intervals, p: reported_p(t.p_at_null, two_sided) })
        .collect();
    let combined: Vec<Row> = result
        .combined
        .iter()
        .map(|m| Row {
            label: m.method.label(),
            estimate: m.median_estimate,
            intervals: &m.intervals,
            p: reported_p(m.p_at_null, two_sided),
        })
        .collect();

    writeln!(out, "INDIVIDUAL RESULTS")?;
    write_table(out, "Trial", &individual, levels, digits)?;
    writeln!(out)?;
    writeln!(out, "COMBINED RESULTS")?;
    write_table(out, "Method", &combined, levels, digits)?;
    writeln!(out)?;
    writeln!(out, "NOTES")?;
    let level_list: Vec<String> = levels.iter().map(|&l| percent(l)).collect();
    let noun = if levels.len() == 1 { "Confidence level" } else { "Confidence levels" };
    writeln!(out, "{noun}: {}", level_list.join(", "))?;
    writeln!(out, "Null value: {}", result.request.null_value)?;
    writeln!(out, "Alternative: {}", result.request.alternative)?;
    if two_sided {
        writeln!(out, "P-values: two-sided")?;
    }
    Ok(())
}

pub fn csv<W: Write>(out: &mut W, result: &AnalysisResult, two_sided: bool) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let p_header = if two_sided { "p_two_sided" } else { "p_one_sided" };
    w.write_record(["kind", "name", "level", "lower", "estimate", "upper", p_header])?;
    let mut emit = |kind: &str, name: &str, estimate: f64, intervals: &[Interval], p: f64| -> Result<(), csv::Error> {
        for iv in intervals {
            w.write_record([
                kind,
                name,
                &fmt_full(iv.level),
                &fmt_full(iv.lower),
                &fmt_full(estimate),
                &fmt_full(iv.upper),
                &fmt_full(p),
            ])?;
        }
        Ok(())
    };
    for t in &result.individual {
        emit("trial", &t.label, t.estimate, &t.intervals, reported_p(t.p_at_null, two_sided))?;
    }
    for m in &result.combined {
        emit("method", m.method.key(), m.median_estimate, &m.intervals, reported_p(m.p_at_null, two_sided))?;
    }
    w.flush()?;
    Ok(())
}
