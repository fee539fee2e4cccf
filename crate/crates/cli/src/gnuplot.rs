use std::fmt::Write as _;

use crate::output::{Cell, Table};

const MAX_GROUPS: usize = 12;

fn cell_key(c: &Cell) -> Option<String> {
    match c {
        Cell::Int(v) => Some(v.to_string()),
        Cell::Text(s) => Some(s.clone()),
        Cell::Float(v) => Some(format!("{v:.16e}")),
        Cell::Empty => None,
    }
}

/// A gnuplot script rendering `table` (read from `data_file`) to PNG, or
/// `None` when the table carries no plot hints.
pub fn script(table: &Table, data_file: &str) -> Option<String> {
    let plot = table.plot.as_ref()?;
    let mut s = String::new();
    writeln!(s, "set datafile separator ','").unwrap();
    writeln!(s, "set terminal pngcairo size 900,600").unwrap();
    writeln!(s, "set output '{}.png'", table.name).unwrap();
    writeln!(s, "set title '{}'", plot.title).unwrap();
    writeln!(s, "set xlabel '{}'", plot.x).unwrap();
    writeln!(s, "set key outside right").unwrap();
    if plot.log_x {
        writeln!(s, "set logscale x").unwrap();
    }
    let mut series = Vec::new();
    match plot.group.as_deref().and_then(|g| table.column_index(g).map(|i| (g, i))) {
        Some((group, idx)) => {
            let mut keys: Vec<String> = Vec::new();
            for row in &table.rows {
                if let Some(k) = cell_key(&row[idx]) {
                    if !keys.contains(&k) {
                        keys.push(k);
                    }
                }
            }
            keys.truncate(MAX_GROUPS);
            for y in &plot.y {
                for k in &keys {
                    series.push(format!(
                        "'{data_file}' using (column('{x}')):(strcol('{group}') eq '{k}' ? column('{y}') : NaN) with linespoints title '{y} {group}={k}'",
                        x = plot.x
                    ));
                }
            }
        }
        None => {
            for y in &plot.y {
                series.push(format!(
                    "'{data_file}' using (column('{x}')):(column('{y}')) with linespoints title '{y}'",
                    x = plot.x
                ));
            }
        }
    }
    if series.is_empty() {
        return None;
    }
    writeln!(s, "plot {}", series.join(", \\\n     ")).unwrap();
    Some(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grouped_series_per_value() {
        let mut t = Table::new("p", &["tau", "level", "population"])
            .with_plot("pops", "tau", &["population"], false)
            .grouped_by("level");
        for lvl in [0usize, 2, 0, 2] {
            t.push(vec![0.0.into(), lvl.into(), 1.0.into()]);
        }
        let s = script(&t, "p.csv").unwrap();
        assert_eq!(s.matches("strcol('level')").count(), 2);
        assert!(s.contains("set output 'p.png'"));
    }

    #[test]
    fn no_hints_no_script() {
        assert!(script(&Table::new("t", &["a"]), "t.csv").is_none());
    }
}
