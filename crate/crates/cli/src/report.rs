//! CSV tables and gnuplot scripts.

use std::io;
use std::path::{Path, PathBuf};

use spinlab::lab::ConvergenceTable;

pub const CSV_HEADER: [&str; 7] = [
    "study",
    "n",
    "value",
    "reference",
    "abs_error",
    "rel_error",
    "fitted_rate",
];

fn num(v: f64) -> String {
    format!("{v:.12e}")
}

fn write_rows<W: io::Write>(w: &mut csv::Writer<W>, table: &ConvergenceTable) -> csv::Result<()> {
    let rate = table.fitted_rate.map(num).unwrap_or_default();
    for r in &table.rows {
        w.write_record([
            table.study.as_str(),
            &r.n.to_string(),
            &num(r.value),
            &num(r.reference),
            &num(r.abs_error),
            &num(r.rel_error),
            &rate,
        ])?;
    }
    Ok(())
}

/// One table (without its sub-tables) as CSV text.
pub fn table_csv(table: &ConvergenceTable) -> String {
    tables_csv(&[table])
}

pub fn tables_csv(tables: &[&ConvergenceTable]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for t in tables {
        write_rows(&mut w, t).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// File stem for a table: `total.exchange` → `total_exchange`.
pub fn file_stem(study: &str) -> String {
    study.replace(['.', ' ', '/'], "_")
}

/// Log-log plot of `abs_error` against `n` for the named CSV.
pub fn gnuplot_script(table: &ConvergenceTable, csv_name: &str) -> String {
    let stem = file_stem(&table.study);
    let rate = match table.fitted_rate {
        Some(r) => format!("fitted rate {r:.3}"),
        None => "no fitted rate".to_string(),
    };
    format!(
        "# {study}: {rate}, status {status}\n\
         set terminal pngcairo size 800,600\n\
         set output '{stem}.png'\n\
         set datafile separator ','\n\
         set key top right\n\
         set logscale xy\n\
         set xlabel 'n'\n\
         set ylabel 'absolute error'\n\
         set title '{study}'\n\
         plot '{csv_name}' skip 1 using 2:($5 > 0 ? $5 : NaN) with linespoints title 'abs error'\n",
        study = table.study,
        status = table.status.label(),
    )
}

/// Writes `<stem>.csv` and `<stem>.gp` for the table and each sub-table;
/// returns the paths written.
pub fn write_table(dir: &Path, table: &ConvergenceTable) -> io::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for t in table.flatten() {
        let stem = file_stem(&t.study);
        let csv_name = format!("{stem}.csv");
        let csv_path = dir.join(&csv_name);
        std::fs::write(&csv_path, table_csv(t))?;
        let gp_path = dir.join(format!("{stem}.gp"));
        std::fs::write(&gp_path, gnuplot_script(t, &csv_name))?;
        written.push(csv_path);
        written.push(gp_path);
    }
    Ok(written)
}
