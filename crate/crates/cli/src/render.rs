use scl_core::planexec::{Aggregate, Bucket, EvalReport, MeanStd};

const EMPTY: &str = "—";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Text,
    Csv,
}

const COLUMNS: [&str; 6] = ["scenes", "success %", "completion %", "step ratio", "pos err (mm)", "orn err"];

fn pm(m: &Option<MeanStd>, scale: f64, digits: usize) -> String {
    match m {
        Some(m) => format!("{:.*} ± {:.*}", digits, m.mean * scale, digits, m.std * scale),
        None => EMPTY.into(),
    }
}

fn cells(a: Option<&Aggregate>) -> Vec<String> {
    match a {
        None => vec![EMPTY.to_string(); COLUMNS.len()],
        Some(a) => vec![
            a.scenes.to_string(),
            format!("{:.1}", 100.0 * a.success_rate),
            format!("{:.1}", 100.0 * a.completion.mean),
            pm(&a.step_ratio, 1.0, 2),
            pm(&a.pos_error, 1e3, 2),
            pm(&a.orn_error, 1.0, 4),
        ],
    }
}

fn bucket_label(b: &Bucket) -> String {
    if b.lo == b.hi {
        b.lo.to_string()
    } else {
        format!("{}-{}", b.lo, b.hi)
    }
}

struct Table {
    title: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn tables(reports: &[EvalReport]) -> Vec<Table> {
    let header = |lead: &[&str]| -> Vec<String> { lead.iter().chain(COLUMNS.iter()).map(|s| s.to_string()).collect() };
    let mut overall = Table {
        title: "Overall".into(),
        header: header(&["planner"]),
        rows: Vec::new(),
    };
    let mut objects = Table {
        title: "By object count".into(),
        header: header(&["planner", "objects"]),
        rows: Vec::new(),
    };
    let mut levels = Table {
        title: "By level count".into(),
        header: header(&["planner", "levels"]),
        rows: Vec::new(),
    };
    for r in reports {
        let name = r.planner.name().to_string();
        let mut row = vec![name.clone()];
        row.extend(cells(Some(&r.overall)));
        overall.rows.push(row);
        for (t, buckets) in [(&mut objects, &r.by_objects), (&mut levels, &r.by_levels)] {
            for b in buckets {
                let mut row = vec![name.clone(), bucket_label(b)];
                row.extend(cells(b.metrics.as_ref()));
                t.rows.push(row);
            }
        }
    }
    vec![overall, objects, levels]
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Tables by planner, object-count bucket and level bucket. Buckets keep
/// their report order; empty buckets show a dash.
pub fn render(reports: &[EvalReport], format: Format) -> String {
    let mut out = String::new();
    for (k, t) in tables(reports).iter().enumerate() {
        match format {
            Format::Csv => {
                out.push_str(&format!("# {}\n", t.title));
                for row in std::iter::once(&t.header).chain(&t.rows) {
                    out.push_str(&row.iter().map(|c| csv_field(c)).collect::<Vec<_>>().join(","));
                    out.push('\n');
                }
            }
            Format::Text => {
                if k > 0 {
                    out.push('\n');
                }
                let widths: Vec<usize> = (0..t.header.len())
                    .map(|c| {
                        std::iter::once(&t.header)
                            .chain(&t.rows)
                            .map(|r| r[c].chars().count())
                            .max()
                            .unwrap_or(0)
                    })
                    .collect();
                let line = |row: &[String]| -> String {
                    row.iter()
                        .zip(&widths)
                        .map(|(c, w)| format!("{c:<w$}", w = *w))
                        .collect::<Vec<_>>()
                        .join("  ")
                        .trim_end()
                        .to_string()
                };
                out.push_str(&t.title);
                out.push('\n');
                out.push_str(&line(&t.header));
                out.push('\n');
                out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
                out.push('\n');
                for r in &t.rows {
                    out.push_str(&line(r));
                    out.push('\n');
                }
            }
        }
    }
    out
}
