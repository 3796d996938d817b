use trace_core::pipeline::cache::CacheState;
use trace_core::pipeline::{StatusReport, BUNDLE_DIR};

fn state_text(s: &CacheState) -> String {
    match s {
        CacheState::Present => "present".into(),
        CacheState::Missing => "missing".into(),
        CacheState::Stale => "stale".into(),
        CacheState::Corrupt(why) => format!("corrupt ({why})"),
    }
}

fn params_text(params: &trace_core::model::Params) -> String {
    params
        .iter()
        .map(|(k, v)| match v {
            serde_json::Value::String(s) => format!("{k}={s}"),
            other => format!("{k}={other}"),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Fixed-width table: one line per graph and per column.
pub(crate) fn status_table(report: &StatusReport) -> String {
    let mut rows: Vec<[String; 4]> = vec![[
        "STATE".into(),
        "SPACE".into(),
        "ENTRY".into(),
        "PARAMS".into(),
    ]];
    for g in &report.graphs {
        rows.push([
            state_text(&g.state),
            g.space_id.clone(),
            "knn_graph".into(),
            format!("k={} exactness={}", g.k, g.exactness.as_str()),
        ]);
    }
    for c in &report.columns {
        rows.push([
            state_text(&c.state),
            c.embedding.clone().unwrap_or_else(|| BUNDLE_DIR.into()),
            c.metric_name.as_str().into(),
            params_text(&c.params),
        ]);
    }
    let widths: Vec<usize> = (0..3)
        .map(|i| rows.iter().map(|r| r[i].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in &rows {
        out.push_str(&format!(
            "{:w0$}  {:w1$}  {:w2$}  {}\n",
            r[0],
            r[1],
            r[2],
            r[3],
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2]
        ));
    }
    for w in &report.warnings {
        out.push_str(&format!("warning: {w}\n"));
    }
    let incomplete = report.incomplete();
    out.push_str(&format!(
        "{} of {} entries present\n",
        report.graphs.len() + report.columns.len() - incomplete,
        report.graphs.len() + report.columns.len()
    ));
    out
}
