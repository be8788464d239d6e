//! Text reports: `key: value` lines for people, followed by a JSON block
//! for tools. Every number is printed with Rust's locale-independent
//! shortest round-trip formatting.

use serde_json::{json, Map, Value};
use volreg::metrics::{histogram_edges, DistanceStats, FoldingStats, MetricsReport};
use volreg::LossReport;

/// Separates the human-readable lines from the JSON block.
pub const JSON_MARKER: &str = "--- json ---";

#[derive(Debug, Default)]
pub struct Report {
    lines: Vec<(String, String)>,
    json: Map<String, Value>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        let mut r = Self::default();
        r.both("tool", format!("volreg {}", env!("CARGO_PKG_VERSION")));
        r.both("command", command);
        r
    }

    pub fn line(&mut self, key: &str, value: impl ToString) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    pub fn set(&mut self, key: &str, value: Value) {
        self.json.insert(key.to_string(), value);
    }

    /// Same value in both sections.
    pub fn both<T: ToString + Into<Value>>(&mut self, key: &str, value: T) {
        self.line(key, value.to_string());
        self.set(key, value.into());
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.lines {
            s.push_str(k);
            s.push_str(": ");
            s.push_str(v);
            s.push('\n');
        }
        s.push_str(JSON_MARKER);
        s.push('\n');
        s.push_str(&serde_json::to_string_pretty(&Value::Object(self.json.clone())).expect("JSON values always serialize"));
        s.push('\n');
        s
    }
}

/// The JSON block of a rendered report.
#[cfg(test)]
pub fn parse_json_block(text: &str) -> Option<Value> {
    let (_, block) = text.split_once(&format!("{JSON_MARKER}\n"))?;
    serde_json::from_str(block).ok()
}

pub fn loss_json(l: &LossReport) -> Value {
    json!({
        "total": l.total,
        "distance": l.distance,
        "curvature": l.curvature,
        "vcc": l.vcc,
        "mask": l.mask,
        "keypoint": l.keypoint,
        "folding_fraction": l.folding_fraction,
    })
}

pub fn stats_json(s: &DistanceStats) -> Value {
    json!({ "mean": s.mean, "std": s.std, "p25": s.p25, "p50": s.p50, "p75": s.p75, "max": s.max })
}

fn opt<T: Into<Value>>(v: Option<T>) -> Value {
    v.map_or(Value::Null, Into::into)
}

pub fn folding_json(f: &FoldingStats) -> Value {
    json!({
        "fraction": f.fraction,
        "min": f.min,
        "max": f.max,
        "nonpositive": f.underflow,
        "counted": f.counted,
        "histogram_edges": histogram_edges(),
        "histogram": f.histogram,
    })
}

pub fn add_folding(r: &mut Report, f: &FoldingStats) {
    r.line("folding_fraction", f.fraction);
    r.line("nonpositive_voxels", f.underflow);
    r.line("det_min", f.min);
    r.line("det_max", f.max);
    r.set("folding", folding_json(f));
}

pub fn add_metrics(r: &mut Report, m: &MetricsReport) {
    for l in &m.labels {
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| v.to_string());
        r.line(&format!("label_{}", l.label), format!("dice {} asd_mm {} hd_mm {}", l.dice, fmt(l.asd), fmt(l.hausdorff)));
    }
    if let Some(d) = m.mean_dice {
        r.line("mean_dice", d);
    }
    if let Some(a) = m.mean_asd {
        r.line("mean_asd_mm", a);
    }
    if let Some(h) = m.mean_hausdorff {
        r.line("mean_hausdorff_mm", h);
    }
    if let (Some(t0), Some(t)) = (&m.initial_tre, &m.tre) {
        r.line("initial_tre_mm", t0.mean);
        r.line("tre_mm", t.mean);
        r.line("tre_std_mm", t.std);
    }
    add_folding(r, &m.folding);
    let labels: Vec<Value> = m
        .labels
        .iter()
        .map(|l| json!({ "label": l.label, "dice": l.dice, "asd": opt(l.asd), "hausdorff": opt(l.hausdorff) }))
        .collect();
    r.set(
        "metrics",
        json!({
            "labels": labels,
            "mean_dice": opt(m.mean_dice),
            "mean_asd": opt(m.mean_asd),
            "mean_hausdorff": opt(m.mean_hausdorff),
            "tre": m.tre.as_ref().map_or(Value::Null, stats_json),
            "initial_tre": m.initial_tre.as_ref().map_or(Value::Null, stats_json),
        }),
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_and_parse() {
        let mut r = Report::new("test");
        r.line("x", 0.1);
        r.set("y", json!([1.5, f64::NAN]));
        let text = r.render();
        assert!(text.starts_with(&format!("tool: volreg {}\ncommand: test\nx: 0.1\n{JSON_MARKER}\n", env!("CARGO_PKG_VERSION"))));
        let v = parse_json_block(&text).unwrap();
        assert_eq!(v["command"], "test");
        assert_eq!(v["y"], json!([1.5, null]));
    }
}
