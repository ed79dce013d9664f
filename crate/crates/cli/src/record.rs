use fraclab_core::{Estimate, Params, QuadSpec};
use serde::Serialize;
use serde_json::Value;

pub const VERSION: &str = concat!("fraclab ", env!("CARGO_PKG_VERSION"));

/// One output record; the JSON form is checked against `schema/record.schema.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Record {
    pub op: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub params: Option<Params>,
    pub quad: QuadSpec,
    pub value: Option<f64>,
    pub error: Option<f64>,
    pub evals: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
}

impl Record {
    pub fn new(op: &'static str, params: Option<Params>, quad: &QuadSpec) -> Self {
        Self {
            op,
            version: VERSION,
            seed: quad.seed,
            params,
            quad: *quad,
            value: None,
            error: None,
            evals: None,
            result: None,
        }
    }

    pub fn with_estimate(mut self, e: &Estimate) -> Self {
        self.value = Some(e.value);
        self.error = Some(e.error);
        self.evals = Some(e.evals);
        self
    }

    pub fn with_result(mut self, v: Value) -> Self {
        self.result = Some(v);
        self
    }
}

/// What a subcommand hands back for writing.
pub struct Output {
    pub records: Vec<Record>,
    pub csv: String,
}

impl std::fmt::Debug for Output {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Output({} records)", self.records.len())
    }
}

impl Output {
    pub fn json_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }
}

pub fn csv_table(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory write")).expect("csv is utf-8")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
