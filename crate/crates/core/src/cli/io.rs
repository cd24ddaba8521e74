//! CSV datasets (`x1..xp,output,y`), provenance headers and the JSON model file.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cli::CliError;
use crate::data::Dataset;
use crate::inference::lbfgs::{Termination, TraceEntry};
use crate::inference::train::RestartReport;
use crate::kernels::KernelParams;
use crate::model::ModelSpec;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Comment lines written at the top of every artifact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub extra: Vec<(String, String)>,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>) -> Self {
        Self {
            config_hash: config_hash.into(),
            extra: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.extra.push((key.to_string(), value.to_string()));
        self
    }

    pub fn write(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "# tool: ncmogp {TOOL_VERSION}")?;
        writeln!(out, "# config-sha256: {}", self.config_hash)?;
        for (k, v) in &self.extra {
            writeln!(out, "# {k}: {v}")?;
        }
        Ok(())
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Renders a dataset as CSV with a provenance header.
pub fn dataset_csv(data: &Dataset, provenance: &Provenance) -> Vec<u8> {
    let mut out = Vec::new();
    provenance.write(&mut out).expect("write to memory");
    let header: Vec<String> = (1..=data.input_dim())
        .map(|q| format!("x{q}"))
        .chain(["output".to_string(), "y".to_string()])
        .collect();
    writeln!(out, "{}", header.join(",")).expect("write to memory");
    for (d, (xs, ys)) in data.inputs().iter().zip(data.targets()).enumerate() {
        for (x, y) in xs.iter().zip(ys) {
            let mut fields: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            fields.push(d.to_string());
            fields.push(y.to_string());
            writeln!(out, "{}", fields.join(",")).expect("write to memory");
        }
    }
    out
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| io_error(path, e))
}

pub fn write_dataset(path: &Path, data: &Dataset, provenance: &Provenance) -> Result<(), CliError> {
    write_file(path, &dataset_csv(data, provenance))
}

/// Options for [`parse_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Schema {
    /// Number of outputs; inferred as `max(output) + 1` when `None`.
    pub outputs: Option<usize>,
    /// Accept outputs without any observed value (test sets).
    pub allow_empty_outputs: bool,
}

struct Row {
    x: Vec<f64>,
    output: usize,
    y: Option<f64>,
}

/// Reads `x1..xp,output,y` rows, skipping `#` comment lines. Returns the input
/// dimension and the rows in file order; an empty `y` field gives `None`.
fn parse_rows(reader: impl BufRead, outputs: Option<usize>) -> Result<(usize, Vec<Row>), CliError> {
    let mut csv = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| CliError::Data(format!("header: {e}")))?
        .clone();
    let names: Vec<&str> = headers.iter().collect();
    let p = names.len().saturating_sub(2);
    let expected: Vec<String> = (1..=p)
        .map(|q| format!("x{q}"))
        .chain(["output".into(), "y".into()])
        .collect();
    if p == 0 || names != expected {
        return Err(CliError::Data(format!(
            "header must be x1..xp,output,y; found {}",
            names.join(",")
        )));
    }
    let mut rows = Vec::new();
    for record in csv.records() {
        let record = record.map_err(|e| CliError::Data(format!("malformed row: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |msg: String| CliError::Data(format!("line {line}: {msg}"));
        let number = |i: usize| -> Result<f64, CliError> {
            let v: f64 = record[i]
                .parse()
                .map_err(|_| bad(format!("column {} is not a number: {:?}", names[i], &record[i])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad(format!("column {} is not finite", names[i])))
            }
        };
        let x = (0..p).map(number).collect::<Result<Vec<f64>, _>>()?;
        let output: usize = record[p]
            .parse()
            .map_err(|_| bad(format!("output id {:?} is not a non-negative integer", &record[p])))?;
        if let Some(n) = outputs.filter(|&n| output >= n) {
            return Err(bad(format!("output {output} out of range for {n} outputs")));
        }
        let y = if record[p + 1].is_empty() {
            None
        } else {
            Some(number(p + 1)?)
        };
        rows.push(Row { x, output, y });
    }
    if rows.is_empty() {
        return Err(CliError::Data("no rows".into()));
    }
    Ok((p, rows))
}

fn output_count(rows: &[Row], outputs: Option<usize>) -> usize {
    outputs.unwrap_or_else(|| rows.iter().map(|r| r.output + 1).max().unwrap_or(0))
}

/// Parses `x1..xp,output,y`. Lines starting with `#` are ignored. An empty `y`
/// marks a missing observation and the row is skipped; rows keep file order
/// within each output.
pub fn parse_dataset(reader: impl BufRead, schema: Schema) -> Result<Dataset, CliError> {
    let (p, rows) = parse_rows(reader, schema.outputs)?;
    let n = output_count(&rows, schema.outputs);
    let mut inputs: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n];
    let mut targets: Vec<Vec<f64>> = vec![Vec::new(); n];
    for row in rows {
        if let Some(y) = row.y {
            inputs[row.output].push(row.x);
            targets[row.output].push(y);
        }
    }
    if !schema.allow_empty_outputs {
        if let Some(d) = targets.iter().position(Vec::is_empty) {
            return Err(CliError::Data(format!("output {d} has no observations")));
        }
    }
    Ok(Dataset::new(p, inputs, targets)?)
}

/// Input points grouped by output.
pub type InputsPerOutput = Vec<Vec<Vec<f64>>>;

/// Input locations per output from a dataset-format file; `y` is ignored and may be empty.
pub fn parse_inputs(reader: impl BufRead, outputs: usize) -> Result<(usize, InputsPerOutput), CliError> {
    let (p, rows) = parse_rows(reader, Some(outputs))?;
    let mut inputs: InputsPerOutput = vec![Vec::new(); outputs];
    for row in rows {
        inputs[row.output].push(row.x);
    }
    Ok((p, inputs))
}

pub fn read_inputs(path: &Path, outputs: usize) -> Result<(usize, InputsPerOutput), CliError> {
    let file = std::fs::File::open(path).map_err(|e| io_error(path, e))?;
    parse_inputs(std::io::BufReader::new(file), outputs).map_err(|e| in_file(path, e))
}

fn in_file(path: &Path, e: CliError) -> CliError {
    match e {
        CliError::Data(msg) => CliError::Data(format!("{}: {msg}", path.display())),
        other => other,
    }
}

pub fn read_dataset(path: &Path, schema: Schema) -> Result<Dataset, CliError> {
    let file = std::fs::File::open(path).map_err(|e| io_error(path, e))?;
    parse_dataset(std::io::BufReader::new(file), schema).map_err(|e| in_file(path, e))
}

pub const MODEL_FORMAT: &str = "ncmogp-model";
pub const MODEL_VERSION: u32 = 1;

/// Everything needed to reproduce predictions from a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub spec: ModelSpec,
    pub params: KernelParams,
    pub theta: Vec<f64>,
    /// `-log p(y)` at `theta`.
    pub objective: f64,
    pub best_restart: usize,
    pub termination: Termination,
    pub trace: Vec<TraceEntry>,
    pub restarts: Vec<RestartReport>,
    pub train: Dataset,
}

impl ModelFile {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let m: Self = serde_json::from_str(text).map_err(|e| CliError::Config(format!("model file: {e}")))?;
        if m.format != MODEL_FORMAT || m.version != MODEL_VERSION {
            return Err(CliError::Config(format!(
                "unsupported model file {} v{} (expected {MODEL_FORMAT} v{MODEL_VERSION})",
                m.format, m.version
            )));
        }
        m.spec.check_params(&m.params)?;
        let train = &m.train;
        Dataset::new(train.input_dim(), train.inputs().to_vec(), train.targets().to_vec())?;
        if train.num_outputs() != m.spec.outputs || train.input_dim() != m.spec.input_dim {
            return Err(CliError::Config(
                "model file: training data does not match the model spec".into(),
            ));
        }
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_file(path, self.to_json().as_bytes())
    }
}
