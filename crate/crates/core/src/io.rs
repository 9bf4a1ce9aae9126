//! Dataset text files and model documents.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::constraint::{ConstraintMode, StateDependentConstraintModel, StateIndependentConstraint};
use crate::error::{CclError, Result};
use crate::nullspace::NullspaceComponentModel;
use crate::policy::{LwlPolicyModel, ParametricPolicyModel};
use crate::types::{DemonstrationSet, GroundTruth};

/// Serde adapter storing a matrix as `{rows, cols, data}` with `data` row by row.
pub mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    pub(super) struct Repr {
        rows: usize,
        cols: usize,
        data: Vec<Vec<f64>>,
    }

    pub(super) fn to_repr(m: &DMatrix<f64>) -> Repr {
        Repr {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }

    pub(super) fn from_repr(r: Repr) -> Result<DMatrix<f64>, String> {
        if r.data.len() != r.rows || r.data.iter().any(|row| row.len() != r.cols) {
            return Err(format!("matrix data does not match its declared {}x{} shape", r.rows, r.cols));
        }
        Ok(DMatrix::from_fn(r.rows, r.cols, |i, j| r.data[i][j]))
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        to_repr(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        from_repr(Repr::deserialize(d)?).map_err(D::Error::custom)
    }
}

/// [`matrix_rows`] for a list of matrices.
pub mod matrix_list {
    use nalgebra::DMatrix;
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    use super::matrix_rows::{from_repr, to_repr, Repr};

    pub fn serialize<S: Serializer>(ms: &[DMatrix<f64>], s: S) -> Result<S::Ok, S::Error> {
        ms.iter().map(to_repr).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DMatrix<f64>>, D::Error> {
        Vec::<Repr>::deserialize(d)?
            .into_iter()
            .map(|r| from_repr(r).map_err(D::Error::custom))
            .collect()
    }
}

/// Optional declared dimensions a dataset file must match.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DatasetSchema {
    pub dim_x: Option<usize>,
    pub dim_u: Option<usize>,
}

#[derive(Default)]
struct Layout {
    channels: BTreeMap<&'static str, Vec<(usize, usize)>>,
    group: Option<usize>,
}

const CHANNELS: [&str; 5] = ["x", "u", "pi", "v", "w"];

fn parse_header(header: &csv::StringRecord) -> Result<Layout> {
    let mut layout = Layout::default();
    for (col, name) in header.iter().enumerate() {
        let name = name.trim();
        if name == "k" {
            if layout.group.replace(col).is_some() {
                return Err(CclError::Row { row: 1, message: "duplicate column k".into() });
            }
            continue;
        }
        let parsed = CHANNELS.iter().find_map(|&c| {
            let idx = name.strip_prefix(c)?.parse::<usize>().ok()?;
            (idx >= 1).then_some((c, idx))
        });
        let Some((channel, idx)) = parsed else {
            return Err(CclError::Row {
                row: 1,
                message: format!("unrecognised column {name:?}"),
            });
        };
        layout.channels.entry(channel).or_default().push((idx, col));
    }
    for (channel, cols) in layout.channels.iter_mut() {
        cols.sort_unstable();
        if cols.iter().enumerate().any(|(i, &(idx, _))| idx != i + 1) {
            return Err(CclError::Row {
                row: 1,
                message: format!("columns {channel}1..{channel}{} are not contiguous and unique", cols.len()),
            });
        }
    }
    for required in ["x", "u"] {
        if !layout.channels.contains_key(required) {
            return Err(CclError::Row {
                row: 1,
                message: format!("missing {required} columns"),
            });
        }
    }
    let dim_u = layout.channels["u"].len();
    for truth in ["pi", "v", "w"] {
        if let Some(cols) = layout.channels.get(truth) {
            if cols.len() != dim_u {
                return Err(CclError::Row {
                    row: 1,
                    message: format!("{truth} has {} columns, u has {dim_u}", cols.len()),
                });
            }
        }
    }
    Ok(layout)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<DemonstrationSet> {
    load_dataset_with(path, &DatasetSchema::default())
}

/// Reads a dataset and checks it against declared dimensions. Errors from
/// the file body carry the 1-based line number, header being line 1.
pub fn load_dataset_with(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<DemonstrationSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CclError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let layout = parse_header(&header)?;
    let dim_x = layout.channels["x"].len();
    let dim_u = layout.channels["u"].len();
    if schema.dim_x.is_some_and(|d| d != dim_x) || schema.dim_u.is_some_and(|d| d != dim_u) {
        return Err(CclError::Dimension(format!(
            "file has dim_x={dim_x}, dim_u={dim_u}; expected {schema:?}"
        )));
    }

    let mut columns: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.len() != header.len() {
            return Err(CclError::Row {
                row,
                message: format!("{} fields, header has {}", record.len(), header.len()),
            });
        }
        for (&channel, cols) in &layout.channels {
            let dst = columns.entry(channel).or_default();
            for &(_, col) in cols {
                let token = &record[col];
                let v: f64 = token.parse().map_err(|_| CclError::Row {
                    row,
                    message: format!("non-numeric value {token:?} in column {}", &header[col]),
                })?;
                if !v.is_finite() {
                    return Err(CclError::Row {
                        row,
                        message: format!("non-finite value in column {}", &header[col]),
                    });
                }
                dst.push(v);
            }
        }
        let label = match layout.group {
            Some(col) => record[col].parse::<i64>().map_err(|_| CclError::Row {
                row,
                message: format!("group label {:?} is not an integer", &record[col]),
            })?,
            None => 0,
        };
        labels.push(label);
    }
    let n = labels.len();
    if n == 0 {
        return Err(CclError::InvalidInput(format!("{} has no samples", path.display())));
    }
    let take = |channel: &str, d: usize| {
        columns
            .get(channel)
            .map(|v| DMatrix::from_column_slice(d, n, v))
    };
    DemonstrationSet::new(
        take("x", dim_x).expect("required"),
        take("u", dim_u).expect("required"),
        &labels,
        GroundTruth {
            policy: take("pi", dim_u),
            task: take("v", dim_u),
            null: take("w", dim_u),
        },
    )
}

fn csv_error(path: &Path, e: csv::Error) -> CclError {
    let row = e.position().map(|p| p.line() as usize);
    match (e.kind(), row) {
        (csv::ErrorKind::Io(_), _) => CclError::io(path, std::io::Error::other(e.to_string())),
        (_, Some(row)) => CclError::Row { row, message: e.to_string() },
        _ => CclError::InvalidInput(e.to_string()),
    }
}

/// Writes every channel present, plus the group column `k`.
pub fn save_dataset(data: &DemonstrationSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| CclError::io(path, e))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    let mut channels: Vec<(&str, &DMatrix<f64>)> = vec![("x", data.states()), ("u", data.actions())];
    channels.extend(data.policy().map(|m| ("pi", m)));
    channels.extend(data.task_component().map(|m| ("v", m)));
    channels.extend(data.null_component().map(|m| ("w", m)));

    let mut header: Vec<String> = Vec::new();
    for (name, m) in &channels {
        header.extend((1..=m.nrows()).map(|i| format!("{name}{i}")));
    }
    header.push("k".into());
    let wrap = |e: csv::Error| CclError::io(path, std::io::Error::other(e.to_string()));
    writer.write_record(&header).map_err(wrap)?;
    for n in 0..data.len() {
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        for (_, m) in &channels {
            record.extend(m.column(n).iter().map(|v| v.to_string()));
        }
        record.push(data.group_ids()[n].to_string());
        writer.write_record(&record).map_err(wrap)?;
    }
    writer.flush().map_err(|e| CclError::io(path, e))
}

pub const MODEL_FORMAT: &str = "ccl-model";
pub const MODEL_VERSION: u32 = 1;

/// Any learned model.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Nhat(StateIndependentConstraint),
    /// Alpha or lambda, depending on the model's mode.
    StateDependent(StateDependentConstraintModel),
    Ncl(NullspaceComponentModel),
    PiParametric(ParametricPolicyModel),
    PiLwl(LwlPolicyModel),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Nhat(_) => "nhat",
            Model::StateDependent(m) => match m.mode {
                ConstraintMode::Alpha => "alpha",
                ConstraintMode::Lambda { .. } => "lambda",
            },
            Model::Ncl(_) => "ncl",
            Model::PiParametric(_) => "pi-parametric",
            Model::PiLwl(_) => "pi-lwl",
        }
    }

    /// State dimension, 0 for state-independent models.
    pub fn dim_x(&self) -> usize {
        match self {
            Model::Nhat(_) => 0,
            Model::StateDependent(m) => m.basis.dim_x(),
            Model::Ncl(m) => m.rbf.basis.dim_x(),
            Model::PiParametric(m) => m.basis.dim_x(),
            Model::PiLwl(m) => m.basis.dim_x(),
        }
    }

    pub fn dim_u(&self) -> usize {
        match self {
            Model::Nhat(m) => m.dim_u,
            Model::StateDependent(m) => m.dim_u,
            Model::Ncl(m) => m.dim_u(),
            Model::PiParametric(m) => m.dim_u(),
            Model::PiLwl(m) => m.dim_u(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Document {
    format: String,
    version: u32,
    kind: String,
    dim_x: usize,
    dim_u: usize,
    model: serde_json::Value,
}

pub fn model_to_string(model: &Model) -> Result<String> {
    let value = match model {
        Model::Nhat(m) => serde_json::to_value(m),
        Model::StateDependent(m) => serde_json::to_value(m),
        Model::Ncl(m) => serde_json::to_value(m),
        Model::PiParametric(m) => serde_json::to_value(m),
        Model::PiLwl(m) => serde_json::to_value(m),
    }
    .map_err(|e| CclError::ModelFormat(e.to_string()))?;
    let doc = Document {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        kind: model.kind().into(),
        dim_x: model.dim_x(),
        dim_u: model.dim_u(),
        model: value,
    };
    serde_json::to_string_pretty(&doc).map_err(|e| CclError::ModelFormat(e.to_string()))
}

pub fn model_from_str(text: &str) -> Result<Model> {
    let doc: Document = serde_json::from_str(text).map_err(|e| CclError::ModelFormat(e.to_string()))?;
    if doc.format != MODEL_FORMAT {
        return Err(CclError::ModelFormat(format!("unknown format tag {:?}", doc.format)));
    }
    if doc.version != MODEL_VERSION {
        return Err(CclError::VersionMismatch {
            found: doc.version,
            expected: MODEL_VERSION,
        });
    }
    fn body<T: serde::de::DeserializeOwned>(v: serde_json::Value) -> Result<T> {
        serde_json::from_value(v).map_err(|e| CclError::ModelFormat(e.to_string()))
    }
    let model = match doc.kind.as_str() {
        "nhat" => {
            let m: StateIndependentConstraint = body(doc.model)?;
            Model::Nhat(StateIndependentConstraint::new(m.dim_u, m.angles)?)
        }
        "alpha" | "lambda" => {
            let m: StateDependentConstraintModel = body(doc.model)?;
            Model::StateDependent(StateDependentConstraintModel::new(m.dim_u, m.basis, m.row_weights, m.mode)?)
        }
        "ncl" => {
            let m: NullspaceComponentModel = body(doc.model)?;
            Model::Ncl(NullspaceComponentModel::new(crate::math::RbfModel::new(m.rbf.basis, m.rbf.weights)?))
        }
        "pi-parametric" => {
            let m: ParametricPolicyModel = body(doc.model)?;
            Model::PiParametric(ParametricPolicyModel::new(m.basis, m.weights)?)
        }
        "pi-lwl" => {
            let m: LwlPolicyModel = body(doc.model)?;
            Model::PiLwl(LwlPolicyModel::new(m.basis, m.local)?)
        }
        other => return Err(CclError::ModelFormat(format!("unknown model kind {other:?}"))),
    };
    if model.kind() != doc.kind {
        return Err(CclError::ModelFormat(format!(
            "document says {:?} but the model is {:?}",
            doc.kind,
            model.kind()
        )));
    }
    if model.dim_x() != doc.dim_x || model.dim_u() != doc.dim_u {
        return Err(CclError::ModelFormat(format!(
            "declared dimensions {}x{} do not match the model's {}x{}",
            doc.dim_x,
            doc.dim_u,
            model.dim_x(),
            model.dim_u()
        )));
    }
    Ok(model)
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = model_to_string(model)?;
    let mut file = File::create(path).map_err(|e| CclError::io(path, e))?;
    file.write_all(text.as_bytes())
        .and_then(|_| file.write_all(b"\n"))
        .map_err(|e| CclError::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CclError::io(path, e))?;
    model_from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{RbfBasis, RbfModel};

    fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::File::create(&p).unwrap().write_all(text.as_bytes()).unwrap();
        p
    }

    #[test]
    fn four_columns_give_one_group() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", "x1,x2,u1,u2\n0,1,2,3\n4,5,6,7\n");
        let d = load_dataset(&p).unwrap();
        assert_eq!((d.len(), d.dim_x(), d.dim_u(), d.num_groups()), (2, 2, 2, 1));
        assert_eq!(d.actions()[(1, 1)], 7.0);
    }

    #[test]
    fn groups_are_relabelled() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", "x1,u1,u2,k\n0,1,2,2\n1,1,2,0\n2,3,4,2\n");
        let d = load_dataset(&p).unwrap();
        assert_eq!(d.num_groups(), 2);
        assert_eq!(d.group_ids(), &[1, 0, 1]);
    }

    #[test]
    fn bad_tokens_name_the_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", "x1,u1,u2\n0,1,2\n1,abc,2\n");
        match load_dataset(&p).unwrap_err() {
            CclError::Row { row, .. } => assert_eq!(row, 3),
            e => panic!("{e}"),
        }
        let p = write(&dir, "e.csv", "x1,u1,u2\n0,1,2\n1,2\n");
        assert!(matches!(load_dataset(&p).unwrap_err(), CclError::Row { row: 3, .. }));
        let p = write(&dir, "f.csv", "x1,u1,u2\n0,1,inf\n");
        assert!(matches!(load_dataset(&p).unwrap_err(), CclError::Row { row: 2, .. }));
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", "x1,u1,u2\n0,1,2\n");
        let schema = DatasetSchema {
            dim_x: Some(2),
            dim_u: None,
        };
        assert!(load_dataset_with(&p, &schema).is_err());
        let p = write(&dir, "e.csv", "x1,x3,u1\n0,1,2\n");
        assert!(load_dataset(&p).is_err());
    }

    #[test]
    fn model_round_trips() {
        let basis = RbfBasis::new(DMatrix::from_element(1, 1, 0.25), 0.5).unwrap();
        let models = [
            Model::Nhat(StateIndependentConstraint::new(2, vec![vec![0.6]]).unwrap()),
            Model::Ncl(NullspaceComponentModel::new(
                RbfModel::new(basis.clone(), DMatrix::zeros(1, 1)).unwrap(),
            )),
            Model::PiLwl(LwlPolicyModel::new(basis, vec![DMatrix::from_element(2, 2, 0.1 + 0.2)]).unwrap()),
        ];
        for m in models {
            let back = model_from_str(&model_to_string(&m).unwrap()).unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn unknown_kind_and_version_are_rejected() {
        let m = Model::Nhat(StateIndependentConstraint::new(2, vec![vec![0.1]]).unwrap());
        let text = model_to_string(&m).unwrap();
        let unknown = text.replace("\"nhat\"", "\"mystery\"");
        assert!(matches!(model_from_str(&unknown), Err(CclError::ModelFormat(_))));
        let old = text.replace("\"version\": 1", "\"version\": 7");
        assert!(matches!(
            model_from_str(&old),
            Err(CclError::VersionMismatch { found: 7, .. })
        ));
    }
}
