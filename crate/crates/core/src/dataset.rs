//! Columnar storage for responses, covariates and per-row model parameters.
//!
//! Float columns are `f64`, integer columns `i64`, categorical columns are
//! dictionary encoded as `i32` codes into a level table. A dataset is
//! immutable once built.

use std::borrow::Cow;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::distributions::Family;
use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 4] = b"GDG1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Response,
    Covariate,
    Param,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Float,
    Integer,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnSpec {
    pub role: Role,
    pub kind: Kind,
}

/// Column name to role/kind map used when loading files.
#[derive(Debug, Clone, Default)]
pub struct Schema {
    entries: Vec<(String, ColumnSpec)>,
}

impl Schema {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, role: Role, kind: Kind) -> Self {
        self.entries.push((name.into(), ColumnSpec { role, kind }));
        self
    }

    pub fn response(self, name: impl Into<String>) -> Self {
        self.with(name, Role::Response, Kind::Float)
    }

    pub fn covariate(self, name: impl Into<String>) -> Self {
        self.with(name, Role::Covariate, Kind::Float)
    }

    pub fn factor(self, name: impl Into<String>) -> Self {
        self.with(name, Role::Covariate, Kind::Categorical)
    }

    pub fn param(self, name: impl Into<String>) -> Self {
        self.with(name, Role::Param, Kind::Float)
    }

    /// Schema for a header: `response` plus the family parameters, everything
    /// else a covariate (categorical when listed in `factors`).
    pub fn for_header(header: &[String], response: &str, family: Family, factors: &[String]) -> Self {
        let params = family.param_names();
        let mut schema = Schema::new().response(response);
        for p in params {
            schema = schema.param(*p);
        }
        for h in header {
            if h == response || params.contains(&h.as_str()) {
                continue;
            }
            schema = if factors.contains(h) {
                schema.factor(h.clone())
            } else {
                schema.covariate(h.clone())
            };
        }
        schema
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, ColumnSpec)> {
        self.entries.iter().map(|(n, s)| (n.as_str(), *s))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Float(Vec<f64>),
    Integer(Vec<i64>),
    Categorical { codes: Vec<i32>, levels: Vec<String> },
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Float(v) => v.len(),
            ColumnData::Integer(v) => v.len(),
            ColumnData::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn kind_name(&self) -> &'static str {
        match self {
            ColumnData::Float(_) => "float",
            ColumnData::Integer(_) => "integer",
            ColumnData::Categorical { .. } => "categorical",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub role: Role,
    pub data: ColumnData,
}

/// Read-only view of one column.
#[derive(Debug, Clone, Copy)]
pub enum ColumnView<'a> {
    Float(&'a [f64]),
    Integer(&'a [i64]),
    Categorical { codes: &'a [i32], levels: &'a [String] },
}

impl ColumnView<'_> {
    pub fn len(&self) -> usize {
        match self {
            ColumnView::Float(v) => v.len(),
            ColumnView::Integer(v) => v.len(),
            ColumnView::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ColumnInfo {
    pub name: String,
    pub role: Role,
    pub kind: Kind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticDataset {
    n: usize,
    columns: Vec<Column>,
    index: HashMap<String, usize>,
}

impl DiagnosticDataset {
    /// Builds a dataset from complete columns, checking lengths and that the
    /// response and parameter columns hold no NaN.
    pub fn from_columns(columns: Vec<Column>) -> Result<Self> {
        let n = columns.first().map(|c| c.data.len()).unwrap_or(0);
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut index = HashMap::with_capacity(columns.len());
        for (i, c) in columns.iter().enumerate() {
            if c.data.len() != n {
                return Err(Error::Schema {
                    column: c.name.clone(),
                    reason: format!("has {} rows, expected {n}", c.data.len()),
                });
            }
            if c.role != Role::Covariate {
                if let ColumnData::Float(v) = &c.data {
                    if let Some(row) = v.iter().position(|x| !x.is_finite()) {
                        return Err(Error::Parse {
                            row: row + 1,
                            column: c.name.clone(),
                            value: v[row].to_string(),
                        });
                    }
                }
            }
            if index.insert(c.name.clone(), i).is_some() {
                return Err(Error::Schema {
                    column: c.name.clone(),
                    reason: "appears twice".into(),
                });
            }
        }
        Ok(Self { n, columns, index })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_info(&self) -> Vec<ColumnInfo> {
        self.columns
            .iter()
            .map(|c| ColumnInfo {
                name: c.name.clone(),
                role: c.role,
                kind: match c.data {
                    ColumnData::Float(_) => Kind::Float,
                    ColumnData::Integer(_) => Kind::Integer,
                    ColumnData::Categorical { .. } => Kind::Categorical,
                },
            })
            .collect()
    }

    fn get(&self, name: &str) -> Result<&Column> {
        self.index
            .get(name)
            .map(|&i| &self.columns[i])
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<ColumnView<'_>> {
        Ok(match &self.get(name)?.data {
            ColumnData::Float(v) => ColumnView::Float(v),
            ColumnData::Integer(v) => ColumnView::Integer(v),
            ColumnData::Categorical { codes, levels } => ColumnView::Categorical { codes, levels },
        })
    }

    pub fn role(&self, name: &str) -> Result<Role> {
        Ok(self.get(name)?.role)
    }

    /// Column as `f64`; integer values and categorical codes are widened.
    pub fn numeric(&self, name: &str) -> Result<Cow<'_, [f64]>> {
        Ok(match self.column(name)? {
            ColumnView::Float(v) => Cow::Borrowed(v),
            ColumnView::Integer(v) => Cow::Owned(v.iter().map(|&x| x as f64).collect()),
            ColumnView::Categorical { codes, .. } => {
                Cow::Owned(codes.iter().map(|&c| c as f64).collect())
            }
        })
    }

    fn float(&self, name: &str) -> Result<&[f64]> {
        match &self.get(name)?.data {
            ColumnData::Float(v) => Ok(v),
            other => Err(Error::ColumnType {
                column: name.to_string(),
                expected: "float",
                found: other.kind_name(),
            }),
        }
    }

    pub fn response(&self) -> Result<&[f64]> {
        let c = self
            .columns
            .iter()
            .find(|c| c.role == Role::Response)
            .ok_or_else(|| Error::Schema {
                column: "<response>".into(),
                reason: "no column has the response role".into(),
            })?;
        self.float(&c.name)
    }

    pub fn covariate_names(&self) -> Vec<&str> {
        self.columns
            .iter()
            .filter(|c| c.role == Role::Covariate)
            .map(|c| c.name.as_str())
            .collect()
    }

    /// Parameter columns for `family`, in [`Family::param_names`] order.
    pub fn params(&self, family: Family) -> Result<Vec<&[f64]>> {
        family
            .param_names()
            .iter()
            .map(|name| {
                let col = self.get(name).map_err(|_| Error::Schema {
                    column: (*name).to_string(),
                    reason: format!("required by the {family} family is missing"),
                })?;
                if col.role != Role::Param {
                    return Err(Error::Schema {
                        column: (*name).to_string(),
                        reason: "must have the model-parameter role".into(),
                    });
                }
                self.float(name)
            })
            .collect()
    }

    /// Writes every column as CSV; floats use shortest round-trip formatting.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv_to(File::create(path)?)
    }

    /// CSV with a header row; floats use the shortest round-trip form.
    pub fn write_csv_to(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        let mut record = Vec::with_capacity(self.columns.len());
        for row in 0..self.n {
            record.clear();
            for c in &self.columns {
                record.push(match &c.data {
                    ColumnData::Float(v) => v[row].to_string(),
                    ColumnData::Integer(v) => v[row].to_string(),
                    ColumnData::Categorical { codes, levels } => levels[codes[row] as usize].clone(),
                });
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(BINARY_MAGIC)?;
        for c in &self.columns {
            w.write_all(&(c.name.len() as u32).to_le_bytes())?;
            w.write_all(c.name.as_bytes())?;
            let dtype: u8 = match c.data {
                ColumnData::Float(_) => 0,
                ColumnData::Integer(_) => 1,
                ColumnData::Categorical { .. } => 2,
            };
            w.write_all(&[dtype])?;
            w.write_all(&(self.n as u64).to_le_bytes())?;
            match &c.data {
                ColumnData::Float(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
                ColumnData::Integer(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
                ColumnData::Categorical { codes, levels } => {
                    codes.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?;
                    w.write_all(&(levels.len() as u32).to_le_bytes())?;
                    for l in levels {
                        w.write_all(&(l.len() as u32).to_le_bytes())?;
                        w.write_all(l.as_bytes())?;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Loads a CSV file (header required) using `schema` to pick and type columns.
/// Columns absent from the schema are ignored.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<DiagnosticDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();

    let mut builders = Vec::new();
    for (name, spec) in schema.entries() {
        let pos = header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema {
                column: name.to_string(),
                reason: "is missing from the file header".into(),
            })?;
        builders.push((pos, ColumnBuilder::new(name, spec)));
    }

    let mut record = csv::StringRecord::new();
    let mut row = 0;
    while reader.read_record(&mut record)? {
        row += 1;
        for (pos, b) in builders.iter_mut() {
            b.push(record.get(*pos).unwrap_or(""), row)?;
        }
    }
    if row == 0 {
        return Err(Error::EmptyDataset);
    }
    DiagnosticDataset::from_columns(builders.into_iter().map(|(_, b)| b.finish()).collect())
}

/// Loads the little-endian binary column format written by
/// [`DiagnosticDataset::write_binary`].
pub fn load_binary(path: impl AsRef<Path>, schema: &Schema) -> Result<DiagnosticDataset> {
    select_binary(read_binary(path)?, schema)
}

/// Loads a CSV or binary column file (detected by its magic bytes) with
/// roles inferred from the family: see [`Schema::for_header`].
pub fn load_for_family(
    path: impl AsRef<Path>,
    response: &str,
    family: Family,
    factors: &[String],
) -> Result<DiagnosticDataset> {
    let path = path.as_ref();
    let mut magic = [0u8; 4];
    let is_binary = File::open(path)?.read_exact(&mut magic).is_ok() && &magic == BINARY_MAGIC;
    if is_binary {
        let cols = read_binary(path)?;
        let header: Vec<String> = cols.iter().map(|c| c.0.clone()).collect();
        return select_binary(cols, &Schema::for_header(&header, response, family, factors));
    }
    let header: Vec<String> = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?
        .headers()?
        .iter()
        .map(str::to_string)
        .collect();
    load_csv(path, &Schema::for_header(&header, response, family, factors))
}

fn select_binary(cols: Vec<(String, ColumnData)>, schema: &Schema) -> Result<DiagnosticDataset> {
    let mut found: HashMap<String, ColumnData> = cols.into_iter().collect();
    let mut columns = Vec::new();
    for (name, spec) in schema.entries() {
        let data = found.remove(name).ok_or_else(|| Error::Schema {
            column: name.to_string(),
            reason: "is missing from the binary file".into(),
        })?;
        columns.push(Column {
            name: name.to_string(),
            role: spec.role,
            data,
        });
    }
    DiagnosticDataset::from_columns(columns)
}

fn read_binary(path: impl AsRef<Path>) -> Result<Vec<(String, ColumnData)>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut found = Vec::new();
    loop {
        let mut len = [0u8; 4];
        match r.read_exact(&mut len) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let name = read_string(&mut r, u32::from_le_bytes(len) as usize)?;
        let dtype = read_array::<1>(&mut r)?[0];
        let n = u64::from_le_bytes(read_array(&mut r)?) as usize;
        let data = match dtype {
            0 => ColumnData::Float(
                (0..n)
                    .map(|_| read_array(&mut r).map(f64::from_le_bytes))
                    .collect::<Result<_>>()?,
            ),
            1 => ColumnData::Integer(
                (0..n)
                    .map(|_| read_array(&mut r).map(i64::from_le_bytes))
                    .collect::<Result<_>>()?,
            ),
            2 => {
                let codes: Vec<i32> = (0..n)
                    .map(|_| read_array(&mut r).map(i32::from_le_bytes))
                    .collect::<Result<_>>()?;
                let count = u32::from_le_bytes(read_array(&mut r)?) as usize;
                let levels = (0..count)
                    .map(|_| {
                        let l = u32::from_le_bytes(read_array(&mut r)?) as usize;
                        read_string(&mut r, l)
                    })
                    .collect::<Result<Vec<_>>>()?;
                if codes.iter().any(|&c| c < 0 || c as usize >= levels.len()) {
                    return Err(Error::Format(format!("column `{name}` has out-of-range codes")));
                }
                ColumnData::Categorical { codes, levels }
            }
            other => return Err(Error::Format(format!("unknown dtype byte {other}"))),
        };
        found.push((name, data));
    }
    Ok(found)
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_string(r: &mut impl Read, len: usize) -> Result<String> {
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::Format("column name is not UTF-8".into()))
}

struct ColumnBuilder {
    name: String,
    spec: ColumnSpec,
    floats: Vec<f64>,
    ints: Vec<i64>,
    codes: Vec<i32>,
    levels: Vec<String>,
    lookup: HashMap<String, i32>,
}

impl ColumnBuilder {
    fn new(name: &str, spec: ColumnSpec) -> Self {
        Self {
            name: name.to_string(),
            spec,
            floats: Vec::new(),
            ints: Vec::new(),
            codes: Vec::new(),
            levels: Vec::new(),
            lookup: HashMap::new(),
        }
    }

    fn parse_error(&self, row: usize, value: &str) -> Error {
        Error::Parse {
            row,
            column: self.name.clone(),
            value: value.to_string(),
        }
    }

    fn push(&mut self, field: &str, row: usize) -> Result<()> {
        match self.spec.kind {
            Kind::Float => {
                let missing = matches!(field, "" | "NA" | "NaN" | "nan");
                let v = if missing && self.spec.role == Role::Covariate {
                    f64::NAN
                } else {
                    match field.parse::<f64>() {
                        Ok(v) if v.is_finite() => v,
                        _ => return Err(self.parse_error(row, field)),
                    }
                };
                self.floats.push(v);
            }
            Kind::Integer => {
                let v = field
                    .parse::<i64>()
                    .map_err(|_| self.parse_error(row, field))?;
                self.ints.push(v);
            }
            Kind::Categorical => {
                let next = self.levels.len() as i32;
                let code = *self.lookup.entry(field.to_string()).or_insert(next);
                if code == next {
                    self.levels.push(field.to_string());
                }
                self.codes.push(code);
            }
        }
        Ok(())
    }

    fn finish(self) -> Column {
        let data = match self.spec.kind {
            Kind::Float => ColumnData::Float(self.floats),
            Kind::Integer => ColumnData::Integer(self.ints),
            Kind::Categorical => ColumnData::Categorical {
                codes: self.codes,
                levels: self.levels,
            },
        };
        Column {
            name: self.name,
            role: self.spec.role,
            data,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn schema() -> Schema {
        Schema::new()
            .response("y")
            .covariate("x1")
            .param("mu")
            .param("sigma")
    }

    #[test]
    fn loads_three_rows() {
        let f = write("y,x1,mu,sigma\n1,2,0,1\n2,3,0,1\n3.5,4,0.5,2\n");
        let ds = load_csv(f.path(), &schema()).unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.columns().len(), 4);
        assert_eq!(ds.column("x1").unwrap().len(), 3);
        assert_eq!(ds.response().unwrap(), &[1.0, 2.0, 3.5]);
        assert_eq!(ds.params(Family::Gaussian).unwrap()[1], &[1.0, 1.0, 2.0]);
    }

    #[test]
    fn missing_column_is_schema_error() {
        let f = write("y,x1,mu\n1,2,0\n");
        match load_csv(f.path(), &schema()) {
            Err(Error::Schema { column, .. }) => assert_eq!(column, "sigma"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn bad_cell_reports_row() {
        let f = write("y,x1,mu,sigma\nabc,2,0,1\n");
        match load_csv(f.path(), &schema()) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 1);
                assert_eq!(column, "y");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file() {
        let f = write("y,x1,mu,sigma\n");
        assert!(matches!(load_csv(f.path(), &schema()), Err(Error::EmptyDataset)));
    }

    #[test]
    fn nan_only_in_covariates() {
        let f = write("y,x1,mu,sigma\n1,NA,0,1\n");
        let ds = load_csv(f.path(), &schema()).unwrap();
        assert!(ds.numeric("x1").unwrap()[0].is_nan());
        let f = write("y,x1,mu,sigma\nNA,1,0,1\n");
        assert!(load_csv(f.path(), &schema()).is_err());
    }

    #[test]
    fn categorical_codes() {
        let f = write("y,day,mu,sigma\n1,mon,0,1\n2,tue,0,1\n3,mon,0,1\n");
        let s = Schema::new().response("y").factor("day").param("mu").param("sigma");
        let ds = load_csv(f.path(), &s).unwrap();
        match ds.column("day").unwrap() {
            ColumnView::Categorical { codes, levels } => {
                assert_eq!(codes, &[0, 1, 0]);
                assert_eq!(levels, &["mon".to_string(), "tue".to_string()]);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(ds.column("nope"), Err(Error::UnknownColumn(_))));
    }

    #[test]
    fn binary_round_trip() {
        let f = write("y,day,mu,sigma\n0.1,mon,1e-300,1\n2,tue,0,1.5\n");
        let s = Schema::new().response("y").factor("day").param("mu").param("sigma");
        let ds = load_csv(f.path(), &s).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        ds.write_binary(out.path()).unwrap();
        let back = load_binary(out.path(), &s).unwrap();
        assert_eq!(ds, back);
    }
}
