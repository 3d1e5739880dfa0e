//! CSV ingestion with declared column roles and transforms, and the curve
//! output table `name,y,value,lower,upper,rejected`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::dataset::{Dataset, EvalPoint};
use crate::driver::CdfCurve;
use crate::error::{DrError, Result};
use crate::inference::BandResult;
use crate::monotone::MonotoneCurve;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transform {
    Identity,
    Log,
    Square,
}

impl Transform {
    /// Applies the transform, rejecting values outside its domain.
    pub fn apply(self, v: f64) -> std::result::Result<f64, String> {
        match self {
            Transform::Identity => Ok(v),
            Transform::Square => Ok(v * v),
            Transform::Log if v > 0.0 => Ok(v.ln()),
            Transform::Log => Err(format!("log of nonpositive value {v}")),
        }
    }
}

/// A source column with a transform, written `name`, `log(name)`,
/// `square(name)` or `name^2`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ColumnRef {
    pub source: String,
    pub transform: Transform,
}

impl ColumnRef {
    pub fn plain(source: &str) -> Self {
        Self { source: source.to_string(), transform: Transform::Identity }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.transform {
            Transform::Identity => write!(f, "{}", self.source),
            Transform::Log => write!(f, "log({})", self.source),
            Transform::Square => write!(f, "square({})", self.source),
        }
    }
}

impl FromStr for ColumnRef {
    type Err = DrError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let wrapped = |prefix: &str| {
            s.strip_prefix(prefix).and_then(|r| r.strip_suffix(')')).map(|r| r.trim().to_string())
        };
        let (source, transform) = if let Some(inner) = wrapped("log(").or_else(|| wrapped("ln(")) {
            (inner, Transform::Log)
        } else if let Some(inner) = wrapped("square(").or_else(|| wrapped("sq(")) {
            (inner, Transform::Square)
        } else if let Some(base) = s.strip_suffix("^2") {
            (base.trim().to_string(), Transform::Square)
        } else {
            (s.to_string(), Transform::Identity)
        };
        if source.is_empty() || source.contains(['(', ')', ',']) {
            return Err(DrError::InvalidInput(format!("cannot parse column reference '{s}'")));
        }
        Ok(Self { source, transform })
    }
}

/// Roles of the columns in a data file.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSpec {
    pub outcome: ColumnRef,
    pub endogenous: ColumnRef,
    pub exogenous: Vec<ColumnRef>,
    pub instruments: Vec<ColumnRef>,
    /// Rows are kept only where every listed column equals its value.
    pub filters: Vec<(String, f64)>,
}

impl ColumnSpec {
    /// Log hourly wage on education, experience and its square, instrumented
    /// by mother's education, for working women.
    pub fn mroz() -> Self {
        Self {
            outcome: ColumnRef { source: "wage".into(), transform: Transform::Log },
            endogenous: ColumnRef::plain("educ"),
            exogenous: vec![ColumnRef::plain("exper"), ColumnRef { source: "exper".into(), transform: Transform::Square }],
            instruments: vec![ColumnRef::plain("motheduc")],
            filters: vec![("inlf".into(), 1.0)],
        }
    }

    /// Parses `key = value` lines (`outcome`, `endogenous`, `exogenous`,
    /// `instruments`, `filter`); lists are comma separated, `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let map = parse_key_values(text)?;
        let get = |k: &str| map.get(k).map(String::as_str);
        let single = |k: &str| -> Result<ColumnRef> {
            get(k).ok_or_else(|| DrError::InvalidInput(format!("column spec lacks '{k}'")))?.parse()
        };
        let list = |k: &str| -> Result<Vec<ColumnRef>> {
            get(k).map_or(Ok(vec![]), |v| split_list(v).iter().map(|s| s.parse()).collect())
        };
        let mut filters = Vec::new();
        if let Some(f) = get("filter") {
            for item in split_list(f) {
                let (c, v) = item
                    .split_once('=')
                    .ok_or_else(|| DrError::InvalidInput(format!("filter must be column=value, got '{item}'")))?;
                let v: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| DrError::InvalidInput(format!("filter value '{v}' is not numeric")))?;
                filters.push((c.trim().to_string(), v));
            }
        }
        for k in map.keys() {
            if !["outcome", "endogenous", "exogenous", "instruments", "filter"].contains(&k.as_str()) {
                return Err(DrError::InvalidInput(format!("unknown column spec key '{k}'")));
            }
        }
        let spec = Self {
            outcome: single("outcome")?,
            endogenous: single("endogenous")?,
            exogenous: list("exogenous")?,
            instruments: list("instruments")?,
            filters,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.instruments.is_empty() {
            return Err(DrError::InvalidInput("at least one instrument is required".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for c in self.all_columns() {
            if !seen.insert(c.to_string()) {
                return Err(DrError::InvalidInput(format!("column '{c}' appears in more than one role")));
            }
        }
        Ok(())
    }

    fn all_columns(&self) -> impl Iterator<Item = &ColumnRef> {
        [&self.outcome, &self.endogenous].into_iter().chain(&self.exogenous).chain(&self.instruments)
    }

    /// `key = value` rendering accepted by [`ColumnSpec::parse`].
    pub fn to_text(&self) -> String {
        let join = |v: &[ColumnRef]| v.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ");
        let mut s = format!(
            "outcome = {}\nendogenous = {}\nexogenous = {}\ninstruments = {}\n",
            self.outcome,
            self.endogenous,
            join(&self.exogenous),
            join(&self.instruments)
        );
        if !self.filters.is_empty() {
            let f: Vec<String> = self.filters.iter().map(|(c, v)| format!("{c}={v}")).collect();
            s.push_str(&format!("filter = {}\n", f.join(", ")));
        }
        s
    }

    /// Source columns of the endogenous and exogenous regressors, without repeats.
    pub fn regressor_sources(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for c in std::iter::once(&self.endogenous).chain(&self.exogenous) {
            if !out.contains(&c.source.as_str()) {
                out.push(&c.source);
            }
        }
        out
    }

    /// Builds an evaluation point from named values.
    ///
    /// Source column names are transformed like the data; `y2` and
    /// `x1..xk` set the transformed regressors directly and take precedence.
    pub fn eval_point(&self, values: &HashMap<String, f64>) -> Result<EvalPoint> {
        for k in values.keys() {
            let alias = k == "y2" || k.strip_prefix('x').and_then(|j| j.parse::<usize>().ok()).is_some_and(|j| j >= 1 && j <= self.exogenous.len());
            if !alias && !self.regressor_sources().contains(&k.as_str()) {
                return Err(DrError::InvalidInput(format!("'{k}' is not a regressor of the column spec")));
            }
        }
        let resolve = |c: &ColumnRef, alias: &str| -> Result<f64> {
            if let Some(&v) = values.get(alias) {
                return Ok(v);
            }
            let raw = values
                .get(&c.source)
                .ok_or_else(|| DrError::InvalidInput(format!("evaluation point lacks '{}'", c.source)))?;
            c.transform.apply(*raw).map_err(DrError::InvalidInput)
        };
        let y2 = resolve(&self.endogenous, "y2")?;
        let x = self
            .exogenous
            .iter()
            .enumerate()
            .map(|(j, c)| resolve(c, &format!("x{}", j + 1)))
            .collect::<Result<Vec<_>>>()?;
        Ok(EvalPoint::new(x, y2))
    }
}

/// `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| DrError::InvalidInput(format!("line {}: expected key = value", i + 1)))?;
        let k = k.trim().to_string();
        if map.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(DrError::InvalidInput(format!("line {}: duplicate key '{k}'", i + 1)));
        }
    }
    Ok(map)
}

pub fn split_list(s: &str) -> Vec<&str> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).collect()
}

/// Row accounting of a load: `rows_in = rows_kept + rows_dropped + rows_filtered`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadReport {
    pub rows_in: usize,
    pub rows_kept: usize,
    /// Rows with a missing cell in a referenced column.
    pub rows_dropped: usize,
    /// Rows excluded by the column filters.
    pub rows_filtered: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedData {
    pub dataset: Dataset,
    pub report: LoadReport,
    /// Untransformed regressor source columns over the kept rows.
    pub sources: BTreeMap<String, Vec<f64>>,
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t == "." || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

pub fn load_csv(path: &Path, spec: &ColumnSpec) -> Result<LoadedData> {
    let file = std::fs::File::open(path).map_err(|e| DrError::Io(format!("{}: {e}", path.display())))?;
    read_csv(file, spec)
}

/// As [`load_csv`], from any reader.
pub fn read_csv<R: Read>(reader: R, spec: &ColumnSpec) -> Result<LoadedData> {
    spec.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let index_of = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| DrError::MissingColumn(name.to_string()))
    };
    let roles: Vec<&ColumnRef> = spec.all_columns().collect();
    let role_idx: Vec<usize> = roles.iter().map(|c| index_of(&c.source)).collect::<Result<_>>()?;
    let filter_idx: Vec<(usize, f64)> =
        spec.filters.iter().map(|(c, v)| Ok((index_of(c)?, *v))).collect::<Result<_>>()?;
    let source_names = spec.regressor_sources();
    let source_idx: Vec<usize> = source_names.iter().map(|s| index_of(s)).collect::<Result<_>>()?;

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); roles.len()];
    let mut sources: Vec<Vec<f64>> = vec![Vec::new(); source_names.len()];
    let mut report = LoadReport { rows_in: 0, rows_kept: 0, rows_dropped: 0, rows_filtered: 0 };
    let parse = |rec: &csv::StringRecord, idx: usize, line: usize| -> Result<Option<f64>> {
        let cell = rec.get(idx).unwrap_or("");
        if is_missing(cell) {
            return Ok(None);
        }
        cell.parse::<f64>().map(Some).map_err(|_| DrError::NonNumeric {
            row: line,
            column: headers[idx].to_string(),
            reason: format!("'{cell}' is not a number"),
        })
    };
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        report.rows_in += 1;
        let mut keep = true;
        for &(idx, want) in &filter_idx {
            if parse(&rec, idx, line)? != Some(want) {
                keep = false;
            }
        }
        if !keep {
            report.rows_filtered += 1;
            continue;
        }
        let mut row = Vec::with_capacity(roles.len());
        for (c, &idx) in roles.iter().zip(&role_idx) {
            match parse(&rec, idx, line)? {
                Some(v) => row.push(c.transform.apply(v).map_err(|reason| DrError::NonNumeric {
                    row: line,
                    column: c.to_string(),
                    reason,
                })?),
                None => break,
            }
        }
        if row.len() < roles.len() {
            report.rows_dropped += 1;
            continue;
        }
        let src: Vec<f64> = source_idx
            .iter()
            .map(|&idx| parse(&rec, idx, line).map(|v| v.expect("regressor present")))
            .collect::<Result<_>>()?;
        for (col, v) in columns.iter_mut().zip(row) {
            col.push(v);
        }
        for (col, v) in sources.iter_mut().zip(src) {
            col.push(v);
        }
        report.rows_kept += 1;
    }
    if report.rows_kept == 0 {
        return Err(DrError::EmptyAfterFiltering);
    }
    let k = spec.exogenous.len();
    let mut it = columns.into_iter();
    let outcome = it.next().expect("outcome column");
    let endogenous = it.next().expect("endogenous column");
    let exogenous: Vec<Vec<f64>> = it.by_ref().take(k).collect();
    let instruments: Vec<Vec<f64>> = it.collect();
    let dataset = Dataset::from_columns(outcome, endogenous, &exogenous, &instruments)?;
    let sources = source_names.iter().map(|s| s.to_string()).zip(sources).collect();
    Ok(LoadedData { dataset, report, sources })
}

/// Band columns of a curve table.
#[derive(Debug, Clone, PartialEq)]
pub struct BandColumns {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rejected: Vec<bool>,
}

/// One named curve as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveTable {
    pub name: String,
    pub y: Vec<f64>,
    pub value: Vec<f64>,
    pub band: Option<BandColumns>,
}

impl CurveTable {
    pub fn from_raw(name: &str, curve: &CdfCurve) -> Self {
        Self { name: name.into(), y: curve.grid.values().to_vec(), value: curve.values.clone(), band: None }
    }

    pub fn from_monotone(name: &str, curve: &MonotoneCurve) -> Self {
        Self { name: name.into(), y: curve.grid.values().to_vec(), value: curve.values.clone(), band: None }
    }

    pub fn from_band(name: &str, band: &BandResult) -> Self {
        Self {
            name: name.into(),
            y: band.grid.values().to_vec(),
            value: band.point.clone(),
            band: Some(BandColumns {
                lower: band.lower.clone(),
                upper: band.upper.clone(),
                rejected: band.rejected.clone(),
            }),
        }
    }
}

pub const CURVE_HEADER: [&str; 6] = ["name", "y", "value", "lower", "upper", "rejected"];

pub fn write_curves_to<W: Write>(curves: &[CurveTable], out: W) -> Result<()> {
    let mut names = std::collections::HashSet::new();
    for c in curves {
        if !names.insert(c.name.as_str()) {
            return Err(DrError::InvalidInput(format!("duplicate curve name '{}'", c.name)));
        }
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CURVE_HEADER)?;
    for c in curves {
        for j in 0..c.y.len() {
            let (lo, hi, rej) = match &c.band {
                Some(b) => (
                    b.lower[j].to_string(),
                    b.upper[j].to_string(),
                    if b.rejected[j] { "1" } else { "0" }.to_string(),
                ),
                None => (String::new(), String::new(), String::new()),
            };
            w.write_record([c.name.clone(), c.y[j].to_string(), c.value[j].to_string(), lo, hi, rej])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_curves(curves: &[CurveTable], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| DrError::Io(format!("{}: {e}", path.display())))?;
    write_curves_to(curves, file)
}

/// Reads a file written by [`write_curves`]; curves keep their file order.
pub fn read_curves_from<R: Read>(input: R) -> Result<Vec<CurveTable>> {
    let mut rdr = csv::Reader::from_reader(input);
    if rdr.headers()?.iter().ne(CURVE_HEADER) {
        return Err(DrError::InvalidInput("unexpected curve file header".into()));
    }
    let mut out: Vec<CurveTable> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |j: usize| -> Result<f64> {
            rec[j].parse().map_err(|_| DrError::NonNumeric {
                row: i + 2,
                column: CURVE_HEADER[j].into(),
                reason: format!("'{}' is not a number", &rec[j]),
            })
        };
        let name = &rec[0];
        if out.last().is_none_or(|c| c.name != name) {
            let band = (!rec[3].is_empty()).then(|| BandColumns { lower: vec![], upper: vec![], rejected: vec![] });
            out.push(CurveTable { name: name.to_string(), y: vec![], value: vec![], band });
        }
        let c = out.last_mut().expect("just pushed");
        c.y.push(num(1)?);
        c.value.push(num(2)?);
        if let Some(b) = &mut c.band {
            b.lower.push(num(3)?);
            b.upper.push(num(4)?);
            b.rejected.push(match &rec[5] {
                "1" => true,
                "0" => false,
                other => return Err(DrError::InvalidInput(format!("rejected must be 0 or 1, got '{other}'"))),
            });
        }
    }
    Ok(out)
}

pub fn read_curves(path: &Path) -> Result<Vec<CurveTable>> {
    let file = std::fs::File::open(path).map_err(|e| DrError::Io(format!("{}: {e}", path.display())))?;
    read_curves_from(file)
}
