//! Tabular ingestion and preprocessing.
//!
//! Raw CSV rows are validated against a [`Schema`], missing cells are imputed
//! (mean for numeric, mode for categorical), categorical features are one-hot
//! encoded, numeric features are min-max scaled to `[0, 1]`, and duplicate
//! `(features, label)` rows collapse to one randomly chosen copy.
//!
//! The split attribute never enters the feature vector. It rides along on
//! each [`Sample`] as `group` so that pool builders can use it and then drop it.

use std::collections::HashMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from;
use crate::splits::MixturePools;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Feature,
    Label,
    SplitAttribute,
    Ignored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub role: ColumnRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub columns: Vec<Column>,
    pub label_classes: usize,
}

impl Schema {
    pub fn new(columns: Vec<Column>, label_classes: usize) -> Result<Self> {
        let schema = Schema {
            columns,
            label_classes,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schema: Schema = serde_json::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let labels = self.count_role(ColumnRole::Label);
        if labels != 1 {
            return Err(Error::Schema(format!(
                "expected exactly one label column, found {labels}"
            )));
        }
        if self.count_role(ColumnRole::SplitAttribute) > 1 {
            return Err(Error::Schema(
                "at most one split-attribute column is allowed".into(),
            ));
        }
        if self.label_classes < 2 {
            return Err(Error::Schema(format!(
                "label_classes must be at least 2, got {}",
                self.label_classes
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name `{}`", c.name)));
            }
        }
        Ok(())
    }

    fn count_role(&self, role: ColumnRole) -> usize {
        self.columns.iter().filter(|c| c.role == role).count()
    }

    pub fn label_column(&self) -> &Column {
        self.columns
            .iter()
            .find(|c| c.role == ColumnRole::Label)
            .expect("validated schema has a label column")
    }

    pub fn split_attribute(&self) -> Option<&Column> {
        self.columns
            .iter()
            .find(|c| c.role == ColumnRole::SplitAttribute)
    }
}

/// Rows in schema column order; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Option<String>>>,
}

impl RawTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// One point `z = (x, y)` of the sample space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Stable identifier, unique within the source dataset or generator.
    pub id: usize,
    pub features: Vec<f64>,
    pub label: usize,
    /// Split-attribute value, kept out of band.
    pub group: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub schema: Schema,
    pub feature_names: Vec<String>,
    pub samples: Vec<Sample>,
    pub provenance: String,
}

impl Dataset {
    pub fn width(&self) -> usize {
        self.feature_names.len()
    }

    pub fn label_classes(&self) -> usize {
        self.schema.label_classes
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Schema describing the encoded representation: every feature numeric,
    /// label as class index, split attribute carried through.
    pub fn encoded_schema(&self) -> Schema {
        let mut columns: Vec<Column> = self
            .feature_names
            .iter()
            .map(|name| Column {
                name: name.clone(),
                kind: ColumnKind::Numeric,
                role: ColumnRole::Feature,
            })
            .collect();
        columns.push(Column {
            name: self.schema.label_column().name.clone(),
            kind: ColumnKind::Categorical,
            role: ColumnRole::Label,
        });
        if let Some(attr) = self.schema.split_attribute() {
            columns.push(Column {
                name: attr.name.clone(),
                kind: ColumnKind::Categorical,
                role: ColumnRole::SplitAttribute,
            });
        }
        Schema {
            columns,
            label_classes: self.schema.label_classes,
        }
    }

    /// The encoded dataset as a raw table matching [`Dataset::encoded_schema`].
    pub fn to_raw_table(&self) -> RawTable {
        let schema = self.encoded_schema();
        let has_attr = self.schema.split_attribute().is_some();
        let rows = self
            .samples
            .iter()
            .map(|s| {
                let mut row: Vec<Option<String>> =
                    s.features.iter().map(|v| Some(format!("{v}"))).collect();
                row.push(Some(s.label.to_string()));
                if has_attr {
                    row.push(s.group.clone());
                }
                row
            })
            .collect();
        RawTable {
            headers: schema.columns.iter().map(|c| c.name.clone()).collect(),
            rows,
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<RawTable> {
    read_csv(File::open(path)?, schema)
}

/// Reads CSV text whose header names exactly the schema's columns, in any order.
pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<RawTable> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            message: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    for h in &header {
        if !schema.columns.iter().any(|c| &c.name == h) {
            return Err(Error::Schema(format!("unknown column `{h}` in CSV header")));
        }
    }
    let mut order = Vec::with_capacity(schema.columns.len());
    for c in &schema.columns {
        match header.iter().position(|h| h == &c.name) {
            Some(i) => order.push(i),
            None => {
                return Err(Error::Schema(format!(
                    "column `{}` missing from CSV header",
                    c.name
                )))
            }
        }
    }

    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            row: i + 1,
            message: e.to_string(),
        })?;
        rows.push(
            order
                .iter()
                .map(|&j| {
                    let cell = record.get(j).unwrap_or("").trim();
                    (!cell.is_empty()).then(|| cell.to_string())
                })
                .collect(),
        );
    }
    Ok(RawTable {
        headers: schema.columns.iter().map(|c| c.name.clone()).collect(),
        rows,
    })
}

fn mode(values: impl Iterator<Item = String>) -> Option<String> {
    // first-seen order breaks ties
    let mut counts: Vec<(String, usize)> = Vec::new();
    for v in values {
        match counts.iter_mut().find(|(k, _)| *k == v) {
            Some((_, c)) => *c += 1,
            None => counts.push((v, 1)),
        }
    }
    let mut best: Option<(String, usize)> = None;
    for (k, c) in counts {
        if best.as_ref().map_or(true, |(_, bc)| c > *bc) {
            best = Some((k, c));
        }
    }
    best.map(|(k, _)| k)
}

fn distinct_in_order(values: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for v in values {
        if !out.contains(v) {
            out.push(v.clone());
        }
    }
    out
}

enum Encoded {
    Numeric { name: String, values: Vec<f64> },
    OneHot { name: String, categories: Vec<String>, values: Vec<String> },
}

/// Turns a raw table into an encoded, deduplicated [`Dataset`].
pub fn preprocess(raw: &RawTable, schema: &Schema, seed: u64) -> Result<Dataset> {
    schema.validate()?;
    if raw.is_empty() {
        return Err(Error::Preprocess("raw table is empty".into()));
    }
    let ncols = schema.columns.len();
    if let Some((i, _)) = raw.rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(Error::Parse {
            row: i + 1,
            message: format!("expected {ncols} cells"),
        });
    }

    let column = |j: usize| raw.rows.iter().map(move |r| r[j].as_deref());
    let mut encoded = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut groups: Option<Vec<String>> = None;

    for (j, col) in schema.columns.iter().enumerate() {
        match col.role {
            ColumnRole::Ignored => {}
            ColumnRole::Label => {
                for (i, cell) in column(j).enumerate() {
                    match cell {
                        Some(v) => labels.push(v.to_string()),
                        None => {
                            return Err(Error::Parse {
                                row: i + 1,
                                message: format!("missing label in column `{}`", col.name),
                            })
                        }
                    }
                }
            }
            ColumnRole::SplitAttribute => {
                let filled = impute_mode(column(j), &col.name)?;
                groups = Some(filled);
            }
            ColumnRole::Feature => match col.kind {
                ColumnKind::Numeric => {
                    let mut parsed = Vec::with_capacity(raw.len());
                    for (i, cell) in column(j).enumerate() {
                        parsed.push(match cell {
                            None => None,
                            Some(text) => {
                                let v: f64 = text.parse().map_err(|_| Error::Parse {
                                    row: i + 1,
                                    message: format!(
                                        "`{text}` in numeric column `{}` is not a number",
                                        col.name
                                    ),
                                })?;
                                if !v.is_finite() {
                                    return Err(Error::Parse {
                                        row: i + 1,
                                        message: format!("non-finite value in `{}`", col.name),
                                    });
                                }
                                Some(v)
                            }
                        });
                    }
                    let present: Vec<f64> = parsed.iter().flatten().copied().collect();
                    if present.is_empty() {
                        return Err(Error::Preprocess(format!(
                            "all values missing in column `{}`",
                            col.name
                        )));
                    }
                    let mean = present.iter().sum::<f64>() / present.len() as f64;
                    let filled: Vec<f64> = parsed.into_iter().map(|v| v.unwrap_or(mean)).collect();
                    encoded.push(Encoded::Numeric {
                        name: col.name.clone(),
                        values: min_max_scale(&filled),
                    });
                }
                ColumnKind::Categorical => {
                    let values = impute_mode(column(j), &col.name)?;
                    encoded.push(Encoded::OneHot {
                        name: col.name.clone(),
                        categories: distinct_in_order(&values),
                        values,
                    });
                }
            },
        }
    }

    let label_index = label_mapping(&labels, schema.label_classes)?;

    let mut feature_names = Vec::new();
    for e in &encoded {
        match e {
            Encoded::Numeric { name, .. } => feature_names.push(name.clone()),
            Encoded::OneHot { name, categories, .. } => {
                feature_names.extend(categories.iter().map(|c| format!("{name}={c}")))
            }
        }
    }
    if feature_names.is_empty() {
        return Err(Error::Preprocess("zero-width feature space".into()));
    }

    let samples: Vec<Sample> = (0..raw.len())
        .map(|i| {
            let mut features = Vec::with_capacity(feature_names.len());
            for e in &encoded {
                match e {
                    Encoded::Numeric { values, .. } => features.push(values[i]),
                    Encoded::OneHot {
                        categories, values, ..
                    } => features.extend(
                        categories
                            .iter()
                            .map(|c| if *c == values[i] { 1.0 } else { 0.0 }),
                    ),
                }
            }
            Sample {
                id: i,
                features,
                label: label_index[&labels[i]],
                group: groups.as_ref().map(|g| g[i].clone()),
            }
        })
        .collect();

    Ok(Dataset {
        schema: schema.clone(),
        feature_names,
        samples: dedup(samples, seed),
        provenance: String::new(),
    })
}

fn impute_mode<'a>(cells: impl Iterator<Item = Option<&'a str>>, name: &str) -> Result<Vec<String>> {
    let cells: Vec<Option<&str>> = cells.collect();
    let fill = mode(cells.iter().flatten().map(|s| s.to_string()))
        .ok_or_else(|| Error::Preprocess(format!("all values missing in column `{name}`")))?;
    Ok(cells
        .into_iter()
        .map(|c| c.map_or_else(|| fill.clone(), str::to_string))
        .collect())
}

fn min_max_scale(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    values
        .iter()
        .map(|v| if span > 0.0 { (v - lo) / span } else { 0.0 })
        .collect()
}

/// Integer labels already in `[0, classes)` keep their value; anything else is
/// indexed in sorted order.
fn label_mapping(labels: &[String], classes: usize) -> Result<HashMap<String, usize>> {
    let mut distinct = distinct_in_order(labels);
    let as_index: Option<Vec<usize>> = distinct
        .iter()
        .map(|l| l.parse::<usize>().ok().filter(|&v| v < classes))
        .collect();
    if let Some(idx) = as_index {
        return Ok(distinct.into_iter().zip(idx).collect());
    }
    if distinct.len() > classes {
        return Err(Error::Preprocess(format!(
            "found {} distinct labels but schema declares {classes} classes",
            distinct.len()
        )));
    }
    distinct.sort();
    Ok(distinct.into_iter().enumerate().map(|(i, l)| (l, i)).collect())
}

fn dedup(samples: Vec<Sample>, seed: u64) -> Vec<Sample> {
    let mut groups: HashMap<(Vec<u64>, usize), Vec<usize>> = HashMap::new();
    let mut order = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let key = (s.features.iter().map(|v| v.to_bits()).collect(), s.label);
        let entry = groups.entry(key).or_default();
        if entry.is_empty() {
            order.push(i);
        }
        entry.push(i);
    }
    let mut rng = rng_from(seed);
    let mut keep = vec![false; samples.len()];
    // iterate in first-occurrence order so the rng stream is reproducible
    for first in order {
        let s = &samples[first];
        let key = (s.features.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), s.label);
        let members = &groups[&key];
        keep[*members.choose(&mut rng).expect("non-empty group")] = true;
    }
    samples
        .into_iter()
        .zip(keep)
        .filter_map(|(s, k)| k.then_some(s))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LabelRule {
    /// Every sample of the component gets this class.
    Constant(usize),
    /// Class 1 when `weights · x + bias > 0`, else class 0.
    Halfspace { weights: Vec<f64>, bias: f64 },
}

impl LabelRule {
    fn apply(&self, x: &[f64]) -> usize {
        match self {
            LabelRule::Constant(c) => *c,
            LabelRule::Halfspace { weights, bias } => {
                let s: f64 = weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + bias;
                usize::from(s > 0.0)
            }
        }
    }

    fn max_class(&self) -> usize {
        match self {
            LabelRule::Constant(c) => *c,
            LabelRule::Halfspace { .. } => 1,
        }
    }
}

/// Axis-aligned Gaussian; a zero standard deviation pins that coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianComponent {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub label: LabelRule,
}

/// Draws `n_per_component` samples from each component; pool `k` holds
/// component `k`'s draws and every sample's `group` is its component index.
pub fn synthetic_mixture(
    components: &[GaussianComponent],
    n_per_component: usize,
    seed: u64,
) -> Result<MixturePools> {
    if components.is_empty() {
        return Err(Error::InvalidArgument("at least one component required".into()));
    }
    if n_per_component == 0 {
        return Err(Error::InvalidArgument("n_per_component must be positive".into()));
    }
    let dim = components[0].mean.len();
    for (k, c) in components.iter().enumerate() {
        if c.mean.len() != dim || c.std.len() != dim || dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "component {k}: mean/std must share a non-zero dimension"
            )));
        }
        if c.std.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "component {k}: standard deviations must be finite and non-negative"
            )));
        }
    }
    let mut rng = rng_from(seed);
    let pools = components
        .iter()
        .enumerate()
        .map(|(k, c)| {
            (0..n_per_component)
                .map(|i| {
                    let features: Vec<f64> = c
                        .mean
                        .iter()
                        .zip(&c.std)
                        .map(|(&m, &s)| {
                            let z: f64 = Normal::new(0.0, 1.0).unwrap().sample(&mut rng);
                            m + s * z
                        })
                        .collect();
                    Sample {
                        id: k * n_per_component + i,
                        label: c.label.apply(&features),
                        features,
                        group: Some(k.to_string()),
                    }
                })
                .collect()
        })
        .collect();
    MixturePools::new(
        pools,
        0,
        (0..components.len()).map(|k| format!("component-{k}")).collect(),
    )
}

/// Flattens a synthetic mixture into a [`Dataset`] with columns `x0..`, `label`
/// and split attribute `component`.
pub fn synthetic_dataset(
    components: &[GaussianComponent],
    n_per_component: usize,
    seed: u64,
) -> Result<Dataset> {
    let pools = synthetic_mixture(components, n_per_component, seed)?;
    let dim = components[0].mean.len();
    let classes = components
        .iter()
        .map(|c| c.label.max_class())
        .max()
        .unwrap_or(1)
        .max(1)
        + 1;
    let mut columns: Vec<Column> = (0..dim)
        .map(|i| Column {
            name: format!("x{i}"),
            kind: ColumnKind::Numeric,
            role: ColumnRole::Feature,
        })
        .collect();
    columns.push(Column {
        name: "label".into(),
        kind: ColumnKind::Categorical,
        role: ColumnRole::Label,
    });
    columns.push(Column {
        name: "component".into(),
        kind: ColumnKind::Categorical,
        role: ColumnRole::SplitAttribute,
    });
    Ok(Dataset {
        schema: Schema::new(columns, classes)?,
        feature_names: (0..dim).map(|i| format!("x{i}")).collect(),
        samples: pools.pools.into_iter().flatten().collect(),
        provenance: format!("synthetic mixture, {} components, seed {seed}", components.len()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(cols: &[(&str, ColumnKind, ColumnRole)]) -> Schema {
        Schema::new(
            cols.iter()
                .map(|(n, k, r)| Column {
                    name: n.to_string(),
                    kind: *k,
                    role: *r,
                })
                .collect(),
            2,
        )
        .unwrap()
    }

    fn basic_schema() -> Schema {
        use ColumnKind::*;
        use ColumnRole::*;
        schema(&[
            ("age", Numeric, Feature),
            ("color", Categorical, Feature),
            ("y", Categorical, Label),
        ])
    }

    #[test]
    fn reads_rows_and_marks_missing() {
        let csv = "age,color,y\n1,A,0\n,B,1\n3,A,0\n";
        let t = read_csv(csv.as_bytes(), &basic_schema()).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.rows[1][0], None);
        assert_eq!(t.rows[1][1].as_deref(), Some("B"));
    }

    #[test]
    fn header_reordering_is_accepted() {
        let csv = "y,color,age\n0,A,1\n";
        let t = read_csv(csv.as_bytes(), &basic_schema()).unwrap();
        assert_eq!(t.rows[0], vec![Some("1".into()), Some("A".into()), Some("0".into())]);
    }

    #[test]
    fn missing_label_column_is_schema_error() {
        let csv = "age,color\n1,A\n";
        assert!(matches!(
            read_csv(csv.as_bytes(), &basic_schema()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn unknown_column_is_schema_error() {
        let csv = "age,color,y,extra\n1,A,0,9\n";
        assert!(matches!(
            read_csv(csv.as_bytes(), &basic_schema()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn ragged_row_reports_row_number() {
        let csv = "age,color,y\n1,A,0\n2,B\n";
        match read_csv(csv.as_bytes(), &basic_schema()) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn schema_invariants() {
        use ColumnKind::*;
        use ColumnRole::*;
        let two_labels = Schema::new(
            vec![
                Column { name: "a".into(), kind: Numeric, role: Label },
                Column { name: "b".into(), kind: Numeric, role: Label },
            ],
            2,
        );
        assert!(two_labels.is_err());
        let dup = Schema::new(
            vec![
                Column { name: "a".into(), kind: Numeric, role: Feature },
                Column { name: "a".into(), kind: Numeric, role: Label },
            ],
            2,
        );
        assert!(dup.is_err());
        let json = r#"{"columns":[{"name":"x","kind":"numeric","role":"feature"},
            {"name":"y","kind":"categorical","role":"label"}],"label_classes":2}"#;
        assert_eq!(Schema::from_json(json).unwrap().columns.len(), 2);
    }

    #[test]
    fn numeric_mean_imputation() {
        use ColumnKind::*;
        use ColumnRole::*;
        let s = schema(&[("v", Numeric, Feature), ("w", Numeric, Feature), ("y", Categorical, Label)]);
        let raw = read_csv("v,w,y\n1,0,0\n,5,1\n3,10,0\n".as_bytes(), &s).unwrap();
        let d = preprocess(&raw, &s, 0).unwrap();
        // imputed 2 sits halfway between min 1 and max 3
        assert_eq!(d.samples[1].features[0], 0.5);
    }

    #[test]
    fn one_hot_encoding() {
        let raw = read_csv("age,color,y\n1,A,0\n2,B,1\n".as_bytes(), &basic_schema()).unwrap();
        let d = preprocess(&raw, &basic_schema(), 0).unwrap();
        assert_eq!(d.feature_names, vec!["age", "color=A", "color=B"]);
        assert_eq!(d.samples[0].features, vec![0.0, 1.0, 0.0]);
        assert_eq!(d.samples[1].features, vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn categorical_mode_tie_uses_first_seen() {
        let raw = read_csv("age,color,y\n1,B,0\n2,A,1\n3,,1\n".as_bytes(), &basic_schema()).unwrap();
        let d = preprocess(&raw, &basic_schema(), 0).unwrap();
        assert_eq!(d.samples[2].features[1..], [1.0, 0.0]);
    }

    #[test]
    fn duplicates_collapse_to_one() {
        let raw = read_csv("age,color,y\n1,A,0\n1,A,0\n5,B,1\n".as_bytes(), &basic_schema()).unwrap();
        let d = preprocess(&raw, &basic_schema(), 3).unwrap();
        assert_eq!(d.len(), 2);
        let kept: Vec<usize> = (0..50)
            .map(|seed| preprocess(&raw, &basic_schema(), seed).unwrap().samples[0].id)
            .collect();
        assert!(kept.contains(&0) && kept.contains(&1));
    }

    #[test]
    fn all_missing_column_fails() {
        let raw = read_csv("age,color,y\n,A,0\n,B,1\n".as_bytes(), &basic_schema()).unwrap();
        assert!(matches!(
            preprocess(&raw, &basic_schema(), 0),
            Err(Error::Preprocess(_))
        ));
    }

    #[test]
    fn zero_width_fails() {
        use ColumnKind::*;
        use ColumnRole::*;
        let s = schema(&[("junk", Numeric, Ignored), ("y", Categorical, Label)]);
        let raw = read_csv("junk,y\n1,0\n2,1\n".as_bytes(), &s).unwrap();
        assert!(matches!(preprocess(&raw, &s, 0), Err(Error::Preprocess(_))));
    }

    #[test]
    fn constant_numeric_column_scales_to_zero() {
        use ColumnKind::*;
        use ColumnRole::*;
        let s = schema(&[("c", Numeric, Feature), ("v", Numeric, Feature), ("y", Categorical, Label)]);
        let raw = read_csv("c,v,y\n7,1,0\n7,2,1\n".as_bytes(), &s).unwrap();
        let d = preprocess(&raw, &s, 0).unwrap();
        assert!(d.samples.iter().all(|s| s.features[0] == 0.0));
    }

    #[test]
    fn split_attribute_stays_out_of_features() {
        use ColumnKind::*;
        use ColumnRole::*;
        let s = schema(&[("v", Numeric, Feature), ("sex", Categorical, SplitAttribute), ("y", Categorical, Label)]);
        let raw = read_csv("v,sex,y\n1,M,0\n2,F,1\n3,,1\n".as_bytes(), &s).unwrap();
        let d = preprocess(&raw, &s, 0).unwrap();
        assert_eq!(d.width(), 1);
        assert_eq!(d.samples[0].group.as_deref(), Some("M"));
        assert_eq!(d.samples[2].group.as_deref(), Some("M"));
    }

    #[test]
    fn string_labels_are_indexed_sorted() {
        use ColumnKind::*;
        use ColumnRole::*;
        let s = schema(&[("v", Numeric, Feature), ("y", Categorical, Label)]);
        let raw = read_csv("v,y\n1,>50K\n2,<=50K\n".as_bytes(), &s).unwrap();
        let d = preprocess(&raw, &s, 0).unwrap();
        assert_eq!(d.samples[0].label, 1);
        assert_eq!(d.samples[1].label, 0);
    }

    #[test]
    fn synthetic_counts_and_determinism() {
        let comps = vec![
            GaussianComponent { mean: vec![0.0, 0.0], std: vec![1.0, 1.0], label: LabelRule::Constant(0) },
            GaussianComponent { mean: vec![3.0, 3.0], std: vec![1.0, 1.0], label: LabelRule::Constant(1) },
        ];
        let a = synthetic_mixture(&comps, 5, 11).unwrap();
        assert_eq!(a.pools.iter().map(Vec::len).collect::<Vec<_>>(), vec![5, 5]);
        let b = synthetic_mixture(&comps, 5, 11).unwrap();
        assert_eq!(a.pools, b.pools);
        assert!(synthetic_mixture(&comps, 0, 11).is_err());
    }

    #[test]
    fn zero_variance_component_is_constant() {
        let comps = vec![
            GaussianComponent { mean: vec![1.0, 2.0], std: vec![0.0, 0.0], label: LabelRule::Constant(0) },
            GaussianComponent { mean: vec![5.0, 5.0], std: vec![1.0, 1.0], label: LabelRule::Constant(1) },
        ];
        let p = synthetic_mixture(&comps, 20, 1).unwrap();
        assert!(p.pools[0].iter().all(|s| s.features == vec![1.0, 2.0]));
    }
}
