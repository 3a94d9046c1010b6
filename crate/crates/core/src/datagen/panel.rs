//! Balanced panels and their wide, long and differenced views.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transform::delta_name;

/// Where a covariate column comes from, in terms of diagram nodes or other columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnSource {
    /// One node, held constant over every period.
    Invariant { node: String },
    /// One node per period.
    Varying { nodes: BTreeMap<i64, String> },
    /// Column `of` at `period`, repeated at every period.
    Copy { of: String, period: i64 },
    /// Column `of` at `period` minus its baseline value, repeated at every period.
    Change { of: String, period: i64 },
    /// Column `of` times the post-period indicator.
    Interact { of: String },
    /// Imported without provenance.
    Observed,
}

impl ColumnSource {
    /// True if the column holds the same value at every period.
    pub fn is_constant(&self) -> bool {
        matches!(self, ColumnSource::Invariant { .. } | ColumnSource::Copy { .. } | ColumnSource::Change { .. })
    }
}

/// What a column holds at one period, in diagram terms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnValue {
    Zero,
    Level { node: String },
    Difference { post: String, baseline: String },
    Unknown,
}

/// Column names and provenance, without the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSchema {
    pub periods: Vec<i64>,
    pub columns: Vec<(String, ColumnSource)>,
}

impl PanelSchema {
    pub fn baseline(&self) -> i64 {
        self.periods[0]
    }

    pub fn source(&self, name: &str) -> Result<&ColumnSource> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    /// What column `name` holds at `period`.
    pub fn value_at(&self, name: &str, period: i64) -> Result<ColumnValue> {
        Ok(match self.source(name)? {
            ColumnSource::Invariant { node } => ColumnValue::Level { node: node.clone() },
            ColumnSource::Varying { nodes } => match nodes.get(&period) {
                Some(node) => ColumnValue::Level { node: node.clone() },
                None => ColumnValue::Unknown,
            },
            ColumnSource::Copy { of, period: p } => self.value_at(of, *p)?,
            ColumnSource::Change { of, period: p } => {
                match (self.value_at(of, *p)?, self.value_at(of, self.baseline())?) {
                    (ColumnValue::Level { node: post }, ColumnValue::Level { node: baseline }) if post == baseline => ColumnValue::Zero,
                    (ColumnValue::Level { node: post }, ColumnValue::Level { node: baseline }) => ColumnValue::Difference { post, baseline },
                    _ => ColumnValue::Unknown,
                }
            }
            ColumnSource::Interact { of } => {
                if period == self.baseline() {
                    ColumnValue::Zero
                } else {
                    self.value_at(of, period)?
                }
            }
            ColumnSource::Observed => ColumnValue::Unknown,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariate {
    pub name: String,
    pub source: ColumnSource,
    /// `values[period_index][unit]`.
    pub values: Vec<Vec<f64>>,
}

/// Balanced panel: every unit observed at every period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelDataset {
    /// Ascending; the first entry is the baseline period.
    pub periods: Vec<i64>,
    /// Treatment status, `treatment[period_index][unit]`; zero at baseline.
    pub treatment: Vec<Vec<f64>>,
    /// Outcome level, `outcome[period_index][unit]`.
    pub outcome: Vec<Vec<f64>>,
    pub covariates: Vec<Covariate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Wide,
    Long,
    Differenced,
}

/// A named-column numeric table.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Frame {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Frame {
    pub fn push(&mut self, name: impl Into<String>, values: Vec<f64>) {
        self.names.push(name.into());
        self.columns.push(values);
    }

    pub fn nrows(&self) -> usize {
        self.columns.first().map(Vec::len).unwrap_or(0)
    }

    pub fn col(&self, name: &str) -> Result<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    /// RFC 4180 CSV with a header row. Integral `unit`/`period` values print without a fraction.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.names)?;
        let mut row = Vec::with_capacity(self.names.len());
        for r in 0..self.nrows() {
            row.clear();
            for c in &self.columns {
                row.push(format_number(c[r]));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let names: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut columns = vec![Vec::new(); names.len()];
        for rec in r.records() {
            let rec = rec?;
            for (i, field) in rec.iter().enumerate() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("non-numeric value `{field}` in column `{}`", names[i])))?;
                columns[i].push(v);
            }
        }
        Ok(Self { names, columns })
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

fn format_number(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

impl PanelDataset {
    pub fn n_units(&self) -> usize {
        self.outcome.first().map(Vec::len).unwrap_or(0)
    }

    pub fn baseline(&self) -> i64 {
        self.periods[0]
    }

    pub fn period_index(&self, period: i64) -> Result<usize> {
        self.periods
            .iter()
            .position(|&p| p == period)
            .ok_or_else(|| Error::InvalidArgument(format!("period {period} is not in the panel")))
    }

    pub fn schema(&self) -> PanelSchema {
        PanelSchema {
            periods: self.periods.clone(),
            columns: self.covariates.iter().map(|c| (c.name.clone(), c.source.clone())).collect(),
        }
    }

    pub fn covariate(&self, name: &str) -> Result<&Covariate> {
        self.covariates
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    /// Values of covariate `name` at `period`.
    pub fn covariate_at(&self, name: &str, period: i64) -> Result<&[f64]> {
        let i = self.period_index(period)?;
        Ok(&self.covariate(name)?.values[i])
    }

    pub fn treatment_at(&self, period: i64) -> Result<&[f64]> {
        Ok(&self.treatment[self.period_index(period)?])
    }

    pub fn outcome_at(&self, period: i64) -> Result<&[f64]> {
        Ok(&self.outcome[self.period_index(period)?])
    }

    /// `Y_period - Y_baseline` per unit.
    pub fn outcome_change(&self, period: i64) -> Result<Vec<f64>> {
        let post = self.outcome_at(period)?;
        let base = &self.outcome[0];
        Ok(post.iter().zip(base).map(|(p, b)| p - b).collect())
    }

    fn post_periods(&self) -> &[i64] {
        &self.periods[1..]
    }

    /// Wide-layout names for one covariate: one column if constant, else one per period.
    fn wide_names(&self, c: &Covariate) -> Vec<(String, usize)> {
        if c.source.is_constant() {
            return vec![(c.name.clone(), 0)];
        }
        self.periods
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let name = match &c.source {
                    ColumnSource::Varying { nodes } => nodes.get(p).cloned().unwrap_or_else(|| format!("{}@{p}", c.name)),
                    _ => format!("{}@{p}", c.name),
                };
                (name, i)
            })
            .collect()
    }

    /// Values of a wide-layout covariate column (e.g. `W1`, `W0`, `Z_dup1`, `Z_xP@1`).
    pub fn wide_column(&self, name: &str) -> Result<&[f64]> {
        for c in &self.covariates {
            for (n, i) in self.wide_names(c) {
                if n == name {
                    return Ok(&c.values[i]);
                }
            }
        }
        Err(Error::UnknownColumn(name.to_string()))
    }

    pub fn to_layout(&self, layout: Layout) -> Frame {
        match layout {
            Layout::Long => self.long_frame(),
            Layout::Wide => self.wide_frame(false),
            Layout::Differenced => self.wide_frame(true),
        }
    }

    fn long_frame(&self) -> Frame {
        let n = self.n_units();
        let k = self.periods.len();
        let stack = |by_period: &[Vec<f64>]| -> Vec<f64> {
            let mut v = Vec::with_capacity(n * k);
            for u in 0..n {
                for series in by_period {
                    v.push(series[u]);
                }
            }
            v
        };
        let mut f = Frame::default();
        f.push("unit", (0..n).flat_map(|u| std::iter::repeat(u as f64).take(k)).collect());
        f.push("period", (0..n).flat_map(|_| self.periods.iter().map(|&p| p as f64)).collect());
        f.push("A", stack(&self.treatment));
        f.push("Y", stack(&self.outcome));
        for c in &self.covariates {
            f.push(c.name.clone(), stack(&c.values));
        }
        f
    }

    fn wide_frame(&self, differenced: bool) -> Frame {
        let n = self.n_units();
        let mut f = Frame::default();
        f.push("unit", (0..n).map(|u| u as f64).collect());
        for (i, p) in self.periods.iter().enumerate().skip(1) {
            f.push(format!("A{p}"), self.treatment[i].clone());
        }
        if differenced {
            let posts = self.post_periods().len();
            for p in self.post_periods() {
                f.push(delta_name(*p, posts), self.outcome_change(*p).expect("post period exists"));
            }
        } else {
            for (i, p) in self.periods.iter().enumerate() {
                f.push(format!("Y{p}"), self.outcome[i].clone());
            }
        }
        for c in &self.covariates {
            for (name, i) in self.wide_names(c) {
                f.push(name, c.values[i].clone());
            }
        }
        f
    }

    /// Rebuilds a panel from its long view and schema.
    pub fn from_long(frame: &Frame, schema: &PanelSchema) -> Result<Self> {
        let k = schema.periods.len();
        if k == 0 || frame.nrows() % k != 0 {
            return Err(Error::InvalidArgument("long frame is not a balanced panel".into()));
        }
        let n = frame.nrows() / k;
        let unit = frame.col("unit")?;
        let period = frame.col("period")?;
        for u in 0..n {
            for (j, p) in schema.periods.iter().enumerate() {
                let r = u * k + j;
                if unit[r] != u as f64 || period[r] != *p as f64 {
                    return Err(Error::InvalidArgument(format!("row {r} is out of (unit, period) order")));
                }
            }
        }
        let unstack = |col: &[f64]| -> Vec<Vec<f64>> { (0..k).map(|j| (0..n).map(|u| col[u * k + j]).collect()).collect() };
        let mut covariates = Vec::new();
        for (name, source) in &schema.columns {
            covariates.push(Covariate { name: name.clone(), source: source.clone(), values: unstack(frame.col(name)?) });
        }
        Ok(Self {
            periods: schema.periods.clone(),
            treatment: unstack(frame.col("A")?),
            outcome: unstack(frame.col("Y")?),
            covariates,
        })
    }

    /// Rebuilds a panel from its wide view and schema.
    pub fn from_wide(frame: &Frame, schema: &PanelSchema) -> Result<Self> {
        let n = frame.nrows();
        let mut treatment = vec![vec![0.0; n]];
        for p in &schema.periods[1..] {
            treatment.push(frame.col(&format!("A{p}"))?.to_vec());
        }
        let outcome = schema
            .periods
            .iter()
            .map(|p| frame.col(&format!("Y{p}")).map(<[f64]>::to_vec))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Self { periods: schema.periods.clone(), treatment, outcome, covariates: Vec::new() };
        for (name, source) in &schema.columns {
            let stub = Covariate { name: name.clone(), source: source.clone(), values: Vec::new() };
            let names = out.wide_names(&stub);
            let values = if names.len() == 1 {
                vec![frame.col(&names[0].0)?.to_vec(); schema.periods.len()]
            } else {
                names.iter().map(|(w, _)| frame.col(w).map(<[f64]>::to_vec)).collect::<Result<Vec<_>>>()?
            };
            out.covariates.push(Covariate { values, ..stub });
        }
        Ok(out)
    }

    /// Long-layout CSV: `unit,period,A,Y,<covariates>`, rows ordered by unit then period.
    pub fn write_long_csv<W: Write>(&self, out: W) -> Result<()> {
        self.long_frame().write_csv(out)
    }
}
