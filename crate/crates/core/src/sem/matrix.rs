use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::graph::CausalGraph;

use super::SemError;

/// Where a sample came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub model: String,
    /// One entry per intervention, e.g. `P=1` or `E~marginal(seed=…)`.
    pub interventions: Vec<String>,
}

/// `n` rows over named columns, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    columns: Vec<String>,
    data: Vec<Vec<f64>>,
    n: usize,
    pub seed: u64,
    pub provenance: Provenance,
}

impl SampleMatrix {
    pub fn new(
        columns: Vec<String>,
        data: Vec<Vec<f64>>,
        seed: u64,
        provenance: Provenance,
    ) -> Result<Self, SemError> {
        if columns.len() != data.len() {
            return Err(SemError::Data(format!(
                "{} column names for {} columns",
                columns.len(),
                data.len()
            )));
        }
        let n = data.first().map_or(0, Vec::len);
        if data.iter().any(|c| c.len() != n) {
            return Err(SemError::Data("columns have unequal lengths".into()));
        }
        Ok(SampleMatrix {
            columns,
            data,
            n,
            seed,
            provenance,
        })
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .position(|c| c == name)
            .map(|i| self.data[i].as_slice())
    }

    pub fn require(&self, name: &str) -> Result<&[f64], SemError> {
        self.column(name)
            .ok_or_else(|| SemError::UnknownColumn(name.to_string()))
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.data.iter().map(|c| c[i]).collect()
    }

    /// Keeps only the rows for which `keep` is true.
    pub fn filter_rows(&self, keep: impl Fn(usize) -> bool) -> SampleMatrix {
        let idx: Vec<usize> = (0..self.n).filter(|&i| keep(i)).collect();
        let data = self
            .data
            .iter()
            .map(|c| idx.iter().map(|&i| c[i]).collect())
            .collect();
        SampleMatrix {
            columns: self.columns.clone(),
            data,
            n: idx.len(),
            seed: self.seed,
            provenance: self.provenance.clone(),
        }
    }

    /// Header of column names, then one row per sample. Numbers use the
    /// shortest representation that round-trips.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SemError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(&self.columns).map_err(csv_err)?;
        let mut buf = Vec::with_capacity(self.columns.len());
        for i in 0..self.n {
            buf.clear();
            buf.extend(self.data.iter().map(|c| c[i].to_string()));
            w.write_record(&buf).map_err(csv_err)?;
        }
        w.flush().map_err(|e| SemError::Data(e.to_string()))
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = Vec::new();
        self.write_csv(&mut out).expect("writing to memory cannot fail");
        String::from_utf8(out).expect("csv output is ASCII")
    }

    /// Reads a CSV written by [`write_csv`](Self::write_csv). Every header
    /// must name a node of `graph`; anything else is rejected.
    pub fn read_csv<R: Read>(input: R, graph: &CausalGraph) -> Result<SampleMatrix, SemError> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let columns: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        for (i, c) in columns.iter().enumerate() {
            if !graph.contains(c) {
                return Err(SemError::Data(format!("column `{c}` is not a node of the graph")));
            }
            if columns[..i].contains(c) {
                return Err(SemError::Data(format!("column `{c}` appears twice")));
            }
        }
        let mut data = vec![Vec::new(); columns.len()];
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != columns.len() {
                return Err(SemError::Data(format!(
                    "row {} has {} fields, expected {}",
                    line + 2,
                    rec.len(),
                    columns.len()
                )));
            }
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    SemError::Data(format!("row {}: `{field}` is not a number", line + 2))
                })?;
                data[j].push(v);
            }
        }
        SampleMatrix::new(
            columns,
            data,
            0,
            Provenance {
                model: "csv".into(),
                interventions: Vec::new(),
            },
        )
    }
}

fn csv_err(e: csv::Error) -> SemError {
    SemError::Data(e.to_string())
}
