//! Column layouts of every CSV the tools write, and a checker for them.

use serde::Serialize;

use crate::error::{Result, TermdpError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Integer,
    /// Decimal number; `NaN` and `inf` are accepted.
    Float,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvSchema {
    pub name: &'static str,
    pub columns: &'static [(&'static str, ColumnKind)],
}

use ColumnKind::{Float, Integer, Text};

pub const TERMCRL: CsvSchema = CsvSchema {
    name: "termcrl",
    columns: &[
        ("k", Integer),
        ("v_star", Float),
        ("v_pik", Float),
        ("regret", Float),
        ("cum_regret", Float),
        ("cost_l2_err", Float),
        ("cost_max_err", Float),
        ("mle_iters", Integer),
        ("wall_ms", Float),
    ],
};

pub const TERMPG: CsvSchema = CsvSchema {
    name: "termpg",
    columns: &[
        ("iter", Integer),
        ("mean_return", Float),
        ("term_rate", Float),
        ("cost_l2_err", Float),
        ("wall_ms", Float),
    ],
};

pub const ESTIMATE: CsvSchema = CsvSchema {
    name: "estimate",
    columns: &[
        ("h", Integer),
        ("s", Integer),
        ("a", Integer),
        ("n", Integer),
        ("c_true", Float),
        ("c_hat", Float),
        ("abs_err", Float),
        ("radius", Float),
    ],
};

pub const PLAN: CsvSchema = CsvSchema {
    name: "plan",
    columns: &[
        ("h", Integer),
        ("s", Integer),
        ("cost_index", Integer),
        ("cost", Float),
        ("value", Float),
        ("action", Integer),
    ],
};

pub const EVAL: CsvSchema = CsvSchema {
    name: "eval",
    columns: &[
        ("policy", Text),
        ("method", Text),
        ("value", Float),
        ("std_error", Float),
        ("episodes", Integer),
    ],
};

pub const AGGREGATE_TERMCRL: CsvSchema = CsvSchema {
    name: "aggregate-termcrl",
    columns: &[
        ("variant", Text),
        ("k", Integer),
        ("seeds", Integer),
        ("regret_mean", Float),
        ("regret_std", Float),
        ("cum_regret_mean", Float),
        ("cum_regret_std", Float),
        ("cost_l2_err_mean", Float),
        ("cost_l2_err_std", Float),
    ],
};

pub const AGGREGATE_TERMPG: CsvSchema = CsvSchema {
    name: "aggregate-termpg",
    columns: &[
        ("variant", Text),
        ("iter", Integer),
        ("seeds", Integer),
        ("mean_return_mean", Float),
        ("mean_return_std", Float),
        ("term_rate_mean", Float),
        ("term_rate_std", Float),
        ("cost_l2_err_mean", Float),
        ("cost_l2_err_std", Float),
    ],
};

pub const ALL: &[CsvSchema] = &[TERMCRL, TERMPG, ESTIMATE, PLAN, EVAL, AGGREGATE_TERMCRL, AGGREGATE_TERMPG];

impl CsvSchema {
    pub fn header(&self) -> Vec<&'static str> {
        self.columns.iter().map(|c| c.0).collect()
    }

    /// Checks the header and every cell; returns the number of data rows.
    pub fn check(&self, text: &str) -> Result<usize> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if header != self.header() {
            return Err(TermdpError::invalid(format!(
                "{} csv header {:?} does not match {:?}",
                self.name,
                header,
                self.header()
            )));
        }
        let mut rows = 0;
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            for ((name, kind), cell) in self.columns.iter().zip(record.iter()) {
                let ok = match kind {
                    Integer => cell.parse::<i64>().is_ok(),
                    Float => cell.parse::<f64>().is_ok(),
                    Text => true,
                };
                if !ok {
                    return Err(TermdpError::invalid(format!(
                        "{} csv row {} column {name}: {cell:?} is not {kind:?}",
                        self.name,
                        i + 1
                    )));
                }
            }
            rows += 1;
        }
        Ok(rows)
    }

    pub fn by_name(name: &str) -> Option<CsvSchema> {
        ALL.iter().copied().find(|s| s.name == name)
    }
}

/// Serializes records under `schema`; the header is written even with no rows.
pub fn write_csv<T: Serialize>(records: &[T], schema: &CsvSchema) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(schema.header())?;
    for r in records {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| TermdpError::Io(e.into_error()))?;
    let text = String::from_utf8(bytes).expect("csv output is utf-8");
    schema.check(&text)?;
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_and_rejects() {
        assert_eq!(TERMPG.check("iter,mean_return,term_rate,cost_l2_err,wall_ms\n0,1.5,0.25,NaN,0.0\n").unwrap(), 1);
        assert!(TERMPG.check("iter,mean_return\n0,1\n").is_err());
        assert!(TERMPG.check("iter,mean_return,term_rate,cost_l2_err,wall_ms\nx,1.5,0.25,1,0\n").is_err());
        assert!(TERMPG.check("iter,mean_return,term_rate,cost_l2_err,wall_ms\n0,1.5,0.25\n").is_err());
        assert_eq!(CsvSchema::by_name("plan"), Some(PLAN));
    }
}
