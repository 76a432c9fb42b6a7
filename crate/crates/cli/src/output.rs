//! Self-describing result files.
//!
//! A CSV file holds one series: `#`-prefixed metadata lines (tool version,
//! label, seed, the generating config as one-line JSON, summary values),
//! then a header row and comma-separated records. A JSON bundle holds any
//! number of series with the same content.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

pub const TOOL_VERSION: &str = concat!("qwalk ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub parameter: String,
    pub value: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Records {
    Variance {
        t: Vec<u64>,
        sigma2: Vec<f64>,
        stderr: Vec<f64>,
    },
    Distribution {
        n: Vec<i64>,
        p: Vec<f64>,
    },
    Fit {
        rows: Vec<FitRow>,
    },
}

impl Records {
    fn header(&self) -> &'static str {
        match self {
            Records::Variance { .. } => "t,sigma2,stderr",
            Records::Distribution { .. } => "n,P_n",
            Records::Fit { .. } => "parameter,value,ci_low,ci_high",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryValue {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub label: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    /// The configuration that generated the records.
    pub config: serde_json::Value,
    pub summary: Vec<SummaryValue>,
    pub records: Records,
}

impl ResultFile {
    pub fn new(
        label: impl Into<String>,
        seed: Option<u64>,
        config: serde_json::Value,
        records: Records,
    ) -> Self {
        Self {
            label: label.into(),
            tool_version: TOOL_VERSION.to_owned(),
            seed,
            config,
            summary: Vec::new(),
            records,
        }
    }

    pub fn with_summary(mut self, name: impl Into<String>, value: f64) -> Self {
        self.summary.push(SummaryValue {
            name: name.into(),
            value,
        });
        self
    }

    pub fn summary_value(&self, name: &str) -> Option<f64> {
        self.summary.iter().find(|s| s.name == name).map(|s| s.value)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# tool: {}", self.tool_version);
        let _ = writeln!(out, "# label: {}", self.label);
        if let Some(seed) = self.seed {
            let _ = writeln!(out, "# seed: {seed}");
        }
        let _ = writeln!(out, "# config: {}", self.config);
        for s in &self.summary {
            let _ = writeln!(out, "# {}: {}", s.name, s.value);
        }
        let _ = writeln!(out, "{}", self.records.header());
        match &self.records {
            Records::Variance { t, sigma2, stderr } => {
                for ((t, s), e) in t.iter().zip(sigma2).zip(stderr) {
                    let _ = writeln!(out, "{t},{s},{e}");
                }
            }
            Records::Distribution { n, p } => {
                for (n, p) in n.iter().zip(p) {
                    let _ = writeln!(out, "{n},{p}");
                }
            }
            Records::Fit { rows } => {
                let cell = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
                for r in rows {
                    let _ = writeln!(
                        out,
                        "{},{},{},{}",
                        r.parameter,
                        r.value,
                        cell(r.ci_low),
                        cell(r.ci_high)
                    );
                }
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<ResultFile> {
        let mut label = String::new();
        let mut tool_version = String::new();
        let mut seed = None;
        let mut config = serde_json::Value::Null;
        let mut summary = Vec::new();
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .peekable();
        while let Some((_, line)) = lines.next_if(|(_, l)| l.starts_with('#')) {
            let Some((key, value)) = line[1..].split_once(':') else {
                continue;
            };
            let value = value.trim();
            match key.trim() {
                "tool" => tool_version = value.to_owned(),
                "label" => label = value.to_owned(),
                "seed" => seed = Some(value.parse().context("bad seed line")?),
                "config" => config = serde_json::from_str(value).context("bad config line")?,
                name => {
                    let value = value
                        .parse()
                        .with_context(|| format!("bad summary value `{name}`"))?;
                    summary.push(SummaryValue {
                        name: name.to_owned(),
                        value,
                    });
                }
            }
        }
        let (_, header) = lines.next().ok_or_else(|| anyhow!("missing header row"))?;
        let rows: Vec<(usize, Vec<&str>)> = lines
            .map(|(i, l)| (i + 1, l.split(',').map(str::trim).collect()))
            .collect();
        let field = |line: usize, cols: &[&str], k: usize| -> Result<String> {
            cols.get(k)
                .map(|s| s.to_string())
                .ok_or_else(|| anyhow!("line {line}: missing column {}", k + 1))
        };
        let num = |line: usize, cols: &[&str], k: usize| -> Result<f64> {
            field(line, cols, k)?
                .parse()
                .with_context(|| format!("line {line}: bad number"))
        };
        let opt = |line: usize, cols: &[&str], k: usize| -> Result<Option<f64>> {
            match cols.get(k) {
                None | Some(&"") => Ok(None),
                Some(_) => num(line, cols, k).map(Some),
            }
        };
        let records = match header.trim() {
            "t,sigma2,stderr" => {
                let mut t = Vec::with_capacity(rows.len());
                let mut sigma2 = Vec::with_capacity(rows.len());
                let mut stderr = Vec::with_capacity(rows.len());
                for (line, cols) in &rows {
                    t.push(
                        field(*line, cols, 0)?
                            .parse()
                            .with_context(|| format!("line {line}: bad time"))?,
                    );
                    sigma2.push(num(*line, cols, 1)?);
                    stderr.push(num(*line, cols, 2)?);
                }
                Records::Variance { t, sigma2, stderr }
            }
            "n,P_n" => {
                let mut n = Vec::with_capacity(rows.len());
                let mut p = Vec::with_capacity(rows.len());
                for (line, cols) in &rows {
                    n.push(
                        field(*line, cols, 0)?
                            .parse()
                            .with_context(|| format!("line {line}: bad site"))?,
                    );
                    p.push(num(*line, cols, 1)?);
                }
                Records::Distribution { n, p }
            }
            "parameter,value,ci_low,ci_high" => Records::Fit {
                rows: rows
                    .iter()
                    .map(|(line, cols)| {
                        Ok(FitRow {
                            parameter: field(*line, cols, 0)?,
                            value: num(*line, cols, 1)?,
                            ci_low: opt(*line, cols, 2)?,
                            ci_high: opt(*line, cols, 3)?,
                        })
                    })
                    .collect::<Result<_>>()?,
            },
            other => bail!("unrecognized header `{other}`"),
        };
        Ok(ResultFile {
            label,
            tool_version,
            seed,
            config,
            summary,
            records,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub tool_version: String,
    pub preset: Option<String>,
    pub series: Vec<ResultFile>,
}

impl Bundle {
    pub fn new(preset: Option<String>, series: Vec<ResultFile>) -> Self {
        Self {
            tool_version: TOOL_VERSION.to_owned(),
            preset,
            series,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bundle serializes");
        s.push('\n');
        s
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create directory {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

pub fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Reads either a CSV result file or every series of a JSON bundle.
pub fn read_results(path: &Path) -> Result<Vec<ResultFile>> {
    let text = read_file(path)?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str::<Bundle>(&text)
            .map(|b| b.series)
            .map_err(anyhow::Error::from)
    } else {
        ResultFile::from_csv(&text).map(|r| vec![r])
    };
    parsed.with_context(|| format!("cannot parse {}", path.display()))
}

/// File name for one series of a CSV run written under `dir`.
pub fn csv_path(dir: &Path, label: &str) -> PathBuf {
    dir.join(format!("{label}.csv"))
}
