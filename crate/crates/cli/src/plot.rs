//! Plot-ready CSVs derived from a record. Output depends only on the record.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};

use crate::config::ConfigError;
use crate::output::{num, opt, write_csv};
use crate::run::Record;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    ZetaHist,
    VariancePlateau,
    Semicircle,
    RhoIdentity,
}

impl PlotKind {
    pub const ALL: [PlotKind; 4] = [
        PlotKind::ZetaHist,
        PlotKind::VariancePlateau,
        PlotKind::Semicircle,
        PlotKind::RhoIdentity,
    ];

    pub fn file_name(self) -> String {
        format!("{self}.csv")
    }
}

impl fmt::Display for PlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlotKind::ZetaHist => "zeta-hist",
            PlotKind::VariancePlateau => "variance-plateau",
            PlotKind::Semicircle => "semicircle",
            PlotKind::RhoIdentity => "rho-identity",
        })
    }
}

impl FromStr for PlotKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        PlotKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| {
                let names: Vec<String> = PlotKind::ALL.iter().map(|k| k.to_string()).collect();
                ConfigError::Usage(format!(
                    "unknown plot kind `{s}`; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// Reads `record.json`, given either the file or its run directory.
pub fn load_record(path: &Path) -> Result<(Record, PathBuf)> {
    let file = if path.is_dir() {
        path.join("record.json")
    } else {
        path.to_path_buf()
    };
    let text = std::fs::read_to_string(&file)
        .with_context(|| format!("cannot read {}", file.display()))?;
    let record: Record = serde_json::from_str(&text)
        .with_context(|| format!("{} is not a run record", file.display()))?;
    let dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((record, dir))
}

fn wrong_kind(kind: PlotKind, record: &Record, wants: &str) -> anyhow::Error {
    ConfigError::Usage(format!(
        "{kind} needs a {wants} record, got a {} record",
        record.kind()
    ))
    .into()
}

/// Writes `<kind>.csv` into `out` and returns its path.
pub fn emit(record: &Record, kind: PlotKind, out: &Path) -> Result<PathBuf> {
    let path = out.join(kind.file_name());
    match kind {
        PlotKind::ZetaHist => {
            let Record::Clt(c) = record else {
                return Err(wrong_kind(kind, record, "clt"));
            };
            let mut rows = vec![];
            for s in &c.experiment.series {
                let Some(var) = s.v_n.filter(|v| *v > 0.0) else {
                    continue;
                };
                let n = s.zeta_theoretical.len();
                let bins = ((n as f64).sqrt().ceil() as usize).clamp(8, 40);
                let half = 4.0 * var.sqrt();
                let width = 2.0 * half / bins as f64;
                let mut counts = vec![0usize; bins];
                for z in &s.zeta_theoretical {
                    let k = ((z + half) / width).floor();
                    if k >= 0.0 && (k as usize) < bins {
                        counts[k as usize] += 1;
                    }
                }
                for (k, &c) in counts.iter().enumerate() {
                    let lo = -half + k as f64 * width;
                    let x = lo + 0.5 * width;
                    let normal =
                        (-x * x / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
                    rows.push(vec![
                        num(s.half_width),
                        num(lo),
                        num(lo + width),
                        num(x),
                        num(c as f64 / (n as f64 * width)),
                        num(normal),
                    ]);
                }
            }
            write_csv(
                &path,
                &["half_width", "bin_lo", "bin_hi", "x", "density", "normal"],
                &rows,
            )?;
        }
        PlotKind::VariancePlateau => {
            let Record::Clt(c) = record else {
                return Err(wrong_kind(kind, record, "clt"));
            };
            let v2 = &c.chaos.v2;
            let rows: Vec<Vec<String>> = c
                .variance
                .rows
                .iter()
                .map(|r| {
                    vec![
                        num(r.half_width),
                        num(r.v_n),
                        num(r.stderr),
                        num(r.ci_low),
                        num(r.ci_high),
                        num(v2.value),
                        num(v2.stderr),
                    ]
                })
                .collect();
            write_csv(
                &path,
                &[
                    "half_width",
                    "v_n",
                    "stderr",
                    "ci_low",
                    "ci_high",
                    "v2_inf",
                    "v2_inf_se",
                ],
                &rows,
            )?;
        }
        PlotKind::Semicircle => {
            let semi = match record {
                Record::Randmat(r) => r.semicircle.as_ref(),
                _ => None,
            }
            .ok_or_else(|| wrong_kind(kind, record, "randmat"))?;
            let rows: Vec<Vec<String>> = semi
                .histogram
                .centers()
                .iter()
                .zip(semi.histogram.density.iter().zip(&semi.overlay))
                .map(|(c, (h, s))| vec![num(*c), num(*h), num(*s)])
                .collect();
            write_csv(&path, &["lambda", "density", "semicircle"], &rows)?;
        }
        PlotKind::RhoIdentity => {
            let Record::Randmat(r) = record else {
                return Err(wrong_kind(kind, record, "randmat"));
            };
            let rows: Vec<Vec<String>> = r
                .rho
                .iter()
                .map(|x| vec![num(x.lambda), num(x.mc), num(x.stderr), opt(x.formula)])
                .collect();
            write_csv(&path, &["lambda", "mc", "stderr", "formula"], &rows)?;
        }
    }
    Ok(path)
}
