//! Report rendering: `key=value` lines, aligned text and CSV.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::eval::{EvalReport, RobustnessTable};
use crate::train::EpochLosses;

/// Ordered `key=value` pairs. Floats are written with full round-trip
/// precision so reports are byte-stable across identical runs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub title: String,
    pub entries: Vec<(String, String)>,
}

impl Report {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Display) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn extend(&mut self, prefix: &str, other: &Report) {
        for (k, v) in &other.entries {
            self.entries.push((format!("{prefix}{k}"), v.clone()));
        }
    }

    pub fn render_kv(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn render_text(&self) -> String {
        let width = self.entries.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut s = format!("{}\n{}\n", self.title, "=".repeat(self.title.len()));
        for (k, v) in &self.entries {
            s.push_str(&format!("{k:<width$}  {v}\n"));
        }
        s
    }

    /// Write `<prefix>.txt` and `<prefix>.kv`; returns both paths.
    pub fn write(&self, prefix: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
        let prefix = prefix.as_ref();
        let text = with_suffix(prefix, "txt");
        let kv = with_suffix(prefix, "kv");
        if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(&text, self.render_text())?;
        fs::write(&kv, self.render_kv())?;
        Ok((text, kv))
    }
}

pub fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |v| v.to_string())
}

impl EvalReport {
    pub fn to_report(&self, title: &str) -> Report {
        let mut r = Report::new(title);
        r.push("samples", self.count);
        r.push("with_detector", self.with_detector);
        r.push("theta", opt(self.theta));
        r.push("accuracy", self.accuracy);
        r.push("auc", opt(self.auc));
        r.push("fake_recall", self.fake_recall);
        r.push("unknown_rate", self.unknown_rate);
        let c = &self.confusion;
        r.push("confusion.true_fake", c.true_fake);
        r.push("confusion.false_fake", c.false_fake);
        r.push("confusion.true_real", c.true_real);
        r.push("confusion.false_real", c.false_real);
        for d in &self.per_domain {
            let p = format!("domain.{}.", d.domain);
            r.push(format!("{p}samples"), d.count);
            r.push(format!("{p}accuracy"), d.accuracy);
            r.push(format!("{p}mean_probability"), d.mean_probability);
            r.push(format!("{p}mean_discrepancy"), d.mean_discrepancy);
            r.push(format!("{p}unknown_rate"), d.unknown_rate);
        }
        r
    }
}

impl RobustnessTable {
    pub fn to_report(&self, title: &str) -> Report {
        let mut r = Report::new(title);
        r.push("auc.unperturbed", self.base_auc);
        for row in &self.rows {
            for (s, a) in row.auc.iter().enumerate() {
                r.push(format!("auc.{}.{s}", row.kind.name()), a);
            }
            for (s, e) in row.energy.iter().enumerate() {
                r.push(format!("energy.{}.{}", row.kind.name(), s + 1), e);
            }
            r.push(format!("decay.{}", row.kind.name()), row.decay);
        }
        for (s, a) in self.average.iter().enumerate() {
            r.push(format!("auc.average.{s}"), a);
        }
        r.push("decay.average", self.average_decay);
        r
    }

    /// `kind,0,1,2,3,4,5,decay` rows plus an `average` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,0,1,2,3,4,5,decay\n");
        let line = |name: &str, auc: &[f64], decay: f64| {
            let cells: Vec<String> = auc.iter().map(|a| a.to_string()).collect();
            format!("{name},{},{decay}\n", cells.join(","))
        };
        for row in &self.rows {
            s.push_str(&line(row.kind.name(), &row.auc, row.decay));
        }
        s.push_str(&line("average", &self.average, self.average_decay));
        s
    }
}

/// Per-epoch loss curve.
pub fn loss_curve_report(title: &str, epochs: &[EpochLosses]) -> Report {
    let mut r = Report::new(title);
    r.push("epochs", epochs.len());
    for e in epochs {
        let p = format!("epoch.{}.", e.epoch);
        r.push(format!("{p}steps"), e.steps);
        r.push(format!("{p}total"), e.total);
        r.push(format!("{p}cross_entropy"), e.cross_entropy);
        r.push(format!("{p}bias_expansion"), e.bias_expansion);
        r.push(format!("{p}l1"), e.l1);
        r.push(format!("{p}l2"), e.l2);
        r.push(format!("{p}l3"), e.l3);
    }
    r
}
