use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use crate::experiment::RESULT_HEADER;

pub const SUMMARY_HEADER: &str = "task,method,deg,noise,lambda,beta,shift,n,regret_mean,regret_std,wall_mean";

#[derive(Debug, Default, Clone, PartialEq)]
pub struct Group {
    pub regrets: Vec<f64>,
    pub walls: Vec<f64>,
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Groups rows by every configuration column plus the shift tag. Comment
/// lines, repeated headers and failed rows are skipped.
pub fn collect(files: &[impl AsRef<Path>]) -> Result<BTreeMap<Vec<String>, Group>> {
    let mut groups: BTreeMap<Vec<String>, Group> = BTreeMap::new();
    let width = RESULT_HEADER.split(',').count();
    for file in files {
        let path = file.as_ref();
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line == RESULT_HEADER {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != width {
                bail!("{}:{}: expected {width} columns, found {}", path.display(), lineno + 1, cols.len());
            }
            let regret: f64 = cols[8]
                .parse()
                .with_context(|| format!("{}:{}: regret", path.display(), lineno + 1))?;
            let wall: f64 = cols[10]
                .parse()
                .with_context(|| format!("{}:{}: wall seconds", path.display(), lineno + 1))?;
            if !regret.is_finite() {
                continue;
            }
            let key = [0, 1, 2, 3, 4, 5, 7].iter().map(|&i| cols[i].to_string()).collect();
            let g = groups.entry(key).or_default();
            g.regrets.push(regret);
            g.walls.push(wall);
        }
    }
    Ok(groups)
}

pub fn summarize(groups: &BTreeMap<Vec<String>, Group>) -> String {
    let mut s = format!("{SUMMARY_HEADER}\n");
    for (key, g) in groups {
        let (mean, std) = mean_std(&g.regrets);
        let (wall, _) = mean_std(&g.walls);
        let _ = writeln!(s, "{},{},{:.6},{:.6},{:.3}", key.join(","), g.regrets.len(), mean, std, wall);
    }
    s
}
