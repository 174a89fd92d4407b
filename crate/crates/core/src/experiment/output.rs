use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{Evaluation, SweepScheme};
use super::sweep::SweepTable;
use crate::coded_multicast::MulticastRatePlan;
use crate::optimizer::{uniform_plan, CcCmSolution, Scheme};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Plotdata,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "plotdata" => Ok(OutputFormat::Plotdata),
            other => Err(Error::config(format!(
                "unknown format {other:?}; use csv or plotdata"
            ))),
        }
    }
}

fn output_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Output {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(output_error(path))
}

/// Writes the table into `dir` (created if missing) and returns the files
/// written.
pub fn emit_outputs(table: &SweepTable, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
    if table.rows.is_empty() {
        return Err(Error::contract("nothing to write: the table is empty"));
    }
    fs::create_dir_all(dir).map_err(output_error(dir))?;
    match format {
        OutputFormat::Csv => {
            let path = dir.join("sweep.csv");
            write_file(&path, &csv_bytes(table)?)?;
            Ok(vec![path])
        }
        OutputFormat::Plotdata => write_plotdata(table, dir),
    }
}

pub fn csv_bytes(table: &SweepTable) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scheme", "R", "M", "distortion", "stderr", "meta"])?;
    for r in &table.rows {
        w.write_record([
            r.scheme.name().to_string(),
            r.capacity.to_string(),
            r.cache.to_string(),
            r.distortion.to_string(),
            r.stderr.to_string(),
            r.meta.clone(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

#[derive(Debug, Serialize)]
struct Curve {
    scheme: SweepScheme,
    capacity: f64,
    file: String,
    points: usize,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    seed: u64,
    n: usize,
    m: usize,
    alpha: Option<f64>,
    sigma2_spec: String,
    sigma2: &'a [f64],
    trials: usize,
    evaluation: Evaluation,
    columns: [&'static str; 2],
    curves: Vec<Curve>,
}

fn curve_file(scheme: SweepScheme, capacity: f64) -> String {
    format!("{}_R{capacity}.dat", scheme.name())
}

fn write_plotdata(table: &SweepTable, dir: &Path) -> Result<Vec<PathBuf>> {
    let spec = &table.spec;
    let mut written = Vec::new();
    let mut curves = Vec::new();
    for &scheme in &spec.schemes {
        for &capacity in &spec.capacities {
            let points = table.curve(scheme, capacity);
            if points.is_empty() {
                continue;
            }
            let file = curve_file(scheme, capacity);
            let mut text = String::from("# M distortion\n");
            for (m, d) in &points {
                text.push_str(&format!("{m} {d}\n"));
            }
            let path = dir.join(&file);
            write_file(&path, text.as_bytes())?;
            written.push(path);
            curves.push(Curve {
                scheme,
                capacity,
                file,
                points: points.len(),
            });
        }
    }
    let manifest = Manifest {
        seed: spec.seed,
        n: spec.instance.n,
        m: spec.instance.m,
        alpha: spec.instance.alpha,
        sigma2_spec: spec.instance.sigma2.to_string(),
        sigma2: &table.variances,
        trials: spec.trials,
        evaluation: spec.evaluation,
        columns: ["M", "distortion"],
        curves,
    };
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write_file(&path, text.as_bytes())?;
    written.push(path);
    Ok(written)
}

/// A CC-CM design saved for replay by the packet simulator. The plan always
/// covers every file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub scheme: Scheme,
    pub capacity: f64,
    pub budgets: Vec<f64>,
    pub objective: f64,
    pub feasible: bool,
    pub m_tilde: Option<usize>,
    pub constraint_slack: f64,
    pub plan: MulticastRatePlan,
}

impl SolutionFile {
    pub fn new(sol: &CcCmSolution, capacity: f64, budgets: &[f64], m: usize) -> Result<Self> {
        let plan = match sol.scheme {
            Scheme::Uniform => uniform_plan(sol, m)?,
            _ => sol.plan.clone(),
        };
        Ok(Self {
            scheme: sol.scheme,
            capacity,
            budgets: budgets.to_vec(),
            objective: sol.objective,
            feasible: sol.feasible,
            m_tilde: sol.m_tilde,
            constraint_slack: sol.constraint_slack,
            plan,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("solution serializes");
        text.push('\n');
        write_file(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let file: SolutionFile = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        // re-validates the matrices
        let p = file.plan.clone();
        MulticastRatePlan::new(p.cached, p.multicast, p.unicast)?;
        Ok(file)
    }
}
