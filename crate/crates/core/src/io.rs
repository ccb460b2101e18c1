//! Profile and branch files.
//!
//! Profiles are CSV with header `r,f,S,m` and a JSON sidecar next to them
//! (`p.csv` → `p.json`). Numbers are written with 17 significant digits so
//! every value round-trips exactly.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::continuation::{Branch, TransitionFit};
use crate::error::{Error, Result};
use crate::grid::{Grading, RadialGrid};
use crate::model::{Kappa, ModelParams, Profile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileMeta {
    pub kappa: Kappa,
    pub d: u32,
    pub g: f64,
    pub r_max: f64,
    pub n: usize,
    pub grading: Grading,
    pub energy_total: f64,
    pub pohozaev_rel_err: f64,
    /// Resolved run configuration, when written by the CLI.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl ProfileMeta {
    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.kappa, self.d as i64, self.g)
    }

    pub fn grid(&self) -> Result<RadialGrid> {
        RadialGrid::new(self.n, self.r_max, self.grading)
    }
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

fn sci(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_profile(path: &Path, p: &Profile, meta: &ProfileMeta) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["r", "f", "S", "m"])?;
    for i in 0..p.f.len() {
        w.write_record([sci(p.grid.r()[i]), sci(p.f[i]), sci(p.s[i]), sci(p.m[i])])?;
    }
    w.flush()?;
    write_json(&sidecar_path(path), meta)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

/// Reads a profile and its sidecar; the grid is rebuilt from the sidecar and
/// checked against the `r` column.
pub fn read_profile(path: &Path) -> Result<(Profile, ProfileMeta)> {
    let meta: ProfileMeta = serde_json::from_reader(File::open(sidecar_path(path))?)?;
    let grid = Arc::new(meta.grid()?);
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if header != ["r", "f", "S", "m"] {
        return Err(Error::Format(format!(
            "expected header r,f,S,m, got {}",
            header.join(",")
        )));
    }
    let (mut r, mut f, mut s, mut m) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("bad number: {e}")))?;
        if vals.len() != 4 {
            return Err(Error::Format(format!("expected 4 columns, got {}", vals.len())));
        }
        r.push(vals[0]);
        f.push(vals[1]);
        s.push(vals[2]);
        m.push(vals[3]);
    }
    grid.check_len(r.len())?;
    let scale = grid.r_max();
    if r.iter().zip(grid.r()).any(|(a, b)| (a - b).abs() > 1e-12 * scale) {
        return Err(Error::GridMismatch);
    }
    Ok((Profile::new(grid, f, s, m)?, meta))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchMeta {
    pub kappa: Kappa,
    pub d: u32,
    pub g_star: f64,
    pub g_min: f64,
    pub steps: usize,
    pub r_max: f64,
    pub n: usize,
    pub grading: Grading,
    pub transition: Option<TransitionFit>,
    pub aborted: Option<String>,
    /// The orthogonality in the direction solve uses the quadrature inner product.
    pub orthogonality: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

pub fn write_branch(path: &Path, branch: &Branch) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["g", "m0", "energy", "lambda_min", "pohozaev_rel", "newton_iters"])?;
    for p in &branch.points {
        w.write_record([
            sci(p.g),
            sci(p.m0),
            sci(p.energy),
            sci(p.lambda_min),
            sci(p.pohozaev_rel),
            p.newton_iters.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
