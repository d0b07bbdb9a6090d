use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{snapshot_diagnostics, RunStatus, Trajectory};
use crate::lab::config::RunConfig;
use crate::norms::NormReport;
use crate::spectral::{Grid1D, RealField};

const SNAPSHOT_MAGIC: &[u8; 4] = b"DSP1";

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// `DSP1`, u64 n, f64 L, f64 time, then n f64 values, little-endian.
pub fn encode_snapshot(u: &RealField) -> Vec<u8> {
    let g = u.grid();
    let mut b = Vec::with_capacity(28 + 8 * g.n());
    b.extend_from_slice(SNAPSHOT_MAGIC);
    b.extend_from_slice(&(g.n() as u64).to_le_bytes());
    b.extend_from_slice(&g.length().to_le_bytes());
    b.extend_from_slice(&u.time().to_le_bytes());
    for v in u.values() {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b
}

pub fn decode_snapshot(bytes: &[u8], path: &Path) -> Result<RealField> {
    let bad = |m: &str| Error::Format {
        path: path.to_path_buf(),
        message: m.to_string(),
    };
    if bytes.len() < 28 || &bytes[..4] != SNAPSHOT_MAGIC {
        return Err(bad("missing DSP1 header"));
    }
    let word = |i: usize| <[u8; 8]>::try_from(&bytes[i..i + 8]).expect("eight bytes");
    let n = u64::from_le_bytes(word(4)) as usize;
    let length = f64::from_le_bytes(word(12));
    let time = f64::from_le_bytes(word(20));
    if bytes.len() != 28 + 8 * n {
        return Err(bad("length does not match the point count"));
    }
    let grid = Grid1D::new(n, length).map_err(|e| bad(&e.to_string()))?;
    let values = (0..n).map(|j| f64::from_le_bytes(word(28 + 8 * j))).collect();
    RealField::new(grid, values, time).map_err(|e| bad(&e.to_string()))
}

pub fn write_snapshot(path: &Path, u: &RealField) -> Result<()> {
    write_file(path, encode_snapshot(u))
}

pub fn read_snapshot(path: &Path) -> Result<RealField> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_snapshot(&bytes, path)
}

/// `t,key,value` rows, keys as in [`NormReport::rows`].
pub fn norm_reports_csv(reports: &[NormReport]) -> String {
    let mut s = String::from("t,key,value\n");
    for r in reports {
        for (t, key, v) in r.rows() {
            let _ = writeln!(s, "{t:?},{key},{v:?}");
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub platform: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub wall_time_s: f64,
    pub status: RunStatus,
    pub snapshots: usize,
    pub excluded_times: Vec<f64>,
}

impl Manifest {
    pub fn new(config: &RunConfig, status: RunStatus, snapshots: usize, wall_time_s: f64) -> Manifest {
        Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            platform: format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS),
            config_hash: config.hash(),
            config: config.clone(),
            wall_time_s,
            status,
            snapshots,
            excluded_times: Vec::new(),
        }
    }
}

/// Paths inside a run directory.
#[derive(Debug, Clone)]
pub struct RunDir(pub PathBuf);

impl RunDir {
    pub fn config(&self) -> PathBuf {
        self.0.join("config.txt")
    }
    pub fn manifest(&self) -> PathBuf {
        self.0.join("manifest.json")
    }
    pub fn snapshot(&self, i: usize) -> PathBuf {
        self.0.join("snapshots").join(format!("snap_{i:05}.dsp"))
    }
    pub fn report_csv(&self) -> PathBuf {
        self.0.join("decay_report.csv")
    }
    pub fn report_jsonl(&self) -> PathBuf {
        self.0.join("decay_report.jsonl")
    }
    pub fn diagnostics(&self) -> PathBuf {
        self.0.join("diagnostics.csv")
    }
    pub fn norms(&self) -> PathBuf {
        self.0.join("norms.csv")
    }
    pub fn residual(&self) -> PathBuf {
        self.0.join("residual.csv")
    }
    pub fn energy(&self, linearized: bool) -> PathBuf {
        self.0.join(if linearized { "energy_linearized.csv" } else { "energy.csv" })
    }
}

pub fn diagnostics_csv(traj: &Trajectory) -> String {
    let mut s = String::from("t,mass,l2,hamiltonian,tail_mass\n");
    for d in &traj.diagnostics {
        let _ = writeln!(s, "{:?},{:?},{:?},{:?},{:?}", d.time, d.mass, d.l2, d.hamiltonian, d.tail_mass);
    }
    s
}

pub fn write_manifest(dir: &RunDir, manifest: &Manifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serialises");
    write_file(&dir.manifest(), text)
}

pub fn read_manifest(dir: &RunDir) -> Result<Manifest> {
    let path = dir.manifest();
    serde_json::from_str(&read_text(&path)?).map_err(|e| Error::Format {
        path,
        message: e.to_string(),
    })
}

/// Reloads the configuration and snapshots of a persisted run.
pub fn load_run(dir: &Path) -> Result<(RunConfig, Trajectory)> {
    let dir = RunDir(dir.to_path_buf());
    let config = RunConfig::load(&dir.config())?;
    let manifest = read_manifest(&dir)?;
    let mut snapshots = Vec::with_capacity(manifest.snapshots);
    for i in 0..manifest.snapshots {
        snapshots.push(read_snapshot(&dir.snapshot(i))?);
    }
    if snapshots.is_empty() {
        return Err(Error::InsufficientData(format!("{} holds no snapshots", dir.0.display())));
    }
    let mut evo = config.evolution.clone();
    evo.tail_threshold = Some(config.verify.tail_threshold);
    let diagnostics = snapshots.iter().map(|u| snapshot_diagnostics(u, &evo)).collect();
    Ok((
        config,
        Trajectory {
            config: evo,
            snapshots,
            diagnostics,
            status: manifest.status,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trip_and_layout() {
        let grid = Grid1D::new(16, 10.0).unwrap();
        let u = RealField::from_fn(grid, 2.5, |x| x.sin());
        let bytes = encode_snapshot(&u);
        assert_eq!(&bytes[..4], b"DSP1");
        assert_eq!(u64::from_le_bytes(bytes[4..12].try_into().unwrap()), 16);
        assert_eq!(f64::from_le_bytes(bytes[12..20].try_into().unwrap()), 10.0);
        assert_eq!(f64::from_le_bytes(bytes[20..28].try_into().unwrap()), 2.5);
        assert_eq!(bytes.len(), 28 + 8 * 16);
        let back = decode_snapshot(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, u);
        assert!(decode_snapshot(&bytes[..40], Path::new("mem")).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(decode_snapshot(&bad, Path::new("mem")).unwrap_err().exit_code(), 4);
    }
}
