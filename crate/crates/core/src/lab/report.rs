use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::EvolutionConfig;
use crate::lab::config::VerifySpec;
use crate::norms::{besov_norm, elliptic_log_sup, localized_l2, region_masks, sobolev_norm, tail_mass, weighted_sup, RegionLabel};
use crate::spectral::{derivative, RealField};
use crate::vector_fields::apply_l;

/// Derivative orders reported per snapshot.
pub const ORDERS: [u32; 4] = [0, 1, 2, 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    /// Last row kept before the run stopped.
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub t: f64,
    pub k: u32,
    /// `sup t^{1/8+k/4} <x>^{3/8-k/4} |∂^k u|`.
    pub c_k: f64,
    /// Elliptic log-weighted supremum; `None` when no point qualifies.
    pub c_k_elliptic: Option<f64>,
    pub besov: f64,
    /// `|| |D|^{1/2} L^NL u ||_{L^2}`.
    pub lnl_sobolev: f64,
    /// `R^{-1/2} ||L^NL u||_{L^2(A_R)}` for `R = band_ratio^{2j} t^{1/5}`.
    pub rho_l: Vec<Option<f64>>,
    /// `t^{(1+2k)/8} R^{-(1/8+k/4)} ||∂^k u||_{L^2(A_R)}` on the same bands.
    pub rho_k: Vec<Option<f64>>,
    pub tail_mass: f64,
    pub status: RowStatus,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub bands: usize,
    pub rows: Vec<DecayRow>,
    /// Snapshot times dropped for exceeding the tail threshold.
    pub excluded: Vec<f64>,
}

/// `x u + 5t u_4x` plus the power term of the flow that produced `u`.
pub fn lnl_field(u: &RealField, cfg: &EvolutionConfig) -> Result<RealField> {
    let t = u.time();
    let c = cfg.sign * cfg.nonlinear_scale * 5.0 / (cfg.m + 1) as f64 * t;
    let power = cfg.m as i32 + 1;
    apply_l(u, t)?.zip_with(u, |a, v| a + c * v.powi(power))
}

/// Rows `k = 0..=3` for one snapshot at positive time.
pub fn snapshot_rows(u: &RealField, cfg: &EvolutionConfig, verify: &VerifySpec) -> Result<Vec<DecayRow>> {
    let t = u.time();
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("report time {t} must be positive")));
    }
    let masks = region_masks(u.grid(), t, verify.thresholds())?;
    let bands: Vec<_> = masks
        .iter()
        .filter(|m| m.label == RegionLabel::Dyadic)
        .take(verify.bands)
        .collect();
    let lu = lnl_field(u, cfg)?;
    let lnl_sobolev = sobolev_norm(&lu, 0.5)?;
    let besov = besov_norm(u);
    let tail = tail_mass(u);
    let per_band = |f: &RealField, weight: &dyn Fn(f64) -> f64| -> Result<Vec<Option<f64>>> {
        let mut out = Vec::with_capacity(verify.bands);
        for j in 0..verify.bands {
            out.push(match bands.get(j) {
                Some(m) if !m.is_empty() => Some(weight(m.r.unwrap_or(1.0)) * localized_l2(f, m)?),
                _ => None,
            });
        }
        Ok(out)
    };
    let rho_l = per_band(&lu, &|r| r.powf(-0.5))?;
    let mut rows = Vec::with_capacity(ORDERS.len());
    for k in ORDERS {
        let d = derivative(u, k)?;
        let kq = k as f64 / 4.0;
        let c_k = weighted_sup(&d, t, 0.125 + kq, 0.375 - kq, None)?;
        let c_k_elliptic = elliptic_log_sup(u, t, k, verify.k_s)?.value();
        let tf = t.powf((1.0 + 2.0 * k as f64) / 8.0);
        let rho_k = per_band(&d, &|r| tf * r.powf(-(0.125 + kq)))?;
        rows.push(DecayRow {
            t,
            k,
            c_k,
            c_k_elliptic,
            besov,
            lnl_sobolev,
            rho_l: rho_l.clone(),
            rho_k,
            tail_mass: tail,
            status: RowStatus::Ok,
        });
    }
    Ok(rows)
}

/// Report over all snapshots with `t > 0`; snapshots above the tail threshold
/// are excluded and listed. `aborted` marks the last kept snapshot.
pub fn decay_report(snapshots: &[RealField], cfg: &EvolutionConfig, verify: &VerifySpec, aborted: bool) -> Result<DecayReport> {
    use rayon::prelude::*;
    let kept: Vec<&RealField> = snapshots.iter().filter(|u| u.time() > 0.0).collect();
    let computed: Vec<(f64, Option<Vec<DecayRow>>)> = kept
        .par_iter()
        .map(|u| {
            if tail_mass(u) > verify.tail_threshold {
                Ok((u.time(), None))
            } else {
                Ok((u.time(), Some(snapshot_rows(u, cfg, verify)?)))
            }
        })
        .collect::<Result<_>>()?;
    let mut report = DecayReport {
        bands: verify.bands,
        ..Default::default()
    };
    for (t, rows) in computed {
        match rows {
            Some(r) => report.rows.extend(r),
            None => report.excluded.push(t),
        }
    }
    if aborted {
        if let Some(last_t) = report.rows.last().map(|r| r.t) {
            for r in report.rows.iter_mut().filter(|r| r.t == last_t) {
                r.status = RowStatus::Aborted;
            }
        }
    }
    Ok(report)
}

pub fn csv_header(bands: usize) -> String {
    let mut h = String::from("t,k,C_k,C_k_elliptic,besov,lnl_sobolev");
    for j in 0..bands {
        let _ = write!(h, ",rho_L_R{j}");
    }
    h.push_str(",tail_mass,status");
    h
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:?}"))
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.parse().map_err(|_| Error::Parse {
        origin: "decay report".into(),
        line,
        message: format!("invalid number {s:?}"),
    })
}

fn parse_opt(s: &str, line: usize) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_f64(s, line).map(Some)
    }
}

impl DecayReport {
    /// Column `C_k` for one `k` as `(t, value)` pairs.
    pub fn series(&self, k: u32) -> Vec<(f64, f64)> {
        self.rows.iter().filter(|r| r.k == k).map(|r| (r.t, r.c_k)).collect()
    }

    pub fn max_c(&self, k: u32) -> Option<f64> {
        self.series(k).into_iter().map(|(_, v)| v).reduce(f64::max)
    }

    pub fn aborted(&self) -> bool {
        self.rows.iter().any(|r| r.status == RowStatus::Aborted)
    }

    /// Empty cells mark an empty region or a band beyond the box.
    pub fn to_csv(&self) -> String {
        let mut s = csv_header(self.bands);
        s.push('\n');
        for r in &self.rows {
            let _ = write!(
                s,
                "{:?},{},{:?},{},{:?},{:?}",
                r.t,
                r.k,
                r.c_k,
                opt(r.c_k_elliptic),
                r.besov,
                r.lnl_sobolev
            );
            for v in &r.rho_l {
                let _ = write!(s, ",{}", opt(*v));
            }
            let status = match r.status {
                RowStatus::Ok => "ok",
                RowStatus::Aborted => "aborted",
            };
            let _ = writeln!(s, ",{:?},{status}", r.tail_mass);
        }
        s
    }

    /// Reads the CSV form back. The per-`k` band columns are not part of the
    /// CSV and come back empty.
    pub fn from_csv(text: &str) -> Result<DecayReport> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("");
        let cols: Vec<&str> = header.split(',').collect();
        let bands = cols.len().saturating_sub(8);
        if cols.len() < 8 || header != csv_header(bands) {
            return Err(Error::Parse {
                origin: "decay report".into(),
                line: 1,
                message: format!("unexpected header {header:?}"),
            });
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let ln = i + 2;
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != cols.len() {
                return Err(Error::Parse {
                    origin: "decay report".into(),
                    line: ln,
                    message: format!("expected {} fields, found {}", cols.len(), f.len()),
                });
            }
            let status = match f[f.len() - 1] {
                "ok" => RowStatus::Ok,
                "aborted" => RowStatus::Aborted,
                other => {
                    return Err(Error::Parse {
                        origin: "decay report".into(),
                        line: ln,
                        message: format!("unknown status {other:?}"),
                    })
                }
            };
            rows.push(DecayRow {
                t: parse_f64(f[0], ln)?,
                k: parse_f64(f[1], ln)? as u32,
                c_k: parse_f64(f[2], ln)?,
                c_k_elliptic: parse_opt(f[3], ln)?,
                besov: parse_f64(f[4], ln)?,
                lnl_sobolev: parse_f64(f[5], ln)?,
                rho_l: f[6..6 + bands].iter().map(|s| parse_opt(s, ln)).collect::<Result<_>>()?,
                rho_k: Vec::new(),
                tail_mass: parse_f64(f[6 + bands], ln)?,
                status,
            });
        }
        Ok(DecayReport {
            bands,
            rows,
            excluded: Vec::new(),
        })
    }

    /// One JSON object per row, all columns included.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            s.push_str(&serde_json::to_string(r).expect("row serialises"));
            s.push('\n');
        }
        s
    }

    pub fn from_jsonl(text: &str, bands: usize) -> Result<DecayReport> {
        let rows = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::Parse {
                    origin: "decay report".into(),
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(DecayReport {
            bands,
            rows,
            excluded: Vec::new(),
        })
    }
}
