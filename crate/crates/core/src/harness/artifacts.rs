use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::hex_digest;
use super::experiment::{Divergence, ExperimentResult, ModeRateFit, Provenance, StabilityReport};
use crate::error::{Error, Result};

pub const CURVES_FILE: &str = "curves.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const FIG1_FILE: &str = "fig1_data.csv";
pub const PLOT_SCRIPT_FILE: &str = "plot_fig1.py";

const CURVES_HEADER: &str =
    "T,mode,quantile,error_inf,dd_bound,di_visits,di_pmf,lambda_min,lambda_max,visits";
const FIG1_HEADER: &str = "T,mode,quantile,error_inf";

const PLOT_SCRIPT: &str = r#"# Redraws the error curves from fig1_data.csv: median per mode with the
# band between the lowest and highest exported quantiles.
import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "fig1_data.csv"
curves = defaultdict(lambda: defaultdict(dict))
with open(path) as fh:
    for row in csv.DictReader(fh):
        curves[int(row["mode"])][float(row["quantile"])][int(row["T"])] = float(row["error_inf"])

fig, ax = plt.subplots()
for mode, by_q in sorted(curves.items()):
    qs = sorted(by_q)
    ts = sorted(by_q[qs[0]])
    mid = by_q[0.5] if 0.5 in by_q else by_q[qs[len(qs) // 2]]
    (line,) = ax.plot(ts, [mid[t] for t in ts], label=f"mode {mode}")
    if len(qs) > 1:
        ax.fill_between(ts, [by_q[qs[0]][t] for t in ts], [by_q[qs[-1]][t] for t in ts],
                        color=line.get_color(), alpha=0.25)
ax.set_xlabel("T")
ax.set_ylabel("max-abs estimation error")
ax.set_yscale("log")
ax.legend()
fig.savefig(path.rsplit(".", 1)[0] + ".png", dpi=150)
"#;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

#[derive(Serialize)]
struct Summary<'a> {
    checkpoints: &'a [usize],
    quantiles: &'a [f64],
    rate_fits: &'a [ModeRateFit],
    stability: &'a StabilityReport,
    divergence: &'a Divergence,
    provenance: &'a Provenance,
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn curves_csv(result: &ExperimentResult) -> String {
    let mut out = String::from(CURVES_HEADER);
    out.push('\n');
    for r in &result.curves {
        let fields = [
            r.t.to_string(),
            r.mode.to_string(),
            num(r.quantile),
            num(r.error_inf),
            num(r.dd_bound),
            num(r.di_visits),
            num(r.di_pmf),
            num(r.lambda_min),
            num(r.lambda_max),
            num(r.visits),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

fn fig1_csv(result: &ExperimentResult) -> String {
    let mut out = String::from(FIG1_HEADER);
    out.push('\n');
    for r in &result.curves {
        out.push_str(&format!("{},{},{},{}\n", r.t, r.mode, num(r.quantile), num(r.error_inf)));
    }
    out
}

/// Writes `curves.csv`, `fig1_data.csv`, `summary.json` and a plotting
/// script into `dir`. Contents depend only on the result, so identical
/// experiments give identical hashes.
pub fn emit_artifacts(result: &ExperimentResult, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let summary = Summary {
        checkpoints: &result.checkpoints,
        quantiles: &result.quantiles,
        rate_fits: &result.rate_fits,
        stability: &result.stability,
        divergence: &result.divergence,
        provenance: &result.provenance,
    };
    let mut summary_json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::invalid(format!("cannot serialize summary: {e}")))?;
    summary_json.push('\n');

    let files = [
        (CURVES_FILE, curves_csv(result)),
        (FIG1_FILE, fig1_csv(result)),
        (SUMMARY_FILE, summary_json),
        (PLOT_SCRIPT_FILE, PLOT_SCRIPT.to_string()),
    ];
    let mut manifest = Manifest { files: Vec::new() };
    for (name, content) in files {
        let path = dir.join(name);
        fs::write(&path, content.as_bytes()).map_err(|e| Error::io(&path, e))?;
        manifest.files.push(ManifestEntry {
            path,
            sha256: hex_digest(content.as_bytes()),
        });
    }
    Ok(manifest)
}
