//! CSV export.
//!
//! Column orders are fixed:
//!
//! | file                         | columns |
//! |------------------------------|---------|
//! | metrics (`*_metrics.csv`, `learning_curve_*.csv`, `sf_sweep.csv`, `dataset_summary.csv`) | experiment_id, config_hash, seed, metric_name, x_value, y_value, n_samples, wall_clock_ms |
//! | `ul_eval.csv`                | config, m, n, k, sir_db, snr_db, seed, nmse_raw, nmse_rec |
//! | `bler_vs_sinr.csv`, `bler_eval.csv` | receiver, sinr_db, n_frames, n_block_errors, bler, seed, config_hash |
//! | `grad_check.csv`             | check, params_checked, max_rel_err, tolerance, expect_pass, pass |
//! | `timing.csv`                 | model, batch_size, n_frames, mean_us, p50_us, p95_us, reference_us, frame_budget_us |
//!
//! Everything except `timing.csv` and `wall_clock.csv` is a pure function of
//! the config, so `wall_clock_ms` is zero in reproducible metrics files and
//! real run times go to `wall_clock.csv`.

use std::path::Path;

use intmit::metrics::MetricsRecord;
use serde::Serialize;

use crate::error::{BenchError, BenchResult};

#[derive(Debug, Serialize)]
struct MetricsRow<'a> {
    experiment_id: &'a str,
    config_hash: &'a str,
    seed: u64,
    metric_name: &'a str,
    x_value: f64,
    y_value: f64,
    n_samples: u64,
    wall_clock_ms: f64,
}

/// Sorts records by experiment, metric and x so that export order does not
/// depend on the order in which parallel work finished.
pub fn normalize(records: &mut [MetricsRecord]) {
    records.sort_by(|a, b| {
        a.experiment_id
            .cmp(&b.experiment_id)
            .then_with(|| a.metric_name.cmp(&b.metric_name))
            .then_with(|| a.x_value.total_cmp(&b.x_value))
    });
}

pub fn write_metrics(path: &Path, records: &[MetricsRecord]) -> BenchResult<()> {
    if records.is_empty() {
        return Err(BenchError::Export(format!("no records for {}", path.display())));
    }
    if let Some(r) = records.iter().find(|r| !r.y_value.is_finite()) {
        return Err(BenchError::Export(format!("non-finite {} in {}", r.metric_name, r.experiment_id)));
    }
    let mut sorted = records.to_vec();
    normalize(&mut sorted);
    let mut w = csv::Writer::from_path(path)?;
    for r in &sorted {
        w.serialize(MetricsRow {
            experiment_id: &r.experiment_id,
            config_hash: &r.config_hash,
            seed: r.seed,
            metric_name: &r.metric_name,
            x_value: r.x_value,
            y_value: r.y_value,
            n_samples: r.n_samples,
            wall_clock_ms: r.wall_clock_ms,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Writes rows of any serialisable type, refusing an empty list.
pub fn write_rows<R: Serialize>(path: &Path, rows: &[R]) -> BenchResult<()> {
    if rows.is_empty() {
        return Err(BenchError::Export(format!("no rows for {}", path.display())));
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads back a metrics CSV.
pub fn read_metrics(path: &Path) -> BenchResult<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let f = |i: usize| row.get(i).unwrap_or("");
        let num = |i: usize| f(i).parse::<f64>().map_err(|e| BenchError::Export(format!("{}: {e}", path.display())));
        let int = |i: usize| f(i).parse::<u64>().map_err(|e| BenchError::Export(format!("{}: {e}", path.display())));
        out.push(MetricsRecord {
            experiment_id: f(0).to_string(),
            config_hash: f(1).to_string(),
            seed: int(2)?,
            metric_name: f(3).to_string(),
            x_value: num(4)?,
            y_value: num(5)?,
            n_samples: int(6)?,
            wall_clock_ms: num(7)?,
        });
    }
    Ok(out)
}

/// Matplotlib script rendering every CSV the runner produces. It reads only
/// files from its own directory and skips the ones that are absent.
pub const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Plots for the intmit experiment CSVs in this directory."""
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

HERE = os.path.dirname(os.path.abspath(__file__))


def load(name):
    path = os.path.join(HERE, name)
    return pd.read_csv(path) if os.path.exists(path) else None


def save(fig, name):
    fig.tight_layout()
    fig.savefig(os.path.join(HERE, name), dpi=150)
    plt.close(fig)


def nmse_bars():
    df = load("ul_eval.csv")
    if df is None:
        return
    df["antennas"] = df["m"].astype(str) + "x" + df["n"].astype(str)
    g = df.groupby(["antennas", "config"]).mean(numeric_only=True).reset_index()
    fig, ax = plt.subplots(figsize=(6, 4))
    raw = g.groupby("antennas")["nmse_raw"].first()
    labels = list(raw.index)
    width = 0.8 / (1 + g["config"].nunique())
    xs = range(len(labels))
    ax.bar([x - 0.4 + width / 2 for x in xs], raw.values, width, label="raw H_I")
    for j, (cfg, sub) in enumerate(g.groupby("config")):
        sub = sub.set_index("antennas").reindex(labels)
        ax.bar([x - 0.4 + width * (j + 1.5) for x in xs], sub["nmse_rec"].values, width, label=cfg)
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels)
    ax.set_ylabel("NMSE")
    ax.legend()
    save(fig, "nmse.png")


def bler_curves():
    df = load("bler_vs_sinr.csv")
    if df is None:
        return
    fig, ax = plt.subplots(figsize=(6, 4))
    for rx, sub in df.groupby("receiver"):
        sub = sub.sort_values("sinr_db")
        ax.semilogy(sub["sinr_db"], sub["bler"].clip(lower=1e-4), marker="o", label=rx)
    ax.axhline(0.01, color="grey", lw=0.8, ls=":")
    ax.set_xlabel("SINR (dB)")
    ax.set_ylabel("BLER")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    save(fig, "bler.png")


def metric_curve(csv, metric, xlabel, ylabel, out, logy=False):
    df = load(csv)
    if df is None:
        return
    df = df[df["metric_name"] == metric]
    if df.empty:
        return
    fig, ax = plt.subplots(figsize=(6, 4))
    for exp, sub in df.groupby("experiment_id"):
        sub = sub.sort_values("x_value")
        ax.plot(sub["x_value"], sub["y_value"], marker="o", label=exp)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend()
    save(fig, out)


def timing():
    df = load("timing.csv")
    if df is None:
        return
    fig, ax = plt.subplots(figsize=(6, 4))
    for model, sub in df.groupby("model"):
        ax.loglog(sub["batch_size"], sub["mean_us"], marker="o", label=model)
    ax.axhline(df["reference_us"].iloc[0], color="grey", ls="--", label="144 us reference")
    ax.axhline(df["frame_budget_us"].iloc[0], color="black", ls=":", label="1 ms frame")
    ax.set_xlabel("batch size")
    ax.set_ylabel("latency per frame (us)")
    ax.legend()
    save(fig, "timing.png")


def main():
    nmse_bars()
    bler_curves()
    for arch in ("modular", "monolithic"):
        metric_curve(f"learning_curve_{arch}.csv", "heldout_nmse", "epoch", "held-out NMSE", f"learning_curve_{arch}.png", True)
    metric_curve("sf_sweep.csv", "heldout_nmse", "scale factor", "held-out NMSE", "sf_sweep.png")
    timing()
    return 0


if __name__ == "__main__":
    sys.exit(main())
"#;

pub fn write_plot_script(dir: &Path) -> BenchResult<()> {
    std::fs::write(dir.join("plot.py"), PLOT_SCRIPT)?;
    Ok(())
}
