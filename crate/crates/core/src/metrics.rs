//! Error statistics over predicted angles, angle-binned breakdowns and the
//! JSON/CSV report.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::training::Prediction;
use crate::{Error, Result};

/// Denominator floor for MAPE, in degrees.
pub const MAPE_FLOOR_DEG: f64 = 1.0;
pub const DEFAULT_BIN_EDGES: [f64; 2] = [60.0, 120.0];

/// Errors are `pred - true`, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub mae: f64,
    pub rmse: f64,
    pub me: f64,
    /// None when any true angle is below the MAPE floor.
    pub mape_percent: Option<f64>,
    /// None when the true angles are all equal.
    pub r_squared: Option<f64>,
}

pub fn compute_metrics(theta_pred: &[f64], theta_true: &[f64]) -> Result<MetricSet> {
    compute_metrics_with_floor(theta_pred, theta_true, MAPE_FLOOR_DEG)
}

pub fn compute_metrics_with_floor(
    theta_pred: &[f64],
    theta_true: &[f64],
    mape_floor: f64,
) -> Result<MetricSet> {
    if theta_true.len() != theta_pred.len() {
        return Err(Error::invalid(format!(
            "{} predictions vs {} true values",
            theta_pred.len(),
            theta_true.len()
        )));
    }
    if theta_true.is_empty() {
        return Err(Error::MetricUndefined("no samples".into()));
    }
    if theta_true.iter().chain(theta_pred).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite angle in metrics input".into()));
    }
    let n = theta_true.len() as f64;
    let (mut abs, mut sq, mut sum, mut ape) = (0.0, 0.0, 0.0, 0.0);
    for (&p, &t) in theta_pred.iter().zip(theta_true) {
        let e = p - t;
        abs += e.abs();
        sq += e * e;
        sum += e;
        ape += e.abs() / t;
    }
    let mape_defined = theta_true.iter().all(|&t| t >= mape_floor);
    let mean_t = theta_true.iter().sum::<f64>() / n;
    let ss_tot: f64 = theta_true.iter().map(|t| (t - mean_t).powi(2)).sum();
    Ok(MetricSet {
        mae: abs / n,
        rmse: (sq / n).sqrt(),
        me: sum / n,
        mape_percent: mape_defined.then(|| 100.0 * ape / n),
        r_squared: (ss_tot > 0.0).then(|| 1.0 - sq / ss_tot),
    })
}

pub fn metrics_for(preds: &[Prediction]) -> Result<MetricSet> {
    metrics_for_with_floor(preds, MAPE_FLOOR_DEG)
}

fn metrics_for_with_floor(preds: &[Prediction], mape_floor: f64) -> Result<MetricSet> {
    let p: Vec<f64> = preds.iter().map(|p| p.theta_pred_deg).collect();
    let t: Vec<f64> = preds.iter().map(|p| p.theta_true_deg).collect();
    compute_metrics_with_floor(&p, &t, mape_floor)
}

/// Error summary for one band of true angles; metrics are None when the
/// band is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinMetrics {
    pub label: String,
    pub count: usize,
    pub mae: Option<f64>,
    pub rmse: Option<f64>,
    pub me: Option<f64>,
}

fn fmt_edge(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        v.to_string()
    }
}

/// Bins by true angle. For edges `e1 < ... < ek`: `θ < e1`, then
/// `e_i <= θ < e_{i+1}`, with the last interior bin closed on the right
/// (`e_{k-1} <= θ <= ek`), then `θ > ek`.
pub fn binned_metrics(preds: &[Prediction], edges: &[f64]) -> Result<Vec<BinMetrics>> {
    if edges.is_empty() {
        return Err(Error::invalid("at least one bin edge is required"));
    }
    if edges.windows(2).any(|w| !(w[0] < w[1])) || edges.iter().any(|&e| !(e > 0.0 && e < 180.0)) {
        return Err(Error::invalid("bin edges must be strictly increasing within (0, 180)"));
    }
    let k = edges.len();
    let mut labels = Vec::with_capacity(k + 1);
    labels.push(format!("theta<{}", fmt_edge(edges[0])));
    for i in 0..k - 1 {
        let op = if i == k - 2 { "<=" } else { "<" };
        labels.push(format!("{}<=theta{op}{}", fmt_edge(edges[i]), fmt_edge(edges[i + 1])));
    }
    labels.push(format!("theta>{}", fmt_edge(edges[k - 1])));

    let bin_of = |t: f64| -> usize {
        if t < edges[0] {
            0
        } else if t > edges[k - 1] {
            k
        } else {
            // Interior: largest i with edges[i] <= t, capped to the last interior bin.
            let i = edges.partition_point(|&e| e <= t);
            i.min(k - 1).max(1)
        }
    };
    let mut members: Vec<Vec<Prediction>> = vec![Vec::new(); labels.len()];
    for p in preds {
        members[bin_of(p.theta_true_deg)].push(p.clone());
    }
    labels
        .into_iter()
        .zip(members)
        .map(|(label, m)| {
            let metrics = if m.is_empty() { None } else { Some(metrics_for(&m)?) };
            Ok(BinMetrics {
                label,
                count: m.len(),
                mae: metrics.map(|s| s.mae),
                rmse: metrics.map(|s| s.rmse),
                me: metrics.map(|s| s.me),
            })
        })
        .collect()
}

/// One row of a comparison table, formatted to two decimals.
pub fn format_table_row(name: &str, m: &MetricSet) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"));
    format!(
        "{name} | {:.2} | {:.2} | {:.2} | {} | {}",
        m.mae,
        m.rmse,
        m.me,
        opt(m.mape_percent),
        opt(m.r_squared)
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub metrics: MetricSet,
    /// Restricted to unrotated originals, when the prediction set mixes
    /// originals with rotated copies.
    pub metrics_originals: Option<MetricSet>,
    pub bins: Vec<BinMetrics>,
    pub config: serde_json::Value,
    pub n_samples: usize,
}

fn is_rotated_id(id: &str) -> bool {
    id.rsplit_once("_r").is_some_and(|(_, s)| {
        s.len() > 1
            && s.starts_with(['+', '-'])
            && s[1..].parse::<f64>().is_ok()
            && s[1..].chars().all(|c| c.is_ascii_digit() || c == '.')
    })
}

/// Rotated copies are recognized by the `_r+NN` / `_r-NN.NNNN` id suffix
/// that augmentation assigns.
pub fn build_report(
    preds: &[Prediction],
    edges: &[f64],
    mape_floor: f64,
    config: serde_json::Value,
) -> Result<Report> {
    let originals: Vec<Prediction> =
        preds.iter().filter(|p| !is_rotated_id(&p.image_id)).cloned().collect();
    let metrics_originals = if originals.is_empty() || originals.len() == preds.len() {
        None
    } else {
        Some(metrics_for_with_floor(&originals, mape_floor)?)
    };
    Ok(Report {
        n_samples: preds.len(),
        metrics: metrics_for_with_floor(preds, mape_floor)?,
        metrics_originals,
        bins: binned_metrics(preds, edges)?,
        config,
    })
}

pub fn write_scatter(writer: impl Write, preds: &[Prediction]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(["theta_true_deg", "theta_pred_deg"])?;
    for p in preds {
        w.write_record([p.theta_true_deg.to_string(), p.theta_pred_deg.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `report.json` and `scatter.csv` into `dir`.
pub fn emit_report(report: &Report, preds: &[Prediction], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut json = serde_json::to_vec_pretty(report)?;
    json.push(b'\n');
    std::fs::write(dir.join("report.json"), json)?;
    write_scatter(
        std::io::BufWriter::new(std::fs::File::create(dir.join("scatter.csv"))?),
        preds,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(id: &str, t: f64, p: f64) -> Prediction {
        Prediction {
            image_id: id.into(),
            theta_true_deg: t,
            theta_pred_deg: p,
        }
    }

    #[test]
    fn perfect_prediction() {
        let m = compute_metrics(&[30.0, 60.0, 90.0], &[30.0, 60.0, 90.0]).unwrap();
        assert_eq!((m.mae, m.rmse, m.me), (0.0, 0.0, 0.0));
        assert_eq!(m.mape_percent, Some(0.0));
        assert_eq!(m.r_squared, Some(1.0));
    }

    #[test]
    fn hand_example() {
        let m = compute_metrics(&[110.0, 50.0], &[100.0, 60.0]).unwrap();
        assert_eq!((m.mae, m.rmse, m.me), (10.0, 10.0, 0.0));
        let mape = 100.0 * (10.0 / 100.0 + 10.0 / 60.0) / 2.0;
        assert!((m.mape_percent.unwrap() - mape).abs() < 1e-12);
        assert!((m.mape_percent.unwrap() - 13.33).abs() < 0.01);
    }

    #[test]
    fn undefined_cases() {
        let m = compute_metrics(&[89.0, 91.0], &[90.0, 90.0]).unwrap();
        assert_eq!(m.r_squared, None);
        assert_eq!(m.me, 0.0);
        let m = compute_metrics(&[1.0, 3.0], &[0.5, 2.0]).unwrap();
        assert_eq!(m.mape_percent, None);
        assert_eq!(m.mae, 0.75);
        assert!(matches!(compute_metrics(&[], &[]), Err(Error::MetricUndefined(_))));
        assert!(compute_metrics(&[1.0], &[1.0, 2.0]).is_err());
        assert!(compute_metrics(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn bins_follow_edge_rules() {
        let preds = vec![
            pred("a", 59.9, 60.9),
            pred("b", 60.0, 60.0),
            pred("c", 120.0, 121.0),
            pred("d", 120.1, 118.1),
        ];
        let bins = binned_metrics(&preds, &DEFAULT_BIN_EDGES).unwrap();
        let labels: Vec<_> = bins.iter().map(|b| b.label.as_str()).collect();
        assert_eq!(labels, ["theta<60", "60<=theta<=120", "theta>120"]);
        assert_eq!(bins.iter().map(|b| b.count).collect::<Vec<_>>(), [1, 2, 1]);
        assert!((bins[0].mae.unwrap() - 1.0).abs() < 1e-9);
        assert!((bins[2].me.unwrap() + 2.0).abs() < 1e-9);
    }

    #[test]
    fn one_per_band_and_empty_bands() {
        let preds = vec![pred("a", 30.0, 30.0), pred("b", 90.0, 91.0), pred("c", 150.0, 150.0)];
        let bins = binned_metrics(&preds, &DEFAULT_BIN_EDGES).unwrap();
        assert_eq!(bins.iter().map(|b| b.count).collect::<Vec<_>>(), [1, 1, 1]);

        let preds = vec![pred("a", 90.0, 91.0), pred("b", 90.0, 89.0)];
        let bins = binned_metrics(&preds, &DEFAULT_BIN_EDGES).unwrap();
        assert_eq!(bins.iter().map(|b| b.count).collect::<Vec<_>>(), [0, 2, 0]);
        assert_eq!((bins[0].mae, bins[0].rmse, bins[0].me), (None, None, None));
        assert_eq!(bins[2].mae, None);
    }

    #[test]
    fn three_edges() {
        let preds = vec![pred("a", 50.0, 50.0), pred("b", 70.0, 70.0), pred("c", 90.0, 90.0)];
        let bins = binned_metrics(&preds, &[40.0, 60.0, 90.0]).unwrap();
        let labels: Vec<_> = bins.iter().map(|b| b.label.as_str()).collect();
        assert_eq!(labels, ["theta<40", "40<=theta<60", "60<=theta<=90", "theta>90"]);
        assert_eq!(bins.iter().map(|b| b.count).collect::<Vec<_>>(), [0, 1, 2, 0]);
        assert!(binned_metrics(&preds, &[60.0, 60.0]).is_err());
        assert!(binned_metrics(&preds, &[0.0, 60.0]).is_err());
        assert!(binned_metrics(&preds, &[60.0, 180.0]).is_err());
        assert!(binned_metrics(&preds, &[]).is_err());
    }

    #[test]
    fn table_row_rendering() {
        let m = MetricSet {
            mae: 2.87,
            rmse: 3.95,
            me: 1.28,
            mape_percent: Some(4.03),
            r_squared: Some(0.99),
        };
        assert_eq!(format_table_row("VGG19", &m), "VGG19 | 2.87 | 3.95 | 1.28 | 4.03 | 0.99");
    }

    #[test]
    fn rotated_ids() {
        assert!(is_rotated_id("syn_0001_r-60"));
        assert!(is_rotated_id("img_r+05"));
        assert!(is_rotated_id("syn_0001_r+12.3456"));
        assert!(!is_rotated_id("scan_r+"));
        assert!(!is_rotated_id("syn_0001"));
        assert!(!is_rotated_id("my_run"));
    }

    #[test]
    fn report_files() {
        let preds = vec![pred("a", 50.0, 52.0), pred("a_r+05", 55.0, 54.0), pred("b", 130.0, 131.0)];
        let report = build_report(&preds, &DEFAULT_BIN_EDGES, MAPE_FLOOR_DEG, serde_json::json!({"k": 1})).unwrap();
        assert!((report.metrics_originals.unwrap().mae - 1.5).abs() < 1e-12);
        let dir = tempfile::tempdir().unwrap();
        emit_report(&report, &preds, dir.path()).unwrap();
        let v: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(v["n_samples"], 3);
        assert_eq!(v["bins"][1]["count"], 0);
        assert_eq!(v["bins"][1]["mae"], serde_json::Value::Null);
        assert_eq!(v["config"]["k"], 1);
        for key in ["mae", "rmse", "me", "mape_percent", "r_squared"] {
            assert!(v["metrics"].get(key).is_some(), "{key}");
        }
        let csv = std::fs::read_to_string(dir.path().join("scatter.csv")).unwrap();
        assert_eq!(csv.lines().next(), Some("theta_true_deg,theta_pred_deg"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn perfect_report_has_exact_zero() {
        let preds = vec![pred("a", 40.0, 40.0), pred("b", 80.0, 80.0)];
        let report = build_report(&preds, &DEFAULT_BIN_EDGES, MAPE_FLOOR_DEG, serde_json::Value::Null).unwrap();
        let v = serde_json::to_value(&report).unwrap();
        assert_eq!(v["metrics"]["mae"], 0.0);
    }
}
