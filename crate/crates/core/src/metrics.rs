//! Run observables and their export.
//!
//! Each simulation run condenses into one [`RunMetrics`] row: fragment
//! counters, the average per-image loss ratio, image quality counts and
//! latency figures. Rows export to CSV (one line per run) or to a
//! structured JSON document, and a per-scenario summary table gives
//! mean ± standard deviation over seeds for plotting.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::imaging::{ImageClass, ImageResult};

/// Column order of the CSV export, one row per run.
pub const CSV_HEADER: &str = "scenario,seed,fragments_sent,fragments_delivered,avg_loss_ratio,\
images_attempted,images_received,complete,usable,unusable,mean_latency_s,latency_ratio";

/// Everything measured in one simulation run.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct RunMetrics {
    pub scenario: u8,
    pub seed: u64,
    pub fragments_sent: u64,
    pub fragments_delivered: u64,
    /// Mean per-image loss over attempted images; images that never
    /// reached the sink at all count as fully lost.
    pub avg_loss_ratio: f64,
    pub images_attempted: u32,
    /// Images with at least one fragment delivered.
    pub images_received: u32,
    pub complete: u32,
    pub usable: u32,
    pub unusable: u32,
    /// Mean seconds from burst start to image finalization, over the
    /// received images only; 0 when nothing was received.
    pub mean_latency_s: f64,
    /// Mean latency divided by the best-case single-image reference.
    pub latency_ratio: f64,
    /// Per-image latencies behind the mean (JSON export only).
    #[serde(default)]
    pub latencies: Vec<f64>,
}

#[derive(Debug)]
pub enum MetricsError {
    Io { path: PathBuf, source: std::io::Error },
    Parse { line: usize, why: String },
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::Io { path, source } => {
                write!(f, "cannot write {}: {source}", path.display())
            }
            MetricsError::Parse { line, why } => write!(f, "line {line}: {why}"),
        }
    }
}

impl std::error::Error for MetricsError {}

/// Builds the metrics row for one finished run.
///
/// `attempted` counts every image a source started sending; results
/// exist only for images the sink saw at least one fragment of. The
/// never-seen remainder contributes a loss ratio of 1 and no latency.
pub fn aggregate(
    scenario: u8,
    seed: u64,
    results: &[ImageResult],
    attempted: u32,
    fragments_sent: u64,
    fragments_delivered: u64,
    latency_reference: f64,
) -> RunMetrics {
    let received = results.len() as u32;
    debug_assert!(received <= attempted);
    let mut complete = 0;
    let mut usable = 0;
    let mut unusable = 0;
    let mut loss_sum = 0.0;
    let mut latencies = Vec::with_capacity(results.len());
    for r in results {
        match r.class {
            ImageClass::Complete => complete += 1,
            ImageClass::Usable => usable += 1,
            ImageClass::Unusable => unusable += 1,
        }
        loss_sum += r.loss_ratio;
        latencies.push(r.latency);
    }
    let missing = (attempted - received) as f64;
    let avg_loss_ratio =
        if attempted == 0 { 0.0 } else { (loss_sum + missing) / attempted as f64 };
    let mean_latency_s = if latencies.is_empty() {
        0.0
    } else {
        latencies.iter().sum::<f64>() / latencies.len() as f64
    };
    let latency_ratio =
        if latency_reference > 0.0 { mean_latency_s / latency_reference } else { 0.0 };
    RunMetrics {
        scenario,
        seed,
        fragments_sent,
        fragments_delivered,
        avg_loss_ratio,
        images_attempted: attempted,
        images_received: received,
        complete,
        usable,
        unusable,
        mean_latency_s,
        latency_ratio,
        latencies,
    }
}

impl RunMetrics {
    /// One CSV row, no trailing newline. Floats print in shortest
    /// round-tripping form, so re-export is byte-stable.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.scenario,
            self.seed,
            self.fragments_sent,
            self.fragments_delivered,
            self.avg_loss_ratio,
            self.images_attempted,
            self.images_received,
            self.complete,
            self.usable,
            self.unusable,
            self.mean_latency_s,
            self.latency_ratio,
        )
    }
}

pub fn to_csv(metrics: &[RunMetrics]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for m in metrics {
        out.push_str(&m.csv_row());
        out.push('\n');
    }
    out
}

pub fn from_csv(text: &str) -> Result<Vec<RunMetrics>, MetricsError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == CSV_HEADER => {}
        Some((_, other)) => {
            return Err(MetricsError::Parse {
                line: 1,
                why: format!("unexpected header {other:?}"),
            })
        }
        None => return Err(MetricsError::Parse { line: 1, why: "empty file".into() }),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 12 {
            return Err(MetricsError::Parse {
                line: idx + 1,
                why: format!("expected 12 fields, found {}", fields.len()),
            });
        }
        fn field<T: std::str::FromStr>(
            fields: &[&str],
            i: usize,
            line: usize,
        ) -> Result<T, MetricsError> {
            fields[i].parse().map_err(|_| MetricsError::Parse {
                line,
                why: format!("bad value {:?} in column {}", fields[i], i + 1),
            })
        }
        let n = idx + 1;
        rows.push(RunMetrics {
            scenario: field(&fields, 0, n)?,
            seed: field(&fields, 1, n)?,
            fragments_sent: field(&fields, 2, n)?,
            fragments_delivered: field(&fields, 3, n)?,
            avg_loss_ratio: field(&fields, 4, n)?,
            images_attempted: field(&fields, 5, n)?,
            images_received: field(&fields, 6, n)?,
            complete: field(&fields, 7, n)?,
            usable: field(&fields, 8, n)?,
            unusable: field(&fields, 9, n)?,
            mean_latency_s: field(&fields, 10, n)?,
            latency_ratio: field(&fields, 11, n)?,
            latencies: Vec::new(),
        });
    }
    Ok(rows)
}

/// Serializes every field, per-image latencies included.
pub fn to_json(metrics: &[RunMetrics]) -> String {
    serde_json::to_string_pretty(metrics).expect("metrics always serialize")
}

pub fn from_json(text: &str) -> Result<Vec<RunMetrics>, MetricsError> {
    serde_json::from_str(text)
        .map_err(|e| MetricsError::Parse { line: e.line(), why: e.to_string() })
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ExportFormat {
    Csv,
    /// Hierarchical JSON document.
    Structured,
}

/// Writes the rows to `path` in the chosen format.
pub fn export(
    metrics: &[RunMetrics],
    format: ExportFormat,
    path: &Path,
) -> Result<(), MetricsError> {
    let body = match format {
        ExportFormat::Csv => to_csv(metrics),
        ExportFormat::Structured => to_json(metrics),
    };
    let write = |path: &Path| -> std::io::Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(body.as_bytes())
    };
    write(path).map_err(|source| MetricsError::Io { path: path.to_path_buf(), source })
}

/// Mean and standard deviation of the headline observables for one
/// scenario across seeds.
#[derive(Clone, PartialEq, Debug)]
pub struct ScenarioSummary {
    pub scenario: u8,
    pub runs: u32,
    pub loss: (f64, f64),
    /// Complete plus usable images per run.
    pub usable_images: (f64, f64),
    pub latency_ratio: (f64, f64),
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / (values.len() - 1) as f64;
    (mean, var.sqrt())
}

/// Groups rows by scenario (ascending) and summarizes each group.
pub fn summarize(metrics: &[RunMetrics]) -> Vec<ScenarioSummary> {
    let mut scenarios: Vec<u8> = metrics.iter().map(|m| m.scenario).collect();
    scenarios.sort_unstable();
    scenarios.dedup();
    scenarios
        .into_iter()
        .map(|s| {
            let rows: Vec<&RunMetrics> = metrics.iter().filter(|m| m.scenario == s).collect();
            let losses: Vec<f64> = rows.iter().map(|m| m.avg_loss_ratio).collect();
            let usable: Vec<f64> =
                rows.iter().map(|m| (m.complete + m.usable) as f64).collect();
            let ratios: Vec<f64> = rows.iter().map(|m| m.latency_ratio).collect();
            ScenarioSummary {
                scenario: s,
                runs: rows.len() as u32,
                loss: mean_std(&losses),
                usable_images: mean_std(&usable),
                latency_ratio: mean_std(&ratios),
            }
        })
        .collect()
}

/// Plain-text table of [`summarize`] output.
pub fn summary_table(summaries: &[ScenarioSummary]) -> String {
    let mut out = String::from(
        "scenario  runs  loss mean±std      usable img mean±std  latency ratio mean±std\n",
    );
    for s in summaries {
        out.push_str(&format!(
            "{:>8}  {:>4}  {:>6.4} ± {:<6.4}  {:>8.2} ± {:<8.2}  {:>10.4} ± {:<8.4}\n",
            s.scenario,
            s.runs,
            s.loss.0,
            s.loss.1,
            s.usable_images.0,
            s.usable_images.1,
            s.latency_ratio.0,
            s.latency_ratio.1,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::classify;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn result(loss: f64, latency: f64) -> ImageResult {
        let expected = 200u32;
        let received = ((1.0 - loss) * expected as f64).round() as u32;
        ImageResult {
            image_id: 0,
            expected,
            received,
            loss_ratio: loss,
            latency,
            class: classify(loss).unwrap(),
            late_fragments: 0,
        }
    }

    #[test]
    fn zero_deliveries_count_as_total_loss() {
        let m = aggregate(1, 9, &[], 3, 615, 0, 0.94);
        assert_eq!(m.avg_loss_ratio, 1.0);
        assert_eq!(m.images_attempted, 3);
        assert_eq!(m.images_received, 0);
        assert_eq!(m.complete + m.usable + m.unusable, 0);
        assert_eq!(m.mean_latency_s, 0.0);
        assert_eq!(m.latency_ratio, 0.0);
    }

    #[test]
    fn single_best_case_image_has_ratio_one() {
        let m = aggregate(3, 1, &[result(0.0, 0.94)], 1, 205, 205, 0.94);
        assert_eq!(m.latency_ratio, 1.0);
        assert_eq!(m.complete, 1);
        assert_eq!(m.avg_loss_ratio, 0.0);
    }

    #[test]
    fn loss_averages_over_attempted_images() {
        let m = aggregate(2, 1, &[result(0.0, 1.0), result(0.5, 2.0)], 2, 410, 307, 0.94);
        assert_eq!(m.avg_loss_ratio, 0.25);
        // A third attempted image that never arrived pulls the mean up.
        let m = aggregate(2, 1, &[result(0.0, 1.0), result(0.5, 2.0)], 3, 615, 307, 0.94);
        assert_eq!(m.avg_loss_ratio, 0.5);
        // Latency still averages over received images only.
        assert_eq!(m.mean_latency_s, 1.5);
    }

    #[test]
    fn counter_sums_stay_consistent() {
        let results =
            vec![result(0.0, 0.9), result(0.2, 1.4), result(0.8, 6.0), result(0.6, 3.0)];
        let m = aggregate(1, 7, &results, 6, 1230, 800, 0.94);
        assert_eq!(m.images_received, 4);
        assert_eq!(m.complete, 1);
        assert_eq!(m.usable, 2); // 0.2 and the 0.6 boundary
        assert_eq!(m.unusable, 1);
        assert_eq!(m.complete + m.usable + m.unusable, m.images_received);
        assert!(m.images_received <= m.images_attempted);
    }

    fn random_metrics(rng: &mut ChaCha8Rng, n: usize) -> Vec<RunMetrics> {
        (0..n)
            .map(|i| RunMetrics {
                scenario: rng.gen_range(1..=3),
                seed: i as u64,
                fragments_sent: rng.gen_range(0..100_000),
                fragments_delivered: rng.gen_range(0..100_000),
                avg_loss_ratio: rng.gen::<f64>(),
                images_attempted: rng.gen_range(0..100),
                images_received: rng.gen_range(0..100),
                complete: rng.gen_range(0..40),
                usable: rng.gen_range(0..40),
                unusable: rng.gen_range(0..40),
                mean_latency_s: rng.gen::<f64>() * 10.0,
                latency_ratio: rng.gen::<f64>() * 12.0,
                latencies: Vec::new(),
            })
            .collect()
    }

    #[test]
    fn csv_round_trip_is_exact_and_byte_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let metrics = random_metrics(&mut rng, 20);
        let text = to_csv(&metrics);
        assert_eq!(text.lines().count(), 21);
        let back = from_csv(&text).unwrap();
        assert_eq!(back, metrics);
        assert_eq!(to_csv(&back), text);
    }

    #[test]
    fn json_round_trip_keeps_every_field() {
        let m = aggregate(3, 4, &[result(0.1, 1.2), result(0.0, 0.8)], 3, 615, 560, 0.94);
        let text = to_json(&[m.clone()]);
        let back = from_json(&text).unwrap();
        assert_eq!(back, vec![m]);
    }

    #[test]
    fn malformed_csv_reports_the_line() {
        let err = from_csv("bogus\n").unwrap_err();
        assert!(matches!(err, MetricsError::Parse { line: 1, .. }));
        let text = format!("{CSV_HEADER}\n1,2,3\n");
        match from_csv(&text).unwrap_err() {
            MetricsError::Parse { line, why } => {
                assert_eq!(line, 2);
                assert!(why.contains("12 fields"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn export_reports_unwritable_paths() {
        let err = export(
            &[],
            ExportFormat::Csv,
            Path::new("/nonexistent-dir/metrics.csv"),
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("/nonexistent-dir/metrics.csv"), "message was {msg}");
    }

    #[test]
    fn summary_matches_a_hand_recomputation() {
        let mk = |scenario: u8, loss: f64, complete: u32, usable: u32, ratio: f64| RunMetrics {
            scenario,
            seed: 0,
            fragments_sent: 0,
            fragments_delivered: 0,
            avg_loss_ratio: loss,
            images_attempted: 10,
            images_received: complete + usable,
            complete,
            usable,
            unusable: 0,
            mean_latency_s: 0.0,
            latency_ratio: ratio,
            latencies: Vec::new(),
        };
        let rows = vec![
            mk(1, 0.30, 2, 3, 4.0),
            mk(1, 0.50, 1, 2, 6.0),
            mk(2, 0.20, 4, 4, 3.0),
        ];
        let summaries = summarize(&rows);
        assert_eq!(summaries.len(), 2);
        let s1 = &summaries[0];
        assert_eq!(s1.scenario, 1);
        assert_eq!(s1.runs, 2);
        assert!((s1.loss.0 - 0.40).abs() < 1e-12);
        // Sample stddev of {0.3, 0.5} is 0.1414…; of {5, 3} usable images is 1.414…
        assert!((s1.loss.1 - 0.1414213562373095).abs() < 1e-12);
        assert!((s1.usable_images.0 - 4.0).abs() < 1e-12);
        assert!((s1.usable_images.1 - std::f64::consts::SQRT_2).abs() < 1e-12);
        let s2 = &summaries[1];
        assert_eq!(s2.runs, 1);
        assert_eq!(s2.loss, (0.2, 0.0));
    }

    #[test]
    fn summary_table_lists_each_scenario_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let metrics = random_metrics(&mut rng, 12);
        let table = summary_table(&summarize(&metrics));
        let lines: Vec<&str> = table.lines().collect();
        assert!(lines.len() <= 4 && lines.len() >= 2);
        assert!(lines[0].contains("scenario"));
    }
}
