use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::TaskReport;
use crate::error::{GraspError, Result};

fn opt(v: Option<f64>, f: impl Fn(f64) -> String) -> String {
    v.map_or_else(|| "-".to_string(), f)
}

/// Aligned two-column summary. The success rate has two decimals; errors are in mm and
/// degrees.
pub fn report_table(r: &TaskReport) -> String {
    let field = match r.field {
        super::FieldKind::Oracle => "oracle",
        super::FieldKind::Learned => "learned",
    };
    let mm = |v: f64| format!("{:.2} mm", v * 1e3);
    let deg = |v: f64| format!("{:.2} deg", v.to_degrees());
    let rows = [
        ("task", r.task.name().to_string()),
        ("field", field.to_string()),
        ("trials", r.trials.to_string()),
        ("attempts", r.attempts.to_string()),
        ("successes", r.successes.to_string()),
        ("success_rate", format!("{:.2}", r.success_rate)),
        ("mean_t_err", mm(r.mean_t_err)),
        ("mean_r_err", deg(r.mean_r_err)),
        ("mean_t_err_success", opt(r.mean_t_err_success, mm)),
        ("mean_r_err_success", opt(r.mean_r_err_success, deg)),
        ("cleared", opt(r.cleared, |v| format!("{v:.2}"))),
        ("dropped", opt(r.dropped, |v| format!("{v:.2}"))),
        ("config", r.config_digest.clone()),
    ];
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut s = String::new();
    for (k, v) in rows {
        writeln!(s, "{k:<width$}  {v}").expect("string write");
    }
    s
}

/// Writes the full-precision JSON report to `path` and the table next to it with a
/// `.txt` extension. Returns the table path.
pub fn export_report(report: &TaskReport, path: &Path) -> Result<PathBuf> {
    std::fs::write(path, serde_json::to_string_pretty(report)?).map_err(|e| GraspError::io(path, e))?;
    let table = path.with_extension("txt");
    std::fs::write(&table, report_table(report)).map_err(|e| GraspError::io(&table, e))?;
    Ok(table)
}

pub fn load_report(path: &Path) -> Result<TaskReport> {
    let text = std::fs::read_to_string(path).map_err(|e| GraspError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{FieldKind, Task};

    fn sample() -> TaskReport {
        TaskReport {
            task: Task::Clutter,
            field: FieldKind::Oracle,
            trials: 20,
            attempts: 117,
            successes: 91,
            success_rate: 91.0 / 117.0,
            mean_t_err: 0.001_234_567_891,
            mean_r_err: 0.021_987_654_321,
            mean_t_err_success: Some(0.001),
            mean_r_err_success: None,
            cleared: Some(4.35),
            dropped: Some(0.05),
            config_digest: "ab".repeat(32),
        }
    }

    #[test]
    fn write_then_load_is_equal() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        let table = export_report(&sample(), &path).unwrap();
        assert_eq!(load_report(&path).unwrap(), sample());
        assert!(table.exists());
    }

    #[test]
    fn table_rounds_rate_and_shows_digest() {
        let t = report_table(&sample());
        assert!(t.contains("success_rate        0.78\n"));
        assert!(t.lines().any(|l| l.starts_with("config") && l.ends_with(&"ab".repeat(32))));
        assert!(t.contains("mean_r_err_success  -"));
    }

    #[test]
    fn json_keeps_full_precision() {
        let text = serde_json::to_string(&sample()).unwrap();
        assert!(text.contains(&format!("{:?}", 91.0f64 / 117.0)));
    }
}
