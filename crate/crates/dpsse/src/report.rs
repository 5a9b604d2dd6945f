//! CSV and JSON output for decentralized runs.

use std::io::Write;

use dpsse_core::admm::RunReport;
use dpsse_core::partition::AreaAssignment;
use serde::Serialize;

#[derive(Serialize)]
struct CsvRow<'a> {
    iteration: usize,
    area: &'a str,
    e_kc: Option<f64>,
    e_ko: Option<f64>,
    disagreement: f64,
}

/// Columns `iteration,area,e_kc,e_ko,disagreement`; one row per area per
/// recorded iteration. Contains no timing, so equal runs give equal bytes.
pub fn write_curves<W: Write>(out: W, report: &RunReport, assignment: &AreaAssignment) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in &report.records {
        w.serialize(CsvRow {
            iteration: r.iteration,
            area: &assignment.labels()[r.area],
            e_kc: r.e_kc,
            e_ko: r.e_ko,
            disagreement: r.disagreement,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct AreaSummary {
    pub area: String,
    pub final_e_kc: Option<f64>,
    pub final_e_ko: Option<f64>,
    pub identified_rows: Vec<usize>,
    pub rank_deficient: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_ms: f64,
    pub stitched_vs_central: f64,
    pub areas: Vec<AreaSummary>,
}

impl RunSummary {
    pub fn new(report: &RunReport, assignment: &AreaAssignment, wall_time_ms: f64, stitched_vs_central: f64) -> Self {
        let areas = (0..assignment.area_count())
            .map(|k| {
                let last = report.records.iter().rev().find(|r| r.area == k);
                AreaSummary {
                    area: assignment.labels()[k].clone(),
                    final_e_kc: last.and_then(|r| r.e_kc),
                    final_e_ko: last.and_then(|r| r.e_ko),
                    identified_rows: report.identified.get(k).cloned().unwrap_or_default(),
                    rank_deficient: report.rank_deficient_areas.contains(&k),
                }
            })
            .collect();
        Self { iterations: report.iterations, converged: report.converged, wall_time_ms, stitched_vs_central, areas }
    }
}
