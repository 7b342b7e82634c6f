//! Per-example exposure reports and their CSV/JSON serializations.
//!
//! A report row carries every exposure-family number for one example; the
//! metadata block records how many reference seeds and reference strings
//! produced it and which checkpoints were involved. Rows are kept sorted by
//! example id so reports assembled in parallel serialize identically no
//! matter the evaluation order. Floats serialize through [`fmt::sig17`], so
//! equal values always produce equal bytes.
//!
//! [`fmt::sig17`]: crate::fmt::sig17

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::{sig17, sig17_opt};

pub const EXPOSURE_CSV_HEADER: &str =
    "id,set,g_ref_mean,g_unlearned,rank_exposure,gen_exposure,rel_exposure,cp_low,cp_high";

/// Exposure numbers for one example. `rel_exposure` is present only when an
/// R_x was selected; the CP pair brackets the hard-comparison win rate under
/// the unlearned model and is present only when requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureRow {
    pub id: u64,
    pub set: String,
    pub g_ref_mean: f64,
    pub g_unlearned: f64,
    pub rank_exposure: f64,
    pub gen_exposure: f64,
    pub rel_exposure: Option<f64>,
    pub cp_low: Option<f64>,
    pub cp_high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub reference_seed_count: usize,
    /// |R|, the reference string count behind every g in the report.
    pub reference_set_size: usize,
    /// Fingerprints of every checkpoint that scored a column.
    pub checkpoints: Vec<String>,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureReport {
    pub meta: ReportMeta,
    pub rows: Vec<ExposureRow>,
}

impl ExposureReport {
    pub fn new(meta: ReportMeta, mut rows: Vec<ExposureRow>) -> Self {
        rows.sort_by_key(|r| r.id);
        ExposureReport { meta, rows }
    }

    /// Check the row invariants: ids strictly increasing, g values in [0,1],
    /// rank exposure within [0, log2 |R|], CP bounds ordered inside [0,1]
    /// and present as a pair.
    pub fn validate(&self) -> Result<()> {
        let max_rank_exposure = (self.meta.reference_set_size as f64).log2() + 1e-9;
        let mut last_id = None;
        for row in &self.rows {
            let fail = |msg: String| Err(Error::Metric(format!("example {}: {msg}", row.id)));
            if let Some(prev) = last_id {
                if row.id <= prev {
                    return fail(format!("row ids not strictly increasing after {prev}"));
                }
            }
            last_id = Some(row.id);
            for (name, g) in [("g_ref_mean", row.g_ref_mean), ("g_unlearned", row.g_unlearned)] {
                if !g.is_finite() || !(0.0..=1.0).contains(&g) {
                    return fail(format!("{name} {g} outside [0,1]"));
                }
            }
            if !row.rank_exposure.is_finite()
                || row.rank_exposure < -1e-9
                || row.rank_exposure > max_rank_exposure
            {
                return fail(format!(
                    "rank exposure {} outside [0, log2 {}]",
                    row.rank_exposure, self.meta.reference_set_size
                ));
            }
            match (row.cp_low, row.cp_high) {
                (None, None) => {}
                (Some(lo), Some(hi)) => {
                    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
                        return fail(format!("CP interval [{lo}, {hi}] malformed"));
                    }
                }
                _ => return fail("CP bounds must come as a pair".into()),
            }
        }
        Ok(())
    }

    pub fn csv_string(&self) -> String {
        let mut out = String::from(EXPOSURE_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.id,
                r.set,
                sig17(r.g_ref_mean),
                sig17(r.g_unlearned),
                sig17(r.rank_exposure),
                sig17(r.gen_exposure),
                sig17_opt(r.rel_exposure),
                sig17_opt(r.cp_low),
                sig17_opt(r.cp_high),
            ));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        w.write_all(self.csv_string().as_bytes()).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> ReportMeta {
        ReportMeta {
            reference_seed_count: 3,
            reference_set_size: 8,
            checkpoints: vec!["abc".into()],
            confidence: 0.95,
        }
    }

    fn row(id: u64) -> ExposureRow {
        ExposureRow {
            id,
            set: "ood_x1".into(),
            g_ref_mean: 0.5,
            g_unlearned: 0.25,
            rank_exposure: 1.0,
            gen_exposure: 1.0,
            rel_exposure: None,
            cp_low: None,
            cp_high: None,
        }
    }

    #[test]
    fn rows_sort_by_id_and_serialize_stably() {
        let mut second = row(2);
        second.rel_exposure = Some(0.5);
        second.cp_low = Some(0.25);
        second.cp_high = Some(0.75);
        let report = ExposureReport::new(meta(), vec![second, row(1)]);
        report.validate().unwrap();
        assert_eq!(
            report.csv_string(),
            "id,set,g_ref_mean,g_unlearned,rank_exposure,gen_exposure,rel_exposure,cp_low,cp_high\n\
             1,ood_x1,5.0000000000000000e-1,2.5000000000000000e-1,1.0000000000000000e0,1.0000000000000000e0,,,\n\
             2,ood_x1,5.0000000000000000e-1,2.5000000000000000e-1,1.0000000000000000e0,1.0000000000000000e0,5.0000000000000000e-1,2.5000000000000000e-1,7.5000000000000000e-1\n"
        );
    }

    #[test]
    fn validation_catches_each_broken_invariant() {
        let mut g_bad = row(1);
        g_bad.g_unlearned = 1.5;
        assert!(ExposureReport::new(meta(), vec![g_bad]).validate().is_err());

        let mut rank_bad = row(1);
        rank_bad.rank_exposure = 3.5; // log2 8 = 3
        assert!(ExposureReport::new(meta(), vec![rank_bad]).validate().is_err());

        let mut cp_incomplete = row(1);
        cp_incomplete.cp_low = Some(0.5);
        assert!(ExposureReport::new(meta(), vec![cp_incomplete]).validate().is_err());

        let mut cp_inverted = row(1);
        cp_inverted.cp_low = Some(0.9);
        cp_inverted.cp_high = Some(0.1);
        assert!(ExposureReport::new(meta(), vec![cp_inverted]).validate().is_err());

        let dup = ExposureReport { meta: meta(), rows: vec![row(1), row(1)] };
        assert!(dup.validate().is_err());
    }

    #[test]
    fn json_round_trips() {
        let report = ExposureReport::new(meta(), vec![row(1), row(4)]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        report.write_json(&path).unwrap();
        let back: ExposureReport =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back, report);
    }
}
