use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bundle::{read_manifest, CaseStatus, Manifest, FAILED_DIR, MANIFEST_FILE};
use super::DatastoreError;

pub const MASTER_FILE: &str = "master.csv";

pub const MASTER_HEADER: [&str; 23] = [
    "case_id",
    "v_mm_ms",
    "t_cb_mm",
    "t_bb_mm",
    "sigma_y_cb_GPa",
    "sigma_y_bb_GPa",
    "d_pole_mm",
    "y_pole_mm",
    "x_c_mm",
    "f_wall_max_kN",
    "e_int_max_kJ",
    "eta_ke_pct",
    "a_max_mm_ms2",
    "t1_ms",
    "t2_ms",
    "t_imp_ms",
    "w_p_max_kJ",
    "e_kin_0_kJ",
    "e_err_pct",
    "hourglass_pct",
    "added_mass_pct",
    "final_time_ms",
    "phase",
];

/// One passing case in the release table. `eta_ke_pct` carries the 1-decimal
/// percent exactly as rendered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasterRow {
    pub case_id: String,
    pub inputs: [f64; 7],
    pub x_c_mm: f64,
    pub f_wall_max: f64,
    pub e_int_max: f64,
    pub eta_ke_pct: f64,
    pub a_max: f64,
    pub t1: f64,
    pub t2: f64,
    pub t_imp: f64,
    pub w_p_max: f64,
    pub e_kin_0: f64,
    pub e_err_pct: f64,
    pub hourglass_pct: f64,
    pub added_mass_pct: f64,
    pub final_time_ms: f64,
    pub phase: u8,
}

fn pct1(fraction: f64) -> String {
    format!("{:.1}", 100.0 * fraction)
}

impl MasterRow {
    /// Row for a passing manifest; `None` for failed cases or missing QoIs.
    pub fn from_manifest(m: &Manifest) -> Option<Self> {
        if m.status != CaseStatus::Passed {
            return None;
        }
        let q = m.qoi.as_ref()?;
        let d = &m.design;
        Some(MasterRow {
            case_id: m.case_id.clone(),
            inputs: [d.v, d.t_cb, d.t_bb, d.sigma_y_cb, d.sigma_y_bb, d.d_pole, d.y_pole],
            x_c_mm: m.x_c_mm,
            f_wall_max: q.f_wall_max,
            e_int_max: q.e_int_max,
            eta_ke_pct: pct1(q.eta_ke).parse().expect("formatted float parses"),
            a_max: q.a_max,
            t1: q.t1,
            t2: q.t2,
            t_imp: q.t_imp,
            w_p_max: q.w_p_max,
            e_kin_0: q.e_kin_0,
            e_err_pct: m.qc.e_err_pct,
            hourglass_pct: m.qc.hourglass_pct,
            added_mass_pct: m.qc.added_mass_pct,
            final_time_ms: m.qc.final_time_ms,
            phase: m.phase,
        })
    }

    pub fn to_record(&self) -> Vec<String> {
        let f = |x: f64| format!("{x:?}");
        let mut r = vec![self.case_id.clone()];
        r.extend(self.inputs.iter().map(|x| f(*x)));
        r.extend([self.x_c_mm, self.f_wall_max, self.e_int_max].map(f));
        r.push(format!("{:.1}", self.eta_ke_pct));
        r.extend(
            [
                self.a_max,
                self.t1,
                self.t2,
                self.t_imp,
                self.w_p_max,
                self.e_kin_0,
                self.e_err_pct,
                self.hourglass_pct,
                self.added_mass_pct,
                self.final_time_ms,
            ]
            .map(f),
        );
        r.push(self.phase.to_string());
        r
    }

    pub fn from_record(rec: &csv::StringRecord) -> Result<Self, DatastoreError> {
        if rec.len() != MASTER_HEADER.len() {
            return Err(DatastoreError::Format(format!("master row has {} fields", rec.len())));
        }
        let num = |i: usize| {
            rec[i].parse::<f64>().map_err(|e| DatastoreError::Format(format!("column {}: {e}", MASTER_HEADER[i])))
        };
        let mut inputs = [0.0; 7];
        for (k, x) in inputs.iter_mut().enumerate() {
            *x = num(1 + k)?;
        }
        Ok(MasterRow {
            case_id: rec[0].to_string(),
            inputs,
            x_c_mm: num(8)?,
            f_wall_max: num(9)?,
            e_int_max: num(10)?,
            eta_ke_pct: num(11)?,
            a_max: num(12)?,
            t1: num(13)?,
            t2: num(14)?,
            t_imp: num(15)?,
            w_p_max: num(16)?,
            e_kin_0: num(17)?,
            e_err_pct: num(18)?,
            hourglass_pct: num(19)?,
            added_mass_pct: num(20)?,
            final_time_ms: num(21)?,
            phase: rec[22].parse().map_err(|e| DatastoreError::Format(format!("column phase: {e}")))?,
        })
    }
}

pub fn render_master(rows: &[MasterRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(MASTER_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record(r.to_record()).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

pub fn parse_master(text: &str) -> Result<Vec<MasterRow>, DatastoreError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    if header != MASTER_HEADER {
        return Err(DatastoreError::Format("unexpected master header".into()));
    }
    rdr.records().map(|r| MasterRow::from_record(&r?)).collect()
}

pub fn read_master_csv(path: &Path) -> Result<Vec<MasterRow>, DatastoreError> {
    parse_master(&fs::read_to_string(path)?)
}

/// Rebuilds the release table from the passing bundles under `root`, sorted
/// by case id.
pub fn master_table(root: &Path) -> Result<Vec<MasterRow>, DatastoreError> {
    let mut rows = Vec::new();
    for entry in fs::read_dir(root)? {
        let path = entry?.path();
        if !path.is_dir() || path.file_name().is_some_and(|n| n == FAILED_DIR) {
            continue;
        }
        if !path.join(MANIFEST_FILE).exists() {
            continue;
        }
        if let Some(row) = MasterRow::from_manifest(&read_manifest(&path)?) {
            rows.push(row);
        }
    }
    rows.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    Ok(rows)
}
