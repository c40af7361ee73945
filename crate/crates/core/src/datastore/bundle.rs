use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ccf::{encode_ccf, read_ccf};
use super::DatastoreError;
use crate::assembly::{Assembly, DesignVector};
use crate::doe::Origin;
use crate::signals::{QcDiagnostics, QoiRecord, TimeHistories};
use crate::solver::{FieldTrajectory, TerminationReport};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const FIELDS_FILE: &str = "fields.ccf";
pub const FAILED_DIR: &str = "failed";

pub const HISTORY_HEADER: [&str; 10] = [
    "time_ms", "fx_kN", "fy_kN", "fz_kN", "e_kin_kJ", "e_int_kJ", "e_cont_kJ", "e_hg_kJ", "w_p_kJ", "a_mm_ms2",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseStatus {
    Passed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartInfo {
    pub id: u32,
    pub name: String,
    pub component: String,
    pub thickness_group: u32,
    pub thickness_mm: f64,
}

/// Connectivity (node indices) and part table of the mesh, kept with every
/// case so consumers need not rebuild the assembly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshInfo {
    pub connectivity: Vec<[u32; 2]>,
    pub parts: Vec<PartInfo>,
}

impl MeshInfo {
    pub fn from_assembly(asm: &Assembly) -> Self {
        MeshInfo {
            connectivity: asm.elements.iter().map(|e| [e.nodes[0] as u32, e.nodes[1] as u32]).collect(),
            parts: asm
                .parts
                .iter()
                .map(|(&id, p)| PartInfo {
                    id,
                    name: p.name.clone(),
                    component: p.component.clone(),
                    thickness_group: p.thickness_group,
                    thickness_mm: p.thickness_mm,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub plan: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub case_id: String,
    pub design: DesignVector,
    pub origin: Origin,
    pub phase: u8,
    pub seeds: Seeds,
    pub status: CaseStatus,
    #[serde(default)]
    pub reasons: Vec<String>,
    pub x_c_mm: f64,
    pub qc: QcDiagnostics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qoi: Option<QoiRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<TerminationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<MeshInfo>,
}

/// One solved case: manifest plus its global histories and field trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseBundle {
    pub manifest: Manifest,
    pub histories: TimeHistories,
    pub fields: FieldTrajectory,
}

fn fmt(x: f64) -> String {
    format!("{x:?}")
}

pub fn encode_history(h: &TimeHistories) -> String {
    let mut s = HISTORY_HEADER.join(",");
    s.push('\n');
    for i in 0..h.len() {
        let row = [
            h.t[i], h.f_wall[i][0], h.f_wall[i][1], h.f_wall[i][2], h.e_kin[i], h.e_int[i], h.e_cont[i], h.e_hg[i],
            h.w_p[i], h.a[i],
        ];
        s.push_str(&row.iter().map(|x| fmt(*x)).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    s
}

pub fn decode_history(text: &str) -> Result<TimeHistories, DatastoreError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    if header != HISTORY_HEADER {
        return Err(DatastoreError::Format(format!("unexpected history header {header:?}")));
    }
    let mut h = TimeHistories::default();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let vals = rec
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| DatastoreError::Format(format!("history row {}: {e}", line + 1)))?;
        if vals.len() != 10 {
            return Err(DatastoreError::Format(format!("history row {} has {} fields", line + 1, vals.len())));
        }
        h.t.push(vals[0]);
        h.f_wall.push([vals[1], vals[2], vals[3]]);
        h.e_kin.push(vals[4]);
        h.e_int.push(vals[5]);
        h.e_cont.push(vals[6]);
        h.e_hg.push(vals[7]);
        h.w_p.push(vals[8]);
        h.a.push(vals[9]);
    }
    Ok(h)
}

fn check_dir(dir: &Path, overwrite: bool) -> Result<(), DatastoreError> {
    if dir.exists() {
        if !overwrite {
            return Err(DatastoreError::Exists(dir.to_path_buf()));
        }
        fs::remove_dir_all(dir)?;
    }
    Ok(())
}

/// Directory a case lands in: `<root>/<id>` when passed, `<root>/failed/<id>`
/// otherwise.
pub fn case_dir(root: &Path, case_id: &str, status: CaseStatus) -> PathBuf {
    match status {
        CaseStatus::Passed => root.join(case_id),
        CaseStatus::Failed => root.join(FAILED_DIR).join(case_id),
    }
}

fn write_manifest(dir: &Path, m: &Manifest) -> Result<(), DatastoreError> {
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(m)?)?;
    Ok(())
}

/// Writes the three bundle files and returns the case directory.
pub fn write_bundle(bundle: &CaseBundle, root: &Path, overwrite: bool) -> Result<PathBuf, DatastoreError> {
    let m = &bundle.manifest;
    if bundle.fields.frames.first().is_some_and(|f| f.u.iter().any(|u| *u != [0.0; 3])) {
        return Err(DatastoreError::Format(format!("{}: frame 0 is not the reference configuration", m.case_id)));
    }
    let dir = case_dir(root, &m.case_id, m.status);
    check_dir(&dir, overwrite)?;
    fs::create_dir_all(&dir)?;
    write_manifest(&dir, m)?;
    fs::write(dir.join(HISTORY_FILE), encode_history(&bundle.histories))?;
    fs::write(dir.join(FIELDS_FILE), encode_ccf(&bundle.fields))?;
    Ok(dir)
}

/// Manifest-only record for a case that produced no usable solution.
pub fn write_failed_manifest(m: &Manifest, root: &Path, overwrite: bool) -> Result<PathBuf, DatastoreError> {
    let dir = case_dir(root, &m.case_id, CaseStatus::Failed);
    check_dir(&dir, overwrite)?;
    fs::create_dir_all(&dir)?;
    write_manifest(&dir, m)?;
    Ok(dir)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, DatastoreError> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_bundle(dir: &Path) -> Result<CaseBundle, DatastoreError> {
    let manifest = read_manifest(dir)?;
    if dir.file_name().and_then(|s| s.to_str()) != Some(manifest.case_id.as_str()) {
        return Err(DatastoreError::Format(format!(
            "manifest case_id {} does not match directory {}",
            manifest.case_id,
            dir.display()
        )));
    }
    let histories = decode_history(&fs::read_to_string(dir.join(HISTORY_FILE))?)?;
    histories.validate().map_err(|e| DatastoreError::Format(e.to_string()))?;
    let fields = read_ccf(fs::File::open(dir.join(FIELDS_FILE))?)?;
    Ok(CaseBundle { manifest, histories, fields })
}
