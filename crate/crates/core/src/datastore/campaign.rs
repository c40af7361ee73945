use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bundle::{case_dir, write_bundle, write_failed_manifest, CaseBundle, CaseStatus, Manifest, MeshInfo, Seeds};
use super::table::{render_master, MasterRow, MASTER_FILE, MASTER_HEADER};
use super::DatastoreError;
use crate::assembly::{
    apply_thickness_edits, build_bumper_assembly, Assembly, BumperConfig, ScaleBounds, ThicknessEdit, BEAM_GROUP,
    CRASH_BOX_GROUP,
};
use crate::doe::{CampaignPlan, PlannedCase};
use crate::signals::{extract_qoi, quality_screen, QcDiagnostics, QcThresholds, QoiConfig};
use crate::solver::{run_explicit, SolverConfig, SolverError};

pub const PROGRESS_FILE: &str = "progress.json";

/// Builds the solver model for one planned case and reports the pole-centre
/// X coordinate.
pub trait AssemblyFactory: Sync {
    fn build(&self, case: &PlannedCase) -> Result<(Assembly, f64), String>;
}

impl<F> AssemblyFactory for F
where
    F: Fn(&PlannedCase) -> Result<(Assembly, f64), String> + Sync,
{
    fn build(&self, case: &PlannedCase) -> Result<(Assembly, f64), String> {
        self(case)
    }
}

/// Bumper truss with the case's speed, gauges, yields and pole, then the
/// front (beam) and rail (crash-box) thickness scale factors.
#[derive(Debug, Clone, Default)]
pub struct BumperFactory {
    pub geometry: BumperConfig,
}

impl AssemblyFactory for BumperFactory {
    fn build(&self, case: &PlannedCase) -> Result<(Assembly, f64), String> {
        let cfg = self.geometry.with_design(&case.design);
        let asm = build_bumper_assembly(&cfg).map_err(|e| e.to_string())?;
        let d = &case.design;
        let asm = if d.s_front != 1.0 || d.s_rail != 1.0 {
            let edits = [
                ThicknessEdit { group: BEAM_GROUP, scale: d.s_front },
                ThicknessEdit { group: CRASH_BOX_GROUP, scale: d.s_rail },
            ];
            apply_thickness_edits(&asm, &edits, ScaleBounds::default()).map_err(|e| e.to_string())?
        } else {
            asm
        };
        Ok((asm, cfg.pole_x()))
    }
}

#[derive(Debug, Clone)]
pub struct CampaignOptions {
    pub workers: usize,
    pub overwrite: bool,
    pub qoi: QoiConfig,
    pub thresholds: QcThresholds,
}

impl Default for CampaignOptions {
    fn default() -> Self {
        CampaignOptions { workers: 1, overwrite: false, qoi: QoiConfig::default(), thresholds: QcThresholds::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseFailure {
    pub case_id: String,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    /// Sorted by case id.
    pub failures: Vec<CaseFailure>,
}

#[derive(Serialize)]
struct Progress<'a> {
    completed: &'a [String],
    error: String,
}

enum Outcome {
    Passed(MasterRow),
    Failed(CaseFailure),
}

fn base_manifest(plan: &CampaignPlan, case: &PlannedCase, x_c: f64) -> Manifest {
    Manifest {
        case_id: case.case_id.clone(),
        design: case.design,
        origin: case.origin,
        phase: case.phase,
        seeds: Seeds { plan: plan.seed },
        status: CaseStatus::Failed,
        reasons: Vec::new(),
        x_c_mm: x_c,
        qc: QcDiagnostics::default(),
        qoi: None,
        report: None,
        mesh: None,
    }
}

fn solve_case(
    plan: &CampaignPlan,
    case: &PlannedCase,
    factory: &dyn AssemblyFactory,
    solver: &SolverConfig,
    root: &Path,
    opts: &CampaignOptions,
) -> Result<Outcome, DatastoreError> {
    let fail_early = |m: Manifest, reasons: Vec<String>| -> Result<Outcome, DatastoreError> {
        let m = Manifest { reasons: reasons.clone(), ..m };
        write_failed_manifest(&m, root, opts.overwrite)?;
        Ok(Outcome::Failed(CaseFailure { case_id: case.case_id.clone(), reasons }))
    };
    let (asm, x_c) = match factory.build(case) {
        Ok(x) => x,
        Err(e) => return fail_early(base_manifest(plan, case, f64::NAN), vec![format!("assembly: {e}")]),
    };
    let mut m = base_manifest(plan, case, x_c);
    m.mesh = Some(MeshInfo::from_assembly(&asm));
    let (fields, histories, report) = match run_explicit(&asm, solver) {
        Ok(r) => r,
        Err(SolverError::NumericalBlowup { step, time_ms, .. }) => {
            return fail_early(m, vec![format!("numerical-blowup (step {step}, t = {time_ms} ms)")])
        }
        Err(e) => return fail_early(m, vec![format!("solver: {e}")]),
    };
    let (mut pass, mut reasons): (bool, Vec<String>) = {
        let (p, r) = quality_screen(&histories, &report, &opts.thresholds);
        (p, r.iter().map(|x| x.as_str().to_string()).collect())
    };
    let qoi = match extract_qoi(&histories, &opts.qoi) {
        Ok(mut q) => {
            q.qc = QcDiagnostics::from_report(&report, pass);
            if pass && !q.is_finite() {
                pass = false;
                reasons.push("non-finite-qoi".into());
                q.qc.pass = false;
            }
            Some(q)
        }
        Err(e) => {
            pass = false;
            reasons.push(format!("qoi: {e}"));
            None
        }
    };
    m.qc = QcDiagnostics::from_report(&report, pass);
    m.qoi = qoi;
    m.report = Some(report);
    m.status = if pass { CaseStatus::Passed } else { CaseStatus::Failed };
    m.reasons = reasons.clone();
    let bundle = CaseBundle { manifest: m, histories, fields };
    write_bundle(&bundle, root, opts.overwrite)?;
    Ok(if pass {
        Outcome::Passed(MasterRow::from_manifest(&bundle.manifest).expect("passing manifest has QoIs"))
    } else {
        Outcome::Failed(CaseFailure { case_id: case.case_id.clone(), reasons })
    })
}

/// Existing case directories that would be overwritten.
pub fn collisions(plan: &CampaignPlan, root: &Path) -> Vec<PathBuf> {
    plan.cases
        .iter()
        .flat_map(|c| [CaseStatus::Passed, CaseStatus::Failed].map(|s| case_dir(root, &c.case_id, s)))
        .filter(|p| p.exists())
        .collect()
}

/// Solves, screens and persists every planned case on `opts.workers` threads.
/// Passing rows are appended to `master.csv` by a single writer as they
/// arrive; the file is rewritten sorted by case id at the end. Case failures
/// are recorded and never abort the campaign; an I/O failure stops new work
/// and leaves `progress.json` listing the completed cases.
pub fn run_campaign(
    plan: &CampaignPlan,
    factory: &dyn AssemblyFactory,
    solver: &SolverConfig,
    root: &Path,
    opts: &CampaignOptions,
) -> Result<CampaignReport, DatastoreError> {
    solver.validate().map_err(|e| DatastoreError::Config(e.to_string()))?;
    fs::create_dir_all(root)?;
    if !opts.overwrite {
        if let Some(p) = collisions(plan, root).into_iter().next() {
            return Err(DatastoreError::Exists(p));
        }
    }
    let master_path = root.join(MASTER_FILE);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| DatastoreError::Config(e.to_string()))?;
    let abort = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<(String, Result<Outcome, DatastoreError>)>();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut completed = Vec::new();
    let mut first_error: Option<DatastoreError> = None;
    std::thread::scope(|scope| -> Result<(), DatastoreError> {
        let abort = &abort;
        scope.spawn(move || {
            pool.install(|| {
                plan.cases.par_iter().for_each_with(tx, |tx, case| {
                    if abort.load(Ordering::Relaxed) {
                        return;
                    }
                    let r = solve_case(plan, case, factory, solver, root, opts);
                    let _ = tx.send((case.case_id.clone(), r));
                });
            });
        });
        let mut master = OpenOptions::new().create(true).write(true).truncate(true).open(&master_path)?;
        writeln!(master, "{}", MASTER_HEADER.join(","))?;
        for (id, r) in rx {
            match r {
                Ok(Outcome::Passed(row)) => {
                    let line = render_master(std::slice::from_ref(&row));
                    let appended = master.write_all(line.lines().nth(1).unwrap_or_default().as_bytes())
                        .and_then(|_| master.write_all(b"\n"));
                    if let Err(e) = appended {
                        abort.store(true, Ordering::Relaxed);
                        first_error.get_or_insert(e.into());
                        continue;
                    }
                    rows.push(row);
                    completed.push(id);
                }
                Ok(Outcome::Failed(f)) => {
                    failures.push(f);
                    completed.push(id);
                }
                Err(e) => {
                    abort.store(true, Ordering::Relaxed);
                    first_error.get_or_insert(e);
                }
            }
        }
        Ok(())
    })?;

    if let Some(e) = first_error {
        completed.sort();
        let progress = Progress { completed: &completed, error: e.to_string() };
        let _ = fs::write(root.join(PROGRESS_FILE), serde_json::to_string_pretty(&progress)?);
        return Err(e);
    }
    rows.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    failures.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    fs::write(&master_path, render_master(&rows))?;
    Ok(CampaignReport { total: plan.cases.len(), passed: rows.len(), failed: failures.len(), failures })
}
