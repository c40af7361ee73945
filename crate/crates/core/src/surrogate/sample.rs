//! Learning samples built from stored case bundles.

use crate::assembly::DesignSpace;
use crate::datastore::CaseBundle;

use super::graph::{component_map, ComponentTable};
use super::tape::Mat;
use super::SurrogateError;

#[derive(Debug, Clone, PartialEq)]
pub struct LearningSample {
    pub case_id: String,
    /// Reference coordinates, N×3 (mm).
    pub x0: Mat,
    /// Element connectivity as node index pairs.
    pub edges: Vec<[usize; 2]>,
    /// Dense part labels in `0..n_parts`.
    pub parts: Vec<usize>,
    /// Component labels in `0..C`.
    pub components: Vec<usize>,
    /// Per-node thickness (mm), before normalization.
    pub tau: Vec<f64>,
    /// Design vector scaled to the unit cube.
    pub xi: Vec<f64>,
    /// Frame times normalized by the final frame time, one per target frame.
    pub times: Vec<f64>,
    /// Displacements for frames 1..=n, each N×3 (mm).
    pub target: Vec<Mat>,
}

impl LearningSample {
    pub fn n_nodes(&self) -> usize {
        self.x0.rows
    }

    pub fn n_frames(&self) -> usize {
        self.target.len()
    }

    /// Checks label ranges and shapes against the model dimensions.
    pub fn validate(&self, n_parts: usize, n_components: usize, xi_dim: usize) -> Result<(), SurrogateError> {
        let n = self.n_nodes();
        let bad = |what: &str| Err(SurrogateError::Shape { stage: "sample", detail: what.to_string() });
        if self.x0.cols != 3 {
            return bad("x0 must be N×3");
        }
        if self.parts.len() != n || self.components.len() != n || self.tau.len() != n {
            return bad("per-node label lengths differ from N");
        }
        if self.parts.iter().any(|&p| p >= n_parts) {
            return bad("part label out of range");
        }
        if self.components.iter().any(|&k| k >= n_components) {
            return bad("component label out of range");
        }
        if self.edges.iter().any(|e| e[0] >= n || e[1] >= n) {
            return bad("edge references a missing node");
        }
        if self.xi.len() != xi_dim {
            return bad("design vector length");
        }
        if self.times.len() != self.target.len() || self.target.is_empty() {
            return bad("need n ≥ 1 target frames with matching times");
        }
        if self.target.iter().any(|u| u.shape() != (n, 3)) {
            return bad("target frame must be N×3");
        }
        Ok(())
    }

    /// Same sample with nodes reordered so that new node `i` is old node
    /// `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> LearningSample {
        let n = perm.len();
        let mut inv = vec![0; n];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        let rows = |m: &Mat| {
            let mut out = Mat::zeros(n, m.cols);
            for (i, &p) in perm.iter().enumerate() {
                out.data[i * m.cols..(i + 1) * m.cols].copy_from_slice(m.row(p));
            }
            out
        };
        LearningSample {
            case_id: self.case_id.clone(),
            x0: rows(&self.x0),
            edges: self.edges.iter().map(|e| [inv[e[0]], inv[e[1]]]).collect(),
            parts: perm.iter().map(|&p| self.parts[p]).collect(),
            components: perm.iter().map(|&p| self.components[p]).collect(),
            tau: perm.iter().map(|&p| self.tau[p]).collect(),
            xi: self.xi.clone(),
            times: self.times.clone(),
            target: self.target.iter().map(rows).collect(),
        }
    }
}

/// Dense part indexing shared by every sample of a campaign.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PartVocabulary {
    pub part_ids: Vec<u32>,
}

impl PartVocabulary {
    pub fn index(&self, part: u32) -> usize {
        match self.part_ids.binary_search(&part) {
            Ok(i) => i,
            // unseen parts share the last slot
            Err(_) => self.part_ids.len().saturating_sub(1),
        }
    }
}

/// Builds a learning sample from a stored bundle. Frame 0 is dropped; the
/// remaining frames are the targets.
pub fn sample_from_bundle(
    bundle: &CaseBundle,
    space: &DesignSpace,
    table: &ComponentTable,
    vocab: &PartVocabulary,
) -> Result<LearningSample, SurrogateError> {
    let f = &bundle.fields;
    let mesh = bundle
        .manifest
        .mesh
        .as_ref()
        .ok_or_else(|| SurrogateError::Data(format!("{}: manifest has no mesh", bundle.manifest.case_id)))?;
    let n = f.n_nodes();
    if f.frames.len() < 2 {
        return Err(SurrogateError::Data(format!("{}: fewer than two frames", bundle.manifest.case_id)));
    }
    if mesh.connectivity.len() != f.element_ids.len() {
        return Err(SurrogateError::Data(format!("{}: mesh and field element counts differ", bundle.manifest.case_id)));
    }
    // node part from the lowest-id incident element
    let mut best = vec![(u32::MAX, 0u32); n];
    for (e, conn) in mesh.connectivity.iter().enumerate() {
        for &i in conn {
            let i = i as usize;
            if i >= n {
                return Err(SurrogateError::Data(format!("{}: connectivity out of range", bundle.manifest.case_id)));
            }
            if f.element_ids[e] < best[i].0 {
                best[i] = (f.element_ids[e], f.part_ids[e]);
            }
        }
    }
    let node_parts: Vec<u32> = best.iter().map(|b| b.1).collect();
    let thickness = |p: u32| mesh.parts.iter().find(|q| q.id == p).map_or(0.0, |q| q.thickness_mm);
    let t_final = f.frames.last().map_or(1.0, |fr| fr.time_ms).max(f64::MIN_POSITIVE);
    let target = f.frames[1..]
        .iter()
        .map(|fr| Mat::from_vec(n, 3, fr.u.iter().flat_map(|u| u.iter().copied()).collect()))
        .collect();
    Ok(LearningSample {
        case_id: bundle.manifest.case_id.clone(),
        x0: Mat::from_vec(n, 3, f.x0.iter().flat_map(|x| x.iter().copied()).collect()),
        edges: mesh.connectivity.iter().map(|c| [c[0] as usize, c[1] as usize]).collect(),
        parts: node_parts.iter().map(|&p| vocab.index(p)).collect(),
        components: component_map(&node_parts, table)?,
        tau: node_parts.iter().map(|&p| thickness(p)).collect(),
        xi: space.to_unit(&bundle.manifest.design),
        times: f.frames[1..].iter().map(|fr| fr.time_ms / t_final).collect(),
        target,
    })
}

/// Part vocabulary and component table from the first bundle's mesh.
pub fn vocabulary_from_bundle(bundle: &CaseBundle) -> Result<(PartVocabulary, ComponentTable), SurrogateError> {
    let mesh = bundle
        .manifest
        .mesh
        .as_ref()
        .ok_or_else(|| SurrogateError::Data(format!("{}: manifest has no mesh", bundle.manifest.case_id)))?;
    let mut ids: Vec<u32> = mesh.parts.iter().map(|p| p.id).collect();
    ids.sort_unstable();
    let table = ComponentTable::from_parts(mesh.parts.iter().map(|p| (p.id, p.component.clone())).collect());
    Ok((PartVocabulary { part_ids: ids }, table))
}

/// Median thickness over every node of every sample.
pub fn tau_median(samples: &[LearningSample]) -> f64 {
    let mut all: Vec<f64> = samples.iter().flat_map(|s| s.tau.iter().copied()).collect();
    if all.is_empty() {
        return 1.0;
    }
    all.sort_by(f64::total_cmp);
    let m = all.len();
    let med = if m % 2 == 1 { all[m / 2] } else { 0.5 * (all[m / 2 - 1] + all[m / 2]) };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

/// RMS of all target displacements; the natural output scale.
pub fn displacement_rms(samples: &[LearningSample]) -> f64 {
    let (mut s, mut k) = (0.0, 0usize);
    for smp in samples {
        for u in &smp.target {
            s += u.data.iter().map(|x| x * x).sum::<f64>();
            k += u.data.len();
        }
    }
    if k == 0 {
        0.0
    } else {
        (s / k as f64).sqrt()
    }
}
