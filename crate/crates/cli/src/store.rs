//! On-disk layout of generated datasets, scenarios and plans.
//!
//! A dataset directory holds `prior.dimg` and `posterior.dimg`, one frame
//! per pair, and `manifest.json` with the ROI and provenance of each pair.
//! A scenario directory holds `i0.pgm`, `i_star.pgm` and `manifest.json`
//! with everything needed to regenerate the scene.

use std::path::Path;

use moldkit::depthcam::IntrinsicsRecord;
use moldkit::dimg::{self, Batch};
use moldkit::predict::{Mode, PatchDataset, PatchPair};
use moldkit::roi::{validate_actions, ActionSpec, Patch, RoiRect};
use moldkit::simkit::{GeneratedDataset, SurfaceKind};
use moldkit::CameraIntrinsics;
use serde::{Deserialize, Serialize};

use crate::common::{read_text, to_json, write_file};
use crate::error::{CliError, Setup};

pub const MANIFEST: &str = "manifest.json";
pub const PRIOR: &str = "prior.dimg";
pub const POSTERIOR: &str = "posterior.dimg";
pub const I0: &str = "i0.pgm";
pub const I_STAR: &str = "i_star.pgm";
pub const PLAN: &str = "plan.json";
pub const PREDICTED: &str = "predicted.pgm";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairEntry {
    pub surface: SurfaceKind,
    /// Action centre `[X, Y, Z]`, millimetres.
    pub position_mm: [f64; 3],
    pub rect: RoiRect,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub action: ActionSpec,
    pub camera: IntrinsicsRecord,
    pub seed: u64,
    pub noise_scale: f64,
    pub surfaces: Vec<SurfaceKind>,
    pub pairs: Vec<PairEntry>,
}

impl DatasetManifest {
    pub fn camera(&self) -> Result<CameraIntrinsics, CliError> {
        camera_from_record(&self.camera)
    }
}

fn camera_from_record(rec: &IntrinsicsRecord) -> Result<CameraIntrinsics, CliError> {
    match (rec.w, rec.h) {
        (Some(w), Some(h)) => rec.clone().into_intrinsics(w, h).setup(),
        _ => Err(CliError::Config("manifest camera lacks w and h".into())),
    }
}

pub fn camera_record(intr: &CameraIntrinsics) -> IntrinsicsRecord {
    IntrinsicsRecord {
        w: Some(intr.width()),
        h: Some(intr.height()),
        ..intr.to_record()
    }
}

pub fn write_dataset(dir: &Path, manifest: &DatasetManifest, data: &GeneratedDataset) -> Result<(), CliError> {
    let (w, h) = data.dataset.dims();
    let priors = Batch::new(w, h, data.dataset.priors())?;
    let posteriors = Batch::new(w, h, data.dataset.posteriors())?;
    dimg::write(&dir.join(PRIOR), &priors)?;
    dimg::write(&dir.join(POSTERIOR), &posteriors)?;
    write_file(&dir.join(MANIFEST), to_json(manifest))
}

pub fn read_dataset(dir: &Path) -> Result<(DatasetManifest, PatchDataset), CliError> {
    let manifest: DatasetManifest =
        serde_json::from_str(&read_text(&dir.join(MANIFEST))?).map_err(|e| CliError::Config(format!("{MANIFEST}: {e}")))?;
    validate_actions(std::slice::from_ref(&manifest.action)).setup()?;
    let camera = manifest.camera()?;
    if manifest.pairs.is_empty() {
        return Err(CliError::Config(format!("{} holds no pairs", dir.display())));
    }
    let priors = dimg::read(&dir.join(PRIOR)).setup()?;
    let posteriors = dimg::read(&dir.join(POSTERIOR)).setup()?;
    let n = manifest.pairs.len();
    if priors.len() != n || posteriors.len() != n {
        return Err(CliError::Config(format!(
            "manifest lists {n} pairs, images hold {} priors and {} posteriors",
            priors.len(),
            posteriors.len()
        )));
    }
    let pairs = manifest
        .pairs
        .iter()
        .zip(priors.into_frames().into_iter().zip(posteriors.into_frames()))
        .map(|(e, (a, b))| {
            let r = e.rect;
            let rect = RoiRect::new(r.u_min, r.v_min, r.u_max, r.v_max).setup()?;
            rect.ensure_within(&camera).setup()?;
            Ok(PatchPair {
                prior: Patch::new(rect, a).setup()?,
                posterior: Patch::new(rect, b).setup()?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let ds = PatchDataset::new(manifest.action.name.clone(), pairs).setup()?;
    Ok((manifest, ds))
}

/// An action named by type and position index, as in plan files.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionRef {
    pub action: String,
    pub position: usize,
}

impl std::fmt::Display for ActionRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}@{}", self.action, self.position)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioManifest {
    pub name: String,
    pub surface: SurfaceKind,
    pub seed: u64,
    pub noise_scale: f64,
    pub camera: IntrinsicsRecord,
    pub actions: Vec<ActionSpec>,
    pub truth: Vec<ActionRef>,
    /// Distance between the two images, millimetres.
    pub d0_mm: f64,
}

impl ScenarioManifest {
    pub fn camera(&self) -> Result<CameraIntrinsics, CliError> {
        camera_from_record(&self.camera)
    }

    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let m: ScenarioManifest =
            serde_json::from_str(&read_text(&dir.join(MANIFEST))?).map_err(|e| CliError::Config(format!("{MANIFEST}: {e}")))?;
        validate_actions(&m.actions).setup()?;
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    pub predictor: Mode,
    pub sequence: Vec<ActionRef>,
    /// Predicted distance to the target before and after each action.
    pub trace_mm: Vec<f64>,
    pub truncated: bool,
}

impl PlanFile {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplayFailure {
    pub step: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplayFile {
    pub sequence: Vec<ActionRef>,
    /// Observed distance to the target before and after each executed action.
    pub trace_mm: Vec<f64>,
    pub strictly_decreasing: bool,
    pub failure: Option<ReplayFailure>,
}
