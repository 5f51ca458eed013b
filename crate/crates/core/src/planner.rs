//! Greedy action-sequence search.
//!
//! Each iteration predicts the image after every candidate action, keeps
//! the one closest to the target and stops when no candidate improves the
//! distance by more than [`PlanLimits::min_improvement`]. Ties go to the
//! lowest `(type_index, position_index)`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::depthcam::{CameraIntrinsics, NormalizedImage, Point3};
use crate::error::{Error, Result};
use crate::metric::{distance, distance_with_patch, DistanceReport};
use crate::predict::Predictor;
use crate::roi::{extract_patch, inject_patch, project_box_thin, valid_position_range, ActionSpec, EffectBox, HalfExtents, Patch, RoiRect};

/// Action type `type_index` applied at its position `position_index`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ActionInstance {
    pub action: String,
    pub type_index: usize,
    pub position_index: usize,
    pub position: Point3,
    pub half: HalfExtents,
    pub rect: RoiRect,
}

impl ActionInstance {
    /// Checks that the position is admissible and precomputes the thin-box
    /// rectangle.
    pub fn new(intr: &CameraIntrinsics, spec: &ActionSpec, type_index: usize, position_index: usize) -> Result<Self> {
        let b = spec.effect_box(position_index)?;
        let range = valid_position_range(intr, &b.half, b.center.z)?;
        if !range.contains(b.center.x, b.center.y) {
            return Err(Error::Infeasible(format!(
                "{} position {position_index} at ({:.4}, {:.4}) m leaves the admissible range {:?}",
                spec.name, b.center.x, b.center.y, range
            )));
        }
        Ok(ActionInstance {
            action: spec.name.clone(),
            type_index,
            position_index,
            position: b.center,
            half: b.half,
            rect: project_box_thin(intr, &b)?,
        })
    }

    pub fn effect_box(&self) -> EffectBox {
        EffectBox::new(self.position, self.half)
    }

    pub fn key(&self) -> (usize, usize) {
        (self.type_index, self.position_index)
    }
}

/// Every (type, position) of an action set, ordered by type then position.
pub fn instantiate(intr: &CameraIntrinsics, specs: &[ActionSpec]) -> Result<Vec<ActionInstance>> {
    let mut out = Vec::new();
    for (i, s) in specs.iter().enumerate() {
        for j in 0..s.positions.len() {
            out.push(ActionInstance::new(intr, s, i, j)?);
        }
    }
    Ok(out)
}

pub const DEFAULT_MAX_ITERATIONS: usize = 32;
/// Smallest accepted drop of the image-mean distance per step, meters.
pub const DEFAULT_MIN_IMPROVEMENT: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanLimits {
    pub max_iterations: usize,
    /// Each accepted step lowers the distance by more than this, meters.
    pub min_improvement: f64,
    /// Stop once the distance is at or below this, meters.
    pub accuracy: Option<f64>,
}

impl Default for PlanLimits {
    fn default() -> Self {
        PlanLimits {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            min_improvement: DEFAULT_MIN_IMPROVEMENT,
            accuracy: None,
        }
    }
}

/// Predicted outcome of one action applied to the current image.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    /// Index into the action list passed to [`expand`].
    pub index: usize,
    pub distance: DistanceReport,
    pub patch: Patch,
    pub saturated: usize,
}

impl Candidate {
    /// The current image with this candidate's patch written in.
    pub fn image(&self, base: &NormalizedImage) -> Result<NormalizedImage> {
        Ok(inject_patch(base, &self.patch)?.image)
    }
}

fn check_inputs(ik: &NormalizedImage, target: &NormalizedImage, actions: &[ActionInstance], predictor: &Predictor) -> Result<()> {
    if ik.intrinsics() != target.intrinsics() {
        return Err(Error::Shape("current and target images use different intrinsics".into()));
    }
    for a in actions {
        a.rect.ensure_within(ik.intrinsics())?;
        let model = predictor.model(&a.action)?;
        if model.dims() != (a.rect.width(), a.rect.height()) {
            return Err(Error::Shape(format!(
                "{} model is {}x{} but its rectangle is {}x{}",
                a.action,
                model.dims().0,
                model.dims().1,
                a.rect.width(),
                a.rect.height()
            )));
        }
    }
    Ok(())
}

/// Predicts every action from `ik` and scores it against `target`.
/// Results come ordered by `(type_index, position_index)`.
pub fn expand(
    ik: &NormalizedImage,
    target: &NormalizedImage,
    actions: &[ActionInstance],
    predictor: &Predictor,
) -> Result<Vec<Candidate>> {
    check_inputs(ik, target, actions, predictor)?;
    expand_checked(ik, target, actions, predictor)
}

fn expand_checked(
    ik: &NormalizedImage,
    target: &NormalizedImage,
    actions: &[ActionInstance],
    predictor: &Predictor,
) -> Result<Vec<Candidate>> {
    // One batch per action type keeps external generators to one exchange.
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, a) in actions.iter().enumerate() {
        groups.entry(&a.action).or_default().push(i);
    }
    let mut predicted: Vec<Option<(Patch, usize)>> = vec![None; actions.len()];
    for (name, idx) in &groups {
        let priors = idx
            .iter()
            .map(|&i| extract_patch(ik, &actions[i].rect).map(|p| p.pixels))
            .collect::<Result<Vec<_>>>()?;
        let preds = predictor.predict_batch(name, &priors)?;
        for (&i, p) in idx.iter().zip(preds) {
            predicted[i] = Some((Patch::new(actions[i].rect, p.pixels)?, p.saturated));
        }
    }
    let mut out = predicted
        .into_par_iter()
        .enumerate()
        .map(|(index, p)| {
            let (patch, saturated) = p.expect("every action belongs to a group");
            let distance = distance_with_patch(ik, target, &patch.rect, &patch.pixels)?;
            Ok(Candidate {
                index,
                distance,
                patch,
                saturated,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by_key(|c| (actions[c.index].key(), c.index));
    Ok(out)
}

/// First candidate with the smallest distance, in `(type, position)` order.
fn best(cands: &[Candidate]) -> Option<&Candidate> {
    cands.iter().fold(None, |acc: Option<&Candidate>, c| match acc {
        Some(b) if b.distance.d_meters <= c.distance.d_meters => Some(b),
        _ => Some(c),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub sequence: Vec<ActionInstance>,
    /// Distance to the target before the first and after each action, meters.
    pub trace: Vec<f64>,
    pub predicted_final: NormalizedImage,
    /// The iteration cap stopped the search while an action still improved.
    pub truncated: bool,
}

pub fn plan(
    i0: &NormalizedImage,
    target: &NormalizedImage,
    actions: &[ActionInstance],
    predictor: &Predictor,
    limits: &PlanLimits,
) -> Result<Plan> {
    check_inputs(i0, target, actions, predictor)?;
    if !(limits.min_improvement >= 0.0) {
        return Err(Error::Config(format!("minimum improvement {} must be non-negative", limits.min_improvement)));
    }
    let mut ik = i0.clone();
    let mut d = distance(&ik, target)?.d_meters;
    let mut sequence = Vec::new();
    let mut trace = vec![d];
    let mut truncated = false;
    loop {
        if limits.accuracy.is_some_and(|a| d <= a) {
            break;
        }
        let cands = expand_checked(&ik, target, actions, predictor)?;
        let Some(c) = best(&cands) else { break };
        if !(c.distance.d_meters < d - limits.min_improvement) {
            break;
        }
        if sequence.len() == limits.max_iterations {
            truncated = true;
            break;
        }
        ik = c.image(&ik)?;
        d = c.distance.d_meters;
        sequence.push(actions[c.index].clone());
        trace.push(d);
    }
    Ok(Plan {
        sequence,
        trace,
        predicted_final: ik,
        truncated,
    })
}

/// Something that can carry out actions and observe the result.
pub trait Executor {
    fn execute(&mut self, action: &ActionInstance) -> Result<NormalizedImage>;
}

#[derive(Debug)]
pub struct Replay {
    pub final_image: NormalizedImage,
    /// Distance to the target before the first and after each executed
    /// action, meters.
    pub trace: Vec<f64>,
    /// Index of the action that failed, with its error.
    pub failure: Option<(usize, Error)>,
}

impl Replay {
    pub fn is_strictly_decreasing(&self) -> bool {
        self.trace.windows(2).all(|w| w[1] < w[0])
    }
}

/// Executes `sequence` from `i0`, measuring the distance to `target` after
/// every step. Stops at the first failing action.
pub fn replay(
    i0: &NormalizedImage,
    target: &NormalizedImage,
    sequence: &[ActionInstance],
    exec: &mut dyn Executor,
) -> Result<Replay> {
    let mut image = i0.clone();
    let mut trace = vec![distance(&image, target)?.d_meters];
    for (k, a) in sequence.iter().enumerate() {
        match exec.execute(a).and_then(|img| Ok((distance(&img, target)?, img))) {
            Ok((d, img)) => {
                image = img;
                trace.push(d.d_meters);
            }
            Err(e) => {
                return Ok(Replay {
                    final_image: image,
                    trace,
                    failure: Some((k, e)),
                })
            }
        }
    }
    Ok(Replay {
        final_image: image,
        trace,
        failure: None,
    })
}
