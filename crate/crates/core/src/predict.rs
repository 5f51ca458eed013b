//! Per-action patch predictors.
//!
//! Every action type gets a [`PatchModel`] built from prior/posterior patch
//! pairs: the mean difference `Δ` and a mask of the pixels the action changes
//! most. Predictions come in three modes:
//!
//! * `D`: `prior + Δ`.
//! * `CR`: an external generator maps `prior` to a posterior, then
//!   [`refine`] shifts its masked mean to that of `prior + Δ` and replaces
//!   everything off the mask by `prior + Δ`.
//! * `DCR`: as `CR`, but the generator is fed `prior + Δ`.
//!
//! All outputs are clamped to `[0, 1]` as the last step.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dimg::{self, Batch};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::metric::{patch_distance, DistanceScale};
use crate::roi::Patch;

/// Histogram bins used to pick the mask threshold.
pub const OTSU_BINS: usize = 256;
pub const DEFAULT_EROSION_RADIUS: usize = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct PatchPair {
    pub prior: Patch,
    pub posterior: Patch,
}

/// Prior/posterior patches of one action type, all of one size.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchDataset {
    action: String,
    pairs: Vec<PatchPair>,
}

impl PatchDataset {
    pub fn new(action: impl Into<String>, pairs: Vec<PatchPair>) -> Result<Self> {
        let action = action.into();
        let first = pairs
            .first()
            .ok_or_else(|| Error::Domain(format!("empty dataset for {action}")))?;
        let dims = first.prior.pixels.dims();
        for (i, p) in pairs.iter().enumerate() {
            if p.prior.pixels.dims() != dims || p.posterior.pixels.dims() != dims {
                return Err(Error::Shape(format!("pair {i} is not {}x{}", dims.0, dims.1)));
            }
            let in_unit = |g: &Grid<f64>| g.as_slice().iter().all(|x| (0.0..=1.0).contains(x));
            if !in_unit(&p.prior.pixels) || !in_unit(&p.posterior.pixels) {
                return Err(Error::Domain(format!("pair {i} has values outside [0, 1]")));
            }
        }
        Ok(PatchDataset { action, pairs })
    }

    pub fn action(&self) -> &str {
        &self.action
    }

    pub fn pairs(&self) -> &[PatchPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `(columns, rows)` of every patch.
    pub fn dims(&self) -> (usize, usize) {
        self.pairs[0].prior.pixels.dims()
    }

    /// The pairs at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let pairs = indices
            .iter()
            .map(|&i| {
                self.pairs
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::Domain(format!("pair index {i} out of range")))
            })
            .collect::<Result<_>>()?;
        Self::new(self.action.clone(), pairs)
    }

    pub fn priors(&self) -> Vec<Grid<f64>> {
        self.pairs.iter().map(|p| p.prior.pixels.clone()).collect()
    }

    pub fn posteriors(&self) -> Vec<Grid<f64>> {
        self.pairs.iter().map(|p| p.posterior.pixels.clone()).collect()
    }
}

/// Elementwise mean of `posterior - prior`.
pub fn mean_difference(ds: &PatchDataset) -> Result<Grid<f64>> {
    let (w, h) = ds.dims();
    let mut sum = Grid::filled(w, h, 0.0);
    for p in ds.pairs() {
        let acc = sum.as_mut_slice();
        for ((s, a), b) in acc
            .iter_mut()
            .zip(p.posterior.pixels.as_slice())
            .zip(p.prior.pixels.as_slice())
        {
            *s += a - b;
        }
    }
    let n = ds.len() as f64;
    Ok(sum.map(|s| s / n))
}

/// Result of thresholding `|Δ|`.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskInfo {
    pub mask: Grid<bool>,
    /// Values of `|Δ|` at or above this fall in the selected bins. `None`
    /// when the histogram is degenerate.
    pub threshold: Option<f64>,
    /// The mask is empty, either because `|Δ|` is constant or because
    /// erosion removed everything.
    pub degenerate: bool,
}

#[inline]
fn bin_of(x: f64, max: f64) -> usize {
    ((x / max * OTSU_BINS as f64) as usize).min(OTSU_BINS - 1)
}

/// Last bin index of the background class under Otsu's rule on `values`
/// binned over `[0, max]`, or `None` when only one bin is populated.
/// Ties keep the lowest index.
pub fn otsu_split(values: &[f64], max: f64) -> Option<usize> {
    if !(max > 0.0) || !max.is_finite() {
        return None;
    }
    let mut hist = [0u64; OTSU_BINS];
    for &x in values {
        hist[bin_of(x, max)] += 1;
    }
    let total: u64 = hist.iter().sum();
    let weighted: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut s0) = (0u64, 0.0f64);
    let mut best: Option<(usize, f64)> = None;
    for (t, &c) in hist.iter().enumerate().take(OTSU_BINS - 1) {
        w0 += c;
        s0 += t as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let (m0, m1) = (s0 / w0 as f64, (weighted - s0) / w1 as f64);
        let between = w0 as f64 * w1 as f64 * (m0 - m1) * (m0 - m1);
        if best.is_none_or(|(_, b)| between > b) {
            best = Some((t, between));
        }
    }
    best.map(|(t, _)| t)
}

/// Binary erosion by a `(2r+1)`-square; pixels outside the grid count as
/// background.
pub fn erode(mask: &Grid<bool>, radius: usize) -> Grid<bool> {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = mask.dims();
    let horizontal = Grid::from_fn(w, h, |u, v| {
        u > radius && u + radius <= w && (u - radius..=u + radius).all(|x| *mask.get(x, v))
    });
    Grid::from_fn(w, h, |u, v| {
        v > radius && v + radius <= h && (v - radius..=v + radius).all(|y| *horizontal.get(u, y))
    })
}

pub fn build_mask(delta: &Grid<f64>, erosion_radius: usize) -> MaskInfo {
    let abs: Vec<f64> = delta.as_slice().iter().map(|x| x.abs()).collect();
    let max = abs.iter().copied().fold(0.0, f64::max);
    let Some(t) = otsu_split(&abs, max) else {
        return MaskInfo {
            mask: delta.map(|_| false),
            threshold: None,
            degenerate: true,
        };
    };
    let raw = Grid::from_vec(delta.width(), delta.height(), abs.iter().map(|&x| bin_of(x, max) > t).collect())
        .expect("same length as delta");
    let mask = erode(&raw, erosion_radius);
    let degenerate = !mask.as_slice().iter().any(|&b| b);
    MaskInfo {
        mask,
        threshold: Some((t + 1) as f64 * max / OTSU_BINS as f64),
        degenerate,
    }
}

/// Learned artifacts of one action type.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchModel {
    action: String,
    delta: Grid<f64>,
    mask: Grid<bool>,
    erosion_radius: usize,
    otsu_threshold: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMeta {
    pub action: String,
    pub w: usize,
    pub h: usize,
    pub erosion_radius: usize,
    pub otsu_threshold: Option<f64>,
}

impl PatchModel {
    pub fn fit(ds: &PatchDataset, erosion_radius: usize) -> Result<Self> {
        let delta = mean_difference(ds)?;
        let info = build_mask(&delta, erosion_radius);
        Self::from_parts(ds.action(), delta, info.mask, erosion_radius, info.threshold)
    }

    pub fn from_parts(
        action: impl Into<String>,
        delta: Grid<f64>,
        mask: Grid<bool>,
        erosion_radius: usize,
        otsu_threshold: Option<f64>,
    ) -> Result<Self> {
        delta.ensure_same_dims(&mask)?;
        if delta.is_empty() {
            return Err(Error::Shape("empty model".into()));
        }
        if let Some(bad) = delta.as_slice().iter().find(|x| !(-1.0..=1.0).contains(*x)) {
            return Err(Error::Domain(format!("mean difference {bad} outside [-1, 1]")));
        }
        Ok(PatchModel {
            action: action.into(),
            delta,
            mask,
            erosion_radius,
            otsu_threshold,
        })
    }

    pub fn action(&self) -> &str {
        &self.action
    }

    pub fn delta(&self) -> &Grid<f64> {
        &self.delta
    }

    pub fn mask(&self) -> &Grid<bool> {
        &self.mask
    }

    pub fn dims(&self) -> (usize, usize) {
        self.delta.dims()
    }

    pub fn erosion_radius(&self) -> usize {
        self.erosion_radius
    }

    pub fn otsu_threshold(&self) -> Option<f64> {
        self.otsu_threshold
    }

    /// Refinement has nothing to act on and reduces to mode `D`.
    pub fn is_degenerate(&self) -> bool {
        !self.mask.as_slice().iter().any(|&b| b)
    }

    fn check_input(&self, g: &Grid<f64>) -> Result<()> {
        if g.dims() != self.dims() {
            return Err(Error::Shape(format!(
                "{}x{} patch for the {}x{} {} model",
                g.width(),
                g.height(),
                self.delta.width(),
                self.delta.height(),
                self.action
            )));
        }
        Ok(())
    }

    pub fn meta(&self) -> ModelMeta {
        ModelMeta {
            action: self.action.clone(),
            w: self.delta.width(),
            h: self.delta.height(),
            erosion_radius: self.erosion_radius,
            otsu_threshold: self.otsu_threshold,
        }
    }

    /// Writes `delta.dimg`, `mask.dimg` and `meta.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (w, h) = self.dims();
        dimg::write(&dir.join("delta.dimg"), &Batch::new(w, h, vec![self.delta.clone()])?)?;
        let mask = self.mask.map(|&b| if b { 1.0 } else { 0.0 });
        dimg::write(&dir.join("mask.dimg"), &Batch::new(w, h, vec![mask])?)?;
        let meta = serde_json::to_string_pretty(&self.meta())? + "\n";
        let path = dir.join("meta.json");
        std::fs::write(&path, meta).map_err(|e| Error::io(path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("meta.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta = parse_model_meta(&text)?;
        let single = |name: &str| -> Result<Grid<f64>> {
            let b = dimg::read(&dir.join(name))?;
            if b.len() != 1 || (b.width(), b.height()) != (meta.w, meta.h) {
                return Err(Error::Config(format!(
                    "{name}: expected one {}x{} frame, found {} of {}x{}",
                    meta.w,
                    meta.h,
                    b.len(),
                    b.width(),
                    b.height()
                )));
            }
            Ok(b.into_frames().remove(0))
        };
        let delta = single("delta.dimg")?;
        let mask_values = single("mask.dimg")?;
        if mask_values.as_slice().iter().any(|&x| x != 0.0 && x != 1.0) {
            return Err(Error::Config("mask.dimg holds values other than 0 and 1".into()));
        }
        let mask = mask_values.map(|&x| x == 1.0);
        Self::from_parts(meta.action, delta, mask, meta.erosion_radius, meta.otsu_threshold)
    }
}

pub fn parse_model_meta(text: &str) -> Result<ModelMeta> {
    let meta: ModelMeta = serde_json::from_str(text)?;
    if meta.w == 0 || meta.h == 0 {
        return Err(Error::Config(format!("model size {}x{}", meta.w, meta.h)));
    }
    Ok(meta)
}

/// A predicted patch after the final clamp.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub pixels: Grid<f64>,
    /// Pixels that left `[0, 1]` before clamping.
    pub saturated: usize,
    /// The model's mask is empty and refinement fell back to mode `D`.
    pub degenerate: bool,
}

fn clamp_unit(g: Grid<f64>) -> (Grid<f64>, usize) {
    let mut saturated = 0;
    let out = g.map(|&x| {
        let c = x.clamp(0.0, 1.0);
        saturated += usize::from(c != x);
        c
    });
    (out, saturated)
}

/// `prior + Δ` before clamping.
fn shifted(model: &PatchModel, prior: &Grid<f64>) -> Grid<f64> {
    prior.zip_map(&model.delta, |a, d| a + d).expect("dims checked by caller")
}

pub fn predict_d(model: &PatchModel, prior: &Grid<f64>) -> Result<Prediction> {
    model.check_input(prior)?;
    let (pixels, saturated) = clamp_unit(shifted(model, prior));
    Ok(Prediction {
        pixels,
        saturated,
        degenerate: false,
    })
}

/// Refinement before the final clamp: on the mask, `base_out + μ` with `μ`
/// the masked mean of `prior + Δ - base_out`; off the mask, `prior + Δ`.
/// Returns `None` for an empty mask.
pub fn refine_unclamped(base_out: &Grid<f64>, prior: &Grid<f64>, model: &PatchModel) -> Result<Option<Grid<f64>>> {
    model.check_input(prior)?;
    model.check_input(base_out)?;
    let target = shifted(model, prior);
    let mut count = 0usize;
    let mut sum = 0.0;
    for ((&m, &t), &b) in model.mask.as_slice().iter().zip(target.as_slice()).zip(base_out.as_slice()) {
        if m {
            count += 1;
            sum += t - b;
        }
    }
    if count == 0 {
        return Ok(None);
    }
    let mu = sum / count as f64;
    let data = model
        .mask
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .zip(base_out.as_slice())
        .map(|((&m, &t), &b)| if m { b + mu } else { t })
        .collect();
    Ok(Some(Grid::from_vec(target.width(), target.height(), data)?))
}

pub fn refine(base_out: &Grid<f64>, prior: &Grid<f64>, model: &PatchModel) -> Result<Prediction> {
    match refine_unclamped(base_out, prior, model)? {
        Some(g) => {
            let (pixels, saturated) = clamp_unit(g);
            Ok(Prediction {
                pixels,
                saturated,
                degenerate: false,
            })
        }
        None => Ok(Prediction {
            degenerate: true,
            ..predict_d(model, prior)?
        }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    D,
    CR,
    DCR,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "D" => Ok(Mode::D),
            "CR" => Ok(Mode::CR),
            "DCR" => Ok(Mode::DCR),
            _ => Err(Error::Config(format!("unknown predictor mode {s:?}; expected D, CR or DCR"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::D => "D",
            Mode::CR => "CR",
            Mode::DCR => "DCR",
        })
    }
}

/// A patch-to-patch generator used as the base of modes `CR` and `DCR`.
/// Output frames must match the inputs in count and size.
pub trait BasePredictor: Send + Sync {
    fn generate(&self, model: &PatchModel, inputs: &[Grid<f64>]) -> Result<Vec<Grid<f64>>>;
}

/// Adds the model's mean difference and clamps: with it as base, mode `CR`
/// reproduces mode `D`.
#[derive(Clone, Copy, Debug, Default)]
pub struct MeanDiff;

impl BasePredictor for MeanDiff {
    fn generate(&self, model: &PatchModel, inputs: &[Grid<f64>]) -> Result<Vec<Grid<f64>>> {
        inputs.iter().map(|g| predict_d(model, g).map(|p| p.pixels)).collect()
    }
}

pub const REQUEST_FILE: &str = "req.dimg";
pub const RESPONSE_FILE: &str = "resp.dimg";
pub const DONE_FILE: &str = "done";
pub const ERROR_FILE: &str = "error";

/// Generator served by another process through files in `root/<action>/`.
///
/// The client writes `req.dimg` (atomically, via rename) and waits for the
/// server to write `resp.dimg` and then `done`, or `error` holding a
/// message. One request per directory is in flight at a time.
pub struct External {
    root: PathBuf,
    timeout: Duration,
    poll: Duration,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl External {
    pub fn new(root: impl Into<PathBuf>, timeout: Duration) -> Self {
        External {
            root: root.into(),
            timeout,
            poll: Duration::from_millis(2),
            locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn action_dir(&self, action: &str) -> PathBuf {
        self.root.join(action)
    }

    fn lock_for(&self, action: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().unwrap_or_else(|e| e.into_inner());
        locks.entry(action.to_owned()).or_default().clone()
    }

    fn unavailable(dir: &Path, msg: impl fmt::Display) -> Error {
        Error::Unavailable(format!("{}: {msg}", dir.display()))
    }
}

fn remove_if_present(path: &Path) -> Result<()> {
    match std::fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(Error::io(path, e)),
        _ => Ok(()),
    }
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

impl BasePredictor for External {
    fn generate(&self, model: &PatchModel, inputs: &[Grid<f64>]) -> Result<Vec<Grid<f64>>> {
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        let (w, h) = model.dims();
        let request = Batch::new(w, h, inputs.to_vec())?;
        let dir = self.action_dir(model.action());
        if !dir.is_dir() {
            return Err(Self::unavailable(&dir, "no exchange directory"));
        }
        let lock = self.lock_for(model.action());
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        let (req, resp, done, err) = (
            dir.join(REQUEST_FILE),
            dir.join(RESPONSE_FILE),
            dir.join(DONE_FILE),
            dir.join(ERROR_FILE),
        );
        for stale in [&resp, &done, &err] {
            remove_if_present(stale)?;
        }
        write_atomic(&req, &dimg::encode(&request)?)?;
        let start = Instant::now();
        loop {
            if err.exists() {
                let msg = std::fs::read_to_string(&err).unwrap_or_default();
                remove_if_present(&err)?;
                remove_if_present(&req)?;
                return Err(Self::unavailable(&dir, format!("generator reported: {}", msg.trim())));
            }
            if done.exists() {
                break;
            }
            if start.elapsed() > self.timeout {
                remove_if_present(&req)?;
                return Err(Self::unavailable(&dir, format!("no response within {:?}", self.timeout)));
            }
            std::thread::sleep(self.poll);
        }
        let response = dimg::read(&resp).map_err(|e| Self::unavailable(&dir, e));
        for used in [&resp, &done, &req] {
            remove_if_present(used)?;
        }
        let response = response?;
        if response.len() != inputs.len() || (response.width(), response.height()) != (w, h) {
            return Err(Self::unavailable(
                &dir,
                format!(
                    "response holds {} frames of {}x{}, expected {} of {w}x{h}",
                    response.len(),
                    response.width(),
                    response.height(),
                    inputs.len()
                ),
            ));
        }
        if response.frames().iter().any(|f| f.as_slice().iter().any(|x| !x.is_finite())) {
            return Err(Self::unavailable(&dir, "response holds non-finite values"));
        }
        Ok(response.into_frames())
    }
}

/// Server side of the exchange: answers the pending request in `dir`, if
/// any, with `f`. Returns whether a request was handled. Undecodable
/// requests and failures of `f` are reported through the `error` file.
pub fn serve_pending(dir: &Path, f: impl FnOnce(Batch) -> Result<Batch>) -> Result<bool> {
    let req = dir.join(REQUEST_FILE);
    let bytes = match std::fs::read(&req) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(false),
        Err(e) => return Err(Error::io(&req, e)),
    };
    remove_if_present(&req)?;
    match dimg::decode(&bytes).and_then(f).and_then(|b| dimg::encode(&b)) {
        Ok(out) => {
            write_atomic(&dir.join(RESPONSE_FILE), &out)?;
            write_atomic(&dir.join(DONE_FILE), b"")?;
        }
        Err(e) => write_atomic(&dir.join(ERROR_FILE), e.to_string().as_bytes())?,
    }
    Ok(true)
}

/// Models for every action type plus the prediction mode.
#[derive(Clone)]
pub struct Predictor {
    mode: Mode,
    models: BTreeMap<String, PatchModel>,
    base: Option<Arc<dyn BasePredictor>>,
}

impl fmt::Debug for Predictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Predictor")
            .field("mode", &self.mode)
            .field("actions", &self.models.keys().collect::<Vec<_>>())
            .field("has_base", &self.base.is_some())
            .finish()
    }
}

impl Predictor {
    /// Mode `D` needs no base; modes `CR` and `DCR` fail without one.
    pub fn new(mode: Mode, models: Vec<PatchModel>, base: Option<Arc<dyn BasePredictor>>) -> Result<Self> {
        if mode != Mode::D && base.is_none() {
            return Err(Error::Unavailable(format!("mode {mode} needs an external generator")));
        }
        let mut map = BTreeMap::new();
        for m in models {
            let name = m.action().to_owned();
            if map.insert(name.clone(), m).is_some() {
                return Err(Error::Config(format!("two models for action {name:?}")));
            }
        }
        Ok(Predictor { mode, models: map, base })
    }

    pub fn difference(models: Vec<PatchModel>) -> Result<Self> {
        Self::new(Mode::D, models, None)
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn model(&self, action: &str) -> Result<&PatchModel> {
        self.models
            .get(action)
            .ok_or_else(|| Error::Config(format!("no model for action {action:?}")))
    }

    pub fn models(&self) -> impl Iterator<Item = &PatchModel> {
        self.models.values()
    }

    pub fn predict(&self, action: &str, prior: &Grid<f64>) -> Result<Prediction> {
        let mut out = self.predict_batch(action, std::slice::from_ref(prior))?;
        Ok(out.remove(0))
    }

    /// Predicts many priors of one action; the base generator sees them as
    /// one batch.
    pub fn predict_batch(&self, action: &str, priors: &[Grid<f64>]) -> Result<Vec<Prediction>> {
        let model = self.model(action)?;
        for p in priors {
            model.check_input(p)?;
        }
        let base = match self.mode {
            Mode::D => return priors.iter().map(|p| predict_d(model, p)).collect(),
            _ => self.base.as_ref().expect("checked in new"),
        };
        let inputs: Vec<Grid<f64>> = match self.mode {
            Mode::DCR => priors.iter().map(|p| shifted(model, p)).collect(),
            _ => priors.to_vec(),
        };
        let outputs = base.generate(model, &inputs)?;
        if outputs.len() != priors.len() {
            return Err(Error::Unavailable(format!(
                "generator returned {} patches for {} inputs",
                outputs.len(),
                priors.len()
            )));
        }
        outputs.iter().zip(priors).map(|(o, p)| refine(o, p, model)).collect()
    }
}

/// Prediction error over a test set, millimetres.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalStats {
    pub mean_mm: f64,
    /// Population standard deviation.
    pub std_mm: f64,
    pub per_pair_mm: Vec<f64>,
}

impl EvalStats {
    fn from_values(per_pair_mm: Vec<f64>) -> Self {
        let n = per_pair_mm.len() as f64;
        let mean_mm = per_pair_mm.iter().sum::<f64>() / n;
        let var = per_pair_mm.iter().map(|x| (x - mean_mm).powi(2)).sum::<f64>() / n;
        EvalStats {
            mean_mm,
            std_mm: var.sqrt(),
            per_pair_mm,
        }
    }
}

/// Mean point distance between predicted and true posterior patches.
pub fn evaluate(ds_test: &PatchDataset, predictor: &Predictor, scale: &DistanceScale) -> Result<EvalStats> {
    if ds_test.is_empty() {
        return Err(Error::Domain("empty test set".into()));
    }
    let preds = predictor.predict_batch(ds_test.action(), &ds_test.priors())?;
    let per_pair = preds
        .iter()
        .zip(ds_test.pairs())
        .map(|(p, pair)| Ok(scale.to_meters(patch_distance(&p.pixels, &pair.posterior.pixels)?) * 1000.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalStats::from_values(per_pair))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossValidation {
    pub folds: Vec<EvalStats>,
    /// Mean of the fold means.
    pub mean_mm: f64,
    /// Population standard deviation of the fold means.
    pub std_mm: f64,
}

/// Settings shared by every fold of [`cross_validate`].
pub struct CvConfig<'a> {
    pub folds: usize,
    pub seed: u64,
    pub erosion_radius: usize,
    pub mode: Mode,
    pub base: Option<Arc<dyn BasePredictor>>,
    pub scale: &'a DistanceScale,
}

/// Shuffles the pairs with `seed`, cuts them into `folds` disjoint parts and
/// tests on each part with a model fitted on the others.
pub fn cross_validate(ds: &PatchDataset, cfg: &CvConfig<'_>) -> Result<CrossValidation> {
    if cfg.folds < 2 || ds.len() < cfg.folds {
        return Err(Error::Config(format!("{} pairs cannot form {} folds", ds.len(), cfg.folds)));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let bounds: Vec<usize> = (0..=cfg.folds).map(|k| k * ds.len() / cfg.folds).collect();
    let mut folds = Vec::with_capacity(cfg.folds);
    for k in 0..cfg.folds {
        let test: Vec<usize> = order[bounds[k]..bounds[k + 1]].to_vec();
        let train: Vec<usize> = order[..bounds[k]].iter().chain(&order[bounds[k + 1]..]).copied().collect();
        let model = PatchModel::fit(&ds.subset(&train)?, cfg.erosion_radius)?;
        let predictor = Predictor::new(cfg.mode, vec![model], cfg.base.clone())?;
        folds.push(evaluate(&ds.subset(&test)?, &predictor, cfg.scale)?);
    }
    let summary = EvalStats::from_values(folds.iter().map(|f| f.mean_mm).collect());
    Ok(CrossValidation {
        folds,
        mean_mm: summary.mean_mm,
        std_mm: summary.std_mm,
    })
}
