//! Input loading shared by the commands. Everything here runs before any
//! work starts, so failures are configuration errors.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, ValueEnum};
use moldkit::planner::ActionInstance;
use moldkit::predict::{BasePredictor, External, MeanDiff, Mode, PatchModel, Predictor};
use moldkit::roi::{load_actions, ActionSpec};
use moldkit::simkit::{general_actions, measured_actions, robot_actions};
use moldkit::CameraIntrinsics;
use serde::Serialize;

use crate::error::{CliError, Setup};

/// A preset name or a standalone intrinsics JSON file.
pub fn load_camera(arg: &str) -> Result<CameraIntrinsics, CliError> {
    if let Some(c) = CameraIntrinsics::preset(arg) {
        return Ok(c);
    }
    let path = Path::new(arg);
    if !path.is_file() {
        return Err(CliError::Config(format!(
            "{arg:?} is neither a camera preset (d435-nominal, d435-calibrated, d435-workspace) nor a file"
        )));
    }
    CameraIntrinsics::load_json(path).setup()
}

/// A built-in action catalog name or an actions JSON file. An existing file
/// wins over a catalog of the same name.
pub fn load_action_set(arg: &str) -> Result<Vec<ActionSpec>, CliError> {
    let path = Path::new(arg);
    if path.is_file() {
        return load_actions(path).setup();
    }
    match arg {
        "robot" => Ok(robot_actions()),
        "general" => Ok(general_actions()),
        "measured" => Ok(measured_actions()),
        _ => Err(CliError::Config(format!(
            "{arg:?} is neither an action catalog (robot, general, measured) nor a file"
        ))),
    }
}

pub fn find_spec<'a>(specs: &'a [ActionSpec], name: &str) -> Result<&'a ActionSpec, CliError> {
    specs.iter().find(|s| s.name == name).ok_or_else(|| {
        let known: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
        CliError::Config(format!("unknown action {name:?}; known: {}", known.join(", ")))
    })
}

/// Looks up an instantiated action by type name and position index.
pub fn find_instance<'a>(
    actions: &'a [ActionInstance],
    name: &str,
    position: usize,
) -> Result<&'a ActionInstance, CliError> {
    actions
        .iter()
        .find(|a| a.action == name && a.position_index == position)
        .ok_or_else(|| CliError::Config(format!("no admissible action {name}@{position}")))
}

/// Parses `name@position`.
pub fn parse_action_ref(s: &str) -> Result<(String, usize), CliError> {
    let bad = || CliError::Config(format!("{s:?} is not of the form name@position"));
    let (name, pos) = s.split_once('@').ok_or_else(bad)?;
    let pos = pos.trim().parse().map_err(|_| bad())?;
    if name.trim().is_empty() {
        return Err(bad());
    }
    Ok((name.trim().to_owned(), pos))
}

/// Loads `root/<name>/` for every action type in `specs`.
pub fn load_models(root: &Path, specs: &[ActionSpec]) -> Result<Vec<PatchModel>, CliError> {
    if !root.is_dir() {
        return Err(CliError::Config(format!("model directory {} does not exist", root.display())));
    }
    specs
        .iter()
        .map(|s| {
            let m = PatchModel::load(&root.join(&s.name)).setup()?;
            if m.action() != s.name {
                return Err(CliError::Config(format!(
                    "{} holds a model of {:?}",
                    root.join(&s.name).display(),
                    m.action()
                )));
            }
            Ok(m)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BaseKind {
    /// Patches served by another process through the exchange directory.
    External,
    /// The mean difference, as in mode D. Useful for exercising the
    /// refinement path without a learned generator.
    MeanDiff,
}

/// Flags selecting the patch predictor.
#[derive(Args, Clone, Debug)]
pub struct PredictorArgs {
    /// Prediction mode: D, CR or DCR.
    #[arg(long, default_value = "D", value_parser = parse_mode)]
    pub predictor: Mode,
    /// Base generator for modes CR and DCR.
    #[arg(long, value_enum, default_value_t = BaseKind::External)]
    pub base: BaseKind,
    /// Exchange directory of the external generator (one subdirectory per action).
    #[arg(long)]
    pub exchange: Option<std::path::PathBuf>,
    /// How long to wait for each external response.
    #[arg(long, default_value_t = 30_000)]
    pub timeout_ms: u64,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: moldkit::Error| e.to_string())
}

impl PredictorArgs {
    /// The base generator for modes CR and DCR; `None` in mode D.
    pub fn base(&self) -> Result<Option<Arc<dyn BasePredictor>>, CliError> {
        Ok(match (self.predictor, self.base) {
            (Mode::D, _) => None,
            (_, BaseKind::MeanDiff) => Some(Arc::new(MeanDiff)),
            (_, BaseKind::External) => {
                let root = self.exchange.as_ref().ok_or_else(|| {
                    CliError::Config(format!("mode {} with an external base needs --exchange", self.predictor))
                })?;
                if !root.is_dir() {
                    return Err(CliError::Config(format!("exchange directory {} does not exist", root.display())));
                }
                Some(Arc::new(External::new(root.clone(), Duration::from_millis(self.timeout_ms))))
            }
        })
    }

    pub fn build(&self, models: Vec<PatchModel>) -> Result<Predictor, CliError> {
        Predictor::new(self.predictor, models, self.base()?).setup()
    }
}

/// Pretty JSON with a trailing newline. Struct fields keep declaration
/// order and maps are ordered, so equal values give equal bytes.
pub fn to_json(value: &impl Serialize) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes") + "\n"
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn to_mm(meters: &[f64]) -> Vec<f64> {
    meters.iter().map(|m| m * 1000.0).collect()
}
