use std::path::PathBuf;

use clap::Args;
use moldkit::pgm;
use moldkit::planner::{instantiate, plan, replay, ActionInstance, PlanLimits, DEFAULT_MAX_ITERATIONS, DEFAULT_MIN_IMPROVEMENT};
use moldkit::simkit::{SimExecutor, Simulator, Workspace};
use moldkit::WeightField;

use crate::common::{create_dir, find_instance, load_action_set, load_models, to_json, to_mm, write_file, PredictorArgs};
use crate::error::{CliError, Setup};
use crate::store::{self, ActionRef, PlanFile, ReplayFailure, ReplayFile, ScenarioManifest};

#[derive(Args, Debug)]
pub struct PlanArgs {
    /// Initial depth image (PGM).
    #[arg(long)]
    pub i0: PathBuf,
    /// Desired depth image (PGM) with the same intrinsics.
    #[arg(long)]
    pub target: PathBuf,
    /// Action catalog (robot, general, measured) or actions JSON file.
    #[arg(long)]
    pub actions: String,
    /// Model root holding <models>/<action>/ for every action type.
    #[arg(long)]
    pub models: PathBuf,
    #[command(flatten)]
    pub predictor: PredictorArgs,
    /// Upper bound on the plan length.
    #[arg(long, default_value_t = DEFAULT_MAX_ITERATIONS)]
    pub max_iterations: usize,
    /// Each step must lower the predicted distance by more than this.
    #[arg(long, default_value_t = DEFAULT_MIN_IMPROVEMENT * 1000.0)]
    pub min_improvement_mm: f64,
    /// Stop once the predicted distance reaches this.
    #[arg(long)]
    pub accuracy_mm: Option<f64>,
    /// Receives plan.json and predicted.pgm.
    #[arg(long, default_value = "plan")]
    pub out: PathBuf,
}

fn refs(seq: &[ActionInstance]) -> Vec<ActionRef> {
    seq.iter()
        .map(|a| ActionRef {
            action: a.action.clone(),
            position: a.position_index,
        })
        .collect()
}

/// One-line summary of a sequence and its distance trace.
fn caption(seq: &[ActionRef], trace_mm: &[f64]) -> String {
    let s: Vec<String> = seq.iter().map(ToString::to_string).collect();
    let d: Vec<String> = trace_mm.iter().map(|d| format!("{d:.3}")).collect();
    format!("s = [{}]  d (mm): {}", s.join(", "), d.join(" -> "))
}

pub fn run_plan(args: &PlanArgs) -> Result<(), CliError> {
    let i0 = pgm::read(&args.i0).setup()?;
    let target = pgm::read(&args.target).setup()?;
    if i0.intrinsics() != target.intrinsics() {
        return Err(CliError::Config("initial and target images carry different intrinsics".into()));
    }
    if !(args.min_improvement_mm >= 0.0) || args.accuracy_mm.is_some_and(|a| !(a >= 0.0)) {
        return Err(CliError::Config("thresholds must be non-negative".into()));
    }
    let specs = load_action_set(&args.actions)?;
    let actions = instantiate(i0.intrinsics(), &specs).setup()?;
    let predictor = args.predictor.build(load_models(&args.models, &specs)?)?;
    let limits = PlanLimits {
        max_iterations: args.max_iterations,
        min_improvement: args.min_improvement_mm / 1000.0,
        accuracy: args.accuracy_mm.map(|a| a / 1000.0),
    };
    let wf = WeightField::build(i0.intrinsics());
    let result = plan(&wf.normalize(&i0)?, &wf.normalize(&target)?, &actions, &predictor, &limits)?;
    let file = PlanFile {
        predictor: predictor.mode(),
        sequence: refs(&result.sequence),
        trace_mm: to_mm(&result.trace),
        truncated: result.truncated,
    };
    create_dir(&args.out)?;
    let json = to_json(&file);
    write_file(&args.out.join(store::PLAN), &json)?;
    pgm::write(&args.out.join(store::PREDICTED), &wf.denormalize(&result.predicted_final)?)?;
    eprintln!("{}", caption(&file.sequence, &file.trace_mm));
    if file.truncated {
        log::warn!("plan stopped at {} actions while still improving", args.max_iterations);
    }
    print!("{json}");
    Ok(())
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    /// Scenario directory written by `gen --scenario` or `gen --planted`.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Plan file written by `plan`.
    #[arg(long)]
    pub plan: PathBuf,
    /// Seed of the execution noise.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run_replay(args: &ReplayArgs) -> Result<(), CliError> {
    let m = ScenarioManifest::read(&args.scenario)?;
    let plan_file = PlanFile::read(&args.plan)?;
    let camera = m.camera()?;
    let sim = Simulator::new(camera.clone(), Workspace::default())
        .setup()?
        .with_noise_scale(m.noise_scale);
    let actions = instantiate(&camera, &m.actions).setup()?;
    let lookup = |r: &ActionRef| find_instance(&actions, &r.action, r.position).cloned();
    let truth = m.truth.iter().map(lookup).collect::<Result<Vec<_>, _>>()?;
    let sequence = plan_file.sequence.iter().map(lookup).collect::<Result<Vec<_>, _>>()?;
    let sc = sim.gen_scenario(&truth, m.surface, m.seed).setup()?;
    let on_disk = (
        pgm::read(&args.scenario.join(store::I0)).setup()?,
        pgm::read(&args.scenario.join(store::I_STAR)).setup()?,
    );
    if on_disk != (sc.i0.clone(), sc.i_star.clone()) {
        return Err(CliError::Config("scenario images do not match what the manifest regenerates".into()));
    }
    let wf = sim.weights();
    let mut exec = SimExecutor::new(&sim, sc.initial.clone(), args.seed);
    let r = replay(&wf.normalize(&sc.i0)?, &wf.normalize(&sc.i_star)?, &sequence, &mut exec)?;
    let out = ReplayFile {
        sequence: plan_file.sequence,
        trace_mm: to_mm(&r.trace),
        strictly_decreasing: r.is_strictly_decreasing(),
        failure: r.failure.as_ref().map(|(step, e)| ReplayFailure {
            step: *step,
            error: e.to_string(),
        }),
    };
    let done = out.trace_mm.len() - 1;
    eprintln!("{}", caption(&out.sequence[..done], &out.trace_mm));
    if let Some(f) = &out.failure {
        eprintln!("step {} failed: {}", f.step, f.error);
    }
    print!("{}", to_json(&out));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn caption_lists_actions_and_distances() {
        let seq = [
            ActionRef {
                action: "knock".into(),
                position: 4,
            },
            ActionRef {
                action: "poke".into(),
                position: 14,
            },
        ];
        assert_eq!(
            caption(&seq, &[0.8091, 0.2, 0.1024]),
            "s = [knock@4, poke@14]  d (mm): 0.809 -> 0.200 -> 0.102"
        );
        assert_eq!(caption(&[], &[0.0]), "s = []  d (mm): 0.000");
    }
}
