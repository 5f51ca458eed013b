//! Simulator to files to models to plans, end to end.

use std::sync::Arc;

use moldkit::planner::{instantiate, plan, replay, ActionInstance, PlanLimits};
use moldkit::predict::{predict_d, MeanDiff, Mode, PatchModel, Predictor};
use moldkit::simkit::{robot_actions, DatasetConfig, SimExecutor, Simulator, SurfaceKind};
use moldkit::{dimg, pgm};

fn models(sim: &Simulator, seed: u64) -> Vec<PatchModel> {
    robot_actions()
        .iter()
        .map(|s| {
            let ds = sim.gen_dataset(s, &DatasetConfig::new(24, seed)).unwrap().dataset;
            PatchModel::fit(&ds, 1).unwrap()
        })
        .collect()
}

#[test]
fn scenario_survives_pgm_files_and_plans_deterministically() {
    let sim = Simulator::standard();
    let specs = robot_actions();
    let actions = instantiate(sim.intrinsics(), &specs).unwrap();
    let planted = [actions[7].clone(), actions[44].clone()];
    let sc = sim.gen_scenario(&planted, SurfaceKind::Flat, 4).unwrap();

    let dir = tempfile::tempdir().unwrap();
    pgm::write(&dir.path().join("i0.pgm"), &sc.i0).unwrap();
    pgm::write(&dir.path().join("i_star.pgm"), &sc.i_star).unwrap();
    let i0 = pgm::read(&dir.path().join("i0.pgm")).unwrap();
    let istar = pgm::read(&dir.path().join("i_star.pgm")).unwrap();
    assert_eq!((i0.clone(), istar.clone()), (sc.i0.clone(), sc.i_star.clone()));

    let wf = sim.weights();
    let (n0, nstar) = (wf.normalize(&i0).unwrap(), wf.normalize(&istar).unwrap());
    let predictor = Predictor::difference(models(&sim, 1)).unwrap();
    let a = plan(&n0, &nstar, &actions, &predictor, &PlanLimits::default()).unwrap();
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = single.install(|| plan(&n0, &nstar, &actions, &predictor, &PlanLimits::default()).unwrap());
    assert_eq!(a, b);
    let mut got: Vec<_> = a.sequence.iter().map(ActionInstance::key).collect();
    got.sort();
    assert_eq!(got, vec![planted[0].key(), planted[1].key()]);

    let cr = Predictor::new(Mode::CR, models(&sim, 1), Some(Arc::new(MeanDiff))).unwrap();
    let c = plan(&n0, &nstar, &actions, &cr, &PlanLimits::default()).unwrap();
    assert_eq!(c.sequence, a.sequence);
}

#[test]
fn replay_of_empty_plan_is_identity() {
    let sim = Simulator::standard();
    let sc = sim.gen_scenario(&[], SurfaceKind::Curved, 2).unwrap();
    let img = sim.weights().normalize(&sc.i0).unwrap();
    let mut exec = SimExecutor::new(&sim, sc.initial.clone(), 0);
    let r = replay(&img, &img, &[], &mut exec).unwrap();
    assert_eq!(r.final_image, img);
    assert_eq!(r.trace, vec![0.0]);
}

#[test]
fn refit_with_same_seed_gives_identical_model_files() {
    let sim = Simulator::standard();
    let spec = &robot_actions()[1];
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for k in 0..2 {
        let ds = sim.gen_dataset(spec, &DatasetConfig::new(16, 9)).unwrap().dataset;
        let m = PatchModel::fit(&ds, 1).unwrap();
        let out = dir.path().join(format!("run{k}"));
        m.save(&out).unwrap();
        assert_eq!(PatchModel::load(&out).unwrap(), m);
        let files = ["delta.dimg", "mask.dimg", "meta.json"].map(|f| std::fs::read(out.join(f)).unwrap());
        bytes.push(files);
    }
    assert_eq!(bytes[0], bytes[1]);
    let batch = dimg::decode(&bytes[0][0]).unwrap();
    assert_eq!(batch.len(), 1);
}

#[test]
fn mean_difference_rarely_saturates_on_simulated_data() {
    let sim = Simulator::standard();
    let (mut saturated, mut total) = (0usize, 0usize);
    for (k, spec) in robot_actions().iter().enumerate() {
        let ds = sim.gen_dataset(spec, &DatasetConfig::new(40, 30 + k as u64)).unwrap().dataset;
        let model = PatchModel::fit(&ds, 1).unwrap();
        for p in ds.pairs() {
            saturated += predict_d(&model, &p.prior.pixels).unwrap().saturated;
            total += p.prior.pixels.len();
        }
    }
    assert!((saturated as f64) < 1e-3 * total as f64, "{saturated} of {total}");
}
