use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args};
use moldkit::metric::{distance, DistanceScale};
use moldkit::pgm;
use moldkit::predict::{cross_validate, evaluate, CvConfig, PatchModel, DEFAULT_EROSION_RADIUS};
use moldkit::DepthImage;
use serde::Serialize;

use crate::common::{create_dir, load_models, to_json, PredictorArgs};
use crate::error::{CliError, Setup};
use crate::store::read_dataset;

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Dataset directory written by `gen --action`.
    #[arg(long)]
    pub data: PathBuf,
    /// Model root; the model goes to <out>/<action>/.
    #[arg(long)]
    pub out: PathBuf,
    /// Radius of the square erosion applied to the Otsu mask.
    #[arg(long, default_value_t = DEFAULT_EROSION_RADIUS)]
    pub erosion: usize,
    /// Number of cross-validation partitions; each tests on 1/folds of the pairs.
    #[arg(long, default_value_t = 4)]
    pub folds: usize,
    /// Seed of the cross-validation shuffle.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub predictor: PredictorArgs,
}

#[derive(Serialize)]
struct FitReport {
    action: String,
    pairs: usize,
    mode: String,
    fold_means_mm: Vec<f64>,
    fold_stds_mm: Vec<f64>,
    mean_mm: f64,
    std_mm: f64,
    otsu_threshold: Option<f64>,
    mask_pixels: usize,
    model_dir: PathBuf,
}

pub fn run_fit(args: &FitArgs) -> Result<(), CliError> {
    let (manifest, ds) = read_dataset(&args.data)?;
    let camera = manifest.camera()?;
    let scale = DistanceScale::new(&camera);
    let base = args.predictor.base()?;
    let cv = cross_validate(
        &ds,
        &CvConfig {
            folds: args.folds,
            seed: args.seed,
            erosion_radius: args.erosion,
            mode: args.predictor.predictor,
            base,
            scale: &scale,
        },
    )?;
    let model = PatchModel::fit(&ds, args.erosion)?;
    let dir = args.out.join(ds.action());
    create_dir(&args.out)?;
    model.save(&dir)?;
    let report = FitReport {
        action: ds.action().to_owned(),
        pairs: ds.len(),
        mode: args.predictor.predictor.to_string(),
        fold_means_mm: cv.folds.iter().map(|f| f.mean_mm).collect(),
        fold_stds_mm: cv.folds.iter().map(|f| f.std_mm).collect(),
        mean_mm: cv.mean_mm,
        std_mm: cv.std_mm,
        otsu_threshold: model.otsu_threshold(),
        mask_pixels: model.mask().as_slice().iter().filter(|&&b| b).count(),
        model_dir: dir,
    };
    eprintln!(
        "{}: {} folds, prediction error {:.3} ± {:.3} mm",
        report.action, args.folds, report.mean_mm, report.std_mm
    );
    print!("{}", to_json(&report));
    Ok(())
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("input").required(true).args(["images", "data"])))]
pub struct EvalArgs {
    /// Two PGM depth images to compare.
    #[arg(num_args = 2, value_names = ["A", "B"])]
    pub images: Vec<PathBuf>,
    /// Dataset directory whose pairs to predict.
    #[arg(long, requires = "models")]
    pub data: Option<PathBuf>,
    /// Model root holding <models>/<action>/.
    #[arg(long)]
    pub models: Option<PathBuf>,
    #[command(flatten)]
    pub predictor: PredictorArgs,
}

#[derive(Serialize)]
struct DistanceOut {
    d_unit: f64,
    d_mm: f64,
}

#[derive(Serialize)]
struct EvalOut {
    action: String,
    mode: String,
    pairs: usize,
    mean_mm: f64,
    std_mm: f64,
    per_pair_mm: Vec<f64>,
}

fn read_image(path: &Path) -> Result<DepthImage, CliError> {
    pgm::read(path).setup()
}

pub fn run_eval(args: &EvalArgs) -> Result<(), CliError> {
    if let [a, b] = args.images.as_slice() {
        let (a, b) = (read_image(a)?, read_image(b)?);
        if a.intrinsics() != b.intrinsics() {
            return Err(CliError::Config("the two images carry different intrinsics".into()));
        }
        let wf = moldkit::WeightField::build(a.intrinsics());
        let r = distance(&wf.normalize(&a)?, &wf.normalize(&b)?)?;
        print!(
            "{}",
            to_json(&DistanceOut {
                d_unit: r.d_unit,
                d_mm: r.d_meters * 1000.0,
            })
        );
        return Ok(());
    }
    let (Some(data), Some(models)) = (&args.data, &args.models) else {
        return Err(CliError::Config("give two images, or --data with --models".into()));
    };
    let (manifest, ds) = read_dataset(data)?;
    let model = load_models(models, std::slice::from_ref(&manifest.action))?;
    if model[0].dims() != ds.dims() {
        return Err(CliError::Config(format!(
            "model is {:?} pixels, dataset patches are {:?}",
            model[0].dims(),
            ds.dims()
        )));
    }
    let predictor = args.predictor.build(model)?;
    let stats = evaluate(&ds, &predictor, &DistanceScale::new(&manifest.camera()?))?;
    print!(
        "{}",
        to_json(&EvalOut {
            action: ds.action().to_owned(),
            mode: predictor.mode().to_string(),
            pairs: ds.len(),
            mean_mm: stats.mean_mm,
            std_mm: stats.std_mm,
            per_pair_mm: stats.per_pair_mm,
        })
    );
    Ok(())
}
