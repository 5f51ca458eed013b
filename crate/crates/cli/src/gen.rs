use std::path::PathBuf;
use std::str::FromStr;

use clap::{ArgGroup, Args, ValueEnum};
use moldkit::metric::distance;
use moldkit::pgm;
use moldkit::planner::{instantiate, ActionInstance};
use moldkit::simkit::{DatasetConfig, Simulator, SurfaceKind, Workspace};

use crate::common::{create_dir, find_instance, find_spec, load_action_set, load_camera, parse_action_ref, write_file, to_json};
use crate::error::{CliError, Setup};
use crate::store::{self, ActionRef, DatasetManifest, PairEntry, ScenarioManifest};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// One poke on a flat surface.
    #[value(name = "single_action")]
    SingleAction,
    /// Grasp, knock and poke on a flat surface.
    #[value(name = "three_actions")]
    ThreeActions,
    /// Press, pinch and poke on a spherical cap.
    Curved,
    /// Four general actions on irregular terrain.
    Irregular,
    /// Knock and poke at the same spot, then a press.
    Overlap,
}

impl Preset {
    fn name(self) -> &'static str {
        match self {
            Preset::SingleAction => "single_action",
            Preset::ThreeActions => "three_actions",
            Preset::Curved => "curved",
            Preset::Irregular => "irregular",
            Preset::Overlap => "overlap",
        }
    }

    fn catalog(self) -> &'static str {
        match self {
            Preset::SingleAction | Preset::ThreeActions => "robot",
            Preset::Curved | Preset::Irregular | Preset::Overlap => "general",
        }
    }

    fn surface(self) -> SurfaceKind {
        match self {
            Preset::SingleAction | Preset::ThreeActions => SurfaceKind::Flat,
            Preset::Curved => SurfaceKind::Curved,
            Preset::Irregular | Preset::Overlap => SurfaceKind::Irregular,
        }
    }

    fn planted(self) -> &'static [(&'static str, usize)] {
        match self {
            Preset::SingleAction => &[("poke", 7)],
            Preset::ThreeActions => &[("grasp", 0), ("knock", 4), ("poke", 14)],
            Preset::Curved => &[("press", 9), ("pinch", 11), ("poke", 17)],
            Preset::Irregular => &[("knock", 1), ("poke", 17), ("pinch", 6), ("press", 11)],
            Preset::Overlap => &[("knock", 10), ("poke", 10), ("press", 0)],
        }
    }
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("what").required(true).args(["action", "scenario", "planted"])))]
pub struct GenArgs {
    /// Generate a prior/posterior dataset for this action type.
    #[arg(long)]
    pub action: Option<String>,
    /// Number of dataset pairs.
    #[arg(long, default_value_t = 100)]
    pub pairs: usize,
    /// Surface kinds priors are drawn from.
    #[arg(long, value_delimiter = ',', default_value = "flat,sloped,irregular")]
    pub surfaces: Vec<String>,
    /// Generate a built-in planted scenario.
    #[arg(long, value_enum)]
    pub scenario: Option<Preset>,
    /// Generate a scenario from these actions, as name@position.
    #[arg(long, value_delimiter = ',')]
    pub planted: Vec<String>,
    /// Scenario surface kind; overrides the preset's.
    #[arg(long)]
    pub surface: Option<String>,
    /// Action catalog (robot, general, measured) or actions JSON file.
    #[arg(long)]
    pub actions: Option<String>,
    /// Camera preset or intrinsics JSON file.
    #[arg(long, default_value = "d435-workspace")]
    pub camera: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Multiplies the stamp noise.
    #[arg(long, default_value_t = 1.0)]
    pub noise_scale: f64,
    /// Output directory; defaults to dataset-<action> or scenario-<name>.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn simulator(args: &GenArgs) -> Result<Simulator, CliError> {
    if !(args.noise_scale >= 0.0 && args.noise_scale.is_finite()) {
        return Err(CliError::Config(format!("noise scale {} must be finite and non-negative", args.noise_scale)));
    }
    let camera = load_camera(&args.camera)?;
    Ok(Simulator::new(camera, Workspace::default()).setup()?.with_noise_scale(args.noise_scale))
}

fn surface_kind(s: &str) -> Result<SurfaceKind, CliError> {
    SurfaceKind::from_str(s.trim()).setup()
}

pub fn run(args: &GenArgs) -> Result<(), CliError> {
    match (&args.action, args.scenario) {
        (Some(action), _) => gen_dataset(args, action),
        (None, preset) => gen_scenario(args, preset),
    }
}

fn gen_dataset(args: &GenArgs, action: &str) -> Result<(), CliError> {
    if args.pairs == 0 {
        return Err(CliError::Config("--pairs must be at least 1".into()));
    }
    let specs = load_action_set(args.actions.as_deref().unwrap_or("general"))?;
    let spec = find_spec(&specs, action)?;
    let sim = simulator(args)?;
    sim.stamp(action).setup()?;
    let surfaces = args.surfaces.iter().map(|s| surface_kind(s)).collect::<Result<Vec<_>, _>>()?;
    let cfg = DatasetConfig {
        surfaces: surfaces.clone(),
        ..DatasetConfig::new(args.pairs, args.seed)
    };
    let data = sim.gen_dataset(spec, &cfg)?;
    let manifest = DatasetManifest {
        action: spec.clone(),
        camera: store::camera_record(sim.intrinsics()),
        seed: args.seed,
        noise_scale: args.noise_scale,
        surfaces,
        pairs: data
            .records
            .iter()
            .map(|r| PairEntry {
                surface: r.surface,
                position_mm: [r.position.x * 1000.0, r.position.y * 1000.0, r.position.z * 1000.0],
                rect: r.rect,
            })
            .collect(),
    };
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from(format!("dataset-{action}")));
    create_dir(&out)?;
    store::write_dataset(&out, &manifest, &data)?;
    let (w, h) = data.dataset.dims();
    eprintln!("wrote {} {action} pairs of {w}x{h} pixels to {}", data.dataset.len(), out.display());
    Ok(())
}

fn gen_scenario(args: &GenArgs, preset: Option<Preset>) -> Result<(), CliError> {
    let catalog = args.actions.as_deref().or(preset.map(Preset::catalog)).unwrap_or("general");
    let specs = load_action_set(catalog)?;
    let refs: Vec<(String, usize)> = match preset {
        Some(p) => p.planted().iter().map(|&(n, j)| (n.to_owned(), j)).collect(),
        None => args.planted.iter().map(|s| parse_action_ref(s)).collect::<Result<_, _>>()?,
    };
    let kind = match (&args.surface, preset) {
        (Some(s), _) => surface_kind(s)?,
        (None, Some(p)) => p.surface(),
        (None, None) => SurfaceKind::Flat,
    };
    let sim = simulator(args)?;
    let actions = instantiate(sim.intrinsics(), &specs).setup()?;
    let planted: Vec<ActionInstance> = refs
        .iter()
        .map(|(n, j)| {
            find_spec(&specs, n)?;
            sim.stamp(n).setup()?;
            find_instance(&actions, n, *j).cloned()
        })
        .collect::<Result<_, _>>()?;
    let sc = sim.gen_scenario(&planted, kind, args.seed)?;
    let wf = sim.weights();
    let d0 = distance(&wf.normalize(&sc.i0)?, &wf.normalize(&sc.i_star)?)?.d_meters;
    let name = preset.map_or("custom", Preset::name).to_owned();
    let manifest = ScenarioManifest {
        name: name.clone(),
        surface: kind,
        seed: args.seed,
        noise_scale: args.noise_scale,
        camera: store::camera_record(sim.intrinsics()),
        actions: specs,
        truth: refs
            .into_iter()
            .map(|(action, position)| ActionRef { action, position })
            .collect(),
        d0_mm: d0 * 1000.0,
    };
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from(format!("scenario-{name}")));
    create_dir(&out)?;
    pgm::write(&out.join(store::I0), &sc.i0)?;
    pgm::write(&out.join(store::I_STAR), &sc.i_star)?;
    write_file(&out.join(store::MANIFEST), to_json(&manifest))?;
    eprintln!(
        "wrote scenario {name} ({kind}, {} planted, d = {:.3} mm) to {}",
        planted.len(),
        d0 * 1000.0,
        out.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use moldkit::simkit::{general_actions, robot_actions};

    #[test]
    fn presets_name_admissible_actions() {
        let sim = Simulator::standard();
        for p in Preset::value_variants() {
            let specs = if p.catalog() == "robot" { robot_actions() } else { general_actions() };
            let actions = instantiate(sim.intrinsics(), &specs).unwrap();
            for &(n, j) in p.planted() {
                assert!(find_instance(&actions, n, j).is_ok(), "{} {n}@{j}", p.name());
            }
        }
        for p in Preset::value_variants() {
            assert_eq!(p.to_possible_value().unwrap().get_name(), p.name());
        }
    }
}
