//! The checked-in data files agree with the built-in catalogs.

use std::path::PathBuf;

use moldkit::roi::load_actions;
use moldkit::simkit::{general_actions, measured_actions, robot_actions};
use moldkit::CameraIntrinsics;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

#[test]
fn action_catalogs_match_files() {
    assert_eq!(load_actions(&data("actions_robot.json")).unwrap(), robot_actions());
    assert_eq!(load_actions(&data("actions_general.json")).unwrap(), general_actions());
    assert_eq!(load_actions(&data("actions_measured.json")).unwrap(), measured_actions());
}

#[test]
fn workspace_intrinsics_match_preset() {
    let file = CameraIntrinsics::load_json(&data("d435_workspace.json")).unwrap();
    assert_eq!(file, CameraIntrinsics::d435_workspace());
    assert_eq!(CameraIntrinsics::from_json_str(&file.to_json_string()).unwrap(), file);
}
