// Licensed under the Apache License, Version 2.0 (the "License"); you may
// not use this file except in compliance with the License. You may obtain
// a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
// WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied. See the
// License for the specific language governing permissions and limitations
// under the License.


use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hopdist(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hopdist"))
        .args(args)
        .env("HOPDIST_OUTPUT_DIR", out)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("exp.cfg");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

const SMALL: &str = "dataset = powerlaw:40,2,0.5,3\nmethods = trivial0,trivial1,mc\nfractions = 0.1,0.4\nseeds = 1,2\n";

#[test]
fn run_writes_reproducible_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = hopdist(&["run", "--config", &cfg], out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let csv = fs::read_to_string(a.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 2 * 2);
    assert!(csv.starts_with("method,fraction,seed,mean_error,ahde,pair_count\ntrivial0,0.1,1,1,"));
    for name in ["report.csv", "report.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn partial_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "dataset = powerlaw:30,2,0.5,1\nmethods = trivial1\nfractions = 1.0,0.2\n");
    let o = hopdist(&["run", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.contains("trivial1,1,0,,,"));
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "dataset = powerlaw:30,2,0.5,1\nfractions = 1.5\n");
    let o = hopdist(&["run", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("fractions"));
}

#[test]
fn relative_dataset_paths_follow_the_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bombing.txt"), "a b\nb c\nc d\nd a\na c\nx y\n").unwrap();
    let cfg = write_config(dir.path(), "dataset = bombing.txt\nmethods = trivial0\nfractions = 0.3\nprofile = true\n");
    let out = dir.path().join("out");
    let o = hopdist(&["run", "--config", &cfg], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let profile = fs::read_to_string(out.join("profile.csv")).unwrap();
    assert_eq!(profile.lines().count(), 1 + 4);
}

#[test]
fn svd_of_k4() {
    let dir = tempfile::tempdir().unwrap();
    let k4 = dir.path().join("k4.txt");
    fs::write(&k4, "0 1\n0 2\n0 3\n1 2\n1 3\n2 3\n").unwrap();
    let o = hopdist(&["svd", "--dataset", k4.to_str().unwrap()], dir.path());
    assert!(o.status.success());
    let text = fs::read_to_string(dir.path().join("lowrank.csv")).unwrap();
    let sigmas: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    for (got, want) in sigmas.iter().zip([3.0, 1.0, 1.0, 1.0]) {
        assert!((got - want).abs() < 1e-9, "{text}");
    }
}

#[test]
fn complete_with_a_single_method() {
    let dir = tempfile::tempdir().unwrap();
    let o = hopdist(
        &["complete", "--dataset", "powerlaw:50,3,0.4,2", "--fraction", "0.2", "--method", "trivial0"],
        dir.path(),
    );
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("trivial0 mean_error=1 "));

    let o = hopdist(
        &["complete", "--dataset", "powerlaw:50,3,0.4,2", "--fraction", "0.2", "--method", "magic"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn oracle_lists_selected_windows() {
    let dir = tempfile::tempdir().unwrap();
    let o = hopdist(
        &["--sequential", "oracle", "--dataset", "powerlaw:30,2,0.5,4", "--fraction", "0.2", "--n-d", "4", "--top-k", "1"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().count(), 1);
    assert!(stdout.starts_with('['));
    let csv = fs::read_to_string(dir.path().join("oracle.csv")).unwrap();
    assert!(csv.starts_with("stage,window,mean_error,ahde,rank\n1,"));
}
