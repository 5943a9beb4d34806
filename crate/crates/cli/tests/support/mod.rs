#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vcpanel::montecarlo::{gen_additive_dgp, gen_interactive_dgp};
use vcpanel::PanelData;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vcpanel"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).env_remove("VCPANEL_THREADS").output().expect("binary runs")
}

/// Long CSV with columns id, t, u, y, x1 (the intercept), x2.
pub fn panel_csv(panel: &PanelData) -> String {
    let mut s = String::from("id,t,u,y,x1,x2\n");
    for i in 0..panel.n_subjects() {
        for t in 0..panel.n_periods() {
            writeln!(
                s,
                "{},{},{},{},{},{}",
                i + 1,
                t + 1,
                panel.u()[(i, t)],
                panel.y()[(i, t)],
                panel.x(0)[(i, t)],
                panel.x(1)[(i, t)]
            )
            .unwrap();
        }
    }
    s
}

pub fn interactive_csv(dir: &Path, n: usize, t: usize, seed: u64) -> (PathBuf, PanelData) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (panel, _) = gen_interactive_dgp(n, t, &mut rng).unwrap();
    let path = dir.join(format!("interactive_{n}_{t}_{seed}.csv"));
    std::fs::write(&path, panel_csv(&panel)).unwrap();
    (path, panel)
}

pub fn additive_csv(dir: &Path, n: usize, t: usize, seed: u64) -> (PathBuf, PanelData) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (panel, _) = gen_additive_dgp(n, t, &mut rng).unwrap();
    let path = dir.join(format!("additive_{n}_{t}_{seed}.csv"));
    std::fs::write(&path, panel_csv(&panel)).unwrap();
    (path, panel)
}

pub fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    let text = format!("{body}\n[schema]\nx = [\"x1\", \"x2\"]\n");
    std::fs::write(&path, text).unwrap();
    path
}

pub fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
