use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rayalign_cli::camt::{Dtype, Tensor};
use rayalign_cli::commands::AlignmentFile;
use rayalign_cli::json::read_json;
use rayalign_cli::scene::{load_scene, save_scene, Meta, SceneFile};
use rayalign_core::metrics::EvalReport;
use rayalign_core::scenegraph::{prune, PruneConfig, SceneGraph};
use rayalign_core::simkit::{curate_pairs, simulate, DatasetProfile, LoopTrajectory, SimConfig};
use tempfile::TempDir;

fn rayalign(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rayalign"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("RAYALIGN_THREADS", t),
        None => cmd.env_remove("RAYALIGN_THREADS"),
    };
    cmd.output().unwrap()
}

fn ok(args: &[&str]) {
    let out = rayalign(args, None);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

#[test]
fn default_simulation_has_both_directions_of_every_curated_pair() {
    let t = TempDir::new().unwrap();
    ok(&["simulate", "--out", s(t.path())]);
    let file: SceneFile = read_json(&t.path().join("scene.json")).unwrap();
    assert_eq!(file.views.len(), 8);
    let pairs = curate_pairs(
        &LoopTrajectory::default().poses(8),
        DatasetProfile::TwoD3ds,
        5,
    );
    assert_eq!(file.edges.len(), 2 * pairs.len());
    for (a, b) in pairs {
        let has = |x: usize, y: usize| {
            file.edges
                .iter()
                .any(|e| e.src.0 as usize == x && e.dst.0 as usize == y)
        };
        assert!(has(a, b) && has(b, a));
    }
    assert!(t.path().join("truth.json").exists());
}

#[test]
fn simulate_is_byte_identical_per_seed() {
    let (a, b, c) = (
        TempDir::new().unwrap(),
        TempDir::new().unwrap(),
        TempDir::new().unwrap(),
    );
    ok(&["simulate", "--out", s(a.path()), "--seed", "3"]);
    let out = rayalign(
        &["simulate", "--out", s(b.path()), "--seed", "3"],
        Some("1"),
    );
    assert!(out.status.success());
    ok(&["simulate", "--out", s(c.path()), "--seed", "4"]);
    assert_eq!(tree(a.path()), tree(b.path()));
    assert_ne!(tree(a.path()), tree(c.path()));
}

#[test]
fn config_errors_exit_2_with_a_line() {
    let t = TempDir::new().unwrap();
    let cfg = t.path().join("cfg.json");
    std::fs::write(&cfg, "{\n  \"cameras\": [\n    {\"model\": \"pinhole\", \"width\": 8, \"height\": 8,\n     \"fx\": -1, \"fy\": 1, \"cx\": 4, \"cy\": 4}\n  ]\n}\n").unwrap();
    let out = rayalign(
        &[
            "simulate",
            "--config",
            s(&cfg),
            "--out",
            s(&t.path().join("o")),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("cfg.json:5:"), "{err}");
    assert!(err.contains("focal"), "{err}");

    std::fs::write(&cfg, "{\"num_views\": 1}").unwrap();
    let out = rayalign(
        &[
            "simulate",
            "--config",
            s(&cfg),
            "--out",
            s(&t.path().join("o")),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(2));

    let out = rayalign(&["simulate", "--out", s(t.path())], Some("zero"));
    assert_eq!(out.status.code(), Some(2));
    let out = rayalign(&["simulate"], None);
    assert_eq!(out.status.code(), Some(2));
    let out = rayalign(
        &[
            "prune",
            "--scene",
            s(&t.path().join("missing.json")),
            "--out",
            s(t.path()),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn noiseless_pipeline_end_to_end() {
    let t = TempDir::new().unwrap();
    let (sim, pr, al) = (
        t.path().join("sim"),
        t.path().join("pruned"),
        t.path().join("al"),
    );
    ok(&["simulate", "--out", s(&sim)]);
    ok(&[
        "prune",
        "--scene",
        s(&sim.join("scene.json")),
        "--out",
        s(&pr),
    ]);
    ok(&[
        "align",
        "--scene",
        s(&pr.join("scene.json")),
        "--out",
        s(&al),
        "--joint-iters",
        "5000",
        "--tol",
        "0",
    ]);
    let report = t.path().join("report.json");
    ok(&[
        "eval",
        "--alignment",
        s(&al.join("alignment.json")),
        "--truth",
        s(&sim.join("truth.json")),
        "--out",
        s(&report),
    ]);
    let r: EvalReport = read_json(&report).unwrap();
    assert!(r.ate_rmse <= 1e-4, "{r:?}");
    assert_eq!(
        (r.rra15, r.rta15, r.maa30, r.n_pairs),
        (100.0, 100.0, 100.0, 28)
    );
    let text = std::fs::read_to_string(&report).unwrap();
    for key in [
        "rra@15", "rta@15", "rra@30", "rta@30", "maa@30", "ate_rmse", "n_pairs",
    ] {
        assert!(text.contains(&format!("\"{key}\"")));
    }
    let file: AlignmentFile = read_json(&al.join("alignment.json")).unwrap();
    assert!(file.final_objective < 1e-10 * file.initial_objective);
    let cloud = Tensor::read(&al.join("cloud.camt")).unwrap();
    assert_eq!(cloud.dims[1], 4);
    assert!(cloud.dims[0] > 1000);
}

#[test]
fn export_ply_is_readable_by_a_reference_parser() {
    let t = TempDir::new().unwrap();
    let data: Vec<f64> = (0..10)
        .flat_map(|k| [k as f64, -0.5 * k as f64, 2.0, 0.1 * k as f64])
        .collect();
    let cloud = t.path().join("c.camt");
    Tensor::new(Dtype::F32, vec![10, 4], data)
        .unwrap()
        .write(&cloud)
        .unwrap();
    let ply = t.path().join("c.ply");
    ok(&["export-ply", "--cloud", s(&cloud), "--out", s(&ply)]);
    let mut f = std::fs::File::open(&ply).unwrap();
    let parser = ply_rs::parser::Parser::<ply_rs::ply::DefaultElement>::new();
    let parsed = parser.read_ply(&mut f).unwrap();
    assert_eq!(
        parsed.header.encoding,
        ply_rs::ply::Encoding::BinaryLittleEndian
    );
    let verts = &parsed.payload["vertex"];
    assert_eq!(verts.len(), 10);
    for (k, v) in verts.iter().enumerate() {
        assert_eq!(v["x"], ply_rs::ply::Property::Float(k as f32));
        assert_eq!(v["y"], ply_rs::ply::Property::Float(-0.5 * k as f32));
        assert!(matches!(v["red"], ply_rs::ply::Property::UChar(_)));
    }
    assert_eq!(verts[9]["red"], ply_rs::ply::Property::UChar(255));
    assert_eq!(verts[0]["blue"], ply_rs::ply::Property::UChar(255));
}

#[test]
fn rays_dump_has_height_width_3_dims() {
    let t = TempDir::new().unwrap();
    let cam = t.path().join("cam.json");
    std::fs::write(&cam, r#"{"model": "equirect", "width": 8, "height": 4}"#).unwrap();
    let out = t.path().join("r.camt");
    ok(&["rays", "--config", s(&cam), "--out", s(&out)]);
    let r = Tensor::read(&out).unwrap();
    assert_eq!(r.dims, vec![4, 8, 3]);
    assert_eq!(r.dtype, Dtype::F32);
    for d in r.data.chunks_exact(3) {
        assert!(((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt() - 1.0).abs() < 1e-6);
    }
}

fn small_config(dir: &Path, num_views: usize) -> PathBuf {
    let cfg = dir.join("cfg.json");
    let body = format!(
        r#"{{"num_views": {num_views}, "cameras": [{{"model": "equirect", "width": 16, "height": 8}},
            {{"model": "pinhole", "width": 12, "height": 12, "fx": 6, "fy": 6, "cx": 6, "cy": 6}}],
            "noise": {{"radial_rel_sigma": 0.01, "rot_sigma_deg": 0.5}}}}"#
    );
    std::fs::write(&cfg, body).unwrap();
    cfg
}

#[test]
fn scene_files_round_trip_losslessly() {
    let t = TempDir::new().unwrap();
    let cfg = small_config(t.path(), 4);
    let sim = t.path().join("sim");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&sim)]);
    let pr = t.path().join("pr");
    ok(&[
        "prune",
        "--scene",
        s(&sim.join("scene.json")),
        "--out",
        s(&pr),
        "--quantile",
        "0",
    ]);
    let loaded = load_scene(&pr.join("scene.json")).unwrap();
    assert!(loaded.graph.edges().iter().all(|e| e.matches.is_some()));
    let again = t.path().join("again");
    save_scene(&loaded.graph, &again, &loaded.meta, &loaded.gt_poses).unwrap();
    assert_eq!(
        tree(&pr)
            .into_iter()
            .filter(|(p, _)| !p.ends_with("prune_report.json"))
            .collect::<BTreeMap<_, _>>(),
        tree(&again)
    );
    assert_eq!(load_scene(&again.join("scene.json")).unwrap(), loaded);
    let (twice, _) = prune(
        &loaded.graph,
        &PruneConfig {
            quantile: 0.0,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(twice, loaded.graph);
}

#[test]
fn tensor_dims_must_match_cameras() {
    let t = TempDir::new().unwrap();
    let cfg = small_config(t.path(), 3);
    ok(&["simulate", "--config", s(&cfg), "--out", s(t.path())]);
    let file: SceneFile = read_json(&t.path().join("scene.json")).unwrap();
    let victim = t.path().join(&file.edges[0].radial_src);
    Tensor::new(Dtype::F32, vec![2, 2], vec![1.0; 4])
        .unwrap()
        .write(&victim)
        .unwrap();
    let out = rayalign(
        &[
            "prune",
            "--scene",
            s(&t.path().join("scene.json")),
            "--out",
            s(&t.path().join("p")),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("radial_src"));
}

#[test]
fn disconnected_graph_exits_3() {
    let t = TempDir::new().unwrap();
    let cfg: SimConfig = read_json(&small_config(t.path(), 4)).unwrap();
    let sim = simulate(&cfg).unwrap();
    let keep = PruneConfig {
        quantile: 0.0,
        tau_rot_deg: 180.0,
        tau_tra_deg: 180.0,
        ..Default::default()
    };
    let (g, _) = prune(&sim.graph, &keep).unwrap();
    let side = |v: u32| v < 2;
    let edges = g
        .edges()
        .iter()
        .filter(|e| side(e.src.0) == side(e.dst.0))
        .cloned()
        .collect();
    let split = SceneGraph::new(g.views().to_vec(), edges).unwrap();
    save_scene(&split, t.path(), &Meta::default(), &[]).unwrap();
    let out = rayalign(
        &[
            "align",
            "--scene",
            s(&t.path().join("scene.json")),
            "--out",
            s(&t.path().join("al")),
        ],
        None,
    );
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn non_finite_optimization_exits_4() {
    let t = TempDir::new().unwrap();
    let cfg = small_config(t.path(), 3);
    ok(&["simulate", "--config", s(&cfg), "--out", s(t.path())]);
    let pr = t.path().join("pr");
    ok(&[
        "prune",
        "--scene",
        s(&t.path().join("scene.json")),
        "--out",
        s(&pr),
        "--quantile",
        "0",
    ]);
    let out = rayalign(
        &[
            "align",
            "--scene",
            s(&pr.join("scene.json")),
            "--out",
            s(&t.path().join("al")),
            "--lr",
            "1e300",
        ],
        None,
    );
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn unpruned_scene_cannot_be_aligned() {
    let t = TempDir::new().unwrap();
    let cfg = small_config(t.path(), 3);
    ok(&["simulate", "--config", s(&cfg), "--out", s(t.path())]);
    let out = rayalign(
        &[
            "align",
            "--scene",
            s(&t.path().join("scene.json")),
            "--out",
            s(&t.path().join("al")),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("prune"));
}
