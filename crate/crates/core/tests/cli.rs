use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use wavelat::dataset::read_manifest;

const CONFIG: &str = r#"seed = 11

[grid]
resolution = 32

[codec]
finetune_cap = 4

[codebook]
size = 32
iters = 5

[diffusion]
timesteps = 100
buckets = 8
condition = "pointcloud"
condition_points = 500

[sampler]
steps = 8
scale = 1.3
count = 2

[eval]
split = "all"
chamfer_samples = 256
"#;

fn wavelat<S: AsRef<str>>(args: &[S]) -> i32 {
    let argv = std::iter::once(OsString::from("wavelat")).chain(args.iter().map(|a| OsString::from(a.as_ref())));
    wavelat::cli::run(argv)
}

fn ok<S: AsRef<str>>(args: &[S]) {
    let code = wavelat(args);
    let shown: Vec<&str> = args.iter().map(|a| a.as_ref()).collect();
    assert_eq!(code, 0, "wavelat {} exited with {code}", shown.join(" "));
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new(recipe: &str) -> Self {
        let w = Workspace { dir: tempfile::tempdir().unwrap() };
        std::fs::write(w.path("config.toml"), CONFIG).unwrap();
        ok(&["corpus", "--config", &w.path("config.toml"), "--recipe", recipe, "--out", &w.path("corpus")]);
        w
    }

    fn path(&self, p: &str) -> String {
        self.dir.path().join(p).to_str().unwrap().to_string()
    }

    fn run(&self, args: &[&str]) {
        let mut all: Vec<&str> = args.to_vec();
        let config = self.path("config.toml");
        all.extend(["--config", &config]);
        ok(&all);
    }
}

#[test]
fn pipeline_equals_its_subcommands() {
    let w = Workspace::new("sphere=3,box=3,torus=3,csg=3");
    let manifest = w.path("corpus/synthetic.tsv");
    w.run(&["pipeline", "--shapes", &manifest, "--out", &w.path("piped")]);

    let c = |p: &str| w.path(&format!("composed/{p}"));
    let records = read_manifest(Path::new(&manifest)).unwrap();
    for r in &records {
        let id = &r.id;
        w.run(&["voxelize", "--input", &w.path(&format!("corpus/shapes/{id}.toml")), "--out", &c(&format!("grids/{id}.sdf"))]);
        w.run(&["dwt", "--input", &c(&format!("grids/{id}.sdf")), "--out", &c(&format!("decomps/{id}.wdc"))]);
        w.run(&["pack", "--input", &c(&format!("decomps/{id}.wdc")), "--out", &c(&format!("trees/{id}.wtr"))]);
    }
    w.run(&["fit-codec", "--manifest", &manifest, "--trees", &c("trees"), "--out", &c("codec.lc")]);
    for r in &records {
        let id = &r.id;
        w.run(&["encode", "--codec", &c("codec.lc"), "--input", &c(&format!("trees/{id}.wtr")), "--out", &c(&format!("latents/{id}.lat"))]);
    }
    w.run(&["fit-codebook", "--manifest", &manifest, "--latents", &c("latents"), "--out", &c("codebook.cb")]);
    w.run(&[
        "finetune", "--manifest", &manifest, "--trees", &c("trees"), "--codec", &c("codec.lc"), "--codebook",
        &c("codebook.cb"), "--out-codec", &c("codec-ft.lc"), "--out-codebook", &c("codebook-ft.cb"),
    ]);
    for r in &records {
        let id = &r.id;
        w.run(&["encode", "--codec", &c("codec-ft.lc"), "--input", &c(&format!("trees/{id}.wtr")), "--out", &c(&format!("latents-ft/{id}.lat"))]);
        w.run(&["condition", "--input", &c(&format!("grids/{id}.sdf")), "--out", &c(&format!("conds/{id}.cnd"))]);
    }
    w.run(&["train-denoiser", "--manifest", &manifest, "--latents", &c("latents-ft"), "--conds", &c("conds"), "--out", &c("denoiser.dn")]);
    w.run(&[
        "sample", "--denoiser", &c("denoiser.dn"), "--codec", &c("codec-ft.lc"), "--codebook", &c("codebook-ft.cb"),
        "--cond", &c(&format!("conds/{}.cnd", records[0].id)), "--out", &c("samples"),
    ]);
    w.run(&[
        "eval", "--manifest", &manifest, "--grids", &c("grids"), "--trees", &c("trees"), "--codec", &c("codec-ft.lc"),
        "--codebook", &c("codebook-ft.cb"), "--out", &c("report.tsv"),
    ]);

    let mut piped = files_under(Path::new(&w.path("piped")));
    assert!(piped.remove(Path::new("config.toml")).is_some());
    let composed = files_under(Path::new(&w.path("composed")));
    assert_eq!(piped.keys().collect::<Vec<_>>(), composed.keys().collect::<Vec<_>>());
    for (name, bytes) in &piped {
        assert!(bytes == &composed[name], "{} differs", name.display());
    }
    assert!(piped.keys().any(|k| k.starts_with("samples")));
}

#[test]
fn subcommands_are_rerunnable() {
    let w = Workspace::new("sphere=2,torus=2");
    let shape = w.path("corpus/shapes/torus-0001.toml");
    for round in ["a", "b"] {
        let p = |s: &str| w.path(&format!("{round}/{s}"));
        w.run(&["voxelize", "--input", &shape, "--out", &p("t.sdf")]);
        w.run(&["dwt", "--input", &p("t.sdf"), "--out", &p("t.wdc")]);
        w.run(&["pack", "--input", &p("t.wdc"), "--out", &p("trees/torus-0001.wtr")]);
        w.run(&["condition", "--input", &p("t.sdf"), "--out", &p("t.cnd"), "--kind", "voxel"]);
        w.run(&["condition", "--input", &p("t.sdf"), "--out", &p("p.cnd"), "--seed", "5"]);
    }
    assert_eq!(files_under(Path::new(&w.path("a"))), files_under(Path::new(&w.path("b"))));
    w.run(&["condition", "--input", &w.path("a/t.sdf"), "--out", &w.path("p6.cnd"), "--seed", "6"]);
    assert_ne!(std::fs::read(w.path("a/p.cnd")).unwrap(), std::fs::read(w.path("p6.cnd")).unwrap());
}

#[test]
fn exit_codes_follow_the_error_kind() {
    assert_eq!(wavelat(&["--help"]), 0);
    assert_eq!(wavelat(&["no-such-command"]), 1);
    assert_eq!(wavelat(&["dwt", "--input", "x.sdf"]), 1);
    assert_eq!(wavelat(&["voxelize", "--input", "missing.toml", "--out", "never.sdf", "--res", "12"]), 1);

    let w = Workspace::new("sphere=2,box=1");
    assert_eq!(wavelat(&["voxelize", "--input", &w.path("missing.toml"), "--out", &w.path("x.sdf")]), 2);
    std::fs::write(w.path("bad.tsv"), "only\ttwo\n").unwrap();
    assert_eq!(
        wavelat(&["fit-codec", "--manifest", &w.path("bad.tsv"), "--trees", &w.path("t"), "--out", &w.path("c.lc")]),
        2
    );

    let manifest = w.path("corpus/synthetic.tsv");
    for r in read_manifest(Path::new(&manifest)).unwrap() {
        let id = &r.id;
        w.run(&["voxelize", "--input", &w.path(&format!("corpus/shapes/{id}.toml")), "--out", &w.path(&format!("g/{id}.sdf"))]);
        w.run(&["dwt", "--input", &w.path(&format!("g/{id}.sdf")), "--out", &w.path(&format!("d/{id}.wdc"))]);
        w.run(&["pack", "--input", &w.path(&format!("d/{id}.wdc")), "--out", &w.path(&format!("t/{id}.wtr"))]);
    }
    w.run(&["fit-codec", "--manifest", &manifest, "--trees", &w.path("t"), "--out", &w.path("c.lc")]);
    for r in read_manifest(Path::new(&manifest)).unwrap() {
        let id = &r.id;
        w.run(&["encode", "--codec", &w.path("c.lc"), "--input", &w.path(&format!("t/{id}.wtr")), "--out", &w.path(&format!("l/{id}.lat"))]);
    }
    let config = w.path("config.toml");
    let code = wavelat(&[
        "train-denoiser", "--manifest", &manifest, "--latents", &w.path("l"), "--out", &w.path("dn"), "--config", &config,
    ]);
    assert_eq!(code, 3);
}
