use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use miniomp_core::{compile_source, dump_regions, parse_source, print_program};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mini-omp"));
    c.env_remove("MINIOMP_NUM_THREADS");
    c
}

fn exec(cmd: &mut Command) -> (i32, String, String) {
    let Output { status, stdout, stderr } = cmd.output().expect("spawn mini-omp");
    (
        status.code().expect("exit code"),
        String::from_utf8(stdout).unwrap(),
        String::from_utf8(stderr).unwrap(),
    )
}

fn write(dir: &TempDir, name: &str, src: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, src).unwrap();
    p
}

fn corpus() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/corpus");
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "mk"))
        .collect();
    files.sort();
    files
}

const TEAM_SIZE: &str =
    "fn main() { let n: [int; 1];\n//#omp parallel\n{ if tid() == 0 { n[0] = num_threads(); } }\nprint(n[0]); }\n";

#[test]
fn run_prints_program_output() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "hello.mk", "fn main() { print(6 * 7, 0.5, true); }\n");
    assert_eq!(
        exec(bin().arg("run").arg(&f)),
        (0, "42 0.5 true\n".into(), String::new())
    );
}

#[test]
fn main_return_value_is_the_exit_status() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "ret.mk", "fn main() -> int { print(1); return 7; }\n");
    assert_eq!(exec(bin().arg("run").arg(&f)).0, 7);
}

#[test]
fn check_reports_conflicting_sharing_with_position() {
    let dir = TempDir::new().unwrap();
    let f = write(
        &dir,
        "bad.mk",
        "fn main() {\n    let x: int = 0;\n    //#omp parallel private(x) shared(x)\n    { x = 1; }\n}\n",
    );
    let (status, out, err) = exec(bin().arg("check").arg(&f));
    assert_eq!(status, 1);
    assert!(out.is_empty());
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 1, "{err}");
    assert!(lines[0].starts_with(&format!("{}:3:5: ", f.display())), "{err}");
    assert!(lines[0].contains("`x`"), "{err}");
}

#[test]
fn check_reports_every_diagnostic_of_a_stage() {
    let dir = TempDir::new().unwrap();
    let f = write(
        &dir,
        "types.mk",
        "fn main() {\n let a: int = true;\n let b: float = 1;\n print(c);\n}\n",
    );
    let (status, _, err) = exec(bin().arg("check").arg(&f));
    assert_eq!(status, 1);
    let lines: Vec<String> = err.lines().map(String::from).collect();
    assert_eq!(lines.len(), 3, "{err}");
    for (line, row) in lines.iter().zip([2, 3, 4]) {
        assert!(line.starts_with(&format!("{}:{row}:", f.display())), "{line}");
    }
}

#[test]
fn check_does_not_execute() {
    let dir = TempDir::new().unwrap();
    let f = write(
        &dir,
        "trap.mk",
        "fn main() { print(1); let z: int = 0; print(1 / z); }\n",
    );
    assert_eq!(exec(bin().arg("check").arg(&f)), (0, String::new(), String::new()));
    let before: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(before.len(), 1);
}

#[test]
fn traps_exit_with_three_and_a_position() {
    let dir = TempDir::new().unwrap();
    let f = write(
        &dir,
        "oob.mk",
        "fn main() {\n let a: [int; 2];\n print(1);\n a[5] = 1;\n}\n",
    );
    let (status, out, err) = exec(bin().arg("run").arg(&f).args(["--threads", "2"]));
    assert_eq!(status, 3);
    assert_eq!(out, "1\n");
    assert!(
        err.starts_with(&format!("{}:4:2: runtime error: ", f.display())),
        "{err}"
    );
}

#[test]
fn parse_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "syntax.mk", "fn main() {\n print(1\n}\n");
    for cmd in ["run", "check", "dump-ast", "dump-omp"] {
        let (status, out, err) = exec(bin().arg(cmd).arg(&f));
        assert_eq!(status, 1, "{cmd}");
        assert!(out.is_empty());
        assert!(err.starts_with(&format!("{}:3:1: ", f.display())), "{cmd}: {err}");
    }
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "ok.mk", "fn main() {}\n");
    let cases: Vec<Vec<String>> = vec![
        vec![],
        vec!["frobnicate".into()],
        vec!["run".into()],
        vec!["run".into(), f.display().to_string(), "--threads".into(), "0".into()],
        vec!["run".into(), f.display().to_string(), "--threads".into(), "many".into()],
        vec!["run".into(), dir.path().join("missing.mk").display().to_string()],
        vec![
            "bench".into(),
            "--kernel".into(),
            "ep".into(),
            "--threads".into(),
            "2,4".into(),
        ],
        vec![
            "bench".into(),
            "--kernel".into(),
            "bt".into(),
            "--threads".into(),
            "1".into(),
        ],
        vec![
            "bench".into(),
            "--kernel".into(),
            "ep".into(),
            "--class".into(),
            "Z".into(),
            "--threads".into(),
            "1".into(),
        ],
        vec![
            "bench".into(),
            "--kernel".into(),
            "ep".into(),
            "--threads".into(),
            "1".into(),
            "--format".into(),
            "xml".into(),
        ],
    ];
    for args in cases {
        let (status, out, err) = exec(bin().args(&args));
        assert_eq!(status, 2, "{args:?}: {err}");
        assert!(out.is_empty(), "{args:?}");
        assert!(!err.is_empty(), "{args:?}");
    }
}

#[test]
fn help_goes_to_stdout() {
    let (status, out, _) = exec(bin().arg("--help"));
    assert_eq!(status, 0);
    for cmd in ["run", "check", "dump-ast", "dump-omp", "bench"] {
        assert!(out.contains(cmd), "{out}");
    }
}

#[test]
fn dump_ast_prints_the_canonical_form() {
    for f in corpus() {
        let src = fs::read_to_string(&f).unwrap();
        let (status, out, _) = exec(bin().arg("dump-ast").arg(&f));
        assert_eq!(status, 0);
        assert_eq!(out, print_program(&parse_source(&src).unwrap()));
        assert_eq!(print_program(&parse_source(&out).unwrap()), out, "{}", f.display());
    }
}

#[test]
fn dump_omp_prints_the_region_dump() {
    for f in corpus() {
        let src = fs::read_to_string(&f).unwrap();
        let (status, out, _) = exec(bin().arg("dump-omp").arg(&f));
        assert_eq!(status, 0);
        assert_eq!(out, dump_regions(&compile_source(&src).unwrap()));
    }
}

#[test]
fn single_thread_run_matches_directive_stripped_run() {
    let dir = TempDir::new().unwrap();
    for f in corpus() {
        let src = fs::read_to_string(&f).unwrap();
        let stripped: String = src
            .lines()
            .filter(|l| !l.trim_start().starts_with("//#omp"))
            .map(|l| format!("{l}\n"))
            .collect();
        let plain = write(&dir, "plain.mk", &stripped);
        let (s1, with, _) = exec(bin().arg("run").arg(&f).args(["--threads", "1"]));
        let (s2, without, _) = exec(bin().arg("run").arg(&plain));
        assert_eq!((s1, &with), (s2, &without), "{}", f.display());
    }
}

#[test]
fn thread_count_precedence() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "team.mk", TEAM_SIZE);
    let clause = write(
        &dir,
        "clause.mk",
        &TEAM_SIZE.replace("parallel\n", "parallel num_threads(2)\n"),
    );
    let run = |file: &Path, env: Option<&str>, flag: Option<&str>| {
        let mut c = bin();
        c.arg("run").arg(file);
        if let Some(v) = env {
            c.env("MINIOMP_NUM_THREADS", v);
        }
        if let Some(v) = flag {
            c.args(["--threads", v]);
        }
        exec(&mut c)
    };
    assert_eq!(run(&f, Some("3"), None).1, "3\n");
    assert_eq!(run(&f, Some("3"), Some("5")).1, "5\n");
    assert_eq!(run(&clause, Some("3"), Some("5")).1, "2\n");
    let hw = std::thread::available_parallelism().map_or(1, |n| n.get());
    let (status, out, err) = run(&f, Some("lots"), None);
    assert_eq!((status, out), (0, format!("{hw}\n")));
    let warnings: Vec<&str> = err.lines().collect();
    assert_eq!(warnings.len(), 1, "{err}");
    assert!(warnings[0].starts_with("miniomp: warning: ") && warnings[0].contains("MINIOMP_NUM_THREADS"));
}

#[test]
fn bench_writes_csv() {
    let (status, out, err) = exec(bin().args([
        "bench",
        "--kernel",
        "ep",
        "--class",
        "S",
        "--threads",
        "1,2,4",
        "--repeats",
        "5",
        "--format",
        "csv",
    ]));
    assert_eq!(status, 0, "{err}");
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "kernel,class,threads,repetition,seconds");
    assert_eq!(lines.len(), 16);
    for (i, line) in lines[1..].iter().enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(
            cols[..4],
            ["ep", "S", &[1, 2, 4][i / 5].to_string(), &(i % 5).to_string()]
        );
        let secs = cols[4];
        assert_eq!(secs.split('.').nth(1).map(str::len), Some(6), "{line}");
        assert!(secs.parse::<f64>().unwrap() >= 0.0);
    }
}

#[test]
fn bench_writes_table_and_json() {
    let (status, out, _) = exec(bin().args(["bench", "--kernel", "cg", "--threads", "1,2", "--repeats", "1"]));
    assert_eq!(status, 0);
    assert!(out.starts_with("cg class S"), "{out}");
    assert!(out.lines().any(|l| l.split_whitespace().next() == Some("2")), "{out}");
    let (status, out, _) = exec(bin().args([
        "bench",
        "--kernel",
        "is",
        "--threads",
        "1",
        "--repeats",
        "2",
        "--format",
        "json",
    ]));
    assert_eq!(status, 0);
    assert!(
        out.trim_start().starts_with('{') && out.contains("\"reports\"") && out.contains("\"is\""),
        "{out}"
    );
}
