use std::path::Path;
use std::process::{Command, Output};

use jdx_core::harness::REGISTRY;
use jdx_core::seeds::free_d;
use serde_json::Value;

fn jdx(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jdx"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("run jdx")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("verify_report.json")).unwrap()).unwrap()
}

fn failed(report: &Value) -> Vec<String> {
    report["sections"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|s| s["checks"].as_array().unwrap())
        .filter(|c| !c["pass"].as_bool().unwrap())
        .map(|c| c["name"].as_str().unwrap().to_string())
        .collect()
}

fn read_csv(path: &Path) -> (String, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    (
        header,
        lines.map(|l| l.split(',').map(String::from).collect()).collect(),
    )
}

#[test]
fn verify_default_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = jdx(&["verify"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = report(dir.path());
    assert_eq!(r["sections"].as_array().unwrap().len(), 1);
    assert!(failed(&r).is_empty());
}

#[test]
fn verify_both_parities_gives_two_sections() {
    let dir = tempfile::tempdir().unwrap();
    let o = jdx(&["verify", "--parity", "both"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = report(dir.path());
    let parities: Vec<_> = r["sections"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["parity"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(parities, ["even", "odd"]);
}

#[test]
fn tight_tolerance_fails_named_check() {
    let dir = tempfile::tempdir().unwrap();
    let o = jdx(&["verify", "--tol", "riccati=1e-300"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("riccati"), "{}", stderr(&o));
    assert_eq!(failed(&report(dir.path())), ["riccati"]);
}

/// Input index each check reads for a fault to land on.
fn fault_index(name: &str) -> usize {
    match name {
        "seed_residual" => 10,
        "p_decay" | "p_limit" => 4000,
        n if n.starts_with("asym_") && n.ends_with("_decay") => 2000,
        n if n.starts_with("asym_") => 4000,
        _ => 5,
    }
}

#[test]
fn each_fault_flips_exactly_its_check() {
    let dir = tempfile::tempdir().unwrap();
    let clean = jdx(&["verify"], dir.path());
    assert_eq!(code(&clean), 0);
    let skipped: Vec<String> = report(dir.path())["sections"][0]["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| !c["skipped"].is_null())
        .map(|c| c["name"].as_str().unwrap().to_string())
        .collect();
    for spec in REGISTRY.iter().filter(|s| !skipped.iter().any(|n| n == s.name)) {
        let fault = format!("{}:{}:2", spec.name, fault_index(spec.name));
        let o = jdx(&["verify", "--fault", &fault], dir.path());
        assert_eq!(code(&o), 1, "{fault}: {}", stderr(&o));
        assert_eq!(failed(&report(dir.path())), [spec.name], "{fault}");
    }
}

#[test]
fn generate_header_and_values() {
    let dir = tempfile::tempdir().unwrap();
    let o = jdx(&["generate"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = read_csv(&dir.path().join("potential_even.csv"));
    assert_eq!(header, "n,a_plus,a_minus,b_plus,b_minus,G11,G12,R11,R12");
    assert_eq!(rows.len(), 101);
    let row2: Vec<f64> = rows[1].iter().map(|s| s.parse().unwrap()).collect();
    assert_eq!(row2[0], 2.0);
    for (got, want) in row2[1..5]
        .iter()
        .zip([0.48869104584, 0.02501012107, 0.27792737658, 0.02909016728])
    {
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }
}

#[test]
fn generated_columns_recompute_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&jdx(&["generate", "--parity", "both"], dir.path())), 0);
    for parity in ["even", "odd"] {
        let (_, rows) = read_csv(&dir.path().join(format!("potential_{parity}.csv")));
        for row in rows {
            let n: usize = row[0].parse().unwrap();
            let v: Vec<f64> = row[1..].iter().map(|s| s.parse().unwrap()).collect();
            let g11 = v[0] - free_d(n);
            assert_eq!(format!("{g11:.16e}"), row[5]);
            assert_eq!(row[6], row[2]);
            assert_eq!(row[7], row[3]);
            assert_eq!(row[8], row[4]);
        }
    }
}

#[test]
fn degenerate_energies_give_zero_minus_columns() {
    let dir = tempfile::tempdir().unwrap();
    let o = jdx(&["generate", "--lambda1", "-0.7", "--lambda2", "-0.7"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (_, rows) = read_csv(&dir.path().join("potential_even.csv"));
    for row in rows {
        assert_eq!(row[2].parse::<f64>().unwrap(), 0.0);
        assert_eq!(row[4].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn transform_writes_one_file_per_energy() {
    let dir = tempfile::tempdir().unwrap();
    let o = jdx(&["transform"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for e in ["0.5", "1", "2.5"] {
        let (header, rows) = read_csv(&dir.path().join(format!("states_even_ch1_E{e}.csv")));
        assert_eq!(header, "n,psi1,psi2,tpsi1,tpsi2,residual");
        let worst = rows.iter().map(|r| r[5].parse::<f64>().unwrap()).fold(0.0, f64::max);
        assert!(worst <= 1e-8, "E = {e}: {worst}");
    }
}

#[test]
fn empty_energy_list_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"energies": []}"#).unwrap();
    let o = jdx(&["transform", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("energies"), "{}", stderr(&o));
}

#[test]
fn invalid_lambda_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let o = jdx(&["verify", "--lambda1", "0.25"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("lambda1"), "{}", stderr(&o));
    assert!(!dir.path().join("verify_report.json").exists());
}

#[test]
fn asymptotics_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = jdx(&["asymptotics"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = read_csv(&dir.path().join("asym_a_plus_even.csv"));
    assert_eq!(header, "n,n2_times_abs_dev");
    assert_eq!(rows.len(), 20);
    assert_eq!((rows[0][0].as_str(), rows[19][0].as_str()), ("200", "4000"));
    let (_, p) = read_csv(&dir.path().join("p_matrix_even.csv"));
    let last = p.last().unwrap();
    assert_eq!(last[0], "inf");
    let p11_im: f64 = last[2].parse().unwrap();
    assert!((p11_im + 0.85355).abs() < 1e-5);
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = jdx(&["generate"], &blocker.join("sub"));
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn thread_count_does_not_change_output() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let run = |dir: &Path, threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_jdx"))
            .args(["transform", "--parity", "both", "--out"])
            .arg(dir)
            .env("JDX_THREADS", threads)
            .output()
            .unwrap()
    };
    assert_eq!(code(&run(a.path(), "1")), 0);
    assert_eq!(code(&run(b.path(), "4")), 0);
    for entry in std::fs::read_dir(a.path()).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            std::fs::read(a.path().join(&name)).unwrap(),
            std::fs::read(b.path().join(&name)).unwrap()
        );
    }
    assert_eq!(code(&run(a.path(), "zero")), 2);
}
