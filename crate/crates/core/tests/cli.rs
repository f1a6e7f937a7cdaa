mod common;

use common::{run_cli_pipeline, same_tree};

#[test]
fn every_command_is_deterministic() {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let a = run_cli_pipeline(dirs[0].path(), 150, 1);
    let b = run_cli_pipeline(dirs[1].path(), 150, 1);
    let c = run_cli_pipeline(dirs[2].path(), 150, 8);
    assert_eq!(a.len(), 11);
    for (name, code, _) in &a {
        assert_eq!(*code, 0, "{name} failed");
    }
    assert_eq!(a, b);
    assert_eq!(a, c);
    let files = same_tree(dirs[0].path(), dirs[1].path()).unwrap();
    assert_eq!(same_tree(dirs[0].path(), dirs[2].path()).unwrap(), files);
    assert!(files >= 20, "{files}");
    let svg = std::fs::read_dir(dirs[0].path()).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "svg"));
    assert_eq!(svg.count(), 2);
}

#[test]
fn exit_codes() {
    let bin = env!("CARGO_BIN_EXE_etherscope");
    let dir = tempfile::tempdir().unwrap();
    let run = |args: &[&str]| std::process::Command::new(bin).current_dir(dir.path()).args(args).env_clear().output().unwrap();
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["bogus"]).status.code(), Some(2));
    assert_eq!(run(&["derive", "--input", "nowhere", "--out", "x"]).status.code(), Some(3));
    assert_eq!(run(&["synth", "--out", "c", "--blocks", "30"]).status.code(), Some(0));
    assert_eq!(run(&["validate", "--input", "c"]).status.code(), Some(0));

    let blocks = dir.path().join("c").join(etherscope::ingest::BLOCKS_FILE);
    let pristine = std::fs::read_to_string(&blocks).unwrap();

    // A timestamp going backwards is a validator defect, listed on stdout.
    let mut lines: Vec<String> = pristine.lines().map(String::from).collect();
    let at = lines[5].find("\"timestamp\":").unwrap() + "\"timestamp\":".len();
    let end = at + lines[5][at..].find(|c: char| !c.is_ascii_digit()).unwrap();
    lines[5].replace_range(at..end, "0");
    std::fs::write(&blocks, lines.join("\n") + "\n").unwrap();
    let o = run(&["validate", "--input", "c"]);
    assert_eq!(o.status.code(), Some(1));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1, "{stdout}");
    assert!(stdout.contains("NonMonotoneTimestamp"));

    // Out-of-order lines break the streaming join itself.
    let mut lines: Vec<&str> = pristine.lines().collect();
    lines.swap(3, 4);
    std::fs::write(&blocks, lines.join("\n") + "\n").unwrap();
    let o = run(&["validate", "--input", "c"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8(o.stderr).unwrap().contains("join error"));
}
