//! Real subprocess runs: python3 for public tests, shell scripts standing in
//! for the tracer.

use std::fs;
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use opstab_core::corpus::{Candidate, Problem, PublicVerdict, SolutionSet, TestCase};
use opstab_core::sandbox::{
    collect_problem_run, run_public_tests, run_traced_private_tests, ExecutionStatus, SandboxConfig, TraceArtifact,
};

fn case(id: &str, input: &str, output: &str) -> TestCase {
    TestCase {
        test_id: id.into(),
        input: input.as_bytes().to_vec(),
        expected_output: output.as_bytes().to_vec(),
    }
}

fn config(work: &Path, timeout: Duration) -> SandboxConfig {
    SandboxConfig {
        per_test_timeout: timeout,
        workdir: work.to_path_buf(),
        ..SandboxConfig::default()
    }
}

const ECHO: &str = "import sys\nsys.stdout.write(sys.stdin.read())\n";

#[test]
fn echo_passes_with_whitespace_slack() {
    let work = tempfile::tempdir().unwrap();
    let tests = [case("1", "a b\n", "a b\n"), case("2", "x  \n\n", "x\n")];
    let run = run_public_tests(ECHO, &tests, &config(work.path(), Duration::from_secs(10))).unwrap();
    assert_eq!(run.verdict, PublicVerdict::Pass);
    assert!(run.details.iter().all(|d| d.status == ExecutionStatus::Ok));
}

#[test]
fn runtime_error_on_second_test() {
    let work = tempfile::tempdir().unwrap();
    let src = "n = int(input())\nprint(10 // n)\n";
    let tests = [case("1", "2\n", "5\n"), case("2", "0\n", "0\n"), case("3", "5\n", "3\n")];
    let run = run_public_tests(src, &tests, &config(work.path(), Duration::from_secs(10))).unwrap();
    assert_eq!(run.verdict, PublicVerdict::Fail);
    let statuses: Vec<_> = run.details.iter().map(|d| d.status).collect();
    assert_eq!(
        statuses,
        [ExecutionStatus::Ok, ExecutionStatus::RuntimeError, ExecutionStatus::WrongOutput]
    );
    assert!(run.details[1].stderr_excerpt.contains("ZeroDivisionError"));
}

#[test]
fn spin_loop_is_killed_at_the_limit() {
    let work = tempfile::tempdir().unwrap();
    let tests = [case("1", "", "")];
    let start = Instant::now();
    let run = run_public_tests("while True:\n    pass\n", &tests, &config(work.path(), Duration::from_millis(700))).unwrap();
    assert_eq!(run.details[0].status, ExecutionStatus::Timeout);
    assert!(start.elapsed() < Duration::from_secs(5));
}

#[test]
fn environment_is_scrubbed() {
    std::env::set_var("OPSTAB_LEAK_PROBE", "visible");
    let work = tempfile::tempdir().unwrap();
    let src = "import os\nprint(os.environ.get('OPSTAB_LEAK_PROBE', 'absent'), os.environ.get('PYTHONHASHSEED'))\n";
    let run = run_public_tests(src, &[case("1", "", "absent 0\n")], &config(work.path(), Duration::from_secs(10))).unwrap();
    assert_eq!(run.verdict, PublicVerdict::Pass, "{:?}", run.details);
    assert_eq!(fs::read_dir(work.path()).unwrap().count(), 0, "exec dirs are cleaned up");
}

/// Shell tracer honoring the invocation contract. Static mode reports a fixed
/// histogram; dynamic mode runs the solution with python3 and reports the
/// input length as a count.
const FAKE_TRACER: &str = r#"#!/bin/sh
while [ $# -gt 0 ]; do
  case "$1" in
    --solution) sol=$2 ;; --mode) mode=$2 ;; --input) inp=$2 ;;
    --timeout-s) to=$2 ;; --stdout-file) out=$2 ;; --solution-id) sid=$2 ;;
    *) echo "unexpected $1" >&2; exit 9 ;;
  esac
  shift 2
done
[ -n "$to" ] || exit 8
head='"schema_version":"opstab-trace/1","solution_id":"'$sid'","interpreter_version":"3.10.12"'
if [ "$mode" = static ]; then
  printf '{%s,"mode":"static","status":"ok","static_counts":{"LOAD_CONST":2,"RETURN_VALUE":1}}' "$head"
else
  if python3 "$sol" < "$inp" > "$out" 2>/dev/null; then
    printf '{%s,"mode":"dynamic","status":"ok","dynamic_counts":{"LOAD_NAME":%d}}' "$head" "$(wc -c < "$inp")"
  else
    printf '{%s,"mode":"dynamic","status":"runtime_error"}' "$head"
  fi
fi
"#;

fn script(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    fs::set_permissions(&path, fs::Permissions::from_mode(0o755)).unwrap();
    path
}

fn tracer_config(work: &Path, tracer: &Path) -> SandboxConfig {
    SandboxConfig {
        tracer_command: vec![tracer.display().to_string()],
        ..config(work, Duration::from_secs(10))
    }
}

#[test]
fn tracer_contract_round_trip() {
    let work = tempfile::tempdir().unwrap();
    let bin = tempfile::tempdir().unwrap();
    let tracer = script(bin.path(), "tracer", FAKE_TRACER);
    let private = [
        case("1", "abc\n", "abc\n"),
        case("2", "hello\n", "nope\n"),
        case("3", "xy\n", "xy\n"),
    ];
    let artifact = run_traced_private_tests("sol_3", ECHO, &private, &tracer_config(work.path(), &tracer)).unwrap();
    assert_eq!(artifact.solution_id, "sol_3");
    assert_eq!(artifact.static_histogram().unwrap().get("LOAD_CONST"), 2);
    let statuses: Vec<_> = artifact.dynamic.iter().map(|d| d.verdict.status).collect();
    assert_eq!(
        statuses,
        [ExecutionStatus::Ok, ExecutionStatus::WrongOutput, ExecutionStatus::Ok]
    );
    assert_eq!(artifact.dynamic_histogram("1").unwrap().get("LOAD_NAME"), 4);
    assert!(artifact.dynamic_histogram("2").is_none());

    let stored = work.path().join("a.trace.json");
    artifact.store(&stored).unwrap();
    assert_eq!(TraceArtifact::load(&stored).unwrap(), artifact);
}

#[test]
fn private_tests_are_capped() {
    let work = tempfile::tempdir().unwrap();
    let bin = tempfile::tempdir().unwrap();
    let tracer = script(bin.path(), "tracer", FAKE_TRACER);
    let private: Vec<TestCase> = (0..13).map(|i| case(&i.to_string(), "z\n", "z\n")).collect();
    let cfg = tracer_config(work.path(), &tracer);
    let artifact = run_traced_private_tests("sol_0", ECHO, &private, &cfg).unwrap();
    assert_eq!(artifact.dynamic.len(), 10);
}

#[test]
fn tracer_failures_map_to_statuses() {
    let work = tempfile::tempdir().unwrap();
    let bin = tempfile::tempdir().unwrap();
    let private = [case("1", "a\n", "a\n")];

    let garbage = script(bin.path(), "garbage", "#!/bin/sh\necho '{not json'\n");
    let a = run_traced_private_tests("sol_0", ECHO, &private, &tracer_config(work.path(), &garbage)).unwrap();
    assert_eq!(a.static_trace.status, ExecutionStatus::TraceError);
    assert_eq!(a.dynamic[0].verdict.status, ExecutionStatus::TraceError);

    let crash = script(bin.path(), "crash", "#!/bin/sh\necho boom >&2\nexit 3\n");
    let a = run_traced_private_tests("sol_0", ECHO, &private, &tracer_config(work.path(), &crash)).unwrap();
    assert_eq!(a.dynamic[0].verdict.status, ExecutionStatus::TraceError);
    assert!(a.dynamic[0].verdict.stderr_excerpt.contains("boom"));

    let impostor = script(
        bin.path(),
        "impostor",
        "#!/bin/sh\nprintf '{\"schema_version\":\"opstab-trace/1\",\"solution_id\":\"other\",\"interpreter_version\":\"3.10.12\",\"mode\":\"static\",\"status\":\"ok\",\"static_counts\":{}}'\n",
    );
    let a = run_traced_private_tests("sol_0", ECHO, &private, &tracer_config(work.path(), &impostor)).unwrap();
    assert_eq!(a.static_trace.status, ExecutionStatus::TraceError);

    let sleepy = script(bin.path(), "sleepy", "#!/bin/sh\nsleep 30\n");
    let mut cfg = tracer_config(work.path(), &sleepy);
    cfg.per_test_timeout = Duration::from_millis(300);
    let start = Instant::now();
    let a = run_traced_private_tests("sol_0", ECHO, &private, &cfg).unwrap();
    assert_eq!(a.dynamic[0].verdict.status, ExecutionStatus::Timeout);
    assert!(start.elapsed() < Duration::from_secs(10));
}

#[test]
fn missing_tracer_is_an_infrastructure_error() {
    let work = tempfile::tempdir().unwrap();
    let cfg = tracer_config(work.path(), Path::new("/nonexistent/opstab-trace"));
    assert!(run_traced_private_tests("sol_0", ECHO, &[case("1", "", "")], &cfg).is_err());
}

#[test]
fn only_passing_candidates_are_traced() {
    let work = tempfile::tempdir().unwrap();
    let bin = tempfile::tempdir().unwrap();
    let tracer = script(bin.path(), "tracer", FAKE_TRACER);
    let problem = Problem {
        problem_id: "echo".into(),
        statement: String::new(),
        public_tests: vec![case("1", "a\n", "a\n")],
        private_tests: vec![case("1", "b\n", "b\n")],
    };
    let candidates = (0..3)
        .map(|k| Candidate {
            solution_id: format!("sol_{k}"),
            source: ECHO.into(),
        })
        .collect();
    let set = SolutionSet::new("r", "echo", candidates)
        .with_verdicts(vec![PublicVerdict::Pass, PublicVerdict::Fail, PublicVerdict::Pass])
        .unwrap();
    let artifacts = collect_problem_run(&set, &problem, &tracer_config(work.path(), &tracer)).unwrap();
    let ids: Vec<_> = artifacts.iter().map(|a| a.solution_id.as_str()).collect();
    assert_eq!(ids, ["sol_0", "sol_2"]);
}
