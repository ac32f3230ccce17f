//! Child process execution with a wall-clock limit.
//!
//! Each child runs in its own process group; on timeout the whole group is
//! killed so grandchildren cannot outlive the limit.

use std::io::{Read, Write};
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Child, Command, ExitStatus, Stdio};
use std::thread;
use std::time::{Duration, Instant};

/// Captured output beyond this many bytes is discarded.
pub const OUTPUT_CAP: usize = 64 << 20;

const POLL_INTERVAL: Duration = Duration::from_millis(2);

#[derive(Debug)]
pub enum Termination {
    Exited(ExitStatus),
    TimedOut,
}

#[derive(Debug)]
pub struct ProcessOutcome {
    pub termination: Termination,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    pub wall_time: Duration,
}

impl ProcessOutcome {
    pub fn success(&self) -> bool {
        matches!(self.termination, Termination::Exited(s) if s.success())
    }

    pub fn timed_out(&self) -> bool {
        matches!(self.termination, Termination::TimedOut)
    }
}

pub struct ProcessSpec<'a> {
    pub program: &'a str,
    pub args: Vec<String>,
    pub cwd: &'a Path,
    pub stdin: &'a [u8],
    pub timeout: Duration,
}

fn spawn_reader<R: Read + Send + 'static>(mut src: R) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut buf = [0u8; 8192];
        loop {
            match src.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let room = OUTPUT_CAP.saturating_sub(kept.len());
                    kept.extend_from_slice(&buf[..n.min(room)]);
                }
            }
        }
        kept
    })
}

fn kill_group(child: &Child) {
    let pgid = child.id() as libc::pid_t;
    // SAFETY: plain syscall on a process group this process created.
    unsafe {
        libc::kill(-pgid, libc::SIGKILL);
    }
}

/// Runs `spec` to completion or until its timeout, whichever comes first.
pub fn run(spec: &ProcessSpec<'_>) -> std::io::Result<ProcessOutcome> {
    let mut cmd = Command::new(spec.program);
    cmd.args(&spec.args)
        .current_dir(spec.cwd)
        .env_clear()
        .env("PATH", std::env::var_os("PATH").unwrap_or_default())
        .env("HOME", spec.cwd)
        .env("TMPDIR", spec.cwd)
        .env("LANG", "C.UTF-8")
        .env("PYTHONHASHSEED", "0")
        .env("PYTHONDONTWRITEBYTECODE", "1")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);

    let started = Instant::now();
    let mut child = cmd.spawn()?;
    let stdout = spawn_reader(child.stdout.take().expect("piped stdout"));
    let stderr = spawn_reader(child.stderr.take().expect("piped stderr"));
    let mut stdin = child.stdin.take().expect("piped stdin");
    let input = spec.stdin.to_vec();
    // A child that never reads its input must not block us.
    let writer = thread::spawn(move || {
        let _ = stdin.write_all(&input);
    });

    let deadline = started + spec.timeout;
    let termination = loop {
        if let Some(status) = child.try_wait()? {
            break Termination::Exited(status);
        }
        if Instant::now() >= deadline {
            kill_group(&child);
            let _ = child.wait();
            break Termination::TimedOut;
        }
        thread::sleep(POLL_INTERVAL);
    };
    let wall_time = started.elapsed();
    // Orphaned grandchildren may still hold the pipes open.
    kill_group(&child);
    let _ = writer.join();
    Ok(ProcessOutcome {
        termination,
        stdout: stdout.join().unwrap_or_default(),
        stderr: stderr.join().unwrap_or_default(),
        wall_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sh(script: &str, stdin: &[u8], timeout: Duration) -> ProcessOutcome {
        let dir = tempfile::tempdir().unwrap();
        run(&ProcessSpec {
            program: "sh",
            args: vec!["-c".into(), script.into()],
            cwd: dir.path(),
            stdin,
            timeout,
        })
        .unwrap()
    }

    #[test]
    fn captures_output_and_status() {
        let out = sh("cat; echo err >&2; exit 3", b"hello", Duration::from_secs(5));
        assert_eq!(out.stdout, b"hello");
        assert_eq!(out.stderr, b"err\n");
        assert!(matches!(out.termination, Termination::Exited(s) if s.code() == Some(3)));
    }

    #[test]
    fn kills_on_timeout() {
        let t0 = Instant::now();
        let out = sh("while :; do :; done", b"", Duration::from_millis(300));
        assert!(out.timed_out());
        assert!(t0.elapsed() < Duration::from_secs(2));
    }

    #[test]
    fn kills_background_children_too() {
        let t0 = Instant::now();
        let out = sh("sleep 30 & sleep 30", b"", Duration::from_millis(300));
        assert!(out.timed_out());
        assert!(t0.elapsed() < Duration::from_secs(2));
    }

    #[test]
    fn ignores_unread_stdin() {
        let big = vec![b'x'; 1 << 20];
        let out = sh("echo done", &big, Duration::from_secs(5));
        assert!(out.success());
        assert_eq!(out.stdout, b"done\n");
    }

    #[test]
    fn runs_in_requested_directory() {
        let dir = tempfile::tempdir().unwrap();
        let out = run(&ProcessSpec {
            program: "sh",
            args: vec!["-c".into(), "pwd; echo $HOME".into()],
            cwd: dir.path(),
            stdin: b"",
            timeout: Duration::from_secs(5),
        })
        .unwrap();
        let text = String::from_utf8(out.stdout).unwrap();
        let canon = dir.path().canonicalize().unwrap();
        assert!(text.lines().next().map(Path::new).unwrap().canonicalize().unwrap() == canon);
    }
}
