#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, ChildStdout, Command, Output, Stdio};

pub const MEASURED_VECTOR: [f64; 8] = [136.0, 46.0, 26.0, 14.0, 204.0, 66.0, 394.0, 56.0];
pub const MEASURED_REPLAY: &str = "136,46,26,14,204,66,394,56";

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ropuf")
}

pub fn ropuf(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("ropuf runs")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

/// A daemon child process, killed on drop.
pub struct Daemon {
    child: Child,
    _stdout: BufReader<ChildStdout>,
    pub addr: String,
}

impl Daemon {
    /// Start `ropuf <args>` and wait for its "listening on ADDR" line.
    pub fn start(args: &[&str]) -> Daemon {
        let mut child = Command::new(bin())
            .args(args)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("daemon starts");
        let mut reader = BufReader::new(child.stdout.take().unwrap());
        let mut line = String::new();
        reader.read_line(&mut line).expect("daemon prints its address");
        let addr = line
            .trim()
            .rsplit_once("listening on ")
            .map(|(_, a)| a.to_owned())
            .unwrap_or_else(|| panic!("unexpected banner {line:?}"));
        Daemon {
            child,
            _stdout: reader,
            addr,
        }
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for Daemon {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Fabricated device file with default settings.
pub fn fabricate(dir: &Path, seed: u64) -> String {
    let path = dir.join(format!("device-{seed}.json"));
    let path = path.to_str().unwrap().to_owned();
    let out = ropuf(&["fabricate", "--seed", &seed.to_string(), "--out", &path]);
    assert!(out.status.success(), "{out:?}");
    path
}

/// Device daemon with jitter off and the counter phase pinned.
pub fn quiet_device(device_file: &str) -> Daemon {
    Daemon::start(&[
        "serve-device",
        "--device-file",
        device_file,
        "--noise",
        "0",
        "--phase",
        "0",
        "--port",
        "0",
    ])
}

pub fn vault_service(device: &Daemon, vault_file: &Path) -> Daemon {
    Daemon::start(&[
        "serve-vault",
        "--port",
        "0",
        "--device-addr",
        &device.addr,
        "--vault-file",
        vault_file.to_str().unwrap(),
    ])
}
