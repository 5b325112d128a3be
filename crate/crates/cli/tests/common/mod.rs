#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use serde_json::Value;

const ENV_VARS: [&str; 12] = [
    "MEMELENS_CONFIG",
    "MEMELENS_MEMES",
    "MEMELENS_ANNOTATIONS",
    "MEMELENS_LEXICONS",
    "MEMELENS_MODEL_DIR",
    "MEMELENS_SPLIT_SEED",
    "MEMELENS_THRESHOLD",
    "MEMELENS_TOP_K",
    "MEMELENS_LISTEN",
    "MEMELENS_LABELS",
    "MEMELENS_IMAGE_ROOT",
    "RUST_LOG",
];

pub fn command() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_memelens"));
    for var in ENV_VARS {
        cmd.env_remove(var);
    }
    cmd
}

pub fn memelens<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    command().args(args).output().expect("memelens runs")
}

/// Runs and requires exit 0, returning stdout.
pub fn ok<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> String {
    let out = memelens(args);
    assert!(
        out.status.success(),
        "memelens {:?} failed ({:?}): {}",
        args.iter()
            .map(|a| a.as_ref().to_string_lossy().into_owned())
            .collect::<Vec<_>>(),
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Generates a synthetic corpus in `dir`; returns its config path.
pub fn synthetic(dir: &Path, n_memes: usize, seed: u64) -> PathBuf {
    ok(&[
        "gen-synthetic".into(),
        "--out".into(),
        dir.as_os_str().to_owned(),
        "--n-memes".into(),
        n_memes.to_string().into(),
        "--seed".into(),
        seed.to_string().into(),
    ] as &[std::ffi::OsString]);
    dir.join("memelens.toml")
}

/// Value of a `key value` line in command output.
pub fn metric(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|rest| rest.strip_prefix(' ')))
        .unwrap_or_else(|| panic!("no {key} in output:\n{text}"))
        .parse()
        .unwrap()
}

/// Files under `dir` with their contents, sorted by relative path.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.push((
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                ));
            }
        }
    }
    let mut files = Vec::new();
    walk(dir, dir, &mut files);
    files.sort();
    files
}

/// A `memelens serve` process on an ephemeral port, killed on drop.
pub struct Server {
    child: Child,
    pub addr: String,
}

impl Server {
    pub fn start(args: &[&str]) -> Server {
        let mut child = command()
            .arg("serve")
            .args(["--listen", "127.0.0.1:0"])
            .args(args)
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .expect("serve starts");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .unwrap();
        let addr = match line.trim().strip_prefix("listening on http://") {
            Some(addr) => addr.to_string(),
            None => {
                let mut err = String::new();
                child.stderr.take().unwrap().read_to_string(&mut err).unwrap();
                panic!("server did not start: {line} {err}");
            }
        };
        Server { child, addr }
    }

    pub fn request(&self, method: &str, path: &str, body: Option<&Value>) -> (u16, Vec<u8>) {
        let mut stream = TcpStream::connect(&self.addr).unwrap();
        let body = body.map(Value::to_string).unwrap_or_default();
        write!(
            stream,
            "{method} {path} HTTP/1.1\r\nHost: {}\r\nConnection: close\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
            self.addr,
            body.len()
        )
        .unwrap();
        let mut raw = Vec::new();
        stream.read_to_end(&mut raw).unwrap();
        let split = raw
            .windows(4)
            .position(|w| w == b"\r\n\r\n")
            .expect("complete response");
        let head = String::from_utf8_lossy(&raw[..split]).into_owned();
        let status = head.split_whitespace().nth(1).unwrap().parse().unwrap();
        assert!(
            !head.to_ascii_lowercase().contains("transfer-encoding: chunked"),
            "unexpected chunked response"
        );
        (status, raw[split + 4..].to_vec())
    }

    pub fn json(&self, method: &str, path: &str, body: Option<&Value>) -> (u16, Value) {
        let (status, bytes) = self.request(method, path, body);
        (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
