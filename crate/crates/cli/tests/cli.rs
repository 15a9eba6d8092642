use std::collections::BTreeSet;
use std::fs;
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output};
use std::thread;

const BIN: &str = env!("CARGO_BIN_EXE_gensync");

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("GENSYNC_SEED").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_set(path: &Path, elems: impl IntoIterator<Item = u64>) {
    let text: String = elems.into_iter().map(|e| format!("{e}\n")).collect();
    fs::write(path, text).unwrap();
}

fn read_set(path: &Path) -> BTreeSet<u64> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse().unwrap())
        .collect()
}

/// Runs a server and a client process; returns (server, client) outputs.
fn sync_pair(server: &[&str], client: &[&str]) -> (Output, Output) {
    let server: Vec<String> = server.iter().map(|s| s.to_string()).collect();
    let h = thread::spawn(move || {
        let args: Vec<&str> = server.iter().map(String::as_str).collect();
        run(&args)
    });
    let c = run(client);
    (h.join().unwrap(), c)
}

fn json(o: &Output) -> serde_json::Value {
    let line = String::from_utf8_lossy(&o.stdout);
    serde_json::from_str(line.lines().next().expect("summary line")).unwrap()
}

const LISTING: &str = "\
# Protocol identifier
protocol=CPI
# Latency in milliseconds
latency=20
# Bandwidth in Mbps (in two directions)
bandwidth=\"10/25\"
# Packet loss (percentage)
packet_loss=0.01
# Percentage of CPU cycles used for sync
cpu_server=100
cpu_client=20
# Repeat each experiment
repeat=100
";

#[test]
fn bench_listing_writes_one_row_per_repeat() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.conf");
    let out = dir.path().join("out.csv");
    fs::write(&cfg, format!("{LISTING}set_size=1000\ndiff_count=10\n")).unwrap();
    let o = run(&["bench", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(&out).unwrap();
    let rows: Vec<_> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 101);
    assert!(rows[0].starts_with("run_index,protocol,set_size"));
    assert!(csv.contains("# runs=100 success_count=100"));
}

#[test]
fn bench_to_stdout_is_seeded_by_env() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.conf");
    fs::write(&cfg, "protocol=cuckoo\nlatency=1\nbandwidth=5\nrepeat=2\nset_size=300\ndiff_count=6\n").unwrap();
    let go = |seed: &str| {
        Command::new(BIN)
            .args(["bench", "--config", cfg.to_str().unwrap()])
            .env("GENSYNC_SEED", seed)
            .output()
            .unwrap()
    };
    let bytes = |o: &Output| -> Vec<String> {
        String::from_utf8_lossy(&o.stdout)
            .lines()
            .filter(|l| !l.starts_with('#'))
            .skip(1)
            .map(|l| l.split(',').nth(5).unwrap().to_string())
            .collect()
    };
    let (a, b) = (go("11"), go("11"));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(bytes(&a), bytes(&b));
    let bad = go("eleven");
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).starts_with("error[E_USAGE]"));
}

#[test]
fn bench_typo_key_is_line_numbered() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.conf");
    fs::write(&cfg, "protocol=CPI\nlatency=20\nbandwith=5\n").unwrap();
    let o = run(&["bench", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("error[E_CONFIG]"), "{err}");
    assert!(err.contains("line 3"), "{err}");
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn bench_underprovisioned_iblt_is_partial_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.conf");
    let out = dir.path().join("out.csv");
    fs::write(
        &cfg,
        "protocol=IBLT\nlatency=5\nbandwidth=10\nrepeat=3\nset_size=500\ndiff_count=80\nexpected_diffs=2\n",
    )
    .unwrap();
    let o = run(&["bench", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[E_PARTIAL]"));
    let csv = fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().filter(|l| l.contains(",false,")).count(), 3);
}

#[test]
fn sync_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.txt"), dir.path().join("b.txt"));
    write_set(&a, 1..=50);
    write_set(&b, 1..=50);
    let addr = format!("127.0.0.1:{}", free_port());
    let (s, c) = sync_pair(
        &["sync", "--role", "server", "--addr", &addr, "--protocol", "iblt", "--expected-diffs", "4", "--input", a.to_str().unwrap()],
        &["sync", "--role", "client", "--addr", &addr, "--protocol", "iblt", "--expected-diffs", "4", "--input", b.to_str().unwrap()],
    );
    assert_eq!(s.status.code(), Some(0), "{}", stderr(&s));
    assert_eq!(c.status.code(), Some(0), "{}", stderr(&c));
    for o in [&s, &c] {
        let j = json(o);
        assert_eq!(j["success"], true);
        assert_eq!(j["differences_recovered"], 0);
    }
}

#[test]
fn sync_apply_makes_files_equal() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.txt"), dir.path().join("b.txt"));
    write_set(&a, (0..200).map(|x| x * 7));
    write_set(&b, (5..205).map(|x| x * 7));
    let addr = format!("127.0.0.1:{}", free_port());
    let (s, c) = sync_pair(
        &["sync", "--role", "server", "--addr", &addr, "--protocol", "cpi", "--mbar", "16", "--input", a.to_str().unwrap(), "--apply"],
        &["sync", "--role", "client", "--addr", &addr, "--protocol", "cpi", "--mbar", "16", "--input", b.to_str().unwrap(), "--apply"],
    );
    assert_eq!(s.status.code(), Some(0), "{}", stderr(&s));
    assert_eq!(c.status.code(), Some(0), "{}", stderr(&c));
    assert_eq!(json(&c)["differences_recovered"], 10);
    assert_eq!(json(&s)["bytes_transmitted"], json(&c)["bytes_transmitted"]);
    let union: BTreeSet<u64> = (0..205).map(|x| x * 7).collect();
    assert_eq!(read_set(&a), union);
    assert_eq!(read_set(&b), union);
}

#[test]
fn sync_protocol_mismatch_aborts_both() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.txt"), dir.path().join("b.txt"));
    write_set(&a, 1..=5);
    write_set(&b, 3..=9);
    let addr = format!("127.0.0.1:{}", free_port());
    let (s, c) = sync_pair(
        &["sync", "--role", "server", "--addr", &addr, "--protocol", "cpi", "--input", a.to_str().unwrap()],
        &["sync", "--role", "client", "--addr", &addr, "--protocol", "iblt", "--input", b.to_str().unwrap()],
    );
    for o in [&s, &c] {
        assert_eq!(o.status.code(), Some(3));
        assert!(stderr(o).starts_with("error[E_HANDSHAKE]"), "{}", stderr(o));
        assert_eq!(json(o)["failure"], "handshake_mismatch");
    }
}

#[test]
fn sync_malformed_input_and_unreachable_peer() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "1\n2\nthree\n").unwrap();
    let addr = format!("127.0.0.1:{}", free_port());
    let o = run(&["sync", "--role", "client", "--addr", &addr, "--protocol", "cpi", "--input", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(5));
    assert!(stderr(&o).starts_with("error[E_INPUT]") && stderr(&o).contains(":3:"));

    let good = dir.path().join("good.txt");
    write_set(&good, [1, 2]);
    let o = run(&[
        "sync", "--role", "client", "--addr", &addr, "--protocol", "cpi", "--input", good.to_str().unwrap(),
        "--connect-timeout-ms", "200",
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).starts_with("error[E_TRANSPORT]"));

    let o = run(&["sync", "--role", "client", "--addr", "nohost", "--protocol", "cpi", "--input", good.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["sync", "--role", "client"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[E_USAGE]"));
    assert_eq!(stderr(&o).lines().count(), 1);
}
