//! End-to-end checks of the binary through its public interface.

use std::path::Path;
use std::process::{Command, Output};

use msdenoise_core::image::{save_image, Image};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_msdenoise"))
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("spawn msdenoise");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn run_err(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn msdenoise");
    assert!(!out.status.success());
    out
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).expect("read file")
}

#[test]
fn add_noise_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let clean = dir.path().join("clean.png");
    run_ok(bin().args(["generate", "--width", "48", "--height", "48"]).arg("--output").arg(&clean));

    let a = dir.path().join("a.png");
    let b = dir.path().join("b.png");
    for out in [&a, &b] {
        let stdout = run_ok(
            bin()
                .args(["add-noise", "--level", "0.2", "--seed", "42"])
                .arg("--input")
                .arg(&clean)
                .arg("--output")
                .arg(out),
        );
        assert!(stdout.contains("RRMSE vs input:"), "stdout: {stdout}");
    }
    assert_eq!(read(&a), read(&b));
}

#[test]
fn missing_input_is_a_usage_error() {
    let out = run_err(bin().args(["add-noise", "--output", "x.png", "--level", "0.2"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fine_on_a_constant_image_is_the_identity() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("flat.pgm");
    save_image(&Image::constant(16, 16, 1, 0.5f64).unwrap(), &input).unwrap();

    let output = dir.path().join("out.pgm");
    let csv_path = dir.path().join("metrics.csv");
    run_ok(
        bin()
            .args(["denoise", "--method", "fine", "--steps", "4", "--t-max", "0.5"])
            .arg("--input")
            .arg(&input)
            .arg("--output")
            .arg(&output)
            .arg("--reference")
            .arg(&input)
            .arg("--metrics-csv")
            .arg(&csv_path),
    );

    assert_eq!(read(&input), read(&output));

    let csv = String::from_utf8(read(&csv_path)).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "step,t,rrmse,ssim,psnr");
    assert_eq!(lines.len(), 6, "header plus steps 0..=4: {csv}");
    for (k, line) in lines[1..].iter().enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[0], k.to_string());
        assert_eq!(cols[2], "0", "rrmse at step {k}: {line}");
        assert_eq!(cols[3], "1", "ssim at step {k}: {line}");
        assert_eq!(cols[4], "inf", "psnr at step {k}: {line}");
    }
}

#[test]
fn basis_roundtrip_matches_inline_construction() {
    let dir = tempfile::tempdir().unwrap();
    let clean = dir.path().join("clean.png");
    run_ok(bin().args(["generate", "--width", "32", "--height", "32"]).arg("--output").arg(&clean));
    let noisy = dir.path().join("noisy.png");
    run_ok(
        bin()
            .args(["add-noise", "--level", "0.2", "--seed", "7"])
            .arg("--input")
            .arg(&clean)
            .arg("--output")
            .arg(&noisy),
    );

    let basis = dir.path().join("b.msb");
    run_ok(
        bin()
            .args(["basis", "--coarse-cell", "8", "--bases", "2", "--local-steps", "6"])
            .arg("--input")
            .arg(&noisy)
            .arg("--out")
            .arg(&basis),
    );

    let from_file = dir.path().join("from_file.png");
    let stdout = run_ok(
        bin()
            .args(["denoise", "--method", "ms"])
            .arg("--input")
            .arg(&noisy)
            .arg("--output")
            .arg(&from_file)
            .arg("--basis-file")
            .arg(&basis),
    );
    assert!(stdout.contains("DOF_H = 50"), "stdout: {stdout}");

    let inline = dir.path().join("inline.png");
    run_ok(
        bin()
            .args([
                "denoise",
                "--method",
                "ms",
                "--coarse-cell",
                "8",
                "--bases",
                "2",
                "--local-steps",
                "6",
            ])
            .arg("--input")
            .arg(&noisy)
            .arg("--output")
            .arg(&inline),
    );

    assert_eq!(read(&from_file), read(&inline));
}

#[test]
fn offline_stage_ignores_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let clean = dir.path().join("clean.png");
    run_ok(bin().args(["generate", "--width", "32", "--height", "32"]).arg("--output").arg(&clean));
    let noisy = dir.path().join("noisy.png");
    run_ok(
        bin()
            .args(["add-noise", "--level", "0.2", "--seed", "3"])
            .arg("--input")
            .arg(&clean)
            .arg("--output")
            .arg(&noisy),
    );

    let serial = dir.path().join("serial.msb");
    let parallel = dir.path().join("parallel.msb");
    for (out, threads) in [(&serial, "1"), (&parallel, "4")] {
        run_ok(
            bin()
                .args([
                    "basis",
                    "--coarse-cell",
                    "8",
                    "--bases",
                    "3",
                    "--local-steps",
                    "6",
                    "--threads",
                    threads,
                ])
                .arg("--input")
                .arg(&noisy)
                .arg("--out")
                .arg(out),
        );
    }
    assert_eq!(read(&serial), read(&parallel));
}

#[test]
fn non_divisible_coarse_cell_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("odd.png");
    run_ok(bin().args(["generate", "--width", "30", "--height", "30"]).arg("--output").arg(&img));

    let out = run_err(
        bin()
            .args(["denoise", "--method", "ms", "--coarse-cell", "8"])
            .arg("--input")
            .arg(&img)
            .arg("--output")
            .arg(dir.path().join("x.png")),
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error:"), "stderr: {stderr}");
}

#[test]
fn bench_writes_the_pinned_header_and_dof_column() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.ini");
    std::fs::write(
        &cfg,
        "images = synth:gray:24\n\
         noise_levels = 0.2\n\
         bases = 1, 2\n\
         coarse_cell = 8\n\
         fine_steps = 4\n\
         fine_t_max = 0.5\n\
         ms_steps = 2\n\
         ms_t_max = 2\n\
         local_steps = 5\n",
    )
    .unwrap();

    let out_csv = dir.path().join("bench.csv");
    run_ok(bin().arg("bench").arg("--config").arg(&cfg).arg("--out").arg(&out_csv));

    let csv = String::from_utf8(read(&out_csv)).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "test,variant,rrmse_y,rrmse_cr,rrmse_cb,ssim,psnr,dof,time_s"
    );
    assert_eq!(lines.len(), 5, "ic, m=1, m=2, f: {csv}");

    let field = |line: &str, idx: usize| line.split(',').nth(idx).unwrap().to_string();
    let variants: Vec<String> = lines[1..].iter().map(|l| field(l, 1)).collect();
    assert_eq!(variants, ["ic", "1", "2", "f"]);

    let dof: Vec<usize> = lines[1..]
        .iter()
        .map(|l| field(l, 7).parse().unwrap())
        .collect();
    assert_eq!(dof[0], 24 * 24);
    assert!(dof[1] < dof[2], "m-variant dof must increase: {dof:?}");
    assert_eq!(dof[3], 24 * 24);

    assert_eq!(field(lines[1], 8), "0.0000");
    for line in &lines[1..] {
        let rrmse: f64 = field(line, 2).parse().unwrap();
        assert!(rrmse.is_finite());
    }
}

#[test]
fn config_file_fills_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("flat.pgm");
    save_image(&Image::constant(16, 16, 1, 0.4f64).unwrap(), &input).unwrap();
    let cfg = dir.path().join("run.ini");
    std::fs::write(&cfg, "steps = 3\nt_max = 0.3\n").unwrap();

    let stdout = run_ok(
        bin()
            .args(["denoise", "--method", "fine"])
            .arg("--config")
            .arg(&cfg)
            .arg("--input")
            .arg(&input)
            .arg("--output")
            .arg(dir.path().join("a.pgm")),
    );
    assert!(stdout.contains("(3 steps)"), "stdout: {stdout}");

    let stdout = run_ok(
        bin()
            .args(["denoise", "--method", "fine", "--steps", "2"])
            .arg("--config")
            .arg(&cfg)
            .arg("--input")
            .arg(&input)
            .arg("--output")
            .arg(dir.path().join("b.pgm")),
    );
    assert!(stdout.contains("(2 steps)"), "stdout: {stdout}");
}
