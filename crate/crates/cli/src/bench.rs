//! Benchmark harness. For each test image and noise level it records the
//! noisy baseline, a multiscale sweep over basis counts, and the fine
//! solver, one CSV row per variant.

use std::path::{Path, PathBuf};
use std::time::Instant;

use msdenoise_core::fine::{denoise_fine, SolverOptions, TimeScheme};
use msdenoise_core::fvm::PixelGrid;
use msdenoise_core::image::{load_image, Image, NoiseSpec};
use msdenoise_core::metrics;
use msdenoise_core::multiscale::{
    build_node_eigenpairs, build_projection, coarse_denoise, partition_of_unity, BasisConfig,
    CoarseGrid,
};
use msdenoise_core::sparse::EigenPairs;
use msdenoise_core::synth;
use msdenoise_core::{Error, Result};

use crate::config::FileConfig;
use crate::pipeline::{fine_color, metric_plane, ms_color, write_csv_atomic};
use crate::{st, BenchArgs, CliResult};

const HEADER: [&str; 9] = [
    "test", "variant", "rrmse_y", "rrmse_cr", "rrmse_cb", "ssim", "psnr", "dof", "time_s",
];

struct BenchParams {
    lambda: f64,
    fine_t_max: f64,
    fine_steps: usize,
    ms_t_max: f64,
    ms_steps: usize,
    coarse_cell: usize,
    local_t_max: f64,
    local_steps: usize,
    cg_tol: f64,
    cg_max_iter: usize,
    eigen_tol: f64,
    bases: Vec<usize>,
    noise_levels: Vec<f64>,
    seed: u64,
}

impl BenchParams {
    fn solver(&self) -> SolverOptions<f64> {
        SolverOptions {
            cg_tol: self.cg_tol,
            cg_max_iter: self.cg_max_iter,
        }
    }

    fn basis_cfg(&self) -> BasisConfig<f64> {
        BasisConfig {
            lambda: self.lambda,
            local_t_max: self.local_t_max,
            local_steps: self.local_steps,
            eigen_tol: self.eigen_tol,
            eigen: Default::default(),
            solver: self.solver(),
        }
    }
}

fn bench_params(cfg: &FileConfig) -> Result<BenchParams> {
    let p = BenchParams {
        lambda: cfg.parse("lambda")?.unwrap_or(0.3),
        fine_t_max: cfg.parse("fine_t_max")?.unwrap_or(5.0),
        fine_steps: cfg.parse("fine_steps")?.unwrap_or(40),
        ms_t_max: cfg.parse("ms_t_max")?.unwrap_or(5.0),
        ms_steps: cfg.parse("ms_steps")?.unwrap_or(5),
        coarse_cell: cfg.parse("coarse_cell")?.unwrap_or(32),
        local_t_max: cfg.parse("local_t_max")?.unwrap_or(5.0),
        local_steps: cfg.parse("local_steps")?.unwrap_or(30),
        cg_tol: cfg.parse("cg_tol")?.unwrap_or(1e-8),
        cg_max_iter: cfg.parse("cg_max_iter")?.unwrap_or(0),
        eigen_tol: cfg.parse("eigen_tol")?.unwrap_or(1e-6),
        bases: cfg
            .parse_list("bases")?
            .unwrap_or_else(|| vec![1, 2, 4, 6, 8, 12, 16]),
        noise_levels: cfg.parse_list("noise_levels")?.unwrap_or_else(|| vec![0.2, 0.4]),
        seed: cfg.parse("seed")?.unwrap_or(42),
    };
    if p.bases.is_empty() {
        return Err(Error::InvalidParameter("bases list is empty".into()));
    }
    if p.noise_levels.is_empty() {
        return Err(Error::InvalidParameter("noise_levels list is empty".into()));
    }
    Ok(p)
}

struct Quality {
    rrmse_y: f64,
    rrmse_cr: Option<f64>,
    rrmse_cb: Option<f64>,
    ssim: f64,
    psnr: f64,
}

fn quality(out: &Image<f64>, clean: &Image<f64>) -> Result<Quality> {
    if clean.channels() == 3 {
        let q = metrics::report_color(out, clean)?;
        Ok(Quality {
            rrmse_y: q.rrmse[0],
            rrmse_cr: Some(q.rrmse[1]),
            rrmse_cb: Some(q.rrmse[2]),
            ssim: q.ssim,
            psnr: q.psnr,
        })
    } else {
        let (u, v) = (out.plane(0), clean.plane(0));
        Ok(Quality {
            rrmse_y: metrics::rrmse(u, v)?,
            rrmse_cr: None,
            rrmse_cb: None,
            ssim: metrics::ssim(u, v)?,
            psnr: metrics::psnr(u, v)?,
        })
    }
}

/// One CSV row; a failed variant keeps its name and dof with everything
/// else empty.
fn row(test: &str, variant: &str, q: Option<&Quality>, dof: usize, time_s: Option<f64>) -> Vec<String> {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    match q {
        Some(q) => vec![
            test.to_string(),
            variant.to_string(),
            format!("{:.6}", q.rrmse_y),
            opt(q.rrmse_cr),
            opt(q.rrmse_cb),
            format!("{:.6}", q.ssim),
            format!("{:.4}", q.psnr),
            dof.to_string(),
            time_s.map(|t| format!("{t:.4}")).unwrap_or_default(),
        ],
        None => vec![
            test.to_string(),
            variant.to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            dof.to_string(),
            String::new(),
        ],
    }
}

fn parse_dim(spec: &str, raw: &str) -> Result<usize> {
    raw.trim()
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("image spec {spec:?}: bad size {raw:?}")))
}

/// A test image: either a file path (relative paths resolve against the
/// config file) or `synth:gray:N`, `synth:color:WxH`.
fn load_spec(spec: &str, base: &Path) -> Result<(String, Image<f64>)> {
    if let Some(rest) = spec.strip_prefix("synth:") {
        let (kind, size) = rest.split_once(':').ok_or_else(|| {
            Error::InvalidParameter(format!(
                "image spec {spec:?}; expected synth:gray:SIZE or synth:color:SIZE"
            ))
        })?;
        let (w, h) = match size.split_once('x') {
            Some((w, h)) => (parse_dim(spec, w)?, parse_dim(spec, h)?),
            None => {
                let s = parse_dim(spec, size)?;
                (s, s)
            }
        };
        let img = match kind {
            "gray" => synth::geometric_gray(w, h)?,
            "color" => synth::geometric_color(w, h)?,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "image spec {spec:?}: unknown kind {other:?}"
                )))
            }
        };
        Ok((format!("synth-{kind}-{w}x{h}"), img))
    } else {
        let mut path = PathBuf::from(spec);
        if path.is_relative() {
            path = base.join(path);
        }
        let name = Path::new(spec)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| spec.to_string());
        Ok((name, load_image(&path)?))
    }
}

pub(crate) fn run_bench(args: &BenchArgs) -> CliResult {
    let cfg = FileConfig::load(&args.config).map_err(st("read config"))?;
    let p = bench_params(&cfg).map_err(st("read config"))?;
    let specs = cfg.list_str("images").unwrap_or_default();
    if specs.is_empty() {
        return Err(st("read config")(Error::InvalidParameter(
            "bench config needs images = <path or synth:kind:size>[, ...]".into(),
        )));
    }
    let base_dir = args
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();

    let mut rows: Vec<Vec<String>> = Vec::new();
    for spec in &specs {
        match load_spec(spec, &base_dir) {
            Err(e) => {
                eprintln!("bench: cannot load {spec}: {e}");
                for level in &p.noise_levels {
                    rows.push(row(&format!("{spec}@{level}"), "error", None, 0, None));
                }
            }
            Ok((name, clean)) => {
                for &level in &p.noise_levels {
                    bench_one(&name, &clean, level, &p, &mut rows);
                }
            }
        }
    }

    write_csv_atomic(&args.out, &HEADER, &rows).map_err(st("write bench csv"))?;
    println!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

/// All variants of one (image, noise level) test. Failures turn into empty
/// rows plus a stderr note; the sweep keeps going.
fn bench_one(name: &str, clean: &Image<f64>, level: f64, p: &BenchParams, rows: &mut Vec<Vec<String>>) {
    let test = format!("{name}@{level}");
    let n_h = clean.pixel_count();

    let noisy = match NoiseSpec::new(level, p.seed) {
        Ok(spec) => clean.add_noise(&spec),
        Err(e) => {
            eprintln!("{test}: {e}");
            rows.push(row(&test, "ic", None, n_h, None));
            return;
        }
    };

    match quality(&noisy, clean) {
        Ok(q) => rows.push(row(&test, "ic", Some(&q), n_h, Some(0.0))),
        Err(e) => {
            eprintln!("{test}: ic: {e}");
            rows.push(row(&test, "ic", None, n_h, None));
        }
    }

    // Multiscale sweep. The eigenproblems run once at the largest count;
    // each smaller basis is a prefix of that solution.
    let m_max = p.bases.iter().copied().max().unwrap();
    let setup = (|| -> Result<(CoarseGrid, Vec<EigenPairs<f64>>, TimeScheme<f64>)> {
        let cg = CoarseGrid::build(clean.width(), clean.height(), p.coarse_cell)?;
        let grid = PixelGrid::new(clean.width(), clean.height())?;
        let luma = metric_plane(&noisy)?;
        let t0 = Instant::now();
        let pairs = build_node_eigenpairs(&luma, &grid, &cg, m_max, &p.basis_cfg())?;
        println!(
            "{test}: offline stage {:.3} s (m = {m_max})",
            t0.elapsed().as_secs_f64()
        );
        let scheme = TimeScheme::new(p.ms_t_max, p.ms_steps)?;
        Ok((cg, pairs, scheme))
    })();

    match setup {
        Err(e) => {
            eprintln!("{test}: offline stage: {e}");
            for &m in &p.bases {
                rows.push(row(&test, &m.to_string(), None, 0, None));
            }
        }
        Ok((cg, pairs, scheme)) => {
            let pou = partition_of_unity::<f64>(&cg);
            for &m in &p.bases {
                let dof = cg.coarse_dof(m);
                let run = (|| -> Result<(Image<f64>, f64)> {
                    let pairs_m: Vec<EigenPairs<f64>> =
                        pairs.iter().map(|e| e.truncated(m)).collect();
                    let basis = build_projection(&cg, &pou, &pairs_m, m)?;
                    let t0 = Instant::now();
                    let out = if clean.channels() == 3 {
                        ms_color(&noisy, &basis, &scheme, p.lambda, &p.solver(), |_, _| {})?
                    } else {
                        let plane = coarse_denoise(
                            noisy.plane(0),
                            &basis,
                            &scheme,
                            p.lambda,
                            &p.solver(),
                            |_, _| {},
                        )?;
                        noisy.with_plane(0, plane)?
                    };
                    Ok((out, t0.elapsed().as_secs_f64()))
                })();
                match run.and_then(|(out, secs)| Ok((quality(&out, clean)?, secs))) {
                    Ok((q, secs)) => {
                        rows.push(row(&test, &m.to_string(), Some(&q), dof, Some(secs)))
                    }
                    Err(e) => {
                        eprintln!("{test}: m = {m}: {e}");
                        rows.push(row(&test, &m.to_string(), None, dof, None));
                    }
                }
            }
        }
    }

    // Fine baseline.
    let fine = (|| -> Result<(Image<f64>, f64)> {
        let scheme = TimeScheme::new(p.fine_t_max, p.fine_steps)?;
        let t0 = Instant::now();
        let out = if clean.channels() == 3 {
            fine_color(&noisy, &scheme, p.lambda, &p.solver(), |_, _| {})?
        } else {
            let grid = PixelGrid::new(clean.width(), clean.height())?;
            let plane = denoise_fine(
                noisy.plane(0),
                &grid,
                &scheme,
                p.lambda,
                &p.solver(),
                |_, _| {},
            )?;
            noisy.with_plane(0, plane)?
        };
        Ok((out, t0.elapsed().as_secs_f64()))
    })();
    match fine.and_then(|(out, secs)| Ok((quality(&out, clean)?, secs))) {
        Ok((q, secs)) => rows.push(row(&test, "f", Some(&q), n_h, Some(secs))),
        Err(e) => {
            eprintln!("{test}: f: {e}");
            rows.push(row(&test, "f", None, n_h, None));
        }
    }
}
