//! Single-run commands: image synthesis, noise, the two denoising
//! pipelines and offline basis construction.

use std::path::Path;
use std::time::Instant;

use msdenoise_core::fine::{denoise_fine, SolverOptions, TimeScheme};
use msdenoise_core::fvm::PixelGrid;
use msdenoise_core::image::{load_image, save_image, Image, NoiseSpec};
use msdenoise_core::metrics;
use msdenoise_core::multiscale::{
    build_basis_for_channel, build_node_eigenpairs, build_projection, coarse_denoise,
    deserialize_basis, partition_of_unity, serialize_basis, BasisConfig, CoarseGrid, CoarseMode,
    MsConfig, MultiscaleBasis,
};
use msdenoise_core::synth;
use msdenoise_core::{Error, Result};

use crate::config::{pick, FileConfig};
use crate::{st, AddNoiseArgs, BasisArgs, CliResult, DenoiseArgs, GenerateArgs, Kind, Method};

/// Resolved run parameters (flag, then config file, then default).
pub(crate) struct Params {
    pub lambda: f64,
    pub t_max: f64,
    pub steps: usize,
    pub coarse_cell: usize,
    pub bases: usize,
    pub local_t_max: f64,
    pub local_steps: usize,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub eigen_tol: f64,
}

pub(crate) fn solver_options(p: &Params) -> SolverOptions<f64> {
    SolverOptions {
        cg_tol: p.cg_tol,
        cg_max_iter: p.cg_max_iter,
    }
}

pub(crate) fn basis_config(p: &Params) -> BasisConfig<f64> {
    BasisConfig {
        lambda: p.lambda,
        local_t_max: p.local_t_max,
        local_steps: p.local_steps,
        eigen_tol: p.eigen_tol,
        eigen: Default::default(),
        solver: solver_options(p),
    }
}

fn ms_config(p: &Params) -> MsConfig<f64> {
    MsConfig {
        coarse_cell_px: p.coarse_cell,
        m: p.bases,
        lambda: p.lambda,
        t_max: p.t_max,
        n_steps: p.steps,
        mode: CoarseMode::Auto,
        basis: basis_config(p),
        solver: solver_options(p),
    }
}

fn denoise_params(args: &DenoiseArgs, cfg: &FileConfig) -> Result<Params> {
    let default_steps = match args.method {
        Method::Fine => 40,
        Method::Ms => 5,
    };
    Ok(Params {
        lambda: pick(args.lambda, cfg, "lambda", 0.3)?,
        t_max: pick(args.t_max, cfg, "t_max", 5.0)?,
        steps: pick(args.steps, cfg, "steps", default_steps)?,
        coarse_cell: pick(args.coarse_cell, cfg, "coarse_cell", 32)?,
        bases: pick(args.bases, cfg, "bases", 16)?,
        local_t_max: pick(args.local_t_max, cfg, "local_t_max", 5.0)?,
        local_steps: pick(args.local_steps, cfg, "local_steps", 30)?,
        cg_tol: pick(args.cg_tol, cfg, "cg_tol", 1e-8)?,
        cg_max_iter: pick(args.cg_max_iter, cfg, "cg_max_iter", 0)?,
        eigen_tol: pick(args.eigen_tol, cfg, "eigen_tol", 1e-6)?,
    })
}

fn basis_params(args: &BasisArgs, cfg: &FileConfig) -> Result<Params> {
    Ok(Params {
        lambda: pick(args.lambda, cfg, "lambda", 0.3)?,
        t_max: 5.0,
        steps: 5,
        coarse_cell: pick(args.coarse_cell, cfg, "coarse_cell", 32)?,
        bases: pick(args.bases, cfg, "bases", 16)?,
        local_t_max: pick(args.local_t_max, cfg, "local_t_max", 5.0)?,
        local_steps: pick(args.local_steps, cfg, "local_steps", 30)?,
        cg_tol: pick(args.cg_tol, cfg, "cg_tol", 1e-8)?,
        cg_max_iter: pick(args.cg_max_iter, cfg, "cg_max_iter", 0)?,
        eigen_tol: pick(args.eigen_tol, cfg, "eigen_tol", 1e-6)?,
    })
}

/// Channel the scalar metrics run on: the single gray plane, or luminance.
pub(crate) fn metric_plane(img: &Image<f64>) -> Result<Vec<f64>> {
    match img.channels() {
        1 => Ok(img.plane(0).to_vec()),
        3 => Ok(img.rgb_to_ycrcb()?.plane(0).to_vec()),
        c => Err(Error::ChannelMismatch {
            expected: 3,
            actual: c,
        }),
    }
}

pub(crate) struct MetricRow {
    pub step: usize,
    pub t: f64,
    pub rrmse: f64,
    pub ssim: f64,
    pub psnr: f64,
}

fn metric_row(step: usize, t: f64, iterate: &[f64], reference: &[f64]) -> Result<MetricRow> {
    let clamped: Vec<f64> = iterate.iter().map(|&v| v.clamp(0.0, 1.0)).collect();
    Ok(MetricRow {
        step,
        t,
        rrmse: metrics::rrmse(&clamped, reference)?,
        ssim: metrics::ssim(&clamped, reference)?,
        psnr: metrics::psnr(&clamped, reference)?,
    })
}

/// Gathers one metric row per observed iterate. Inactive without a
/// reference plane. The first failure stops collection and is surfaced by
/// `finish`; observers cannot return errors themselves.
struct Collector<'a> {
    rows: Vec<MetricRow>,
    err: Option<Error>,
    tau: f64,
    reference: Option<&'a [f64]>,
}

impl<'a> Collector<'a> {
    fn new(tau: f64, reference: Option<&'a [f64]>) -> Self {
        Self {
            rows: Vec::new(),
            err: None,
            tau,
            reference,
        }
    }

    fn record(&mut self, step: usize, iterate: &[f64]) {
        let Some(reference) = self.reference else {
            return;
        };
        if self.err.is_some() {
            return;
        }
        match metric_row(step, step as f64 * self.tau, iterate, reference) {
            Ok(row) => self.rows.push(row),
            Err(e) => self.err = Some(e),
        }
    }

    fn finish(self) -> Result<Vec<MetricRow>> {
        match self.err {
            Some(e) => Err(e),
            None => Ok(self.rows),
        }
    }
}

/// Writes a CSV through a temp file in the target directory, then renames.
pub(crate) fn write_csv_atomic(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let io_err = |source: std::io::Error| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let csv_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(source),
        other => io_err(std::io::Error::other(format!("{other:?}"))),
    };

    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    {
        let mut w = csv::Writer::from_writer(&tmp);
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            w.write_record(row).map_err(csv_err)?;
        }
        w.flush().map_err(io_err)?;
    }
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

pub(crate) fn run_generate(args: &GenerateArgs) -> CliResult {
    let img = match args.kind {
        Kind::Gray => synth::geometric_gray::<f64>(args.width, args.height),
        Kind::Color => synth::geometric_color::<f64>(args.width, args.height),
    }
    .map_err(st("generate image"))?;
    save_image(&img, &args.output).map_err(st("write image"))?;
    println!(
        "wrote {}x{} image ({} channel(s)) to {}",
        img.width(),
        img.height(),
        img.channels(),
        args.output.display()
    );
    Ok(())
}

pub(crate) fn run_add_noise(args: &AddNoiseArgs) -> CliResult {
    let img = load_image::<f64>(&args.input).map_err(st("read input image"))?;
    let spec = NoiseSpec::new(args.level, args.seed).map_err(st("add noise"))?;
    let noisy = img.add_noise(&spec);
    save_image(&noisy, &args.output).map_err(st("write image"))?;
    let r = metrics::rrmse(noisy.data(), img.data()).map_err(st("metrics"))?;
    println!("RRMSE vs input: {r:.6}");
    Ok(())
}

pub(crate) fn run_denoise(args: &DenoiseArgs) -> CliResult {
    let cfg = FileConfig::load_opt(&args.config).map_err(st("read config"))?;
    let p = denoise_params(args, &cfg).map_err(st("read config"))?;

    let img = load_image::<f64>(&args.input).map_err(st("read input image"))?;
    let reference = match &args.reference {
        Some(path) => {
            let r = load_image::<f64>(path).map_err(st("read reference image"))?;
            if r.width() != img.width()
                || r.height() != img.height()
                || r.channels() != img.channels()
            {
                return Err(st("read reference image")(Error::DimensionMismatch(format!(
                    "reference is {}x{} with {} channel(s), input is {}x{} with {}",
                    r.width(),
                    r.height(),
                    r.channels(),
                    img.width(),
                    img.height(),
                    img.channels()
                ))));
            }
            Some(r)
        }
        None => None,
    };
    // Per-iteration rows are only collected when a CSV was asked for.
    let ref_plane = match (&reference, &args.metrics_csv) {
        (Some(r), Some(_)) => Some(metric_plane(r).map_err(st("metrics"))?),
        _ => None,
    };

    let scheme = TimeScheme::new(p.t_max, p.steps).map_err(st("read config"))?;
    let opts = solver_options(&p);
    let mut col = Collector::new(scheme.tau(), ref_plane.as_deref());

    let (output, online_s, offline_s) = if img.channels() == 1 {
        denoise_gray(args, &p, &img, &scheme, &opts, &mut col)?
    } else {
        denoise_rgb(args, &p, &img, &scheme, &opts, &mut col)?
    };

    if let Some(secs) = offline_s {
        println!("offline stage: {secs:.3} s");
    }
    println!("online stage: {online_s:.3} s ({} steps)", p.steps);

    save_image(&output, &args.output).map_err(st("write image"))?;

    if let Some(r) = &reference {
        print_final_metrics(&output, r).map_err(st("metrics"))?;
    }

    let rows = col.finish().map_err(st("metrics"))?;
    if let Some(path) = &args.metrics_csv {
        let formatted: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                vec![
                    r.step.to_string(),
                    format!("{}", r.t),
                    format!("{}", r.rrmse),
                    format!("{}", r.ssim),
                    format!("{}", r.psnr),
                ]
            })
            .collect();
        write_csv_atomic(path, &["step", "t", "rrmse", "ssim", "psnr"], &formatted)
            .map_err(st("write metrics csv"))?;
    }
    Ok(())
}

fn print_final_metrics(output: &Image<f64>, reference: &Image<f64>) -> Result<()> {
    if output.channels() == 3 {
        let q = metrics::report_color(output, reference)?;
        println!(
            "final: rrmse_y = {:.6}, rrmse_cr = {:.6}, rrmse_cb = {:.6}, ssim = {:.6}, psnr = {:.3}",
            q.rrmse[0], q.rrmse[1], q.rrmse[2], q.ssim, q.psnr
        );
    } else {
        let (u, v) = (output.plane(0), reference.plane(0));
        println!(
            "final: rrmse = {:.6}, ssim = {:.6}, psnr = {:.3}",
            metrics::rrmse(u, v)?,
            metrics::ssim(u, v)?,
            metrics::psnr(u, v)?
        );
    }
    Ok(())
}

fn announce_dof(basis: &MultiscaleBasis<f64>) {
    println!(
        "DOF_H = {} ({} basis functions x {} coarse nodes, fine N_h = {})",
        basis.dof(),
        basis.node_m(),
        basis.coarse_grid().node_count(),
        basis.n_h()
    );
}

/// Loads the saved basis or runs the offline stage. Returns the basis and
/// the offline wall time when construction actually ran.
fn obtain_basis(
    args: &DenoiseArgs,
    luma: &[f64],
    width: usize,
    height: usize,
    p: &Params,
) -> CliResult<(MultiscaleBasis<f64>, Option<f64>)> {
    if let Some(path) = &args.basis_file {
        let basis = deserialize_basis(path).map_err(st("read basis file"))?;
        let cg = basis.coarse_grid();
        if cg.nx() != width || cg.ny() != height {
            return Err(st("read basis file")(Error::DimensionMismatch(format!(
                "basis covers a {}x{} image but the input is {}x{}",
                cg.nx(),
                cg.ny(),
                width,
                height
            ))));
        }
        if let Some(m) = args.bases {
            if m != basis.node_m() {
                return Err(st("read basis file")(Error::InvalidParameter(format!(
                    "--bases {m} disagrees with the {} stored in {}",
                    basis.node_m(),
                    path.display()
                ))));
            }
        }
        if let Some(c) = args.coarse_cell {
            if c != cg.cell_px() {
                return Err(st("read basis file")(Error::InvalidParameter(format!(
                    "--coarse-cell {c} disagrees with the {} stored in {}",
                    cg.cell_px(),
                    path.display()
                ))));
            }
        }
        Ok((basis, None))
    } else {
        let cfg = ms_config(p);
        let t0 = Instant::now();
        let basis =
            build_basis_for_channel(luma, width, height, &cfg).map_err(st("offline stage"))?;
        Ok((basis, Some(t0.elapsed().as_secs_f64())))
    }
}

fn denoise_gray(
    args: &DenoiseArgs,
    p: &Params,
    img: &Image<f64>,
    scheme: &TimeScheme<f64>,
    opts: &SolverOptions<f64>,
    col: &mut Collector<'_>,
) -> CliResult<(Image<f64>, f64, Option<f64>)> {
    col.record(0, img.plane(0));
    match args.method {
        Method::Fine => {
            let grid = PixelGrid::new(img.width(), img.height()).map_err(st("online stage"))?;
            let t0 = Instant::now();
            let out = denoise_fine(img.plane(0), &grid, scheme, p.lambda, opts, |n, it| {
                col.record(n, it)
            })
            .map_err(st("online stage"))?;
            let online = t0.elapsed().as_secs_f64();
            let out_img = img.with_plane(0, out).map_err(st("online stage"))?;
            Ok((out_img, online, None))
        }
        Method::Ms => {
            let (basis, offline) =
                obtain_basis(args, img.plane(0), img.width(), img.height(), p)?;
            announce_dof(&basis);
            let t0 = Instant::now();
            let out = coarse_denoise(img.plane(0), &basis, scheme, p.lambda, opts, |n, it| {
                col.record(n, it)
            })
            .map_err(st("online stage"))?;
            let online = t0.elapsed().as_secs_f64();
            let out_img = img.with_plane(0, out).map_err(st("online stage"))?;
            Ok((out_img, online, offline))
        }
    }
}

/// Fine pipeline on a color image: per-channel solves in YCrCb.
pub(crate) fn fine_color<F>(
    img: &Image<f64>,
    scheme: &TimeScheme<f64>,
    lambda: f64,
    opts: &SolverOptions<f64>,
    mut luma_observer: F,
) -> Result<Image<f64>>
where
    F: FnMut(usize, &[f64]),
{
    let ycc = img.rgb_to_ycrcb()?;
    let grid = PixelGrid::new(img.width(), img.height())?;
    let n = img.pixel_count();
    let mut data = Vec::with_capacity(3 * n);
    for ch in 0..3 {
        let plane = if ch == 0 {
            denoise_fine(ycc.plane(0), &grid, scheme, lambda, opts, &mut luma_observer)?
        } else {
            denoise_fine(ycc.plane(ch), &grid, scheme, lambda, opts, |_, _| {})?
        };
        data.extend_from_slice(&plane);
    }
    Image::new(img.width(), img.height(), 3, data)?.ycrcb_to_rgb()
}

/// Multiscale pipeline on a color image with a prebuilt luminance basis.
pub(crate) fn ms_color<F>(
    img: &Image<f64>,
    basis: &MultiscaleBasis<f64>,
    scheme: &TimeScheme<f64>,
    lambda: f64,
    opts: &SolverOptions<f64>,
    mut luma_observer: F,
) -> Result<Image<f64>>
where
    F: FnMut(usize, &[f64]),
{
    let ycc = img.rgb_to_ycrcb()?;
    let n = img.pixel_count();
    let mut data = Vec::with_capacity(3 * n);
    for ch in 0..3 {
        let plane = if ch == 0 {
            coarse_denoise(ycc.plane(0), basis, scheme, lambda, opts, &mut luma_observer)?
        } else {
            coarse_denoise(ycc.plane(ch), basis, scheme, lambda, opts, |_, _| {})?
        };
        data.extend_from_slice(&plane);
    }
    Image::new(img.width(), img.height(), 3, data)?.ycrcb_to_rgb()
}

fn denoise_rgb(
    args: &DenoiseArgs,
    p: &Params,
    img: &Image<f64>,
    scheme: &TimeScheme<f64>,
    opts: &SolverOptions<f64>,
    col: &mut Collector<'_>,
) -> CliResult<(Image<f64>, f64, Option<f64>)> {
    let ycc = img.rgb_to_ycrcb().map_err(st("online stage"))?;
    col.record(0, ycc.plane(0));
    match args.method {
        Method::Fine => {
            let t0 = Instant::now();
            let out = fine_color(img, scheme, p.lambda, opts, |n, it| col.record(n, it))
                .map_err(st("online stage"))?;
            Ok((out, t0.elapsed().as_secs_f64(), None))
        }
        Method::Ms => {
            let (basis, offline) =
                obtain_basis(args, ycc.plane(0), img.width(), img.height(), p)?;
            announce_dof(&basis);
            let t0 = Instant::now();
            let out = ms_color(img, &basis, scheme, p.lambda, opts, |n, it| col.record(n, it))
                .map_err(st("online stage"))?;
            Ok((out, t0.elapsed().as_secs_f64(), offline))
        }
    }
}

pub(crate) fn run_basis(args: &BasisArgs) -> CliResult {
    let cfg = FileConfig::load_opt(&args.config).map_err(st("read config"))?;
    let p = basis_params(args, &cfg).map_err(st("read config"))?;

    let img = load_image::<f64>(&args.input).map_err(st("read input image"))?;
    let luma = metric_plane(&img).map_err(st("read input image"))?;
    let grid = PixelGrid::new(img.width(), img.height()).map_err(st("offline stage"))?;
    let cg = CoarseGrid::build(img.width(), img.height(), p.coarse_cell)
        .map_err(st("offline stage"))?;

    let bcfg = basis_config(&p);
    let t0 = Instant::now();
    let pairs =
        build_node_eigenpairs(&luma, &grid, &cg, p.bases, &bcfg).map_err(st("offline stage"))?;
    let pou = partition_of_unity::<f64>(&cg);
    let basis = build_projection(&cg, &pou, &pairs, p.bases).map_err(st("offline stage"))?;
    let offline = t0.elapsed().as_secs_f64();

    for (node, pr) in pairs.iter().enumerate() {
        let (gx, gy) = cg.node_grid(node);
        println!(
            "node {node} ({gx},{gy}): lambda_1 = {:.6e} .. lambda_{} = {:.6e}",
            pr.values[0],
            p.bases,
            pr.values[p.bases - 1]
        );
    }
    println!("offline stage: {offline:.3} s");
    println!(
        "DOF_H = {} ({} basis functions x {} coarse nodes, fine N_h = {})",
        basis.dof(),
        basis.node_m(),
        cg.node_count(),
        basis.n_h()
    );

    serialize_basis(&basis, &args.out).map_err(st("write basis file"))?;
    println!("wrote basis to {}", args.out.display());
    Ok(())
}
