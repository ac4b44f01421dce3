use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use gamdiag_core::dataset::{Column, ColumnData, Role};
use gamdiag_core::effect::{load_surface, OpacityParams};
use gamdiag_core::grid::{Summary, DEFAULT_HEXES};
use gamdiag_core::qq::{analytic_positions, bin_qq, normal_band, CurveSource, QQCurve, DEFAULT_B0};
use gamdiag_core::residuals::{transform, Reference};
use gamdiag_core::scenarios::{generate, ScenarioId};
use gamdiag_core::stats::sort_f64;
use gamdiag_core::{load_for_family, DiagnosticDataset, Family, ResidualType};
use serde::Serialize;
use serde_json::Value;

use crate::api::{router, AppState};
use crate::render;
use crate::session::{
    versioned, BandKind, CellCount, Check1dQuery, Check2dQuery, DensQuery, EffectMode, EffectQuery, GlyphKind,
    GlyphQuery, Model, QqQuery, Session,
};

#[derive(Debug, Parser)]
#[command(name = "gamdiag", version, about = "Scalable residual diagnostics for GAM and GAMLSS fits")]
pub struct Cli {
    /// Worker threads for parallel sections (defaults to all cores).
    #[arg(long, global = true, env = "GAMDIAG_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic scenario dataset as CSV.
    Scenario(ScenarioArgs),
    /// Binned QQ curve with an optional band or envelope.
    Qq(QqArgs),
    /// Residual summaries along one covariate.
    Check1d(Check1dArgs),
    /// Standardised residual summaries on a hexagonal grid over two covariates.
    Check2d(Check2dArgs),
    /// Worm or k.d.e. glyphs per cell over two covariates.
    Glyphs(GlyphArgs),
    /// Conditional residual density misfit along one covariate.
    Denscheck(DensArgs),
    /// Opacity or perturbation layer for a fitted 2D effect surface.
    Effect(EffectArgs),
    /// Serve the JSON API for one dataset and/or effect surface.
    Serve(ServeArgs),
    /// Time the QQ pipeline on a synthetic gaussian sample.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV or binary column file with the response and model parameter columns.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "gaussian")]
    pub family: Family,
    #[arg(long = "type", default_value = "quantile")]
    pub kind: ResidualType,
    #[arg(long, default_value = "y")]
    pub response: String,
    /// Covariate to read as categorical; repeatable.
    #[arg(long = "factor")]
    pub factors: Vec<String>,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// JSON output path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a static SVG rendering.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[arg(long)]
    pub id: ScenarioId,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// CSV output path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QqArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = DEFAULT_B0)]
    pub b0: usize,
    #[arg(long, default_value = "none")]
    pub band: BandKind,
    #[arg(long, default_value_t = 0.95)]
    pub alpha: f64,
    /// Replicates for the envelope or a simulated reference.
    #[arg(long, default_value_t = 100)]
    pub l: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Zoom window on the theoretical axis, as `lo,hi`.
    #[arg(long, value_parser = parse_window, allow_hyphen_values = true)]
    pub zoom: Option<(f64, f64)>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct Check1dArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub var: String,
    #[arg(long, default_value_t = 20)]
    pub b: usize,
    #[arg(long, default_value = "mean")]
    pub summary: Summary,
    /// Replicates for reference intervals; 0 skips them.
    #[arg(long, default_value_t = 50)]
    pub l: usize,
    #[arg(long, default_value_t = 0.9)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct Check2dArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub x1: String,
    #[arg(long)]
    pub x2: String,
    #[arg(long, default_value = "sd")]
    pub summary: Summary,
    #[arg(long, default_value_t = 50)]
    pub l: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_HEXES)]
    pub hexes: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct GlyphArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub x1: String,
    #[arg(long)]
    pub x2: String,
    #[arg(long = "kind", id = "glyph", default_value = "worm")]
    pub glyph: GlyphKind,
    /// `c` or `c1xc2`.
    #[arg(long, default_value = "6")]
    pub cells: CellCount,
    #[arg(long, default_value_t = 0.95)]
    pub alpha: f64,
    #[arg(long, default_value_t = 64)]
    pub knots: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct DensArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub var: String,
    #[arg(long, default_value_t = 128)]
    pub gx: usize,
    #[arg(long, default_value_t = 128)]
    pub gr: usize,
    #[arg(long)]
    pub hx: Option<f64>,
    #[arg(long)]
    pub hr: Option<f64>,
    #[arg(long, default_value_t = 20)]
    pub l: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct EffectArgs {
    /// Long-format CSV with columns x1, x2, fhat, vhat.
    #[arg(long)]
    pub surface: PathBuf,
    #[arg(long, default_value = "opacity")]
    pub mode: EffectMode,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[arg(long, default_value_t = 3.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.2)]
    pub beta: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "gaussian")]
    pub family: Family,
    #[arg(long = "type", default_value = "quantile")]
    pub kind: ResidualType,
    #[arg(long, default_value = "y")]
    pub response: String,
    #[arg(long = "factor")]
    pub factors: Vec<String>,
    #[arg(long)]
    pub surface: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Requests waiting longer than this on a computation get 503.
    #[arg(long, default_value_t = 30_000)]
    pub sim_timeout_ms: u64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 1_000_000)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_B0)]
    pub b0: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `lo,hi`")?;
    let lo = a.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let hi = b.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((lo, hi))
}

fn load_model(d: &DataArgs) -> anyhow::Result<Model> {
    let ds = load_for_family(&d.data, &d.response, d.family, &d.factors)
        .with_context(|| format!("loading {}", d.data.display()))?;
    Ok(Model::new(ds, d.family, d.kind)?)
}

fn session(d: &DataArgs) -> anyhow::Result<Session> {
    Ok(Session::new(Some(load_model(d)?), None))
}

fn write_out(path: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            match out.write_all(bytes).and_then(|()| out.flush()) {
                // a closed pipe (`| head`) is not a failure
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                r => Ok(r?),
            }
        }
    }
}

fn emit(out: &OutArgs, json: &Value, svg: impl FnOnce() -> anyhow::Result<String>) -> anyhow::Result<()> {
    let mut bytes = serde_json::to_vec(json)?;
    bytes.push(b'\n');
    write_out(out.out.as_deref(), &bytes)?;
    if let Some(p) = &out.svg {
        fs::write(p, svg()?).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            bail!("GAMDIAG_THREADS must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    match cli.command {
        Command::Scenario(a) => {
            let s = generate(a.id, a.n, a.seed)?;
            log::info!("{} n={} seed={}: {:?}", s.id, s.n, s.seed, s.channels);
            match &a.out {
                Some(p) => s.dataset.write_csv(p)?,
                None => s.dataset.write_csv_to(std::io::stdout().lock())?,
            }
        }
        Command::Qq(a) => {
            let s = session(&a.data)?;
            let q = QqQuery {
                b0: a.b0,
                band: a.band,
                alpha: a.alpha,
                l: a.l,
                seed: a.seed,
            };
            match a.zoom {
                Some((lo, hi)) => {
                    let binned = s.zoom_binned(&q, lo, hi)?;
                    emit(&a.out, &s.zoom(&q, lo, hi)?, || {
                        binned.as_ref().map(render::qq_svg).context("zoom window holds no points")
                    })?
                }
                None => {
                    let binned = s.qq_binned(&q)?;
                    emit(&a.out, &s.qq(&q)?, || Ok(render::qq_svg(&binned)))?
                }
            }
        }
        Command::Check1d(a) => {
            let s = session(&a.data)?;
            let q = Check1dQuery {
                var: a.var,
                b: a.b,
                summary: a.summary,
                l: a.l,
                alpha: a.alpha,
                seed: a.seed,
            };
            let (series, _) = s.check1d_series(&q)?;
            emit(&a.out, &s.check1d(&q)?, || Ok(render::series_svg(&series)))?
        }
        Command::Check2d(a) => {
            let s = session(&a.data)?;
            let q = Check2dQuery {
                x1: a.x1,
                x2: a.x2,
                summary: a.summary,
                l: a.l,
                seed: a.seed,
                hexes: a.hexes,
            };
            let grid = s.check2d_grid(&q)?;
            emit(&a.out, &s.check2d(&q)?, || Ok(render::hex_svg(&grid)))?
        }
        Command::Glyphs(a) => {
            let s = session(&a.data)?;
            let q = GlyphQuery {
                x1: a.x1,
                x2: a.x2,
                kind: a.glyph,
                cells: a.cells,
                alpha: a.alpha,
                knots: a.knots,
            };
            let grid = s.glyph_grid(&q)?;
            emit(&a.out, &s.glyphs(&q)?, || Ok(render::glyph_svg(&grid)))?
        }
        Command::Denscheck(a) => {
            let s = session(&a.data)?;
            let q = DensQuery {
                var: a.var,
                gx: a.gx,
                gr: a.gr,
                hx: a.hx,
                hr: a.hr,
                l: a.l,
                seed: a.seed,
            };
            let (field, _) = s.dens_field(&q)?;
            emit(&a.out, &s.denscheck(&q)?, || {
                Ok(render::heatmap_svg(&field.x, &field.r, &field.delta, None, &format!("densCheck ({})", field.distance), (&q.var, "residual")))
            })?
        }
        Command::Effect(a) => {
            let surface = load_surface(&a.surface).with_context(|| format!("loading {}", a.surface.display()))?;
            let s = Session::new(None, Some(surface));
            let q = EffectQuery {
                mode: a.mode,
                seed: a.seed,
                params: OpacityParams {
                    delta: a.delta,
                    gamma: a.gamma,
                    beta: a.beta,
                },
            };
            let json = s.effect(&q)?;
            emit(&a.out, &json, || {
                let surf = s.surface()?;
                let (opacity, g) = s.effect_layers(&q)?;
                let shown: Vec<Option<f64>> = g.as_ref().unwrap_or(&surf.fhat).iter().map(|&v| Some(v)).collect();
                Ok(render::heatmap_svg(&surf.x1, &surf.x2, &shown, opacity.as_deref(), "effect surface", ("x1", "x2")))
            })?
        }
        Command::Serve(a) => serve(a)?,
        Command::Bench(a) => {
            let report = bench(a.n, a.seed, a.b0)?;
            let mut bytes = serde_json::to_vec(&versioned(report)?)?;
            bytes.push(b'\n');
            write_out(a.out.as_deref(), &bytes)?;
        }
    }
    Ok(())
}

fn serve(a: ServeArgs) -> anyhow::Result<()> {
    let model = match &a.data {
        Some(path) => {
            let d = DataArgs {
                data: path.clone(),
                family: a.family,
                kind: a.kind,
                response: a.response.clone(),
                factors: a.factors.clone(),
            };
            Some(load_model(&d)?)
        }
        None => None,
    };
    let surface = match &a.surface {
        Some(p) => Some(load_surface(p).with_context(|| format!("loading {}", p.display()))?),
        None => None,
    };
    if model.is_none() && surface.is_none() {
        bail!("serve needs --data, --surface, or both");
    }
    let state = AppState {
        session: Arc::new(Session::new(model, surface)),
        timeout: Duration::from_millis(a.sim_timeout_ms),
    };
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(a.addr).await?;
        log::info!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(state)).await?;
        Ok(())
    })
}

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub n: usize,
    pub seed: u64,
    pub b0: usize,
    pub threads: usize,
    pub transform_ms: f64,
    pub sort_ms: f64,
    pub bin_ms: f64,
    pub band_ms: f64,
    pub total_ms: f64,
}

/// Times transform, sort, normal band and binning for `n` gaussian
/// quantile residuals.
pub fn bench(n: usize, seed: u64, b0: usize) -> anyhow::Result<BenchReport> {
    let draws = generate(ScenarioId::WellSpecified, n, seed)?;
    let y = draws.dataset.response()?.to_vec();
    let ds = DiagnosticDataset::from_columns(vec![
        float("y", Role::Response, y),
        float("mu", Role::Param, vec![0.0; n]),
        float("sigma", Role::Param, vec![1.0; n]),
    ])?;
    let ms = |t: Instant| t.elapsed().as_secs_f64() * 1e3;

    let start = Instant::now();
    let res = transform(&ds, Family::Gaussian, ResidualType::Quantile)?;
    let transform_ms = ms(start);

    let t = Instant::now();
    let mut r = res.values;
    sort_f64(&mut r);
    let curve = QQCurve {
        r_bar: analytic_positions(Reference::Normal, n),
        r,
        source: CurveSource::Analytic,
    };
    let sort_ms = ms(t);

    let t = Instant::now();
    let band = normal_band(&curve, 0.95);
    let band_ms = ms(t);

    let t = Instant::now();
    let binned = bin_qq(&curve, b0, &[band], None)?;
    let bin_ms = ms(t);
    log::info!("{} bins", binned.b());

    Ok(BenchReport {
        n,
        seed,
        b0,
        threads: rayon::current_num_threads(),
        transform_ms,
        sort_ms,
        bin_ms,
        band_ms,
        total_ms: ms(start),
    })
}

fn float(name: &str, role: Role, v: Vec<f64>) -> Column {
    Column {
        name: name.into(),
        role,
        data: ColumnData::Float(v),
    }
}
