//! Loaded dataset plus every cached artifact derived from it. Requests from
//! the CLI and the HTTP service both resolve to the methods here, so the two
//! produce identical payloads for identical inputs.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{SystemTime, UNIX_EPOCH};

use gamdiag_core::dataset::{ColumnInfo, ColumnView};
use gamdiag_core::density::{dens_check, DensCheckConfig, DensityField, ModelRef};
use gamdiag_core::effect::{opacity_field, perturb_field, EffectSurface, OpacityParams};
use gamdiag_core::grid::{
    grid_check_1d, grid_check_2d, kde_glyphs, worm_glyphs, Cells, GlyphGrid, HexSummaryGrid, Lattice, Summary,
    SummarySeries,
};
use gamdiag_core::qq::{
    analytic_positions, bin_qq, ks_band, normal_band, replicate_means, sim_envelope_sorted, zoom, Band, BinnedQQ,
    CurveSource, Envelope, QQCurve,
};
use gamdiag_core::residuals::{simulate_residuals, transform, Reference, SimulatedResiduals};
use gamdiag_core::stats::sort_f64;
use gamdiag_core::{DiagnosticDataset, Family, ResidualType, ResidualVector};
use serde::Serialize;
use serde_json::Value;

use crate::error::ApiError;

pub const SCHEMA_VERSION: u32 = 1;
/// Upper bound on replicates per request.
pub const MAX_REPLICATES: usize = 10_000;

/// Wraps a payload with the schema version.
#[derive(Serialize)]
struct Versioned<T> {
    v: u32,
    #[serde(flatten)]
    body: T,
}

pub fn versioned<T: Serialize>(body: T) -> Result<Value, ApiError> {
    serde_json::to_value(Versioned { v: SCHEMA_VERSION, body }).map_err(|e| ApiError::internal(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BandKind {
    None,
    Ks,
    Normal,
    Envelope,
}

impl FromStr for BandKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(BandKind::None),
            "ks" => Ok(BandKind::Ks),
            "normal" => Ok(BandKind::Normal),
            "envelope" => Ok(BandKind::Envelope),
            _ => Err(format!("unknown band `{s}` (none|ks|normal|envelope)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GlyphKind {
    Worm,
    Kde,
}

impl FromStr for GlyphKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "worm" => Ok(GlyphKind::Worm),
            "kde" => Ok(GlyphKind::Kde),
            _ => Err(format!("unknown glyph kind `{s}` (worm|kde)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectMode {
    Plain,
    Opacity,
    Perturb,
}

impl FromStr for EffectMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "plain" => Ok(EffectMode::Plain),
            "opacity" => Ok(EffectMode::Opacity),
            "perturb" => Ok(EffectMode::Perturb),
            _ => Err(format!("unknown effect mode `{s}` (plain|opacity|perturb)")),
        }
    }
}

/// `c` or `c1xc2` cell counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CellCount(pub usize, pub usize);

impl FromStr for CellCount {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad cell count `{s}`"));
        match s.split_once(['x', 'X']) {
            Some((a, b)) => Ok(CellCount(parse(a)?, parse(b)?)),
            None => {
                let c = parse(s)?;
                Ok(CellCount(c, c))
            }
        }
    }
}

impl fmt::Display for CellCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.0, self.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QqQuery {
    pub b0: usize,
    pub band: BandKind,
    pub alpha: f64,
    pub l: usize,
    pub seed: u64,
}

impl Default for QqQuery {
    fn default() -> Self {
        QqQuery {
            b0: gamdiag_core::qq::DEFAULT_B0,
            band: BandKind::None,
            alpha: 0.95,
            l: 100,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check1dQuery {
    pub var: String,
    pub b: usize,
    pub summary: Summary,
    /// Replicates for reference intervals; 0 skips them.
    pub l: usize,
    pub alpha: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check2dQuery {
    pub x1: String,
    pub x2: String,
    pub summary: Summary,
    pub l: usize,
    pub seed: u64,
    pub hexes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlyphQuery {
    pub x1: String,
    pub x2: String,
    pub kind: GlyphKind,
    pub cells: CellCount,
    pub alpha: f64,
    pub knots: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensQuery {
    pub var: String,
    pub gx: usize,
    pub gr: usize,
    pub hx: Option<f64>,
    pub hr: Option<f64>,
    /// Replicates for residual types without an analytic density.
    pub l: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectQuery {
    pub mode: EffectMode,
    pub seed: u64,
    pub params: OpacityParams,
}

/// Replicates for one `(type, l, seed)` key; sorted rows and the simulated
/// QQ reference are derived on first use.
pub struct SimData {
    pub sims: SimulatedResiduals,
    sorted: OnceLock<Vec<Vec<f64>>>,
    curve: OnceLock<Result<Arc<QQCurve>, ApiError>>,
}

impl SimData {
    pub fn sorted_rows(&self) -> &[Vec<f64>] {
        self.sorted.get_or_init(|| self.sims.sorted_rows())
    }
}

type SimSlot = Arc<OnceLock<Result<Arc<SimData>, ApiError>>>;

/// Dataset, family and residual type with their cached derivatives.
pub struct Model {
    pub dataset: DiagnosticDataset,
    pub family: Family,
    pub kind: ResidualType,
    pub residuals: ResidualVector,
    sorted: OnceLock<Arc<Vec<f64>>>,
    analytic: OnceLock<Arc<QQCurve>>,
    sims: Mutex<HashMap<(ResidualType, usize, u64), SimSlot>>,
    sorts: AtomicUsize,
}

impl Model {
    pub fn new(dataset: DiagnosticDataset, family: Family, kind: ResidualType) -> Result<Self, ApiError> {
        let residuals = transform(&dataset, family, kind)?;
        for w in &residuals.warnings {
            log::warn!("{w}");
        }
        Ok(Model {
            dataset,
            family,
            kind,
            residuals,
            sorted: OnceLock::new(),
            analytic: OnceLock::new(),
            sims: Mutex::new(HashMap::new()),
            sorts: AtomicUsize::new(0),
        })
    }

    /// Number of times the observed residuals have been sorted.
    pub fn sort_invocations(&self) -> usize {
        self.sorts.load(Ordering::Relaxed)
    }

    fn sorted(&self) -> Arc<Vec<f64>> {
        self.sorted
            .get_or_init(|| {
                self.sorts.fetch_add(1, Ordering::Relaxed);
                let mut r = self.residuals.values.clone();
                sort_f64(&mut r);
                Arc::new(r)
            })
            .clone()
    }

    /// Replicates for `(l, seed)`, simulated once. Concurrent callers for the
    /// same key wait on the single in-flight build.
    pub fn sims(&self, l: usize, seed: u64) -> Result<Arc<SimData>, ApiError> {
        if l == 0 || l > MAX_REPLICATES {
            return Err(ApiError::bad_param("l", format!("l must lie in 1..={MAX_REPLICATES}, got {l}")));
        }
        let slot = {
            let mut map = self.sims.lock().unwrap_or_else(|e| e.into_inner());
            map.entry((self.kind, l, seed)).or_default().clone()
        };
        slot.get_or_init(|| {
            log::info!("simulating {l} replicates of {} residuals (seed {seed})", self.kind);
            simulate_residuals(&self.dataset, self.family, self.kind, l, seed)
                .map(|sims| {
                    Arc::new(SimData {
                        sims,
                        sorted: OnceLock::new(),
                        curve: OnceLock::new(),
                    })
                })
                .map_err(ApiError::from)
        })
        .clone()
    }

    /// QQ curve for the configured residual type. Types without an analytic
    /// reference use the replicate order-statistic means of `(l, seed)`.
    pub fn curve(&self, l: usize, seed: u64) -> Result<Arc<QQCurve>, ApiError> {
        match self.residuals.reference {
            Reference::Uniform | Reference::Normal => Ok(self
                .analytic
                .get_or_init(|| {
                    let r = self.sorted();
                    Arc::new(QQCurve {
                        r_bar: analytic_positions(self.residuals.reference, r.len()),
                        r: r.to_vec(),
                        source: CurveSource::Analytic,
                    })
                })
                .clone()),
            Reference::SimulationOnly => {
                let data = self.sims(l, seed)?;
                data.curve
                    .get_or_init(|| {
                        let r_bar = replicate_means(data.sorted_rows(), self.residuals.len()).map_err(|e| ApiError::from(e).at("l"))?;
                        Ok(Arc::new(QQCurve {
                            r: self.sorted().to_vec(),
                            r_bar,
                            source: CurveSource::Simulation,
                        }))
                    })
                    .clone()
            }
        }
    }

    fn bands(&self, curve: &QQCurve, q: &QqQuery) -> Result<(Vec<Band>, Option<Envelope>), ApiError> {
        let reference = self.residuals.reference;
        match q.band {
            BandKind::None => Ok((vec![], None)),
            BandKind::Ks if reference == Reference::Uniform => Ok((vec![ks_band(curve, q.alpha)], None)),
            BandKind::Normal if reference == Reference::Normal => Ok((vec![normal_band(curve, q.alpha)], None)),
            BandKind::Envelope => {
                let data = self.sims(q.l, q.seed)?;
                let env = sim_envelope_sorted(data.sorted_rows(), q.alpha).map_err(|e| ApiError::from(e).at("l"))?;
                Ok((vec![], Some(env)))
            }
            _ => Err(ApiError::bad_param(
                "band",
                format!("band {:?} does not apply to {} residuals", q.band, self.kind),
            )),
        }
    }

    fn numeric(&self, name: &str, param: &str) -> Result<Vec<f64>, ApiError> {
        Ok(self.dataset.numeric(name).map_err(|e| ApiError::from(e).at(param))?.into_owned())
    }
}

#[derive(Serialize)]
struct QqBody<'a> {
    #[serde(rename = "type")]
    kind: ResidualType,
    n: usize,
    source: CurveSource,
    band: BandKind,
    alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    l: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    window: Option<[f64; 2]>,
    empty: bool,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    binned: Option<&'a BinnedQQ>,
}

#[derive(Serialize)]
struct MetaBody<'a> {
    session: &'a str,
    n: Option<usize>,
    family: Option<Family>,
    #[serde(rename = "type")]
    kind: Option<ResidualType>,
    reference: Option<Reference>,
    columns: Vec<ColumnInfo>,
    clip_count: usize,
    sort_invocations: usize,
    surface: Option<[usize; 2]>,
}

#[derive(Serialize)]
struct Check1dBody<'a> {
    var: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    levels: Option<&'a [String]>,
    l: usize,
    seed: u64,
    #[serde(flatten)]
    series: &'a SummarySeries,
}

#[derive(Serialize)]
struct Check2dBody<'a> {
    x1: &'a str,
    x2: &'a str,
    l: usize,
    seed: u64,
    #[serde(flatten)]
    grid: &'a HexSummaryGrid,
}

#[derive(Serialize)]
struct GlyphBody<'a> {
    x1: &'a str,
    x2: &'a str,
    kind: GlyphKind,
    #[serde(flatten)]
    grid: &'a GlyphGrid,
}

#[derive(Serialize)]
struct DensBody<'a> {
    var: &'a str,
    reference: &'static str,
    #[serde(flatten)]
    field: &'a DensityField,
}

#[derive(Serialize)]
struct EffectBody<'a> {
    mode: EffectMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    params: Option<OpacityParams>,
    #[serde(flatten)]
    surface: &'a EffectSurface,
    #[serde(skip_serializing_if = "Option::is_none")]
    opacity: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    g: Option<Vec<f64>>,
}

/// Everything a server instance or a CLI invocation works from.
pub struct Session {
    pub id: String,
    pub model: Option<Model>,
    pub surface: Option<EffectSurface>,
}

impl Session {
    pub fn new(model: Option<Model>, surface: Option<EffectSurface>) -> Self {
        let nanos = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_nanos());
        Session {
            id: format!("{:016x}", (nanos as u64) ^ std::process::id() as u64),
            model,
            surface,
        }
    }

    pub fn model(&self) -> Result<&Model, ApiError> {
        self.model
            .as_ref()
            .ok_or_else(|| ApiError::missing("no_dataset", "no dataset was loaded for this session"))
    }

    pub fn surface(&self) -> Result<&EffectSurface, ApiError> {
        self.surface
            .as_ref()
            .ok_or_else(|| ApiError::missing("no_surface", "no effect surface was loaded for this session"))
    }

    pub fn meta(&self) -> Result<Value, ApiError> {
        let m = self.model.as_ref();
        versioned(MetaBody {
            session: &self.id,
            n: m.map(|m| m.dataset.n()),
            family: m.map(|m| m.family),
            kind: m.map(|m| m.kind),
            reference: m.map(|m| m.residuals.reference),
            columns: m.map(|m| m.dataset.column_info()).unwrap_or_default(),
            clip_count: m.map_or(0, |m| m.residuals.clip_count),
            sort_invocations: m.map_or(0, Model::sort_invocations),
            surface: self.surface.as_ref().map(|s| [s.x1.len(), s.x2.len()]),
        })
    }

    pub fn qq_binned(&self, q: &QqQuery) -> Result<BinnedQQ, ApiError> {
        let m = self.model()?;
        let curve = m.curve(q.l, q.seed)?;
        let (bands, env) = m.bands(&curve, q)?;
        let mut binned = bin_qq(&curve, q.b0, &bands, env.as_ref()).map_err(|e| ApiError::from(e).at("b0"))?;
        binned.clip_count = m.residuals.clip_count;
        Ok(binned)
    }

    pub fn qq(&self, q: &QqQuery) -> Result<Value, ApiError> {
        let binned = self.qq_binned(q)?;
        self.qq_payload(q, Some(&binned), None)
    }

    /// Re-bins the cached curve over theoretical quantiles in `[lo, hi]`.
    pub fn zoom_binned(&self, q: &QqQuery, lo: f64, hi: f64) -> Result<Option<BinnedQQ>, ApiError> {
        if !(lo < hi) {
            return Err(ApiError::bad_param("hi", format!("zoom range needs lo < hi, got [{lo}, {hi}]")));
        }
        let m = self.model()?;
        let curve = m.curve(q.l, q.seed)?;
        let (bands, env) = m.bands(&curve, q)?;
        let mut binned = zoom(&curve, &bands, env.as_ref(), lo, hi, q.b0)?;
        if let Some(b) = binned.as_mut() {
            b.clip_count = m.residuals.clip_count;
        }
        Ok(binned)
    }

    pub fn zoom(&self, q: &QqQuery, lo: f64, hi: f64) -> Result<Value, ApiError> {
        let binned = self.zoom_binned(q, lo, hi)?;
        self.qq_payload(q, binned.as_ref(), Some([lo, hi]))
    }

    fn qq_payload(&self, q: &QqQuery, binned: Option<&BinnedQQ>, window: Option<[f64; 2]>) -> Result<Value, ApiError> {
        let m = self.model()?;
        let simulated = q.band == BandKind::Envelope || m.residuals.reference == Reference::SimulationOnly;
        versioned(QqBody {
            kind: m.kind,
            n: m.residuals.len(),
            source: if m.residuals.reference == Reference::SimulationOnly {
                CurveSource::Simulation
            } else {
                CurveSource::Analytic
            },
            band: q.band,
            alpha: q.alpha,
            l: simulated.then_some(q.l),
            seed: simulated.then_some(q.seed),
            window,
            empty: binned.is_none(),
            binned,
        })
    }

    pub fn check1d_series(&self, q: &Check1dQuery) -> Result<(SummarySeries, Option<Vec<String>>), ApiError> {
        let m = self.model()?;
        let view = m.dataset.column(&q.var).map_err(|e| ApiError::from(e).at("var"))?;
        // a factor gets one bin per level
        let (x, b, levels) = match view {
            ColumnView::Categorical { codes, levels } => {
                (codes.iter().map(|&c| c as f64).collect(), levels.len(), Some(levels.to_vec()))
            }
            _ => (m.numeric(&q.var, "var")?, q.b, None),
        };
        let data;
        let sims = if q.l > 0 {
            data = m.sims(q.l, q.seed)?;
            Some(data.sims.rows.as_slice())
        } else {
            None
        };
        let series = grid_check_1d(&m.residuals.values, &x, b, q.summary, sims, q.alpha)?;
        Ok((series, levels))
    }

    pub fn check1d(&self, q: &Check1dQuery) -> Result<Value, ApiError> {
        let (series, levels) = self.check1d_series(q)?;
        versioned(Check1dBody {
            var: &q.var,
            levels: levels.as_deref(),
            l: q.l,
            seed: q.seed,
            series: &series,
        })
    }

    pub fn check2d_grid(&self, q: &Check2dQuery) -> Result<HexSummaryGrid, ApiError> {
        let m = self.model()?;
        let x1 = m.numeric(&q.x1, "x1")?;
        let x2 = m.numeric(&q.x2, "x2")?;
        let lattice = Lattice::fit(&x1, &x2, q.hexes).map_err(|e| ApiError::from(e).at("hexes"))?;
        let data = m.sims(q.l, q.seed)?;
        Ok(grid_check_2d(&m.residuals.values, &x1, &x2, &lattice, q.summary, &data.sims.rows).map_err(|e| ApiError::from(e).at("l"))?)
    }

    pub fn check2d(&self, q: &Check2dQuery) -> Result<Value, ApiError> {
        let grid = self.check2d_grid(q)?;
        versioned(Check2dBody {
            x1: &q.x1,
            x2: &q.x2,
            l: q.l,
            seed: q.seed,
            grid: &grid,
        })
    }

    pub fn glyph_grid(&self, q: &GlyphQuery) -> Result<GlyphGrid, ApiError> {
        let m = self.model()?;
        let x1 = m.numeric(&q.x1, "x1")?;
        let x2 = m.numeric(&q.x2, "x2")?;
        let cells = Cells::fit(&x1, &x2, q.cells.0, q.cells.1).map_err(|e| ApiError::from(e).at("cells"))?;
        Ok(match q.kind {
            GlyphKind::Worm => worm_glyphs(&m.residuals, &x1, &x2, &cells, q.alpha).map_err(|e| ApiError::from(e).at("kind"))?,
            GlyphKind::Kde => kde_glyphs(&m.residuals.values, &x1, &x2, &cells, q.knots, None)?,
        })
    }

    pub fn glyphs(&self, q: &GlyphQuery) -> Result<Value, ApiError> {
        let grid = self.glyph_grid(q)?;
        versioned(GlyphBody {
            x1: &q.x1,
            x2: &q.x2,
            kind: q.kind,
            grid: &grid,
        })
    }

    pub fn dens_field(&self, q: &DensQuery) -> Result<(DensityField, &'static str), ApiError> {
        let m = self.model()?;
        let x = m.numeric(&q.var, "var")?;
        let cfg = DensCheckConfig {
            gx: q.gx,
            gr: q.gr,
            hx: q.hx,
            hr: q.hr,
            ..DensCheckConfig::default()
        };
        let r = &m.residuals.values;
        match m.residuals.reference {
            reference @ (Reference::Uniform | Reference::Normal) => {
                Ok((dens_check(r, &x, ModelRef::Analytic(reference), &cfg)?, "analytic"))
            }
            Reference::SimulationOnly => {
                let data = m.sims(q.l, q.seed)?;
                Ok((dens_check(r, &x, ModelRef::Simulated(&data.sims.rows), &cfg)?, "simulated"))
            }
        }
    }

    pub fn denscheck(&self, q: &DensQuery) -> Result<Value, ApiError> {
        let (field, reference) = self.dens_field(q)?;
        versioned(DensBody {
            var: &q.var,
            reference,
            field: &field,
        })
    }

    pub fn effect(&self, q: &EffectQuery) -> Result<Value, ApiError> {
        let surface = self.surface()?;
        let (opacity, g) = self.effect_layers(q)?;
        versioned(EffectBody {
            mode: q.mode,
            seed: (q.mode == EffectMode::Perturb).then_some(q.seed),
            params: (q.mode == EffectMode::Opacity).then_some(q.params),
            surface,
            opacity,
            g,
        })
    }

    /// Opacity field or perturbed surface, depending on the mode.
    pub fn effect_layers(&self, q: &EffectQuery) -> Result<(Option<Vec<f64>>, Option<Vec<f64>>), ApiError> {
        let surface = self.surface()?;
        Ok(match q.mode {
            EffectMode::Plain => (None, None),
            EffectMode::Opacity => (Some(opacity_field(surface, &q.params)?), None),
            EffectMode::Perturb => (None, Some(perturb_field(surface, q.seed)?)),
        })
    }
}
