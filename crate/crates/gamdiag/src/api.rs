//! Read-only JSON endpoints over a shared [`Session`].

use std::collections::HashMap;
use std::fmt::Display;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use gamdiag_core::effect::OpacityParams;
use gamdiag_core::grid::{Summary, DEFAULT_HEXES};
use serde_json::Value;

use crate::error::{ApiError, Status};
use crate::session::{
    BandKind, CellCount, Check1dQuery, Check2dQuery, DensQuery, EffectMode, EffectQuery, GlyphKind, GlyphQuery,
    QqQuery, Session, MAX_REPLICATES,
};

pub const DEFAULT_SIM_TIMEOUT: Duration = Duration::from_secs(30);
const MAX_GRID: usize = 2048;

#[derive(Clone)]
pub struct AppState {
    pub session: Arc<Session>,
    /// How long a request may wait on a computation before answering 503.
    pub timeout: Duration,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self.status {
            Status::BadRequest => StatusCode::BAD_REQUEST,
            Status::NotFound => StatusCode::NOT_FOUND,
            Status::Busy => StatusCode::SERVICE_UNAVAILABLE,
            Status::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let retry = self.status == Status::Busy;
        let mut resp = (status, Json(self)).into_response();
        if retry {
            resp.headers_mut().insert(header::RETRY_AFTER, header::HeaderValue::from_static("1"));
        }
        resp
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/meta", get(meta))
        .route("/api/qq", get(qq))
        .route("/api/qq/zoom", get(qq_zoom))
        .route("/api/check1d", get(check1d))
        .route("/api/check2d", get(check2d))
        .route("/api/glyphs", get(glyphs))
        .route("/api/denscheck", get(denscheck))
        .route("/api/effect", get(effect))
        .with_state(state)
}

/// Typed access to query parameters with errors naming the parameter.
struct Params(HashMap<String, String>);

impl Params {
    fn opt<T: FromStr>(&self, name: &str) -> Result<Option<T>, ApiError>
    where
        T::Err: Display,
    {
        self.0
            .get(name)
            .map(|raw| {
                raw.parse::<T>()
                    .map_err(|e| ApiError::bad_param(name, format!("cannot parse `{raw}`: {e}")))
            })
            .transpose()
    }

    fn get<T: FromStr>(&self, name: &str, default: T) -> Result<T, ApiError>
    where
        T::Err: Display,
    {
        Ok(self.opt(name)?.unwrap_or(default))
    }

    fn required<T: FromStr>(&self, name: &str) -> Result<T, ApiError>
    where
        T::Err: Display,
    {
        self.opt(name)?
            .ok_or_else(|| ApiError::bad_param(name, format!("missing required parameter `{name}`")))
    }

    fn count(&self, name: &str, default: usize, lo: usize, hi: usize) -> Result<usize, ApiError> {
        let v = self.get(name, default)?;
        if (lo..=hi).contains(&v) {
            Ok(v)
        } else {
            Err(ApiError::bad_param(name, format!("{name} must lie in {lo}..={hi}, got {v}")))
        }
    }

    fn level(&self, name: &str, default: f64) -> Result<f64, ApiError> {
        let v = self.get(name, default)?;
        if v > 0.0 && v < 1.0 {
            Ok(v)
        } else {
            Err(ApiError::bad_param(name, format!("{name} must lie in (0, 1), got {v}")))
        }
    }

    fn qq(&self) -> Result<QqQuery, ApiError> {
        let d = QqQuery::default();
        Ok(QqQuery {
            b0: self.count("b0", d.b0, 1, 1_000_000)?,
            band: self.get::<BandKind>("band", d.band)?,
            alpha: self.level("alpha", d.alpha)?,
            l: self.count("l", d.l, 2, MAX_REPLICATES)?,
            seed: self.get("seed", d.seed)?,
        })
    }
}

/// Runs `f` off the async workers; answers 503 if it outlives the timeout.
/// The computation keeps running so its caches fill for the retry.
async fn compute<F>(state: AppState, f: F) -> Response
where
    F: FnOnce(&Session) -> Result<Value, ApiError> + Send + 'static,
{
    let session = state.session.clone();
    let task = tokio::task::spawn_blocking(move || f(&session));
    match tokio::time::timeout(state.timeout, task).await {
        Ok(Ok(Ok(v))) => Json(v).into_response(),
        Ok(Ok(Err(e))) => e.into_response(),
        Ok(Err(join)) => ApiError::internal(format!("request handler failed: {join}")).into_response(),
        Err(_) => ApiError::busy(format!(
            "computation still in flight after {} ms; retry shortly",
            state.timeout.as_millis()
        ))
        .into_response(),
    }
}

async fn with_params<F>(state: AppState, query: HashMap<String, String>, f: F) -> Response
where
    F: FnOnce(&Params, &Session) -> Result<Value, ApiError> + Send + 'static,
{
    compute(state, move |s| f(&Params(query), s)).await
}

async fn meta(State(state): State<AppState>) -> Response {
    compute(state, |s| s.meta()).await
}

async fn qq(State(state): State<AppState>, Query(q): Query<HashMap<String, String>>) -> Response {
    with_params(state, q, |p, s| s.qq(&p.qq()?)).await
}

async fn qq_zoom(State(state): State<AppState>, Query(q): Query<HashMap<String, String>>) -> Response {
    with_params(state, q, |p, s| {
        let lo: f64 = p.required("lo")?;
        let hi: f64 = p.required("hi")?;
        s.zoom(&p.qq()?, lo, hi)
    })
    .await
}

async fn check1d(State(state): State<AppState>, Query(q): Query<HashMap<String, String>>) -> Response {
    with_params(state, q, |p, s| {
        s.check1d(&Check1dQuery {
            var: p.required("var")?,
            b: p.count("b", 20, 1, 10_000)?,
            summary: p.get("summary", Summary::Mean)?,
            l: p.count("l", 0, 0, MAX_REPLICATES)?,
            alpha: p.level("alpha", 0.9)?,
            seed: p.get("seed", 1)?,
        })
    })
    .await
}

async fn check2d(State(state): State<AppState>, Query(q): Query<HashMap<String, String>>) -> Response {
    with_params(state, q, |p, s| {
        s.check2d(&Check2dQuery {
            x1: p.required("x1")?,
            x2: p.required("x2")?,
            summary: p.get("summary", Summary::Sd)?,
            l: p.count("l", 50, 2, MAX_REPLICATES)?,
            seed: p.get("seed", 1)?,
            hexes: p.count("hexes", DEFAULT_HEXES, 1, 1000)?,
        })
    })
    .await
}

async fn glyphs(State(state): State<AppState>, Query(q): Query<HashMap<String, String>>) -> Response {
    with_params(state, q, |p, s| {
        let cells: CellCount = p.get("cells", CellCount(6, 6))?;
        if !(1..=100).contains(&cells.0) || !(1..=100).contains(&cells.1) {
            return Err(ApiError::bad_param("cells", format!("cell counts must lie in 1..=100, got {cells}")));
        }
        s.glyphs(&GlyphQuery {
            x1: p.required("x1")?,
            x2: p.required("x2")?,
            kind: p.get("kind", GlyphKind::Worm)?,
            cells,
            alpha: p.level("alpha", 0.95)?,
            knots: p.count("knots", 64, 2, MAX_GRID)?,
        })
    })
    .await
}

async fn denscheck(State(state): State<AppState>, Query(q): Query<HashMap<String, String>>) -> Response {
    with_params(state, q, |p, s| {
        s.denscheck(&DensQuery {
            var: p.required("var")?,
            gx: p.count("gx", 128, 2, MAX_GRID)?,
            gr: p.count("gr", 128, 2, MAX_GRID)?,
            hx: p.opt("hx")?,
            hr: p.opt("hr")?,
            l: p.count("l", 20, 1, MAX_REPLICATES)?,
            seed: p.get("seed", 1)?,
        })
    })
    .await
}

async fn effect(State(state): State<AppState>, Query(q): Query<HashMap<String, String>>) -> Response {
    with_params(state, q, |p, s| {
        let d = OpacityParams::default();
        let params = OpacityParams {
            delta: p.get("delta", d.delta)?,
            gamma: p.get("gamma", d.gamma)?,
            beta: p.get("beta", d.beta)?,
        };
        for (name, value) in [("delta", params.delta), ("gamma", params.gamma), ("beta", params.beta)] {
            let probe = match name {
                "delta" => OpacityParams { delta: value, ..d },
                "gamma" => OpacityParams { gamma: value, ..d },
                _ => OpacityParams { beta: value, ..d },
            };
            probe.validate().map_err(|e| ApiError::from(e).at(name))?;
        }
        s.effect(&EffectQuery {
            mode: p.get("mode", EffectMode::Opacity)?,
            seed: p.get("seed", 1)?,
            params,
        })
    })
    .await
}
