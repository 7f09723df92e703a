//! JS bindings for the browser demo. Three interactive surfaces:
//!
//! - [`MatrixDemo`] — train live on the two-agent matrix game and watch
//!   the per-agent utilities and the greedy joint action move;
//! - [`GridDemo`] — step the two-role gridworld and render ASCII frames;
//! - [`ratio_curve_json`] / [`priority_table_json`] — preview the
//!   selection-ratio schedule and the priority/importance weighting.
//!
//! All methods return JSON strings; the page parses them with
//! `JSON.parse`. The heavy lifting lives in [`demo`], which is plain Rust
//! and carries the unit tests.

pub mod demo;

use wasm_bindgen::prelude::*;

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, JsError> {
    serde_json::to_string(value).map_err(|e| JsError::new(&e.to_string()))
}

fn js_err(message: String) -> JsError {
    JsError::new(&message)
}

/// Live trainer on the two-agent matrix game.
#[wasm_bindgen]
pub struct MatrixDemo {
    inner: demo::MatrixTrainer,
}

#[wasm_bindgen]
impl MatrixDemo {
    /// `mode` is one of `joint-baseline`, `divide-only`, `der`, or
    /// `der-eta=X` with X in (0, 1].
    #[wasm_bindgen(constructor)]
    pub fn new(mode: &str, seed: u32) -> Result<MatrixDemo, JsError> {
        demo::MatrixTrainer::new(mode, seed as u64)
            .map(|inner| MatrixDemo { inner })
            .map_err(js_err)
    }

    /// Run up to `episodes` training episodes and return the snapshot as
    /// JSON.
    pub fn step(&mut self, episodes: u32) -> Result<String, JsError> {
        let snap = self.inner.step(episodes).map_err(js_err)?;
        to_json(&snap)
    }

    /// Current snapshot as JSON, without training.
    pub fn snapshot(&self) -> Result<String, JsError> {
        let snap = self.inner.snapshot().map_err(js_err)?;
        to_json(&snap)
    }
}

/// ε-greedy rollout stepper on the two-role gridworld.
#[wasm_bindgen]
pub struct GridDemo {
    inner: demo::GridRollout,
}

#[wasm_bindgen]
impl GridDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, epsilon: f64) -> Result<GridDemo, JsError> {
        demo::GridRollout::new(seed as u64, epsilon)
            .map(|inner| GridDemo { inner })
            .map_err(js_err)
    }

    pub fn set_epsilon(&mut self, epsilon: f64) -> Result<(), JsError> {
        self.inner.set_epsilon(epsilon).map_err(js_err)
    }

    /// Start a fresh episode and return its first frame as JSON.
    pub fn reset(&mut self) -> Result<String, JsError> {
        self.inner.reset();
        to_json(&self.inner.current_frame())
    }

    /// Advance one step (auto-resetting after a finished episode) and
    /// return the frame as JSON.
    pub fn step(&mut self) -> Result<String, JsError> {
        let frame = self.inner.step().map_err(js_err)?;
        to_json(&frame)
    }

    /// The current frame as JSON, without stepping.
    pub fn frame(&self) -> Result<String, JsError> {
        to_json(&self.inner.current_frame())
    }
}

/// Sample the selection-ratio warm-up schedule; returns
/// `{"t": [...], "eta": [...]}` as JSON.
#[wasm_bindgen]
pub fn ratio_curve_json(
    eta_start: f64,
    eta_end: f64,
    proportion: f64,
    t_max: u32,
    points: usize,
) -> Result<String, JsError> {
    let curve =
        demo::ratio_curve(eta_start, eta_end, proportion, t_max as u64, points).map_err(js_err)?;
    to_json(&curve)
}

/// Priority probabilities and importance weights for a set of TD-errors;
/// returns a JSON array of `{"td_error", "probability", "weight"}` rows.
#[wasm_bindgen]
pub fn priority_table_json(
    td_errors: Vec<f64>,
    alpha: f64,
    eps: f64,
    beta: f64,
) -> Result<String, JsError> {
    let rows = demo::priority_table(&td_errors, alpha, eps, beta).map_err(js_err)?;
    to_json(&rows)
}
