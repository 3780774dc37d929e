use std::time::Instant;

use serde::Serialize;

use crate::imgcore::GrayImage;
use crate::nnexec::{prepare, yolo_decode, DetectOptions, Detector};

use super::EvalError;

pub const MIN_ITERATIONS: usize = 10;

/// Timing of one model on one execution path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub model: String,
    pub path: String,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub iterations: usize,
    pub warmup: usize,
}

/// Times forward pass plus head decoding per image, cycling through
/// `images`. Letterboxing happens outside the timed region; the whole run is
/// single-threaded.
pub fn bench_inference(
    model_name: &str,
    model: &dyn Detector,
    images: &[GrayImage],
    warmup: usize,
    iters: usize,
) -> Result<BenchRow, EvalError> {
    if images.is_empty() {
        return Err(EvalError::Bench("no images".into()));
    }
    if iters < MIN_ITERATIONS {
        return Err(EvalError::Bench(format!("need at least {MIN_ITERATIONS} timed iterations, got {iters}")));
    }
    let prepared = images
        .iter()
        .map(|img| prepare(img, model.input_shape()))
        .collect::<Result<Vec<_>, _>>()?;
    let opts = DetectOptions::default();
    let run = |k: usize| -> Result<f64, EvalError> {
        let (tensor, transform) = &prepared[k % prepared.len()];
        let start = Instant::now();
        let mut n = 0usize;
        for head in model.heads(tensor)? {
            n += yolo_decode(&head.tensor, &head.config, transform, opts.conf_threshold).len();
        }
        let ms = start.elapsed().as_secs_f64() * 1e3;
        std::hint::black_box(n);
        Ok(ms)
    };
    for k in 0..warmup {
        run(k)?;
    }
    let times = (0..iters).map(|k| run(warmup + k)).collect::<Result<Vec<_>, _>>()?;
    let mean = times.iter().sum::<f64>() / iters as f64;
    let var = times.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / iters as f64;
    Ok(BenchRow {
        model: model_name.to_string(),
        path: model.name().to_string(),
        mean_ms: mean.max(f64::MIN_POSITIVE),
        std_ms: var.sqrt(),
        iterations: iters,
        warmup,
    })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    /// `mean(slow) / mean(fast)` for the first rows matching each model name.
    pub fn speedup(&self, fast: &str, slow: &str) -> Option<f64> {
        let find = |m: &str| self.rows.iter().find(|r| r.model == m).map(|r| r.mean_ms);
        Some(find(slow)? / find(fast)?)
    }

    /// Aligned table in the layout of a per-platform timing comparison, plus a
    /// ratio line relative to the fastest row when there are several models.
    pub fn to_table(&self) -> String {
        let mw = self.rows.iter().map(|r| r.model.len()).max().unwrap_or(5).max(5);
        let mut out = format!("{:<mw$}  {:<7}  {:>12}  {:>10}  {:>6}\n", "model", "path", "mean (ms)", "std (ms)", "iters");
        for r in &self.rows {
            out.push_str(&format!(
                "{:<mw$}  {:<7}  {:>12.2}  {:>10.2}  {:>6}\n",
                r.model, r.path, r.mean_ms, r.std_ms, r.iterations
            ));
        }
        if let Some(fastest) = self.rows.iter().min_by(|a, b| a.mean_ms.total_cmp(&b.mean_ms)) {
            for r in self.rows.iter().filter(|r| r.model != fastest.model || r.path != fastest.path) {
                out.push_str(&format!(
                    "ratio {}/{} vs {}/{}: {:.2}x\n",
                    r.model,
                    r.path,
                    fastest.model,
                    fastest.path,
                    r.mean_ms / fastest.mean_ms
                ));
            }
        }
        out
    }
}
