//! Paired bootstrap over sentences, per-label McNemar tests and
//! Benjamini-Hochberg control, plus the `+ / 0 / –` significance layout.

use std::collections::HashMap;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{check_aligned, Keyed, LabelMatrix};
use crate::metrics::{macro_f1_from_counts, Confusion, ZeroDivision};

pub const DEFAULT_RESAMPLES: usize = 2000;
pub const DEFAULT_CONFIDENCE: f64 = 0.95;
pub const DEFAULT_ALPHA: f64 = 0.05;
/// Discordant-pair count below which McNemar uses the exact binomial test.
pub const EXACT_CUTOFF: u64 = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub seed: u64,
    pub confidence: f64,
    /// Worker threads; 0 uses the rayon default.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub zero_division: ZeroDivision,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: DEFAULT_RESAMPLES,
            seed: 0,
            confidence: DEFAULT_CONFIDENCE,
            workers: 0,
            zero_division: ZeroDivision::Zero,
        }
    }
}

impl BootstrapConfig {
    pub fn new(resamples: usize, seed: u64) -> Self {
        Self {
            resamples,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resamples == 0 {
            return Err(Error::InvalidConfig("bootstrap needs at least one resample".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "confidence {} outside (0, 1)",
                self.confidence
            )));
        }
        Ok(())
    }

    /// 1-based rank of the order statistic used as the lower bound.
    pub fn lower_rank(&self) -> usize {
        let k = ((1.0 - self.confidence) * self.resamples as f64 - 1e-9).ceil();
        (k.max(1.0) as usize).min(self.resamples)
    }
}

/// Row indices of resample `b`. Each resample has its own ChaCha stream,
/// so the draw depends only on `(seed, b, n)`.
pub fn resample_indices(seed: u64, b: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b as u64);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Rows collapsed to distinct `(gold, a, b)` patterns across all labels.
struct Compressed {
    row_sig: Vec<u32>,
    /// Per signature, per label, a 3-bit code: gold | a << 1 | b << 2.
    codes: Vec<Vec<u8>>,
}

impl Compressed {
    fn new(gold: &LabelMatrix, a: &LabelMatrix, b: &LabelMatrix) -> Self {
        let mut index: HashMap<Vec<u8>, u32> = HashMap::new();
        let mut codes = Vec::new();
        let mut row_sig = Vec::with_capacity(gold.n_rows());
        for r in 0..gold.n_rows() {
            let sig: Vec<u8> = (0..gold.n_labels())
                .map(|k| gold.get(r, k) as u8 | (a.get(r, k) as u8) << 1 | (b.get(r, k) as u8) << 2)
                .collect();
            let id = *index.entry(sig.clone()).or_insert_with(|| {
                codes.push(sig);
                (codes.len() - 1) as u32
            });
            row_sig.push(id);
        }
        Self { row_sig, codes }
    }

    fn macro_pair(&self, weights: &[u64], n_labels: usize, zd: ZeroDivision) -> (f64, f64) {
        let mut ca = vec![Confusion::default(); n_labels];
        let mut cb = vec![Confusion::default(); n_labels];
        for (sig, &w) in self.codes.iter().zip(weights) {
            if w == 0 {
                continue;
            }
            for (k, &code) in sig.iter().enumerate() {
                let g = code & 1 != 0;
                ca[k].add_weighted(g, code & 2 != 0, w);
                cb[k].add_weighted(g, code & 4 != 0, w);
            }
        }
        (macro_f1_from_counts(&ca, zd), macro_f1_from_counts(&cb, zd))
    }

    fn weights_for(&self, indices: &[usize]) -> Vec<u64> {
        let mut w = vec![0u64; self.codes.len()];
        for &i in indices {
            w[self.row_sig[i] as usize] += 1;
        }
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOutcome {
    pub delta_point: f64,
    pub lower_bound: f64,
    pub p_value: f64,
    /// `Δ_b` in resample order.
    #[serde(skip)]
    pub deltas: Vec<f64>,
}

fn check_inputs(gold: &LabelMatrix, a: &LabelMatrix, b: &LabelMatrix) -> Result<()> {
    check_aligned(gold, a)?;
    check_aligned(gold, b)?;
    if gold.n_rows() == 0 {
        return Err(Error::ShapeMismatch("bootstrap over zero sentences".into()));
    }
    Ok(())
}

fn run_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(job());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(job))
}

/// Paired bootstrap of `Macro-F1(b) - Macro-F1(a)`. Both systems are
/// scored on the same resampled rows.
pub fn paired_bootstrap(
    gold: &LabelMatrix,
    pred_a: &LabelMatrix,
    pred_b: &LabelMatrix,
    cfg: &BootstrapConfig,
) -> Result<BootstrapOutcome> {
    cfg.validate()?;
    check_inputs(gold, pred_a, pred_b)?;
    let n = gold.n_rows();
    let k = gold.n_labels();
    let comp = Compressed::new(gold, pred_a, pred_b);
    let full = comp.weights_for(&(0..n).collect::<Vec<_>>());
    let (fa, fb) = comp.macro_pair(&full, k, cfg.zero_division);
    let delta_point = fb - fa;

    let deltas: Vec<f64> = run_pool(cfg.workers, || {
        (0..cfg.resamples)
            .into_par_iter()
            .map(|b| {
                let idx = resample_indices(cfg.seed, b, n);
                let (ra, rb) = comp.macro_pair(&comp.weights_for(&idx), k, cfg.zero_division);
                rb - ra
            })
            .collect()
    })?;

    let mut sorted = deltas.clone();
    sorted.sort_by(f64::total_cmp);
    let lower_bound = sorted[cfg.lower_rank() - 1];
    let nonpositive = deltas.iter().filter(|&&d| d <= 0.0).count();
    let p_value = (1 + nonpositive) as f64 / (cfg.resamples + 1) as f64;
    Ok(BootstrapOutcome {
        delta_point,
        lower_bound,
        p_value,
        deltas,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum McNemarMethod {
    Exact,
    ChiSquare,
    NoDiscordantPairs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemar {
    /// A correct, B wrong.
    pub b: u64,
    /// A wrong, B correct.
    pub c: u64,
    /// Continuity-corrected chi-square statistic (reported for both branches).
    pub statistic: f64,
    pub p_value: f64,
    pub method: McNemarMethod,
}

pub fn mcnemar_exact_p(b: u64, c: u64) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    let ln_half = n as f64 * 0.5f64.ln();
    let tail: f64 = (0..=b.min(c))
        .map(|i| (statrs::function::factorial::ln_binomial(n, i) + ln_half).exp())
        .sum();
    (2.0 * tail).min(1.0)
}

pub fn mcnemar_chi2(b: u64, c: u64) -> (f64, f64) {
    let n = b + c;
    if n == 0 {
        return (0.0, 1.0);
    }
    let diff = (b.abs_diff(c) as f64 - 1.0).max(0.0);
    let x = diff * diff / n as f64;
    (x, statrs::function::erf::erfc((x / 2.0).sqrt()))
}

pub fn mcnemar(b: u64, c: u64) -> McNemar {
    let (statistic, chi_p) = mcnemar_chi2(b, c);
    let (p_value, method) = if b + c == 0 {
        (1.0, McNemarMethod::NoDiscordantPairs)
    } else if b + c < EXACT_CUTOFF {
        (mcnemar_exact_p(b, c), McNemarMethod::Exact)
    } else {
        (chi_p, McNemarMethod::ChiSquare)
    };
    McNemar {
        b,
        c,
        statistic,
        p_value,
        method,
    }
}

pub fn mcnemar_per_label(
    gold: &LabelMatrix,
    pred_a: &LabelMatrix,
    pred_b: &LabelMatrix,
) -> Result<IndexMap<String, McNemar>> {
    check_aligned(gold, pred_a)?;
    check_aligned(gold, pred_b)?;
    let mut out = IndexMap::new();
    for (k, label) in gold.labels().iter().enumerate() {
        let (mut b, mut c) = (0u64, 0u64);
        for r in 0..gold.n_rows() {
            let g = gold.get(r, k);
            match (pred_a.get(r, k) == g, pred_b.get(r, k) == g) {
                (true, false) => b += 1,
                (false, true) => c += 1,
                _ => {}
            }
        }
        out.insert(label.clone(), mcnemar(b, c));
    }
    Ok(out)
}

fn ascending_order(p: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&i, &j| p[i].total_cmp(&p[j]).then(i.cmp(&j)));
    order
}

/// Benjamini-Hochberg step-up rejections, in input order.
pub fn bh_reject(p: &[f64], alpha: f64) -> Vec<bool> {
    let m = p.len();
    let order = ascending_order(p);
    let k = order
        .iter()
        .enumerate()
        .rev()
        .find(|(rank, &i)| p[i] <= (rank + 1) as f64 * alpha / m as f64)
        .map(|(rank, _)| rank + 1)
        .unwrap_or(0);
    let mut out = vec![false; m];
    for &i in &order[..k] {
        out[i] = true;
    }
    out
}

/// BH-adjusted q-values, in input order.
pub fn bh_adjust(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let order = ascending_order(p);
    let mut q = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        running = running.min(p[i] * m as f64 / (rank + 1) as f64);
        q[i] = running;
    }
    q
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelTest {
    #[serde(flatten)]
    pub mcnemar: McNemar,
    pub q_value: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub delta_point: f64,
    pub lower_bound: f64,
    pub p_value: f64,
    pub resamples: usize,
    pub seed: u64,
    pub confidence: f64,
    pub alpha: f64,
    pub lower_bound_method: String,
    pub p_value_definition: String,
    pub per_label: IndexMap<String, LabelTest>,
}

impl SignificanceReport {
    pub fn compare(
        gold: &LabelMatrix,
        pred_a: &LabelMatrix,
        pred_b: &LabelMatrix,
        cfg: &BootstrapConfig,
        alpha: f64,
    ) -> Result<Self> {
        let boot = paired_bootstrap(gold, pred_a, pred_b, cfg)?;
        let tests = mcnemar_per_label(gold, pred_a, pred_b)?;
        let ps: Vec<f64> = tests.values().map(|t| t.p_value).collect();
        let reject = bh_reject(&ps, alpha);
        let q = bh_adjust(&ps);
        let per_label = tests
            .into_iter()
            .enumerate()
            .map(|(i, (label, mcnemar))| {
                (
                    label,
                    LabelTest {
                        mcnemar,
                        q_value: q[i],
                        reject: reject[i],
                    },
                )
            })
            .collect();
        Ok(Self {
            delta_point: boot.delta_point,
            lower_bound: boot.lower_bound,
            p_value: boot.p_value,
            resamples: cfg.resamples,
            seed: cfg.seed,
            confidence: cfg.confidence,
            alpha,
            lower_bound_method: format!("percentile, order statistic {} of {}", cfg.lower_rank(), cfg.resamples),
            p_value_definition: "(1 + #{delta_b <= 0}) / (B + 1)".into(),
            per_label,
        })
    }

    pub fn cell(&self) -> SigCell {
        SigCell::Tested {
            lower_bound: self.lower_bound,
            p_value: self.p_value,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigCell {
    Tested { lower_bound: f64, p_value: f64 },
    Untested,
}

impl SigCell {
    pub fn symbol(&self) -> &'static str {
        match *self {
            SigCell::Tested { lower_bound, p_value } if lower_bound > 0.0 && p_value <= DEFAULT_ALPHA => "+",
            SigCell::Tested { .. } => "0",
            SigCell::Untested => "–",
        }
    }

    pub fn render(&self) -> String {
        match self {
            SigCell::Tested { lower_bound, .. } => format!("{lower_bound:.3}; {}", self.symbol()),
            SigCell::Untested => self.symbol().to_string(),
        }
    }
}

/// Row-labelled grid of significance cells.
#[derive(Debug, Clone, Default)]
pub struct SignificanceTable {
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<SigCell>)>,
}

impl SignificanceTable {
    pub fn new(columns: Vec<String>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, cells: Vec<SigCell>) -> Result<()> {
        if cells.len() != self.columns.len() {
            return Err(Error::ShapeMismatch(format!(
                "row has {} cells, table has {} columns",
                cells.len(),
                self.columns.len()
            )));
        }
        self.rows.push((name.into(), cells));
        Ok(())
    }

    pub fn render(&self) -> String {
        let rendered: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|(_, cells)| cells.iter().map(SigCell::render).collect())
            .collect();
        let name_w = self
            .rows
            .iter()
            .map(|(n, _)| n.chars().count())
            .max()
            .unwrap_or(0)
            .max(5);
        let widths: Vec<usize> = self
            .columns
            .iter()
            .enumerate()
            .map(|(j, c)| {
                rendered
                    .iter()
                    .map(|r| r[j].chars().count())
                    .chain([c.chars().count()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let pad = |s: &str, w: usize| format!("{s}{}", " ".repeat(w.saturating_sub(s.chars().count())));
        let mut out = pad("", name_w);
        for (c, &w) in self.columns.iter().zip(&widths) {
            out.push_str("  ");
            out.push_str(&pad(c, w));
        }
        out = out.trim_end().to_string();
        out.push('\n');
        for ((name, _), cells) in self.rows.iter().zip(&rendered) {
            let mut line = pad(name, name_w);
            for (cell, &w) in cells.iter().zip(&widths) {
                line.push_str("  ");
                line.push_str(&pad(cell, w));
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }
}
