use std::path::{Path, PathBuf};

use clap::Args;
use serde_json::{json, Value};
use valuegate::calibration::{
    apply_thresholds, tune_label_thresholds, tune_stagewise, ThresholdPolicy, ThresholdVector,
};
use valuegate::dataset::{
    align, format_float, prevalence_table, read_gold, read_labels, read_manifests, read_scores, reorder, write_atomic,
    write_labels, ColumnRemap, Format, Split,
};
use valuegate::ensembling::{forward_select, EnsembleMode, Member, ModelPool, SelectionConfig};
use valuegate::gating::{run_cascade, GateAssignment, HierarchySpec, ScoreBundle, Variant};
use valuegate::label_space::{binarize_annotations, bipolar_pairs, derive_ho, derive_presence, BinarizeRule, HO_NAMES};
use valuegate::llm_adapter::{derive_llm_ho, parse_generations, read_generations};
use valuegate::metrics::{bipolar_f1, in_gate_eval, per_label_f1, ZeroDivision};
use valuegate::stats::{BootstrapConfig, SignificanceReport, SignificanceTable, DEFAULT_ALPHA, DEFAULT_RESAMPLES};
use valuegate::synthetic::{error_compounding_report, generate, render_report};
use valuegate::{Error, HoMapping, Keyed, LabelMatrix, LabelSpace, Result, ScoreMatrix};

use crate::config::{MemberEntry, MemberKind, RunConfig};
use crate::manifest::Recorder;

/// Per-run state shared by all commands.
pub struct Ctx {
    pub cfg: RunConfig,
    pub out_dir: PathBuf,
    pub format: Format,
    pub seed: u64,
    /// Whether `seed` came from a flag or the config rather than the default.
    pub seed_explicit: bool,
    pub zd: ZeroDivision,
    pub mapping: HoMapping,
    pub rec: Recorder,
    pub effective: serde_json::Map<String, Value>,
}

/// What a command prints: `text` normally, `json` under `--json`.
pub struct Outcome {
    pub text: String,
    pub json: Value,
}

impl Ctx {
    fn set(&mut self, key: &str, value: impl serde::Serialize) {
        self.effective
            .insert(key.into(), serde_json::to_value(value).expect("setting serializes"));
    }

    fn out(&mut self, stem: &str) -> PathBuf {
        let p = self.out_dir.join(format!("{stem}.{}", self.format.extension()));
        self.rec.output(p.clone());
        p
    }

    fn out_file(&mut self, name: &str) -> PathBuf {
        let p = self.out_dir.join(name);
        self.rec.output(p.clone());
        p
    }

    fn write_json(&mut self, name: &str, value: &impl serde::Serialize) -> Result<PathBuf> {
        let p = self.out_file(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        write_atomic(&p, text.as_bytes())?;
        Ok(p)
    }

    /// Gold annotations binarized into the 19-value space.
    fn gold_values(
        &mut self,
        path: &Path,
        binarize: Option<BinarizeRule>,
        remap: Option<&Path>,
    ) -> Result<LabelMatrix> {
        let rule = binarize.or(self.cfg.gold.binarize).unwrap_or_default();
        let remap_path = remap.map(Path::to_path_buf).or_else(|| self.cfg.gold.remap.clone());
        let remap = match &remap_path {
            Some(p) => {
                self.rec.input(p);
                ColumnRemap::from_tsv_path(p)?
            }
            None => ColumnRemap::default(),
        };
        self.set("binarize", rule);
        self.rec.input(path);
        binarize_annotations(&read_gold(path, input_format(path), &remap)?, rule)
    }

    fn gold_space(&mut self, path: &Path, space: LabelSpace) -> Result<LabelMatrix> {
        let values = self.gold_values(path, None, None)?;
        project(&values, space, &self.mapping)
    }

    fn scores(&mut self, path: &Path, labels: &[String]) -> Result<ScoreMatrix> {
        self.rec.input(path);
        read_scores(path, labels, input_format(path))
    }

    fn labels(&mut self, path: &Path, labels: &[String]) -> Result<LabelMatrix> {
        self.rec.input(path);
        read_labels(path, labels, input_format(path))
    }

    fn thresholds(&mut self, path: &Path) -> Result<ThresholdVector> {
        self.rec.input(path);
        ThresholdVector::from_path(path)
    }

    fn policy(&mut self, split: Option<Split>, floor: Option<f64>, step: Option<f64>) -> ThresholdPolicy {
        let c = &self.cfg.calibration;
        let split = split.or(c.split).unwrap_or(Split::Validation);
        let mut policy = ThresholdPolicy::constrained(split);
        if let Some(f) = floor.or(c.precision_floor) {
            policy = policy.with_precision_floor(f);
        }
        if let Some(s) = step.or(c.grid_step) {
            policy.grid_step = s;
        }
        self.set("threshold_policy", &policy);
        policy
    }

    fn bootstrap(&mut self, b: &BootstrapFlags) -> Result<(BootstrapConfig, f64)> {
        let c = &self.cfg.bootstrap;
        let mut cfg = BootstrapConfig::new(b.resamples.or(c.resamples).unwrap_or(DEFAULT_RESAMPLES), self.seed);
        cfg.confidence = b.confidence.or(c.confidence).unwrap_or(cfg.confidence);
        cfg.workers = b.workers.or(c.workers).unwrap_or(0);
        cfg.zero_division = self.zd;
        let alpha = b.alpha.or(c.alpha).unwrap_or(DEFAULT_ALPHA);
        cfg.validate()?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha {alpha} outside (0, 1)")));
        }
        self.rec.seed("bootstrap", cfg.seed);
        self.set("resamples", cfg.resamples);
        self.set("confidence", cfg.confidence);
        self.set("alpha", alpha);
        Ok((cfg, alpha))
    }

    fn gate(&mut self, gate: Option<&str>, category: Option<&str>) -> Result<GateAssignment> {
        let h = &self.cfg.hierarchy;
        let category = category.map(str::to_string).or_else(|| h.category.clone());
        let name = gate.map(str::to_string).or_else(|| h.gate.clone()).unwrap_or_else(|| {
            if category.is_some() {
                "slice".into()
            } else {
                "quadrant".into()
            }
        });
        let (kind, inline) = match name.split_once(':') {
            Some((k, c)) => (k.to_string(), Some(c.to_string())),
            None => (name.clone(), None),
        };
        let assignment = match kind.as_str() {
            "quadrant" => GateAssignment::quadrant_default(&self.mapping),
            "slice" => {
                let c = inline.or(category).ok_or_else(|| {
                    Error::InvalidHierarchy("slice gate needs a category (--category or slice:<name>)".into())
                })?;
                GateAssignment::slice(&c)?
            }
            "parents" => {
                let parents = h
                    .parents
                    .as_ref()
                    .ok_or_else(|| Error::InvalidHierarchy("parents gate needs a [hierarchy.parents] table".into()))?;
                GateAssignment::from_parent_names(parents, &self.mapping)?
            }
            "any-parent" => GateAssignment::AnyParent,
            "all-parents" => GateAssignment::AllParents,
            other => return Err(Error::InvalidHierarchy(format!("unknown gate `{other}`"))),
        };
        self.set("gate", assignment.describe());
        if let GateAssignment::Parents { parent } = &assignment {
            let names: Vec<&str> = parent.iter().map(|&c| HO_NAMES[c]).collect();
            self.set("gate_parents", names);
        }
        Ok(assignment)
    }
}

/// `.jsonl` inputs are read as JSON lines, everything else as TSV.
pub fn input_format(path: &Path) -> Format {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") => Format::Jsonl,
        _ => Format::Tsv,
    }
}

fn project(values: &LabelMatrix, space: LabelSpace, mapping: &HoMapping) -> Result<LabelMatrix> {
    match space {
        LabelSpace::Values => Ok(values.clone()),
        LabelSpace::Ho => derive_ho(values, mapping),
        LabelSpace::Presence => derive_presence(values),
    }
}

fn warn_orphans(what: &str, gold_only: usize, other_only: usize) {
    if other_only > 0 {
        eprintln!("warning: {other_only} {what} rows have no gold annotation and were ignored");
    }
    if gold_only > 0 {
        eprintln!("note: {gold_only} gold rows have no {what} row and were not scored");
    }
}

/// Aligns gold to `other`, keeping `other`'s row order.
fn align_gold<M: Keyed>(what: &str, gold: &LabelMatrix, other: &M) -> Result<(LabelMatrix, M)> {
    let a = align(other, gold)?;
    warn_orphans(what, a.right_orphans.len(), a.left_orphans.len());
    Ok((a.right, a.left))
}

#[derive(Args, Debug, Clone)]
pub struct BootstrapFlags {
    /// Bootstrap resamples B.
    #[arg(long)]
    pub resamples: Option<usize>,
    /// One-sided confidence level of the lower bound.
    #[arg(long)]
    pub confidence: Option<f64>,
    /// Threads for resampling; 0 picks the number of cores.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Significance level for the per-label BH procedure.
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct DeriveArgs {
    /// Gold annotation file (attained/constrained columns per value).
    #[arg(long)]
    pub gold: PathBuf,
    /// `any-non-zero` or `full-only`.
    #[arg(long)]
    pub binarize: Option<BinarizeRule>,
    /// Two-column TSV renaming input columns to canonical names.
    #[arg(long)]
    pub remap: Option<PathBuf>,
}

pub fn derive(ctx: &mut Ctx, a: &DeriveArgs) -> Result<Outcome> {
    let values = ctx.gold_values(&a.gold, a.binarize, a.remap.as_deref())?;
    let ho = derive_ho(&values, &ctx.mapping)?;
    let presence = derive_presence(&values)?;
    let format = ctx.format;
    for (stem, m) in [("values", &values), ("ho", &ho), ("presence", &presence)] {
        let p = ctx.out(stem);
        write_labels(&p, m, format)?;
    }
    Ok(Outcome {
        text: format!("derived {} rows into values, ho and presence labels", values.n_rows()),
        json: json!({ "rows": values.n_rows() }),
    })
}

#[derive(Args, Debug, Clone)]
pub struct CalibrateArgs {
    /// Score file of the stage being tuned (values unless --space says otherwise).
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long, default_value = "values")]
    pub space: LabelSpace,
    /// Split the scores come from; tuning on `test` is refused.
    #[arg(long)]
    pub split: Option<Split>,
    #[arg(long)]
    pub precision_floor: Option<f64>,
    #[arg(long)]
    pub grid_step: Option<f64>,
    /// Tune stage by stage for a gated hierarchy.
    #[arg(long)]
    pub hierarchy: Option<Variant>,
    #[arg(long)]
    pub ho_scores: Option<PathBuf>,
    #[arg(long)]
    pub presence_scores: Option<PathBuf>,
    #[arg(long)]
    pub gate: Option<String>,
    #[arg(long)]
    pub category: Option<String>,
}

fn flag_summary(tv: &ThresholdVector) -> Vec<String> {
    tv.flagged()
        .into_iter()
        .map(|(label, flag)| format!("{label}: {}", serde_json::to_value(flag).unwrap_or_default()))
        .collect()
}

pub fn calibrate(ctx: &mut Ctx, a: &CalibrateArgs) -> Result<Outcome> {
    let policy = ctx.policy(a.split, a.precision_floor, a.grid_step);
    let variant = a.hierarchy.or(ctx.cfg.hierarchy.variant).unwrap_or(Variant::Direct);
    ctx.set("variant", variant);
    if variant == Variant::Direct {
        ctx.set("space", a.space);
        let scores = ctx.scores(&a.scores, &a.space.labels())?;
        let gold = ctx.gold_space(&a.gold, a.space)?;
        let (gold, scores) = align_gold("score", &gold, &scores)?;
        let tv = tune_label_thresholds(&scores, &gold, &policy)?;
        let p = ctx.out_file("thresholds.json");
        write_atomic(&p, (tv.to_json() + "\n").as_bytes())?;
        let flags = flag_summary(&tv);
        return Ok(Outcome {
            text: format!(
                "tuned {} thresholds on {} rows; {} flagged",
                tv.thresholds.len(),
                gold.n_rows(),
                flags.len()
            ),
            json: json!({ "thresholds": tv.thresholds, "flagged": flags }),
        });
    }

    if a.space != LabelSpace::Values {
        return Err(Error::InvalidConfig(
            "stage-wise calibration reads value scores; drop --space".into(),
        ));
    }
    let gate = ctx.gate(a.gate.as_deref(), a.category.as_deref())?;
    let values = ctx.scores(&a.scores, &LabelSpace::Values.labels())?;
    let gold = ctx.gold_values(&a.gold, None, None)?;
    let (gold, values) = align_gold("score", &gold, &values)?;
    let order = values.ids().to_vec();
    let ho = match &a.ho_scores {
        Some(p) => Some(reorder(&ctx.scores(p, &LabelSpace::Ho.labels())?, &order)?),
        None => None,
    };
    let presence = match &a.presence_scores {
        Some(p) => Some(reorder(&ctx.scores(p, &LabelSpace::Presence.labels())?, &order)?),
        None => None,
    };
    let bundle = ScoreBundle { values, ho, presence };
    let st = tune_stagewise(variant, Some(&gate), &ctx.mapping, &bundle, &gold, &policy)?;
    let mut written = Vec::new();
    for (stage, tv) in [
        ("presence", &st.presence),
        ("ho", &st.ho),
        ("values", &Some(st.values.clone())),
    ] {
        if let Some(tv) = tv {
            let p = ctx.out_file(&format!("thresholds_{stage}.json"));
            write_atomic(&p, (tv.to_json() + "\n").as_bytes())?;
            written.push(stage);
        }
    }
    Ok(Outcome {
        text: format!("tuned stages {} on {} rows", written.join(", "), gold.n_rows()),
        json: json!({ "stages": written, "rows": gold.n_rows() }),
    })
}

#[derive(Args, Debug, Clone)]
pub struct ApplyArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub thresholds: PathBuf,
}

pub fn apply(ctx: &mut Ctx, a: &ApplyArgs) -> Result<Outcome> {
    let tv = ctx.thresholds(&a.thresholds)?;
    let scores = ctx.scores(&a.scores, &tv.labels())?;
    let pred = apply_thresholds(&scores, &tv)?;
    let format = ctx.format;
    let p = ctx.out("predictions");
    write_labels(&p, &pred, format)?;
    Ok(Outcome {
        text: format!("{} positive decisions over {} rows", pred.count_ones(), pred.n_rows()),
        json: json!({ "rows": pred.n_rows(), "positives": pred.count_ones() }),
    })
}

#[derive(Args, Debug, Clone)]
pub struct CascadeArgs {
    /// Value scores.
    #[arg(long)]
    pub scores: PathBuf,
    /// Value thresholds.
    #[arg(long)]
    pub thresholds: PathBuf,
    #[arg(long)]
    pub ho_scores: Option<PathBuf>,
    #[arg(long)]
    pub ho_thresholds: Option<PathBuf>,
    #[arg(long)]
    pub presence_scores: Option<PathBuf>,
    #[arg(long)]
    pub presence_thresholds: Option<PathBuf>,
    /// Defaults to the deepest variant the given stages allow.
    #[arg(long)]
    pub hierarchy: Option<Variant>,
    /// `quadrant`, `slice:<category>`, `parents`, `any-parent` or `all-parents`.
    #[arg(long)]
    pub gate: Option<String>,
    #[arg(long)]
    pub category: Option<String>,
    /// Also write per-stage decision files.
    #[arg(long)]
    pub trace: bool,
}

pub fn cascade(ctx: &mut Ctx, a: &CascadeArgs) -> Result<Outcome> {
    let inferred = match (&a.presence_scores, &a.ho_scores) {
        (Some(_), Some(_)) => Variant::PresenceCategoryValues,
        (None, Some(_)) => Variant::CategoryValues,
        _ => Variant::Direct,
    };
    let variant = a.hierarchy.or(ctx.cfg.hierarchy.variant).unwrap_or(inferred);
    ctx.set("variant", variant);
    let values_tv = ctx.thresholds(&a.thresholds)?;
    let values = ctx.scores(&a.scores, &values_tv.labels())?;
    let order = values.ids().to_vec();
    let mut spec = HierarchySpec::direct(values_tv);
    spec.variant = variant;
    spec.mapping = ctx.mapping.clone();
    let mut bundle = ScoreBundle {
        values,
        ho: None,
        presence: None,
    };
    if variant != Variant::Direct {
        spec.gate = Some(ctx.gate(a.gate.as_deref(), a.category.as_deref())?);
        let (s, t) = stage_inputs("ho", &a.ho_scores, &a.ho_thresholds)?;
        let tv = ctx.thresholds(t)?;
        bundle.ho = Some(reorder(&ctx.scores(s, &tv.labels())?, &order)?);
        spec.ho = Some(tv);
    }
    if variant == Variant::PresenceCategoryValues {
        let (s, t) = stage_inputs("presence", &a.presence_scores, &a.presence_thresholds)?;
        let tv = ctx.thresholds(t)?;
        bundle.presence = Some(reorder(&ctx.scores(s, &tv.labels())?, &order)?);
        spec.presence = Some(tv);
    }
    let out = run_cascade(&spec, &bundle)?;
    let format = ctx.format;
    let p = ctx.out("predictions");
    write_labels(&p, &out.values, format)?;
    if a.trace {
        for p in out.write_trace(&ctx.out_dir, format)? {
            ctx.rec.output(p);
        }
    }
    let suppressed = out.trace.values_raw.count_ones() - out.values.count_ones();
    Ok(Outcome {
        text: format!(
            "{} value decisions kept, {} suppressed by gates over {} rows",
            out.values.count_ones(),
            suppressed,
            out.values.n_rows()
        ),
        json: json!({
            "rows": out.values.n_rows(),
            "positives": out.values.count_ones(),
            "suppressed": suppressed,
        }),
    })
}

fn stage_inputs<'a>(
    stage: &str,
    scores: &'a Option<PathBuf>,
    thresholds: &'a Option<PathBuf>,
) -> Result<(&'a Path, &'a Path)> {
    let missing = |what: &str| Error::MissingStage(format!("{stage} {what} (--{stage}-{what})"));
    Ok((
        scores.as_deref().ok_or_else(|| missing("scores"))?,
        thresholds.as_deref().ok_or_else(|| missing("thresholds"))?,
    ))
}

#[derive(Args, Debug, Clone)]
pub struct EnsembleArgs {
    /// Gold annotations covering the validation rows.
    #[arg(long)]
    pub gold: PathBuf,
    /// Probabilistic member as `name=validation_scores[,test_scores]`.
    #[arg(long = "member")]
    pub members: Vec<String>,
    /// Discrete-output member as `name=validation_labels[,test_labels]`.
    #[arg(long = "label-member")]
    pub label_members: Vec<String>,
    /// Frozen member thresholds as `name=thresholds.json`; others are tuned on validation.
    #[arg(long = "member-thresholds")]
    pub member_thresholds: Vec<String>,
    #[arg(long)]
    pub mode: Option<EnsembleMode>,
    #[arg(long, default_value = "values")]
    pub space: LabelSpace,
    #[arg(long)]
    pub min_relative_gain: Option<f64>,
    /// Apply the relative-gain floor to the bootstrap lower bound instead of the point gain.
    #[arg(long)]
    pub gain_on_lower_bound: bool,
    /// Keep making passes over the pool until one adds nothing.
    #[arg(long)]
    pub repeat_passes: bool,
    #[command(flatten)]
    pub bootstrap: BootstrapFlags,
}

pub fn ensemble(ctx: &mut Ctx, a: &EnsembleArgs) -> Result<Outcome> {
    let mut entries = ctx.cfg.ensemble.members.clone();
    for m in &a.members {
        entries.push(MemberEntry::parse(m, MemberKind::Scores)?);
    }
    for m in &a.label_members {
        entries.push(MemberEntry::parse(m, MemberKind::Labels)?);
    }
    for t in &a.member_thresholds {
        let (name, path) = t
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("`{t}` is not name=thresholds.json")))?;
        let e = entries
            .iter_mut()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::InvalidConfig(format!("thresholds for unknown member `{name}`")))?;
        e.thresholds = Some(PathBuf::from(path));
    }
    if entries.is_empty() {
        return Err(Error::InvalidEnsemble("no members given".into()));
    }
    let e = &ctx.cfg.ensemble;
    let mode = a.mode.or(e.mode).unwrap_or(EnsembleMode::Soft);
    let min_gain = a.min_relative_gain.or(e.min_relative_gain);
    let on_lb = a.gain_on_lower_bound || e.gain_on_lower_bound.unwrap_or(false);
    let repeat = a.repeat_passes || e.repeat_passes.unwrap_or(false);
    let (boot, _) = ctx.bootstrap(&a.bootstrap)?;
    let policy = ctx.policy(Some(Split::Validation), None, None);
    let labels = a.space.labels();
    let gold_all = ctx.gold_space(&a.gold, a.space)?;

    let mut gold_val: Option<LabelMatrix> = None;
    let mut val_order = Vec::new();
    let mut test_order: Option<Vec<_>> = None;
    let mut pool = Vec::with_capacity(entries.len());
    for entry in &entries {
        let first = gold_val.is_none();
        let load_val = |ctx: &mut Ctx| -> Result<(Option<ScoreMatrix>, Option<LabelMatrix>)> {
            Ok(match entry.kind {
                MemberKind::Scores => (Some(ctx.scores(&entry.validation, &labels)?), None),
                MemberKind::Labels => (None, Some(ctx.labels(&entry.validation, &labels)?)),
            })
        };
        let (mut vs, mut vl) = load_val(ctx)?;
        if first {
            let (g, order) = match (&vs, &vl) {
                (Some(s), _) => {
                    let (g, s) = align_gold("member", &gold_all, s)?;
                    let order = s.ids().to_vec();
                    (g, order)
                }
                (_, Some(l)) => {
                    let (g, l) = align_gold("member", &gold_all, l)?;
                    let order = l.ids().to_vec();
                    (g, order)
                }
                _ => unreachable!(),
            };
            gold_val = Some(g);
            val_order = order;
        }
        vs = vs.map(|s| reorder(&s, &val_order)).transpose()?;
        vl = vl.map(|l| reorder(&l, &val_order)).transpose()?;
        let gold = gold_val.as_ref().expect("set by the first member");
        let mut load_test = |ctx: &mut Ctx, kind: &MemberKind| -> Result<(Option<ScoreMatrix>, Option<LabelMatrix>)> {
            let Some(path) = &entry.test else {
                return Ok((None, None));
            };
            let (s, l) = match kind {
                MemberKind::Scores => (Some(ctx.scores(path, &labels)?), None),
                MemberKind::Labels => (None, Some(ctx.labels(path, &labels)?)),
            };
            let ids = s
                .as_ref()
                .map(|s| s.ids().to_vec())
                .or_else(|| l.as_ref().map(|l| l.ids().to_vec()));
            let order = test_order.get_or_insert_with(|| ids.unwrap_or_default()).clone();
            Ok((
                s.map(|s| reorder(&s, &order)).transpose()?,
                l.map(|l| reorder(&l, &order)).transpose()?,
            ))
        };
        let (ts, tl) = load_test(ctx, &entry.kind)?;
        let member = match entry.kind {
            MemberKind::Scores => {
                let val = vs.expect("scores member");
                let tv = match &entry.thresholds {
                    Some(p) => ctx.thresholds(p)?,
                    None => tune_label_thresholds(&val, gold, &policy)?,
                };
                Member::from_scores(&entry.name, val, ts, tv, gold, ctx.zd)?
            }
            MemberKind::Labels => Member::from_labels(&entry.name, vl.expect("labels member"), tl, gold, ctx.zd)?,
        };
        pool.push(member);
    }
    let gold_val = gold_val.expect("at least one member");
    let all_test = entries.iter().all(|e| e.test.is_some());
    let pool = ModelPool::new(pool)?;

    let mut cfg = SelectionConfig::new(mode, boot);
    if let Some(g) = min_gain {
        cfg.min_relative_gain = g;
    }
    cfg.gain_on_lower_bound = on_lb;
    cfg.repeat_passes = repeat;
    cfg.policy = policy;
    ctx.set("mode", mode);
    ctx.set("space", a.space);
    ctx.set("min_relative_gain", cfg.min_relative_gain);
    ctx.set("gain_on_lower_bound", on_lb);
    ctx.set("repeat_passes", repeat);
    ctx.set("members", &entries);

    let sel = forward_select(&pool, &gold_val, &cfg)?;
    let p = ctx.out_file("ensemble.json");
    write_atomic(&p, (sel.spec.to_json() + "\n").as_bytes())?;
    let p = ctx.out_file("selection.jsonl");
    write_atomic(&p, sel.log_string().as_bytes())?;
    let format = ctx.format;
    let val_pred = sel.spec.predict(&pool, Split::Validation)?;
    let p = ctx.out("predictions_validation");
    write_labels(&p, &val_pred, format)?;
    if all_test {
        let test_pred = sel.spec.predict(&pool, Split::Test)?;
        let p = ctx.out("predictions_test");
        write_labels(&p, &test_pred, format)?;
    }
    Ok(Outcome {
        text: format!(
            "selected [{}] ({:?}), validation macro-F1 {:.4}",
            sel.spec.members.join(", "),
            mode,
            sel.val_macro_f1
        ),
        json: json!({ "members": sel.spec.members, "mode": mode, "val_macro_f1": sel.val_macro_f1 }),
    })
}

#[derive(Args, Debug, Clone)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub gold: PathBuf,
    /// Binary prediction file in the chosen label space.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, default_value = "values")]
    pub space: LabelSpace,
    /// Presence decisions; adds an in-gate evaluation over rows they pass.
    #[arg(long)]
    pub gate_pred: Option<PathBuf>,
}

pub fn evaluate(ctx: &mut Ctx, a: &EvaluateArgs) -> Result<Outcome> {
    ctx.set("space", a.space);
    let gold = ctx.gold_space(&a.gold, a.space)?;
    let pred = ctx.labels(&a.pred, &a.space.labels())?;
    let aligned = align(&gold, &pred)?;
    warn_orphans("prediction", aligned.left_orphans.len(), aligned.right_orphans.len());
    let report = per_label_f1(&aligned.left, &aligned.right, ctx.zd)?;
    let mut out = json!({
        "space": a.space,
        "macro_f1": report.macro_f1,
        "macro_precision": report.macro_precision(),
        "macro_recall": report.macro_recall(),
        "unscored_gold_rows": aligned.left_orphans.len(),
        "unknown_prediction_rows": aligned.right_orphans.len(),
        "end_task": &report,
    });
    if a.space == LabelSpace::Ho {
        let mut bipolar = serde_json::Map::new();
        for pair in bipolar_pairs() {
            bipolar.insert(format!("{} / {}", pair.0, pair.1), bipolar_f1(&report, pair)?.into());
        }
        out["bipolar"] = Value::Object(bipolar);
    }
    let mut text = format!("macro-F1 {:.4} over {} rows", report.macro_f1, report.rows);
    if let Some(gp) = &a.gate_pred {
        let gate = ctx.labels(gp, &LabelSpace::Presence.labels())?;
        let gate = reorder(&gate, aligned.left.ids())?;
        let in_gate = in_gate_eval(&aligned.left, &aligned.right, &gate, ctx.zd)?;
        text.push_str(&format!(
            "; in-gate macro-F1 {:.4} over {} rows",
            in_gate.macro_f1, in_gate.rows
        ));
        out["in_gate"] = serde_json::to_value(&in_gate)?;
    }
    ctx.write_json("evaluation.json", &out)?;
    text.push('\n');
    text.push_str(&report.render());
    Ok(Outcome { text, json: out })
}

#[derive(Args, Debug, Clone)]
pub struct CompareArgs {
    #[arg(long)]
    pub gold: PathBuf,
    /// Baseline predictions.
    #[arg(long)]
    pub system_a: PathBuf,
    /// Candidate predictions; the tested gain is B minus A.
    #[arg(long)]
    pub system_b: PathBuf,
    #[arg(long, default_value = "values")]
    pub space: LabelSpace,
    #[arg(long, default_value = "B vs A")]
    pub name: String,
    #[command(flatten)]
    pub bootstrap: BootstrapFlags,
}

pub fn compare(ctx: &mut Ctx, a: &CompareArgs) -> Result<Outcome> {
    ctx.set("space", a.space);
    let (cfg, alpha) = ctx.bootstrap(&a.bootstrap)?;
    let labels = a.space.labels();
    let gold = ctx.gold_space(&a.gold, a.space)?;
    let sys_a = ctx.labels(&a.system_a, &labels)?;
    let sys_b = ctx.labels(&a.system_b, &labels)?;
    let (gold, sys_a) = align_gold("system A", &gold, &sys_a)?;
    let sys_b = reorder(&sys_b, sys_a.ids())?;
    let report = SignificanceReport::compare(&gold, &sys_a, &sys_b, &cfg, alpha)?;
    ctx.write_json("report.json", &report)?;
    let mut table = SignificanceTable::new(vec!["macro-F1".into()]);
    table.push(a.name.clone(), vec![report.cell()])?;
    let rejected = report.per_label.values().filter(|t| t.reject).count();
    let text = format!(
        "{}delta {:.3}, lower bound {:.3}, p {}, cell {}; {} of {} labels differ under McNemar+BH at {}",
        table.render(),
        report.delta_point,
        report.lower_bound,
        format_float(report.p_value),
        report.cell().symbol(),
        rejected,
        report.per_label.len(),
        alpha
    );
    Ok(Outcome {
        text,
        json: json!({
            "delta": report.delta_point,
            "lower_bound": report.lower_bound,
            "p_value": report.p_value,
            "cell": report.cell().symbol(),
            "rendered": report.cell().render(),
        }),
    })
}

#[derive(Args, Debug, Clone)]
pub struct ParseLlmArgs {
    /// JSONL with text_id, sentence_id and generation.
    #[arg(long)]
    pub generations: PathBuf,
    /// Case-fold value names before matching.
    #[arg(long)]
    pub lenient: bool,
    /// Split manifest; every generation id must belong to `--split`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: Split,
}

pub fn parse_llm(ctx: &mut Ctx, a: &ParseLlmArgs) -> Result<Outcome> {
    let lenient = a.lenient || ctx.cfg.llm.lenient.unwrap_or(false);
    ctx.set("lenient", lenient);
    ctx.rec.input(&a.generations);
    let gens = read_generations(&a.generations)?;
    let allowed = match &a.manifest {
        Some(p) => {
            ctx.rec.input(p);
            ctx.set("split", a.split);
            let m = read_manifests(p)?
                .into_iter()
                .find(|m| m.split == a.split)
                .ok_or_else(|| Error::InvalidConfig(format!("manifest has no {} split", a.split.name())))?;
            Some(m.ids)
        }
        None => None,
    };
    let parsed = parse_generations(&gens, lenient, allowed.as_deref())?;
    let ho = derive_llm_ho(&parsed.values, &ctx.mapping)?;
    let format = ctx.format;
    let p = ctx.out("llm_values");
    write_labels(&p, &parsed.values, format)?;
    let p = ctx.out("llm_ho");
    write_labels(&p, &ho, format)?;
    ctx.write_json("parse_stats.json", &parsed.stats)?;
    let s = &parsed.stats;
    Ok(Outcome {
        text: format!(
            "{} generations: {} valid, {} valid-empty, {} invalid; {} unknown names dropped",
            s.rows, s.valid, s.valid_empty, s.invalid, s.dropped_names
        ),
        json: serde_json::to_value(s)?,
    })
}

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: Option<usize>,
    /// Gate false-negative rate.
    #[arg(long)]
    pub fnr: Option<f64>,
    /// Gate false-positive rate.
    #[arg(long)]
    pub fpr: Option<f64>,
    /// Comma-separated gate false-negative rates for the compounding report.
    #[arg(long, value_delimiter = ',')]
    pub fnr_sweep: Vec<f64>,
    #[arg(long)]
    pub gate_threshold: Option<f64>,
}

pub fn synth(ctx: &mut Ctx, a: &SynthArgs) -> Result<Outcome> {
    let mut cfg = ctx.cfg.synthetic()?;
    if ctx.seed_explicit {
        cfg.seed = ctx.seed;
    }
    if let Some(n) = a.n {
        cfg.n = n;
    }
    if let Some(f) = a.fnr {
        cfg.corruption.fnr = f;
    }
    if let Some(f) = a.fpr {
        cfg.corruption.fpr = f;
    }
    if let Some(t) = a.gate_threshold {
        cfg.gate_threshold = t;
    }
    cfg.validate()?;
    ctx.rec.seed("synthetic", cfg.seed);
    ctx.set("synthetic", &cfg);
    let data = generate(&cfg)?;
    for p in data.write_to_dir(&ctx.out_dir, ctx.format)? {
        ctx.rec.output(p);
    }
    let fnrs = if a.fnr_sweep.is_empty() {
        vec![cfg.corruption.fnr]
    } else {
        a.fnr_sweep.clone()
    };
    ctx.set("fnr_sweep", &fnrs);
    let rows = error_compounding_report(&cfg, &fnrs)?;
    let p = ctx.out_file("compounding.tsv");
    write_atomic(&p, render_report(&rows).as_bytes())?;
    ctx.write_json("compounding.json", &rows)?;
    let text = rows
        .iter()
        .map(|r| {
            format!(
                "fnr {}: direct {:.4}, gated {:.4}, in-gate {:.4}",
                format_float(r.fnr),
                r.direct_f1,
                r.gated_f1,
                r.in_gate_f1
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Outcome {
        text,
        json: serde_json::to_value(&rows)?,
    })
}

#[derive(Args, Debug, Clone)]
pub struct PrevalenceArgs {
    #[arg(long)]
    pub gold: PathBuf,
    /// Split manifest TSV (Split, Text-ID, Sentence-ID).
    #[arg(long)]
    pub manifest: PathBuf,
}

pub fn prevalence(ctx: &mut Ctx, a: &PrevalenceArgs) -> Result<Outcome> {
    let values = ctx.gold_values(&a.gold, None, None)?;
    let ho = derive_ho(&values, &ctx.mapping)?;
    let presence = derive_presence(&values)?;
    ctx.rec.input(&a.manifest);
    let manifests = read_manifests(&a.manifest)?;
    let n = values.n_rows();
    let mut labels = values.labels().to_vec();
    labels.extend(ho.labels().iter().cloned());
    labels.extend(presence.labels().iter().cloned());
    let mut data = Vec::with_capacity(n * labels.len());
    for r in 0..n {
        data.extend_from_slice(values.row(r));
        data.extend_from_slice(ho.row(r));
        data.extend_from_slice(presence.row(r));
    }
    let all = LabelMatrix::new(values.ids().to_vec(), labels, data)?;
    let table = prevalence_table(&all, &manifests)?;
    let text = table.render();
    let p = ctx.out_file("prevalence.txt");
    write_atomic(&p, text.as_bytes())?;
    ctx.write_json("prevalence.json", &table)?;
    Ok(Outcome {
        text,
        json: serde_json::to_value(&table)?,
    })
}
