use std::fmt;
use std::time::Instant;

use clonekd::backend::{encode, Backend, BackendError};
use clonekd::corpus::{write_jsonl, CodePair};
use clonekd::eval::{parse_conclusion, Decision, EvalReport};
use clonekd::prompting::{build_prompt, render_reasoning_prompt};
use clonekd::stabilize::{
    forced_conclusion, head_forward, pooled_embeddings, predict_head, ForcedConfig, HeadManifest, HeadParams,
    LabelTokenSets,
};
use serde::{Deserialize, Serialize};

use super::heads::head_exchange;
use super::{backbone_label, load_pairs, open_backbone, open_backend, read_json, Layout};
use crate::config::{Method, RunConfig};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub pair_id: String,
    pub label: u8,
    pub decision: Decision,
    /// Generated text, for the generating methods.
    pub response: Option<String>,
    /// Head logit, or p(yes) − p(no) for forced conclusion.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub reports: Vec<EvalReport>,
}

impl fmt::Display for EvalSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.reports {
            writeln!(
                f,
                "{} {} {}: F1 {:.2}, response rate {:.1}, {:.4} s/sample",
                r.test_set,
                r.method,
                r.backbone,
                r.f1,
                r.response_rate,
                r.mean_seconds_per_sample()
            )?;
        }
        Ok(())
    }
}

struct Context<'a> {
    config: &'a RunConfig,
    backend: &'a dyn Backend,
    label: String,
    label_tokens: Option<LabelTokenSets>,
}

fn generation(ctx: &Context, pair: &CodePair) -> Result<Prediction, CliError> {
    let prompt =
        build_prompt(Some(&ctx.config.system_prompt), &render_reasoning_prompt(pair)).map_err(CliError::data)?;
    let seq = encode(&prompt, ctx.backend.tokenizer(), ctx.backend.max_len()).map_err(BackendError::from)?;
    let text = ctx.backend.generate(&seq, ctx.config.eval.max_new_tokens)?;
    Ok(Prediction {
        pair_id: pair.pair_id.clone(),
        label: pair.label,
        decision: parse_conclusion(&text),
        response: Some(text),
        score: None,
    })
}

fn forced(ctx: &Context, pair: &CodePair) -> Result<Prediction, CliError> {
    let tokens = ctx.label_tokens.as_ref().expect("label tokens resolved for forced conclusion");
    let cfg = ForcedConfig {
        system_prompt: Some(ctx.config.system_prompt.clone()),
        max_new_tokens: ctx.config.eval.max_new_tokens,
    };
    let out = forced_conclusion(ctx.backend, &render_reasoning_prompt(pair), tokens, &cfg)?;
    Ok(Prediction {
        pair_id: pair.pair_id.clone(),
        label: pair.label,
        decision: Decision::from_label(out.label),
        response: Some(out.first_stage_response),
        score: Some(out.p_yes - out.p_no),
    })
}

fn head(ctx: &Context, params: &HeadParams, pair: &CodePair) -> Result<Prediction, CliError> {
    let h = pooled_embeddings(ctx.backend, &[head_exchange(ctx.config, pair)?])?;
    let logit = head_forward(&h[0], params, None)?;
    Ok(Prediction {
        pair_id: pair.pair_id.clone(),
        label: pair.label,
        decision: Decision::from_label(predict_head(logit)),
        response: None,
        score: Some(logit),
    })
}

fn load_head(ctx: &Context, layout: &Layout, method: Method) -> Result<Option<HeadParams>, CliError> {
    let Some(objective) = method.head_objective() else {
        return Ok(None);
    };
    let dir = layout.head_dir(&ctx.label, objective);
    if !dir.join("head.json").exists() {
        return Err(CliError::Data(format!(
            "no {objective} head for backbone {}; run `train-head` first",
            ctx.label
        )));
    }
    let manifest: HeadManifest = read_json(&dir.join("manifest.json"))?;
    let current = ctx.backend.parameter_checksum()?;
    if manifest.backbone_checksum != current {
        return Err(CliError::Data(format!(
            "{objective} head for {} was trained on a different backbone; rerun `train-head`",
            ctx.label
        )));
    }
    Ok(Some(read_json(&dir.join("head.json"))?))
}

/// Scores every configured method on every configured backbone and test
/// set, recording wall time per evaluation.
pub fn cmd_eval(config: &RunConfig) -> Result<EvalSummary, CliError> {
    let layout = Layout::new(config);
    let base = open_backend(config)?;
    let mut reports = Vec::new();
    for &choice in &config.eval.backbones {
        let adapted = open_backbone(config, base.as_ref(), choice)?;
        let backend = adapted.as_deref().unwrap_or(base.as_ref());
        let label_tokens = if config.eval.methods.contains(&Method::Forced) {
            Some(LabelTokenSets::from_tokenizer(backend.tokenizer())?)
        } else {
            None
        };
        let ctx = Context {
            config,
            backend,
            label: backbone_label(config, choice),
            label_tokens,
        };
        let heads: Vec<(Method, Option<HeadParams>)> = config
            .eval
            .methods
            .iter()
            .map(|&m| load_head(&ctx, &layout, m).map(|p| (m, p)))
            .collect::<Result<_, _>>()?;

        for &test_set in &config.eval.test_sets {
            for pair in &config.pairs {
                let name = format!("{}_{}", pair.name(), test_set.suffix());
                let tests = load_pairs(&layout.seed_file(&pair.name(), test_set.file_name()), "seed")?;
                if tests.is_empty() {
                    log::warn!("{name} is empty; skipped");
                    continue;
                }
                let truth: Vec<u8> = tests.iter().map(|p| p.label).collect();
                for (method, params) in &heads {
                    let start = Instant::now();
                    let preds: Vec<Prediction> = tests
                        .iter()
                        .map(|p| match (method, params) {
                            (Method::Generation, _) => generation(&ctx, p),
                            (Method::Forced, _) => forced(&ctx, p),
                            (_, Some(params)) => head(&ctx, params, p),
                            (_, None) => unreachable!("head methods always carry parameters"),
                        })
                        .collect::<Result<_, _>>()?;
                    let secs = start.elapsed().as_secs_f64();
                    let decisions: Vec<Decision> = preds.iter().map(|p| p.decision).collect();
                    let report = EvalReport::from_predictions(
                        &config.run_id,
                        method.as_str(),
                        &ctx.label,
                        &name,
                        &decisions,
                        &truth,
                        config.eval.invalid_policy,
                        secs,
                    )
                    .map_err(CliError::data)?;
                    let out = layout
                        .eval_dir()
                        .join("predictions")
                        .join(method.as_str())
                        .join(&ctx.label)
                        .join(format!("{name}.jsonl"));
                    write_jsonl(&out, &preds)?;
                    log::info!("{name} {} {}: F1 {:.2} in {secs:.3}s", method.as_str(), ctx.label, report.f1);
                    reports.push(report);
                }
            }
        }
    }
    write_jsonl(&layout.eval_dir().join("reports.jsonl"), &reports)?;
    Ok(EvalSummary { reports })
}
