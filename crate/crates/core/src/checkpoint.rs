//! Checkpoint/resume of an [`OnlineLearner`].
//!
//! ```text
//! olstate v1
//! strategy <kind> <learning_rate> <batch_size>
//! classes <known_at_start> <max_classes>
//! head ...                      training layer
//! batch <samples> <row_offset>  then a head block of the accumulators
//! lwf <prediction_counter> <since_copy>   then a head block of the copy layer
//! cwr <in_batch>
//! updates <u_0> ... <u_n-1>
//! batch_counts <c_0> ... <c_n-1>          then a head block of the consolidated layer
//! ```
//!
//! Every layer is stored as a model-file `head` block.

use std::fmt::Write as _;
use std::path::Path;

use crate::classifier::OlLayer;
use crate::error::{Error, Result};
use crate::format::{parse_head_block, write_head_block, Lines};
use crate::frozen::HeadSeed;
use crate::strategies::{Accumulator, OnlineLearner, ParamSet, StrategyConfig, StrategyKind, StrategyState};

pub const STATE_MAGIC: &str = "olstate v1";

fn params_block(out: &mut String, params: &ParamSet, labels: &[String]) {
    write_head_block(
        out,
        &HeadSeed {
            weights: params.weights.clone(),
            biases: params.biases.clone(),
            labels: labels.to_vec(),
        },
    );
}

fn join<T: ToString>(vals: &[T]) -> String {
    vals.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

pub fn write_checkpoint(learner: &OnlineLearner) -> String {
    let cfg = learner.config();
    let layer = learner.layer();
    let mut out = String::new();
    let _ = writeln!(out, "{STATE_MAGIC}");
    let _ = writeln!(out, "strategy {} {} {}", cfg.kind, cfg.learning_rate, cfg.batch_size);
    let _ = writeln!(out, "classes {} {}", layer.known_at_start(), layer.max_classes());
    write_head_block(&mut out, &layer.to_head_seed());
    match learner.state() {
        StrategyState::Plain => {}
        StrategyState::Batch(acc) => {
            let _ = writeln!(out, "batch {} {}", acc.samples, acc.row_offset);
            params_block(&mut out, &acc.sums, &layer.labels()[acc.row_offset..]);
        }
        StrategyState::Lwf {
            copy,
            prediction_counter,
            since_copy,
        } => {
            let _ = writeln!(out, "lwf {prediction_counter} {since_copy}");
            params_block(&mut out, copy, layer.labels());
        }
        StrategyState::Cwr {
            consolidated,
            updates,
            batch_counts,
            in_batch,
        } => {
            let _ = writeln!(out, "cwr {in_batch}");
            let _ = writeln!(out, "updates {}", join(updates));
            let _ = writeln!(out, "batch_counts {}", join(batch_counts));
            params_block(&mut out, consolidated, layer.labels());
        }
    }
    out
}

fn keyword_line<'a>(lines: &mut Lines<'a>, keyword: &str) -> Result<(usize, std::str::SplitWhitespace<'a>)> {
    let (line, text) = lines.next_line(keyword)?;
    let mut it = text.split_whitespace();
    if it.next() != Some(keyword) {
        return Err(lines.error(line, format!("expected `{keyword} ...`")));
    }
    Ok((line, it))
}

fn counters(lines: &mut Lines<'_>, keyword: &str, n: usize) -> Result<Vec<u64>> {
    let (line, it) = keyword_line(lines, keyword)?;
    let vals: Vec<u64> = it
        .map(|tok| {
            tok.parse()
                .map_err(|_| lines.error(line, format!("{keyword}: {tok:?} is not a count")))
        })
        .collect::<Result<_>>()?;
    if vals.len() != n {
        return Err(lines.error(line, format!("{keyword}: expected {n} values, found {}", vals.len())));
    }
    Ok(vals)
}

fn params_for(lines: &mut Lines<'_>, layer: &OlLayer, rows: usize) -> Result<ParamSet> {
    let line = lines.peek().map_or(0, |l| l.0);
    let head = parse_head_block(lines)?;
    if head.weights.rows() != rows || head.weights.cols() != layer.m() {
        return Err(lines.error(
            line,
            format!(
                "auxiliary layer is {}, expected {rows}x{}",
                head.weights.shape_str(),
                layer.m()
            ),
        ));
    }
    if head.labels[..] != layer.labels()[layer.n() - rows..] {
        return Err(lines.error(line, "auxiliary layer labels differ from the training layer"));
    }
    Ok(ParamSet {
        weights: head.weights,
        biases: head.biases,
    })
}

pub fn parse_checkpoint(source: &str, text: &str) -> Result<OnlineLearner> {
    let mut lines = Lines::new(source, text);
    let (line, magic) = lines.next_line("header")?;
    if magic != STATE_MAGIC {
        return Err(lines.error(line, format!("expected header {STATE_MAGIC:?}")));
    }

    let (line, mut it) = keyword_line(&mut lines, "strategy")?;
    let kind: StrategyKind = it
        .next()
        .ok_or_else(|| lines.error(line, "missing strategy kind"))?
        .parse()
        .map_err(|e: Error| lines.error(line, e.to_string()))?;
    let lr_tok = it.next().ok_or_else(|| lines.error(line, "missing learning rate"))?;
    let learning_rate: f32 = lr_tok
        .parse()
        .map_err(|_| lines.error(line, format!("learning rate {lr_tok:?} is not a number")))?;
    let batch_size = lines.usize_field(line, it.next(), "batch size")?;
    lines.expect_end(line, it)?;
    let cfg = StrategyConfig::new(kind, learning_rate, batch_size).map_err(|e| lines.error(line, e.to_string()))?;

    let (line, mut it) = keyword_line(&mut lines, "classes")?;
    let known_at_start = lines.usize_field(line, it.next(), "known_at_start")?;
    let max_classes = lines.usize_field(line, it.next(), "max_classes")?;
    lines.expect_end(line, it)?;

    let head = parse_head_block(&mut lines)?;
    let layer = OlLayer::restore(&head, known_at_start, max_classes).map_err(|e| lines.error(line, e.to_string()))?;
    let n = layer.n();

    let state = match kind {
        StrategyKind::TinyOl | StrategyKind::TinyOlV2 => StrategyState::Plain,
        StrategyKind::TinyOlBatches | StrategyKind::TinyOlV2Batches => {
            let (line, mut it) = keyword_line(&mut lines, "batch")?;
            let samples = lines.usize_field(line, it.next(), "samples")?;
            let row_offset = lines.usize_field(line, it.next(), "row offset")?;
            lines.expect_end(line, it)?;
            let expected_offset = if kind == StrategyKind::TinyOlBatches {
                0
            } else {
                known_at_start
            };
            if row_offset != expected_offset {
                return Err(lines.error(line, format!("row offset must be {expected_offset} for {kind}")));
            }
            let sums = params_for(&mut lines, &layer, n - row_offset)?;
            StrategyState::Batch(Accumulator {
                sums,
                row_offset,
                samples,
            })
        }
        StrategyKind::Lwf | StrategyKind::LwfBatches => {
            let (line, mut it) = keyword_line(&mut lines, "lwf")?;
            let prediction_counter = lines.usize_field(line, it.next(), "prediction counter")? as u64;
            let since_copy = lines.usize_field(line, it.next(), "steps since copy")?;
            lines.expect_end(line, it)?;
            let copy = params_for(&mut lines, &layer, n)?;
            StrategyState::Lwf {
                copy,
                prediction_counter,
                since_copy,
            }
        }
        StrategyKind::Cwr => {
            let (line, mut it) = keyword_line(&mut lines, "cwr")?;
            let in_batch = lines.usize_field(line, it.next(), "samples in batch")?;
            lines.expect_end(line, it)?;
            let updates = counters(&mut lines, "updates", n)?;
            let batch_counts = counters(&mut lines, "batch_counts", n)?;
            let consolidated = params_for(&mut lines, &layer, n)?;
            StrategyState::Cwr {
                consolidated,
                updates,
                batch_counts,
                in_batch,
            }
        }
    };
    if let Some((line, text)) = lines.peek() {
        return Err(lines.error(line, format!("unexpected trailing content {text:?}")));
    }
    Ok(OnlineLearner::from_parts(layer, state, cfg))
}

pub fn save_checkpoint(path: impl AsRef<Path>, learner: &OnlineLearner) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_checkpoint(learner)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<OnlineLearner> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&path.display().to_string(), &text)
}
