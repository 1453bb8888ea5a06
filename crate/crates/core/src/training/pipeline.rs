//! The generation loop and its checkpoint directory.
//!
//! ```text
//! <dir>/config.toml           resolved config of the run
//! <dir>/reports.jsonl         one GenerationReport per completed generation
//! <dir>/gen-001/model.bin     network trained in generation 1
//! <dir>/gen-001/samples.jsonl samples generation 1 added to the buffers
//! <dir>/gen-001/report.json   written last; marks the generation complete
//! ```

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::buffer::{SampleTag, TaggedSample};
use super::config::GenerationConfig;
use super::generation::{run_generation, Buffers, GenerationReport};
use crate::error::{Error, Result};
use crate::policy::{load_model, save_model, ConvPolicy, Policy};
use crate::samegame::{Board, Cell};

#[derive(Debug)]
pub struct PipelineOutcome {
    /// Uniform when no generation ran.
    pub policy: Policy,
    pub model: Option<ConvPolicy>,
    pub reports: Vec<GenerationReport>,
    /// Generations restored from the checkpoint rather than run.
    pub resumed: usize,
}

#[derive(Serialize, Deserialize)]
struct SampleLine {
    split: Split,
    tag: SampleTag,
    cells: String,
    target: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Split {
    Training,
    Validation,
}

pub fn generation_dir(dir: &Path, generation: usize) -> PathBuf {
    dir.join(format!("gen-{generation:03}"))
}

/// Row-major digits, `0` for empty cells.
fn board_digits(b: &Board) -> String {
    let mut s = String::with_capacity(b.width() * b.height());
    for r in 0..b.height() {
        for c in 0..b.width() {
            s.push(match b.cell(r, c) {
                Cell::Empty => '0',
                Cell::Color(k) => char::from(b'0' + k),
            });
        }
    }
    s
}

fn board_from_digits(cfg: &GenerationConfig, digits: &str) -> Result<Board> {
    let cells = digits
        .bytes()
        .map(|d| match d {
            b'0' => Ok(Cell::Empty),
            b'1'..=b'9' => Ok(Cell::Color(d - b'0')),
            _ => Err(Error::InvalidBoard(format!("bad cell digit {:?}", d as char))),
        })
        .collect::<Result<Vec<_>>>()?;
    Board::new(cfg.board.width, cfg.board.height, cfg.board.colors, cells)
}

fn write_samples(path: &Path, buffers: &Buffers, added: (usize, usize)) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let parts = [
        (Split::Training, buffers.training.newest(added.0)),
        (Split::Validation, buffers.validation.newest(added.1)),
    ];
    for (split, items) in parts {
        for s in items {
            let line = SampleLine {
                split,
                tag: s.tag,
                cells: board_digits(&s.board),
                target: s.target,
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_samples(path: &Path, cfg: &GenerationConfig, buffers: &mut Buffers) -> Result<()> {
    let file = File::open(path).map_err(|e| {
        Error::Config(format!(
            "cannot resume: {} is missing ({e}); runs without buffer snapshots cannot be resumed",
            path.display()
        ))
    })?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let parsed: SampleLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        let sample = TaggedSample {
            tag: parsed.tag,
            board: board_from_digits(cfg, &parsed.cells)?,
            target: parsed.target,
        };
        match parsed.split {
            Split::Training => buffers.training.push(sample),
            Split::Validation => buffers.validation.push(sample),
        }
    }
    Ok(())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_reports(dir: &Path, reports: &[GenerationReport]) -> Result<()> {
    let mut text = Vec::new();
    for r in reports {
        serde_json::to_writer(&mut text, r)?;
        text.push(b'\n');
    }
    write_atomic(&dir.join("reports.jsonl"), &text)
}

/// Settings that change results; worker count and run length do not.
fn comparable(cfg: &GenerationConfig) -> GenerationConfig {
    GenerationConfig {
        generations: 0,
        workers: 0,
        ..cfg.clone()
    }
}

/// Completed generations found in a checkpoint directory, with their reports.
fn completed_generations(dir: &Path) -> Result<Vec<GenerationReport>> {
    let mut reports = Vec::new();
    loop {
        let path = generation_dir(dir, reports.len() + 1).join("report.json");
        if !path.exists() {
            return Ok(reports);
        }
        reports.push(serde_json::from_str(&fs::read_to_string(&path)?)?);
    }
}

/// Runs `cfg.generations` generations. With a checkpoint directory, each
/// completed generation is persisted and a later call with the same config
/// continues after the last completed one; `generations` may be raised to
/// extend a finished run.
pub fn train_pipeline(
    cfg: &GenerationConfig,
    checkpoint: Option<&Path>,
    on_report: &mut dyn FnMut(&GenerationReport),
) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let mut buffers = Buffers::new(cfg);
    let mut reports = Vec::new();
    let mut model: Option<ConvPolicy> = None;

    if let Some(dir) = checkpoint {
        fs::create_dir_all(dir)?;
        let config_path = dir.join("config.toml");
        if config_path.exists() {
            let saved = GenerationConfig::load(&config_path)?;
            if comparable(&saved) != comparable(cfg) {
                return Err(Error::Config(format!(
                    "{} holds a run with a different config",
                    dir.display()
                )));
            }
        }
        let done = completed_generations(dir)?;
        let keep = done.len().min(cfg.generations);
        for g in 1..=keep {
            read_samples(&generation_dir(dir, g).join("samples.jsonl"), cfg, &mut buffers)?;
        }
        if keep > 0 {
            model = Some(load_model(&generation_dir(dir, keep).join("model.bin"))?);
        }
        reports = done.into_iter().take(keep).collect();
        write_atomic(&config_path, cfg.to_toml().as_bytes())?;
    }
    let resumed = reports.len();

    for g in resumed + 1..=cfg.generations {
        let previous = model.clone().map_or(Policy::Uniform, Policy::model);
        let out = run_generation(g, cfg, &previous, &mut buffers)?;
        if let Some(dir) = checkpoint {
            let gdir = generation_dir(dir, g);
            fs::create_dir_all(&gdir)?;
            save_model(&out.model, &gdir.join("model.bin"))?;
            if cfg.buffer_snapshots {
                let added = (out.report.added_training, out.report.added_validation);
                write_samples(&gdir.join("samples.jsonl"), &buffers, added)?;
            }
            write_atomic(&gdir.join("report.json"), &serde_json::to_vec(&out.report)?)?;
        }
        on_report(&out.report);
        reports.push(out.report);
        if let Some(dir) = checkpoint {
            write_reports(dir, &reports)?;
        }
        model = Some(out.model);
    }

    Ok(PipelineOutcome {
        policy: model.clone().map_or(Policy::Uniform, Policy::model),
        model,
        reports,
        resumed,
    })
}
