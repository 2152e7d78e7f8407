use std::fs::OpenOptions;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{Context, Result};
use mwd_core::models::{cache_block_size, code_balance, to_f64, CacheModelInput};
use mwd_core::{GridSpec, RunConfig, StencilKind};
use serde::{Deserialize, Serialize};

use crate::args::Format;

pub const SCHEMA_VERSION: u32 = 1;

/// One benchmark or verification result. CSV columns follow field order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub stencil: String,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub nt: u64,
    pub d_w: usize,
    pub n_f: usize,
    pub shape: String,
    pub variant: String,
    pub n_groups: usize,
    pub seed: u64,
    pub wall_seconds: f64,
    pub glups: f64,
    pub model_c_s_bytes: f64,
    pub model_b_c: f64,
    /// Set only by verification runs.
    pub verified: Option<bool>,
}

impl RunRecord {
    pub fn new(kind: StencilKind, grid: &GridSpec, nt: u64, cfg: &RunConfig, seed: u64, wall_seconds: f64) -> Self {
        let info = kind.info();
        let r = info.radius;
        let cs = CacheModelInput::new(grid.leading_bytes(r), cfg.d_w, cfg.n_f, r, info.domain_streams);
        let lups = grid.lups(nt);
        Self {
            schema_version: SCHEMA_VERSION,
            stencil: kind.name().to_string(),
            nx: grid.nx,
            ny: grid.ny,
            nz: grid.nz,
            nt,
            d_w: cfg.d_w,
            n_f: cfg.n_f,
            shape: cfg.shape.to_string(),
            variant: cfg.variant.to_string(),
            n_groups: cfg.groups,
            seed,
            wall_seconds,
            glups: if wall_seconds > 0.0 { lups as f64 / wall_seconds / 1e9 } else { 0.0 },
            model_c_s_bytes: to_f64(cache_block_size(&cs)),
            model_b_c: to_f64(code_balance(cfg.d_w, info.domain_streams, r)),
            verified: None,
        }
    }
}

/// Writes records to stdout, or appends them to `path`. A CSV header is
/// written only when the destination is empty.
pub fn emit(records: &[RunRecord], format: Format, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => {
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .with_context(|| format!("opening {}", p.display()))?;
            let fresh = file.metadata()?.len() == 0;
            write(records, format, fresh, file)
        }
        None => write(records, format, true, io::stdout().lock()),
    }
}

fn write(records: &[RunRecord], format: Format, header: bool, mut out: impl Write) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(header).from_writer(out);
            for r in records {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        Format::Json => {
            for r in records {
                serde_json::to_writer(&mut out, r)?;
                writeln!(out)?;
            }
        }
    }
    Ok(())
}
