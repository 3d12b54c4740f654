use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{anyhow, Context};
use clap::Args;
use posearch::consensus::{compact_chain, read_chain, verify_chain, write_chain, VerifyCache};
use posearch::vm::asm::{assemble, disassemble};
use posearch::vm::{validate_program, Program};

use crate::failure::{config, runtime, Failure};

#[derive(Args)]
pub struct AsmArgs {
    /// Program text, or a binary program with --disassemble.
    pub input: PathBuf,
    /// Write the result here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Turn a binary program back into text.
    #[arg(long)]
    pub disassemble: bool,
}

#[derive(Args)]
pub struct VerifyArgs {
    /// Chain file.
    pub path: PathBuf,
    /// Also write a compacted copy of the chain here.
    #[arg(long)]
    pub compact: Option<PathBuf>,
}

pub fn asm(a: AsmArgs) -> Result<(), Failure> {
    let read_err = |e| config(anyhow::Error::new(e).context(a.input.display().to_string()));
    if a.disassemble {
        let bytes = fs::read(&a.input).map_err(read_err)?;
        let p = Program::from_binary(&bytes).map_err(config)?;
        let text = disassemble(&p);
        match &a.out {
            Some(path) => fs::write(path, text).map_err(config)?,
            None => print!("{text}"),
        }
        return Ok(());
    }
    let source = fs::read_to_string(&a.input).map_err(read_err)?;
    let p = assemble(&source).map_err(config)?;
    validate_program(&p).map_err(config)?;
    let bin = p.to_binary();
    match &a.out {
        Some(path) => fs::write(path, &bin).map_err(config)?,
        None => println!("{}", hex::encode(&bin)),
    }
    eprintln!("{} instructions, {} bytes", p.len(), bin.len());
    Ok(())
}

pub fn verify(a: VerifyArgs) -> Result<(), Failure> {
    let bytes = fs::read(&a.path)
        .with_context(|| a.path.display().to_string())
        .map_err(config)?;
    let chain = read_chain(&bytes).map_err(config)?;
    let report = verify_chain(&chain, &mut VerifyCache::new())
        .map_err(|e| runtime(anyhow!("invalid chain: {e}")))?;
    let s = &report.state;
    println!("valid");
    println!("height {}", s.height().unwrap_or(0));
    println!("tip {}", s.tip_hash().to_hex());
    println!("supply {}", s.total_supply());
    println!("escrow {}", s.total_escrow());
    println!(
        "blocks checked fully {}, relaxed {}; evaluator runs {}",
        report.full_blocks, report.relaxed_blocks, report.evaluator_runs
    );
    if let Some(path) = &a.compact {
        let compacted = compact_chain(&chain);
        let mut w = BufWriter::new(File::create(path).map_err(config)?);
        write_chain(&mut w, &compacted).map_err(runtime)?;
        println!(
            "compacted {} -> {} bytes",
            bytes.len(),
            fs::metadata(path).map_err(config)?.len()
        );
    }
    Ok(())
}
