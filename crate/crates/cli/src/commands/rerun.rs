use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;

use crate::manifest::{sha256_hex, RunManifest, MANIFEST_FILE};
use crate::{usage, Failure, GlobalOpts, OutArg};

#[derive(Args, Debug)]
pub struct RerunArgs {
    /// manifest.json of the run to replay.
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub out: OutArg,
}

fn absolute(p: &Path) -> Result<PathBuf> {
    Ok(if p.is_absolute() { p.to_path_buf() } else { std::env::current_dir()?.join(p) })
}

pub fn run(g: &GlobalOpts, a: &RerunArgs) -> Result<()> {
    let original = RunManifest::read(&a.manifest)?;
    let out = absolute(&a.out.out)?;
    let original_dir = absolute(a.manifest.parent().unwrap_or(Path::new(".")))?;
    if fs::canonicalize(&original_dir).ok() == fs::canonicalize(&out).ok() {
        return Err(usage("--out must differ from the directory of the replayed run"));
    }
    for input in &original.inputs {
        let bytes = fs::read(&input.path).with_context(|| format!("reading recorded input {}", input.path))?;
        if sha256_hex(&bytes) != input.sha256 {
            bail!("input {} changed since the run (sha256 {} recorded)", input.path, input.sha256);
        }
    }

    let mut argv: Vec<OsString> = vec!["nersplit".into()];
    argv.extend(original.argv.iter().map(OsString::from));
    argv.push("--out".into());
    argv.push(out.clone().into());
    if let Some(t) = g.threads {
        argv.push("--threads".into());
        argv.push(t.to_string().into());
    }
    let here = std::env::current_dir()?;
    std::env::set_current_dir(&original.working_dir)
        .with_context(|| format!("entering recorded working directory {}", original.working_dir))?;
    let code = crate::run_args(argv);
    std::env::set_current_dir(here)?;
    // a failed --check still leaves comparable artifacts behind
    if code != 0 && code != 3 {
        bail!("replayed command exited with status {code}");
    }

    let replay = RunManifest::read(&out.join(MANIFEST_FILE))?;
    let mut problems = Vec::new();
    if replay.config_hash != original.config_hash {
        problems.push(format!("config hash {} differs from recorded {}", replay.config_hash, original.config_hash));
    }
    for rec in &original.outputs {
        match replay.outputs.iter().find(|r| r.path == rec.path) {
            Some(r) if r.sha256 == rec.sha256 => println!("identical {}", rec.path),
            Some(r) => problems.push(format!("{} differs ({} vs {})", rec.path, r.sha256, rec.sha256)),
            None => problems.push(format!("{} was not produced", rec.path)),
        }
    }
    for r in &replay.outputs {
        if !original.outputs.iter().any(|o| o.path == r.path) {
            problems.push(format!("unexpected extra artifact {}", r.path));
        }
    }
    if problems.is_empty() {
        println!("reproduced {} artifact(s) of `{}` byte for byte", original.outputs.len(), original.command);
        Ok(())
    } else {
        for p in &problems {
            eprintln!("mismatch: {p}");
        }
        Err(Failure::Check(format!("{} artifact mismatch(es)", problems.len())).into())
    }
}
