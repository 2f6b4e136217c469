use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use comblab::comb::validate_deterministic;
use comblab::commitment::{build_cheat, concealment_epsilon, demo, verify_cheat, CheatReport, ConcealReport, Verdict};
use comblab::conditional::validate_conditional;
use comblab::config::{OutputFormat, RunConfig};
use comblab::discrimination::{disc_distance, op_distance};
use comblab::tester::validate_tester;
use comblab::{Document, Error, QuantumComb, TesterSet};

const ACCEPT: u8 = 0;
const REJECT: u8 = 1;
const MALFORMED: u8 = 2;

#[derive(Parser)]
#[command(name = "comblab", version, about = "Quantum combs, testers and bit-commitment cheats")]
struct Cli {
    /// JSON run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// overrides the config file and COMBLAB_SEED
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    json: bool,
    #[arg(long, global = true)]
    dim_cap: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Op,
    Disc,
}

#[derive(Subcommand)]
enum Command {
    /// Check normalization of a comb, conditional comb, tester or protocol
    Validate { file: PathBuf },
    /// Distance between two combs
    Distance {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_enum, default_value = "disc")]
        mode: Mode,
        /// `unrestricted` or a tester / tester-list file
        #[arg(long, default_value = "unrestricted")]
        testers: String,
    },
    /// Concealment, cheat construction and verification for a protocol
    Conceal {
        protocol: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        skip_cheat: bool,
    },
    /// Write a demo protocol (plaintext, fixed-state, epr, theta:<x>, coin2round)
    Demo {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Ctx {
    cfg: RunConfig,
}

impl Ctx {
    fn json(&self) -> bool {
        self.cfg.output == OutputFormat::Json
    }

    fn emit<T: Serialize>(&self, value: &T, text: impl FnOnce() -> String) -> comblab::Result<()> {
        if self.json() {
            say(&(serde_json::to_string_pretty(value)? + "\n"))
        } else {
            say(&text())
        }
    }
}

/// Writes to stdout; a closed pipe is not an error.
fn say(s: &str) -> comblab::Result<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(s.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn load_config(cli: &Cli) -> comblab::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_json(&std::fs::read_to_string(p)?)?,
        None => RunConfig::default(),
    }
    .with_env()?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(c) = cli.dim_cap {
        cfg.dim_cap = c;
    }
    if cli.json {
        cfg.output = OutputFormat::Json;
    }
    Ok(cfg)
}

fn check_cap(ctx: &Ctx, d: usize) -> comblab::Result<()> {
    if d > ctx.cfg.dim_cap {
        return Err(Error::DimensionCap { required: d, cap: ctx.cfg.dim_cap });
    }
    Ok(())
}

fn validate(ctx: &Ctx, path: &Path) -> comblab::Result<u8> {
    let tol = ctx.cfg.tolerances.tol_norm;
    let doc = Document::read(path)?;
    let accepted = match &doc {
        Document::Comb(c) => {
            check_cap(ctx, c.layout().total_dim())?;
            let r = validate_deterministic(c, tol);
            ctx.emit(&r, || {
                let mut s = format!("comb: psd {} (min eigenvalue {:.3e})\n", r.psd, r.min_eigenvalue);
                for l in &r.levels {
                    s += &format!("  level {}: deviation {:.3e}\n", l.level, l.deviation);
                }
                s + &verdict_line(r.accepted, r.first_failing_level(tol).map(|l| format!("level {l} violated")))
            })?;
            r.accepted
        }
        Document::Conditional(cc) => {
            let r = validate_conditional(cc, tol)?;
            ctx.emit(&r, || {
                let mut s = format!("conditional comb: psd {} (min eigenvalue {:.3e})\n", r.psd, r.min_eigenvalue);
                for l in &r.levels {
                    s += &format!("  level {} prefix {}: deviation {:.3e}\n", l.level, l.prefix, l.deviation);
                }
                s + &verdict_line(r.accepted, r.first_failing(tol).map(|l| format!("level {} violated at prefix {}", l.level, l.prefix)))
            })?;
            r.accepted
        }
        Document::Tester(t) => {
            check_cap(ctx, t.layout.total_dim())?;
            let r = validate_tester(t);
            ctx.emit(&r, || {
                format!("tester: {} outcomes, trace deviation {:.3e}\n", t.outcomes.len(), r.trace_deviation)
                    + &verdict_line(r.normalized, r.norm.first_failing_level(tol).map(|l| format!("level {l} violated")))
            })?;
            r.normalized
        }
        Document::TesterList { testers } => {
            let rs: Vec<_> = testers.iter().map(validate_tester).collect();
            let ok = rs.iter().all(|r| r.normalized);
            ctx.emit(&rs, || verdict_line(ok, None))?;
            ok
        }
        Document::Protocol(p) => {
            let (r0, r1) = p.validate(tol)?;
            let ok = r0.accepted && r1.accepted;
            ctx.emit(&(r0.clone(), r1.clone()), || {
                format!("protocol {}: strategy 0 {}, strategy 1 {}\n", p.name, word(r0.accepted), word(r1.accepted)) + &verdict_line(ok, None)
            })?;
            ok
        }
    };
    Ok(if accepted { ACCEPT } else { REJECT })
}

fn word(ok: bool) -> &'static str {
    if ok {
        "valid"
    } else {
        "invalid"
    }
}

fn verdict_line(ok: bool, why: Option<String>) -> String {
    match (ok, why) {
        (true, _) => "ACCEPT\n".into(),
        (false, Some(w)) => format!("REJECT: {w}\n"),
        (false, None) => "REJECT\n".into(),
    }
}

fn read_comb(path: &Path) -> comblab::Result<QuantumComb> {
    match Document::read(path)? {
        Document::Comb(c) => Ok(c),
        other => Err(Error::InvalidInput(format!("{}: expected a comb, found {}", path.display(), other.kind()))),
    }
}

fn distance(ctx: &Ctx, a: &Path, b: &Path, mode: Mode, testers: &str) -> comblab::Result<u8> {
    let (r0, r1) = (read_comb(a)?, read_comb(b)?);
    check_cap(ctx, r0.layout().total_dim())?;
    let set = if testers == "unrestricted" {
        TesterSet::unrestricted(r0.layout())
    } else {
        let list = match Document::read(Path::new(testers))? {
            Document::Tester(t) => vec![t],
            Document::TesterList { testers } => testers,
            other => return Err(Error::InvalidInput(format!("{testers}: expected testers, found {}", other.kind()))),
        };
        TesterSet::explicit(&list, r0.layout())?
    };
    let res = match mode {
        Mode::Op => op_distance(&r0, &r1, &set)?,
        Mode::Disc => disc_distance(&r0, &r1, &set, ctx.cfg.seed)?,
    };
    ctx.emit(&res, || format!("d = {:.10}\ncertificate gap {:.3e} after {} iterations\n", res.value, res.gap, res.iterations))?;
    Ok(ACCEPT)
}

#[derive(Serialize)]
struct ConcealOutput<'a> {
    concealment: &'a ConcealReport,
    cheat: Option<&'a CheatReport>,
    verdict: Option<&'a Verdict>,
}

fn conceal_text(c: &ConcealReport, cheat: Option<&CheatReport>, v: Option<&Verdict>) -> String {
    let mut s = format!("{:<12} {:>12} {:>12} {:>12}  result\n", "history", "eps_s", "delta_s", "bound");
    for (k, e) in c.histories.iter().enumerate() {
        match cheat.map(|r| &r.histories[k]) {
            Some(h) => {
                s += &format!(
                    "{:<12} {:>12.8} {:>12.8} {:>12.8}  {}\n",
                    e.history.to_string(),
                    h.epsilon,
                    h.delta,
                    h.bound,
                    if h.pass { "pass" } else { "FAIL" }
                )
            }
            None => {
                s += &format!("{:<12} {:>12.8} {:>12} {:>12}  {}\n", e.history.to_string(), e.epsilon, "-", "-", if e.abort_only { "abort-only" } else { "" })
            }
        }
    }
    s += &format!("epsilon = {:.10}\n", c.epsilon);
    if let Some(r) = cheat {
        s += &format!("delta = {:.10}  sqrt(2 epsilon) = {:.10}\n", r.delta, r.bound);
    }
    if let Some(v) = v {
        for p in &v.problems {
            s += &format!("problem: {p}\n");
        }
        s += &verdict_line(v.pass, None);
    }
    s
}

fn conceal(ctx: &Ctx, path: &Path, out: Option<&Path>, skip_cheat: bool) -> comblab::Result<u8> {
    let p = match Document::read(path)? {
        Document::Protocol(p) => p,
        other => return Err(Error::InvalidInput(format!("expected a protocol, found {}", other.kind()))),
    };
    let seed = ctx.cfg.seed;
    let c = concealment_epsilon(&p, seed)?;
    let (cheat, verdict) = if skip_cheat {
        (None, None)
    } else {
        let r = build_cheat(&p, seed, ctx.cfg.tolerances.tol_verify)?;
        let v = verify_cheat(&p, &r, seed ^ 0x5eed)?;
        (Some(r), Some(v))
    };
    if let (Some(path), Some(r)) = (out, &cheat) {
        std::fs::write(path, serde_json::to_string_pretty(r)?)?;
    }
    ctx.emit(&ConcealOutput { concealment: &c, cheat: cheat.as_ref(), verdict: verdict.as_ref() }, || conceal_text(&c, cheat.as_ref(), verdict.as_ref()))?;
    Ok(if verdict.is_none_or(|v| v.pass) { ACCEPT } else { REJECT })
}

fn run_demo(name: &str, out: Option<&Path>) -> comblab::Result<u8> {
    let json = Document::Protocol(demo(name)?).to_json()?;
    match out {
        Some(p) => std::fs::write(p, json + "\n")?,
        None => say(&(json + "\n"))?,
    }
    Ok(ACCEPT)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = load_config(&cli).and_then(|cfg| {
        let ctx = Ctx { cfg };
        match &cli.command {
            Command::Validate { file } => validate(&ctx, file),
            Command::Distance { a, b, mode, testers } => distance(&ctx, a, b, *mode, testers),
            Command::Conceal { protocol, out, skip_cheat } => conceal(&ctx, protocol, out.as_deref(), *skip_cheat),
            Command::Demo { name, out } => run_demo(name, out.as_deref()),
        }
    });
    match res {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(MALFORMED)
        }
    }
}
