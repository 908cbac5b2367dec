use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nmt_core::data::{encode_source, synthetic_tsv, Vocab};
use nmt_core::harness::{
    execute_sweep, read_metrics, resume_sweep, BudgetSpec, GridPoint, Registry, RunStatus,
    SweepControl, SweepGrid, SweepOutcome, SweepSpec, TrainSpec, METRICS_FILE, REGISTRY_FILE,
    SRC_VOCAB_FILE, TGT_VOCAB_FILE,
};
use nmt_core::io::write_atomic;
use nmt_core::model::{count_params, greedy_decode, load_model, ModelConfig, ModelParams};
use nmt_core::report::{emit_curves, emit_table, select_best, SummaryTable};
use nmt_core::train::{StopSignal, SystemClock};
use nmt_core::{Error, Result};

use crate::args::{Cli, Command, CountArgs, DataArgs, ReportArgs, RunArgs, SweepArgs, SynthArgs, TrainArgs, TranslateArgs};
use crate::exit;

pub const OUT_ENV: &str = "NMT_ABLATE_OUT";
/// Effective sweep spec, CLI overrides applied.
pub const SPEC_ECHO: &str = "sweep.toml";
pub const PREPARE_ECHO: &str = "prepare.toml";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CURVES_DIR: &str = "curves";

pub fn dispatch(cli: Cli) -> Result<i32> {
    let out = cli.out;
    match cli.command {
        Command::Prepare(a) => prepare(out, a),
        Command::Train(a) => train(out, a),
        Command::Sweep(a) => sweep(out, a),
        Command::Resume => resume(out),
        Command::Report(a) => report(out, a),
        Command::Translate(a) => translate(a),
        Command::CountParams(a) => count(a),
        Command::SynthCorpus(a) => synth(a),
    }
}

fn resolve_out(flag: Option<PathBuf>, from_spec: Option<&Path>) -> PathBuf {
    flag.or_else(|| from_spec.map(Path::to_path_buf))
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn apply_data(spec: &mut SweepSpec, a: &DataArgs) {
    if let Some(c) = &a.corpus {
        spec.corpus = Some(c.clone());
        spec.synthetic_pairs = None;
    }
    if let Some(n) = a.synthetic {
        spec.synthetic_pairs = Some(n);
        spec.corpus = None;
    }
    spec.max_pairs = a.max_pairs.or(spec.max_pairs);
    spec.split_ratio = a.split_ratio.or(spec.split_ratio);
    spec.min_freq = a.min_freq.or(spec.min_freq);
    spec.max_len = a.max_len.or(spec.max_len);
    spec.seed = a.seed.unwrap_or(spec.seed);
}

fn apply_run(spec: &mut SweepSpec, a: &RunArgs) {
    let b = &mut spec.budget;
    b.epoch_cap = a.epochs.or(b.epoch_cap);
    b.extended |= a.extended;
    b.wall_clock_hours = a.wall_clock_hours.or(b.wall_clock_hours);
    b.per_run_minutes = a.per_run_minutes.or(b.per_run_minutes);
    let t = &mut spec.train;
    t.learning_rate = a.lr.or(t.learning_rate);
    t.batch_size = a.batch_size.or(t.batch_size);
    t.grad_clip = a.grad_clip.or(t.grad_clip);
    t.workers = a.workers.or(t.workers);
}

fn empty_spec() -> SweepSpec {
    SweepSpec {
        corpus: None,
        synthetic_pairs: None,
        output_dir: None,
        seed: 0,
        max_pairs: None,
        split_ratio: None,
        min_freq: None,
        max_len: None,
        grid: SweepGrid::default(),
        budget: BudgetSpec::default(),
        train: TrainSpec::default(),
    }
}

fn prepare(out: Option<PathBuf>, a: DataArgs) -> Result<i32> {
    let mut spec = empty_spec();
    apply_data(&mut spec, &a);
    let out = resolve_out(out, None);
    let data = spec.prepare()?;
    create_dir(&out)?;
    data.save(&out)?;
    let opts = spec.data_options();
    let echo = format!(
        "corpus = {:?}\nsynthetic_pairs = {}\ncorpus_sha256 = {:?}\ndata_hash = {:?}\nmax_pairs = {}\nsplit_ratio = {}\nmin_freq = {}\nmax_len = {}\nseed = {}\nsrc_vocab_size = {}\ntgt_vocab_size = {}\n",
        spec.corpus.as_deref().map(|p| p.display().to_string()).unwrap_or_default(),
        spec.synthetic_pairs.unwrap_or(0),
        data.corpus_sha256,
        data.data_hash,
        opts.max_pairs.unwrap_or(0),
        opts.split_ratio,
        opts.min_freq,
        opts.max_len,
        opts.seed,
        data.src_vocab.len(),
        data.tgt_vocab.len(),
    );
    write_atomic(&out.join(PREPARE_ECHO), echo.as_bytes())?;
    println!(
        "{} train / {} validation pairs; vocab {} source, {} target; data hash {}",
        data.train.len(),
        data.val.len(),
        data.src_vocab.len(),
        data.tgt_vocab.len(),
        data.data_hash
    );
    println!("wrote {}", out.display());
    Ok(exit::OK)
}

fn train(out: Option<PathBuf>, a: TrainArgs) -> Result<i32> {
    let mut spec = empty_spec();
    spec.grid = SweepGrid {
        d_model: vec![a.d_model],
        n_heads: vec![a.heads],
        n_layers: vec![a.layers],
        dropout: vec![a.dropout],
        overrides: vec![],
    };
    let p = GridPoint {
        d_model: a.d_model,
        n_heads: a.heads,
        n_layers: a.layers,
        dropout: a.dropout,
    };
    // Reject bad axes before reading the corpus; vocab sizes are placeholders.
    p.config(8, 8, 0, 8).validate()?;
    apply_data(&mut spec, &a.data);
    apply_run(&mut spec, &a.run);
    let out = resolve_out(out, None);
    run_spec(spec, out)
}

fn sweep(out: Option<PathBuf>, a: SweepArgs) -> Result<i32> {
    let text = fs::read_to_string(&a.spec).map_err(|e| io_error(&a.spec, e))?;
    let mut spec = SweepSpec::from_toml_str(&text)?;
    apply_data(&mut spec, &a.data);
    apply_run(&mut spec, &a.run);
    let out = resolve_out(out, spec.output_dir.as_deref());
    run_spec(spec, out)
}

fn stop_on_ctrl_c() -> Arc<StopSignal> {
    let stop = Arc::new(StopSignal::new());
    let handler = stop.clone();
    let result = ctrlc::set_handler(move || {
        if handler.is_requested() {
            eprintln!("second interrupt, exiting without waiting for the epoch");
            std::process::exit(exit::INTERRUPTED);
        }
        eprintln!("interrupt: stopping after the current epoch");
        handler.request();
    });
    if let Err(e) = result {
        log::warn!("cannot install interrupt handler: {e}");
    }
    stop
}

fn run_spec(mut spec: SweepSpec, out: PathBuf) -> Result<i32> {
    spec.output_dir = Some(out.clone());
    let plan = spec.plan()?;
    let echo = spec.to_toml_string();
    let echo_path = out.join(SPEC_ECHO);
    match fs::read_to_string(&echo_path) {
        Ok(prev) if prev != echo => {
            return Err(Error::Integrity(format!(
                "{} holds a different sweep; use `resume` or another --out",
                out.display()
            )))
        }
        Ok(_) => {}
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
        Err(e) => return Err(io_error(&echo_path, e)),
    }
    let data = spec.prepare()?;
    println!("output: {}", out.display());
    print!("{echo}");
    let stop = stop_on_ctrl_c();
    let clock = SystemClock::new();
    let ctl = SweepControl { clock: &clock, stop: &stop };
    let outcome = execute_sweep(&plan, &data, &out, &ctl)?;
    // Written after the plan check inside execute_sweep accepted `out`.
    write_atomic(&echo_path, echo.as_bytes())?;
    finish(&out, outcome)
}

fn resume(out: Option<PathBuf>) -> Result<i32> {
    let out = resolve_out(out, None);
    let echo_path = out.join(SPEC_ECHO);
    let text = fs::read_to_string(&echo_path).map_err(|e| io_error(&echo_path, e))?;
    let spec = SweepSpec::from_toml_str(&text)?;
    let data = spec.prepare()?;
    let stop = stop_on_ctrl_c();
    let clock = SystemClock::new();
    let outcome = resume_sweep(&out, &data, &SweepControl { clock: &clock, stop: &stop })?;
    finish(&out, outcome)
}

fn finish(out: &Path, outcome: SweepOutcome) -> Result<i32> {
    let table = emit_table(&outcome.records);
    write_atomic(&out.join(SUMMARY_FILE), table.to_csv().as_bytes())?;
    print!("{}", table.to_text());
    if outcome.interrupted {
        println!("interrupted; continue with `nmt resume --out {}`", out.display());
        return Ok(exit::INTERRUPTED);
    }
    if outcome.records.iter().any(|r| r.status == RunStatus::HaltedDivergent) {
        return Ok(exit::DIVERGED);
    }
    Ok(exit::OK)
}

fn report(out: Option<PathBuf>, a: ReportArgs) -> Result<i32> {
    let out = resolve_out(out, None);
    let table = match &a.table {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            SummaryTable::parse_csv(&text)?
        }
        None => {
            let records = Registry::new(out.join(REGISTRY_FILE)).replay()?;
            if records.is_empty() {
                return Err(Error::EmptyResult(format!("no runs recorded in {}", out.display())));
            }
            let table = emit_table(&records);
            write_atomic(&out.join(SUMMARY_FILE), table.to_csv().as_bytes())?;
            table
        }
    };
    if a.curves {
        let metrics = read_metrics(&out.join(METRICS_FILE))?;
        let mut ids: Vec<&str> = Vec::new();
        for m in &metrics {
            if !ids.contains(&m.run_id.as_str()) {
                ids.push(&m.run_id);
            }
        }
        if let Some(id) = &a.run {
            ids.retain(|i| i == id);
            if ids.is_empty() {
                return Err(Error::Lookup(format!("no metrics for run {id}")));
            }
        }
        let dir = out.join(CURVES_DIR);
        create_dir(&dir)?;
        for id in ids {
            for path in emit_curves(&metrics, id)?.write(&dir)? {
                println!("{}", path.display());
            }
        }
        return Ok(exit::OK);
    }
    if a.best {
        let best = select_best(&table.rows)?.clone();
        print!("{}", SummaryTable { rows: vec![best] }.to_text());
        return Ok(exit::OK);
    }
    print!("{}", table.to_text());
    Ok(exit::OK)
}

fn find_vocab_dir(checkpoint: &Path) -> Result<PathBuf> {
    checkpoint
        .ancestors()
        .find(|d| d.join(SRC_VOCAB_FILE).is_file() && d.join(TGT_VOCAB_FILE).is_file())
        .map(Path::to_path_buf)
        .ok_or_else(|| {
            Error::Lookup(format!(
                "no {SRC_VOCAB_FILE} above {}; pass --vocab-dir",
                checkpoint.display()
            ))
        })
}

fn translate(a: TranslateArgs) -> Result<i32> {
    let params: ModelParams<f32> = load_model(&a.checkpoint)?;
    let dir = match a.vocab_dir {
        Some(d) => d,
        None => find_vocab_dir(&a.checkpoint)?,
    };
    let src_vocab = Vocab::load(&dir.join(SRC_VOCAB_FILE))?;
    let tgt_vocab = Vocab::load(&dir.join(TGT_VOCAB_FILE))?;
    let cfg = params.config();
    if src_vocab.len() != cfg.src_vocab_size || tgt_vocab.len() != cfg.tgt_vocab_size {
        return Err(Error::Integrity(format!(
            "vocabularies in {} ({}, {}) do not match the checkpoint ({}, {})",
            dir.display(),
            src_vocab.len(),
            tgt_vocab.len(),
            cfg.src_vocab_size,
            cfg.tgt_vocab_size
        )));
    }
    let src = encode_source(&a.text.join(" "), &src_vocab, cfg.max_len);
    let ids = greedy_decode(&params, &src, a.max_out_len)?;
    println!("{}", tgt_vocab.decode(&ids));
    Ok(exit::OK)
}

fn count(a: CountArgs) -> Result<i32> {
    let cfg = ModelConfig::new(a.d_model, a.heads, a.layers, 0.0, a.src_vocab, a.tgt_vocab, 0);
    cfg.validate()?;
    let n = count_params(&cfg);
    println!("{n} ({:.2}M)", n as f64 / 1e6);
    Ok(exit::OK)
}

fn synth(a: SynthArgs) -> Result<i32> {
    let text = synthetic_tsv(a.pairs, a.seed);
    match a.output {
        Some(path) => write_atomic(&path, text.as_bytes())?,
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| io_error(Path::new("<stdout>"), e))?,
    }
    Ok(exit::OK)
}
