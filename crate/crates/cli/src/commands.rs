use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use slstm::eval::{check_compatible, emit_report, evaluate, summary};
use slstm::gradcheck::{self, GradCheckConfig, TOY_VOCAB};
use slstm::network::{tree_forward, write_predictions, PREDICTION_CSV_HEADER};
use slstm::synth::{self, SynthConfig};
use slstm::treebank::{load_corpus, serialize, CorpusStats};
use slstm::{
    Checkpoint, Corpus, LabelMask, LeafCellMode, ModelDims, Scope, Split, Structure, Trainer,
};

use crate::config::TrainFlags;
use crate::{DataCommand, Failure, GradcheckArgs, ModelInput};

pub const CONFIG_ECHO: &str = "config.json";
pub const TRAIN_LOG: &str = "train_log.jsonl";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";

fn load(
    path: &Path,
    split: Split,
    vocab: Option<&slstm::Vocab>,
    classes: usize,
) -> anyhow::Result<Corpus> {
    load_corpus(path, split, vocab, classes).with_context(|| format!("loading {}", path.display()))
}

fn pool(threads: usize) -> Result<rayon::ThreadPool, Failure> {
    if threads == 0 {
        return Err(Failure::Usage("--threads must be positive".into()));
    }
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()?)
}

pub fn train(flags: &TrainFlags, out: Option<PathBuf>) -> Result<(), Failure> {
    let out = out.ok_or_else(|| Failure::Usage("train requires --out".into()))?;
    let cfg = flags.resolve()?;
    let (Some(train_path), Some(dev_path)) = (cfg.train.clone(), cfg.dev.clone()) else {
        return Err(Failure::Usage(
            "train requires --train and --dev (as flags or in --config)".into(),
        ));
    };

    let resume = match &cfg.resume {
        Some(p) => Some(
            Checkpoint::load(p).with_context(|| format!("loading checkpoint {}", p.display()))?,
        ),
        None => None,
    };
    let vocab = resume.as_ref().map(|c| &c.vocab);
    let train = load(&train_path, Split::Train, vocab, cfg.classes)?;
    let dev = load(
        &dev_path,
        Split::Dev,
        Some(vocab.unwrap_or(&train.vocab)),
        cfg.classes,
    )?;
    let (train, dev) = (
        train.with_structure(cfg.structure),
        dev.with_structure(cfg.structure),
    );
    eprintln!(
        "train: {} trees, vocab {} | dev: {} trees ({} unknown tokens)",
        train.len(),
        train.vocab.size(),
        dev.len(),
        dev.unknown_tokens
    );

    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(
        out.join(CONFIG_ECHO),
        serde_json::to_string_pretty(&cfg)? + "\n",
    )?;

    let mut trainer = match resume {
        Some(mut ckpt) => {
            ckpt.config = cfg.training.clone();
            Trainer::resume(ckpt, train, dev)?
        }
        None => Trainer::new(cfg.training.clone(), train, dev)?,
    };
    let log_file = fs::OpenOptions::new()
        .create(true)
        .append(cfg.resume.is_some())
        .write(true)
        .truncate(cfg.resume.is_none())
        .open(out.join(TRAIN_LOG))?;
    let mut log = BufWriter::new(log_file);
    trainer.run(|entry, t| {
        writeln!(log, "{}", serde_json::to_string(entry)?)?;
        log.flush()?;
        eprintln!(
            "epoch {:>3}  {:>7.2}s  loss {:.4}  dev root {:.4}  dev all {:.4}",
            entry.epoch, entry.seconds, entry.train_loss, entry.dev_root_acc, entry.dev_all_acc
        );
        t.checkpoint().save(out.join(LAST_CHECKPOINT))?;
        if t.best().is_some_and(|b| b.epoch == entry.epoch) {
            t.best_checkpoint()
                .expect("best exists")
                .save(out.join(BEST_CHECKPOINT))?;
        }
        Ok(())
    })?;
    if let Some(b) = trainer.best() {
        println!(
            "best dev root accuracy {:.4} at epoch {}",
            b.dev_root_acc, b.epoch
        );
    }
    Ok(())
}

fn load_model(model: &ModelInput) -> Result<(Checkpoint, Corpus), Failure> {
    let ckpt = Checkpoint::load(&model.checkpoint)
        .with_context(|| format!("loading checkpoint {}", model.checkpoint.display()))?;
    let corpus = load(
        &model.data,
        Split::Test,
        Some(&ckpt.vocab),
        ckpt.params.num_classes(),
    )?;
    check_compatible(&ckpt.params, &corpus).with_context(|| {
        format!(
            "{} does not fit checkpoint {}",
            model.data.display(),
            model.checkpoint.display()
        )
    })?;
    Ok((ckpt, corpus.with_structure(model.structure)))
}

pub fn eval(model: &ModelInput, scope: Scope, out: &Path) -> Result<(), Failure> {
    let pool = pool(model.threads)?;
    let (ckpt, corpus) = load_model(model)?;
    let metrics = pool.install(|| evaluate(&ckpt.params, &corpus, scope, ckpt.config.leaf_cell))?;
    emit_report(&metrics, out).with_context(|| format!("writing reports to {}", out.display()))?;
    println!("{}", serde_json::to_string(&summary(&metrics))?);
    Ok(())
}

pub fn predict(model: &ModelInput, out: &Path) -> Result<(), Failure> {
    let pool = pool(model.threads)?;
    let (ckpt, corpus) = load_model(model)?;
    let rows: Vec<Vec<u8>> = pool.install(|| {
        corpus
            .trees
            .par_iter()
            .enumerate()
            .map(|(i, tree)| {
                let states = tree_forward(&ckpt.params, tree, ckpt.config.leaf_cell)?;
                let mut buf = Vec::new();
                write_predictions(&mut buf, i, tree, &states)?;
                Ok(buf)
            })
            .collect::<anyhow::Result<_>>()
    })?;
    let mut w =
        BufWriter::new(File::create(out).with_context(|| format!("creating {}", out.display()))?);
    writeln!(w, "{PREDICTION_CSV_HEADER}")?;
    for r in rows {
        w.write_all(&r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn gradcheck(args: &GradcheckArgs) -> Result<(), Failure> {
    if args.dim == 0 || args.classes < 2 || args.epsilon <= 0.0 {
        return Err(Failure::Usage(
            "need --dim > 0, --classes >= 2 and --epsilon > 0".into(),
        ));
    }
    let masks = args.mask.map_or(LabelMask::ALL.to_vec(), |m| vec![m]);
    let leaves = if args.all_leaf_cells {
        LeafCellMode::ALL.to_vec()
    } else {
        vec![args.leaf_cell.unwrap_or_default()]
    };
    let trees = gradcheck::random_trees(args.seed, args.trees, args.depth, args.classes);
    let params = gradcheck::random_params(
        ModelDims::new(args.dim, TOY_VOCAB + 1, args.classes),
        args.seed,
        args.scale,
    );

    let mut all_pass = true;
    let mut json = Vec::new();
    for &mask in &masks {
        for &leaf_cell in &leaves {
            let cfg = GradCheckConfig {
                mask,
                leaf_cell,
                lambda: args.lambda,
                epsilon: args.epsilon,
                tol: args.tol,
            };
            let report = gradcheck::check(&params, &trees, &cfg)?;
            println!("== mask {mask}, leaf cell {leaf_cell}\n{report}\n");
            all_pass &= report.pass;
            json.push(
                serde_json::json!({ "mask": mask, "leaf_cell": leaf_cell, "report": report }),
            );
        }
    }
    if let Some(path) = &args.json {
        fs::write(path, serde_json::to_string_pretty(&json)? + "\n")?;
    }
    if all_pass {
        Ok(())
    } else {
        Err(Failure::Runtime(anyhow::anyhow!("gradient check failed")))
    }
}

pub fn data(cmd: DataCommand) -> Result<(), Failure> {
    match cmd {
        DataCommand::Stats {
            input,
            split,
            classes,
        } => {
            let c = load(&input, split, None, classes)?;
            let s = c.stats();
            println!("{}\n{}", CorpusStats::CSV_HEADER, s.csv_row());
            eprintln!(
                "{} trees, {} labeled nodes, vocab {}",
                s.trees,
                s.labeled,
                c.vocab.num_words()
            );
        }
        DataCommand::Validate { input, classes } => {
            let c = load(&input, Split::Train, None, classes)?;
            println!("ok: {} trees", c.len());
        }
        DataCommand::Restructure {
            input,
            out,
            structure,
        } => {
            if structure == Structure::Parse {
                return Err(Failure::Usage(
                    "restructure needs chain_lr or chain_rr".into(),
                ));
            }
            let text = fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let mut w = BufWriter::new(File::create(&out)?);
            for (i, line) in text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
            {
                let tree = slstm::treebank::parse_sexpr(line)
                    .with_context(|| format!("line {}", i + 1))?;
                let chain =
                    slstm::treebank::restructure_chain(&tree, structure.chain().expect("chain"));
                writeln!(w, "{}", serialize(&chain))?;
            }
            w.flush()?;
        }
        DataCommand::Synth {
            out,
            sentences,
            seed,
            min_len,
            max_len,
        } => {
            if min_len == 0 || min_len > max_len {
                return Err(Failure::Usage("need 1 <= --min-len <= --max-len".into()));
            }
            let trees = synth::generate(&SynthConfig {
                sentences,
                min_len,
                max_len,
                seed,
            });
            let mut w = BufWriter::new(File::create(&out)?);
            for t in &trees {
                writeln!(w, "{}", serialize(t))?;
            }
            w.flush()?;
        }
    }
    Ok(())
}
