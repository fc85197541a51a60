use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};

use mnm::engine::{Model, Variant};
use mnm::harness::bench::{bench_scaling, growth_exponent, rows_csv, BenchConfig};
use mnm::harness::checkpoint::Checkpoint;
use mnm::harness::config::{RunConfig, KEYS};
use mnm::harness::run::{evaluate_checkpoint, load_model, run_experiment};
use mnm::harness::trace::{matrix_csv, similarity_trace, SimilarityPair};
use mnm::init::{stream_rng, Stream};
use mnm::{Error, Result};

fn with_config_flags(cmd: Command) -> Command {
    let cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .help("key = value configuration file; flags override it"),
    );
    KEYS.iter().fold(cmd, |c, &key| {
        c.arg(Arg::new(key).long(key).value_name("VALUE").num_args(1))
    })
}

fn cli() -> Command {
    Command::new("mnm")
        .about("Train and inspect metalearned neural memory models")
        .subcommand_required(true)
        .subcommand(with_config_flags(Command::new("train").about("Train a model")))
        .subcommand(
            with_config_flags(Command::new("eval").about("Evaluate a checkpoint")).arg(
                Arg::new("checkpoint")
                    .long("checkpoint")
                    .value_name("FILE")
                    .required(true),
            ),
        )
        .subcommand(
            with_config_flags(Command::new("bench").about("Memory scaling benchmark"))
                .arg(
                    Arg::new("lengths")
                        .long("lengths")
                        .value_name("LIST")
                        .default_value("25,50,100,200"),
                )
                .arg(
                    Arg::new("variants")
                        .long("variants")
                        .value_name("LIST")
                        .default_value("lstm-salu,mnm-g,mnm-p"),
                )
                .arg(Arg::new("reps").long("reps").value_name("N").default_value("3")),
        )
        .subcommand(
            with_config_flags(Command::new("trace").about("Similarity matrix over one episode"))
                .arg(Arg::new("checkpoint").long("checkpoint").value_name("FILE"))
                .arg(
                    Arg::new("pair")
                        .long("pair")
                        .value_name("PAIR")
                        .default_value("read-value")
                        .help("read-value, value-value, wkey-wkey or rkey-wkey"),
                )
                .arg(Arg::new("out").long("out").value_name("FILE"))
                .arg(
                    Arg::new("all")
                        .long("all")
                        .action(ArgAction::SetTrue)
                        .help("write every pair"),
                ),
        )
}

fn load_config(m: &ArgMatches) -> Result<RunConfig> {
    let mut cfg = match m.get_one::<String>("config") {
        Some(path) => RunConfig::parse(&std::fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    for &key in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad list entry `{x}`")))
        })
        .collect()
}

fn train(m: &ArgMatches) -> Result<()> {
    let cfg = load_config(m)?;
    let s = run_experiment(&cfg)?;
    println!(
        "iterations {} | token acc {:.4} | seq acc {:.4} | task loss {:.4} | meta loss {:.5}",
        s.iterations, s.last.token_accuracy, s.last.sequence_accuracy, s.last.task_loss, s.last.meta_loss
    );
    println!("checkpoint {}", s.checkpoint.display());
    Ok(())
}

fn eval(m: &ArgMatches) -> Result<()> {
    let cfg = load_config(m)?;
    let path = PathBuf::from(m.get_one::<String>("checkpoint").unwrap());
    let r = evaluate_checkpoint(&cfg, &path)?;
    println!("episodes,task_loss,meta_loss,token_accuracy,sequence_accuracy");
    println!(
        "{},{},{},{},{}",
        r.episodes, r.task_loss, r.meta_loss, r.token_accuracy, r.sequence_accuracy
    );
    Ok(())
}

fn bench(m: &ArgMatches) -> Result<()> {
    let cfg = load_config(m)?;
    let lengths: Vec<usize> = list(m.get_one::<String>("lengths").unwrap())?;
    let variants: Vec<Variant> = list(m.get_one::<String>("variants").unwrap())?;
    let bc = BenchConfig {
        d_k: cfg.d_k,
        d_v: cfg.d_v,
        mem_hidden: cfg.mem_hidden,
        mem_layers: cfg.mem_layers,
        heads: cfg.heads,
        batch: cfg.batch,
        reps: list::<usize>(m.get_one::<String>("reps").unwrap())?[0],
        seed: cfg.resolved_seed()?,
    };
    let rows = bench_scaling(&variants, &lengths, bc)?;
    print!("{}", rows_csv(&rows));
    for v in variants.iter().filter(|v| **v != Variant::Lstm) {
        eprintln!("{v}: log-log slope {:.3}", growth_exponent(&rows, *v));
    }
    Ok(())
}

fn trace(m: &ArgMatches) -> Result<()> {
    let cfg = load_config(m)?;
    let model: Model<f64> = match m.get_one::<String>("checkpoint") {
        Some(p) => load_model(&cfg, &Checkpoint::load(Path::new(p))?)?,
        None => Model::new(cfg.model_config()?, cfg.resolved_seed()?)?,
    };
    let mut rng = stream_rng(cfg.resolved_seed()?, Stream::Trace);
    let episode = cfg.task_spec().generate(&mut rng)?;
    let t = model.run_episode(std::slice::from_ref(&episode), None)?;
    let pairs = if m.get_flag("all") {
        SimilarityPair::ALL.to_vec()
    } else {
        vec![m.get_one::<String>("pair").unwrap().parse()?]
    };
    for pair in pairs {
        let csv = matrix_csv(&similarity_trace(&t, pair, 0)?);
        match m.get_one::<String>("out") {
            Some(out) if pairs_len_one(m) => std::fs::write(out, csv)?,
            Some(out) => std::fs::write(format!("{out}.{}.csv", pair.name()), csv)?,
            None => print!("# {}\n{csv}", pair.name()),
        }
    }
    Ok(())
}

fn pairs_len_one(m: &ArgMatches) -> bool {
    !m.get_flag("all")
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let result = match matches.subcommand() {
        Some(("train", m)) => train(m),
        Some(("eval", m)) => eval(m),
        Some(("bench", m)) => bench(m),
        Some(("trace", m)) => trace(m),
        _ => unreachable!("subcommand required"),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
