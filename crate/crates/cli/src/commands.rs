use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Read as _, Write as _};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::info;

use bleach_core::bleach::{bleach_document, tokenize, Channel, FrequencyTable};
use bleach_core::corpus::{load_corpus, normalize_text, Corpus, Language, UserRecord};
use bleach_core::embed::{align, build_pseudo_dictionary, load_embeddings, EmbeddingTable};
use bleach_core::eval::{
    self, fleiss_kappa, parse_annotations, results_table, results_tsv, top_feature_report, ExperimentConfig,
    FeatureReport, PairwiseMatrix, ResultRow,
};
use bleach_core::exec::Execution;
use bleach_core::features::{FeatureSpec, Mode, NgramRange, Weighting};
use bleach_core::linear::{load_model, save_model, LinearModel, TrainerConfig};
use bleach_core::synth::{generate, SynthConfig};

use crate::manifest::{sibling_manifest, Recorder};
use crate::{
    AlignArgs, BleachArgs, Command, CvArgs, EvaluateArgs, FeatureArgs, FeaturesArgs, KappaArgs, ModeArg, PredictArgs,
    Setting, SolverArgs, SynthArgs, TrainArgs, WeightingArg, XlangArgs,
};

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Bleach(a) => bleach(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Cv(a) => cv(a),
        Command::Xlang(a) => xlang(a),
        Command::Features(a) => features(a),
        Command::Kappa(a) => kappa(a),
        Command::Align(a) => align_cmd(a),
        Command::Synth(a) => synth(a),
    }
}

/// `lang=path`, or a bare path whose file stem names the language.
fn split_lang_path(arg: &str) -> Result<(Language, PathBuf)> {
    if let Some((lang, path)) = arg.split_once('=') {
        if lang.is_empty() || path.is_empty() {
            bail!(bleach_core::Error::validation(format!("malformed corpus argument {arg:?}")));
        }
        return Ok((Language::new(lang), PathBuf::from(path)));
    }
    let path = PathBuf::from(arg);
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .filter(|s| !s.is_empty())
        .ok_or_else(|| bleach_core::Error::validation(format!("cannot infer a language from {arg:?}")))?;
    Ok((Language::new(stem), path))
}

fn read_corpus(arg: &str, rec: &mut Recorder) -> Result<Corpus> {
    let (lang, path) = split_lang_path(arg)?;
    let c = load_corpus(&path, lang)?;
    rec.input(&path)?;
    Ok(c)
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

fn feature_spec(a: &FeatureArgs) -> Result<FeatureSpec> {
    let mut spec = match a.mode {
        ModeArg::Lexical => FeatureSpec::lexical(),
        ModeArg::Abstract | ModeArg::Embeds => FeatureSpec::abstract_all(),
    };
    if spec.mode == Mode::Abstract {
        spec.channels = Channel::parse_set(&a.channels)?;
    }
    if let Some(r) = &a.ngrams {
        spec.token_ngrams = NgramRange::parse(r)?;
    }
    if let Some(r) = &a.char_ngrams {
        spec.char_ngrams = if r == "none" { None } else { Some(NgramRange::parse(r)?) };
    }
    spec.weighting = match a.weighting {
        WeightingArg::Tfidf => Weighting::TfIdf,
        WeightingArg::Binary => Weighting::Binary,
    };
    if let Some(m) = a.min_df {
        spec.min_df = m;
    }
    if let Some(m) = a.char_min_df {
        spec.char_min_df = m;
    }
    spec.validate()?;
    Ok(spec)
}

fn experiment(spec: FeatureSpec, s: &SolverArgs) -> Result<ExperimentConfig> {
    let cfg = ExperimentConfig {
        spec,
        trainer: TrainerConfig {
            c: s.c,
            tolerance: s.tolerance,
            max_epochs: s.max_epochs,
            seed: s.seed,
        },
        tweets_per_user: s.tweets_per_user,
        folds: 10,
        seed: s.seed,
        execution: execution(s.sequential),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn prepare(c: &Corpus, cfg: &ExperimentConfig, s: &SolverArgs) -> Result<Corpus> {
    if s.no_prepare {
        return Ok(c.clone());
    }
    let p = eval::prepare_corpus(c, cfg)?;
    info!("{}: {} users after balancing ({} before)", c.language, p.len(), c.len());
    Ok(p)
}

fn create_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_results(rec: &mut Recorder, dir: &Path, rows: &[ResultRow]) -> Result<()> {
    rec.write(&dir.join("results.tsv"), results_tsv(rows))?;
    rec.write(&dir.join("results.txt"), results_table(rows))?;
    print!("{}", results_table(rows));
    Ok(())
}

fn no_embeds(a: &FeatureArgs, cmd: &str) -> Result<()> {
    if a.mode == ModeArg::Embeds {
        bail!(bleach_core::Error::config(format!("--mode=embeds is only available for xlang, not {cmd}")));
    }
    Ok(())
}

fn bleach(a: BleachArgs) -> Result<()> {
    let channels = Channel::parse_set(&a.channels)?;
    let mut input = String::new();
    io::stdin().read_to_string(&mut input).context("reading stdin")?;
    let tweets: Vec<String> = input
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(normalize_text)
        .collect();
    let table = match &a.freq_table {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let counts: HashMap<String, u64> = serde_json::from_str(&text)
                .map_err(|e| bleach_core::Error::validation(format!("{}: {e}", path.display())))?;
            FrequencyTable::from_counts(counts)
        }
        None => {
            info!("no --freq-table given, counting tokens of the input itself");
            let mut counts: HashMap<String, u64> = HashMap::new();
            for t in &tweets {
                for tok in tokenize(t) {
                    *counts.entry(tok.to_string()).or_default() += 1;
                }
            }
            FrequencyTable::from_counts(counts)
        }
    };
    let doc = bleach_document(&tweets, &channels, Some(&table))?;
    let mut out = String::new();
    for (ch, toks) in &doc.channels {
        writeln!(out, "{}\t{}", ch.name(), toks.join(" ")).unwrap();
    }
    io::stdout().write_all(out.as_bytes())?;
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    no_embeds(&a.features, "train")?;
    let cfg = experiment(feature_spec(&a.features)?, &a.solver)?;
    let mut rec = Recorder::start("train", Some(a.solver.seed));
    let corpus = prepare(&read_corpus(&a.corpus, &mut rec)?, &cfg, &a.solver)?;
    let users: Vec<&UserRecord> = corpus.users.iter().collect();
    let model = eval::fit(&users, &cfg)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_out_dir(parent)?;
    }
    save_model(&model, &a.out)?;
    rec.output(&a.out);
    eprintln!(
        "trained on {} users of {}: {} features",
        users.len(),
        corpus.language,
        model.featurizer.vocab.len()
    );
    rec.finish(&sibling_manifest(&a.out))
}

fn predict(a: PredictArgs) -> Result<()> {
    let mut rec = Recorder::start("predict", None);
    let model = load_model(&a.model)?;
    rec.input(&a.model)?;
    let corpus = read_corpus(&a.corpus, &mut rec)?;
    let exec = execution(a.sequential);
    let rows = exec.try_map(&corpus.users, |u| -> bleach_core::Result<String> {
        let d = model.decision(&model.featurizer.transform(u)?)?;
        let pred = model.predict(&model.featurizer.transform(u)?)?;
        Ok(format!("{}\t{}\t{}\t{:.6}\n", u.user_id, u.gender, pred, d))
    })?;
    let mut tsv = String::from("user_id\tgold\tpredicted\tdecision\n");
    tsv.extend(rows);
    match &a.out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                create_out_dir(parent)?;
            }
            rec.write(path, &tsv)?;
            rec.finish(&sibling_manifest(path))
        }
        None => {
            io::stdout().write_all(tsv.as_bytes())?;
            Ok(())
        }
    }
}

fn model_label(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string()
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let mut rec = Recorder::start("evaluate", None);
    let model = load_model(&a.model)?;
    rec.input(&a.model)?;
    let corpus = read_corpus(&a.corpus, &mut rec)?;
    let users: Vec<&UserRecord> = corpus.users.iter().collect();
    let acc = eval::score(&model, &users, execution(a.sequential))?;
    let rows = [ResultRow::new("evaluate", model_label(&a.model), corpus.language.as_str(), acc)];
    match &a.out {
        Some(dir) => {
            create_out_dir(dir)?;
            write_results(&mut rec, dir, &rows)?;
            rec.finish(&dir.join("manifest.json"))
        }
        None => {
            print!("{}", results_table(&rows));
            Ok(())
        }
    }
}

fn mode_name(m: ModeArg) -> &'static str {
    match m {
        ModeArg::Lexical => "lexical",
        ModeArg::Abstract => "abstract",
        ModeArg::Embeds => "embeds",
    }
}

fn cv(a: CvArgs) -> Result<()> {
    no_embeds(&a.features, "cv")?;
    let mut cfg = experiment(feature_spec(&a.features)?, &a.solver)?;
    cfg.folds = a.folds;
    cfg.validate()?;
    let mut rec = Recorder::start("cv", Some(a.solver.seed));
    let corpus = prepare(&read_corpus(&a.corpus, &mut rec)?, &cfg, &a.solver)?;
    let res = eval::run_cv(&corpus, &cfg)?;
    create_out_dir(&a.out)?;
    let lang = corpus.language.as_str();
    let mut folds = String::from("fold\taccuracy\n");
    for (i, acc) in res.per_fold.iter().enumerate() {
        writeln!(folds, "{}\t{:.3}", i + 1, acc).unwrap();
    }
    rec.write(&a.out.join("folds.tsv"), folds)?;
    let rows = [ResultRow::new(format!("cv-{}", mode_name(a.features.mode)), lang, lang, res.mean)];
    write_results(&mut rec, &a.out, &rows)?;
    rec.finish(&a.out.join("manifest.json"))
}

fn load_tables(args: &[String], rec: &mut Recorder) -> Result<BTreeMap<Language, EmbeddingTable>> {
    let mut tables = BTreeMap::new();
    for arg in args {
        let (lang, path) = split_lang_path(arg)?;
        let t = load_embeddings(&path, lang.clone())?;
        rec.input(&path)?;
        tables.insert(lang, t);
    }
    Ok(tables)
}

fn xlang(a: XlangArgs) -> Result<()> {
    let cfg = experiment(feature_spec(&a.features)?, &a.solver)?;
    let mut rec = Recorder::start("xlang", Some(a.solver.seed));
    let mut corpora = Vec::new();
    for arg in &a.train {
        corpora.push(prepare(&read_corpus(arg, &mut rec)?, &cfg, &a.solver)?);
    }
    let target = match &a.test {
        Some(t) => Some(prepare(&read_corpus(t, &mut rec)?, &cfg, &a.solver)?),
        None => None,
    };
    let embeds = a.features.mode == ModeArg::Embeds;
    let tables = if embeds {
        if a.embeddings.is_empty() {
            bail!(bleach_core::Error::config("--mode=embeds needs --embeddings lang=path,..."));
        }
        load_tables(&a.embeddings, &mut rec)?
    } else {
        BTreeMap::new()
    };
    let mode = mode_name(a.features.mode);
    let single = |src: &Corpus, tgt: &Corpus| -> Result<f64> {
        Ok(if embeds {
            eval::run_cross_all_embeddings(&[src], tgt, &tables, &cfg)?
        } else {
            eval::run_cross_all(&[src], tgt, &cfg)?
        })
    };

    let mut rows = Vec::new();
    let mut matrix_text = None;
    match a.setting {
        Setting::Avg | Setting::All => {
            let target = target
                .as_ref()
                .ok_or_else(|| bleach_core::Error::validation("--test is required for --setting=avg|all"))?;
            let sources: Vec<&Corpus> = corpora.iter().collect();
            let src_names = sources.iter().map(|c| c.language.as_str()).collect::<Vec<_>>().join(",");
            let tgt = target.language.as_str();
            if a.setting == Setting::All {
                let acc = if embeds {
                    eval::run_cross_all_embeddings(&sources, target, &tables, &cfg)?
                } else {
                    eval::run_cross_all(&sources, target, &cfg)?
                };
                rows.push(ResultRow::new(format!("{mode}-all"), src_names, tgt, acc));
            } else {
                let pairs: Vec<(String, f64)> = if embeds {
                    cfg.execution.try_map(&sources, |s| {
                        single(s, target).map(|acc| (s.language.as_str().to_string(), acc))
                    })?
                } else {
                    eval::run_cross_avg(&sources, target, &cfg)?
                        .pairs
                        .into_iter()
                        .map(|(l, acc)| (l.as_str().to_string(), acc))
                        .collect()
                };
                let mean = pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64;
                for (src, acc) in pairs {
                    rows.push(ResultRow::new(format!("{mode}-pair"), src, tgt, acc));
                }
                rows.push(ResultRow::new(format!("{mode}-avg"), src_names, tgt, mean));
            }
        }
        Setting::Pairwise => {
            corpora.extend(target);
            let refs: Vec<&Corpus> = corpora.iter().collect();
            let m = if embeds {
                let n = refs.len();
                let cells: Vec<(usize, usize)> =
                    (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).collect();
                let accs = cfg.execution.try_map(&cells, |&(i, j)| single(refs[i], refs[j]))?;
                let mut acc = vec![vec![None; n]; n];
                for (&(i, j), v) in cells.iter().zip(accs) {
                    acc[i][j] = Some(v);
                }
                PairwiseMatrix {
                    languages: refs.iter().map(|c| c.language.clone()).collect(),
                    acc,
                }
            } else {
                eval::run_pairwise(&refs, &cfg)?
            };
            for (i, src) in m.languages.iter().enumerate() {
                for (j, tgt) in m.languages.iter().enumerate() {
                    if let Some(acc) = m.acc[i][j] {
                        rows.push(ResultRow::new(format!("{mode}-pair"), src.as_str(), tgt.as_str(), acc));
                    }
                }
            }
            for (j, tgt) in m.languages.iter().enumerate() {
                let others = m
                    .languages
                    .iter()
                    .filter(|l| *l != tgt)
                    .map(|l| l.as_str())
                    .collect::<Vec<_>>()
                    .join(",");
                rows.push(ResultRow::new(format!("{mode}-avg"), others, tgt.as_str(), m.avg_for_target(j)));
            }
            matrix_text = Some(m.to_text());
        }
    }
    create_out_dir(&a.out)?;
    if let Some(text) = matrix_text {
        rec.write(&a.out.join("matrix.txt"), text)?;
    }
    write_results(&mut rec, &a.out, &rows)?;
    rec.finish(&a.out.join("manifest.json"))
}

fn report_tsv(r: &FeatureReport) -> String {
    let mut s = String::from("gender\trank\tfeature\tscore\tmean_abs_weight\n");
    for (g, list) in [("F", &r.female), ("M", &r.male)] {
        for (i, f) in list.iter().enumerate() {
            writeln!(s, "{g}\t{}\t{}\t{}\t{:.6}", i + 1, f.feature, f.score, f.mean_abs_weight).unwrap();
        }
    }
    s
}

fn features(a: FeaturesArgs) -> Result<()> {
    no_embeds(&a.features, "features")?;
    let mut rec = Recorder::start("features", Some(a.solver.seed));
    let models: Vec<(Language, LinearModel)> = if !a.models.is_empty() {
        let mut out = Vec::new();
        for arg in &a.models {
            let (lang, path) = split_lang_path(arg)?;
            out.push((lang, load_model(&path)?));
            rec.input(&path)?;
        }
        out
    } else if !a.corpora.is_empty() {
        let cfg = experiment(feature_spec(&a.features)?, &a.solver)?;
        let mut corpora = Vec::new();
        for arg in &a.corpora {
            corpora.push(prepare(&read_corpus(arg, &mut rec)?, &cfg, &a.solver)?);
        }
        cfg.execution.try_map(&corpora, |c| -> bleach_core::Result<(Language, LinearModel)> {
            let users: Vec<&UserRecord> = c.users.iter().collect();
            Ok((c.language.clone(), eval::fit(&users, &cfg)?))
        })?
    } else {
        bail!(bleach_core::Error::validation("give either --corpora or --models"));
    };
    let refs: Vec<(Language, &LinearModel)> = models.iter().map(|(l, m)| (l.clone(), m)).collect();
    let report = top_feature_report(&refs, a.k)?;
    create_out_dir(&a.out)?;
    rec.write(&a.out.join("report.tsv"), report_tsv(&report))?;
    let text = report.to_text(a.k);
    rec.write(&a.out.join("report.txt"), &text)?;
    print!("{text}");
    rec.finish(&a.out.join("manifest.json"))
}

fn kappa(a: KappaArgs) -> Result<()> {
    let mut rec = Recorder::start("kappa", None);
    let text = fs::read_to_string(&a.annotations).with_context(|| format!("reading {}", a.annotations.display()))?;
    rec.input(&a.annotations)?;
    let table = parse_annotations(&text)?;
    let k = fleiss_kappa(&table.counts)?;
    let raters: u32 = table.counts.first().map(|r| r.iter().sum()).unwrap_or(0);
    let out = format!(
        "items\traters\tcategories\tkappa\n{}\t{}\t{}\t{:.6}\n",
        table.items.len(),
        raters,
        table.categories.len(),
        k
    );
    print!("{out}");
    if let Some(dir) = &a.out {
        create_out_dir(dir)?;
        rec.write(&dir.join("kappa.tsv"), &out)?;
        rec.finish(&dir.join("manifest.json"))?;
    }
    Ok(())
}

fn align_cmd(a: AlignArgs) -> Result<()> {
    let mut rec = Recorder::start("align", None);
    let load = |p: &Path, rec: &mut Recorder| -> Result<EmbeddingTable> {
        let (lang, path) = split_lang_path(p.to_str().ok_or_else(|| anyhow!("non-UTF-8 path {}", p.display()))?)?;
        let t = load_embeddings(&path, lang)?;
        rec.input(&path)?;
        Ok(if a.raw { t } else { t.preprocessed() })
    };
    let src = load(&a.source, &mut rec)?;
    let tgt = load(&a.target, &mut rec)?;
    let dict = build_pseudo_dictionary(&src, &tgt)?;
    let w = align(&src, &tgt, &dict)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_out_dir(parent)?;
    }
    rec.write(&a.out, w.to_text())?;
    eprintln!(
        "aligned {} -> {} on {} shared tokens, orthogonality error {:.2e}",
        src.language,
        tgt.language,
        dict.len(),
        w.orthogonality_error()
    );
    rec.finish(&sibling_manifest(&a.out))
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut cfg = SynthConfig {
        users_per_language: a.users,
        tweets_per_user: a.tweets,
        seed: a.seed,
        ..SynthConfig::default()
    };
    if a.no_signal {
        cfg = cfg.without_signal();
    }
    let mut rec = Recorder::start("synth", Some(a.seed));
    let corpora = generate(a.languages, &cfg)?;
    create_out_dir(&a.out)?;
    for c in &corpora {
        rec.write(&a.out.join(format!("{}.jsonl", c.language)), c.to_jsonl())?;
    }
    eprintln!("wrote {} corpora to {}", corpora.len(), a.out.display());
    rec.finish(&a.out.join("manifest.json"))
}
