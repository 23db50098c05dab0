//! Experiment harness: in-language cross-validation, cross-lingual transfer
//! in the Avg / All / pairwise settings, the embedding baseline, the feature
//! report and annotator agreement.
//!
//! Every fitted featurizer remembers its training users; each evaluation
//! checks that none of the test users were among them.

mod kappa;
mod report;

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{balance_downsample, cap_tweets, stratified_kfold, Corpus, Gender, Language, UserRecord};
use crate::embed::{align, build_pseudo_dictionary, user_embedding, AlignmentMatrix, EmbeddingTable};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::features::{FeatureSpec, SparseVector};
use crate::linear::{self, LinearModel, TrainerConfig};

pub use kappa::{fleiss_kappa, parse_annotations, RatingTable};
pub use report::{top_feature_report, FeatureReport, RankedFeature};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub spec: FeatureSpec,
    pub trainer: TrainerConfig,
    pub tweets_per_user: usize,
    pub folds: usize,
    pub seed: u64,
    #[serde(default)]
    pub execution: Execution,
}

impl ExperimentConfig {
    pub fn new(spec: FeatureSpec) -> Self {
        ExperimentConfig {
            spec,
            trainer: TrainerConfig::default(),
            tweets_per_user: 200,
            folds: 10,
            seed: 0,
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.trainer.validate()?;
        if self.folds < 2 {
            return Err(Error::config("folds must be at least 2"));
        }
        if self.tweets_per_user < 1 {
            return Err(Error::config("tweets_per_user must be at least 1"));
        }
        Ok(())
    }
}

/// Balances genders by downsampling, then caps tweets per user.
pub fn prepare_corpus(c: &Corpus, cfg: &ExperimentConfig) -> Result<Corpus> {
    cap_tweets(&balance_downsample(c, cfg.seed)?, cfg.tweets_per_user)
}

pub fn accuracy(pred: &[Gender], gold: &[Gender]) -> Result<f64> {
    if pred.len() != gold.len() {
        return Err(Error::validation(format!(
            "{} predictions for {} gold labels",
            pred.len(),
            gold.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::validation("accuracy of an empty prediction list"));
    }
    let ok = pred.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(ok as f64 / pred.len() as f64)
}

/// Fits featurizer and SVM on `train`.
pub fn fit(train: &[&UserRecord], cfg: &ExperimentConfig) -> Result<LinearModel> {
    LinearModel::fit_users(&cfg.spec, train, &cfg.trainer, cfg.execution)
}

/// Accuracy of `model` on `test`, refusing users the model was fitted on.
pub fn score(model: &LinearModel, test: &[&UserRecord], exec: Execution) -> Result<f64> {
    model.featurizer.assert_unseen(test)?;
    let pred = exec.try_map(test, |u| model.predict_user(u))?;
    let gold: Vec<Gender> = test.iter().map(|u| u.gender).collect();
    accuracy(&pred, &gold)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub language: Language,
    pub per_fold: Vec<f64>,
    pub mean: f64,
}

/// Stratified k-fold cross-validation within one corpus.
pub fn run_cv(corpus: &Corpus, cfg: &ExperimentConfig) -> Result<CvResult> {
    cfg.validate()?;
    let folds = stratified_kfold(corpus, cfg.folds, cfg.seed)?;
    let per_fold = cfg.execution.try_map(&folds, |fold| {
        let train: Vec<&UserRecord> = fold.train.iter().map(|&i| &corpus.users[i]).collect();
        let test: Vec<&UserRecord> = fold.test.iter().map(|&i| &corpus.users[i]).collect();
        let model = fit(&train, cfg)?;
        score(&model, &test, cfg.execution)
    })?;
    let mean = per_fold.iter().sum::<f64>() / per_fold.len() as f64;
    Ok(CvResult {
        language: corpus.language.clone(),
        per_fold,
        mean,
    })
}

fn check_sources(sources: &[&Corpus], target: &Corpus) -> Result<()> {
    if sources.is_empty() {
        return Err(Error::validation("at least one source corpus is required"));
    }
    let mut seen = HashSet::new();
    for s in sources {
        if s.language == target.language {
            return Err(Error::validation(format!(
                "target language {} is also a source",
                target.language
            )));
        }
        if !seen.insert(&s.language) {
            return Err(Error::validation(format!("source language {} given twice", s.language)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossAvgResult {
    pub target: Language,
    /// Accuracy of each single-source model on the target, in source order.
    pub pairs: Vec<(Language, f64)>,
    pub mean: f64,
}

/// Trains one model per source and averages their accuracies on the target.
pub fn run_cross_avg(sources: &[&Corpus], target: &Corpus, cfg: &ExperimentConfig) -> Result<CrossAvgResult> {
    cfg.validate()?;
    check_sources(sources, target)?;
    let test: Vec<&UserRecord> = target.users.iter().collect();
    let accs = cfg.execution.try_map(sources, |src| {
        let train: Vec<&UserRecord> = src.users.iter().collect();
        score(&fit(&train, cfg)?, &test, cfg.execution)
    })?;
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    Ok(CrossAvgResult {
        target: target.language.clone(),
        pairs: sources.iter().map(|s| s.language.clone()).zip(accs).collect(),
        mean,
    })
}

/// Trains a single model on the concatenation of all sources.
pub fn run_cross_all(sources: &[&Corpus], target: &Corpus, cfg: &ExperimentConfig) -> Result<f64> {
    cfg.validate()?;
    check_sources(sources, target)?;
    let train: Vec<&UserRecord> = sources.iter().flat_map(|s| s.users.iter()).collect();
    let test: Vec<&UserRecord> = target.users.iter().collect();
    score(&fit(&train, cfg)?, &test, cfg.execution)
}

/// Accuracy of every single-language model on every other language.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseMatrix {
    pub languages: Vec<Language>,
    /// `acc[train][test]`, `None` on the diagonal.
    pub acc: Vec<Vec<Option<f64>>>,
}

impl PairwiseMatrix {
    /// Mean over source languages for one target, as in the Avg setting.
    pub fn avg_for_target(&self, target: usize) -> f64 {
        let vals: Vec<f64> = (0..self.languages.len()).filter_map(|s| self.acc[s][target]).collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{:<8}", "train\\test");
        for l in &self.languages {
            write!(s, "{:>8}", l.as_str()).unwrap();
        }
        s.push('\n');
        for (i, l) in self.languages.iter().enumerate() {
            write!(s, "{:<10}", l.as_str()).unwrap();
            for j in 0..self.languages.len() {
                match self.acc[i][j] {
                    Some(a) => write!(s, "{:>8.3}", a).unwrap(),
                    None => write!(s, "{:>8}", "").unwrap(),
                }
            }
            s.push('\n');
        }
        write!(s, "{:<10}", "avg").unwrap();
        for j in 0..self.languages.len() {
            write!(s, "{:>8.3}", self.avg_for_target(j)).unwrap();
        }
        s.push('\n');
        s
    }
}

pub fn run_pairwise(corpora: &[&Corpus], cfg: &ExperimentConfig) -> Result<PairwiseMatrix> {
    cfg.validate()?;
    if corpora.len() < 2 {
        return Err(Error::validation("pairwise transfer needs at least two corpora"));
    }
    for (i, c) in corpora.iter().enumerate().skip(1) {
        check_sources(&corpora[..i], c)?;
    }
    let models = cfg.execution.try_map(corpora, |c| {
        let train: Vec<&UserRecord> = c.users.iter().collect();
        fit(&train, cfg)
    })?;
    let cells: Vec<(usize, usize)> = (0..corpora.len())
        .flat_map(|i| (0..corpora.len()).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let accs = cfg.execution.try_map(&cells, |&(i, j)| {
        let test: Vec<&UserRecord> = corpora[j].users.iter().collect();
        score(&models[i], &test, cfg.execution)
    })?;
    let n = corpora.len();
    let mut acc = vec![vec![None; n]; n];
    for (&(i, j), a) in cells.iter().zip(accs) {
        acc[i][j] = Some(a);
    }
    Ok(PairwiseMatrix {
        languages: corpora.iter().map(|c| c.language.clone()).collect(),
        acc,
    })
}

/// Embedding-baseline features for each user, dense as sparse.
fn embedding_vectors(
    users: &[&UserRecord],
    table: &EmbeddingTable,
    w: &AlignmentMatrix,
    exec: Execution,
) -> Result<Vec<SparseVector>> {
    exec.try_map(users, |u| SparseVector::from_dense(&user_embedding(&u.tweets, table, Some(w)).values))
}

/// The All setting for the embedding baseline: every language's table is
/// normalized and mapped onto the target's space with an orthogonal map fit
/// on their pseudo-dictionary; users are represented by mean/max/std/coverage.
pub fn run_cross_all_embeddings(
    sources: &[&Corpus],
    target: &Corpus,
    tables: &BTreeMap<Language, EmbeddingTable>,
    cfg: &ExperimentConfig,
) -> Result<f64> {
    cfg.validate()?;
    check_sources(sources, target)?;
    let table_for = |l: &Language| {
        tables
            .get(l)
            .map(EmbeddingTable::preprocessed)
            .ok_or_else(|| Error::config(format!("no embedding table for language {l}")))
    };
    let tgt_table = table_for(&target.language)?;
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut trained_on = HashSet::new();
    for src in sources {
        let table = table_for(&src.language)?;
        let dict = build_pseudo_dictionary(&table, &tgt_table)?;
        let w = align(&table, &tgt_table, &dict)?;
        let users: Vec<&UserRecord> = src.users.iter().collect();
        x.extend(embedding_vectors(&users, &table, &w, cfg.execution)?);
        y.extend(users.iter().map(|u| u.gender));
        trained_on.extend(users.iter().map(|u| u.provenance()));
    }
    let test: Vec<&UserRecord> = target.users.iter().collect();
    if let Some(u) = test.iter().find(|u| trained_on.contains(&u.provenance())) {
        return Err(Error::Hygiene(format!("user {}/{} in both train and test", u.language, u.user_id)));
    }
    let dim = 3 * tgt_table.dim() + 1;
    let sol = linear::train(&x, &y, dim, &cfg.trainer)?;
    let identity = AlignmentMatrix::identity(tgt_table.dim());
    let xt = embedding_vectors(&test, &tgt_table, &identity, cfg.execution)?;
    let pred: Vec<Gender> = xt
        .iter()
        .map(|v| if sol.decision(v) >= 0.0 { Gender::F } else { Gender::M })
        .collect();
    let gold: Vec<Gender> = test.iter().map(|u| u.gender).collect();
    accuracy(&pred, &gold)
}

/// One line of a results file.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub source: String,
    pub target: String,
    pub accuracy: f64,
}

impl ResultRow {
    pub fn new(experiment: impl Into<String>, source: impl Into<String>, target: impl Into<String>, accuracy: f64) -> Self {
        ResultRow {
            experiment: experiment.into(),
            source: source.into(),
            target: target.into(),
            accuracy,
        }
    }
}

/// `experiment<TAB>source<TAB>target<TAB>accuracy`, accuracies to 3 decimals.
pub fn results_tsv(rows: &[ResultRow]) -> String {
    let mut s = String::from("experiment\tsource\ttarget\taccuracy\n");
    for r in rows {
        writeln!(s, "{}\t{}\t{}\t{:.3}", r.experiment, r.source, r.target, r.accuracy).unwrap();
    }
    s
}

/// The same rows as an aligned plain-text table.
pub fn results_table(rows: &[ResultRow]) -> String {
    let w_exp = rows.iter().map(|r| r.experiment.len()).chain([10]).max().unwrap_or(10);
    let w_src = rows.iter().map(|r| r.source.chars().count()).chain([6]).max().unwrap_or(6);
    let w_tgt = rows.iter().map(|r| r.target.chars().count()).chain([6]).max().unwrap_or(6);
    let mut s = format!(
        "{:<w_exp$}  {:<w_src$}  {:<w_tgt$}  {:>8}\n",
        "experiment", "source", "target", "accuracy"
    );
    for r in rows {
        writeln!(
            s,
            "{:<w_exp$}  {:<w_src$}  {:<w_tgt$}  {:>8.3}",
            r.experiment, r.source, r.target, r.accuracy
        )
        .unwrap();
    }
    s
}
