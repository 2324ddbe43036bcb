use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::cli::config::RunConfig;
use crate::cli::manifest::{input_digest, RunManifest};
use crate::cli::{
    Command, EvalArgs, FeaturesArgs, MmcArgs, OverlapArgs, PreprocessArgs, RerankApplyArgs,
    RerankTrainArgs, ReportArgs,
};
use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::experiment::{mmc_scores, GammaChoice, LawContext};
use crate::ingest::store::{read_json, read_split, write_json, write_split};
use crate::ingest::{build_split, DatasetSplit, SourceFormat, SplitFractions, StageCounts};
use crate::laws::{fit_gamma, read_features_csv, write_features_csv, SavedLawModel};
use crate::overlap::io::{
    available_metrics, load_strata, overlap_csv_path, read_overlap_csv, write_overlap_csv,
    MetricSummary, OverlapSummary, SUMMARY_FILE,
};
use crate::overlap::{
    compute_overlaps, parse_metric_list, stratify, JaccardVariant, LocationIndex, OverlapBin,
    OverlapMetric, OverlapOptions, OverlapRecord, Strata,
};
use crate::predictors::{
    acc_at_k, ground_truth, load_scores, prediction_tasks, write_accuracy_table,
    write_accuracy_tidy, EvalReport,
};
use crate::rerank::{
    build_samples, evaluate_improvement, rerank, train, write_samples, SavedScorer, Scorer,
};

pub(crate) struct Context {
    pub threads: usize,
    pub cache: Option<PathBuf>,
    pub argv: Vec<String>,
}

pub(crate) const FEATURES_FILE: &str = "features.csv";
pub(crate) const LAW_MODEL_FILE: &str = "law_model.json";
pub(crate) const FIGURE1_FILE: &str = "figure1_data.csv";
pub(crate) const FIGURE2_FILE: &str = "figure2_data.csv";
pub(crate) const ACCURACY_TABLE_FILE: &str = "accuracy_table.csv";
pub(crate) const IMPROVEMENT_FILE: &str = "improvement.csv";
pub(crate) const SCORER_FILE: &str = "scorer.json";

struct Run<'a> {
    ctx: &'a Context,
    command: &'static str,
    started: Instant,
    inputs: BTreeMap<String, String>,
    config_sha256: String,
    seed: Option<u64>,
}

impl<'a> Run<'a> {
    fn new(ctx: &'a Context, command: &'static str, config: &RunConfig) -> Self {
        Self {
            ctx,
            command,
            started: Instant::now(),
            inputs: BTreeMap::new(),
            config_sha256: sha256_hex(config.canonical_json().as_bytes()),
            seed: None,
        }
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        if !path.exists() {
            return Err(Error::input(format!("{} does not exist", path.display())));
        }
        self.inputs.insert(path.display().to_string(), input_digest(path)?);
        Ok(())
    }

    fn finish(self, out: &Path) -> Result<RunManifest> {
        RunManifest {
            command: self.command.to_string(),
            args: self.ctx.argv.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: self.config_sha256,
            seed: self.seed,
            inputs: self.inputs,
            outputs: BTreeMap::new(),
            wall_time_secs: self.started.elapsed().as_secs_f64(),
        }
        .finish(out)
    }
}

fn out_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn load_split(run: &mut Run<'_>, dir: &Path) -> Result<DatasetSplit> {
    run.input(dir)?;
    read_split(dir)
}

pub(crate) fn dispatch(ctx: &Context, config: &mut RunConfig, command: Command) -> Result<RunManifest> {
    match command {
        Command::Preprocess(a) => preprocess(ctx, config, a),
        Command::Overlap(a) => overlap(ctx, config, a),
        Command::Mmc(a) => mmc(ctx, config, a),
        Command::Features(a) => features(ctx, config, a),
        Command::Eval(a) => eval(ctx, config, a),
        Command::RerankTrain(a) => rerank_train(ctx, config, a),
        Command::RerankApply(a) => rerank_apply(ctx, config, a),
        Command::Report(a) => report(ctx, config, a),
    }
}

fn parse_fractions(s: &str) -> Result<SplitFractions> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::input(format!("bad split fractions {s:?}")))?;
    match v[..] {
        [a, b, c] => SplitFractions::new(a, b, c),
        _ => Err(Error::input("split needs three comma-separated fractions")),
    }
}

fn print_stages(s: &StageCounts) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{:<28}{:>10}{:>12}{:>14}", "stage", "users", "records", "trajectories");
    let _ = writeln!(out, "{:<28}{:>10}{:>12}{:>14}", "input", s.users_in, s.records_in, "-");
    let _ = writeln!(
        out,
        "{:<28}{:>10}{:>12}{:>14}",
        "min records per user", s.users_after_record_filter, s.records_after_record_filter, "-"
    );
    let _ = writeln!(
        out,
        "{:<28}{:>10}{:>12}{:>14}",
        "session cut", s.users_after_record_filter, s.records_after_record_filter, s.trajectories_after_cut
    );
    let _ = writeln!(
        out,
        "{:<28}{:>10}{:>12}{:>14}",
        "min trajectories per user", s.users_final, s.records_final, s.trajectories_final
    );
    let _ = writeln!(out);
    let _ = writeln!(out, "Users {}  Locations {}  Trajectories {}", s.users_final, s.locations, s.trajectories_final);
}

fn preprocess(ctx: &Context, config: &mut RunConfig, a: PreprocessArgs) -> Result<RunManifest> {
    let p = &mut config.pipeline;
    if let Some(v) = a.session_gap_hours {
        p.session_gap_hours = v;
    }
    if let Some(v) = a.min_records {
        p.min_records_per_user = v;
    }
    if let Some(v) = a.min_trajectories {
        p.min_trajectories_per_user = v;
    }
    if let Some(v) = a.grid_cell_m {
        p.grid_cell_m = v;
    }
    if let Some(s) = &a.split {
        p.split = parse_fractions(s)?;
    }
    config.validate()?;
    let mut format: SourceFormat = a.format.parse()?;
    if let SourceFormat::GenericCsv(cols) = &mut format {
        *cols = config.generic.clone();
    }
    let mut run = Run::new(ctx, "preprocess", config);
    run.input(&a.input)?;
    let split = build_split(&format, &a.input, &config.pipeline)?;
    out_dir(&a.out)?;
    write_split(&a.out, &split)?;
    if let Some(p) = &split.provenance {
        print_stages(&p.stages);
    }
    run.finish(&a.out)
}

fn cache_key(split_dir: &Path, metric: OverlapMetric, jaccard: JaccardVariant) -> Result<String> {
    use crate::ingest::store::{TEST_FILE, TRAIN_FILE};
    let train = input_digest(&split_dir.join(TRAIN_FILE))?;
    let test = input_digest(&split_dir.join(TEST_FILE))?;
    Ok(sha256_hex(format!("overlap\n{train}\n{test}\n{metric}\n{jaccard:?}").as_bytes()))
}

fn overlap(ctx: &Context, config: &mut RunConfig, a: OverlapArgs) -> Result<RunManifest> {
    if let Some(m) = &a.metrics {
        config.overlap.metrics = parse_metric_list(m)?;
    }
    if let Some(j) = &a.jaccard {
        config.overlap.jaccard = j.parse()?;
    }
    if a.no_prune {
        config.overlap.prune = false;
    }
    config.validate()?;
    let mut run = Run::new(ctx, "overlap", config);
    let split = load_split(&mut run, &a.split)?;
    let options = OverlapOptions {
        jaccard: config.overlap.jaccard,
        prune: config.overlap.prune,
    };
    let index = LocationIndex::build(&split.train)?;
    out_dir(&a.out)?;
    let mut summary = OverlapSummary {
        jaccard_variant: format!("{:?}", options.jaccard).to_lowercase(),
        metrics: BTreeMap::new(),
    };
    for &m in &config.overlap.metrics {
        let cached = match &ctx.cache {
            Some(dir) => Some(dir.join("overlap").join(format!("{}.csv", cache_key(&a.split, m, options.jaccard)?))),
            None => None,
        };
        let records: Vec<OverlapRecord> = match &cached {
            Some(p) if p.is_file() => {
                log::info!("{m}: using cached {}", p.display());
                read_overlap_csv(p, m)?
            }
            _ => {
                let t = Instant::now();
                let r = compute_overlaps(&split.test, &index, m, options, ctx.threads)?;
                log::info!("{m}: {} test trajectories in {:.2?}", r.len(), t.elapsed());
                if let Some(p) = &cached {
                    if let Some(parent) = p.parent() {
                        out_dir(parent)?;
                    }
                    write_overlap_csv(p, &r)?;
                }
                r
            }
        };
        write_overlap_csv(&overlap_csv_path(&a.out, m), &records)?;
        summary.metrics.insert(m, MetricSummary::from_strata(&stratify(&records)?));
    }
    write_json(&a.out.join(SUMMARY_FILE), &summary)?;
    write_figure1(&a.out.join(FIGURE1_FILE), &summary)?;
    for (m, s) in &summary.metrics {
        let fr: Vec<String> = s.fractions.iter().map(|(b, f)| format!("{b} {f:.3}")).collect();
        println!("{:<5} {}", m.label(), fr.join("  "));
    }
    run.finish(&a.out)
}

fn write_figure1(path: &Path, summary: &OverlapSummary) -> Result<()> {
    let io = |e: csv::Error| Error::io(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["metric", "bin", "count", "fraction"]).map_err(io)?;
    for (m, s) in &summary.metrics {
        for b in OverlapBin::ALL {
            w.write_record([
                m.label().to_string(),
                b.label().to_string(),
                s.counts.get(&b).copied().unwrap_or(0).to_string(),
                s.fractions.get(&b).copied().unwrap_or(0.0).to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn mmc(ctx: &Context, config: &mut RunConfig, a: MmcArgs) -> Result<RunManifest> {
    if a.depth.is_some() {
        config.mmc.depth = a.depth;
    }
    config.validate()?;
    let mut run = Run::new(ctx, "mmc", config);
    let split = load_split(&mut run, &a.split)?;
    out_dir(&a.out)?;
    for (part, trajs) in [("valid", &split.valid), ("test", &split.test)] {
        let (tasks, skipped) = prediction_tasks(trajs);
        if skipped > 0 {
            log::warn!("{part}: {skipped} single-point trajectories have no prediction target");
        }
        let table = mmc_scores(&split, &tasks, config.mmc.depth)?;
        let dir = a.out.join(part);
        out_dir(&dir)?;
        table.write_jsonl(&dir.join("MMC.jsonl"))?;
    }
    run.finish(&a.out)
}

fn features(ctx: &Context, config: &mut RunConfig, a: FeaturesArgs) -> Result<RunManifest> {
    if let Some(g) = a.gamma {
        config.laws.gamma = g;
    }
    if a.fit_gamma {
        config.laws.fit_gamma = true;
    }
    config.validate()?;
    let mut run = Run::new(ctx, "features", config);
    let split = load_split(&mut run, &a.split)?;
    out_dir(&a.out)?;
    let choice = if config.laws.fit_gamma {
        let fit = fit_gamma(&split.train, &split.vocabulary);
        write_json(&a.out.join("gamma_fit.json"), &fit)?;
        GammaChoice::Fixed(fit.gamma)
    } else {
        GammaChoice::Fixed(config.laws.gamma)
    };
    let laws = LawContext::fit(&split, choice)?;
    write_features_csv(&a.out.join(FEATURES_FILE), &laws.users)?;
    laws.law.saved().write(&a.out.join(LAW_MODEL_FILE))?;
    println!(
        "{} users, gamma {}, r_min {:.4} km",
        laws.users.len(),
        laws.law.gamma(),
        laws.law.r_min_km()
    );
    run.finish(&a.out)
}

fn load_laws(run: &mut Run<'_>, dir: &Path, split: &DatasetSplit) -> Result<LawContext> {
    run.input(dir)?;
    let users = read_features_csv(&dir.join(FEATURES_FILE))?;
    let law = SavedLawModel::read(&dir.join(LAW_MODEL_FILE))?.restore(&split.train, &split.vocabulary)?;
    Ok(LawContext { users, law })
}

fn strata_from(
    run: &mut Run<'_>,
    overlap_dir: Option<&Path>,
    only: Option<&str>,
) -> Result<Option<BTreeMap<OverlapMetric, Strata>>> {
    let Some(dir) = overlap_dir else {
        if only.is_some() {
            return Err(Error::input("--stratify needs --overlap"));
        }
        return Ok(None);
    };
    run.input(dir)?;
    let metrics = match only {
        Some(s) => parse_metric_list(s)?,
        None => available_metrics(dir),
    };
    if metrics.is_empty() {
        return Err(Error::input(format!("no overlap CSVs in {}", dir.display())));
    }
    Ok(Some(load_strata(dir, &metrics)?))
}

fn eval(ctx: &Context, config: &mut RunConfig, a: EvalArgs) -> Result<RunManifest> {
    if let Some(k) = a.k {
        config.eval.k = k;
    }
    config.validate()?;
    let mut run = Run::new(ctx, "eval", config);
    let split = load_split(&mut run, &a.split)?;
    let strata = strata_from(&mut run, a.overlap.as_deref(), a.stratify.as_deref())?;
    let (tasks, _) = prediction_tasks(&split.test);
    let truth = ground_truth(&tasks);
    let mut reports: Vec<EvalReport> = Vec::new();
    for p in &a.scores {
        run.input(p)?;
        let table = load_scores(p)?;
        let r = acc_at_k(&table, &truth, config.eval.k, strata.as_ref())?;
        println!(
            "{:<16} ACC@{} {} ({} of {}, {} unscored)",
            r.model,
            r.k,
            crate::predictors::format_acc(r.overall.acc),
            r.overall.hits,
            r.overall.count,
            r.unscored
        );
        reports.push(r);
    }
    out_dir(&a.out)?;
    write_accuracy_table(&a.out.join(ACCURACY_TABLE_FILE), &reports)?;
    write_accuracy_tidy(&a.out.join(FIGURE2_FILE), &reports)?;
    write_json(&a.out.join("eval_report.json"), &reports)?;
    run.finish(&a.out)
}

fn rerank_train(ctx: &Context, config: &mut RunConfig, a: RerankTrainArgs) -> Result<RunManifest> {
    let c = &mut config.rerank;
    if let Some(s) = a.seed {
        c.seed = s;
    }
    if let Some(e) = a.epochs {
        c.epochs = e;
    }
    if let Some(n) = a.negatives {
        c.negatives = n;
    }
    config.validate()?;
    let mut run = Run::new(ctx, "rerank-train", config);
    run.seed = Some(config.rerank.seed);
    let split = load_split(&mut run, &a.split)?;
    let laws = load_laws(&mut run, &a.features, &split)?;
    run.input(&a.scores)?;
    let scores = load_scores(&a.scores)?;
    let (tasks, _) = prediction_tasks(&split.valid);
    let cfg = &config.rerank;
    let samples = build_samples(&scores, &tasks, &laws.features(&split), cfg.negatives, cfg.seed)?;
    let outcome = train(&samples, cfg)?;
    out_dir(&a.out)?;
    write_samples(&a.out.join("samples.jsonl"), &samples)?;
    SavedScorer {
        model: outcome.model.clone(),
        seed: cfg.seed,
        config: cfg.clone(),
        learning_rate_used: outcome.learning_rate,
        restarts: outcome.restarts,
    }
    .write(&a.out.join(SCORER_FILE))?;
    let path = a.out.join("training_history.csv");
    let io = |e: csv::Error| Error::io(&path, e.into());
    let mut w = csv::Writer::from_path(&path).map_err(io)?;
    w.write_record(["epoch", "train_loss", "holdout_loss"]).map_err(io)?;
    for e in &outcome.history {
        w.write_record([
            e.epoch.to_string(),
            e.train.to_string(),
            e.holdout.map_or(String::new(), |h| h.to_string()),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    if let Some(last) = outcome.history.last() {
        println!(
            "{} samples, final loss {:.4} (holdout {})",
            samples.len(),
            last.train,
            last.holdout.map_or("-".into(), |h| format!("{h:.4}"))
        );
    }
    run.finish(&a.out)
}

fn rerank_apply(ctx: &Context, config: &mut RunConfig, a: RerankApplyArgs) -> Result<RunManifest> {
    if let Some(k) = a.k {
        config.eval.k = k;
    }
    config.validate()?;
    let mut run = Run::new(ctx, "rerank-apply", config);
    let split = load_split(&mut run, &a.split)?;
    let laws = load_laws(&mut run, &a.features, &split)?;
    run.input(&a.scores)?;
    let base = load_scores(&a.scores)?;
    let scorer = match (&a.scorer, a.identity) {
        (_, true) => Scorer::Passthrough,
        (Some(p), false) => {
            run.input(p)?;
            let s = SavedScorer::read(p)?;
            run.seed = Some(s.seed);
            Scorer::Network(s.model)
        }
        (None, false) => return Err(Error::input("either --scorer or --identity is required")),
    };
    let strata = strata_from(&mut run, a.overlap.as_deref(), None)?;
    let (tasks, _) = prediction_tasks(&split.test);
    let reranked = rerank(&scorer, &base, &tasks, &laws.features(&split))?;
    let report = evaluate_improvement(&base, &reranked, &ground_truth(&tasks), config.eval.k, strata.as_ref())?;
    out_dir(&a.out)?;
    reranked.write_jsonl(&a.out.join(format!("{}.jsonl", reranked.name())))?;
    report.write_csv(&a.out.join(IMPROVEMENT_FILE))?;
    write_json(&a.out.join("improvement.json"), &report)?;
    let o = report.overall();
    println!(
        "{}: ACC@{} {} -> {} ({})",
        report.base_model,
        report.k,
        crate::predictors::format_acc(o.base),
        crate::predictors::format_acc(o.reranked),
        crate::rerank::format_relative(o.relative)
    );
    run.finish(&a.out)
}

fn copy_into(from: &Path, to: &Path) -> Result<()> {
    fs::copy(from, to).map_err(|e| Error::io(from, e))?;
    Ok(())
}

fn report(ctx: &Context, config: &mut RunConfig, a: ReportArgs) -> Result<RunManifest> {
    let mut run = Run::new(ctx, "report", config);
    let split = load_split(&mut run, &a.split)?;
    out_dir(&a.out)?;
    let mut md = String::from("# Report\n\n");

    let c = split.counts();
    let total = c.train + c.valid + c.test;
    let name = split
        .provenance
        .as_ref()
        .map_or("dataset".to_string(), |p| p.source_name.clone());
    let t1 = a.out.join("table1.csv");
    let io = |e: csv::Error| Error::io(&t1, e.into());
    let mut w = csv::Writer::from_path(&t1).map_err(io)?;
    w.write_record(["dataset", "users", "locations", "trajectories", "train", "valid", "test"])
        .map_err(io)?;
    w.write_record([
        name.clone(),
        c.users.to_string(),
        c.locations.to_string(),
        total.to_string(),
        c.train.to_string(),
        c.valid.to_string(),
        c.test.to_string(),
    ])
    .map_err(io)?;
    w.flush().map_err(|e| Error::io(&t1, e))?;
    md += &format!(
        "## Dataset\n\n| dataset | users | locations | trajectories |\n|---|---|---|---|\n| {name} | {} | {} | {total} |\n\n",
        c.users, c.locations
    );

    if let Some(dir) = &a.overlap {
        run.input(dir)?;
        let summary: OverlapSummary = read_json(&dir.join(SUMMARY_FILE))?;
        write_figure1(&a.out.join(FIGURE1_FILE), &summary)?;
        md += "## Test trajectories per overlap bin\n\n| metric |";
        for b in OverlapBin::ALL {
            md += &format!(" {b} |");
        }
        md += "\n|---|---|---|---|---|---|\n";
        for (m, s) in &summary.metrics {
            md += &format!("| {} |", m.label());
            for b in OverlapBin::ALL {
                md += &format!(" {:.3} |", s.fractions.get(&b).copied().unwrap_or(0.0));
            }
            md += "\n";
        }
        md += "\n";
    }

    if let Some(dir) = &a.eval {
        run.input(dir)?;
        copy_into(&dir.join(FIGURE2_FILE), &a.out.join(FIGURE2_FILE))?;
        copy_into(&dir.join(ACCURACY_TABLE_FILE), &a.out.join(ACCURACY_TABLE_FILE))?;
        let text = fs::read_to_string(dir.join(ACCURACY_TABLE_FILE)).map_err(|e| Error::io(dir, e))?;
        md += "## Accuracy\n\n";
        md += &csv_to_markdown(&text);
        md += "\n";
    }

    if !a.rerank.is_empty() {
        let path = a.out.join("table2_data.csv");
        let io = |e: csv::Error| Error::io(&path, e.into());
        let mut w = csv::Writer::from_path(&path).map_err(io)?;
        let mut header_written = false;
        md += "## Reranking\n\n";
        for dir in &a.rerank {
            run.input(dir)?;
            let rep: crate::rerank::ImprovementReport = read_json(&dir.join("improvement.json"))?;
            let text = fs::read_to_string(dir.join(IMPROVEMENT_FILE)).map_err(|e| Error::io(dir, e))?;
            let mut rdr = csv::Reader::from_reader(text.as_bytes());
            if !header_written {
                let mut h = vec!["model".to_string()];
                h.extend(rdr.headers().map_err(io)?.iter().map(String::from));
                w.write_record(&h).map_err(io)?;
                header_written = true;
            }
            for row in rdr.records() {
                let row = row.map_err(io)?;
                let mut r = vec![rep.base_model.clone()];
                r.extend(row.iter().map(String::from));
                w.write_record(&r).map_err(io)?;
            }
            md += &format!("### {}\n\n", rep.base_model);
            md += &csv_to_markdown(&text);
            md += "\n";
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }

    let p = a.out.join("report.md");
    fs::write(&p, md).map_err(|e| Error::io(&p, e))?;
    run.finish(&a.out)
}

fn csv_to_markdown(text: &str) -> String {
    let mut out = String::new();
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    for (i, row) in rdr.records().filter_map(|r| r.ok()).enumerate() {
        out += "|";
        for f in row.iter() {
            out += &format!(" {f} |");
        }
        out += "\n";
        if i == 0 {
            out += &"|---".repeat(row.len());
            out += "|\n";
        }
    }
    out
}
