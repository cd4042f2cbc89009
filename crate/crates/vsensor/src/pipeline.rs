//! Step functions behind the CLI and the end-to-end comparison run.
//!
//! Per-example work fans out over rayon; results are collected in input
//! order, so every file is identical whatever the thread count.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vsensor_core::{
    evaluate_example, pgd_attack, train, verify_example, Certificate, Dataset, DenseNet, EvalTable, ExampleRecord,
    Method, Mode, PerturbationSpec, Status,
};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::{self, AttackRecord, ModelMeta};
use crate::report;

/// Training and test sets from the configured generator.
pub fn generate_data(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    let g = cfg.generator();
    Ok((
        g.generate(cfg.data.n_train, cfg.train_seed())?,
        g.generate(cfg.data.n_test, cfg.test_seed())?,
    ))
}

pub fn train_model(cfg: &RunConfig, data: &Dataset) -> Result<(DenseNet, ModelMeta)> {
    let tc = cfg.train_config();
    let net = train(data, &tc, &cfg.spec())?;
    let meta = ModelMeta {
        mode: tc.mode,
        seed: tc.seed,
        eps_series: cfg.perturb.eps_series,
        eps_scalar: cfg.perturb.eps_scalar,
        lambda: tc.lambda,
    };
    Ok((net, meta))
}

/// The first `limit` examples, or the whole set.
pub fn limited(data: &Dataset, limit: Option<usize>) -> Dataset {
    match limit {
        Some(n) => data.truncated(n),
        None => data.clone(),
    }
}

pub fn attack_dataset(net: &DenseNet, data: &Dataset, cfg: &RunConfig) -> Result<Vec<AttackRecord>> {
    let spec = cfg.spec();
    let acfg = cfg.attack_config();
    (0..data.len())
        .into_par_iter()
        .map(|i| {
            let ex = data.example(i);
            let bx = spec.box_of(ex.x)?;
            let mut rng = ChaCha8Rng::seed_from_u64(ex.id as u64);
            let r = pgd_attack(net, ex.x, ex.y, &bx, &acfg, &mut rng)?;
            Ok(AttackRecord::new(ex.id, ex.y, net.forward(ex.x)?, r))
        })
        .collect()
}

pub fn verify(net: &DenseNet, data: &Dataset, cfg: &RunConfig, method: Method) -> Result<Vec<Certificate>> {
    let spec = cfg.spec();
    let ecfg = cfg.exact_config();
    (0..data.len())
        .into_par_iter()
        .map(|i| Ok(verify_example(net, data.example(i), &spec, method, &ecfg)?))
        .collect()
}

pub fn evaluate(
    net: &DenseNet,
    data: &Dataset,
    cfg: &RunConfig,
    dual: &[Certificate],
    milp: &[Certificate],
) -> Result<Vec<ExampleRecord>> {
    if dual.len() != data.len() || milp.len() != data.len() {
        return Err(Error::Config(format!(
            "certificates cover {} / {} examples, test set has {}",
            dual.len(),
            milp.len(),
            data.len()
        )));
    }
    let spec = cfg.spec();
    let ecfg = cfg.eval_config();
    (0..data.len())
        .into_par_iter()
        .map(|i| Ok(evaluate_example(net, data.example(i), &spec, &ecfg, &dual[i], &milp[i])?))
        .collect()
}

/// Writes `report.md`, `report.csv`, `scatter.csv` and the configured
/// `series_<id>.csv` files for one model into `dir`.
pub fn write_model_report(
    dir: &Path,
    table: &EvalTable,
    records: &[ExampleRecord],
    data: &Dataset,
    attacks: &[AttackRecord],
    spec: &PerturbationSpec,
    series_ids: &[usize],
) -> Result<()> {
    report::write_markdown(&dir.join("report.md"), std::slice::from_ref(table))?;
    report::write_csv(&dir.join("report.csv"), std::slice::from_ref(table))?;
    report::write_scatter(&dir.join("scatter.csv"), records)?;
    for &id in series_ids.iter().filter(|&&id| id < data.len()) {
        let ex = data.example(id);
        let adv = attacks
            .iter()
            .find(|a| a.example_id == id)
            .ok_or_else(|| Error::Config(format!("no attack result for example {id}")))?;
        let bx = spec.box_of(ex.x)?;
        report::write_series(&dir.join(format!("series_{id}.csv")), ex.x, &adv.input, &bx)?;
    }
    Ok(())
}

/// Everything one trained model produced in a pipeline run.
#[derive(Debug, Clone)]
pub struct ModelRun {
    pub mode: Mode,
    pub net: DenseNet,
    pub dual: Vec<Certificate>,
    pub milp: Vec<Certificate>,
    pub records: Vec<ExampleRecord>,
    pub table: EvalTable,
}

impl ModelRun {
    pub fn timeouts(&self) -> usize {
        self.milp.iter().filter(|c| c.status == Status::Timeout).count()
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub out_dir: PathBuf,
    pub test: Dataset,
    pub runs: Vec<ModelRun>,
}

impl PipelineOutput {
    pub fn run(&self, mode: Mode) -> Option<&ModelRun> {
        self.runs.iter().find(|r| r.mode == mode)
    }
}

/// Generates data, trains all four modes, attacks, verifies both ways and
/// writes per-model and combined reports under `out_dir`.
pub fn run_pipeline(cfg: &RunConfig, out_dir: &Path) -> Result<PipelineOutput> {
    cfg.validate()?;
    cfg.echo(out_dir)?;
    let (train_set, test_full) = generate_data(cfg)?;
    let g = cfg.generator();
    io::save_dataset(&out_dir.join("data/train.csv"), &train_set, Some(&g))?;
    io::save_dataset(&out_dir.join("data/test.csv"), &test_full, Some(&g))?;
    let test = limited(&test_full, cfg.verify.limit);
    let spec = cfg.spec();

    let mut runs = Vec::with_capacity(Mode::ALL.len());
    for mode in Mode::ALL {
        let mut mcfg = cfg.clone();
        mcfg.train.mode = mode;
        let dir = out_dir.join(mode.as_str());
        mcfg.echo(&dir)?;
        let (net, meta) = train_model(&mcfg, &train_set)?;
        io::save_model(&dir.join("model.json"), &net, &meta)?;
        let attacks = attack_dataset(&net, &test, &mcfg)?;
        io::save_attacks(&dir.join("attack.jsonl"), &attacks)?;
        let dual = verify(&net, &test, &mcfg, Method::Dual)?;
        io::save_certificates(&dir.join("dual.jsonl"), &dual)?;
        let milp = verify(&net, &test, &mcfg, Method::Milp)?;
        io::save_certificates(&dir.join("milp.jsonl"), &milp)?;
        let records = evaluate(&net, &test, &mcfg, &dual, &milp)?;
        let table = EvalTable::from_records(mode.as_str(), &records)?;
        write_model_report(&dir, &table, &records, &test, &attacks, &spec, &cfg.eval.series_ids)?;
        runs.push(ModelRun {
            mode,
            net,
            dual,
            milp,
            records,
            table,
        });
    }
    let tables: Vec<EvalTable> = runs.iter().map(|r| r.table.clone()).collect();
    report::write_markdown(&out_dir.join("report.md"), &tables)?;
    report::write_csv(&out_dir.join("report.csv"), &tables)?;
    Ok(PipelineOutput {
        out_dir: out_dir.to_path_buf(),
        test,
        runs,
    })
}
