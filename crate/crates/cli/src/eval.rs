use std::fs;
use std::path::PathBuf;

use clap::Args;
use gnr_core::data::{DomainDataset, Split};
use gnr_core::losses::PyramidDistance;
use gnr_core::metrics::{
    default_batch_sizes, dfid, extractor_by_id, fid_inf, frechet_distance, pairwise_diversity, save_features,
    MetricReport, Translator, DEFAULT_FID_INF_SIZES,
};
use gnr_core::nets::StyleCode;
use gnr_core::trainer::Translators;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::train::{load_split, write_manifest};
use crate::{create_dir, io_err, load_run_config, require_exists, run_dir, CliError, CliResult, Direction, CODE_VERSION};

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const REAL_FEATURES: &str = "features_real.gnrf";
pub const GENERATED_FEATURES: &str = "features_generated.gnrf";

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Run configuration supplying the dataset and metric settings.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum, default_value_t = Direction::Xy)]
    pub direction: Direction,
    /// Output directory; defaults to `eval/` inside the configured run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub dir: PathBuf,
    pub csv: PathBuf,
    pub reports: Vec<MetricReport>,
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

/// DFID, FID, FID-infinity and pairwise diversity for one direction, with
/// translations of the source test split scored against every real image of
/// the target domain.
pub fn cmd_eval(args: &EvalArgs) -> CliResult<EvalOutput> {
    let config = load_run_config(&args.config)?;
    let m = &config.metrics;
    require_exists(&args.checkpoint, "checkpoint")?;
    let extractor = extractor_by_id(&m.extractor)?;
    let t = Translators::load(&args.checkpoint)?;
    let res = t.config.resolution;
    let source = args.direction.source();
    let target = source.other();
    let test = load_split(&config.data_root, source, Split::Test, res)?;
    for (what, need) in [("metrics.dfid_n", m.dfid_n), ("metrics.diversity_n", m.diversity_n)] {
        if test.len() < need {
            return Err(CliError::validation(format!(
                "{what} = {need} but only {} test images in {}",
                test.len(),
                DomainDataset::split_dir(&config.data_root, source, Split::Test).display()
            )));
        }
    }
    let real_images: Vec<_> = [Split::Train, Split::Test]
        .into_iter()
        .map(|s| load_split(&config.data_root, target, s, res))
        .collect::<CliResult<Vec<_>>>()?
        .into_iter()
        .flat_map(|d| d.images().to_vec())
        .collect();
    let gen = t.generator(source);

    let dir = args.out.clone().unwrap_or_else(|| run_dir(&config).join("eval"));
    create_dir(&dir)?;
    write_manifest(&dir, &config, "eval")?;

    let real = extractor.extract(&real_images)?;
    save_features(&dir.join(REAL_FEATURES), &real)?;
    let mut rng = ChaCha8Rng::seed_from_u64(m.seed);
    let d = dfid(gen, test.images(), m.dfid_m, m.dfid_n, &real, extractor.as_ref(), &mut rng)?;

    let count = m.dfid_m.max(extractor.dim() + 2);
    let sources: Vec<_> = (0..count).map(|i| test.images()[i % test.len()].clone()).collect();
    let styles: Vec<StyleCode> = (0..count).map(|_| StyleCode::sample(&mut rng)).collect();
    let mut translated = Vec::with_capacity(count);
    for (imgs, zs) in sources.chunks(50).zip(styles.chunks(50)) {
        translated.extend(Translator::translate(gen, imgs, zs)?);
    }
    let generated = extractor.extract(&translated)?;
    save_features(&dir.join(GENERATED_FEATURES), &generated)?;
    let fid = frechet_distance(&generated, &real)?;
    let sizes = if m.fid_batch_sizes.is_empty() {
        default_batch_sizes(count, extractor.dim(), DEFAULT_FID_INF_SIZES)
    } else {
        m.fid_batch_sizes.clone()
    };
    let inf = fid_inf(&generated, &real, &sizes, m.fid_resamples, m.seed)?;
    let div = pairwise_diversity(gen, test.images(), m.diversity_k, m.diversity_n, &PyramidDistance::default(), &mut rng)?;

    let echo = format!(
        "dfid_m={} dfid_n={} diversity_k={} diversity_n={} fid_resamples={} seed={}",
        m.dfid_m, m.dfid_n, m.diversity_k, m.diversity_n, m.fid_resamples, m.seed
    );
    let report = |metric: &str, value: f64, population_sizes: Vec<usize>| MetricReport {
        metric: metric.to_string(),
        value,
        population_sizes,
        extractor_id: extractor.id().to_string(),
        config_echo: echo.clone(),
    };
    let reports = vec![
        report("dfid", d.value, vec![m.dfid_m, m.dfid_n]),
        report("fid", fid, vec![count, real.rows()]),
        report("fid_inf", inf.value, inf.points.iter().map(|p| p.0).collect()),
        report("pairwise_diversity", div, vec![m.diversity_k, m.diversity_n]),
    ];

    let csv_path = dir.join(METRICS_FILE);
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| io_err(&csv_path, e))?;
    w.write_record(["metric", "value", "population_sizes", "extractor_id", "config"])
        .map_err(|e| io_err(&csv_path, e))?;
    for r in &reports {
        w.write_record([&r.metric, &r.value.to_string(), &join(&r.population_sizes), &r.extractor_id, &r.config_echo])
            .map_err(|e| io_err(&csv_path, e))?;
    }
    w.flush().map_err(|e| io_err(&csv_path, e))?;

    let summary = json!({
        "checkpoint": args.checkpoint.display().to_string(),
        "iteration": t.iteration,
        "direction": args.direction.tag(),
        "extractor": extractor.id(),
        "config_hash": config.hash(),
        "code_version": CODE_VERSION,
        "metrics": reports.iter().map(|r| (r.metric.clone(), json!(r.value))).collect::<serde_json::Map<_, _>>(),
        "dfid_per_image": d.per_image,
        "fid_inf": {
            "intercept": inf.intercept,
            "slope": inf.slope,
            "points": inf.points.iter().map(|(n, f)| json!([n, f])).collect::<Vec<_>>(),
        },
        "real_images": real.rows(),
    });
    let path = dir.join(SUMMARY_FILE);
    let text = serde_json::to_string_pretty(&summary).map_err(|e| io_err(&path, e))?;
    fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
    Ok(EvalOutput {
        dir,
        csv: csv_path,
        reports,
    })
}
