use std::fs;

use erval_core::report::parse_metrics;
use erval_core::sim::{SimConfig, SimReport, Simulation};
use erval_core::synth::{all_but_one_match, generate_rldata_like, Corruption, PersonPopulation};
use erval_core::Design;

use super::{parse_list, read_attributes, read_membership, seed_or_draw};
use crate::args::SimulateArgs;
use crate::error::{CliError, CliResult};
use crate::output::{create_file, emit, num, table};

pub fn run(a: SimulateArgs, pretty: bool) -> CliResult<()> {
    if !(0.0..=1.0).contains(&a.corruption) {
        return Err(CliError::Usage("--corruption must lie in [0, 1]".into()));
    }
    let config = SimConfig {
        designs: a
            .designs
            .split(',')
            .map(|d| Design::parse(d.trim()))
            .collect::<erval_core::Result<_>>()?,
        sizes: parse_list(&a.sizes, "sample size", |s| s.parse().ok())?,
        reps: a.reps,
        metrics: parse_metrics(&a.metrics)?,
        beta: a.beta,
        seed: 0,
    };

    let (truth, attrs) = if a.generate {
        let params = PersonPopulation {
            n_pairs: a.n_pairs,
            n_singletons: a.n_singletons,
            corruption: Corruption::uniform(a.corruption),
            seed: a.population_seed,
            ..PersonPopulation::default()
        };
        let (t, at) = generate_rldata_like(&params)?;
        (t, Some(at))
    } else {
        let path = a.truth.as_deref().expect("clap enforces one population");
        (read_membership(path)?, a.attributes.as_deref().map(read_attributes).transpose()?)
    };
    let prediction = match &a.prediction {
        Some(p) => read_membership(p)?,
        None => {
            let attrs = attrs
                .as_ref()
                .ok_or_else(|| CliError::Usage("the all-but-one matcher needs --attributes or --generate".into()))?;
            all_but_one_match(attrs, a.exact)?
        }
    };
    if let Some(dir) = &a.save_population {
        fs::create_dir_all(dir)?;
        truth.write_csv(create_file(&dir.join("truth.csv"))?)?;
        prediction.write_csv(create_file(&dir.join("prediction.csv"))?)?;
        if let Some(at) = &attrs {
            at.write_csv(create_file(&dir.join("attributes.csv"))?)?;
        }
    }

    let config = SimConfig {
        seed: seed_or_draw(a.seed),
        ..config
    };
    let mut sim = Simulation::new(&truth, &prediction, config);
    if let Some(p) = &a.checkpoint {
        sim = sim.checkpoint(p);
    }
    let report = sim.run()?;
    if let Some(p) = &a.csv_out {
        report.write_csv(create_file(p)?)?;
    }
    let t = pretty.then(|| report_table(&report));
    emit(&report, a.out.as_deref(), t)
}

fn report_table(r: &SimReport) -> String {
    let rows: Vec<Vec<String>> = r
        .cells
        .iter()
        .map(|c| {
            vec![
                c.metric.to_string(),
                c.design.as_str().into(),
                c.k.to_string(),
                num(c.truth),
                num(c.bias),
                num(c.rmse),
                num(c.coverage_2),
                num(c.mean_std),
                c.failures.to_string(),
            ]
        })
        .collect();
    format!(
        "seed {}, {} replications\n\n{}",
        r.seed,
        r.replications,
        table(
            &["metric", "design", "k", "truth", "bias", "rmse", "coverage", "mean std", "failed"],
            &rows
        )
    )
}
