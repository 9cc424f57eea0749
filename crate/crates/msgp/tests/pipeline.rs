use msgp::config::RunConfig;
use msgp::parallel::{self, SaOptions};
use msgp::pipeline;
use msgp_core::design::{self, OutputMatrix, VariableSpec};
use msgp_core::mcmc::{self, McmcConfig};
use msgp_core::testfns::TestFunction;

fn small_problem() -> (design::DesignMatrix, OutputMatrix) {
    let specs = vec![
        VariableSpec::continuous("a", 0.0, 1.0),
        VariableSpec::continuous("b", 0.0, 1.0),
        VariableSpec::continuous("c", 0.0, 1.0),
    ];
    let d = pipeline::make_design(&specs, 40, false, design::DEFAULT_CROSS_CAP, 6).unwrap();
    let f = TestFunction::SobolG { a: vec![0.0, 1.0, 9.0] };
    let y = f.eval_rows(&d.values).unwrap();
    (d, OutputMatrix::new(y, vec!["g".into()]).unwrap())
}

fn small_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.mcmc.iterations = 300;
    cfg.mcmc.burn_in = 100;
    cfg.mcmc.thin = 4;
    cfg.sa.s = 400;
    cfg.sa.max_draws = Some(6);
    cfg.sa.main_effect_s = 50;
    cfg.sa.grid = 4;
    cfg
}

#[test]
fn parallel_chains_match_sequential_chains() {
    let (d, y) = small_problem();
    let cfg = small_config();
    let pool = parallel::thread_pool(Some(2)).unwrap();
    let (_, model) = pipeline::fit(&cfg, &d, &y, 1, &pool, (None, None)).unwrap();
    let mc = McmcConfig {
        iterations: 300,
        burn_in: 100,
        thin: 4,
        ..McmcConfig::default()
    };
    let seeds = [11, 12, 13];
    let par = parallel::run_chains(&model, &mc, &seeds, &pool).unwrap();
    assert_eq!(par, mcmc::run_chains_sequential(&model, &mc, &seeds).unwrap());
    assert!(parallel::run_chains(&model, &mc, &[5, 5], &pool).is_err());
}

#[test]
fn thread_count_does_not_change_results() {
    let (d, y) = small_problem();
    let cfg = small_config();
    let opts = SaOptions::from(&cfg.sa);
    let run = |threads| {
        let pool = parallel::thread_pool(Some(threads)).unwrap();
        let (archive, model) = pipeline::fit(&cfg, &d, &y, 3, &pool, (None, None)).unwrap();
        let res = pipeline::analyse(&archive, &model, &opts, cfg.sa.max_draws, &pool).unwrap();
        (archive.to_jsonl(), pipeline::index_report(&res, &model, &opts, "x"))
    };
    let (a1, r1) = run(1);
    let (a3, r3) = run(3);
    assert_eq!(a1, a3);
    assert_eq!(serde_json::to_string(&r1).unwrap(), serde_json::to_string(&r3).unwrap());
    assert_eq!(r1.draws_used, 6);
}

#[test]
fn evenly_spaced_draw_selection() {
    let (d, y) = small_problem();
    let cfg = small_config();
    let pool = parallel::thread_pool(Some(1)).unwrap();
    let (archive, _) = pipeline::fit(&cfg, &d, &y, 2, &pool, (None, None)).unwrap();
    let all = archive.pooled_draws();
    let picked = parallel::select_draws(&all, Some(4));
    assert_eq!(picked.len(), 4);
    for (i, p) in picked.iter().enumerate() {
        assert!(std::ptr::eq(*p, all[i * all.len() / 4]));
    }
    assert_eq!(parallel::select_draws(&all, None).len(), all.len());
}

#[test]
fn archive_round_trips_bit_for_bit() {
    let (d, y) = small_problem();
    let cfg = small_config();
    let pool = parallel::thread_pool(Some(1)).unwrap();
    let (archive, model) = pipeline::fit(&cfg, &d, &y, 4, &pool, (None, None)).unwrap();
    let back = msgp::archive::ModelArchive::from_jsonl(&archive.to_jsonl()).unwrap();
    assert_eq!(back, archive);
    let rebuilt = back.model().unwrap();
    let test = design::lhs_sample(&model.design().specs, 7, design::LhsOptions::default(), 9).unwrap();
    let (m1, lo1, hi1) = pipeline::predict(&archive, &model, &test).unwrap();
    let (m2, lo2, hi2) = pipeline::predict(&back, &rebuilt, &test).unwrap();
    assert_eq!((m1, lo1, hi1), (m2, lo2, hi2));
}
