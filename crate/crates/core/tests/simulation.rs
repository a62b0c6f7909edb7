use dtsurv::simulation::{
    expected_cell_probabilities, generate, CensoringSpec, CoefficientSpec, CovariateRule,
    SimulationDocument,
};
use dtsurv::{event_table, Error};
use proptest::prelude::*;

#[test]
fn cell_frequencies_match_population_hazards() {
    let d = 10;
    let spec = CoefficientSpec::standard(d).unwrap();
    let rule = CovariateRule::default();
    let censoring = CensoringSpec::uniform(0.8).unwrap();
    let mut events = vec![vec![0usize; d]; 2];
    let mut at_risk = vec![0usize; d];
    for seed in 0..50 {
        let ds = generate(2000, &spec, &censoring, &rule, seed).unwrap();
        let table = event_table(&ds);
        for t in 1..=d {
            at_risk[t - 1] += table.at_risk_at(t);
            for j in 1..=2 {
                events[j - 1][t - 1] += table.events_at(j, t);
            }
        }
    }
    let truth = expected_cell_probabilities(&spec, &rule, 400_000, 99).unwrap();
    for j in 1..=2 {
        for t in 1..=d {
            let y = at_risk[t - 1] as f64;
            let observed = events[j - 1][t - 1] as f64 / y;
            let expected = truth.conditional(j, t);
            let se = (expected * (1.0 - expected) / y).sqrt();
            assert!(
                (observed - expected).abs() <= 3.0 * se,
                "(j={j}, t={t}): {observed} vs {expected} ± {se}"
            );
        }
    }
}

#[test]
fn standard_design_event_counts_decay() {
    let doc = SimulationDocument::new(
        &CoefficientSpec::standard(30).unwrap(),
        CensoringSpec::uniform(0.8).unwrap(),
        CovariateRule::default(),
        0,
    );
    let ds = doc.generate(50_000).unwrap();
    let table = event_table(&ds);
    for t in 1..=30 {
        assert!(table.events_at(1, t) > table.events_at(2, t), "t={t}");
    }
    assert!(table.events_at(1, 1) > 4 * table.events_at(1, 30));
    assert!(table.events_at(2, 1) > 4 * table.events_at(2, 30));
}

#[test]
fn uncensored_runs_only_censor_past_the_grid() {
    let spec = CoefficientSpec::standard(5).unwrap();
    let ds = generate(3000, &spec, &CensoringSpec::none(), &CovariateRule::default(), 4).unwrap();
    assert!(ds.observations().iter().all(|o| (o.event == 0) == (o.time == 6)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_data_satisfy_invariants(
        seed in any::<u64>(),
        n in 1usize..200,
        d in 1usize..12,
        prob in 0.0..=1.0f64,
    ) {
        let spec = CoefficientSpec::standard(d).unwrap();
        let censoring = CensoringSpec::uniform(prob).unwrap();
        let a = generate(n, &spec, &censoring, &CovariateRule::default(), seed).unwrap();
        let b = generate(n, &spec, &censoring, &CovariateRule::default(), seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.len(), n);
        for o in a.observations() {
            prop_assert!((1..=d + 1).contains(&o.time));
            prop_assert!(o.event <= 2);
            if o.event != 0 {
                prop_assert!(o.time <= d);
            }
        }
    }
}

#[test]
fn bad_inputs_are_rejected() {
    let spec = CoefficientSpec::standard(3).unwrap();
    let rule = CovariateRule::default();
    assert!(matches!(
        generate(0, &spec, &CensoringSpec::none(), &rule, 0),
        Err(Error::Argument(_))
    ));
    assert!(CensoringSpec::uniform(1.5).is_err());
    let wrong = CovariateRule::Fixed { values: vec![1.0] };
    assert!(generate(3, &spec, &CensoringSpec::none(), &wrong, 0).is_err());
}
