use dtsurv::expansion::{self, CollapsedLikelihood};
use dtsurv::optim::SmoothObjective;
use dtsurv::simulation::{generate, CensoringSpec, CoefficientSpec, CovariateRule};
use dtsurv::two_stage::{self, PartialLikelihood};
use dtsurv::{FitOptions, FittedModel, PenaltySpec, Penalizer, Result, SurvivalDataset};
use nalgebra::DVector;

type Fitter = fn(&SurvivalDataset, Option<&PenaltySpec>, &FitOptions) -> Result<FittedModel>;
const FITTERS: [Fitter; 2] = [expansion::fit, two_stage::fit];

fn data() -> SurvivalDataset {
    let spec = CoefficientSpec::standard(8).unwrap();
    generate(3000, &spec, &CensoringSpec::uniform(0.8).unwrap(), &CovariateRule::default(), 5).unwrap()
}

#[test]
fn zero_penalizer_reproduces_unpenalized_fit() {
    let ds = data();
    for fitter in FITTERS {
        let plain = fitter(&ds, None, &FitOptions::default()).unwrap();
        for l1_ratio in [0.0, 0.5, 1.0] {
            let zero = PenaltySpec::scalar(0.0, l1_ratio).unwrap();
            let pen = fitter(&ds, Some(&zero), &FitOptions::default()).unwrap();
            for (a, b) in plain.params.beta_matrix().iter().flatten().zip(pen.params.beta_matrix().iter().flatten()) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
    }
}

#[test]
fn strong_lasso_zeroes_every_coefficient() {
    let ds = data();
    let pen = PenaltySpec::scalar(1e4, 1.0).unwrap();
    for fitter in FITTERS {
        let fit = fitter(&ds, Some(&pen), &FitOptions::default()).unwrap();
        assert!(fit.params.beta_matrix().iter().flatten().all(|b| *b == 0.0));
    }
}

#[test]
fn lasso_shrinks_towards_zero() {
    let ds = data();
    let pen = PenaltySpec::scalar(20.0, 1.0).unwrap();
    for fitter in FITTERS {
        let plain = fitter(&ds, None, &FitOptions::default()).unwrap();
        let fit = fitter(&ds, Some(&pen), &FitOptions::default()).unwrap();
        for j in 1..=2 {
            let l1 = |b: &[f64]| b.iter().map(|v| v.abs()).sum::<f64>();
            assert!(l1(fit.params.beta(j)) < l1(plain.params.beta(j)));
            for (a, b) in fit.params.beta(j).iter().zip(plain.params.beta(j)) {
                assert!(a.abs() <= b.abs() + 1e-12);
            }
        }
    }
}

#[test]
fn unpenalized_coordinates_keep_stationarity() {
    let ds = data();
    let w = 40.0;
    for l1_ratio in [0.0, 1.0] {
        let pen = PenaltySpec::new(Penalizer::PerCovariate(vec![w, w, 0.0, 0.0, 0.0]), l1_ratio).unwrap();

        let fit = expansion::fit(&ds, Some(&pen), &FitOptions::default()).unwrap();
        for j in 1..=2 {
            let theta: Vec<f64> = fit.params.alpha(j).iter().chain(fit.params.beta(j)).copied().collect();
            let g = CollapsedLikelihood::new(&ds, j).unwrap().gradient(&DVector::from_vec(theta));
            let d = ds.n_times();
            assert!(g.iter().take(d).all(|v| v.abs() <= 1e-8), "alpha score");
            assert!(g.iter().skip(d + 2).all(|v| v.abs() <= 1e-8), "beta score");
            assert!(g[d].abs() > 1e-3, "penalized coordinate should not be stationary");
        }

        let fit = two_stage::fit(&ds, Some(&pen), &FitOptions::default()).unwrap();
        for j in 1..=2 {
            let obj = PartialLikelihood::new(&ds, j, FitOptions::default().ties).unwrap();
            let g = obj.gradient(&DVector::from_vec(fit.params.beta(j).to_vec()));
            assert!(g.iter().skip(2).all(|v| v.abs() <= 1e-8));
        }
    }
}
