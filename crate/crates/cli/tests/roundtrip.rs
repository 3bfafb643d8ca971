use proptest::prelude::*;

use qrd_cli::config::{
    AuditSpec, CustomSpec, EnergySpec, GridSpec, InitialSpec, ModelSpec, OutputSpec, Panel, SeirdRates, SeirdVariant,
    ThetaMode, TimeSpec,
};
use qrd_cli::{emit, parse_str, RunConfig};
use qrd_core::integrator::StepControl;
use qrd_core::{BoundarySpec, StructuralParams};

fn positive() -> impl Strategy<Value = f64> {
    prop_oneof![0.001f64..10.0, (1u32..1000).prop_map(|k| k as f64 / 7.0)]
}

fn rate() -> impl Strategy<Value = String> {
    prop_oneof![positive().prop_map(|v| format!("{v:?}")), Just("0.5".to_string()), Just("1e-2".to_string())]
}

fn seird() -> impl Strategy<Value = ModelSpec> {
    let variant = prop_oneof![
        Just(SeirdVariant::Original),
        Just(SeirdVariant::Quadratic),
        positive().prop_map(SeirdVariant::Delta),
        Just(SeirdVariant::Heterogeneous),
    ];
    (variant, prop::collection::vec(rate(), 12), 0.0f64..1.0, any::<bool>(), positive(), any::<bool>()).prop_map(
        |(variant, r, a0, deceased, growth, response)| {
            let hetero = variant == SeirdVariant::Heterogeneous;
            let mut rates = SeirdRates {
                alpha: r[0].clone(),
                mu: r[1].clone(),
                sigma: r[2].clone(),
                phi_e: r[3].clone(),
                phi_r: r[4].clone(),
                phi_d: r[5].clone(),
                beta_i: r[6].clone(),
                beta_e: r[7].clone(),
                a0,
                nu: [r[8].clone(), r[9].clone(), r[10].clone(), r[11].clone()],
                response_growth: growth,
                ..SeirdRates::default()
            };
            if hetero {
                rates.alpha = "0.01*(1 + x*y)".into();
                if response {
                    rates.beta_i_response = Some("z/(1 + z)".into());
                    rates.beta_e_response = Some("min(z, 1)".into());
                }
            }
            ModelSpec::Seird { variant, rates, include_deceased: deceased }
        },
    )
}

fn custom() -> impl Strategy<Value = ModelSpec> {
    (positive(), positive(), any::<bool>(), 0.0f64..3.0).prop_map(|(d1, d2, anisotropic, k1)| {
        let mut structural = StructuralParams::neutral(2);
        structural.k1 = k1;
        structural.a = vec![vec![1.0, 0.0], vec![0.5, 2.0]];
        ModelSpec::Custom(CustomSpec {
            species: vec!["a".into(), "b".into()],
            reactions: vec!["-a*b".into(), "a*b - b".into()],
            phi: "total".into(),
            diffusion: vec![format!("{d1:?}"), format!("{d2:?}")],
            diffusion_y: anisotropic.then(|| vec!["1".into(), "2*(1 + t)".into()]),
            diffusion_xy: anisotropic.then(|| vec!["0".into(), "0".into()]),
            structural,
        })
    })
}

fn model() -> impl Strategy<Value = ModelSpec> {
    prop_oneof![seird(), Just(ModelSpec::Heat), custom()]
}

fn config() -> impl Strategy<Value = RunConfig> {
    let grid = prop_oneof![
        ((2usize..64), positive()).prop_map(|(n, l)| GridSpec { cells: vec![n], extent: vec![l] }),
        ((2usize..32), (2usize..32), positive(), positive())
            .prop_map(|(n, k, l, h)| GridSpec { cells: vec![n, k], extent: vec![l, h] }),
    ];
    let time = (positive(), 3usize..500, 0.0f64..0.1, 0.1f64..1.0, 0.01f64..1.0).prop_map(|(t, n, eps, gamma, rho)| {
        TimeSpec {
            t_end: t,
            checkpoints: n,
            eps,
            eps_levels: vec![0.1, 0.01, 0.0],
            control: StepControl { gamma, dt_min: 1e-10, dt_max: 0.5, rho },
        }
    });
    let audit = (positive(), any::<u64>(), 1usize..5000, 0usize..2000)
        .prop_map(|(u_max, seed, interior, per_face)| AuditSpec { u_max, seed, interior, per_face });
    let panels = prop::sample::subsequence(Panel::ALL.to_vec(), 0..=3);
    let output = ("[a-z][a-z0-9_/]{0,12}", 0usize..100, panels, any::<bool>())
        .prop_map(|(directory, snapshot_every, panels, deterministic)| OutputSpec { directory, snapshot_every, panels, deterministic });
    (model(), grid, time, audit, output, prop::sample::subsequence(vec![2u32, 3, 4], 0..=3), any::<bool>(), any::<u8>(), positive())
        .prop_map(|(model, grid, time, audit, output, orders, explicit, pick, robin)| {
            let m = model.species().len();
            let dim = grid.cells.len();
            let initial = match &model {
                ModelSpec::Seird { .. } => match pick % 3 {
                    0 => InitialSpec::Homogeneous,
                    1 => InitialSpec::Spot {
                        center: (pick % 2 == 0).then(|| vec![0.25; dim]),
                        width: Some(0.1),
                        mass: (pick % 5 == 0).then_some(0.02),
                    },
                    _ => InitialSpec::TwoCluster { width: None, mass: Some(0.5) },
                },
                ModelSpec::Heat => InitialSpec::Heat,
                ModelSpec::Custom(_) => InitialSpec::Expr(vec!["1 + x".into(), "exp(-x*x)".into()]),
            };
            let boundary =
                if pick % 2 == 0 { BoundarySpec::NeumannZeroFlux } else { BoundarySpec::Robin(vec![robin; m]) };
            let theta = if explicit { ThetaMode::Explicit(vec![2.0; m]) } else { ThetaMode::Auto };
            RunConfig { model, grid, boundary, initial, time, energy: EnergySpec { orders, theta }, audit, output }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn parse_inverts_emit(cfg in config()) {
        let text = emit(&cfg);
        let back = parse_str(&text).map_err(|e| TestCaseError::fail(format!("{e}\n---\n{text}")))?;
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(emit(&back), text);
    }
}
