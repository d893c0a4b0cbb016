use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rdalab::coeffs::{AdvectionField, TensorField};
use rdalab::duality::{self, DualProblem, EnsembleMember};
use rdalab::estimates::{collapse_scalar, NormReport};
use rdalab::grid::{Grid, Snapshot};
use rdalab::network::{certify, random::random_network, Kinetics, MassActionKinetics, ReactionNetwork};
use rdalab::presets::{names, preset};
use rdalab::scenario::Scenario;
use rdalab::solver::operator::{diffusion_operator, FaceAverage};
use rdalab::solver::Trajectory;

fn permuted(net: &ReactionNetwork, species: &[usize], reactions: &[usize]) -> ReactionNetwork {
    let row = |r: &Vec<u32>| species.iter().map(|&s| r[s]).collect::<Vec<u32>>();
    ReactionNetwork::new(
        net.species(),
        reactions.iter().map(|&j| row(&net.alpha()[j])).collect(),
        reactions.iter().map(|&j| row(&net.beta()[j])).collect(),
        reactions.iter().map(|&j| net.k()[j].clone()).collect(),
        reactions.iter().map(|&j| net.kappa()[j].clone()).collect(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn certification_survives_relabelling(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng);
        let mut species: Vec<usize> = (0..net.species()).collect();
        let mut reactions: Vec<usize> = (0..net.reactions()).collect();
        species.shuffle(&mut rng);
        reactions.shuffle(&mut rng);
        let other = permuted(&net, &species, &reactions);
        let a = certify(&net).unwrap();
        let b = certify(&other).unwrap();
        prop_assert!(a.verify(&net).is_ok());
        prop_assert!(b.verify(&other).is_ok());
        // The conservation vectors agree after relabelling, up to scale.
        let ea = a.e_f64();
        let eb = b.e_f64();
        let ratio = eb[0] / ea[species[0]];
        for (new, &old) in species.iter().enumerate() {
            prop_assert!((eb[new] - ratio * ea[old]).abs() <= 1e-12 * eb[new].abs().max(1.0));
        }
    }

    #[test]
    fn certificate_bounds_hold_at_random_states(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng);
        let cert = certify(&net).unwrap();
        let kin = MassActionKinetics::new(&net);
        let b = cert.b_f64();
        let mut f = vec![0.0; net.species()];
        for _ in 0..20 {
            let c: Vec<f64> = (0..net.species()).map(|_| rng.gen_range(0.0..20.0)).collect();
            kin.production(&c, &mut f);
            let s = 1.0 + c.iter().sum::<f64>();
            for (qf, bi) in cert.apply_q(&f).iter().zip(&b) {
                prop_assert!(*qf <= s * bi + 1e-9 * (1.0 + qf.abs()));
            }
            prop_assert!(cert.weighted_sum(&f) <= s * cert.b0_f64() + 1e-9 * (1.0 + s));
            let e = cert.e_f64();
            let conserved: f64 = e.iter().zip(&f).map(|(a, b)| a * b).sum();
            let scale: f64 = e.iter().zip(&f).map(|(a, b)| (a * b).abs()).sum::<f64>().max(1.0);
            prop_assert!(conserved.abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn quasi_positivity_on_faces(seed in any::<u64>(), face in 0usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng);
        let kin = MassActionKinetics::new(&net);
        let i = face % net.species();
        let mut c: Vec<f64> = (0..net.species()).map(|_| rng.gen_range(0.0..10.0)).collect();
        c[i] = 0.0;
        let mut f = vec![0.0; net.species()];
        kin.production(&c, &mut f);
        prop_assert!(f[i] >= -1e-12);
    }

    #[test]
    fn diffusion_conserves_mass(seed in any::<u64>(), nx in 3usize..10, ny in 3usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = Grid::rect(nx, ny, 1.0, 2.0);
        let (a, b, c): (f64, f64, f64) = (rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0), rng.gen_range(-1.5..1.5));
        let d = TensorField::from_fn(2, (0.1, 10.0), move |_, x| {
            let off = c * (x[0] * x[1]).sin();
            [[a + x[0], off], [off, b + x[1]]]
        });
        let v: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(0.0..5.0)).collect();
        for avg in [FaceAverage::Arithmetic, FaceAverage::Harmonic] {
            let op = diffusion_operator(&grid, &d, 0.0, avg);
            let total: f64 = op.apply(&v).iter().sum();
            prop_assert!(total.abs() <= 1e-9 * v.iter().sum::<f64>());
            let flat = op.apply(&vec![3.0; grid.len()]);
            prop_assert!(flat.iter().all(|x| x.abs() <= 1e-9));
        }
    }

    #[test]
    fn norms_are_consistent(seed in any::<u64>(), n in 2usize..12, steps in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = Grid::rect(n, n, 1.5, 1.0);
        let times: Vec<f64> = (0..=steps).map(|k| 0.3 * k as f64).collect();
        let states: Vec<Vec<Vec<f64>>> = times
            .iter()
            .map(|_| (0..2).map(|_| (0..grid.len()).map(|_| rng.gen_range(0.0..3.0)).collect()).collect())
            .collect();
        let r = NormReport::from_trajectory(&Trajectory::from_states(grid, times, states)).unwrap();
        prop_assert!(r.nonnegative());
        prop_assert!(r.holder_consistent());
        prop_assert!(r.monotone_in_p());
    }

    #[test]
    fn collapse_stays_within_bounds(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = Grid::line(12, 1.0);
        let ds: Vec<f64> = (0..3).map(|_| rng.gen_range(0.1..4.0)).collect();
        let diffusion: Vec<TensorField> = ds
            .iter()
            .map(|&d| TensorField::from_fn(1, (d, d + 0.5), move |_, x| [[d + 0.5 * x[0], 0.0], [0.0, 0.0]]))
            .collect();
        let advection = vec![AdvectionField::zero(1); 3];
        let states: Vec<Vec<Vec<f64>>> = (0..3)
            .map(|_| (0..3).map(|_| (0..12).map(|_| rng.gen_range(0.0..50.0)).collect()).collect())
            .collect();
        let traj = Trajectory::from_states(grid, vec![0.0, 0.5, 1.0], states);
        let r = collapse_scalar(&traj, &diffusion, &advection).unwrap();
        for s in &r.snapshots {
            prop_assert!(s.w_min >= 1.0);
            prop_assert!(s.a_min >= r.lower - 1e-12 && s.a_max <= r.upper + 1e-12);
        }
    }

    #[test]
    fn snapshot_text_round_trip(seed in any::<u64>(), nx in 2usize..6, ny in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = Grid::rect(nx, ny, rng.gen_range(0.1..3.0), 1.0);
        let snaps: Vec<Snapshot> = (0..2)
            .map(|i| Snapshot {
                grid: grid.clone(),
                time: rng.gen_range(0.0..1.0),
                species: i,
                values: (0..grid.len()).map(|_| rng.gen_range(-1e3..1e3)).collect(),
            })
            .collect();
        let text: String = snaps.iter().map(|s| s.to_text()).collect();
        prop_assert_eq!(Snapshot::parse_all(&text).unwrap(), snaps);
    }

    #[test]
    fn dual_comparison_principle(seed in any::<u64>(), index in 0usize..50) {
        let m = EnsembleMember::random(seed, index, (0.5, 2.0), 1.0);
        let grid = Grid::line(20, 1.0);
        let times = duality::time_levels(1.0, duality::level_dt(20));
        let dp = DualProblem {
            a: m.diffusivity(),
            bounds: (0.5, 2.0),
            u: m.velocity(),
            theta: duality::default_theta(1.0),
            t_final: 1.0,
        };
        let d = duality::solve_dual(&dp, &grid, &times).unwrap();
        prop_assert!(d.psi.iter().flatten().all(|&v| v >= -1e-12));
        prop_assert!(d.psi.last().unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scenario_round_trip(which in 0usize..6, cells in 2usize..40, dt in 1e-4f64..1e-1) {
        let name = names()[which];
        let s = preset(name).unwrap();
        let cells: Vec<usize> = s.grid.cells().iter().map(|_| cells).collect();
        let s = s.with_resolution(&cells, dt).unwrap();
        let text = s.to_toml_string().unwrap();
        prop_assert_eq!(Scenario::from_toml_str(&text).unwrap(), s);
    }
}

#[test]
fn every_preset_round_trips() {
    for name in names() {
        let s = preset(name).unwrap();
        let again = Scenario::from_toml_str(&s.to_toml_string().unwrap()).unwrap();
        assert_eq!(again, s, "{name}");
    }
}
