use nalgebra::DMatrix;
use sindy_delay::dde_sim::{integrate, HistorySpec, SimConfig};
use sindy_delay::delay_opt::{sweep, DelayGrid, SindyDelayConfig, SindyDelayProblem};
use sindy_delay::library::enumerate_terms;
use sindy_delay::timeseries::{load_csv, write_csv};
use sindy_delay::{CrossPolicy, DelayModel, GreedyConfig, LibrarySpec, SmootherSpec};

fn linear_model(tau: f64) -> DelayModel {
    let spec = LibrarySpec::new(1, 2, true, CrossPolicy::ExcludeMixed).unwrap();
    let n = enumerate_terms(&spec).len();
    let mut coeffs = DMatrix::zeros(n, 1);
    coeffs[(0, 0)] = 0.5;
    coeffs[(1, 0)] = -0.4;
    coeffs[(2, 0)] = -0.6;
    DelayModel::shared_delay(spec, coeffs, tau).unwrap()
}

#[test]
fn recovers_delay_from_a_csv_on_disk() {
    let truth = linear_model(1.5);
    let traj = integrate(&truth, &HistorySpec::Constant(vec![0.2]), 0.0, 12.0, 0.01).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("series.csv");
    let series = traj.to_series().unwrap();
    let every: Vec<usize> = (0..series.len()).step_by(10).collect();
    let times: Vec<f64> = every.iter().map(|&i| series.times()[i]).collect();
    let rows: Vec<Vec<f64>> = every.iter().map(|&i| series.row(i)).collect();
    let sampled = sindy_delay::TimeSeries::from_rows(times, &rows).unwrap();
    write_csv(&sampled, &path).unwrap();
    let loaded = load_csv(&path).unwrap();
    assert_eq!(loaded.values(), sampled.values());

    let config = SindyDelayConfig {
        library: *truth.spec(),
        smoother: SmootherSpec::new(4, 4).unwrap(),
        greedy: GreedyConfig::default(),
        sim: SimConfig::new(0.01),
    };
    let problem = SindyDelayProblem::new(&loaded, config).unwrap();
    let grid = DelayGrid::multiples(0.1, 3.0).unwrap();
    let result = sweep(&problem, &grid, true).unwrap();
    let best = result.best().unwrap();
    assert!(
        (best.delays[0] - 1.5).abs() < 1e-9,
        "best delay {}",
        best.delays[0]
    );
    let model = &best.fit.as_ref().unwrap().model;
    assert_eq!(model.active_terms(0), vec![0, 1, 2]);
    for (j, want) in [(0, 0.5), (1, -0.4), (2, -0.6)] {
        assert!(
            (model.coeffs()[(j, 0)] - want).abs() < 1e-2,
            "term {j}: {}",
            model.coeffs()[(j, 0)]
        );
    }
    assert!(best.error < 1e-4, "E = {}", best.error);
}

#[test]
fn sequential_and_parallel_sweeps_agree_bitwise() {
    let truth = linear_model(0.8);
    let traj = integrate(&truth, &HistorySpec::Constant(vec![0.3]), 0.0, 6.0, 0.05).unwrap();
    let series = traj.to_series().unwrap().without_derivs();
    let config = SindyDelayConfig {
        library: *truth.spec(),
        smoother: SmootherSpec::new(3, 3).unwrap(),
        greedy: GreedyConfig::default(),
        sim: SimConfig::new(0.01),
    };
    let problem = SindyDelayProblem::new(&series, config).unwrap();
    let grid = DelayGrid::multiples(0.1, 1.5).unwrap();
    let a = sweep(&problem, &grid, true).unwrap();
    let b = sweep(&problem, &grid, false).unwrap();
    let bits = |v: Vec<f64>| v.into_iter().map(f64::to_bits).collect::<Vec<_>>();
    assert_eq!(bits(a.errors()), bits(b.errors()));
    assert_eq!(a.best_index(), b.best_index());
}
