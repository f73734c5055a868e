use std::io::BufReader;

use riesz_equilibrium::ball_riesz::{solve_ball, solve_r_gamma};
use riesz_equilibrium::coulomb_ball::solve_coulomb;
use riesz_equilibrium::discrete_oracle::{empirical_support, minimize, OracleOpts};
use riesz_equilibrium::geometry::{read_csv, write_csv, CsvMeta};
use riesz_equilibrium::iterated_balayage::{solve_segment_riesz, IterationOpts};
use riesz_equilibrium::log_segment::{r_tilde, solve_log_segment};
use riesz_equilibrium::potentials::{conductor_grid, frostman_check_against, ExternalField, Kernel, SurfaceLayer};
use riesz_equilibrium::problem::{KernelFamily, ProblemSpec};
use riesz_equilibrium::RieszParams;

fn opts() -> OracleOpts {
    OracleOpts { restarts: 1, ..OracleOpts::default() }
}

#[test]
fn csv_round_trip_keeps_the_certificate() {
    let res = solve_log_segment(5.0, 1.0).unwrap();
    let mu = &res.equilibrium.measure;
    let mut meta = CsvMeta::new();
    meta.insert("gamma".into(), "5".into());
    let mut buf = Vec::new();
    write_csv(mu, &meta, &mut buf).unwrap();
    let (back, meta_back) = read_csv(BufReader::new(buf.as_slice())).unwrap();
    assert_eq!(meta_back.get("gamma").map(String::as_str), Some("5"));
    assert!((back.mass() - 1.0).abs() < 1e-10);
    let q = ExternalField::new(5.0, 1.0, Kernel::Log).unwrap();
    let rep = frostman_check_against(&back, &[], &q, &conductor_grid(&back, 64), None);
    assert!(rep.passes(1e-8), "{rep:?}");
    for x in [0.65, 0.8, 0.99] {
        assert_eq!(back.density_at(x), mu.density_at(x));
    }
}

#[test]
fn coulomb_csv_round_trip_with_surface_layer() {
    let res = solve_coulomb(3, -1.0, 1.0).unwrap();
    let mu = &res.equilibrium.measure;
    let mut buf = Vec::new();
    write_csv(mu, &CsvMeta::new(), &mut buf).unwrap();
    let (back, _) = read_csv(BufReader::new(buf.as_slice())).unwrap();
    let layers = [SurfaceLayer { radius: 1.0, mass: res.surface_mass }];
    let mut grid = conductor_grid(&back, 64);
    grid.push(1.0);
    let rep = frostman_check_against(&back, &layers, &res.field(), &grid, None);
    assert!(rep.passes(1e-8), "{rep:?}");
}

#[test]
fn ball_and_iterated_segment_agree_in_one_dimension() {
    // Past γ₊ the d = 1 ball solver hands over to the iteration.
    let p = RieszParams::robin(1, 0.5).unwrap();
    let q = ExternalField::new(12.0, 1.0, Kernel::Riesz(0.5)).unwrap();
    let ball = solve_ball(&p, &q).unwrap();
    let seg = solve_segment_riesz(0.5, 12.0, 1.0, &IterationOpts::default()).unwrap();
    let a = ball.equilibrium.unwrap();
    for x in [-0.9, -0.5, 0.4, 0.8] {
        assert!((a.measure.density_at(x) - seg.equilibrium.measure.density_at(x)).abs() < 1e-12);
    }
}

#[test]
fn discrete_ball_radius_approaches_the_continuum_as_n_doubles() {
    let p = RieszParams::robin(3, 2.0).unwrap();
    let want = solve_r_gamma(&p, &ExternalField::new(-20.0, 1.0, Kernel::Riesz(2.0)).unwrap()).unwrap();
    let spec = ProblemSpec::new(3, KernelFamily::Riesz(2.0), -20.0, 1.0).unwrap();
    let errs: Vec<f64> = [64, 128, 256]
        .iter()
        .map(|&n| {
            let c = minimize(&spec, n, 2, &opts()).unwrap();
            (empirical_support(&c, 20, 0).outer - want).abs()
        })
        .collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
}

#[test]
fn discrete_centre_gap_closes_below_the_critical_charge() {
    // γ = 8 < γ₊ for s = 0.5: the continuum support is the whole segment.
    let spec = ProblemSpec::new(1, KernelFamily::Riesz(0.5), 8.0, 1.0).unwrap();
    let gaps: Vec<f64> = [64, 128, 256]
        .iter()
        .map(|&n| {
            let c = minimize(&spec, n, 2, &opts()).unwrap();
            empirical_support(&c, 20, 0).inner.unwrap_or(0.0)
        })
        .collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}

#[test]
fn discrete_log_gap_tracks_the_closed_form() {
    let want = r_tilde(5.0, 1.0).unwrap();
    let spec = ProblemSpec::new(1, KernelFamily::Log, 5.0, 1.0).unwrap();
    for n in [128, 256] {
        let c = minimize(&spec, n, 4, &opts()).unwrap();
        let r = empirical_support(&c, 20, 0).inner.unwrap();
        assert!((r - want).abs() < 0.04, "N={n}: {r}");
    }
}
