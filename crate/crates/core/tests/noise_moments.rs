use lsem::assembly::Discretization;
use lsem::mesh::Mesh2D;
use lsem::stochastic::{NoisePaths, QWienerSampler};

const SAMPLES: u64 = 20_000;

fn variance(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

#[test]
fn amplitude_variance_matches_eigenvalues() {
    let s = QWienerSampler::default();
    let tau = 0.01;
    let draws: Vec<Vec<f64>> = (0..SAMPLES).map(|id| s.mode_amplitudes(id, 1, 0, tau)).collect();
    for (m, mode) in s.spectrum().iter().enumerate().take(8) {
        let col: Vec<f64> = draws.iter().map(|d| d[m]).collect();
        let target = s.amplitude.powi(2) * mode.q * tau;
        let rel = variance(&col) / target - 1.0;
        assert!(rel.abs() < 0.05, "mode ({}, {}): relative error {rel}", mode.j, mode.k);
    }
}

#[test]
fn increments_are_uncorrelated_across_steps_and_fields() {
    let s = QWienerSampler {
        paths: NoisePaths::Independent,
        ..QWienerSampler::default()
    };
    let a: Vec<f64> = (0..SAMPLES).map(|id| s.normals(id, 3, 0)[0]).collect();
    for b in [
        (0..SAMPLES).map(|id| s.normals(id, 4, 0)[0]).collect::<Vec<_>>(),
        (0..SAMPLES).map(|id| s.normals(id, 3, 1)[0]).collect(),
        (0..SAMPLES).map(|id| s.normals(id + 1, 3, 0)[0]).collect(),
    ] {
        let n = a.len() as f64;
        let corr = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / n;
        assert!(corr.abs() < 0.05, "correlation {corr}");
    }
    let shared = QWienerSampler::default();
    assert_eq!(shared.normals(9, 3, 0), shared.normals(9, 3, 2));
}

#[test]
fn projected_increment_recovers_low_modes() {
    // Low modes are resolved to near machine precision at N = 14, so the
    // projected increment tested against e_jk returns the KL amplitude.
    let d = Discretization::from_mesh(Mesh2D::unit_square(14).unwrap()).unwrap();
    let s = QWienerSampler::default();
    let p = s.bind(&d).unwrap();
    for id in 0..5 {
        let inc = p.increment(id, 2, 0, 0.1);
        let amps = s.mode_amplitudes(id, 2, 0, 0.1);
        for m in 0..4 {
            let dot: f64 = inc.coeffs.iter().zip(p.mode_load(m)).map(|(a, b)| a * b).sum();
            assert!((dot - amps[m]).abs() < 1e-9, "sample {id} mode {m}: {dot} vs {}", amps[m]);
        }
    }
}
