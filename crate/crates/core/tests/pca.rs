mod common;

use factorlens::embed::{fit_pca_with, project, reconstruct, PcaRoute};
use factorlens::extract::rng::SplitMix64;
use factorlens::{fit_pca, Matrix};

fn gaussian_cloud(seed: u64, n: usize, scales: &[f64]) -> Matrix {
    let mut rng = SplitMix64::new(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            scales
                .iter()
                .map(|s| s * common::normal(&mut rng))
                .collect()
        })
        .collect();
    Matrix::from_rows(&rows).unwrap()
}

#[test]
fn rotated_diagonal_covariance() {
    // population covariance exactly R diag(4, 1) R^T, R a 30 degree rotation
    let (c, s) = (30f64.to_radians().cos(), 30f64.to_radians().sin());
    let (a, b) = (8f64.sqrt(), 2f64.sqrt());
    let pts = vec![
        vec![a * c, a * s],
        vec![-a * c, -a * s],
        vec![-b * s, b * c],
        vec![b * s, -b * c],
    ];
    let m = fit_pca(&Matrix::from_rows(&pts).unwrap(), 2).unwrap();
    assert!((m.eigenvalues()[0] - 4.0).abs() < 1e-10);
    assert!((m.eigenvalues()[1] - 1.0).abs() < 1e-10);
    let pc1 = m.components().row(0);
    assert!(
        (pc1[0] - c).abs() < 1e-10 && (pc1[1] - s).abs() < 1e-10,
        "{pc1:?}"
    );
    assert!((m.total_variance() - 5.0).abs() < 1e-12);
}

#[test]
fn one_component_reconstruction_error_is_smaller_eigenvalue() {
    let x = gaussian_cloud(3, 4000, &[2.0, 0.5]);
    let m = fit_pca(&x, 1).unwrap();
    let full = fit_pca(&x, 2).unwrap();
    let rec = reconstruct(&m, &project(&m, &x).unwrap()).unwrap();
    let err: f64 = x
        .data()
        .iter()
        .zip(rec.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / x.rows() as f64;
    let l2 = full.eigenvalues()[1];
    assert!((err - l2).abs() <= 0.05 * l2, "err {err} vs lambda2 {l2}");
}

#[test]
fn gram_and_covariance_routes_agree() {
    let mut rng = SplitMix64::new(77);
    let rows: Vec<Vec<f64>> = (0..50)
        .map(|_| {
            (0..500)
                .map(|j| common::normal(&mut rng) * (1.0 + (j % 7) as f64))
                .collect()
        })
        .collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let g = fit_pca_with(&x, 20, PcaRoute::Gram).unwrap();
    let c = fit_pca_with(&x, 20, PcaRoute::Covariance).unwrap();
    for (a, b) in g.spectrum().iter().zip(c.spectrum()) {
        assert!((a - b).abs() <= 1e-8 * g.spectrum()[0]);
    }
    for i in 0..20 {
        let d: f64 = g
            .components()
            .row(i)
            .iter()
            .zip(c.components().row(i))
            .map(|(a, b)| a * b)
            .sum();
        assert!((d - 1.0).abs() < 1e-8, "component {i}: {d}");
    }
    assert_eq!(g.spectrum().len(), 50);
}

#[test]
fn explained_variance_is_consistent() {
    let x = gaussian_cloud(5, 300, &[3.0, 2.0, 1.0, 0.5, 0.1]);
    let m = fit_pca(&x, 5).unwrap();
    let sum: f64 = m.spectrum().iter().sum();
    assert!((sum - m.total_variance()).abs() <= 1e-10 * sum);
    let ratios = m.explained_variance_ratio();
    assert!(ratios.iter().all(|r| (0.0..=1.0).contains(r)));
    assert!(ratios.iter().sum::<f64>() <= 1.0 + 1e-12);
}

#[test]
fn fits_are_reproducible() {
    let x = gaussian_cloud(6, 80, &[1.0; 12]);
    let a = fit_pca(&x, 5).unwrap();
    let b = fit_pca(&x, 5).unwrap();
    assert_eq!(a.components().data(), b.components().data());
}
