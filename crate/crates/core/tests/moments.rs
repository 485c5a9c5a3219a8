//! Finite-n moment identities of linear statistics, against oracles computed
//! here from the entry moments alone.

use wigner_lss::ensembles::{build_entry_distribution, sample_spectrum, EnsembleSpec, EntryKind};
use wigner_lss::stats::{mean_estimate, variance_estimate};

fn traces(spec: &EnsembleSpec, trials: u64, seed: u64, power: i32) -> Vec<f64> {
    (0..trials).map(|i| sample_spectrum(spec, seed, i).unwrap().eigenvalues.iter().map(|l| l.powi(power)).sum()).collect()
}

// E tr H^2 = sum_ij E H_ij^2 = (n - 1) + 2 = n + 1.
// Var tr H^2 = n Var(H_ii^2) + 2 n (n - 1) Var(H_ij^2) with
// Var(H_ii^2) = (2/n)^2 (2 + 2 s4) and Var(H_ij^2) = (2 + s4) / n^2.
fn var_tr_h2(n: f64, s4: f64) -> f64 {
    8.0 * (1.0 + s4) / n + 2.0 * (2.0 + s4) * (1.0 - 1.0 / n)
}

#[test]
fn goe_trace_moments() {
    let n = 12;
    let spec = EnsembleSpec::goe(n);
    let t1 = traces(&spec, 20_000, 1, 1);
    let m = mean_estimate(&t1);
    let v = variance_estimate(&t1);
    assert!(m.value.abs() < 4.0 * m.se, "{m:?}");
    // Var tr H = n * 2/n.
    assert!((v.value - 2.0).abs() < 4.0 * v.se, "{v:?}");
    let t2 = traces(&spec, 20_000, 2, 2);
    let m = mean_estimate(&t2);
    assert!((m.value - (n as f64 + 1.0)).abs() < 4.0 * m.se, "{m:?}");
    let v = variance_estimate(&t2);
    assert!((v.value - var_tr_h2(n as f64, 0.0)).abs() < 4.0 * v.se, "{v:?}");
}

#[test]
fn laplace_fourth_cumulant_enters_the_variance() {
    let n = 16;
    let dist = build_entry_distribution(EntryKind::Laplace).unwrap();
    assert!((dist.s4 - 3.0).abs() < 1e-12);
    let spec = EnsembleSpec::wigner(n, dist);
    let t2 = traces(&spec, 20_000, 3, 2);
    let v = variance_estimate(&t2);
    let want = var_tr_h2(n as f64, 3.0);
    assert!((v.value - want).abs() < 4.0 * v.se, "{v:?} vs {want}");
    // The Gaussian value is excluded.
    assert!((v.value - var_tr_h2(n as f64, 0.0)).abs() > 6.0 * v.se);
}

#[test]
fn skewed_entries_shift_the_third_moment() {
    // E tr H^3 = sum_i E H_ii^3 = n (2/n)^{3/2} E Y^3 = 4 s3 / sqrt(n): only the
    // diagonal survives since off-diagonal cycles of length 3 need distinct indices.
    let n = 9;
    let kind = EntryKind::GaussianMixture { weights: vec![0.2, 0.8], means: vec![2.0, -0.5], scales: vec![0.5, 0.7] };
    let dist = build_entry_distribution(kind).unwrap();
    let s3 = dist.s3;
    assert!(s3.abs() > 0.3);
    let spec = EnsembleSpec::wigner(n, dist);
    let t3 = traces(&spec, 40_000, 4, 3);
    let m = mean_estimate(&t3);
    let want = 4.0 * s3 / (n as f64).sqrt();
    assert!((m.value - want).abs() < 4.0 * m.se, "{m:?} vs {want}");
}
