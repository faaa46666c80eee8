// SPDX-License-Identifier: Apache-2.0

use idma_core::costmodel::timing::TimingCoefficients;
use idma_core::costmodel::{estimate_area, nnls, AreaTable, TimingModel, TimingSample};
use idma_core::{Direction, EngineConfig, PortConfig, ProtocolId};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Best non-negative solution by trying every support set.
fn exhaustive_nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> (Vec<f64>, f64) {
    let n = a.ncols();
    let mut best = (vec![0.0; n], b.norm());
    for mask in 1u32..(1 << n) {
        let cols: Vec<usize> = (0..n).filter(|j| mask >> j & 1 == 1).collect();
        let sub = a.select_columns(&cols);
        let Some(z) = (sub.transpose() * &sub).lu().solve(&(sub.transpose() * b)) else { continue };
        if z.iter().any(|&v| v < 0.0) {
            continue;
        }
        let mut x = vec![0.0; n];
        for (k, &j) in cols.iter().enumerate() {
            x[j] = z[k];
        }
        let r = (b - a * DVector::from_column_slice(&x)).norm();
        if r < best.1 {
            best = (x, r);
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn nnls_matches_exhaustive_search(
        n in 1usize..=6,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = n + rng.random_range(1..12);
        let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-5.0..5.0));
        let b = DVector::from_fn(m, |_, _| rng.random_range(-10.0..10.0));
        let fit = nnls(&a, &b).unwrap();
        let (want, r) = exhaustive_nnls(&a, &b);
        prop_assert!((fit.residual_norm - r).abs() <= 1e-8 * r.max(1.0), "{} vs {r}", fit.residual_norm);
        for (x, y) in fit.coefficients.iter().zip(&want) {
            prop_assert!(*x >= 0.0);
            prop_assert!((x - y).abs() <= 1e-6 * y.abs().max(1.0), "{:?} vs {:?}", fit.coefficients, want);
        }
    }
}

#[test]
fn timing_fit_recovers_synthetic_paths() {
    let truth = TimingModel::synthetic();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let sample = |rng: &mut ChaCha8Rng| {
        let dw = 8 << rng.random_range(0..7);
        let aw = rng.random_range(16..=64);
        let nax = 1 << rng.random_range(0..7);
        let k = rng.random_range(1..=3);
        let protocols: Vec<_> = (0..k).map(|_| ProtocolId::ALL[rng.random_range(0..7)]).collect();
        let noise = 1.0 + rng.random_range(-0.02..0.02);
        let path = truth.path(dw, aw, nax, &protocols).unwrap();
        TimingSample { dw, aw, nax, protocols, path_ns: path * noise }
    };
    let train: Vec<_> = (0..120).map(|_| sample(&mut rng)).collect();
    let fit = TimingModel::fit(&train).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let s = sample(&mut rng);
        let clean = truth.path(s.dw, s.aw, s.nax, &s.protocols).unwrap();
        let got = fit.path(s.dw, s.aw, s.nax, &s.protocols).unwrap();
        worst = worst.max((got - clean).abs() / clean);
    }
    assert!(worst <= 0.04, "worst held-out error {worst}");
}

#[test]
fn timing_coefficients_round_trip() {
    let c = TimingCoefficients::synthetic();
    let json = serde_json::to_string(&c).unwrap();
    assert_eq!(serde_json::from_str::<TimingCoefficients>(&json).unwrap(), c);
}

#[test]
fn area_is_linear_in_widths() {
    let at = |dw: u32, aw: u32| {
        let mut c = EngineConfig::base(16);
        c.dw = dw;
        c.aw = aw;
        estimate_area(&c).unwrap().total
    };
    let d1 = at(64, 32) - at(32, 32);
    let d2 = at(96, 32) - at(64, 32);
    assert!((d1 - d2).abs() < 1e-9);
    // dw-scaled rows for base+AXI: 1300+70+190+30+120+250+250 per 32 bits
    assert!((d1 - 2210.0).abs() < 1e-9, "{d1}");
    let a1 = at(32, 64) - at(32, 32);
    // aw-scaled rows: 1500 + 710 + 710
    assert!((a1 - 2920.0).abs() < 1e-9, "{a1}");
}

#[test]
fn area_grows_with_each_port() {
    let mut c = EngineConfig::base(16);
    let base = estimate_area(&c).unwrap().total;
    c.ports.push(PortConfig::new(ProtocolId::Obi, Direction::ReadWrite));
    let with_obi = estimate_area(&c).unwrap().total;
    // OBI adds its summed cells only: decoupling 620, page_split 10, manager 95
    assert!((with_obi - base - 725.0).abs() < 1e-9, "{}", with_obi - base);
}

#[test]
fn table_round_trips_through_custom_csv() {
    let text = "# tiny\nunit,scale,base,axi_r,axi_w\nx,dw,10,1,2*\n";
    let t = AreaTable::parse(text).unwrap();
    let mut c = EngineConfig::base(16);
    c.dw = 64;
    let a = t.estimate(&c).unwrap();
    assert_eq!(a.total, 2.0 * (10.0 + 1.0 + 2.0));
    assert!(a.to_csv().starts_with("unit,base_ge,read_ge,write_ge,total_ge\n"));
}
