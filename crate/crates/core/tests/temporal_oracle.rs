mod common;

use chrono::{Duration, TimeZone, Utc};
use proptest::prelude::*;
use star_core::raster::{LayerMeta, OrbitPass, Polarization, StackLayer, TimeStack};
use star_core::temporal::{band_combine, composite, BandCombo, CompositeStat};
use star_core::{RasterGrid, Units};

fn layer(i: usize, values: Vec<f64>, valid: Vec<bool>, w: usize, h: usize) -> StackLayer<f64> {
    StackLayer {
        grid: common::grid_with_holes(w, h, values, valid, Units::Db),
        meta: LayerMeta {
            timestamp: Utc.with_ymd_and_hms(2022, 1, 1, 0, 0, 0).unwrap() + Duration::days(12 * i as i64),
            orbit_pass: OrbitPass::Ascending,
            relative_orbit: 1,
            polarization: Polarization::VV,
        },
    }
}

fn oracle(samples: &mut [f64], stat: CompositeStat) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Some(match stat {
        CompositeStat::Min => samples[0],
        CompositeStat::Max => samples[samples.len() - 1],
        CompositeStat::Median => samples[(samples.len() - 1) / 2],
        CompositeStat::Mean => samples.iter().sum::<f64>() / samples.len() as f64,
    })
}

type Layers = Vec<(Vec<f64>, Vec<bool>)>;

fn stack_strategy() -> impl Strategy<Value = (usize, usize, Layers)> {
    (1usize..8, 1usize..8, 1usize..11).prop_flat_map(|(w, h, n)| {
        let layer = (prop::collection::vec(-40.0f64..10.0, w * h), prop::collection::vec(prop::bool::weighted(0.8), w * h));
        (Just(w), Just(h), prop::collection::vec(layer, n))
    })
}

proptest! {
    #[test]
    fn composite_matches_sort_oracle((w, h, layers) in stack_strategy()) {
        let stack = TimeStack::new(
            layers.iter().enumerate().map(|(i, (v, m))| layer(i, v.clone(), m.clone(), w, h)).collect(),
        ).unwrap();
        for stat in [CompositeStat::Mean, CompositeStat::Median, CompositeStat::Min, CompositeStat::Max] {
            let out = composite(&stack, stat).unwrap();
            for p in 0..w * h {
                let mut samples: Vec<f64> = layers.iter().filter(|(_, m)| m[p]).map(|(v, _)| v[p]).collect();
                match oracle(&mut samples, stat) {
                    Some(v) => {
                        prop_assert!(out.is_valid(p));
                        prop_assert_eq!(out.values()[p], v);
                    }
                    None => prop_assert!(!out.is_valid(p)),
                }
            }
        }
    }

    #[test]
    fn composite_ignores_layer_order((w, h, layers) in stack_strategy(), rot in 0usize..10) {
        let build = |order: &[usize]| TimeStack::new(
            order.iter().enumerate().map(|(t, &i)| layer(t, layers[i].0.clone(), layers[i].1.clone(), w, h)).collect(),
        ).unwrap();
        let n = layers.len();
        let fwd: Vec<usize> = (0..n).collect();
        let rotated: Vec<usize> = (0..n).map(|i| (i + rot) % n).rev().collect();
        for stat in [CompositeStat::Mean, CompositeStat::Median] {
            prop_assert_eq!(composite(&build(&fwd), stat).unwrap(), composite(&build(&rotated), stat).unwrap());
        }
    }

    #[test]
    fn band_combine_matches_scalar_formulas(vv in prop::collection::vec(1e-4f64..1.0, 16), vh in prop::collection::vec(1e-5f64..0.5, 16)) {
        let a = common::grid(4, 4, vv.clone(), Units::Linear);
        let b = common::grid(4, 4, vh.clone(), Units::Linear);
        let check = |combo: BandCombo, f: &dyn Fn(f64, f64) -> f64| -> RasterGrid<f64> {
            let out = band_combine(&a, &b, combo).unwrap();
            for i in 0..16 {
                assert!((out.values()[i] - f(vv[i], vh[i])).abs() <= 1e-12 * f(vv[i], vh[i]).abs().max(1.0));
            }
            out
        };
        prop_assert_eq!(check(BandCombo::Sum, &|v, h| v + h).units(), Units::Linear);
        check(BandCombo::Diff, &|v, h| v - h);
        check(BandCombo::Ratio, &|v, h| h / v);
        check(BandCombo::Rvi, &|v, h| 4.0 * h / (v + h));
    }
}

#[test]
fn all_holes_is_invalid() {
    let stack = TimeStack::new(vec![layer(0, vec![1.0; 4], vec![false; 4], 2, 2), layer(1, vec![2.0; 4], vec![true, false, false, false], 2, 2)]).unwrap();
    let out = composite(&stack, CompositeStat::Median).unwrap();
    assert_eq!(out.valid(), &[true, false, false, false]);
    assert_eq!(out.values()[0], 2.0);
}
