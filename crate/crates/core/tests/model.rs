mod common;

use common::*;
use nalgebra::DMatrix;
use ncmogp::data::{sites, Dataset};
use ncmogp::kernels::{cross_cov, KernelParams, Smoother};
use ncmogp::model::{
    assemble, cov_homogeneous, cov_separable, mean_homogeneous, mean_separable, Model, ModelSpec, Variant,
};

#[test]
fn homogeneous_matches_bivariate_oracle_entrywise() {
    let mut r = rng(201);
    let spec = homogeneous(3, 2, 1);
    for _ in 0..5 {
        let params = random_params(&mut r, &spec, 0.3, 1.5);
        let data = random_dataset(&mut r, &[4, 4], 1);
        let (mean, k) = assemble(&data, &spec, &params).unwrap();
        let s = sites(data.inputs());
        for (i, a) in s.iter().enumerate() {
            let kaa = cross_cov(a.output, a.output, a.x, a.x, &params).unwrap();
            assert!(relative(mean[i], homogeneous_mean_oracle(3, kaa)) < 1e-12);
            for (j, b) in s.iter().enumerate() {
                let kab = cross_cov(a.output, b.output, a.x, b.x, &params).unwrap();
                let kbb = cross_cov(b.output, b.output, b.x, b.x, &params).unwrap();
                let oracle = homogeneous_cov_oracle(3, kaa, kab, kbb);
                assert!(
                    (k[(i, j)] - oracle).abs() <= 1e-12 * oracle.abs().max(kaa.abs()),
                    "{i},{j}"
                );
            }
        }
    }
}

#[test]
fn higher_orders_match_oracle() {
    let mut r = rng(202);
    for order in 1..=5 {
        let spec = homogeneous(order, 2, 2);
        let params = random_params(&mut r, &spec, 0.3, 1.2);
        let (t, t2) = ([0.1, 0.5], [0.3, 0.2]);
        let k11 = cross_cov(0, 0, &t, &t, &params).unwrap();
        let k12 = cross_cov(0, 1, &t, &t2, &params).unwrap();
        let k22 = cross_cov(1, 1, &t2, &t2, &params).unwrap();
        let got = cov_homogeneous(0, 1, &t, &t2, order, &params).unwrap();
        assert!(relative(got, homogeneous_cov_oracle(order, k11, k12, k22)) < 1e-12);
        let m = mean_homogeneous(0, &t, order, &params).unwrap();
        assert!((m - homogeneous_mean_oracle(order, k11)).abs() <= 1e-12 * m.abs().max(1.0));
    }
}

/// `cov[f_{d,c,i}(t), f_{d',c',i'}(t')]` for the separable variant, indexing the
/// factors of both points in one list.
fn separable_oracle(
    spec: &ModelSpec,
    params: &KernelParams,
    d: usize,
    t: &[f64],
    d2: usize,
    t2: &[f64],
) -> (f64, f64, f64) {
    let order = spec.order;
    // factor list entries: (smoother index, which point)
    let mut factors: Vec<(usize, bool)> = Vec::new();
    let mut terms1 = Vec::new();
    let mut terms2 = Vec::new();
    for c in 1..=order {
        let ids: Vec<usize> = (1..=c)
            .map(|i| {
                factors.push((spec.smoother_index(d, c, i), false));
                factors.len() - 1
            })
            .collect();
        terms1.push(ids);
    }
    for c in 1..=order {
        let ids: Vec<usize> = (1..=c)
            .map(|i| {
                factors.push((spec.smoother_index(d2, c, i), true));
                factors.len() - 1
            })
            .collect();
        terms2.push(ids);
    }
    let cov = |i: usize, j: usize| {
        let (si, pi) = factors[i];
        let (sj, pj) = factors[j];
        let (xi, xj) = (if pi { t2 } else { t }, if pj { t2 } else { t });
        cross_cov(si, sj, xi, xj, params).unwrap()
    };
    let mean1: f64 = terms1.iter().map(|v| isserlis(v, &cov)).sum();
    let mean2: f64 = terms2.iter().map(|v| isserlis(v, &cov)).sum();
    let mut second = 0.0;
    for a in &terms1 {
        for b in &terms2 {
            let vars: Vec<usize> = a.iter().chain(b).copied().collect();
            second += isserlis(&vars, &cov);
        }
    }
    (mean1, mean2, second - mean1 * mean2)
}

#[test]
fn separable_matches_pairing_oracle() {
    let mut r = rng(203);
    for order in 1..=3 {
        let spec = ModelSpec::new(order, Variant::Separable, 2, 1).unwrap();
        for _ in 0..5 {
            let params = random_params(&mut r, &spec, 0.3, 1.5);
            let (t, t2) = ([uniform(&mut r, 0.0, 1.0)], [uniform(&mut r, 0.0, 1.0)]);
            let (m1, m2, c) = separable_oracle(&spec, &params, 0, &t, 1, &t2);
            let got = cov_separable(0, 1, &t, &t2, order, &params).unwrap();
            assert!(
                (got - c).abs() <= 1e-12 * c.abs().max(1.0),
                "order {order}: {got} vs {c}"
            );
            let gm1 = mean_separable(0, &t, order, &params).unwrap();
            let gm2 = mean_separable(1, &t2, order, &params).unwrap();
            assert!((gm1 - m1).abs() <= 1e-12 * m1.abs().max(1.0));
            assert!((gm2 - m2).abs() <= 1e-12 * m2.abs().max(1.0));
        }
    }
}

#[test]
fn tied_separable_equals_homogeneous() {
    let mut r = rng(204);
    for order in 1..=4 {
        let homo = homogeneous(order, 2, 1);
        let sep = ModelSpec::new(order, Variant::Separable, 2, 1).unwrap();
        let hp = random_params(&mut r, &homo, 0.4, 1.4);
        let per = sep.smoothers_per_output();
        let tied = KernelParams::new(
            (0..2)
                .flat_map(|d| std::iter::repeat_n(hp.smoothers[d].clone(), per))
                .collect(),
            hp.latent_length_scales.clone(),
            hp.noise_variances.clone(),
        )
        .unwrap();
        let data = random_dataset(&mut r, &[5, 3], 1);
        let (mh, kh) = assemble(&data, &homo, &hp).unwrap();
        let (ms, ks) = assemble(&data, &sep, &tied).unwrap();
        for i in 0..mh.len() {
            assert!((mh[i] - ms[i]).abs() <= 1e-12 * mh[i].abs().max(1.0));
            for j in 0..mh.len() {
                let scale = (kh[(i, i)] * kh[(j, j)]).sqrt();
                assert!(
                    (kh[(i, j)] - ks[(i, j)]).abs() <= 1e-12 * scale,
                    "order {order} ({i},{j})"
                );
            }
        }
    }
}

#[test]
fn order_one_is_the_convolved_gp() {
    let mut r = rng(205);
    let spec = homogeneous(1, 3, 2);
    let params = random_params(&mut r, &spec, 0.5, 2.0);
    let data = random_dataset(&mut r, &[3, 4, 2], 2);
    let (mean, k) = assemble(&data, &spec, &params).unwrap();
    assert!(mean.iter().all(|m| *m == 0.0));
    let s = sites(data.inputs());
    for (i, a) in s.iter().enumerate() {
        for (j, b) in s.iter().enumerate() {
            assert_eq!(k[(i, j)], cross_cov(a.output, b.output, a.x, b.x, &params).unwrap());
        }
    }
}

#[test]
fn output_permutation_conjugates_the_covariance() {
    let mut r = rng(206);
    let spec = homogeneous(3, 3, 1);
    let params = random_params(&mut r, &spec, 0.4, 1.2);
    let data = random_dataset(&mut r, &[2, 3, 4], 1);
    let perm = [2, 0, 1];
    let permuted = data.permute_outputs(&perm).unwrap();
    let pparams = KernelParams::new(
        perm.iter().map(|&d| params.smoothers[d].clone()).collect(),
        params.latent_length_scales.clone(),
        perm.iter().map(|&d| params.noise_variances[d]).collect(),
    )
    .unwrap();
    let (m, k) = assemble(&data, &spec, &params).unwrap();
    let (pm, pk) = assemble(&permuted, &spec, &pparams).unwrap();
    // stacked position of (output, index) in each layout
    let offsets = |counts: Vec<usize>| -> Vec<usize> {
        counts
            .iter()
            .scan(0, |acc, n| {
                let o = *acc;
                *acc += n;
                Some(o)
            })
            .collect()
    };
    let (off, poff) = (offsets(data.counts()), offsets(permuted.counts()));
    let mut map = vec![0; m.len()];
    for (new_d, &old_d) in perm.iter().enumerate() {
        for i in 0..data.counts()[old_d] {
            map[poff[new_d] + i] = off[old_d] + i;
        }
    }
    let expected = DMatrix::from_fn(m.len(), m.len(), |i, j| k[(map[i], map[j])]);
    for i in 0..m.len() {
        for j in 0..m.len() {
            let scale = (expected[(i, i)] * expected[(j, j)]).sqrt();
            assert!((pk[(i, j)] - expected[(i, j)]).abs() <= 1e-12 * scale);
        }
    }
    for i in 0..m.len() {
        assert_eq!(pm[i], m[map[i]]);
    }
}

#[test]
fn dgp_and_icm_reject_higher_orders() {
    assert!(ModelSpec::new(2, Variant::Icm, 2, 1).is_err());
    assert!(ModelSpec::new(3, Variant::Dgp, 2, 1).is_err());
}

#[test]
fn model_monte_carlo_low_order() {
    let mut r = rng(207);
    let params = KernelParams::new(
        vec![Smoother::new(0.9, vec![0.3]), Smoother::new(-0.7, vec![0.5])],
        vec![0.4],
        vec![0.1; 2],
    )
    .unwrap();
    let (t, t2) = ([0.2], [0.5]);
    let k11 = cross_cov(0, 0, &t, &t, &params).unwrap();
    let k12 = cross_cov(0, 1, &t, &t2, &params).unwrap();
    let k22 = cross_cov(1, 1, &t2, &t2, &params).unwrap();
    let cov = DMatrix::from_row_slice(2, 2, &[k11, k12, k12, k22]);
    let model = Model::new(homogeneous(2, 2, 1)).unwrap();
    let m1 = model.mean(&params, 0, &t);
    let m2 = model.mean(&params, 1, &t2);
    let y = |v: f64| v + v * v;
    let (est, se) = monte_carlo(&mut r, &cov, 200_000, &|x| (y(x[0]) - m1) * (y(x[1]) - m2));
    let exact = model.cov(&params, 0, &t, 1, &t2);
    assert!((est - exact).abs() < 4.0 * se, "{est} ± {se} vs {exact}");
}

#[test]
fn heterotopic_inputs_assemble() {
    let data = Dataset::new(1, vec![vec![vec![0.0]], vec![]], vec![vec![1.0], vec![]]).unwrap();
    let spec = homogeneous(2, 2, 1);
    let (m, k) = assemble(&data, &spec, &spec.template_params()).unwrap();
    assert_eq!((m.len(), k.nrows()), (1, 1));
}
