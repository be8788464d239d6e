//! End-to-end registration behaviour on small synthetic phantoms.

use volreg::losses::LossWeights;
use volreg::metrics::{folding_stats, tre};
use volreg::optim::{ablation_run, optimize_level, LevelConfig, LevelInputs, Toggle};
use volreg::phantom::{endpoint_error, gen_phantom_pair, PhantomPair, PhantomSpec};
use volreg::{register_multilevel, DisplacementField, LabelVolume, RegistrationConfig, RegistrationInputs};

fn small_spec(seed: u64, amplitude: f64) -> PhantomSpec {
    PhantomSpec {
        dims: [32, 32, 32],
        spacing: [3.0; 3],
        amplitude,
        sigma: 25.0,
        structures: 60,
        keypoints: 50,
        landmarks: 30,
        seed,
        ..Default::default()
    }
}

fn inputs(p: &PhantomPair) -> RegistrationInputs<'_> {
    RegistrationInputs {
        fixed: &p.fixed,
        moving: &p.moving,
        fixed_mask: Some(&p.fixed_mask),
        moving_mask: Some(&p.moving_mask),
        keypoints: Some(&p.keypoints),
    }
}

#[test]
fn single_level_recovers_small_phantom() {
    // 1.5 mm = half a voxel of motion, recovered at full resolution only.
    let p = gen_phantom_pair(&small_spec(3, 1.5)).unwrap();
    let fixed_ch = p.fixed_mask.one_hot();
    let moving_ch = p.moving_mask.one_hot();
    let domain = p.fixed_mask.foreground();
    let level_in = LevelInputs {
        fixed: &p.fixed,
        moving: &p.moving,
        masks: Some((&fixed_ch, &moving_ch)),
        keypoints: Some(&p.keypoints),
        ngf_domain: Some(&domain),
    };
    let cfg = LevelConfig { iterations: 200, step_size: 0.25, t: 0.05, delta: 1e7 };
    let (u, history) = optimize_level(&level_in, &cfg, &LossWeights::default(), 0).unwrap();
    assert!(history.last().unwrap().total <= history[0].total);
    let epe = endpoint_error(&u, &p.u_gt, Some(&domain)).unwrap();
    assert!(epe.mean < 0.5 * 3.0, "endpoint error {} mm", epe.mean);
}

#[test]
fn multilevel_reduces_landmark_error_without_folding() {
    let p = gen_phantom_pair(&small_spec(1, 6.0)).unwrap();
    let r = register_multilevel(&inputs(&p), &RegistrationConfig::default()).unwrap();
    assert_eq!(r.field.grid(), p.fixed.grid());
    assert_eq!(r.history.len(), 3);

    let zero = DisplacementField::zeros(*p.fixed.grid());
    let before = tre(&p.landmarks, &zero).unwrap().mean;
    let after = tre(&p.landmarks, &r.field).unwrap().mean;
    assert!(after < 0.5 * before, "landmark TRE {before} -> {after}");

    let fg = p.fixed_mask.foreground();
    let epe0 = endpoint_error(&zero, &p.u_gt, Some(&fg)).unwrap().mean;
    let epe = endpoint_error(&r.field, &p.u_gt, Some(&fg)).unwrap().mean;
    assert!(epe < 0.5 * epe0, "endpoint error {epe0} -> {epe}");

    let det = volreg::losses::jacobian_det_field(&r.field);
    assert!(folding_stats(&det, None).unwrap().fraction < 1e-3);

    // Prolongation keeps the progress of every level (5% slack).
    for w in r.history.windows(2) {
        assert!(
            w[1].full_resolution_distance <= 1.05 * w[0].full_resolution_distance,
            "level {} distance {} after {}",
            w[1].level,
            w[1].full_resolution_distance,
            w[0].full_resolution_distance
        );
    }
}

#[test]
fn repeated_runs_are_bit_identical() {
    let p = gen_phantom_pair(&small_spec(2, 4.0)).unwrap();
    let mut cfg = RegistrationConfig::default();
    for l in &mut cfg.levels {
        l.iterations /= 5;
    }
    let a = register_multilevel(&inputs(&p), &cfg).unwrap();
    let b = register_multilevel(&inputs(&p), &cfg).unwrap();
    assert_eq!(a.field, b.field);
    assert_eq!(a.history, b.history);
}

fn relabel(mask: &LabelVolume, perm: &[u16]) -> LabelVolume {
    let labels = mask.labels().iter().map(|&l| if l == 0 { 0 } else { perm[l as usize - 1] }).collect();
    LabelVolume::new(*mask.grid(), labels, mask.label_count() as u16).unwrap()
}

#[test]
fn consistent_relabelling_keeps_field() {
    let p = gen_phantom_pair(&small_spec(4, 4.0)).unwrap();
    let mut cfg = RegistrationConfig::default();
    for l in &mut cfg.levels {
        l.iterations /= 10;
    }
    let perm = [3, 5, 1, 2, 4];
    let (f2, m2) = (relabel(&p.fixed_mask, &perm), relabel(&p.moving_mask, &perm));
    let a = register_multilevel(&inputs(&p), &cfg).unwrap();
    let swapped = RegistrationInputs { fixed_mask: Some(&f2), moving_mask: Some(&m2), ..inputs(&p) };
    let b = register_multilevel(&swapped, &cfg).unwrap();
    assert_eq!(a.field, b.field);
}

#[test]
fn ablation_table_has_a_row_per_toggle() {
    let p = gen_phantom_pair(&small_spec(5, 3.0)).unwrap();
    let mut cfg = RegistrationConfig::default();
    for l in &mut cfg.levels {
        l.iterations = 10;
    }
    let toggles = [Toggle::NoMask, Toggle::NoVcc, Toggle::NoKeypoints, Toggle::Levels(1), Toggle::Levels(2)];
    let table = ablation_run(&inputs(&p), &cfg, &toggles, Some(&p.landmarks)).unwrap();
    assert_eq!(table.rows.len(), toggles.len() + 1);
    assert!(table.rows.iter().all(|r| r.config.total_iterations() == 30));
    let text = table.render();
    assert_eq!(text.lines().filter(|l| !l.trim().is_empty()).count(), toggles.len() + 2, "{text}");
}
