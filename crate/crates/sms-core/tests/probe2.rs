use sms_core::data::{partition_users, split, synth_digits};
use sms_core::joint::{train_joint, JointWeights};
use sms_core::nn::SgdConfig;
use sms_core::seeding::{embed_seed, generate_seed, seed_dataset, Placement, SeedMask};
use sms_core::verifier::*;
use sms_core::Tensor;
use std::time::Instant;

#[test]
#[ignore]
fn probe_joint_hparams() {
    let side = 12;
    let ds = synth_digits(250, side, 10, 1001);
    let (train, test) = split(&ds, 0.8, 42).unwrap();
    let parts = partition_users(&train, 5, 7);
    let (ssr, ser, n_active) = (0.006, 0.6, 16);

    let mut seeded_train = train.clone();
    let mut user_seeds = Vec::new();
    for part in &parts {
        let seed = generate_seed(part.user_id, n_active, side, 555, Placement::BottomRight).unwrap();
        let mask = SeedMask::on_support(&seed, ser).unwrap();
        let view = seed_dataset(&seeded_train, part, &seed, &mask, ssr, 900 + part.user_id as u64).unwrap();
        seeded_train = view.dataset.clone();
        user_seeds.push(seed);
    }

    // Verifier depends only on raw pairs: train once, reuse.
    let user = &parts[0];
    let seed0 = &user_seeds[0];
    let mask0 = SeedMask::on_support(seed0, ser).unwrap();
    let d = train.dim();
    let k = user.indices.len();
    let (mut clean, mut seeded) = (Vec::new(), Vec::new());
    for &i in &user.indices {
        let row = train.images().row_tensor(i);
        clean.extend_from_slice(row.data());
        seeded.extend_from_slice(embed_seed(&row, seed0, &mask0).unwrap().data());
    }
    let clean = Tensor::new(vec![k, d], clean).unwrap();
    let seeded = Tensor::new(vec![k, d], seeded).unwrap();
    let dv = build_verification_set(&clean, &seeded, side).unwrap();
    let verifier = train_verifier(&dv, &default_verifier_config(31), 0).unwrap();

    for (eta, epochs, ap, as_) in [
        (0.05, 50, 1.0, 1.0),
        (0.15, 50, 1.0, 1.0),
        (0.15, 100, 1.0, 1.0),
        (0.30, 100, 1.0, 1.0),
        (0.05, 50, 1.0, 4.0),
        (0.15, 100, 1.0, 4.0),
    ] {
        let cfg = SgdConfig::new(eta, 16, epochs, 2024).unwrap();
        let w = JointWeights::new(ap, as_).unwrap();
        let t = Instant::now();
        match train_joint(&seeded_train, Some(&test), &cfg, &w) {
            Ok((model, report)) => {
                let verif = verifiability(&verifier, &model, &seeded).unwrap();
                println!(
                    "eta={:.2} E={} a=({},{}): acc={:.4} self={:.4} verif_pre={:.4}  [{:?}]",
                    eta, epochs, ap, as_,
                    report.test_accuracy.unwrap(),
                    report.self_loss.last().unwrap(),
                    verif,
                    t.elapsed()
                );
            }
            Err(e) => println!("eta={:.2} E={} a=({},{}): FAILED {}", eta, epochs, ap, as_, e),
        }
    }
}
