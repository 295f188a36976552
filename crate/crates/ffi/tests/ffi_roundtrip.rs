//! Exercise the C surface from Rust: handle lifecycle, prediction and attack
//! generation against the underlying library, and the error paths.

use std::ffi::{CStr, CString};
use std::ptr;

use advgame::checkpoint;
use advgame::losses::Target;
use advgame::models::{build_classification_pair, LpConstraint, LpNorm};
use advgame_ffi::*;

fn save_pair(dir: &std::path::Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let constraint = LpConstraint::new(LpNorm::Inf, 0.2).unwrap();
    let (defense, attack) = build_classification_pair(2, 3, constraint, 12).unwrap();
    let manifest = checkpoint::manifest_for(defense.task(), Some(constraint), None, 12);
    let dpath = dir.join("defense.json");
    let apath = dir.join("attack.json");
    checkpoint::save_defense(&dpath, &defense, manifest.clone()).unwrap();
    checkpoint::save_attack(&apath, &attack, manifest).unwrap();
    (dpath, apath)
}

#[test]
fn version_is_a_nul_terminated_string() {
    let version = unsafe { CStr::from_ptr(advgame_version()) };
    assert_eq!(version.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn load_predict_attack_and_free() {
    let dir = tempfile::tempdir().unwrap();
    let (dpath, apath) = save_pair(dir.path());

    let dpath_c = CString::new(dpath.to_str().unwrap()).unwrap();
    let apath_c = CString::new(apath.to_str().unwrap()).unwrap();

    unsafe {
        let mut defense: *mut AdvDefense = ptr::null_mut();
        assert_eq!(advgame_defense_load(dpath_c.as_ptr(), &mut defense), AdvStatus::Ok);
        assert_eq!(advgame_defense_input_dim(defense), 2);
        assert_eq!(advgame_defense_output_dim(defense), 3);

        let x = [0.4f64, 0.6];
        let mut logits = [0.0f64; 3];
        assert_eq!(
            advgame_defense_predict(defense, x.as_ptr(), 2, logits.as_mut_ptr(), 3),
            AdvStatus::Ok
        );
        // Cross-check against the library directly.
        let (reference, _) = checkpoint::load_defense(&dpath).unwrap();
        let expected = reference.output(&x).unwrap();
        assert_eq!(logits.to_vec(), expected);

        let mut class = usize::MAX;
        assert_eq!(
            advgame_defense_predict_class(defense, x.as_ptr(), 2, &mut class),
            AdvStatus::Ok
        );
        assert!(class < 3);

        let mut attack: *mut AdvAttack = ptr::null_mut();
        assert_eq!(advgame_attack_load(apath_c.as_ptr(), &mut attack), AdvStatus::Ok);
        assert_eq!(advgame_attack_input_dim(attack), 2);
        assert_eq!(advgame_attack_classes(attack), 3);

        let mut lambda = [0.0f64; 2];
        assert_eq!(
            advgame_attack_perturbation(attack, x.as_ptr(), 2, 1, lambda.as_mut_ptr(), 2),
            AdvStatus::Ok
        );
        let (reference_attack, _) = checkpoint::load_attack(&apath).unwrap();
        let expected = reference_attack.forward(&x, &Target::Class(1)).unwrap();
        assert_eq!(lambda.to_vec(), expected);
        assert!(lambda.iter().all(|v| v.abs() <= 0.2 * (1.0 + 1e-9)));

        let mut adv = [0.0f64; 2];
        assert_eq!(
            advgame_adversarial_example(attack, x.as_ptr(), 2, 1, false, adv.as_mut_ptr(), 2),
            AdvStatus::Ok
        );
        assert_eq!(adv[0], x[0] + lambda[0]);
        assert_eq!(adv[1], x[1] + lambda[1]);

        let mut fgsm_out = [0.0f64; 2];
        assert_eq!(
            advgame_fgsm(defense, x.as_ptr(), 2, 1, 0.0, 0.2, fgsm_out.as_mut_ptr(), 2),
            AdvStatus::Ok
        );
        assert!((fgsm_out[0] - x[0]).abs() <= 0.2 && (fgsm_out[1] - x[1]).abs() <= 0.2);

        let mut pgd_out = [0.0f64; 2];
        assert_eq!(
            advgame_pgd(
                defense,
                x.as_ptr(),
                2,
                1,
                0.0,
                AdvNorm::LInf,
                0.2,
                0.05,
                10,
                2,
                false,
                7,
                pgd_out.as_mut_ptr(),
                2
            ),
            AdvStatus::Ok
        );
        assert!((pgd_out[0] - x[0]).abs() <= 0.2 + 1e-9);

        advgame_attack_free(attack);
        advgame_defense_free(defense);
    }
}

#[test]
fn error_paths_set_codes_and_messages() {
    unsafe {
        let mut defense: *mut AdvDefense = ptr::null_mut();
        // Missing file: IO error with a message.
        let missing = CString::new("/definitely/not/here.json").unwrap();
        assert_eq!(
            advgame_defense_load(missing.as_ptr(), &mut defense),
            AdvStatus::Io
        );
        let msg = CStr::from_ptr(advgame_last_error()).to_str().unwrap();
        assert!(!msg.is_empty());

        // Null pointers.
        assert_eq!(
            advgame_defense_load(ptr::null(), &mut defense),
            AdvStatus::NullPointer
        );
        assert_eq!(advgame_defense_input_dim(ptr::null()), 0);
        advgame_defense_free(ptr::null_mut()); // must be a no-op

        // Wrong dimensions and bad labels.
        let dir = tempfile::tempdir().unwrap();
        let (dpath, apath) = save_pair(dir.path());
        let dpath_c = CString::new(dpath.to_str().unwrap()).unwrap();
        let apath_c = CString::new(apath.to_str().unwrap()).unwrap();
        assert_eq!(advgame_defense_load(dpath_c.as_ptr(), &mut defense), AdvStatus::Ok);
        let x = [0.5f64, 0.5];
        let mut out = [0.0f64; 2];
        assert_eq!(
            advgame_defense_predict(defense, x.as_ptr(), 2, out.as_mut_ptr(), 2),
            AdvStatus::InvalidArgument
        );

        let mut attack: *mut AdvAttack = ptr::null_mut();
        assert_eq!(advgame_attack_load(apath_c.as_ptr(), &mut attack), AdvStatus::Ok);
        assert_eq!(
            advgame_attack_perturbation(attack, x.as_ptr(), 2, 9, out.as_mut_ptr(), 2),
            AdvStatus::InvalidArgument
        );
        let msg = CStr::from_ptr(advgame_last_error()).to_str().unwrap();
        assert!(msg.contains('9'), "{msg}");

        // Loading the wrong checkpoint kind is a parse error.
        let mut wrong: *mut AdvDefense = ptr::null_mut();
        assert_eq!(
            advgame_defense_load(apath_c.as_ptr(), &mut wrong),
            AdvStatus::Parse
        );

        advgame_attack_free(attack);
        advgame_defense_free(defense);
    }
}
