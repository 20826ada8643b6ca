use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use medaug::classifier::{ClassifierFactory, ClfConfig, ClfTrainConfig};
use medaug::corpus::{build_vocab, make_split, synth_benchmark, SplitRatios, SynthBenchSpec};
use medaug::genlm::{lm_finetune, GenConfig, GeneratorModel, LmTrainConfig};
use medaug_ffi::*;

fn last_error() -> String {
    let p = medaug_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

#[test]
fn metrics_match_core() {
    let scores = [0.9, 0.8, 0.8, 0.3, 0.1, 0.7];
    let labels = [1u8, 1, 0, 0, 0, 1];
    let sp = medaug::metrics::ScoredPredictions::new(scores.to_vec(), labels.to_vec()).unwrap();
    let mut out = f64::NAN;
    unsafe {
        assert_eq!(medaug_auroc(scores.as_ptr(), labels.as_ptr(), 6, &mut out), MedaugStatus::Ok);
        assert_eq!(out, medaug::metrics::auroc(&sp).unwrap());
        assert_eq!(medaug_auprc(scores.as_ptr(), labels.as_ptr(), 6, &mut out), MedaugStatus::Ok);
        assert_eq!(out, medaug::metrics::auprc(&sp).unwrap());
        assert_eq!(medaug_rp80(scores.as_ptr(), labels.as_ptr(), 6, &mut out), MedaugStatus::Ok);
        assert_eq!(out, medaug::metrics::rp80(&sp).unwrap());
    }
}

#[test]
fn errors_set_status_and_message() {
    let mut out = 0.0;
    unsafe {
        assert_eq!(medaug_auroc(ptr::null(), ptr::null(), 0, &mut out), MedaugStatus::NullPointer);
        assert!(last_error().contains("null"));
        let only_pos = [1u8, 1];
        let s = [0.2, 0.4];
        assert_eq!(medaug_auroc(s.as_ptr(), only_pos.as_ptr(), 2, &mut out), MedaugStatus::InvalidArgument);

        let mut g = ptr::null_mut();
        let missing = CString::new("/nonexistent/model.ckpt").unwrap();
        assert_eq!(medaug_generator_load(missing.as_ptr(), &mut g), MedaugStatus::Io);
        assert!(g.is_null());
        assert!(!last_error().is_empty());

        let bad = [0xffu8, 0xfe, 0];
        let mut c = ptr::null_mut();
        assert_eq!(medaug_classifier_load(bad.as_ptr().cast(), &mut c), MedaugStatus::InvalidUtf8);

        medaug_generator_free(ptr::null_mut());
        medaug_classifier_free(ptr::null_mut());
        medaug_string_free(ptr::null_mut());
    }
    let v = unsafe { CStr::from_ptr(medaug_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn handles_round_trip_checkpoints() {
    let spec = SynthBenchSpec {
        num_docs: 300,
        positive_fraction: 0.3,
        ..Default::default()
    };
    let split = make_split(&synth_benchmark(&spec).unwrap(), SplitRatios::default(), 0).unwrap();
    let vocab = build_vocab(&split.train, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let factory = ClassifierFactory::new(vocab.clone(), ClfConfig::default()).unwrap();
    let (clf, _) = factory.train(&split.train, &ClfTrainConfig::default()).unwrap();
    clf.save(dir.path().join("clf.ckpt")).unwrap();

    let cfg = GenConfig {
        d_model: 16,
        heads: 2,
        layers: 1,
        context: 32,
    };
    let mut gen = GeneratorModel::new(vocab, cfg, 0).unwrap();
    lm_finetune(&mut gen, &split.train, true, &LmTrainConfig { epochs: 1, ..Default::default() }).unwrap();
    gen.save(dir.path().join("lm.ckpt")).unwrap();

    unsafe {
        let mut c = ptr::null_mut();
        let path = cstr(&dir.path().join("clf.ckpt"));
        assert_eq!(medaug_classifier_load(path.as_ptr(), &mut c), MedaugStatus::Ok);
        let doc = &split.test[0];
        let text = CString::new(doc.text.as_str()).unwrap();
        let mut p = f64::NAN;
        assert_eq!(medaug_classifier_predict(c, text.as_ptr(), &mut p), MedaugStatus::Ok);
        assert_eq!(p, clf.predict_proba(doc)[1]);
        medaug_classifier_free(c);

        let mut g = ptr::null_mut();
        let path = cstr(&dir.path().join("lm.ckpt"));
        assert_eq!(medaug_generator_load(path.as_ptr(), &mut g), MedaugStatus::Ok);
        let sample = |seed: u64| {
            let mut s = ptr::null_mut();
            let ctx = CString::new("").unwrap();
            assert_eq!(medaug_generator_sample(g, 1, ctx.as_ptr(), 1.0, 40, 24, seed, &mut s), MedaugStatus::Ok);
            let text = CStr::from_ptr(s).to_str().unwrap().to_owned();
            medaug_string_free(s);
            text
        };
        assert_eq!(sample(7), sample(7));
        let mut s = ptr::null_mut();
        assert_eq!(
            medaug_generator_sample(g, 2, ptr::null(), 1.0, 40, 24, 0, &mut s),
            MedaugStatus::InvalidArgument
        );
        assert!(s.is_null());
        assert!(last_error().contains("label"));
        medaug_generator_free(g);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/medaug.h")).unwrap();
    for sym in [
        "MEDAUG_STATUS_OK",
        "typedef struct MedaugGenerator MedaugGenerator",
        "typedef struct MedaugClassifier MedaugClassifier",
        "medaug_last_error",
        "medaug_generator_load",
        "medaug_generator_sample",
        "medaug_classifier_predict",
        "medaug_auroc",
        "medaug_string_free",
    ] {
        assert!(header.contains(sym), "header lacks {sym}");
    }
}

#[test]
fn header_compiles_as_c() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"medaug.h\"\nint main(void) { double a; unsigned char l[2] = {0, 1}; double s[2] = {0.1, 0.9};\n\
         return medaug_auroc(s, l, 2, &a) == MEDAUG_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let Ok(out) = std::process::Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .output()
    else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
