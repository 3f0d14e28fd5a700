use std::ffi::{CStr, CString};
use std::ptr;

use qaprobe_ffi::*;

fn last_error() -> String {
    let p = qp_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn small_dataset(mode: &str) -> *mut QpDataset {
    let cfg = CString::new(format!("n_train = 120\nn_test = 60\nrepetition = 10\nmodes = [\"{mode}\"]\n")).unwrap();
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { qp_dataset_generate(cfg.as_ptr(), &mut d) }, QpStatus::Ok);
    d
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(qp_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn distance_and_pearson() {
    let (u, v) = ([0.0, 0.0], [3.0, 4.0]);
    let mut d = 0.0;
    assert_eq!(unsafe { qp_distance(u.as_ptr(), v.as_ptr(), 2, QpMetric::Euclidean as i32, &mut d) }, QpStatus::Ok);
    assert_eq!(d, 5.0);
    assert_eq!(unsafe { qp_distance(u.as_ptr(), v.as_ptr(), 2, 7, &mut d) }, QpStatus::InvalidArgument);
    assert!(last_error().contains("metric"));

    let x = [1.0, 2.0, 3.0, 4.0];
    let y = [8.0, 6.0, 4.0, 2.0];
    let mut r = 0.0;
    assert_eq!(unsafe { qp_pearson(x.as_ptr(), y.as_ptr(), 4, &mut r) }, QpStatus::Ok);
    assert!((r + 1.0).abs() < 1e-12);
    let flat = [1.0; 4];
    assert_eq!(unsafe { qp_pearson(x.as_ptr(), flat.as_ptr(), 4, &mut r) }, QpStatus::Analysis);
}

#[test]
fn knn_orders_by_distance_then_index() {
    let train = [3.0, 0.0, 1.0, 0.0, 1.0, 0.0, 2.0, 0.0];
    let q = [0.0, 0.0];
    let mut idx = [0usize; 3];
    let mut dist = [0.0; 3];
    let mut found = 0;
    let st = unsafe {
        qp_knn(train.as_ptr(), 4, 2, q.as_ptr(), 3, QpMetric::Euclidean as i32, idx.as_mut_ptr(), dist.as_mut_ptr(), &mut found)
    };
    assert_eq!(st, QpStatus::Ok);
    assert_eq!(found, 3);
    assert_eq!(idx, [1, 2, 3]);
    assert_eq!(dist, [1.0, 1.0, 2.0]);
}

#[test]
fn null_arguments_are_reported() {
    let mut d = 0.0;
    let v = [1.0];
    assert_eq!(unsafe { qp_distance(ptr::null(), v.as_ptr(), 1, 0, &mut d) }, QpStatus::NullPointer);
    assert!(last_error().contains("u is null"));
    assert_eq!(unsafe { qp_dataset_load(ptr::null(), ptr::null_mut()) }, QpStatus::NullPointer);
    unsafe {
        qp_dataset_free(ptr::null_mut());
        qp_model_free(ptr::null_mut());
        qp_string_free(ptr::null_mut());
    }
}

#[test]
fn success_clears_last_error() {
    let mut d = 0.0;
    let v = [1.0];
    unsafe { qp_distance(ptr::null(), v.as_ptr(), 1, 0, &mut d) };
    assert!(!qp_last_error().is_null());
    unsafe { qp_distance(v.as_ptr(), v.as_ptr(), 1, 0, &mut d) };
    assert!(qp_last_error().is_null());
}

#[test]
fn missing_dataset_dir_is_a_data_error() {
    let dir = CString::new("/nonexistent/qaprobe").unwrap();
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { qp_dataset_load(dir.as_ptr(), &mut d) }, QpStatus::Data);
    assert!(d.is_null());
}

#[test]
fn train_predict_and_round_trip_through_disk() {
    let d = small_dataset("question_dominant");
    let (mut n_train, mut n_test) = (0, 0);
    assert_eq!(unsafe { qp_dataset_counts(d, &mut n_train, &mut n_test) }, QpStatus::Ok);
    assert_eq!((n_train, n_test), (120, 60));

    let mut m = ptr::null_mut();
    assert_eq!(unsafe { qp_model_train(d, 0, 50, 0.1, &mut m) }, QpStatus::Ok);
    let mut dim = 0;
    assert_eq!(unsafe { qp_model_embedding_dim(m, &mut dim) }, QpStatus::Ok);

    let id = CString::new("test-00001").unwrap();
    let probe = CString::new("full").unwrap();
    let mut answer = ptr::null_mut();
    let mut emb = vec![0.0; dim];
    let mut len = 0;
    let st = unsafe { qp_model_predict(m, d, id.as_ptr(), probe.as_ptr(), &mut answer, emb.as_mut_ptr(), dim, &mut len) };
    assert_eq!(st, QpStatus::Ok);
    assert_eq!(len, dim);
    let first = unsafe { CStr::from_ptr(answer) }.to_string_lossy().into_owned();
    unsafe { qp_string_free(answer) };

    let mut short = [0.0; 1];
    let st = unsafe { qp_model_predict(m, d, id.as_ptr(), probe.as_ptr(), &mut answer, short.as_mut_ptr(), 1, &mut len) };
    assert_eq!(st, QpStatus::BufferTooSmall);
    assert_eq!(len, dim);

    let bad = CString::new("prefix:200").unwrap();
    let st = unsafe { qp_model_predict(m, d, id.as_ptr(), bad.as_ptr(), &mut answer, ptr::null_mut(), 0, ptr::null_mut()) };
    assert_eq!(st, QpStatus::InvalidArgument);

    let tmp = tempfile::tempdir().unwrap();
    let dir = CString::new(tmp.path().join("data").to_str().unwrap()).unwrap();
    let model_path = CString::new(tmp.path().join("model.json").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { qp_dataset_write(d, dir.as_ptr()) }, QpStatus::Ok);
    assert_eq!(unsafe { qp_model_save(m, model_path.as_ptr()) }, QpStatus::Ok);
    let (mut d2, mut m2) = (ptr::null_mut(), ptr::null_mut());
    assert_eq!(unsafe { qp_dataset_load(dir.as_ptr(), &mut d2) }, QpStatus::Ok);
    assert_eq!(unsafe { qp_model_load(model_path.as_ptr(), &mut m2) }, QpStatus::Ok);
    let st = unsafe { qp_model_predict(m2, d2, id.as_ptr(), probe.as_ptr(), &mut answer, ptr::null_mut(), 0, ptr::null_mut()) };
    assert_eq!(st, QpStatus::Ok);
    assert_eq!(unsafe { CStr::from_ptr(answer) }.to_str().unwrap(), first);
    unsafe {
        qp_string_free(answer);
        qp_model_free(m);
        qp_model_free(m2);
        qp_dataset_free(d);
        qp_dataset_free(d2);
    }
}

#[test]
fn analyze_returns_report_json() {
    let d = small_dataset("first_word_keyed");
    let which = CString::new("question").unwrap();
    let cfg = CString::new("adapter = \"oracle\"\n").unwrap();
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { qp_analyze(d, ptr::null(), which.as_ptr(), cfg.as_ptr(), &mut json) }, QpStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    assert!(text.contains("\"report\": \"question\""), "{text}");
    unsafe { qp_string_free(json) };

    let cfg = CString::new("adapter = \"const:yes\"\n").unwrap();
    let which = CString::new("novelty").unwrap();
    assert_eq!(unsafe { qp_analyze(d, ptr::null(), which.as_ptr(), cfg.as_ptr(), &mut json) }, QpStatus::Capability);
    assert!(last_error().contains("embedding"));

    let which = CString::new("everything").unwrap();
    assert_eq!(unsafe { qp_analyze(d, ptr::null(), which.as_ptr(), ptr::null(), &mut json) }, QpStatus::InvalidArgument);
    unsafe { qp_dataset_free(d) };
}

#[test]
fn header_is_current_and_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/qaprobe.h")).unwrap();
    for name in [
        "qp_version",
        "qp_last_error",
        "qp_string_free",
        "qp_dataset_load",
        "qp_dataset_generate",
        "qp_model_train",
        "qp_model_predict",
        "qp_analyze",
        "qp_distance",
        "qp_knn",
        "qp_pearson",
        "QP_STATUS_OK",
        "QP_METRIC_COSINE",
        "typedef struct QpDataset QpDataset",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include/qaprobe.h"))
        .status()
    else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(status.success());
}
