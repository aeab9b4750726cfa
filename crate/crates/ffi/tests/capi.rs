use std::ffi::{CStr, CString};
use std::ptr;

use bbvi_ffi::*;

fn last_error() -> String {
    let p = bbvi_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(bbvi_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn config_parse_set_and_errors() {
    unsafe {
        let mut cfg = ptr::null_mut();
        let doc = CString::new("dim=4\nxi=0.2\n").unwrap();
        assert_eq!(bbvi_config_parse(doc.as_ptr(), &mut cfg), BbviStatus::Ok);
        assert!(bbvi_last_error_message().is_null());

        let k = CString::new("rho").unwrap();
        let v = CString::new("0.25").unwrap();
        assert_eq!(bbvi_config_set(cfg, k.as_ptr(), v.as_ptr()), BbviStatus::Ok);
        let bad = CString::new("nonsense").unwrap();
        assert_eq!(bbvi_config_set(cfg, bad.as_ptr(), v.as_ptr()), BbviStatus::Config);
        assert!(last_error().contains("nonsense"));

        let mut needed = 0usize;
        assert_eq!(
            bbvi_config_to_string(cfg, ptr::null_mut(), 0, &mut needed),
            BbviStatus::BufferTooSmall
        );
        let mut buf = vec![0 as std::ffi::c_char; needed];
        assert_eq!(bbvi_config_to_string(cfg, buf.as_mut_ptr(), needed, &mut needed), BbviStatus::Ok);
        let text = CStr::from_ptr(buf.as_ptr()).to_str().unwrap();
        assert!(text.contains("rho=0.25\n"));
        assert!(text.contains("xi=0.2\n"));
        bbvi_config_free(cfg);

        let doc = CString::new("rho=1.5").unwrap();
        let mut cfg = ptr::null_mut();
        assert_eq!(bbvi_config_parse(doc.as_ptr(), &mut cfg), BbviStatus::Config);
        assert!(cfg.is_null());
        assert!(last_error().contains("rho"));
        assert_eq!(bbvi_config_parse(ptr::null(), &mut cfg), BbviStatus::NullPointer);
    }
}

#[test]
fn targets_and_skl() {
    unsafe {
        let mut t = ptr::null_mut();
        assert_eq!(bbvi_target_gaussian(1, 3, 0.0, &mut t), BbviStatus::Ok);
        assert_eq!(bbvi_target_dim(t), 3);
        let theta = [0.0, 0.0, 3.0];
        let mut lp = 0.0;
        let mut g = [0.0; 3];
        assert_eq!(bbvi_target_log_density(t, theta.as_ptr(), 3, &mut lp, g.as_mut_ptr()), BbviStatus::Ok);
        assert!((lp + 1.5).abs() < 1e-12);
        assert!((g[2] + 1.0).abs() < 1e-12);
        assert_eq!(
            bbvi_target_log_density(t, theta.as_ptr(), 2, &mut lp, ptr::null_mut()),
            BbviStatus::InvalidArgument
        );
        bbvi_target_free(t);

        assert_eq!(bbvi_target_gaussian(9, 3, 0.0, &mut t), BbviStatus::InvalidArgument);
        assert_eq!(bbvi_target_gaussian(2, 3, 1.5, &mut t), BbviStatus::InvalidArgument);

        let x = [1.0, 0.5, -0.3, 2.0, 0.1, -1.0];
        let y = [1.0, 0.0, 1.0];
        assert_eq!(bbvi_target_logistic(x.as_ptr(), 3, 2, y.as_ptr(), 1.0, &mut t), BbviStatus::Ok);
        assert_eq!(bbvi_target_dim(t), 2);
        bbvi_target_free(t);

        let a = [0.0, 0.0];
        let b = [1.0, 1.0];
        let mut s = 0.0;
        assert_eq!(bbvi_skl(0, a.as_ptr(), b.as_ptr(), 2, &mut s), BbviStatus::Ok);
        // Direct form: KL(p||q) = ln(sq/sp) + (sp^2 + dm^2)/(2 sq^2) - 1/2.
        let kl = |mp: f64, sp: f64, mq: f64, sq: f64| (sq / sp).ln() + (sp * sp + (mp - mq).powi(2)) / (2.0 * sq * sq) - 0.5;
        let e = 1f64.exp();
        let want = kl(0.0, 1.0, 1.0, e) + kl(1.0, e, 0.0, 1.0);
        assert!((s - want).abs() < 1e-12, "{s} vs {want}");
        assert_eq!(bbvi_skl(0, a.as_ptr(), b.as_ptr(), 3, &mut s), BbviStatus::InvalidArgument);
    }
}

#[test]
fn run_returns_result_and_is_deterministic() {
    unsafe {
        let doc = CString::new("w_min=60\nseed=5\n").unwrap();
        let mut cfg = ptr::null_mut();
        assert_eq!(bbvi_config_parse(doc.as_ptr(), &mut cfg), BbviStatus::Ok);
        let mut t = ptr::null_mut();
        assert_eq!(bbvi_target_gaussian(0, 4, 0.0, &mut t), BbviStatus::Ok);

        let mut traces = Vec::new();
        for _ in 0..2 {
            let mut res = ptr::null_mut();
            let st = bbvi_run(cfg, t, &mut res);
            assert!(matches!(st, BbviStatus::Ok | BbviStatus::NotConverged), "{st:?}");
            assert!(!res.is_null());
            let n = bbvi_result_num_params(res);
            assert_eq!(n, 8);
            let mut p = vec![0.0; n];
            assert_eq!(bbvi_result_params(res, p.as_mut_ptr(), n), BbviStatus::Ok);
            assert_eq!(bbvi_result_params(res, p.as_mut_ptr(), 3), BbviStatus::BufferTooSmall);
            assert!(bbvi_result_terminal_step(res) > 0);
            let reason = CStr::from_ptr(bbvi_result_reason(res)).to_str().unwrap().to_owned();
            assert_eq!(bbvi_result_success(res), st == BbviStatus::Ok, "{reason}");
            traces.push(CStr::from_ptr(bbvi_result_trace(res)).to_bytes().to_vec());
            bbvi_result_free(res);
        }
        assert_eq!(traces[0], traces[1]);
        assert!(!traces[0].is_empty());

        let mut res = ptr::null_mut();
        assert_eq!(bbvi_run(ptr::null(), t, &mut res), BbviStatus::NullPointer);
        bbvi_target_free(t);
        bbvi_config_free(cfg);
    }
}

#[test]
fn free_functions_accept_null() {
    unsafe {
        bbvi_config_free(ptr::null_mut());
        bbvi_target_free(ptr::null_mut());
        bbvi_result_free(ptr::null_mut());
        assert_eq!(bbvi_target_dim(ptr::null()), 0);
        assert_eq!(bbvi_result_num_params(ptr::null()), 0);
    }
}

#[test]
fn header_declares_api_and_compiles_as_c() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let header = std::fs::read_to_string(dir.join("bbvi.h")).unwrap();
    for f in [
        "bbvi_config_parse",
        "bbvi_config_set",
        "bbvi_target_gaussian",
        "bbvi_target_logistic",
        "bbvi_skl",
        "bbvi_run",
        "bbvi_result_params",
        "bbvi_last_error_message",
        "typedef struct BbviConfig BbviConfig;",
    ] {
        assert!(header.contains(f), "missing {f}");
    }
    let src = std::env::temp_dir().join(format!("bbvi_header_check_{}.c", std::process::id()));
    std::fs::write(&src, "#include \"bbvi.h\"\nint main(void) { return bbvi_version() == 0; }\n").unwrap();
    match std::process::Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&dir)
        .arg(&src)
        .output()
    {
        Ok(o) => assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr)),
        Err(e) => eprintln!("no C compiler, header syntax not checked: {e}"),
    }
    let _ = std::fs::remove_file(src);
}
