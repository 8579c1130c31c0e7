use super::*;

fn options() -> KryrecOptions {
    let mut opts = KryrecOptions::defaults();

    opts.tol = 1e-9;
    opts.max_matvecs = 50_000;
    opts.restart_m = 10;
    opts
}

#[test]
fn poisson_gmres_solve_through_the_abi() {
    unsafe {
        let mut matrix: *mut KryrecMatrix = std::ptr::null_mut();
        let st = kryrec_matrix_poisson(12, 12, 1, 0, &mut matrix);
        assert_eq!(st, KryrecStatus::KryrecOk);
        let n = kryrec_matrix_n(matrix);
        assert_eq!(n, 144);

        let b = vec![1.0f64; n as usize];
        let mut x = vec![0.0f64; n as usize];
        let mut report: *mut KryrecReport = std::ptr::null_mut();
        let opts = options();
        let st = kryrec_solve_gmres(matrix, b.as_ptr(), n, &opts, x.as_mut_ptr(), &mut report);
        assert_eq!(st, KryrecStatus::KryrecOk);
        assert_eq!(kryrec_report_status(report), KryrecSolveStatus::KryrecConverged);
        assert!(kryrec_report_matvecs(report) > 0);
        assert_eq!(kryrec_report_storage_nvectors(report), 10 + 1 + 4);

        // residual of the returned solution against the raw matrix
        let mut ax = vec![0.0f64; n as usize];
        assert_eq!(
            kryrec_matrix_matvec(matrix, x.as_ptr(), ax.as_mut_ptr(), n),
            KryrecStatus::KryrecOk
        );
        let res: f64 = b
            .iter()
            .zip(&ax)
            .map(|(bi, ai)| (bi - ai) * (bi - ai))
            .sum::<f64>()
            .sqrt();
        let bnorm: f64 = (n as f64).sqrt();
        assert!(res <= 1e-7 * bnorm, "residual {res}");

        let len = kryrec_report_history_len(report);
        assert!(len >= 2);
        let (mut mv, mut norm) = (0u64, 0.0f64);
        assert_eq!(
            kryrec_report_history_entry(report, 0, &mut mv, &mut norm),
            KryrecStatus::KryrecOk
        );
        assert_eq!(mv, 0);
        assert!((norm - bnorm).abs() <= 1e-12 * bnorm || norm > 0.0);
        assert_eq!(
            kryrec_report_history_entry(report, len, &mut mv, &mut norm),
            KryrecStatus::KryrecErrInvalidArgument
        );

        kryrec_report_free(report);
        kryrec_matrix_free(matrix);
    }
}

#[test]
fn recycling_lifecycle_through_the_abi() {
    unsafe {
        let mut matrix: *mut KryrecMatrix = std::ptr::null_mut();
        assert_eq!(
            kryrec_matrix_convection_diffusion(16, 16, 1, 3.0, 1.0, 0.4, 0.0, &mut matrix),
            KryrecStatus::KryrecOk
        );
        let n = kryrec_matrix_n(matrix);
        let mut space: *mut KryrecSpace = std::ptr::null_mut();
        assert_eq!(kryrec_space_new(n, 12, &mut space), KryrecStatus::KryrecOk);
        assert_eq!(kryrec_space_dim(space), 0);

        let opts = options();
        let b = vec![1.0f64; n as usize];
        let mut x = vec![0.0f64; n as usize];

        // two rGCROT solves build the space
        for _ in 0..2 {
            let mut report: *mut KryrecReport = std::ptr::null_mut();
            let st = kryrec_solve_rgcrot(
                matrix,
                b.as_ptr(),
                n,
                &opts,
                space,
                x.as_mut_ptr(),
                &mut report,
            );
            assert_eq!(st, KryrecStatus::KryrecOk);
            assert_eq!(kryrec_report_status(report), KryrecSolveStatus::KryrecConverged);
            kryrec_report_free(report);
        }
        assert!(kryrec_space_dim(space) > 0);

        // refresh for the right-preconditioned operator, then recycle it
        assert_eq!(kryrec_space_refresh(space, matrix, &opts), KryrecStatus::KryrecOk);
        let mut report: *mut KryrecReport = std::ptr::null_mut();
        let st = kryrec_solve_rbicgstab(
            matrix,
            b.as_ptr(),
            n,
            &opts,
            space,
            x.as_mut_ptr(),
            &mut report,
        );
        assert_eq!(st, KryrecStatus::KryrecOk);
        assert_eq!(kryrec_report_status(report), KryrecSolveStatus::KryrecConverged);
        let recycled = kryrec_report_matvecs(report);
        kryrec_report_free(report);

        // plain BiCGStab for comparison
        let mut report: *mut KryrecReport = std::ptr::null_mut();
        assert_eq!(
            kryrec_solve_bicgstab(matrix, b.as_ptr(), n, &opts, x.as_mut_ptr(), &mut report),
            KryrecStatus::KryrecOk
        );
        let plain = kryrec_report_matvecs(report);
        kryrec_report_free(report);
        assert!(recycled <= plain, "recycled {recycled} vs plain {plain}");

        // checkpoint round trip
        let dir = std::env::temp_dir().join(format!("kryrec_ffi_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("space.recycle");
        let cpath = CString::new(path.to_str().unwrap()).unwrap();
        assert_eq!(kryrec_space_save(space, cpath.as_ptr()), KryrecStatus::KryrecOk);
        let mut loaded: *mut KryrecSpace = std::ptr::null_mut();
        assert_eq!(kryrec_space_load(cpath.as_ptr(), &mut loaded), KryrecStatus::KryrecOk);
        assert_eq!(kryrec_space_dim(loaded), kryrec_space_dim(space));
        kryrec_space_free(loaded);
        std::fs::remove_dir_all(&dir).ok();

        kryrec_space_free(space);
        kryrec_matrix_free(matrix);
    }
}

#[test]
fn error_paths_set_codes_and_messages() {
    unsafe {
        // null output handle
        assert_eq!(
            kryrec_matrix_poisson(4, 4, 1, 0, std::ptr::null_mut()),
            KryrecStatus::KryrecErrNullPointer
        );

        // dimension mismatch
        let mut matrix: *mut KryrecMatrix = std::ptr::null_mut();
        assert_eq!(kryrec_matrix_poisson(4, 4, 1, 0, &mut matrix), KryrecStatus::KryrecOk);
        let b = [1.0f64; 3];
        let mut y = vec![0.0f64; 3];
        let st = kryrec_matrix_matvec(matrix, b.as_ptr(), y.as_mut_ptr(), 3);
        assert_eq!(st, KryrecStatus::KryrecErrDimensionMismatch);
        let msg = CStr::from_ptr(kryrec_last_error_message());
        assert!(msg.to_str().unwrap().contains("16"));

        // invalid generation parameters
        let mut bad: *mut KryrecMatrix = std::ptr::null_mut();
        assert_eq!(
            kryrec_matrix_porous(8, 8, 1, 0.05, 0, &mut bad),
            KryrecStatus::KryrecErrGenerationFailed
        );
        assert!(bad.is_null());

        // io failure surfaces as an io code
        let missing = CString::new("/nonexistent/kryrec.stencil").unwrap();
        let mut m2: *mut KryrecMatrix = std::ptr::null_mut();
        assert_eq!(
            kryrec_matrix_load(missing.as_ptr(), &mut m2),
            KryrecStatus::KryrecErrIo
        );

        // status names are stable C strings
        let name = CStr::from_ptr(kryrec_status_name(KryrecStatus::KryrecErrIo));
        assert_eq!(name.to_str().unwrap(), "io error");

        kryrec_matrix_free(matrix);
        // free of null is a no-op
        kryrec_matrix_free(std::ptr::null_mut());
        kryrec_space_free(std::ptr::null_mut());
        kryrec_report_free(std::ptr::null_mut());
    }
}

#[test]
fn options_init_fills_defaults() {
    let mut opts = KryrecOptions {
        tol: 0.0,
        tol_is_absolute: 5,
        max_matvecs: 0,
        restart_m: 0,
        precond_kind: 9,
        precond_sweeps: 0,
        precond_relax: 0.0,
    };
    unsafe { kryrec_options_init(&mut opts) };
    assert_eq!(opts.tol, 1e-8);
    assert_eq!(opts.tol_is_absolute, 0);
    assert_eq!(opts.max_matvecs, 2000);
    assert_eq!(opts.restart_m, 30);
    assert_eq!(opts.precond_kind, 1);
}

/// Every exported symbol must be declared in the shipped header.
#[test]
fn header_declares_every_exported_function() {
    let src = include_str!("lib.rs");
    let header = include_str!("../include/kryrec.h");
    let mut count = 0;
    for line in src.lines() {
        let line = line.trim();
        let name = line
            .strip_prefix("pub unsafe extern \"C\" fn ")
            .or_else(|| line.strip_prefix("pub extern \"C\" fn "));
        if let Some(rest) = name {
            let fn_name: String = rest
                .chars()
                .take_while(|c| c.is_alphanumeric() || *c == '_')
                .collect();
            assert!(
                header.contains(&fn_name),
                "header is missing declaration for {fn_name}"
            );
            count += 1;
        }
    }
    assert!(count >= 20, "expected the full surface, found {count} functions");
    for ty in ["KryrecMatrix", "KryrecSpace", "KryrecReport", "KryrecOptions", "KryrecStatus"] {
        assert!(header.contains(ty), "header is missing type {ty}");
    }
}
