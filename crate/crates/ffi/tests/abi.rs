use std::ffi::{CStr, CString};
use std::ptr;

use bridgecat::bridge::{BridgeSchedule, MtMode};
use bridgecat::nn::{DenoiserConfig, DenoiserModel};
use bridgecat::train::{save_checkpoint, Checkpoint};
use bridgecat_ffi::*;

const PT2: &str = "2
Lattice=\"10 0 0 0 10 0 0 0 20\" pbc=\"T T F\" Properties=species:S:1:pos:R:3:fixed:I:1:adsorbate:I:1
Pt 1.0 1.0 5.0 1 0
O 1.0 1.0 7.2 0 1
";

fn last_error() -> String {
    unsafe { CStr::from_ptr(bc_last_error_message()) }
        .to_str()
        .unwrap()
        .to_string()
}

fn parse(text: &str) -> *mut BcStructure {
    let c = CString::new(text).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { bc_structure_parse(c.as_ptr(), &mut s) }, BcStatus::Ok);
    assert!(!s.is_null());
    s
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(bc_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn structure_round_trip_and_positions() {
    let s = parse(PT2);
    let mut n = 0;
    assert_eq!(unsafe { bc_structure_atom_count(s, &mut n) }, BcStatus::Ok);
    assert_eq!(n, 2);
    let mut buf = [0.0f64; 6];
    assert_eq!(
        unsafe { bc_structure_positions(s, buf.as_mut_ptr(), 5) },
        BcStatus::BufferTooSmall
    );
    assert_eq!(unsafe { bc_structure_positions(s, buf.as_mut_ptr(), 6) }, BcStatus::Ok);
    assert_eq!(buf, [1.0, 1.0, 5.0, 1.0, 1.0, 7.2]);
    buf[5] = 7.0;
    assert_eq!(unsafe { bc_structure_set_positions(s, buf.as_ptr(), 6) }, BcStatus::Ok);
    assert_eq!(
        unsafe { bc_structure_set_positions(s, buf.as_ptr(), 3) },
        BcStatus::InvalidArgument
    );

    let mut needed = 0;
    assert_eq!(
        unsafe { bc_structure_format(s, ptr::null_mut(), 0, &mut needed) },
        BcStatus::BufferTooSmall
    );
    let mut text = vec![0 as std::ffi::c_char; needed];
    assert_eq!(
        unsafe { bc_structure_format(s, text.as_mut_ptr(), needed, &mut needed) },
        BcStatus::Ok
    );
    let formatted = unsafe { CStr::from_ptr(text.as_ptr()) }.to_str().unwrap().to_string();
    let t = parse(&formatted);
    let mut d = -1.0;
    assert_eq!(unsafe { bc_dmae(s, t, &mut d) }, BcStatus::Ok);
    assert!(d.abs() < 1e-12);

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("s.xyz").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { bc_structure_write(s, path.as_ptr()) }, BcStatus::Ok);
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { bc_structure_read(path.as_ptr(), &mut r) }, BcStatus::Ok);
    assert_eq!(unsafe { bc_dmae(s, r, &mut d) }, BcStatus::Ok);
    assert!(d.abs() < 1e-12);
    unsafe {
        bc_structure_free(s);
        bc_structure_free(t);
        bc_structure_free(r);
        bc_structure_free(ptr::null_mut());
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let bad = CString::new("3\nLattice=\"1 0 0 0 1 0 0 0 1\" pbc=\"T T T\"\n").unwrap();
    let mut s = ptr::null_mut();
    let st = unsafe { bc_structure_parse(bad.as_ptr(), &mut s) };
    assert_eq!(st, BcStatus::Parse);
    assert!(s.is_null());
    assert!(!last_error().is_empty());
    assert_eq!(
        unsafe { bc_structure_parse(ptr::null(), &mut s) },
        BcStatus::NullPointer
    );
    assert!(last_error().contains("null"));
    let missing = CString::new("/nonexistent/file.xyz").unwrap();
    assert_eq!(unsafe { bc_structure_read(missing.as_ptr(), &mut s) }, BcStatus::Io);
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { bc_model_load(missing.as_ptr(), &mut m) }, BcStatus::Io);
    let mut n = 0;
    assert_eq!(
        unsafe { bc_structure_atom_count(ptr::null(), &mut n) },
        BcStatus::NullPointer
    );
    let ok = parse(PT2);
    assert_eq!(unsafe { bc_structure_atom_count(ok, &mut n) }, BcStatus::Ok);
    assert_eq!(last_error(), "");
    unsafe { bc_structure_free(ok) };
}

#[test]
fn model_generation_is_deterministic() {
    let cfg = DenoiserConfig {
        hidden: 8,
        layers: 1,
        num_rbf: 6,
        n_frequencies: 2,
        time_embed_dim: 4,
        ..DenoiserConfig::default()
    };
    let model = DenoiserModel::new(cfg.clone(), 3).unwrap();
    let sched = BridgeSchedule::with_max_var(100, MtMode::Linear, 0.05).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&Checkpoint::for_model(cfg, sched.descriptor(), model.params), &path).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { bc_model_load(cpath.as_ptr(), &mut m) }, BcStatus::Ok);
    let s = parse(PT2);
    let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
    assert_eq!(unsafe { bc_generate(m, s, 20, 0.0, 7, &mut a) }, BcStatus::Ok);
    assert_eq!(unsafe { bc_generate(m, s, 20, 0.0, 7, &mut b) }, BcStatus::Ok);
    let mut d = -1.0;
    assert_eq!(unsafe { bc_dmae(a, b, &mut d) }, BcStatus::Ok);
    assert_eq!(d, 0.0);
    let mut bad = ptr::null_mut();
    assert_eq!(
        unsafe { bc_generate(m, s, 1, 0.0, 7, &mut bad) },
        BcStatus::InvalidArgument
    );
    let mut c = 0.0;
    assert_eq!(unsafe { bc_confidence(m, s, &mut c) }, BcStatus::Ok);
    assert!(c > 0.0 && c < 1.0);
    let mut relaxed = ptr::null_mut();
    let (mut steps, mut energy) = (0usize, 0.0f64);
    assert_eq!(
        unsafe { bc_oracle_relax(s, &mut relaxed, &mut steps, &mut energy) },
        BcStatus::Ok
    );
    assert!(energy.is_finite());
    unsafe {
        for p in [s, a, b, relaxed] {
            bc_structure_free(p);
        }
        bc_model_free(m);
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/bridgecat.h");
    let text = std::fs::read_to_string(header).unwrap();
    for name in [
        "bc_structure_read",
        "bc_generate",
        "bc_last_error_message",
        "BC_STATUS_OK",
        "typedef struct bc_model",
    ] {
        assert!(text.contains(name), "{name}");
    }
    let Ok(cc) = which_cc() else { return };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        format!(
            "#include \"{header}\"\nint main(void) {{ bc_structure *s = 0; bc_status st = bc_structure_parse(\"\", &s); bc_structure_free(s); return st == BC_STATUS_OK; }}\n"
        ),
    )
    .unwrap();
    let out = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only"])
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn which_cc() -> Result<&'static str, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if std::process::Command::new(cc).arg("--version").output().is_ok() {
            return Ok(cc);
        }
    }
    Err(())
}
