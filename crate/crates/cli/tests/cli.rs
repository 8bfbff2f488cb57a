use std::process::Command;

fn gcm(args: &[&str], dir: &std::path::Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_gcm")).args(args).current_dir(dir).output().unwrap()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(gcm(&["--help"], p).status.code(), Some(0));
    assert_eq!(gcm(&["deblur"], p).status.code(), Some(1));
    assert_eq!(gcm(&["nonsense"], p).status.code(), Some(1));
    assert_eq!(gcm(&["smooth", "missing.png"], p).status.code(), Some(1));

    assert!(gcm(&["scene", "--kind", "smooth", "--size", "32", "-o", "s.png"], p).status.success());
    let bad_mask = gcm(&["interp", "s.png", "--mask", "random:2:1"], p);
    assert_eq!(bad_mask.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad_mask.stderr).contains("mask"));
    assert_eq!(gcm(&["deblur", "s.png", "--levels", "zero"], p).status.code(), Some(1));
}

#[test]
fn numeric_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    image::GrayImage::from_pixel(32, 32, image::Luma([128])).save(p.join("flat.png")).unwrap();
    let out = gcm(&["deblur", "flat.png", "--kernel-size", "5"], p);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn eval_table_layout() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert!(gcm(&["scene", "--size", "32", "--seed", "1", "-o", "a.png"], p).status.success());
    let out = gcm(&["eval", "a.png", "a.png"], p);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("file,psnr,ssim,ks,er,seconds"));
    assert_eq!(lines.next(), Some("a.png,inf,1.000000,,,"));
}
