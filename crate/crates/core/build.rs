use std::process::Command;

fn main() {
    let hash = Command::new("git")
        .args(["rev-parse", "--short=12", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok());
    if let Some(h) = hash {
        println!("cargo:rustc-env=SCSA_BP_GIT_HASH={}", h.trim());
    }
    println!("cargo:rerun-if-changed=../../.git/HEAD");
}
