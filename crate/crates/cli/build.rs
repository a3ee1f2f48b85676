use std::process::Command;

fn main() {
    let describe = Command::new("git")
        .args(["describe", "--tags", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty());
    let version = match describe {
        // Tagged checkouts already yield `tag-N-gHASH`; bare hashes get the
        // package version as a pseudo-tag.
        Some(d) if d.contains("-g") || d.starts_with('v') => d,
        Some(d) => format!("v{}-g{d}", env!("CARGO_PKG_VERSION")),
        None => format!("v{}-unknown", env!("CARGO_PKG_VERSION")),
    };
    println!("cargo:rustc-env=SLLM_VERSION={version}");
    println!("cargo:rerun-if-changed=../../.git/HEAD");
    println!("cargo:rerun-if-changed=../../.git/index");
}
