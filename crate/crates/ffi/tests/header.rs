use std::path::Path;
use std::process::Command;

const HEADER: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/include/vicsek.h");

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(HEADER).expect("header generated by build.rs");
    for sym in [
        "typedef struct VkGraph VkGraph",
        "typedef struct VkSpectrum VkSpectrum",
        "VK_BUFFER_TOO_SMALL = 5",
        "vk_graph_build(",
        "vk_graph_distance(",
        "vk_spectrum_compute(",
        "vk_spectrum_eigenvalues(",
        "vk_heat_column(",
        "vk_last_error(",
    ] {
        assert!(h.contains(sym), "missing {sym}");
    }
}

/// Compiles the header as C when a compiler is available.
#[test]
fn header_compiles_as_c() {
    let Ok(out) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", HEADER])
        .output()
    else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(Path::new(HEADER).exists());
}
