//! Regenerates the committed test fixtures under `tests/fixtures/`.

#[path = "../../core/tests/support/ap_oracle.rs"]
mod ap_oracle;
#[path = "../../core/tests/support/datasets.rs"]
mod datasets;
#[path = "../tests/common/scene.rs"]
mod scene;

fn main() -> std::io::Result<()> {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures");
    scene::write_all(&root)?;
    println!("fixtures written to {}", root.display());
    Ok(())
}
