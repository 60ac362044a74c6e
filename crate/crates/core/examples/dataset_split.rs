//! Seeded train/val/test assignment and its text manifest.
//!
//! cargo run -p pelvimark --example dataset_split

use pelvimark::labelgen::{split_dataset, SplitCounts, SplitManifest};
use pelvimark::model::Split;

pub fn run_example() -> pelvimark::Result<()> {
    let ids: Vec<String> = (0..100).map(|i| format!("case_{i:03}")).collect();
    let manifest = split_dataset(&ids, SplitCounts::parse("80,5,15")?, 2024)?;
    println!("val: {:?}", manifest.ids_in(Split::Val));
    let text = manifest.to_text();
    assert_eq!(SplitManifest::parse(&text)?, manifest);
    assert!(split_dataset(&ids[..99], SplitCounts::new(80, 5, 15), 1).is_err());
    Ok(())
}

#[allow(dead_code)]
fn main() -> pelvimark::Result<()> {
    run_example()
}
