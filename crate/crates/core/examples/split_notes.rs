//! Seeded 80/10/10 note-level split.

use clinical_ts::timeline::{split, split_sizes};

fn main() -> Result<(), clinical_ts::error::TimelineError> {
    let ids: Vec<String> = (1..=23).map(|i| format!("note-{i:02}")).collect();
    let fractions = [0.8, 0.1, 0.1];
    println!("sizes for {} notes: {:?}", ids.len(), split_sizes(ids.len(), fractions)?);
    let s = split(&ids, fractions, 42)?;
    println!("train      {:?}", s.train);
    println!("validation {:?}", s.validation);
    println!("test       {:?}", s.test);
    assert_eq!(s, split(&ids, fractions, 42)?);
    Ok(())
}
