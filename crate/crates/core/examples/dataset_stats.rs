//! Dataset summary over event rows and the per-stage chunk funnel.

use clinical_ts::stats::{funnel, summarize, NoteStages};
use clinical_ts::timeline::{BinScheme, EventRecord};

fn main() -> clinical_ts::Result<()> {
    let scheme = BinScheme::default();
    let rows = [
        ("h1", "fever", -72.0),
        ("h1", "admission", 0.0),
        ("h1", "antibiotics", 2.0),
        ("h2", "fall", -10.0),
        ("h2", "hip fracture repair", 24.0),
    ];
    let records = rows
        .iter()
        .map(|(h, e, t)| EventRecord::new(*h, *h, *e, *t, &scheme))
        .collect::<Result<Vec<_>, _>>()?;
    println!("{}", summarize(&records));

    let mut a = NoteStages::new("h1");
    a.insert("original", 0..400)?;
    a.insert("bm25", 0..100)?;
    a.insert("semantic", 90..130)?;
    a.insert("fused", 0..130)?;
    a.insert("llm", [3, 17, 95])?;
    a.insert("cleaned", [3, 17])?;
    let mut b = NoteStages::new("h2");
    b.insert("original", 0..60)?;
    b.insert("bm25", 0..60)?;
    b.insert("fused", 0..60)?;
    b.insert("llm", [1])?;
    b.insert("cleaned", [1, 2])?;
    let f = funnel(&[a, b], 100);
    print!("{f}");
    print!("{}", f.to_csv());
    Ok(())
}
