//! Match two annotation sets by embedding distance and correlate times.

use clinical_ts::retrieval::embedding::HashEmbedder;
use clinical_ts::stats::{concordance, Assignment, ConcordanceOptions};

fn main() -> clinical_ts::Result<()> {
    let reference = [
        ("fever", -72.0),
        ("chest x-ray", 0.0),
        ("ceftriaxone", 1.0),
        ("fever resolved", 48.0),
    ];
    let candidate = [
        ("fever", -48.0),
        ("ceftriaxone", 0.0),
        ("fever resolved", 36.0),
        ("discharge", 96.0),
    ];
    let embedder = HashEmbedder::new(1024, 0);
    for assignment in [Assignment::Greedy, Assignment::Optimal] {
        let options = ConcordanceOptions {
            assignment,
            ..ConcordanceOptions::default()
        };
        let r = concordance(&reference, &candidate, &embedder, options)?;
        println!("{assignment:?}");
        print!("{r}");
        for p in &r.pairs {
            println!("  {:<16} ~ {:<16} d={:.3}", reference[p.reference].0, candidate[p.candidate].0, p.distance);
        }
    }
    Ok(())
}
