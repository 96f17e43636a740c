//! Parse a messy model transcript and clean the accepted events.

use clinical_ts::annotation::{attribute_sources, clean, parse_response, CleanConfig};

const TRANSCRIPT: &str = "\
Sure! Here is the table:
| Event | Time |
|---|---|
| shortness of breath | -48 |
| admission | 0 |
| 12 | BiPAP |
| chest x-ray | NaN |
| no acute process | 2 |
| furosemide | 0 |
| furosemide | 0 |
| 80 | 6 |
";

fn main() {
    let mut report = parse_response(TRANSCRIPT);
    println!("{} candidate lines, {} accepted", report.candidates, report.accepted.len());
    for r in &report.rejected {
        println!("  rejected ({}): {}", r.reason, r.line);
    }
    println!("  repairs: {:?}", report.repairs);

    let chunks = [(0, "worsening shortness of breath"), (1, "started BiPAP"), (2, "furosemide 40 mg IV")];
    attribute_sources(&mut report.accepted, &chunks);
    let (events, summary) = clean(report.accepted, &CleanConfig::default());
    println!("{:#?}", summary);
    for e in events {
        println!("{:<22} {:>5}  chunk {:?} {:?}", e.event, e.time_hours, e.source_chunk_id, e.provenance);
    }
}
