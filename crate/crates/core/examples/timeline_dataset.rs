//! Bin timestamps, label event pairs, and render a training sequence.

use clinical_ts::timeline::{bin_time, format_sequence, make_pairs, scan_sequence, BinScheme, PairStrategy};

fn main() -> Result<(), clinical_ts::error::TimelineError> {
    let events = [
        ("atenolol 50 mg tablet", 0.0),
        ("aspirin 81 mg", 0.0),
        ("chest pain", -72.0),
        ("troponin peak", 14.5),
        ("discharge", 120.0),
    ];
    for (e, t) in &events {
        println!("{e:<24} {t:>7} -> bin {}", bin_time(*t)?);
    }
    let scheme = BinScheme::default();
    for strategy in [PairStrategy::Adjacent, PairStrategy::Window(2), PairStrategy::All] {
        let pairs = make_pairs(&events, strategy, &scheme)?;
        println!("{strategy:?}: {} pairs", pairs.len());
    }
    for p in make_pairs(&events, PairStrategy::Adjacent, &scheme)? {
        println!("  <{}, {}, y={}, t={}>", p.event_a, p.event_b, p.y, p.t);
    }
    let seq = format_sequence(&events);
    println!("{seq}");
    assert_eq!(scan_sequence(&seq).map(|v| v.len()), Some(events.len()));
    Ok(())
}
