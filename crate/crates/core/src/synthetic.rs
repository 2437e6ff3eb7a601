//! Deterministic synthetic DL3 observations for demos and tests.

use crate::dl3::{Dl3Observation, EffectiveArea, EventRecord, GoodTimeInterval};
use crate::fits::Card;

fn frac(x: f64) -> f64 {
    x - x.floor()
}

/// `n_events` events within about 1 deg of the pointing, energies spread
/// log-uniformly over 0.1..100 TeV, one 1800 s GTI and a small effective
/// area table. Positions and energies are f32-exact so they survive the
/// single-precision EVENTS columns unchanged.
pub fn observation(obs_id: &str, ra_pnt: f64, dec_pnt: f64, n_events: usize) -> Dl3Observation {
    let (tstart, tstop) = (0.0, 1800.0);
    let deadc = 0.95;
    let cos_dec = dec_pnt.to_radians().cos().max(0.05);
    let events = (0..n_events)
        .map(|i| {
            let k = i as f64 + 1.0;
            let dra = (2.0 * frac(k * 0.618_033_988_7) - 1.0) / cos_dec;
            let ddec = 2.0 * frac(k * 0.754_877_666_2) - 1.0;
            EventRecord {
                event_id: i as i64 + 1,
                time: tstart + (tstop - tstart) * (i as f64 + 0.5) / n_events as f64,
                ra: (ra_pnt + dra).rem_euclid(360.0) as f32 as f64,
                dec: (dec_pnt + ddec).clamp(-90.0, 90.0) as f32 as f64,
                energy: 10f64.powf(-1.0 + 3.0 * frac(k * 0.569_840_291)) as f32 as f64,
            }
        })
        .collect();
    let energy_edges: Vec<f64> = (0..=4).map(|i| 10f64.powf(-1.0 + 0.75 * i as f64)).collect();
    Dl3Observation {
        obs_id: obs_id.into(),
        tstart,
        tstop,
        ontime: tstop - tstart,
        livetime: (tstop - tstart) * deadc,
        deadc,
        ra_pnt,
        dec_pnt,
        mjdref: 51910.0 + 7.428703703703703e-4,
        events,
        gtis: vec![GoodTimeInterval { start: tstart, stop: tstop }],
        aeff: Some(EffectiveArea {
            energy_lo: energy_edges[..4].to_vec(),
            energy_hi: energy_edges[1..].to_vec(),
            offset_lo: vec![0.0, 1.0],
            offset_hi: vec![1.0, 2.5],
            area: (0..4)
                .map(|i| vec![1e4 * (i + 1) as f64, 5e3 * (i + 1) as f64])
                .collect(),
        }),
        extra_cards: vec![Card::new("OBJECT", "synthetic"), Card::new("TELESCOP", "HESS")],
        extra_hdus: Vec::new(),
    }
}
