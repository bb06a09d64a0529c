//! Monte Carlo of the quantum channel.
//!
//! Slots are simulated in fixed batches. Every batch draws from its own
//! per-role streams (Alice, channel, Bob, detector), so results do not depend
//! on how batches are scheduled across threads. Dead time couples adjacent
//! batches and is applied afterwards, in one sequential pass.

use rand::Rng;
use rayon::prelude::*;

use super::{early_probability, Basis, EmissionRecord, MeasurementRecord};
use crate::photonics::{apply_dead_time, raw_clicks, ClickEvent, OutputBin, PoissonSampler, SlotArrivals, SlotTiming};
use crate::rng::{stream_rng, Stream};
use crate::security::Scenario;
use crate::Result;

pub const BATCH_SLOTS: u64 = 1 << 16;

#[derive(Debug, Clone)]
pub struct QuantumRun {
    pub n_slots: u64,
    /// Alice's records, one per slot.
    pub emissions: Vec<EmissionRecord>,
    /// Bob's records, one per slot with exactly one accepted click.
    pub measurements: Vec<MeasurementRecord>,
    /// Registered detector clicks (after dead time), time ordered.
    pub clicks: Vec<ClickEvent>,
}

struct Batch {
    emissions: Vec<EmissionRecord>,
    bob_bases: Vec<Basis>,
    candidates: Vec<ClickEvent>,
}

fn simulate_batch(scenario: &Scenario, timing: &SlotTiming, seed: u64, index: u64, n_slots: u64) -> Batch {
    let start = index * BATCH_SLOTS;
    let end = (start + BATCH_SLOTS).min(n_slots);
    let mut alice = stream_rng(seed, Stream::Alice, index);
    let mut channel = stream_rng(seed, Stream::Channel, index);
    let mut bob = stream_rng(seed, Stream::Bob, index);
    let mut det = stream_rng(seed, Stream::Detector, index);
    let sampler = PoissonSampler::new(scenario.source.mean_photon_number);
    let survival = scenario.channel_survival();
    let visibility = scenario.interferometer.visibility;

    let len = (end - start) as usize;
    let mut emissions = Vec::with_capacity(len);
    let mut bob_bases = Vec::with_capacity(len);
    let mut arrivals = Vec::new();
    for slot in start..end {
        let bit = alice.random::<u8>() & 1;
        let basis = Basis::random(&mut alice);
        let photon_count = sampler.sample(&mut alice);
        let e = EmissionRecord { slot_index: slot, bit, basis, photon_count };
        let bob_basis = Basis::random(&mut bob);
        let mut a = SlotArrivals { slot, early: 0, late: 0 };
        if photon_count > 0 {
            let p_early = early_probability(e.phase() - bob_basis.phase(), visibility);
            for _ in 0..photon_count {
                if channel.random::<f64>() < survival {
                    if channel.random::<f64>() < p_early {
                        a.early += 1;
                    } else {
                        a.late += 1;
                    }
                }
            }
        }
        if a.early + a.late > 0 {
            arrivals.push(a);
        }
        emissions.push(e);
        bob_bases.push(bob_basis);
    }
    let candidates = raw_clicks(&arrivals, start..end, &scenario.effective_detector(), timing, &mut det);
    Batch { emissions, bob_bases, candidates }
}

/// Bob's demultiplexing: a click counts for a bin when it lands within half
/// a window of the bin centre. Slots with clicks accepted in both bins are
/// discarded, as are slots with none.
pub fn measure_clicks(
    clicks: &[ClickEvent],
    bob_bases: &[Basis],
    timing: &SlotTiming,
    window: f64,
) -> Vec<MeasurementRecord> {
    let half = window / 2.0;
    let mut out: Vec<MeasurementRecord> = Vec::new();
    let mut pending: Option<(u64, OutputBin, f64)> = None;
    let mut doubled = false;
    let flush = |p: Option<(u64, OutputBin, f64)>, doubled: bool, out: &mut Vec<MeasurementRecord>| {
        if let (Some((slot, bin, offset)), false) = (p, doubled) {
            if let Some(&bob_basis) = bob_bases.get(slot as usize) {
                out.push(MeasurementRecord {
                    slot_index: slot,
                    bob_basis,
                    outcome_bit: bin.bit(),
                    click_time_offset: offset,
                });
            }
        }
    };
    for c in clicks {
        // Bob only sees the timestamp.
        let bin = [OutputBin::Early, OutputBin::Late]
            .into_iter()
            .find(|&b| (c.time_offset - timing.bin_center(b)).abs() <= half);
        let Some(bin) = bin else { continue };
        match pending {
            Some((slot, prev, _)) if slot == c.slot_index => {
                if prev != bin {
                    doubled = true;
                }
            }
            _ => {
                flush(pending, doubled, &mut out);
                pending = Some((c.slot_index, bin, c.time_offset));
                doubled = false;
            }
        }
    }
    flush(pending, doubled, &mut out);
    out
}

/// Simulates `n_slots` clock periods of the link.
pub fn run_quantum_phase(scenario: &Scenario, n_slots: u64, seed: u64) -> Result<QuantumRun> {
    scenario.validate()?;
    let timing = scenario.slot_timing();
    let n_batches = n_slots.div_ceil(BATCH_SLOTS);
    let batches: Vec<Batch> = (0..n_batches)
        .into_par_iter()
        .map(|i| simulate_batch(scenario, &timing, seed, i, n_slots))
        .collect();
    let mut emissions = Vec::with_capacity(n_slots as usize);
    let mut bob_bases = Vec::with_capacity(n_slots as usize);
    let mut candidates = Vec::new();
    for b in batches {
        emissions.extend(b.emissions);
        bob_bases.extend(b.bob_bases);
        candidates.extend(b.candidates);
    }
    let clicks = apply_dead_time(candidates, &scenario.effective_detector(), &timing);
    let measurements = measure_clicks(&clicks, &bob_bases, &timing, scenario.window);
    Ok(QuantumRun { n_slots, emissions, measurements, clicks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photonics::Provenance;
    use crate::protocol::sift;
    use crate::security::click_rates;

    fn noiseless() -> Scenario {
        let mut s = Scenario::electrical_sync_50km();
        s.budget.fiber_length_km = 0.0;
        s.set_detector_efficiency(1.0);
        s.interferometer.visibility = 1.0;
        s.interferometer.protocol_efficiency = 1.0;
        s.detector.blackbody_rate = 0.0;
        s.detector.raman_rate_in_window = 0.0;
        s.detector.dead_time = 0.0;
        s.source.mean_photon_number = 5.0;
        s.window = 400e-9;
        s.detector.jitter_fwhm = 1e-9;
        s.window = 100e-9;
        s
    }

    #[test]
    fn noiseless_limit_has_no_errors() {
        let run = run_quantum_phase(&noiseless(), 20_000, 1).unwrap();
        let out = sift::sift(1, 20_000, &run.emissions, &run.measurements).unwrap();
        assert!(out.bob.len() > 5000);
        assert_eq!(out.alice, out.bob);
    }

    #[test]
    fn zero_mu_no_records() {
        let mut s = Scenario::electrical_sync_50km().with_mu(0.0);
        s.detector.blackbody_rate = 0.0;
        let run = run_quantum_phase(&s, 100_000, 2).unwrap();
        assert!(run.measurements.is_empty());
        assert!(run.clicks.is_empty());
        assert_eq!(run.emissions.len(), 100_000);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let s = Scenario::optical_sync_50km().with_mu(0.3);
        let a = run_quantum_phase(&s, 3 * BATCH_SLOTS + 17, 9).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| run_quantum_phase(&s, 3 * BATCH_SLOTS + 17, 9).unwrap());
        assert_eq!(a.emissions, b.emissions);
        assert_eq!(a.measurements, b.measurements);
        assert_eq!(a.clicks, b.clicks);
    }

    #[test]
    fn detections_match_analytic_rate() {
        let s = Scenario::electrical_sync_50km();
        let n = 1_000_000u64;
        let run = run_quantum_phase(&s, n, 3).unwrap();
        let rates = click_rates(&s);
        let expected = rates.total() / s.source.clock_rate * n as f64;
        let observed = run.measurements.len() as f64;
        let sigma = expected.sqrt();
        assert!(
            (observed - expected).abs() < 3.0 * sigma,
            "observed {observed}, expected {expected} ± {sigma}"
        );
    }

    #[test]
    fn detection_rate_linear_in_protocol_efficiency() {
        let mut counts = Vec::new();
        for pe in [0.25, 0.5, 1.0] {
            let mut s = Scenario::electrical_sync_50km();
            s.interferometer.protocol_efficiency = pe;
            s.detector.blackbody_rate = 0.0;
            s.detector.dead_time = 0.0;
            let run = run_quantum_phase(&s, 400_000, 4).unwrap();
            let signal = run
                .clicks
                .iter()
                .filter(|c| c.provenance == Provenance::Signal)
                .count() as f64;
            let p = -(-s.source.mean_photon_number * s.eta_total()).exp_m1();
            counts.push((pe, signal, p * 400_000.0));
        }
        for (pe, observed, expected) in &counts {
            assert!(
                (observed - expected).abs() < 3.0 * expected.sqrt(),
                "pe {pe}: {observed} vs {expected}"
            );
        }
        // slope through origin: doubling efficiency roughly doubles counts
        let r1 = counts[1].1 / counts[0].1;
        let r2 = counts[2].1 / counts[1].1;
        assert!((r1 - 2.0).abs() < 0.15 && (r2 - 2.0).abs() < 0.15, "{r1} {r2}");
    }

    #[test]
    fn double_clicks_discarded() {
        let timing = SlotTiming::new(1e-6, 320e-9);
        let click = |slot, off: f64, bin| ClickEvent {
            slot_index: slot,
            time_offset: off,
            provenance: Provenance::Blackbody,
            output_bin: bin,
        };
        let clicks = [
            click(0, 0.0, OutputBin::Early),
            click(0, 320e-9, OutputBin::Late),
            click(1, 321e-9, OutputBin::Late),
            click(2, 200e-9, OutputBin::Late),
        ];
        let bases = [Basis::BasisA; 3];
        let m = measure_clicks(&clicks, &bases, &timing, 72e-9);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].slot_index, 1);
        assert_eq!(m[0].outcome_bit, 1);
    }
}
