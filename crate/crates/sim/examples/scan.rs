use tacservo_sim::scenario::{demo, ControllerKind};
use tacservo_sim::runner::run_scenario;

fn main() {
    // Extreme corners: huge pitch, band-edge starts, reversed lateral+yaw.
    for &(lat, yaw, pitch, d0) in &[
        (0.002, 0.35, 0.10, 0.0205), (0.002, 0.35, 0.20, 0.0205), (0.000, 0.00, 0.30, 0.0205),
        (0.004, 0.80, 0.30, 0.0200), (0.006, 1.00, 0.00, 0.0205), (0.006, 0.50, 0.15, 0.0190),
        (-0.005, -1.40, 0.25, 0.0215), (0.0, 1.54, 0.30, 0.0200), (0.007, 0.2, 0.0, 0.0185),
        (0.0, 0.0, 0.0, 0.0184), (0.0, 0.0, 0.0, 0.0219),
    ] {
        let mut s = demo("straight-mpc").unwrap();
        s.controller = ControllerKind::Coupled;
        s.initial.lateral_m = lat; s.initial.yaw_rad = yaw; s.initial.pitch_rad = pitch; s.initial.depth_m = d0;
        match run_scenario(&s) {
            Ok((log, m)) => println!("coupled lat={lat} yaw={yaw} pitch={pitch} d0={d0}: contact={} end_t={:.1} settle={:?}",
                m.contact_maintained, log.rows.last().map(|r| r.time_s).unwrap_or(0.0), m.settling_time_s.map(|t| (t*10.0).round()/10.0)),
            Err(e) => println!("coupled lat={lat} yaw={yaw} pitch={pitch} d0={d0}: ERR {e}"),
        }
    }
}
