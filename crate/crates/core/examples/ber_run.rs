use tizx::harness::*;
use tizx::zxmap::*;
fn main() {
    for (m, snrs) in [(3usize, vec![0.0, 10.0, 16.0]), (2, vec![0.0, 10.0])] {
        let g = published_table::<f64>(m).unwrap();
        let cfg = SweepConfig {
            snr_grid_db: snrs,
            ..SweepConfig::default()
        };
        let t = std::time::Instant::now();
        let c = ber_sweep(&cfg, &g).unwrap();
        for p in &c.points {
            println!(
                "m{m} {} dB ber {:.5} bits {} errors {} ci ({:.5},{:.5})",
                p.snr_db, p.ber, p.bits, p.errors, p.ci_lo, p.ci_hi
            );
        }
        println!("time {:?}", t.elapsed());
    }
}
