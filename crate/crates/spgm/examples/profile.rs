use spgm::methods::run_spgm;
use spgm::problems::{gen_random, Family};
use std::time::Instant;

fn main() {
    let p = gen_random(Family::LsPlain, 32, 128, 1);
    let t0 = Instant::now();
    let trace = run_spgm(&p, &p.x0, 100).expect("run");
    println!(
        "full spgm N=100 d=32: {:.2}s, early_stop={:?}, tau_N={:?}",
        t0.elapsed().as_secs_f64(),
        trace.early_stop.as_ref().map(|e| e.round),
        trace.taus.last()
    );
    let p2 = gen_random(Family::LogSumExp, 32, 128, 1);
    let t0 = Instant::now();
    let r = spgm::problems::reference_optimum(&p2, 100);
    println!("reference logsumexp d=32: {:.2}s grad={:.2e}", t0.elapsed().as_secs_f64(), r.grad_norm);
}
