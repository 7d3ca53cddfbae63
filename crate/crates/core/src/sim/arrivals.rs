use rand::Rng;

/// Largest mean handled in one multiplication run; e^-CHUNK stays well above f64 underflow.
const CHUNK: f64 = 256.0;

/// Poisson draw by Knuth's multiplication method.
///
/// Uses only uniform draws and multiplications so the sequence is identical on
/// every platform. Means above `CHUNK` are split into a sum of independent
/// Poisson draws.
pub fn sample_arrivals<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    let mut remaining = rate;
    let mut total = 0;
    while remaining > 0.0 {
        let lambda = remaining.min(CHUNK);
        remaining -= lambda;
        total += knuth(lambda, rng);
    }
    total
}

fn knuth<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    let limit = (-lambda).exp();
    let mut k = 0;
    let mut p = 1.0;
    loop {
        p *= rng.gen::<f64>();
        if p <= limit {
            return k;
        }
        k += 1;
    }
}
