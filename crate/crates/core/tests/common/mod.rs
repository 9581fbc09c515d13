#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use softpmd::env::stream_rng;
use softpmd::{Policy, QFunction, Table};

pub fn rng(seed: u64) -> ChaCha8Rng {
    stream_rng(seed, 900)
}

pub fn simplex_row(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / z).collect()
}

pub fn policy(s: usize, a: usize, rng: &mut impl Rng) -> Policy<f64> {
    let data = (0..s).flat_map(|_| simplex_row(a, rng)).collect();
    Policy::new(Table::from_vec(s, a, data).unwrap()).unwrap()
}

pub fn qfun(s: usize, a: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> QFunction<f64> {
    QFunction::new(Table::from_fn(s, a, |_, _| rng.gen_range(lo..hi))).unwrap()
}

pub fn max_entry_diff(a: &Policy<f64>, b: &Policy<f64>) -> f64 {
    a.table().max_abs_diff(b.table())
}
