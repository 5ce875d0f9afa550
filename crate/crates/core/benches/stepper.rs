//! Strang step and transform throughput.
//!
//! With the default `parallel` feature each case runs on a one-thread rayon
//! pool and on the default pool (sized by the hardware or
//! `RAYON_NUM_THREADS`). `cargo bench --no-default-features` measures
//! the plain sequential build.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use shnls::spectral::{self, ComplexField, Grid};
use shnls::stepper::Stepper;
use shnls::system::EquationSpec;
use shnls::Complex64;

fn gaussian(n: &[usize], l: f64) -> ComplexField {
    let grid = Grid::new(n, &vec![l; n.len()]).unwrap();
    ComplexField::from_fn(grid, |x| {
        let r2: f64 = x.iter().map(|c| c * c).sum();
        Complex64::new(1.5 * (-r2 / 2.0).exp(), 0.0)
    })
}

fn cases() -> Vec<(&'static str, ComplexField, EquationSpec)> {
    vec![
        (
            "nls_1d_4096",
            gaussian(&[4096], 80.0),
            EquationSpec::nls(1.0),
        ),
        (
            "sh_2d_256",
            gaussian(&[256, 256], 32.0),
            EquationSpec::sh(1.0, 0.1),
        ),
        (
            "sn_3d_64",
            gaussian(&[64, 64, 64], 16.0),
            EquationSpec::sn(1.0),
        ),
    ]
}

fn pools() -> Vec<(String, Option<rayon_pool::Pool>)> {
    rayon_pool::pools()
}

#[cfg(feature = "parallel")]
mod rayon_pool {
    pub type Pool = rayon::ThreadPool;

    pub fn pools() -> Vec<(String, Option<Pool>)> {
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        vec![("threads_1".into(), Some(one)), ("default".into(), None)]
    }

    pub fn install<R: Send>(pool: &Option<Pool>, f: impl FnOnce() -> R + Send) -> R {
        match pool {
            Some(p) => p.install(f),
            None => f(),
        }
    }
}

#[cfg(not(feature = "parallel"))]
mod rayon_pool {
    pub type Pool = ();

    pub fn pools() -> Vec<(String, Option<Pool>)> {
        vec![("sequential".into(), None)]
    }

    pub fn install<R: Send>(_: &Option<Pool>, f: impl FnOnce() -> R + Send) -> R {
        f()
    }
}

fn strang_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("strang_step");
    group.sample_size(20);
    for (name, v0, spec) in cases() {
        for (label, pool) in pools() {
            group.bench_with_input(BenchmarkId::new(name, &label), &v0, |b, v0| {
                let mut stepper = Stepper::new(spec).unwrap();
                let mut v = v0.clone();
                b.iter(|| rayon_pool::install(&pool, || stepper.step(&mut v, 1e-4).unwrap()));
            });
        }
    }
    group.finish();
}

fn fft_round_trip(c: &mut Criterion) {
    let mut group = c.benchmark_group("fft_round_trip");
    group.sample_size(20);
    for (name, v0, _) in cases() {
        for (label, pool) in pools() {
            group.bench_with_input(BenchmarkId::new(name, &label), &v0, |b, v0| {
                b.iter(|| {
                    rayon_pool::install(&pool, || {
                        let s = spectral::to_spectral(v0).unwrap();
                        spectral::from_spectral(&s).unwrap()
                    })
                });
            });
        }
    }
    group.finish();
}

criterion_group!(benches, strang_step, fft_round_trip);
criterion_main!(benches);
