//! Scaling measurements of the denoiser: wall-clock time and peak heap use
//! against sequence length.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use gsmcad_core::model::{Conditioning, GMamba, ModelConfig};
use gsmcad_core::numerics::{ParamStore, Scalar, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);
static CALLS: AtomicUsize = AtomicUsize::new(0);

/// System allocator that tracks live and peak heap bytes. Install it with
/// `#[global_allocator]` in a binary to make [`PeakScope`] meaningful.
pub struct CountingAlloc;

unsafe impl GlobalAlloc for CountingAlloc {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            let now = CURRENT.fetch_add(layout.size(), Ordering::Relaxed) + layout.size();
            PEAK.fetch_max(now, Ordering::Relaxed);
            CALLS.fetch_add(1, Ordering::Relaxed);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
    }
}

/// Measures the heap high-water mark above the level at creation.
pub struct PeakScope {
    base: usize,
    calls: usize,
}

impl PeakScope {
    pub fn start() -> Self {
        let base = CURRENT.load(Ordering::Relaxed);
        PEAK.store(base, Ordering::Relaxed);
        PeakScope { base, calls: CALLS.load(Ordering::Relaxed) }
    }

    /// Peak bytes above the starting level, or `None` when the counting
    /// allocator is not installed.
    pub fn peak_bytes(&self) -> Option<usize> {
        if CALLS.load(Ordering::Relaxed) == self.calls {
            return None;
        }
        Some(PEAK.load(Ordering::Relaxed).saturating_sub(self.base))
    }
}

/// One row of the scaling report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanRow {
    pub l: usize,
    pub seconds: f64,
    pub peak_bytes: Option<usize>,
}

pub const DEFAULT_LENGTHS: [usize; 4] = [512, 1024, 2048, 4096];

/// A randomly initialized denoiser sized for the longest length.
pub fn bench_model<T: Scalar>(d_e: usize, n_blocks: usize, max_len: usize, seed: u64) -> (GMamba, ParamStore<T>) {
    let config = ModelConfig { d_e, n_blocks, n_ts: max_len, ..ModelConfig::desk() };
    let mut store = ParamStore::new();
    let model = GMamba::new(config, &mut store, &mut ChaCha8Rng::seed_from_u64(seed)).expect("valid bench config");
    (model, store)
}

/// Noisy input and empty conditioning for `l` tokens.
pub fn bench_input<T: Scalar>(l: usize, d_e: usize, seed: u64) -> (Tensor<T>, Conditioning) {
    let z = Tensor::randn(&[l, d_e], 1.0, &mut ChaCha8Rng::seed_from_u64(seed ^ l as u64));
    (z, Conditioning::empty(l))
}

/// Times one denoiser forward pass per length (best of `reps`) and records
/// the heap high-water mark of the first pass.
pub fn scan_scaling<T: Scalar>(lengths: &[usize], d_e: usize, n_blocks: usize, reps: usize, seed: u64) -> Vec<ScanRow> {
    let max_len = lengths.iter().copied().max().unwrap_or(1);
    let (model, store) = bench_model::<T>(d_e, n_blocks, max_len, seed);
    let t = 1;
    lengths
        .iter()
        .map(|&l| {
            let (z, cond) = bench_input::<T>(l, d_e, seed);
            let scope = PeakScope::start();
            let out = model.denoise(&store, &z, t, &cond).expect("denoise");
            let peak_bytes = scope.peak_bytes();
            drop(out);
            let mut best = f64::INFINITY;
            for _ in 0..reps.max(1) {
                let start = Instant::now();
                let out = model.denoise(&store, &z, t, &cond).expect("denoise");
                best = best.min(start.elapsed().as_secs_f64());
                std::hint::black_box(out);
            }
            ScanRow { l, seconds: best, peak_bytes }
        })
        .collect()
}

pub fn to_csv(rows: &[ScanRow]) -> String {
    let mut s = String::from("L,seconds,peak_bytes\n");
    for r in rows {
        let mem = r.peak_bytes.map_or_else(String::new, |b| b.to_string());
        s.push_str(&format!("{},{:.6},{}\n", r.l, r.seconds, mem));
    }
    s
}
