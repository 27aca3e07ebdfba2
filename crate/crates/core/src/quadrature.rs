//! Numerical integration: Gauss-Legendre rules and adaptive Gauss-Kronrod.

use crate::error::{Error, Result};
use std::collections::{BinaryHeap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

/// Gauss-Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n
            let theta = std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5);
            let mut x = (1.0 - (nf - 1.0) / (8.0 * nf * nf * nf)) * theta.cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Process-wide cached rule; building a 4096-point rule is not free.
    pub fn cached(n: usize) -> Arc<GaussLegendre> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(rule) = cache.lock().expect("rule cache poisoned").get(&n) {
            return rule.clone();
        }
        let rule = Arc::new(GaussLegendre::new(n));
        cache
            .lock()
            .expect("rule cache poisoned")
            .entry(n)
            .or_insert(rule)
            .clone()
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.000_000_000_000_000_000_000_000_000_000_000,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];
// Gauss 10-point weights for XGK[1], XGK[3], ..., XGK[9]
#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

fn kronrod21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[10];
    let mut g = 0.0;
    for j in 0..10 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    let k = k * h;
    let g = g * h;
    (k, (k - g).abs())
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Tolerances for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_segments: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { abs: 0.0, rel: 1e-11, max_segments: 4000 }
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

/// Globally adaptive Gauss-Kronrod (10/21) over the union of `breakpoints`
/// intervals. The last breakpoint may be `f64::INFINITY`, in which case the
/// tail is mapped onto a finite interval.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, breakpoints: &[f64], tol: Tolerance) -> Result<Integral> {
    assert!(breakpoints.len() >= 2);
    // tail mapping x = a + s t/(1-t) with s = a.max(1) for [a, inf)
    let last = breakpoints[breakpoints.len() - 1];
    let tail_start = breakpoints[breakpoints.len() - 2];
    let tail_scale = tail_start.abs().max(1.0);
    let infinite = last.is_infinite();

    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    let eval = |f: &mut F, seg_a: f64, seg_b: f64, mapped: bool| -> (f64, f64) {
        if mapped {
            let mut g = |t: f64| {
                let one_minus = 1.0 - t;
                if one_minus <= 0.0 {
                    return 0.0;
                }
                let x = tail_start + tail_scale * t / one_minus;
                let v = f(x) * tail_scale / (one_minus * one_minus);
                if v.is_finite() {
                    v
                } else {
                    0.0
                }
            };
            kronrod21(&mut g, seg_a, seg_b)
        } else {
            kronrod21(f, seg_a, seg_b)
        }
    };

    let n_pieces = breakpoints.len() - 1;
    for i in 0..n_pieces {
        let mapped = infinite && i == n_pieces - 1;
        let (a, b) = if mapped { (0.0, 1.0) } else { (breakpoints[i], breakpoints[i + 1]) };
        let (v, e) = eval(&mut f, a, b, mapped);
        total += v;
        total_err += e;
        heap.push((Segment { a, b, value: v, error: e }, mapped));
    }
    let mut segments = n_pieces;
    while total_err > tol.abs.max(tol.rel * total.abs()) {
        if segments >= tol.max_segments {
            return Err(Error::Quadrature { value: total, error: total_err });
        }
        let (seg, mapped) = heap.pop().expect("non-empty heap");
        let mid = 0.5 * (seg.a + seg.b);
        let (v1, e1) = eval(&mut f, seg.a, mid, mapped);
        let (v2, e2) = eval(&mut f, mid, seg.b, mapped);
        total += v1 + v2 - seg.value;
        total_err += e1 + e2 - seg.error;
        heap.push((Segment { a: seg.a, b: mid, value: v1, error: e1 }, mapped));
        heap.push((Segment { a: mid, b: seg.b, value: v2, error: e2 }, mapped));
        segments += 1;
        if !total.is_finite() {
            return Err(Error::Quadrature { value: total, error: f64::INFINITY });
        }
        // re-sum occasionally to shed accumulated cancellation in the running totals
        if segments.is_multiple_of(256) {
            total = heap.iter().map(|(s, _)| s.value).sum();
            total_err = heap.iter().map(|(s, _)| s.error).sum();
        }
    }
    let value: f64 = heap.iter().map(|(s, _)| s.value).sum();
    let error: f64 = heap.iter().map(|(s, _)| s.error).sum();
    Ok(Integral { value, error })
}

/// Integrate over (0, inf) for integrands concentrated around `scale`.
pub fn integrate_positive<F: FnMut(f64) -> f64>(f: F, scale: f64, tol: Tolerance) -> Result<Integral> {
    let s = scale.abs().max(f64::MIN_POSITIVE);
    let bps = [
        0.0,
        1e-6 * s,
        1e-3 * s,
        0.03 * s,
        0.2 * s,
        0.5 * s,
        s,
        2.0 * s,
        5.0 * s,
        20.0 * s,
        f64::INFINITY,
    ];
    integrate(f, &bps, tol)
}

/// Integrate over (0, inf) with breakpoints placed around each of several
/// characteristic scales.
pub fn integrate_positive_scales<F: FnMut(f64) -> f64>(
    f: F,
    scales: &[f64],
    tol: Tolerance,
) -> Result<Integral> {
    let mut bps: Vec<f64> = vec![0.0];
    for &s in scales.iter().filter(|s| s.is_finite() && **s > 0.0) {
        for r in [1e-6, 1e-3, 0.03, 0.2, 0.5, 1.0, 2.0, 5.0, 20.0] {
            bps.push(r * s);
        }
    }
    if bps.len() == 1 {
        bps.push(1.0);
    }
    bps.sort_by(f64::total_cmp);
    bps.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    bps.push(f64::INFINITY);
    integrate(f, &bps, tol)
}
