//! Quadrature and interpolation helpers shared by the grid builders, the
//! closed-form oracles and the z-parametrized kernel families.

use std::collections::BinaryHeap;

/// Gauss-Legendre nodes and weights on [-1, 1], ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Gauss-Legendre rule mapped to [a, b].
pub fn gauss_legendre_on(a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let h = 0.5 * (b - a);
    let c = 0.5 * (a + b);
    (x.iter().map(|t| c + h * t).collect(), w.iter().map(|t| h * t).collect())
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        rk += WGK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    (rk * h, ((rk - rg) * h).abs())
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, thiserror::Error)]
#[error("adaptive quadrature did not converge: estimate {value}, error {error} after {intervals} intervals")]
pub struct QuadError {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

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

/// Globally adaptive Gauss-Kronrod (7/15) integration of `f` over [a, b].
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<QuadResult, QuadError> {
    if a == b {
        return Ok(QuadResult { value: 0.0, error: 0.0, evaluations: 0 });
    }
    let (v, e) = gk15(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value: v, error: e });
    let mut total = v;
    let mut err = e;
    let mut evals = 15;
    while err > abs_tol.max(rel_tol * total.abs()) {
        if heap.len() >= max_intervals {
            return Err(QuadError { value: total, error: err, intervals: heap.len() });
        }
        let seg = heap.pop().expect("heap never empties");
        let mid = 0.5 * (seg.a + seg.b);
        let (v1, e1) = gk15(&mut f, seg.a, mid);
        let (v2, e2) = gk15(&mut f, mid, seg.b);
        evals += 30;
        total += v1 + v2 - seg.value;
        err += e1 + e2 - seg.error;
        heap.push(Segment { a: seg.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: seg.b, value: v2, error: e2 });
        // Re-sum occasionally so cancellation in the running totals cannot stall the loop.
        if heap.len() % 64 == 0 {
            total = heap.iter().map(|s| s.value).sum();
            err = heap.iter().map(|s| s.error).sum();
        }
    }
    let value = heap.iter().map(|s| s.value).sum();
    let error = heap.iter().map(|s| s.error).sum();
    Ok(QuadResult { value, error, evaluations: evals })
}

/// Chebyshev-Lobatto points on [a, b], ascending.
pub fn chebyshev_lobatto(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n)
        .map(|j| {
            // sine form keeps the node set exactly symmetric
            let t = -(std::f64::consts::PI * (n as f64 - 1.0 - 2.0 * j as f64) / (2.0 * (n - 1) as f64)).sin();
            0.5 * (a + b) + 0.5 * (b - a) * t
        })
        .collect()
}

/// Barycentric Lagrange interpolation on Chebyshev-Lobatto nodes.
#[derive(Debug, Clone)]
pub struct Barycentric {
    pub nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Barycentric {
    pub fn chebyshev(a: f64, b: f64, n: usize) -> Self {
        let nodes = chebyshev_lobatto(a, b, n);
        let weights = (0..n)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == n - 1 {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_at(&self, x: f64) -> Option<usize> {
        let span = self.nodes[self.nodes.len() - 1] - self.nodes[0];
        self.nodes.iter().position(|&t| (t - x).abs() <= 1e-14 * span)
    }

    /// Interpolation coefficients c_j(x) with p(x) = Σ c_j f_j.
    pub fn coefficients(&self, x: f64) -> Vec<f64> {
        let n = self.nodes.len();
        let mut c = vec![0.0; n];
        if let Some(j) = self.node_at(x) {
            c[j] = 1.0;
            return c;
        }
        let mut den = 0.0;
        for j in 0..n {
            let t = self.weights[j] / (x - self.nodes[j]);
            c[j] = t;
            den += t;
        }
        for v in c.iter_mut() {
            *v /= den;
        }
        c
    }

    /// Coefficients d_j(x) with p'(x) = Σ d_j f_j.
    pub fn derivative_coefficients(&self, x: f64) -> Vec<f64> {
        let n = self.nodes.len();
        let mut d = vec![0.0; n];
        if let Some(i) = self.node_at(x) {
            // Row i of the barycentric differentiation matrix.
            let mut diag = 0.0;
            for j in 0..n {
                if j != i {
                    let v = (self.weights[j] / self.weights[i]) / (self.nodes[i] - self.nodes[j]);
                    d[j] = v;
                    diag -= v;
                }
            }
            d[i] = diag;
            return d;
        }
        let c = self.coefficients(x);
        // p'(x) = Σ_j c_j (f_j − p(x)) / (x_j − x) ... expressed linearly in f.
        let mut s = vec![0.0; n];
        let mut den = 0.0;
        for j in 0..n {
            let t = self.weights[j] / (x - self.nodes[j]);
            den += t;
            s[j] = t / (x - self.nodes[j]);
        }
        // p' = [Σ_j s_j (p − f_j)] / den  with s_j = w_j/(x−x_j)²
        let ssum: f64 = s.iter().sum();
        for j in 0..n {
            d[j] = (ssum * c[j] - s[j]) / den;
        }
        d
    }

    pub fn eval(&self, values: &[f64], x: f64) -> f64 {
        self.coefficients(x).iter().zip(values).map(|(c, v)| c * v).sum()
    }

    pub fn eval_derivative(&self, values: &[f64], x: f64) -> f64 {
        self.derivative_coefficients(x).iter().zip(values).map(|(c, v)| c * v).sum()
    }
}

/// Solve g(x) = 0 on [a, b] for monotone g by safeguarded secant/bisection.
pub fn find_root<F: FnMut(f64) -> f64>(mut g: F, mut a: f64, mut b: f64, tol: f64) -> Option<f64> {
    let mut fa = g(a);
    let mut fb = g(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    for _ in 0..200 {
        let mut x = b - fb * (b - a) / (fb - fa);
        if !(x > a.min(b) && x < a.max(b)) {
            x = 0.5 * (a + b);
        }
        let fx = g(x);
        if fx == 0.0 || (b - a).abs() < tol {
            return Some(x);
        }
        if fx.signum() == fa.signum() {
            // Illinois modification keeps the bracket shrinking on both sides.
            a = x;
            fa = fx;
            fb *= 0.5;
        } else {
            b = x;
            fb = fx;
            fa *= 0.5;
        }
        if (b - a).abs() < tol {
            return Some(x);
        }
    }
    Some(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg} q={q}");
            }
        }
    }

    #[test]
    fn adaptive_handles_log_endpoint() {
        let r = integrate(|x: f64| x.ln(), 0.0, 1.0, 1e-12, 1e-12, 2000).unwrap();
        assert!((r.value + 1.0).abs() < 1e-10);
    }

    #[test]
    fn barycentric_reproduces_polynomial_and_slope() {
        let b = Barycentric::chebyshev(-0.45, 0.45, 9);
        let f = |x: f64| 1.0 - 2.0 * x + 3.0 * x.powi(5);
        let df = |x: f64| -2.0 + 15.0 * x.powi(4);
        let vals: Vec<f64> = b.nodes.iter().map(|&x| f(x)).collect();
        for &x in &[-0.4, -0.1, 0.0, 0.33, b.nodes[3]] {
            assert!((b.eval(&vals, x) - f(x)).abs() < 1e-13);
            let e = (b.eval_derivative(&vals, x) - df(x)).abs();
            assert!(e < 1e-11, "x={x} err={e}");
        }
    }

    #[test]
    fn root_finder_converges() {
        let r = find_root(|x| x * x * x - 0.2, 0.0, 1.0, 1e-15).unwrap();
        assert!((r - 0.2f64.cbrt()).abs() < 1e-13);
    }
}
