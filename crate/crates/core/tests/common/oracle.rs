//! Iterated integrals of a polyline by nested trapezoid sums.
//!
//! Each linear piece is cut into `substeps` equal steps. Over one step,
//! level `k` grows by (level `k-1` averaged over the step) times the step
//! increment: the discrete form of
//! `S^k_{i1..ik}(t) = ∫ S^{k-1}_{i1..i(k-1)}(s) dX^{ik}_s`.
//!
//! Running sums are compensated (Neumaier) so that small coefficients are
//! not swamped by rounding from hundreds of thousands of additions.

/// Compensated accumulator.
#[derive(Clone, Copy, Default)]
struct Acc {
    sum: f64,
    comp: f64,
}

impl Acc {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Flattened levels `1..=depth` of the signature of `points`.
pub fn riemann_signature(points: &[Vec<f64>], depth: usize, substeps: usize) -> Vec<f64> {
    let d = points[0].len();
    let mut levels: Vec<Vec<Acc>> = (1..=depth)
        .map(|k| vec![Acc::default(); d.pow(k as u32)])
        .collect();
    let width = d.pow(depth as u32);
    // values of the level below, before and after the current step
    let mut below_old = vec![0.0; width];
    let mut below_new = vec![0.0; width];
    let mut scratch = vec![0.0; width];
    let mut dx = vec![0.0; d];
    for pair in points.windows(2) {
        for (j, v) in dx.iter_mut().enumerate() {
            *v = (pair[1][j] - pair[0][j]) / substeps as f64;
        }
        for _ in 0..substeps {
            for (p, acc) in levels[0].iter_mut().enumerate() {
                below_old[p] = acc.value();
                acc.add(dx[p]);
                below_new[p] = acc.value();
            }
            for k in 1..depth {
                let n_below = levels[k - 1].len();
                let n_cur = levels[k].len();
                for (slot, acc) in scratch.iter_mut().zip(&levels[k]) {
                    *slot = acc.value();
                }
                for p in 0..n_below {
                    let avg = 0.5 * (below_old[p] + below_new[p]);
                    for (j, &dj) in dx.iter().enumerate() {
                        levels[k][p * d + j].add(avg * dj);
                    }
                }
                below_old[..n_cur].copy_from_slice(&scratch[..n_cur]);
                for (slot, acc) in below_new.iter_mut().zip(&levels[k]) {
                    *slot = acc.value();
                }
            }
        }
    }
    levels.iter().flatten().map(Acc::value).collect()
}

/// Richardson extrapolation of the trapezoid sums from `m` and `2m` steps;
/// removes the leading `O(1/m^2)` error term.
pub fn richardson_signature(points: &[Vec<f64>], depth: usize, substeps: usize) -> Vec<f64> {
    let coarse = riemann_signature(points, depth, substeps);
    let fine = riemann_signature(points, depth, 2 * substeps);
    fine.iter()
        .zip(&coarse)
        .map(|(f, c)| (4.0 * f - c) / 3.0)
        .collect()
}
