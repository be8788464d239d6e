//! First-order moment-based optimizer over a flattened vector field.

use crate::grid::Vec3;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const STABILIZER: f64 = 1e-8;

/// Adam with bias correction. Every vector component is one coordinate.
#[derive(Debug, Clone)]
pub struct Adam {
    step_size: f64,
    m: Vec<Vec3>,
    v: Vec<Vec3>,
    b1t: f64,
    b2t: f64,
    steps: usize,
}

impl Adam {
    pub fn new(len: usize, step_size: f64) -> Self {
        Self { step_size, m: vec![[0.0; 3]; len], v: vec![[0.0; 3]; len], b1t: 1.0, b2t: 1.0, steps: 0 }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// One descent step of `params` along `grad`.
    pub fn step(&mut self, params: &mut [Vec3], grad: &[Vec3]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.steps += 1;
        self.b1t *= BETA1;
        self.b2t *= BETA2;
        let c1 = 1.0 / (1.0 - self.b1t);
        let c2 = 1.0 / (1.0 - self.b2t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            for c in 0..3 {
                m[c] = BETA1 * m[c] + (1.0 - BETA1) * g[c];
                v[c] = BETA2 * v[c] + (1.0 - BETA2) * g[c] * g[c];
                p[c] -= self.step_size * (m[c] * c1) / ((v[c] * c2).sqrt() + STABILIZER);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_step_size() {
        let mut p = vec![[1.0, -2.0, 0.0]];
        let mut opt = Adam::new(1, 0.1);
        opt.step(&mut p, &[[3.0, -0.5, 0.0]]);
        assert!((p[0][0] - 0.9).abs() < 1e-8);
        assert!((p[0][1] + 1.9).abs() < 1e-8);
        assert_eq!(p[0][2], 0.0);
    }

    #[test]
    fn minimizes_quadratic() {
        let target = [3.0, -1.0, 0.5];
        let mut p = vec![[0.0; 3]];
        let mut opt = Adam::new(1, 0.05);
        for _ in 0..2000 {
            let g = [0, 1, 2].map(|c| 2.0 * (p[0][c] - target[c]));
            opt.step(&mut p, &[g]);
        }
        for c in 0..3 {
            assert!((p[0][c] - target[c]).abs() < 1e-3);
        }
        assert_eq!(opt.steps(), 2000);
    }

    #[test]
    fn matches_scalar_reference() {
        // Textbook scalar Adam written out with explicit powers.
        let grads = [0.5, -1.0, 0.25, 2.0, -0.1];
        let (lr, mut x, mut m, mut v) = (0.01, 1.0f64, 0.0f64, 0.0f64);
        let mut p = vec![[1.0, 0.0, 0.0]];
        let mut opt = Adam::new(1, lr);
        for (i, &g) in grads.iter().enumerate() {
            let t = (i + 1) as i32;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= lr * mh / (vh.sqrt() + 1e-8);
            opt.step(&mut p, &[[g, 0.0, 0.0]]);
            assert!((p[0][0] - x).abs() < 1e-14);
        }
    }
}
