use crate::diffcore::{DiffArray, Real};
use crate::{Error, Result};

/// AdamW moment buffers and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> AdamW<T> {
    pub fn new(params: &[DiffArray<T>], beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            weight_decay,
            step: 0,
            m: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
            v: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Decoupled decay `p -= lr * wd * p`, then the bias-corrected Adam
    /// update.
    pub fn step(&mut self, params: &mut [DiffArray<T>], grads: &[Vec<T>], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::shape(format!(
                "optimizer tracks {} parameters, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let (ob1, ob2) = (T::lit(1.0 - self.beta1), T::lit(1.0 - self.beta2));
        let decay = T::lit(lr * self.weight_decay);
        let (lr_t, eps) = (T::lit(lr), T::lit(self.eps));
        let (c1, c2) = (T::lit(c1), T::lit(c2));
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if g.len() != p.numel() {
                return Err(Error::shape(format!(
                    "gradient {i} has {} entries for a parameter of {}",
                    g.len(),
                    p.numel()
                )));
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, x) in p.data_mut().iter_mut().enumerate() {
                *x -= decay * *x;
                m[j] = b1 * m[j] + ob1 * g[j];
                v[j] = b2 * v[j] + ob2 * g[j] * g[j];
                let mhat = m[j] / c1;
                let vhat = v[j] / c2;
                *x -= lr_t * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Euclidean norm over every gradient entry.
pub fn global_norm<T: Real>(grads: &[Vec<T>]) -> f64 {
    grads
        .iter()
        .flatten()
        .map(|g| {
            let g = g.to_f64_lossless();
            g * g
        })
        .sum::<f64>()
        .sqrt()
}

/// Rescales all gradients so their global norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_global_norm<T: Real>(grads: &mut [Vec<T>], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if max_norm > 0.0 && norm > max_norm {
        let s = T::lit(max_norm / norm);
        grads.iter_mut().flatten().for_each(|g| *g *= s);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Vec<DiffArray<f64>> {
        vec![DiffArray::full(&[1], v)]
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut p = vec![DiffArray::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap()];
        let before = p.clone();
        let mut opt = AdamW::new(&p, 0.9, 0.999, 1e-8, 0.0);
        opt.step(&mut p, &[vec![0.0; 3]], 0.1).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_example() {
        let mut p = scalar(0.0);
        let mut opt = AdamW::new(&p, 0.9, 0.999, 1e-8, 0.0);
        opt.step(&mut p, &[vec![1.0]], 0.1).unwrap();
        let expected = -0.1 * (1.0 / (1.0 + 1e-8));
        assert!((p[0].data()[0] - expected).abs() < 1e-15);
        assert!((p[0].data()[0] + 0.099_999_999_0).abs() < 1e-10);
    }

    #[test]
    fn decay_only_shrinks() {
        let mut p = scalar(2.0);
        let mut opt = AdamW::new(&p, 0.9, 0.999, 1e-8, 0.01);
        opt.step(&mut p, &[vec![0.0]], 0.1).unwrap();
        assert!((p[0].data()[0] - 2.0 * (1.0 - 0.1 * 0.01)).abs() < 1e-15);
    }

    #[test]
    fn three_steps_match_hand_recurrence() {
        let (b1, b2, eps, wd, lr) = (0.9, 0.999, 1e-8, 0.01, 0.05);
        let grads = [0.7, -1.3, 0.2];
        let mut p = scalar(0.4);
        let mut opt = AdamW::new(&p, b1, b2, eps, wd);
        let (mut x, mut m, mut v) = (0.4f64, 0.0f64, 0.0f64);
        for (t, &g) in grads.iter().enumerate() {
            opt.step(&mut p, &[vec![g]], lr).unwrap();
            let t = t as i32 + 1;
            x -= lr * wd * x;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x -= lr * mh / (vh.sqrt() + eps);
            assert!((p[0].data()[0] - x).abs() < 1e-12);
        }
        assert_eq!(opt.steps_taken(), 3);
    }

    #[test]
    fn clipping_caps_norm() {
        let mut g = vec![vec![3.0, 4.0], vec![12.0]];
        let before = clip_global_norm(&mut g, 6.5);
        assert_eq!(before, 13.0);
        assert!((global_norm(&g) - 6.5).abs() < 1e-12);
        let mut small = vec![vec![0.3]];
        clip_global_norm(&mut small, 5.0);
        assert_eq!(small, vec![vec![0.3]]);
    }

    #[test]
    fn mismatched_gradients_error() {
        let mut p = scalar(0.0);
        let mut opt = AdamW::new(&p, 0.9, 0.999, 1e-8, 0.0);
        assert!(opt.step(&mut p, &[vec![1.0, 2.0]], 0.1).is_err());
        assert!(opt.step(&mut p, &[], 0.1).is_err());
    }
}
