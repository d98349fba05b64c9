//! AdamW for flat parameter groups and tangent-space Adam for poses.

use nalgebra::Vector6;

use crate::lie::{exp, Pose, Twist};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moments of one parameter group.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub steps: u64,
}

impl AdamW {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], steps: 0 }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Decoupled decay `p -= lr * wd * p`, then the bias-corrected Adam step.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64], lr: f64, weight_decay: f64, hp: &AdamParams) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - hp.beta1.powi(t);
        let c2 = 1.0 - hp.beta2.powi(t);
        let decay = lr * weight_decay;
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
            *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
            *p -= decay * *p;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + hp.eps);
        }
    }

    /// Keeps the moments of entries whose block is kept; `block` entries per mask item.
    pub fn retain_blocks(&mut self, keep: &[bool], block: usize) {
        let filter = |v: &mut Vec<f64>| {
            *v = v.chunks(block).zip(keep).filter(|(_, &k)| k).flat_map(|(c, _)| c.iter().copied()).collect();
        };
        filter(&mut self.m);
        filter(&mut self.v);
    }
}

/// Adam moments for one camera extrinsic, kept in the tangent space.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PoseAdam {
    pub m: Vector6<f64>,
    pub v: Vector6<f64>,
    pub steps: u64,
}

impl PoseAdam {
    /// The tangent step `lr * m_hat / (sqrt(v_hat) + eps)` with the
    /// translational rate on `rho` and the rotational rate on `phi`.
    pub fn step(&mut self, grad: &Twist, lr_rot: f64, lr_trans: f64, hp: &AdamParams) -> Twist {
        let g = grad.to_vector();
        self.steps += 1;
        let t = self.steps as i32;
        self.m = self.m * hp.beta1 + g * (1.0 - hp.beta1);
        self.v = self.v * hp.beta2 + g.component_mul(&g) * (1.0 - hp.beta2);
        let c1 = 1.0 - hp.beta1.powi(t);
        let c2 = 1.0 - hp.beta2.powi(t);
        let step = Vector6::from_fn(|i, _| {
            let lr = if i < 3 { lr_trans } else { lr_rot };
            lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + hp.eps)
        });
        Twist::from_vector(&step)
    }
}

/// `T <- exp(-step) T`. A zero step leaves `pose` bit-identical.
pub fn pose_update(pose: &Pose, grad: &Twist, lr_rot: f64, lr_trans: f64, moments: &mut PoseAdam, hp: &AdamParams) -> Pose {
    let step = moments.step(grad, lr_rot, lr_trans, hp);
    if step == Twist::zero() {
        return *pose;
    }
    exp(&(step * -1.0)) * *pose
}
