//! Per-anchor decoding of auxiliary Gaussians.
//!
//! Every head sees the same input vector
//! `[feature (F) | unit direction anchor->camera (3) | distance (1) | scale (1)]`
//! and produces attributes for all K offspring at once:
//!
//! | head       | outputs | activation                                   |
//! |------------|---------|----------------------------------------------|
//! | offset     | 3K      | `tanh(raw) * scale`                          |
//! | covariance | 7K      | quaternion `raw / |raw|`, `clamp(scale * exp(raw))` |
//! | color      | 3K      | `sigmoid(raw)`                               |
//! | opacity    | K       | `ALPHA_MAX * sigmoid(raw)`                   |

use nalgebra::{Matrix3, Vector3, Vector4};
use rand::Rng;

use super::mlp::Mlp;
use crate::error::{Error, Result};
use crate::lie::quat_to_matrix;

pub const FEATURE_DIM: usize = 32;
pub const HIDDEN_UNITS: usize = 32;
pub const DEFAULT_OFFSPRING: usize = 10;
pub const ALPHA_MAX: f64 = 0.99;
pub const MIN_SCALE: f64 = 1e-4;
/// Pre-activation bias of the opacity head at initialization.
pub const OPACITY_INIT_BIAS: f64 = 1.0;
/// Log-scale bias at initialization, so offspring start at a quarter of the anchor scale.
pub const SCALE_INIT_BIAS: f64 = -1.3862943611198906;
/// Output-layer weights start uniform in `[-gain, gain) / sqrt(hidden)`.
/// At zero every offspring starts on its anchor with the bias outputs; the
/// output layers still receive gradients and break the symmetry.
pub const OUTPUT_INIT_GAIN: f64 = 0.0;

/// Extra inputs after the feature: direction (3), distance, anchor scale.
const VIEW_INPUTS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Head {
    Offset,
    Covariance,
    Color,
    Opacity,
}

impl Head {
    pub const ALL: [Head; 4] = [Head::Offset, Head::Covariance, Head::Color, Head::Opacity];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Outputs per offspring Gaussian.
    pub fn width(self) -> usize {
        match self {
            Head::Offset => 3,
            Head::Covariance => 7,
            Head::Color => 3,
            Head::Opacity => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Head::Offset => "offset",
            Head::Covariance => "covariance",
            Head::Color => "color",
            Head::Opacity => "opacity",
        }
    }
}

/// The four decoder MLPs plus the constants that shape their outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderNet {
    offspring: usize,
    feature_dim: usize,
    max_scale: f64,
    heads: [Mlp; 4],
}

impl DecoderNet {
    /// Kaiming-uniform hidden layers and small uniform output layers (see
    /// [`OUTPUT_INIT_GAIN`]). Output biases are zero except for the opacity
    /// bias, the identity bias of each offspring quaternion, and the
    /// log-scale bias.
    pub fn new<R: Rng + ?Sized>(offspring: usize, feature_dim: usize, max_scale: f64, rng: &mut R) -> Self {
        let inputs = feature_dim + VIEW_INPUTS;
        let heads =
            Head::ALL.map(|h| Mlp::kaiming_with_output(inputs, HIDDEN_UNITS, h.width() * offspring, OUTPUT_INIT_GAIN, rng));
        let mut net = Self { offspring, feature_dim, max_scale, heads };
        net.head_mut(Head::Opacity).b2_mut().fill(OPACITY_INIT_BIAS);
        let cov = net.head_mut(Head::Covariance).b2_mut();
        for k in 0..offspring {
            cov[7 * k] = 1.0;
            cov[7 * k + 4..7 * k + 7].fill(SCALE_INIT_BIAS);
        }
        net
    }

    pub fn from_heads(offspring: usize, feature_dim: usize, max_scale: f64, heads: [Mlp; 4]) -> Result<Self> {
        let inputs = feature_dim + VIEW_INPUTS;
        for h in Head::ALL {
            let m = &heads[h.index()];
            if m.inputs() != inputs || m.outputs() != h.width() * offspring {
                return Err(Error::ShapeMismatch(format!(
                    "{} head is {}->{}, expected {}->{}",
                    h.name(),
                    m.inputs(),
                    m.outputs(),
                    inputs,
                    h.width() * offspring
                )));
            }
        }
        Ok(Self { offspring, feature_dim, max_scale, heads })
    }

    pub fn offspring(&self) -> usize {
        self.offspring
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn input_dim(&self) -> usize {
        self.feature_dim + VIEW_INPUTS
    }

    pub fn max_scale(&self) -> f64 {
        self.max_scale
    }

    pub fn head(&self, h: Head) -> &Mlp {
        &self.heads[h.index()]
    }

    pub fn head_mut(&mut self, h: Head) -> &mut Mlp {
        &mut self.heads[h.index()]
    }
}

/// Borrowed view of one anchor's decoder inputs.
#[derive(Clone, Copy, Debug)]
pub struct AnchorRef<'a> {
    pub center: Vector3<f64>,
    pub feature: &'a [f64],
    pub scale: f64,
}

/// A renderable Gaussian in the global frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AuxGaussian {
    pub center: Vector3<f64>,
    /// Unit quaternion `(w, x, y, z)`.
    pub rotation: Vector4<f64>,
    pub scale: Vector3<f64>,
    pub color: Vector3<f64>,
    pub opacity: f64,
}

impl AuxGaussian {
    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        let q = &self.rotation;
        quat_to_matrix(q[0], q[1], q[2], q[3])
    }

    /// `R diag(s^2) R^T`.
    pub fn covariance(&self) -> Matrix3<f64> {
        let r = self.rotation_matrix();
        let s2 = self.scale.component_mul(&self.scale);
        r * Matrix3::from_diagonal(&s2) * r.transpose()
    }
}

/// Gradient of a scalar loss with respect to one [`AuxGaussian`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AuxGaussianGrad {
    pub center: Vector3<f64>,
    pub rotation: Vector4<f64>,
    pub scale: Vector3<f64>,
    pub color: Vector3<f64>,
    pub opacity: f64,
}

impl AuxGaussianGrad {
    pub fn is_zero(&self) -> bool {
        *self == Self::default()
    }
}

/// Chain rule through `Sigma = R diag(s^2) R^T` for a unit quaternion `q`.
/// Returns the gradients on `q` (treating `R(q)` as its polynomial form) and on `s`.
pub fn covariance_backward(q: &Vector4<f64>, s: &Vector3<f64>, d_sigma: &Matrix3<f64>) -> (Vector4<f64>, Vector3<f64>) {
    let g = (d_sigma + d_sigma.transpose()) * 0.5;
    let r = quat_to_matrix(q[0], q[1], q[2], q[3]);
    let mut d_s = Vector3::zeros();
    for k in 0..3 {
        let col = r.column(k);
        d_s[k] = 2.0 * s[k] * (col.transpose() * g * col)[(0, 0)];
    }
    let s2 = Matrix3::from_diagonal(&s.component_mul(s));
    let gr = g * r * s2 * 2.0;
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    let gw = 2.0 * (-z * gr[(0, 1)] + y * gr[(0, 2)] + z * gr[(1, 0)] - x * gr[(1, 2)] - y * gr[(2, 0)] + x * gr[(2, 1)]);
    let gx = 2.0
        * (y * gr[(0, 1)] + z * gr[(0, 2)] + y * gr[(1, 0)] - 2.0 * x * gr[(1, 1)] - w * gr[(1, 2)] + z * gr[(2, 0)]
            + w * gr[(2, 1)]
            - 2.0 * x * gr[(2, 2)]);
    let gy = 2.0
        * (-2.0 * y * gr[(0, 0)] + x * gr[(0, 1)] + w * gr[(0, 2)] + x * gr[(1, 0)] + z * gr[(1, 2)] - w * gr[(2, 0)]
            + z * gr[(2, 1)]
            - 2.0 * y * gr[(2, 2)]);
    let gz = 2.0
        * (-2.0 * z * gr[(0, 0)] - w * gr[(0, 1)] + x * gr[(0, 2)] + w * gr[(1, 0)] - 2.0 * z * gr[(1, 1)]
            + y * gr[(1, 2)]
            + x * gr[(2, 0)]
            + y * gr[(2, 1)]);
    (Vector4::new(gw, gx, gy, gz), d_s)
}

/// Forward intermediates of one [`decode`] call.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodeCache {
    input: Vec<f64>,
    pre: [Vec<f64>; 4],
    raw: [Vec<f64>; 4],
}

impl DecodeCache {
    pub fn input(&self) -> &[f64] {
        &self.input
    }
}

/// Accumulated parameter gradients for all four heads.
#[derive(Clone, Debug, PartialEq)]
pub struct NetGrads {
    pub heads: [Vec<f64>; 4],
}

impl NetGrads {
    pub fn zeros(nets: &DecoderNet) -> Self {
        Self { heads: Head::ALL.map(|h| vec![0.0; nets.head(h).num_params()]) }
    }

    pub fn head(&self, h: Head) -> &[f64] {
        &self.heads[h.index()]
    }

    pub fn add(&mut self, other: &NetGrads) {
        for (a, b) in self.heads.iter_mut().zip(&other.heads) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.heads.iter().all(|h| h.iter().all(|&x| x == 0.0))
    }
}

/// Gradients of one anchor's decode with respect to its inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorGrad {
    pub feature: Vec<f64>,
    pub scale: f64,
    /// Camera-center gradient split by the head it flowed through.
    pub cam_center_by_head: [Vector3<f64>; 4],
}

impl AnchorGrad {
    pub fn cam_center(&self) -> Vector3<f64> {
        self.cam_center_by_head.iter().sum()
    }
}

/// Output of [`decode_backward`].
#[derive(Clone, Debug, PartialEq)]
pub struct DecodeGrad {
    pub anchor: AnchorGrad,
    pub nets: NetGrads,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn view_inputs(anchor: &AnchorRef<'_>, cam_center: &Vector3<f64>) -> (Vector3<f64>, f64) {
    let r = cam_center - anchor.center;
    let dist = r.norm();
    let dir = if dist > 0.0 { r / dist } else { Vector3::zeros() };
    (dir, dist)
}

/// Decodes the K auxiliary Gaussians of one anchor.
pub fn decode(anchor: &AnchorRef<'_>, cam_center: &Vector3<f64>, nets: &DecoderNet) -> Vec<AuxGaussian> {
    decode_with_cache(anchor, cam_center, nets).0
}

pub fn decode_with_cache(anchor: &AnchorRef<'_>, cam_center: &Vector3<f64>, nets: &DecoderNet) -> (Vec<AuxGaussian>, DecodeCache) {
    let f = nets.feature_dim;
    debug_assert_eq!(anchor.feature.len(), f);
    let (dir, dist) = view_inputs(anchor, cam_center);
    let mut input = Vec::with_capacity(f + VIEW_INPUTS);
    input.extend_from_slice(anchor.feature);
    input.extend_from_slice(dir.as_slice());
    input.push(dist);
    input.push(anchor.scale);

    let mut pre: [Vec<f64>; 4] = Default::default();
    let mut raw: [Vec<f64>; 4] = Default::default();
    for h in Head::ALL {
        let net = nets.head(h);
        let mut p = vec![0.0; net.hidden()];
        let mut out = vec![0.0; net.outputs()];
        net.forward(&input, &mut p, &mut out);
        pre[h.index()] = p;
        raw[h.index()] = out;
    }

    let ell = anchor.scale;
    let [off, cov, col, opa] = &raw;
    let gaussians = (0..nets.offspring)
        .map(|k| {
            let delta = Vector3::from_fn(|a, _| off[3 * k + a].tanh() * ell);
            let c = &cov[7 * k..7 * k + 7];
            let qr = Vector4::new(c[0], c[1], c[2], c[3]);
            let n = qr.norm();
            let rotation = if n > 0.0 { qr / n } else { Vector4::new(1.0, 0.0, 0.0, 0.0) };
            let scale = Vector3::from_fn(|a, _| (ell * c[4 + a].exp()).clamp(MIN_SCALE, nets.max_scale));
            AuxGaussian {
                center: anchor.center + delta,
                rotation,
                scale,
                color: Vector3::from_fn(|a, _| sigmoid(col[3 * k + a])),
                opacity: ALPHA_MAX * sigmoid(opa[k]),
            }
        })
        .collect();
    (gaussians, DecodeCache { input, pre, raw })
}

/// Reverse-mode gradients of [`decode`], accumulating the network part into
/// `net_grads`.
pub fn decode_backward_into(
    anchor: &AnchorRef<'_>,
    cam_center: &Vector3<f64>,
    nets: &DecoderNet,
    cache: Option<&DecodeCache>,
    upstream: &[AuxGaussianGrad],
    net_grads: &mut NetGrads,
) -> Result<AnchorGrad> {
    let cache = cache.ok_or(Error::MissingCache("decode"))?;
    let k_count = nets.offspring;
    if upstream.len() != k_count || cache.raw[0].len() != 3 * k_count || cache.input.len() != nets.input_dim() {
        return Err(Error::MissingCache("decode cache does not match the network"));
    }
    let f = nets.feature_dim;
    let ell = anchor.scale;
    let [off, cov, col, opa] = &cache.raw;

    let mut d_raw: [Vec<f64>; 4] = Head::ALL.map(|h| vec![0.0; h.width() * k_count]);
    let mut d_ell = 0.0;
    for (k, g) in upstream.iter().enumerate() {
        for a in 0..3 {
            let t = off[3 * k + a].tanh();
            d_raw[0][3 * k + a] = g.center[a] * (1.0 - t * t) * ell;
            d_ell += g.center[a] * t;
        }

        let c = &cov[7 * k..7 * k + 7];
        let qr = Vector4::new(c[0], c[1], c[2], c[3]);
        let n = qr.norm();
        if n > 0.0 {
            let q = qr / n;
            let dq = (g.rotation - q * q.dot(&g.rotation)) / n;
            d_raw[1][7 * k..7 * k + 4].copy_from_slice(dq.as_slice());
        }
        for a in 0..3 {
            let s = ell * c[4 + a].exp();
            if s > MIN_SCALE && s < nets.max_scale {
                d_raw[1][7 * k + 4 + a] = g.scale[a] * s;
                d_ell += g.scale[a] * s / ell;
            }
        }

        for a in 0..3 {
            let s = sigmoid(col[3 * k + a]);
            d_raw[2][3 * k + a] = g.color[a] * s * (1.0 - s);
        }
        let s = sigmoid(opa[k]);
        d_raw[3][k] = g.opacity * ALPHA_MAX * s * (1.0 - s);
    }

    let (dir, dist) = view_inputs(anchor, cam_center);
    let proj = if dist > 0.0 { (Matrix3::identity() - dir * dir.transpose()) / dist } else { Matrix3::zeros() };
    let mut feature = vec![0.0; f];
    let mut cam_center_by_head = [Vector3::zeros(); 4];
    let mut dx = vec![0.0; nets.input_dim()];
    for h in Head::ALL {
        let i = h.index();
        if d_raw[i].iter().all(|&v| v == 0.0) {
            continue;
        }
        nets.head(h).backward(&cache.input, &cache.pre[i], &d_raw[i], &mut net_grads.heads[i], &mut dx);
        feature.iter_mut().zip(&dx[..f]).for_each(|(a, b)| *a += b);
        let d_dir = Vector3::new(dx[f], dx[f + 1], dx[f + 2]);
        cam_center_by_head[i] = proj * d_dir + dir * dx[f + 3];
        d_ell += dx[f + 4];
    }
    Ok(AnchorGrad { feature, scale: d_ell, cam_center_by_head })
}

/// Reverse-mode gradients of [`decode`] with respect to the anchor feature,
/// anchor scale, all network weights and the camera center.
pub fn decode_backward(
    anchor: &AnchorRef<'_>,
    cam_center: &Vector3<f64>,
    nets: &DecoderNet,
    cache: Option<&DecodeCache>,
    upstream: &[AuxGaussianGrad],
) -> Result<DecodeGrad> {
    let mut net_grads = NetGrads::zeros(nets);
    let anchor = decode_backward_into(anchor, cam_center, nets, cache, upstream, &mut net_grads)?;
    Ok(DecodeGrad { anchor, nets: net_grads })
}
