//! Spatial mask decoder: binary subject/object masks in the pooled frame
//! of the pair's union box, and the head that predicts them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{union_box, BBox};
use crate::numeric::losses::bce_value;
use crate::numeric::{BoundParams, Graph, Linear, NumericError, ParamSet, Tensor, Var};

pub const DEFAULT_POOL_SIZE: usize = 7;

/// `[2 x lp x lp]` binary grid; channel 0 is the subject, channel 1 the
/// object. Row index runs along y, column index along x.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskTarget {
    pub lp: usize,
    cells: Vec<u8>,
}

impl MaskTarget {
    pub fn get(&self, channel: usize, row: usize, col: usize) -> u8 {
        self.cells[(channel * self.lp + row) * self.lp + col]
    }

    pub fn channel(&self, channel: usize) -> &[u8] {
        let n = self.lp * self.lp;
        &self.cells[channel * n..(channel + 1) * n]
    }

    pub fn active_cells(&self, channel: usize) -> usize {
        self.channel(channel).iter().filter(|&&c| c == 1).count()
    }

    /// Flat `[2 * lp * lp]` tensor of 0.0/1.0.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::vector(self.cells.iter().map(|&c| f64::from(c)).collect())
    }

    /// `{"lp": n, "subject": [[..]], "object": [[..]]}` integer grids.
    pub fn to_json(&self) -> serde_json::Value {
        let grid = |ch: usize| -> Vec<Vec<u8>> {
            self.channel(ch).chunks(self.lp).map(<[u8]>::to_vec).collect()
        };
        serde_json::json!({ "lp": self.lp, "subject": grid(0), "object": grid(1) })
    }
}

/// Marks the cells of one channel whose centers fall inside `b`, in the
/// `[0, lp)^2` frame of `frame`. Comparisons are cross-multiplied so that
/// inputs exact in binary give scale-independent results:
/// center `(c + 1/2) * w / lp` lies in `[x1, x2)` iff
/// `2 lp x1 <= (2c + 1) w < 2 lp x2`, coordinates relative to the frame.
fn rasterize(b: &BBox, frame: &BBox, lp: usize, out: &mut [u8]) {
    let (w, h) = (frame.width(), frame.height());
    let two_lp = 2.0 * lp as f64;
    let (x1, x2) = (b.x1() - frame.x1(), b.x2() - frame.x1());
    let (y1, y2) = (b.y1() - frame.y1(), b.y2() - frame.y1());
    let cols: Vec<bool> = (0..lp)
        .map(|c| {
            let s = (2 * c + 1) as f64 * w;
            two_lp * x1 <= s && s < two_lp * x2
        })
        .collect();
    let mut any = false;
    for r in 0..lp {
        let s = (2 * r + 1) as f64 * h;
        let row_in = two_lp * y1 <= s && s < two_lp * y2;
        for c in 0..lp {
            let on = row_in && cols[c];
            out[r * lp + c] = u8::from(on);
            any |= on;
        }
    }
    if !any {
        // Box thinner than a cell: mark the cell holding its center.
        let (cx, cy) = b.center();
        let cell = |v: f64, origin: f64, extent: f64| {
            ((((v - origin) / extent) * lp as f64).floor().max(0.0) as usize).min(lp - 1)
        };
        out[cell(cy, frame.y1(), h) * lp + cell(cx, frame.x1(), w)] = 1;
    }
}

pub fn mask_target(subject: &BBox, object: &BBox, lp: usize) -> MaskTarget {
    assert!(lp >= 1, "pool size must be positive");
    let frame = union_box(subject, object);
    let n = lp * lp;
    let mut cells = vec![0u8; 2 * n];
    rasterize(subject, &frame, lp, &mut cells[..n]);
    rasterize(object, &frame, lp, &mut cells[n..]);
    MaskTarget { lp, cells }
}

/// Two-layer perceptron from a relationship feature to `2 * lp^2` logits.
#[derive(Debug, Clone, PartialEq)]
pub struct SmdHead {
    pub lp: usize,
    pub hidden: Linear,
    pub output: Linear,
}

impl SmdHead {
    pub fn init<R: Rng>(
        params: &mut ParamSet,
        name: &str,
        feature_dim: usize,
        hidden_dim: usize,
        lp: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            lp,
            hidden: Linear::init(params, &format!("{name}.0"), feature_dim, hidden_dim, rng),
            output: Linear::init(params, &format!("{name}.1"), hidden_dim, 2 * lp * lp, rng),
        }
    }

    pub fn output_len(&self) -> usize {
        2 * self.lp * self.lp
    }

    /// `features: [b x feature_dim]` to probabilities `[b x 2 lp^2]`.
    pub fn forward(&self, g: &mut Graph, bound: &BoundParams, features: Var) -> Result<Var, NumericError> {
        let h = self.hidden.forward(g, bound, features)?;
        let h = g.relu(h);
        let logits = self.output.forward(g, bound, h)?;
        Ok(g.sigmoid(logits))
    }
}

/// Sigmoid mask probabilities `[2 x lp x lp]` for a single feature vector.
pub fn predict_mask(params: &ParamSet, head: &SmdHead, feature: &Tensor) -> Result<Tensor, NumericError> {
    if feature.len() != head.hidden.in_dim {
        return Err(NumericError::ShapeMismatch {
            op: "predict_mask",
            left: feature.shape().to_vec(),
            right: vec![head.hidden.in_dim],
        });
    }
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let x = g.constant(feature.reshape(&[1, feature.len()])?);
    let p = head.forward(&mut g, &bound, x)?;
    g.value(p).reshape(&[2, head.lp, head.lp])
}

/// Mean BCE over all `2 lp^2` cells.
pub fn mask_loss(predicted: &Tensor, target: &MaskTarget) -> Result<f64, NumericError> {
    let t = target.to_tensor();
    bce_value(&predicted.reshape(&[t.len()])?, &t)
}
