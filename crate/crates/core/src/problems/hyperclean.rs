use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BilevelProblem, SecondOrder, Smoothness};
use crate::error::{BdaError, Result};
use crate::numerics::{rng_stream, BoxRegion, RealMatrix, RealVector};

/// Radius of the lower-level box `Y = [−R, R]ᵐ`.
const PARAM_RADIUS: f64 = 100.0;

fn default_mean_scale() -> f64 {
    1.5
}

/// Synthetic data-hyper-cleaning setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypercleanConfig {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub n_train: usize,
    pub n_val: usize,
    /// Defaults to `n_val`.
    #[serde(default)]
    pub n_test: Option<usize>,
    pub corruption_fraction: f64,
    pub seed: u64,
    /// Ridge coefficient on the upper-level (validation) loss.
    #[serde(default)]
    pub ridge: f64,
    /// Standard deviation of the class means around the origin.
    #[serde(default = "default_mean_scale")]
    pub mean_scale: f64,
}

impl Default for HypercleanConfig {
    fn default() -> Self {
        HypercleanConfig {
            num_classes: 3,
            feature_dim: 5,
            n_train: 120,
            n_val: 120,
            n_test: None,
            corruption_fraction: 0.5,
            seed: 0,
            ridge: 0.0,
            mean_scale: default_mean_scale(),
        }
    }
}

impl HypercleanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(BdaError::Contract("need at least two classes".into()));
        }
        if self.feature_dim == 0 || self.n_train == 0 || self.n_val == 0 || self.n_test == Some(0) {
            return Err(BdaError::Contract("dimensions and split sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.corruption_fraction) {
            return Err(BdaError::Contract(format!("corruption fraction {} outside [0, 1)", self.corruption_fraction)));
        }
        if !(self.ridge >= 0.0) || !(self.mean_scale > 0.0) {
            return Err(BdaError::Contract("ridge must be ≥ 0 and mean_scale > 0".into()));
        }
        Ok(())
    }
}

/// One labelled split. Features are stored augmented with a trailing 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub features: RealMatrix,
    pub labels: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Generated data with the ground-truth corruption mask.
#[derive(Debug, Clone, PartialEq)]
pub struct HypercleanData {
    pub num_classes: usize,
    pub train: Split,
    pub val: Split,
    pub test: Split,
    /// `corrupted[i]` is true when training label `i` was reassigned.
    pub corrupted: Vec<bool>,
}

impl HypercleanData {
    pub fn generate(cfg: &HypercleanConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng_stream(cfg.seed);
        let d = cfg.feature_dim;
        let means: Vec<RealVector> = (0..cfg.num_classes).map(|_| rng.normal_vector(d) * cfg.mean_scale).collect();
        let mut draw = |count: usize| -> Split {
            let mut features = RealMatrix::zeros(count, d + 1);
            let mut labels = Vec::with_capacity(count);
            for i in 0..count {
                let c = rng.index(cfg.num_classes);
                for j in 0..d {
                    features[(i, j)] = means[c][j] + rng.normal();
                }
                features[(i, d)] = 1.0;
                labels.push(c);
            }
            Split { features, labels }
        };
        let mut train = draw(cfg.n_train);
        let val = draw(cfg.n_val);
        let test = draw(cfg.n_test.unwrap_or(cfg.n_val));
        for (name, split) in [("train", &train), ("val", &val)] {
            for c in 0..cfg.num_classes {
                if !split.labels.contains(&c) {
                    return Err(BdaError::Contract(format!("degenerate data: class {c} has no {name} samples")));
                }
            }
        }

        let n_bad = (cfg.corruption_fraction * cfg.n_train as f64).floor() as usize;
        let mut order: Vec<usize> = (0..cfg.n_train).collect();
        for i in 0..n_bad {
            let j = i + rng.index(cfg.n_train - i);
            order.swap(i, j);
        }
        let mut corrupted = vec![false; cfg.n_train];
        for &i in &order[..n_bad] {
            let shift = 1 + rng.index(cfg.num_classes - 1);
            train.labels[i] = (train.labels[i] + shift) % cfg.num_classes;
            corrupted[i] = true;
        }
        Ok(HypercleanData { num_classes: cfg.num_classes, train, val, test, corrupted })
    }

    pub fn feature_dim(&self) -> usize {
        self.train.features.ncols() - 1
    }

    /// CSV dump: `split,index,label,corrupted_flag,feature_0..feature_{d−1}`.
    pub fn to_csv(&self) -> String {
        let d = self.feature_dim();
        let mut out = String::from("split,index,label,corrupted_flag");
        for j in 0..d {
            let _ = write!(out, ",feature_{j}");
        }
        out.push('\n');
        for (name, split) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for i in 0..split.len() {
                let flag = name == "train" && self.corrupted[i];
                let _ = write!(out, "{name},{i},{},{}", split.labels[i], u8::from(flag));
                for j in 0..d {
                    let _ = write!(out, ",{:.16e}", split.features[(i, j)]);
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::harness::write_atomic(path, self.to_csv().as_bytes())
    }

    pub fn from_csv(text: &str, num_classes: usize) -> Result<Self> {
        let bad = |msg: String| BdaError::Config(format!("dataset csv: {msg}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let d = header.split(',').filter(|h| h.starts_with("feature_")).count();
        let mut rows: [Vec<(usize, bool, Vec<f64>)>; 3] = Default::default();
        for (ln, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 4 + d {
                return Err(bad(format!("line {} has {} cells", ln + 2, cells.len())));
            }
            let slot = match cells[0] {
                "train" => 0,
                "val" => 1,
                "test" => 2,
                other => return Err(bad(format!("unknown split {other}"))),
            };
            let label: usize = cells[2].parse().map_err(|e| bad(format!("label: {e}")))?;
            let flag = cells[3] == "1";
            let feats = cells[4..]
                .iter()
                .map(|c| c.parse::<f64>().map_err(|e| bad(format!("feature: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            rows[slot].push((label, flag, feats));
        }
        let build = |rows: &[(usize, bool, Vec<f64>)]| Split {
            features: RealMatrix::from_fn(rows.len(), d + 1, |i, j| if j == d { 1.0 } else { rows[i].2[j] }),
            labels: rows.iter().map(|r| r.0).collect(),
        };
        Ok(HypercleanData {
            num_classes,
            corrupted: rows[0].iter().map(|r| r.1).collect(),
            train: build(&rows[0]),
            val: build(&rows[1]),
            test: build(&rows[2]),
        })
    }
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Sample-weighted softmax regression:
///
/// ```text
/// f(x, y) = Σ_train σ(x_i) ℓ(y; u_i, v_i)
/// F(x, y) = Σ_val ℓ(y; u_i, v_i) + ½·ridge·‖y‖²
/// ```
///
/// `x` holds one weight logit per training sample; `y` holds the weights and
/// bias of a single linear layer, class-major: `y[c·(d+1) + j]`, `j = d` is
/// the bias.
#[derive(Debug, Clone)]
pub struct Hypercleaning {
    data: HypercleanData,
    ridge: f64,
    region_x: BoxRegion,
    region_y: BoxRegion,
    lower_lipschitz: f64,
    upper_lipschitz: f64,
}

/// Softmax probabilities and loss of one sample.
struct SampleEval {
    probs: Vec<f64>,
    loss: f64,
}

impl Hypercleaning {
    pub fn new(cfg: &HypercleanConfig) -> Result<Self> {
        let data = HypercleanData::generate(cfg)?;
        Self::from_data(data, cfg.ridge)
    }

    pub fn from_data(data: HypercleanData, ridge: f64) -> Result<Self> {
        let m = data.num_classes * data.train.features.ncols();
        // The softmax Hessian is bounded by ½I, so ∇²ℓ-sums are bounded by
        // ½·λ_max(ŨᵀŨ) for the augmented feature matrix Ũ.
        let gram_bound = |s: &Split| 0.5 * s.features.tr_mul(&s.features).symmetric_eigenvalues().max();
        Ok(Hypercleaning {
            lower_lipschitz: gram_bound(&data.train),
            upper_lipschitz: gram_bound(&data.val) + ridge,
            region_x: BoxRegion::unbounded(data.train.len()),
            region_y: BoxRegion::cube(m, -PARAM_RADIUS, PARAM_RADIUS)?,
            data,
            ridge,
        })
    }

    pub fn data(&self) -> &HypercleanData {
        &self.data
    }

    fn width(&self) -> usize {
        self.data.train.features.ncols()
    }

    fn eval_sample(&self, y: &RealVector, split: &Split, i: usize) -> SampleEval {
        let w = self.width();
        let u = split.features.row(i);
        let logits: Vec<f64> = (0..self.data.num_classes).map(|c| u.transpose().dot(&y.rows(c * w, w))).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        let lse = max + sum.ln();
        SampleEval { probs: logits.iter().map(|l| (l - lse).exp()).collect(), loss: lse - logits[split.labels[i]] }
    }

    /// Adds `scale · ∇_y ℓ_i` into `out`.
    fn add_sample_grad(&self, out: &mut RealVector, split: &Split, i: usize, ev: &SampleEval, scale: f64) {
        let w = self.width();
        let u = split.features.row(i);
        for c in 0..self.data.num_classes {
            let r = ev.probs[c] - if c == split.labels[i] { 1.0 } else { 0.0 };
            let mut block = out.rows_mut(c * w, w);
            block.axpy(scale * r, &u.transpose(), 1.0);
        }
    }

    fn sample_grad_dot(&self, v: &RealVector, split: &Split, i: usize, ev: &SampleEval) -> f64 {
        let w = self.width();
        let u = split.features.row(i);
        (0..self.data.num_classes)
            .map(|c| {
                let r = ev.probs[c] - if c == split.labels[i] { 1.0 } else { 0.0 };
                r * u.transpose().dot(&v.rows(c * w, w))
            })
            .sum()
    }

    /// Adds `scale · ∇²_y ℓ_i · v` into `out`.
    fn add_sample_hvp(
        &self,
        out: &mut RealVector,
        v: &RealVector,
        split: &Split,
        i: usize,
        ev: &SampleEval,
        scale: f64,
    ) {
        let w = self.width();
        let u = split.features.row(i);
        let proj: Vec<f64> = (0..self.data.num_classes).map(|c| u.transpose().dot(&v.rows(c * w, w))).collect();
        let mean: f64 = ev.probs.iter().zip(&proj).map(|(p, q)| p * q).sum();
        for (c, (p, q)) in ev.probs.iter().zip(&proj).enumerate() {
            let coef = p * (q - mean);
            out.rows_mut(c * w, w).axpy(scale * coef, &u.transpose(), 1.0);
        }
    }

    fn add_sample_hess(&self, out: &mut RealMatrix, split: &Split, i: usize, ev: &SampleEval, scale: f64) {
        let w = self.width();
        let u = split.features.row(i).transpose();
        let uu = &u * u.transpose();
        for a in 0..self.data.num_classes {
            for b in 0..self.data.num_classes {
                let delta = if a == b { ev.probs[a] } else { 0.0 };
                let coef = scale * (delta - ev.probs[a] * ev.probs[b]);
                if coef != 0.0 {
                    let mut blk = out.view_mut((a * w, b * w), (w, w));
                    blk += &uu * coef;
                }
            }
        }
    }

    /// Weighted training loss and its gradient in `y`.
    pub fn weighted_loss_grad(&self, weights: &[f64], y: &RealVector) -> (f64, RealVector) {
        let mut g = RealVector::zeros(y.len());
        let mut loss = 0.0;
        for (i, &wt) in weights.iter().enumerate() {
            let ev = self.eval_sample(y, &self.data.train, i);
            loss += wt * ev.loss;
            self.add_sample_grad(&mut g, &self.data.train, i, &ev, wt);
        }
        (loss, g)
    }

    pub fn per_sample_train_loss(&self, y: &RealVector) -> Vec<f64> {
        (0..self.data.train.len()).map(|i| self.eval_sample(y, &self.data.train, i).loss).collect()
    }

    pub fn accuracy(&self, y: &RealVector, split: &Split) -> f64 {
        let correct = (0..split.len())
            .filter(|&i| {
                let ev = self.eval_sample(y, split, i);
                let pred = ev
                    .probs
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (c, &p)| if p > best.1 { (c, p) } else { best })
                    .0;
                pred == split.labels[i]
            })
            .count();
        correct as f64 / split.len() as f64
    }

    fn weights(&self, x: &RealVector) -> Vec<f64> {
        x.iter().map(|&t| sigmoid(t)).collect()
    }

    fn weight_slopes(&self, x: &RealVector) -> Vec<f64> {
        x.iter()
            .map(|&t| {
                let s = sigmoid(t);
                s * (1.0 - s)
            })
            .collect()
    }
}

impl BilevelProblem for Hypercleaning {
    fn name(&self) -> &str {
        "hyperclean"
    }
    fn dim_x(&self) -> usize {
        self.data.train.len()
    }
    fn dim_y(&self) -> usize {
        self.data.num_classes * self.width()
    }
    fn region_x(&self) -> &BoxRegion {
        &self.region_x
    }
    fn region_y(&self) -> &BoxRegion {
        &self.region_y
    }

    fn upper(&self, _x: &RealVector, y: &RealVector) -> f64 {
        let loss: f64 = (0..self.data.val.len()).map(|i| self.eval_sample(y, &self.data.val, i).loss).sum();
        loss + 0.5 * self.ridge * y.norm_squared()
    }

    fn lower(&self, x: &RealVector, y: &RealVector) -> f64 {
        self.weighted_loss_grad(&self.weights(x), y).0
    }

    fn grad_x_upper(&self, x: &RealVector, _y: &RealVector) -> RealVector {
        RealVector::zeros(x.len())
    }

    fn grad_y_upper(&self, _x: &RealVector, y: &RealVector) -> RealVector {
        let mut g = y * self.ridge;
        for i in 0..self.data.val.len() {
            let ev = self.eval_sample(y, &self.data.val, i);
            self.add_sample_grad(&mut g, &self.data.val, i, &ev, 1.0);
        }
        g
    }

    fn grad_x_lower(&self, x: &RealVector, y: &RealVector) -> RealVector {
        let slopes = self.weight_slopes(x);
        let losses = self.per_sample_train_loss(y);
        RealVector::from_iterator(x.len(), slopes.iter().zip(&losses).map(|(s, l)| s * l))
    }

    fn grad_y_lower(&self, x: &RealVector, y: &RealVector) -> RealVector {
        self.weighted_loss_grad(&self.weights(x), y).1
    }

    fn second_order(&self) -> SecondOrder {
        SecondOrder { lower: true, upper: true }
    }

    fn hess_yy_lower(&self, x: &RealVector, y: &RealVector) -> Option<RealMatrix> {
        let m = self.dim_y();
        let mut h = RealMatrix::zeros(m, m);
        for (i, wt) in self.weights(x).into_iter().enumerate() {
            let ev = self.eval_sample(y, &self.data.train, i);
            self.add_sample_hess(&mut h, &self.data.train, i, &ev, wt);
        }
        Some(h)
    }

    fn hess_yx_lower(&self, x: &RealVector, y: &RealVector) -> Option<RealMatrix> {
        let mut h = RealMatrix::zeros(self.dim_y(), self.dim_x());
        for (i, slope) in self.weight_slopes(x).into_iter().enumerate() {
            let ev = self.eval_sample(y, &self.data.train, i);
            let mut col = RealVector::zeros(self.dim_y());
            self.add_sample_grad(&mut col, &self.data.train, i, &ev, slope);
            h.set_column(i, &col);
        }
        Some(h)
    }

    fn hess_yy_upper(&self, _x: &RealVector, y: &RealVector) -> Option<RealMatrix> {
        let m = self.dim_y();
        let mut h = RealMatrix::identity(m, m) * self.ridge;
        for i in 0..self.data.val.len() {
            let ev = self.eval_sample(y, &self.data.val, i);
            self.add_sample_hess(&mut h, &self.data.val, i, &ev, 1.0);
        }
        Some(h)
    }

    fn hess_yx_upper(&self, _x: &RealVector, _y: &RealVector) -> Option<RealMatrix> {
        Some(RealMatrix::zeros(self.dim_y(), self.dim_x()))
    }

    fn hvp_yy_lower(&self, x: &RealVector, y: &RealVector, v: &RealVector) -> Option<RealVector> {
        let mut out = RealVector::zeros(self.dim_y());
        for (i, wt) in self.weights(x).into_iter().enumerate() {
            let ev = self.eval_sample(y, &self.data.train, i);
            self.add_sample_hvp(&mut out, v, &self.data.train, i, &ev, wt);
        }
        Some(out)
    }

    fn hvp_xy_lower(&self, x: &RealVector, y: &RealVector, v: &RealVector) -> Option<RealVector> {
        let slopes = self.weight_slopes(x);
        Some(RealVector::from_fn(self.dim_x(), |i, _| {
            let ev = self.eval_sample(y, &self.data.train, i);
            slopes[i] * self.sample_grad_dot(v, &self.data.train, i, &ev)
        }))
    }

    fn hvp_yy_upper(&self, _x: &RealVector, y: &RealVector, v: &RealVector) -> Option<RealVector> {
        let mut out = v * self.ridge;
        for i in 0..self.data.val.len() {
            let ev = self.eval_sample(y, &self.data.val, i);
            self.add_sample_hvp(&mut out, v, &self.data.val, i, &ev, 1.0);
        }
        Some(out)
    }

    fn hvp_xy_upper(&self, x: &RealVector, _y: &RealVector, _v: &RealVector) -> Option<RealVector> {
        Some(RealVector::zeros(x.len()))
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness {
            upper_lipschitz: Some(self.upper_lipschitz),
            lower_lipschitz: Some(self.lower_lipschitz),
            lower_strong_convexity: None,
        }
    }

    fn upper_lower_bound(&self) -> Option<f64> {
        Some(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::testing::{assert_gradients_match, assert_hessians_match};

    fn small(corruption: f64) -> HypercleanConfig {
        HypercleanConfig {
            num_classes: 3,
            feature_dim: 2,
            n_train: 30,
            n_val: 30,
            corruption_fraction: corruption,
            seed: 4,
            ..Default::default()
        }
    }

    #[test]
    fn dimensions() {
        let p = Hypercleaning::new(&small(0.2)).unwrap();
        assert_eq!(p.dim_x(), 30);
        assert_eq!(p.dim_y(), 2 * 3 + 3);
        assert!(p.region_x().is_whole_space());
        assert!(p.region_y().is_compact());
    }

    #[test]
    fn corruption_count_and_labels() {
        let data = HypercleanData::generate(&small(0.5)).unwrap();
        assert_eq!(data.corrupted.iter().filter(|&&c| c).count(), 15);
        let clean = HypercleanData::generate(&small(0.0)).unwrap();
        for i in 0..30 {
            if data.corrupted[i] {
                assert_ne!(data.train.labels[i], clean.train.labels[i]);
            } else {
                assert_eq!(data.train.labels[i], clean.train.labels[i]);
            }
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(HypercleanConfig { corruption_fraction: 1.0, ..small(0.0) }.validate().is_err());
        assert!(HypercleanConfig { n_train: 0, ..small(0.0) }.validate().is_err());
        let degenerate = HypercleanConfig { num_classes: 40, n_train: 5, ..small(0.0) };
        assert!(matches!(HypercleanData::generate(&degenerate), Err(BdaError::Contract(_))));
    }

    #[test]
    fn saturated_weights_give_unweighted_loss() {
        let p = Hypercleaning::new(&small(0.0)).unwrap();
        let y = rng_stream(3).normal_vector(p.dim_y());
        let x = RealVector::from_element(30, 40.0);
        let plain: f64 = p.per_sample_train_loss(&y).iter().sum();
        assert!((p.lower(&x, &y) - plain).abs() <= 1e-12 * plain.abs());
    }

    #[test]
    fn masking_corrupted_gives_clean_subset_loss() {
        let p = Hypercleaning::new(&small(0.4)).unwrap();
        let y = rng_stream(5).normal_vector(p.dim_y());
        let corrupted = &p.data().corrupted;
        let x = RealVector::from_fn(30, |i, _| if corrupted[i] { -1000.0 } else { 40.0 });
        let clean: f64 = p.per_sample_train_loss(&y).iter().zip(corrupted).filter(|(_, &c)| !c).map(|(l, _)| l).sum();
        assert!((p.lower(&x, &y) - clean).abs() <= 1e-12 * clean.abs());
    }

    #[test]
    fn weight_gradient_is_sigmoid_slope_times_loss() {
        let p = Hypercleaning::new(&small(0.3)).unwrap();
        let mut rng = rng_stream(6);
        let x = rng.normal_vector(30);
        let y = rng.normal_vector(p.dim_y());
        let g = p.grad_x_lower(&x, &y);
        let losses = p.per_sample_train_loss(&y);
        for i in 0..30 {
            let s = sigmoid(x[i]);
            assert!((g[i] - s * (1.0 - s) * losses[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let cfg = HypercleanConfig { n_train: 10, n_val: 12, ridge: 0.3, ..small(0.25) };
        let p = Hypercleaning::new(&cfg).unwrap();
        let mut rng = rng_stream(12);
        for _ in 0..4 {
            let x = rng.normal_vector(p.dim_x());
            let y = rng.normal_vector(p.dim_y()) * 0.5;
            assert_gradients_match(&p, &x, &y);
            assert_hessians_match(&p, &x, &y);
        }
    }

    #[test]
    fn matrix_free_products_match_matrices() {
        let p = Hypercleaning::new(&HypercleanConfig { ridge: 0.1, ..small(0.3) }).unwrap();
        let mut rng = rng_stream(13);
        let x = rng.normal_vector(p.dim_x());
        let y = rng.normal_vector(p.dim_y());
        let v = rng.normal_vector(p.dim_y());
        let hyy = p.hess_yy_lower(&x, &y).unwrap() * &v;
        let hxy = p.hess_yx_lower(&x, &y).unwrap().tr_mul(&v);
        let uyy = p.hess_yy_upper(&x, &y).unwrap() * &v;
        assert!((hyy - p.hvp_yy_lower(&x, &y, &v).unwrap()).norm() < 1e-10);
        assert!((hxy - p.hvp_xy_lower(&x, &y, &v).unwrap()).norm() < 1e-10);
        assert!((uyy - p.hvp_yy_upper(&x, &y, &v).unwrap()).norm() < 1e-10);
    }

    #[test]
    fn declared_lipschitz_bounds_hessians() {
        let p = Hypercleaning::new(&small(0.3)).unwrap();
        let sm = p.smoothness();
        let mut rng = rng_stream(21);
        for _ in 0..5 {
            let x = rng.normal_vector(p.dim_x()) * 3.0;
            let y = rng.normal_vector(p.dim_y());
            let lower = p.hess_yy_lower(&x, &y).unwrap().symmetric_eigenvalues().max();
            let upper = p.hess_yy_upper(&x, &y).unwrap().symmetric_eigenvalues().max();
            assert!(lower <= sm.lower_lipschitz.unwrap());
            assert!(upper <= sm.upper_lipschitz.unwrap());
        }
    }

    #[test]
    fn csv_round_trip() {
        let data = HypercleanData::generate(&small(0.5)).unwrap();
        let back = HypercleanData::from_csv(&data.to_csv(), 3).unwrap();
        assert_eq!(back, data);
    }
}
