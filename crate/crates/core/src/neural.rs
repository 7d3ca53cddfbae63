//! Fully connected Q-network with hand-written backpropagation and Adam.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::NeuralError;
use crate::rng::{stream, Stream};

const CHECKPOINT_MAGIC: &[u8; 8] = b"MECMLP\0\0";
const CHECKPOINT_VERSION: u32 = 1;

/// Multilayer perceptron: tanh hidden layers, identity output.
///
/// `weights[l]` has shape `(dims[l], dims[l + 1])` so a batch forward is `x.dot(w) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Same layout as the parameters of the network they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Adam moments and counters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    m: Gradients,
    v: Gradients,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

fn check_dims(dims: &[usize]) -> Result<(), NeuralError> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(NeuralError::InvalidDims(dims.to_vec()));
    }
    Ok(())
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self, NeuralError> {
        check_dims(dims)?;
        let mut rng = stream(seed, Stream::AgentInit);
        let weights = dims
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Array2::from_shape_simple_fn((w[0], w[1]), || rng.gen_range(-limit..limit))
            })
            .collect();
        Ok(Self { dims: dims.to_vec(), weights, biases: dims[1..].iter().map(|&n| Array1::zeros(n)).collect() })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self, NeuralError> {
        check_dims(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            weights: dims.windows(2).map(|w| Array2::zeros((w[0], w[1]))).collect(),
            biases: dims[1..].iter().map(|&n| Array1::zeros(n)).collect(),
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("at least two dims")
    }

    pub fn param_count(&self) -> usize {
        self.dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn check_input(&self, inputs: &ArrayView2<f64>) -> Result<(), NeuralError> {
        if inputs.ncols() != self.input_dim() {
            return Err(NeuralError::ShapeMismatch(format!(
                "input width {} but network expects {}",
                inputs.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Activations of every layer, input included.
    fn activations(&self, inputs: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let last = self.weights.len() - 1;
        let mut acts = Vec::with_capacity(self.weights.len() + 1);
        acts.push(inputs.to_owned());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = acts[l].dot(w) + b;
            if l < last {
                z.mapv_inplace(f64::tanh);
            }
            acts.push(z);
        }
        acts
    }

    /// Q-values for a batch laid out one sample per row.
    pub fn forward(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>, NeuralError> {
        self.check_input(&inputs)?;
        Ok(self.activations(inputs).pop().expect("output layer"))
    }

    pub fn forward_one(&self, input: &[f64]) -> Result<Vec<f64>, NeuralError> {
        let view = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| NeuralError::ShapeMismatch(e.to_string()))?;
        Ok(self.forward(view)?.into_raw_vec_and_offset().0)
    }

    /// Gradient of the mean squared error between the taken-action outputs and
    /// fixed targets. Returns the gradients and the loss itself.
    pub fn backward(
        &self,
        inputs: ArrayView2<f64>,
        actions: &[usize],
        targets: &[f64],
    ) -> Result<(Gradients, f64), NeuralError> {
        self.check_input(&inputs)?;
        let batch = inputs.nrows();
        if batch == 0 || actions.len() != batch || targets.len() != batch {
            return Err(NeuralError::ShapeMismatch(format!(
                "batch {batch}, {} actions, {} targets",
                actions.len(),
                targets.len()
            )));
        }
        if let Some(&a) = actions.iter().find(|&&a| a >= self.output_dim()) {
            return Err(NeuralError::ShapeMismatch(format!("action {a} out of {} outputs", self.output_dim())));
        }
        let acts = self.activations(inputs);
        let out = acts.last().expect("output layer");
        let mut delta = Array2::<f64>::zeros(out.raw_dim());
        let mut loss = 0.0;
        for (b, (&a, &y)) in actions.iter().zip(targets).enumerate() {
            let err = out[[b, a]] - y;
            loss += err * err;
            delta[[b, a]] = 2.0 * err / batch as f64;
        }
        loss /= batch as f64;

        let layers = self.weights.len();
        let mut gw = Vec::with_capacity(layers);
        let mut gb = Vec::with_capacity(layers);
        for l in (0..layers).rev() {
            gw.push(acts[l].t().dot(&delta));
            gb.push(delta.sum_axis(Axis(0)));
            if l > 0 {
                let mut back = delta.dot(&self.weights[l].t());
                back.zip_mut_with(&acts[l], |d, &a| *d *= 1.0 - a * a);
                delta = back;
            }
        }
        gw.reverse();
        gb.reverse();
        Ok((Gradients { weights: gw, biases: gb }, loss))
    }

    /// All parameters flattened: per layer, weights row-major then biases.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<(), NeuralError> {
        if params.len() != self.param_count() {
            return Err(NeuralError::ShapeMismatch(format!(
                "{} params for a network of {}",
                params.len(),
                self.param_count()
            )));
        }
        let mut it = params.iter().copied();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.iter_mut().chain(b.iter_mut()).for_each(|p| *p = it.next().expect("length checked"));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|x| x.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    /// Writes dims and raw parameters; reading them back is bit-exact.
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<(), NeuralError> {
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&(self.dims.len() as u32).to_le_bytes())?;
        for &d in &self.dims {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        for p in self.flat_params() {
            out.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Self, NeuralError> {
        let bad = |msg: &str| NeuralError::Checkpoint(msg.to_string());
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("not a network checkpoint"));
        }
        let version = read_u32(&mut input).map_err(|_| bad("truncated header"))?;
        if version != CHECKPOINT_VERSION {
            return Err(NeuralError::Checkpoint(format!("unsupported version {version}")));
        }
        let n = read_u32(&mut input).map_err(|_| bad("truncated header"))? as usize;
        if !(2..=64).contains(&n) {
            return Err(bad("implausible layer count"));
        }
        let mut dims = Vec::with_capacity(n);
        for _ in 0..n {
            let mut buf = [0u8; 8];
            input.read_exact(&mut buf).map_err(|_| bad("truncated dims"))?;
            let d = u64::from_le_bytes(buf);
            if d == 0 || d > 1 << 20 {
                return Err(bad("implausible layer width"));
            }
            dims.push(d as usize);
        }
        let mut mlp = Self::zeros(&dims)?;
        let mut params = Vec::with_capacity(mlp.param_count());
        let mut buf = [0u8; 8];
        for _ in 0..mlp.param_count() {
            input.read_exact(&mut buf).map_err(|_| bad("truncated parameters"))?;
            params.push(f64::from_le_bytes(buf));
        }
        if input.read(&mut buf)? != 0 {
            return Err(bad("trailing bytes"));
        }
        mlp.set_flat_params(&params)?;
        if !mlp.is_finite() {
            return Err(bad("non-finite parameters"));
        }
        Ok(mlp)
    }
}

fn read_u32<R: Read>(input: &mut R) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

impl Gradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            weights: mlp.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: mlp.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|x| x.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|x| x.is_finite()))
    }
}

impl OptimizerState {
    pub fn new(mlp: &Mlp, learning_rate: f64) -> Self {
        Self {
            m: Gradients::zeros_like(mlp),
            v: Gradients::zeros_like(mlp),
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam step.
pub fn apply_update(
    mlp: &mut Mlp,
    opt: &mut OptimizerState,
    grads: &Gradients,
    learning_rate: f64,
) -> Result<(), NeuralError> {
    if grads.weights.len() != mlp.weights.len()
        || grads.weights.iter().zip(&mlp.weights).any(|(g, w)| g.dim() != w.dim())
        || grads.biases.iter().zip(&mlp.biases).any(|(g, b)| g.dim() != b.dim())
    {
        return Err(NeuralError::ShapeMismatch("gradient layout differs from network".into()));
    }
    if !grads.is_finite() {
        return Err(NeuralError::NonFiniteGradient);
    }
    opt.step += 1;
    opt.learning_rate = learning_rate;
    let (b1, b2, eps) = (opt.beta1, opt.beta2, opt.epsilon);
    let c1 = 1.0 - b1.powi(opt.step as i32);
    let c2 = 1.0 - b2.powi(opt.step as i32);
    let adam = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        *p -= learning_rate * (*m / c1) / ((*v / c2).sqrt() + eps);
    };
    for l in 0..mlp.weights.len() {
        ndarray::Zip::from(&mut mlp.weights[l])
            .and(&grads.weights[l])
            .and(&mut opt.m.weights[l])
            .and(&mut opt.v.weights[l])
            .for_each(|p, &g, m, v| adam(p, g, m, v));
        ndarray::Zip::from(&mut mlp.biases[l])
            .and(&grads.biases[l])
            .and(&mut opt.m.biases[l])
            .and(&mut opt.v.biases[l])
            .for_each(|p, &g, m, v| adam(p, g, m, v));
    }
    if !mlp.is_finite() {
        return Err(NeuralError::NonFiniteGradient);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::{array, Array2};

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = Mlp::new(&[4, 200, 200, 3], 1).unwrap();
        assert_eq!(a, Mlp::new(&[4, 200, 200, 3], 1).unwrap());
        assert_ne!(a, Mlp::new(&[4, 200, 200, 3], 2).unwrap());
        let limit = (6.0f64 / 204.0).sqrt();
        assert!(a.weights[0].iter().all(|w| w.abs() <= limit));
        assert!(a.biases.iter().all(|b| b.iter().all(|&x| x == 0.0)));
        assert_eq!(a.param_count(), 41_803);
    }

    #[test]
    fn rejects_bad_dims() {
        assert!(Mlp::new(&[4], 0).is_err());
        assert!(Mlp::new(&[4, 0, 2], 0).is_err());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mlp = Mlp::zeros(&[3, 5, 2]).unwrap();
        let out = mlp.forward(array![[1.0, -2.0, 3.0], [0.5, 0.5, 0.5]].view()).unwrap();
        assert!(out.iter().all(|&q| q == 0.0));
    }

    #[test]
    fn batch_matches_single() {
        let mlp = Mlp::new(&[3, 8, 8, 2], 4).unwrap();
        let batch = array![[0.1, 0.2, 0.3], [0.9, -0.4, 0.0]];
        let out = mlp.forward(batch.view()).unwrap();
        let one = mlp.forward_one(&[0.9, -0.4, 0.0]).unwrap();
        assert_eq!(out.row(1).to_vec(), one);
        // zero input sees only biases, so doubling it changes nothing
        let z = mlp.forward_one(&[0.0; 3]).unwrap();
        assert_eq!(z, mlp.forward_one(&[0.0 * 2.0; 3]).unwrap());
        assert!(mlp.forward_one(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn toy_network_matches_closed_form() {
        // 1-2-1: y = v1 tanh(w1 x + b1) + v2 tanh(w2 x + b2) + c
        let mut mlp = Mlp::zeros(&[1, 2, 1]).unwrap();
        mlp.weights[0] = array![[0.5, -1.5]];
        mlp.biases[0] = array![0.1, 0.2];
        mlp.weights[1] = array![[2.0], [0.75]];
        mlp.biases[1] = array![-0.3];
        let x = 0.8;
        let want = 2.0 * (0.5 * x + 0.1f64).tanh() + 0.75 * (-1.5 * x + 0.2f64).tanh() - 0.3;
        assert_relative_eq!(mlp.forward_one(&[x]).unwrap()[0], want, max_relative = 1e-14);
    }

    #[test]
    fn gradient_vanishes_at_targets() {
        let mlp = Mlp::new(&[3, 6, 6, 2], 8).unwrap();
        let x = array![[0.3, -0.1, 0.7], [0.0, 0.4, -0.9]];
        let q = mlp.forward(x.view()).unwrap();
        let (g, loss) = mlp.backward(x.view(), &[1, 0], &[q[[0, 1]], q[[1, 0]]]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicated_sample_has_single_sample_gradient() {
        let mlp = Mlp::new(&[3, 6, 6, 2], 8).unwrap();
        let one = array![[0.3, -0.1, 0.7]];
        let two = array![[0.3, -0.1, 0.7], [0.3, -0.1, 0.7]];
        let (g1, l1) = mlp.backward(one.view(), &[1], &[0.5]).unwrap();
        let (g2, l2) = mlp.backward(two.view(), &[1, 1], &[0.5, 0.5]).unwrap();
        assert_relative_eq!(l1, l2, max_relative = 1e-14);
        for (a, b) in g1.flat().iter().zip(g2.flat()) {
            assert_relative_eq!(*a, b, max_relative = 1e-12, epsilon = 1e-15);
        }
    }

    #[test]
    fn non_taken_outputs_get_no_gradient() {
        let mlp = Mlp::new(&[2, 4, 3], 2).unwrap();
        let (g, _) = mlp.backward(array![[0.5, -0.5]].view(), &[2], &[1.0]).unwrap();
        let last = g.weights.last().unwrap();
        assert!(last.column(0).iter().chain(last.column(1).iter()).all(|&v| v == 0.0));
        assert_eq!(g.biases.last().unwrap()[0], 0.0);
        assert_ne!(g.biases.last().unwrap()[2], 0.0);
    }

    #[test]
    fn adam_first_step() {
        let mut mlp = Mlp::zeros(&[1, 1]).unwrap();
        let mut opt = OptimizerState::new(&mlp, 0.1);
        let mut g = Gradients::zeros_like(&mlp);
        g.weights[0][[0, 0]] = 1.0;
        apply_update(&mut mlp, &mut opt, &g, 0.1).unwrap();
        assert_relative_eq!(mlp.weights[0][[0, 0]], -0.1, max_relative = 1e-6);
        assert_eq!(mlp.biases[0][0], 0.0);
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut mlp = Mlp::new(&[3, 4, 2], 3).unwrap();
        let before = mlp.clone();
        let mut opt = OptimizerState::new(&mlp, 1e-3);
        apply_update(&mut mlp, &mut opt, &Gradients::zeros_like(&before), 1e-3).unwrap();
        assert_eq!(mlp, before);
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let mut mlp = Mlp::new(&[2, 2], 3).unwrap();
        let mut opt = OptimizerState::new(&mlp, 1e-3);
        let mut g = Gradients::zeros_like(&mlp);
        g.biases[0][1] = f64::NAN;
        assert!(matches!(apply_update(&mut mlp, &mut opt, &g, 1e-3), Err(NeuralError::NonFiniteGradient)));
        assert_eq!(opt.step, 0);
    }

    #[test]
    fn loss_decreases_on_fixed_batch() {
        let mut mlp = Mlp::new(&[2, 16, 16, 2], 5).unwrap();
        let mut opt = OptimizerState::new(&mlp, 1e-3);
        let x: Array2<f64> = array![[0.1, 0.9], [0.8, 0.2], [0.5, 0.5], [0.0, 0.3]];
        let acts = [0, 1, 0, 1];
        let ys = [3.0, -2.5, 1.5, 2.75];
        let mut prev = f64::INFINITY;
        for _ in 0..200 {
            let (g, loss) = mlp.backward(x.view(), &acts, &ys).unwrap();
            assert!(loss < prev, "loss went from {prev} to {loss}");
            prev = loss;
            apply_update(&mut mlp, &mut opt, &g, 1e-3).unwrap();
        }
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mlp = Mlp::new(&[5, 7, 3], 11).unwrap();
        let mut buf = Vec::new();
        mlp.write_checkpoint(&mut buf).unwrap();
        assert_eq!(Mlp::read_checkpoint(buf.as_slice()).unwrap(), mlp);
        assert!(Mlp::read_checkpoint(&buf[..buf.len() - 3]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(Mlp::read_checkpoint(extra.as_slice()).is_err());
        assert!(Mlp::read_checkpoint(&b"garbage!"[..]).is_err());
    }
}
