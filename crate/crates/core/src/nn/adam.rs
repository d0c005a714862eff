//! Adam optimizer over a flat parameter list.

use crate::nn::Parameter;

pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    // first/second moments per parameter, keyed by position
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &[Parameter], lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.tensor.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.tensor.numel()]).collect(),
        }
    }

    /// One update. Frozen parameters and parameters without a gradient are
    /// skipped but keep their moment slots.
    pub fn step(&mut self, params: &[Parameter]) {
        assert_eq!(params.len(), self.m.len(), "parameter list changed size");
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, p) in params.iter().enumerate() {
            if p.frozen {
                continue;
            }
            let Some(grad) = p.tensor.grad() else { continue };
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            p.tensor.update_data(|data| {
                for j in 0..data.len() {
                    let g = grad[j];
                    m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                    v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                    let mh = m[j] / bc1;
                    let vh = v[j] / bc2;
                    data[j] -= self.lr * mh / (vh.sqrt() + self.eps);
                }
            });
        }
    }

    pub fn zero_grad(&self, params: &[Parameter]) {
        for p in params {
            p.tensor.zero_grad();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::Tensor;

    fn param(vals: Vec<f64>) -> Parameter {
        let n = vals.len();
        Parameter {
            tensor: Tensor::leaf(vals, &[n]),
            name: "p".into(),
            frozen: false,
        }
    }

    #[test]
    fn first_step_moves_by_lr_signed() {
        // with bias correction, the very first Adam step is ~lr * sign(g)
        let p = param(vec![1.0, -2.0]);
        p.tensor.accum_grad(&[0.5, -0.25]);
        let params = vec![p];
        let mut opt = Adam::new(&params, 0.1);
        opt.step(&params);
        let d = params[0].tensor.to_vec();
        assert!((d[0] - (1.0 - 0.1)).abs() < 1e-6, "{}", d[0]);
        assert!((d[1] - (-2.0 + 0.1)).abs() < 1e-6, "{}", d[1]);
    }

    #[test]
    fn frozen_param_untouched() {
        let mut p = param(vec![3.0]);
        p.frozen = true;
        p.tensor.accum_grad(&[1.0]);
        let params = vec![p];
        let mut opt = Adam::new(&params, 0.1);
        opt.step(&params);
        assert_eq!(params[0].tensor.to_vec(), vec![3.0]);
    }

    #[test]
    fn converges_on_quadratic() {
        // minimize (x - 4)^2
        let params = vec![param(vec![0.0])];
        let mut opt = Adam::new(&params, 0.2);
        for _ in 0..400 {
            opt.zero_grad(&params);
            let x = params[0].tensor.to_vec()[0];
            params[0].tensor.accum_grad(&[2.0 * (x - 4.0)]);
            opt.step(&params);
        }
        let x = params[0].tensor.to_vec()[0];
        assert!((x - 4.0).abs() < 1e-2, "{x}");
    }
}
