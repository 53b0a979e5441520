use ndarray::{s, Array1, Array2, Array3, Axis, Ix1, Ix2};
use rand_chacha::ChaCha8Rng;

use super::{join, sigmoid, Param, Parameterized};

/// Single-direction GRU over `(B, T, F)` with gate order reset, update, new.
///
/// `h' = (1 - z) * n + z * h`, `n = tanh(W_in x + b_in + r * (W_hn h + b_hn))`.
#[derive(Clone, Debug)]
pub struct Gru {
    pub w_ih: Param,
    pub w_hh: Param,
    pub b_ih: Param,
    pub b_hh: Param,
    hidden: usize,
    reverse: bool,
    steps: Vec<Step>,
}

#[derive(Clone, Debug)]
struct Step {
    x: Array2<f64>,
    h_prev: Array2<f64>,
    r: Array2<f64>,
    z: Array2<f64>,
    n: Array2<f64>,
    hn: Array2<f64>,
}

impl Gru {
    pub fn new(input: usize, hidden: usize, reverse: bool, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            w_ih: Param::uniform(&[3 * hidden, input], bound, rng),
            w_hh: Param::uniform(&[3 * hidden, hidden], bound, rng),
            b_ih: Param::uniform(&[3 * hidden], bound, rng),
            b_hh: Param::uniform(&[3 * hidden], bound, rng),
            hidden,
            reverse,
            steps: Vec::new(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    fn order(&self, t: usize) -> Vec<usize> {
        if self.reverse {
            (0..t).rev().collect()
        } else {
            (0..t).collect()
        }
    }

    pub fn forward(&mut self, x: &Array3<f64>) -> Array3<f64> {
        let (b, t, _) = x.dim();
        let hd = self.hidden;
        let w_ih = self.w_ih.value.view().into_dimensionality::<Ix2>().expect("2d");
        let w_hh = self.w_hh.value.view().into_dimensionality::<Ix2>().expect("2d");
        let b_ih = self.b_ih.value.view().into_dimensionality::<Ix1>().expect("1d");
        let b_hh = self.b_hh.value.view().into_dimensionality::<Ix1>().expect("1d");
        let mut out = Array3::zeros((b, t, hd));
        let mut h = Array2::<f64>::zeros((b, hd));
        self.steps.clear();
        for ti in self.order(t) {
            let xt = x.index_axis(Axis(1), ti).to_owned();
            let gx = xt.dot(&w_ih.t()) + &b_ih;
            let gh = h.dot(&w_hh.t()) + &b_hh;
            let r = (&gx.slice(s![.., 0..hd]) + &gh.slice(s![.., 0..hd])).mapv(sigmoid);
            let z = (&gx.slice(s![.., hd..2 * hd]) + &gh.slice(s![.., hd..2 * hd])).mapv(sigmoid);
            let hn = gh.slice(s![.., 2 * hd..]).to_owned();
            let n = (&gx.slice(s![.., 2 * hd..]) + &(&r * &hn)).mapv(f64::tanh);
            let h_new = &n + &(&z * &(&h - &n));
            out.index_axis_mut(Axis(1), ti).assign(&h_new);
            self.steps.push(Step { x: xt, h_prev: h, r, z, n, hn });
            h = h_new;
        }
        out
    }

    pub fn backward(&mut self, dy: &Array3<f64>) -> Array3<f64> {
        let (b, t, _) = dy.dim();
        let hd = self.hidden;
        let input = self.w_ih.value.shape()[1];
        let mut dx = Array3::zeros((b, t, input));
        let mut dh_next = Array2::<f64>::zeros((b, hd));
        let mut gw_ih = Array2::<f64>::zeros((3 * hd, input));
        let mut gw_hh = Array2::<f64>::zeros((3 * hd, hd));
        let mut gb_ih = Array1::<f64>::zeros(3 * hd);
        let mut gb_hh = Array1::<f64>::zeros(3 * hd);
        let w_ih = self.w_ih.value.view().into_dimensionality::<Ix2>().expect("2d");
        let w_hh = self.w_hh.value.view().into_dimensionality::<Ix2>().expect("2d");
        let order = self.order(t);
        for (k, &ti) in order.iter().enumerate().rev() {
            let st = &self.steps[k];
            let dh = &dy.index_axis(Axis(1), ti) + &dh_next;
            let dn = &dh * &st.z.mapv(|z| 1.0 - z);
            let dz = &dh * &(&st.h_prev - &st.n);
            let mut dh_prev = &dh * &st.z;
            let da_n = &dn * &st.n.mapv(|n| 1.0 - n * n);
            let dr = &da_n * &st.hn;
            let dhn = &da_n * &st.r;
            let da_r = &dr * &st.r.mapv(|r| r * (1.0 - r));
            let da_z = &dz * &st.z.mapv(|z| z * (1.0 - z));
            let mut dgx = Array2::<f64>::zeros((b, 3 * hd));
            dgx.slice_mut(s![.., 0..hd]).assign(&da_r);
            dgx.slice_mut(s![.., hd..2 * hd]).assign(&da_z);
            dgx.slice_mut(s![.., 2 * hd..]).assign(&da_n);
            let mut dgh = dgx.clone();
            dgh.slice_mut(s![.., 2 * hd..]).assign(&dhn);
            gw_ih += &dgx.t().dot(&st.x);
            gw_hh += &dgh.t().dot(&st.h_prev);
            gb_ih += &dgx.sum_axis(Axis(0));
            gb_hh += &dgh.sum_axis(Axis(0));
            dx.index_axis_mut(Axis(1), ti).assign(&dgx.dot(&w_ih));
            dh_prev += &dgh.dot(&w_hh);
            dh_next = dh_prev;
        }
        add_into(&mut self.w_ih, gw_ih.into_dyn());
        add_into(&mut self.w_hh, gw_hh.into_dyn());
        add_into(&mut self.b_ih, gb_ih.into_dyn());
        add_into(&mut self.b_hh, gb_hh.into_dyn());
        dx
    }
}

fn add_into(p: &mut Param, g: ndarray::ArrayD<f64>) {
    p.grad += &g;
}

impl Parameterized for Gru {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "weight_ih"), &mut self.w_ih);
        f(&join(prefix, "weight_hh"), &mut self.w_hh);
        f(&join(prefix, "bias_ih"), &mut self.b_ih);
        f(&join(prefix, "bias_hh"), &mut self.b_hh);
    }
}

/// Stacked bidirectional GRU; each layer concatenates forward and reverse
/// outputs into `(B, T, 2H)`.
#[derive(Clone, Debug)]
pub struct BiGru {
    layers: Vec<(Gru, Gru)>,
}

impl BiGru {
    pub fn new(input: usize, hidden: usize, layers: usize, rng: &mut ChaCha8Rng) -> Self {
        let layers = (0..layers)
            .map(|i| {
                let inp = if i == 0 { input } else { 2 * hidden };
                (Gru::new(inp, hidden, false, rng), Gru::new(inp, hidden, true, rng))
            })
            .collect();
        Self { layers }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn out_features(&self) -> usize {
        2 * self.layers[0].0.hidden()
    }

    pub fn forward(&mut self, x: &Array3<f64>) -> Array3<f64> {
        let mut cur = x.clone();
        for (fw, bw) in &mut self.layers {
            let a = fw.forward(&cur);
            let b = bw.forward(&cur);
            cur = ndarray::concatenate(Axis(2), &[a.view(), b.view()]).expect("concat directions").as_standard_layout().into_owned();
        }
        cur
    }

    pub fn backward(&mut self, dy: &Array3<f64>) -> Array3<f64> {
        let mut grad = dy.clone();
        for (fw, bw) in self.layers.iter_mut().rev() {
            let hd = fw.hidden();
            let ga = grad.slice(s![.., .., 0..hd]).to_owned();
            let gb = grad.slice(s![.., .., hd..]).to_owned();
            grad = fw.backward(&ga) + bw.backward(&gb);
        }
        grad
    }
}

impl Parameterized for BiGru {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        for (i, (fw, bw)) in self.layers.iter_mut().enumerate() {
            fw.visit(&join(prefix, &format!("l{i}.fwd")), f);
            bw.visit(&join(prefix, &format!("l{i}.rev")), f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn bigru_input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut net = BiGru::new(3, 4, 2, &mut rng);
        let x = Array3::from_shape_fn((2, 4, 3), |(a, b, c)| ((a * 12 + b * 3 + c) as f64 * 0.37).sin());
        let w = Array3::from_shape_fn((2, 4, 8), |(a, b, c)| ((a + 2 * b + 3 * c) as f64 * 0.11).cos());
        let loss = |net: &mut BiGru, x: &Array3<f64>| (net.forward(x) * &w).sum();
        loss(&mut net, &x);
        let dx = net.backward(&w);
        let h = 1e-6;
        for idx in [[0, 0, 0], [1, 3, 2], [0, 2, 1]] {
            let mut xp = x.clone();
            xp[idx] += h;
            let mut xm = x.clone();
            xm[idx] -= h;
            let num = (loss(&mut net, &xp) - loss(&mut net, &xm)) / (2.0 * h);
            assert!((num - dx[idx]).abs() < 1e-7, "{num} vs {}", dx[idx]);
        }
    }

    #[test]
    fn reverse_direction_reads_sequence_backwards() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut fw = Gru::new(1, 2, false, &mut rng);
        let mut bw = fw.clone();
        bw.reverse = true;
        let x = Array3::from_shape_vec((1, 3, 1), vec![0.1, -0.5, 0.9]).unwrap();
        let xr = Array3::from_shape_vec((1, 3, 1), vec![0.9, -0.5, 0.1]).unwrap();
        let a = fw.forward(&xr);
        let b = bw.forward(&x);
        for t in 0..3 {
            for k in 0..2 {
                assert!((a[[0, t, k]] - b[[0, 2 - t, k]]).abs() < 1e-15);
            }
        }
    }
}
