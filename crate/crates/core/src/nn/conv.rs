use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Array5, ArrayView2};
use rand_chacha::ChaCha8Rng;

use super::{join, kaiming_bound, Param, Parameterized};

/// 3D convolution over `(N, C, T, H, W)` via im2col and GEMM.
///
/// Spatial padding is zero; temporal padding replicates the edge frames so a
/// clip that is constant in time produces features constant in time.
#[derive(Clone, Debug)]
pub struct Conv3d {
    pub weight: Param,
    pub bias: Option<Param>,
    cin: usize,
    cout: usize,
    kernel: [usize; 3],
    stride: [usize; 3],
    pad: [usize; 3],
    input: Option<Array5<f64>>,
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    n: usize,
    t: usize,
    h: usize,
    w: usize,
    ot: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn positions(&self) -> usize {
        self.ot * self.oh * self.ow
    }
}

impl Conv3d {
    pub fn new(
        cin: usize,
        cout: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
        pad: [usize; 3],
        bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = cin * kernel.iter().product::<usize>();
        let bound = kaiming_bound(fan_in);
        let weight = Param::uniform(&[cout, cin, kernel[0], kernel[1], kernel[2]], bound, rng);
        let bias = bias.then(|| Param::zeros(&[cout]));
        Self { weight, bias, cin, cout, kernel, stride, pad, input: None }
    }

    /// 2D convolution expressed as a 3D one with a unit temporal kernel.
    pub fn new_2d(cin: usize, cout: usize, k: usize, stride: usize, pad: usize, bias: bool, rng: &mut ChaCha8Rng) -> Self {
        Self::new(cin, cout, [1, k, k], [1, stride, stride], [0, pad, pad], bias, rng)
    }

    pub fn out_channels(&self) -> usize {
        self.cout
    }

    pub fn kernel(&self) -> [usize; 3] {
        self.kernel
    }

    pub fn stride(&self) -> [usize; 3] {
        self.stride
    }

    pub fn padding(&self) -> [usize; 3] {
        self.pad
    }

    /// Output extent along one axis.
    pub fn out_len(&self, axis: usize, len: usize) -> usize {
        (len + 2 * self.pad[axis] - self.kernel[axis]) / self.stride[axis] + 1
    }

    fn geometry(&self, x: &Array5<f64>) -> Geometry {
        let (n, c, t, h, w) = x.dim();
        assert_eq!(c, self.cin, "conv input channels");
        assert!(
            t + 2 * self.pad[0] >= self.kernel[0]
                && h + 2 * self.pad[1] >= self.kernel[1]
                && w + 2 * self.pad[2] >= self.kernel[2],
            "conv input smaller than kernel"
        );
        Geometry { n, t, h, w, ot: self.out_len(0, t), oh: self.out_len(1, h), ow: self.out_len(2, w) }
    }

    fn k(&self) -> usize {
        self.cin * self.kernel.iter().product::<usize>()
    }

    fn im2col(&self, x: &[f64], g: &Geometry) -> Array2<f64> {
        let [kt, kh, kw] = self.kernel;
        let [st, sh, sw] = self.stride;
        let [pt, ph, pw] = self.pad;
        let p = g.positions();
        let cols_n = g.n * p;
        let mut cols = vec![0.0; self.k() * cols_n];
        let in_frame = g.h * g.w;
        let in_chan = g.t * in_frame;
        let in_sample = self.cin * in_chan;
        for ci in 0..self.cin {
            for dt in 0..kt {
                for dy in 0..kh {
                    for dx in 0..kw {
                        let row = ((ci * kt + dt) * kh + dy) * kw + dx;
                        let row_base = row * cols_n;
                        for n in 0..g.n {
                            let base_in = n * in_sample + ci * in_chan;
                            let base_col = row_base + n * p;
                            for ot in 0..g.ot {
                                let it = (ot * st + dt) as isize - pt as isize;
                                let it = it.clamp(0, g.t as isize - 1) as usize;
                                for oy in 0..g.oh {
                                    let iy = (oy * sh + dy) as isize - ph as isize;
                                    if iy < 0 || iy >= g.h as isize {
                                        continue;
                                    }
                                    let src = base_in + it * in_frame + iy as usize * g.w;
                                    let dst = base_col + (ot * g.oh + oy) * g.ow;
                                    for ox in 0..g.ow {
                                        let ix = (ox * sw + dx) as isize - pw as isize;
                                        if ix >= 0 && ix < g.w as isize {
                                            cols[dst + ox] = x[src + ix as usize];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Array2::from_shape_vec((self.k(), cols_n), cols).expect("im2col shape")
    }

    fn col2im(&self, cols: &Array2<f64>, g: &Geometry) -> Array5<f64> {
        let [kt, kh, kw] = self.kernel;
        let [st, sh, sw] = self.stride;
        let [pt, ph, pw] = self.pad;
        let p = g.positions();
        let cols_n = g.n * p;
        let cols = cols.as_slice().expect("standard layout");
        let mut dx_buf = vec![0.0; g.n * self.cin * g.t * g.h * g.w];
        let in_frame = g.h * g.w;
        let in_chan = g.t * in_frame;
        let in_sample = self.cin * in_chan;
        for ci in 0..self.cin {
            for dt in 0..kt {
                for dy in 0..kh {
                    for dx in 0..kw {
                        let row = ((ci * kt + dt) * kh + dy) * kw + dx;
                        let row_base = row * cols_n;
                        for n in 0..g.n {
                            let base_in = n * in_sample + ci * in_chan;
                            let base_col = row_base + n * p;
                            for ot in 0..g.ot {
                                let it = (ot * st + dt) as isize - pt as isize;
                                let it = it.clamp(0, g.t as isize - 1) as usize;
                                for oy in 0..g.oh {
                                    let iy = (oy * sh + dy) as isize - ph as isize;
                                    if iy < 0 || iy >= g.h as isize {
                                        continue;
                                    }
                                    let dst = base_in + it * in_frame + iy as usize * g.w;
                                    let src = base_col + (ot * g.oh + oy) * g.ow;
                                    for ox in 0..g.ow {
                                        let ix = (ox * sw + dx) as isize - pw as isize;
                                        if ix >= 0 && ix < g.w as isize {
                                            dx_buf[dst + ix as usize] += cols[src + ox];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Array5::from_shape_vec((g.n, self.cin, g.t, g.h, g.w), dx_buf).expect("col2im shape")
    }

    fn weight_matrix(&self) -> ArrayView2<'_, f64> {
        self.weight.value.view().into_shape_with_order((self.cout, self.k())).expect("weight reshape")
    }

    pub fn forward(&mut self, x: &Array5<f64>) -> Array5<f64> {
        let x = x.as_standard_layout().into_owned();
        let g = self.geometry(&x);
        let cols = self.im2col(x.as_slice().expect("standard layout"), &g);
        let p = g.positions();
        let mut y = Array2::<f64>::zeros((self.cout, g.n * p));
        general_mat_mul(1.0, &self.weight_matrix(), &cols, 0.0, &mut y);
        let y = y.as_slice().expect("standard layout");
        let mut out = vec![0.0; g.n * self.cout * p];
        for co in 0..self.cout {
            let b = self.bias.as_ref().map_or(0.0, |b| b.value[co]);
            for n in 0..g.n {
                let src = &y[co * g.n * p + n * p..co * g.n * p + (n + 1) * p];
                let dst = &mut out[(n * self.cout + co) * p..(n * self.cout + co + 1) * p];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = s + b;
                }
            }
        }
        self.input = Some(x);
        Array5::from_shape_vec((g.n, self.cout, g.ot, g.oh, g.ow), out).expect("conv output shape")
    }

    pub fn backward(&mut self, dy: &Array5<f64>) -> Array5<f64> {
        let x = self.input.take().expect("conv backward before forward");
        let g = self.geometry(&x);
        let p = g.positions();
        let dy = dy.as_standard_layout();
        let dys = dy.as_slice().expect("standard layout");
        // (N, Cout, P) -> (Cout, N*P)
        let mut dy2 = vec![0.0; self.cout * g.n * p];
        for n in 0..g.n {
            for co in 0..self.cout {
                let src = &dys[(n * self.cout + co) * p..(n * self.cout + co + 1) * p];
                dy2[co * g.n * p + n * p..co * g.n * p + (n + 1) * p].copy_from_slice(src);
            }
        }
        let dy2 = Array2::from_shape_vec((self.cout, g.n * p), dy2).expect("dy reshape");
        if let Some(b) = self.bias.as_mut() {
            for co in 0..self.cout {
                b.grad[co] += dy2.row(co).sum();
            }
        }
        let cols = self.im2col(x.as_slice().expect("standard layout"), &g);
        {
            let k = self.k();
            let mut gw = self.weight.grad.view_mut().into_shape_with_order((self.cout, k)).expect("grad reshape");
            general_mat_mul(1.0, &dy2, &cols.t(), 1.0, &mut gw);
        }
        let mut dcols = Array2::<f64>::zeros((self.k(), g.n * p));
        general_mat_mul(1.0, &self.weight_matrix().t(), &dy2, 0.0, &mut dcols);
        self.input = Some(x);
        self.col2im(&dcols, &g)
    }

    pub fn clear_cache(&mut self) {
        self.input = None;
    }
}

impl Parameterized for Conv3d {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "weight"), &mut self.weight);
        if let Some(b) = self.bias.as_mut() {
            f(&join(prefix, "bias"), b);
        }
    }
}
