use ndarray::Array5;

/// Max pooling over `(N, C, T, H, W)` with implicit `-inf` padding.
#[derive(Clone, Debug)]
pub struct MaxPool3d {
    kernel: [usize; 3],
    stride: [usize; 3],
    pad: [usize; 3],
    argmax: Vec<usize>,
    in_dims: (usize, usize, usize, usize, usize),
}

impl MaxPool3d {
    pub fn new(kernel: [usize; 3], stride: [usize; 3], pad: [usize; 3]) -> Self {
        Self { kernel, stride, pad, argmax: Vec::new(), in_dims: (0, 0, 0, 0, 0) }
    }

    pub fn out_len(&self, axis: usize, len: usize) -> usize {
        (len + 2 * self.pad[axis] - self.kernel[axis]) / self.stride[axis] + 1
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

    pub fn forward(&mut self, x: &Array5<f64>) -> Array5<f64> {
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let (n, c, t, h, w) = x.dim();
        let (ot, oh, ow) = (self.out_len(0, t), self.out_len(1, h), self.out_len(2, w));
        let mut out = Vec::with_capacity(n * c * ot * oh * ow);
        self.argmax.clear();
        for plane in 0..n * c {
            let base = plane * t * h * w;
            for a in 0..ot {
                for yy in 0..oh {
                    for xx in 0..ow {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = usize::MAX;
                        for dt in 0..self.kernel[0] {
                            let it = (a * self.stride[0] + dt) as isize - self.pad[0] as isize;
                            if it < 0 || it >= t as isize {
                                continue;
                            }
                            for dy in 0..self.kernel[1] {
                                let iy = (yy * self.stride[1] + dy) as isize - self.pad[1] as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for dx in 0..self.kernel[2] {
                                    let ix = (xx * self.stride[2] + dx) as isize - self.pad[2] as isize;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    let idx = base + (it as usize * h + iy as usize) * w + ix as usize;
                                    if xs[idx] > best || best_idx == usize::MAX {
                                        best = xs[idx];
                                        best_idx = idx;
                                    }
                                }
                            }
                        }
                        out.push(best);
                        self.argmax.push(best_idx);
                    }
                }
            }
        }
        self.in_dims = (n, c, t, h, w);
        Array5::from_shape_vec((n, c, ot, oh, ow), out).expect("pool shape")
    }

    pub fn backward(&mut self, dy: &Array5<f64>) -> Array5<f64> {
        let dy = dy.as_standard_layout();
        let (n, c, t, h, w) = self.in_dims;
        let mut dx = vec![0.0; n * c * t * h * w];
        for (g, &idx) in dy.iter().zip(&self.argmax) {
            dx[idx] += g;
        }
        Array5::from_shape_vec(self.in_dims, dx).expect("pool shape")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_window_maximum_and_routes_gradient() {
        let mut p = MaxPool3d::new([1, 2, 2], [1, 2, 2], [0, 0, 0]);
        let x = Array5::from_shape_vec((1, 1, 1, 2, 4), vec![1.0, 5.0, 2.0, 0.0, 3.0, 4.0, 9.0, -1.0]).unwrap();
        let y = p.forward(&x);
        assert_eq!(y.iter().copied().collect::<Vec<_>>(), vec![5.0, 9.0]);
        let dx = p.backward(&Array5::from_elem((1, 1, 1, 1, 2), 1.0));
        assert_eq!(dx.iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn padded_output_size() {
        let p = MaxPool3d::new([1, 3, 3], [1, 2, 2], [0, 1, 1]);
        assert_eq!(p.out_len(1, 16), 8);
        assert_eq!(p.out_len(1, 56), 28);
    }
}
