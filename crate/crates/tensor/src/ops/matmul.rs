use crate::gemm::{gemm, MatRef};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

fn dims2(shape: &[usize], what: &str) -> (usize, usize) {
    assert_eq!(shape.len(), 2, "{what} must be 2-D, got {shape:?}");
    (shape[0], shape[1])
}

impl Graph {
    /// `[M, K] @ [K, N]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = dims2(self.shape(a), "matmul lhs");
        let (k2, n) = dims2(self.shape(b), "matmul rhs");
        assert_eq!(k, k2, "matmul inner dimensions {k} and {k2}");
        let mut out = vec![0.0; m * n];
        gemm(
            1.0,
            MatRef::new(self.value(a).data(), m, k),
            MatRef::new(self.value(b).data(), k, n),
            0.0,
            &mut out,
        );
        self.custom(&[a, b], Tensor::new(&[m, n], out), move |args| {
            let g = MatRef::new(args.grad.data(), m, n);
            let mut ga = vec![0.0; m * k];
            gemm(1.0, g, MatRef::new(args.inputs[1].data(), k, n).t(), 0.0, &mut ga);
            let mut gb = vec![0.0; k * n];
            gemm(1.0, MatRef::new(args.inputs[0].data(), m, k).t(), g, 0.0, &mut gb);
            vec![Some(Tensor::new(&[m, k], ga)), Some(Tensor::new(&[k, n], gb))]
        })
    }

    /// `[M, K] @ [N, K]^T`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = dims2(self.shape(a), "matmul_nt lhs");
        let (n, k2) = dims2(self.shape(b), "matmul_nt rhs");
        assert_eq!(k, k2, "matmul_nt inner dimensions {k} and {k2}");
        let mut out = vec![0.0; m * n];
        gemm(
            1.0,
            MatRef::new(self.value(a).data(), m, k),
            MatRef::new(self.value(b).data(), n, k).t(),
            0.0,
            &mut out,
        );
        self.custom(&[a, b], Tensor::new(&[m, n], out), move |args| {
            let g = MatRef::new(args.grad.data(), m, n);
            let mut ga = vec![0.0; m * k];
            gemm(1.0, g, MatRef::new(args.inputs[1].data(), n, k), 0.0, &mut ga);
            let mut gb = vec![0.0; n * k];
            gemm(1.0, g.t(), MatRef::new(args.inputs[0].data(), m, k), 0.0, &mut gb);
            vec![Some(Tensor::new(&[m, k], ga)), Some(Tensor::new(&[n, k], gb))]
        })
    }

    /// Affine map over the last axis: `x @ weight^T + bias`, with `weight`
    /// of shape `[out, in]`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Option<Var>) -> Var {
        let shape = self.shape(x).to_vec();
        let inp = *shape.last().expect("linear on a scalar");
        let (out_dim, in_dim) = dims2(self.shape(weight), "linear weight");
        assert_eq!(inp, in_dim, "linear expects {in_dim} input features, got {inp}");
        let rows = shape[..shape.len() - 1].iter().product();
        let flat = self.reshape(x, &[rows, inp]);
        let mut y = self.matmul_nt(flat, weight);
        if let Some(b) = bias {
            y = self.add_bias(y, b, 1);
        }
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = out_dim;
        self.reshape(y, &out_shape)
    }
}
