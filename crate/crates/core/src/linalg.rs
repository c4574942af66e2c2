//! Minimal dense linear algebra for the small generator matrices of the
//! consensus dynamics: multiplication, LU solves and a scaling-and-squaring
//! Padé matrix exponential.

/// A square row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        DenseMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "matrix must be square");
            m.data[i * n..(i + 1) * n].copy_from_slice(row);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    #[inline]
    pub fn add_at(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
    }

    pub fn scale(&self, s: f64) -> DenseMatrix {
        DenseMatrix {
            n: self.n,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.n, other.n);
        DenseMatrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.n, other.n);
        DenseMatrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        let n = self.n;
        assert_eq!(n, other.n);
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                let row = &other.data[k * n..(k + 1) * n];
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, &b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(x.len(), n);
        let mut out = vec![0.0; n];
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(n)) {
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
        out
    }

    /// Maximum absolute column sum.
    pub fn one_norm(&self) -> f64 {
        let n = self.n;
        (0..n)
            .map(|j| (0..n).map(|i| self.data[i * n + j].abs()).sum())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

/// Solves `A X = B` for square `A` by LU with partial pivoting.
/// Panics on a numerically singular pivot; the Padé denominators this backs
/// are well conditioned by construction.
fn lu_solve(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let n = a.n;
    assert_eq!(n, b.n);
    let mut lu = a.data.clone();
    let mut x = b.data.clone();
    for col in 0..n {
        let (mut pivot_row, mut pivot) = (col, lu[col * n + col].abs());
        for r in col + 1..n {
            let v = lu[r * n + col].abs();
            if v > pivot {
                pivot_row = r;
                pivot = v;
            }
        }
        assert!(pivot > 0.0, "singular matrix in LU solve");
        if pivot_row != col {
            for j in 0..n {
                lu.swap(col * n + j, pivot_row * n + j);
                x.swap(col * n + j, pivot_row * n + j);
            }
        }
        let diag = lu[col * n + col];
        for r in col + 1..n {
            let factor = lu[r * n + col] / diag;
            if factor == 0.0 {
                continue;
            }
            lu[r * n + col] = 0.0;
            for j in col + 1..n {
                lu[r * n + j] -= factor * lu[col * n + j];
            }
            for j in 0..n {
                x[r * n + j] -= factor * x[col * n + j];
            }
        }
    }
    for col in (0..n).rev() {
        let diag = lu[col * n + col];
        for j in 0..n {
            x[col * n + j] /= diag;
        }
        for r in 0..col {
            let factor = lu[r * n + col];
            if factor == 0.0 {
                continue;
            }
            for j in 0..n {
                x[r * n + j] -= factor * x[col * n + j];
            }
        }
    }
    DenseMatrix { n, data: x }
}

// Backward-error thresholds for the [m/m] Padé approximants of exp.
const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.53939833006323e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068e0;
const THETA_13: f64 = 5.371920351148152e0;

fn pade_coefficients(m: usize) -> &'static [f64] {
    match m {
        3 => &[120.0, 60.0, 12.0, 1.0],
        5 => &[30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0],
        7 => &[
            17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
        ],
        9 => &[
            17643225600.0,
            8821612800.0,
            2075673600.0,
            302702400.0,
            30270240.0,
            2162160.0,
            110880.0,
            3960.0,
            90.0,
            1.0,
        ],
        13 => &[
            64764752532480000.0,
            32382376266240000.0,
            7771770303897600.0,
            1187353796428800.0,
            129060195264000.0,
            10559470521600.0,
            670442572800.0,
            33522128640.0,
            1323241920.0,
            40840800.0,
            960960.0,
            16380.0,
            182.0,
            1.0,
        ],
        _ => unreachable!("unsupported Padé order"),
    }
}

/// `exp(U) / exp(V)` split of the [m/m] Padé approximant for m <= 9.
fn pade_low_order(a: &DenseMatrix, m: usize) -> (DenseMatrix, DenseMatrix) {
    let n = a.dim();
    let b = pade_coefficients(m);
    let a2 = a.matmul(a);
    // Even powers A^0, A^2, A^4, ... as needed.
    let mut powers = vec![DenseMatrix::identity(n), a2];
    while powers.len() <= m / 2 {
        let next = powers.last().unwrap().matmul(&powers[1]);
        powers.push(next);
    }
    let mut u_inner = DenseMatrix::zeros(n);
    let mut v = DenseMatrix::zeros(n);
    for k in 0..=m / 2 {
        u_inner = u_inner.add(&powers[k].scale(b[2 * k + 1]));
        v = v.add(&powers[k].scale(b[2 * k]));
    }
    (a.matmul(&u_inner), v)
}

fn pade_13(a: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let n = a.dim();
    let b = pade_coefficients(13);
    let a2 = a.matmul(a);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);
    let ident = DenseMatrix::identity(n);

    let u_high = a6.matmul(&a6.scale(b[13]).add(&a4.scale(b[11])).add(&a2.scale(b[9])));
    let u_low = a6
        .scale(b[7])
        .add(&a4.scale(b[5]))
        .add(&a2.scale(b[3]))
        .add(&ident.scale(b[1]));
    let u = a.matmul(&u_high.add(&u_low));

    let v_high = a6.matmul(&a6.scale(b[12]).add(&a4.scale(b[10])).add(&a2.scale(b[8])));
    let v = v_high
        .add(&a6.scale(b[6]))
        .add(&a4.scale(b[4]))
        .add(&a2.scale(b[2]))
        .add(&ident.scale(b[0]));
    (u, v)
}

/// Matrix exponential by scaling and squaring with Padé approximants.
pub fn expm(a: &DenseMatrix) -> DenseMatrix {
    let norm = a.one_norm();
    let (u, v, squarings) = if norm <= THETA_3 {
        let (u, v) = pade_low_order(a, 3);
        (u, v, 0)
    } else if norm <= THETA_5 {
        let (u, v) = pade_low_order(a, 5);
        (u, v, 0)
    } else if norm <= THETA_7 {
        let (u, v) = pade_low_order(a, 7);
        (u, v, 0)
    } else if norm <= THETA_9 {
        let (u, v) = pade_low_order(a, 9);
        (u, v, 0)
    } else {
        let squarings = ((norm / THETA_13).log2().ceil() as i32).max(0);
        let scaled = a.scale(0.5f64.powi(squarings));
        let (u, v) = pade_13(&scaled);
        (u, v, squarings)
    };
    let mut result = lu_solve(&v.sub(&u), &v.add(&u));
    for _ in 0..squarings {
        result = result.matmul(&result);
    }
    result
}
