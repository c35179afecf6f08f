//! Construction of the F(6x6, 3x3) transform matrices by the Cook-Toom
//! method over the interpolation points {0, 1, -1, 2, -2, 1/2, -1/2, inf}.
//!
//! The three matrices realize the bilinear form
//!     y = A^T [ (G g) (.) (B^T d) ]        (1-D, 6 outputs)
//!     Y = A^T [ (G g G^T) (.) (B^T d B) ] A  (2-D, 6x6 outputs)
//! where (.) is the elementwise product, d is an 8(x8) data tile and g a
//! 3(x3) filter. A is the 8x6 evaluation matrix of degree-5 polynomials at
//! the points, G the 8x3 evaluation matrix of degree-2 polynomials, and B
//! the inverse of the degree-7 evaluation matrix, so that B^T interpolates.
//! All entries are computed in exact rational arithmetic and rounded once
//! to f64.

/// Exact rational on i128. The 8x8 inversion below stays far from overflow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Fraction {
    num: i128,
    den: i128, // > 0
}

impl Fraction {
    pub(crate) const ZERO: Fraction = Fraction { num: 0, den: 1 };
    pub(crate) const ONE: Fraction = Fraction { num: 1, den: 1 };

    pub(crate) fn new(num: i128, den: i128) -> Self {
        assert!(den != 0);
        Self { num, den }.reduced()
    }

    fn reduced(self) -> Self {
        let g = gcd(self.num.unsigned_abs(), self.den.unsigned_abs()) as i128;
        let sign = if self.den < 0 { -1 } else { 1 };
        Self { num: sign * self.num / g, den: sign * self.den / g }
    }

    #[cfg(test)]
    fn add(self, o: Self) -> Self {
        Self::new(self.num * o.den + o.num * self.den, self.den * o.den)
    }

    fn sub(self, o: Self) -> Self {
        Self::new(self.num * o.den - o.num * self.den, self.den * o.den)
    }

    fn mul(self, o: Self) -> Self {
        Self::new(self.num * o.num, self.den * o.den)
    }

    fn div(self, o: Self) -> Self {
        assert!(o.num != 0, "division by zero fraction");
        Self::new(self.num * o.den, self.den * o.num)
    }

    fn is_zero(self) -> bool {
        self.num == 0
    }

    pub(crate) fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    if a == 0 {
        return b.max(1);
    }
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.max(1)
}

/// The interpolation points: 7 finite values; the 8th point is infinity,
/// handled as the leading-coefficient row.
const POINTS: [(i128, i128); 7] = [(0, 1), (1, 1), (-1, 1), (2, 1), (-2, 1), (1, 2), (-1, 2)];

const N: usize = 8; // tile size = m + r - 1
const M: usize = 6; // output tile
const R: usize = 3; // filter taps

/// Invert an NxN rational matrix by Gauss-Jordan elimination with partial
/// pivoting on exact values.
fn invert(mut a: [[Fraction; N]; N]) -> [[Fraction; N]; N] {
    let mut inv = [[Fraction::ZERO; N]; N];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = Fraction::ONE;
    }
    for col in 0..N {
        let pivot = (col..N).find(|&r| !a[r][col].is_zero()).expect("singular matrix");
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col];
        for j in 0..N {
            a[col][j] = a[col][j].div(p);
            inv[col][j] = inv[col][j].div(p);
        }
        for r in 0..N {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let f = a[r][col];
            for j in 0..N {
                a[r][j] = a[r][j].sub(f.mul(a[col][j]));
                inv[r][j] = inv[r][j].sub(f.mul(inv[col][j]));
            }
        }
    }
    inv
}

/// The F(6x6, 3x3) transform matrices in f64 with f32 working copies.
#[derive(Debug, Clone)]
pub struct WinogradMatrices {
    /// 8x8 data transform; used as B^T d B.
    pub b: [[f64; 8]; 8],
    /// 8x3 filter transform; used as G g G^T.
    pub g: [[f64; 3]; 8],
    /// 8x6 output transform; used as A^T m A.
    pub a: [[f64; 6]; 8],
    pub b_f32: [[f32; 8]; 8],
    pub g_f32: [[f32; 3]; 8],
    pub a_f32: [[f32; 6]; 8],
}

/// Closed-form Cook-Toom construction over the fixed points.
pub fn build_winograd_matrices() -> WinogradMatrices {
    // Evaluation rows: [alpha^0 .. alpha^(k-1)]; infinity row selects the
    // leading coefficient.
    let pow = |p: (i128, i128), e: usize| -> Fraction {
        let mut acc = Fraction::ONE;
        for _ in 0..e {
            acc = acc.mul(Fraction::new(p.0, p.1));
        }
        acc
    };

    // A: 8x6 evaluation of degree-5 polynomials.
    let mut a = [[Fraction::ZERO; M]; N];
    for (i, &p) in POINTS.iter().enumerate() {
        for (j, slot) in a[i].iter_mut().enumerate() {
            *slot = pow(p, j);
        }
    }
    a[N - 1][M - 1] = Fraction::ONE;

    // G: 8x3 evaluation of degree-2 polynomials.
    let mut g = [[Fraction::ZERO; R]; N];
    for (i, &p) in POINTS.iter().enumerate() {
        for (j, slot) in g[i].iter_mut().enumerate() {
            *slot = pow(p, j);
        }
    }
    g[N - 1][R - 1] = Fraction::ONE;

    // W: 8x8 evaluation of degree-7 polynomials (values from coefficients);
    // B = W^{-1} recovers coefficients from values, so B^T d evaluates the
    // dual (interpolation) side of the transposed linear-convolution form.
    let mut w = [[Fraction::ZERO; N]; N];
    for (i, &p) in POINTS.iter().enumerate() {
        for (j, slot) in w[i].iter_mut().enumerate() {
            *slot = pow(p, j);
        }
    }
    w[N - 1][N - 1] = Fraction::ONE;
    let b = invert(w);

    let to64 = |f: Fraction| f.to_f64();
    let mut out = WinogradMatrices {
        b: [[0.0; 8]; 8],
        g: [[0.0; 3]; 8],
        a: [[0.0; 6]; 8],
        b_f32: [[0.0; 8]; 8],
        g_f32: [[0.0; 3]; 8],
        a_f32: [[0.0; 6]; 8],
    };
    for i in 0..N {
        for j in 0..N {
            out.b[i][j] = to64(b[i][j]);
            out.b_f32[i][j] = out.b[i][j] as f32;
        }
        for j in 0..R {
            out.g[i][j] = to64(g[i][j]);
            out.g_f32[i][j] = out.g[i][j] as f32;
        }
        for j in 0..M {
            out.a[i][j] = to64(a[i][j]);
            out.a_f32[i][j] = out.a[i][j] as f32;
        }
    }
    out
}

impl WinogradMatrices {
    /// G g G^T for a 3x3 filter, in f64.
    pub fn filter_domain(&self, g3: &[[f64; 3]; 3]) -> [[f64; 8]; 8] {
        let mut tmp = [[0.0; 3]; 8]; // G g
        for i in 0..8 {
            for j in 0..3 {
                for k in 0..3 {
                    tmp[i][j] += self.g[i][k] * g3[k][j];
                }
            }
        }
        let mut out = [[0.0; 8]; 8]; // (G g) G^T
        for i in 0..8 {
            for j in 0..8 {
                for k in 0..3 {
                    out[i][j] += tmp[i][k] * self.g[j][k];
                }
            }
        }
        out
    }

    /// B^T d B for an 8x8 data tile, in f64.
    pub fn data_domain(&self, d: &[[f64; 8]; 8]) -> [[f64; 8]; 8] {
        let mut tmp = [[0.0; 8]; 8]; // B^T d
        for i in 0..8 {
            for j in 0..8 {
                for k in 0..8 {
                    tmp[i][j] += self.b[k][i] * d[k][j];
                }
            }
        }
        let mut out = [[0.0; 8]; 8]; // (B^T d) B
        for i in 0..8 {
            for j in 0..8 {
                for k in 0..8 {
                    out[i][j] += tmp[i][k] * self.b[k][j];
                }
            }
        }
        out
    }

    /// A^T m A for an 8x8 product tile, in f64.
    pub fn output_domain(&self, m: &[[f64; 8]; 8]) -> [[f64; 6]; 6] {
        let mut tmp = [[0.0; 8]; 6]; // A^T m
        for i in 0..6 {
            for j in 0..8 {
                for k in 0..8 {
                    tmp[i][j] += self.a[k][i] * m[k][j];
                }
            }
        }
        let mut out = [[0.0; 6]; 6]; // (A^T m) A
        for i in 0..6 {
            for j in 0..6 {
                for k in 0..8 {
                    out[i][j] += tmp[i][k] * self.a[k][j];
                }
            }
        }
        out
    }

    /// Full 2-D transform pipeline on one tile/filter pair, in f64.
    pub fn tile_correlation(&self, d: &[[f64; 8]; 8], g3: &[[f64; 3]; 3]) -> [[f64; 6]; 6] {
        let u = self.filter_domain(g3);
        let v = self.data_domain(d);
        let mut m = [[0.0; 8]; 8];
        for i in 0..8 {
            for j in 0..8 {
                m[i][j] = u[i][j] * v[i][j];
            }
        }
        self.output_domain(&m)
    }
}

/// Valid 6x6 cross-correlation of an 8x8 tile with a 3x3 filter; the
/// independent oracle for the transform identity.
pub fn direct_tile_correlation(d: &[[f64; 8]; 8], g3: &[[f64; 3]; 3]) -> [[f64; 6]; 6] {
    let mut out = [[0.0; 6]; 6];
    for (y, row) in out.iter_mut().enumerate() {
        for (x, slot) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for dy in 0..3 {
                for dx in 0..3 {
                    acc += d[y + dy][x + dx] * g3[dy][dx];
                }
            }
            *slot = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_abs_diff(a: &[[f64; 6]; 6], b: &[[f64; 6]; 6]) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..6 {
            for j in 0..6 {
                m = m.max((a[i][j] - b[i][j]).abs());
            }
        }
        m
    }

    #[test]
    fn fraction_arithmetic() {
        let a = Fraction::new(1, 2);
        let b = Fraction::new(-2, 6);
        assert_eq!(a.add(b), Fraction::new(1, 6));
        assert_eq!(a.mul(b), Fraction::new(-1, 6));
        assert_eq!(a.div(b), Fraction::new(-3, 2));
        assert_eq!(Fraction::new(4, -8), Fraction::new(-1, 2));
    }

    #[test]
    fn zero_filter_maps_to_zero_domain() {
        let mats = build_winograd_matrices();
        let u = mats.filter_domain(&[[0.0; 3]; 3]);
        assert!(u.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn center_impulse_filter_selects_central_window() {
        let mats = build_winograd_matrices();
        let mut g3 = [[0.0; 3]; 3];
        g3[1][1] = 1.0;
        let mut d = [[0.0; 8]; 8];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for row in d.iter_mut() {
            for v in row.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        let y = mats.tile_correlation(&d, &g3);
        for i in 0..6 {
            for j in 0..6 {
                assert!((y[i][j] - d[i + 1][j + 1]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn transform_identity_matches_direct_correlation() {
        let mats = build_winograd_matrices();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let mut d = [[0.0; 8]; 8];
            let mut g3 = [[0.0; 3]; 3];
            for row in d.iter_mut() {
                for v in row.iter_mut() {
                    *v = rng.gen_range(-1.0..1.0);
                }
            }
            for row in g3.iter_mut() {
                for v in row.iter_mut() {
                    *v = rng.gen_range(-1.0..1.0);
                }
            }
            let fast = mats.tile_correlation(&d, &g3);
            let exact = direct_tile_correlation(&d, &g3);
            worst = worst.max(max_abs_diff(&fast, &exact));
        }
        assert!(worst < 1e-10, "max abs err {worst}");
    }

    #[test]
    fn center_impulse_gives_g_outer_product() {
        // U for the center-impulse filter equals the outer product of G's
        // middle column with itself.
        let mats = build_winograd_matrices();
        let mut g3 = [[0.0; 3]; 3];
        g3[1][1] = 1.0;
        let u = mats.filter_domain(&g3);
        for i in 0..8 {
            for j in 0..8 {
                let expect = mats.g[i][1] * mats.g[j][1];
                assert!((u[i][j] - expect).abs() < 1e-12);
            }
        }
    }
}
