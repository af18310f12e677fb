//! Closed-form harmonic functions with exact gradients.
//!
//! Every [`HarmonicFn`] evaluates its value, gradient and (analytically zero)
//! Laplacian at a point, and round-trips through a compact descriptor string:
//!
//! ```text
//! const:c=1
//! coord:j=0
//! calderon:xi=2,0,0;nu=0,1,0;sign=+;k=2
//! wave:re=1,0,0;im=0,1,0
//! point:z=-1,0.5,0.5
//! hpoly:dim=3;coef=1,-1;exps=2.0.0,0.2.0
//! ```
//!
//! Any descriptor accepts a trailing `;scale=s` or `;scale=re,im`. Sums are
//! written as descriptors joined by ` + `.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::calculus::laplacian;
use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::Grid;

const NULL_TOL: f64 = 1e-12;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The pair `zeta_pm = (xi +- i|xi| nu) / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalderonPair {
    pub xi: Vec<f64>,
    pub nu: Vec<f64>,
    pub zeta_plus: Vec<Complex64>,
    pub zeta_minus: Vec<Complex64>,
}

pub fn calderon_pair(xi: &[f64], nu: &[f64]) -> Result<CalderonPair> {
    if xi.len() != nu.len() {
        return Err(Error::Precondition(format!(
            "xi has {} entries, nu has {}",
            xi.len(),
            nu.len()
        )));
    }
    let n = dot(xi, xi).sqrt();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::Precondition(
            "xi must be a non-zero finite vector".into(),
        ));
    }
    if (dot(nu, nu).sqrt() - 1.0).abs() > NULL_TOL {
        return Err(Error::Precondition("nu is not a unit vector".into()));
    }
    if dot(xi, nu).abs() > NULL_TOL * n.max(1.0) {
        return Err(Error::Precondition("nu is not orthogonal to xi".into()));
    }
    let zeta = |s: f64| -> Vec<Complex64> {
        xi.iter()
            .zip(nu)
            .map(|(&x, &v)| Complex64::new(0.5 * x, 0.5 * s * n * v))
            .collect()
    };
    Ok(CalderonPair {
        xi: xi.to_vec(),
        nu: nu.to_vec(),
        zeta_plus: zeta(1.0),
        zeta_minus: zeta(-1.0),
    })
}

/// `zeta . zeta` with the bilinear (not Hermitian) product.
pub fn null_defect(zeta: &[Complex64]) -> Complex64 {
    zeta.iter().map(|z| z * z).sum()
}

/// A monomial-sum polynomial in `dim` variables with real coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    pub dim: usize,
    pub terms: Vec<(f64, Vec<u32>)>,
}

impl Polynomial {
    fn value(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(k, e)| {
                k * e
                    .iter()
                    .zip(x)
                    .map(|(&p, &v)| v.powi(p as i32))
                    .product::<f64>()
            })
            .sum()
    }

    fn partial(&self, x: &[f64], a: usize) -> f64 {
        self.terms
            .iter()
            .filter(|(_, e)| e[a] > 0)
            .map(|(k, e)| {
                let mut t = k * e[a] as f64;
                for (b, (&p, &v)) in e.iter().zip(x).enumerate() {
                    let p = if b == a { p - 1 } else { p };
                    t *= v.powi(p as i32);
                }
                t
            })
            .sum()
    }

    fn laplacian(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for (k, e) in &self.terms {
            for a in 0..self.dim {
                if e[a] < 2 {
                    continue;
                }
                let mut t = k * (e[a] * (e[a] - 1)) as f64;
                for (b, (&p, &v)) in e.iter().zip(x).enumerate() {
                    let p = if b == a { p - 2 } else { p };
                    t *= v.powi(p as i32);
                }
                s += t;
            }
        }
        s
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|(_, e)| e.iter().sum())
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Kind {
    Constant(f64),
    Coordinate(usize),
    Calderon {
        xi: Vec<f64>,
        nu: Vec<f64>,
        plus: bool,
        mult: f64,
    },
    Wave(Vec<Complex64>),
    PointSource(Vec<f64>),
    Poly(Polynomial),
    Sum(Vec<HarmonicFn>),
}

/// A harmonic function with closed-form derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicFn {
    kind: Kind,
    scale: Complex64,
}

impl HarmonicFn {
    fn wrap(kind: Kind) -> Self {
        Self {
            kind,
            scale: c(1.0),
        }
    }

    pub fn constant(v: f64) -> Self {
        Self::wrap(Kind::Constant(v))
    }

    pub fn coordinate(j: usize) -> Self {
        Self::wrap(Kind::Coordinate(j))
    }

    /// `exp(i mult zeta_pm . x)` for the pair built from `(xi, nu)`.
    pub fn calderon(xi: &[f64], nu: &[f64], plus: bool, mult: f64) -> Result<Self> {
        calderon_pair(xi, nu)?;
        Ok(Self::wrap(Kind::Calderon {
            xi: xi.to_vec(),
            nu: nu.to_vec(),
            plus,
            mult,
        }))
    }

    pub fn point_source(pole: &[f64]) -> Self {
        Self::wrap(Kind::PointSource(pole.to_vec()))
    }

    pub fn polynomial(p: Polynomial) -> Self {
        Self::wrap(Kind::Poly(p))
    }

    pub fn sum(parts: Vec<HarmonicFn>) -> Self {
        Self::wrap(Kind::Sum(parts))
    }

    pub fn scaled(mut self, s: Complex64) -> Self {
        self.scale *= s;
        self
    }

    pub fn kind(&self) -> &Kind {
        &self.kind
    }

    pub fn scale(&self) -> Complex64 {
        self.scale
    }

    /// The null vector in the exponent, for exponential kinds.
    pub fn zeta(&self) -> Option<Vec<Complex64>> {
        match &self.kind {
            Kind::Calderon { xi, nu, plus, mult } => {
                let p = calderon_pair(xi, nu).ok()?;
                let z = if *plus { p.zeta_plus } else { p.zeta_minus };
                Some(z.into_iter().map(|v| v * *mult).collect())
            }
            Kind::Wave(z) => Some(z.clone()),
            _ => None,
        }
    }

    pub fn value(&self, x: &[f64]) -> Complex64 {
        let v = match &self.kind {
            Kind::Constant(v) => c(*v),
            Kind::Coordinate(j) => c(x[*j]),
            Kind::Calderon { .. } | Kind::Wave(_) => {
                let z = self.zeta().expect("exponential kind");
                let arg: Complex64 = z.iter().zip(x).map(|(z, &x)| z * x).sum();
                (Complex64::i() * arg).exp()
            }
            Kind::PointSource(p) => {
                let r2: f64 = x.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
                if x.len() == 2 {
                    c(0.5 * r2.ln())
                } else {
                    c(r2.powf(0.5 * (2.0 - x.len() as f64)))
                }
            }
            Kind::Poly(p) => c(p.value(x)),
            Kind::Sum(parts) => parts.iter().map(|f| f.value(x)).sum(),
        };
        v * self.scale
    }

    pub fn grad(&self, x: &[f64]) -> Vec<Complex64> {
        let d = x.len();
        let g: Vec<Complex64> = match &self.kind {
            Kind::Constant(_) => vec![c(0.0); d],
            Kind::Coordinate(j) => (0..d).map(|a| c(if a == *j { 1.0 } else { 0.0 })).collect(),
            Kind::Calderon { .. } | Kind::Wave(_) => {
                let v = self.value(x) / self.scale;
                self.zeta()
                    .unwrap()
                    .iter()
                    .map(|z| Complex64::i() * z * v)
                    .collect()
            }
            Kind::PointSource(p) => {
                let r2: f64 = x.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
                let f = if d == 2 {
                    1.0 / r2
                } else {
                    (2.0 - d as f64) * r2.powf(-0.5 * d as f64)
                };
                x.iter().zip(p).map(|(a, b)| c(f * (a - b))).collect()
            }
            Kind::Poly(p) => (0..d).map(|a| c(p.partial(x, a))).collect(),
            Kind::Sum(parts) => {
                let mut acc = vec![c(0.0); d];
                for f in parts {
                    acc.iter_mut().zip(f.grad(x)).for_each(|(s, v)| *s += v);
                }
                acc
            }
        };
        g.into_iter().map(|v| v * self.scale).collect()
    }

    /// Analytic Laplacian; zero for every admissible member, kept so that
    /// polynomial bases can be audited term by term.
    pub fn lap(&self, x: &[f64]) -> Complex64 {
        let v = match &self.kind {
            Kind::Calderon { .. } | Kind::Wave(_) => {
                -null_defect(&self.zeta().unwrap()) * self.value(x) / self.scale
            }
            Kind::Poly(p) => c(p.laplacian(x)),
            Kind::Sum(parts) => parts.iter().map(|f| f.lap(x)).sum(),
            _ => c(0.0),
        };
        v * self.scale
    }

    /// Reject evaluation where the closed form is singular or the wrong
    /// dimension for `grid`.
    pub fn check_on(&self, grid: &Grid) -> Result<()> {
        let d = grid.dim();
        match &self.kind {
            Kind::Coordinate(j) if *j >= d => Err(Error::Precondition(format!(
                "coordinate {j} in dimension {d}"
            ))),
            Kind::Calderon { xi, .. } if xi.len() != d => {
                Err(Error::Precondition("wave dimension mismatch".into()))
            }
            Kind::Wave(z) if z.len() != d => {
                Err(Error::Precondition("wave dimension mismatch".into()))
            }
            Kind::Poly(p) if p.dim != d => {
                Err(Error::Precondition("polynomial dimension mismatch".into()))
            }
            Kind::PointSource(p) => {
                if p.len() != d {
                    return Err(Error::Precondition("pole dimension mismatch".into()));
                }
                if grid.contains(p) {
                    Err(Error::Precondition(
                        "pole lies inside the grid's bounding box".into(),
                    ))
                } else {
                    Ok(())
                }
            }
            Kind::Sum(parts) => parts.iter().try_for_each(|f| f.check_on(grid)),
            _ => Ok(()),
        }
    }

    pub fn sample(&self, grid: &Grid) -> Result<Field> {
        self.check_on(grid)?;
        Ok(Field::scalar_from_fn(grid, |x| self.value(x)))
    }

    pub fn sample_grad(&self, grid: &Grid) -> Result<Field> {
        self.check_on(grid)?;
        Ok(Field::tensor_from_fn(grid, 1, |x, out| {
            out.copy_from_slice(&self.grad(x))
        }))
    }
}

/// Harmonic exponential `exp(i zeta . x)`.
pub fn calderon_wave(zeta: &[Complex64]) -> Result<HarmonicFn> {
    let d = null_defect(zeta);
    if d.norm() > NULL_TOL {
        return Err(Error::Precondition(format!(
            "zeta . zeta = {d} is not null"
        )));
    }
    Ok(HarmonicFn::wrap(Kind::Wave(zeta.to_vec())))
}

fn monomials(dim: usize, degree: u32) -> Vec<Vec<u32>> {
    if dim == 1 {
        return vec![vec![degree]];
    }
    let mut out = Vec::new();
    for first in (0..=degree).rev() {
        for mut rest in monomials(dim - 1, degree - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Null space of a dense row-major matrix by reduced row echelon form.
fn null_space(mut m: Vec<Vec<f64>>, cols: usize) -> Vec<Vec<f64>> {
    let rows = m.len();
    let mut pivots = Vec::new();
    let mut r = 0;
    for col in 0..cols {
        if r == rows {
            break;
        }
        let Some(p) = (r..rows).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs())) else {
            break;
        };
        if m[p][col].abs() < 1e-12 {
            continue;
        }
        m.swap(r, p);
        let piv = m[r][col];
        m[r].iter_mut().for_each(|v| *v /= piv);
        for i in 0..rows {
            if i != r && m[i][col] != 0.0 {
                let f = m[i][col];
                for j in 0..cols {
                    m[i][j] -= f * m[r][j];
                }
            }
        }
        pivots.push(col);
        r += 1;
    }
    (0..cols)
        .filter(|c| !pivots.contains(c))
        .map(|free| {
            let mut v = vec![0.0; cols];
            v[free] = 1.0;
            for (row, &pc) in pivots.iter().enumerate() {
                v[pc] = -m[row][free];
            }
            v
        })
        .collect()
}

/// Basis of the real harmonic polynomials of each degree `0..=max_degree`,
/// computed as the kernel of the Laplacian on homogeneous monomials.
pub fn harmonic_polynomials(max_degree: u32, dim: usize) -> Result<Vec<HarmonicFn>> {
    if max_degree > 6 {
        return Err(Error::Precondition(format!("degree {max_degree} > 6")));
    }
    if dim == 0 {
        return Err(Error::Precondition("dimension 0".into()));
    }
    let mut out = Vec::new();
    for d in 0..=max_degree {
        let cols = monomials(dim, d);
        if d < 2 {
            for e in cols {
                out.push(HarmonicFn::polynomial(Polynomial {
                    dim,
                    terms: vec![(1.0, e)],
                }));
            }
            continue;
        }
        let rows = monomials(dim, d - 2);
        let mut mat = vec![vec![0.0; cols.len()]; rows.len()];
        for (ci, e) in cols.iter().enumerate() {
            for a in 0..dim {
                if e[a] >= 2 {
                    let mut t = e.clone();
                    t[a] -= 2;
                    let ri = rows
                        .iter()
                        .position(|r| *r == t)
                        .expect("monomial of lower degree");
                    mat[ri][ci] += (e[a] * (e[a] - 1)) as f64;
                }
            }
        }
        for v in null_space(mat, cols.len()) {
            let terms = v
                .into_iter()
                .zip(&cols)
                .filter(|(k, _)| k.abs() > 1e-14)
                .map(|(k, e)| (k, e.clone()))
                .collect();
            out.push(HarmonicFn::polynomial(Polynomial { dim, terms }));
        }
    }
    Ok(out)
}

/// `max |discrete Δf| / max |f|` over grid points off the boundary.
pub fn harmonicity_residual(f: &HarmonicFn, grid: &Grid) -> Result<f64> {
    let s = f.sample(grid)?;
    let lap = laplacian(&s)?;
    let num = lap.max_abs_where(|p| !grid.in_collar(p, 1));
    let den = s.max_abs();
    Ok(if den == 0.0 { num } else { num / den })
}

fn fmt_list(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl fmt::Display for HarmonicFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            Kind::Constant(v) => write!(f, "const:c={v}")?,
            Kind::Coordinate(j) => write!(f, "coord:j={j}")?,
            Kind::Calderon { xi, nu, plus, mult } => {
                write!(
                    f,
                    "calderon:xi={};nu={};sign={}",
                    fmt_list(xi),
                    fmt_list(nu),
                    if *plus { '+' } else { '-' }
                )?;
                if *mult != 1.0 {
                    write!(f, ";k={mult}")?;
                }
            }
            Kind::Wave(z) => {
                let re: Vec<f64> = z.iter().map(|v| v.re).collect();
                let im: Vec<f64> = z.iter().map(|v| v.im).collect();
                write!(f, "wave:re={};im={}", fmt_list(&re), fmt_list(&im))?;
            }
            Kind::PointSource(p) => write!(f, "point:z={}", fmt_list(p))?,
            Kind::Poly(p) => {
                let coef: Vec<f64> = p.terms.iter().map(|t| t.0).collect();
                let exps: Vec<String> = p
                    .terms
                    .iter()
                    .map(|t| {
                        t.1.iter()
                            .map(|e| e.to_string())
                            .collect::<Vec<_>>()
                            .join(".")
                    })
                    .collect();
                write!(
                    f,
                    "hpoly:dim={};coef={};exps={}",
                    p.dim,
                    fmt_list(&coef),
                    exps.join(",")
                )?;
            }
            Kind::Sum(parts) => {
                let s: Vec<String> = parts.iter().map(|p| p.to_string()).collect();
                return write!(f, "{}", s.join(" + "));
            }
        }
        if self.scale != c(1.0) {
            if self.scale.im == 0.0 {
                write!(f, ";scale={}", self.scale.re)?;
            } else {
                write!(f, ";scale={},{}", self.scale.re, self.scale.im)?;
            }
        }
        Ok(())
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad number `{t}`: {e}")))
        })
        .collect()
}

impl FromStr for HarmonicFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.contains(" + ") {
            let parts = s.split(" + ").map(str::parse).collect::<Result<Vec<_>>>()?;
            return Ok(Self::sum(parts));
        }
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("descriptor `{s}` lacks a kind")))?;
        let mut kv = std::collections::BTreeMap::new();
        for item in rest.split(';').filter(|t| !t.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("bad parameter `{item}`")))?;
            kv.insert(k.trim(), v.trim());
        }
        let get = |k: &str| {
            kv.get(k)
                .copied()
                .ok_or_else(|| Error::Config(format!("`{kind}` needs `{k}`")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|e| Error::Config(format!("bad `{k}`: {e}")))
        };
        let mut out = match kind.trim() {
            "const" => Self::constant(num("c")?),
            "coord" => Self::coordinate(num("j")? as usize),
            "calderon" => {
                let plus = match kv.get("sign").copied().unwrap_or("+") {
                    "+" => true,
                    "-" => false,
                    o => return Err(Error::Config(format!("bad sign `{o}`"))),
                };
                let mult = if kv.contains_key("k") { num("k")? } else { 1.0 };
                Self::calderon(
                    &parse_list(get("xi")?)?,
                    &parse_list(get("nu")?)?,
                    plus,
                    mult,
                )?
            }
            "wave" => {
                let re = parse_list(get("re")?)?;
                let im = parse_list(get("im")?)?;
                if re.len() != im.len() {
                    return Err(Error::Config("wave re/im lengths differ".into()));
                }
                let z: Vec<Complex64> = re
                    .into_iter()
                    .zip(im)
                    .map(|(a, b)| Complex64::new(a, b))
                    .collect();
                calderon_wave(&z)?
            }
            "point" => Self::point_source(&parse_list(get("z")?)?),
            "hpoly" => {
                let dim = num("dim")? as usize;
                let coef = parse_list(get("coef")?)?;
                let exps = get("exps")?
                    .split(',')
                    .map(|e| {
                        e.split('.')
                            .map(|p| {
                                p.parse::<u32>()
                                    .map_err(|x| Error::Config(format!("bad exponent: {x}")))
                            })
                            .collect::<Result<Vec<u32>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                if exps.len() != coef.len() || exps.iter().any(|e| e.len() != dim) {
                    return Err(Error::Config(
                        "hpoly coefficient/exponent shape mismatch".into(),
                    ));
                }
                Self::polynomial(Polynomial {
                    dim,
                    terms: coef.into_iter().zip(exps).collect(),
                })
            }
            o => return Err(Error::Config(format!("unknown harmonic kind `{o}`"))),
        };
        if let Some(sc) = kv.get("scale") {
            let v = parse_list(sc)?;
            out.scale = match v.as_slice() {
                [r] => c(*r),
                [r, i] => Complex64::new(*r, *i),
                _ => return Err(Error::Config("scale takes one or two numbers".into())),
            };
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calderon_pair_examples() {
        let p = calderon_pair(&[2.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(p.zeta_plus, vec![c(1.0), Complex64::new(0.0, 1.0), c(0.0)]);
        assert!(null_defect(&p.zeta_plus).norm() < 1e-15);
        let q = calderon_pair(&[0.0, 3.0, 4.0], &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(q.zeta_plus, vec![Complex64::new(0.0, 2.5), c(1.5), c(2.0)]);
        assert_eq!(
            q.zeta_minus,
            vec![Complex64::new(0.0, -2.5), c(1.5), c(2.0)]
        );
    }

    #[test]
    fn calderon_pair_rejects_bad_nu() {
        assert!(calderon_pair(&[1.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(calderon_pair(&[1.0, 0.0], &[0.0, 2.0]).is_err());
        assert!(calderon_pair(&[0.0, 0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn wave_at_origin() {
        let w = calderon_wave(&[c(1.0), Complex64::i(), c(0.0)]).unwrap();
        assert_eq!(w.value(&[0.0; 3]), c(1.0));
        assert_eq!(w.grad(&[0.0; 3]), vec![Complex64::i(), c(-1.0), c(0.0)]);
        assert!(calderon_wave(&[c(1.0), c(0.0), c(0.0)]).is_err());
    }

    #[test]
    fn wave_product_is_plane_wave() {
        let p = calderon_pair(
            &[0.3, -1.2, 0.4],
            &[0.0, 0.316_227_766_016_837_94, 0.948_683_298_050_513_8],
        )
        .unwrap();
        let a = calderon_wave(&p.zeta_plus).unwrap();
        let b = calderon_wave(&p.zeta_minus).unwrap();
        let x = [0.2, -0.7, 1.1];
        let want = Complex64::new(0.0, dot(&p.xi, &x)).exp();
        assert!((a.value(&x) * b.value(&x) - want).norm() < 1e-14);
    }

    #[test]
    fn degree_two_basis() {
        let b = harmonic_polynomials(2, 3).unwrap();
        let deg2: Vec<_> = b
            .iter()
            .filter(|f| matches!(f.kind(), Kind::Poly(p) if p.degree() == 2))
            .collect();
        assert_eq!(deg2.len(), 5);
        assert_eq!(b.len(), 1 + 3 + 5);
        for f in &b {
            let x = [0.3, -0.4, 0.9];
            assert!(f.lap(&x).norm() < 1e-12);
        }
    }

    #[test]
    fn residual_of_non_harmonic_quadratic() {
        let g = Grid::cube(3, 0.0, 1.0, 12).unwrap();
        let sq = HarmonicFn::polynomial(Polynomial {
            dim: 3,
            terms: vec![(1.0, vec![2, 0, 0])],
        });
        assert!((harmonicity_residual(&sq, &g).unwrap() - 2.0).abs() < 1e-9);
        let h = HarmonicFn::polynomial(Polynomial {
            dim: 3,
            terms: vec![(1.0, vec![2, 0, 0]), (-1.0, vec![0, 2, 0])],
        });
        assert!(harmonicity_residual(&h, &g).unwrap() < 1e-12);
    }

    #[test]
    fn point_source_pole_must_be_outside() {
        let g = Grid::cube(3, 0.0, 1.0, 8).unwrap();
        assert!(HarmonicFn::point_source(&[0.5, 0.5, 0.5])
            .check_on(&g)
            .is_err());
        let f = HarmonicFn::point_source(&[-1.0, 0.5, 0.5]);
        f.check_on(&g).unwrap();
        assert!(f.lap(&[0.2, 0.2, 0.2]).norm() == 0.0);
    }

    #[test]
    fn descriptor_round_trip() {
        let items = [
            "const:c=1",
            "coord:j=2",
            "calderon:xi=2,0,0;nu=0,1,0;sign=+",
            "calderon:xi=2,0,0;nu=0,1,0;sign=-;k=2;scale=0.5,-1",
            "wave:re=1,0,0;im=0,1,0",
            "point:z=-1,0.5,0.5",
            "hpoly:dim=3;coef=1,-1;exps=2.0.0,0.2.0",
            "coord:j=0 + coord:j=1;scale=2",
        ];
        for s in items {
            let f: HarmonicFn = s.parse().unwrap();
            assert_eq!(f.to_string(), s);
            assert_eq!(f.to_string().parse::<HarmonicFn>().unwrap(), f);
        }
        assert!("bogus:x=1".parse::<HarmonicFn>().is_err());
    }
}
