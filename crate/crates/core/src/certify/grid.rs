use crate::matfun::{matrix_measure, matrix_norm, Mat, NormKind, Sampling};
use crate::model::NeutralSystem;

use super::{CertifyError, Constant};

/// A system evaluated once on a sample grid: coefficients, their sum and the
/// delays t − g(t), t − h_k(t). Certificates for many rates reuse it.
pub struct Grid<'a> {
    sys: &'a NeutralSystem,
    norm: NormKind,
    sampling: Sampling,
    times: Vec<f64>,
    a: Vec<Mat>,
    terms: Vec<Vec<Mat>>,
    b_sum: Vec<Mat>,
    g_delay: Vec<f64>,
    h_delay: Vec<Vec<f64>>,
}

impl<'a> Grid<'a> {
    pub fn new(sys: &'a NeutralSystem, norm: NormKind, sampling: &Sampling) -> Result<Self, CertifyError> {
        let times: Vec<f64> = sampling.points().collect();
        let m = sys.terms().len();
        let mut a = Vec::with_capacity(times.len());
        let mut terms = vec![Vec::with_capacity(times.len()); m];
        let mut b_sum = Vec::with_capacity(times.len());
        let mut g_delay = Vec::with_capacity(times.len());
        let mut h_delay = vec![Vec::with_capacity(times.len()); m];
        let delay = |what: String, arg: &crate::exprlang::Expr, t: f64| {
            arg.eval(t).map(|h| t - h).map_err(|source| CertifyError::Delay { what, source })
        };
        for &t in &times {
            a.push(sys.a().eval(t)?);
            g_delay.push(delay("g".into(), &sys.g().arg, t)?);
            let mut sum = Mat::zeros(sys.dim());
            for (k, term) in sys.terms().iter().enumerate() {
                let b = term.coeff.eval(t)?;
                sum.add_scaled(1.0, &b);
                terms[k].push(b);
                h_delay[k].push(delay(format!("h{}", k + 1), &term.delay.arg, t)?);
            }
            b_sum.push(sum);
        }
        Ok(Grid {
            sys,
            norm,
            sampling: *sampling,
            times,
            a,
            terms,
            b_sum,
            g_delay,
            h_delay,
        })
    }

    pub fn system(&self) -> &NeutralSystem {
        self.sys
    }

    pub fn norm(&self) -> NormKind {
        self.norm
    }

    pub fn sampling(&self) -> &Sampling {
        &self.sampling
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn a(&self) -> &[Mat] {
        &self.a
    }

    pub fn term(&self, k: usize) -> &[Mat] {
        &self.terms[k]
    }

    pub fn b_sum(&self) -> &[Mat] {
        &self.b_sum
    }

    pub fn max_norm(&self, mats: &[Mat]) -> f64 {
        mats.iter().map(|c| matrix_norm(c, self.norm)).fold(0.0, f64::max)
    }

    fn declared_or_sampled(&self, declared: Option<f64>, mats: &[Mat]) -> Constant {
        match declared {
            Some(d) => Constant::declared(d),
            None => Constant::sampled(self.max_norm(mats), &self.sampling),
        }
    }

    /// sup ‖A‖, declared if available.
    pub fn sup_a(&self) -> Constant {
        self.declared_or_sampled(self.sys.a().declared_sup, &self.a)
    }

    /// sup ‖B_k‖, declared if available.
    pub fn sup_term(&self, k: usize) -> Constant {
        self.declared_or_sampled(self.sys.terms()[k].coeff.declared_sup, &self.terms[k])
    }

    /// sup ‖ΣB_k‖, declared if available.
    pub fn sup_b_sum(&self) -> Constant {
        self.declared_or_sampled(self.sys.declared.b_sum_sup, &self.b_sum)
    }

    /// μ(ΣB_k(t)) at every sample.
    pub fn mu_b(&self) -> Vec<f64> {
        self.b_sum.iter().map(|b| matrix_measure(b, self.norm)).collect()
    }

    /// P(t_i) = Σ e^{λ(t−h_k)}B_k − λe^{λ(t−g)}A + λE at sample i.
    pub fn p(&self, i: usize, lambda: f64) -> Mat {
        let n = self.sys.dim();
        let mut p = Mat::identity(n).scale(lambda);
        for (k, mats) in self.terms.iter().enumerate() {
            p.add_scaled((lambda * self.h_delay[k][i]).exp(), &mats[i]);
        }
        p.add_scaled(-lambda * (lambda * self.g_delay[i]).exp(), &self.a[i]);
        p
    }

    pub fn mu_p(&self, lambda: f64) -> Vec<f64> {
        (0..self.times.len()).map(|i| matrix_measure(&self.p(i, lambda), self.norm)).collect()
    }

    /// max_i ‖X(t_i)‖/|d_i| when every d_i < 0, otherwise None.
    pub fn ratio_sup(&self, mats: &[Mat], denominators: &[f64]) -> Option<f64> {
        let mut best: f64 = 0.0;
        for (c, &d) in mats.iter().zip(denominators) {
            if d.is_nan() || d >= 0.0 {
                return None;
            }
            best = best.max(matrix_norm(c, self.norm) / -d);
        }
        Some(best)
    }

    /// The sampled delay t − h_k(t) if it is the same at every sample.
    pub fn constant_delay(&self, k: usize) -> Option<f64> {
        constant_value(&self.h_delay[k])
    }

    pub fn constant_g_delay(&self) -> Option<f64> {
        constant_value(&self.g_delay)
    }

    /// Every coefficient matrix is the same at every sample.
    pub fn coefficients_constant(&self) -> bool {
        self.sys.a().is_constant() && self.sys.terms().iter().all(|t| t.coeff.is_constant())
    }
}

fn constant_value(v: &[f64]) -> Option<f64> {
    let first = *v.first()?;
    v.iter().all(|x| (x - first).abs() <= 1e-12 * (1.0 + first.abs())).then_some(first)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::example2;

    #[test]
    fn p_at_zero_rate_is_the_coefficient_sum() {
        let sys = example2(3, false);
        let s = Sampling::new(0.0, 6.0, 301).unwrap();
        let grid = Grid::new(&sys, NormKind::Inf, &s).unwrap();
        for i in [0, 17, 300] {
            assert_eq!(grid.p(i, 0.0), grid.b_sum()[i]);
        }
    }

    #[test]
    fn constant_delay_detection() {
        let sys = example2(2, false);
        let s = Sampling::new(0.0, 6.0, 301).unwrap();
        let grid = Grid::new(&sys, NormKind::Inf, &s).unwrap();
        assert_eq!(grid.constant_delay(0), None);
        let g = grid.constant_g_delay().unwrap();
        assert!((g - 0.1).abs() < 1e-15);
    }
}
