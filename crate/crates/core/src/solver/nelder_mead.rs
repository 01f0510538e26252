//! Nelder-Mead simplex search with standard coefficients
//! (reflection 1, expansion 2, contraction 1/2, shrink 1/2).

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Reflect,
    Expand,
    ContractOutside,
    ContractInside,
    Shrink,
}

#[derive(Debug, Clone)]
pub struct NelderMead {
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
    evaluations: usize,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

impl NelderMead {
    /// Axis-aligned initial simplex `x0 + step_i e_i`. `f0` is `f(x0)` when
    /// already known.
    pub fn new<F: FnMut(&[f64]) -> f64>(x0: &[f64], steps: &[f64], f0: Option<f64>, f: &mut F) -> Self {
        assert_eq!(x0.len(), steps.len());
        let mut points = vec![x0.to_vec()];
        let mut values = Vec::with_capacity(x0.len() + 1);
        let mut evaluations = 0;
        values.push(match f0 {
            Some(v) => v,
            None => {
                evaluations += 1;
                sanitize(f(x0))
            }
        });
        for (i, s) in steps.iter().enumerate() {
            let mut p = x0.to_vec();
            p[i] += s;
            values.push(sanitize(f(&p)));
            evaluations += 1;
            points.push(p);
        }
        let mut nm = NelderMead {
            points,
            values,
            evaluations,
        };
        nm.order();
        nm
    }

    fn order(&mut self) {
        let mut idx: Vec<usize> = (0..self.points.len()).collect();
        // Stable: equal values keep their previous order.
        idx.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]));
        self.points = idx.iter().map(|&i| self.points[i].clone()).collect();
        self.values = idx.iter().map(|&i| self.values[i]).collect();
    }

    pub fn best(&self) -> (&[f64], f64) {
        (&self.points[0], self.values[0])
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    /// Objective spread across the simplex.
    pub fn spread(&self) -> f64 {
        self.values[self.values.len() - 1] - self.values[0]
    }

    /// Largest coordinate distance of any vertex from the best one.
    pub fn size(&self) -> f64 {
        let b = &self.points[0];
        self.points
            .iter()
            .flat_map(|p| p.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    /// Re-expresses every vertex through `map` without re-evaluating.
    pub fn remap(&mut self, map: impl Fn(&[f64]) -> Vec<f64>) {
        for p in &mut self.points {
            *p = map(p);
        }
    }

    pub fn step<F: FnMut(&[f64]) -> f64>(&mut self, f: &mut F) -> StepKind {
        let n = self.points.len() - 1;
        let dim = self.points[0].len();
        let mut centroid = vec![0.0; dim];
        for p in &self.points[..n] {
            for (c, x) in centroid.iter_mut().zip(p) {
                *c += x / n as f64;
            }
        }
        let along = |t: f64, from: &[f64]| -> Vec<f64> {
            centroid.iter().zip(from).map(|(c, x)| c + t * (x - c)).collect()
        };
        let worst = self.points[n].clone();
        let (f_best, f_second, f_worst) = (self.values[0], self.values[n - 1], self.values[n]);

        let xr = along(-REFLECT, &worst);
        let fr = self.eval(f, &xr);
        let kind = if fr < f_best {
            let xe = along(-REFLECT * EXPAND, &worst);
            let fe = self.eval(f, &xe);
            if fe < fr {
                self.replace_worst(xe, fe);
                StepKind::Expand
            } else {
                self.replace_worst(xr, fr);
                StepKind::Reflect
            }
        } else if fr < f_second {
            self.replace_worst(xr, fr);
            StepKind::Reflect
        } else if fr < f_worst {
            let xc = along(-REFLECT * CONTRACT, &worst);
            let fc = self.eval(f, &xc);
            if fc <= fr {
                self.replace_worst(xc, fc);
                StepKind::ContractOutside
            } else {
                self.shrink(f);
                StepKind::Shrink
            }
        } else {
            let xc = along(CONTRACT, &worst);
            let fc = self.eval(f, &xc);
            if fc < f_worst {
                self.replace_worst(xc, fc);
                StepKind::ContractInside
            } else {
                self.shrink(f);
                StepKind::Shrink
            }
        };
        self.order();
        kind
    }

    fn eval<F: FnMut(&[f64]) -> f64>(&mut self, f: &mut F, x: &[f64]) -> f64 {
        self.evaluations += 1;
        sanitize(f(x))
    }

    fn replace_worst(&mut self, x: Vec<f64>, fx: f64) {
        let n = self.points.len() - 1;
        self.points[n] = x;
        self.values[n] = fx;
    }

    fn shrink<F: FnMut(&[f64]) -> f64>(&mut self, f: &mut F) {
        let best = self.points[0].clone();
        for i in 1..self.points.len() {
            let p: Vec<f64> = self.points[i]
                .iter()
                .zip(&best)
                .map(|(x, b)| b + SHRINK * (x - b))
                .collect();
            self.values[i] = self.eval(f, &p);
            self.points[i] = p;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], budget: usize) -> (Vec<f64>, f64) {
        let steps = vec![0.5; x0.len()];
        let mut nm = NelderMead::new(x0, &steps, None, &mut f);
        while nm.evaluations() < budget && nm.spread() > 1e-14 {
            nm.step(&mut f);
        }
        let (x, v) = nm.best();
        (x.to_vec(), v)
    }

    #[test]
    fn minimizes_rosenbrock() {
        let (x, v) = run(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
            4000,
        );
        assert!(v < 1e-8, "{v}");
        assert!((x[0] - 1.0).abs() < 1e-3 && (x[1] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn minimizes_six_dim_quadratic() {
        let target = [0.3, -0.2, 0.1, 1.0, -2.0, 0.5];
        let (x, _) = run(
            |x| x.iter().zip(&target).enumerate().map(|(i, (a, b))| (i + 1) as f64 * (a - b).powi(2)).sum(),
            &[0.0; 6],
            6000,
        );
        for (a, b) in x.iter().zip(&target) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn nan_is_treated_as_worst() {
        let (x, v) = run(|x| if x[0] < -0.5 { f64::NAN } else { (x[0] - 1.0).powi(2) }, &[0.0], 500);
        assert!(v < 1e-10 && (x[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn best_value_never_increases() {
        let mut f = |x: &[f64]| (x[0] - 3.0).abs() + (x[1] + 1.0).powi(2);
        let mut nm = NelderMead::new(&[0.0, 0.0], &[1.0, 1.0], None, &mut f);
        let mut last = nm.best().1;
        for _ in 0..200 {
            nm.step(&mut f);
            assert!(nm.best().1 <= last);
            last = nm.best().1;
        }
    }
}
