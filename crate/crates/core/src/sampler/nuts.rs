//! No-U-turn sampler with multinomial trajectory sampling and a diagonal metric.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Target;

const MAX_DELTA_H: f64 = 1000.0;

/// Phase-space point with cached log density and gradient.
#[derive(Debug, Clone)]
pub struct Point {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub logp: f64,
}

impl Point {
    pub fn new<T: Target + ?Sized>(target: &T, q: Vec<f64>) -> Self {
        let mut grad = vec![0.0; q.len()];
        let logp = target
            .log_density_grad(&q, &mut grad)
            .unwrap_or(f64::NEG_INFINITY);
        Self {
            p: vec![0.0; q.len()],
            q,
            grad,
            logp,
        }
    }
}

/// Per-iteration sampler diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionStats {
    pub accept_stat: f64,
    pub tree_depth: usize,
    pub n_leapfrog: usize,
    pub divergent: bool,
    pub step_size: f64,
    pub energy: f64,
    pub logp: f64,
}

pub struct Nuts<'a, T: Target + ?Sized> {
    target: &'a T,
    pub inv_metric: Vec<f64>,
    pub step_size: f64,
    pub max_depth: usize,
    divergent: bool,
    n_leapfrog: usize,
    sum_metro_prob: f64,
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn add_into(acc: &mut [f64], b: &[f64]) {
    acc.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

/// Both ends of the span must still move along the summed momentum.
fn no_u_turn(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

impl<'a, T: Target + ?Sized> Nuts<'a, T> {
    pub fn new(target: &'a T, inv_metric: Vec<f64>, step_size: f64, max_depth: usize) -> Self {
        Self {
            target,
            inv_metric,
            step_size,
            max_depth,
            divergent: false,
            n_leapfrog: 0,
            sum_metro_prob: 0.0,
        }
    }

    fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p
            .iter()
            .zip(&self.inv_metric)
            .map(|(p, m)| p * p * m)
            .sum::<f64>()
    }

    pub fn hamiltonian(&self, z: &Point) -> f64 {
        let h = -z.logp + self.kinetic(&z.p);
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    fn p_sharp(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(&self.inv_metric).map(|(p, m)| p * m).collect()
    }

    pub fn sample_momentum(&self, z: &mut Point, rng: &mut ChaCha8Rng) {
        for (p, m) in z.p.iter_mut().zip(&self.inv_metric) {
            let n: f64 = rng.sample(StandardNormal);
            *p = n / m.sqrt();
        }
    }

    pub fn leapfrog(&self, z: &mut Point, eps: f64) {
        let half = 0.5 * eps;
        for (p, g) in z.p.iter_mut().zip(&z.grad) {
            *p += half * g;
        }
        for ((q, p), m) in z.q.iter_mut().zip(&z.p).zip(&self.inv_metric) {
            *q += eps * m * p;
        }
        match self.target.log_density_grad(&z.q, &mut z.grad) {
            Some(lp) if lp.is_finite() => {
                z.logp = lp;
                for (p, g) in z.p.iter_mut().zip(&z.grad) {
                    *p += half * g;
                }
            }
            _ => z.logp = f64::NEG_INFINITY,
        }
    }

    /// One NUTS transition starting from `z`, which is replaced by the selected point.
    pub fn transition(&mut self, z: &mut Point, rng: &mut ChaCha8Rng) -> TransitionStats {
        self.sample_momentum(z, rng);
        self.divergent = false;
        self.n_leapfrog = 0;
        self.sum_metro_prob = 0.0;

        let mut z_fwd = z.clone();
        let mut z_bck = z.clone();
        let mut z_sample = z.clone();
        let mut z_propose = z.clone();

        let p_sharp = self.p_sharp(&z.p);
        let mut p_fwd_fwd = z.p.clone();
        let mut p_sharp_fwd_fwd = p_sharp.clone();
        let mut p_fwd_bck = z.p.clone();
        let mut p_sharp_fwd_bck = p_sharp.clone();
        let mut p_bck_fwd = z.p.clone();
        let mut p_sharp_bck_fwd = p_sharp.clone();
        let mut p_bck_bck = z.p.clone();
        let mut p_sharp_bck_bck = p_sharp;

        let mut rho = z.p.clone();
        let mut log_sum_weight = 0.0;
        let h0 = self.hamiltonian(z);
        let dim = z.q.len();
        let mut depth = 0;

        while depth < self.max_depth {
            let mut rho_fwd = vec![0.0; dim];
            let mut rho_bck = vec![0.0; dim];
            let mut log_sum_weight_subtree = f64::NEG_INFINITY;
            let valid;
            if rng.random::<f64>() > 0.5 {
                rho_bck.copy_from_slice(&rho);
                p_bck_fwd.copy_from_slice(&p_fwd_bck);
                p_sharp_bck_fwd.copy_from_slice(&p_sharp_fwd_bck);
                let mut zc = z_fwd.clone();
                valid = self.build_tree(
                    depth,
                    &mut zc,
                    &mut z_propose,
                    &mut p_sharp_fwd_bck,
                    &mut p_sharp_fwd_fwd,
                    &mut rho_fwd,
                    &mut p_fwd_bck,
                    &mut p_fwd_fwd,
                    h0,
                    1.0,
                    &mut log_sum_weight_subtree,
                    rng,
                );
                z_fwd = zc;
            } else {
                rho_fwd.copy_from_slice(&rho);
                p_fwd_bck.copy_from_slice(&p_bck_fwd);
                p_sharp_fwd_bck.copy_from_slice(&p_sharp_bck_fwd);
                let mut zc = z_bck.clone();
                valid = self.build_tree(
                    depth,
                    &mut zc,
                    &mut z_propose,
                    &mut p_sharp_bck_fwd,
                    &mut p_sharp_bck_bck,
                    &mut rho_bck,
                    &mut p_bck_fwd,
                    &mut p_bck_bck,
                    h0,
                    -1.0,
                    &mut log_sum_weight_subtree,
                    rng,
                );
                z_bck = zc;
            }
            if !valid {
                break;
            }
            depth += 1;

            if log_sum_weight_subtree > log_sum_weight {
                z_sample = z_propose.clone();
            } else {
                let accept = (log_sum_weight_subtree - log_sum_weight).exp();
                if rng.random::<f64>() < accept {
                    z_sample = z_propose.clone();
                }
            }
            log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

            rho = add(&rho_bck, &rho_fwd);
            let mut persist = no_u_turn(&p_sharp_bck_bck, &p_sharp_fwd_fwd, &rho);
            let rho_ext = add(&rho_bck, &p_fwd_bck);
            persist &= no_u_turn(&p_sharp_bck_bck, &p_sharp_fwd_bck, &rho_ext);
            let rho_ext = add(&rho_fwd, &p_bck_fwd);
            persist &= no_u_turn(&p_sharp_bck_fwd, &p_sharp_fwd_fwd, &rho_ext);
            if !persist {
                break;
            }
        }

        let accept_stat = if self.n_leapfrog > 0 {
            self.sum_metro_prob / self.n_leapfrog as f64
        } else {
            0.0
        };
        *z = z_sample;
        TransitionStats {
            accept_stat,
            tree_depth: depth,
            n_leapfrog: self.n_leapfrog,
            divergent: self.divergent,
            step_size: self.step_size,
            energy: self.hamiltonian(z),
            logp: z.logp,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn build_tree(
        &mut self,
        depth: usize,
        z: &mut Point,
        z_propose: &mut Point,
        p_sharp_beg: &mut Vec<f64>,
        p_sharp_end: &mut Vec<f64>,
        rho: &mut [f64],
        p_beg: &mut Vec<f64>,
        p_end: &mut Vec<f64>,
        h0: f64,
        sign: f64,
        log_sum_weight: &mut f64,
        rng: &mut ChaCha8Rng,
    ) -> bool {
        if depth == 0 {
            self.leapfrog(z, sign * self.step_size);
            self.n_leapfrog += 1;
            let h = self.hamiltonian(z);
            if h - h0 > MAX_DELTA_H {
                self.divergent = true;
            }
            *log_sum_weight = log_sum_exp(*log_sum_weight, h0 - h);
            self.sum_metro_prob += if h0 - h > 0.0 { 1.0 } else { (h0 - h).exp() };
            z_propose.clone_from(z);
            *p_sharp_beg = self.p_sharp(&z.p);
            p_sharp_end.clone_from(p_sharp_beg);
            add_into(rho, &z.p);
            p_beg.clone_from(&z.p);
            p_end.clone_from(p_beg);
            return !self.divergent;
        }

        let dim = z.q.len();
        // first half
        let mut log_sum_weight_init = f64::NEG_INFINITY;
        let mut p_init_end = vec![0.0; dim];
        let mut p_sharp_init_end = vec![0.0; dim];
        let mut rho_init = vec![0.0; dim];
        let valid_init = self.build_tree(
            depth - 1,
            z,
            z_propose,
            p_sharp_beg,
            &mut p_sharp_init_end,
            &mut rho_init,
            p_beg,
            &mut p_init_end,
            h0,
            sign,
            &mut log_sum_weight_init,
            rng,
        );
        if !valid_init {
            return false;
        }

        // second half
        let mut z_propose_final = z.clone();
        let mut log_sum_weight_final = f64::NEG_INFINITY;
        let mut p_final_beg = vec![0.0; dim];
        let mut p_sharp_final_beg = vec![0.0; dim];
        let mut rho_final = vec![0.0; dim];
        let valid_final = self.build_tree(
            depth - 1,
            z,
            &mut z_propose_final,
            &mut p_sharp_final_beg,
            p_sharp_end,
            &mut rho_final,
            &mut p_final_beg,
            p_end,
            h0,
            sign,
            &mut log_sum_weight_final,
            rng,
        );
        if !valid_final {
            return false;
        }

        let log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
        *log_sum_weight = log_sum_exp(*log_sum_weight, log_sum_weight_subtree);
        if log_sum_weight_final > log_sum_weight_subtree {
            *z_propose = z_propose_final;
        } else {
            let accept = (log_sum_weight_final - log_sum_weight_subtree).exp();
            if rng.random::<f64>() < accept {
                *z_propose = z_propose_final;
            }
        }

        let rho_subtree = add(&rho_init, &rho_final);
        add_into(rho, &rho_subtree);
        let mut persist = no_u_turn(p_sharp_beg, p_sharp_end, &rho_subtree);
        let rho_ext = add(&rho_init, &p_final_beg);
        persist &= no_u_turn(p_sharp_beg, &p_sharp_final_beg, &rho_ext);
        let rho_ext = add(&rho_final, &p_init_end);
        persist &= no_u_turn(&p_sharp_init_end, p_sharp_end, &rho_ext);
        persist
    }

    /// Doubles or halves the step size until one leapfrog step crosses an acceptance
    /// probability of 0.8.
    pub fn init_step_size(&mut self, z: &Point, rng: &mut ChaCha8Rng) -> Result<(), String> {
        if self.step_size == 0.0 || self.step_size > 1e7 {
            return Ok(());
        }
        let threshold = 0.8f64.ln();
        let trial = |this: &Self, rng: &mut ChaCha8Rng| {
            let mut w = z.clone();
            this.sample_momentum(&mut w, rng);
            let h0 = this.hamiltonian(&w);
            this.leapfrog(&mut w, this.step_size);
            h0 - this.hamiltonian(&w)
        };
        let delta = trial(self, rng);
        let up = delta > threshold;
        loop {
            let delta = trial(self, rng);
            if up && !(delta > threshold) || !up && !(delta < threshold) {
                break;
            }
            self.step_size *= if up { 2.0 } else { 0.5 };
            if self.step_size > 1e7 {
                return Err("step size diverged to infinity during initialization".into());
            }
            if self.step_size == 0.0 {
                return Err("step size collapsed to zero during initialization".into());
            }
        }
        Ok(())
    }
}
