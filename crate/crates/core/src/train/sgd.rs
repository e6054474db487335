use crate::vit::{Grads, ParamGroup, ParamStore};

/// Learning rate per parameter group.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupRates {
    pub encoder: f64,
    pub classifier: f64,
    pub domain: f64,
}

impl GroupRates {
    pub fn uniform(lr: f64) -> Self {
        GroupRates {
            encoder: lr,
            classifier: lr,
            domain: lr,
        }
    }

    pub fn get(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Encoder => self.encoder,
            ParamGroup::Classifier => self.classifier,
            ParamGroup::Domain => self.domain,
        }
    }
}

/// Heavy-ball SGD: v ← μ·v + g, θ ← θ − lr·v.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub rates: GroupRates,
    pub momentum: f64,
    velocity: Vec<Option<Vec<f64>>>,
}

impl Sgd {
    pub fn new(rates: GroupRates, momentum: f64) -> Self {
        Sgd {
            rates,
            momentum,
            velocity: Vec::new(),
        }
    }

    /// Updates every parameter that has a gradient; the rest stay put.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads) {
        if self.velocity.len() != store.len() {
            self.velocity = vec![None; store.len()];
        }
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let Some(g) = grads.get(id) else { continue };
            let lr = self.rates.get(store.param(id).group);
            let v = self.velocity[id.index()].get_or_insert_with(|| vec![0.0; g.len()]);
            for (vi, gi) in v.iter_mut().zip(g) {
                *vi = self.momentum * *vi + gi;
            }
            for (p, vi) in store.get_mut(id).data_mut().iter_mut().zip(v.iter()) {
                *p -= lr * vi;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn one_param(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("theta", ParamGroup::Encoder, Tensor::vector(vec![v]));
        s
    }

    fn grad(store: &ParamStore, g: f64) -> Grads {
        let mut gr = Grads::zeros_like(store);
        gr.add(store.find("theta").unwrap(), &[g]);
        gr
    }

    #[test]
    fn plain_step() {
        let mut s = one_param(1.0);
        let mut opt = Sgd::new(GroupRates::uniform(0.1), 0.0);
        {
            let g = grad(&s, 1.0);
            opt.step(&mut s, &g);
        }
        assert!((s.get(s.find("theta").unwrap()).data()[0] - 0.9).abs() < 1e-15);
        let before = s.clone();
        {
            let g = grad(&s, 0.0);
            opt.step(&mut s, &g);
        }
        assert_eq!(s, before);
        {
            let g = Grads::zeros_like(&s);
            opt.step(&mut s, &g);
        }
        assert_eq!(s, before);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut s = one_param(1.0);
        let id = s.find("theta").unwrap();
        let mut opt = Sgd::new(GroupRates::uniform(0.1), 0.0);
        for _ in 0..100 {
            let theta = s.get(id).data()[0];
            {
                let g = grad(&s, 2.0 * theta);
                opt.step(&mut s, &g);
            }
        }
        let theta = s.get(id).data()[0];
        assert!(theta.abs() < 1e-4);
        assert!((theta - 0.8f64.powi(100)).abs() < 1e-15);
    }

    #[test]
    fn group_rates_apply() {
        let mut s = ParamStore::new();
        let a = s.add("a", ParamGroup::Encoder, Tensor::vector(vec![1.0]));
        let b = s.add("b", ParamGroup::Classifier, Tensor::vector(vec![1.0]));
        let mut g = Grads::zeros_like(&s);
        g.add(a, &[1.0]);
        g.add(b, &[1.0]);
        let mut opt = Sgd::new(
            GroupRates {
                encoder: 0.01,
                classifier: 0.1,
                domain: 0.0,
            },
            0.9,
        );
        opt.step(&mut s, &g);
        opt.step(&mut s, &g);
        assert!((s.get(a).data()[0] - (1.0 - 0.01 * (1.0 + 1.9))).abs() < 1e-15);
        assert!((s.get(b).data()[0] - (1.0 - 0.1 * (1.0 + 1.9))).abs() < 1e-15);
    }
}
