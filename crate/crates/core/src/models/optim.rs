/// Heavy-ball momentum over one flat parameter buffer:
/// `v <- mu v + g`, `p <- p - lr v`.
#[derive(Debug, Clone)]
pub(crate) struct Momentum {
    velocity: Vec<f64>,
    mu: f64,
}

impl Momentum {
    pub(crate) fn new(len: usize, mu: f64) -> Self {
        Momentum { velocity: vec![0.0; len], mu }
    }

    pub(crate) fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        debug_assert_eq!(params.len(), grad.len());
        for ((p, v), g) in params.iter_mut().zip(&mut self.velocity).zip(grad) {
            *v = self.mu * *v + g;
            *p -= lr * *v;
        }
    }
}

/// Row order for one epoch.
pub(crate) fn shuffled_order<R: rand::Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}
