#![allow(dead_code)]

use orthate::estimators::{Dataset, DrawContext, ResidualSampler, SplitPlan};
use orthate::nuisance::FeatureMatrix;

/// The hand-worked fixture: 5 training rows, 6 estimation rows, binary
/// treatment, one covariate.
pub fn toy_fixture() -> (Dataset, SplitPlan) {
    let text = include_str!("../fixtures/toy.csv");
    let mut y = Vec::new();
    let mut d = Vec::new();
    let mut z = Vec::new();
    let mut est = Vec::new();
    let mut train = Vec::new();
    for (m, line) in text.lines().skip(1).enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        match cells[0] {
            "train" => train.push(m),
            "est" => est.push(m),
            other => panic!("unknown fold {other}"),
        }
        y.push(cells[1].parse::<f64>().unwrap());
        d.push(cells[2].parse::<usize>().unwrap());
        z.push(cells[3].parse::<f64>().unwrap());
    }
    let n = y.len();
    let ds = Dataset::new(y, d, FeatureMatrix::new(n, 1, z).unwrap(), 2).unwrap();
    let split = SplitPlan::from_indices(n, est, train).unwrap();
    (ds, split)
}

/// Returns `pool[picks[treatment][j]]` for the `j`-th draw of a repetition.
pub struct PinnedSampler {
    pub picks: Vec<Vec<usize>>,
    cursor: usize,
    current: usize,
}

impl PinnedSampler {
    pub fn new(picks: Vec<Vec<usize>>) -> Self {
        Self { picks, cursor: 0, current: 0 }
    }
}

impl ResidualSampler for PinnedSampler {
    fn begin(&mut self, treatment: usize, _repetition: usize) {
        self.current = treatment;
        self.cursor = 0;
    }

    fn draw(&mut self, _ctx: &DrawContext, pool: &[f64]) -> f64 {
        let v = pool[self.picks[self.current][self.cursor]];
        self.cursor += 1;
        v
    }
}

/// Hands each counterfactual unit its own true residual `Y^i_m - g_m`.
pub struct OwnResidual<'a> {
    pub potential_outcomes: &'a [Vec<f64>],
}

impl ResidualSampler for OwnResidual<'_> {
    fn begin(&mut self, _: usize, _: usize) {}

    fn draw(&mut self, ctx: &DrawContext, _pool: &[f64]) -> f64 {
        self.potential_outcomes[ctx.treatment][ctx.row] - ctx.outcome_prediction
    }
}
