//! Private convex costs `f_i` with subgradient oracles.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("objective set is empty")]
    Empty,
    #[error("component {index} has dimension {got}, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, got: usize },
    #[error("max-affine component needs equally many slopes and intercepts, at least one")]
    BadMaxAffine,
    #[error("search box coordinate {0} has lo >= hi")]
    DegenerateBox(usize),
    #[error("brute-force search supports dimension <= 3, got {0}")]
    DimensionTooLarge(usize),
    #[error("search box has {got} coordinates, objective has dimension {expected}")]
    BoxDimension { expected: usize, got: usize },
    #[error("grid size must be at least 1")]
    EmptyGrid,
}

/// One private cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Component {
    /// `f(z) = ||z - anchor||_1`.
    AnchoredL1 { anchor: Vec<f64> },
    /// `f(z) = max_k (a_k . z + b_k)`.
    MaxAffine { slopes: Vec<Vec<f64>>, intercepts: Vec<f64> },
    /// `f(z) = 0.5 ||z - center||^2`. Subgradients are unbounded, so runs
    /// using it can only report a bound with `G` measured on the trajectory.
    Quadratic { center: Vec<f64> },
}

impl Component {
    pub fn anchored_l1(anchor: Vec<f64>) -> Self {
        Self::AnchoredL1 { anchor }
    }

    pub fn max_affine(slopes: Vec<Vec<f64>>, intercepts: Vec<f64>) -> Result<Self, ObjectiveError> {
        let c = Self::MaxAffine { slopes, intercepts };
        c.check()?;
        Ok(c)
    }

    fn check(&self) -> Result<(), ObjectiveError> {
        if let Self::MaxAffine { slopes, intercepts } = self {
            if slopes.is_empty() || slopes.len() != intercepts.len() {
                return Err(ObjectiveError::BadMaxAffine);
            }
            let d = slopes[0].len();
            if let Some(index) = slopes.iter().position(|a| a.len() != d) {
                return Err(ObjectiveError::DimensionMismatch { index, expected: d, got: slopes[index].len() });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::AnchoredL1 { anchor } => anchor.len(),
            Self::MaxAffine { slopes, .. } => slopes.first().map_or(0, Vec::len),
            Self::Quadratic { center } => center.len(),
        }
    }

    pub fn evaluate(&self, z: &[f64]) -> f64 {
        match self {
            Self::AnchoredL1 { anchor } => z.iter().zip(anchor).map(|(a, c)| (a - c).abs()).sum(),
            Self::MaxAffine { slopes, intercepts } => slopes
                .iter()
                .zip(intercepts)
                .map(|(a, b)| dot(a, z) + b)
                .fold(f64::NEG_INFINITY, f64::max),
            Self::Quadratic { center } => {
                0.5 * z.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>()
            }
        }
    }

    /// A subgradient at `z`. At kinks the canonical element is returned:
    /// 0 for each `|.|` coordinate, the lowest-index active piece for max-affine.
    pub fn subgradient(&self, z: &[f64]) -> Vec<f64> {
        match self {
            Self::AnchoredL1 { anchor } => z
                .iter()
                .zip(anchor)
                .map(|(a, c)| {
                    let diff = a - c;
                    if diff > 0.0 {
                        1.0
                    } else if diff < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                })
                .collect(),
            Self::MaxAffine { slopes, intercepts } => {
                let mut best = 0;
                let mut best_value = f64::NEG_INFINITY;
                for (k, (a, b)) in slopes.iter().zip(intercepts).enumerate() {
                    let value = dot(a, z) + b;
                    if value > best_value {
                        best = k;
                        best_value = value;
                    }
                }
                slopes[best].clone()
            }
            Self::Quadratic { center } => z.iter().zip(center).map(|(a, c)| a - c).collect(),
        }
    }

    /// Uniform bound on the 2-norm of every subgradient over all of `R^d`.
    pub fn bound_g(&self) -> Option<f64> {
        match self {
            Self::AnchoredL1 { anchor } => Some((anchor.len() as f64).sqrt()),
            Self::MaxAffine { slopes, .. } => Some(slopes.iter().map(|a| norm(a)).fold(0.0, f64::max)),
            Self::Quadratic { .. } => None,
        }
    }
}

/// The `n` private costs; the global cost is their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSet {
    components: Vec<Component>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    optimum_hint: Option<Optimum>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub point: Vec<f64>,
    pub value: f64,
}

impl ObjectiveSet {
    pub fn new(components: Vec<Component>) -> Result<Self, ObjectiveError> {
        let d = components.first().ok_or(ObjectiveError::Empty)?.dim();
        for (index, c) in components.iter().enumerate() {
            c.check()?;
            if c.dim() != d {
                return Err(ObjectiveError::DimensionMismatch { index, expected: d, got: c.dim() });
            }
        }
        Ok(Self { components, optimum_hint: None })
    }

    pub fn with_optimum(mut self, optimum: Optimum) -> Self {
        self.optimum_hint = Some(optimum);
        self
    }

    /// One anchored-l1 component per anchor, in dimension 1.
    pub fn scalar_l1(anchors: &[f64]) -> Self {
        Self::new(anchors.iter().map(|&a| Component::anchored_l1(vec![a])).collect())
            .expect("non-empty scalar anchors")
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn n(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn optimum_hint(&self) -> Option<&Optimum> {
        self.optimum_hint.as_ref()
    }

    /// `G`: the largest per-component bound, if every component has one.
    pub fn bound_g(&self) -> Option<f64> {
        self.components.iter().map(Component::bound_g).try_fold(0.0, |acc, g| g.map(|g| f64::max(acc, g)))
    }

    pub fn evaluate_global(&self, z: &[f64]) -> f64 {
        self.components.iter().map(|c| c.evaluate(z)).sum::<f64>() / self.n() as f64
    }
}

/// Grid search over `bounds`: a coarse grid with `coarse` intervals per
/// coordinate, then repeated refinement around the incumbent, each round
/// with ten times the resolution, until the grid step is below `1e-9`
/// (at most 12 rounds). Test oracle only.
pub fn brute_force_optimum(
    obj: &ObjectiveSet,
    bounds: &[(f64, f64)],
    coarse: usize,
) -> Result<Optimum, ObjectiveError> {
    let d = obj.dim();
    if d > 3 {
        return Err(ObjectiveError::DimensionTooLarge(d));
    }
    if bounds.len() != d {
        return Err(ObjectiveError::BoxDimension { expected: d, got: bounds.len() });
    }
    if coarse == 0 {
        return Err(ObjectiveError::EmptyGrid);
    }
    if let Some(k) = bounds.iter().position(|&(lo, hi)| !(lo < hi)) {
        return Err(ObjectiveError::DegenerateBox(k));
    }

    let mut region: Vec<(f64, f64)> = bounds.to_vec();
    let mut intervals = coarse;
    let mut best = grid_search(obj, &region, intervals, None);
    for _ in 0..12 {
        let span = region.iter().map(|&(lo, hi)| hi - lo).fold(0.0, f64::max);
        if span / intervals as f64 <= 1e-9 {
            break;
        }
        let steps: Vec<f64> = region.iter().map(|&(lo, hi)| (hi - lo) / intervals as f64).collect();
        region = best
            .point
            .iter()
            .zip(&steps)
            .zip(bounds)
            .map(|((&c, &h), &(lo, hi))| ((c - h).max(lo), (c + h).min(hi)))
            .collect();
        intervals = 20;
        best = grid_search(obj, &region, intervals, Some(best));
    }
    Ok(best)
}

fn grid_search(obj: &ObjectiveSet, region: &[(f64, f64)], intervals: usize, seed: Option<Optimum>) -> Optimum {
    let d = region.len();
    let mut best = seed.unwrap_or(Optimum { point: vec![0.0; d], value: f64::INFINITY });
    let total = (intervals + 1).pow(d as u32);
    let mut point = vec![0.0; d];
    for idx in 0..total {
        let mut rest = idx;
        for (k, &(lo, hi)) in region.iter().enumerate() {
            let step = rest % (intervals + 1);
            rest /= intervals + 1;
            point[k] = lo + (hi - lo) * step as f64 / intervals as f64;
        }
        let value = obj.evaluate_global(&point);
        if value < best.value {
            best = Optimum { point: point.clone(), value };
        }
    }
    best
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn anchored_l1_examples() {
        let f = Component::anchored_l1(vec![0.0]);
        assert_eq!(f.evaluate(&[2.0]), 2.0);
        assert_eq!(f.subgradient(&[2.0]), vec![1.0]);
        assert_eq!(f.subgradient(&[0.0]), vec![0.0]);

        let f = Component::anchored_l1(vec![1.0, 1.0]);
        assert_eq!(f.evaluate(&[0.0, 0.0]), 2.0);
        let g = f.subgradient(&[0.0, 0.0]);
        assert_eq!(g, vec![-1.0, -1.0]);
        assert!(norm(&g) <= f.bound_g().unwrap());
        assert_eq!(f.bound_g(), Some(2f64.sqrt()));
    }

    #[test]
    fn max_affine_examples() {
        let abs = Component::max_affine(vec![vec![1.0], vec![-1.0]], vec![0.0, 0.0]).unwrap();
        let l1 = Component::anchored_l1(vec![0.0]);
        for z in [-3.0, -0.5, 0.0, 0.25, 4.0] {
            assert_eq!(abs.evaluate(&[z]), l1.evaluate(&[z]));
        }
        // tie at zero: lowest index wins
        assert_eq!(abs.subgradient(&[0.0]), vec![1.0]);

        let f = Component::max_affine(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0]).unwrap();
        assert_eq!(f.evaluate(&[2.0, 1.0]), 2.0);
        assert_eq!(f.subgradient(&[2.0, 1.0]), vec![1.0, 0.0]);
        assert_eq!(f.bound_g(), Some(1.0));

        assert_eq!(Component::max_affine(vec![], vec![]), Err(ObjectiveError::BadMaxAffine));
        assert_eq!(Component::max_affine(vec![vec![1.0]], vec![0.0, 1.0]), Err(ObjectiveError::BadMaxAffine));
    }

    #[test]
    fn global_cost_is_mean() {
        let single = ObjectiveSet::scalar_l1(&[3.0]);
        assert_eq!(single.evaluate_global(&[1.0]), 2.0);
        let three = ObjectiveSet::scalar_l1(&[0.0, 1.0, 2.0]);
        assert!((three.evaluate_global(&[1.0]) - 2.0 / 3.0).abs() < 1e-15);
        let same = ObjectiveSet::scalar_l1(&[1.5, 1.5, 1.5, 1.5]);
        assert_eq!(same.evaluate_global(&[-2.0]), 3.5);
    }

    #[test]
    fn bound_g_is_max_or_none() {
        let set = ObjectiveSet::new(vec![
            Component::anchored_l1(vec![0.0, 0.0]),
            Component::max_affine(vec![vec![3.0, 4.0]], vec![0.0]).unwrap(),
        ])
        .unwrap();
        assert_eq!(set.bound_g(), Some(5.0));
        let with_quad = ObjectiveSet::new(vec![
            Component::anchored_l1(vec![0.0]),
            Component::Quadratic { center: vec![1.0] },
        ])
        .unwrap();
        assert_eq!(with_quad.bound_g(), None);
        assert!(matches!(
            ObjectiveSet::new(vec![Component::anchored_l1(vec![0.0]), Component::anchored_l1(vec![0.0, 1.0])]),
            Err(ObjectiveError::DimensionMismatch { index: 1, .. })
        ));
    }

    #[test]
    fn brute_force_examples() {
        let three = ObjectiveSet::scalar_l1(&[0.0, 1.0, 2.0]);
        let opt = brute_force_optimum(&three, &[(-5.0, 5.0)], 100).unwrap();
        assert!((opt.point[0] - 1.0).abs() <= 1e-3);
        assert!((opt.value - 2.0 / 3.0).abs() <= 1e-9);

        let one = ObjectiveSet::scalar_l1(&[7.0]);
        let opt = brute_force_optimum(&one, &[(0.0, 10.0)], 100).unwrap();
        assert!((opt.point[0] - 7.0).abs() <= 1e-3);
        assert!(opt.value.abs() <= 1e-3);

        let a = 1.7;
        let sym = ObjectiveSet::scalar_l1(&[-a, a]);
        let opt = brute_force_optimum(&sym, &[(-5.0, 5.0)], 100).unwrap();
        assert!(opt.point[0] >= -a && opt.point[0] <= a);
        assert!((opt.value - a).abs() <= 1e-12);
    }

    #[test]
    fn brute_force_errors() {
        let set = ObjectiveSet::scalar_l1(&[0.0]);
        assert_eq!(brute_force_optimum(&set, &[(1.0, 1.0)], 10), Err(ObjectiveError::DegenerateBox(0)));
        assert_eq!(
            brute_force_optimum(&set, &[(0.0, 1.0), (0.0, 1.0)], 10),
            Err(ObjectiveError::BoxDimension { expected: 1, got: 2 })
        );
        let d4 = ObjectiveSet::new(vec![Component::anchored_l1(vec![0.0; 4])]).unwrap();
        assert_eq!(brute_force_optimum(&d4, &[(0.0, 1.0); 4], 10), Err(ObjectiveError::DimensionTooLarge(4)));
    }

    #[test]
    fn brute_force_matches_median_for_odd_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [1usize, 3, 5, 7] {
            for _ in 0..5 {
                let mut anchors: Vec<f64> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();
                let set = ObjectiveSet::scalar_l1(&anchors);
                anchors.sort_by(f64::total_cmp);
                let median = anchors[n / 2];
                let opt = brute_force_optimum(&set, &[(-5.0, 5.0)], 100).unwrap();
                // final grid spacing is 0.1 / 100 = 1e-3
                assert!((opt.point[0] - median).abs() <= 1e-3, "n={n}");
                assert!(opt.value - set.evaluate_global(&[median]) <= 1e-3);
                assert!(opt.value >= set.evaluate_global(&[median]) - 1e-12);
            }
        }
    }

    #[test]
    fn two_dimensional_search() {
        let set = ObjectiveSet::new(vec![
            Component::anchored_l1(vec![1.0, -2.0]),
            Component::anchored_l1(vec![1.0, -2.0]),
            Component::max_affine(vec![vec![1.0, 0.0], vec![-1.0, 0.0]], vec![-1.0, 1.0]).unwrap(),
        ])
        .unwrap();
        let opt = brute_force_optimum(&set, &[(-3.0, 3.0), (-3.0, 3.0)], 30).unwrap();
        assert!((opt.point[0] - 1.0).abs() < 1e-2 && (opt.point[1] + 2.0).abs() < 1e-2);
    }

    fn families(d: usize, rng: &mut ChaCha8Rng) -> Vec<Component> {
        let mut draw = |k: usize| -> Vec<f64> { (0..k).map(|_| rng.gen_range(-3.0..3.0)).collect() };
        let anchor = draw(d);
        let slopes: Vec<Vec<f64>> = (0..4).map(|_| draw(d)).collect();
        let intercepts = draw(4);
        vec![Component::anchored_l1(anchor), Component::max_affine(slopes, intercepts).unwrap()]
    }

    #[test]
    fn subgradient_inequality_and_lipschitz_consequence() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in 1..=3 {
            for f in families(d, &mut rng) {
                let g_bound = f.bound_g().unwrap();
                for _ in 0..10_000 {
                    let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect();
                    let y: Vec<f64> = (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect();
                    let g = f.subgradient(&x);
                    assert!(norm(&g) <= g_bound + 1e-12);
                    let diff: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
                    let lhs = f.evaluate(&y);
                    let rhs = f.evaluate(&x) + dot(&g, &diff);
                    assert!(lhs >= rhs - 1e-12, "subgradient inequality: {lhs} < {rhs}");
                    assert!(lhs - f.evaluate(&x) >= -g_bound * norm(&diff) - 1e-12);
                }
            }
        }
    }

    #[test]
    fn subgradient_inequality_at_kinks() {
        let f = Component::anchored_l1(vec![0.5, -1.0]);
        let x = [0.5, -1.0];
        let g = f.subgradient(&x);
        for y in [[0.0, 0.0], [3.0, -4.0], [0.5, -1.0]] {
            let diff = [y[0] - x[0], y[1] - x[1]];
            assert!(f.evaluate(&y) >= f.evaluate(&x) + dot(&g, &diff));
        }
    }
}
