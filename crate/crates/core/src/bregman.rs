//! Regularizer geometries for the per-player mirror step.
//!
//! Every player's strategy lives on a scaled simplex `{z >= floor, sum z = mass}`
//! ([`FeasibleSet`]). Two mirror maps ship: the squared Euclidean norm (projected
//! gradient descent) and the negative entropy (multiplicative updates). Both
//! argmins are solved exactly; ties break toward the lowest index.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BregmanError {
    #[error("floored set is empty: {size} paths x floor {floor} exceeds mass {mass}")]
    EmptySet { size: usize, mass: f64, floor: f64 },
    #[error("invalid feasible set: {0}")]
    InvalidSet(String),
    #[error("expected vectors of length {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("entropy divergence undefined: v[{index}] = 0 while u[{index}] > 0")]
    Domain { index: usize },
    #[error("entropy projection needs a strictly positive input, found p[{index}] = {value}")]
    NonPositive { index: usize, value: f64 },
    #[error("learning rate must be positive and finite, found {0}")]
    StepSize(f64),
    #[error("non-finite entry at index {0}")]
    NonFinite(usize),
}

/// `{z in R^size : z_s >= floor, sum_s z_s = mass}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibleSet {
    size: usize,
    mass: f64,
    floor: f64,
}

impl FeasibleSet {
    pub fn new(size: usize, mass: f64, floor: f64) -> Result<Self, BregmanError> {
        if size == 0 {
            return Err(BregmanError::InvalidSet("no coordinates".into()));
        }
        if !(mass.is_finite() && mass > 0.0) {
            return Err(BregmanError::InvalidSet(format!(
                "mass {mass} must be positive"
            )));
        }
        if !(floor.is_finite() && floor >= 0.0) {
            return Err(BregmanError::InvalidSet(format!(
                "floor {floor} must be nonnegative"
            )));
        }
        if size as f64 * floor > mass * (1.0 + 1e-12) {
            return Err(BregmanError::EmptySet { size, mass, floor });
        }
        Ok(Self { size, mass, floor })
    }

    /// The scaled simplex `K_i`.
    pub fn simplex(size: usize, mass: f64) -> Result<Self, BregmanError> {
        Self::new(size, mass, 0.0)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// Mass left once every coordinate sits at the floor.
    pub fn free_mass(&self) -> f64 {
        (self.mass - self.size as f64 * self.floor).max(0.0)
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        z.len() == self.size
            && z.iter().all(|&v| v >= self.floor - tol)
            && (z.iter().sum::<f64>() - self.mass).abs() <= tol
    }

    /// Vertex `s`: floor everywhere, all free mass on `s`.
    pub fn vertex(&self, s: usize) -> Vec<f64> {
        let mut v = vec![self.floor; self.size];
        v[s] += self.free_mass();
        v
    }

    fn check_len(&self, v: &[f64]) -> Result<(), BregmanError> {
        if v.len() != self.size {
            return Err(BregmanError::Dimension {
                expected: self.size,
                found: v.len(),
            });
        }
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(BregmanError::NonFinite(i));
        }
        Ok(())
    }
}

/// A mirror map `R` on the nonnegative orthant.
pub trait MirrorMap {
    /// `R(u) - R(v) - <grad R(v), u - v>`.
    fn divergence(&self, u: &[f64], v: &[f64]) -> Result<f64, BregmanError>;

    /// `grad R(z)`.
    fn gradient(&self, z: &[f64]) -> Vec<f64>;

    /// `argmin_{z in set} eta <g, z> + D(z, x)`.
    fn mirror_step(
        &self,
        set: &FeasibleSet,
        x: &[f64],
        g: &[f64],
        eta: f64,
    ) -> Result<Vec<f64>, BregmanError>;

    /// `argmin_{z in set} D(z, p)`.
    fn project(&self, set: &FeasibleSet, p: &[f64]) -> Result<Vec<f64>, BregmanError>;

    /// `Gamma` with `Gamma D(u, v) <= |u - v|_2^2` on `set`; zero when no
    /// positive constant exists.
    fn gamma(&self, set: &FeasibleSet) -> f64;
}

/// `R(u) = |u|_2^2 / 2`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Euclidean;

/// `R(u) = sum_s u_s ln u_s - u_s`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NegativeEntropy;

fn check_step(eta: f64) -> Result<(), BregmanError> {
    if eta.is_finite() && eta > 0.0 {
        Ok(())
    } else {
        Err(BregmanError::StepSize(eta))
    }
}

/// Euclidean projection of `p` onto `{w >= 0, sum w = radius}` by the
/// sorted-threshold rule.
pub fn project_simplex(p: &[f64], radius: f64) -> Vec<f64> {
    if radius <= 0.0 {
        return vec![0.0; p.len()];
    }
    let mut sorted = p.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut threshold = (sorted[0] - radius) / 1.0;
    for (j, &v) in sorted.iter().enumerate() {
        cumulative += v;
        let candidate = (cumulative - radius) / (j as f64 + 1.0);
        if v - candidate > 0.0 {
            threshold = candidate;
        } else {
            break;
        }
    }
    p.iter().map(|&v| (v - threshold).max(0.0)).collect()
}

impl Euclidean {
    fn project_unchecked(set: &FeasibleSet, p: &[f64]) -> Vec<f64> {
        let shifted: Vec<f64> = p.iter().map(|&v| v - set.floor).collect();
        let mut z: Vec<f64> = project_simplex(&shifted, set.free_mass())
            .into_iter()
            .map(|w| w + set.floor)
            .collect();
        fix_mass(&mut z, set);
        z
    }
}

impl MirrorMap for Euclidean {
    fn divergence(&self, u: &[f64], v: &[f64]) -> Result<f64, BregmanError> {
        if u.len() != v.len() {
            return Err(BregmanError::Dimension {
                expected: v.len(),
                found: u.len(),
            });
        }
        Ok(u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 2.0)
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        z.to_vec()
    }

    fn mirror_step(
        &self,
        set: &FeasibleSet,
        x: &[f64],
        g: &[f64],
        eta: f64,
    ) -> Result<Vec<f64>, BregmanError> {
        set.check_len(x)?;
        set.check_len(g)?;
        check_step(eta)?;
        if g.iter().all(|&v| v == 0.0) && set.contains(x, 0.0) {
            return Ok(x.to_vec());
        }
        let target: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - eta * b).collect();
        Ok(Self::project_unchecked(set, &target))
    }

    fn project(&self, set: &FeasibleSet, p: &[f64]) -> Result<Vec<f64>, BregmanError> {
        set.check_len(p)?;
        if set.contains(p, 0.0) {
            return Ok(p.to_vec());
        }
        Ok(Self::project_unchecked(set, p))
    }

    fn gamma(&self, _set: &FeasibleSet) -> f64 {
        2.0
    }
}

impl NegativeEntropy {
    /// `z_s = max(floor, c w_s)` with `c` chosen so that `sum z = mass`.
    /// Entries are pinned to the floor in rounds; each round only lowers `c`.
    fn water_fill(set: &FeasibleSet, weights: &[f64]) -> Vec<f64> {
        let mut pinned = vec![false; weights.len()];
        let mut z = vec![set.floor; weights.len()];
        for _ in 0..=weights.len() {
            let free_weight: f64 = weights
                .iter()
                .zip(&pinned)
                .filter(|(_, &p)| !p)
                .map(|(w, _)| w)
                .sum();
            let pinned_count = pinned.iter().filter(|&&p| p).count();
            let free_mass = set.mass - pinned_count as f64 * set.floor;
            if free_weight <= 0.0 {
                // all remaining weights vanished: spread the free mass evenly
                let free = weights.len() - pinned_count;
                for (zs, &p) in z.iter_mut().zip(&pinned) {
                    if !p {
                        *zs = free_mass / free as f64;
                    }
                }
                break;
            }
            let scale = free_mass / free_weight;
            let mut violated = false;
            for s in 0..weights.len() {
                if pinned[s] {
                    z[s] = set.floor;
                    continue;
                }
                let v = scale * weights[s];
                if v < set.floor {
                    pinned[s] = true;
                    violated = true;
                }
                z[s] = v;
            }
            if !violated {
                break;
            }
        }
        fix_mass(&mut z, set);
        z
    }
}

impl MirrorMap for NegativeEntropy {
    fn divergence(&self, u: &[f64], v: &[f64]) -> Result<f64, BregmanError> {
        if u.len() != v.len() {
            return Err(BregmanError::Dimension {
                expected: v.len(),
                found: u.len(),
            });
        }
        let mut total = 0.0;
        for (index, (&a, &b)) in u.iter().zip(v).enumerate() {
            if a > 0.0 {
                if b <= 0.0 {
                    return Err(BregmanError::Domain { index });
                }
                total += a * (a / b).ln() - a + b;
            } else {
                total += b;
            }
        }
        Ok(total.max(0.0))
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        z.iter().map(|v| v.ln()).collect()
    }

    fn mirror_step(
        &self,
        set: &FeasibleSet,
        x: &[f64],
        g: &[f64],
        eta: f64,
    ) -> Result<Vec<f64>, BregmanError> {
        set.check_len(x)?;
        set.check_len(g)?;
        check_step(eta)?;
        if let Some((index, &value)) = x.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(BregmanError::NonPositive { index, value });
        }
        // shift by the smallest gradient entry; the common factor cancels
        let g_min = g.iter().copied().fold(f64::INFINITY, f64::min);
        let weights: Vec<f64> = x
            .iter()
            .zip(g)
            .map(|(&xs, &gs)| xs * (-eta * (gs - g_min)).exp())
            .collect();
        Ok(Self::water_fill(set, &weights))
    }

    fn project(&self, set: &FeasibleSet, p: &[f64]) -> Result<Vec<f64>, BregmanError> {
        set.check_len(p)?;
        if let Some((index, &value)) = p.iter().enumerate().find(|(_, v)| **v <= 0.0) {
            return Err(BregmanError::NonPositive { index, value });
        }
        if set.contains(p, 0.0) {
            return Ok(p.to_vec());
        }
        Ok(Self::water_fill(set, p))
    }

    /// `Lambda/n`, i.e. the floor, on floored sets.
    fn gamma(&self, set: &FeasibleSet) -> f64 {
        set.floor
    }
}

/// Rescales the above-floor part so the block sums to `mass` exactly (up to
/// one rounding), absorbing drift from the closed forms.
fn fix_mass(z: &mut [f64], set: &FeasibleSet) {
    for v in z.iter_mut() {
        if *v < set.floor {
            *v = set.floor;
        }
    }
    let excess: f64 = z.iter().map(|v| v - set.floor).sum();
    let target = set.free_mass();
    if excess > 0.0 {
        let scale = target / excess;
        for v in z.iter_mut() {
            *v = set.floor + (*v - set.floor) * scale;
        }
    } else {
        let even = target / z.len() as f64;
        z.iter_mut().for_each(|v| *v = set.floor + even);
    }
}

/// The two shipped geometries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GeometryKind {
    #[default]
    Euclidean,
    Entropy,
}

impl GeometryKind {
    pub fn map(self) -> &'static dyn MirrorMap {
        match self {
            GeometryKind::Euclidean => &Euclidean,
            GeometryKind::Entropy => &NegativeEntropy,
        }
    }
}

impl fmt::Display for GeometryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryKind::Euclidean => write!(f, "euclidean"),
            GeometryKind::Entropy => write!(f, "entropy"),
        }
    }
}

impl MirrorMap for GeometryKind {
    fn divergence(&self, u: &[f64], v: &[f64]) -> Result<f64, BregmanError> {
        self.map().divergence(u, v)
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        self.map().gradient(z)
    }

    fn mirror_step(
        &self,
        set: &FeasibleSet,
        x: &[f64],
        g: &[f64],
        eta: f64,
    ) -> Result<Vec<f64>, BregmanError> {
        self.map().mirror_step(set, x, g, eta)
    }

    fn project(&self, set: &FeasibleSet, p: &[f64]) -> Result<Vec<f64>, BregmanError> {
        self.map().project(set, p)
    }

    fn gamma(&self, set: &FeasibleSet) -> f64 {
        self.map().gamma(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    /// Minimizes `f` over the 2-simplex of mass `mass` on a dense grid.
    fn grid_argmin_2d(mass: f64, floor: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let steps = 200_000;
        let free = mass - 2.0 * floor;
        (0..=steps)
            .map(|j| {
                let t = free * j as f64 / steps as f64;
                vec![floor + t, floor + free - t]
            })
            .min_by(|a, b| f(a).total_cmp(&f(b)))
            .unwrap()
    }

    #[test]
    fn divergence_examples() {
        assert_eq!(Euclidean.divergence(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(
            NegativeEntropy
                .divergence(&[0.2, 0.3], &[0.2, 0.3])
                .unwrap(),
            0.0
        );
        let d = NegativeEntropy
            .divergence(&[0.25, 0.25], &[0.125, 0.375])
            .unwrap();
        let expected = 0.25 * 2f64.ln() + 0.25 * (2.0f64 / 3.0).ln();
        assert!((d - expected).abs() < 1e-15);
        assert!((d - 0.071_920_5).abs() < 1e-6);
        assert_eq!(
            NegativeEntropy.divergence(&[0.5, 0.5], &[1.0, 0.0]),
            Err(BregmanError::Domain { index: 1 })
        );
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let set = FeasibleSet::simplex(3, 0.5).unwrap();
        let x = [0.1, 0.15, 0.25];
        for geo in [GeometryKind::Euclidean, GeometryKind::Entropy] {
            let z = geo.mirror_step(&set, &x, &[0.0; 3], 0.7).unwrap();
            assert!(close(&z, &x, 1e-15), "{geo}: {z:?}");
        }
    }

    #[test]
    fn euclidean_step_matches_grid_oracle() {
        let set = FeasibleSet::simplex(2, 1.0).unwrap();
        let (x, g, eta) = ([0.5, 0.5], [1.0, 0.0], 0.5);
        let z = Euclidean.mirror_step(&set, &x, &g, eta).unwrap();
        assert!(close(&z, &[0.25, 0.75], 1e-15));
        let oracle = grid_argmin_2d(1.0, 0.0, |w| {
            eta * (g[0] * w[0] + g[1] * w[1]) + Euclidean.divergence(w, &x).unwrap()
        });
        assert!(close(&z, &oracle, 1e-5));
    }

    #[test]
    fn entropy_step_matches_closed_form_and_grid() {
        let set = FeasibleSet::simplex(2, 1.0).unwrap();
        let (x, g) = ([0.5, 0.5], [2f64.ln(), 0.0]);
        let z = NegativeEntropy.mirror_step(&set, &x, &g, 1.0).unwrap();
        assert!(close(&z, &[1.0 / 3.0, 2.0 / 3.0], 1e-15));
        let oracle = grid_argmin_2d(1.0, 0.0, |w| {
            g[0] * w[0] + g[1] * w[1] + NegativeEntropy.divergence(w, &x).unwrap()
        });
        assert!(close(&z, &oracle, 1e-5));
    }

    #[test]
    fn projections() {
        let set = FeasibleSet::simplex(2, 1.0).unwrap();
        assert_eq!(
            Euclidean.project(&set, &[2.0, 0.0]).unwrap(),
            vec![1.0, 0.0]
        );
        let floored = FeasibleSet::new(2, 1.0, 0.1).unwrap();
        assert!(close(
            &Euclidean.project(&floored, &[1.0, 0.0]).unwrap(),
            &[0.9, 0.1],
            1e-15
        ));
        let inside = [0.3, 0.7];
        assert_eq!(Euclidean.project(&set, &inside).unwrap(), inside.to_vec());
        assert_eq!(
            NegativeEntropy.project(&set, &inside).unwrap(),
            inside.to_vec()
        );
        assert!(matches!(
            NegativeEntropy.project(&set, &[1.0, 0.0]),
            Err(BregmanError::NonPositive { index: 1, .. })
        ));
    }

    #[test]
    fn floored_entropy_step_pins_to_floor() {
        let set = FeasibleSet::new(3, 1.0, 0.1).unwrap();
        let z = NegativeEntropy
            .mirror_step(&set, &[0.4, 0.4, 0.2], &[0.0, 0.0, 50.0], 1.0)
            .unwrap();
        assert!(close(&z, &[0.45, 0.45, 0.1], 1e-15));
        let oracle = grid_argmin_2d(0.9, 0.1, |w| {
            NegativeEntropy
                .divergence(&[w[0], w[1], 0.1], &[0.4, 0.4, 0.2])
                .unwrap()
        });
        assert!((oracle[0] - 0.45).abs() < 1e-5);
    }

    #[test]
    fn empty_interior_is_rejected() {
        assert!(matches!(
            FeasibleSet::new(4, 0.5, 0.2),
            Err(BregmanError::EmptySet { .. })
        ));
        assert!(FeasibleSet::new(2, 0.5, 0.25).is_ok());
    }

    #[test]
    fn gamma_per_geometry() {
        let set = FeasibleSet::new(3, 0.25, 0.01).unwrap();
        assert_eq!(Euclidean.gamma(&set), 2.0);
        assert_eq!(NegativeEntropy.gamma(&set), 0.01);
    }
}
