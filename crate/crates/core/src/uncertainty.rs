//! Uncertainty sets on source concentrations and their worst-case analysis.
//!
//! Concentration realizations are `C + Chat * xi` with the deviation
//! multipliers `xi` constrained per component: by a p-norm ball of radius
//! `r` (box p=inf, ellipsoid p=2, polyhedron p=1) or by the quadratic form
//! of a source covariance built from geographic distance. Maximizing a
//! quality-constraint residual over any of these sets has a closed form:
//! nominal residual plus `r` times the set's padding term (the dual norm of
//! the deviation-weighted flows), and the maximizer is recovered explicitly.

use nalgebra::DMatrix;

use crate::error::UncertaintyError;
use crate::instance::{Concentrations, PoolingInstance};
use crate::solution::TotalFlow;

/// Norm-ball comparisons use this absolute slack.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Geometry {
    Box,
    Ellipsoid,
    Polyhedron,
    CorrelatedEllipsoid,
}

impl Geometry {
    pub fn name(&self) -> &'static str {
        match self {
            Geometry::Box => "box",
            Geometry::Ellipsoid => "ellipsoid",
            Geometry::Polyhedron => "polyhedron",
            Geometry::CorrelatedEllipsoid => "ellipsoid-corr",
        }
    }

    pub fn parse(name: &str) -> Result<Self, UncertaintyError> {
        match name {
            "box" => Ok(Geometry::Box),
            "ellipsoid" => Ok(Geometry::Ellipsoid),
            "polyhedron" => Ok(Geometry::Polyhedron),
            "ellipsoid-corr" => Ok(Geometry::CorrelatedEllipsoid),
            other => Err(UncertaintyError::Invalid(format!(
                "unknown geometry {other:?}"
            ))),
        }
    }
}

/// Which side of a quality window a residual refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Upper,
    Lower,
}

impl Side {
    pub fn name(&self) -> &'static str {
        match self {
            Side::Upper => "upper",
            Side::Lower => "lower",
        }
    }
}

#[derive(Debug, Clone)]
struct Covariance {
    sigma: DMatrix<f64>,
    /// Lower Cholesky factor, `sigma = l * l'`.
    chol_l: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

/// Immutable uncertainty set; the covariance factorization is cached at
/// construction so all operations are read-only.
#[derive(Debug, Clone)]
pub struct UncertaintySet {
    geometry: Geometry,
    r: f64,
    covariance: Option<Covariance>,
}

impl UncertaintySet {
    pub fn box_set(r: f64) -> Result<Self, UncertaintyError> {
        Self::norm_ball(Geometry::Box, r)
    }

    pub fn ellipsoid(r: f64) -> Result<Self, UncertaintyError> {
        Self::norm_ball(Geometry::Ellipsoid, r)
    }

    pub fn polyhedron(r: f64) -> Result<Self, UncertaintyError> {
        Self::norm_ball(Geometry::Polyhedron, r)
    }

    fn norm_ball(geometry: Geometry, r: f64) -> Result<Self, UncertaintyError> {
        if !(r >= 0.0) {
            return Err(UncertaintyError::Invalid(format!(
                "radius must be nonnegative, got {r}"
            )));
        }
        Ok(Self {
            geometry,
            r,
            covariance: None,
        })
    }

    /// Ellipsoid shaped by a source covariance. The matrix must be
    /// symmetric positive-definite with condition number at most 1e12.
    pub fn correlated(r: f64, sigma: DMatrix<f64>) -> Result<Self, UncertaintyError> {
        if !(r >= 0.0) {
            return Err(UncertaintyError::Invalid(format!(
                "radius must be nonnegative, got {r}"
            )));
        }
        if sigma.nrows() != sigma.ncols() {
            return Err(UncertaintyError::Invalid(
                "covariance must be square".to_string(),
            ));
        }
        let n = sigma.nrows();
        for i in 0..n {
            for j in 0..i {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-9 * (1.0 + sigma[(i, j)].abs()) {
                    return Err(UncertaintyError::Invalid(
                        "covariance must be symmetric".to_string(),
                    ));
                }
            }
        }
        let eigen = sigma.clone().symmetric_eigen();
        let mut min_ev = f64::INFINITY;
        let mut max_ev = f64::NEG_INFINITY;
        for &ev in eigen.eigenvalues.iter() {
            min_ev = min_ev.min(ev);
            max_ev = max_ev.max(ev);
        }
        if min_ev <= 0.0 {
            return Err(UncertaintyError::Invalid(
                "covariance must be positive-definite".to_string(),
            ));
        }
        if max_ev / min_ev > 1e12 {
            return Err(UncertaintyError::Invalid(format!(
                "covariance condition number {:.3e} exceeds 1e12",
                max_ev / min_ev
            )));
        }
        let chol = sigma.clone().cholesky().ok_or_else(|| {
            UncertaintyError::Invalid("covariance factorization failed".to_string())
        })?;
        let inverse = chol.inverse();
        Ok(Self {
            geometry: Geometry::CorrelatedEllipsoid,
            r,
            covariance: Some(Covariance {
                sigma,
                chol_l: chol.l(),
                inverse,
            }),
        })
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn radius(&self) -> f64 {
        self.r
    }

    pub fn covariance_matrix(&self) -> Option<&DMatrix<f64>> {
        self.covariance.as_ref().map(|c| &c.sigma)
    }

    /// Lower Cholesky factor of the covariance, when correlated.
    pub fn cholesky_factor(&self) -> Option<&DMatrix<f64>> {
        self.covariance.as_ref().map(|c| &c.chol_l)
    }

    fn covariance(&self) -> &Covariance {
        self.covariance
            .as_ref()
            .expect("correlated set carries a covariance")
    }

    /// Whether the multipliers for one component lie inside the set.
    pub fn membership(&self, xi: &Concentrations, component: usize) -> bool {
        let col = xi.component_column(component);
        match self.geometry {
            Geometry::Box => col.iter().all(|v| v.abs() <= self.r + MEMBERSHIP_TOL),
            Geometry::Ellipsoid => {
                let norm: f64 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
                norm <= self.r + MEMBERSHIP_TOL
            }
            Geometry::Polyhedron => {
                let norm: f64 = col.iter().map(|v| v.abs()).sum();
                norm <= self.r + MEMBERSHIP_TOL
            }
            Geometry::CorrelatedEllipsoid => {
                let cov = self.covariance();
                let v = DMatrix::from_column_slice(col.len(), 1, &col);
                let quad = (v.transpose() * &cov.inverse * &v)[(0, 0)];
                quad <= self.r * self.r + MEMBERSHIP_TOL
            }
        }
    }

    /// Support-function value of the set in the direction of the
    /// deviation-weighted flows: the padding added to a robust quality row.
    /// Entries of `x_col` must be nonnegative (up to roundoff).
    pub fn padding_lambda(
        &self,
        dev_row: &[f64],
        x_col: &[f64],
    ) -> Result<f64, UncertaintyError> {
        assert_eq!(dev_row.len(), x_col.len());
        let mut weighted = Vec::with_capacity(x_col.len());
        for (i, (&d, &x)) in dev_row.iter().zip(x_col).enumerate() {
            if x < -1e-9 {
                return Err(UncertaintyError::Invalid(format!(
                    "flow column entry {i} is negative ({x})"
                )));
            }
            weighted.push(d * x.max(0.0));
        }
        Ok(match self.geometry {
            Geometry::Box => weighted.iter().sum(),
            Geometry::Ellipsoid => weighted.iter().map(|c| c * c).sum::<f64>().sqrt(),
            Geometry::Polyhedron => weighted.iter().fold(0.0, |a, &c| a.max(c)),
            Geometry::CorrelatedEllipsoid => {
                let cov = self.covariance();
                let c = DMatrix::from_column_slice(weighted.len(), 1, &weighted);
                (c.transpose() * &cov.sigma * &c)[(0, 0)].max(0.0).sqrt()
            }
        })
    }

    /// Maximizes the quality-constraint residual for terminal `j`,
    /// component `k` over the set. Returns the violation (nominal residual
    /// plus `r` times the padding) and a scenario attaining it. An
    /// all-zero flow column or an infinite bound yields the nominal
    /// residual with the nominal scenario.
    pub fn worst_case(
        &self,
        inst: &PoolingInstance,
        x: &TotalFlow,
        v: &[f64],
        terminal: usize,
        component: usize,
        side: Side,
    ) -> Result<(f64, ScenarioPoint), UncertaintyError> {
        let n = inst.n_sources();
        let x_col = x.terminal_column(terminal);
        let dev_row: Vec<f64> = (0..n)
            .map(|i| inst.sources()[i].deviation[component])
            .collect();
        let nominal_blend: f64 = (0..n)
            .map(|i| inst.sources()[i].quality[component] * x_col[i].max(0.0))
            .sum();
        let bound = match side {
            Side::Upper => inst.terminals()[terminal].quality_upper[component],
            Side::Lower => inst.terminals()[terminal].quality_lower[component],
        };
        let nominal_residual = match side {
            Side::Upper => nominal_blend - bound * v[terminal],
            Side::Lower => bound * v[terminal] - nominal_blend,
        };

        let mut scenario = ScenarioPoint::nominal(n, inst.n_components());
        if !nominal_residual.is_finite() {
            return Ok((f64::NEG_INFINITY, scenario));
        }
        if x_col.iter().all(|&xv| xv.max(0.0) <= 0.0) || self.r == 0.0 {
            return Ok((nominal_residual, scenario));
        }

        let pad = self.padding_lambda(&dev_row, &x_col)?;
        let sign = match side {
            Side::Upper => 1.0,
            Side::Lower => -1.0,
        };
        let weighted: Vec<f64> = dev_row
            .iter()
            .zip(&x_col)
            .map(|(&d, &xv)| d * xv.max(0.0))
            .collect();
        match self.geometry {
            Geometry::Box => {
                for i in 0..n {
                    *scenario.xi.get_mut(i, component) = sign * self.r;
                }
            }
            Geometry::Ellipsoid => {
                let norm: f64 = weighted.iter().map(|c| c * c).sum::<f64>().sqrt();
                if norm > 0.0 {
                    for i in 0..n {
                        *scenario.xi.get_mut(i, component) = sign * self.r * weighted[i] / norm;
                    }
                }
            }
            Geometry::Polyhedron => {
                let mut best = 0usize;
                for i in 1..n {
                    if weighted[i] > weighted[best] {
                        best = i;
                    }
                }
                *scenario.xi.get_mut(best, component) = sign * self.r;
            }
            Geometry::CorrelatedEllipsoid => {
                let cov = self.covariance();
                let c = DMatrix::from_column_slice(n, 1, &weighted);
                let sc = &cov.sigma * &c;
                let denom = (c.transpose() * &sc)[(0, 0)].max(0.0).sqrt();
                if denom > 0.0 {
                    for i in 0..n {
                        *scenario.xi.get_mut(i, component) =
                            sign * self.r * sc[(i, 0)] / denom;
                    }
                }
            }
        }
        Ok((nominal_residual + self.r * pad, scenario))
    }
}

/// One realization of the deviation multipliers, sources by components.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPoint {
    pub xi: Concentrations,
}

impl ScenarioPoint {
    pub fn nominal(n_sources: usize, n_components: usize) -> Self {
        Self {
            xi: Concentrations::zeros(n_sources, n_components),
        }
    }

    pub fn is_nominal(&self) -> bool {
        (0..self.xi.n_sources())
            .all(|i| (0..self.xi.n_components()).all(|k| self.xi.get(i, k) == 0.0))
    }

    /// Realized concentrations `C + Chat * xi`.
    pub fn realized(&self, inst: &PoolingInstance) -> Concentrations {
        let mut c = inst.nominal_concentrations();
        for (i, s) in inst.sources().iter().enumerate() {
            for k in 0..inst.n_components() {
                *c.get_mut(i, k) += s.deviation[k] * self.xi.get(i, k);
            }
        }
        c
    }

    /// Coordinate-wise closeness, used to deduplicate cut pools.
    pub fn is_close(&self, other: &Self, tol: f64) -> bool {
        self.xi.max_abs_difference(&other.xi) <= tol
    }

    /// True when some realized concentration is negative: the scenario is
    /// admissible for the set but has no physical reading.
    pub fn is_physically_vacuous(&self, inst: &PoolingInstance) -> bool {
        let realized = self.realized(inst);
        (0..inst.n_sources())
            .any(|i| (0..inst.n_components()).any(|k| realized.get(i, k) < 0.0))
    }
}

/// Squared-exponential covariance over planar source locations. Adds a
/// 1e-10 diagonal jitter when the plain matrix fails to factorize.
pub fn kernel_covariance(
    locations: &[[f64; 2]],
    signal_variance: f64,
    length_scale: f64,
) -> Result<DMatrix<f64>, UncertaintyError> {
    if !(signal_variance > 0.0) {
        return Err(UncertaintyError::Invalid(format!(
            "signal variance must be positive, got {signal_variance}"
        )));
    }
    if !(length_scale > 0.0) {
        return Err(UncertaintyError::Invalid(format!(
            "length scale must be positive, got {length_scale}"
        )));
    }
    let n = locations.len();
    let mut sigma = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let dx = locations[i][0] - locations[j][0];
            let dy = locations[i][1] - locations[j][1];
            let dist2 = dx * dx + dy * dy;
            sigma[(i, j)] =
                signal_variance * (-dist2 / (2.0 * length_scale * length_scale)).exp();
        }
    }
    if sigma.clone().cholesky().is_none() {
        for i in 0..n {
            sigma[(i, i)] += 1e-10;
        }
    }
    Ok(sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{PoolingInstance, SourceSpec, TerminalSpec};
    use approx::assert_abs_diff_eq;

    /// Two direct sources into one terminal; enough to exercise worst_case.
    fn two_source_instance(
        quality: [f64; 2],
        deviation: [f64; 2],
        p_upper: f64,
    ) -> PoolingInstance {
        PoolingInstance::new(
            "two".to_string(),
            None,
            vec!["k".to_string()],
            vec![
                SourceSpec {
                    id: "s0".to_string(),
                    cost: 1.0,
                    lower_avail: 0.0,
                    upper_avail: 100.0,
                    quality: vec![quality[0]],
                    deviation: vec![deviation[0]],
                    location: [0.0, 0.0],
                },
                SourceSpec {
                    id: "s1".to_string(),
                    cost: 1.0,
                    lower_avail: 0.0,
                    upper_avail: 100.0,
                    quality: vec![quality[1]],
                    deviation: vec![deviation[1]],
                    location: [1.0, 0.0],
                },
            ],
            vec![],
            vec![TerminalSpec {
                id: "t".to_string(),
                price: 1.0,
                min_demand: 0.0,
                max_demand: 200.0,
                quality_lower: vec![0.0],
                quality_upper: vec![p_upper],
            }],
            vec![],
            vec![],
            vec![(0, 0), (1, 0)],
        )
        .unwrap()
    }

    #[test]
    fn kernel_diagonal_is_signal_variance() {
        let sigma = kernel_covariance(&[[1.0, 2.0], [1.0, 2.0]], 1.0, 1.0).unwrap();
        // Identical locations make the plain matrix singular, so the
        // diagonal carries the factorization jitter.
        assert_abs_diff_eq!(sigma[(0, 0)], 1.0, epsilon = 1e-9);
        // Identical locations give perfect correlation (up to jitter).
        assert_abs_diff_eq!(sigma[(0, 1)], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn kernel_off_diagonal_decays_with_distance() {
        let sigma = kernel_covariance(&[[0.0, 0.0], [1.0, 1.0]], 1.0, 1.0).unwrap();
        // Distance sqrt(2): exp(-2/2) = exp(-1).
        assert_abs_diff_eq!(sigma[(0, 1)], (-1.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn kernel_far_apart_sources_decorrelate() {
        let sigma = kernel_covariance(&[[0.0, 0.0], [1e4, 0.0], [0.0, 1e4]], 1.0, 1.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(sigma[(i, j)], expected, epsilon = 1e-9);
            }
        }
        // With identity covariance the correlated set matches the 2-norm ball.
        let corr = UncertaintySet::correlated(0.7, sigma).unwrap();
        let ell = UncertaintySet::ellipsoid(0.7).unwrap();
        let dev = [1.0, 2.0, 0.5];
        let x = [3.0, 1.0, 2.0];
        assert_abs_diff_eq!(
            corr.padding_lambda(&dev, &x).unwrap(),
            ell.padding_lambda(&dev, &x).unwrap(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn kernel_rejects_bad_parameters() {
        assert!(kernel_covariance(&[[0.0, 0.0]], 0.0, 1.0).is_err());
        assert!(kernel_covariance(&[[0.0, 0.0]], 1.0, -1.0).is_err());
    }

    #[test]
    fn membership_nominal_point_everywhere() {
        let mut xi = Concentrations::zeros(3, 1);
        for geometry in [
            UncertaintySet::box_set(0.0).unwrap(),
            UncertaintySet::ellipsoid(1.0).unwrap(),
            UncertaintySet::polyhedron(0.3).unwrap(),
        ] {
            assert!(geometry.membership(&xi, 0));
        }
        *xi.get_mut(0, 0) = 0.6;
        let boxed = UncertaintySet::box_set(0.5).unwrap();
        assert!(!boxed.membership(&xi, 0));
    }

    #[test]
    fn membership_one_norm_arithmetic() {
        let poly = UncertaintySet::polyhedron(1.0).unwrap();
        let mut xi = Concentrations::zeros(2, 1);
        *xi.get_mut(0, 0) = 0.5;
        *xi.get_mut(1, 0) = 0.5;
        assert!(poly.membership(&xi, 0));
        *xi.get_mut(0, 0) = 0.8;
        assert!(!poly.membership(&xi, 0));
    }

    #[test]
    fn padding_closed_forms() {
        let boxed = UncertaintySet::box_set(1.0).unwrap();
        assert_abs_diff_eq!(
            boxed.padding_lambda(&[1.0, 2.0], &[3.0, 0.0]).unwrap(),
            3.0,
            epsilon = 1e-12
        );
        let ell = UncertaintySet::ellipsoid(1.0).unwrap();
        assert_abs_diff_eq!(
            ell.padding_lambda(&[3.0, 4.0], &[1.0, 1.0]).unwrap(),
            5.0,
            epsilon = 1e-12
        );
        let poly = UncertaintySet::polyhedron(1.0).unwrap();
        assert_abs_diff_eq!(
            poly.padding_lambda(&[1.0, 2.0], &[3.0, 1.0]).unwrap(),
            3.0,
            epsilon = 1e-12
        );
        let corr =
            UncertaintySet::correlated(1.0, DMatrix::identity(2, 2)).unwrap();
        assert_abs_diff_eq!(
            corr.padding_lambda(&[3.0, 4.0], &[1.0, 1.0]).unwrap(),
            5.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn padding_rejects_negative_flow() {
        let boxed = UncertaintySet::box_set(1.0).unwrap();
        assert!(boxed.padding_lambda(&[1.0], &[-0.5]).is_err());
    }

    #[test]
    fn worst_case_box_upper_shifts_every_source() {
        let inst = two_source_instance([3.0, 1.0], [3.0, 1.0], 2.0);
        let set = UncertaintySet::box_set(0.25).unwrap();
        let mut x = TotalFlow::zeros(2, 1);
        *x.get_mut(0, 0) = 2.0;
        *x.get_mut(1, 0) = 4.0;
        let v = vec![6.0];
        let (violation, scenario) = set.worst_case(&inst, &x, &v, 0, 0, Side::Upper).unwrap();
        assert_abs_diff_eq!(scenario.xi.get(0, 0), 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(scenario.xi.get(1, 0), 0.25, epsilon = 1e-12);
        // Residual at the realized corner reproduces the reported violation.
        let realized = scenario.realized(&inst);
        let blended = realized.get(0, 0) * 2.0 + realized.get(1, 0) * 4.0;
        assert_abs_diff_eq!(blended - 2.0 * 6.0, violation, epsilon = 1e-9);
    }

    #[test]
    fn worst_case_degenerate_radius_is_nominal() {
        let inst = two_source_instance([3.0, 1.0], [3.0, 1.0], 2.0);
        let mut x = TotalFlow::zeros(2, 1);
        *x.get_mut(0, 0) = 2.0;
        *x.get_mut(1, 0) = 4.0;
        let v = vec![6.0];
        for set in [
            UncertaintySet::box_set(0.0).unwrap(),
            UncertaintySet::ellipsoid(0.0).unwrap(),
            UncertaintySet::polyhedron(0.0).unwrap(),
        ] {
            let (violation, scenario) =
                set.worst_case(&inst, &x, &v, 0, 0, Side::Upper).unwrap();
            // Nominal blend 3*2 + 1*4 = 10 against bound 2*6 = 12.
            assert_abs_diff_eq!(violation, -2.0, epsilon = 1e-12);
            assert!(scenario.is_nominal());
        }
    }

    #[test]
    fn worst_case_polyhedron_vertex_enumeration() {
        // Weighted flows (3, 2), bound slack 2: best vertex adds 3 - 2 = 1.
        let inst = two_source_instance([1.0, 1.0], [1.5, 0.5], 1.0);
        let set = UncertaintySet::polyhedron(1.0).unwrap();
        let mut x = TotalFlow::zeros(2, 1);
        *x.get_mut(0, 0) = 2.0;
        *x.get_mut(1, 0) = 4.0;
        // v chosen so the nominal residual is -2.
        let v = vec![8.0];
        let (violation, scenario) = set.worst_case(&inst, &x, &v, 0, 0, Side::Upper).unwrap();
        assert_abs_diff_eq!(violation, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(scenario.xi.get(0, 0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(scenario.xi.get(1, 0), 0.0, epsilon = 1e-12);

        // Brute force over the four vertices of the 1-norm ball.
        let mut best = f64::NEG_INFINITY;
        for (i, sgn) in [(0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0)] {
            let mut xi = ScenarioPoint::nominal(2, 1);
            *xi.xi.get_mut(i, 0) = sgn;
            let realized = xi.realized(&inst);
            let blended = realized.get(0, 0) * 2.0 + realized.get(1, 0) * 4.0;
            best = best.max(blended - 1.0 * 8.0);
        }
        assert_abs_diff_eq!(violation, best, epsilon = 1e-12);
    }

    #[test]
    fn vacuous_scenario_detection() {
        // Deviation equals nominal, so xi = -1 drives concentration to zero
        // and anything beyond it negative.
        let inst = two_source_instance([2.0, 1.0], [2.5, 1.0], 2.0);
        let mut scenario = ScenarioPoint::nominal(2, 1);
        *scenario.xi.get_mut(0, 0) = -1.0;
        assert!(scenario.is_physically_vacuous(&inst));
        *scenario.xi.get_mut(0, 0) = -0.5;
        assert!(!scenario.is_physically_vacuous(&inst));
    }
}
