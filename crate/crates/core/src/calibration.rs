//! Affine correction of clique-number readouts that drift with graph size.
//!
//! Fits map a raw expectation `E` to the readout target of the true clique
//! number: `omega` itself for Mountain, the bin centre `1 - 2 omega / n` for
//! Crater. Corrected values are rounded with the readout's own rule.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observables::{round_crater, round_mountain, CraterTarget};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftMode {
    PerSize,
    LinearInN,
    PerParity,
}

impl std::str::FromStr for ShiftMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "per_size" => ShiftMode::PerSize,
            "linear_in_n" | "linear" => ShiftMode::LinearInN,
            "per_parity" | "parity" => ShiftMode::PerParity,
            _ => return Err(Error::Config(format!("unknown shift mode `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    Mountain,
    Crater,
}

impl Readout {
    pub fn target(&self, omega: usize, n: usize) -> f64 {
        match self {
            Readout::Mountain => omega as f64,
            Readout::Crater => CraterTarget::for_clique_number(omega, n).target,
        }
    }

    pub fn round(&self, value: f64, n: usize) -> usize {
        match self {
            Readout::Mountain => round_mountain(value, n),
            Readout::Crater => round_crater(value, n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalPoint {
    pub n: usize,
    pub e: f64,
    pub omega: usize,
}

/// `a * E + c * n + b` for the group keyed by `group` (graph size for
/// per-size fits, `n % 2` for per-parity fits, none for the linear fit,
/// where `c` is the only non-zero size term).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub group: Option<usize>,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Coefficients {
    fn eval(&self, n: usize, e: f64) -> f64 {
        self.a * e + self.c * n as f64 + self.b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftModel {
    pub mode: ShiftMode,
    pub readout: Readout,
    pub coefficients: Vec<Coefficients>,
    pub fit_points: Vec<CalPoint>,
    /// Target minus corrected value at each fit point.
    pub residuals: Vec<f64>,
}

/// Least squares with an explicit rank check; `None` when the columns are
/// (numerically) dependent.
fn lstsq(rows: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
    let cols = rows.first()?.len();
    if rows.len() < cols {
        return None;
    }
    let a = DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]);
    let svd = a.svd(true, true);
    let top = svd.singular_values.max();
    let tol = 1e-10 * top.max(1.0);
    if top == 0.0 || svd.singular_values.iter().any(|&s| s <= tol) {
        return None;
    }
    let x = svd.solve(&DVector::from_column_slice(y), tol).ok()?;
    Some(x.iter().copied().collect())
}

/// `target ~ a E + b`; with fewer than two distinct `E` the slope is fixed
/// to 1 and only the offset is fitted.
fn fit_group(points: &[(f64, f64)]) -> (f64, f64) {
    let rows: Vec<Vec<f64>> = points.iter().map(|&(e, _)| vec![e, 1.0]).collect();
    let y: Vec<f64> = points.iter().map(|&(_, t)| t).collect();
    match lstsq(&rows, &y) {
        Some(x) => (x[0], x[1]),
        None => {
            let offset = points.iter().map(|&(e, t)| t - e).sum::<f64>() / points.len() as f64;
            (1.0, offset)
        }
    }
}

fn group_key(mode: ShiftMode, n: usize) -> Option<usize> {
    match mode {
        ShiftMode::PerSize => Some(n),
        ShiftMode::PerParity => Some(n % 2),
        ShiftMode::LinearInN => None,
    }
}

pub fn fit_shift(points: &[CalPoint], mode: ShiftMode, readout: Readout) -> Result<ShiftModel> {
    if points.is_empty() {
        return Err(Error::Underdetermined("no calibration points".into()));
    }
    if let Some(p) = points.iter().find(|p| !p.e.is_finite() || p.n == 0) {
        return Err(Error::Config(format!("bad calibration point {p:?}")));
    }
    let coefficients = match mode {
        ShiftMode::PerSize | ShiftMode::PerParity => {
            let mut groups: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
            for p in points {
                let key = group_key(mode, p.n).expect("grouped mode");
                groups.entry(key).or_default().push((p.e, readout.target(p.omega, p.n)));
            }
            groups
                .into_iter()
                .map(|(key, pts)| {
                    let (a, b) = fit_group(&pts);
                    Coefficients {
                        group: Some(key),
                        a,
                        b,
                        c: 0.0,
                    }
                })
                .collect()
        }
        ShiftMode::LinearInN => {
            let sizes: std::collections::BTreeSet<usize> = points.iter().map(|p| p.n).collect();
            if sizes.len() < 2 {
                return Err(Error::Underdetermined(format!(
                    "linear-in-n fit needs at least two graph sizes, got {sizes:?}"
                )));
            }
            let rows: Vec<Vec<f64>> = points.iter().map(|p| vec![p.e, p.n as f64, 1.0]).collect();
            let y: Vec<f64> = points.iter().map(|p| readout.target(p.omega, p.n)).collect();
            let (a, c, b) = match lstsq(&rows, &y) {
                Some(x) => (x[0], x[1], x[2]),
                None => {
                    // E moves in lockstep with n: keep unit slope, fit the drift
                    let rows: Vec<Vec<f64>> = points.iter().map(|p| vec![p.n as f64, 1.0]).collect();
                    let gap: Vec<f64> = points.iter().zip(&y).map(|(p, t)| t - p.e).collect();
                    let x = lstsq(&rows, &gap).expect("two distinct sizes give full rank");
                    (1.0, x[0], x[1])
                }
            };
            vec![Coefficients {
                group: None,
                a,
                b,
                c,
            }]
        }
    };
    let mut model = ShiftModel {
        mode,
        readout,
        coefficients,
        fit_points: points.to_vec(),
        residuals: Vec::new(),
    };
    if model.coefficients.iter().any(|c| !(c.a.is_finite() && c.b.is_finite() && c.c.is_finite())) {
        return Err(Error::Underdetermined("fit produced non-finite coefficients".into()));
    }
    model.residuals = points
        .iter()
        .map(|p| Ok(readout.target(p.omega, p.n) - apply_shift(&model, p.n, p.e)?))
        .collect::<Result<_>>()?;
    Ok(model)
}

pub fn apply_shift(shift: &ShiftModel, n: usize, e: f64) -> Result<f64> {
    let key = group_key(shift.mode, n);
    shift
        .coefficients
        .iter()
        .find(|c| c.group == key)
        .map(|c| c.eval(n, e))
        .ok_or(Error::UncoveredSize(n))
}

impl ShiftModel {
    /// Errors naming every size in `sizes` the model cannot correct.
    pub fn check_covers(&self, sizes: &[usize]) -> Result<()> {
        let missing: Vec<usize> = sizes
            .iter()
            .copied()
            .filter(|&n| apply_shift(self, n, 0.0).is_err())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Underdetermined(format!("no calibration points for sizes {missing:?}")))
        }
    }

    pub fn predict(&self, n: usize, e: f64) -> Result<usize> {
        Ok(self.readout.round(apply_shift(self, n, e)?, n))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Fraction of points whose rounded corrected readout equals omega.
pub fn corrected_accuracy(shift: &ShiftModel, points: &[CalPoint]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let hits = points
        .iter()
        .map(|p| Ok((shift.predict(p.n, p.e)? == p.omega) as usize))
        .sum::<Result<usize>>()?;
    Ok(hits as f64 / points.len() as f64)
}

/// Same, for the uncorrected readout.
pub fn raw_accuracy(readout: Readout, points: &[CalPoint]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let hits = points.iter().filter(|p| readout.round(p.e, p.n) == p.omega).count();
    Ok(hits as f64 / points.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(n: usize, e: f64, omega: usize) -> CalPoint {
        CalPoint { n, e, omega }
    }

    #[test]
    fn identity_and_offset() {
        let on_line: Vec<_> = (1..6).map(|k| pt(6, k as f64, k)).collect();
        let m = fit_shift(&on_line, ShiftMode::PerSize, Readout::Mountain).unwrap();
        let c = m.coefficients[0];
        assert!((c.a - 1.0).abs() < 1e-9 && c.b.abs() < 1e-9);
        assert!((apply_shift(&m, 6, 2.7).unwrap() - 2.7).abs() < 1e-9);

        let shifted: Vec<_> = (1..6).map(|k| pt(6, k as f64 - 0.8, k)).collect();
        let m = fit_shift(&shifted, ShiftMode::PerSize, Readout::Mountain).unwrap();
        let c = m.coefficients[0];
        assert!((c.a - 1.0).abs() < 1e-9 && (c.b - 0.8).abs() < 1e-9);
        assert!((apply_shift(&m, 6, 1.0).unwrap() - 1.8).abs() < 1e-9);
    }

    #[test]
    fn single_point_per_size_is_interpolated() {
        let pts = [pt(5, 2.4, 3), pt(7, 3.1, 4), pt(9, 2.0, 4)];
        let m = fit_shift(&pts, ShiftMode::PerSize, Readout::Mountain).unwrap();
        assert!(m.residuals.iter().all(|r| r.abs() < 1e-12));
        assert!(m.coefficients.iter().all(|c| c.a == 1.0));
        assert!(matches!(apply_shift(&m, 6, 1.0), Err(Error::UncoveredSize(6))));
        match m.check_covers(&[5, 6, 8]) {
            Err(Error::Underdetermined(msg)) => assert!(msg.contains("[6, 8]"), "{msg}"),
            other => panic!("{other:?}"),
        }
        assert!(m.check_covers(&[5, 9]).is_ok());
    }

    #[test]
    fn linear_drift_is_recovered() {
        // E = omega + 0.3 (n - 8), one point per size
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<_> = (4..=16)
            .map(|n| {
                let omega = rng.random_range(1..=n);
                pt(n, omega as f64 + 0.3 * (n as f64 - 8.0), omega)
            })
            .collect();
        let m = fit_shift(&pts, ShiftMode::LinearInN, Readout::Mountain).unwrap();
        let c = m.coefficients[0];
        assert!((c.a - 1.0).abs() < 1e-6 && (c.c + 0.3).abs() < 1e-6 && (c.b - 2.4).abs() < 1e-6, "{c:?}");
        assert!(corrected_accuracy(&m, &pts).unwrap() >= raw_accuracy(Readout::Mountain, &pts).unwrap());
        assert_eq!(corrected_accuracy(&m, &pts).unwrap(), 1.0);
    }

    #[test]
    fn linear_fit_with_collinear_sizes_keeps_unit_slope() {
        // omega fixed, so E is an exact affine function of n
        let pts: Vec<_> = (4..9).map(|n| pt(n, 3.0 + 0.5 * n as f64, 3)).collect();
        let m = fit_shift(&pts, ShiftMode::LinearInN, Readout::Mountain).unwrap();
        let c = m.coefficients[0];
        assert_eq!(c.a, 1.0);
        assert!((c.c + 0.5).abs() < 1e-9);
        assert!(m.residuals.iter().all(|r| r.abs() < 1e-9));
        let one = [pt(5, 1.0, 1), pt(5, 2.0, 2)];
        assert!(matches!(
            fit_shift(&one, ShiftMode::LinearInN, Readout::Mountain),
            Err(Error::Underdetermined(_))
        ));
    }

    #[test]
    fn parity_groups_and_crater_targets() {
        // Crater readouts drifting differently on odd and even sizes
        let mut pts = Vec::new();
        for n in 4..=11 {
            for omega in 1..=n {
                let t = Readout::Crater.target(omega, n);
                let shift = if n % 2 == 0 { 0.3 } else { -0.3 };
                pts.push(pt(n, t + shift, omega));
            }
        }
        let raw = raw_accuracy(Readout::Crater, &pts).unwrap();
        let m = fit_shift(&pts, ShiftMode::PerParity, Readout::Crater).unwrap();
        assert_eq!(m.coefficients.len(), 2);
        assert_eq!(corrected_accuracy(&m, &pts).unwrap(), 1.0);
        assert!(raw < 1.0);
    }

    #[test]
    fn json_round_trip() {
        let pts = [pt(5, 2.4, 3), pt(5, 3.3, 4), pt(7, 3.1, 4)];
        let m = fit_shift(&pts, ShiftMode::PerParity, Readout::Mountain).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cal.json");
        m.save(&path).unwrap();
        assert_eq!(ShiftModel::load(&path).unwrap(), m);
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        for key in ["mode", "coefficients", "fit_points", "residuals"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
