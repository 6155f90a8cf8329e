use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::Rng;

use super::{Layout, SolveError, SolverConfig};
use crate::variational::{defect_and_mean, residual_1, residual_2, Trajectory, VariationalProblem};

const DIRECTIONS: usize = 50;
const STEP: f64 = 1e-4;
const MAJORITY: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtremalType {
    LocalMin,
    LocalMax,
    Saddle,
    Inconclusive,
}

impl ExtremalType {
    pub fn as_str(self) -> &'static str {
        match self {
            ExtremalType::LocalMin => "local-min-indication",
            ExtremalType::LocalMax => "local-max-indication",
            ExtremalType::Saddle => "saddle-indication",
            ExtremalType::Inconclusive => "inconclusive",
        }
    }
}

/// Votes on the sign of `J(y + hη) - 2J(y) + J(y - hη)` over random unit
/// directions `η` in the free node values. This is a heuristic indication,
/// not a second-order condition.
pub fn probe_extremal_type(p: &VariationalProblem, y: &Trajectory, cfg: &SolverConfig) -> Result<ExtremalType, SolveError> {
    let ts = p.scale();
    let nodes = p.node_values(y)?.to_vec();
    let pair = p.objective();
    let e = pair.evaluate(ts, &nodes)?;
    let j0 = e.j();
    let tol = 1e-6 * (1.0 + j0.abs());
    let defect = defect_and_mean(&residual_1(ts, &e)).0.max(defect_and_mean(&residual_2(ts, &e)).0);
    if defect > tol {
        return Err(SolveError::NotApplicable(format!("trajectory is not stationary (defect {defect:e})")));
    }
    let layout = Layout::new(p);
    if layout.dim() == 0 {
        return Ok(ExtremalType::Inconclusive);
    }
    let x = layout.project(&nodes);
    let j_at = |sign: f64, dir: &[f64]| {
        let xs: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + sign * STEP * d).collect();
        let (jd, jn) = pair.values(ts, &layout.nodes(&xs)).ok()?;
        Some(jd * jn)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut up, mut down) = (0usize, 0usize);
    for _ in 0..DIRECTIONS {
        let mut dir: Vec<f64> = (0..x.len()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        dir.iter_mut().for_each(|v| *v /= norm);
        let (Some(jp), Some(jm)) = (j_at(1.0, &dir), j_at(-1.0, &dir)) else { continue };
        let q = jp - 2.0 * j0 + jm;
        let noise = 64.0 * f64::EPSILON * (jp.abs() + 2.0 * j0.abs() + jm.abs());
        if q > noise {
            up += 1;
        } else if q < -noise {
            down += 1;
        }
    }
    let need = MAJORITY * DIRECTIONS as f64;
    Ok(if up as f64 >= need {
        ExtremalType::LocalMin
    } else if down as f64 >= need {
        ExtremalType::LocalMax
    } else if up > 0 && down > 0 && (up + down) as f64 >= need {
        ExtremalType::Saddle
    } else {
        ExtremalType::Inconclusive
    })
}
