//! Evaluation metrics for conditioned path ensembles.

use crate::error::{Error, Result};
use crate::sde::PathSample;

/// Mean Euclidean distance of terminal states from the conditioning point.
pub fn dist_metric(paths: &[PathSample], y_final: &[f64]) -> Result<f64> {
    if paths.is_empty() {
        return Err(Error::Invalid("empty path set".into()));
    }
    let n = paths[0].dim();
    if y_final.len() != n {
        return Err(Error::DimMismatch { expected: n, got: y_final.len() });
    }
    let mut total = 0.0;
    for p in paths {
        let x = p.terminal();
        total += x.iter().zip(y_final).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    }
    Ok(total / paths.len() as f64)
}

/// Nodewise coordinate means and standard deviations of a path ensemble.
/// Returns (means, stds), each indexed [node][coordinate].
pub fn marginal_stats(paths: &[PathSample]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    if paths.len() < 2 {
        return Err(Error::Invalid(format!(
            "need at least 2 paths for marginal statistics, got {}",
            paths.len()
        )));
    }
    let n = paths[0].dim();
    let nodes = paths[0].states.len();
    for p in paths {
        if p.dim() != n || p.states.len() != nodes {
            return Err(Error::Invalid("paths disagree on dimension or grid".into()));
        }
    }
    let m = paths.len() as f64;
    let mut means = vec![vec![0.0; n]; nodes];
    let mut stds = vec![vec![0.0; n]; nodes];
    for p in paths {
        for (j, x) in p.states.iter().enumerate() {
            for i in 0..n {
                means[j][i] += x[i];
            }
        }
    }
    for row in &mut means {
        for v in row.iter_mut() {
            *v /= m;
        }
    }
    for p in paths {
        for (j, x) in p.states.iter().enumerate() {
            for i in 0..n {
                let d = x[i] - means[j][i];
                stds[j][i] += d * d;
            }
        }
    }
    for row in &mut stds {
        for v in row.iter_mut() {
            *v = (*v / m).sqrt();
        }
    }
    Ok((means, stds))
}

/// Wasserstein-2-flavoured marginal distance: the root-mean over grid nodes
/// of the squared gap between nodewise coordinate means plus the squared gap
/// between nodewise coordinate standard deviations.
pub fn mv_metric(generated: &[PathSample], oracle: &[PathSample]) -> Result<f64> {
    let (mg, sg) = marginal_stats(generated)?;
    let (mo, so) = marginal_stats(oracle)?;
    if mg.len() != mo.len() || mg[0].len() != mo[0].len() {
        return Err(Error::Invalid("generated and oracle sets disagree on grid or dim".into()));
    }
    let mut acc = 0.0;
    for j in 0..mg.len() {
        for i in 0..mg[0].len() {
            let dm = mg[j][i] - mo[j][i];
            let ds = sg[j][i] - so[j][i];
            acc += dm * dm + ds * ds;
        }
    }
    Ok((acc / mg.len() as f64).sqrt())
}

/// Mean squared landmark displacement of terminal shapes from the target,
/// averaged over paths and landmarks. States are flattened planar landmark
/// lists (x0, y0, x1, y1, ...).
pub fn shape_distance(paths: &[PathSample], target_shape: &[f64]) -> Result<f64> {
    if paths.is_empty() {
        return Err(Error::Invalid("empty path set".into()));
    }
    let dim = paths[0].dim();
    if dim != target_shape.len() || dim % 2 != 0 {
        return Err(Error::DimMismatch { expected: dim, got: target_shape.len() });
    }
    let n_landmarks = dim / 2;
    let mut total = 0.0;
    for p in paths {
        let x = p.terminal();
        for i in 0..n_landmarks {
            let dx = x[2 * i] - target_shape[2 * i];
            let dy = x[2 * i + 1] - target_shape[2 * i + 1];
            total += dx * dx + dy * dy;
        }
    }
    Ok(total / (paths.len() * n_landmarks) as f64)
}
