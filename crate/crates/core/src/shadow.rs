//! Linear "shadows" of a network's action: Jacobians of the reconstruction
//! map, and least-squares GL2 elements fitted to figure deformations.

use std::io::Write;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::autoencoder::{preactivation, reconstruct, AeParams};
use crate::error::{Error, Result};
use crate::figures::{hausdorff, Figure, RasterImage};
use crate::group::{nearest_invertible, nearest_invertible_dense, Gl2, Mat2, Point, SINGULAR_DET};
use crate::stabilizer::is_stabilizer;

/// Perturbation budget used when a fitted shadow comes out singular.
pub const SHADOW_PERTURB_DELTA: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianReport {
    pub matrix: DMatrix<f64>,
    pub det: f64,
    /// Ratio of extreme singular values; infinite for a singular matrix.
    pub condition: f64,
    pub fd_step: f64,
}

impl JacobianReport {
    pub fn from_matrix(matrix: DMatrix<f64>, fd_step: f64) -> Self {
        let det = matrix.clone().determinant();
        let sv = matrix.clone().singular_values();
        let max = sv.max();
        let min = sv.min();
        let condition = if max == 0.0 {
            f64::INFINITY
        } else if min <= max * f64::EPSILON {
            f64::INFINITY
        } else {
            max / min
        };
        Self { matrix, det, condition, fd_step }
    }
}

/// Central-difference Jacobian of [`reconstruct`] at `input`.
pub fn numeric_jacobian(net: &AeParams, input: &[f64], step: f64) -> Result<JacobianReport> {
    if !(1e-7..=1e-2).contains(&step) {
        return Err(Error::InvalidInput(format!("finite-difference step {step} outside [1e-7, 1e-2]")));
    }
    let d = net.input_dim;
    if input.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: input.len() });
    }
    let mut m = DMatrix::zeros(d, d);
    let mut x = input.to_vec();
    for j in 0..d {
        x[j] = input[j] + step;
        let plus = reconstruct(net, &x)?;
        x[j] = input[j] - step;
        let minus = reconstruct(net, &x)?;
        x[j] = input[j];
        for i in 0..d {
            m[(i, j)] = (plus[i] - minus[i]) / (2.0 * step);
        }
    }
    Ok(JacobianReport::from_matrix(m, step))
}

/// Chain-rule Jacobian `W2 diag(act'(z)) W1`.
pub fn analytic_jacobian(net: &AeParams, input: &[f64]) -> Result<DMatrix<f64>> {
    let (d, h) = (net.input_dim, net.hidden_dim);
    let z = preactivation(net, input)?;
    let w1 = DMatrix::from_row_slice(h, d, &net.encode_weights);
    let w2 = DMatrix::from_row_slice(d, h, &net.decode_weights);
    let slopes = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        h,
        z.iter().map(|&v| net.activation.derivative(v)),
    ));
    Ok(w2 * slopes * w1)
}

/// The Jacobian itself when invertible, else the nearest perturbation
/// `(1 - t) J + t I` with `|t| <= delta`.
pub fn invertible_or_perturb(report: &JacobianReport, delta: f64) -> Result<DMatrix<f64>> {
    let n = report.matrix.nrows();
    if report.det.abs() > SINGULAR_DET && delta > 0.0 {
        return Ok(report.matrix.clone());
    }
    nearest_invertible_dense(&report.matrix, &DMatrix::identity(n, n), delta).map(|(m, _)| m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShadowFit {
    pub g: Gl2,
    pub rms_residual: f64,
    pub point_count: usize,
    /// The normal equations were singular and `g` was perturbed.
    pub rank_deficient: bool,
}

/// Least-squares linear map `g` minimizing `sum |g p_in - p_out|^2`, with
/// correspondence by index.
pub fn fit_shadow(points_in: &[Point], points_out: &[Point]) -> Result<ShadowFit> {
    if points_in.len() != points_out.len() {
        return Err(Error::DimensionMismatch { expected: points_in.len(), got: points_out.len() });
    }
    let n = points_in.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 corresponding points, got {n}")));
    }
    // A = sum q p^T, B = sum p p^T, g = A B^-1
    let mut a = [[0.0; 2]; 2];
    let mut b = [[0.0; 2]; 2];
    for (p, q) in points_in.iter().zip(points_out) {
        for i in 0..2 {
            for j in 0..2 {
                a[i][j] += q[i] * p[j];
                b[i][j] += p[i] * p[j];
            }
        }
    }
    let det_b = b[0][0] * b[1][1] - b[0][1] * b[1][0];
    let trace_b = b[0][0] + b[1][1];
    let raw: Mat2 = if det_b.abs() > 1e-12 * trace_b * trace_b {
        let inv = [[b[1][1] / det_b, -b[0][1] / det_b], [-b[1][0] / det_b, b[0][0] / det_b]];
        mul2(&a, &inv)
    } else if trace_b > 0.0 {
        // points on one line through the origin: minimum-norm solution
        // g = A B^+, with B^+ = B / trace(B)^2 for a rank-one B
        let s = 1.0 / (trace_b * trace_b);
        mul2(&a, &[[b[0][0] * s, b[0][1] * s], [b[1][0] * s, b[1][1] * s]])
    } else {
        [[0.0; 2]; 2]
    };
    let singular_normal = det_b.abs() <= 1e-12 * trace_b * trace_b;
    let (g, t) = nearest_invertible(&raw, &Gl2::identity(), SHADOW_PERTURB_DELTA)?;
    let sq: f64 = points_in
        .iter()
        .zip(points_out)
        .map(|(p, q)| {
            let r = g.apply(*p);
            (r[0] - q[0]).powi(2) + (r[1] - q[1]).powi(2)
        })
        .sum();
    Ok(ShadowFit {
        g,
        rms_residual: (sq / n as f64).sqrt(),
        point_count: n,
        rank_deficient: singular_normal || t != 0.0,
    })
}

fn mul2(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn centroid(pts: &[Point]) -> Point {
    let n = pts.len().max(1) as f64;
    let s = pts.iter().fold([0.0, 0.0], |acc, p| [acc[0] + p[0], acc[1] + p[1]]);
    [s[0] / n, s[1] / n]
}

/// Matches each sample to its nearest candidate after translating the
/// candidates so both centroids coincide. Returns the translated matches.
pub fn nearest_neighbor_correspondence(samples: &[Point], candidates: &[Point]) -> Result<Vec<Point>> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no candidate points to match".into()));
    }
    let cs = centroid(samples);
    let cc = centroid(candidates);
    let shifted: Vec<Point> = candidates.iter().map(|q| [q[0] - cc[0] + cs[0], q[1] - cc[1] + cs[1]]).collect();
    Ok(samples
        .iter()
        .map(|p| {
            *shifted
                .iter()
                .min_by(|a, b| {
                    let da = (a[0] - p[0]).powi(2) + (a[1] - p[1]).powi(2);
                    let db = (b[0] - p[0]).powi(2) + (b[1] - p[1]).powi(2);
                    da.total_cmp(&db)
                })
                .expect("candidates non-empty")
        })
        .collect())
}

/// The network's action on a rasterized figure, read back as the set pixel
/// centers of the reconstruction thresholded at 0.5.
pub fn readback(net: &AeParams, image: &RasterImage) -> Result<Vec<Point>> {
    let out = reconstruct(net, &image.to_vector())?;
    let img = RasterImage::from_vector(image.side(), image.extent(), &out, 0.5, image.label())?;
    Ok(img.set_centers())
}

/// One stabilizer-transfer trial: the figure sampled at `n` points, the
/// network's readback matched to those samples, and the fitted shadow.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferResult {
    pub figure_id: String,
    pub fit: ShadowFit,
    pub eps: f64,
    /// Hausdorff distance between the samples and their matched images.
    pub map_distance: f64,
    /// The map stabilizes the figure at `eps` and the fit residual is within `eps`.
    pub antecedent: bool,
    /// `is_stabilizer(g, f, 4 eps)`.
    pub transfer_ok: bool,
}

pub fn stabilizer_transfer(
    figure_id: &str,
    figure: &Figure,
    net: &AeParams,
    image: &RasterImage,
    n: usize,
    eps: f64,
) -> Result<TransferResult> {
    let samples = figure.sample_points(n);
    let out = readback(net, image)?;
    let matched = nearest_neighbor_correspondence(&samples, &out)?;
    let fit = fit_shadow(&samples, &matched)?;
    let map_distance = hausdorff(&samples, &matched);
    Ok(TransferResult {
        figure_id: figure_id.to_string(),
        antecedent: map_distance <= eps && fit.rms_residual <= eps,
        transfer_ok: is_stabilizer(&fit.g, figure, 4.0 * eps),
        fit,
        eps,
        map_distance,
    })
}

#[derive(Debug, Serialize)]
struct ShadowRow<'a> {
    figure_id: &'a str,
    g00: f64,
    g01: f64,
    g10: f64,
    g11: f64,
    det: f64,
    rms_residual: f64,
    stabilizer_transfer_ok: bool,
}

pub fn write_shadow_csv<W: Write>(w: W, rows: &[TransferResult]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    for r in rows {
        let m = r.fit.g.entries();
        out.serialize(ShadowRow {
            figure_id: &r.figure_id,
            g00: m[0][0],
            g01: m[0][1],
            g10: m[1][0],
            g11: m[1][1],
            det: r.fit.g.det(),
            rms_residual: r.fit.rms_residual,
            stabilizer_transfer_ok: r.transfer_ok,
        })?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::Activation;

    fn linear_net(d: usize, h: usize, seed: u64) -> AeParams {
        let mut p = AeParams::random(d, h, Activation::Identity, seed);
        p.encode_bias.iter_mut().for_each(|b| *b = 0.0);
        p.decode_bias.iter_mut().for_each(|b| *b = 0.0);
        p
    }

    fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
    }

    #[test]
    fn linear_net_jacobian_is_decode_times_encode() {
        let net = linear_net(5, 3, 1);
        let x = vec![0.3, -0.2, 0.9, 0.1, 0.5];
        let j = numeric_jacobian(&net, &x, 1e-4).unwrap();
        let w1 = DMatrix::from_row_slice(3, 5, &net.encode_weights);
        let w2 = DMatrix::from_row_slice(5, 3, &net.decode_weights);
        assert!((&j.matrix - w2 * w1).abs().max() < 1e-8);
        assert!(j.condition >= 1.0);
    }

    #[test]
    fn zero_net_jacobian_is_zero() {
        let net = AeParams::zeros(4, 2, Activation::Sigmoid);
        let j = numeric_jacobian(&net, &[0.0; 4], 1e-4).unwrap();
        assert_eq!(j.matrix, DMatrix::zeros(4, 4));
        assert_eq!(j.det, 0.0);
        assert_eq!(j.condition, f64::INFINITY);
        assert!(numeric_jacobian(&net, &[0.0; 4], 1.0).is_err());
    }

    #[test]
    fn sigmoid_net_matches_chain_rule() {
        let mut net = AeParams::random(6, 3, Activation::Sigmoid, 9);
        net.encode_bias = vec![0.2, -0.4, 0.1];
        let x = vec![0.1, 0.7, 0.3, 0.0, 1.0, 0.4];
        let j = numeric_jacobian(&net, &x, 1e-5).unwrap();
        let a = analytic_jacobian(&net, &x).unwrap();
        assert!(rel_err(&j.matrix, &a) < 1e-5, "{}", rel_err(&j.matrix, &a));
    }

    #[test]
    fn composed_linear_nets_multiply() {
        let n1 = linear_net(4, 4, 2);
        let n2 = linear_net(4, 4, 3);
        let x = vec![0.1, 0.2, -0.3, 0.4];
        let y = reconstruct(&n1, &x).unwrap();
        let j1 = numeric_jacobian(&n1, &x, 1e-4).unwrap().matrix;
        let j2 = numeric_jacobian(&n2, &y, 1e-4).unwrap().matrix;
        // Jacobian of the composite by central differences
        let step = 1e-4;
        let mut jc = DMatrix::zeros(4, 4);
        for k in 0..4 {
            let mut xp = x.clone();
            xp[k] += step;
            let mut xm = x.clone();
            xm[k] -= step;
            let fp = reconstruct(&n2, &reconstruct(&n1, &xp).unwrap()).unwrap();
            let fm = reconstruct(&n2, &reconstruct(&n1, &xm).unwrap()).unwrap();
            for i in 0..4 {
                jc[(i, k)] = (fp[i] - fm[i]) / (2.0 * step);
            }
        }
        assert!((jc - j2 * j1).abs().max() < 1e-6);
    }

    #[test]
    fn perturb_examples() {
        let inv = JacobianReport::from_matrix(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]), 1e-4);
        assert_eq!(invertible_or_perturb(&inv, 1e-3).unwrap(), inv.matrix);

        let zero = JacobianReport::from_matrix(DMatrix::zeros(3, 3), 1e-4);
        let m = invertible_or_perturb(&zero, 1e-3).unwrap();
        let t = m[(0, 0)];
        assert!(t.abs() <= 1e-3 && m.clone().determinant().abs() > SINGULAR_DET);
        assert!((m.clone() - DMatrix::identity(3, 3) * t).abs().max() == 0.0);

        let rank1 = JacobianReport::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]), 1e-4);
        let m = invertible_or_perturb(&rank1, 1e-3).unwrap();
        assert_eq!(m[(0, 1)], 0.0);
        assert_eq!(m[(1, 0)], 0.0);
        assert!(m[(1, 1)].abs() <= 1e-3 && m.determinant().abs() > SINGULAR_DET);
    }

    #[test]
    fn identity_and_rotation_recovered() {
        let pts = Figure::circle(1.0).sample_points(64);
        let fit = fit_shadow(&pts, &pts).unwrap();
        assert!(fit.g.frobenius_distance(&Gl2::identity()) < 1e-12);
        assert!(fit.rms_residual < 1e-12);

        let r = Gl2::rotation(37f64.to_radians());
        let out: Vec<Point> = pts.iter().map(|p| r.apply(*p)).collect();
        let fit = fit_shadow(&pts, &out).unwrap();
        assert!(fit.g.frobenius_distance(&r) < 1e-6);
        assert!(fit.rms_residual <= 1e-9);
        assert!(!fit.rank_deficient);
    }

    #[test]
    fn collinear_points_flagged_and_invertible() {
        let pts: Vec<Point> = (0..8).map(|k| [k as f64 - 3.5, 0.0]).collect();
        let out: Vec<Point> = pts.iter().map(|p| [2.0 * p[0], 0.0]).collect();
        let fit = fit_shadow(&pts, &out).unwrap();
        assert!(fit.rank_deficient);
        assert!(fit.g.det().abs() > SINGULAR_DET);
        assert!(fit.rms_residual < 1e-2);
        assert!(fit_shadow(&pts[..2], &out[..2]).is_err());
        assert!(fit_shadow(&pts, &out[..4]).is_err());
    }

    #[test]
    fn residual_equivariant_under_rotation() {
        let pts = Figure::ellipse(1.5, 1.0, 0.3).sample_points(40);
        let g = Gl2::new([[1.1, 0.2], [-0.1, 0.9]]).unwrap();
        let out: Vec<Point> = pts.iter().enumerate().map(|(k, p)| {
            let q = g.apply(*p);
            [q[0] + 0.01 * (k as f64).sin(), q[1] + 0.01 * (k as f64 * 1.7).cos()]
        }).collect();
        let base = fit_shadow(&pts, &out).unwrap();
        let r = Gl2::rotation(0.7);
        let rin: Vec<Point> = pts.iter().map(|p| r.apply(*p)).collect();
        let rout: Vec<Point> = out.iter().map(|p| r.apply(*p)).collect();
        let rot = fit_shadow(&rin, &rout).unwrap();
        assert!((rot.rms_residual - base.rms_residual).abs() < 1e-9);
        let expected = r.compose(&base.g).unwrap().compose(&r.inverse()).unwrap();
        assert!(rot.g.frobenius_distance(&expected) < 1e-9);
    }

    #[test]
    fn correspondence_aligns_centroids() {
        let samples = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let cands = [[5.0, 5.0], [6.0, 5.0], [5.0, 6.0]];
        let m = nearest_neighbor_correspondence(&samples, &cands).unwrap();
        for (a, b) in m.iter().zip(&samples) {
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn shadow_csv_header() {
        let pts = Figure::circle(1.0).sample_points(16);
        let fit = fit_shadow(&pts, &pts).unwrap();
        let row = TransferResult {
            figure_id: "circle".into(),
            fit,
            eps: 0.1,
            map_distance: 0.0,
            antecedent: true,
            transfer_ok: true,
        };
        let mut buf = Vec::new();
        write_shadow_csv(&mut buf, &[row]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("figure_id,g00,g01,g10,g11,det,rms_residual,stabilizer_transfer_ok\ncircle,1"));
    }
}
