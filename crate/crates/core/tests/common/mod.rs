#![allow(dead_code)]

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trussgsm_core::autodiff::{Matrix, Tape, TensorId};
use trussgsm_core::gsm::FeastConvLayer;
use trussgsm_core::model::{GraphSample, Joint, Material, Truss};
use trussgsm_core::Result;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-scale..scale))
}

/// Entries with magnitude in [0.2, 1.0] and random sign, away from ReLU kinks.
pub fn away_from_zero(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Array2::from_shape_fn((rows, cols), |_| {
        let m = rng.gen_range(0.2..1.0);
        if rng.gen_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// Random connected undirected graph as a symmetric directed edge list with
/// self-loops, in the encoding order (edge pairs, then loops).
pub fn random_graph(rng: &mut impl Rng, n: usize) -> Vec<(usize, usize)> {
    let mut pairs = BTreeSet::new();
    for i in 1..n {
        let j = rng.gen_range(0..i);
        pairs.insert((j, i));
    }
    for _ in 0..n {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b {
            pairs.insert((a.min(b), a.max(b)));
        }
    }
    let mut edges: Vec<(usize, usize)> = pairs.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect();
    edges.extend((0..n).map(|i| (i, i)));
    edges
}

pub fn random_layer(rng: &mut impl Rng, inw: usize, outw: usize, heads: usize) -> FeastConvLayer {
    FeastConvLayer::from_parts(
        random_matrix(rng, inw, heads * outw, 0.8),
        random_matrix(rng, inw, heads, 0.8),
        random_matrix(rng, 1, heads, 0.8),
        random_matrix(rng, 1, outw, 0.8),
    )
    .unwrap()
}

/// Dense double-loop FeaStNet evaluation.
pub fn brute_force_feast(x: &Matrix, edges: &[(usize, usize)], layer: &FeastConvLayer) -> Matrix {
    let n = x.nrows();
    let m = layer.heads();
    let out = layer.out_width();
    let inw = layer.in_width();
    let mut y = Array2::zeros((n, out));
    for i in 0..n {
        let neighbors: Vec<usize> = edges.iter().filter(|e| e.0 == i).map(|e| e.1).collect();
        for &j in &neighbors {
            let logits: Vec<f64> = (0..m)
                .map(|h| {
                    (0..inw)
                        .map(|k| layer.attention[[k, h]] * (x[[j, k]] - x[[i, k]]))
                        .sum::<f64>()
                        + layer.attention_bias[[0, h]]
                })
                .collect();
            let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - top).exp()).sum();
            for h in 0..m {
                let q = (logits[h] - top).exp() / z;
                for o in 0..out {
                    let xw: f64 = (0..inw).map(|k| x[[j, k]] * layer.weight[[k, h * out + o]]).sum();
                    y[[i, o]] += q * xw / neighbors.len() as f64;
                }
            }
        }
        for o in 0..out {
            y[[i, o]] += layer.bias[[0, o]];
        }
    }
    y
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Node permutation `perm[new] = old` applied to features and edges.
pub fn permute_graph(x: &Matrix, edges: &[(usize, usize)], perm: &[usize]) -> (Matrix, Vec<(usize, usize)>) {
    let mut inverse = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inverse[old] = new;
    }
    let px = Array2::from_shape_fn(x.dim(), |(r, c)| x[[perm[r], c]]);
    let pe = edges.iter().map(|&(a, b)| (inverse[a], inverse[b])).collect();
    (px, pe)
}

pub fn permute_rows(m: &Matrix, perm: &[usize]) -> Matrix {
    Array2::from_shape_fn(m.dim(), |(r, c)| m[[perm[r], c]])
}

pub fn random_permutation(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Relative error with a floor on the denominator.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Central finite-difference check of `f`'s gradients with respect to every
/// entry of every input. `f` builds a 1×1 loss from the input leaves.
pub fn gradient_check<F>(inputs: &[Matrix], f: F) -> f64
where
    F: Fn(&mut Tape, &[TensorId]) -> Result<TensorId>,
{
    let eval = |vals: &[Matrix]| -> f64 {
        let mut tape = Tape::new();
        let ids: Vec<TensorId> = vals.iter().map(|v| tape.leaf(v.clone(), false).unwrap()).collect();
        let out = f(&mut tape, &ids).unwrap();
        tape.value(out)[[0, 0]]
    };
    let mut tape = Tape::new();
    let ids: Vec<TensorId> = inputs.iter().map(|v| tape.leaf(v.clone(), true).unwrap()).collect();
    let out = f(&mut tape, &ids).unwrap();
    tape.backward(out).unwrap();
    let grads: Vec<Matrix> = ids
        .iter()
        .map(|&id| tape.grad(id).cloned().unwrap_or_else(|| Matrix::zeros(tape.shape(id))))
        .collect();

    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut vals = inputs.to_vec();
    for (k, g) in grads.iter().enumerate() {
        for idx in 0..g.len() {
            let (r, c) = (idx / g.ncols(), idx % g.ncols());
            let orig = vals[k][[r, c]];
            vals[k][[r, c]] = orig + h;
            let up = eval(&vals);
            vals[k][[r, c]] = orig - h;
            let down = eval(&vals);
            vals[k][[r, c]] = orig;
            worst = worst.max(rel_err(g[[r, c]], (up - down) / (2.0 * h)));
        }
    }
    worst
}

/// Scalar loss `mean(out ⊙ w)` with fixed random weights.
pub fn weighted_mean(tape: &mut Tape, out: TensorId, seed: u64) -> Result<TensorId> {
    let (r, c) = tape.shape(out);
    let w = tape.leaf(random_matrix(&mut rng(seed), r, c, 1.0), false)?;
    let prod = tape.mul(out, w)?;
    tape.mean(prod)
}

/// Bar from a pinned joint to a joint on a y-roller, loaded axially.
pub fn axial_bar(length: f64, load: f64) -> Truss {
    Truss::new(
        vec![
            Joint::pinned(0.0, 0.0),
            Joint::free(length, 0.0).with_support(false, true).with_load(load, 0.0),
        ],
        vec![(0, 1)],
        Material::steel_section(),
    )
    .unwrap()
}

/// Single beam clamped at the origin with a transverse tip load.
pub fn cantilever(length: f64, load: f64) -> Truss {
    Truss::new(
        vec![Joint::free(0.0, 0.0).clamped(), Joint::free(length, 0.0).with_load(0.0, load)],
        vec![(0, 1)],
        Material::steel_section(),
    )
    .unwrap()
}

pub fn tiny_sample(rng: &mut impl Rng, n: usize, tag: &str) -> GraphSample {
    let edges = random_graph(rng, n);
    let mut f = random_matrix(rng, n, 6, 1.0);
    for i in 0..n {
        for c in 2..6 {
            f[[i, c]] = if rng.gen_bool(0.3) { 1.0 } else { 0.0 };
        }
    }
    let t = random_matrix(rng, n, 2, 1e-3);
    GraphSample::new(f, edges, t, tag).unwrap()
}
