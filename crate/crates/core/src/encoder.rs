//! Light graph convolution over the user-item graph.
//!
//! Each layer moves embeddings across the symmetric-normalised adjacency
//! with no weights, self-loops or nonlinearity. The final representation
//! is the mean of layers `0..=L`.

use numgrad::{Real, Result, Tape, Tensor, Var};

use crate::graph::NormAdjacency;

/// Returns final `(users, items)` encodings.
pub fn encode<T: Real>(
    tape: &mut Tape<T>,
    users: Var,
    items: Var,
    adj: &NormAdjacency<T>,
    layers: usize,
) -> Result<(Var, Var)> {
    let (mut xu, mut xi) = (users, items);
    let (mut su, mut si) = (users, items);
    for _ in 0..layers {
        let nu = tape.spmm(adj.user_item.clone(), xi)?;
        let ni = tape.spmm(adj.item_user.clone(), xu)?;
        xu = nu;
        xi = ni;
        su = tape.add(su, xu)?;
        si = tape.add(si, xi)?;
    }
    if layers == 0 {
        return Ok((users, items));
    }
    let inv = T::lit(1.0 / (layers + 1) as f64);
    Ok((tape.scale(su, inv), tape.scale(si, inv)))
}

/// `ŷ_ui = ⟨x_u, x_i⟩` for every item.
pub fn predict_scores<T: Real>(user: &[T], items: &Tensor<T>) -> Vec<T> {
    (0..items.rows())
        .map(|i| items.row(i).iter().zip(user).map(|(&a, &b)| a * b).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_norm_adjacency, InteractionGraph};

    fn run(g: &InteractionGraph, u: Tensor<f64>, i: Tensor<f64>, layers: usize) -> (Tensor<f64>, Tensor<f64>) {
        let adj = build_norm_adjacency::<f64>(g);
        let mut tape = Tape::new();
        let uv = tape.constant(u);
        let iv = tape.constant(i);
        let (a, b) = encode(&mut tape, uv, iv, &adj, layers).unwrap();
        (tape.value(a).clone(), tape.value(b).clone())
    }

    #[test]
    fn zero_layers_is_identity() {
        let g = InteractionGraph::from_pairs(1, 1, [(0, 0)]).unwrap();
        let (u, i) = run(&g, Tensor::scalar(2.0), Tensor::scalar(5.0), 0);
        assert_eq!((u.item(), i.item()), (2.0, 5.0));
    }

    #[test]
    fn single_edge_two_layers() {
        let g = InteractionGraph::from_pairs(1, 1, [(0, 0)]).unwrap();
        let (u, i) = run(&g, Tensor::scalar(2.0), Tensor::scalar(5.0), 2);
        assert!((u.item() - (2.0 + 5.0 + 2.0) / 3.0).abs() < 1e-12);
        assert!((i.item() - (5.0 + 2.0 + 5.0) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn isolated_user_propagates_zero() {
        let g = InteractionGraph::from_pairs(2, 1, [(0, 0)]).unwrap();
        let adj = build_norm_adjacency::<f64>(&g);
        let mut tape = Tape::new();
        let i = tape.constant(Tensor::scalar(3.0));
        let u1 = tape.spmm(adj.user_item.clone(), i).unwrap();
        assert_eq!(tape.value(u1).data(), &[3.0, 0.0]);
    }

    #[test]
    fn square_graph_averages_neighbours() {
        let g = InteractionGraph::from_pairs(2, 2, [(0, 0), (0, 1), (1, 0), (1, 1)]).unwrap();
        let adj = build_norm_adjacency::<f64>(&g);
        let mut tape = Tape::new();
        let items = tape.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
        let u1 = tape.spmm(adj.user_item.clone(), items).unwrap();
        assert_eq!(tape.value(u1).data(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn linear_in_inputs() {
        let g = InteractionGraph::from_pairs(3, 3, [(0, 0), (0, 2), (1, 1), (2, 1), (2, 2)]).unwrap();
        let u = Tensor::from_fn(3, 2, |i, j| (i as f64 - j as f64) * 0.4);
        let i = Tensor::from_fn(3, 2, |i, j| (i * j) as f64 * 0.3 + 0.1);
        let (a, b) = run(&g, u.clone(), i.clone(), 3);
        let (a7, b7) = run(&g, u.scale(7.0), i.scale(7.0), 3);
        for (x, y) in a.data().iter().chain(b.data()).zip(a7.data().iter().chain(b7.data())) {
            assert!((7.0 * x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn scores_are_inner_products() {
        let items = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, -1.0]]).unwrap();
        assert_eq!(predict_scores(&[0.0, 1.0], &items), vec![0.0, 1.0, -1.0]);
        assert_eq!(predict_scores(&[1.0, 0.0], &items.gather_rows(&[0]).unwrap()), vec![1.0]);
    }
}
