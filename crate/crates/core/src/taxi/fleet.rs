//! Background fleet supplying the available-taxi counts τ(g).

use rand::Rng;

use crate::grid::{chebyshev_distance, clip_move, displacement_actions, CellIndex, Displacement, Grid};

/// Probability that a background taxi heads for the nearest open request.
pub const DEFAULT_GREEDY_PROB: f64 = 0.7;

/// Moves every background taxi one Chebyshev step: toward the nearest cell
/// with open requests with probability `greedy_prob`, otherwise to a uniform
/// random neighbour (clamped at the border). The fleet size is conserved.
pub fn fleet_step<R: Rng + ?Sized>(
    taxis: &Grid<u32>,
    requests: &Grid<u32>,
    greedy_prob: f64,
    rng: &mut R,
) -> Grid<u32> {
    let spec = taxis.spec();
    let targets: Vec<CellIndex> = requests
        .iter()
        .filter(|(_, &r)| r > 0)
        .map(|(c, _)| c)
        .collect();
    let random_moves: Vec<Displacement> = displacement_actions(1)
        .into_iter()
        .filter(|d| !d.is_stay())
        .collect();

    let mut next = Grid::filled(spec, 0u32);
    for (cell, &count) in taxis.iter() {
        // Nearest target by Chebyshev distance; ties resolve to the first in
        // row-major order.
        let nearest = targets
            .iter()
            .min_by_key(|t| chebyshev_distance(cell, **t))
            .copied();
        for _ in 0..count {
            let greedy = greedy_prob >= 1.0 || rng.random_bool(greedy_prob.clamp(0.0, 1.0));
            let to = match nearest {
                Some(t) if greedy => {
                    let step = Displacement::new(
                        (t.x as i32 - cell.x as i32).signum(),
                        (t.y as i32 - cell.y as i32).signum(),
                    );
                    clip_move(cell, step, spec)
                }
                _ => {
                    let d = random_moves[rng.random_range(0..random_moves.len())];
                    clip_move(cell, d, spec)
                }
            };
            *next.get_mut(to) += 1;
        }
    }
    next
}

/// Places `size` taxis on uniformly random cells.
pub fn scatter_fleet<R: Rng + ?Sized>(spec: crate::grid::GridSpec, size: u32, rng: &mut R) -> Grid<u32> {
    let mut g = Grid::filled(spec, 0u32);
    for _ in 0..size {
        let i = rng.random_range(0..spec.len());
        g.as_mut_slice()[i] += 1;
    }
    g
}
