//! Bipartite projection games between `Y` and `Z` variables.
//!
//! Every constraint maps each `R_Y` value of its `y` endpoint to the unique
//! `R_Z` value of its `z` endpoint that satisfies it. The generators here are
//! desk-scale stand-ins for instances a PCP would produce: a planted game with
//! a fully satisfying labeling, and a scrambled copy on the same graph.

use crate::rational::Rational;
use num_traits::One;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// The portable PRNG behind every seeded generator in the crate.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GameError {
    #[error("labeling is malformed: {0}")]
    MalformedLabeling(String),
    #[error("infeasible generator parameters: {0}")]
    Infeasible(String),
    #[error("game fails validation: {0:?}")]
    Invalid(Vec<Violation>),
    #[error("instance too large for exhaustive search: {0} labelings")]
    TooLarge(u128),
}

pub type Result<T> = std::result::Result<T, GameError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub y: usize,
    pub z: usize,
    /// `table[a]` is the `R_Z` value forced by `y = a`.
    pub table: Vec<u32>,
}

impl Constraint {
    pub fn project(&self, a: u32) -> u32 {
        self.table[a as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionGame {
    pub ry: usize,
    pub rz: usize,
    pub y_count: usize,
    pub z_count: usize,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameLabeling {
    pub y_labels: Vec<u32>,
    pub z_labels: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    EmptyRange { ry: usize, rz: usize },
    RangeOrder { ry: usize, rz: usize },
    YOutOfRange { constraint: usize, y: usize },
    ZOutOfRange { constraint: usize, z: usize },
    TableLength { constraint: usize, len: usize, expected: usize },
    TableEntry { constraint: usize, index: usize, value: u32 },
    DuplicatePair { first: usize, second: usize, y: usize, z: usize },
    NotBiregularY { degrees: Vec<usize> },
    NotBiregularZ { degrees: Vec<usize> },
}

impl ProjectionGame {
    /// Every invariant violation, in a fixed order. Empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.ry == 0 || self.rz == 0 {
            out.push(Violation::EmptyRange { ry: self.ry, rz: self.rz });
        }
        if self.rz > self.ry {
            out.push(Violation::RangeOrder { ry: self.ry, rz: self.rz });
        }
        let mut seen: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (idx, c) in self.constraints.iter().enumerate() {
            if c.y >= self.y_count {
                out.push(Violation::YOutOfRange { constraint: idx, y: c.y });
            }
            if c.z >= self.z_count {
                out.push(Violation::ZOutOfRange { constraint: idx, z: c.z });
            }
            if c.table.len() != self.ry {
                out.push(Violation::TableLength {
                    constraint: idx,
                    len: c.table.len(),
                    expected: self.ry,
                });
            }
            for (index, &value) in c.table.iter().enumerate() {
                if value as usize >= self.rz {
                    out.push(Violation::TableEntry { constraint: idx, index, value });
                }
            }
            if let Some(&first) = seen.get(&(c.y, c.z)) {
                out.push(Violation::DuplicatePair { first, second: idx, y: c.y, z: c.z });
            } else {
                seen.insert((c.y, c.z), idx);
            }
        }
        let (dy, dz) = self.degrees();
        if dy.windows(2).any(|w| w[0] != w[1]) {
            out.push(Violation::NotBiregularY { degrees: dy });
        }
        if dz.windows(2).any(|w| w[0] != w[1]) {
            out.push(Violation::NotBiregularZ { degrees: dz });
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(GameError::Invalid(violations))
        }
    }

    /// Constraint counts per `y` and per `z` (out-of-range endpoints ignored).
    pub fn degrees(&self) -> (Vec<usize>, Vec<usize>) {
        let mut dy = vec![0; self.y_count];
        let mut dz = vec![0; self.z_count];
        for c in &self.constraints {
            if let Some(d) = dy.get_mut(c.y) {
                *d += 1;
            }
            if let Some(d) = dz.get_mut(c.z) {
                *d += 1;
            }
        }
        (dy, dz)
    }

    /// Constraint ids incident to each `y`, in constraint order.
    pub fn y_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.y_count];
        for (idx, c) in self.constraints.iter().enumerate() {
            adj[c.y].push(idx);
        }
        adj
    }

    /// Constraint id for each `(y, z)` pair that carries one.
    pub fn pair_index(&self) -> BTreeMap<(usize, usize), usize> {
        self.constraints
            .iter()
            .enumerate()
            .map(|(idx, c)| ((c.y, c.z), idx))
            .collect()
    }

    pub fn check_labeling(&self, labeling: &GameLabeling) -> Result<()> {
        if labeling.y_labels.len() != self.y_count || labeling.z_labels.len() != self.z_count {
            return Err(GameError::MalformedLabeling(format!(
                "expected {} y-labels and {} z-labels, got {} and {}",
                self.y_count,
                self.z_count,
                labeling.y_labels.len(),
                labeling.z_labels.len()
            )));
        }
        if let Some(v) = labeling.y_labels.iter().find(|&&v| v as usize >= self.ry) {
            return Err(GameError::MalformedLabeling(format!("y-label {v} outside R_Y")));
        }
        if let Some(v) = labeling.z_labels.iter().find(|&&v| v as usize >= self.rz) {
            return Err(GameError::MalformedLabeling(format!("z-label {v} outside R_Z")));
        }
        Ok(())
    }

    pub fn satisfied_count(&self, labeling: &GameLabeling) -> usize {
        self.constraints
            .iter()
            .filter(|c| c.project(labeling.y_labels[c.y]) == labeling.z_labels[c.z])
            .count()
    }

    /// Exact fraction of satisfied constraints; a game without constraints
    /// counts as fully satisfied.
    pub fn satisfied_fraction(&self, labeling: &GameLabeling) -> Result<Rational> {
        self.check_labeling(labeling)?;
        if self.constraints.is_empty() {
            return Ok(Rational::one());
        }
        Ok(crate::rational::ratio(
            self.satisfied_count(labeling) as i64,
            self.constraints.len() as i64,
        ))
    }

    pub fn is_satisfying(&self, labeling: &GameLabeling) -> bool {
        self.check_labeling(labeling).is_ok() && self.satisfied_count(labeling) == self.constraints.len()
    }
}

/// Builds a bi-regular simple bipartite graph: `y_count * degree` slots on
/// each side, joined by a random perfect matching, redrawn until no `(y, z)`
/// pair repeats. After a bounded number of draws a shifted round-robin
/// template under random relabelings is used, which is always simple.
fn biregular_edges(
    y_count: usize,
    z_count: usize,
    degree: usize,
    rng: &mut SeededRng,
) -> Result<Vec<(usize, usize)>> {
    if y_count == 0 || z_count == 0 || degree == 0 {
        return Err(GameError::Infeasible("counts and degree must be positive".into()));
    }
    let edges = y_count * degree;
    if !edges.is_multiple_of(z_count) {
        return Err(GameError::Infeasible(format!(
            "y_count * degree = {edges} is not divisible by z_count = {z_count}"
        )));
    }
    let z_degree = edges / z_count;
    if degree > z_count || z_degree > y_count {
        return Err(GameError::Infeasible(format!(
            "degrees ({degree}, {z_degree}) exceed the opposite side sizes ({z_count}, {y_count})"
        )));
    }
    let y_slots: Vec<usize> = (0..y_count).flat_map(|y| std::iter::repeat_n(y, degree)).collect();
    let mut z_slots: Vec<usize> = (0..z_count).flat_map(|z| std::iter::repeat_n(z, z_degree)).collect();
    const DRAWS: usize = 256;
    for _ in 0..DRAWS {
        z_slots.shuffle(rng);
        let mut pairs: Vec<(usize, usize)> = y_slots.iter().copied().zip(z_slots.iter().copied()).collect();
        pairs.sort_unstable();
        if pairs.windows(2).all(|w| w[0] != w[1]) {
            return Ok(pairs);
        }
    }
    let mut y_perm: Vec<usize> = (0..y_count).collect();
    let mut z_perm: Vec<usize> = (0..z_count).collect();
    y_perm.shuffle(rng);
    z_perm.shuffle(rng);
    let mut pairs: Vec<(usize, usize)> = (0..edges)
        .map(|slot| (y_perm[slot / degree], z_perm[slot % z_count]))
        .collect();
    pairs.sort_unstable();
    Ok(pairs)
}

/// A bi-regular game with a planted labeling that satisfies every constraint.
/// `degree` is the number of constraints per `y`.
pub fn gen_planted(
    y_count: usize,
    z_count: usize,
    degree: usize,
    ry: usize,
    rz: usize,
    seed: u64,
) -> Result<(ProjectionGame, GameLabeling)> {
    if ry == 0 || rz == 0 || rz > ry {
        return Err(GameError::Infeasible(format!("need 0 < rz <= ry, got ry={ry}, rz={rz}")));
    }
    let mut rng = seeded_rng(seed);
    let pairs = biregular_edges(y_count, z_count, degree, &mut rng)?;
    let labeling = GameLabeling {
        y_labels: (0..y_count).map(|_| rng.gen_range(0..ry as u32)).collect(),
        z_labels: (0..z_count).map(|_| rng.gen_range(0..rz as u32)).collect(),
    };
    let constraints = pairs
        .into_iter()
        .map(|(y, z)| {
            let mut table: Vec<u32> = (0..ry).map(|_| rng.gen_range(0..rz as u32)).collect();
            table[labeling.y_labels[y] as usize] = labeling.z_labels[z];
            Constraint { y, z, table }
        })
        .collect();
    let game = ProjectionGame { ry, rz, y_count, z_count, constraints };
    Ok((game, labeling))
}

/// Same constraint graph, every table redrawn uniformly at random.
pub fn gen_scrambled(base: &ProjectionGame, seed: u64) -> ProjectionGame {
    let mut rng = seeded_rng(seed);
    let rz = base.rz.max(1) as u32;
    let constraints = base
        .constraints
        .iter()
        .map(|c| Constraint {
            y: c.y,
            z: c.z,
            table: (0..base.ry).map(|_| rng.gen_range(0..rz)).collect(),
        })
        .collect();
    ProjectionGame { constraints, ..base.clone() }
}

/// Best labeling by exhaustive search over `ry^y_count * rz^z_count`
/// assignments; ties keep the first labeling in odometer order.
pub fn exhaustive_optimum(game: &ProjectionGame, limit: u128) -> Result<(GameLabeling, Rational)> {
    let space = (game.ry as u128)
        .checked_pow(game.y_count as u32)
        .and_then(|a| (game.rz as u128).checked_pow(game.z_count as u32).and_then(|b| a.checked_mul(b)))
        .unwrap_or(u128::MAX);
    if space > limit {
        return Err(GameError::TooLarge(space));
    }
    let mut current = GameLabeling {
        y_labels: vec![0; game.y_count],
        z_labels: vec![0; game.z_count],
    };
    let mut best = (current.clone(), game.satisfied_count(&current));
    let radices: Vec<u32> = std::iter::repeat_n(game.ry as u32, game.y_count)
        .chain(std::iter::repeat_n(game.rz as u32, game.z_count))
        .collect();
    loop {
        let mut pos = radices.len();
        loop {
            if pos == 0 {
                let fraction = game.satisfied_fraction(&best.0)?;
                return Ok((best.0, fraction));
            }
            pos -= 1;
            let digit = if pos < game.y_count {
                &mut current.y_labels[pos]
            } else {
                &mut current.z_labels[pos - game.y_count]
            };
            *digit += 1;
            if *digit < radices[pos] {
                break;
            }
            *digit = 0;
        }
        let count = game.satisfied_count(&current);
        if count > best.1 {
            best = (current.clone(), count);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    #[test]
    fn planted_example_is_valid_and_satisfied() {
        let (game, plant) = gen_planted(4, 2, 1, 3, 2, 7).unwrap();
        assert_eq!(game.validate(), vec![]);
        assert_eq!(game.satisfied_fraction(&plant).unwrap(), ratio(1, 1));
        assert_eq!(game.constraints.len(), 4);
        let (again, plant_again) = gen_planted(4, 2, 1, 3, 2, 7).unwrap();
        assert_eq!((game, plant), (again, plant_again));
    }

    #[test]
    fn planted_is_satisfied_for_many_seeds() {
        for seed in 0..100 {
            let (game, plant) = gen_planted(4, 2, 2, 3, 2, seed).unwrap();
            assert!(game.is_valid(), "seed {seed}");
            assert_eq!(game.satisfied_fraction(&plant).unwrap(), ratio(1, 1));
        }
    }

    #[test]
    fn infeasible_degrees_are_rejected() {
        assert!(matches!(gen_planted(3, 2, 1, 2, 2, 0), Err(GameError::Infeasible(_))));
        assert!(matches!(gen_planted(2, 2, 3, 2, 2, 0), Err(GameError::Infeasible(_))));
        assert!(matches!(gen_planted(2, 2, 1, 2, 3, 0), Err(GameError::Infeasible(_))));
    }

    #[test]
    fn complete_bipartite_uses_every_pair() {
        let (game, _) = gen_planted(3, 2, 2, 2, 2, 11).unwrap();
        assert!(game.is_valid());
        assert_eq!(game.constraints.len(), 6);
    }

    #[test]
    fn degree_violation_is_reported() {
        let game = ProjectionGame {
            ry: 2,
            rz: 2,
            y_count: 2,
            z_count: 2,
            constraints: vec![
                Constraint { y: 0, z: 0, table: vec![0, 1] },
                Constraint { y: 0, z: 1, table: vec![0, 1] },
                Constraint { y: 1, z: 0, table: vec![0, 1] },
            ],
        };
        let v = game.validate();
        assert!(v.contains(&Violation::NotBiregularY { degrees: vec![2, 1] }));
        assert!(v.contains(&Violation::NotBiregularZ { degrees: vec![2, 1] }));
    }

    #[test]
    fn table_range_violation_is_reported() {
        let game = ProjectionGame {
            ry: 2,
            rz: 1,
            y_count: 1,
            z_count: 1,
            constraints: vec![Constraint { y: 0, z: 0, table: vec![0, 1] }],
        };
        assert_eq!(
            game.validate(),
            vec![Violation::TableEntry { constraint: 0, index: 1, value: 1 }]
        );
    }

    #[test]
    fn satisfied_fraction_counts_constraints() {
        let single = ProjectionGame {
            ry: 2,
            rz: 2,
            y_count: 1,
            z_count: 1,
            constraints: vec![Constraint { y: 0, z: 0, table: vec![1, 0] }],
        };
        let lab = GameLabeling { y_labels: vec![0], z_labels: vec![0] };
        assert_eq!(single.satisfied_fraction(&lab).unwrap(), ratio(0, 1));

        // Four constraints; only (1, 1) fails under the labeling below.
        let game = ProjectionGame {
            ry: 2,
            rz: 2,
            y_count: 2,
            z_count: 2,
            constraints: vec![
                Constraint { y: 0, z: 0, table: vec![0, 1] },
                Constraint { y: 0, z: 1, table: vec![1, 1] },
                Constraint { y: 1, z: 0, table: vec![0, 0] },
                Constraint { y: 1, z: 1, table: vec![0, 0] },
            ],
        };
        let lab = GameLabeling { y_labels: vec![0, 1], z_labels: vec![0, 1] };
        assert_eq!(game.satisfied_fraction(&lab).unwrap(), ratio(3, 4));
        let bad = GameLabeling { y_labels: vec![0], z_labels: vec![0, 1] };
        assert!(matches!(game.satisfied_fraction(&bad), Err(GameError::MalformedLabeling(_))));
        let out_of_range = GameLabeling { y_labels: vec![0, 2], z_labels: vec![0, 1] };
        assert!(game.satisfied_fraction(&out_of_range).is_err());
    }

    #[test]
    fn scrambled_keeps_graph_and_is_deterministic() {
        let (game, _) = gen_planted(4, 2, 1, 3, 2, 3).unwrap();
        let a = gen_scrambled(&game, 99);
        let b = gen_scrambled(&game, 99);
        assert_eq!(a, b);
        assert!(a.is_valid());
        let edges = |g: &ProjectionGame| g.constraints.iter().map(|c| (c.y, c.z)).collect::<Vec<_>>();
        assert_eq!(edges(&a), edges(&game));
    }

    #[test]
    fn scrambled_optimum_is_reported() {
        // Reported rather than asserted: scrambling usually destroys satisfiability.
        let mut unsat = 0;
        for seed in 0..20 {
            let (game, _) = gen_planted(2, 2, 2, 3, 2, seed).unwrap();
            let scrambled = gen_scrambled(&game, seed + 1000);
            let (_, best) = exhaustive_optimum(&scrambled, 1 << 20).unwrap();
            assert!(best <= ratio(1, 1));
            if best < ratio(1, 1) {
                unsat += 1;
            }
        }
        eprintln!("scrambled 2+2 games without a perfect labeling: {unsat}/20");
    }

    #[test]
    fn exhaustive_optimum_dominates_any_labeling() {
        let (game, plant) = gen_planted(2, 2, 2, 2, 2, 5).unwrap();
        let (_, best) = exhaustive_optimum(&game, 1 << 20).unwrap();
        assert_eq!(best, game.satisfied_fraction(&plant).unwrap());
        let scrambled = gen_scrambled(&game, 6);
        let (best_lab, best) = exhaustive_optimum(&scrambled, 1 << 20).unwrap();
        assert_eq!(scrambled.satisfied_fraction(&best_lab).unwrap(), best);
        assert!(best >= scrambled.satisfied_fraction(&plant).unwrap());
        assert!(matches!(exhaustive_optimum(&game, 3), Err(GameError::TooLarge(16))));
    }

    #[test]
    fn json_matches_documented_shape() {
        let game = ProjectionGame {
            ry: 2,
            rz: 1,
            y_count: 1,
            z_count: 1,
            constraints: vec![Constraint { y: 0, z: 0, table: vec![0, 0] }],
        };
        let text = serde_json::to_string(&game).unwrap();
        assert_eq!(
            text,
            r#"{"ry":2,"rz":1,"y_count":1,"z_count":1,"constraints":[{"y":0,"z":0,"table":[0,0]}]}"#
        );
        assert_eq!(serde_json::from_str::<ProjectionGame>(&text).unwrap(), game);
    }
}
