//! Toric-code geometry on a periodic `d × d` lattice.
//!
//! Vertices live at coordinates `(i, j)` with `0 <= i, j < d` (row `i` grows
//! downward, column `j` grows rightward, both periodic).  Data qubits sit on
//! the edges:
//!
//! * the *horizontal* edge `h(i, j)` joins vertex `(i, j)` to `(i, j+1)` and
//!   has qubit id `i*d + j`;
//! * the *vertical* edge `v(i, j)` joins vertex `(i, j)` to `(i+1, j)` and
//!   has qubit id `d*d + i*d + j`.
//!
//! There are `2d²` data qubits, `d²` plaquette (Z-type) checks and `d²` star
//! (X-type) checks.  Plaquette `(i, j)` is the face whose upper-left corner is
//! vertex `(i, j)`; star `(i, j)` is the vertex `(i, j)` itself.  Stabilizer
//! supports are always reported in the fixed order `[Up, Left, Right, Down]`,
//! which is also the temporal order in which the syndrome-extraction circuits
//! touch the four data qubits.
//!
//! X errors are detected by plaquettes (each edge lies in exactly two faces),
//! Z errors by stars.  A closed chain (empty boundary) is classified up to
//! homology by its overlap parity with the two logical representatives of the
//! opposite type.

/// Which of the two stabilizer types a check belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CheckKind {
    /// Z-type face check; detects X errors.
    Plaquette,
    /// X-type vertex check; detects Z errors.
    Star,
}

/// Position of a data qubit inside a check's support, in circuit order.
///
/// The discriminant doubles as the CNOT slot (1-based) used by the
/// syndrome-extraction schedules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Up = 1,
    Left = 2,
    Right = 3,
    Down = 4,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Up, Role::Left, Role::Right, Role::Down];

    /// 1-based CNOT slot within the standard four-step schedule.
    pub fn slot(self) -> usize {
        self as usize
    }
}

/// Geometry of a `d × d` toric code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToricLattice {
    d: usize,
}

impl ToricLattice {
    /// Create a lattice of linear size `d` (`d >= 2`).
    pub fn new(d: usize) -> Self {
        assert!(d >= 2, "lattice size must be at least 2, got {d}");
        ToricLattice { d }
    }

    /// Linear size of the lattice.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of data qubits (`2d²`).
    pub fn n_data(&self) -> usize {
        2 * self.d * self.d
    }

    /// Number of checks of each kind (`d²`).
    pub fn n_checks(&self) -> usize {
        self.d * self.d
    }

    /// Reduce a possibly-negative coordinate modulo `d`.
    pub fn wrap(&self, x: isize) -> usize {
        let d = self.d as isize;
        (((x % d) + d) % d) as usize
    }

    /// Qubit id of the horizontal edge leaving vertex `(i, j)` rightward.
    pub fn h(&self, i: isize, j: isize) -> usize {
        self.wrap(i) * self.d + self.wrap(j)
    }

    /// Qubit id of the vertical edge leaving vertex `(i, j)` downward.
    pub fn v(&self, i: isize, j: isize) -> usize {
        self.d * self.d + self.wrap(i) * self.d + self.wrap(j)
    }

    /// True if the qubit id refers to a horizontal edge.
    pub fn is_horizontal(&self, q: usize) -> bool {
        q < self.d * self.d
    }

    /// Decompose a qubit id into (is_horizontal, row, col).
    pub fn qubit_coords(&self, q: usize) -> (bool, usize, usize) {
        debug_assert!(q < self.n_data());
        let dd = self.d * self.d;
        let (horiz, r) = if q < dd { (true, q) } else { (false, q - dd) };
        (horiz, r / self.d, r % self.d)
    }

    /// Check id for either kind at coordinates `(i, j)`.
    pub fn check_id(&self, i: isize, j: isize) -> usize {
        self.wrap(i) * self.d + self.wrap(j)
    }

    /// Coordinates `(i, j)` of a check id.
    pub fn check_coords(&self, c: usize) -> (usize, usize) {
        debug_assert!(c < self.n_checks());
        (c / self.d, c % self.d)
    }

    /// Support of plaquette `(i, j)` in `[Up, Left, Right, Down]` order.
    ///
    /// Up = `h(i,j)`, Left = `v(i,j)`, Right = `v(i,j+1)`, Down = `h(i+1,j)`.
    pub fn plaquette_support(&self, i: isize, j: isize) -> [usize; 4] {
        [
            self.h(i, j),
            self.v(i, j),
            self.v(i, j + 1),
            self.h(i + 1, j),
        ]
    }

    /// Support of star `(i, j)` in `[Up, Left, Right, Down]` order.
    ///
    /// Up = `v(i-1,j)`, Left = `h(i,j-1)`, Right = `h(i,j)`, Down = `v(i,j)`.
    pub fn star_support(&self, i: isize, j: isize) -> [usize; 4] {
        [
            self.v(i - 1, j),
            self.h(i, j - 1),
            self.h(i, j),
            self.v(i, j),
        ]
    }

    /// Support of a check given its kind and id, in `[U, L, R, D]` order.
    pub fn support(&self, kind: CheckKind, c: usize) -> [usize; 4] {
        let (i, j) = self.check_coords(c);
        match kind {
            CheckKind::Plaquette => self.plaquette_support(i as isize, j as isize),
            CheckKind::Star => self.star_support(i as isize, j as isize),
        }
    }

    /// The two plaquette ids containing a given data qubit.
    pub fn plaquettes_of(&self, q: usize) -> [usize; 2] {
        let (horiz, i, j) = self.qubit_coords(q);
        let (i, j) = (i as isize, j as isize);
        if horiz {
            // h(i,j) is Up of plaq(i,j) and Down of plaq(i-1,j).
            [self.check_id(i, j), self.check_id(i - 1, j)]
        } else {
            // v(i,j) is Left of plaq(i,j) and Right of plaq(i,j-1).
            [self.check_id(i, j), self.check_id(i, j - 1)]
        }
    }

    /// The two star ids containing a given data qubit.
    pub fn stars_of(&self, q: usize) -> [usize; 2] {
        let (horiz, i, j) = self.qubit_coords(q);
        let (i, j) = (i as isize, j as isize);
        if horiz {
            // h(i,j) is Right of star(i,j) and Left of star(i,j+1).
            [self.check_id(i, j), self.check_id(i, j + 1)]
        } else {
            // v(i,j) is Down of star(i,j) and Up of star(i+1,j).
            [self.check_id(i, j), self.check_id(i + 1, j)]
        }
    }

    /// Boundary of an X-error chain: plaquette syndrome bits.
    ///
    /// `chain[q]` marks data qubits carrying an X; the result holds one parity
    /// bit per plaquette.
    pub fn plaquette_boundary(&self, chain: &[bool]) -> Vec<bool> {
        debug_assert_eq!(chain.len(), self.n_data());
        let mut syn = vec![false; self.n_checks()];
        for (q, &on) in chain.iter().enumerate() {
            if on {
                for p in self.plaquettes_of(q) {
                    syn[p] = !syn[p];
                }
            }
        }
        syn
    }

    /// Boundary of a Z-error chain: star syndrome bits.
    pub fn star_boundary(&self, chain: &[bool]) -> Vec<bool> {
        debug_assert_eq!(chain.len(), self.n_data());
        let mut syn = vec![false; self.n_checks()];
        for (q, &on) in chain.iter().enumerate() {
            if on {
                for s in self.stars_of(q) {
                    syn[s] = !syn[s];
                }
            }
        }
        syn
    }

    /// Representative of the first logical X: X on every vertical edge of
    /// row 0 (a loop winding horizontally on the dual lattice).
    pub fn logical_x1(&self) -> Vec<usize> {
        (0..self.d).map(|j| self.v(0, j as isize)).collect()
    }

    /// Representative of the first logical Z: Z on every vertical edge of
    /// column 0 (a loop winding vertically on the primal lattice).
    pub fn logical_z1(&self) -> Vec<usize> {
        (0..self.d).map(|i| self.v(i as isize, 0)).collect()
    }

    /// Representative of the second logical X: X on every horizontal edge of
    /// column 0 (a loop winding vertically on the dual lattice).
    pub fn logical_x2(&self) -> Vec<usize> {
        (0..self.d).map(|i| self.h(i as isize, 0)).collect()
    }

    /// Representative of the second logical Z: Z on every horizontal edge of
    /// row 0 (a loop winding horizontally on the primal lattice).
    pub fn logical_z2(&self) -> Vec<usize> {
        (0..self.d).map(|j| self.h(0, j as isize)).collect()
    }

    fn overlap_parity(chain: &[bool], logical: &[usize]) -> bool {
        logical.iter().fold(false, |acc, &q| acc ^ chain[q])
    }

    /// Homology class of a closed X chain: `(anticommutes with Z1,
    /// anticommutes with Z2)`.  Panics if the chain has nonempty boundary.
    pub fn homology_x(&self, chain: &[bool]) -> (bool, bool) {
        assert!(
            self.plaquette_boundary(chain).iter().all(|&b| !b),
            "homology of an open X chain is undefined"
        );
        (
            Self::overlap_parity(chain, &self.logical_z1()),
            Self::overlap_parity(chain, &self.logical_z2()),
        )
    }

    /// Homology class of a closed Z chain: `(anticommutes with X1,
    /// anticommutes with X2)`.  Panics if the chain has nonempty boundary.
    pub fn homology_z(&self, chain: &[bool]) -> (bool, bool) {
        assert!(
            self.star_boundary(chain).iter().all(|&b| !b),
            "homology of an open Z chain is undefined"
        );
        (
            Self::overlap_parity(chain, &self.logical_x1()),
            Self::overlap_parity(chain, &self.logical_x2()),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn chain_from(lat: &ToricLattice, qs: &[usize]) -> Vec<bool> {
        let mut c = vec![false; lat.n_data()];
        for &q in qs {
            c[q] = !c[q];
        }
        c
    }

    #[test]
    fn counting() {
        for d in 2..=7 {
            let lat = ToricLattice::new(d);
            assert_eq!(lat.n_data(), 2 * d * d);
            assert_eq!(lat.n_checks(), d * d);
            let ids: HashSet<usize> = (0..d as isize)
                .flat_map(|i| {
                    (0..d as isize).flat_map(move |j| [(i, j, true), (i, j, false)])
                })
                .map(|(i, j, horiz)| {
                    if horiz {
                        lat.h(i, j)
                    } else {
                        lat.v(i, j)
                    }
                })
                .collect();
            assert_eq!(ids.len(), lat.n_data(), "edge ids must be distinct");
        }
    }

    #[test]
    fn wrapping() {
        let lat = ToricLattice::new(4);
        assert_eq!(lat.h(0, 4), lat.h(0, 0));
        assert_eq!(lat.h(-1, 0), lat.h(3, 0));
        assert_eq!(lat.v(4, -1), lat.v(0, 3));
    }

    #[test]
    fn each_edge_in_two_plaquettes_and_two_stars() {
        let lat = ToricLattice::new(5);
        let mut plaq_count = vec![0usize; lat.n_data()];
        let mut star_count = vec![0usize; lat.n_data()];
        for i in 0..5isize {
            for j in 0..5isize {
                for q in lat.plaquette_support(i, j) {
                    plaq_count[q] += 1;
                }
                for q in lat.star_support(i, j) {
                    star_count[q] += 1;
                }
            }
        }
        assert!(plaq_count.iter().all(|&c| c == 2));
        assert!(star_count.iter().all(|&c| c == 2));
    }

    #[test]
    fn membership_helpers_match_supports() {
        let lat = ToricLattice::new(4);
        for q in 0..lat.n_data() {
            for p in lat.plaquettes_of(q) {
                let (i, j) = lat.check_coords(p);
                assert!(lat
                    .plaquette_support(i as isize, j as isize)
                    .contains(&q));
            }
            for s in lat.stars_of(q) {
                let (i, j) = lat.check_coords(s);
                assert!(lat.star_support(i as isize, j as isize).contains(&q));
            }
        }
    }

    #[test]
    fn stabilizers_commute() {
        // Every star and plaquette overlap on an even number of edges.
        for d in 2..=6 {
            let lat = ToricLattice::new(d);
            for s in 0..lat.n_checks() {
                let (si, sj) = lat.check_coords(s);
                let star: HashSet<usize> = lat
                    .star_support(si as isize, sj as isize)
                    .into_iter()
                    .collect();
                for p in 0..lat.n_checks() {
                    let (pi, pj) = lat.check_coords(p);
                    let overlap = lat
                        .plaquette_support(pi as isize, pj as isize)
                        .iter()
                        .filter(|q| star.contains(q))
                        .count();
                    assert_eq!(overlap % 2, 0, "star {s} vs plaquette {p}");
                }
            }
        }
    }

    #[test]
    fn single_x_error_flips_exactly_two_plaquettes() {
        let lat = ToricLattice::new(5);
        for q in 0..lat.n_data() {
            let syn = lat.plaquette_boundary(&chain_from(&lat, &[q]));
            let flips: Vec<usize> = (0..lat.n_checks()).filter(|&c| syn[c]).collect();
            assert_eq!(flips.len(), 2);
            let mut expect = lat.plaquettes_of(q).to_vec();
            expect.sort_unstable();
            assert_eq!(flips, expect);
        }
    }

    #[test]
    fn logicals_commute_with_stabilizers_and_pair_correctly() {
        for d in 2..=6 {
            let lat = ToricLattice::new(d);
            let x1 = chain_from(&lat, &lat.logical_x1());
            let x2 = chain_from(&lat, &lat.logical_x2());
            let z1 = chain_from(&lat, &lat.logical_z1());
            let z2 = chain_from(&lat, &lat.logical_z2());
            // Logical X chains are closed w.r.t. plaquettes, Z w.r.t. stars.
            assert!(lat.plaquette_boundary(&x1).iter().all(|&b| !b));
            assert!(lat.plaquette_boundary(&x2).iter().all(|&b| !b));
            assert!(lat.star_boundary(&z1).iter().all(|&b| !b));
            assert!(lat.star_boundary(&z2).iter().all(|&b| !b));
            // Symplectic pairing: X_k anticommutes with Z_k only.
            assert_eq!(lat.homology_x(&x1), (true, false));
            assert_eq!(lat.homology_x(&x2), (false, true));
            assert_eq!(lat.homology_z(&z1), (true, false));
            assert_eq!(lat.homology_z(&z2), (false, true));
            assert_eq!(lat.logical_x1().len(), d);
        }
    }

    #[test]
    fn stabilizer_chains_are_homologically_trivial() {
        let lat = ToricLattice::new(4);
        // A star operator is a closed X chain in the trivial class.
        for s in 0..lat.n_checks() {
            let (i, j) = lat.check_coords(s);
            let chain = chain_from(&lat, &lat.star_support(i as isize, j as isize));
            assert_eq!(lat.homology_x(&chain), (false, false));
        }
        // A plaquette operator is a closed Z chain in the trivial class.
        for p in 0..lat.n_checks() {
            let (i, j) = lat.check_coords(p);
            let chain = chain_from(&lat, &lat.plaquette_support(i as isize, j as isize));
            assert_eq!(lat.homology_z(&chain), (false, false));
        }
    }

    #[test]
    fn homology_is_additive_under_stabilizer_multiplication() {
        let lat = ToricLattice::new(5);
        // X1 times a few stars stays in class (1, 0).
        let mut chain = chain_from(&lat, &lat.logical_x1());
        for s in [0usize, 7, 12] {
            let (i, j) = lat.check_coords(s);
            for q in lat.star_support(i as isize, j as isize) {
                chain[q] = !chain[q];
            }
        }
        assert_eq!(lat.homology_x(&chain), (true, false));
    }

    #[test]
    #[should_panic(expected = "open X chain")]
    fn homology_rejects_open_chains() {
        let lat = ToricLattice::new(3);
        let chain = chain_from(&lat, &[lat.h(0, 0)]);
        lat.homology_x(&chain);
    }
}
