//! Fixed-length atom descriptors for the graph drug branches.

use super::smiles::Atom;

/// Element classes of the one-hot block; anything else lands in the last slot.
pub const ELEMENT_CLASSES: [&str; 10] = ["B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"];
pub const MAX_DEGREE: usize = 5;
pub const MAX_IMPLICIT_H: usize = 4;

/// 11 element + 6 degree + 5 hydrogen slots, then charge and aromaticity.
pub const FEATURE_DIM: usize = ELEMENT_CLASSES.len() + 1 + (MAX_DEGREE + 1) + (MAX_IMPLICIT_H + 1) + 2;

const DEGREE_OFFSET: usize = ELEMENT_CLASSES.len() + 1;
const HYDROGEN_OFFSET: usize = DEGREE_OFFSET + MAX_DEGREE + 1;
const CHARGE_SLOT: usize = HYDROGEN_OFFSET + MAX_IMPLICIT_H + 1;
const AROMATIC_SLOT: usize = CHARGE_SLOT + 1;

pub fn atom_features(atom: &Atom) -> [f64; FEATURE_DIM] {
    let mut f = [0.0; FEATURE_DIM];
    let element = ELEMENT_CLASSES
        .iter()
        .position(|e| *e == atom.element)
        .unwrap_or(ELEMENT_CLASSES.len());
    f[element] = 1.0;
    f[DEGREE_OFFSET + (atom.degree as usize).min(MAX_DEGREE)] = 1.0;
    f[HYDROGEN_OFFSET + (atom.implicit_h as usize).min(MAX_IMPLICIT_H)] = 1.0;
    f[CHARGE_SLOT] = f64::from(atom.charge.clamp(-2, 2));
    f[AROMATIC_SLOT] = if atom.aromatic { 1.0 } else { 0.0 };
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mol::parse_smiles;

    fn row(smiles: &str, atom: usize) -> Vec<f64> {
        let g = parse_smiles(smiles).unwrap();
        g.atom_features.data()[atom * FEATURE_DIM..(atom + 1) * FEATURE_DIM].to_vec()
    }

    fn decode(f: &[f64]) -> (usize, usize, usize, f64, f64) {
        let one = |range: std::ops::Range<usize>| range.clone().find(|&i| f[i] == 1.0).unwrap() - range.start;
        (
            one(0..DEGREE_OFFSET),
            one(DEGREE_OFFSET..HYDROGEN_OFFSET),
            one(HYDROGEN_OFFSET..CHARGE_SLOT),
            f[CHARGE_SLOT],
            f[AROMATIC_SLOT],
        )
    }

    #[test]
    fn dimension_is_24() {
        assert_eq!(FEATURE_DIM, 24);
    }

    #[test]
    fn ethanol_first_carbon() {
        assert_eq!(decode(&row("CCO", 0)), (1, 1, 3, 0.0, 0.0));
    }

    #[test]
    fn aromatic_carbon() {
        assert_eq!(decode(&row("c1ccccc1", 2)), (1, 2, 1, 0.0, 1.0));
    }

    #[test]
    fn carbonyl_oxygen() {
        assert_eq!(decode(&row("CC(=O)O", 2)), (3, 1, 0, 0.0, 0.0));
    }

    #[test]
    fn other_element_and_clipped_charge() {
        let f = row("[Fe+3]", 0);
        assert_eq!(decode(&f), (10, 0, 0, 2.0, 0.0));
        let f = row("C[N-]C", 1);
        assert_eq!(decode(&f).3, -1.0);
    }

    #[test]
    fn degree_and_hydrogen_slots_saturate() {
        let g = parse_smiles("[SH6]").unwrap();
        let f = g.atom_features.data();
        assert_eq!(decode(f).2, MAX_IMPLICIT_H);
        let g = parse_smiles("FS(F)(F)(F)(F)(F)F").unwrap();
        let f = &g.atom_features.data()[FEATURE_DIM..2 * FEATURE_DIM];
        assert_eq!(decode(f).1, MAX_DEGREE);
    }
}
