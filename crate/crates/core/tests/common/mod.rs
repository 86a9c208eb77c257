#![allow(dead_code)]

use std::fmt::Write as _;

use mltle::data::DtaRecord;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const ELEMENTS: [&str; 8] = ["C", "C", "C", "N", "O", "S", "Cl", "F"];

/// A connected SMILES built from a main chain, side branches and ring
/// closures between main-chain atoms at least two apart. Returns the string,
/// its atom count and its ring-closure count.
pub fn random_smiles<R: Rng>(rng: &mut R) -> (String, usize, usize) {
    let chain = rng.gen_range(1..12);
    let mut closures: Vec<(usize, usize)> = Vec::new();
    if chain >= 3 {
        for _ in 0..rng.gen_range(0..4) {
            let i = rng.gen_range(0..chain - 2);
            let j = rng.gen_range(i + 2..chain);
            if !closures.contains(&(i, j)) {
                closures.push((i, j));
            }
        }
    }
    let mut s = String::new();
    let mut atoms = 0;
    for pos in 0..chain {
        s.push_str(ELEMENTS[rng.gen_range(0..ELEMENTS.len())]);
        atoms += 1;
        for (d, &(i, j)) in closures.iter().enumerate() {
            if i == pos || j == pos {
                write!(s, "{}", d + 1).unwrap();
            }
        }
        if pos + 1 < chain && rng.gen_bool(0.25) {
            let len = rng.gen_range(1..3);
            s.push('(');
            for _ in 0..len {
                s.push_str(ELEMENTS[rng.gen_range(0..ELEMENTS.len())]);
            }
            s.push(')');
            atoms += len;
        }
    }
    (s, atoms, closures.len())
}

pub fn random_protein<R: Rng>(rng: &mut R, len: usize) -> String {
    const AA: &[u8] = b"ACDEFGHIKLMNPQRSTVWY";
    std::iter::once('M')
        .chain((1..len).map(|_| AA[rng.gen_range(0..AA.len())] as char))
        .collect()
}

pub const RAW_HEADER: &str =
    "Ligand SMILES\tBindingDB Target Chain Sequence\tKd (nM)\tKi (nM)\tIC50 (nM)\tEC50 (nM)\tpH";

/// Raw table with repeated pairs, range markers, rows without constants and
/// a few unparseable SMILES.
pub fn synthetic_raw_table(rows: usize, seed: u64) -> String {
    let mut r = rng(seed);
    let drugs: Vec<String> = (0..rows / 4 + 5).map(|_| random_smiles(&mut r).0).collect();
    let proteins: Vec<String> = (0..rows / 20 + 3).map(|_| random_protein(&mut r, 30)).collect();
    let mut out = String::from(RAW_HEADER);
    out.push('\n');
    for _ in 0..rows {
        let smiles = if r.gen_bool(0.02) { "C1CC".to_string() } else { drugs[r.gen_range(0..drugs.len())].clone() };
        let protein = &proteins[r.gen_range(0..proteins.len())];
        let mut cells = [String::new(), String::new(), String::new(), String::new()];
        if !r.gen_bool(0.05) {
            let k = r.gen_range(0..4);
            cells[k] = format!("{:.3}", 10f64.powf(r.gen_range(-1.0..5.0)));
            if r.gen_bool(0.05) {
                cells[k] = format!(">{}", cells[k]);
            }
            if r.gen_bool(0.3) {
                cells[(k + 1) % 4] = format!("{:.3}", 10f64.powf(r.gen_range(-1.0..5.0)));
            }
        }
        let ph = if r.gen_bool(0.4) { format!("{:.1}", r.gen_range(5.5..8.5)) } else { String::new() };
        writeln!(out, "{smiles}\t{protein}\t{}\t{ph}", cells.join("\t")).unwrap();
    }
    out
}

/// Records with every label present; the p-scale constants follow a
/// shared latent signal of the drug so all heads are learnable.
pub fn fully_labelled_records(n: usize, seed: u64) -> Vec<DtaRecord> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let (smiles, atoms, _) = random_smiles(&mut r);
            let protein = random_protein(&mut r, 12);
            let base = 5.0 + atoms as f64 * 0.2;
            let nm = |p: f64| 10f64.powf(9.0 - p);
            let mut rec = DtaRecord::new(&smiles, &protein);
            rec.kd_nm = Some(nm(base));
            rec.ki_nm = Some(nm(base + 0.3));
            rec.ic50_nm = Some(nm(base - 0.2));
            rec.ec50_nm = Some(nm(base + 0.1));
            rec.ph = Some(6.0 + r.gen_range(0.0..2.0));
            rec.qed = Some(r.gen_range(0.1..0.9));
            rec.active = mltle::data::binarize_active(&rec);
            rec
        })
        .collect()
}

/// Two correlated regression tasks (Kd and Ki) driven by a latent score
/// that depends on drug composition and protein identity.
pub struct CorrelatedTasks {
    pub train: Vec<DtaRecord>,
    pub validation: Vec<DtaRecord>,
}

pub fn correlated_tasks(n_train: usize, n_val: usize, target_missing: f64, seed: u64) -> CorrelatedTasks {
    let mut r = rng(seed);
    let proteins: Vec<(String, f64)> = (0..6)
        .map(|_| (random_protein(&mut r, 16), r.gen_range(-1.0..1.0)))
        .collect();
    let make = |missing: f64, r: &mut ChaCha8Rng| {
        let (smiles, _, _) = random_smiles(r);
        let hetero = smiles.matches(['N', 'O']).count() as f64;
        let halo = smiles.matches(['F', 'l']).count() as f64;
        let (protein, shift) = &proteins[r.gen_range(0..proteins.len())];
        let latent = 6.0 + 0.5 * hetero - 0.4 * halo + shift;
        let nm = |p: f64| 10f64.powf(9.0 - p);
        let mut rec = DtaRecord::new(&smiles, protein);
        rec.ki_nm = Some(nm(latent + 0.2 + r.gen_range(-0.1..0.1)));
        if !r.gen_bool(missing) {
            rec.kd_nm = Some(nm(latent + r.gen_range(-0.1..0.1)));
        }
        rec.active = mltle::data::binarize_active(&rec);
        rec
    };
    let train = (0..n_train).map(|_| make(target_missing, &mut r)).collect();
    let validation = (0..n_val).map(|_| make(0.0, &mut r)).collect();
    CorrelatedTasks { train, validation }
}
