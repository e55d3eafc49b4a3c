#![allow(dead_code)]

use legendre_ito::expansion::MatchingTerm;

/// One printed term: sign, index pairs forced equal, free positions (1-based).
pub type PrintedTerm = (i32, &'static [(usize, usize)], &'static [usize]);

pub const TERMS_K1: &[PrintedTerm] = &[(1, &[], &[1])];

pub const TERMS_K2: &[PrintedTerm] = &[(1, &[], &[1, 2]), (-1, &[(1, 2)], &[])];

pub const TERMS_K3: &[PrintedTerm] = &[
    (1, &[], &[1, 2, 3]),
    (-1, &[(1, 2)], &[3]),
    (-1, &[(2, 3)], &[1]),
    (-1, &[(1, 3)], &[2]),
];

pub const TERMS_K4: &[PrintedTerm] = &[
    (1, &[], &[1, 2, 3, 4]),
    (-1, &[(1, 2)], &[3, 4]),
    (-1, &[(1, 3)], &[2, 4]),
    (-1, &[(1, 4)], &[2, 3]),
    (-1, &[(2, 3)], &[1, 4]),
    (-1, &[(2, 4)], &[1, 3]),
    (-1, &[(3, 4)], &[1, 2]),
    (1, &[(1, 2), (3, 4)], &[]),
    (1, &[(1, 3), (2, 4)], &[]),
    (1, &[(1, 4), (2, 3)], &[]),
];

pub const TERMS_K5: &[PrintedTerm] = &[
    (1, &[], &[1, 2, 3, 4, 5]),
    (-1, &[(1, 2)], &[3, 4, 5]),
    (-1, &[(1, 3)], &[2, 4, 5]),
    (-1, &[(1, 4)], &[2, 3, 5]),
    (-1, &[(1, 5)], &[2, 3, 4]),
    (-1, &[(2, 3)], &[1, 4, 5]),
    (-1, &[(2, 4)], &[1, 3, 5]),
    (-1, &[(2, 5)], &[1, 3, 4]),
    (-1, &[(3, 4)], &[1, 2, 5]),
    (-1, &[(3, 5)], &[1, 2, 4]),
    (-1, &[(4, 5)], &[1, 2, 3]),
    (1, &[(1, 2), (3, 4)], &[5]),
    (1, &[(1, 2), (3, 5)], &[4]),
    (1, &[(1, 2), (4, 5)], &[3]),
    (1, &[(1, 3), (2, 4)], &[5]),
    (1, &[(1, 3), (2, 5)], &[4]),
    (1, &[(1, 3), (4, 5)], &[2]),
    (1, &[(1, 4), (2, 3)], &[5]),
    (1, &[(1, 4), (2, 5)], &[3]),
    (1, &[(1, 4), (3, 5)], &[2]),
    (1, &[(1, 5), (2, 3)], &[4]),
    (1, &[(1, 5), (2, 4)], &[3]),
    (1, &[(1, 5), (3, 4)], &[2]),
    (1, &[(2, 3), (4, 5)], &[1]),
    (1, &[(2, 4), (3, 5)], &[1]),
    (1, &[(2, 5), (3, 4)], &[1]),
];

pub fn printed_terms(k: usize) -> &'static [PrintedTerm] {
    match k {
        1 => TERMS_K1,
        2 => TERMS_K2,
        3 => TERMS_K3,
        4 => TERMS_K4,
        5 => TERMS_K5,
        _ => panic!("no printed expansion for k={k}"),
    }
}

/// Canonical (sign, 0-based pairs, 0-based free) triple, sorted.
pub type TermKey = (i32, Vec<(usize, usize)>, Vec<usize>);

/// Printed terms that survive the indicators `1{i_a = i_b != 0}` for `labels`.
pub fn surviving_printed(labels: &[u32]) -> Vec<TermKey> {
    let mut out: Vec<TermKey> = printed_terms(labels.len())
        .iter()
        .filter(|(_, pairs, _)| {
            pairs
                .iter()
                .all(|&(a, b)| labels[a - 1] == labels[b - 1] && labels[a - 1] != 0)
        })
        .map(|(sign, pairs, free)| {
            let mut pairs: Vec<_> = pairs.iter().map(|&(a, b)| (a - 1, b - 1)).collect();
            pairs.sort_unstable();
            let mut free: Vec<_> = free.iter().map(|f| f - 1).collect();
            free.sort_unstable();
            (*sign, pairs, free)
        })
        .collect();
    out.sort();
    out
}

pub fn generated_keys(terms: &[MatchingTerm]) -> Vec<TermKey> {
    let mut out: Vec<TermKey> = terms
        .iter()
        .map(|m| {
            let mut pairs = m.pairs.clone();
            pairs.sort_unstable();
            let mut free = m.free.clone();
            free.sort_unstable();
            (m.sign(), pairs, free)
        })
        .collect();
    out.sort();
    out
}

/// Every label vector in `{0..=k}^k`.
pub fn all_patterns(k: usize) -> Vec<Vec<u32>> {
    let base = k as u32 + 1;
    (0..base.pow(k as u32))
        .map(|mut n| {
            let mut v = vec![0u32; k];
            for slot in v.iter_mut() {
                *slot = n % base;
                n /= base;
            }
            v
        })
        .collect()
}

/// Labels realizing a set partition given as 1-based classes; singletons get fresh labels.
pub fn labels_from_groups(k: usize, groups: &[&[usize]]) -> Vec<u32> {
    let mut labels = vec![0u32; k];
    for (g, class) in groups.iter().enumerate() {
        for &pos in class.iter() {
            labels[pos - 1] = g as u32 + 1;
        }
    }
    let mut next = groups.len() as u32 + 1;
    for l in labels.iter_mut() {
        if *l == 0 {
            *l = next;
            next += 1;
        }
    }
    labels
}

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for m in 2..=n {
                let p2 = ((2 * m - 1) as f64 * x * p1 - (m - 1) as f64 * p0) / m as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Legendre polynomial by the three-term recurrence.
pub fn legendre(n: usize, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return 1.0;
    }
    for m in 2..=n {
        let p2 = ((2 * m - 1) as f64 * x * p1 - (m - 1) as f64 * p0) / m as f64;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Orthonormal basis on `[0, len]`.
pub fn phi(j: usize, s: f64, len: f64) -> f64 {
    ((2 * j + 1) as f64 / len).sqrt() * legendre(j, 2.0 * s / len - 1.0)
}

/// `C_j` by nested quadrature: `∫_0^len ψ_k φ_{j_k} ∫_0^{t_k} ... ∫_0^{t_2} ψ_1 φ_{j_1}`.
pub fn quadrature_coefficient(j: &[usize], q: &[u32], len: f64, nodes: usize) -> f64 {
    let (x, w) = gauss_legendre(nodes);
    fn level(l: usize, upper: f64, j: &[usize], q: &[u32], len: f64, x: &[f64], w: &[f64]) -> f64 {
        // integrates over t_l in [0, upper]
        let half = upper / 2.0;
        let mut total = 0.0;
        for (xi, wi) in x.iter().zip(w) {
            let s = half * (xi + 1.0);
            let mut f = s.powi(q[l] as i32) * phi(j[l], s, len);
            if l > 0 {
                f *= level(l - 1, s, j, q, len, x, w);
            }
            total += wi * half * f;
        }
        total
    }
    level(j.len() - 1, len, j, q, len, &x, &w)
}
