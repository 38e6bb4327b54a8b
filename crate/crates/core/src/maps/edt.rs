//! Exact Euclidean feature transform on a regular lattice.
//!
//! Two separable passes: a per-column nearest-site scan, then a per-row lower
//! envelope of parabolas (Felzenszwalb & Huttenlocher). Each cell receives the
//! index of its nearest site, so both the distance and the site position are
//! available in O(1) afterwards.

/// Marker for "no site anywhere".
pub const NO_SITE: u32 = u32::MAX;

/// For every cell returns the row-major index of the nearest cell with `is_site == true`.
///
/// Returns `None` if there are no sites at all.
pub fn nearest_site_transform(is_site: &[bool], n_cols: usize, n_rows: usize) -> Option<Vec<u32>> {
    assert_eq!(is_site.len(), n_cols * n_rows);
    if !is_site.iter().any(|&s| s) {
        return None;
    }

    // Pass 1: nearest site row within each column.
    let mut col_site = vec![NO_SITE; n_cols * n_rows];
    for col in 0..n_cols {
        let mut last = NO_SITE;
        for row in 0..n_rows {
            if is_site[row * n_cols + col] {
                last = row as u32;
            }
            col_site[row * n_cols + col] = last;
        }
        let mut next = NO_SITE;
        for row in (0..n_rows).rev() {
            let i = row * n_cols + col;
            if is_site[i] {
                next = row as u32;
            }
            let prev = col_site[i];
            col_site[i] = match (prev, next) {
                (NO_SITE, n) => n,
                (p, NO_SITE) => p,
                (p, n) => {
                    if row as u32 - p <= n - row as u32 {
                        p
                    } else {
                        n
                    }
                }
            };
        }
    }

    // Pass 2: lower envelope of parabolas along each row.
    let mut out = vec![NO_SITE; n_cols * n_rows];
    let mut v = vec![0usize; n_cols];
    let mut z = vec![0f64; n_cols + 1];
    let mut f = vec![0f64; n_cols];
    for row in 0..n_rows {
        let base = row * n_cols;
        let mut k: isize = -1;
        for q in 0..n_cols {
            let s_row = col_site[base + q];
            if s_row == NO_SITE {
                continue;
            }
            let dy = s_row as f64 - row as f64;
            f[q] = dy * dy;
            let qf = q as f64;
            loop {
                if k < 0 {
                    k = 0;
                    v[0] = q;
                    z[0] = f64::NEG_INFINITY;
                    z[1] = f64::INFINITY;
                    break;
                }
                let p = v[k as usize];
                let pf = p as f64;
                let s = ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * qf - 2.0 * pf);
                if s <= z[k as usize] {
                    k -= 1;
                    continue;
                }
                k += 1;
                v[k as usize] = q;
                z[k as usize] = s;
                z[k as usize + 1] = f64::INFINITY;
                break;
            }
        }
        if k < 0 {
            continue;
        }
        let mut j = 0usize;
        for q in 0..n_cols {
            while z[j + 1] < q as f64 {
                j += 1;
            }
            let site_col = v[j];
            let site_row = col_site[base + site_col] as usize;
            out[base + q] = (site_row * n_cols + site_col) as u32;
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_d2(is_site: &[bool], n_cols: usize, cell: usize) -> u64 {
        let (c, r) = ((cell % n_cols) as i64, (cell / n_cols) as i64);
        is_site
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(i, _)| {
                let (sc, sr) = ((i % n_cols) as i64, (i / n_cols) as i64);
                ((sc - c).pow(2) + (sr - r).pow(2)) as u64
            })
            .min()
            .unwrap()
    }

    fn d2(a: usize, b: usize, n_cols: usize) -> u64 {
        let (ac, ar) = ((a % n_cols) as i64, (a / n_cols) as i64);
        let (bc, br) = ((b % n_cols) as i64, (b / n_cols) as i64);
        ((ac - bc).pow(2) + (ar - br).pow(2)) as u64
    }

    #[test]
    fn no_sites() {
        assert!(nearest_site_transform(&[false; 6], 3, 2).is_none());
    }

    #[test]
    fn single_site_in_corner() {
        let mut s = vec![false; 12];
        s[0] = true;
        let t = nearest_site_transform(&s, 4, 3).unwrap();
        assert!(t.iter().all(|&i| i == 0));
    }

    #[test]
    fn matches_brute_force_on_random_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..40 {
            let (nc, nr) = (rng.random_range(1..40), rng.random_range(1..40));
            let density = [0.002, 0.02, 0.2, 0.7][trial % 4];
            let mut s: Vec<bool> = (0..nc * nr).map(|_| rng.random_bool(density)).collect();
            s[rng.random_range(0..nc * nr)] = true;
            let t = nearest_site_transform(&s, nc, nr).unwrap();
            for cell in 0..nc * nr {
                assert!(s[t[cell] as usize]);
                assert_eq!(d2(cell, t[cell] as usize, nc), brute_d2(&s, nc, cell));
            }
        }
    }
}
