//! Zhang-Suen iterative morphological thinning.

use super::mask::Mask;

/// Thin a mask to a one-pixel-wide skeleton.
pub fn skeletonize(mask: &Mask) -> Mask {
    let (w, h) = (mask.width(), mask.height());
    let mut cur = mask.clone();
    let mut to_clear: alloc::vec::Vec<(usize, usize)> = alloc::vec::Vec::new();
    loop {
        let mut changed = false;
        for pass in 0..2 {
            to_clear.clear();
            for y in 1..h.saturating_sub(1) {
                for x in 1..w.saturating_sub(1) {
                    if !cur.get(x, y) {
                        continue;
                    }
                    // Neighbors p2..p9 clockwise from north.
                    let p = [
                        cur.get(x, y - 1),
                        cur.get(x + 1, y - 1),
                        cur.get(x + 1, y),
                        cur.get(x + 1, y + 1),
                        cur.get(x, y + 1),
                        cur.get(x - 1, y + 1),
                        cur.get(x - 1, y),
                        cur.get(x - 1, y - 1),
                    ];
                    let b: usize = p.iter().map(|v| *v as usize).sum();
                    if !(2..=6).contains(&b) {
                        continue;
                    }
                    let mut transitions = 0;
                    for i in 0..8 {
                        if !p[i] && p[(i + 1) % 8] {
                            transitions += 1;
                        }
                    }
                    if transitions != 1 {
                        continue;
                    }
                    let (c1, c2) = if pass == 0 {
                        // p2*p4*p6 == 0 and p4*p6*p8 == 0
                        (p[0] && p[2] && p[4], p[2] && p[4] && p[6])
                    } else {
                        // p2*p4*p8 == 0 and p2*p6*p8 == 0
                        (p[0] && p[2] && p[6], p[0] && p[4] && p[6])
                    };
                    if c1 || c2 {
                        continue;
                    }
                    to_clear.push((x, y));
                }
            }
            if !to_clear.is_empty() {
                changed = true;
                for &(x, y) in &to_clear {
                    cur.set(x, y, false);
                }
            }
        }
        if !changed {
            break;
        }
    }
    cur
}
