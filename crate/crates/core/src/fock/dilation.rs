//! Dilations realized as exact mode relabellings on geometric grids.
//!
//! On a grid whose cells satisfy `cell_{j+s} = q^s · cell_j` the unitary
//! dilation by `q^s` sends the discrete mode `j` to `j + s` with no weight
//! factor, since the cell volumes absorb the continuum Jacobian. On any other
//! grid only the vacuum has an exact image.

use super::space::FockSpace;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DilationError {
    #[error("grid is not geometric; only the vacuum can be dilated (amplitude {amplitude:e} on state {state})")]
    NotGeometric { state: usize, amplitude: f64 },
    #[error("state {state} has amplitude {amplitude:e} on a mode that leaves the grid")]
    OffGrid { state: usize, amplitude: f64 },
    #[error("grid ratios differ between source and target spaces")]
    RatioMismatch,
}

/// Applies the relabelling `mode j → j + shift` to `v` (an element of `from`),
/// producing an element of `to`. Nonzero amplitude that cannot be mapped is an error.
pub fn relabel(from: &FockSpace, to: &FockSpace, shift: isize, v: &[f64]) -> Result<Vec<f64>, DilationError> {
    assert_eq!(v.len(), from.boson_dim());
    let mut out = vec![0.0; to.boson_dim()];
    let geometric = from.grid.geometric_ratio().zip(to.grid.geometric_ratio());
    if shift != 0 {
        match geometric {
            Some((a, b)) if (a / b - 1.0).abs() < 1e-12 => {}
            Some(_) => return Err(DilationError::RatioMismatch),
            None => {
                for (s, &a) in v.iter().enumerate() {
                    if s == from.vacuum() {
                        out[to.vacuum()] = a;
                    } else if a != 0.0 {
                        return Err(DilationError::NotGeometric { state: s, amplitude: a });
                    }
                }
                return Ok(out);
            }
        }
    }
    let m_to = to.n_modes() as isize;
    let mut occ = vec![0u16; to.n_modes()];
    for (s, &a) in v.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        occ.iter_mut().for_each(|x| *x = 0);
        let mut ok = true;
        for (j, &n) in from.basis[s].iter().enumerate() {
            if n == 0 {
                continue;
            }
            let t = j as isize + shift;
            if t < 0 || t >= m_to {
                ok = false;
                break;
            }
            occ[t as usize] = n;
        }
        match (ok, to.find(&occ)) {
            (true, Some(u)) => out[u] += a,
            _ => return Err(DilationError::OffGrid { state: s, amplitude: a }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::grid::{build_mode_grid, GridScheme, ModeGrid};
    use super::*;

    #[test]
    fn vacuum_maps_on_any_grid() {
        let g = build_mode_grid(0.1, 1.0, 4, GridScheme::Midpoint).unwrap();
        let s = FockSpace::reduced(g);
        let mut v = vec![0.0; s.boson_dim()];
        v[0] = 0.7;
        assert_eq!(relabel(&s, &s, 2, &v).unwrap()[0], 0.7);
        v[1] = 0.1;
        assert!(matches!(relabel(&s, &s, 2, &v), Err(DilationError::NotGeometric { .. })));
    }

    #[test]
    fn geometric_shift_preserves_energy_scaling() {
        let g = ModeGrid::geometric(1.0, 2.0, 6).unwrap();
        let s = FockSpace::reduced(g);
        let mut v = vec![0.0; s.boson_dim()];
        let src = s.find(&[1, 0, 1, 0, 0, 0]).unwrap();
        v[src] = 1.0;
        let w = relabel(&s, &s, 2, &v).unwrap();
        let dst = w.iter().position(|&x| x == 1.0).unwrap();
        assert!((s.energy(dst) - 4.0 * s.energy(src)).abs() < 1e-12);
        assert!(relabel(&s, &s, -1, &v).is_err());
    }
}
