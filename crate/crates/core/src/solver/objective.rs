//! The key-rate objective `f(rho) = D(G(rho) || Z(G(rho)))` and its gradient.

use crate::error::{Error, Result};
use crate::operators::{eigh, trace_xlogx, CMatrix, DensityOperator, HermitianOperator};
use crate::protocol::ProtocolMaps;

fn check_dim(rho: &CMatrix, maps: &ProtocolMaps) -> Result<()> {
    if rho.shape() != (maps.in_dim(), maps.in_dim()) {
        return Err(Error::DimensionMismatch(format!(
            "state is {}x{}, maps act on dimension {}",
            rho.nrows(),
            rho.ncols(),
            maps.in_dim()
        )));
    }
    Ok(())
}

/// `f(rho)` in bits for a raw matrix.
///
/// Because the pinching is a conditional expectation,
/// `Tr(G log Z(G)) = Tr(Z(G) log Z(G))`, so the relative entropy reduces to a
/// difference of two spectral sums and can never hit a support violation.
pub fn objective_value(rho: &CMatrix, maps: &ProtocolMaps) -> f64 {
    let g = maps.apply_g(rho);
    let zg = maps.apply_pinch(&g);
    trace_xlogx(&g, 0.0) - trace_xlogx(&zg, 0.0)
}

/// `G^dagger(log2 G(rho)) - G^dagger(log2 Z(G(rho)))` with spectra clipped at `clip`.
pub fn gradient_matrix(rho: &CMatrix, maps: &ProtocolMaps, clip: f64) -> CMatrix {
    let g = maps.apply_g(rho);
    let zg = maps.apply_pinch(&g);
    let log_g = eigh(&g).map(|l| l.max(clip).log2());
    let log_zg = eigh(&zg).map(|l| l.max(clip).log2());
    let grad = maps.apply_g_adjoint(&(log_g - log_zg));
    crate::operators::hermitian_part(&grad)
}

/// `f(rho)`; for W-augmented maps this is `f'`.
pub fn objective(rho: &DensityOperator, maps: &ProtocolMaps) -> Result<f64> {
    check_dim(rho.matrix(), maps)?;
    Ok(objective_value(rho.matrix(), maps))
}

/// Gradient of `f` at `rho` (clip [`crate::operators::DEFAULT_CLIP`]).
pub fn gradient(rho: &DensityOperator, maps: &ProtocolMaps) -> Result<HermitianOperator> {
    check_dim(rho.matrix(), maps)?;
    Ok(HermitianOperator::from_hermitian_part(&gradient_matrix(
        rho.matrix(),
        maps,
        crate::operators::DEFAULT_CLIP,
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{cr, identity, inner, outer, real_matrix, rel_entropy2, DEFAULT_CLIP};
    use crate::protocol::{build_qubit_maps, build_decoy_maps};

    fn phi_plus() -> CMatrix {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        outer(&real_matrix(4, 1, &[h, 0.0, 0.0, h]))
    }

    #[test]
    fn noiseless_value() {
        for w in [false, true] {
            let v = objective_value(&phi_plus(), &build_qubit_maps(w));
            assert!((v - 0.5).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn spectral_form_matches_relative_entropy() {
        let maps = build_decoy_maps(true);
        let rho = identity(6) * cr(1.0 / 6.0);
        let g = maps.apply_g(&rho);
        let zg = maps.apply_pinch(&g);
        let direct = rel_entropy2(&g, &zg, DEFAULT_CLIP).unwrap();
        assert!((direct - objective_value(&rho, &maps)).abs() < 1e-12);
    }

    #[test]
    fn maximally_mixed_has_no_key() {
        let v = objective_value(&(identity(4) * cr(0.25)), &build_qubit_maps(false));
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn zero_direction_has_zero_derivative() {
        let rho = phi_plus() * cr(0.9) + identity(4) * cr(0.025);
        let g = gradient_matrix(&rho, &build_qubit_maps(false), DEFAULT_CLIP);
        assert_eq!(inner(&g, &CMatrix::zeros(4, 4)), 0.0);
    }
}
