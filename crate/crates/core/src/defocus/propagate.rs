use super::matting::{conjugate_gradient, MattingLaplacian, MATTING_EPS};
use super::{DefocusMap, DefocusParams, Diagnostics, Propagation, SparseBlurEstimate};
use crate::imgcore::{GrayImage, GuidedFilter};
use crate::{Error, Result};

const DIVISION_GUARD: f64 = 1e-8;

/// Fills non-edge pixels from the sparse edge estimates.
///
/// Guided-filter mode filters the sparse values and the 0/1 mask with the
/// same guided filter and divides (`GF(values) / GF(mask)`). Matting mode
/// solves `(L + lambda D) d = lambda D s`, with `D` the edge mask and `L` the
/// matting Laplacian of the guide. Both clamp to `[0, sigma_max]`.
pub fn propagate(sparse: &SparseBlurEstimate, guide: &GrayImage, params: &DefocusParams) -> Result<DefocusMap> {
    propagate_with_diagnostics(sparse, guide, params).map(|(m, _)| m)
}

pub(crate) fn propagate_with_diagnostics(
    sparse: &SparseBlurEstimate,
    guide: &GrayImage,
    params: &DefocusParams,
) -> Result<(DefocusMap, Diagnostics)> {
    let (w, h) = guide.dims();
    if sparse.mask.dims() != (w, h) || sparse.sigma_at_edges.len() != w * h {
        return Err(Error::Shape(format!(
            "sparse estimate {}x{} vs guide {w}x{h}",
            sparse.mask.width(),
            sparse.mask.height()
        )));
    }
    let mut diagnostics = Diagnostics::default();
    if sparse.mask.count() == 0 {
        diagnostics.empty_edge_mask = true;
        diagnostics
            .warnings
            .push("empty edge mask; defocus map set to zero".into());
        let map = DefocusMap::new(w, h, vec![0.0; w * h], params.sigma_max)?;
        return Ok((map, diagnostics));
    }

    let dense = match params.propagation {
        Propagation::GuidedFilter => {
            let values = sparse.values_image();
            let mask = sparse.mask.to_image();
            let filter = GuidedFilter::new(guide, params.gf_radius, params.gf_eps, params.gf_mode)?;
            let num = filter.apply(&values)?;
            let den = filter.apply(&mask)?;
            num.data()
                .iter()
                .zip(den.data())
                .map(|(&n, &d)| n / d.max(DIVISION_GUARD))
                .collect()
        }
        Propagation::MattingLaplacian => {
            let (x, iters) = solve_matting(sparse, guide, params)?;
            diagnostics.cg_iterations = Some(iters);
            x
        }
    };
    let map = DefocusMap::from_sigma_clamped(w, h, dense, params.sigma_max)?;
    Ok((map, diagnostics))
}

fn solve_matting(sparse: &SparseBlurEstimate, guide: &GrayImage, params: &DefocusParams) -> Result<(Vec<f64>, usize)> {
    let laplacian = MattingLaplacian::new(guide, MATTING_EPS);
    let lambda = params.matting_lambda;
    let data_weight: Vec<f64> = sparse
        .mask
        .as_slice()
        .iter()
        .map(|&m| if m { lambda } else { 0.0 })
        .collect();
    let rhs: Vec<f64> = data_weight
        .iter()
        .zip(&sparse.sigma_at_edges)
        .map(|(d, s)| d * s)
        .collect();
    let diagonal: Vec<f64> = laplacian
        .diagonal()
        .iter()
        .zip(&data_weight)
        .map(|(l, d)| l + d)
        .collect();
    let apply = |x: &[f64], out: &mut [f64]| {
        laplacian.apply(x, out);
        for ((o, xi), d) in out.iter_mut().zip(x).zip(&data_weight) {
            *o += d * xi;
        }
    };
    conjugate_gradient(apply, &diagonal, &rhs, params.cg_tol, params.cg_max_iter)
}
