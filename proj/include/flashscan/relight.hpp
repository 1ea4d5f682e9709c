#pragma once

#include "flashscan/optimizer.hpp"

namespace flashscan {

// Renders for SH-basis relighting. Basis image j shades surface points with
// c * max(Y_j(n), 0) and the flash off; any relit environment is then the
// coefficient-weighted sum of these images, which is what the solver inverts.
// The training-time SoftPlus ambient is deliberately not used here: relighting
// needs shading linear in the coefficients.
struct ShBasisRenders {
    std::array<DImage, 9> basis;
    DImage flash_only;
    int width = 0, height = 0;
};

ShBasisRenders render_sh_basis(const FitSession& session, const Camera& camera, int spp = 1, int workers = 1);

// Direct render under clamped-basis ambient coefficients (9 per channel),
// evaluated per pixel rather than by summing basis images.
DImage render_clamped_ambient(const FitSession& session, const Camera& camera,
                             const std::array<std::array<double, 9>, 3>& coeffs, int spp = 1);

struct ShSolve {
    std::array<std::array<double, 9>, 3> weights{};  // per channel
    double residual_rms = 0.0;
    bool rank_deficient = false;
};

// Least squares over masked pixels; rank-deficient systems fall back to the
// minimum-norm solution and set the flag.
ShSolve solve_sh_weights(const ShBasisRenders& basis, const DImage& target, const std::vector<uint8_t>& mask);

// Weighted sum of basis renders.
DImage combine_basis(const ShBasisRenders& basis, const std::array<std::array<double, 9>, 3>& weights);

// R = tgt / max(src, floor); out = R * performance, clamped to nonnegative.
DImage ratio_relight(const DImage& src_render, const DImage& tgt_render, const DImage& performance_frame,
                     double floor = 1e-3);

// Symmetric eigen-decomposition by cyclic Jacobi rotations, used for the
// pseudo-inverse in the SH solve. Exposed for tests.
void jacobi_eigen_sym9(const std::array<std::array<double, 9>, 9>& a, std::array<double, 9>& eigenvalues,
                       std::array<std::array<double, 9>, 9>& eigenvectors);

}  // namespace flashscan
