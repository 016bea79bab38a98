#include <cmath>
#include <mutex>

#include <fftw3.h>

#include <Eigen/Dense>

#include "hsc/preprocess.hpp"

// Spectral whitening. Default: per-channel Fourier filter
// rho(f) = |f| exp(-(|f|/f0)^4), f0 = f0_factor * Nyquist, |f| anisotropic in
// cycles/pixel, rescaled to unit peak gain so downstream sparsity penalties
// see data of stable magnitude. ZCA (train-covariance) behind the method
// switch for small images.

namespace hsc {

namespace {

std::mutex g_fftw_mutex; // FFTW planner is not thread-safe

struct FourierFilter {
    int h = 0, w = 0;
    std::vector<float> gain; // [h x (w/2+1)] r2c layout
};

FourierFilter build_filter(int h, int w, float f0_factor) {
    FourierFilter f;
    f.h = h;
    f.w = w;
    const int wc = w / 2 + 1;
    f.gain.resize(static_cast<size_t>(h) * wc);
    const double f0 = 0.5 * f0_factor;
    double peak = 0;
    for (int ky = 0; ky < h; ++ky) {
        const double fy = (ky <= h / 2 ? ky : ky - h) / static_cast<double>(h);
        for (int kx = 0; kx < wc; ++kx) {
            const double fx = kx / static_cast<double>(w);
            const double r = std::sqrt(fx * fx + fy * fy);
            const double g = r * std::exp(-std::pow(r / f0, 4.0));
            f.gain[static_cast<size_t>(ky) * wc + kx] = static_cast<float>(g);
            peak = std::max(peak, g);
        }
    }
    const float inv = peak > 0 ? static_cast<float>(1.0 / peak) : 1.0f;
    for (auto& g : f.gain) g *= inv;
    return f;
}

Tensor4f whiten_fourier(const Tensor4f& images, float f0_factor) {
    const int n = images.dims[0], c = images.dims[1], h = images.dims[2], w = images.dims[3];
    if (h < 2 || w < 2) throw param_error("whiten: images must be at least 2x2");
    const FourierFilter filt = build_filter(h, w, f0_factor);
    const int wc = w / 2 + 1;

    std::vector<float> in(static_cast<size_t>(h) * w);
    std::vector<fftwf_complex> spec(static_cast<size_t>(h) * wc);
    fftwf_plan fwd, bwd;
    {
        std::lock_guard<std::mutex> lock(g_fftw_mutex);
        // FFTW_ESTIMATE keeps plans deterministic run to run.
        fwd = fftwf_plan_dft_r2c_2d(h, w, in.data(), spec.data(), FFTW_ESTIMATE);
        bwd = fftwf_plan_dft_c2r_2d(h, w, spec.data(), in.data(), FFTW_ESTIMATE);
    }
    if (!fwd || !bwd) throw numeric_error("whiten: FFTW plan creation failed");

    Tensor4f out(n, c, h, w);
    const float norm = 1.0f / static_cast<float>(h) / static_cast<float>(w);
    for (int img = 0; img < n; ++img) {
        for (int ch = 0; ch < c; ++ch) {
            const float* src = images.plane(img, ch);
            std::copy(src, src + in.size(), in.begin());
            fftwf_execute(fwd);
            for (size_t i = 0; i < spec.size(); ++i) {
                spec[i][0] *= filt.gain[i];
                spec[i][1] *= filt.gain[i];
            }
            fftwf_execute(bwd);
            float* dst = out.plane(img, ch);
            for (size_t i = 0; i < in.size(); ++i) dst[i] = in[i] * norm;
        }
    }
    {
        std::lock_guard<std::mutex> lock(g_fftw_mutex);
        fftwf_destroy_plan(fwd);
        fftwf_destroy_plan(bwd);
    }
    return out;
}

} // namespace

WhiteningOp fit_whitening(const Dataset& train, const WhitenParams& p) {
    WhiteningOp op;
    op.params = p;
    op.channels = train.images.dims[1];
    op.height = train.images.dims[2];
    op.width = train.images.dims[3];
    if (op.height < 2 || op.width < 2)
        throw param_error("whiten: degenerate image extent " + std::to_string(op.height) + "x" +
                          std::to_string(op.width));
    if (p.method == "fourier") return op; // data-independent filter

    if (p.method != "zca") throw param_error("whiten: unknown method '" + p.method + "'");
    const int d = op.channels * op.height * op.width;
    if (d > 4096)
        throw param_error("whiten: zca limited to flattened dim <= 4096, got " +
                          std::to_string(d));
    const int n = train.images.dims[0];
    if (n < 2) throw param_error("whiten: zca needs at least 2 training images");

    Eigen::MatrixXd X(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) X(i, j) = train.images.data[static_cast<size_t>(i) * d + j];
    const Eigen::RowVectorXd mu = X.colwise().mean();
    X.rowwise() -= mu;
    const Eigen::MatrixXd cov = (X.adjoint() * X) / (n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw numeric_error("whiten: zca eigendecomposition failed");
    const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(0.0);
    const Eigen::MatrixXd W =
        eig.eigenvectors() *
        (lam.array() + static_cast<double>(p.zca_eps)).rsqrt().matrix().asDiagonal() *
        eig.eigenvectors().transpose();
    op.zca.resize(static_cast<size_t>(d) * d);
    for (int r = 0; r < d; ++r)
        for (int cidx = 0; cidx < d; ++cidx)
            op.zca[static_cast<size_t>(r) * d + cidx] = static_cast<float>(W(r, cidx));
    return op;
}

Tensor4f whiten_apply(const WhiteningOp& op, const Tensor4f& images) {
    if (images.dims[1] != op.channels || images.dims[2] != op.height ||
        images.dims[3] != op.width)
        throw shape_error("whiten_apply: images " + images.shape_str() +
                          " do not match the fitted operator");
    if (op.params.method == "fourier") return whiten_fourier(images, op.params.f0_factor);

    const int n = images.dims[0];
    const int d = op.channels * op.height * op.width;
    Tensor4f out(images.dims[0], images.dims[1], images.dims[2], images.dims[3]);
    for (int i = 0; i < n; ++i) {
        const float* src = images.ptr() + static_cast<size_t>(i) * d;
        float* dst = out.ptr() + static_cast<size_t>(i) * d;
        for (int r = 0; r < d; ++r) {
            double acc = 0;
            const float* row = op.zca.data() + static_cast<size_t>(r) * d;
            for (int j = 0; j < d; ++j) acc += static_cast<double>(row[j]) * src[j];
            dst[r] = static_cast<float>(acc);
        }
    }
    return out;
}

} // namespace hsc
