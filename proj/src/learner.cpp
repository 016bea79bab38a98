#include "hsc/learner.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "hsc/checkpoint.hpp"
#include "hsc/parallel.hpp"

namespace hsc {

template <class T>
Tensor4<T> dict_gradient(const ConvDictionary<T>& d, const Tensor4<T>& gamma_prev,
                         const Tensor4<T>& gamma) {
    if (gamma.dims[0] != gamma_prev.dims[0])
        throw shape_error("dict_gradient: batch axis mismatch");
    const auto sh = make_conv_shape(d, gamma_prev.dims[1], gamma_prev.dims[2],
                                    gamma_prev.dims[3]);
    if (sh.out_h != gamma.dims[2] || sh.out_w != gamma.dims[3] || sh.n_feat != gamma.dims[1])
        throw shape_error("dict_gradient: code shape " + gamma.shape_str() +
                          " inconsistent with signal " + gamma_prev.shape_str());
    const int n = gamma.dims[0];

    // d/dW of 1/2||gamma_prev - D^T gamma||^2 = correlate(code, recon - gamma_prev)
    Tensor4<T> recon(gamma_prev.dims[0], gamma_prev.dims[1], gamma_prev.dims[2],
                     gamma_prev.dims[3]);
    decode_into(d, gamma, recon);
    Tensor4<T> resid(recon.dims[0], recon.dims[1], recon.dims[2], recon.dims[3]);
    if constexpr (std::is_same_v<T, float>)
        kern::sub(recon.ptr(), gamma_prev.ptr(), resid.ptr(), resid.size());
    else
        kern::sub_ref(recon.ptr(), gamma_prev.ptr(), resid.ptr(), resid.size());

    Tensor4<T> grad(d.weights.dims[0], d.weights.dims[1], d.weights.dims[2], d.weights.dims[3]);
    for (int img = 0; img < n; ++img)
        kern::grad_image_t(sh, gamma.plane(img, 0), resid.plane(img, 0), grad.ptr());
    const T inv_n = T(1) / static_cast<T>(n);
    if constexpr (std::is_same_v<T, float>)
        kern::scale(inv_n, grad.ptr(), grad.size());
    else
        kern::scale_ref(inv_n, grad.ptr(), grad.size());
    return grad;
}

void normalize_atoms(ConvDict& d, Rng& dead_atom_rng) {
    const size_t asz = d.atom_size();
    for (int f = 0; f < d.n_features(); ++f) {
        float* atom = d.weights.ptr() + static_cast<size_t>(f) * asz;
        double nrm = std::sqrt(kern::sum_sq(atom, asz));
        if (nrm == 0.0) {
            for (size_t i = 0; i < asz; ++i) atom[i] = static_cast<float>(dead_atom_rng.normal());
            nrm = std::sqrt(kern::sum_sq(atom, asz));
        }
        if (std::fabs(nrm - 1.0) <= 1e-6) continue; // already unit; keep bits stable
        kern::scale(static_cast<float>(1.0 / nrm), atom, asz);
    }
}

StepStatus sgd_momentum_step(NetworkState& state, int layer, const Tensor4f& gradient,
                             real eta_learn, Rng& dead_atom_rng, real momentum) {
    ConvDict& d = state.dicts[layer];
    if (!gradient.same_shape(d.weights))
        throw shape_error("sgd_momentum_step: gradient shape " + gradient.shape_str() +
                          " != weights " + d.weights.shape_str());
    if (!all_finite(gradient)) return StepStatus::skipped_nonfinite;

    Tensor4f& v = state.momenta[layer];
    kern::scale(momentum, v.ptr(), v.size());
    kern::axpy(1.0f, gradient.ptr(), v.ptr(), v.size());
    kern::axpy(-eta_learn, v.ptr(), d.weights.ptr(), d.weights.size());
    normalize_atoms(d, dead_atom_rng);

    // The spectrum moved with the weights; refresh the inference step size.
    int in_h = state.input_h, in_w = state.input_w;
    for (int j = 0; j < layer; ++j) {
        in_h = conv_out_extent(in_h, state.dicts[j].k_h(), state.dicts[j].stride, "height");
        in_w = conv_out_extent(in_w, state.dicts[j].k_w(), state.dicts[j].stride, "width");
    }
    state.eta_c[layer] =
        spectral_step_size(d, in_h, in_w, split_seed(state.seed, 0xE7A0 + layer));
    return StepStatus::ok;
}

NetworkState init_state(const NetworkSpec& spec, int image_channels, int input_h, int input_w,
                        uint64_t seed) {
    NetworkSpec checked = spec;
    checked.validate(image_channels);

    NetworkState st;
    st.seed = seed;
    st.input_h = input_h;
    st.input_w = input_w;
    Rng dead_rng(split_seed(seed, 0xDEADu));
    int in_h = input_h, in_w = input_w;
    for (size_t i = 0; i < checked.layers.size(); ++i) {
        const LayerSpec& l = checked.layers[i];
        Tensor4f w(l.n_features, l.in_channels, l.k_h, l.k_w);
        Rng rng(split_seed(seed, i));
        for (auto& x : w.data) x = static_cast<float>(rng.normal());
        ConvDict d(std::move(w), l.stride);
        normalize_atoms(d, dead_rng);
        // Validates the kernel fits the layer input as a side effect.
        const real eta =
            spectral_step_size(d, in_h, in_w, split_seed(seed, 0xE7A0 + static_cast<int>(i)));
        in_h = conv_out_extent(in_h, l.k_h, l.stride, "height");
        in_w = conv_out_extent(in_w, l.k_w, l.stride, "width");
        st.momenta.emplace_back(l.n_features, l.in_channels, l.k_h, l.k_w);
        st.eta_c.push_back(eta);
        st.lambdas.push_back(l.lambda);
        st.dicts.push_back(std::move(d));
    }
    return st;
}

EvalResult evaluate_cost(const NetworkState& state, const Tensor4f& images,
                         const InferenceConfig& cfg, int batch_size) {
    const int n = images.dims[0];
    if (n == 0) throw param_error("evaluate_cost: empty dataset");
    const int L = state.layer_count();
    EvalResult r;
    r.per_layer.assign(L, CostTerms{});
    double iter_sum = 0;
    int batches = 0;
    for (int start = 0; start < n; start += batch_size) {
        const int bn = std::min(batch_size, n - start);
        Tensor4f batch(bn, images.dims[1], images.dims[2], images.dims[3]);
        std::copy(images.plane(start, 0), images.plane(start + bn, 0), batch.ptr());
        const auto res = infer(state, batch, cfg);
        for (int i = 0; i < L; ++i) {
            const Tensor4f& below = (i == 0) ? batch : res.gammas[i - 1];
            const CostTerms t = lasso_cost(state.dicts[i], below, res.gammas[i],
                                           state.lambdas[i]);
            r.per_layer[i].quadratic += t.quadratic;
            r.per_layer[i].l1 += t.l1;
        }
        iter_sum += res.iterations;
        if (!res.converged) ++r.unconverged_batches;
        ++batches;
    }
    for (auto& t : r.per_layer) {
        t.quadratic /= n;
        t.l1 /= n;
        r.total_cost += t.total();
    }
    r.mean_iterations = iter_sum / batches;
    return r;
}

TrainResult train(const NetworkSpec& spec, const Tensor4f& train_images,
                  const Tensor4f& test_images, const std::string& snapshot_path) {
    if (train_images.dims[0] == 0) throw param_error("train: empty training set");
    if (test_images.dims[0] == 0) throw param_error("train: empty test set");
    NetworkSpec checked = spec;
    checked.validate(train_images.dims[1]);

    TrainResult out;
    out.state = init_state(checked, train_images.dims[1], train_images.dims[2],
                           train_images.dims[3], checked.seed);
    NetworkState& st = out.state;
    const int L = st.layer_count();
    const InferenceConfig icfg{checked.mode, checked.t_stab, checked.max_iters};

    Rng order_rng(split_seed(checked.seed, 0x0DDEu));
    Rng dead_rng(split_seed(checked.seed, 0xDEAD2u));
    std::vector<int> order(train_images.dims[0]);
    std::iota(order.begin(), order.end(), 0);

    NetworkState last_good = st;
    for (int epoch = 1; epoch <= checked.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        order_rng.shuffle(order);
        const int n = train_images.dims[0];
        const int bs = checked.batch_size;
        Tensor4f batch;
        for (int start = 0; start < n; start += bs) {
            const int bn = std::min(bs, n - start);
            batch = Tensor4f(bn, train_images.dims[1], train_images.dims[2],
                             train_images.dims[3]);
            const size_t img_sz = batch.size() / bn;
            for (int j = 0; j < bn; ++j)
                std::copy(train_images.plane(order[start + j], 0),
                          train_images.plane(order[start + j], 0) + img_sz,
                          batch.ptr() + j * img_sz);
            const auto res = infer(st, batch, icfg);
            for (int i = 0; i < L; ++i) {
                const Tensor4f& below = (i == 0) ? batch : res.gammas[i - 1];
                const Tensor4f grad = dict_gradient(st.dicts[i], below, res.gammas[i]);
                const StepStatus status = sgd_momentum_step(
                    st, i, grad, checked.layers[i].eta_learn, dead_rng);
                if (status == StepStatus::skipped_nonfinite)
                    out.log.incidents.push_back("epoch " + std::to_string(epoch) + " batch " +
                                                std::to_string(start / bs) + " layer " +
                                                std::to_string(i + 1) +
                                                ": non-finite gradient, update skipped");
            }
        }

        const EvalResult ev = evaluate_cost(st, test_images, icfg, bs);
        if (!std::isfinite(ev.total_cost)) {
            if (!snapshot_path.empty()) save_checkpoint(snapshot_path, last_good);
            throw numeric_error("train: non-finite test cost at epoch " +
                                std::to_string(epoch) +
                                (snapshot_path.empty() ? ""
                                                       : "; last good state written to " +
                                                             snapshot_path));
        }
        TrainLogEntry e;
        e.epoch = epoch;
        e.per_layer = ev.per_layer;
        e.total_cost = ev.total_cost;
        e.mean_iterations = ev.mean_iterations;
        e.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.log.entries.push_back(std::move(e));
        st.epoch = static_cast<uint64_t>(epoch);
        last_good = st;
    }
    return out;
}

#define HSC_INSTANTIATE_LEARNER(T)                                                            \
    template Tensor4<T> dict_gradient<T>(const ConvDictionary<T>&, const Tensor4<T>&,         \
                                         const Tensor4<T>&);

HSC_INSTANTIATE_LEARNER(float)
HSC_INSTANTIATE_LEARNER(double)

#undef HSC_INSTANTIATE_LEARNER

} // namespace hsc
