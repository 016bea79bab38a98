#include "hsc/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "hsc/rng.hpp"

namespace hsc {

namespace {

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
    put_u32(os, static_cast<uint32_t>(v));
    put_u32(os, static_cast<uint32_t>(v >> 32));
}

void put_f32(std::ostream& os, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
}

void put_f32_array(std::ostream& os, const float* p, size_t n) {
    for (size_t i = 0; i < n; ++i) put_f32(os, p[i]);
}

uint32_t get_u32(std::istream& is, const std::string& path, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw format_error(path + ": truncated while reading " + what);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint64_t get_u64(std::istream& is, const std::string& path, const char* what) {
    const uint64_t lo = get_u32(is, path, what);
    const uint64_t hi = get_u32(is, path, what);
    return lo | (hi << 32);
}

float get_f32(std::istream& is, const std::string& path, const char* what) {
    const uint32_t bits = get_u32(is, path, what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

} // namespace

void save_checkpoint(const std::string& path, const NetworkState& state) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw format_error(path + ": cannot open for writing");
    os.write("HSC1", 4);
    put_u32(os, static_cast<uint32_t>(state.dicts.size()));
    for (size_t i = 0; i < state.dicts.size(); ++i) {
        const ConvDict& d = state.dicts[i];
        put_u32(os, static_cast<uint32_t>(d.n_features()));
        put_u32(os, static_cast<uint32_t>(d.in_channels()));
        put_u32(os, static_cast<uint32_t>(d.k_h()));
        put_u32(os, static_cast<uint32_t>(d.k_w()));
        put_u32(os, static_cast<uint32_t>(d.stride));
        put_f32(os, state.lambdas[i]);
    }
    for (const auto& d : state.dicts) put_f32_array(os, d.weights.ptr(), d.weights.size());
    for (const auto& m : state.momenta) put_f32_array(os, m.ptr(), m.size());
    put_u64(os, state.seed);
    put_u64(os, state.epoch);
    if (!os) throw format_error(path + ": write failed");
}

NetworkState load_checkpoint(const std::string& path, int input_h, int input_w) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw format_error(path + ": cannot open");
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "HSC1", 4) != 0)
        throw format_error(path + ": bad magic (expected HSC1)");
    const uint32_t layer_count = get_u32(is, path, "layer count");
    if (layer_count == 0 || layer_count > 64)
        throw format_error(path + ": implausible layer count " + std::to_string(layer_count));

    struct Header {
        uint32_t nf, ic, kh, kw, stride;
        float lambda;
    };
    std::vector<Header> hs(layer_count);
    for (auto& h : hs) {
        h.nf = get_u32(is, path, "layer dims");
        h.ic = get_u32(is, path, "layer dims");
        h.kh = get_u32(is, path, "layer dims");
        h.kw = get_u32(is, path, "layer dims");
        h.stride = get_u32(is, path, "layer stride");
        h.lambda = get_f32(is, path, "layer lambda");
        if (h.nf == 0 || h.ic == 0 || h.kh == 0 || h.kw == 0 || h.stride == 0)
            throw format_error(path + ": zero layer dimension in header");
    }

    NetworkState st;
    for (const auto& h : hs) {
        Tensor4f w(static_cast<int>(h.nf), static_cast<int>(h.ic), static_cast<int>(h.kh),
                   static_cast<int>(h.kw));
        for (auto& x : w.data) x = get_f32(is, path, "weights");
        st.dicts.emplace_back(std::move(w), static_cast<int>(h.stride));
        st.lambdas.push_back(h.lambda);
    }
    for (const auto& h : hs) {
        Tensor4f m(static_cast<int>(h.nf), static_cast<int>(h.ic), static_cast<int>(h.kh),
                   static_cast<int>(h.kw));
        for (auto& x : m.data) x = get_f32(is, path, "momentum");
        st.momenta.push_back(std::move(m));
    }
    st.seed = get_u64(is, path, "seed");
    st.epoch = get_u64(is, path, "epoch");

    if (input_h > 0 && input_w > 0) {
        st.input_h = input_h;
        st.input_w = input_w;
        int h = input_h, w = input_w;
        for (size_t i = 0; i < st.dicts.size(); ++i) {
            st.eta_c.push_back(spectral_step_size(st.dicts[i], h, w,
                                                  split_seed(st.seed, 0xE7A0 + static_cast<int>(i))));
            h = conv_out_extent(h, st.dicts[i].k_h(), st.dicts[i].stride, "height");
            w = conv_out_extent(w, st.dicts[i].k_w(), st.dicts[i].stride, "width");
        }
    }
    return st;
}

} // namespace hsc
