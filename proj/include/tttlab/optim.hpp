#pragma once

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "tttlab/common.hpp"
#include "tttlab/tensor.hpp"

namespace tttlab {

struct OptimizerConfig {
    enum class Kind { SgdMomentum, AdamW };
    Kind kind = Kind::SgdMomentum;
    double learning_rate = 5e-3;
    double momentum = 0.9;       // sgd
    double weight_decay = 0.0;
    double beta1 = 0.9;          // adamw
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const {
        if (learning_rate < 0) throw ConfigError("optimizer: learning-rate < 0");
        if (momentum < 0 || momentum >= 1) throw ConfigError("optimizer: momentum outside [0,1)");
        if (weight_decay < 0) throw ConfigError("optimizer: weight-decay < 0");
    }
};

template <typename T>
using GradMap = std::map<std::string, Tensor<T>>;

// Named parameter tensors plus per-parameter optimizer state. Value
// semantics: copying a ParamSet copies optimizer state with it, and the two
// copies never alias. Iteration order is lexicographic by name.
template <typename T>
class ParamSet {
public:
    struct Entry {
        Tensor<T> value;
        Tensor<T> m;  // momentum buffer / first moment
        Tensor<T> v;  // second moment (adamw)
        int64_t step = 0;
    };

    Tensor<T>& add(const std::string& name, Tensor<T> value) {
        auto [it, fresh] = entries_.emplace(name, Entry{std::move(value), {}, {}, 0});
        if (!fresh) throw ConfigError("param '" + name + "' already exists");
        return it->second.value;
    }

    bool contains(const std::string& name) const { return entries_.count(name) != 0; }

    Tensor<T>& tensor(const std::string& name) { return entry(name).value; }
    const Tensor<T>& tensor(const std::string& name) const { return entry(name).value; }

    Entry& entry(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw ConfigError("unknown param '" + name + "'");
        return it->second;
    }
    const Entry& entry(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw ConfigError("unknown param '" + name + "'");
        return it->second;
    }

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }
    size_t size() const { return entries_.size(); }

    std::vector<std::string> names() const {
        std::vector<std::string> r;
        for (const auto& [k, v] : entries_) r.push_back(k);
        return r;
    }

    int64_t scalar_count() const {
        int64_t n = 0;
        for (const auto& [k, e] : entries_) n += e.value.numel();
        return n;
    }

    // Covers values, optimizer state and step counters.
    uint64_t state_hash() const {
        uint64_t h = 1469598103934665603ull;
        for (const auto& [name, e] : entries_) {
            h = fnv1a64(name.data(), name.size(), h);
            h = fnv1a64(e.value.data.data(), e.value.data.size() * sizeof(T), h);
            h = fnv1a64(e.m.data.data(), e.m.data.size() * sizeof(T), h);
            h = fnv1a64(e.v.data.data(), e.v.data.size() * sizeof(T), h);
            h = fnv1a64(&e.step, sizeof(e.step), h);
        }
        return h;
    }

    // Values only (checkpoint identity).
    uint64_t value_hash() const {
        uint64_t h = 1469598103934665603ull;
        for (const auto& [name, e] : entries_) {
            h = fnv1a64(name.data(), name.size(), h);
            h = fnv1a64(e.value.data.data(), e.value.data.size() * sizeof(T), h);
        }
        return h;
    }

private:
    std::map<std::string, Entry> entries_;
};

// ---- optimizer steps ------------------------------------------------------
// Only parameters named in `grads` are touched; everything else (including
// its optimizer state) is left exactly as-is. Weight decay in SGD is coupled
// (added to the gradient); AdamW uses decoupled decay.

template <typename T>
void sgd_momentum_step(ParamSet<T>& params, const GradMap<T>& grads, const OptimizerConfig& cfg) {
    cfg.validate();
    for (const auto& [name, g] : grads) {
        auto& e = params.entry(name);
        if (!e.value.same_shape(g))
            throw ShapeError("sgd step: grad shape mismatch for '" + name + "'");
        if (e.m.data.empty()) e.m = Tensor<T>(e.value.shape);
        const T lr = static_cast<T>(cfg.learning_rate);
        const T mom = static_cast<T>(cfg.momentum);
        const T wd = static_cast<T>(cfg.weight_decay);
        for (size_t i = 0; i < e.value.data.size(); ++i) {
            const T gi = g.data[i] + wd * e.value.data[i];
            e.m.data[i] = mom * e.m.data[i] + gi;
            e.value.data[i] -= lr * e.m.data[i];
        }
        e.step += 1;
        e.value.require_finite(("param '" + name + "' after sgd step").c_str());
    }
}

template <typename T>
void adamw_step(ParamSet<T>& params, const GradMap<T>& grads, const OptimizerConfig& cfg) {
    cfg.validate();
    for (const auto& [name, g] : grads) {
        auto& e = params.entry(name);
        if (!e.value.same_shape(g))
            throw ShapeError("adamw step: grad shape mismatch for '" + name + "'");
        if (e.m.data.empty()) e.m = Tensor<T>(e.value.shape);
        if (e.v.data.empty()) e.v = Tensor<T>(e.value.shape);
        e.step += 1;
        const T lr = static_cast<T>(cfg.learning_rate);
        const T b1 = static_cast<T>(cfg.beta1);
        const T b2 = static_cast<T>(cfg.beta2);
        const T eps = static_cast<T>(cfg.epsilon);
        const T wd = static_cast<T>(cfg.weight_decay);
        const T bc1 = T(1) - std::pow(b1, static_cast<T>(e.step));
        const T bc2 = T(1) - std::pow(b2, static_cast<T>(e.step));
        for (size_t i = 0; i < e.value.data.size(); ++i) {
            const T gi = g.data[i];
            e.m.data[i] = b1 * e.m.data[i] + (T(1) - b1) * gi;
            e.v.data[i] = b2 * e.v.data[i] + (T(1) - b2) * gi * gi;
            const T mhat = e.m.data[i] / bc1;
            const T vhat = e.v.data[i] / bc2;
            e.value.data[i] -= lr * mhat / (std::sqrt(vhat) + eps) + lr * wd * e.value.data[i];
        }
        e.value.require_finite(("param '" + name + "' after adamw step").c_str());
    }
}

template <typename T>
void optimizer_step(ParamSet<T>& params, const GradMap<T>& grads, const OptimizerConfig& cfg) {
    if (cfg.kind == OptimizerConfig::Kind::SgdMomentum)
        sgd_momentum_step(params, grads, cfg);
    else
        adamw_step(params, grads, cfg);
}

// ---- checkpoint container -------------------------------------------------
// Little-endian binary layout: magic "TTTL", format version u32, entry count
// u32, then per entry: name length u32 + UTF-8 name, rank u32, extents u32
// each, raw 32-bit floats. Entries in lexicographic name order. Round-trips
// bit-exactly.

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

namespace detail {
inline void put_u32(std::string& out, uint32_t v) {
    out.append(reinterpret_cast<const char*>(&v), 4);
}
inline uint32_t take_u32(const std::string& in, size_t& off) {
    if (off + 4 > in.size()) throw IoError("checkpoint: truncated (u32)");
    uint32_t v;
    std::memcpy(&v, in.data() + off, 4);
    off += 4;
    return v;
}
}  // namespace detail

inline std::string save_params_bytes(const ParamSet<float>& params) {
    std::string out = "TTTL";
    detail::put_u32(out, 1u);
    detail::put_u32(out, static_cast<uint32_t>(params.size()));
    for (const auto& [name, e] : params) {
        detail::put_u32(out, static_cast<uint32_t>(name.size()));
        out += name;
        detail::put_u32(out, static_cast<uint32_t>(e.value.shape.size()));
        for (int ext : e.value.shape) detail::put_u32(out, static_cast<uint32_t>(ext));
        out.append(reinterpret_cast<const char*>(e.value.data.data()),
                   e.value.data.size() * sizeof(float));
    }
    return out;
}

inline ParamSet<float> load_params_bytes(const std::string& in) {
    size_t off = 0;
    if (in.size() < 4 || in.compare(0, 4, "TTTL") != 0)
        throw IoError("checkpoint: bad magic (expected TTTL)");
    off = 4;
    const uint32_t version = detail::take_u32(in, off);
    if (version != 1) throw IoError("checkpoint: unsupported version " + std::to_string(version));
    const uint32_t count = detail::take_u32(in, off);
    ParamSet<float> params;
    for (uint32_t k = 0; k < count; ++k) {
        const uint32_t name_len = detail::take_u32(in, off);
        if (off + name_len > in.size()) throw IoError("checkpoint: truncated (name)");
        std::string name = in.substr(off, name_len);
        off += name_len;
        const uint32_t rank = detail::take_u32(in, off);
        std::vector<int> shape;
        for (uint32_t r = 0; r < rank; ++r)
            shape.push_back(static_cast<int>(detail::take_u32(in, off)));
        const size_t n = static_cast<size_t>(Tensor<float>::numel_of(shape));
        if (off + n * sizeof(float) > in.size()) throw IoError("checkpoint: truncated (data)");
        Tensor<float> t(std::move(shape));
        std::memcpy(t.data.data(), in.data() + off, n * sizeof(float));
        off += n * sizeof(float);
        params.add(name, std::move(t));
    }
    if (off != in.size()) throw IoError("checkpoint: trailing bytes");
    return params;
}

inline void save_params_file(const ParamSet<float>& params, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    const std::string bytes = save_params_bytes(params);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed for '" + path + "'");
}

inline ParamSet<float> load_params_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return load_params_bytes(bytes);
}

}  // namespace tttlab
