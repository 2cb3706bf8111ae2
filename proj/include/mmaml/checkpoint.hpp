#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmaml/config.hpp"
#include "mmaml/io.hpp"
#include "mmaml/meta.hpp"

namespace mmaml {

// Self-describing binary checkpoint: magic, version, model kind, config
// snapshot, iteration, then per member the named parameter tensors followed
// by the Adam state. All scalars little-endian, payloads 64-bit floats.
// Round-trip is bitwise stable.
constexpr char kCheckpointMagic[8] = {'M', 'M', 'A', 'M', 'L', 'C', 'K', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    ModelKind kind = ModelKind::MMAML;
    TrainingConfig config;
    std::uint64_t iteration = 0;
    Model model;
};

namespace detail {

struct Writer {
    std::string buf;
    void raw(const void* p, std::size_t n) { buf.append(static_cast<const char*>(p), n); }
    void u32(std::uint32_t v) { raw(&v, 4); }
    void u64(std::uint64_t v) { raw(&v, 8); }
    void i64(std::int64_t v) { raw(&v, 8); }
    void f64(double v) { raw(&v, 8); }
    void str(const std::string& s) {
        u64(s.size());
        raw(s.data(), s.size());
    }
    void tensor(const Tensor& t) {
        u32(static_cast<std::uint32_t>(t.ndim()));
        for (std::size_t d : t.shape) u64(d);
        raw(t.data.data(), t.data.size() * sizeof(double));
    }
};

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;
    void raw(void* p, std::size_t n) {
        if (pos + n > buf.size()) throw Error("checkpoint: truncated file");
        std::memcpy(p, buf.data() + pos, n);
        pos += n;
    }
    std::uint32_t u32() { std::uint32_t v; raw(&v, 4); return v; }
    std::uint64_t u64() { std::uint64_t v; raw(&v, 8); return v; }
    std::int64_t i64() { std::int64_t v; raw(&v, 8); return v; }
    std::string str() {
        std::uint64_t n = u64();
        if (pos + n > buf.size()) throw Error("checkpoint: truncated string");
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
    Tensor tensor() {
        std::uint32_t nd = u32();
        Shape shape(nd);
        for (auto& d : shape) d = u64();
        Tensor t(shape);
        raw(t.data.data(), t.data.size() * sizeof(double));
        return t;
    }
};

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    detail::Writer w;
    w.raw(kCheckpointMagic, 8);
    w.u32(kCheckpointVersion);
    w.str(model_kind_name(ckpt.kind));
    w.str(modulation_op_name(ckpt.model.op));
    w.str(config_to_json(ckpt.config).dump());
    w.u64(ckpt.iteration);
    w.u64(ckpt.model.members.size());
    for (const Learner& member : ckpt.model.members) {
        auto& m = const_cast<Learner&>(member);
        std::vector<std::pair<std::string, Tensor*>> tensors;
        for_each_tensor(m, [&](const std::string& n, Tensor& t) { tensors.emplace_back(n, &t); });
        w.u64(tensors.size());
        for (auto& [name, t] : tensors) {
            w.str(name);
            w.tensor(*t);
        }
        w.i64(m.adam.step_count());
        auto& mom1 = m.adam.first_moments();
        auto& mom2 = m.adam.second_moments();
        w.u64(mom1.size());
        for (const Tensor& t : mom1) w.tensor(t);
        for (const Tensor& t : mom2) w.tensor(t);
    }
    atomic_write(path, w.buf);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::string buf = read_file(path);
    detail::Reader r{buf};
    char magic[8];
    r.raw(magic, 8);
    if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw Error("checkpoint: bad magic in " + path);
    std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw Error("checkpoint: unsupported version " + std::to_string(version));

    Checkpoint ckpt;
    ckpt.kind = model_kind_from_name(r.str());
    ModulationOp op = modulation_op_from_name(r.str());
    ckpt.config = config_from_json(nlohmann::json::parse(r.str()));
    ckpt.iteration = r.u64();

    std::uint64_t n_members = r.u64();
    RngStream dummy(0);
    ckpt.model = init_model(ckpt.kind, ckpt.config, dummy);
    ckpt.model.op = op;
    if (ckpt.model.members.size() != n_members)
        throw Error("checkpoint: member count mismatch");
    for (Learner& member : ckpt.model.members) {
        std::uint64_t n_tensors = r.u64();
        std::vector<std::pair<std::string, Tensor*>> slots;
        for_each_tensor(member, [&](const std::string& n, Tensor& t) { slots.emplace_back(n, &t); });
        if (slots.size() != n_tensors) throw Error("checkpoint: tensor count mismatch");
        for (auto& [name, slot] : slots) {
            std::string stored = r.str();
            if (stored != name) throw Error("checkpoint: expected tensor " + name + ", found " + stored);
            Tensor t = r.tensor();
            if (t.shape != slot->shape) throw Error("checkpoint: shape mismatch for " + name);
            *slot = std::move(t);
        }
        std::int64_t steps = r.i64();
        std::uint64_t n_moments = r.u64();
        std::vector<Tensor> m1(n_moments), m2(n_moments);
        for (auto& t : m1) t = r.tensor();
        for (auto& t : m2) t = r.tensor();
        member.adam = AdamOptimizer(ckpt.config.meta_lr);
        member.adam.restore(std::move(m1), std::move(m2), steps);
    }
    if (r.pos != buf.size()) throw Error("checkpoint: trailing bytes");
    return ckpt;
}

}  // namespace mmaml
