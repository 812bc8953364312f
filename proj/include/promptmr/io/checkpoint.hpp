// Copyright (c) 2026 promptmr authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "promptmr/core/error.hpp"
#include "promptmr/encoders/adam.hpp"

namespace promptmr {

/// Serialized model: a JSON metadata block (stage tag, configs, training
/// progress) plus named weight tensors as little-endian float32 payloads.
/// Optimizer moments ride along under "opt.m." / "opt.v." name prefixes so
/// interrupted runs can resume.
struct Checkpoint {
    nlohmann::ordered_json meta;
    ParamStore params;
    AdamState opt;
    bool has_opt = false;
};

namespace ckpt_detail {

constexpr char kMagic[6] = {'P', 'M', 'C', 'K', '1', '\0'};

inline void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
inline void write_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
inline std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
inline std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

inline void write_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    const std::uint8_t ndim = static_cast<std::uint8_t>(t.shape.size());
    os.write(reinterpret_cast<const char*>(&ndim), 1);
    for (std::size_t d : t.shape) write_u64(os, d);
    std::vector<float> payload(t.size());
    for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<float>(t.data[i]);
    os.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size() * 4));
}

inline std::pair<std::string, Tensor> read_tensor(std::istream& is) {
    const std::uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    std::uint8_t ndim;
    is.read(reinterpret_cast<char*>(&ndim), 1);
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) d = read_u64(is);
    Tensor t = Tensor::zeros(shape);
    std::vector<float> payload(t.size());
    is.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size() * 4));
    for (std::size_t i = 0; i < payload.size(); ++i) t.data[i] = payload[i];
    return {std::move(name), std::move(t)};
}

} // namespace ckpt_detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw data_error("checkpoint: cannot open for writing: " + path.string());
    f.write(ckpt_detail::kMagic, 6);
    ckpt_detail::write_u32(f, 1); // format version
    nlohmann::ordered_json meta = ck.meta;
    if (ck.has_opt) meta["adam_step"] = ck.opt.step;
    const std::string js = meta.dump();
    ckpt_detail::write_u64(f, js.size());
    f.write(js.data(), static_cast<std::streamsize>(js.size()));
    std::uint32_t count = static_cast<std::uint32_t>(ck.params.order.size());
    if (ck.has_opt) count += static_cast<std::uint32_t>(2 * ck.opt.m.order.size());
    ckpt_detail::write_u32(f, count);
    for (const std::string& name : ck.params.order) ckpt_detail::write_tensor(f, name, ck.params.at(name));
    if (ck.has_opt) {
        for (const std::string& name : ck.opt.m.order) ckpt_detail::write_tensor(f, "opt.m." + name, ck.opt.m.at(name));
        for (const std::string& name : ck.opt.v.order) ckpt_detail::write_tensor(f, "opt.v." + name, ck.opt.v.at(name));
    }
    if (!f) throw data_error("checkpoint: write failure: " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw data_error("checkpoint: cannot open: " + path.string());
    char magic[6];
    f.read(magic, 6);
    if (!f || std::memcmp(magic, ckpt_detail::kMagic, 6) != 0)
        throw data_error("checkpoint: bad magic: " + path.string());
    const std::uint32_t version = ckpt_detail::read_u32(f);
    if (version != 1) throw data_error("checkpoint: unsupported format version");
    const std::uint64_t js_len = ckpt_detail::read_u64(f);
    std::string js(js_len, '\0');
    f.read(js.data(), static_cast<std::streamsize>(js_len));
    Checkpoint ck;
    try {
        ck.meta = nlohmann::ordered_json::parse(js);
    } catch (const nlohmann::json::exception& e) {
        throw data_error(std::string("checkpoint: corrupt metadata block: ") + e.what());
    }
    const std::uint32_t count = ckpt_detail::read_u32(f);
    for (std::uint32_t i = 0; i < count; ++i) {
        auto [name, t] = ckpt_detail::read_tensor(f);
        if (!f) throw data_error("checkpoint: truncated tensor table: " + path.string());
        if (name.rfind("opt.m.", 0) == 0) {
            ck.opt.m.add(name.substr(6), t.shape) = t;
            ck.has_opt = true;
        } else if (name.rfind("opt.v.", 0) == 0) {
            ck.opt.v.add(name.substr(6), t.shape) = t;
        } else {
            ck.params.add(name, t.shape) = t;
        }
    }
    if (ck.has_opt && ck.meta.contains("adam_step")) ck.opt.step = ck.meta["adam_step"].get<long>();
    return ck;
}

} // namespace promptmr
