#ifndef EBSR_CHECKPOINT_HPP
#define EBSR_CHECKPOINT_HPP

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <map>

#include "ebsr/network.hpp"

namespace ebsr {

// Checkpoint file: magic "EBSR1\0", u32 format version, length-prefixed
// canonical config text, then a named tensor table and a trailing CRC32 over
// everything before it. Entries are little-endian; dtype is f32 for
// parameters and u32 for optimizer/rng state blobs carried alongside them.
//
// Round-trip contract: save(load(save(m))) is byte-identical; any flipped
// byte fails the checksum.
namespace ckpt {

constexpr char kMagic[6] = {'E', 'B', 'S', 'R', '1', '\0'};
constexpr std::uint32_t kVersion = 1;

enum class Dtype : std::uint8_t { f32 = 0, u32 = 1 };

struct Entry {
    std::string name;
    Dtype dtype = Dtype::f32;
    Shape shape;
    std::vector<std::uint8_t> payload;  // raw little-endian bytes
};

inline void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_i32(std::string& out, std::int32_t v) { put_u32(out, static_cast<std::uint32_t>(v)); }

struct Reader {
    const std::uint8_t* p;
    const std::uint8_t* end;

    void need(std::size_t n) const {
        if (static_cast<std::size_t>(end - p) < n) throw IoError("checkpoint: truncated file");
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
        p += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
        p += 4;
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(p), n);
        p += n;
        return s;
    }
};

inline std::string serialize(const std::string& config_text, const std::vector<Entry>& entries) {
    std::string out(kMagic, sizeof(kMagic));
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(config_text.size()));
    out += config_text;
    put_u32(out, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        put_u16(out, static_cast<std::uint16_t>(e.name.size()));
        out += e.name;
        out.push_back(static_cast<char>(e.dtype));
        put_i32(out, e.shape.n);
        put_i32(out, e.shape.c);
        put_i32(out, e.shape.h);
        put_i32(out, e.shape.w);
        out.append(reinterpret_cast<const char*>(e.payload.data()), e.payload.size());
    }
    const std::uint32_t crc = static_cast<std::uint32_t>(
        crc32(0, reinterpret_cast<const Bytef*>(out.data()), static_cast<uInt>(out.size())));
    put_u32(out, crc);
    return out;
}

inline void parse(const std::string& blob, std::string& config_text, std::vector<Entry>& entries) {
    if (blob.size() < sizeof(kMagic) + 12) throw IoError("checkpoint: file too short");
    if (std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0)
        throw IoError("checkpoint: bad magic (not an EBSR1 checkpoint)");
    const std::uint32_t stored_crc = [&] {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(
                     static_cast<std::uint8_t>(blob[blob.size() - 4 + i]))
                 << (8 * i);
        return v;
    }();
    const std::uint32_t crc = static_cast<std::uint32_t>(crc32(
        0, reinterpret_cast<const Bytef*>(blob.data()), static_cast<uInt>(blob.size() - 4)));
    if (crc != stored_crc) throw ChecksumError("checkpoint: checksum mismatch");

    Reader r{reinterpret_cast<const std::uint8_t*>(blob.data()) + sizeof(kMagic),
             reinterpret_cast<const std::uint8_t*>(blob.data()) + blob.size() - 4};
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw IoError("checkpoint: unsupported version " + std::to_string(version));
    const std::uint32_t cfg_len = r.u32();
    config_text = r.bytes(cfg_len);
    const std::uint32_t count = r.u32();
    entries.clear();
    entries.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Entry e;
        const std::uint16_t name_len = r.u16();
        e.name = r.bytes(name_len);
        r.need(1);
        e.dtype = static_cast<Dtype>(*r.p++);
        e.shape.n = static_cast<std::int32_t>(r.u32());
        e.shape.c = static_cast<std::int32_t>(r.u32());
        e.shape.h = static_cast<std::int32_t>(r.u32());
        e.shape.w = static_cast<std::int32_t>(r.u32());
        const std::size_t bytes = static_cast<std::size_t>(e.shape.numel()) * 4;
        r.need(bytes);
        e.payload.assign(r.p, r.p + bytes);
        r.p += bytes;
        entries.push_back(std::move(e));
    }
}

inline Entry tensor_entry(const std::string& name, const Tensor<float>& t) {
    Entry e;
    e.name = name;
    e.dtype = Dtype::f32;
    e.shape = t.shape();
    e.payload.resize(static_cast<std::size_t>(t.size()) * 4);
    std::memcpy(e.payload.data(), t.data(), e.payload.size());
    return e;
}

inline Entry u32_entry(const std::string& name, const std::vector<std::uint32_t>& words) {
    Entry e;
    e.name = name;
    e.dtype = Dtype::u32;
    e.shape = Shape{1, static_cast<int>(words.size()), 1, 1};
    e.payload.resize(words.size() * 4);
    std::memcpy(e.payload.data(), words.data(), e.payload.size());
    return e;
}

}  // namespace ckpt

// Extra state saved next to the parameters so training can resume exactly.
struct TrainState {
    std::vector<Tensor<float>> adam_m;
    std::vector<Tensor<float>> adam_v;
    std::int64_t step = 0;
    std::array<std::uint64_t, 4> rng_state{};
    bool present = false;
};

inline void save_checkpoint(Model<float>& model, const std::string& path,
                            const TrainState* train = nullptr) {
    std::vector<ckpt::Entry> entries;
    auto params = model.params();
    for (auto* p : params) entries.push_back(ckpt::tensor_entry(p->name, p->value));
    if (train && train->present) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            entries.push_back(ckpt::tensor_entry("opt.m." + params[i]->name, train->adam_m[i]));
            entries.push_back(ckpt::tensor_entry("opt.v." + params[i]->name, train->adam_v[i]));
        }
        std::vector<std::uint32_t> words;
        words.push_back(static_cast<std::uint32_t>(train->step & 0xffffffff));
        words.push_back(static_cast<std::uint32_t>(train->step >> 32));
        for (auto s : train->rng_state) {
            words.push_back(static_cast<std::uint32_t>(s & 0xffffffff));
            words.push_back(static_cast<std::uint32_t>(s >> 32));
        }
        entries.push_back(ckpt::u32_entry("train.state", words));
    }
    const std::string blob = ckpt::serialize(model.config().to_text(), entries);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("checkpoint: cannot write '" + path + "'");
    f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!f) throw IoError("checkpoint: short write to '" + path + "'");
}

inline Model<float> load_checkpoint(const std::string& path, TrainState* train = nullptr) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("checkpoint: cannot read '" + path + "'");
    std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    std::string config_text;
    std::vector<ckpt::Entry> entries;
    ckpt::parse(blob, config_text, entries);

    Model<float> model(ModelConfig::from_text(config_text));
    std::map<std::string, const ckpt::Entry*> by_name;
    for (const auto& e : entries) by_name[e.name] = &e;

    auto params = model.params();
    auto load_into = [&](const std::string& name, Tensor<float>& dst) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw IoError("checkpoint: missing parameter '" + name + "'");
        const ckpt::Entry& e = *it->second;
        if (e.shape != dst.shape())
            throw DimensionError("checkpoint: parameter '" + name + "' has shape " + e.shape.str() +
                                 ", model expects " + dst.shape().str());
        std::memcpy(dst.data(), e.payload.data(), e.payload.size());
    };
    for (auto* p : params) load_into(p->name, p->value);

    if (train) {
        train->present = by_name.count("train.state") > 0;
        if (train->present) {
            train->adam_m.clear();
            train->adam_v.clear();
            for (auto* p : params) {
                Tensor<float> m(p->value.shape()), v(p->value.shape());
                load_into("opt.m." + p->name, m);
                load_into("opt.v." + p->name, v);
                train->adam_m.push_back(std::move(m));
                train->adam_v.push_back(std::move(v));
            }
            const ckpt::Entry& st = *by_name.at("train.state");
            if (st.shape.numel() != 10) throw IoError("checkpoint: bad train.state size");
            std::vector<std::uint32_t> words(10);
            std::memcpy(words.data(), st.payload.data(), st.payload.size());
            train->step = static_cast<std::int64_t>(words[0]) |
                          (static_cast<std::int64_t>(words[1]) << 32);
            for (int i = 0; i < 4; ++i)
                train->rng_state[static_cast<std::size_t>(i)] =
                    static_cast<std::uint64_t>(words[2 + 2 * i]) |
                    (static_cast<std::uint64_t>(words[3 + 2 * i]) << 32);
        }
    }
    return model;
}

}  // namespace ebsr

#endif  // EBSR_CHECKPOINT_HPP
