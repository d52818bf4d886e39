#include "durr/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <optional>
#include <vector>

#include "durr/policy.hpp"
#include "durr/restorer.hpp"

namespace durr {

namespace {

constexpr char kMagic[8] = {'D', 'U', 'R', 'R', 'C', 'K', 'P', 'T'};

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw IoError("cannot write checkpoint " + path);
    }

    void raw(const void* p, size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    }
    void u8(std::uint8_t v) { raw(&v, 1); }
    void u32(std::uint32_t v) { raw(&v, 4); }
    void u64(std::uint64_t v) { raw(&v, 8); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    void f32_payload(const std::vector<float>& v) {
        const auto bytes = static_cast<std::uint64_t>(v.size()) * 4;
        u64(bytes);
        raw(v.data(), static_cast<size_t>(bytes));
        const auto crc = static_cast<std::uint32_t>(
            crc32(0, reinterpret_cast<const Bytef*>(v.data()), static_cast<uInt>(bytes)));
        u32(crc);
    }
    bool good() const { return static_cast<bool>(out_); }

private:
    std::ofstream out_;
};

class Reader {
public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw IoError("cannot open checkpoint " + path);
    }

    void raw(void* p, size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (in_.gcount() != static_cast<std::streamsize>(n))
            throw CkptTruncated(path_ + ": truncated checkpoint");
    }
    std::uint8_t u8() {
        std::uint8_t v;
        raw(&v, 1);
        return v;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        raw(&v, 4);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        raw(&v, 8);
        return v;
    }
    std::string str(std::uint32_t max_len = 1u << 20) {
        const std::uint32_t n = u32();
        if (n > max_len) throw CkptIntegrity(path_ + ": implausible string length");
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }
    std::vector<float> f32_payload() {
        const std::uint64_t bytes = u64();
        if (bytes % 4 != 0) throw CkptIntegrity(path_ + ": payload length not a float multiple");
        if (bytes > (1ull << 32)) throw CkptIntegrity(path_ + ": implausible payload length");
        std::vector<float> v(static_cast<size_t>(bytes / 4));
        raw(v.data(), static_cast<size_t>(bytes));
        const std::uint32_t stored = u32();
        const auto computed = static_cast<std::uint32_t>(
            crc32(0, reinterpret_cast<const Bytef*>(v.data()), static_cast<uInt>(bytes)));
        if (stored != computed)
            throw CkptIntegrity(path_ + ": payload checksum mismatch");
        return v;
    }
    const std::string& path() const { return path_; }

private:
    std::ifstream in_;
    std::string path_;
};

void write_named_payloads(Writer& w,
                          const std::vector<std::pair<std::string, std::vector<float>>>& items) {
    w.u32(static_cast<std::uint32_t>(items.size()));
    for (const auto& [name, data] : items) {
        w.str(name);
        w.f32_payload(data);
    }
}

std::vector<std::pair<std::string, std::vector<float>>> read_named_payloads(Reader& r) {
    const std::uint32_t count = r.u32();
    if (count > 100000) throw CkptIntegrity(r.path() + ": implausible record count");
    std::vector<std::pair<std::string, std::vector<float>>> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.str(4096);
        out.emplace_back(std::move(name), r.f32_payload());
    }
    return out;
}

}  // namespace

void checkpoint_save(const Checkpoint& ckpt, const std::string& path) {
    Writer w(path);
    w.raw(kMagic, sizeof kMagic);
    w.u32(kCheckpointVersion);
    w.u8(static_cast<std::uint8_t>(ckpt.kind));
    w.str(ckpt.params.arch);

    w.u32(static_cast<std::uint32_t>(ckpt.metadata.size()));
    for (const auto& [key, value] : ckpt.metadata) {
        w.str(key);
        w.str(value);
    }

    w.u32(static_cast<std::uint32_t>(ckpt.params.count()));
    for (const auto& [name, t] : ckpt.params.entries()) {
        w.str(name);
        w.u32(static_cast<std::uint32_t>(t->rank()));
        for (int i = 0; i < t->rank(); ++i) w.u64(static_cast<std::uint64_t>(t->dim(i)));
        w.f32_payload(t->data);
    }

    const bool has_state = !ckpt.opt_state.empty();
    w.u8(has_state ? 1 : 0);
    if (has_state) {
        w.u8(ckpt.opt_state.method == OptMethod::Adam ? 0 : 1);
        w.u64(static_cast<std::uint64_t>(ckpt.opt_state.step));
        write_named_payloads(w, ckpt.opt_state.m);
        write_named_payloads(w, ckpt.opt_state.v);
    }
    if (!w.good()) throw IoError("write failed for checkpoint " + path);
}

Checkpoint checkpoint_load(const std::string& path, std::optional<UnitKind> expect) {
    Reader r(path);
    char magic[8];
    r.raw(magic, sizeof magic);
    if (std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw CkptBadMagic(path + ": not a DURR checkpoint");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw CkptVersionSkew(path + ": checkpoint version " + std::to_string(version) +
                              ", expected " + std::to_string(kCheckpointVersion));
    const std::uint8_t kind_byte = r.u8();
    if (kind_byte > 1) throw CkptIntegrity(path + ": unknown unit kind");
    const auto kind = static_cast<UnitKind>(kind_byte);
    const std::string arch = r.str(4096);

    if (expect && kind != *expect)
        throw CkptArchMismatch(path + ": checkpoint holds a " +
                               (kind == UnitKind::Restorer ? std::string("restorer")
                                                           : std::string("policy")) +
                               " unit, expected a " +
                               (*expect == UnitKind::Restorer ? std::string("restorer")
                                                              : std::string("policy")));

    // the arch descriptor must parse for the declared kind before anything
    // else is materialized
    if (kind == UnitKind::Restorer)
        (void)RestorerArch::from_string(arch);
    else
        (void)PolicyArch::from_string(arch);

    Checkpoint ckpt;
    ckpt.kind = kind;

    const std::uint32_t meta_count = r.u32();
    if (meta_count > 10000) throw CkptIntegrity(path + ": implausible metadata count");
    for (std::uint32_t i = 0; i < meta_count; ++i) {
        std::string key = r.str(4096);
        ckpt.metadata[key] = r.str(1u << 20);
    }

    const std::uint32_t n_params = r.u32();
    if (n_params > 100000) throw CkptIntegrity(path + ": implausible parameter count");
    struct Staged {
        std::string name;
        Shape shape;
        std::vector<float> data;
    };
    std::vector<Staged> staged;
    staged.reserve(n_params);
    for (std::uint32_t i = 0; i < n_params; ++i) {
        Staged s;
        s.name = r.str(4096);
        const std::uint32_t rank = r.u32();
        if (rank > 8) throw CkptIntegrity(path + ": implausible tensor rank");
        for (std::uint32_t j = 0; j < rank; ++j)
            s.shape.push_back(static_cast<int64_t>(r.u64()));
        s.data = r.f32_payload();
        if (static_cast<int64_t>(s.data.size()) != numel(s.shape))
            throw CkptIntegrity(path + ": tensor " + s.name + " payload does not match shape");
        staged.push_back(std::move(s));
    }

    if (r.u8() == 1) {
        ckpt.opt_state.method = r.u8() == 0 ? OptMethod::Adam : OptMethod::RmsProp;
        ckpt.opt_state.step = static_cast<int64_t>(r.u64());
        ckpt.opt_state.m = read_named_payloads(r);
        ckpt.opt_state.v = read_named_payloads(r);
    }

    // Rebuild against the declared architecture and require an exact match of
    // names and shapes; only then adopt the payloads.
    NetworkParams<float> expected =
        kind == UnitKind::Restorer
            ? build_restoration_unit<float>(RestorerArch::from_string(arch), 0)
            : build_policy_unit<float>(PolicyArch::from_string(arch), 0);
    if (expected.count() != staged.size())
        throw CkptArchMismatch(path + ": parameter count does not match arch '" + arch + "'");
    ckpt.params.arch = arch;
    for (size_t i = 0; i < staged.size(); ++i) {
        const auto& [exp_name, exp_tensor] = expected.entries()[i];
        if (exp_name != staged[i].name || exp_tensor->shape != staged[i].shape)
            throw CkptArchMismatch(path + ": tensor " + staged[i].name +
                                   " does not match arch '" + arch + "'");
        ckpt.params.add(staged[i].name,
                        make_tensor<float>(staged[i].shape, std::move(staged[i].data), true));
    }
    return ckpt;
}

}  // namespace durr
