#include "nara/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace nara {

namespace {

constexpr char kMagic[8] = {'N', 'A', 'R', 'A', 'L', 'A', 'B', '\0'};

template <class T>
void put(std::string& out, T v) {
    auto raw = std::bit_cast<std::array<char, sizeof(T)>>(v);
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
    out.append(raw.data(), raw.size());
}

void put_string(std::string& out, const std::string& s) {
    put<std::uint64_t>(out, s.size());
    out += s;
}

struct Reader {
    const std::string& bytes;
    std::size_t pos = 0;

    void need(std::size_t n) {
        if (bytes.size() - pos < n) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos));
    }
    template <class T>
    T get() {
        need(sizeof(T));
        std::array<char, sizeof(T)> raw;
        std::memcpy(raw.data(), bytes.data() + pos, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
        pos += sizeof(T);
        return std::bit_cast<T>(raw);
    }
    std::string get_string() {
        const auto n = get<std::uint64_t>();
        need(n);
        std::string s = bytes.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return &e;
    return nullptr;
}

bool Checkpoint::has_prefix(const std::string& prefix) const {
    return std::any_of(entries.begin(), entries.end(), [&](const auto& e) { return e.name.starts_with(prefix); });
}

std::string Checkpoint::serialize() const {
    std::string out(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, version);
    put<std::uint64_t>(out, seed);
    put_string(out, config);
    put<std::uint64_t>(out, entries.size());
    for (const auto& e : entries) {
        if (shape_numel(e.shape) != e.values.size()) {
            throw CheckpointError("entry " + e.name + ": shape " + shape_str(e.shape) + " does not match " +
                                  std::to_string(e.values.size()) + " values");
        }
        put_string(out, e.name);
        put<std::uint64_t>(out, e.shape.size());
        for (auto d : e.shape) put<std::uint64_t>(out, d);
        for (double v : e.values) put<double>(out, v);
    }
    return out;
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
    if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
        throw CheckpointError("not a checkpoint (bad magic)");
    }
    Reader r{bytes, sizeof kMagic};
    Checkpoint c;
    c.version = r.get<std::uint32_t>();
    if (c.version != kCheckpointVersion) {
        throw CheckpointError("checkpoint format version " + std::to_string(c.version) + " is not supported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
    }
    c.seed = r.get<std::uint64_t>();
    c.config = r.get_string();
    const auto n = r.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < n; ++i) {
        CheckpointEntry e;
        e.name = r.get_string();
        const auto nd = r.get<std::uint64_t>();
        if (nd > 8) throw CheckpointError("entry " + e.name + ": implausible rank " + std::to_string(nd));
        for (std::uint64_t d = 0; d < nd; ++d) e.shape.push_back(r.get<std::uint64_t>());
        const auto numel = shape_numel(e.shape);
        r.need(numel * sizeof(double));
        e.values.resize(numel);
        for (auto& v : e.values) v = r.get<double>();
        c.entries.push_back(std::move(e));
    }
    if (r.pos != bytes.size()) throw CheckpointError("trailing bytes after checkpoint entries");
    return c;
}

void Checkpoint::save(const std::string& path) const {
    const auto bytes = serialize();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot write " + path);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw CheckpointError("write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot read checkpoint " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return deserialize(ss.str());
}

void add_entries(Checkpoint& ckpt, const std::vector<NamedParam>& tensors) {
    for (const auto& p : tensors) {
        const auto d = p.tensor.data();
        ckpt.entries.push_back({p.name, p.tensor.shape(), std::vector<double>(d.begin(), d.end())});
    }
}

void restore_entries(const Checkpoint& ckpt, const std::vector<NamedParam>& tensors) {
    for (const auto& p : tensors) {
        const auto* e = ckpt.find(p.name);
        if (!e) throw CheckpointError("checkpoint has no entry " + p.name);
        if (e->shape != p.tensor.shape()) {
            throw CheckpointError("entry " + p.name + ": checkpoint shape " + shape_str(e->shape) + ", expected " +
                                  shape_str(p.tensor.shape()));
        }
        auto t = p.tensor;
        std::copy(e->values.begin(), e->values.end(), t.data_mut().begin());
    }
}

}  // namespace nara
