#pragma once

// Named parameter collection + checkpoint IO.
//
// A checkpoint is two files: a UTF-8 manifest listing name/shape/byte-offset
// per parameter, and a raw little-endian float32 blob. Round trips are
// bit-exact. Loading validates against the registered parameters and throws
// IoError on any mismatch or truncation.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mugs/core/tensor.hpp"

namespace mugs {

class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ParamStore {
  public:
    void add(const std::string& name, const Tensor& t) {
        if (index_.count(name)) throw ValueError("ParamStore: duplicate parameter '" + name + "'");
        index_[name] = items_.size();
        items_.emplace_back(name, t);
    }

    Tensor& find(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ValueError("ParamStore: unknown parameter '" + name + "'");
        return items_[it->second].second;
    }

    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
    size_t size() const { return items_.size(); }

    int64_t total_elems() const {
        int64_t n = 0;
        for (const auto& [name, t] : items_) n += t.numel();
        return n;
    }

    void zero_grads() {
        for (auto& [name, t] : items_) t.zero_grad();
    }

  private:
    std::vector<std::pair<std::string, Tensor>> items_;
    std::map<std::string, size_t> index_;
};

namespace detail {

inline void put_f32_le(std::vector<unsigned char>& buf, float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    buf.push_back(static_cast<unsigned char>(u & 0xff));
    buf.push_back(static_cast<unsigned char>((u >> 8) & 0xff));
    buf.push_back(static_cast<unsigned char>((u >> 16) & 0xff));
    buf.push_back(static_cast<unsigned char>((u >> 24) & 0xff));
}

inline float get_f32_le(const unsigned char* p) {
    uint32_t u = static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
                 (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

}  // namespace detail

// Writes <path> (manifest) and <path>.bin (blob).
inline void save_checkpoint(const ParamStore& params, const std::string& path) {
    std::string blob_name = path.substr(path.find_last_of('/') + 1) + ".bin";
    std::ostringstream man;
    man << "mugs-checkpoint v1\n";
    man << "params " << params.size() << "\n";
    std::vector<unsigned char> blob;
    blob.reserve(static_cast<size_t>(params.total_elems()) * 4);
    for (const auto& [name, t] : params.items()) {
        man << "param " << name << " dims " << t.ndim();
        for (int i = 0; i < t.ndim(); ++i) man << " " << t.dim(i);
        man << " offset " << blob.size() << "\n";
        for (int64_t i = 0; i < t.numel(); ++i) detail::put_f32_le(blob, t.data()[i]);
    }
    man << "blob " << blob_name << " " << blob.size() << "\n";

    std::ofstream mf(path, std::ios::binary);
    if (!mf) throw IoError("checkpoint: cannot write " + path);
    mf << man.str();
    if (!mf) throw IoError("checkpoint: write failed for " + path);
    std::string blob_path = path + ".bin";
    std::ofstream bf(blob_path, std::ios::binary);
    if (!bf) throw IoError("checkpoint: cannot write " + blob_path);
    bf.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
    if (!bf) throw IoError("checkpoint: write failed for " + blob_path);
}

// Loads into the registered parameters; names, shapes, and sizes must match.
inline void load_checkpoint(ParamStore& params, const std::string& path) {
    std::ifstream mf(path, std::ios::binary);
    if (!mf) throw IoError("checkpoint: cannot open " + path);
    std::string line;
    if (!std::getline(mf, line) || line != "mugs-checkpoint v1")
        throw IoError("checkpoint: bad header in " + path);
    size_t count = 0;
    {
        if (!std::getline(mf, line)) throw IoError("checkpoint: truncated manifest " + path);
        std::istringstream is(line);
        std::string kw;
        if (!(is >> kw >> count) || kw != "params") throw IoError("checkpoint: bad params line in " + path);
    }
    struct Entry {
        std::string name;
        Shape shape;
        uint64_t offset;
    };
    std::vector<Entry> entries;
    for (size_t i = 0; i < count; ++i) {
        if (!std::getline(mf, line)) throw IoError("checkpoint: truncated manifest " + path);
        std::istringstream is(line);
        std::string kw, name, dimskw, offkw;
        int nd = 0;
        Entry e;
        if (!(is >> kw >> e.name >> dimskw >> nd) || kw != "param" || dimskw != "dims" || nd < 0)
            throw IoError("checkpoint: bad param line in " + path + ": " + line);
        e.shape.resize(static_cast<size_t>(nd));
        for (int dji = 0; dji < nd; ++dji)
            if (!(is >> e.shape[static_cast<size_t>(dji)])) throw IoError("checkpoint: bad dims in " + path);
        if (!(is >> offkw >> e.offset) || offkw != "offset") throw IoError("checkpoint: bad offset in " + path);
        entries.push_back(std::move(e));
    }
    std::string blob_name;
    uint64_t blob_size = 0;
    {
        if (!std::getline(mf, line)) throw IoError("checkpoint: missing blob line in " + path);
        std::istringstream is(line);
        std::string kw;
        if (!(is >> kw >> blob_name >> blob_size) || kw != "blob")
            throw IoError("checkpoint: bad blob line in " + path);
    }
    std::string dir = path.find_last_of('/') == std::string::npos ? "" : path.substr(0, path.find_last_of('/') + 1);
    std::string blob_path = dir + blob_name;
    std::ifstream bf(blob_path, std::ios::binary | std::ios::ate);
    if (!bf) throw IoError("checkpoint: cannot open blob " + blob_path);
    uint64_t actual = static_cast<uint64_t>(bf.tellg());
    if (actual != blob_size)
        throw IoError("checkpoint: blob size " + std::to_string(actual) + " != manifest " +
                      std::to_string(blob_size));
    bf.seekg(0);
    std::vector<unsigned char> blob(static_cast<size_t>(blob_size));
    bf.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
    if (!bf) throw IoError("checkpoint: blob read failed " + blob_path);

    if (entries.size() != params.size())
        throw IoError("checkpoint: has " + std::to_string(entries.size()) + " params, model expects " +
                      std::to_string(params.size()));
    for (const Entry& e : entries) {
        Tensor& t = params.find(e.name);  // throws on unknown name
        if (t.shape() != e.shape)
            throw IoError("checkpoint: shape mismatch for '" + e.name + "': file " + shape_str(e.shape) +
                          " vs model " + shape_str(t.shape()));
        uint64_t bytes = static_cast<uint64_t>(t.numel()) * 4;
        if (e.offset + bytes > blob_size) throw IoError("checkpoint: blob overrun for '" + e.name + "'");
        float* dst = t.mut_data();
        const unsigned char* src = blob.data() + e.offset;
        for (int64_t i = 0; i < t.numel(); ++i) dst[i] = detail::get_f32_le(src + i * 4);
    }
}

}  // namespace mugs
