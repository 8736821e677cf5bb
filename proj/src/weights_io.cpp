// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#include "rvsam/weights_io.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>
#include <type_traits>

namespace rvsam {
namespace {

static_assert(std::endian::native == std::endian::little, "the .rvsw codec assumes a little-endian host");

constexpr std::uint8_t kMagic[4] = {'R', 'V', 'S', 'W'};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    std::size_t done = 0;
    while (done < bytes.size()) {
        const std::size_t chunk = std::min<std::size_t>(bytes.size() - done, std::numeric_limits<uInt>::max());
        crc = crc32(crc, bytes.data() + done, static_cast<uInt>(chunk));
        done += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

class Writer {
public:
    template <typename U>
    void put(U v) {
        static_assert(std::is_trivially_copyable_v<U>);
        const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
        out.insert(out.end(), p, p + sizeof(U));
    }
    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        out.insert(out.end(), p, p + n);
    }

    std::vector<std::uint8_t> out;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    template <typename U>
    U get(const char* what) {
        need(sizeof(U), what);
        U v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
        pos_ += sizeof(U);
        return v;
    }
    const std::uint8_t* take(std::size_t n, const char* what) {
        need(n, what);
        const std::uint8_t* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }
    std::size_t pos() const { return pos_; }

private:
    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) {
            throw WeightsFormatError(WeightsFault::truncated, std::string("file ends inside ") + what);
        }
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

template <typename T>
void encode_tensor(Writer& w, const Tensor<T>& t) {
    if (t.rank() > std::numeric_limits<std::uint8_t>::max()) {
        throw WeightsFormatError(WeightsFault::bad_record, "rank too large");
    }
    w.put<std::uint8_t>(std::is_same_v<T, float> ? 0 : 1);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) {
        if (d > std::numeric_limits<std::uint32_t>::max()) {
            throw WeightsFormatError(WeightsFault::bad_record, "dimension exceeds u32");
        }
        w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    }
    w.bytes(t.values().data(), t.size() * sizeof(T));
}

template <typename T>
Tensor<T> decode_payload(Reader& r, Shape shape) {
    const std::size_t n = shape_numel(shape);
    if (n > std::numeric_limits<std::size_t>::max() / sizeof(T)) {
        throw WeightsFormatError(WeightsFault::bad_record, "payload size overflow");
    }
    const std::uint8_t* p = r.take(n * sizeof(T), "tensor payload");
    std::vector<T> values(n);
    std::memcpy(values.data(), p, n * sizeof(T));
    return Tensor<T>(std::move(shape), std::move(values));
}

}  // namespace

const char* fault_name(WeightsFault f) {
    switch (f) {
        case WeightsFault::bad_magic:
            return "bad magic";
        case WeightsFault::bad_version:
            return "unsupported version";
        case WeightsFault::bad_crc:
            return "CRC mismatch";
        case WeightsFault::truncated:
            return "truncated";
        case WeightsFault::duplicate_name:
            return "duplicate name";
        case WeightsFault::bad_record:
            return "bad record";
    }
    return "unknown";
}

const Tensor<float>& WeightFile::f32(const std::string& name) const {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw ShapeError("missing tensor '" + name + "'");
    const auto* t = std::get_if<Tensor<float>>(&it->second);
    if (!t) throw ShapeError("tensor '" + name + "' is not f32");
    return *t;
}

std::vector<std::uint8_t> encode_weights(const WeightFile& file) {
    if (file.tensors.size() > std::numeric_limits<std::uint32_t>::max()) {
        throw WeightsFormatError(WeightsFault::bad_record, "too many tensors");
    }
    Writer w;
    w.bytes(kMagic, 4);
    w.put<std::uint32_t>(kWeightsVersion);
    w.put<std::uint32_t>(file.flags);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(file.tensors.size()));
    for (const auto& [name, tensor] : file.tensors) {
        if (name.empty() || name.size() > std::numeric_limits<std::uint16_t>::max()) {
            throw WeightsFormatError(WeightsFault::bad_record, "name length out of range for '" + name + "'");
        }
        w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
        w.bytes(name.data(), name.size());
        std::visit([&](const auto& t) { encode_tensor(w, t); }, tensor);
    }
    w.put<std::uint32_t>(crc32_of(w.out));
    return std::move(w.out);
}

WeightFile decode_weights(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw WeightsFormatError(WeightsFault::bad_magic, "not an .rvsw file");
    }
    if (bytes.size() < 20) throw WeightsFormatError(WeightsFault::truncated, "file ends inside the header");
    Reader r(bytes.first(bytes.size() - 4));
    r.take(4, "magic");
    const auto version = r.get<std::uint32_t>("header");
    if (version != kWeightsVersion) {
        throw WeightsFormatError(WeightsFault::bad_version, "version " + std::to_string(version));
    }
    WeightFile file;
    file.flags = r.get<std::uint32_t>("header");
    const auto count = r.get<std::uint32_t>("header");
    std::set<std::string> seen;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = r.get<std::uint16_t>("record name length");
        const auto* p = r.take(len, "record name");
        std::string name(reinterpret_cast<const char*>(p), len);
        if (!seen.insert(name).second) throw WeightsFormatError(WeightsFault::duplicate_name, "'" + name + "'");
        const auto dtype = r.get<std::uint8_t>("record dtype");
        const auto rank = r.get<std::uint8_t>("record rank");
        Shape shape(rank);
        std::size_t numel = 1;
        for (auto& d : shape) {
            d = r.get<std::uint32_t>("record dims");
            if (d != 0 && numel > std::numeric_limits<std::size_t>::max() / d) {
                throw WeightsFormatError(WeightsFault::bad_record, "element count overflow in '" + name + "'");
            }
            numel *= d;
        }
        if (dtype == 0) {
            file.tensors.emplace(std::move(name), decode_payload<float>(r, std::move(shape)));
        } else if (dtype == 1) {
            file.tensors.emplace(std::move(name), decode_payload<double>(r, std::move(shape)));
        } else {
            throw WeightsFormatError(WeightsFault::bad_record, "unknown dtype " + std::to_string(dtype));
        }
    }
    if (r.pos() != bytes.size() - 4) {
        throw WeightsFormatError(WeightsFault::bad_record, "trailing bytes after the last record");
    }
    std::uint32_t stored = 0;
    std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
    if (crc32_of(bytes.first(bytes.size() - 4)) != stored) {
        throw WeightsFormatError(WeightsFault::bad_crc, "checksum does not match contents");
    }
    return file;
}

void write_weights(const std::filesystem::path& path, const WeightFile& file) {
    const auto bytes = encode_weights(file);
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw DataError("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

WeightFile read_weights(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_weights(bytes);
}

}  // namespace rvsam
