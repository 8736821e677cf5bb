// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "rvsam/error.hpp"
#include "rvsam/tensor.hpp"

namespace rvsam {

/// .rvsw layout, all integers little-endian:
///   "RVSW" | u32 version (1) | u32 flags | u32 count
///   count x { u16 name_len | name | u8 dtype (0 f32, 1 f64) | u8 rank | u32 dims[rank] | payload }
///   u32 CRC-32 of every preceding byte
/// Records are ordered by name.
inline constexpr std::uint32_t kWeightsVersion = 1;
inline constexpr std::uint32_t kFlagDeploy = 1u << 0;

enum class WeightsFault { bad_magic, bad_version, bad_crc, truncated, duplicate_name, bad_record };

const char* fault_name(WeightsFault f);

class WeightsFormatError : public DataError {
public:
    WeightsFormatError(WeightsFault fault, const std::string& what)
        : DataError(std::string("weights: ") + fault_name(fault) + ": " + what), fault_(fault) {}
    WeightsFault fault() const { return fault_; }

private:
    WeightsFault fault_;
};

using AnyTensor = std::variant<Tensor<float>, Tensor<double>>;

struct WeightFile {
    std::uint32_t flags = 0;
    std::map<std::string, AnyTensor> tensors;

    bool deploy() const { return (flags & kFlagDeploy) != 0; }
    // Throws ShapeError when absent or stored as another dtype.
    const Tensor<float>& f32(const std::string& name) const;
};

std::vector<std::uint8_t> encode_weights(const WeightFile& file);
WeightFile decode_weights(std::span<const std::uint8_t> bytes);

// Writes through a temporary file and renames, so readers never see a partial file.
void write_weights(const std::filesystem::path& path, const WeightFile& file);
WeightFile read_weights(const std::filesystem::path& path);

}  // namespace rvsam
