// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rvsam/decoder.hpp"

namespace rvsam {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

// One prompt per line: `P x y label` (label 1/fg or 0/bg) or `B x1 y1 x2 y2`.
// Blank lines and `#` comments are skipped.
std::vector<Prompt> parse_prompt_file(const std::string& text);

struct IndexEntry {
    std::string id;
    std::filesystem::path path;  // resolved against the index file's directory
    std::optional<double> score;
};

// `image_id<TAB>path[<TAB>score]` lines.
std::vector<IndexEntry> read_index(const std::filesystem::path& index);

// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace rvsam
