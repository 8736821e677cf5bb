// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace rvsam {

// Base for every error raised by the library. The CLI maps the concrete
// subclasses onto its exit-code contract.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Incompatible tensor dims, channel counts or weight layouts.
class ShapeError : public Error {
public:
    using Error::Error;
};

// NaN/Inf produced, divergence, or a division that cannot be guarded.
class NumericError : public Error {
public:
    using Error::Error;
};

// Invalid configuration values or unknown keys.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Unreadable or malformed input files (images, index files, prompt files).
class DataError : public Error {
public:
    using Error::Error;
};

// Allocation failure while running a workload.
class ResourceError : public Error {
public:
    using Error::Error;
};

}  // namespace rvsam
