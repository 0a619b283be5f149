/*
 * Copyright 2026 The DAM Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace dam {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Base class for every error raised by the library.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Malformed text input (pts files, manifests, config files).
class ParseError : public Error
{
public:
    ParseError(const std::string& what, int line)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line)
    {
    }
    int line() const noexcept { return line_; }

private:
    int line_;
};

/// Missing or unreadable files, truncated or corrupt archives.
class IoError : public Error
{
public:
    using Error::Error;
};

/// Mismatched vector/matrix sizes between arguments.
class DimensionError : public Error
{
public:
    using Error::Error;
};

/// Geometric degeneracy (collinear mean shape, empty mask, ...).
class GeometryError : public Error
{
public:
    using Error::Error;
};

/// Training produced a non-finite value.
class DivergenceError : public Error
{
public:
    DivergenceError(const std::string& stage, int epoch, double parameter_norm)
        : Error(stage + ": non-finite value at epoch " + std::to_string(epoch) +
                " (parameter norm " + std::to_string(parameter_norm) + ")"),
          epoch_(epoch), parameter_norm_(parameter_norm)
    {
    }
    int epoch() const noexcept { return epoch_; }
    double parameter_norm() const noexcept { return parameter_norm_; }

private:
    int epoch_;
    double parameter_norm_;
};

/// A fitter gave up (singular normal equations, shape left the image).
class FitError : public Error
{
public:
    using Error::Error;
};

using Rng = std::mt19937_64;

/// Derives an independent stream seed from a root seed (splitmix64 finaliser
/// applied to root ^ golden-ratio-scrambled stream id). Every random consumer in
/// the library and CLI takes its seed through this function.
inline std::uint64_t split_seed(std::uint64_t root, std::uint64_t stream) noexcept
{
    std::uint64_t z = root ^ (stream * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline void require_size(Eigen::Index actual, Eigen::Index expected, const char* what)
{
    if (actual != expected) {
        throw DimensionError(std::string(what) + ": expected length " + std::to_string(expected) +
                             ", got " + std::to_string(actual));
    }
}

} // namespace dam
