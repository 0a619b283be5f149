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

#include "dam/dam_model.hpp"
#include "dam/fitting.hpp"
#include "dam/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dam {

// ---------------------------------------------------------------------------
// Landmarks (300-W pts)

/// Returns the coordinates exactly as written in the file (1-indexed pixels).
Shape parse_pts(std::string_view text);

/// Shortest round-trip decimal formatting; parse_pts(format_pts(s)) == s.
std::string format_pts(const Shape& shape);

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

// ---------------------------------------------------------------------------
// Images

/// Grayscale intensities in [0, 255]; colour input is converted with luma
/// weights 0.299 R + 0.587 G + 0.114 B.
GrayImage load_image(const std::filesystem::path& path);

/// Rounds and clamps to 8 bits.
void save_image(const GrayImage& image, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Datasets

enum class Split
{
    kTrain,
    kTest,
};

struct ManifestEntry
{
    std::filesystem::path image;
    std::filesystem::path landmarks;
    Split split = Split::kTrain;
};

struct DatasetManifest
{
    std::vector<ManifestEntry> entries;
    std::filesystem::path base_dir; // relative paths resolve against this

    std::vector<ManifestEntry> select(Split split) const;
};

/// CSV with header `image,landmarks,split`.
DatasetManifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir = {});
DatasetManifest read_manifest(const std::filesystem::path& path);
std::string format_manifest(const DatasetManifest& manifest);

struct AnnotatedFace
{
    GrayImage image;
    Shape shape; // 0-indexed pixel coordinates
    std::string id;
    bool out_of_bounds = false;
};

/// Loads every entry of `split` (all entries when empty). Landmarks outside the
/// image are flagged, never clamped.
std::vector<AnnotatedFace> load_dataset(const DatasetManifest& manifest, std::optional<Split> split = {});

// ---------------------------------------------------------------------------
// Model archive

inline constexpr std::uint32_t kArchiveVersion = 1;

struct ModelArchive
{
    std::uint32_t version = kArchiveVersion;
    DamModel model;
    ReferenceFrame frame;
    std::optional<DictPair> dictionaries;
    std::optional<UpdateRegressor> regressor;
    std::map<std::string, std::string> config; // training configuration snapshot

    bool operator==(const ModelArchive&) const = default;
};

void save_model(const ModelArchive& archive, std::ostream& out);
ModelArchive load_model(std::istream& in);
void save_model(const ModelArchive& archive, const std::filesystem::path& path);
ModelArchive load_model(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Small text helpers shared by the CLI

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

} // namespace dam
