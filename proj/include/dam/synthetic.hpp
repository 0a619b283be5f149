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

// Procedural face corpus: 68 landmarks in the usual 300-W order (jaw, brows,
// nose, eyes, mouth) driven by a few latent factors shared between shape and
// appearance, rendered as a smooth grayscale image.

#include "dam/geometry.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dam {

inline constexpr int kNumLandmarks = 68;

struct SyntheticConfig
{
    int image_size = 64;
    double face_size = 34.0;     // sqrt(bbox w * h) of the landmarks, pixels
    double pose_jitter = 1.0;    // multiplies the random translation / rotation / scale spread
    double noise_stddev = 1.0;   // additive pixel noise
    int num_train = 200;
    int num_test = 50;
    std::uint64_t seed = 7;
};

struct SyntheticFace
{
    std::string id;
    GrayImage image;
    Shape shape;     // 0-indexed pixel coordinates
    VectorXd latent; // shared shape/appearance factors
    int label = 0;   // two classes, separated along the expression factor
};

/// Landmarks of the canonical face for the given latent factors, in a unit frame
/// centred on the origin (y down).
Shape canonical_face_shape(const VectorXd& latent);

/// Renders one face; everything is determined by `seed`.
SyntheticFace generate_face(const SyntheticConfig& config, std::uint64_t seed, const std::string& id);

struct SyntheticCorpus
{
    std::vector<SyntheticFace> train;
    std::vector<SyntheticFace> test;
};

SyntheticCorpus generate_corpus(const SyntheticConfig& config);

struct Rect
{
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;
};

/// Axis-aligned bounding box (min, max) of the landmarks.
std::pair<Eigen::Vector2d, Eigen::Vector2d> bounding_box(const Shape& shape);

/// sqrt(width * height) of the landmark bounding box.
double face_size(const Shape& shape);

/// Pastes a constant square patch covering `area_fraction` of the landmark
/// bounding box at a random position inside it. Returns the patch.
Rect add_occlusion(GrayImage& image, const Shape& shape, double area_fraction, double intensity, Rng& rng);

} // namespace dam
