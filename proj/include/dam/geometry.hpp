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

#include "dam/common.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace dam {

/// Landmark coordinates laid out as [x1, y1, ..., xN, yN] in pixel units.
struct Shape
{
    VectorXd coords;

    Shape() = default;
    explicit Shape(VectorXd c) : coords(std::move(c)) {}

    int num_points() const { return static_cast<int>(coords.size() / 2); }
    Eigen::Vector2d point(int i) const { return {coords[2 * i], coords[2 * i + 1]}; }
    void set_point(int i, const Eigen::Vector2d& p)
    {
        coords[2 * i] = p.x();
        coords[2 * i + 1] = p.y();
    }
    bool operator==(const Shape& other) const { return coords == other.coords; }
};

/// Grayscale image, intensities stored as doubles; pixels(y, x).
struct GrayImage
{
    MatrixXd pixels;

    GrayImage() = default;
    GrayImage(int width, int height, double fill = 0.0) : pixels(MatrixXd::Constant(height, width, fill)) {}
    explicit GrayImage(MatrixXd p) : pixels(std::move(p)) {}

    int width() const { return static_cast<int>(pixels.cols()); }
    int height() const { return static_cast<int>(pixels.rows()); }
    bool empty() const { return pixels.size() == 0; }
    double at(int x, int y) const { return pixels(y, x); }
    double& at(int x, int y) { return pixels(y, x); }
};

/// Shape-free intensities at the masked pixels of a ReferenceFrame, in mask order.
using Texture = VectorXd;

struct FrameSize
{
    int width = 117;
    int height = 120;
};

/// Relative margin left around the scaled mean shape on every side of the frame.
inline constexpr double kFrameMargin = 0.05;

struct MaskedPixel
{
    int x = 0;
    int y = 0;
    int triangle = 0;
    std::array<double, 3> weights{}; // barycentric, one per triangle vertex
};

/// Texture domain: scaled mean shape, its Delaunay triangulation and the masked
/// pixel table used by every warp. Immutable after construction.
struct ReferenceFrame
{
    Shape mean_shape;
    FrameSize size;
    std::vector<std::array<int, 3>> triangles; // counter-clockwise in frame coordinates
    std::vector<MaskedPixel> pixels;

    int num_pixels() const { return static_cast<int>(pixels.size()); }
    int num_points() const { return mean_shape.num_points(); }

    /// Triangles with at least one edge on the convex hull of the mean shape.
    std::vector<bool> boundary_triangles() const;

    bool operator==(const ReferenceFrame& other) const;
};

/// Builds the frame from training shapes: each shape is centred, the centred
/// shapes are averaged, and the mean is scaled isotropically into the frame.
ReferenceFrame build_reference_frame(std::span<const Shape> shapes, FrameSize size = {});

/// Rebuilds the pixel table for a given mean shape and triangulation.
ReferenceFrame make_reference_frame(Shape mean_shape, FrameSize size,
                                    std::vector<std::array<int, 3>> triangles);

std::vector<std::array<int, 3>> delaunay_triangulation(const Shape& shape);

struct WarpResult
{
    Texture texture;
    std::vector<std::uint8_t> valid; // 0 for out-of-image samples and inverted triangles
    int num_out_of_image = 0;
    int num_inverted = 0;

    int num_invalid() const;
};

/// Samples `image` at every masked pixel mapped through the piecewise-affine warp
/// defined by `shape`. Out-of-image samples are 0 and flagged.
WarpResult warp_to_texture(const GrayImage& image, const Shape& shape, const ReferenceFrame& ref);

enum class JacobianFrame
{
    kShape,     ///< derivative w.r.t. the landmark coordinates s
    kReference, ///< derivative w.r.t. a reference-frame increment composed with s
};

struct WarpJacobian
{
    MatrixXd matrix; // K x 2N
    std::vector<std::uint8_t> valid;
};

/// Jacobian of warp_to_texture: exact gradient of the bilinear interpolant times
/// the barycentric warp derivative.
WarpJacobian warp_jacobian(const GrayImage& image, const Shape& shape, const ReferenceFrame& ref,
                           JacobianFrame frame = JacobianFrame::kShape);

struct ComposeResult
{
    Shape shape;
    std::vector<int> extrapolated; // landmarks mapped with the nearest triangle's affine map
};

/// Forward composition: moves the mean-shape landmarks by `delta` and maps them
/// through the warp induced by `shape`. compose_shape(s, 0) == s exactly.
ComposeResult compose_shape(const Shape& shape, const VectorXd& delta, const ReferenceFrame& ref);

/// Reference-frame increment d with compose_shape(from, d) == to (up to rounding)
/// whenever `from` is not folded.
VectorXd relative_increment(const Shape& from, const Shape& to, const ReferenceFrame& ref);

/// Rasterises a texture into image space under `shape`. Pixels outside the warped
/// mesh keep `background`.
GrayImage render_texture(const Texture& texture, const Shape& shape, const ReferenceFrame& ref,
                         int width, int height, double background = 0.0);

/// Scatters a texture into a frame-sized image; unmasked pixels receive `fill`.
GrayImage texture_to_frame_image(const Texture& texture, const ReferenceFrame& ref, double fill);
Texture frame_image_to_texture(const GrayImage& image, const ReferenceFrame& ref);

/// Bilinear sample; returns false (and 0) when (x, y) lies outside the pixel grid.
bool sample_bilinear(const GrayImage& image, double x, double y, double& value);

/// Exact gradient of the bilinear interpolant at (x, y).
bool sample_bilinear_gradient(const GrayImage& image, double x, double y, double& value,
                              double& gx, double& gy);

/// Similarity transform x -> scale * R(angle) * (x - centre) + centre + translation.
Shape similarity_transform(const Shape& shape, double scale, double angle_rad,
                           const Eigen::Vector2d& translation);
Eigen::Vector2d centroid(const Shape& shape);

} // namespace dam
