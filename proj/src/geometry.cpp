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
#include "dam/geometry.hpp"

#include <opencv2/imgproc.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace dam {

namespace {

using Eigen::Matrix2d;
using Eigen::Vector2d;

constexpr double kInsideTolerance = 1e-12;

double signed_area(const Vector2d& a, const Vector2d& b, const Vector2d& c)
{
    return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y()));
}

Vector2d vertex(const Shape& s, int i) { return s.point(i); }

// Barycentric weights of p relative to the triangle whose first vertex is the
// origin of the local basis. Returns false for a degenerate triangle.
bool barycentric(const Vector2d& a, const Vector2d& b, const Vector2d& c, const Vector2d& p,
                 std::array<double, 3>& w)
{
    Matrix2d basis;
    basis.col(0) = b - a;
    basis.col(1) = c - a;
    const double det = basis.determinant();
    if (std::abs(det) < 1e-300) {
        return false;
    }
    const Vector2d local = basis.inverse() * (p - a);
    w[1] = local.x();
    w[2] = local.y();
    w[0] = 1.0 - w[1] - w[2];
    return true;
}

bool inside(const std::array<double, 3>& w, double tol)
{
    return w[0] >= -tol && w[1] >= -tol && w[2] >= -tol;
}

double point_segment_distance(const Vector2d& p, const Vector2d& a, const Vector2d& b)
{
    const Vector2d ab = b - a;
    const double len2 = ab.squaredNorm();
    double t = len2 > 0 ? (p - a).dot(ab) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return (p - (a + t * ab)).norm();
}

double point_triangle_distance(const Vector2d& p, const Vector2d& a, const Vector2d& b, const Vector2d& c)
{
    std::array<double, 3> w{};
    if (barycentric(a, b, c, p, w) && inside(w, 0.0)) {
        return 0.0;
    }
    return std::min({point_segment_distance(p, a, b), point_segment_distance(p, b, c),
                     point_segment_distance(p, c, a)});
}

struct Location
{
    int triangle = -1;
    std::array<double, 3> weights{}; // in the triangle's vertex order
    bool extrapolated = false;
};

// Locates p in the mesh `mesh` (vertex positions) with connectivity `tris`.
// Triangles incident on `preferred_vertex` are tried first, with that vertex used
// as the barycentric origin, so a point sitting exactly on the vertex gets the
// weights (1, 0, 0) without rounding.
Location locate(const Shape& mesh, const std::vector<std::array<int, 3>>& tris, const Vector2d& p,
                int preferred_vertex = -1)
{
    Location loc;
    auto try_triangle = [&](int t, int origin_slot) {
        const auto& tri = tris[t];
        const int i0 = tri[origin_slot];
        const int i1 = tri[(origin_slot + 1) % 3];
        const int i2 = tri[(origin_slot + 2) % 3];
        std::array<double, 3> w{};
        if (!barycentric(vertex(mesh, i0), vertex(mesh, i1), vertex(mesh, i2), p, w)) {
            return false;
        }
        if (!inside(w, 1e-9)) {
            return false;
        }
        loc.triangle = t;
        loc.weights[origin_slot] = w[0];
        loc.weights[(origin_slot + 1) % 3] = w[1];
        loc.weights[(origin_slot + 2) % 3] = w[2];
        return true;
    };

    if (preferred_vertex >= 0) {
        for (int t = 0; t < static_cast<int>(tris.size()); ++t) {
            for (int k = 0; k < 3; ++k) {
                if (tris[t][k] == preferred_vertex && try_triangle(t, k)) {
                    return loc;
                }
            }
        }
    }
    for (int t = 0; t < static_cast<int>(tris.size()); ++t) {
        if (try_triangle(t, 0)) {
            return loc;
        }
    }

    double best = std::numeric_limits<double>::infinity();
    int best_t = -1;
    for (int t = 0; t < static_cast<int>(tris.size()); ++t) {
        const auto& tri = tris[t];
        const double d = point_triangle_distance(p, vertex(mesh, tri[0]), vertex(mesh, tri[1]),
                                                 vertex(mesh, tri[2]));
        if (d < best) {
            best = d;
            best_t = t;
        }
    }
    if (best_t < 0) {
        throw GeometryError("mesh has no usable triangles");
    }
    const auto& tri = tris[best_t];
    barycentric(vertex(mesh, tri[0]), vertex(mesh, tri[1]), vertex(mesh, tri[2]), p, loc.weights);
    loc.triangle = best_t;
    loc.extrapolated = true;
    return loc;
}

Vector2d apply_weights(const Shape& mesh, const std::array<int, 3>& tri, const std::array<double, 3>& w)
{
    return w[0] * vertex(mesh, tri[0]) + w[1] * vertex(mesh, tri[1]) + w[2] * vertex(mesh, tri[2]);
}

// Exact for a point on the first vertex: 1 * v0 + 0 * v1 + 0 * v2.
Vector2d apply_weights_exact(const Shape& mesh, const std::array<int, 3>& tri, const std::array<double, 3>& w)
{
    Vector2d out = Vector2d::Zero();
    for (int k = 0; k < 3; ++k) {
        if (w[k] != 0.0) {
            out += w[k] * vertex(mesh, tri[k]);
        }
    }
    return out;
}

// Affine map reference -> image for triangle `tri`: A such that
// W(r) - W(r_a) = A (r - r_a).
Matrix2d triangle_affine(const Shape& from, const Shape& to, const std::array<int, 3>& tri)
{
    Matrix2d src;
    src.col(0) = vertex(from, tri[1]) - vertex(from, tri[0]);
    src.col(1) = vertex(from, tri[2]) - vertex(from, tri[0]);
    Matrix2d dst;
    dst.col(0) = vertex(to, tri[1]) - vertex(to, tri[0]);
    dst.col(1) = vertex(to, tri[2]) - vertex(to, tri[0]);
    return dst * src.inverse();
}

void check_points(const Shape& shape, const ReferenceFrame& ref, const char* what)
{
    if (shape.coords.size() % 2 != 0) {
        throw DimensionError(std::string(what) + ": odd coordinate count");
    }
    require_size(shape.coords.size(), ref.mean_shape.coords.size(), what);
}

} // namespace

Vector2d centroid(const Shape& shape)
{
    Vector2d c = Vector2d::Zero();
    for (int i = 0; i < shape.num_points(); ++i) {
        c += shape.point(i);
    }
    return c / std::max(1, shape.num_points());
}

Shape similarity_transform(const Shape& shape, double scale, double angle_rad, const Vector2d& translation)
{
    const Vector2d c = centroid(shape);
    Matrix2d r;
    r << std::cos(angle_rad), -std::sin(angle_rad), std::sin(angle_rad), std::cos(angle_rad);
    Shape out = shape;
    for (int i = 0; i < shape.num_points(); ++i) {
        out.set_point(i, scale * (r * (shape.point(i) - c)) + c + translation);
    }
    return out;
}

std::vector<std::array<int, 3>> delaunay_triangulation(const Shape& shape)
{
    const int n = shape.num_points();
    if (n < 3) {
        throw GeometryError("triangulation needs at least 3 landmarks");
    }
    double min_x = shape.coords[0], max_x = min_x, min_y = shape.coords[1], max_y = min_y;
    for (int i = 0; i < n; ++i) {
        min_x = std::min(min_x, shape.coords[2 * i]);
        max_x = std::max(max_x, shape.coords[2 * i]);
        min_y = std::min(min_y, shape.coords[2 * i + 1]);
        max_y = std::max(max_y, shape.coords[2 * i + 1]);
    }
    const double span = std::max(max_x - min_x, max_y - min_y);
    if (!(span > 0)) {
        throw GeometryError("degenerate shape: all landmarks coincide");
    }

    // Subdiv2D works in float; triangulate a normalised copy so precision does not
    // depend on the caller's coordinate scale.
    const double scale = 1000.0 / span;
    cv::Subdiv2D subdiv(cv::Rect(-20000, -20000, 41000, 41000));
    std::vector<cv::Point2f> pts(n);
    for (int i = 0; i < n; ++i) {
        pts[i] = cv::Point2f(static_cast<float>((shape.coords[2 * i] - min_x) * scale),
                             static_cast<float>((shape.coords[2 * i + 1] - min_y) * scale));
    }
    for (const auto& p : pts) {
        subdiv.insert(p);
    }
    std::vector<cv::Vec6f> raw;
    subdiv.getTriangleList(raw);

    auto index_of = [&](float x, float y) {
        int best = -1;
        double best_d = 1e-2;
        for (int i = 0; i < n; ++i) {
            const double d = std::hypot(pts[i].x - x, pts[i].y - y);
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        return best;
    };

    std::vector<std::array<int, 3>> tris;
    for (const auto& t : raw) {
        std::array<int, 3> idx{index_of(t[0], t[1]), index_of(t[2], t[3]), index_of(t[4], t[5])};
        if (idx[0] < 0 || idx[1] < 0 || idx[2] < 0) {
            continue; // touches a virtual outer vertex
        }
        const double area = signed_area(shape.point(idx[0]), shape.point(idx[1]), shape.point(idx[2]));
        if (std::abs(area) <= 1e-12 * span * span) {
            continue;
        }
        if (area < 0) {
            std::swap(idx[1], idx[2]);
        }
        // canonical rotation: smallest index first, orientation preserved
        const auto min_pos = std::min_element(idx.begin(), idx.end()) - idx.begin();
        std::rotate(idx.begin(), idx.begin() + min_pos, idx.end());
        tris.push_back(idx);
    }
    std::sort(tris.begin(), tris.end());
    tris.erase(std::unique(tris.begin(), tris.end()), tris.end());
    if (tris.empty()) {
        throw GeometryError("degenerate shape: landmarks are collinear");
    }
    return tris;
}

ReferenceFrame make_reference_frame(Shape mean_shape, FrameSize size, std::vector<std::array<int, 3>> triangles)
{
    if (size.width < 2 || size.height < 2) {
        throw GeometryError("frame must be at least 2x2 pixels");
    }
    ReferenceFrame ref;
    ref.mean_shape = std::move(mean_shape);
    ref.size = size;
    ref.triangles = std::move(triangles);

    for (int y = 0; y < size.height; ++y) {
        for (int x = 0; x < size.width; ++x) {
            const Vector2d p(x, y);
            for (int t = 0; t < static_cast<int>(ref.triangles.size()); ++t) {
                const auto& tri = ref.triangles[t];
                std::array<double, 3> w{};
                if (!barycentric(ref.mean_shape.point(tri[0]), ref.mean_shape.point(tri[1]),
                                 ref.mean_shape.point(tri[2]), p, w)) {
                    continue;
                }
                if (!inside(w, kInsideTolerance)) {
                    continue;
                }
                double sum = 0.0;
                for (double& wk : w) {
                    wk = std::max(0.0, wk);
                    sum += wk;
                }
                for (double& wk : w) {
                    wk /= sum;
                }
                ref.pixels.push_back({x, y, t, w});
                break;
            }
        }
    }
    if (ref.pixels.empty()) {
        throw GeometryError("reference frame mask is empty");
    }
    return ref;
}

ReferenceFrame build_reference_frame(std::span<const Shape> shapes, FrameSize size)
{
    if (shapes.empty()) {
        throw GeometryError("build_reference_frame: no shapes");
    }
    const Eigen::Index dims = shapes.front().coords.size();
    if (dims < 6 || dims % 2 != 0) {
        throw DimensionError("build_reference_frame: shapes need at least 3 landmarks");
    }
    VectorXd mean = VectorXd::Zero(dims);
    for (const Shape& s : shapes) {
        require_size(s.coords.size(), dims, "build_reference_frame");
        const Vector2d c = centroid(s);
        for (int i = 0; i < s.num_points(); ++i) {
            mean[2 * i] += s.coords[2 * i] - c.x();
            mean[2 * i + 1] += s.coords[2 * i + 1] - c.y();
        }
    }
    mean /= static_cast<double>(shapes.size());

    Shape m(mean);
    double min_x = mean[0], max_x = mean[0], min_y = mean[1], max_y = mean[1];
    for (int i = 0; i < m.num_points(); ++i) {
        min_x = std::min(min_x, mean[2 * i]);
        max_x = std::max(max_x, mean[2 * i]);
        min_y = std::min(min_y, mean[2 * i + 1]);
        max_y = std::max(max_y, mean[2 * i + 1]);
    }
    const double bw = max_x - min_x;
    const double bh = max_y - min_y;
    if (!(bw > 0) || !(bh > 0)) {
        throw GeometryError("degenerate mean shape: landmarks are collinear");
    }
    const double usable = 1.0 - 2.0 * kFrameMargin;
    const double scale = std::min(usable * (size.width - 1) / bw, usable * (size.height - 1) / bh);
    const Vector2d box_centre(0.5 * (min_x + max_x), 0.5 * (min_y + max_y));
    const Vector2d frame_centre(0.5 * (size.width - 1), 0.5 * (size.height - 1));
    for (int i = 0; i < m.num_points(); ++i) {
        m.set_point(i, scale * (m.point(i) - box_centre) + frame_centre);
    }
    auto tris = delaunay_triangulation(m);
    return make_reference_frame(std::move(m), size, std::move(tris));
}

std::vector<bool> ReferenceFrame::boundary_triangles() const
{
    std::map<std::pair<int, int>, int> edge_count;
    for (const auto& t : triangles) {
        for (int k = 0; k < 3; ++k) {
            const int a = t[k], b = t[(k + 1) % 3];
            ++edge_count[{std::min(a, b), std::max(a, b)}];
        }
    }
    std::vector<bool> out(triangles.size(), false);
    for (std::size_t i = 0; i < triangles.size(); ++i) {
        const auto& t = triangles[i];
        for (int k = 0; k < 3; ++k) {
            const int a = t[k], b = t[(k + 1) % 3];
            if (edge_count[{std::min(a, b), std::max(a, b)}] == 1) {
                out[i] = true;
            }
        }
    }
    return out;
}

bool ReferenceFrame::operator==(const ReferenceFrame& other) const
{
    if (!(mean_shape == other.mean_shape) || size.width != other.size.width ||
        size.height != other.size.height || triangles != other.triangles ||
        pixels.size() != other.pixels.size()) {
        return false;
    }
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        const auto& a = pixels[i];
        const auto& b = other.pixels[i];
        if (a.x != b.x || a.y != b.y || a.triangle != b.triangle || a.weights != b.weights) {
            return false;
        }
    }
    return true;
}

int WarpResult::num_invalid() const
{
    return static_cast<int>(std::count(valid.begin(), valid.end(), std::uint8_t{0}));
}

bool sample_bilinear_gradient(const GrayImage& image, double x, double y, double& value, double& gx, double& gy)
{
    const int w = image.width();
    const int h = image.height();
    value = gx = gy = 0.0;
    if (!(x >= 0.0 && y >= 0.0 && x <= w - 1 && y <= h - 1) || w < 2 || h < 2) {
        return false;
    }
    int x0 = static_cast<int>(std::floor(x));
    int y0 = static_cast<int>(std::floor(y));
    x0 = std::min(x0, w - 2);
    y0 = std::min(y0, h - 2);
    const double fx = x - x0;
    const double fy = y - y0;
    const double i00 = image.at(x0, y0);
    const double i10 = image.at(x0 + 1, y0);
    const double i01 = image.at(x0, y0 + 1);
    const double i11 = image.at(x0 + 1, y0 + 1);
    value = (1 - fy) * ((1 - fx) * i00 + fx * i10) + fy * ((1 - fx) * i01 + fx * i11);
    gx = (1 - fy) * (i10 - i00) + fy * (i11 - i01);
    gy = (1 - fx) * (i01 - i00) + fx * (i11 - i10);
    return true;
}

bool sample_bilinear(const GrayImage& image, double x, double y, double& value)
{
    double gx = 0, gy = 0;
    return sample_bilinear_gradient(image, x, y, value, gx, gy);
}

namespace {

std::vector<std::uint8_t> inverted_triangles(const Shape& shape, const ReferenceFrame& ref)
{
    std::vector<std::uint8_t> inverted(ref.triangles.size(), 0);
    for (std::size_t t = 0; t < ref.triangles.size(); ++t) {
        const auto& tri = ref.triangles[t];
        const double ref_area = signed_area(ref.mean_shape.point(tri[0]), ref.mean_shape.point(tri[1]),
                                            ref.mean_shape.point(tri[2]));
        const double area = signed_area(shape.point(tri[0]), shape.point(tri[1]), shape.point(tri[2]));
        inverted[t] = (area * ref_area <= 0.0) ? 1 : 0;
    }
    return inverted;
}

} // namespace

WarpResult warp_to_texture(const GrayImage& image, const Shape& shape, const ReferenceFrame& ref)
{
    check_points(shape, ref, "warp_to_texture");
    if (image.empty()) {
        throw DimensionError("warp_to_texture: empty image");
    }
    const auto inverted = inverted_triangles(shape, ref);
    WarpResult out;
    out.texture.resize(ref.num_pixels());
    out.valid.assign(ref.num_pixels(), 1);
    for (int k = 0; k < ref.num_pixels(); ++k) {
        const MaskedPixel& px = ref.pixels[k];
        const Vector2d p = apply_weights(shape, ref.triangles[px.triangle], px.weights);
        double v = 0.0;
        if (!sample_bilinear(image, p.x(), p.y(), v)) {
            out.valid[k] = 0;
            ++out.num_out_of_image;
        }
        if (inverted[px.triangle]) {
            out.valid[k] = 0;
            ++out.num_inverted;
        }
        out.texture[k] = v;
    }
    return out;
}

WarpJacobian warp_jacobian(const GrayImage& image, const Shape& shape, const ReferenceFrame& ref,
                           JacobianFrame frame)
{
    check_points(shape, ref, "warp_jacobian");
    if (image.empty()) {
        throw DimensionError("warp_jacobian: empty image");
    }
    const auto inverted = inverted_triangles(shape, ref);
    std::vector<Matrix2d> affine;
    if (frame == JacobianFrame::kReference) {
        affine.reserve(ref.triangles.size());
        for (const auto& tri : ref.triangles) {
            affine.push_back(triangle_affine(ref.mean_shape, shape, tri));
        }
    }

    WarpJacobian out;
    out.matrix = MatrixXd::Zero(ref.num_pixels(), shape.coords.size());
    out.valid.assign(ref.num_pixels(), 1);
    for (int k = 0; k < ref.num_pixels(); ++k) {
        const MaskedPixel& px = ref.pixels[k];
        const auto& tri = ref.triangles[px.triangle];
        const Vector2d p = apply_weights(shape, tri, px.weights);
        double v = 0, gx = 0, gy = 0;
        if (!sample_bilinear_gradient(image, p.x(), p.y(), v, gx, gy)) {
            out.valid[k] = 0;
            continue;
        }
        if (inverted[px.triangle]) {
            out.valid[k] = 0;
        }
        Eigen::RowVector2d g(gx, gy);
        if (frame == JacobianFrame::kReference) {
            g = g * affine[px.triangle];
        }
        for (int c = 0; c < 3; ++c) {
            out.matrix(k, 2 * tri[c]) += g.x() * px.weights[c];
            out.matrix(k, 2 * tri[c] + 1) += g.y() * px.weights[c];
        }
    }
    return out;
}

ComposeResult compose_shape(const Shape& shape, const VectorXd& delta, const ReferenceFrame& ref)
{
    check_points(shape, ref, "compose_shape");
    require_size(delta.size(), shape.coords.size(), "compose_shape delta");
    ComposeResult out;
    out.shape = shape;
    for (int i = 0; i < ref.num_points(); ++i) {
        const Vector2d d(delta[2 * i], delta[2 * i + 1]);
        if (d.x() == 0.0 && d.y() == 0.0) {
            continue; // identity on this landmark
        }
        const Vector2d q = ref.mean_shape.point(i) + d;
        const Location loc = locate(ref.mean_shape, ref.triangles, q, i);
        if (loc.extrapolated) {
            out.extrapolated.push_back(i);
        }
        out.shape.set_point(i, apply_weights_exact(shape, ref.triangles[loc.triangle], loc.weights));
    }
    return out;
}

VectorXd relative_increment(const Shape& from, const Shape& to, const ReferenceFrame& ref)
{
    check_points(from, ref, "relative_increment");
    check_points(to, ref, "relative_increment");
    VectorXd delta = VectorXd::Zero(from.coords.size());
    for (int i = 0; i < ref.num_points(); ++i) {
        if (from.point(i) == to.point(i)) {
            continue;
        }
        const Location loc = locate(from, ref.triangles, to.point(i), i);
        const Vector2d q = apply_weights_exact(ref.mean_shape, ref.triangles[loc.triangle], loc.weights);
        delta.segment<2>(2 * i) = q - ref.mean_shape.point(i);
    }
    return delta;
}

GrayImage texture_to_frame_image(const Texture& texture, const ReferenceFrame& ref, double fill)
{
    require_size(texture.size(), ref.num_pixels(), "texture_to_frame_image");
    GrayImage img(ref.size.width, ref.size.height, fill);
    for (int k = 0; k < ref.num_pixels(); ++k) {
        img.at(ref.pixels[k].x, ref.pixels[k].y) = texture[k];
    }
    return img;
}

Texture frame_image_to_texture(const GrayImage& image, const ReferenceFrame& ref)
{
    if (image.width() != ref.size.width || image.height() != ref.size.height) {
        throw DimensionError("frame_image_to_texture: image is not frame-sized");
    }
    Texture t(ref.num_pixels());
    for (int k = 0; k < ref.num_pixels(); ++k) {
        t[k] = image.at(ref.pixels[k].x, ref.pixels[k].y);
    }
    return t;
}

GrayImage render_texture(const Texture& texture, const Shape& shape, const ReferenceFrame& ref, int width,
                         int height, double background)
{
    check_points(shape, ref, "render_texture");
    require_size(texture.size(), ref.num_pixels(), "render_texture");
    const double fill = texture.size() > 0 ? texture.mean() : 0.0;
    const GrayImage frame = texture_to_frame_image(texture, ref, fill);
    GrayImage out(width, height, background);

    for (const auto& tri : ref.triangles) {
        const Vector2d a = shape.point(tri[0]), b = shape.point(tri[1]), c = shape.point(tri[2]);
        if (signed_area(a, b, c) == 0.0) {
            continue;
        }
        const int x_lo = std::max(0, static_cast<int>(std::floor(std::min({a.x(), b.x(), c.x()}))));
        const int x_hi = std::min(width - 1, static_cast<int>(std::ceil(std::max({a.x(), b.x(), c.x()}))));
        const int y_lo = std::max(0, static_cast<int>(std::floor(std::min({a.y(), b.y(), c.y()}))));
        const int y_hi = std::min(height - 1, static_cast<int>(std::ceil(std::max({a.y(), b.y(), c.y()}))));
        for (int y = y_lo; y <= y_hi; ++y) {
            for (int x = x_lo; x <= x_hi; ++x) {
                std::array<double, 3> w{};
                if (!barycentric(a, b, c, Vector2d(x, y), w) || !inside(w, kInsideTolerance)) {
                    continue;
                }
                const Vector2d r = apply_weights(ref.mean_shape, tri, w);
                double v = 0.0;
                if (sample_bilinear(frame, r.x(), r.y(), v)) {
                    out.at(x, y) = v;
                }
            }
        }
    }
    return out;
}

} // namespace dam
