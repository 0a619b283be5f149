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
#include "dam/synthetic.hpp"

#include <Eigen/Geometry>
#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dam {

namespace {

constexpr int kLatentDims = 5;
constexpr int kSupersample = 4;

// Landmark coordinates are snapped to this grid so that writing them with a
// +1 offset (pts convention) and reading them back is exact.
constexpr double kCoordQuantum = 1.0 / 1024.0;

double snap(double v)
{
    return std::round(v / kCoordQuantum) * kCoordQuantum;
}

std::vector<cv::Point> to_points(const Shape& s, int first, int last, double scale)
{
    std::vector<cv::Point> pts;
    // cv drawing functions take fixed-point coordinates with `shift` fractional bits
    for (int i = first; i <= last; ++i) {
        pts.emplace_back(static_cast<int>(std::lround(s.coords[2 * i] * scale * 16.0)),
                         static_cast<int>(std::lround(s.coords[2 * i + 1] * scale * 16.0)));
    }
    return pts;
}

void fill(cv::Mat& img, const std::vector<cv::Point>& poly, double value)
{
    std::vector<std::vector<cv::Point>> polys{poly};
    cv::fillPoly(img, polys, cv::Scalar(value), cv::LINE_8, 4);
}

} // namespace

Shape canonical_face_shape(const VectorXd& z)
{
    require_size(z.size(), kLatentDims, "canonical_face_shape latent");
    Shape s(VectorXd::Zero(2 * kNumLandmarks));
    const double pi = std::numbers::pi;

    // jaw 0-16
    const double a = 1.0 + 0.08 * z[0];
    const double b = 1.2 + 0.04 * z[4];
    for (int i = 0; i <= 16; ++i) {
        const double phi = pi * i / 16.0;
        s.set_point(i, {-a * std::cos(phi) * (1.0 - 0.12 * std::sin(phi)), -0.15 + b * std::sin(phi)});
    }
    // brows 17-21, 22-26
    const double brow_y = -0.58 - 0.07 * z[3];
    for (int k = 0; k < 5; ++k) {
        const double u = k / 4.0;
        const double arch = 0.09 * std::sin(pi * u);
        s.set_point(17 + k, {-0.8 + 0.6 * u, brow_y - arch});
        s.set_point(22 + k, {0.2 + 0.6 * u, brow_y - arch});
    }
    // nose bridge 27-30, base 31-35
    const double tip = 0.15 + 0.05 * z[4];
    for (int k = 0; k < 4; ++k) {
        s.set_point(27 + k, {0.0, -0.35 + (tip + 0.35) * k / 3.0});
    }
    for (int k = 0; k < 5; ++k) {
        const double u = (k - 2) / 2.0;
        s.set_point(31 + k, {0.2 * u, tip + 0.1 - 0.03 * (1.0 - u * u)});
    }
    // eyes 36-41, 42-47
    const double ew = 0.17;
    const double eh = std::clamp(0.07 * (1.0 + 0.3 * z[2]), 0.02, 0.14);
    for (int e = 0; e < 2; ++e) {
        const double cx = e == 0 ? -0.45 : 0.45;
        const double cy = -0.3;
        const int o = 36 + 6 * e;
        s.set_point(o + 0, {cx - ew, cy});
        s.set_point(o + 1, {cx - ew / 3.0, cy - eh});
        s.set_point(o + 2, {cx + ew / 3.0, cy - eh});
        s.set_point(o + 3, {cx + ew, cy});
        s.set_point(o + 4, {cx + ew / 3.0, cy + eh});
        s.set_point(o + 5, {cx - ew / 3.0, cy + eh});
    }
    // mouth 48-59 outer, 60-67 inner
    const double my = 0.58 + 0.03 * z[4];
    const double mw = 0.33 * (1.0 + 0.08 * z[0]);
    const double open = std::clamp(0.07 + 0.04 * z[1], 0.01, 0.2);
    const double lip = 0.06;
    for (int k = 0; k < 12; ++k) {
        const double th = pi - k * pi / 6.0;
        s.set_point(48 + k, {mw * std::cos(th), my - std::sin(th) * (open / 2.0 + lip)});
    }
    for (int k = 0; k < 8; ++k) {
        const double th = pi - k * pi / 4.0;
        s.set_point(60 + k, {0.8 * mw * std::cos(th), my - std::sin(th) * open / 2.0});
    }
    return s;
}

std::pair<Eigen::Vector2d, Eigen::Vector2d> bounding_box(const Shape& shape)
{
    const auto pts = shape.coords.reshaped(2, shape.num_points());
    return {pts.rowwise().minCoeff(), pts.rowwise().maxCoeff()};
}

double face_size(const Shape& shape)
{
    const auto [lo, hi] = bounding_box(shape);
    const Eigen::Vector2d d = hi - lo;
    return std::sqrt(d.x() * d.y());
}

SyntheticFace generate_face(const SyntheticConfig& config, std::uint64_t seed, const std::string& id)
{
    if (config.image_size < 16 || config.face_size <= 0.0 || config.face_size > config.image_size) {
        throw Error("generate_face: invalid image or face size");
    }
    Rng rng(seed);
    std::normal_distribution<double> n01(0.0, 1.0);
    std::bernoulli_distribution coin(0.5);

    SyntheticFace face;
    face.id = id;
    face.label = coin(rng) ? 1 : 0;
    face.latent = VectorXd(kLatentDims);
    for (int i = 0; i < kLatentDims; ++i) {
        face.latent[i] = n01(rng);
    }
    face.latent[1] = (face.label ? 0.9 : -0.9) + 0.5 * face.latent[1];
    const double light = n01(rng);
    const double tone = n01(rng);

    Shape unit = canonical_face_shape(face.latent);
    for (Eigen::Index i = 0; i < unit.coords.size(); ++i) {
        unit.coords[i] += 0.01 * n01(rng);
    }

    // pose
    const double jitter = config.pose_jitter;
    const double scale = config.face_size / face_size(unit) * (1.0 + 0.04 * jitter * n01(rng));
    const double angle = jitter * 3.0 * std::numbers::pi / 180.0 * n01(rng);
    const Eigen::Vector2d centre(config.image_size / 2.0 + jitter * n01(rng),
                                 config.image_size / 2.0 + 0.5 + jitter * n01(rng));
    const Eigen::Matrix2d R = Eigen::Rotation2Dd(angle).toRotationMatrix();
    Shape shape(VectorXd(2 * kNumLandmarks));
    for (int i = 0; i < kNumLandmarks; ++i) {
        const Eigen::Vector2d p = scale * (R * unit.point(i)) + centre;
        shape.set_point(i, {snap(p.x()), snap(p.y())});
    }

    // appearance, coupled to the shape factors
    const double skin = 150.0 + 14.0 * face.latent[0] + 8.0 * tone;
    const double pupil = 40.0 + 12.0 * face.latent[2];
    const double brow = 75.0 - 14.0 * face.latent[3];
    const double lips = skin - 45.0 + 8.0 * face.latent[1];
    const double mouth = 35.0;

    const int big = config.image_size * kSupersample;
    const double ss = kSupersample;
    cv::Mat canvas(big, big, CV_32F);
    for (int y = 0; y < big; ++y) {
        for (int x = 0; x < big; ++x) {
            const double u = x / ss / config.image_size;
            const double v = y / ss / config.image_size;
            canvas.at<float>(y, x) = static_cast<float>(55.0 + 25.0 * u + 10.0 * std::sin(6.0 * v + 2.0 * u));
        }
    }

    // face region: jaw plus a forehead arc above the brows
    cv::Mat mask = cv::Mat::zeros(big, big, CV_8U);
    {
        std::vector<cv::Point> poly = to_points(shape, 0, 16, ss);
        const Eigen::Vector2d left = shape.point(0), right = shape.point(16);
        const Eigen::Vector2d mid = 0.5 * (left + right);
        const Eigen::Vector2d up = R * Eigen::Vector2d(0.0, -1.0);
        const double rx = 0.5 * (right - left).norm();
        for (int k = 1; k < 16; ++k) {
            const double t = std::numbers::pi * k / 16.0;
            const Eigen::Vector2d p = mid + std::cos(t) * (right - mid) + std::sin(t) * 0.8 * rx * up;
            poly.emplace_back(static_cast<int>(std::lround(p.x() * ss * 16.0)),
                              static_cast<int>(std::lround(p.y() * ss * 16.0)));
        }
        fill(mask, poly, 255.0);
    }
    const Eigen::Vector2d c0 = centroid(shape);
    const Eigen::Vector2d lx = R * Eigen::Vector2d(1.0, 0.0);
    for (int y = 0; y < big; ++y) {
        for (int x = 0; x < big; ++x) {
            if (mask.at<std::uint8_t>(y, x)) {
                const Eigen::Vector2d p(x / ss - c0.x(), y / ss - c0.y());
                const double shade = 18.0 * light * p.dot(lx) / config.face_size;
                canvas.at<float>(y, x) = static_cast<float>(skin + shade);
            }
        }
    }

    const int thick = std::max(1, static_cast<int>(std::lround(0.07 * scale * ss)));
    std::vector<std::vector<cv::Point>> brows{to_points(shape, 17, 21, ss), to_points(shape, 22, 26, ss)};
    cv::polylines(canvas, brows, false, cv::Scalar(brow), thick, cv::LINE_8, 4);
    std::vector<std::vector<cv::Point>> bridge{to_points(shape, 27, 30, ss)};
    cv::polylines(canvas, bridge, false, cv::Scalar(skin - 25.0), std::max(1, thick / 2), cv::LINE_8, 4);
    fill(canvas, to_points(shape, 31, 35, ss), skin - 40.0);
    for (int e = 0; e < 2; ++e) {
        const int o = 36 + 6 * e;
        fill(canvas, to_points(shape, o, o + 5, ss), 215.0);
        Eigen::Vector2d c = Eigen::Vector2d::Zero();
        for (int i = o; i < o + 6; ++i) {
            c += shape.point(i);
        }
        c /= 6.0;
        const double eye_h = 0.5 * ((shape.point(o + 5) - shape.point(o + 1)).norm() +
                                    (shape.point(o + 4) - shape.point(o + 2)).norm());
        const int radius = std::max(1, static_cast<int>(std::lround(0.45 * eye_h * ss * 16.0)));
        cv::circle(canvas, cv::Point(static_cast<int>(std::lround(c.x() * ss * 16.0)),
                                     static_cast<int>(std::lround(c.y() * ss * 16.0))),
                   radius, cv::Scalar(pupil), cv::FILLED, cv::LINE_8, 4);
    }
    fill(canvas, to_points(shape, 48, 59, ss), lips);
    fill(canvas, to_points(shape, 60, 67, ss), mouth);

    cv::Mat small;
    cv::resize(canvas, small, cv::Size(config.image_size, config.image_size), 0, 0, cv::INTER_AREA);
    cv::GaussianBlur(small, small, cv::Size(0, 0), 0.8);

    face.image = GrayImage(config.image_size, config.image_size);
    std::normal_distribution<double> noise(0.0, config.noise_stddev);
    for (int y = 0; y < config.image_size; ++y) {
        for (int x = 0; x < config.image_size; ++x) {
            const double v = small.at<float>(y, x) + (config.noise_stddev > 0.0 ? noise(rng) : 0.0);
            face.image.at(x, y) = std::clamp(std::round(v), 0.0, 255.0);
        }
    }
    face.shape = std::move(shape);
    return face;
}

SyntheticCorpus generate_corpus(const SyntheticConfig& config)
{
    if (config.num_train < 0 || config.num_test < 0) {
        throw Error("generate_corpus: negative corpus size");
    }
    SyntheticCorpus corpus;
    auto make_id = [](const char* prefix, int i) {
        std::string n = std::to_string(i);
        return std::string(prefix) + std::string(4 - std::min<std::size_t>(4, n.size()), '0') + n;
    };
    for (int i = 0; i < config.num_train; ++i) {
        corpus.train.push_back(generate_face(config, split_seed(config.seed, static_cast<std::uint64_t>(i)),
                                             make_id("train_", i)));
    }
    for (int i = 0; i < config.num_test; ++i) {
        corpus.test.push_back(generate_face(config, split_seed(config.seed, 1'000'000ULL + i), make_id("test_", i)));
    }
    return corpus;
}

Rect add_occlusion(GrayImage& image, const Shape& shape, double area_fraction, double intensity, Rng& rng)
{
    if (area_fraction <= 0.0 || area_fraction > 1.0) {
        throw Error("add_occlusion: area fraction must be in (0, 1]");
    }
    const auto [lo, hi] = bounding_box(shape);
    const Eigen::Vector2d d = hi - lo;
    const int side = std::max(1, static_cast<int>(std::lround(std::sqrt(area_fraction * d.x() * d.y()))));
    std::uniform_real_distribution<double> ux(lo.x(), std::max(lo.x(), hi.x() - side));
    std::uniform_real_distribution<double> uy(lo.y(), std::max(lo.y(), hi.y() - side));
    Rect r{static_cast<int>(std::lround(ux(rng))), static_cast<int>(std::lround(uy(rng))), side, side};
    for (int y = std::max(0, r.y); y < std::min(image.height(), r.y + r.height); ++y) {
        for (int x = std::max(0, r.x); x < std::min(image.width(), r.x + r.width); ++x) {
            image.at(x, y) = intensity;
        }
    }
    return r;
}

} // namespace dam
