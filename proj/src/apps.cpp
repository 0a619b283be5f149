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
#include "dam/apps.hpp"

#include "dam/data_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

namespace dam {

namespace {

cv::Mat to_mat(const GrayImage& img)
{
    cv::Mat m(img.height(), img.width(), CV_64F);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            m.at<double>(y, x) = img.at(x, y);
        }
    }
    return m;
}

GrayImage from_mat(const cv::Mat& m)
{
    GrayImage img(m.cols, m.rows);
    for (int y = 0; y < m.rows; ++y) {
        for (int x = 0; x < m.cols; ++x) {
            img.at(x, y) = m.at<double>(y, x);
        }
    }
    return img;
}

} // namespace

double rmse(const VectorXd& a, const VectorXd& b)
{
    require_size(b.size(), a.size(), "rmse");
    if (a.size() == 0) {
        throw DimensionError("rmse: empty input");
    }
    return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size()));
}

double psnr(const VectorXd& a, const VectorXd& b, double peak)
{
    const double e = rmse(a, b);
    if (e == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return 20.0 * std::log10(peak / e);
}

GrayImage downsample_box(const GrayImage& image, int alpha)
{
    if (alpha < 1) {
        throw Error("downsample_box: factor must be >= 1");
    }
    const int w = (image.width() + alpha - 1) / alpha;
    const int h = (image.height() + alpha - 1) / alpha;
    GrayImage out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int x1 = std::min(image.width(), (x + 1) * alpha);
            const int y1 = std::min(image.height(), (y + 1) * alpha);
            out.at(x, y) = image.pixels.block(y * alpha, x * alpha, y1 - y * alpha, x1 - x * alpha).mean();
        }
    }
    return out;
}

GrayImage upsample_bicubic(const GrayImage& image, int width, int height)
{
    if (image.width() < 2 || image.height() < 2) {
        throw Error("upsample_bicubic: input must be at least 2 x 2 pixels");
    }
    if (image.width() == width && image.height() == height) {
        return image;
    }
    cv::Mat up;
    cv::resize(to_mat(image), up, cv::Size(width, height), 0, 0, cv::INTER_CUBIC);
    return from_mat(up);
}

GrayImage low_resolution_input(const Texture& texture, const ReferenceFrame& ref, int alpha)
{
    require_size(texture.size(), ref.num_pixels(), "low_resolution_input texture");
    return downsample_box(texture_to_frame_image(texture, ref, texture.mean()), alpha);
}

Texture bicubic_texture(const GrayImage& low_res, const ReferenceFrame& ref)
{
    return frame_image_to_texture(upsample_bicubic(low_res, ref.size.width, ref.size.height), ref);
}

Texture super_resolve(const GrayImage& low_res, const Shape& shape, const DamModel& model, const ReferenceFrame& ref,
                      int sweeps, std::uint64_t seed)
{
    if (sweeps < 1) {
        throw Error("super_resolve: sweeps must be >= 1");
    }
    return reconstruct_texture_mean(shape.coords, bicubic_texture(low_res, ref), model, sweeps, seed);
}

CleanFace reconstruct_clean_face(const GrayImage& image, const Shape& shape, const DamModel& model,
                                 const ReferenceFrame& ref, int sweeps, std::uint64_t seed, ShapeClamp clamp)
{
    const WarpResult w = warp_to_texture(image, shape, ref);
    const VectorXd clamped = clamp == ShapeClamp::kInputShape ? shape.coords : model.shape_scaler.mean;
    CleanFace out;
    out.texture = reconstruct_texture_mean(clamped, w.texture, model, sweeps, seed);
    out.observed = w.texture;
    out.residual = (w.texture - out.texture).cwiseAbs();
    for (Eigen::Index k = 0; k < out.residual.size(); ++k) {
        if (!w.valid[k]) {
            out.residual[k] = 0.0;
        }
    }
    out.valid = w.valid;
    return out;
}

std::vector<double> default_ced_thresholds()
{
    std::vector<double> t;
    for (int i = 0; i <= 40; ++i) {
        t.push_back(0.005 * i);
    }
    return t;
}

std::vector<CedPoint> cumulative_error_distribution(const std::vector<double>& errors,
                                                    const std::vector<double>& thresholds)
{
    std::vector<double> sorted_t = thresholds;
    std::sort(sorted_t.begin(), sorted_t.end());
    sorted_t.push_back(std::numeric_limits<double>::infinity());
    std::vector<CedPoint> ced;
    const double n = static_cast<double>(errors.size());
    for (double t : sorted_t) {
        const auto count = std::count_if(errors.begin(), errors.end(), [t](double e) { return e <= t; });
        ced.push_back({t, n > 0 ? static_cast<double>(count) / n : 1.0});
    }
    return ced;
}

void parallel_for(int n, int jobs, const std::function<void(int)>& f)
{
    jobs = std::max(1, std::min(jobs, n));
    if (jobs == 1) {
        for (int i = 0; i < n; ++i) {
            f(i);
        }
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) {
        pool.emplace_back([&]() {
            for (int i = next++; i < n; i = next++) {
                try {
                    f(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) {
                        error = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& th : pool) {
        th.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

EvalReport evaluate_alignment(const Fitter& fitter, const std::vector<AlignmentCase>& cases, int jobs,
                              const std::vector<double>& thresholds)
{
    EvalReport report;
    report.rows.resize(cases.size());
    parallel_for(static_cast<int>(cases.size()), jobs, [&](int i) {
        const AlignmentCase& c = cases[i];
        EvalRow& row = report.rows[i];
        row.id = c.id;
        FitTrace trace;
        try {
            trace = fitter(*c.image, c.init);
        } catch (const Error&) {
            trace.aborted = true;
        }
        if (trace.aborted) {
            row.failed = true;
            row.error = std::numeric_limits<double>::infinity();
        } else {
            row.error = normalized_error(trace.final_shape, c.truth);
        }
    });
    std::vector<double> errors;
    for (const EvalRow& r : report.rows) {
        errors.push_back(r.error);
        report.failures += r.failed ? 1 : 0;
    }
    if (!errors.empty()) {
        double sum = 0.0;
        for (double e : errors) {
            sum += e;
        }
        report.mean = sum / static_cast<double>(errors.size());
        std::vector<double> sorted = errors;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t n = sorted.size();
        report.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    }
    report.ced = cumulative_error_distribution(errors, thresholds);
    return report;
}

std::string eval_csv(const EvalReport& report)
{
    std::string out = "face_id,error\n";
    for (const EvalRow& r : report.rows) {
        out += r.id + "," + (r.failed ? std::string("inf") : format_double(r.error)) + "\n";
    }
    return out;
}

std::string ced_csv(const EvalReport& report)
{
    std::string out = "threshold,fraction\n";
    for (const CedPoint& p : report.ced) {
        out += (std::isinf(p.threshold) ? std::string("inf") : format_double(p.threshold)) + "," +
               format_double(p.fraction) + "\n";
    }
    return out;
}

TrainingSet extract_training_set(const std::vector<const GrayImage*>& images, const std::vector<Shape>& shapes,
                                 const ReferenceFrame& ref)
{
    if (images.size() != shapes.size() || images.empty()) {
        throw DimensionError("extract_training_set: need matching, nonempty images and shapes");
    }
    TrainingSet set;
    const auto n = static_cast<Eigen::Index>(images.size());
    set.shapes.resize(n, shapes.front().coords.size());
    set.textures.resize(n, ref.num_pixels());
    for (Eigen::Index i = 0; i < n; ++i) {
        require_size(shapes[i].coords.size(), set.shapes.cols(), "extract_training_set shape");
        set.shapes.row(i) = shapes[i].coords.transpose();
        set.textures.row(i) = warp_to_texture(*images[i], shapes[i], ref).texture.transpose();
    }
    return set;
}

} // namespace dam
