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

#include <functional>
#include <string>
#include <vector>

namespace dam {

double rmse(const VectorXd& a, const VectorXd& b);
/// 20 log10(peak / rmse); +infinity when the inputs are identical.
double psnr(const VectorXd& a, const VectorXd& b, double peak = 255.0);

/// Average over alpha x alpha blocks; partial blocks at the border average what
/// they cover.
GrayImage downsample_box(const GrayImage& image, int alpha);
GrayImage upsample_bicubic(const GrayImage& image, int width, int height);

/// Frame image of `texture` (unmasked pixels filled with the texture mean),
/// box-downsampled by alpha.
GrayImage low_resolution_input(const Texture& texture, const ReferenceFrame& ref, int alpha);

/// Bicubic upsampling of a low-resolution shape-free image to the frame, read
/// back at the masked pixels. This is the baseline super_resolve improves on.
Texture bicubic_texture(const GrayImage& low_res, const ReferenceFrame& ref);

inline constexpr int kDefaultReconstructionSweeps = 50;

Texture super_resolve(const GrayImage& low_res, const Shape& shape, const DamModel& model, const ReferenceFrame& ref,
                      int sweeps = kDefaultReconstructionSweeps, std::uint64_t seed = 1);

enum class ShapeClamp
{
    kInputShape, ///< clamp the (fitted or annotated) shape of the input
    kMeanShape,  ///< clamp the model's mean shape (frontal target)
};

struct CleanFace
{
    Texture texture;  // m
    Texture observed; // I_W
    VectorXd residual; // |I_W - m|, 0 at invalid pixels
    std::vector<std::uint8_t> valid;
};

CleanFace reconstruct_clean_face(const GrayImage& image, const Shape& shape, const DamModel& model,
                                 const ReferenceFrame& ref, int sweeps = kDefaultReconstructionSweeps,
                                 std::uint64_t seed = 1, ShapeClamp clamp = ShapeClamp::kInputShape);

// ---------------------------------------------------------------------------
// Alignment evaluation

struct AlignmentCase
{
    std::string id;
    const GrayImage* image = nullptr;
    Shape truth;
    Shape init;
};

using Fitter = std::function<FitTrace(const GrayImage&, const Shape&)>;

struct EvalRow
{
    std::string id;
    double error = 0.0; // +infinity for failures
    bool failed = false;
};

struct CedPoint
{
    double threshold = 0.0;
    double fraction = 0.0;
};

struct EvalReport
{
    std::vector<EvalRow> rows;
    double mean = 0.0;
    double median = 0.0;
    int failures = 0;
    std::vector<CedPoint> ced;
};

/// 0, 0.005, ..., 0.2.
std::vector<double> default_ced_thresholds();

/// Fraction of errors <= each threshold; a final +infinity threshold is
/// appended so the curve ends at 1.
std::vector<CedPoint> cumulative_error_distribution(const std::vector<double>& errors,
                                                    const std::vector<double>& thresholds);

/// Runs `fitter` from each case's init. Aborted fits count as failures with
/// error +infinity. `jobs` > 1 fits faces concurrently.
EvalReport evaluate_alignment(const Fitter& fitter, const std::vector<AlignmentCase>& cases, int jobs = 1,
                              const std::vector<double>& thresholds = default_ced_thresholds());

std::string eval_csv(const EvalReport& report);
std::string ced_csv(const EvalReport& report);

// ---------------------------------------------------------------------------

/// Rows of shapes and shape-free textures for DAM training.
struct TrainingSet
{
    MatrixXd shapes;
    MatrixXd textures;
};
TrainingSet extract_training_set(const std::vector<const GrayImage*>& images, const std::vector<Shape>& shapes,
                                 const ReferenceFrame& ref);

/// Runs f(i) for i in [0, n) on up to `jobs` threads.
void parallel_for(int n, int jobs, const std::function<void(int)>& f);

} // namespace dam
