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
#include "dam/geometry.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace dam {

struct FitIteration
{
    Shape shape;                // shape after this iteration's update
    double residual_norm = 0.0; // ||I_W - m|| over valid pixels
    double step_norm = 0.0;     // ||delta s||_inf
    int invalid_pixels = 0;
};

struct FitTrace
{
    std::vector<FitIteration> iterations;
    Shape final_shape;
    bool converged = false;
    bool aborted = false;
    std::string abort_reason;
};

/// Space the Gauss-Newton increment lives in. kFull solves for every landmark
/// coordinate; kSimilarity restricts the increment to scale, rotation and
/// translation of the reference mean shape.
enum class UpdateBasis
{
    kFull,
    kSimilarity,
};

/// Orthonormal 2N x 4 basis of similarity increments about the reference mean shape.
MatrixXd similarity_basis(const ReferenceFrame& ref);

struct FitConfig
{
    int max_iterations = 30;
    UpdateBasis basis = UpdateBasis::kSimilarity;
    double tolerance = 1e-2; // pixels, on ||delta s||_inf
    int gibbs_sweeps = 10;
    double max_invalid_fraction = 0.5;
    std::uint64_t seed = 1;
};

/// Everything a fitter needs besides the image.
struct FitModel
{
    const DamModel* model = nullptr;
    const ReferenceFrame* frame = nullptr;
};

/// Solution of (J^T J + eps I) d = -J^T r with eps = max(1e-6 trace(J^T J) / n, 1e-12).
struct GaussNewtonStep
{
    VectorXd delta;
    double ridge = 0.0;
    bool ok = true;
};
GaussNewtonStep gauss_newton_step(const MatrixXd& jacobian, const VectorXd& residual);

/// Gauss-Newton on ||I(W(W(r; d), s)) - m||^2 with the increment composed into s.
FitTrace fit_forward_compositional(const GrayImage& image, const Shape& init, const FitModel& fm,
                                   const FitConfig& config = {});

// ---------------------------------------------------------------------------
// Sparse coding

struct SparseCodeConfig
{
    double tolerance = 1e-6; // KKT violation
    int max_sweeps = 10000;
    bool relative = false; // tolerance multiplied by max(1, ||D^T x||_inf)
};

/// Coordinate-descent LASSO on ||x - D c||^2 + lambda ||c||_1 with a precomputed Gram matrix.
class SparseCoder
{
public:
    SparseCoder() = default;
    explicit SparseCoder(MatrixXd dictionary, SparseCodeConfig config = {});

    VectorXd encode(const VectorXd& x, double lambda, const VectorXd* warm_start = nullptr) const;
    /// max_j KKT violation of c for x: |g_j| - lambda/2 off the support and
    /// |g_j - lambda/2 sign(c_j)| on it, with g = D^T (x - D c).
    double kkt_violation(const VectorXd& x, const VectorXd& c, double lambda) const;

    const MatrixXd& dictionary() const { return dictionary_; }

private:
    MatrixXd dictionary_;
    MatrixXd gram_;
    SparseCodeConfig config_;
};

VectorXd sparse_code(const VectorXd& x, const MatrixXd& dictionary, double lambda, const SparseCodeConfig& config = {});
double lasso_objective(const VectorXd& x, const MatrixXd& dictionary, const VectorXd& c, double lambda);

// ---------------------------------------------------------------------------
// Dictionary learning

struct DictPair
{
    MatrixXd image_dictionary;          // D_I, K x l
    MatrixXd reconstruction_dictionary; // D_m, K x l
    double lambda = 0.0;

    int atoms() const { return static_cast<int>(image_dictionary.cols()); }
    bool operator==(const DictPair&) const = default;
};

struct DictLearnConfig
{
    int atoms = 128;
    double lambda = 0.0; // <= 0: 0.1 * mean_i max|D0^T x_i| over the stacked training pairs
    int max_outer = 30;
    double relative_tolerance = 1e-4;
    std::uint64_t seed = 1;
    const MatrixXd* init_image_dictionary = nullptr;
    const MatrixXd* init_reconstruction_dictionary = nullptr;
};

struct DictLearnResult
{
    DictPair dictionaries;
    MatrixXd codes;                // l x N
    std::vector<double> objective; // joint objective after initial coding and after each outer iteration
    int outer_iterations = 0;
    bool converged = false;
    bool degenerate_codes = false; // some atom unused by every sample
};

/// Joint objective (1/N) sum_i ||y_i - D_I c_i||^2 + ||m_i - D_m c_i||^2 + lambda ||c_i||_1.
double dictionary_objective(const MatrixXd& Y, const MatrixXd& M, const MatrixXd& D_I, const MatrixXd& D_m,
                            const MatrixXd& C, double lambda);

/// Alternating four-step scheme. Columns of Y and M are the shape-free images and
/// their reconstructions at ground-truth shapes.
DictLearnResult learn_fitting_dictionaries(const MatrixXd& Y, const MatrixXd& M, const DictLearnConfig& config);

// ---------------------------------------------------------------------------
// Regression fitter

struct UpdateRegressor
{
    MatrixXd H; // 2N x l
    VectorXd b; // 2N

    VectorXd apply(const VectorXd& features) const { return H * features + b; }
    bool operator==(const UpdateRegressor&) const = default;
};

struct RegressorFit
{
    UpdateRegressor regressor;
    double ridge = 0.0;
    double training_residual = 0.0; // sum of squared residuals
    double zero_residual = 0.0;     // same for H = 0, b = 0
    bool ridge_increased = false;
};

/// Ridge least squares for targets ~ H features + b on column samples. The ridge
/// is ridge_scale * trace(Xc Xc^T) / l on centred features Xc.
RegressorFit fit_linear_regressor(const MatrixXd& features, const MatrixXd& targets, double ridge_scale = 1e-4);

struct PerturbationConfig
{
    double max_translation = 0.10; // fraction of face size
    double min_scale = 0.9;
    double max_scale = 1.1;
    double max_rotation_deg = 10.0;
    int per_face = 10;
};

/// Random similarity perturbation about the shape's centroid.
Shape perturb_shape(const Shape& shape, const PerturbationConfig& config, Rng& rng);

struct RegressorTrainingFace
{
    const GrayImage* image = nullptr;
    Shape truth;
};

struct RegressorTrainConfig
{
    PerturbationConfig perturbation;
    int gibbs_sweeps = 10;
    double ridge_scale = 1e-4;
    UpdateBasis basis = UpdateBasis::kSimilarity; // targets projected onto this space before the fit
    // Occluder augmentation: each perturbed sample gets a random box covering this
    // fraction of the face box with probability occlusion_probability.
    double occlusion_area = 0.0;
    double occlusion_probability = 0.5;
    std::uint64_t seed = 1;
};

/// Features f(I_W) - f(m) at perturbed shapes, targets are the reference-frame
/// increments that compose the perturbed shape back onto the truth.
RegressorFit train_shape_regressor(const std::vector<RegressorTrainingFace>& faces, const DictPair& dict,
                                   const FitModel& fm, const RegressorTrainConfig& config);

/// Shape-free image and reconstruction at a given shape.
struct TexturePair
{
    WarpResult warp;
    Texture reconstruction;
};
TexturePair texture_pair(const GrayImage& image, const Shape& shape, const FitModel& fm, int sweeps,
                         std::uint64_t seed);

/// c1 - c2 with c1 = f(I_W) over D_I and c2 = f(m) over D_m.
VectorXd code_difference(const TexturePair& pair, const DictPair& dict, const SparseCoder& image_coder,
                         const SparseCoder& reconstruction_coder);

struct DictFitConfig
{
    int max_iterations = 10;
    double tolerance = 1e-2;
    int gibbs_sweeps = 10;
    double max_invalid_fraction = 0.5;
    std::uint64_t seed = 1;
};

FitTrace fit_dictionary_regression(const GrayImage& image, const Shape& init, const FitModel& fm,
                                   const DictPair& dict, const UpdateRegressor& regressor,
                                   const DictFitConfig& config = {});

/// CSV: iteration,residual,step_norm,normalized_error (the last column empty
/// without ground truth).
std::string fit_trace_csv(const FitTrace& trace, const std::optional<Shape>& truth = {});

/// Mean landmark distance divided by sqrt(w * h) of the truth's bounding box.
double normalized_error(const Shape& fitted, const Shape& truth);

} // namespace dam
