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
#include "dam/rbm.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace dam {

struct LayerSizes
{
    int shape_visible = 136;
    int shape_hidden1 = 50;
    int shape_hidden2 = 25;
    int texture_visible = 0;
    int texture_hidden1 = 200;
    int texture_hidden2 = 100;
    int joint = 50;

    int total_hidden() const
    {
        return shape_hidden1 + shape_hidden2 + texture_hidden1 + texture_hidden2 + joint;
    }
    bool operator==(const LayerSizes&) const = default;
};

/// One two-layer stack: a GRBM over the observations and a binary layer above it.
/// `bottom.hidden_bias` is the bias of the first hidden layer.
struct StackParams
{
    GrbmParams bottom;
    MatrixXd upper_weights; // F1 x F2
    VectorXd upper_bias;    // F2

    bool operator==(const StackParams&) const = default;
};

/// Shape stack, texture stack and the joint layer on top of both second layers.
/// Parameters live in model (standardized) coordinates.
struct DamParams
{
    StackParams shape;
    StackParams texture;
    MatrixXd joint_shape_weights;   // F_s2 x F3
    MatrixXd joint_texture_weights; // F_g2 x F3
    VectorXd joint_bias;            // F3

    static DamParams zeros(const LayerSizes& sizes);
    static DamParams random(const LayerSizes& sizes, double scale, Rng& rng);

    LayerSizes sizes() const;
    void validate() const;
    double norm() const;
    bool operator==(const DamParams&) const = default;
};

enum class Group : int
{
    kShape = 0,
    kTexture,
    kShapeH1,
    kShapeH2,
    kTextureH1,
    kTextureH2,
    kJoint,
};
inline constexpr int kNumGroups = 7;

/// Configuration of every unit in the model.
struct DamState
{
    std::array<VectorXd, kNumGroups> groups;

    VectorXd& operator[](Group g) { return groups[static_cast<int>(g)]; }
    const VectorXd& operator[](Group g) const { return groups[static_cast<int>(g)]; }

    static DamState zeros(const LayerSizes& sizes);
};

/// Sum of shape-stack, texture-stack and joint-layer energies.
double dam_energy(const DamState& state, const DamParams& p);

/// Pre-activation of a hidden group given its neighbours in `state`.
VectorXd dam_preactivation(Group g, const DamState& state, const DamParams& p);

/// Conditional of a group given the rest: Bernoulli probabilities for hidden
/// groups, the Gaussian mean for the two visible groups.
VectorXd dam_conditional(Group g, const DamState& state, const DamParams& p);

struct MeanFieldConfig
{
    int max_iterations = 50;
    double tolerance = 1e-6;
    double damping = 0.0; // new = (1 - damping) * update + damping * old
};

/// Variational parameters for the five hidden groups.
struct MeanFieldState
{
    VectorXd shape_h1, shape_h2, texture_h1, texture_h2, joint;
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
    std::vector<double> residual_history;

    /// State with visibles (s, g) and hiddens replaced by mu.
    DamState as_state(const VectorXd& s, const VectorXd& g) const;
};

using MeanFieldObserver = std::function<void(const MeanFieldState&)>;

/// Fixed-point iteration in the order mu_s1, mu_g1, mu_s2, mu_g2, mu3, starting
/// from 0.5 everywhere (or `init`). Non-convergence is reported, not thrown.
MeanFieldState mean_field_infer(const VectorXd& s, const VectorXd& g, const DamParams& p,
                                const MeanFieldConfig& config = {}, const MeanFieldState* init = nullptr,
                                const MeanFieldObserver& observer = {});

/// -E(s, g, mu) + H(mu); adding -log Z gives the variational lower bound.
double mean_field_bound(const VectorXd& s, const VectorXd& g, const MeanFieldState& mf, const DamParams& p);

struct GibbsChain
{
    DamState state;
    std::array<bool, kNumGroups> clamped{};
    Rng rng;

    bool is_clamped(Group g) const { return clamped[static_cast<int>(g)]; }
    void clamp(Group g, VectorXd value);
};

/// Visibles drawn from N(b, sigma^2), hiddens from Bernoulli(0.5).
GibbsChain make_chain(const DamParams& p, std::uint64_t seed);

/// One alternating sweep: {s, h_s2, g, h_g2} given the odd groups, then
/// {h_s1, h_g1, h3}. Clamped groups are never written.
void gibbs_sweep(GibbsChain& chain, const DamParams& p);

/// Model plus the standardizers that map raw shapes/textures to model coordinates.
struct DamModel
{
    DamParams params;
    Standardizer shape_scaler;
    Standardizer texture_scaler;

    static DamModel with_identity_scalers(DamParams params);
    bool operator==(const DamModel&) const = default;
};

/// Sufficient statistics -dE/dtheta (in DamParams layout) at a configuration;
/// hidden groups may hold probabilities.
DamParams state_statistics(const DamState& state, const DamParams& p);

/// Likelihood gradient E_data[-dE/dtheta] - E_model[-dE/dtheta] from averaged
/// statistics. The sigma blocks are left at zero.
DamParams likelihood_gradient(const DamParams& data_statistics, const DamParams& model_statistics);

struct DamTrainConfig
{
    int epochs = 100;
    double learning_rate = 1e-3;
    double initial_momentum = 0.5;
    double final_momentum = 0.9;
    int momentum_switch_epoch = 5;
    double weight_decay = 2e-4;
    int batch_size = 64;
    int chains = 64;
    int sweeps_per_step = 5;
    MeanFieldConfig mean_field{10, 1e-4, 0.0};
    bool learn_hidden_bias = true; // false pins hidden biases at 0
    bool learn_visible_bias = true;
    std::uint64_t seed = 1;
};

struct DamEpochStats
{
    int epoch = 0;
    double shape_error = 0.0;   // RMSE of s vs mean-field reconstruction, raw units
    double texture_error = 0.0; // RMSE of g vs mean-field reconstruction, raw units
    double parameter_norm = 0.0;
};

struct DamTrainResult
{
    DamModel model;
    std::vector<DamEpochStats> log;
};

/// Stochastic approximation of the likelihood gradient: data statistics from
/// mean-field, model statistics from persistent Gibbs chains. Rows of `shapes` and
/// `textures` are raw training examples.
DamTrainResult train_dam(const DamModel& init, const MatrixXd& shapes, const MatrixXd& textures,
                         const DamTrainConfig& config);

struct PretrainConfig
{
    LayerSizes sizes;
    CdConfig cd;
};

struct PretrainResult
{
    DamModel model;
    std::vector<EpochStats> shape_log1, shape_log2, texture_log1, texture_log2, joint_log;
};

/// Greedy layer-wise CD pretraining of both stacks and the joint layer.
PretrainResult pretrain_dam(const MatrixXd& shapes, const MatrixXd& textures, const PretrainConfig& config);

/// Mean-field reconstruction (conditional means given mu) of both modalities, raw units.
std::pair<VectorXd, VectorXd> mean_field_reconstruction(const DamModel& model, const VectorXd& shape,
                                                        const VectorXd& texture, const MeanFieldConfig& config);

// Generative properties. Inputs and outputs are raw shapes / textures.

/// Clamps g, runs `sweeps` sweeps and averages the conditional mean of s given
/// h_s1 over the last ceil(sweeps / 2) sweeps.
VectorXd infer_shape_from_texture(const VectorXd& texture, const DamModel& model, int sweeps, std::uint64_t seed);

/// Clamps s and g, equilibrates the hiddens and returns
/// m = sigma_g W1_g p(h_g1 | g, h_g2) + b_g from the final sweep.
VectorXd reconstruct_texture_mean(const VectorXd& shape, const VectorXd& texture, const DamModel& model,
                                  int sweeps, std::uint64_t seed);

/// mu3 from mean-field when the shape is present, Gibbs-averaged p(h3 | ...) with
/// only the texture clamped otherwise.
VectorXd extract_appearance_features(const std::optional<VectorXd>& shape, const VectorXd& texture,
                                     const DamModel& model, int sweeps = 50, std::uint64_t seed = 1);

struct FaceSample
{
    VectorXd shape;
    VectorXd texture;
};

std::vector<FaceSample> sample_faces(const DamModel& model, int n, int sweeps, std::uint64_t seed);

} // namespace dam
