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

#include <cstdint>
#include <vector>

namespace dam {

/// Gaussian-Bernoulli RBM: real visible units with per-unit std sigma, binary hiddens.
struct GrbmParams
{
    MatrixXd weights;       // V x F
    VectorXd visible_bias;  // V
    VectorXd sigma;         // V, strictly positive
    VectorXd hidden_bias;   // F

    static GrbmParams zeros(int visible, int hidden);

    int num_visible() const { return static_cast<int>(weights.rows()); }
    int num_hidden() const { return static_cast<int>(weights.cols()); }
    void validate() const;
    bool operator==(const GrbmParams&) const = default;
};

/// Binary-binary RBM between a lower and an upper hidden layer.
struct BinRbmParams
{
    MatrixXd weights;     // F_lower x F_upper
    VectorXd lower_bias;
    VectorXd upper_bias;

    static BinRbmParams zeros(int lower, int upper);

    int num_lower() const { return static_cast<int>(weights.rows()); }
    int num_upper() const { return static_cast<int>(weights.cols()); }
    void validate() const;
    bool operator==(const BinRbmParams&) const = default;
};

double logistic(double x);
VectorXd logistic(const VectorXd& x);

/// E(v, h) = sum (v-b)^2 / 2 sigma^2 - sum (v/sigma) W h - c.h
double grbm_energy(const VectorXd& v, const VectorXd& h, const GrbmParams& p);

/// W^T (v / sigma) + c + top_down. An empty `top_down` means zero.
VectorXd grbm_hidden_preactivation(const VectorXd& v, const GrbmParams& p, const VectorXd& top_down = {});
VectorXd grbm_hidden_given_visible(const VectorXd& v, const GrbmParams& p, const VectorXd& top_down = {});

struct Gaussian
{
    VectorXd mean;
    VectorXd stddev;
};

/// v | h ~ N(sigma * (W h) + b, sigma^2)
Gaussian grbm_visible_given_hidden(const VectorXd& h, const GrbmParams& p);

VectorXd sample_gaussian(const Gaussian& g, Rng& rng);
VectorXd sample_bernoulli(const VectorXd& probabilities, Rng& rng);

/// E(l, u) = - l^T W u - a.l - c.u
double bin_energy(const VectorXd& lower, const VectorXd& upper, const BinRbmParams& p);

enum class Direction
{
    kUp,   ///< p(upper | lower), pre-activation W^T l + c
    kDown, ///< p(lower | upper), pre-activation W u + a
};

VectorXd bin_preactivation(const VectorXd& other, const BinRbmParams& p, Direction direction,
                           const VectorXd& extra = {});
VectorXd bin_conditionals(const VectorXd& other, const BinRbmParams& p, Direction direction,
                          const VectorXd& extra = {});

/// Per-dimension affine map to zero mean / unit variance.
struct Standardizer
{
    VectorXd mean;
    VectorXd scale;

    static Standardizer identity(int dims);
    /// Fits on the rows of `data`; scales below `min_scale` are raised to it.
    static Standardizer fit(const MatrixXd& data, double min_scale = 1e-8);

    VectorXd apply(const VectorXd& x) const;
    VectorXd invert(const VectorXd& u) const;
    MatrixXd apply_rows(const MatrixXd& rows) const;
    int dims() const { return static_cast<int>(mean.size()); }
    bool operator==(const Standardizer&) const = default;
};

struct CdConfig
{
    double learning_rate = 1e-3;
    double initial_momentum = 0.5;
    double final_momentum = 0.9;
    int momentum_switch_epoch = 5;
    double weight_decay = 2e-4;
    int cd_steps = 1;
    int batch_size = 64;
    int epochs = 600;
    double init_scale = 0.01;
    bool learn_hidden_bias = true; // false pins hidden biases at 0
    bool standardize = true;       // GRBM only
    bool learn_sigma = false;      // GRBM only; steps on log sigma
    double sigma_learning_rate = 1e-3;
    double min_sigma = 0.05;
    std::uint64_t seed = 1;
};

struct EpochStats
{
    int epoch = 0;
    double reconstruction_error = 0.0;
    double parameter_norm = 0.0;
};

struct GrbmTrainResult
{
    GrbmParams params;
    Standardizer scaler;
    std::vector<EpochStats> log;
};

struct BinRbmTrainResult
{
    BinRbmParams params;
    std::vector<EpochStats> log;
};

/// States visited by one CD-k estimate for a minibatch (rows are samples).
struct CdSample
{
    MatrixXd visible_data;
    MatrixXd hidden_data;   // p(h | v_data)
    MatrixXd visible_model; // reconstruction after k steps
    MatrixXd hidden_model;  // p(h | v_model)
};

/// CD-k gradient of the log-likelihood (ascent direction) averaged over the rows
/// of `batch`. Visible reconstructions use the conditional mean; the sigma
/// gradient averages the model term over v | h in closed form.
GrbmParams grbm_cd_gradient(const MatrixXd& batch, const GrbmParams& p, int steps, Rng& rng,
                            CdSample* sample = nullptr);
BinRbmParams bin_cd_gradient(const MatrixXd& batch, const BinRbmParams& p, int steps, Rng& rng,
                             CdSample* sample = nullptr);

/// Layer-wise CD pretraining. The GRBM variant standardizes the data first (when
/// configured) and trains with sigma fixed at 1 in standardized space unless
/// learn_sigma is set.
GrbmTrainResult pretrain_grbm(const MatrixXd& data, int hidden, const CdConfig& config,
                              const GrbmParams* init = nullptr);
BinRbmTrainResult pretrain_binary(const MatrixXd& data, int hidden, const CdConfig& config,
                                  const BinRbmParams* init = nullptr);

GrbmParams random_grbm(int visible, int hidden, double scale, Rng& rng);
BinRbmParams random_bin_rbm(int lower, int upper, double scale, Rng& rng);

// ---------------------------------------------------------------------------
// Exact enumeration over hidden configurations; tiny models only.

inline constexpr int kMaxExactHidden = 12;

struct ExactGrbm
{
    double log_partition = 0.0;
    VectorXd hidden_marginals;
    VectorXd visible_mean;
};

struct ExactBinRbm
{
    double log_partition = 0.0;
    VectorXd lower_marginals;
    VectorXd upper_marginals;
};

/// log Z sums over all 2^F hidden states with the visible integrated in closed form.
ExactGrbm exact_oracle(const GrbmParams& p);
/// log Z sums over all 2^F_upper states with the lower layer summed in closed form.
ExactBinRbm exact_oracle(const BinRbmParams& p);

/// p(h_j = 1 | v) by normalising exp(-E(v, h)) over every h.
VectorXd exact_hidden_posterior(const VectorXd& v, const GrbmParams& p);
VectorXd exact_conditional(const VectorXd& other, const BinRbmParams& p, Direction direction);

double grbm_free_energy(const VectorXd& v, const GrbmParams& p);
double grbm_log_likelihood(const VectorXd& v, const GrbmParams& p);
/// d log p(v) / d theta for W, b and c using exact model expectations.
GrbmParams grbm_log_likelihood_gradient(const VectorXd& v, const GrbmParams& p);

std::uint32_t checked_hidden_states(int hidden);

} // namespace dam
