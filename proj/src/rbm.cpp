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
#include "dam/rbm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace dam {

namespace {

double softplus(double x)
{
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double log_sum_exp(const std::vector<double>& values)
{
    const double m = *std::max_element(values.begin(), values.end());
    double s = 0.0;
    for (double v : values) {
        s += std::exp(v - m);
    }
    return m + std::log(s);
}

VectorXd bits(std::uint32_t state, int n)
{
    VectorXd h(n);
    for (int j = 0; j < n; ++j) {
        h[j] = static_cast<double>((state >> j) & 1u);
    }
    return h;
}

bool all_finite(const MatrixXd& m) { return m.allFinite(); }

std::vector<int> shuffled(int n, Rng& rng)
{
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

MatrixXd gather_rows(const MatrixXd& data, const std::vector<int>& order, int begin, int end)
{
    MatrixXd out(end - begin, data.cols());
    for (int r = begin; r < end; ++r) {
        out.row(r - begin) = data.row(order[r]);
    }
    return out;
}

MatrixXd logistic_matrix(const MatrixXd& x)
{
    return x.unaryExpr([](double v) { return logistic(v); });
}

MatrixXd sample_bernoulli_matrix(const MatrixXd& p, Rng& rng)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    MatrixXd out(p.rows(), p.cols());
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
            out(i, j) = u(rng) < p(i, j) ? 1.0 : 0.0;
        }
    }
    return out;
}

} // namespace

GrbmParams GrbmParams::zeros(int visible, int hidden)
{
    return {MatrixXd::Zero(visible, hidden), VectorXd::Zero(visible), VectorXd::Ones(visible),
            VectorXd::Zero(hidden)};
}

void GrbmParams::validate() const
{
    require_size(visible_bias.size(), weights.rows(), "GrbmParams visible_bias");
    require_size(sigma.size(), weights.rows(), "GrbmParams sigma");
    require_size(hidden_bias.size(), weights.cols(), "GrbmParams hidden_bias");
    if ((sigma.array() <= 0.0).any()) {
        throw Error("GrbmParams: sigma must be strictly positive");
    }
    if (!weights.allFinite() || !visible_bias.allFinite() || !sigma.allFinite() || !hidden_bias.allFinite()) {
        throw Error("GrbmParams: non-finite entry");
    }
}

BinRbmParams BinRbmParams::zeros(int lower, int upper)
{
    return {MatrixXd::Zero(lower, upper), VectorXd::Zero(lower), VectorXd::Zero(upper)};
}

void BinRbmParams::validate() const
{
    require_size(lower_bias.size(), weights.rows(), "BinRbmParams lower_bias");
    require_size(upper_bias.size(), weights.cols(), "BinRbmParams upper_bias");
    if (!weights.allFinite() || !lower_bias.allFinite() || !upper_bias.allFinite()) {
        throw Error("BinRbmParams: non-finite entry");
    }
}

double logistic(double x)
{
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

VectorXd logistic(const VectorXd& x)
{
    return x.unaryExpr([](double v) { return logistic(v); });
}

double grbm_energy(const VectorXd& v, const VectorXd& h, const GrbmParams& p)
{
    require_size(v.size(), p.num_visible(), "grbm_energy visible");
    require_size(h.size(), p.num_hidden(), "grbm_energy hidden");
    const VectorXd scaled = v.cwiseQuotient(p.sigma);
    const VectorXd diff = v - p.visible_bias;
    const double quad = 0.5 * diff.cwiseQuotient(p.sigma).squaredNorm();
    return quad - scaled.dot(p.weights * h) - p.hidden_bias.dot(h);
}

VectorXd grbm_hidden_preactivation(const VectorXd& v, const GrbmParams& p, const VectorXd& top_down)
{
    require_size(v.size(), p.num_visible(), "grbm_hidden_given_visible visible");
    VectorXd pre = p.weights.transpose() * v.cwiseQuotient(p.sigma) + p.hidden_bias;
    if (top_down.size() > 0) {
        require_size(top_down.size(), p.num_hidden(), "grbm_hidden_given_visible top_down");
        pre += top_down;
    }
    return pre;
}

VectorXd grbm_hidden_given_visible(const VectorXd& v, const GrbmParams& p, const VectorXd& top_down)
{
    return logistic(grbm_hidden_preactivation(v, p, top_down));
}

Gaussian grbm_visible_given_hidden(const VectorXd& h, const GrbmParams& p)
{
    require_size(h.size(), p.num_hidden(), "grbm_visible_given_hidden hidden");
    return {p.sigma.cwiseProduct(p.weights * h) + p.visible_bias, p.sigma};
}

VectorXd sample_gaussian(const Gaussian& g, Rng& rng)
{
    std::normal_distribution<double> n(0.0, 1.0);
    VectorXd out(g.mean.size());
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        out[i] = g.mean[i] + g.stddev[i] * n(rng);
    }
    return out;
}

VectorXd sample_bernoulli(const VectorXd& probabilities, Rng& rng)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    VectorXd out(probabilities.size());
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        out[i] = u(rng) < probabilities[i] ? 1.0 : 0.0;
    }
    return out;
}

double bin_energy(const VectorXd& lower, const VectorXd& upper, const BinRbmParams& p)
{
    require_size(lower.size(), p.num_lower(), "bin_energy lower");
    require_size(upper.size(), p.num_upper(), "bin_energy upper");
    return -lower.dot(p.weights * upper) - p.lower_bias.dot(lower) - p.upper_bias.dot(upper);
}

VectorXd bin_preactivation(const VectorXd& other, const BinRbmParams& p, Direction direction, const VectorXd& extra)
{
    VectorXd pre;
    if (direction == Direction::kUp) {
        require_size(other.size(), p.num_lower(), "bin_conditionals lower");
        pre = p.weights.transpose() * other + p.upper_bias;
    } else {
        require_size(other.size(), p.num_upper(), "bin_conditionals upper");
        pre = p.weights * other + p.lower_bias;
    }
    if (extra.size() > 0) {
        require_size(extra.size(), pre.size(), "bin_conditionals extra");
        pre += extra;
    }
    return pre;
}

VectorXd bin_conditionals(const VectorXd& other, const BinRbmParams& p, Direction direction, const VectorXd& extra)
{
    return logistic(bin_preactivation(other, p, direction, extra));
}

Standardizer Standardizer::identity(int dims)
{
    return {VectorXd::Zero(dims), VectorXd::Ones(dims)};
}

Standardizer Standardizer::fit(const MatrixXd& data, double min_scale)
{
    if (data.rows() == 0) {
        throw DimensionError("Standardizer::fit: no rows");
    }
    Standardizer s;
    s.mean = data.colwise().mean().transpose();
    const MatrixXd centred = data.rowwise() - s.mean.transpose();
    s.scale = (centred.array().square().colwise().sum() / static_cast<double>(data.rows())).sqrt().transpose();
    s.scale = s.scale.cwiseMax(min_scale);
    return s;
}

VectorXd Standardizer::apply(const VectorXd& x) const
{
    require_size(x.size(), mean.size(), "Standardizer::apply");
    return (x - mean).cwiseQuotient(scale);
}

VectorXd Standardizer::invert(const VectorXd& u) const
{
    require_size(u.size(), mean.size(), "Standardizer::invert");
    return u.cwiseProduct(scale) + mean;
}

MatrixXd Standardizer::apply_rows(const MatrixXd& rows) const
{
    require_size(rows.cols(), mean.size(), "Standardizer::apply_rows");
    return (rows.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

GrbmParams grbm_cd_gradient(const MatrixXd& batch, const GrbmParams& p, int steps, Rng& rng, CdSample* sample)
{
    require_size(batch.cols(), p.num_visible(), "grbm_cd_gradient");
    const double n = static_cast<double>(batch.rows());
    const VectorXd inv_sigma = p.sigma.cwiseInverse();

    auto hidden_probs = [&](const MatrixXd& v) {
        MatrixXd pre = (v * inv_sigma.asDiagonal()) * p.weights;
        pre.rowwise() += p.hidden_bias.transpose();
        return logistic_matrix(pre);
    };

    const MatrixXd h0 = hidden_probs(batch);
    MatrixXd hk = h0;
    MatrixXd vk = batch;
    MatrixXd hs;
    for (int k = 0; k < std::max(1, steps); ++k) {
        hs = sample_bernoulli_matrix(hk, rng);
        vk = (hs * p.weights.transpose()) * p.sigma.asDiagonal();
        vk.rowwise() += p.visible_bias.transpose();
        hk = hidden_probs(vk);
    }

    GrbmParams grad = GrbmParams::zeros(p.num_visible(), p.num_hidden());
    grad.sigma.setZero();
    const MatrixXd v0s = batch * inv_sigma.asDiagonal();
    const MatrixXd vks = vk * inv_sigma.asDiagonal();
    grad.weights = (v0s.transpose() * h0 - vks.transpose() * hk) / n;
    const VectorXd inv_var = inv_sigma.cwiseAbs2();
    grad.visible_bias = ((batch.colwise().sum() - vk.colwise().sum()).transpose() / n).cwiseProduct(inv_var);
    grad.hidden_bias = (h0.colwise().sum() - hk.colwise().sum()).transpose() / n;

    // d(-E)/d(sigma). The model term averages over v | h analytically, which
    // leaves 1/sigma - b (W h) / sigma^2.
    const MatrixXd centred = batch.rowwise() - p.visible_bias.transpose();
    const MatrixXd a0 = h0 * p.weights.transpose();
    const MatrixXd ak = hs * p.weights.transpose();
    const VectorXd inv_sigma3 = inv_var.cwiseProduct(inv_sigma);
    const VectorXd data_sigma = centred.cwiseAbs2().colwise().sum().transpose().cwiseProduct(inv_sigma3) -
                                batch.cwiseProduct(a0).colwise().sum().transpose().cwiseProduct(inv_var);
    const VectorXd model_sigma =
        n * inv_sigma - ak.colwise().sum().transpose().cwiseProduct(p.visible_bias).cwiseProduct(inv_var);
    grad.sigma = (data_sigma - model_sigma) / n;
    if (sample) {
        *sample = {batch, h0, vk, hk};
    }
    return grad;
}

BinRbmParams bin_cd_gradient(const MatrixXd& batch, const BinRbmParams& p, int steps, Rng& rng, CdSample* sample)
{
    require_size(batch.cols(), p.num_lower(), "bin_cd_gradient");
    const double n = static_cast<double>(batch.rows());
    auto up = [&](const MatrixXd& l) {
        MatrixXd pre = l * p.weights;
        pre.rowwise() += p.upper_bias.transpose();
        return logistic_matrix(pre);
    };
    const MatrixXd u0 = up(batch);
    MatrixXd uk = u0;
    MatrixXd lk = batch;
    for (int k = 0; k < std::max(1, steps); ++k) {
        const MatrixXd us = sample_bernoulli_matrix(uk, rng);
        MatrixXd pre = us * p.weights.transpose();
        pre.rowwise() += p.lower_bias.transpose();
        lk = logistic_matrix(pre);
        uk = up(lk);
    }
    BinRbmParams grad;
    grad.weights = (batch.transpose() * u0 - lk.transpose() * uk) / n;
    grad.lower_bias = (batch.colwise().sum() - lk.colwise().sum()).transpose() / n;
    grad.upper_bias = (u0.colwise().sum() - uk.colwise().sum()).transpose() / n;
    if (sample) {
        *sample = {batch, u0, lk, uk};
    }
    return grad;
}

GrbmParams random_grbm(int visible, int hidden, double scale, Rng& rng)
{
    std::normal_distribution<double> n(0.0, 1.0);
    GrbmParams p = GrbmParams::zeros(visible, hidden);
    p.weights = MatrixXd::NullaryExpr(visible, hidden, [&]() { return scale * n(rng); });
    return p;
}

BinRbmParams random_bin_rbm(int lower, int upper, double scale, Rng& rng)
{
    std::normal_distribution<double> n(0.0, 1.0);
    BinRbmParams p = BinRbmParams::zeros(lower, upper);
    p.weights = MatrixXd::NullaryExpr(lower, upper, [&]() { return scale * n(rng); });
    return p;
}

namespace {

double momentum_at(const CdConfig& c, int epoch)
{
    return epoch < c.momentum_switch_epoch ? c.initial_momentum : c.final_momentum;
}

void check_config(const CdConfig& c, Eigen::Index rows)
{
    if (rows < 1) {
        throw Error("pretraining needs at least one data row");
    }
    if (c.learning_rate < 0 || c.epochs < 1 || c.batch_size < 1 || c.cd_steps < 1) {
        throw Error("invalid CD configuration");
    }
}

} // namespace

GrbmTrainResult pretrain_grbm(const MatrixXd& data, int hidden, const CdConfig& config, const GrbmParams* init)
{
    check_config(config, data.rows());
    Rng rng(config.seed);
    GrbmTrainResult result;
    result.scaler = config.standardize ? Standardizer::fit(data, 1e-6) : Standardizer::identity(data.cols());
    const MatrixXd x = config.standardize ? result.scaler.apply_rows(data) : data;

    GrbmParams& p = result.params;
    if (init) {
        p = *init;
        p.validate();
        require_size(p.num_visible(), data.cols(), "pretrain_grbm init");
    } else {
        p = random_grbm(static_cast<int>(data.cols()), hidden, config.init_scale, rng);
        p.visible_bias = x.colwise().mean().transpose();
        if (!config.standardize) {
            p.sigma = Standardizer::fit(data, 1e-6).scale;
        }
    }
    if (!config.learn_hidden_bias) {
        p.hidden_bias.setZero();
    }

    GrbmParams velocity = GrbmParams::zeros(p.num_visible(), p.num_hidden());
    velocity.sigma.setZero();
    const int n = static_cast<int>(x.rows());
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto order = shuffled(n, rng);
        const double momentum = momentum_at(config, epoch);
        double sq_err = 0.0;
        for (int begin = 0; begin < n; begin += config.batch_size) {
            const int end = std::min(n, begin + config.batch_size);
            const MatrixXd batch = gather_rows(x, order, begin, end);
            CdSample sample;
            const GrbmParams g = grbm_cd_gradient(batch, p, config.cd_steps, rng, &sample);
            sq_err += (sample.visible_data - sample.visible_model).squaredNorm();

            velocity.weights = momentum * velocity.weights +
                               config.learning_rate * (g.weights - config.weight_decay * p.weights);
            velocity.visible_bias = momentum * velocity.visible_bias + config.learning_rate * g.visible_bias;
            velocity.hidden_bias = momentum * velocity.hidden_bias + config.learning_rate * g.hidden_bias;
            p.weights += velocity.weights;
            p.visible_bias += velocity.visible_bias;
            if (config.learn_hidden_bias) {
                p.hidden_bias += velocity.hidden_bias;
            }
            if (config.learn_sigma) {
                // step on log sigma keeps sigma positive
                velocity.sigma = momentum * velocity.sigma + config.sigma_learning_rate * p.sigma.cwiseProduct(g.sigma);
                p.sigma = (p.sigma.array() * velocity.sigma.array().exp()).max(config.min_sigma).matrix();
            }
        }
        EpochStats stats{epoch + 1, sq_err / (static_cast<double>(n) * p.num_visible()), p.weights.norm()};
        if (!std::isfinite(stats.reconstruction_error) || !all_finite(p.weights) || !p.visible_bias.allFinite() ||
            !p.hidden_bias.allFinite() || !p.sigma.allFinite()) {
            throw DivergenceError("pretrain_grbm", epoch + 1, stats.parameter_norm);
        }
        result.log.push_back(stats);
    }
    return result;
}

BinRbmTrainResult pretrain_binary(const MatrixXd& data, int hidden, const CdConfig& config, const BinRbmParams* init)
{
    check_config(config, data.rows());
    Rng rng(config.seed);
    BinRbmTrainResult result;
    BinRbmParams& p = result.params;
    if (init) {
        p = *init;
        p.validate();
        require_size(p.num_lower(), data.cols(), "pretrain_binary init");
    } else {
        p = random_bin_rbm(static_cast<int>(data.cols()), hidden, config.init_scale, rng);
        const VectorXd mean = data.colwise().mean().transpose();
        p.lower_bias = mean.unaryExpr([](double m) {
            const double c = std::clamp(m, 1e-3, 1 - 1e-3);
            return std::log(c / (1 - c));
        });
    }
    if (!config.learn_hidden_bias) {
        p.upper_bias.setZero();
        p.lower_bias.setZero();
    }

    BinRbmParams velocity = BinRbmParams::zeros(p.num_lower(), p.num_upper());
    const int n = static_cast<int>(data.rows());
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto order = shuffled(n, rng);
        const double momentum = momentum_at(config, epoch);
        double sq_err = 0.0;
        for (int begin = 0; begin < n; begin += config.batch_size) {
            const int end = std::min(n, begin + config.batch_size);
            const MatrixXd batch = gather_rows(data, order, begin, end);
            CdSample sample;
            const BinRbmParams g = bin_cd_gradient(batch, p, config.cd_steps, rng, &sample);
            sq_err += (sample.visible_data - sample.visible_model).squaredNorm();
            velocity.weights = momentum * velocity.weights +
                               config.learning_rate * (g.weights - config.weight_decay * p.weights);
            velocity.lower_bias = momentum * velocity.lower_bias + config.learning_rate * g.lower_bias;
            velocity.upper_bias = momentum * velocity.upper_bias + config.learning_rate * g.upper_bias;
            p.weights += velocity.weights;
            if (config.learn_hidden_bias) {
                p.lower_bias += velocity.lower_bias;
                p.upper_bias += velocity.upper_bias;
            }
        }
        EpochStats stats{epoch + 1, sq_err / (static_cast<double>(n) * p.num_lower()), p.weights.norm()};
        if (!std::isfinite(stats.reconstruction_error) || !all_finite(p.weights) || !p.lower_bias.allFinite() ||
            !p.upper_bias.allFinite()) {
            throw DivergenceError("pretrain_binary", epoch + 1, stats.parameter_norm);
        }
        result.log.push_back(stats);
    }
    return result;
}

std::uint32_t checked_hidden_states(int hidden)
{
    if (hidden < 0 || hidden > kMaxExactHidden) {
        throw Error("exact enumeration refused: " + std::to_string(hidden) + " hidden units (limit " +
                    std::to_string(kMaxExactHidden) + ")");
    }
    return 1u << hidden;
}

ExactGrbm exact_oracle(const GrbmParams& p)
{
    p.validate();
    const int f = p.num_hidden();
    const std::uint32_t states = checked_hidden_states(f);
    std::vector<double> logw(states);
    const VectorXd b_over_sigma = p.visible_bias.cwiseQuotient(p.sigma);
    for (std::uint32_t s = 0; s < states; ++s) {
        const VectorXd h = bits(s, f);
        const VectorXd a = p.weights * h;
        logw[s] = p.hidden_bias.dot(h) + 0.5 * a.squaredNorm() + a.dot(b_over_sigma);
    }
    const double lse = log_sum_exp(logw);
    ExactGrbm out;
    out.log_partition = lse + (0.5 * (2.0 * std::numbers::pi * p.sigma.array().square()).log()).sum();
    out.hidden_marginals = VectorXd::Zero(f);
    out.visible_mean = VectorXd::Zero(p.num_visible());
    for (std::uint32_t s = 0; s < states; ++s) {
        const double prob = std::exp(logw[s] - lse);
        const VectorXd h = bits(s, f);
        out.hidden_marginals += prob * h;
        out.visible_mean += prob * (p.visible_bias + p.sigma.cwiseProduct(p.weights * h));
    }
    return out;
}

ExactBinRbm exact_oracle(const BinRbmParams& p)
{
    p.validate();
    const int f = p.num_upper();
    const std::uint32_t states = checked_hidden_states(f);
    std::vector<double> logw(states);
    for (std::uint32_t s = 0; s < states; ++s) {
        const VectorXd u = bits(s, f);
        const VectorXd pre = p.weights * u + p.lower_bias;
        double acc = p.upper_bias.dot(u);
        for (Eigen::Index i = 0; i < pre.size(); ++i) {
            acc += softplus(pre[i]);
        }
        logw[s] = acc;
    }
    const double lse = log_sum_exp(logw);
    ExactBinRbm out;
    out.log_partition = lse;
    out.lower_marginals = VectorXd::Zero(p.num_lower());
    out.upper_marginals = VectorXd::Zero(f);
    for (std::uint32_t s = 0; s < states; ++s) {
        const double prob = std::exp(logw[s] - lse);
        const VectorXd u = bits(s, f);
        out.upper_marginals += prob * u;
        out.lower_marginals += prob * logistic(VectorXd(p.weights * u + p.lower_bias));
    }
    return out;
}

VectorXd exact_hidden_posterior(const VectorXd& v, const GrbmParams& p)
{
    const int f = p.num_hidden();
    const std::uint32_t states = checked_hidden_states(f);
    std::vector<double> logw(states);
    for (std::uint32_t s = 0; s < states; ++s) {
        logw[s] = -grbm_energy(v, bits(s, f), p);
    }
    const double lse = log_sum_exp(logw);
    VectorXd m = VectorXd::Zero(f);
    for (std::uint32_t s = 0; s < states; ++s) {
        m += std::exp(logw[s] - lse) * bits(s, f);
    }
    return m;
}

VectorXd exact_conditional(const VectorXd& other, const BinRbmParams& p, Direction direction)
{
    const int f = direction == Direction::kUp ? p.num_upper() : p.num_lower();
    const std::uint32_t states = checked_hidden_states(f);
    std::vector<double> logw(states);
    for (std::uint32_t s = 0; s < states; ++s) {
        const VectorXd x = bits(s, f);
        logw[s] = direction == Direction::kUp ? -bin_energy(other, x, p) : -bin_energy(x, other, p);
    }
    const double lse = log_sum_exp(logw);
    VectorXd m = VectorXd::Zero(f);
    for (std::uint32_t s = 0; s < states; ++s) {
        m += std::exp(logw[s] - lse) * bits(s, f);
    }
    return m;
}

double grbm_free_energy(const VectorXd& v, const GrbmParams& p)
{
    const VectorXd pre = grbm_hidden_preactivation(v, p);
    double f = 0.5 * (v - p.visible_bias).cwiseQuotient(p.sigma).squaredNorm();
    for (Eigen::Index j = 0; j < pre.size(); ++j) {
        f -= softplus(pre[j]);
    }
    return f;
}

double grbm_log_likelihood(const VectorXd& v, const GrbmParams& p)
{
    return -grbm_free_energy(v, p) - exact_oracle(p).log_partition;
}

GrbmParams grbm_log_likelihood_gradient(const VectorXd& v, const GrbmParams& p)
{
    const int f = p.num_hidden();
    const std::uint32_t states = checked_hidden_states(f);
    const VectorXd b_over_sigma = p.visible_bias.cwiseQuotient(p.sigma);
    std::vector<double> logw(states);
    for (std::uint32_t s = 0; s < states; ++s) {
        const VectorXd h = bits(s, f);
        const VectorXd a = p.weights * h;
        logw[s] = p.hidden_bias.dot(h) + 0.5 * a.squaredNorm() + a.dot(b_over_sigma);
    }
    const double lse = log_sum_exp(logw);

    GrbmParams model = GrbmParams::zeros(p.num_visible(), f);
    model.sigma.setZero();
    for (std::uint32_t s = 0; s < states; ++s) {
        const double prob = std::exp(logw[s] - lse);
        const VectorXd h = bits(s, f);
        const VectorXd a = p.weights * h;
        model.weights += prob * (b_over_sigma + a) * h.transpose();
        model.visible_bias += prob * a.cwiseQuotient(p.sigma);
        model.hidden_bias += prob * h;
    }

    const VectorXd mu = grbm_hidden_given_visible(v, p);
    GrbmParams grad = GrbmParams::zeros(p.num_visible(), f);
    grad.sigma.setZero();
    grad.weights = v.cwiseQuotient(p.sigma) * mu.transpose() - model.weights;
    grad.visible_bias = (v - p.visible_bias).cwiseQuotient(p.sigma.cwiseAbs2()) - model.visible_bias;
    grad.hidden_bias = mu - model.hidden_bias;
    return grad;
}

} // namespace dam
