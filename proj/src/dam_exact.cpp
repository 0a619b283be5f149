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
#include "dam/dam_exact.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dam {

namespace {

constexpr std::array<Group, 5> kHiddenGroups{Group::kShapeH1, Group::kShapeH2, Group::kTextureH1,
                                             Group::kTextureH2, Group::kJoint};

double log_sum_exp(const std::vector<double>& v)
{
    const double m = *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) {
        s += std::exp(x - m);
    }
    return m + std::log(s);
}

std::uint32_t num_states(const DamParams& p)
{
    return checked_hidden_states(p.sizes().total_hidden());
}

// -E with the stack's visible units integrated out:
// sum_i (a_i^2 / 2 + a_i b_i / sigma_i) + 1/2 log(2 pi sigma_i^2), a = W1 h1.
double integrated_visible_term(const VectorXd& h1, const GrbmParams& p)
{
    const VectorXd a = p.weights * h1;
    return 0.5 * a.squaredNorm() + a.dot(p.visible_bias.cwiseQuotient(p.sigma)) +
           (0.5 * (2.0 * std::numbers::pi * p.sigma.array().square()).log()).sum();
}

double hidden_only_log_weight(const DamState& st, const DamParams& p)
{
    const auto& hs1 = st[Group::kShapeH1];
    const auto& hs2 = st[Group::kShapeH2];
    const auto& hg1 = st[Group::kTextureH1];
    const auto& hg2 = st[Group::kTextureH2];
    const auto& h3 = st[Group::kJoint];
    return integrated_visible_term(hs1, p.shape.bottom) + p.shape.bottom.hidden_bias.dot(hs1) +
           hs1.dot(p.shape.upper_weights * hs2) + p.shape.upper_bias.dot(hs2) +
           integrated_visible_term(hg1, p.texture.bottom) + p.texture.bottom.hidden_bias.dot(hg1) +
           hg1.dot(p.texture.upper_weights * hg2) + p.texture.upper_bias.dot(hg2) +
           hs2.dot(p.joint_shape_weights * h3) + hg2.dot(p.joint_texture_weights * h3) + p.joint_bias.dot(h3);
}

void accumulate(DamParams& acc, const DamParams& x, double w)
{
    auto add = [w](auto& a, const auto& b) { a += w * b; };
    for (auto [a, b] : {std::pair<StackParams*, const StackParams*>{&acc.shape, &x.shape},
                        std::pair<StackParams*, const StackParams*>{&acc.texture, &x.texture}}) {
        add(a->bottom.weights, b->bottom.weights);
        add(a->bottom.visible_bias, b->bottom.visible_bias);
        add(a->bottom.hidden_bias, b->bottom.hidden_bias);
        add(a->upper_weights, b->upper_weights);
        add(a->upper_bias, b->upper_bias);
    }
    add(acc.joint_shape_weights, x.joint_shape_weights);
    add(acc.joint_texture_weights, x.joint_texture_weights);
    add(acc.joint_bias, x.joint_bias);
}

DamParams zero_statistics(const DamParams& p)
{
    DamParams z = DamParams::zeros(p.sizes());
    z.shape.bottom.sigma.setZero();
    z.texture.bottom.sigma.setZero();
    return z;
}

} // namespace

std::uint32_t hidden_state_index(const DamState& st)
{
    std::uint32_t idx = 0;
    int bit = 0;
    for (Group g : kHiddenGroups) {
        const VectorXd& h = st[g];
        for (Eigen::Index j = 0; j < h.size(); ++j, ++bit) {
            if (h[j] > 0.5) {
                idx |= 1u << bit;
            }
        }
    }
    return idx;
}

DamState hidden_state_from_index(std::uint32_t index, const DamParams& p)
{
    DamState st = DamState::zeros(p.sizes());
    int bit = 0;
    for (Group g : kHiddenGroups) {
        VectorXd& h = st[g];
        for (Eigen::Index j = 0; j < h.size(); ++j, ++bit) {
            h[j] = static_cast<double>((index >> bit) & 1u);
        }
    }
    return st;
}

std::vector<double> exact_hidden_distribution(const DamParams& p)
{
    const std::uint32_t n = num_states(p);
    std::vector<double> logw(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        logw[i] = hidden_only_log_weight(hidden_state_from_index(i, p), p);
    }
    const double lse = log_sum_exp(logw);
    std::vector<double> prob(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        prob[i] = std::exp(logw[i] - lse);
    }
    return prob;
}

double exact_log_partition(const DamParams& p)
{
    const std::uint32_t n = num_states(p);
    std::vector<double> logw(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        logw[i] = hidden_only_log_weight(hidden_state_from_index(i, p), p);
    }
    return log_sum_exp(logw);
}

double exact_log_likelihood(const VectorXd& s, const VectorXd& g, const DamParams& p)
{
    const std::uint32_t n = num_states(p);
    std::vector<double> logw(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        DamState st = hidden_state_from_index(i, p);
        st[Group::kShape] = s;
        st[Group::kTexture] = g;
        logw[i] = -dam_energy(st, p);
    }
    return log_sum_exp(logw) - exact_log_partition(p);
}

DamParams exact_posterior_statistics(const VectorXd& s, const VectorXd& g, const DamParams& p)
{
    const std::uint32_t n = num_states(p);
    std::vector<double> logw(n);
    std::vector<DamState> states(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        states[i] = hidden_state_from_index(i, p);
        states[i][Group::kShape] = s;
        states[i][Group::kTexture] = g;
        logw[i] = -dam_energy(states[i], p);
    }
    const double lse = log_sum_exp(logw);
    DamParams acc = zero_statistics(p);
    for (std::uint32_t i = 0; i < n; ++i) {
        accumulate(acc, state_statistics(states[i], p), std::exp(logw[i] - lse));
    }
    return acc;
}

DamParams exact_model_statistics(const DamParams& p)
{
    const std::vector<double> prob = exact_hidden_distribution(p);
    DamParams acc = zero_statistics(p);
    for (std::uint32_t i = 0; i < prob.size(); ++i) {
        DamState st = hidden_state_from_index(i, p);
        // statistics are affine in the visibles, so E[stat | h] = stat(E[v | h])
        st[Group::kShape] = dam_conditional(Group::kShape, st, p);
        st[Group::kTexture] = dam_conditional(Group::kTexture, st, p);
        accumulate(acc, state_statistics(st, p), prob[i]);
    }
    return acc;
}

VectorXd exact_group_conditional(Group g, const DamState& state, const DamParams& p)
{
    if (g == Group::kShape || g == Group::kTexture) {
        throw Error("exact_group_conditional: visible groups are Gaussian");
    }
    const int size = static_cast<int>(state[g].size());
    const std::uint32_t n = checked_hidden_states(size);
    std::vector<double> logw(n);
    DamState st = state;
    for (std::uint32_t i = 0; i < n; ++i) {
        for (int j = 0; j < size; ++j) {
            st[g][j] = static_cast<double>((i >> j) & 1u);
        }
        logw[i] = -dam_energy(st, p);
    }
    const double lse = log_sum_exp(logw);
    VectorXd m = VectorXd::Zero(size);
    for (std::uint32_t i = 0; i < n; ++i) {
        const double w = std::exp(logw[i] - lse);
        for (int j = 0; j < size; ++j) {
            m[j] += w * static_cast<double>((i >> j) & 1u);
        }
    }
    return m;
}

} // namespace dam
