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

// Brute-force enumeration over every hidden configuration of a tiny DAM
// (at most kMaxExactHidden hidden units in total). Visibles are integrated in
// closed form. Used as the reference for conditionals, Gibbs sampling and the
// likelihood gradient.

#include "dam/dam_model.hpp"

#include <cstdint>
#include <vector>

namespace dam {

/// Hidden configuration index: bits are assigned to h_s1, h_s2, h_g1, h_g2, h3 in
/// that order, lowest bit first.
std::uint32_t hidden_state_index(const DamState& state);
DamState hidden_state_from_index(std::uint32_t index, const DamParams& p);

/// Marginal distribution P(h) over all hidden configurations.
std::vector<double> exact_hidden_distribution(const DamParams& p);

double exact_log_partition(const DamParams& p);

/// log P(s, g).
double exact_log_likelihood(const VectorXd& s, const VectorXd& g, const DamParams& p);

/// E_{P(h | s, g)}[-dE/dtheta].
DamParams exact_posterior_statistics(const VectorXd& s, const VectorXd& g, const DamParams& p);

/// E_{P(s, g, h)}[-dE/dtheta].
DamParams exact_model_statistics(const DamParams& p);

/// p(unit = 1 | everything else) for a hidden group, by enumerating the group's
/// states under dam_energy.
VectorXd exact_group_conditional(Group g, const DamState& state, const DamParams& p);

} // namespace dam
