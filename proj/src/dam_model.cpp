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
#include "dam/dam_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dam {

namespace {

StackParams zero_stack(int visible, int h1, int h2)
{
    return {GrbmParams::zeros(visible, h1), MatrixXd::Zero(h1, h2), VectorXd::Zero(h2)};
}

double binary_entropy(const VectorXd& p)
{
    double h = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double q = p[i];
        if (q > 0.0) {
            h -= q * std::log(q);
        }
        if (q < 1.0) {
            h -= (1.0 - q) * std::log1p(-q);
        }
    }
    return h;
}

double stack_energy(const VectorXd& v, const VectorXd& h1, const VectorXd& h2, const StackParams& p)
{
    return grbm_energy(v, h1, p.bottom) - h1.dot(p.upper_weights * h2) - p.upper_bias.dot(h2);
}

void fill_stack_statistics(const VectorXd& v, const VectorXd& h1, const VectorXd& h2, const StackParams& p,
                           StackParams& out)
{
    out.bottom.weights = v.cwiseQuotient(p.bottom.sigma) * h1.transpose();
    out.bottom.visible_bias = (v - p.bottom.visible_bias).cwiseQuotient(p.bottom.sigma.cwiseAbs2());
    out.bottom.sigma = VectorXd::Zero(v.size());
    out.bottom.hidden_bias = h1;
    out.upper_weights = h1 * h2.transpose();
    out.upper_bias = h2;
}

// Applies f(a, b) -> a elementwise over every parameter block of two DamParams.
template <typename F>
void for_each_block(DamParams& a, const DamParams& b, F&& f)
{
    for (auto [sa, sb] : {std::pair<StackParams*, const StackParams*>{&a.shape, &b.shape},
                          std::pair<StackParams*, const StackParams*>{&a.texture, &b.texture}}) {
        f(sa->bottom.weights, sb->bottom.weights, true);
        f(sa->bottom.visible_bias, sb->bottom.visible_bias, false);
        f(sa->bottom.hidden_bias, sb->bottom.hidden_bias, false);
        f(sa->upper_weights, sb->upper_weights, true);
        f(sa->upper_bias, sb->upper_bias, false);
    }
    f(a.joint_shape_weights, b.joint_shape_weights, true);
    f(a.joint_texture_weights, b.joint_texture_weights, true);
    f(a.joint_bias, b.joint_bias, false);
}

} // namespace

DamParams DamParams::zeros(const LayerSizes& s)
{
    DamParams p;
    p.shape = zero_stack(s.shape_visible, s.shape_hidden1, s.shape_hidden2);
    p.texture = zero_stack(s.texture_visible, s.texture_hidden1, s.texture_hidden2);
    p.joint_shape_weights = MatrixXd::Zero(s.shape_hidden2, s.joint);
    p.joint_texture_weights = MatrixXd::Zero(s.texture_hidden2, s.joint);
    p.joint_bias = VectorXd::Zero(s.joint);
    return p;
}

DamParams DamParams::random(const LayerSizes& s, double scale, Rng& rng)
{
    std::normal_distribution<double> n(0.0, 1.0);
    auto fill = [&](MatrixXd& m) { m = MatrixXd::NullaryExpr(m.rows(), m.cols(), [&]() { return scale * n(rng); }); };
    DamParams p = zeros(s);
    fill(p.shape.bottom.weights);
    fill(p.shape.upper_weights);
    fill(p.texture.bottom.weights);
    fill(p.texture.upper_weights);
    fill(p.joint_shape_weights);
    fill(p.joint_texture_weights);
    return p;
}

LayerSizes DamParams::sizes() const
{
    return {shape.bottom.num_visible(),   shape.bottom.num_hidden(),   static_cast<int>(shape.upper_weights.cols()),
            texture.bottom.num_visible(), texture.bottom.num_hidden(), static_cast<int>(texture.upper_weights.cols()),
            static_cast<int>(joint_bias.size())};
}

void DamParams::validate() const
{
    shape.bottom.validate();
    texture.bottom.validate();
    const LayerSizes s = sizes();
    require_size(shape.upper_weights.rows(), s.shape_hidden1, "DamParams shape upper rows");
    require_size(shape.upper_bias.size(), s.shape_hidden2, "DamParams shape upper bias");
    require_size(texture.upper_weights.rows(), s.texture_hidden1, "DamParams texture upper rows");
    require_size(texture.upper_bias.size(), s.texture_hidden2, "DamParams texture upper bias");
    require_size(joint_shape_weights.rows(), s.shape_hidden2, "DamParams joint shape rows");
    require_size(joint_shape_weights.cols(), s.joint, "DamParams joint shape cols");
    require_size(joint_texture_weights.rows(), s.texture_hidden2, "DamParams joint texture rows");
    require_size(joint_texture_weights.cols(), s.joint, "DamParams joint texture cols");
    if (!shape.upper_weights.allFinite() || !texture.upper_weights.allFinite() || !joint_shape_weights.allFinite() ||
        !joint_texture_weights.allFinite() || !joint_bias.allFinite() || !shape.upper_bias.allFinite() ||
        !texture.upper_bias.allFinite()) {
        throw Error("DamParams: non-finite entry");
    }
}

double DamParams::norm() const
{
    return std::sqrt(shape.bottom.weights.squaredNorm() + shape.upper_weights.squaredNorm() +
                     texture.bottom.weights.squaredNorm() + texture.upper_weights.squaredNorm() +
                     joint_shape_weights.squaredNorm() + joint_texture_weights.squaredNorm());
}

DamState DamState::zeros(const LayerSizes& s)
{
    DamState st;
    st[Group::kShape] = VectorXd::Zero(s.shape_visible);
    st[Group::kTexture] = VectorXd::Zero(s.texture_visible);
    st[Group::kShapeH1] = VectorXd::Zero(s.shape_hidden1);
    st[Group::kShapeH2] = VectorXd::Zero(s.shape_hidden2);
    st[Group::kTextureH1] = VectorXd::Zero(s.texture_hidden1);
    st[Group::kTextureH2] = VectorXd::Zero(s.texture_hidden2);
    st[Group::kJoint] = VectorXd::Zero(s.joint);
    return st;
}

double dam_energy(const DamState& st, const DamParams& p)
{
    const VectorXd& h3 = st[Group::kJoint];
    require_size(h3.size(), p.joint_bias.size(), "dam_energy joint");
    require_size(st[Group::kShapeH2].size(), p.joint_shape_weights.rows(), "dam_energy shape h2");
    require_size(st[Group::kTextureH2].size(), p.joint_texture_weights.rows(), "dam_energy texture h2");
    return stack_energy(st[Group::kShape], st[Group::kShapeH1], st[Group::kShapeH2], p.shape) +
           stack_energy(st[Group::kTexture], st[Group::kTextureH1], st[Group::kTextureH2], p.texture) -
           st[Group::kShapeH2].dot(p.joint_shape_weights * h3) -
           st[Group::kTextureH2].dot(p.joint_texture_weights * h3) - p.joint_bias.dot(h3);
}

VectorXd dam_preactivation(Group g, const DamState& st, const DamParams& p)
{
    switch (g) {
    case Group::kShapeH1:
        return grbm_hidden_preactivation(st[Group::kShape], p.shape.bottom,
                                         p.shape.upper_weights * st[Group::kShapeH2]);
    case Group::kTextureH1:
        return grbm_hidden_preactivation(st[Group::kTexture], p.texture.bottom,
                                         p.texture.upper_weights * st[Group::kTextureH2]);
    case Group::kShapeH2:
        return p.shape.upper_weights.transpose() * st[Group::kShapeH1] + p.shape.upper_bias +
               p.joint_shape_weights * st[Group::kJoint];
    case Group::kTextureH2:
        return p.texture.upper_weights.transpose() * st[Group::kTextureH1] + p.texture.upper_bias +
               p.joint_texture_weights * st[Group::kJoint];
    case Group::kJoint:
        return p.joint_shape_weights.transpose() * st[Group::kShapeH2] +
               p.joint_texture_weights.transpose() * st[Group::kTextureH2] + p.joint_bias;
    default:
        throw Error("dam_preactivation: visible group has no pre-activation");
    }
}

VectorXd dam_conditional(Group g, const DamState& st, const DamParams& p)
{
    switch (g) {
    case Group::kShape:
        return grbm_visible_given_hidden(st[Group::kShapeH1], p.shape.bottom).mean;
    case Group::kTexture:
        return grbm_visible_given_hidden(st[Group::kTextureH1], p.texture.bottom).mean;
    default:
        return logistic(dam_preactivation(g, st, p));
    }
}

DamState MeanFieldState::as_state(const VectorXd& s, const VectorXd& g) const
{
    DamState st;
    st[Group::kShape] = s;
    st[Group::kTexture] = g;
    st[Group::kShapeH1] = shape_h1;
    st[Group::kShapeH2] = shape_h2;
    st[Group::kTextureH1] = texture_h1;
    st[Group::kTextureH2] = texture_h2;
    st[Group::kJoint] = joint;
    return st;
}

MeanFieldState mean_field_infer(const VectorXd& s, const VectorXd& g, const DamParams& p,
                                const MeanFieldConfig& config, const MeanFieldState* init,
                                const MeanFieldObserver& observer)
{
    const LayerSizes sz = p.sizes();
    require_size(s.size(), sz.shape_visible, "mean_field_infer shape");
    require_size(g.size(), sz.texture_visible, "mean_field_infer texture");
    if (config.max_iterations < 1) {
        throw Error("mean_field_infer: max_iterations must be >= 1");
    }

    MeanFieldState mf;
    if (init) {
        mf = *init;
        mf.residual_history.clear();
        mf.iterations = 0;
    } else {
        mf.shape_h1 = VectorXd::Constant(sz.shape_hidden1, 0.5);
        mf.shape_h2 = VectorXd::Constant(sz.shape_hidden2, 0.5);
        mf.texture_h1 = VectorXd::Constant(sz.texture_hidden1, 0.5);
        mf.texture_h2 = VectorXd::Constant(sz.texture_hidden2, 0.5);
        mf.joint = VectorXd::Constant(sz.joint, 0.5);
    }

    // Bottom-up drive from the clamped visibles is constant across iterations.
    const VectorXd shape_drive = grbm_hidden_preactivation(s, p.shape.bottom);
    const VectorXd texture_drive = grbm_hidden_preactivation(g, p.texture.bottom);
    const double keep = config.damping;

    auto update = [&](VectorXd& mu, const VectorXd& pre) {
        VectorXd next = logistic(pre);
        if (keep > 0.0) {
            next = (1.0 - keep) * next + keep * mu;
        }
        const double change = (next - mu).cwiseAbs().maxCoeff();
        mu = std::move(next);
        return change;
    };

    for (int it = 0; it < config.max_iterations; ++it) {
        double r = 0.0;
        r = std::max(r, update(mf.shape_h1, shape_drive + p.shape.upper_weights * mf.shape_h2));
        r = std::max(r, update(mf.texture_h1, texture_drive + p.texture.upper_weights * mf.texture_h2));
        r = std::max(r, update(mf.shape_h2, p.shape.upper_weights.transpose() * mf.shape_h1 + p.shape.upper_bias +
                                                p.joint_shape_weights * mf.joint));
        r = std::max(r, update(mf.texture_h2, p.texture.upper_weights.transpose() * mf.texture_h1 +
                                                  p.texture.upper_bias + p.joint_texture_weights * mf.joint));
        r = std::max(r, update(mf.joint, p.joint_shape_weights.transpose() * mf.shape_h2 +
                                             p.joint_texture_weights.transpose() * mf.texture_h2 + p.joint_bias));
        mf.iterations = it + 1;
        mf.residual = r;
        mf.residual_history.push_back(r);
        if (observer) {
            observer(mf);
        }
        if (r < config.tolerance) {
            mf.converged = true;
            break;
        }
    }
    return mf;
}

double mean_field_bound(const VectorXd& s, const VectorXd& g, const MeanFieldState& mf, const DamParams& p)
{
    // The energy is multilinear in the hidden units, so E_q[E] = E(s, g, mu).
    return -dam_energy(mf.as_state(s, g), p) + binary_entropy(mf.shape_h1) + binary_entropy(mf.shape_h2) +
           binary_entropy(mf.texture_h1) + binary_entropy(mf.texture_h2) + binary_entropy(mf.joint);
}

void GibbsChain::clamp(Group g, VectorXd value)
{
    state[g] = std::move(value);
    clamped[static_cast<int>(g)] = true;
}

GibbsChain make_chain(const DamParams& p, std::uint64_t seed)
{
    const LayerSizes sz = p.sizes();
    GibbsChain chain{DamState::zeros(sz), {}, Rng(seed)};
    chain.state[Group::kShape] = sample_gaussian({p.shape.bottom.visible_bias, p.shape.bottom.sigma}, chain.rng);
    chain.state[Group::kTexture] =
        sample_gaussian({p.texture.bottom.visible_bias, p.texture.bottom.sigma}, chain.rng);
    for (Group g : {Group::kShapeH1, Group::kShapeH2, Group::kTextureH1, Group::kTextureH2, Group::kJoint}) {
        chain.state[g] = sample_bernoulli(VectorXd::Constant(chain.state[g].size(), 0.5), chain.rng);
    }
    return chain;
}

void gibbs_sweep(GibbsChain& chain, const DamParams& p)
{
    DamState& st = chain.state;
    auto resample = [&](Group g) {
        if (chain.is_clamped(g)) {
            return;
        }
        if (g == Group::kShape) {
            st[g] = sample_gaussian(grbm_visible_given_hidden(st[Group::kShapeH1], p.shape.bottom), chain.rng);
        } else if (g == Group::kTexture) {
            st[g] = sample_gaussian(grbm_visible_given_hidden(st[Group::kTextureH1], p.texture.bottom), chain.rng);
        } else {
            st[g] = sample_bernoulli(dam_conditional(g, st, p), chain.rng);
        }
    };
    for (Group g : {Group::kShape, Group::kShapeH2, Group::kTexture, Group::kTextureH2}) {
        resample(g);
    }
    for (Group g : {Group::kShapeH1, Group::kTextureH1, Group::kJoint}) {
        resample(g);
    }
}

DamModel DamModel::with_identity_scalers(DamParams params)
{
    const LayerSizes sz = params.sizes();
    return {std::move(params), Standardizer::identity(sz.shape_visible), Standardizer::identity(sz.texture_visible)};
}

DamParams state_statistics(const DamState& st, const DamParams& p)
{
    DamParams out;
    fill_stack_statistics(st[Group::kShape], st[Group::kShapeH1], st[Group::kShapeH2], p.shape, out.shape);
    fill_stack_statistics(st[Group::kTexture], st[Group::kTextureH1], st[Group::kTextureH2], p.texture, out.texture);
    out.joint_shape_weights = st[Group::kShapeH2] * st[Group::kJoint].transpose();
    out.joint_texture_weights = st[Group::kTextureH2] * st[Group::kJoint].transpose();
    out.joint_bias = st[Group::kJoint];
    return out;
}

DamParams likelihood_gradient(const DamParams& data_statistics, const DamParams& model_statistics)
{
    DamParams grad = data_statistics;
    for_each_block(grad, model_statistics, [](auto& a, const auto& b, bool) { a -= b; });
    grad.shape.bottom.sigma.setZero();
    grad.texture.bottom.sigma.setZero();
    return grad;
}

std::pair<VectorXd, VectorXd> mean_field_reconstruction(const DamModel& model, const VectorXd& shape,
                                                        const VectorXd& texture, const MeanFieldConfig& config)
{
    const VectorXd s = model.shape_scaler.apply(shape);
    const VectorXd g = model.texture_scaler.apply(texture);
    const MeanFieldState mf = mean_field_infer(s, g, model.params, config);
    const VectorXd s_hat = grbm_visible_given_hidden(mf.shape_h1, model.params.shape.bottom).mean;
    const VectorXd g_hat = grbm_visible_given_hidden(mf.texture_h1, model.params.texture.bottom).mean;
    return {model.shape_scaler.invert(s_hat), model.texture_scaler.invert(g_hat)};
}

DamTrainResult train_dam(const DamModel& init, const MatrixXd& shapes, const MatrixXd& textures,
                         const DamTrainConfig& config)
{
    init.params.validate();
    const LayerSizes sz = init.params.sizes();
    if (shapes.rows() == 0 || shapes.rows() != textures.rows()) {
        throw DimensionError("train_dam: need matching, nonempty shape and texture rows");
    }
    require_size(shapes.cols(), sz.shape_visible, "train_dam shapes");
    require_size(textures.cols(), sz.texture_visible, "train_dam textures");
    if (config.epochs < 1 || config.batch_size < 1 || config.chains < 1 || config.learning_rate < 0) {
        throw Error("train_dam: invalid configuration");
    }

    DamTrainResult result{init, {}};
    DamParams& p = result.model.params;
    const MatrixXd s_data = init.shape_scaler.apply_rows(shapes);
    const MatrixXd g_data = init.texture_scaler.apply_rows(textures);
    const int n = static_cast<int>(shapes.rows());

    Rng rng(split_seed(config.seed, 0));
    std::vector<GibbsChain> chains;
    chains.reserve(config.chains);
    for (int c = 0; c < config.chains; ++c) {
        chains.push_back(make_chain(p, split_seed(config.seed, 1000 + c)));
    }
    if (!config.learn_hidden_bias) {
        p.shape.bottom.hidden_bias.setZero();
        p.shape.upper_bias.setZero();
        p.texture.bottom.hidden_bias.setZero();
        p.texture.upper_bias.setZero();
        p.joint_bias.setZero();
    }

    DamParams velocity = DamParams::zeros(sz);
    const int monitor = std::min(n, 100);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        const double momentum = epoch < config.momentum_switch_epoch ? config.initial_momentum : config.final_momentum;

        for (int begin = 0; begin < n; begin += config.batch_size) {
            const int end = std::min(n, begin + config.batch_size);
            DamParams data_stats = DamParams::zeros(sz);
            for (int r = begin; r < end; ++r) {
                const VectorXd s = s_data.row(order[r]).transpose();
                const VectorXd g = g_data.row(order[r]).transpose();
                const MeanFieldState mf = mean_field_infer(s, g, p, config.mean_field);
                const DamParams st = state_statistics(mf.as_state(s, g), p);
                for_each_block(data_stats, st, [](auto& a, const auto& b, bool) { a += b; });
            }
            const double inv_batch = 1.0 / (end - begin);

            DamParams model_stats = DamParams::zeros(sz);
            for (GibbsChain& chain : chains) {
                for (int k = 0; k < config.sweeps_per_step; ++k) {
                    gibbs_sweep(chain, p);
                }
                const DamParams st = state_statistics(chain.state, p);
                for_each_block(model_stats, st, [](auto& a, const auto& b, bool) { a += b; });
            }
            const double inv_chains = 1.0 / static_cast<double>(chains.size());

            for_each_block(data_stats, data_stats, [&](auto& a, const auto&, bool) { a *= inv_batch; });
            for_each_block(model_stats, model_stats, [&](auto& a, const auto&, bool) { a *= inv_chains; });
            DamParams grad = likelihood_gradient(data_stats, model_stats);
            if (!config.learn_hidden_bias) {
                grad.shape.bottom.hidden_bias.setZero();
                grad.shape.upper_bias.setZero();
                grad.texture.bottom.hidden_bias.setZero();
                grad.texture.upper_bias.setZero();
                grad.joint_bias.setZero();
            }
            if (!config.learn_visible_bias) {
                grad.shape.bottom.visible_bias.setZero();
                grad.texture.bottom.visible_bias.setZero();
            }
            for_each_block(velocity, grad, [&](auto& v, const auto& g, bool) { v = momentum * v + config.learning_rate * g; });
            for_each_block(velocity, p, [&](auto& v, const auto& w, bool is_weight) {
                if (is_weight) {
                    v -= config.learning_rate * config.weight_decay * w;
                }
            });
            for_each_block(p, velocity, [](auto& w, const auto& v, bool) { w += v; });
        }

        DamEpochStats stats;
        stats.epoch = epoch + 1;
        stats.parameter_norm = p.norm();
        double se = 0.0, ge = 0.0;
        for (int r = 0; r < monitor; ++r) {
            const auto [s_hat, g_hat] =
                mean_field_reconstruction(result.model, shapes.row(r).transpose(), textures.row(r).transpose(),
                                          config.mean_field);
            se += (s_hat - shapes.row(r).transpose()).squaredNorm();
            ge += (g_hat - textures.row(r).transpose()).squaredNorm();
        }
        stats.shape_error = std::sqrt(se / (static_cast<double>(monitor) * sz.shape_visible));
        stats.texture_error = std::sqrt(ge / (static_cast<double>(monitor) * sz.texture_visible));
        if (!std::isfinite(stats.parameter_norm) || !std::isfinite(stats.shape_error) ||
            !std::isfinite(stats.texture_error)) {
            throw DivergenceError("train_dam", epoch + 1, stats.parameter_norm);
        }
        result.log.push_back(stats);
    }
    return result;
}

PretrainResult pretrain_dam(const MatrixXd& shapes, const MatrixXd& textures, const PretrainConfig& config)
{
    if (shapes.rows() == 0 || shapes.rows() != textures.rows()) {
        throw DimensionError("pretrain_dam: need matching, nonempty shape and texture rows");
    }
    LayerSizes sz = config.sizes;
    sz.shape_visible = static_cast<int>(shapes.cols());
    sz.texture_visible = static_cast<int>(textures.cols());

    auto layer_config = [&](std::uint64_t stream) {
        CdConfig c = config.cd;
        c.seed = split_seed(config.cd.seed, stream);
        return c;
    };
    auto up = [](const MatrixXd& lower, const MatrixXd& w, const VectorXd& bias) {
        MatrixXd pre = lower * w;
        pre.rowwise() += bias.transpose();
        return MatrixXd(pre.unaryExpr([](double v) { return logistic(v); }));
    };

    PretrainResult out;
    GrbmTrainResult s1 = pretrain_grbm(shapes, sz.shape_hidden1, layer_config(1));
    const MatrixXd s_std = s1.scaler.apply_rows(shapes);
    MatrixXd mu_s1 = up(s_std * s1.params.sigma.cwiseInverse().asDiagonal(), s1.params.weights, s1.params.hidden_bias);
    BinRbmTrainResult s2 = pretrain_binary(mu_s1, sz.shape_hidden2, layer_config(2));

    GrbmTrainResult g1 = pretrain_grbm(textures, sz.texture_hidden1, layer_config(3));
    const MatrixXd g_std = g1.scaler.apply_rows(textures);
    MatrixXd mu_g1 = up(g_std * g1.params.sigma.cwiseInverse().asDiagonal(), g1.params.weights, g1.params.hidden_bias);
    BinRbmTrainResult g2 = pretrain_binary(mu_g1, sz.texture_hidden2, layer_config(4));

    const MatrixXd mu_s2 = up(mu_s1, s2.params.weights, s2.params.upper_bias);
    const MatrixXd mu_g2 = up(mu_g1, g2.params.weights, g2.params.upper_bias);
    MatrixXd joint_in(shapes.rows(), sz.shape_hidden2 + sz.texture_hidden2);
    joint_in << mu_s2, mu_g2;
    BinRbmTrainResult j = pretrain_binary(joint_in, sz.joint, layer_config(5));

    DamParams& p = out.model.params;
    p.shape = {s1.params, s2.params.weights, s2.params.upper_bias};
    p.texture = {g1.params, g2.params.weights, g2.params.upper_bias};
    p.joint_shape_weights = j.params.weights.topRows(sz.shape_hidden2);
    p.joint_texture_weights = j.params.weights.bottomRows(sz.texture_hidden2);
    p.joint_bias = j.params.upper_bias;
    out.model.shape_scaler = s1.scaler;
    out.model.texture_scaler = g1.scaler;
    out.shape_log1 = std::move(s1.log);
    out.shape_log2 = std::move(s2.log);
    out.texture_log1 = std::move(g1.log);
    out.texture_log2 = std::move(g2.log);
    out.joint_log = std::move(j.log);
    p.validate();
    return out;
}

VectorXd infer_shape_from_texture(const VectorXd& texture, const DamModel& model, int sweeps, std::uint64_t seed)
{
    const DamParams& p = model.params;
    GibbsChain chain = make_chain(p, seed);
    chain.clamp(Group::kTexture, model.texture_scaler.apply(texture));
    sweeps = std::max(1, sweeps);
    const int averaged = (sweeps + 1) / 2;
    VectorXd acc = VectorXd::Zero(p.shape.bottom.num_visible());
    for (int k = 0; k < sweeps; ++k) {
        gibbs_sweep(chain, p);
        if (k >= sweeps - averaged) {
            acc += grbm_visible_given_hidden(chain.state[Group::kShapeH1], p.shape.bottom).mean;
        }
    }
    return model.shape_scaler.invert(acc / averaged);
}

VectorXd reconstruct_texture_mean(const VectorXd& shape, const VectorXd& texture, const DamModel& model, int sweeps,
                                  std::uint64_t seed)
{
    const DamParams& p = model.params;
    GibbsChain chain = make_chain(p, seed);
    chain.clamp(Group::kShape, model.shape_scaler.apply(shape));
    chain.clamp(Group::kTexture, model.texture_scaler.apply(texture));
    for (int k = 0; k < sweeps; ++k) {
        gibbs_sweep(chain, p);
    }
    const VectorXd h1 = dam_conditional(Group::kTextureH1, chain.state, p);
    return model.texture_scaler.invert(grbm_visible_given_hidden(h1, p.texture.bottom).mean);
}

VectorXd extract_appearance_features(const std::optional<VectorXd>& shape, const VectorXd& texture,
                                     const DamModel& model, int sweeps, std::uint64_t seed)
{
    const DamParams& p = model.params;
    if (shape) {
        return mean_field_infer(model.shape_scaler.apply(*shape), model.texture_scaler.apply(texture), p,
                                MeanFieldConfig{})
            .joint;
    }
    GibbsChain chain = make_chain(p, seed);
    chain.clamp(Group::kTexture, model.texture_scaler.apply(texture));
    sweeps = std::max(1, sweeps);
    const int averaged = (sweeps + 1) / 2;
    VectorXd acc = VectorXd::Zero(p.joint_bias.size());
    for (int k = 0; k < sweeps; ++k) {
        gibbs_sweep(chain, p);
        if (k >= sweeps - averaged) {
            acc += dam_conditional(Group::kJoint, chain.state, p);
        }
    }
    return acc / averaged;
}

std::vector<FaceSample> sample_faces(const DamModel& model, int n, int sweeps, std::uint64_t seed)
{
    if (n < 1) {
        throw Error("sample_faces: n must be >= 1");
    }
    std::vector<FaceSample> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        GibbsChain chain = make_chain(model.params, split_seed(seed, static_cast<std::uint64_t>(i)));
        for (int k = 0; k < sweeps; ++k) {
            gibbs_sweep(chain, model.params);
        }
        out.push_back({model.shape_scaler.invert(chain.state[Group::kShape]),
                       model.texture_scaler.invert(chain.state[Group::kTexture])});
    }
    return out;
}

} // namespace dam
