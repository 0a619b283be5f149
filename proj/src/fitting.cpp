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
#include "dam/fitting.hpp"

#include "dam/data_io.hpp"
#include "dam/synthetic.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dam {

namespace {

// Textures are in intensity units, so codes used for learning and fitting stop
// at a KKT violation relative to the signal scale.
const SparseCodeConfig kTrainingCode{1e-6, 10000, true};

void check_fit_model(const FitModel& fm, const Shape& init)
{
    if (!fm.model || !fm.frame) {
        throw FitError("fitting: model and reference frame are required");
    }
    require_size(init.coords.size(), fm.frame->mean_shape.coords.size(), "fitting initial shape");
    require_size(fm.model->params.sizes().texture_visible, fm.frame->num_pixels(), "fitting texture model");
}

double soft_threshold(double v, double t)
{
    if (v > t) {
        return v - t;
    }
    if (v < -t) {
        return v + t;
    }
    return 0.0;
}

void zero_invalid(VectorXd& r, const std::vector<std::uint8_t>& valid)
{
    for (Eigen::Index k = 0; k < r.size(); ++k) {
        if (!valid[k]) {
            r[k] = 0.0;
        }
    }
}

MatrixXd random_unit_columns(int rows, int cols, Rng& rng)
{
    std::normal_distribution<double> n(0.0, 1.0);
    MatrixXd d = MatrixXd::NullaryExpr(rows, cols, [&]() { return n(rng); });
    d.colwise().normalize();
    return d;
}

// argmin_{||d_j|| = 1} ||X - D C||_F^2 one column at a time; each update is the
// exact minimiser over that column, so the objective never increases.
bool update_unit_columns(MatrixXd& D, const MatrixXd& X, const MatrixXd& C)
{
    bool degenerate = false;
    MatrixXd R = X - D * C;
    for (Eigen::Index j = 0; j < D.cols(); ++j) {
        const auto cj = C.row(j);
        if (cj.squaredNorm() == 0.0) {
            degenerate = true;
            continue;
        }
        R.noalias() += D.col(j) * cj;
        const VectorXd v = R * cj.transpose();
        const double nv = v.norm();
        if (nv > 0.0) {
            D.col(j) = v / nv;
        }
        R.noalias() -= D.col(j) * cj;
    }
    return degenerate;
}

} // namespace

GaussNewtonStep gauss_newton_step(const MatrixXd& J, const VectorXd& r)
{
    require_size(J.rows(), r.size(), "gauss_newton_step");
    const Eigen::Index n = J.cols();
    MatrixXd A = MatrixXd::Zero(n, n);
    A.selfadjointView<Eigen::Lower>().rankUpdate(J.transpose());
    A = A.selfadjointView<Eigen::Lower>();
    GaussNewtonStep step;
    step.ridge = std::max(1e-6 * A.trace() / static_cast<double>(n), 1e-12);
    A.diagonal().array() += step.ridge;
    const Eigen::LDLT<MatrixXd> ldlt(A);
    step.delta = ldlt.solve(-(J.transpose() * r));
    step.ok = ldlt.info() == Eigen::Success && step.delta.allFinite();
    return step;
}

MatrixXd similarity_basis(const ReferenceFrame& ref)
{
    const Shape& mean = ref.mean_shape;
    const int n = mean.num_points();
    const Eigen::Vector2d c = centroid(mean);
    MatrixXd B(2 * n, 4);
    for (int i = 0; i < n; ++i) {
        const double x = mean.coords[2 * i] - c.x();
        const double y = mean.coords[2 * i + 1] - c.y();
        B.row(2 * i) << x, -y, 1.0, 0.0;
        B.row(2 * i + 1) << y, x, 0.0, 1.0;
    }
    const Eigen::HouseholderQR<MatrixXd> qr(B);
    return qr.householderQ() * MatrixXd::Identity(2 * n, 4);
}

FitTrace fit_forward_compositional(const GrayImage& image, const Shape& init, const FitModel& fm,
                                   const FitConfig& config)
{
    check_fit_model(fm, init);
    if (image.empty()) {
        throw FitError("fit_forward_compositional: empty image");
    }
    const ReferenceFrame& ref = *fm.frame;
    FitTrace trace;
    Shape s = init;
    const std::optional<MatrixXd> basis =
        config.basis == UpdateBasis::kSimilarity ? std::optional<MatrixXd>(similarity_basis(ref)) : std::nullopt;
    for (int it = 0; it < config.max_iterations; ++it) {
        const WarpResult w = warp_to_texture(image, s, ref);
        if (w.num_invalid() > config.max_invalid_fraction * ref.num_pixels()) {
            trace.aborted = true;
            trace.abort_reason = "shape leaves the image on " + std::to_string(w.num_invalid()) + " of " +
                                 std::to_string(ref.num_pixels()) + " pixels";
            break;
        }
        const Texture m = reconstruct_texture_mean(s.coords, w.texture, *fm.model, config.gibbs_sweeps,
                                                   split_seed(config.seed, static_cast<std::uint64_t>(it)));
        VectorXd r = w.texture - m;
        zero_invalid(r, w.valid);
        WarpJacobian jac = warp_jacobian(image, s, ref, JacobianFrame::kReference);
        for (Eigen::Index k = 0; k < jac.matrix.rows(); ++k) {
            if (!w.valid[k] || !jac.valid[k]) {
                jac.matrix.row(k).setZero();
                r[k] = 0.0;
            }
        }
        GaussNewtonStep step = basis ? gauss_newton_step(jac.matrix * *basis, r) : gauss_newton_step(jac.matrix, r);
        if (!step.ok) {
            trace.aborted = true;
            trace.abort_reason = "singular normal equations";
            break;
        }
        const VectorXd delta = basis ? VectorXd(*basis * step.delta) : step.delta;
        s = compose_shape(s, delta, ref).shape;
        const double step_norm = delta.lpNorm<Eigen::Infinity>();
        trace.iterations.push_back({s, r.norm(), step_norm, w.num_invalid()});
        if (step_norm < config.tolerance) {
            trace.converged = true;
            break;
        }
    }
    trace.final_shape = s;
    return trace;
}

// ---------------------------------------------------------------------------

SparseCoder::SparseCoder(MatrixXd dictionary, SparseCodeConfig config)
    : dictionary_(std::move(dictionary)), config_(config)
{
    gram_ = dictionary_.transpose() * dictionary_;
}

VectorXd SparseCoder::encode(const VectorXd& x, double lambda, const VectorXd* warm_start) const
{
    require_size(x.size(), dictionary_.rows(), "sparse_code signal");
    if (lambda < 0.0) {
        throw Error("sparse_code: lambda must be >= 0");
    }
    const Eigen::Index l = dictionary_.cols();
    VectorXd c = VectorXd::Zero(l);
    if (warm_start) {
        require_size(warm_start->size(), l, "sparse_code warm start");
        c = *warm_start;
    }
    // g = D^T (x - D c); the objective's gradient is -2 g
    VectorXd g = dictionary_.transpose() * x;
    const double tolerance =
        config_.relative ? config_.tolerance * std::max(1.0, g.lpNorm<Eigen::Infinity>()) : config_.tolerance;
    g.noalias() -= gram_ * c;
    const double t = 0.5 * lambda;
    for (int sweep = 0; sweep < config_.max_sweeps; ++sweep) {
        for (Eigen::Index j = 0; j < l; ++j) {
            const double gjj = gram_(j, j);
            if (gjj <= 0.0) {
                continue;
            }
            const double next = soft_threshold(g[j] + gjj * c[j], t) / gjj;
            const double d = next - c[j];
            if (d != 0.0) {
                g.noalias() -= gram_.col(j) * d;
                c[j] = next;
            }
        }
        double worst = 0.0;
        for (Eigen::Index j = 0; j < l; ++j) {
            if (gram_(j, j) <= 0.0) {
                continue;
            }
            worst = std::max(worst, c[j] == 0.0 ? std::abs(g[j]) - t : std::abs(g[j] - t * (c[j] > 0 ? 1.0 : -1.0)));
        }
        if (worst <= tolerance) {
            break;
        }
    }
    return c;
}

double SparseCoder::kkt_violation(const VectorXd& x, const VectorXd& c, double lambda) const
{
    const VectorXd g = dictionary_.transpose() * (x - dictionary_ * c);
    const double t = 0.5 * lambda;
    double worst = 0.0;
    for (Eigen::Index j = 0; j < c.size(); ++j) {
        worst = std::max(worst, c[j] == 0.0 ? std::abs(g[j]) - t : std::abs(g[j] - t * (c[j] > 0 ? 1.0 : -1.0)));
    }
    return worst;
}

VectorXd sparse_code(const VectorXd& x, const MatrixXd& dictionary, double lambda, const SparseCodeConfig& config)
{
    return SparseCoder(dictionary, config).encode(x, lambda);
}

double lasso_objective(const VectorXd& x, const MatrixXd& dictionary, const VectorXd& c, double lambda)
{
    return (x - dictionary * c).squaredNorm() + lambda * c.lpNorm<1>();
}

double dictionary_objective(const MatrixXd& Y, const MatrixXd& M, const MatrixXd& D_I, const MatrixXd& D_m,
                            const MatrixXd& C, double lambda)
{
    const double n = static_cast<double>(Y.cols());
    return ((Y - D_I * C).squaredNorm() + (M - D_m * C).squaredNorm() + lambda * C.cwiseAbs().sum()) / n;
}

DictLearnResult learn_fitting_dictionaries(const MatrixXd& Y, const MatrixXd& M, const DictLearnConfig& config)
{
    if (Y.rows() != M.rows() || Y.cols() != M.cols() || Y.cols() == 0) {
        throw DimensionError("learn_fitting_dictionaries: Y and M must be nonempty and the same size");
    }
    if (config.atoms < 1 || config.max_outer < 1) {
        throw Error("learn_fitting_dictionaries: atoms and max_outer must be >= 1");
    }
    const int K = static_cast<int>(Y.rows());
    const int N = static_cast<int>(Y.cols());
    const int l = config.atoms;
    Rng rng(config.seed);

    DictLearnResult out;
    MatrixXd& D_I = out.dictionaries.image_dictionary;
    MatrixXd& D_m = out.dictionaries.reconstruction_dictionary;
    D_I = config.init_image_dictionary ? *config.init_image_dictionary : random_unit_columns(K, l, rng);
    D_m = config.init_reconstruction_dictionary ? *config.init_reconstruction_dictionary
                                                : random_unit_columns(K, l, rng);
    if (D_I.rows() != K || D_I.cols() != l || D_m.rows() != K || D_m.cols() != l) {
        throw DimensionError("learn_fitting_dictionaries: initial dictionaries must be K x atoms");
    }

    MatrixXd X(2 * K, N);
    X << Y, M;
    auto stacked = [&]() {
        MatrixXd D(2 * K, l);
        D << D_I, D_m;
        return D;
    };

    double lambda = config.lambda;
    if (lambda <= 0.0) {
        const MatrixXd proj = stacked().transpose() * X;
        lambda = 0.1 * proj.cwiseAbs().colwise().maxCoeff().mean();
        if (lambda <= 0.0) {
            lambda = 1e-6;
        }
    }
    out.dictionaries.lambda = lambda;

    MatrixXd& C = out.codes;
    C = MatrixXd::Zero(l, N);
    // Codes shared by both dictionaries: argmin_c ||y - D_I c||^2 + ||m - D_m c||^2 + lambda |c|_1.
    auto code = [&]() {
        const SparseCoder coder(stacked(), kTrainingCode);
        for (int i = 0; i < N; ++i) {
            const VectorXd warm = C.col(i);
            C.col(i) = coder.encode(X.col(i), lambda, &warm);
        }
    };
    auto objective = [&]() { return dictionary_objective(Y, M, D_I, D_m, C, lambda); };

    code();
    out.objective.push_back(objective());
    for (int outer = 0; outer < config.max_outer; ++outer) {
        // (1) D_m fixed: codes, then D_I
        code();
        out.degenerate_codes |= update_unit_columns(D_I, Y, C);
        // (2) D_m from M ~ D_m C
        out.degenerate_codes |= update_unit_columns(D_m, M, C);
        // (3) D_I fixed: codes, then D_m
        code();
        out.degenerate_codes |= update_unit_columns(D_m, M, C);
        // (4) D_I from Y ~ D_I C
        out.degenerate_codes |= update_unit_columns(D_I, Y, C);

        // Sign convention (objective unchanged): each D_I column sums to >= 0.
        for (int j = 0; j < l; ++j) {
            if (D_I.col(j).sum() < 0.0) {
                D_I.col(j) *= -1.0;
                D_m.col(j) *= -1.0;
                C.row(j) *= -1.0;
            }
        }
        const double prev = out.objective.back();
        const double now = objective();
        out.objective.push_back(now);
        out.outer_iterations = outer + 1;
        if (std::abs(prev - now) <= config.relative_tolerance * std::max(std::abs(prev), 1e-300)) {
            out.converged = true;
            break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

RegressorFit fit_linear_regressor(const MatrixXd& X, const MatrixXd& T, double ridge_scale)
{
    if (X.cols() != T.cols() || X.cols() == 0) {
        throw DimensionError("fit_linear_regressor: features and targets need the same nonzero sample count");
    }
    const VectorXd mx = X.rowwise().mean();
    const VectorXd mt = T.rowwise().mean();
    const MatrixXd Xc = X.colwise() - mx;
    const MatrixXd Tc = T.colwise() - mt;
    MatrixXd A = Xc * Xc.transpose();
    const double l = static_cast<double>(X.rows());

    RegressorFit fit;
    fit.ridge = ridge_scale * A.trace() / l;
    if (!(fit.ridge > 0.0)) {
        fit.ridge = 1e-12;
        fit.ridge_increased = true;
    }
    const MatrixXd rhs = Xc * Tc.transpose();
    MatrixXd Ht;
    for (int attempt = 0;; ++attempt) {
        MatrixXd Ar = A;
        Ar.diagonal().array() += fit.ridge;
        const Eigen::LDLT<MatrixXd> ldlt(Ar);
        Ht = ldlt.solve(rhs);
        if ((ldlt.info() == Eigen::Success && ldlt.isPositive() && Ht.allFinite()) || attempt >= 20) {
            break;
        }
        fit.ridge *= 10.0;
        fit.ridge_increased = true;
    }
    fit.regressor.H = Ht.transpose();
    fit.regressor.b = mt - fit.regressor.H * mx;
    fit.training_residual = ((fit.regressor.H * X).colwise() + fit.regressor.b - T).squaredNorm();
    fit.zero_residual = T.squaredNorm();
    return fit;
}

Shape perturb_shape(const Shape& shape, const PerturbationConfig& config, Rng& rng)
{
    const double size = face_size(shape);
    std::uniform_real_distribution<double> t(-config.max_translation * size, config.max_translation * size);
    std::uniform_real_distribution<double> sc(config.min_scale, config.max_scale);
    std::uniform_real_distribution<double> rot(-config.max_rotation_deg, config.max_rotation_deg);
    const double tx = t(rng);
    const double ty = t(rng);
    const double scale = sc(rng);
    const double angle = rot(rng) * std::numbers::pi / 180.0;
    return similarity_transform(shape, scale, angle, {tx, ty});
}

TexturePair texture_pair(const GrayImage& image, const Shape& shape, const FitModel& fm, int sweeps,
                         std::uint64_t seed)
{
    TexturePair p;
    p.warp = warp_to_texture(image, shape, *fm.frame);
    p.reconstruction = reconstruct_texture_mean(shape.coords, p.warp.texture, *fm.model, sweeps, seed);
    return p;
}

VectorXd code_difference(const TexturePair& pair, const DictPair& dict, const SparseCoder& image_coder,
                         const SparseCoder& reconstruction_coder)
{
    // invalid samples carry no information; substitute the reconstruction there
    VectorXd iw = pair.warp.texture;
    for (Eigen::Index k = 0; k < iw.size(); ++k) {
        if (!pair.warp.valid[k]) {
            iw[k] = pair.reconstruction[k];
        }
    }
    return image_coder.encode(iw, dict.lambda) - reconstruction_coder.encode(pair.reconstruction, dict.lambda);
}

RegressorFit train_shape_regressor(const std::vector<RegressorTrainingFace>& faces, const DictPair& dict,
                                   const FitModel& fm, const RegressorTrainConfig& config)
{
    if (faces.empty()) {
        throw Error("train_shape_regressor: no training faces");
    }
    const SparseCoder image_coder(dict.image_dictionary, kTrainingCode);
    const SparseCoder reconstruction_coder(dict.reconstruction_dictionary, kTrainingCode);
    const int per_face = std::max(1, config.perturbation.per_face);
    std::vector<VectorXd> xs, ts;
    for (std::size_t i = 0; i < faces.size(); ++i) {
        check_fit_model(fm, faces[i].truth);
        for (int k = 0; k < per_face; ++k) {
            const std::uint64_t stream = i * static_cast<std::uint64_t>(per_face) + k;
            Rng rng(split_seed(config.seed, stream));
            const Shape start = perturb_shape(faces[i].truth, config.perturbation, rng);
            const GrayImage* image = faces[i].image;
            GrayImage occluded;
            if (config.occlusion_area > 0.0 &&
                std::uniform_real_distribution<double>(0.0, 1.0)(rng) < config.occlusion_probability) {
                occluded = *image;
                const double intensity = std::uniform_real_distribution<double>(0.0, 255.0)(rng);
                add_occlusion(occluded, faces[i].truth, config.occlusion_area, intensity, rng);
                image = &occluded;
            }
            const TexturePair pair =
                texture_pair(*image, start, fm, config.gibbs_sweeps, split_seed(config.seed, 1'000'000 + stream));
            if (pair.warp.num_invalid() > 0.5 * fm.frame->num_pixels()) {
                continue;
            }
            xs.push_back(code_difference(pair, dict, image_coder, reconstruction_coder));
            ts.push_back(relative_increment(start, faces[i].truth, *fm.frame));
        }
    }
    if (xs.empty()) {
        throw FitError("train_shape_regressor: every perturbed sample left the image");
    }
    MatrixXd X(xs.front().size(), static_cast<Eigen::Index>(xs.size()));
    MatrixXd T(ts.front().size(), static_cast<Eigen::Index>(ts.size()));
    for (std::size_t j = 0; j < xs.size(); ++j) {
        X.col(static_cast<Eigen::Index>(j)) = xs[j];
        T.col(static_cast<Eigen::Index>(j)) = ts[j];
    }
    if (config.basis == UpdateBasis::kFull) {
        return fit_linear_regressor(X, T, config.ridge_scale);
    }
    // fit in subspace coordinates, then map H and b back to landmark increments
    const MatrixXd Q = similarity_basis(*fm.frame);
    RegressorFit fit = fit_linear_regressor(X, Q.transpose() * T, config.ridge_scale);
    fit.regressor.H = Q * fit.regressor.H;
    fit.regressor.b = Q * fit.regressor.b;
    fit.training_residual = ((fit.regressor.H * X).colwise() + fit.regressor.b - T).squaredNorm();
    fit.zero_residual = T.squaredNorm();
    return fit;
}

FitTrace fit_dictionary_regression(const GrayImage& image, const Shape& init, const FitModel& fm,
                                   const DictPair& dict, const UpdateRegressor& regressor,
                                   const DictFitConfig& config)
{
    check_fit_model(fm, init);
    if (image.empty()) {
        throw FitError("fit_dictionary_regression: empty image");
    }
    require_size(regressor.H.rows(), init.coords.size(), "regressor rows");
    require_size(regressor.H.cols(), dict.atoms(), "regressor columns");
    const ReferenceFrame& ref = *fm.frame;
    const SparseCoder image_coder(dict.image_dictionary, kTrainingCode);
    const SparseCoder reconstruction_coder(dict.reconstruction_dictionary, kTrainingCode);

    FitTrace trace;
    Shape s = init;
    for (int it = 0; it < config.max_iterations; ++it) {
        const TexturePair pair =
            texture_pair(image, s, fm, config.gibbs_sweeps, split_seed(config.seed, static_cast<std::uint64_t>(it)));
        if (pair.warp.num_invalid() > config.max_invalid_fraction * ref.num_pixels()) {
            trace.aborted = true;
            trace.abort_reason = "shape leaves the image on " + std::to_string(pair.warp.num_invalid()) + " of " +
                                 std::to_string(ref.num_pixels()) + " pixels";
            break;
        }
        VectorXd r = pair.warp.texture - pair.reconstruction;
        zero_invalid(r, pair.warp.valid);
        const VectorXd delta = regressor.apply(code_difference(pair, dict, image_coder, reconstruction_coder));
        s = compose_shape(s, delta, ref).shape;
        const double step_norm = delta.lpNorm<Eigen::Infinity>();
        trace.iterations.push_back({s, r.norm(), step_norm, pair.warp.num_invalid()});
        if (step_norm < config.tolerance) {
            trace.converged = true;
            break;
        }
    }
    trace.final_shape = s;
    return trace;
}

double normalized_error(const Shape& fitted, const Shape& truth)
{
    require_size(fitted.coords.size(), truth.coords.size(), "normalized_error");
    double sum = 0.0;
    for (int i = 0; i < truth.num_points(); ++i) {
        sum += (fitted.point(i) - truth.point(i)).norm();
    }
    return sum / truth.num_points() / face_size(truth);
}

std::string fit_trace_csv(const FitTrace& trace, const std::optional<Shape>& truth)
{
    std::string out = "iteration,residual,step_norm,normalized_error\n";
    for (std::size_t i = 0; i < trace.iterations.size(); ++i) {
        const FitIteration& it = trace.iterations[i];
        out += std::to_string(i + 1) + "," + format_double(it.residual_norm) + "," + format_double(it.step_norm) + ",";
        if (truth) {
            out += format_double(normalized_error(it.shape, *truth));
        }
        out += "\n";
    }
    return out;
}

} // namespace dam
