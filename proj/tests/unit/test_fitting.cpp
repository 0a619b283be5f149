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
#include "dam/synthetic.hpp"
#include "test_support.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace dam;

namespace {

MatrixXd gaussian_matrix(int rows, int cols, Rng& rng)
{
    std::normal_distribution<double> n(0.0, 1.0);
    return MatrixXd::NullaryExpr(rows, cols, [&]() { return n(rng); });
}

MatrixXd unit_columns(int rows, int cols, Rng& rng)
{
    MatrixXd d = gaussian_matrix(rows, cols, rng);
    d.colwise().normalize();
    return d;
}

// Proximal gradient on ||x - D c||^2 + lambda |c|_1, run far past convergence.
VectorXd ista(const VectorXd& x, const MatrixXd& D, double lambda, int iterations)
{
    const Eigen::JacobiSVD<MatrixXd> svd(D);
    const double L = 2.0 * svd.singularValues()[0] * svd.singularValues()[0];
    VectorXd c = VectorXd::Zero(D.cols());
    for (int it = 0; it < iterations; ++it) {
        const VectorXd z = c + 2.0 * D.transpose() * (x - D * c) / L;
        for (Eigen::Index j = 0; j < c.size(); ++j) {
            const double t = lambda / L;
            c[j] = z[j] > t ? z[j] - t : (z[j] < -t ? z[j] + t : 0.0);
        }
    }
    return c;
}

struct FaceSetup
{
    SyntheticFace face;
    ReferenceFrame frame;
    DamModel model;
};

// Bias-only model whose reconstruction is the face's own shape-free texture, so
// the true shape is an exact fixed point of both fitters.
FaceSetup template_setup(std::uint64_t seed = 3)
{
    SyntheticConfig cfg;
    cfg.noise_stddev = 0.0;
    FaceSetup s{generate_face(cfg, seed, "f"), {}, {}};
    std::vector<Shape> shapes{s.face.shape};
    s.frame = build_reference_frame(shapes, {40, 40});
    LayerSizes sizes{136, 2, 2, s.frame.num_pixels(), 2, 2, 2};
    DamParams p = DamParams::zeros(sizes);
    p.texture.bottom.visible_bias = warp_to_texture(s.face.image, s.face.shape, s.frame).texture;
    s.model = DamModel::with_identity_scalers(std::move(p));
    return s;
}

Shape shifted(const Shape& shape, double dx, double dy)
{
    return similarity_transform(shape, 1.0, 0.0, {dx, dy});
}

} // namespace

TEST_SUITE("fitting")
{
    TEST_CASE("Gauss-Newton step solves the ridge-adjusted normal equations")
    {
        Rng rng(1);
        for (int trial = 0; trial < 10; ++trial) {
            const MatrixXd J = gaussian_matrix(40, 6, rng);
            const VectorXd r = gaussian_matrix(40, 1, rng);
            const GaussNewtonStep step = gauss_newton_step(J, r);
            REQUIRE(step.ok);
            const MatrixXd JtJ = J.transpose() * J;
            CHECK(step.ridge == doctest::Approx(1e-6 * JtJ.trace() / 6.0).epsilon(1e-12));
            const VectorXd lhs = J.transpose() * (J * step.delta + r);
            const VectorXd rhs = -step.ridge * step.delta;
            CHECK((lhs - rhs).norm() <= 1e-8 * (J.transpose() * r).norm());
        }
    }

    TEST_CASE("a zero Jacobian gives a zero step")
    {
        const GaussNewtonStep step = gauss_newton_step(MatrixXd::Zero(30, 4), VectorXd::Constant(30, 2.0));
        CHECK(step.ok);
        CHECK(step.ridge == 1e-12);
        CHECK(step.delta.norm() == 0.0);
    }

    TEST_CASE("similarity basis is orthonormal and contains translations")
    {
        const FaceSetup s = template_setup();
        const MatrixXd Q = similarity_basis(s.frame);
        REQUIRE(Q.rows() == 136);
        REQUIRE(Q.cols() == 4);
        CHECK((Q.transpose() * Q - MatrixXd::Identity(4, 4)).norm() < 1e-12);
        VectorXd tx(136);
        for (int i = 0; i < 68; ++i) {
            tx[2 * i] = 1.0;
            tx[2 * i + 1] = 0.0;
        }
        CHECK((Q * (Q.transpose() * tx) - tx).norm() < 1e-10);
    }

    TEST_CASE("forward-compositional fit: the true shape is a fixed point")
    {
        const FaceSetup s = template_setup();
        const FitModel fm{&s.model, &s.frame};
        for (UpdateBasis basis : {UpdateBasis::kSimilarity, UpdateBasis::kFull}) {
            FitConfig cfg;
            cfg.basis = basis;
            const FitTrace trace = fit_forward_compositional(s.face.image, s.face.shape, fm, cfg);
            REQUIRE(!trace.iterations.empty());
            CHECK(trace.iterations.front().residual_norm < 1e-9);
            CHECK(trace.iterations.front().step_norm < 1e-3 * face_size(s.face.shape));
            CHECK(trace.converged);
            CHECK(trace.final_shape == trace.iterations.back().shape);
        }
    }

    TEST_CASE("forward-compositional fit recovers a small translation")
    {
        const FaceSetup s = template_setup();
        const FitModel fm{&s.model, &s.frame};
        const double fs = face_size(s.face.shape);
        const Shape init = shifted(s.face.shape, 0.05 * fs, -0.03 * fs);
        const FitTrace trace = fit_forward_compositional(s.face.image, init, fm);
        REQUIRE(!trace.aborted);
        CHECK(trace.iterations.size() <= 30u);
        const double before = normalized_error(init, s.face.shape);
        const double after = normalized_error(trace.final_shape, s.face.shape);
        MESSAGE("normalized error " << before << " -> " << after);
        CHECK(after < 0.2 * before);
    }

    TEST_CASE("forward-compositional fit on a constant image does not move")
    {
        const FaceSetup s = template_setup();
        const FitModel fm{&s.model, &s.frame};
        const GrayImage flat(s.face.image.width(), s.face.image.height(), 90.0);
        FitConfig cfg;
        cfg.max_iterations = 3;
        cfg.tolerance = -1.0;
        const FitTrace trace = fit_forward_compositional(flat, s.face.shape, fm, cfg);
        REQUIRE(trace.iterations.size() == 3u);
        for (const FitIteration& it : trace.iterations) {
            CHECK(it.step_norm < 1e-9);
            CHECK(it.residual_norm == doctest::Approx(trace.iterations.front().residual_norm).epsilon(1e-9));
        }
    }

    TEST_CASE("fits abort when the shape leaves the image")
    {
        const FaceSetup s = template_setup();
        const FitModel fm{&s.model, &s.frame};
        const Shape far = shifted(s.face.shape, 500.0, 0.0);
        const FitTrace fc = fit_forward_compositional(s.face.image, far, fm);
        CHECK(fc.aborted);
        CHECK(fc.iterations.empty());
        CHECK(fc.final_shape == far);
        CHECK_THROWS_AS(fit_forward_compositional(GrayImage{}, s.face.shape, fm), FitError);
        CHECK_THROWS_AS(fit_forward_compositional(s.face.image, Shape(VectorXd::Zero(10)), fm), Error);
    }

    TEST_CASE("fit traces are deterministic for a fixed seed")
    {
        Rng rng(5);
        const FaceSetup s = template_setup();
        DamModel noisy = s.model;
        noisy.params = DamParams::random(noisy.params.sizes(), 0.01, rng);
        noisy.params.texture.bottom.visible_bias = s.model.params.texture.bottom.visible_bias;
        const FitModel fm{&noisy, &s.frame};
        const Shape init = shifted(s.face.shape, 1.0, 1.0);
        FitConfig cfg;
        cfg.max_iterations = 4;
        const FitTrace a = fit_forward_compositional(s.face.image, init, fm, cfg);
        const FitTrace b = fit_forward_compositional(s.face.image, init, fm, cfg);
        CHECK(fit_trace_csv(a, s.face.shape) == fit_trace_csv(b, s.face.shape));
        CHECK(a.final_shape == b.final_shape);
    }

    TEST_CASE("sparse code of zero is zero")
    {
        Rng rng(2);
        const MatrixXd D = unit_columns(10, 6, rng);
        CHECK(sparse_code(VectorXd::Zero(10), D, 0.3).norm() == 0.0);
    }

    TEST_CASE("sparse code with lambda 0 and an orthonormal dictionary is D^T x")
    {
        Rng rng(3);
        const Eigen::HouseholderQR<MatrixXd> qr(gaussian_matrix(12, 5, rng));
        const MatrixXd D = qr.householderQ() * MatrixXd::Identity(12, 5);
        const VectorXd x = gaussian_matrix(12, 1, rng);
        CHECK((sparse_code(x, D, 0.0) - D.transpose() * x).norm() < 1e-9);
    }

    TEST_CASE("a large lambda switches every coefficient off")
    {
        Rng rng(4);
        const MatrixXd D = unit_columns(10, 6, rng);
        const VectorXd x = gaussian_matrix(10, 1, rng);
        const double lam = 2.0 * (D.transpose() * x).cwiseAbs().maxCoeff() * 1.0001;
        CHECK(sparse_code(x, D, lam).norm() == 0.0);
        CHECK(sparse_code(x, D, 0.98 * lam).norm() > 0.0);
        CHECK_THROWS_AS(sparse_code(x, D, -1.0), Error);
    }

    TEST_CASE("sparse codes satisfy the LASSO optimality conditions")
    {
        Rng rng(5);
        std::uniform_int_distribution<int> dim(3, 20);
        std::uniform_real_distribution<double> lam(0.01, 2.0);
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            const int K = dim(rng);
            const int l = dim(rng);
            const MatrixXd D = unit_columns(K, l, rng);
            const VectorXd x = gaussian_matrix(K, 1, rng);
            const double lambda = lam(rng);
            const VectorXd c = sparse_code(x, D, lambda);
            // objective ||x - Dc||^2 + lambda |c|_1: D^T r = (lambda / 2) sign(c) on the support
            const VectorXd g = D.transpose() * (x - D * c);
            for (int j = 0; j < l; ++j) {
                const double v = c[j] == 0.0 ? std::abs(g[j]) - lambda / 2 : std::abs(g[j] - lambda / 2 * (c[j] > 0 ? 1 : -1));
                worst = std::max(worst, v);
            }
            CHECK(SparseCoder(D).kkt_violation(x, c, lambda) <= 1e-6);
        }
        CHECK(worst <= 1e-6);
    }

    TEST_CASE("sparse code beats random candidates and matches a proximal-gradient solve")
    {
        Rng rng(6);
        const MatrixXd D = unit_columns(8, 4, rng);
        const VectorXd x = gaussian_matrix(8, 1, rng);
        const double lambda = 0.4;
        const VectorXd c = sparse_code(x, D, lambda);
        const double best = lasso_objective(x, D, c, lambda);
        CHECK(best == doctest::Approx((x - D * c).squaredNorm() + lambda * c.cwiseAbs().sum()).epsilon(1e-14));

        std::normal_distribution<double> jitter(0.0, 1.0);
        std::uniform_real_distribution<double> spread(-3.0, 3.0);
        int beaten = 0;
        for (int i = 0; i < 1000000; ++i) {
            VectorXd cand(4);
            if (i % 2 == 0) {
                for (int j = 0; j < 4; ++j) cand[j] = spread(rng);
            } else {
                for (int j = 0; j < 4; ++j) cand[j] = c[j] + 1e-2 * jitter(rng);
            }
            beaten += lasso_objective(x, D, cand, lambda) < best - 1e-12;
        }
        CHECK(beaten == 0);
        const VectorXd ref = ista(x, D, lambda, 200000);
        CHECK((c - ref).cwiseAbs().maxCoeff() < 1e-5);
    }

    TEST_CASE("relative tolerance scales with the correlation of the input")
    {
        Rng rng(7);
        const MatrixXd D = unit_columns(15, 10, rng);
        const VectorXd x = 1e3 * gaussian_matrix(15, 1, rng);
        const SparseCodeConfig rel{1e-6, 10000, true};
        const SparseCoder coder(D, rel);
        const VectorXd c = coder.encode(x, 50.0);
        const double scale = std::max(1.0, (D.transpose() * x).cwiseAbs().maxCoeff());
        CHECK(coder.kkt_violation(x, c, 50.0) <= 1e-6 * scale);
        // a warm start at the answer is already converged
        CHECK((coder.encode(x, 50.0, &c) - c).norm() <= 1e-6 * c.norm());
    }

    TEST_CASE("dictionary objective matches a per-sample sum")
    {
        Rng rng(8);
        const MatrixXd Y = gaussian_matrix(6, 5, rng), M = gaussian_matrix(6, 5, rng);
        const MatrixXd DI = unit_columns(6, 3, rng), Dm = unit_columns(6, 3, rng);
        const MatrixXd C = gaussian_matrix(3, 5, rng);
        double sum = 0.0;
        for (int i = 0; i < 5; ++i) {
            sum += (Y.col(i) - DI * C.col(i)).squaredNorm() + (M.col(i) - Dm * C.col(i)).squaredNorm() +
                   0.7 * C.col(i).lpNorm<1>();
        }
        CHECK(dictionary_objective(Y, M, DI, Dm, C, 0.7) == doctest::Approx(sum / 5).epsilon(1e-13));
    }

    TEST_CASE("dictionary learning decreases its objective and keeps unit columns")
    {
        Rng rng(9);
        const MatrixXd latent = gaussian_matrix(5, 60, rng);
        const MatrixXd Y = gaussian_matrix(20, 5, rng) * latent + 0.1 * gaussian_matrix(20, 60, rng);
        const MatrixXd M = gaussian_matrix(20, 5, rng) * latent + 0.1 * gaussian_matrix(20, 60, rng);
        DictLearnConfig cfg;
        cfg.atoms = 8;
        cfg.max_outer = 25;
        cfg.relative_tolerance = 0.0;
        const DictLearnResult r = learn_fitting_dictionaries(Y, M, cfg);
        REQUIRE(r.objective.size() == static_cast<std::size_t>(r.outer_iterations) + 1);
        for (std::size_t i = 1; i < r.objective.size(); ++i) {
            CHECK(r.objective[i] <= r.objective[i - 1] + 1e-8);
        }
        CHECK(r.objective.back() < r.objective.front());
        const DictPair& d = r.dictionaries;
        CHECK(d.lambda > 0.0);
        CHECK(d.atoms() == 8);
        for (int j = 0; j < 8; ++j) {
            CHECK(std::abs(d.image_dictionary.col(j).norm() - 1.0) < 1e-6);
            CHECK(std::abs(d.reconstruction_dictionary.col(j).norm() - 1.0) < 1e-6);
        }
        CHECK(dictionary_objective(Y, M, d.image_dictionary, d.reconstruction_dictionary, r.codes, d.lambda) ==
              doctest::Approx(r.objective.back()).epsilon(1e-12));

        const DictLearnResult again = learn_fitting_dictionaries(Y, M, cfg);
        CHECK(again.dictionaries == r.dictionaries);
    }

    TEST_CASE("identical image and reconstruction give identical dictionaries")
    {
        Rng rng(10);
        const MatrixXd Y = gaussian_matrix(12, 3, rng) * gaussian_matrix(3, 40, rng);
        const MatrixXd D0 = unit_columns(12, 5, rng);
        DictLearnConfig cfg;
        cfg.atoms = 5;
        cfg.lambda = 0.5;
        cfg.max_outer = 20;
        cfg.init_image_dictionary = &D0;
        cfg.init_reconstruction_dictionary = &D0;
        const DictLearnResult r = learn_fitting_dictionaries(Y, Y, cfg);
        CHECK((r.dictionaries.image_dictionary - r.dictionaries.reconstruction_dictionary).norm() < 1e-3);
    }

    TEST_CASE("one atom and identical pairs recover the normalized pair")
    {
        Rng rng(11);
        const VectorXd y = gaussian_matrix(7, 1, rng), m = gaussian_matrix(7, 1, rng);
        const MatrixXd Y = y.replicate(1, 6), M = m.replicate(1, 6);
        DictLearnConfig cfg;
        cfg.atoms = 1;
        cfg.lambda = 0.1;
        const DictLearnResult r = learn_fitting_dictionaries(Y, M, cfg);
        const VectorXd dI = r.dictionaries.image_dictionary.col(0);
        const VectorXd dm = r.dictionaries.reconstruction_dictionary.col(0);
        CHECK(std::abs(std::abs(dI.dot(y.normalized())) - 1.0) < 1e-6);
        CHECK(std::abs(std::abs(dm.dot(m.normalized())) - 1.0) < 1e-6);
        CHECK(r.codes.maxCoeff() - r.codes.minCoeff() < 1e-9);
    }

    TEST_CASE("dictionary learning rejects mismatched inputs")
    {
        CHECK_THROWS_AS(learn_fitting_dictionaries(MatrixXd::Zero(4, 3), MatrixXd::Zero(5, 3), {}), DimensionError);
        DictLearnConfig cfg;
        cfg.atoms = 0;
        CHECK_THROWS_AS(learn_fitting_dictionaries(MatrixXd::Ones(4, 3), MatrixXd::Ones(4, 3), cfg), Error);
    }

    TEST_CASE("linear regressor recovers a planted map")
    {
        Rng rng(12);
        const MatrixXd H = gaussian_matrix(6, 10, rng);
        const VectorXd b = gaussian_matrix(6, 1, rng);
        const MatrixXd X = gaussian_matrix(10, 400, rng);
        const MatrixXd T = (H * X).colwise() + b;
        const RegressorFit fit = fit_linear_regressor(X, T, 1e-8);
        CHECK(test::relative_error(fit.regressor.H, H) < 1e-3);
        CHECK((fit.regressor.b - b).norm() < 1e-3 * b.norm());
        CHECK(fit.training_residual <= fit.zero_residual);

        // the default ridge shrinks only slightly
        const RegressorFit shrunk = fit_linear_regressor(X, T);
        CHECK(test::relative_error(shrunk.regressor.H, H) < 1e-3);
    }

    TEST_CASE("zero targets give a zero regressor")
    {
        Rng rng(13);
        const RegressorFit fit = fit_linear_regressor(gaussian_matrix(5, 30, rng), MatrixXd::Zero(4, 30));
        CHECK(fit.regressor.H.norm() == 0.0);
        CHECK(fit.regressor.b.norm() == 0.0);
        CHECK(fit.training_residual == 0.0);
    }

    TEST_CASE("regression beats the zero regressor on noisy targets")
    {
        Rng rng(14);
        const MatrixXd X = gaussian_matrix(8, 12, rng);
        const MatrixXd T = gaussian_matrix(3, 12, rng);
        const RegressorFit fit = fit_linear_regressor(X, T);
        CHECK(fit.training_residual <= fit.zero_residual);
        CHECK(fit.regressor.H.allFinite());
        const RegressorFit constant = fit_linear_regressor(MatrixXd::Zero(8, 12), T);
        CHECK(constant.ridge_increased);
        CHECK((constant.regressor.b - T.rowwise().mean()).norm() < 1e-12);
    }

    TEST_CASE("shape perturbations stay inside the configured ranges")
    {
        const SyntheticFace f = generate_face(SyntheticConfig{}, 2, "f");
        const double fs = face_size(f.shape);
        const Eigen::Vector2d c0 = centroid(f.shape);
        PerturbationConfig cfg;
        Rng rng(15);
        double max_t = 0.0;
        for (int i = 0; i < 500; ++i) {
            const Shape p = perturb_shape(f.shape, cfg, rng);
            const Eigen::Vector2d d = centroid(p) - c0;
            CHECK(std::abs(d.x()) <= 0.10 * fs + 1e-9);
            CHECK(std::abs(d.y()) <= 0.10 * fs + 1e-9);
            max_t = std::max(max_t, d.cwiseAbs().maxCoeff());
            // scale and angle from the first landmark about the centroid
            const Eigen::Vector2d a = f.shape.point(0) - c0, b = p.point(0) - centroid(p);
            const double ratio = b.norm() / a.norm();
            CHECK(ratio >= 0.9 - 1e-9);
            CHECK(ratio <= 1.1 + 1e-9);
            const double angle = std::atan2(a.x() * b.y() - a.y() * b.x(), a.dot(b)) * 180.0 / std::numbers::pi;
            CHECK(std::abs(angle) <= 10.0 + 1e-9);
        }
        CHECK(max_t > 0.05 * fs);
        Rng r1(3), r2(3);
        CHECK(perturb_shape(f.shape, cfg, r1) == perturb_shape(f.shape, cfg, r2));
    }

    TEST_CASE("dictionary fitter: the zero regressor never moves the shape")
    {
        const FaceSetup s = template_setup();
        const FitModel fm{&s.model, &s.frame};
        Rng rng(16);
        DictPair dict{unit_columns(s.frame.num_pixels(), 6, rng), unit_columns(s.frame.num_pixels(), 6, rng), 1.0};
        const UpdateRegressor zero{MatrixXd::Zero(136, 6), VectorXd::Zero(136)};
        const Shape init = shifted(s.face.shape, 1.5, -1.0);
        DictFitConfig cfg;
        cfg.tolerance = -1.0;
        cfg.max_iterations = 3;
        const FitTrace trace = fit_dictionary_regression(s.face.image, init, fm, dict, zero, cfg);
        REQUIRE(trace.iterations.size() == 3u);
        for (const FitIteration& it : trace.iterations) {
            CHECK(it.shape == init);
            CHECK(it.step_norm == 0.0);
        }
        CHECK(trace.final_shape == init);
        const UpdateRegressor wrong{MatrixXd::Zero(10, 6), VectorXd::Zero(10)};
        CHECK_THROWS_AS(fit_dictionary_regression(s.face.image, init, fm, dict, wrong, cfg), DimensionError);
    }

    TEST_CASE("regressor training and fitting on a template model")
    {
        // The dictionary is learned from (image, reconstruction) pairs of several
        // faces at their true shapes; the regressor from perturbations of the
        // template face, whose true shape is a fixed point of the model.
        const FaceSetup s = template_setup();
        const FitModel fm{&s.model, &s.frame};
        SyntheticConfig cfg;
        cfg.noise_stddev = 0.0;
        std::vector<SyntheticFace> faces{s.face};
        for (std::uint64_t i = 0; i < 8; ++i) {
            faces.push_back(generate_face(cfg, 100 + i, "t"));
        }
        MatrixXd Y(s.frame.num_pixels(), static_cast<Eigen::Index>(faces.size()));
        MatrixXd M = Y;
        for (std::size_t i = 0; i < faces.size(); ++i) {
            const TexturePair p = texture_pair(faces[i].image, faces[i].shape, fm, 2, 1);
            Y.col(static_cast<Eigen::Index>(i)) = p.warp.texture;
            M.col(static_cast<Eigen::Index>(i)) = p.reconstruction;
        }
        DictLearnConfig dcfg;
        dcfg.atoms = 16;
        dcfg.max_outer = 5;
        const DictPair dict = learn_fitting_dictionaries(Y, M, dcfg).dictionaries;

        const std::vector<RegressorTrainingFace> training{{&s.face.image, s.face.shape}};
        RegressorTrainConfig rcfg;
        rcfg.gibbs_sweeps = 2;
        rcfg.perturbation.per_face = 60;
        const RegressorFit fit = train_shape_regressor(training, dict, fm, rcfg);
        CHECK(fit.regressor.H.rows() == 136);
        CHECK(fit.regressor.H.cols() == 16);
        CHECK(fit.regressor.H.allFinite());
        CHECK(fit.regressor.b.allFinite());
        CHECK(fit.training_residual <= fit.zero_residual);
        // updates stay inside the similarity subspace
        const MatrixXd Q = similarity_basis(s.frame);
        CHECK((fit.regressor.H - Q * (Q.transpose() * fit.regressor.H)).norm() < 1e-9 * (1.0 + fit.regressor.H.norm()));
        CHECK(train_shape_regressor(training, dict, fm, rcfg).regressor == fit.regressor);
        CHECK_THROWS_AS(train_shape_regressor({}, dict, fm, rcfg), Error);


        // the fitted regressor drives the dictionary fitter without leaving the image
        const double fs = face_size(s.face.shape);
        const Shape init = shifted(s.face.shape, 0.05 * fs, 0.03 * fs);
        DictFitConfig fcfg;
        fcfg.gibbs_sweeps = 2;
        const FitTrace trace = fit_dictionary_regression(s.face.image, init, fm, dict, fit.regressor, fcfg);
        CHECK(!trace.aborted);
        CHECK(!trace.iterations.empty());
        CHECK(trace.iterations.size() <= 10u);
        CHECK(trace.final_shape == trace.iterations.back().shape);
    }

    TEST_CASE("normalized error and trace CSV")
    {
        const Shape truth((VectorXd(6) << 0, 0, 4, 0, 0, 9).finished()); // bbox 4 x 9, face size 6
        const Shape moved = shifted(truth, 3.0, 0.0);
        CHECK(normalized_error(truth, truth) == 0.0);
        CHECK(normalized_error(moved, truth) == doctest::Approx(0.5).epsilon(1e-14));
        CHECK_THROWS_AS(normalized_error(Shape(VectorXd::Zero(4)), truth), DimensionError);

        FitTrace trace;
        trace.iterations.push_back({moved, 2.5, 0.25, 0});
        trace.iterations.push_back({truth, 1.0, 0.0, 0});
        trace.final_shape = truth;
        const std::string with = fit_trace_csv(trace, truth);
        CHECK(with == "iteration,residual,step_norm,normalized_error\n1,2.5,0.25,0.5\n2,1,0,0\n");
        const std::string without = fit_trace_csv(trace);
        CHECK(without == "iteration,residual,step_norm,normalized_error\n1,2.5,0.25,\n2,1,0,\n");
    }
}
