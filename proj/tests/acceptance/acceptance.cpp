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

// Acceptance run: one PASS/FAIL line per criterion, followed by the measured
// values. Criteria 6, 7 and 9 drive the `dam` command line in-process on the
// seeded synthetic corpus under --work-dir.

#include "dam/apps.hpp"
#include "dam/cli.hpp"
#include "dam/dam_exact.hpp"
#include "dam/data_io.hpp"
#include "dam/fitting.hpp"
#include "dam/synthetic.hpp"
#include "test_support.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using namespace dam;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome
{
    bool pass = false;
    std::string detail;
};

constexpr std::array<Group, 5> kHiddenGroups = {Group::kShapeH1, Group::kShapeH2, Group::kTextureH1,
                                                Group::kTextureH2, Group::kJoint};

template <typename F>
void for_each_param(DamParams& p, F&& f)
{
    auto visit = [&](auto& block) {
        for (Eigen::Index i = 0; i < block.size(); ++i) {
            f(block.data()[i]);
        }
    };
    for (StackParams* st : {&p.shape, &p.texture}) {
        visit(st->bottom.weights);
        visit(st->bottom.visible_bias);
        visit(st->bottom.hidden_bias);
        visit(st->upper_weights);
        visit(st->upper_bias);
    }
    visit(p.joint_shape_weights);
    visit(p.joint_texture_weights);
    visit(p.joint_bias);
}

std::string num(double v)
{
    std::ostringstream s;
    s.precision(4);
    s << v;
    return s.str();
}

// ---------------------------------------------------------------------------

Outcome oracle_equivalence()
{
    const auto t0 = Clock::now();
    Rng rng(101);
    double worst = 0.0;
    const int models = 25;
    for (int trial = 0; trial < models; ++trial) {
        const DamParams p = test::random_tiny_dam(test::random_tiny_sizes(rng), rng, 1.5);
        for (int rep = 0; rep < 4; ++rep) {
            const DamState st = test::random_state(p, rng);
            for (Group g : kHiddenGroups) {
                const VectorXd c = dam_conditional(g, st, p);
                worst = std::max(worst, (c - exact_group_conditional(g, st, p)).cwiseAbs().maxCoeff());
                worst = std::max(worst, (c - test::naive_unit_posterior(g, st, p)).cwiseAbs().maxCoeff());
            }
        }
    }
    // one unit per layer keeps 2^5 hidden states, so 1e5 sweeps resolve every state
    LayerSizes ones;
    ones.shape_visible = 1;
    ones.texture_visible = 2;
    ones.shape_hidden1 = ones.shape_hidden2 = ones.texture_hidden1 = ones.texture_hidden2 = ones.joint = 1;
    double worst_tv = 0.0;
    for (int m = 0; m < 3; ++m) {
        const DamParams p = test::random_tiny_dam(ones, rng, 1.0);
        const std::vector<double> exact = exact_hidden_distribution(p);
        std::vector<double> counts(exact.size(), 0.0);
        GibbsChain chain = make_chain(p, 200 + m);
        const int burn = 1000, n = 100000;
        for (int t = 0; t < burn + n; ++t) {
            gibbs_sweep(chain, p);
            if (t >= burn) {
                counts[hidden_state_index(chain.state)] += 1.0;
            }
        }
        double tv = 0.0;
        for (std::size_t i = 0; i < exact.size(); ++i) {
            tv += 0.5 * std::abs(counts[i] / n - exact[i]);
        }
        worst_tv = std::max(worst_tv, tv);
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-10 && worst_tv < 0.02 && secs < 120.0,
            "models=" + std::to_string(models) + " max|conditional-enumeration|=" + num(worst) +
                " gibbs_tv=" + num(worst_tv) + " runtime=" + num(secs) + "s"};
}

Outcome gradient_check()
{
    const auto t0 = Clock::now();
    Rng rng(102);
    double worst = 0.0;
    for (int trial = 0; trial < 8; ++trial) {
        const DamParams p = test::random_tiny_dam(test::random_tiny_sizes(rng), rng, 0.5);
        const DamState st = test::random_state(p, rng);
        const VectorXd& s = st[Group::kShape];
        const VectorXd& g = st[Group::kTexture];
        DamParams grad = likelihood_gradient(exact_posterior_statistics(s, g, p), exact_model_statistics(p));
        std::vector<double> analytic;
        for_each_param(grad, [&](double& x) { analytic.push_back(x); });
        const double h = 1e-5;
        double diff = 0.0, norm = 0.0;
        for (std::size_t k = 0; k < analytic.size(); ++k) {
            DamParams a = p, b = p;
            std::size_t idx = 0;
            for_each_param(a, [&](double& x) { x += (idx++ == k) ? h : 0.0; });
            idx = 0;
            for_each_param(b, [&](double& x) { x -= (idx++ == k) ? h : 0.0; });
            const double fd = (exact_log_likelihood(s, g, a) - exact_log_likelihood(s, g, b)) / (2 * h);
            diff += (analytic[k] - fd) * (analytic[k] - fd);
            norm += fd * fd;
        }
        worst = std::max(worst, std::sqrt(diff / norm));
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-4 && secs < 60.0, "max_relative_error=" + num(worst) + " runtime=" + num(secs) + "s"};
}

Outcome warp_jacobian_check()
{
    const SyntheticFace face = generate_face(SyntheticConfig{}, 1, "f");
    std::vector<Shape> shapes{face.shape};
    const ReferenceFrame ref = build_reference_frame(shapes, {40, 40});
    Rng rng(103);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const GrayImage img = test::smooth_image(80, 80, rng);
        Shape s = similarity_transform(ref.mean_shape, 1.1 + 0.1 * u(rng), 0.1 * u(rng), {10.0 + 3 * u(rng), 8.0 + 3 * u(rng)});
        for (Eigen::Index i = 0; i < s.coords.size(); ++i) {
            s.coords[i] += 0.3 * u(rng);
        }
        const WarpJacobian J = warp_jacobian(img, s, ref);
        MatrixXd fd(ref.num_pixels(), s.coords.size());
        const double h = 1e-6;
        for (Eigen::Index j = 0; j < s.coords.size(); ++j) {
            Shape p = s, m = s;
            p.coords[j] += h;
            m.coords[j] -= h;
            fd.col(j) = (warp_to_texture(img, p, ref).texture - warp_to_texture(img, m, ref).texture) / (2 * h);
        }
        worst = std::max(worst, test::relative_error(J.matrix, fd));
    }

    // round trip: render a texture into the image and warp it back; pixels at
    // least 3 px inside the mask never read background through the bilinear kernel
    Eigen::MatrixXi mask = Eigen::MatrixXi::Zero(ref.size.height, ref.size.width);
    for (const MaskedPixel& px : ref.pixels) {
        mask(px.y, px.x) = 1;
    }
    const int r = 3;
    std::vector<bool> interior(ref.num_pixels());
    for (int k = 0; k < ref.num_pixels(); ++k) {
        const MaskedPixel& px = ref.pixels[k];
        bool ok = px.x >= r && px.y >= r && px.x + r < ref.size.width && px.y + r < ref.size.height;
        for (int dy = -r; ok && dy <= r; ++dy) {
            for (int dx = -r; ok && dx <= r; ++dx) {
                ok = mask(px.y + dy, px.x + dx) == 1;
            }
        }
        interior[k] = ok;
    }
    Texture lin(ref.num_pixels());
    for (int k = 0; k < ref.num_pixels(); ++k) {
        lin[k] = 40.0 + 2.0 * ref.pixels[k].x + 1.5 * ref.pixels[k].y;
    }
    Eigen::Matrix2d A;
    A << 1.4, 0.3, -0.2, 1.25;
    Shape placed = ref.mean_shape;
    for (int i = 0; i < placed.num_points(); ++i) {
        placed.set_point(i, A * ref.mean_shape.point(i) + Eigen::Vector2d(6.0, 11.0));
    }
    const Texture back = warp_to_texture(render_texture(lin, placed, ref, 90, 90), placed, ref).texture;
    double mae = 0.0;
    int n = 0;
    for (int k = 0; k < ref.num_pixels(); ++k) {
        if (interior[k]) {
            mae += std::abs(back[k] - lin[k]);
            ++n;
        }
    }
    mae /= n;
    return {worst < 1e-3 && mae < 1e-3,
            "pairs=10 max_jacobian_relative_error=" + num(worst) + " round_trip_interior_mae=" + num(mae)};
}

Outcome mean_field_check()
{
    Rng rng(104);
    LayerSizes desk;
    desk.shape_visible = 136;
    desk.texture_visible = 1200;
    double worst_residual = 0.0;
    int worst_iterations = 0;
    bool all_converged = true;
    for (int trial = 0; trial < 10; ++trial) {
        const DamParams p = DamParams::random(desk, 0.01, rng);
        const VectorXd s = VectorXd::Random(136), g = VectorXd::Random(1200);
        const MeanFieldState mf = mean_field_infer(s, g, p, {50, 1e-6, 0.0});
        all_converged = all_converged && mf.converged;
        worst_residual = std::max(worst_residual, mf.residual);
        worst_iterations = std::max(worst_iterations, mf.iterations);
    }
    double worst_drop = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const DamParams p = test::random_tiny_dam(test::random_tiny_sizes(rng), rng, 2.0);
        const DamState st = test::random_state(p, rng);
        std::vector<double> bounds;
        mean_field_infer(st[Group::kShape], st[Group::kTexture], p, {50, 1e-12, 0.0}, nullptr,
                         [&](const MeanFieldState& mf) {
                             bounds.push_back(mean_field_bound(st[Group::kShape], st[Group::kTexture], mf, p));
                         });
        for (std::size_t i = 1; i < bounds.size(); ++i) {
            worst_drop = std::max(worst_drop, bounds[i - 1] - bounds[i]);
        }
    }
    return {all_converged && worst_residual < 1e-6 && worst_iterations <= 50 && worst_drop <= 1e-8,
            "desk_models=10 max_residual=" + num(worst_residual) + " max_iterations=" +
                std::to_string(worst_iterations) + " max_bound_decrease=" + num(worst_drop)};
}

Outcome dictionary_check()
{
    Rng rng(105);
    std::normal_distribution<double> n01(0.0, 1.0);
    auto gaussian = [&](int r, int c) { return MatrixXd(MatrixXd::NullaryExpr(r, c, [&]() { return n01(rng); })); };
    double worst_increase = 0.0;
    for (int trial = 0; trial < 3; ++trial) {
        const MatrixXd latent = gaussian(6, 80);
        const MatrixXd Y = gaussian(30, 6) * latent + 0.1 * gaussian(30, 80);
        const MatrixXd M = gaussian(30, 6) * latent + 0.1 * gaussian(30, 80);
        DictLearnConfig cfg;
        cfg.atoms = 12;
        cfg.max_outer = 30;
        cfg.relative_tolerance = 0.0;
        cfg.seed = 10 + trial;
        const DictLearnResult r = learn_fitting_dictionaries(Y, M, cfg);
        for (std::size_t i = 1; i < r.objective.size(); ++i) {
            worst_increase = std::max(worst_increase, r.objective[i] - r.objective[i - 1]);
        }
    }
    double worst_kkt = 0.0;
    std::uniform_int_distribution<int> dim(3, 30);
    std::uniform_real_distribution<double> lam(0.01, 2.0);
    for (int trial = 0; trial < 100; ++trial) {
        const int K = dim(rng), l = dim(rng);
        MatrixXd D = gaussian(K, l);
        D.colwise().normalize();
        const VectorXd x = gaussian(K, 1);
        const double lambda = lam(rng);
        const VectorXd c = sparse_code(x, D, lambda);
        // objective ||x - Dc||^2 + lambda |c|_1 has stationarity D^T r = (lambda / 2) sign(c)
        const VectorXd g = D.transpose() * (x - D * c);
        for (int j = 0; j < l; ++j) {
            worst_kkt = std::max(worst_kkt, c[j] == 0.0 ? std::abs(g[j]) - lambda / 2
                                                        : std::abs(g[j] - lambda / 2 * (c[j] > 0 ? 1 : -1)));
        }
    }
    return {worst_increase <= 1e-8 && worst_kkt <= 1e-6,
            "max_objective_increase=" + num(worst_increase) + " lasso_problems=100 max_kkt_violation=" + num(worst_kkt)};
}

Outcome configuration_check()
{
    const FrameSize frame;
    const SyntheticFace face = generate_face(SyntheticConfig{}, 1, "f");
    const CdConfig cd;
    const bool ok = frame.width == 117 && frame.height == 120 && kNumLandmarks == 68 && face.shape.num_points() == 68 &&
                    kDefaultReconstructionSweeps == 50 && cd.epochs == 600;
    return {ok, "frame=" + std::to_string(frame.width) + "x" + std::to_string(frame.height) +
                    " landmarks=" + std::to_string(face.shape.num_points()) +
                    " reconstruction_sweeps=" + std::to_string(kDefaultReconstructionSweeps) +
                    " pretrain_epochs=" + std::to_string(cd.epochs)};
}

// ---------------------------------------------------------------------------
// Command-line pipelines

bool cli(std::vector<std::string> args, std::string& log)
{
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    if (code != kExitOk) {
        std::string joined;
        for (const auto& a : args) {
            joined += a + " ";
        }
        log += "command failed (" + std::to_string(code) + "): " + joined + "\n" + err.str();
        return false;
    }
    return true;
}

std::map<std::string, double> column(const fs::path& csv, const std::string& key, const std::string& value)
{
    const std::string text = read_text_file(csv);
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    std::vector<std::string> header;
    {
        std::istringstream h(line);
        std::string cell;
        while (std::getline(h, cell, ',')) header.push_back(cell);
    }
    const auto index = [&](const std::string& name) {
        return static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
    };
    const std::size_t ki = index(key), vi = index(value);
    std::map<std::string, double> out;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::istringstream l(line);
        std::string cell;
        while (std::getline(l, cell, ',')) cells.push_back(cell);
        out[cells.at(ki)] = cells.at(vi) == "inf" ? INFINITY : std::stod(cells.at(vi));
    }
    return out;
}

double mean_of(const std::map<std::string, double>& m)
{
    double s = 0.0;
    for (const auto& [k, v] : m) s += v;
    return s / static_cast<double>(m.size());
}

struct DeskRun
{
    bool ok = false;
    std::string log;
    fs::path dir;
    double fit_seconds = 0.0;
};

// synthetic corpus 200/50, 40 x 40 frame, pretrain + joint training + fitting dictionaries
DeskRun desk_pipeline(const fs::path& dir)
{
    DeskRun r;
    r.dir = dir;
    const std::string data = (dir / "data" / "manifest.csv").string();
    const std::string pre = (dir / "pre.dam").string(), model = (dir / "dam.dam").string(),
                      dict = (dir / "dict.dam").string();
    auto step = [&](std::vector<std::string> args) { return r.ok = cli(std::move(args), r.log); };
    if (!step({"synth", "--seed", "11", "--train", "200", "--test", "50", "--out", (dir / "data").string()})) return r;
    if (!step({"pretrain", "--seed", "11", "--data", data, "--out", pre, "--epochs", "150", "--shape-h1", "40",
               "--shape-h2", "20", "--texture-h1", "100", "--texture-h2", "50", "--joint", "30", "--frame-width",
               "40", "--frame-height", "40"}))
        return r;
    if (!step({"train", "--seed", "11", "--data", data, "--model", pre, "--out", model, "--epochs", "50"})) return r;
    if (!step({"dict-train", "--seed", "11", "--data", data, "--model", model, "--out", dict, "--lambda", "1",
               "--atoms", "128", "--outer", "10", "--max-translation", "0.05", "--max-rotation", "5",
               "--max-scale-change", "0.05", "--occlusion", "0.2"}))
        return r;
    const auto t0 = Clock::now();
    for (const auto& [method, occlusion, out] : std::vector<std::array<std::string, 3>>{
             {"identity", "0", "eval_identity"},
             {"fc", "0", "eval_fc"},
             {"fc", "0.2", "occ_fc"},
             {"dict", "0.2", "occ_dict"}}) {
        if (!step({"eval", "--seed", "11", "--data", data, "--model", dict, "--out-dir", (dir / out).string(),
                   "--method", method, "--occlusion", occlusion}))
            return r;
    }
    r.fit_seconds = seconds_since(t0);
    for (const char* alpha : {"4", "8"}) {
        if (!step({"reconstruct", "--seed", "11", "--data", data, "--model", model, "--out-dir",
                   (dir / (std::string("superres_") + alpha)).string(), "--mode", "superres", "--alpha", alpha}))
            return r;
    }
    return r;
}

Outcome fitting_check(const DeskRun& run)
{
    if (!run.ok) return {false, run.log};
    const double init = mean_of(column(run.dir / "eval_identity" / "eval.csv", "face_id", "error"));
    const double fc = mean_of(column(run.dir / "eval_fc" / "eval.csv", "face_id", "error"));
    const auto occ_fc = column(run.dir / "occ_fc" / "eval.csv", "face_id", "error");
    const auto occ_dict = column(run.dir / "occ_dict" / "eval.csv", "face_id", "error");
    int wins = 0;
    for (const auto& [id, e] : occ_fc) wins += occ_dict.at(id) < e;
    const double reduction = 1.0 - fc / init;
    const double win_rate = static_cast<double>(wins) / static_cast<double>(occ_fc.size());
    return {reduction >= 0.4 && win_rate >= 0.6 && run.fit_seconds < 600.0,
            "init_error=" + num(init) + " fc_error=" + num(fc) + " reduction=" + num(reduction) +
                " dict_beats_fc_occluded=" + std::to_string(wins) + "/" + std::to_string(occ_fc.size()) +
                " fit_runtime=" + num(run.fit_seconds) + "s"};
}

Outcome superres_check(const DeskRun& run)
{
    if (!run.ok) return {false, run.log};
    bool ok = true;
    std::string detail;
    for (const char* alpha : {"4", "8"}) {
        const fs::path csv = run.dir / (std::string("superres_") + alpha) / "reconstruct.csv";
        const double dam_db = mean_of(column(csv, "face_id", "psnr_dam"));
        const double bic_db = mean_of(column(csv, "face_id", "psnr_bicubic"));
        ok = ok && dam_db > bic_db;
        detail += std::string(detail.empty() ? "" : " ") + "alpha" + alpha + ": dam=" + num(dam_db) +
                  "dB bicubic=" + num(bic_db) + "dB";
    }
    return {ok, detail};
}

bool smoke_pipeline(const fs::path& dir, std::string& log)
{
    const std::string data = (dir / "data" / "manifest.csv").string();
    const std::string pre = (dir / "pre.dam").string(), model = (dir / "dam.dam").string(),
                      dict = (dir / "dict.dam").string();
    const std::vector<std::vector<std::string>> steps = {
        {"synth", "--seed", "5", "--train", "30", "--test", "6", "--out", (dir / "data").string()},
        {"pretrain", "--seed", "5", "--data", data, "--out", pre, "--log", (dir / "pretrain.csv").string(),
         "--frame-width", "40", "--frame-height", "40", "--shape-h1", "10", "--shape-h2", "6", "--texture-h1", "20",
         "--texture-h2", "10", "--joint", "6", "--epochs", "20", "--jobs", "2"},
        {"train", "--seed", "5", "--data", data, "--model", pre, "--out", model, "--log", (dir / "train.csv").string(),
         "--epochs", "5", "--jobs", "2"},
        {"dict-train", "--seed", "5", "--data", data, "--model", model, "--out", dict, "--log",
         (dir / "dict.csv").string(), "--atoms", "16", "--outer", "3", "--perturbations", "3", "--jobs", "2"},
        {"fit", "--seed", "5", "--data", data, "--model", dict, "--out-dir", (dir / "fit_fc").string(), "--jobs", "2"},
        {"fit", "--seed", "5", "--data", data, "--model", dict, "--out-dir", (dir / "fit_dict").string(), "--method",
         "dict", "--occlusion", "0.2", "--jobs", "2"},
        {"eval", "--seed", "5", "--data", data, "--model", dict, "--out-dir", (dir / "eval").string(), "--jobs", "2"},
        {"reconstruct", "--seed", "5", "--data", data, "--model", model, "--out-dir", (dir / "superres").string(),
         "--alpha", "4", "--jobs", "2"},
        {"reconstruct", "--seed", "5", "--data", data, "--model", model, "--out-dir", (dir / "deocclude").string(),
         "--mode", "deocclude", "--jobs", "2"},
    };
    for (const auto& s : steps) {
        if (!cli(s, log)) return false;
    }
    return true;
}

Outcome reproducibility_check(const fs::path& work)
{
    std::string log;
    const fs::path a = work / "smoke_a", b = work / "smoke_b";
    fs::remove_all(a);
    fs::remove_all(b);
    if (!smoke_pipeline(a, log) || !smoke_pipeline(b, log)) return {false, log};
    int compared = 0, differing = 0;
    std::string first_diff;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        const auto ext = e.path().extension();
        if (!e.is_regular_file() || (ext != ".csv" && ext != ".dam")) continue;
        const fs::path rel = fs::relative(e.path(), a);
        ++compared;
        if (!fs::exists(b / rel) || read_text_file(e.path()) != read_text_file(b / rel)) {
            ++differing;
            if (first_diff.empty()) first_diff = " first_difference=" + rel.generic_string();
        }
    }
    return {compared > 0 && differing == 0, "files_compared=" + std::to_string(compared) +
                                                " differing=" + std::to_string(differing) + first_diff};
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"DAM acceptance run"};
    std::string work_dir = (fs::temp_directory_path() / "dam_acceptance").string();
    app.add_option("--work-dir", work_dir, "scratch directory for the command-line pipelines");
    CLI11_PARSE(app, argc, argv);
    const fs::path work(work_dir);
    fs::create_directories(work);

    const auto t0 = Clock::now();
    std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"1 oracle equivalence", oracle_equivalence},
        {"2 gradient check", gradient_check},
        {"3 warp and Jacobian", warp_jacobian_check},
        {"4 mean-field", mean_field_check},
        {"5 dictionary learning and sparse coding", dictionary_check},
    };
    DeskRun desk;
    bool desk_done = false;
    auto desk_run = [&]() -> const DeskRun& {
        if (!desk_done) {
            fs::remove_all(work / "desk");
            desk = desk_pipeline(work / "desk");
            desk_done = true;
        }
        return desk;
    };
    criteria.push_back({"6 fitting convergence", [&]() { return fitting_check(desk_run()); }});
    criteria.push_back({"7 super-resolution ordering", [&]() { return superres_check(desk_run()); }});
    criteria.push_back({"8 configuration defaults", configuration_check});
    criteria.push_back({"9 reproducibility", [&]() { return reproducibility_check(work); }});

    int failed = 0;
    for (const auto& [name, run] : criteria) {
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << name << ": " << o.detail << std::endl;
    }
    std::cout << "total runtime " << num(seconds_since(t0)) << "s, " << failed << " failed" << std::endl;
    return failed == 0 ? 0 : 1;
}
