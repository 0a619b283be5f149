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
#include "dam/cli.hpp"

#include "dam/apps.hpp"
#include "dam/data_io.hpp"
#include "dam/fitting.hpp"
#include "dam/synthetic.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <iostream>
#include <set>
#include <thread>

namespace fs = std::filesystem;

namespace dam {

namespace {

class UsageError : public Error
{
public:
    using Error::Error;
};

// Stage timings go to stderr (and optionally a file); they are never part of
// the reproducible outputs.
class StageTimer
{
public:
    StageTimer(std::ostream& err, std::string path) : err_(err), path_(std::move(path)) {}

    template <typename F>
    auto run(const std::string& stage, F&& f)
    {
        const auto t0 = std::chrono::steady_clock::now();
        struct Record
        {
            StageTimer* self;
            std::string stage;
            std::chrono::steady_clock::time_point t0;
            ~Record()
            {
                const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                self->rows_.emplace_back(stage, s);
                self->err_ << "timing " << stage << " " << s << " s\n";
            }
        } record{this, stage, t0};
        return f();
    }

    void flush() const
    {
        if (path_.empty()) {
            return;
        }
        std::string csv = "stage,seconds\n";
        for (const auto& [stage, s] : rows_) {
            csv += stage + "," + std::to_string(s) + "\n";
        }
        write_text_file(path_, csv);
    }

private:
    std::ostream& err_;
    std::string path_;
    std::vector<std::pair<std::string, double>> rows_;
};

struct Common
{
    std::string config;
    std::uint64_t seed = 1;
    int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    std::string timing;
};

struct SynthOptions
{
    std::string out;
    int train = 200;
    int test = 50;
    int image_size = 64;
    double face_size = 34.0;
    double noise = 1.0;
};

struct PretrainOptions
{
    std::string data, out, log;
    int frame_width = FrameSize{}.width;
    int frame_height = FrameSize{}.height;
    LayerSizes sizes;
    CdConfig cd;
};

struct TrainOptions
{
    std::string data, model, out, log;
    DamTrainConfig train;
};

struct DictOptions
{
    std::string data, model, out, log;
    int atoms = 128;
    double lambda = 0.0;
    int outer = 30;
    int sweeps = 10;
    PerturbationConfig perturbation;
    double scale_change = 0.1;
    double occlusion = 0.0; // occluder area for regressor augmentation (0: none)
};

struct FitOptions
{
    std::string data, model, out_dir;
    std::string method = "fc";
    std::string split = "test";
    std::string basis = "similarity";
    int iterations = 0; // 0: method default
    int sweeps = 10;
    double tolerance = 1e-2;
    double init_translation = 0.05;
    double init_scale = 0.05;
    double init_rotation = 5.0;
    double occlusion = 0.0;
};

struct ReconstructOptions
{
    std::string data, model, out_dir;
    std::string mode = "superres";
    std::string split = "test";
    int alpha = 8;
    int sweeps = kDefaultReconstructionSweeps;
    double occlusion = 0.2;
};

void add_common(CLI::App* sub, Common& c)
{
    sub->add_option("--config", c.config, "flat key = value file; flags given on the command line win")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", c.seed, "root seed; every random stream is derived from it");
    sub->add_option("--jobs", c.jobs, "worker threads (default: available cores)")->check(CLI::PositiveNumber);
    sub->add_option("--timing", c.timing, "write per-stage seconds to this CSV");
}

std::string fmt(double v)
{
    return format_double(v);
}

std::vector<AnnotatedFace> load_split(const std::string& manifest, const std::string& split)
{
    const DatasetManifest m = read_manifest(manifest);
    const Split s = split == "train" ? Split::kTrain : Split::kTest;
    std::vector<AnnotatedFace> faces = load_dataset(m, s);
    if (faces.empty()) {
        throw Error("manifest '" + manifest + "' has no " + split + " entries");
    }
    return faces;
}

std::string split_name(Split s)
{
    return s == Split::kTrain ? "train" : "test";
}

std::string to_pts_file(const Shape& zero_indexed)
{
    Shape s = zero_indexed;
    s.coords.array() += 1.0;
    return format_pts(s);
}

// ---------------------------------------------------------------------------

int cmd_synth(const SynthOptions& o, const Common& c, std::ostream& out)
{
    SyntheticConfig cfg;
    cfg.num_train = o.train;
    cfg.num_test = o.test;
    cfg.image_size = o.image_size;
    cfg.face_size = o.face_size;
    cfg.noise_stddev = o.noise;
    cfg.seed = c.seed;
    const SyntheticCorpus corpus = generate_corpus(cfg);

    const fs::path dir(o.out);
    DatasetManifest manifest;
    std::string latents = "id,split,label,z0,z1,z2,z3,z4\n";
    auto emit = [&](const SyntheticFace& f, Split split) {
        const fs::path image = fs::path("images") / (f.id + ".png");
        const fs::path pts = fs::path("landmarks") / (f.id + ".pts");
        save_image(f.image, dir / image);
        write_text_file(dir / pts, to_pts_file(f.shape));
        manifest.entries.push_back({image, pts, split});
        latents += f.id + "," + split_name(split) + "," + std::to_string(f.label);
        for (Eigen::Index i = 0; i < f.latent.size(); ++i) {
            latents += "," + fmt(f.latent[i]);
        }
        latents += "\n";
    };
    for (const auto& f : corpus.train) {
        emit(f, Split::kTrain);
    }
    for (const auto& f : corpus.test) {
        emit(f, Split::kTest);
    }
    write_text_file(dir / "manifest.csv", format_manifest(manifest));
    write_text_file(dir / "latents.csv", latents);
    out << "wrote " << corpus.train.size() << " train and " << corpus.test.size() << " test faces to " << o.out
        << "\n";
    return kExitOk;
}

std::string epoch_log_csv(const std::vector<std::pair<std::string, const std::vector<EpochStats>*>>& logs)
{
    std::string csv = "layer,epoch,reconstruction_error,parameter_norm\n";
    for (const auto& [name, log] : logs) {
        for (const EpochStats& e : *log) {
            csv += name + "," + std::to_string(e.epoch) + "," + fmt(e.reconstruction_error) + "," +
                   fmt(e.parameter_norm) + "\n";
        }
    }
    return csv;
}

int cmd_pretrain(const PretrainOptions& o, const Common& c, StageTimer& timer, std::ostream& out)
{
    const auto faces = load_split(o.data, "train");
    std::vector<Shape> shapes;
    std::vector<const GrayImage*> images;
    for (const auto& f : faces) {
        shapes.push_back(f.shape);
        images.push_back(&f.image);
    }
    ModelArchive archive;
    archive.frame = build_reference_frame(shapes, {o.frame_width, o.frame_height});
    const TrainingSet set = extract_training_set(images, shapes, archive.frame);

    PretrainConfig pc;
    pc.sizes = o.sizes;
    pc.cd = o.cd;
    pc.cd.seed = split_seed(c.seed, 1);
    const PretrainResult r = timer.run("train", [&]() { return pretrain_dam(set.shapes, set.textures, pc); });
    archive.model = r.model;
    archive.config = {
        {"frame_width", std::to_string(o.frame_width)},
        {"frame_height", std::to_string(o.frame_height)},
        {"pretrain.epochs", std::to_string(o.cd.epochs)},
        {"pretrain.learning_rate", fmt(o.cd.learning_rate)},
        {"pretrain.batch", std::to_string(o.cd.batch_size)},
        {"pretrain.cd_steps", std::to_string(o.cd.cd_steps)},
        {"pretrain.weight_decay", fmt(o.cd.weight_decay)},
        {"pretrain.learn_sigma", o.cd.learn_sigma ? "1" : "0"},
        {"layers", std::to_string(o.sizes.shape_hidden1) + "," + std::to_string(o.sizes.shape_hidden2) + "," +
                       std::to_string(o.sizes.texture_hidden1) + "," + std::to_string(o.sizes.texture_hidden2) +
                       "," + std::to_string(o.sizes.joint)},
        {"seed", std::to_string(c.seed)},
    };
    save_model(archive, o.out);
    if (!o.log.empty()) {
        write_text_file(o.log, epoch_log_csv({{"shape1", &r.shape_log1},
                                              {"shape2", &r.shape_log2},
                                              {"texture1", &r.texture_log1},
                                              {"texture2", &r.texture_log2},
                                              {"joint", &r.joint_log}}));
    }
    out << "pretrained model with K = " << archive.frame.num_pixels() << " texture pixels written to " << o.out
        << "\n";
    return kExitOk;
}

int cmd_train(const TrainOptions& o, const Common& c, StageTimer& timer, std::ostream& out)
{
    ModelArchive archive = load_model(o.model);
    const auto faces = load_split(o.data, "train");
    std::vector<Shape> shapes;
    std::vector<const GrayImage*> images;
    for (const auto& f : faces) {
        shapes.push_back(f.shape);
        images.push_back(&f.image);
    }
    const TrainingSet set = extract_training_set(images, shapes, archive.frame);
    DamTrainConfig cfg = o.train;
    cfg.seed = split_seed(c.seed, 2);
    const DamTrainResult r = timer.run("train", [&]() { return train_dam(archive.model, set.shapes, set.textures, cfg); });
    archive.model = r.model;
    archive.config["train.epochs"] = std::to_string(cfg.epochs);
    archive.config["train.learning_rate"] = fmt(cfg.learning_rate);
    archive.config["train.chains"] = std::to_string(cfg.chains);
    archive.config["train.sweeps_per_step"] = std::to_string(cfg.sweeps_per_step);
    archive.config["train.seed"] = std::to_string(c.seed);
    save_model(archive, o.out);
    if (!o.log.empty()) {
        std::string csv = "epoch,shape_error,texture_error,parameter_norm\n";
        for (const DamEpochStats& e : r.log) {
            csv += std::to_string(e.epoch) + "," + fmt(e.shape_error) + "," + fmt(e.texture_error) + "," +
                   fmt(e.parameter_norm) + "\n";
        }
        write_text_file(o.log, csv);
    }
    out << "trained model written to " << o.out << "\n";
    return kExitOk;
}

int cmd_dict_train(const DictOptions& o, const Common& c, StageTimer& timer, std::ostream& out)
{
    ModelArchive archive = load_model(o.model);
    const auto faces = load_split(o.data, "train");
    const FitModel fm{&archive.model, &archive.frame};
    const int K = archive.frame.num_pixels();
    const int N = static_cast<int>(faces.size());

    MatrixXd Y(K, N), M(K, N);
    parallel_for(N, c.jobs, [&](int i) {
        const TexturePair p = texture_pair(faces[i].image, faces[i].shape, fm, o.sweeps,
                                           split_seed(c.seed, 3'000'000ULL + static_cast<std::uint64_t>(i)));
        Y.col(i) = p.warp.texture;
        M.col(i) = p.reconstruction;
    });

    DictLearnConfig dc;
    dc.atoms = o.atoms;
    dc.lambda = o.lambda;
    dc.max_outer = o.outer;
    dc.seed = split_seed(c.seed, 4);
    const DictLearnResult learned = timer.run("train", [&]() { return learn_fitting_dictionaries(Y, M, dc); });

    RegressorTrainConfig rc;
    rc.perturbation = o.perturbation;
    rc.perturbation.min_scale = 1.0 - o.scale_change;
    rc.perturbation.max_scale = 1.0 + o.scale_change;
    rc.gibbs_sweeps = o.sweeps;
    rc.occlusion_area = o.occlusion;
    rc.seed = split_seed(c.seed, 5);
    std::vector<RegressorTrainingFace> all;
    for (int i = 0; i < N; ++i) {
        all.push_back({&faces[i].image, faces[i].shape});
    }
    const RegressorFit reg = timer.run("train", [&]() { return train_shape_regressor(all, learned.dictionaries, fm, rc); });

    archive.dictionaries = learned.dictionaries;
    archive.regressor = reg.regressor;
    archive.config["dict.atoms"] = std::to_string(o.atoms);
    archive.config["dict.lambda"] = fmt(learned.dictionaries.lambda);
    archive.config["dict.outer"] = std::to_string(o.outer);
    archive.config["dict.sweeps"] = std::to_string(o.sweeps);
    archive.config["dict.perturbations"] = std::to_string(o.perturbation.per_face);
    archive.config["dict.max_translation"] = fmt(o.perturbation.max_translation);
    archive.config["dict.max_rotation"] = fmt(o.perturbation.max_rotation_deg);
    archive.config["dict.max_scale_change"] = fmt(o.scale_change);
    archive.config["dict.occlusion"] = fmt(o.occlusion);
    archive.config["dict.seed"] = std::to_string(c.seed);
    save_model(archive, o.out);
    if (!o.log.empty()) {
        std::string csv = "outer,objective\n";
        for (std::size_t i = 0; i < learned.objective.size(); ++i) {
            csv += std::to_string(i) + "," + fmt(learned.objective[i]) + "\n";
        }
        write_text_file(o.log, csv);
    }
    out << "dictionaries (" << o.atoms << " atoms, lambda " << learned.dictionaries.lambda
        << ") and regressor written to " << o.out << "\n";
    return kExitOk;
}

struct FitSetup
{
    std::vector<AnnotatedFace> faces;
    std::vector<GrayImage> images; // possibly occluded copies
    std::vector<Shape> inits;
};

FitSetup prepare_fit(const FitOptions& o, const Common& c)
{
    FitSetup s;
    s.faces = load_split(o.data, o.split);
    PerturbationConfig pc;
    pc.max_translation = o.init_translation;
    pc.min_scale = 1.0 - o.init_scale;
    pc.max_scale = 1.0 + o.init_scale;
    pc.max_rotation_deg = o.init_rotation;
    for (std::size_t i = 0; i < s.faces.size(); ++i) {
        Rng rng(split_seed(c.seed, 7'000'000ULL + i));
        s.inits.push_back(perturb_shape(s.faces[i].shape, pc, rng));
        s.images.push_back(s.faces[i].image);
        if (o.occlusion > 0.0) {
            Rng orng(split_seed(c.seed, 8'000'000ULL + i));
            std::uniform_real_distribution<double> intensity(0.0, 255.0);
            const double v = intensity(orng);
            add_occlusion(s.images.back(), s.faces[i].shape, o.occlusion, v, orng);
        }
    }
    return s;
}

Fitter make_fitter(const ModelArchive& archive, const FitOptions& o, const Common& c)
{
    const FitModel fm{&archive.model, &archive.frame};
    if (o.method == "fc") {
        FitConfig cfg;
        cfg.max_iterations = o.iterations > 0 ? o.iterations : cfg.max_iterations;
        cfg.basis = o.basis == "full" ? UpdateBasis::kFull : UpdateBasis::kSimilarity;
        cfg.gibbs_sweeps = o.sweeps;
        cfg.tolerance = o.tolerance;
        cfg.seed = split_seed(c.seed, 9);
        return [fm, cfg](const GrayImage& img, const Shape& init) {
            return fit_forward_compositional(img, init, fm, cfg);
        };
    }
    if (o.method == "dict") {
        if (!archive.dictionaries || !archive.regressor) {
            throw Error("model archive has no dictionaries/regressor; run dict-train first");
        }
        DictFitConfig cfg;
        cfg.max_iterations = o.iterations > 0 ? o.iterations : cfg.max_iterations;
        cfg.gibbs_sweeps = o.sweeps;
        cfg.tolerance = o.tolerance;
        cfg.seed = split_seed(c.seed, 10);
        const DictPair* dict = &*archive.dictionaries;
        const UpdateRegressor* reg = &*archive.regressor;
        return [fm, cfg, dict, reg](const GrayImage& img, const Shape& init) {
            return fit_dictionary_regression(img, init, fm, *dict, *reg, cfg);
        };
    }
    // identity: reports the initialisation error
    return [](const GrayImage&, const Shape& init) {
        FitTrace t;
        t.final_shape = init;
        t.converged = true;
        return t;
    };
}

int cmd_fit(const FitOptions& o, const Common& c, StageTimer& timer, std::ostream& out)
{
    const ModelArchive archive = load_model(o.model);
    const FitSetup setup = prepare_fit(o, c);
    const Fitter fitter = make_fitter(archive, o, c);
    const int n = static_cast<int>(setup.faces.size());
    std::vector<FitTrace> traces(n);
    timer.run("fit", [&]() {
        parallel_for(n, c.jobs, [&](int i) { traces[i] = fitter(setup.images[i], setup.inits[i]); });
        return 0;
    });

    const fs::path dir(o.out_dir);
    std::string trace_csv = "face_id,iteration,residual,step_norm,normalized_error\n";
    std::string summary = "face_id,initial_error,final_error,iterations,converged,aborted,abort_reason\n";
    double init_sum = 0.0, final_sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto& f = setup.faces[i];
        const std::string body = fit_trace_csv(traces[i], f.shape);
        std::size_t pos = body.find('\n') + 1;
        while (pos < body.size()) {
            const std::size_t end = body.find('\n', pos);
            trace_csv += f.id + "," + body.substr(pos, end - pos) + "\n";
            pos = end + 1;
        }
        const double e0 = normalized_error(setup.inits[i], f.shape);
        const double e1 = normalized_error(traces[i].final_shape, f.shape);
        init_sum += e0;
        final_sum += e1;
        summary += f.id + "," + fmt(e0) + "," + fmt(e1) + "," + std::to_string(traces[i].iterations.size()) + "," +
                   (traces[i].converged ? "1" : "0") + "," + (traces[i].aborted ? "1" : "0") + "," + traces[i].abort_reason + "\n";
        write_text_file(dir / "shapes" / (f.id + ".pts"), to_pts_file(traces[i].final_shape));
    }
    write_text_file(dir / "fit_traces.csv", trace_csv);
    write_text_file(dir / "fit_summary.csv", summary);
    out << "mean normalized error: initial " << init_sum / n << ", final " << final_sum / n << "\n";
    return kExitOk;
}

int cmd_eval(const FitOptions& o, const Common& c, StageTimer& timer, std::ostream& out)
{
    const ModelArchive archive = load_model(o.model);
    const FitSetup setup = prepare_fit(o, c);
    const Fitter fitter = make_fitter(archive, o, c);
    std::vector<AlignmentCase> cases;
    for (std::size_t i = 0; i < setup.faces.size(); ++i) {
        cases.push_back({setup.faces[i].id, &setup.images[i], setup.faces[i].shape, setup.inits[i]});
    }
    const EvalReport report = timer.run("fit", [&]() { return evaluate_alignment(fitter, cases, c.jobs); });
    const fs::path dir(o.out_dir);
    write_text_file(dir / "eval.csv", eval_csv(report));
    write_text_file(dir / "ced.csv", ced_csv(report));
    out << "method " << o.method << ": mean error " << report.mean << ", median " << report.median << ", failures "
        << report.failures << "/" << report.rows.size() << "\n";
    return kExitOk;
}

int cmd_reconstruct(const ReconstructOptions& o, const Common& c, StageTimer& timer, std::ostream& out)
{
    const ModelArchive archive = load_model(o.model);
    const ReferenceFrame& ref = archive.frame;
    const auto faces = load_split(o.data, o.split);
    const int n = static_cast<int>(faces.size());
    const fs::path dir(o.out_dir);
    std::vector<std::string> rows(n);

    auto frame_png = [&](const Texture& t, const std::string& name) {
        save_image(texture_to_frame_image(t, ref, 0.0), dir / name);
    };

    timer.run("reconstruct", [&]() {
        parallel_for(n, c.jobs, [&](int i) {
            const AnnotatedFace& f = faces[i];
            const std::uint64_t seed = split_seed(c.seed, 11'000'000ULL + static_cast<std::uint64_t>(i));
            if (o.mode == "superres") {
                const Texture truth = warp_to_texture(f.image, f.shape, ref).texture;
                const GrayImage low = low_resolution_input(truth, ref, o.alpha);
                const Texture bic = bicubic_texture(low, ref);
                const Texture rec = super_resolve(low, f.shape, archive.model, ref, o.sweeps, seed);
                rows[i] = f.id + "," + fmt(psnr(bic, truth)) + "," + fmt(psnr(rec, truth)) + "," + fmt(rmse(bic, truth)) +
                          "," + fmt(rmse(rec, truth)) + "\n";
                save_image(low, dir / (f.id + "_low.png"));
                frame_png(bic, f.id + "_bicubic.png");
                frame_png(rec, f.id + "_dam.png");
            } else if (o.mode == "deocclude") {
                GrayImage occluded = f.image;
                Rng rng(split_seed(c.seed, 12'000'000ULL + static_cast<std::uint64_t>(i)));
                std::uniform_real_distribution<double> intensity(0.0, 255.0);
                const double v = intensity(rng);
                const Rect patch = add_occlusion(occluded, f.shape, o.occlusion, v, rng);
                GrayImage indicator(f.image.width(), f.image.height(), 0.0);
                for (int y = std::max(0, patch.y); y < std::min(indicator.height(), patch.y + patch.height); ++y) {
                    for (int x = std::max(0, patch.x); x < std::min(indicator.width(), patch.x + patch.width); ++x) {
                        indicator.at(x, y) = 1.0;
                    }
                }
                const Texture inside = warp_to_texture(indicator, f.shape, ref).texture;
                const Texture clean = warp_to_texture(f.image, f.shape, ref).texture;
                const CleanFace cf = reconstruct_clean_face(occluded, f.shape, archive.model, ref, o.sweeps, seed);
                double in_sum = 0.0, out_sum = 0.0;
                int in_n = 0, out_n = 0;
                for (Eigen::Index k = 0; k < cf.residual.size(); ++k) {
                    if (!cf.valid[k]) {
                        continue;
                    }
                    if (inside[k] > 0.5) {
                        in_sum += cf.residual[k];
                        ++in_n;
                    } else {
                        out_sum += cf.residual[k];
                        ++out_n;
                    }
                }
                rows[i] = f.id + "," + fmt(rmse(cf.observed, clean)) + "," + fmt(rmse(cf.texture, clean)) + "," +
                          fmt(in_n ? in_sum / in_n : 0.0) + "," + fmt(out_n ? out_sum / out_n : 0.0) + "\n";
                frame_png(cf.observed, f.id + "_input.png");
                frame_png(cf.texture, f.id + "_clean.png");
                frame_png(cf.residual, f.id + "_residual.png");
            } else {
                const CleanFace cf = reconstruct_clean_face(f.image, f.shape, archive.model, ref, o.sweeps, seed,
                                                            ShapeClamp::kMeanShape);
                rows[i] = f.id + "," + fmt(rmse(cf.texture, cf.observed)) + "\n";
                frame_png(cf.observed, f.id + "_input.png");
                frame_png(cf.texture, f.id + "_frontal.png");
            }
        });
        return 0;
    });

    std::string csv = o.mode == "superres"    ? "face_id,psnr_bicubic,psnr_dam,rmse_bicubic,rmse_dam\n"
                      : o.mode == "deocclude" ? "face_id,rmse_input,rmse_reconstruction,residual_inside,residual_outside\n"
                                              : "face_id,rmse_vs_input\n";
    for (const auto& r : rows) {
        csv += r;
    }
    write_text_file(dir / "reconstruct.csv", csv);
    out << "reconstructed " << n << " faces (" << o.mode << ") into " << o.out_dir << "\n";
    return kExitOk;
}

void validate(bool ok, const std::string& what)
{
    if (!ok) {
        throw UsageError(what);
    }
}

std::string strip(std::string_view s)
{
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string_view::npos) {
        return {};
    }
    const auto b = s.find_last_not_of(" \t\r");
    return std::string(s.substr(a, b - a + 1));
}

} // namespace

std::map<std::string, std::string> parse_config_text(std::string_view text)
{
    std::map<std::string, std::string> kv;
    int lineno = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        ++lineno;
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        if (strip(line).empty()) {
            if (end == text.size()) {
                break;
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ParseError("expected 'key = value'", lineno);
        }
        std::string key = strip(line.substr(0, eq));
        std::string value = strip(line.substr(eq + 1));
        while (!key.empty() && key.front() == '-') {
            key.erase(key.begin());
        }
        if (key.empty()) {
            throw ParseError("empty key", lineno);
        }
        kv[key] = value;
        if (end == text.size()) {
            break;
        }
    }
    return kv;
}

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Deep Appearance Models: synthesis, training, fitting, reconstruction and evaluation", "dam"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1);

    Common common;
    SynthOptions synth;
    PretrainOptions pre;
    TrainOptions train;
    DictOptions dict;
    FitOptions fit;
    FitOptions eval;
    ReconstructOptions recon;

    auto* s = app.add_subcommand("synth", "write the seeded synthetic face corpus");
    add_common(s, common);
    s->add_option("--out", synth.out, "output directory")->required();
    s->add_option("--train", synth.train, "training faces")->check(CLI::NonNegativeNumber);
    s->add_option("--test", synth.test, "test faces")->check(CLI::NonNegativeNumber);
    s->add_option("--image-size", synth.image_size, "image width and height")->check(CLI::Range(16, 4096));
    s->add_option("--face-size", synth.face_size, "sqrt(w h) of the landmark box, pixels")->check(CLI::PositiveNumber);
    s->add_option("--noise", synth.noise, "pixel noise standard deviation")->check(CLI::NonNegativeNumber);

    auto* p = app.add_subcommand("pretrain", "build the reference frame and pretrain both stacks layer-wise");
    add_common(p, common);
    p->add_option("--data", pre.data, "dataset manifest")->required()->check(CLI::ExistingFile);
    p->add_option("--out", pre.out, "model archive to write")->required();
    p->add_option("--log", pre.log, "per-epoch CSV log");
    p->add_option("--frame-width", pre.frame_width, "reference frame width")->check(CLI::Range(8, 4096));
    p->add_option("--frame-height", pre.frame_height, "reference frame height")->check(CLI::Range(8, 4096));
    p->add_option("--shape-h1", pre.sizes.shape_hidden1)->check(CLI::Range(1, 100000));
    p->add_option("--shape-h2", pre.sizes.shape_hidden2)->check(CLI::Range(1, 100000));
    p->add_option("--texture-h1", pre.sizes.texture_hidden1)->check(CLI::Range(1, 100000));
    p->add_option("--texture-h2", pre.sizes.texture_hidden2)->check(CLI::Range(1, 100000));
    p->add_option("--joint", pre.sizes.joint)->check(CLI::Range(1, 100000));
    p->add_option("--epochs", pre.cd.epochs, "CD epochs per layer")->check(CLI::Range(1, 1000000));
    p->add_option("--learning-rate", pre.cd.learning_rate)->check(CLI::NonNegativeNumber);
    p->add_option("--batch", pre.cd.batch_size)->check(CLI::Range(1, 1000000));
    p->add_option("--cd-steps", pre.cd.cd_steps)->check(CLI::Range(1, 1000));
    p->add_option("--weight-decay", pre.cd.weight_decay)->check(CLI::NonNegativeNumber);
    p->add_flag("--learn-sigma", pre.cd.learn_sigma, "also learn the GRBM visible standard deviations");
    p->add_option("--sigma-learning-rate", pre.cd.sigma_learning_rate)->check(CLI::NonNegativeNumber);

    auto* t = app.add_subcommand("train", "joint training: mean-field data term, persistent chains for the model term");
    add_common(t, common);
    t->add_option("--data", train.data, "dataset manifest")->required()->check(CLI::ExistingFile);
    t->add_option("--model", train.model, "pretrained archive")->required()->check(CLI::ExistingFile);
    t->add_option("--out", train.out, "model archive to write")->required();
    t->add_option("--log", train.log, "per-epoch CSV log");
    t->add_option("--epochs", train.train.epochs)->check(CLI::Range(1, 1000000));
    t->add_option("--learning-rate", train.train.learning_rate)->check(CLI::NonNegativeNumber);
    t->add_option("--batch", train.train.batch_size)->check(CLI::Range(1, 1000000));
    t->add_option("--chains", train.train.chains)->check(CLI::Range(1, 100000));
    t->add_option("--sweeps-per-step", train.train.sweeps_per_step)->check(CLI::Range(1, 10000));

    auto* d = app.add_subcommand("dict-train", "learn the fitting dictionaries and the shape regressor");
    add_common(d, common);
    d->add_option("--data", dict.data, "dataset manifest")->required()->check(CLI::ExistingFile);
    d->add_option("--model", dict.model, "trained archive")->required()->check(CLI::ExistingFile);
    d->add_option("--out", dict.out, "model archive to write")->required();
    d->add_option("--log", dict.log, "objective history CSV");
    d->add_option("--atoms", dict.atoms, "dictionary size l")->check(CLI::Range(1, 100000));
    d->add_option("--lambda", dict.lambda, "sparsity weight (0: automatic)")->check(CLI::NonNegativeNumber);
    d->add_option("--outer", dict.outer, "outer iterations")->check(CLI::Range(1, 100000));
    d->add_option("--sweeps", dict.sweeps, "Gibbs sweeps per reconstruction")->check(CLI::Range(1, 100000));
    d->add_option("--perturbations", dict.perturbation.per_face, "perturbed starts per face")->check(CLI::Range(1, 10000));
    d->add_option("--max-translation", dict.perturbation.max_translation, "fraction of face size")->check(CLI::Range(0.0, 1.0));
    d->add_option("--max-rotation", dict.perturbation.max_rotation_deg, "degrees")->check(CLI::Range(0.0, 90.0));
    d->add_option("--max-scale-change", dict.scale_change, "scales drawn from [1 - x, 1 + x]")->check(CLI::Range(0.0, 0.9));
    d->add_option("--occlusion", dict.occlusion, "occluder area fraction for regressor training samples (0: none)")
        ->check(CLI::Range(0.0, 1.0));

    auto add_fit_options = [&](CLI::App* sub, FitOptions& f, bool allow_identity) {
        add_common(sub, common);
        sub->add_option("--data", f.data, "dataset manifest")->required()->check(CLI::ExistingFile);
        sub->add_option("--model", f.model, "model archive")->required()->check(CLI::ExistingFile);
        sub->add_option("--out-dir", f.out_dir, "output directory")->required();
        sub->add_option("--method", f.method, "fitting algorithm")
            ->check(allow_identity ? CLI::IsMember({"fc", "dict", "identity"}) : CLI::IsMember({"fc", "dict"}));
        sub->add_option("--split", f.split)->check(CLI::IsMember({"train", "test"}));
        sub->add_option("--basis", f.basis, "Gauss-Newton increment space for fc")
            ->check(CLI::IsMember({"similarity", "full"}));
        sub->add_option("--iterations", f.iterations, "0: 30 for fc, 10 for dict")->check(CLI::Range(0, 100000));
        sub->add_option("--sweeps", f.sweeps, "Gibbs sweeps per iteration")->check(CLI::Range(1, 100000));
        sub->add_option("--tolerance", f.tolerance, "stop when ||ds||_inf falls below (pixels)")
            ->check(CLI::NonNegativeNumber);
        sub->add_option("--init-translation", f.init_translation, "fraction of face size")->check(CLI::Range(0.0, 1.0));
        sub->add_option("--init-scale", f.init_scale, "scale spread around 1")->check(CLI::Range(0.0, 0.9));
        sub->add_option("--init-rotation", f.init_rotation, "degrees")->check(CLI::Range(0.0, 90.0));
        sub->add_option("--occlusion", f.occlusion, "synthetic occluder area fraction (0: none)")
            ->check(CLI::Range(0.0, 1.0));
    };
    auto* f = app.add_subcommand("fit", "fit test faces from perturbed initial shapes");
    add_fit_options(f, fit, false);
    auto* e = app.add_subcommand("eval", "alignment error and CED for a fitter");
    add_fit_options(e, eval, true);

    auto* r = app.add_subcommand("reconstruct", "super-resolution, occlusion removal or frontal reconstruction");
    add_common(r, common);
    r->add_option("--data", recon.data, "dataset manifest")->required()->check(CLI::ExistingFile);
    r->add_option("--model", recon.model, "model archive")->required()->check(CLI::ExistingFile);
    r->add_option("--out-dir", recon.out_dir, "output directory")->required();
    r->add_option("--mode", recon.mode)->check(CLI::IsMember({"superres", "deocclude", "frontal"}));
    r->add_option("--split", recon.split)->check(CLI::IsMember({"train", "test"}));
    r->add_option("--alpha", recon.alpha, "super-resolution factor")->check(CLI::Range(1, 64));
    r->add_option("--sweeps", recon.sweeps, "Gibbs sweeps")->check(CLI::Range(1, 100000));
    r->add_option("--occlusion", recon.occlusion, "occluder area fraction for deocclude")->check(CLI::Range(0.01, 1.0));

    // Config file entries become flags placed before the command line ones, so
    // explicit flags take precedence.
    std::vector<std::string> args = raw_args;
    try {
        if (!args.empty() && !args.front().starts_with("-")) {
            std::string config_path;
            for (std::size_t i = 1; i < args.size(); ++i) {
                if (args[i] == "--config" && i + 1 < args.size()) {
                    config_path = args[i + 1];
                } else if (args[i].starts_with("--config=")) {
                    config_path = args[i].substr(9);
                }
            }
            if (!config_path.empty()) {
                std::vector<std::string> injected;
                for (const auto& [k, v] : parse_config_text(read_text_file(config_path))) {
                    if (k == "config") {
                        throw UsageError("config files cannot include other config files");
                    }
                    injected.push_back("--" + k + "=" + v);
                }
                args.insert(args.begin() + 1, injected.begin(), injected.end());
            }
        }
    } catch (const Error& ex) {
        err << "dam: " << ex.what() << "\n";
        return kExitUsage;
    }

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& ex) {
        err << "dam: " << ex.what() << "\n";
        return kExitUsage;
    }

    StageTimer timer(err, common.timing);
    try {
        int code = kExitOk;
        if (s->parsed()) {
            code = cmd_synth(synth, common, out);
        } else if (p->parsed()) {
            validate(pre.frame_width >= 8 && pre.frame_height >= 8, "frame must be at least 8 x 8");
            code = cmd_pretrain(pre, common, timer, out);
        } else if (t->parsed()) {
            code = cmd_train(train, common, timer, out);
        } else if (d->parsed()) {
            code = cmd_dict_train(dict, common, timer, out);
        } else if (f->parsed()) {
            code = cmd_fit(fit, common, timer, out);
        } else if (e->parsed()) {
            code = cmd_eval(eval, common, timer, out);
        } else if (r->parsed()) {
            code = cmd_reconstruct(recon, common, timer, out);
        }
        timer.flush();
        return code;
    } catch (const UsageError& ex) {
        err << "dam: " << ex.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& ex) {
        err << "dam: " << ex.what() << "\n";
        return kExitFailure;
    }
}

int run_cli(int argc, char** argv)
{
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_cli(args, std::cout, std::cerr);
}

} // namespace dam
