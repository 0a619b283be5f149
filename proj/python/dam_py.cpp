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
#include "dam/apps.hpp"
#include "dam/cli.hpp"
#include "dam/data_io.hpp"
#include "dam/fitting.hpp"
#include "dam/synthetic.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace dam;

namespace {

// Shapes cross the boundary as flat [x1, y1, ..., xN, yN] arrays.
Shape to_shape(const VectorXd& coords)
{
    if (coords.size() % 2 != 0) {
        throw DimensionError("shape coordinates must have even length");
    }
    return Shape(coords);
}

std::vector<Shape> to_shapes(const std::vector<VectorXd>& coords)
{
    std::vector<Shape> out;
    for (const auto& c : coords) {
        out.push_back(to_shape(c));
    }
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Deep Appearance Models core library";

    py::register_exception<Error>(m, "DamError");

    py::class_<SyntheticFace>(m, "SyntheticFace")
        .def_readonly("id", &SyntheticFace::id)
        .def_property_readonly("image", [](const SyntheticFace& f) { return f.image.pixels; })
        .def_property_readonly("shape", [](const SyntheticFace& f) { return f.shape.coords; })
        .def_readonly("latent", &SyntheticFace::latent)
        .def_readonly("label", &SyntheticFace::label);

    m.def(
        "generate_face",
        [](std::uint64_t seed, int image_size, double face_size, double noise) {
            SyntheticConfig cfg;
            cfg.image_size = image_size;
            cfg.face_size = face_size;
            cfg.noise_stddev = noise;
            return generate_face(cfg, seed, "face");
        },
        py::arg("seed"), py::arg("image_size") = 64, py::arg("face_size") = 34.0, py::arg("noise") = 1.0);

    py::class_<ReferenceFrame>(m, "ReferenceFrame")
        .def_property_readonly("num_pixels", &ReferenceFrame::num_pixels)
        .def_property_readonly("num_points", &ReferenceFrame::num_points)
        .def_property_readonly("width", [](const ReferenceFrame& r) { return r.size.width; })
        .def_property_readonly("height", [](const ReferenceFrame& r) { return r.size.height; })
        .def_property_readonly("mean_shape", [](const ReferenceFrame& r) { return r.mean_shape.coords; })
        .def_property_readonly("triangles", [](const ReferenceFrame& r) { return r.triangles; });

    m.def(
        "build_reference_frame",
        [](const std::vector<VectorXd>& shapes, int width, int height) {
            const auto s = to_shapes(shapes);
            return build_reference_frame(s, {width, height});
        },
        py::arg("shapes"), py::arg("width") = FrameSize{}.width, py::arg("height") = FrameSize{}.height);

    m.def(
        "warp_to_texture",
        [](const MatrixXd& image, const VectorXd& shape, const ReferenceFrame& ref) {
            const WarpResult w = warp_to_texture(GrayImage(image), to_shape(shape), ref);
            return py::make_tuple(w.texture, w.valid);
        },
        py::arg("image"), py::arg("shape"), py::arg("frame"),
        "Shape-free texture and per-pixel validity flags.");

    m.def(
        "render_texture",
        [](const VectorXd& texture, const VectorXd& shape, const ReferenceFrame& ref, int width, int height,
           double background) {
            return render_texture(texture, to_shape(shape), ref, width, height, background).pixels;
        },
        py::arg("texture"), py::arg("shape"), py::arg("frame"), py::arg("width"), py::arg("height"),
        py::arg("background") = 0.0);

    m.def("rmse", &rmse, py::arg("a"), py::arg("b"));
    m.def("psnr", &psnr, py::arg("a"), py::arg("b"), py::arg("peak") = 255.0);
    m.def(
        "normalized_error",
        [](const VectorXd& fitted, const VectorXd& truth) { return normalized_error(to_shape(fitted), to_shape(truth)); },
        py::arg("fitted"), py::arg("truth"));
    m.def(
        "sparse_code", [](const VectorXd& x, const MatrixXd& d, double lambda) { return sparse_code(x, d, lambda); },
        py::arg("x"), py::arg("dictionary"), py::arg("lam"));

    py::class_<ModelArchive>(m, "ModelArchive")
        .def_readonly("frame", &ModelArchive::frame)
        .def_readonly("config", &ModelArchive::config)
        .def_property_readonly("has_dictionaries", [](const ModelArchive& a) { return a.dictionaries.has_value(); })
        .def(
            "reconstruct",
            [](const ModelArchive& a, const VectorXd& shape, const VectorXd& texture, int sweeps, std::uint64_t seed) {
                return reconstruct_texture_mean(shape, texture, a.model, sweeps, seed);
            },
            py::arg("shape"), py::arg("texture"), py::arg("sweeps") = kDefaultReconstructionSweeps,
            py::arg("seed") = 1)
        .def(
            "super_resolve",
            [](const ModelArchive& a, const MatrixXd& low_res, const VectorXd& shape, int sweeps, std::uint64_t seed) {
                return super_resolve(GrayImage(low_res), to_shape(shape), a.model, a.frame, sweeps, seed);
            },
            py::arg("low_res"), py::arg("shape"), py::arg("sweeps") = kDefaultReconstructionSweeps,
            py::arg("seed") = 1)
        .def(
            "fit",
            [](const ModelArchive& a, const MatrixXd& image, const VectorXd& init, const std::string& method,
               int iterations, std::uint64_t seed) {
                const FitModel fm{&a.model, &a.frame};
                FitTrace t;
                if (method == "fc") {
                    FitConfig cfg;
                    if (iterations > 0) cfg.max_iterations = iterations;
                    cfg.seed = seed;
                    t = fit_forward_compositional(GrayImage(image), to_shape(init), fm, cfg);
                } else if (method == "dict") {
                    if (!a.dictionaries || !a.regressor) {
                        throw Error("archive has no dictionaries/regressor");
                    }
                    DictFitConfig cfg;
                    if (iterations > 0) cfg.max_iterations = iterations;
                    cfg.seed = seed;
                    t = fit_dictionary_regression(GrayImage(image), to_shape(init), fm, *a.dictionaries,
                                                  *a.regressor, cfg);
                } else {
                    throw Error("method must be 'fc' or 'dict'");
                }
                py::dict out;
                out["shape"] = t.final_shape.coords;
                out["iterations"] = t.iterations.size();
                out["converged"] = t.converged;
                out["aborted"] = t.aborted;
                return out;
            },
            py::arg("image"), py::arg("init"), py::arg("method") = "fc", py::arg("iterations") = 0,
            py::arg("seed") = 1);

    m.def(
        "load_model", [](const std::string& path) { return load_model(std::filesystem::path(path)); }, py::arg("path"));

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            int code;
            {
                py::gil_scoped_release release;
                code = run_cli(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs the `dam` tool in-process; returns (exit code, stdout, stderr).");

    m.attr("NUM_LANDMARKS") = kNumLandmarks;
    m.attr("DEFAULT_RECONSTRUCTION_SWEEPS") = kDefaultReconstructionSweeps;
}
