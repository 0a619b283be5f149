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
#include "dam/data_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <zlib.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace dam {

namespace {

std::string_view trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_lines(std::string_view text)
{
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto end = text.find('\n', start);
        if (end == std::string_view::npos) {
            if (start < text.size()) {
                lines.push_back(text.substr(start));
            }
            break;
        }
        lines.push_back(text.substr(start, end - start));
        start = end + 1;
    }
    return lines;
}

bool parse_number(std::string_view s, double& out)
{
    if (!s.empty() && s.front() == '+') {
        s.remove_prefix(1);
    }
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

std::vector<std::string_view> split_ws(std::string_view s)
{
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) {
            ++i;
        }
        const std::size_t j = i;
        while (i < s.size() && s[i] != ' ' && s[i] != '\t') {
            ++i;
        }
        if (i > j) {
            out.push_back(s.substr(j, i - j));
        }
    }
    return out;
}

// "key: value" header line of a pts file.
std::string_view header_value(std::string_view line, std::string_view key, int lineno)
{
    const auto colon = line.find(':');
    if (colon == std::string_view::npos || trim(line.substr(0, colon)) != key) {
        throw ParseError("expected '" + std::string(key) + ":' header", lineno);
    }
    return trim(line.substr(colon + 1));
}

std::vector<std::string> split_csv(std::string_view line)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) {
            break;
        }
        start = comma + 1;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Archive byte streams (little-endian)

constexpr char kMagic[4] = {'D', 'A', 'M', 'K'};

class ByteWriter
{
public:
    void u32(std::uint32_t v)
    {
        for (int i = 0; i < 4; ++i) {
            bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
        }
    }
    void u64(std::uint64_t v)
    {
        for (int i = 0; i < 8; ++i) {
            bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
        }
    }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(std::string_view s)
    {
        u64(s.size());
        bytes_.append(s);
    }
    void raw(std::string_view s) { bytes_.append(s); }
    void matrix(const MatrixXd& m)
    {
        u64(static_cast<std::uint64_t>(m.rows()));
        u64(static_cast<std::uint64_t>(m.cols()));
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            for (Eigen::Index i = 0; i < m.rows(); ++i) {
                f64(m(i, j));
            }
        }
    }
    void vector(const VectorXd& v) { matrix(v); }
    void section(const char tag[4], const ByteWriter& payload)
    {
        bytes_.append(tag, 4);
        u64(payload.bytes_.size());
        bytes_.append(payload.bytes_);
    }
    const std::string& bytes() const { return bytes_; }

private:
    std::string bytes_;
};

class ByteReader
{
public:
    explicit ByteReader(std::string_view data) : data_(data) {}

    std::string_view take(std::size_t n)
    {
        if (n > data_.size() - pos_) {
            throw IoError("model archive: truncated stream");
        }
        const auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint32_t u32()
    {
        const auto s = take(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[i])) << (8 * i);
        }
        return v;
    }
    std::uint64_t u64()
    {
        const auto s = take(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[i])) << (8 * i);
        }
        return v;
    }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str()
    {
        const std::uint64_t n = u64();
        return std::string(take(n));
    }
    MatrixXd matrix()
    {
        const std::uint64_t rows = u64();
        const std::uint64_t cols = u64();
        if (rows > (1u << 28) || cols > (1u << 28) || (rows * cols) > remaining() / 8) {
            throw IoError("model archive: truncated stream");
        }
        MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            for (Eigen::Index i = 0; i < m.rows(); ++i) {
                m(i, j) = f64();
            }
        }
        return m;
    }
    VectorXd vector()
    {
        MatrixXd m = matrix();
        if (m.cols() != 1 && m.size() != 0) {
            throw IoError("model archive: expected a vector");
        }
        return Eigen::Map<VectorXd>(m.data(), m.size());
    }
    std::size_t remaining() const { return data_.size() - pos_; }
    bool done() const { return pos_ == data_.size(); }

private:
    std::string_view data_;
    std::size_t pos_ = 0;
};

void write_grbm(ByteWriter& w, const GrbmParams& p)
{
    w.matrix(p.weights);
    w.vector(p.visible_bias);
    w.vector(p.sigma);
    w.vector(p.hidden_bias);
}

GrbmParams read_grbm(ByteReader& r)
{
    GrbmParams p;
    p.weights = r.matrix();
    p.visible_bias = r.vector();
    p.sigma = r.vector();
    p.hidden_bias = r.vector();
    return p;
}

void write_stack(ByteWriter& w, const StackParams& s)
{
    write_grbm(w, s.bottom);
    w.matrix(s.upper_weights);
    w.vector(s.upper_bias);
}

StackParams read_stack(ByteReader& r)
{
    StackParams s;
    s.bottom = read_grbm(r);
    s.upper_weights = r.matrix();
    s.upper_bias = r.vector();
    return s;
}

std::uint32_t crc(std::string_view bytes)
{
    uLong c = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        const std::size_t n = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
        c = crc32(c, reinterpret_cast<const Bytef*>(bytes.data() + pos), static_cast<uInt>(n));
        pos += n;
    }
    return static_cast<std::uint32_t>(c);
}

} // namespace

// ---------------------------------------------------------------------------

std::string format_double(double v)
{
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) {
        throw Error("format_double: conversion failed");
    }
    return std::string(buf, ptr);
}

Shape parse_pts(std::string_view text)
{
    const auto lines = split_lines(text);
    std::size_t i = 0;
    auto next = [&]() -> std::pair<std::string_view, int> {
        while (i < lines.size()) {
            const auto t = trim(lines[i++]);
            if (!t.empty()) {
                return {t, static_cast<int>(i)};
            }
        }
        throw ParseError("unexpected end of file", static_cast<int>(lines.size()));
    };

    {
        const auto [line, no] = next();
        const auto v = header_value(line, "version", no);
        double version = 0.0;
        if (!parse_number(v, version)) {
            throw ParseError("non-numeric version", no);
        }
    }
    int n_points = 0;
    {
        const auto [line, no] = next();
        const auto v = header_value(line, "n_points", no);
        const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), n_points);
        if (ec != std::errc() || ptr != v.data() + v.size() || n_points <= 0) {
            throw ParseError("n_points must be a positive integer", no);
        }
    }
    {
        const auto [line, no] = next();
        if (line != "{") {
            throw ParseError("expected '{'", no);
        }
    }
    Shape s(VectorXd(2 * n_points));
    for (int k = 0; k < n_points; ++k) {
        const auto [line, no] = next();
        if (line == "}") {
            throw ParseError("expected " + std::to_string(n_points) + " points, found " + std::to_string(k), no);
        }
        const auto fields = split_ws(line);
        if (fields.size() != 2) {
            throw ParseError("expected two coordinates", no);
        }
        double x = 0.0, y = 0.0;
        if (!parse_number(fields[0], x) || !parse_number(fields[1], y)) {
            throw ParseError("non-numeric coordinate", no);
        }
        s.coords[2 * k] = x;
        s.coords[2 * k + 1] = y;
    }
    const auto [line, no] = next();
    if (line != "}") {
        throw ParseError("point count exceeds n_points = " + std::to_string(n_points), no);
    }
    return s;
}

std::string format_pts(const Shape& shape)
{
    if (shape.coords.size() == 0 || shape.coords.size() % 2 != 0) {
        throw DimensionError("format_pts: shape must hold a positive, even number of coordinates");
    }
    std::string out = "version: 1\nn_points: " + std::to_string(shape.num_points()) + "\n{\n";
    for (int i = 0; i < shape.num_points(); ++i) {
        out += format_double(shape.coords[2 * i]);
        out += ' ';
        out += format_double(shape.coords[2 * i + 1]);
        out += '\n';
    }
    out += "}\n";
    return out;
}

GrayImage load_image(const std::filesystem::path& path)
{
    const cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (raw.empty()) {
        throw IoError("cannot read image '" + path.string() + "'");
    }
    cv::Mat f;
    raw.convertTo(f, CV_64F, raw.depth() == CV_16U ? 255.0 / 65535.0 : 1.0);
    GrayImage img(f.cols, f.rows);
    const int ch = f.channels();
    for (int y = 0; y < f.rows; ++y) {
        const double* row = f.ptr<double>(y);
        for (int x = 0; x < f.cols; ++x) {
            const double* px = row + x * ch;
            // OpenCV stores colour as BGR(A)
            img.at(x, y) = ch >= 3 ? 0.299 * px[2] + 0.587 * px[1] + 0.114 * px[0] : px[0];
        }
    }
    return img;
}

void save_image(const GrayImage& image, const std::filesystem::path& path)
{
    cv::Mat m(image.height(), image.width(), CV_8U);
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            const double v = image.at(x, y);
            m.at<std::uint8_t>(y, x) =
                static_cast<std::uint8_t>(std::isfinite(v) ? std::clamp(std::round(v), 0.0, 255.0) : 0.0);
        }
    }
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    if (!cv::imwrite(path.string(), m)) {
        throw IoError("cannot write image '" + path.string() + "'");
    }
}

std::vector<ManifestEntry> DatasetManifest::select(Split split) const
{
    std::vector<ManifestEntry> out;
    std::copy_if(entries.begin(), entries.end(), std::back_inserter(out),
                 [split](const ManifestEntry& e) { return e.split == split; });
    return out;
}

DatasetManifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir)
{
    DatasetManifest m;
    m.base_dir = base_dir;
    const auto lines = split_lines(text);
    bool header = false;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto line = trim(lines[i]);
        const int no = static_cast<int>(i + 1);
        if (line.empty() || line.front() == '#') {
            continue;
        }
        const auto f = split_csv(line);
        if (!header) {
            if (f.size() != 3 || f[0] != "image" || f[1] != "landmarks" || f[2] != "split") {
                throw ParseError("manifest header must be 'image,landmarks,split'", no);
            }
            header = true;
            continue;
        }
        if (f.size() != 3 || f[0].empty() || f[1].empty()) {
            throw ParseError("manifest row needs image, landmarks and split", no);
        }
        ManifestEntry e{f[0], f[1], Split::kTrain};
        if (f[2] == "test") {
            e.split = Split::kTest;
        } else if (f[2] != "train") {
            throw ParseError("split must be 'train' or 'test'", no);
        }
        if (!seen.insert(f[0]).second || !seen.insert("\x01" + f[1]).second) {
            throw ParseError("duplicate path in manifest", no);
        }
        m.entries.push_back(std::move(e));
    }
    return m;
}

DatasetManifest read_manifest(const std::filesystem::path& path)
{
    return parse_manifest(read_text_file(path), path.parent_path());
}

std::string format_manifest(const DatasetManifest& manifest)
{
    std::string out = "image,landmarks,split\n";
    for (const auto& e : manifest.entries) {
        out += e.image.generic_string() + "," + e.landmarks.generic_string() + "," +
               (e.split == Split::kTrain ? "train" : "test") + "\n";
    }
    return out;
}

std::vector<AnnotatedFace> load_dataset(const DatasetManifest& manifest, std::optional<Split> split)
{
    std::vector<AnnotatedFace> faces;
    std::optional<int> n_points;
    for (const auto& e : manifest.entries) {
        if (split && e.split != *split) {
            continue;
        }
        const auto image_path = e.image.is_absolute() ? e.image : manifest.base_dir / e.image;
        const auto pts_path = e.landmarks.is_absolute() ? e.landmarks : manifest.base_dir / e.landmarks;
        AnnotatedFace face;
        face.image = load_image(image_path);
        try {
            face.shape = parse_pts(read_text_file(pts_path));
        } catch (const ParseError& err) {
            throw ParseError(pts_path.string() + ": " + err.what(), 0);
        }
        face.shape.coords.array() -= 1.0;
        if (n_points && *n_points != face.shape.num_points()) {
            throw DimensionError("load_dataset: '" + pts_path.string() + "' has " +
                                 std::to_string(face.shape.num_points()) + " landmarks, expected " +
                                 std::to_string(*n_points));
        }
        n_points = face.shape.num_points();
        face.id = e.image.stem().string();
        for (int i = 0; i < face.shape.num_points(); ++i) {
            const auto p = face.shape.point(i);
            if (p.x() < 0.0 || p.y() < 0.0 || p.x() > face.image.width() - 1 || p.y() > face.image.height() - 1) {
                face.out_of_bounds = true;
            }
        }
        faces.push_back(std::move(face));
    }
    return faces;
}

// ---------------------------------------------------------------------------

void save_model(const ModelArchive& a, std::ostream& out)
{
    ByteWriter w;
    w.raw(std::string_view(kMagic, 4));
    w.u32(a.version);

    ByteWriter conf;
    conf.u64(a.config.size());
    for (const auto& [k, v] : a.config) {
        conf.str(k);
        conf.str(v);
    }
    w.section("CONF", conf);

    ByteWriter parm;
    write_stack(parm, a.model.params.shape);
    write_stack(parm, a.model.params.texture);
    parm.matrix(a.model.params.joint_shape_weights);
    parm.matrix(a.model.params.joint_texture_weights);
    parm.vector(a.model.params.joint_bias);
    parm.vector(a.model.shape_scaler.mean);
    parm.vector(a.model.shape_scaler.scale);
    parm.vector(a.model.texture_scaler.mean);
    parm.vector(a.model.texture_scaler.scale);
    w.section("PARM", parm);

    ByteWriter fram;
    fram.vector(a.frame.mean_shape.coords);
    fram.i32(a.frame.size.width);
    fram.i32(a.frame.size.height);
    fram.u64(a.frame.triangles.size());
    for (const auto& t : a.frame.triangles) {
        for (int v : t) {
            fram.i32(v);
        }
    }
    w.section("FRAM", fram);

    if (a.dictionaries) {
        ByteWriter d;
        d.matrix(a.dictionaries->image_dictionary);
        d.matrix(a.dictionaries->reconstruction_dictionary);
        d.f64(a.dictionaries->lambda);
        w.section("DICT", d);
    }
    if (a.regressor) {
        ByteWriter r;
        r.matrix(a.regressor->H);
        r.vector(a.regressor->b);
        w.section("REGR", r);
    }
    ByteWriter end;
    end.u32(crc(w.bytes()));
    w.section("END ", end);

    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) {
        throw IoError("model archive: write failed");
    }
}

ModelArchive load_model(std::istream& in)
{
    const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ByteReader r(data);
    if (r.take(4) != std::string_view(kMagic, 4)) {
        throw IoError("model archive: bad magic bytes");
    }
    ModelArchive a;
    a.version = r.u32();
    if (a.version != kArchiveVersion) {
        throw IoError("model archive: unsupported version " + std::to_string(a.version) + " (expected " +
                      std::to_string(kArchiveVersion) + ")");
    }
    bool have_parm = false, have_frame = false, have_end = false;
    while (!r.done()) {
        const std::size_t section_start = data.size() - r.remaining();
        const std::string tag(r.take(4));
        const std::uint64_t len = r.u64();
        ByteReader s(r.take(len));
        if (tag == "CONF") {
            const std::uint64_t n = s.u64();
            for (std::uint64_t i = 0; i < n; ++i) {
                std::string k = s.str();
                a.config[k] = s.str();
            }
        } else if (tag == "PARM") {
            DamParams& p = a.model.params;
            p.shape = read_stack(s);
            p.texture = read_stack(s);
            p.joint_shape_weights = s.matrix();
            p.joint_texture_weights = s.matrix();
            p.joint_bias = s.vector();
            a.model.shape_scaler.mean = s.vector();
            a.model.shape_scaler.scale = s.vector();
            a.model.texture_scaler.mean = s.vector();
            a.model.texture_scaler.scale = s.vector();
            have_parm = true;
        } else if (tag == "FRAM") {
            Shape mean(s.vector());
            FrameSize size{s.i32(), s.i32()};
            const std::uint64_t n = s.u64();
            if (n > s.remaining() / 12) {
                throw IoError("model archive: truncated stream");
            }
            std::vector<std::array<int, 3>> tris(n);
            for (auto& t : tris) {
                t = {s.i32(), s.i32(), s.i32()};
            }
            a.frame = make_reference_frame(std::move(mean), size, std::move(tris));
            have_frame = true;
        } else if (tag == "DICT") {
            DictPair d;
            d.image_dictionary = s.matrix();
            d.reconstruction_dictionary = s.matrix();
            d.lambda = s.f64();
            a.dictionaries = std::move(d);
        } else if (tag == "REGR") {
            UpdateRegressor reg;
            reg.H = s.matrix();
            reg.b = s.vector();
            a.regressor = std::move(reg);
        } else if (tag == "END ") {
            const std::uint32_t expected = s.u32();
            if (crc(std::string_view(data).substr(0, section_start)) != expected) {
                throw IoError("model archive: checksum mismatch");
            }
            have_end = true;
            if (!r.done()) {
                throw IoError("model archive: trailing bytes after end section");
            }
            break;
        } else {
            throw IoError("model archive: unknown section '" + tag + "'");
        }
        if (!s.done()) {
            throw IoError("model archive: section '" + tag + "' has trailing bytes");
        }
    }
    if (!have_end) {
        throw IoError("model archive: truncated stream (missing end section)");
    }
    if (!have_parm || !have_frame) {
        throw IoError("model archive: missing parameter or frame section");
    }
    a.model.params.validate();
    return a;
}

void save_model(const ModelArchive& archive, const std::filesystem::path& path)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    save_model(archive, out);
}

ModelArchive load_model(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open model archive '" + path.string() + "'");
    }
    return load_model(in);
}

std::string read_text_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read '" + path.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write '" + path.string() + "'");
    }
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

} // namespace dam
