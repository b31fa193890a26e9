#pragma once

#include <algorithm>
#include <climits>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "bcm/error.hpp"
#include "bcm/grid.hpp"
#include "bcm/operator.hpp"
#include "bcm/recon.hpp"
#include "bcm/s2s.hpp"
#include "bcm/scene.hpp"
#include "bcm/wave.hpp"

namespace bcm::io {

using json = nlohmann::json;

inline constexpr const char* kVersion = "bcm 1.0.0";

// Path-aware view of a JSON configuration. Every value read, including defaults, is copied into
// a shared "resolved" document so that the manifest records exactly what the run used.
class ConfigReader {
public:
    ConfigReader(const json& node, json& resolved, json::json_pointer path = json::json_pointer())
        : node_(&node), resolved_(&resolved), path_(std::move(path))
    {
        if (!node.is_object())
            fail("expected an object");
        if (!resolved_->contains(path_))
            (*resolved_)[path_] = json::object();
    }

    std::string where(const std::string& key = {}) const
    {
        std::string p = path_.to_string();
        return key.empty() ? (p.empty() ? "/" : p) : p + "/" + key;
    }
    [[noreturn]] void fail(const std::string& msg, const std::string& key = {}) const
    {
        throw ConfigError(where(key) + ": " + msg);
    }

    bool has(const std::string& key) const { return node_->contains(key); }
    const json& raw(const std::string& key) const
    {
        if (!has(key))
            fail("required field is missing", key);
        return node_->at(key);
    }

    ConfigReader child(const std::string& key) const { return ConfigReader(raw(key), *resolved_, path_ / key); }
    std::vector<ConfigReader> children(const std::string& key) const
    {
        const json& a = raw(key);
        if (!a.is_array())
            fail("expected an array", key);
        (*resolved_)[path_ / key] = json::array();
        std::vector<ConfigReader> out;
        for (std::size_t i = 0; i < a.size(); ++i)
            out.emplace_back(a[i], *resolved_, path_ / key / i);
        return out;
    }

    double number(const std::string& key, std::optional<double> def = std::nullopt, double lo = -HUGE_VAL,
                  double hi = HUGE_VAL) const
    {
        double v;
        if (!has(key)) {
            if (!def)
                fail("required field is missing", key);
            v = *def;
        } else {
            const json& j = node_->at(key);
            if (!j.is_number())
                fail("expected a number", key);
            v = j.get<double>();
        }
        if (!std::isfinite(v) || v < lo || v > hi)
            fail(range_text(lo, hi), key);
        (*resolved_)[path_ / key] = v;
        return v;
    }

    long long integer(const std::string& key, std::optional<long long> def = std::nullopt, long long lo = LLONG_MIN,
                      long long hi = LLONG_MAX) const
    {
        long long v;
        if (!has(key)) {
            if (!def)
                fail("required field is missing", key);
            v = *def;
        } else {
            const json& j = node_->at(key);
            if (!j.is_number_integer())
                fail("expected an integer", key);
            v = j.get<long long>();
        }
        if (v < lo || v > hi)
            fail(range_text(static_cast<double>(lo), static_cast<double>(hi)), key);
        (*resolved_)[path_ / key] = v;
        return v;
    }

    std::string text(const std::string& key, std::optional<std::string> def, const std::vector<std::string>& allowed = {}) const
    {
        std::string v;
        if (!has(key)) {
            if (!def)
                fail("required field is missing", key);
            v = *def;
        } else {
            if (!node_->at(key).is_string())
                fail("expected a string", key);
            v = node_->at(key).get<std::string>();
        }
        if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
            std::string list;
            for (const auto& a : allowed)
                list += (list.empty() ? "" : ", ") + a;
            fail("must be one of: " + list, key);
        }
        (*resolved_)[path_ / key] = v;
        return v;
    }

    std::vector<double> numbers(const std::string& key, std::optional<std::vector<double>> def = std::nullopt,
                                int min_size = 0, int max_size = INT_MAX) const
    {
        std::vector<double> v;
        if (!has(key)) {
            if (!def)
                fail("required field is missing", key);
            v = *def;
        } else {
            const json& a = node_->at(key);
            if (!a.is_array())
                fail("expected an array of numbers", key);
            for (const auto& e : a) {
                if (!e.is_number())
                    fail("expected an array of numbers", key);
                v.push_back(e.get<double>());
            }
        }
        if (static_cast<int>(v.size()) < min_size || static_cast<int>(v.size()) > max_size)
            fail("array length must lie in [" + std::to_string(min_size) + ", " +
                     (max_size == INT_MAX ? std::string("inf") : std::to_string(max_size)) + "]",
                 key);
        (*resolved_)[path_ / key] = v;
        return v;
    }

    // A chart point with one coordinate per grid axis.
    Point point(const std::string& key, int dim) const
    {
        auto v = numbers(key, std::nullopt, dim, dim);
        return {v[0], dim == 2 ? v[1] : 0.0};
    }

    // Rejects fields outside the documented set, so typos surface as errors.
    void only(const std::vector<std::string>& keys) const
    {
        for (auto it = node_->begin(); it != node_->end(); ++it)
            if (std::find(keys.begin(), keys.end(), it.key()) == keys.end())
                fail("unknown field", it.key());
    }

    const json::json_pointer& path() const { return path_; }
    json& resolved_doc() const { return *resolved_; }

private:
    static std::string range_text(double lo, double hi)
    {
        char buf[128];
        std::snprintf(buf, sizeof buf, "value must be finite and lie in [%g, %g]", lo, hi);
        return buf;
    }

    const json* node_;
    json* resolved_;
    json::json_pointer path_;
};

inline PeriodicGrid read_grid(const ConfigReader& c)
{
    c.only({"type", "n", "length"});
    const std::string type = c.text("type", std::nullopt, {"circle", "torus"});
    if (type == "circle") {
        int n = static_cast<int>(c.integer("n", std::nullopt, 8, 4096));
        return PeriodicGrid::circle(n, c.number("length", 1.0, 1e-12));
    }
    auto n = c.numbers("n", std::nullopt, 2, 2);
    auto len = c.numbers("length", std::vector<double>{1.0, 1.0}, 2, 2);
    for (double v : n)
        if (v != std::floor(v) || v < 8 || v > 4096)
            c.fail("entries must be integers in [8, 4096]", "n");
    for (double v : len)
        if (!(v > 0.0))
            c.fail("entries must be positive", "length");
    return PeriodicGrid::torus(static_cast<int>(n[0]), static_cast<int>(n[1]), len[0], len[1]);
}

// Scalar field: a number, or {"constant"|"random"|"cosine"|"bump"|"values": ...}.
inline VecD read_field(const json& node, json& resolved, const json::json_pointer& path, const PeriodicGrid& g,
                       std::mt19937_64& rng, double fallback)
{
    if (node.is_null()) {
        resolved[path] = fallback;
        return VecD::Constant(g.nodes(), fallback);
    }
    if (node.is_number()) {
        resolved[path] = node;
        return VecD::Constant(g.nodes(), node.get<double>());
    }
    ConfigReader c(node, resolved, path);
    c.only({"type", "mean", "amplitude", "modes", "k", "centre", "width", "values"});
    const std::string type = c.text("type", std::nullopt, {"constant", "random", "cosine", "bump", "values"});
    if (type == "values") {
        auto v = c.numbers("values", std::nullopt, g.nodes(), g.nodes());
        return Eigen::Map<const VecD>(v.data(), g.nodes());
    }
    const double mean = c.number("mean", 0.0);
    if (type == "constant")
        return VecD::Constant(g.nodes(), mean);
    const double amp = c.number("amplitude", 0.0);
    if (type == "random")
        return smooth_field(g, rng, mean, amp, static_cast<int>(c.integer("modes", 3, 1, 16)));
    VecD f(g.nodes());
    if (type == "cosine") {
        auto k = c.numbers("k", std::vector<double>(static_cast<std::size_t>(g.dim()), 1.0), g.dim(), g.dim());
        for (int i = 0; i < g.nodes(); ++i) {
            auto p = g.position(i);
            double arg = k[0] * p[0] / g.length(0) + (g.dim() == 2 ? k[1] * p[1] / g.length(1) : 0.0);
            f[i] = mean + amp * std::cos(2.0 * M_PI * arg);
        }
        return f;
    }
    const Point centre = c.point("centre", g.dim());
    const double width = c.number("width", std::nullopt, 1e-12);
    for (int i = 0; i < g.nodes(); ++i)
        f[i] = mean + amp * bump(g.flat_distance(g.position(i), centre) / width);
    return f;
}

inline IndicatorSet read_set(const ConfigReader& c, const PeriodicGrid& g, const VecD& volumes)
{
    c.only({"type", "centre", "radius", "lo", "hi", "nodes"});
    const std::string type = c.text("type", std::nullopt, {"ball", "arc", "nodes"});
    if (type == "ball")
        return chart_ball(g, volumes, c.point("centre", g.dim()), c.number("radius", std::nullopt, 0.0));
    std::vector<char> f(static_cast<std::size_t>(g.nodes()), 0);
    if (type == "arc") {
        if (g.dim() != 1)
            c.fail("arcs are only defined on the circle", "type");
        const double lo = c.number("lo"), hi = c.number("hi");
        for (int i = 0; i < g.nodes(); ++i) {
            double x = g.position(i)[0];
            f[static_cast<std::size_t>(i)] = x >= lo && x < hi;
        }
    } else {
        for (double v : c.numbers("nodes", std::nullopt, 1)) {
            if (v != std::floor(v) || v < 0 || v >= g.nodes())
                c.fail("node indices must be integers in [0, nodes)", "nodes");
            f[static_cast<std::size_t>(v)] = 1;
        }
    }
    return IndicatorSet::from_flags(std::move(f), volumes);
}

struct Scene {
    Model model;
    IndicatorSet X;
    double T = 0.0;
    int steps = 256;
};

inline Scene read_scene(const ConfigReader& c, std::mt19937_64& rng)
{
    c.only({"grid", "rho", "A", "V", "X", "T", "steps", "name"});
    Scene s;
    const PeriodicGrid g = read_grid(c.child("grid"));
    Model m = Model::free(g, c.text("name", std::string("scene")));
    const json null;
    auto field = [&](const char* key, double fallback) {
        return read_field(c.has(key) ? c.raw(key) : null, c.resolved_doc(), c.path() / key, g, rng, fallback);
    };
    m.metric.rho = field("rho", 1.0);
    if ((m.metric.rho.array() <= 0.0).any())
        c.fail("metric not positive", "rho");
    if (c.has("A") && c.raw("A").is_array()) {
        const json& a = c.raw("A");
        if (static_cast<int>(a.size()) != g.dim())
            c.fail("needs one field per axis", "A");
        for (int ax = 0; ax < g.dim(); ++ax)
            m.A.value[static_cast<std::size_t>(ax)] =
                read_field(a[static_cast<std::size_t>(ax)], c.resolved_doc(), c.path() / "A" / ax, g, rng, 0.0);
    } else {
        VecD a = field("A", 0.0);
        for (int ax = 0; ax < g.dim(); ++ax)
            m.A.value[static_cast<std::size_t>(ax)] = a;
    }
    m.V.value = field("V", 0.0);
    s.model = m;
    s.X = read_set(c.child("X"), g, m.metric.volumes(g));
    if (s.X.empty())
        c.fail("observation set is empty", "X");
    s.T = c.number("T", std::nullopt, 1e-12);
    s.steps = static_cast<int>(c.integer("steps", 256, 4, 8192));
    return s;
}

// Spatial bump of half-width radius times a temporal bump on [t0, t1], scaled by amplitude e^{i phase}.
struct AtomSpec {
    Point centre{};
    double radius = 0.0, t0 = 0.0, t1 = 0.0, amplitude = 1.0, phase = 0.0;
};

inline AtomSpec read_atom(const ConfigReader& c, int dim)
{
    c.only({"centre", "radius", "t0", "t1", "amplitude", "phase"});
    AtomSpec a;
    a.centre = c.point("centre", dim);
    a.radius = c.number("radius", std::nullopt, 1e-12);
    a.t0 = c.number("t0", std::nullopt, 0.0);
    a.t1 = c.number("t1", std::nullopt, 0.0);
    if (!(a.t1 > a.t0))
        c.fail("t1 must exceed t0", "t1");
    a.amplitude = c.number("amplitude", 1.0);
    a.phase = c.number("phase", 0.0);
    return a;
}

// The temporal profile is cut before T so that the atom qualifies for the data-side inner product.
inline Atom make_atom(S2SOperator& op, const AtomSpec& a)
{
    const auto& g = op.grid();
    const double T = op.T(), dt = op.dt();
    if (a.t1 > T)
        throw ConfigError("atom time window must end by T");
    VecC b = temporal_bump(dt, op.steps(), 0.5 * (a.t0 + a.t1), 0.5 * (a.t1 - a.t0), 0.0, T - 0.5 * dt);
    b *= std::polar(a.amplitude, a.phase);
    return {op.acquire(SpatialProfile::from_dense(spatial_bump(g, a.centre, a.radius))), b};
}

// CSV with fixed formatting and LF line endings.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& file, const std::vector<std::string>& header) : out_(file, std::ios::binary)
    {
        if (!out_)
            throw ConfigError("cannot write " + file.string());
        for (std::size_t k = 0; k < header.size(); ++k)
            out_ << (k ? "," : "") << header[k];
        out_ << '\n';
    }
    CsvWriter& cell(double v)
    {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.12e", v);
        return put(buf);
    }
    CsvWriter& cell(long long v) { return put(std::to_string(v)); }
    CsvWriter& cell(int v) { return put(std::to_string(v)); }
    CsvWriter& cell(const std::string& v) { return put(v); }
    void end()
    {
        out_ << '\n';
        first_ = true;
    }

private:
    CsvWriter& put(const std::string& s)
    {
        out_ << (first_ ? "" : ",") << s;
        first_ = false;
        return *this;
    }
    std::ofstream out_;
    bool first_ = true;
};

inline void write_json(const std::filesystem::path& file, const json& j)
{
    std::ofstream out(file, std::ios::binary);
    if (!out)
        throw ConfigError("cannot write " + file.string());
    out << j.dump(2) << '\n';
}

// Trace of one atom as rows (t, node, re, im).
inline void write_trace(const std::filesystem::path& file, const S2SOperator& op, const MatC& trace)
{
    CsvWriter w(file, {"t", "node", "re", "im"});
    for (Eigen::Index i = 0; i < trace.rows(); ++i)
        for (int l = 0; l < op.X().count(); ++l) {
            w.cell(static_cast<double>(i) * op.dt()).cell(op.X().nodes()[static_cast<std::size_t>(l)]);
            w.cell(trace(i, l).real()).cell(trace(i, l).imag());
            w.end();
        }
}

// Wavefield snapshot as rows (i0, [i1,] re, im).
inline void write_wavefield(const std::filesystem::path& file, const PeriodicGrid& g, const VecC& u)
{
    std::vector<std::string> header = {"i0"};
    if (g.dim() == 2)
        header.push_back("i1");
    header.insert(header.end(), {"re", "im"});
    CsvWriter w(file, header);
    for (int i = 0; i < g.nodes(); ++i) {
        auto c = g.coords(i);
        w.cell(c[0]);
        if (g.dim() == 2)
            w.cell(c[1]);
        w.cell(u[i].real()).cell(u[i].imag());
        w.end();
    }
}

// Real nodal field with one index column per axis, e.g. a distance field.
inline void write_field(const std::filesystem::path& file, const PeriodicGrid& g, const VecD& v)
{
    std::vector<std::string> header = {"i0"};
    if (g.dim() == 2)
        header.push_back("i1");
    header.push_back("value");
    CsvWriter w(file, header);
    for (int i = 0; i < g.nodes(); ++i) {
        auto c = g.coords(i);
        w.cell(c[0]);
        if (g.dim() == 2)
            w.cell(c[1]);
        w.cell(v[i]).end();
    }
}

inline void write_spectrum(const std::filesystem::path& file, const SpectralDecomposition& sd)
{
    CsvWriter w(file, {"j", "lambda"});
    for (int j = 0; j < sd.size(); ++j)
        w.cell(j).cell(sd.lambda[j]).end();
}

// Model fields in the configuration format, so a run can be replayed with exactly these values.
inline json model_fields(const Model& m)
{
    auto values = [](const VecD& v) { return json{{"type", "values"}, {"values", std::vector<double>(v.data(), v.data() + v.size())}}; };
    json A = json::array();
    for (int ax = 0; ax < m.grid.dim(); ++ax)
        A.push_back(values(m.A.value[static_cast<std::size_t>(ax)]));
    return {{"rho", values(m.metric.rho)}, {"A", A}, {"V", values(m.V.value)}};
}

} // namespace bcm::io
