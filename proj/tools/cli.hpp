/*
 * Copyright (c) 2026 The relfk authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "relfk/relfk.hpp"

namespace relfk::cli {

inline constexpr const char* kVersion = "0.1.0";

enum class Kind { integer, real, real_list, text };

struct Key {
    std::string name;
    std::string fallback;
    Kind kind;
    std::string help;
    std::set<std::string> subcommands;  // empty: every subcommand
    std::vector<std::string> choices;
    bool digest = true;                 // folded into the config digest
};

inline const std::set<std::string>& subcommand_names() {
    static const std::set<std::string> names{"validate", "kernel", "sample", "estimate", "converge", "l2"};
    return names;
}

inline std::string subcommand_help(const std::string& name) {
    static const std::map<std::string, std::string> help{
        {"validate", "run the deterministic self-checks and report PASS/FAIL per check"},
        {"kernel", "tabulate the free transition density k_0^m(r, t) over radii and masses"},
        {"sample", "dump one jump path or subordinator path"},
        {"estimate", "Monte Carlo estimate of the semigroup at one point and mass"},
        {"converge", "coupled mass sweep with paired differences against m = 0"},
        {"l2", "discrete L2 distance to the m = 0 estimate over a grid"},
    };
    return help.at(name);
}

inline const std::vector<Key>& schema() {
    static const std::set<std::string> mc{"estimate", "converge", "l2"};
    static const std::vector<Key> keys = [] {
        std::vector<Key> k{
            {"d", "1", Kind::integer, "dimension (1, 2 or 3)", {"kernel", "sample", "estimate", "converge", "l2"}, {}},
            {"seed", "1", Kind::integer, "master seed; all randomness derives from it", {"sample", "estimate", "converge", "l2", "validate"}, {}},
            {"workers", "0", Kind::integer, "worker threads (0: hardware concurrency); never changes results", {"estimate", "converge", "l2", "validate"}, {}, false},
            {"out", "", Kind::text, "output file (default <subcommand>.csv); RELFK_OUTPUT_DIR overrides its directory", {}, {}, false},
            {"suite", "all", Kind::text, "validation suite", {"validate"}, {"all", "specfun", "kernel", "levy", "subordinator", "coupling", "estimator"}},
            {"t", "1", Kind::real, "time t (t_max for sample)", {"kernel", "sample", "estimate", "converge", "l2"}, {}},
            {"m", "0", Kind::real, "mass m >= 0", {"sample", "estimate"}, {}},
            {"m-list", "1,0.5,0.25,0.125", Kind::real_list, "masses (0 is appended)", {"kernel", "converge", "l2"}, {}},
            {"r-min", "0.001", Kind::real, "smallest tabulated |y|", {"kernel"}, {}},
            {"r-max", "100", Kind::real, "largest tabulated |y|", {"kernel"}, {}},
            {"r-n", "41", Kind::integer, "number of log-spaced radii", {"kernel"}, {}},
            {"process", "jump", Kind::text, "path to dump", {"sample"}, {"jump", "sub"}},
            {"j", "1", Kind::integer, "functional S_j (1, 2 or 3)", mc, {"1", "2", "3"}},
            {"x", "0", Kind::real_list, "evaluation point (1 or d values)", {"estimate", "converge"}, {}},
            {"x-grid", "-2:2:11", Kind::text, "lo:hi:n tensor grid with trapezoid weights", {"l2"}, {}},
            {"n", "10000", Kind::integer, "Monte Carlo samples (per grid point for l2)", mc, {}},
            {"eps", "0.001", Kind::real, "jump truncation radius", {"sample", "estimate", "converge", "l2"}, {}},
            {"eps-t", "0.0001", Kind::real, "subordinator truncation", {"sample", "estimate", "converge", "l2"}, {}},
            {"h", "0.001", Kind::real, "Ito step near the support of A", mc, {}},
            {"v-substeps", "256", Kind::integer, "V substeps per unit of t for j = 3", mc, {}},
            {"radial", "8", Kind::integer, "radial nodes of the small-ball rule", mc, {}},
            {"directions", "0", Kind::integer, "directions of the small-ball rule (0: default)", mc, {}},
            {"line-order", "8", Kind::integer, "Gauss-Legendre order of line averages", mc, {}},
            {"line-panel", "0.5", Kind::real, "panel length of line averages", mc, {}},
            {"block", "64", Kind::integer, "samples per reduction block", mc, {}},
            {"mode", "coupled", Kind::text, "path sampling", mc, {"coupled", "direct"}},
            {"A", "zero", Kind::text, "vector potential family", mc, {"zero", "affine", "gaussian_bump", "hoelder"}},
            {"A.M", "1", Kind::real_list, "affine matrix (1 or d*d row-major values)", mc, {}},
            {"A.b", "0", Kind::real_list, "affine offset", mc, {}},
            {"A.a", "1", Kind::real_list, "bump amplitude vector", mc, {}},
            {"A.c", "0", Kind::real_list, "bump center", mc, {}},
            {"A.w", "1", Kind::real, "bump width", mc, {}},
            {"A.alpha", "0.5", Kind::real, "hoelder exponent", mc, {}},
            {"V", "zero", Kind::text, "scalar potential family", mc, {"zero", "harmonic", "bump"}},
            {"V.kappa", "1", Kind::real, "harmonic strength", mc, {}},
            {"V.a", "1", Kind::real, "bump height (>= 0)", mc, {}},
            {"V.c", "0", Kind::real_list, "bump center", mc, {}},
            {"V.w", "1", Kind::real, "bump width", mc, {}},
            {"g", "one", Kind::text, "payoff family", mc, {"one", "zero", "gaussian"}},
            {"g.a", "1", Kind::real, "payoff amplitude", mc, {}},
            {"g.c", "0", Kind::real_list, "payoff center", mc, {}},
            {"g.w", "1", Kind::real, "payoff width", mc, {}},
            {"chi", "none", Kind::text, "gauge: A -> A + grad chi, g -> e^{i chi} g", mc, {"none", "gaussian", "quadratic"}},
            {"chi.a", "1", Kind::real, "gaussian gauge amplitude", mc, {}},
            {"chi.c", "0", Kind::real_list, "gauge center", mc, {}},
            {"chi.w", "1", Kind::real, "gaussian gauge width", mc, {}},
            {"chi.q", "1", Kind::real, "quadratic gauge curvature", mc, {}},
        };
        return k;
    }();
    return keys;
}

inline bool applies(const Key& k, const std::string& sub) { return k.subcommands.empty() || k.subcommands.count(sub); }

/// Resolved key=value configuration for one subcommand.
class RunConfig {
public:
    RunConfig(std::string sub, std::map<std::string, std::string> values)
        : sub_(std::move(sub)), values_(std::move(values)) {}

    const std::string& subcommand() const { return sub_; }
    const std::string& text(const std::string& key) const { return values_.at(key); }

    double real(const std::string& key) const { return parse_real(key, text(key)); }

    long long integer(const std::string& key) const {
        const std::string& s = text(key);
        long long v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size()) throw UsageError("field '" + key + "': not an integer: '" + s + "'");
        return v;
    }

    std::vector<double> list(const std::string& key) const {
        std::vector<double> out;
        std::stringstream ss(text(key));
        std::string item;
        while (std::getline(ss, item, ',')) out.push_back(parse_real(key, item));
        if (out.empty()) throw UsageError("field '" + key + "': empty list");
        return out;
    }

    /// Canonical text of every digest-relevant key, one key=value per line, sorted.
    std::string canonical() const {
        std::string s = "subcommand=" + sub_ + "\n";
        for (const auto& k : schema()) {
            if (applies(k, sub_) && k.digest) s += k.name + "=" + values_.at(k.name) + "\n";
        }
        return s;
    }

    std::uint64_t digest() const { return fnv1a(canonical()); }

    ParamMap field_params() const {
        ParamMap p;
        for (const auto& [k, v] : values_) {
            if (k == "A" || k == "V" || k == "g" || k == "chi") {
                p[k + ".family"] = v;
            } else if (k.size() > 2 && (k.rfind("A.", 0) == 0 || k.rfind("V.", 0) == 0 || k.rfind("g.", 0) == 0 ||
                                         k.rfind("chi.", 0) == 0)) {
                p[k] = v;
            }
        }
        return p;
    }

private:
    static double parse_real(const std::string& key, const std::string& s) {
        double v = 0.0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) {
            throw UsageError("field '" + key + "': not a finite number: '" + s + "'");
        }
        return v;
    }

    std::string sub_;
    std::map<std::string, std::string> values_;
};

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

/// Flat key=value file; '#' starts a comment.
inline std::map<std::string, std::string> read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("field 'config': cannot open '" + path + "'");
    std::map<std::string, std::string> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw UsageError("config " + path + ":" + std::to_string(lineno) + ": expected key=value");
        }
        auto key = trim(line.substr(0, eq));
        if (key.size() > 7 && key.substr(key.size() - 7) == ".family") key.resize(key.size() - 7);
        out[key] = trim(line.substr(eq + 1));
    }
    return out;
}

/// Applies defaults, the config file, then flags; checks every value against the schema.
inline RunConfig resolve(const std::string& sub, const std::map<std::string, std::string>& file,
                         const std::map<std::string, std::string>& flags) {
    std::map<std::string, std::string> values;
    std::map<std::string, const Key*> index;
    for (const auto& k : schema()) {
        if (!applies(k, sub)) continue;
        values[k.name] = k.fallback;
        index[k.name] = &k;
    }
    for (const auto* src : {&file, &flags}) {
        for (const auto& [key, v] : *src) {
            if (!index.count(key)) throw UsageError("field '" + key + "': unknown key for '" + sub + "'");
            values[key] = v;
        }
    }
    RunConfig cfg(sub, values);
    for (const auto& [name, key] : index) {
        switch (key->kind) {
            case Kind::integer: (void)cfg.integer(name); break;
            case Kind::real: (void)cfg.real(name); break;
            case Kind::real_list: (void)cfg.list(name); break;
            case Kind::text: break;
        }
        if (!key->choices.empty() &&
            std::find(key->choices.begin(), key->choices.end(), values[name]) == key->choices.end()) {
            throw UsageError("field '" + name + "': '" + values[name] + "' is not one of the allowed values");
        }
    }
    const auto d = index.count("d") ? cfg.integer("d") : 1;
    if (d < 1 || d > 3) throw UsageError("field 'd': must be 1, 2 or 3");
    return cfg;
}

// ---------------------------------------------------------------------------------------
// Output

inline std::string num(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, p);
}

inline std::string hex(std::uint64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

class CsvWriter {
public:
    CsvWriter(const RunConfig& cfg, std::ostream& log) : log_(log) {
        std::string out = cfg.text("out");
        if (out.empty()) out = cfg.subcommand() + ".csv";
        std::filesystem::path path(out);
        if (const char* dir = std::getenv("RELFK_OUTPUT_DIR"); dir && *dir) {
            path = std::filesystem::path(dir) / path.filename();
        }
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        path_ = path.string();
        file_.open(path_, std::ios::binary);
        if (!file_) throw UsageError("field 'out': cannot write '" + path_ + "'");
        file_ << "# relfk " << kVersion << "\n";
        file_ << "# config_digest=" << hex(cfg.digest()) << "\n";
    }

    void comment(const std::string& text) { file_ << "# " << text << "\n"; }
    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) file_ << (i ? "," : "") << cells[i];
        file_ << "\n";
    }
    void close() {
        file_.close();
        log_ << "wrote " << path_ << "\n";
    }
    const std::string& path() const { return path_; }

private:
    std::ostream& log_;
    std::string path_;
    std::ofstream file_;
};

// ---------------------------------------------------------------------------------------
// Subcommands

template <int D>
Point<D> point_from(const RunConfig& cfg, const std::string& key) {
    const auto v = cfg.list(key);
    Point<D> p{};
    if (v.size() == 1) {
        p.fill(v[0]);
    } else if (v.size() == static_cast<std::size_t>(D)) {
        std::copy(v.begin(), v.end(), p.begin());
    } else {
        throw UsageError("field '" + key + "': expected 1 or " + std::to_string(D) + " values");
    }
    return p;
}

inline Knobs knobs_from(const RunConfig& cfg) {
    Knobs k;
    k.eps = cfg.real("eps");
    k.eps_t = cfg.real("eps-t");
    k.ito.h = cfg.real("h");
    k.ito.v_substeps = static_cast<int>(cfg.integer("v-substeps"));
    k.quad.radial_nodes = static_cast<int>(cfg.integer("radial"));
    k.quad.directions = static_cast<int>(cfg.integer("directions"));
    k.quad.line_order = static_cast<int>(cfg.integer("line-order"));
    k.quad.line_panel = cfg.real("line-panel");
    k.block = static_cast<std::size_t>(cfg.integer("block"));
    k.mode = cfg.text("mode") == "direct" ? Mode::direct : Mode::coupled;
    k.seed = static_cast<std::uint64_t>(cfg.integer("seed"));
    const auto w = cfg.integer("workers");
    k.workers = w > 0 ? static_cast<unsigned>(w) : std::max(1u, std::thread::hardware_concurrency());
    if (!(k.eps > 0.0 && k.eps < 1.0)) throw UsageError("field 'eps': must lie in (0, 1)");
    if (!(k.eps_t > 0.0)) throw UsageError("field 'eps-t': must be > 0");
    if (!(k.ito.h > 0.0)) throw UsageError("field 'h': must be > 0");
    if (k.ito.v_substeps < 1) throw UsageError("field 'v-substeps': must be >= 1");
    if (k.quad.radial_nodes < 1 || k.quad.radial_nodes > 32) throw UsageError("field 'radial': must lie in [1, 32]");
    if (k.quad.line_order < 1 || k.quad.line_order > 32) throw UsageError("field 'line-order': must lie in [1, 32]");
    if (!(k.quad.line_panel > 0.0)) throw UsageError("field 'line-panel': must be > 0");
    if (k.block < 1) throw UsageError("field 'block': must be >= 1");
    k.label = cfg.canonical();
    return k;
}

template <int D>
struct Problem {
    FieldBundle<D> fields;
    Payoff<D> payoff;
};

template <int D>
Problem<D> problem_from(const RunConfig& cfg) {
    const auto params = cfg.field_params();
    Problem<D> p{make_fields<D>(params), make_payoff<D>(params)};
    if (cfg.text("chi") != "none") {
        const auto gauge = make_gauge<D>(params);
        p.fields = gauge_shift(p.fields, gauge);
        p.payoff = gauge_payoff(p.payoff, gauge, 1.0);
    }
    return p;
}

inline std::size_t samples_from(const RunConfig& cfg) {
    const auto n = cfg.integer("n");
    if (n < 2) throw UsageError("field 'n': must be >= 2");
    return static_cast<std::size_t>(n);
}

inline double time_from(const RunConfig& cfg, bool allow_zero) {
    const double t = cfg.real("t");
    if (!(t > 0.0 || (allow_zero && t == 0.0))) throw UsageError(std::string("field 't': must be ") + (allow_zero ? ">= 0" : "> 0"));
    return t;
}

inline std::vector<double> masses_from(const RunConfig& cfg) {
    auto m = cfg.list("m-list");
    for (double v : m) {
        if (!(v >= 0.0)) throw UsageError("field 'm-list': masses must be >= 0");
    }
    return m;
}

template <int D>
int cmd_estimate(const RunConfig& cfg, std::ostream& out) {
    const auto prob = problem_from<D>(cfg);
    const auto k = knobs_from(cfg);
    const double m = cfg.real("m");
    if (!(m >= 0.0)) throw UsageError("field 'm': must be >= 0");
    const auto e = estimate_semigroup<D>(static_cast<int>(cfg.integer("j")), point_from<D>(cfg, "x"),
                                         time_from(cfg, true), m, prob.fields, prob.payoff, samples_from(cfg), k);
    CsvWriter w(cfg, out);
    w.row({"m", "mean_re", "mean_im", "stderr", "se_re", "se_im", "n", "rejected"});
    w.row({num(m), num(e.mean.real()), num(e.mean.imag()), num(e.stderr), num(e.se_re), num(e.se_im),
           std::to_string(e.n_samples), std::to_string(e.rejected)});
    w.close();
    out << "mean " << num(e.mean.real()) << (e.mean.imag() < 0 ? " - " : " + ") << num(std::abs(e.mean.imag()))
        << "i  stderr " << num(e.stderr) << "  n " << e.n_samples << "\n";
    return 0;
}

template <int D>
int cmd_converge(const RunConfig& cfg, std::ostream& out) {
    const auto prob = problem_from<D>(cfg);
    const auto k = knobs_from(cfg);
    const auto rows = coupled_mass_sweep<D>(static_cast<int>(cfg.integer("j")), point_from<D>(cfg, "x"),
                                            time_from(cfg, true), masses_from(cfg), prob.fields, prob.payoff,
                                            samples_from(cfg), k);
    CsvWriter w(cfg, out);
    w.row({"m", "mean_re", "mean_im", "stderr", "paired_diff", "paired_diff_se"});
    for (const auto& r : rows) {
        w.row({num(r.m), num(r.estimate.mean.real()), num(r.estimate.mean.imag()), num(r.estimate.stderr),
               num(r.paired_diff.mean.real()), num(r.paired_diff.stderr)});
        out << "m " << num(r.m) << "  mean " << num(r.estimate.mean.real()) << "  paired_diff "
            << num(r.paired_diff.mean.real()) << " +- " << num(r.paired_diff.stderr) << "\n";
    }
    w.close();
    return 0;
}

template <int D>
std::pair<std::vector<Point<D>>, std::vector<double>> grid_from(const RunConfig& cfg) {
    const std::string spec = cfg.text("x-grid");
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(item);
    if (parts.size() != 3) throw UsageError("field 'x-grid': expected lo:hi:n");
    RunConfig tmp("l2", {{"lo", parts[0]}, {"hi", parts[1]}, {"n", parts[2]}});
    const double lo = tmp.real("lo");
    const double hi = tmp.real("hi");
    const auto n = tmp.integer("n");
    if (n < 2 || !(hi > lo)) throw UsageError("field 'x-grid': need hi > lo and n >= 2");
    std::vector<double> axis(n);
    std::vector<double> w1(n);
    const double step = (hi - lo) / (n - 1);
    for (long long i = 0; i < n; ++i) {
        axis[i] = lo + step * i;
        w1[i] = (i == 0 || i == n - 1) ? 0.5 * step : step;
    }
    std::vector<Point<D>> pts;
    std::vector<double> wts;
    std::vector<long long> idx(D, 0);
    for (;;) {
        Point<D> p{};
        double w = 1.0;
        for (int i = 0; i < D; ++i) {
            p[i] = axis[idx[i]];
            w *= w1[idx[i]];
        }
        pts.push_back(p);
        wts.push_back(w);
        int c = 0;
        while (c < D && ++idx[c] == n) idx[c++] = 0;
        if (c == D) break;
    }
    return {pts, wts};
}

template <int D>
int cmd_l2(const RunConfig& cfg, std::ostream& out) {
    const auto prob = problem_from<D>(cfg);
    const auto k = knobs_from(cfg);
    const auto [pts, wts] = grid_from<D>(cfg);
    const auto rows = l2_experiment<D>(static_cast<int>(cfg.integer("j")), pts, wts, time_from(cfg, false),
                                       masses_from(cfg), prob.fields, prob.payoff, samples_from(cfg), k);
    CsvWriter w(cfg, out);
    w.row({"m", "l2", "l2_se", "semigroup_diff", "semigroup_diff_se"});
    for (const auto& r : rows) {
        w.row({num(r.m), num(r.l2), num(r.l2_se), num(r.semigroup_diff), num(r.semigroup_diff_se)});
        out << "m " << num(r.m) << "  l2 " << num(r.l2) << " +- " << num(r.l2_se) << "\n";
    }
    w.close();
    return 0;
}

inline int cmd_kernel(const RunConfig& cfg, std::ostream& out) {
    const int d = static_cast<int>(cfg.integer("d"));
    const double t = time_from(cfg, false);
    auto masses = masses_from(cfg);
    if (std::find(masses.begin(), masses.end(), 0.0) == masses.end()) masses.push_back(0.0);
    const double lo = cfg.real("r-min");
    const double hi = cfg.real("r-max");
    const auto n = cfg.integer("r-n");
    if (!(lo > 0.0 && hi > lo) || n < 2) throw UsageError("field 'r-min'/'r-max'/'r-n': need 0 < r-min < r-max, r-n >= 2");
    CsvWriter w(cfg, out);
    w.row({"r", "t", "m", "kernel"});
    for (double m : masses) {
        for (long long i = 0; i < n; ++i) {
            const double r = lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
            w.row({num(r), num(t), num(m), num(kernel(r, t, m, d))});
        }
    }
    w.close();
    return 0;
}

template <int D>
int cmd_sample(const RunConfig& cfg, std::ostream& out) {
    const double t = time_from(cfg, false);
    const double m = cfg.real("m");
    const auto seed = static_cast<std::uint64_t>(cfg.integer("seed"));
    Philox rng(seed, stream_id(0x53414d50, 0));
    CsvWriter w(cfg, out);
    if (cfg.text("process") == "jump") {
        const double eps = cfg.real("eps");
        const auto path = sample_path<D>(LevyConfig{D, m, eps}, t, rng);
        w.comment("m=" + num(m));
        w.comment("eps=" + num(eps));
        w.comment("t_max=" + num(t));
        w.comment("seed=" + std::to_string(seed));
        std::vector<std::string> head{"s"};
        for (int i = 1; i <= D; ++i) head.push_back("dx_" + std::to_string(i));
        w.row(head);
        for (const auto& j : path.jumps) {
            std::vector<std::string> r{num(j.time)};
            for (int i = 0; i < D; ++i) r.push_back(num(j.delta[i]));
            w.row(r);
        }
        out << path.jumps.size() << " jumps\n";
    } else {
        const double eps_t = cfg.real("eps-t");
        const auto path = sample_sub_path(t, eps_t, m, rng);
        w.comment("m=" + num(m));
        w.comment("eps=" + num(eps_t));
        w.comment("t_max=" + num(t));
        w.comment("seed=" + std::to_string(seed));
        w.comment("drift=" + num(path.drift));
        w.row({"s", "dx_1"});
        for (const auto& j : path.jumps) w.row({num(j.time), num(j.size)});
        out << path.jumps.size() << " jumps\n";
    }
    w.close();
    return 0;
}

struct Check {
    std::string suite;
    std::string name;
    double value;
    double expected;
    double tolerance;
    bool pass;
};

inline std::vector<Check> run_validation(const std::string& suite, std::uint64_t seed, unsigned workers) {
    std::vector<Check> out;
    auto want = [&](const char* s) { return suite == "all" || suite == s; };
    auto close = [&](const char* s, std::string name, double v, double e, double tol) {
        out.push_back({s, std::move(name), v, e, tol, std::abs(v - e) <= tol * std::max(1.0, std::abs(e))});
    };
    auto holds = [&](const char* s, std::string name, bool ok) { out.push_back({s, std::move(name), ok ? 1.0 : 0.0, 1.0, 0.0, ok}); };
    const double pi = std::numbers::pi;
    if (want("specfun")) {
        close("specfun", "K_1/2(1)", bessel_k(BesselOrder::from_twice(1), 1.0), std::sqrt(pi / 2) * std::exp(-1.0), 1e-14);
        close("specfun", "K_3/2(1)", bessel_k(BesselOrder::from_twice(3), 1.0), 2 * std::sqrt(pi / 2) * std::exp(-1.0), 1e-14);
        const double x = 0.7;
        close("specfun", "K_2 recurrence", bessel_k(BesselOrder::from_twice(4), x),
              bessel_k(BesselOrder::from_twice(0), x) + 2.0 / x * bessel_k(BesselOrder::from_twice(2), x), 1e-12);
        close("specfun", "erfc(1)", relfk::erfc(1.0), 0.15729920705028513, 1e-14);
    }
    if (want("kernel")) {
        for (double m : {0.0, 0.5, 1.0}) {
            quad::Tolerance tol;
            tol.rel = 1e-10;
            auto f = [&](double th) {
                const double c = std::cos(th);
                return 2.0 * kernel(std::tan(th), 1.0, m, 1) / (c * c);
            };
            close("kernel", "int k_0^m(y,1) dy, m=" + num(m), quad::integrate(f, 0.0, pi / 2, tol).value, 1.0, 1e-6);
        }
        bool mono = true;
        double prev = 0.0;
        // k_0^m itself cannot increase pointwise (unit mass for every m); e^{-mt} k_0^m does.
        for (double r : {1e-3, 0.5, 1.0, 3.0}) {
            prev = 0.0;
            for (double m : {2.0, 1.0, 0.5, 0.25, 0.0}) {
                const double k = std::exp(-m) * kernel(r, 1.0, m, 1);
                mono = mono && k > prev;
                prev = k;
            }
        }
        holds("kernel", "e^{-mt} k_0^m(y,t) increasing as m decreases", mono);
    }
    if (want("levy")) {
        close("levy", "n^0(1), d=1", levy_density(1.0, 0.0, 1), 1.0 / pi, 1e-14);
        close("levy", "tail_mass(1,0,1)", tail_mass(1.0, 0.0, 1), 2.0 / pi, 1e-14);
        holds("levy", "n^1 < n^0", levy_density(1.0, 1.0, 1) < levy_density(1.0, 0.0, 1));
    }
    if (want("subordinator")) {
        quad::Tolerance tol;
        tol.rel = 1e-10;
        auto f = [&](double s) {
            const double r = std::exp(s);
            return ig_density(r, 1.0, 1.0) * r;
        };
        close("subordinator", "int ig_density, m=1", quad::integrate(f, -40.0, 8.0, tol).value, 1.0, 1e-8);
        const auto z = levy_exponent(1.0, 0.0);
        close("subordinator", "Re zeta_0(1)", z.real(), 1.0, 1e-14);
        close("subordinator", "Im zeta_0(1)", z.imag(), -1.0, 1e-14);
    }
    if (want("coupling")) {
        for (double m : {0.5, 1.0, 2.0}) {
            close("coupling", "tail transport rho=1 m=" + num(m), tail_mass(ell(1.0, m, 1), 0.0, 1), tail_mass(1.0, m, 1), 1e-8);
        }
        close("coupling", "psi(psi_inv(1))", psi(psi_inv(1.0, 1.0), 1.0), 1.0, 1e-12);
    }
    if (want("estimator")) {
        auto g = [](const Point<1>& y) { return std::exp(-y[0] * y[0]); };
        const double anchor = std::exp(1.0) * std::erfc(1.0);
        close("estimator", "free_oracle anchor", free_oracle<1>(Point<1>{0.0}, 1.0, 0.0, g), anchor, 1e-9);
        ParamMap p{{"g.family", "gaussian"}};
        const auto fields = make_fields<1>(p);
        const auto payoff = make_payoff<1>(p);
        Knobs k;
        k.seed = seed;
        k.workers = workers;
        const auto e = estimate_semigroup<1>(1, Point<1>{0.0}, 1.0, 0.0, fields, payoff, 20000, k);
        out.push_back({"estimator", "free estimate within 4 SE", e.mean.real(), anchor, 4.0 * e.stderr,
                       std::abs(e.mean.real() - anchor) <= 4.0 * e.stderr});
    }
    return out;
}

inline int cmd_validate(const RunConfig& cfg, std::ostream& out) {
    const auto w = cfg.integer("workers");
    const auto checks = run_validation(cfg.text("suite"), static_cast<std::uint64_t>(cfg.integer("seed")),
                                       w > 0 ? static_cast<unsigned>(w) : 1u);
    CsvWriter csv(cfg, out);
    csv.row({"suite", "check", "value", "expected", "tolerance", "pass"});
    bool all = true;
    for (const auto& c : checks) {
        csv.row({c.suite, "\"" + c.name + "\"", num(c.value), num(c.expected), num(c.tolerance), c.pass ? "1" : "0"});
        out << (c.pass ? "PASS " : "FAIL ") << c.suite << ": " << c.name << "  value " << num(c.value) << "\n";
        all = all && c.pass;
    }
    csv.close();
    return all ? 0 : 1;
}

template <int D>
int dispatch_d(const RunConfig& cfg, std::ostream& out) {
    const auto& s = cfg.subcommand();
    if (s == "estimate") return cmd_estimate<D>(cfg, out);
    if (s == "converge") return cmd_converge<D>(cfg, out);
    if (s == "l2") return cmd_l2<D>(cfg, out);
    if (s == "sample") return cmd_sample<D>(cfg, out);
    throw UsageError("unknown subcommand '" + s + "'");
}

inline int execute(const RunConfig& cfg, std::ostream& out) {
    if (cfg.subcommand() == "validate") return cmd_validate(cfg, out);
    if (cfg.subcommand() == "kernel") return cmd_kernel(cfg, out);
    switch (cfg.integer("d")) {
        case 1: return dispatch_d<1>(cfg, out);
        case 2: return dispatch_d<2>(cfg, out);
        default: return dispatch_d<3>(cfg, out);
    }
}

/// Exit status: 0 success, 1 validation or run failure, 2 usage error.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Monte Carlo semigroups of magnetic relativistic Schroedinger operators", "relfk"};
    app.require_subcommand(1);
    app.set_help_flag("-h,--help", "print this help");
    app.set_version_flag("--version", kVersion);
    std::map<std::string, std::map<std::string, std::string>> flags;
    std::map<std::string, std::string> config_path;
    for (const auto& name : subcommand_names()) {
        auto* sub = app.add_subcommand(name, subcommand_help(name));
        sub->set_help_flag("--help", "print this help");
        sub->add_option("--config", config_path[name], "flat key=value file; flags override it");
        for (const auto& k : schema()) {
            if (!applies(k, name)) continue;
            auto* opt = sub->add_option_function<std::string>(
                "--" + k.name, [&flags, name, key = k.name](const std::string& v) { flags[name][key] = v; },
                k.help + " [" + k.fallback + "]");
            (void)opt;
        }
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion& e) {
        out << kVersion << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    }
    std::string sub;
    for (const auto* s : app.get_subcommands()) sub = s->get_name();
    try {
        std::map<std::string, std::string> file;
        if (!config_path[sub].empty()) file = read_config_file(config_path[sub]);
        const auto cfg = resolve(sub, file, flags[sub]);
        return execute(cfg, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace relfk::cli
