#include "clqg/config.hpp"

#include "clqg/hash.hpp"
#include "clqg/records.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace clqg {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(v);
    while (std::getline(is, cur, ',')) {
        cur = trim(cur);
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

[[noreturn]] void bad(const std::string& key, const std::string& why) { throw ConfigError(key + ": " + why); }

double to_double(const std::string& key, const std::string& v) {
    double d = 0.0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), d);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size() || !std::isfinite(d))
        bad(key, "expected a real number, got '" + v + "'");
    return d;
}

long to_long(const std::string& key, const std::string& v) {
    long d = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), d);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) bad(key, "expected an integer, got '" + v + "'");
    return d;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t d = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), d);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) bad(key, "expected an unsigned integer, got '" + v + "'");
    return d;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    bad(key, "expected true or false, got '" + v + "'");
}

std::string fmt(double v) { return format_double(v); }

template <typename T, typename F>
std::string join(const std::vector<T>& v, F f) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + f(v[i]);
    return s;
}

std::vector<double> to_doubles(const std::string& key, const std::string& v) {
    std::vector<double> out;
    for (const auto& s : split_list(v)) out.push_back(to_double(key, s));
    return out;
}

struct Binding {
    ConfigKey doc;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

#define CLQG_REAL(KEY, FIELD, HELP)                                                                  \
    Binding{{KEY, "real", fmt(ExperimentConfig{}.FIELD), HELP},                                       \
            [](ExperimentConfig& c, const std::string& v) { c.FIELD = to_double(KEY, v); },           \
            [](const ExperimentConfig& c) { return fmt(c.FIELD); }}
#define CLQG_INT(KEY, FIELD, HELP)                                                                   \
    Binding{{KEY, "integer", std::to_string(ExperimentConfig{}.FIELD), HELP},                         \
            [](ExperimentConfig& c, const std::string& v) {                                           \
                c.FIELD = static_cast<decltype(c.FIELD)>(to_long(KEY, v));                            \
            },                                                                                        \
            [](const ExperimentConfig& c) { return std::to_string(c.FIELD); }}
#define CLQG_BOOL(KEY, FIELD, HELP)                                                                  \
    Binding{{KEY, "bool", ExperimentConfig{}.FIELD ? "true" : "false", HELP},                         \
            [](ExperimentConfig& c, const std::string& v) { c.FIELD = to_bool(KEY, v); },             \
            [](const ExperimentConfig& c) { return std::string(c.FIELD ? "true" : "false"); }}
#define CLQG_STR(KEY, FIELD, HELP)                                                                   \
    Binding{{KEY, "string", ExperimentConfig{}.FIELD, HELP},                                          \
            [](ExperimentConfig& c, const std::string& v) { c.FIELD = v; },                           \
            [](const ExperimentConfig& c) { return c.FIELD; }}
#define CLQG_REALS(KEY, FIELD, HELP)                                                                 \
    Binding{{KEY, "real list", join(ExperimentConfig{}.FIELD, fmt), HELP},                            \
            [](ExperimentConfig& c, const std::string& v) { c.FIELD = to_doubles(KEY, v); },          \
            [](const ExperimentConfig& c) { return join(c.FIELD, fmt); }}
#define CLQG_STRS(KEY, FIELD, HELP)                                                                  \
    Binding{{KEY, "string list", join(ExperimentConfig{}.FIELD, [](const std::string& s) { return s; }), HELP}, \
            [](ExperimentConfig& c, const std::string& v) { c.FIELD = split_list(v); },               \
            [](const ExperimentConfig& c) { return join(c.FIELD, [](const std::string& s) { return s; }); }}

const std::vector<Binding>& bindings() {
    static const std::vector<Binding> b = {
        CLQG_STR("kernel.family", kernel, "mff, gff or fourier"),
        CLQG_REAL("kernel.mass", kernel_mass, "MFF / Fourier mass"),
        CLQG_REALS("kernel.domain", kernel_domain, "GFF rectangle x0,y0,x1,y1"),
        CLQG_INT("grid.nx", nx, "cells along x"),
        CLQG_INT("grid.ny", ny, "cells along y (0: square)"),
        CLQG_REAL("grid.x0", x0, "window origin x"),
        CLQG_REAL("grid.y0", y0, "window origin y"),
        CLQG_REAL("grid.dx", dx, "cell side (0: 1/nx)"),
        CLQG_BOOL("grid.periodic", periodic, "keep the embedding torus (MFF, Fourier)"),
        CLQG_INT("ladder.depth", depth, "J: scales eps_j = 2^-j, j = 0..J"),
        CLQG_INT("synth.padding", padding, "initial circulant padding factor"),
        CLQG_INT("synth.max_padding", max_padding, "largest padding factor tried"),
        CLQG_REAL("synth.clip_tolerance", clip_tolerance, "largest covariance error from eigenvalue clipping"),
        Binding{{"seed", "unsigned", "(required)", "master seed"},
                [](ExperimentConfig& c, const std::string& v) {
                    c.seed = to_u64("seed", v);
                    c.seed_set = true;
                },
                [](const ExperimentConfig& c) { return std::to_string(c.seed); }},
        CLQG_INT("replicas", replicas, "field replicas"),
        CLQG_INT("threads", threads, "worker threads (0: all cores)"),
        CLQG_STR("output", output, "output directory"),
        CLQG_STRS("stages", stages, "subset of field,measure,clock,lbm"),
        CLQG_STRS("estimators", estimators,
                  "subset of spectrum,envelope,modulus,resolvent,invariance,seneta_heyde,martingale"),
        CLQG_STRS("measure.kinds", measure_kinds, "subset of seneta_heyde,derivative,truncated"),
        CLQG_REAL("measure.beta", beta, "barrier beta"),
        CLQG_INT("measure.scale", scale, "scale index (-1: deepest)"),
        CLQG_REAL("path.dt", dt, "Brownian step (0: dx^2/4)"),
        CLQG_REAL("path.T", T, "Brownian horizon"),
        CLQG_REAL("path.horizon_cap", horizon_cap, "largest Brownian horizon after extension"),
        CLQG_REALS("path.start", start, "start point x,y (empty: window centre)"),
        CLQG_STR("clock.normalization", normalization, "exact or log_cutoff"),
        CLQG_BOOL("clock.escalate_beta", escalate_beta, "double beta while the barrier is violated"),
        CLQG_REAL("lbm.T", lbm_T, "Liouville horizon"),
        CLQG_INT("lbm.points", lbm_points, "output Liouville times"),
        CLQG_INT("lbm.trajectories", lbm_trajectories, "trajectories per field"),
        CLQG_REALS("spectrum.q", spectrum_q, "moment orders in (0,1)"),
        Binding{{"spectrum.levels", "integer list", "", "coarsening levels (empty: coarsest six)"},
                [](ExperimentConfig& c, const std::string& v) {
                    c.spectrum_levels.clear();
                    for (const auto& s : split_list(v))
                        c.spectrum_levels.push_back(static_cast<int>(to_long("spectrum.levels", s)));
                },
                [](const ExperimentConfig& c) {
                    return join(c.spectrum_levels, [](int k) { return std::to_string(k); });
                }},
        CLQG_REAL("envelope.chi", envelope_chi, "envelope exponent in (0,1/2)"),
        CLQG_INT("envelope.points", envelope_points, "sampled points"),
        CLQG_REALS("envelope.R", envelope_R, "envelope constants"),
        CLQG_REAL("modulus.gamma", modulus_gamma, "log-power exponent"),
        CLQG_INT("modulus.points", modulus_points, "sampled points"),
        CLQG_REALS("resolvent.lambda", resolvent_lambda, "rates"),
        CLQG_INT("resolvent.N", resolvent_N, "paths"),
        CLQG_REAL("invariance.t", invariance_t, "Liouville time"),
        CLQG_INT("invariance.N", invariance_N, "trajectories"),
        CLQG_INT("invariance.bootstrap", invariance_bootstrap, "bootstrap replicas"),
    };
    return b;
}

#undef CLQG_REAL
#undef CLQG_INT
#undef CLQG_BOOL
#undef CLQG_STR
#undef CLQG_REALS
#undef CLQG_STRS

const Binding* find_binding(const std::string& key) {
    for (const auto& b : bindings())
        if (b.doc.key == key) return &b;
    return nullptr;
}

bool is_pow2_depth_ok(long n, int J) {
    int L = 0;
    while ((1L << (L + 1)) <= n) ++L;
    return J <= L;
}

void check_subset(const std::string& key, const std::vector<std::string>& v, std::initializer_list<const char*> allowed) {
    for (const auto& s : v) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || s == a;
        if (!ok) bad(key, "unknown entry '" + s + "'");
    }
}

}  // namespace

KeyValues parse_key_values(std::string_view text) {
    KeyValues kv;
    std::istringstream is{std::string(text)};
    std::string line;
    int n = 0;
    while (std::getline(is, line)) {
        ++n;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(n) + ": expected key = value");
        const std::string key = trim(std::string_view(line).substr(0, eq));
        const std::string value = trim(std::string_view(line).substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(n) + ": empty key");
        if (kv.values.count(key))
            throw ConfigError(key + ": duplicate key (lines " + std::to_string(kv.lines[key]) + " and " +
                              std::to_string(n) + ")");
        kv.values[key] = value;
        kv.lines[key] = n;
    }
    return kv;
}

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    const Binding* b = find_binding(key);
    if (!b) throw ConfigError(key + ": unknown key");
    b->set(cfg, value);
}

ExperimentConfig config_from_key_values(const KeyValues& kv) {
    ExperimentConfig c;
    for (const auto& [k, v] : kv.values) {
        try {
            set_config_value(c, k, v);
        } catch (const ConfigError& e) {
            const auto it = kv.lines.find(k);
            throw ConfigError(std::string(e.what()) + (it != kv.lines.end() ? " (line " + std::to_string(it->second) + ")" : ""));
        }
    }
    return c;
}

ExperimentConfig parse_config(std::string_view text) { return config_from_key_values(parse_key_values(text)); }

ExperimentConfig load_config(const std::filesystem::path& file) {
    std::ifstream is(file);
    if (!is) throw ConfigError(file.string() + ": cannot open config file");
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str());
}

KernelSpec ExperimentConfig::kernel_spec() const {
    const KernelFamily f = kernel_family_from_string(kernel);
    switch (f) {
        case KernelFamily::MFF: return KernelSpec::mff(kernel_mass);
        case KernelFamily::FOURIER: return KernelSpec::fourier(kernel_mass);
        case KernelFamily::GFF_DIRICHLET:
            return KernelSpec::gff({kernel_domain[0], kernel_domain[1], kernel_domain[2], kernel_domain[3]});
    }
    throw ConfigError("kernel.family: unsupported family");
}

GridSpec ExperimentConfig::grid_spec() const {
    GridSpec g;
    g.nx = nx;
    g.ny = ny > 0 ? ny : nx;
    g.x0 = x0;
    g.y0 = y0;
    g.dx = dx > 0.0 ? dx : 1.0 / static_cast<double>(nx);
    if (kernel == "gff") {
        g.boundary = Boundary::OddReflection;
    } else {
        g.boundary = periodic ? Boundary::Periodic : Boundary::Hull;
    }
    return g;
}

ScaleLadder ExperimentConfig::ladder() const { return ScaleLadder::dyadic(depth); }

SynthesisOptions ExperimentConfig::synthesis_options() const {
    SynthesisOptions o;
    o.initial_padding = padding;
    o.max_padding = max_padding;
    o.clip_tolerance = clip_tolerance;
    o.periodic = periodic;
    return o;
}

ClockOptions ExperimentConfig::clock_options() const {
    ClockOptions o;
    o.beta = beta;
    o.escalate_beta = escalate_beta;
    o.normalization = normalization == "log_cutoff" ? ClockNormalization::LogCutoff : ClockNormalization::ExactVariance;
    return o;
}

double ExperimentConfig::path_dt() const {
    const double h = grid_spec().dx;
    return dt > 0.0 ? dt : 0.25 * h * h;
}

Point ExperimentConfig::start_point() const {
    if (!start.empty()) return {start[0], start[1]};
    const Rect e = grid_spec().extent();
    return {0.5 * (e.x0 + e.x1), 0.5 * (e.y0 + e.y1)};
}

void ExperimentConfig::validate() const {
    if (!seed_set) bad("seed", "a seed is required");
    try {
        kernel_family_from_string(kernel);
    } catch (const std::exception&) {
        bad("kernel.family", "unknown family '" + kernel + "'");
    }
    if (!(kernel_mass > 0.0)) bad("kernel.mass", "must be > 0");
    if (kernel_domain.size() != 4 || !(kernel_domain[2] > kernel_domain[0] && kernel_domain[3] > kernel_domain[1]))
        bad("kernel.domain", "expected x0,y0,x1,y1 with x1 > x0 and y1 > y0");
    if (nx < 2) bad("grid.nx", "must be >= 2");
    if (ny < 0 || ny == 1) bad("grid.ny", "must be 0 or >= 2");
    if (dx < 0.0) bad("grid.dx", "must be >= 0");
    if (depth < 1) bad("ladder.depth", "must be >= 1");
    if (!is_pow2_depth_ok(std::min(nx, ny > 0 ? ny : nx), depth))
        bad("ladder.depth", "J = " + std::to_string(depth) + " exceeds log2 of the grid size");
    if (padding < 1 || max_padding < padding) bad("synth.padding", "need 1 <= padding <= max_padding");
    if (!(clip_tolerance >= 0.0)) bad("synth.clip_tolerance", "must be >= 0");
    if (replicas < 1) bad("replicas", "must be >= 1");
    if (threads < 0) bad("threads", "must be >= 0");
    if (output.empty()) bad("output", "must not be empty");
    check_subset("stages", stages, {"field", "measure", "clock", "lbm"});
    check_subset("estimators", estimators,
                 {"spectrum", "envelope", "modulus", "resolvent", "invariance", "seneta_heyde", "martingale"});
    check_subset("measure.kinds", measure_kinds, {"seneta_heyde", "derivative", "truncated"});
    if (!(beta >= 0.0)) bad("measure.beta", "must be >= 0");
    if (scale < -1 || scale > depth) bad("measure.scale", "must be -1 or in [0, J]");
    const double h = grid_spec().dx;
    if (dt < 0.0) bad("path.dt", "must be >= 0");
    if (dt > h * h * (1.0 + 1e-12))
        bad("path.dt", "must be <= grid.dx^2 = " + format_double(h * h) + " so the path resolves the finest scale");
    if (!(T > 0.0)) bad("path.T", "must be > 0");
    if (!(horizon_cap >= T)) bad("path.horizon_cap", "must be >= path.T");
    if (!start.empty() && start.size() != 2) bad("path.start", "expected x,y");
    if (normalization != "exact" && normalization != "log_cutoff")
        bad("clock.normalization", "expected exact or log_cutoff");
    if (!(lbm_T >= 0.0)) bad("lbm.T", "must be >= 0");
    if (lbm_points < 1) bad("lbm.points", "must be >= 1");
    if (lbm_trajectories < 1) bad("lbm.trajectories", "must be >= 1");
    for (double q : spectrum_q)
        if (!(q > 0.0 && q < 1.0)) bad("spectrum.q", "values must lie in (0,1)");
    if (!(envelope_chi > 0.0 && envelope_chi < 0.5)) bad("envelope.chi", "must lie in (0, 1/2)");
    if (envelope_points < 1) bad("envelope.points", "must be >= 1");
    if (envelope_R.empty()) bad("envelope.R", "must not be empty");
    if (modulus_points < 1) bad("modulus.points", "must be >= 1");
    for (double l : resolvent_lambda)
        if (!(l > 0.0)) bad("resolvent.lambda", "rates must be > 0");
    if (resolvent_N < 2) bad("resolvent.N", "must be >= 2");
    if (!(invariance_t >= 0.0)) bad("invariance.t", "must be >= 0");
    if (invariance_N < 1) bad("invariance.N", "must be >= 1");
    if (invariance_bootstrap < 10) bad("invariance.bootstrap", "must be >= 10");
    if (kernel == "gff" && periodic) bad("grid.periodic", "not available for the Dirichlet GFF");
}

std::string canonical_config(const ExperimentConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> kv;
    for (const auto& b : bindings()) {
        // results do not depend on the thread count or the output location
        if (b.doc.key == "threads" || b.doc.key == "output") continue;
        kv.emplace_back(b.doc.key, b.get(cfg));
    }
    std::sort(kv.begin(), kv.end());
    std::string s;
    for (const auto& [k, v] : kv) s += k + "=" + v + "\n";
    return s;
}

std::string config_hash(const ExperimentConfig& cfg) { return hex64(fnv1a64(canonical_config(cfg))); }

const std::vector<ConfigKey>& config_schema() {
    static const std::vector<ConfigKey> docs = [] {
        std::vector<ConfigKey> d;
        for (const auto& b : bindings()) d.push_back(b.doc);
        return d;
    }();
    return docs;
}

}  // namespace clqg
