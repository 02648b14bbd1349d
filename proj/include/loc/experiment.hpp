// experiment.hpp
//
// Curve files, the key = value experiment config, sweep execution and the
// report writers behind the `loc` command line tool.
#pragma once

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "loc/calibration.hpp"
#include "loc/core.hpp"
#include "loc/simulator.hpp"

namespace loc::experiment {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Text helpers

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::optional<double> parse_number(std::string_view s) {
    const std::string t = trim(s);
    if (t.empty()) return std::nullopt;
    double v = 0.0;
    const char* first = t.data();
    if (*first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

/// Shortest representation that reads back to the same double.
inline std::string format_number(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Curve files
//
//   size,score            one source, one knot per line
//   size1,size2,score     two sources, rows covering a complete grid
//
// Blank lines and lines starting with '#' are skipped.

inline simulator::Oracle parse_curve(std::string_view text) {
    std::vector<std::pair<std::size_t, std::string>> lines;
    std::size_t no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        ++no;
        const std::string line = trim(raw);
        if (!line.empty() && line[0] != '#') lines.emplace_back(no, line);
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    if (lines.empty()) throw ParseError("curve file is empty", 0);
    std::vector<std::string> header = split(lines[0].second, ',');
    for (auto& h : header) std::transform(h.begin(), h.end(), h.begin(), [](unsigned char c) { return std::tolower(c); });

    auto row_values = [&](std::size_t i, std::size_t width) {
        const auto cells = split(lines[i].second, ',');
        if (cells.size() != width)
            throw ParseError("expected " + std::to_string(width) + " fields, found " + std::to_string(cells.size()),
                             lines[i].first);
        std::vector<double> out;
        for (const auto& c : cells) {
            auto v = parse_number(c);
            if (!v) throw ParseError("not a number: '" + c + "'", lines[i].first);
            out.push_back(*v);
        }
        return out;
    };

    if (header == std::vector<std::string>{"size", "score"}) {
        std::vector<std::pair<double, double>> knots;
        std::map<double, std::size_t> seen;
        for (std::size_t i = 1; i < lines.size(); ++i) {
            const auto v = row_values(i, 2);
            if (v[0] <= 0.0) throw ParseError("sizes must be positive", lines[i].first);
            if (auto it = seen.find(v[0]); it != seen.end())
                throw DuplicateSize("duplicate size " + format_number(v[0]) + " (first on line " +
                                        std::to_string(it->second) + ")",
                                    lines[i].first);
            seen.emplace(v[0], lines[i].first);
            knots.emplace_back(v[0], v[1]);
        }
        if (knots.empty()) throw ParseError("curve file has no knots", lines[0].first);
        std::stable_sort(knots.begin(), knots.end());
        std::vector<double> q, s;
        for (std::size_t i = 0; i < knots.size(); ++i) {
            if (i && knots[i].second < knots[i - 1].second)
                throw ParseError("scores must be non-decreasing in size (at size " + format_number(knots[i].first) + ")",
                                 seen[knots[i].first]);
            q.push_back(knots[i].first);
            s.push_back(knots[i].second);
        }
        return simulator::GroundTruthCurve1D(std::move(q), std::move(s));
    }

    if (header == std::vector<std::string>{"size1", "size2", "score"}) {
        std::map<std::pair<double, double>, std::pair<double, std::size_t>> cells;
        std::set<double> xs, ys;
        for (std::size_t i = 1; i < lines.size(); ++i) {
            const auto v = row_values(i, 3);
            if (v[0] < 0.0 || v[1] < 0.0) throw ParseError("sizes must be non-negative", lines[i].first);
            const auto key = std::make_pair(v[0], v[1]);
            if (auto it = cells.find(key); it != cells.end())
                throw DuplicateSize("duplicate grid point (" + format_number(v[0]) + ", " + format_number(v[1]) +
                                        ") (first on line " + std::to_string(it->second.second) + ")",
                                    lines[i].first);
            cells.emplace(key, std::make_pair(v[2], lines[i].first));
            xs.insert(v[0]);
            ys.insert(v[1]);
        }
        std::string missing;
        std::size_t missing_count = 0;
        for (double x : xs)
            for (double y : ys)
                if (!cells.count({x, y})) {
                    if (missing_count++ < 20) missing += " (" + format_number(x) + ", " + format_number(y) + ")";
                }
        if (missing_count)
            throw IncompleteGrid("grid is missing " + std::to_string(missing_count) + " point(s):" + missing +
                                     (missing_count > 20 ? " ..." : ""),
                                 0);
        std::vector<double> gx(xs.begin(), xs.end()), gy(ys.begin(), ys.end());
        std::vector<std::vector<double>> v(gx.size(), std::vector<double>(gy.size()));
        for (std::size_t i = 0; i < gx.size(); ++i)
            for (std::size_t j = 0; j < gy.size(); ++j) v[i][j] = cells.at({gx[i], gy[j]}).first;
        return simulator::GroundTruthSurface2D(std::move(gx), std::move(gy), std::move(v));
    }
    throw ParseError("unknown header '" + lines[0].second + "' (expected size,score or size1,size2,score)",
                     lines[0].first);
}

inline simulator::Oracle load_curve_file(const fs::path& path) { return parse_curve(read_file(path)); }

enum class SynthKind { PowerLaw, Logarithmic };

/// Samples a power-law or logarithmic curve at `knots` log-spaced sizes on
/// [q_lo, q_hi] and writes it as a curve file.
inline std::string synth_curve_text(SynthKind kind, const std::vector<double>& theta, std::size_t knots, double q_lo,
                                    double q_hi) {
    require(theta.size() == 3, "synth_curve needs 3 parameters");
    require(knots >= 2, "synth_curve needs at least 2 knots");
    require(q_lo > 0.0 && q_hi > q_lo, "synth_curve needs 0 < q_lo < q_hi");
    const auto family = kind == SynthKind::PowerLaw ? curves::CurveFamily::power_law() : curves::CurveFamily::logarithmic();
    std::string out = "size,score\n";
    double prev = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < knots; ++i) {
        const double q = i + 1 == knots ? q_hi : q_lo * std::pow(q_hi / q_lo, static_cast<double>(i) / (knots - 1));
        double v;
        try {
            v = curves::eval_curve(family, theta, {q});
        } catch (const DomainError& e) {
            throw NonMonotoneGenerator(std::string("generator undefined on the range: ") + e.what());
        }
        if (v < prev) throw NonMonotoneGenerator("generator decreases at size " + format_number(q));
        prev = v;
        out += format_number(q) + "," + format_number(v) + "\n";
    }
    return out;
}

inline void synth_curve(SynthKind kind, const std::vector<double>& theta, std::size_t knots, double q_lo, double q_hi,
                        const fs::path& out) {
    write_file(out, synth_curve_text(kind, theta, knots, q_lo, q_hi));
}

// ---------------------------------------------------------------------------
// Experiment config (documented in the README)

struct ExperimentConfig {
    fs::path curve_file;
    std::vector<std::string> policies{"loc", "regression"};
    std::string family = "power";
    std::optional<double> corrected_tau;
    fs::path calibration_curve;
    std::vector<double> calibration_targets;
    double calibration_step = 0.25;
    std::vector<double> targets;
    std::vector<int> horizons{1, 3, 5};
    std::vector<Sizes> costs{{1.0}};
    std::vector<double> penalties{1e7};
    std::vector<std::uint64_t> seeds{0};
    std::optional<Sizes> q0;
    double q0_fraction = 0.1;
    std::size_t resamples = 500;
    density::CensorPolicy censor = density::CensorPolicy::CapAtBound;
    double cap_factor = 100.0;
    std::vector<double> bandwidths = simulator::default_bandwidths();
    std::vector<std::size_t> components{4, 5, 6, 7, 8, 9, 10};
    std::vector<planner::Method> methods{planner::Method::Momentum, planner::Method::Adam};
    std::vector<double> learning_rates = planner::default_learning_rates();
    int max_steps = 500;
    std::size_t subsample_count = 10;
    double noise_sigma = 0.0;
    double trim_percentile = 99.0;
    std::size_t workers = 1;
    std::uint64_t seed = 0;
    fs::path output_dir = "loc-out";
    /// Every key as written (after trimming), in file order, for the report echo.
    std::vector<std::pair<std::string, std::string>> echo;

    std::size_t sources() const { return costs.empty() ? 1 : costs.front().size(); }
};

namespace detail {

inline double to_double(const std::string& key, const std::string& v) {
    auto x = parse_number(v);
    if (!x) throw ConfigError(key + ": not a number: '" + v + "'");
    return *x;
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v) {
    const std::string t = trim(v);
    std::uint64_t x = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size())
        throw ConfigError(key + ": not a non-negative integer: '" + v + "'");
    return x;
}

inline std::vector<double> to_doubles(const std::string& key, const std::string& v) {
    std::vector<double> out;
    for (const auto& item : split(v, ',')) out.push_back(to_double(key, item));
    return out;
}

inline Sizes to_vector(const std::string& key, const std::string& v) {
    Sizes out;
    for (const auto& item : split(v, ':')) out.push_back(to_double(key, item));
    return out;
}

}  // namespace detail

/// Parses `key = value` lines; '#' starts a comment, lists are comma
/// separated and per-source vectors use ':' (costs = 1:2, 1:1).
/// Relative paths are resolved against `base_dir`.
inline ExperimentConfig parse_config(std::string_view text, const fs::path& base_dir = ".") {
    ExperimentConfig cfg;
    std::map<std::string, std::string> kv;
    std::size_t no = 0, pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string line(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
        ++no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (!line.empty()) {
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw ConfigError("line " + std::to_string(no) + ": expected key = value");
            const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
            if (key.empty()) throw ConfigError("line " + std::to_string(no) + ": empty key");
            if (kv.count(key)) throw ConfigError("line " + std::to_string(no) + ": duplicate key '" + key + "'");
            kv[key] = value;
            cfg.echo.emplace_back(key, value);
        }
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }

    auto path_of = [&](const std::string& v) {
        fs::path p(v);
        return p.is_absolute() ? p : base_dir / p;
    };
    std::optional<double> t_min, t_max, t_step;
    for (const auto& [key, v] : kv) {
        using namespace detail;
        if (key == "curve_file") cfg.curve_file = path_of(v);
        else if (key == "policies") cfg.policies = split(v, ',');
        else if (key == "family") cfg.family = v;
        else if (key == "corrected.tau") cfg.corrected_tau = to_double(key, v);
        else if (key == "corrected.calibration_curve") cfg.calibration_curve = path_of(v);
        else if (key == "corrected.calibration_targets") cfg.calibration_targets = to_doubles(key, v);
        else if (key == "corrected.calibration_step") cfg.calibration_step = to_double(key, v);
        else if (key == "targets") cfg.targets = to_doubles(key, v);
        else if (key == "targets.min") t_min = to_double(key, v);
        else if (key == "targets.max") t_max = to_double(key, v);
        else if (key == "targets.step") t_step = to_double(key, v);
        else if (key == "horizons") {
            cfg.horizons.clear();
            for (const auto& item : split(v, ',')) cfg.horizons.push_back(static_cast<int>(to_uint(key, item)));
        } else if (key == "costs") {
            cfg.costs.clear();
            for (const auto& item : split(v, ',')) cfg.costs.push_back(to_vector(key, item));
        } else if (key == "penalties") cfg.penalties = to_doubles(key, v);
        else if (key == "seeds") {
            cfg.seeds.clear();
            for (const auto& item : split(v, ',')) cfg.seeds.push_back(to_uint(key, item));
        } else if (key == "q0") cfg.q0 = to_vector(key, v);
        else if (key == "q0.fraction") cfg.q0_fraction = to_double(key, v);
        else if (key == "bootstrap.resamples") cfg.resamples = to_uint(key, v);
        else if (key == "bootstrap.censor") {
            if (v == "cap") cfg.censor = density::CensorPolicy::CapAtBound;
            else if (v == "drop") cfg.censor = density::CensorPolicy::Drop;
            else throw ConfigError("bootstrap.censor: expected cap or drop");
        } else if (key == "bootstrap.cap_factor") cfg.cap_factor = to_double(key, v);
        else if (key == "kde.bandwidths") cfg.bandwidths = to_doubles(key, v);
        else if (key == "gmm.components") {
            cfg.components.clear();
            for (const auto& item : split(v, ',')) cfg.components.push_back(to_uint(key, item));
        } else if (key == "solver.methods") {
            cfg.methods.clear();
            for (const auto& item : split(v, ',')) {
                if (item == "momentum") cfg.methods.push_back(planner::Method::Momentum);
                else if (item == "adam") cfg.methods.push_back(planner::Method::Adam);
                else throw ConfigError("solver.methods: unknown method '" + item + "'");
            }
        } else if (key == "solver.learning_rates") cfg.learning_rates = to_doubles(key, v);
        else if (key == "solver.max_steps") cfg.max_steps = static_cast<int>(to_uint(key, v));
        else if (key == "subsample.count") cfg.subsample_count = to_uint(key, v);
        else if (key == "noise.sigma") cfg.noise_sigma = to_double(key, v);
        else if (key == "trim_percentile") cfg.trim_percentile = to_double(key, v);
        else if (key == "workers") cfg.workers = to_uint(key, v);
        else if (key == "seed") cfg.seed = to_uint(key, v);
        else if (key == "output.dir") cfg.output_dir = path_of(v);
        else throw ConfigError("unknown key '" + key + "'");
    }
    if (t_min || t_max || t_step) {
        if (!cfg.targets.empty()) throw ConfigError("give either targets or targets.min/max/step, not both");
        if (!t_min || !t_max || !t_step) throw ConfigError("targets.min, targets.max and targets.step go together");
        if (!(*t_step > 0.0) || *t_max < *t_min) throw ConfigError("targets sweep needs step > 0 and max >= min");
        const auto n = static_cast<std::size_t>(std::floor((*t_max - *t_min) / *t_step + 1e-9));
        for (std::size_t i = 0; i <= n; ++i) cfg.targets.push_back(*t_min + static_cast<double>(i) * *t_step);
    }
    if (const char* env = std::getenv("LOC_WORKERS"); env && *env) cfg.workers = detail::to_uint("LOC_WORKERS", env);
    return cfg;
}

inline ExperimentConfig load_config(const fs::path& path) {
    return parse_config(read_file(path), path.has_parent_path() ? path.parent_path() : fs::path("."));
}

/// Checks every setting; throws ConfigError naming the first problem.
inline void validate_config(const ExperimentConfig& cfg) {
    auto check = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError(msg);
    };
    check(!cfg.curve_file.empty(), "curve_file is required");
    check(!cfg.policies.empty(), "policies must not be empty");
    for (const auto& p : cfg.policies) {
        check(p == "loc" || p == "regression" || p == "corrected", "unknown policy '" + p + "'");
        if (p == "corrected") {
            check(cfg.corrected_tau.has_value() != !cfg.calibration_curve.empty(),
                  "corrected policy needs exactly one of corrected.tau or corrected.calibration_curve");
            if (cfg.corrected_tau) check(*cfg.corrected_tau >= 0.0, "corrected.tau must be >= 0");
            if (!cfg.calibration_curve.empty())
                check(!cfg.calibration_targets.empty(), "corrected.calibration_targets is required");
            check(cfg.calibration_step > 0.0, "corrected.calibration_step must be > 0");
        }
    }
    std::set<std::string> unique(cfg.policies.begin(), cfg.policies.end());
    check(unique.size() == cfg.policies.size(), "policies must not repeat");
    check(cfg.family == "power" || cfg.family == "log" || cfg.family == "arctan" || cfg.family == "algebraic" ||
              cfg.family == "additive",
          "unknown family '" + cfg.family + "'");
    check(!cfg.targets.empty(), "targets must not be empty");
    check(!cfg.horizons.empty(), "horizons must not be empty");
    for (int t : cfg.horizons) check(t >= 1, "horizons must be >= 1");
    check(!cfg.costs.empty(), "costs must not be empty");
    const std::size_t k = cfg.sources();
    check(k == 1 || k == 2, "costs must have one or two components");
    for (const auto& c : cfg.costs) {
        check(c.size() == k, "all cost vectors need the same number of components");
        for (double x : c) check(x > 0.0, "costs must be positive");
    }
    if (k == 1) check(cfg.family != "additive", "the additive family needs two sources");
    else check(cfg.family == "additive", "two sources need the additive family");
    check(!cfg.penalties.empty(), "penalties must not be empty");
    for (double p : cfg.penalties) check(p > 0.0, "penalties must be positive");
    check(!cfg.seeds.empty(), "seeds must not be empty");
    if (cfg.q0) {
        check(cfg.q0->size() == k, "q0 must have one component per source");
        for (double x : *cfg.q0) check(x > 0.0, "q0 must be positive");
    } else {
        check(cfg.q0_fraction > 0.0 && cfg.q0_fraction <= 1.0, "q0.fraction must lie in (0, 1]");
    }
    check(cfg.resamples >= 2, "bootstrap.resamples must be >= 2");
    check(cfg.cap_factor > 0.0, "bootstrap.cap_factor must be > 0");
    check(!cfg.bandwidths.empty(), "kde.bandwidths must not be empty");
    for (double h : cfg.bandwidths) check(h > 0.0, "kde.bandwidths must be positive");
    check(!cfg.components.empty(), "gmm.components must not be empty");
    for (auto c : cfg.components) check(c >= 1 && c <= 10, "gmm.components must lie in [1, 10]");
    check(!cfg.methods.empty(), "solver.methods must not be empty");
    check(!cfg.learning_rates.empty(), "solver.learning_rates must not be empty");
    for (double lr : cfg.learning_rates) check(lr > 0.0, "solver.learning_rates must be positive");
    check(cfg.max_steps >= 1, "solver.max_steps must be >= 1");
    check(cfg.subsample_count >= 1, "subsample.count must be >= 1");
    check(cfg.noise_sigma >= 0.0, "noise.sigma must be >= 0");
    check(cfg.trim_percentile >= 0.0 && cfg.trim_percentile <= 100.0, "trim_percentile must lie in [0, 100]");
    check(cfg.workers >= 1, "workers must be >= 1");
}

/// Initial amount: q0 if given, otherwise q0.fraction of the oracle's largest size per source.
inline Sizes initial_amount(const ExperimentConfig& cfg, const simulator::Oracle& oracle) {
    if (cfg.q0) return *cfg.q0;
    if (const auto* c = std::get_if<simulator::GroundTruthCurve1D>(&oracle))
        return {std::ceil(cfg.q0_fraction * c->sizes().back())};
    const auto& s = std::get<simulator::GroundTruthSurface2D>(oracle);
    return {std::ceil(cfg.q0_fraction * s.grid_x().back()), std::ceil(cfg.q0_fraction * s.grid_y().back())};
}

inline simulator::LocSettings loc_settings(const ExperimentConfig& cfg) {
    simulator::LocSettings s;
    s.resamples = cfg.resamples;
    s.censor = cfg.censor;
    s.bandwidths = cfg.bandwidths;
    s.components = cfg.components;
    s.solver.grid = planner::make_grid(cfg.methods, cfg.learning_rates);
    s.solver.max_steps = cfg.max_steps;
    return s;
}

// ---------------------------------------------------------------------------
// Sweep

struct SweepRow {
    std::string policy;
    double target = 0.0;
    int horizon = 1;
    Sizes costs;
    double penalty = 0.0;
    std::uint64_t seed = 0;
    simulator::RunRecord record;
};

struct ExperimentResult {
    std::vector<SweepRow> rows;
    std::string runs_csv;
    std::string aggregate_csv;
    std::string summary_json;
    std::map<int, double> calibrated_tau;  // per horizon, when calibrated
};

inline std::string runs_csv(const std::vector<SweepRow>& rows, std::size_t k) {
    auto vec_cols = [&](const std::string& name) {
        std::string s;
        for (std::size_t i = 1; i <= k; ++i) s += "," + name + "_" + std::to_string(i);
        return s;
    };
    std::string out = "policy,target,horizon" + vec_cols("cost") + ",penalty,seed,status,met_target,terminated_round" +
                      vec_cols("q0") + vec_cols("q_T") + vec_cols("d_star") + ",total_paid,cost_ratio,points_ratio\n";
    auto vec = [&](const std::optional<Sizes>& v) {
        std::string s;
        for (std::size_t i = 0; i < k; ++i) s += "," + (v ? format_number((*v)[i]) : std::string());
        return s;
    };
    auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
    for (const auto& r : rows) {
        const auto& rec = r.record;
        out += r.policy + "," + format_number(r.target) + "," + std::to_string(r.horizon) + vec(r.costs) + "," +
               format_number(r.penalty) + "," + std::to_string(r.seed) + "," +
               (rec.status == simulator::RunStatus::Completed ? "completed" : "policy_failure") + "," +
               (rec.met_target ? "1" : "0") + "," + std::to_string(rec.terminated_round) + vec(rec.spec.q0) +
               vec(rec.final_amount) + vec(rec.d_star) + "," + format_number(rec.total_paid) + "," +
               opt(simulator::cost_ratio(rec)) + "," + opt(simulator::points_ratio(rec)) + "\n";
    }
    return out;
}

/// Runs the full cross product policy x target x horizon x costs x penalty x
/// seed. Cells run on `workers` threads; rows come out in cell order, so the
/// reports do not depend on the worker count. Writes runs.csv,
/// aggregate.csv and summary.json into the output directory when `write`.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, bool write = true) {
    validate_config(cfg);
    const auto oracle = load_curve_file(cfg.curve_file);
    const std::size_t k = cfg.sources();
    if (simulator::oracle_dimension(oracle) != k)
        throw ConfigError("curve file dimension does not match the number of cost components");
    const Sizes q0 = initial_amount(cfg, oracle);
    const auto family = curves::CurveFamily::from_name(cfg.family, k);

    ExperimentResult result;
    simulator::SimulationConfig sim;
    sim.subsample_count = cfg.subsample_count;
    sim.noise_sigma = cfg.noise_sigma;
    sim.cap_factor = cfg.cap_factor;

    // Corrected-policy offsets, fixed before any run.
    std::map<int, double> tau;
    const bool corrected = std::find(cfg.policies.begin(), cfg.policies.end(), "corrected") != cfg.policies.end();
    if (corrected) {
        if (cfg.corrected_tau) {
            for (int t : cfg.horizons) tau[t] = *cfg.corrected_tau;
        } else {
            const auto cal_oracle = load_curve_file(cfg.calibration_curve);
            if (simulator::oracle_dimension(cal_oracle) != k)
                throw ConfigError("calibration curve dimension does not match the costs");
            for (int t : cfg.horizons) {
                planner::ProblemSpec tmpl;
                tmpl.costs = cfg.costs.front();
                tmpl.penalty = cfg.penalties.front();
                tmpl.horizon = t;
                tmpl.q0 = initial_amount(cfg, cal_oracle);
                baselines::CalibrationSetup setup;
                setup.step = cfg.calibration_step;
                setup.seed = derive_seed(cfg.seed, "calibration");
                setup.sim = sim;
                setup.oracle_name = cfg.calibration_curve.filename().string();
                try {
                    tau[t] = baselines::calibrate_tau(cal_oracle, family, cfg.calibration_targets, tmpl, setup).tau;
                } catch (const CalibrationImpossible& e) {
                    throw ConfigError(std::string("calibration failed: ") + e.what());
                }
            }
            result.calibrated_tau = tau;
        }
    }

    const auto loc = loc_settings(cfg);
    for (const auto& policy : cfg.policies)
        for (double target : cfg.targets)
            for (int horizon : cfg.horizons)
                for (const auto& c : cfg.costs)
                    for (double penalty : cfg.penalties)
                        for (auto seed : cfg.seeds) {
                            SweepRow row;
                            row.policy = policy;
                            row.target = target;
                            row.horizon = horizon;
                            row.costs = c;
                            row.penalty = penalty;
                            row.seed = seed;
                            result.rows.push_back(std::move(row));
                        }

    parallel_for(result.rows.size(), cfg.workers, [&](std::size_t i) {
        auto& row = result.rows[i];
        planner::ProblemSpec spec;
        spec.target = row.target;
        spec.costs = row.costs;
        spec.penalty = row.penalty;
        spec.horizon = row.horizon;
        spec.q0 = q0;
        simulator::Policy policy;
        if (row.policy == "loc") policy = simulator::Policy::loc_policy(family, loc);
        else if (row.policy == "regression") policy = simulator::Policy::regression(family);
        else policy = simulator::Policy::corrected(family, tau.at(row.horizon));
        // Every policy sees the same run seed for a given seed value.
        row.record = simulator::run_collection(spec, oracle, policy, derive_seed(cfg.seed, "run", row.seed), sim);
    });

    result.runs_csv = runs_csv(result.rows, k);

    nlohmann::ordered_json aggregates = nlohmann::ordered_json::array();
    std::string agg = "policy,horizon,runs,failures,failure_rate,cost_ratio,points_ratio,trimmed\n";
    for (const auto& policy : cfg.policies)
        for (int horizon : cfg.horizons) {
            std::vector<simulator::RunRecord> recs;
            for (const auto& r : result.rows)
                if (r.policy == policy && r.horizon == horizon) recs.push_back(r.record);
            const auto m = simulator::aggregate_metrics(recs, cfg.trim_percentile);
            const std::size_t failures = m.runs - m.successes;
            agg += policy + "," + std::to_string(horizon) + "," + std::to_string(m.runs) + "," +
                   std::to_string(failures) + "," + format_number(m.failure_rate) + "," +
                   (m.cost_ratio ? format_number(*m.cost_ratio) : "") + "," +
                   (m.points_ratio ? format_number(*m.points_ratio) : "") + "," + std::to_string(m.trimmed) + "\n";
            nlohmann::ordered_json a;
            a["policy"] = policy;
            a["horizon"] = horizon;
            a["runs"] = m.runs;
            a["failures"] = failures;
            a["failure_rate"] = m.failure_rate;
            a["cost_ratio"] = m.cost_ratio ? nlohmann::ordered_json(*m.cost_ratio) : nlohmann::ordered_json();
            a["points_ratio"] = m.points_ratio ? nlohmann::ordered_json(*m.points_ratio) : nlohmann::ordered_json();
            a["trimmed"] = m.trimmed;
            aggregates.push_back(a);
        }
    result.aggregate_csv = agg;

    nlohmann::ordered_json summary;
    summary["version"] = kVersion;
    nlohmann::ordered_json echo = nlohmann::ordered_json::object();
    for (const auto& [key, value] : cfg.echo) echo[key] = value;
    summary["config"] = echo;
    summary["q0"] = q0;
    summary["runs"] = result.rows.size();
    std::size_t policy_failures = 0;
    for (const auto& r : result.rows) policy_failures += r.record.status == simulator::RunStatus::PolicyFailure;
    summary["policy_failures"] = policy_failures;
    if (!result.calibrated_tau.empty()) {
        nlohmann::ordered_json t = nlohmann::ordered_json::object();
        for (const auto& [h, v] : result.calibrated_tau) t[std::to_string(h)] = v;
        summary["calibrated_tau"] = t;
    }
    summary["aggregate"] = aggregates;
    result.summary_json = summary.dump(2) + "\n";

    if (write) {
        std::error_code ec;
        fs::create_directories(cfg.output_dir, ec);
        if (ec) throw IoError("cannot create " + cfg.output_dir.string() + ": " + ec.message());
        write_file(cfg.output_dir / "runs.csv", result.runs_csv);
        write_file(cfg.output_dir / "aggregate.csv", result.aggregate_csv);
        write_file(cfg.output_dir / "summary.json", result.summary_json);
    }
    return result;
}

}  // namespace loc::experiment
